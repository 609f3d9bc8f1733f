pub mod app;
pub mod channel;
pub mod metrics;
pub mod packet;
pub mod queue;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod transport;
pub mod world;
