//! The bare event engine: a ping-pong pair with a cancelled timeout.

use rlcsim::sim::{Engine, SimTime};

#[derive(Debug)]
enum Ev {
    Ping(u32),
    Pong(u32),
    Timeout,
}

fn main() {
    let mut eng = Engine::new();
    eng.schedule(Ev::Ping(0), SimTime::ZERO).unwrap();
    let timeout = eng.schedule(Ev::Timeout, SimTime::from_millis(50)).unwrap();
    eng.cancel(timeout);

    let summary = eng.run_until(SimTime::from_millis(100), |e, ev| {
        println!("{:>8.3} ms  {ev:?}", e.now().as_millis_f64());
        match ev {
            Ev::Ping(n) if n < 4 => {
                e.schedule_in(Ev::Pong(n), SimTime::from_millis(8));
            }
            Ev::Pong(n) => {
                e.schedule_in(Ev::Ping(n + 1), SimTime::from_millis(8));
            }
            _ => {}
        }
    });
    println!("{} events, clock {:?}, drained: {}", summary.events_fired, summary.clock, summary.exhausted);
}
