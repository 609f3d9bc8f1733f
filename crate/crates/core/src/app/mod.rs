//! Traffic sources: open-loop VBR frames and closed-loop adaptive streaming.

pub mod abr;
pub mod has;
pub mod ladder;
pub mod player;
pub mod vbr;

pub use abr::{abr_con_decide, stall_prevention, AbrContext, AbrKind, AbrPolicy, Con, ConPlus, Fixed};
pub use has::{HasClient, SegmentRequest};
pub use ladder::{load_ladder, write_ladder, Ladder, LadderError, LadderLevel};
pub use player::{PlaybackLog, Player, PlayerConfig, PlayerPhase, SegmentRecord, StallRecord};
pub use vbr::{Frame, VbrSource, VbrSourceConfig};
