//! Walker LEO downlink simulator: constellation geometry under the invariant
//! phase measure, Monte Carlo densification sweeps, and evaluation of the
//! finite-N converse bounds with a grid-verified annulus-block certificate.

pub mod bounds;
pub mod channel;
pub mod check;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod link;
pub mod montecarlo;
pub mod optimize;
pub mod phase;
pub mod rng;
pub mod stats;

pub use bounds::{BlockConstants, BoundReport, VerifyReport, VerifyStatus};
pub use channel::{ActivityPolicy, ChannelParams, FadingModel};
pub use error::{Error, Result};
pub use geometry::{Position3, SatelliteSlot, UserPosition, WalkerParams};
pub use link::{DropResult, LinkModel};
pub use montecarlo::{SweepConfig, SweepPointResult};
pub use phase::{FlowParams, PhaseState};
