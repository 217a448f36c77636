//! Optimal transmit power for hard-deadline traffic over fading links.
//!
//! * [`stochastics`]: discrete distributions, channel models and the moments
//!   the closed forms are built from.
//! * [`policy`]: closed-form expected energy and the per-slot rate rules.
//! * [`dp_oracle`]: backward induction on a queue grid, used to check the
//!   closed forms.
//! * [`simulator`]: Monte Carlo runs for single links and TDMA networks.
//! * [`multihop`]: routing, independent-set scheduling, deadline assignment
//!   and per-link energy prediction.

pub mod dp_oracle;
pub mod error;
pub mod multihop;
pub mod policy;
pub mod simulator;
pub mod stochastics;

pub use error::{Error, Result};
pub use policy::{ArrivalMode, FrameState, RateRule};
pub use stochastics::{ChannelModel, DiscreteDistribution};
