//! Distributed power control over K-user Gaussian interference channels.
//!
//! Each transmitter tries to meet an SINR target at minimum power. With
//! complete channel knowledge the unique operating point is the fixed point of
//! the best-response map (see [`game`]). Without it, every transmitter runs the
//! learning controller in [`agent`], which estimates its own channel-to-
//! interference-plus-noise ratio from the 1-bit ACK/NACK stream produced by
//! the link model in [`link`]. [`sim`] drives all agents packet by packet over
//! a channel realization generated by [`channel`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod game;
pub mod link;
pub mod rng;
pub mod sim;
pub mod units;

pub use agent::{AgentParams, AgentState};
pub use channel::{FadingModel, GainMatrix, Point, Topology};
pub use error::{Error, Result};
pub use game::{EquilibriumResult, FeasibilityReport, GameSpec};
pub use link::{CodingModel, Feedback};
pub use config::ScenarioConfig;
pub use sim::{ConvergenceMetrics, Mode, RunStats, Scenario, Trace, TraceRecord};
