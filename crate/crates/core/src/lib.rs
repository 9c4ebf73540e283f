//! Beamforming design and evaluation for an access point that serves
//! communication users while interrogating passive backscatter tags.
//!
//! The crate is organized around the pipeline used by the CLI and the tests:
//!
//! * [`params`] / [`channel`] / [`sinr`] — physical-layer model: array
//!   geometry, line-of-sight channels, link budget, and the tag / reader /
//!   user SINR expressions that every design is checked against.
//! * [`zf`] — zero-forcing beams with closed-form sensing/communication
//!   power allocation and an LP cross-check.
//! * [`joint`] — joint beam design by transmit-power minimization via a
//!   second-order cone program.
//! * [`solver`] — the conic problem interface (LP/SOCP/SDP with dual
//!   extraction) and an exact branch-and-bound binary LP used by the
//!   decomposition master.
//! * [`codebook`] — sector-sweeping codebook construction: polar grids,
//!   semidefinite relaxation, generalized Benders decomposition, rank-1
//!   extraction, and codebook evaluation.

pub mod channel;
pub mod codebook;
pub mod error;
pub mod joint;
pub mod params;
pub mod sinr;
pub mod solver;
pub mod units;
pub mod zf;

pub use channel::{los_channel, steering_vector, tag_user_channel, ChannelVector};
pub use error::Error;
pub use params::{PolarPosition, Scenario, SystemParams};
pub use sinr::{interrogation_success, sinr_reader, sinr_tag, sinr_user, BeamformingSolution};

/// Workspace-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
