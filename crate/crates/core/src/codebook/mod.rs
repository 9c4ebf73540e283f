//! Sector-sweeping codebook construction and evaluation.

mod design;
mod gbd;
mod grid;
mod sdr;

pub use design::{design_codebook, evaluate_codebook, point_targeting_codebook, Codebook, CodebookOptions, Codeword, EvalReport};
pub use gbd::{gbd_sector, lagrange_cut, GbdIterate, GbdOutcome, GbdState};
pub use grid::{build_grid, GridPoint, SectorGrid};
pub use sdr::{rank1_extract, solve_primal, PrimalSolve, SdrForms};
