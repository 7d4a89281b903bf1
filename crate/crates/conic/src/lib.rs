//! Mixed-integer second-order cone programs.
//!
//! [`ConicProgram`] holds the model, [`ConicBackend`] solves its continuous
//! relaxation, and [`solve_mip`] runs best-first branch and bound over the
//! binaries. [`ClarabelBackend`] is the bundled interior-point backend.

mod backend;
mod bnb;
pub mod cbf;
mod error;
mod program;

pub use backend::{Bounds, ClarabelBackend, ConicBackend, Relaxation, RelaxStatus};
pub use bnb::{solve_mip, MipOptions, MipSolution, MipStatus};
pub use error::{ConicError, Result};
pub use program::{
    Affine, BinaryInfo, ConicProgram, LinearConstraint, ProgramSize, RotatedConstraint, Sense,
    SocConstraint, Var, VarInfo,
};
