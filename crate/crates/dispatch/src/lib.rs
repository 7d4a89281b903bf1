//! Day-ahead dispatch of stationary and mobile batteries in a radial AC/DC
//! feeder as a mixed-integer second-order cone program.
//!
//! [`build_stage1`] and [`build_stage2`] produce a [`DispatchModel`]; solving
//! it runs branch and bound over conic relaxations and returns a
//! [`DispatchSolution`] in physical units.

mod error;
mod model;
mod solution;

pub use error::{DispatchError, Result};
pub use model::{
    build, build_baseline, build_stage1, build_stage2, DeviceModel, DispatchModel,
    DispatchOptions, CLASS_AIR, CLASS_MODE, CLASS_VENT, VIOLATION_PENALTY,
};
pub use solution::{
    linear_damage, socr_gap, solve_misocp, BranchTrace, BusTrace, DailyCosts, DeviceTrace,
    DispatchSolution, GridTrace, SolveStatus, ThermalTrace, VscTrace, SLACK_TOL,
};

use duostore_conic::{ConicBackend, MipOptions};
use duostore_core::net::{HybridNetwork, Scenario};
use duostore_core::storage::StorageDesign;

/// Storage-free dispatch of a scenario under the hard limits.
pub fn baseline_dispatch(
    net: &HybridNetwork,
    scen: &Scenario,
    opts: &DispatchOptions,
    backend: &dyn ConicBackend,
    mip: &MipOptions,
) -> Result<DispatchSolution> {
    build_baseline(net, scen, opts)?.solve(backend, mip)
}

/// Dispatch with soft voltage and current limits; the solution's violation
/// counts say how many bus-hours and branch-hours break the limits.
pub fn violation_dispatch(
    net: &HybridNetwork,
    scen: &Scenario,
    designs: &[StorageDesign],
    opts: &DispatchOptions,
    backend: &dyn ConicBackend,
    mip: &MipOptions,
) -> Result<DispatchSolution> {
    build(net, scen, designs, &opts.relaxed())?.solve(backend, mip)
}
