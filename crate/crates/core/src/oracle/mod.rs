//! Truncated Fock-space reference implementation used to cross-check the
//! Gaussian fast path.

mod fock;
mod grid;
mod probe;

pub use fock::{
    annihilation, apply_pump_exact, build_thermal_fock, evolve_lindblad_exact, lindblad_step_bound,
    pump_unitary, tail_levels, FockDensityMatrix, TAIL_LIMIT, TRACE_DRIFT_LIMIT,
};
pub use grid::{
    check_point, random_grid, run_grid, OracleCheck, OracleCutoffs, OracleFault, OraclePoint, OracleReport,
    MOMENT_TOL, OBSERVABLE_TOL,
};
pub use probe::{probe_exact, MIN_PHOTON_DIM};
