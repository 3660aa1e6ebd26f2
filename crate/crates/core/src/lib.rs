//! Randomly switched vector fields sharing a common equilibrium.
//!
//! The crate simulates the piecewise deterministic process `(X_t, I_t)`,
//! estimates average growth rates of the linearized switched system and
//! provides extinction and persistence diagnostics for built-in models.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bracket;
pub mod error;
pub mod integrate;
pub mod jump;
pub mod lyapunov;
pub mod models;
pub mod persistence;
pub mod stats;
pub mod system;
pub mod trajectory;

pub use bracket::{bracket_rank, BracketKind, BracketRank};
pub use error::{Error, Result};
pub use integrate::{flow, flow_on_sphere, IntegratorConfig, Method};
pub use jump::{simulate_chain, simulate_on_face, simulate_pdmp, stationary_distribution, SimulationPlan};
pub use lyapunov::{
    check_face_absorption, check_triangular_max, classify_2d_triangular, estimate_growth_via_theta,
    estimate_lower_exponent, estimate_top_exponent, metzler_lower_bound, EnsembleSpec, ExponentEstimate,
    TwoDTriangularVerdict,
};
pub use models::{build_model, Model};
pub use persistence::{extinction_rate, first_exit, occupation_measure, ExtinctionReport, GridSpec, OccupationHistogram};
pub use system::{
    block_decompose, linearize_at_origin, validate_face_invariance, BlockDecomposition, BoundingBox,
    LinearSwitchedSystem, RateMatrix, Split, SwitchedSystem,
};
pub use trajectory::{SwitchEvent, Trajectory};

/// Threads used by replicate ensembles.
pub fn worker_count() -> usize {
    rayon::current_num_threads()
}

/// Sizes the global worker pool. Only the first call in a process can
/// succeed; ensemble results do not depend on the count.
pub fn set_worker_count(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(e.to_string()))
}
