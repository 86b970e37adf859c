//! Monte Carlo kernels: trapped walks on trees, killed walks on `Z^d`,
//! hitting times, local times and Feynman-Kac masses.
//!
//! Walk `i` of an estimator seeded with `seed` draws from
//! [`stream_rng(seed, i)`](crate::rng::stream_rng), so estimates do not depend
//! on the thread count.

mod continuous;
mod lattice;
mod tail;
mod tree;

use serde::Serialize;

pub use continuous::{
    feynman_kac_mass, feynman_kac_mass_rescaled, mass_curve, run_continuous_walk, single_source_mass,
    ContinuousPath, MassCurve, Potential,
};
pub(crate) use lattice::lattice_step;
pub use lattice::{
    bracketing_gap, expected_killed_survival, gap_hitting_bound, hitting_time, local_time_functional,
    run_killed_lattice_walk, sup_local_time_tail, survival_factor, HittingEstimate, KilledSurvival,
    LocalTimeFunctional, LocalTimeLedger,
};
pub use tail::{analytic_tail_bound, chernoff_rate, survival_tail, ChernoffRate, TailEstimate};
pub use tree::{
    depth_drift, mean_survival_time, range_and_depth, run_annealed_tree_walk, run_trapped_tree_walk,
    AnnealedTraps, RangeDepth, SurvivalMean, SurvivalModel, TreeSite,
};

/// One walk. `survival_time` is the kill time when `killed`, otherwise the
/// number of steps survived before the walk was censored at its horizon or
/// left a finite tree (`escaped`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkTrace<P> {
    pub positions: Vec<P>,
    pub survival_time: u64,
    pub killed: bool,
    pub censored: bool,
    pub escaped: bool,
    pub seed: u64,
}
