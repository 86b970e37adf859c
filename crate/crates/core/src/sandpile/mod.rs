//! Toppling matrices, stabilization, recurrence and stationary sampling.

mod avalanche;
mod burning;
mod matrix;
mod sampler;
mod stabilize;

pub use avalanche::{avalanche_statistics, avalanches_at, AvalancheTails};
pub use burning::{burning_test, enumerate_recurrent, BurnResult, DEFAULT_ENUMERATION_CAP};
pub use matrix::{assemble_toppling_matrix, Mode, ToppleParams, TopplingMatrix};
pub use sampler::{
    mean_odometer, sample_stationary, write_avalanche_csv, write_heights_jsonl, OdometerMeans,
    StationaryChain, StationarySample, StationaryStream,
};
pub use stabilize::{
    add_and_stabilize, conservation_residual, stabilize, stabilize_random_order, AvalancheRecord, Grain,
    HeightConfig, Odometer, DEFAULT_BUDGET,
};
