//! Finite-volume Green's functions `G_n = Δ^{-1}`, row-sum sequences with
//! criticality evidence, determinants, and structural checks on sink patterns.

mod determinant;
mod report;
mod solver;
mod structure;

pub use determinant::{determinant, Determinant};
pub use report::{
    classify, row_sum_sequence, tail_sums_by_distance, volume_matrix, GreenReport, GrowthDiagnostics, RowSumSpec,
    Verdict, VerdictRule,
};
pub use solver::{smallest_eigenvalue, solve_green_row, GreenSolver, SolverKind, BAND_STORAGE_CAP, RESIDUAL_TOLERANCE};
pub use structure::{
    covering_radius, finite_complement_check, lines_gap_bound, Covering, FiniteComplement, GapSeries, SeriesVerdict,
};
