//! Simulation and exact diagnostics for Abelian sandpile and avalanche models
//! with dissipative (sink) and source sites.
//!
//! The crate is organised around the objects the models are built from:
//!
//! * [`topology`] builds finite boxes in `Z^d`, complete and pruned `q`-ary
//!   trees, trap fields and site-class maps.
//! * [`sandpile`] assembles toppling matrices, stabilizes height
//!   configurations, runs the burning test and samples the stationary measure.
//! * [`randomwalk`] holds the Monte Carlo kernels: trapped tree walks, killed
//!   lattice walks, hitting times and Feynman-Kac masses.
//! * [`green`] solves for finite-volume Green's functions and turns row-sum
//!   sequences into criticality evidence.
//! * [`pinning`] estimates the homogeneous pinning free energy and the
//!   `gamma` scan used for models with finitely many sources.
//! * [`harness`] ties everything into named, reproducible experiments.
//!
//! ```
//! use noncrit::topology::{BoxLattice, SiteClassMap};
//! use noncrit::sandpile::{assemble_toppling_matrix, Mode, ToppleParams};
//! use noncrit::green::GreenSolver;
//!
//! let path = BoxLattice::rectangle(&[2]).unwrap();
//! let classes = SiteClassMap::ordinary(&path);
//! let delta = assemble_toppling_matrix(&path, &classes, ToppleParams::default(), Mode::IntegerSandpile).unwrap();
//! let green = GreenSolver::new(&delta).unwrap();
//! let row = green.green_row(0).unwrap();
//! assert!((row[0] - 2.0 / 3.0).abs() < 1e-12);
//! ```

pub mod error;
pub mod green;
pub mod harness;
pub mod pinning;
pub mod randomwalk;
pub mod rng;
pub mod sandpile;
pub mod stats;
pub mod topology;

pub use error::{Error, Result};
