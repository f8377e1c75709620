//! Two-sample testing of gene association networks.
//!
//! For each gene-set, the question is whether the joint dependence structure
//! of its genes (a Gaussian graphical model) differs between two conditions.
//! The test splits samples in half, screens sparse networks on one half,
//! evaluates graph-constrained maximum likelihood on the other half, and
//! compares models by an AIC difference whose null distribution is a shifted
//! weighted sum of chi-square variables. Splitting is repeated and per-split
//! FDR-adjusted p-values are aggregated by their median.
//!
//! Modules:
//! - [`ggm`]: sparse Gaussian graphical model estimation (graphical lasso,
//!   neighbourhood selection, shrinkage partial correlations).
//! - [`constrained_mle`]: maximum likelihood under a fixed graph.
//! - [`diffnet`]: the two-sample network test for a single gene-set.
//! - [`gsa`]: gene-set orchestration, classic mean-shift testing, filtering.
//! - [`simulation`]: data generators and evaluation harness.
//! - [`io`]: TSV ingestion and emission for the command line tool.

pub mod constrained_mle;
pub mod diffnet;
pub mod error;
pub mod ggm;
pub mod gsa;
pub mod io;
pub mod linalg;
pub mod psi;
pub mod seed;
pub mod simulation;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
