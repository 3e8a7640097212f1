//! Tree-structured varying-coefficient (TSVC) regression for Gaussian
//! outcomes, with degrees of freedom that account for the split search.
//!
//! The numeric types are generic over [`Scalar`] (`f64` or `f32`); the
//! aliases below fix the single-precision variants.

pub mod dof;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mfp;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod selection;
pub mod sim;
pub mod tree;

pub use dof::{dof_mfp, dof_naive, dof_table_lookup, mc_dof, DofSpec, McDofConfig, McDofResult};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use mfp::{best_fp, derive_dof_formula, mfp_select, order_covariates, MfpConfig, MfpFit};
pub use model::{gaussian_log_lik, solve_least_squares, Dataset, LinearFit};
pub use scalar::Scalar;
pub use selection::{bic, prune_path, PruneReport};
pub use tree::{
    build_design, enumerate_candidates, fit_path, grow_one_split, CoefficientTree, ModelDocument,
    ModelPath, SplitRule, TsvcModel,
};

pub type Dataset32 = Dataset<f32>;
pub type Matrix32 = Matrix<f32>;
pub type LinearFit32 = LinearFit<f32>;
pub type TsvcModel32 = TsvcModel<f32>;
pub type ModelPath32 = ModelPath<f32>;
pub type DofSpec32 = DofSpec<f32>;
pub type McDofResult32 = McDofResult<f32>;
pub type MfpFit32 = MfpFit<f32>;
