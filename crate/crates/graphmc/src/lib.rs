//! Bayesian low-rank matrix completion with graph side information.
//!
//! The model factors a partially observed matrix M ≈ UVᵀ where the columns
//! of U and V carry Gaussian priors whose precisions are graph Laplacians
//! scaled by per-column Gamma variables. Shared column precisions shrink
//! unneeded columns to zero, so the rank is selected automatically, and the
//! Laplacians pull factor entries together along graph edges. Inference is
//! column-wise mean-field coordinate ascent with closed-form updates; no
//! regularization weights or rank caps need tuning.
//!
//! The core types are generic over the scalar (f32 or f64 via [`Real`]);
//! the `*64` aliases at the crate root cover the common case.
//!
//! ```
//! use graphmc::{identity_laplacian, InferenceConfig64, ObservedMatrix64, run_vi};
//!
//! // A rank-1 matrix with the entry at (1, 2) missing.
//! let u = [1.0, 0.5, -1.0, 1.5];
//! let v = [0.8, -0.6, 1.2, 0.4];
//! let entries: Vec<(usize, usize, f64)> = (0..16)
//!     .filter(|p| *p != 6)
//!     .map(|p| (p / 4, p % 4, u[p / 4] * v[p % 4]))
//!     .collect();
//! let data = ObservedMatrix64::from_triplets(4, 4, &entries).unwrap();
//! let lap = identity_laplacian(4).unwrap();
//! let cfg = InferenceConfig64 { initial_rank: 2, ..Default::default() };
//! let result = run_vi(&data, &lap, &lap, &cfg).unwrap();
//! assert_eq!(result.estimated_rank, 1);
//! assert!((result.x_hat[(1, 2)] - 0.6).abs() < 1e-3);
//! ```

pub mod error;
pub mod graph;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{
    gaussian_kernel_adjacency, identity_laplacian, knn_adjacency, laplacian, Adjacency,
    GraphLaplacian, DEFAULT_JITTER,
};
pub use inference::{
    elbo, expected_quadratic_form, expected_residual, init_state, prune_columns, run_vi,
    update_factor_column, update_lambda, update_tau, CompletionResult, InferenceConfig,
    InferenceState, IterationRecord,
};
pub use io::{
    image_to_observed, load_coord_matrix, load_dense_csv, load_image, load_triplets,
    pixels_from_unit, save_coord_matrix, save_dense_csv, save_image, save_triplets,
};
pub use metrics::{error_rate, psnr, rmse, ssim, EvalReport};
pub use model::{
    conditional_quadratic_coefficients, log_joint, log_joint_terms, log_marginal_prior_column,
    ColumnGaussian, FactorPosterior, GammaParams, HyperParam, HyperPosterior, LogJointTerms,
    ObservedMatrix, PriorConfig, Side,
};
pub use scalar::Real;
pub use synth::{
    gaussian_with_precision, gen_graph_structured, gen_iid_lowrank, sample_mask, NoiseLevel,
    SynthMode, SynthSpec,
};

/// f64 specializations of the core types.
pub type Adjacency64 = graph::Adjacency<f64>;
pub type GraphLaplacian64 = graph::GraphLaplacian<f64>;
pub type ObservedMatrix64 = model::ObservedMatrix<f64>;
pub type PriorConfig64 = model::PriorConfig<f64>;
pub type FactorPosterior64 = model::FactorPosterior<f64>;
pub type HyperPosterior64 = model::HyperPosterior<f64>;
pub type InferenceConfig64 = inference::InferenceConfig<f64>;
pub type InferenceState64 = inference::InferenceState<f64>;
pub type CompletionResult64 = inference::CompletionResult<f64>;
pub type SynthSpec64 = synth::SynthSpec<f64>;
pub type EvalReport64 = metrics::EvalReport<f64>;
