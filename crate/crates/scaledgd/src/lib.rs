//! Provable low-rank Tucker tensor estimation via scaled gradient descent.
//!
//! The crate covers three estimation problems over order-3 tensors with a
//! low multilinear rank: pure factorization, completion from Bernoulli-
//! sampled entries, and regression against a streaming Gaussian
//! measurement ensemble. All three share one preconditioned update rule
//! in the factor space, spectral initializations, a plain gradient
//! descent baseline, and an experiment harness that sweeps condition
//! numbers, sampling rates, and noise levels into CSV tables.

pub mod completion;
pub mod error;
pub mod experiments;
pub mod factors;
pub mod io;
pub mod regression;
pub mod rng;
pub mod solver;
pub mod tensor;

pub use completion::{
    completion_gradients, observe, sample_mask, solve_completion, solve_completion_gd,
    sparse_residual, spectral_init_completion, CompletionInit, CompletionParams, ObservationMask,
    ObservationSet, PMode,
};
pub use error::{Error, Result};
pub use factors::{
    factor_grams, incoherence, make_ground_truth, reparameterize, scaled_distance,
    scaled_projection, DistReport, FactorQuad, GroundTruth, PrecondState, TruthStyle,
};
pub use regression::{
    regression_gradients, solve_regression, solve_regression_gd, spectral_init_regression,
    trip_probe, GaussianDesign, IdentityMeasurement, MeasurementOp, RegressionInit, TripEstimate,
};
pub use solver::{
    factorization_gradients, plain_step, run_factorization, scaled_step, solve_factorization,
    GradientBundle, SolverParams, StopReason, Trajectory, TruthInfo,
};
pub use tensor::{
    hosvd, inner, matricize, multilinear_multiply, sigma_extremes, tensorize, Matricization,
    SigmaReport, Tensor3,
};
