//! Multi-objective Wasserstein gradient descent with particles.
//!
//! A set of particles is moved so that its empirical distribution decreases
//! several KL-type objectives `F_k(rho) = E_rho[f_k] + E_rho[log rho]` at
//! once. Each iteration estimates one gradient field per objective (SVGD or
//! blob estimator), finds min-norm simplex weights for them, and steps
//! either plainly or with momentum.
//!
//! ```no_run
//! use mwgrad::harness::{run_trial, Method, RunConfig};
//!
//! let cfg = RunConfig::toy4(Method::AmwgradBlob, 0.001, 0);
//! let out = run_trial(&cfg, 0).unwrap();
//! println!("{:?}", out.record.final_grad_norm());
//! ```

pub mod diagnostics;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod kernels;
pub mod objectives;
pub mod rng;
pub mod weights;

pub use diagnostics::{fit_exp_rate, fit_rate_slope, grad_norm, merit_euclidean, SearchBox, SeriesPoint, TrialRecord};
pub use dynamics::{amwgrad_step, momentum_coefficient, mwgrad_step, MomentumSchedule};
pub use ensemble::{init_ensemble, init_ensemble_stream, Matrix, ParticleEnsemble};
pub use error::{Error, Result};
pub use estimators::{
    estimate_blob, estimate_potential_only, estimate_svgd, EstimateBatch, EstimatorKind, SvgdScaling,
};
pub use kernels::RbfKernel;
pub use objectives::{GaussianMixtureTarget, MixtureComponent, ObjectiveSet, QuadraticTarget, Target};
pub use weights::{
    aggregate_direction, gram_matrix, solve_frank_wolfe, solve_simplex_qp, GramMatrix, QpSolution, SimplexWeights,
};
