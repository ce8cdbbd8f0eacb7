//! The per-trial loop shared by both algorithms.
//!
//! Each iteration `n` performs, in order: estimate the per-objective
//! gradients at `x_n`, build the Gram matrix, solve for the weights, log
//! GradNorm, and (for `n < T`) apply the step. Iteration `T` is estimated
//! and logged but not stepped, so the final logged GradNorm describes the
//! returned particles.

use crate::diagnostics::{grad_norm, SeriesPoint, TrialRecord};
use crate::dynamics::{amwgrad_step, momentum_coefficient, mwgrad_step};
use crate::ensemble::{init_ensemble_stream, Matrix, ParticleEnsemble};
use crate::error::Result;
use crate::estimators::EstimateBatch;
use crate::harness::config::{Bandwidth, RunConfig};
use crate::kernels::RbfKernel;
use crate::weights::{aggregate_direction, gram_matrix, solve_simplex_qp, SimplexWeights};

/// A run is stopped once any coordinate exceeds this magnitude.
pub const DIVERGENCE_BOUND: f64 = 1e8;

/// State handed to observers once per iteration, before the step.
pub struct IterationState<'a> {
    pub iteration: usize,
    pub ensemble: &'a ParticleEnsemble,
    pub batch: &'a EstimateBatch,
    pub weights: &'a SimplexWeights,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub positions: Matrix,
}

#[derive(Clone, Debug)]
pub struct TrialOutput {
    pub record: TrialRecord,
    pub snapshots: Vec<Snapshot>,
}

fn out_of_bounds(ens: &ParticleEnsemble) -> bool {
    !ens.is_finite() || ens.positions().max_abs() > DIVERGENCE_BOUND || ens.velocities().max_abs() > DIVERGENCE_BOUND
}

/// Runs the loop, calling `observe` at every iteration `0..=T`. Returns the
/// final ensemble and the divergence iteration, if any.
pub fn run_with_observer<F>(
    config: &RunConfig,
    trial_index: u64,
    mut observe: F,
) -> Result<(ParticleEnsemble, Option<usize>)>
where
    F: FnMut(&IterationState<'_>) -> Result<()>,
{
    config.validate()?;
    let mut ens = match config.initial_positions() {
        Some(p) => ParticleEnsemble::at_rest(p)?,
        None => init_ensemble_stream(config.num_particles, config.dim, config.seed, trial_index)?,
    };
    let estimator = config.estimator();
    let objectives = config.objectives.as_ref();

    for n in 0..=config.iterations {
        let kernel = match config.bandwidth {
            Bandwidth::Fixed(h) => RbfKernel::new(h)?,
            Bandwidth::Median => RbfKernel::median_heuristic(ens.positions()),
        };
        let batch = estimator.estimate(&ens, objectives, &kernel, config.svgd_scaling)?;
        if !batch.is_finite() {
            return Ok((ens, Some(n)));
        }
        let qp = solve_simplex_qp(&gram_matrix(&batch), config.qp_tol, config.qp_max_iters)?;
        let gn = grad_norm(&batch, &qp.weights)?;
        observe(&IterationState {
            iteration: n,
            ensemble: &ens,
            batch: &batch,
            weights: &qp.weights,
            grad_norm: gn,
        })?;
        if n == config.iterations {
            break;
        }
        let direction = aggregate_direction(&batch, &qp.weights)?;
        ens = if config.method.accelerated() {
            let alpha = momentum_coefficient(config.schedule, n, config.step_size)?;
            amwgrad_step(&ens, &direction, config.step_size, alpha)?
        } else {
            mwgrad_step(&ens, &direction, config.step_size)?
        };
        if out_of_bounds(&ens) {
            return Ok((ens, Some(n + 1)));
        }
    }
    Ok((ens, None))
}

fn mean_potentials(config: &RunConfig, ens: &ParticleEnsemble) -> Vec<f64> {
    let m = ens.num_particles() as f64;
    config
        .objectives
        .targets()
        .iter()
        .map(|t| ens.positions().iter_rows().map(|x| t.value(x)).sum::<f64>() / m)
        .collect()
}

/// One seeded trial. Particles are drawn from stream `trial_index` of
/// `config.seed`, so trials are independent of execution order.
pub fn run_trial(config: &RunConfig, trial_index: u64) -> Result<TrialOutput> {
    let mut series = Vec::with_capacity(config.iterations / config.log_stride + 2);
    let mut snapshots = Vec::new();
    let last = config.iterations;
    let (final_ens, diverged_at) = run_with_observer(config, trial_index, |st| {
        let n = st.iteration;
        if n % config.log_stride == 0 || n == last {
            series.push(SeriesPoint {
                iter: n,
                grad_norm: st.grad_norm,
                objectives: mean_potentials(config, st.ensemble),
            });
        }
        if let Some(stride) = config.snapshot_stride {
            if n % stride == 0 || n == last {
                snapshots.push(Snapshot {
                    iter: n,
                    positions: st.ensemble.positions().clone(),
                });
            }
        }
        Ok(())
    })?;
    Ok(TrialOutput {
        record: TrialRecord {
            method: config.method.to_string(),
            step_size: config.step_size,
            seed: config.seed,
            trial_index,
            series,
            final_positions: final_ens.positions().clone(),
            diverged_at,
        },
        snapshots,
    })
}
