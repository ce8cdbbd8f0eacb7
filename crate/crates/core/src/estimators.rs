//! Particle estimates of per-objective Wasserstein gradients.
//!
//! For `F_k = KL(rho || pi_k)` the Wasserstein gradient is
//! `grad f_k + grad log rho`, and `grad log rho` is not available for an
//! empirical measure. Two kernel smoothings replace it:
//!
//! * SVGD: `D_k(x_i) = c * sum_j [K(x_i, x_j) grad f_k(x_j) - grad_{x_j} K(x_i, x_j)]`
//!   with `c = 1/m` by default (`c = 1` under [`SvgdScaling::Sum`]).
//! * Blob: `D_k(x_i) = grad f_k(x_i) + sum_j grad_{x_i} K(x_i, x_j) (1/S_j + 1/S_i)`,
//!   where `S_i = sum_l K(x_i, x_l)`.
//!
//! Without the entropy term the gradient is just `grad f_k`, evaluated
//! pointwise.

use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::kernels::RbfKernel;
use crate::objectives::ObjectiveSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Svgd,
    Blob,
    PotentialOnly,
}

/// Normalization of the SVGD kernel sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SvgdScaling {
    /// Divide by the particle count.
    #[default]
    Mean,
    /// Plain sums, no `1/m`.
    Sum,
}

/// Gradient estimates indexed by (particle `i`, objective `k`), each a
/// `d`-vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateBatch {
    m: usize,
    k: usize,
    d: usize,
    values: Vec<f64>,
    tag: EstimatorKind,
}

impl EstimateBatch {
    pub fn zeros(m: usize, k: usize, d: usize, tag: EstimatorKind) -> Self {
        EstimateBatch {
            m,
            k,
            d,
            values: vec![0.0; m * k * d],
            tag,
        }
    }

    /// Batch from nested `[particle][objective][coordinate]` values.
    pub fn from_nested(values: &[Vec<Vec<f64>>], tag: EstimatorKind) -> Result<Self> {
        let m = values.len();
        let k = values.first().map_or(0, Vec::len);
        let d = values.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if m == 0 || k == 0 || d == 0 {
            return Err(Error::invalid("estimate batch must be non-empty"));
        }
        if values.iter().any(|r| r.len() != k || r.iter().any(|v| v.len() != d)) {
            return Err(Error::invalid("ragged estimate batch"));
        }
        let flat: Vec<f64> = values.iter().flatten().flatten().copied().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite estimate"));
        }
        Ok(EstimateBatch {
            m,
            k,
            d,
            values: flat,
            tag,
        })
    }

    pub fn num_particles(&self) -> usize {
        self.m
    }

    pub fn num_objectives(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn tag(&self) -> EstimatorKind {
        self.tag
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> &[f64] {
        let start = (i * self.k + k) * self.d;
        &self.values[start..start + self.d]
    }

    #[inline]
    fn get_mut(&mut self, i: usize, k: usize) -> &mut [f64] {
        let start = (i * self.k + k) * self.d;
        &mut self.values[start..start + self.d]
    }

    /// All objectives' estimates at particle `i`, laid out `k`-major.
    #[inline]
    pub(crate) fn particle(&self, i: usize) -> &[f64] {
        let width = self.k * self.d;
        &self.values[i * width..(i + 1) * width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn check_shapes(ens: &ParticleEnsemble, objectives: &ObjectiveSet) -> Result<()> {
    if ens.dim() != objectives.dim() {
        return Err(Error::invalid(format!(
            "ensemble dimension {} does not match objective dimension {}",
            ens.dim(),
            objectives.dim()
        )));
    }
    Ok(())
}

fn require_entropy(objectives: &ObjectiveSet, which: &str) -> Result<()> {
    if !objectives.include_entropy() {
        return Err(Error::invalid(format!(
            "{which} estimator approximates the entropy term; objectives exclude it"
        )));
    }
    Ok(())
}

/// `grad f_k(x_i)` for every particle and objective.
fn potential_grads(ens: &ParticleEnsemble, objectives: &ObjectiveSet, tag: EstimatorKind) -> EstimateBatch {
    let (m, k, d) = (ens.num_particles(), objectives.len(), ens.dim());
    let mut batch = EstimateBatch::zeros(m, k, d, tag);
    for i in 0..m {
        let x = ens.positions().row(i);
        for (kk, target) in objectives.targets().iter().enumerate() {
            target.grad_into(x, batch.get_mut(i, kk));
        }
    }
    batch
}

pub fn estimate_svgd(ens: &ParticleEnsemble, objectives: &ObjectiveSet, kernel: &RbfKernel) -> Result<EstimateBatch> {
    estimate_svgd_scaled(ens, objectives, kernel, SvgdScaling::Mean)
}

pub fn estimate_svgd_scaled(
    ens: &ParticleEnsemble,
    objectives: &ObjectiveSet,
    kernel: &RbfKernel,
    scaling: SvgdScaling,
) -> Result<EstimateBatch> {
    check_shapes(ens, objectives)?;
    require_entropy(objectives, "SVGD")?;
    let (m, k, d) = (ens.num_particles(), objectives.len(), ens.dim());
    let grads = potential_grads(ens, objectives, EstimatorKind::Svgd);
    let pos = ens.positions();
    let inv_h2 = 1.0 / (kernel.bandwidth() * kernel.bandwidth());
    let scale = match scaling {
        SvgdScaling::Mean => 1.0 / m as f64,
        SvgdScaling::Sum => 1.0,
    };

    let mut out = EstimateBatch::zeros(m, k, d, EstimatorKind::Svgd);
    let mut drift = vec![0.0; k * d];
    let mut repulsion = vec![0.0; d];
    for i in 0..m {
        drift.iter_mut().for_each(|v| *v = 0.0);
        repulsion.iter_mut().for_each(|v| *v = 0.0);
        let xi = pos.row(i);
        for j in 0..m {
            let xj = pos.row(j);
            let kij = kernel.eval_unchecked(xi, xj);
            for (acc, g) in drift.iter_mut().zip(grads.particle(j)) {
                *acc += kij * g;
            }
            // grad_{x_j} K(x_i, x_j)
            for (r, (a, b)) in repulsion.iter_mut().zip(xi.iter().zip(xj)) {
                *r += (a - b) * inv_h2 * kij;
            }
        }
        for kk in 0..k {
            let dst = out.get_mut(i, kk);
            for (c, slot) in dst.iter_mut().enumerate() {
                *slot = scale * (drift[kk * d + c] - repulsion[c]);
            }
        }
    }
    Ok(out)
}

pub fn estimate_blob(ens: &ParticleEnsemble, objectives: &ObjectiveSet, kernel: &RbfKernel) -> Result<EstimateBatch> {
    check_shapes(ens, objectives)?;
    require_entropy(objectives, "Blob")?;
    let (m, k, d) = (ens.num_particles(), objectives.len(), ens.dim());
    let pos = ens.positions();
    let inv_h2 = 1.0 / (kernel.bandwidth() * kernel.bandwidth());

    let mut gram = vec![0.0; m * m];
    for i in 0..m {
        gram[i * m + i] = 1.0;
        for j in 0..i {
            let v = kernel.eval_unchecked(pos.row(i), pos.row(j));
            gram[i * m + j] = v;
            gram[j * m + i] = v;
        }
    }
    let inv_row_sums: Vec<f64> = gram.chunks_exact(m).map(|r| 1.0 / r.iter().sum::<f64>()).collect();

    let mut out = potential_grads(ens, objectives, EstimatorKind::Blob);
    let mut smoothing = vec![0.0; d];
    for i in 0..m {
        smoothing.iter_mut().for_each(|v| *v = 0.0);
        let xi = pos.row(i);
        for j in 0..m {
            let xj = pos.row(j);
            let weight = gram[i * m + j] * (inv_row_sums[j] + inv_row_sums[i]);
            // grad_{x_i} K(x_i, x_j) = -(x_i - x_j) / h^2 * K
            for (s, (a, b)) in smoothing.iter_mut().zip(xi.iter().zip(xj)) {
                *s -= (a - b) * inv_h2 * weight;
            }
        }
        for kk in 0..k {
            for (slot, s) in out.get_mut(i, kk).iter_mut().zip(&smoothing) {
                *slot += s;
            }
        }
    }
    Ok(out)
}

pub fn estimate_potential_only(ens: &ParticleEnsemble, objectives: &ObjectiveSet) -> Result<EstimateBatch> {
    check_shapes(ens, objectives)?;
    Ok(potential_grads(ens, objectives, EstimatorKind::PotentialOnly))
}

impl EstimatorKind {
    pub fn estimate(
        self,
        ens: &ParticleEnsemble,
        objectives: &ObjectiveSet,
        kernel: &RbfKernel,
        scaling: SvgdScaling,
    ) -> Result<EstimateBatch> {
        match self {
            EstimatorKind::Svgd => estimate_svgd_scaled(ens, objectives, kernel, scaling),
            EstimatorKind::Blob => estimate_blob(ens, objectives, kernel),
            EstimatorKind::PotentialOnly => estimate_potential_only(ens, objectives),
        }
    }
}
