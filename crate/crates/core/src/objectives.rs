//! Target potentials `f_k = -log pi_k` with closed-form values and gradients.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One Gaussian mixture component as supplied by a caller.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
struct PreparedComponent {
    mean: Vec<f64>,
    /// row-major inverse covariance
    precision: Vec<f64>,
    /// ln(weight) - d/2 ln(2 pi) - 1/2 ln det(cov)
    log_scale: f64,
}

/// `pi(x) = sum_j weight_j N(x; mean_j, cov_j)`, normalization constants kept.
#[derive(Clone, Debug)]
pub struct GaussianMixtureTarget {
    dim: usize,
    components: Vec<MixtureComponent>,
    prepared: Vec<PreparedComponent>,
}

impl GaussianMixtureTarget {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Construction("mixture has no components".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Construction("mixture component has empty mean".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Construction(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let mut prepared = Vec::with_capacity(components.len());
        for (j, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::Construction(format!("component {j}: weight must be positive")));
            }
            if c.mean.len() != dim || c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::Construction(format!(
                    "component {j}: mean must be finite with dimension {dim}"
                )));
            }
            let cov =
                square_matrix(&c.covariance, dim).map_err(|m| Error::Construction(format!("component {j}: {m}")))?;
            let chol = cov
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Construction(format!("component {j}: covariance is not positive definite")))?;
            let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let inv = chol.inverse();
            let precision = (0..dim)
                .flat_map(|r| (0..dim).map(move |s| (r, s)))
                .map(|(r, s)| 0.5 * (inv[(r, s)] + inv[(s, r)]))
                .collect();
            prepared.push(PreparedComponent {
                mean: c.mean.clone(),
                precision,
                log_scale: c.weight.ln() - 0.5 * dim as f64 * LN_2PI - 0.5 * log_det,
            });
        }
        Ok(GaussianMixtureTarget {
            dim,
            components,
            prepared,
        })
    }

    /// Mixture with identity covariances.
    pub fn isotropic(weights: &[f64], means: &[Vec<f64>]) -> Result<Self> {
        if weights.len() != means.len() {
            return Err(Error::Construction("weights and means differ in length".into()));
        }
        let comps = weights
            .iter()
            .zip(means)
            .map(|(&weight, mean)| MixtureComponent {
                weight,
                mean: mean.clone(),
                covariance: identity(mean.len()),
            })
            .collect();
        Self::new(comps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// `ln(weight_j N(x; mean_j, cov_j))` per component.
    fn component_log_terms(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let d = self.dim;
        let mut diff = [0.0f64; 8];
        let mut diff_heap;
        let diff: &mut [f64] = if d <= diff.len() {
            &mut diff[..d]
        } else {
            diff_heap = vec![0.0; d];
            &mut diff_heap
        };
        for c in &self.prepared {
            for (k, slot) in diff.iter_mut().enumerate() {
                *slot = x[k] - c.mean[k];
            }
            out.push(c.log_scale - 0.5 * quad_form(&c.precision, diff));
        }
    }

    /// Posterior responsibilities `r_j(x)`; nonnegative and summing to one.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let mut logs = Vec::with_capacity(self.prepared.len());
        self.component_log_terms(x, &mut logs);
        let lse = log_sum_exp(&logs);
        logs.iter().map(|a| (a - lse).exp()).collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut logs = Vec::with_capacity(self.prepared.len());
        self.component_log_terms(x, &mut logs);
        -log_sum_exp(&logs)
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let resp = self.responsibilities(x);
        out.iter_mut().for_each(|v| *v = 0.0);
        let d = self.dim;
        for (c, r) in self.prepared.iter().zip(resp) {
            if r == 0.0 {
                continue;
            }
            for (a, o) in out.iter_mut().enumerate() {
                let row = &c.precision[a * d..(a + 1) * d];
                let pd: f64 = row
                    .iter()
                    .zip(x.iter().zip(&c.mean))
                    .map(|(p, (xi, mi))| p * (xi - mi))
                    .sum();
                *o += r * pd;
            }
        }
    }
}

/// `f(x) = 1/2 (x - c)^T A (x - c)` with `A` symmetric positive definite.
#[derive(Clone, Debug)]
pub struct QuadraticTarget {
    center: Vec<f64>,
    curvature: Vec<f64>,
    eig_min: f64,
    eig_max: f64,
}

impl QuadraticTarget {
    pub fn new(center: Vec<f64>, curvature: Vec<Vec<f64>>) -> Result<Self> {
        let d = center.len();
        if d == 0 || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::Construction(
                "quadratic center must be finite and non-empty".into(),
            ));
        }
        let a = square_matrix(&curvature, d).map_err(Error::Construction)?;
        if a.clone().cholesky().is_none() {
            return Err(Error::Construction(
                "quadratic curvature is not positive definite".into(),
            ));
        }
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let eig_min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let eig_max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(QuadraticTarget {
            center,
            curvature: a.transpose().iter().copied().collect(),
            eig_min,
            eig_max,
        })
    }

    /// `1/2 |x - c|^2`.
    pub fn isotropic(center: Vec<f64>) -> Result<Self> {
        let d = center.len();
        Self::new(center, identity(d))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Strong convexity modulus (smallest eigenvalue of `A`).
    pub fn strong_convexity(&self) -> f64 {
        self.eig_min
    }

    /// Smoothness constant (largest eigenvalue of `A`).
    pub fn smoothness(&self) -> f64 {
        self.eig_max
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        0.5 * quad_form(&self.curvature, &diff)
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (a, o) in out.iter_mut().enumerate() {
            let row = &self.curvature[a * d..(a + 1) * d];
            *o = row
                .iter()
                .zip(x.iter().zip(&self.center))
                .map(|(p, (xi, ci))| p * (xi - ci))
                .sum();
        }
    }
}

#[derive(Clone, Debug)]
pub enum Target {
    Mixture(GaussianMixtureTarget),
    Quadratic(QuadraticTarget),
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Mixture(t) => t.dim(),
            Target::Quadratic(t) => t.dim(),
        }
    }

    /// Potential value `f(x)`; the caller guarantees `x.len() == dim()`.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Target::Mixture(t) => t.value(x),
            Target::Quadratic(t) => t.value(x),
        }
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Target::Mixture(t) => t.grad_into(x, out),
            Target::Quadratic(t) => t.grad_into(x, out),
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticTarget> {
        match self {
            Target::Quadratic(q) => Some(q),
            Target::Mixture(_) => None,
        }
    }
}

impl From<GaussianMixtureTarget> for Target {
    fn from(t: GaussianMixtureTarget) -> Self {
        Target::Mixture(t)
    }
}

impl From<QuadraticTarget> for Target {
    fn from(t: QuadraticTarget) -> Self {
        Target::Quadratic(t)
    }
}

pub fn potential_value(target: &Target, x: &[f64]) -> Result<f64> {
    check_point(target, x)?;
    Ok(target.value(x))
}

pub fn potential_grad(target: &Target, x: &[f64]) -> Result<Vec<f64>> {
    check_point(target, x)?;
    let mut g = vec![0.0; x.len()];
    target.grad_into(x, &mut g);
    Ok(g)
}

fn check_point(target: &Target, x: &[f64]) -> Result<()> {
    if x.len() != target.dim() {
        return Err(Error::invalid(format!(
            "point has dimension {}, target expects {}",
            x.len(),
            target.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite point"));
    }
    Ok(())
}

/// The `K` objectives. With `include_entropy` each objective is
/// `KL(rho || pi_k)`; without it, the linear functional `int f_k d rho`.
#[derive(Clone, Debug)]
pub struct ObjectiveSet {
    targets: Vec<Target>,
    include_entropy: bool,
}

impl ObjectiveSet {
    pub fn new(targets: Vec<Target>, include_entropy: bool) -> Result<Self> {
        let d = targets
            .first()
            .ok_or_else(|| Error::invalid("objective set needs at least one target"))?
            .dim();
        if let Some(k) = targets.iter().position(|t| t.dim() != d) {
            return Err(Error::invalid(format!(
                "target {k} has dimension {}, expected {d}",
                targets[k].dim()
            )));
        }
        Ok(ObjectiveSet {
            targets,
            include_entropy,
        })
    }

    /// The four two-component Gaussian mixtures of the toy sampling problem:
    /// weights (0.7, 0.3), identity covariances, a shared high-density
    /// region near the origin.
    pub fn toy4() -> Self {
        let means: [([f64; 2], [f64; 2]); 4] = [
            ([4.0, -4.0], [0.1, 0.2]),
            ([-4.0, 4.0], [-0.1, 0.3]),
            ([-4.0, -4.0], [0.4, -0.4]),
            ([4.0, 4.0], [-0.2, 0.3]),
        ];
        let targets = means
            .iter()
            .map(|(a, b)| {
                GaussianMixtureTarget::isotropic(&[0.7, 0.3], &[a.to_vec(), b.to_vec()])
                    .map(Target::from)
                    .expect("toy4 targets are valid")
            })
            .collect();
        ObjectiveSet {
            targets,
            include_entropy: true,
        }
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.targets[0].dim()
    }

    pub fn include_entropy(&self) -> bool {
        self.include_entropy
    }

    pub fn with_entropy(mut self, include_entropy: bool) -> Self {
        self.include_entropy = include_entropy;
        self
    }

    /// All targets as quadratics, if every target is one.
    pub fn quadratics(&self) -> Option<Vec<&QuadraticTarget>> {
        self.targets.iter().map(Target::as_quadratic).collect()
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn quad_form(m: &[f64], v: &[f64]) -> f64 {
    let d = v.len();
    let mut acc = 0.0;
    for a in 0..d {
        let row = &m[a * d..(a + 1) * d];
        let rv: f64 = row.iter().zip(v).map(|(p, q)| p * q).sum();
        acc += v[a] * rv;
    }
    acc
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn square_matrix(rows: &[Vec<f64>], d: usize) -> std::result::Result<DMatrix<f64>, String> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(format!("matrix must be {d}x{d}"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err("matrix has non-finite entries".into());
    }
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    let scale = m.amax().max(1.0);
    for i in 0..d {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err("matrix is not symmetric".into());
            }
        }
    }
    Ok(m)
}
