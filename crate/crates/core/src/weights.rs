//! Objective weights: the min-norm convex combination of the per-objective
//! gradient estimates.
//!
//! With `G_kl = (1/m) sum_i <D_k(x_i), D_l(x_i)>` the weight program is
//! `min_{w in simplex} 1/2 w^T G w`. Small problems use closed forms; for
//! three or more objectives an away-step Frank-Wolfe iteration with exact
//! line search runs until the Frank-Wolfe gap drops below `tol`.

use crate::ensemble::Matrix;
use crate::error::{Error, Result};
use crate::estimators::EstimateBatch;

pub const DEFAULT_QP_TOL: f64 = 1e-10;
pub const DEFAULT_QP_MAX_ITERS: usize = 1000;

/// Closed-form denominators below this are treated as zero.
const DEGENERATE_DENOM: f64 = 1e-14;

/// A point of the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("weight vector is empty"));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(SimplexWeights(w))
    }

    pub fn uniform(k: usize) -> Self {
        SimplexWeights(vec![1.0 / k as f64; k])
    }

    pub fn vertex(k: usize, i: usize) -> Self {
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        SimplexWeights(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Clip tiny negatives from rounding and renormalize.
    fn from_iterate(mut w: Vec<f64>) -> Self {
        w.iter_mut().for_each(|v| *v = v.max(0.0));
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        SimplexWeights(w)
    }
}

/// Symmetric positive semidefinite `K x K` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    k: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    /// Validates squareness, finiteness and symmetry (within `1e-12`
    /// relative to the largest entry).
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("gram matrix must be square and non-empty"));
        }
        let data: Vec<f64> = rows.concat();
        let g = GramMatrix { k, data };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gram matrix has non-finite entries"));
        }
        let scale = self.data.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        for a in 0..self.k {
            for b in 0..a {
                if (self.get(a, b) - self.get(b, a)).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!("gram matrix is not symmetric at ({a}, {b})")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.k + b]
    }

    pub fn scaled(&self, c: f64) -> Self {
        GramMatrix {
            k: self.k,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn matvec(&self, w: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.k)
            .map(|row| row.iter().zip(w).map(|(g, v)| g * v).sum())
            .collect()
    }

    /// `1/2 w^T G w`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        0.5 * self.matvec(w).iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
    }
}

pub fn gram_matrix(batch: &EstimateBatch) -> GramMatrix {
    let (m, k) = (batch.num_particles(), batch.num_objectives());
    let mut data = vec![0.0; k * k];
    for a in 0..k {
        for b in a..k {
            let mut acc = 0.0;
            for i in 0..m {
                acc += dot(batch.get(i, a), batch.get(i, b));
            }
            let v = acc / m as f64;
            data[a * k + b] = v;
            data[b * k + a] = v;
        }
    }
    GramMatrix { k, data }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub weights: SimplexWeights,
    /// `1/2 w^T G w` at the returned weights.
    pub objective: f64,
    /// Frank-Wolfe duality gap `w^T G w - min_k (G w)_k`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_qp(g: &GramMatrix, tol: f64) -> Result<()> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    g.validate()
}

pub fn solve_simplex_qp(g: &GramMatrix, tol: f64, max_iters: usize) -> Result<QpSolution> {
    check_qp(g, tol)?;
    match g.dim() {
        // closed forms are exact; their gap only reflects rounding
        1 => Ok(finish(g, vec![1.0], 0, true)),
        2 => Ok(finish(g, two_objective_weights(g).to_vec(), 0, true)),
        _ => Ok(frank_wolfe(g, tol, max_iters)),
    }
}

/// Frank-Wolfe for any `K`, skipping the closed forms.
pub fn solve_frank_wolfe(g: &GramMatrix, tol: f64, max_iters: usize) -> Result<QpSolution> {
    check_qp(g, tol)?;
    Ok(frank_wolfe(g, tol, max_iters))
}

/// `w_1 = clip((G22 - G12) / (G11 - 2 G12 + G22), 0, 1)`, or 1/2 when the
/// denominator vanishes.
pub fn two_objective_weights(g: &GramMatrix) -> [f64; 2] {
    let denom = g.get(0, 0) - 2.0 * g.get(0, 1) + g.get(1, 1);
    let w1 = if denom < DEGENERATE_DENOM {
        0.5
    } else {
        ((g.get(1, 1) - g.get(0, 1)) / denom).clamp(0.0, 1.0)
    };
    [w1, 1.0 - w1]
}

fn finish(g: &GramMatrix, w: Vec<f64>, iterations: usize, converged: bool) -> QpSolution {
    let weights = SimplexWeights::from_iterate(w);
    QpSolution {
        objective: g.objective(weights.as_slice()),
        gap: fw_gap(g, weights.as_slice()),
        iterations,
        converged,
        weights,
    }
}

/// `w^T G w - min_k (G w)_k`, nonnegative on the simplex.
pub fn fw_gap(g: &GramMatrix, w: &[f64]) -> f64 {
    let grad = g.matvec(w);
    let quad: f64 = grad.iter().zip(w).map(|(a, b)| a * b).sum();
    quad - argmin_lowest(&grad).1
}

fn argmin_lowest(v: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    (best, v[best])
}

fn frank_wolfe(g: &GramMatrix, tol: f64, max_iters: usize) -> QpSolution {
    let k = g.dim();
    let mut w = vec![1.0 / k as f64; k];
    let mut grad = g.matvec(&w);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        let quad: f64 = grad.iter().zip(&w).map(|(a, b)| a * b).sum();
        let (toward, min_grad) = argmin_lowest(&grad);
        let gap = quad - min_grad;
        if gap <= tol {
            converged = true;
            break;
        }
        // away vertex: largest gradient among the active coordinates
        let mut away = None;
        for i in 0..k {
            if w[i] > 0.0 && away.is_none_or(|a: usize| grad[i] > grad[a]) {
                away = Some(i);
            }
        }
        let away = away.expect("iterate lies on the simplex");
        let away_gap = grad[away] - quad;

        // direction d and the largest feasible step along it
        let mut dir = vec![0.0; k];
        let max_step;
        let away_step = gap < away_gap;
        if !away_step {
            dir.iter_mut().zip(&w).for_each(|(d, wi)| *d = -wi);
            dir[toward] += 1.0;
            max_step = 1.0;
        } else {
            dir.iter_mut().zip(&w).for_each(|(d, wi)| *d = *wi);
            dir[away] -= 1.0;
            let wa = w[away];
            max_step = if wa < 1.0 { wa / (1.0 - wa) } else { f64::INFINITY };
        }

        // exact line search on 1/2 (w + s d)^T G (w + s d)
        let gd = g.matvec(&dir);
        let curvature: f64 = gd.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let slope: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let step = if curvature > 0.0 {
            (-slope / curvature).min(max_step)
        } else {
            max_step
        };
        if !step.is_finite() || step <= 0.0 {
            break;
        }
        for i in 0..k {
            w[i] += step * dir[i];
            grad[i] += step * gd[i];
        }
        if away_step && step == max_step {
            // drop step: the away vertex leaves the active set exactly
            w[away] = 0.0;
        }
        iterations += 1;
        if iterations % 50 == 0 {
            // refresh against drift in the incremental gradient
            grad = g.matvec(&w);
        }
    }
    let mut sol = finish(g, w, iterations, converged);
    sol.converged |= sol.gap <= tol;
    sol
}

/// Row `i` is `sum_k w_k D_k(x_i)`.
pub fn aggregate_direction(batch: &EstimateBatch, w: &SimplexWeights) -> Result<Matrix> {
    let (m, k, d) = (batch.num_particles(), batch.num_objectives(), batch.dim());
    if w.len() != k {
        return Err(Error::invalid(format!("{} weights for {k} objectives", w.len())));
    }
    let mut out = Matrix::zeros(m, d);
    for i in 0..m {
        let row = out.row_mut(i);
        for (kk, &wk) in w.as_slice().iter().enumerate() {
            for (o, v) in row.iter_mut().zip(batch.get(i, kk)) {
                *o += wk * v;
            }
        }
    }
    Ok(out)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
