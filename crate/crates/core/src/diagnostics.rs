//! Convergence diagnostics: GradNorm, the merit function in the single-point
//! reduction, and log-scale rate fits.

use serde::{Deserialize, Serialize};

use crate::ensemble::Matrix;
use crate::error::{Error, Result};
use crate::estimators::EstimateBatch;
use crate::objectives::QuadraticTarget;
use crate::weights::SimplexWeights;

/// Minimum number of positive samples a rate fit accepts.
pub const MIN_FIT_POINTS: usize = 10;

/// `(1/m) sum_i |sum_k w_k D_k(x_i)|^2`.
pub fn grad_norm(batch: &EstimateBatch, w: &SimplexWeights) -> Result<f64> {
    let (m, k, d) = (batch.num_particles(), batch.num_objectives(), batch.dim());
    if w.len() != k {
        return Err(Error::invalid(format!("{} weights for {k} objectives", w.len())));
    }
    let mut total = 0.0;
    let mut row = vec![0.0; d];
    for i in 0..m {
        row.iter_mut().for_each(|v| *v = 0.0);
        for (kk, &wk) in w.as_slice().iter().enumerate() {
            for (r, v) in row.iter_mut().zip(batch.get(i, kk)) {
                *r += wk * v;
            }
        }
        total += row.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(total / m as f64)
}

/// Axis-aligned box `[lo, hi]` searched by [`merit_euclidean`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SearchBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::invalid("search box bounds must be non-empty and equal length"));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b))
        {
            return Err(Error::invalid("search box needs finite bounds with lo <= hi"));
        }
        Ok(SearchBox { lo, hi })
    }

    /// Cube `[-r, r]^d`.
    pub fn cube(d: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r; d], vec![r; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }
}

/// Brute-force merit `sup_q min_k (f_k(x) - f_k(q))`, clamped at 0, with the
/// supremum taken over a regular grid of spacing at most `resolution`.
///
/// Every axis is split into `ceil(len / resolution)` equal cells and the grid
/// includes both endpoints. The grid value never exceeds the exact merit.
pub fn merit_euclidean(
    x: &[f64],
    objectives: &[&QuadraticTarget],
    search_box: &SearchBox,
    resolution: f64,
) -> Result<f64> {
    if objectives.is_empty() {
        return Err(Error::invalid("merit needs at least one objective"));
    }
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::invalid(format!(
            "grid resolution must be positive, got {resolution}"
        )));
    }
    let d = search_box.dim();
    if x.len() != d || objectives.iter().any(|f| f.dim() != d) {
        return Err(Error::invalid(
            "point, objectives and search box must share one dimension",
        ));
    }
    if let Some(k) = objectives.iter().position(|f| !search_box.contains(f.center())) {
        return Err(Error::invalid(format!(
            "search box does not contain the center of objective {k}"
        )));
    }

    let at_x: Vec<f64> = objectives.iter().map(|f| f.value(x)).collect();
    let cells: Vec<usize> = search_box
        .lo
        .iter()
        .zip(&search_box.hi)
        .map(|(a, b)| (((b - a) / resolution).ceil() as usize).max(1))
        .collect();
    let spacing: Vec<f64> = search_box
        .lo
        .iter()
        .zip(&search_box.hi)
        .zip(&cells)
        .map(|((a, b), n)| (b - a) / *n as f64)
        .collect();

    let mut index = vec![0usize; d];
    let mut q = search_box.lo.clone();
    let mut best = f64::NEG_INFINITY;
    loop {
        let gap = objectives
            .iter()
            .zip(&at_x)
            .map(|(f, fx)| fx - f.value(&q))
            .fold(f64::INFINITY, f64::min);
        if gap > best {
            best = gap;
        }
        // odometer over the grid, axis 0 fastest
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(best.max(0.0));
            }
            index[axis] += 1;
            if index[axis] <= cells[axis] {
                q[axis] = search_box.lo[axis] + index[axis] as f64 * spacing[axis];
                break;
            }
            index[axis] = 0;
            q[axis] = search_box.lo[axis];
            axis += 1;
        }
    }
}

fn window_points(series: &[(f64, f64)], window: (f64, f64), log_t: bool) -> Result<Vec<(f64, f64)>> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, v)| *t >= window.0 && *t <= window.1 && *v > 0.0 && v.is_finite() && (!log_t || *t > 0.0))
        .map(|&(t, v)| (if log_t { t.ln() } else { t }, v.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_POINTS,
            found: pts.len(),
        });
    }
    Ok(pts)
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Least-squares slope of `ln(value)` against `ln(t)` over `window`.
pub fn fit_rate_slope(series: &[(f64, f64)], window: (f64, f64)) -> Result<f64> {
    Ok(least_squares_slope(&window_points(series, window, true)?))
}

/// Least-squares slope of `ln(value)` against `t` over `window`.
pub fn fit_exp_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<f64> {
    Ok(least_squares_slope(&window_points(series, window, false)?))
}

/// One logged iteration of a trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub iter: usize,
    pub grad_norm: f64,
    /// Mean potential `(1/m) sum_i f_k(x_i)` per objective.
    pub objectives: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub method: String,
    pub step_size: f64,
    pub seed: u64,
    pub trial_index: u64,
    pub series: Vec<SeriesPoint>,
    pub final_positions: Matrix,
    /// Iteration at which the run left the finite/bounded regime, if it did.
    pub diverged_at: Option<usize>,
}

impl TrialRecord {
    pub fn final_grad_norm(&self) -> Option<f64> {
        self.series.last().map(|p| p.grad_norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorKind;

    fn half_square(c: f64) -> QuadraticTarget {
        QuadraticTarget::isotropic(vec![c]).unwrap()
    }

    #[test]
    fn grad_norm_examples() {
        let zero = EstimateBatch::zeros(3, 2, 2, EstimatorKind::Svgd);
        assert_eq!(grad_norm(&zero, &SimplexWeights::uniform(2)).unwrap(), 0.0);
        let unit =
            EstimateBatch::from_nested(&[vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]], EstimatorKind::Svgd).unwrap();
        assert_eq!(grad_norm(&unit, &SimplexWeights::uniform(1)).unwrap(), 1.0);
        assert!(grad_norm(&unit, &SimplexWeights::uniform(2)).is_err());
    }

    #[test]
    fn merit_single_objective_is_optimality_gap() {
        let f = half_square(0.0);
        let b = SearchBox::cube(1, 5.0).unwrap();
        let v = merit_euclidean(&[2.0], &[&f], &b, 1e-3).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn merit_vanishes_on_pareto_set() {
        let (f1, f2) = (half_square(1.0), half_square(-1.0));
        let b = SearchBox::cube(1, 5.0).unwrap();
        for x in [-1.0, -0.5, 0.0, 0.3, 1.0] {
            assert_eq!(merit_euclidean(&[x], &[&f1, &f2], &b, 1e-3).unwrap(), 0.0);
        }
    }

    #[test]
    fn merit_outside_pareto_set() {
        // q = 1 attains min(2 - 0, 8 - 2) = 2
        let (f1, f2) = (half_square(1.0), half_square(-1.0));
        let b = SearchBox::cube(1, 5.0).unwrap();
        let v = merit_euclidean(&[3.0], &[&f1, &f2], &b, 1e-4).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn merit_argument_errors() {
        let f = half_square(0.0);
        let b = SearchBox::cube(1, 5.0).unwrap();
        assert!(merit_euclidean(&[0.0], &[], &b, 1e-3).is_err());
        assert!(merit_euclidean(&[0.0], &[&f], &b, 0.0).is_err());
        let far = half_square(9.0);
        assert!(merit_euclidean(&[0.0], &[&far], &b, 1e-3).is_err());
    }

    #[test]
    fn merit_two_dimensional_grid() {
        let f1 = QuadraticTarget::isotropic(vec![1.0, 0.0]).unwrap();
        let f2 = QuadraticTarget::isotropic(vec![-1.0, 0.0]).unwrap();
        let b = SearchBox::cube(2, 3.0).unwrap();
        // on the segment between the centers
        assert_eq!(merit_euclidean(&[0.2, 0.0], &[&f1, &f2], &b, 0.05).unwrap(), 0.0);
        // directly above the origin both gaps shrink by moving to (0, 0): 1/2 * 4
        let v = merit_euclidean(&[0.0, 2.0], &[&f1, &f2], &b, 0.05).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn power_law_slopes() {
        let inv: Vec<(f64, f64)> = (10..=100).map(|t| (t as f64, 1.0 / t as f64)).collect();
        assert!((fit_rate_slope(&inv, (10.0, 100.0)).unwrap() + 1.0).abs() < 1e-6);
        let inv2: Vec<(f64, f64)> = (10..=100).map(|t| (t as f64, 5.0 / (t * t) as f64)).collect();
        assert!((fit_rate_slope(&inv2, (10.0, 100.0)).unwrap() + 2.0).abs() < 1e-6);
    }

    #[test]
    fn exponential_series_fits() {
        let ts: Vec<f64> = (0..=100).map(|i| 1.0 + 4.0 * i as f64 / 100.0).collect();
        let e2: Vec<(f64, f64)> = ts.iter().map(|&t| (t, (-2.0 * t).exp())).collect();
        assert!((fit_exp_rate(&e2, (1.0, 5.0)).unwrap() + 2.0).abs() < 1e-6);
        let e05: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 3.0 * (-0.5 * t).exp())).collect();
        assert!((fit_exp_rate(&e05, (1.0, 5.0)).unwrap() + 0.5).abs() < 1e-6);
    }

    #[test]
    fn exponential_decay_looks_steep_on_log_log_axes() {
        // closed-form regression of -t on ln t over a uniform grid in [1, 5]
        let ts: Vec<f64> = (0..=400).map(|i| 1.0 + 4.0 * i as f64 / 400.0).collect();
        let series: Vec<(f64, f64)> = ts.iter().map(|&t| (t, (-t).exp())).collect();
        let n = ts.len() as f64;
        let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let mx = lx.iter().sum::<f64>() / n;
        let my = -ts.iter().sum::<f64>() / n;
        let sxy: f64 = lx.iter().zip(&ts).map(|(x, t)| (x - mx) * (-t - my)).sum();
        let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
        let expected = sxy / sxx;
        let slope = fit_rate_slope(&series, (1.0, 5.0)).unwrap();
        assert!((slope - expected).abs() < 1e-9);
        assert!(slope < -2.0, "{slope}");
    }

    #[test]
    fn noisy_exponential_rate() {
        let series: Vec<(f64, f64)> = (0..=200)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, (-t).exp() * (1.0 + 0.01 * t.sin()))
            })
            .collect();
        let r = fit_exp_rate(&series, (0.0, 20.0)).unwrap();
        assert!((r + 1.0).abs() < 0.02, "{r}");
    }

    #[test]
    fn too_few_points_is_an_error() {
        let series: Vec<(f64, f64)> = (1..=9).map(|t| (t as f64, 1.0 / t as f64)).collect();
        assert!(matches!(
            fit_rate_slope(&series, (0.0, 100.0)),
            Err(Error::InsufficientData { needed: 10, found: 9 })
        ));
        let zeros: Vec<(f64, f64)> = (1..=20).map(|t| (t as f64, 0.0)).collect();
        assert!(fit_exp_rate(&zeros, (0.0, 100.0)).is_err());
    }
}
