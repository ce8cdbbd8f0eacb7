//! Gaussian RBF kernel `K(x, y) = exp(-|x - y|^2 / (2 h^2))`.

use crate::ensemble::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbfKernel {
    bandwidth: f64,
}

impl RbfKernel {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid(format!(
                "kernel bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(RbfKernel { bandwidth })
    }

    /// Median heuristic: `h^2 = median_{i<j} |x_i - x_j|^2 / (2 ln(m + 1))`.
    /// Falls back to `h = 1` when fewer than two particles or all coincide.
    pub fn median_heuristic(points: &Matrix) -> Self {
        let m = points.rows();
        let mut sq: Vec<f64> = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                sq.push(sq_dist(points.row(i), points.row(j)));
            }
        }
        if sq.is_empty() {
            return RbfKernel { bandwidth: 1.0 };
        }
        sq.sort_by(f64::total_cmp);
        let mid = sq.len() / 2;
        let median = if sq.len().is_multiple_of(2) {
            0.5 * (sq[mid - 1] + sq[mid])
        } else {
            sq[mid]
        };
        let h2 = median / (2.0 * ((m + 1) as f64).ln());
        if h2 > 0.0 && h2.is_finite() {
            RbfKernel { bandwidth: h2.sqrt() }
        } else {
            RbfKernel { bandwidth: 1.0 }
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dims(x, y)?;
        Ok(self.eval_unchecked(x, y))
    }

    /// `grad_y K(x, y) = (x - y) / h^2 * K(x, y)`.
    pub fn grad_second(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dims(x, y)?;
        let k = self.eval_unchecked(x, y);
        let h2 = self.bandwidth * self.bandwidth;
        Ok(x.iter().zip(y).map(|(a, b)| (a - b) / h2 * k).collect())
    }

    /// `grad_x K(x, y) = -grad_y K(x, y)`.
    pub fn grad_first(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.grad_second(x, y)?;
        g.iter_mut().for_each(|v| *v = -*v);
        Ok(g)
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        (-sq_dist(x, y) / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "kernel arguments differ in dimension: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn coincident_points() {
        let k = RbfKernel::new(0.7).unwrap();
        assert_eq!(k.eval(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 1.0);
        assert_eq!(k.grad_second(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn closed_form_values() {
        let k1 = RbfKernel::new(1.0).unwrap();
        assert!((k1.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let k2 = RbfKernel::new(2.0).unwrap();
        assert!((k2.eval(&[0.0, 0.0], &[2.0, 0.0]).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        let g = k1.grad_second(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((g[0] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(RbfKernel::new(0.0).is_err());
        assert!(RbfKernel::new(-1.0).is_err());
        let k = RbfKernel::new(1.0).unwrap();
        assert!(k.eval(&[0.0], &[0.0, 1.0]).is_err());
        assert!(k.grad_second(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn median_heuristic_two_points() {
        // one pair at squared distance 4: h^2 = 4 / (2 ln 3)
        let pts = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let k = RbfKernel::median_heuristic(&pts);
        assert!((k.bandwidth().powi(2) - 4.0 / (2.0 * 3f64.ln())).abs() < 1e-14);
        let single = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert_eq!(RbfKernel::median_heuristic(&single).bandwidth(), 1.0);
    }

    fn pair(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-3.0..3.0f64, d),
            prop::collection::vec(-3.0..3.0f64, d),
        )
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded((x, y) in (1usize..=5).prop_flat_map(pair), h in 0.2..3.0f64) {
            let k = RbfKernel::new(h).unwrap();
            let a = k.eval(&x, &y).unwrap();
            let b = k.eval(&y, &x).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!(a > 0.0 && a <= 1.0);
        }

        #[test]
        fn grad_first_is_negated_grad_second((x, y) in (1usize..=5).prop_flat_map(pair), h in 0.2..3.0f64) {
            let k = RbfKernel::new(h).unwrap();
            let gx = k.grad_first(&x, &y).unwrap();
            let gy = k.grad_second(&x, &y).unwrap();
            for (a, b) in gx.iter().zip(&gy) {
                prop_assert_eq!(*a, -*b);
            }
        }
    }
}
