//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the library's kernel, estimator or solver code.

#![allow(dead_code, clippy::needless_range_loop)]

use mwgrad::rng::ParticleRng;

#[derive(Clone, Debug)]
pub struct Instance {
    pub positions: Vec<Vec<f64>>,
    /// Isotropic quadratic centers, one per objective.
    pub centers: Vec<Vec<f64>>,
    pub h: f64,
}

pub fn uniform(rng: &mut ParticleRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform_open0()
}

pub fn random_instance(seed: u64, max_m: usize, max_k: usize, max_d: usize) -> Instance {
    let mut rng = ParticleRng::new(seed, 99);
    let m = 1 + (rng.next_u64() % max_m as u64) as usize;
    let k = 1 + (rng.next_u64() % max_k as u64) as usize;
    let d = 1 + (rng.next_u64() % max_d as u64) as usize;
    let positions = (0..m)
        .map(|_| (0..d).map(|_| 1.5 * rng.standard_normal()).collect())
        .collect();
    let centers = (0..k)
        .map(|_| (0..d).map(|_| uniform(&mut rng, -3.0, 3.0)).collect())
        .collect();
    let h = uniform(&mut rng, 0.5, 2.0);
    Instance { positions, centers, h }
}

pub fn rbf(x: &[f64], y: &[f64], h: f64) -> f64 {
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    (-s / (2.0 * h * h)).exp()
}

/// d/dy of rbf(x, y).
pub fn rbf_grad_y(x: &[f64], y: &[f64], h: f64) -> Vec<f64> {
    let k = rbf(x, y, h);
    x.iter().zip(y).map(|(a, b)| (a - b) / (h * h) * k).collect()
}

/// Gradient of 0.5 |x - c|^2.
pub fn quad_grad(x: &[f64], c: &[f64]) -> Vec<f64> {
    x.iter().zip(c).map(|(a, b)| a - b).collect()
}

/// `out[i][k]` per particle and objective, `scale` multiplying the sums.
pub fn naive_svgd(inst: &Instance, scale: f64) -> Vec<Vec<Vec<f64>>> {
    let m = inst.positions.len();
    let d = inst.positions[0].len();
    let mut out = vec![vec![vec![0.0; d]; inst.centers.len()]; m];
    for i in 0..m {
        for (k, c) in inst.centers.iter().enumerate() {
            for j in 0..m {
                let kij = rbf(&inst.positions[i], &inst.positions[j], inst.h);
                let g = quad_grad(&inst.positions[j], c);
                let dk = rbf_grad_y(&inst.positions[i], &inst.positions[j], inst.h);
                for a in 0..d {
                    out[i][k][a] += scale * (kij * g[a] - dk[a]);
                }
            }
        }
    }
    out
}

pub fn naive_blob(inst: &Instance) -> Vec<Vec<Vec<f64>>> {
    let m = inst.positions.len();
    let d = inst.positions[0].len();
    let p = &inst.positions;
    let row_sum = |i: usize| (0..m).map(|l| rbf(&p[i], &p[l], inst.h)).sum::<f64>();
    let mut out = vec![vec![vec![0.0; d]; inst.centers.len()]; m];
    for i in 0..m {
        for (k, c) in inst.centers.iter().enumerate() {
            out[i][k] = quad_grad(&p[i], c);
            for j in 0..m {
                // grad wrt the first argument is minus the grad wrt the second
                let gy = rbf_grad_y(&p[i], &p[j], inst.h);
                for a in 0..d {
                    out[i][k][a] += -gy[a] / row_sum(j);
                    out[i][k][a] += -gy[a] / row_sum(i);
                }
            }
        }
    }
    out
}

pub fn random_psd(rng: &mut ParticleRng, k: usize, rank: usize) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..k).map(|_| rng.standard_normal()).collect())
        .collect();
    let mut g = vec![vec![0.0; k]; k];
    for a in 0..k {
        for c in 0..k {
            g[a][c] = (0..rank).map(|r| b[r][a] * b[r][c]).sum::<f64>() / k as f64;
        }
    }
    g
}

pub fn half_quad(g: &[Vec<f64>], w: &[f64]) -> f64 {
    let k = w.len();
    let mut s = 0.0;
    for a in 0..k {
        for c in 0..k {
            s += w[a] * g[a][c] * w[c];
        }
    }
    0.5 * s
}

fn simplex_grid(k: usize, n: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
        if pos == k - 1 {
            cur[pos] = left;
            visit(cur);
            return;
        }
        for c in 0..=left {
            cur[pos] = c;
            rec(pos + 1, left - c, cur, k, visit);
        }
    }
    let mut cur = vec![0; k];
    rec(0, n, &mut cur, k, &mut visit);
}

/// Minimum of `0.5 w^T G w` over the simplex: a full grid with `n` cells
/// per edge, then repeated local grids around the incumbent with a
/// halving step.
pub fn brute_force_simplex(g: &[Vec<f64>], n: usize) -> (f64, Vec<f64>) {
    let k = g.len();
    let mut best = (f64::INFINITY, vec![0.0; k]);
    simplex_grid(k, n, |c| {
        let w: Vec<f64> = c.iter().map(|&v| v as f64 / n as f64).collect();
        let v = half_quad(g, &w);
        if v < best.0 {
            best = (v, w);
        }
    });
    let mut step = 1.0 / n as f64;
    while step > 1e-9 {
        let mut improved = true;
        while improved {
            improved = false;
            for a in 0..k {
                for b in 0..k {
                    if a == b {
                        continue;
                    }
                    // move mass from b to a
                    let moved = step.min(best.1[b]);
                    if moved <= 0.0 {
                        continue;
                    }
                    let mut w = best.1.clone();
                    w[a] += moved;
                    w[b] -= moved;
                    let v = half_quad(g, &w);
                    if v < best.0 - 1e-18 {
                        best = (v, w);
                        improved = true;
                    }
                }
            }
        }
        step *= 0.5;
    }
    best
}

pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|a| {
            let mut p = x.to_vec();
            let mut q = x.to_vec();
            p[a] += step;
            q[a] -= step;
            (f(&p) - f(&q)) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|b|, 1)` in the Euclidean norm.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}
