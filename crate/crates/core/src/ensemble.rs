//! Particle ensembles and the dense row-major matrix they are stored in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::ParticleRng;

/// Dense row-major `rows x cols` matrix. Row `i` is particle `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Particle positions and velocities at iteration `n`.
///
/// Positions represent the empirical measure; velocities carry the momentum
/// field evaluated at each particle and stay zero for non-accelerated runs.
/// Steps never mutate an ensemble in place, they return a new one.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    positions: Matrix,
    velocities: Matrix,
    iteration: usize,
}

impl ParticleEnsemble {
    /// Ensemble at rest (zero velocities, iteration 0) at the given positions.
    pub fn at_rest(positions: Matrix) -> Result<Self> {
        if positions.rows() == 0 || positions.cols() == 0 {
            return Err(Error::invalid("ensemble needs m >= 1 particles and d >= 1"));
        }
        if !positions.is_finite() {
            return Err(Error::invalid("non-finite particle position"));
        }
        let velocities = Matrix::zeros(positions.rows(), positions.cols());
        Ok(ParticleEnsemble {
            positions,
            velocities,
            iteration: 0,
        })
    }

    pub fn from_parts(positions: Matrix, velocities: Matrix, iteration: usize) -> Result<Self> {
        if positions.shape() != velocities.shape() {
            return Err(Error::invalid(format!(
                "positions {:?} and velocities {:?} differ in shape",
                positions.shape(),
                velocities.shape()
            )));
        }
        let mut ens = Self::at_rest(positions)?;
        if !velocities.is_finite() {
            return Err(Error::invalid("non-finite particle velocity"));
        }
        ens.velocities = velocities;
        ens.iteration = iteration;
        Ok(ens)
    }

    pub(crate) fn from_parts_unchecked(positions: Matrix, velocities: Matrix, iteration: usize) -> Self {
        ParticleEnsemble {
            positions,
            velocities,
            iteration,
        }
    }

    pub fn positions(&self) -> &Matrix {
        &self.positions
    }

    pub fn velocities(&self) -> &Matrix {
        &self.velocities
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn num_particles(&self) -> usize {
        self.positions.rows()
    }

    pub fn dim(&self) -> usize {
        self.positions.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.positions.is_finite() && self.velocities.is_finite()
    }
}

/// `m` i.i.d. standard normal particles in `R^d` from stream 0 of `seed`.
pub fn init_ensemble(m: usize, d: usize, seed: u64) -> Result<ParticleEnsemble> {
    init_ensemble_stream(m, d, seed, 0)
}

/// Like [`init_ensemble`] but drawing from ChaCha stream `stream`; trial
/// runners pass the trial index here. Draws fill positions row by row.
pub fn init_ensemble_stream(m: usize, d: usize, seed: u64, stream: u64) -> Result<ParticleEnsemble> {
    if m == 0 || d == 0 {
        return Err(Error::invalid(format!(
            "init_ensemble needs m >= 1 and d >= 1, got m={m}, d={d}"
        )));
    }
    let mut rng = ParticleRng::new(seed, stream);
    let data = (0..m * d).map(|_| rng.standard_normal()).collect();
    ParticleEnsemble::at_rest(Matrix::from_vec(m, d, data)?)
}
