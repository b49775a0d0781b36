//! Baseline nonlinear feature encoder.
//!
//! Maps an n-dimensional feature vector into hyperspace via
//! `phi(F) = cos(F B + b) .* sin(F B)` with `B` an n x D Gaussian projection
//! and `b` uniform phases in `[0, 2 pi]`. The product is elementwise; nearby
//! inputs land on nearby hypervectors.

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::{gaussian_f64, rng_from_seed, uniform_in};

use super::vector::Hypervector;

/// Apply the nonlinear encoding for explicit projection parameters.
///
/// `b_mat` is n x D (feature dim by hyperdimension), `b_bias` has length D
/// with entries in `[0, 2 pi]`.
pub fn nonlinear_encode(f: &[f64], b_mat: &Mat, b_bias: &[f64]) -> Result<Hypervector> {
    if f.len() != b_mat.rows() {
        return Err(Error::invalid(format!(
            "feature length {} does not match projection rows {}",
            f.len(),
            b_mat.rows()
        )));
    }
    if b_bias.len() != b_mat.cols() {
        return Err(Error::invalid(format!(
            "bias length {} does not match projection cols {}",
            b_bias.len(),
            b_mat.cols()
        )));
    }
    // (F B)_j = sum_i F_i B_ij
    let proj = b_mat.tr_matvec(f);
    let values = proj
        .iter()
        .zip(b_bias)
        .map(|(&p, &b)| (p + b).cos() * p.sin())
        .collect();
    Ok(Hypervector::from_values_unchecked(values))
}

/// A sampled encoder instance: `B ~ N(0,1)`, `b ~ U[0, 2 pi]`.
#[derive(Clone, Debug)]
pub struct NonlinearEncoder {
    b_mat: Mat,
    b_bias: Vec<f64>,
}

impl NonlinearEncoder {
    pub fn new(seed: u64, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("encoder dimensions must be >= 1"));
        }
        let mut rng = rng_from_seed(seed);
        let b_mat = Mat::from_fn(n, d, |_, _| gaussian_f64(&mut rng));
        let b_bias = (0..d)
            .map(|_| uniform_in(&mut rng, 0.0, std::f64::consts::TAU))
            .collect();
        Ok(NonlinearEncoder { b_mat, b_bias })
    }

    pub fn input_dim(&self) -> usize {
        self.b_mat.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.b_mat.cols()
    }

    pub fn encode(&self, f: &[f64]) -> Result<Hypervector> {
        nonlinear_encode(f, &self.b_mat, &self.b_bias)
    }
}
