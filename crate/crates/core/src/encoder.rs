//! Trainable context-aware encoder from feature space to hyperspace.
//!
//! `phi = E_gen . tanh . E_ext` maps a z-dimensional feature vector through a
//! z' bottleneck (z > z') into R^D. Training minimizes
//! `L = L_c + lambda_rec * L_rec` where `L_c` is the mean cross-entropy of
//! `softmax(phi(f)^T C)` against pseudo-labels and `L_rec` the mean squared
//! reconstruction error of the affine read-out `E_rec`. All gradients are
//! derived by hand and checked against central finite differences in tests.

use crate::error::{Error, Result};
use crate::hdc::Hypervector;
use crate::mat::{axpy, dot, Mat};
use crate::rng::{derive_seed, gaussian_f64, rng_from_seed, shuffle, Rng};

/// All trainable parameters. Weight matrices are stored output-by-input.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    /// E_ext weights, z' x z.
    pub w_ext: Mat,
    pub b_ext: Vec<f64>,
    /// E_gen weights, D x z'.
    pub w_gen: Mat,
    pub b_gen: Vec<f64>,
    /// E_rec weights, z x D.
    pub w_rec: Mat,
    pub b_rec: Vec<f64>,
    /// Class hypervectors, D x c; logits are h^T C.
    pub c_mat: Mat,
}

impl EncoderParams {
    pub fn z(&self) -> usize {
        self.w_ext.cols()
    }

    pub fn z_prime(&self) -> usize {
        self.w_ext.rows()
    }

    pub fn d(&self) -> usize {
        self.w_gen.rows()
    }

    pub fn classes(&self) -> usize {
        self.c_mat.cols()
    }

    /// Apply one gradient-descent step: params -= lr * grads.
    pub fn step(&mut self, grads: &EncoderGrads, lr: f64) {
        self.w_ext.add_scaled(&grads.w_ext, -lr);
        axpy(&mut self.b_ext, &grads.b_ext, -lr);
        self.w_gen.add_scaled(&grads.w_gen, -lr);
        axpy(&mut self.b_gen, &grads.b_gen, -lr);
        self.w_rec.add_scaled(&grads.w_rec, -lr);
        axpy(&mut self.b_rec, &grads.b_rec, -lr);
        self.c_mat.add_scaled(&grads.c_mat, -lr);
    }
}

/// Gradients, shaped exactly like [`EncoderParams`].
#[derive(Clone, Debug)]
pub struct EncoderGrads {
    pub w_ext: Mat,
    pub b_ext: Vec<f64>,
    pub w_gen: Mat,
    pub b_gen: Vec<f64>,
    pub w_rec: Mat,
    pub b_rec: Vec<f64>,
    pub c_mat: Mat,
}

impl EncoderGrads {
    fn zeros_like(p: &EncoderParams) -> Self {
        EncoderGrads {
            w_ext: Mat::zeros(p.w_ext.rows(), p.w_ext.cols()),
            b_ext: vec![0.0; p.b_ext.len()],
            w_gen: Mat::zeros(p.w_gen.rows(), p.w_gen.cols()),
            b_gen: vec![0.0; p.b_gen.len()],
            w_rec: Mat::zeros(p.w_rec.rows(), p.w_rec.cols()),
            b_rec: vec![0.0; p.b_rec.len()],
            c_mat: Mat::zeros(p.c_mat.rows(), p.c_mat.cols()),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w_ext.norm_sq()
            + dot(&self.b_ext, &self.b_ext)
            + self.w_gen.norm_sq()
            + dot(&self.b_gen, &self.b_gen)
            + self.w_rec.norm_sq()
            + dot(&self.b_rec, &self.b_rec)
            + self.c_mat.norm_sq())
        .sqrt()
    }
}

/// Training configuration.
#[derive(Clone, Debug)]
pub struct EncoderTrainConfig {
    pub lambda_rec: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl EncoderTrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda_rec >= 0.0) {
            return Err(Error::invalid("lambda_rec must be >= 0"));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning rate must be >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        Ok(())
    }
}

/// Per-epoch loss trace entry.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderLoss {
    pub total: f64,
    pub l_c: f64,
    pub l_rec: f64,
}

/// Initialize parameters: Gaussian weights scaled by `1/sqrt(fan_in)`
/// (fan_in = input dimension of each map; D for the class matrix), zero
/// biases. Deterministic in the seed.
pub fn encoder_init(seed: u64, z: usize, z_prime: usize, d: usize, c: usize) -> Result<EncoderParams> {
    if z_prime < 1 || z <= z_prime {
        return Err(Error::invalid(format!(
            "bottleneck requires z > z' >= 1, got z = {z}, z' = {z_prime}"
        )));
    }
    if d < z {
        return Err(Error::invalid(format!(
            "hyperdimensionality must satisfy D >= z, got D = {d}, z = {z}"
        )));
    }
    if c < 2 {
        return Err(Error::invalid("class count must be >= 2"));
    }
    let mut rng = rng_from_seed(seed);
    let mut sample = |rows: usize, cols: usize, fan_in: usize| {
        let scale = 1.0 / (fan_in as f64).sqrt();
        Mat::from_fn(rows, cols, |_, _| scale * gaussian_f64(&mut rng))
    };
    let w_ext = sample(z_prime, z, z);
    let w_gen = sample(d, z_prime, z_prime);
    let w_rec = sample(z, d, d);
    let c_mat = sample(d, c, d);
    Ok(EncoderParams {
        w_ext,
        b_ext: vec![0.0; z_prime],
        w_gen,
        b_gen: vec![0.0; d],
        w_rec,
        b_rec: vec![0.0; z],
        c_mat,
    })
}

struct Forward {
    bottleneck: Vec<f64>, // tanh(E_ext f)
    h: Vec<f64>,          // phi(f)
    recon: Vec<f64>,      // E_rec(phi(f))
    probs: Vec<f64>,      // softmax(h^T C)
    log_prob_label: f64,
}

fn forward_full(params: &EncoderParams, f: &[f64], label: usize) -> Result<Forward> {
    if f.len() != params.z() {
        return Err(Error::invalid(format!(
            "feature length {} does not match z = {}",
            f.len(),
            params.z()
        )));
    }
    if label >= params.classes() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            params.classes()
        )));
    }
    let mut u = params.w_ext.matvec(f);
    axpy(&mut u, &params.b_ext, 1.0);
    let bottleneck: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
    let mut h = params.w_gen.matvec(&bottleneck);
    axpy(&mut h, &params.b_gen, 1.0);
    let mut recon = params.w_rec.matvec(&h);
    axpy(&mut recon, &params.b_rec, 1.0);

    // logits_j = h . C[:, j]
    let logits = params.c_mat.tr_matvec(&h);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let denom: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|&e| e / denom).collect();
    let log_prob_label = logits[label] - max - denom.ln();

    Ok(Forward {
        bottleneck,
        h,
        recon,
        probs,
        log_prob_label,
    })
}

/// Map a feature vector to its hypervector.
pub fn encoder_forward(params: &EncoderParams, f: &[f64]) -> Result<Hypervector> {
    if f.len() != params.z() {
        return Err(Error::invalid(format!(
            "feature length {} does not match z = {}",
            f.len(),
            params.z()
        )));
    }
    let mut u = params.w_ext.matvec(f);
    axpy(&mut u, &params.b_ext, 1.0);
    let bottleneck: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
    let mut h = params.w_gen.matvec(&bottleneck);
    axpy(&mut h, &params.b_gen, 1.0);
    Hypervector::new(h)
}

/// Loss over a batch: `(total, l_c, l_rec)` with
/// `total = l_c + lambda_rec * l_rec`, both components batch means.
pub fn encoder_loss(
    params: &EncoderParams,
    batch: &[(Vec<f64>, usize)],
    lambda_rec: f64,
) -> Result<EncoderLoss> {
    if batch.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    let m = batch.len() as f64;
    let mut l_c = 0.0;
    let mut l_rec = 0.0;
    for (f, label) in batch {
        let fwd = forward_full(params, f, *label)?;
        l_c -= fwd.log_prob_label;
        l_rec += f
            .iter()
            .zip(&fwd.recon)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    l_c /= m;
    l_rec /= m;
    Ok(EncoderLoss {
        total: l_c + lambda_rec * l_rec,
        l_c,
        l_rec,
    })
}

/// Analytic gradients of the total loss for every parameter block.
pub fn encoder_grad(
    params: &EncoderParams,
    batch: &[(Vec<f64>, usize)],
    lambda_rec: f64,
) -> Result<EncoderGrads> {
    if batch.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    let m = batch.len() as f64;
    let inv_m = 1.0 / m;
    let mut grads = EncoderGrads::zeros_like(params);

    for (f, label) in batch {
        let fwd = forward_full(params, f, *label)?;

        // d l_c / d logits = probs - onehot(label), scaled by 1/M.
        let mut dlogits = fwd.probs.clone();
        dlogits[*label] -= 1.0;
        for v in dlogits.iter_mut() {
            *v *= inv_m;
        }
        // dC = h dlogits^T; dh_c = C dlogits.
        grads.c_mat.add_outer(&fwd.h, &dlogits, 1.0);
        let mut dh = params.c_mat.matvec(&dlogits);

        // Reconstruction: d l_rec / d recon = 2 (recon - f), scaled by
        // lambda_rec / M.
        let drecon: Vec<f64> = fwd
            .recon
            .iter()
            .zip(f)
            .map(|(r, x)| 2.0 * lambda_rec * inv_m * (r - x))
            .collect();
        grads.w_rec.add_outer(&drecon, &fwd.h, 1.0);
        axpy(&mut grads.b_rec, &drecon, 1.0);
        axpy(&mut dh, &params.w_rec.tr_matvec(&drecon), 1.0);

        // Through E_gen.
        grads.w_gen.add_outer(&dh, &fwd.bottleneck, 1.0);
        axpy(&mut grads.b_gen, &dh, 1.0);
        let dt = params.w_gen.tr_matvec(&dh);

        // Through tanh: du = dt * (1 - t^2).
        let du: Vec<f64> = dt
            .iter()
            .zip(&fwd.bottleneck)
            .map(|(g, t)| g * (1.0 - t * t))
            .collect();
        grads.w_ext.add_outer(&du, f, 1.0);
        axpy(&mut grads.b_ext, &du, 1.0);
    }
    Ok(grads)
}

/// Plain minibatch gradient descent with a fixed learning rate and
/// seed-deterministic shuffling. The trace records the full-dataset loss at
/// the end of each epoch.
pub fn encoder_train(
    mut params: EncoderParams,
    dataset: &[(Vec<f64>, usize)],
    config: &EncoderTrainConfig,
) -> Result<(EncoderParams, Vec<EncoderLoss>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let mut shuffle_rng: Rng = rng_from_seed(derive_seed(config.seed, "encoder-shuffle"));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        shuffle(&mut shuffle_rng, &mut order);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(Vec<f64>, usize)> =
                chunk.iter().map(|&i| dataset[i].clone()).collect();
            let grads = encoder_grad(&params, &batch, config.lambda_rec)?;
            params.step(&grads, config.learning_rate);
        }
        trace.push(encoder_loss(&params, dataset, config.lambda_rec)?);
    }
    Ok((params, trace))
}
