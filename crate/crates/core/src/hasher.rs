//! Trainable multilinear hyperplane hashing.
//!
//! `L` hyperplanes in the flattened 2D-dimensional scene space produce
//! relaxed codes `H' = tanh(H P^T + b)`; `sign` then yields the bipolar
//! code. Training descends a five-term loss:
//!
//! - `mse`: match pairwise input cosine against `H'_i H'_j^T / L`
//! - `w`: a quartic well pushing pairwise code similarity toward +-1
//! - `q`: quantization pull of every entry toward its sign
//! - `u`: squared row sums, balancing +1s and -1s per code
//! - `o`: rank-order repair between input-space and code-space similarities
//!
//! The order term's case selector is piecewise constant, so it is recomputed
//! each step and frozen during differentiation. All pairwise sums include the
//! diagonal. Gradients are hand-derived and finite-difference checked.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{dot, Mat};
use crate::rng::{derive_seed, gaussian_f64, rng_from_seed, shuffle};

/// `sign` with the tie convention `sign(0) = +1`.
#[inline]
pub fn sign_pm1(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// The hash model: hyperplane matrix `P` (L x 2D) and bias `b` (L).
#[derive(Clone, Debug, PartialEq)]
pub struct HashModel {
    pub p: Mat,
    pub b: Vec<f64>,
}

impl HashModel {
    pub fn l_bits(&self) -> usize {
        self.p.rows()
    }

    pub fn dim2d(&self) -> usize {
        self.p.cols()
    }
}

/// Balance coefficients for the five loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashLossWeights {
    pub lambda_mse: f64,
    pub lambda_w: f64,
    pub lambda_q: f64,
    pub lambda_u: f64,
    pub lambda_o: f64,
}

impl Default for HashLossWeights {
    fn default() -> Self {
        HashLossWeights {
            lambda_mse: 1.0,
            lambda_w: 0.1,
            lambda_q: 0.1,
            lambda_u: 0.01,
            lambda_o: 0.1,
        }
    }
}

/// The five loss terms, used to name ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossTerm {
    Mse,
    WShape,
    Quantization,
    Uniformity,
    Order,
}

impl LossTerm {
    pub const ALL: [LossTerm; 5] = [
        LossTerm::Mse,
        LossTerm::WShape,
        LossTerm::Quantization,
        LossTerm::Uniformity,
        LossTerm::Order,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossTerm::Mse => "mse",
            LossTerm::WShape => "w",
            LossTerm::Quantization => "q",
            LossTerm::Uniformity => "u",
            LossTerm::Order => "o",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossTerm::Mse),
            "w" => Ok(LossTerm::WShape),
            "q" => Ok(LossTerm::Quantization),
            "u" => Ok(LossTerm::Uniformity),
            "o" => Ok(LossTerm::Order),
            other => Err(Error::invalid(format!(
                "unknown loss term `{other}` (expected mse, w, q, u, o)"
            ))),
        }
    }
}

impl HashLossWeights {
    pub fn zero() -> Self {
        HashLossWeights {
            lambda_mse: 0.0,
            lambda_w: 0.0,
            lambda_q: 0.0,
            lambda_u: 0.0,
            lambda_o: 0.0,
        }
    }

    /// Copy with one term's coefficient zeroed (ablation variant).
    pub fn without(mut self, term: LossTerm) -> Self {
        match term {
            LossTerm::Mse => self.lambda_mse = 0.0,
            LossTerm::WShape => self.lambda_w = 0.0,
            LossTerm::Quantization => self.lambda_q = 0.0,
            LossTerm::Uniformity => self.lambda_u = 0.0,
            LossTerm::Order => self.lambda_o = 0.0,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_mse", self.lambda_mse),
            ("lambda_w", self.lambda_w),
            ("lambda_q", self.lambda_q),
            ("lambda_u", self.lambda_u),
            ("lambda_o", self.lambda_o),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Continuous codes in `[-1, 1]`; `hash_forward` outputs lie strictly inside.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedCodes {
    values: Mat,
}

impl RelaxedCodes {
    pub fn new(values: Mat) -> Result<Self> {
        if values.data().iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::invalid("relaxed code entry outside [-1, 1]"));
        }
        Ok(RelaxedCodes { values })
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn l_bits(&self) -> usize {
        self.values.cols()
    }
}

/// Exact bipolar codes over {-1, +1}.
#[derive(Clone, Debug, PartialEq)]
pub struct BipolarCodes {
    values: Mat,
}

impl BipolarCodes {
    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn l_bits(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }
}

/// Initialize with `p_ij ~ N(0,1)` hyperplanes and zero bias (the untrained
/// random-hyperplane baseline).
pub fn hash_init(seed: u64, l_bits: usize, dim2d: usize) -> Result<HashModel> {
    if l_bits < 1 {
        return Err(Error::invalid("l_bits must be >= 1"));
    }
    if dim2d < 2 {
        return Err(Error::invalid("dim2d must be >= 2"));
    }
    let mut rng = rng_from_seed(seed);
    let p = Mat::from_fn(l_bits, dim2d, |_, _| gaussian_f64(&mut rng));
    Ok(HashModel {
        p,
        b: vec![0.0; l_bits],
    })
}

/// Relaxed hash of a batch: `tanh(H P^T + b)` row by row.
pub fn hash_forward(model: &HashModel, h: &Mat) -> Result<RelaxedCodes> {
    if h.cols() != model.dim2d() {
        return Err(Error::invalid(format!(
            "input width {} does not match hyperplane width {}",
            h.cols(),
            model.dim2d()
        )));
    }
    let l = model.l_bits();
    let values = Mat::from_fn(h.rows(), l, |i, j| {
        (dot(h.row(i), model.p.row(j)) + model.b[j]).tanh()
    });
    Ok(RelaxedCodes { values })
}

/// Binarize: entrywise sign with `sign(0) = +1`.
pub fn binarize(codes: &RelaxedCodes) -> BipolarCodes {
    let values = Mat::from_fn(codes.values.rows(), codes.values.cols(), |i, j| {
        sign_pm1(codes.values.get(i, j))
    });
    BipolarCodes { values }
}

/// Pairwise cosine matrix of the rows of `h`. Errors on zero rows.
fn cosine_matrix(h: &Mat) -> Result<Mat> {
    let m = h.rows();
    let mut norms = Vec::with_capacity(m);
    for i in 0..m {
        let n = dot(h.row(i), h.row(i)).sqrt();
        if n == 0.0 {
            return Err(Error::UndefinedSimilarity("batch row"));
        }
        norms.push(n);
    }
    let mut out = Mat::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let c = dot(h.row(i), h.row(j)) / (norms[i] * norms[j]);
            out.set(i, j, c);
            out.set(j, i, c);
        }
    }
    Ok(out)
}

/// Pairwise relaxed-code similarity `H'_i . H'_j / L`.
fn code_similarity_matrix(codes: &RelaxedCodes) -> Mat {
    let m = codes.rows();
    let l = codes.l_bits() as f64;
    let mut out = Mat::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let s = dot(codes.values.row(i), codes.values.row(j)) / l;
            out.set(i, j, s);
            out.set(j, i, s);
        }
    }
    out
}

/// Numerical-correspondence loss: mean squared gap between input cosine and
/// scaled code similarity over all ordered pairs, diagonal included.
pub fn loss_mse(h: &Mat, codes: &RelaxedCodes) -> Result<f64> {
    check_batch(h, codes)?;
    let cos = cosine_matrix(h)?;
    let sim = code_similarity_matrix(codes);
    let m = h.rows();
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            let gap = cos.get(i, j) - sim.get(i, j);
            sum += gap * gap;
        }
    }
    Ok(sum / (m * m) as f64)
}

/// W-shape loss: `(s+1)^2 (s-1)^2` per pair, zero only at `s = +-1`.
pub fn loss_w(codes: &RelaxedCodes) -> f64 {
    let sim = code_similarity_matrix(codes);
    let m = codes.rows();
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            let s = sim.get(i, j);
            let q = (s + 1.0) * (s - 1.0);
            sum += q * q;
        }
    }
    sum / (m * m) as f64
}

/// Uniformity loss: mean squared row sum; zero iff every code row balances
/// its +1s and -1s.
pub fn loss_u(codes: &RelaxedCodes) -> f64 {
    let m = codes.rows();
    let mut sum = 0.0;
    for i in 0..m {
        let row_sum: f64 = codes.values.row(i).iter().sum();
        sum += row_sum * row_sum;
    }
    sum / m as f64
}

/// Quantization loss: mean squared distance of each entry to its sign.
pub fn loss_q(codes: &RelaxedCodes) -> f64 {
    let m = codes.rows();
    let l = codes.l_bits();
    let mut sum = 0.0;
    for v in codes.values.data() {
        let gap = v - sign_pm1(*v);
        sum += gap * gap;
    }
    sum / (m * l) as f64
}

/// Per-pair classification of the order term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderClass {
    /// The pair's rank count dropped in code space: penalize low similarity.
    Reduced,
    /// The pair's rank count rose in code space: penalize high similarity.
    Increased,
    Unchanged,
}

/// The frozen M x M selector matrix for the order loss.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderSelector {
    classes: Vec<OrderClass>,
    m: usize,
}

impl OrderSelector {
    /// Build from an explicit row-major class list (M x M entries).
    pub fn from_classes(classes: Vec<OrderClass>, m: usize) -> Result<Self> {
        if classes.len() != m * m {
            return Err(Error::invalid(format!(
                "selector needs {m}x{m} entries, got {}",
                classes.len()
            )));
        }
        Ok(OrderSelector { classes, m })
    }

    pub fn get(&self, i: usize, j: usize) -> OrderClass {
        self.classes[i * self.m + j]
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn count(&self, class: OrderClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }
}

/// Classify every pair `(i, j)` by comparing, with strict inequalities, the
/// number of `k` with `s'_ij > s'_ik` against the number with
/// `cos_ij > cos_ik`.
pub fn order_weights(h: &Mat, codes: &RelaxedCodes) -> Result<OrderSelector> {
    check_batch(h, codes)?;
    let m = h.rows();
    if m < 2 {
        return Err(Error::invalid("order weights require a batch of size >= 2"));
    }
    let cos = cosine_matrix(h)?;
    let sim = code_similarity_matrix(codes);
    let mut classes = Vec::with_capacity(m * m);
    for i in 0..m {
        let cos_row = cos.row(i);
        let sim_row = sim.row(i);
        for j in 0..m {
            let n_code = sim_row.iter().filter(|&&v| sim_row[j] > v).count();
            let n_input = cos_row.iter().filter(|&&v| cos_row[j] > v).count();
            classes.push(match n_code.cmp(&n_input) {
                std::cmp::Ordering::Less => OrderClass::Reduced,
                std::cmp::Ordering::Greater => OrderClass::Increased,
                std::cmp::Ordering::Equal => OrderClass::Unchanged,
            });
        }
    }
    Ok(OrderSelector { classes, m })
}

/// Order loss with a caller-supplied (frozen) selector.
pub fn loss_o_with_selector(codes: &RelaxedCodes, selector: &OrderSelector) -> Result<f64> {
    let m = codes.rows();
    if selector.m != m {
        return Err(Error::invalid("selector size does not match batch"));
    }
    let sim = code_similarity_matrix(codes);
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            let s = sim.get(i, j);
            sum += match selector.get(i, j) {
                OrderClass::Reduced => (1.0 - s) * (1.0 - s),
                OrderClass::Increased => (1.0 + s) * (1.0 + s),
                OrderClass::Unchanged => 0.0,
            };
        }
    }
    Ok(sum / (m * m) as f64)
}

/// Rank-order loss; recomputes the selector from the current codes.
pub fn loss_o(h: &Mat, codes: &RelaxedCodes) -> Result<f64> {
    let selector = order_weights(h, codes)?;
    loss_o_with_selector(codes, &selector)
}

fn check_batch(h: &Mat, codes: &RelaxedCodes) -> Result<()> {
    if h.rows() != codes.rows() {
        return Err(Error::invalid(format!(
            "batch size mismatch: {} inputs vs {} codes",
            h.rows(),
            codes.rows()
        )));
    }
    if h.rows() == 0 {
        return Err(Error::invalid("batch is empty"));
    }
    Ok(())
}

/// Weighted total with its per-term breakdown.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashLossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub w_shape: f64,
    pub quantization: f64,
    pub uniformity: f64,
    pub order: f64,
}

/// Evaluate the weighted loss. Terms with zero coefficient are reported as
/// zero and never computed, so e.g. the order term's M >= 2 precondition
/// only applies when it participates.
pub fn hash_total_loss(
    h: &Mat,
    codes: &RelaxedCodes,
    weights: &HashLossWeights,
) -> Result<HashLossBreakdown> {
    weights.validate()?;
    check_batch(h, codes)?;
    let mse = if weights.lambda_mse > 0.0 {
        loss_mse(h, codes)?
    } else {
        0.0
    };
    let w_shape = if weights.lambda_w > 0.0 {
        loss_w(codes)
    } else {
        0.0
    };
    let quantization = if weights.lambda_q > 0.0 {
        loss_q(codes)
    } else {
        0.0
    };
    let uniformity = if weights.lambda_u > 0.0 {
        loss_u(codes)
    } else {
        0.0
    };
    let order = if weights.lambda_o > 0.0 {
        loss_o(h, codes)?
    } else {
        0.0
    };
    Ok(HashLossBreakdown {
        total: weights.lambda_mse * mse
            + weights.lambda_w * w_shape
            + weights.lambda_q * quantization
            + weights.lambda_u * uniformity
            + weights.lambda_o * order,
        mse,
        w_shape,
        quantization,
        uniformity,
        order,
    })
}

/// Gradients of the weighted loss for `P` and `b`.
#[derive(Clone, Debug)]
pub struct HashGrads {
    pub p: Mat,
    pub b: Vec<f64>,
}

/// Analytic gradient of the total loss at `model` over the batch `h`.
///
/// The order selector is recomputed here and held constant through the
/// differentiation; `sign` inside the quantization term is likewise constant
/// almost everywhere. With a single-row batch the order term is skipped
/// (it needs pairs).
pub fn hash_grad(model: &HashModel, h: &Mat, weights: &HashLossWeights) -> Result<HashGrads> {
    weights.validate()?;
    let codes = hash_forward(model, h)?;
    check_batch(h, &codes)?;
    let m = h.rows();
    let l = model.l_bits();
    let inv_m2l = 1.0 / ((m * m * l) as f64);

    // dTotal/dH' accumulates per term.
    let mut g = Mat::zeros(m, l);

    // Pairwise terms share the structure
    //   L = (1/M^2) sum_ij f_ij(s_ij), s_ij = H'_i . H'_j / L
    // giving dL/dH' = (1/(M^2 L)) (Gm + Gm^T) H' with Gm_ij = f_ij'(s_ij).
    let needs_pairwise =
        weights.lambda_mse > 0.0 || weights.lambda_w > 0.0 || (weights.lambda_o > 0.0 && m >= 2);
    if needs_pairwise {
        let sim = code_similarity_matrix(&codes);
        let mut gm = Mat::zeros(m, m);
        if weights.lambda_mse > 0.0 {
            let cos = cosine_matrix(h)?;
            for i in 0..m {
                for j in 0..m {
                    let gap = cos.get(i, j) - sim.get(i, j);
                    gm.set(i, j, gm.get(i, j) - 2.0 * weights.lambda_mse * gap);
                }
            }
        }
        if weights.lambda_w > 0.0 {
            for i in 0..m {
                for j in 0..m {
                    let s = sim.get(i, j);
                    gm.set(
                        i,
                        j,
                        gm.get(i, j) + 4.0 * weights.lambda_w * s * (s * s - 1.0),
                    );
                }
            }
        }
        if weights.lambda_o > 0.0 && m >= 2 {
            let selector = order_weights(h, &codes)?;
            for i in 0..m {
                for j in 0..m {
                    let s = sim.get(i, j);
                    let d = match selector.get(i, j) {
                        OrderClass::Reduced => -2.0 * (1.0 - s),
                        OrderClass::Increased => 2.0 * (1.0 + s),
                        OrderClass::Unchanged => 0.0,
                    };
                    gm.set(i, j, gm.get(i, j) + weights.lambda_o * d);
                }
            }
        }
        // g += inv_m2l * (Gm + Gm^T) H'
        for i in 0..m {
            for j in 0..m {
                let coeff = inv_m2l * (gm.get(i, j) + gm.get(j, i));
                if coeff != 0.0 {
                    let row_j = codes.values.row(j);
                    let out = g.row_mut(i);
                    for (o, &v) in out.iter_mut().zip(row_j) {
                        *o += coeff * v;
                    }
                }
            }
        }
    }

    if weights.lambda_u > 0.0 {
        let scale = 2.0 * weights.lambda_u / m as f64;
        for i in 0..m {
            let row_sum: f64 = codes.values.row(i).iter().sum();
            for o in g.row_mut(i) {
                *o += scale * row_sum;
            }
        }
    }

    if weights.lambda_q > 0.0 {
        let scale = 2.0 * weights.lambda_q / (m * l) as f64;
        for i in 0..m {
            let code_row = codes.values.row(i);
            let out = g.row_mut(i);
            for (o, &v) in out.iter_mut().zip(code_row) {
                *o += scale * (v - sign_pm1(v));
            }
        }
    }

    // Through tanh: dY = g * (1 - H'^2); then dP = dY^T H, db = colsum(dY).
    let mut dp = Mat::zeros(l, model.dim2d());
    let mut db = vec![0.0; l];
    for i in 0..m {
        let code_row = codes.values.row(i);
        let g_row = g.row(i);
        let h_row = h.row(i);
        for j in 0..l {
            let dy = g_row[j] * (1.0 - code_row[j] * code_row[j]);
            if dy != 0.0 {
                db[j] += dy;
                let p_row = dp.row_mut(j);
                for (o, &v) in p_row.iter_mut().zip(h_row) {
                    *o += dy * v;
                }
            }
        }
    }
    Ok(HashGrads { p: dp, b: db })
}

/// Training configuration for the hash model.
#[derive(Clone, Debug)]
pub struct HashTrainConfig {
    pub weights: HashLossWeights,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl HashTrainConfig {
    fn validate(&self) -> Result<()> {
        self.weights.validate()?;
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

/// Minibatch gradient descent over the corpus rows. The order selector is
/// recomputed per batch on batch-internal pairs. The trace records the mean
/// of the batch losses per epoch. Deterministic in the seed.
pub fn hash_train(
    mut model: HashModel,
    corpus: &Mat,
    config: &HashTrainConfig,
) -> Result<(HashModel, Vec<HashLossBreakdown>)> {
    config.validate()?;
    if corpus.rows() == 0 {
        return Err(Error::invalid("corpus is empty"));
    }
    if corpus.cols() != model.dim2d() {
        return Err(Error::invalid(format!(
            "corpus width {} does not match hyperplane width {}",
            corpus.cols(),
            model.dim2d()
        )));
    }
    let mut rng = rng_from_seed(derive_seed(config.seed, "hash-shuffle"));
    let mut order: Vec<usize> = (0..corpus.rows()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        shuffle(&mut rng, &mut order);
        let mut epoch_loss = HashLossBreakdown {
            total: 0.0,
            mse: 0.0,
            w_shape: 0.0,
            quantization: 0.0,
            uniformity: 0.0,
            order: 0.0,
        };
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = Mat::from_fn(chunk.len(), corpus.cols(), |i, j| {
                corpus.get(chunk[i], j)
            });
            // A trailing singleton batch cannot carry the pairwise order
            // term; evaluate it without that term.
            let mut w = config.weights;
            if chunk.len() < 2 {
                w.lambda_o = 0.0;
            }
            let grads = hash_grad(&model, &batch, &w)?;
            model.p.add_scaled(&grads.p, -config.learning_rate);
            for (b, g) in model.b.iter_mut().zip(&grads.b) {
                *b -= config.learning_rate * g;
            }
            let codes = hash_forward(&model, &batch)?;
            let loss = hash_total_loss(&batch, &codes, &w)?;
            epoch_loss.total += loss.total;
            epoch_loss.mse += loss.mse;
            epoch_loss.w_shape += loss.w_shape;
            epoch_loss.quantization += loss.quantization;
            epoch_loss.uniformity += loss.uniformity;
            epoch_loss.order += loss.order;
            batches += 1;
        }
        let inv = 1.0 / batches as f64;
        epoch_loss.total *= inv;
        epoch_loss.mse *= inv;
        epoch_loss.w_shape *= inv;
        epoch_loss.quantization *= inv;
        epoch_loss.uniformity *= inv;
        epoch_loss.order *= inv;
        trace.push(epoch_loss);
    }
    Ok((model, trace))
}
