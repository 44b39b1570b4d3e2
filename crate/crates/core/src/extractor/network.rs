use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::synthgen::{rng_from_seed, standard_normal_vec};

/// Two-layer feed-forward embedding network:
/// `features (F) → ReLU(W1·x + b1) (H) → W2·h + b2 (D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extractor {
    /// H × F
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    /// D × H
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

fn gaussian_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    // Row-major draw order so the layout is easy to reproduce elsewhere.
    let v = standard_normal_vec(rng, rows * cols);
    DMatrix::from_row_slice(rows, cols, &v) * std
}

impl Extractor {
    pub fn new(w1: DMatrix<f64>, b1: DVector<f64>, w2: DMatrix<f64>, b2: DVector<f64>) -> Result<Self> {
        let h = w1.nrows();
        if b1.len() != h {
            return Err(Error::DimensionMismatch { expected: h, found: b1.len() });
        }
        if w2.ncols() != h {
            return Err(Error::DimensionMismatch { expected: h, found: w2.ncols() });
        }
        if b2.len() != w2.nrows() {
            return Err(Error::DimensionMismatch { expected: w2.nrows(), found: b2.len() });
        }
        let ex = Self { w1, b1, w2, b2 };
        if !ex.is_finite() {
            return Err(Error::NonFinite("extractor parameters"));
        }
        Ok(ex)
    }

    /// He-initialized weights, zero hidden bias and a small random output
    /// bias, so an input with every hidden unit inactive still maps to a
    /// nonzero embedding.
    pub fn random(input: usize, hidden: usize, embedding: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let w1 = gaussian_matrix(&mut rng, hidden, input, (2.0 / input as f64).sqrt());
        let w2 = gaussian_matrix(&mut rng, embedding, hidden, (2.0 / hidden as f64).sqrt());
        let b2 = DVector::from_vec(standard_normal_vec(&mut rng, embedding)) * 0.1;
        Self { w1, b1: DVector::zeros(hidden), w2, b2 }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(self.b1.iter()).chain(self.w2.iter()).chain(self.b2.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub raw: Vec<f64>,
    /// `None` when the raw embedding has zero norm.
    pub normalized: Option<Vec<f64>>,
}

pub fn forward(ex: &Extractor, features: &[f64]) -> Result<ForwardOutput> {
    if features.len() != ex.input_dim() {
        return Err(Error::DimensionMismatch { expected: ex.input_dim(), found: features.len() });
    }
    let x = DVector::from_column_slice(features);
    let hidden = (&ex.w1 * x + &ex.b1).map(|v| v.max(0.0));
    let raw = &ex.w2 * hidden + &ex.b2;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding"));
    }
    let n = raw.norm();
    let normalized = (n > 0.0).then(|| raw.iter().map(|v| v / n).collect());
    Ok(ForwardOutput { raw: raw.iter().copied().collect(), normalized })
}

/// Unit-norm embedding, or an error when the network output vanishes.
pub fn embed(ex: &Extractor, features: &[f64]) -> Result<Vec<f64>> {
    forward(ex, features)?.normalized.ok_or(Error::ZeroNorm("extractor output"))
}

/// Activations kept for back-propagation over a batch (one row per sample).
pub(crate) struct BatchForward {
    pre_hidden: DMatrix<f64>,
    hidden: DMatrix<f64>,
    norms: Vec<f64>,
    pub embeddings: DMatrix<f64>,
}

pub(crate) fn forward_batch(ex: &Extractor, x: &DMatrix<f64>) -> Result<BatchForward> {
    let mut pre_hidden = x * ex.w1.transpose();
    for mut row in pre_hidden.row_iter_mut() {
        row += ex.b1.transpose();
    }
    let hidden = pre_hidden.map(|v| v.max(0.0));
    let mut raw = &hidden * ex.w2.transpose();
    for mut row in raw.row_iter_mut() {
        row += ex.b2.transpose();
    }
    let mut norms = Vec::with_capacity(raw.nrows());
    for mut row in raw.row_iter_mut() {
        let n = row.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::ZeroNorm("extractor output during training"));
        }
        row /= n;
        norms.push(n);
    }
    Ok(BatchForward { pre_hidden, hidden, norms, embeddings: raw })
}

#[derive(Debug, Clone)]
pub(crate) struct ExtractorGrads {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Back-propagates a gradient on the unit-norm embeddings to the parameters.
pub(crate) fn backward_batch(
    ex: &Extractor,
    x: &DMatrix<f64>,
    cache: &BatchForward,
    grad_embeddings: &DMatrix<f64>,
) -> ExtractorGrads {
    let mut grad_raw = grad_embeddings.clone();
    for (i, mut row) in grad_raw.row_iter_mut().enumerate() {
        let u = cache.embeddings.row(i);
        let along = row.dot(&u);
        row -= u * along;
        row /= cache.norms[i];
    }
    let w2 = grad_raw.transpose() * &cache.hidden;
    let b2 = grad_raw.row_sum().transpose();
    let mut grad_pre = &grad_raw * &ex.w2;
    grad_pre.zip_apply(&cache.pre_hidden, |g, z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let w1 = grad_pre.transpose() * x;
    let b1 = grad_pre.row_sum().transpose();
    ExtractorGrads { w1, b1, w2, b2 }
}
