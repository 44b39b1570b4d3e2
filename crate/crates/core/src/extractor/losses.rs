//! Training objectives over unit-norm embedding batches (one row per
//! sample). Every loss returns the batch-mean value and exact gradients.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::synthgen::standard_normal_vec;

pub const DEFAULT_AAM_SCALE: f64 = 32.0;
pub const DEFAULT_AAM_MARGIN: f64 = 0.2;

/// Additive angular margin classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct AamHead {
    /// D × C, one unit-norm column per class.
    pub weights: DMatrix<f64>,
    pub scale: f64,
    pub margin: f64,
}

impl AamHead {
    /// Columns are scaled to unit norm.
    pub fn new(weights: DMatrix<f64>, scale: f64, margin: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig("AAM scale must be positive".into()));
        }
        if !(0.0..FRAC_PI_2).contains(&margin) {
            return Err(Error::InvalidConfig("AAM margin must lie in [0, π/2)".into()));
        }
        if weights.ncols() == 0 {
            return Err(Error::Empty("AAM classes"));
        }
        let mut head = Self { weights, scale, margin };
        head.renormalize()?;
        Ok(head)
    }

    pub fn random(dim: usize, classes: usize, scale: f64, margin: f64, rng: &mut rand_chacha::ChaCha20Rng) -> Result<Self> {
        let v = standard_normal_vec(rng, dim * classes);
        Self::new(DMatrix::from_column_slice(dim, classes, &v), scale, margin)
    }

    pub fn classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn renormalize(&mut self) -> Result<()> {
        for mut col in self.weights.column_iter_mut() {
            let n = col.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::ZeroNorm("AAM class weight"));
            }
            col /= n;
        }
        Ok(())
    }

    /// `cos(θ + m)` of the target logit and its derivative in `cos θ`;
    /// past `θ + m = π` falls back to `cos θ − m·sin m`, which keeps the
    /// target logit monotone in the angle.
    fn margin_logit(&self, c: f64) -> (f64, f64) {
        let m = self.margin;
        if m == 0.0 {
            return (c, 1.0);
        }
        if c >= (PI - m).cos() {
            let sin_t = (1.0 - c * c).max(0.0).sqrt();
            let value = c * m.cos() - sin_t * m.sin();
            let deriv = m.cos() + c * m.sin() / sin_t.max(1e-12);
            (value, deriv)
        } else {
            (c - m * m.sin(), 1.0)
        }
    }
}

/// GE2E similarity scale `w` (kept positive) and bias `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ge2eParams {
    pub w: f64,
    pub b: f64,
}

impl Default for Ge2eParams {
    fn default() -> Self {
        Self { w: 10.0, b: -5.0 }
    }
}

impl Ge2eParams {
    pub const MIN_W: f64 = 1e-3;

    pub fn clamp(&mut self) {
        self.w = self.w.max(Self::MIN_W);
    }
}

/// Loss value and gradients of one objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// N × D
    pub grad_embeddings: DMatrix<f64>,
    /// One D × C gradient per head, in the order the heads were passed.
    pub grad_heads: Vec<DMatrix<f64>>,
    /// Gradient with respect to the GE2E `(w, b)`, when that loss is involved.
    pub grad_ge2e: Option<(f64, f64)>,
}

fn check_batch(x: &DMatrix<f64>, labels_len: usize) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Empty("batch"));
    }
    if labels_len != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), found: labels_len });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embeddings"));
    }
    Ok(())
}

fn logsumexp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// AAM loss where sample `i` is classified by `heads[routes[i]]`.
fn routed_aam(x: &DMatrix<f64>, labels: &[usize], routes: &[usize], heads: &[&AamHead]) -> Result<LossGrad> {
    check_batch(x, labels.len())?;
    let n = x.nrows();
    let d = x.ncols();
    for h in heads {
        if h.dim() != d {
            return Err(Error::DimensionMismatch { expected: h.dim(), found: d });
        }
        if h.weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("AAM weights"));
        }
    }
    let cos: Vec<DMatrix<f64>> = heads.iter().map(|h| x * &h.weights).collect();
    let mut g: Vec<DMatrix<f64>> = heads.iter().map(|h| DMatrix::zeros(n, h.classes())).collect();
    let mut total = 0.0;
    for i in 0..n {
        let r = routes[i];
        let head = heads[r];
        let y = labels[i];
        if y >= head.classes() {
            return Err(Error::LabelOutOfRange { label: y, classes: head.classes() });
        }
        let row: RowDVector<f64> = cos[r].row(i).into_owned();
        let (target, target_deriv) = head.margin_logit(row[y]);
        let logits: Vec<f64> = (0..head.classes())
            .map(|j| head.scale * if j == y { target } else { row[j] })
            .collect();
        let lse = logsumexp(&logits);
        total += lse - logits[y];
        for j in 0..head.classes() {
            let p = (logits[j] - lse).exp();
            g[r][(i, j)] = if j == y {
                head.scale * (p - 1.0) * target_deriv
            } else {
                head.scale * p
            } / n as f64;
        }
    }
    let loss = total / n as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("AAM loss"));
    }
    let mut grad_embeddings = DMatrix::zeros(n, d);
    let mut grad_heads = Vec::with_capacity(heads.len());
    for (gh, h) in g.iter().zip(heads) {
        grad_embeddings += gh * h.weights.transpose();
        grad_heads.push(x.transpose() * gh);
    }
    Ok(LossGrad { loss, grad_embeddings, grad_heads, grad_ge2e: None })
}

/// Mean of `−log softmax` over logits `s·cos θ_j`, the target logit being
/// `s·cos(θ_y + m)`.
pub fn aam_loss(x: &DMatrix<f64>, labels: &[usize], head: &AamHead) -> Result<LossGrad> {
    routed_aam(x, labels, &vec![0; labels.len()], &[head])
}

/// Multi-task loss `aam(speaker) + λ·aam(phrase)` with two separate heads.
pub fn spk_plus_phrase_loss(
    x: &DMatrix<f64>,
    spk_labels: &[usize],
    phrase_labels: Option<&[usize]>,
    spk_head: &AamHead,
    phrase_head: &AamHead,
    lambda: f64,
) -> Result<LossGrad> {
    let phrase_labels = phrase_labels.ok_or(Error::Missing { kind: "labels", id: "phrase".into() })?;
    let spk = aam_loss(x, spk_labels, spk_head)?;
    let phr = aam_loss(x, phrase_labels, phrase_head)?;
    Ok(LossGrad {
        loss: spk.loss + lambda * phr.loss,
        grad_embeddings: spk.grad_embeddings + phr.grad_embeddings * lambda,
        grad_heads: vec![spk.grad_heads[0].clone(), &phr.grad_heads[0] * lambda],
        grad_ge2e: None,
    })
}

/// Class index of a (speaker, phrase) pair when each pair is its own class.
pub fn product_label(spk: usize, phrase: usize, n_phrases: usize) -> Result<usize> {
    if phrase >= n_phrases {
        return Err(Error::LabelOutOfRange { label: phrase, classes: n_phrases });
    }
    spk.checked_mul(n_phrases)
        .and_then(|v| v.checked_add(phrase))
        .ok_or(Error::LabelOutOfRange { label: spk, classes: usize::MAX / n_phrases })
}

/// Phrase-routed multi-head loss: each sample's speaker is classified by the
/// head of its phrase. Gradients reach only the heads that were used.
pub fn pmt_loss(x: &DMatrix<f64>, spk_labels: &[usize], phrase_labels: &[usize], heads: &[AamHead]) -> Result<LossGrad> {
    if phrase_labels.len() != spk_labels.len() {
        return Err(Error::DimensionMismatch { expected: spk_labels.len(), found: phrase_labels.len() });
    }
    if let Some(&p) = phrase_labels.iter().find(|&&p| p >= heads.len()) {
        return Err(Error::Missing { kind: "head for phrase", id: p.to_string() });
    }
    let refs: Vec<&AamHead> = heads.iter().collect();
    routed_aam(x, spk_labels, phrase_labels, &refs)
}

fn cosine_and_grads(a: &DVector<f64>, b: &DVector<f64>) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::ZeroNorm("GE2E embedding or centroid"));
    }
    let c = a.dot(b) / (na * nb);
    let ga = b / (na * nb) - a * (c / (na * na));
    let gb = a / (na * nb) - b * (c / (nb * nb));
    Ok((c, ga, gb))
}

/// Generalized end-to-end softmax loss. Rows of `x` are grouped
/// speaker-major: rows `s·U .. (s+1)·U` belong to speaker `s`. The own-speaker
/// centroid of each utterance excludes that utterance.
pub fn ge2e_loss(x: &DMatrix<f64>, n_speakers: usize, n_utts: usize, params: &Ge2eParams) -> Result<LossGrad> {
    if n_speakers < 2 || n_utts < 2 {
        return Err(Error::Constraint(format!(
            "GE2E needs at least 2 speakers and 2 utterances each, got {n_speakers}×{n_utts}"
        )));
    }
    check_batch(x, n_speakers * n_utts)?;
    let d = x.ncols();
    let n = x.nrows() as f64;
    let rows: Vec<DVector<f64>> = (0..x.nrows()).map(|i| x.row(i).transpose()).collect();
    let sums: Vec<DVector<f64>> = (0..n_speakers)
        .map(|s| (0..n_utts).fold(DVector::zeros(d), |a, u| a + &rows[s * n_utts + u]))
        .collect();
    let centroids: Vec<DVector<f64>> = sums.iter().map(|v| v / n_utts as f64).collect();
    let excl = (n_utts - 1) as f64;

    let mut grad = vec![DVector::<f64>::zeros(d); x.nrows()];
    let mut grad_sum = vec![DVector::<f64>::zeros(d); n_speakers];
    let (mut gw, mut gb) = (0.0, 0.0);
    let mut total = 0.0;
    for s in 0..n_speakers {
        for u in 0..n_utts {
            let i = s * n_utts + u;
            let own = (&sums[s] - &rows[i]) / excl;
            let mut cos = Vec::with_capacity(n_speakers);
            let mut cgrads = Vec::with_capacity(n_speakers);
            for (k, ck) in centroids.iter().enumerate() {
                let c = if k == s { &own } else { ck };
                let (v, ge, gc) = cosine_and_grads(&rows[i], c)?;
                cos.push(v);
                cgrads.push((ge, gc));
            }
            let sim: Vec<f64> = cos.iter().map(|c| params.w * c + params.b).collect();
            let lse = logsumexp(&sim);
            total += lse - sim[s];
            for k in 0..n_speakers {
                let dl_dsim = ((sim[k] - lse).exp() - if k == s { 1.0 } else { 0.0 }) / n;
                gw += dl_dsim * cos[k];
                gb += dl_dsim;
                let dl_dcos = dl_dsim * params.w;
                let (ge, gc) = &cgrads[k];
                grad[i] += ge * dl_dcos;
                if k == s {
                    // own = (sum_s − e_i)/(U−1)
                    let g = gc * (dl_dcos / excl);
                    grad_sum[s] += &g;
                    grad[i] -= g;
                } else {
                    grad_sum[k] += gc * (dl_dcos / n_utts as f64);
                }
            }
        }
    }
    for s in 0..n_speakers {
        for u in 0..n_utts {
            grad[s * n_utts + u] += &grad_sum[s];
        }
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("GE2E loss"));
    }
    let mut grad_embeddings = DMatrix::zeros(x.nrows(), d);
    for (i, g) in grad.iter().enumerate() {
        grad_embeddings.set_row(i, &g.transpose());
    }
    Ok(LossGrad { loss, grad_embeddings, grad_heads: Vec::new(), grad_ge2e: Some((gw, gb)) })
}

/// `aam + μ·ge2e` on a batch drawn from a single phrase with exactly two
/// utterances per speaker.
pub fn pct_loss(
    x: &DMatrix<f64>,
    spk_labels: &[usize],
    phrase_labels: &[usize],
    spk_head: &AamHead,
    ge2e: &Ge2eParams,
    mu: f64,
) -> Result<LossGrad> {
    if phrase_labels.len() != spk_labels.len() {
        return Err(Error::DimensionMismatch { expected: spk_labels.len(), found: phrase_labels.len() });
    }
    if phrase_labels.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Constraint("same-phrase constraint violated".into()));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, &s) in spk_labels.iter().enumerate() {
        let g = groups.entry(s).or_default();
        if g.is_empty() {
            order.push(s);
        }
        g.push(i);
    }
    if groups.values().any(|g| g.len() != 2) {
        return Err(Error::Constraint("PCT batches need exactly two utterances per speaker".into()));
    }
    let perm: Vec<usize> = order.iter().flat_map(|s| groups[s].iter().copied()).collect();
    let grouped = DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| x[(perm[r], c)]);

    let aam = aam_loss(x, spk_labels, spk_head)?;
    let contrast = ge2e_loss(&grouped, order.len(), 2, ge2e)?;
    let mut grad_embeddings = aam.grad_embeddings;
    for (r, &i) in perm.iter().enumerate() {
        let g = contrast.grad_embeddings.row(r) * mu;
        let mut row = grad_embeddings.row_mut(i);
        row += g;
    }
    let (gw, gb) = contrast.grad_ge2e.expect("ge2e gradient");
    Ok(LossGrad {
        loss: aam.loss + mu * contrast.loss,
        grad_embeddings,
        grad_heads: aam.grad_heads,
        grad_ge2e: Some((mu * gw, mu * gb)),
    })
}
