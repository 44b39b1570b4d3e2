//! Discriminative quadratic scorer initialized from PLDA.
//!
//! `s(e, t) = eᵀΛt + eᵀΓe + tᵀΓt + cᵀ(e + t) + k`, with Λ used through its
//! symmetric part so the score is symmetric in its arguments. Training
//! minimizes a sigmoid-smoothed normalized detection cost on pairs whose two
//! sides share a phrase.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::backend::{PairScorer, PldaModel};
use crate::domain::{Embedding, UttMeta};
use crate::error::{Error, Result};
use crate::eval::{min_dcf_of, DcfParams};
use crate::linalg::factor_spd;

#[derive(Debug, Clone, PartialEq)]
pub struct NpldaParams {
    /// Λ: cross term between enrollment and test.
    pub cross: DMatrix<f64>,
    /// Γ: symmetric self term applied to each side.
    pub quad: DMatrix<f64>,
    /// c: linear term applied to `e + t`.
    pub linear: DVector<f64>,
    /// k: constant offset.
    pub constant: f64,
}

impl NpldaParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            cross: DMatrix::zeros(dim, dim),
            quad: DMatrix::zeros(dim, dim),
            linear: DVector::zeros(dim),
            constant: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for m in [&self.cross, &self.quad] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: m.nrows() });
            }
        }
        let finite = self.cross.iter().chain(self.quad.iter()).chain(self.linear.iter()).all(|v| v.is_finite());
        if !finite || !self.constant.is_finite() {
            return Err(Error::NonFinite("NPLDA parameters"));
        }
        if (&self.quad - self.quad.transpose()).amax() > 1e-12 * self.quad.amax().max(1.0) {
            return Err(Error::Constraint("NPLDA self matrix must be symmetric".into()));
        }
        Ok(())
    }
}

/// Expands the closed-form PLDA log-likelihood ratio into quadratic-form
/// parameters, so that `nplda_score` reproduces `plda_llr_score`.
pub fn init_from_plda(model: &PldaModel) -> Result<NpldaParams> {
    let d = model.dim();
    let total = model.between() + model.within();
    let total_f = factor_spd(&total, "total covariance")?;
    let mut joint = DMatrix::zeros(2 * d, 2 * d);
    joint.view_mut((0, 0), (d, d)).copy_from(&total);
    joint.view_mut((d, d), (d, d)).copy_from(&total);
    joint.view_mut((0, d), (d, d)).copy_from(model.between());
    joint.view_mut((d, 0), (d, d)).copy_from(model.between());
    let joint_f = factor_spd(&joint, "same-speaker joint covariance")?;

    let a1 = joint_f.inverse.view((0, 0), (d, d)).into_owned();
    let a2 = joint_f.inverse.view((0, d), (d, d)).into_owned();
    let a2 = (&a2 + a2.transpose()) * 0.5;
    let quad = (&total_f.inverse - a1) * 0.5;
    let quad = (&quad + quad.transpose()) * 0.5;
    let cross = -a2;
    let offset = total_f.log_det - 0.5 * joint_f.log_det;

    let mu = model.mean();
    let m = &quad * 2.0 + &cross;
    let linear = -(&m * mu);
    let constant = mu.dot(&(&m * mu)) + offset;
    Ok(NpldaParams { cross, quad, linear, constant })
}

pub fn nplda_score(params: &NpldaParams, e: &[f64], t: &[f64]) -> Result<f64> {
    let d = params.dim();
    for v in [e, t] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
    }
    let mut s = params.constant;
    for a in 0..d {
        let mut row = 0.0;
        for b in 0..d {
            let lam = 0.5 * (params.cross[(a, b)] + params.cross[(b, a)]);
            row += lam * t[b];
            s += params.quad[(a, b)] * (e[a] * e[b] + t[a] * t[b]);
        }
        s += e[a] * row + params.linear[a] * (e[a] + t[a]);
    }
    Ok(s)
}

impl PairScorer for NpldaParams {
    fn score(&self, enroll: &[f64], test: &[f64]) -> Result<f64> {
        nplda_score(self, enroll, test)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

/// Smoothed detection cost with its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftCost {
    pub loss: f64,
    pub p_miss: f64,
    pub p_fa: f64,
    pub grad_scores: Vec<f64>,
    pub grad_threshold: f64,
}

/// `[c_miss·p_t·P̂_miss + c_fa·(1−p_t)·P̂_fa] / min(c_miss·p_t, c_fa·(1−p_t))`
/// with `P̂_miss` the target mean of `σ(α(θ−s))` and `P̂_fa` the nontarget
/// mean of `σ(α(s−θ))`.
pub fn soft_detcost(
    scores: &[f64],
    is_target: &[bool],
    threshold: f64,
    sharpness: f64,
    cost: &DcfParams,
) -> Result<SoftCost> {
    if scores.len() != is_target.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), found: is_target.len() });
    }
    cost.validate()?;
    if !(sharpness > 0.0 && sharpness.is_finite()) {
        return Err(Error::InvalidConfig("sigmoid sharpness must be positive".into()));
    }
    let nt = is_target.iter().filter(|&&t| t).count();
    let nn = is_target.len() - nt;
    if nt == 0 || nn == 0 {
        return Err(Error::SingleClass);
    }
    let norm = cost.normalizer();
    let wm = cost.miss_weight() / norm / nt as f64;
    let wf = cost.fa_weight() / norm / nn as f64;

    let mut p_miss = 0.0;
    let mut p_fa = 0.0;
    let mut grad_scores = Vec::with_capacity(scores.len());
    let mut grad_threshold = 0.0;
    for (&s, &tgt) in scores.iter().zip(is_target) {
        if tgt {
            let q = sigmoid(sharpness * (threshold - s));
            p_miss += q;
            let dq = sharpness * q * (1.0 - q);
            grad_scores.push(-wm * dq);
            grad_threshold += wm * dq;
        } else {
            let q = sigmoid(sharpness * (s - threshold));
            p_fa += q;
            let dq = sharpness * q * (1.0 - q);
            grad_scores.push(wf * dq);
            grad_threshold -= wf * dq;
        }
    }
    p_miss /= nt as f64;
    p_fa /= nn as f64;
    let loss = cost.normalized_cost(p_miss, p_fa);
    if !loss.is_finite() {
        return Err(Error::NonFinite("soft detection cost"));
    }
    Ok(SoftCost { loss, p_miss, p_fa, grad_scores, grad_threshold })
}

/// A labelled training pair. Both sides must carry the same phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct NpldaPair {
    pub enroll: Vec<f64>,
    pub test: Vec<f64>,
    pub enroll_phrase: String,
    pub test_phrase: String,
    pub target: bool,
}

/// Every unordered pair of distinct utterances sharing a phrase, grouped by
/// phrase id and otherwise in input order. Utterances without a phrase id are
/// skipped.
pub fn same_phrase_pairs(embeddings: &[Embedding], metas: &[UttMeta]) -> Result<Vec<NpldaPair>> {
    let by_id: HashMap<&str, &UttMeta> = metas.iter().map(|m| (m.utt_id.as_str(), m)).collect();
    let mut groups: BTreeMap<&str, Vec<(&Embedding, &str)>> = BTreeMap::new();
    for e in embeddings {
        let m = by_id
            .get(e.utt_id.as_str())
            .ok_or_else(|| Error::Missing { kind: "metadata", id: e.utt_id.clone() })?;
        if let Some(p) = &m.phrase_id {
            groups.entry(p).or_default().push((e, m.speaker_id.as_str()));
        }
    }
    let mut pairs = Vec::new();
    for (phrase, members) in groups {
        for (i, (a, sa)) in members.iter().enumerate() {
            for (b, sb) in &members[i + 1..] {
                pairs.push(NpldaPair {
                    enroll: a.vec.clone(),
                    test: b.vec.clone(),
                    enroll_phrase: phrase.to_string(),
                    test_phrase: phrase.to_string(),
                    target: sa == sb,
                });
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpldaTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// α: sigmoid sharpness of the soft cost.
    pub sharpness: f64,
    pub cost: DcfParams,
    /// Initial θ; `None` starts at the minDCF threshold of the initial scores.
    pub threshold: Option<f64>,
}

impl Default for NpldaTrainConfig {
    fn default() -> Self {
        Self { learning_rate: 5e-5, epochs: 5, sharpness: 10.0, cost: DcfParams::default(), threshold: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpldaFit {
    pub params: NpldaParams,
    pub threshold: f64,
    /// Training soft cost before each epoch, plus the final value.
    pub trace: Vec<f64>,
}

/// Full-batch gradient descent on the soft detection cost.
pub fn train_nplda(params: &NpldaParams, pairs: &[NpldaPair], config: &NpldaTrainConfig) -> Result<NpldaFit> {
    params.validate()?;
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidConfig("learning rate must be positive".into()));
    }
    for (i, p) in pairs.iter().enumerate() {
        if p.enroll_phrase != p.test_phrase {
            return Err(Error::Constraint(format!(
                "training pair {i} mixes phrases `{}` and `{}`",
                p.enroll_phrase, p.test_phrase
            )));
        }
    }
    let labels: Vec<bool> = pairs.iter().map(|p| p.target).collect();
    if !labels.contains(&true) || !labels.contains(&false) {
        return Err(Error::SingleClass);
    }
    let d = params.dim();
    let score_all = |p: &NpldaParams| -> Result<Vec<f64>> {
        pairs.iter().map(|pr| nplda_score(p, &pr.enroll, &pr.test)).collect()
    };

    let mut current = params.clone();
    let mut scores = score_all(&current)?;
    let mut threshold = match config.threshold {
        Some(t) => t,
        None => {
            let (tg, nt): (Vec<_>, Vec<_>) = scores.iter().zip(&labels).partition(|(_, &l)| l);
            let tg: Vec<f64> = tg.into_iter().map(|(s, _)| *s).collect();
            let nt: Vec<f64> = nt.into_iter().map(|(s, _)| *s).collect();
            min_dcf_of(&tg, &nt, &config.cost)?.1
        }
    };

    let mut trace = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let c = soft_detcost(&scores, &labels, threshold, config.sharpness, &config.cost)?;
        trace.push(c.loss);

        let mut g_cross = DMatrix::zeros(d, d);
        let mut g_quad = DMatrix::zeros(d, d);
        let mut g_lin = DVector::zeros(d);
        let mut g_const = 0.0;
        for (pr, &g) in pairs.iter().zip(&c.grad_scores) {
            let e = DVector::from_column_slice(&pr.enroll);
            let t = DVector::from_column_slice(&pr.test);
            let et = &e * t.transpose();
            g_cross += (&et + et.transpose()) * (0.5 * g);
            g_quad += (&e * e.transpose() + &t * t.transpose()) * g;
            g_lin += (&e + &t) * g;
            g_const += g;
        }
        let lr = config.learning_rate;
        current.cross -= g_cross * lr;
        current.quad -= g_quad * lr;
        current.linear -= g_lin * lr;
        current.constant -= g_const * lr;
        threshold -= c.grad_threshold * lr;
        scores = score_all(&current)?;
    }
    trace.push(soft_detcost(&scores, &labels, threshold, config.sharpness, &config.cost)?.loss);
    Ok(NpldaFit { params: current, threshold, trace })
}
