//! Generative scoring back-ends: cosine similarity and two-covariance PLDA.
//!
//! The PLDA model is `x = y + ε` with speaker variable `y ~ N(μ, Σb)` and
//! residual `ε ~ N(0, Σw)`. Training is EM; the reported trace is the
//! observed-data log-likelihood minus the ridge penalty
//! `(r/2)·(S·tr Σb⁻¹ + N·tr Σw⁻¹)`, which is exactly the objective whose
//! M-step adds `r·I` to both covariances, so the trace never decreases.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{dot, factor_spd, l2_norm, SpdFactor};

/// Scores an (enrollment, test) vector pair; higher means more likely the
/// same speaker.
pub trait PairScorer: Sync {
    fn score(&self, enroll: &[f64], test: &[f64]) -> Result<f64>;
}

/// Cosine similarity back-end.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cosine;

impl PairScorer for Cosine {
    fn score(&self, enroll: &[f64], test: &[f64]) -> Result<f64> {
        cosine_score(enroll, test)
    }
}

pub fn cosine_score(e: &[f64], t: &[f64]) -> Result<f64> {
    if e.len() != t.len() {
        return Err(Error::DimensionMismatch { expected: e.len(), found: t.len() });
    }
    let (ne, nt) = (l2_norm(e), l2_norm(t));
    if ne == 0.0 || nt == 0.0 {
        return Err(Error::ZeroNorm("cosine argument"));
    }
    Ok((dot(e, t) / (ne * nt)).clamp(-1.0, 1.0))
}

/// Two-covariance PLDA model with cached factorizations for scoring.
#[derive(Debug)]
pub struct PldaModel {
    mean: DVector<f64>,
    between: DMatrix<f64>,
    within: DMatrix<f64>,
    within_f: Factor,
    total_f: Factor,
    /// Factorizations of `Σb + Σw/n`, keyed by n.
    group_f: Mutex<HashMap<usize, Factor>>,
}

#[derive(Debug, Clone)]
struct Factor {
    inverse: DMatrix<f64>,
    log_det: f64,
}

impl From<SpdFactor> for Factor {
    fn from(f: SpdFactor) -> Self {
        Self { inverse: f.inverse, log_det: f.log_det }
    }
}

impl Clone for PldaModel {
    fn clone(&self) -> Self {
        Self {
            mean: self.mean.clone(),
            between: self.between.clone(),
            within: self.within.clone(),
            within_f: self.within_f.clone(),
            total_f: self.total_f.clone(),
            group_f: Mutex::new(HashMap::new()),
        }
    }
}

impl PartialEq for PldaModel {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.between == other.between && self.within == other.within
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-10 * scale
}

impl PldaModel {
    /// Validates and factorizes a model. `between` must be symmetric PSD and
    /// `within` symmetric positive-definite.
    pub fn new(mean: DVector<f64>, between: DMatrix<f64>, within: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        for m in [&between, &within] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: m.nrows() });
            }
        }
        if mean.iter().chain(between.iter()).chain(within.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("PLDA parameters"));
        }
        if !is_symmetric(&between) || !is_symmetric(&within) {
            return Err(Error::Constraint("PLDA covariances must be symmetric".into()));
        }
        let min_eig = between.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-10 * between.amax().max(1.0) {
            return Err(Error::Constraint("between-speaker covariance is not PSD".into()));
        }
        let within_f = factor_spd(&within, "within-speaker covariance")?.into();
        let total_f = factor_spd(&(&between + &within), "total covariance")?.into();
        Ok(Self { mean, between, within, within_f, total_f, group_f: Mutex::new(HashMap::new()) })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn between(&self) -> &DMatrix<f64> {
        &self.between
    }

    pub fn within(&self) -> &DMatrix<f64> {
        &self.within
    }

    fn group_factor(&self, n: usize) -> Result<Factor> {
        let mut cache = self.group_f.lock().expect("cache lock");
        if let Some(f) = cache.get(&n) {
            return Ok(f.clone());
        }
        let m = &self.between + &self.within / n as f64;
        let f: Factor = factor_spd(&m, "group covariance")?.into();
        cache.insert(n, f.clone());
        Ok(f)
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        Ok(())
    }

    /// `log p(x_1..x_n)` for utterances sharing one latent speaker.
    pub fn group_log_likelihood(&self, xs: &[&[f64]]) -> Result<f64> {
        let n = xs.len();
        if n == 0 {
            return Err(Error::Empty("speaker group"));
        }
        let d = self.dim();
        let mut bar = DVector::zeros(d);
        for x in xs {
            self.check_dim(x)?;
            bar += DVector::from_column_slice(x);
        }
        bar /= n as f64;
        let g = self.group_factor(n)?;
        let c = &bar - &self.mean;
        let df = d as f64;
        let mut ll = -0.5 * (df * (2.0 * PI).ln() + g.log_det + c.dot(&(&g.inverse * &c)));
        if n > 1 {
            let nf = n as f64;
            let mut quad = 0.0;
            for x in xs {
                let r = DVector::from_column_slice(x) - &bar;
                quad += r.dot(&(&self.within_f.inverse * &r));
            }
            ll += -0.5 * ((nf - 1.0) * df * (2.0 * PI).ln() + (nf - 1.0) * self.within_f.log_det + df * nf.ln() + quad);
        }
        Ok(ll)
    }

    fn single_log_likelihood(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let c = DVector::from_column_slice(x) - &self.mean;
        let d = self.dim() as f64;
        Ok(-0.5 * (d * (2.0 * PI).ln() + self.total_f.log_det + c.dot(&(&self.total_f.inverse * &c))))
    }
}

/// Same-speaker versus different-speaker log-likelihood ratio.
pub fn plda_llr_score(model: &PldaModel, e: &[f64], t: &[f64]) -> Result<f64> {
    let same = model.group_log_likelihood(&[e, t])?;
    Ok(same - model.single_log_likelihood(e)? - model.single_log_likelihood(t)?)
}

impl PairScorer for PldaModel {
    fn score(&self, enroll: &[f64], test: &[f64]) -> Result<f64> {
        plda_llr_score(self, enroll, test)
    }
}

/// A trained model with its per-iteration objective trace (entry 0 is the
/// initialization).
#[derive(Debug, Clone)]
pub struct PldaFit {
    pub model: PldaModel,
    pub log_likelihood: Vec<f64>,
}

pub const DEFAULT_RIDGE_FACTOR: f64 = 1e-6;

fn group_by<L: Ord>(labels: &[L]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups.into_values().collect()
}

fn penalized_objective(model: &PldaModel, data: &[DVector<f64>], groups: &[Vec<usize>], ridge: f64) -> Result<f64> {
    let mut ll = 0.0;
    for g in groups {
        let xs: Vec<&[f64]> = g.iter().map(|&i| data[i].as_slice()).collect();
        ll += model.group_log_likelihood(&xs)?;
    }
    let between_inv_trace = factor_spd(&model.between, "between-speaker covariance")?.inverse.trace();
    let s = groups.len() as f64;
    let n = data.len() as f64;
    Ok(ll - 0.5 * ridge * (s * between_inv_trace + n * model.within_f.inverse.trace()))
}

/// EM training of the two-covariance model.
///
/// `ridge_factor` scales the ridge `r = ridge_factor · tr(Σ_total)/D` that is
/// added to both covariances at initialization and after every M-step.
pub fn plda_em_train<L: Ord>(
    vectors: &[Vec<f64>],
    speaker_labels: &[L],
    iters: usize,
    ridge_factor: f64,
) -> Result<PldaFit> {
    if vectors.len() != speaker_labels.len() {
        return Err(Error::DimensionMismatch { expected: vectors.len(), found: speaker_labels.len() });
    }
    let first = vectors.first().ok_or(Error::Empty("PLDA training data"))?;
    let d = first.len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: vectors.iter().find(|v| v.len() != d).unwrap().len() });
    }
    if vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PLDA training data"));
    }
    if !(ridge_factor.is_finite() && ridge_factor >= 0.0) {
        return Err(Error::InvalidConfig("ridge factor must be finite and >= 0".into()));
    }
    let groups = group_by(speaker_labels);
    if groups.len() < 2 {
        return Err(Error::Degenerate("PLDA needs at least two speakers".into()));
    }
    if groups.iter().all(|g| g.len() < 2) {
        return Err(Error::Degenerate("PLDA needs a speaker with two or more utterances".into()));
    }

    let data: Vec<DVector<f64>> = vectors.iter().map(|v| DVector::from_column_slice(v)).collect();
    let n = data.len() as f64;
    let s = groups.len() as f64;
    let mean = data.iter().fold(DVector::zeros(d), |a, x| a + x) / n;
    let total_trace: f64 = data.iter().map(|x| (x - &mean).norm_squared()).sum::<f64>() / n;
    if total_trace <= 0.0 {
        return Err(Error::Degenerate("all training vectors are identical".into()));
    }
    let ridge = ridge_factor * total_trace / d as f64;
    let ridge_i = DMatrix::<f64>::identity(d, d) * ridge;

    let mut within = DMatrix::zeros(d, d);
    let mut between = DMatrix::zeros(d, d);
    for g in &groups {
        let gm = g.iter().fold(DVector::zeros(d), |a, &i| a + &data[i]) / g.len() as f64;
        for &i in g {
            let r = &data[i] - &gm;
            within += &r * r.transpose();
        }
        let c = &gm - &mean;
        between += &c * c.transpose();
    }
    within = within / n + &ridge_i;
    between = between / s + &ridge_i;
    let mut model = PldaModel::new(mean, between, within)?;
    let mut trace = vec![penalized_objective(&model, &data, &groups, ridge)?];

    for _ in 0..iters {
        let between_inv = factor_spd(&model.between, "between-speaker covariance")?.inverse;
        let within_inv = &model.within_f.inverse;
        let prior_term = &between_inv * &model.mean;

        let mut post_means = Vec::with_capacity(groups.len());
        let mut post_covs = Vec::with_capacity(groups.len());
        for g in &groups {
            let precision = &between_inv + within_inv * g.len() as f64;
            let cov = factor_spd(&precision, "posterior precision")?.inverse;
            let sum = g.iter().fold(DVector::zeros(d), |a, &i| a + &data[i]);
            let m = &cov * (&prior_term + within_inv * sum);
            post_means.push(m);
            post_covs.push(cov);
        }

        let new_mean = post_means.iter().fold(DVector::zeros(d), |a, m| a + m) / s;
        let mut new_between = DMatrix::zeros(d, d);
        let mut new_within = DMatrix::zeros(d, d);
        for ((g, m), c) in groups.iter().zip(&post_means).zip(&post_covs) {
            let dm = m - &new_mean;
            new_between += c + &dm * dm.transpose();
            for &i in g {
                let r = &data[i] - m;
                new_within += c + &r * r.transpose();
            }
        }
        let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
        new_between = sym(new_between / s) + &ridge_i;
        new_within = sym(new_within / n) + &ridge_i;
        model = PldaModel::new(new_mean, new_between, new_within)?;
        trace.push(penalized_objective(&model, &data, &groups, ridge)?);
    }
    Ok(PldaFit { model, log_likelihood: trace })
}

/// Independently trained PLDA models, one per phrase.
#[derive(Debug, Clone, Default)]
pub struct PhrasePldaBank {
    pub models: BTreeMap<String, PldaModel>,
    pub failures: BTreeMap<String, Error>,
}

impl PhrasePldaBank {
    pub fn get(&self, phrase_id: &str) -> Result<&PldaModel> {
        self.models
            .get(phrase_id)
            .ok_or_else(|| Error::Missing { kind: "PLDA model for phrase", id: phrase_id.to_string() })
    }
}

pub fn train_phrase_plda_bank<L: Ord + Clone>(
    vectors: &[Vec<f64>],
    speaker_labels: &[L],
    phrase_labels: &[String],
    iters: usize,
    ridge_factor: f64,
) -> Result<PhrasePldaBank> {
    if vectors.len() != phrase_labels.len() || vectors.len() != speaker_labels.len() {
        return Err(Error::DimensionMismatch { expected: vectors.len(), found: phrase_labels.len() });
    }
    let mut by_phrase: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in phrase_labels.iter().enumerate() {
        by_phrase.entry(p).or_default().push(i);
    }
    let mut bank = PhrasePldaBank::default();
    for (phrase, idx) in by_phrase {
        let vs: Vec<Vec<f64>> = idx.iter().map(|&i| vectors[i].clone()).collect();
        let ls: Vec<L> = idx.iter().map(|&i| speaker_labels[i].clone()).collect();
        let usable = group_by(&ls).iter().filter(|g| g.len() >= 2).count();
        let fit = if usable < 2 {
            Err(Error::Degenerate(format!("phrase `{phrase}` needs two speakers with two or more utterances")))
        } else {
            plda_em_train(&vs, &ls, iters, ridge_factor)
        };
        match fit {
            Ok(f) => {
                bank.models.insert(phrase.to_string(), f.model);
            }
            Err(e) => {
                bank.failures.insert(phrase.to_string(), e);
            }
        }
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{rng_from_seed, standard_normal_vec};

    #[test]
    fn cosine_examples() {
        assert!((cosine_score(&[0.3, 0.4], &[0.3, 0.4]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let r = cosine_score(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((r - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(cosine_score(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_score(&[1.0], &[1.0, 0.0]).is_err());
    }

    fn random_spd(rng: &mut rand_chacha::ChaCha20Rng, d: usize, floor: f64) -> DMatrix<f64> {
        let a = DMatrix::from_vec(d, d, standard_normal_vec(rng, d * d));
        &a * a.transpose() + DMatrix::identity(d, d) * floor
    }

    fn random_model(seed: u64, d: usize) -> PldaModel {
        let mut rng = rng_from_seed(seed);
        let mean = DVector::from_vec(standard_normal_vec(&mut rng, d));
        let b = random_spd(&mut rng, d, 0.1);
        let w = random_spd(&mut rng, d, 0.1) * 0.5;
        PldaModel::new(mean, b, w).unwrap()
    }

    #[test]
    fn zero_between_gives_zero_llr() {
        let mut rng = rng_from_seed(3);
        let w = random_spd(&mut rng, 3, 0.5);
        let m = PldaModel::new(DVector::zeros(3), DMatrix::zeros(3, 3), w).unwrap();
        for _ in 0..20 {
            let e = standard_normal_vec(&mut rng, 3);
            let t = standard_normal_vec(&mut rng, 3);
            assert!(plda_llr_score(&m, &e, &t).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn llr_is_symmetric_and_mean_dominates() {
        let m = random_model(5, 3);
        let mu: Vec<f64> = m.mean().iter().copied().collect();
        let far: Vec<f64> = mu.iter().map(|v| v + 10.0).collect();
        assert!(plda_llr_score(&m, &mu, &mu).unwrap() >= plda_llr_score(&m, &mu, &far).unwrap());
        let mut rng = rng_from_seed(6);
        for _ in 0..20 {
            let e = standard_normal_vec(&mut rng, 3);
            let t = standard_normal_vec(&mut rng, 3);
            let a = plda_llr_score(&m, &e, &t).unwrap();
            let b = plda_llr_score(&m, &t, &e).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        assert!(plda_llr_score(&m, &[0.0; 2], &[0.0; 3]).is_err());
    }

    fn gauss2(x: [f64; 2], mean: [f64; 2], cov: &DMatrix<f64>) -> f64 {
        let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
        let (a, b, c) = (cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det);
        let (u, v) = (x[0] - mean[0], x[1] - mean[1]);
        (-0.5 * (a * u * u + 2.0 * b * u * v + c * v * v)).exp() / (2.0 * PI * det.sqrt())
    }

    /// Integrates the latent speaker variable out on a uniform 2-D grid.
    fn quadrature_llr(m: &PldaModel, e: [f64; 2], t: [f64; 2]) -> f64 {
        let mu = [m.mean()[0], m.mean()[1]];
        let integrate = |obs: &[[f64; 2]]| {
            let centre = [
                obs.iter().map(|o| o[0]).sum::<f64>() / obs.len() as f64 * 0.5 + mu[0] * 0.5,
                obs.iter().map(|o| o[1]).sum::<f64>() / obs.len() as f64 * 0.5 + mu[1] * 0.5,
            ];
            let half = 25.0;
            let steps = 1000;
            let h = 2.0 * half / steps as f64;
            let mut acc = 0.0;
            for i in 0..=steps {
                for j in 0..=steps {
                    let y = [centre[0] - half + i as f64 * h, centre[1] - half + j as f64 * h];
                    let mut f = gauss2(y, mu, m.between());
                    for o in obs {
                        f *= gauss2(*o, y, m.within());
                    }
                    acc += f;
                }
            }
            acc * h * h
        };
        (integrate(&[e, t]) / (integrate(&[e]) * integrate(&[t]))).ln()
    }

    #[test]
    fn llr_matches_latent_quadrature() {
        let mut rng = rng_from_seed(21);
        for k in 0..3 {
            let m = random_model(100 + k, 2);
            let e = standard_normal_vec(&mut rng, 2);
            let t = standard_normal_vec(&mut rng, 2);
            let closed = plda_llr_score(&m, &e, &t).unwrap();
            let quad = quadrature_llr(&m, [e[0], e[1]], [t[0], t[1]]);
            assert!((closed - quad).abs() < 1e-6, "{closed} vs {quad}");
        }
    }

    fn simulate(seed: u64, speakers: usize, utts: usize, b: &DMatrix<f64>, w: &DMatrix<f64>, mean: &[f64]) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = rng_from_seed(seed);
        let d = mean.len();
        let lb = b.clone().cholesky().unwrap().l();
        let lw = w.clone().cholesky().unwrap().l();
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        for s in 0..speakers {
            let y = DVector::from_column_slice(mean) + &lb * DVector::from_vec(standard_normal_vec(&mut rng, d));
            for _ in 0..utts {
                let x = &y + &lw * DVector::from_vec(standard_normal_vec(&mut rng, d));
                xs.push(x.iter().copied().collect());
                ls.push(s);
            }
        }
        (xs, ls)
    }

    #[test]
    fn em_trace_is_monotone_and_zero_iters_is_init() {
        let b = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
        let w = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.4, 0.0, 0.0, 0.0, 0.3]);
        let (xs, ls) = simulate(9, 40, 4, &b, &w, &[1.0, -1.0, 0.5]);
        let fit = plda_em_train(&xs, &ls, 20, DEFAULT_RIDGE_FACTOR).unwrap();
        assert_eq!(fit.log_likelihood.len(), 21);
        for pair in fit.log_likelihood.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-8, "{:?}", pair);
        }
        let init = plda_em_train(&xs, &ls, 0, DEFAULT_RIDGE_FACTOR).unwrap();
        assert_eq!(init.log_likelihood.len(), 1);
        assert_eq!(init.log_likelihood[0], fit.log_likelihood[0]);
    }

    #[test]
    fn em_rejects_degenerate_data() {
        let xs = vec![vec![1.0, 2.0]; 6];
        let ls = vec![0, 0, 0, 1, 1, 1];
        assert!(matches!(plda_em_train(&xs, &ls, 5, 1e-6), Err(Error::Degenerate(_))));
        assert!(plda_em_train(&xs[..2], &[0, 0], 5, 1e-6).is_err());
    }

    #[test]
    fn bank_matches_independent_training() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]);
        let w = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.2]);
        let (xa, la) = simulate(1, 10, 3, &b, &w, &[0.0, 0.0]);
        let (xb, lb) = simulate(2, 10, 3, &b, &w, &[1.0, 1.0]);
        let single = train_phrase_plda_bank(&xa, &la, &vec!["p0".to_string(); xa.len()], 5, 1e-6).unwrap();
        let direct = plda_em_train(&xa, &la, 5, 1e-6).unwrap().model;
        assert_eq!(single.models.len(), 1);
        assert_eq!(single.models["p0"], direct);

        let xs: Vec<_> = xa.iter().chain(&xb).cloned().collect();
        let ls: Vec<_> = la.iter().chain(&lb).copied().collect();
        let ps: Vec<String> = (0..xs.len()).map(|i| if i < xa.len() { "p0" } else { "p1" }.to_string()).collect();
        let bank = train_phrase_plda_bank(&xs, &ls, &ps, 5, 1e-6).unwrap();
        assert_eq!(bank.models["p0"], direct);
        assert_eq!(bank.models["p1"], plda_em_train(&xb, &lb, 5, 1e-6).unwrap().model);

        let mut ps2 = ps.clone();
        let lone: Vec<usize> = (0..xs.len()).filter(|&i| ls[i] == 0 && i < xa.len()).collect();
        for &i in &lone {
            ps2[i] = "p9".into();
        }
        let bank = train_phrase_plda_bank(&xs, &ls, &ps2, 5, 1e-6).unwrap();
        assert!(bank.failures.contains_key("p9"));
        assert!(bank.models.contains_key("p0"));
    }

    /// Mann-Whitney AUC computed by counting ordered pairs.
    fn auc(tgt: &[f64], non: &[f64]) -> f64 {
        let mut wins = 0.0;
        for t in tgt {
            for n in non {
                wins += if t > n { 1.0 } else if t == n { 0.5 } else { 0.0 };
            }
        }
        wins / (tgt.len() * non.len()) as f64
    }

    #[test]
    fn plda_ranks_better_than_cosine_on_offset_data() {
        let mean = [6.0, 6.0, 6.0];
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.5]));
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![0.05, 0.2, 0.3]));
        let (xs, ls) = simulate(17, 60, 4, &b, &w, &mean);
        let model = plda_em_train(&xs, &ls, 10, 1e-6).unwrap().model;
        let (ex, el) = simulate(18, 30, 2, &b, &w, &mean);
        let (mut pt, mut pn, mut ct, mut cn) = (vec![], vec![], vec![], vec![]);
        for i in 0..ex.len() {
            for j in (i + 1)..ex.len() {
                let p = plda_llr_score(&model, &ex[i], &ex[j]).unwrap();
                let c = cosine_score(&ex[i], &ex[j]).unwrap();
                if el[i] == el[j] {
                    pt.push(p);
                    ct.push(c);
                } else {
                    pn.push(p);
                    cn.push(c);
                }
            }
        }
        let (a_plda, a_cos) = (auc(&pt, &pn), auc(&ct, &cn));
        assert!(a_plda > a_cos, "plda {a_plda} cosine {a_cos}");
    }
}
