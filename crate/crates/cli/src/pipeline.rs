//! Glue between the file formats and the core operations.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use spkver::backend::{Cosine, PairScorer, PldaModel};
use spkver::domain::{build_enroll_model, Embedding, EnrollModel, Language, Trial, UttMeta};
use spkver::eval::ScoreSet;
use spkver::extractor::{Extractor, Strategy};
use spkver::nplda::NpldaParams;
use spkver::norm::{language_dependent_as_norm, plain_as_norm, Cohort, LangClassifier};

use crate::error::{CliError, CliResult};
use crate::io::ModelFile;

/// Bank key of a phrase-independent model.
pub const GLOBAL: &str = "-";

pub fn extractor_to_file(ex: &Extractor, strategy: Strategy, seed: u64, epochs: usize) -> ModelFile {
    let mut m = ModelFile::new("extractor");
    m.scalar("input_dim", ex.input_dim())
        .scalar("hidden_dim", ex.hidden_dim())
        .scalar("embedding_dim", ex.embedding_dim())
        .scalar("strategy", strategy)
        .scalar("seed", seed)
        .scalar("epochs", epochs)
        .matrix("w1", ex.w1.clone())
        .matrix("b1", DMatrix::from_column_slice(ex.b1.len(), 1, ex.b1.as_slice()))
        .matrix("w2", ex.w2.clone())
        .matrix("b2", DMatrix::from_column_slice(ex.b2.len(), 1, ex.b2.as_slice()));
    m
}

fn column(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn extractor_from_file(m: &ModelFile) -> CliResult<Extractor> {
    m.expect_kind("extractor")?;
    Ok(Extractor::new(
        m.get_matrix("w1")?.clone(),
        column(m.get_matrix("b1")?),
        m.get_matrix("w2")?.clone(),
        column(m.get_matrix("b2")?),
    )?)
}

pub fn plda_bank_to_file(bank: &BTreeMap<String, PldaModel>, iters: usize, ridge_factor: f64) -> ModelFile {
    let mut m = ModelFile::new("plda");
    m.scalar("iters", iters).float_scalar("ridge_factor", ridge_factor);
    for (p, model) in bank {
        let mean = model.mean();
        m.matrix(&format!("mean:{p}"), DMatrix::from_column_slice(mean.len(), 1, mean.as_slice()))
            .matrix(&format!("between:{p}"), model.between().clone())
            .matrix(&format!("within:{p}"), model.within().clone());
    }
    m
}

fn bank_phrases(m: &ModelFile, prefix: &str) -> Vec<String> {
    m.matrices.iter().filter_map(|(n, _)| n.strip_prefix(prefix).map(str::to_string)).collect()
}

pub fn plda_bank_from_file(m: &ModelFile) -> CliResult<BTreeMap<String, PldaModel>> {
    m.expect_kind("plda")?;
    let mut out = BTreeMap::new();
    for p in bank_phrases(m, "mean:") {
        let model = PldaModel::new(
            column(m.get_matrix(&format!("mean:{p}"))?),
            m.get_matrix(&format!("between:{p}"))?.clone(),
            m.get_matrix(&format!("within:{p}"))?.clone(),
        )?;
        out.insert(p, model);
    }
    if out.is_empty() {
        return Err(CliError::Data("PLDA model file holds no models".into()));
    }
    Ok(out)
}

pub fn nplda_bank_to_file(bank: &BTreeMap<String, (NpldaParams, f64)>) -> ModelFile {
    let mut m = ModelFile::new("nplda");
    for (p, (params, threshold)) in bank {
        m.float_scalar(&format!("constant:{p}"), params.constant)
            .float_scalar(&format!("threshold:{p}"), *threshold);
    }
    for (p, (params, _)) in bank {
        m.matrix(&format!("cross:{p}"), params.cross.clone())
            .matrix(&format!("quad:{p}"), params.quad.clone())
            .matrix(&format!("linear:{p}"), DMatrix::from_column_slice(params.linear.len(), 1, params.linear.as_slice()));
    }
    m
}

pub fn nplda_bank_from_file(m: &ModelFile) -> CliResult<BTreeMap<String, NpldaParams>> {
    m.expect_kind("nplda")?;
    let mut out = BTreeMap::new();
    for p in bank_phrases(m, "cross:") {
        let params = NpldaParams {
            cross: m.get_matrix(&format!("cross:{p}"))?.clone(),
            quad: m.get_matrix(&format!("quad:{p}"))?.clone(),
            linear: column(m.get_matrix(&format!("linear:{p}"))?),
            constant: m.get_float(&format!("constant:{p}"))?,
        };
        params.validate()?;
        out.insert(p, params);
    }
    if out.is_empty() {
        return Err(CliError::Data("NPLDA model file holds no models".into()));
    }
    Ok(out)
}

pub fn langid_to_file(clf: &LangClassifier) -> ModelFile {
    let d = clf.weights.first().map_or(0, Vec::len);
    let flat: Vec<f64> = clf.weights.iter().flatten().copied().collect();
    let mut m = ModelFile::new("langid");
    m.matrix("weights", DMatrix::from_row_slice(clf.weights.len(), d, &flat))
        .matrix("bias", DMatrix::from_column_slice(clf.bias.len(), 1, &clf.bias));
    m
}

pub fn langid_from_file(m: &ModelFile) -> CliResult<LangClassifier> {
    m.expect_kind("langid")?;
    let w = m.get_matrix("weights")?;
    let b = m.get_matrix("bias")?;
    if w.nrows() != Language::ALL.len() || b.nrows() != w.nrows() {
        return Err(CliError::Data("language-id model must have one row per language".into()));
    }
    Ok(LangClassifier {
        weights: (0..w.nrows()).map(|r| w.row(r).iter().copied().collect()).collect(),
        bias: b.as_slice().to_vec(),
    })
}

/// Pair scorer selected per trial: one global model, or one per claimed phrase.
pub enum Backend {
    Cosine,
    Plda(BTreeMap<String, PldaModel>),
    Nplda(BTreeMap<String, NpldaParams>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Cosine,
    Plda,
    Nplda,
}

impl FromStr for BackendKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "plda" => Ok(Self::Plda),
            "nplda" => Ok(Self::Nplda),
            _ => Err(CliError::Usage(format!("unknown backend `{s}` (cosine|plda|nplda)"))),
        }
    }
}

fn pick<'a, T>(bank: &'a BTreeMap<String, T>, phrase: Option<&str>) -> CliResult<&'a T> {
    if let Some(m) = bank.get(GLOBAL) {
        return Ok(m);
    }
    let p = phrase.ok_or_else(|| CliError::Data("phrase-dependent backend needs a claimed phrase".into()))?;
    bank.get(p).ok_or_else(|| CliError::Data(format!("no backend model for phrase `{p}`")))
}

impl Backend {
    pub fn scorer(&self, phrase: Option<&str>) -> CliResult<&dyn PairScorer> {
        Ok(match self {
            Backend::Cosine => &Cosine,
            Backend::Plda(bank) => pick(bank, phrase)?,
            Backend::Nplda(bank) => pick(bank, phrase)?,
        })
    }
}

pub struct EmbeddingIndex<'a> {
    map: HashMap<&'a str, &'a Embedding>,
}

impl<'a> EmbeddingIndex<'a> {
    pub fn new(embeddings: &'a [Embedding]) -> Self {
        Self { map: embeddings.iter().map(|e| (e.utt_id.as_str(), e)).collect() }
    }

    pub fn get(&self, utt_id: &str) -> CliResult<&'a Embedding> {
        self.map.get(utt_id).copied().ok_or_else(|| CliError::Data(format!("missing embedding `{utt_id}`")))
    }
}

pub fn build_models(enrollments: &BTreeMap<String, Vec<String>>, index: &EmbeddingIndex) -> CliResult<BTreeMap<String, EnrollModel>> {
    enrollments
        .iter()
        .map(|(model, utts)| {
            let es = utts.iter().map(|u| index.get(u)).collect::<CliResult<Vec<_>>>()?;
            Ok((model.clone(), build_enroll_model(model, &es)?))
        })
        .collect()
}

fn trial_inputs<'a>(
    t: &Trial,
    models: &'a BTreeMap<String, EnrollModel>,
    index: &EmbeddingIndex<'a>,
) -> CliResult<(&'a EnrollModel, &'a Embedding)> {
    let m = models.get(&t.model_id).ok_or_else(|| CliError::Data(format!("missing enrollment model `{}`", t.model_id)))?;
    Ok((m, index.get(&t.test_utt_id)?))
}

fn collect_ordered(trials: &[Trial], scores: Vec<CliResult<f64>>) -> CliResult<ScoreSet> {
    let mut out = ScoreSet::new();
    for (t, s) in trials.iter().zip(scores) {
        out.insert(t.trial_id.clone(), s?)?;
    }
    Ok(out)
}

/// Scores every trial; the result follows trial order whatever the number of
/// worker threads.
pub fn score_trials(
    trials: &[Trial],
    models: &BTreeMap<String, EnrollModel>,
    index: &EmbeddingIndex,
    backend: &Backend,
) -> CliResult<ScoreSet> {
    let scores: Vec<CliResult<f64>> = trials
        .par_iter()
        .map(|t| {
            let (m, e) = trial_inputs(t, models, index)?;
            Ok(backend.scorer(t.claimed_phrase_id.as_deref())?.score(&m.centroid, &e.vec)?)
        })
        .collect();
    collect_ordered(trials, scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Plain,
    LanguageDependent,
}

#[allow(clippy::too_many_arguments)]
pub fn normalize_scores(
    raw: &ScoreSet,
    trials: &[Trial],
    models: &BTreeMap<String, EnrollModel>,
    index: &EmbeddingIndex,
    backend: &Backend,
    cohort: &Cohort,
    n_top: usize,
    mode: NormMode,
    test_languages: &HashMap<String, Language>,
) -> CliResult<ScoreSet> {
    let scores: Vec<CliResult<f64>> = trials
        .par_iter()
        .map(|t| {
            let s = raw.get(&t.trial_id).ok_or_else(|| CliError::Data(format!("missing raw score for trial `{}`", t.trial_id)))?;
            let (m, e) = trial_inputs(t, models, index)?;
            let scorer = backend.scorer(t.claimed_phrase_id.as_deref())?;
            Ok(match mode {
                NormMode::Plain => plain_as_norm(s, &m.centroid, &e.vec, cohort, scorer, n_top)?,
                NormMode::LanguageDependent => {
                    let lang = test_languages
                        .get(&t.test_utt_id)
                        .ok_or_else(|| CliError::Data(format!("no language for test utterance `{}`", t.test_utt_id)))?;
                    language_dependent_as_norm(s, &m.centroid, &e.vec, cohort, scorer, n_top, *lang)?
                }
            })
        })
        .collect();
    collect_ordered(trials, scores)
}

pub fn meta_index(metas: &[UttMeta]) -> HashMap<&str, &UttMeta> {
    metas.iter().map(|m| (m.utt_id.as_str(), m)).collect()
}

/// Metadata aligned with `embeddings`.
pub fn aligned_meta<'a>(embeddings: &[Embedding], metas: &'a [UttMeta]) -> CliResult<Vec<&'a UttMeta>> {
    let idx = meta_index(metas);
    embeddings
        .iter()
        .map(|e| idx.get(e.utt_id.as_str()).copied().ok_or_else(|| CliError::Data(format!("missing metadata for `{}`", e.utt_id))))
        .collect()
}
