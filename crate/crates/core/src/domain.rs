//! Utterance, enrollment and trial types shared by every other module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{l2_norm, scale_to_unit};

/// Spoken language of an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Language {
    L1,
    L2,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::L1, Language::L2];

    pub fn index(self) -> usize {
        match self {
            Language::L1 => 0,
            Language::L2 => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::L1 => "L1",
            Language::L2 => "L2",
        })
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L1" => Ok(Language::L1),
            "L2" => Ok(Language::L2),
            other => Err(Error::InvalidConfig(format!("unknown language `{other}`"))),
        }
    }
}

/// A fixed-dimension vector attached to one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub utt_id: String,
    pub vec: Vec<f64>,
}

impl Embedding {
    pub fn new(utt_id: impl Into<String>, vec: Vec<f64>) -> Self {
        Self { utt_id: utt_id.into(), vec }
    }

    pub fn dim(&self) -> usize {
        self.vec.len()
    }
}

/// Checks that a collection of embeddings shares one dimension and holds only
/// finite values. Returns that dimension.
pub fn check_collection(embeddings: &[Embedding]) -> Result<usize> {
    let first = embeddings.first().ok_or(Error::Empty("embedding collection"))?;
    let dim = first.dim();
    for e in embeddings {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: e.dim() });
        }
        if e.vec.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
    }
    Ok(dim)
}

/// Labels attached to one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UttMeta {
    pub utt_id: String,
    pub speaker_id: String,
    /// Absent for text-independent data.
    pub phrase_id: Option<String>,
    pub language: Language,
    pub transcript: Option<String>,
}

/// Enrollment model: the unit-norm mean of its enrollment embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrollModel {
    pub model_id: String,
    pub utt_ids: Vec<String>,
    pub centroid: Vec<f64>,
}

/// Averages the enrollment embeddings and scales the mean to unit length.
pub fn build_enroll_model(model_id: &str, embeddings: &[&Embedding]) -> Result<EnrollModel> {
    let first = embeddings.first().ok_or(Error::Empty("enrollment embeddings"))?;
    let dim = first.dim();
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: e.dim() });
        }
        for (m, v) in mean.iter_mut().zip(&e.vec) {
            *m += v;
        }
    }
    let n = embeddings.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    if !mean.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("enrollment embeddings"));
    }
    if l2_norm(&mean) <= f64::EPSILON {
        return Err(Error::ZeroNorm("zero-norm centroid"));
    }
    Ok(EnrollModel {
        model_id: model_id.to_string(),
        utt_ids: embeddings.iter().map(|e| e.utt_id.clone()).collect(),
        centroid: scale_to_unit(&mean)?,
    })
}

/// One verification question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub trial_id: String,
    pub model_id: String,
    pub test_utt_id: String,
    pub claimed_phrase_id: Option<String>,
}

/// Ground-truth trial label. `Tc`..`Iw` are text-dependent; `Target` and
/// `Nontarget` are text-independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrialLabel {
    /// Target speaker, correct phrase.
    Tc,
    /// Target speaker, wrong phrase.
    Tw,
    /// Impostor, correct phrase.
    Ic,
    /// Impostor, wrong phrase.
    Iw,
    Target,
    Nontarget,
}

impl TrialLabel {
    /// Only TC (or TARGET) trials should be accepted.
    pub fn is_target(self) -> bool {
        matches!(self, TrialLabel::Tc | TrialLabel::Target)
    }

    pub fn is_phrase_mismatch(self) -> bool {
        matches!(self, TrialLabel::Tw | TrialLabel::Iw)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrialLabel::Tc => "TC",
            TrialLabel::Tw => "TW",
            TrialLabel::Ic => "IC",
            TrialLabel::Iw => "IW",
            TrialLabel::Target => "TGT",
            TrialLabel::Nontarget => "NTG",
        }
    }
}

impl fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrialLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "TC" => TrialLabel::Tc,
            "TW" => TrialLabel::Tw,
            "IC" => TrialLabel::Ic,
            "IW" => TrialLabel::Iw,
            "TGT" => TrialLabel::Target,
            "NTG" => TrialLabel::Nontarget,
            other => return Err(Error::InvalidConfig(format!("unknown trial label `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialKey {
    pub trial_id: String,
    pub label: TrialLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    pub phrase_id: String,
    pub text: String,
    pub language: Language,
}

/// The closed set of pass-phrases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseInventory {
    entries: Vec<Phrase>,
}

impl PhraseInventory {
    pub fn new(entries: Vec<Phrase>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for p in &entries {
            if !seen.insert(p.phrase_id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate phrase id `{}`", p.phrase_id)));
            }
            if p.text.is_empty() {
                return Err(Error::InvalidConfig(format!("empty reference for `{}`", p.phrase_id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Phrase] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, phrase_id: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.phrase_id == phrase_id)
    }

    pub fn get(&self, phrase_id: &str) -> Option<&Phrase> {
        self.entries.iter().find(|p| p.phrase_id == phrase_id)
    }
}

/// Problems found by [`validate_protocol`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    DuplicateTrialId(String),
    DanglingModel { trial_id: String, model_id: String },
    DanglingTestUtterance { trial_id: String, utt_id: String },
    DanglingEnrollUtterance { model_id: String, utt_id: String },
    EmptyEnrollment(String),
    MissingKey(String),
    DuplicateKey(String),
    UnknownKeyedTrial(String),
    DuplicateUtterance(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateTrialId(id) => write!(f, "duplicate id: trial `{id}`"),
            Violation::DanglingModel { trial_id, model_id } => {
                write!(f, "dangling model `{model_id}` in trial `{trial_id}`")
            }
            Violation::DanglingTestUtterance { trial_id, utt_id } => {
                write!(f, "dangling test utterance `{utt_id}` in trial `{trial_id}`")
            }
            Violation::DanglingEnrollUtterance { model_id, utt_id } => {
                write!(f, "dangling enrollment utterance `{utt_id}` in model `{model_id}`")
            }
            Violation::EmptyEnrollment(m) => write!(f, "model `{m}` has no enrollment utterances"),
            Violation::MissingKey(id) => write!(f, "missing key for trial `{id}`"),
            Violation::DuplicateKey(id) => write!(f, "duplicate key for trial `{id}`"),
            Violation::UnknownKeyedTrial(id) => write!(f, "key for unknown trial `{id}`"),
            Violation::DuplicateUtterance(id) => write!(f, "duplicate id: utterance `{id}`"),
        }
    }
}

/// Cross-checks trials, keys, utterance metadata and the enrollment map.
/// Every problem is reported; an empty list means the protocol is consistent.
pub fn validate_protocol(
    trials: &[Trial],
    keys: &[TrialKey],
    metas: &[UttMeta],
    enroll_map: &BTreeMap<String, Vec<String>>,
) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut utts = BTreeSet::new();
    for m in metas {
        if !utts.insert(m.utt_id.as_str()) {
            out.push(Violation::DuplicateUtterance(m.utt_id.clone()));
        }
    }

    for (model_id, members) in enroll_map {
        if members.is_empty() {
            out.push(Violation::EmptyEnrollment(model_id.clone()));
        }
        for u in members {
            if !utts.contains(u.as_str()) {
                out.push(Violation::DanglingEnrollUtterance {
                    model_id: model_id.clone(),
                    utt_id: u.clone(),
                });
            }
        }
    }

    let mut trial_ids = BTreeSet::new();
    for t in trials {
        if !trial_ids.insert(t.trial_id.as_str()) {
            out.push(Violation::DuplicateTrialId(t.trial_id.clone()));
        }
        if !enroll_map.contains_key(&t.model_id) {
            out.push(Violation::DanglingModel {
                trial_id: t.trial_id.clone(),
                model_id: t.model_id.clone(),
            });
        }
        if !utts.contains(t.test_utt_id.as_str()) {
            out.push(Violation::DanglingTestUtterance {
                trial_id: t.trial_id.clone(),
                utt_id: t.test_utt_id.clone(),
            });
        }
    }

    let mut keyed = BTreeSet::new();
    for k in keys {
        if !keyed.insert(k.trial_id.as_str()) {
            out.push(Violation::DuplicateKey(k.trial_id.clone()));
        }
        if !trial_ids.contains(k.trial_id.as_str()) {
            out.push(Violation::UnknownKeyedTrial(k.trial_id.clone()));
        }
    }
    for id in &trial_ids {
        if !keyed.contains(id) {
            out.push(Violation::MissingKey(id.to_string()));
        }
    }
    out
}
