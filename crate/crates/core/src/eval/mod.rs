//! Detection metrics, phrase classification and filtering, and score fusion.

mod fusion;
mod metrics;
mod phrase;

use indexmap::IndexMap;

use crate::error::{Error, Result};

pub use fusion::{fuse, tune_weights, FusionWeights};
pub use metrics::{eer, eer_of, min_dcf, min_dcf_of, split_by_key, DcfParams};
pub use phrase::{apply_phrase_filter, classify_phrase, levenshtein};

/// Ordered map from trial id to a finite score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    scores: IndexMap<String, f64>,
}

impl ScoreSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut out = Self::new();
        for (id, s) in pairs {
            out.insert(id.into(), s)?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, trial_id: String, score: f64) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::NonFinite("score"));
        }
        if self.scores.contains_key(&trial_id) {
            return Err(Error::Constraint(format!("duplicate trial id `{trial_id}` in score set")));
        }
        self.scores.insert(trial_id, score);
        Ok(())
    }

    pub fn get(&self, trial_id: &str) -> Option<f64> {
        self.scores.get(trial_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.scores.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.scores.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}
