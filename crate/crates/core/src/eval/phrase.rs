use std::collections::{BTreeMap, HashMap};

use crate::domain::{PhraseInventory, Trial};
use crate::error::{Error, Result};

use super::ScoreSet;

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Phrase whose reference text is closest to `transcript`; ties go to the
/// earlier inventory entry.
pub fn classify_phrase<'a>(transcript: &str, inventory: &'a PhraseInventory) -> Result<&'a str> {
    inventory
        .entries()
        .iter()
        .map(|p| (levenshtein(transcript, &p.text), p.phrase_id.as_str()))
        .min_by_key(|(d, _)| *d)
        .map(|(_, id)| id)
        .ok_or(Error::Empty("phrase inventory"))
}

/// Floors every trial whose recognized test phrase differs from the claimed
/// phrase. A trial already below the floor keeps its score.
pub fn apply_phrase_filter(
    scores: &ScoreSet,
    trials: &[Trial],
    classified: &BTreeMap<String, String>,
    floor: f64,
) -> Result<ScoreSet> {
    if !floor.is_finite() {
        return Err(Error::NonFinite("filter floor"));
    }
    let by_id: HashMap<&str, &Trial> = trials.iter().map(|t| (t.trial_id.as_str(), t)).collect();
    let mut out = ScoreSet::new();
    for (id, &s) in scores.iter() {
        let trial = by_id.get(id.as_str()).ok_or_else(|| Error::Missing { kind: "trial", id: id.clone() })?;
        let claimed = trial
            .claimed_phrase_id
            .as_deref()
            .ok_or_else(|| Error::Missing { kind: "claimed phrase for trial", id: id.clone() })?;
        let heard = classified.get(&trial.test_utt_id).ok_or_else(|| Error::Missing {
            kind: "phrase classification for utterance",
            id: trial.test_utt_id.clone(),
        })?;
        let v = if heard != claimed { s.min(floor) } else { s };
        out.insert(id.clone(), v)?;
    }
    Ok(out)
}
