use crate::domain::TrialKey;
use crate::error::{Error, Result};

use super::metrics::{eer_of, min_dcf_of, split_by_key, DcfParams};
use super::ScoreSet;

const SIMPLEX_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;

/// Non-negative per-system weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights(Vec<f64>);

impl FusionWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("fusion weights"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig("fusion weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidConfig(format!("fusion weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-trial weighted sum. Output order follows the first system.
pub fn fuse(score_sets: &[ScoreSet], weights: &FusionWeights) -> Result<ScoreSet> {
    let first = score_sets.first().ok_or(Error::Empty("score sets"))?;
    if score_sets.len() != weights.0.len() {
        return Err(Error::InvalidConfig(format!(
            "{} systems but {} weights",
            score_sets.len(),
            weights.0.len()
        )));
    }
    for (i, s) in score_sets.iter().enumerate().skip(1) {
        if s.len() != first.len() || first.ids().any(|id| s.get(id).is_none()) {
            return Err(Error::TrialMismatch(format!("system {i} covers a different trial list")));
        }
    }
    let mut out = ScoreSet::new();
    for id in first.ids() {
        let v = score_sets
            .iter()
            .zip(&weights.0)
            .map(|(s, w)| w * s.get(id).expect("checked"))
            .sum();
        out.insert(id.to_string(), v)?;
    }
    Ok(out)
}

/// All weight vectors on the simplex grid with `n` steps per unit, in
/// ascending lexicographic order, as integer numerators.
fn simplex_grid(systems: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(left - k, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, systems, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive simplex-grid search for the weights minimizing dev minDCF.
/// Ties go to the lower dev EER, then to the lexicographically smallest
/// weight vector.
pub fn tune_weights(
    dev_sets: &[ScoreSet],
    dev_keys: &[TrialKey],
    params: &DcfParams,
    grid_step: f64,
) -> Result<FusionWeights> {
    if dev_sets.is_empty() {
        return Err(Error::Empty("system list"));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::InvalidConfig("grid_step must lie in (0, 1]".into()));
    }
    let n = (1.0 / grid_step).round() as usize;
    if (n as f64 * grid_step - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidConfig(format!("grid_step {grid_step} does not divide 1")));
    }

    let mut best: Option<(f64, f64, FusionWeights)> = None;
    for numerators in simplex_grid(dev_sets.len(), n) {
        let w = FusionWeights(numerators.iter().map(|&k| k as f64 / n as f64).collect());
        let fused = fuse(dev_sets, &w)?;
        let (t, nt) = split_by_key(&fused, dev_keys)?;
        let dcf = min_dcf_of(&t, &nt, params)?.0;
        let e = eer_of(&t, &nt)?;
        let better = match &best {
            None => true,
            Some((bd, be, _)) => dcf < bd - TIE_TOL || ((dcf - bd).abs() <= TIE_TOL && e < be - TIE_TOL),
        };
        if better {
            best = Some((dcf, e, w));
        }
    }
    Ok(best.expect("grid is never empty").2)
}
