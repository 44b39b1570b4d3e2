use std::collections::HashMap;

use crate::domain::TrialKey;
use crate::error::{Error, Result};

use super::ScoreSet;

/// Detection-cost operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self { p_target: 0.01, c_miss: 10.0, c_fa: 1.0 }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::InvalidConfig("p_target must lie in (0, 1)".into()));
        }
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) {
            return Err(Error::InvalidConfig("costs must be positive".into()));
        }
        Ok(())
    }

    pub fn miss_weight(&self) -> f64 {
        self.c_miss * self.p_target
    }

    pub fn fa_weight(&self) -> f64 {
        self.c_fa * (1.0 - self.p_target)
    }

    /// Cost of the better trivial system; the normalizer of the DCF.
    pub fn normalizer(&self) -> f64 {
        self.miss_weight().min(self.fa_weight())
    }

    pub fn normalized_cost(&self, p_miss: f64, p_fa: f64) -> f64 {
        (self.miss_weight() * p_miss + self.fa_weight() * p_fa) / self.normalizer()
    }
}

/// Splits scored trials into target and nontarget score lists. TC/TARGET are
/// targets; TW, IC, IW and NONTARGET are pooled as nontargets.
pub fn split_by_key(scores: &ScoreSet, keys: &[TrialKey]) -> Result<(Vec<f64>, Vec<f64>)> {
    let lookup: HashMap<&str, _> = keys.iter().map(|k| (k.trial_id.as_str(), k.label)).collect();
    let mut tgt = Vec::new();
    let mut non = Vec::new();
    for (id, &s) in scores.iter() {
        let label = lookup
            .get(id.as_str())
            .ok_or_else(|| Error::Missing { kind: "key for trial", id: id.clone() })?;
        if label.is_target() {
            tgt.push(s);
        } else {
            non.push(s);
        }
    }
    if tgt.is_empty() || non.is_empty() {
        return Err(Error::SingleClass);
    }
    Ok((tgt, non))
}

/// One point of the threshold sweep: accept when `score >= threshold`.
#[derive(Debug, Clone, Copy)]
struct OperatingPoint {
    p_miss: f64,
    p_fa: f64,
    /// Midpoint between the highest rejected and lowest accepted score.
    threshold: f64,
}

/// Operating points at every distinct observed score plus the reject-all end,
/// ordered by increasing threshold.
fn sweep(targets: &[f64], nontargets: &[f64]) -> Result<Vec<OperatingPoint>> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::SingleClass);
    }
    if targets.iter().chain(nontargets).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let mut all: Vec<(f64, bool)> = targets
        .iter()
        .map(|&s| (s, true))
        .chain(nontargets.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (nt, nn) = (targets.len() as f64, nontargets.len() as f64);
    let mut points = Vec::new();
    let mut missed = 0usize;
    let mut rejected_non = 0usize;
    let mut prev = all[0].0 - 1.0;
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        points.push(OperatingPoint {
            p_miss: missed as f64 / nt,
            p_fa: (nontargets.len() - rejected_non) as f64 / nn,
            threshold: 0.5 * (prev + s),
        });
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                missed += 1;
            } else {
                rejected_non += 1;
            }
            i += 1;
        }
        prev = s;
    }
    points.push(OperatingPoint { p_miss: 1.0, p_fa: 0.0, threshold: prev + 1.0 });
    Ok(points)
}

/// Equal error rate of explicit target / nontarget score lists.
pub fn eer_of(targets: &[f64], nontargets: &[f64]) -> Result<f64> {
    let points = sweep(targets, nontargets)?;
    Ok(crossing(&points))
}

fn crossing(points: &[OperatingPoint]) -> f64 {
    // p_miss - p_fa rises from -1 to +1 along the sweep.
    let j = points
        .iter()
        .position(|p| p.p_miss - p.p_fa >= 0.0)
        .expect("sweep ends at p_miss = 1, p_fa = 0");
    let hi = points[j];
    let d_hi = hi.p_miss - hi.p_fa;
    if d_hi == 0.0 || j == 0 {
        return hi.p_miss;
    }
    let lo = points[j - 1];
    let d_lo = lo.p_miss - lo.p_fa;
    let f = -d_lo / (d_hi - d_lo);
    lo.p_miss + f * (hi.p_miss - lo.p_miss)
}

/// Normalized minimum detection cost and the threshold that attains it.
pub fn min_dcf_of(targets: &[f64], nontargets: &[f64], params: &DcfParams) -> Result<(f64, f64)> {
    params.validate()?;
    let points = sweep(targets, nontargets)?;
    let mut best = (f64::INFINITY, 0.0);
    for p in &points {
        let c = params.normalized_cost(p.p_miss, p.p_fa);
        if c < best.0 {
            best = (c, p.threshold);
        }
    }
    Ok(best)
}

/// Rate at which miss and false-alarm curves cross, linearly interpolated
/// between adjacent operating points.
pub fn eer(scores: &ScoreSet, keys: &[TrialKey]) -> Result<f64> {
    let (t, n) = split_by_key(scores, keys)?;
    eer_of(&t, &n)
}

pub fn min_dcf(scores: &ScoreSet, keys: &[TrialKey], params: &DcfParams) -> Result<f64> {
    let (t, n) = split_by_key(scores, keys)?;
    Ok(min_dcf_of(&t, &n, params)?.0)
}
