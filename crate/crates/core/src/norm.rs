//! Adaptive symmetric score normalization with a language-aware enrollment
//! cohort, plus a multinomial logistic language identifier on embeddings.

use std::collections::{BTreeMap, HashMap};

use crate::backend::PairScorer;
use crate::domain::{build_enroll_model, Embedding, Language, UttMeta};
use crate::error::{Error, Result};
use crate::linalg::dot;

pub const DEFAULT_N_TOP: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct CohortMember {
    pub utt_id: String,
    pub vec: Vec<f64>,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    members: Vec<CohortMember>,
}

impl Cohort {
    pub fn new(members: Vec<CohortMember>) -> Result<Self> {
        let first = members.first().ok_or(Error::Empty("cohort"))?;
        let d = first.vec.len();
        if let Some(m) = members.iter().find(|m| m.vec.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: m.vec.len() });
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[CohortMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn count(&self, language: Option<Language>) -> usize {
        self.members.iter().filter(|m| language.is_none_or(|l| m.language == l)).count()
    }

    /// One unit-normalized mean embedding per (speaker, language), with id
    /// `<speaker_id>-<lang>`, ordered by speaker then language.
    pub fn from_speakers(embeddings: &[Embedding], metas: &[UttMeta]) -> Result<Self> {
        let by_id: HashMap<&str, &UttMeta> = metas.iter().map(|m| (m.utt_id.as_str(), m)).collect();
        let mut groups: BTreeMap<(&str, Language), Vec<&Embedding>> = BTreeMap::new();
        for e in embeddings {
            let m = by_id
                .get(e.utt_id.as_str())
                .ok_or_else(|| Error::Missing { kind: "metadata", id: e.utt_id.clone() })?;
            groups.entry((m.speaker_id.as_str(), m.language)).or_default().push(e);
        }
        let members = groups
            .into_iter()
            .map(|((spk, lang), es)| {
                let id = format!("{spk}-{lang}");
                let model = build_enroll_model(&id, &es)?;
                Ok(CohortMember { utt_id: id, vec: model.centroid, language: lang })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }
}

/// Mean and population standard deviation of the top cohort scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    pub n_top: usize,
}

pub fn cohort_stats(
    anchor: &[f64],
    cohort: &Cohort,
    scorer: &dyn PairScorer,
    n_top: usize,
    language_filter: Option<Language>,
) -> Result<NormStats> {
    if n_top < 2 {
        return Err(Error::InvalidConfig("n_top must be at least 2".into()));
    }
    let mut scores = cohort
        .members
        .iter()
        .filter(|m| language_filter.is_none_or(|l| m.language == l))
        .map(|m| scorer.score(anchor, &m.vec))
        .collect::<Result<Vec<f64>>>()?;
    if scores.len() < n_top {
        return Err(Error::CohortTooSmall { available: scores.len(), required: n_top });
    }
    scores.sort_by(|a, b| b.total_cmp(a));
    let top = &scores[..n_top];
    let n = n_top as f64;
    let mean = top.iter().sum::<f64>() / n;
    let var = top.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::ZeroVariance { mean });
    }
    Ok(NormStats { mean, std, n_top })
}

/// `(s − μ_t)/σ_t + (s − μ_e)/σ_e`.
pub fn as_norm(raw_score: f64, enroll: &NormStats, test: &NormStats) -> Result<f64> {
    for st in [enroll, test] {
        if !(st.std > 0.0) {
            return Err(Error::ZeroVariance { mean: st.mean });
        }
    }
    Ok((raw_score - test.mean) / test.std + (raw_score - enroll.mean) / enroll.std)
}

/// AS-Norm whose enrollment-side cohort is restricted to the test
/// utterance's language; the test side uses the whole cohort. `n_top` is
/// clamped to the size of each side's cohort.
pub fn language_dependent_as_norm(
    raw_score: f64,
    enroll_centroid: &[f64],
    test_embedding: &[f64],
    cohort: &Cohort,
    scorer: &dyn PairScorer,
    n_top: usize,
    test_language: Language,
) -> Result<f64> {
    let enroll_n = n_top.min(cohort.count(Some(test_language)));
    let test_n = n_top.min(cohort.len());
    let enroll = cohort_stats(enroll_centroid, cohort, scorer, enroll_n, Some(test_language))?;
    let test = cohort_stats(test_embedding, cohort, scorer, test_n, None)?;
    as_norm(raw_score, &enroll, &test)
}

/// Plain AS-Norm over the whole cohort, `n_top` clamped to its size.
pub fn plain_as_norm(
    raw_score: f64,
    enroll_centroid: &[f64],
    test_embedding: &[f64],
    cohort: &Cohort,
    scorer: &dyn PairScorer,
    n_top: usize,
) -> Result<f64> {
    let n = n_top.min(cohort.len());
    let enroll = cohort_stats(enroll_centroid, cohort, scorer, n, None)?;
    let test = cohort_stats(test_embedding, cohort, scorer, n, None)?;
    as_norm(raw_score, &enroll, &test)
}

/// Multinomial logistic language classifier; row `k` of `weights` belongs to
/// `Language::from_index(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LangClassifier {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LangClassifier {
    pub fn zeros(dim: usize) -> Self {
        Self { weights: vec![vec![0.0; dim]; Language::ALL.len()], bias: vec![0.0; Language::ALL.len()] }
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    fn posteriors(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self.weights.iter().zip(&self.bias).map(|(w, b)| dot(w, x) + b).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }
}

/// Full-batch gradient descent on mean softmax cross-entropy, starting from
/// zero weights.
pub fn train_language_id(
    embeddings: &[Vec<f64>],
    languages: &[Language],
    epochs: usize,
    learning_rate: f64,
) -> Result<LangClassifier> {
    if embeddings.len() != languages.len() {
        return Err(Error::DimensionMismatch { expected: embeddings.len(), found: languages.len() });
    }
    let d = embeddings.first().ok_or(Error::Empty("language-id training data"))?.len();
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: 0 });
    }
    if Language::ALL.iter().any(|l| !languages.contains(l)) {
        return Err(Error::SingleClass);
    }
    let mut clf = LangClassifier::zeros(d);
    let n = embeddings.len() as f64;
    for _ in 0..epochs {
        let mut gw = vec![vec![0.0; d]; Language::ALL.len()];
        let mut gb = vec![0.0; Language::ALL.len()];
        for (x, lang) in embeddings.iter().zip(languages) {
            let p = clf.posteriors(x);
            for k in 0..p.len() {
                let g = (p[k] - if k == lang.index() { 1.0 } else { 0.0 }) / n;
                gb[k] += g;
                gw[k].iter_mut().zip(x).for_each(|(a, v)| *a += g * v);
            }
        }
        for k in 0..gw.len() {
            clf.bias[k] -= learning_rate * gb[k];
            clf.weights[k].iter_mut().zip(&gw[k]).for_each(|(w, g)| *w -= learning_rate * g);
        }
    }
    Ok(clf)
}

/// Most probable language and its posterior; ties go to the lower index.
pub fn predict_language(clf: &LangClassifier, embedding: &[f64]) -> Result<(Language, f64)> {
    if embedding.len() != clf.dim() {
        return Err(Error::DimensionMismatch { expected: clf.dim(), found: embedding.len() });
    }
    let p = clf.posteriors(embedding);
    let mut best = 0;
    for k in 1..p.len() {
        if p[k] > p[best] {
            best = k;
        }
    }
    Ok((Language::from_index(best).expect("one row per language"), p[best]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Cosine;

    /// Scores by reading the first coordinate of the cohort vector.
    struct Fixed;
    impl PairScorer for Fixed {
        fn score(&self, _e: &[f64], t: &[f64]) -> Result<f64> {
            Ok(t[0])
        }
    }

    fn member(id: &str, s: f64, lang: Language) -> CohortMember {
        CohortMember { utt_id: id.into(), vec: vec![s], language: lang }
    }

    #[test]
    fn stats_examples() {
        let c = Cohort::new(vec![member("a", 0.5, Language::L1), member("b", 0.5, Language::L1)]).unwrap();
        assert_eq!(cohort_stats(&[0.0], &c, &Fixed, 2, None), Err(Error::ZeroVariance { mean: 0.5 }));

        let c = Cohort::new(vec![
            member("a", 0.1, Language::L1),
            member("b", 0.9, Language::L1),
            member("c", 0.5, Language::L1),
        ])
        .unwrap();
        let st = cohort_stats(&[0.0], &c, &Fixed, 2, None).unwrap();
        assert!((st.mean - 0.7).abs() < 1e-15 && (st.std - 0.2).abs() < 1e-15);
        assert!(matches!(cohort_stats(&[0.0], &c, &Fixed, 4, None), Err(Error::CohortTooSmall { .. })));
    }

    #[test]
    fn language_filter_matches_subcohort() {
        let all = vec![
            member("a", 0.1, Language::L1),
            member("b", 0.9, Language::L2),
            member("c", 0.5, Language::L2),
            member("d", 0.7, Language::L1),
            member("e", 0.3, Language::L2),
        ];
        let mixed = Cohort::new(all.clone()).unwrap();
        let l2 = Cohort::new(all.into_iter().filter(|m| m.language == Language::L2).collect()).unwrap();
        assert_eq!(
            cohort_stats(&[0.0], &mixed, &Fixed, 3, Some(Language::L2)).unwrap(),
            cohort_stats(&[0.0], &l2, &Fixed, 3, None).unwrap()
        );
    }

    #[test]
    fn as_norm_examples() {
        let unit = NormStats { mean: 0.0, std: 1.0, n_top: 2 };
        assert_eq!(as_norm(1.0, &unit, &unit).unwrap(), 2.0);
        let same = NormStats { mean: 0.4, std: 0.3, n_top: 2 };
        assert_eq!(as_norm(0.4, &same, &same).unwrap(), 0.0);
        let enroll = NormStats { mean: 0.5, std: 0.5, n_top: 2 };
        assert_eq!(as_norm(1.0, &enroll, &unit).unwrap(), 2.0);
        let flat = NormStats { mean: 0.5, std: 0.0, n_top: 2 };
        assert!(as_norm(1.0, &flat, &unit).is_err());
    }

    #[test]
    fn monolingual_cohort_reduces_to_plain() {
        let c = Cohort::new(
            (0..6)
                .map(|i| CohortMember {
                    utt_id: format!("c{i}"),
                    vec: vec![(i as f64).cos(), (i as f64).sin(), 0.3],
                    language: Language::L1,
                })
                .collect(),
        )
        .unwrap();
        let (e, t) = ([1.0, 0.2, 0.1], [0.3, 1.0, -0.2]);
        let raw = crate::backend::cosine_score(&e, &t).unwrap();
        let ld = language_dependent_as_norm(raw, &e, &t, &c, &Cosine, 4, Language::L1).unwrap();
        assert_eq!(ld, plain_as_norm(raw, &e, &t, &c, &Cosine, 4).unwrap());
    }

    #[test]
    fn language_id_basics() {
        let clf = LangClassifier::zeros(3);
        assert_eq!(predict_language(&clf, &[1.0, 2.0, 3.0]).unwrap(), (Language::L1, 0.5));
        assert!(predict_language(&clf, &[1.0]).is_err());

        let xs = vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![-1.0, 0.2], vec![-0.8, -0.1]];
        let ls = vec![Language::L1, Language::L1, Language::L2, Language::L2];
        assert_eq!(train_language_id(&xs, &ls, 0, 1.0).unwrap(), LangClassifier::zeros(2));
        let clf = train_language_id(&xs, &ls, 200, 1.0).unwrap();
        for (x, l) in xs.iter().zip(&ls) {
            assert_eq!(predict_language(&clf, x).unwrap().0, *l);
        }
        assert_eq!(train_language_id(&xs[..2], &ls[..2], 5, 1.0), Err(Error::SingleClass));

        let strong = LangClassifier { weights: vec![vec![0.0, 0.0], vec![1.0, 0.0]], bias: vec![0.0, 0.0] };
        let (l, p) = predict_language(&strong, &[100.0, 0.0]).unwrap();
        assert_eq!(l, Language::L2);
        assert!(p > 1.0 - 1e-12);
    }
}
