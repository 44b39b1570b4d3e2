//! Seeded latent-factor corpus generator.
//!
//! Every utterance vector is
//! `normalize(v_spk + α·v_phrase + β·d_lang + σ·ε)` where the speaker and
//! phrase factors are drawn once from an isotropic standard normal, `d_lang`
//! is one fixed direction (scaled to norm `√dim`) applied to every L2
//! utterance, and `ε` is fresh standard-normal noise. Phrases in the first
//! half of the inventory are L1, the rest L2, so an utterance's language
//! follows from its phrase.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::domain::{
    Embedding, Language, Phrase, PhraseInventory, Trial, TrialKey, TrialLabel, UttMeta,
};
use crate::error::{Error, Result};
use crate::linalg::{l2_norm, scale_to_unit};

/// Name of the generator algorithm; recorded in run manifests.
pub const RNG_ALGORITHM: &str =
    "ChaCha20Rng::seed_from_u64 + rand_distr::StandardNormal (ziggurat), rand_chacha 0.9";

const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

/// Builds the seeded generator used everywhere in the toolkit.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream tag (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn standard_normal_vec(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_speakers: usize,
    pub n_phrases: usize,
    pub n_utts_per_cell: usize,
    pub dim: usize,
    /// α: weight of the phrase factor.
    pub phrase_strength: f64,
    /// β: weight of the L2 language shift.
    pub language_shift_strength: f64,
    /// σ: standard deviation of the per-utterance noise.
    pub noise_sigma: f64,
    pub transcript_error_rate: f64,
    /// When false, metadata carries no phrase ids or transcripts
    /// (text-independent data). Phrase factors still shape the vectors.
    pub phrase_labels: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_speakers: 20,
            n_phrases: 4,
            n_utts_per_cell: 6,
            dim: 16,
            phrase_strength: 1.0,
            language_shift_strength: 0.5,
            noise_sigma: 0.5,
            transcript_error_rate: 0.0,
            phrase_labels: true,
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_speakers == 0 || self.n_phrases == 0 || self.n_utts_per_cell == 0 {
            return bad("counts must be positive");
        }
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        for (name, v) in [
            ("phrase_strength", self.phrase_strength),
            ("language_shift_strength", self.language_shift_strength),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.transcript_error_rate) {
            return bad("transcript_error_rate must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn phrase_language(&self, phrase: usize) -> Language {
        if phrase < self.n_phrases.div_ceil(2) {
            Language::L1
        } else {
            Language::L2
        }
    }
}

/// Latent position of one utterance in the generator's grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellIndex {
    pub speaker: usize,
    pub phrase: usize,
    pub rep: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: GenConfig,
    pub embeddings: Vec<Embedding>,
    pub metas: Vec<UttMeta>,
    pub cells: Vec<CellIndex>,
    pub inventory: PhraseInventory,
    pub speaker_factors: Vec<Vec<f64>>,
    pub phrase_factors: Vec<Vec<f64>>,
    pub language_shift: Vec<f64>,
}

pub fn speaker_id(s: usize) -> String {
    format!("s{s:04}")
}

pub fn phrase_id(p: usize) -> String {
    format!("p{p:02}")
}

pub fn utt_id(c: CellIndex) -> String {
    format!("s{:04}-p{:02}-u{:03}", c.speaker, c.phrase, c.rep)
}

fn phrase_text(rng: &mut ChaCha20Rng) -> String {
    let words: Vec<String> = (0..3)
        .map(|_| {
            let len = rng.random_range(4..=7);
            (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char).collect()
        })
        .collect();
    words.join(" ")
}

pub fn gen_corpus(config: &GenConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let dim = config.dim;

    let speaker_factors: Vec<_> =
        (0..config.n_speakers).map(|_| standard_normal_vec(&mut rng, dim)).collect();
    let phrase_factors: Vec<_> =
        (0..config.n_phrases).map(|_| standard_normal_vec(&mut rng, dim)).collect();
    let direction = scale_to_unit(&standard_normal_vec(&mut rng, dim))?;
    let root_dim = (dim as f64).sqrt();
    let language_shift: Vec<f64> = direction.iter().map(|v| v * root_dim).collect();

    let mut text_rng = rng_from_seed(derive_seed(config.seed, 1));
    let inventory = PhraseInventory::new(
        (0..config.n_phrases)
            .map(|p| Phrase {
                phrase_id: phrase_id(p),
                text: phrase_text(&mut text_rng),
                language: config.phrase_language(p),
            })
            .collect(),
    )?;

    let mut embeddings = Vec::new();
    let mut metas = Vec::new();
    let mut cells = Vec::new();
    let (alpha, beta, sigma) =
        (config.phrase_strength, config.language_shift_strength, config.noise_sigma);
    for s in 0..config.n_speakers {
        for p in 0..config.n_phrases {
            let language = config.phrase_language(p);
            let shift = if language == Language::L2 { beta } else { 0.0 };
            for rep in 0..config.n_utts_per_cell {
                let cell = CellIndex { speaker: s, phrase: p, rep };
                let noise = standard_normal_vec(&mut rng, dim);
                let x: Vec<f64> = (0..dim)
                    .map(|i| {
                        speaker_factors[s][i]
                            + alpha * phrase_factors[p][i]
                            + shift * language_shift[i]
                            + sigma * noise[i]
                    })
                    .collect();
                if l2_norm(&x) == 0.0 {
                    return Err(Error::Degenerate(format!("zero vector for {}", utt_id(cell))));
                }
                let id = utt_id(cell);
                let transcript = config.phrase_labels.then(|| {
                    let idx = embeddings.len() as u64;
                    gen_transcript(
                        &inventory.entries()[p].text,
                        config.transcript_error_rate,
                        derive_seed(config.seed, 2 + idx),
                    )
                });
                embeddings.push(Embedding::new(id.clone(), scale_to_unit(&x)?));
                metas.push(UttMeta {
                    utt_id: id,
                    speaker_id: speaker_id(s),
                    phrase_id: config.phrase_labels.then(|| phrase_id(p)),
                    language,
                    transcript,
                });
                cells.push(cell);
            }
        }
    }

    Ok(SynthCorpus {
        config: config.clone(),
        embeddings,
        metas,
        cells,
        inventory,
        speaker_factors,
        phrase_factors,
        language_shift,
    })
}

impl SynthCorpus {
    /// Keeps only the utterances of speakers in `speakers`; latent factors
    /// and the inventory are retained unchanged.
    pub fn restrict_speakers(&self, speakers: Range<usize>) -> SynthCorpus {
        let keep: Vec<usize> = (0..self.cells.len())
            .filter(|&i| speakers.contains(&self.cells[i].speaker))
            .collect();
        SynthCorpus {
            config: self.config.clone(),
            embeddings: keep.iter().map(|&i| self.embeddings[i].clone()).collect(),
            metas: keep.iter().map(|&i| self.metas[i].clone()).collect(),
            cells: keep.iter().map(|&i| self.cells[i]).collect(),
            inventory: self.inventory.clone(),
            speaker_factors: self.speaker_factors.clone(),
            phrase_factors: self.phrase_factors.clone(),
            language_shift: self.language_shift.clone(),
        }
    }

    fn speakers(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.speaker).collect::<BTreeSet<_>>().into_iter().collect()
    }

    fn has_phrase_labels(&self) -> bool {
        self.metas.iter().all(|m| m.phrase_id.is_some())
    }
}

/// Applies independent per-character substitution, insertion or deletion
/// events, each character being hit with probability `error_rate`.
pub fn gen_transcript(reference: &str, error_rate: f64, seed: u64) -> String {
    if error_rate <= 0.0 {
        return reference.to_string();
    }
    let mut rng = rng_from_seed(seed);
    let mut out = String::with_capacity(reference.len() + 4);
    let random_letter = |rng: &mut ChaCha20Rng| ALPHABET[rng.random_range(0..ALPHABET.len())] as char;
    for c in reference.chars() {
        if rng.random::<f64>() >= error_rate {
            out.push(c);
            continue;
        }
        match rng.random_range(0..3) {
            0 => loop {
                let r = random_letter(&mut rng);
                if r != c {
                    out.push(r);
                    break;
                }
            },
            1 => {
                out.push(random_letter(&mut rng));
                out.push(c);
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Text-dependent: TC/TW/IC/IW trials with a claimed phrase.
    TextDependent,
    /// Text-independent: TARGET/NONTARGET, L1 enrollment, mixed-language tests.
    TextIndependent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub task: Task,
    pub n_trials: usize,
    pub seed: u64,
    /// Relative weights of TC, TW, IC, IW (text-dependent only).
    pub proportions: [f64; 4],
    /// Share of target trials (text-independent only).
    pub target_fraction: f64,
    /// Share of L2 test utterances (text-independent only).
    pub l2_test_fraction: f64,
    pub n_enroll: usize,
    pub id_prefix: String,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            task: Task::TextDependent,
            n_trials: 1000,
            seed: 1,
            proportions: [0.25; 4],
            target_fraction: 0.5,
            l2_test_fraction: 0.5,
            n_enroll: 3,
            id_prefix: "t".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    pub keys: Vec<TrialKey>,
    /// model_id → enrollment utterance ids, for every model some trial uses.
    pub enrollments: BTreeMap<String, Vec<String>>,
}

/// Splits `total` into integer counts proportional to `weights`
/// (largest-remainder rounding; ties go to the lower index).
pub fn apportion(total: usize, weights: &[f64]) -> Result<Vec<usize>> {
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || sum <= 0.0 {
        return Err(Error::InvalidConfig("proportions must be non-negative with a positive sum".into()));
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if weights[i] > 0.0 {
            counts[i] += 1;
            rest -= 1;
        }
    }
    Ok(counts)
}

fn pick<'a, T>(rng: &mut ChaCha20Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

pub fn gen_trials(corpus: &SynthCorpus, spec: &TrialSpec) -> Result<TrialSet> {
    if spec.n_enroll == 0 {
        return Err(Error::InvalidConfig("n_enroll must be positive".into()));
    }
    let speakers = corpus.speakers();
    if speakers.len() < 2 {
        return Err(Error::Infeasible("at least two speakers are required".into()));
    }
    match spec.task {
        Task::TextDependent => gen_td_trials(corpus, spec, &speakers),
        Task::TextIndependent => gen_ti_trials(corpus, spec, &speakers),
    }
}

fn gen_td_trials(corpus: &SynthCorpus, spec: &TrialSpec, speakers: &[usize]) -> Result<TrialSet> {
    if !corpus.has_phrase_labels() {
        return Err(Error::Infeasible("text-dependent trials need phrase labels".into()));
    }
    let counts = apportion(spec.n_trials, &spec.proportions)?;
    let n_phrases = corpus.config.n_phrases;
    if (counts[1] > 0 || counts[3] > 0) && n_phrases < 2 {
        return Err(Error::Infeasible("TW/IW trials need at least two phrases".into()));
    }
    if corpus.config.n_utts_per_cell <= spec.n_enroll {
        return Err(Error::Infeasible(format!(
            "cells hold {} utterances; {} enrollment + 1 test needed",
            corpus.config.n_utts_per_cell, spec.n_enroll
        )));
    }

    let mut by_cell: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, c) in corpus.cells.iter().enumerate() {
        by_cell.entry((c.speaker, c.phrase)).or_default().push(i);
    }
    let enroll_of = |s: usize, p: usize| -> Vec<String> {
        by_cell[&(s, p)]
            .iter()
            .filter(|&&i| corpus.cells[i].rep < spec.n_enroll)
            .map(|&i| corpus.metas[i].utt_id.clone())
            .collect()
    };
    let test_pool = |s: usize, p: usize| -> Vec<usize> {
        by_cell[&(s, p)].iter().copied().filter(|&i| corpus.cells[i].rep >= spec.n_enroll).collect()
    };

    let mut labels = Vec::with_capacity(spec.n_trials);
    for (label, &n) in [TrialLabel::Tc, TrialLabel::Tw, TrialLabel::Ic, TrialLabel::Iw].iter().zip(&counts) {
        labels.extend(std::iter::repeat_n(*label, n));
    }
    let mut rng = rng_from_seed(spec.seed);
    labels.shuffle(&mut rng);

    let phrases: Vec<usize> = (0..n_phrases).collect();
    let mut out = TrialSet { trials: Vec::new(), keys: Vec::new(), enrollments: BTreeMap::new() };
    for (i, label) in labels.into_iter().enumerate() {
        let s = *pick(&mut rng, speakers);
        let p = *pick(&mut rng, &phrases);
        let other_speaker = |rng: &mut ChaCha20Rng| loop {
            let r = *pick(rng, speakers);
            if r != s {
                break r;
            }
        };
        let other_phrase = |rng: &mut ChaCha20Rng| loop {
            let q = *pick(rng, &phrases);
            if q != p {
                break q;
            }
        };
        let (ts, tp) = match label {
            TrialLabel::Tc => (s, p),
            TrialLabel::Tw => (s, other_phrase(&mut rng)),
            TrialLabel::Ic => (other_speaker(&mut rng), p),
            _ => {
                let r = other_speaker(&mut rng);
                (r, other_phrase(&mut rng))
            }
        };
        let test = *pick(&mut rng, &test_pool(ts, tp));
        let model_id = format!("m-{}-{}", speaker_id(s), phrase_id(p));
        out.enrollments.entry(model_id.clone()).or_insert_with(|| enroll_of(s, p));
        let trial_id = format!("{}{i:06}", spec.id_prefix);
        out.trials.push(Trial {
            trial_id: trial_id.clone(),
            model_id,
            test_utt_id: corpus.metas[test].utt_id.clone(),
            claimed_phrase_id: Some(phrase_id(p)),
        });
        out.keys.push(TrialKey { trial_id, label });
    }
    Ok(out)
}

fn gen_ti_trials(corpus: &SynthCorpus, spec: &TrialSpec, speakers: &[usize]) -> Result<TrialSet> {
    if !(0.0..=1.0).contains(&spec.target_fraction) || !(0.0..=1.0).contains(&spec.l2_test_fraction) {
        return Err(Error::InvalidConfig("fractions must lie in [0, 1]".into()));
    }
    // Enrollment: each speaker's first L1 utterances, taken rep-major so they
    // spread across phrases.
    let mut order: Vec<usize> = (0..corpus.cells.len()).collect();
    order.sort_by_key(|&i| {
        let c = corpus.cells[i];
        (c.speaker, c.rep, c.phrase)
    });
    let mut enroll: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        let c = corpus.cells[i];
        if corpus.metas[i].language == Language::L1 {
            let e = enroll.entry(c.speaker).or_default();
            if e.len() < spec.n_enroll {
                e.push(i);
            }
        }
    }
    let enrolled: BTreeSet<usize> = enroll.values().flatten().copied().collect();
    let mut pool: BTreeMap<(usize, Language), Vec<usize>> = BTreeMap::new();
    for i in 0..corpus.cells.len() {
        if !enrolled.contains(&i) {
            pool.entry((corpus.cells[i].speaker, corpus.metas[i].language)).or_default().push(i);
        }
    }
    for &s in speakers {
        if enroll.get(&s).map_or(0, Vec::len) < spec.n_enroll {
            return Err(Error::Infeasible(format!("speaker {} lacks L1 enrollment data", speaker_id(s))));
        }
        if !Language::ALL.iter().any(|&l| pool.contains_key(&(s, l))) {
            return Err(Error::Infeasible(format!("speaker {} has no test utterances", speaker_id(s))));
        }
    }

    let counts = apportion(spec.n_trials, &[spec.target_fraction, 1.0 - spec.target_fraction])?;
    let mut labels: Vec<TrialLabel> = std::iter::repeat_n(TrialLabel::Target, counts[0])
        .chain(std::iter::repeat_n(TrialLabel::Nontarget, counts[1]))
        .collect();
    let mut rng = rng_from_seed(spec.seed);
    labels.shuffle(&mut rng);

    let mut out = TrialSet { trials: Vec::new(), keys: Vec::new(), enrollments: BTreeMap::new() };
    for (i, label) in labels.into_iter().enumerate() {
        let s = *pick(&mut rng, speakers);
        let ts = if label == TrialLabel::Target {
            s
        } else {
            loop {
                let r = *pick(&mut rng, speakers);
                if r != s {
                    break r;
                }
            }
        };
        let want = if rng.random::<f64>() < spec.l2_test_fraction { Language::L2 } else { Language::L1 };
        let candidates = pool
            .get(&(ts, want))
            .or_else(|| pool.get(&(ts, Language::L1)))
            .or_else(|| pool.get(&(ts, Language::L2)))
            .expect("checked above");
        let test = *pick(&mut rng, candidates);
        let model_id = format!("m-{}", speaker_id(s));
        out.enrollments
            .entry(model_id.clone())
            .or_insert_with(|| enroll[&s].iter().map(|&j| corpus.metas[j].utt_id.clone()).collect());
        let trial_id = format!("{}{i:06}", spec.id_prefix);
        out.trials.push(Trial {
            trial_id: trial_id.clone(),
            model_id,
            test_utt_id: corpus.metas[test].utt_id.clone(),
            claimed_phrase_id: None,
        });
        out.keys.push(TrialKey { trial_id, label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_protocol;

    #[test]
    fn noise_free_speaker_utterances_coincide() {
        let cfg = GenConfig {
            phrase_strength: 0.0,
            language_shift_strength: 0.0,
            noise_sigma: 0.0,
            ..GenConfig::default()
        };
        let c = gen_corpus(&cfg).unwrap();
        for (i, cell) in c.cells.iter().enumerate() {
            let first = c.cells.iter().position(|d| d.speaker == cell.speaker).unwrap();
            assert_eq!(c.embeddings[i].vec, c.embeddings[first].vec);
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = GenConfig { seed: 7, transcript_error_rate: 0.2, ..GenConfig::default() };
        let a = gen_corpus(&cfg).unwrap();
        let b = gen_corpus(&cfg).unwrap();
        assert_eq!(a, b);
        let bits = |c: &SynthCorpus| -> Vec<u64> {
            c.embeddings.iter().flat_map(|e| e.vec.iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let other = gen_corpus(&GenConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(bits(&a), bits(&other));
    }

    #[test]
    fn embeddings_are_unit_norm() {
        let c = gen_corpus(&GenConfig::default()).unwrap();
        for e in &c.embeddings {
            assert!((l2_norm(&e.vec) - 1.0).abs() < 1e-12);
        }
        assert_eq!(c.embeddings.len(), c.metas.len());
        assert!(c.speaker_factors.iter().chain(&c.phrase_factors).all(|v| v.len() == 16));
    }

    /// Nearest-centroid accuracy, computed by brute force over the corpus.
    fn nearest_centroid_accuracy(c: &SynthCorpus, class_of: impl Fn(&CellIndex) -> usize) -> f64 {
        let n_classes = c.cells.iter().map(&class_of).max().unwrap() + 1;
        let dim = c.config.dim;
        let mut sums = vec![vec![0.0; dim]; n_classes];
        let mut counts = vec![0usize; n_classes];
        for (e, cell) in c.embeddings.iter().zip(&c.cells) {
            let k = class_of(cell);
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(&e.vec) {
                *s += v;
            }
        }
        let correct = c
            .embeddings
            .iter()
            .zip(&c.cells)
            .filter(|(e, cell)| {
                let best = (0..n_classes)
                    .map(|k| {
                        let d: f64 = sums[k]
                            .iter()
                            .zip(&e.vec)
                            .map(|(s, v)| (s / counts[k] as f64 - v).powi(2))
                            .sum();
                        (k, d)
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap()
                    .0;
                best == class_of(cell)
            })
            .count();
        correct as f64 / c.cells.len() as f64
    }

    #[test]
    fn strong_phrase_factor_dominates_classification() {
        let cfg = GenConfig { phrase_strength: 4.0, noise_sigma: 1.0, ..GenConfig::default() };
        let c = gen_corpus(&cfg).unwrap();
        let phrase_acc = nearest_centroid_accuracy(&c, |cell| cell.phrase);
        let speaker_acc = nearest_centroid_accuracy(&c, |cell| cell.speaker);
        assert!(phrase_acc > speaker_acc, "{phrase_acc} vs {speaker_acc}");
    }

    #[test]
    fn transcript_rules() {
        assert_eq!(gen_transcript("salam", 0.0, 3), "salam");
        assert_eq!(gen_transcript("salam donya", 0.5, 9), gen_transcript("salam donya", 0.5, 9));
    }

    #[test]
    fn transcript_error_rate_is_respected() {
        use crate::eval::levenshtein;
        let reference: String = "the quick brown fox jumps over lazy dogs ".repeat(5);
        let reference = &reference[..100];
        let mut edits = 0usize;
        let mut chars = 0usize;
        for k in 0..100 {
            let t = gen_transcript(reference, 0.1, derive_seed(11, k));
            edits += levenshtein(reference, &t);
            chars += reference.len();
        }
        let rate = edits as f64 / chars as f64;
        assert!((0.08..=0.12).contains(&rate), "observed {rate}");
    }

    #[test]
    fn apportion_sums_and_rounds() {
        assert_eq!(apportion(10, &[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![10, 0, 0, 0]);
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![3, 3, 2, 2]);
        assert!(apportion(10, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn td_all_tc() {
        let c = gen_corpus(&GenConfig::default()).unwrap();
        let spec = TrialSpec { proportions: [1.0, 0.0, 0.0, 0.0], n_trials: 50, ..TrialSpec::default() };
        let set = gen_trials(&c, &spec).unwrap();
        assert!(set.keys.iter().all(|k| k.label == TrialLabel::Tc));
    }

    #[test]
    fn td_histogram_and_semantics() {
        let c = gen_corpus(&GenConfig::default()).unwrap();
        let spec = TrialSpec { n_trials: 1001, seed: 4, ..TrialSpec::default() };
        let set = gen_trials(&c, &spec).unwrap();
        let mut hist = BTreeMap::new();
        for k in &set.keys {
            *hist.entry(k.label).or_insert(0usize) += 1;
        }
        let expected = apportion(1001, &[0.25; 4]).unwrap();
        assert_eq!(
            [TrialLabel::Tc, TrialLabel::Tw, TrialLabel::Ic, TrialLabel::Iw].map(|l| hist[&l]).to_vec(),
            expected
        );
        let meta: BTreeMap<_, _> = c.metas.iter().map(|m| (m.utt_id.as_str(), m)).collect();
        for (t, k) in set.trials.iter().zip(&set.keys) {
            let enrolled = &set.enrollments[&t.model_id];
            assert_eq!(enrolled.len(), 3);
            assert!(!enrolled.contains(&t.test_utt_id));
            let e = meta[enrolled[0].as_str()];
            let m = meta[t.test_utt_id.as_str()];
            let same_spk = e.speaker_id == m.speaker_id;
            let same_phrase = t.claimed_phrase_id == m.phrase_id;
            let expect = match (same_spk, same_phrase) {
                (true, true) => TrialLabel::Tc,
                (true, false) => TrialLabel::Tw,
                (false, true) => TrialLabel::Ic,
                (false, false) => TrialLabel::Iw,
            };
            assert_eq!(k.label, expect);
        }
        assert!(validate_protocol(&set.trials, &set.keys, &c.metas, &set.enrollments).is_empty());
    }

    #[test]
    fn ti_trials_are_consistent() {
        let c = gen_corpus(&GenConfig { phrase_labels: false, ..GenConfig::default() }).unwrap();
        let spec = TrialSpec { task: Task::TextIndependent, n_trials: 100, ..TrialSpec::default() };
        let set = gen_trials(&c, &spec).unwrap();
        assert_eq!(set.trials.len(), 100);
        assert!(validate_protocol(&set.trials, &set.keys, &c.metas, &set.enrollments).is_empty());
        let meta: BTreeMap<_, _> = c.metas.iter().map(|m| (m.utt_id.as_str(), m)).collect();
        let mut langs = BTreeSet::new();
        for t in &set.trials {
            for u in &set.enrollments[&t.model_id] {
                assert_eq!(meta[u.as_str()].language, Language::L1);
            }
            langs.insert(meta[t.test_utt_id.as_str()].language);
        }
        assert_eq!(langs.len(), 2);
    }

    #[test]
    fn infeasible_requests() {
        let one_phrase = gen_corpus(&GenConfig { n_phrases: 1, ..GenConfig::default() }).unwrap();
        let spec = TrialSpec { proportions: [0.0, 1.0, 0.0, 0.0], ..TrialSpec::default() };
        assert!(matches!(gen_trials(&one_phrase, &spec), Err(Error::Infeasible(_))));
        let unlabeled = gen_corpus(&GenConfig { phrase_labels: false, ..GenConfig::default() }).unwrap();
        assert!(matches!(gen_trials(&unlabeled, &TrialSpec::default()), Err(Error::Infeasible(_))));
        let lone = gen_corpus(&GenConfig { n_speakers: 1, ..GenConfig::default() }).unwrap();
        assert!(gen_trials(&lone, &TrialSpec::default()).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(gen_corpus(&GenConfig { dim: 1, ..GenConfig::default() }).is_err());
        assert!(gen_corpus(&GenConfig { noise_sigma: -1.0, ..GenConfig::default() }).is_err());
        assert!(gen_corpus(&GenConfig { transcript_error_rate: 1.5, ..GenConfig::default() }).is_err());
        assert!(gen_corpus(&GenConfig { n_speakers: 0, ..GenConfig::default() }).is_err());
    }

    #[test]
    fn without_language_shift_cross_language_centroids_converge() {
        // Same speaker/phrase law for L1 and L2 when β = 0: only noise separates
        // a speaker's L1 and L2 centroids, so the gap shrinks with σ.
        let gap = |sigma: f64| {
            let cfg = GenConfig {
                phrase_strength: 0.0,
                language_shift_strength: 0.0,
                noise_sigma: sigma,
                n_utts_per_cell: 20,
                ..GenConfig::default()
            };
            let c = gen_corpus(&cfg).unwrap();
            let mut total = 0.0;
            for s in 0..cfg.n_speakers {
                let mean = |lang: Language| {
                    let mut m = vec![0.0; cfg.dim];
                    let mut n = 0.0;
                    for (e, meta) in c.embeddings.iter().zip(&c.metas) {
                        if meta.speaker_id == speaker_id(s) && meta.language == lang {
                            m.iter_mut().zip(&e.vec).for_each(|(a, b)| *a += b);
                            n += 1.0;
                        }
                    }
                    m.into_iter().map(|v| v / n).collect::<Vec<_>>()
                };
                let (a, b) = (mean(Language::L1), mean(Language::L2));
                total += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            }
            total / cfg.n_speakers as f64
        };
        let (big, small, zero) = (gap(0.5), gap(0.05), gap(0.0));
        assert!(small < big);
        assert!(zero < 1e-12);
    }
}
