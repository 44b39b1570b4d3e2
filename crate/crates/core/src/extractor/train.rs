use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::{check_collection, Embedding, UttMeta};
use crate::error::{Error, Result};
use crate::synthgen::{derive_seed, rng_from_seed};

use super::losses::{
    aam_loss, pct_loss, pmt_loss, product_label, spk_plus_phrase_loss, AamHead, Ge2eParams, LossGrad,
    DEFAULT_AAM_MARGIN, DEFAULT_AAM_SCALE,
};
use super::network::{backward_batch, forward_batch, Extractor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    AamOnly,
    SpkPlusPhrase,
    SpkTimesPhrase,
    Pmt,
    Pct,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::AamOnly, Strategy::SpkPlusPhrase, Strategy::SpkTimesPhrase, Strategy::Pmt, Strategy::Pct];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::AamOnly => "aam",
            Strategy::SpkPlusPhrase => "spk+phrase",
            Strategy::SpkTimesPhrase => "spkxphrase",
            Strategy::Pmt => "pmt",
            Strategy::Pct => "pct",
        }
    }

    pub fn needs_phrase_labels(self) -> bool {
        self != Strategy::AamOnly
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// Utterances per batch for the non-contrastive strategies.
    pub batch_size: usize,
    /// Speakers per PCT batch (two utterances each).
    pub pct_speakers: usize,
    pub lambda: f64,
    pub mu: f64,
    pub scale: f64,
    pub margin: f64,
    pub ge2e_init: Ge2eParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::AamOnly,
            epochs: 165,
            lr_initial: 0.1,
            lr_final: 1e-5,
            batch_size: 64,
            pct_speakers: 8,
            lambda: 1.0,
            mu: 1.0,
            scale: DEFAULT_AAM_SCALE,
            margin: DEFAULT_AAM_MARGIN,
            ge2e_init: Ge2eParams::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0 && self.lr_initial.is_finite() && self.lr_final.is_finite()) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.pct_speakers < 2 {
            return bad("pct_speakers must be at least 2");
        }
        if !(self.lambda >= 0.0 && self.mu >= 0.0 && self.lambda.is_finite() && self.mu.is_finite()) {
            return bad("lambda and mu must be finite and >= 0");
        }
        if !(self.ge2e_init.w > 0.0) {
            return bad("GE2E scale must be positive");
        }
        AamHead::new(DMatrix::identity(1, 1), self.scale, self.margin).map(|_| ())
    }

    /// Rate for `epoch`, decaying geometrically from `lr_initial` to `lr_final`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr_initial;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        self.lr_initial * (self.lr_final / self.lr_initial).powf(t)
    }
}

/// Features with dense integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub features: DMatrix<f64>,
    pub speakers: Vec<usize>,
    pub phrases: Option<Vec<usize>>,
    pub speaker_ids: Vec<String>,
    pub phrase_ids: Vec<String>,
}

impl TrainData {
    /// Labels are assigned in sorted id order. Phrase labels are present only
    /// when every utterance carries a phrase id.
    pub fn from_corpus(embeddings: &[Embedding], metas: &[UttMeta]) -> Result<Self> {
        let dim = check_collection(embeddings)?;
        let by_id: BTreeMap<&str, &UttMeta> = metas.iter().map(|m| (m.utt_id.as_str(), m)).collect();
        let mut rows = Vec::with_capacity(embeddings.len());
        for e in embeddings {
            rows.push(*by_id.get(e.utt_id.as_str()).ok_or_else(|| Error::Missing {
                kind: "metadata",
                id: e.utt_id.clone(),
            })?);
        }
        let index = |ids: Vec<&str>| -> (Vec<String>, BTreeMap<String, usize>) {
            let mut u: Vec<String> = ids.into_iter().map(str::to_string).collect();
            u.sort();
            u.dedup();
            let m = u.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
            (u, m)
        };
        let (speaker_ids, spk_map) = index(rows.iter().map(|m| m.speaker_id.as_str()).collect());
        let speakers = rows.iter().map(|m| spk_map[&m.speaker_id]).collect();
        let (phrase_ids, phrases) = if rows.iter().all(|m| m.phrase_id.is_some()) {
            let (ids, map) = index(rows.iter().map(|m| m.phrase_id.as_deref().unwrap()).collect());
            let labels = rows.iter().map(|m| map[m.phrase_id.as_ref().unwrap()]).collect();
            (ids, Some(labels))
        } else {
            (Vec::new(), None)
        };
        let flat: Vec<f64> = embeddings.iter().flat_map(|e| e.vec.iter().copied()).collect();
        Ok(Self {
            features: DMatrix::from_row_slice(embeddings.len(), dim, &flat),
            speakers,
            phrases,
            speaker_ids,
            phrase_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_speakers(&self) -> usize {
        self.speakers.iter().max().map_or(0, |m| m + 1)
    }

    pub fn n_phrases(&self) -> usize {
        self.phrases.as_ref().and_then(|p| p.iter().max()).map_or(0, |m| m + 1)
    }
}

/// Classification heads and contrastive parameters learned alongside the
/// extractor. Head layout depends on the strategy: one speaker head; speaker
/// then phrase head; one product-class head; or one head per phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct Heads {
    pub aam: Vec<AamHead>,
    pub ge2e: Option<Ge2eParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub extractor: Extractor,
    pub heads: Heads,
    /// Mean batch loss of each epoch.
    pub trace: Vec<f64>,
}

fn init_heads(config: &TrainConfig, data: &TrainData, dim: usize) -> Result<Heads> {
    let mut rng = rng_from_seed(derive_seed(config.seed, 0x4EAD));
    let (s, p) = (data.n_speakers(), data.n_phrases());
    let mut head = |classes: usize| AamHead::random(dim, classes, config.scale, config.margin, &mut rng);
    let aam = match config.strategy {
        Strategy::AamOnly | Strategy::Pct => vec![head(s)?],
        Strategy::SpkPlusPhrase => vec![head(s)?, head(p)?],
        Strategy::SpkTimesPhrase => vec![head(s * p)?],
        Strategy::Pmt => (0..p).map(|_| head(s)).collect::<Result<_>>()?,
    };
    let ge2e = (config.strategy == Strategy::Pct).then_some(config.ge2e_init);
    Ok(Heads { aam, ge2e })
}

fn shuffled_batches(n: usize, size: usize, rng: &mut rand_chacha::ChaCha20Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(size).map(<[usize]>::to_vec).collect()
}

/// Single-phrase batches with two distinct utterances for each sampled speaker.
fn pct_batches(data: &TrainData, phrases: &[usize], speakers_per_batch: usize, rng: &mut rand_chacha::ChaCha20Rng) -> Vec<Vec<usize>> {
    let mut cells: BTreeMap<usize, BTreeMap<usize, Vec<usize>>> = BTreeMap::new();
    for i in 0..data.len() {
        cells.entry(phrases[i]).or_default().entry(data.speakers[i]).or_default().push(i);
    }
    let mut phrase_order: Vec<usize> = cells.keys().copied().collect();
    phrase_order.shuffle(rng);
    let mut batches = Vec::new();
    for p in phrase_order {
        let mut spk: Vec<(&usize, &Vec<usize>)> = cells[&p].iter().filter(|(_, u)| u.len() >= 2).collect();
        spk.shuffle(rng);
        for group in spk.chunks(speakers_per_batch) {
            if group.len() < 2 {
                continue;
            }
            let mut batch = Vec::with_capacity(2 * group.len());
            for (_, utts) in group {
                let a = rng.random_range(0..utts.len());
                let mut b = rng.random_range(0..utts.len() - 1);
                if b >= a {
                    b += 1;
                }
                batch.push(utts[a]);
                batch.push(utts[b]);
            }
            batches.push(batch);
        }
    }
    batches.shuffle(rng);
    batches
}

fn batch_loss(
    config: &TrainConfig,
    heads: &Heads,
    emb: &DMatrix<f64>,
    spk: &[usize],
    phr: Option<&[usize]>,
    n_phrases: usize,
) -> Result<LossGrad> {
    match config.strategy {
        Strategy::AamOnly => aam_loss(emb, spk, &heads.aam[0]),
        Strategy::SpkPlusPhrase => spk_plus_phrase_loss(emb, spk, phr, &heads.aam[0], &heads.aam[1], config.lambda),
        Strategy::SpkTimesPhrase => {
            let phr = phr.expect("phrase labels checked");
            let labels = spk
                .iter()
                .zip(phr)
                .map(|(&s, &p)| product_label(s, p, n_phrases))
                .collect::<Result<Vec<_>>>()?;
            aam_loss(emb, &labels, &heads.aam[0])
        }
        Strategy::Pmt => pmt_loss(emb, spk, phr.expect("phrase labels checked"), &heads.aam),
        Strategy::Pct => pct_loss(
            emb,
            spk,
            phr.expect("phrase labels checked"),
            &heads.aam[0],
            heads.ge2e.as_ref().expect("ge2e params"),
            config.mu,
        ),
    }
}

/// Plain mini-batch gradient descent with a geometric learning-rate decay.
/// `init_heads` continues training with existing heads (e.g. fine-tuning with
/// the same label space); otherwise heads are drawn from the seed.
pub fn train(extractor: &Extractor, data: &TrainData, config: &TrainConfig, init: Option<Heads>) -> Result<TrainResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if data.features.ncols() != extractor.input_dim() {
        return Err(Error::DimensionMismatch { expected: extractor.input_dim(), found: data.features.ncols() });
    }
    if config.strategy.needs_phrase_labels() && data.phrases.is_none() {
        return Err(Error::Constraint(format!("strategy {} requires phrase labels", config.strategy)));
    }
    let dim = extractor.embedding_dim();
    let mut heads = match init {
        Some(h) => h,
        None => init_heads(config, data, dim)?,
    };
    if config.strategy == Strategy::Pct && heads.ge2e.is_none() {
        heads.ge2e = Some(config.ge2e_init);
    }
    let mut ex = extractor.clone();
    let mut rng = rng_from_seed(config.seed);
    let mut trace = Vec::with_capacity(config.epochs);
    let n_phrases = data.n_phrases();

    for epoch in 0..config.epochs {
        let lr = config.learning_rate(epoch);
        let batches = match (config.strategy, &data.phrases) {
            (Strategy::Pct, Some(p)) => pct_batches(data, p, config.pct_speakers, &mut rng),
            _ => shuffled_batches(data.len(), config.batch_size, &mut rng),
        };
        if batches.is_empty() {
            return Err(Error::Constraint("no valid batch could be formed".into()));
        }
        let mut total = 0.0;
        for batch in &batches {
            let x = DMatrix::from_fn(batch.len(), data.features.ncols(), |r, c| data.features[(batch[r], c)]);
            let spk: Vec<usize> = batch.iter().map(|&i| data.speakers[i]).collect();
            let phr: Option<Vec<usize>> = data.phrases.as_ref().map(|p| batch.iter().map(|&i| p[i]).collect());
            let cache = forward_batch(&ex, &x)?;
            let lg = batch_loss(config, &heads, &cache.embeddings, &spk, phr.as_deref(), n_phrases)?;
            total += lg.loss;
            let g = backward_batch(&ex, &x, &cache, &lg.grad_embeddings);
            ex.w1 -= g.w1 * lr;
            ex.b1 -= g.b1 * lr;
            ex.w2 -= g.w2 * lr;
            ex.b2 -= g.b2 * lr;
            for (h, gh) in heads.aam.iter_mut().zip(&lg.grad_heads) {
                h.weights -= gh * lr;
                h.renormalize()?;
            }
            if let (Some(p), Some((gw, gb))) = (heads.ge2e.as_mut(), lg.grad_ge2e) {
                p.w -= lr * gw;
                p.b -= lr * gb;
                p.clamp();
            }
        }
        if !ex.is_finite() {
            return Err(Error::NonFinite("extractor parameters after update"));
        }
        trace.push(total / batches.len() as f64);
    }
    Ok(TrainResult { extractor: ex, heads, trace })
}
