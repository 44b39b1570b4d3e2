use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use spkver::domain::{Trial, TrialKey, TrialLabel};
use spkver::eval::*;
use spkver::synthgen::{gen_corpus, gen_trials, rng_from_seed, GenConfig, Task, TrialSpec};

/// Accept-when-`score >= t` error rates recounted from scratch at every
/// threshold between distinct scores and beyond both ends.
fn brute_points(tgt: &[f64], non: &[f64]) -> Vec<(f64, f64)> {
    let mut all: Vec<f64> = tgt.iter().chain(non).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(f64::INFINITY);
    thresholds
        .into_iter()
        .map(|t| {
            let miss = tgt.iter().filter(|&&s| s < t).count() as f64 / tgt.len() as f64;
            let fa = non.iter().filter(|&&s| s >= t).count() as f64 / non.len() as f64;
            (miss, fa)
        })
        .collect()
}

fn brute_eer(tgt: &[f64], non: &[f64]) -> f64 {
    let pts = brute_points(tgt, non);
    for k in 0..pts.len() {
        let (m, f) = pts[k];
        if m >= f {
            if m == f || k == 0 {
                return m;
            }
            let (m0, f0) = pts[k - 1];
            let a = (f0 - m0) / ((f0 - m0) + (m - f));
            return m0 + a * (m - m0);
        }
    }
    unreachable!()
}

fn brute_min_dcf(tgt: &[f64], non: &[f64], p: &DcfParams) -> f64 {
    let norm = (p.c_miss * p.p_target).min(p.c_fa * (1.0 - p.p_target));
    brute_points(tgt, non)
        .into_iter()
        .map(|(m, f)| (p.c_miss * p.p_target * m + p.c_fa * (1.0 - p.p_target) * f) / norm)
        .fold(f64::INFINITY, f64::min)
}

fn random_lists(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let nt = rng.random_range(1..60);
    let nn = rng.random_range(1..140);
    // Coarse values force ties between and within classes.
    let q = |rng: &mut rand_chacha::ChaCha20Rng, mu: f64| ((mu + rng.random::<f64>() * 2.0) * 8.0).round() / 8.0;
    let t = (0..nt).map(|_| q(&mut rng, 0.7)).collect();
    let n = (0..nn).map(|_| q(&mut rng, 0.0)).collect();
    (t, n)
}

#[test]
fn metrics_match_brute_force() {
    let params = DcfParams::default();
    for seed in 0..100 {
        let (t, n) = random_lists(seed);
        assert!((eer_of(&t, &n).unwrap() - brute_eer(&t, &n)).abs() < 1e-12, "seed {seed}");
        assert!((min_dcf_of(&t, &n, &params).unwrap().0 - brute_min_dcf(&t, &n, &params)).abs() < 1e-12);
    }
}

#[test]
fn spec_metric_examples() {
    assert_eq!(eer_of(&[1.0, 0.9], &[0.1, 0.2]).unwrap(), 0.0);
    assert_eq!(eer_of(&[3.0, 2.0], &[1.0, 2.5]).unwrap(), 0.5);
    assert_eq!(eer_of(&[0.3; 4], &[0.3; 6]).unwrap(), 0.5);
    let p = DcfParams::default();
    assert_eq!(min_dcf_of(&[1.0, 0.9], &[0.1, 0.2], &p).unwrap().0, 0.0);
    assert!((min_dcf_of(&[0.3; 4], &[0.3; 6], &p).unwrap().0 - 1.0).abs() < 1e-12);
    assert!(eer_of(&[1.0], &[]).is_err());
}

#[test]
fn min_dcf_threshold_attains_the_cost() {
    let p = DcfParams::default();
    for seed in 0..20 {
        let (t, n) = random_lists(seed + 500);
        let (cost, thr) = min_dcf_of(&t, &n, &p).unwrap();
        let miss = t.iter().filter(|&&s| s < thr).count() as f64 / t.len() as f64;
        let fa = n.iter().filter(|&&s| s >= thr).count() as f64 / n.len() as f64;
        assert!((p.normalized_cost(miss, fa) - cost).abs() < 1e-12);
    }
}

#[test]
fn phrase_classification_is_accurate_under_noise() {
    let corpus = gen_corpus(&GenConfig {
        n_speakers: 25,
        n_phrases: 4,
        n_utts_per_cell: 10,
        transcript_error_rate: 0.1,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let inv = &corpus.inventory;
    for a in inv.entries() {
        for b in inv.entries() {
            if a.phrase_id != b.phrase_id {
                let len = a.text.chars().count().max(b.text.chars().count());
                assert!(levenshtein(&a.text, &b.text) as f64 >= 0.3 * len as f64);
            }
        }
    }
    let correct = corpus
        .metas
        .iter()
        .filter(|m| classify_phrase(m.transcript.as_ref().unwrap(), inv).unwrap() == m.phrase_id.as_ref().unwrap())
        .count();
    assert_eq!(corpus.metas.len(), 1000);
    assert!(correct as f64 / 1000.0 >= 0.99, "{correct}");
}

#[test]
fn filter_with_clean_transcripts_floors_exactly_wrong_phrase_trials() {
    let corpus = gen_corpus(&GenConfig { n_speakers: 8, seed: 7, ..Default::default() }).unwrap();
    let set = gen_trials(&corpus, &TrialSpec { task: Task::TextDependent, n_trials: 300, seed: 8, ..Default::default() }).unwrap();
    let classified: BTreeMap<String, String> = corpus
        .metas
        .iter()
        .map(|m| (m.utt_id.clone(), classify_phrase(m.transcript.as_ref().unwrap(), &corpus.inventory).unwrap().to_string()))
        .collect();
    let scores = ScoreSet::from_pairs(set.trials.iter().enumerate().map(|(i, t)| (t.trial_id.clone(), i as f64 * 0.01))).unwrap();
    let out = apply_phrase_filter(&scores, &set.trials, &classified, -1000.0).unwrap();
    for k in &set.keys {
        let floored = out.get(&k.trial_id).unwrap() == -1000.0;
        assert_eq!(floored, matches!(k.label, TrialLabel::Tw | TrialLabel::Iw), "{}", k.trial_id);
    }
}

fn keyed(scores: &[f64], targets: &[bool]) -> (ScoreSet, Vec<TrialKey>) {
    let set = ScoreSet::from_pairs(scores.iter().enumerate().map(|(i, &s)| (format!("t{i}"), s))).unwrap();
    let keys = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| TrialKey { trial_id: format!("t{i}"), label: if t { TrialLabel::Tc } else { TrialLabel::Ic } })
        .collect();
    (set, keys)
}

fn lower_ascii() -> impl Strategy<Value = String> {
    proptest::collection::vec(prop::sample::select(vec!['a', 'b', 'c', 'd']), 0..8).prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_invariant_under_monotone_maps(
        data in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..60),
        a in 0.1f64..10.0,
        b in -3.0f64..3.0,
    ) {
        prop_assume!(data.iter().any(|d| d.1) && data.iter().any(|d| !d.1));
        let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        let mapped: Vec<f64> = scores.iter().map(|s| (a * s + b).exp()).collect();
        let (s1, k) = keyed(&scores, &labels);
        let (s2, _) = keyed(&mapped, &labels);
        let p = DcfParams::default();
        prop_assert_eq!(eer(&s1, &k).unwrap(), eer(&s2, &k).unwrap());
        let c = min_dcf(&s1, &k, &p).unwrap();
        prop_assert_eq!(c, min_dcf(&s2, &k, &p).unwrap());
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn levenshtein_is_a_metric(a in lower_ascii(), b in lower_ascii(), c in lower_ascii()) {
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        prop_assert_eq!(levenshtein(&a, &a), 0);
    }

    #[test]
    fn filter_never_raises(scores in proptest::collection::vec(-2000.0f64..10.0, 1..20), mask in any::<u32>()) {
        let trials: Vec<Trial> = (0..scores.len())
            .map(|i| Trial { trial_id: format!("t{i}"), model_id: "m".into(), test_utt_id: format!("u{i}"), claimed_phrase_id: Some("p0".into()) })
            .collect();
        let classified: BTreeMap<String, String> = (0..scores.len())
            .map(|i| (format!("u{i}"), if mask >> (i % 32) & 1 == 1 { "p1".into() } else { "p0".into() }))
            .collect();
        let set = ScoreSet::from_pairs(trials.iter().zip(&scores).map(|(t, &s)| (t.trial_id.clone(), s))).unwrap();
        let out = apply_phrase_filter(&set, &trials, &classified, -1000.0).unwrap();
        for (i, t) in trials.iter().enumerate() {
            let after = out.get(&t.trial_id).unwrap();
            prop_assert!(after <= scores[i]);
            if classified[&t.test_utt_id] == "p0" {
                prop_assert_eq!(after, scores[i]);
            }
        }
    }

    #[test]
    fn fusion_is_linear_and_tuning_beats_corners(seed in 0u64..500) {
        let mut rng = rng_from_seed(seed);
        let n = 40;
        let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let systems: Vec<ScoreSet> = (0..3)
            .map(|k| {
                let v: Vec<f64> = labels.iter().map(|&t| rng.random::<f64>() + if t { 0.3 * k as f64 } else { 0.0 }).collect();
                keyed(&v, &labels).0
            })
            .collect();
        let keys = keyed(&vec![0.0; n], &labels).1;
        let p = DcfParams::default();
        let w = tune_weights(&systems, &keys, &p, 0.25).unwrap();
        let fused = fuse(&systems, &w).unwrap();
        for (id, &s) in fused.iter() {
            let dot: f64 = systems.iter().zip(w.as_slice()).map(|(sys, wk)| wk * sys.get(id).unwrap()).sum();
            prop_assert!((s - dot).abs() < 1e-12);
        }
        let best_single = systems.iter().map(|s| min_dcf(s, &keys, &p).unwrap()).fold(f64::INFINITY, f64::min);
        prop_assert!(min_dcf(&fused, &keys, &p).unwrap() <= best_single);
    }
}
