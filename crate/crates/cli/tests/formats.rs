use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use proptest::prelude::*;
use spkver::domain::{Embedding, Language, Phrase, PhraseInventory, Trial, TrialKey, TrialLabel, UttMeta};
use spkver::eval::ScoreSet;
use spkver_cli::io::*;
use spkver_cli::CliError;

fn p() -> &'static Path {
    Path::new("f")
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z0-9_.:-]{1,10}".prop_filter("dash is the missing marker", |s| s != "-")
}

fn any_float() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        -1.0f64..1.0,
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(5e-324),
        Just(f64::MAX),
    ]
}

fn transcript() -> impl Strategy<Value = Option<String>> {
    prop::option::of("[a-z]{1,6}( [a-z]{1,6}){0,3}".prop_filter("dash is the missing marker", |s| s != "-"))
}

fn language() -> impl Strategy<Value = Language> {
    prop_oneof![Just(Language::L1), Just(Language::L2)]
}

fn label() -> impl Strategy<Value = TrialLabel> {
    prop::sample::select(vec![
        TrialLabel::Tc,
        TrialLabel::Tw,
        TrialLabel::Ic,
        TrialLabel::Iw,
        TrialLabel::Target,
        TrialLabel::Nontarget,
    ])
}

fn dedup_ids<T>(items: Vec<(String, T)>) -> Vec<(String, T)> {
    let mut seen = std::collections::HashSet::new();
    items.into_iter().filter(|(id, _)| seen.insert(id.clone())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embeddings_round_trip_bitwise(dim in 1usize..6, rows in prop::collection::vec((ident(), prop::collection::vec(any_float(), 6)), 0..12)) {
        let embs: Vec<Embedding> = dedup_ids(rows).into_iter().map(|(id, v)| Embedding::new(id, v[..dim].to_vec())).collect();
        let text = render_embeddings(&embs).unwrap();
        let back = parse_embeddings(p(), &text).unwrap();
        prop_assert_eq!(back.len(), embs.len());
        for (a, b) in embs.iter().zip(&back) {
            prop_assert_eq!(&a.utt_id, &b.utt_id);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.vec), bits(&b.vec));
        }
        prop_assert_eq!(render_embeddings(&back).unwrap(), text);
    }

    #[test]
    fn meta_round_trip(rows in prop::collection::vec((ident(), ident(), prop::option::of(ident()), language(), transcript()), 0..12)) {
        let metas: Vec<UttMeta> = dedup_ids(rows.into_iter().map(|(u, s, ph, l, t)| (u, (s, ph, l, t))).collect())
            .into_iter()
            .map(|(utt_id, (speaker_id, phrase_id, language, transcript))| UttMeta { utt_id, speaker_id, phrase_id, language, transcript })
            .collect();
        prop_assert_eq!(parse_meta(p(), &render_meta(&metas)).unwrap(), metas);
    }

    #[test]
    fn enrollments_round_trip(rows in prop::collection::btree_map(ident(), prop::collection::vec(ident(), 1..5), 0..8)) {
        let map: BTreeMap<String, Vec<String>> = rows;
        prop_assert_eq!(parse_enrollments(p(), &render_enrollments(&map)).unwrap(), map);
    }

    #[test]
    fn trials_and_keys_round_trip(rows in prop::collection::vec((ident(), ident(), ident(), prop::option::of(ident()), label()), 0..12)) {
        let rows = dedup_ids(rows.into_iter().map(|(t, m, u, c, l)| (t, (m, u, c, l))).collect());
        let trials: Vec<Trial> = rows.iter()
            .map(|(t, (m, u, c, _))| Trial { trial_id: t.clone(), model_id: m.clone(), test_utt_id: u.clone(), claimed_phrase_id: c.clone() })
            .collect();
        let keys: Vec<TrialKey> = rows.iter().map(|(t, (.., l))| TrialKey { trial_id: t.clone(), label: *l }).collect();
        prop_assert_eq!(parse_trials(p(), &render_trials(&trials)).unwrap(), trials);
        prop_assert_eq!(parse_keys(p(), &render_keys(&keys)).unwrap(), keys);
    }

    #[test]
    fn scores_round_trip_bitwise(rows in prop::collection::vec((ident(), any_float()), 0..20)) {
        let set = ScoreSet::from_pairs(dedup_ids(rows)).unwrap();
        let back = parse_scores(p(), &render_scores(&set)).unwrap();
        prop_assert_eq!(back.len(), set.len());
        for ((ia, a), (ib, b)) in set.iter().zip(back.iter()) {
            prop_assert_eq!(ia, ib);
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn model_file_round_trip(
        scalars in prop::collection::vec((ident(), ident()), 0..4),
        mats in prop::collection::vec((ident(), 0usize..4, 1usize..4, prop::collection::vec(any_float(), 16)), 0..4),
    ) {
        let mut m = ModelFile::new("test");
        for (k, v) in &scalars {
            m.scalar(k, v);
        }
        for (name, r, c, vals) in &mats {
            m.matrix(name, DMatrix::from_row_slice(*r, *c, &vals[..r * c]));
        }
        let text = m.render().unwrap();
        let back = ModelFile::parse(p(), &text).unwrap();
        prop_assert_eq!(back.render().unwrap(), text);
        for ((_, a), (_, b)) in m.matrices.iter().zip(&back.matrices) {
            prop_assert_eq!(a.shape(), b.shape());
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn phrases_round_trip() {
    let inv = PhraseInventory::new(vec![
        Phrase { phrase_id: "p00".into(), text: "open the door".into(), language: Language::L1 },
        Phrase { phrase_id: "p01".into(), text: "zxq wvu".into(), language: Language::L2 },
    ])
    .unwrap();
    let text = render_phrases(&inv);
    assert_eq!(text, "PHRASES\np00 L1 open the door\np01 L2 zxq wvu\n");
    assert_eq!(parse_phrases(p(), &text).unwrap(), inv);
}

fn position(e: CliError) -> (usize, usize) {
    match e {
        CliError::Format { line, column, .. } => (line, column),
        other => panic!("expected a format error, got {other}"),
    }
}

#[test]
fn malformed_inputs_report_line_and_column() {
    assert_eq!(position(parse_trials(p(), "t1 m1 u1 p0\nt2 m1\n").unwrap_err()), (2, 6));
    assert_eq!(position(parse_keys(p(), "t1 TC\nt2 XX\n").unwrap_err()), (2, 4));
    assert_eq!(position(parse_meta(p(), "META\nu1 s1 p0 L3 hi\n").unwrap_err()), (2, 10));
    assert_eq!(position(parse_scores(p(), "t1 0.5\nt1 0.7\n").unwrap_err()).0, 2);
    assert_eq!(position(parse_embeddings(p(), "EMB x\n").unwrap_err()), (1, 5));
    assert_eq!(position(ModelFile::parse(p(), "MODEL m\nSCALARS 0\nMAT a 1 2\n1.0 zz\n").unwrap_err()), (4, 5));
    let e = parse_enrollments(p(), "m1\n").unwrap_err();
    assert_eq!(e.exit_code(), 3);
}
