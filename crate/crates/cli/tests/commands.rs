use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

/// A configuration small enough for a debug build.
pub const SMALL: &str = "\
gen.n_pretrain_speakers = 16
gen.n_train_speakers = 8
gen.n_dev_speakers = 6
gen.n_eval_speakers = 6
gen.n_utts_per_cell = 4
trials.n_dev = 120
trials.n_eval = 120
extractor.hidden = 16
extractor.pretrain_epochs = 2
extractor.epochs = 2
extractor.batch_size = 16
extractor.pct_speakers = 4
nplda.epochs = 2
langid.epochs = 20
";

fn spkver(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spkver")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = spkver(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = spkver(args);
    (out.status.code().expect("exit code"), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_perfect_separation() {
    let tmp = TempDir::new().unwrap();
    let scores = write(tmp.path(), "s", "a 0.9\nb 0.8\nc 0.1\nd 0.2\n");
    let key = write(tmp.path(), "k", "a TC\nb TC\nc IC\nd TW\n");
    let out = ok(&["eval", "--scores", &scores, "--key", &key]);
    assert!(out.contains("eer 0.0\n") && out.contains("min_dcf 0.0\n"), "{out}");
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let t = tmp.path();
    let scores = write(t, "s", "a 0.9\nb 0.1\n");
    let key = write(t, "k", "a TC\nb IC\n");

    assert_eq!(code(&["eval", "--bogus"]).0, 2);
    assert_eq!(code(&["--set", "nope=1", "eval", "--scores", &scores, "--key", &key]).0, 2);
    let cfg = write(t, "bad.cfg", "seed = 1\ndcf.p_target = abc\n");
    let (c, err) = code(&["--config", &cfg, "eval", "--scores", &scores, "--key", &key]);
    assert_eq!(c, 2);
    assert!(err.contains("line 2"), "{err}");

    let bad = write(t, "bad", "a 0.9\nb x\n");
    let (c, err) = code(&["eval", "--scores", &bad, "--key", &key]);
    assert_eq!(c, 3);
    assert!(err.contains(":2:3:"), "{err}");
    let missing = write(t, "k2", "a TC\nz IC\n");
    assert_eq!(code(&["eval", "--scores", &scores, "--key", &missing]).0, 3);
    assert_eq!(code(&["eval", "--scores", s(&t.join("absent")), "--key", &key]).0, 3);

    // Identical cohort members give zero variance among the top scores.
    let emb = write(t, "e", "EMB 2\ne1 1.0 0.0\nx1 0.0 1.0\n");
    let enroll = write(t, "en", "m1 e1\n");
    let trials = write(t, "tr", "t1 m1 x1 -\n");
    let raw = write(t, "raw", "t1 0.0\n");
    let cemb = write(t, "ce", "EMB 2\nc1 0.6 0.8\nc2 0.6 0.8\n");
    let cmeta = write(t, "cm", "META\nc1 s1 - L1 -\nc2 s2 - L1 -\n");
    let out_path = t.join("o");
    let out = s(&out_path);
    let (c, err) = code(&[
        "--set", "norm.mode=plain", "norm", "--emb", &emb, "--enroll", &enroll, "--trials", &trials, "--raw", &raw,
        "--cohort-emb", &cemb, "--cohort-meta", &cmeta, "--out", out,
    ]);
    assert_eq!(c, 4, "{err}");
}

#[test]
fn fuse_rejects_mismatched_trial_lists() {
    let tmp = TempDir::new().unwrap();
    let a = write(tmp.path(), "a", "t1 0.5\nt2 0.1\n");
    let b = write(tmp.path(), "b", "t1 0.5\nt3 0.1\n");
    let (c, err) = code(&["fuse", "--scores", &a, "--scores", &b, "--weights", "0.5,0.5", "--out", s(&tmp.path().join("f"))]);
    assert_ne!(c, 0);
    assert!(err.contains("trial-id mismatch"), "{err}");
    let out = ok(&["fuse", "--scores", &a, "--scores", &a, "--weights", "0.25,0.75", "--out", s(&tmp.path().join("f"))]);
    assert_eq!(out, "weights 0.25 0.75\n");
    assert_eq!(std::fs::read_to_string(tmp.path().join("f")).unwrap(), "t1 0.5\nt2 0.1\n");
}

fn read_all(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn stages_rerun_from_disk_reproduce_outputs() {
    let tmp = TempDir::new().unwrap();
    let t = tmp.path();
    let cfg = write(t, "small.cfg", SMALL);
    let run_path = t.join("run");
    let run = s(&run_path);
    ok(&["--config", &cfg, "--set", "threads=2", "e2e", "--out", run]);
    let before = read_all(&t.join("run"));
    let r = |n: &str| t.join("run").join(n).to_str().unwrap().to_string();
    let x = |n: &str| t.join("x").join(n).to_str().unwrap().to_string();

    // Each stage reruns from the e2e inputs into a fresh directory.
    ok(&["--config", &cfg, "gen", "--out", &x("data")]);
    ok(&["--config", &cfg, "train", "--target", "extractor", "--stage", "finetune", "--input", &r("data/train.feat"),
        "--meta", &r("data/train.meta"), "--init", &r("models/pretrained.model"), "--out", &x("extractor.model")]);
    ok(&["extract", "--model", &r("models/extractor.model"), "--feats", &r("data/eval.feat"), "--out", &x("eval.emb")]);
    ok(&["--config", &cfg, "train", "--target", "plda", "--input", &r("emb/train.emb"), "--meta", &r("data/train.meta"), "--out", &x("plda.model")]);
    ok(&["--config", &cfg, "train", "--target", "nplda", "--input", &r("emb/train.emb"), "--meta", &r("data/train.meta"),
        "--init", &r("models/plda.model"), "--out", &x("nplda.model")]);
    ok(&["score", "--emb", &r("emb/eval.emb"), "--enroll", &r("data/eval.enroll"), "--trials", &r("data/eval.trials"),
        "--backend", "nplda", "--model", &r("models/nplda.model"), "--out", &x("eval.nplda.raw")]);
    ok(&["--config", &cfg, "filter", "--scores", &r("scores/eval.nplda.raw"), "--trials", &r("data/eval.trials"),
        "--meta", &r("data/eval.meta"), "--phrases", &r("data/phrases.txt"), "--out", &x("eval.nplda.filt")]);
    let sys = |split: &str| ["cosine", "plda", "nplda"].map(|k| r(&format!("scores/{split}.{k}.filt")));
    let (ev, dv) = (sys("eval"), sys("dev"));
    ok(&["--config", &cfg, "fuse", "--scores", &ev[0], "--scores", &ev[1], "--scores", &ev[2], "--dev-scores", &dv[0],
        "--dev-scores", &dv[1], "--dev-scores", &dv[2], "--dev-key", &r("data/dev.key"), "--out", &x("eval.fused")]);

    let pairs = [
        ("x/extractor.model", "run/models/extractor.model"),
        ("x/eval.emb", "run/emb/eval.emb"),
        ("x/plda.model", "run/models/plda.model"),
        ("x/nplda.model", "run/models/nplda.model"),
        ("x/eval.nplda.raw", "run/scores/eval.nplda.raw"),
        ("x/eval.nplda.filt", "run/scores/eval.nplda.filt"),
        ("x/eval.fused", "run/scores/eval.fused"),
    ];
    for (a, b) in pairs {
        assert_eq!(std::fs::read(t.join(a)).unwrap(), std::fs::read(t.join(b)).unwrap(), "{a}");
    }
    for (rel, bytes) in read_all(&t.join("x/data")) {
        assert_eq!(std::fs::read(t.join("run/data").join(&rel)).unwrap(), bytes, "{}", rel.display());
    }
    assert_eq!(read_all(&t.join("run")), before);
}

#[test]
fn ti_pipeline_normalizes_with_language_id() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "small.cfg", SMALL);
    let out = ok(&["--config", &cfg, "--set", "gen.task=ti", "--set", "extractor.strategy=aam", "e2e", "--out", s(&tmp.path().join("ti"))]);
    assert!(out.contains("cosine.norm ") && !out.contains(".filt"), "{out}");
    let (c, err) = code(&["--config", &cfg, "--set", "gen.task=ti", "e2e", "--out", s(&tmp.path().join("ti2"))]);
    assert_eq!(c, 3, "{err}");
}
