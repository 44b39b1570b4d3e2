//! `key = value` pipeline configuration with a closed key set.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use spkver::eval::DcfParams;
use spkver::extractor::Strategy;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Uint,
    Float,
    Bool,
    Floats4,
    Choice(&'static [&'static str]),
    Strategy,
}

const TASKS: &[&str] = &["td", "ti"];
const NORM_MODES: &[&str] = &["plain", "lang"];
const LANG_SOURCES: &[&str] = &["lid", "meta"];

/// Every accepted key with its type and default value.
const KEYS: &[(&str, Kind, &str)] = &[
    ("seed", Kind::Uint, "1"),
    ("threads", Kind::Uint, "1"),
    ("gen.task", Kind::Choice(TASKS), "td"),
    ("gen.n_pretrain_speakers", Kind::Uint, "100"),
    ("gen.n_train_speakers", Kind::Uint, "40"),
    ("gen.n_dev_speakers", Kind::Uint, "20"),
    ("gen.n_eval_speakers", Kind::Uint, "20"),
    ("gen.n_phrases", Kind::Uint, "4"),
    ("gen.n_utts_per_cell", Kind::Uint, "8"),
    ("gen.dim", Kind::Uint, "16"),
    ("gen.phrase_strength", Kind::Float, "2.0"),
    ("gen.language_shift_strength", Kind::Float, "0.5"),
    ("gen.noise_sigma", Kind::Float, "0.35"),
    ("gen.transcript_error_rate", Kind::Float, "0.05"),
    ("trials.n_dev", Kind::Uint, "1000"),
    ("trials.n_eval", Kind::Uint, "1000"),
    ("trials.proportions", Kind::Floats4, "0.25,0.25,0.25,0.25"),
    ("trials.target_fraction", Kind::Float, "0.5"),
    ("trials.l2_test_fraction", Kind::Float, "0.5"),
    ("trials.n_enroll", Kind::Uint, "3"),
    ("extractor.hidden", Kind::Uint, "64"),
    ("extractor.dim", Kind::Uint, "16"),
    ("extractor.pretrain_epochs", Kind::Uint, "20"),
    ("extractor.pretrain_lr_initial", Kind::Float, "0.1"),
    ("extractor.pretrain_lr_final", Kind::Float, "0.01"),
    ("extractor.strategy", Kind::Strategy, "pct"),
    ("extractor.epochs", Kind::Uint, "10"),
    ("extractor.lr_initial", Kind::Float, "0.001"),
    ("extractor.lr_final", Kind::Float, "0.0001"),
    ("extractor.batch_size", Kind::Uint, "32"),
    ("extractor.pct_speakers", Kind::Uint, "8"),
    ("extractor.lambda", Kind::Float, "1.0"),
    ("extractor.mu", Kind::Float, "1.0"),
    ("extractor.scale", Kind::Float, "32.0"),
    ("extractor.margin", Kind::Float, "0.2"),
    ("plda.iters", Kind::Uint, "10"),
    ("plda.ridge_factor", Kind::Float, "1e-6"),
    ("plda.phrase_dependent", Kind::Bool, "true"),
    ("nplda.learning_rate", Kind::Float, "5e-5"),
    ("nplda.epochs", Kind::Uint, "5"),
    ("nplda.sharpness", Kind::Float, "10.0"),
    ("norm.mode", Kind::Choice(NORM_MODES), "lang"),
    ("norm.n_top", Kind::Uint, "200"),
    ("norm.language_source", Kind::Choice(LANG_SOURCES), "lid"),
    ("langid.epochs", Kind::Uint, "200"),
    ("langid.learning_rate", Kind::Float, "1.0"),
    ("dcf.p_target", Kind::Float, "0.01"),
    ("dcf.c_miss", Kind::Float, "10.0"),
    ("dcf.c_fa", Kind::Float, "1.0"),
    ("filter.floor", Kind::Float, "-1000.0"),
    ("fusion.grid_step", Kind::Float, "0.1"),
];

/// Keys that may change without changing any output.
const NON_SEMANTIC: &[&str] = &["threads"];

fn check(key: &str, value: &str) -> CliResult<()> {
    let kind = KEYS
        .iter()
        .find(|(k, _, _)| *k == key)
        .map(|(_, kind, _)| *kind)
        .ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
    let bad = |what: &str| Err(CliError::Config(format!("`{key}`: expected {what}, got `{value}`")));
    match kind {
        Kind::Uint => {
            if value.parse::<u64>().is_err() {
                return bad("a non-negative integer");
            }
        }
        Kind::Float => {
            if !value.parse::<f64>().is_ok_and(f64::is_finite) {
                return bad("a finite number");
            }
        }
        Kind::Bool => {
            if value != "true" && value != "false" {
                return bad("true or false");
            }
        }
        Kind::Floats4 => {
            let parts: Vec<_> = value.split(',').map(|p| p.trim().parse::<f64>()).collect();
            if parts.len() != 4 || parts.iter().any(|p| !p.as_ref().is_ok_and(|v| v.is_finite() && *v >= 0.0)) {
                return bad("four comma-separated non-negative numbers");
            }
        }
        Kind::Choice(options) => {
            if !options.contains(&value) {
                return bad(&format!("one of {}", options.join("|")));
            }
        }
        Kind::Strategy => {
            if Strategy::from_str(value).is_err() {
                let names: Vec<_> = Strategy::ALL.iter().map(|s| s.as_str()).collect();
                return bad(&format!("one of {}", names.join("|")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|(k, _, d)| (*k, d.to_string())).collect() }
    }
}

impl PipelineConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| CliError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        check(key, value)?;
        let k = KEYS.iter().find(|(k, _, _)| *k == key).expect("checked").0;
        self.values.insert(k, value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{pair}`")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    pub fn uint(&self, key: &str) -> usize {
        self.get(key).parse().expect("validated")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.get(key).parse().expect("validated")
    }

    pub fn float(&self, key: &str) -> f64 {
        self.get(key).parse().expect("validated")
    }

    pub fn flag(&self, key: &str) -> bool {
        self.get(key) == "true"
    }

    pub fn floats4(&self, key: &str) -> [f64; 4] {
        let v: Vec<f64> = self.get(key).split(',').map(|p| p.trim().parse().expect("validated")).collect();
        [v[0], v[1], v[2], v[3]]
    }

    pub fn strategy(&self, key: &str) -> Strategy {
        self.get(key).parse().expect("validated")
    }

    pub fn seed(&self) -> u64 {
        self.u64("seed")
    }

    pub fn dcf(&self) -> DcfParams {
        DcfParams { p_target: self.float("dcf.p_target"), c_miss: self.float("dcf.c_miss"), c_fa: self.float("dcf.c_fa") }
    }

    /// Every key that can influence outputs, in sorted order.
    pub fn semantic_entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().filter(|(k, _)| !NON_SEMANTIC.contains(k)).map(|(k, v)| (*k, v.as_str()))
    }

    /// The whole configuration in the format `parse` accepts.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
