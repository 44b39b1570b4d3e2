//! Line-oriented text formats. Fields are separated by single spaces and
//! floats are written as the shortest decimal that reads back to the same
//! 64-bit value.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use spkver::domain::{Embedding, Language, Phrase, PhraseInventory, Trial, TrialKey, UttMeta};
use spkver::eval::ScoreSet;

use crate::error::{CliError, CliResult};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Cursor over the fields of one line, for error positions.
struct Fields<'a> {
    path: &'a Path,
    line_no: usize,
    line: &'a str,
    pos: usize,
}

impl<'a> Fields<'a> {
    fn new(path: &'a Path, line_no: usize, line: &'a str) -> Self {
        Self { path, line_no, line, pos: 0 }
    }

    fn column(&self) -> usize {
        self.line[..self.pos.min(self.line.len())].chars().count() + 1
    }

    fn error(&self, message: impl Into<String>) -> CliError {
        CliError::Format {
            path: self.path.display().to_string(),
            line: self.line_no,
            column: self.column(),
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> CliResult<&'a str> {
        if self.pos > self.line.len() {
            return Err(self.error(format!("missing {what}")));
        }
        let rest = &self.line[self.pos..];
        let end = rest.find(' ').unwrap_or(rest.len());
        let tok = &rest[..end];
        if tok.is_empty() {
            return Err(self.error(format!("missing {what}")));
        }
        self.pos += end + 1;
        Ok(tok)
    }

    fn start_of_last(&self, tok: &str) -> usize {
        self.pos - tok.len() - 1
    }

    fn float(&mut self, what: &str) -> CliResult<f64> {
        let tok = self.next(what)?;
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos = self.start_of_last(tok);
                Err(self.error(format!("invalid {what} `{tok}`")))
            }
        }
    }

    fn uint(&mut self, what: &str) -> CliResult<usize> {
        let tok = self.next(what)?;
        tok.parse::<usize>().map_err(|_| {
            self.pos = self.start_of_last(tok);
            self.error(format!("invalid {what} `{tok}`"))
        })
    }

    fn parsed<T: std::str::FromStr>(&mut self, what: &str) -> CliResult<T> {
        let tok = self.next(what)?;
        tok.parse::<T>().map_err(|_| {
            self.pos = self.start_of_last(tok);
            self.error(format!("invalid {what} `{tok}`"))
        })
    }

    fn optional(&mut self, what: &str) -> CliResult<Option<String>> {
        let tok = self.next(what)?;
        Ok((tok != "-").then(|| tok.to_string()))
    }

    /// Everything after the current position, which must be non-empty.
    fn remainder(&mut self, what: &str) -> CliResult<&'a str> {
        if self.pos >= self.line.len() {
            return Err(self.error(format!("missing {what}")));
        }
        let r = &self.line[self.pos..];
        self.pos = self.line.len() + 1;
        Ok(r)
    }

    fn finish(&self) -> CliResult<()> {
        if self.pos <= self.line.len() {
            return Err(self.error("unexpected trailing field"));
        }
        Ok(())
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_terminator('\n').enumerate().map(|(i, l)| (i + 1, l))
}

fn unique<'a>(seen: &mut HashSet<String>, f: &Fields<'a>, id: &str) -> CliResult<()> {
    if !seen.insert(id.to_string()) {
        return Err(CliError::Format {
            path: f.path.display().to_string(),
            line: f.line_no,
            column: 1,
            message: format!("duplicate id `{id}`"),
        });
    }
    Ok(())
}

fn header<'a>(path: &'a Path, text: &'a str, tag: &str) -> CliResult<(Fields<'a>, std::iter::Skip<std::iter::Enumerate<std::str::SplitTerminator<'a, char>>>)> {
    let first = text.split_terminator('\n').next().unwrap_or("");
    let mut f = Fields::new(path, 1, first);
    let t = f.next("header")?;
    if t != tag {
        return Err(f.error(format!("expected `{tag}` header, found `{t}`")));
    }
    Ok((f, text.split_terminator('\n').enumerate().skip(1)))
}

pub fn render_embeddings(embeddings: &[Embedding]) -> CliResult<String> {
    let dim = embeddings.first().map_or(0, |e| e.vec.len());
    let mut out = format!("EMB {dim}\n");
    for e in embeddings {
        if e.vec.len() != dim {
            return Err(CliError::Data(format!("embedding `{}` has dimension {}, expected {dim}", e.utt_id, e.vec.len())));
        }
        out.push_str(&e.utt_id);
        for v in &e.vec {
            if !v.is_finite() {
                return Err(CliError::Data(format!("non-finite value in embedding `{}`", e.utt_id)));
            }
            out.push(' ');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_embeddings(path: &Path, text: &str) -> CliResult<Vec<Embedding>> {
    let (mut h, rest) = header(path, text, "EMB")?;
    let dim = h.uint("dimension")?;
    h.finish()?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in rest {
        let mut f = Fields::new(path, i + 1, line);
        let id = f.next("utterance id")?;
        unique(&mut seen, &f, id)?;
        let vec = (0..dim).map(|_| f.float("value")).collect::<CliResult<Vec<f64>>>()?;
        f.finish()?;
        out.push(Embedding::new(id, vec));
    }
    Ok(out)
}

pub fn read_embeddings(path: &Path) -> CliResult<Vec<Embedding>> {
    parse_embeddings(path, &read_text(path)?)
}

pub fn write_embeddings(path: &Path, embeddings: &[Embedding]) -> CliResult<()> {
    write_text(path, &render_embeddings(embeddings)?)
}

pub fn render_meta(metas: &[UttMeta]) -> String {
    let mut out = String::from("META\n");
    for m in metas {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            m.utt_id,
            m.speaker_id,
            m.phrase_id.as_deref().unwrap_or("-"),
            m.language,
            m.transcript.as_deref().unwrap_or("-")
        );
    }
    out
}

pub fn parse_meta(path: &Path, text: &str) -> CliResult<Vec<UttMeta>> {
    let (h, rest) = header(path, text, "META")?;
    h.finish()?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in rest {
        let mut f = Fields::new(path, i + 1, line);
        let utt_id = f.next("utterance id")?.to_string();
        unique(&mut seen, &f, &utt_id)?;
        let speaker_id = f.next("speaker id")?.to_string();
        let phrase_id = f.optional("phrase id")?;
        let language: Language = f.parsed("language")?;
        let t = f.remainder("transcript")?;
        out.push(UttMeta { utt_id, speaker_id, phrase_id, language, transcript: (t != "-").then(|| t.to_string()) });
    }
    Ok(out)
}

pub fn read_meta(path: &Path) -> CliResult<Vec<UttMeta>> {
    parse_meta(path, &read_text(path)?)
}

pub fn write_meta(path: &Path, metas: &[UttMeta]) -> CliResult<()> {
    write_text(path, &render_meta(metas))
}

pub fn render_enrollments(map: &BTreeMap<String, Vec<String>>) -> String {
    let mut out = String::new();
    for (model, utts) in map {
        out.push_str(model);
        for u in utts {
            out.push(' ');
            out.push_str(u);
        }
        out.push('\n');
    }
    out
}

pub fn parse_enrollments(path: &Path, text: &str) -> CliResult<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    let mut seen = HashSet::new();
    for (n, line) in lines(text) {
        let mut f = Fields::new(path, n, line);
        let model = f.next("model id")?.to_string();
        unique(&mut seen, &f, &model)?;
        let mut utts = vec![f.next("enrollment utterance")?.to_string()];
        while f.pos <= line.len() {
            utts.push(f.next("enrollment utterance")?.to_string());
        }
        out.insert(model, utts);
    }
    Ok(out)
}

pub fn read_enrollments(path: &Path) -> CliResult<BTreeMap<String, Vec<String>>> {
    parse_enrollments(path, &read_text(path)?)
}

pub fn render_trials(trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            t.trial_id,
            t.model_id,
            t.test_utt_id,
            t.claimed_phrase_id.as_deref().unwrap_or("-")
        );
    }
    out
}

pub fn parse_trials(path: &Path, text: &str) -> CliResult<Vec<Trial>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in lines(text) {
        let mut f = Fields::new(path, n, line);
        let trial_id = f.next("trial id")?.to_string();
        unique(&mut seen, &f, &trial_id)?;
        let model_id = f.next("model id")?.to_string();
        let test_utt_id = f.next("test utterance id")?.to_string();
        let claimed_phrase_id = f.optional("claimed phrase")?;
        f.finish()?;
        out.push(Trial { trial_id, model_id, test_utt_id, claimed_phrase_id });
    }
    Ok(out)
}

pub fn read_trials(path: &Path) -> CliResult<Vec<Trial>> {
    parse_trials(path, &read_text(path)?)
}

pub fn render_keys(keys: &[TrialKey]) -> String {
    keys.iter().map(|k| format!("{} {}\n", k.trial_id, k.label)).collect()
}

pub fn parse_keys(path: &Path, text: &str) -> CliResult<Vec<TrialKey>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in lines(text) {
        let mut f = Fields::new(path, n, line);
        let trial_id = f.next("trial id")?.to_string();
        unique(&mut seen, &f, &trial_id)?;
        let label = f.parsed("trial label")?;
        f.finish()?;
        out.push(TrialKey { trial_id, label });
    }
    Ok(out)
}

pub fn read_keys(path: &Path) -> CliResult<Vec<TrialKey>> {
    parse_keys(path, &read_text(path)?)
}

pub fn render_scores(scores: &ScoreSet) -> String {
    scores.iter().map(|(id, s)| format!("{id} {}\n", fmt_f64(*s))).collect()
}

pub fn parse_scores(path: &Path, text: &str) -> CliResult<ScoreSet> {
    let mut out = ScoreSet::new();
    let mut seen = HashSet::new();
    for (n, line) in lines(text) {
        let mut f = Fields::new(path, n, line);
        let id = f.next("trial id")?;
        unique(&mut seen, &f, id)?;
        let s = f.float("score")?;
        f.finish()?;
        out.insert(id.to_string(), s)?;
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> CliResult<ScoreSet> {
    parse_scores(path, &read_text(path)?)
}

pub fn write_scores(path: &Path, scores: &ScoreSet) -> CliResult<()> {
    write_text(path, &render_scores(scores))
}

pub fn render_phrases(inventory: &PhraseInventory) -> String {
    let mut out = String::from("PHRASES\n");
    for p in inventory.entries() {
        let _ = writeln!(out, "{} {} {}", p.phrase_id, p.language, p.text);
    }
    out
}

pub fn parse_phrases(path: &Path, text: &str) -> CliResult<PhraseInventory> {
    let (h, rest) = header(path, text, "PHRASES")?;
    h.finish()?;
    let mut entries = Vec::new();
    for (i, line) in rest {
        let mut f = Fields::new(path, i + 1, line);
        let phrase_id = f.next("phrase id")?.to_string();
        let language = f.parsed("language")?;
        let text = f.remainder("phrase text")?.to_string();
        entries.push(Phrase { phrase_id, text, language });
    }
    Ok(PhraseInventory::new(entries)?)
}

pub fn read_phrases(path: &Path) -> CliResult<PhraseInventory> {
    parse_phrases(path, &read_text(path)?)
}

/// A typed container of named scalar values and matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: String,
    pub scalars: Vec<(String, String)>,
    pub matrices: Vec<(String, DMatrix<f64>)>,
}

impl ModelFile {
    pub fn new(kind: &str) -> Self {
        Self { kind: kind.to_string(), scalars: Vec::new(), matrices: Vec::new() }
    }

    pub fn scalar(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.scalars.push((name.to_string(), value.to_string()));
        self
    }

    pub fn float_scalar(&mut self, name: &str, value: f64) -> &mut Self {
        self.scalar(name, fmt_f64(value))
    }

    pub fn matrix(&mut self, name: &str, m: DMatrix<f64>) -> &mut Self {
        self.matrices.push((name.to_string(), m));
        self
    }

    pub fn get_scalar(&self, name: &str) -> CliResult<&str> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CliError::Data(format!("{} model lacks scalar `{name}`", self.kind)))
    }

    pub fn get_float(&self, name: &str) -> CliResult<f64> {
        let v = self.get_scalar(name)?;
        v.parse::<f64>().map_err(|_| CliError::Data(format!("scalar `{name}` is not a number: `{v}`")))
    }

    pub fn get_matrix(&self, name: &str) -> CliResult<&DMatrix<f64>> {
        self.matrices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| CliError::Data(format!("{} model lacks matrix `{name}`", self.kind)))
    }

    pub fn expect_kind(&self, kind: &str) -> CliResult<()> {
        if self.kind != kind {
            return Err(CliError::Data(format!("expected a {kind} model, found {}", self.kind)));
        }
        Ok(())
    }

    pub fn render(&self) -> CliResult<String> {
        let mut out = format!("MODEL {}\nSCALARS {}\n", self.kind, self.scalars.len());
        for (n, v) in &self.scalars {
            let _ = writeln!(out, "{n} {v}");
        }
        for (name, m) in &self.matrices {
            let _ = writeln!(out, "MAT {name} {} {}", m.nrows(), m.ncols());
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols())
                    .map(|c| {
                        let v = m[(r, c)];
                        if v.is_finite() {
                            Ok(fmt_f64(v))
                        } else {
                            Err(CliError::Data(format!("non-finite value in matrix `{name}`")))
                        }
                    })
                    .collect::<CliResult<_>>()?;
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        Ok(out)
    }

    pub fn parse(path: &Path, text: &str) -> CliResult<Self> {
        let all: Vec<&str> = text.split_terminator('\n').collect();
        let at = |i: usize| Fields::new(path, i + 1, all.get(i).copied().unwrap_or(""));
        let mut f = at(0);
        if f.next("header")? != "MODEL" {
            return Err(at(0).error("expected `MODEL` header"));
        }
        let kind = f.next("model kind")?.to_string();
        f.finish()?;
        let mut f = at(1);
        if f.next("scalar block")? != "SCALARS" {
            return Err(at(1).error("expected `SCALARS` block"));
        }
        let n = f.uint("scalar count")?;
        f.finish()?;
        let mut model = ModelFile::new(&kind);
        let mut i = 2;
        for _ in 0..n {
            let mut f = at(i);
            let name = f.next("scalar name")?.to_string();
            let value = f.next("scalar value")?.to_string();
            f.finish()?;
            model.scalars.push((name, value));
            i += 1;
        }
        while i < all.len() {
            let mut f = at(i);
            if f.next("matrix block")? != "MAT" {
                return Err(at(i).error("expected `MAT` block"));
            }
            let name = f.next("matrix name")?.to_string();
            let rows = f.uint("row count")?;
            let cols = f.uint("column count")?;
            f.finish()?;
            let mut m = DMatrix::zeros(rows, cols);
            for r in 0..rows {
                i += 1;
                if i >= all.len() {
                    return Err(at(i).error(format!("matrix `{name}` is truncated")));
                }
                let mut f = at(i);
                for c in 0..cols {
                    m[(r, c)] = f.float("matrix value")?;
                }
                f.finish()?;
            }
            model.matrices.push((name, m));
            i += 1;
        }
        Ok(model)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::parse(path, &read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_text(path, &self.render()?)
    }
}
