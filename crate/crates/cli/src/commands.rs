//! Subcommands. Each one reads its inputs from disk, runs one chain of core
//! operations and writes its outputs back to disk.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use spkver::backend::{plda_em_train, train_phrase_plda_bank, PldaModel};
use spkver::domain::{Embedding, Language, UttMeta};
use spkver::eval::{apply_phrase_filter, classify_phrase, fuse, min_dcf, eer, split_by_key, tune_weights, FusionWeights};
use spkver::extractor::{embed, train, Extractor, Strategy, TrainConfig, TrainData};
use spkver::nplda::{init_from_plda, same_phrase_pairs, train_nplda, NpldaPair, NpldaTrainConfig};
use spkver::norm::{predict_language, train_language_id, Cohort};
use spkver::synthgen::{derive_seed, gen_corpus, gen_trials, GenConfig, Task, TrialSpec, RNG_ALGORITHM};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::io::*;
use crate::pipeline::*;

/// Seed streams derived from the global seed.
pub mod streams {
    pub const PRETRAIN_CORPUS: u64 = 1;
    pub const WORLD_CORPUS: u64 = 2;
    pub const DEV_TRIALS: u64 = 3;
    pub const EVAL_TRIALS: u64 = 4;
    pub const EXTRACTOR_INIT: u64 = 5;
    pub const PRETRAIN: u64 = 6;
    pub const FINETUNE: u64 = 7;

    pub const ALL: [(&str, u64); 7] = [
        ("pretrain_corpus", PRETRAIN_CORPUS),
        ("world_corpus", WORLD_CORPUS),
        ("dev_trials", DEV_TRIALS),
        ("eval_trials", EVAL_TRIALS),
        ("extractor_init", EXTRACTOR_INIT),
        ("pretrain", PRETRAIN),
        ("finetune", FINETUNE),
    ];
}

#[derive(Debug, Parser)]
#[command(name = "spkver", version, about = "Phrase-aware speaker verification toolkit")]
pub struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Override the global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with dev and eval trial lists.
    Gen(GenArgs),
    /// Train an extractor, PLDA, NPLDA or language-id model.
    Train(TrainArgs),
    /// Map features to length-normalized embeddings.
    Extract(ExtractArgs),
    /// Score trials with a backend.
    Score(ScoreArgs),
    /// Apply adaptive score normalization.
    Norm(NormArgs),
    /// Floor trials whose recognized phrase differs from the claimed one.
    Filter(FilterArgs),
    /// Weighted sum of several score files.
    Fuse(FuseArgs),
    /// EER and minDCF of a score file.
    Eval(EvalArgs),
    /// Run every stage and write a manifest.
    E2e(E2eArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Extractor,
    Plda,
    Nplda,
    Langid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub target: Target,
    #[arg(long, value_enum, default_value = "pretrain")]
    pub stage: Stage,
    /// Features (extractor) or embeddings (other targets).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub meta: PathBuf,
    /// Starting extractor for fine-tuning, or the PLDA bank for NPLDA.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub feats: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrialInputs {
    /// Embeddings of every enrollment and test utterance.
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub enroll: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long, default_value = "cosine")]
    pub backend: String,
    /// Backend model file (plda, nplda).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub inputs: TrialInputs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct NormArgs {
    #[command(flatten)]
    pub inputs: TrialInputs,
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long)]
    pub cohort_emb: PathBuf,
    #[arg(long)]
    pub cohort_meta: PathBuf,
    /// Language-id model, when `norm.language_source = lid`.
    #[arg(long)]
    pub langid: Option<PathBuf>,
    /// Test metadata, when `norm.language_source = meta`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    /// Metadata holding the recognized transcripts.
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long)]
    pub phrases: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    /// Score files to fuse; repeatable.
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    /// Comma-separated weights, one per system.
    #[arg(long, conflicts_with_all = ["dev_scores", "dev_key"])]
    pub weights: Option<String>,
    /// Development score files to tune the weights on, in the same order.
    #[arg(long = "dev-scores")]
    pub dev_scores: Vec<PathBuf>,
    #[arg(long)]
    pub dev_key: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct E2eArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolves the configuration from `--config`, `--set` and `--seed`, in that order.
pub fn resolve_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    Ok(cfg)
}

/// Runs a parsed command line. Returns the text destined for stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    let cfg = resolve_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.uint("threads"))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Gen(a) => cmd_gen(&cfg, a).map(|_| String::new()),
        Command::Train(a) => cmd_train(&cfg, a).map(|_| String::new()),
        Command::Extract(a) => cmd_extract(a).map(|_| String::new()),
        Command::Score(a) => cmd_score(a).map(|_| String::new()),
        Command::Norm(a) => cmd_norm(&cfg, a).map(|_| String::new()),
        Command::Filter(a) => cmd_filter(&cfg, a).map(|_| String::new()),
        Command::Fuse(a) => cmd_fuse(&cfg, a).map(|w| format!("weights {}\n", render_floats(w.as_slice()))),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::E2e(a) => cmd_e2e(&cfg, a),
    })
}

fn render_floats(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

fn task(cfg: &PipelineConfig) -> Task {
    match cfg.get("gen.task") {
        "ti" => Task::TextIndependent,
        _ => Task::TextDependent,
    }
}

/// Writes `<split>.feat`, `<split>.meta` for every split, dev/eval trial
/// lists with keys and enrollment maps, and `phrases.txt`.
pub fn cmd_gen(cfg: &PipelineConfig, args: &GenArgs) -> CliResult<()> {
    let seed = cfg.seed();
    let task = task(cfg);
    let base = GenConfig {
        n_phrases: cfg.uint("gen.n_phrases"),
        n_utts_per_cell: cfg.uint("gen.n_utts_per_cell"),
        dim: cfg.uint("gen.dim"),
        phrase_strength: cfg.float("gen.phrase_strength"),
        language_shift_strength: cfg.float("gen.language_shift_strength"),
        noise_sigma: cfg.float("gen.noise_sigma"),
        transcript_error_rate: cfg.float("gen.transcript_error_rate"),
        phrase_labels: task == Task::TextDependent,
        ..Default::default()
    };
    let pretrain = gen_corpus(&GenConfig {
        n_speakers: cfg.uint("gen.n_pretrain_speakers"),
        phrase_labels: false,
        seed: derive_seed(seed, streams::PRETRAIN_CORPUS),
        ..base.clone()
    })?;
    let (n_tr, n_dev, n_ev) =
        (cfg.uint("gen.n_train_speakers"), cfg.uint("gen.n_dev_speakers"), cfg.uint("gen.n_eval_speakers"));
    let world = gen_corpus(&GenConfig {
        n_speakers: n_tr + n_dev + n_ev,
        seed: derive_seed(seed, streams::WORLD_CORPUS),
        ..base
    })?;
    let out = &args.out;
    write_embeddings(&out.join("pretrain.feat"), &pretrain.embeddings)?;
    write_meta(&out.join("pretrain.meta"), &pretrain.metas)?;
    let train = world.restrict_speakers(0..n_tr);
    write_embeddings(&out.join("train.feat"), &train.embeddings)?;
    write_meta(&out.join("train.meta"), &train.metas)?;
    let splits = [
        ("dev", n_tr..n_tr + n_dev, cfg.uint("trials.n_dev"), streams::DEV_TRIALS),
        ("eval", n_tr + n_dev..n_tr + n_dev + n_ev, cfg.uint("trials.n_eval"), streams::EVAL_TRIALS),
    ];
    for (name, range, n_trials, stream) in splits {
        let part = world.restrict_speakers(range);
        let set = gen_trials(
            &part,
            &TrialSpec {
                task,
                n_trials,
                seed: derive_seed(seed, stream),
                proportions: cfg.floats4("trials.proportions"),
                target_fraction: cfg.float("trials.target_fraction"),
                l2_test_fraction: cfg.float("trials.l2_test_fraction"),
                n_enroll: cfg.uint("trials.n_enroll"),
                id_prefix: format!("{name}-"),
            },
        )?;
        write_embeddings(&out.join(format!("{name}.feat")), &part.embeddings)?;
        write_meta(&out.join(format!("{name}.meta")), &part.metas)?;
        write_text(&out.join(format!("{name}.enroll")), &render_enrollments(&set.enrollments))?;
        write_text(&out.join(format!("{name}.trials")), &render_trials(&set.trials))?;
        write_text(&out.join(format!("{name}.key")), &render_keys(&set.keys))?;
    }
    write_text(&out.join("phrases.txt"), &render_phrases(&world.inventory))
}

pub fn cmd_train(cfg: &PipelineConfig, args: &TrainArgs) -> CliResult<()> {
    let input = read_embeddings(&args.input)?;
    let metas = read_meta(&args.meta)?;
    let model = match args.target {
        Target::Extractor => train_extractor(cfg, args, &input, &metas)?,
        Target::Plda => train_plda(cfg, &input, &metas)?,
        Target::Nplda => {
            let init = args.init.as_ref().ok_or_else(|| CliError::Usage("--init <plda model> is required".into()))?;
            train_nplda_bank(cfg, &input, &metas, &plda_bank_from_file(&ModelFile::read(init)?)?)?
        }
        Target::Langid => {
            let aligned = aligned_meta(&input, &metas)?;
            let vecs: Vec<Vec<f64>> = input.iter().map(|e| e.vec.clone()).collect();
            let langs: Vec<Language> = aligned.iter().map(|m| m.language).collect();
            let clf = train_language_id(&vecs, &langs, cfg.uint("langid.epochs"), cfg.float("langid.learning_rate"))?;
            langid_to_file(&clf)
        }
    };
    model.write(&args.out)
}

fn train_extractor(cfg: &PipelineConfig, args: &TrainArgs, feats: &[Embedding], metas: &[UttMeta]) -> CliResult<ModelFile> {
    let seed = cfg.seed();
    let data = TrainData::from_corpus(feats, metas)?;
    let common = TrainConfig {
        batch_size: cfg.uint("extractor.batch_size"),
        pct_speakers: cfg.uint("extractor.pct_speakers"),
        lambda: cfg.float("extractor.lambda"),
        mu: cfg.float("extractor.mu"),
        scale: cfg.float("extractor.scale"),
        margin: cfg.float("extractor.margin"),
        ..Default::default()
    };
    let (start, config) = match args.stage {
        Stage::Pretrain => {
            if args.init.is_some() {
                return Err(CliError::Usage("--init is only valid with --stage finetune".into()));
            }
            let ex = Extractor::random(
                data.features.ncols(),
                cfg.uint("extractor.hidden"),
                cfg.uint("extractor.dim"),
                derive_seed(seed, streams::EXTRACTOR_INIT),
            );
            let c = TrainConfig {
                strategy: Strategy::AamOnly,
                epochs: cfg.uint("extractor.pretrain_epochs"),
                lr_initial: cfg.float("extractor.pretrain_lr_initial"),
                lr_final: cfg.float("extractor.pretrain_lr_final"),
                seed: derive_seed(seed, streams::PRETRAIN),
                ..common
            };
            (ex, c)
        }
        Stage::Finetune => {
            let init = args.init.as_ref().ok_or_else(|| CliError::Usage("--init <extractor> is required for fine-tuning".into()))?;
            let c = TrainConfig {
                strategy: cfg.strategy("extractor.strategy"),
                epochs: cfg.uint("extractor.epochs"),
                lr_initial: cfg.float("extractor.lr_initial"),
                lr_final: cfg.float("extractor.lr_final"),
                seed: derive_seed(seed, streams::FINETUNE),
                ..common
            };
            (extractor_from_file(&ModelFile::read(init)?)?, c)
        }
    };
    let result = train(&start, &data, &config, None)?;
    Ok(extractor_to_file(&result.extractor, config.strategy, config.seed, config.epochs))
}

fn train_plda(cfg: &PipelineConfig, emb: &[Embedding], metas: &[UttMeta]) -> CliResult<ModelFile> {
    let aligned = aligned_meta(emb, metas)?;
    let vecs: Vec<Vec<f64>> = emb.iter().map(|e| e.vec.clone()).collect();
    let speakers: Vec<&str> = aligned.iter().map(|m| m.speaker_id.as_str()).collect();
    let (iters, ridge) = (cfg.uint("plda.iters"), cfg.float("plda.ridge_factor"));
    let phrases: Option<Vec<String>> = aligned.iter().map(|m| m.phrase_id.clone()).collect();
    let bank = match phrases {
        Some(phrases) if cfg.flag("plda.phrase_dependent") => {
            let mut bank = train_phrase_plda_bank(&vecs, &speakers, &phrases, iters, ridge)?;
            if let Some((_, e)) = bank.failures.pop_first() {
                return Err(e.into());
            }
            bank.models
        }
        _ => BTreeMap::from([(GLOBAL.to_string(), plda_em_train(&vecs, &speakers, iters, ridge)?.model)]),
    };
    Ok(plda_bank_to_file(&bank, iters, ridge))
}

/// Every unordered pair, tagged with the global bank key.
fn all_pairs(emb: &[Embedding], metas: &[&UttMeta]) -> Vec<NpldaPair> {
    let mut out = Vec::new();
    for i in 0..emb.len() {
        for j in i + 1..emb.len() {
            out.push(NpldaPair {
                enroll: emb[i].vec.clone(),
                test: emb[j].vec.clone(),
                enroll_phrase: GLOBAL.to_string(),
                test_phrase: GLOBAL.to_string(),
                target: metas[i].speaker_id == metas[j].speaker_id,
            });
        }
    }
    out
}

fn train_nplda_bank(
    cfg: &PipelineConfig,
    emb: &[Embedding],
    metas: &[UttMeta],
    plda: &BTreeMap<String, PldaModel>,
) -> CliResult<ModelFile> {
    let aligned = aligned_meta(emb, metas)?;
    let config = NpldaTrainConfig {
        learning_rate: cfg.float("nplda.learning_rate"),
        epochs: cfg.uint("nplda.epochs"),
        sharpness: cfg.float("nplda.sharpness"),
        cost: cfg.dcf(),
        threshold: None,
    };
    let ordered: Vec<UttMeta> = aligned.iter().map(|m| (*m).clone()).collect();
    let phrase_pairs = same_phrase_pairs(emb, &ordered)?;
    let mut out = BTreeMap::new();
    for (p, model) in plda {
        let pairs: Vec<NpldaPair> = if p == GLOBAL {
            if phrase_pairs.is_empty() {
                all_pairs(emb, &aligned)
            } else {
                phrase_pairs.clone()
            }
        } else {
            phrase_pairs.iter().filter(|q| &q.enroll_phrase == p).cloned().collect()
        };
        let fit = train_nplda(&init_from_plda(model)?, &pairs, &config)?;
        out.insert(p.clone(), (fit.params, fit.threshold));
    }
    Ok(nplda_bank_to_file(&out))
}

pub fn cmd_extract(args: &ExtractArgs) -> CliResult<()> {
    let ex = extractor_from_file(&ModelFile::read(&args.model)?)?;
    let feats = read_embeddings(&args.feats)?;
    let out: Vec<Embedding> = feats
        .par_iter()
        .map(|f| embed(&ex, &f.vec).map(|v| Embedding::new(f.utt_id.clone(), v)))
        .collect::<Result<_, _>>()?;
    write_embeddings(&args.out, &out)
}

fn load_backend(inputs: &TrialInputs) -> CliResult<Backend> {
    let kind: BackendKind = inputs.backend.parse()?;
    let model = || {
        inputs
            .model
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("--model is required for backend {}", inputs.backend)))
            .and_then(|p| ModelFile::read(p))
    };
    Ok(match kind {
        BackendKind::Cosine => Backend::Cosine,
        BackendKind::Plda => Backend::Plda(plda_bank_from_file(&model()?)?),
        BackendKind::Nplda => Backend::Nplda(nplda_bank_from_file(&model()?)?),
    })
}

struct Loaded {
    emb: Vec<Embedding>,
    enroll: BTreeMap<String, Vec<String>>,
    trials: Vec<spkver::domain::Trial>,
    backend: Backend,
}

fn load_trial_inputs(inputs: &TrialInputs) -> CliResult<Loaded> {
    Ok(Loaded {
        backend: load_backend(inputs)?,
        emb: read_embeddings(&inputs.emb)?,
        enroll: read_enrollments(&inputs.enroll)?,
        trials: read_trials(&inputs.trials)?,
    })
}

pub fn cmd_score(args: &ScoreArgs) -> CliResult<()> {
    let l = load_trial_inputs(&args.inputs)?;
    let index = EmbeddingIndex::new(&l.emb);
    let models = build_models(&l.enroll, &index)?;
    write_scores(&args.out, &score_trials(&l.trials, &models, &index, &l.backend)?)
}

pub fn cmd_norm(cfg: &PipelineConfig, args: &NormArgs) -> CliResult<()> {
    let l = load_trial_inputs(&args.inputs)?;
    let raw = read_scores(&args.raw)?;
    let cohort = Cohort::from_speakers(&read_embeddings(&args.cohort_emb)?, &read_meta(&args.cohort_meta)?)?;
    let index = EmbeddingIndex::new(&l.emb);
    let models = build_models(&l.enroll, &index)?;
    let mode = if cfg.get("norm.mode") == "lang" { NormMode::LanguageDependent } else { NormMode::Plain };
    let mut langs = HashMap::new();
    if mode == NormMode::LanguageDependent {
        if cfg.get("norm.language_source") == "meta" {
            let p = args.meta.as_ref().ok_or_else(|| CliError::Usage("--meta is required when norm.language_source = meta".into()))?;
            langs = read_meta(p)?.into_iter().map(|m| (m.utt_id, m.language)).collect();
        } else {
            let p = args.langid.as_ref().ok_or_else(|| CliError::Usage("--langid is required when norm.language_source = lid".into()))?;
            let clf = langid_from_file(&ModelFile::read(p)?)?;
            for t in &l.trials {
                if !langs.contains_key(&t.test_utt_id) {
                    let (lang, _) = predict_language(&clf, &index.get(&t.test_utt_id)?.vec)?;
                    langs.insert(t.test_utt_id.clone(), lang);
                }
            }
        }
    }
    let out = normalize_scores(&raw, &l.trials, &models, &index, &l.backend, &cohort, cfg.uint("norm.n_top"), mode, &langs)?;
    write_scores(&args.out, &out)
}

pub fn cmd_filter(cfg: &PipelineConfig, args: &FilterArgs) -> CliResult<()> {
    let scores = read_scores(&args.scores)?;
    let trials = read_trials(&args.trials)?;
    let inventory = read_phrases(&args.phrases)?;
    let metas = read_meta(&args.meta)?;
    let by_id = meta_index(&metas);
    let mut classified = BTreeMap::new();
    for t in &trials {
        if classified.contains_key(&t.test_utt_id) {
            continue;
        }
        let m = by_id.get(t.test_utt_id.as_str()).ok_or_else(|| CliError::Data(format!("missing metadata for `{}`", t.test_utt_id)))?;
        let text = m.transcript.as_deref().ok_or_else(|| CliError::Data(format!("no transcript for `{}`", t.test_utt_id)))?;
        classified.insert(t.test_utt_id.clone(), classify_phrase(text, &inventory)?.to_string());
    }
    write_scores(&args.out, &apply_phrase_filter(&scores, &trials, &classified, cfg.float("filter.floor"))?)
}

pub fn cmd_fuse(cfg: &PipelineConfig, args: &FuseArgs) -> CliResult<FusionWeights> {
    let sets = args.scores.iter().map(|p| read_scores(p)).collect::<CliResult<Vec<_>>>()?;
    let weights = match (&args.weights, &args.dev_key) {
        (Some(w), None) => {
            let parsed: Result<Vec<f64>, _> = w.split(',').map(|x| x.trim().parse::<f64>()).collect();
            FusionWeights::new(parsed.map_err(|_| CliError::Usage(format!("--weights: cannot parse `{w}`")))?)?
        }
        (None, Some(key)) => {
            if args.dev_scores.len() != sets.len() {
                return Err(CliError::Usage(format!(
                    "{} --dev-scores for {} --scores",
                    args.dev_scores.len(),
                    sets.len()
                )));
            }
            let dev = args.dev_scores.iter().map(|p| read_scores(p)).collect::<CliResult<Vec<_>>>()?;
            tune_weights(&dev, &read_keys(key)?, &cfg.dcf(), cfg.float("fusion.grid_step"))?
        }
        _ => return Err(CliError::Usage("give either --weights or --dev-scores with --dev-key".into())),
    };
    write_scores(&args.out, &fuse(&sets, &weights)?)?;
    Ok(weights)
}

pub fn cmd_eval(cfg: &PipelineConfig, args: &EvalArgs) -> CliResult<String> {
    let scores = read_scores(&args.scores)?;
    let keys = read_keys(&args.key)?;
    let (t, n) = split_by_key(&scores, &keys)?;
    let report = format!(
        "eer {}\nmin_dcf {}\nn_target {}\nn_nontarget {}\n",
        fmt_f64(eer(&scores, &keys)?),
        fmt_f64(min_dcf(&scores, &keys, &cfg.dcf())?),
        t.len(),
        n.len()
    );
    if let Some(p) = &args.out {
        write_text(p, &report)?;
    }
    Ok(report)
}

fn sha256_hex(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn files_under(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in rd {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        if p.is_dir() {
            files_under(&p, root, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

const SYSTEMS: [&str; 3] = ["cosine", "plda", "nplda"];

/// Runs gen, training, extraction, scoring, filtering (text-dependent) or
/// normalization (text-independent), fusion and evaluation through files under `--out`, then writes `manifest.txt`.
/// Returns the evaluation report.
pub fn cmd_e2e(cfg: &PipelineConfig, args: &E2eArgs) -> CliResult<String> {
    let root = &args.out;
    let manifest_path = root.join("manifest.txt");
    if manifest_path.exists() {
        std::fs::remove_file(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    }
    let data = root.join("data");
    let models = root.join("models");
    let emb = root.join("emb");
    let scores = root.join("scores");
    let d = |n: &str| data.join(n);
    let m = |n: &str| models.join(n);
    let e = |n: &str| emb.join(n);
    let s = |n: &str| scores.join(n);

    cmd_gen(cfg, &GenArgs { out: data.clone() })?;
    let train_args = |target, stage, input: PathBuf, meta: PathBuf, init: Option<PathBuf>, out: PathBuf| TrainArgs {
        target,
        stage,
        input,
        meta,
        init,
        out,
    };
    cmd_train(cfg, &train_args(Target::Extractor, Stage::Pretrain, d("pretrain.feat"), d("pretrain.meta"), None, m("pretrained.model")))?;
    cmd_train(
        cfg,
        &train_args(Target::Extractor, Stage::Finetune, d("train.feat"), d("train.meta"), Some(m("pretrained.model")), m("extractor.model")),
    )?;
    for split in ["train", "dev", "eval"] {
        cmd_extract(&ExtractArgs {
            model: m("extractor.model"),
            feats: d(&format!("{split}.feat")),
            out: e(&format!("{split}.emb")),
        })?;
    }
    cmd_train(cfg, &train_args(Target::Plda, Stage::Pretrain, e("train.emb"), d("train.meta"), None, m("plda.model")))?;
    cmd_train(cfg, &train_args(Target::Nplda, Stage::Pretrain, e("train.emb"), d("train.meta"), Some(m("plda.model")), m("nplda.model")))?;
    cmd_train(cfg, &train_args(Target::Langid, Stage::Pretrain, e("train.emb"), d("train.meta"), None, m("langid.model")))?;

    // Text-dependent scores go through the phrase filter, text-independent
    // scores through cohort normalization.
    let td = task(cfg) == Task::TextDependent;
    let last = if td { "filt" } else { "norm" };
    for split in ["dev", "eval"] {
        for sys in SYSTEMS {
            let inputs = TrialInputs {
                emb: e(&format!("{split}.emb")),
                enroll: d(&format!("{split}.enroll")),
                trials: d(&format!("{split}.trials")),
                backend: sys.to_string(),
                model: (sys != "cosine").then(|| m(&format!("{sys}.model"))),
            };
            let raw = s(&format!("{split}.{sys}.raw"));
            let out = s(&format!("{split}.{sys}.{last}"));
            cmd_score(&ScoreArgs { inputs: inputs.clone(), out: raw.clone() })?;
            if td {
                cmd_filter(
                    cfg,
                    &FilterArgs {
                        scores: raw,
                        trials: d(&format!("{split}.trials")),
                        meta: d(&format!("{split}.meta")),
                        phrases: d("phrases.txt"),
                        out,
                    },
                )?;
            } else {
                cmd_norm(
                    cfg,
                    &NormArgs {
                        inputs,
                        raw,
                        cohort_emb: e("train.emb"),
                        cohort_meta: d("train.meta"),
                        langid: Some(m("langid.model")),
                        meta: Some(d(&format!("{split}.meta"))),
                        out,
                    },
                )?;
            }
        }
    }
    let weights = cmd_fuse(
        cfg,
        &FuseArgs {
            scores: SYSTEMS.iter().map(|sys| s(&format!("eval.{sys}.{last}"))).collect(),
            weights: None,
            dev_scores: SYSTEMS.iter().map(|sys| s(&format!("dev.{sys}.{last}"))).collect(),
            dev_key: Some(d("dev.key")),
            out: s("eval.fused"),
        },
    )?;

    let mut report = String::new();
    let mut rows: Vec<(String, PathBuf)> = Vec::new();
    for sys in SYSTEMS {
        for st in ["raw", last] {
            rows.push((format!("{sys}.{st}"), s(&format!("eval.{sys}.{st}"))));
        }
    }
    rows.push(("fused".into(), s("eval.fused")));
    for (name, path) in rows {
        let r = cmd_eval(cfg, &EvalArgs { scores: path, key: d("eval.key"), out: None })?;
        let mut it = r.lines().map(|l| l.split_once(' ').expect("report line").1);
        let _ = writeln!(report, "{name} eer {} min_dcf {}", it.next().unwrap_or(""), it.next().unwrap_or(""));
    }
    write_text(&root.join("report.txt"), &report)?;

    let seed = cfg.seed();
    let mut manifest = format!("rng_algorithm {RNG_ALGORITHM}\nseed {seed}\n");
    for (name, stream) in streams::ALL {
        let _ = writeln!(manifest, "seed.{name} {}", derive_seed(seed, stream));
    }
    for (k, v) in cfg.semantic_entries() {
        let _ = writeln!(manifest, "config {k} {v}");
    }
    let _ = writeln!(manifest, "fusion_systems {}", SYSTEMS.join(" "));
    let _ = writeln!(manifest, "fusion_weights {}", render_floats(weights.as_slice()));
    let mut files = Vec::new();
    files_under(root, root, &mut files)?;
    files.sort();
    for f in files {
        let _ = writeln!(manifest, "sha256 {} {}", sha256_hex(&root.join(&f))?, f.display());
    }
    write_text(&manifest_path, &manifest)?;
    Ok(report)
}
