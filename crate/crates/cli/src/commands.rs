//! Subcommand implementations.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use werpred_core::baseline::{self, Family};
use werpred_core::corpus::{self, Dataset};
use werpred_core::error::Error as CoreError;
use werpred_core::models::{
    self, Featurizer, HeadConfig, InputSpec, Profile, SignalKind, TrainProtocol,
};
use werpred_core::scoring::{self, PredictionRecord};
use werpred_core::textfeat::{load_embeddings, EmbeddingTable};

pub enum CliError {
    /// usage or data problem → exit 2
    Data(String),
    /// unexpected failure (output writing, inconsistent state) → exit 3
    Internal(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

type CmdResult = Result<(), CliError>;

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn load_manifest(path: &Path) -> Result<Dataset, CliError> {
    let loaded = corpus::load_manifest(path)?;
    if loaded.dropped_empty_hyp > 0 {
        eprintln!(
            "dropped {} empty-hypothesis record(s) from {}",
            loaded.dropped_empty_hyp,
            path.display()
        );
    }
    Ok(loaded.dataset)
}

// ---------------------------------------------------------------- synth

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory (manifest.jsonl, audio/, sidecars).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 60)]
    pub vocab: usize,
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip WAV generation (text-only corpus).
    #[arg(long)]
    pub no_audio: bool,
    /// Mixture weight of the 0% WER spike.
    #[arg(long, default_value_t = 0.3)]
    pub w_zero: f64,
    /// Mixture weight of the uniform mid-range component.
    #[arg(long, default_value_t = 0.4)]
    pub w_mid: f64,
    /// Mixture weight of the 100% WER spike.
    #[arg(long, default_value_t = 0.3)]
    pub w_full: f64,
    #[arg(long, default_value_t = 20.0)]
    pub mid_lo: f64,
    #[arg(long, default_value_t = 80.0)]
    pub mid_hi: f64,
}

pub fn synth(a: SynthArgs) -> CmdResult {
    let cfg = corpus::SynthConfig {
        n_utterances: a.n,
        vocab_size: a.vocab,
        max_len: a.max_len,
        error_profile: corpus::ErrorProfile {
            w_zero: a.w_zero,
            w_mid: a.w_mid,
            w_full: a.w_full,
            mid_range: (a.mid_lo, a.mid_hi),
        },
        seed: a.seed,
        write_audio: !a.no_audio,
        ..corpus::SynthConfig::default()
    };
    std::fs::create_dir_all(&a.out).map_err(|e| internal(format!("{}: {e}", a.out.display())))?;
    let audio_dir = a.out.join("audio");
    let mut data = corpus::synth_corpus(&cfg, &audio_dir)?;
    corpus::relativize_audio(&mut data, &a.out);
    data.save_manifest(&a.out.join("manifest.jsonl"))?;
    corpus::write_synth_lexicon(
        &corpus::synth_vocabulary(&cfg),
        &a.out.join("lexicon.tsv"),
        cfg.seed,
    )?;
    corpus::write_phone_categories(&a.out.join("phone_categories.json"))?;
    corpus::write_pos_sidecar(&data, &a.out.join("tags.tsv"))?;
    println!(
        "wrote {} utterances to {} (audio: {})",
        data.len(),
        a.out.display(),
        if a.no_audio { "no" } else { "yes" }
    );
    Ok(())
}

// ---------------------------------------------------------------- score

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Per-utterance scores (JSON-lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    id: &'a str,
    n_sub: usize,
    n_del: usize,
    n_ins: usize,
    n_ref: usize,
    wer_ref: f64,
}

pub fn score(a: ScoreArgs) -> CmdResult {
    let data = load_manifest(&a.manifest)?;
    let mut out = String::new();
    let mut skipped = 0usize;
    let mut wers = Vec::new();
    let (mut total_err, mut total_ref) = (0usize, 0usize);
    for u in data.iter() {
        let Some(r) = u.ref_tokens.as_ref().filter(|r| !r.is_empty()) else {
            skipped += 1;
            continue;
        };
        let al = scoring::align_words(r, &u.hyp)?;
        let wer = scoring::wer(&al)?;
        total_err += al.n_errors();
        total_ref += al.n_ref;
        wers.push(wer);
        let line = ScoreLine {
            id: &u.id,
            n_sub: al.n_sub,
            n_del: al.n_del,
            n_ins: al.n_ins,
            n_ref: al.n_ref,
            wer_ref: wer,
        };
        out.push_str(&serde_json::to_string(&line).map_err(internal)?);
        out.push('\n');
    }
    if wers.is_empty() {
        return Err(CliError::Data("no utterances with references to score".into()));
    }
    write_text(&a.out, &out)?;
    let mean = wers.iter().sum::<f64>() / wers.len() as f64;
    println!(
        "scored {} utterances ({} without reference skipped)",
        wers.len(),
        skipped
    );
    println!("mean utterance WER: {mean:.2}");
    println!(
        "corpus WER: {:.2}",
        total_err as f64 / total_ref as f64 * 100.0
    );
    Ok(())
}

// ---------------------------------------------------------------- extract

#[derive(Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Families to extract: subset of pos,lex,lm,sig ('+' or ',' separated).
    #[arg(long)]
    pub features: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Lexicon file (word<TAB>phoneme …), required for lex.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Phoneme → category JSON map, required for lex.
    #[arg(long)]
    pub phone_categories: Option<PathBuf>,
    /// POS sidecar (id<TAB>tag …) for the target manifest, required for pos.
    #[arg(long)]
    pub pos_tags: Option<PathBuf>,
    /// Sidecar used to train the tag bigram model (default: --pos-tags).
    #[arg(long)]
    pub lm_pos_tags: Option<PathBuf>,
    /// Explicit tagset (comma separated); default: tags seen in the tag-LM sidecar.
    #[arg(long)]
    pub tagset: Option<String>,
    /// Manifest whose reference side trains the n-gram LM (default: --manifest).
    #[arg(long)]
    pub lm_manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub lm_order: usize,
}

pub fn parse_families(s: &str) -> Result<Vec<Family>, CliError> {
    let mut fams = Vec::new();
    for part in s.split(['+', ',']) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let f = Family::parse(part)
            .ok_or_else(|| CliError::Data(format!("unknown feature family {part:?}")))?;
        if !fams.contains(&f) {
            fams.push(f);
        }
    }
    if fams.is_empty() {
        return Err(CliError::Data("no feature families selected".into()));
    }
    Ok(fams)
}

fn lm_sentences(d: &Dataset) -> Vec<Vec<String>> {
    d.iter()
        .map(|u| {
            u.ref_tokens
                .clone()
                .filter(|r| !r.is_empty())
                .unwrap_or_else(|| u.hyp.clone())
        })
        .collect()
}

pub fn extract(a: ExtractArgs) -> CmdResult {
    let data = load_manifest(&a.manifest)?;
    let families = parse_families(&a.features)?;

    let lm = if families.contains(&Family::Lm) {
        let lm_data = match &a.lm_manifest {
            Some(p) => load_manifest(p)?,
            None => data.clone(),
        };
        Some(baseline::train_ngram_lm(&lm_sentences(&lm_data), a.lm_order)?)
    } else {
        None
    };

    let lexicon = if families.contains(&Family::Lex) {
        let (lex, cats) = match (&a.lexicon, &a.phone_categories) {
            (Some(l), Some(c)) => (l, c),
            _ => {
                return Err(CliError::Data(
                    "lex features need --lexicon and --phone-categories".into(),
                ))
            }
        };
        Some(baseline::load_lexicon(lex, cats)?)
    } else {
        None
    };

    let (tags, tagset, tag_lm) = if families.contains(&Family::Pos) {
        let tags_path = a
            .pos_tags
            .as_ref()
            .ok_or_else(|| CliError::Data("pos features need --pos-tags".into()))?;
        let tags = baseline::load_pos_sidecar(tags_path)?;
        let lm_tags = match &a.lm_pos_tags {
            Some(p) => baseline::load_pos_sidecar(p)?,
            None => tags.clone(),
        };
        let tagset = match &a.tagset {
            Some(s) => s.split(',').map(|t| t.trim().to_string()).collect(),
            None => baseline::derive_tagset(&lm_tags),
        };
        let sequences: Vec<Vec<String>> = lm_tags.values().cloned().collect();
        let tag_lm = baseline::train_tag_lm(&sequences)?;
        (tags, tagset, Some(tag_lm))
    } else {
        (HashMap::new(), Vec::new(), None)
    };

    let extractor = baseline::Extractor {
        families: families.clone(),
        lm,
        lexicon,
        tagset: tagset.clone(),
        tag_lm,
        tags,
    };
    let rows = extractor.extract(&data)?;

    let targets: Option<Vec<f64>> = data
        .iter()
        .map(|u| u.reference_wer())
        .collect::<Option<Vec<f64>>>();
    if targets.is_none() {
        eprintln!("note: some utterances lack references; omitting the wer_ref column");
    }
    baseline::write_features_csv(&rows, targets.as_deref(), &families, &tagset, &a.out)?;
    println!(
        "extracted {} rows × {:?} to {}",
        rows.len(),
        families.iter().map(|f| f.name()).collect::<Vec<_>>(),
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- train-cnn

#[derive(Args)]
pub struct TrainCnnArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// embed | raw | mel | mfcc | embed+raw | embed+mel | embed+mfcc
    #[arg(long)]
    pub input: String,
    /// softmax | relu
    #[arg(long, default_value = "softmax")]
    pub head: String,
    /// Model output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "desk")]
    pub profile: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the profile's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Override the profile's restart count.
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dev_fraction: Option<f64>,
    /// Word2vec-text embedding file; a deterministic random table over the
    /// corpus vocabulary is derived when absent.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

pub fn parse_input(s: &str) -> Result<InputSpec, CliError> {
    Ok(match s {
        "embed" => InputSpec::Embed,
        "raw" => InputSpec::Signal(SignalKind::Raw),
        "mel" => InputSpec::Signal(SignalKind::Mel),
        "mfcc" => InputSpec::Signal(SignalKind::Mfcc),
        "embed+raw" => InputSpec::Joint(SignalKind::Raw),
        "embed+mel" => InputSpec::Joint(SignalKind::Mel),
        "embed+mfcc" => InputSpec::Joint(SignalKind::Mfcc),
        other => return Err(CliError::Data(format!("unknown input {other:?}"))),
    })
}

fn parse_head(s: &str) -> Result<HeadConfig, CliError> {
    Ok(match s {
        "softmax" => HeadConfig::softmax(),
        "relu" => HeadConfig::relu(),
        other => return Err(CliError::Data(format!("unknown head {other:?}"))),
    })
}

fn parse_profile(s: &str) -> Result<Profile, CliError> {
    Ok(match s {
        "desk" => Profile::Desk,
        "paper" => Profile::Paper,
        other => return Err(CliError::Data(format!("unknown profile {other:?}"))),
    })
}

pub fn dataset_vocabulary(d: &Dataset) -> Vec<String> {
    let mut set = BTreeSet::new();
    for u in d.iter() {
        set.extend(u.hyp.iter().cloned());
        if let Some(r) = &u.ref_tokens {
            set.extend(r.iter().cloned());
        }
    }
    set.into_iter().collect()
}

fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os("WERPRED_CACHE_DIR").map(PathBuf::from)
}

#[derive(Serialize)]
struct TrainLogFile<'a> {
    selected_restart: usize,
    logs: &'a [models::RestartLog],
}

pub fn train_cnn(a: TrainCnnArgs) -> CmdResult {
    let data = load_manifest(&a.manifest)?;
    let input = parse_input(&a.input)?;
    let head = parse_head(&a.head)?;
    let profile = parse_profile(&a.profile)?;

    let mut protocol: TrainProtocol = profile.protocol(a.seed);
    if let Some(e) = a.epochs {
        protocol.epochs = e;
    }
    if let Some(r) = a.restarts {
        protocol.restarts = r;
    }
    if let Some(b) = a.batch_size {
        protocol.adadelta.batch_size = b;
    }
    if let Some(f) = a.dev_fraction {
        protocol.dev_fraction = f;
    }

    let desc = profile.descriptor(input, head, a.seed);
    let table = if input.needs_text() {
        Some(match &a.embeddings {
            Some(p) => {
                let loaded = load_embeddings(p)?;
                for w in &loaded.duplicate_words {
                    eprintln!("warning: duplicate embedding for {w:?}; last occurrence kept");
                }
                if loaded.table.dim != desc.embed.unwrap().dim {
                    return Err(CliError::Data(format!(
                        "embedding dim {} does not match profile dim {}",
                        loaded.table.dim,
                        desc.embed.unwrap().dim
                    )));
                }
                loaded.table
            }
            None => EmbeddingTable::random(
                &dataset_vocabulary(&data),
                desc.embed.unwrap().dim,
                a.seed,
            ),
        })
    } else {
        None
    };

    let featurizer = Featurizer::new(&desc, table.clone(), cache_dir_from_env())?;
    let outcome = models::train(&desc, &data, &featurizer, &protocol)?;

    models::save_model(&a.out, &outcome.network, &desc, table.as_ref())
        .map_err(|e| internal(e.to_string()))?;
    let log = TrainLogFile {
        selected_restart: outcome.selected_restart,
        logs: &outcome.logs,
    };
    write_text(
        &a.out.join("train_log.json"),
        &serde_json::to_string_pretty(&log).map_err(internal)?,
    )?;
    println!(
        "trained {} restarts × {} epochs; selected restart {} (dev MAE {:.3})",
        protocol.restarts,
        protocol.epochs,
        outcome.selected_restart,
        outcome.logs[outcome.selected_restart].final_dev_mae()
    );
    for l in &outcome.logs {
        println!(
            "  restart {} seed {}: final dev MAE {:.3}",
            l.restart,
            l.seed,
            l.final_dev_mae()
        );
    }
    println!("model written to {}", a.out.display());
    Ok(())
}

// ---------------------------------------------------------------- train-reg

#[derive(Args)]
pub struct TrainRegArgs {
    /// Feature CSV with a wer_ref column (from `extract`).
    #[arg(long)]
    pub features_file: PathBuf,
    /// Families to fit on: subset of pos,lex,lm,sig ('+' or ',' separated).
    #[arg(long)]
    pub features: String,
    #[arg(long)]
    pub out: PathBuf,
    /// extra-trees | ridge
    #[arg(long, default_value = "extra-trees")]
    pub kind: String,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn train_reg(a: TrainRegArgs) -> CmdResult {
    let (rows, targets) = baseline::read_features_csv(&a.features_file)?;
    let targets = targets.ok_or_else(|| {
        CliError::Data("features file has no wer_ref column; extract from a manifest with references".into())
    })?;
    let families = parse_families(&a.features)?;
    let kind = match a.kind.as_str() {
        "extra-trees" => baseline::RegressorKind::ExtraTrees,
        "ridge" => baseline::RegressorKind::Ridge,
        other => return Err(CliError::Data(format!("unknown regressor kind {other:?}"))),
    };
    let cfg = baseline::FitConfig {
        kind,
        extra_trees: baseline::ExtraTreesConfig {
            n_trees: a.trees,
            seed: a.seed,
            ..baseline::ExtraTreesConfig::default()
        },
        ridge: baseline::RidgeConfig { lambda: a.lambda },
    };
    let reg = baseline::fit_regressor(&rows, &targets, &families, &cfg)?;
    baseline::save_regressor(&reg, &a.out).map_err(|e| internal(e.to_string()))?;
    println!(
        "fitted {} on {} rows × {:?}; model written to {}",
        a.kind,
        rows.len(),
        families.iter().map(|f| f.name()).collect::<Vec<_>>(),
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- predict

#[derive(Args)]
pub struct PredictArgs {
    /// CNN model directory (from train-cnn) or regressor JSON (from train-reg).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Feature CSV for the target manifest (regressor models only).
    #[arg(long)]
    pub features_file: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
pub struct PredLine {
    pub id: String,
    pub wer_pred: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wer_ref: Option<f64>,
}

fn write_predictions(path: &Path, recs: &[PredictionRecord]) -> Result<(), CliError> {
    let mut out = String::new();
    for r in recs {
        let line = PredLine {
            id: r.id.clone(),
            wer_pred: r.wer_pred,
            wer_ref: r.wer_ref,
        };
        out.push_str(&serde_json::to_string(&line).map_err(internal)?);
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn predict(a: PredictArgs) -> CmdResult {
    let data = load_manifest(&a.manifest)?;
    let recs = if a.model.is_dir() {
        let loaded = models::load_model(&a.model)?;
        let featurizer = Featurizer::new(&loaded.descriptor, loaded.table, cache_dir_from_env())?;
        models::predict_dataset(&loaded.network, &data, &featurizer)?
    } else {
        let reg = baseline::load_regressor(&a.model)?;
        let features_file = a.features_file.as_ref().ok_or_else(|| {
            CliError::Data("regressor models need --features-file for the target manifest".into())
        })?;
        let (rows, _) = baseline::read_features_csv(features_file)?;
        let by_id: HashMap<&str, &corpus::Utterance> =
            data.iter().map(|u| (u.id.as_str(), u)).collect();
        let mut recs = Vec::with_capacity(rows.len());
        for row in &rows {
            let u = by_id.get(row.id.as_str()).ok_or_else(|| {
                CliError::Data(format!("feature row {} not in manifest", row.id))
            })?;
            let pred = baseline::predict_regressor(&reg, row)?;
            let mut rec = PredictionRecord::new(row.id.clone(), u.reference_wer(), pred);
            rec.group.insert("style".into(), u.style.to_string());
            rec.group.insert("show".into(), u.show.clone());
            recs.push(rec);
        }
        recs
    };
    write_predictions(&a.out, &recs)?;
    println!("wrote {} predictions to {}", recs.len(), a.out.display());
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Aggregation key: style | show.
    #[arg(long, default_value = "style")]
    pub group_by: String,
    #[arg(long, default_value_t = 5.0)]
    pub bin_width: f64,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredLine>, CliError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut preds = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PredLine = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        preds.push(p);
    }
    if preds.is_empty() {
        return Err(CliError::Data(format!("{}: no predictions", path.display())));
    }
    Ok(preds)
}

/// Join predictions with manifest references; every prediction id must
/// resolve to an utterance with a reference.
fn join_records(
    preds: &[PredLine],
    data: &Dataset,
) -> Result<Vec<PredictionRecord>, CliError> {
    let by_id: HashMap<&str, &corpus::Utterance> =
        data.iter().map(|u| (u.id.as_str(), u)).collect();
    let mut recs = Vec::with_capacity(preds.len());
    for p in preds {
        let u = by_id.get(p.id.as_str()).ok_or_else(|| {
            CliError::Data(format!("prediction id {} not in manifest", p.id))
        })?;
        let wer_ref = u.reference_wer().ok_or_else(|| {
            CliError::Data(format!("utterance {} has no reference WER", p.id))
        })?;
        let mut rec = PredictionRecord::new(p.id.clone(), Some(wer_ref), p.wer_pred);
        rec.group.insert("style".into(), u.style.to_string());
        rec.group.insert("show".into(), u.show.clone());
        recs.push(rec);
    }
    Ok(recs)
}

#[derive(Serialize)]
struct MetricsFile {
    mae: f64,
    kendall_tau: Option<f64>,
    n: usize,
}

fn tau_or_none(recs: &[PredictionRecord]) -> Result<Option<f64>, CliError> {
    match scoring::kendall_tau(recs) {
        Ok(t) => Ok(Some(t)),
        Err(CoreError::TauUndefined) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn write_histogram_csv(path: &Path, values: &[f64], bin_width: f64) -> Result<(), CliError> {
    let bins = scoring::histogram(values, bin_width, scoring::HISTOGRAM_CAP)?;
    let mut csv = String::from("bin_start,count\n");
    for (start, count) in bins {
        csv.push_str(&format!("{start},{count}\n"));
    }
    write_text(path, &csv)
}

pub fn evaluate(a: EvaluateArgs) -> CmdResult {
    let data = load_manifest(&a.manifest)?;
    let preds = read_predictions(&a.predictions)?;
    let recs = join_records(&preds, &data)?;
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| internal(format!("{}: {e}", a.out_dir.display())))?;

    let mae = scoring::mae(&recs)?;
    let tau = tau_or_none(&recs)?;
    let metrics = MetricsFile {
        mae,
        kendall_tau: tau,
        n: recs.len(),
    };
    write_text(
        &a.out_dir.join("metrics.json"),
        &serde_json::to_string_pretty(&metrics).map_err(internal)?,
    )?;

    let rows = scoring::aggregate(&recs, &a.group_by)?;
    let mut csv = String::from("group,n_utterances,mean_wer_ref,mean_wer_pred\n");
    for r in &rows {
        // Table-3 layout labels the all-styles row "NS + S"
        let label = if a.group_by == "style" && r.group == "ALL" {
            "NS + S"
        } else {
            r.group.as_str()
        };
        csv.push_str(&format!(
            "{label},{},{},{}\n",
            r.n_utterances,
            r.mean_wer_ref.map_or(String::new(), |v| format!("{v:.2}")),
            format_args!("{:.2}", r.mean_wer_pred),
        ));
    }
    write_text(&a.out_dir.join("aggregate.csv"), &csv)?;

    let pred_values: Vec<f64> = recs.iter().map(|r| r.wer_pred).collect();
    write_histogram_csv(&a.out_dir.join("histogram.csv"), &pred_values, a.bin_width)?;
    let ref_values: Vec<f64> = recs.iter().filter_map(|r| r.wer_ref).collect();
    write_histogram_csv(&a.out_dir.join("histogram_ref.csv"), &ref_values, a.bin_width)?;

    println!("n = {}", recs.len());
    println!("MAE = {mae:.2}");
    match tau {
        Some(t) => println!("Kendall tau = {:.4} ({:.2} x100)", t, t * 100.0),
        None => println!("Kendall tau undefined (zero variance)"),
    }
    println!("reports written to {}", a.out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------- compare

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct SystemReport {
    name: String,
    mae: f64,
    kendall_tau: Option<f64>,
}

#[derive(Serialize)]
struct CompareReport {
    a: SystemReport,
    b: SystemReport,
    n: usize,
    wilcoxon_p: Option<f64>,
    note: Option<String>,
}

pub fn compare(args: CompareArgs) -> CmdResult {
    let data = load_manifest(&args.manifest)?;
    let pa = read_predictions(&args.a)?;
    let pb = read_predictions(&args.b)?;
    let ids_a: BTreeSet<&str> = pa.iter().map(|p| p.id.as_str()).collect();
    let ids_b: BTreeSet<&str> = pb.iter().map(|p| p.id.as_str()).collect();
    if ids_a != ids_b {
        return Err(CliError::Data(
            "prediction files cover different id sets".into(),
        ));
    }
    let recs_a = join_records(&pa, &data)?;
    let recs_b = join_records(&pb, &data)?;

    // paired absolute errors in shared sorted-id order
    let err_of = |recs: &[PredictionRecord]| -> HashMap<String, f64> {
        recs.iter()
            .map(|r| (r.id.clone(), (r.wer_ref.unwrap() - r.wer_pred).abs()))
            .collect()
    };
    let (ea, eb) = (err_of(&recs_a), err_of(&recs_b));
    let mut ids: Vec<&str> = ids_a.into_iter().collect();
    ids.sort_unstable();
    let errors_a: Vec<f64> = ids.iter().map(|i| ea[*i]).collect();
    let errors_b: Vec<f64> = ids.iter().map(|i| eb[*i]).collect();

    let (wilcoxon_p, note) = match scoring::wilcoxon_signed_rank(&errors_a, &errors_b) {
        Ok(p) => (Some(p), None),
        Err(CoreError::InsufficientPairs) => {
            let all_zero = errors_a
                .iter()
                .zip(&errors_b)
                .all(|(x, y)| (x - y) == 0.0);
            let msg = if all_zero {
                "no non-zero differences"
            } else {
                "insufficient non-zero differences"
            };
            (None, Some(msg.to_string()))
        }
        Err(e) => return Err(e.into()),
    };

    let name_of = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string())
    };
    let report = CompareReport {
        a: SystemReport {
            name: name_of(&args.a),
            mae: scoring::mae(&recs_a)?,
            kendall_tau: tau_or_none(&recs_a)?,
        },
        b: SystemReport {
            name: name_of(&args.b),
            mae: scoring::mae(&recs_b)?,
            kendall_tau: tau_or_none(&recs_b)?,
        },
        n: ids.len(),
        wilcoxon_p,
        note: note.clone(),
    };
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| internal(format!("{}: {e}", args.out_dir.display())))?;
    write_text(
        &args.out_dir.join("compare.json"),
        &serde_json::to_string_pretty(&report).map_err(internal)?,
    )?;

    // Table-2-shaped rows: system, MAE, tau ×100
    let mut csv = String::from("system,mae,tau_x100\n");
    for s in [&report.a, &report.b] {
        csv.push_str(&format!(
            "{},{:.2},{}\n",
            s.name,
            s.mae,
            s.kendall_tau
                .map_or(String::new(), |t| format!("{:.2}", t * 100.0))
        ));
    }
    write_text(&args.out_dir.join("comparison.csv"), &csv)?;

    println!("system,mae,tau_x100");
    println!(
        "{},{:.2},{}",
        report.a.name,
        report.a.mae,
        report
            .a
            .kendall_tau
            .map_or(String::new(), |t| format!("{:.2}", t * 100.0))
    );
    println!(
        "{},{:.2},{}",
        report.b.name,
        report.b.mae,
        report
            .b
            .kendall_tau
            .map_or(String::new(), |t| format!("{:.2}", t * 100.0))
    );
    match (&report.wilcoxon_p, &note) {
        (Some(p), _) => println!("Wilcoxon signed-rank p = {p:.3e} (n = {})", report.n),
        (None, Some(msg)) => println!("Wilcoxon signed-rank: {msg}"),
        _ => {}
    }
    Ok(())
}
