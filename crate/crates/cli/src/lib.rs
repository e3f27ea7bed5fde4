//! Config-driven pipeline: `fit`, `calibrate`, `predict`, `eval`, `augment`.
//!
//! Every command reads one [`RunConfig`]. Fitted artifacts go to
//! `artifacts_dir`; predictions, audits, reports and augmented data go to
//! `output_dir`. Exit codes: 0 success, 1 usage or configuration error,
//! 2 data error, 3 external adapter error.

pub mod bank;
pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mgtd_core::augment::{self, HttpMt, MtClient, StubMt, Transform};
use mgtd_core::error::ErrorKind;
use mgtd_core::eval::{self, EvaluationReport};
use mgtd_core::model::{self, Dataset, DetectorVerdict, Label};
use mgtd_core::strategy::{self, BookFitOptions, StrategyBook};
use mgtd_core::support::{Demonstration, HttpLlmSupport, StubSupport, SupportProvider};
use mgtd_core::voting::{self, OverrideRule, VoteOutcome};
use serde::{Deserialize, Serialize};

pub use config::RunConfig;
use bank::DetectorBank;
use config::{BookSource, MtConfig, SupportConfig};

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const AUGMENTED_FILE: &str = "augmented.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mgtd_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::External => 3,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Calibrate,
    Predict,
    Eval,
    Augment,
}

/// Runs one command and returns a short summary for the terminal.
pub fn run(command: Command, cfg: &RunConfig) -> Result<String> {
    match command {
        Command::Fit => cmd_fit(cfg),
        Command::Calibrate => cmd_calibrate(cfg),
        Command::Predict => cmd_predict(cfg),
        Command::Eval => cmd_eval(cfg).map(|(_, table)| table),
        Command::Augment => cmd_augment(cfg),
    }
}

fn required<'a>(p: &'a Option<PathBuf>, field: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::Config(format!("`{field}` is required for this command")))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_jsonl_file<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("serializable");
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn relabel(cfg: &RunConfig, d: Dataset) -> Result<Dataset> {
    if cfg.label_for_llm == 1 {
        return Ok(d);
    }
    let flipped = d.iter().map(|s| s.clone().with_gold(s.gold_label().map(Label::flip))).collect();
    Ok(Dataset::new(flipped)?)
}

/// Maps between file labels and internal labels; the mapping is its own inverse.
fn file_label(cfg: &RunConfig, l: Label) -> Label {
    if cfg.label_for_llm == 1 {
        l
    } else {
        l.flip()
    }
}

fn load(cfg: &RunConfig, path: &Path) -> Result<Dataset> {
    relabel(cfg, model::load_dataset(path)?)
}

fn load_labeled(cfg: &RunConfig, path: &Path) -> Result<Dataset> {
    let d = load(cfg, path)?;
    d.gold_labels()?;
    Ok(d)
}

fn provider(cfg: &RunConfig) -> Result<Option<Box<dyn SupportProvider>>> {
    Ok(match &cfg.support {
        SupportConfig::None => None,
        SupportConfig::Stub { path } => Some(Box::new(StubSupport::load(path)?)),
        SupportConfig::Http { endpoint, demonstrations, template } => {
            let demos = match demonstrations {
                Some(p) => Demonstration::load_all(p)?,
                None => Vec::new(),
            };
            Some(Box::new(HttpLlmSupport::new(endpoint.clone(), template.clone(), demos)?))
        }
    })
}

fn override_rules(cfg: &RunConfig) -> Result<Vec<OverrideRule>> {
    match &cfg.overrides {
        Some(p) => Ok(voting::load_override_rules(p)?),
        None => Ok(Vec::new()),
    }
}

fn perplexities(cfg: &RunConfig, judged: &bank::Judged, n: usize) -> Vec<Option<f64>> {
    match &cfg.strategy.perplexity_detector {
        Some(id) => judged.raw_scores[id].iter().map(|&x| Some(x)).collect(),
        None => vec![None; n],
    }
}

fn judge_all(
    dataset: &Dataset,
    verdicts: &[Vec<DetectorVerdict>],
    book: &StrategyBook,
    provider: Option<&dyn SupportProvider>,
    rules: &[OverrideRule],
    perplexity: &[Option<f64>],
) -> Result<Vec<VoteOutcome>> {
    dataset
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(voting::judge(s, &verdicts[i], book, provider, rules, perplexity[i])?))
        .collect()
}

#[derive(Serialize)]
struct FitReport {
    book: &'static str,
    n_train: usize,
    warnings: Vec<String>,
    /// Training macro-F1 per detector and for the ensemble.
    train_macro_f1: std::collections::BTreeMap<String, f64>,
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<String> {
    let train = load_labeled(cfg, required(&cfg.train, "train")?)?;
    ensure_dir(&cfg.artifacts_dir)?;
    let bank = DetectorBank::fit(cfg, &train)?;
    let registry = cfg.registry();
    let judged = bank.judge(&train)?;
    let provider = provider(cfg)?;
    let ppl = perplexities(cfg, &judged, train.len());

    let mut warnings = Vec::new();
    let (book, source) = match &cfg.strategy.book {
        BookSource::Default => (strategy::default_strategy_book_for(&registry)?, "default"),
        BookSource::File(p) => (StrategyBook::load(p)?, "file"),
        BookSource::Fit => {
            let support: Option<Vec<f64>> = match &provider {
                Some(p) if cfg.strategy.grid.lambdas.iter().any(|&l| l > 0.0) => {
                    Some(train.iter().map(|s| p.query(s).value).collect())
                }
                _ => None,
            };
            let options = match &cfg.strategy.fit {
                BookFitOptions::Clusters { k, seed } => {
                    BookFitOptions::Clusters { k: *k, seed: seed.wrapping_add(cfg.seed) }
                }
                other => other.clone(),
            };
            let (book, w) = strategy::fit_strategy_book(
                &train,
                &judged.table,
                &registry,
                &options,
                &cfg.strategy.grid,
                support.as_deref(),
                cfg.strategy.perplexity_detector.as_ref().map(|_| ppl.as_slice()),
            )?;
            warnings = w;
            (book, "fit")
        }
    };
    book.save(cfg.artifacts_dir.join(bank::BOOK_FILE))?;

    let gold = train.gold_labels()?;
    let mut train_macro_f1 = std::collections::BTreeMap::new();
    for id in &registry {
        let preds: Vec<Label> = judged.table[id].iter().map(|v| v.prediction()).collect();
        train_macro_f1.insert(id.clone(), eval::macro_f1(&preds, &gold)?);
    }
    let outcomes = judge_all(
        &train,
        &judged.per_sample(&registry, train.len()),
        &book,
        provider.as_deref(),
        &override_rules(cfg)?,
        &ppl,
    )?;
    let preds: Vec<Label> = outcomes.iter().map(|o| o.decision).collect();
    let ensemble = eval::macro_f1(&preds, &gold)?;
    train_macro_f1.insert("ensemble".into(), ensemble);
    let report = FitReport { book: source, n_train: train.len(), warnings, train_macro_f1 };
    write_json_file(&cfg.artifacts_dir.join(bank::FIT_REPORT_FILE), &report)?;
    Ok(format!(
        "fitted {} detectors and a {}-strategy book on {} samples (train macro-F1 {ensemble:.4}); artifacts in {}",
        registry.len(),
        book.strategies.len(),
        train.len(),
        cfg.artifacts_dir.display()
    ))
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<String> {
    let train = load_labeled(cfg, required(&cfg.train, "train")?)?;
    ensure_dir(&cfg.artifacts_dir)?;
    let profiles = bank::calibrate_all(cfg, &train)?;
    for p in &profiles {
        p.save(bank::thresholds_path(&cfg.artifacts_dir, &p.detector_id))?;
    }
    Ok(format!("calibrated {} score detector(s)", profiles.len()))
}

#[derive(Serialize, Deserialize)]
struct VerdictRecord {
    id: String,
    verdicts: Vec<DetectorVerdict>,
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<String> {
    let input = load(cfg, required(&cfg.input, "input")?)?;
    let bank = DetectorBank::load(cfg)?;
    let book = StrategyBook::load(cfg.artifacts_dir.join(bank::BOOK_FILE))?;
    let registry = cfg.registry();
    let judged = bank.judge(&input)?;
    let verdicts = judged.per_sample(&registry, input.len());
    let provider = provider(cfg)?;
    let outcomes = judge_all(
        &input,
        &verdicts,
        &book,
        provider.as_deref(),
        &override_rules(cfg)?,
        &perplexities(cfg, &judged, input.len()),
    )?;

    ensure_dir(&cfg.output_dir)?;
    let preds: Vec<Label> = outcomes.iter().map(|o| file_label(cfg, o.decision)).collect();
    model::save_predictions(&input, &preds, cfg.output_dir.join(PREDICTIONS_FILE))?;
    voting::write_audit(cfg.output_dir.join(AUDIT_FILE), &outcomes)?;
    let records: Vec<VerdictRecord> = input
        .iter()
        .zip(verdicts)
        .map(|(s, v)| VerdictRecord { id: s.id().to_string(), verdicts: v })
        .collect();
    write_jsonl_file(&cfg.output_dir.join(VERDICTS_FILE), &records)?;
    Ok(format!("wrote {} predictions to {}", preds.len(), cfg.output_dir.join(PREDICTIONS_FILE).display()))
}

/// Scores the ensemble predictions and, if present, each detector's verdicts.
pub fn cmd_eval(cfg: &RunConfig) -> Result<(EvaluationReport, String)> {
    let input = load_labeled(cfg, required(&cfg.input, "input")?)?;
    let preds: Vec<(String, Label)> = model::load_predictions(cfg.output_dir.join(PREDICTIONS_FILE))?
        .into_iter()
        .map(|(id, l)| (id, file_label(cfg, l)))
        .collect();
    let aligned = model::align_predictions(&input, &preds)?;
    let report = eval::per_subset_report(&input, &aligned)?;

    let mut rows: Vec<(String, EvaluationReport)> = Vec::new();
    let verdicts_path = cfg.output_dir.join(VERDICTS_FILE);
    if verdicts_path.exists() {
        let text = fs::read_to_string(&verdicts_path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", verdicts_path.display())))?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<VerdictRecord>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{}: {e}", verdicts_path.display())))?;
        for id in cfg.registry() {
            let per_id: Vec<(String, Label)> = records
                .iter()
                .filter_map(|r| {
                    r.verdicts.iter().find(|v| v.detector_id() == id).map(|v| (r.id.clone(), v.prediction()))
                })
                .collect();
            let aligned = model::align_predictions(&input, &per_id)?;
            rows.push((id, eval::per_subset_report(&input, &aligned)?));
        }
    }
    let mut table_rows: Vec<(&str, &EvaluationReport)> = rows.iter().map(|(id, r)| (id.as_str(), r)).collect();
    table_rows.push(("ensemble", &report));
    let table = eval::render_table(&table_rows);

    ensure_dir(&cfg.output_dir)?;
    report.save_json(cfg.output_dir.join(REPORT_JSON))?;
    fs::write(cfg.output_dir.join(REPORT_TXT), &table)
        .map_err(|e| CliError::Config(format!("cannot write report: {e}")))?;
    Ok((report, table))
}

fn mt_client(mt: &MtConfig) -> Result<Box<dyn MtClient>> {
    Ok(match mt {
        MtConfig::Identity => Box::new(StubMt::identity()),
        MtConfig::Stub { path, strict: true } => Box::new(StubMt::load(path)?.strict()),
        MtConfig::Stub { path, strict: false } => Box::new(StubMt::load(path)?),
        MtConfig::Http { endpoint } => Box::new(HttpMt::new(endpoint.clone())),
    })
}

pub fn cmd_augment(cfg: &RunConfig) -> Result<String> {
    let input = load(cfg, required(&cfg.input, "input")?)?;
    if cfg.augment.transforms.is_empty() {
        return Err(CliError::Config("`augment.transforms` is empty".into()));
    }
    let transforms: Vec<Transform> = cfg
        .augment
        .transforms
        .iter()
        .map(|t| match t {
            Transform::Excerpt { target_len, seed } => {
                Transform::Excerpt { target_len: *target_len, seed: seed.wrapping_add(cfg.seed) }
            }
            other => other.clone(),
        })
        .collect();
    let mt = mt_client(&cfg.augment.mt)?;
    let out = augment::build_adversarial_set(&input, &transforms, mt.as_ref())?;
    ensure_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join(AUGMENTED_FILE);
    let n = out.len();
    model::save_dataset(&relabel(cfg, out)?, &path)?;
    Ok(format!("wrote {n} transformed samples to {}", path.display()))
}
