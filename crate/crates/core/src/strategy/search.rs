//! Grid search for ensemble weights, and fitting of whole strategy books.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{extract_features, fit_clusters, BookMode, Predicate, Strategy, StrategyBook};
use crate::error::{Error, Result};
use crate::eval::ConfusionMatrix;
use crate::model::{Dataset, DetectorVerdict, Label, TextSample};
use crate::scores::DEFAULT_BUCKET_EDGES;

/// Candidate weights for coordinate ascent.
pub const DEFAULT_WEIGHT_GRID: [f64; 15] =
    [0., 10., 35., 40., 50., 55., 60., 70., 75., 80., 85., 90., 95., 100., 400.];

/// Detector id -> one verdict per sample, aligned with the sample slice.
pub type VerdictTable = BTreeMap<String, Vec<DetectorVerdict>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchGrid {
    pub weights: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub taus: Vec<f64>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        SearchGrid { weights: DEFAULT_WEIGHT_GRID.to_vec(), lambdas: vec![0.0], taus: vec![0.0] }
    }
}

impl SearchGrid {
    fn normalized(&self) -> Result<SearchGrid> {
        fn clean(name: &str, v: &[f64], non_negative: bool) -> Result<Vec<f64>> {
            if v.is_empty() {
                return Err(Error::Config(format!("search grid `{name}` is empty")));
            }
            if v.iter().any(|x| !x.is_finite() || (non_negative && *x < 0.0)) {
                return Err(Error::Config(format!("search grid `{name}` has an invalid value")));
            }
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            Ok(v)
        }
        let weights = clean("weights", &self.weights, true)?;
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::Config("search grid `weights` has no positive value".into()));
        }
        Ok(SearchGrid {
            weights,
            lambdas: clean("lambdas", &self.lambdas, true)?,
            taus: clean("taus", &self.taus, false)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BookFitOptions {
    LengthBuckets { edges: Vec<usize> },
    Clusters { k: usize, seed: u64 },
}

impl Default for BookFitOptions {
    fn default() -> Self {
        BookFitOptions::LengthBuckets { edges: DEFAULT_BUCKET_EDGES.to_vec() }
    }
}

/// Dense view of one training problem.
struct Problem {
    votes: Vec<Vec<f64>>,
    gold: Vec<Label>,
    support: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Config {
    weights: Vec<f64>,
    lambda: f64,
    tau: f64,
}

impl Problem {
    fn new<S: AsRef<str>>(
        samples: &[TextSample],
        verdicts: &VerdictTable,
        registry: &[S],
        support: Option<&[f64]>,
    ) -> Result<Problem> {
        let n = samples.len();
        let mut gold = Vec::with_capacity(n);
        let mut unlabeled = Vec::new();
        for s in samples {
            match s.gold_label() {
                Some(l) => gold.push(l),
                None => unlabeled.push(s.id().to_string()),
            }
        }
        if !unlabeled.is_empty() {
            return Err(Error::MissingIds { what: "gold label", ids: unlabeled });
        }
        let votes = registry
            .iter()
            .map(|d| {
                let d = d.as_ref();
                let column = verdicts.get(d).ok_or_else(|| Error::MissingVerdict(d.to_string()))?;
                if column.len() != n {
                    return Err(Error::LengthMismatch { expected: n, actual: column.len() });
                }
                Ok(column.iter().map(|v| f64::from(v.vote())).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let support = match support {
            Some(d) if d.len() != n => return Err(Error::LengthMismatch { expected: n, actual: d.len() }),
            Some(d) => {
                if let Some(&bad) = d.iter().find(|x| !(-1.0..=1.0).contains(*x)) {
                    return Err(Error::SupportOutOfRange(bad));
                }
                d.to_vec()
            }
            None => vec![0.0; n],
        };
        Ok(Problem { votes, gold, support })
    }

    fn scores(&self, weights: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.gold.len()];
        for (w, column) in weights.iter().zip(&self.votes) {
            if *w > 0.0 {
                for (acc, v) in s.iter_mut().zip(column) {
                    *acc += w * v;
                }
            }
        }
        s
    }

    fn f1(&self, scores: &[f64], weights: &[f64], lambda: f64, tau: f64) -> f64 {
        let band = band(weights);
        let mut cm = ConfusionMatrix::default();
        for ((&s, &d), &gold) in scores.iter().zip(&self.support).zip(&self.gold) {
            let pred = decide(s, d, lambda, tau, band);
            match (pred, gold) {
                (Label::Llm, Label::Llm) => cm.tp += 1,
                (Label::Llm, Label::Human) => cm.fp += 1,
                (Label::Human, Label::Human) => cm.tn += 1,
                (Label::Human, Label::Llm) => cm.fn_ += 1,
            }
        }
        cm.macro_f1()
    }
}

fn band(weights: &[f64]) -> f64 {
    2.0 * weights.iter().copied().filter(|&w| w > 0.0).fold(f64::INFINITY, f64::min)
}

fn decide(score: f64, support: f64, lambda: f64, tau: f64, band: f64) -> Label {
    let d = if lambda > 0.0 && (score - tau).abs() <= band { support } else { 0.0 };
    if score + lambda * d >= tau {
        Label::Llm
    } else {
        Label::Human
    }
}

const EPS: f64 = 1e-12;
const MAX_ROUNDS: usize = 100;

fn search(problem: &Problem, grid: &SearchGrid) -> (Config, f64) {
    let m = problem.votes.len();
    let positive: Vec<f64> = grid.weights.iter().copied().filter(|&w| w > 0.0).collect();

    // Best single detector, over every (lambda, tau) pair.
    let mut best: Option<(Config, f64)> = None;
    for i in 0..m {
        for &w in &positive {
            let mut weights = vec![0.0; m];
            weights[i] = w;
            let scores = problem.scores(&weights);
            for &lambda in &grid.lambdas {
                for &tau in &grid.taus {
                    let f1 = problem.f1(&scores, &weights, lambda, tau);
                    if best.as_ref().is_none_or(|b| f1 > b.1 + EPS) {
                        best = Some((Config { weights: weights.clone(), lambda, tau }, f1));
                    }
                }
            }
        }
    }
    let (mut cfg, mut best_f1) = best.expect("registry and grid are non-empty");

    // Coordinate ascent with strict improvement.
    for _ in 0..MAX_ROUNDS {
        let mut improved = false;
        let mut scores = problem.scores(&cfg.weights);
        for i in 0..m {
            let current = cfg.weights[i];
            for &w in &grid.weights {
                if w == current {
                    continue;
                }
                let mut weights = cfg.weights.clone();
                weights[i] = w;
                if !weights.iter().any(|&x| x > 0.0) {
                    continue;
                }
                let delta = w - cfg.weights[i];
                let trial: Vec<f64> =
                    scores.iter().zip(&problem.votes[i]).map(|(s, v)| s + delta * v).collect();
                let f1 = problem.f1(&trial, &weights, cfg.lambda, cfg.tau);
                if f1 > best_f1 + EPS {
                    best_f1 = f1;
                    cfg.weights = weights;
                    scores = trial;
                    improved = true;
                }
            }
        }
        for &lambda in &grid.lambdas {
            let f1 = problem.f1(&scores, &cfg.weights, lambda, cfg.tau);
            if f1 > best_f1 + EPS {
                best_f1 = f1;
                cfg.lambda = lambda;
                improved = true;
            }
        }
        for &tau in &grid.taus {
            let f1 = problem.f1(&scores, &cfg.weights, cfg.lambda, tau);
            if f1 > best_f1 + EPS {
                best_f1 = f1;
                cfg.tau = tau;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    // Exact recount guards against drift in the incremental sums.
    let f1 = problem.f1(&problem.scores(&cfg.weights), &cfg.weights, cfg.lambda, cfg.tau);
    (cfg, f1)
}

/// Searches detector weights, lambda and tau over `grid` to maximize
/// macro-F1 on `samples`.
///
/// Starts from the best single detector, then runs coordinate ascent over
/// weights in registry order followed by lambda and tau, accepting only
/// strict improvements, until a full pass changes nothing. Fails with
/// [`Error::NoImprovement`] if the result does not beat predicting every
/// text as LLM.
pub fn optimize_weights<S: AsRef<str>>(
    samples: &[TextSample],
    verdicts: &VerdictTable,
    registry: &[S],
    grid: &SearchGrid,
    support: Option<&[f64]>,
) -> Result<Strategy> {
    if registry.is_empty() {
        return Err(Error::Config("detector registry is empty".into()));
    }
    let grid = grid.normalized()?;
    let problem = Problem::new(samples, verdicts, registry, support)?;
    if !(problem.gold.contains(&Label::Llm) && problem.gold.contains(&Label::Human)) {
        return Err(Error::SingleLabel(format!("{} training samples", samples.len())));
    }
    let baseline = ConfusionMatrix::from_pairs(&vec![Label::Llm; problem.gold.len()], &problem.gold).macro_f1();
    let (cfg, f1) = search(&problem, &grid);
    if f1 <= baseline + EPS {
        return Err(Error::NoImprovement);
    }
    log::debug!("weight search reached macro-F1 {f1:.4} (all-LLM baseline {baseline:.4})");
    Ok(Strategy {
        strategy_id: "global".into(),
        weights: registry.iter().zip(cfg.weights).map(|(d, w)| (d.as_ref().to_string(), w)).collect(),
        lambda: cfg.lambda,
        tau: cfg.tau,
        predicate: Predicate::CATCH_ALL,
        support_band: None,
    })
}

/// Macro-F1 of `strategy` applied to every sample, with the support gate.
pub fn ensemble_macro_f1(
    samples: &[TextSample],
    verdicts: &VerdictTable,
    strategy: &Strategy,
    support: Option<&[f64]>,
) -> Result<f64> {
    let registry: Vec<&String> = strategy.weights.keys().collect();
    let problem = Problem::new(samples, verdicts, &registry, support)?;
    let weights: Vec<f64> = strategy.weights.values().copied().collect();
    let scores = problem.scores(&weights);
    let band = strategy.uncertainty_band();
    let preds: Vec<Label> = scores
        .iter()
        .zip(&problem.support)
        .map(|(&s, &d)| decide(s, d, strategy.lambda, strategy.tau, band))
        .collect();
    Ok(ConfusionMatrix::from_pairs(&preds, &problem.gold).macro_f1())
}

struct Subset {
    samples: Vec<TextSample>,
    verdicts: VerdictTable,
    support: Option<Vec<f64>>,
}

fn subset(samples: &[TextSample], verdicts: &VerdictTable, support: Option<&[f64]>, keep: &[usize]) -> Subset {
    Subset {
        samples: keep.iter().map(|&i| samples[i].clone()).collect(),
        verdicts: verdicts
            .iter()
            .map(|(k, v)| (k.clone(), keep.iter().filter_map(|&i| v.get(i).cloned()).collect()))
            .collect(),
        support: support.map(|d| keep.iter().filter_map(|&i| d.get(i).copied()).collect()),
    }
}

fn bucket_names(edges: &[usize]) -> Vec<String> {
    if edges == DEFAULT_BUCKET_EDGES {
        return ["ext_short", "short", "medium"].map(String::from).to_vec();
    }
    let mut lo = 0;
    edges
        .iter()
        .map(|&hi| {
            let name = format!("len_{lo}_{hi}");
            lo = hi;
            name
        })
        .collect()
}

/// Fits one strategy per length interval or per feature cluster.
///
/// A region whose training texts lack a class, or where the search cannot
/// beat the all-LLM baseline, reuses the strategy fitted on all of `train`;
/// each such fallback is reported in the returned warnings. In length mode
/// the final `general` strategy covers `[0, inf)` and is fitted on texts at
/// least as long as the last edge.
pub fn fit_strategy_book<S: AsRef<str>>(
    train: &Dataset,
    verdicts: &VerdictTable,
    registry: &[S],
    options: &BookFitOptions,
    grid: &SearchGrid,
    support: Option<&[f64]>,
    perplexities: Option<&[Option<f64>]>,
) -> Result<(StrategyBook, Vec<String>)> {
    let samples = train.samples();
    let global = optimize_weights(samples, verdicts, registry, grid, support)?;
    let mut warnings = Vec::new();
    let mut fit_region = |name: String, predicate: Predicate, keep: Vec<usize>| -> Result<Strategy> {
        let part = subset(samples, verdicts, support, &keep);
        let fitted = optimize_weights(&part.samples, &part.verdicts, registry, grid, part.support.as_deref());
        let mut strategy = match fitted {
            Ok(s) => s,
            Err(e @ (Error::SingleLabel(_) | Error::NoImprovement)) => {
                let msg = format!("strategy `{name}` ({} samples) uses the global fit: {e}", keep.len());
                log::warn!("{msg}");
                warnings.push(msg);
                global.clone()
            }
            Err(e) => return Err(e),
        };
        strategy.strategy_id = name;
        strategy.predicate = predicate;
        Ok(strategy)
    };

    match options {
        BookFitOptions::LengthBuckets { edges } => {
            if edges.windows(2).any(|w| w[0] >= w[1]) || edges.first() == Some(&0) {
                return Err(Error::Config("length edges must be positive and strictly increasing".into()));
            }
            let mut strategies = Vec::with_capacity(edges.len() + 1);
            let mut lo = 0;
            for (&hi, name) in edges.iter().zip(bucket_names(edges)) {
                let keep = (0..samples.len())
                    .filter(|&i| (lo..hi).contains(&samples[i].char_length()))
                    .collect();
                strategies.push(fit_region(name, Predicate::Length { lo, hi: Some(hi) }, keep)?);
                lo = hi;
            }
            let keep = (0..samples.len()).filter(|&i| samples[i].char_length() >= lo).collect();
            strategies.push(fit_region("general".into(), Predicate::CATCH_ALL, keep)?);
            Ok((StrategyBook::length_buckets(strategies)?, warnings))
        }
        BookFitOptions::Clusters { k, seed } => {
            if let Some(p) = perplexities {
                if p.len() != samples.len() {
                    return Err(Error::LengthMismatch { expected: samples.len(), actual: p.len() });
                }
            }
            let features: Vec<_> = samples
                .iter()
                .enumerate()
                .map(|(i, s)| extract_features(s, perplexities.and_then(|p| p[i])))
                .collect();
            let model = fit_clusters(&features, *k, *seed)?;
            let mut strategies = Vec::with_capacity(*k);
            for c in 0..*k {
                let keep = (0..samples.len()).filter(|&i| model.assignments[i] == c).collect();
                strategies.push(fit_region(format!("cluster_{c}"), Predicate::Cluster { centroid: c }, keep)?);
            }
            let book = StrategyBook {
                mode: BookMode::Clusters,
                strategies,
                centroids: Some(model.centroids),
                standardizer: Some(model.standardizer),
                uses_perplexity: model.uses_perplexity,
            };
            book.validate()?;
            Ok((book, warnings))
        }
    }
}
