//! Macro-F1, per-subset reports and the reliability estimate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{build_adversarial_set, MtClient, Transform};
use crate::error::{Error, Result};
use crate::model::{Dataset, Label, TextSample};
use crate::util;

/// Subset name given to samples without a subset tag.
pub const UNTAGGED: &str = "all-untagged";

/// Column order of the plain-text report; unknown subsets follow alphabetically.
const CANONICAL_SUBSETS: [&str; 8] = [
    "normal",
    "mixed",
    "paraphrase",
    "perturbation",
    "len-64",
    "len-128",
    "len-256",
    "len-512",
];

/// Confusion counts with machine-generated text as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl ConfusionMatrix {
    pub fn from_pairs(predictions: &[Label], gold: &[Label]) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (&p, &g) in predictions.iter().zip(gold) {
            match (p, g) {
                (Label::Llm, Label::Llm) => cm.tp += 1,
                (Label::Llm, Label::Human) => cm.fp += 1,
                (Label::Human, Label::Human) => cm.tn += 1,
                (Label::Human, Label::Llm) => cm.fn_ += 1,
            }
        }
        cm
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// F1 of one class; 0/0 precision or recall counts as 0.
    pub fn class_f1(&self, class: Label) -> f64 {
        match class {
            Label::Llm => f1(self.tp, self.fp, self.fn_),
            Label::Human => f1(self.tn, self.fn_, self.fp),
        }
    }

    pub fn macro_f1(&self) -> f64 {
        (self.class_f1(Label::Llm) + self.class_f1(Label::Human)) / 2.0
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

pub fn macro_f1(predictions: &[Label], gold: &[Label]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            actual: predictions.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::InvalidInput("macro-F1 of an empty set".into()));
    }
    Ok(ConfusionMatrix::from_pairs(predictions, gold).macro_f1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub overall_macro_f1: f64,
    pub per_subset: BTreeMap<String, f64>,
    pub n_per_subset: BTreeMap<String, usize>,
}

impl EvaluationReport {
    fn ordered_subsets(&self) -> Vec<&str> {
        let mut names: Vec<&str> = CANONICAL_SUBSETS
            .iter()
            .copied()
            .filter(|s| self.per_subset.contains_key(*s))
            .collect();
        names.extend(
            self.per_subset
                .keys()
                .map(String::as_str)
                .filter(|k| !CANONICAL_SUBSETS.contains(k)),
        );
        names
    }

    /// Header, one row of macro-F1 to four decimals, and sample counts.
    pub fn to_table(&self, system: &str) -> String {
        render_table(&[(system, self)])
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        util::write_json(path.as_ref(), self)
    }
}

/// One row per system over a shared dataset; columns come from the first report.
pub fn render_table(rows: &[(&str, &EvaluationReport)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let subsets = first.ordered_subsets();
    let mut header = format!("{:<24}| {:>7}", "system", "all");
    for s in &subsets {
        let width = s.len().max(7);
        write!(header, " | {s:>width$}").unwrap();
    }
    let mut out = format!("{header}\n{}\n", "-".repeat(header.chars().count()));
    for (system, report) in rows {
        let mut row = format!("{:<24}| {:>7.4}", system, report.overall_macro_f1);
        for s in &subsets {
            let width = s.len().max(7);
            match report.per_subset.get(*s) {
                Some(v) => write!(row, " | {v:>width$.4}").unwrap(),
                None => write!(row, " | {:>width$}", "-").unwrap(),
            }
        }
        out.push_str(&row);
        out.push('\n');
    }
    let mut counts = format!("{:<24}| {:>7}", "n", first.n_per_subset.values().sum::<usize>());
    for s in &subsets {
        let width = s.len().max(7);
        write!(counts, " | {:>width$}", first.n_per_subset[*s]).unwrap();
    }
    out.push_str(&counts);
    out.push('\n');
    out
}

pub fn per_subset_report(dataset: &Dataset, predictions: &[Label]) -> Result<EvaluationReport> {
    if predictions.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            expected: dataset.len(),
            actual: predictions.len(),
        });
    }
    let gold = dataset.gold_labels()?;
    let overall_macro_f1 = macro_f1(predictions, &gold)?;

    let mut groups: BTreeMap<String, (Vec<Label>, Vec<Label>)> = BTreeMap::new();
    for ((s, &p), &g) in dataset.iter().zip(predictions).zip(&gold) {
        let entry = groups.entry(s.subset().unwrap_or(UNTAGGED).to_string()).or_default();
        entry.0.push(p);
        entry.1.push(g);
    }
    let mut per_subset = BTreeMap::new();
    let mut n_per_subset = BTreeMap::new();
    for (name, (p, g)) in groups {
        per_subset.insert(name.clone(), macro_f1(&p, &g)?);
        n_per_subset.insert(name, p.len());
    }
    Ok(EvaluationReport {
        overall_macro_f1,
        per_subset,
        n_per_subset,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEstimate {
    pub value: f64,
    pub n_texts: usize,
    pub n_transforms: usize,
    pub correct: usize,
    /// Accuracy per transform, in transform order.
    pub per_transform: Vec<f64>,
}

/// Mean correctness of `judge` over every transform applied to every text.
pub fn estimate_reliability<F>(
    judge: F,
    dataset: &Dataset,
    transforms: &[Transform],
    mt: &dyn MtClient,
) -> Result<ReliabilityEstimate>
where
    F: FnMut(&TextSample) -> Result<Label>,
{
    let mut judge = judge;
    if transforms.is_empty() {
        return Err(Error::InvalidInput("reliability needs at least one transform".into()));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidInput("reliability needs at least one text".into()));
    }
    dataset.gold_labels()?;
    let transformed = build_adversarial_set(dataset, transforms, mt)?;
    let n = dataset.len();
    let mut per_transform = Vec::with_capacity(transforms.len());
    let mut correct = 0;
    for chunk in transformed.samples().chunks(n) {
        let mut hits = 0;
        for s in chunk {
            if Some(judge(s)?) == s.gold_label() {
                hits += 1;
            }
        }
        per_transform.push(hits as f64 / n as f64);
        correct += hits;
    }
    Ok(ReliabilityEstimate {
        value: correct as f64 / (n * transforms.len()) as f64,
        n_texts: n,
        n_transforms: transforms.len(),
        correct,
        per_transform,
    })
}
