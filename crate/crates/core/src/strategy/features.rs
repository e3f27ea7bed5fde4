//! Lightweight text features and seeded k-means over them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TextSample;
use crate::rules::comma_count;

const MAX_ITERATIONS: usize = 100;
const PUNCTUATION: &str = "。！？，、；：…～“”‘’（）《》【】.!?,;:~\"'()";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub char_length: f64,
    /// Commas per 100 characters.
    pub comma_rate: f64,
    /// Newlines per 100 characters.
    pub newline_rate: f64,
    /// Fraction of characters that are punctuation.
    pub punct_density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_perplexity: Option<f64>,
}

impl FeatureVector {
    fn dims(&self, with_perplexity: bool, fill: f64) -> Vec<f64> {
        let mut v = vec![self.char_length, self.comma_rate, self.newline_rate, self.punct_density];
        if with_perplexity {
            v.push(self.external_perplexity.unwrap_or(fill));
        }
        v
    }

    fn from_dims(d: &[f64]) -> Self {
        FeatureVector {
            char_length: d[0],
            comma_rate: d[1],
            newline_rate: d[2],
            punct_density: d[3],
            external_perplexity: d.get(4).copied(),
        }
    }
}

pub fn extract_features(sample: &TextSample, perplexity: Option<f64>) -> FeatureVector {
    let n = sample.char_length();
    let text = sample.text();
    let per_100 = |count: usize| if n == 0 { 0.0 } else { 100.0 * count as f64 / n as f64 };
    let punct = text.chars().filter(|c| PUNCTUATION.contains(*c)).count();
    FeatureVector {
        char_length: n as f64,
        comma_rate: per_100(comma_count(text)),
        newline_rate: per_100(text.matches('\n').count()),
        punct_density: if n == 0 { 0.0 } else { punct as f64 / n as f64 },
        external_perplexity: perplexity,
    }
}

/// Per-dimension z-scoring. Constant dimensions get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dims = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..dims).map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n).collect();
        let std = (0..dims)
            .map(|d| {
                let var = rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }

    pub(crate) fn dims(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    /// Centroids in original feature units.
    pub centroids: Vec<FeatureVector>,
    pub standardizer: Standardizer,
    pub uses_perplexity: bool,
    /// Cluster index of each input row.
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared standardized distances.
    pub sse: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Nearest centroid index; ties go to the lowest index.
pub(crate) fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Row used for both fitting and assignment. Missing perplexities sit at the
/// training mean, i.e. zero after standardization.
pub(crate) fn standardized_row(f: &FeatureVector, standardizer: &Standardizer, uses_perplexity: bool) -> Vec<f64> {
    let fill = if uses_perplexity { standardizer.mean[4] } else { 0.0 };
    standardizer.apply(&f.dims(uses_perplexity, fill))
}

/// k-means with k-means++ seeding.
///
/// Features are z-scored over the input first. Lloyd iterations stop when no
/// assignment changes or after 100 rounds. The perplexity dimension is used
/// only when every input carries one.
pub fn fit_clusters(features: &[FeatureVector], k: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > features.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} exceeds the number of feature vectors ({})",
            features.len()
        )));
    }
    let uses_perplexity = features.iter().all(|f| f.external_perplexity.is_some());
    let raw: Vec<Vec<f64>> = features.iter().map(|f| f.dims(uses_perplexity, 0.0)).collect();
    if raw.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("feature vectors must be finite".into()));
    }
    let standardizer = Standardizer::fit(&raw);
    let points: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(&points, k, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let c = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dims = standardizer.dims();
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            // an empty cluster keeps its previous centroid
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
    }
    let sse = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    Ok(ClusterModel {
        centroids: centroids
            .iter()
            .map(|c| FeatureVector::from_dims(&standardizer.invert(c)))
            .collect(),
        standardizer,
        uses_perplexity,
        assignments,
        sse,
    })
}

fn init_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}
