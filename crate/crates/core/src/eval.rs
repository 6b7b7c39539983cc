//! Classification harness: L1-regularized one-vs-rest logistic regression,
//! macro-averaged metrics, and a sparse `label idx:value` feature format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub l1_penalty: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l1_penalty: 1e-4,
            epochs: 50,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

/// One binary logistic model per class over standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub classes: Vec<String>,
    /// C×F weights on standardized features.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl LinearClassifier {
    fn standardize(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        (&x - &self.mean) / &self.scale
    }

    pub fn decision(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.weights.dot(&self.standardize(x)) + &self.bias
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> &str {
        let scores = self.decision(x);
        let best = scores
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc },
            )
            .0;
        &self.classes[best]
    }

    pub fn predict_all(&self, features: &Array2<f64>) -> Vec<String> {
        features
            .rows()
            .into_iter()
            .map(|r| self.predict(r).to_string())
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn soft_threshold(w: f64, t: f64) -> f64 {
    if w > t {
        w - t
    } else if w < -t {
        w + t
    } else {
        0.0
    }
}

/// Trains one-vs-rest logistic regression by stochastic gradient steps with a
/// proximal (soft-threshold) L1 update. Sample order per epoch comes from `seed`.
pub fn train_linear_classifier(
    features: &Array2<f64>,
    labels: &[String],
    config: &TrainConfig,
) -> Result<LinearClassifier> {
    if features.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::SingleClass(classes.len()));
    }
    let targets: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("class present"))
        .collect();
    let (m, f) = features.dim();
    let mean = features.mean_axis(Axis(0)).expect("m >= 2");
    let scale = features
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let x = (features - &mean) / &scale;

    let c = classes.len();
    let mut weights = Array2::<f64>::zeros((c, f));
    let mut bias = Array1::<f64>::zeros(c);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..m).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let eta = config.learning_rate / (1.0 + epoch as f64).sqrt();
        let threshold = eta * config.l1_penalty;
        for &i in &order {
            let xi = x.row(i);
            for (cls, (mut w, b)) in weights.rows_mut().into_iter().zip(bias.iter_mut()).enumerate() {
                let y = if targets[i] == cls { 1.0 } else { 0.0 };
                let g = sigmoid(w.dot(&xi) + *b) - y;
                w.scaled_add(-eta * g, &xi);
                w.mapv_inplace(|v| soft_threshold(v, threshold));
                *b -= eta * g;
            }
        }
    }
    Ok(LinearClassifier {
        classes,
        weights,
        bias,
        mean,
        scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl ClassificationReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Invalid(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }

    /// Plain-text table; numbers use shortest round-trip formatting.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.per_class {
            writeln!(
                out,
                "class {} precision {} recall {} f1 {} support {}",
                c.label, c.precision, c.recall, c.f1, c.support
            )
            .expect("write to string");
        }
        writeln!(out, "macro_precision {}", self.macro_precision).expect("write to string");
        writeln!(out, "macro_recall {}", self.macro_recall).expect("write to string");
        writeln!(out, "macro_f1 {}", self.macro_f1).expect("write to string");
        out
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 (0/0 = 0) and their unweighted means over
/// the classes that occur in `truth`.
pub fn macro_metrics<L: AsRef<str>>(predicted: &[L], truth: &[L]) -> Result<ClassificationReport> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    #[derive(Default)]
    struct Counts {
        tp: usize,
        fp: usize,
        fn_: usize,
    }
    let mut counts: BTreeMap<&str, Counts> = BTreeMap::new();
    for t in truth {
        counts.entry(t.as_ref()).or_default();
    }
    for (p, t) in predicted.iter().zip(truth) {
        let (p, t) = (p.as_ref(), t.as_ref());
        if p == t {
            counts.get_mut(t).expect("seeded").tp += 1;
        } else {
            counts.get_mut(t).expect("seeded").fn_ += 1;
            if let Some(c) = counts.get_mut(p) {
                c.fp += 1;
            }
        }
    }
    let per_class: Vec<ClassMetrics> = counts
        .into_iter()
        .map(|(label, c)| {
            let precision = ratio(c.tp, c.tp + c.fp);
            let recall = ratio(c.tp, c.tp + c.fn_);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: label.to_string(),
                precision,
                recall,
                f1,
                support: c.tp + c.fn_,
            }
        })
        .collect();
    let n = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    Ok(ClassificationReport {
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
    })
}

/// `label idx:value ...` with 1-based indices, zeros omitted.
pub fn format_sparse_line(label: &str, row: ArrayView1<'_, f64>) -> String {
    let mut line: String = label.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    for (i, &v) in row.iter().enumerate() {
        if v != 0.0 {
            write!(line, " {}:{}", i + 1, v).expect("write to string");
        }
    }
    line
}

const DIM_COMMENT: &str = "# features: ";

/// Writes one sparse line per row, preceded by a `# features: F` comment.
pub fn export_features(features: &Array2<f64>, labels: &[String], path: &Path) -> Result<()> {
    if features.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let mut out = format!("{DIM_COMMENT}{}\n", features.ncols());
    for (row, label) in features.rows().into_iter().zip(labels) {
        out.push_str(&format_sparse_line(label, row));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    pub features: Array2<f64>,
    pub labels: Vec<String>,
}

/// Reads the sparse format. The dimension comes from the `# features:` comment
/// when present, else the largest index seen.
pub fn import_features(path: &Path) -> Result<SparseDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut declared: Option<usize> = None;
    let mut rows: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        if let Some(rest) = line.strip_prefix(DIM_COMMENT) {
            declared = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| parse_err(format!("bad dimension `{rest}`")))?,
            );
            continue;
        }
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label = parts.next().expect("non-empty line").to_string();
        let mut entries = Vec::new();
        for item in parts {
            let (idx, val) = item
                .split_once(':')
                .ok_or_else(|| parse_err(format!("expected idx:value, got `{item}`")))?;
            let idx: usize = idx
                .parse()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| parse_err(format!("bad index `{idx}`")))?;
            let val: f64 = val.parse().map_err(|_| parse_err(format!("bad value `{val}`")))?;
            entries.push((idx - 1, val));
        }
        rows.push((label, entries));
    }
    let max_idx = rows
        .iter()
        .flat_map(|(_, e)| e.iter().map(|(i, _)| i + 1))
        .max()
        .unwrap_or(0);
    let dim = match declared {
        Some(d) if d < max_idx => {
            return Err(Error::DimensionMismatch(format!(
                "{}: index {max_idx} exceeds declared dimension {d}",
                path.display()
            )))
        }
        Some(d) => d,
        None => max_idx,
    };
    let mut features = Array2::zeros((rows.len(), dim));
    let mut labels = Vec::with_capacity(rows.len());
    for (r, (label, entries)) in rows.into_iter().enumerate() {
        for (i, v) in entries {
            features[[r, i]] = v;
        }
        labels.push(label);
    }
    Ok(SparseDataset { features, labels })
}
