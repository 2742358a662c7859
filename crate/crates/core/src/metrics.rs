//! Confusion matrices and macro-averaged one-vs-all indicators.

use serde::Serialize;

use crate::error::{Error, Result};

/// `counts[i][j]` = samples of true class `i` predicted as `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
    n: u64,
}

/// One-vs-all counts for a single class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Harmonic mean of precision and recall.
    ///
    /// A class that is never present and never predicted scores 1; a class
    /// with no true positives otherwise scores 0.
    pub fn f_measure(&self) -> f64 {
        if 2 * self.tp + self.fp + self.fn_ == 0 {
            return 1.0;
        }
        if self.tp == 0 {
            return 0.0;
        }
        let p = self.tp as f64 / (self.tp + self.fp) as f64;
        let r = self.tp as f64 / (self.tp + self.fn_) as f64;
        2.0 * p * r / (p + r)
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

impl ConfusionMatrix {
    pub fn from_counts(n_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != n_classes * n_classes {
            return Err(Error::LengthMismatch(format!(
                "{} counts for a {n_classes}x{n_classes} matrix",
                counts.len()
            )));
        }
        let n = counts.iter().sum();
        Ok(Self { n_classes, counts, n })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, i)).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.trace() == self.n
    }

    /// CSV grid with a header row of predicted classes and one row per true class.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let name = |i: usize| class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = String::from("true\\pred");
        for j in 0..self.n_classes {
            out.push(',');
            out.push_str(&name(j));
        }
        out.push('\n');
        for i in 0..self.n_classes {
            out.push_str(&name(i));
            for j in 0..self.n_classes {
                out.push_str(&format!(",{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts = vec![0u64; n_classes * n_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        for index in [p, y] {
            if index >= n_classes {
                return Err(Error::IndexOutOfRange { index, limit: n_classes });
            }
        }
        counts[y * n_classes + p] += 1;
    }
    ConfusionMatrix::from_counts(n_classes, counts)
}

pub fn one_vs_all(cm: &ConfusionMatrix, c: usize) -> Result<BinaryCounts> {
    let k = cm.n_classes;
    if c >= k {
        return Err(Error::IndexOutOfRange { index: c, limit: k });
    }
    let tp = cm.get(c, c);
    let fp = (0..k).filter(|&i| i != c).map(|i| cm.get(i, c)).sum::<u64>();
    let fn_ = (0..k).filter(|&j| j != c).map(|j| cm.get(c, j)).sum::<u64>();
    Ok(BinaryCounts { tp, fp, fn_, tn: cm.n - tp - fp - fn_ })
}

fn per_class(cm: &ConfusionMatrix) -> impl Iterator<Item = BinaryCounts> + '_ {
    (0..cm.n_classes).map(move |c| one_vs_all(cm, c).expect("class index in range"))
}

/// Mean over classes of the one-vs-all F-measure.
pub fn f_measure_macro(cm: &ConfusionMatrix) -> f64 {
    per_class(cm).map(|b| b.f_measure()).sum::<f64>() / cm.n_classes as f64
}

/// Mean over classes of the one-vs-all binary accuracy `(tp+tn)/n`.
pub fn accuracy_macro(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.n == 0 {
        return Err(Error::UndefinedInput("accuracy of an empty confusion matrix".into()));
    }
    Ok(per_class(cm).map(|b| b.accuracy()).sum::<f64>() / cm.n_classes as f64)
}

/// `trace / n`.
pub fn accuracy_overall(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.n == 0 {
        return Err(Error::UndefinedInput("accuracy of an empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / cm.n as f64)
}

/// One row of a metrics report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub split: String,
    pub method: String,
    pub f_macro: f64,
    pub acc_macro: f64,
    pub acc_overall: f64,
}

pub const METRICS_HEADER: &str = "dataset,split,method,F_macro,Acc_macro,Acc_overall";

impl MetricsRow {
    pub fn compute(dataset: &str, split: &str, method: &str, cm: &ConfusionMatrix) -> Result<Self> {
        Ok(Self {
            dataset: dataset.into(),
            split: split.into(),
            method: method.into(),
            f_macro: f_measure_macro(cm),
            acc_macro: accuracy_macro(cm)?,
            acc_overall: accuracy_overall(cm)?,
        })
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{:.4}",
            self.dataset, self.split, self.method, self.f_macro, self.acc_macro, self.acc_overall
        )
    }
}
