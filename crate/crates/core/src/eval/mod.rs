//! Scoring: 4-class confusion matrix, binary Normal-vs-Abnormal collapse,
//! Sensitivity / Specificity / Score, and report emission.
//!
//! Under the relaxed protocol an abnormal-class sample counts as correct
//! when predicted into *any* abnormal class; the strict variant requires the
//! exact class. Specificity is always Normal-predicted-Normal. Score is the
//! arithmetic mean of the two.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label lists differ in length: {truth} vs {predicted}")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} at position {index} out of range (4 classes)")]
    OutOfRange { index: usize, label: usize },
    #[error("malformed report: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub const NUM_CLASSES: usize = 4;
const ABNORMAL: [usize; 3] = [1, 2, 3];

/// Counts with rows = true class, columns = predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tallies paired label lists.
    pub fn from_pairs(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(EvalError::LengthMismatch {
                truth: truth.len(),
                predicted: predicted.len(),
            });
        }
        let mut matrix = Self::new();
        for (i, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
            for label in [t, p] {
                if label >= NUM_CLASSES {
                    return Err(EvalError::OutOfRange { index: i, label });
                }
            }
            matrix.counts[t][p] += 1;
        }
        Ok(matrix)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn set(&mut self, truth: usize, predicted: usize, count: u64) {
        self.counts[truth][predicted] = count;
    }

    pub fn n_total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }
}

/// A metric that may be undefined when its denominator class is absent.
/// Undefined is reported as such rather than silently zeroed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Defined(f64),
    Undefined,
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Defined(v) => Some(v),
            MetricValue::Undefined => None,
        }
    }

    pub fn expect_defined(self, what: &str) -> f64 {
        self.value()
            .unwrap_or_else(|| panic!("{what} is undefined"))
    }

    fn render(self) -> String {
        match self {
            MetricValue::Defined(v) => format!("{v:.4}"),
            MetricValue::Undefined => "undefined".to_string(),
        }
    }
}

/// Which abnormal predictions count as correct for sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Protocol {
    /// Any abnormal class predicted for an abnormal sample is correct.
    #[default]
    Relaxed,
    /// The exact abnormal class must be predicted.
    Strict,
}

/// Fraction of abnormal samples classified into (any, or the exact)
/// abnormal class.
pub fn sensitivity(matrix: &ConfusionMatrix, protocol: Protocol) -> MetricValue {
    let total: u64 = ABNORMAL.iter().map(|&t| matrix.row_total(t)).sum();
    if total == 0 {
        return MetricValue::Undefined;
    }
    let correct: u64 = match protocol {
        Protocol::Relaxed => ABNORMAL
            .iter()
            .flat_map(|&t| ABNORMAL.iter().map(move |&p| matrix.count(t, p)))
            .sum(),
        Protocol::Strict => ABNORMAL.iter().map(|&t| matrix.count(t, t)).sum(),
    };
    MetricValue::Defined(correct as f64 / total as f64)
}

/// Fraction of Normal samples predicted Normal.
pub fn specificity(matrix: &ConfusionMatrix) -> MetricValue {
    let total = matrix.row_total(0);
    if total == 0 {
        return MetricValue::Undefined;
    }
    MetricValue::Defined(matrix.count(0, 0) as f64 / total as f64)
}

/// Arithmetic mean of sensitivity and specificity.
pub fn score(se: MetricValue, sp: MetricValue) -> MetricValue {
    match (se, sp) {
        (MetricValue::Defined(se), MetricValue::Defined(sp)) => {
            MetricValue::Defined((se + sp) / 2.0)
        }
        _ => MetricValue::Undefined,
    }
}

/// The full scoring bundle for one prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub sensitivity: MetricValue,
    pub specificity: MetricValue,
    pub score: MetricValue,
    /// Diagonal accuracy per class, undefined for absent classes.
    pub per_class_accuracy: [MetricValue; NUM_CLASSES],
    /// Exact 4-class accuracy.
    pub accuracy: MetricValue,
    pub n_total: u64,
}

impl EvalReport {
    pub fn from_confusion(matrix: ConfusionMatrix, protocol: Protocol) -> Self {
        let se = sensitivity(&matrix, protocol);
        let sp = specificity(&matrix);
        let per_class_accuracy = std::array::from_fn(|c| {
            let total = matrix.row_total(c);
            if total == 0 {
                MetricValue::Undefined
            } else {
                MetricValue::Defined(matrix.count(c, c) as f64 / total as f64)
            }
        });
        let n_total = matrix.n_total();
        let accuracy = if n_total == 0 {
            MetricValue::Undefined
        } else {
            MetricValue::Defined(matrix.trace() as f64 / n_total as f64)
        };
        Self {
            confusion: matrix,
            sensitivity: se,
            specificity: sp,
            score: score(se, sp),
            per_class_accuracy,
            accuracy,
            n_total,
        }
    }

    pub fn from_pairs(truth: &[usize], predicted: &[usize], protocol: Protocol) -> Result<Self> {
        Ok(Self::from_confusion(
            ConfusionMatrix::from_pairs(truth, predicted)?,
            protocol,
        ))
    }
}

const CLASS_NAMES: [&str; NUM_CLASSES] = ["normal", "crackle", "wheeze", "both"];

/// Renders the report CSV: a `metric,value` section followed by
/// `true,predicted,count` triplets. Identical reports yield identical bytes.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "n_total,{}", report.n_total);
    let _ = writeln!(out, "sensitivity,{}", report.sensitivity.render());
    let _ = writeln!(out, "specificity,{}", report.specificity.render());
    let _ = writeln!(out, "score,{}", report.score.render());
    let _ = writeln!(out, "accuracy_4class,{}", report.accuracy.render());
    for (c, name) in CLASS_NAMES.iter().enumerate() {
        let _ = writeln!(
            out,
            "accuracy_{name},{}",
            report.per_class_accuracy[c].render()
        );
    }
    out.push_str("true,predicted,count\n");
    for t in 0..NUM_CLASSES {
        for p in 0..NUM_CLASSES {
            let _ = writeln!(out, "{t},{p},{}", report.confusion.count(t, p));
        }
    }
    out
}

/// Renders the human-readable summary, including a bare
/// `Se,Sp,Score` line for quick comparison against published tables.
pub fn report_summary(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "samples: {}", report.n_total);
    let _ = writeln!(out, "4-class accuracy: {}", report.accuracy.render());
    let _ = writeln!(out, "Se,Sp,Score");
    let _ = writeln!(
        out,
        "{},{},{}",
        report.sensitivity.render(),
        report.specificity.render(),
        report.score.render()
    );
    let _ = writeln!(out, "confusion (rows true, cols predicted):");
    let _ = writeln!(out, "{:>9} {:>8} {:>8} {:>8} {:>8}", "", "normal", "crackle", "wheeze", "both");
    for (t, name) in CLASS_NAMES.iter().enumerate() {
        let _ = write!(out, "{name:>9}");
        for p in 0..NUM_CLASSES {
            let _ = write!(out, " {:>8}", report.confusion.count(t, p));
        }
        out.push('\n');
    }
    out
}

/// Writes the CSV and summary files.
pub fn emit_report(
    report: &EvalReport,
    csv_path: impl AsRef<std::path::Path>,
    summary_path: impl AsRef<std::path::Path>,
) -> std::io::Result<()> {
    std::fs::write(csv_path, report_csv(report))?;
    std::fs::write(summary_path, report_summary(report))
}

/// Parses the counts and rendered metric strings back out of a report CSV.
pub fn parse_report_csv(text: &str) -> Result<(ConfusionMatrix, Vec<(String, String)>)> {
    let mut metrics = Vec::new();
    let mut matrix = ConfusionMatrix::new();
    let mut section = 0;
    for (i, line) in text.lines().enumerate() {
        match (i, line) {
            (0, "metric,value") => continue,
            (0, other) => {
                return Err(EvalError::Report(format!(
                    "expected `metric,value` header, found {other:?}"
                )))
            }
            _ => {}
        }
        if line == "true,predicted,count" {
            section = 1;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if section == 0 {
            if fields.len() != 2 {
                return Err(EvalError::Report(format!("bad metric line {line:?}")));
            }
            metrics.push((fields[0].to_string(), fields[1].to_string()));
        } else {
            if fields.len() != 3 {
                return Err(EvalError::Report(format!("bad confusion line {line:?}")));
            }
            let parse = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| EvalError::Report(format!("bad number {s:?}")))
            };
            let (t, p, n) = (
                parse(fields[0])? as usize,
                parse(fields[1])? as usize,
                parse(fields[2])?,
            );
            if t >= NUM_CLASSES || p >= NUM_CLASSES {
                return Err(EvalError::Report(format!("class out of range in {line:?}")));
            }
            matrix.set(t, p, n);
        }
    }
    Ok((matrix, metrics))
}
