//! Pixel-wise recall, precision, F1, IoU and accuracy.

use std::fmt::Write as _;

use thiserror::Error;

use crate::mask_io::{ClassId, SegMask};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("no classes to evaluate")]
    EmptyClassSet,
    #[error("merge {0:?} has no classes")]
    EmptyMerge(String),
}

/// One-vs-rest pixel counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Present in neither mask.
    pub fn absent(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    fn ratio(&self, num: u64, den: u64) -> f64 {
        match (den, self.absent()) {
            (0, true) => 1.0,
            (0, false) => 0.0,
            _ => num as f64 / den as f64,
        }
    }

    pub fn scores(&self) -> Scores {
        let recall = self.ratio(self.tp, self.tp + self.fn_);
        let precision = self.ratio(self.tp, self.tp + self.fp);
        let f1 = if self.absent() {
            1.0
        } else if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Scores {
            recall,
            precision,
            f1,
            iou: self.ratio(self.tp, self.tp + self.fp + self.fn_),
            accuracy: self.ratio(self.tp + self.tn, self.total()),
        }
    }
}

/// Full truth-by-prediction pixel matrix; every one-vs-rest count, including
/// those of merged classes, is derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<ClassId>,
    /// `matrix[truth][pred]`.
    matrix: [[u64; ClassId::COUNT]; ClassId::COUNT],
}

impl ConfusionMatrix {
    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn cell(&self, truth: ClassId, pred: ClassId) -> u64 {
        self.matrix[truth.index()][pred.index()]
    }

    pub fn total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    /// Counts for a set of classes treated as one.
    pub fn counts_of(&self, group: &[ClassId]) -> Counts {
        let inside = |c: usize| group.iter().any(|g| g.index() == c);
        let mut k = Counts::default();
        for t in 0..ClassId::COUNT {
            for p in 0..ClassId::COUNT {
                let n = self.matrix[t][p];
                match (inside(t), inside(p)) {
                    (true, true) => k.tp += n,
                    (false, true) => k.fp += n,
                    (true, false) => k.fn_ += n,
                    (false, false) => k.tn += n,
                }
            }
        }
        k
    }

    pub fn counts(&self, class: ClassId) -> Counts {
        self.counts_of(&[class])
    }

    /// Element-wise sum, for accumulating over a dataset.
    pub fn add(&mut self, other: &ConfusionMatrix) {
        for t in 0..ClassId::COUNT {
            for p in 0..ClassId::COUNT {
                self.matrix[t][p] += other.matrix[t][p];
            }
        }
        for c in &other.classes {
            if !self.classes.contains(c) {
                self.classes.push(*c);
            }
        }
        self.classes.sort();
    }
}

pub fn confusion(pred: &SegMask, truth: &SegMask, classes: &[ClassId]) -> Result<ConfusionMatrix, MetricsError> {
    if (pred.width(), pred.height()) != (truth.width(), truth.height()) {
        return Err(MetricsError::DimensionMismatch(
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height(),
        ));
    }
    if classes.is_empty() {
        return Err(MetricsError::EmptyClassSet);
    }
    let mut matrix = [[0u64; ClassId::COUNT]; ClassId::COUNT];
    for (p, t) in pred.data().iter().zip(truth.data()) {
        matrix[t.index()][p.index()] += 1;
    }
    let mut classes = classes.to_vec();
    classes.sort();
    classes.dedup();
    Ok(ConfusionMatrix { classes, matrix })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub iou: f64,
    pub accuracy: f64,
}

/// Several classes scored as one row, e.g. doors and windows as openings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMerge {
    pub name: String,
    pub classes: Vec<ClassId>,
}

impl ClassMerge {
    pub fn new(name: &str, classes: &[ClassId]) -> Self {
        ClassMerge {
            name: name.to_string(),
            classes: classes.to_vec(),
        }
    }

    pub fn openings() -> Self {
        ClassMerge::new("Openings", &[ClassId::DOOR, ClassId::SLIDING_DOOR, ClassId::WINDOW])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub counts: Counts,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
    /// Unweighted mean over every row except background.
    pub mean: Scores,
}

/// Scores each evaluated class, with merged classes replacing their members.
pub fn report(cm: &ConfusionMatrix, merges: &[ClassMerge]) -> Result<MetricReport, MetricsError> {
    let mut rows = Vec::new();
    let merged: Vec<ClassId> = merges.iter().flat_map(|m| m.classes.iter().copied()).collect();
    for &c in cm.classes() {
        if merged.contains(&c) {
            continue;
        }
        let counts = cm.counts(c);
        rows.push((c == ClassId::BACKGROUND, ReportRow {
            name: c.name().to_string(),
            counts,
            scores: counts.scores(),
        }));
    }
    for m in merges {
        if m.classes.is_empty() {
            return Err(MetricsError::EmptyMerge(m.name.clone()));
        }
        let counts = cm.counts_of(&m.classes);
        rows.push((false, ReportRow {
            name: m.name.clone(),
            counts,
            scores: counts.scores(),
        }));
    }
    let fg: Vec<&Scores> = rows.iter().filter(|(bg, _)| !bg).map(|(_, r)| &r.scores).collect();
    let n = fg.len().max(1) as f64;
    let avg = |f: fn(&Scores) -> f64| if fg.is_empty() { 1.0 } else { fg.iter().map(|s| f(s)).sum::<f64>() / n };
    let mean = Scores {
        recall: avg(|s| s.recall),
        precision: avg(|s| s.precision),
        f1: avg(|s| s.f1),
        iou: avg(|s| s.iou),
        accuracy: avg(|s| s.accuracy),
    };
    Ok(MetricReport {
        rows: rows.into_iter().map(|(_, r)| r).collect(),
        mean,
    })
}

impl MetricReport {
    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Aligned plain-text table, one row per class plus a mean row.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(4);
        let mut out = format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}\n",
            "Class", "Recall", "Precision", "F1", "IoU", "Accuracy"
        );
        let mut line = |name: &str, s: &Scores| {
            writeln!(
                out,
                "{name:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}",
                s.recall, s.precision, s.f1, s.iou, s.accuracy
            )
            .unwrap();
        };
        for r in &self.rows {
            line(&r.name, &r.scores);
        }
        line("Mean", &self.mean);
        out
    }

    /// `row.metric=value` lines, row names lower-cased with underscores.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut emit = |name: &str, s: &Scores| {
            let key = name.to_lowercase().replace(' ', "_");
            for (m, v) in [
                ("recall", s.recall),
                ("precision", s.precision),
                ("f1", s.f1),
                ("iou", s.iou),
                ("accuracy", s.accuracy),
            ] {
                writeln!(out, "{key}.{m}={v:.6}").unwrap();
            }
        };
        for r in &self.rows {
            emit(&r.name, &r.scores);
        }
        emit("mean", &self.mean);
        out
    }
}
