//! Accuracy metrics, diagnosis reports and projection export.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{AttributeMatrix, ClassId};
use crate::error::{KssError, Result};
use crate::gate::{AttributeProjector, DiagnosisPath};
use crate::nn::Matrix;

/// Fraction of correct predictions per class present in `truth`.
pub fn per_class_accuracy(truth: &[ClassId], predicted: &[ClassId]) -> Result<BTreeMap<ClassId, f64>> {
    if truth.len() != predicted.len() {
        return Err(KssError::shape("predicted labels", truth.len(), predicted.len()));
    }
    let mut counts: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (t, p) in truth.iter().zip(predicted) {
        let e = counts.entry(*t).or_default();
        e.1 += 1;
        if t == p {
            e.0 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(c, (ok, n))| (c, ok as f64 / n as f64))
        .collect())
}

/// Mean per-class accuracy over `classes` that have test samples; 0 when
/// none do.
pub fn macro_accuracy(per_class: &BTreeMap<ClassId, f64>, classes: &[ClassId]) -> f64 {
    let vals: Vec<f64> = classes.iter().filter_map(|c| per_class.get(c).copied()).collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// `2ab / (a + b)`, 0 when either input is 0.
pub fn harmonic_mean(acc_s: f64, acc_u: f64) -> f64 {
    if acc_s == 0.0 || acc_u == 0.0 {
        0.0
    } else {
        2.0 * acc_s * acc_u / (acc_s + acc_u)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub classes: Vec<ClassId>,
    /// `counts[true][predicted]` in `classes` order.
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn trace(&self) -> usize {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub acc_per_class: BTreeMap<ClassId, f64>,
    pub acc_s: f64,
    pub acc_u: f64,
    pub har: f64,
    pub acc_s_percent: f64,
    pub acc_u_percent: f64,
    pub har_percent: f64,
    pub confusion: Confusion,
    pub path_counts: BTreeMap<DiagnosisPath, usize>,
    pub config_hash: String,
}

pub fn build_report(
    truth: &[ClassId],
    predicted: &[ClassId],
    matrix: &AttributeMatrix,
    paths: &[DiagnosisPath],
    config_hash: &str,
) -> Result<DiagnosisReport> {
    if paths.len() != truth.len() {
        return Err(KssError::shape("path tags", truth.len(), paths.len()));
    }
    let acc_per_class = per_class_accuracy(truth, predicted)?;
    let acc_s = macro_accuracy(&acc_per_class, &matrix.seen_ids());
    let acc_u = macro_accuracy(&acc_per_class, &matrix.unseen_ids());
    let har = harmonic_mean(acc_s, acc_u);
    let classes = matrix.class_ids().to_vec();
    let mut counts = vec![vec![0; classes.len()]; classes.len()];
    for (t, p) in truth.iter().zip(predicted) {
        let ti = matrix.index_of(*t).ok_or_else(|| KssError::Config(format!("label {t} not in matrix")))?;
        let pi = matrix.index_of(*p).ok_or_else(|| KssError::Config(format!("prediction {p} not in matrix")))?;
        counts[ti][pi] += 1;
    }
    let mut path_counts: BTreeMap<DiagnosisPath, usize> = DiagnosisPath::ALL.iter().map(|&p| (p, 0)).collect();
    for p in paths {
        *path_counts.get_mut(p).expect("all paths present") += 1;
    }
    Ok(DiagnosisReport {
        acc_per_class,
        acc_s,
        acc_u,
        har,
        acc_s_percent: 100.0 * acc_s,
        acc_u_percent: 100.0 * acc_u,
        har_percent: 100.0 * har,
        confusion: Confusion { classes, counts },
        path_counts,
        config_hash: config_hash.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl DiagnosisReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Flat `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let mut row = |k: &str, v: String| s.push_str(&format!("{k},{v}\n"));
        row("acc_s", format!("{:?}", self.acc_s));
        row("acc_u", format!("{:?}", self.acc_u));
        row("har", format!("{:?}", self.har));
        for (c, a) in &self.acc_per_class {
            row(&format!("acc_class_{c}"), format!("{a:?}"));
        }
        for (p, n) in &self.path_counts {
            row(&format!("path_{p}"), n.to_string());
        }
        row("config_hash", self.config_hash.clone());
        s
    }
}

pub fn export_report(report: &DiagnosisReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => report.to_csv(),
    };
    std::fs::write(path, text).map_err(|e| KssError::io(path, e))
}

/// Writes `z_1..z_M,label` rows of AP projections.
pub fn export_projections(
    projector: &AttributeProjector,
    samples: &Matrix,
    labels: &[ClassId],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if labels.len() != samples.rows() {
        return Err(KssError::shape("projection labels", samples.rows(), labels.len()));
    }
    let z = projector.project(samples)?;
    let mut out = String::new();
    let header: Vec<String> = (1..=z.cols()).map(|k| format!("z_{k}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",label\n");
    for (row, label) in z.row_iter().zip(labels) {
        for v in row {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{label}\n"));
    }
    let mut f = File::create(path).map_err(|e| KssError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| KssError::io(path, e))
}
