//! Labeled sample sets and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::attributes::csv_error;
use super::{AttributeMatrix, ClassId};
use crate::error::{KssError, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

/// Samples, class labels and the per-sample attribute labels merged from the
/// attribute matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Matrix,
    labels: Vec<ClassId>,
    attributes: Matrix,
    split: SplitTag,
}

impl LabeledDataset {
    pub fn new(
        samples: Matrix,
        labels: Vec<ClassId>,
        matrix: &AttributeMatrix,
        split: SplitTag,
    ) -> Result<Self> {
        if samples.rows() != labels.len() {
            return Err(KssError::shape("dataset labels", samples.rows(), labels.len()));
        }
        let m = matrix.num_attributes();
        let mut attributes = Matrix::zeros(labels.len(), m);
        for (i, &label) in labels.iter().enumerate() {
            let row = matrix
                .row(label)
                .ok_or_else(|| KssError::Config(format!("label {label} not in attribute matrix")))?;
            attributes.row_mut(i).copy_from_slice(row);
        }
        let ds = LabeledDataset {
            samples,
            labels,
            attributes,
            split,
        };
        if split == SplitTag::Train {
            if let Some(c) = ds.labels.iter().find(|&&c| !matrix.is_seen(c)) {
                return Err(KssError::Config(format!(
                    "training split contains unseen class {c}"
                )));
            }
        }
        Ok(ds)
    }

    /// Reads headerless `f_1,...,f_d,label` rows.
    pub fn load_csv(path: impl AsRef<Path>, matrix: &AttributeMatrix, split: SplitTag) -> Result<Self> {
        let (samples, labels) = read_rows(path.as_ref(), matrix)?;
        LabeledDataset::new(samples, labels, matrix, split)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| csv_error(e, path))?;
        for (row, label) in self.samples.row_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| KssError::io(path, e))?;
        Ok(())
    }

    /// Keeps only samples whose label is in `classes`.
    pub fn filter_classes(&self, classes: &[ClassId], split: SplitTag, matrix: &AttributeMatrix) -> Result<Self> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        let samples = self.samples.select_rows(&idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset::new(samples, labels, matrix, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn attributes(&self) -> &Matrix {
        &self.attributes
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    /// Distinct labels in first-appearance order.
    pub fn classes(&self) -> Vec<ClassId> {
        let mut out: Vec<ClassId> = Vec::new();
        for &c in &self.labels {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    pub fn indices_of(&self, class: ClassId) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn count_of(&self, class: ClassId) -> usize {
        self.labels.iter().filter(|&&c| c == class).count()
    }

    pub(crate) fn samples_mut(&mut self) -> &mut Matrix {
        &mut self.samples
    }
}

fn read_rows(path: &Path, matrix: &AttributeMatrix) -> Result<(Matrix, Vec<ClassId>)> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(e, path))?;
    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let parse_err = |message: String| KssError::Parse {
            path: display.clone(),
            row: row_no,
            message,
        };
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        if record.len() < 2 {
            return Err(parse_err("need at least one feature and a label".into()));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(format!("expected {w} fields, found {}", record.len())))
            }
            _ => {}
        }
        let last = record.len() - 1;
        for cell in record.iter().take(last) {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(format!("non-numeric cell {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite cell {cell:?}")));
            }
            values.push(v);
        }
        let label = parse_label(&record[last]).ok_or_else(|| parse_err(format!("label {:?} is not an integer", &record[last])))?;
        if !matrix.contains(label) {
            return Err(parse_err(format!("label {label} is not in the attribute matrix")));
        }
        labels.push(label);
    }
    let d = width.map_or(0, |w| w - 1);
    Ok((Matrix::from_vec(labels.len(), d, values)?, labels))
}

/// Accepts `3` and `3.0` style labels.
fn parse_label(cell: &str) -> Option<ClassId> {
    if let Ok(v) = cell.parse::<u32>() {
        return Some(ClassId(v));
    }
    let f: f64 = cell.parse().ok()?;
    (f >= 0.0 && f.fract() == 0.0 && f <= u32::MAX as f64).then_some(ClassId(f as u32))
}

/// Optional denoising applied before normalization. The pipeline ships only
/// the pass-through implementation.
pub trait Denoiser {
    fn denoise(&self, samples: &mut Matrix);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PassThrough;

impl Denoiser for PassThrough {
    fn denoise(&self, _samples: &mut Matrix) {}
}

impl LabeledDataset {
    pub fn denoise(&mut self, denoiser: &dyn Denoiser) {
        denoiser.denoise(&mut self.samples);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn matrix() -> AttributeMatrix {
        AttributeMatrix::new(
            vec![ClassId(1), ClassId(2)],
            vec!["a".into(), "b".into()],
            Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(),
        )
        .unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn single_row_file() {
        let f = write_tmp("0.1,0.2,0.3,2\n");
        let ds = LabeledDataset::load_csv(f.path(), &matrix(), SplitTag::Test).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.attributes().row(0), &[0.0, 1.0]);
    }

    #[test]
    fn unknown_label_reports_row() {
        let f = write_tmp("0.1,1\n0.2,7\n");
        let err = LabeledDataset::load_csv(f.path(), &matrix(), SplitTag::Test).unwrap_err();
        assert!(matches!(err, KssError::Parse { row: 2, .. }), "{err}");
    }

    #[test]
    fn non_numeric_and_ragged_rejected() {
        let f = write_tmp("0.1,abc,1\n");
        assert!(matches!(
            LabeledDataset::load_csv(f.path(), &matrix(), SplitTag::Test),
            Err(KssError::Parse { row: 1, .. })
        ));
        let f = write_tmp("0.1,0.2,1\n0.1,1\n");
        assert!(matches!(
            LabeledDataset::load_csv(f.path(), &matrix(), SplitTag::Test),
            Err(KssError::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn float_labels_accepted() {
        let f = write_tmp("0.5,1.0\n");
        let ds = LabeledDataset::load_csv(f.path(), &matrix(), SplitTag::Test).unwrap();
        assert_eq!(ds.labels(), &[ClassId(1)]);
    }

    #[test]
    fn train_split_rejects_unseen_labels() {
        let split = super::super::SplitSpec::custom("t", vec![ClassId(1)], vec![ClassId(2)]);
        let m = matrix().with_split(&split).unwrap();
        let f = write_tmp("0.5,2\n");
        assert!(LabeledDataset::load_csv(f.path(), &m, SplitTag::Train).is_err());
        assert!(LabeledDataset::load_csv(f.path(), &m, SplitTag::Test).is_ok());
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let f = write_tmp("");
        let ds = LabeledDataset::load_csv(f.path(), &matrix(), SplitTag::Test).unwrap();
        assert!(ds.is_empty());
    }
}
