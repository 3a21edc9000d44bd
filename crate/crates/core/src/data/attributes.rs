//! Class-level attribute knowledge.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SplitSpec;
use crate::error::{KssError, Result};
use crate::nn::Matrix;

/// Fault class identifier as written in dataset and attribute files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `L × M` binary fault/attribute matrix together with the seen/unseen
/// partition of its classes.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix {
    class_ids: Vec<ClassId>,
    names: Vec<String>,
    rows: Matrix,
    seen: Vec<bool>,
}

impl AttributeMatrix {
    /// Validates the rows. Every class starts out as seen; apply a split with
    /// [`AttributeMatrix::with_split`].
    pub fn new(class_ids: Vec<ClassId>, names: Vec<String>, rows: Matrix) -> Result<Self> {
        if class_ids.len() != rows.rows() {
            return Err(KssError::AttributeMatrix(format!(
                "{} class ids for {} rows",
                class_ids.len(),
                rows.rows()
            )));
        }
        if names.len() != rows.cols() {
            return Err(KssError::AttributeMatrix(format!(
                "{} attribute names for {} columns",
                names.len(),
                rows.cols()
            )));
        }
        if class_ids.is_empty() || rows.cols() == 0 {
            return Err(KssError::AttributeMatrix("matrix is empty".into()));
        }
        let mut ids = HashSet::new();
        for &c in &class_ids {
            if !ids.insert(c) {
                return Err(KssError::AttributeMatrix(format!("class {c} listed twice")));
            }
        }
        for (i, row) in rows.row_iter().enumerate() {
            if let Some(v) = row.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(KssError::AttributeMatrix(format!(
                    "class {} has non-binary entry {v}",
                    class_ids[i]
                )));
            }
        }
        for i in 0..rows.rows() {
            for j in 0..i {
                if rows.row(i) == rows.row(j) {
                    return Err(KssError::AttributeMatrix(format!(
                        "classes {} and {} have identical attribute rows",
                        class_ids[j], class_ids[i]
                    )));
                }
            }
        }
        let seen = vec![true; class_ids.len()];
        Ok(AttributeMatrix {
            class_ids,
            names,
            rows,
            seen,
        })
    }

    /// Reads `class,att_1,...,att_M` CSV.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(e, path))?;
        let header = reader.headers()?.clone();
        if header.len() < 2 {
            return Err(KssError::Parse {
                path: display,
                row: 1,
                message: "header needs a class column and at least one attribute".into(),
            });
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let m = names.len();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        let mut seen_rows: Vec<Vec<u8>> = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row_no = i + 2;
            let parse_err = |message: String| KssError::Parse {
                path: display.clone(),
                row: row_no,
                message,
            };
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            if record.len() != m + 1 {
                return Err(parse_err(format!(
                    "expected {} fields, found {}",
                    m + 1,
                    record.len()
                )));
            }
            let id: u32 = record[0]
                .parse()
                .map_err(|_| parse_err(format!("class id {:?} is not an integer", &record[0])))?;
            let mut row = Vec::with_capacity(m);
            for cell in record.iter().skip(1) {
                match cell {
                    "0" => row.push(0u8),
                    "1" => row.push(1u8),
                    other => return Err(parse_err(format!("non-binary entry {other:?}"))),
                }
            }
            if let Some(j) = seen_rows.iter().position(|r| *r == row) {
                return Err(parse_err(format!(
                    "duplicate attribute row (same as class {})",
                    ids[j]
                )));
            }
            if ids.contains(&ClassId(id)) {
                return Err(parse_err(format!("class {id} listed twice")));
            }
            values.extend(row.iter().map(|&v| v as f64));
            seen_rows.push(row);
            ids.push(ClassId(id));
        }
        let rows = Matrix::from_vec(ids.len(), m, values)?;
        AttributeMatrix::new(ids, names, rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(e, path))?;
        let mut header = vec!["class".to_owned()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.class_ids.iter().enumerate() {
            let mut rec = vec![id.to_string()];
            rec.extend(self.rows.row(i).iter().map(|v| format!("{}", *v as u8)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| KssError::io(path, e))?;
        Ok(())
    }

    /// Marks the split's seen classes as seen and its unseen classes as
    /// unseen. The split must cover every class exactly once.
    pub fn with_split(mut self, split: &SplitSpec) -> Result<Self> {
        let (seen, _) = split.resolve(&self.class_ids)?;
        for (i, c) in self.class_ids.iter().enumerate() {
            self.seen[i] = seen.contains(c);
        }
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.rows.cols()
    }

    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn index_of(&self, class: ClassId) -> Option<usize> {
        self.class_ids.iter().position(|&c| c == class)
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.index_of(class).is_some()
    }

    pub fn row(&self, class: ClassId) -> Option<&[f64]> {
        self.index_of(class).map(|i| self.rows.row(i))
    }

    pub fn is_seen(&self, class: ClassId) -> bool {
        self.index_of(class).is_some_and(|i| self.seen[i])
    }

    pub fn seen_ids(&self) -> Vec<ClassId> {
        self.filter_ids(true)
    }

    pub fn unseen_ids(&self) -> Vec<ClassId> {
        self.filter_ids(false)
    }

    fn filter_ids(&self, seen: bool) -> Vec<ClassId> {
        self.class_ids
            .iter()
            .zip(&self.seen)
            .filter(|(_, &s)| s == seen)
            .map(|(&c, _)| c)
            .collect()
    }

    /// Attribute rows of the given classes, in order.
    pub fn rows_of(&self, classes: &[ClassId]) -> Matrix {
        let idx: Vec<usize> = classes
            .iter()
            .map(|&c| self.index_of(c).expect("class present in matrix"))
            .collect();
        self.rows.select_rows(&idx)
    }

    /// SHA-256 over class ids and attribute values (names excluded).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_classes() as u64).to_le_bytes());
        h.update((self.num_attributes() as u64).to_le_bytes());
        for (i, c) in self.class_ids.iter().enumerate() {
            h.update(c.0.to_le_bytes());
            let bits: Vec<u8> = self.rows.row(i).iter().map(|&v| v as u8).collect();
            h.update(&bits);
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn csv_error(e: csv::Error, path: &Path) -> KssError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => KssError::io(path, io),
        kind => KssError::Parse {
            path: path.display().to_string(),
            row: 0,
            message: format!("{kind:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_class_identity_matrix() {
        let f = write_tmp("class,att_1,att_2\n1,1,0\n2,0,1\n");
        let a = AttributeMatrix::load_csv(f.path()).unwrap();
        assert_eq!(a.num_classes(), 2);
        assert_eq!(a.num_attributes(), 2);
        assert_eq!(a.row(ClassId(2)).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn duplicate_rows_rejected_with_row_number() {
        let f = write_tmp("class,a,b\n1,1,0\n2,0,1\n3,1,0\n");
        let err = AttributeMatrix::load_csv(f.path()).unwrap_err();
        match err {
            KssError::Parse { row, message, .. } => {
                assert_eq!(row, 4);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_binary_and_ragged_rows_rejected() {
        let f = write_tmp("class,a,b\n1,1,2\n");
        assert!(matches!(
            AttributeMatrix::load_csv(f.path()),
            Err(KssError::Parse { row: 2, .. })
        ));
        let f = write_tmp("class,a,b\n1,1,0\n2,1\n");
        assert!(matches!(
            AttributeMatrix::load_csv(f.path()),
            Err(KssError::Parse { row: 3, .. })
        ));
    }

    #[test]
    fn hash_ignores_split_but_not_values() {
        let f = write_tmp("class,a,b\n1,1,0\n2,0,1\n3,1,1\n");
        let a = AttributeMatrix::load_csv(f.path()).unwrap();
        let split = SplitSpec::custom("x", vec![ClassId(1), ClassId(2)], vec![ClassId(3)]);
        let b = a.clone().with_split(&split).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_eq!(b.unseen_ids(), vec![ClassId(3)]);
        let g = write_tmp("class,a,b\n1,1,0\n2,0,1\n3,0,0\n");
        let c = AttributeMatrix::load_csv(g.path()).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn csv_round_trip() {
        let f = write_tmp("class,x,y,z\n4,1,0,1\n9,0,0,1\n");
        let a = AttributeMatrix::load_csv(f.path()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        a.write_csv(out.path()).unwrap();
        assert_eq!(AttributeMatrix::load_csv(out.path()).unwrap(), a);
    }
}
