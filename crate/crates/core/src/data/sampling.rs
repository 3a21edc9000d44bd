//! Class-balanced batch sampling.

use rand::Rng;

use super::{ClassId, LabeledDataset};
use crate::error::{KssError, Result};

/// Sample indices grouped by class, built once per training set.
#[derive(Debug, Clone)]
pub struct ClassIndex {
    classes: Vec<ClassId>,
    members: Vec<Vec<usize>>,
}

impl ClassIndex {
    /// Groups `data` by the given classes; each must have at least one sample.
    pub fn new(data: &LabeledDataset, classes: &[ClassId]) -> Result<Self> {
        let mut members = vec![Vec::new(); classes.len()];
        for (i, label) in data.labels().iter().enumerate() {
            if let Some(k) = classes.iter().position(|c| c == label) {
                members[k].push(i);
            }
        }
        if let Some(k) = members.iter().position(Vec::is_empty) {
            return Err(KssError::Config(format!(
                "class {} has no training samples",
                classes[k]
            )));
        }
        Ok(ClassIndex {
            classes: classes.to_vec(),
            members,
        })
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn members(&self, class: ClassId) -> Option<&[usize]> {
        self.classes
            .iter()
            .position(|&c| c == class)
            .map(|k| self.members[k].as_slice())
    }
}

/// `per_class` draws from every class, laid out class by class in
/// [`ClassIndex::classes`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedBatch {
    pub indices: Vec<usize>,
    pub per_class: usize,
    pub classes: Vec<ClassId>,
}

impl BalancedBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Batch positions belonging to the `k`-th class.
    pub fn block(&self, k: usize) -> std::ops::Range<usize> {
        k * self.per_class..(k + 1) * self.per_class
    }
}

/// Draws `per_class` samples from every class of `index`. Classes with at
/// least `per_class` members are sampled without replacement, smaller ones with
/// replacement.
pub fn sample_balanced_batch<R: Rng>(index: &ClassIndex, per_class: usize, rng: &mut R) -> BalancedBatch {
    let mut indices = Vec::with_capacity(per_class * index.classes.len());
    for members in &index.members {
        if members.len() >= per_class {
            let picked = rand::seq::index::sample(rng, members.len(), per_class);
            indices.extend(picked.iter().map(|k| members[k]));
        } else {
            indices.extend((0..per_class).map(|_| members[rng.random_range(0..members.len())]));
        }
    }
    BalancedBatch {
        indices,
        per_class,
        classes: index.classes.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeMatrix, SplitTag};
    use crate::nn::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(counts: &[usize]) -> (LabeledDataset, Vec<ClassId>) {
        let classes: Vec<ClassId> = (0..counts.len() as u32).map(ClassId).collect();
        let rows: Vec<Vec<f64>> = (0..counts.len())
            .map(|k| (0..counts.len()).map(|j| (j == k) as u8 as f64).collect())
            .collect();
        let names = (0..counts.len()).map(|k| format!("a{k}")).collect();
        let m = AttributeMatrix::new(classes.clone(), names, Matrix::from_rows(&rows).unwrap()).unwrap();
        let mut labels = Vec::new();
        for (k, &n) in counts.iter().enumerate() {
            labels.extend(std::iter::repeat_n(classes[k], n));
        }
        let samples = Matrix::zeros(labels.len(), 1);
        (
            LabeledDataset::new(samples, labels, &m, SplitTag::Train).unwrap(),
            classes,
        )
    }

    #[test]
    fn batch_has_per_class_blocks() {
        let (ds, classes) = dataset(&[5, 3]);
        let idx = ClassIndex::new(&ds, &classes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_balanced_batch(&idx, 4, &mut rng);
        assert_eq!(b.len(), 8);
        for (k, &c) in classes.iter().enumerate() {
            for pos in b.block(k) {
                assert_eq!(ds.labels()[b.indices[pos]], c);
            }
        }
        // first class sampled without replacement
        let mut first: Vec<usize> = b.indices[b.block(0)].to_vec();
        first.sort();
        first.dedup();
        assert_eq!(first.len(), 4);
    }

    #[test]
    fn one_per_class() {
        let (ds, classes) = dataset(&[2, 2]);
        let idx = ClassIndex::new(&ds, &classes).unwrap();
        let b = sample_balanced_batch(&idx, 1, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn empty_class_is_an_error() {
        let (ds, mut classes) = dataset(&[2]);
        classes.push(ClassId(99));
        assert!(ClassIndex::new(&ds, &classes).is_err());
    }
}
