//! Similar-category search and feature group reorganization (FGR).
//!
//! A fake sample of class `j` starts from the feature group of a real sample
//! of the most similar seen class `m`. Every attribute on which `a_j` and
//! `a_m` disagree has its feature block replaced by the same extractor's
//! output on a donor sample whose attribute label matches `a_j`.

use rand::Rng;

use super::{ExtractorBank, FeatureGroup};
use crate::data::{AttributeMatrix, ClassId, LabeledDataset};
use crate::error::{KssError, Result};
use crate::nn::Matrix;

/// Candidate class with the smallest L1 distance to `target`; ties go to the
/// smallest class id.
pub fn similar_category_search(
    target: &[f64],
    candidates: &[ClassId],
    matrix: &AttributeMatrix,
) -> Result<ClassId> {
    let mut best: Option<(f64, ClassId)> = None;
    for &c in candidates {
        let row = matrix
            .row(c)
            .ok_or_else(|| KssError::Config(format!("candidate class {c} not in matrix")))?;
        let dist = l1_distance(target, row);
        let better = match best {
            None => true,
            Some((d, id)) => dist < d || (dist == d && c < id),
        };
        if better {
            best = Some((dist, c));
        }
    }
    best.map(|(_, c)| c).ok_or(KssError::NoCandidates)
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Attributes on which the two rows differ.
pub fn differing_attributes(a: &[f64], b: &[f64]) -> Vec<usize> {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(k, _)| k)
        .collect()
}

/// Training samples indexed by attribute value: `pool(k, v)` lists every
/// sample whose attribute `k` equals `v`.
#[derive(Debug, Clone)]
pub struct DonorPool {
    by_attribute: Vec<[Vec<usize>; 2]>,
}

impl DonorPool {
    pub fn new(train: &LabeledDataset) -> Self {
        let z = train.attributes();
        let mut by_attribute = vec![[Vec::new(), Vec::new()]; z.cols()];
        for i in 0..z.rows() {
            for (k, slot) in by_attribute.iter_mut().enumerate() {
                slot[(z[(i, k)] == 1.0) as usize].push(i);
            }
        }
        DonorPool { by_attribute }
    }

    pub fn pool(&self, attribute: usize, value: f64) -> &[usize] {
        &self.by_attribute[attribute][(value == 1.0) as usize]
    }
}

/// Donor choices for reorganizing `sources.len()` rows toward one target
/// class. `donors[i][t]` replaces attribute `diff[t]` of row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReorganizationPlan {
    pub target: ClassId,
    pub source_class: ClassId,
    pub diff: Vec<usize>,
    pub donors: Vec<Vec<usize>>,
}

/// Finds the most similar class among `candidates` (which must not contain
/// `target`) and draws one donor per source row and differing attribute,
/// uniformly and independently.
pub fn plan_reorganization<R: Rng>(
    target: ClassId,
    candidates: &[ClassId],
    rows: usize,
    matrix: &AttributeMatrix,
    pool: &DonorPool,
    rng: &mut R,
) -> Result<ReorganizationPlan> {
    let target_row = matrix
        .row(target)
        .ok_or_else(|| KssError::Config(format!("class {target} not in matrix")))?;
    let candidates: Vec<ClassId> = candidates.iter().copied().filter(|&c| c != target).collect();
    let source_class = similar_category_search(target_row, &candidates, matrix)?;
    let source_row = matrix.row(source_class).expect("candidate checked");
    let diff = differing_attributes(target_row, source_row);
    plan_with_source(target, source_class, diff, rows, matrix, pool, rng)
}

pub(crate) fn plan_with_source<R: Rng>(
    target: ClassId,
    source_class: ClassId,
    diff: Vec<usize>,
    rows: usize,
    matrix: &AttributeMatrix,
    pool: &DonorPool,
    rng: &mut R,
) -> Result<ReorganizationPlan> {
    let target_row = matrix.row(target).expect("target checked");
    let pools: Vec<&[usize]> = diff
        .iter()
        .map(|&k| {
            let p = pool.pool(k, target_row[k]);
            if p.is_empty() {
                Err(KssError::DonorUnavailable {
                    class: target,
                    attribute: k,
                })
            } else {
                Ok(p)
            }
        })
        .collect::<Result<_>>()?;
    let donors = (0..rows)
        .map(|_| pools.iter().map(|p| p[rng.random_range(0..p.len())]).collect())
        .collect();
    Ok(ReorganizationPlan {
        target,
        source_class,
        diff,
        donors,
    })
}

/// Where a block of a reorganized feature group comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSource {
    /// Row of the source feature group.
    Source(usize),
    /// Row of the donor feature matrix of that attribute.
    Donor(usize),
}

/// Assembles `G̃` from source features and per-attribute donor features.
///
/// `donor_features[k]` holds `EXT_k` outputs of the donors listed in
/// `layout` (only read for `k ∈ diff`). `layout[i][k]` says which row fills
/// block `(i, k)`.
pub fn assemble(
    source: &FeatureGroup,
    donor_features: &[Option<Matrix>],
    layout: &[Vec<BlockSource>],
) -> Result<FeatureGroup> {
    let (_, m, dim) = source.shape();
    let mut out = FeatureGroup::zeros(layout.len(), m, dim);
    for (i, row_layout) in layout.iter().enumerate() {
        for (k, src) in row_layout.iter().enumerate() {
            let feature = match *src {
                BlockSource::Source(r) => source.feature(r, k),
                BlockSource::Donor(r) => donor_features[k]
                    .as_ref()
                    .ok_or_else(|| KssError::Config(format!("no donor features for attribute {k}")))?
                    .row(r),
            };
            out.block_mut(k).row_mut(i).copy_from_slice(feature);
        }
    }
    Ok(out)
}

/// Block layout and per-attribute donor sample lists for a set of plans
/// whose source rows are given explicitly.
#[derive(Debug, Clone)]
pub struct FgrLayout {
    pub rows: Vec<Vec<BlockSource>>,
    /// Training-sample indices to extract for each attribute.
    pub donor_samples: Vec<Vec<usize>>,
}

impl FgrLayout {
    /// `source_rows[p][i]` is the source-group row used for row `i` of plan `p`.
    pub fn build(plans: &[ReorganizationPlan], source_rows: &[Vec<usize>], m: usize) -> FgrLayout {
        let mut rows = Vec::new();
        let mut donor_samples = vec![Vec::new(); m];
        for (plan, sources) in plans.iter().zip(source_rows) {
            for (i, &src) in sources.iter().enumerate() {
                let mut layout = vec![BlockSource::Source(src); m];
                for (t, &k) in plan.diff.iter().enumerate() {
                    layout[k] = BlockSource::Donor(donor_samples[k].len());
                    donor_samples[k].push(plan.donors[i][t]);
                }
                rows.push(layout);
            }
        }
        FgrLayout { rows, donor_samples }
    }

    /// Runs `EXT_k` on the donor samples of every attribute that has any.
    pub fn extract_donors(&self, bank: &ExtractorBank, train: &LabeledDataset) -> Result<Vec<Option<Matrix>>> {
        self.donor_samples
            .iter()
            .enumerate()
            .map(|(k, idx)| {
                if idx.is_empty() {
                    Ok(None)
                } else {
                    bank.extractors[k]
                        .forward(&train.samples().select_rows(idx))
                        .map(Some)
                }
            })
            .collect()
    }
}

/// Reorganizes every row of `source` (features of class-`m` samples) toward
/// `target`, drawing donors from `pool` and extracting them with `bank`.
#[allow(clippy::too_many_arguments)]
pub fn feature_group_reorganize<R: Rng>(
    target: ClassId,
    source_class: ClassId,
    source: &FeatureGroup,
    matrix: &AttributeMatrix,
    pool: &DonorPool,
    bank: &ExtractorBank,
    train: &LabeledDataset,
    rng: &mut R,
) -> Result<(FeatureGroup, ReorganizationPlan)> {
    let target_row = matrix
        .row(target)
        .ok_or_else(|| KssError::Config(format!("class {target} not in matrix")))?;
    let source_row = matrix
        .row(source_class)
        .ok_or_else(|| KssError::Config(format!("class {source_class} not in matrix")))?;
    let diff = differing_attributes(target_row, source_row);
    let plan = plan_with_source(target, source_class, diff, source.len(), matrix, pool, rng)?;
    let layout = FgrLayout::build(
        std::slice::from_ref(&plan),
        &[(0..source.len()).collect()],
        source.num_attributes(),
    );
    let donors = layout.extract_donors(bank, train)?;
    Ok((assemble(source, &donors, &layout.rows)?, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitTag;
    use crate::generator::GeneratorArch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: &[(u32, &[f64])]) -> AttributeMatrix {
        let ids = rows.iter().map(|(c, _)| ClassId(*c)).collect();
        let m = rows[0].1.len();
        let names = (0..m).map(|k| format!("a{k}")).collect();
        let values: Vec<Vec<f64>> = rows.iter().map(|(_, r)| r.to_vec()).collect();
        AttributeMatrix::new(ids, names, Matrix::from_rows(&values).unwrap()).unwrap()
    }

    #[test]
    fn nearest_by_l1() {
        let a = matrix(&[(1, &[1.0, 0.0, 0.0]), (3, &[0.0, 1.0, 1.0])]);
        let c = similar_category_search(&[1.0, 1.0, 0.0], &[ClassId(1), ClassId(3)], &a).unwrap();
        assert_eq!(c, ClassId(1));
    }

    #[test]
    fn tie_goes_to_smallest_id() {
        let a = matrix(&[(5, &[0.0, 0.0, 0.0]), (2, &[1.0, 1.0, 0.0])]);
        let c = similar_category_search(&[1.0, 0.0, 0.0], &[ClassId(5), ClassId(2)], &a).unwrap();
        assert_eq!(c, ClassId(2));
    }

    #[test]
    fn empty_candidates() {
        let a = matrix(&[(1, &[1.0])]);
        assert!(matches!(
            similar_category_search(&[1.0], &[], &a),
            Err(KssError::NoCandidates)
        ));
    }

    fn toy_setup() -> (AttributeMatrix, LabeledDataset) {
        // class 3 is unseen and needs attribute 2 = 1, which no seen class has
        let a = matrix(&[
            (1, &[1.0, 0.0, 0.0]),
            (2, &[0.0, 1.0, 0.0]),
            (3, &[1.0, 1.0, 1.0]),
        ]);
        let split = crate::data::SplitSpec::custom("t", vec![ClassId(1), ClassId(2)], vec![ClassId(3)]);
        let a = a.with_split(&split).unwrap();
        let samples = Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4], [0.5, 0.6], [0.7, 0.8]]).unwrap();
        let labels = vec![ClassId(1), ClassId(1), ClassId(2), ClassId(2)];
        let ds = LabeledDataset::new(samples, labels, &a, SplitTag::Train).unwrap();
        (a, ds)
    }

    #[test]
    fn missing_donor_value_is_reported() {
        let (a, ds) = toy_setup();
        let pool = DonorPool::new(&ds);
        let err = plan_reorganization(ClassId(3), &[ClassId(1), ClassId(2)], 2, &a, &pool, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap_err();
        assert!(matches!(
            err,
            KssError::DonorUnavailable {
                class: ClassId(3),
                attribute: 2
            }
        ));
    }

    #[test]
    fn single_difference_swaps_one_block() {
        let (a, ds) = toy_setup();
        let arch = GeneratorArch {
            extractor_hidden: vec![4],
            feature_dim: 3,
            ..Default::default()
        };
        let bank = ExtractorBank::new(2, 3, &arch, 1).unwrap();
        let pool = DonorPool::new(&ds);
        let source_idx = [0usize, 1];
        let source = bank.extract(&ds.samples().select_rows(&source_idx)).unwrap();
        // class 1 -> class 2 differ in attributes 0 and 1
        let (out, plan) = feature_group_reorganize(
            ClassId(2),
            ClassId(1),
            &source,
            &a,
            &pool,
            &bank,
            &ds,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        assert_eq!(plan.diff, vec![0, 1]);
        for i in 0..2 {
            assert_eq!(out.feature(i, 2), source.feature(i, 2));
            for (t, &k) in plan.diff.iter().enumerate() {
                let h = plan.donors[i][t];
                assert_eq!(ds.attributes()[(h, k)], a.row(ClassId(2)).unwrap()[k]);
                let direct = bank.extractors[k]
                    .forward(&ds.samples().select_rows(&[h]))
                    .unwrap();
                assert_eq!(out.feature(i, k), direct.row(0));
            }
        }
    }

    #[test]
    fn no_difference_copies_input() {
        let (a, ds) = toy_setup();
        let bank = ExtractorBank::new(2, 3, &GeneratorArch { extractor_hidden: vec![4], feature_dim: 3, ..Default::default() }, 1).unwrap();
        let pool = DonorPool::new(&ds);
        let source = bank.extract(ds.samples()).unwrap();
        let (out, plan) = feature_group_reorganize(ClassId(1), ClassId(1), &source, &a, &pool, &bank, &ds, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(plan.diff.is_empty());
        assert_eq!(out, source);
    }
}
