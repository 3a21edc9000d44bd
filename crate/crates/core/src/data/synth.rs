//! Synthetic datasets with linearly decodable attributes.
//!
//! Each class `c` gets the prototype `W · a_c` for a fixed random `d × M` map
//! `W`; samples are the prototype plus isotropic Gaussian noise. Attributes
//! are therefore recoverable by a linear probe, which makes the generator a
//! ground-truth oracle for the whole pipeline.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AttributeMatrix, ClassId, LabeledDataset, SplitSpec, SplitTag};
use crate::error::{KssError, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub attributes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub noise: f64,
    pub unseen: usize,
    /// Draw unseen rows inside the affine hull of the seen rows.
    pub compositional: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 6,
            attributes: 5,
            dim: 20,
            train_per_class: 200,
            test_per_class: 200,
            noise: 0.1,
            unseen: 2,
            compositional: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub matrix: AttributeMatrix,
    pub split: SplitSpec,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// `d × M` map from attribute vectors to class prototypes.
    pub projection: Matrix,
}

impl SyntheticData {
    /// Noise-free prototype of `class`.
    pub fn prototype(&self, class: ClassId) -> Vec<f64> {
        let a = self.matrix.row(class).expect("class in matrix");
        (0..self.projection.rows())
            .map(|r| self.projection.row(r).iter().zip(a).map(|(w, a)| w * a).sum())
            .collect()
    }
}

const MAX_MATRIX_TRIES: usize = 10_000;

pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SyntheticData> {
    let SynthConfig {
        classes: l,
        attributes: m,
        dim: d,
        ..
    } = *config;
    if l < 2 || m == 0 || d == 0 {
        return Err(KssError::Config("synthetic data needs L ≥ 2, M ≥ 1, d ≥ 1".into()));
    }
    if config.unseen >= l {
        return Err(KssError::Config("synthetic data needs at least one seen class".into()));
    }
    if m < usize::BITS as usize && l > 1usize << m {
        return Err(KssError::Config(format!("{l} distinct rows impossible with {m} attributes")));
    }
    if !(config.noise >= 0.0 && config.noise.is_finite()) {
        return Err(KssError::Config("noise scale must be finite and non-negative".into()));
    }
    if m > d {
        log::warn!("synthetic data has more attributes ({m}) than features ({d})");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_ids: Vec<ClassId> = (1..=l as u32).map(ClassId).collect();
    let (rows, unseen) = draw_attribute_rows(l, m, config.unseen, config.compositional, &mut rng)?;
    let names = (1..=m).map(|k| format!("att_{k}")).collect();
    let rows = Matrix::from_rows(&rows)?;
    let unseen_ids: Vec<ClassId> = unseen.iter().map(|&k| class_ids[k]).collect();
    let seen_ids: Vec<ClassId> = class_ids
        .iter()
        .copied()
        .filter(|c| !unseen_ids.contains(c))
        .collect();
    let split = SplitSpec::custom("synthetic", seen_ids.clone(), unseen_ids);
    let matrix = AttributeMatrix::new(class_ids.clone(), names, rows)?.with_split(&split)?;

    let projection_values = (0..d * m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let projection = Matrix::from_vec(d, m, projection_values)?;
    let prototypes = matrix.rows().matmul_t(&projection)?;

    let mut draw = |classes: &[ClassId], per_class: usize, split_tag: SplitTag| {
        let mut values = Vec::with_capacity(classes.len() * per_class * d);
        let mut labels = Vec::with_capacity(classes.len() * per_class);
        for &c in classes {
            let proto = prototypes.row(matrix.index_of(c).expect("class present"));
            for _ in 0..per_class {
                for &p in proto {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    values.push(p + config.noise * e);
                }
                labels.push(c);
            }
        }
        let samples = Matrix::from_vec(labels.len(), d, values)?;
        LabeledDataset::new(samples, labels, &matrix, split_tag)
    };
    let train = draw(&seen_ids, config.train_per_class, SplitTag::Train)?;
    let test = draw(&class_ids, config.test_per_class, SplitTag::Test)?;

    Ok(SyntheticData {
        matrix,
        split,
        train,
        test,
        projection,
    })
}

/// Random distinct binary rows and the positions of the unseen ones. Every
/// attribute takes both values among the seen rows.
///
/// With `compositional`, each unseen row is a binary completion
/// `a_i + a_j − a_k` of three seen rows at Hamming distance ≥ 2 from every
/// seen row. Such rows lie in the affine hull of the seen rows, so any model
/// that is additive over attributes and fits the seen prototypes predicts the
/// unseen prototypes exactly. Without it, four seen classes cannot pin down
/// five attribute effects and the unseen classes are not identifiable.
fn draw_attribute_rows<R: Rng>(
    l: usize,
    m: usize,
    q: usize,
    compositional: bool,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let p = l - q;
    let compositional = compositional && q > 0;
    if compositional && p < 3 {
        return Err(KssError::Config(
            "compositional unseen classes need at least 3 seen classes".into(),
        ));
    }
    let random_row = |rng: &mut R| -> Vec<f64> { (0..m).map(|_| rng.random_bool(0.5) as u8 as f64).collect() };
    for _ in 0..MAX_MATRIX_TRIES {
        let seen: Vec<Vec<f64>> = (0..p).map(|_| random_row(rng)).collect();
        let distinct = (0..p).all(|i| (0..i).all(|j| seen[i] != seen[j]));
        let covered = p < 2 || (0..m).all(|k| seen.iter().any(|r| r[k] == 0.0) && seen.iter().any(|r| r[k] == 1.0));
        if !distinct || !covered {
            continue;
        }
        let unseen: Vec<Vec<f64>> = if compositional {
            let candidates = completions(&seen);
            if candidates.len() < q {
                continue;
            }
            candidates.choose_multiple(rng, q).cloned().collect()
        } else {
            let extra: Vec<Vec<f64>> = (0..q).map(|_| random_row(rng)).collect();
            let all_distinct = extra
                .iter()
                .enumerate()
                .all(|(i, r)| !seen.contains(r) && !extra[..i].contains(r));
            if !all_distinct {
                continue;
            }
            extra
        };
        let mut rows: Vec<Vec<f64>> = seen.into_iter().chain(unseen).collect();
        let mut order: Vec<usize> = (0..l).collect();
        order.shuffle(rng);
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| std::mem::take(&mut rows[i])).collect();
        let mut unseen_pos: Vec<usize> = (0..l).filter(|&pos| order[pos] >= p).collect();
        unseen_pos.sort_unstable();
        return Ok((shuffled, unseen_pos));
    }
    Err(KssError::Config(format!(
        "could not draw a {l}×{m} attribute matrix with {q} unseen classes satisfying the constraints"
    )))
}

/// Distinct binary rows `a_i + a_j − a_k` (i < j, k ∉ {i, j}) that are at
/// Hamming distance ≥ 2 from every seen row, in lexicographic order.
fn completions(seen: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let hamming = |a: &[f64], b: &[f64]| a.iter().zip(b).filter(|(x, y)| x != y).count();
    let mut out = std::collections::BTreeSet::new();
    let p = seen.len();
    for i in 0..p {
        for j in i + 1..p {
            for k in (0..p).filter(|&k| k != i && k != j) {
                let v: Vec<f64> = (0..seen[i].len()).map(|t| seen[i][t] + seen[j][t] - seen[k][t]).collect();
                if v.iter().all(|&x| x == 0.0 || x == 1.0) && seen.iter().all(|r| hamming(r, &v) >= 2) {
                    out.insert(v.iter().map(|&x| x as u8).collect::<Vec<u8>>());
                }
            }
        }
    }
    out.into_iter().map(|v| v.into_iter().map(f64::from).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_samples_equal_prototypes() {
        let cfg = SynthConfig {
            noise: 0.0,
            train_per_class: 3,
            test_per_class: 2,
            ..Default::default()
        };
        let data = synth_generate(&cfg, 5).unwrap();
        for (row, &label) in data.train.samples().row_iter().zip(data.train.labels()) {
            assert_eq!(row, data.prototype(label).as_slice());
        }
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig::default();
        let a = synth_generate(&cfg, 11).unwrap();
        let b = synth_generate(&cfg, 11).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.matrix, b.matrix);
        let c = synth_generate(&cfg, 12).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn default_shapes() {
        let data = synth_generate(&SynthConfig::default(), 0).unwrap();
        assert_eq!(data.matrix.num_classes(), 6);
        assert_eq!(data.matrix.unseen_ids().len(), 2);
        assert_eq!(data.train.len(), 4 * 200);
        assert_eq!(data.test.len(), 6 * 200);
        assert_eq!(data.train.dim(), 20);
        for k in 0..5 {
            let col: Vec<f64> = data
                .matrix
                .seen_ids()
                .iter()
                .map(|&c| data.matrix.row(c).unwrap()[k])
                .collect();
            assert!(col.contains(&0.0) && col.contains(&1.0));
        }
    }

    #[test]
    fn unseen_rows_are_compositions_of_seen_rows() {
        for seed in 0..20 {
            let data = synth_generate(&SynthConfig::default(), seed).unwrap();
            let seen: Vec<&[f64]> = data.matrix.seen_ids().iter().map(|&c| data.matrix.row(c).unwrap()).collect();
            for u in data.matrix.unseen_ids() {
                let a = data.matrix.row(u).unwrap();
                let found = (0..seen.len()).any(|i| {
                    (0..seen.len()).any(|j| {
                        (0..seen.len()).any(|k| {
                            i != j && k != i && k != j && (0..a.len()).all(|t| seen[i][t] + seen[j][t] - seen[k][t] == a[t])
                        })
                    })
                });
                assert!(found, "seed {seed}: class {u}");
                assert!(seen.iter().all(|r| r.iter().zip(a).filter(|(x, y)| x != y).count() >= 2));
            }
        }
    }

    #[test]
    fn impossible_row_count_rejected() {
        let cfg = SynthConfig {
            classes: 5,
            attributes: 2,
            ..Default::default()
        };
        assert!(synth_generate(&cfg, 0).is_err());
    }
}
