//! Seen/unseen gate: coarse attribute matching, per-class mixtures with
//! control limits, and the unseen-class fallback.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dap::{dap_train, DapModel};
use super::gmm::{gmm_fit_em, EmConfig, Gmm};
use super::projector::{train_ap, AttributeProjector, ProjectorConfig, ProjectorStage};
use crate::data::{AttributeMatrix, ClassId, LabeledDataset};
use crate::error::{KssError, Result};
use crate::generator::sub_seed;
use crate::nn::Matrix;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub em: EmConfig,
    pub projector: ProjectorConfig,
    /// Fake samples per seen class; defaults to that class's training count.
    pub fake_seen_per_class: Option<usize>,
    /// Fake unseen samples in total; defaults to `N^s · q / p`.
    pub fake_unseen_total: Option<usize>,
}

impl GateConfig {
    /// Fake count for seen class with `n_j` training samples.
    pub fn seen_count(&self, n_j: usize) -> usize {
        self.fake_seen_per_class.unwrap_or(n_j)
    }

    /// Fake counts per unseen class: `N^s · q / p` split evenly, remainder
    /// to the first classes.
    pub fn unseen_counts(&self, n_seen_samples: usize, p: usize, unseen: &[ClassId]) -> Vec<usize> {
        let q = unseen.len();
        if q == 0 || p == 0 {
            return vec![0; q];
        }
        let total = self.fake_unseen_total.unwrap_or(n_seen_samples * q / p);
        (0..q).map(|u| total / q + usize::from(u < total % q)).collect()
    }
}

/// `l = min(max(I_j), min(I_u))`, or `max(I_j)` when there are no unseen
/// anchors.
pub fn control_limit(i_j: &[f64], i_u: &[f64]) -> Result<f64> {
    let max_j = i_j
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(KssError::EmptyBatch("control_limit: no modeling points"))?;
    Ok(match i_u.iter().copied().reduce(f64::min) {
        Some(min_u) => max_j.min(min_u),
        None => max_j,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeenClassModel {
    pub class: ClassId,
    pub gmm: Gmm,
    pub limit: f64,
    pub modeling_points: usize,
}

/// Which stage of the decision produced a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosisPath {
    Coarse,
    FineSeen,
    FineUnseen,
}

impl DiagnosisPath {
    pub const ALL: [DiagnosisPath; 3] = [DiagnosisPath::Coarse, DiagnosisPath::FineSeen, DiagnosisPath::FineUnseen];

    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosisPath::Coarse => "coarse",
            DiagnosisPath::FineSeen => "fine-seen",
            DiagnosisPath::FineUnseen => "fine-unseen",
        }
    }
}

impl fmt::Display for DiagnosisPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub class: ClassId,
    pub path: DiagnosisPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateModel {
    pub ap1: AttributeProjector,
    pub ap2: AttributeProjector,
    pub seen: Vec<SeenClassModel>,
    /// `p × M` rows of the seen classes, in `seen` order.
    pub seen_rows: Matrix,
    /// `q × M` unseen anchors used for the limits.
    pub unseen_rows: Matrix,
    /// Absent when no unseen classes are configured.
    pub dap: Option<DapModel>,
}

/// Generated pools feeding the gate. Empty pools reproduce the gate without
/// a generator.
#[derive(Debug, Clone, Default)]
pub struct GatePools {
    /// Fake unseen samples and their attribute labels.
    pub fake_unseen: Option<(Matrix, Matrix)>,
    pub fake_seen: BTreeMap<ClassId, Matrix>,
}

/// Exact match of the binarized AP1 output against the seen rows.
pub fn coarse_classify(binary: &[f64], seen_rows: &Matrix, seen: &[ClassId]) -> Option<ClassId> {
    seen_rows
        .row_iter()
        .position(|row| row == binary)
        .map(|i| seen[i])
}

/// Index of the row closest to `z` in L1; ties go to the smallest class id.
pub fn nearest_seen(z: &[f64], seen_rows: &Matrix, seen: &[ClassId]) -> ClassId {
    let mut best: Option<(f64, ClassId)> = None;
    for (row, &c) in seen_rows.row_iter().zip(seen) {
        let d: f64 = row.iter().zip(z).map(|(a, b)| (a - b).abs()).sum();
        if best.is_none_or(|(bd, bc)| d < bd || (d == bd && c < bc)) {
            best = Some((d, c));
        }
    }
    best.expect("at least one seen class").1
}

impl GateModel {
    pub fn seen_ids(&self) -> Vec<ClassId> {
        self.seen.iter().map(|s| s.class).collect()
    }

    /// `n × p` negative log-likelihoods of AP2 projections under every seen
    /// class mixture.
    pub fn confidences(&self, z: &Matrix) -> Result<Matrix> {
        let p = self.seen.len();
        let mut c = Matrix::zeros(z.rows(), p);
        for (j, s) in self.seen.iter().enumerate() {
            for (i, v) in s.gmm.nll(z)?.into_iter().enumerate() {
                c[(i, j)] = v;
            }
        }
        Ok(c)
    }

    /// Fine stage on already-deferred samples.
    pub fn fine_classify(&self, x: &Matrix) -> Result<Vec<Diagnosis>> {
        let z = self.ap2.project(x)?;
        let c = self.confidences(&z)?;
        let seen = self.seen_ids();
        let mut out: Vec<Option<Diagnosis>> = vec![None; x.rows()];
        let mut unseen_rows = Vec::new();
        for i in 0..x.rows() {
            let inside = self.seen.iter().enumerate().any(|(j, s)| c[(i, j)] <= s.limit);
            if inside || self.dap.is_none() {
                out[i] = Some(Diagnosis {
                    class: nearest_seen(z.row(i), &self.seen_rows, &seen),
                    path: DiagnosisPath::FineSeen,
                });
            } else {
                unseen_rows.push(i);
            }
        }
        if let Some(dap) = &self.dap {
            if !unseen_rows.is_empty() {
                let labels = dap.classify(&x.select_rows(&unseen_rows))?;
                for (&i, class) in unseen_rows.iter().zip(labels) {
                    out[i] = Some(Diagnosis {
                        class,
                        path: DiagnosisPath::FineUnseen,
                    });
                }
            }
        }
        Ok(out.into_iter().map(|d| d.expect("every row labeled")).collect())
    }

    /// Coarse stage first, fine stage for deferred samples.
    pub fn diagnose(&self, x: &Matrix) -> Result<Vec<Diagnosis>> {
        if x.rows() == 0 {
            return Ok(Vec::new());
        }
        let seen = self.seen_ids();
        let binary = self.ap1.binarize(x)?;
        let mut out: Vec<Option<Diagnosis>> = binary
            .row_iter()
            .map(|b| {
                coarse_classify(b, &self.seen_rows, &seen).map(|class| Diagnosis {
                    class,
                    path: DiagnosisPath::Coarse,
                })
            })
            .collect();
        let deferred: Vec<usize> = (0..x.rows()).filter(|&i| out[i].is_none()).collect();
        if !deferred.is_empty() {
            let fine = self.fine_classify(&x.select_rows(&deferred))?;
            for (&i, d) in deferred.iter().zip(fine) {
                out[i] = Some(d);
            }
        }
        Ok(out.into_iter().map(|d| d.expect("every row labeled")).collect())
    }
}

/// Trains AP1, AP2, the seen-class mixtures with their limits and the DAP
/// fallback. `train` must be normalized the same way as the pools.
pub fn train_gate<R: Rng>(
    train: &LabeledDataset,
    matrix: &AttributeMatrix,
    pools: &GatePools,
    config: &GateConfig,
    seed: u64,
    rng: &mut R,
) -> Result<GateModel> {
    let seen = matrix.seen_ids();
    let unseen = matrix.unseen_ids();
    let x_s = train.samples();
    let z_s = train.attributes();

    let ap1 = train_ap(ProjectorStage::Ap1, x_s, z_s, &config.projector, sub_seed(seed, 1), rng)?;
    let (x_pool, z_pool) = match &pools.fake_unseen {
        Some((xu, zu)) if xu.rows() > 0 => (Matrix::vstack(&[x_s, xu])?, Matrix::vstack(&[z_s, zu])?),
        _ => (x_s.clone(), z_s.clone()),
    };
    let ap2 = if pools.fake_unseen.as_ref().is_some_and(|(xu, _)| xu.rows() > 0) {
        let mut ap = train_ap(ProjectorStage::Ap2, &x_pool, &z_pool, &config.projector, sub_seed(seed, 2), rng)?;
        ap.stage = ProjectorStage::Ap2;
        ap
    } else {
        log::info!("no fake unseen samples; AP2 reuses AP1");
        AttributeProjector {
            stage: ProjectorStage::Ap2,
            nets: ap1.nets.clone(),
        }
    };

    let unseen_rows = matrix.rows_of(&unseen);
    if unseen.is_empty() {
        log::warn!("no unseen classes: control limits fall back to max(I_j)");
    }
    let mut models = Vec::with_capacity(seen.len());
    for &j in &seen {
        let idx = train.indices_of(j);
        let real = x_s.select_rows(&idx);
        let points = match pools.fake_seen.get(&j) {
            Some(fake) if fake.rows() > 0 => Matrix::vstack(&[&real, fake])?,
            _ => real,
        };
        let z = ap2.project(&points)?;
        let gmm = gmm_fit_em(&z, &config.em, sub_seed(seed, 100 + j.0 as u64))?;
        let i_j = gmm.nll(&z)?;
        let i_u = if unseen.is_empty() { Vec::new() } else { gmm.nll(&unseen_rows)? };
        let limit = control_limit(&i_j, &i_u)?;
        log::debug!("class {j}: limit {limit:.4} over {} points", z.rows());
        models.push(SeenClassModel {
            class: j,
            gmm,
            limit,
            modeling_points: z.rows(),
        });
    }

    let dap = if unseen.is_empty() {
        None
    } else {
        Some(dap_train(&x_pool, &z_pool, &unseen, &unseen_rows)?)
    };
    Ok(GateModel {
        ap1,
        ap2,
        seen: models,
        seen_rows: matrix.rows_of(&seen),
        unseen_rows,
        dap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_limit_cases() {
        assert_eq!(control_limit(&[1.0, 2.0, 3.0], &[2.5, 4.0]).unwrap(), 2.5);
        assert_eq!(control_limit(&[1.0, 2.0, 3.0], &[5.0]).unwrap(), 3.0);
        assert_eq!(control_limit(&[1.0, 2.0, 3.0], &[]).unwrap(), 3.0);
        assert!(control_limit(&[], &[1.0]).is_err());
    }

    #[test]
    fn coarse_matching() {
        let rows = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let ids = [ClassId(3), ClassId(8)];
        assert_eq!(coarse_classify(&[0.0, 1.0], &rows, &ids), Some(ClassId(8)));
        assert_eq!(coarse_classify(&[1.0, 1.0], &rows, &ids), None);
    }

    #[test]
    fn nearest_seen_tie_rule() {
        let rows = Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let ids = [ClassId(2), ClassId(5), ClassId(9)];
        assert_eq!(nearest_seen(&[1.0, 0.0, 0.0], &rows, &ids), ClassId(9));
        // distance 1 to both class 2 and class 5
        assert_eq!(nearest_seen(&[0.5, 0.5, 0.0], &rows, &ids), ClassId(2));
    }

    #[test]
    fn unseen_split_counts() {
        let cfg = GateConfig::default();
        let unseen = [ClassId(1), ClassId(7), ClassId(15)];
        assert_eq!(cfg.unseen_counts(5760, 12, &unseen), vec![480, 480, 480]);
        assert_eq!(cfg.seen_count(480), 480);
    }
}
