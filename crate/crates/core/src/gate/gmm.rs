//! Full-covariance Gaussian mixtures fitted by expectation-maximization.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KssError, Result};
use crate::nn::{log_sum_exp, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub components: usize,
    /// Stop once the mean per-point log-likelihood improves by less.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Added to every covariance diagonal in each M-step.
    pub covariance_reg: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            components: 3,
            tolerance: 1e-4,
            max_iterations: 100,
            covariance_reg: 1e-6,
        }
    }
}

/// A component whose responsibility mass falls below this is re-seeded.
const COLLAPSE_MASS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// `M × M` covariances, regularized.
    pub covariances: Vec<Matrix>,
    /// Mean per-point log-likelihood after each E-step.
    pub trace: Vec<f64>,
    /// Trace positions right after a collapsed component was re-seeded.
    pub reseeds: Vec<usize>,
}

struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    /// Lower Cholesky factor of the covariance.
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl Gmm {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    fn factorize(&self) -> Result<Vec<Component>> {
        let m = self.dim();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.covariances)
            .map(|((&w, mu), cov)| {
                let c = DMatrix::from_row_slice(m, m, cov.as_slice());
                let chol = c.cholesky().ok_or(KssError::SingularCovariance)?.unpack();
                let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                Ok(Component {
                    log_weight: w.ln(),
                    mean: DVector::from_column_slice(mu),
                    chol,
                    log_norm: -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
                })
            })
            .collect()
    }

    /// Per-point, per-component `log α_r + log N(z | μ_r, Σ_r)`.
    fn weighted_log_densities(&self, z: &Matrix) -> Result<Vec<Vec<f64>>> {
        if z.cols() != self.dim() {
            return Err(KssError::shape("gmm input", self.dim(), z.cols()));
        }
        let comps = self.factorize()?;
        Ok(z.row_iter()
            .map(|row| {
                comps
                    .iter()
                    .map(|c| {
                        let diff = DVector::from_column_slice(row) - &c.mean;
                        let y = c
                            .chol
                            .solve_lower_triangular(&diff)
                            .expect("cholesky factor has a positive diagonal");
                        c.log_weight + c.log_norm - 0.5 * y.norm_squared()
                    })
                    .collect()
            })
            .collect())
    }

    /// Negative log-likelihood of every row of `z`.
    pub fn nll(&self, z: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .weighted_log_densities(z)?
            .iter()
            .map(|l| -log_sum_exp(l))
            .collect())
    }
}

pub fn gmm_nll(model: &Gmm, z: &Matrix) -> Result<Vec<f64>> {
    model.nll(z)
}

fn covariance(points: &Matrix, weights: &[f64], mean: &[f64], reg: f64) -> Matrix {
    let m = points.cols();
    let total: f64 = weights.iter().sum();
    let mut cov = Matrix::zeros(m, m);
    for (row, &w) in points.row_iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for a in 0..m {
            let da = row[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += w * da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..m {
        for b in 0..=a {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
        cov[(a, a)] += reg;
    }
    cov
}

fn weighted_mean(points: &Matrix, weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; points.cols()];
    for (row, &w) in points.row_iter().zip(weights) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += w * v);
    }
    mean.iter_mut().for_each(|m| *m /= total);
    mean
}

/// Fits an `R`-component mixture. Means start at distinct random points,
/// covariances at the global covariance and weights uniform.
pub fn gmm_fit_em(points: &Matrix, config: &EmConfig, seed: u64) -> Result<Gmm> {
    let (n, m) = points.shape();
    let r = config.components;
    if r == 0 {
        return Err(KssError::Config("GMM needs at least one component".into()));
    }
    if n < r {
        return Err(KssError::TooFewPoints {
            points: n,
            components: r,
        });
    }
    if m == 0 {
        return Err(KssError::Config("GMM points have zero dimensions".into()));
    }
    if !points.is_finite() {
        return Err(KssError::NonFinite("GMM input points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ones = vec![1.0; n];
    let global_mean = weighted_mean(points, &ones);
    let global_cov = covariance(points, &ones, &global_mean, config.covariance_reg);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut starts: Vec<usize> = Vec::with_capacity(r);
    for &i in &order {
        if starts.iter().all(|&s| points.row(s) != points.row(i)) {
            starts.push(i);
            if starts.len() == r {
                break;
            }
        }
    }
    if starts.len() < r {
        log::warn!("only {} distinct points for {r} GMM components; repeating starts", starts.len());
        let distinct = starts.len();
        for c in distinct..r {
            starts.push(starts[c % distinct]);
        }
    }
    let mut gmm = Gmm {
        weights: vec![1.0 / r as f64; r],
        means: starts.iter().map(|&i| points.row(i).to_vec()).collect(),
        covariances: vec![global_cov.clone(); r],
        trace: Vec::new(),
        reseeds: Vec::new(),
    };

    let mut previous: Option<Gmm> = None;
    for _ in 0..config.max_iterations {
        // E-step
        let logs = gmm.weighted_log_densities(points)?;
        let mut resp = vec![vec![0.0; n]; r];
        let mut ll = 0.0;
        for (i, l) in logs.iter().enumerate() {
            let lse = log_sum_exp(l);
            ll += lse;
            for c in 0..r {
                resp[c][i] = (l[c] - lse).exp();
            }
        }
        let ll = ll / n as f64;
        let just_reseeded = gmm.reseeds.last() == Some(&gmm.trace.len());
        if let Some(&last) = gmm.trace.last() {
            if !just_reseeded && ll < last {
                // regularization can cost a sliver of likelihood near convergence
                gmm = previous.take().expect("a previous fit exists");
                break;
            }
            if !just_reseeded && ll - last < config.tolerance {
                gmm.trace.push(ll);
                break;
            }
        }
        gmm.trace.push(ll);

        // M-step
        let before = gmm.clone();
        let mut reseeded = false;
        for c in 0..r {
            let mass: f64 = resp[c].iter().sum();
            if mass < COLLAPSE_MASS * n as f64 {
                let pick = rng.random_range(0..n);
                log::warn!("GMM component {c} collapsed; re-seeding at point {pick}");
                gmm.means[c] = points.row(pick).to_vec();
                gmm.covariances[c] = global_cov.clone();
                gmm.weights[c] = 1.0 / r as f64;
                reseeded = true;
                continue;
            }
            gmm.weights[c] = mass / n as f64;
            gmm.means[c] = weighted_mean(points, &resp[c]);
            gmm.covariances[c] = covariance(points, &resp[c], &gmm.means[c], config.covariance_reg);
        }
        let total: f64 = gmm.weights.iter().sum();
        gmm.weights.iter_mut().for_each(|w| *w /= total);
        if reseeded {
            gmm.reseeds.push(gmm.trace.len());
        }
        previous = Some(before);
    }
    // keep the trace of the returned parameters
    Ok(gmm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn single_component_closed_form() {
        let pts = Matrix::from_rows(&[[0.0, 1.0], [2.0, 1.0], [1.0, 4.0], [3.0, 2.0]]).unwrap();
        let g = gmm_fit_em(&pts, &EmConfig { components: 1, ..Default::default() }, 0).unwrap();
        assert_eq!(g.weights, vec![1.0]);
        assert!((g.means[0][0] - 1.5).abs() < 1e-12 && (g.means[0][1] - 2.0).abs() < 1e-12);
        // population covariance plus 1e-6 I
        let expect = [[1.25 + 1e-6, 0.0], [0.0, 1.5 + 1e-6]];
        for a in 0..2 {
            for b in 0..2 {
                assert!((g.covariances[0][(a, b)] - expect[a][b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standard_normal_nll_at_origin() {
        let m = 4;
        let g = Gmm {
            weights: vec![1.0],
            means: vec![vec![0.0; m]],
            covariances: vec![Matrix::identity(m)],
            trace: vec![],
            reseeds: vec![],
        };
        let nll = g.nll(&Matrix::zeros(1, m)).unwrap();
        assert!((nll[0] - m as f64 / 2.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        let twin = Gmm {
            weights: vec![0.5, 0.5],
            means: vec![vec![0.0; m]; 2],
            covariances: vec![Matrix::identity(m); 2],
            ..g.clone()
        };
        let z = Matrix::from_rows(&[[0.3, -1.0, 2.0, 0.1]]).unwrap();
        assert!((twin.nll(&z).unwrap()[0] - g.nll(&z).unwrap()[0]).abs() < 1e-12);
    }

    #[test]
    fn trace_non_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rows = Vec::new();
        for c in 0..3 {
            for _ in 0..100 {
                let e: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
                rows.push([c as f64 * 3.0 + e[0], e[1] * 0.5]);
            }
        }
        let pts = Matrix::from_rows(&rows).unwrap();
        let g = gmm_fit_em(&pts, &EmConfig::default(), 4).unwrap();
        assert!(g.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let pts = Matrix::zeros(2, 3);
        assert!(matches!(
            gmm_fit_em(&pts, &EmConfig::default(), 0),
            Err(KssError::TooFewPoints { points: 2, components: 3 })
        ));
    }
}
