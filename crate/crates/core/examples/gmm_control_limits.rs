//! Fits a Gaussian mixture to the knowledge-space projections of one seen
//! class and derives its control limit against unseen attribute anchors.

use kss_core::gate::{control_limit, gmm_fit_em, EmConfig};
use kss_core::nn::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> kss_core::Result<()> {
    // Projections of a class whose attribute row is (1, 0, 1), with two
    // sub-modes as produced by real and generated samples.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.04).unwrap();
    let mut rows = Vec::new();
    for i in 0..600 {
        let centre = if i % 3 == 0 { [0.9, 0.15, 0.85] } else { [0.97, 0.03, 0.95] };
        rows.push(centre.map(|c: f64| c + noise.sample(&mut rng)));
    }
    let z = Matrix::from_rows(&rows)?;
    let gmm = gmm_fit_em(&z, &EmConfig::default(), 11)?;
    println!("EM converged in {} iterations", gmm.trace.len());
    for (w, mu) in gmm.weights.iter().zip(&gmm.means) {
        println!("  weight {w:.3}  mean {:?}", mu.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    }

    let i_j = gmm.nll(&z)?;
    let anchors = Matrix::from_rows(&[[1.0, 1.0, 1.0], [0.0, 0.0, 1.0]])?;
    let i_u = gmm.nll(&anchors)?;
    let limit = control_limit(&i_j, &i_u)?;
    let max_j = i_j.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("max NLL of the class {max_j:.2}, anchor NLLs {i_u:.2?}, limit {limit:.2}");

    let probe = Matrix::from_rows(&[[0.95, 0.05, 0.9], [0.9, 0.9, 0.9]])?;
    for (row, nll) in probe.row_iter().zip(gmm.nll(&probe)?) {
        let verdict = if nll <= limit { "inside" } else { "outside" };
        println!("  {row:?}: NLL {nll:.2} -> {verdict}");
    }
    Ok(())
}
