//! Trains a small Leaky-ReLU network with AdamW on two interleaved
//! half-moons and reports the loss curve and training accuracy.

use kss_core::nn::{softmax_cross_entropy, Activation, AdamW, AdamWConfig, DenseStack, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn moons(n: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vec<usize>) {
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let (x, y, label) = if i % 2 == 0 {
            (t.cos(), t.sin(), 0)
        } else {
            (1.0 - t.cos(), 0.5 - t.sin(), 1)
        };
        rows.push([x + 0.05 * rng.random::<f64>(), y + 0.05 * rng.random::<f64>()]);
        labels.push(label);
    }
    (Matrix::from_rows(&rows).unwrap(), labels)
}

fn main() -> kss_core::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, y) = moons(400, &mut rng);
    let mut net = DenseStack::new(&[2, 32, 32, 2], Activation::LeakyRelu, Activation::Identity, 1)?;
    let mut opt = AdamW::new(AdamWConfig { learning_rate: 1e-2, ..Default::default() }, &net);
    for epoch in 0..=300 {
        let trace = net.forward_trace(&x)?;
        let (loss, grad) = softmax_cross_entropy(trace.output(), &y)?;
        let (grads, _) = net.backward(&trace, &grad)?;
        opt.step(&mut net, &grads)?;
        if epoch % 50 == 0 {
            println!("epoch {epoch:>3}  loss {loss:.4}");
        }
    }
    let logits = net.forward(&x)?;
    let correct = (0..x.rows())
        .filter(|&i| (logits[(i, 1)] > logits[(i, 0)]) as usize == y[i])
        .count();
    println!("train accuracy {:.3}", correct as f64 / x.rows() as f64);
    Ok(())
}
