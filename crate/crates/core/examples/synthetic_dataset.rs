//! Draws the default synthetic fault dataset and prints its attribute
//! matrix, split and z-score statistics.
//!
//! cargo run --example synthetic_dataset -- [seed]

use kss_core::data::{synth_generate, zscore_apply, zscore_fit, SynthConfig};

fn main() -> kss_core::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = synth_generate(&SynthConfig::default(), seed)?;
    let m = &data.matrix;

    println!("class  attributes  split");
    for &c in m.class_ids() {
        let row: Vec<String> = m.row(c).unwrap().iter().map(|v| format!("{v}")).collect();
        let tag = if m.is_seen(c) { "seen" } else { "unseen" };
        println!("{c:>5}  {}  {tag}", row.join(" "));
    }
    println!("train {} x {}, test {} x {}", data.train.len(), data.train.dim(), data.test.len(), data.test.dim());

    let stats = zscore_fit(&data.train)?;
    let train = zscore_apply(&stats, &data.train)?;
    let means = train.samples().column_means();
    let worst = means.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    println!("after z-scoring the largest |feature mean| is {worst:.2e}");
    Ok(())
}
