//! Runs the full pipeline on the synthetic config twice, with and without
//! the generator, and compares the reports.
//!
//! cargo run --release --example end_to_end -- [config]

use kss_core::pipeline::{cmd_e2e, PipelineConfig};

fn main() -> kss_core::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/synthetic.json").into());
    let base = PipelineConfig::load(&path)?;
    let out = std::env::temp_dir().join("kss-end-to-end");

    for skip in [false, true] {
        let mut cfg = base.clone();
        cfg.skip_generator = skip;
        cfg.output_dir = out.join(if skip { "skip-generator" } else { "full" });
        let report = cmd_e2e(&cfg)?;
        println!(
            "{:<15} acc_s {:.4}  acc_u {:.4}  har {:.4}  paths {:?}",
            if skip { "skip-generator" } else { "full" },
            report.acc_s,
            report.acc_u,
            report.har,
            report.path_counts
        );
    }
    println!("artifacts under {}", out.display());
    Ok(())
}
