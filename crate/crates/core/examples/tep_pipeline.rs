//! Inspects the shipped Tennessee-Eastman attribute matrix and the five
//! standard splits. With `data/tep/{train,test}.csv` present (headerless
//! `f_1..f_52,label` rows) it also runs group A end to end.

use std::path::Path;

use kss_core::data::{AttributeMatrix, SplitSpec};
use kss_core::generator::{differing_attributes, similar_category_search};
use kss_core::pipeline::{cmd_e2e, PipelineConfig};

fn main() -> kss_core::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let matrix = AttributeMatrix::load_csv(root.join("data/tep_attributes.csv"))?;
    println!("{} classes x {} attributes", matrix.num_classes(), matrix.num_attributes());

    for group in ["A", "B", "C", "D", "E"] {
        let split = SplitSpec::tep_group(group)?;
        let m = matrix.clone().with_split(&split)?;
        let seen = m.seen_ids();
        let mut line = format!("group {group}:");
        for u in m.unseen_ids() {
            let s = similar_category_search(m.row(u).unwrap(), &seen, &m)?;
            let d = differing_attributes(m.row(u).unwrap(), m.row(s).unwrap()).len();
            line.push_str(&format!("  {u} <- {s} ({d} swaps)"));
        }
        println!("{line}");
    }

    let config = root.join("configs/tep_group_a.json");
    if root.join("data/tep/train.csv").exists() {
        let report = cmd_e2e(&PipelineConfig::load(config)?)?;
        println!("group A: acc_s {:.2}%  acc_u {:.2}%  har {:.2}%", report.acc_s_percent, report.acc_u_percent, report.har_percent);
    } else {
        println!("no TEP samples under data/tep; skipping the group A run");
    }
    Ok(())
}
