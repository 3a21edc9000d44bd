//! Classifies samples of never-seen classes from attribute predictions
//! alone, using a Gaussian naive-Bayes attribute model trained on seen
//! classes.

use kss_core::data::{synth_generate, zscore_apply, zscore_fit, SynthConfig};
use kss_core::gate::dap_train;

fn main() -> kss_core::Result<()> {
    let data = synth_generate(&SynthConfig::default(), 0)?;
    let stats = zscore_fit(&data.train)?;
    let train = zscore_apply(&stats, &data.train)?;
    let test = zscore_apply(&stats, &data.test)?;
    let unseen = data.matrix.unseen_ids();
    let model = dap_train(train.samples(), train.attributes(), &unseen, &data.matrix.rows_of(&unseen))?;

    for &u in &unseen {
        let idx = test.indices_of(u);
        let pred = model.classify(&test.samples().select_rows(&idx))?;
        let hits = pred.iter().filter(|&&p| p == u).count();
        println!("unseen class {u}: {hits}/{} classified correctly", idx.len());
    }
    Ok(())
}
