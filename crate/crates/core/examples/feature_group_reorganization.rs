//! Builds fake samples of an unseen class by swapping attribute feature
//! groups of its most similar seen class, then shows which groups came from
//! donors.

use kss_core::data::{synth_generate, SynthConfig};
use kss_core::generator::{
    differing_attributes, feature_group_reorganize, similar_category_search, DonorPool, ExtractorBank,
    GeneratorArch,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kss_core::Result<()> {
    let data = synth_generate(&SynthConfig::default(), 0)?;
    let m = &data.matrix;
    let seen = m.seen_ids();
    let bank = ExtractorBank::new(data.train.dim(), m.num_attributes(), &GeneratorArch::default(), 7)?;
    let pool = DonorPool::new(&data.train);
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    for target in m.unseen_ids() {
        let source_class = similar_category_search(m.row(target).unwrap(), &seen, m)?;
        let diff = differing_attributes(m.row(target).unwrap(), m.row(source_class).unwrap());
        let rows: Vec<usize> = data.train.indices_of(source_class).into_iter().take(4).collect();
        let source = bank.extract(&data.train.samples().select_rows(&rows))?;
        let (fake, plan) =
            feature_group_reorganize(target, source_class, &source, m, &pool, &bank, &data.train, &mut rng)?;
        println!(
            "unseen {target}: source class {source_class}, differing attributes {:?}",
            diff.iter().map(|k| k + 1).collect::<Vec<_>>()
        );
        for (i, donors) in plan.donors.iter().enumerate() {
            let labels: Vec<String> = donors.iter().map(|&d| data.train.labels()[d].to_string()).collect();
            let kept = (0..m.num_attributes())
                .filter(|k| fake.feature(i, *k) == source.feature(i, *k))
                .count();
            println!("  row {i}: donors from classes [{}], {kept} groups kept", labels.join(", "));
        }
    }
    Ok(())
}
