//! Trains briefly on synthetic straight-line walkers and compares the model
//! with the constant-velocity baseline across the five robustness seeds.

use dtgan::data::synthetic::{synthetic_split, SyntheticConfig};
use dtgan::data::{ExtractConfig, SplitConfig};
use dtgan::eval::{constant_velocity_metrics, evaluate_scenes, MetricConfig};
use dtgan::generator::{Generator, GeneratorConfig, OutputHead};
use dtgan::trainer::{pretrain, TrainConfig};

fn main() -> dtgan::Result<()> {
    let corpus = SyntheticConfig { groups: 6, ..SyntheticConfig::default() };
    let test_corpus = SyntheticConfig { seed: 99, ..corpus.clone() };
    let split_cfg = SplitConfig { extract: ExtractConfig { skip: 4, ..ExtractConfig::default() }, val_fraction: 0.2, seed: 0 };
    let split = synthetic_split(&corpus, &test_corpus, &split_cfg);

    let cfg = TrainConfig { pretrain_epochs: 5, batch_size: 8, ..TrainConfig::default() };
    let mut gen = Generator::new(GeneratorConfig { head: OutputHead::Gaussian, ..GeneratorConfig::default() }, 0)?;
    pretrain(&mut gen, &split.train, &split.val, &cfg, &mut ())?;

    let metrics = MetricConfig { k_amdamv: 50, ..MetricConfig::default() };
    let report = evaluate_scenes(&gen, &[("synthetic".to_string(), split.test.clone())], &metrics)?;
    print!("{}", report.render());
    let cv = constant_velocity_metrics(&split.test)?;
    println!("constant velocity: ADE {:.3}  FDE {:.3}", cv.ade, cv.fde);
    Ok(())
}
