//! Pre-trains one generator per loss variant for a couple of epochs and
//! prints the task loss curve of each.

use dtgan::data::synthetic::{synthetic_split, SyntheticConfig};
use dtgan::data::{ExtractConfig, SplitConfig};
use dtgan::generator::{Generator, GeneratorConfig};
use dtgan::losses::{LossConfig, LossVariant};
use dtgan::trainer::{pretrain, Phase, TrainConfig};

fn main() -> dtgan::Result<()> {
    let corpus = SyntheticConfig { groups: 4, ..SyntheticConfig::default() };
    let split_cfg = SplitConfig { extract: ExtractConfig { skip: 4, ..ExtractConfig::default() }, val_fraction: 0.2, seed: 0 };
    let split = synthetic_split(&corpus, &corpus, &split_cfg);

    for variant in LossVariant::ALL {
        let cfg = TrainConfig {
            pretrain_epochs: 3,
            batch_size: 8,
            loss: LossConfig { variant, k: 4, ..LossConfig::default() },
            ..TrainConfig::default()
        };
        let gcfg = GeneratorConfig { head: variant.head(), ..GeneratorConfig::default() };
        let mut gen = Generator::new(gcfg, 0)?;
        let log = pretrain(&mut gen, &split.train, &split.val, &cfg, &mut ())?;
        let fmt = |v: Vec<f64>| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" -> ");
        println!("{variant:<8} train {}", fmt(log.epoch_means(Phase::Pretrain)));
        println!("{:<8} val   {}", "", fmt(log.validation(Phase::Pretrain)));
    }
    Ok(())
}
