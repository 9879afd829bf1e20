//! Pre-training followed by WGAN training, with an observer that watches the
//! critic weight clip and the generator gradient clip at every step.

use dtgan::autodiff::ParameterStore;
use dtgan::data::synthetic::{synthetic_split, SyntheticConfig};
use dtgan::data::{ExtractConfig, SplitConfig};
use dtgan::discriminator::{Discriminator, DiscriminatorConfig};
use dtgan::generator::{Generator, GeneratorConfig, OutputHead};
use dtgan::trainer::{adversarial_train, pretrain, LogRecord, TrainConfig, TrainObserver};

#[derive(Default)]
struct Watch {
    d_steps: usize,
    g_steps: usize,
    max_weight: f64,
    max_grad: f64,
}

impl TrainObserver for Watch {
    fn on_record(&mut self, r: &LogRecord) -> dtgan::Result<()> {
        println!("{r}");
        Ok(())
    }
    fn after_d_step(&mut self, critic: &ParameterStore) {
        self.d_steps += 1;
        self.max_weight = self.max_weight.max(critic.max_abs_value());
    }
    fn before_g_step(&mut self, gen: &ParameterStore) {
        self.g_steps += 1;
        self.max_grad = self.max_grad.max(gen.max_abs_grad());
    }
}

fn main() -> dtgan::Result<()> {
    let corpus = SyntheticConfig { groups: 4, ..SyntheticConfig::default() };
    let split_cfg = SplitConfig { extract: ExtractConfig { skip: 4, ..ExtractConfig::default() }, val_fraction: 0.2, seed: 0 };
    let split = synthetic_split(&corpus, &corpus, &split_cfg);
    let cfg = TrainConfig { pretrain_epochs: 2, adv_epochs: 2, batch_size: 8, ..TrainConfig::default() };

    let mut gen = Generator::new(GeneratorConfig { head: OutputHead::Gaussian, ..GeneratorConfig::default() }, 0)?;
    let mut critic = Discriminator::new(DiscriminatorConfig::default(), 1)?;
    let mut watch = Watch::default();
    println!("{}", LogRecord::HEADER);
    pretrain(&mut gen, &split.train, &split.val, &cfg, &mut watch)?;
    adversarial_train(&mut gen, &mut critic, &split.train, &cfg, &mut watch)?;

    println!(
        "{} critic steps, max |w| {:.4} (clip {:?}); {} generator steps, max |grad| {:.4} (clip {:?})",
        watch.d_steps, watch.max_weight, cfg.d_weight_clip, watch.g_steps, watch.max_grad, cfg.g_grad_clip
    );
    Ok(())
}
