//! Two-phase training: task-loss pre-training of the generator, then
//! alternating critic and generator updates under WGAN weight clipping.
//!
//! All randomness (batch order, edge weights, reparameterized draws) comes
//! from ChaCha streams derived from [`TrainConfig::seed`], so a run is
//! reproducible bit for bit.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Optimizer, ParameterStore, Tape, Var};
use crate::data::TrajectoryBatch;
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::{sample_rel, Generator, HeadOutput};
use crate::graph::build_graphs_with;
use crate::losses::{gaussian_nll, total_generator_loss, uniform_nll, variety_mse, wgan_losses, LossConfig, LossVariant};

const PRETRAIN_STREAM: u64 = 1;
const ADVERSARIAL_STREAM: u64 = 2;
const VALIDATION_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub pretrain_lr: f64,
    pub adv_lr: f64,
    pub pretrain_epochs: usize,
    pub adv_epochs: usize,
    pub d_steps_per_g: usize,
    pub g_grad_clip: (f64, f64),
    pub d_weight_clip: (f64, f64),
    pub seed: u64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            pretrain_lr: 1e-3,
            adv_lr: 1e-5,
            pretrain_epochs: 50,
            adv_epochs: 100,
            d_steps_per_g: 1,
            g_grad_clip: (-1.0, 1.0),
            d_weight_clip: (-0.1, 0.1),
            seed: 0,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        for (name, lr) in [("pretrain_lr", self.pretrain_lr), ("adv_lr", self.adv_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("{name} must be a finite non-negative number, got {lr}"));
            }
        }
        if self.d_steps_per_g == 0 {
            return bad("d_steps_per_g must be at least 1".into());
        }
        for (name, (lo, hi)) in [("g_grad_clip", self.g_grad_clip), ("d_weight_clip", self.d_weight_clip)] {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return bad(format!("{name} needs lo <= hi, got ({lo}, {hi})"));
            }
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Adversarial,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Adversarial => "adversarial",
        })
    }
}

/// What a log line summarizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchTag {
    Index(usize),
    /// Mean over an epoch's training batches.
    EpochMean,
    /// Mean over the validation windows.
    Validation,
}

impl fmt::Display for BatchTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchTag::Index(i) => write!(f, "{i}"),
            BatchTag::EpochMean => f.write_str("mean"),
            BatchTag::Validation => f.write_str("val"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub batch: BatchTag,
    pub d_loss: Option<f64>,
    pub g_loss: Option<f64>,
    pub task_loss: f64,
}

impl LogRecord {
    pub const HEADER: &'static str = "epoch,phase,batch,d_loss,g_loss,task_loss";
}

impl fmt::Display for LogRecord {
    /// One CSV line; absent losses are left empty.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        write!(
            f,
            "{},{},{},{},{},{}",
            self.epoch,
            self.phase,
            self.batch,
            opt(self.d_loss),
            opt(self.g_loss),
            self.task_loss
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn epoch_means(&self, phase: Phase) -> Vec<f64> {
        self.select(phase, BatchTag::EpochMean)
    }

    pub fn validation(&self, phase: Phase) -> Vec<f64> {
        self.select(phase, BatchTag::Validation)
    }

    fn select(&self, phase: Phase, tag: BatchTag) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.phase == phase && r.batch == tag)
            .map(|r| r.task_loss)
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.records.iter().all(|r| {
            r.task_loss.is_finite()
                && r.d_loss.is_none_or(f64::is_finite)
                && r.g_loss.is_none_or(f64::is_finite)
        })
    }
}

/// Hooks into a training run. Every method defaults to a no-op.
pub trait TrainObserver {
    fn on_record(&mut self, _record: &LogRecord) -> Result<()> {
        Ok(())
    }

    /// Called after every critic update, once its weights are clipped.
    fn after_d_step(&mut self, _critic: &ParameterStore) {}

    /// Called with clipped gradients, right before the generator update.
    fn before_g_step(&mut self, _generator: &ParameterStore) {}
}

impl TrainObserver for () {}

/// Writes every record as a log line.
pub struct LogWriter<W: std::io::Write>(pub W);

impl<W: std::io::Write> TrainObserver for LogWriter<W> {
    fn on_record(&mut self, record: &LogRecord) -> Result<()> {
        writeln!(self.0, "{record}")
            .and_then(|_| self.0.flush())
            .map_err(|e| Error::Io {
                path: "training log".into(),
                source: e,
            })
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn usable(windows: &[TrajectoryBatch]) -> Vec<&TrajectoryBatch> {
    windows.iter().filter(|w| w.num_peds() >= 2).collect()
}

/// One forward pass of the generator on a freshly drawn graph, with the
/// task loss and a differentiable future sample.
struct Rollout {
    task: Var,
    fake_rel: Var,
}

fn rollout(
    gen: &Generator,
    params: &ParameterStore,
    tape: &mut Tape,
    window: &TrajectoryBatch,
    loss: &LossConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout> {
    let (tp, n) = (window.pred_len, window.num_peds());
    let truth = tape.constant(&[tp, n, 2], window.future_rel())?;
    let pass = |tape: &mut Tape, rng: &mut ChaCha8Rng| -> Result<HeadOutput> {
        let graph = build_graphs_with(window, rng)?;
        Ok(crate::generator::forward(&gen.config, params, tape, &graph)?.head)
    };
    let head = pass(tape, rng)?;
    let task = match (loss.variant, head) {
        (LossVariant::DtganG, HeadOutput::Gaussian { mu, sigma, rho }) => gaussian_nll(tape, mu, sigma, rho, truth)?,
        (LossVariant::DtganU, HeadOutput::Uniform { mu, radius }) => {
            let disp = tape.sub(truth, mu)?;
            uniform_nll(tape, radius, disp, loss.r_hat_epsilon)?
        }
        (LossVariant::DtganM, HeadOutput::Point { rel }) => {
            let mut samples = vec![rel];
            for _ in 1..loss.k {
                match pass(tape, rng)? {
                    HeadOutput::Point { rel } => samples.push(rel),
                    _ => unreachable!("head is fixed by the config"),
                }
            }
            variety_mse(tape, &samples, truth)?
        }
        (LossVariant::Dtgan, HeadOutput::Point { rel }) => variety_mse(tape, &[rel], truth)?,
        (variant, _) => {
            return Err(Error::Config(format!(
                "variant {variant} needs a {} head, generator has {}",
                variant.head(),
                gen.config.head
            )))
        }
    };
    let fake_rel = sample_rel(tape, head, rng)?;
    Ok(Rollout { task, fake_rel })
}

fn finite(v: f64, what: &'static str, epoch: usize, batch: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss { what, epoch, batch })
    }
}

/// Mean task loss over `windows`, with edge weights drawn from a stream
/// that restarts on every call so successive epochs are comparable.
pub fn validation_loss(gen: &Generator, windows: &[TrajectoryBatch], cfg: &TrainConfig) -> Result<f64> {
    let windows = usable(windows);
    if windows.is_empty() {
        return Ok(f64::NAN);
    }
    let mut rng = stream(cfg.seed, VALIDATION_STREAM);
    let mut total = 0.0;
    for w in &windows {
        let mut tape = Tape::new();
        let r = rollout(gen, &gen.params, &mut tape, w, &cfg.loss, &mut rng)?;
        total += tape.item(r.task);
    }
    Ok(total / windows.len() as f64)
}

fn check_head(gen: &Generator, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if gen.config.head != cfg.loss.variant.head() {
        return Err(Error::Config(format!(
            "variant {} needs a {} head, generator has {}",
            cfg.loss.variant,
            cfg.loss.variant.head(),
            gen.config.head
        )));
    }
    Ok(())
}

/// Trains the generator on its task loss alone with Adam, then restores the
/// parameters of the epoch with the lowest validation loss (training loss
/// when `val` is empty).
///
/// The plain adversarial variant has no task loss; it is pre-trained on
/// mean squared displacement error.
pub fn pretrain(
    gen: &mut Generator,
    train: &[TrajectoryBatch],
    val: &[TrajectoryBatch],
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainLog> {
    check_head(gen, cfg)?;
    let windows = usable(train);
    if windows.is_empty() {
        return Err(Error::InvalidArgument("pre-training needs at least one training window".into()));
    }
    let mut log = TrainLog::default();
    let mut rng = stream(cfg.seed, PRETRAIN_STREAM);
    let mut opt = Optimizer::adam(cfg.pretrain_lr);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut best: Option<(f64, ParameterStore)> = None;

    for epoch in 0..cfg.pretrain_epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            gen.params.zero_grads();
            let mut tape = Tape::new();
            let mut sum: Option<Var> = None;
            for &i in chunk {
                let r = rollout(gen, &gen.params, &mut tape, windows[i], &cfg.loss, &mut rng)?;
                sum = Some(match sum {
                    None => r.task,
                    Some(s) => tape.add(s, r.task)?,
                });
            }
            let loss = tape.scale(sum.expect("chunks are non-empty"), 1.0 / chunk.len() as f64);
            let value = finite(tape.item(loss), "task", epoch, b)?;
            tape.backward(loss)?.accumulate_into(&mut gen.params)?;
            gen.params.clip_gradients(cfg.g_grad_clip.0, cfg.g_grad_clip.1)?;
            opt.step(&mut gen.params)?;
            epoch_total += value * chunk.len() as f64;
        }
        let train_mean = epoch_total / windows.len() as f64;
        let val_loss = validation_loss(gen, val, cfg)?;
        for (tag, value) in [(BatchTag::EpochMean, train_mean), (BatchTag::Validation, val_loss)] {
            let rec = LogRecord {
                epoch,
                phase: Phase::Pretrain,
                batch: tag,
                d_loss: None,
                g_loss: None,
                task_loss: value,
            };
            observer.on_record(&rec)?;
            log.records.push(rec);
        }
        let score = if val_loss.is_nan() { train_mean } else { val_loss };
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, gen.params.clone()));
        }
    }
    if let Some((_, params)) = best {
        gen.params = params;
    }
    Ok(log)
}

/// Alternates `d_steps_per_g` critic updates with one generator update per
/// batch, using RMSProp for both.
///
/// Critic weights are clipped to `d_weight_clip` before the first step and
/// after every step; generator gradients are clipped to `g_grad_clip`
/// before every step.
pub fn adversarial_train(
    gen: &mut Generator,
    critic: &mut Discriminator,
    train: &[TrajectoryBatch],
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainLog> {
    check_head(gen, cfg)?;
    let windows = usable(train);
    if windows.is_empty() {
        return Err(Error::InvalidArgument("adversarial training needs at least one training window".into()));
    }
    let (wlo, whi) = cfg.d_weight_clip;
    critic.params.clip_weights(wlo, whi)?;
    let mut log = TrainLog::default();
    let mut rng = stream(cfg.seed, ADVERSARIAL_STREAM);
    let mut d_opt = Optimizer::rmsprop(cfg.adv_lr);
    let mut g_opt = Optimizer::rmsprop(cfg.adv_lr);
    let mut order: Vec<usize> = (0..windows.len()).collect();

    for epoch in 0..cfg.adv_epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let scale = 1.0 / chunk.len() as f64;
            let mut d_value = 0.0;
            for _ in 0..cfg.d_steps_per_g {
                critic.params.zero_grads();
                let mut tape = Tape::new();
                let mut sum: Option<Var> = None;
                for &i in chunk {
                    let w = windows[i];
                    // generate on a scratch tape: the critic step treats
                    // the fake sample as data
                    let mut scratch = Tape::new();
                    let r = rollout(gen, &gen.params, &mut scratch, w, &cfg.loss, &mut rng)?;
                    let shape = scratch.shape(r.fake_rel).to_vec();
                    let fake_rel = tape.constant(&shape, scratch.value(r.fake_rel).to_vec())?;
                    let d = critic_loss(critic, &mut tape, w, fake_rel)?;
                    sum = Some(match sum {
                        None => d,
                        Some(s) => tape.add(s, d)?,
                    });
                }
                let loss = tape.scale(sum.expect("chunks are non-empty"), scale);
                d_value = finite(tape.item(loss), "critic", epoch, b)?;
                tape.backward(loss)?.accumulate_into(&mut critic.params)?;
                d_opt.step(&mut critic.params)?;
                critic.params.clip_weights(wlo, whi)?;
                observer.after_d_step(&critic.params);
            }

            gen.params.zero_grads();
            let frozen = Discriminator {
                config: critic.config.clone(),
                params: critic.params.frozen_copy(),
            };
            let mut tape = Tape::new();
            let mut g_sum: Option<Var> = None;
            let mut task_sum: Option<Var> = None;
            for &i in chunk {
                let w = windows[i];
                let r = rollout(gen, &gen.params, &mut tape, w, &cfg.loss, &mut rng)?;
                let obs = tape.constant(&[w.obs_len, w.num_peds(), 2], w.obs_rel())?;
                let x = frozen.input(&mut tape, obs, r.fake_rel)?;
                let scores = frozen.score(&mut tape, x)?;
                let mean = tape.mean(scores);
                let g_adv = tape.neg(mean);
                g_sum = Some(match g_sum {
                    None => g_adv,
                    Some(s) => tape.add(s, g_adv)?,
                });
                task_sum = Some(match task_sum {
                    None => r.task,
                    Some(s) => tape.add(s, r.task)?,
                });
            }
            let g_adv = tape.scale(g_sum.expect("chunks are non-empty"), scale);
            let task = tape.scale(task_sum.expect("chunks are non-empty"), scale);
            let total = total_generator_loss(&mut tape, &cfg.loss, g_adv, Some(task))?;
            let g_value = finite(tape.item(g_adv), "generator", epoch, b)?;
            let task_value = finite(tape.item(task), "task", epoch, b)?;
            finite(tape.item(total), "generator total", epoch, b)?;
            tape.backward(total)?.accumulate_into(&mut gen.params)?;
            gen.params.clip_gradients(cfg.g_grad_clip.0, cfg.g_grad_clip.1)?;
            observer.before_g_step(&gen.params);
            g_opt.step(&mut gen.params)?;

            let rec = LogRecord {
                epoch,
                phase: Phase::Adversarial,
                batch: BatchTag::Index(b),
                d_loss: Some(d_value),
                g_loss: Some(g_value),
                task_loss: task_value,
            };
            observer.on_record(&rec)?;
            log.records.push(rec);
            let weight = chunk.len() as f64;
            sums[0] += d_value * weight;
            sums[1] += g_value * weight;
            sums[2] += task_value * weight;
        }
        let n = windows.len() as f64;
        let rec = LogRecord {
            epoch,
            phase: Phase::Adversarial,
            batch: BatchTag::EpochMean,
            d_loss: Some(sums[0] / n),
            g_loss: Some(sums[1] / n),
            task_loss: sums[2] / n,
        };
        observer.on_record(&rec)?;
        log.records.push(rec);
    }
    Ok(log)
}

/// `mean(D(fake)) − mean(D(real))` for one window.
fn critic_loss(critic: &Discriminator, tape: &mut Tape, w: &TrajectoryBatch, fake_rel: Var) -> Result<Var> {
    let (n, tp) = (w.num_peds(), w.pred_len);
    let obs = tape.constant(&[w.obs_len, n, 2], w.obs_rel())?;
    let real_rel = tape.constant(&[tp, n, 2], w.future_rel())?;
    let real_in = critic.input(tape, obs, real_rel)?;
    let fake_in = critic.input(tape, obs, fake_rel)?;
    let real = critic.score(tape, real_in)?;
    let fake = critic.score(tape, fake_in)?;
    Ok(wgan_losses(tape, fake, real)?.0)
}
