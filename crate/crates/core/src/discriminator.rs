//! WGAN critic: per-frame embedding, an LSTM over time and an affine score
//! head without terminal squashing.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{DiffArray, ParameterStore, Tape, Var};
use crate::error::{Error, Result};

const PREFIX: &str = "discriminator.";

/// Which part of a trajectory the critic sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    FutureOnly,
    /// Observed then future displacements, `T = T_o + T_p`.
    ObsPlusFuture,
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::FutureOnly => "future_only",
            InputMode::ObsPlusFuture => "obs_plus_future",
        })
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "future_only" => Ok(InputMode::FutureOnly),
            "obs_plus_future" => Ok(InputMode::ObsPlusFuture),
            other => Err(Error::Config(format!("unknown discriminator input mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub input_mode: InputMode,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            input_dim: 2,
            embed_dim: 16,
            hidden: 32,
            input_mode: InputMode::ObsPlusFuture,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "discriminator: input_dim, embed_dim and hidden must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub params: ParameterStore,
}

fn p(name: &str) -> String {
    format!("{PREFIX}{name}")
}

fn layout(cfg: &DiscriminatorConfig) -> Vec<(String, Vec<usize>, usize)> {
    let (d, f, h) = (cfg.input_dim, cfg.embed_dim, cfg.hidden);
    vec![
        (p("embed.weight"), vec![d, f], d),
        (p("embed.bias"), vec![f], d),
        (p("lstm.w_ih"), vec![f, 4 * h], h),
        (p("lstm.w_hh"), vec![h, 4 * h], h),
        (p("lstm.bias"), vec![4 * h], h),
        (p("hidden.weight"), vec![h, h], h),
        (p("hidden.bias"), vec![h], h),
        (p("head.weight"), vec![h, 1], h),
        (p("head.bias"), vec![1], h),
    ]
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new(seed);
        for (name, shape, fan_in) in layout(&config) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.insert(name, DiffArray::uniform(shape, bound, &mut rng))?;
        }
        Ok(Self { config, params })
    }

    /// Wraps loaded parameters; sizes come from their shapes.
    pub fn from_params(params: ParameterStore, input_mode: InputMode) -> Result<Self> {
        let shape = |name: &str| -> Result<Vec<usize>> {
            params
                .get(&p(name))
                .map(|a| a.shape().to_vec())
                .map_err(|_| Error::Checkpoint(format!("missing `{}`", p(name))))
        };
        let embed = shape("embed.weight")?;
        let hidden = shape("lstm.w_hh")?[0];
        let config = DiscriminatorConfig {
            input_dim: embed[0],
            embed_dim: embed[1],
            hidden,
            input_mode,
        };
        config.validate()?;
        for (name, want, _) in layout(&config) {
            let got = params.get(&name).map_err(|_| Error::Checkpoint(format!("missing `{name}`")))?;
            if got.shape() != want.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {want:?}",
                    got.shape()
                )));
            }
        }
        Ok(Self {
            config,
            params: params.with_prefix(PREFIX),
        })
    }

    /// Assembles the critic input from `[T_o × N × 2]` observed and
    /// `[T_p × N × 2]` future displacements.
    pub fn input(&self, tape: &mut Tape, obs_rel: Var, future_rel: Var) -> Result<Var> {
        match self.config.input_mode {
            InputMode::FutureOnly => Ok(future_rel),
            InputMode::ObsPlusFuture => tape.concat(&[obs_rel, future_rel], 0),
        }
    }

    pub fn score(&self, tape: &mut Tape, traj: Var) -> Result<Var> {
        score(&self.config, &self.params, tape, traj)
    }
}

/// Scores `traj: [T × N × 2]`, returning `[N]`.
pub fn score(cfg: &DiscriminatorConfig, params: &ParameterStore, tape: &mut Tape, traj: Var) -> Result<Var> {
    let shape = tape.shape(traj).to_vec();
    if shape.len() != 3 || shape[0] == 0 || shape[2] != cfg.input_dim {
        return Err(Error::shape("score", &shape, &[0, 0, cfg.input_dim]));
    }
    let (t_len, n, h) = (shape[0], shape[1], cfg.hidden);
    let we = tape.param(params, &p("embed.weight"))?;
    let be = tape.param(params, &p("embed.bias"))?;
    let emb = tape.matmul(traj, we)?;
    let emb = tape.add_row(emb, be)?;

    let w_ih = tape.param(params, &p("lstm.w_ih"))?;
    let w_hh = tape.param(params, &p("lstm.w_hh"))?;
    let bias = tape.param(params, &p("lstm.bias"))?;
    let mut hs = tape.zeros(&[n, h]);
    let mut cs = tape.zeros(&[n, h]);
    for t in 0..t_len {
        let x = tape.slice(emb, 0, t, 1)?;
        let x = tape.reshape(x, &[n, cfg.embed_dim])?;
        let a = tape.matmul(x, w_ih)?;
        let b = tape.matmul(hs, w_hh)?;
        let gates = tape.add(a, b)?;
        let gates = tape.add_row(gates, bias)?;
        let gate = |tape: &mut Tape, k: usize| tape.slice(gates, 1, k * h, h);
        let i = gate(tape, 0)?;
        let i = tape.sigmoid(i);
        let f = gate(tape, 1)?;
        let f = tape.sigmoid(f);
        let g = gate(tape, 2)?;
        let g = tape.tanh(g);
        let o = gate(tape, 3)?;
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, cs)?;
        let write = tape.mul(i, g)?;
        cs = tape.add(keep, write)?;
        let squashed = tape.tanh(cs);
        hs = tape.mul(o, squashed)?;
    }

    let wh = tape.param(params, &p("hidden.weight"))?;
    let bh = tape.param(params, &p("hidden.bias"))?;
    let z = tape.matmul(hs, wh)?;
    let z = tape.add_row(z, bh)?;
    let z = tape.relu(z);
    let wo = tape.param(params, &p("head.weight"))?;
    let bo = tape.param(params, &p("head.bias"))?;
    let s = tape.matmul(z, wo)?;
    let s = tape.add_row(s, bo)?;
    tape.reshape(s, &[n])
}
