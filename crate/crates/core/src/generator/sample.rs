use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Var};
use crate::data::TrajectoryBatch;
use crate::error::{Error, Result};
use crate::generator::{Generator, HeadOutput};
use crate::graph::build_graphs_with;

pub use crate::metrics::PredictionSet;

/// Bi-variate Gaussian over each future displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub pred_len: usize,
    pub num_peds: usize,
    /// `[T_p × N × 2]`.
    pub mu: Vec<f64>,
    /// `[T_p × N × 2]`, strictly positive.
    pub sigma: Vec<f64>,
    /// `[T_p × N]`, inside `(-1, 1)`.
    pub rho: Vec<f64>,
}

impl GaussianParams {
    pub fn from_tape(tape: &Tape, mu: Var, sigma: Var, rho: Var) -> Self {
        let shape = tape.shape(mu);
        Self {
            pred_len: shape[0],
            num_peds: shape[1],
            mu: tape.value(mu).to_vec(),
            sigma: tape.value(sigma).to_vec(),
            rho: tape.value(rho).to_vec(),
        }
    }

    /// One draw per frame and pedestrian via the Cholesky factor
    /// `[[σx, 0], [ρσy, σy√(1−ρ²)]]`. Returns `[T_p × N × 2]`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.mu.len());
        for k in 0..self.rho.len() {
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            let (sx, sy, r) = (self.sigma[2 * k], self.sigma[2 * k + 1], self.rho[k]);
            out.push(self.mu[2 * k] + sx * e1);
            out.push(self.mu[2 * k + 1] + sy * (r * e1 + (1.0 - r * r).sqrt() * e2));
        }
        out
    }
}

/// Turns per-frame displacements `[T × N × 2]` into positions, starting
/// from `origin: [N × 2]`.
pub fn cumulate(origin: &[f64], rel: &[f64]) -> Vec<f64> {
    let mut pos = origin.to_vec();
    let mut out = Vec::with_capacity(rel.len());
    for step in rel.chunks(origin.len()) {
        for (p, d) in pos.iter_mut().zip(step) {
            *p += d;
        }
        out.extend_from_slice(&pos);
    }
    out
}

fn uniform_disk<R: Rng>(mu: &[f64], radius: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(mu.len());
    for (k, &r) in radius.iter().enumerate() {
        let u: f64 = rng.random();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let rr = r * u.sqrt();
        out.push(mu[2 * k] + rr * theta.cos());
        out.push(mu[2 * k + 1] + rr * theta.sin());
    }
    out
}

/// `K` futures for every pedestrian of `batch`.
///
/// Sample `k` uses its own generator seeded with `seed + k`: it first draws
/// a fresh set of edge weights, then (for distribution heads) one position
/// per frame from the predicted distribution.
pub fn generate(gen: &Generator, batch: &TrajectoryBatch, seed: u64, k: usize) -> Result<PredictionSet> {
    if k < 1 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let cfg = &gen.config;
    if batch.obs_len != cfg.obs_len || batch.pred_len != cfg.pred_len {
        return Err(Error::HorizonMismatch {
            ckpt_obs: cfg.obs_len,
            ckpt_pred: cfg.pred_len,
            data_obs: batch.obs_len,
            data_pred: batch.pred_len,
        });
    }
    let origin = batch.last_obs_abs();
    let mut samples = Vec::with_capacity(k * batch.future_abs().len());
    let mut distributions = Vec::new();
    for s in 0..k {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
        let graph = build_graphs_with(batch, &mut rng)?;
        let mut tape = Tape::new();
        let out = gen.forward(&mut tape, &graph)?;
        let rel = match out.head {
            HeadOutput::Point { rel } => tape.value(rel).to_vec(),
            HeadOutput::Gaussian { mu, sigma, rho } => {
                let g = GaussianParams::from_tape(&tape, mu, sigma, rho);
                let draw = g.sample(&mut rng);
                distributions.push(g);
                draw
            }
            HeadOutput::Uniform { mu, radius } => {
                uniform_disk(tape.value(mu), tape.value(radius), &mut rng)
            }
        };
        samples.extend(cumulate(&origin, &rel));
    }
    Ok(PredictionSet {
        k,
        pred_len: batch.pred_len,
        num_peds: batch.num_peds(),
        samples,
        truth: batch.future_abs(),
        distributions,
    })
}

/// A differentiable draw of future displacements `[T_p × N × 2]`.
///
/// Point heads pass through; distribution heads are reparameterized so the
/// draw stays a function of the predicted parameters.
pub fn sample_rel<R: Rng>(tape: &mut Tape, head: HeadOutput, rng: &mut R) -> Result<Var> {
    match head {
        HeadOutput::Point { rel } => Ok(rel),
        HeadOutput::Gaussian { mu, sigma, rho } => {
            let shape = tape.shape(rho).to_vec();
            let n = shape.iter().product::<usize>();
            let mut e1 = Vec::with_capacity(n);
            let mut e2 = Vec::with_capacity(n);
            for _ in 0..n {
                e1.push(rng.sample::<f64, _>(StandardNormal));
                e2.push(rng.sample::<f64, _>(StandardNormal));
            }
            let e1 = tape.constant(&shape, e1)?;
            let e2 = tape.constant(&shape, e2)?;
            let axis = |tape: &mut Tape, v: Var, c: usize| -> Result<Var> {
                let s = tape.slice(v, 2, c, 1)?;
                tape.reshape(s, &shape)
            };
            let (mx, my) = (axis(tape, mu, 0)?, axis(tape, mu, 1)?);
            let (sx, sy) = (axis(tape, sigma, 0)?, axis(tape, sigma, 1)?);
            let dx = tape.mul(sx, e1)?;
            let x = tape.add(mx, dx)?;
            let r2 = tape.square(rho);
            let r2 = tape.neg(r2);
            let r2 = tape.add_scalar(r2, 1.0);
            let root = tape.sqrt(r2);
            let a = tape.mul(rho, e1)?;
            let b = tape.mul(root, e2)?;
            let z = tape.add(a, b)?;
            let dy = tape.mul(sy, z)?;
            let y = tape.add(my, dy)?;
            stack_xy(tape, x, y, &shape)
        }
        HeadOutput::Uniform { mu, radius } => {
            let shape = tape.shape(radius).to_vec();
            let n = shape.iter().product::<usize>();
            let mut cos = Vec::with_capacity(n);
            let mut sin = Vec::with_capacity(n);
            for _ in 0..n {
                let u: f64 = rng.random();
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                cos.push(u.sqrt() * theta.cos());
                sin.push(u.sqrt() * theta.sin());
            }
            let cos = tape.constant(&shape, cos)?;
            let sin = tape.constant(&shape, sin)?;
            let ox = tape.mul(radius, cos)?;
            let oy = tape.mul(radius, sin)?;
            let offset = stack_xy(tape, ox, oy, &shape)?;
            tape.add(mu, offset)
        }
    }
}

fn stack_xy(tape: &mut Tape, x: Var, y: Var, shape: &[usize]) -> Result<Var> {
    let s3 = [shape[0], shape[1], 1];
    let x = tape.reshape(x, &s3)?;
    let y = tape.reshape(y, &s3)?;
    tape.concat(&[x, y], 2)
}
