//! Adversarial and task objectives, all built on the tape so they can be
//! differentiated.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::generator::OutputHead;

/// Added inside the log of the disk density so points outside the disk get
/// a large but finite penalty.
pub const UNIFORM_DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossVariant {
    /// Adversarial loss only.
    Dtgan,
    /// Plus best-of-K displacement error.
    DtganM,
    /// Plus bi-variate Gaussian likelihood.
    DtganG,
    /// Plus uniform-disk likelihood.
    DtganU,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] = [
        LossVariant::Dtgan,
        LossVariant::DtganM,
        LossVariant::DtganG,
        LossVariant::DtganU,
    ];

    /// The decoder head this variant trains.
    pub fn head(self) -> OutputHead {
        match self {
            LossVariant::Dtgan | LossVariant::DtganM => OutputHead::Point,
            LossVariant::DtganG => OutputHead::Gaussian,
            LossVariant::DtganU => OutputHead::Uniform,
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossVariant::Dtgan => "dtgan",
            LossVariant::DtganM => "dtgan_m",
            LossVariant::DtganG => "dtgan_g",
            LossVariant::DtganU => "dtgan_u",
        })
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    /// Accepts `dtgan_m` and `dtgan-m` spellings, any case.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dtgan" => Ok(LossVariant::Dtgan),
            "dtgan_m" => Ok(LossVariant::DtganM),
            "dtgan_g" => Ok(LossVariant::DtganG),
            "dtgan_u" => Ok(LossVariant::DtganU),
            _ => Err(Error::Config(format!(
                "unknown variant `{s}` (expected dtgan, dtgan_m, dtgan_g or dtgan_u)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Weight of the task loss.
    pub gamma: f64,
    /// Sample count of the variety loss.
    pub k: usize,
    /// Added to the disk area of the uniform likelihood.
    pub r_hat_epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::DtganG,
            gamma: 1.0,
            k: 20,
            r_hat_epsilon: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.r_hat_epsilon.is_nan() || self.r_hat_epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "r_hat_epsilon must be > 0, got {}",
                self.r_hat_epsilon
            )));
        }
        Ok(())
    }
}

/// `(d_loss, g_loss)` for critic scores `[N]`: the critic minimizes
/// `mean(fake) − mean(real)`, the generator `−mean(fake)`.
pub fn wgan_losses(tape: &mut Tape, fake: Var, real: Var) -> Result<(Var, Var)> {
    if tape.shape(fake) != tape.shape(real) {
        return Err(Error::shape("wgan_losses", tape.shape(fake), tape.shape(real)));
    }
    if tape.value(fake).is_empty() {
        return Err(Error::InvalidArgument("wgan_losses on empty scores".into()));
    }
    let mf = tape.mean(fake);
    let mr = tape.mean(real);
    let d = tape.sub(mf, mr)?;
    let g = tape.neg(mf);
    Ok((d, g))
}

/// Best-of-K displacement loss. Each sample and `truth` are `[T_p × N × 2]`;
/// per pedestrian the error of a sample is its mean squared displacement
/// over frames, the minimum is taken over samples, then averaged over
/// pedestrians.
pub fn variety_mse(tape: &mut Tape, samples: &[Var], truth: Var) -> Result<Var> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("variety loss needs at least one sample".into()));
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    for &s in samples {
        let d = tape.sub(s, truth)?;
        let sq = tape.square(d);
        let dist = tape.sum_axis(sq, 2)?;
        per_sample.push(tape.mean_axis(dist, 0)?);
    }
    let stacked = tape.stack(&per_sample)?;
    let best = tape.min_axis(stacked, 0)?;
    Ok(tape.mean(best))
}

fn check_finite(tape: &Tape, v: Var, num_peds: usize, what: &'static str) -> Result<()> {
    let per_frame = tape.value(v).len() / tape.shape(v)[0];
    let per_ped = per_frame / num_peds;
    match tape.value(v).iter().position(|x| !x.is_finite()) {
        Some(k) => Err(Error::NonFiniteInput {
            frame: k / per_frame,
            ped: (k % per_frame) / per_ped,
            what,
        }),
        None => Ok(()),
    }
}

fn channel(tape: &mut Tape, v: Var, c: usize) -> Result<Var> {
    let s = tape.shape(v).to_vec();
    let x = tape.slice(v, 2, c, 1)?;
    tape.reshape(x, &[s[0], s[1]])
}

/// Negative log-likelihood of `truth` under per-frame bi-variate Gaussians,
/// summed over frames and averaged over pedestrians. `mu`, `sigma` and
/// `truth` are `[T_p × N × 2]`; `rho` is `[T_p × N]`.
pub fn gaussian_nll(tape: &mut Tape, mu: Var, sigma: Var, rho: Var, truth: Var) -> Result<Var> {
    let shape = tape.shape(mu).to_vec();
    if shape.len() != 3 || shape[2] != 2 {
        return Err(Error::shape("gaussian_nll", &shape, &[0, 0, 2]));
    }
    for v in [sigma, truth] {
        if tape.shape(v) != shape.as_slice() {
            return Err(Error::shape("gaussian_nll", &shape, tape.shape(v)));
        }
    }
    if tape.shape(rho) != &shape[..2] {
        return Err(Error::shape("gaussian_nll", &shape[..2], tape.shape(rho)));
    }
    let n = shape[1];
    check_finite(tape, mu, n, "mu")?;
    check_finite(tape, sigma, n, "sigma")?;
    check_finite(tape, rho, n, "rho")?;
    check_finite(tape, truth, n, "truth")?;

    let diff = tape.sub(truth, mu)?;
    let z = tape.div(diff, sigma)?;
    let (zx, zy) = (channel(tape, z, 0)?, channel(tape, z, 1)?);
    let (sx, sy) = (channel(tape, sigma, 0)?, channel(tape, sigma, 1)?);

    // q = zx² + zy² − 2ρ zx zy
    let zx2 = tape.square(zx);
    let zy2 = tape.square(zy);
    let quad = tape.add(zx2, zy2)?;
    let cross = tape.mul(zx, zy)?;
    let cross = tape.mul(cross, rho)?;
    let cross = tape.scale(cross, 2.0);
    let quad = tape.sub(quad, cross)?;

    let r2 = tape.square(rho);
    let one_minus = tape.neg(r2);
    let one_minus = tape.add_scalar(one_minus, 1.0);
    let expo = tape.div(quad, one_minus)?;
    let expo = tape.scale(expo, 0.5);

    let log_sx = tape.log(sx);
    let log_sy = tape.log(sy);
    let log_det = tape.log(one_minus);
    let log_det = tape.scale(log_det, 0.5);
    let norm = tape.add(log_sx, log_sy)?;
    let norm = tape.add(norm, log_det)?;
    let norm = tape.add_scalar(norm, (2.0 * PI).ln());
    let nll = tape.add(norm, expo)?;

    let per_ped = tape.sum_axis(nll, 0)?;
    Ok(tape.mean(per_ped))
}

/// Negative log-likelihood under per-frame uniform disks.
///
/// `radius` is `[T_p × N]`; `truth_disp: [T_p × N × 2]` is each true
/// position's offset from its disk centre. Density is
/// `1/(π r̂² + ε)` inside the disk and zero outside, with
/// [`UNIFORM_DENSITY_FLOOR`] added before the log.
pub fn uniform_nll(tape: &mut Tape, radius: Var, truth_disp: Var, epsilon: f64) -> Result<Var> {
    let shape = tape.shape(radius).to_vec();
    if shape.len() != 2 || tape.shape(truth_disp) != [shape[0], shape[1], 2] {
        return Err(Error::shape("uniform_nll", &shape, tape.shape(truth_disp)));
    }
    if let Some(k) = tape.value(radius).iter().position(|&r| r.is_nan() || r <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "disk radius must be > 0 (frame {}, pedestrian {})",
            k / shape[1],
            k % shape[1]
        )));
    }
    let inside: Vec<f64> = tape
        .value(truth_disp)
        .chunks(2)
        .zip(tape.value(radius))
        .map(|(d, &r)| if d[0].hypot(d[1]) < r { 1.0 } else { 0.0 })
        .collect();
    let inside = tape.constant(&shape, inside)?;
    let area = tape.square(radius);
    let area = tape.scale(area, PI);
    let area = tape.add_scalar(area, epsilon);
    let density = tape.div(inside, area)?;
    let density = tape.add_scalar(density, UNIFORM_DENSITY_FLOOR);
    let log_p = tape.log(density);
    let nll = tape.neg(log_p);
    let per_ped = tape.sum_axis(nll, 0)?;
    Ok(tape.mean(per_ped))
}

/// `g_adv` alone for the plain variant, otherwise `g_adv + γ·task`.
pub fn total_generator_loss(tape: &mut Tape, cfg: &LossConfig, g_adv: Var, task: Option<Var>) -> Result<Var> {
    match (cfg.variant, task) {
        (LossVariant::Dtgan, _) => Ok(g_adv),
        (_, Some(task)) => {
            let weighted = tape.scale(task, cfg.gamma);
            tape.add(g_adv, weighted)
        }
        (v, None) => Err(Error::InvalidArgument(format!("variant {v} needs a task loss"))),
    }
}
