//! Checkpoint evaluation: best-of-K displacement errors and
//! distribution metrics per scene, across edge-weight seeds.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::checkpoint;
use crate::data::TrajectoryBatch;
use crate::error::{Error, Result};
use crate::generator::{cumulate, generate, Generator};
use crate::metrics::{ade_fde_per_ped, amd, amv, fit_gaussians, PredictionSet};

/// Seeds of the multi-seed robustness protocol.
pub const ROBUSTNESS_SEEDS: [u64; 5] = [3, 42, 43, 123, 222];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    /// Samples for best-of-K ADE/FDE.
    pub k_adefde: usize,
    /// Samples for the Gaussian fit behind AMD/AMV.
    pub k_amdamv: usize,
    pub seeds: Vec<u64>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            k_adefde: 20,
            k_amdamv: 100,
            seeds: ROBUSTNESS_SEEDS.to_vec(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_adefde < 1 || self.k_amdamv < 2 {
            return Err(Error::Config("k_adefde must be >= 1 and k_amdamv >= 2".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one evaluation seed is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub ade: f64,
    pub fde: f64,
    pub amd: f64,
    pub amv: f64,
}

impl Metrics {
    fn map2(a: Metrics, b: Metrics, f: impl Fn(f64, f64) -> f64) -> Metrics {
        Metrics {
            ade: f(a.ade, b.ade),
            fde: f(a.fde, b.fde),
            amd: f(a.amd, b.amd),
            amv: f(a.amv, b.amv),
        }
    }

    /// Element-wise mean and population standard deviation.
    pub fn mean_std(rows: &[Metrics]) -> (Metrics, Metrics) {
        let n = rows.len() as f64;
        let sum = rows.iter().fold(Metrics::default(), |a, &b| Self::map2(a, b, |x, y| x + y));
        let mean = Self::map2(sum, sum, |x, _| x / n);
        let var = rows.iter().fold(Metrics::default(), |acc, &r| {
            let sq = Self::map2(r, mean, |x, m| (x - m).powi(2));
            Self::map2(acc, sq, |a, d| a + d)
        });
        let std = Self::map2(var, var, |v, _| (v / n).sqrt());
        (mean, std)
    }

    pub fn is_finite(&self) -> bool {
        [self.ade, self.fde, self.amd, self.amv].iter().all(|v| v.is_finite())
    }
}

/// Running sums weighted by pedestrian and by `(frame, pedestrian)` cell.
#[derive(Default)]
struct Accumulator {
    ade: f64,
    fde: f64,
    peds: usize,
    amd: f64,
    amv: f64,
    cells: usize,
}

impl Accumulator {
    fn add(&mut self, preds: &PredictionSet, k_adefde: usize, with_distribution: bool) -> Result<()> {
        for (a, f) in ade_fde_per_ped(&preds.take(k_adefde)) {
            self.ade += a;
            self.fde += f;
        }
        self.peds += preds.num_peds;
        if with_distribution {
            let fit = fit_gaussians(preds)?;
            let cells = preds.pred_len * preds.num_peds;
            self.amd += amd(&fit, &preds.truth)? * cells as f64;
            self.amv += amv(&fit) * cells as f64;
            self.cells += cells;
        }
        Ok(())
    }

    fn finish(&self) -> Metrics {
        let p = self.peds.max(1) as f64;
        let c = self.cells.max(1) as f64;
        Metrics {
            ade: self.ade / p,
            fde: self.fde / p,
            amd: if self.cells == 0 { f64::NAN } else { self.amd / c },
            amv: if self.cells == 0 { f64::NAN } else { self.amv / c },
        }
    }
}

/// Seed for window `index` under evaluation seed `seed`; samples of one
/// window then use consecutive seeds from there.
fn window_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add((index as u64) << 24)
}

/// Metrics of `gen` over `windows` for one edge-weight seed.
///
/// One set of `max(k_adefde, k_amdamv)` samples is drawn per window; the
/// first `k_adefde` feed ADE/FDE and all of them feed the Gaussian fit.
pub fn evaluate_windows(gen: &Generator, windows: &[TrajectoryBatch], seed: u64, cfg: &MetricConfig) -> Result<Metrics> {
    let k = cfg.k_adefde.max(cfg.k_amdamv);
    let mut acc = Accumulator::default();
    for (idx, w) in windows.iter().enumerate().filter(|(_, w)| w.num_peds() >= 2) {
        let preds = generate(gen, w, window_seed(seed, idx), k)?;
        acc.add(&preds, cfg.k_adefde, true)?;
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneResult {
    pub scene: String,
    pub per_seed: Vec<(u64, Metrics)>,
    pub mean: Metrics,
    pub std: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scenes: Vec<SceneResult>,
}

impl EvalReport {
    /// Mean over scenes of each scene's seed mean.
    pub fn average(&self) -> Metrics {
        let means: Vec<Metrics> = self.scenes.iter().map(|s| s.mean).collect();
        Metrics::mean_std(&means).0
    }

    /// Fixed-width table: one row per seed and a `mean±std` row for each
    /// scene, then an `AVG` row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:<10} {:>15} {:>15} {:>15} {:>15}",
            "scene", "seed", "ade", "fde", "amd", "amv"
        );
        let pm = |m: f64, s: f64| format!("{m:.3}±{s:.3}");
        for s in &self.scenes {
            for (seed, m) in &s.per_seed {
                let _ = writeln!(
                    out,
                    "{:<10} {:<10} {:>15.3} {:>15.3} {:>15.3} {:>15.3}",
                    s.scene, seed, m.ade, m.fde, m.amd, m.amv
                );
            }
            let _ = writeln!(
                out,
                "{:<10} {:<10} {:>15} {:>15} {:>15} {:>15}",
                s.scene,
                "mean±std",
                pm(s.mean.ade, s.std.ade),
                pm(s.mean.fde, s.std.fde),
                pm(s.mean.amd, s.std.amd),
                pm(s.mean.amv, s.std.amv)
            );
        }
        let avg = self.average();
        let _ = writeln!(
            out,
            "{:<10} {:<10} {:>15.3} {:>15.3} {:>15.3} {:>15.3}",
            "AVG", "", avg.ade, avg.fde, avg.amd, avg.amv
        );
        out
    }
}

/// Evaluates `gen` on each named scene under every seed of `cfg`.
pub fn evaluate_scenes(gen: &Generator, scenes: &[(String, Vec<TrajectoryBatch>)], cfg: &MetricConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(scenes.len());
    for (name, windows) in scenes {
        let per_seed = cfg
            .seeds
            .iter()
            .map(|&seed| Ok((seed, evaluate_windows(gen, windows, seed, cfg)?)))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Metrics> = per_seed.iter().map(|(_, m)| *m).collect();
        let (mean, std) = Metrics::mean_std(&rows);
        out.push(SceneResult {
            scene: name.clone(),
            per_seed,
            mean,
            std,
        });
    }
    Ok(EvalReport { scenes: out })
}

/// Loads a generator checkpoint and evaluates it.
pub fn evaluate_checkpoint(path: &Path, scenes: &[(String, Vec<TrajectoryBatch>)], cfg: &MetricConfig) -> Result<EvalReport> {
    let gen = Generator::from_params(checkpoint::load(path)?)?;
    evaluate_scenes(&gen, scenes, cfg)
}

/// Extrapolates each pedestrian's last observed displacement.
pub fn constant_velocity_forecast(w: &TrajectoryBatch) -> PredictionSet {
    let n = w.num_peds();
    let obs = w.obs_rel();
    let last = obs[(w.obs_len - 1) * n * 2..].to_vec();
    let rel = last.repeat(w.pred_len);
    PredictionSet {
        k: 1,
        pred_len: w.pred_len,
        num_peds: n,
        samples: cumulate(&w.last_obs_abs(), &rel),
        truth: w.future_abs(),
        distributions: Vec::new(),
    }
}

/// ADE/FDE of the constant-velocity baseline, averaged over pedestrians.
pub fn constant_velocity_metrics(windows: &[TrajectoryBatch]) -> Result<Metrics> {
    let mut acc = Accumulator::default();
    for w in windows {
        acc.add(&constant_velocity_forecast(w), 1, false)?;
    }
    Ok(acc.finish())
}
