//! Best-of-K displacement errors and distribution-aware metrics.

use crate::error::{Error, Result};
use crate::generator::GaussianParams;

/// Covariances whose smallest eigenvalue falls below this get it added to
/// their diagonal before inversion.
pub const COV_REGULARIZATION: f64 = 1e-8;

/// `K` sampled futures in absolute coordinates plus the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub k: usize,
    pub pred_len: usize,
    pub num_peds: usize,
    /// `[K × T_p × N × 2]`.
    pub samples: Vec<f64>,
    /// `[T_p × N × 2]`.
    pub truth: Vec<f64>,
    /// Per-sample predicted displacement distributions (Gaussian head only).
    pub distributions: Vec<GaussianParams>,
}

impl PredictionSet {
    pub fn new(k: usize, pred_len: usize, num_peds: usize, samples: Vec<f64>, truth: Vec<f64>) -> Result<Self> {
        let frame = pred_len * num_peds * 2;
        if k < 1 || samples.len() != k * frame || truth.len() != frame {
            return Err(Error::InvalidArgument(format!(
                "prediction set needs K={k} x {frame} samples and {frame} truth values"
            )));
        }
        Ok(Self {
            k,
            pred_len,
            num_peds,
            samples,
            truth,
            distributions: Vec::new(),
        })
    }

    pub fn sample(&self, k: usize, t: usize, i: usize) -> [f64; 2] {
        let o = ((k * self.pred_len + t) * self.num_peds + i) * 2;
        [self.samples[o], self.samples[o + 1]]
    }

    pub fn truth_at(&self, t: usize, i: usize) -> [f64; 2] {
        let o = (t * self.num_peds + i) * 2;
        [self.truth[o], self.truth[o + 1]]
    }

    /// The first `k` samples.
    pub fn take(&self, k: usize) -> PredictionSet {
        let k = k.min(self.k);
        let frame = self.pred_len * self.num_peds * 2;
        PredictionSet {
            k,
            pred_len: self.pred_len,
            num_peds: self.num_peds,
            samples: self.samples[..k * frame].to_vec(),
            truth: self.truth.clone(),
            distributions: self.distributions.iter().take(k).cloned().collect(),
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Per pedestrian: `(min_k ADE_k, min_k FDE_k)`, each minimized on its own.
pub fn ade_fde_per_ped(preds: &PredictionSet) -> Vec<(f64, f64)> {
    let last = preds.pred_len - 1;
    (0..preds.num_peds)
        .map(|i| {
            let mut best_ade = f64::INFINITY;
            let mut best_fde = f64::INFINITY;
            for k in 0..preds.k {
                let total: f64 = (0..preds.pred_len)
                    .map(|t| dist(preds.sample(k, t, i), preds.truth_at(t, i)))
                    .sum();
                best_ade = best_ade.min(total / preds.pred_len as f64);
                best_fde = best_fde.min(dist(preds.sample(k, last, i), preds.truth_at(last, i)));
            }
            (best_ade, best_fde)
        })
        .collect()
}

/// Best-of-K ADE and FDE averaged over pedestrians.
pub fn ade_fde(preds: &PredictionSet) -> (f64, f64) {
    let per = ade_fde_per_ped(preds);
    let n = per.len() as f64;
    let (a, f) = per.iter().fold((0.0, 0.0), |(a, f), (x, y)| (a + x, f + y));
    (a / n, f / n)
}

/// Sample mean and unbiased covariance per frame and pedestrian.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedGaussian {
    pub pred_len: usize,
    pub num_peds: usize,
    /// `[T_p × N × 2]`.
    pub mu_hat: Vec<f64>,
    /// `[T_p × N × 2 × 2]`.
    pub cov_hat: Vec<f64>,
}

impl FittedGaussian {
    pub fn cov(&self, t: usize, i: usize) -> [f64; 4] {
        let o = (t * self.num_peds + i) * 4;
        [self.cov_hat[o], self.cov_hat[o + 1], self.cov_hat[o + 2], self.cov_hat[o + 3]]
    }

    pub fn mean(&self, t: usize, i: usize) -> [f64; 2] {
        let o = (t * self.num_peds + i) * 2;
        [self.mu_hat[o], self.mu_hat[o + 1]]
    }
}

pub fn fit_gaussians(preds: &PredictionSet) -> Result<FittedGaussian> {
    if preds.k < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 2 samples, got {}",
            preds.k
        )));
    }
    let (tp, n, k) = (preds.pred_len, preds.num_peds, preds.k);
    let mut mu_hat = Vec::with_capacity(tp * n * 2);
    let mut cov_hat = Vec::with_capacity(tp * n * 4);
    for t in 0..tp {
        for i in 0..n {
            let mut m = [0.0; 2];
            for s in 0..k {
                let p = preds.sample(s, t, i);
                m[0] += p[0];
                m[1] += p[1];
            }
            m[0] /= k as f64;
            m[1] /= k as f64;
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for s in 0..k {
                let p = preds.sample(s, t, i);
                let (dx, dy) = (p[0] - m[0], p[1] - m[1]);
                sxx += dx * dx;
                sxy += dx * dy;
                syy += dy * dy;
            }
            let denom = (k - 1) as f64;
            mu_hat.extend_from_slice(&m);
            cov_hat.extend_from_slice(&[sxx / denom, sxy / denom, sxy / denom, syy / denom]);
        }
    }
    Ok(FittedGaussian {
        pred_len: tp,
        num_peds: n,
        mu_hat,
        cov_hat,
    })
}

/// Eigenvalues of a symmetric 2×2 matrix `[[a, b], [b, d]]`, larger first.
pub fn sym2_eigenvalues(a: f64, b: f64, d: f64) -> (f64, f64) {
    let mean = 0.5 * (a + d);
    let radius = (0.5 * (a - d)).hypot(b);
    (mean + radius, mean - radius)
}

/// Mahalanobis distance `√(δᵀ Σ⁻¹ δ)`.
pub fn mahalanobis(point: [f64; 2], mean: [f64; 2], cov: [f64; 4]) -> Option<f64> {
    let (mut a, b, c, mut d) = (cov[0], cov[1], cov[2], cov[3]);
    let (_, low) = sym2_eigenvalues(a, 0.5 * (b + c), d);
    if low < COV_REGULARIZATION {
        a += COV_REGULARIZATION;
        d += COV_REGULARIZATION;
    }
    let det = a * d - b * c;
    if !(det.is_finite() && det > 0.0) {
        return None;
    }
    let (dx, dy) = (point[0] - mean[0], point[1] - mean[1]);
    let q = (d * dx * dx - (b + c) * dx * dy + a * dy * dy) / det;
    Some(q.max(0.0).sqrt())
}

/// Mean Mahalanobis distance of `truth: [T_p × N × 2]` to the fitted
/// distributions.
pub fn amd(fit: &FittedGaussian, truth: &[f64]) -> Result<f64> {
    let (tp, n) = (fit.pred_len, fit.num_peds);
    if truth.len() != tp * n * 2 {
        return Err(Error::shape("amd", &[tp, n, 2], &[truth.len()]));
    }
    let mut total = 0.0;
    for t in 0..tp {
        for i in 0..n {
            let o = (t * n + i) * 2;
            total += mahalanobis([truth[o], truth[o + 1]], fit.mean(t, i), fit.cov(t, i))
                .ok_or(Error::SingularCovariance { frame: t, ped: i })?;
        }
    }
    Ok(total / (tp * n) as f64)
}

/// Mean largest-magnitude covariance eigenvalue.
pub fn amv(fit: &FittedGaussian) -> f64 {
    let (tp, n) = (fit.pred_len, fit.num_peds);
    let mut total = 0.0;
    for t in 0..tp {
        for i in 0..n {
            let c = fit.cov(t, i);
            let (hi, lo) = sym2_eigenvalues(c[0], 0.5 * (c[1] + c[2]), c[3]);
            total += if hi.abs() >= lo.abs() { hi } else { lo };
        }
    }
    total / (tp * n) as f64
}
