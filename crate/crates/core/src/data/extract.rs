use std::collections::BTreeMap;

use crate::data::parse::{sort_points, TrackPoint};
use crate::error::{Error, Result};

/// `N` pedestrians tracked over `obs_len + pred_len` consecutive frames.
///
/// Coordinate arrays are row-major `[slen × N × 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub ped_ids: Vec<i64>,
    pub frames: Vec<i64>,
    pub abs_pos: Vec<f64>,
    pub rel_disp: Vec<f64>,
    pub obs_len: usize,
    pub pred_len: usize,
}

impl TrajectoryBatch {
    /// Builds a batch from absolute positions; displacements are derived,
    /// with the first frame all zero.
    pub fn from_abs(
        ped_ids: Vec<i64>,
        frames: Vec<i64>,
        abs_pos: Vec<f64>,
        obs_len: usize,
        pred_len: usize,
    ) -> Result<Self> {
        let slen = obs_len + pred_len;
        let n = ped_ids.len();
        if obs_len == 0 || frames.len() != slen || abs_pos.len() != slen * n * 2 {
            return Err(Error::InvalidArgument(format!(
                "batch needs {slen} frames x {n} pedestrians, got {} frames and {} values",
                frames.len(),
                abs_pos.len()
            )));
        }
        let mut rel_disp = vec![0.0; abs_pos.len()];
        for t in 1..slen {
            for k in 0..n * 2 {
                rel_disp[t * n * 2 + k] = abs_pos[t * n * 2 + k] - abs_pos[(t - 1) * n * 2 + k];
            }
        }
        Ok(Self {
            ped_ids,
            frames,
            abs_pos,
            rel_disp,
            obs_len,
            pred_len,
        })
    }

    pub fn num_peds(&self) -> usize {
        self.ped_ids.len()
    }

    pub fn slen(&self) -> usize {
        self.obs_len + self.pred_len
    }

    pub fn abs_at(&self, t: usize, i: usize) -> [f64; 2] {
        let k = (t * self.num_peds() + i) * 2;
        [self.abs_pos[k], self.abs_pos[k + 1]]
    }

    fn frames_range(values: &[f64], n: usize, from: usize, to: usize) -> Vec<f64> {
        values[from * n * 2..to * n * 2].to_vec()
    }

    /// Observed displacements `[obs_len × N × 2]`.
    pub fn obs_rel(&self) -> Vec<f64> {
        Self::frames_range(&self.rel_disp, self.num_peds(), 0, self.obs_len)
    }

    /// Ground-truth future displacements `[pred_len × N × 2]`.
    pub fn future_rel(&self) -> Vec<f64> {
        Self::frames_range(&self.rel_disp, self.num_peds(), self.obs_len, self.slen())
    }

    /// Observed absolute positions `[obs_len × N × 2]`.
    pub fn obs_abs(&self) -> Vec<f64> {
        Self::frames_range(&self.abs_pos, self.num_peds(), 0, self.obs_len)
    }

    /// Ground-truth future positions `[pred_len × N × 2]`.
    pub fn future_abs(&self) -> Vec<f64> {
        Self::frames_range(&self.abs_pos, self.num_peds(), self.obs_len, self.slen())
    }

    /// Last observed absolute position per pedestrian, `[N × 2]`.
    pub fn last_obs_abs(&self) -> Vec<f64> {
        Self::frames_range(&self.abs_pos, self.num_peds(), self.obs_len - 1, self.obs_len)
    }
}

/// Window geometry and filtering for [`extract_sequences`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractConfig {
    pub obs_len: usize,
    pub pred_len: usize,
    /// A window is kept only if it holds strictly more than this many
    /// fully-present pedestrians.
    pub min_ped: usize,
    /// Stride between window starts, in unique frame ids.
    pub skip: usize,
}

impl ExtractConfig {
    pub fn slen(&self) -> usize {
        self.obs_len + self.pred_len
    }
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            obs_len: 8,
            pred_len: 12,
            min_ped: 3,
            skip: 1,
        }
    }
}

/// Slides a window of `slen` consecutive unique frame ids over `points` and
/// keeps, per window, the pedestrians observed in every one of its frames.
///
/// Pedestrians are ordered by id within a batch. If a pedestrian has several
/// points in one frame, the first after sorting is used.
pub fn extract_sequences(points: &[TrackPoint], cfg: &ExtractConfig) -> Vec<TrajectoryBatch> {
    let slen = cfg.slen();
    if slen < 2 || cfg.obs_len == 0 || cfg.skip == 0 {
        return Vec::new();
    }
    let mut sorted = points.to_vec();
    sort_points(&mut sorted);

    // frame id -> (ped id -> position), both ordered
    let mut by_frame: BTreeMap<i64, BTreeMap<i64, [f64; 2]>> = BTreeMap::new();
    for p in &sorted {
        by_frame
            .entry(p.frame_id)
            .or_default()
            .entry(p.ped_id)
            .or_insert([p.x, p.y]);
    }
    let frames: Vec<i64> = by_frame.keys().copied().collect();
    let slots: Vec<&BTreeMap<i64, [f64; 2]>> = by_frame.values().collect();
    if frames.len() < slen {
        return Vec::new();
    }

    let mut out = Vec::new();
    for start in (0..=frames.len() - slen).step_by(cfg.skip) {
        let window = &slots[start..start + slen];
        let peds: Vec<i64> = window[0]
            .keys()
            .copied()
            .filter(|id| window[1..].iter().all(|f| f.contains_key(id)))
            .collect();
        if peds.len() <= cfg.min_ped {
            continue;
        }
        let mut abs_pos = Vec::with_capacity(slen * peds.len() * 2);
        for frame in window {
            for id in &peds {
                abs_pos.extend_from_slice(&frame[id]);
            }
        }
        let batch = TrajectoryBatch::from_abs(
            peds,
            frames[start..start + slen].to_vec(),
            abs_pos,
            cfg.obs_len,
            cfg.pred_len,
        )
        .expect("window dimensions are consistent");
        out.push(batch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(slen: usize, min_ped: usize) -> ExtractConfig {
        ExtractConfig {
            obs_len: slen / 2,
            pred_len: slen - slen / 2,
            min_ped,
            skip: 1,
        }
    }

    fn grid(peds: &[i64], frames: &[i64]) -> Vec<TrackPoint> {
        let mut pts = Vec::new();
        for &f in frames {
            for &p in peds {
                pts.push(TrackPoint {
                    frame_id: f,
                    ped_id: p,
                    x: f as f64 + p as f64,
                    y: p as f64,
                });
            }
        }
        pts
    }

    #[test]
    fn four_full_pedestrians_form_one_batch() {
        let pts = grid(&[1, 2, 3, 4], &[0, 1, 2, 3]);
        let batches = extract_sequences(&pts, &cfg(4, 3));
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].num_peds(), 4);
    }

    #[test]
    fn missing_frame_excludes_pedestrian_and_drops_window() {
        let pts: Vec<_> = grid(&[1, 2, 3, 4], &[0, 1, 2, 3])
            .into_iter()
            .filter(|p| !(p.ped_id == 4 && p.frame_id == 2))
            .collect();
        assert!(extract_sequences(&pts, &cfg(4, 3)).is_empty());
        let kept = extract_sequences(&pts, &cfg(4, 2));
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].ped_ids, vec![1, 2, 3]);
    }

    #[test]
    fn windows_run_over_unique_frame_ids() {
        // frame ids 0, 10, 20, 30, 40 are five consecutive time slots
        let pts = grid(&[7, 8], &[0, 10, 20, 30, 40]);
        let batches = extract_sequences(&pts, &cfg(4, 1));
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[1].frames, vec![10, 20, 30, 40]);
    }

    #[test]
    fn displacements_are_first_differences() {
        let pts = grid(&[1, 2], &[0, 1, 2, 3]);
        let b = &extract_sequences(&pts, &cfg(4, 1))[0];
        assert!(b.rel_disp[..4].iter().all(|&v| v == 0.0));
        for t in 1..4 {
            for k in 0..4 {
                let d = b.abs_pos[t * 4 + k] - b.abs_pos[(t - 1) * 4 + k];
                assert!((b.rel_disp[t * 4 + k] - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_inputs_yield_nothing() {
        assert!(extract_sequences(&[], &cfg(4, 1)).is_empty());
        let pts = grid(&[1, 2, 3], &[0, 1]);
        assert!(extract_sequences(&pts, &cfg(4, 1)).is_empty());
    }
}
