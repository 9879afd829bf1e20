//! Synthetic constant-velocity crowds for desk-scale training and tests.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::extract::extract_sequences;
use crate::data::parse::{sort_points, TrackPoint};
use crate::data::split::{split_train_val, DatasetSplit, Scene, SplitConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    /// Groups of pedestrians that share a block of frames.
    pub groups: usize,
    pub peds_per_group: usize,
    /// Frames each pedestrian is tracked for.
    pub track_len: usize,
    /// Spacing of frame ids (the public files step by 10).
    pub frame_step: i64,
    /// Per-frame speed range in scene units.
    pub speed: (f64, f64),
    /// Standard deviation of i.i.d. position noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            groups: 50,
            peds_per_group: 4,
            track_len: 40,
            frame_step: 10,
            speed: (0.2, 0.6),
            noise_std: 0.01,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn num_trajectories(&self) -> usize {
        self.groups * self.peds_per_group
    }
}

/// Pedestrians walking straight lines at constant speed plus Gaussian
/// position noise. Groups occupy disjoint frame blocks separated by a gap,
/// so every window lies inside one group.
pub fn constant_velocity(cfg: &SyntheticConfig) -> Vec<TrackPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("valid std");
    let block = (cfg.track_len + 5) as i64 * cfg.frame_step;
    let mut points = Vec::with_capacity(cfg.num_trajectories() * cfg.track_len);
    for g in 0..cfg.groups {
        for p in 0..cfg.peds_per_group {
            let ped_id = (g * cfg.peds_per_group + p) as i64;
            let x0 = rng.random_range(0.0..10.0);
            let y0 = rng.random_range(0.0..10.0);
            let heading = rng.random_range(0.0..std::f64::consts::TAU);
            let speed = rng.random_range(cfg.speed.0..=cfg.speed.1);
            let (vx, vy) = (speed * heading.cos(), speed * heading.sin());
            for t in 0..cfg.track_len {
                let tf = t as f64;
                points.push(TrackPoint {
                    frame_id: g as i64 * block + t as i64 * cfg.frame_step,
                    ped_id,
                    x: x0 + vx * tf + noise.sample(&mut rng),
                    y: y0 + vy * tf + noise.sample(&mut rng),
                });
            }
        }
    }
    sort_points(&mut points);
    points
}

/// Train/validation windows from `train`, test windows from `test`.
pub fn synthetic_split(
    train: &SyntheticConfig,
    test: &SyntheticConfig,
    cfg: &SplitConfig,
) -> DatasetSplit {
    let train_windows = extract_sequences(&constant_velocity(train), &cfg.extract);
    let test_windows = extract_sequences(&constant_velocity(test), &cfg.extract);
    split_train_val("synthetic".into(), vec![train_windows], test_windows, cfg)
}

/// Writes one raw trajectory file per scene under `dir/<scene>/`, each from
/// `cfg` with the seed offset by the scene index.
pub fn write_scene_dirs(dir: &Path, cfg: &SyntheticConfig) -> Result<()> {
    for (k, scene) in Scene::ALL.iter().enumerate() {
        let scene_dir = dir.join(scene.dir_name());
        fs::create_dir_all(&scene_dir).map_err(|e| Error::io(&scene_dir, e))?;
        let scene_cfg = SyntheticConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..cfg.clone()
        };
        write_raw(&scene_dir.join("synthetic.txt"), &constant_velocity(&scene_cfg))?;
    }
    Ok(())
}

/// Writes points in the tab-separated raw format.
pub fn write_raw(path: &Path, points: &[TrackPoint]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::with_capacity(points.len() * 32);
    for p in points {
        text.push_str(&format!("{}\t{}\t{}\t{}\n", p.frame_id, p.ped_id, p.x, p.y));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse::parse_str;

    #[test]
    fn default_corpus_has_two_hundred_tracks() {
        let cfg = SyntheticConfig::default();
        let pts = constant_velocity(&cfg);
        assert_eq!(cfg.num_trajectories(), 200);
        assert_eq!(pts.len(), 200 * 40);
    }

    #[test]
    fn windows_never_straddle_groups() {
        let cfg = SyntheticConfig {
            groups: 3,
            track_len: 22,
            ..Default::default()
        };
        let windows = extract_sequences(&constant_velocity(&cfg), &Default::default());
        assert_eq!(windows.len(), 3 * 3);
        assert!(windows.iter().all(|w| w.num_peds() == 4));
    }

    #[test]
    fn noiseless_tracks_have_constant_displacement() {
        let cfg = SyntheticConfig {
            groups: 1,
            noise_std: 0.0,
            ..Default::default()
        };
        let w = &extract_sequences(&constant_velocity(&cfg), &Default::default())[0];
        let n = w.num_peds();
        for t in 2..w.slen() {
            for k in 0..n * 2 {
                let a = w.rel_disp[t * n * 2 + k];
                let b = w.rel_disp[(t - 1) * n * 2 + k];
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn raw_files_round_trip_through_parser() {
        let dir = tempfile::tempdir().unwrap();
        let pts = constant_velocity(&SyntheticConfig {
            groups: 2,
            ..Default::default()
        });
        let path = dir.path().join("a.txt");
        write_raw(&path, &pts).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(parse_str(&text, "a").unwrap(), pts);
    }
}
