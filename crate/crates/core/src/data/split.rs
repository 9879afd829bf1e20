use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::extract::{extract_sequences, ExtractConfig, TrajectoryBatch};
use crate::data::parse::parse_raw;
use crate::error::{Error, Result};

/// The five ETH/UCY scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scene {
    Eth,
    Hotel,
    Univ,
    Zara1,
    Zara2,
}

impl Scene {
    pub const ALL: [Scene; 5] = [Scene::Eth, Scene::Hotel, Scene::Univ, Scene::Zara1, Scene::Zara2];

    pub fn dir_name(self) -> &'static str {
        match self {
            Scene::Eth => "eth",
            Scene::Hotel => "hotel",
            Scene::Univ => "univ",
            Scene::Zara1 => "zara1",
            Scene::Zara2 => "zara2",
        }
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for Scene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scene::ALL
            .into_iter()
            .find(|sc| sc.dir_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownScene(s.to_string()))
    }
}

/// Train/validation/test windows for one held-out scene (or a synthetic tag).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: String,
    pub train: Vec<TrajectoryBatch>,
    pub val: Vec<TrajectoryBatch>,
    pub test: Vec<TrajectoryBatch>,
}

impl DatasetSplit {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub extract: ExtractConfig,
    /// Fraction of each training scene's windows moved to validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            extract: ExtractConfig::default(),
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Leave-one-out split over `data_dir`.
///
/// Two layouts are understood:
///
/// * raw: `data_dir/<scene>/*.txt` for each scene. The held-out scene
///   becomes the test set; every other scene contributes its windows to
///   train, with `val_fraction` of them (chosen by `seed`) moved to
///   validation. A missing scene directory contributes nothing.
/// * pre-split: `data_dir/<held_out>/{train,val,test}/*.txt`, used as is.
pub fn make_splits(data_dir: &Path, held_out: &str, cfg: &SplitConfig) -> Result<DatasetSplit> {
    let held_out: Scene = held_out.parse()?;
    if !data_dir.is_dir() {
        return Err(Error::io(
            data_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "data directory not found"),
        ));
    }
    let presplit = data_dir.join(held_out.dir_name());
    if presplit.join("train").is_dir() {
        let load = |sub: &str| -> Result<Vec<TrajectoryBatch>> {
            let dir = presplit.join(sub);
            if !dir.is_dir() {
                return Ok(Vec::new());
            }
            windows_in_dir(&dir, &cfg.extract)
        };
        return Ok(DatasetSplit {
            name: held_out.to_string(),
            train: load("train")?,
            val: load("val")?,
            test: load("test")?,
        });
    }

    let mut train_scenes = Vec::new();
    let mut test = Vec::new();
    for scene in Scene::ALL {
        let dir = data_dir.join(scene.dir_name());
        let windows = if dir.is_dir() {
            windows_in_dir(&dir, &cfg.extract)?
        } else {
            Vec::new()
        };
        if scene == held_out {
            test = windows;
        } else {
            train_scenes.push(windows);
        }
    }
    Ok(split_train_val(held_out.to_string(), train_scenes, test, cfg))
}

/// Splits per-scene training windows into train and validation and pairs
/// them with a test set.
pub fn split_train_val(
    name: String,
    train_scenes: Vec<Vec<TrajectoryBatch>>,
    test: Vec<TrajectoryBatch>,
    cfg: &SplitConfig,
) -> DatasetSplit {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (k, windows) in train_scenes.into_iter().enumerate() {
        let n_val = (windows.len() as f64 * cfg.val_fraction).round() as usize;
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
        order.shuffle(&mut rng);
        let mut is_val = vec![false; windows.len()];
        for &i in &order[..n_val] {
            is_val[i] = true;
        }
        for (w, v) in windows.into_iter().zip(is_val) {
            if v {
                val.push(w);
            } else {
                train.push(w);
            }
        }
    }
    DatasetSplit {
        name,
        train,
        val,
        test,
    }
}

/// Sorted `*.txt` files directly inside `dir`.
pub fn trajectory_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

fn windows_in_dir(dir: &Path, cfg: &ExtractConfig) -> Result<Vec<TrajectoryBatch>> {
    let mut out = Vec::new();
    for file in trajectory_files(dir)? {
        out.extend(extract_sequences(&parse_raw(&file)?, cfg));
    }
    Ok(out)
}
