//! Run configuration: a flat `key = value` text format.
//!
//! Blank lines and `#` comments are ignored. Every key is optional in the
//! file and falls back to the library default; unknown keys are rejected.
//! Command-line flags are applied on top with [`RunConfig::set`], so they
//! win over file values.
//!
//! | key | meaning |
//! |-----|---------|
//! | `data_dir` | dataset root (default: `$DTGAN_DATA_DIR`) |
//! | `scene` | held-out scene, or `synthetic` for the generated corpus |
//! | `out_dir` | run directory for `train` |
//! | `obs_len`, `pred_len`, `min_ped`, `skip` | window extraction |
//! | `val_fraction` | validation share of each training scene |
//! | `variant` | `dtgan`, `dtgan_m`, `dtgan_g` or `dtgan_u` |
//! | `gamma`, `k_variety`, `r_hat_epsilon` | task-loss settings |
//! | `embed_dim`, `tcn_layers`, `tcn_kernel`, `cnn_layers`, `cnn_kernel`, `decoder_kernel` | generator |
//! | `d_embed_dim`, `d_hidden`, `d_input_mode` | critic |
//! | `batch_size`, `pretrain_lr`, `adv_lr`, `pretrain_epochs`, `adv_epochs`, `d_steps_per_g` | training |
//! | `g_grad_clip`, `d_weight_clip` | `lo,hi` pairs |
//! | `seed` | master seed |
//! | `k_adefde`, `k_amdamv`, `eval_seeds` | evaluation (`eval_seeds` is comma-separated) |
//! | `synth_groups`, `synth_noise` | synthetic corpus size and noise |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::synthetic::{synthetic_split, SyntheticConfig};
use crate::data::{make_splits, DatasetSplit, ExtractConfig, SplitConfig};
use crate::discriminator::DiscriminatorConfig;
use crate::error::{Error, Result};
use crate::eval::MetricConfig;
use crate::generator::GeneratorConfig;
use crate::trainer::TrainConfig;

/// Environment variable consulted when no data directory is configured.
pub const DATA_DIR_ENV: &str = "DTGAN_DATA_DIR";

/// Scene name selecting the generated constant-velocity corpus.
pub const SYNTHETIC_SCENE: &str = "synthetic";

/// Offset between the synthetic training and test corpus seeds.
const SYNTHETIC_TEST_OFFSET: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub scene: Option<String>,
    pub out_dir: PathBuf,
    pub extract: ExtractConfig,
    pub val_fraction: f64,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub metrics: MetricConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            data_dir: None,
            scene: None,
            out_dir: PathBuf::from("runs"),
            extract: ExtractConfig::default(),
            val_fraction: 0.2,
            generator: GeneratorConfig {
                head: train.loss.variant.head(),
                ..GeneratorConfig::default()
            },
            discriminator: DiscriminatorConfig::default(),
            train,
            metrics: MetricConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn pair(key: &str, value: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [lo, hi] => Ok((num(key, lo)?, num(key, hi)?)),
        _ => Err(Error::Config(format!("`{key}` expects `lo,hi`, got `{value}`"))),
    }
}

fn list(key: &str, value: &str) -> Result<Vec<u64>> {
    value.split(',').map(|s| num(key, s.trim())).collect()
}

impl RunConfig {
    /// Defaults overridden by the entries of `text`.
    pub fn parse_str(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.into(),
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: origin.into(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let g = &mut self.generator;
        let d = &mut self.discriminator;
        let t = &mut self.train;
        match key {
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "scene" => self.scene = Some(value.to_string()),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "obs_len" => {
                self.extract.obs_len = num(key, value)?;
                g.obs_len = self.extract.obs_len;
            }
            "pred_len" => {
                self.extract.pred_len = num(key, value)?;
                g.pred_len = self.extract.pred_len;
            }
            "min_ped" => self.extract.min_ped = num(key, value)?,
            "skip" => self.extract.skip = num(key, value)?,
            "val_fraction" => self.val_fraction = num(key, value)?,
            "variant" => {
                t.loss.variant = value.parse()?;
                g.head = t.loss.variant.head();
            }
            "gamma" => t.loss.gamma = num(key, value)?,
            "k_variety" => t.loss.k = num(key, value)?,
            "r_hat_epsilon" => t.loss.r_hat_epsilon = num(key, value)?,
            "embed_dim" => g.embed_dim = num(key, value)?,
            "tcn_layers" => g.tcn_layers = num(key, value)?,
            "tcn_kernel" => g.tcn_kernel = num(key, value)?,
            "cnn_layers" => g.cnn_layers = num(key, value)?,
            "cnn_kernel" => g.cnn_kernel = num(key, value)?,
            "decoder_kernel" => g.decoder_kernel = num(key, value)?,
            "d_embed_dim" => d.embed_dim = num(key, value)?,
            "d_hidden" => d.hidden = num(key, value)?,
            "d_input_mode" => d.input_mode = value.parse()?,
            "batch_size" => t.batch_size = num(key, value)?,
            "pretrain_lr" => t.pretrain_lr = num(key, value)?,
            "adv_lr" => t.adv_lr = num(key, value)?,
            "pretrain_epochs" => t.pretrain_epochs = num(key, value)?,
            "adv_epochs" => t.adv_epochs = num(key, value)?,
            "d_steps_per_g" => t.d_steps_per_g = num(key, value)?,
            "g_grad_clip" => t.g_grad_clip = pair(key, value)?,
            "d_weight_clip" => t.d_weight_clip = pair(key, value)?,
            "seed" => {
                t.seed = num(key, value)?;
                self.synthetic.seed = t.seed;
            }
            "k_adefde" => self.metrics.k_adefde = num(key, value)?,
            "k_amdamv" => self.metrics.k_amdamv = num(key, value)?,
            "eval_seeds" => self.metrics.seeds = list(key, value)?,
            "synth_groups" => self.synthetic.groups = num(key, value)?,
            "synth_noise" => self.synthetic.noise_std = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not `key=value`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.train.validate()?;
        self.metrics.validate()?;
        if self.extract.obs_len < 1 || self.extract.pred_len < 1 || self.extract.skip < 1 {
            return Err(Error::Config("obs_len, pred_len and skip must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction must be in [0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<&str> {
        self.scene.as_deref().ok_or_else(|| Error::MissingKey("scene".into()))
    }

    /// The configured data directory, else `$DTGAN_DATA_DIR`.
    pub fn data_dir(&self) -> Result<PathBuf> {
        if let Some(d) = &self.data_dir {
            return Ok(d.clone());
        }
        match std::env::var_os(DATA_DIR_ENV) {
            Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
            _ => Err(Error::MissingKey(format!("data_dir (or ${DATA_DIR_ENV})"))),
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            extract: self.extract,
            val_fraction: self.val_fraction,
            seed: self.train.seed,
        }
    }

    pub fn synthetic_test(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.synthetic.seed.wrapping_add(SYNTHETIC_TEST_OFFSET),
            ..self.synthetic.clone()
        }
    }

    /// Loads the windows of `scene` (the generated corpus for
    /// [`SYNTHETIC_SCENE`]).
    pub fn load_split(&self, scene: &str) -> Result<DatasetSplit> {
        if scene == SYNTHETIC_SCENE {
            return Ok(synthetic_split(&self.synthetic, &self.synthetic_test(), &self.split_config()));
        }
        make_splits(&self.data_dir()?, scene, &self.split_config())
    }

    /// Every key with its current value, in the file format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.generator;
        let d = &self.discriminator;
        let t = &self.train;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(dir) = &self.data_dir {
            kv("data_dir", dir.display().to_string());
        }
        if let Some(scene) = &self.scene {
            kv("scene", scene.clone());
        }
        kv("out_dir", self.out_dir.display().to_string());
        kv("obs_len", self.extract.obs_len.to_string());
        kv("pred_len", self.extract.pred_len.to_string());
        kv("min_ped", self.extract.min_ped.to_string());
        kv("skip", self.extract.skip.to_string());
        kv("val_fraction", self.val_fraction.to_string());
        kv("variant", t.loss.variant.to_string());
        kv("gamma", t.loss.gamma.to_string());
        kv("k_variety", t.loss.k.to_string());
        kv("r_hat_epsilon", t.loss.r_hat_epsilon.to_string());
        kv("embed_dim", g.embed_dim.to_string());
        kv("tcn_layers", g.tcn_layers.to_string());
        kv("tcn_kernel", g.tcn_kernel.to_string());
        kv("cnn_layers", g.cnn_layers.to_string());
        kv("cnn_kernel", g.cnn_kernel.to_string());
        kv("decoder_kernel", g.decoder_kernel.to_string());
        kv("d_embed_dim", d.embed_dim.to_string());
        kv("d_hidden", d.hidden.to_string());
        kv("d_input_mode", d.input_mode.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("pretrain_lr", t.pretrain_lr.to_string());
        kv("adv_lr", t.adv_lr.to_string());
        kv("pretrain_epochs", t.pretrain_epochs.to_string());
        kv("adv_epochs", t.adv_epochs.to_string());
        kv("d_steps_per_g", t.d_steps_per_g.to_string());
        kv("g_grad_clip", format!("{},{}", t.g_grad_clip.0, t.g_grad_clip.1));
        kv("d_weight_clip", format!("{},{}", t.d_weight_clip.0, t.d_weight_clip.1));
        kv("seed", t.seed.to_string());
        kv("k_adefde", self.metrics.k_adefde.to_string());
        kv("k_amdamv", self.metrics.k_amdamv.to_string());
        let seeds: Vec<String> = self.metrics.seeds.iter().map(u64::to_string).collect();
        kv("eval_seeds", seeds.join(","));
        kv("synth_groups", self.synthetic.groups.to_string());
        kv("synth_noise", self.synthetic.noise_std.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::OutputHead;
    use crate::losses::LossVariant;

    #[test]
    fn file_values_override_defaults() {
        let cfg = RunConfig::parse_str(
            "# comment\nvariant = dtgan-u\n\nseed = 7  # trailing\ng_grad_clip = -2, 2\neval_seeds = 1,2\n",
            "test",
        )
        .unwrap();
        assert_eq!(cfg.train.loss.variant, LossVariant::DtganU);
        assert_eq!(cfg.generator.head, OutputHead::Uniform);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.g_grad_clip, (-2.0, 2.0));
        assert_eq!(cfg.metrics.seeds, vec![1, 2]);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        match RunConfig::parse_str("seed = 1\nlearning_rate = 3\n", "cfg.txt") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("learning_rate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_values_are_rejected() {
        assert!(RunConfig::parse_str("seed = many", "t").is_err());
        assert!(RunConfig::parse_str("just words", "t").is_err());
        assert!(RunConfig::parse_str("variant = dtgan-z", "t").is_err());
        assert!(RunConfig::parse_str("d_weight_clip = 0.1", "t").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::parse_str("seed = 1\nscene = eth", "t").unwrap();
        cfg.apply_overrides(&["seed=9".into(), "scene = hotel".into()]).unwrap();
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.scene().unwrap(), "hotel");
        assert!(cfg.apply_overrides(&["nonsense".into()]).is_err());
    }

    #[test]
    fn missing_scene_names_the_key() {
        match RunConfig::default().scene() {
            Err(Error::MissingKey(k)) => assert_eq!(k, "scene"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn text_dump_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["variant=dtgan_m".into(), "scene=zara1".into(), "adv_lr=0.5".into()])
            .unwrap();
        let back = RunConfig::parse_str(&cfg.to_text(), "dump").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn horizons_follow_into_generator() {
        let cfg = RunConfig::parse_str("obs_len = 6\npred_len = 9", "t").unwrap();
        assert_eq!((cfg.generator.obs_len, cfg.generator.pred_len), (6, 9));
        assert!(cfg.validate().is_ok());
    }

    const KNOWN: &[&str] = &[
        "data_dir", "scene", "out_dir", "obs_len", "pred_len", "min_ped", "skip", "val_fraction",
        "variant", "gamma", "k_variety", "r_hat_epsilon", "embed_dim", "tcn_layers", "tcn_kernel",
        "cnn_layers", "cnn_kernel", "decoder_kernel", "d_embed_dim", "d_hidden", "d_input_mode",
        "batch_size", "pretrain_lr", "adv_lr", "pretrain_epochs", "adv_epochs", "d_steps_per_g",
        "g_grad_clip", "d_weight_clip", "seed", "k_adefde", "k_amdamv", "eval_seeds", "synth_groups",
        "synth_noise",
    ];

    #[test]
    fn dump_lists_every_key() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["data_dir=/d".into(), "scene=eth".into()]).unwrap();
        let keys: Vec<String> = cfg
            .to_text()
            .lines()
            .map(|l| l.split(" = ").next().unwrap().to_string())
            .collect();
        assert_eq!(keys, KNOWN);
    }

    proptest::proptest! {
        #[test]
        fn unknown_keys_always_rejected(key in "[a-z_]{1,16}") {
            proptest::prop_assume!(!KNOWN.contains(&key.as_str()));
            let is_config_err = matches!(RunConfig::default().set(&key, "1"), Err(Error::Config(_)));
            proptest::prop_assert!(is_config_err);
        }

        #[test]
        fn numeric_values_round_trip(
            gamma in 0.0f64..1e6,
            lr in 0.0f64..1.0,
            seed in proptest::num::u64::ANY,
            lo in -10.0f64..0.0,
            hi in 0.0f64..10.0,
        ) {
            let mut cfg = RunConfig::default();
            cfg.apply_overrides(&[
                format!("gamma={gamma}"),
                format!("adv_lr={lr}"),
                format!("seed={seed}"),
                format!("g_grad_clip={lo},{hi}"),
            ]).unwrap();
            let back = RunConfig::parse_str(&cfg.to_text(), "dump").unwrap();
            proptest::prop_assert_eq!(back.train.loss.gamma.to_bits(), gamma.to_bits());
            proptest::prop_assert_eq!(back.train.adv_lr.to_bits(), lr.to_bits());
            proptest::prop_assert_eq!(back.train.seed, seed);
            proptest::prop_assert_eq!(back.train.g_grad_clip, (lo, hi));
        }
    }
}
