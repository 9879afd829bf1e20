use std::fmt;
use std::str::FromStr;

use crate::autodiff::ParameterStore;
use crate::error::{Error, Result};

/// What the decoder emits per pedestrian and future frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputHead {
    /// A displacement `(dx, dy)`.
    Point,
    /// A bi-variate Gaussian over the displacement: `μx, μy, log σx, log σy`
    /// and a pre-activation for `ρ`.
    Gaussian,
    /// A disk: centre offset `μx, μy` and `log r̂`.
    Uniform,
}

impl OutputHead {
    pub fn channels(self) -> usize {
        match self {
            OutputHead::Point => 2,
            OutputHead::Gaussian => 5,
            OutputHead::Uniform => 3,
        }
    }

    fn from_channels(c: usize) -> Option<Self> {
        [OutputHead::Point, OutputHead::Gaussian, OutputHead::Uniform]
            .into_iter()
            .find(|h| h.channels() == c)
    }
}

impl fmt::Display for OutputHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputHead::Point => "point",
            OutputHead::Gaussian => "gaussian",
            OutputHead::Uniform => "uniform",
        })
    }
}

impl FromStr for OutputHead {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(OutputHead::Point),
            "gaussian" => Ok(OutputHead::Gaussian),
            "uniform" => Ok(OutputHead::Uniform),
            other => Err(Error::Config(format!("unknown output head `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    /// Input feature dimension (2 for planar displacements).
    pub input_dim: usize,
    pub embed_dim: usize,
    pub obs_len: usize,
    pub pred_len: usize,
    pub tcn_layers: usize,
    pub tcn_kernel: usize,
    pub cnn_layers: usize,
    pub cnn_kernel: usize,
    pub decoder_kernel: usize,
    pub head: OutputHead,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            input_dim: 2,
            embed_dim: 8,
            obs_len: 8,
            pred_len: 12,
            tcn_layers: 2,
            tcn_kernel: 3,
            cnn_layers: 3,
            cnn_kernel: 3,
            decoder_kernel: 3,
            head: OutputHead::Point,
        }
    }
}

pub(crate) const PREFIX: &str = "generator.";

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("generator: {msg}")));
        if self.input_dim == 0 || self.embed_dim == 0 {
            return bad("input_dim and embed_dim must be at least 1");
        }
        if self.obs_len == 0 || self.pred_len == 0 {
            return bad("obs_len and pred_len must be at least 1");
        }
        if self.tcn_kernel == 0 || self.cnn_layers == 0 {
            return bad("tcn_kernel and cnn_layers must be at least 1");
        }
        if self.decoder_kernel.is_multiple_of(2) || self.cnn_kernel.is_multiple_of(2) {
            return bad("decoder_kernel and cnn_kernel must be odd");
        }
        Ok(())
    }

    /// Recovers the architecture from parameter shapes.
    pub fn infer(params: &ParameterStore) -> Result<Self> {
        let shape = |name: &str| -> Result<Vec<usize>> {
            params
                .get(&format!("{PREFIX}{name}"))
                .map(|p| p.shape().to_vec())
                .map_err(|_| Error::Checkpoint(format!("missing `{PREFIX}{name}`")))
        };
        let embed = shape("embed.weight")?;
        let tcn_layers = (0..)
            .take_while(|l| params.contains(&format!("{PREFIX}tcn.{l}.weight")))
            .count();
        let cnn_layers = (0..)
            .take_while(|l| params.contains(&format!("{PREFIX}cnn.{l}.weight")))
            .count();
        if cnn_layers == 0 {
            return Err(Error::Checkpoint("no generator.cnn layers".into()));
        }
        let tcn_kernel = if tcn_layers > 0 {
            shape("tcn.0.weight")?[2]
        } else {
            3
        };
        let cnn0 = shape("cnn.0.weight")?;
        let dec = shape("decoder.weight")?;
        let head = OutputHead::from_channels(dec[0])
            .ok_or_else(|| Error::Checkpoint(format!("decoder has {} channels", dec[0])))?;
        let cfg = Self {
            input_dim: embed[0],
            embed_dim: embed[1],
            obs_len: cnn0[1],
            pred_len: cnn0[0],
            tcn_layers,
            tcn_kernel,
            cnn_layers,
            cnn_kernel: cnn0[2],
            decoder_kernel: dec[2],
            head,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
