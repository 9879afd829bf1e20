//! The trajectory generator.
//!
//! Per observed frame, displacements are embedded, mixed across pedestrians
//! by graph attention whose coefficients are scaled by the frame's edge
//! weights, convolved along time per pedestrian, mapped from the observed to
//! the predicted horizon by convolutions that treat frames as channels, and
//! finally decoded into per-frame outputs.

mod config;
mod sample;

pub use config::{GeneratorConfig, OutputHead};
pub use sample::{cumulate, generate, sample_rel, GaussianParams, PredictionSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ConvSpec, DiffArray, ParameterStore, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::GraphSequence;

use config::PREFIX;

/// Negative slope of the attention-score LeakyReLU.
pub const ATTENTION_SLOPE: f64 = 0.2;

/// `ρ = RHO_BOUND · tanh(·)`, so `|ρ| < 1` survives `tanh` saturating to
/// exactly 1.0 in floating point.
pub const RHO_BOUND: f64 = 1.0 - 1e-6;

/// Attention coefficients and updated node features.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    /// `α`, softmax over each node's neighbours, `[T × N × N]`.
    pub coeffs: Var,
    /// `α̂ = α · e`, `[T × N × N]`.
    pub modulated: Var,
    /// `h'`, `[T × N × F]`.
    pub out: Var,
}

/// Decoded predictions as tape variables, each `[T_p × N × …]`.
#[derive(Debug, Clone, Copy)]
pub enum HeadOutput {
    Point { rel: Var },
    Gaussian { mu: Var, sigma: Var, rho: Var },
    Uniform { mu: Var, radius: Var },
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorOutput {
    pub attention: Attention,
    pub head: HeadOutput,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub params: ParameterStore,
}

fn p(name: &str) -> String {
    format!("{PREFIX}{name}")
}

impl Generator {
    /// Fresh parameters drawn uniformly from `±1/√fan_in`.
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new(seed);
        let (d, f) = (config.input_dim, config.embed_dim);
        let mut add = |name: String, shape: Vec<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.insert(name, DiffArray::uniform(shape, bound, &mut rng))
        };
        add(p("embed.weight"), vec![d, f], d)?;
        add(p("embed.bias"), vec![f], d)?;
        add(p("gat.weight"), vec![f, f], f)?;
        add(p("gat.attn_src"), vec![f, 1], 2 * f)?;
        add(p("gat.attn_dst"), vec![f, 1], 2 * f)?;
        for l in 0..config.tcn_layers {
            let fan = f * config.tcn_kernel;
            add(p(&format!("tcn.{l}.weight")), vec![f, f, config.tcn_kernel], fan)?;
            add(p(&format!("tcn.{l}.bias")), vec![f], fan)?;
        }
        for l in 0..config.cnn_layers {
            let cin = if l == 0 { config.obs_len } else { config.pred_len };
            let fan = cin * config.cnn_kernel;
            add(
                p(&format!("cnn.{l}.weight")),
                vec![config.pred_len, cin, config.cnn_kernel],
                fan,
            )?;
            add(p(&format!("cnn.{l}.bias")), vec![config.pred_len], fan)?;
        }
        let c = config.head.channels();
        let fan = f * config.decoder_kernel;
        add(p("decoder.weight"), vec![c, f, config.decoder_kernel], fan)?;
        add(p("decoder.bias"), vec![c], fan)?;
        Ok(Self { config, params })
    }

    /// Wraps loaded parameters, inferring the architecture from their shapes.
    pub fn from_params(params: ParameterStore) -> Result<Self> {
        let config = GeneratorConfig::infer(&params)?;
        let fresh = Generator::new(config.clone(), 0)?;
        for (name, array) in fresh.params.iter() {
            let loaded = params
                .get(name)
                .map_err(|_| Error::Checkpoint(format!("missing `{name}`")))?;
            if loaded.shape() != array.shape() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    loaded.shape(),
                    array.shape()
                )));
            }
        }
        Ok(Self {
            config,
            params: params.with_prefix(PREFIX),
        })
    }

    pub fn forward(&self, tape: &mut Tape, graph: &GraphSequence) -> Result<GeneratorOutput> {
        forward(&self.config, &self.params, tape, graph)
    }
}

/// Full generator pass with parameters taken from `params`.
pub fn forward(
    cfg: &GeneratorConfig,
    params: &ParameterStore,
    tape: &mut Tape,
    graph: &GraphSequence,
) -> Result<GeneratorOutput> {
    if graph.frames != cfg.obs_len {
        return Err(Error::HorizonMismatch {
            ckpt_obs: cfg.obs_len,
            ckpt_pred: cfg.pred_len,
            data_obs: graph.frames,
            data_pred: cfg.pred_len,
        });
    }
    let (t, n) = (graph.frames, graph.nodes);
    let x = tape.constant(&[t, n, cfg.input_dim], graph.node_feats.clone())?;
    let adj = tape.constant(&[t, n, n], graph.adj.clone())?;

    let w = tape.param(params, &p("embed.weight"))?;
    let b = tape.param(params, &p("embed.bias"))?;
    let emb = spatial_embed(tape, x, w, b)?;

    let gat = GatParams {
        weight: tape.param(params, &p("gat.weight"))?,
        attn_src: tape.param(params, &p("gat.attn_src"))?,
        attn_dst: tape.param(params, &p("gat.attn_dst"))?,
    };
    let attention = gat_attention(tape, emb, adj, gat)?;
    let v = temporal_stack(cfg, params, tape, attention.out)?;
    let head = decode(cfg, params, tape, v)?;
    Ok(GeneratorOutput { attention, head })
}

/// Affine map of the last axis: `[…, D] → […, F]`.
pub fn spatial_embed(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let h = tape.matmul(x, weight)?;
    tape.add_row(h, bias)
}

#[derive(Debug, Clone, Copy)]
pub struct GatParams {
    /// `W`, `[F × F]`.
    pub weight: Var,
    /// First half of `a`, `[F × 1]`.
    pub attn_src: Var,
    /// Second half of `a`, `[F × 1]`.
    pub attn_dst: Var,
}

/// Single-head graph attention with edge-weight modulation and a residual.
///
/// For each frame, `α_ij = softmax_{j≠i} LeakyReLU(aᵀ[Wh_i ‖ Wh_j])`,
/// `α̂_ij = α_ij · e_ij` and `h'_i = ReLU(Σ_j α̂_ij W h_j) + h_i`.
/// `emb` is `[T × N × F]` and `adj` is `[T × N × N]`.
pub fn gat_attention(tape: &mut Tape, emb: Var, adj: Var, params: GatParams) -> Result<Attention> {
    let shape = tape.shape(emb).to_vec();
    if shape.len() != 3 || tape.shape(adj) != [shape[0], shape[1], shape[1]] {
        return Err(Error::shape("gat_attention", &shape, tape.shape(adj)));
    }
    let (t, n) = (shape[0], shape[1]);
    if n < 2 {
        return Err(Error::InvalidArgument(
            "graph attention needs at least 2 nodes".into(),
        ));
    }
    let wh = tape.matmul(emb, params.weight)?;
    let src = tape.matmul(wh, params.attn_src)?;
    let src = tape.reshape(src, &[t, n])?;
    let dst = tape.matmul(wh, params.attn_dst)?;
    let dst = tape.reshape(dst, &[t, n])?;
    let scores = tape.outer_sum(src, dst)?;
    let scores = tape.leaky_relu(scores, ATTENTION_SLOPE);
    let mask: Vec<bool> = (0..t * n * n).map(|k| (k / n) % n != k % n).collect();
    let coeffs = tape.softmax(scores, Some(&mask))?;
    let modulated = tape.mul(coeffs, adj)?;
    let agg = tape.batch_matmul(modulated, wh)?;
    let agg = tape.relu(agg);
    let out = tape.add(agg, emb)?;
    Ok(Attention {
        coeffs,
        modulated,
        out,
    })
}

/// `[T_o × N × F] → [T_p × N × F]`.
///
/// Residual causal convolutions along time (dilation doubling per layer),
/// then convolutions over the feature axis with frames as channels.
pub fn temporal_stack(
    cfg: &GeneratorConfig,
    params: &ParameterStore,
    tape: &mut Tape,
    h: Var,
) -> Result<Var> {
    let mut x = tape.permute(h, &[1, 2, 0])?; // [N, F, T_o]
    for l in 0..cfg.tcn_layers {
        let w = tape.param(params, &p(&format!("tcn.{l}.weight")))?;
        let b = tape.param(params, &p(&format!("tcn.{l}.bias")))?;
        let y = tape.conv1d(x, w, Some(b), ConvSpec::causal(cfg.tcn_kernel, 1 << l))?;
        let y = tape.relu(y);
        x = tape.add(y, x)?;
    }
    let mut x = tape.permute(x, &[0, 2, 1])?; // [N, T_o, F]
    for l in 0..cfg.cnn_layers {
        let w = tape.param(params, &p(&format!("cnn.{l}.weight")))?;
        let b = tape.param(params, &p(&format!("cnn.{l}.bias")))?;
        let spec = ConvSpec::same(cfg.cnn_kernel);
        x = if l == 0 {
            tape.conv1d(x, w, Some(b), spec)?
        } else {
            let a = tape.relu(x);
            let y = tape.conv1d(a, w, Some(b), spec)?;
            tape.add(y, x)?
        };
    }
    tape.permute(x, &[1, 0, 2]) // [T_p, N, F]
}

/// Convolves `v: [T_p × N × F]` along time into the head's channels.
pub fn decode(
    cfg: &GeneratorConfig,
    params: &ParameterStore,
    tape: &mut Tape,
    v: Var,
) -> Result<HeadOutput> {
    let shape = tape.shape(v).to_vec();
    let (t, n) = (shape[0], shape[1]);
    let x = tape.permute(v, &[1, 2, 0])?; // [N, F, T_p]
    let w = tape.param(params, &p("decoder.weight"))?;
    let b = tape.param(params, &p("decoder.bias"))?;
    let y = tape.conv1d(x, w, Some(b), ConvSpec::same(cfg.decoder_kernel))?;
    let y = tape.permute(y, &[2, 0, 1])?; // [T_p, N, C]
    Ok(match cfg.head {
        OutputHead::Point => HeadOutput::Point { rel: y },
        OutputHead::Gaussian => {
            let mu = tape.slice(y, 2, 0, 2)?;
            let log_sigma = tape.slice(y, 2, 2, 2)?;
            let sigma = tape.exp(log_sigma);
            let r = tape.slice(y, 2, 4, 1)?;
            let r = tape.reshape(r, &[t, n])?;
            let r = tape.tanh(r);
            let rho = tape.scale(r, RHO_BOUND);
            HeadOutput::Gaussian { mu, sigma, rho }
        }
        OutputHead::Uniform => {
            let mu = tape.slice(y, 2, 0, 2)?;
            let log_r = tape.slice(y, 2, 2, 1)?;
            let log_r = tape.reshape(log_r, &[t, n])?;
            let radius = tape.exp(log_r);
            HeadOutput::Uniform { mu, radius }
        }
    })
}

#[cfg(test)]
mod tests;
