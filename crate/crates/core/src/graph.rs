//! Per-frame interaction graphs over the observation window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::TrajectoryBatch;
use crate::error::{Error, Result};

/// Guard added to distances in [`WeightScheme::EuclideanReciprocal`].
pub const DISTANCE_EPS: f64 = 1e-8;

/// Node features and weighted adjacency for `frames` graphs of `nodes`
/// pedestrians.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSequence {
    pub frames: usize,
    pub nodes: usize,
    /// `[frames × nodes × 2]` relative displacements.
    pub node_feats: Vec<f64>,
    /// `[frames × nodes × nodes]`, zero diagonal.
    pub adj: Vec<f64>,
}

impl GraphSequence {
    pub fn edge(&self, t: usize, i: usize, j: usize) -> f64 {
        self.adj[(t * self.nodes + i) * self.nodes + j]
    }
}

/// Hand-defined alternatives to random edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    Ones,
    /// `1 / (‖p_i − p_j‖ + ε)` on the observed absolute positions.
    EuclideanReciprocal,
    /// Off-diagonal entries of each frame, row-major, are
    /// `start, start + step, start + 2·step, …`.
    Arithmetic { start: f64, step: f64 },
}

fn skeleton(batch: &TrajectoryBatch) -> Result<GraphSequence> {
    let n = batch.num_peds();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a graph needs at least 2 pedestrians, got {n}"
        )));
    }
    Ok(GraphSequence {
        frames: batch.obs_len,
        nodes: n,
        node_feats: batch.obs_rel(),
        adj: vec![0.0; batch.obs_len * n * n],
    })
}

fn fill_off_diagonal(g: &mut GraphSequence, mut weight: impl FnMut(usize, usize, usize) -> f64) {
    let n = g.nodes;
    for t in 0..g.frames {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.adj[(t * n + i) * n + j] = weight(t, i, j);
                }
            }
        }
    }
}

/// Graphs whose edge weights are drawn i.i.d. from `Uniform[0, 1)` by a
/// generator seeded with `seed`.
pub fn build_graphs(batch: &TrajectoryBatch, seed: u64) -> Result<GraphSequence> {
    build_graphs_with(batch, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Like [`build_graphs`] but drawing from a caller-owned generator.
pub fn build_graphs_with<R: Rng>(batch: &TrajectoryBatch, rng: &mut R) -> Result<GraphSequence> {
    let mut g = skeleton(batch)?;
    fill_off_diagonal(&mut g, |_, _, _| rng.random::<f64>());
    Ok(g)
}

pub fn build_fixed_weights(batch: &TrajectoryBatch, scheme: WeightScheme) -> Result<GraphSequence> {
    let mut g = skeleton(batch)?;
    match scheme {
        WeightScheme::Ones => fill_off_diagonal(&mut g, |_, _, _| 1.0),
        WeightScheme::EuclideanReciprocal => fill_off_diagonal(&mut g, |t, i, j| {
            let [xi, yi] = batch.abs_at(t, i);
            let [xj, yj] = batch.abs_at(t, j);
            1.0 / ((xi - xj).hypot(yi - yj) + DISTANCE_EPS)
        }),
        WeightScheme::Arithmetic { start, step } => {
            let per_frame = g.nodes * (g.nodes - 1);
            let mut k = 0usize;
            fill_off_diagonal(&mut g, |_, _, _| {
                let v = start + (k % per_frame) as f64 * step;
                k += 1;
                v
            });
        }
    }
    Ok(g)
}
