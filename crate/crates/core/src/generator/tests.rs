use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::gradcheck;
use crate::data::TrajectoryBatch;
use crate::graph::{build_graphs, GraphSequence};

fn random_batch(n: usize, obs: usize, pred: usize, seed: u64) -> TrajectoryBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slen = obs + pred;
    let mut abs = Vec::with_capacity(slen * n * 2);
    let starts: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
        .collect();
    for t in 0..slen {
        for s in &starts {
            abs.push(s[0] + 0.4 * t as f64 + rng.random_range(-0.05..0.05));
            abs.push(s[1] - 0.1 * t as f64 + rng.random_range(-0.05..0.05));
        }
    }
    TrajectoryBatch::from_abs((0..n as i64).collect(), (0..slen as i64).collect(), abs, obs, pred)
        .unwrap()
}

fn randn(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn fill(store: &mut ParameterStore, name: &str, v: f64) {
    store
        .get_mut(&format!("{PREFIX}{name}"))
        .unwrap()
        .values_mut()
        .fill(v);
}

fn zero_biases(store: &mut ParameterStore) {
    for (name, arr) in store.iter_mut() {
        if name.ends_with("bias") {
            arr.values_mut().fill(0.0);
        }
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn embedding_of_zero_weights_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut tape = Tape::new();
    let x = tape.constant(&[3, 4, 2], randn(&mut rng, 24)).unwrap();
    let w = tape.zeros(&[2, 8]);
    let b = tape.zeros(&[8]);
    let h = spatial_embed(&mut tape, x, w, b).unwrap();
    assert_eq!(tape.shape(h), [3, 4, 8]);
    assert!(tape.value(h).iter().all(|&v| v == 0.0));
}

#[test]
fn embedding_matches_affine_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (xs, ws, bs) = (randn(&mut rng, 2 * 3 * 2), randn(&mut rng, 2 * 5), randn(&mut rng, 5));
    let mut tape = Tape::new();
    let x = tape.constant(&[2, 3, 2], xs.clone()).unwrap();
    let w = tape.constant(&[2, 5], ws.clone()).unwrap();
    let b = tape.constant(&[5], bs.clone()).unwrap();
    let h = spatial_embed(&mut tape, x, w, b).unwrap();
    let got = tape.value(h);
    for row in 0..6 {
        for f in 0..5 {
            let want = bs[f] + xs[row * 2] * ws[f] + xs[row * 2 + 1] * ws[5 + f];
            assert!(close(got[row * 5 + f], want, 1e-12));
        }
    }
}

struct GatInputs {
    t: usize,
    n: usize,
    f: usize,
    emb: Vec<f64>,
    adj: Vec<f64>,
    w: Vec<f64>,
    a_src: Vec<f64>,
    a_dst: Vec<f64>,
}

impl GatInputs {
    fn random(t: usize, n: usize, f: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adj: Vec<f64> = (0..t * n * n).map(|_| rng.random()).collect();
        for k in 0..t * n * n {
            if (k / n) % n == k % n {
                adj[k] = 0.0;
            }
        }
        Self {
            t,
            n,
            f,
            emb: randn(&mut rng, t * n * f),
            adj,
            w: randn(&mut rng, f * f),
            a_src: randn(&mut rng, f),
            a_dst: randn(&mut rng, f),
        }
    }

    fn run(&self, tape: &mut Tape) -> Result<Attention> {
        let emb = tape.constant(&[self.t, self.n, self.f], self.emb.clone())?;
        let adj = tape.constant(&[self.t, self.n, self.n], self.adj.clone())?;
        let params = GatParams {
            weight: tape.constant(&[self.f, self.f], self.w.clone())?,
            attn_src: tape.constant(&[self.f, 1], self.a_src.clone())?,
            attn_dst: tape.constant(&[self.f, 1], self.a_dst.clone())?,
        };
        gat_attention(tape, emb, adj, params)
    }
}

#[test]
fn two_nodes_attend_fully_to_each_other() {
    let inputs = GatInputs::random(3, 2, 4, 2);
    let mut tape = Tape::new();
    let att = inputs.run(&mut tape).unwrap();
    let c = tape.value(att.coeffs);
    for t in 0..3 {
        assert_eq!(&c[t * 4..t * 4 + 4], &[0.0, 1.0, 1.0, 0.0]);
    }
}

#[test]
fn identical_nodes_share_attention_evenly() {
    let mut inputs = GatInputs::random(1, 3, 4, 3);
    let row = inputs.emb[..4].to_vec();
    inputs.emb = row.repeat(3);
    let mut tape = Tape::new();
    let att = inputs.run(&mut tape).unwrap();
    let c = tape.value(att.coeffs);
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 0.0 } else { 0.5 };
            assert!((c[i * 3 + j] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_matches_nested_loop_oracle() {
    let g = GatInputs::random(2, 3, 4, 4);
    let (n, f) = (g.n, g.f);
    let mut tape = Tape::new();
    let att = g.run(&mut tape).unwrap();
    let (coeffs, modulated, out) = (
        tape.value(att.coeffs),
        tape.value(att.modulated),
        tape.value(att.out),
    );
    for t in 0..g.t {
        let h = |i: usize| &g.emb[(t * n + i) * f..(t * n + i + 1) * f];
        let wh: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..f).map(|c| (0..f).map(|r| h(i)[r] * g.w[r * f + c]).sum()).collect())
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    let e = dot(&g.a_src, &wh[i]) + dot(&g.a_dst, &wh[j]);
                    if e > 0.0 { e } else { 0.2 * e }
                })
                .collect();
            let z: f64 = (0..n).filter(|&j| j != i).map(|j| scores[j].exp()).sum();
            let mut agg = vec![0.0; f];
            for j in 0..n {
                let alpha = if j == i { 0.0 } else { scores[j].exp() / z };
                let k = (t * n + i) * n + j;
                let hat = alpha * g.adj[k];
                assert!(close(coeffs[k], alpha, 1e-12));
                assert!(close(modulated[k], hat, 1e-12));
                for c in 0..f {
                    agg[c] += hat * wh[j][c];
                }
            }
            for c in 0..f {
                let want = agg[c].max(0.0) + h(i)[c];
                assert!(close(out[(t * n + i) * f + c], want, 1e-12));
            }
        }
    }
}

#[test]
fn attention_rows_are_distributions() {
    let g = GatInputs::random(4, 6, 5, 5);
    let mut tape = Tape::new();
    let att = g.run(&mut tape).unwrap();
    for row in tape.value(att.coeffs).chunks(6) {
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn attention_rejects_single_node() {
    let g = GatInputs::random(2, 1, 4, 6);
    assert!(g.run(&mut Tape::new()).is_err());
}

#[test]
fn zero_input_and_biases_give_zero_temporal_output() {
    let cfg = GeneratorConfig::default();
    let mut gen = Generator::new(cfg.clone(), 7).unwrap();
    zero_biases(&mut gen.params);
    let mut tape = Tape::new();
    let h = tape.zeros(&[cfg.obs_len, 3, cfg.embed_dim]);
    let v = temporal_stack(&cfg, &gen.params, &mut tape, h).unwrap();
    assert_eq!(tape.shape(v), [cfg.pred_len, 3, cfg.embed_dim]);
    assert!(tape.value(v).iter().all(|&x| x == 0.0));
}

#[test]
fn frames_as_channels_oracle() {
    // Zero temporal kernels make the causal stack an identity, leaving one
    // frames-as-channels convolution over the feature axis.
    let cfg = GeneratorConfig {
        cnn_layers: 1,
        ..GeneratorConfig::default()
    };
    let (to, tp, f, k) = (cfg.obs_len, cfg.pred_len, cfg.embed_dim, cfg.cnn_kernel);
    let mut gen = Generator::new(cfg.clone(), 8).unwrap();
    for l in 0..cfg.tcn_layers {
        fill(&mut gen.params, &format!("tcn.{l}.weight"), 0.0);
        fill(&mut gen.params, &format!("tcn.{l}.bias"), 0.0);
    }
    let n = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let hs = randn(&mut rng, to * n * f);
    let mut tape = Tape::new();
    let h = tape.constant(&[to, n, f], hs.clone()).unwrap();
    let v = temporal_stack(&cfg, &gen.params, &mut tape, h).unwrap();
    let got = tape.value(v);
    let w = gen.params.get("generator.cnn.0.weight").unwrap().values();
    let b = gen.params.get("generator.cnn.0.bias").unwrap().values();
    let pad = (k - 1) / 2;
    for o in 0..tp {
        for i in 0..n {
            for x in 0..f {
                let mut want = b[o];
                for c in 0..to {
                    for q in 0..k {
                        let pos = x as isize + q as isize - pad as isize;
                        if (0..f as isize).contains(&pos) {
                            want += w[(o * to + c) * k + q] * hs[(c * n + i) * f + pos as usize];
                        }
                    }
                }
                assert!(close(got[(o * n + i) * f + x], want, 1e-12));
            }
        }
    }
}

fn gaussian_cfg() -> GeneratorConfig {
    GeneratorConfig {
        head: OutputHead::Gaussian,
        ..GeneratorConfig::default()
    }
}

#[test]
fn zero_decoder_gives_standard_gaussian() {
    let cfg = gaussian_cfg();
    let mut gen = Generator::new(cfg.clone(), 10).unwrap();
    fill(&mut gen.params, "decoder.weight", 0.0);
    fill(&mut gen.params, "decoder.bias", 0.0);
    let mut tape = Tape::new();
    let v = tape.constant(&[cfg.pred_len, 3, cfg.embed_dim], vec![0.3; cfg.pred_len * 3 * cfg.embed_dim]).unwrap();
    let HeadOutput::Gaussian { mu, sigma, rho } = decode(&cfg, &gen.params, &mut tape, v).unwrap() else {
        panic!("expected a Gaussian head");
    };
    assert_eq!(tape.shape(mu), [cfg.pred_len, 3, 2]);
    assert_eq!(tape.shape(rho), [cfg.pred_len, 3]);
    assert!(tape.value(mu).iter().all(|&x| x == 0.0));
    assert!(tape.value(sigma).iter().all(|&x| x == 1.0));
    assert!(tape.value(rho).iter().all(|&x| x == 0.0));
}

#[test]
fn saturated_correlation_stays_inside_unit_interval() {
    let cfg = gaussian_cfg();
    let mut gen = Generator::new(cfg.clone(), 11).unwrap();
    fill(&mut gen.params, "decoder.weight", 0.0);
    gen.params.get_mut("generator.decoder.bias").unwrap().values_mut()[4] = 1e3;
    let mut tape = Tape::new();
    let v = tape.zeros(&[cfg.pred_len, 2, cfg.embed_dim]);
    let HeadOutput::Gaussian { rho, .. } = decode(&cfg, &gen.params, &mut tape, v).unwrap() else {
        panic!("expected a Gaussian head");
    };
    assert!(tape.value(rho).iter().all(|&r| r > 0.0 && r < 1.0));
}

#[test]
fn distribution_parameters_are_valid_for_random_inputs() {
    for seed in 0..5 {
        let gen = Generator::new(gaussian_cfg(), seed).unwrap();
        let batch = random_batch(5, 8, 12, seed);
        let graph = build_graphs(&batch, seed).unwrap();
        let mut tape = Tape::new();
        let HeadOutput::Gaussian { sigma, rho, .. } = gen.forward(&mut tape, &graph).unwrap().head else {
            panic!("expected a Gaussian head");
        };
        assert!(tape.value(sigma).iter().all(|&s| s > 0.0 && s.is_finite()));
        assert!(tape.value(rho).iter().all(|&r| r.abs() < 1.0));
    }
}

#[test]
fn cumulate_is_a_running_sum() {
    let origin = [1.0, -1.0, 0.0, 0.0];
    let rel = [0.5, 0.5, 1.0, 0.0, 0.5, 0.5, 1.0, 0.0];
    assert_eq!(
        cumulate(&origin, &rel),
        vec![1.5, -0.5, 1.0, 0.0, 2.0, 0.0, 2.0, 0.0]
    );
}

#[test]
fn generation_is_deterministic_per_seed() {
    let gen = Generator::new(gaussian_cfg(), 12).unwrap();
    let batch = random_batch(4, 8, 12, 12);
    let a = generate(&gen, &batch, 5, 3).unwrap();
    let b = generate(&gen, &batch, 5, 3).unwrap();
    let c = generate(&gen, &batch, 6, 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.samples, c.samples);
    assert_eq!(a.samples.len(), 3 * 12 * 4 * 2);
    assert_eq!(a.distributions.len(), 3);
}

#[test]
fn vanishing_sigma_collapses_samples_onto_mean() {
    let cfg = gaussian_cfg();
    let mut gen = Generator::new(cfg, 13).unwrap();
    fill(&mut gen.params, "decoder.weight", 0.0);
    gen.params
        .get_mut("generator.decoder.bias")
        .unwrap()
        .values_mut()
        .copy_from_slice(&[0.1, -0.2, -40.0, -40.0, 0.3]);
    let batch = random_batch(3, 8, 12, 13);
    let preds = generate(&gen, &batch, 0, 4).unwrap();
    let origin = batch.last_obs_abs();
    for k in 0..4 {
        for t in 0..12 {
            for i in 0..3 {
                let p = preds.sample(k, t, i);
                let steps = (t + 1) as f64;
                assert!((p[0] - (origin[2 * i] + 0.1 * steps)).abs() < 1e-9);
                assert!((p[1] - (origin[2 * i + 1] - 0.2 * steps)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn gaussian_draws_match_requested_moments() {
    let cells = 100;
    let params = GaussianParams {
        pred_len: cells,
        num_peds: 1,
        mu: [0.5, -1.0].repeat(cells),
        sigma: [0.5, 2.0].repeat(cells),
        rho: vec![0.6; cells],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let draws = 1000;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        for p in params.sample(&mut rng).chunks(2) {
            sx += p[0];
            sy += p[1];
            sxx += p[0] * p[0];
            syy += p[1] * p[1];
            sxy += p[0] * p[1];
        }
    }
    let m = (draws * cells) as f64;
    let (mx, my) = (sx / m, sy / m);
    let (vx, vy, cxy) = (sxx / m - mx * mx, syy / m - my * my, sxy / m - mx * my);
    assert!((mx - 0.5).abs() < 0.05 * 0.5 && (my + 1.0).abs() < 0.05);
    assert!((vx - 0.25).abs() < 0.05 * 0.25);
    assert!((vy - 4.0).abs() < 0.05 * 4.0);
    assert!((cxy - 0.6).abs() < 0.05 * 0.6, "{cxy}");
}

#[test]
fn generation_rejects_bad_arguments() {
    let gen = Generator::new(GeneratorConfig::default(), 15).unwrap();
    let batch = random_batch(3, 8, 12, 15);
    assert!(generate(&gen, &batch, 0, 0).is_err());
    let short = random_batch(3, 6, 12, 15);
    assert!(matches!(
        generate(&gen, &short, 0, 1),
        Err(Error::HorizonMismatch { .. })
    ));
}

fn permuted(g: &GraphSequence, perm: &[usize]) -> GraphSequence {
    let n = g.nodes;
    let mut out = g.clone();
    for t in 0..g.frames {
        for i in 0..n {
            for c in 0..2 {
                out.node_feats[(t * n + i) * 2 + c] = g.node_feats[(t * n + perm[i]) * 2 + c];
            }
            for j in 0..n {
                out.adj[(t * n + i) * n + j] = g.edge(t, perm[i], perm[j]);
            }
        }
    }
    out
}

#[test]
fn relabelling_pedestrians_permutes_predictions() {
    let gen = Generator::new(GeneratorConfig::default(), 16).unwrap();
    let batch = random_batch(5, 8, 12, 16);
    let g = build_graphs(&batch, 16).unwrap();
    let perm = [3, 0, 4, 1, 2];
    let run = |g: &GraphSequence| {
        let mut tape = Tape::new();
        let HeadOutput::Point { rel } = gen.forward(&mut tape, g).unwrap().head else {
            panic!("expected a point head");
        };
        tape.value(rel).to_vec()
    };
    let base = run(&g);
    let moved = run(&permuted(&g, &perm));
    for t in 0..12 {
        for i in 0..5 {
            for c in 0..2 {
                let a = moved[(t * 5 + i) * 2 + c];
                let b = base[(t * 5 + perm[i]) * 2 + c];
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn parameters_round_trip_through_shape_inference() {
    for head in [OutputHead::Point, OutputHead::Gaussian, OutputHead::Uniform] {
        let cfg = GeneratorConfig {
            head,
            obs_len: 6,
            pred_len: 9,
            cnn_layers: 2,
            ..GeneratorConfig::default()
        };
        let gen = Generator::new(cfg.clone(), 17).unwrap();
        let back = Generator::from_params(gen.params.clone()).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back.params.num_values(), gen.params.num_values());
    }
}

#[test]
fn shape_inference_rejects_incomplete_parameters() {
    assert!(Generator::from_params(ParameterStore::new(0)).is_err());
}

fn head_loss(tape: &mut Tape, head: HeadOutput) -> Result<Var> {
    Ok(match head {
        HeadOutput::Point { rel } => {
            let s = tape.square(rel);
            tape.mean(s)
        }
        HeadOutput::Gaussian { mu, sigma, rho } => {
            let a = tape.square(mu);
            let a = tape.mean(a);
            let b = tape.log(sigma);
            let b = tape.mean(b);
            let c = tape.mean(rho);
            let ab = tape.add(a, b)?;
            tape.add(ab, c)?
        }
        HeadOutput::Uniform { mu, radius } => {
            let a = tape.square(mu);
            let a = tape.mean(a);
            let b = tape.mean(radius);
            tape.add(a, b)?
        }
    })
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for head in [OutputHead::Point, OutputHead::Gaussian, OutputHead::Uniform] {
        let cfg = GeneratorConfig {
            head,
            ..GeneratorConfig::default()
        };
        let mut gen = Generator::new(cfg.clone(), 18).unwrap();
        let batch = random_batch(4, cfg.obs_len, cfg.pred_len, 18);
        let graph = build_graphs(&batch, 18).unwrap();
        let entries = gradcheck::sample_entries(&gen.params, 60, 18);
        let checks = gradcheck::check(&mut gen.params, &entries, 1e-6, |tape, store| {
            let out = forward(&cfg, store, tape, &graph)?;
            head_loss(tape, out.head)
        })
        .unwrap();
        let worst = gradcheck::max_rel_error(&checks);
        assert!(worst < 1e-4, "{head}: worst relative error {worst}");
    }
}
