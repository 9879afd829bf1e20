//! Acceptance suite: one PASS / FAIL / SKIPPED line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the terminal.
//! The process fails if any criterion fails.
//!
//! Environment:
//! - `DTGAN_DATA_DIR`: ETH/UCY root with `eth/ hotel/ univ/ zara1/ zara2/`
//!   scene directories; enables the dataset-count criterion.
//! - `DTGAN_LONG_RUN=1` together with `DTGAN_DATA_DIR`: enables the
//!   multi-hour full-training harness.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dtgan::autodiff::{gradcheck, ParameterStore, Tape};
use dtgan::config::RunConfig;
use dtgan::data::synthetic::{synthetic_split, SyntheticConfig};
use dtgan::data::{extract_sequences, make_splits, DatasetSplit, ExtractConfig, SplitConfig, TrackPoint, TrajectoryBatch};
use dtgan::discriminator::{Discriminator, DiscriminatorConfig};
use dtgan::eval::{constant_velocity_metrics, evaluate_scenes, evaluate_windows, MetricConfig, Metrics};
use dtgan::generator::{self, Generator, GeneratorConfig, HeadOutput, OutputHead};
use dtgan::graph::build_graphs;
use dtgan::losses::{gaussian_nll, uniform_nll, variety_mse};
use dtgan::metrics::{ade_fde, amd, amv, FittedGaussian, PredictionSet};
use dtgan::trainer::{adversarial_train, pretrain, LogRecord, TrainConfig, TrainObserver};

type Outcome = Result<String, String>;

enum Status {
    Pass(String),
    Fail(String),
    Skipped(String),
}

// Tolerances and budgets.
const GRAD_H: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-4;
const GRAD_MIN_ENTRIES: usize = 200;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_DATASETS: usize = 100;
const HAND_TOL: f64 = 1e-9;
const AMV_TOL: f64 = 1e-12;
const COUNT_TOL: f64 = 0.05;
const COUNT_BUDGET: Duration = Duration::from_secs(120);
const LEARN_EPOCHS: usize = 50;
const LEARN_FACTOR: f64 = 2.0;
const LEARN_SLACK: f64 = 0.05;
const LEARN_BUDGET: Duration = Duration::from_secs(600);
const ADV_EPOCHS: usize = 20;
const SEED_STD_MAX: f64 = 0.07;
const LONG_RUN_TARGET: (f64, f64) = (0.36, 0.61);
const LONG_RUN_TOL: f64 = 0.05;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn lib<T>(r: dtgan::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// 1. gradients

fn random_batch(n: usize, obs: usize, pred: usize, seed: u64) -> TrajectoryBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slen = obs + pred;
    let starts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]).collect();
    let vel: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]).collect();
    let mut abs = Vec::with_capacity(slen * n * 2);
    for t in 0..slen {
        for (s, v) in starts.iter().zip(&vel) {
            abs.push(s[0] + v[0] * t as f64 + rng.random_range(-0.1..0.1));
            abs.push(s[1] + v[1] * t as f64 + rng.random_range(-0.1..0.1));
        }
    }
    TrajectoryBatch::from_abs((0..n as i64).collect(), (0..slen as i64).collect(), abs, obs, pred).unwrap()
}

fn generator_gradcheck(head: OutputHead, seed: u64) -> Result<(usize, f64), String> {
    let cfg = GeneratorConfig { embed_dim: 8, head, ..GeneratorConfig::default() };
    let mut gen = lib(Generator::new(cfg.clone(), seed))?;
    let batch = random_batch(4, 8, 12, seed + 100);
    let graph = lib(build_graphs(&batch, seed + 200))?;
    let truth = batch.future_rel();
    let entries = gradcheck::sample_entries(&gen.params, GRAD_MIN_ENTRIES, seed + 300);
    let checks = lib(gradcheck::check(&mut gen.params, &entries, GRAD_H, |tape, store| {
        let out = generator::forward(&cfg, store, tape, &graph)?;
        let y = tape.constant(&[12, 4, 2], truth.clone())?;
        match out.head {
            HeadOutput::Point { rel } => variety_mse(tape, &[rel], y),
            HeadOutput::Gaussian { mu, sigma, rho } => gaussian_nll(tape, mu, sigma, rho, y),
            HeadOutput::Uniform { .. } => unreachable!("not checked"),
        }
    }))?;
    Ok((checks.len(), gradcheck::max_rel_error(&checks)))
}

fn discriminator_gradcheck(seed: u64) -> Result<(usize, f64), String> {
    let cfg = DiscriminatorConfig { embed_dim: 8, ..DiscriminatorConfig::default() };
    let mut critic = lib(Discriminator::new(cfg.clone(), seed))?;
    let batch = random_batch(4, 8, 12, seed + 100);
    let weights: Vec<f64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 400);
        (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let rel = batch.rel_disp.clone();
    let entries = gradcheck::sample_entries(&critic.params, GRAD_MIN_ENTRIES, seed + 300);
    let checks = lib(gradcheck::check(&mut critic.params, &entries, GRAD_H, |tape, store| {
        let traj = tape.constant(&[20, 4, 2], rel.clone())?;
        let scores = dtgan::discriminator::score(&cfg, store, tape, traj)?;
        let w = tape.constant(&[4], weights.clone())?;
        let s = tape.mul(scores, w)?;
        Ok(tape.sum(s))
    }))?;
    Ok((checks.len(), gradcheck::max_rel_error(&checks)))
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (label, res) in [
        ("G point", generator_gradcheck(OutputHead::Point, 1)),
        ("G gaussian", generator_gradcheck(OutputHead::Gaussian, 2)),
        ("D", discriminator_gradcheck(3)),
    ] {
        let (n, worst) = res?;
        check(n >= GRAD_MIN_ENTRIES, format!("{label}: only {n} entries checked"))?;
        check(worst < GRAD_TOL, format!("{label}: worst relative error {worst:.2e} over {n} entries"))?;
        parts.push(format!("{label} {n} entries max rel err {worst:.1e}"));
    }
    let elapsed = start.elapsed();
    check(elapsed < GRAD_BUDGET, format!("took {elapsed:.1?}"))?;
    Ok(format!("{}; {elapsed:.1?}", parts.join(", ")))
}

// ---------------------------------------------------------------------------
// 2. extraction oracle

fn random_dataset(rng: &mut ChaCha8Rng) -> Vec<TrackPoint> {
    let mut frame = rng.random_range(0..5i64);
    let frames: Vec<i64> = (0..rng.random_range(5..40))
        .map(|_| {
            frame += rng.random_range(1..15);
            frame
        })
        .collect();
    let mut points = Vec::new();
    for ped in 0..rng.random_range(1..9i64) {
        let p_present = rng.random_range(0.4..1.0);
        for &f in &frames {
            if rng.random_bool(p_present) {
                points.push(TrackPoint {
                    frame_id: f,
                    ped_id: ped * 3 + 1,
                    x: rng.random_range(-10.0..10.0),
                    y: rng.random_range(-10.0..10.0),
                });
            }
        }
    }
    // shuffled so the extractor has to sort
    points.shuffle(rng);
    points
}

/// Every `skip`-th start over the sorted unique frames; pedestrians present in
/// all frames of the window, ordered by id.
fn enumerate_windows(points: &[TrackPoint], cfg: &ExtractConfig) -> Vec<(Vec<i64>, Vec<i64>, Vec<f64>)> {
    let mut table: BTreeMap<(i64, i64), (f64, f64)> = BTreeMap::new();
    for p in points {
        table.insert((p.frame_id, p.ped_id), (p.x, p.y));
    }
    let mut frames: Vec<i64> = points.iter().map(|p| p.frame_id).collect();
    frames.sort_unstable();
    frames.dedup();
    let mut peds: Vec<i64> = points.iter().map(|p| p.ped_id).collect();
    peds.sort_unstable();
    peds.dedup();
    let slen = cfg.slen();
    let mut out = Vec::new();
    let mut start = 0;
    while start + slen <= frames.len() {
        let window = &frames[start..start + slen];
        let present: Vec<i64> = peds
            .iter()
            .copied()
            .filter(|&p| window.iter().all(|&f| table.contains_key(&(f, p))))
            .collect();
        if present.len() > cfg.min_ped {
            let mut abs = Vec::new();
            for &f in window {
                for &p in &present {
                    let (x, y) = table[&(f, p)];
                    abs.push(x);
                    abs.push(y);
                }
            }
            out.push((present, window.to_vec(), abs));
        }
        start += cfg.skip;
    }
    out
}

fn criterion_extraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut windows = 0;
    for case in 0..ORACLE_DATASETS {
        let points = random_dataset(&mut rng);
        let obs_len = rng.random_range(1..5);
        let cfg = ExtractConfig {
            obs_len,
            pred_len: rng.random_range(1..6),
            min_ped: rng.random_range(0..4),
            skip: rng.random_range(1..4),
        };
        let got: Vec<_> = extract_sequences(&points, &cfg)
            .into_iter()
            .map(|b| (b.ped_ids, b.frames, b.abs_pos))
            .collect();
        let want = enumerate_windows(&points, &cfg);
        check(got == want, format!("dataset {case}: {} windows vs oracle {}", got.len(), want.len()))?;
        windows += want.len();
    }
    Ok(format!("{ORACLE_DATASETS} datasets, {windows} windows identical"))
}

// ---------------------------------------------------------------------------
// 3. hand cases

fn criterion_hand_cases() -> Outcome {
    // every predicted point is offset by (0.3, 0.4)
    let truth = vec![0.0, 0.0, 1.0, 1.0, 2.0, 0.0, 3.0, 1.0];
    let samples: Vec<f64> = truth.chunks(2).flat_map(|p| [p[0] + 0.3, p[1] + 0.4]).collect();
    let preds = lib(PredictionSet::new(1, 2, 2, samples, truth))?;
    let (ade, fde) = ade_fde(&preds);
    check((ade - 0.5).abs() < HAND_TOL && (fde - 0.5).abs() < HAND_TOL, format!("ADE/FDE ({ade}, {fde})"))?;

    // identity covariance: Mahalanobis equals Euclidean
    let mu_hat = vec![0.0, 0.0, 1.0, 2.0, -1.0, 0.5, 3.0, 3.0];
    let truth = vec![3.0, 4.0, 1.0, 3.0, 0.5, -1.5, 3.0, 3.0];
    let ident = [1.0, 0.0, 0.0, 1.0].repeat(4);
    let fit = FittedGaussian { pred_len: 2, num_peds: 2, mu_hat: mu_hat.clone(), cov_hat: ident };
    let euclid: f64 = mu_hat
        .chunks(2)
        .zip(truth.chunks(2))
        .map(|(m, y)| (m[0] - y[0]).hypot(m[1] - y[1]))
        .sum::<f64>()
        / 4.0;
    let got = lib(amd(&fit, &truth))?;
    check((got - euclid).abs() < HAND_TOL, format!("AMD {got} vs Euclidean {euclid}"))?;

    // diag(4, 1)
    let fit = FittedGaussian { pred_len: 1, num_peds: 1, mu_hat: vec![0.0, 0.0], cov_hat: vec![4.0, 0.0, 0.0, 1.0] };
    let v = amv(&fit);
    check((v - 4.0).abs() < AMV_TOL, format!("AMV {v}"))?;

    // Gaussian NLL at the mean, unit isotropic: log(2π) per frame
    let (t, n) = (3, 2);
    let mut tape = Tape::new();
    let mu = lib(tape.constant(&[t, n, 2], vec![0.7; t * n * 2]))?;
    let sigma = lib(tape.constant(&[t, n, 2], vec![1.0; t * n * 2]))?;
    let rho = lib(tape.constant(&[t, n], vec![0.0; t * n]))?;
    let y = lib(tape.constant(&[t, n, 2], vec![0.7; t * n * 2]))?;
    let nll = lib(gaussian_nll(&mut tape, mu, sigma, rho, y))?;
    let nll = tape.item(nll);
    let want = t as f64 * (2.0 * std::f64::consts::PI).ln();
    check((nll - want).abs() < HAND_TOL, format!("gaussian NLL {nll} vs {want}"))?;

    // unit disk, truth inside: log π per frame
    let mut tape = Tape::new();
    let r = lib(tape.constant(&[1, 1], vec![1.0]))?;
    let d = lib(tape.constant(&[1, 1, 2], vec![0.2, -0.3]))?;
    let u = lib(uniform_nll(&mut tape, r, d, 0.0))?;
    let u = tape.item(u);
    let want = std::f64::consts::PI.ln();
    check((u - want).abs() < HAND_TOL, format!("uniform NLL {u} vs {want}"))?;

    Ok("ADE/FDE 0.5/0.5, AMD = Euclidean, AMV 4, NLL log 2π and log π".into())
}

// ---------------------------------------------------------------------------
// 4. dataset counts

const PUBLISHED_COUNTS: [(&str, [usize; 3]); 5] = [
    ("eth", [2785, 660, 70]),
    ("hotel", [2594, 621, 301]),
    ("univ", [2076, 530, 947]),
    ("zara1", [2322, 605, 602]),
    ("zara2", [2112, 501, 921]),
];

fn criterion_counts(dir: PathBuf) -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default().split_config();
    let mut report = Vec::new();
    let mut bad = Vec::new();
    for (scene, want) in PUBLISHED_COUNTS {
        let split = lib(make_splits(&dir, scene, &cfg))?;
        let (a, b, c) = split.counts();
        for (got, want) in [a, b, c].into_iter().zip(want) {
            if (got as f64 - want as f64).abs() > COUNT_TOL * want as f64 {
                bad.push(format!("{scene} {got} vs {want}"));
            }
        }
        report.push(format!("{scene} {a}/{b}/{c}"));
    }
    let elapsed = start.elapsed();
    check(elapsed < COUNT_BUDGET, format!("took {elapsed:.1?}"))?;
    check(bad.is_empty(), format!("{} (outside ±5%: {})", report.join(", "), bad.join(", ")))?;
    Ok(format!("{}; {elapsed:.1?}", report.join(", ")))
}

// ---------------------------------------------------------------------------
// 5-7. synthetic training

fn synthetic_corpus() -> DatasetSplit {
    let train = SyntheticConfig::default();
    let test = SyntheticConfig { seed: 1000, ..SyntheticConfig::default() };
    let split_cfg = SplitConfig { extract: ExtractConfig::default(), val_fraction: 0.2, seed: 0 };
    synthetic_split(&train, &test, &split_cfg)
}

fn gaussian_generator(seed: u64) -> dtgan::Result<Generator> {
    Generator::new(GeneratorConfig { head: OutputHead::Gaussian, ..GeneratorConfig::default() }, seed)
}

fn criterion_learnability(split: &DatasetSplit) -> Result<(String, Generator), String> {
    let start = Instant::now();
    let cfg = TrainConfig { pretrain_epochs: LEARN_EPOCHS, ..TrainConfig::default() };
    let mut gen = lib(gaussian_generator(0))?;
    lib(pretrain(&mut gen, &split.train, &split.val, &cfg, &mut ()))?;
    let model = lib(evaluate_windows(&gen, &split.test, 0, &MetricConfig::default()))?;
    let cv = lib(constant_velocity_metrics(&split.test))?;
    let bound = LEARN_FACTOR * cv.ade + LEARN_SLACK;
    let elapsed = start.elapsed();
    let msg = format!(
        "ADE {:.4} vs bound {bound:.4} (CV ADE {:.4}); {} train windows; {elapsed:.1?}",
        model.ade,
        cv.ade,
        split.train.len()
    );
    check(elapsed < LEARN_BUDGET, format!("{msg}: over budget"))?;
    check(model.ade <= bound, msg.clone())?;
    Ok((msg, gen))
}

#[derive(Default)]
struct ClipWatch {
    d_steps: usize,
    g_steps: usize,
    worst_weight: f64,
    worst_grad: f64,
    non_finite: usize,
}

impl TrainObserver for ClipWatch {
    fn on_record(&mut self, r: &LogRecord) -> dtgan::Result<()> {
        let finite = r.task_loss.is_finite()
            && r.d_loss.is_none_or(f64::is_finite)
            && r.g_loss.is_none_or(f64::is_finite);
        if !finite {
            self.non_finite += 1;
        }
        Ok(())
    }
    fn after_d_step(&mut self, critic: &ParameterStore) {
        self.d_steps += 1;
        self.worst_weight = self.worst_weight.max(critic.max_abs_value());
    }
    fn before_g_step(&mut self, gen: &ParameterStore) {
        self.g_steps += 1;
        self.worst_grad = self.worst_grad.max(gen.max_abs_grad());
    }
}

fn criterion_stability(split: &DatasetSplit) -> Outcome {
    let cfg = TrainConfig { adv_epochs: ADV_EPOCHS, ..TrainConfig::default() };
    let mut gen = lib(gaussian_generator(5))?;
    let mut critic = lib(Discriminator::new(DiscriminatorConfig::default(), 6))?;
    let mut watch = ClipWatch::default();
    let log = lib(adversarial_train(&mut gen, &mut critic, &split.train, &cfg, &mut watch))?;
    let (lo, hi) = cfg.d_weight_clip;
    let (glo, ghi) = cfg.g_grad_clip;
    check(watch.d_steps > 0 && watch.g_steps > 0, "no steps observed")?;
    check(watch.non_finite == 0 && log.all_finite(), format!("{} non-finite log records", watch.non_finite))?;
    check(watch.worst_weight <= hi.max(-lo), format!("critic weight reached {}", watch.worst_weight))?;
    check(watch.worst_grad <= ghi.max(-glo), format!("generator gradient reached {}", watch.worst_grad))?;
    Ok(format!(
        "{ADV_EPOCHS} epochs, {} critic steps max |w| {:.4}, {} generator steps max |g| {:.4}, all losses finite",
        watch.d_steps, watch.worst_weight, watch.g_steps, watch.worst_grad
    ))
}

fn criterion_seed_robustness(gen: &Generator, split: &DatasetSplit) -> Outcome {
    let cfg = MetricConfig::default();
    let report = lib(evaluate_scenes(gen, &[("synthetic".into(), split.test.clone())], &cfg))?;
    let s = &report.scenes[0];
    check(s.per_seed.len() == 5, format!("{} seeds", s.per_seed.len()))?;
    let msg = format!("ADE std {:.4}, FDE std {:.4} over seeds {:?}", s.std.ade, s.std.fde, cfg.seeds);
    check(s.std.ade <= SEED_STD_MAX && s.std.fde <= SEED_STD_MAX, msg.clone())?;
    Ok(msg)
}

// ---------------------------------------------------------------------------
// 8. optional full-scale run

fn criterion_long_run(dir: PathBuf) -> Outcome {
    let mut rows: Vec<Metrics> = Vec::new();
    for (scene, _) in PUBLISHED_COUNTS {
        let cfg = RunConfig {
            data_dir: Some(dir.clone()),
            scene: Some(scene.into()),
            out_dir: std::env::temp_dir().join(format!("dtgan-long-run-{scene}")),
            ..RunConfig::default()
        };
        let outcome = lib(dtgan::cli::train_with(&cfg))?;
        let split = lib(cfg.load_split(scene))?;
        let report = lib(evaluate_scenes(&outcome.generator, &[(scene.into(), split.test)], &cfg.metrics))?;
        rows.push(report.scenes[0].mean);
    }
    let (avg, _) = Metrics::mean_std(&rows);
    let msg = format!("average ADE/FDE {:.3}/{:.3} vs {:?}", avg.ade, avg.fde, LONG_RUN_TARGET);
    check(
        (avg.ade - LONG_RUN_TARGET.0).abs() <= LONG_RUN_TOL && (avg.fde - LONG_RUN_TARGET.1).abs() <= LONG_RUN_TOL,
        msg.clone(),
    )?;
    Ok(msg)
}

// ---------------------------------------------------------------------------

fn status(r: Outcome) -> Status {
    match r {
        Ok(m) => Status::Pass(m),
        Err(m) => Status::Fail(m),
    }
}

fn main() {
    // `cargo test -- --list` and filters from the harness are not meaningful
    // here; listing prints nothing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let data_dir = std::env::var_os("DTGAN_DATA_DIR").filter(|v| !v.is_empty()).map(PathBuf::from);
    let long_run = std::env::var("DTGAN_LONG_RUN").is_ok_and(|v| v == "1");

    let split = synthetic_corpus();
    let results: Vec<(usize, &str, Status)> = std::thread::scope(|s| {
        let split = &split;
        let grads = s.spawn(|| status(criterion_gradients()));
        let stability = s.spawn(move || status(criterion_stability(split)));
        let learn = s.spawn(move || {
            let learn = criterion_learnability(split);
            // seed robustness reuses the pre-trained model
            let seeds = match &learn {
                Ok((_, gen)) => status(criterion_seed_robustness(gen, split)),
                Err(_) => match gaussian_generator(0)
                    .map_err(|e| e.to_string())
                    .and_then(|mut g| {
                        let cfg = TrainConfig { pretrain_epochs: LEARN_EPOCHS, ..TrainConfig::default() };
                        lib(pretrain(&mut g, &split.train, &split.val, &cfg, &mut ()))?;
                        Ok(g)
                    }) {
                    Ok(g) => status(criterion_seed_robustness(&g, split)),
                    Err(e) => Status::Fail(e),
                },
            };
            (status(learn.map(|(m, _)| m)), seeds)
        });
        let extraction = status(criterion_extraction());
        let hand = status(criterion_hand_cases());
        let counts = match &data_dir {
            Some(d) => status(criterion_counts(d.clone())),
            None => Status::Skipped("dataset not available (set DTGAN_DATA_DIR)".into()),
        };
        let long = match (&data_dir, long_run) {
            (Some(d), true) => status(criterion_long_run(d.clone())),
            _ => Status::Skipped("multi-hour real-data run; set DTGAN_DATA_DIR and DTGAN_LONG_RUN=1".into()),
        };
        let (learn, seeds) = learn.join().expect("learnability thread");
        vec![
            (1, "gradient correctness", grads.join().expect("gradient thread")),
            (2, "sequence-extraction oracle", extraction),
            (3, "metric and loss hand cases", hand),
            (4, "dataset counts", counts),
            (5, "desk-scale learnability", learn),
            (6, "adversarial stability", stability.join().expect("stability thread")),
            (7, "seed robustness", seeds),
            (8, "full-scale reproduction", long),
        ]
    });

    let mut failed = 0;
    for (id, name, st) in &results {
        let (tag, msg) = match st {
            Status::Pass(m) => ("PASS", m),
            Status::Fail(m) => {
                failed += 1;
                ("FAIL", m)
            }
            Status::Skipped(m) => ("SKIPPED", m),
        };
        println!("criterion {id} [{tag}] {name}: {msg}");
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
