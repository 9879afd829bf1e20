//! Runs the `train`, `evaluate` and `export` subcommands as library calls on
//! a tiny synthetic configuration, then reads the exported CSV back.

use dtgan::cli::{self, EvaluateArgs, ExportArgs, TrainArgs, MODEL_CKPT};
use dtgan::config::RunConfig;

fn main() -> dtgan::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let config_path = dir.path().join("run.cfg");
    std::fs::write(
        &config_path,
        "scene = synthetic\nsynth_groups = 3\nskip = 4\npretrain_epochs = 1\nadv_epochs = 1\nbatch_size = 8\n",
    )
    .expect("write config");
    let data = cli::DataArgs { config: Some(config_path), ..Default::default() };

    let outcome = cli::train(&TrainArgs {
        data: data.clone(),
        out_dir: Some(dir.path().join("run")),
        ..Default::default()
    })?;
    let ckpt = outcome.out_dir.join(MODEL_CKPT);
    println!("trained; config dump:\n{}", RunConfig::load(&outcome.out_dir.join(cli::CONFIG_DUMP))?.to_text());

    let report = cli::evaluate(&EvaluateArgs {
        data: data.clone(),
        checkpoint: ckpt.clone(),
        scenes: vec!["synthetic".into()],
        seeds: vec![3, 42],
        ..Default::default()
    })?;
    print!("{}", report.render());

    let out = dir.path().join("window.csv");
    let rows = cli::export(&ExportArgs {
        data,
        checkpoint: ckpt,
        scene: "synthetic".into(),
        batch_index: 0,
        samples: 3,
        seed: 0,
        out: out.clone(),
    })?;
    let text = std::fs::read_to_string(&out).expect("read export");
    println!("exported {rows} rows; first lines:");
    text.lines().take(3).for_each(|l| println!("  {l}"));
    Ok(())
}
