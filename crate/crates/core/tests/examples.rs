//! Runs every example binary that `cargo test` builds alongside this target.

use std::path::PathBuf;
use std::process::Command;

const EXAMPLES: &[&str] = &[
    "extract_windows",
    "random_graphs",
    "sample_futures",
    "loss_variants",
    "adversarial_training",
    "evaluate_metrics",
    "checkpoint_export",
];

fn examples_dir() -> PathBuf {
    // target/<profile>/deps/examples-<hash> -> target/<profile>/examples
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().join("examples")
}

#[test]
fn every_example_runs() {
    let dir = examples_dir();
    for name in EXAMPLES {
        let path = dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
        if !path.is_file() {
            // built only when the whole package is tested
            eprintln!("skipping {name}: {} not built", path.display());
            continue;
        }
        let out = Command::new(&path).output().unwrap();
        assert!(
            out.status.success(),
            "{name} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stdout.is_empty(), "{name} printed nothing");
    }
}
