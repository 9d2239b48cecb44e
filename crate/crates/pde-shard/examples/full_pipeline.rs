//! Drive the whole pipeline from a TOML manifest: generate a dataset, train
//! per-subdomain networks, roll them out, score the rollout, and leave every
//! artifact in one directory.
//!
//! ```sh
//! cargo run --example full_pipeline
//! ```

use std::fs;

use pde_shard::bench::run_experiment;

const MANIFEST: &str = r#"
[generate]
n = 32
steps = 40

[train]
px = 2
py = 2
epochs = 3
batch = 8
seed = 2

[infer]
steps = 4

[compare]
"#;

fn main() -> pde_shard::Result<()> {
    let dir = tempfile::tempdir().expect("tempdir");
    let manifest_path = dir.path().join("manifest.toml");
    fs::write(&manifest_path, MANIFEST).expect("write manifest");

    let out_dir = dir.path().join("experiment");
    let report = run_experiment(&manifest_path, &out_dir)?;

    println!("manifest sha256: {}", report.manifest_sha256);
    println!("stages completed: {}", report.stages.join(" -> "));
    if let Some(train) = &report.train {
        println!(
            "train: {} ranks, {} messages, {:.2}s",
            train.loss_curves.len(),
            train.messages,
            train.train_seconds
        );
    }
    if let Some(msgs) = report.rollout_messages {
        println!("rollout halo messages: {msgs}");
    }

    let mut names: Vec<String> = fs::read_dir(&out_dir)
        .expect("read out dir")
        .map(|e| e.expect("entry").file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    println!("artifacts in {}:", out_dir.display());
    for name in names {
        let size = fs::metadata(out_dir.join(&name)).expect("metadata").len();
        println!("  {name:<18} {size:>8} bytes");
    }
    Ok(())
}
