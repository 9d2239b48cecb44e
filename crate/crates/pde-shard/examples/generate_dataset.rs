//! Run the finite-volume solver at desk scale and write the frames to disk.
//!
//! ```sh
//! cargo run --example generate_dataset
//! ```

use pde_shard::euler::{BackgroundState, SolverConfig};
use pde_shard::field::{write_dataset, CHANNELS, CHANNEL_NAMES};

fn main() -> pde_shard::Result<()> {
    let cfg = SolverConfig {
        n: 64,
        t_steps: 300,
        ..SolverConfig::default()
    };
    let bg = BackgroundState::from_config(&cfg);
    println!(
        "solving {}x{} for {} steps, dx={:.4}, dt={:.6}, sound speed {:.4}",
        cfg.n,
        cfg.n,
        cfg.t_steps,
        cfg.dx(),
        cfg.dt(),
        bg.sound_speed()
    );

    let dataset = pde_shard::euler::run(&cfg)?;

    for (c, name) in CHANNEL_NAMES.iter().enumerate().take(CHANNELS) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for frame in &dataset.frames {
            for &v in frame.fields().channel(c) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        println!("  {name:>3}: [{lo:+.6}, {hi:+.6}] over all frames");
    }

    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("dataset.pdsh");
    write_dataset(&dataset, &path)?;
    let bytes = std::fs::metadata(&path).expect("metadata").len();
    println!(
        "wrote {} frames ({} bytes) to {}",
        dataset.len(),
        bytes,
        path.display()
    );
    Ok(())
}
