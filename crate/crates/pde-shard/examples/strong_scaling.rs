//! Strong scaling: train the same problem with 1, 2, and 4 workers and
//! report speedup and efficiency against the single-worker baseline.
//!
//! Worker counts beyond the physical core count are flagged as
//! oversubscribed; their efficiency mostly measures the scheduler.
//!
//! ```sh
//! cargo run --release --example strong_scaling
//! ```

use pde_shard::bench::{run_scaling, scaling_csv};
use pde_shard::euler::SolverConfig;
use pde_shard::pool::available_workers;
use pde_shard::train::TrainConfig;

fn main() -> pde_shard::Result<()> {
    let solver = SolverConfig {
        n: 32,
        t_steps: 60,
        ..SolverConfig::default()
    };
    let dataset = pde_shard::euler::run(&solver)?;

    let base = TrainConfig {
        epochs: 4,
        batch_size: 8,
        seed: 5,
        ..TrainConfig::default()
    }
    .with_split_for(dataset.len());

    println!(
        "machine reports {} workers; sweeping 1, 2, 4",
        available_workers()
    );
    let result = run_scaling(&dataset, &base, &[1, 2, 4])?;
    print!("{}", scaling_csv(&result));

    for row in &result.rows {
        println!(
            "{} workers over {} ranks: {:.2}s, speedup {:.2}, efficiency {:.2}{}",
            row.worker_count,
            row.rank_count,
            row.total_train_seconds,
            row.speedup,
            row.efficiency,
            if row.oversubscribed {
                " (oversubscribed)"
            } else {
                ""
            }
        );
    }
    Ok(())
}
