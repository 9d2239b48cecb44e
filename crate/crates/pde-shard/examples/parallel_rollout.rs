//! Roll trained subdomain networks forward in lockstep, exchanging halo
//! strips with the eight neighbors before every step, and tally the traffic.
//!
//! ```sh
//! cargo run --example parallel_rollout
//! ```

use std::collections::BTreeMap;

use pde_shard::euler::SolverConfig;
use pde_shard::infer::{evaluate_default, rollout, RolloutConfig};
use pde_shard::partition::make_partition;
use pde_shard::train::{train_parallel, TrainConfig};

fn main() -> pde_shard::Result<()> {
    let solver = SolverConfig {
        n: 32,
        t_steps: 30,
        ..SolverConfig::default()
    };
    let dataset = pde_shard::euler::run(&solver)?;

    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        seed: 11,
        ..TrainConfig::default()
    }
    .with_split_for(dataset.len());
    let p = make_partition(dataset.h(), dataset.w(), cfg.px, cfg.py, cfg.strategy)?;
    let (nets, _) = train_parallel(&dataset, &p, &cfg)?;

    let start = cfg.val_range.start;
    let roll = RolloutConfig {
        steps: 5,
        dt: dataset.dt,
        ..RolloutConfig::default()
    };
    let (pred, ledger) = rollout(&dataset.frames[start], &nets, &p, &roll, 2)?;

    println!(
        "rolled {} steps on a {}x{} rank grid from frame {}",
        roll.steps, p.py, p.px, start
    );
    println!(
        "ledger: {} messages total, {} per step (expected {})",
        ledger.len(),
        ledger.len() / roll.steps,
        p.messages_per_step()
    );

    let mut by_direction: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for entry in &ledger {
        let slot = by_direction
            .entry(format!("{:?}", entry.direction))
            .or_default();
        slot.0 += 1;
        slot.1 += entry.cells;
    }
    for (dir, (count, cells)) in &by_direction {
        println!("  {:>5}: {:2} messages, {:4} cells", dir, count, cells);
    }

    let rows = evaluate_default(&pred, &dataset, start)?;
    let worst = rows
        .iter()
        .max_by(|a, b| a.mape_percent.total_cmp(&b.mape_percent))
        .unwrap();
    println!(
        "worst prediction error: step {} channel {} at {:.2}%",
        worst.step, worst.channel, worst.mape_percent
    );
    Ok(())
}
