//! Train one network per subdomain on a 2x2 split and show that the whole
//! training phase moves zero bytes between ranks.
//!
//! ```sh
//! cargo run --example train_subdomains
//! ```

use pde_shard::euler::SolverConfig;
use pde_shard::partition::make_partition;
use pde_shard::train::{train_parallel, TrainConfig};

fn main() -> pde_shard::Result<()> {
    let solver = SolverConfig {
        n: 32,
        t_steps: 40,
        ..SolverConfig::default()
    };
    let dataset = pde_shard::euler::run(&solver)?;

    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 8,
        seed: 7,
        ..TrainConfig::default()
    }
    .with_split_for(dataset.len());
    let p = make_partition(dataset.h(), dataset.w(), cfg.px, cfg.py, cfg.strategy)?;

    println!(
        "training {} ranks on {} frame pairs each ({} epochs, batch {})",
        p.n_ranks(),
        cfg.train_range.len(),
        cfg.epochs,
        cfg.batch_size
    );

    let (nets, report) = train_parallel(&dataset, &p, &cfg)?;

    for (rank, curve) in &report.loss_curves {
        let spec = &p.ranks[*rank];
        println!(
            "  rank {} ({}x{} cells at row {}, col {}): loss {:8.3}% -> {:8.3}%",
            rank,
            spec.rows,
            spec.cols,
            spec.row0,
            spec.col0,
            curve.first().unwrap(),
            curve.last().unwrap()
        );
    }
    println!(
        "{} parameters per rank, {} workers, {:.2}s",
        nets[&0].param_count(),
        report.workers,
        report.train_seconds
    );
    println!("messages exchanged during training: {}", report.messages);
    assert_eq!(report.messages, 0);
    Ok(())
}
