//! Thin command-line front end over the library: each subcommand maps onto
//! one library entry point and does nothing but argument plumbing.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use pde_shard::bench::{
    load_run_dir, run_experiment, run_scaling, scaling_csv, write_train_artifacts, RunConfig,
};
use pde_shard::euler::SolverConfig;
use pde_shard::field::{read_dataset, write_dataset};
use pde_shard::infer::{evaluate, metrics_csv, rollout, RolloutConfig};
use pde_shard::neural::AdamConfig;
use pde_shard::partition::{make_partition, PaddingStrategy};
use pde_shard::pool::default_workers;
use pde_shard::train::{train_parallel_with, TrainConfig};

#[derive(Parser)]
#[command(
    name = "pde-shard",
    version,
    about = "Domain-decomposed learned surrogates for 2-D linear acoustics"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the finite-volume reference solver and write a dataset.
    Generate(GenerateArgs),
    /// Train one network per subdomain, with no rank-to-rank traffic.
    Train(TrainArgs),
    /// Roll trained networks forward with per-step halo exchange.
    Infer(InferArgs),
    /// Compare a predicted dataset against the truth, frame by frame.
    Compare(CompareArgs),
    /// Strong-scaling sweep: same problem, growing worker counts.
    Bench(BenchArgs),
    /// Execute a TOML manifest end to end into a run directory.
    Run(RunArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    /// Grid cells per side.
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Total frames, the initial condition included.
    #[arg(long, default_value_t = 1500)]
    steps: usize,
    /// Half-width of the square domain.
    #[arg(long, default_value_t = 2.0)]
    extent: f64,
    #[arg(long, default_value_t = 1.4)]
    gamma: f64,
    /// Background density.
    #[arg(long, default_value_t = 1.0)]
    rho_c: f64,
    /// Background pressure.
    #[arg(long, default_value_t = 1.0)]
    p_c: f64,
    /// Background x-velocity.
    #[arg(long, default_value_t = 0.0)]
    uc_x: f64,
    /// Background y-velocity.
    #[arg(long, default_value_t = 0.0)]
    uc_y: f64,
    /// Pressure pulse amplitude.
    #[arg(long, default_value_t = 0.5)]
    pulse_amp: f64,
    /// Pressure pulse half-width at half-maximum.
    #[arg(long, default_value_t = 0.3)]
    pulse_hw: f64,
    /// Pulse center x.
    #[arg(long, default_value_t = 0.0)]
    pulse_cx: f64,
    /// Pulse center y.
    #[arg(long, default_value_t = 0.0)]
    pulse_cy: f64,
    /// Courant number.
    #[arg(long, default_value_t = 0.4)]
    cfl: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Truth dataset to train on.
    #[arg(long)]
    dataset: PathBuf,
    /// Subdomain columns.
    #[arg(long, default_value_t = 2)]
    px: usize,
    /// Subdomain rows.
    #[arg(long, default_value_t = 2)]
    py: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Halo strategy: zero-inner or exact-halo.
    #[arg(long, default_value = "zero-inner")]
    strategy: PaddingStrategy,
    /// Learning rate.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Worker threads (defaults to hardware, capped by PDESHARD_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    /// Run directory for checkpoints, loss curves, timing, and config.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    /// Run directory produced by `train`.
    #[arg(long)]
    run_dir: PathBuf,
    /// Truth dataset supplying the start frame.
    #[arg(long)]
    dataset: PathBuf,
    /// Steps to roll forward.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Keep every n-th predicted frame.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Frame to start from (default: first validation frame).
    #[arg(long)]
    start_frame: Option<usize>,
    /// Halo-exchange timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Output dataset of predicted frames.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Predicted dataset.
    #[arg(long)]
    pred: PathBuf,
    /// Truth dataset.
    #[arg(long)]
    truth: PathBuf,
    /// Truth frame aligned with the first predicted frame.
    #[arg(long, default_value_t = 0)]
    offset: usize,
    /// Error denominator floor.
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    /// Metrics CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset to train on at every worker count.
    #[arg(long)]
    dataset: PathBuf,
    /// Worker counts, first must be 1.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8])]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "zero-inner")]
    strategy: PaddingStrategy,
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Scaling CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Manifest TOML describing the stages to execute.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory receiving every artifact.
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Train(a) => train(a),
        Cmd::Infer(a) => infer(a),
        Cmd::Compare(a) => compare(a),
        Cmd::Bench(a) => bench(a),
        Cmd::Run(a) => run(a),
    }
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let cfg = SolverConfig {
        n: a.n,
        t_steps: a.steps,
        extent: a.extent,
        gamma: a.gamma,
        rho_c: a.rho_c,
        p_c: a.p_c,
        uc_x: a.uc_x,
        uc_y: a.uc_y,
        pulse_amp: a.pulse_amp,
        pulse_hw: a.pulse_hw,
        pulse_cx: a.pulse_cx,
        pulse_cy: a.pulse_cy,
        cfl: a.cfl,
    };
    let d = pde_shard::euler::run(&cfg)?;
    write_dataset(&d, &a.out)?;
    println!(
        "wrote {} frames of {}x{} (dx={:.6}, dt={:.6}) to {}",
        d.len(),
        d.h(),
        d.w(),
        cfg.dx(),
        cfg.dt(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let d = read_dataset(&a.dataset)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        strategy: a.strategy,
        adam: AdamConfig {
            eta: a.eta,
            ..AdamConfig::default()
        },
        px: a.px,
        py: a.py,
        ..TrainConfig::default()
    }
    .with_split_for(d.len());
    let p = make_partition(d.h(), d.w(), a.px, a.py, a.strategy)?;
    let workers = a.workers.unwrap_or_else(|| default_workers(p.n_ranks()));
    let (nets, report) = train_parallel_with(&d, &p, &cfg, workers)?;
    write_train_artifacts(
        &a.out,
        &RunConfig {
            manifest_sha256: None,
            solver: d.meta.clone(),
            train: cfg,
        },
        &p,
        &nets,
        &report,
    )?;
    for (rank, curve) in &report.loss_curves {
        println!(
            "rank {rank}: loss {:.4}% -> {:.4}% over {} epochs",
            curve.first().unwrap_or(&f64::NAN),
            curve.last().unwrap_or(&f64::NAN),
            curve.len()
        );
    }
    println!(
        "trained {} ranks on {} workers in {:.2}s ({} messages), run dir {}",
        p.n_ranks(),
        report.workers,
        report.train_seconds,
        report.messages,
        a.out.display()
    );
    Ok(())
}

fn infer(a: InferArgs) -> anyhow::Result<()> {
    let (config, p, nets) = load_run_dir(&a.run_dir)?;
    let d = read_dataset(&a.dataset)?;
    let start = a.start_frame.unwrap_or(config.train.val_range.start);
    let initial = d
        .frames
        .get(start)
        .with_context(|| format!("start frame {start} outside the {}-frame dataset", d.len()))?;
    let cfg = RolloutConfig {
        steps: a.steps,
        record_every: a.record_every,
        exchange_timeout: Duration::from_secs(a.timeout_secs),
        dt: d.dt,
    };
    let workers = a.workers.unwrap_or_else(|| default_workers(p.n_ranks()));
    let (pred, ledger) = rollout(initial, &nets, &p, &cfg, workers)?;
    write_dataset(&pred, &a.out)?;
    println!(
        "rolled {} steps from frame {start} on {} ranks ({} halo messages), wrote {} frames to {}",
        a.steps,
        p.n_ranks(),
        ledger.len(),
        pred.len(),
        a.out.display()
    );
    Ok(())
}

fn compare(a: CompareArgs) -> anyhow::Result<()> {
    let pred = read_dataset(&a.pred)?;
    let truth = read_dataset(&a.truth)?;
    let rows = evaluate(&pred, &truth, a.offset, a.delta)?;
    std::fs::write(&a.out, metrics_csv(&rows))
        .with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(worst) = rows
        .iter()
        .max_by(|x, y| x.mape_percent.total_cmp(&y.mape_percent))
    {
        println!(
            "{} rows; worst: step {} channel {} mape {:.3}% max-abs {:.3e}",
            rows.len(),
            worst.step,
            worst.channel,
            worst.mape_percent,
            worst.max_abs_err
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let d = read_dataset(&a.dataset)?;
    let base = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        strategy: a.strategy,
        adam: AdamConfig {
            eta: a.eta,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    }
    .with_split_for(d.len());
    let result = run_scaling(&d, &base, &a.workers)?;
    let csv = scaling_csv(&result);
    std::fs::write(&a.out, &csv).with_context(|| format!("writing {}", a.out.display()))?;
    print!("{csv}");
    Ok(())
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let report = run_experiment(&a.manifest, &a.out_dir)?;
    println!(
        "manifest {} -> stages [{}] in {}",
        &report.manifest_sha256[..12.min(report.manifest_sha256.len())],
        report.stages.join(", "),
        a.out_dir.display()
    );
    Ok(())
}
