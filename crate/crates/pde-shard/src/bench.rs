//! Strong-scaling measurements and the manifest-driven experiment runner.
//!
//! A manifest is a TOML file with up to five sections, executed in a fixed
//! order: `[generate]`, `[train]`, `[infer]`, `[compare]`, `[bench]`. Every
//! artifact lands in one output directory; a stage failure leaves a
//! `FAILED_<stage>.txt` marker alongside whatever was already produced.
//! Everything except the timing files is bit-identical across reruns.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::euler::{self, SolverConfig};
use crate::field::{read_dataset, write_dataset, Dataset};
use crate::infer::{evaluate, metrics_csv, rollout, RolloutConfig};
use crate::neural::{read_checkpoint, write_checkpoint, AdamConfig, ConvNet};
use crate::partition::{make_partition, PaddingStrategy, Partition};
use crate::pool::{available_workers, default_workers};
use crate::train::{train_parallel, train_parallel_with, TrainConfig, TrainReport};

/// One strong-scaling measurement: the same problem trained on `worker_count`
/// threads with one rank per worker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub worker_count: usize,
    pub rank_count: usize,
    pub grid_n: usize,
    pub total_train_seconds: f64,
    pub per_rank_max_seconds: f64,
    pub speedup: f64,
    pub efficiency: f64,
    pub oversubscribed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingResult {
    pub rows: Vec<ScalingRow>,
}

pub const SCALING_CSV_HEADER: &str = "worker_count,rank_count,grid_n,total_train_seconds,\
per_rank_max_seconds,speedup,efficiency,oversubscribed";

pub fn scaling_csv(result: &ScalingResult) -> String {
    let mut out = String::from(SCALING_CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.4},{:.4},{}\n",
            r.worker_count,
            r.rank_count,
            r.grid_n,
            r.total_train_seconds,
            r.per_rank_max_seconds,
            r.speedup,
            r.efficiency,
            r.oversubscribed
        ));
    }
    out
}

/// Arrange `w` ranks into a px x py grid with aspect ratio 1 or 2, the only
/// shapes that keep subdomains close to square. Valid counts are k^2 and
/// 2k^2: 1, 2, 4, 8, 9, 16, 18, 32...
pub fn worker_grid(w: usize) -> Result<(usize, usize)> {
    if w == 0 {
        return Err(Error::Config("worker count must be >= 1".into()));
    }
    let square = |n: usize| {
        let r = (n as f64).sqrt().round() as usize;
        (r * r == n).then_some(r)
    };
    if let Some(a) = square(w) {
        return Ok((a, a));
    }
    if w.is_multiple_of(2) {
        if let Some(a) = square(w / 2) {
            return Ok((2 * a, a));
        }
    }
    Err(Error::Config(format!(
        "worker count {w} cannot form a grid with aspect ratio 1 or 2 \
         (use a square or twice a square: 1, 2, 4, 8, 16, 18, 32, ...)"
    )))
}

/// Train the same dataset once per worker count, one rank per worker, and
/// measure the wall time of the parallel phase. The first entry must be the
/// single-worker baseline that anchors speedup and efficiency.
pub fn run_scaling(
    d: &Dataset,
    base: &TrainConfig,
    worker_counts: &[usize],
) -> Result<ScalingResult> {
    if worker_counts.first() != Some(&1) {
        return Err(Error::Config(
            "worker_counts must start with the 1-worker baseline".into(),
        ));
    }
    let mut rows = Vec::with_capacity(worker_counts.len());
    let mut baseline = 0.0;
    for &w in worker_counts {
        let (px, py) = worker_grid(w)?;
        let cfg = TrainConfig {
            px,
            py,
            ..base.clone()
        };
        let p = make_partition(d.h(), d.w(), px, py, cfg.strategy)?;
        let (_, report) = train_parallel_with(d, &p, &cfg, w)?;
        // Floor keeps the ratios finite if a degenerate run measures zero.
        let total = report.train_seconds.max(1e-12);
        if w == 1 {
            baseline = total;
        }
        rows.push(ScalingRow {
            worker_count: w,
            rank_count: p.n_ranks(),
            grid_n: d.h(),
            total_train_seconds: total,
            per_rank_max_seconds: report.seconds.values().cloned().fold(0.0, f64::max),
            speedup: baseline / total,
            efficiency: baseline / total / w as f64,
            oversubscribed: w > available_workers(),
        });
    }
    Ok(ScalingResult { rows })
}

/// `[generate]` section: simulation parameters for the truth dataset.
/// Defaults are the desk-scale problem (64 x 64, 300 frames).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSpec {
    pub n: usize,
    /// Total frames, the initial condition included.
    pub steps: usize,
    pub extent: f64,
    pub gamma: f64,
    pub rho_c: f64,
    pub p_c: f64,
    pub uc_x: f64,
    pub uc_y: f64,
    pub pulse_amp: f64,
    pub pulse_hw: f64,
    pub pulse_cx: f64,
    pub pulse_cy: f64,
    pub cfl: f64,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        let s = SolverConfig::default();
        GenerateSpec {
            n: 64,
            steps: 300,
            extent: s.extent,
            gamma: s.gamma,
            rho_c: s.rho_c,
            p_c: s.p_c,
            uc_x: s.uc_x,
            uc_y: s.uc_y,
            pulse_amp: s.pulse_amp,
            pulse_hw: s.pulse_hw,
            pulse_cx: s.pulse_cx,
            pulse_cy: s.pulse_cy,
            cfl: s.cfl,
        }
    }
}

impl GenerateSpec {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            n: self.n,
            t_steps: self.steps,
            extent: self.extent,
            gamma: self.gamma,
            rho_c: self.rho_c,
            p_c: self.p_c,
            uc_x: self.uc_x,
            uc_y: self.uc_y,
            pulse_amp: self.pulse_amp,
            pulse_hw: self.pulse_hw,
            pulse_cx: self.pulse_cx,
            pulse_cy: self.pulse_cy,
            cfl: self.cfl,
        }
    }
}

/// `[train]` section. Without an explicit `dataset` path the stage consumes
/// the `[generate]` output. Frame ranges follow the standard split: first
/// two thirds train, last third validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub dataset: Option<PathBuf>,
    pub px: usize,
    pub py: usize,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub strategy: PaddingStrategy,
    pub eta: f64,
    pub delta: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let t = TrainConfig::default();
        TrainSpec {
            dataset: None,
            px: t.px,
            py: t.py,
            epochs: 20,
            batch: t.batch_size,
            seed: t.seed,
            strategy: t.strategy,
            eta: adam.eta,
            delta: t.delta,
        }
    }
}

impl TrainSpec {
    pub fn train_config(&self, frames: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            strategy: self.strategy,
            adam: AdamConfig {
                eta: self.eta,
                ..AdamConfig::default()
            },
            delta: self.delta,
            px: self.px,
            py: self.py,
            ..TrainConfig::default()
        }
        .with_split_for(frames)
    }
}

/// `[infer]` section: roll the trained networks from `start_frame` (the
/// validation start when omitted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSpec {
    pub steps: usize,
    pub record_every: usize,
    pub start_frame: Option<usize>,
    pub timeout_secs: u64,
}

impl Default for InferSpec {
    fn default() -> Self {
        InferSpec {
            steps: 10,
            record_every: 1,
            start_frame: None,
            timeout_secs: 30,
        }
    }
}

/// `[compare]` section: error metrics of the rollout against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    pub delta: f64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec {
            delta: crate::neural::DEFAULT_MAPE_DELTA,
        }
    }
}

/// `[bench]` section: strong-scaling sweep over worker counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub workers: Vec<usize>,
    /// Epochs per measurement; the `[train]` epochs when omitted.
    pub epochs: Option<usize>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            workers: vec![1, 2, 4, 8],
            epochs: None,
        }
    }
}

/// A whole experiment. Absent sections are skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Manifest {
    pub generate: Option<GenerateSpec>,
    pub train: Option<TrainSpec>,
    pub infer: Option<InferSpec>,
    pub compare: Option<CompareSpec>,
    pub bench: Option<BenchSpec>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Read and parse a manifest, returning it with the hash of its raw bytes.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<(Manifest, String, Vec<u8>)> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&raw)
        .map_err(|_| Error::Manifest(format!("{} is not UTF-8", path.display())))?;
    let manifest =
        toml::from_str(text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let hash = sha256_hex(&raw);
    Ok((manifest, hash, raw))
}

/// What the runner reports back; also serialized as `report.json`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub manifest_sha256: String,
    pub stages: Vec<String>,
    pub train: Option<TrainReport>,
    pub rollout_messages: Option<u64>,
    pub scaling: Option<ScalingResult>,
}

fn stage<T>(out_dir: &Path, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| {
        let marker = out_dir.join(format!("FAILED_{name}.txt"));
        let _ = fs::write(&marker, format!("{e}\n"));
        e
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `config.json` contents: everything a later `infer` run needs to rebuild
/// the trained setup, plus the provenance hash when a manifest drove it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest_sha256: Option<String>,
    pub solver: Option<SolverConfig>,
    pub train: TrainConfig,
}

fn json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(|e| Error::Manifest(e.to_string()))?;
    buf.push(b'\n');
    Ok(buf)
}

/// Persist a finished training run: `config.json`, `partition.json`, one
/// `rank_NNNN.ckpt` per rank, `loss.csv`, and `timing.csv`. Only the timing
/// file depends on anything but the inputs.
pub fn write_train_artifacts(
    out_dir: &Path,
    run_config: &RunConfig,
    p: &Partition,
    nets: &BTreeMap<usize, ConvNet>,
    report: &TrainReport,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join("config.json"), json_pretty(run_config)?)?;
    write_file(&out_dir.join("partition.json"), json_pretty(p)?)?;
    for (rank, net) in nets {
        write_checkpoint(out_dir.join(format!("rank_{rank:04}.ckpt")), net, None)?;
    }
    let mut loss = String::from("rank,epoch,loss\n");
    for (rank, curve) in &report.loss_curves {
        for (epoch, value) in curve.iter().enumerate() {
            loss.push_str(&format!("{rank},{epoch},{value:.12e}\n"));
        }
    }
    write_file(&out_dir.join("loss.csv"), loss)?;
    let mut timing = String::from("rank,seconds\n");
    for (rank, secs) in &report.seconds {
        timing.push_str(&format!("{rank},{secs:.6}\n"));
    }
    write_file(&out_dir.join("timing.csv"), timing)
}

/// Load a training run directory back: the config, the partition, and every
/// rank's checkpointed network.
pub fn load_run_dir(
    run_dir: impl AsRef<Path>,
) -> Result<(RunConfig, Partition, BTreeMap<usize, ConvNet>)> {
    let run_dir = run_dir.as_ref();
    let config_path = run_dir.join("config.json");
    let config: RunConfig =
        serde_json::from_slice(&fs::read(&config_path).map_err(|e| Error::io(&config_path, e))?)
            .map_err(|e| Error::Manifest(format!("{}: {e}", config_path.display())))?;
    let part_path = run_dir.join("partition.json");
    let p: Partition =
        serde_json::from_slice(&fs::read(&part_path).map_err(|e| Error::io(&part_path, e))?)
            .map_err(|e| Error::Manifest(format!("{}: {e}", part_path.display())))?;
    let mut nets = BTreeMap::new();
    for spec in &p.ranks {
        let path = run_dir.join(format!("rank_{:04}.ckpt", spec.rank));
        nets.insert(spec.rank, read_checkpoint(path)?.net);
    }
    Ok((config, p, nets))
}

/// Execute a manifest into `out_dir`. Stages run in the fixed order
/// generate, train, infer, compare, bench; the first failure stops the run,
/// leaving a `FAILED_<stage>.txt` marker and all earlier artifacts intact.
pub fn run_experiment(
    manifest_path: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
) -> Result<RunReport> {
    let out_dir = out_dir.as_ref();
    let (manifest, hash, raw) = load_manifest(manifest_path)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(&out_dir.join("manifest.toml"), &raw)?;

    let mut report = RunReport {
        manifest_sha256: hash.clone(),
        ..RunReport::default()
    };
    let mut dataset: Option<Dataset> = None;
    let mut trained: Option<(Partition, BTreeMap<usize, ConvNet>, TrainConfig)> = None;
    let mut predicted: Option<(Dataset, usize, usize)> = None;

    if let Some(g) = &manifest.generate {
        stage(out_dir, "generate", || {
            let cfg = g.solver_config();
            let d = euler::run(&cfg)?;
            write_dataset(&d, out_dir.join("dataset.pdsh"))?;
            dataset = Some(d);
            Ok(())
        })?;
        report.stages.push("generate".into());
    }

    if let Some(t) = &manifest.train {
        stage(out_dir, "train", || {
            if dataset.is_none() {
                let path = t.dataset.as_ref().ok_or_else(|| {
                    Error::Config(
                        "[train] needs a [generate] section or an explicit dataset path".into(),
                    )
                })?;
                dataset = Some(read_dataset(path)?);
            }
            let d = dataset.as_ref().unwrap();
            let cfg = t.train_config(d.len());
            let p = make_partition(d.h(), d.w(), cfg.px, cfg.py, cfg.strategy)?;
            let (nets, train_report) = train_parallel(d, &p, &cfg)?;
            write_train_artifacts(
                out_dir,
                &RunConfig {
                    manifest_sha256: Some(hash.clone()),
                    solver: d.meta.clone(),
                    train: cfg.clone(),
                },
                &p,
                &nets,
                &train_report,
            )?;
            report.train = Some(train_report);
            trained = Some((p, nets, cfg));
            Ok(())
        })?;
        report.stages.push("train".into());
    }

    if let Some(i) = &manifest.infer {
        stage(out_dir, "infer", || {
            let (p, nets, cfg) = trained
                .as_ref()
                .ok_or_else(|| Error::Config("[infer] needs a [train] section".into()))?;
            let d = dataset.as_ref().unwrap();
            let start = i.start_frame.unwrap_or(cfg.val_range.start);
            if start >= d.len() {
                return Err(Error::Config(format!(
                    "start_frame {start} is outside the {}-frame dataset",
                    d.len()
                )));
            }
            let rcfg = RolloutConfig {
                steps: i.steps,
                record_every: i.record_every,
                exchange_timeout: Duration::from_secs(i.timeout_secs),
                dt: d.dt,
            };
            let (pred, ledger) = rollout(
                &d.frames[start],
                nets,
                p,
                &rcfg,
                default_workers(p.n_ranks()),
            )?;
            write_dataset(&pred, out_dir.join("pred.pdsh"))?;
            report.rollout_messages = Some(ledger.len() as u64);
            predicted = Some((pred, start, i.record_every));
            Ok(())
        })?;
        report.stages.push("infer".into());
    }

    if let Some(c) = &manifest.compare {
        stage(out_dir, "compare", || {
            let (pred, start, record_every) = predicted
                .as_ref()
                .ok_or_else(|| Error::Config("[compare] needs an [infer] section".into()))?;
            let d = dataset.as_ref().unwrap();
            // Line the truth up with the recorded frames.
            let picked: Vec<_> = (0..pred.len())
                .map(|k| start + k * record_every)
                .map(|idx| {
                    d.frames.get(idx).cloned().ok_or_else(|| {
                        Error::Config(format!("rollout frame {idx} has no matching truth frame"))
                    })
                })
                .collect::<Result<_>>()?;
            let truth = Dataset::new(picked, d.dt, None)?;
            let rows = evaluate(pred, &truth, 0, c.delta)?;
            write_file(&out_dir.join("metrics.csv"), metrics_csv(&rows))?;
            Ok(())
        })?;
        report.stages.push("compare".into());
    }

    if let Some(b) = &manifest.bench {
        stage(out_dir, "bench", || {
            let d = dataset
                .as_ref()
                .ok_or_else(|| Error::Config("[bench] needs a dataset".into()))?;
            let mut base = manifest
                .train
                .clone()
                .unwrap_or_default()
                .train_config(d.len());
            if let Some(epochs) = b.epochs {
                base.epochs = epochs;
            }
            let result = run_scaling(d, &base, &b.workers)?;
            write_file(&out_dir.join("scaling.csv"), scaling_csv(&result))?;
            report.scaling = Some(result);
            Ok(())
        })?;
        report.stages.push("bench".into());
    }

    write_file(&out_dir.join("report.json"), json_pretty(&report)?)?;
    Ok(report)
}
