//! Parallel inference, the only phase in which ranks communicate. Each
//! bulk-synchronous step exchanges halo strips point to point, rebuilds
//! every rank's padded local view, and applies that rank's own network.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exchange::{exchange_cores, LedgerEntry};
use crate::field::{Dataset, Snapshot, Tensor3, CHANNEL_NAMES};
use crate::neural::{halo_width, ConvNet, PadMode, DEFAULT_MAPE_DELTA};
use crate::partition::{assemble, build_local_input, split_cores, Partition};
use crate::pool::run_on_workers;

/// How far to roll the learned stepper and what to keep.
#[derive(Debug, Clone)]
pub struct RolloutConfig {
    pub steps: usize,
    /// Keep every n-th predicted frame (the initial state is always kept).
    pub record_every: usize,
    /// How long a rank waits for a missing halo message before giving up.
    pub exchange_timeout: Duration,
    /// Time-step size stamped onto the predicted dataset.
    pub dt: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            steps: 1,
            record_every: 1,
            exchange_timeout: Duration::from_secs(30),
            dt: 1.0,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_nets(nets: &BTreeMap<usize, ConvNet>, p: &Partition, channels: usize) -> Result<()> {
    for spec in &p.ranks {
        let net = nets.get(&spec.rank).ok_or(Error::MissingRank(spec.rank))?;
        if net.in_ch() != channels {
            return Err(Error::ShapeMismatch(format!(
                "rank {} network takes {} channels, state has {channels}",
                spec.rank,
                net.in_ch()
            )));
        }
        let need = halo_width(net, p.strategy);
        if need != p.halo {
            return Err(Error::Config(format!(
                "rank {} network needs a {need}-cell halo, partition carries {}",
                spec.rank, p.halo
            )));
        }
    }
    Ok(())
}

/// Advance every rank's core by one step: exchange strips, pad, predict.
/// Returns the new cores plus the ledger of the exchange.
pub fn predict_step_parallel(
    cores: &BTreeMap<usize, Tensor3>,
    nets: &BTreeMap<usize, ConvNet>,
    p: &Partition,
    step: usize,
    timeout: Duration,
    workers: usize,
) -> Result<(BTreeMap<usize, Tensor3>, Vec<LedgerEntry>)> {
    let channels = cores
        .values()
        .next()
        .map(Tensor3::c)
        .ok_or(Error::MissingRank(0))?;
    check_nets(nets, p, channels)?;
    let (received, ledger) = exchange_cores(cores, p, step, timeout, workers)?;
    let outputs = run_on_workers(p.n_ranks(), workers, |rank| {
        let input = build_local_input(&cores[&rank], &received[rank], p.halo)?;
        let out = crate::neural::net_forward(&input, &nets[&rank], p.strategy)?;
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "prediction on rank {rank} at step {step}"
            )));
        }
        Ok(out)
    })?;
    Ok((outputs.into_iter().enumerate().collect(), ledger))
}

/// Roll the learned stepper forward from `initial`. Frame 0 of the result
/// is the initial state; afterwards every `record_every`-th step is kept.
/// All exchanges are accounted for in the returned ledger.
pub fn rollout(
    initial: &Snapshot,
    nets: &BTreeMap<usize, ConvNet>,
    p: &Partition,
    cfg: &RolloutConfig,
    workers: usize,
) -> Result<(Dataset, Vec<LedgerEntry>)> {
    cfg.validate()?;
    for spec in &p.ranks {
        let net = nets.get(&spec.rank).ok_or(Error::MissingRank(spec.rank))?;
        if net.out_ch() != net.in_ch() {
            return Err(Error::ShapeMismatch(format!(
                "rank {} network maps {} channels to {}, cannot be iterated",
                spec.rank,
                net.in_ch(),
                net.out_ch()
            )));
        }
    }
    let mut cores = split_cores(initial.fields(), p)?;
    let mut frames = vec![initial.clone()];
    let mut ledger = Vec::new();
    for step in 1..=cfg.steps {
        let (next, entries) =
            predict_step_parallel(&cores, nets, p, step, cfg.exchange_timeout, workers)?;
        cores = next;
        ledger.extend(entries);
        if step % cfg.record_every == 0 {
            frames.push(Snapshot::new(assemble(&cores, p)?)?);
        }
    }
    Ok((Dataset::new(frames, cfg.dt, None)?, ledger))
}

/// Single-process reference predictor: pad every layer in place of any
/// halo machinery, so the output keeps the input's size.
pub fn predict_monolithic(state: &Snapshot, net: &ConvNet) -> Result<Snapshot> {
    let pads = vec![PadMode::ZeroSame; net.n_layers()];
    Snapshot::new(net.forward(state.fields(), &pads)?)
}

/// Per-frame, per-channel comparison row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub step: usize,
    pub channel: &'static str,
    pub mape_percent: f64,
    pub max_abs_err: f64,
}

/// Compare predicted frames against the truth, aligning prediction frame i
/// with truth frame `offset + i`. One row per frame and channel.
pub fn evaluate(
    pred: &Dataset,
    truth: &Dataset,
    offset: usize,
    delta: f64,
) -> Result<Vec<EvalRow>> {
    if delta <= 0.0 {
        return Err(Error::Config("delta must be > 0".into()));
    }
    if pred.h() != truth.h() || pred.w() != truth.w() {
        return Err(Error::ShapeMismatch(format!(
            "prediction frames are {}x{}, truth frames are {}x{}",
            pred.h(),
            pred.w(),
            truth.h(),
            truth.w()
        )));
    }
    if offset + pred.len() > truth.len() {
        return Err(Error::Config(format!(
            "{} predicted frames at offset {offset} overrun the {}-frame truth",
            pred.len(),
            truth.len()
        )));
    }
    let m = (pred.h() * pred.w()) as f64;
    let mut rows = Vec::with_capacity(pred.len() * CHANNEL_NAMES.len());
    for (step, p_frame) in pred.frames.iter().enumerate() {
        let t_frame = &truth.frames[offset + step];
        for (c, name) in CHANNEL_NAMES.iter().enumerate() {
            let mut sum = 0.0;
            let mut max_abs = 0.0f64;
            for (pv, tv) in p_frame
                .fields()
                .channel(c)
                .iter()
                .zip(t_frame.fields().channel(c))
            {
                let err = (pv - tv).abs();
                sum += err / (tv.abs() + delta);
                max_abs = max_abs.max(err);
            }
            rows.push(EvalRow {
                step,
                channel: name,
                mape_percent: 100.0 * sum / m,
                max_abs_err: max_abs,
            });
        }
    }
    Ok(rows)
}

/// Same as [`evaluate`] with the default denominator floor.
pub fn evaluate_default(pred: &Dataset, truth: &Dataset, offset: usize) -> Result<Vec<EvalRow>> {
    evaluate(pred, truth, offset, DEFAULT_MAPE_DELTA)
}

pub const METRICS_CSV_HEADER: &str = "step,channel,mape_percent,max_abs_err";

/// Render comparison rows as CSV, header included.
pub fn metrics_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.12e},{:.12e}\n",
            r.step, r.channel, r.mape_percent, r.max_abs_err
        ));
    }
    out
}
