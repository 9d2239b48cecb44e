//! Communication-free parallel training: every rank owns an independent
//! network, optimizer state, and data shard, and never talks to any other
//! rank. The defining property is instrumented: the process-wide message
//! counter must not move while training runs.

use std::collections::BTreeMap;
use std::ops::Range;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchange::global_message_count;
use crate::field::{Dataset, Tensor3};
use crate::neural::{
    init_network, mape_loss, pad_schedule, AdamConfig, AdamState, ConvNet, DEFAULT_MAPE_DELTA,
};
use crate::partition::{extract_core, extract_input, PaddingStrategy, Partition};
use crate::pool::{available_workers, default_workers, run_on_workers};

/// Everything a training run depends on. Serialized verbatim into the run
/// directory so results can be reproduced bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Frame indices whose successors are predicted during training; pair
    /// (t, t+1) is formed for every t in the range.
    pub train_range: Range<usize>,
    /// Frames held out for evaluation, directly after the training range.
    pub val_range: Range<usize>,
    pub seed: u64,
    pub strategy: PaddingStrategy,
    pub adam: AdamConfig,
    /// MAPE denominator regularizer.
    pub delta: f64,
    pub px: usize,
    pub py: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            train_range: 0..1000,
            val_range: 1000..1500,
            seed: 0,
            strategy: PaddingStrategy::ZeroInner,
            adam: AdamConfig::default(),
            delta: DEFAULT_MAPE_DELTA,
            px: 2,
            py: 2,
        }
    }
}

impl TrainConfig {
    /// Set the frame split to the standard first-two-thirds / last-third
    /// proportions for a dataset of `frames` frames.
    pub fn with_split_for(mut self, frames: usize) -> Self {
        let cut = frames * 2 / 3;
        self.train_range = 0..cut;
        self.val_range = cut..frames;
        self
    }

    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        let checks = [
            (self.batch_size >= 1, "batch_size must be >= 1".to_string()),
            (self.px >= 1 && self.py >= 1, "px, py must be >= 1".into()),
            (self.delta > 0.0, "delta must be > 0".into()),
            (
                self.train_range.start < self.train_range.end,
                "train_range must be non-empty".into(),
            ),
            (
                self.train_range.end <= self.val_range.start,
                format!(
                    "train_range {:?} overlaps val_range {:?}",
                    self.train_range, self.val_range
                ),
            ),
            (
                self.val_range.end <= dataset_len,
                format!(
                    "val_range {:?} exceeds the {dataset_len}-frame dataset",
                    self.val_range
                ),
            ),
            (
                self.train_range.end < dataset_len,
                format!(
                    "train_range {:?} leaves no target frame in a {dataset_len}-frame dataset",
                    self.train_range
                ),
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg));
            }
        }
        self.adam.validate()
    }
}

/// One training sample: the halo-extended view of frame t and the core of
/// frame t+1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    pub input: Tensor3,
    pub target: Tensor3,
}

/// All of one rank's training samples.
pub type RankShard = Vec<TrainPair>;

fn check_partition(d: &Dataset, p: &Partition, cfg: &TrainConfig) -> Result<()> {
    if p.global_h != d.h() || p.global_w != d.w() {
        return Err(Error::ShapeMismatch(format!(
            "partition covers {}x{}, dataset frames are {}x{}",
            p.global_h,
            p.global_w,
            d.h(),
            d.w()
        )));
    }
    if p.px != cfg.px || p.py != cfg.py || p.strategy != cfg.strategy {
        return Err(Error::Config(format!(
            "partition ({}x{}, {}) disagrees with config ({}x{}, {})",
            p.px, p.py, p.strategy, cfg.px, cfg.py, cfg.strategy
        )));
    }
    Ok(())
}

/// Cut every rank's (input, target) pairs out of the dataset: one pair per
/// training-range frame, indexed by rank.
pub fn shard_dataset(d: &Dataset, p: &Partition, cfg: &TrainConfig) -> Result<Vec<RankShard>> {
    cfg.validate(d.len())?;
    check_partition(d, p, cfg)?;
    let halo = p.halo;
    p.ranks
        .iter()
        .map(|spec| {
            cfg.train_range
                .clone()
                .map(|t| {
                    Ok(TrainPair {
                        input: extract_input(d.frames[t].fields(), spec, halo)?,
                        target: extract_core(d.frames[t + 1].fields(), spec)?,
                    })
                })
                .collect()
        })
        .collect()
}

/// Train one rank's network on its shard. Each epoch shuffles the pairs
/// with the rank-seeded RNG, groups them into batches, averages the batch
/// gradient, and takes one optimizer step per batch. Returns the trained
/// network and the per-epoch mean training loss.
pub fn train_rank(
    shard: &RankShard,
    net: ConvNet,
    cfg: &TrainConfig,
    rank: usize,
) -> Result<(ConvNet, Vec<f64>)> {
    if shard.is_empty() {
        return Err(Error::Config(format!("rank {rank} has an empty shard")));
    }
    let mut net = net;
    let pads = pad_schedule(cfg.strategy, net.n_layers());
    let mut params = net.params();
    let mut adam = AdamState::new(params.len(), cfg.adam)?;
    // Stream 1 keeps the shuffle sequence independent of the weight-init
    // draws made from the same per-rank seed.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ rank as u64);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut grad_acc = vec![0.0; params.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad_acc.fill(0.0);
            for &i in batch {
                let pair = &shard[i];
                let (pred, caches) = net.forward_cached(&pair.input, &pads)?;
                let (loss, grad_pred) = mape_loss(&pred, &pair.target, cfg.delta)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "training loss on rank {rank}, epoch {epoch}, batch {batch_idx}"
                    )));
                }
                epoch_loss += loss;
                let grads = net.backward(&caches, &grad_pred, &pads)?;
                for (acc, g) in grad_acc.iter_mut().zip(&grads) {
                    *acc += g;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in grad_acc.iter_mut() {
                *g *= inv;
            }
            adam.step(&mut params, &grad_acc)?;
            net.set_params(&params)?;
        }
        curve.push(epoch_loss / shard.len() as f64);
    }
    Ok((net, curve))
}

/// What a training run measured about itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Per-rank mean training loss per epoch, percent.
    pub loss_curves: BTreeMap<usize, Vec<f64>>,
    /// Per-rank training wall time, seconds.
    pub seconds: BTreeMap<usize, f64>,
    /// Rank-to-rank messages observed while training ran; always 0.
    pub messages: u64,
    pub workers: usize,
    /// True when more workers were requested than hardware threads exist.
    pub oversubscribed: bool,
    /// Wall time spent cutting shards, excluded from training time.
    pub shard_seconds: f64,
    /// Wall time of the parallel training phase alone.
    pub train_seconds: f64,
}

/// Train every rank of the partition independently on `workers` threads.
/// The result is bit-identical for any worker count.
pub fn train_parallel_with(
    d: &Dataset,
    p: &Partition,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<(BTreeMap<usize, ConvNet>, TrainReport)> {
    let shard_start = Instant::now();
    let shards = shard_dataset(d, p, cfg)?;
    let shard_seconds = shard_start.elapsed().as_secs_f64();

    let messages_before = global_message_count();
    let train_start = Instant::now();
    let trained = run_on_workers(p.n_ranks(), workers, |rank| {
        let start = Instant::now();
        let net = init_network(cfg.seed ^ rank as u64);
        let (net, curve) = train_rank(&shards[rank], net, cfg, rank)?;
        Ok((net, curve, start.elapsed().as_secs_f64()))
    })?;
    let train_seconds = train_start.elapsed().as_secs_f64();
    let messages = global_message_count() - messages_before;

    let mut nets = BTreeMap::new();
    let mut loss_curves = BTreeMap::new();
    let mut seconds = BTreeMap::new();
    for (rank, (net, curve, secs)) in trained.into_iter().enumerate() {
        nets.insert(rank, net);
        loss_curves.insert(rank, curve);
        seconds.insert(rank, secs);
    }
    Ok((
        nets,
        TrainReport {
            loss_curves,
            seconds,
            messages,
            workers,
            oversubscribed: workers > available_workers(),
            shard_seconds,
            train_seconds,
        },
    ))
}

/// [`train_parallel_with`] at the default pool size (hardware parallelism
/// capped by PDESHARD_WORKERS and the rank count).
pub fn train_parallel(
    d: &Dataset,
    p: &Partition,
    cfg: &TrainConfig,
) -> Result<(BTreeMap<usize, ConvNet>, TrainReport)> {
    train_parallel_with(d, p, cfg, default_workers(p.n_ranks()))
}
