//! Point-to-point halo exchange between ranks.
//!
//! Each rank pushes its outgoing strips directly into its neighbors'
//! mailboxes (one mpsc channel per rank); the orchestrator only creates the
//! channels and never reads field data. A step is bulk-synchronous: every
//! send completes before any mailbox is drained, and a drain that comes up
//! short names the missing edge instead of deadlocking. No broadcast or
//! reduction primitive exists anywhere in this crate.
//!
//! Every send increments a process-wide counter; training runs assert a
//! zero delta over it.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Tensor3;
use crate::partition::{halo_strips, Direction, Partition, StripMap, SubdomainSpec};
use crate::pool::run_on_workers;

static MESSAGES: AtomicU64 = AtomicU64::new(0);

/// Rank-to-rank field messages this process has sent since start.
pub fn global_message_count() -> u64 {
    MESSAGES.load(Ordering::SeqCst)
}

/// Serializes tests that assert on deltas of the global message counter.
#[cfg(test)]
pub(crate) static COUNTER_LOCK: std::sync::Mutex<()> = std::sync::Mutex::new(());

/// One recorded message: `from` sent its `direction`-side strip of `cells`
/// cells (per channel) to `to`. Direction is the sender's travel direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerEntry {
    pub step: usize,
    pub from: usize,
    pub to: usize,
    pub direction: Direction,
    pub cells: usize,
}

struct Envelope {
    from: usize,
    /// Where the sender sits from the receiver's point of view.
    direction: Direction,
    strip: Tensor3,
}

fn drain_mailbox(
    rx: &Receiver<Envelope>,
    spec: &SubdomainSpec,
    timeout: Duration,
) -> Result<StripMap> {
    let expected = spec.neighbors.count();
    let mut received = BTreeMap::new();
    for _ in 0..expected {
        match rx.recv_timeout(timeout) {
            Ok(env) => {
                if spec.neighbors.get(env.direction) != Some(env.from) {
                    return Err(Error::Config(format!(
                        "rank {} received a strip from rank {} labeled {}, which is not \
                         that neighbor",
                        spec.rank, env.from, env.direction
                    )));
                }
                if received.insert(env.direction, env.strip).is_some() {
                    return Err(Error::Config(format!(
                        "rank {} received duplicate {} strips",
                        spec.rank, env.direction
                    )));
                }
            }
            Err(_) => break,
        }
    }
    for (dir, neighbor) in spec.neighbors.present() {
        if !received.contains_key(&dir) {
            return Err(Error::MissingHaloMessage {
                from: neighbor,
                to: spec.rank,
                direction: dir,
            });
        }
    }
    Ok(received)
}

/// Exchange halo strips of the given core-sized states. Returns the strips
/// each rank received, keyed by the neighbor's direction, plus the ledger
/// of every message sent. Physical boundaries receive nothing (their halo
/// cells stay zero downstream).
pub fn exchange_cores(
    states: &BTreeMap<usize, Tensor3>,
    p: &Partition,
    step: usize,
    timeout: Duration,
    workers: usize,
) -> Result<(Vec<StripMap>, Vec<LedgerEntry>)> {
    let n = p.n_ranks();
    for spec in &p.ranks {
        if !states.contains_key(&spec.rank) {
            return Err(Error::MissingRank(spec.rank));
        }
    }
    let (txs, rxs): (Vec<Sender<Envelope>>, Vec<Receiver<Envelope>>) =
        (0..n).map(|_| channel()).unzip();

    // Send phase: every rank cuts its strips and posts them straight to the
    // neighbors' mailboxes.
    let ledger_per_rank: Vec<Vec<LedgerEntry>> = run_on_workers(n, workers, |r| {
        let spec = &p.ranks[r];
        let strips = halo_strips(&states[&r], p.halo)?;
        let mut sent = Vec::new();
        for (dir, neighbor) in spec.neighbors.present() {
            let strip = strips[&dir].clone();
            let cells = strip.h() * strip.w();
            txs[neighbor]
                .send(Envelope {
                    from: r,
                    direction: dir.mirror(),
                    strip,
                })
                .map_err(|_| Error::Config(format!("mailbox of rank {neighbor} closed")))?;
            MESSAGES.fetch_add(1, Ordering::SeqCst);
            sent.push(LedgerEntry {
                step,
                from: r,
                to: neighbor,
                direction: dir,
                cells,
            });
        }
        Ok(sent)
    })?;
    // All sends are done; closing the senders turns any genuinely missing
    // message into an immediate error rather than a timeout wait.
    drop(txs);

    let mut received = Vec::with_capacity(n);
    for (spec, rx) in p.ranks.iter().zip(&rxs) {
        received.push(drain_mailbox(rx, spec, timeout)?);
    }
    Ok((received, ledger_per_rank.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{
        build_local_input, extract_input, make_partition, split_cores, PaddingStrategy,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(c: usize, h: usize, w: usize, seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor3::from_vec(c, h, w, data).unwrap()
    }

    const TIMEOUT: Duration = Duration::from_secs(5);

    #[test]
    fn two_by_two_sends_twelve_messages() {
        let _guard = COUNTER_LOCK.lock().unwrap_or_else(|e| e.into_inner());
        let t = random_tensor(4, 8, 8, 1);
        let p = make_partition(8, 8, 2, 2, PaddingStrategy::ZeroInner).unwrap();
        let states = split_cores(&t, &p).unwrap();
        let before = global_message_count();
        let (_, ledger) = exchange_cores(&states, &p, 0, TIMEOUT, 2).unwrap();
        // Each corner rank of a 2x2 grid has 3 neighbors: 4 * 3 directed
        // messages in total.
        assert_eq!(ledger.len(), 12);
        assert_eq!(ledger.len(), p.messages_per_step());
        assert_eq!(global_message_count() - before, 12);
    }

    #[test]
    fn three_by_three_message_count_matches_topology() {
        let t = random_tensor(4, 12, 12, 2);
        let p = make_partition(12, 12, 3, 3, PaddingStrategy::ZeroInner).unwrap();
        let states = split_cores(&t, &p).unwrap();
        let (_, ledger) = exchange_cores(&states, &p, 0, TIMEOUT, 3).unwrap();
        // 4 corners x 3 + 4 edges x 5 + 1 center x 8.
        assert_eq!(ledger.len(), 40);
        assert_eq!(ledger.len(), p.messages_per_step());
    }

    #[test]
    fn single_rank_exchanges_nothing() {
        let t = random_tensor(4, 8, 8, 3);
        let p = make_partition(8, 8, 1, 1, PaddingStrategy::ExactHalo).unwrap();
        let states = split_cores(&t, &p).unwrap();
        let (received, ledger) = exchange_cores(&states, &p, 0, TIMEOUT, 1).unwrap();
        assert!(ledger.is_empty());
        assert!(received[0].is_empty());
    }

    #[test]
    fn exchange_reproduces_the_training_view() {
        let t = random_tensor(4, 16, 16, 4);
        let p = make_partition(16, 16, 2, 2, PaddingStrategy::ExactHalo).unwrap();
        let states = split_cores(&t, &p).unwrap();
        let (received, _) = exchange_cores(&states, &p, 0, TIMEOUT, 4).unwrap();
        for spec in &p.ranks {
            let built =
                build_local_input(&states[&spec.rank], &received[spec.rank], p.halo).unwrap();
            let want = extract_input(&t, spec, p.halo).unwrap();
            assert_eq!(built, want, "rank {}", spec.rank);
        }
    }

    #[test]
    fn every_message_has_a_mirror_of_equal_size() {
        let t = random_tensor(4, 12, 12, 5);
        let p = make_partition(12, 12, 3, 3, PaddingStrategy::ZeroInner).unwrap();
        let states = split_cores(&t, &p).unwrap();
        let (_, ledger) = exchange_cores(&states, &p, 7, TIMEOUT, 2).unwrap();
        for entry in &ledger {
            let twin = ledger
                .iter()
                .find(|e| {
                    e.from == entry.to
                        && e.to == entry.from
                        && e.direction == entry.direction.mirror()
                })
                .expect("mirror message exists");
            assert_eq!(twin.cells, entry.cells);
            assert_eq!(twin.step, 7);
        }
    }

    #[test]
    fn missing_message_names_the_edge() {
        let p = make_partition(8, 8, 2, 1, PaddingStrategy::ZeroInner).unwrap();
        // Rank 0 expects one envelope from rank 1 (its east neighbor) but the
        // sender never posts it.
        let (tx, rx) = channel::<Envelope>();
        drop(tx);
        let err = drain_mailbox(&rx, &p.ranks[0], Duration::from_millis(10)).unwrap_err();
        match err {
            Error::MissingHaloMessage {
                from,
                to,
                direction,
            } => {
                assert_eq!((from, to, direction), (1, 0, Direction::E));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mislabeled_sender_rejected() {
        let p = make_partition(8, 8, 2, 1, PaddingStrategy::ZeroInner).unwrap();
        let (tx, rx) = channel::<Envelope>();
        tx.send(Envelope {
            from: 9,
            direction: Direction::E,
            strip: Tensor3::zeros(4, 4, 2),
        })
        .unwrap();
        let err = drain_mailbox(&rx, &p.ranks[0], Duration::from_millis(10)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
