//! Deterministic scoped worker pool.
//!
//! Jobs are assigned round-robin (job i runs on worker i mod w) and each
//! worker processes its jobs in index order, so any job-to-worker mapping
//! produces the same outputs: nothing downstream may depend on scheduling.

use crate::error::{Error, Result};

/// Hardware parallelism, falling back to 1 when unknown.
pub fn available_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Pool size for `jobs` jobs: hardware parallelism capped by the job count
/// and by the `PDESHARD_WORKERS` environment variable.
pub fn default_workers(jobs: usize) -> usize {
    let mut w = available_workers();
    if let Ok(raw) = std::env::var("PDESHARD_WORKERS") {
        if let Ok(cap) = raw.trim().parse::<usize>() {
            if cap >= 1 {
                w = w.min(cap);
            }
        }
    }
    w.clamp(1, jobs.max(1))
}

/// Run `jobs` fallible jobs over `workers` scoped threads and collect the
/// results in job order. A failing job surfaces as a worker failure naming
/// the job index (job index == rank id everywhere in this crate).
pub fn run_on_workers<T, F>(jobs: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if jobs == 0 {
        return Ok(Vec::new());
    }
    let workers = workers.clamp(1, jobs);
    let per_worker: Vec<Result<Vec<(usize, T)>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                s.spawn(move || {
                    let mut out = Vec::new();
                    let mut j = w;
                    while j < jobs {
                        match f(j) {
                            Ok(v) => out.push((j, v)),
                            Err(e) => {
                                return Err(Error::WorkerFailure {
                                    rank: j,
                                    source: Box::new(e),
                                })
                            }
                        }
                        j += workers;
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    let mut slots: Vec<Option<T>> = Vec::with_capacity(jobs);
    slots.resize_with(jobs, || None);
    for chunk in per_worker {
        for (j, v) in chunk? {
            slots[j] = Some(v);
        }
    }
    Ok(slots
        .into_iter()
        .map(|o| o.expect("every job index covered"))
        .collect())
}
