//! Learning a cache from logged interactions.
//!
//! Each logged round records the cache in force, the arriving query and, when
//! the LLM was called, the realized serving cost. [`estimate`] turns a log into
//! empirical arrival frequencies and cost means with confidence bounds;
//! [`cucb_sc`] then solves with the pessimistic (upper) cost bounds.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cache, DistanceMatrix, LossModel, QueryId, QuerySpace};
use crate::solvers::{self, brute_force, reverse_greedy, reverse_greedy_randomized};

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineRecord {
    pub round: u64,
    pub cache: Cache,
    pub query: QueryId,
    /// `None` when the cached response was served.
    pub observed_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineEstimates {
    pub n: usize,
    pub arrivals: Vec<u64>,
    pub cost_feedback: Vec<u64>,
    pub p_hat: Vec<f64>,
    pub c_hat: Vec<f64>,
    /// Upper confidence bound on the cost, clipped to `[0, 1]`.
    pub c_upper: Vec<f64>,
    /// Lower confidence bound on the cost, clipped to `[0, 1]`.
    pub c_lower: Vec<f64>,
}

/// Confidence radius `sqrt(log(6 m n / delta) / (2 N_c))`.
pub fn offline_radius(m: usize, n: usize, delta: f64, feedback: u64) -> f64 {
    let log_term = (6.0 * m as f64 * n as f64 / delta).ln();
    (log_term / (2.0 * feedback as f64)).sqrt()
}

pub fn estimate(dataset: &[OfflineRecord], m: usize, delta: f64) -> Result<OfflineEstimates> {
    if dataset.is_empty() {
        return Err(Error::Domain("offline dataset is empty".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    let n = dataset.len();
    let mut arrivals = vec![0u64; m];
    let mut cost_feedback = vec![0u64; m];
    let mut cost_sum = vec![0.0; m];
    for record in dataset {
        let q = record.query.index();
        if q >= m {
            return Err(Error::Domain(format!(
                "record {} has query {q} out of range for m = {m}",
                record.round
            )));
        }
        arrivals[q] += 1;
        if let Some(cost) = record.observed_cost {
            cost_feedback[q] += 1;
            cost_sum[q] += cost;
        }
    }

    let p_hat = arrivals.iter().map(|&a| a as f64 / n as f64).collect();
    let mut c_hat = vec![0.0; m];
    let mut c_upper = vec![1.0; m];
    let mut c_lower = vec![0.0; m];
    for q in 0..m {
        if cost_feedback[q] == 0 {
            continue;
        }
        c_hat[q] = cost_sum[q] / cost_feedback[q] as f64;
        let radius = offline_radius(m, n, delta, cost_feedback[q]);
        c_upper[q] = (c_hat[q] + radius).clamp(0.0, 1.0);
        c_lower[q] = (c_hat[q] - radius).clamp(0.0, 1.0);
    }
    Ok(OfflineEstimates {
        n,
        arrivals,
        cost_feedback,
        p_hat,
        c_hat,
        c_upper,
        c_lower,
    })
}

/// Pessimistic learner: reverse greedy on `(p_hat, c_upper)`.
pub fn cucb_sc(
    dataset: &[OfflineRecord],
    dist: &DistanceMatrix,
    k: usize,
    delta: f64,
) -> Result<Cache> {
    let est = estimate(dataset, dist.len(), delta)?;
    let model = LossModel::new(&est.p_hat, &est.c_upper, dist);
    Ok(reverse_greedy(&model, k)?.cache)
}

/// Optimistic variant: reverse greedy on `(p_hat, c_lower)`.
pub fn clcb_sc_offline(
    dataset: &[OfflineRecord],
    dist: &DistanceMatrix,
    k: usize,
    delta: f64,
) -> Result<Cache> {
    let est = estimate(dataset, dist.len(), delta)?;
    let model = LossModel::new(&est.p_hat, &est.c_lower, dist);
    Ok(reverse_greedy(&model, k)?.cache)
}

/// Reverse greedy on `(p_hat, c_hat)` with random removals at rate `epsilon_g`.
pub fn epsilon_greedy_offline(
    dataset: &[OfflineRecord],
    dist: &DistanceMatrix,
    k: usize,
    epsilon_g: f64,
    rng_seed: u64,
) -> Result<Cache> {
    // delta only shapes the bounds, which this learner ignores.
    let est = estimate(dataset, dist.len(), 0.05)?;
    let model = LossModel::new(&est.p_hat, &est.c_hat, dist);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(reverse_greedy_randomized(&model, k, epsilon_g, &mut rng)?.cache)
}

/// Frequency baseline: the `k` most frequently logged queries.
pub fn lfu_offline(dataset: &[OfflineRecord], m: usize, k: usize) -> Result<Cache> {
    let est = estimate(dataset, m, 0.05)?;
    Ok(solvers::lfu_cache(&est.p_hat, k))
}

/// `l(cache) - alpha * l(M*)` with `M*` found by brute force at `cache`'s
/// capacity `k`.
pub fn suboptimality_gap(
    space: &QuerySpace,
    cache: &Cache,
    k: usize,
    alpha: f64,
    budget: u128,
) -> Result<f64> {
    let optimum = brute_force(&space.model(), k, budget)?;
    Ok(gap_against(space, cache, alpha, optimum.loss))
}

pub fn gap_against(space: &QuerySpace, cache: &Cache, alpha: f64, optimal_loss: f64) -> f64 {
    space.model().loss(cache) - alpha * optimal_loss
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    t: u64,
    cache: Vec<usize>,
    q: usize,
    cost: Option<f64>,
}

/// Writes one JSON object per record: `{"t", "cache", "q", "cost"}`.
pub fn write_jsonl<W: Write>(mut out: W, dataset: &[OfflineRecord]) -> Result<()> {
    for r in dataset {
        let line = RecordLine {
            t: r.round,
            cache: r.cache.indices().collect(),
            q: r.query.index(),
            cost: r.observed_cost,
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON-lines dataset over a universe of `m` queries.
pub fn read_jsonl<R: BufRead>(input: R, m: usize, source_name: &str) -> Result<Vec<OfflineRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let loc = |field: &str| format!("line {lineno}, field {field:?}");
        let raw: RecordLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(source_name, format!("line {lineno}"), e.to_string()))?;
        if raw.q >= m {
            return Err(Error::parse(
                source_name,
                loc("q"),
                format!("query {} out of range for m = {m}", raw.q),
            ));
        }
        if let Some(c) = raw.cost {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::parse(
                    source_name,
                    loc("cost"),
                    format!("cost {c} outside (0, 1]"),
                ));
            }
        }
        let cache = Cache::from_indices(raw.cache, m)
            .map_err(|e| Error::parse(source_name, loc("cache"), e.to_string()))?;
        records.push(OfflineRecord {
            round: raw.t,
            cache,
            query: QueryId(raw.q),
            observed_cost: raw.cost,
        });
    }
    Ok(records)
}
