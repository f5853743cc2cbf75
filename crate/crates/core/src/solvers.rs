//! Cache optimization with known parameters.
//!
//! [`reverse_greedy`] starts from the full query set and repeatedly drops the
//! member whose removal increases the loss the least. Because the loss is
//! non-increasing and supermodular in the cache, the result is within the
//! curvature-dependent factor `(e^beta - 1) / beta` of the optimum, which
//! [`curvature`] computes. [`brute_force`] is the exact reference.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Cache, LossModel, LOSS_TOLERANCE};

/// Default cap on the number of subsets [`brute_force`] may evaluate.
pub const DEFAULT_BRUTE_FORCE_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub cache: Cache,
    /// Loss of `cache`, recomputed from scratch.
    pub loss: f64,
    /// Number of loss evaluations performed.
    pub evaluations: u64,
}

/// How the inner argmin of reverse greedy evaluates candidate removals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evaluation {
    /// Nearest/second-nearest bookkeeping, `O(m * |M|)` per step.
    #[default]
    Incremental,
    /// Full loss sum for every candidate.
    FromScratch,
}

/// Reverse greedy with incremental evaluation.
pub fn reverse_greedy(model: &LossModel<'_>, k: usize) -> Result<SolverResult> {
    reverse_greedy_with(model, k, Evaluation::Incremental)
}

pub fn reverse_greedy_with(
    model: &LossModel<'_>,
    k: usize,
    evaluation: Evaluation,
) -> Result<SolverResult> {
    run_reverse_greedy(model, k, evaluation, |_| None::<usize>)
}

/// Reverse greedy in which each removal step, with probability `epsilon`,
/// drops a uniformly random member instead of the argmin.
pub fn reverse_greedy_randomized<R: Rng + ?Sized>(
    model: &LossModel<'_>,
    k: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<SolverResult> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!(
            "epsilon must be in [0, 1], got {epsilon}"
        )));
    }
    run_reverse_greedy(model, k, Evaluation::Incremental, |len| {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            Some(rng.random_range(0..len))
        } else {
            None
        }
    })
}

fn run_reverse_greedy(
    model: &LossModel<'_>,
    k: usize,
    evaluation: Evaluation,
    mut random_pick: impl FnMut(usize) -> Option<usize>,
) -> Result<SolverResult> {
    let m = model.m();
    if k == 0 || k > m {
        return Err(Error::Domain(format!(
            "cache size k = {k} must be in [1, {m}]"
        )));
    }
    let mut members: Vec<usize> = (0..m).collect();
    let mut evaluations = 0u64;
    let mut scratch = Vec::with_capacity(m);
    let mut removal_losses = vec![0.0; m];

    while members.len() > k {
        if let Some(pos) = random_pick(members.len()) {
            members.remove(pos);
            continue;
        }
        match evaluation {
            Evaluation::Incremental => {
                removal_losses_incremental(model, &members, &mut removal_losses)
            }
            Evaluation::FromScratch => {
                for (pos, slot) in removal_losses.iter_mut().enumerate() {
                    scratch.clear();
                    scratch.extend(
                        members
                            .iter()
                            .enumerate()
                            .filter(|&(i, _)| i != pos)
                            .map(|(_, &u)| u),
                    );
                    *slot = model.loss_of(&scratch);
                }
            }
        }
        evaluations += members.len() as u64;
        members.remove(argmin_keep_low(&removal_losses[..members.len()]));
    }

    let cache = Cache::from_sorted_unchecked(members);
    let loss = model.loss(&cache);
    Ok(SolverResult {
        cache,
        loss,
        evaluations,
    })
}

/// Position of the cheapest removal. Members are sorted by index; values
/// within [`LOSS_TOLERANCE`] count as ties and the highest index is removed,
/// so that the surviving cache prefers low indices.
fn argmin_keep_low(losses: &[f64]) -> usize {
    let mut best = losses.len() - 1;
    for pos in (0..losses.len() - 1).rev() {
        if losses[pos] < losses[best] - LOSS_TOLERANCE {
            best = pos;
        }
    }
    best
}

/// Fills `out[pos]` with the loss of `members` minus `members[pos]`.
fn removal_losses_incremental(model: &LossModel<'_>, members: &[usize], out: &mut [f64]) {
    let m = model.m();
    let mut base = 0.0;
    out[..members.len()].iter_mut().for_each(|v| *v = 0.0);
    for q in 0..m {
        let row = model.dist.row(q);
        let mut best_pos = 0;
        let mut best = f64::INFINITY;
        let mut second = f64::INFINITY;
        for (pos, &u) in members.iter().enumerate() {
            let d = row[u];
            if d < best {
                second = best;
                best = d;
                best_pos = pos;
            } else if d < second {
                second = d;
            }
        }
        let c = model.c[q];
        let here = c.min(best);
        base += model.p[q] * here;
        // Only the nearest member's removal changes q's term.
        out[best_pos] += model.p[q] * (c.min(second) - here);
    }
    for v in &mut out[..members.len()] {
        *v += base;
    }
}

/// Exhaustive minimizer over all size-`k` caches.
///
/// Ties keep the lexicographically smallest member list.
pub fn brute_force(model: &LossModel<'_>, k: usize, budget: u128) -> Result<SolverResult> {
    let m = model.m();
    if k == 0 || k > m {
        return Err(Error::Domain(format!(
            "cache size k = {k} must be in [1, {m}]"
        )));
    }
    let subsets = binomial(m, k);
    if subsets > budget {
        return Err(Error::Capacity {
            m,
            k,
            subsets,
            budget,
        });
    }
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best = combo.clone();
    let mut best_loss = model.loss_of(&combo);
    let mut evaluations = 1u64;
    while next_combination(&mut combo, m) {
        let loss = model.loss_of(&combo);
        evaluations += 1;
        if loss < best_loss - LOSS_TOLERANCE {
            best_loss = loss;
            best.copy_from_slice(&combo);
        }
    }
    let cache = Cache::from_sorted_unchecked(best);
    let loss = model.loss(&cache);
    Ok(SolverResult {
        cache,
        loss,
        evaluations,
    })
}

/// Advances `combo` to the next k-subset of `0..m` in lexicographic order.
pub(crate) fn next_combination(combo: &mut [usize], m: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < m - k + i {
            combo[i] += 1;
            for j in (i + 1)..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureReport {
    pub curvature_c: f64,
    /// `c / (1 - c)`, infinite when `c = 1`.
    pub beta: f64,
    /// `(e^beta - 1) / beta`; 1 at `beta = 0`, infinite when `c = 1`.
    pub approx_ratio_alpha: f64,
}

impl CurvatureReport {
    pub fn from_curvature(c: f64) -> Self {
        let c = c.clamp(0.0, 1.0);
        let (beta, alpha) = if c >= 1.0 {
            (f64::INFINITY, f64::INFINITY)
        } else {
            let beta = c / (1.0 - c);
            let alpha = if beta == 0.0 {
                1.0
            } else {
                beta.exp_m1() / beta
            };
            (beta, alpha)
        };
        Self {
            curvature_c: c,
            beta,
            approx_ratio_alpha: alpha,
        }
    }
}

/// Curvature of the loss, `1 - min_q [l(Q\{q}) - l(Q)] / [l(0) - l({q})]`.
pub fn curvature(model: &LossModel<'_>) -> Result<CurvatureReport> {
    let m = model.m();
    if m < 2 {
        return Err(Error::Domain(format!("curvature needs m >= 2, got {m}")));
    }
    let all: Vec<usize> = (0..m).collect();
    let full_loss = model.loss_of(&all);
    let empty_loss = model.empty_loss();
    let mut ratio_min = f64::INFINITY;
    let mut without = Vec::with_capacity(m - 1);
    for q in 0..m {
        let denominator = empty_loss - model.loss_of(&[q]);
        if denominator <= 0.0 {
            return Err(Error::Degenerate(format!(
                "caching query {q} alone does not reduce the loss"
            )));
        }
        without.clear();
        without.extend(all.iter().copied().filter(|&u| u != q));
        let numerator = model.loss_of(&without) - full_loss;
        ratio_min = ratio_min.min(numerator / denominator);
    }
    // Snap round-off at the ends of [0, 1] so additive losses get alpha = 1 exactly.
    let mut c = 1.0 - ratio_min;
    if c.abs() < LOSS_TOLERANCE {
        c = 0.0;
    } else if (1.0 - c).abs() < LOSS_TOLERANCE {
        c = 1.0;
    }
    Ok(CurvatureReport::from_curvature(c))
}

/// The `k` most frequent queries; ties go to the lowest index.
pub fn lfu_cache(frequencies: &[f64], k: usize) -> Cache {
    let mut order: Vec<usize> = (0..frequencies.len()).collect();
    order.sort_by(|&a, &b| frequencies[b].total_cmp(&frequencies[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Cache::from_sorted_unchecked(order)
}
