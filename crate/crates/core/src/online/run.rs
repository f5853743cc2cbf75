//! Round-by-round simulation of the online learners.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use super::state::{serve_and_update, Confidence, ConfidenceVariant, CostBound, OnlineState};
use super::trace::{RegretTotals, RunSummary, RunTrace, TraceRow};
use crate::error::{Error, Result};
use crate::model::{Cache, LossModel, QueryId, QuerySpace};
use crate::solvers::{self, brute_force, curvature, reverse_greedy, reverse_greedy_randomized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Stage-based low-switching optimistic learner.
    ClcbScLs,
    /// Optimistic learner recomputing the cache every round.
    ClcbSc,
    /// Pessimistic learner recomputing the cache every round.
    CucbScOnline,
    /// Empirical costs with random removals, every round.
    EpsilonGreedyOnline,
    /// Clairvoyant top-k by true arrival probability, fixed for all rounds.
    LfuStatic,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::ClcbScLs,
        Algorithm::ClcbSc,
        Algorithm::CucbScOnline,
        Algorithm::EpsilonGreedyOnline,
        Algorithm::LfuStatic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ClcbScLs => "clcb-ls",
            Algorithm::ClcbSc => "clcb",
            Algorithm::CucbScOnline => "cucb",
            Algorithm::EpsilonGreedyOnline => "eps-greedy",
            Algorithm::LfuStatic => "lfu-static",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown online algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineParams {
    pub horizon: u64,
    pub delta: f64,
    pub confidence: ConfidenceVariant,
    pub epsilon_g: f64,
    pub noise_sigma: f64,
    /// Observe a realized cost on every round, not only on LLM calls.
    pub full_feedback: bool,
}

impl Default for OnlineParams {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            delta: 0.05,
            confidence: ConfidenceVariant::Algorithm,
            epsilon_g: 0.2,
            noise_sigma: crate::workload::DEFAULT_NOISE_SIGMA,
            full_feedback: false,
        }
    }
}

impl OnlineParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon T must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon_g) {
            return Err(Error::Config(format!(
                "epsilon_g must be in [0, 1], got {}",
                self.epsilon_g
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// How the regret benchmark `alpha * l(M*)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceMode {
    /// `alpha = 1`, `M*` by exhaustive search.
    #[default]
    BruteForce,
    /// `alpha` from the curvature, `M*` replaced by reverse greedy.
    Curvature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReference {
    pub mode: ReferenceMode,
    pub alpha: f64,
    pub cache: Cache,
    pub loss: f64,
}

impl RegretReference {
    pub fn compute(
        space: &QuerySpace,
        k: usize,
        mode: ReferenceMode,
        budget: u128,
    ) -> Result<Self> {
        let model = space.model();
        match mode {
            ReferenceMode::BruteForce => {
                let best = brute_force(&model, k, budget)?;
                Ok(Self {
                    mode,
                    alpha: 1.0,
                    cache: best.cache,
                    loss: best.loss,
                })
            }
            ReferenceMode::Curvature => {
                let alpha = curvature(&model)?.approx_ratio_alpha;
                if !alpha.is_finite() {
                    return Err(Error::Degenerate(
                        "curvature is 1, the approximation ratio is unbounded".into(),
                    ));
                }
                let rg = reverse_greedy(&model, k)?;
                Ok(Self {
                    mode,
                    alpha,
                    cache: rg.cache,
                    loss: rg.loss,
                })
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self.mode {
            ReferenceMode::BruteForce => "brute_force",
            ReferenceMode::Curvature => "reverse_greedy",
        }
    }

    /// Per-round benchmark loss `alpha * l(M_ref)`.
    pub fn scaled_loss(&self) -> f64 {
        self.alpha * self.loss
    }
}

/// Runs the stage-based low-switching learner.
pub fn run_clcb_sc_ls(
    space: &QuerySpace,
    k: usize,
    params: &OnlineParams,
    reference: &RegretReference,
    seed: u64,
) -> Result<RunTrace> {
    run_variant(space, k, Algorithm::ClcbScLs, params, reference, seed)
}

/// Runs any online algorithm for `params.horizon` rounds.
pub fn run_variant(
    space: &QuerySpace,
    k: usize,
    algo: Algorithm,
    params: &OnlineParams,
    reference: &RegretReference,
    seed: u64,
) -> Result<RunTrace> {
    params.validate()?;
    let m = space.m();
    if k == 0 || k > m {
        return Err(Error::Domain(format!(
            "cache size k = {k} must be in [1, {m}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrivals =
        WeightedIndex::new(space.arrival_probs()).map_err(|e| Error::Domain(e.to_string()))?;
    let confidence = Confidence {
        variant: params.confidence,
        m,
        horizon: params.horizon,
        delta: params.delta,
    };
    let dist = space.distances();
    let true_costs = space.costs();
    let true_model = space.model();
    let reference_loss = reference.scaled_loss();

    let mut state = OnlineState::new(m);
    let mut caches: Vec<Cache> = Vec::new();
    let mut rows = Vec::with_capacity(params.horizon as usize);
    let mut totals = RegretTotals::default();
    let mut current_loss = 0.0;

    for t in 1..=params.horizon {
        state.t = t;
        let q = QueryId(arrivals.sample(&mut rng));

        let proposal: Option<(Cache, Vec<f64>, Vec<f64>)> = match algo {
            Algorithm::ClcbScLs => {
                let switch = if t == 1 {
                    true
                } else if let Some(ready) = state.first_ready_query(params.horizon) {
                    state.advance_query_stage(ready);
                    true
                } else if state.should_switch_arrival(params.horizon) {
                    state.advance_arrival_stage();
                    true
                } else {
                    false
                };
                switch.then(|| {
                    let p = state.arrival_estimates();
                    let c = state.cost_estimates(CostBound::Lower(confidence));
                    let cache = reverse_greedy(&LossModel::new(&p, &c, dist), k)
                        .expect("k validated")
                        .cache;
                    (cache, p, c)
                })
            }
            Algorithm::ClcbSc | Algorithm::CucbScOnline | Algorithm::EpsilonGreedyOnline => {
                let p = state.arrival_estimates();
                let (bound, eps) = match algo {
                    Algorithm::ClcbSc => (CostBound::Lower(confidence), 0.0),
                    Algorithm::CucbScOnline => (CostBound::Upper(confidence), 0.0),
                    _ => (CostBound::Empirical, params.epsilon_g),
                };
                let c = state.cost_estimates(bound);
                let model = LossModel::new(&p, &c, dist);
                let cache = if eps > 0.0 {
                    reverse_greedy_randomized(&model, k, eps, &mut rng)?.cache
                } else {
                    reverse_greedy(&model, k)?.cache
                };
                Some((cache, p, c))
            }
            Algorithm::LfuStatic => (t == 1).then(|| {
                (
                    solvers::lfu_cache(space.arrival_probs(), k),
                    space.arrival_probs().to_vec(),
                    true_costs.to_vec(),
                )
            }),
        };

        let mut switch_cost = 0.0;
        let mut new_members = 0;
        let mut switched = false;
        if let Some((cache, p, c)) = proposal {
            switched = cache != state.cache;
            let outcome = state.install(cache, p, c, true_costs);
            if switched {
                switch_cost = outcome.switch_cost;
                new_members = outcome.new_members;
                current_loss = true_model.loss(&outcome.cache);
                caches.push(outcome.cache);
            }
        }
        debug_assert!(!caches.is_empty());

        let step = serve_and_update(
            &mut state,
            space,
            q,
            params.noise_sigma,
            params.full_feedback,
            &mut rng,
        );
        totals.add(current_loss, switch_cost, reference_loss);
        totals.switches += u64::from(switched);
        totals.llm_calls += u64::from(step.llm_called) + new_members as u64;
        rows.push(TraceRow {
            t,
            cache_index: caches.len() - 1,
            expected_loss: current_loss,
            switch_cost,
            new_members,
            llm_called: step.llm_called,
            realized_cost: step.realized_cost,
            switched,
        });
    }

    let summary = RunSummary {
        algo: algo.name().to_string(),
        m,
        k,
        horizon: params.horizon,
        seed,
        total_switches: totals.switches,
        total_llm_calls: totals.llm_calls,
        cum_regret: totals.cum_regret,
        avg_regret: totals.cum_regret / params.horizon as f64,
        cum_regret_no_switch: totals.cum_regret_no_switch,
    };
    Ok(RunTrace {
        reference_loss,
        caches,
        rows,
        summary,
    })
}
