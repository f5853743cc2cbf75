//! Counters and stage bookkeeping of the low-switching learner.

use rand::Rng;

use crate::model::{Cache, DistanceMatrix, LossModel, QueryId, QuerySpace};
use crate::solvers::reverse_greedy;
use crate::workload::realize_cost;

/// Which confidence radius the online learners use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConfidenceVariant {
    /// `sqrt(log(4 m T^3) / (2 N_c))`.
    #[default]
    Algorithm,
    /// `sqrt(2 log(4 m T / delta) / N_c)`.
    Text,
    /// `sqrt(log(2 m T^2 / delta) / (2 N_c))`.
    Lemma,
}

impl std::str::FromStr for ConfidenceVariant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alg" => Ok(Self::Algorithm),
            "text" => Ok(Self::Text),
            "lemma" => Ok(Self::Lemma),
            other => Err(crate::Error::Config(format!(
                "unknown confidence variant {other:?} (expected alg, text or lemma)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confidence {
    pub variant: ConfidenceVariant,
    pub m: usize,
    pub horizon: u64,
    pub delta: f64,
}

impl Confidence {
    pub fn radius(&self, feedback: u64) -> f64 {
        let m = self.m as f64;
        let t = self.horizon as f64;
        let n = feedback as f64;
        match self.variant {
            ConfidenceVariant::Algorithm => ((4.0 * m * t.powi(3)).ln() / (2.0 * n)).sqrt(),
            ConfidenceVariant::Text => (2.0 * (4.0 * m * t / self.delta).ln() / n).sqrt(),
            ConfidenceVariant::Lemma => ((2.0 * m * t * t / self.delta).ln() / (2.0 * n)).sqrt(),
        }
    }
}

/// How cost estimates are formed from the feedback counters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostBound {
    /// `max(0, c_hat - radius)`, 0 without feedback.
    Lower(Confidence),
    /// `min(1, c_hat + radius)`, 1 without feedback.
    Upper(Confidence),
    /// Plain empirical mean, 0 without feedback.
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState {
    /// Current round, 1-based.
    pub t: u64,
    pub arrivals: Vec<u64>,
    pub feedback: Vec<u64>,
    pub cost_sums: Vec<f64>,
    pub query_stage: Vec<u32>,
    pub stage_obs_q: Vec<u64>,
    pub hist_obs_q: Vec<u64>,
    pub arrival_stage: u32,
    pub stage_obs_p: u64,
    pub hist_obs_p: u64,
    pub cache: Cache,
    /// Estimates in force since the last switch.
    pub frozen_p: Vec<f64>,
    pub frozen_c: Vec<f64>,
}

/// Result of a cache switch.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchOutcome {
    pub cache: Cache,
    /// Sum of true costs of the newly filled members.
    pub switch_cost: f64,
    pub new_members: usize,
}

/// Result of serving one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub llm_called: bool,
    pub realized_cost: Option<f64>,
}

impl OnlineState {
    pub fn new(m: usize) -> Self {
        Self {
            t: 1,
            arrivals: vec![0; m],
            feedback: vec![0; m],
            cost_sums: vec![0.0; m],
            query_stage: vec![1; m],
            stage_obs_q: vec![0; m],
            hist_obs_q: vec![0; m],
            arrival_stage: 1,
            stage_obs_p: 0,
            hist_obs_p: 0,
            cache: Cache::empty(),
            frozen_p: vec![0.0; m],
            frozen_c: vec![0.0; m],
        }
    }

    pub fn m(&self) -> usize {
        self.arrivals.len()
    }

    /// Stage of query `q` is complete:
    /// `|T(q, tau_q)| >= 1 + sqrt(T * sum_{tau < tau_q} |T(q, tau)| / m)`.
    pub fn should_switch_query(&self, q: usize, horizon: u64) -> bool {
        let threshold = 1.0 + (horizon as f64 * self.hist_obs_q[q] as f64 / self.m() as f64).sqrt();
        self.stage_obs_q[q] as f64 >= threshold
    }

    /// Arrival stage is complete: the same rule with `m = 1`.
    pub fn should_switch_arrival(&self, horizon: u64) -> bool {
        let threshold = 1.0 + (horizon as f64 * self.hist_obs_p as f64).sqrt();
        self.stage_obs_p as f64 >= threshold
    }

    /// Lowest-index query whose stage is complete.
    pub fn first_ready_query(&self, horizon: u64) -> Option<usize> {
        (0..self.m()).find(|&q| self.should_switch_query(q, horizon))
    }

    pub fn advance_query_stage(&mut self, q: usize) {
        self.query_stage[q] += 1;
        self.hist_obs_q[q] += self.stage_obs_q[q];
        self.stage_obs_q[q] = 0;
    }

    pub fn advance_arrival_stage(&mut self) {
        self.arrival_stage += 1;
        self.hist_obs_p += self.stage_obs_p;
        self.stage_obs_p = 0;
    }

    /// `p_hat(q) = N_p(q) / t`.
    pub fn arrival_estimates(&self) -> Vec<f64> {
        let t = self.t as f64;
        self.arrivals.iter().map(|&n| n as f64 / t).collect()
    }

    pub fn cost_estimates(&self, bound: CostBound) -> Vec<f64> {
        (0..self.m())
            .map(|q| {
                let n = self.feedback[q];
                if n == 0 {
                    return match bound {
                        CostBound::Upper(_) => 1.0,
                        _ => 0.0,
                    };
                }
                let mean = self.cost_sums[q] / n as f64;
                match bound {
                    CostBound::Lower(conf) => (mean - conf.radius(n)).max(0.0),
                    CostBound::Upper(conf) => (mean + conf.radius(n)).min(1.0),
                    CostBound::Empirical => mean,
                }
            })
            .collect()
    }

    /// Installs `cache` together with the estimates it was computed from.
    pub fn install(
        &mut self,
        cache: Cache,
        p: Vec<f64>,
        c: Vec<f64>,
        true_costs: &[f64],
    ) -> SwitchOutcome {
        let mut switch_cost = 0.0;
        let mut new_members = 0;
        for q in cache.added_since(&self.cache) {
            switch_cost += true_costs[q.index()];
            new_members += 1;
        }
        self.cache = cache.clone();
        self.frozen_p = p;
        self.frozen_c = c;
        SwitchOutcome {
            cache,
            switch_cost,
            new_members,
        }
    }

    /// Feedback counters are consistent with the stage tallies.
    pub fn is_consistent(&self) -> bool {
        (0..self.m()).all(|q| self.feedback[q] == self.hist_obs_q[q] + self.stage_obs_q[q])
            && self.arrivals.iter().sum::<u64>() == self.hist_obs_p + self.stage_obs_p
    }
}

/// Recomputes the cache from optimistic estimates and installs it.
pub fn switch_cache(
    state: &mut OnlineState,
    dist: &DistanceMatrix,
    true_costs: &[f64],
    k: usize,
    confidence: &Confidence,
) -> SwitchOutcome {
    let p = state.arrival_estimates();
    let c = state.cost_estimates(CostBound::Lower(*confidence));
    let cache = reverse_greedy(&LossModel::new(&p, &c, dist), k)
        .expect("k validated by caller")
        .cache;
    state.install(cache, p, c, true_costs)
}

/// Serves `q` with the frozen estimates: the LLM is called iff
/// `c_frozen(q) < d(q, M)`, and only then is cost feedback recorded.
/// With `full_feedback` the realized cost is observed on every round.
pub fn serve_and_update<R: Rng + ?Sized>(
    state: &mut OnlineState,
    space: &QuerySpace,
    q: QueryId,
    noise_sigma: f64,
    full_feedback: bool,
    rng: &mut R,
) -> StepOutcome {
    let qi = q.index();
    let members: Vec<usize> = state.cache.indices().collect();
    let d = space.model().distance_to_set(qi, &members);
    let llm_called = state.frozen_c[qi] < d;
    let realized_cost = if llm_called || full_feedback {
        let cost = realize_cost(space.costs()[qi], noise_sigma, rng);
        state.feedback[qi] += 1;
        state.cost_sums[qi] += cost;
        state.stage_obs_q[qi] += 1;
        Some(cost)
    } else {
        None
    };
    state.arrivals[qi] += 1;
    state.stage_obs_p += 1;
    StepOutcome {
        llm_called,
        realized_cost,
    }
}
