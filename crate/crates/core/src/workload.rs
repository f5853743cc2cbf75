//! Synthetic workloads, workload files and logged-dataset synthesis.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cache, DistanceMetric, QueryId, QuerySpace, PROBABILITY_SUM_TOLERANCE};
use crate::offline::OfflineRecord;

/// Lower bound applied to normalized token-count costs.
pub const COST_FLOOR: f64 = 0.01;

/// Realized costs are clipped into `[MIN_REALIZED_COST, 1]` so that logged
/// feedback stays inside the `(0, 1]` range the dataset format accepts.
pub const MIN_REALIZED_COST: f64 = 1e-6;

/// Default per-draw noise standard deviation.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;

/// Range of the synthetic token counts standing in for tokenized query text.
const TOKEN_RANGE: std::ops::RangeInclusive<u32> = 3..=40;

#[derive(Debug, Clone, PartialEq)]
pub enum Arrival {
    Uniform,
    /// `p(i) ∝ (i + 1)^(-s)`.
    Zipf(f64),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    /// Min-max normalized random token counts, floored at [`COST_FLOOR`].
    TokenCount,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub m: usize,
    pub d_e: usize,
    pub cluster_count: usize,
    pub cluster_spread: f64,
    pub arrival: Arrival,
    pub cost_model: CostModel,
    pub noise_sigma: f64,
    pub metric: DistanceMetric,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            m: 20,
            d_e: 384,
            cluster_count: 5,
            cluster_spread: 0.5,
            arrival: Arrival::Uniform,
            cost_model: CostModel::TokenCount,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            metric: DistanceMetric::Euclidean,
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!("m must be >= 2, got {}", self.m)));
        }
        if self.d_e == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if self.cluster_count == 0 {
            return Err(Error::Config("cluster count must be >= 1".into()));
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return Err(Error::Config(format!(
                "cluster spread must be > 0, got {}",
                self.cluster_spread
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        match &self.arrival {
            Arrival::Zipf(s) if !(s.is_finite() && *s >= 0.0) => {
                return Err(Error::Config(format!(
                    "zipf exponent must be >= 0, got {s}"
                )))
            }
            Arrival::Explicit(p) if p.len() != self.m => {
                return Err(Error::Config(format!(
                    "explicit arrival vector has {} entries, expected {}",
                    p.len(),
                    self.m
                )))
            }
            _ => {}
        }
        if let CostModel::Explicit(c) = &self.cost_model {
            if c.len() != self.m {
                return Err(Error::Config(format!(
                    "explicit cost vector has {} entries, expected {}",
                    c.len(),
                    self.m
                )));
            }
        }
        Ok(())
    }
}

/// Draws a query space: Gaussian cluster centres, points around them,
/// token-count costs and the normalized distance matrix.
pub fn generate(spec: &WorkloadSpec) -> Result<QuerySpace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.cluster_count)
        .map(|_| gaussian_vector(&mut rng, spec.d_e, 1.0))
        .collect();
    // Clusters differ in tightness so that some groups are near-paraphrases
    // and others only loosely related.
    let spreads: Vec<f64> = (0..spec.cluster_count)
        .map(|_| spec.cluster_spread * rng.random_range(0.5..1.5))
        .collect();
    let embeddings: Vec<Vec<f64>> = (0..spec.m)
        .map(|_| {
            let cluster = rng.random_range(0..spec.cluster_count);
            let center = &centers[cluster];
            gaussian_vector(&mut rng, spec.d_e, spreads[cluster])
                .into_iter()
                .zip(center)
                .map(|(x, c)| x + c)
                .collect()
        })
        .collect();
    if embeddings.iter().all(|e| e == &embeddings[0]) {
        return Err(Error::Config(
            "all generated embeddings coincide; distance normalization is undefined".into(),
        ));
    }

    let arrival_probs = match &spec.arrival {
        Arrival::Uniform => vec![1.0 / spec.m as f64; spec.m],
        Arrival::Zipf(s) => {
            let w: Vec<f64> = (0..spec.m).map(|i| ((i + 1) as f64).powf(-s)).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        }
        Arrival::Explicit(p) => p.clone(),
    };

    let costs = match &spec.cost_model {
        CostModel::TokenCount => {
            let tokens: Vec<u32> = (0..spec.m).map(|_| rng.random_range(TOKEN_RANGE)).collect();
            token_costs(&tokens)
        }
        CostModel::Explicit(c) => c.clone(),
    };

    QuerySpace::new(embeddings, arrival_probs, costs, spec.metric)
}

fn gaussian_vector<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Min-max normalizes token counts into `[COST_FLOOR, 1]`.
pub fn token_costs(tokens: &[u32]) -> Vec<f64> {
    let lo = tokens.iter().copied().min().unwrap_or(0) as f64;
    let hi = tokens.iter().copied().max().unwrap_or(0) as f64;
    tokens
        .iter()
        .map(|&t| {
            if hi > lo {
                ((t as f64 - lo) / (hi - lo)).max(COST_FLOOR)
            } else {
                1.0
            }
        })
        .collect()
}

/// `clip(c + N(0, sigma))` into `[MIN_REALIZED_COST, 1]`.
pub fn realize_cost<R: Rng + ?Sized>(expected: f64, sigma: f64, rng: &mut R) -> f64 {
    let noise = if sigma > 0.0 {
        Normal::new(0.0, sigma)
            .expect("sigma validated")
            .sample(rng)
    } else {
        0.0
    };
    (expected + noise).clamp(MIN_REALIZED_COST, 1.0)
}

#[derive(Debug, Serialize, Deserialize)]
struct WorkloadFile {
    m: usize,
    d_e: usize,
    metric: DistanceMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_sigma: Option<f64>,
    queries: Vec<QueryEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct QueryEntry {
    id: usize,
    embedding: Vec<f64>,
    p: f64,
    c: f64,
}

/// A loaded workload: the query space plus optional run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub space: QuerySpace,
    pub noise_sigma: Option<f64>,
}

pub fn to_json(space: &QuerySpace, noise_sigma: Option<f64>) -> String {
    let file = WorkloadFile {
        m: space.m(),
        d_e: space.dim(),
        metric: space.metric(),
        noise_sigma,
        queries: (0..space.m())
            .map(|i| QueryEntry {
                id: i,
                embedding: space.embeddings()[i].clone(),
                p: space.arrival_probs()[i],
                c: space.costs()[i],
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("workload serializes")
}

pub fn save(path: &Path, space: &QuerySpace, noise_sigma: Option<f64>) -> Result<()> {
    crate::io::write_atomic(path, to_json(space, noise_sigma).as_bytes())
}

pub fn load(path: &Path) -> Result<Workload> {
    let text = fs::read_to_string(path)?;
    from_json(&text, &path.display().to_string())
}

pub fn from_json(text: &str, source_name: &str) -> Result<Workload> {
    let file: WorkloadFile = serde_json::from_str(text).map_err(|e| {
        Error::parse(
            source_name,
            format!("line {}, column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let bad = |field: String, msg: String| Error::parse(source_name, format!("field {field}"), msg);
    if file.queries.len() != file.m {
        return Err(bad(
            "queries".into(),
            format!("{} entries but m = {}", file.queries.len(), file.m),
        ));
    }
    if file.m == 0 {
        return Err(bad("m".into(), "must be >= 1".into()));
    }
    if let DistanceMetric::Threshold { epsilon } = file.metric {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(bad(
                "metric.epsilon".into(),
                format!("{epsilon} must be >= 0"),
            ));
        }
    }
    if let Some(s) = file.noise_sigma {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(bad("noise_sigma".into(), format!("{s} must be >= 0")));
        }
    }
    let mut embeddings = Vec::with_capacity(file.m);
    let mut p = Vec::with_capacity(file.m);
    let mut c = Vec::with_capacity(file.m);
    for (i, q) in file.queries.into_iter().enumerate() {
        if q.id != i {
            return Err(bad(
                format!("queries[{i}].id"),
                format!("expected {i}, got {}", q.id),
            ));
        }
        if q.embedding.len() != file.d_e {
            return Err(bad(
                format!("queries[{i}].embedding"),
                format!("dimension {} but d_e = {}", q.embedding.len(), file.d_e),
            ));
        }
        if !(q.p > 0.0 && q.p <= 1.0) {
            return Err(bad(
                format!("queries[{i}].p"),
                format!("{} outside (0, 1]", q.p),
            ));
        }
        if !(q.c > 0.0 && q.c <= 1.0) {
            return Err(bad(
                format!("queries[{i}].c"),
                format!("{} outside (0, 1]", q.c),
            ));
        }
        embeddings.push(q.embedding);
        p.push(q.p);
        c.push(q.c);
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
        return Err(bad(
            "queries[*].p".into(),
            format!("probabilities sum to {sum}, expected 1"),
        ));
    }
    let space = QuerySpace::new(embeddings, p, c, file.metric)
        .map_err(|e| Error::parse(source_name, "queries", e.to_string()))?;
    Ok(Workload {
        space,
        noise_sigma: file.noise_sigma,
    })
}

/// Which cache was in force while the log was collected.
#[derive(Debug, Clone, PartialEq)]
pub enum LoggingPolicy {
    Fixed(Cache),
    /// A fresh uniformly random cache of size `k` for every record.
    UniformRandom {
        k: usize,
    },
}

/// Samples `n` logged rounds. Feedback presence follows the serve/lookup rule
/// under the logging cache, or an independent coin with bias `nu(q)` when
/// `nu_override` is given.
pub fn synthesize_offline_dataset(
    space: &QuerySpace,
    policy: &LoggingPolicy,
    n: usize,
    nu_override: Option<&[f64]>,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<OfflineRecord>> {
    let m = space.m();
    if n == 0 {
        return Err(Error::Domain("dataset size n must be >= 1".into()));
    }
    if let Some(nu) = nu_override {
        if nu.len() != m || nu.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!(
                "nu must hold {m} probabilities in [0, 1]"
            )));
        }
    }
    match policy {
        LoggingPolicy::Fixed(cache) => cache.check_capacity(m)?,
        LoggingPolicy::UniformRandom { k } if *k == 0 || *k > m => {
            return Err(Error::Domain(format!(
                "logging cache size {k} outside [1, {m}]"
            )))
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrivals = rand::distr::weighted::WeightedIndex::new(space.arrival_probs())
        .map_err(|e| Error::Domain(e.to_string()))?;
    let model = space.model();
    let mut out = Vec::with_capacity(n);
    for t in 1..=n {
        let q = arrivals.sample(&mut rng);
        let cache = match policy {
            LoggingPolicy::Fixed(c) => c.clone(),
            LoggingPolicy::UniformRandom { k } => {
                let mut idx = sample(&mut rng, m, *k).into_vec();
                idx.sort_unstable();
                Cache::from_sorted_unchecked(idx)
            }
        };
        let feedback = match nu_override {
            Some(nu) => rng.random::<f64>() < nu[q],
            None => {
                let members: Vec<usize> = cache.indices().collect();
                space.costs()[q] <= model.distance_to_set(q, &members)
            }
        };
        let observed_cost = feedback.then(|| realize_cost(space.costs()[q], noise_sigma, &mut rng));
        out.push(OfflineRecord {
            round: t as u64,
            cache,
            query: QueryId(q),
            observed_cost,
        });
    }
    Ok(out)
}
