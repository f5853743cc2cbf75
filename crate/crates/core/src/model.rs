//! Query universe, distance geometry, caches and the expected-loss engine.
//!
//! A cache `M` is evaluated under the serve/lookup rule: a query `q` is sent
//! to the LLM iff `c(q) <= d(q, M)`, otherwise the nearest cached response is
//! reused. The expected per-round loss is `sum_q p(q) * min(c(q), d(q, M))`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for loss comparisons.
pub const LOSS_TOLERANCE: f64 = 1e-12;

/// Tolerance on `sum(p) == 1`.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Index of a query in a [`QuerySpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryId(pub usize);

impl QueryId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How raw embedding distances are turned into mismatch costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DistanceMetric {
    /// Euclidean distance, min-max normalized over off-diagonal pairs.
    Euclidean,
    /// `1 - cosine similarity`, min-max normalized over off-diagonal pairs.
    Cosine,
    /// 0 when the Euclidean distance is at most `epsilon`, 1 otherwise.
    Threshold { epsilon: f64 },
}

impl DistanceMetric {
    pub fn is_threshold(&self) -> bool {
        matches!(self, DistanceMetric::Threshold { .. })
    }
}

/// Dense symmetric `m x m` matrix of mismatch costs in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    m: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds the normalized matrix for `embeddings` under `metric`.
    pub fn from_embeddings(embeddings: &[Vec<f64>], metric: DistanceMetric) -> Result<Self> {
        let m = embeddings.len();
        if m == 0 {
            return Err(Error::Domain("at least one embedding is required".into()));
        }
        let mut data = vec![0.0; m * m];
        match metric {
            DistanceMetric::Threshold { epsilon } => {
                if !(epsilon >= 0.0 && epsilon.is_finite()) {
                    return Err(Error::Domain(format!(
                        "threshold epsilon must be finite and >= 0, got {epsilon}"
                    )));
                }
                for i in 0..m {
                    for j in (i + 1)..m {
                        let d = if euclidean(&embeddings[i], &embeddings[j]) <= epsilon {
                            0.0
                        } else {
                            1.0
                        };
                        data[i * m + j] = d;
                        data[j * m + i] = d;
                    }
                }
            }
            DistanceMetric::Euclidean | DistanceMetric::Cosine => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..m {
                    for j in (i + 1)..m {
                        let raw = match metric {
                            DistanceMetric::Euclidean => euclidean(&embeddings[i], &embeddings[j]),
                            _ => cosine_distance(&embeddings[i], &embeddings[j])?,
                        };
                        lo = lo.min(raw);
                        hi = hi.max(raw);
                        data[i * m + j] = raw;
                        data[j * m + i] = raw;
                    }
                }
                let span = hi - lo;
                for i in 0..m {
                    for j in 0..m {
                        if i == j {
                            continue;
                        }
                        let v = &mut data[i * m + j];
                        // All pairs equidistant: nothing to rank, treat them as maximally far.
                        *v = if span > 0.0 {
                            ((*v - lo) / span).clamp(0.0, 1.0)
                        } else {
                            1.0
                        };
                    }
                }
            }
        }
        Ok(Self { m, data })
    }

    /// Wraps an explicit row-major matrix after checking the metric invariants.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Domain("distance matrix must be non-empty".into()));
        }
        let mut data = Vec::with_capacity(m * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Domain(format!(
                    "row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        let matrix = Self { m, data };
        matrix.validate()?;
        Ok(matrix)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.m {
            if self.get(i, i) != 0.0 {
                return Err(Error::Domain(format!("D[{i}][{i}] must be 0")));
            }
            for j in 0..self.m {
                let v = self.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!("D[{i}][{j}] = {v} outside [0, 1]")));
                }
                if v != self.get(j, i) {
                    return Err(Error::Domain(format!("D is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain(
            "cosine distance is undefined for zero-norm embeddings".into(),
        ));
    }
    Ok(1.0 - dot / (na * nb))
}

/// A set of cached queries, stored sorted by index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cache {
    members: Vec<QueryId>,
}

impl Cache {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a cache over a universe of `m` queries. Duplicates and
    /// out-of-range ids are rejected.
    pub fn new(members: impl IntoIterator<Item = QueryId>, m: usize) -> Result<Self> {
        let mut members: Vec<QueryId> = members.into_iter().collect();
        members.sort_unstable();
        for pair in members.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::Domain(format!("duplicate cache member {}", pair[0])));
            }
        }
        if let Some(last) = members.last() {
            if last.0 >= m {
                return Err(Error::Domain(format!(
                    "cache member {last} out of range for m = {m}"
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>, m: usize) -> Result<Self> {
        Self::new(indices.into_iter().map(QueryId), m)
    }

    /// Trusted constructor for solver output (indices sorted and unique).
    pub(crate) fn from_sorted_unchecked(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self {
            members: indices.into_iter().map(QueryId).collect(),
        }
    }

    /// Every query of a universe of size `m`.
    pub fn full(m: usize) -> Self {
        Self::from_sorted_unchecked((0..m).collect())
    }

    pub fn check_capacity(&self, k: usize) -> Result<()> {
        if self.members.len() > k {
            return Err(Error::Domain(format!(
                "cache holds {} members, capacity is {k}",
                self.members.len()
            )));
        }
        Ok(())
    }

    pub fn members(&self) -> &[QueryId] {
        &self.members
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|q| q.0)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, q: QueryId) -> bool {
        self.members.binary_search(&q).is_ok()
    }

    /// Members of `self` that are not in `previous`.
    pub fn added_since<'a>(&'a self, previous: &'a Cache) -> impl Iterator<Item = QueryId> + 'a {
        self.members
            .iter()
            .copied()
            .filter(move |q| !previous.contains(*q))
    }

    /// Parses the `|`-joined index form used in trace files.
    pub fn parse_joined(s: &str, m: usize) -> Result<Self> {
        if s.is_empty() {
            return Ok(Self::empty());
        }
        let indices = s
            .split('|')
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|e| Error::Domain(format!("bad cache index {tok:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices(indices, m)
    }
}

impl fmt::Display for Cache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, q) in self.members.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{q}")?;
        }
        Ok(())
    }
}

/// Loss parameters: arrival weights, serving costs and geometry.
///
/// Learners evaluate caches under estimated `p` and `c`, which need not be
/// normalized, so this view performs no validation.
#[derive(Debug, Clone, Copy)]
pub struct LossModel<'a> {
    pub p: &'a [f64],
    pub c: &'a [f64],
    pub dist: &'a DistanceMatrix,
}

impl<'a> LossModel<'a> {
    pub fn new(p: &'a [f64], c: &'a [f64], dist: &'a DistanceMatrix) -> Self {
        debug_assert_eq!(p.len(), dist.len());
        debug_assert_eq!(c.len(), dist.len());
        Self { p, c, dist }
    }

    pub fn m(&self) -> usize {
        self.dist.len()
    }

    /// `min over u in members of d(q, u)`, infinite for an empty set.
    #[inline]
    pub fn distance_to_set(&self, q: usize, members: &[usize]) -> f64 {
        let row = self.dist.row(q);
        members
            .iter()
            .map(|&u| row[u])
            .fold(f64::INFINITY, f64::min)
    }

    /// Expected loss of the cache holding `members`.
    pub fn loss_of(&self, members: &[usize]) -> f64 {
        (0..self.m())
            .map(|q| self.p[q] * self.c[q].min(self.distance_to_set(q, members)))
            .sum()
    }

    pub fn loss(&self, cache: &Cache) -> f64 {
        let members: Vec<usize> = cache.indices().collect();
        self.loss_of(&members)
    }

    /// Loss of the empty cache, `sum p(q) c(q)`.
    pub fn empty_loss(&self) -> f64 {
        self.p.iter().zip(self.c).map(|(p, c)| p * c).sum()
    }
}

/// The ground-truth query universe.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpace {
    embeddings: Vec<Vec<f64>>,
    arrival_probs: Vec<f64>,
    costs: Vec<f64>,
    metric: DistanceMetric,
    distances: DistanceMatrix,
}

impl QuerySpace {
    pub fn new(
        embeddings: Vec<Vec<f64>>,
        arrival_probs: Vec<f64>,
        costs: Vec<f64>,
        metric: DistanceMetric,
    ) -> Result<Self> {
        let m = embeddings.len();
        if m == 0 {
            return Err(Error::Domain(
                "query space must contain at least one query".into(),
            ));
        }
        if arrival_probs.len() != m || costs.len() != m {
            return Err(Error::Domain(format!(
                "expected {m} probabilities and costs, got {} and {}",
                arrival_probs.len(),
                costs.len()
            )));
        }
        let dim = embeddings[0].len();
        if dim == 0 {
            return Err(Error::Domain("embedding dimension must be >= 1".into()));
        }
        for (i, e) in embeddings.iter().enumerate() {
            if e.len() != dim {
                return Err(Error::Domain(format!(
                    "embedding {i} has dimension {}, expected {dim}",
                    e.len()
                )));
            }
            if e.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!(
                    "embedding {i} has a non-finite entry"
                )));
            }
        }
        validate_unit_interval("arrival probability", &arrival_probs)?;
        validate_unit_interval("cost", &costs)?;
        let sum: f64 = arrival_probs.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::Domain(format!(
                "arrival probabilities sum to {sum}, expected 1"
            )));
        }
        let distances = DistanceMatrix::from_embeddings(&embeddings, metric)?;
        Ok(Self {
            embeddings,
            arrival_probs,
            costs,
            metric,
            distances,
        })
    }

    pub fn m(&self) -> usize {
        self.embeddings.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn arrival_probs(&self) -> &[f64] {
        &self.arrival_probs
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.distances
    }

    /// The true loss parameters.
    pub fn model(&self) -> LossModel<'_> {
        LossModel::new(&self.arrival_probs, &self.costs, &self.distances)
    }

    fn check_query(&self, q: QueryId) -> Result<()> {
        if q.0 >= self.m() {
            return Err(Error::Domain(format!(
                "query {q} out of range for m = {}",
                self.m()
            )));
        }
        Ok(())
    }

    fn check_cache(&self, cache: &Cache) -> Result<()> {
        match cache.members().last() {
            Some(last) => self.check_query(*last),
            None => Ok(()),
        }
    }
}

fn validate_unit_interval(name: &str, values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Domain(format!("{name} {i} = {v} outside (0, 1]")));
        }
    }
    Ok(())
}

/// Outcome of the serve/lookup rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    QueryLlm,
    ServeCached(QueryId),
}

/// `d(q, M)`; `f64::INFINITY` for the empty cache.
pub fn distance_to_cache(space: &QuerySpace, q: QueryId, cache: &Cache) -> Result<f64> {
    space.check_query(q)?;
    space.check_cache(cache)?;
    let members: Vec<usize> = cache.indices().collect();
    Ok(space.model().distance_to_set(q.0, &members))
}

/// The cached query closest to `q`; ties go to the lowest index.
pub fn nearest_cached(space: &QuerySpace, q: QueryId, cache: &Cache) -> Result<QueryId> {
    space.check_query(q)?;
    space.check_cache(cache)?;
    nearest_in(space.distances(), q, cache)
        .ok_or_else(|| Error::Precondition("nearest_cached needs a non-empty cache".into()))
}

pub(crate) fn nearest_in(dist: &DistanceMatrix, q: QueryId, cache: &Cache) -> Option<QueryId> {
    let row = dist.row(q.0);
    let mut best: Option<(QueryId, f64)> = None;
    // Members are sorted, so strict `<` keeps the lowest index on ties.
    for &u in cache.members() {
        let d = row[u.0];
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((u, d));
        }
    }
    best.map(|(u, _)| u)
}

/// Serve/lookup rule: query the LLM iff `cost_estimate <= d(q, M)`.
pub fn decide(
    space: &QuerySpace,
    q: QueryId,
    cache: &Cache,
    cost_estimate: f64,
) -> Result<Decision> {
    if cost_estimate.is_nan() || cost_estimate < 0.0 {
        return Err(Error::Domain(format!(
            "cost estimate must be >= 0, got {cost_estimate}"
        )));
    }
    let d = distance_to_cache(space, q, cache)?;
    if cost_estimate <= d {
        Ok(Decision::QueryLlm)
    } else {
        Ok(Decision::ServeCached(nearest_cached(space, q, cache)?))
    }
}

/// Expected loss of `cache` under the true parameters.
pub fn expected_loss(space: &QuerySpace, cache: &Cache) -> f64 {
    space.model().loss(cache)
}

/// Coverage form of the loss for threshold metrics: the total `p(v) c(v)`
/// of queries that no cached member covers.
pub fn bipartite_loss(space: &QuerySpace, cache: &Cache) -> Result<f64> {
    if !space.metric().is_threshold() {
        return Err(Error::Domain(
            "bipartite loss requires a threshold metric".into(),
        ));
    }
    space.check_cache(cache)?;
    let dist = space.distances();
    let covered: Vec<bool> = (0..space.m())
        .map(|v| cache.indices().any(|u| dist.get(u, v) == 0.0))
        .collect();
    Ok(covered
        .iter()
        .enumerate()
        .filter(|(_, &hit)| !hit)
        .map(|(v, _)| space.arrival_probs()[v] * space.costs()[v])
        .sum())
}
