use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Cache;

pub const TRACE_HEADER: [&str; 7] = [
    "t",
    "cache",
    "expected_loss",
    "switch_cost",
    "llm_called",
    "realized_cost",
    "switched",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    /// Index into [`RunTrace::caches`].
    pub cache_index: usize,
    /// True expected loss of the cache used this round.
    pub expected_loss: f64,
    pub switch_cost: f64,
    /// LLM calls made to fill new cache members this round.
    pub new_members: usize,
    pub llm_called: bool,
    pub realized_cost: Option<f64>,
    pub switched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algo: String,
    pub m: usize,
    pub k: usize,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub seed: u64,
    pub total_switches: u64,
    pub total_llm_calls: u64,
    pub cum_regret: f64,
    pub avg_regret: f64,
    pub cum_regret_no_switch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// `alpha * l(M_ref)`, subtracted from every round's loss.
    pub reference_loss: f64,
    /// Distinct caches in order of installation.
    pub caches: Vec<Cache>,
    pub rows: Vec<TraceRow>,
    pub summary: RunSummary,
}

/// Regret totals accumulated row by row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegretTotals {
    pub cum_regret: f64,
    pub cum_regret_no_switch: f64,
    pub switches: u64,
    pub llm_calls: u64,
}

impl RegretTotals {
    #[inline]
    pub fn add(&mut self, expected_loss: f64, switch_cost: f64, reference_loss: f64) {
        let excess = expected_loss - reference_loss;
        self.cum_regret += excess + switch_cost;
        self.cum_regret_no_switch += excess;
    }
}

impl RunTrace {
    /// Recomputes the regret totals from the rows alone.
    pub fn replay(&self) -> RegretTotals {
        replay_rows(
            self.rows
                .iter()
                .map(|r| (r.expected_loss, r.switch_cost, r.switched)),
            self.reference_loss,
        )
    }

    pub fn cache_at(&self, row: &TraceRow) -> &Cache {
        &self.caches[row.cache_index]
    }

    /// `(t, avg_regret, avg_regret_no_switch)` every `stride` rounds, plus
    /// the final round when it is not a multiple of `stride`.
    pub fn regret_curve(&self, stride: u64) -> Vec<(u64, f64, f64)> {
        let stride = stride.max(1);
        let mut totals = RegretTotals::default();
        let mut out = Vec::new();
        let last = self.rows.last().map(|r| r.t).unwrap_or(0);
        for r in &self.rows {
            totals.add(r.expected_loss, r.switch_cost, self.reference_loss);
            if r.t % stride == 0 || r.t == last {
                let t = r.t as f64;
                out.push((r.t, totals.cum_regret / t, totals.cum_regret_no_switch / t));
            }
        }
        out
    }

    /// Writes the per-round CSV with header
    /// `t,cache,expected_loss,switch_cost,llm_called,realized_cost,switched`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        let mut cache_strings: Vec<Option<String>> = vec![None; self.caches.len()];
        for r in &self.rows {
            let cache = cache_strings[r.cache_index]
                .get_or_insert_with(|| self.caches[r.cache_index].to_string())
                .clone();
            w.write_record([
                r.t.to_string(),
                cache,
                r.expected_loss.to_string(),
                r.switch_cost.to_string(),
                u8::from(r.llm_called).to_string(),
                r.realized_cost.map(|c| c.to_string()).unwrap_or_default(),
                u8::from(r.switched).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn replay_rows(
    rows: impl Iterator<Item = (f64, f64, bool)>,
    reference_loss: f64,
) -> RegretTotals {
    let mut totals = RegretTotals::default();
    for (loss, switch_cost, switched) in rows {
        totals.add(loss, switch_cost, reference_loss);
        totals.switches += u64::from(switched);
    }
    totals
}

/// A row parsed back from a trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub t: u64,
    pub cache: Cache,
    pub expected_loss: f64,
    pub switch_cost: f64,
    pub llm_called: bool,
    pub realized_cost: Option<f64>,
    pub switched: bool,
}

pub fn read_csv<R: Read>(input: R, m: usize) -> Result<Vec<ParsedRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::parse(
            "trace",
            "header",
            format!("unexpected header {header:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let loc = |f: &str| format!("row {}, field {f:?}", i + 1);
        let num = |idx: usize, f: &str| -> Result<f64> {
            rec[idx]
                .parse::<f64>()
                .map_err(|e| Error::parse("trace", loc(f), e.to_string()))
        };
        let flag = |idx: usize, f: &str| -> Result<bool> {
            match &rec[idx] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::parse(
                    "trace",
                    loc(f),
                    format!("expected 0 or 1, got {other:?}"),
                )),
            }
        };
        rows.push(ParsedRow {
            t: rec[0].parse().map_err(|e: std::num::ParseIntError| {
                Error::parse("trace", loc("t"), e.to_string())
            })?,
            cache: Cache::parse_joined(&rec[1], m)
                .map_err(|e| Error::parse("trace", loc("cache"), e.to_string()))?,
            expected_loss: num(2, "expected_loss")?,
            switch_cost: num(3, "switch_cost")?,
            llm_called: flag(4, "llm_called")?,
            realized_cost: if rec[5].is_empty() {
                None
            } else {
                Some(num(5, "realized_cost")?)
            },
            switched: flag(6, "switched")?,
        });
    }
    Ok(rows)
}

/// Regret totals recomputed from parsed CSV rows.
pub fn replay_parsed(rows: &[ParsedRow], reference_loss: f64) -> RegretTotals {
    replay_rows(
        rows.iter()
            .map(|r| (r.expected_loss, r.switch_cost, r.switched)),
        reference_loss,
    )
}
