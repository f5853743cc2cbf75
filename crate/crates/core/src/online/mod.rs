//! Online learning with switching costs.
//!
//! Each round a query arrives, the learner may replace its cache (paying the
//! serving cost of every newly filled member), and then serves the query.
//! [`Algorithm::ClcbScLs`] only recomputes its cache when a per-query or
//! arrival stage completes, so the number of switches grows doubly
//! logarithmically in the horizon. The other algorithms are baselines.

mod run;
mod state;
mod trace;

pub use run::{
    run_clcb_sc_ls, run_variant, Algorithm, OnlineParams, ReferenceMode, RegretReference,
};
pub use state::{
    serve_and_update, switch_cache, Confidence, ConfidenceVariant, CostBound, OnlineState,
    StepOutcome, SwitchOutcome,
};
pub use trace::{
    read_csv, replay_parsed, ParsedRow, RegretTotals, RunSummary, RunTrace, TraceRow, TRACE_HEADER,
};
