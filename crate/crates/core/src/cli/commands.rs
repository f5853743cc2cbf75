use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::report::{csv_bytes, emit, to_json_bytes, AggregateReport, Format};
use super::seeds::derive_seed;
use super::{
    AlphaMode, GenWorkloadArgs, GeneratorArgs, OfflineAlgo, OfflineArgs, OnlineArgs, OnlineRunArgs,
    SolveArgs, SweepArgs, Switch,
};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::QuerySpace;
use crate::offline;
use crate::online::{
    run_variant, Algorithm, OnlineParams, ReferenceMode, RegretReference, RunSummary,
};
use crate::solvers::{brute_force, curvature, lfu_cache, reverse_greedy};
use crate::workload::{self, CostModel, LoggingPolicy, WorkloadSpec, DEFAULT_NOISE_SIGMA};

fn announce(path: &Path) {
    println!("{}", path.display());
}

fn write_and_announce(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes)?;
    announce(path);
    Ok(())
}

fn emit_and_announce(
    dir: &Path,
    stem: &str,
    format: Format,
    report: &AggregateReport,
) -> Result<()> {
    announce(&emit(dir, stem, format, report)?);
    Ok(())
}

fn check_k(k: usize, m: usize) -> Result<()> {
    if k == 0 || k > m {
        return Err(Error::Config(format!(
            "cache size k = {k} must be in [1, {m}]"
        )));
    }
    Ok(())
}

fn check_runs(runs: usize) -> Result<()> {
    if runs == 0 {
        return Err(Error::Config("--runs must be >= 1".into()));
    }
    Ok(())
}

fn check_noise(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    Ok(())
}

fn workload_spec(g: &GeneratorArgs, m: usize, noise_sigma: f64, seed: u64) -> WorkloadSpec {
    WorkloadSpec {
        m,
        d_e: g.d_e,
        cluster_count: g.clusters,
        cluster_spread: g.spread,
        arrival: g.arrival.clone(),
        cost_model: CostModel::TokenCount,
        noise_sigma,
        metric: g.metric,
        seed,
    }
}

pub fn gen_workload(a: &GenWorkloadArgs) -> Result<()> {
    let spec = workload_spec(&a.generator, a.generator.m, a.noise_sigma, a.seed);
    spec.validate()?;
    if let (Some(k), Switch::On) = (a.k, a.k_check) {
        check_k(k, spec.m)?;
    }
    let space = workload::generate(&spec)?;
    fs::create_dir_all(&a.out)?;
    let path = a.out.join("workload.json");
    workload::save(&path, &space, Some(a.noise_sigma))?;
    announce(&path);
    Ok(())
}

#[derive(Debug, Serialize)]
struct SolveRow {
    k: usize,
    rg_loss: f64,
    bf_loss: Option<f64>,
    lfu_loss: f64,
    alpha: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn solve(a: &SolveArgs) -> Result<()> {
    let space = workload::load(&a.workload)?.space;
    let m = space.m();
    let ks: Vec<usize> = match (&a.ks, a.k) {
        (Some(ks), _) => ks.clone(),
        (None, Some(k)) => vec![k],
        (None, None) => (1..=m).collect(),
    };
    if ks.is_empty() {
        return Err(Error::Config("no cache sizes given".into()));
    }
    for &k in &ks {
        check_k(k, m)?;
    }
    let model = space.model();
    let alpha = match curvature(&model) {
        Ok(r) => Some(r.approx_ratio_alpha),
        Err(e) => {
            eprintln!("warning: alpha unavailable: {e}");
            None
        }
    };
    let mut rows = Vec::with_capacity(ks.len());
    for &k in &ks {
        let rg = reverse_greedy(&model, k)?;
        let bf = match brute_force(&model, k, a.budget) {
            Ok(r) => Some(r.loss),
            Err(e @ Error::Capacity { .. }) => {
                eprintln!("warning: k = {k}: {e}; bf_loss left empty");
                None
            }
            Err(e) => return Err(e),
        };
        rows.push(SolveRow {
            k,
            rg_loss: rg.loss,
            bf_loss: bf,
            lfu_loss: model.loss(&lfu_cache(space.arrival_probs(), k)),
            alpha,
        });
    }
    fs::create_dir_all(&a.output.out)?;
    let path = a
        .output
        .out
        .join(format!("solve.{}", a.output.format.extension()));
    let bytes = match a.output.format {
        Format::Csv => csv_bytes(
            &["k", "rg_loss", "bf_loss", "lfu_loss", "alpha"],
            rows.iter().map(|r| {
                vec![
                    r.k.to_string(),
                    r.rg_loss.to_string(),
                    cell(r.bf_loss),
                    r.lfu_loss.to_string(),
                    cell(r.alpha),
                ]
            }),
        )?,
        Format::Json => to_json_bytes(&rows),
    };
    write_and_announce(&path, &bytes)
}

/// Reads `--nu` as a constant or as a file of per-query values.
fn parse_nu(arg: &str, m: usize) -> Result<Vec<f64>> {
    if let Ok(v) = arg.parse::<f64>() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("nu must be in [0, 1], got {v}")));
        }
        return Ok(vec![v; m]);
    }
    let text = fs::read_to_string(arg)?;
    let values: Vec<f64> = match serde_json::from_str::<Vec<f64>>(&text) {
        Ok(v) => v,
        Err(_) => text
            .split(|ch: char| ch == ',' || ch.is_whitespace())
            .filter(|s| !s.is_empty())
            .enumerate()
            .map(|(i, s)| {
                s.parse().map_err(|_| {
                    Error::parse(arg, format!("entry {i}"), format!("not a number: {s:?}"))
                })
            })
            .collect::<Result<_>>()?,
    };
    if values.len() != m {
        return Err(Error::parse(
            arg,
            "nu",
            format!("expected {m} values, found {}", values.len()),
        ));
    }
    if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::parse(
            arg,
            format!("entry {i}"),
            "nu must be in [0, 1]",
        ));
    }
    Ok(values)
}

fn dedup<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for &x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

pub fn offline(a: &OfflineArgs) -> Result<()> {
    let loaded = workload::load(&a.workload)?;
    let space = loaded.space;
    let m = space.m();
    check_k(a.k, m)?;
    check_runs(a.runs)?;
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(Error::Config(format!(
            "delta must be in (0, 1), got {}",
            a.delta
        )));
    }
    if !(0.0..=1.0).contains(&a.epsilon_g) {
        return Err(Error::Config(format!(
            "epsilon_g must be in [0, 1], got {}",
            a.epsilon_g
        )));
    }
    if a.n_grid.is_empty() || a.n_grid.contains(&0) {
        return Err(Error::Config("--n-grid needs values >= 1".into()));
    }
    let algos = dedup(&a.algos);
    if algos.is_empty() {
        return Err(Error::Config("--algos is empty".into()));
    }
    let noise = a
        .noise_sigma
        .or(loaded.noise_sigma)
        .unwrap_or(DEFAULT_NOISE_SIGMA);
    check_noise(noise)?;
    let nu = a.nu.as_deref().map(|s| parse_nu(s, m)).transpose()?;
    let optimum = brute_force(&space.model(), a.k, a.budget)?.loss;

    let jobs: Vec<(usize, usize)> = a
        .n_grid
        .iter()
        .flat_map(|&n| (0..a.runs).map(move |r| (n, r)))
        .collect();
    let policy = LoggingPolicy::UniformRandom { k: a.k };
    let gaps: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(n, run)| {
            let seed = derive_seed(a.seed, "dataset", run as u64, n as u64);
            let data = workload::synthesize_offline_dataset(
                &space,
                &policy,
                n,
                nu.as_deref(),
                noise,
                seed,
            )?;
            let dist = space.distances();
            algos
                .iter()
                .map(|&algo| {
                    let cache = match algo {
                        OfflineAlgo::Cucb => offline::cucb_sc(&data, dist, a.k, a.delta)?,
                        OfflineAlgo::Clcb => offline::clcb_sc_offline(&data, dist, a.k, a.delta)?,
                        OfflineAlgo::EpsGreedy => {
                            let s = derive_seed(a.seed, algo.name(), run as u64, n as u64);
                            offline::epsilon_greedy_offline(&data, dist, a.k, a.epsilon_g, s)?
                        }
                        OfflineAlgo::Lfu => offline::lfu_offline(&data, m, a.k)?,
                    };
                    Ok(offline::gap_against(&space, &cache, 1.0, optimum))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut report = AggregateReport::new("subopt", "n");
    let mut per_run = Vec::new();
    for (ai, algo) in algos.iter().enumerate() {
        for &n in &a.n_grid {
            let values: Vec<f64> = jobs
                .iter()
                .zip(&gaps)
                .filter(|((jn, _), _)| *jn == n)
                .map(|((_, run), g)| {
                    per_run.push(vec![
                        algo.name().to_string(),
                        n.to_string(),
                        run.to_string(),
                        g[ai].to_string(),
                    ]);
                    g[ai]
                })
                .collect();
            report.push(algo.name(), n, &values);
        }
    }
    fs::create_dir_all(&a.output.out)?;
    emit_and_announce(&a.output.out, "offline", a.output.format, &report)?;
    let bytes = csv_bytes(&["algo", "n", "run", "subopt"], per_run)?;
    write_and_announce(&a.output.out.join("offline_runs.csv"), &bytes)
}

struct RunResult {
    algo: Algorithm,
    run: usize,
    summary: RunSummary,
    curve: Vec<(u64, f64, f64)>,
    runtime_ms: f64,
}

fn online_params(r: &OnlineRunArgs, file_noise: Option<f64>) -> Result<OnlineParams> {
    let params = OnlineParams {
        horizon: r.horizon,
        delta: r.delta,
        confidence: r.confidence_variant,
        epsilon_g: r.epsilon_g,
        noise_sigma: r.noise_sigma.or(file_noise).unwrap_or(DEFAULT_NOISE_SIGMA),
        full_feedback: r.full_feedback,
    };
    params.validate()?;
    check_runs(r.runs)?;
    if r.algos.is_empty() {
        return Err(Error::Config("--algos is empty".into()));
    }
    Ok(params)
}

fn reference_mode(mode: AlphaMode) -> ReferenceMode {
    match mode {
        AlphaMode::Bf => ReferenceMode::BruteForce,
        AlphaMode::Curvature => ReferenceMode::Curvature,
    }
}

/// Runs every `(algo, run)` pair in parallel; results come back in
/// `(algo, run)` order regardless of scheduling.
#[allow(clippy::too_many_arguments)]
fn run_online_jobs(
    space: &QuerySpace,
    k: usize,
    r: &OnlineRunArgs,
    params: &OnlineParams,
    reference: &RegretReference,
    value: u64,
    stride: u64,
    trace_dir: Option<&Path>,
) -> Result<Vec<RunResult>> {
    let algos = dedup(&r.algos);
    let jobs: Vec<(Algorithm, usize)> = algos
        .iter()
        .flat_map(|&algo| (0..r.runs).map(move |run| (algo, run)))
        .collect();
    let write_lock = Mutex::new(());
    jobs.par_iter()
        .map(|&(algo, run)| {
            let seed = derive_seed(r.seed, algo.name(), run as u64, value);
            let start = Instant::now();
            let trace = run_variant(space, k, algo, params, reference, seed)?;
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            if let Some(dir) = trace_dir {
                let mut bytes = Vec::new();
                trace.write_csv(&mut bytes)?;
                let _guard = write_lock.lock().unwrap_or_else(|p| p.into_inner());
                write_atomic(&dir.join(format!("{algo}_run{run}.csv")), &bytes)?;
            }
            Ok(RunResult {
                algo,
                run,
                curve: trace.regret_curve(stride),
                summary: trace.summary,
                runtime_ms,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    reference: &'a str,
    reference_cache: String,
    alpha: f64,
    reference_loss: f64,
    runs: Vec<&'a RunSummary>,
}

fn summary_report(algos: &[Algorithm], results: &[RunResult]) -> AggregateReport {
    let mut report = AggregateReport::new("final", "metric");
    type Field = fn(&RunSummary) -> f64;
    let fields: [(&str, Field); 5] = [
        ("avg_regret", |s| s.avg_regret),
        ("cum_regret", |s| s.cum_regret),
        ("cum_regret_no_switch", |s| s.cum_regret_no_switch),
        ("total_switches", |s| s.total_switches as f64),
        ("total_llm_calls", |s| s.total_llm_calls as f64),
    ];
    for &algo in algos {
        for (name, f) in fields {
            let values: Vec<f64> = results
                .iter()
                .filter(|x| x.algo == algo)
                .map(|x| f(&x.summary))
                .collect();
            report.push(algo.name(), name, &values);
        }
    }
    report
}

fn runtime_report(
    algos: &[Algorithm],
    results: &[RunResult],
    x: impl Fn(&RunResult) -> String,
) -> AggregateReport {
    let mut report = AggregateReport::new("runtime_ms", "x");
    for &algo in algos {
        let mut xs: Vec<String> = Vec::new();
        for res in results.iter().filter(|r| r.algo == algo) {
            let v = x(res);
            if !xs.contains(&v) {
                xs.push(v);
            }
        }
        for v in xs {
            let values: Vec<f64> = results
                .iter()
                .filter(|r| r.algo == algo && x(r) == v)
                .map(|r| r.runtime_ms)
                .collect();
            report.push(algo.name(), v, &values);
        }
    }
    report
}

pub fn online(a: &OnlineArgs) -> Result<()> {
    let loaded = workload::load(&a.workload)?;
    let space = loaded.space;
    check_k(a.run.k, space.m())?;
    let params = online_params(&a.run, loaded.noise_sigma)?;
    if a.stride == 0 {
        return Err(Error::Config("--stride must be >= 1".into()));
    }
    let reference = RegretReference::compute(
        &space,
        a.run.k,
        reference_mode(a.run.alpha_mode),
        a.run.budget,
    )?;
    fs::create_dir_all(&a.output.out)?;
    let trace_dir = a.traces.then(|| a.output.out.join("traces"));
    if let Some(dir) = &trace_dir {
        fs::create_dir_all(dir)?;
    }
    let results = run_online_jobs(
        &space,
        a.run.k,
        &a.run,
        &params,
        &reference,
        0,
        a.stride,
        trace_dir.as_deref(),
    )?;
    let algos = dedup(&a.run.algos);

    let out = &a.output.out;
    let summary = SummaryFile {
        reference: reference.label(),
        reference_cache: reference.cache.to_string(),
        alpha: reference.alpha,
        reference_loss: reference.loss,
        runs: results.iter().map(|r| &r.summary).collect(),
    };
    write_and_announce(&out.join("summary.json"), &to_json_bytes(&summary))?;
    emit_and_announce(
        out,
        "summary",
        a.output.format,
        &summary_report(&algos, &results),
    )?;

    let mut curves = AggregateReport::new("avg_regret", "t");
    let mut curves_ns = AggregateReport::new("avg_regret_no_switch", "t");
    let mut per_run = Vec::new();
    for &algo in &algos {
        let runs: Vec<&RunResult> = results.iter().filter(|r| r.algo == algo).collect();
        let points = runs.first().map_or(0, |r| r.curve.len());
        for i in 0..points {
            let t = runs[0].curve[i].0;
            let avg: Vec<f64> = runs.iter().map(|r| r.curve[i].1).collect();
            let avg_ns: Vec<f64> = runs.iter().map(|r| r.curve[i].2).collect();
            curves.push(algo.name(), t, &avg);
            curves_ns.push(algo.name(), t, &avg_ns);
        }
        for r in runs {
            for &(t, avg, avg_ns) in &r.curve {
                per_run.push(vec![
                    algo.name().to_string(),
                    r.run.to_string(),
                    t.to_string(),
                    avg.to_string(),
                    avg_ns.to_string(),
                ]);
            }
        }
    }
    emit_and_announce(out, "curves", a.output.format, &curves)?;
    emit_and_announce(out, "curves_no_switch", a.output.format, &curves_ns)?;
    let bytes = csv_bytes(
        &["algo", "run", "t", "avg_regret", "avg_regret_no_switch"],
        per_run,
    )?;
    write_and_announce(&out.join("curves_runs.csv"), &bytes)?;

    let runtime = runtime_report(&algos, &results, |_| "run".to_string());
    write_and_announce(&out.join("runtime.json"), &to_json_bytes(&runtime))
}

enum SweepVar {
    K,
    M,
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let var = match a.variable.as_str() {
        "k" => SweepVar::K,
        "m" => SweepVar::M,
        other => {
            return Err(Error::Config(format!(
                "unknown sweep variable {other:?} (expected k or m)"
            )))
        }
    };
    if a.values.is_empty() {
        return Err(Error::Config("--values is empty".into()));
    }
    let base = match var {
        SweepVar::K => {
            let path: &PathBuf = a
                .workload
                .as_ref()
                .ok_or_else(|| Error::Config("a k sweep needs --workload".into()))?;
            Some(workload::load(path)?)
        }
        SweepVar::M => None,
    };
    let params = online_params(&a.run, base.as_ref().and_then(|w| w.noise_sigma))?;
    let algos = dedup(&a.run.algos);

    // Build every instance before running anything so invalid values fail fast.
    let mut instances: Vec<(usize, QuerySpace, usize)> = Vec::new();
    for &value in &a.values {
        let (space, k) = match (&var, &base) {
            (SweepVar::K, Some(w)) => (w.space.clone(), value),
            _ => {
                let seed = derive_seed(a.run.seed, "workload", 0, value as u64);
                let spec = workload_spec(&a.generator, value, params.noise_sigma, seed);
                (workload::generate(&spec)?, a.run.k)
            }
        };
        check_k(k, space.m())?;
        instances.push((value, space, k));
    }

    let mut results: Vec<(usize, RunResult)> = Vec::new();
    for (value, space, k) in &instances {
        let reference =
            RegretReference::compute(space, *k, reference_mode(a.run.alpha_mode), a.run.budget)?;
        let stride = params.horizon;
        for r in run_online_jobs(
            space,
            *k,
            &a.run,
            &params,
            &reference,
            *value as u64,
            stride,
            None,
        )? {
            results.push((*value, r));
        }
    }

    let mut regret = AggregateReport::new("avg_regret", &a.variable);
    let mut regret_ns = AggregateReport::new("avg_regret_no_switch", &a.variable);
    let mut switches = AggregateReport::new("total_switches", &a.variable);
    let mut per_run = Vec::new();
    for &algo in &algos {
        for &value in &a.values {
            let cell: Vec<&RunResult> = results
                .iter()
                .filter(|(v, r)| *v == value && r.algo == algo)
                .map(|(_, r)| r)
                .collect();
            let t = params.horizon as f64;
            regret.push(
                algo.name(),
                value,
                &cell
                    .iter()
                    .map(|r| r.summary.avg_regret)
                    .collect::<Vec<_>>(),
            );
            regret_ns.push(
                algo.name(),
                value,
                &cell
                    .iter()
                    .map(|r| r.summary.cum_regret_no_switch / t)
                    .collect::<Vec<_>>(),
            );
            switches.push(
                algo.name(),
                value,
                &cell
                    .iter()
                    .map(|r| r.summary.total_switches as f64)
                    .collect::<Vec<_>>(),
            );
            for r in cell {
                per_run.push(vec![
                    algo.name().to_string(),
                    value.to_string(),
                    r.run.to_string(),
                    r.summary.avg_regret.to_string(),
                    r.summary.cum_regret.to_string(),
                    r.summary.cum_regret_no_switch.to_string(),
                    r.summary.total_switches.to_string(),
                ]);
            }
        }
    }
    let out = &a.output.out;
    fs::create_dir_all(out)?;
    emit_and_announce(out, "sweep", a.output.format, &regret)?;
    emit_and_announce(out, "sweep_no_switch", a.output.format, &regret_ns)?;
    emit_and_announce(out, "sweep_switches", a.output.format, &switches)?;
    let header = [
        "algo",
        a.variable.as_str(),
        "run",
        "avg_regret",
        "cum_regret",
        "cum_regret_no_switch",
        "total_switches",
    ];
    write_and_announce(&out.join("sweep_runs.csv"), &csv_bytes(&header, per_run)?)?;
    let flat: Vec<RunResult> = results
        .into_iter()
        .map(|(v, mut r)| {
            r.run = v;
            r
        })
        .collect();
    let runtime = runtime_report(&algos, &flat, |r| r.run.to_string());
    write_and_announce(&out.join("runtime.json"), &to_json_bytes(&runtime))
}
