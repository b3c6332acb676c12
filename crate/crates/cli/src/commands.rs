use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bregalt::alternator::{detect_gap, StopReason, Trace};
use bregalt::diagnostics::{
    angle_condition_probe, annotate, classify_transversality, default_theta_grid, errors_to_final, fit_rate, AngleConditionProbe,
    RateEstimate, Transversality,
};
use bregalt::experiment::{cluster_limits, ExperimentConfig, Outcome, Problem, Summary};
use bregalt::geometry::{curvature_bounds, estimate_reach, BregmanBall, CurvatureBounds, ReachOptions};
use bregalt::io::{annotated_trace_table, format_float, trace_from_table, trace_table, write_json, CsvTable, TraceRecord, DIAG_COLUMNS};
use bregalt::legendre::{divergence, GENERATOR_NAMES};
use bregalt::sets::param::MAP_NAMES;
use bregalt::{Error, Point, Result};
use rayon::prelude::*;
use serde::Serialize;

const DEFAULT_OUT: &str = "bregalt-out";
const DEFAULT_CLUSTER_TOL: f64 = 1e-6;
const CURVATURE_SAMPLES: usize = 64;

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Domain(_) => 2,
        Error::SolverFailure(_) => 3,
        _ => 1,
    }
}

fn run_exit_code(trace: &Trace) -> u8 {
    if trace.stop_reason == StopReason::DomainViolation {
        2
    } else {
        0
    }
}

pub fn fixture_dir() -> PathBuf {
    match std::env::var_os("BREGALT_FIXTURES") {
        Some(dir) => PathBuf::from(dir),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"),
    }
}

/// A config path, or failing that the name of a fixture file.
fn resolve_config(spec: &str) -> Result<(PathBuf, ExperimentConfig)> {
    let direct = PathBuf::from(spec);
    let path = if direct.is_file() {
        direct
    } else {
        let named = fixture_dir().join(format!("{spec}.json"));
        if !named.is_file() {
            return Err(Error::Config(format!("no config file or fixture named '{spec}'")));
        }
        named
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok((path, cfg))
}

fn load(spec: &str, seed: Option<u64>, max_iters: Option<usize>) -> Result<(String, ExperimentConfig)> {
    let (path, mut cfg) = resolve_config(spec)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(n) = max_iters {
        cfg.run.stop.max_iters = n;
    }
    let name = if cfg.name.is_empty() {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
    } else {
        cfg.name.clone()
    };
    cfg.generator()?;
    Ok((name, cfg))
}

fn out_dir(out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn trace_csv(cfg: &ExperimentConfig, out: &Outcome) -> CsvTable {
    if cfg.diagnostics.angles {
        annotated_trace_table(out.generator.as_ref(), &out.trace, out.em.as_ref())
    } else {
        trace_table(&out.trace, None, out.em.as_ref())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.6e}"))
}

pub fn run(config: &str, seed: Option<u64>, max_iters: Option<usize>, out: Option<PathBuf>, quiet: bool) -> Result<u8> {
    let (name, cfg) = load(config, seed, max_iters)?;
    let start = cfg.default_start()?;
    let outcome = cfg.execute_from(&start)?;
    let dir = out_dir(out)?;
    trace_csv(&cfg, &outcome).write(&dir.join(format!("{name}.trace.csv")))?;
    write_json(&dir.join(format!("{name}.trace.json")), &TraceRecord::new(&outcome.trace, outcome.em.as_ref()))?;
    let summary = outcome.summary(&name, &start, &cfg.diagnostics);
    write_json(&dir.join(format!("{name}.summary.json")), &summary)?;
    if !quiet {
        println!(
            "{name}: {} after {} rows, r* = {}, feasible = {}",
            summary.stop_reason.as_str(),
            summary.rows,
            fmt_opt(summary.r_star),
            summary.feasible.map_or_else(|| "n/a".into(), |f| f.to_string())
        );
    }
    Ok(run_exit_code(&outcome.trace))
}

/// Errors from an `error` column, or `‖b_k − b_N‖` from the `b_i` columns.
fn rate_errors(table: &CsvTable) -> Result<Vec<f64>> {
    if let Some(errors) = table.column("error")? {
        return Ok(errors);
    }
    let b: Vec<Point> = table.points("b")?.into_iter().map_while(|p| p).collect();
    if b.is_empty() {
        return Err(Error::Config("CSV has neither an error column nor b_i columns".into()));
    }
    let last = b[b.len() - 1].clone();
    Ok(b.iter().map(|p| (p - &last).norm()).collect())
}

pub fn rate(trace: &Path, out: Option<PathBuf>, quiet: bool) -> Result<u8> {
    let table = CsvTable::read(trace)?;
    let estimate: RateEstimate = fit_rate(&rate_errors(&table)?)?;
    match out {
        Some(dir) => {
            let dir = out_dir(Some(dir))?;
            write_json(&dir.join("rate.json"), &estimate)?;
            if !quiet {
                println!("{:?}: q = {}, rho = {}", estimate.kind, fmt_opt(estimate.q), fmt_opt(estimate.rho));
            }
        }
        None => println!("{}", serde_json::to_string_pretty(&estimate)?),
    }
    Ok(0)
}

#[derive(Debug, Serialize)]
struct ReachReport {
    value: Option<f64>,
    lambda: f64,
    samples_used: usize,
}

#[derive(Debug, Serialize)]
struct DiagReport {
    rows: usize,
    r_star: Option<f64>,
    feasible: Option<bool>,
    transversality: Option<Transversality>,
    min_tail_angle_rl: Option<f64>,
    min_ell_rl: Option<f64>,
    rate: Option<RateEstimate>,
    angle_condition: Option<AngleConditionProbe>,
    curvature: Option<CurvatureBounds>,
    reach: Option<ReachReport>,
    notes: Vec<String>,
}

fn finite_min(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.filter(|v| v.is_finite()).fold(None, |m, v| Some(m.map_or(v, |m: f64| m.min(v))))
}

pub fn diag(trace_path: &Path, config: &str, out: Option<PathBuf>, quiet: bool) -> Result<u8> {
    let (name, cfg) = load(config, None, None)?;
    let gen = cfg.generator()?;
    let mut table = CsvTable::read(trace_path)?;
    let trace = trace_from_table(&table, &gen.name(), cfg.orientation())?;
    let rows = annotate(gen.as_ref(), &trace);
    let columns: [Vec<f64>; 3] = [
        rows.iter().map(|r| r.angle_rl).collect(),
        rows.iter().map(|r| r.angle_lr).collect(),
        rows.iter().map(|r| r.ell_rl).collect(),
    ];
    for (col, values) in DIAG_COLUMNS.iter().zip(&columns) {
        table.fill_column(col, values);
    }

    let mut notes = Vec::new();
    let gap = detect_gap(&trace).map_err(|e| notes.push(format!("gap: {e}"))).ok();
    let defined: Vec<f64> = columns[0].iter().copied().filter(|v| v.is_finite()).collect();
    let rate = fit_rate(&errors_to_final(&trace)).map_err(|e| notes.push(format!("rate: {e}"))).ok();
    let angle_condition = gap.as_ref().and_then(|g| {
        angle_condition_probe(&trace, g.r_star, &default_theta_grid()).map_err(|e| notes.push(format!("angle condition: {e}"))).ok()
    });
    let transversality = if gap.as_ref().is_some_and(|g| !g.feasible) {
        notes.push("transversality: not classified for a trace with a positive gap".into());
        None
    } else {
        Some(classify_transversality(&trace))
    };
    let (mut curvature, mut reach, mut probes) = (None, None, Vec::new());
    if let (Problem::Alternating { b, .. }, Some((b_plus, a_plus))) = (&cfg.problem, trace.final_pair()) {
        let d = divergence(gen.as_ref(), &b_plus, &a_plus)?;
        if d > 0.0 {
            let ball = BregmanBall::left(a_plus.clone(), (2.0 * d).sqrt());
            curvature = curvature_bounds(gen.as_ref(), &ball, CURVATURE_SAMPLES).map_err(|e| notes.push(format!("curvature: {e}"))).ok();
            match estimate_reach(gen.as_ref(), b, &b_plus, &a_plus, &ReachOptions::default()) {
                Ok(r) => {
                    probes = r.probes.clone();
                    reach = Some(ReachReport { value: r.value.is_finite().then_some(r.value), lambda: r.lambda, samples_used: r.samples_used });
                }
                Err(e) => notes.push(format!("reach: {e}")),
            }
        } else {
            notes.push("reach: final pair coincides, no ball to grow".into());
        }
    }
    let report = DiagReport {
        rows: trace.len(),
        r_star: gap.as_ref().map(|g| g.r_star),
        feasible: gap.as_ref().map(|g| g.feasible),
        transversality,
        min_tail_angle_rl: finite_min(defined[defined.len() / 2..].iter().copied()),
        min_ell_rl: finite_min(columns[2].iter().copied()),
        rate,
        angle_condition,
        curvature,
        reach,
        notes,
    };

    let file_name = trace_path.file_name().ok_or_else(|| Error::Config("trace path has no file name".into()))?;
    let (csv_path, dir) = match out {
        Some(dir) => {
            let dir = out_dir(Some(dir))?;
            (dir.join(file_name), dir)
        }
        None => (trace_path.to_path_buf(), trace_path.parent().map(Path::to_path_buf).unwrap_or_default()),
    };
    table.write(&csv_path)?;
    write_json(&dir.join(format!("{name}.diag.json")), &report)?;
    if !probes.is_empty() {
        let reach_table = CsvTable {
            headers: vec!["lambda".into(), "radius".into(), "empty_interior_flag".into()],
            rows: probes.iter().map(|(l, r, e)| vec![format_float(*l), format_float(*r), u8::from(*e).to_string()]).collect(),
        };
        reach_table.write(&dir.join(format!("{name}.reach.csv")))?;
    }
    if !quiet {
        println!(
            "{name}: transversality {}, min tail angle = {}, min ell = {}",
            report.transversality.map_or_else(|| "n/a".into(), |t| format!("{t:?}").to_lowercase()),
            fmt_opt(report.min_tail_angle_rl),
            fmt_opt(report.min_ell_rl)
        );
    }
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    index: usize,
    cluster: Option<usize>,
    error: Option<String>,
    summary: Option<Summary>,
}

#[derive(Debug, Serialize)]
struct SweepReport {
    name: String,
    cluster_tol: f64,
    clusters: usize,
    runs: Vec<SweepRow>,
}

pub fn sweep(config: &str, seed: Option<u64>, max_iters: Option<usize>, out: Option<PathBuf>, quiet: bool) -> Result<u8> {
    let (name, cfg) = load(config, seed, max_iters)?;
    let spec = cfg.sweep.clone().ok_or_else(|| Error::Config("config has no sweep section".into()))?;
    let starts = spec.all_starts()?;
    if starts.is_empty() {
        return Err(Error::Config("sweep has no starts".into()));
    }
    let tol = spec.cluster_tol.unwrap_or(DEFAULT_CLUSTER_TOL);
    let dir = out_dir(out)?;
    let results: Vec<Result<Outcome>> = starts.par_iter().map(|s| cfg.execute_from(s)).collect();

    let mut code = 0u8;
    let mut limits = Vec::new();
    let mut rows = Vec::new();
    for (i, (start, result)) in starts.iter().zip(&results).enumerate() {
        match result {
            Ok(outcome) => {
                trace_csv(&cfg, outcome).write(&dir.join(format!("{name}.sweep_{i}.trace.csv")))?;
                let summary = outcome.summary(&name, start, &cfg.diagnostics);
                if let Some(b) = outcome.trace.b.last() {
                    limits.push((i, b.clone()));
                }
                code = code.max(run_exit_code(&outcome.trace));
                rows.push(SweepRow { index: i, cluster: None, error: None, summary: Some(summary) });
            }
            Err(e) => {
                code = code.max(exit_code(e));
                rows.push(SweepRow { index: i, cluster: None, error: Some(e.to_string()), summary: None });
            }
        }
    }
    let points: Vec<Point> = limits.iter().map(|(_, b)| b.clone()).collect();
    let labels = cluster_limits(&points, tol);
    for ((i, _), label) in limits.iter().zip(&labels) {
        rows[*i].cluster = Some(*label);
    }
    let clusters = labels.iter().max().map_or(0, |m| m + 1);

    let dim = starts[0].len();
    let b_dim = points.first().map_or(0, |p| p.len());
    let mut headers: Vec<String> = vec!["index".into()];
    headers.extend((0..dim).map(|j| format!("start_{j}")));
    headers.extend(["stop_reason", "rows", "r_star", "feasible", "cluster"].map(String::from));
    headers.extend((0..b_dim).map(|j| format!("b_{j}")));
    let table_rows = rows
        .iter()
        .zip(&starts)
        .map(|(row, start)| {
            let mut cells = vec![row.index.to_string()];
            cells.extend(start.iter().map(|v| format_float(*v)));
            match &row.summary {
                Some(s) => {
                    cells.push(s.stop_reason.as_str().into());
                    cells.push(s.rows.to_string());
                    cells.push(s.r_star.map(format_float).unwrap_or_default());
                    cells.push(s.feasible.map(|f| f.to_string()).unwrap_or_default());
                    cells.push(row.cluster.map(|c| c.to_string()).unwrap_or_default());
                    let b = s.final_b.clone().unwrap_or_default();
                    cells.extend((0..b_dim).map(|j| b.get(j).map(|v| format_float(*v)).unwrap_or_default()));
                }
                None => {
                    cells.push("error".into());
                    cells.extend(std::iter::repeat_n(String::new(), 4 + b_dim));
                }
            }
            cells
        })
        .collect();
    CsvTable { headers, rows: table_rows }.write(&dir.join(format!("{name}.sweep.csv")))?;
    let report = SweepReport { name: name.clone(), cluster_tol: tol, clusters, runs: rows };
    write_json(&dir.join(format!("{name}.sweep.json")), &report)?;
    if !quiet {
        println!("{name}: {} starts, {clusters} limit clusters", starts.len());
    }
    Ok(code)
}

/// Print to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

pub fn list_generators() -> Result<u8> {
    let mut text = String::from("generators:\n");
    for g in GENERATOR_NAMES {
        text += &format!("  {g}\n");
    }
    text += "parametric maps:\n";
    for m in MAP_NAMES {
        text += &format!("  {m}\n");
    }
    emit(&text);
    Ok(0)
}

pub fn list_fixtures() -> Result<u8> {
    let dir = fixture_dir();
    let entries = fs::read_dir(&dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
    paths.sort();
    let mut text = String::new();
    for path in paths {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match fs::read_to_string(&path).map_err(Error::from).and_then(|t| ExperimentConfig::from_json(&t)) {
            Ok(cfg) => text += &format!("{stem:<24} {}\n", cfg.description),
            Err(e) => text += &format!("{stem:<24} (unreadable: {e})\n"),
        }
    }
    emit(&text);
    Ok(0)
}
