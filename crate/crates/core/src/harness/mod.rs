//! Experiment driver: materializes JSON experiment descriptions, runs the
//! configured methods from a shared initial point, and writes traces and
//! summaries as CSV.
//!
//! Trace files are byte-deterministic for a fixed config: floats are printed
//! with 17 significant digits (lossless for f64) and all randomness is
//! seeded. Summary files carry a wall-time column and are not.

mod config;

pub use config::{
    load_matrix_csv, Experiment, ExperimentConfig, ManifoldConfig, MethodConfig, ParamsConfig,
    PreparedMethod, ProblemConfig, StopConfig,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::integrators::{self, Init, Method, Termination, TraceRecord};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub output_dir: Option<PathBuf>,
    pub record_every: Option<usize>,
    pub quiet: bool,
}

/// One finished run, as reported in summary files and on stdout.
#[derive(Debug, Clone)]
pub struct RunSummary {
    /// Method label, suffixed with an index when a method appears twice.
    pub label: String,
    pub method: Method,
    pub termination: Termination,
    pub iterations: usize,
    pub final_f: f64,
    pub final_error: Option<f64>,
    /// First recorded iteration with error <= stop.f_tol, when that is set.
    pub iterations_to_tolerance: Option<usize>,
    /// Printed, never serialized; CSVs stay identical across reruns.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub summary: RunSummary,
}

/// Parameter a sweep varies across every configured method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    P,
    H,
    PRing,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" => Ok(SweepParam::P),
            "h" => Ok(SweepParam::H),
            "p_ring" | "p-ring" => Ok(SweepParam::PRing),
            other => Err(Error::ConfigInvalid(format!(
                "unknown sweep parameter '{other}' (expected p, h or p_ring)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SweepParam::P => "p",
            SweepParam::H => "h",
            SweepParam::PRing => "p_ring",
        }
    }
}

/// Run every configured method and write one trace CSV per method plus
/// `summary.csv`.
pub fn cmd_run(config_path: &Path, overrides: &CliOverrides) -> Result<Vec<RunSummary>> {
    let (exp, out) = prepare(config_path, overrides)?;
    announce_oracle(&exp, overrides.quiet);
    let labels = method_labels(&exp.methods);
    let mut summaries = Vec::new();
    for (pm, label) in exp.methods.iter().zip(&labels) {
        let (records, summary) = execute(&exp, pm, label)?;
        let path = out.join(format!("trace_{label}.csv"));
        write_trace_csv(&path, &records)?;
        report(&summary, &path, overrides.quiet);
        summaries.push(summary);
    }
    write_summary_csv(&out.join("summary.csv"), &summaries, exp.stop.f_tol)?;
    Ok(summaries)
}

/// Run at least two methods from the same initial point and write their
/// traces side by side in `compare.csv`, merged on iteration number, plus
/// `summary.csv`. All methods must share one record grid.
pub fn cmd_compare(config_path: &Path, overrides: &CliOverrides) -> Result<Vec<RunSummary>> {
    let (exp, out) = prepare(config_path, overrides)?;
    if exp.methods.len() < 2 {
        return Err(Error::ConfigInvalid(
            "compare needs at least two methods".to_string(),
        ));
    }
    let grid = exp.methods[0].record_every;
    if exp.methods.iter().any(|m| m.record_every != grid) {
        return Err(Error::ConfigInvalid(
            "compare needs a single record_every across methods".to_string(),
        ));
    }
    announce_oracle(&exp, overrides.quiet);
    let labels = method_labels(&exp.methods);
    let mut summaries = Vec::new();
    let mut traces = Vec::new();
    for (pm, label) in exp.methods.iter().zip(&labels) {
        let (records, summary) = execute(&exp, pm, label)?;
        if !overrides.quiet {
            println!("{}", describe(&summary));
        }
        summaries.push(summary);
        traces.push(records);
    }
    let path = out.join("compare.csv");
    write_compare_csv(&path, &labels, &traces)?;
    if !overrides.quiet {
        println!("wrote {}", path.display());
    }
    write_summary_csv(&out.join("summary.csv"), &summaries, exp.stop.f_tol)?;
    Ok(summaries)
}

/// Re-run every method once per sweep value, varying one parameter, and
/// write per-run traces plus `sweep_summary.csv` ranked by iterations to
/// tolerance (unreached last) when `stop.f_tol` is set.
pub fn cmd_sweep(
    config_path: &Path,
    param: SweepParam,
    values: &[f64],
    overrides: &CliOverrides,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::ConfigInvalid(
            "sweep needs at least one value".to_string(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConfigInvalid(
            "sweep values must be finite".to_string(),
        ));
    }
    let (exp, out) = prepare(config_path, overrides)?;
    if param == SweepParam::PRing
        && exp.methods.iter().any(|m| m.method != Method::HtviAdaptive)
    {
        return Err(Error::ConfigInvalid(
            "a p_ring sweep applies only to htvi-adaptive methods".to_string(),
        ));
    }
    announce_oracle(&exp, overrides.quiet);
    let labels = method_labels(&exp.methods);
    let mut rows = Vec::new();
    for &value in values {
        for (pm, label) in exp.methods.iter().zip(&labels) {
            let mut varied = PreparedMethod {
                method: pm.method,
                params: pm.params.clone(),
                record_every: pm.record_every,
            };
            match param {
                SweepParam::P => varied.params.p = value,
                SweepParam::H => varied.params.h = value,
                SweepParam::PRing => varied.params.p_ring = value,
            }
            varied.params.validate(varied.method).map_err(|e| {
                Error::ConfigInvalid(format!("sweep {}={value}: {e}", param.label()))
            })?;
            let (records, summary) = execute(&exp, &varied, label)?;
            let path = out.join(format!("trace_{}_{}_{label}.csv", param.label(), value));
            write_trace_csv(&path, &records)?;
            if !overrides.quiet {
                println!("{}={}: {}", param.label(), value, describe(&summary));
            }
            rows.push(SweepRow { value, summary });
        }
    }
    if exp.stop.f_tol.is_some() {
        rows.sort_by(|a, b| {
            let ka = a.summary.iterations_to_tolerance.unwrap_or(usize::MAX);
            let kb = b.summary.iterations_to_tolerance.unwrap_or(usize::MAX);
            ka.cmp(&kb)
                .then_with(|| {
                    let ea = a.summary.final_error.unwrap_or(f64::INFINITY);
                    let eb = b.summary.final_error.unwrap_or(f64::INFINITY);
                    ea.total_cmp(&eb)
                })
                .then_with(|| a.value.total_cmp(&b.value))
                .then_with(|| a.summary.label.cmp(&b.summary.label))
        });
    }
    let path = out.join("sweep_summary.csv");
    write_sweep_csv(&path, param, &rows, exp.stop.f_tol)?;
    if !overrides.quiet {
        println!("wrote {}", path.display());
    }
    Ok(rows)
}

fn prepare(config_path: &Path, overrides: &CliOverrides) -> Result<(Experiment, PathBuf)> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(re) = overrides.record_every {
        if re == 0 {
            return Err(Error::ConfigInvalid(
                "record_every must be >= 1".to_string(),
            ));
        }
        cfg.record_every = re;
        for m in &mut cfg.methods {
            m.record_every = None;
        }
    }
    let dir = config_path.parent().unwrap_or(Path::new("."));
    let exp = cfg.build(dir)?;
    let out = overrides
        .output_dir
        .clone()
        .or_else(|| exp.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    Ok((exp, out))
}

/// Run one method and prepend the shared initial state as a k = 0 record,
/// so every trace starts at the same point.
fn execute(
    exp: &Experiment,
    pm: &PreparedMethod,
    label: &str,
) -> Result<(Vec<TraceRecord>, RunSummary)> {
    let f_star = exp.oracle.as_ref().map(|o| o.f_star);
    let start = Instant::now();
    let result = integrators::run(
        pm.method,
        &exp.problem,
        &exp.manifold,
        &pm.params,
        Init::at_rest(exp.x0.clone()),
        &exp.stop,
        pm.record_every,
        f_star,
    )?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut records = Vec::with_capacity(result.trace.len() + 1);
    records.push(initial_record(exp, pm)?);
    records.extend(result.trace);
    let last = records.last().expect("initial record always present");
    let iterations_to_tolerance = exp.stop.f_tol.and_then(|tol| {
        records
            .iter()
            .find(|r| r.error.is_some_and(|e| e <= tol))
            .map(|r| r.k)
    });
    let summary = RunSummary {
        label: label.to_string(),
        method: pm.method,
        termination: result.termination,
        iterations: result.iterations,
        final_f: last.f,
        final_error: last.error,
        iterations_to_tolerance,
        wall_time_s,
    };
    Ok((records, summary))
}

fn initial_record(exp: &Experiment, pm: &PreparedMethod) -> Result<TraceRecord> {
    let x = &exp.x0;
    let f = exp.problem.value(x)?;
    let grad_norm = exp.problem.riemannian_grad(&exp.manifold, x)?.norm();
    let t = match pm.method {
        Method::HtviDirect | Method::HtviAdaptive => pm.params.t0,
        _ => 0.0,
    };
    Ok(TraceRecord {
        k: 0,
        t,
        f,
        error: exp.oracle.as_ref().map(|o| f - o.f_star),
        constraint_violation: exp.manifold.constraint_violation(x),
        grad_norm,
    })
}

/// Unique per-run labels: plain method labels unless a method repeats, in
/// which case every occurrence gets a 1-based suffix.
fn method_labels(methods: &[PreparedMethod]) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for m in methods {
        *counts.entry(m.method.label()).or_default() += 1;
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    methods
        .iter()
        .map(|m| {
            let label = m.method.label();
            if counts[label] == 1 {
                label.to_string()
            } else {
                let i = seen.entry(label).or_default();
                *i += 1;
                format!("{label}-{i}")
            }
        })
        .collect()
}

fn announce_oracle(exp: &Experiment, quiet: bool) {
    if quiet {
        return;
    }
    match &exp.oracle {
        Some(o) => println!("oracle ({}): f* = {}", o.method, fmt_float(o.f_star)),
        None => println!("no oracle for this instance; error columns stay empty"),
    }
}

fn describe(s: &RunSummary) -> String {
    let mut line = format!(
        "{}: {} after {} iterations, f = {}",
        s.label,
        s.termination.label(),
        s.iterations,
        fmt_float(s.final_f)
    );
    if let Some(e) = s.final_error {
        let _ = write!(line, ", error = {}", fmt_float(e));
    }
    let _ = write!(line, " ({:.3} s)", s.wall_time_s);
    line
}

fn report(summary: &RunSummary, path: &Path, quiet: bool) {
    if !quiet {
        println!("{}", describe(summary));
        println!("wrote {}", path.display());
    }
}

/// 17 significant digits; round-trips f64 exactly.
fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut s = String::from("k,t,f,error,constraint_violation,grad_norm\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.k,
            fmt_float(r.t),
            fmt_float(r.f),
            fmt_opt(r.error),
            fmt_float(r.constraint_violation),
            fmt_float(r.grad_norm)
        );
    }
    write_file(path, &s)
}

fn to_tolerance_cell(k: Option<usize>, f_tol: Option<f64>) -> String {
    match (f_tol, k) {
        (None, _) => String::new(),
        (Some(_), Some(k)) => k.to_string(),
        (Some(_), None) => "never".to_string(),
    }
}

// Wall time stays out of the CSVs on purpose: it is the one field that
// changes between reruns of the same config, and the files are meant to be
// byte-identical across reruns. It is printed per run instead.
fn write_summary_csv(path: &Path, summaries: &[RunSummary], f_tol: Option<f64>) -> Result<()> {
    let mut s =
        String::from("method,termination,iterations,final_f,final_error,iterations_to_tolerance\n");
    for r in summaries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.label,
            r.termination.label(),
            r.iterations,
            fmt_float(r.final_f),
            fmt_opt(r.final_error),
            to_tolerance_cell(r.iterations_to_tolerance, f_tol)
        );
    }
    write_file(path, &s)
}

/// Wide CSV merged on iteration number: per method a time, objective and
/// error column; cells stay empty where a trace has no record for that k.
fn write_compare_csv(path: &Path, labels: &[String], traces: &[Vec<TraceRecord>]) -> Result<()> {
    let mut rows: BTreeMap<usize, Vec<Option<&TraceRecord>>> = BTreeMap::new();
    for (i, records) in traces.iter().enumerate() {
        for r in records {
            rows.entry(r.k).or_insert_with(|| vec![None; traces.len()])[i] = Some(r);
        }
    }
    let mut s = String::from("k");
    for label in labels {
        let _ = write!(s, ",t_{label},f_{label},error_{label}");
    }
    s.push('\n');
    for (k, cells) in &rows {
        let _ = write!(s, "{k}");
        for cell in cells {
            match cell {
                Some(r) => {
                    let _ = write!(s, ",{},{},{}", fmt_float(r.t), fmt_float(r.f), fmt_opt(r.error));
                }
                None => s.push_str(",,,"),
            }
        }
        s.push('\n');
    }
    write_file(path, &s)
}

fn write_sweep_csv(
    path: &Path,
    param: SweepParam,
    rows: &[SweepRow],
    f_tol: Option<f64>,
) -> Result<()> {
    let mut s = String::from(
        "param,value,method,termination,iterations,final_f,final_error,iterations_to_tolerance\n",
    );
    for row in rows {
        let r = &row.summary;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            param.label(),
            fmt_float(row.value),
            r.label,
            r.termination.label(),
            r.iterations,
            fmt_float(r.final_f),
            fmt_opt(r.final_error),
            to_tolerance_cell(r.iterations_to_tolerance, f_tol)
        );
    }
    write_file(path, &s)
}
