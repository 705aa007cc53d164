//! `dimcert` command-line driver.
//!
//! Every command writes one JSON document to stdout. Errors go to stderr,
//! as plain text or (with `--json-errors`) as a JSON object. Exit codes:
//! 0 success, 2 validation, 3 parse or I/O, 4 degenerate computation,
//! 1 internal error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use dimcert::bell::{bell_bound, BellBoundReport};
use dimcert::generators::{gen_nonconvexity_pair, gen_rac, gen_toy, mix};
use dimcert::io::{bell_from_json, bell_to_json, load_pm_path, pm_to_json, read_input, weights_from_json};
use dimcert::pm_bound::{fidelity_matrix, pm_bound_with, pm_to_bell, FidelityMatrix, PmBoundReport, QSource};
use dimcert::realization::{search_realization, Realization, SearchOptions, SearchStatus};
use dimcert::stqp::{optimize_q_exact, optimize_q_heuristic, StqpMethod, StqpResult, DEFAULT_MAX_N};
use dimcert::witness::{
    beta_grid, check_incompressible, compare_rac_bounds, det_w2_witness, psd_rank_lower_bound, quadratic_witness,
    winning_runs, Winner, WitnessReport,
};
use dimcert::{Error, PmCorrelation, Result, SimplexWeights, DEFAULT_TOL};

const ASYMMETRY_NOTE: &str = "not_found is advisory only: a failed search does not prove that no realization \
exists in this dimension; only a lower bound certifies impossibility";

/// Device-independent dimension lower bounds for prepare-and-measure and Bell correlations.
///
/// Input files are JSON (`{"type":"pm","N":..,"M":..,"K":..,"p":[x][y][b]}` or
/// `{"type":"bell","XA":..,"YB":..,"A":..,"B":..,"r":[x][y][a][b]}`) or, for PM
/// correlations, CSV with header `x,y,b,p`. Use `-` to read stdin.
#[derive(Debug, Parser)]
#[command(name = "dimcert", version)]
struct Cli {
    /// Worker threads (default: available cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print a short human-readable summary to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    /// Report errors as a JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    /// Add a `generated_at` field (Unix seconds) to reports.
    #[arg(long, global = true)]
    timestamps: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// PM dimension bound. Output: {raw_bound, dimension_lb, denominator,
    /// trivial_ub, q_source, q_used, optimizer?}.
    Bound(BoundArgs),
    /// Both Bell bounds. Output: {bound_eq1, bound_eq2, best, best_integer,
    /// argmax_settings, max_signaling}; bounds are {"kind":"finite","value":v}
    /// or {"kind":"unbounded"}.
    Bell(BellArgs),
    /// Dimension witnesses. Output: {witness_kind, value, implied_dimension_lb,
    /// triggered, details}, or an object keyed by kind for `--kind all`.
    Witness(WitnessArgs),
    /// Write a named correlation family as PM JSON.
    Generate(GenerateArgs),
    /// Search for an explicit realization in dimension `--dim`. Output:
    /// {status, residual, dim, seed, restarts, tol_target, lower_bound, note, realization?}.
    Realize(RealizeArgs),
    /// Compare the uniform-q bound with the Nayak bound on random access codes.
    /// Output: {m, beta_min, beta_max, step, points, nayak_wins, eq3_wins, rows}.
    RacScan(RacScanArgs),
    /// Turn a PM correlation into Bell JSON, `r(x,b|0,y) = q_x p(b|x,y)`.
    Transform(TransformArgs),
}

#[derive(Debug, Args)]
struct BoundArgs {
    /// PM correlation file, or `-` for stdin.
    file: PathBuf,
    /// `uniform`, `optimize`, or `@weights.json`.
    #[arg(long, default_value = "uniform")]
    q: String,
    /// Largest N solved exactly when optimizing; larger N uses multistart descent.
    #[arg(long, default_value_t = DEFAULT_MAX_N)]
    exact_threshold: usize,
    /// Random restarts of the heuristic optimizer.
    #[arg(long, default_value_t = 64)]
    restarts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Validation tolerance for probabilities.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct BellArgs {
    /// Bell correlation JSON file, or `-` for stdin.
    file: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum WitnessChoice {
    Compressibility,
    Quadratic,
    DetW2,
    Psdrank,
    All,
}

#[derive(Debug, Args)]
struct WitnessArgs {
    file: PathBuf,
    #[arg(long, value_enum)]
    kind: WitnessChoice,
    /// Dimension tested by the quadratic witness.
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(subcommand)]
    family: Family,
    /// Output file (default: stdout).
    #[arg(short = 'o', long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Family {
    /// Deterministic readout of bit y of x (N = 2^m, M = m, K = 2).
    Toy {
        #[arg(long)]
        m: usize,
    },
    /// Random access code: bit y of x read correctly with probability beta.
    Rac {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        beta: f64,
    },
    /// The two qubit-realizable correlations whose even mixture needs a qutrit.
    /// Without `--mix` both are written as a JSON array.
    Nonconvexity {
        /// Mixture weights `w1,w2`.
        #[arg(long, value_delimiter = ',')]
        mix: Option<Vec<f64>>,
    },
}

#[derive(Debug, Args)]
struct RealizeArgs {
    file: PathBuf,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Largest residual that counts as found.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Validation tolerance for the input correlation.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    input_tol: f64,
    /// Search even when a lower bound already exceeds `--dim`.
    #[arg(long)]
    force: bool,
    /// Also write the realization to this file.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RacScanArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    beta_min: f64,
    #[arg(long)]
    beta_max: f64,
    #[arg(long)]
    step: f64,
    /// Also write `beta,eq3_raw,eq3_lb,nayak_lb,winner` rows to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TransformArgs {
    file: PathBuf,
    /// `uniform` or `@weights.json`.
    #[arg(long, default_value = "uniform")]
    q: String,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

/// A document to print plus an optional stderr summary.
struct Output {
    json: String,
    summary: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return report_internal(&cli, &e.to_string());
        }
    }
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&cli)));
    match result {
        Ok(Ok(out)) => {
            let mut json = out.json;
            if cli.timestamps {
                json = add_timestamp(json);
            }
            let mut stdout = std::io::stdout().lock();
            if writeln!(stdout, "{json}").is_err() {
                return ExitCode::from(3);
            }
            if cli.verbose {
                eprintln!("{}", out.summary);
            }
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            if cli.json_errors {
                eprintln!("{}", error_json(&e));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            report_internal(&cli, &msg)
        }
    }
}

fn report_internal(cli: &Cli, message: &str) -> ExitCode {
    if cli.json_errors {
        eprintln!("{}", json!({"error": {"kind": "internal", "message": message, "exit_code": 1}}));
    } else {
        eprintln!("internal error: {message}");
    }
    ExitCode::from(1)
}

fn error_value(e: &Error) -> serde_json::Value {
    let mut v = json!({"kind": e.kind(), "message": e.to_string(), "exit_code": e.exit_code()});
    if let Error::Invalid(violations) = e {
        v["violations"] = serde_json::to_value(violations).expect("violations serialize");
    }
    v
}

fn error_json(e: &Error) -> String {
    json!({ "error": error_value(e) }).to_string()
}

/// Append `generated_at` to a top-level JSON object.
fn add_timestamp(json: String) -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    match json.strip_suffix('}') {
        Some(body) if json.starts_with('{') => {
            let sep = if body.len() > 1 { "," } else { "" };
            format!("{body}{sep}\"generated_at\":{secs}}}")
        }
        _ => json,
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report serializes")
}

fn run(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Bound(a) => cmd_bound(a),
        Command::Bell(a) => cmd_bell(a),
        Command::Witness(a) => cmd_witness(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Realize(a) => cmd_realize(a),
        Command::RacScan(a) => cmd_rac_scan(a),
        Command::Transform(a) => cmd_transform(a),
    }
}

#[derive(Serialize)]
struct OptimizerInfo {
    method: StqpMethod,
    certified_global: bool,
    value: f64,
    stationary_points_examined: usize,
    restarts: usize,
    seed: u64,
}

#[derive(Serialize)]
struct BoundOutput {
    raw_bound: f64,
    dimension_lb: usize,
    denominator: f64,
    trivial_ub: usize,
    q_source: QSource,
    q_used: SimplexWeights,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerInfo>,
}

impl BoundOutput {
    fn new(r: PmBoundReport, optimizer: Option<OptimizerInfo>) -> Self {
        Self {
            raw_bound: r.raw_bound,
            dimension_lb: r.dimension_lb,
            denominator: r.denominator,
            trivial_ub: r.trivial_ub,
            q_source: r.q_source,
            q_used: r.q_used,
            optimizer,
        }
    }
}

fn optimize(fm: &FidelityMatrix, exact_threshold: usize, restarts: usize, seed: u64) -> Result<StqpResult> {
    if fm.n() <= exact_threshold {
        optimize_q_exact(fm.matrix(), exact_threshold)
    } else {
        optimize_q_heuristic(fm.matrix(), restarts, seed)
    }
}

fn read_weights(arg: &str, tol: f64) -> Result<SimplexWeights> {
    let path = arg.strip_prefix('@').expect("caller checked prefix");
    weights_from_json(&read_input(Path::new(path))?, tol)
}

fn bound_report(p: &PmCorrelation, a: &BoundArgs) -> Result<BoundOutput> {
    let fm = fidelity_matrix(p);
    match a.q.as_str() {
        "uniform" => {
            let q = SimplexWeights::uniform(p.n_preparations());
            Ok(BoundOutput::new(pm_bound_with(&fm, &q, QSource::Uniform)?, None))
        }
        "optimize" => {
            let opt = optimize(&fm, a.exact_threshold, a.restarts, a.seed)?;
            let report = pm_bound_with(&fm, &opt.q_star, QSource::Optimized)?;
            let info = OptimizerInfo {
                method: opt.method,
                certified_global: opt.certified_global,
                value: opt.value,
                stationary_points_examined: opt.stationary_points_examined,
                restarts: opt.restarts,
                seed: a.seed,
            };
            Ok(BoundOutput::new(report, Some(info)))
        }
        s if s.starts_with('@') => {
            let q = read_weights(s, a.tol)?;
            Ok(BoundOutput::new(pm_bound_with(&fm, &q, QSource::User)?, None))
        }
        other => Err(Error::OutOfRange(format!(
            "--q must be uniform, optimize or @file, got {other:?}"
        ))),
    }
}

fn cmd_bound(a: &BoundArgs) -> Result<Output> {
    let p = load_pm_path(&a.file, a.tol)?;
    let out = bound_report(&p, a)?;
    Ok(Output {
        summary: format!(
            "PM bound ({:?} q): raw {:.6}, dimension >= {} (trivial upper bound {})",
            out.q_source, out.raw_bound, out.dimension_lb, out.trivial_ub
        ),
        json: to_json(&out),
    })
}

fn cmd_bell(a: &BellArgs) -> Result<Output> {
    let r = bell_from_json(&read_input(&a.file)?, a.tol)?;
    let report: BellBoundReport = bell_bound(&r)?;
    let best = match report.best_integer {
        Some(d) => d.to_string(),
        None => "unbounded".into(),
    };
    Ok(Output {
        summary: format!("Bell bound: local dimension >= {best} ({:?})", report.argmax_settings),
        json: to_json(&report),
    })
}

fn witness_value(result: Result<WitnessReport>) -> serde_json::Value {
    match result {
        Ok(r) => serde_json::to_value(r).expect("witness report serializes"),
        Err(e) => json!({ "error": error_value(&e) }),
    }
}

fn cmd_witness(a: &WitnessArgs) -> Result<Output> {
    let p = load_pm_path(&a.file, a.tol)?;
    let single = |r: WitnessReport| Output {
        summary: format!(
            "{:?} witness: triggered={}, implied dimension >= {:?}",
            r.witness_kind, r.triggered, r.implied_dimension_lb
        ),
        json: to_json(&r),
    };
    match a.kind {
        WitnessChoice::Compressibility => Ok(single(check_incompressible(&p))),
        WitnessChoice::Quadratic => Ok(single(quadratic_witness(&p, a.d)?)),
        WitnessChoice::DetW2 => Ok(single(det_w2_witness(&p)?)),
        WitnessChoice::Psdrank => Ok(single(psd_rank_lower_bound(&p))),
        WitnessChoice::All => {
            #[derive(Serialize)]
            struct All {
                compressibility: serde_json::Value,
                quadratic: serde_json::Value,
                det_w2: serde_json::Value,
                psdrank: serde_json::Value,
            }
            let all = All {
                compressibility: witness_value(Ok(check_incompressible(&p))),
                quadratic: witness_value(quadratic_witness(&p, a.d)),
                det_w2: witness_value(det_w2_witness(&p)),
                psdrank: witness_value(Ok(psd_rank_lower_bound(&p))),
            };
            let triggered: Vec<&str> = [
                ("compressibility", &all.compressibility),
                ("quadratic", &all.quadratic),
                ("det_w2", &all.det_w2),
                ("psdrank", &all.psdrank),
            ]
            .into_iter()
            .filter(|(_, v)| v["triggered"] == json!(true))
            .map(|(k, _)| k)
            .collect();
            Ok(Output {
                summary: format!("witnesses triggered: {triggered:?}"),
                json: to_json(&all),
            })
        }
    }
}

fn write_or_return(json: String, output: &Option<PathBuf>, summary: String) -> Result<Output> {
    match output {
        Some(path) => {
            std::fs::write(path, format!("{json}\n"))?;
            Ok(Output {
                json: to_json(&json!({ "written": path.display().to_string() })),
                summary,
            })
        }
        None => Ok(Output { json, summary }),
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<Output> {
    let (json, summary) = match &a.family {
        Family::Toy { m } => (pm_to_json(&gen_toy(*m)?), format!("toy correlation with m={m}")),
        Family::Rac { m, beta } => (
            pm_to_json(&gen_rac(*m, *beta)?),
            format!("random access code with m={m}, beta={beta}"),
        ),
        Family::Nonconvexity { mix: weights } => {
            let (p1, p2) = gen_nonconvexity_pair();
            match weights {
                Some(w) => {
                    let w = SimplexWeights::new(w.clone(), DEFAULT_TOL)?;
                    (pm_to_json(&mix(&[p1, p2], &w)?), format!("mixture with weights {:?}", w.as_slice()))
                }
                None => (
                    format!("[{},{}]", pm_to_json(&p1), pm_to_json(&p2)),
                    "non-convexity pair".into(),
                ),
            }
        }
    };
    write_or_return(json, &a.output, summary)
}

#[derive(Clone, Serialize)]
struct LowerBoundCheck {
    uniform: f64,
    optimized: f64,
    dimension_lb: usize,
}

#[derive(Serialize)]
struct RealizeOutput {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    annotation: Option<&'static str>,
    residual: Option<f64>,
    dim: usize,
    seed: u64,
    restarts: usize,
    tol_target: f64,
    lower_bound: LowerBoundCheck,
    note: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    realization: Option<Realization>,
}

fn cmd_realize(a: &RealizeArgs) -> Result<Output> {
    let p = load_pm_path(&a.file, a.input_tol)?;
    let fm = fidelity_matrix(&p);
    let uniform = pm_bound_with(&fm, &SimplexWeights::uniform(p.n_preparations()), QSource::Uniform)?;
    let opt = optimize(&fm, DEFAULT_MAX_N, 64, a.seed)?;
    let optimized = pm_bound_with(&fm, &opt.q_star, QSource::Optimized)?;
    let lower_bound = LowerBoundCheck {
        uniform: uniform.raw_bound,
        optimized: optimized.raw_bound,
        dimension_lb: uniform.dimension_lb.max(optimized.dimension_lb),
    };
    let impossible = lower_bound.dimension_lb > a.dim;
    let annotation = impossible.then_some("impossible by lower bound");
    let base = |status, residual, realization| RealizeOutput {
        status,
        annotation,
        residual,
        dim: a.dim,
        seed: a.seed,
        restarts: a.restarts,
        tol_target: a.tol,
        lower_bound: lower_bound.clone(),
        note: ASYMMETRY_NOTE,
        realization,
    };
    if impossible && !a.force {
        let out = base("skipped", None, None);
        return Ok(Output {
            summary: format!(
                "dimension {} is ruled out by the lower bound {}; search skipped (use --force)",
                a.dim, out.lower_bound.dimension_lb
            ),
            json: to_json(&out),
        });
    }
    let opts = SearchOptions {
        restarts: a.restarts,
        seed: a.seed,
        tol_target: a.tol,
        ..SearchOptions::default()
    };
    let outcome = search_realization(&p, a.dim, &opts)?;
    if let (Some(path), Some(r)) = (&a.output, &outcome.realization) {
        std::fs::write(path, format!("{}\n", to_json(r)))?;
    }
    let status = match outcome.status {
        SearchStatus::Found => "found",
        SearchStatus::NotFound => "not_found",
    };
    let out = base(status, Some(outcome.residual), outcome.realization);
    Ok(Output {
        summary: format!(
            "realization search in dimension {}: {status}, residual {:.3e}",
            a.dim, outcome.residual
        ),
        json: to_json(&out),
    })
}

fn cmd_rac_scan(a: &RacScanArgs) -> Result<Output> {
    let betas = beta_grid(a.beta_min, a.beta_max, a.step)?;
    let rows = compare_rac_bounds(a.m, &betas)?;
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(["beta", "eq3_raw", "eq3_lb", "nayak_lb", "winner"]).map_err(csv_error)?;
        for r in &rows {
            w.write_record([
                r.beta.to_string(),
                r.eq3_raw.to_string(),
                r.eq3_lb.to_string(),
                r.nayak_lb.to_string(),
                r.winner.as_str().to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
    }
    let nayak_wins = winning_runs(&rows, Winner::Nayak);
    let eq3_wins = winning_runs(&rows, Winner::Eq3);
    let summary = format!("{} grid points; Nayak bound strictly better on {:?}", rows.len(), nayak_wins);
    let out = json!({
        "m": a.m,
        "beta_min": a.beta_min,
        "beta_max": a.beta_max,
        "step": a.step,
        "points": rows.len(),
        "nayak_wins": nayak_wins,
        "eq3_wins": eq3_wins,
        "rows": rows,
    });
    Ok(Output { json: to_json(&out), summary })
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))
}

fn cmd_transform(a: &TransformArgs) -> Result<Output> {
    let p = load_pm_path(&a.file, a.tol)?;
    let q = match a.q.as_str() {
        "uniform" => SimplexWeights::uniform(p.n_preparations()),
        s if s.starts_with('@') => read_weights(s, a.tol)?,
        other => return Err(Error::OutOfRange(format!("--q must be uniform or @file, got {other:?}"))),
    };
    let r = pm_to_bell(&p, &q)?;
    Ok(Output {
        summary: format!(
            "Bell correlation with {} x {} settings and {} x {} outcomes",
            r.n_settings_a(),
            r.n_settings_b(),
            r.n_outcomes_a(),
            r.n_outcomes_b()
        ),
        json: bell_to_json(&r),
    })
}
