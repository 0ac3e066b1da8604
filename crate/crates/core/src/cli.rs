//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid arguments, 2 unreadable or malformed
//! sketch file, 3 sketch configurations differ, 4 estimator failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::estimator::Estimator;
use crate::joint::{inclusion_exclusion_estimate, joint_ml_estimate};
use crate::ml::SolverConfig;
use crate::sim::{run_error_experiment, run_joint_experiment, ErrorReport, JointReport};
use crate::sketch::{Sketch, SketchConfig};

pub const SIMULATE_HEADER: &str = "estimator,p,q,cardinality,trials,mean_rel_err,median_rel_err,\
stddev_rel_err,rmse_rel,q01,q05,q25,q75,q95,q99,failures";

pub const JOINT_SIMULATE_HEADER: &str = "card_a,card_b,card_x,trials,rmse_ie_a,rmse_ie_b,rmse_ie_x,\
rmse_ie_u,rmse_ml_a,rmse_ml_b,rmse_ml_x,rmse_ml_u,impr_a,impr_b,impr_x,impr_u,failures";

#[derive(Parser, Debug)]
#[command(name = "hllkit", version, about = "HyperLogLog cardinality estimation and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate cardinalities from serialized sketches.
    Estimate(EstimateArgs),
    /// Error statistics of single-sketch estimators over a cardinality grid.
    Simulate(SimulateArgs),
    /// RMSE of inclusion-exclusion and joint ML for set-operation cardinalities.
    JointSimulate(JointSimulateArgs),
    /// Print a sketch's parameters and register histogram.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    sketch: PathBuf,
    /// Second sketch, required by incl-excl and joint-ml.
    #[arg(long)]
    sketch2: Option<PathBuf>,
    /// original, raw, linear, improved, ml, incl-excl or joint-ml
    #[arg(long, default_value = "improved")]
    estimator: String,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    p: u8,
    #[arg(long)]
    q: u8,
    /// Comma list, or logspace:START:END:POINTS.
    #[arg(long)]
    cards: String,
    #[arg(long)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma list of single-sketch estimators.
    #[arg(long, default_value = "improved")]
    estimators: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct JointSimulateArgs {
    #[arg(long)]
    p: u8,
    #[arg(long)]
    q: u8,
    /// a,b,x triples separated by ';', or @FILE with one triple per line.
    #[arg(long, allow_hyphen_values = true)]
    configs: String,
    #[arg(long)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    sketch: PathBuf,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig { .. } | Error::InvalidArgument(_) => 1,
            Error::Format(_) | Error::Range { .. } => 2,
            Error::ConfigMismatch(..) => 3,
            Error::ZeroRegistersExhausted
            | Error::OutOfDomain { .. }
            | Error::UnsupportedConfig { .. }
            | Error::Domain(_)
            | Error::Degenerate(_)
            | Error::NoConvergence { .. } => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Runs the CLI on the process arguments and returns the exit code.
pub fn run() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI on explicit arguments (including the program name).
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => estimate(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::JointSimulate(a) => joint_simulate(a, out),
        Command::Inspect(a) => inspect(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn read_sketch(path: &Path) -> CliResult<Sketch> {
    let bytes = fs::read(path).map_err(|e| Failure {
        code: 2,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    Sketch::from_bytes(&bytes).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn io_failure(e: io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("write failed: {e}"),
    }
}

fn estimate(args: EstimateArgs, out: &mut dyn Write) -> CliResult<()> {
    let joint = matches!(args.estimator.as_str(), "incl-excl" | "joint-ml");
    let single = if joint {
        None
    } else {
        Some(args.estimator.parse::<Estimator>().map_err(|_| {
            Failure::usage(format!(
                "unknown estimator {:?}; expected original, raw, linear, improved, ml, incl-excl or joint-ml",
                args.estimator
            ))
        })?)
    };
    match (joint, &args.sketch2) {
        (true, None) => {
            return Err(Failure::usage(format!("--estimator {} needs --sketch2", args.estimator)))
        }
        (false, Some(_)) => {
            return Err(Failure::usage(format!(
                "--sketch2 is only used by incl-excl and joint-ml, not {}",
                args.estimator
            )))
        }
        _ => {}
    }

    let s1 = read_sketch(&args.sketch)?;
    let config = s1.config();
    let (p, q) = (config.p(), config.q());
    if let Some(estimator) = single {
        let value = estimator.estimate(&s1.histogram())?;
        writeln!(out, "estimator: {estimator}").map_err(io_failure)?;
        writeln!(out, "p: {p}, q: {q}").map_err(io_failure)?;
        writeln!(out, "estimate: {value}").map_err(io_failure)?;
        writeln!(out, "estimator,p,q,estimate").map_err(io_failure)?;
        writeln!(out, "{estimator},{p},{q},{value}").map_err(io_failure)?;
        return Ok(());
    }

    let s2 = read_sketch(args.sketch2.as_deref().expect("checked above"))?;
    let (est, union, note) = if args.estimator == "incl-excl" {
        let ie = inclusion_exclusion_estimate(&s1, &s2, Estimator::Improved)?;
        let note = ie.negative.then_some("negative components are not clamped");
        (ie.estimate, ie.union, note)
    } else {
        let est = joint_ml_estimate(&s1, &s2, &SolverConfig::default_joint())?;
        (est, est.union(), None)
    };
    let name = &args.estimator;
    writeln!(out, "estimator: {name}").map_err(io_failure)?;
    writeln!(out, "p: {p}, q: {q}").map_err(io_failure)?;
    writeln!(out, "only in first (lambda_a): {}", est.lambda_a).map_err(io_failure)?;
    writeln!(out, "only in second (lambda_b): {}", est.lambda_b).map_err(io_failure)?;
    writeln!(out, "intersection (lambda_x): {}", est.lambda_x).map_err(io_failure)?;
    writeln!(out, "union: {union}").map_err(io_failure)?;
    if let Some(note) = note {
        writeln!(out, "note: {note}").map_err(io_failure)?;
    }
    writeln!(out, "estimator,p,q,lambda_a,lambda_b,lambda_x,union").map_err(io_failure)?;
    writeln!(
        out,
        "{name},{p},{q},{},{},{},{union}",
        est.lambda_a, est.lambda_b, est.lambda_x
    )
    .map_err(io_failure)?;
    Ok(())
}

fn inspect(args: InspectArgs, out: &mut dyn Write) -> CliResult<()> {
    let s = read_sketch(&args.sketch)?;
    let c = s.config();
    writeln!(out, "p: {}", c.p()).map_err(io_failure)?;
    writeln!(out, "q: {}", c.q()).map_err(io_failure)?;
    writeln!(out, "m: {}", c.m()).map_err(io_failure)?;
    writeln!(out, "value,count").map_err(io_failure)?;
    for (k, count) in s.histogram().counts().iter().enumerate() {
        writeln!(out, "{k},{count}").map_err(io_failure)?;
    }
    Ok(())
}

fn sketch_config(p: u8, q: u8) -> CliResult<SketchConfig> {
    SketchConfig::new(p, q).map_err(|e| Failure::usage(e.to_string()))
}

fn parse_u64(token: &str, what: &str) -> CliResult<u64> {
    token
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("invalid {what} {token:?}")))
}

/// Parses a comma list of cardinalities or `logspace:START:END:POINTS`.
///
/// Logspace points are rounded to the nearest integer; duplicates created by
/// rounding are dropped.
pub fn parse_cardinalities(spec: &str) -> std::result::Result<Vec<u64>, String> {
    parse_cards(spec).map_err(|f| f.message)
}

fn parse_cards(spec: &str) -> CliResult<Vec<u64>> {
    if let Some(rest) = spec.strip_prefix("logspace:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [start, end, points] = parts[..] else {
            return Err(Failure::usage(format!(
                "invalid cardinality grid {spec:?}; expected logspace:START:END:POINTS"
            )));
        };
        let start = parse_u64(start, "logspace start")?;
        let end = parse_u64(end, "logspace end")?;
        let points = parse_u64(points, "logspace point count")?;
        if start == 0 || end < start || points == 0 {
            return Err(Failure::usage(format!(
                "invalid cardinality grid {spec:?}; need 1 <= START <= END and POINTS >= 1"
            )));
        }
        let (lo, hi) = ((start as f64).ln(), (end as f64).ln());
        let mut cards: Vec<u64> = (0..points)
            .map(|i| {
                if points == 1 {
                    start
                } else {
                    let t = i as f64 / (points - 1) as f64;
                    ((lo + t * (hi - lo)).exp().round() as u64).clamp(start, end)
                }
            })
            .collect();
        cards.dedup();
        return Ok(cards);
    }
    spec.split(',')
        .map(|token| parse_u64(token, "cardinality"))
        .collect()
}

/// Parses `a,b,x` triples separated by `;` or newlines. Blank entries are
/// skipped, so an empty string gives an empty list.
pub fn parse_configurations(spec: &str) -> std::result::Result<Vec<(u64, u64, u64)>, String> {
    parse_configs(spec).map_err(|f| f.message)
}

fn parse_configs(spec: &str) -> CliResult<Vec<(u64, u64, u64)>> {
    spec.split([';', '\n'])
        .map(str::trim)
        .filter(|t| !t.is_empty() && !t.starts_with('#'))
        .map(|triple| {
            let parts: Vec<&str> = triple.split(',').collect();
            if parts.len() != 3 {
                return Err(Failure::usage(format!(
                    "invalid configuration {triple:?}: expected three values a,b,x"
                )));
            }
            let mut values = [0u64; 3];
            for (slot, token) in values.iter_mut().zip(&parts) {
                *slot = token.trim().parse().map_err(|_| {
                    Failure::usage(format!(
                        "invalid configuration {triple:?}: bad token {token:?}"
                    ))
                })?;
            }
            Ok((values[0], values[1], values[2]))
        })
        .collect()
}

fn parse_estimators(list: &str) -> CliResult<Vec<Estimator>> {
    list.split(',')
        .map(|name| {
            name.trim().parse::<Estimator>().map_err(|_| {
                Failure::usage(format!(
                    "unknown estimator {name:?}; expected original, raw, linear, improved or ml"
                ))
            })
        })
        .collect()
}

fn check_trials(trials: u32) -> CliResult<()> {
    if trials < 2 {
        return Err(Failure::usage(format!("--trials must be at least 2, got {trials}")));
    }
    Ok(())
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(job()),
        Some(0) => Err(Failure::usage("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::usage(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn emit(csv: &str, path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(path) => fs::write(path, csv).map_err(|e| Failure {
            code: 2,
            message: format!("cannot write {}: {e}", path.display()),
        }),
        None => out.write_all(csv.as_bytes()).map_err(io_failure),
    }
}

/// CSV rows, header included, for error reports.
pub fn simulate_csv(config: SketchConfig, reports: &[ErrorReport]) -> String {
    let mut csv = String::from(SIMULATE_HEADER);
    csv.push('\n');
    for r in reports {
        let mut fields = vec![
            r.estimator.to_string(),
            config.p().to_string(),
            config.q().to_string(),
            r.cardinality.to_string(),
            r.trials.to_string(),
            r.mean_rel_err.to_string(),
            r.median_rel_err.to_string(),
            r.stddev_rel_err.to_string(),
            r.rmse_rel.to_string(),
        ];
        fields.extend(r.quantiles.iter().map(|(_, v)| v.to_string()));
        fields.push(r.failures.to_string());
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }
    csv
}

/// CSV rows, header included, for joint experiment reports.
pub fn joint_simulate_csv(reports: &[JointReport]) -> String {
    let mut csv = String::from(JOINT_SIMULATE_HEADER);
    csv.push('\n');
    for r in reports {
        let mut fields = vec![r.card_a.to_string(), r.card_b.to_string(), r.card_x.to_string(), r.trials.to_string()];
        for group in [&r.rmse_inclusion_exclusion, &r.rmse_ml, &r.improvement] {
            fields.extend(group.iter().map(f64::to_string));
        }
        fields.push(r.failures.to_string());
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }
    csv
}

fn simulate(args: SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let config = sketch_config(args.p, args.q)?;
    let cards = parse_cards(&args.cards)?;
    let estimators = parse_estimators(&args.estimators)?;
    check_trials(args.trials)?;
    let reports = with_threads(args.threads, || {
        run_error_experiment(&cards, args.trials, config, &estimators, args.seed)
    })??;
    emit(&simulate_csv(config, &reports), args.out.as_deref(), out)
}

fn joint_simulate(args: JointSimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let config = sketch_config(args.p, args.q)?;
    let text = match args.configs.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure {
            code: 2,
            message: format!("cannot read {path}: {e}"),
        })?,
        None => args.configs.clone(),
    };
    let configs = parse_configs(&text)?;
    check_trials(args.trials)?;
    let reports = with_threads(args.threads, || {
        run_joint_experiment(&configs, args.trials, config, args.seed)
    })??;
    emit(&joint_simulate_csv(&reports), args.out.as_deref(), out)
}
