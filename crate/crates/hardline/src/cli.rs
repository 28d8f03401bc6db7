//! Command-line front end.
//!
//! Exit status: 0 pass, 1 usage or configuration error, 2 domain error (an
//! input the mathematics rejects), 3 a verification found a violation.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use hardline_core::flow::trajectory;
use hardline_core::geometry::{cone_membership, conserved_quantities};
use hardline_core::identity_suite::{run_suite, sigma_star_certificate, SuiteOptions};
use hardline_core::measure::{invariance_report, ChartBox, MCConfig, Verdict};
use hardline_core::scattering::{pde_residual, sample_cone, JacobianMethod, PdeOptions, DEFAULT_MIN_GAP};
use hardline_core::{MeasureSpec, PhasePoint, ScatteringMap, Side};
use serde_json::json;

use crate::battery::{self, BATTERY_MARGIN, BATTERY_SAMPLES, BATTERY_SEED, BATTERY_TIMES};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::executor::executor;
use crate::formats::{fmt_short, join, load_linear_map, parse_dims, parse_real, parse_vector, trajectory_csv};
use crate::report::{self, certificate_json, scorecard_json, InvarianceJson, PhiJson};

#[derive(Debug, Parser)]
#[command(name = "hardline", version, about = "Simultaneous-collision hard-rod billiards: flows, scattering maps and invariant measures")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply a scattering map to a pre-collisional velocity.
    Scatter(RunArgs),
    /// Sample a trajectory and print it as CSV.
    Simulate(RunArgs),
    /// Run a verification and write a JSON report.
    Verify {
        #[command(subcommand)]
        kind: VerifyKind,
    },
}

#[derive(Debug, Subcommand)]
enum VerifyKind {
    /// Closed-form identities against numeric oracles.
    Identities(RunArgs),
    /// Jacobian determinant equation of a scattering map.
    Pde(RunArgs),
    /// Pushforward invariance of a measure under the flow.
    Invariance(RunArgs),
    /// Exact facts about the canonical map.
    Certificate(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
struct RunArgs {
    /// sigma-star, reversal, negation, or @file.json with {"n", "rows"}.
    #[arg(long)]
    map: Option<String>,
    /// Comma-separated velocities.
    #[arg(long, allow_hyphen_values = true)]
    v: Option<String>,
    /// Comma-separated positions.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Comma-separated times.
    #[arg(long = "t", visible_alias = "times", allow_hyphen_values = true)]
    t: Option<String>,
    /// liouville or hausdorff.
    #[arg(long)]
    measure: Option<String>,
    /// Sample count.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo worker threads; results do not depend on this.
    #[arg(long, env = "HARDLINE_THREADS")]
    workers: Option<usize>,
    /// Dimensions: "3,4,5" or "3..6".
    #[arg(long)]
    dims: Option<String>,
    /// Chart box "lo:hi,..." over x1..xN, u1, u2.
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Flags merged over the configuration file.
struct Run {
    args: RunArgs,
    cfg: RunConfig,
}

impl Run {
    fn new(args: RunArgs) -> Result<Self, CliError> {
        let cfg = match &args.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(Self { args, cfg })
    }

    fn map(&self) -> Result<ScatteringMap, CliError> {
        parse_map(self.args.map.as_deref().or(self.cfg.map.as_deref()).unwrap_or("sigma-star"))
    }

    fn vector(&self, flag: &Option<String>, file: &Option<Vec<f64>>, name: &str) -> Result<Vec<f64>, CliError> {
        match (flag, file) {
            (Some(s), _) => parse_vector(s),
            (None, Some(v)) => Ok(v.clone()),
            (None, None) => Err(CliError::usage(format!("--{name} is required"))),
        }
    }

    fn times(&self, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match (&self.args.t, &self.cfg.t) {
            (Some(s), _) => parse_vector(s),
            (None, Some(t)) => Ok(t.clone().into_vec()),
            (None, None) => Ok(default.to_vec()),
        }
    }

    fn dims(&self, default: &[usize]) -> Result<Vec<usize>, CliError> {
        let dims = match (&self.args.dims, &self.cfg.dims) {
            (Some(s), _) => parse_dims(s)?,
            (None, Some(d)) => d.clone(),
            (None, None) => default.to_vec(),
        };
        if dims.is_empty() {
            return Err(CliError::usage("empty dimension list"));
        }
        Ok(dims)
    }

    fn n(&self, default: u64) -> u64 {
        self.args.n.or(self.cfg.n).unwrap_or(default)
    }

    fn seed(&self, default: u64) -> u64 {
        self.args.seed.or(self.cfg.seed).unwrap_or(default)
    }

    fn workers(&self) -> Result<usize, CliError> {
        let w = self.args.workers.or(self.cfg.workers).unwrap_or(1);
        if w == 0 {
            return Err(CliError::usage("workers must be at least 1"));
        }
        Ok(w)
    }

    fn region(&self) -> Result<Option<ChartBox>, CliError> {
        match (&self.args.region, &self.cfg.region) {
            (Some(s), _) => parse_region(s).map(Some),
            (None, Some(r)) => r.to_box().map(Some),
            (None, None) => Ok(None),
        }
    }

    fn out(&self) -> Option<&Path> {
        self.args.out.as_deref().or(self.cfg.out.as_deref())
    }
}

pub fn parse_map(s: &str) -> Result<ScatteringMap, CliError> {
    match s {
        "sigma-star" => Ok(ScatteringMap::SigmaStar),
        "reversal" => Ok(ScatteringMap::Reversal),
        "negation" => Ok(ScatteringMap::Negation),
        _ => match s.strip_prefix('@') {
            Some(path) => Ok(ScatteringMap::Linear(load_linear_map(Path::new(path))?)),
            None => Err(CliError::usage(format!("unknown map {s:?}; expected sigma-star, reversal, negation or @file.json"))),
        },
    }
}

fn parse_measure(s: &str) -> Result<MeasureSpec, CliError> {
    match s {
        "liouville" => Ok(MeasureSpec::Liouville),
        "hausdorff" => Ok(MeasureSpec::Hausdorff),
        _ => Err(CliError::usage(format!("unknown measure {s:?}; expected liouville or hausdorff"))),
    }
}

/// `"lo:hi,lo:hi,..."`.
pub fn parse_region(s: &str) -> Result<ChartBox, CliError> {
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for part in s.split(',') {
        let (a, b) = part
            .split_once(':')
            .ok_or_else(|| CliError::usage(format!("region interval {part:?} is not lo:hi")))?;
        let bad = || CliError::usage(format!("bad region bound in {part:?}"));
        lo.push(parse_real(a).ok_or_else(bad)?);
        hi.push(parse_real(b).ok_or_else(bad)?);
    }
    ChartBox::new(lo, hi).map_err(|e| CliError::usage(format!("region: {e}")))
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::usage(format!("{}: {e}", p.display()))),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn cmd_scatter(run: &Run, stdout: &mut dyn Write) -> Result<(), CliError> {
    let map = run.map()?;
    let v = run.vector(&run.args.v, &run.cfg.v, "v")?;
    if !cone_membership(&v, Side::Pre)? {
        return Err(CliError::Domain(hardline_core::Error::DomainViolation));
    }
    let w = map.apply(&v)?;
    let (p0, e0) = conserved_quantities(&v);
    let (p1, e1) = conserved_quantities(&w);
    writeln!(stdout, "{}", join(&w, fmt_short))?;
    writeln!(stdout, "momentum: {} -> {}", fmt_short(p0), fmt_short(p1))?;
    writeln!(stdout, "energy: {} -> {}", fmt_short(e0), fmt_short(e1))?;
    writeln!(stdout, "input pre-collisional: {}", yes_no(true))?;
    writeln!(stdout, "output post-collisional: {}", yes_no(cone_membership(&w, Side::Post)?))?;
    Ok(())
}

fn cmd_simulate(run: &Run, stdout: &mut dyn Write) -> Result<(), CliError> {
    let map = run.map()?;
    let x = run.vector(&run.args.x, &run.cfg.x, "x")?;
    let v = run.vector(&run.args.v, &run.cfg.v, "v")?;
    let times = run.times(&[0.0])?;
    if !times.windows(2).all(|w| w[0] <= w[1]) {
        return Err(CliError::usage("times must be sorted"));
    }
    let tol = run.cfg.tolerance.build()?;
    let z = PhasePoint::new(x, v)?;
    let traj = trajectory(&map, &z, &times, &tol)?;
    emit(run.out(), &trajectory_csv(&traj), stdout)
}

fn finish(run: &Run, body: serde_json::Value, pass: bool, what: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = report::render(&body)?;
    emit(run.out(), &text, stdout)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Violation(format!("{what}: verification failed")))
    }
}

fn cmd_identities(run: &Run, stdout: &mut dyn Write) -> Result<(), CliError> {
    let dims = run.dims(&[3, 4, 5])?;
    if dims.iter().any(|n| !(3..=8).contains(n)) {
        return Err(CliError::usage("identity dimensions must lie in 3..8"));
    }
    let card = run_suite(run.n(1000) as usize, &dims, run.seed(42), &SuiteOptions::default())?;
    finish(run, scorecard_json(&card), card.pass, "identities", stdout)
}

fn cmd_certificate(run: &Run, stdout: &mut dyn Write) -> Result<(), CliError> {
    let dims = run.dims(&(3..=10).collect::<Vec<_>>())?;
    if dims.iter().any(|n| !(3..=10).contains(n)) {
        return Err(CliError::usage("certificate dimensions must lie in 3..10"));
    }
    let cert = sigma_star_certificate(&dims, run.n(1000) as usize, run.seed(0))?;
    finish(run, certificate_json(&cert), cert.pass, "certificate", stdout)
}

/// Residual threshold for choosing a branch with the analytic Jacobian.
const PDE_ANALYTIC_TOL: f64 = 1e-10;
const PDE_FD_TOL: f64 = 1e-5;

fn cmd_pde(run: &Run, stdout: &mut dyn Write) -> Result<(), CliError> {
    let map = run.map()?;
    let default_dims: Vec<usize> = match map.dimension() {
        Some(n) => vec![n],
        None => (3..=6).collect(),
    };
    let dims = run.dims(&default_dims)?;
    let (n, seed) = (run.n(10_000) as usize, run.seed(0));
    let mut entries = Vec::new();
    let mut pass = true;
    for &dim in &dims {
        let samples = sample_cone(dim, Side::Pre, n, seed, DEFAULT_MIN_GAP);
        let exact = pde_residual(&map, &samples, &PdeOptions { method: JacobianMethod::Analytic, threshold: PDE_ANALYTIC_TOL })?;
        let fd = pde_residual(&map, &samples, &PdeOptions { method: JacobianMethod::FiniteDiff(1e-6), threshold: PDE_FD_TOL })?;
        let ok = exact.chosen_sign.is_some() && fd.chosen_sign == exact.chosen_sign;
        pass &= ok;
        entries.push(json!({
            "n": dim,
            "samples": exact.samples,
            "skipped": exact.skipped,
            "residual_plus": exact.max_abs_residual_plus,
            "residual_minus": exact.max_abs_residual_minus,
            "fd_residual_plus": fd.max_abs_residual_plus,
            "fd_residual_minus": fd.max_abs_residual_minus,
            "sign": exact.chosen_sign,
            "pass": ok,
        }));
    }
    let body = json!({
        "kind": "pde",
        "map": map.name(),
        "seed": seed,
        "tolerance_analytic": PDE_ANALYTIC_TOL,
        "tolerance_fd": PDE_FD_TOL,
        "entries": entries,
        "pass": pass,
    });
    finish(run, body, pass, "pde", stdout)
}

fn cmd_invariance(run: &Run, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let map = run.map()?;
    let measure = parse_measure(run.args.measure.as_deref().or(run.cfg.measure.as_deref()).unwrap_or("liouville"))?;
    let times = run.times(&BATTERY_TIMES)?;
    let bumps = run.cfg.battery.clone().unwrap_or_else(battery::default_battery);
    if bumps.is_empty() {
        return Err(CliError::usage("empty battery"));
    }
    let phis = battery::test_functions(&bumps)?;
    let thresholds = run.cfg.thresholds.build()?;
    let workers = run.workers()?;
    let cfg = MCConfig {
        n_samples: run.n(BATTERY_SAMPLES),
        seed: run.seed(BATTERY_SEED),
        workers,
        region: run.region()?,
        delta_x: run.cfg.delta_x.unwrap_or(BATTERY_MARGIN),
        delta_u: run.cfg.delta_u.unwrap_or(BATTERY_MARGIN),
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let exec = executor(workers).map_err(|e| CliError::usage(e.to_string()))?;
    let mut per_phi = Vec::new();
    for &t in &times {
        for r in invariance_report(&measure, &map, t, &phis, &cfg, &thresholds, exec.as_ref())? {
            writeln!(stderr, "t={t} radius={} z={:.2} {}", r.radius, r.z_score, r.verdict.as_str())?;
            per_phi.push(PhiJson::new(t, &r));
        }
    }
    let verdicts: Vec<&str> = per_phi.iter().map(|p| p.verdict).collect();
    let verdict = if verdicts.contains(&Verdict::Violated.as_str()) {
        Verdict::Violated
    } else if verdicts.contains(&Verdict::Inconclusive.as_str()) {
        Verdict::Inconclusive
    } else {
        Verdict::Invariant
    };
    let body = InvarianceJson {
        measure: measure.name().into(),
        map: map.name().into(),
        n: cfg.n_samples,
        seed: cfg.seed,
        t: if times.len() == 1 { json!(times[0]) } else { json!(times) },
        delta_x: cfg.delta_x,
        delta_u: cfg.delta_u,
        per_phi,
        verdict: verdict.as_str(),
    };
    let body = serde_json::to_value(body).map_err(|e| CliError::usage(e.to_string()))?;
    let what = format!("invariance ({})", verdict.as_str());
    finish(run, body, verdict == Verdict::Invariant, &what, stdout)
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Scatter(a) => cmd_scatter(&Run::new(a)?, stdout),
        Command::Simulate(a) => cmd_simulate(&Run::new(a)?, stdout),
        Command::Verify { kind } => match kind {
            VerifyKind::Identities(a) => cmd_identities(&Run::new(a)?, stdout),
            VerifyKind::Pde(a) => cmd_pde(&Run::new(a)?, stdout),
            VerifyKind::Invariance(a) => cmd_invariance(&Run::new(a)?, stdout, stderr),
            VerifyKind::Certificate(a) => cmd_certificate(&Run::new(a)?, stdout),
        },
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    1
                }
            };
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let prefix = match e {
                CliError::Domain(_) => "domain error",
                CliError::Violation(_) => "violation",
                _ => "error",
            };
            let detail = match &e {
                CliError::Domain(hardline_core::Error::DomainViolation) => {
                    "velocity is not pre-collisional (components must be non-increasing)".to_string()
                }
                other => other.to_string(),
            };
            let _ = writeln!(stderr, "{prefix}: {detail}");
            e.code()
        }
    }
}
