//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{load_config, validate, ExperimentConfig, Kind, Source};
use crate::error::{CliError, EXIT_CONFIG, EXIT_PASS, EXIT_TOLERANCE};
use crate::refine::{prepare_study, run_study};
use crate::report::write_json;
use crate::run::{execute, prepare};

const EXIT_HELP: &str = "\
Exit codes:
  0  every declared tolerance passed
  2  the run finished but a declared tolerance failed
  3  configuration error: unreadable or malformed config, unknown key, bad
     expression or field file, invalid grid or frame, output not writable
  4  solver failure: solvability violated (e.g. mass-mismatched densities),
     conjugate gradients did not converge, degenerate frame, nonpositive density
  5  integration failure: non-finite trajectory, positivity lost in the heat flow

Config errors are detected before any computation; no output directory is
created for a run that fails with exit code 3 during configuration.";

#[derive(Debug, Parser)]
#[command(
    name = "subrosa",
    version,
    about = "Horizontal transport, subelliptic solves and subriemannian geodesics on periodic grids",
    after_help = EXIT_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moser flow between two densities along the distribution.
    Moser {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: MoserArgs,
    },
    /// Normal geodesic of the subriemannian Hamiltonian.
    Geodesic(Common),
    /// Displacement interpolation and the Hamilton-Jacobi check.
    Interp(Common),
    /// Heat flow as the entropy gradient flow.
    Heat(Common),
    /// Horizontal Hodge decomposition and operator checks.
    Hodge(Common),
    /// Growth vectors of the bracket flag.
    Growth(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML experiment config; every key has a default.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Run a convergence study over N refinement levels.
    #[arg(long, value_name = "N")]
    pub refine: Option<usize>,
    /// Single worker thread; reductions use a fixed summation tree either way.
    #[arg(long)]
    pub deterministic: bool,
    /// Worker thread count (default: available cores).
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory (default: config `out`, then `out/<kind>`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MoserArgs {
    /// Nodes per axis, overriding `grid.dims`.
    #[arg(long, value_name = "N")]
    pub grid: Option<usize>,
    #[arg(long, value_name = "N")]
    pub steps: Option<usize>,
    /// Builtin frame name.
    #[arg(long, value_name = "NAME")]
    pub frame: Option<String>,
    /// Target density expression.
    #[arg(long, value_name = "EXPR")]
    pub target: Option<String>,
    /// Poisson solver tolerance.
    #[arg(long, value_name = "TOL")]
    pub tol: Option<f64>,
    /// Also write the JSON report here.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Write the flow map (SRFLW1) here.
    #[arg(long, value_name = "FILE")]
    pub dump_flow: Option<PathBuf>,
}

impl MoserArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(n) = self.grid {
            cfg.grid.dims = vec![n; cfg.grid.dims.len()];
        }
        if let Some(s) = self.steps {
            cfg.moser.steps = s;
        }
        if let Some(f) = &self.frame {
            cfg.frame.builtin = Some(f.clone());
            cfg.frame.fields = None;
        }
        if let Some(t) = &self.target {
            cfg.moser.target = Source::Expr(t.clone());
        }
        if let Some(t) = self.tol {
            cfg.moser.tol = t;
        }
    }
}

fn fail(e: &CliError) -> i32 {
    eprintln!("subrosa: {e}");
    e.exit_code()
}

pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let (kind, common, overrides) = match &cli.command {
        Command::Moser { common, overrides } => (Kind::Moser, common, Some(overrides)),
        Command::Geodesic(c) => (Kind::Geodesic, c, None),
        Command::Interp(c) => (Kind::Interp, c, None),
        Command::Heat(c) => (Kind::Heat, c, None),
        Command::Hodge(c) => (Kind::Hodge, c, None),
        Command::Growth(c) => (Kind::Growth, c, None),
    };
    match run(kind, common, overrides) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_TOLERANCE,
        Err(e) => fail(&e),
    }
}

fn run(kind: Kind, common: &Common, overrides: Option<&MoserArgs>) -> Result<bool, CliError> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = overrides {
        o.apply(&mut cfg);
    }
    validate(&cfg)?;
    let threads = if common.deterministic { Some(1) } else { common.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // The global pool can only be set once per process; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| Path::new("out").join(kind.name()));
    let runtime = json!({
        "threads": rayon::current_num_threads(),
        "deterministic": common.deterministic,
        "refine": common.refine,
        "out": out,
    });

    if let Some(n) = common.refine {
        let study = prepare_study(&cfg, kind, n)?;
        let result = run_study(&study)?;
        for (k, (r, (_, p))) in result.reports.iter().zip(&study.levels).enumerate() {
            r.write(&out.join(format!("level_{k}")), &echo(&p.config)?, &runtime)?;
        }
        write_json(&out.join("config.json"), &echo(&cfg)?)?;
        let summary = result.summary(kind, study.min_order, &runtime);
        write_json(&out.join("report.json"), &summary)?;
        println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
        return Ok(result.pass);
    }

    let prepared = prepare(kind, cfg)?;
    let report = execute(&prepared)?;
    let config = echo(&prepared.config)?;
    report.write(&out, &config, &runtime)?;
    if let Some(o) = overrides {
        if let Some(path) = &o.report {
            write_json(path, &report.summary(&config, &runtime))?;
        }
        if let Some(path) = &o.dump_flow {
            report.dump_flow(path)?;
        }
    }
    for c in &report.checks {
        println!(
            "{} {} = {:e} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.bound
        );
    }
    println!(
        "{} {} -> {}",
        kind.name(),
        if report.passed() { "passed" } else { "FAILED" },
        out.display()
    );
    Ok(report.passed())
}

fn echo(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    serde_json::to_value(cfg).map_err(|e| CliError::Output(e.to_string()))
}
