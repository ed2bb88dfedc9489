use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dalembert::batch;
use dalembert::commands::{self, Outcome, RunOptions};
use dalembert::integrate::{Method, Projection};
use dalembert::scenario::{self, CheckKind};

/// Constrained dynamics with ideal reactions: simulate catalog or file
/// scenarios and check their structural invariants.
#[derive(Parser, Debug)]
#[command(name = "dalembert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the first-kind equations and write the trajectory CSV.
    Simulate(RunArgs),
    /// Multipliers and reaction at one state.
    Reactions {
        #[command(flatten)]
        run: RunArgs,
        /// `x..., v...` or `t, x..., v...`, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        state: Option<String>,
    },
    /// Run the property suite for a scenario.
    CheckInvariants(RunArgs),
    /// Compare first- and second-kind trajectories in the scenario's chart.
    CompareEmbeddings(RunArgs),
    /// Print a catalog scenario as a JSON document.
    Export {
        /// Catalog name.
        name: String,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Catalog name or path to a JSON scenario file.
    scenario: String,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// rk4 | rk45
    #[arg(long)]
    method: Option<Method>,
    /// off | positional | positional+velocity
    #[arg(long)]
    projection: Option<Projection>,
    /// RK45 local error tolerance and projection tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Directory for CSV files and report.txt / report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps; 1 runs everything sequentially.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed for random state sweeps.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Override a check threshold, e.g. `--threshold energy=1e-5`.
    #[arg(long = "threshold", value_name = "CHECK=VALUE")]
    thresholds: Vec<String>,
    /// Format of the report on stdout.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
}

impl RunArgs {
    fn options(&self) -> Result<RunOptions> {
        let mut thresholds = BTreeMap::new();
        for spec in &self.thresholds {
            let (name, value) = spec
                .split_once('=')
                .with_context(|| format!("threshold `{spec}` is not CHECK=VALUE"))?;
            let check: CheckKind = name.trim().parse()?;
            let value: f64 = value.trim().parse().with_context(|| format!("threshold value in `{spec}`"))?;
            if value.is_nan() || value < 0.0 {
                bail!("threshold for {check} must be non-negative");
            }
            thresholds.insert(check, value);
        }
        Ok(RunOptions {
            t_end: self.t_end,
            dt: self.dt,
            method: self.method,
            projection: self.projection,
            tol: self.tol,
            jobs: self.jobs,
            seed: self.seed,
            thresholds,
        })
    }
}

fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for a in &outcome.artifacts {
        let path = dir.join(&a.file_name);
        std::fs::write(&path, &a.contents).with_context(|| format!("writing {}", path.display()))?;
    }
    std::fs::write(dir.join("report.txt"), outcome.report.to_text())?;
    std::fs::write(dir.join("report.json"), outcome.report.to_json() + "\n")?;
    Ok(())
}

fn execute(run: &RunArgs, f: impl FnOnce(&scenario::Problem, &RunOptions) -> dalembert::Result<Outcome> + Send) -> Result<bool> {
    let opts = run.options()?;
    let problem = scenario::load_scenario(&run.scenario)
        .and_then(|s| s.build())
        .with_context(|| format!("scenario `{}`", run.scenario))?;
    let outcome = batch::with_jobs(opts.jobs, || f(&problem, &opts))?
        .with_context(|| format!("scenario `{}`", problem.scenario.name))?;
    match run.format {
        Format::Text => print!("{}", outcome.report.to_text()),
        Format::Json => println!("{}", outcome.report.to_json()),
    }
    if let Some(dir) = &run.out {
        write_outputs(dir, &outcome)?;
    }
    Ok(outcome.report.passed())
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(run) => execute(&run, commands::simulate),
        Command::Reactions { run, state } => execute(&run, |p, o| {
            let s = state.as_deref().map(|text| commands::parse_state(text, p.m())).transpose()?;
            commands::reactions(p, s.as_ref(), o)
        }),
        Command::CheckInvariants(run) => execute(&run, commands::check_invariants),
        Command::CompareEmbeddings(run) => execute(&run, commands::compare_embeddings),
        Command::Export { name } => {
            let s = scenario::catalog_scenario(&name)?;
            println!("{}", scenario::write_scenario(&s)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
