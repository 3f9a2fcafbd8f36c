//! `olc`: simulate load-side frequency control, solve the matching optimal
//! load control problem, certify trajectories and run property sweeps.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use olc::experiments::{certify, reduce, simulate, solve_scenario, sweep_delta_a};
use olc::netmodel::NetworkCase;
use olc::par::Execution;
use olc::scenario::{Scenario, VariantKind};
use olc::trajectory::{write_csv, CsvTrajectory};
use olc::verify::{run_verification, Analytic, Subject, VerifyOptions};
use olc::ErrorClass;

#[derive(Parser)]
#[command(name = "olc", version, about = "Load-side primary frequency control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Network case JSON; overrides the scenario's `case`.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Scenario JSON.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Controller variant: swing-only, base, perturbed, reduced, distributed-area.
    #[arg(long)]
    variant: Option<VariantKind>,
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<f64>,
    #[arg(long = "t-end", allow_hyphen_values = true)]
    t_end: Option<f64>,
    /// Convergence tolerance on the field norm.
    #[arg(long, allow_hyphen_values = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario; writes trajectory.csv and summary.json into --out.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the optimal load control problem directly.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify the final state of a recorded trajectory.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: PathBuf,
        /// Report tie lines carrying more than this many p.u.
        #[arg(long = "flow-limit")]
        flow_limit: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kron-reduce the zero-injection buses of a case.
    Reduce {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the perturbed law for each homogeneous perturbation.
    SweepDa {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
              default_value = "-0.4,-0.21,-0.2,-0.19,0")]
        deltas: Vec<f64>,
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized property checks of derivatives, fields and reduction.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<olc::Error>().map(olc::Error::class) {
            Some(ErrorClass::Numerical) => 2,
            _ => 1,
        };
        Failure { code, error }
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn load_scenario(c: &Common) -> anyhow::Result<Scenario> {
    let mut s = match (&c.scenario, &c.case) {
        (Some(path), case) => Scenario::load(path, case.as_deref())?,
        (None, Some(case)) => {
            let mut s = Scenario::new(NetworkCase::load(case)?);
            s.case_path = Some(case.clone());
            s
        }
        (None, None) => anyhow::bail!("pass --scenario or --case"),
    };
    if let Some(v) = c.variant {
        s.variant = v;
    }
    if let Some(dt) = c.dt {
        s.integrator.dt = dt;
    }
    if let Some(t) = c.t_end {
        s.integrator.t_end = t;
    }
    if let Some(tol) = c.tol {
        s.integrator.tol = tol;
    }
    s.integrator.validate()?;
    Ok(s)
}

/// Writes a line to stdout; a closed pipe (as with `| head`) is not an error.
fn print_line(text: &str) -> anyhow::Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => print_line(&text)?,
    }
    Ok(())
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate { common, out } => {
            let scenario = load_scenario(&common)?;
            let run = simulate(&scenario)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let csv = out.join("trajectory.csv");
            let file = File::create(&csv).with_context(|| format!("creating {}", csv.display()))?;
            let mut w = BufWriter::new(file);
            write_csv(&run.closed_loop, &run.samples, &mut w)?;
            w.flush()?;
            emit(&run.summary, Some(&out.join("summary.json")))?;
            emit(&run.summary, None)?;
            Ok(true)
        }
        Command::Oracle { common, out } => {
            let sol = solve_scenario(&load_scenario(&common)?)?;
            let text = sol.to_json_string()?;
            match out {
                Some(p) => fs::write(&p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
                None => print_line(&text)?,
            }
            Ok(true)
        }
        Command::Check {
            common,
            trajectory,
            flow_limit,
            out,
        } => {
            let scenario = load_scenario(&common)?;
            let cl = scenario.closed_loop()?;
            let file = File::open(&trajectory).with_context(|| format!("opening {}", trajectory.display()))?;
            let csv = CsvTrajectory::read(BufReader::new(file))?;
            let samples = (0..csv.rows.len())
                .map(|r| csv.sample(&cl, r))
                .collect::<olc::Result<Vec<_>>>()?;
            let report = certify(&cl, &samples, scenario.integrator.dt, flow_limit)?;
            emit(&report, out.as_deref())?;
            if out.is_some() {
                print_line(&format!("certification {}", if report.passed { "PASS" } else { "FAIL" }))?;
            }
            for n in &report.notes {
                eprintln!("note: {n}");
            }
            Ok(report.passed)
        }
        Command::Reduce { case, out } => {
            emit(&reduce(&NetworkCase::load(&case)?)?, out.as_deref())?;
            Ok(true)
        }
        Command::SweepDa {
            common,
            mut deltas,
            sequential,
            out,
        } => {
            let mut scenario = load_scenario(&common)?;
            scenario.variant = VariantKind::Perturbed;
            deltas.retain(|d| d.is_finite());
            let report = sweep_delta_a(&scenario, &deltas, execution(sequential))?;
            emit(&report, out.as_deref())?;
            Ok(true)
        }
        Command::Verify {
            common,
            seed,
            samples,
            sequential,
            out,
        } => {
            let scenario = load_scenario(&common)?;
            let grid = scenario.grid()?;
            let costs = scenario.costs_for(&grid);
            let gains = scenario.gains.build(&grid);
            let case = scenario.case.clone();
            let has_zero = !case.zero_buses().is_empty();
            let subject = Subject {
                grid: &grid,
                costs: &costs,
                gains: &gains,
                case: has_zero.then_some(&case),
            };
            let opts = VerifyOptions {
                seed,
                samples,
                execution: execution(sequential),
                ..VerifyOptions::default()
            };
            let report = run_verification(&subject, &Analytic, &opts)?;
            emit(&report, out.as_deref())?;
            for p in &report.properties {
                let status = match (p.skipped, p.passed) {
                    (true, _) => "SKIP",
                    (false, true) => "PASS",
                    (false, false) => "FAIL",
                };
                eprintln!("{status} {} (max error {:.3e}, tol {:.1e})", p.name, p.max_error, p.tolerance);
            }
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    // Usage errors share the input-error code; 2 is reserved for numerical failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
