//! Command-line front end for `ratelqg`.
//!
//! Exit codes: 0 success, 2 infeasible budget, 3 invalid input, 4 solver or
//! numerical failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ratelqg::maxdet::{self, SolveStatus};
use ratelqg::model::load_plant;
use ratelqg::simulator::{self, orthogonality_check, whiteness_check, with_thread_cap};
use ratelqg::synthesis::{
    data_rate_asymptote, design_to_json, operational_bounds, synthesize, tradeoff_curve,
    TradeoffCurve, DEFAULT_RANK_THRESHOLD,
};
use ratelqg::{linalg, Error, PlantModel, SimConfig, SynthesisSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_FAILURE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "ratelqg",
    version,
    about = "Minimum directed-information LQG synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize the rate-optimal design at one cost budget.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        budget: f64,
    },
    /// Sweep budgets and write the rate/cost trade-off as CSV.
    Tradeoff {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        dmin: f64,
        #[arg(long, allow_negative_numbers = true)]
        dmax: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// Synthesize at a budget and check the design by Monte Carlo simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        budget: f64,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 64)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Leading stages dropped from the statistics.
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        /// Write the first trial as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Report the stabilizing rate of a stationary plant, by eigenvalues and by max-det.
    Asymptote {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    plant: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Barrier gap at which the solver stops.
    #[arg(long, allow_negative_numbers = true)]
    tolerance: Option<f64>,
    /// Relative eigenvalue cut for the sensor rank.
    #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_RANK_THRESHOLD)]
    rank_threshold: f64,
}

impl Common {
    fn settings(&self) -> Result<SynthesisSettings, Error> {
        let mut settings = SynthesisSettings::default();
        if let Some(tol) = self.tolerance {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "--tolerance must be positive, got {tol}"
                )));
            }
            settings.solver.tolerance = tol;
        }
        let rel = self.rank_threshold;
        if !(rel.is_finite() && rel > 0.0 && rel < 1.0) {
            return Err(Error::InvalidInput(format!(
                "--rank-threshold must lie in (0, 1), got {rel}"
            )));
        }
        settings.rank_threshold = rel;
        Ok(settings)
    }

    fn plant(&self) -> Result<PlantModel, Error> {
        load_plant(&self.plant).map_err(|e| match e {
            Error::Io(io) => Error::InvalidInput(format!("{}: {io}", self.plant.display())),
            other => other,
        })
    }
}

/// Parse `argv` (program name first), run the command, and return the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let text = e.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("ratelqg: {}", line.trim_start_matches("error: "));
            return EXIT_INVALID;
        }
    };
    match with_thread_cap(|| execute(&cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("ratelqg: {}", single_line(&e.to_string()));
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } | Error::ProblemInfeasible(_) => EXIT_INFEASIBLE,
        Error::Dimension(_)
        | Error::Validation(_)
        | Error::InvalidInput(_)
        | Error::Parse(_)
        | Error::Io(_) => EXIT_INVALID,
        Error::Solver(_) | Error::Numerical(_) | Error::Diverged { .. } => EXIT_FAILURE,
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn check_budget(name: &str, d: f64) -> Result<(), Error> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {d}"
        )))
    }
}

fn execute(command: &Command) -> Result<(), Error> {
    match command {
        Command::Synthesize { common, budget } => {
            check_budget("--budget", *budget)?;
            let settings = common.settings()?;
            let plant = common.plant()?;
            let design = synthesize(&plant, *budget, &settings)?;
            if let PlantModel::Stationary(p) = &plant {
                warn_singular_q(std::slice::from_ref(&p.q));
            }
            let mut text = design_to_json(&design)?;
            text.push('\n');
            emit(common.out.as_deref(), &text)?;
            if common.out.is_some() {
                let rank = design.max_rank();
                let mut summary = format!("DI_bits={} rank={}", num(design.di_bits), rank);
                if matches!(plant, PlantModel::Stationary(_)) {
                    let (_, upper) = operational_bounds(design.di_bits, rank);
                    write!(summary, " R_upper_bits={}", num(upper)).unwrap();
                }
                println!("{summary}");
            }
            Ok(())
        }
        Command::Tradeoff {
            common,
            dmin,
            dmax,
            points,
        } => {
            check_budget("--dmin", *dmin)?;
            check_budget("--dmax", *dmax)?;
            if dmin > dmax {
                return Err(Error::InvalidInput(format!(
                    "--dmin {dmin} exceeds --dmax {dmax}"
                )));
            }
            if *points == 0 {
                return Err(Error::InvalidInput("--points must be at least 1".into()));
            }
            let settings = common.settings()?;
            let plant = common.plant()?;
            let grid = linspace(*dmin, *dmax, *points);
            let curve = tradeoff_curve(&plant, &grid, &settings)?;
            if let PlantModel::Stationary(p) = &plant {
                warn_singular_q(std::slice::from_ref(&p.q));
            }
            match &common.out {
                Some(path) => emit_curve(&curve, path),
                None => emit(None, &curve_csv(&curve)),
            }
        }
        Command::Simulate {
            common,
            budget,
            steps,
            trials,
            seed,
            burn_in,
            trajectory,
        } => {
            check_budget("--budget", *budget)?;
            if *steps == 0 || *trials < 2 {
                return Err(Error::InvalidInput(
                    "--steps must be positive and --trials at least 2".into(),
                ));
            }
            if burn_in >= steps {
                return Err(Error::InvalidInput(
                    "--burn-in must be smaller than --steps".into(),
                ));
            }
            let settings = common.settings()?;
            let plant = common.plant()?;
            let design = synthesize(&plant, *budget, &settings)?;
            let mut config = SimConfig::new(*steps, *trials, *seed);
            config.burn_in = *burn_in;
            let result = simulator::simulate_closed_loop(&design, &plant, &config)?;
            let orth = orthogonality_check(&result);
            let white = whiteness_check(&result).ok();
            let report = serde_json::json!({
                "budget": budget,
                "DI_bits": design.di_bits,
                "J_analytic": design.j_analytic,
                "trials": result.trials,
                "stages": result.stages,
                "seed": seed,
                "cost_per_stage": result.cost_per_stage,
                "cost_stderr": result.cost_stderr,
                "orthogonality": {"estimate": orth.estimate, "stderr": orth.stderr, "pass": orth.pass},
                "whiteness_pass": white.as_ref().map(|w| w.pass),
                "max_state_norm": result.max_state_norm,
            });
            let mut text =
                serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
            text.push('\n');
            emit(common.out.as_deref(), &text)?;
            if let Some(path) = trajectory {
                let mut file = std::fs::File::create(path)?;
                simulator::write_trajectory_csv(&design, &plant, &config, 0, &mut file)?;
            }
            Ok(())
        }
        Command::Asymptote { common } => {
            let settings = common.settings()?;
            let PlantModel::Stationary(p) = common.plant()? else {
                return Err(Error::InvalidInput(
                    "the asymptote needs a stationary plant".into(),
                ));
            };
            let eig = data_rate_asymptote(&p.a);
            let sol = maxdet::solve(&maxdet::build_vstar_problem(&p.a, &p.w)?, &settings.solver)?;
            if sol.status != SolveStatus::Optimal {
                return Err(Error::Solver(
                    sol.message
                        .unwrap_or_else(|| "v* problem did not converge".into()),
                ));
            }
            let vstar = sol.objective_nats / std::f64::consts::LN_2;
            let text = format!("asymptote_bits,vstar_bits\n{},{}\n", num(eig), num(vstar));
            emit(common.out.as_deref(), &text)
        }
    }
}

/// Budgets `dmin..=dmax` evenly spaced; a single point sits at `dmin`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                lo + step * i as f64
            }
        })
        .collect()
}

/// Floats with 17 significant digits, enough to round-trip.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn curve_csv(curve: &TradeoffCurve) -> String {
    let mut out = String::new();
    if let Some(a) = curve.asymptote_bits {
        writeln!(out, "# asymptote_bits={}", num(a)).unwrap();
    }
    writeln!(out, "# Dmin={}", num(curve.d_min)).unwrap();
    out.push_str("D,DI_bits,rank,R_upper_bits,feasible\n");
    for s in &curve.samples {
        let di = s.di_bits.map(num).unwrap_or_default();
        let rank = s.rank.map(|r| r.to_string()).unwrap_or_default();
        let upper = s.r_upper_bits.map(num).unwrap_or_default();
        writeln!(
            out,
            "{},{di},{rank},{upper},{}",
            num(s.d),
            u8::from(s.feasible())
        )
        .unwrap();
    }
    out
}

/// Write `curve` to `path` in the trade-off CSV format.
pub fn emit_curve(curve: &TradeoffCurve, path: &Path) -> Result<(), Error> {
    if curve.samples.is_empty() {
        return Err(Error::InvalidInput("trade-off curve has no samples".into()));
    }
    std::fs::write(path, curve_csv(curve))?;
    Ok(())
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn warn_singular_q(q: &[ratelqg::Mat]) {
    let singular = q
        .iter()
        .any(|q| linalg::min_eigenvalue(q) <= 1e-12 * linalg::norm(q).max(f64::MIN_POSITIVE));
    if singular {
        eprintln!("ratelqg: warning: Q is singular; the coding-rate upper bound assumes Q positive definite");
    }
}
