mod report;
mod stats;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use abscissa::error::Error;
use abscissa::problems::{self, ProblemSpec};
use abscissa::solver::{run_multistart, Mode, SolverConfig, SurfacePolicy};
use clap::{Args, Parser, Subcommand, ValueEnum};

use report::{BenchReport, RunReport, Stats, TrialEntry};
use stats::Summary;

/// Spectral abscissa minimization by trust-region SLP/SQP.
#[derive(Debug, Parser)]
#[command(name = "abscissa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Multi-start optimization of one problem.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Per-iteration TSV trace of every start.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// JSON report path (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated independent multi-start trials with summary statistics.
    Bench {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Number of trials; trial `t` uses seed `seed + t`.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Abscissa on a square grid for a two-parameter problem (TSV).
    Grid {
        #[command(flatten)]
        problem: ProblemArgs,
        /// x1 range then x2 range.
        #[arg(long, num_args = 4, value_names = ["X1_LO", "X1_HI", "X2_LO", "X2_HI"], allow_negative_numbers = true, default_values_t = [-3.0, 3.0, -3.0, 3.0])]
        range: Vec<f64>,
        /// Points per axis.
        #[arg(long, default_value_t = 101)]
        res: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ProblemArgs {
    /// Problem file in the text format.
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Built-in problem name.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Slp,
    Sqp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    All,
    #[value(name = "top-2n")]
    Top2n,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Slp)]
    mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop when the step infinity norm falls to this value.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_iters: usize,
    /// Which eigenvalue surfaces enter the subproblem.
    #[arg(long, value_enum, default_value_t = PolicyArg::All)]
    policy: PolicyArg,
    /// Bound on stored memory cuts (0 for unbounded).
    #[arg(long, default_value_t = 64)]
    memory_cap: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            mode: match self.mode {
                ModeArg::Slp => Mode::Slp,
                ModeArg::Sqp => Mode::Sqp,
            },
            policy: match self.policy {
                PolicyArg::All => SurfacePolicy::All,
                PolicyArg::Top2n => SurfacePolicy::TopTwiceParams,
            },
            starts: self.starts,
            seed: self.seed,
            delta_m: self.tol,
            k_max: self.max_iters,
            memory_cap: (self.memory_cap > 0).then_some(self.memory_cap),
            ..SolverConfig::default()
        }
    }
}

/// Exit status 1 for bad input, 2 when the optimization itself fails.
enum Failure {
    Usage(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::AllStartsFailed { .. } | Error::EigenConvergence { .. } | Error::DelayEigen(_) | Error::DelayAccuracy { .. } => {
                Failure::Solver(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load_problem(args: &ProblemArgs) -> Result<ProblemSpec, Failure> {
    match (&args.problem, &args.builtin) {
        (Some(path), _) => problems::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        (None, Some(name)) => Ok(problems::builtin(name)?),
        (None, None) => Err(Failure::Usage("one of --problem or --builtin is required".into())),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<(), Failure> {
    let mut w = open_out(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn solve(problem: &ProblemArgs, solver: &SolverArgs, trace: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let spec = load_problem(problem)?;
    let model = spec.model()?;
    let cfg = solver.config();
    cfg.validate()?;
    let result = run_multistart(&model, &cfg)?;
    if let Some(path) = trace {
        let mut w = open_out(Some(path))?;
        report::write_trace(&mut w, &result, cfg.initial_radius)?;
        w.flush()?;
    }
    write_json(out, &RunReport::new(&spec.name, spec.kind().as_str(), &cfg, &result))
}

fn bench(problem: &ProblemArgs, solver: &SolverArgs, trials: usize, out: Option<&Path>) -> Result<(), Failure> {
    if trials == 0 {
        return Err(Failure::Usage("--trials must be positive".into()));
    }
    let spec = load_problem(problem)?;
    let model = spec.model()?;
    let base = solver.config();
    base.validate()?;
    let mut entries = Vec::with_capacity(trials);
    for trial in 0..trials {
        let seed = base.seed.wrapping_add(trial as u64);
        let cfg = SolverConfig { seed, ..base.clone() };
        let clock = Instant::now();
        let result = run_multistart(&model, &cfg)?;
        entries.push(TrialEntry {
            trial,
            seed,
            best_index: result.best_index,
            best_x: result.x.as_slice().to_vec(),
            best_alpha: result.alpha,
            failed_starts: result.per_start.iter().filter(|s| s.result.is_err()).count(),
            time_s: clock.elapsed().as_secs_f64(),
        });
    }
    let alphas: Vec<f64> = entries.iter().map(|t| t.best_alpha).collect();
    let times: Vec<f64> = entries.iter().map(|t| t.time_s).collect();
    let report = BenchReport {
        problem: spec.name.clone(),
        kind: spec.kind().as_str(),
        mode: base.mode.as_str(),
        config: (&base).into(),
        stable_trials: alphas.iter().filter(|a| **a < 0.0).count(),
        stats: Stats {
            alpha: Summary::of(&alphas),
            time_s: Summary::of(&times),
        },
        trials: entries,
    };
    write_json(out, &report)
}

fn grid(problem: &ProblemArgs, range: &[f64], res: usize, out: Option<&Path>) -> Result<(), Failure> {
    let spec = load_problem(problem)?;
    let model = spec.model()?;
    let points = problems::grid_eval(&model, (range[0], range[1]), (range[2], range[3]), res)?;
    let mut w = open_out(out)?;
    problems::write_grid_tsv(&mut w, &points)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Solve {
            problem,
            solver,
            trace,
            out,
        } => solve(problem, solver, trace.as_deref(), out.as_deref()),
        Command::Bench {
            problem,
            solver,
            trials,
            out,
        } => bench(problem, solver, *trials, out.as_deref()),
        Command::Grid { problem, range, res, out } => grid(problem, range, *res, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}
