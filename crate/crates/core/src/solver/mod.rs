//! Outer SLP/SQP iteration: cut assembly, trust-region step, acceptance and
//! descent tests, backtracking, gradient memory and multi-start driver.

mod memory;
mod model;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::derivatives::{dedup_cuts, make_cut, SurfaceCut};
use crate::error::{Error, Result};
use crate::numeric::EigenTriple;
use crate::subproblem::{self, SubproblemInstance};

pub use memory::MemorySet;
pub use model::SpectralModel;

/// Subproblem flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Slp,
    Sqp,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Slp => "slp",
            Mode::Sqp => "sqp",
        }
    }
}

/// Which eigenvalue surfaces are linearized at each iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfacePolicy {
    All,
    /// The `2n` surfaces with largest real part.
    TopTwiceParams,
}

impl SurfacePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SurfacePolicy::All => "all",
            SurfacePolicy::TopTwiceParams => "top-2n",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Radius contraction after a rejected step, in (0, 1).
    pub gamma1: f64,
    /// Radius expansion after a full step, > 1.
    pub gamma2: f64,
    /// Step norm below which the run stops (if no memory was added).
    pub delta_m: f64,
    pub initial_radius: f64,
    pub k_max: usize,
    pub ls_max: usize,
    /// Backtracking factor in (0, 1).
    pub eta: f64,
    /// Number of random starts.
    pub starts: usize,
    pub mode: Mode,
    pub policy: SurfacePolicy,
    /// FIFO bound on stored memory cuts; `None` keeps everything.
    pub memory_cap: Option<usize>,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma1: 0.1,
            gamma2: 2.0,
            delta_m: 1e-4,
            initial_radius: 1.0,
            k_max: 20,
            ls_max: 20,
            eta: 0.5,
            starts: 10,
            mode: Mode::Slp,
            policy: SurfacePolicy::All,
            memory_cap: Some(64),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("invalid solver config: {what}")));
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0) {
            return bad("gamma1 must lie in (0, 1)");
        }
        if !(self.gamma2 > 1.0) || !self.gamma2.is_finite() {
            return bad("gamma2 must exceed 1");
        }
        if !(self.delta_m > 0.0) {
            return bad("delta_m must be positive");
        }
        if !(self.initial_radius > 0.0) || !self.initial_radius.is_finite() {
            return bad("initial radius must be positive");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if self.starts == 0 {
            return bad("at least one start is required");
        }
        if self.memory_cap == Some(0) {
            return bad("memory cap must be positive");
        }
        Ok(())
    }
}

/// How a step ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    FullStep,
    LineSearch,
    Rejected,
    /// The subproblem solver failed; the radius was contracted.
    SubproblemFailed,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::FullStep => "full-step",
            StepKind::LineSearch => "line-search",
            StepKind::Rejected => "rejected",
            StepKind::SubproblemFailed => "subproblem-failed",
        }
    }

    pub fn is_accepted(self) -> bool {
        matches!(self, StepKind::FullStep | StepKind::LineSearch)
    }
}

/// State after iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub alpha: f64,
    pub radius: f64,
    /// `||dx||_inf` of the subproblem solution.
    pub step_norm: f64,
    pub accepted: StepKind,
    pub memory_size: usize,
    pub memory_added: bool,
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct RunState {
    pub x: DVector<f64>,
    pub alpha: f64,
    pub radius: f64,
    pub memory: MemorySet,
    pub k: usize,
    spectrum: Option<Vec<EigenTriple>>,
    rng: ChaCha8Rng,
}

impl RunState {
    pub fn new<M: SpectralModel + ?Sized>(model: &M, x0: DVector<f64>, cfg: &SolverConfig, rng: ChaCha8Rng) -> Result<Self> {
        if x0.len() != model.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "start has {} entries, model has {} parameters",
                x0.len(),
                model.n_params()
            )));
        }
        let spectrum = model.spectrum(&x0)?;
        let alpha = top_alpha(&spectrum)?;
        Ok(RunState {
            x: x0,
            alpha,
            radius: cfg.initial_radius,
            memory: MemorySet::new(cfg.memory_cap),
            k: 0,
            spectrum: Some(spectrum),
            rng,
        })
    }
}

fn top_alpha(spectrum: &[EigenTriple]) -> Result<f64> {
    spectrum
        .first()
        .map(|t| t.lambda.re)
        .ok_or_else(|| Error::InvalidInput("empty spectrum".into()))
}

/// Subproblem at `x` plus the top-surface gradient used by the descent test.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub instance: SubproblemInstance,
    pub top_gradient: DVector<f64>,
    /// Whether `x` had to be perturbed off a non-semi-simple top eigenvalue.
    pub jittered: bool,
}

fn cuts_at<M: SpectralModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    spectrum: &[EigenTriple],
    cfg: &SolverConfig,
) -> Result<(Vec<SurfaceCut>, DVector<f64>)> {
    let top = spectrum.first().ok_or_else(|| Error::InvalidInput("empty spectrum".into()))?;
    if !top.is_semisimple() {
        return Err(Error::DegeneratePoint);
    }
    let top_gradient = model.gradient(x, top).map_err(|_| Error::DegeneratePoint)?;
    let count = match cfg.policy {
        SurfacePolicy::All => spectrum.len(),
        SurfacePolicy::TopTwiceParams => (2 * model.n_params()).max(1).min(spectrum.len()),
    };
    let mut cuts = vec![make_cut(x, top, &top_gradient)];
    for t in &spectrum[1..count] {
        if !t.is_semisimple() {
            continue;
        }
        if let Ok(g) = model.gradient(x, t) {
            cuts.push(make_cut(x, t, &g));
        }
    }
    Ok((dedup_cuts(cuts), top_gradient.map(|z| z.re)))
}

fn assemble_inner<M: SpectralModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    spectrum: Option<Vec<EigenTriple>>,
    cfg: &SolverConfig,
    mem: &MemorySet,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Assembled> {
    let spectrum = match spectrum {
        Some(s) => s,
        None => model.spectrum(x)?,
    };
    let (point, spectrum, jittered) = if spectrum.first().is_some_and(|t| t.is_semisimple()) {
        (x.clone(), spectrum, false)
    } else {
        let jitter = x.map(|v| v + 1e-10 * (1.0 + v.abs()) * rng.random_range(-1.0..1.0));
        let s = model.spectrum(&jitter)?;
        (jitter, s, true)
    };
    let (current_cuts, top_gradient) = cuts_at(model, &point, &spectrum, cfg)?;
    let alpha_k = top_alpha(&spectrum)?;
    let hessian = match cfg.mode {
        Mode::Slp => None,
        Mode::Sqp => {
            let n = model.n_params();
            let h = model
                .hessian(&point, &spectrum[0])
                .map(|h| h.map(|z| z.re))
                .unwrap_or_else(|_| DMatrix::zeros(n, n));
            Some((&h + h.transpose()) * 0.5)
        }
    };
    Ok(Assembled {
        instance: SubproblemInstance {
            current_cuts,
            memory_cuts: mem.active(&point, radius),
            alpha_k,
            radius,
            hessian,
            x_k: point,
        },
        top_gradient,
        jittered,
    })
}

/// Build the subproblem at `x`. A non-semi-simple top eigenvalue triggers
/// one relative `1e-10` random perturbation of `x`; a second failure gives
/// [`Error::DegeneratePoint`].
pub fn assemble_cuts<M: SpectralModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    cfg: &SolverConfig,
    mem: &MemorySet,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Assembled> {
    assemble_inner(model, x, None, cfg, mem, radius, rng)
}

fn try_spectrum<M: SpectralModel + ?Sized>(model: &M, x: &DVector<f64>) -> Option<(f64, Vec<EigenTriple>)> {
    let s = model.spectrum(x).ok()?;
    let a = top_alpha(&s).ok()?;
    a.is_finite().then_some((a, s))
}

/// One outer iteration. Updates `state` in place and returns its record.
pub fn sqp_step<M: SpectralModel + ?Sized>(model: &M, state: &mut RunState, cfg: &SolverConfig) -> Result<IterateRecord> {
    let alpha_k = state.alpha;
    let cached = state.spectrum.take();
    let assembled = assemble_inner(
        model,
        &state.x,
        cached.clone(),
        cfg,
        &state.memory,
        state.radius,
        &mut state.rng,
    )?;
    state.k += 1;
    let origin = assembled.instance.x_k.clone();

    let sol = match subproblem::solve(&assembled.instance) {
        Ok(s) => s,
        Err(Error::Subproblem(_)) => {
            state.radius *= cfg.gamma1;
            state.spectrum = cached;
            return Ok(record(state, 0.0, StepKind::SubproblemFailed, false));
        }
        Err(e) => return Err(e),
    };
    let dx = sol.dx;
    let step_norm = dx.amax();
    let trial = &origin + &dx;

    let trial_eval = try_spectrum(model, &trial);
    if let Some((alpha_trial, spectrum)) = &trial_eval {
        if *alpha_trial < alpha_k {
            state.x = trial;
            state.alpha = *alpha_trial;
            state.radius *= cfg.gamma2;
            state.spectrum = Some(spectrum.clone());
            return Ok(record(state, step_norm, StepKind::FullStep, false));
        }
    }

    let mut memory_added = false;
    if let Some((alpha_trial, spectrum)) = &trial_eval {
        if *alpha_trial > alpha_k && spectrum[0].is_semisimple() {
            if let Ok(g) = model.gradient(&trial, &spectrum[0]) {
                memory_added = state.memory.insert(make_cut(&trial, &spectrum[0], &g));
            }
        }
    }

    if assembled.top_gradient.dot(&dx) < 0.0 {
        let mut t = 1.0;
        for _ in 0..cfg.ls_max {
            t *= cfg.eta;
            let point = &origin + &dx * t;
            if let Some((a, spectrum)) = try_spectrum(model, &point) {
                if a < alpha_k {
                    state.x = point;
                    state.alpha = a;
                    state.radius = t * step_norm;
                    state.spectrum = Some(spectrum);
                    return Ok(record(state, step_norm, StepKind::LineSearch, memory_added));
                }
            }
        }
    }
    state.radius *= cfg.gamma1;
    state.spectrum = cached;
    Ok(record(state, step_norm, StepKind::Rejected, memory_added))
}

fn record(state: &RunState, step_norm: f64, kind: StepKind, memory_added: bool) -> IterateRecord {
    IterateRecord {
        k: state.k,
        x: state.x.clone(),
        alpha: state.alpha,
        radius: state.radius,
        step_norm,
        accepted: kind,
        memory_size: state.memory.len(),
        memory_added,
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// Small step with no new memory.
    Converged,
    MaxIterations,
    /// Top eigenvalue stayed non-semi-simple after perturbation.
    Degenerate,
    /// Any other error; the run keeps its last iterate.
    Failed(String),
}

impl Termination {
    pub fn as_str(&self) -> &str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max-iterations",
            Termination::Degenerate => "degenerate",
            Termination::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub x0: DVector<f64>,
    pub alpha0: f64,
    pub x: DVector<f64>,
    pub alpha: f64,
    pub trace: Vec<IterateRecord>,
    pub termination: Termination,
}

impl RunResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

fn jitter_rng(seed: u64, start: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908);
    rng.set_stream(start as u64);
    rng
}

fn start_rng(seed: u64, start: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    rng
}

fn run_with_rng<M: SpectralModel + ?Sized>(model: &M, x0: DVector<f64>, cfg: &SolverConfig, rng: ChaCha8Rng) -> Result<RunResult> {
    cfg.validate()?;
    let mut state = RunState::new(model, x0.clone(), cfg, rng)?;
    let alpha0 = state.alpha;
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIterations;
    while state.k < cfg.k_max {
        match sqp_step(model, &mut state, cfg) {
            Ok(rec) => {
                let stop = rec.accepted != StepKind::SubproblemFailed
                    && rec.step_norm <= cfg.delta_m
                    && !rec.memory_added;
                trace.push(rec);
                if stop {
                    termination = Termination::Converged;
                    break;
                }
                if !(state.radius > f64::MIN_POSITIVE) {
                    termination = Termination::Failed("trust radius underflow".into());
                    break;
                }
            }
            Err(Error::DegeneratePoint) => {
                termination = Termination::Degenerate;
                break;
            }
            Err(e) => {
                termination = Termination::Failed(e.to_string());
                break;
            }
        }
    }
    Ok(RunResult {
        x0,
        alpha0,
        x: state.x,
        alpha: state.alpha,
        trace,
        termination,
    })
}

/// Iterate from `x0` until the step is small with no new memory, or
/// `k_max` iterations. Deterministic in `(model, x0, cfg)`.
pub fn run_single<M: SpectralModel + ?Sized>(model: &M, x0: DVector<f64>, cfg: &SolverConfig) -> Result<RunResult> {
    run_with_rng(model, x0, cfg, jitter_rng(cfg.seed, 0))
}

/// Standard-normal start `index` for `seed`.
pub fn start_point(seed: u64, index: usize, n: usize) -> DVector<f64> {
    let mut rng = start_rng(seed, index);
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

#[derive(Debug, Clone)]
pub struct StartOutcome {
    pub index: usize,
    pub x0: DVector<f64>,
    pub result: Result<RunResult>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct MultiStartResult {
    pub best_index: usize,
    pub x: DVector<f64>,
    pub alpha: f64,
    pub per_start: Vec<StartOutcome>,
}

impl MultiStartResult {
    pub fn best(&self) -> &RunResult {
        self.per_start[self.best_index]
            .result
            .as_ref()
            .expect("best start succeeded")
    }
}

/// Run `cfg.starts` independent starts from standard-normal points and keep
/// the lowest final abscissa (lowest index on ties).
pub fn run_multistart<M: SpectralModel + ?Sized>(model: &M, cfg: &SolverConfig) -> Result<MultiStartResult> {
    cfg.validate()?;
    let n = model.n_params();
    let per_start: Vec<StartOutcome> = (0..cfg.starts)
        .map(|index| {
            let x0 = start_point(cfg.seed, index, n);
            let clock = Instant::now();
            let result = run_with_rng(model, x0.clone(), cfg, jitter_rng(cfg.seed, index));
            StartOutcome {
                index,
                x0,
                result,
                elapsed: clock.elapsed(),
            }
        })
        .collect();
    let best = per_start
        .iter()
        .filter_map(|s| s.result.as_ref().ok().map(|r| (s.index, r)))
        .fold(None::<(usize, &RunResult)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.alpha <= r.alpha => acc,
            _ => Some((i, r)),
        });
    match best {
        Some((best_index, r)) => Ok(MultiStartResult {
            best_index,
            x: r.x.clone(),
            alpha: r.alpha,
            per_start,
        }),
        None => Err(Error::AllStartsFailed {
            starts: cfg.starts,
            first: per_start
                .first()
                .and_then(|s| s.result.as_ref().err())
                .map(ToString::to_string)
                .unwrap_or_default(),
        }),
    }
}
