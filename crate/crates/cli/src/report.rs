//! JSON report and TSV trace shapes. Fields ending in `_s` are wall-clock
//! seconds and the only content that varies between runs with equal seeds.

use std::io::Write;

use abscissa::solver::{MultiStartResult, SolverConfig};
use serde::Serialize;

use crate::stats::Summary;

#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta_m: f64,
    pub initial_radius: f64,
    pub k_max: usize,
    pub ls_max: usize,
    pub eta: f64,
    pub starts: usize,
    pub policy: &'static str,
    pub memory_cap: Option<usize>,
    pub seed: u64,
}

impl From<&SolverConfig> for ConfigEcho {
    fn from(c: &SolverConfig) -> Self {
        ConfigEcho {
            gamma1: c.gamma1,
            gamma2: c.gamma2,
            delta_m: c.delta_m,
            initial_radius: c.initial_radius,
            k_max: c.k_max,
            ls_max: c.ls_max,
            eta: c.eta,
            starts: c.starts,
            policy: c.policy.as_str(),
            memory_cap: c.memory_cap,
            seed: c.seed,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StartEntry {
    pub index: usize,
    pub x0: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Serialize)]
pub struct Best {
    pub index: usize,
    pub x: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Serialize)]
pub struct Stats {
    pub alpha: Option<Summary>,
    pub time_s: Option<Summary>,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub problem: String,
    pub kind: &'static str,
    pub mode: &'static str,
    pub config: ConfigEcho,
    pub starts: Vec<StartEntry>,
    pub best: Best,
    pub stats: Stats,
}

impl RunReport {
    pub fn new(problem: &str, kind: &'static str, cfg: &SolverConfig, result: &MultiStartResult) -> Self {
        let starts: Vec<StartEntry> = result
            .per_start
            .iter()
            .map(|s| {
                let mut e = StartEntry {
                    index: s.index,
                    x0: s.x0.as_slice().to_vec(),
                    x: None,
                    alpha: None,
                    iterations: None,
                    termination: None,
                    error: None,
                    wall_time_s: s.elapsed.as_secs_f64(),
                };
                match &s.result {
                    Ok(r) => {
                        e.x = Some(r.x.as_slice().to_vec());
                        e.alpha = Some(r.alpha);
                        e.iterations = Some(r.iterations());
                        e.termination = Some(r.termination.as_str().to_string());
                    }
                    Err(err) => e.error = Some(err.to_string()),
                }
                e
            })
            .collect();
        let alphas: Vec<f64> = starts.iter().filter_map(|s| s.alpha).collect();
        let times: Vec<f64> = starts.iter().map(|s| s.wall_time_s).collect();
        RunReport {
            problem: problem.to_string(),
            kind,
            mode: cfg.mode.as_str(),
            config: cfg.into(),
            best: Best {
                index: result.best_index,
                x: result.x.as_slice().to_vec(),
                alpha: result.alpha,
            },
            stats: Stats {
                alpha: Summary::of(&alphas),
                time_s: Summary::of(&times),
            },
            starts,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TrialEntry {
    pub trial: usize,
    pub seed: u64,
    pub best_index: usize,
    pub best_x: Vec<f64>,
    pub best_alpha: f64,
    pub failed_starts: usize,
    pub time_s: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub problem: String,
    pub kind: &'static str,
    pub mode: &'static str,
    pub config: ConfigEcho,
    pub trials: Vec<TrialEntry>,
    /// Trials whose best abscissa is negative.
    pub stable_trials: usize,
    pub stats: Stats,
}

/// Per-iteration TSV for every start: `start k alpha radius step_norm accepted memory`.
/// Row `k = 0` holds the starting point.
pub fn write_trace(mut w: impl Write, result: &MultiStartResult, initial_radius: f64) -> std::io::Result<()> {
    writeln!(w, "start\tk\talpha\tradius\tstep_norm\taccepted\tmemory")?;
    for s in &result.per_start {
        let Ok(r) = &s.result else { continue };
        writeln!(w, "{}\t0\t{:?}\t{:?}\t0.0\tstart\t0", s.index, r.alpha0, initial_radius)?;
        for rec in &r.trace {
            writeln!(
                w,
                "{}\t{}\t{:?}\t{:?}\t{:?}\t{}\t{}",
                s.index,
                rec.k,
                rec.alpha,
                rec.radius,
                rec.step_norm,
                rec.accepted.as_str(),
                rec.memory_size
            )?;
        }
    }
    Ok(())
}
