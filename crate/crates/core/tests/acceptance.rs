//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

mod common;

use std::time::Instant;

use abscissa::delay::{rightmost_eigs, rightmost_eigs_with, DelayFamily, DelayOptions, DelayTerm};
use abscissa::derivatives::{eig_gradient, eig_hessian};
use abscissa::family::MatrixFamily;
use abscissa::numeric::{eig_full, nearest, to_complex};
use abscissa::problems::{builtin, from_text, grid_eval, grid_min, write_grid_tsv, Model, ProblemKind};
use abscissa::solver::{run_multistart, Mode, MultiStartResult, RunResult, SolverConfig, SpectralModel};
use abscissa::subproblem::{solve_lp, SubproblemInstance};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const SEEDS: u64 = 50;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &'static str, pass: bool, detail: String) -> Outcome {
    println!("[{}] criterion {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, name, pass, detail }
}

fn derivative_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut checked, mut worst_g, mut worst_h) = (0, 0.0_f64, 0.0_f64);
    while checked < 100 {
        let dim = rng.random_range(2..=6);
        let n = rng.random_range(1..=4);
        let fam = random_family(&mut rng, dim, n);
        let x = gaussian_vector(&mut rng, n) * 0.5;
        let f = fam.evaluate(&x);
        let s = eig_full(&to_complex(&f)).unwrap();
        if !top_well_separated(&s.triples, 0.1) {
            continue;
        }
        let t = &s.triples[0];
        let g = eig_gradient(&fam, t).unwrap();
        let fd: Vec<Complex64> = (0..n)
            .map(|k| central_complex(|y| tracked_eigenvalue(&fam, y, t.lambda), &x, k, 1e-6))
            .collect();
        worst_g = worst_g.max(rel_err(g.as_slice(), &fd));

        let h = eig_hessian(&fam, t, &f).unwrap();
        let grad_at = |y: &DVector<f64>, k: usize| {
            let s = eig_full(&to_complex(&fam.evaluate(y))).unwrap();
            let lam = nearest(&s.eigenvalues(), t.lambda).unwrap();
            let tt = s.triples.iter().find(|u| u.lambda == lam).unwrap();
            eig_gradient(&fam, tt).unwrap()[k]
        };
        let mut fd_h = Vec::with_capacity(n * n);
        let mut an_h = Vec::with_capacity(n * n);
        for l in 0..n {
            for k in 0..n {
                fd_h.push(central_complex(|y| grad_at(y, k), &x, l, 1e-5));
                an_h.push(h[(k, l)]);
            }
        }
        worst_h = worst_h.max(rel_err(&an_h, &fd_h));
        checked += 1;
    }
    report(
        1,
        "derivative correctness",
        worst_g <= 1e-5 && worst_h <= 1e-3,
        format!("{checked} families, worst gradient rel err {worst_g:.2e} (<= 1e-5), worst Hessian rel err {worst_h:.2e} (<= 1e-3)"),
    )
}

fn lp_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=3);
        let total = rng.random_range(1..=5);
        let current = rng.random_range(1..=total);
        let x_k = gaussian_vector(&mut rng, n);
        let mut cuts = Vec::with_capacity(total);
        for i in 0..total {
            let base = if i < current { x_k.clone() } else { &x_k + gaussian_vector(&mut rng, n) * 0.5 };
            cuts.push(cut(base, rng.random_range(-1.0..1.0), gaussian_vector(&mut rng, n)));
        }
        let memory_cuts = cuts.split_off(current);
        let alpha_k = cuts.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max);
        let inst = SubproblemInstance {
            current_cuts: cuts,
            memory_cuts,
            alpha_k,
            radius: rng.random_range(0.01..3.0),
            hessian: None,
            x_k,
        };
        let sol = solve_lp(&inst).unwrap();
        worst = worst.max((sol.dgamma - lp_vertex_oracle(&inst)).abs());
    }
    report(2, "LP oracle equivalence", worst <= 1e-8, format!("100 instances, worst |objective - vertex oracle| {worst:.2e} (<= 1e-8)"))
}

fn fig1_model() -> Model {
    builtin("fig1-2d").unwrap().model().unwrap()
}

fn delay3_model() -> Model {
    builtin("delay3-feedback").unwrap().model().unwrap()
}

fn sweep(model: &Model, mode: Mode) -> Vec<(u64, Result<MultiStartResult, String>)> {
    (0..SEEDS)
        .map(|seed| {
            let cfg = SolverConfig { seed, mode, k_max: 200, starts: 10, ..SolverConfig::default() };
            (seed, run_multistart(model, &cfg).map_err(|e| e.to_string()))
        })
        .collect()
}

fn best_alphas(runs: &[(u64, Result<MultiStartResult, String>)]) -> Vec<f64> {
    runs.iter().map(|(_, r)| r.as_ref().map_or(f64::INFINITY, |m| m.alpha)).collect()
}

fn fig1_reproduction(slp: &[(u64, Result<MultiStartResult, String>)]) -> (Outcome, f64) {
    let model = fig1_model();
    let points = grid_eval(&model, (-3.0, 3.0), (-3.0, 3.0), 601).unwrap();
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("fig1_grid.tsv");
    let written = std::fs::File::create(&path)
        .map_err(abscissa::error::Error::from)
        .and_then(|f| write_grid_tsv(std::io::BufWriter::new(f), &points))
        .is_ok();
    let g = grid_min(&points).unwrap();
    let (oracle, at) = grid_then_zoom(&model, (g.x1, g.x2), 6.0 / 600.0);
    let alphas = best_alphas(slp);
    let hits = alphas.iter().filter(|a| (**a - oracle).abs() <= 1e-2).count();
    let outcome = report(
        3,
        "fig1-2d reproduction",
        written && hits >= 45,
        format!(
            "grid {} points -> {} ; oracle alpha {oracle:.7} at ({:.6}, {:.6}); {hits}/{SEEDS} seeds within 1e-2 (>= 45)",
            points.len(),
            path.display(),
            at[0],
            at[1]
        ),
    );
    (outcome, oracle)
}

/// Accepted iterates strictly decrease alpha; rejected ones leave it alone.
fn monotone(r: &RunResult) -> bool {
    let mut alpha = r.alpha0;
    for rec in &r.trace {
        if rec.accepted.is_accepted() {
            if !(rec.alpha < alpha) {
                return false;
            }
            alpha = rec.alpha;
        } else if rec.alpha != alpha {
            return false;
        }
    }
    alpha == r.alpha
}

fn monotonicity_and_determinism(all: &[&[(u64, Result<MultiStartResult, String>)]]) -> Outcome {
    let mut runs = 0;
    let mut violations = 0;
    for sweep in all {
        for (_, res) in sweep.iter() {
            let Ok(m) = res else { continue };
            for s in &m.per_start {
                if let Ok(r) = &s.result {
                    runs += 1;
                    violations += usize::from(!monotone(r));
                }
            }
        }
    }
    let mut mismatches = 0;
    let mut repeats = 0;
    let fig1 = fig1_model();
    let delay3 = delay3_model();
    for (model, seeds, mode) in [(&fig1, 0..5u64, Mode::Slp), (&fig1, 0..5, Mode::Sqp), (&delay3, 0..1, Mode::Slp)] {
        for seed in seeds {
            let cfg = SolverConfig { seed, mode, k_max: 200, starts: 10, ..SolverConfig::default() };
            let a = run_multistart(model, &cfg).unwrap();
            let b = run_multistart(model, &cfg).unwrap();
            repeats += 1;
            let same = a.per_start.iter().zip(&b.per_start).all(|(p, q)| match (&p.result, &q.result) {
                (Ok(r), Ok(s)) => r == s,
                (Err(e), Err(f)) => e.to_string() == f.to_string(),
                _ => false,
            });
            mismatches += usize::from(!same);
        }
    }
    report(
        4,
        "monotonicity and determinism",
        violations == 0 && mismatches == 0,
        format!("{violations} non-monotone traces in {runs} runs; {mismatches}/{repeats} repeated seeds differ"),
    )
}

fn delay_eigensolver() -> Outcome {
    let fam = DelayFamily::new(vec![
        DelayTerm { family: MatrixFamily::new(DMatrix::zeros(1, 1), vec![]).unwrap(), tau: 0.0 },
        DelayTerm { family: MatrixFamily::new(DMatrix::from_element(1, 1, -1.0), vec![]).unwrap(), tau: 1.0 },
    ])
    .unwrap();
    // independent Newton on lambda + e^{-lambda} = 0
    let mut z = Complex64::new(-0.3, 1.3);
    for _ in 0..50 {
        z -= (z + (-z).exp()) / (1.0 - (-z).exp());
    }
    let x = DVector::zeros(0);
    let r = rightmost_eigs(&fam, &x, None).unwrap();
    let top = r.triples[0].lambda;
    let printed = Complex64::new(-0.31813, 1.33724);
    let err = (top - z).norm();
    let closed = r.triples.iter().all(|t| {
        r.triples
            .iter()
            .any(|o| (o.lambda - t.lambda.conj()).norm() <= 1e-10 * (1.0 + t.lambda.norm()))
    });
    let finer = rightmost_eigs_with(&fam, &x, None, &DelayOptions { initial_degree: 2 * r.degree, ..DelayOptions::default() }).unwrap();
    let stable = finer.triples.len() == r.triples.len()
        && r.triples.iter().zip(&finer.triples).all(|(a, b)| (a.lambda - b.lambda).norm() <= 1e-8 * (1.0 + a.lambda.norm()));
    let pass = err <= 1e-5 && (top - printed).norm() <= 1e-5 && closed && stable && (r.triples[1].lambda - top.conj()).norm() <= 1e-10;
    report(
        5,
        "delay eigensolver",
        pass,
        format!(
            "rightmost {:.5} {:+.5}i, |err| vs Newton root {err:.1e} (<= 1e-5); conjugate closed {closed}; stable under degree doubling {stable} (degree {})",
            top.re, top.im, r.degree
        ),
    )
}

fn mean_stdev(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0).max(1.0);
    (m, var.sqrt())
}

fn delay_stabilization(slp: &[(u64, Result<MultiStartResult, String>)], secs: f64) -> Outcome {
    let alphas: Vec<f64> = best_alphas(slp).into_iter().filter(|a| a.is_finite()).collect();
    let stable = alphas.iter().filter(|a| **a < 0.0).count();
    let (mean, sd) = mean_stdev(&alphas);
    report(
        6,
        "delay stabilization",
        stable >= 45 && (-0.20..=-0.02).contains(&mean),
        format!(
            "{stable}/{SEEDS} trials stabilized (>= 45); mean best alpha {mean:.4} (stdev {sd:.4}) in [-0.20, -0.02]; {:.2} s per trial",
            secs / SEEDS as f64
        ),
    )
}

fn terminated(runs: &[(u64, Result<MultiStartResult, String>)]) -> usize {
    runs.iter()
        .filter(|(_, r)| {
            r.as_ref().is_ok_and(|m| {
                m.per_start.iter().all(|s| {
                    s.result
                        .as_ref()
                        .is_ok_and(|r| !matches!(r.termination, abscissa::solver::Termination::Failed(_)))
                })
            })
        })
        .count()
}

fn parity(
    fig1_slp: &[(u64, Result<MultiStartResult, String>)],
    fig1_sqp: &[(u64, Result<MultiStartResult, String>)],
    delay_slp: &[(u64, Result<MultiStartResult, String>)],
    delay_sqp: &[(u64, Result<MultiStartResult, String>)],
) -> Outcome {
    let ok = [fig1_slp, fig1_sqp, delay_slp, delay_sqp].map(terminated);
    let worst = best_alphas(fig1_sqp)
        .iter()
        .zip(best_alphas(fig1_slp))
        .map(|(q, l)| q - l)
        .fold(f64::NEG_INFINITY, f64::max);
    let (dq, _) = mean_stdev(&best_alphas(delay_sqp));
    report(
        7,
        "SLP/SQP parity",
        ok.iter().all(|&c| c == SEEDS as usize) && worst <= 0.05,
        format!(
            "clean terminations fig1 slp/sqp {}/{}, delay3 slp/sqp {}/{} (of {SEEDS}); worst fig1 SQP - SLP {worst:+.2e} (<= 0.05); delay3 SQP mean {dq:.4}",
            ok[0], ok[1], ok[2], ok[3]
        ),
    )
}

fn synthetic_loader() -> Outcome {
    let block = |label: &str, r: usize, c: usize, f: &dyn Fn(usize, usize) -> f64| {
        let mut s = format!("matrix {label} {r} {c}\n");
        for i in 0..r {
            let row: Vec<String> = (0..c).map(|j| format!("{}", f(i, j))).collect();
            s += &row.join(" ");
            s.push('\n');
        }
        s
    };
    let a = |i: usize, j: usize| if i == j { 0.3 - 0.2 * i as f64 } else { 0.1 * (j as f64 - i as f64) };
    let b = |i: usize, j: usize| if i % 2 == j { 1.0 } else { 0.0 };
    let c = |i: usize, j: usize| if j % 2 == i { 1.0 } else { 0.25 };
    let text = format!("kind: linear-sof\nname: synthetic-5\n{}{}{}", block("A", 5, 5, &a), block("B", 5, 2, &b), block("C", 2, 5, &c));
    let check = || -> Result<String, String> {
        let spec = from_text(&text).map_err(|e| e.to_string())?;
        if spec.kind() != ProblemKind::LinearSof || spec.n_params() != 4 {
            return Err(format!("unexpected kind/size {:?}/{}", spec.kind(), spec.n_params()));
        }
        let model = spec.model().map_err(|e| e.to_string())?;
        let x = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
        let am = DMatrix::from_fn(5, 5, a);
        let bm = DMatrix::from_fn(5, 2, b);
        let cm = DMatrix::from_fn(2, 5, c);
        let gain = DMatrix::from_row_slice(2, 2, x.as_slice());
        let expect = eig_full(&to_complex(&(am + bm * gain * cm))).unwrap().triples[0].lambda.re;
        let got = model.abscissa(&x).map_err(|e| e.to_string())?;
        if (got - expect).abs() > 1e-12 {
            return Err(format!("abscissa {got} vs A + BXC {expect}"));
        }
        let cfg = SolverConfig { starts: 3, k_max: 50, ..SolverConfig::default() };
        let r = run_multistart(&model, &cfg).map_err(|e| e.to_string())?;
        Ok(format!("5x5 plant, 2x2 gain loaded; abscissa matches A + BXC; solved to alpha {:.4}", r.alpha))
    };
    match check() {
        Ok(d) => report(8, "synthetic SOF plant loader", true, d),
        Err(e) => report(8, "synthetic SOF plant loader", false, e),
    }
}

fn main() {
    let clock = Instant::now();
    let mut outcomes = vec![derivative_correctness(), lp_oracle_equivalence()];

    let fig1 = fig1_model();
    let fig1_slp = sweep(&fig1, Mode::Slp);
    let fig1_sqp = sweep(&fig1, Mode::Sqp);
    let (c3, _) = fig1_reproduction(&fig1_slp);

    let delay3 = delay3_model();
    let t = Instant::now();
    let delay_slp = sweep(&delay3, Mode::Slp);
    let slp_secs = t.elapsed().as_secs_f64();
    let delay_sqp = sweep(&delay3, Mode::Sqp);

    let c4 = monotonicity_and_determinism(&[&fig1_slp, &fig1_sqp, &delay_slp, &delay_sqp]);
    outcomes.push(c3);
    outcomes.push(c4);
    outcomes.push(delay_eigensolver());
    outcomes.push(delay_stabilization(&delay_slp, slp_secs));
    outcomes.push(parity(&fig1_slp, &fig1_sqp, &delay_slp, &delay_sqp));
    outcomes.push(synthetic_loader());

    outcomes.sort_by_key(|o| o.id);
    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!("\nacceptance summary ({:.0} s):", clock.elapsed().as_secs_f64());
    for o in &outcomes {
        println!("  {} {} {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name);
    }
    if !failed.is_empty() {
        for o in failed {
            eprintln!("criterion {} failed: {}", o.id, o.detail);
        }
        std::process::exit(1);
    }
}
