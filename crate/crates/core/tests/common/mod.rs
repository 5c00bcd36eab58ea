//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use abscissa::derivatives::SurfaceCut;
use abscissa::family::MatrixFamily;
use abscissa::numeric::{eig_full, nearest, to_complex, EigenTriple};
use abscissa::solver::SpectralModel;
use abscissa::subproblem::{convexify, SubproblemInstance, HESSIAN_FLOOR};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn random_family(rng: &mut impl Rng, dim: usize, n: usize) -> MatrixFamily {
    let base = gaussian_matrix(rng, dim, dim);
    let dirs = (0..n).map(|_| gaussian_matrix(rng, dim, dim)).collect();
    MatrixFamily::new(base, dirs).unwrap()
}

/// Top eigenvalue simple, well conditioned and at least `gap` from the rest.
pub fn top_well_separated(triples: &[EigenTriple], gap: f64) -> bool {
    let top = &triples[0];
    top.condition > 1e-2
        && triples[1..]
            .iter()
            .all(|t| (t.lambda - top.lambda).norm() > gap)
}

/// Eigenvalue of `F(x)` closest to `target`, computed by a plain eigensolve.
pub fn tracked_eigenvalue(fam: &MatrixFamily, x: &DVector<f64>, target: Complex64) -> Complex64 {
    let s = eig_full(&to_complex(&fam.evaluate(x))).unwrap();
    nearest(&s.eigenvalues(), target).unwrap()
}

/// Central difference of a complex-valued function of `x` along `e_k`.
pub fn central_complex<F: Fn(&DVector<f64>) -> Complex64>(f: F, x: &DVector<f64>, k: usize, h: f64) -> Complex64 {
    let mut xp = x.clone();
    let mut xm = x.clone();
    xp[k] += h;
    xm[k] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    diff / scale
}

/// `(offset_i, g_i)` rows recomputed from the raw cut data.
fn oracle_rows(inst: &SubproblemInstance) -> Vec<(f64, DVector<f64>)> {
    inst.current_cuts
        .iter()
        .chain(&inst.memory_cuts)
        .map(|c| {
            let lin = c.value + c.gradient.dot(&(&inst.x_k - &c.base_point));
            (lin - inst.alpha_k, c.gradient.clone())
        })
        .collect()
}

/// Minimum `dgamma` of the LP by enumerating every vertex of
/// `{dgamma >= o_i + g_i^T dx, |dx_j| <= radius}`.
pub fn lp_vertex_oracle(inst: &SubproblemInstance) -> f64 {
    let n = inst.x_k.len();
    let rows = oracle_rows(inst);
    // constraints as (a, b) meaning a^T (dgamma, dx) = b when tight
    let mut cons: Vec<(DVector<f64>, f64)> = Vec::new();
    for (o, g) in &rows {
        let mut a = DVector::zeros(n + 1);
        a[0] = 1.0;
        a.rows_mut(1, n).copy_from(&(-g));
        cons.push((a, *o));
    }
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut a = DVector::zeros(n + 1);
            a[1 + j] = sign;
            cons.push((a, inst.radius));
        }
    }
    let feasible = |z: &DVector<f64>| {
        let dx = z.rows(1, n).into_owned();
        dx.amax() <= inst.radius * (1.0 + 1e-9)
            && rows.iter().all(|(o, g)| z[0] >= o + g.dot(&dx) - 1e-9 * (1.0 + z[0].abs()))
    };
    let mut best = f64::INFINITY;
    let mut pick = vec![0usize; n + 1];
    fn subsets(start: usize, total: usize, depth: usize, pick: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if depth == pick.len() {
            visit(pick);
            return;
        }
        for i in start..total {
            pick[depth] = i;
            subsets(i + 1, total, depth + 1, pick, visit);
        }
    }
    let total = cons.len();
    subsets(0, total, 0, &mut pick, &mut |idx: &[usize]| {
        let a = DMatrix::from_fn(n + 1, n + 1, |r, c| cons[idx[r]].0[c]);
        let b = DVector::from_fn(n + 1, |r, _| cons[idx[r]].1);
        let lu = a.full_piv_lu();
        if !lu.is_invertible() {
            return;
        }
        if let Some(z) = lu.solve(&b) {
            if feasible(&z) {
                best = best.min(z[0]);
            }
        }
    });
    best
}

/// Minimum of `max_i(o_i + g_i^T dx) + 1/2 dx^T (H + sigma I) dx` over the box,
/// by grid search and repeated zoom. Intended for `n <= 2`.
pub fn qp_grid_oracle(inst: &SubproblemInstance) -> f64 {
    let n = inst.x_k.len();
    let rows = oracle_rows(inst);
    let (h, _) = convexify(inst.hessian.as_ref().unwrap(), HESSIAN_FLOOR);
    let f = |dx: &DVector<f64>| {
        rows.iter()
            .map(|(o, g)| o + g.dot(dx))
            .fold(f64::NEG_INFINITY, f64::max)
            + 0.5 * dx.dot(&(&h * dx))
    };
    let r = inst.radius;
    let mut center = DVector::zeros(n);
    let mut half = r;
    let mut best = f(&center);
    let per_axis = if n <= 1 { 2001 } else { 201 };
    for _ in 0..40 {
        let step = 2.0 * half / (per_axis - 1) as f64;
        let mut idx = vec![0usize; n];
        let mut best_point = center.clone();
        loop {
            let p = DVector::from_fn(n, |j, _| (center[j] - half + idx[j] as f64 * step).clamp(-r, r));
            let v = f(&p);
            if v < best {
                best = v;
                best_point = p;
            }
            let mut j = 0;
            while j < n {
                idx[j] += 1;
                if idx[j] < per_axis {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == n {
                break;
            }
        }
        center = best_point;
        half *= 0.25;
    }
    best
}

/// Grid minimum plus zoomed pattern refinement of a two-parameter model.
pub fn grid_then_zoom(model: &dyn SpectralModel, grid_best: (f64, f64), cell: f64) -> (f64, DVector<f64>) {
    let f = |x: f64, y: f64| model.abscissa(&DVector::from_vec(vec![x, y])).unwrap();
    let (mut cx, mut cy) = grid_best;
    let mut best = f(cx, cy);
    let mut half = 2.0 * cell;
    let k = 20;
    for _ in 0..200 {
        let step = 2.0 * half / k as f64;
        let (mut bx, mut by) = (cx, cy);
        for i in 0..=k {
            for j in 0..=k {
                let (x, y) = (cx - half + i as f64 * step, cy - half + j as f64 * step);
                let v = f(x, y);
                if v < best {
                    best = v;
                    bx = x;
                    by = y;
                }
            }
        }
        if (bx, by) == (cx, cy) {
            half *= 0.5;
        }
        cx = bx;
        cy = by;
    }
    let (nested, at) = nested_golden(&f, (cx, cy), 2.0 * cell);
    if nested < best {
        return (nested, at);
    }
    (best, DVector::from_vec(vec![cx, cy]))
}

/// Golden-section minimum of a unimodal `f` on `[lo, hi]`; needs no smoothness.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-13 * (1.0 + lo.abs()) {
        if fa <= fb {
            hi = b;
            (b, fb) = (a, fa);
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            (a, fa) = (b, fb);
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb { (a, fa) } else { (b, fb) }
}

/// `min_x1 min_x2 f` by nested golden sections around `center`; follows a
/// thin curved valley that a lattice of trial points straddles.
fn nested_golden(f: &impl Fn(f64, f64) -> f64, center: (f64, f64), half: f64) -> (f64, DVector<f64>) {
    let inner = |x: f64| golden(|y| f(x, y), center.1 - half, center.1 + half);
    let (x, v) = golden(|x| inner(x).1, center.0 - half, center.0 + half);
    let (y, _) = inner(x);
    (v, DVector::from_vec(vec![x, y]))
}

pub fn cut(base: DVector<f64>, value: f64, gradient: DVector<f64>) -> SurfaceCut {
    SurfaceCut {
        base_point: base,
        value,
        gradient,
    }
}
