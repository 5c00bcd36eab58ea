//! Primal active-set method for the convex minimax QP
//!
//! ```text
//! min  dgamma + 1/2 dx^T H dx
//! s.t. dgamma - g_i^T dx >= offset_i,   -radius <= dx_j <= radius
//! ```
//!
//! with `H` positive definite. The working set always holds at least one
//! cut row: the `dgamma` multipliers of the cut rows sum to one, so a lone
//! cut row can never carry a negative multiplier. That keeps every KKT
//! matrix along the way nonsingular.

use nalgebra::{DMatrix, DVector};

use super::min_eigenvalue;
use crate::error::{Error, Result};

const STEP_TOL: f64 = 1e-13;
const MULT_TOL: f64 = 1e-12;
const KKT_TOL: f64 = 1e-8;

/// `H + sigma I` with the smallest `sigma >= 0` giving `lambda_min >= floor`.
pub fn convexify(h: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, f64) {
    let sym = (h + h.transpose()) * 0.5;
    let shift = (floor - min_eigenvalue(&sym)).max(0.0);
    let n = sym.nrows();
    (sym + DMatrix::identity(n, n) * shift, shift)
}

struct Constraint {
    a: DVector<f64>,
    beta: f64,
}

pub(super) fn active_set(rows: &[(f64, DVector<f64>)], h: &DMatrix<f64>, radius: f64) -> Result<DVector<f64>> {
    let n = h.nrows();
    let dim = n + 1;
    let mut cons = Vec::with_capacity(rows.len() + 2 * n);
    for (offset, g) in rows {
        let scale = g.amax().max(1.0);
        let mut a = DVector::zeros(dim);
        a[0] = 1.0 / scale;
        for j in 0..n {
            a[1 + j] = -g[j] / scale;
        }
        cons.push(Constraint {
            a,
            beta: offset / scale,
        });
    }
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut a = DVector::zeros(dim);
            a[1 + j] = sign;
            cons.push(Constraint { a, beta: -radius });
        }
    }

    let mut q = DMatrix::zeros(dim, dim);
    q.view_mut((1, 1), (n, n)).copy_from(h);
    let mut c = DVector::zeros(dim);
    c[0] = 1.0;

    // start at dx = 0 on the highest cut
    let (top, top_offset) = rows
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bo), (i, (o, _))| {
            if *o > bo {
                (i, *o)
            } else {
                (bi, bo)
            }
        });
    let mut w = DVector::zeros(dim);
    w[0] = top_offset;
    let mut working = vec![top];

    let max_iter = 50 * (cons.len() + dim) + 100;
    for _ in 0..max_iter {
        let grad = &q * &w + &c;
        let k = working.len();
        let mut kkt = DMatrix::zeros(dim + k, dim + k);
        kkt.view_mut((0, 0), (dim, dim)).copy_from(&q);
        for (r, &i) in working.iter().enumerate() {
            for j in 0..dim {
                kkt[(j, dim + r)] = -cons[i].a[j];
                kkt[(dim + r, j)] = cons[i].a[j];
            }
        }
        let mut rhs = DVector::zeros(dim + k);
        rhs.rows_mut(0, dim).copy_from(&(-&grad));
        let sol = kkt
            .full_piv_lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Subproblem("singular KKT system in QP".into()))?;
        let p = sol.rows(0, dim).into_owned();
        let mult = sol.rows(dim, k).into_owned();

        if p.amax() <= STEP_TOL * (1.0 + w.amax()) {
            let (worst, worst_val) = mult
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
            if worst_val >= -MULT_TOL {
                let stationarity = (&grad - working
                    .iter()
                    .zip(mult.iter())
                    .fold(DVector::zeros(dim), |acc, (&i, &m)| acc + &cons[i].a * m))
                .amax();
                if stationarity > KKT_TOL {
                    return Err(Error::Subproblem(format!(
                        "QP stationarity residual {stationarity:.3e}"
                    )));
                }
                return Ok(w.rows(1, n).into_owned());
            }
            working.remove(worst);
            continue;
        }

        let mut step = 1.0;
        let mut blocking = None;
        for (i, con) in cons.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let ap = con.a.dot(&p);
            if ap < -1e-14 {
                let slack = (con.a.dot(&w) - con.beta).max(0.0);
                let t = slack / -ap;
                if t < step {
                    step = t;
                    blocking = Some(i);
                }
            }
        }
        w += &p * step;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(Error::Subproblem("QP active-set iteration limit".into()))
}
