//! Dense two-phase tableau simplex for small problems
//! `min c^T x  s.t.  A x <= b, x >= 0`, with Bland's rule and support for
//! lexicographic objectives.

use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexError {
    Infeasible,
    Unbounded,
    IterationLimit,
}

pub struct DenseLp {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

struct Tableau {
    t: DMatrix<f64>,
    rhs: DVector<f64>,
    basis: Vec<usize>,
    /// Columns allowed to enter the basis.
    eligible: Vec<bool>,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        for j in 0..self.t.ncols() {
            self.t[(row, j)] /= p;
        }
        self.rhs[row] /= p;
        for i in 0..self.t.nrows() {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..self.t.ncols() {
                let v = self.t[(row, j)];
                if v != 0.0 {
                    self.t[(i, j)] -= f * v;
                }
            }
            self.rhs[i] -= f * self.rhs[row];
            self.t[(i, col)] = 0.0;
        }
        self.basis[row] = col;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb == 0.0 {
                continue;
            }
            for (j, dj) in d.iter_mut().enumerate() {
                *dj -= cb * self.t[(i, j)];
            }
        }
        d
    }

    /// Minimize `cost` over the current feasible basis using Bland's rule.
    fn optimize(&mut self, cost: &[f64], pivots: &mut usize) -> Result<Vec<f64>, SimplexError> {
        loop {
            let d = self.reduced_costs(cost);
            let scale = cost.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
            let entering = (0..d.len()).find(|&j| self.eligible[j] && d[j] < -COST_TOL * scale);
            let Some(col) = entering else {
                return Ok(d);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.nrows() {
                let a = self.t[(i, col)];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-14 * (1.0 + best)
                                || (ratio <= best + 1e-14 * (1.0 + best)
                                    && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(SimplexError::Unbounded);
            };
            self.pivot(row, col);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(SimplexError::IterationLimit);
            }
        }
    }
}

impl DenseLp {
    /// Minimize the objectives in order; each later objective is optimized
    /// over the optimal face of the earlier ones.
    pub fn solve_lexicographic(&self, objectives: &[Vec<f64>]) -> Result<DVector<f64>, SimplexError> {
        let (m, nv) = self.a.shape();
        let negative: Vec<usize> = (0..m).filter(|&i| self.b[i] < 0.0).collect();
        let na = negative.len();
        let ncols = nv + m + na;
        let mut t = DMatrix::zeros(m, ncols);
        let mut rhs = DVector::zeros(m);
        let mut basis = vec![0; m];
        let mut art = 0;
        for i in 0..m {
            let sign = if self.b[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..nv {
                t[(i, j)] = sign * self.a[(i, j)];
            }
            t[(i, nv + i)] = sign;
            rhs[i] = sign * self.b[i];
            if sign < 0.0 {
                t[(i, nv + m + art)] = 1.0;
                basis[i] = nv + m + art;
                art += 1;
            } else {
                basis[i] = nv + i;
            }
        }
        let mut tab = Tableau {
            t,
            rhs,
            basis,
            eligible: vec![true; ncols],
        };
        let mut pivots = 0;

        if na > 0 {
            let mut phase1 = vec![0.0; ncols];
            for c in phase1.iter_mut().skip(nv + m) {
                *c = 1.0;
            }
            tab.optimize(&phase1, &mut pivots)?;
            let infeas: f64 = tab
                .basis
                .iter()
                .enumerate()
                .filter(|(_, &bv)| bv >= nv + m)
                .map(|(i, _)| tab.rhs[i])
                .sum();
            let scale = self.b.amax().max(1.0);
            if infeas > 1e-9 * scale {
                return Err(SimplexError::Infeasible);
            }
            // drive zero-level artificials out of the basis
            for row in 0..m {
                if tab.basis[row] >= nv + m {
                    if let Some(col) = (0..nv + m).find(|&j| tab.t[(row, j)].abs() > 1e-9) {
                        tab.pivot(row, col);
                    }
                }
            }
            for j in nv + m..ncols {
                tab.eligible[j] = false;
            }
        }

        for obj in objectives {
            let mut cost = vec![0.0; ncols];
            cost[..nv].copy_from_slice(obj);
            let d = tab.optimize(&cost, &mut pivots)?;
            let scale = obj.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
            for (j, dj) in d.iter().enumerate() {
                if *dj > COST_TOL * scale && !tab.basis.contains(&j) {
                    tab.eligible[j] = false;
                }
            }
        }

        let x = self
            .refine(&tab.basis)
            .unwrap_or_else(|| {
                let mut x = DVector::zeros(nv);
                for (i, &bv) in tab.basis.iter().enumerate() {
                    if bv < nv {
                        x[bv] = tab.rhs[i];
                    }
                }
                x
            })
            .map(|v| v.max(0.0));
        Ok(x)
    }

    /// Recompute the basic solution from the original data.
    fn refine(&self, basis: &[usize]) -> Option<DVector<f64>> {
        let (m, nv) = self.a.shape();
        if basis.iter().any(|&bv| bv >= nv + m) {
            return None;
        }
        let mut bmat = DMatrix::zeros(m, m);
        for (k, &bv) in basis.iter().enumerate() {
            if bv < nv {
                bmat.set_column(k, &self.a.column(bv));
            } else {
                bmat[(bv - nv, k)] = 1.0;
            }
        }
        let sol = bmat.lu().solve(&self.b)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut x = DVector::zeros(nv);
        for (k, &bv) in basis.iter().enumerate() {
            if bv < nv {
                x[bv] = sol[k];
            }
        }
        Some(x)
    }
}
