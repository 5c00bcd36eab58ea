//! Minimax trust-region subproblems over `(dgamma, dx)`:
//!
//! ```text
//! min  dgamma [+ 1/2 dx^T H dx]
//! s.t. dgamma + alpha_k >= cut_i(x_k + dx)   for every current and memory cut
//!      ||dx||_inf <= radius
//! ```

mod qp;
mod simplex;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::derivatives::SurfaceCut;
use crate::error::{Error, Result};

pub use qp::convexify;
use simplex::{DenseLp, SimplexError};

/// Curvature floor used when convexifying an indefinite Hessian.
pub const HESSIAN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemInstance {
    /// Linearizations at `x_k`.
    pub current_cuts: Vec<SurfaceCut>,
    /// Linearizations stored at earlier rejected trial points.
    pub memory_cuts: Vec<SurfaceCut>,
    pub alpha_k: f64,
    pub radius: f64,
    /// `None` selects the LP; `Some(H)` the (convexified) QP.
    pub hessian: Option<DMatrix<f64>>,
    pub x_k: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub dx: DVector<f64>,
    pub dgamma: f64,
    /// Objective value at the solution.
    pub predicted_value: f64,
    /// Indices into `current_cuts ++ memory_cuts` that are tight.
    pub active_set: Vec<usize>,
    /// Diagonal shift added to the Hessian (0 for the LP).
    pub shift: f64,
}

impl SubproblemInstance {
    pub fn n_params(&self) -> usize {
        self.x_k.len()
    }

    pub fn cuts(&self) -> impl Iterator<Item = &SurfaceCut> {
        self.current_cuts.iter().chain(self.memory_cuts.iter())
    }

    /// `(offset_i, g_i)` such that cut `i` reads `dgamma >= offset_i + g_i^T dx`.
    pub fn rows(&self) -> Vec<(f64, DVector<f64>)> {
        self.cuts()
            .map(|c| (c.eval_at(&self.x_k) - self.alpha_k, c.gradient.clone()))
            .collect()
    }

    /// Value of the piecewise-linear model `max_i (offset_i + g_i^T dx)`.
    pub fn model(&self, dx: &DVector<f64>) -> f64 {
        self.rows()
            .iter()
            .map(|(o, g)| o + g.dot(dx))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_params();
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidInput(format!(
                "trust radius must be positive, got {}",
                self.radius
            )));
        }
        if self.current_cuts.is_empty() {
            return Err(Error::InvalidInput("subproblem has no current cuts".into()));
        }
        for c in self.cuts() {
            if c.gradient.len() != n || c.base_point.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "cut has dimension {}, expected {n}",
                    c.gradient.len()
                )));
            }
            if !c.value.is_finite() || c.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::InvalidInput("cut with non-finite data".into()));
            }
        }
        if let Some(h) = &self.hessian {
            if h.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "Hessian is {}x{}, expected {n}x{n}",
                    h.nrows(),
                    h.ncols()
                )));
            }
        }
        Ok(())
    }

    fn finish(&self, dx: DVector<f64>, shift: f64, hess: Option<&DMatrix<f64>>) -> SubproblemSolution {
        let dx = dx.map(|v| v.clamp(-self.radius, self.radius));
        let rows = self.rows();
        let dgamma = rows
            .iter()
            .map(|(o, g)| o + g.dot(&dx))
            .fold(f64::NEG_INFINITY, f64::max);
        let scale = 1.0 + dgamma.abs();
        let active_set = rows
            .iter()
            .enumerate()
            .filter(|(_, (o, g))| dgamma - (o + g.dot(&dx)) <= 1e-9 * scale)
            .map(|(i, _)| i)
            .collect();
        let curvature = hess.map_or(0.0, |h| 0.5 * dx.dot(&(h * &dx)));
        SubproblemSolution {
            predicted_value: dgamma + curvature,
            dx,
            dgamma,
            active_set,
            shift,
        }
    }
}

fn simplex_failure(e: SimplexError) -> Error {
    Error::Subproblem(format!("LP simplex failed: {e:?}"))
}

/// Solve the linear subproblem. Among optimal solutions the one with the
/// smallest `||dx||_1` is returned (ties resolved by Bland's rule).
pub fn solve_lp(inst: &SubproblemInstance) -> Result<SubproblemSolution> {
    inst.validate()?;
    if inst.hessian.is_some() {
        return Err(Error::InvalidInput("solve_lp called with a Hessian".into()));
    }
    let n = inst.n_params();
    let radius = inst.radius;
    let rows = inst.rows();
    if n == 0 {
        return Ok(inst.finish(DVector::zeros(0), 0.0, None));
    }

    // dgamma = z + floor with z >= 0, dx = p - q with 0 <= p, q <= radius
    let floor = rows
        .iter()
        .map(|(o, g)| o - radius * g.iter().map(|v| v.abs()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let m = rows.len() + 2 * n;
    let nv = 1 + 2 * n;
    let mut a = DMatrix::zeros(m, nv);
    let mut b = DVector::zeros(m);
    for (i, (o, g)) in rows.iter().enumerate() {
        let scale = g.amax().max(1.0);
        a[(i, 0)] = -1.0 / scale;
        for j in 0..n {
            a[(i, 1 + j)] = g[j] / scale;
            a[(i, 1 + n + j)] = -g[j] / scale;
        }
        b[i] = (floor - o) / scale;
    }
    for j in 0..2 * n {
        a[(rows.len() + j, 1 + j)] = 1.0;
        b[rows.len() + j] = radius;
    }
    let mut primary = vec![0.0; nv];
    primary[0] = 1.0;
    let mut secondary = vec![1.0; nv];
    secondary[0] = 0.0;

    let sol = DenseLp { a, b }
        .solve_lexicographic(&[primary, secondary])
        .map_err(simplex_failure)?;
    let dx = DVector::from_fn(n, |j, _| sol[1 + j] - sol[1 + n + j]);
    Ok(inst.finish(dx, 0.0, None))
}

/// Solve the quadratic subproblem with `H` replaced by `H + sigma I`,
/// `sigma = max(0, 1e-8 - lambda_min(H))`.
pub fn solve_qp(inst: &SubproblemInstance) -> Result<SubproblemSolution> {
    inst.validate()?;
    let Some(h) = &inst.hessian else {
        return Err(Error::InvalidInput("solve_qp called without a Hessian".into()));
    };
    let (h_eff, shift) = convexify(h, HESSIAN_FLOOR);
    if inst.n_params() == 0 {
        return Ok(inst.finish(DVector::zeros(0), shift, Some(&h_eff)));
    }
    let dx = qp::active_set(&inst.rows(), &h_eff, inst.radius)?;
    Ok(inst.finish(dx, shift, Some(&h_eff)))
}

/// Dispatch on whether the instance carries a Hessian.
pub fn solve(inst: &SubproblemInstance) -> Result<SubproblemSolution> {
    match inst.hessian {
        Some(_) => solve_qp(inst),
        None => solve_lp(inst),
    }
}

pub(crate) fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
