//! First and second derivatives of eigenvalue surfaces of an affine family,
//! and the linearized cuts built from them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::family::MatrixFamily;
use crate::numeric::{pseudo_inverse_deficient, to_complex, CMatrix, CVector, EigenTriple};

/// Cuts whose value and gradient agree to this tolerance are merged.
pub const CUT_DEDUP_TOL: f64 = 1e-10;

/// Linearization of one eigenvalue surface's real part.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCut {
    pub base_point: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
}

impl SurfaceCut {
    /// Value of the linearization at `x`.
    pub fn eval_at(&self, x: &DVector<f64>) -> f64 {
        self.value + self.gradient.dot(&(x - &self.base_point))
    }

    fn same_surface(&self, other: &SurfaceCut) -> bool {
        let tol = |a: f64, b: f64| (a - b).abs() <= CUT_DEDUP_TOL * (1.0 + a.abs().max(b.abs()));
        self.base_point == other.base_point
            && tol(self.value, other.value)
            && self
                .gradient
                .iter()
                .zip(other.gradient.iter())
                .all(|(a, b)| tol(*a, *b))
    }
}

fn check_semisimple(t: &EigenTriple) -> Result<Complex64> {
    if !t.is_semisimple() {
        return Err(Error::DerivativeUndefined {
            condition: t.condition,
        });
    }
    Ok(t.u.dotc(&t.v))
}

/// `(u^* A_k v) / (u^* v)` for every direction `A_k`.
pub fn eig_gradient(fam: &MatrixFamily, t: &EigenTriple) -> Result<CVector> {
    let uv = check_semisimple(t)?;
    Ok(CVector::from_iterator(
        fam.n_params(),
        fam.directions()
            .iter()
            .map(|a| t.u.dotc(&(to_complex(a) * &t.v)) / uv),
    ))
}

/// Symmetrized second derivative
/// `[u^* A_k S A_l v + u^* A_l S A_k v] / (u^* v)` with
/// `S = K (lambda I - F)^+ K` and `K = I - v u^* / (u^* v)`.
pub fn eig_hessian(fam: &MatrixFamily, t: &EigenTriple, f_at_x: &DMatrix<f64>) -> Result<CMatrix> {
    let uv = check_semisimple(t)?;
    let n = fam.n_params();
    let dim = fam.dim();
    if f_at_x.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!(
            "evaluated matrix is {}x{}, family is {dim}x{dim}",
            f_at_x.nrows(),
            f_at_x.ncols()
        )));
    }
    let identity = CMatrix::identity(dim, dim);
    let shifted = &identity * t.lambda - to_complex(f_at_x);
    let projector = &identity - (&t.v * t.u.adjoint()) / uv;
    let reduced = &projector * null_completed_pinv(&shifted, &t.u, &t.v)? * &projector;

    let dirs: Vec<CMatrix> = fam.directions().iter().map(to_complex).collect();
    // right[l] = S A_l v, left[k] = u^* A_k
    let right: Vec<CVector> = dirs.iter().map(|a| &reduced * (a * &t.v)).collect();
    let left: Vec<CVector> = dirs.iter().map(|a| a.adjoint() * &t.u).collect();

    let mut h = CMatrix::zeros(n, n);
    for k in 0..n {
        for l in k..n {
            let val = (left[k].dotc(&right[l]) + left[l].dotc(&right[k])) / uv;
            h[(k, l)] = val;
            h[(l, k)] = val;
        }
    }
    Ok(h)
}

/// Pseudoinverse of `m` with its null pair `(u, v)` dropped, through
/// `(m + u v^*)^{-1} - v u^*` on unit `u`, `v`. Avoids singular vectors of a
/// nearly singular matrix, which the SVD resolves poorly.
fn null_completed_pinv(m: &CMatrix, u: &CVector, v: &CVector) -> Result<CMatrix> {
    let (un, vn) = (u.norm(), v.norm());
    if un == 0.0 || vn == 0.0 {
        return pseudo_inverse_deficient(m, 1);
    }
    let (u, v) = (u / Complex64::from(un), v / Complex64::from(vn));
    let completed = m + &u * v.adjoint();
    match completed.clone().lu().try_inverse() {
        Some(inv) if inv.iter().all(|z| z.is_finite()) => Ok(inv - &v * u.adjoint()),
        _ => pseudo_inverse_deficient(m, 1),
    }
}

/// Real-part linearization of the surface of `t` at `x`.
pub fn make_cut(x: &DVector<f64>, t: &EigenTriple, g: &CVector) -> SurfaceCut {
    SurfaceCut {
        base_point: x.clone(),
        value: t.lambda.re,
        gradient: g.map(|z| z.re),
    }
}

/// Drop cuts that repeat an earlier one (conjugate pairs share a surface).
pub fn dedup_cuts(cuts: Vec<SurfaceCut>) -> Vec<SurfaceCut> {
    let mut out: Vec<SurfaceCut> = Vec::with_capacity(cuts.len());
    for c in cuts {
        if !out.iter().any(|o| o.same_surface(&c)) {
            out.push(c);
        }
    }
    out
}
