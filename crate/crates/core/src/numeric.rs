//! Dense complex eigendecomposition with paired left/right eigenvectors.
//!
//! Right eigenvectors come from a complex Schur form of `M` by triangular
//! back-substitution; left eigenvectors come the same way from `M^H` and
//! are paired to right ones by eigenvalue proximity.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Triples with `|u^* v|` below this are treated as non-semi-simple.
pub const SEMISIMPLE_THRESHOLD: f64 = 1e-8;

const SCHUR_MAX_ITER: usize = 10_000;

/// An eigenvalue with unit right (`v`) and left (`u`) eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTriple {
    pub lambda: Complex64,
    pub v: CVector,
    pub u: CVector,
    /// `|u^* v|` for the unit-norm pair; zero for a Jordan block.
    pub condition: f64,
}

impl EigenTriple {
    pub fn new(lambda: Complex64, v: CVector, u: CVector) -> Self {
        let v = normalized(v);
        let u = normalized(u);
        let condition = u.dotc(&v).norm().min(1.0);
        EigenTriple {
            lambda,
            v,
            u,
            condition,
        }
    }

    pub fn is_semisimple(&self) -> bool {
        self.condition >= SEMISIMPLE_THRESHOLD
    }
}

/// Eigen-triples ordered by decreasing real part.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub triples: Vec<EigenTriple>,
    pub source_dim: usize,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.triples.iter().map(|t| t.lambda).collect()
    }

    pub fn top(&self) -> Option<&EigenTriple> {
        self.triples.first()
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

pub(crate) fn normalized(v: CVector) -> CVector {
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        v / Complex64::new(n, 0.0)
    } else {
        v
    }
}

fn validate_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    Ok(m.nrows())
}

fn schur(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let dim = m.nrows();
    Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .map(Schur::unpack)
        .ok_or(Error::EigenConvergence {
            dim,
            norm: m.norm(),
        })
}

/// Permutation that sorts eigenvalues by decreasing real part. Real parts
/// within a relative `1e-12` of the head of a run are treated as ties and
/// ordered by decreasing imaginary part, then by original index.
pub fn descending_order(values: &[Complex64]) -> Vec<usize> {
    let scale = values.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let tie = 1e-12 * scale;
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .re
            .total_cmp(&values[a].re)
            .then_with(|| a.cmp(&b))
    });
    let mut out = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let head = values[idx[start]].re;
        let mut end = start + 1;
        while end < idx.len() && head - values[idx[end]].re <= tie {
            end += 1;
        }
        let mut group = idx[start..end].to_vec();
        group.sort_by(|&a, &b| {
            values[b]
                .im
                .total_cmp(&values[a].im)
                .then_with(|| a.cmp(&b))
        });
        out.extend(group);
        start = end;
    }
    out
}

/// All eigenvalues of `m` (unordered, as they appear on the Schur diagonal).
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    validate_square(m)?;
    let (_, t) = schur(m)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Eigenvector of the upper-triangular `t` for its `k`-th diagonal entry.
fn triangular_eigenvector(t: &CMatrix, k: usize) -> CVector {
    let n = t.nrows();
    let lambda = t[(k, k)];
    let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);
    let mut y = CVector::zeros(n);
    y[k] = Complex64::new(1.0, 0.0);
    for i in (0..k).rev() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in (i + 1)..=k {
            acc += t[(i, j)] * y[j];
        }
        let mut d = t[(i, i)] - lambda;
        if d.norm() < smin {
            d = Complex64::new(smin, 0.0);
        }
        y[i] = -acc / d;
        let big = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if big > 1e100 {
            y /= Complex64::new(big, 0.0);
        }
    }
    y
}

fn eigenpairs(m: &CMatrix) -> Result<(Vec<Complex64>, Vec<CVector>)> {
    let (q, t) = schur(m)?;
    let n = t.nrows();
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for k in 0..n {
        values.push(t[(k, k)]);
        vectors.push(normalized(&q * triangular_eigenvector(&t, k)));
    }
    Ok((values, vectors))
}

/// Full eigendecomposition with paired left/right eigenvectors, ordered by
/// decreasing real part.
pub fn eig_full(m: &CMatrix) -> Result<Spectrum> {
    let n = validate_square(m)?;
    let (values, right) = eigenpairs(m)?;
    let (left_conj, left) = eigenpairs(&m.adjoint())?;
    let left_values: Vec<Complex64> = left_conj.iter().map(|z| z.conj()).collect();

    let scale = values.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let tie = 1e-10 * scale;
    let mut taken = vec![false; n];
    let mut triples = Vec::with_capacity(n);
    for (i, &lambda) in values.iter().enumerate() {
        let best = (0..n)
            .filter(|&j| !taken[j])
            .map(|j| (j, (left_values[j] - lambda).norm()))
            .fold(None::<(usize, f64)>, |acc, (j, d)| match acc {
                None => Some((j, d)),
                Some((bj, bd)) => {
                    if d < bd - tie {
                        Some((j, d))
                    } else if d <= bd + tie
                        && left[j].dotc(&right[i]).norm() > left[bj].dotc(&right[i]).norm()
                    {
                        Some((j, d))
                    } else {
                        Some((bj, bd))
                    }
                }
            })
            .map(|(j, _)| j)
            .expect("as many left as right eigenvectors");
        taken[best] = true;
        triples.push(EigenTriple::new(lambda, right[i].clone(), left[best].clone()));
    }

    let order = descending_order(&values);
    let triples = order.into_iter().map(|i| triples[i].clone()).collect();
    Ok(Spectrum {
        triples,
        source_dim: n,
    })
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(s: &Spectrum) -> Result<f64> {
    s.triples
        .first()
        .map(|t| t.lambda.re)
        .ok_or_else(|| Error::InvalidInput("empty spectrum".into()))
}

/// Spectral abscissa computed from eigenvalues only. Agrees bitwise with
/// `spectral_abscissa(&eig_full(m)?)`.
pub fn abscissa_of(m: &CMatrix) -> Result<f64> {
    let values = eigenvalues(m)?;
    let order = descending_order(&values);
    Ok(values[order[0]].re)
}

/// Default relative cutoff for `pseudo_inverse`: `N * eps`.
pub fn default_pinv_tol(n: usize) -> f64 {
    n as f64 * f64::EPSILON
}

/// Moore-Penrose pseudoinverse. Singular values below `rel_tol * sigma_max`
/// are treated as zero.
pub fn pseudo_inverse(m: &CMatrix, rel_tol: f64) -> Result<CMatrix> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "pseudoinverse tolerance must be positive, got {rel_tol}"
        )));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = rel_tol * smax;
    pinv_from_svd(svd, |_, s| s > cutoff && s > 0.0)
}

/// Pseudoinverse that discards the `drop` smallest singular values, plus
/// any below `N * eps * sigma_max`. Used where the rank deficiency is known.
pub fn pseudo_inverse_deficient(m: &CMatrix, drop: usize) -> Result<CMatrix> {
    let svd = m.clone().svd(true, true);
    let mut sorted: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sorted.sort_by(f64::total_cmp);
    let smax = sorted.last().copied().unwrap_or(0.0);
    let cutoff = default_pinv_tol(m.nrows().max(m.ncols())) * smax;
    let threshold = if drop == 0 {
        f64::NEG_INFINITY
    } else {
        sorted[drop.min(sorted.len()) - 1]
    };
    let mut dropped = 0;
    pinv_from_svd(svd, |_, s| {
        if s <= threshold && dropped < drop {
            dropped += 1;
            false
        } else {
            s > cutoff && s > 0.0
        }
    })
}

fn pinv_from_svd(
    svd: nalgebra::SVD<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    mut keep: impl FnMut(usize, f64) -> bool,
) -> Result<CMatrix> {
    let u = svd
        .u
        .ok_or_else(|| Error::InvalidInput("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::InvalidInput("SVD did not produce V^T".into()))?;
    let mut out = CMatrix::zeros(v_t.ncols(), u.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if !keep(k, s) {
            continue;
        }
        let col = v_t.row(k).adjoint() / Complex64::new(s, 0.0);
        out += col * u.column(k).adjoint();
    }
    Ok(out)
}

/// Central difference of `f` at `x` along coordinate `k` with step `h`.
pub fn central_difference<F>(f: F, x: &DVector<f64>, k: usize, h: f64) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut xp = x.clone();
    let mut xm = x.clone();
    xp[k] += h;
    xm[k] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Element of `candidates` closest to `target` in modulus distance.
pub fn nearest(candidates: &[Complex64], target: Complex64) -> Option<Complex64> {
    candidates
        .iter()
        .copied()
        .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))
}
