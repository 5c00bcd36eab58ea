//! Rightmost eigenvalues of retarded time-delay systems
//!
//! ```text
//! v'(t) = sum_j A_j(x) v(t - tau_j),   Lambda(lambda; x) = lambda I - sum_j A_j(x) e^{-lambda tau_j}
//! ```
//!
//! Seeds come from a Chebyshev collocation of the infinitesimal generator on
//! `[-tau_max, 0]`; each seed is polished by Newton's method on the bordered
//! system `[Lambda v = 0; c^* v = 1]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::family::MatrixFamily;
use crate::numeric::{descending_order, eig_full, normalized, to_complex, CMatrix, CVector, EigenTriple};

const NORMALIZATION_SEED: u64 = 0x5eed_de1a;

#[derive(Debug, Clone, PartialEq)]
pub struct DelayTerm {
    pub family: MatrixFamily,
    pub tau: f64,
}

/// `Lambda(lambda; x) = lambda I - A_0(x) - sum_{j>=1} A_j(x) e^{-lambda tau_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayFamily {
    terms: Vec<DelayTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayOptions {
    pub initial_degree: usize,
    pub max_degree: usize,
    /// Relative residual `||Lambda v|| / (1 + ||Lambda||)` for Newton.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Consecutive-degree agreement required of the refined roots.
    pub stability_tol: f64,
    /// Refined roots closer than this are the same root.
    pub dedup_tol: f64,
}

impl Default for DelayOptions {
    fn default() -> Self {
        DelayOptions {
            initial_degree: 20,
            max_degree: 2560,
            newton_tol: 1e-12,
            newton_max_iter: 40,
            stability_tol: 1e-8,
            dedup_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayEigenResult {
    /// Ordered by decreasing real part.
    pub triples: Vec<EigenTriple>,
    /// Every eigenvalue with real part `>= half_plane` is listed.
    pub half_plane: f64,
    /// Collocation degree at which the root set stabilized.
    pub degree: usize,
}

impl DelayFamily {
    pub fn new(terms: Vec<DelayTerm>) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::InvalidInput("delay family needs at least one term".into()));
        };
        if first.tau != 0.0 {
            return Err(Error::InvalidInput(format!(
                "term 0 must have zero delay, got {}",
                first.tau
            )));
        }
        let (dim, n) = (first.family.dim(), first.family.n_params());
        for (j, t) in terms.iter().enumerate() {
            if !(t.tau >= 0.0) || !t.tau.is_finite() {
                return Err(Error::InvalidInput(format!("term {j} has invalid delay {}", t.tau)));
            }
            if t.family.dim() != dim || t.family.n_params() != n {
                return Err(Error::DimensionMismatch(format!(
                    "term {j} is {}x{} with {} parameters, expected {dim}x{dim} with {n}",
                    t.family.dim(),
                    t.family.dim(),
                    t.family.n_params()
                )));
            }
        }
        Ok(DelayFamily { terms })
    }

    pub fn terms(&self) -> &[DelayTerm] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.terms[0].family.dim()
    }

    pub fn n_params(&self) -> usize {
        self.terms[0].family.n_params()
    }

    pub fn max_delay(&self) -> f64 {
        self.terms.iter().map(|t| t.tau).fold(0.0, f64::max)
    }

    pub fn with_fixed(&self, fixed: &[(usize, f64)]) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                Ok(DelayTerm {
                    family: t.family.with_fixed(fixed)?,
                    tau: t.tau,
                })
            })
            .collect::<Result<_>>()?;
        DelayFamily::new(terms)
    }

    fn matrices(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.terms.iter().map(|t| t.family.evaluate(x)).collect()
    }
}

struct Evaluated {
    mats: Vec<CMatrix>,
    taus: Vec<f64>,
}

impl Evaluated {
    fn new(fam: &DelayFamily, x: &DVector<f64>) -> Self {
        Evaluated {
            mats: fam.matrices(x).iter().map(to_complex).collect(),
            taus: fam.terms.iter().map(|t| t.tau).collect(),
        }
    }

    fn dim(&self) -> usize {
        self.mats[0].nrows()
    }

    fn lambda(&self, lam: Complex64) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::identity(n, n) * lam;
        for (a, &tau) in self.mats.iter().zip(&self.taus) {
            out -= a * (-lam * tau).exp();
        }
        out
    }

    /// `d Lambda / d lambda = I + sum_j tau_j e^{-lambda tau_j} A_j`.
    fn lambda_prime(&self, lam: Complex64) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::identity(n, n);
        for (a, &tau) in self.mats.iter().zip(&self.taus) {
            if tau != 0.0 {
                out += a * (tau * (-lam * tau).exp());
            }
        }
        out
    }

    fn lambda_second(&self, lam: Complex64) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        for (a, &tau) in self.mats.iter().zip(&self.taus) {
            if tau != 0.0 {
                out -= a * (tau * tau * (-lam * tau).exp());
            }
        }
        out
    }
}

/// Characteristic matrix at `(lam, x)`.
pub fn lambda_matrix(fam: &DelayFamily, x: &DVector<f64>, lam: Complex64) -> CMatrix {
    Evaluated::new(fam, x).lambda(lam)
}

/// Chebyshev points `cos(i pi / d)` and the differentiation matrix on them.
fn chebyshev(d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let pts: Vec<f64> = (0..=d)
        .map(|i| (std::f64::consts::PI * i as f64 / d as f64).cos())
        .collect();
    let weight = |i: usize| {
        let c = if i == 0 || i == d { 2.0 } else { 1.0 };
        if i % 2 == 0 {
            c
        } else {
            -c
        }
    };
    let mut diff = DMatrix::zeros(d + 1, d + 1);
    for i in 0..=d {
        let mut row_sum = 0.0;
        for j in 0..=d {
            if i != j {
                let v = weight(i) / weight(j) / (pts[i] - pts[j]);
                diff[(i, j)] = v;
                row_sum += v;
            }
        }
        diff[(i, i)] = -row_sum;
    }
    (pts, diff)
}

/// Lagrange basis values at `s` for the Chebyshev nodes (barycentric form).
fn lagrange_row(pts: &[f64], s: f64) -> Vec<f64> {
    let d = pts.len() - 1;
    if let Some(k) = pts.iter().position(|&p| (p - s).abs() < 1e-14) {
        let mut row = vec![0.0; d + 1];
        row[k] = 1.0;
        return row;
    }
    let w: Vec<f64> = (0..=d)
        .map(|i| {
            let h = if i == 0 || i == d { 0.5 } else { 1.0 };
            if i % 2 == 0 {
                h
            } else {
                -h
            }
        })
        .collect();
    let terms: Vec<f64> = (0..=d).map(|i| w[i] / (s - pts[i])).collect();
    let total: f64 = terms.iter().sum();
    terms.iter().map(|t| t / total).collect()
}

/// Real collocation matrix of the generator at degree `d`.
fn generator_matrix(ev: &[DMatrix<f64>], taus: &[f64], d: usize) -> DMatrix<f64> {
    let n = ev[0].nrows();
    let tau_max = taus.iter().cloned().fold(0.0, f64::max);
    let (pts, diff) = chebyshev(d);
    let size = n * (d + 1);
    let mut m = DMatrix::zeros(size, size);
    // theta = tau_max (s - 1) / 2 maps s in [-1, 1] onto [-tau_max, 0]
    let scale = 2.0 / tau_max;
    for (a, &tau) in ev.iter().zip(taus) {
        let s = 1.0 - 2.0 * tau / tau_max;
        let row = lagrange_row(&pts, s);
        for (k, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mut block = m.view_mut((0, k * n), (n, n));
            block += a * w;
        }
    }
    for i in 1..=d {
        for k in 0..=d {
            let v = diff[(i, k)] * scale;
            if v == 0.0 {
                continue;
            }
            for r in 0..n {
                m[(i * n + r, k * n + r)] = v;
            }
        }
    }
    m
}

/// Eigenvalues only; skipping the Schur vectors is several times faster.
fn real_eigenvalues(m: DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenConvergence {
            dim: m.nrows(),
            norm: f64::INFINITY,
        });
    }
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

fn normalization_vector(n: usize) -> CVector {
    let mut rng = ChaCha8Rng::seed_from_u64(NORMALIZATION_SEED);
    CVector::from_fn(n, |_, _| Complex64::new(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5)))
}

fn smallest_singular_pair(m: &CMatrix) -> (CVector, CVector) {
    let svd = m.clone().svd(true, true);
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let u = svd.u.expect("U requested").column(k).into_owned();
    let v = svd.v_t.expect("V^T requested").row(k).adjoint();
    (u, v)
}

/// Left null vector of a nearly singular `m`: SVD guess polished by inverse
/// iteration on `m^*`.
fn left_null_vector(m: &CMatrix) -> CVector {
    let (mut u, _) = smallest_singular_pair(m);
    let lu = m.adjoint().lu();
    for _ in 0..3 {
        match lu.solve(&u) {
            Some(y) if y.iter().all(|z| z.is_finite()) && y.norm() > 0.0 => u = normalized(y),
            _ => break,
        }
    }
    u
}

/// Newton on the bordered system; returns `(lambda, unit v)`.
fn newton_refine(ev: &Evaluated, seed: Complex64, c: &CVector, opts: &DelayOptions) -> Option<(Complex64, CVector)> {
    let n = ev.dim();
    let mut lam = seed;
    let (_, v0) = smallest_singular_pair(&ev.lambda(lam));
    let cv = c.dotc(&v0);
    if cv.norm() < 1e-12 {
        return None;
    }
    let mut v = v0 / cv;
    let mut polished = false;
    for _ in 0..opts.newton_max_iter {
        let lm = ev.lambda(lam);
        let vn = v.norm();
        let res = (&lm * &v).norm() / vn / (1.0 + lm.norm());
        if polished {
            return Some((lam, normalized(v)));
        }
        // one more step past the tolerance for full accuracy
        polished = res <= opts.newton_tol;
        let mut jac = CMatrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&lm);
        jac.view_mut((0, n), (n, 1)).copy_from(&(ev.lambda_prime(lam) * &v));
        jac.view_mut((n, 0), (1, n)).copy_from(&c.adjoint());
        let mut f = CVector::zeros(n + 1);
        f.rows_mut(0, n).copy_from(&(&lm * &v));
        f[n] = c.dotc(&v) - Complex64::new(1.0, 0.0);
        let step = jac.lu().solve(&(-f))?;
        v += step.rows(0, n);
        lam += step[n];
        if !lam.re.is_finite() || !lam.im.is_finite() {
            return None;
        }
    }
    let lm = ev.lambda(lam);
    let res = (&lm * &v).norm() / v.norm() / (1.0 + lm.norm());
    (res <= opts.newton_tol).then(|| (lam, normalized(v)))
}

fn refine_seeds(
    ev: &Evaluated,
    raw: &[Complex64],
    r: f64,
    c: &CVector,
    opts: &DelayOptions,
) -> Vec<(Complex64, CVector)> {
    let margin = 0.25 * r.abs().max(1e-3);
    let mut roots: Vec<(Complex64, CVector)> = Vec::new();
    let mut seeds: Vec<Complex64> = raw
        .iter()
        .copied()
        .filter(|z| z.re >= r - margin && z.im >= 0.0)
        .collect();
    seeds.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let close = |a: Complex64, b: Complex64| (a - b).norm() < opts.dedup_tol * (1.0 + a.norm());
    for s in seeds {
        let Some((mut lam, mut v)) = newton_refine(ev, s, c, opts) else {
            continue;
        };
        if lam.im.abs() <= opts.dedup_tol * (1.0 + lam.norm()) {
            lam.im = 0.0;
        } else if lam.im < 0.0 {
            lam = lam.conj();
            v = v.map(|z| z.conj());
        }
        if lam.re < r || roots.iter().any(|(z, _)| close(*z, lam)) {
            continue;
        }
        if lam.im != 0.0 {
            roots.push((lam.conj(), v.map(|z| z.conj())));
        }
        roots.push((lam, v));
    }
    roots
}

/// Roots grouped by proximity: `(centroid, members)`. Members of a tight
/// cluster are individually ill-conditioned but their mean is not.
fn clusters(roots: &[(Complex64, CVector)], radius: f64) -> Vec<(Complex64, usize)> {
    let mut out: Vec<(Complex64, usize)> = Vec::new();
    for (z, _) in roots {
        match out
            .iter_mut()
            .find(|(c, k)| (c / *k as f64 - z).norm() <= radius * (1.0 + z.norm()))
        {
            Some((c, k)) => {
                *c += z;
                *k += 1;
            }
            None => out.push((*z, 1)),
        }
    }
    out.into_iter().map(|(c, k)| (c / k as f64, k)).collect()
}

fn same_roots(a: &[(Complex64, CVector)], b: &[(Complex64, CVector)], tol: f64) -> bool {
    let radius = tol.sqrt();
    let (ca, cb) = (clusters(a, radius), clusters(b, radius));
    a.len() == b.len()
        && ca.len() == cb.len()
        && ca.iter().all(|(za, ka)| {
            cb.iter()
                .any(|(zb, kb)| ka == kb && (za - zb).norm() <= tol * (1.0 + za.norm()))
        })
}

/// All eigenvalues with real part at least `r` (default `-1/tau_max`),
/// doubling `r` toward `-inf` until at least one is found.
pub fn rightmost_eigs(fam: &DelayFamily, x: &DVector<f64>, r0: Option<f64>) -> Result<DelayEigenResult> {
    rightmost_eigs_with(fam, x, r0, &DelayOptions::default())
}

pub fn rightmost_eigs_with(
    fam: &DelayFamily,
    x: &DVector<f64>,
    r0: Option<f64>,
    opts: &DelayOptions,
) -> Result<DelayEigenResult> {
    if x.len() != fam.n_params() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "expected {} finite parameters, got {}",
            fam.n_params(),
            x.len()
        )));
    }
    let tau_max = fam.max_delay();
    let ev = Evaluated::new(fam, x);
    if tau_max == 0.0 {
        // no delays: ordinary eigenproblem of the summed matrices
        let sum = ev.mats.iter().fold(CMatrix::zeros(ev.dim(), ev.dim()), |acc, a| acc + a);
        let s = eig_full(&sum)?;
        let half_plane = s.triples.last().map_or(0.0, |t| t.lambda.re);
        return Ok(DelayEigenResult {
            triples: s.triples,
            half_plane,
            degree: 0,
        });
    }
    let mut r = r0.unwrap_or(-1.0 / tau_max);
    if !(r < 0.0) {
        return Err(Error::InvalidInput(format!("half-plane bound must be negative, got {r}")));
    }
    let real_mats = fam.matrices(x);
    let taus: Vec<f64> = fam.terms.iter().map(|t| t.tau).collect();
    let c = normalization_vector(ev.dim());
    let mut spectra: Vec<(usize, Vec<Complex64>)> = Vec::new();
    let mut raw_at = |d: usize| -> Result<Vec<Complex64>> {
        if let Some((_, s)) = spectra.iter().find(|(dd, _)| *dd == d) {
            return Ok(s.clone());
        }
        let s = real_eigenvalues(generator_matrix(&real_mats, &taus, d))?;
        spectra.push((d, s.clone()));
        Ok(s)
    };

    for _ in 0..64 {
        let mut d = opts.initial_degree.max(2);
        let mut prev = refine_seeds(&ev, &raw_at(d)?, r, &c, opts);
        let (roots, degree) = loop {
            let next_d = 2 * d;
            if next_d > opts.max_degree {
                return Err(Error::DelayAccuracy { cap: opts.max_degree });
            }
            let next = refine_seeds(&ev, &raw_at(next_d)?, r, &c, opts);
            if same_roots(&prev, &next, opts.stability_tol) {
                break (next, next_d);
            }
            prev = next;
            d = next_d;
        };
        if roots.is_empty() {
            r *= 2.0;
            continue;
        }
        let lambdas: Vec<Complex64> = roots.iter().map(|(z, _)| *z).collect();
        let order = descending_order(&lambdas);
        let triples = order
            .into_iter()
            .map(|i| {
                let (lam, v) = &roots[i];
                let u = left_null_vector(&ev.lambda(*lam));
                EigenTriple::new(*lam, v.clone(), u)
            })
            .collect();
        return Ok(DelayEigenResult {
            triples,
            half_plane: r,
            degree,
        });
    }
    Err(Error::DelayEigen("no eigenvalue found in any half-plane".into()))
}

fn derivative_denominator(ev: &Evaluated, t: &EigenTriple) -> Result<Complex64> {
    let lp = ev.lambda_prime(t.lambda);
    let den = t.u.dotc(&(&lp * &t.v));
    if den.norm() < 1e-10 * (1.0 + lp.norm()) {
        return Err(Error::DerivativeUndefined { condition: den.norm() });
    }
    Ok(den)
}

/// `d Lambda / d x_k = -(dA_0/dx_k + sum_j dA_j/dx_k e^{-lambda tau_j})`.
fn lambda_partials(fam: &DelayFamily, lam: Complex64) -> Vec<CMatrix> {
    let (dim, n) = (fam.dim(), fam.n_params());
    (0..n)
        .map(|k| {
            fam.terms.iter().fold(CMatrix::zeros(dim, dim), |acc, t| {
                acc - to_complex(&t.family.directions()[k]) * (-lam * t.tau).exp()
            })
        })
        .collect()
}

/// `d^2 Lambda / d lambda d x_k = sum_j tau_j e^{-lambda tau_j} dA_j/dx_k`.
fn mixed_partials(fam: &DelayFamily, lam: Complex64) -> Vec<CMatrix> {
    let (dim, n) = (fam.dim(), fam.n_params());
    (0..n)
        .map(|k| {
            fam.terms.iter().fold(CMatrix::zeros(dim, dim), |acc, t| {
                if t.tau == 0.0 {
                    acc
                } else {
                    acc + to_complex(&t.family.directions()[k]) * (t.tau * (-lam * t.tau).exp())
                }
            })
        })
        .collect()
}

/// Gradient of a simple eigenvalue of the delay problem.
pub fn delay_gradient(fam: &DelayFamily, x: &DVector<f64>, t: &EigenTriple) -> Result<CVector> {
    let ev = Evaluated::new(fam, x);
    let den = derivative_denominator(&ev, t)?;
    let partials = lambda_partials(fam, t.lambda);
    Ok(CVector::from_iterator(
        fam.n_params(),
        partials.iter().map(|p| -t.u.dotc(&(p * &t.v)) / den),
    ))
}

/// Hessian of a simple eigenvalue of the delay problem, using eigenvector
/// derivatives from the bordered system
/// `[[Lambda, Lambda_lambda v], [v^*, 0]] [v_k; lambda_k] = [-Lambda_k v; 0]`.
pub fn delay_hessian(fam: &DelayFamily, x: &DVector<f64>, t: &EigenTriple) -> Result<CMatrix> {
    let ev = Evaluated::new(fam, x);
    let den = derivative_denominator(&ev, t)?;
    let (dim, n) = (fam.dim(), fam.n_params());
    let lam = t.lambda;
    let v = &t.v;
    let u = &t.u;
    let lm = ev.lambda(lam);
    let lp = ev.lambda_prime(lam);
    let lpp = ev.lambda_second(lam);
    let dk = lambda_partials(fam, lam);
    let dlk = mixed_partials(fam, lam);

    let mut border = CMatrix::zeros(dim + 1, dim + 1);
    border.view_mut((0, 0), (dim, dim)).copy_from(&lm);
    border.view_mut((0, dim), (dim, 1)).copy_from(&(&lp * v));
    border.view_mut((dim, 0), (1, dim)).copy_from(&v.adjoint());
    let lu = border.lu();
    let mut dv = Vec::with_capacity(n);
    let mut dl = Vec::with_capacity(n);
    for p in &dk {
        let mut rhs = CVector::zeros(dim + 1);
        rhs.rows_mut(0, dim).copy_from(&(-(p * v)));
        let sol = lu
            .solve(&rhs)
            .ok_or(Error::DerivativeUndefined { condition: 0.0 })?;
        if sol.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::DerivativeUndefined { condition: 0.0 });
        }
        dv.push(sol.rows(0, dim).into_owned());
        dl.push(sol[dim]);
    }

    let mut h = CMatrix::zeros(n, n);
    for k in 0..n {
        for l in k..n {
            let second = &dlk[k] * dl[l] + &dlk[l] * dl[k] + &lpp * (dl[k] * dl[l]);
            let first_k = &dk[k] + &lp * dl[k];
            let first_l = &dk[l] + &lp * dl[l];
            let num = u.dotc(&(second * v)) + u.dotc(&(first_k * &dv[l])) + u.dotc(&(first_l * &dv[k]));
            let val = -num / den;
            h[(k, l)] = val;
            h[(l, k)] = val;
        }
    }
    Ok(h)
}
