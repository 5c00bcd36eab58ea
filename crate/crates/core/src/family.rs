use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Affinely parameterized matrix `F(x) = A0 + sum_k x_k A_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFamily {
    base: DMatrix<f64>,
    directions: Vec<DMatrix<f64>>,
}

impl MatrixFamily {
    pub fn new(base: DMatrix<f64>, directions: Vec<DMatrix<f64>>) -> Result<Self> {
        if base.nrows() != base.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "base matrix must be square, got {}x{}",
                base.nrows(),
                base.ncols()
            )));
        }
        for (k, d) in directions.iter().enumerate() {
            if d.shape() != base.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "direction {k} is {}x{}, expected {}x{}",
                    d.nrows(),
                    d.ncols(),
                    base.nrows(),
                    base.ncols()
                )));
            }
        }
        Ok(MatrixFamily { base, directions })
    }

    /// Matrix dimension `N`.
    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    /// Parameter count `n`.
    pub fn n_params(&self) -> usize {
        self.directions.len()
    }

    pub fn base(&self) -> &DMatrix<f64> {
        &self.base
    }

    pub fn directions(&self) -> &[DMatrix<f64>] {
        &self.directions
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(x.len(), self.n_params(), "parameter length");
        let mut f = self.base.clone();
        for (xk, d) in x.iter().zip(&self.directions) {
            if *xk != 0.0 {
                f += d * *xk;
            }
        }
        f
    }

    /// Freeze the parameters in `fixed` (index, value); the remaining
    /// parameters keep their relative order.
    pub fn with_fixed(&self, fixed: &[(usize, f64)]) -> Result<Self> {
        let n = self.n_params();
        let mut base = self.base.clone();
        let mut frozen = vec![false; n];
        for &(k, value) in fixed {
            if k >= n {
                return Err(Error::DimensionMismatch(format!(
                    "fixed parameter {k} out of range for {n} parameters"
                )));
            }
            frozen[k] = true;
            base += &self.directions[k] * value;
        }
        let directions = self
            .directions
            .iter()
            .zip(&frozen)
            .filter(|(_, f)| !**f)
            .map(|(d, _)| d.clone())
            .collect();
        MatrixFamily::new(base, directions)
    }
}

/// Static output feedback family `F(x) = A + B X C`, with `X` the `m x p`
/// gain filled from `x` in row-major order.
pub fn sof_family(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<MatrixFamily> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "A {}x{}, B {}x{}, C {}x{} are not conformable",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let (m, p) = (b.ncols(), c.nrows());
    let mut directions = Vec::with_capacity(m * p);
    for r in 0..m {
        for s in 0..p {
            // B e_r e_s^T C = (column r of B)(row s of C)
            directions.push(b.column(r) * c.row(s));
        }
    }
    MatrixFamily::new(a.clone(), directions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_sof_is_identity_map() {
        let fam = sof_family(
            &DMatrix::zeros(1, 1),
            &DMatrix::from_element(1, 1, 1.0),
            &DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert_eq!(fam.n_params(), 1);
        let f = fam.evaluate(&DVector::from_vec(vec![2.5]));
        assert_eq!(f[(0, 0)], 2.5);
    }

    #[test]
    fn sof_matches_direct_assembly() {
        let a = DMatrix::from_fn(4, 4, |i, j| (i as f64 * 0.7 - j as f64 * 0.3).sin());
        let b = DMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 * 0.25 - 0.5);
        let c = DMatrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64).cos());
        let fam = sof_family(&a, &b, &c).unwrap();
        assert_eq!(fam.n_params(), 6);
        let x = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.25, 3.0, -0.75]);
        let gain = DMatrix::from_row_slice(2, 3, x.as_slice());
        let direct = &a + &b * gain * &c;
        assert!((fam.evaluate(&x) - direct).amax() < 1e-14);
    }

    #[test]
    fn sof_rejects_mismatch() {
        let err = sof_family(
            &DMatrix::zeros(3, 3),
            &DMatrix::zeros(2, 1),
            &DMatrix::zeros(1, 3),
        );
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn fixing_parameters_shifts_base() {
        let fam = MatrixFamily::new(
            DMatrix::zeros(2, 2),
            vec![DMatrix::identity(2, 2), DMatrix::from_element(2, 2, 1.0)],
        )
        .unwrap();
        let fixed = fam.with_fixed(&[(1, 2.0)]).unwrap();
        assert_eq!(fixed.n_params(), 1);
        let x = DVector::from_vec(vec![3.0]);
        let full = fam.evaluate(&DVector::from_vec(vec![3.0, 2.0]));
        assert_eq!(fixed.evaluate(&x), full);
        assert!(fam.with_fixed(&[(5, 1.0)]).is_err());
    }
}
