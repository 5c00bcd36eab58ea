use nalgebra::DVector;

use crate::delay::{delay_gradient, delay_hessian, rightmost_eigs, DelayFamily};
use crate::derivatives::{eig_gradient, eig_hessian};
use crate::error::Result;
use crate::family::MatrixFamily;
use crate::numeric::{abscissa_of, eig_full, to_complex, CMatrix, CVector, EigenTriple};

/// A parameterized eigenvalue problem the solver can minimize over.
pub trait SpectralModel: Sync {
    fn n_params(&self) -> usize;

    /// Eigen-triples at `x`, ordered by decreasing real part.
    fn spectrum(&self, x: &DVector<f64>) -> Result<Vec<EigenTriple>>;

    /// Spectral abscissa at `x`; must agree exactly with `spectrum(x)[0]`.
    fn abscissa(&self, x: &DVector<f64>) -> Result<f64> {
        let s = self.spectrum(x)?;
        Ok(s[0].lambda.re)
    }

    fn gradient(&self, x: &DVector<f64>, t: &EigenTriple) -> Result<CVector>;

    fn hessian(&self, x: &DVector<f64>, t: &EigenTriple) -> Result<CMatrix>;
}

impl SpectralModel for MatrixFamily {
    fn n_params(&self) -> usize {
        MatrixFamily::n_params(self)
    }

    fn spectrum(&self, x: &DVector<f64>) -> Result<Vec<EigenTriple>> {
        Ok(eig_full(&to_complex(&self.evaluate(x)))?.triples)
    }

    fn abscissa(&self, x: &DVector<f64>) -> Result<f64> {
        abscissa_of(&to_complex(&self.evaluate(x)))
    }

    fn gradient(&self, _x: &DVector<f64>, t: &EigenTriple) -> Result<CVector> {
        eig_gradient(self, t)
    }

    fn hessian(&self, x: &DVector<f64>, t: &EigenTriple) -> Result<CMatrix> {
        eig_hessian(self, t, &self.evaluate(x))
    }
}

impl SpectralModel for DelayFamily {
    fn n_params(&self) -> usize {
        DelayFamily::n_params(self)
    }

    fn spectrum(&self, x: &DVector<f64>) -> Result<Vec<EigenTriple>> {
        Ok(rightmost_eigs(self, x, None)?.triples)
    }

    fn gradient(&self, x: &DVector<f64>, t: &EigenTriple) -> Result<CVector> {
        delay_gradient(self, x, t)
    }

    fn hessian(&self, x: &DVector<f64>, t: &EigenTriple) -> Result<CMatrix> {
        delay_hessian(self, x, t)
    }
}
