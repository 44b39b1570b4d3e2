//! Small dense-vector helpers.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale_to_unit(a: &[f64]) -> Result<Vec<f64>> {
    let n = l2_norm(a);
    if !n.is_finite() {
        return Err(Error::NonFinite("vector"));
    }
    if n == 0.0 {
        return Err(Error::ZeroNorm("vector"));
    }
    Ok(a.iter().map(|v| v / n).collect())
}

/// Cholesky factor plus log-determinant and inverse of an SPD matrix.
pub(crate) struct SpdFactor {
    pub inverse: DMatrix<f64>,
    pub log_det: f64,
}

pub(crate) fn factor_spd(m: &DMatrix<f64>, what: &'static str) -> Result<SpdFactor> {
    let sym = (m + m.transpose()) * 0.5;
    let chol: Cholesky<f64, Dyn> = Cholesky::new(sym).ok_or(Error::NotPositiveDefinite(what))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let mut inverse = chol.inverse();
    inverse = (&inverse + inverse.transpose()) * 0.5;
    if !log_det.is_finite() {
        return Err(Error::NotPositiveDefinite(what));
    }
    Ok(SpdFactor { inverse, log_det })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_factor_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 8.0]));
        let f = factor_spd(&m, "m").unwrap();
        assert!((f.log_det - 16f64.ln()).abs() < 1e-14);
        assert!((f.inverse[(1, 1)] - 0.125).abs() < 1e-15);
        assert!(factor_spd(&DMatrix::zeros(2, 2), "z").is_err());
    }
}
