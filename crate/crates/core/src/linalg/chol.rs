use nalgebra::DMatrix;

use super::{sym_eig, LinalgError};

const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-8;

/// Lower-triangular Cholesky factor with an escalating jitter policy.
///
/// Matrices that are positive semidefinite in exact arithmetic (the filter
/// update factor in particular) can pick up tiny negative eigenvalues from
/// round-off. On failure the diagonal is inflated by `tau`, escalating
/// tenfold from 1e-12 to 1e-8 before giving up.
pub fn cholesky(s: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    assert_eq!(s.nrows(), s.ncols(), "cholesky needs a square matrix");
    let sym = 0.5 * (s + s.transpose());
    if let Some(chol) = nalgebra::Cholesky::new(sym.clone()) {
        return Ok(chol.l());
    }
    let mut tau = JITTER_START;
    loop {
        let mut jittered = sym.clone();
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += tau;
        }
        if let Some(chol) = nalgebra::Cholesky::new(jittered) {
            return Ok(chol.l());
        }
        if tau >= JITTER_MAX {
            return Err(LinalgError::Indefinite { max_jitter: JITTER_MAX });
        }
        tau *= 10.0;
    }
}

/// Square-root factor of a symmetric PSD matrix.
///
/// Tries [`cholesky`] first; if the matrix is indefinite beyond the jitter
/// policy, falls back to the symmetric eigendecomposition with negative
/// eigenvalues clamped to zero. The result `F` satisfies `F F^T ~= S` but is
/// only triangular on the Cholesky path.
pub fn psd_sqrt_factor(s: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    match cholesky(s) {
        Ok(l) => Ok(l),
        Err(LinalgError::Indefinite { .. }) => {
            let pairs = sym_eig(s)?;
            let n = s.nrows();
            let mut f = pairs.vectors;
            for (c, &val) in pairs.values.iter().enumerate() {
                let scale = val.max(0.0).sqrt();
                for i in 0..n {
                    f[(i, c)] *= scale;
                }
            }
            Ok(f)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn identity_factor() {
        let l = cholesky(&DMatrix::identity(2, 2)).unwrap();
        assert!((l - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn diagonal_factor() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let l = cholesky(&s).unwrap();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 3.0).abs() < 1e-15);
        assert!(l[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn random_spd_reconstruction() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(15, 15, |_, _| rng.gen_range(-1.0..1.0));
        let s = &a * a.transpose() + DMatrix::identity(15, 15);
        let l = cholesky(&s).unwrap();
        let err = (&l * l.transpose() - &s).norm() / s.norm();
        assert!(err <= 1e-10, "reconstruction error {err}");
        // lower triangular with strictly positive diagonal
        for i in 0..15 {
            assert!(l[(i, i)] > 0.0);
            for j in (i + 1)..15 {
                assert!(l[(i, j)] == 0.0);
            }
        }
    }

    #[test]
    fn near_psd_takes_jitter_path() {
        // rank-deficient PSD with a tiny negative perturbation
        let v = DVector::from_vec(vec![1.0, 1.0, 1.0]).normalize();
        let mut s = &v * v.transpose();
        s[(2, 2)] -= 1e-13;
        let l = cholesky(&s).unwrap();
        let err = (&l * l.transpose() - &s).amax();
        assert!(err <= 1e-7, "jittered reconstruction off by {err}");
    }

    #[test]
    fn indefinite_rejected_but_fallback_clamps() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert!(matches!(cholesky(&s), Err(LinalgError::Indefinite { .. })));
        let f = psd_sqrt_factor(&s).unwrap();
        let rec = &f * f.transpose();
        assert!((rec[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(rec[(1, 1)].abs() < 1e-12, "negative mode clamped to zero");
    }
}
