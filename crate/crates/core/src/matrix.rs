//! Dense helpers for the small matrices this crate works with: d-by-d
//! coefficient blocks and their 2d-by-2d companions, d <= 2. Square roots of
//! 2-by-2 SPD matrices use the closed form so that diagonal input produces
//! entrywise square roots with no eigensolver noise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type DMat = DMatrix<f64>;
pub type DVec = DVector<f64>;

/// Largest absolute entry.
pub fn max_abs(m: &DMat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Largest absolute entry of m - m^t.
pub fn asymmetry(m: &DMat) -> f64 {
    max_abs(&(m - m.transpose()))
}

pub fn sym_part(m: &DMat) -> DMat {
    (m + m.transpose()) * 0.5
}

pub fn antisym_part(m: &DMat) -> DMat {
    (m - m.transpose()) * 0.5
}

/// Eigenvalue range (min, max) of a symmetric matrix.
pub fn sym_eig_bounds(m: &DMat) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in eig.eigenvalues.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    (lo, hi)
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm_sym(m: &DMat) -> f64 {
    let (lo, hi) = sym_eig_bounds(m);
    lo.abs().max(hi.abs())
}

/// Positive part of a symmetric matrix: negative eigenvalues clamped to zero.
pub fn positive_part(m: &DMat) -> DMat {
    let eig = m.clone().symmetric_eigen();
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * DMat::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

fn check_sym_input(m: &DMat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::validation(format!("{what}: not square")));
    }
    let scale = max_abs(m).max(1.0);
    if asymmetry(m) > 1e-12 * scale {
        return Err(Error::validation(format!("{what}: not symmetric")));
    }
    Ok(())
}

/// Square root of a symmetric positive definite matrix of size 1 or 2
/// (closed form) or larger (eigendecomposition).
pub fn spd_sqrt(m: &DMat) -> Result<DMat> {
    check_sym_input(m, "spd_sqrt")?;
    match m.nrows() {
        1 => {
            let a = m[(0, 0)];
            if a <= 0.0 {
                return Err(Error::singular(format!("spd_sqrt: 1x1 entry {a} not positive")));
            }
            Ok(DMat::from_element(1, 1, a.sqrt()))
        }
        2 => {
            let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let det = a * c - b * b;
            let tr = a + c;
            if det <= 0.0 || tr <= 0.0 {
                return Err(Error::singular(format!(
                    "spd_sqrt: 2x2 with det {det:.3e}, trace {tr:.3e} not positive definite"
                )));
            }
            if b == 0.0 {
                return Ok(DMat::from_diagonal(&DVec::from_vec(vec![a.sqrt(), c.sqrt()])));
            }
            // X = (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det))
            let sd = det.sqrt();
            let denom = (tr + 2.0 * sd).sqrt();
            let mut x = m.clone();
            x[(0, 0)] += sd;
            x[(1, 1)] += sd;
            Ok(x / denom)
        }
        _ => {
            let eig = m.clone().symmetric_eigen();
            let mut roots = eig.eigenvalues.clone();
            for v in roots.iter_mut() {
                if *v <= 0.0 {
                    return Err(Error::singular(format!(
                        "spd_sqrt: eigenvalue {v:.3e} not positive"
                    )));
                }
                *v = v.sqrt();
            }
            Ok(&eig.eigenvectors * DMat::from_diagonal(&roots) * eig.eigenvectors.transpose())
        }
    }
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn spd_inv_sqrt(m: &DMat) -> Result<DMat> {
    let root = spd_sqrt(m)?;
    invert(&root)
}

/// Inverse with a singularity check.
pub fn invert(m: &DMat) -> Result<DMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::singular(format!("invert: {}x{} matrix singular", m.nrows(), m.ncols())))
}

/// min eig(b - a): nonnegative iff a <= b in the Loewner order.
pub fn loewner_gap(a: &DMat, b: &DMat) -> f64 {
    sym_eig_bounds(&(b - a)).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_of_diagonal_is_entrywise() {
        let m = DMat::from_diagonal(&DVec::from_vec(vec![4.0, 1.0]));
        let r = spd_sqrt(&m).unwrap();
        assert_eq!(r[(0, 0)], 2.0);
        assert_eq!(r[(1, 1)], 1.0);
        assert_eq!(r[(0, 1)], 0.0);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = spd_sqrt(&m).unwrap();
        assert_relative_eq!(&r * &r, m, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = DMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_sqrt(&m).is_err());
    }

    #[test]
    fn positive_part_splits_signs() {
        let m = DMat::from_diagonal(&DVec::from_vec(vec![3.0, -2.0]));
        let p = positive_part(&m);
        assert_relative_eq!(p[(0, 0)], 3.0, epsilon = 1e-12);
        assert_relative_eq!(p[(1, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn loewner_gap_sign() {
        let a = DMat::identity(2, 2);
        let b = &a * 2.0;
        assert!(loewner_gap(&a, &b) > 0.99);
        assert!(loewner_gap(&b, &a) < -0.99);
    }
}
