//! Normal-equation solves for dictionary updates.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};

/// Smallest admissible ratio between the smallest and largest pivot of the
/// Cholesky factor of `WWᵀ + εI`; below it the system is treated as singular.
const PIVOT_RATIO_FLOOR: f64 = 1e-7;

/// Sparse-aware Gram products of a code matrix: returns `(WWᵀ, XWᵀ)`.
///
/// Codes are mostly zero, so both products are accumulated column by
/// column over the nonzero entries only.
pub fn code_products(signals: &DMatrix<f64>, codes: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = codes.nrows();
    let d = signals.nrows();
    let mut wwt = DMatrix::zeros(k, k);
    let mut xwt = DMatrix::zeros(d, k);
    let mut support: Vec<(usize, f64)> = Vec::with_capacity(k);
    for (x, w) in signals.column_iter().zip(codes.column_iter()) {
        support.clear();
        support.extend(w.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)));
        for &(a, wa) in &support {
            for &(b, wb) in &support {
                wwt[(a, b)] += wa * wb;
            }
            let mut col = xwt.column_mut(a);
            for (o, xi) in col.iter_mut().zip(x.iter()) {
                *o += xi * wa;
            }
        }
    }
    (wwt, xwt)
}

/// Minimiser of `‖X − DW‖_F² + ε‖D‖_F²`, i.e. `D = XWᵀ(WWᵀ + εI)⁻¹`.
///
/// With `ε = 0` and `W` of full row rank this is `X·W†`.
pub fn least_squares_dictionary(
    signals: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    ridge_epsilon: f64,
) -> Result<DMatrix<f64>> {
    if signals.ncols() != codes.ncols() {
        return Err(Error::invalid(format!(
            "{} signals but {} code columns",
            signals.ncols(),
            codes.ncols()
        )));
    }
    if !ridge_epsilon.is_finite() || ridge_epsilon < 0.0 {
        return Err(Error::invalid("ridge epsilon must be finite and nonnegative"));
    }
    let (wwt, xwt) = code_products(signals, codes);
    solve_normal_equations(wwt, &xwt, ridge_epsilon)
}

/// Solves `D·A = B` for symmetric `A = gram + εI`.
pub fn solve_normal_equations(mut gram: DMatrix<f64>, rhs: &DMatrix<f64>, ridge_epsilon: f64) -> Result<DMatrix<f64>> {
    let k = gram.nrows();
    for i in 0..k {
        gram[(i, i)] += ridge_epsilon;
    }
    let chol = Cholesky::new(gram).ok_or_else(|| {
        Error::Singular(format!("WWᵀ + εI with ε = {ridge_epsilon} is not positive definite"))
    })?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..k {
        let p = l[(i, i)];
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if k > 0 && (lo.is_nan() || lo <= PIVOT_RATIO_FLOOR * hi) {
        return Err(Error::Singular(format!(
            "pivot ratio {:.3e} with ε = {ridge_epsilon}",
            lo / hi
        )));
    }
    // A symmetric: A·Dᵀ = Bᵀ.
    let dt = chol.solve(&rhs.transpose());
    Ok(dt.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_dense() {
        let x = DMatrix::from_fn(3, 5, |i, j| (i as f64 - 1.0) * (j as f64 + 0.5));
        let w = DMatrix::from_fn(4, 5, |i, j| if (i + j) % 3 == 0 { (i + 1) as f64 * 0.5 } else { 0.0 });
        let (wwt, xwt) = code_products(&x, &w);
        let wwt_d = &w * w.transpose();
        let xwt_d = &x * w.transpose();
        assert!((wwt - wwt_d).norm() < 1e-12);
        assert!((xwt - xwt_d).norm() < 1e-12);
    }

    #[test]
    fn identity_codes_return_signals() {
        let x = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let w = DMatrix::identity(4, 4);
        let d = least_squares_dictionary(&x, &w, 0.0).unwrap();
        assert!((d - &x).norm() < 1e-12);
    }

    #[test]
    fn zero_row_without_ridge_is_singular() {
        let x = DMatrix::from_element(2, 3, 1.0);
        let mut w = DMatrix::identity(3, 3);
        w[(2, 2)] = 0.0;
        match least_squares_dictionary(&x, &w, 0.0) {
            Err(Error::Singular(msg)) => assert!(msg.contains("ε")),
            other => panic!("expected singular error, got {other:?}"),
        }
        assert!(least_squares_dictionary(&x, &w, 1e-6).is_ok());
    }

    #[test]
    fn column_mismatch() {
        let x = DMatrix::zeros(2, 3);
        let w = DMatrix::zeros(2, 4);
        assert!(least_squares_dictionary(&x, &w, 0.0).is_err());
    }
}
