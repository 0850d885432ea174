//! Thin wrappers over the dense linear algebra used across the crate.

use crate::{Error, Result};
use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::{Mat, Side};

/// Eigendecomposition of a real symmetric matrix.
///
/// Returns eigenvalues in ascending order with matching eigenvector columns.
pub fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Spectral(format!("symmetric eigensolve failed: {e:?}")))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| evd.S()[i].partial_cmp(&evd.S()[j]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| evd.S()[i]).collect();
    let vecs = Mat::from_fn(n, n, |r, c| evd.U()[(r, idx[c])]);
    Ok((vals, vecs))
}

/// Solve the generalized symmetric problem `S u = λ A u` with `A` positive
/// definite, by congruence with the Cholesky factor of `A`.
///
/// Returns eigenvalues ascending and the `u` vectors (columns), normalized so
/// that `uᵀ A u = 1`.
pub fn gen_sym_eigen(s: &Mat<f64>, a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    let llt = a
        .llt(Side::Lower)
        .map_err(|_| Error::Spectral("gram matrix not positive definite".into()))?;
    let l = llt.L().to_owned();
    // C = L^{-1} S L^{-T}
    let mut x = s.clone();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(
        l.as_ref(),
        x.as_mut(),
        faer::get_global_parallelism(),
    );
    let mut xt = x.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(
        l.as_ref(),
        xt.as_mut(),
        faer::get_global_parallelism(),
    );
    // xt is now C^T = C up to roundoff; symmetrize for the eigensolver.
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (xt[(i, j)] + xt[(j, i)]));
    let (vals, y) = sym_eigen(&c)?;
    // u = L^{-T} y
    let mut u = y;
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(
        l.transpose(),
        u.as_mut(),
        faer::get_global_parallelism(),
    );
    Ok((vals, u))
}

/// Largest generalized eigenvalue of `S u = λ A u` (`A` SPD, `S` symmetric).
pub fn gen_sym_eigen_max(s: &Mat<f64>, a: &Mat<f64>) -> Result<f64> {
    let (vals, _) = gen_sym_eigen(s, a)?;
    vals.last()
        .copied()
        .ok_or_else(|| Error::Spectral("empty pencil".into()))
}

/// Weighted least squares via SVD with rank reporting.
///
/// Returns the minimizer of ‖A x - b‖₂ together with the smallest singular
/// value. Errs when the column rank collapses below `cols`.
pub fn lstsq_svd(a: &Mat<f64>, b: &[f64], rcond: f64) -> Result<(Vec<f64>, f64)> {
    let rows = a.nrows();
    let cols = a.ncols();
    if rows < cols {
        return Err(Error::Precondition(format!(
            "least squares needs rows >= cols, got {rows} x {cols}"
        )));
    }
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Spectral(format!("svd failed: {e:?}")))?;
    let smax = svd.S()[0];
    let smin = svd.S()[cols - 1];
    if smin <= rcond * smax {
        return Err(Error::RankDeficient { sigma_min: smin });
    }
    let bm = Mat::from_fn(rows, 1, |i, _| b[i]);
    let utb = svd.U().transpose() * bm;
    let mut y = Mat::zeros(cols, 1);
    for i in 0..cols {
        y[(i, 0)] = utb[(i, 0)] / svd.S()[i];
    }
    let x = svd.V() * y;
    Ok(((0..cols).map(|i| x[(i, 0)]).collect(), smin))
}

/// Solve a small square system by full-pivot LU, erroring on singularity.
///
/// Singularity is judged from the solve residual rather than the pivot
/// spread, so badly scaled but solvable bordered systems pass.
pub fn solve_small(a: &Mat<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    let lu = a.full_piv_lu();
    let bm = Mat::from_fn(n, 1, |i, _| b[i]);
    let mut x = lu.solve(&bm);
    // two rounds of iterative refinement
    for _ in 0..2 {
        let r = &bm - a * &x;
        let dx = lu.solve(&r);
        x += dx;
    }
    let r = a * &x;
    let mut res = 0.0f64;
    let mut bscale = 0.0f64;
    let mut xscale = 0.0f64;
    let mut ascale = 0.0f64;
    for i in 0..n {
        res = res.max((r[(i, 0)] - b[i]).abs());
        bscale = bscale.max(b[i].abs());
        xscale = xscale.max(x[(i, 0)].abs());
        for j in 0..n {
            ascale = ascale.max(a[(i, j)].abs());
        }
    }
    let scale = (ascale * xscale).max(bscale).max(1e-300);
    if !res.is_finite() || res > 1e-8 * scale {
        return Err(Error::Singular(format!(
            "relative residual {:.3e} in {n}x{n} system",
            res / scale
        )));
    }
    Ok((0..n).map(|i| x[(i, 0)]).collect())
}

/// Condition number proxy for a small square system (ratio of extreme
/// LU pivots); used for diagnostics only.
pub fn pivot_condition(a: &Mat<f64>) -> f64 {
    let n = a.nrows();
    let lu = a.full_piv_lu();
    let mut umin: f64 = f64::INFINITY;
    let mut umax: f64 = 0.0;
    for i in 0..n {
        let d = lu.U()[(i, i)].abs();
        umin = umin.min(d);
        umax = umax.max(d);
    }
    umax / umin.max(1e-300)
}

/// Least squares through QR; cheaper than [`lstsq_svd`] when rank issues are
/// not a concern.
pub fn lstsq_qr(a: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let bm = Mat::from_fn(a.nrows(), 1, |i, _| b[i]);
    let x = a.qr().solve_lstsq(&bm);
    (0..a.ncols()).map(|i| x[(i, 0)]).collect()
}
