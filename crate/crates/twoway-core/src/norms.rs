//! Convergence diagnostics: the finite-rank operator norm ‖W_{L,N}‖ through
//! a generalized symmetric eigenproblem, the analytic and numeric norm of
//! the projection P for the periodic channel, power-law extrapolation of
//! ‖W_{L,N}‖² in N, the half-range norm identity, and the lower bound on
//! ‖W_L P‖ that flags divergence for small-eigenvalue problems.

use crate::operators::{Expansion, Framework, OperatorSet};
use crate::quad::Quadrature;
use crate::spectral::Spectrum;
use crate::{linalg, Error, Result};
use faer::Mat;

/// Treatment of the transcendentally small L dependence of ‖W_{L,N}‖.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LMode {
    /// drop the e^{-|λ|L} factors (the plotted convention)
    DropTranscendental,
    /// keep them for the given slab length; only lowers the estimate
    IncludeL(f64),
}

/// Power-law fit `A₀ - B₀ N^{-ν}` of the norm data.
#[derive(Debug, Clone)]
pub struct PowerLawFit {
    pub a0: f64,
    pub b0: f64,
    pub nu: f64,
    pub residual: f64,
    pub converged: bool,
}

/// Norm estimates over a range of truncation sizes.
#[derive(Debug, Clone)]
pub struct NormEstimate {
    pub n_values: Vec<usize>,
    pub norms_squared: Vec<f64>,
    pub fit: Option<PowerLawFit>,
    pub l_mode: LMode,
}

/// The S-matrix of ‖W_{L,N} u‖² = uᵀ S u on the leading n modes per sign.
///
/// W sends positive modes to the h < 0 region and negative modes to h > 0,
/// so S is block diagonal: the Q₋ Gram block on the positives and the Q₊
/// block on the negatives, with the (1 - e^{-|λ|L}) damping when requested.
fn wln_matrices(ops: &OperatorSet, n: usize, l_mode: LMode) -> Result<(Mat<f64>, Mat<f64>)> {
    let nfull = ops.n_modes;
    if n > nfull {
        return Err(Error::Precondition(format!(
            "requested N = {n} exceeds the {nfull} modes per sign available"
        )));
    }
    let idx: Vec<usize> = (0..n).chain(nfull..nfull + n).collect();
    let eps: Vec<f64> = idx
        .iter()
        .map(|&k| match l_mode {
            LMode::DropTranscendental => 1.0,
            LMode::IncludeL(_) => 1.0 - ops.ml_diag[k],
        })
        .collect();
    let a = Mat::from_fn(2 * n, 2 * n, |i, j| ops.gram_abs[(idx[i], idx[j])]);
    let s = Mat::from_fn(2 * n, 2 * n, |i, j| {
        let (pi, pj) = (i < n, j < n);
        if pi != pj {
            return 0.0;
        }
        let g = if pi {
            ops.gram_qminus[(idx[i], idx[j])]
        } else {
            ops.gram_qplus[(idx[i], idx[j])]
        };
        eps[i] * eps[j] * g
    });
    Ok((s, a))
}

/// ‖W_{L,N}‖² as the largest eigenvalue of `S u = λ A u`.
pub fn wln_norm_squared(ops: &OperatorSet, n: usize, l_mode: LMode) -> Result<f64> {
    let (s, a) = wln_matrices(ops, n, l_mode)?;
    linalg::gen_sym_eigen_max(&s, &a)
        .map_err(|_| Error::Spectral("gram matrix is not positive definite".into()))
}

/// ‖W_{L,N}‖² over nested truncations of one spectrum, with the power-law
/// fit attached when enough points are available.
pub fn wln_sweep(ops: &OperatorSet, n_values: &[usize], l_mode: LMode) -> Result<NormEstimate> {
    let mut norms_squared = Vec::with_capacity(n_values.len());
    for &n in n_values {
        norms_squared.push(wln_norm_squared(ops, n, l_mode)?);
    }
    let fit = if n_values.len() >= 5 {
        powerlaw_fit(n_values, &norms_squared).ok()
    } else {
        None
    };
    Ok(NormEstimate {
        n_values: n_values.to_vec(),
        norms_squared,
        fit,
        l_mode,
    })
}

/// Measured norm of the one-step iteration map `P_N W_{L,N}` in the natural
/// norm; the observed per-order residual contraction of the Neumann series.
pub fn pn_wln_norm(ops: &OperatorSet, grid: &Quadrature) -> Result<f64> {
    let n2 = 2 * ops.n_modes;
    let mut m = Mat::<f64>::zeros(n2, n2);
    for col in 0..n2 {
        let mut e = Expansion::zero(ops.n_modes, ops.framework);
        e.a[col] = 1.0;
        let node = ops.apply_wl(grid, &e);
        let out = match ops.framework {
            Framework::Thresholded { lambda_cut } => {
                let (_, _, _, a) = ops.expand_thresholded(grid, &node, lambda_cut)?;
                a
            }
            _ => ops.expand(grid, &node)?.a,
        };
        for row in 0..n2 {
            m[(row, col)] = out[row];
        }
    }
    // sup ‖M u‖_G / ‖u‖_G  via  Mᵀ G M u = λ G u
    let gm = &ops.gram_abs * &m;
    let s = m.transpose() * gm;
    let ssym = Mat::from_fn(n2, n2, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let val = linalg::gen_sym_eigen_max(&ssym, &ops.gram_abs)?;
    Ok(val.max(0.0).sqrt())
}

/// Least-squares fit of `y = A₀ - B₀ N^{-ν}` by profiling the linear
/// parameters over ν.
pub fn powerlaw_fit(n_values: &[usize], norms_squared: &[f64]) -> Result<PowerLawFit> {
    if n_values.len() < 5 {
        return Err(Error::Precondition(
            "power-law fit needs at least 5 data points".into(),
        ));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition(
            "power-law fit needs strictly increasing N".into(),
        ));
    }
    let xs: Vec<f64> = n_values.iter().map(|&n| n as f64).collect();
    let profile = |nu: f64| -> (f64, f64, f64) {
        // linear LSQ in (a0, b0) for fixed ν
        let mut s11 = 0.0;
        let mut s12 = 0.0;
        let mut s22 = 0.0;
        let mut r1 = 0.0;
        let mut r2 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let t = -x.powf(-nu);
            s11 += 1.0;
            s12 += t;
            s22 += t * t;
            r1 += norms_squared[i];
            r2 += t * norms_squared[i];
        }
        let det = s11 * s22 - s12 * s12;
        let a0 = (r1 * s22 - s12 * r2) / det;
        let b0 = (s11 * r2 - s12 * r1) / det;
        let mut res = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let y = a0 - b0 * x.powf(-nu);
            res += (y - norms_squared[i]).powi(2);
        }
        (a0, b0, res.sqrt())
    };
    // coarse scan then golden-section refinement, starting around ν = 1
    let mut best_nu = 1.0;
    let mut best_res = f64::INFINITY;
    let mut nu = 0.02f64;
    while nu <= 3.0 {
        let (_, _, res) = profile(nu);
        if res < best_res {
            best_res = res;
            best_nu = nu;
        }
        nu += 0.01;
    }
    let mut lo = (best_nu - 0.02).max(1e-4);
    let mut hi = best_nu + 0.02;
    let phi = 0.5 * (3.0 - 5.0f64.sqrt());
    let mut converged = false;
    for _ in 0..200 {
        let m1 = lo + phi * (hi - lo);
        let m2 = hi - phi * (hi - lo);
        if profile(m1).2 < profile(m2).2 {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo < 1e-10 {
            converged = true;
            break;
        }
    }
    let nu = 0.5 * (lo + hi);
    let (a0, b0, residual) = profile(nu);
    if !converged {
        return Err(Error::FitFailed(format!(
            "ν search stalled; best iterate A0 = {a0:.6}, B0 = {b0:.6}, ν = {nu:.6}, residual {residual:.3e}"
        )));
    }
    Ok(PowerLawFit {
        a0,
        b0,
        nu,
        residual,
        converged,
    })
}

/// Closed-form ingredients of ‖P‖ for the periodic cosine channel.
///
/// With e₁ = 1/2, e₂ = g̃_L/σ₁ spanning 𝓗₀ and f₁ = sgn(cos θ)/2,
/// f₂ = |cos θ|/σ₂ spanning 𝓗₁^⊥, the supremum is ρ = √(r₁² - 1) and
/// ‖P‖ = r₁ = (2/π)√(8/3), independent of L.
#[derive(Debug, Clone)]
pub struct PNormAnalytic {
    pub sigma1: f64,
    pub sigma2: f64,
    pub r1: f64,
    pub r2: f64,
    pub rho_sup: f64,
    pub value: f64,
}

pub fn p_norm_analytic_periodic(length: f64) -> PNormAnalytic {
    use std::f64::consts::PI;
    let sigma1 = (8.0 / 3.0 + PI * length + length * length).sqrt();
    let sigma2 = (8.0f64 / 3.0).sqrt();
    let r1 = 2.0 * sigma2 / PI;
    let r2 = 2.0 * sigma1 / (2.0 * length + PI);
    debug_assert!(r1 * r1 >= r2 * r2 - 1e-12);
    let rho_sup = (r1 * r1 - 1.0).sqrt();
    PNormAnalytic {
        sigma1,
        sigma2,
        r1,
        r2,
        rho_sup,
        value: r1,
    }
}

/// Numeric ‖P‖ for the periodic channel: maximize ‖Pv‖/‖v‖ over the span
/// {f₁, f₂, Pf₁, Pf₂}, which contains the analytic maximizer.
pub fn p_norm_numeric(ops: &OperatorSet, grid: &Quadrature) -> Result<f64> {
    let sigma2 = (8.0f64 / 3.0).sqrt();
    let f1 = grid.sample(|t| 0.5 * t.cos().signum());
    let f2 = grid.sample(|t| t.cos().abs() / sigma2);
    let pf1 = ops.apply_p(grid, &f1)?;
    let pf2 = ops.apply_p(grid, &f2)?;
    let basis = [f1, f2, pf1, pf2];
    let mut b = Mat::<f64>::zeros(4, 4);
    let mut pb = Mat::<f64>::zeros(4, 4);
    let pim: Vec<Vec<f64>> = basis
        .iter()
        .map(|v| ops.apply_p(grid, v))
        .collect::<Result<_>>()?;
    for i in 0..4 {
        for j in 0..4 {
            b[(i, j)] = grid.inner_abs_h(&basis[i], &basis[j]);
            pb[(i, j)] = grid.inner_abs_h(&pim[i], &pim[j]);
        }
    }
    let val = linalg::gen_sym_eigen_max(&pb, &b)?;
    Ok(val.max(0.0).sqrt())
}

/// Both sides of the half-range identity
/// `2‖Wu‖² = ‖u‖² - ‖u‖₁² - 2⟨P₊u, P₋u⟩` for a coefficient vector u.
pub fn identity_check(ops: &OperatorSet, coeffs: &[f64]) -> (f64, f64) {
    let n = ops.n_modes;
    assert_eq!(coeffs.len(), 2 * n);
    // ‖Wu‖²: positives land on h < 0 (Q₋ gram), negatives on h > 0
    let mut wu2 = 0.0;
    for i in 0..2 * n {
        for j in 0..2 * n {
            let (pi, pj) = (i < n, j < n);
            if pi != pj {
                continue;
            }
            let g = if pi {
                ops.gram_qminus[(i, j)]
            } else {
                ops.gram_qplus[(i, j)]
            };
            wu2 += coeffs[i] * g * coeffs[j];
        }
    }
    let lhs = 2.0 * wu2;
    let mut u2 = 0.0;
    for i in 0..2 * n {
        for j in 0..2 * n {
            u2 += coeffs[i] * ops.gram_abs[(i, j)] * coeffs[j];
        }
    }
    let u1sq: f64 = coeffs.iter().map(|&a| a * a).sum();
    let mut cross = 0.0;
    for i in 0..n {
        for j in n..2 * n {
            cross += coeffs[i] * ops.gram_abs[(i, j)] * coeffs[j];
        }
    }
    let rhs = u2 - u1sq - 2.0 * cross;
    (lhs, rhs)
}

/// Lower bound `(1 - e^{-λ_R L}) 𝒩(r)` on ‖W_L P‖ for the cos θ - r weight,
/// with
///
/// ```text
///   𝒩(r)² = ∫_{cos θ < r} v_R² |cos θ - r| dθ / ∫ (v_R - 1)² |cos θ - r| dθ
/// ```
///
/// and v_R normalized to unit mean. Values above 1 flag divergence of the
/// plain formal solution.
pub fn wlp_lower_bound(spectrum: &Spectrum, grid: &Quadrature, length: f64) -> Result<f64> {
    let lam_r = spectrum.lambda(1);
    if lam_r <= 0.0 {
        return Err(Error::Precondition("λ_R must be positive".into()));
    }
    let v = &spectrum.pos[0].samples;
    let mean = grid.integrate(v) / grid.integrate(&vec![1.0; grid.len()]);
    if mean.abs() < 1e-12 {
        return Err(Error::Precondition("v_R has no mean component".into()));
    }
    let vhat: Vec<f64> = v.iter().map(|&x| x / mean).collect();
    let mut num = 0.0;
    for &i in &grid.neg_idx {
        num += grid.weights[i] * vhat[i] * vhat[i] * grid.h[i].abs();
    }
    let dev: Vec<f64> = vhat.iter().map(|&x| x - 1.0).collect();
    let den = grid.inner_abs_h(&dev, &dev);
    let nfac = (num / den).sqrt();
    Ok((1.0 - (-lam_r * length).exp()) * nfac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::OperatorSet;
    use crate::quad::{build_grid, ProblemSpec};
    use crate::spectral::solve_spectrum;
    use approx::assert_relative_eq;

    fn channel_ops(n: usize) -> (Quadrature, Spectrum, OperatorSet) {
        let spec = ProblemSpec::periodic_cos(1.0, 1.0, 2.0);
        let grid = build_grid(&spec, 1024).unwrap();
        let spectrum = solve_spectrum(&spec, &grid, n).unwrap();
        let ops = OperatorSet::assemble(&spec, &grid, &spectrum, Framework::Extended).unwrap();
        (grid, spectrum, ops)
    }

    #[test]
    fn single_pair_norm_matches_dense_oracle() {
        // N = 1: the generalized problem is 2x2 and solvable by hand from
        // quadrature-built matrices
        let (grid, spectrum, ops) = channel_ops(2);
        let v1 = &spectrum.pos[0].samples;
        let vm1 = &spectrum.neg[0].samples;
        let a11 = grid.inner_abs_h(v1, v1);
        let a12 = grid.inner_abs_h(v1, vm1);
        let a22 = grid.inner_abs_h(vm1, vm1);
        let s11 = grid.inner_abs_h_neg(v1, v1);
        let s22 = grid.inner_abs_h_pos(vm1, vm1);
        // det(S - λ A) = 0 with S = diag(s11, s22)
        let aq = a11 * a22 - a12 * a12;
        let bq = -(s11 * a22 + s22 * a11);
        let cq = s11 * s22;
        let lam = (-bq + (bq * bq - 4.0 * aq * cq).sqrt()) / (2.0 * aq);
        let norm2 = wln_norm_squared(&ops, 1, LMode::DropTranscendental).unwrap();
        assert_relative_eq!(norm2, lam, epsilon = 1e-10);
    }

    #[test]
    fn norm_monotone_in_n_and_l_mode_orders() {
        let (_, _, ops) = channel_ops(24);
        let mut prev = 0.0;
        for n in [2usize, 4, 8, 16, 24] {
            let v = wln_norm_squared(&ops, n, LMode::DropTranscendental).unwrap();
            assert!(v >= prev, "norm not monotone at N = {n}");
            prev = v;
            let with_l = wln_norm_squared(&ops, n, LMode::IncludeL(1.0)).unwrap();
            assert!(with_l <= v + 1e-12, "L inclusion must not raise the norm");
        }
        assert!(prev < 0.884, "channel ‖W‖² should stay below the asymptote");
    }

    #[test]
    fn step_norm_exceeds_cubic_norm() {
        let spec_s = ProblemSpec::step(1.0);
        let grid_s = build_grid(&spec_s, 512).unwrap();
        let sp_s = solve_spectrum(&spec_s, &grid_s, 8).unwrap();
        let ops_s = OperatorSet::assemble(&spec_s, &grid_s, &sp_s, Framework::Simple).unwrap();
        let spec_c = ProblemSpec::cubic(1.0);
        let grid_c = build_grid(&spec_c, 512).unwrap();
        let sp_c = solve_spectrum(&spec_c, &grid_c, 8).unwrap();
        let ops_c = OperatorSet::assemble(&spec_c, &grid_c, &sp_c, Framework::Simple).unwrap();
        let ns = wln_norm_squared(&ops_s, 8, LMode::DropTranscendental).unwrap();
        let nc = wln_norm_squared(&ops_c, 8, LMode::DropTranscendental).unwrap();
        assert!(ns > nc, "step {ns} should exceed cubic {nc}");
    }

    #[test]
    fn powerlaw_exact_model_roundtrip() {
        let n_values = [25usize, 50, 100, 200, 400];
        let data: Vec<f64> = n_values
            .iter()
            .map(|&n| 2.0 - 3.0 * (n as f64).powf(-0.5))
            .collect();
        let fit = powerlaw_fit(&n_values, &data).unwrap();
        assert_relative_eq!(fit.a0, 2.0, epsilon = 1e-6);
        assert_relative_eq!(fit.b0, 3.0, epsilon = 1e-6);
        assert_relative_eq!(fit.nu, 0.5, epsilon = 1e-6);
        assert!(fit.residual < 1e-8);
        // contract checks
        assert!(powerlaw_fit(&n_values[..4], &data[..4]).is_err());
        assert!(powerlaw_fit(&[25, 25, 50, 100, 200], &data).is_err());
    }

    #[test]
    fn p_norm_analytic_value() {
        use std::f64::consts::PI;
        for length in [0.3, 1.0, 12.0] {
            let pa = p_norm_analytic_periodic(length);
            assert_relative_eq!(pa.value, 4.0 * 6.0f64.sqrt() / (3.0 * PI), epsilon = 1e-14);
            assert_relative_eq!(pa.value, 1.0395, epsilon = 1e-4);
            assert_relative_eq!(pa.r1, 2.0 / PI * (8.0f64 / 3.0).sqrt(), epsilon = 1e-14);
            assert!(pa.r1 * pa.r1 > pa.r2 * pa.r2);
            assert_relative_eq!(pa.rho_sup, (pa.r1 * pa.r1 - 1.0).sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn p_norm_numeric_matches_analytic() {
        let (grid, _, ops) = channel_ops(8);
        let numeric = p_norm_numeric(&ops, &grid).unwrap();
        assert_relative_eq!(numeric, 1.0395, epsilon = 1e-3);
    }

    #[test]
    fn identity_single_mode_and_positive_only() {
        let (_, _, ops) = channel_ops(8);
        // u = v_1: ‖u‖₁² = 1 and the identity holds
        let mut u = vec![0.0; 16];
        u[0] = 1.0;
        let (lhs, rhs) = identity_check(&ops, &u);
        assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
        // positive-only u: ⟨P₊u, P₋u⟩ = 0 so 2‖Wu‖² = ‖u‖² - ‖u‖₁²
        let mut up = vec![0.0; 16];
        up[0] = 0.7;
        up[2] = -0.4;
        let (lhs_p, rhs_p) = identity_check(&ops, &up);
        assert_relative_eq!(lhs_p, rhs_p, epsilon = 1e-10);
        let u2: f64 = {
            let mut q = 0.0;
            for i in 0..16 {
                for j in 0..16 {
                    q += up[i] * ops.gram_abs[(i, j)] * up[j];
                }
            }
            q
        };
        let u1: f64 = up.iter().map(|&a| a * a).sum();
        assert_relative_eq!(lhs_p, u2 - u1, epsilon = 1e-10);
    }

    #[test]
    fn identity_on_seeded_random_vectors() {
        let (_, _, ops) = channel_ops(16);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rnd = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let u: Vec<f64> = (0..32).map(|_| rnd()).collect();
            let (lhs, rhs) = identity_check(&ops, &u);
            let u2: f64 = u.iter().map(|&a| a * a).sum();
            worst = worst.max((lhs - rhs).abs() / u2);
        }
        assert!(worst < 1e-8, "identity discrepancy {worst}");
    }

    #[test]
    fn lower_bound_convergent_regime() {
        let r = 0.5;
        let spec = ProblemSpec::periodic_cos_r(r, 1.0, 1.0, 2.0);
        let grid = build_grid(&spec, 1024).unwrap();
        let spectrum = solve_spectrum(&spec, &grid, 6).unwrap();
        let bound = wlp_lower_bound(&spectrum, &grid, 1.0).unwrap();
        assert!(bound < 1.0, "bound {bound} should be below 1 at r = 0.5");
    }

    #[test]
    fn lower_bound_flags_divergence_for_small_r() {
        let r = 0.02;
        let spec = ProblemSpec::periodic_cos_r(r, 20.0, 1.0, 2.0);
        let grid = build_grid(&spec, 1024).unwrap();
        let spectrum = solve_spectrum(&spec, &grid, 6).unwrap();
        let bound = wlp_lower_bound(&spectrum, &grid, 20.0).unwrap();
        assert!(bound > 1.0, "bound {bound} should exceed 1 at r = 0.02, L = 20");
    }

    #[test]
    fn pn_wln_tracks_effective_contraction() {
        let (grid, _, ops) = channel_ops(16);
        let v = pn_wln_norm(&ops, &grid).unwrap();
        assert!(v > 0.3 && v < 1.0, "‖P_N W_{{L,N}}‖ = {v}");
    }
}
