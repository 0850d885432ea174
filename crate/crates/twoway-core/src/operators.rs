//! Expansions over {1, g_L, v_j} and finite-rank realizations of the
//! half-range operators.
//!
//! The boundary-trace decomposition of a solution is
//!
//! ```text
//!   w = c·1 + d·g_L + (V + W M_L) v,       v = Σ a_j v_j,
//! ```
//!
//! with `V = Q₊P₊ + Q₋P₋`, `W = Q₊P₋ + Q₋P₊`, `M_L v_j = e^{-|λ_j|L} v_j`
//! and `W_L = W - W M_L`. Everything here is realized two ways at once: as
//! node-space application on the quadrature grid, and as matrices over the
//! truncated coefficient space through the Gram blocks
//! `⟨v_i, v_j⟩` restricted to the h > 0 / h < 0 regions.
//!
//! All values are immutable after assembly and the application routines are
//! pure, so an `OperatorSet` can be shared freely across threads.

use crate::quad::{Quadrature, WeightKind};
use crate::spectral::{fourier::TrigProducts, sem, ModeBasis, Spectrum};
use crate::{linalg, Error, ProblemSpec, Result};
use faer::Mat;

/// Which decomposition the problem runs under.
///
/// `Extended` covers every configuration with the constant zero mode; the
/// secular companion g_L participates only when ∫h = 0 admits it (the
/// cos θ - r weight keeps the zero mode but loses g).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Framework {
    /// no zero mode: pure eigenmode expansion, c = d = 0
    Simple,
    /// zero mode present: c (and d when g exists) solved from moment
    /// conditions
    Extended,
    /// small-|λ| modes handled in the direct block together with {1, g_L}
    Thresholded { lambda_cut: f64 },
}

/// Coefficients of a function against {1, g_L, v_j}.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub c: f64,
    pub d: f64,
    /// flat order: positives ascending, then negatives by magnitude
    pub a: Vec<f64>,
    pub framework: Framework,
}

impl Expansion {
    pub fn zero(n_modes: usize, framework: Framework) -> Self {
        Expansion {
            c: 0.0,
            d: 0.0,
            a: vec![0.0; 2 * n_modes],
            framework,
        }
    }
}

/// Finite-N realizations of Q±, M_L, W_L, V, W, P and P_Λ.
pub struct OperatorSet {
    pub n_modes: usize,
    pub length: f64,
    pub framework: Framework,
    /// full ⟨v_i, v_j⟩ with |h| weight, (2N)×(2N), SPD
    pub gram_abs: Mat<f64>,
    /// ⟨Q₊ v_i, v_j⟩ = ∫_{h>0} v_i v_j |h|
    pub gram_qplus: Mat<f64>,
    /// ⟨Q₋ v_i, v_j⟩ = ∫_{h<0} v_i v_j |h|
    pub gram_qminus: Mat<f64>,
    /// e^{-|λ_j| L} in flat order
    pub ml_diag: Vec<f64>,
    /// g_L node samples (g on h > 0, L + g on h < 0) when g exists
    pub g_l: Option<Vec<f64>>,
    /// condition estimate of the (c, d) moment system
    pub h0_condition: f64,
    lambdas: Vec<f64>,
    /// nodes × 2N mode samples
    samples: Mat<f64>,
    /// moment rows sgn(λ_j)(w ⊙ h ⊙ v_j)
    duals: Vec<Vec<f64>>,
    /// moment matrix of the {1, g_L} block (empty in the simple framework)
    h0_mat: Mat<f64>,
    /// test rows of the h0 block: w⊙h and w⊙h⊙g
    h0_tests: Vec<Vec<f64>>,
    g_samples: Option<Vec<f64>>,
}

impl OperatorSet {
    /// Build the Gram blocks and moment machinery for a solved spectrum.
    pub fn assemble(
        spec: &ProblemSpec,
        grid: &Quadrature,
        spectrum: &Spectrum,
        framework: Framework,
    ) -> Result<Self> {
        let n = spectrum.n_per_sign();
        let nn = grid.len();
        let modes = spectrum.all_modes();
        if let Framework::Thresholded { lambda_cut } = framework {
            if lambda_cut <= 0.0 {
                return Err(Error::Precondition("threshold Λ must be positive".into()));
            }
            if modes.iter().all(|m| m.lambda.abs() < lambda_cut) {
                return Err(Error::Precondition(
                    "Λ exceeds every |λ_j|; thresholded projection is degenerate".into(),
                ));
            }
        }
        if matches!(framework, Framework::Extended | Framework::Thresholded { .. })
            && !spectrum.has_zero_mode
        {
            return Err(Error::Precondition(
                "extended framework requires the constant zero mode".into(),
            ));
        }

        let (gram_qplus, gram_qminus) = gram_blocks(spec, grid, spectrum)?;
        let gram_abs = &gram_qplus + &gram_qminus;

        let lambdas: Vec<f64> = modes.iter().map(|m| m.lambda).collect();
        let ml_diag: Vec<f64> = lambdas
            .iter()
            .map(|&l| (-l.abs() * spec.length).exp())
            .collect();

        let mut samples = Mat::<f64>::zeros(nn, 2 * n);
        for (k, m) in modes.iter().enumerate() {
            for i in 0..nn {
                samples[(i, k)] = m.samples[i];
            }
        }
        let duals: Vec<Vec<f64>> = modes
            .iter()
            .map(|m| {
                let s = m.lambda.signum();
                (0..nn)
                    .map(|i| s * grid.weights[i] * grid.h[i] * m.samples[i])
                    .collect()
            })
            .collect();

        let g_samples = spectrum.g.as_ref().map(|g| g.samples.clone());
        let g_l = g_samples.as_ref().map(|g| {
            (0..nn)
                .map(|i| {
                    if grid.h[i] > 0.0 {
                        g[i]
                    } else {
                        spec.length + g[i]
                    }
                })
                .collect::<Vec<f64>>()
        });

        // h0 moment block: tests {w h, w h g}, basis {1, g_L}
        let (h0_mat, h0_tests, h0_condition) = match framework {
            Framework::Simple => (Mat::zeros(0, 0), vec![], 1.0),
            _ => {
                let one = vec![1.0; nn];
                let mut tests: Vec<Vec<f64>> =
                    vec![(0..nn).map(|i| grid.weights[i] * grid.h[i]).collect()];
                let mut basis: Vec<&[f64]> = vec![&one];
                if let (Some(gs), Some(gl)) = (&g_samples, &g_l) {
                    tests.push(
                        (0..nn)
                            .map(|i| grid.weights[i] * grid.h[i] * gs[i])
                            .collect(),
                    );
                    basis.push(gl);
                }
                let k = basis.len();
                let mat = Mat::from_fn(k, k, |ti, bi| {
                    tests[ti]
                        .iter()
                        .zip(basis[bi])
                        .map(|(&t, &b)| t * b)
                        .sum::<f64>()
                });
                let cond = linalg::pivot_condition(&mat);
                (mat, tests, cond)
            }
        };

        Ok(OperatorSet {
            n_modes: n,
            length: spec.length,
            framework,
            gram_abs,
            gram_qplus,
            gram_qminus,
            ml_diag,
            g_l,
            h0_condition,
            lambdas,
            samples,
            duals,
            h0_mat,
            h0_tests,
            g_samples,
        })
    }

    pub fn lambda_flat(&self, k: usize) -> f64 {
        self.lambdas[k]
    }

    pub fn g_samples(&self) -> Option<&[f64]> {
        self.g_samples.as_deref()
    }

    /// Sample of mode k (flat order) at node i.
    pub fn mode_sample(&self, k: usize, i: usize) -> f64 {
        self.samples[(i, k)]
    }

    /// Node samples of v̄_j: the mode damped by e^{-|λ_j|L} on the nodes
    /// where sgn(λ_j) h < 0.
    pub fn vbar_samples(&self, grid: &Quadrature, flat: usize) -> Vec<f64> {
        let lam = self.lambdas[flat];
        let damp = self.ml_diag[flat];
        (0..grid.len())
            .map(|i| {
                let v = self.samples[(i, flat)];
                if lam.signum() * grid.h[i] > 0.0 {
                    v
                } else {
                    damp * v
                }
            })
            .collect()
    }

    /// Solve the {1, g_L} moment block for a node function.
    fn solve_h0(&self, w: &[f64]) -> Result<(f64, f64)> {
        if matches!(self.framework, Framework::Simple) {
            return Ok((0.0, 0.0));
        }
        let k = self.h0_tests.len();
        let rhs: Vec<f64> = self
            .h0_tests
            .iter()
            .map(|t| t.iter().zip(w).map(|(&a, &b)| a * b).sum())
            .collect();
        let sol = linalg::solve_small(&self.h0_mat, &rhs).map_err(|e| {
            Error::Singular(format!(
                "degenerate (c, d) moment system (condition {:.3e}): {e}",
                self.h0_condition
            ))
        })?;
        Ok((sol[0], if k > 1 { sol[1] } else { 0.0 }))
    }

    /// Moment expansion of node samples against {1, g_L, v_j}.
    ///
    /// In the simple framework c = d = 0 and the a_j are plain biorthogonal
    /// moments; otherwise (c, d) solve the zero-mode moment conditions first
    /// and the a_j are moments of the remainder.
    pub fn expand(&self, grid: &Quadrature, w: &[f64]) -> Result<Expansion> {
        assert_eq!(w.len(), grid.len());
        let (c, d) = self.solve_h0(w)?;
        let remainder: Vec<f64> = match &self.g_l {
            Some(gl) => (0..w.len()).map(|i| w[i] - c - d * gl[i]).collect(),
            None => w.iter().map(|&v| v - c).collect(),
        };
        let a: Vec<f64> = self
            .duals
            .iter()
            .map(|dual| dual.iter().zip(&remainder).map(|(&t, &f)| t * f).sum())
            .collect();
        Ok(Expansion {
            c,
            d,
            a,
            framework: self.framework,
        })
    }

    /// Node-space application of `W_L = W(I - M_L)`:
    /// on h > 0 the damped negative modes, on h < 0 the damped positives.
    pub fn apply_wl(&self, grid: &Quadrature, e: &Expansion) -> Vec<f64> {
        let nn = grid.len();
        let n = self.n_modes;
        let mut out = vec![0.0; nn];
        for (k, &ak) in e.a.iter().enumerate() {
            if ak == 0.0 {
                continue;
            }
            let eps = 1.0 - self.ml_diag[k];
            let coef = ak * eps;
            let on_pos = k >= n; // negative modes land on h > 0
            let idx = if on_pos { &grid.pos_idx } else { &grid.neg_idx };
            for &i in idx {
                out[i] += coef * self.samples[(i, k)];
            }
        }
        out
    }

    /// The projection P onto 𝓗₁ that vanishes on 𝓗₀ = span{1, g_L}:
    /// subtract the zero-mode block resolved by the moment conditions.
    pub fn apply_p(&self, grid: &Quadrature, w: &[f64]) -> Result<Vec<f64>> {
        if matches!(self.framework, Framework::Simple) {
            return Err(Error::Precondition(
                "P is defined in the extended framework".into(),
            ));
        }
        let _ = grid;
        let (c, d) = self.solve_h0(w)?;
        Ok(match &self.g_l {
            Some(gl) => (0..w.len()).map(|i| w[i] - c - d * gl[i]).collect(),
            None => w.iter().map(|&v| v - c).collect(),
        })
    }

    /// The thresholded projection P_Λ: kills span{1, g_L, v_j : |λ_j| < Λ}
    /// by expand-then-subtract.
    pub fn apply_p_lambda(
        &self,
        grid: &Quadrature,
        w: &[f64],
        lambda_cut: f64,
    ) -> Result<Vec<f64>> {
        if lambda_cut <= 0.0 {
            return Err(Error::Precondition("threshold Λ must be positive".into()));
        }
        if self.lambdas.iter().all(|&l| l.abs() < lambda_cut) {
            return Err(Error::Precondition(
                "Λ exceeds every |λ_j|; thresholded projection is degenerate".into(),
            ));
        }
        let e = self.expand(grid, w)?;
        let mut out = self.apply_p(grid, w)?;
        for (k, &ak) in e.a.iter().enumerate() {
            if self.lambdas[k].abs() < lambda_cut && ak != 0.0 {
                for i in 0..out.len() {
                    out[i] -= ak * self.samples[(i, k)];
                }
            }
        }
        Ok(out)
    }

    /// Matrices of V and W on the span of the 2N retained modes (pure
    /// biorthogonal moments, the P_N-restricted action).
    pub fn assemble_vw(&self, grid: &Quadrature) -> (Mat<f64>, Mat<f64>) {
        let n2 = 2 * self.n_modes;
        let nn = grid.len();
        let mut v = Mat::<f64>::zeros(n2, n2);
        let mut w = Mat::<f64>::zeros(n2, n2);
        for col in 0..n2 {
            let lam = self.lambdas[col];
            // V v_col keeps the mode on its own side, W sends it across
            let own_pos = lam > 0.0;
            let mut masked_own = vec![0.0; nn];
            let mut masked_other = vec![0.0; nn];
            for i in 0..nn {
                let val = self.samples[(i, col)];
                if (grid.h[i] > 0.0) == own_pos {
                    masked_own[i] = val;
                } else {
                    masked_other[i] = val;
                }
            }
            for row in 0..n2 {
                v[(row, col)] = self.duals[row]
                    .iter()
                    .zip(&masked_own)
                    .map(|(&t, &f)| t * f)
                    .sum();
                w[(row, col)] = self.duals[row]
                    .iter()
                    .zip(&masked_other)
                    .map(|(&t, &f)| t * f)
                    .sum();
            }
        }
        (v, w)
    }

    /// ⟨,⟩₁ norm of an expansion: with orthonormal v_j this is the plain
    /// coefficient norm.
    pub fn norm_one(&self, e: &Expansion) -> f64 {
        e.a.iter().map(|&a| a * a).sum::<f64>().sqrt()
    }

    /// |h|-weighted norm of the mode part of an expansion, through the Gram
    /// matrix.
    pub fn norm_abs(&self, e: &Expansion) -> f64 {
        let n2 = 2 * self.n_modes;
        let mut q = 0.0;
        for i in 0..n2 {
            if e.a[i] == 0.0 {
                continue;
            }
            for j in 0..n2 {
                q += e.a[i] * self.gram_abs[(i, j)] * e.a[j];
            }
        }
        q.max(0.0).sqrt()
    }

    /// Synthesize node samples of the mode part Σ a_j v_j.
    pub fn synthesize(&self, e: &Expansion) -> Vec<f64> {
        let nn = self.samples.nrows();
        let mut out = vec![0.0; nn];
        for (k, &ak) in e.a.iter().enumerate() {
            if ak == 0.0 {
                continue;
            }
            for i in 0..nn {
                out[i] += ak * self.samples[(i, k)];
            }
        }
        out
    }

    /// Direct-block expansion for the thresholded scheme: write
    ///
    /// ```text
    ///   F = c + d g_L + Σ_{|λ_j|<Λ} s_j v̄_j + (remainder ∈ span{v_j, |λ_j| ≥ Λ})
    /// ```
    ///
    /// by imposing the h-, gh- and small-mode moment conditions on the
    /// remainder. Returns (c, d, small coefficients by flat index, remainder
    /// moments of the large modes).
    pub fn expand_thresholded(
        &self,
        grid: &Quadrature,
        f: &[f64],
        lambda_cut: f64,
    ) -> Result<(f64, f64, Vec<(usize, f64)>, Vec<f64>)> {
        let nn = grid.len();
        let small: Vec<usize> = (0..self.lambdas.len())
            .filter(|&k| self.lambdas[k].abs() < lambda_cut)
            .collect();
        // basis columns: 1, [g_L], v̄_small; test rows: wh, [whg], wh v_small
        let one = vec![1.0; nn];
        let mut basis: Vec<Vec<f64>> = vec![one];
        if let Some(gl) = &self.g_l {
            basis.push(gl.clone());
        }
        for &k in &small {
            basis.push(self.vbar_samples(grid, k));
        }
        let mut tests: Vec<Vec<f64>> = self.h0_tests.clone();
        for &k in &small {
            tests.push(self.duals[k].clone());
        }
        let kdim = basis.len();
        let mat = Mat::from_fn(kdim, kdim, |ti, bi| {
            tests[ti]
                .iter()
                .zip(&basis[bi])
                .map(|(&t, &b)| t * b)
                .sum::<f64>()
        });
        let rhs: Vec<f64> = tests
            .iter()
            .map(|t| t.iter().zip(f).map(|(&a, &b)| a * b).sum())
            .collect();
        let sol = linalg::solve_small(&mat, &rhs)?;
        let has_g = self.g_l.is_some();
        let c = sol[0];
        let d = if has_g { sol[1] } else { 0.0 };
        let offset = 1 + has_g as usize;
        let small_coeffs: Vec<(usize, f64)> = small
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, sol[offset + i]))
            .collect();
        // remainder moments for the large modes
        let mut remainder = f.to_vec();
        for i in 0..nn {
            remainder[i] -= c;
            if let Some(gl) = &self.g_l {
                remainder[i] -= d * gl[i];
            }
        }
        for (bi, &(_, s)) in small_coeffs.iter().enumerate() {
            let col = &basis[offset + bi];
            for i in 0..nn {
                remainder[i] -= s * col[i];
            }
        }
        let a: Vec<f64> = self
            .duals
            .iter()
            .enumerate()
            .map(|(k, dual)| {
                if self.lambdas[k].abs() < lambda_cut {
                    0.0
                } else {
                    dual.iter().zip(&remainder).map(|(&t, &f)| t * f).sum()
                }
            })
            .collect();
        Ok((c, d, small_coeffs, a))
    }
}

/// Gram blocks (∫_{h>0} v_i v_j |h|, ∫_{h<0} v_i v_j |h|), exact where the
/// basis admits it.
fn gram_blocks(
    spec: &ProblemSpec,
    grid: &Quadrature,
    spectrum: &Spectrum,
) -> Result<(Mat<f64>, Mat<f64>)> {
    let modes = spectrum.all_modes();
    let n2 = modes.len();
    let all_trig = modes
        .iter()
        .all(|m| matches!(m.basis, ModeBasis::Trig { .. }));
    let all_panel = modes
        .iter()
        .all(|m| matches!(m.basis, ModeBasis::Panels(_)));

    if all_trig {
        let (t_break, r) = match spec.weight {
            WeightKind::Cos => (std::f64::consts::FRAC_PI_2, 0.0),
            WeightKind::CosMinusR { r } => (r.acos(), r),
            _ => unreachable!("trig modes only arise for the cosine family"),
        };
        let mm = modes
            .iter()
            .map(|m| match &m.basis {
                ModeBasis::Trig { coeffs, .. } => coeffs.len() - 1,
                _ => 0,
            })
            .max()
            .unwrap();
        let tp = TrigProducts::new(t_break, 2 * mm + 2);
        let mut gp = Mat::<f64>::zeros(n2, n2);
        let mut gm = Mat::<f64>::zeros(n2, n2);
        for cc in [true, false] {
            let idx: Vec<usize> = (0..n2)
                .filter(|&k| match &modes[k].basis {
                    ModeBasis::Trig { is_cos, .. } => *is_cos == cc,
                    _ => false,
                })
                .collect();
            if idx.is_empty() {
                continue;
            }
            let cmat = Mat::from_fn(mm + 1, idx.len(), |m, kk| match &modes[idx[kk]].basis {
                ModeBasis::Trig { coeffs, .. } => coeffs.get(m).copied().unwrap_or(0.0),
                _ => 0.0,
            });
            // |h| = (cos - r) inside the break, -(cos - r) outside
            let t_in = tp.t_matrix(mm, cc, true, 1.0, -r);
            let t_out = tp.t_matrix(mm, cc, false, -1.0, r);
            let bp = cmat.transpose() * t_in * &cmat;
            let bm = cmat.transpose() * t_out * &cmat;
            for (ii, &gi) in idx.iter().enumerate() {
                for (jj, &gj) in idx.iter().enumerate() {
                    gp[(gi, gj)] = bp[(ii, jj)];
                    gm[(gi, gj)] = bm[(ii, jj)];
                }
            }
        }
        return Ok((gp, gm));
    }

    if all_panel
        && matches!(
            spec.weight,
            WeightKind::Sgn | WeightKind::Linear | WeightKind::Cubic
        )
    {
        let gp = sem::panel_gram(&modes, &modes, spec, sem::GramRegion::PosAbs)?;
        let gm = sem::panel_gram(&modes, &modes, spec, sem::GramRegion::NegAbs)?;
        return Ok((gp, gm));
    }

    // generic quadrature fallback
    let mut gp = Mat::<f64>::zeros(n2, n2);
    let mut gm = Mat::<f64>::zeros(n2, n2);
    for i in 0..n2 {
        for j in i..n2 {
            let vp = grid.inner_abs_h_pos(&modes[i].samples, &modes[j].samples);
            let vm = grid.inner_abs_h_neg(&modes[i].samples, &modes[j].samples);
            gp[(i, j)] = vp;
            gp[(j, i)] = vp;
            gm[(i, j)] = vm;
            gm[(j, i)] = vm;
        }
    }
    Ok((gp, gm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::build_grid;
    use crate::spectral::solve_spectrum;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn setup(n: usize) -> (ProblemSpec, Quadrature, Spectrum, OperatorSet) {
        let spec = ProblemSpec::periodic_cos(1.0, 1.0, 2.0);
        let grid = build_grid(&spec, 1024).unwrap();
        let spectrum = solve_spectrum(&spec, &grid, n).unwrap();
        let ops = OperatorSet::assemble(&spec, &grid, &spectrum, Framework::Extended).unwrap();
        (spec, grid, spectrum, ops)
    }

    #[test]
    fn gram_blocks_match_quadrature_and_biorthogonality() {
        let (_, grid, spectrum, ops) = setup(6);
        let modes = spectrum.all_modes();
        for i in 0..modes.len() {
            for j in 0..modes.len() {
                assert_relative_eq!(
                    ops.gram_qplus[(i, j)],
                    grid.inner_abs_h_pos(&modes[i].samples, &modes[j].samples),
                    epsilon = 1e-10
                );
                assert_relative_eq!(
                    ops.gram_qminus[(i, j)],
                    grid.inner_abs_h_neg(&modes[i].samples, &modes[j].samples),
                    epsilon = 1e-10
                );
            }
        }
        // ⟨,⟩₁ orthonormality through the sign-corrected Gram difference
        for i in 0..modes.len() {
            for j in 0..modes.len() {
                let signed = ops.gram_qplus[(i, j)] - ops.gram_qminus[(i, j)];
                let want = if i == j {
                    modes[i].lambda.signum()
                } else {
                    0.0
                };
                assert!(
                    (signed - want).abs() < 1e-6,
                    "⟨,⟩₁ orthonormality violated at ({i},{j}): {signed}"
                );
            }
        }
    }

    #[test]
    fn constant_data_lies_in_h0() {
        let (_, grid, _, ops) = setup(6);
        let w = vec![0.7; grid.len()];
        let e = ops.expand(&grid, &w).unwrap();
        assert_relative_eq!(e.c, 0.7, epsilon = 1e-10);
        assert_relative_eq!(e.d, 0.0, epsilon = 1e-12);
        for &a in &e.a {
            assert!(a.abs() < 1e-10);
        }
    }

    #[test]
    fn reservoir_data_matches_closed_form_c0_d0() {
        let (spec, grid, _, ops) = setup(8);
        let w = grid.boundary_samples(&spec);
        let e = ops.expand(&grid, &w).unwrap();
        let length = 1.0;
        let drho = 1.0;
        assert_relative_eq!(
            e.c,
            1.5 - length / (2.0 * length + PI) * drho,
            epsilon = 1e-10
        );
        assert_relative_eq!(e.d, 2.0 / (2.0 * length + PI) * drho, epsilon = 1e-10);
    }

    #[test]
    fn expansion_reconstruction_improves_with_n() {
        // ‖w - c - d g_L - Σ a_j v_j‖ against the plain mode basis decreases
        // as the span grows
        let spec = ProblemSpec::periodic_cos(1.0, 1.0, 2.0);
        let grid = build_grid(&spec, 1024).unwrap();
        let w = grid.boundary_samples(&spec);
        let mut errs = vec![];
        for n in [4usize, 8, 16] {
            let spectrum = solve_spectrum(&spec, &grid, n).unwrap();
            let ops =
                OperatorSet::assemble(&spec, &grid, &spectrum, Framework::Extended).unwrap();
            let e = ops.expand(&grid, &w).unwrap();
            let recon = ops.synthesize(&e);
            let gl = ops.g_l.as_ref().unwrap();
            let diff: Vec<f64> = (0..grid.len())
                .map(|i| w[i] - e.c - e.d * gl[i] - recon[i])
                .collect();
            errs.push(grid.norm_abs_h(&diff));
        }
        assert!(
            errs[2] < errs[1] && errs[1] < errs[0],
            "not decreasing: {errs:?}"
        );
    }

    #[test]
    fn wl_of_zero_expansion_vanishes() {
        let (_, grid, _, ops) = setup(6);
        let e = Expansion::zero(6, Framework::Extended);
        let out = ops.apply_wl(&grid, &e);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wl_large_length_limit() {
        // L → ∞: on h > 0 the output is exactly Σ_{λ<0} a_j v_j
        let spec = ProblemSpec::periodic_cos(60.0, 1.0, 2.0);
        let grid = build_grid(&spec, 1024).unwrap();
        let spectrum = solve_spectrum(&spec, &grid, 6).unwrap();
        let ops = OperatorSet::assemble(&spec, &grid, &spectrum, Framework::Extended).unwrap();
        let mut e = Expansion::zero(6, Framework::Extended);
        e.a[6] = 0.8; // first negative mode
        e.a[7] = -0.3;
        let out = ops.apply_wl(&grid, &e);
        for &i in &grid.pos_idx {
            let want = 0.8 * spectrum.neg[0].samples[i] - 0.3 * spectrum.neg[1].samples[i];
            assert_relative_eq!(out[i], want, epsilon = 1e-12);
        }
        for &i in &grid.neg_idx {
            assert_eq!(out[i], 0.0);
        }
    }

    #[test]
    fn wl_single_mode_norm_cross_check() {
        // |h|-norm of W_L on a single negative mode equals
        // (1 - e^{λ_{-1} L}) ‖v_{-1}‖ restricted to h > 0, two routes
        let (_, grid, spectrum, ops) = setup(6);
        let mut e = Expansion::zero(6, Framework::Extended);
        let k = 6; // λ_{-1}
        e.a[k] = 1.0;
        let out = ops.apply_wl(&grid, &e);
        let direct = grid.norm_abs_h(&out);
        let eps = 1.0 - ops.ml_diag[k];
        let restricted = grid
            .inner_abs_h_pos(&spectrum.neg[0].samples, &spectrum.neg[0].samples)
            .sqrt();
        assert_relative_eq!(direct, eps * restricted, epsilon = 1e-10);
    }

    #[test]
    fn projection_kills_h0_and_fixes_modes() {
        let (_, grid, spectrum, ops) = setup(6);
        let one = vec![1.0; grid.len()];
        let p_one = ops.apply_p(&grid, &one).unwrap();
        assert!(grid.norm_abs_h(&p_one) < 1e-10);
        let gl = ops.g_l.clone().unwrap();
        let p_gl = ops.apply_p(&grid, &gl).unwrap();
        assert!(grid.norm_abs_h(&p_gl) < 1e-10);
        let v1 = spectrum.pos[0].samples.clone();
        let p_v1 = ops.apply_p(&grid, &v1).unwrap();
        for i in 0..grid.len() {
            assert!((p_v1[i] - v1[i]).abs() < 1e-8);
        }
        // idempotence
        let w = grid.sample(|t| 0.3 + t.cos() - 0.2 * (2.0 * t).cos());
        let pw = ops.apply_p(&grid, &w).unwrap();
        let ppw = ops.apply_p(&grid, &pw).unwrap();
        let diff: Vec<f64> = (0..grid.len()).map(|i| ppw[i] - pw[i]).collect();
        assert!(grid.norm_abs_h(&diff) < 1e-10);
    }

    #[test]
    fn p_lambda_reduces_to_p_below_lambda1() {
        let (_, grid, spectrum, ops) = setup(6);
        let w = grid.sample(|t| 1.0 + 0.5 * t.cos() + 0.1 * (3.0 * t).cos());
        let cut = 0.5 * spectrum.lambda(1);
        let a = ops.apply_p(&grid, &w).unwrap();
        let b = ops.apply_p_lambda(&grid, &w, cut).unwrap();
        for i in 0..grid.len() {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
        assert!(ops.apply_p_lambda(&grid, &w, 1e9).is_err());
    }

    #[test]
    fn p_lambda_annihilates_small_modes() {
        let r = 0.1;
        let spec = ProblemSpec::periodic_cos_r(r, 1.0, 1.0, 2.0);
        let grid = build_grid(&spec, 1024).unwrap();
        let spectrum = solve_spectrum(&spec, &grid, 8).unwrap();
        let ops = OperatorSet::assemble(&spec, &grid, &spectrum, Framework::Extended).unwrap();
        assert!(spectrum.lambda(1) < 0.25);
        let v_r = spectrum.pos[0].samples.clone();
        let out = ops.apply_p_lambda(&grid, &v_r, 1.0).unwrap();
        assert!(
            grid.norm_abs_h(&out) < 1e-6,
            "P_Λ v_R = {}",
            grid.norm_abs_h(&out)
        );
        // idempotence on a generic function
        let w = grid.sample(|t| 0.2 + t.cos() + 0.3 * (2.0 * t).cos());
        let pw = ops.apply_p_lambda(&grid, &w, 1.0).unwrap();
        let ppw = ops.apply_p_lambda(&grid, &pw, 1.0).unwrap();
        let diff: Vec<f64> = (0..grid.len()).map(|i| ppw[i] - pw[i]).collect();
        assert!(grid.norm_abs_h(&diff) < 1e-10);
    }

    #[test]
    fn v_plus_w_is_identity_on_span() {
        let (_, grid, _, ops) = setup(6);
        let (v, w) = ops.assemble_vw(&grid);
        for i in 0..12 {
            for j in 0..12 {
                let sum = v[(i, j)] + w[(i, j)];
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((sum - want).abs() < 1e-8, "V + W != I at ({i},{j}): {sum}");
            }
        }
    }

    #[test]
    fn ml_diag_contraction() {
        let (_, grid, spectrum, ops) = setup(6);
        for &m in &ops.ml_diag {
            assert!(m > 0.0 && m < 1.0);
        }
        let spec0 = ProblemSpec {
            length: 1e-14,
            ..ProblemSpec::periodic_cos(1.0, 1.0, 2.0)
        };
        let ops0 = OperatorSet::assemble(&spec0, &grid, &spectrum, Framework::Extended).unwrap();
        for &m in &ops0.ml_diag {
            assert_relative_eq!(m, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn norm_equivalence_ratio_bounded() {
        let (_, _grid, _, ops) = setup(8);
        // ratio ‖u‖₁ / ‖u‖ over seeded pseudo-random coefficient vectors
        let mut state = 0x2545f4914f6cdd1du64;
        let mut rnd = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for _ in 0..100 {
            let mut e = Expansion::zero(8, Framework::Extended);
            for a in e.a.iter_mut() {
                *a = rnd();
            }
            let ratio = ops.norm_one(&e) / ops.norm_abs(&e);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        assert!(lo > 0.1 && hi < 10.0, "equivalence constants ({lo}, {hi})");
    }
}
