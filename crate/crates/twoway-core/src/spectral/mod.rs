//! The indefinite-weight Sturm-Liouville spectrum `(p u')' + λ h u = 0`.
//!
//! Eigenvalues are numbered `... ≤ λ_{-2} ≤ λ_{-1} < 0 < λ_1 ≤ λ_2 ≤ ...`
//! with no zero index; the constant zero mode of periodic/Neumann problems is
//! kept out of the list and handled through the companion function g instead.
//!
//! Normalization: every retained mode satisfies
//! `sgn(λ_j) ∫ v_j² h dθ = 1`, which makes `{v_j}` orthonormal in the
//! half-range inner product ⟨,⟩₁ and is what all the operator algebra
//! downstream assumes. Equivalently `u_j = v_j / √|λ_j|` carries unit energy
//! norm ⟨u_j, u_j⟩_A = 1.

pub mod fourier;
pub mod sem;

use crate::quad::{Bc, ProblemSpec, Quadrature, WeightKind};
use crate::{Error, Result};

/// One panel of a piecewise-polynomial representation (Legendre basis on the
/// panel's reference interval).
#[derive(Debug, Clone)]
pub struct PanelPoly {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

/// Functional form of a mode away from the grid.
#[derive(Debug, Clone)]
pub enum ModeBasis {
    /// Fourier series: coeffs[m] multiplies cos(mθ) or sin(mθ)
    Trig { is_cos: bool, coeffs: Vec<f64> },
    /// piecewise Legendre polynomials
    Panels(Vec<PanelPoly>),
}

impl ModeBasis {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            ModeBasis::Trig { is_cos, coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(m, &c)| {
                    c * if *is_cos {
                        (m as f64 * theta).cos()
                    } else {
                        (m as f64 * theta).sin()
                    }
                })
                .sum(),
            ModeBasis::Panels(panels) => {
                for p in panels {
                    if theta >= p.lo && theta <= p.hi {
                        let x = (theta - 0.5 * (p.lo + p.hi)) / (0.5 * (p.hi - p.lo));
                        return crate::legendre::eval_series(&p.coeffs, x);
                    }
                }
                0.0
            }
        }
    }

    pub fn eval_deriv(&self, theta: f64) -> f64 {
        match self {
            ModeBasis::Trig { is_cos, coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(m, &c)| {
                    let mf = m as f64;
                    c * if *is_cos {
                        -mf * (mf * theta).sin()
                    } else {
                        mf * (mf * theta).cos()
                    }
                })
                .sum(),
            ModeBasis::Panels(panels) => {
                for p in panels {
                    if theta >= p.lo && theta <= p.hi {
                        let half = 0.5 * (p.hi - p.lo);
                        let x = (theta - 0.5 * (p.lo + p.hi)) / half;
                        let d = crate::legendre::deriv_coeffs(&p.coeffs);
                        return crate::legendre::eval_series(&d, x) / half;
                    }
                }
                0.0
            }
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            ModeBasis::Trig { coeffs, .. } => coeffs.iter_mut().for_each(|c| *c *= s),
            ModeBasis::Panels(panels) => panels
                .iter_mut()
                .for_each(|p| p.coeffs.iter_mut().for_each(|c| *c *= s)),
        }
    }
}

/// One eigenpair with node samples on the build grid.
#[derive(Debug, Clone)]
pub struct Mode {
    pub lambda: f64,
    pub samples: Vec<f64>,
    pub deriv: Vec<f64>,
    /// relative strong PDE residual ‖(p v')' + λ h v‖ / (|λ| ‖v‖)
    pub residual: f64,
    pub basis: ModeBasis,
}

impl Mode {
    pub fn flip_sign(&mut self) {
        self.samples.iter_mut().for_each(|v| *v = -*v);
        self.deriv.iter_mut().for_each(|v| *v = -*v);
        self.basis.scale(-1.0);
    }
}

/// Deterministic phase: positive value at the first node where |v| exceeds
/// half its maximum.
pub(crate) fn half_max_sign(samples: &[f64]) -> f64 {
    let vmax = samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    for &v in samples {
        if v.abs() > 0.5 * vmax {
            return v.signum();
        }
    }
    1.0
}

/// Zero-mode companion: the mean-zero solution of `A g = -h`, so that
/// `f = x + g(θ)` solves the slab equation.
#[derive(Debug, Clone)]
pub struct GFunction {
    pub samples: Vec<f64>,
    pub deriv: Vec<f64>,
    pub basis: ModeBasis,
}

/// Ordered eigenpairs plus zero-mode data.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// λ_1 ≤ λ_2 ≤ ... (ascending)
    pub pos: Vec<Mode>,
    /// |λ_{-1}| ≤ |λ_{-2}| ≤ ... (descending eigenvalue)
    pub neg: Vec<Mode>,
    pub has_zero_mode: bool,
    /// present only when ∫h = 0 admits the secular solution
    pub g: Option<GFunction>,
    /// ∫ h dθ, cached for the no-g extended framework
    pub mean_h: f64,
}

impl Spectrum {
    /// Modes per eigenvalue sign.
    pub fn n_per_sign(&self) -> usize {
        self.pos.len()
    }

    /// Mode by signed index j ∈ {-N..-1, 1..N}.
    pub fn mode(&self, j: i32) -> &Mode {
        assert!(j != 0, "mode index 0 is the zero mode, not in the list");
        if j > 0 {
            &self.pos[(j - 1) as usize]
        } else {
            &self.neg[(-j - 1) as usize]
        }
    }

    /// Flat coefficient ordering: positives ascending, then negatives by
    /// magnitude (the (a₁..a_N, b₁..b_N) layout of the norm estimates).
    pub fn flat_index(&self, j: i32) -> usize {
        assert!(j != 0);
        if j > 0 {
            (j - 1) as usize
        } else {
            self.pos.len() + (-j - 1) as usize
        }
    }

    pub fn signed_index(&self, flat: usize) -> i32 {
        let n = self.pos.len();
        if flat < n {
            flat as i32 + 1
        } else {
            -((flat - n) as i32 + 1)
        }
    }

    /// All modes in flat order.
    pub fn all_modes(&self) -> Vec<&Mode> {
        self.pos.iter().chain(self.neg.iter()).collect()
    }

    pub fn lambda(&self, j: i32) -> f64 {
        self.mode(j).lambda
    }
}

/// Solve the eigenproblem for `n` modes per sign.
///
/// Periodic cosine-family weights take the trigonometric recurrence route;
/// everything else goes through the spectral-element pencil. Modes must pass
/// the residual filter (1e-6 by default) to be retained.
pub fn solve_spectrum(spec: &ProblemSpec, grid: &Quadrature, n: usize) -> Result<Spectrum> {
    solve_spectrum_with(spec, grid, n, 1e-6)
}

pub fn solve_spectrum_with(
    spec: &ProblemSpec,
    grid: &Quadrature,
    n: usize,
    res_tol: f64,
) -> Result<Spectrum> {
    if n < 1 {
        return Err(Error::Precondition("need at least one mode per sign".into()));
    }
    spec.validate()?;
    let (pos, neg) = match (&spec.bc, &spec.weight) {
        (Bc::Periodic, WeightKind::Cos) => {
            if !spec.p.is_one() {
                return Err(Error::Unsupported(
                    "trigonometric route requires p = 1".into(),
                ));
            }
            fourier::solve(grid, 0.0, n, spec.even_sector_only, res_tol)?
        }
        (Bc::Periodic, WeightKind::CosMinusR { r }) => {
            if !spec.p.is_one() {
                return Err(Error::Unsupported(
                    "trigonometric route requires p = 1".into(),
                ));
            }
            fourier::solve(grid, *r, n, spec.even_sector_only, res_tol)?
        }
        (Bc::Periodic, _) => {
            return Err(Error::Unsupported(
                "periodic conditions are implemented for the cosine-family weights".into(),
            ))
        }
        _ => sem::solve(spec, grid, n, res_tol)?,
    };
    let mean_h = grid.integrate(&grid.h);
    let has_zero_mode = spec.has_zero_mode();
    let g = if has_zero_mode && mean_h.abs() < 1e-8 * (spec.b - spec.a) {
        Some(compute_g(spec, grid)?)
    } else {
        None
    };
    Ok(Spectrum {
        pos,
        neg,
        has_zero_mode,
        g,
        mean_h,
    })
}

/// The unique mean-zero solution of `A g = -h`; defined only when the
/// constant function is an eigenfunction and ∫h = 0.
pub fn compute_g(spec: &ProblemSpec, grid: &Quadrature) -> Result<GFunction> {
    if !spec.has_zero_mode() {
        return Err(Error::Precondition(
            "no zero mode under these boundary conditions; g undefined".into(),
        ));
    }
    match (&spec.bc, &spec.weight) {
        (Bc::Periodic, WeightKind::Cos) => Ok(GFunction {
            samples: grid.sample(|t| -t.cos()),
            deriv: grid.sample(f64::sin),
            basis: ModeBasis::Trig {
                is_cos: true,
                coeffs: vec![0.0, -1.0],
            },
        }),
        (Bc::Periodic, WeightKind::CosMinusR { r }) => Err(Error::Precondition(format!(
            "∫h = {:.3e} != 0 for r = {r}; g does not exist",
            -2.0 * std::f64::consts::PI * r
        ))),
        (Bc::Neumann, _) => {
            let (samples, deriv, polys) = sem::solve_g(spec, grid)?;
            Ok(GFunction {
                samples,
                deriv,
                basis: ModeBasis::Panels(polys),
            })
        }
        _ => Err(Error::Unsupported(
            "g is implemented for periodic cosine and Neumann problems".into(),
        )),
    }
}

/// Half-range moment `X_j = sgn(λ_j) ∫_{h>0} v_j h dθ`.
pub fn half_range_moment(spectrum: &Spectrum, grid: &Quadrature, j: i32) -> f64 {
    let mode = spectrum.mode(j);
    let s: f64 = grid
        .pos_idx
        .iter()
        .map(|&i| grid.weights[i] * mode.samples[i] * grid.h[i])
        .sum();
    mode.lambda.signum() * s
}

/// Both sides of the turning-point Wronskian identity for an opposite-sign
/// pair: |⟨v_j, v_k⟩| against `2 |v_j(0) v_k'(0) - v_j'(0) v_k(0)| /
/// (|λ_j| + |λ_k|)`.
///
/// Valid for `A = -∂²`, `h = θ^m` (odd multiplicity) with the single turning
/// point at θ = 0.
pub fn wronskian_overlap_check(
    spectrum: &Spectrum,
    grid: &Quadrature,
    spec: &ProblemSpec,
    j: i32,
    k: i32,
) -> Result<(f64, f64)> {
    if spectrum.lambda(j) * spectrum.lambda(k) >= 0.0 {
        return Err(Error::Precondition(
            "the Wronskian identity applies to opposite-sign pairs".into(),
        ));
    }
    match spec.weight {
        WeightKind::Linear | WeightKind::Cubic => {}
        _ => {
            return Err(Error::Precondition(
                "requires h = θ^m with a single interior zero of odd multiplicity".into(),
            ))
        }
    }
    if !spec.p.is_one() {
        return Err(Error::Precondition("requires A = -∂² (p = 1)".into()));
    }
    let mj = spectrum.mode(j);
    let mk = spectrum.mode(k);
    let lhs = grid.inner_abs_h(&mj.samples, &mk.samples).abs();
    let wronskian = mj.basis.eval(0.0) * mk.basis.eval_deriv(0.0)
        - mj.basis.eval_deriv(0.0) * mk.basis.eval(0.0);
    let rhs = 2.0 * wronskian.abs() / (mj.lambda.abs() + mk.lambda.abs());
    Ok((lhs, rhs))
}

/// Log-log slope of |⟨v_j, v_k⟩| against |λ_k| over the last decade of
/// computed opposite-sign modes (fixed j). The WKB prediction is
/// `-(3m + 4) / (4m + 8)` for turning multiplicity m.
pub fn overlap_decay_slope(spectrum: &Spectrum, grid: &Quadrature, j: i32) -> Result<f64> {
    let mj = spectrum.mode(j);
    let opposite: Vec<&Mode> = if spectrum.lambda(j) > 0.0 {
        spectrum.neg.iter().collect()
    } else {
        spectrum.pos.iter().collect()
    };
    let lam_max = opposite.last().unwrap().lambda.abs();
    let mut xs = vec![];
    let mut ys = vec![];
    for mk in &opposite {
        if mk.lambda.abs() < lam_max / 10.0 {
            continue;
        }
        let ip = grid.inner_abs_h(&mj.samples, &mk.samples).abs();
        if ip > 0.0 {
            xs.push(mk.lambda.abs().ln());
            ys.push(ip.ln());
        }
    }
    if xs.len() < 4 {
        return Err(Error::Precondition(
            "too few modes in the top decade for a slope fit".into(),
        ));
    }
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}
