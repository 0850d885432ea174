//! Eigensolver for the periodic weights cos θ and cos θ - r on (-π, π).
//!
//! With p ≡ 1 the eigenproblem `u'' + λ (cos θ - r) u = 0` decouples into the
//! even (cosine) and odd (sine) Fourier sectors, each giving a second-order
//! recurrence for the coefficients, i.e. a tridiagonal pencil
//! `B a = μ D a` with `μ = 1/λ` and `D = diag(m²)`. Solving the symmetrized
//! pencil gives every eigenvalue of the sector at once.
//!
//! For r = 0 the substitution θ → θ + π maps eigenfunctions of λ onto
//! eigenfunctions of -λ (coefficients pick up a factor (-1)^m), so the
//! negative half of the spectrum is constructed from the positive half with
//! that phase lock; this is what makes the closed-form series coefficients of
//! the channel problem well defined.

use super::{half_max_sign, Mode, ModeBasis};
use crate::linalg;
use crate::quad::Quadrature;
use crate::{Error, Result};
use faer::Mat;
use std::f64::consts::PI;

/// Raw sector eigenpair: full cosine/sine coefficient vector over m = 0..=mm.
struct SectorMode {
    lambda: f64,
    coeffs: Vec<f64>,
    is_cos: bool,
}

/// Solve one Fourier sector of `u'' + λ (cos θ - r) u = 0`.
///
/// Returns all finite eigenpairs, unnormalized.
fn solve_sector(mm: usize, r: f64, is_cos: bool) -> Result<Vec<SectorMode>> {
    // Unknowns: cosine sector m = 1..=mm for r != 0 (a0 eliminated through
    // a1 = 2 r a0), m = 2..=mm for r = 0 (a1 = 0 and a0 = -a2/2); sine
    // sector m = 1..=mm always.
    let midx: Vec<usize> = if is_cos && r == 0.0 {
        (2..=mm).collect()
    } else {
        (1..=mm).collect()
    };
    let n = midx.len();
    // Symmetrized pencil C = D^{-1/2} B D^{-1/2}, eigenvalue μ = 1/λ.
    let mut c = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        let m = midx[i] as f64;
        let mut diag = -r;
        if is_cos && r != 0.0 && midx[i] == 1 {
            diag = 1.0 / (2.0 * r) - r;
        }
        if is_cos && r == 0.0 {
            diag = 0.0;
        }
        c[(i, i)] = diag / (m * m);
        if i + 1 < n {
            let m1 = midx[i + 1] as f64;
            let off = 0.5 / (m * m1);
            c[(i, i + 1)] = off;
            c[(i + 1, i)] = off;
        }
    }
    let (mu, vecs) = linalg::sym_eigen(&c)?;
    let mut out = Vec::new();
    for k in 0..n {
        if mu[k].abs() < 1e-13 {
            continue;
        }
        let lambda = 1.0 / mu[k];
        let mut coeffs = vec![0.0; mm + 1];
        for i in 0..n {
            coeffs[midx[i]] = vecs[(i, k)] / midx[i] as f64;
        }
        if is_cos {
            if r == 0.0 {
                coeffs[1] = 0.0;
                coeffs[0] = -coeffs[2] / 2.0;
            } else {
                coeffs[0] = coeffs[1] / (2.0 * r);
            }
        }
        out.push(SectorMode {
            lambda,
            coeffs,
            is_cos,
        });
    }
    Ok(out)
}

/// Relative strong residual ‖u'' + λ(cos - r)u‖ / (|λ| ‖u‖), both norms plain
/// L²(dθ) by Parseval. Truncation spill past the basis cutoff is included.
fn residual(mode: &SectorMode, r: f64) -> f64 {
    let a = &mode.coeffs;
    let mm = a.len() - 1;
    let at = |m: i64| -> f64 {
        if m < 0 || m as usize > mm {
            0.0
        } else {
            a[m as usize]
        }
    };
    let lam = mode.lambda;
    let mut res2 = 0.0;
    for m in 0..=(mm + 2) as i64 {
        let e = if mode.is_cos {
            let conv = if m == 0 {
                0.5 * at(1)
            } else if m == 1 {
                at(0) + 0.5 * at(2)
            } else {
                0.5 * (at(m - 1) + at(m + 1))
            };
            -((m * m) as f64) * at(m) + lam * (conv - r * at(m))
        } else {
            if m == 0 {
                continue;
            }
            let conv = if m == 1 {
                0.5 * at(2)
            } else {
                0.5 * (at(m - 1) + at(m + 1))
            };
            -((m * m) as f64) * at(m) + lam * (conv - r * at(m))
        };
        let norm = if m == 0 { 2.0 * PI } else { PI };
        res2 += norm * e * e;
    }
    let mut u2 = 0.0;
    for (m, &am) in a.iter().enumerate() {
        let norm = if m == 0 && mode.is_cos { 2.0 } else { 1.0 };
        u2 += PI * norm * am * am;
    }
    (res2 / u2).sqrt() / lam.abs()
}

/// Signed norm ∫ u² (cos θ - r) dθ from exact trigonometric integrals.
fn signed_norm(mode: &SectorMode, r: f64) -> f64 {
    let a = &mode.coeffs;
    let mut cos_part = 0.0;
    for m in 0..a.len() - 1 {
        cos_part += a[m] * a[m + 1];
    }
    cos_part *= PI;
    if mode.is_cos && a.len() > 1 {
        cos_part += PI * a[0] * a[1];
    }
    let mut plain = 0.0;
    for (m, &am) in a.iter().enumerate() {
        plain += if m == 0 && mode.is_cos { 2.0 } else { 1.0 } * am * am;
    }
    plain *= PI;
    cos_part - r * plain
}

fn shift_by_pi(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .map(|(m, &c)| if m % 2 == 0 { c } else { -c })
        .collect()
}

/// Evaluate trigonometric modes on the grid, producing samples and θ
/// derivatives through shared basis tables.
fn sample_modes(raw: &[(f64, Vec<f64>, bool)], grid: &Quadrature, residuals: &[f64]) -> Vec<Mode> {
    let nn = grid.len();
    let mm = raw.iter().map(|r| r.1.len()).max().unwrap_or(1) - 1;
    let mut cos_t = Mat::<f64>::zeros(nn, mm + 1);
    let mut sin_t = Mat::<f64>::zeros(nn, mm + 1);
    for (i, &th) in grid.nodes.iter().enumerate() {
        let (s1, c1) = th.sin_cos();
        cos_t[(i, 0)] = 1.0;
        if mm >= 1 {
            cos_t[(i, 1)] = c1;
            sin_t[(i, 1)] = s1;
        }
        for m in 2..=mm {
            cos_t[(i, m)] = 2.0 * c1 * cos_t[(i, m - 1)] - cos_t[(i, m - 2)];
            sin_t[(i, m)] = 2.0 * c1 * sin_t[(i, m - 1)] - sin_t[(i, m - 2)];
        }
    }
    let nmodes = raw.len();
    let mut coef_cos = Mat::<f64>::zeros(mm + 1, nmodes);
    let mut coef_sin = Mat::<f64>::zeros(mm + 1, nmodes);
    let mut dcoef_cos = Mat::<f64>::zeros(mm + 1, nmodes);
    let mut dcoef_sin = Mat::<f64>::zeros(mm + 1, nmodes);
    for (k, (_, coeffs, is_cos)) in raw.iter().enumerate() {
        for (m, &c) in coeffs.iter().enumerate() {
            if *is_cos {
                coef_cos[(m, k)] = c;
                dcoef_sin[(m, k)] = -(m as f64) * c;
            } else {
                coef_sin[(m, k)] = c;
                dcoef_cos[(m, k)] = m as f64 * c;
            }
        }
    }
    let vals = &cos_t * &coef_cos + &sin_t * &coef_sin;
    let ders = &sin_t * &dcoef_sin + &cos_t * &dcoef_cos;
    raw.iter()
        .enumerate()
        .map(|(k, (lambda, coeffs, is_cos))| Mode {
            lambda: *lambda,
            samples: (0..nn).map(|i| vals[(i, k)]).collect(),
            deriv: (0..nn).map(|i| ders[(i, k)]).collect(),
            residual: residuals[k],
            basis: ModeBasis::Trig {
                is_cos: *is_cos,
                coeffs: coeffs.clone(),
            },
        })
        .collect()
}

/// Solve the periodic problem for `n` modes per eigenvalue sign.
///
/// `even_only` restricts to the cosine sector. Modes failing the residual
/// filter are dropped; the basis grows and retries if the yield falls short.
pub fn solve(
    grid: &Quadrature,
    r: f64,
    n: usize,
    even_only: bool,
    res_tol: f64,
) -> Result<(Vec<Mode>, Vec<Mode>)> {
    // WKB sizing: positive-λ modes oscillate where h > 0 with total phase
    // √λ ∫ √h⁺; the even sector keeps every other mode.
    let phase_pos: f64 = grid
        .pos_idx
        .iter()
        .map(|&i| grid.weights[i] * grid.h[i].max(0.0).sqrt())
        .sum();
    let phase_neg: f64 = grid
        .neg_idx
        .iter()
        .map(|&i| grid.weights[i] * (-grid.h[i]).max(0.0).sqrt())
        .sum();
    let phase = phase_pos.min(phase_neg).max(1e-3);
    let sector_factor = if even_only { 2.0 } else { 1.0 };
    let lam_cap = (sector_factor * PI * (n as f64 + 8.0) / phase).powi(2);
    let mut mm = ((1.25 * lam_cap.sqrt()) as usize + 48).max(48);

    for _attempt in 0..3 {
        let mut sector_modes = solve_sector(mm, r, true)?;
        if !even_only {
            sector_modes.extend(solve_sector(mm, r, false)?);
        }
        let mut accepted: Vec<(f64, Vec<f64>, bool, f64)> = Vec::new();
        for m in sector_modes {
            let res = residual(&m, r);
            if res > res_tol {
                continue;
            }
            let q = m.lambda.signum() * signed_norm(&m, r);
            if q <= 0.0 {
                continue;
            }
            let scale = 1.0 / q.sqrt();
            let coeffs: Vec<f64> = m.coeffs.iter().map(|c| c * scale).collect();
            accepted.push((m.lambda, coeffs, m.is_cos, res));
        }
        accepted.sort_by(|a, b| a.0.abs().partial_cmp(&b.0.abs()).unwrap());

        let (mut raw_pos, mut raw_neg): (Vec<_>, Vec<_>) = (Vec::new(), Vec::new());
        if r == 0.0 {
            // negatives are the π-shift of the positives
            for (lam, coeffs, is_cos, res) in accepted.iter().filter(|m| m.0 > 0.0).take(n) {
                raw_pos.push((*lam, coeffs.clone(), *is_cos, *res));
                raw_neg.push((-lam, shift_by_pi(coeffs), *is_cos, *res));
            }
        } else {
            for (lam, coeffs, is_cos, res) in accepted.iter() {
                if *lam > 0.0 && raw_pos.len() < n {
                    raw_pos.push((*lam, coeffs.clone(), *is_cos, *res));
                } else if *lam < 0.0 && raw_neg.len() < n {
                    raw_neg.push((*lam, coeffs.clone(), *is_cos, *res));
                }
            }
        }
        if raw_pos.len() == n && raw_neg.len() == n {
            let flat: Vec<(f64, Vec<f64>, bool)> = raw_pos
                .iter()
                .chain(raw_neg.iter())
                .map(|(l, c, ic, _)| (*l, c.clone(), *ic))
                .collect();
            let residuals: Vec<f64> = raw_pos
                .iter()
                .chain(raw_neg.iter())
                .map(|(_, _, _, res)| *res)
                .collect();
            let mut modes = sample_modes(&flat, grid, &residuals);
            let neg_modes = modes.split_off(n);
            let mut pos = modes;
            let mut neg = neg_modes;
            // phase fixing: positives by the half-max rule; in the symmetric
            // case negatives inherit the π-shift lock instead.
            for k in 0..n {
                if half_max_sign(&pos[k].samples) < 0.0 {
                    pos[k].flip_sign();
                }
            }
            for k in 0..n {
                if r == 0.0 {
                    let flip = match (&pos[k].basis, &neg[k].basis) {
                        (ModeBasis::Trig { coeffs: cp, .. }, ModeBasis::Trig { coeffs: cn, .. }) => {
                            let shifted = shift_by_pi(cp);
                            let dot: f64 = shifted.iter().zip(cn).map(|(a, b)| a * b).sum();
                            dot < 0.0
                        }
                        _ => false,
                    };
                    if flip {
                        neg[k].flip_sign();
                    }
                } else if half_max_sign(&neg[k].samples) < 0.0 {
                    neg[k].flip_sign();
                }
            }
            return Ok((pos, neg));
        }
        mm = (mm * 3) / 2 + 32;
        if mm > 8000 {
            break;
        }
    }
    Err(Error::Spectral(format!(
        "fewer than {n} modes per sign passed the residual filter (basis {mm})"
    )))
}

/// Exact integrals of trigonometric products against the piecewise weight.
///
/// `T[m, m'] = ∫_R t_m t_{m'} (c_cos cos θ + c_const) dθ` where the region R
/// is either the inner panel (-t, t) or its complement on the circle, and
/// t_m is cos(mθ) or sin(mθ). Gram blocks are then single products `Cᵀ T C`.
pub struct TrigProducts {
    /// ∫ cos(kθ) dθ over (-t, t), index |k|
    inner_cos_int: Vec<f64>,
}

impl TrigProducts {
    pub fn new(t: f64, max_order: usize) -> Self {
        let mut inner = Vec::with_capacity(max_order + 1);
        inner.push(2.0 * t);
        for k in 1..=max_order {
            inner.push(2.0 * (k as f64 * t).sin() / k as f64);
        }
        TrigProducts {
            inner_cos_int: inner,
        }
    }

    fn ic(&self, k: i64, inner: bool) -> f64 {
        let ku = k.unsigned_abs() as usize;
        let inside = self.inner_cos_int[ku];
        if inner {
            inside
        } else {
            let full = if k == 0 { 2.0 * PI } else { 0.0 };
            full - inside
        }
    }

    /// T-matrix for a sector pair; `cc` selects cos×cos (sin×sin otherwise).
    /// Mixed cos×sin pairs vanish by parity of the regions.
    pub fn t_matrix(&self, mm: usize, cc: bool, inner: bool, c_cos: f64, c_const: f64) -> Mat<f64> {
        let sum_sign = if cc { 1.0 } else { -1.0 };
        Mat::from_fn(mm + 1, mm + 1, |mi, mj| {
            let (m, mp) = (mi as i64, mj as i64);
            let mut v = 0.0;
            if c_cos != 0.0 {
                v += 0.25
                    * c_cos
                    * (self.ic(m - mp + 1, inner)
                        + self.ic(m - mp - 1, inner)
                        + sum_sign * (self.ic(m + mp + 1, inner) + self.ic(m + mp - 1, inner)));
            }
            if c_const != 0.0 {
                v += 0.5 * c_const * (self.ic(m - mp, inner) + sum_sign * self.ic(m + mp, inner));
            }
            v
        })
    }
}
