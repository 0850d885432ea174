//! Spectral-element eigensolver for separated boundary conditions.
//!
//! The domain is split into Gauss-Lobatto panels at the turning points of h,
//! giving the nodal stiffness form `K u = λ H u` with
//! `K = Σ BᵀWB` (exact for polynomial p) and `H = diag(w h)` the diagonal of
//! weight samples. `K` is positive definite once Dirichlet rows are removed,
//! so the pencil is solved by congruence with its Cholesky factor; all
//! eigenvalues come out real and the eigenvectors arrive A-normalized.

use super::{half_max_sign, Mode, ModeBasis, PanelPoly};
use crate::legendre;
use crate::linalg;
use crate::quad::{Bc, ProblemSpec, Quadrature, WeightKind};
use crate::{Error, Result};
use faer::Mat;
use std::f64::consts::PI;

struct SemMesh {
    /// panel edges, [a, turning points..., b]
    edges: Vec<f64>,
    /// polynomial degree per panel
    degrees: Vec<usize>,
    /// global node coordinates (interfaces shared)
    nodes: Vec<f64>,
    /// global quadrature weights
    weights: Vec<f64>,
    /// per-panel global index of the first node
    panel_start: Vec<usize>,
}

fn build_mesh(spec: &ProblemSpec, degrees: &[usize]) -> SemMesh {
    let tps = spec.weight.turning_points(spec.a, spec.b);
    let mut edges = vec![spec.a];
    edges.extend_from_slice(&tps);
    edges.push(spec.b);

    let mut nodes = vec![];
    let mut weights = vec![];
    let mut panel_start = vec![];
    for (k, e) in edges.windows(2).enumerate() {
        let (lo, hi) = (e[0], e[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (lo + hi);
        let (x, w) = legendre::gauss_lobatto(degrees[k]);
        if k == 0 {
            panel_start.push(0);
            nodes.push(mid + half * x[0]);
            weights.push(half * w[0]);
        } else {
            // share the interface node; its weight accumulates
            panel_start.push(nodes.len() - 1);
            *weights.last_mut().unwrap() += half * w[0];
        }
        for i in 1..x.len() {
            nodes.push(mid + half * x[i]);
            weights.push(half * w[i]);
        }
    }
    SemMesh {
        edges,
        degrees: degrees.to_vec(),
        nodes,
        weights,
        panel_start,
    }
}

/// Barycentric differentiation matrix on Gauss-Lobatto nodes;
/// bary weights for GLL are (-1)^i sqrt(w_i).
fn diff_matrix(x: &[f64], w: &[f64]) -> Mat<f64> {
    let n = x.len();
    let bary: Vec<f64> = (0..n)
        .map(|i| if i % 2 == 0 { w[i].sqrt() } else { -w[i].sqrt() })
        .collect();
    let mut d = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        let mut rowsum = 0.0;
        for j in 0..n {
            if i != j {
                let v = (bary[j] / bary[i]) / (x[i] - x[j]);
                d[(i, j)] = v;
                rowsum += v;
            }
        }
        d[(i, i)] = -rowsum;
    }
    d
}

fn assemble(spec: &ProblemSpec, mesh: &SemMesh) -> (Mat<f64>, Vec<f64>) {
    let nglob = mesh.nodes.len();
    let mut k_mat = Mat::<f64>::zeros(nglob, nglob);
    for (p, e) in mesh.edges.windows(2).enumerate() {
        let (lo, hi) = (e[0], e[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (lo + hi);
        let deg = mesh.degrees[p];
        let (x, w) = legendre::gauss_lobatto(deg);
        let d = diff_matrix(&x, &w);
        // local stiffness (1/half) Dᵀ diag(w p) D
        let np = deg + 1;
        let mut wd = Mat::<f64>::zeros(np, np);
        for q in 0..np {
            let pq = spec.p.eval(mid + half * x[q]);
            for j in 0..np {
                wd[(q, j)] = w[q] * pq * d[(q, j)];
            }
        }
        let kloc = d.transpose() * &wd;
        let s = mesh.panel_start[p];
        for i in 0..np {
            for j in 0..np {
                k_mat[(s + i, s + j)] += kloc[(i, j)] / half;
            }
        }
    }
    // Robin boundary terms for general separated conditions
    if let Bc::Separated { alpha, beta } = spec.bc {
        if alpha.sin().abs() > 1e-12 {
            let cot = alpha.cos() / alpha.sin();
            k_mat[(0, 0)] -= spec.p.eval(spec.a) * cot;
        }
        if beta.sin().abs() > 1e-12 {
            let cot = beta.cos() / beta.sin();
            k_mat[(nglob - 1, nglob - 1)] += spec.p.eval(spec.b) * cot;
        }
    }
    // H accumulates per panel with one-sided weight values, so a jump of h
    // across an interface (the sgn case) contributes both limits rather than
    // a single arbitrary side.
    let mut h_diag = vec![0.0; nglob];
    for (p, e) in mesh.edges.windows(2).enumerate() {
        let (lo, hi) = (e[0], e[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (lo + hi);
        let deg = mesh.degrees[p];
        let (x, w) = legendre::gauss_lobatto(deg);
        let s = mesh.panel_start[p];
        let nudge = 1e-11 * (hi - lo);
        for q in 0..=deg {
            let mut th = mid + half * x[q];
            if q == 0 {
                th += nudge;
            } else if q == deg {
                th -= nudge;
            }
            h_diag[s + q] += half * w[q] * spec.weight.eval(th);
        }
    }
    (k_mat, h_diag)
}

fn dirichlet_at_a(bc: &Bc) -> bool {
    match bc {
        Bc::Dirichlet => true,
        Bc::Separated { alpha, .. } => alpha.sin().abs() <= 1e-12,
        _ => false,
    }
}

fn dirichlet_at_b(bc: &Bc) -> bool {
    match bc {
        Bc::Dirichlet => true,
        Bc::Separated { beta, .. } => beta.sin().abs() <= 1e-12,
        _ => false,
    }
}

/// Degree estimate per panel from the WKB phase at the target eigenvalue.
fn plan_degrees(spec: &ProblemSpec, n: usize) -> Vec<usize> {
    let fine = 512;
    let tps = spec.weight.turning_points(spec.a, spec.b);
    let mut edges = vec![spec.a];
    edges.extend_from_slice(&tps);
    edges.push(spec.b);
    let mut phase_pos = 0.0;
    let mut phase_neg = 0.0;
    let step = (spec.b - spec.a) / fine as f64;
    for i in 0..fine {
        let th = spec.a + (i as f64 + 0.5) * step;
        let h = spec.weight.eval(th);
        if h > 0.0 {
            phase_pos += step * h.sqrt();
        } else {
            phase_neg += step * (-h).sqrt();
        }
    }
    let lam_cap = ((n as f64 + 8.0) * PI / phase_pos.min(phase_neg).max(1e-6)).powi(2);
    edges
        .windows(2)
        .map(|e| {
            let mut phi = 0.0;
            let stepp = (e[1] - e[0]) / fine as f64;
            for i in 0..fine {
                let th = e[0] + (i as f64 + 0.5) * stepp;
                phi += stepp * (lam_cap * spec.weight.eval(th).abs()).sqrt();
            }
            ((0.62 * phi) as usize + 80).max(24).min(4000)
        })
        .collect()
}

/// Per-panel Legendre coefficients of a global nodal vector.
fn panel_coeffs(mesh: &SemMesh, analyses: &[legendre::Analysis], u: &[f64]) -> Vec<PanelPoly> {
    mesh.edges
        .windows(2)
        .enumerate()
        .map(|(p, e)| {
            let np = mesh.degrees[p] + 1;
            let s = mesh.panel_start[p];
            let seg: Vec<f64> = u[s..s + np].to_vec();
            PanelPoly {
                lo: e[0],
                hi: e[1],
                coeffs: analyses[p].coeffs(&seg),
            }
        })
        .collect()
}

/// Solve for `n` modes per sign on the given grid.
pub fn solve(
    spec: &ProblemSpec,
    grid: &Quadrature,
    n: usize,
    res_tol: f64,
) -> Result<(Vec<Mode>, Vec<Mode>)> {
    if matches!(spec.bc, Bc::Periodic) {
        return Err(Error::Unsupported(
            "periodic boundary conditions use the trigonometric route".into(),
        ));
    }
    let mut degrees = plan_degrees(spec, n);
    for _attempt in 0..3 {
        match try_solve(spec, grid, n, res_tol, &degrees) {
            Ok(out) => return Ok(out),
            Err(Error::Spectral(_)) => {
                for d in degrees.iter_mut() {
                    *d = (*d * 3) / 2 + 16;
                    if *d > 5000 {
                        return Err(Error::Spectral(
                            "mode yield still short at maximum element degree".into(),
                        ));
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Spectral(format!(
        "fewer than {n} modes per sign passed the filters"
    )))
}

fn try_solve(
    spec: &ProblemSpec,
    grid: &Quadrature,
    n: usize,
    res_tol: f64,
    degrees: &[usize],
) -> Result<(Vec<Mode>, Vec<Mode>)> {
    let mesh = build_mesh(spec, degrees);
    let (k_full, h_full) = assemble(spec, &mesh);
    let nglob = mesh.nodes.len();

    // active dofs after Dirichlet elimination
    let lo_drop = dirichlet_at_a(&spec.bc) as usize;
    let hi_drop = dirichlet_at_b(&spec.bc) as usize;
    let active: Vec<usize> = (lo_drop..nglob - hi_drop).collect();
    let na = active.len();
    let neumann_like = matches!(spec.bc, Bc::Neumann | Bc::Periodic);

    let (mu, uvecs) = if !neumann_like {
        let k_act = Mat::from_fn(na, na, |i, j| k_full[(active[i], active[j])]);
        let h_act = Mat::from_fn(na, na, |i, j| {
            if i == j {
                h_full[active[i]]
            } else {
                0.0
            }
        });
        linalg::gen_sym_eigen(&h_act, &k_act)?
    } else {
        // deflate the constant null space of K with a Householder basis of 1⊥
        let q = householder_complement(na);
        let k_act = Mat::from_fn(na, na, |i, j| k_full[(active[i], active[j])]);
        let h_act = Mat::from_fn(na, na, |i, j| {
            if i == j {
                h_full[active[i]]
            } else {
                0.0
            }
        });
        let kz = &k_act * &q;
        let k_red = q.transpose() * kz;
        let hz = &h_act * &q;
        let h_red = q.transpose() * hz;
        let (mu, y) = linalg::gen_sym_eigen(&h_red, &k_red)?;
        (mu, &q * &y)
    };

    // μ = 1/λ; tiny μ are the spurious far modes of the discretization
    let mu_max = mu.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut lams: Vec<(f64, usize)> = mu
        .iter()
        .enumerate()
        .filter(|(_, &m)| m.abs() > 1e-12 * mu_max)
        .map(|(k, &m)| (1.0 / m, k))
        .collect();
    // keep |λ| at most half the largest resolved
    let lam_max = lams.iter().fold(0.0f64, |m, &(l, _)| m.max(l.abs()));
    lams.retain(|&(l, _)| l.abs() <= 0.5 * lam_max);
    lams.sort_by(|a, b| a.0.abs().partial_cmp(&b.0.abs()).unwrap());

    // panel transforms shared by all modes
    let analyses: Vec<legendre::Analysis> = mesh
        .edges
        .windows(2)
        .enumerate()
        .map(|(p, _)| {
            let (x, w) = legendre::gauss_lobatto(mesh.degrees[p]);
            legendre::Analysis::new(&x, &w, mesh.degrees[p])
        })
        .collect();

    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for &(lam, col) in &lams {
        if pos.len() >= n && neg.len() >= n {
            break;
        }
        if (lam > 0.0 && pos.len() >= n) || (lam < 0.0 && neg.len() >= n) {
            continue;
        }
        // embed to the full dof vector (Dirichlet walls = 0), scale to
        // sgn(λ)∫v²h = 1 via v = √|λ| u (u arrives with uᵀKu = 1)
        let mut u_full = vec![0.0; nglob];
        for (i, &gi) in active.iter().enumerate() {
            u_full[gi] = uvecs[(i, col)] * lam.abs().sqrt();
        }
        let polys = panel_coeffs(&mesh, &analyses, &u_full);
        let mode = realize_mode(lam, polys, grid, spec)?;
        if mode.residual > res_tol {
            continue;
        }
        // discretization noise can leave the signed norm slightly off
        let q = grid.inner_signed(&mode.samples, &mode.samples) * lam.signum();
        if q <= 0.0 || (q - 1.0).abs() > 0.05 {
            continue;
        }
        if lam > 0.0 {
            pos.push(mode);
        } else {
            neg.push(mode);
        }
    }
    if pos.len() < n || neg.len() < n {
        return Err(Error::Spectral(format!(
            "yield {}+/{}- of {n} requested",
            pos.len(),
            neg.len()
        )));
    }
    for m in pos.iter_mut().chain(neg.iter_mut()) {
        if half_max_sign(&m.samples) < 0.0 {
            m.flip_sign();
        }
    }
    Ok((pos, neg))
}

fn householder_complement(n: usize) -> Mat<f64> {
    // columns 1.. of the reflector mapping e1 -> 1/√n
    let nf = (n as f64).sqrt();
    let mut v: Vec<f64> = vec![1.0 / nf; n];
    v[0] -= 1.0;
    let vnorm2: f64 = v.iter().map(|&x| x * x).sum();
    Mat::from_fn(n, n - 1, |i, j| {
        let e = if i == j + 1 { 1.0 } else { 0.0 };
        e - 2.0 * v[i] * v[j + 1] / vnorm2
    })
}

/// Evaluate a panel-polynomial mode on the quadrature grid and compute its
/// strong residual there.
fn realize_mode(
    lambda: f64,
    polys: Vec<PanelPoly>,
    grid: &Quadrature,
    spec: &ProblemSpec,
) -> Result<Mode> {
    let nn = grid.len();
    let mut samples = vec![0.0; nn];
    let mut deriv = vec![0.0; nn];
    let mut second = vec![0.0; nn];
    for poly in &polys {
        let half = 0.5 * (poly.hi - poly.lo);
        let mid = 0.5 * (poly.hi + poly.lo);
        // trim transform noise (grows like (2p+1)·ε) before differentiating twice
        let cmax = poly.coeffs.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
        let trim = 8.0 * f64::EPSILON * poly.coeffs.len() as f64 * cmax;
        let trimmed: Vec<f64> = poly
            .coeffs
            .iter()
            .map(|&c| if c.abs() < trim { 0.0 } else { c })
            .collect();
        let d1 = legendre::deriv_coeffs(&trimmed);
        let d2 = legendre::deriv_coeffs(&d1);
        for (i, &th) in grid.nodes.iter().enumerate() {
            if th >= poly.lo && th <= poly.hi {
                let x = (th - mid) / half;
                samples[i] = legendre::eval_series(&poly.coeffs, x);
                deriv[i] = legendre::eval_series(&d1, x) / half;
                second[i] = legendre::eval_series(&d2, x) / (half * half);
            }
        }
    }
    // residual of (p v')' + λ h v; for non-constant p add p' v'
    let res: Vec<f64> = if spec.p.is_one() {
        (0..nn)
            .map(|i| second[i] + lambda * grid.h[i] * samples[i])
            .collect()
    } else {
        let dp = grid.differentiate(&grid.p.clone());
        (0..nn)
            .map(|i| grid.p[i] * second[i] + dp[i] * deriv[i] + lambda * grid.h[i] * samples[i])
            .collect()
    };
    let res_norm = grid.integrate(&res.iter().map(|&v| v * v).collect::<Vec<_>>());
    let v_norm = grid.integrate(&samples.iter().map(|&v| v * v).collect::<Vec<_>>());
    let residual = (res_norm / v_norm).sqrt() / lambda.abs();
    Ok(Mode {
        lambda,
        samples,
        deriv,
        residual,
        basis: ModeBasis::Panels(polys),
    })
}

/// Solve `A g = -h`, i.e. `(p g')' = h`, with the mean-zero constraint
/// appended as a Lagrange multiplier row. Requires Neumann (or periodic)
/// conditions and ∫h = 0. Returns samples, derivative samples and the
/// piecewise-polynomial form.
pub fn solve_g(
    spec: &ProblemSpec,
    grid: &Quadrature,
) -> Result<(Vec<f64>, Vec<f64>, Vec<PanelPoly>)> {
    if !matches!(spec.bc, Bc::Neumann) {
        return Err(Error::Unsupported(
            "direct g solve is implemented for Neumann conditions".into(),
        ));
    }
    let mean_h = grid.integrate(&grid.h);
    if mean_h.abs() > 1e-8 * (spec.b - spec.a) {
        return Err(Error::Precondition(format!(
            "∫h = {mean_h:.3e} != 0; the zero-mode companion g does not exist"
        )));
    }
    let degrees = plan_degrees(spec, 8);
    let mesh = build_mesh(spec, &degrees);
    let (k_full, h_full) = assemble(spec, &mesh);
    let nglob = mesh.nodes.len();
    // bordered system [[K, αm], [αmᵀ, 0]] [g; μ/α] = [-(w h); 0]; the border
    // is scaled to the stiffness magnitude to keep the pivots balanced
    let mut alpha = 0.0;
    for i in 0..nglob {
        alpha += k_full[(i, i)].abs();
    }
    alpha /= nglob as f64;
    let mut a = Mat::<f64>::zeros(nglob + 1, nglob + 1);
    for i in 0..nglob {
        for j in 0..nglob {
            a[(i, j)] = k_full[(i, j)];
        }
        a[(i, nglob)] = alpha * mesh.weights[i];
        a[(nglob, i)] = alpha * mesh.weights[i];
    }
    let mut rhs = vec![0.0; nglob + 1];
    for i in 0..nglob {
        rhs[i] = -h_full[i];
    }
    let sol = linalg::solve_small(&a, &rhs)?;
    let analyses: Vec<legendre::Analysis> = mesh
        .edges
        .windows(2)
        .enumerate()
        .map(|(p, _)| {
            let (x, w) = legendre::gauss_lobatto(mesh.degrees[p]);
            legendre::Analysis::new(&x, &w, mesh.degrees[p])
        })
        .collect();
    let polys = panel_coeffs(&mesh, &analyses, &sol[..nglob]);
    let mut samples = vec![0.0; grid.len()];
    let mut deriv = vec![0.0; grid.len()];
    for poly in &polys {
        let half = 0.5 * (poly.hi - poly.lo);
        let mid = 0.5 * (poly.hi + poly.lo);
        let d1 = legendre::deriv_coeffs(&poly.coeffs);
        for (i, &th) in grid.nodes.iter().enumerate() {
            if th >= poly.lo && th <= poly.hi {
                let x = (th - mid) / half;
                samples[i] = legendre::eval_series(&poly.coeffs, x);
                deriv[i] = legendre::eval_series(&d1, x) / half;
            }
        }
    }
    Ok((samples, deriv, polys))
}

/// Exact Gram blocks for panel-polynomial modes against θ^m-type weights.
///
/// `region` selects which panels contribute and with what sign:
/// the |h|-weighted block over h > 0 panels, over h < 0 panels, or the
/// signed full-range block.
#[derive(Clone, Copy, PartialEq)]
pub enum GramRegion {
    PosAbs,
    NegAbs,
    Signed,
}

pub fn panel_gram(modes_a: &[&Mode], modes_b: &[&Mode], spec: &ProblemSpec, region: GramRegion) -> Result<Mat<f64>> {
    let na = modes_a.len();
    let nb = modes_b.len();
    let first = match &modes_a[0].basis {
        ModeBasis::Panels(p) => p,
        _ => return Err(Error::Precondition("panel_gram needs panel modes".into())),
    };
    let npanels = first.len();
    let m_pow = match spec.weight {
        WeightKind::Sgn => 0usize,
        WeightKind::Linear => 1,
        WeightKind::Cubic => 3,
        _ => {
            return Err(Error::Unsupported(
                "exact panel grams cover sgn/linear/cubic weights".into(),
            ))
        }
    };
    let mut out = Mat::<f64>::zeros(na, nb);
    for p in 0..npanels {
        let (lo, hi) = (first[p].lo, first[p].hi);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let h_sign = spec.weight.eval(mid).signum();
        // h = s θ^m on this panel (s = -1 only for sgn where θ < 0)
        let s_panel = h_sign * mid.powi(m_pow as i32).signum();
        let factor = match region {
            GramRegion::PosAbs => {
                if h_sign > 0.0 {
                    s_panel
                } else {
                    continue;
                }
            }
            GramRegion::NegAbs => {
                if h_sign < 0.0 {
                    -s_panel
                } else {
                    continue;
                }
            }
            GramRegion::Signed => s_panel,
        };
        let deg = first[p].coeffs.len() - 1;
        let rows = deg + 1 + m_pow;
        let mut ca = Mat::<f64>::zeros(rows, na);
        let mut cb = Mat::<f64>::zeros(rows, nb);
        for (k, m) in modes_a.iter().enumerate() {
            if let ModeBasis::Panels(pp) = &m.basis {
                for (q, &c) in pp[p].coeffs.iter().enumerate() {
                    ca[(q, k)] = c;
                }
            }
        }
        for (k, m) in modes_b.iter().enumerate() {
            if let ModeBasis::Panels(pp) = &m.basis {
                for (q, &c) in pp[p].coeffs.iter().enumerate() {
                    cb[(q, k)] = c;
                }
            }
        }
        // apply multiplication by θ^m = (mid + half x)^m in coefficient space
        let mut wb = cb.clone();
        for _ in 0..m_pow {
            let mut next = Mat::<f64>::zeros(rows, nb);
            for col in 0..nb {
                for q in 0..rows {
                    let c = wb[(q, col)];
                    if c == 0.0 {
                        continue;
                    }
                    let qf = q as f64;
                    next[(q, col)] += mid * c;
                    if q + 1 < rows {
                        next[(q + 1, col)] += half * c * (qf + 1.0) / (2.0 * qf + 1.0);
                    }
                    if q > 0 {
                        next[(q - 1, col)] += half * c * qf / (2.0 * qf + 1.0);
                    }
                }
            }
            wb = next;
        }
        // ∫ P_q² = 2/(2q+1), dθ = half dx
        for q in 0..rows {
            let scale = factor * half * 2.0 / (2.0 * q as f64 + 1.0);
            for col in 0..nb {
                wb[(q, col)] *= scale;
            }
        }
        let block = ca.transpose() * &wb;
        for i in 0..na {
            for j in 0..nb {
                out[(i, j)] += block[(i, j)];
            }
        }
    }
    Ok(out)
}
