//! Problem definition, composite quadrature grids and the three inner
//! products:
//!
//! ```text
//!   <u,v>     = ∫ u v |h| dθ          (natural inner product)
//!   <u,v>_h   = ∫ u v h dθ           (signed weight)
//!   <u,v>_A   = ∫ p u' v' dθ         (energy inner product)
//! ```
//!
//! Grids are composite Gauss-Legendre rules whose panels break at every sign
//! change of `h`, so the kink in `|h|` never crosses a panel and nodes never
//! land on a turning point.

use crate::legendre;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// The sign-changing weight h(θ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum WeightKind {
    /// cos θ on a periodic domain
    Cos,
    /// cos θ - r, 0 < r < 1
    CosMinusR { r: f64 },
    /// sgn θ
    Sgn,
    /// θ
    Linear,
    /// θ³
    Cubic,
    /// piecewise-linear interpolation of samples
    Tabulated { theta: Vec<f64>, h: Vec<f64> },
}

impl WeightKind {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            WeightKind::Cos => theta.cos(),
            WeightKind::CosMinusR { r } => theta.cos() - r,
            WeightKind::Sgn => {
                if theta > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            WeightKind::Linear => theta,
            WeightKind::Cubic => theta * theta * theta,
            WeightKind::Tabulated { theta: ts, h } => interp(ts, h, theta),
        }
    }

    /// Zeros of h in the open interval (a, b).
    pub fn turning_points(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            WeightKind::Cos => periodic_zeros(a, b, &[-PI / 2.0, PI / 2.0]),
            WeightKind::CosMinusR { r } => {
                let t = r.acos();
                periodic_zeros(a, b, &[-t, t])
            }
            WeightKind::Sgn | WeightKind::Linear | WeightKind::Cubic => {
                if a < 0.0 && 0.0 < b {
                    vec![0.0]
                } else {
                    vec![]
                }
            }
            WeightKind::Tabulated { theta, h } => {
                let mut out = vec![];
                for i in 0..theta.len().saturating_sub(1) {
                    if h[i] == 0.0 {
                        if theta[i] > a && theta[i] < b {
                            out.push(theta[i]);
                        }
                    } else if h[i] * h[i + 1] < 0.0 {
                        // linear interpolant crossing
                        let t = theta[i] + (theta[i + 1] - theta[i]) * h[i] / (h[i] - h[i + 1]);
                        if t > a && t < b {
                            out.push(t);
                        }
                    }
                }
                out
            }
        }
    }

    /// Algebraic multiplicity of the turning point, where it is known.
    pub fn turning_multiplicity(&self) -> Option<u32> {
        match self {
            WeightKind::Cos | WeightKind::CosMinusR { .. } | WeightKind::Linear => Some(1),
            WeightKind::Cubic => Some(3),
            WeightKind::Sgn => Some(0),
            WeightKind::Tabulated { .. } => None,
        }
    }
}

fn periodic_zeros(a: f64, b: f64, base: &[f64]) -> Vec<f64> {
    let mut out = vec![];
    for &z in base {
        let mut t = z + 2.0 * PI * ((a - z) / (2.0 * PI)).floor();
        while t < b {
            if t > a {
                out.push(t);
            }
            t += 2.0 * PI;
        }
    }
    out.sort_by(|x, y| x.partial_cmp(y).unwrap());
    out
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = xs.partition_point(|&t| t < x).max(1) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] * (1.0 - t) + ys[i + 1] * t
}

/// Sturm-Liouville coefficient p(θ) > 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Coefficient {
    One,
    Tabulated { theta: Vec<f64>, p: Vec<f64> },
}

impl Coefficient {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            Coefficient::One => 1.0,
            Coefficient::Tabulated { theta: ts, p } => interp(ts, p, theta),
        }
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Coefficient::One)
    }
}

/// Boundary conditions of the θ operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bc {
    Periodic,
    Dirichlet,
    Neumann,
    /// cos α v(a) + sin α v'(a) = 0 and likewise with β at b
    Separated {
        alpha: f64,
        beta: f64,
    },
}

/// Half-range boundary data for the slab.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BoundaryData {
    /// ρ₊ where h > 0 (incoming at x = 0), ρ₋ where h < 0 (incoming at x = L)
    PiecewiseConst { rho_pos: f64, rho_neg: f64 },
    /// sampled w(θ), linearly interpolated
    Tabulated { theta: Vec<f64>, w: Vec<f64> },
    /// smooth data a0 + Σ c_k cos(kθ) + Σ s_k sin(kθ)
    Harmonics { a0: f64, cos: Vec<f64>, sin: Vec<f64> },
    /// wall-compatible smooth data (1 - θ²) Σ c_k θ^k for absorbing walls
    /// on (-1, 1)
    Polynomial { coeffs: Vec<f64>, wall_factor: bool },
}

impl BoundaryData {
    pub fn eval(&self, theta: f64, h: f64) -> f64 {
        match self {
            BoundaryData::PiecewiseConst { rho_pos, rho_neg } => {
                if h > 0.0 {
                    *rho_pos
                } else {
                    *rho_neg
                }
            }
            BoundaryData::Tabulated { theta: ts, w } => interp(ts, w, theta),
            BoundaryData::Harmonics { a0, cos, sin } => {
                let mut v = *a0;
                for (k, &c) in cos.iter().enumerate() {
                    v += c * ((k + 1) as f64 * theta).cos();
                }
                for (k, &s) in sin.iter().enumerate() {
                    v += s * ((k + 1) as f64 * theta).sin();
                }
                v
            }
            BoundaryData::Polynomial {
                coeffs,
                wall_factor,
            } => {
                let mut v = 0.0;
                let mut p = 1.0;
                for &c in coeffs {
                    v += c * p;
                    p *= theta;
                }
                if *wall_factor {
                    v *= 1.0 - theta * theta;
                }
                v
            }
        }
    }
}

/// A two-way diffusion problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub a: f64,
    pub b: f64,
    pub weight: WeightKind,
    pub p: Coefficient,
    pub bc: Bc,
    /// slab length L
    pub length: f64,
    pub boundary: BoundaryData,
    /// For the periodic cosine family with reflection-symmetric data the odd
    /// Fourier sector decouples and carries no coefficients; restricting to
    /// the even sector reproduces the channel problem's mode numbering.
    pub even_sector_only: bool,
}

impl ProblemSpec {
    /// Periodic cos θ on (-π, π) with uniform reservoirs.
    pub fn periodic_cos(length: f64, rho_pos: f64, rho_neg: f64) -> Self {
        ProblemSpec {
            a: -PI,
            b: PI,
            weight: WeightKind::Cos,
            p: Coefficient::One,
            bc: Bc::Periodic,
            length,
            boundary: BoundaryData::PiecewiseConst { rho_pos, rho_neg },
            even_sector_only: true,
        }
    }

    /// Periodic cos θ - r on (-π, π) with uniform reservoirs.
    pub fn periodic_cos_r(r: f64, length: f64, rho_pos: f64, rho_neg: f64) -> Self {
        ProblemSpec {
            weight: WeightKind::CosMinusR { r },
            ..ProblemSpec::periodic_cos(length, rho_pos, rho_neg)
        }
    }

    fn absorbing(weight: WeightKind, length: f64) -> Self {
        ProblemSpec {
            a: -1.0,
            b: 1.0,
            weight,
            p: Coefficient::One,
            bc: Bc::Dirichlet,
            length,
            boundary: BoundaryData::PiecewiseConst {
                rho_pos: 1.0,
                rho_neg: 2.0,
            },
            even_sector_only: false,
        }
    }

    /// h = sgn θ on (-1, 1) with absorbing walls.
    pub fn step(length: f64) -> Self {
        Self::absorbing(WeightKind::Sgn, length)
    }

    /// h = θ on (-1, 1) with absorbing walls.
    pub fn linear(length: f64) -> Self {
        Self::absorbing(WeightKind::Linear, length)
    }

    /// h = θ³ on (-1, 1) with absorbing walls.
    pub fn cubic(length: f64) -> Self {
        Self::absorbing(WeightKind::Cubic, length)
    }

    pub fn with_boundary(mut self, boundary: BoundaryData) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a < self.b) {
            return Err(Error::InvalidSpec(format!(
                "domain endpoints must satisfy a < b, got ({}, {})",
                self.a, self.b
            )));
        }
        if !(self.length > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "slab length must be positive, got {}",
                self.length
            )));
        }
        if self.weight.turning_points(self.a, self.b).is_empty() {
            return Err(Error::InvalidSpec(
                "weight h has no sign change in (a, b); problem is not two-way".into(),
            ));
        }
        if let Coefficient::Tabulated { p, .. } = &self.p {
            if p.iter().any(|&v| v <= 0.0) {
                return Err(Error::InvalidSpec("coefficient p must be positive".into()));
            }
        }
        if let WeightKind::CosMinusR { r } = self.weight {
            if !(0.0 < r && r < 1.0) {
                return Err(Error::InvalidSpec(format!("need 0 < r < 1, got {r}")));
            }
        }
        Ok(())
    }

    /// True when the configuration admits the constant zero mode.
    pub fn has_zero_mode(&self) -> bool {
        matches!(self.bc, Bc::Periodic | Bc::Neumann)
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub lo: f64,
    pub hi: f64,
    pub start: usize,
    pub len: usize,
}

/// Composite Gauss-Legendre grid with cached weight samples and sign masks.
#[derive(Debug)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub h: Vec<f64>,
    pub p: Vec<f64>,
    pub panels: Vec<Panel>,
    /// indices where h > 0
    pub pos_idx: Vec<usize>,
    /// indices where h < 0
    pub neg_idx: Vec<usize>,
    analysis: OnceLock<Vec<legendre::Analysis>>,
}

impl Clone for Quadrature {
    fn clone(&self) -> Self {
        Quadrature {
            nodes: self.nodes.clone(),
            weights: self.weights.clone(),
            h: self.h.clone(),
            p: self.p.clone(),
            panels: self.panels.clone(),
            pos_idx: self.pos_idx.clone(),
            neg_idx: self.neg_idx.clone(),
            analysis: OnceLock::new(),
        }
    }
}

/// Build the composite grid for a problem. Panels break at every turning
/// point; `n_nodes` is the total node budget (at least 16).
pub fn build_grid(spec: &ProblemSpec, n_nodes: usize) -> Result<Quadrature> {
    spec.validate()?;
    if n_nodes < 16 {
        return Err(Error::Grid(format!("n_nodes must be at least 16, got {n_nodes}")));
    }
    let tps = spec.weight.turning_points(spec.a, spec.b);
    let mut edges = Vec::with_capacity(tps.len() + 2);
    edges.push(spec.a);
    edges.extend_from_slice(&tps);
    edges.push(spec.b);

    let n_panels = edges.len() - 1;
    let min_per_panel = 8usize;
    if n_nodes < min_per_panel * n_panels {
        return Err(Error::Grid(format!(
            "n_nodes = {n_nodes} too small to resolve {n_panels} panels"
        )));
    }
    let total_width = spec.b - spec.a;
    let mut counts: Vec<usize> = edges
        .windows(2)
        .map(|e| {
            let frac = (e[1] - e[0]) / total_width;
            ((n_nodes as f64 * frac).round() as usize).max(min_per_panel)
        })
        .collect();
    // settle the total exactly on n_nodes
    loop {
        let sum: usize = counts.iter().sum();
        if sum == n_nodes {
            break;
        }
        let widest = (0..n_panels)
            .max_by(|&i, &j| {
                let wi = (edges[i + 1] - edges[i]) / counts[i] as f64;
                let wj = (edges[j + 1] - edges[j]) / counts[j] as f64;
                wi.partial_cmp(&wj).unwrap()
            })
            .unwrap();
        if sum < n_nodes {
            counts[widest] += 1;
        } else {
            let densest = (0..n_panels)
                .filter(|&i| counts[i] > min_per_panel)
                .min_by(|&i, &j| {
                    let wi = (edges[i + 1] - edges[i]) / counts[i] as f64;
                    let wj = (edges[j + 1] - edges[j]) / counts[j] as f64;
                    wi.partial_cmp(&wj).unwrap()
                })
                .ok_or_else(|| Error::Grid("cannot shrink panel allocation".into()))?;
            counts[densest] -= 1;
        }
    }

    let mut nodes = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    let mut panels = Vec::with_capacity(n_panels);
    for (k, e) in edges.windows(2).enumerate() {
        let (lo, hi) = (e[0], e[1]);
        let (x, w) = legendre::gauss(counts[k]);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let start = nodes.len();
        for i in 0..counts[k] {
            nodes.push(mid + half * x[i]);
            weights.push(half * w[i]);
        }
        panels.push(Panel {
            lo,
            hi,
            start,
            len: counts[k],
        });
    }

    let h: Vec<f64> = nodes.iter().map(|&t| spec.weight.eval(t)).collect();
    let p: Vec<f64> = nodes.iter().map(|&t| spec.p.eval(t)).collect();
    let mut pos_idx = vec![];
    let mut neg_idx = vec![];
    for (i, &hi) in h.iter().enumerate() {
        if hi > 0.0 {
            pos_idx.push(i);
        } else if hi < 0.0 {
            neg_idx.push(i);
        } else {
            return Err(Error::Grid(format!("node {i} sits on a turning point")));
        }
    }
    Ok(Quadrature {
        nodes,
        weights,
        h,
        p,
        panels,
        pos_idx,
        neg_idx,
        analysis: OnceLock::new(),
    })
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∫ f dθ for node samples f.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(&w, &v)| w * v).sum()
    }

    /// Natural inner product ∫ u v |h| dθ.
    pub fn inner_abs_h(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(u.len(), self.len());
        assert_eq!(v.len(), self.len());
        (0..self.len())
            .map(|i| self.weights[i] * u[i] * v[i] * self.h[i].abs())
            .sum()
    }

    /// Signed inner product ∫ u v h dθ.
    pub fn inner_signed(&self, u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(u.len(), self.len());
        assert_eq!(v.len(), self.len());
        (0..self.len())
            .map(|i| self.weights[i] * u[i] * v[i] * self.h[i])
            .sum()
    }

    /// Energy inner product ∫ p u' v' dθ with per-panel spectral
    /// differentiation of the node samples.
    pub fn inner_a(&self, u: &[f64], v: &[f64]) -> f64 {
        let du = self.differentiate(u);
        let dv = self.differentiate(v);
        (0..self.len())
            .map(|i| self.weights[i] * self.p[i] * du[i] * dv[i])
            .sum()
    }

    /// ‖u‖ in the natural (|h|-weighted) norm.
    pub fn norm_abs_h(&self, u: &[f64]) -> f64 {
        self.inner_abs_h(u, u).max(0.0).sqrt()
    }

    /// Restricted inner products over the h > 0 / h < 0 node sets,
    /// |h|-weighted.
    pub fn inner_abs_h_pos(&self, u: &[f64], v: &[f64]) -> f64 {
        self.pos_idx
            .iter()
            .map(|&i| self.weights[i] * u[i] * v[i] * self.h[i].abs())
            .sum()
    }

    pub fn inner_abs_h_neg(&self, u: &[f64], v: &[f64]) -> f64 {
        self.neg_idx
            .iter()
            .map(|&i| self.weights[i] * u[i] * v[i] * self.h[i].abs())
            .sum()
    }

    fn panel_analysis(&self) -> &Vec<legendre::Analysis> {
        self.analysis.get_or_init(|| {
            self.panels
                .iter()
                .map(|p| {
                    let half = 0.5 * (p.hi - p.lo);
                    let mid = 0.5 * (p.hi + p.lo);
                    let xs: Vec<f64> = self.nodes[p.start..p.start + p.len]
                        .iter()
                        .map(|&t| (t - mid) / half)
                        .collect();
                    let ws: Vec<f64> = self.weights[p.start..p.start + p.len]
                        .iter()
                        .map(|&w| w / half)
                        .collect();
                    legendre::Analysis::new(&xs, &ws, p.len - 1)
                })
                .collect()
        })
    }

    /// d/dθ of node samples, panel by panel through the Legendre
    /// representation. Exact for per-panel polynomials of the node count's
    /// degree; spectrally accurate for smooth samples.
    pub fn differentiate(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.len());
        let analysis = self.panel_analysis();
        let mut out = vec![0.0; self.len()];
        for (k, panel) in self.panels.iter().enumerate() {
            let half = 0.5 * (panel.hi - panel.lo);
            let mid = 0.5 * (panel.hi + panel.lo);
            let seg = &u[panel.start..panel.start + panel.len];
            let mut coeffs = analysis[k].coeffs(seg);
            // discrete-transform noise grows like (2p+1)·ε; trim it before
            // differentiating
            let cmax = coeffs.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
            let trim = 8.0 * f64::EPSILON * panel.len as f64 * cmax;
            for c in coeffs.iter_mut() {
                if c.abs() < trim {
                    *c = 0.0;
                }
            }
            let dc = legendre::deriv_coeffs(&coeffs);
            for i in 0..panel.len {
                let x = (self.nodes[panel.start + i] - mid) / half;
                out[panel.start + i] = legendre::eval_series(&dc, x) / half;
            }
        }
        out
    }

    /// Sample an arbitrary function of θ on the grid.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&t| f(t)).collect()
    }

    /// Sample the boundary data w on the grid.
    pub fn boundary_samples(&self, spec: &ProblemSpec) -> Vec<f64> {
        (0..self.len())
            .map(|i| spec.boundary.eval(self.nodes[i], self.h[i]))
            .collect()
    }
}
