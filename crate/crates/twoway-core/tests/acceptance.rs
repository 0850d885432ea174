//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//!
//! Every tolerance is pinned in code. Sub-checks that the source material
//! itself contradicts (see the repository notes) are still asserted as
//! stated and fail with the measured value printed.

use std::f64::consts::PI;
use std::sync::OnceLock;
use twoway_core::norms::{self, LMode};
use twoway_core::operators::{Framework, OperatorSet};
use twoway_core::periodic;
use twoway_core::quad::{build_grid, BoundaryData, ProblemSpec, Quadrature};
use twoway_core::solver;
use twoway_core::spectral::{self, solve_spectrum, Spectrum};

struct Check {
    label: String,
    ok: bool,
}

fn check(label: impl Into<String>, ok: bool) -> Check {
    Check {
        label: label.into(),
        ok,
    }
}

fn report(number: usize, title: &str, checks: &[Check]) {
    let ok = checks.iter().all(|c| c.ok);
    println!(
        "criterion {number:2} [{}] {title}",
        if ok { "PASS" } else { "FAIL" }
    );
    for c in checks {
        println!("      [{}] {}", if c.ok { " ok " } else { "FAIL" }, c.label);
    }
    assert!(ok, "criterion {number} failed; see printed sub-checks");
}

/// Shared channel spectrum (periodic cos, L = 1, N = 64 per sign).
fn channel64() -> &'static (ProblemSpec, Quadrature, Spectrum) {
    static CELL: OnceLock<(ProblemSpec, Quadrature, Spectrum)> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = ProblemSpec::periodic_cos(1.0, 1.0, 2.0);
        let grid = build_grid(&spec, 2048).unwrap();
        let spectrum = solve_spectrum(&spec, &grid, 64).unwrap();
        (spec, grid, spectrum)
    })
}

#[test]
fn criterion_01_p_norm() {
    let (spec, grid, spectrum) = channel64();
    let mut checks = vec![];
    let analytic = 4.0 * 6.0f64.sqrt() / (3.0 * PI);
    for length in [0.5, 1.0, 5.0] {
        let pa = norms::p_norm_analytic_periodic(length);
        checks.push(check(
            format!("analytic ‖P‖(L={length}) = {:.6} vs 4√6/(3π) ± 1e-4", pa.value),
            (pa.value - analytic).abs() < 1e-4 && (pa.value - 1.0395).abs() < 1e-4,
        ));
    }
    let ops = OperatorSet::assemble(spec, grid, spectrum, Framework::Extended).unwrap();
    let numeric = norms::p_norm_numeric(&ops, grid).unwrap();
    checks.push(check(
        format!("numeric maximization {numeric:.6} vs analytic ± 1e-3"),
        (numeric - analytic).abs() < 1e-3,
    ));
    report(1, "‖P‖ analytic = 1.0395 and numeric agreement", &checks);
}

#[test]
fn criterion_02_spectrum() {
    let (_, grid, spectrum) = channel64();
    let mut checks = vec![];
    let inv_l1 = 1.0 / spectrum.lambda(1);
    checks.push(check(
        format!("1/λ₁ = {inv_l1:.5} vs 0.094 ± 0.002"),
        (inv_l1 - 0.094).abs() <= 0.002,
    ));
    let mut worst_sym = 0.0f64;
    for j in 1..=32i32 {
        let vp = &spectrum.mode(j).basis;
        let vm = &spectrum.mode(-j).basis;
        for &th in grid.nodes.iter().step_by(17) {
            worst_sym = worst_sym.max((vp.eval(th + PI) - vm.eval(th)).abs());
        }
    }
    checks.push(check(
        format!("shift symmetry v_j(θ+π) = v_(-j)(θ): worst {worst_sym:.2e} ≤ 1e-6"),
        worst_sym <= 1e-6,
    ));
    let mut worst_bi = 0.0f64;
    for j in (-32i32..=32).filter(|&j| j != 0) {
        for k in (-32i32..=32).filter(|&k| k != 0) {
            let ip = grid.inner_signed(&spectrum.mode(j).samples, &spectrum.mode(k).samples)
                * spectrum.lambda(j).signum();
            let want = if j == k { 1.0 } else { 0.0 };
            worst_bi = worst_bi.max((ip - want).abs());
        }
    }
    checks.push(check(
        format!("biorthogonality |j|,|k| ≤ 32: worst {worst_bi:.2e} ≤ 1e-6"),
        worst_bi <= 1e-6,
    ));
    report(2, "channel spectrum: λ₁, symmetry, biorthogonality", &checks);
}

#[test]
fn criterion_03_coefficient_constants() {
    let (_, grid, spectrum) = channel64();
    let mut checks = vec![];
    let s = periodic::series_coefficients(spectrum, grid, 30.0, 1.0, 2.0, 2).unwrap();
    checks.push(check(
        format!("𝒜(∞) = {:.5} vs 0.070 ± 0.002", s.a_l),
        (s.a_l - 0.070).abs() <= 0.002,
    ));
    checks.push(check(
        format!("ℬ(∞) = {:.5} vs 0.035 ± 0.002", s.b_l),
        (s.b_l - 0.035).abs() <= 0.002,
    ));
    let la = periodic::large_l_approx(spectrum, grid, 30.0).unwrap();
    checks.push(check(
        format!("regenerated A₀ = {:.5} vs 0.0699 ± 0.003", la.a0_regen),
        (la.a0_regen - 0.0699).abs() <= 0.003,
    ));
    checks.push(check(
        format!("regenerated α₁ = X₋₁² = {:.5} vs 0.0446 ± 0.003", la.alpha1_regen),
        (la.alpha1_regen - 0.0446).abs() <= 0.003,
    ));
    checks.push(check(
        format!("regenerated B₀ = {:.5} vs 0.0349 ± 0.003", la.b0_regen),
        (la.b0_regen - 0.0349).abs() <= 0.003,
    ));
    // the published 0.016 keeps only one of the two e^{-λ₁L} sources; the
    // regenerated coefficient is ≈ 0.032 (finite-difference verified)
    checks.push(check(
        format!("regenerated β₁ = {:.5} vs 0.016 ± 0.003", la.beta1_regen),
        (la.beta1_regen - 0.016).abs() <= 0.003,
    ));
    report(3, "𝒜/ℬ constants and one-exponential forms", &checks);
}

#[test]
fn criterion_04_transport_formulas() {
    let (_, grid, spectrum) = channel64();
    let mut checks = vec![];
    let s = periodic::series_coefficients(spectrum, grid, 30.0, 1.0, 2.0, 2).unwrap();
    let (a0, b0) = (s.a_l, s.b_l);
    // order-2 closed form: d·L/Δρ = (1-𝒜+ℬ)u + (𝒜-ℬ-𝒜²)u² + 𝒜²u³
    let du = [1.0 - a0 + b0, a0 - b0 - a0 * a0, a0 * a0];
    let targets = [0.97, 0.04, -0.005];
    let tols = [0.01, 0.01, 0.005];
    for i in 0..3 {
        checks.push(check(
            format!(
                "d-poly u^{} coefficient {:.4} vs {} ± {}",
                i + 1,
                du[i],
                targets[i],
                tols[i]
            ),
            (du[i] - targets[i]).abs() <= tols[i],
        ));
    }
    // c ≈ (ρ₁+ρ₂)/2 - [(1-𝒜)/2] u Δρ - [𝒜/2] u² Δρ
    let cu = [(1.0 - a0) / 2.0, a0 / 2.0];
    for (i, target) in [(0usize, 0.47), (1, 0.035)] {
        checks.push(check(
            format!("c-poly u^{} coefficient {:.4} vs {target} ± 0.01", i + 1, cu[i]),
            (cu[i] - target).abs() <= 0.01,
        ));
    }
    let fit = periodic::diffusivity_estimate(&[20.0, 50.0, 100.0], 1.0, 24, 1024).unwrap();
    checks.push(check(
        format!("diffusivity over L ∈ {{20,50,100}}: {:.4} vs π ± 5%", fit.d),
        (fit.d - PI).abs() <= 0.05 * PI,
    ));
    report(4, "large-L transport coefficients and diffusivity", &checks);
}

#[test]
fn criterion_05_lambda_r_law() {
    let mut checks = vec![];
    let mut cubic_consts = vec![];
    let mut shape_ratios = vec![];
    for &r in &[0.05f64, 0.1, 0.2] {
        let spec = ProblemSpec::periodic_cos_r(r, 1.0, 1.0, 2.0);
        let grid = build_grid(&spec, 1024).unwrap();
        let spectrum = solve_spectrum(&spec, &grid, 8).unwrap();
        let (lam, v_r) = periodic::lambda_r(&spectrum, &grid).unwrap();
        cubic_consts.push((lam - 2.0 * r).abs() / (r * r * r));
        let dev: Vec<f64> = (0..grid.len())
            .map(|i| v_r[i] - 1.0 - 2.0 * r * grid.nodes[i].cos())
            .collect();
        shape_ratios.push(grid.norm_abs_h(&dev) / (r * r));
    }
    // single constant C = 5 covers all three cubic remainders
    let cmax = cubic_consts.iter().cloned().fold(0.0f64, f64::max);
    checks.push(check(
        format!("|λ_R - 2r|/r³ = {cubic_consts:.3?} all ≤ C = 5"),
        cmax <= 5.0,
    ));
    let smax = shape_ratios.iter().cloned().fold(0.0f64, f64::max);
    let smin = shape_ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    checks.push(check(
        format!("‖v_R - 1 - 2r cos θ‖/r² = {shape_ratios:.3?} consistent within 3x"),
        smax / smin <= 3.0,
    ));
    report(5, "λ_R = 2r + O(r³) and the v_R shape", &checks);
}

#[test]
fn criterion_06_norm_diagnostics() {
    let mut checks = vec![];
    let n_values = [25usize, 35, 50, 70, 100, 140, 200, 280, 400];
    let mut results: Vec<(&str, f64, Vec<f64>)> = vec![];
    for (label, spec, table_a0) in [
        ("sgn", ProblemSpec::step(1.0), 5.33),
        ("linear", ProblemSpec::linear(1.0), 0.916),
        ("cos", ProblemSpec::periodic_cos(1.0, 1.0, 2.0), 0.884),
        ("cubic", ProblemSpec::cubic(1.0), 0.187),
    ] {
        let grid = build_grid(&spec, 2048).unwrap();
        let spectrum = solve_spectrum(&spec, &grid, 400).unwrap();
        let fw = solver::auto_framework(&spec);
        let ops = OperatorSet::assemble(&spec, &grid, &spectrum, fw).unwrap();
        let est = norms::wln_sweep(&ops, &n_values, LMode::DropTranscendental).unwrap();
        let monotone = est.norms_squared.windows(2).all(|w| w[1] >= w[0] - 1e-12);
        checks.push(check(format!("{label}: ‖W‖² monotone in N"), monotone));
        results.push((label, table_a0, est.norms_squared));
    }
    // ordering at N = 100 (index 4)
    let at100: Vec<(&str, f64)> = results.iter().map(|(l, _, v)| (*l, v[4])).collect();
    let get = |name: &str| at100.iter().find(|(l, _)| *l == name).unwrap().1;
    checks.push(check(
        format!(
            "ordering at N = 100: sgn {:.3} > linear {:.3} ≥ cos {:.3} > cubic {:.3}",
            get("sgn"),
            get("linear"),
            get("cos"),
            get("cubic")
        ),
        get("sgn") > get("linear") && get("linear") >= get("cos") && get("cos") > get("cubic"),
    ));
    let cos_max = results
        .iter()
        .find(|(l, _, _)| *l == "cos")
        .unwrap()
        .2
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    checks.push(check(
        format!("periodic cos values all < 0.884 (max {cos_max:.4})"),
        cos_max < 0.884,
    ));
    // power-law asymptotes on the N ≥ 50 window of the 25..400 sweep
    for (label, table_a0, data) in &results {
        let window: Vec<usize> = n_values.iter().copied().filter(|&n| n >= 50).collect();
        let wdata: Vec<f64> = n_values
            .iter()
            .zip(data)
            .filter(|(n, _)| **n >= 50)
            .map(|(_, v)| *v)
            .collect();
        let fit = norms::powerlaw_fit(&window, &wdata).unwrap();
        checks.push(check(
            format!("{label}: A₀ = {:.4} vs {table_a0} ± 0.1 (desk-scale)", fit.a0),
            (fit.a0 - table_a0).abs() <= 0.1,
        ));
    }
    report(6, "‖W_{L,N}‖ monotonicity, ordering and desk-scale fits", &checks);
}

#[test]
fn criterion_07_oracle_equivalence() {
    let mut checks = vec![];
    let mut state = 0x1234_5678_9abc_def0u64;
    let mut rnd = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    // preset, framework choice, draw maker
    let presets: Vec<(&str, ProblemSpec, Option<f64>)> = vec![
        ("periodic-cos", ProblemSpec::periodic_cos(1.0, 1.0, 2.0), None),
        (
            "periodic-cos-r",
            ProblemSpec::periodic_cos_r(0.1, 1.0, 1.0, 2.0),
            Some(5.3),
        ),
        ("step", ProblemSpec::step(1.0), None),
        ("linear", ProblemSpec::linear(1.0), None),
        ("cubic", ProblemSpec::cubic(1.0), None),
    ];
    for (name, base, cut) in presets {
        let grid = build_grid(&base, 1024).unwrap();
        let spectrum = solve_spectrum(&base, &grid, 32).unwrap();
        let fw = match cut {
            Some(lambda_cut) => Framework::Thresholded { lambda_cut },
            None => solver::auto_framework(&base),
        };
        let ops = OperatorSet::assemble(&base, &grid, &spectrum, fw).unwrap();
        let contraction = norms::pn_wln_norm(&ops, &grid).unwrap();
        if contraction >= 0.9 {
            checks.push(check(
                format!("{name}: ‖P_N W_L,N‖ = {contraction:.3} ≥ 0.9, excluded from the equivalence check"),
                true,
            ));
            continue;
        }
        let mut worst_total = 0.0f64;
        for _ in 0..5 {
            let spec = base.clone().with_boundary(match base.bc {
                twoway_core::quad::Bc::Periodic => BoundaryData::PiecewiseConst {
                    rho_pos: 0.5 + 2.0 * rnd(),
                    rho_neg: 0.5 + 2.0 * rnd(),
                },
                _ => BoundaryData::Polynomial {
                    coeffs: vec![rnd() * 2.0 - 1.0, rnd() * 2.0 - 1.0, rnd() * 2.0 - 1.0],
                    wall_factor: true,
                },
            });
            let sol = solver::neumann_solve(&spec, &grid, &spectrum, &ops, 1e-12, 300).unwrap();
            assert!(sol.converged, "{name}: Neumann solve did not converge");
            let oracle = solver::direct_solve(&spec, &spectrum, &ops, 4).unwrap();
            let gap_a = sol
                .a
                .iter()
                .zip(&oracle.a)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            let total = (sol.c - oracle.c).abs() + (sol.d - oracle.d).abs() + gap_a;
            worst_total = worst_total.max(total);
        }
        checks.push(check(
            format!(
                "{name}: ‖P_N W_L,N‖ = {contraction:.3}, worst |Δc|+|Δd|+max|Δa| = {worst_total:.2e} < 1e-5 over 5 draws"
            ),
            worst_total < 1e-5,
        ));
    }
    report(7, "Neumann vs least-squares oracle at N = 32", &checks);
}

#[test]
fn criterion_08_identity_suite() {
    let mut checks = vec![];
    // the half-range identity on 100 seeded random coefficient vectors
    let (spec, grid, spectrum) = channel64();
    let ops = OperatorSet::assemble(spec, grid, spectrum, Framework::Extended).unwrap();
    let mut state = 0x51ed2701u64;
    let mut rnd = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let u: Vec<f64> = (0..128).map(|_| rnd()).collect();
        let (lhs, rhs) = norms::identity_check(&ops, &u);
        let scale: f64 = u.iter().map(|&a| a * a).sum();
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    checks.push(check(
        format!("2‖Wu‖² identity on 100 seeded vectors: worst rel {worst:.2e} < 1e-8"),
        worst < 1e-8,
    ));
    for (label, spec, m) in [
        ("linear", ProblemSpec::linear(1.0), 1.0f64),
        ("cubic", ProblemSpec::cubic(1.0), 3.0),
    ] {
        let grid = build_grid(&spec, 1536).unwrap();
        let spectrum = solve_spectrum(&spec, &grid, 100).unwrap();
        let mut worst_pair = 0.0f64;
        for (j, k) in [(1, -1), (1, -2), (2, -1)] {
            let (lhs, rhs) =
                spectral::wronskian_overlap_check(&spectrum, &grid, &spec, j, k).unwrap();
            worst_pair = worst_pair.max((lhs - rhs).abs() / rhs.abs());
        }
        checks.push(check(
            format!("{label}: Wronskian identity worst rel {worst_pair:.2e} < 1e-3"),
            worst_pair < 1e-3,
        ));
        let slope = spectral::overlap_decay_slope(&spectrum, &grid, 1).unwrap();
        let want = -(3.0 * m + 4.0) / (4.0 * m + 8.0);
        checks.push(check(
            format!("{label}: overlap decay slope {slope:.3} vs {want:.3} ± 0.1"),
            (slope - want).abs() <= 0.1,
        ));
    }
    report(8, "half-range identities and overlap scaling", &checks);
}

#[test]
fn criterion_09_divergence_and_restoration() {
    let mut checks = vec![];
    let r = 0.02;
    let length = 20.0;
    let spec = ProblemSpec::periodic_cos_r(r, length, 1.0, 2.0);
    let grid = build_grid(&spec, 1024).unwrap();
    let spectrum = solve_spectrum(&spec, &grid, 12).unwrap();
    let bound = norms::wlp_lower_bound(&spectrum, &grid, length).unwrap();
    checks.push(check(
        format!("lower bound on ‖W_L P‖ = {bound:.3} > 1 (divergence flagged)"),
        bound > 1.0,
    ));
    let ops = OperatorSet::assemble(&spec, &grid, &spectrum, Framework::Extended).unwrap();
    let plain = solver::neumann_solve(&spec, &grid, &spectrum, &ops, 1e-10, 60).unwrap();
    checks.push(check(
        format!(
            "plain projection: converged = {} (growth ratio {:.2})",
            plain.converged,
            plain.observed_ratio.unwrap_or(f64::NAN)
        ),
        !plain.converged,
    ));
    let opst = OperatorSet::assemble(
        &spec,
        &grid,
        &spectrum,
        Framework::Thresholded { lambda_cut: 5.3 },
    )
    .unwrap();
    let restored = solver::neumann_solve(&spec, &grid, &spectrum, &opst, 1e-10, 200).unwrap();
    checks.push(check(
        format!(
            "Λ-threshold scheme: converged = {} in {} iterations",
            restored.converged, restored.iterations
        ),
        restored.converged,
    ));
    report(9, "divergence at small r and Λ-threshold restoration", &checks);
}

#[test]
fn criterion_10_trivial_physical() {
    let mut checks = vec![];
    // uniform reservoirs give f ≡ ρ exactly
    let spec0 = ProblemSpec::periodic_cos(1.0, 1.4, 1.4);
    let grid0 = build_grid(&spec0, 1024).unwrap();
    let spectrum0 = solve_spectrum(&spec0, &grid0, 16).unwrap();
    let ops0 = OperatorSet::assemble(&spec0, &grid0, &spectrum0, Framework::Extended).unwrap();
    let sol0 = solver::neumann_solve(&spec0, &grid0, &spectrum0, &ops0, 1e-12, 100).unwrap();
    let exact = (sol0.c - 1.4).abs() < 1e-10
        && sol0.d.abs() < 1e-12
        && sol0.a.iter().all(|&a| a.abs() < 1e-10);
    checks.push(check(
        format!("ρ₁ = ρ₂: c = {:.12}, d = {:.1e}, max|a| = {:.1e}", sol0.c, sol0.d,
            sol0.a.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()))),
        exact,
    ));
    // flux x-independence on the Fig. 4 configuration
    let (spec, grid, spectrum) = channel64();
    let ops = OperatorSet::assemble(spec, grid, spectrum, Framework::Extended).unwrap();
    let sol = solver::neumann_solve(spec, grid, spectrum, &ops, 1e-12, 200).unwrap();
    let f_closed = solver::flux(&sol, spectrum, grid).unwrap();
    let mut worst = 0.0f64;
    for &x in &[0.1, 0.5, 0.9] {
        let fq = solver::flux_at(&sol, spectrum, grid, spec.length, x).unwrap();
        worst = worst.max((fq - f_closed).abs());
    }
    checks.push(check(
        format!("flux x-independence: worst deviation {worst:.2e} ≤ 1e-8"),
        worst <= 1e-8,
    ));
    // boundary residual drop from order 0 to order 2
    let (r0i, r0o) = solver::boundary_residual_at_order(&sol, spec, grid, spectrum, 0).unwrap();
    let (r2i, r2o) = solver::boundary_residual_at_order(&sol, spec, grid, spectrum, 2).unwrap();
    let r0 = (r0i * r0i + r0o * r0o).sqrt();
    let r2 = (r2i * r2i + r2o * r2o).sqrt();
    let contraction = norms::pn_wln_norm(&ops, grid).unwrap();
    checks.push(check(
        format!(
            "boundary residual order 0 → 2: {r0:.4} → {r2:.4} (ratio {:.2}x, ‖P_N W‖ = {contraction:.3}) ≥ 5x",
            r0 / r2
        ),
        r2 * 5.0 <= r0,
    ));
    report(10, "trivial data, flux conservation, residual decay", &checks);
}
