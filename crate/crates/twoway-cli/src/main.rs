//! `twoway` — batch front-end for the two-way diffusion solver.
//!
//! Reads a declarative TOML configuration, runs one computation, and emits
//! plot-ready CSV/JSON. Outputs are deterministic for a given configuration
//! and seed; every file carries the configuration hash in its header.
//!
//! Exit codes: 0 success, 2 solver non-convergence (partial results are
//! still written), 3 invalid configuration.

mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use config::{FileConfig, Overrides, RunConfig};
use output::{fmt, write_json, CsvWriter};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use twoway_core::norms::{self, LMode};
use twoway_core::operators::{Framework, OperatorSet};
use twoway_core::periodic;
use twoway_core::quad::{build_grid, ProblemSpec};
use twoway_core::solver;
use twoway_core::spectral::solve_spectrum;

#[derive(Parser)]
#[command(
    name = "twoway",
    about = "Forward-backward diffusion slab solver and diagnostics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues, residuals and mode samples
    Spectrum(CommonArgs),
    /// Neumann-series solution of the boundary value problem
    Solve(CommonArgs),
    /// ‖W_{L,N}‖² over a range of truncation sizes
    Norms(CommonArgs),
    /// Analytic and numeric ‖P‖ for the periodic channel
    Pnorm(CommonArgs),
    /// Power-law fit A0 - B0 N^{-nu} of the norm data
    Fit(CommonArgs),
    /// Channel series coefficients and flux over slab lengths
    #[command(name = "sweep-L")]
    SweepL(CommonArgs),
    /// λ_R and the divergence lower bound over r
    #[command(name = "sweep-r")]
    SweepR(CommonArgs),
    /// Neumann solution against the least-squares oracle
    #[command(name = "oracle-compare")]
    OracleCompare(CommonArgs),
    /// Small eigenvalue of the cos θ - r problem
    #[command(name = "lambda-r")]
    LambdaR(CommonArgs),
    /// Fick-law diffusivity fit over large slab lengths
    Diffusivity(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// slab length override
    #[arg(long = "L")]
    length: Option<f64>,
    /// weight shift override (periodic-cos-r)
    #[arg(long)]
    r: Option<f64>,
    /// modes per eigenvalue sign
    #[arg(long = "N")]
    n_modes: Option<usize>,
    /// quadrature nodes
    #[arg(long)]
    nodes: Option<usize>,
    /// Neumann increment tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// parallel sweep workers (TWOWAY_JOBS also applies)
    #[arg(long)]
    jobs: Option<usize>,
    /// seed for randomized comparisons
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Spectrum(a) => ("spectrum", a),
        Command::Solve(a) => ("solve", a),
        Command::Norms(a) => ("norms", a),
        Command::Pnorm(a) => ("pnorm", a),
        Command::Fit(a) => ("fit", a),
        Command::SweepL(a) => ("sweep-L", a),
        Command::SweepR(a) => ("sweep-r", a),
        Command::OracleCompare(a) => ("oracle-compare", a),
        Command::LambdaR(a) => ("lambda-r", a),
        Command::Diffusivity(a) => ("diffusivity", a),
    };
    let file_cfg = match &args.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("config error: cannot read {}: {e}", path.display());
                    return ExitCode::from(3);
                }
            };
            match toml::from_str::<FileConfig>(&text) {
                Ok(c) => c,
                Err(e) => {
                    // toml errors carry the line/field diagnostics
                    eprintln!("config error in {}: {e}", path.display());
                    return ExitCode::from(3);
                }
            }
        }
        None => FileConfig::default(),
    };
    let ov = Overrides {
        length: args.length,
        r: args.r,
        n_modes: args.n_modes,
        n_nodes: args.nodes,
        tol: args.tol,
        out: args.out.clone(),
        jobs: args.jobs,
        seed: args.seed,
    };
    let cfg = match RunConfig::resolve(name, file_cfg, ov) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(3);
        }
    };
    match run(&cfg) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn framework_for(cfg: &RunConfig, spec: &ProblemSpec) -> Framework {
    match cfg.lambda_threshold {
        Some(cut) => Framework::Thresholded { lambda_cut: cut },
        None => solver::auto_framework(spec),
    }
}

fn run(cfg: &RunConfig) -> Result<u8, Box<dyn std::error::Error>> {
    std::fs::create_dir_all(&cfg.out)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build_global()
        .ok();
    match cfg.command.as_str() {
        "spectrum" => cmd_spectrum(cfg),
        "solve" => cmd_solve(cfg),
        "norms" => cmd_norms(cfg, false),
        "fit" => cmd_norms(cfg, true),
        "pnorm" => cmd_pnorm(cfg),
        "sweep-L" => cmd_sweep_l(cfg),
        "sweep-r" => cmd_sweep_r(cfg),
        "oracle-compare" => cmd_oracle(cfg),
        "lambda-r" => cmd_lambda_r(cfg),
        "diffusivity" => cmd_diffusivity(cfg),
        other => Err(format!("unknown command {other}").into()),
    }
}

fn cmd_spectrum(cfg: &RunConfig) -> Result<u8, Box<dyn std::error::Error>> {
    let spec = cfg.problem_spec();
    let grid = build_grid(&spec, cfg.n_nodes)?;
    let spectrum = solve_spectrum(&spec, &grid, cfg.n_modes)?;
    let hash = cfg.hash();
    let mut csv = CsvWriter::new(&hash, "j (index), lambda (1/length), residual (relative)");
    let n = spectrum.n_per_sign() as i32;
    for j in (-n..=n).filter(|&j| j != 0) {
        let m = spectrum.mode(j);
        csv.row(&[j.to_string(), fmt(m.lambda), fmt(m.residual)]);
    }
    csv.write(&cfg.out.join("spectrum.csv"))?;
    let mut modes = CsvWriter::new(&hash, "theta (radians), v_j samples for j = -N..-1, 1..N");
    for i in 0..grid.len() {
        let mut row = vec![fmt(grid.nodes[i])];
        for j in (-n..=n).filter(|&j| j != 0) {
            row.push(fmt(spectrum.mode(j).samples[i]));
        }
        modes.row(&row);
    }
    modes.write(&cfg.out.join("modes.csv"))?;
    Ok(0)
}

fn cmd_solve(cfg: &RunConfig) -> Result<u8, Box<dyn std::error::Error>> {
    let spec = cfg.problem_spec();
    let grid = build_grid(&spec, cfg.n_nodes)?;
    let spectrum = solve_spectrum(&spec, &grid, cfg.n_modes)?;
    let fw = framework_for(cfg, &spec);
    let ops = OperatorSet::assemble(&spec, &grid, &spectrum, fw)?;
    let sol = solver::neumann_solve(&spec, &grid, &spectrum, &ops, cfg.tol, cfg.max_iter)?;
    let hash = cfg.hash();
    let a_entries: Vec<serde_json::Value> = (0..sol.a.len())
        .map(|k| {
            let j = spectrum.signed_index(k);
            json!({
                "j": j,
                "lambda": spectrum.lambda(j),
                "a_j": sol.a[k],
            })
        })
        .collect();
    let body = json!({
        "c": sol.c,
        "d": sol.d,
        "a": a_entries,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "observed_ratio": sol.observed_ratio,
    });
    write_json(&cfg.out.join("solution.json"), &hash, &body)?;

    // profile f(x, θ) in long format
    let mut csv = CsvWriter::new(&hash, "x (length), theta (radians), f (density)");
    let stride = (grid.len() / 96).max(1);
    for q in 0..cfg.x_samples {
        let x = cfg.length * q as f64 / (cfg.x_samples.max(2) - 1) as f64;
        let f = solver::evaluate_on_grid(&sol, &spectrum, &grid, spec.length, x)?;
        for i in (0..grid.len()).step_by(stride) {
            csv.row(&[fmt(x), fmt(grid.nodes[i]), fmt(f[i])]);
        }
    }
    csv.write(&cfg.out.join("profile.csv"))?;
    Ok(if sol.converged { 0 } else { 2 })
}

fn l_mode_of(cfg: &RunConfig) -> LMode {
    match cfg.l_mode.as_str() {
        "include" => LMode::IncludeL(cfg.length),
        _ => LMode::DropTranscendental,
    }
}

fn cmd_norms(cfg: &RunConfig, with_fit: bool) -> Result<u8, Box<dyn std::error::Error>> {
    let spec = cfg.problem_spec();
    let nmax = *cfg.n_values.iter().max().unwrap_or(&cfg.n_modes);
    let n_nodes = cfg.n_nodes.max(recommended_nodes(nmax));
    let grid = build_grid(&spec, n_nodes)?;
    let spectrum = solve_spectrum(&spec, &grid, nmax)?;
    let fw = solver::auto_framework(&spec);
    let ops = OperatorSet::assemble(&spec, &grid, &spectrum, fw)?;
    let est = norms::wln_sweep(&ops, &cfg.n_values, l_mode_of(cfg))?;
    let hash = cfg.hash();
    let mut csv = CsvWriter::new(&hash, "N (modes per sign), norm_squared (dimensionless)");
    for (n, v) in est.n_values.iter().zip(&est.norms_squared) {
        csv.row(&[n.to_string(), fmt(*v)]);
    }
    csv.write(&cfg.out.join("norms.csv"))?;
    if with_fit {
        // the smallest truncations drag the asymptote high; fit from N = 50
        // up when enough points remain
        let mut window: Vec<usize> = est.n_values.iter().copied().filter(|&n| n >= 50).collect();
        let mut data: Vec<f64> = est
            .n_values
            .iter()
            .zip(&est.norms_squared)
            .filter(|(n, _)| **n >= 50)
            .map(|(_, v)| *v)
            .collect();
        if window.len() < 5 {
            window = est.n_values.clone();
            data = est.norms_squared.clone();
        }
        let fit = norms::powerlaw_fit(&window, &data)?;
        let body = json!({
            "A0": fit.a0,
            "B0": fit.b0,
            "nu": fit.nu,
            "residual": fit.residual,
            "fit_window": window,
        });
        write_json(&cfg.out.join("fit.json"), &hash, &body)?;
    }
    Ok(0)
}

fn recommended_nodes(n: usize) -> usize {
    (6 * (n + 16)).next_power_of_two().max(1024)
}

fn cmd_pnorm(cfg: &RunConfig) -> Result<u8, Box<dyn std::error::Error>> {
    let spec = cfg.problem_spec();
    let grid = build_grid(&spec, cfg.n_nodes)?;
    let spectrum = solve_spectrum(&spec, &grid, cfg.n_modes)?;
    let ops = OperatorSet::assemble(&spec, &grid, &spectrum, Framework::Extended)?;
    let pa = norms::p_norm_analytic_periodic(cfg.length);
    let numeric = norms::p_norm_numeric(&ops, &grid)?;
    let body = json!({
        "p_norm": pa.value,
        "sigma1": pa.sigma1,
        "sigma2": pa.sigma2,
        "r1": pa.r1,
        "r2": pa.r2,
        "rho_sup": pa.rho_sup,
        "numeric": numeric,
    });
    write_json(&cfg.out.join("pnorm.json"), &cfg.hash(), &body)?;
    Ok(0)
}

fn cmd_sweep_l(cfg: &RunConfig) -> Result<u8, Box<dyn std::error::Error>> {
    use rayon::prelude::*;
    let base = cfg.problem_spec();
    let grid = build_grid(&base, cfg.n_nodes)?;
    let spectrum = solve_spectrum(&base, &grid, cfg.n_modes)?;
    let rows: Vec<Result<(f64, [f64; 5], bool), String>> = cfg
        .l_values
        .par_iter()
        .map(|&length| {
            let mut spec = cfg.problem_spec();
            spec.length = length;
            let series =
                periodic::series_coefficients(&spectrum, &grid, length, cfg.rho_pos, cfg.rho_neg, 2)
                    .map_err(|e| e.to_string())?;
            let ops = OperatorSet::assemble(&spec, &grid, &spectrum, Framework::Extended)
                .map_err(|e| e.to_string())?;
            let sol = solver::neumann_solve(&spec, &grid, &spectrum, &ops, cfg.tol, cfg.max_iter)
                .map_err(|e| e.to_string())?;
            let flux = solver::flux(&sol, &spectrum, &grid).map_err(|e| e.to_string())?;
            Ok((
                length,
                [series.a_l, series.b_l, sol.c, sol.d, flux],
                sol.converged,
            ))
        })
        .collect();
    let hash = cfg.hash();
    let mut csv = CsvWriter::new(
        &hash,
        "L (length), A_L (dimensionless), B_L (dimensionless), c (density), d (density/length), flux (density·length/time-like)",
    );
    let mut all_converged = true;
    for row in rows {
        let (length, vals, conv) = row.map_err(|e| -> Box<dyn std::error::Error> { e.into() })?;
        all_converged &= conv;
        let mut fields = vec![fmt(length)];
        fields.extend(vals.iter().map(|&v| fmt(v)));
        csv.row(&fields);
    }
    csv.write(&cfg.out.join("sweep_L.csv"))?;
    Ok(if all_converged { 0 } else { 2 })
}

fn cmd_sweep_r(cfg: &RunConfig) -> Result<u8, Box<dyn std::error::Error>> {
    use rayon::prelude::*;
    let rows: Vec<Result<(f64, f64, f64), String>> = cfg
        .r_values
        .par_iter()
        .map(|&r| {
            let spec = ProblemSpec::periodic_cos_r(r, cfg.length, cfg.rho_pos, cfg.rho_neg);
            let grid = build_grid(&spec, cfg.n_nodes).map_err(|e| e.to_string())?;
            let spectrum =
                solve_spectrum(&spec, &grid, cfg.n_modes).map_err(|e| e.to_string())?;
            let (lam, _) = periodic::lambda_r(&spectrum, &grid).map_err(|e| e.to_string())?;
            let bound =
                norms::wlp_lower_bound(&spectrum, &grid, cfg.length).map_err(|e| e.to_string())?;
            Ok((r, lam, bound))
        })
        .collect();
    let hash = cfg.hash();
    let mut csv = CsvWriter::new(
        &hash,
        "r (dimensionless), lambda_R (1/length), bound (lower bound on ||W_L P||)",
    );
    for row in rows {
        let (r, lam, bound) = row.map_err(|e| -> Box<dyn std::error::Error> { e.into() })?;
        csv.row(&[fmt(r), fmt(lam), fmt(bound)]);
    }
    csv.write(&cfg.out.join("sweep_r.csv"))?;
    Ok(0)
}

fn cmd_oracle(cfg: &RunConfig) -> Result<u8, Box<dyn std::error::Error>> {
    let spec = cfg.problem_spec();
    let grid = build_grid(&spec, cfg.n_nodes)?;
    let spectrum = solve_spectrum(&spec, &grid, cfg.n_modes)?;
    let fw = framework_for(cfg, &spec);
    let ops = OperatorSet::assemble(&spec, &grid, &spectrum, fw)?;
    let sol = solver::neumann_solve(&spec, &grid, &spectrum, &ops, cfg.tol, cfg.max_iter)?;
    let oracle = solver::direct_solve(&spec, &spectrum, &ops, cfg.oversample)?;
    let gap_a = sol
        .a
        .iter()
        .zip(&oracle.a)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    let contraction = norms::pn_wln_norm(&ops, &grid)?;
    let body = json!({
        "converged": sol.converged,
        "gap_c": (sol.c - oracle.c).abs(),
        "gap_d": (sol.d - oracle.d).abs(),
        "gap_a_max": gap_a,
        "total": (sol.c - oracle.c).abs() + (sol.d - oracle.d).abs() + gap_a,
        "pn_wln_norm": contraction,
        "neumann": { "c": sol.c, "d": sol.d },
        "oracle": { "c": oracle.c, "d": oracle.d },
    });
    write_json(&cfg.out.join("oracle.json"), &cfg.hash(), &body)?;
    Ok(if sol.converged { 0 } else { 2 })
}

fn cmd_lambda_r(cfg: &RunConfig) -> Result<u8, Box<dyn std::error::Error>> {
    let spec = ProblemSpec::periodic_cos_r(cfg.r, cfg.length, cfg.rho_pos, cfg.rho_neg);
    let grid = build_grid(&spec, cfg.n_nodes)?;
    let spectrum = solve_spectrum(&spec, &grid, cfg.n_modes)?;
    let (lam, v_r) = periodic::lambda_r(&spectrum, &grid)?;
    let bound = norms::wlp_lower_bound(&spectrum, &grid, cfg.length)?;
    // ‖v_R - 1 - 2r cos θ‖ measures the O(r²) remainder
    let dev: Vec<f64> = (0..grid.len())
        .map(|i| v_r[i] - 1.0 - 2.0 * cfg.r * grid.nodes[i].cos())
        .collect();
    let body = json!({
        "r": cfg.r,
        "lambda_R": lam,
        "deviation_from_2r": lam - 2.0 * cfg.r,
        "v_R_shape_remainder": grid.norm_abs_h(&dev),
        "wlp_lower_bound": bound,
    });
    write_json(&cfg.out.join("lambda_r.json"), &cfg.hash(), &body)?;
    Ok(0)
}

fn cmd_diffusivity(cfg: &RunConfig) -> Result<u8, Box<dyn std::error::Error>> {
    let l_values: Vec<f64> = if cfg.l_values.iter().all(|&l| l >= 10.0) {
        cfg.l_values.clone()
    } else {
        vec![20.0, 50.0, 100.0]
    };
    let drho = cfg.rho_neg - cfg.rho_pos;
    let fit = periodic::diffusivity_estimate(&l_values, drho, cfg.n_modes, cfg.n_nodes)?;
    let body = json!({
        "D": fit.d,
        "residual": fit.residual,
        "short_length_warning": fit.short_length_warning,
        "points": fit.points.iter().map(|&(l, f)| json!({"L": l, "flux": f})).collect::<Vec<_>>(),
    });
    write_json(&cfg.out.join("diffusivity.json"), &cfg.hash(), &body)?;
    Ok(0)
}

