use anyhow::Result;
use kinlab_core::certificates::{
    cutoff_constant, eigen_sum_observability, frequency_function, smallness_theta, smoothstep_max_slope,
    time_integrated_observation,
};
use kinlab_core::diffusion::{run_heat, EllipticOperator, HeatRun, HeatScheme};
use kinlab_core::grid::{subdomain_mask, Region, ScalarField};
use rayon::prelude::*;

use super::{random_sine_field, rng, unit_grid};
use crate::config::E7Config;
use crate::fit::{fit_rate, upper_envelope};
use crate::report::{Check, ExperimentOutput, Params};

const CENTER: [f64; 2] = [0.5, 0.5];

pub fn run(cfg: &E7Config, seed: u64) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("E7");
    frequency(cfg, seed, &mut out)?;
    smallness(cfg, seed, &mut out)?;
    observability(cfg, seed, &mut out)?;
    Ok(out)
}

fn frequency(cfg: &E7Config, seed: u64, out: &mut ExperimentOutput) -> Result<()> {
    let grid = unit_grid(cfg.nx)?;
    let op = EllipticOperator::constant(&grid, cfg.kappa)?;
    let mut r = rng(seed, 71);
    let data: Vec<ScalarField> = (0..cfg.samples)
        .map(|_| random_sine_field(&grid, &mut r, cfg.field_modes))
        .collect();
    let runs: Vec<HeatRun> = data
        .par_iter()
        .map(|u0| Ok(run_heat(&op, u0, cfg.t_final, cfg.steps, HeatScheme::CrankNicolson)?))
        .collect::<Result<_>>()?;

    for &lambda in &cfg.lambdas {
        let per: Vec<(f64, f64)> = runs
            .par_iter()
            .map(|run| -> Result<(f64, f64)> {
                let tr = frequency_function(&op, &run.states, CENTER, lambda, cfg.kappa)?;
                // Residual of ½ y' + N y = 0 by the midpoint rule, relative to N(0) y(0).
                let scale = tr.values[0] * tr.masses[0];
                let res = (0..tr.times.len() - 1)
                    .map(|k| {
                        let dt = tr.times[k + 1] - tr.times[k];
                        let dy = 0.5 * (tr.masses[k + 1] - tr.masses[k]) / dt;
                        let ny = 0.5 * (tr.values[k] * tr.masses[k] + tr.values[k + 1] * tr.masses[k + 1]);
                        (dy + ny).abs() / scale
                    })
                    .fold(0.0, f64::max);
                Ok((tr.worst_relative_increase(), res))
            })
            .collect::<Result<_>>()?;
        let mut worst = f64::NEG_INFINITY;
        for (k, (inc, res)) in per.iter().enumerate() {
            let p = Params::new()
                .with("nx", cfg.nx)
                .with("T", cfg.t_final)
                .with("steps", cfg.steps)
                .with("kappa", cfg.kappa)
                .with("lambda", lambda)
                .with("sample", k);
            out.row("frequency", &p, "worst_relative_increase", *inc);
            out.row("frequency", &p, "identity_residual", *res);
            worst = worst.max(*inc);
        }
        out.check(Check::new(
            format!("frequency_monotone[lambda={lambda}]"),
            worst,
            cfg.monotone_tolerance,
        ));
    }
    Ok(())
}

fn smallness(cfg: &E7Config, seed: u64, out: &mut ExperimentOutput) -> Result<()> {
    let s = &cfg.smallness;
    let grid = unit_grid(cfg.nx)?;
    let op = EllipticOperator::constant(&grid, cfg.kappa)?;
    let scale = cfg.kappa.sqrt();
    let inner = subdomain_mask(
        &grid,
        &Region::Ball {
            center: CENTER,
            radius: (s.rho - 2.0 * s.eps_cut) * scale,
        },
    )?;
    let ball = subdomain_mask(
        &grid,
        &Region::Ball {
            center: CENTER,
            radius: s.rho * scale,
        },
    )?;
    let c_a = cutoff_constant(smoothstep_max_slope(s.eps_cut));
    let mut r = rng(seed, 72);
    for k in 0..s.samples {
        let u0 = random_sine_field(&grid, &mut r, cfg.field_modes);
        let run = run_heat(&op, &u0, cfg.t_final, cfg.steps, HeatScheme::CrankNicolson)?;
        let e0 = u0.l2_norm().powi(2);
        let ratio = e0 / run.final_state().l2_norm_sq_on(&inner);
        let sm = smallness_theta(s.rho, s.eps_cut, c_a, cfg.t_final, ratio)?;
        let window = cfg.t_final - sm.theta;
        let worst = run
            .states
            .iter()
            .filter(|(t, _)| *t >= window * (1.0 - 1e-12))
            .map(|(_, u)| (e0 / u.l2_norm_sq_on(&ball)).ln())
            .fold(f64::NEG_INFINITY, f64::max);
        let p = Params::new()
            .with("nx", cfg.nx)
            .with("T", cfg.t_final)
            .with("rho", s.rho)
            .with("eps_cut", s.eps_cut)
            .with("C_A", c_a)
            .with("sample", k);
        out.row("smallness", &p, "ratio", ratio);
        out.row("smallness", &p, "theta", sm.theta);
        out.row("smallness", &p, "h", sm.h);
        out.row("smallness", &p, "delta", sm.delta);
        out.row("smallness", &p, "exponent", sm.exponent());
        out.row("smallness", &p, "worst_log_ratio", worst);
        out.check(Check::new(format!("smallness[sample={k}]"), worst, sm.exponent()));
    }
    Ok(())
}

fn observability(cfg: &E7Config, seed: u64, out: &mut ExperimentOutput) -> Result<()> {
    let o = &cfg.observability;
    let grid = unit_grid(o.nx)?;
    let op = EllipticOperator::constant(&grid, cfg.kappa)?;
    let curve = eigen_sum_observability(&op, o.modes, CENTER, o.radius, o.refine)?;
    let base = Params::new()
        .with("nx", o.nx)
        .with("modes", o.modes)
        .with("radius", o.radius)
        .with("refine", o.refine);
    for ((k, s), l) in curve.cutoffs.iter().zip(&curve.sqrt_mu).zip(&curve.log_ratio) {
        let p = base.clone().with("cutoff", k).with("sqrt_mu", s);
        out.row("eigen_sums", &p, "log_ratio", *l);
    }
    let pts: Vec<(f64, f64)> = curve
        .sqrt_mu
        .iter()
        .copied()
        .zip(curve.log_ratio.iter().copied())
        .collect();
    let fit = fit_rate(&pts, false)?;
    let env = upper_envelope(&curve.sqrt_mu, &curve.log_ratio, 0.5)?;
    out.row("eigen_sums_fit", &base, "slope", fit.slope);
    out.row("eigen_sums_fit", &base, "r2", fit.r2);
    out.row("eigen_sums_fit", &base, "envelope_slope", env.slope);
    out.row("eigen_sums_fit", &base, "envelope_intercept", env.intercept);
    out.row("eigen_sums_fit", &base, "envelope_fitted", env.fitted as f64);
    out.check(Check::at_least("eigen_sums_r2", fit.r2, o.min_r2));
    out.check(Check::at_least("eigen_sums_slope_positive", env.slope, 0.0));
    out.check(Check::new("eigen_sums_envelope", env.worst_violation, o.max_violation));

    // ‖u(T)‖ ≤ K ∫₀ᵀ ‖u‖_{L²(B_r)}: K fitted at the last T, reported elsewhere.
    let grid = unit_grid(cfg.nx)?;
    let op = EllipticOperator::constant(&grid, cfg.kappa)?;
    let ball = subdomain_mask(
        &grid,
        &Region::Ball {
            center: CENTER,
            radius: o.radius,
        },
    )?;
    let mut r = rng(seed, 73);
    let data: Vec<ScalarField> = (0..cfg.samples)
        .map(|_| random_sine_field(&grid, &mut r, cfg.field_modes))
        .collect();
    let mut k_by_t = Vec::new();
    for &t in &o.integrated_times {
        let mut k_max: f64 = 0.0;
        for (i, u0) in data.iter().enumerate() {
            let run = run_heat(&op, u0, t, o.integrated_steps, HeatScheme::CrankNicolson)?;
            let k = run.final_state().l2_norm() / time_integrated_observation(&run.states, &ball);
            out.row("integrated", &Params::new().with("T", t).with("sample", i), "ratio", k);
            k_max = k_max.max(k);
        }
        k_by_t.push((t, k_max));
    }
    if let Some(&(t_ref, k_ref)) = k_by_t.last() {
        for &(t, k) in &k_by_t {
            let p = Params::new().with("T", t).with("T_ref", t_ref);
            out.row("integrated", &p, "constant", k);
            out.row("integrated", &p, "relative_to_reference", k / k_ref);
        }
    }
    Ok(())
}
