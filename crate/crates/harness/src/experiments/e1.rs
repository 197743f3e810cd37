use std::sync::Arc;

use anyhow::Result;
use kinlab_core::diffusion::{h_minus1_norm, run_heat, EllipticOperator, HeatScheme};
use kinlab_core::grid::{velocity_average, OpacityProfile, VelocityQuadrature};
use kinlab_core::kinetic::{run_kinetic, InitialProfile, KineticRunConfig};
use kinlab_core::scattering::ScatteringKind;
use rayon::prelude::*;

use super::{trapezoid, unit_grid};
use crate::config::{E1Config, InitialSpec};
use crate::fit::fit_rate;
use crate::report::{Check, ExperimentOutput, Params};

struct Errors {
    h_minus1: f64,
    space_time: f64,
}

fn errors(cfg: &E1Config, nx: usize, eps: f64, initial: InitialSpec) -> Result<Errors> {
    let grid = unit_grid(nx)?;
    let quad = Arc::new(VelocityQuadrature::new(cfg.nv)?);
    let a = OpacityProfile::from(cfg.opacity).build(&grid)?;
    let op = EllipticOperator::from_opacity(&grid, &a, 2)?;
    let profile = InitialProfile::from(initial);
    let f0 = profile.build(&grid, &quad, eps)?;

    let ns = cfg.time_samples;
    let times: Vec<f64> = (1..=ns).map(|k| cfg.t_final * k as f64 / ns as f64).collect();
    let mut run = KineticRunConfig::new(cfg.t_final, eps, cfg.scattering.into());
    run.cfl = cfg.cfl;
    run.splitting = cfg.splitting.into();
    run.initial = profile;
    run.snapshot_times = times.clone();
    let rec = run_kinetic(&run, &f0, &a)?;

    let u0 = velocity_average(&f0);
    let heat = run_heat(&op, &u0, cfg.t_final, cfg.heat_steps, HeatScheme::CrankNicolson)?;
    let stride = cfg.heat_steps / ns;
    let mut samples = vec![(0.0, 0.0)];
    for (k, (t, avg)) in rec.snapshots.iter().enumerate() {
        let u = &heat.states[(k + 1) * stride].1;
        samples.push((*t, avg.sub(u).l2_norm().powi(2)));
    }
    let avg_t = rec.snapshots.last().expect("final snapshot").1.clone();
    Ok(Errors {
        h_minus1: h_minus1_norm(&op, &avg_t.sub(heat.final_state()))?,
        space_time: trapezoid(&samples).sqrt(),
    })
}

pub fn run(cfg: &E1Config) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("E1");
    let params = |nx: usize| {
        Params::new()
            .with("nx", nx)
            .with("nv", cfg.nv)
            .with("T", cfg.t_final)
            .with("p", cfg.p)
            .with("scattering", ScatteringKind::from(cfg.scattering))
    };
    let base = params(cfg.nx);

    let results: Vec<Errors> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| errors(cfg, cfg.nx, eps, cfg.initial))
        .collect::<Result<_>>()?;
    for (&eps, e) in cfg.epsilons.iter().zip(&results) {
        let p = base.clone().with("eps", eps);
        out.row("error", &p, "h_minus1", e.h_minus1);
        out.row("error", &p, "l2_space_time", e.space_time);
    }

    let floor = 1.0 / (2.0 * cfg.p);
    let pts: Vec<(f64, f64)> = cfg
        .epsilons
        .iter()
        .copied()
        .zip(results.iter().map(|e| e.h_minus1))
        .collect();
    match fit_rate(&pts, true) {
        Ok(fit) => {
            out.row("fit", &base, "rate", fit.slope);
            out.row("fit", &base, "r2", fit.r2);
            out.check(Check::at_least("rate_floor", fit.slope, floor));
            out.check(Check::at_least("rate_r2", fit.r2, cfg.min_r2));
        }
        Err(_) => {
            // Identically zero errors (e.g. zero data): nothing to fit.
            let zero = results.iter().all(|e| e.h_minus1 == 0.0);
            out.row("fit", &base, "rate", f64::NAN);
            out.check(Check::new("rate_floor", if zero { 0.0 } else { f64::NAN }, 0.0));
        }
    }
    let st: Vec<(f64, f64)> = cfg
        .epsilons
        .iter()
        .copied()
        .zip(results.iter().map(|e| e.space_time))
        .collect();
    if let Ok(fit) = fit_rate(&st, true) {
        out.row("fit", &base, "space_time_rate", fit.slope);
    }

    // Constant of `err ≤ C ε^{1/(2p)}` fitted at the largest ε.
    let c_ref = results[0].h_minus1 / cfg.epsilons[0].powf(floor);
    out.row("fit", &base, "constant", c_ref);
    for (&eps, e) in cfg.epsilons.iter().zip(&results).skip(1) {
        let bound = cfg.persistence * c_ref * eps.powf(floor);
        out.check(Check::new(
            format!("constant_persistence[eps={eps}]"),
            e.h_minus1,
            bound,
        ));
    }

    if let Some(nx2) = cfg.refine_nx {
        let eps = *cfg.epsilons.last().expect("nonempty");
        let e = errors(cfg, nx2, eps, cfg.initial)?;
        let p = params(nx2).with("eps", eps);
        out.row("refinement", &p, "h_minus1", e.h_minus1);
        out.row("refinement", &p, "l2_space_time", e.space_time);
    }
    if let Some(init) = cfg.report_anisotropic {
        for &eps in &cfg.epsilons {
            let e = errors(cfg, cfg.nx, eps, init)?;
            let p = base.clone().with("eps", eps).with("initial", "anisotropic");
            out.row("anisotropic", &p, "h_minus1", e.h_minus1);
        }
    }
    Ok(out)
}
