use std::sync::Arc;

use anyhow::Result;
use kinlab_core::certificates::{
    data_quality, observation_certificate, plateau_cutoff, regularizing_constant, ObservationInput, ObservationReport,
};
use kinlab_core::diffusion::{h_minus1_norm_sq, run_heat, EllipticOperator, HeatScheme};
use kinlab_core::grid::{bump, subdomain_mask, KineticState, OpacityProfile, ScalarField, VelocityQuadrature};
use kinlab_core::kinetic::{run_kinetic, InitialProfile, KineticRunConfig};
use rayon::prelude::*;

use super::unit_grid;
use crate::config::{rectangle, E8Config};
use crate::report::{Check, ExperimentOutput, Params};

/// `c = max ln(‖u₀‖/‖u(T)‖_ω) / (1 + 1/T + T 𝔽)` over the data shapes.
fn fit_c(cfg: &E8Config, nx: usize, out: &mut ExperimentOutput) -> Result<f64> {
    let grid = unit_grid(nx)?;
    let a = OpacityProfile::from(cfg.opacity).build(&grid)?;
    let op = EllipticOperator::from_opacity(&grid, &a, 2)?;
    let omega = subdomain_mask(&grid, &rectangle(cfg.omega))?;
    let mut c: f64 = 0.0;
    for &r in &cfg.radii {
        let u0 = shape(&grid, cfg.center, r);
        let ut = run_heat(&op, &u0, cfg.t_final, cfg.heat_steps, HeatScheme::CrankNicolson)?;
        let freq = u0.l2_norm().powi(2) / h_minus1_norm_sq(&op, &u0)?;
        let ci = (u0.l2_norm() / ut.final_state().l2_norm_sq_on(&omega).sqrt()).ln()
            / (1.0 + 1.0 / cfg.t_final + cfg.t_final * freq);
        out.row("fit_c", &Params::new().with("nx", nx).with("radius", r), "c", ci);
        c = c.max(ci);
    }
    out.row("fit_c", &Params::new().with("nx", nx), "c_max", c);
    Ok(c)
}

fn shape(grid: &Arc<kinlab_core::grid::SpatialGrid>, center: [f64; 2], r: f64) -> ScalarField {
    grid.sample(|x, y| bump((x - center[0]).hypot(y - center[1]) / r))
}

pub fn run(cfg: &E8Config) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("E8");
    let mut cs = Vec::new();
    for &nx in &cfg.grids {
        cs.push((nx, fit_c(cfg, nx, &mut out)?));
    }
    let &(nx, c) = cs.last().expect("at least two grids");
    for &(other, ci) in &cs[..cs.len() - 1] {
        out.check(Check::new(
            format!("c_stability[nx={other};ref={nx}]"),
            (ci / c - 1.0).abs(),
            cfg.c_tolerance,
        ));
    }

    let grid = unit_grid(nx)?;
    let quad = Arc::new(VelocityQuadrature::new(cfg.nv)?);
    let a = OpacityProfile::from(cfg.opacity).build(&grid)?;
    let op = EllipticOperator::from_opacity(&grid, &a, 2)?;
    let omega = subdomain_mask(&grid, &rectangle(cfg.omega))?;
    let chi = plateau_cutoff(&grid, cfg.omega, cfg.chi_width)?;

    let mut thresholds = Vec::new();
    for &r in &cfg.radii {
        let g = shape(&grid, cfg.center, r);
        let heat = run_heat(&op, &g, cfg.t_final, cfg.heat_steps, HeatScheme::CrankNicolson)?;
        let ut = heat.final_state().clone();
        let reports: Vec<ObservationReport> = cfg
            .epsilons
            .par_iter()
            .map(|&eps| -> Result<ObservationReport> {
                let f0 = KineticState::isotropic(&quad, &g, eps)?;
                let mut run = KineticRunConfig::new(cfg.t_final, eps, cfg.scattering.into());
                run.initial = InitialProfile::IsotropicBump {
                    center: cfg.center,
                    radius: r,
                    amplitude: 1.0,
                };
                let rec = run_kinetic(&run, &f0, &a)?;
                let avg_t = &rec.snapshots.last().expect("final snapshot").1;
                Ok(observation_certificate(&ObservationInput {
                    f0: &f0,
                    average_t: avg_t,
                    u_t: &ut,
                    op: &op,
                    omega: &omega,
                    chi: &chi,
                    p: cfg.p,
                    t_final: cfg.t_final,
                    c,
                    defect_constant: None,
                })?)
            })
            .collect::<Result<_>>()?;

        let dq = data_quality(&KineticState::isotropic(&quad, &g, cfg.epsilons[0])?, &op, cfg.p)?;
        let base = Params::new()
            .with("nx", nx)
            .with("nv", cfg.nv)
            .with("T", cfg.t_final)
            .with("p", cfg.p)
            .with("c", c)
            .with("radius", r);
        out.row("data", &base, "M_p", dq.m_p);
        out.row("data", &base, "F", dq.f_freq);
        let log_eps0 = reports[0].epsilon0.map_or(f64::NAN, f64::ln);
        out.row("data", &base, "log_epsilon0", log_eps0);
        out.row("data", &base, "sigma", reports[0].sigma.unwrap_or(f64::NAN));
        thresholds.push((dq.m_p, log_eps0, r));

        let defect_c = if reports[0].defect_scale > 0.0 {
            reports[0].defect / reports[0].defect_scale
        } else {
            0.0
        };
        out.row("defect", &base, "fitted_constant", defect_c);
        for (k, rep) in reports.iter().enumerate() {
            let p = base.clone().with("eps", rep.epsilon);
            out.row("observation", &p, "prefactor", rep.prefactor.unwrap_or(f64::NAN));
            out.row("observation", &p, "vacuous", if rep.vacuous { 1.0 } else { 0.0 });
            out.row("observation", &p, "lhs", rep.lhs);
            out.row("observation", &p, "rhs", rep.rhs);
            out.row("defect", &p, "defect", rep.defect);
            out.row("defect", &p, "scale", rep.defect_scale);
            out.check(Check::new(
                format!("observation[radius={r};eps={}]", rep.epsilon),
                rep.lhs,
                rep.rhs,
            ));
            if k > 0 {
                out.check(Check::new(
                    format!("defect_persistence[radius={r};eps={}]", rep.epsilon),
                    rep.defect,
                    cfg.persistence * defect_c * rep.defect_scale,
                ));
            }
        }

        let chi_u = chi.mul(&ut);
        let reg = regularizing_constant(&op, &chi_u, cfg.t_final, &g)?;
        out.row("regularizing", &base, "constant", reg);
    }

    thresholds.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in thresholds.windows(2) {
        out.check(Check::new(
            format!("threshold_monotone[radius={}->{}]", w[0].2, w[1].2),
            w[1].1,
            w[0].1,
        ));
    }
    Ok(out)
}
