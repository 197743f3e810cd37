use std::sync::Arc;

use anyhow::Result;
use kinlab_core::certificates::c_p;
use kinlab_core::grid::{boundary_outflow_integral, lp_norm, OpacityProfile, VelocityQuadrature};
use kinlab_core::kinetic::{run_kinetic, InitialProfile, KineticRunConfig};
use kinlab_core::scattering::ScatteringKind;
use rayon::prelude::*;

use super::unit_grid;
use crate::config::E2Config;
use crate::report::{Check, ExperimentOutput, Params};

struct Point {
    kind: ScatteringKind,
    eps: f64,
    /// `(η, outflow, bound)`.
    weighted: Vec<(f64, f64, f64)>,
    /// `‖f‖_{L²(∂Ω×S¹×(0,T))}` and `T^{(p-1)/(2p)} ε^{1/(2p)} C_p ‖f₀‖_{L^{2p}}`.
    trace_l2: f64,
    scale: f64,
}

fn point(cfg: &E2Config, kind: ScatteringKind, eps: f64) -> Result<Point> {
    let grid = unit_grid(cfg.nx)?;
    let quad = Arc::new(VelocityQuadrature::new(cfg.nv)?);
    let a = OpacityProfile::from(cfg.opacity).build(&grid)?;
    let profile = InitialProfile::from(cfg.initial);
    let f0 = profile.build(&grid, &quad, eps)?;
    let mut run = KineticRunConfig::new(cfg.t_final, eps, kind);
    run.initial = profile;
    run.record_trace = true;
    let rec = run_kinetic(&run, &f0, &a)?;
    let trace = rec.trace.as_ref().expect("trace requested");

    let mut weighted = Vec::new();
    for &eta in &cfg.etas {
        let out = boundary_outflow_integral(trace, &grid, &quad, eta, true)?;
        let bound = eps * (2.0 / eta) * lp_norm(&f0, eta, None)?.powf(eta);
        weighted.push((eta, out, bound));
    }
    let p = cfg.p;
    let trace_l2 = boundary_outflow_integral(trace, &grid, &quad, 2.0, false)?.sqrt();
    let scale =
        cfg.t_final.powf((p - 1.0) / (2.0 * p)) * eps.powf(1.0 / (2.0 * p)) * c_p(p)? * lp_norm(&f0, 2.0 * p, None)?;
    Ok(Point {
        kind,
        eps,
        weighted,
        trace_l2,
        scale,
    })
}

pub fn run(cfg: &E2Config) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("E2");
    let cases: Vec<(ScatteringKind, f64)> = cfg
        .scattering
        .iter()
        .flat_map(|&k| cfg.epsilons.iter().map(move |&e| (ScatteringKind::from(k), e)))
        .collect();
    let points: Vec<Point> = cases
        .par_iter()
        .map(|&(k, e)| point(cfg, k, e))
        .collect::<Result<_>>()?;

    for pt in &points {
        let base = Params::new()
            .with("nx", cfg.nx)
            .with("nv", cfg.nv)
            .with("T", cfg.t_final)
            .with("scattering", pt.kind)
            .with("eps", pt.eps);
        for &(eta, outflow, bound) in &pt.weighted {
            let p = base.clone().with("eta", eta);
            out.row("weighted_outflow", &p, "outflow", outflow);
            out.row("weighted_outflow", &p, "bound", bound);
            out.row(
                "weighted_outflow",
                &p,
                "ratio",
                if bound > 0.0 { outflow / bound } else { 0.0 },
            );
            out.check(Check::new(
                format!("outflow_eta{eta}[scattering={};eps={}]", pt.kind, pt.eps),
                outflow,
                bound * (1.0 + cfg.tolerance),
            ));
        }
        let p = base.clone().with("p", cfg.p);
        out.row("trace_l2", &p, "trace_l2", pt.trace_l2);
        out.row("trace_l2", &p, "scale", pt.scale);
    }

    // `C` of the L² trace scaling, fitted at the largest ε of each kind.
    for &kind in &cfg.scattering {
        let kind = ScatteringKind::from(kind);
        let series: Vec<&Point> = points.iter().filter(|p| p.kind == kind).collect();
        let c = if series[0].scale > 0.0 {
            series[0].trace_l2 / series[0].scale
        } else {
            0.0
        };
        out.row(
            "trace_l2",
            &Params::new().with("scattering", kind),
            "fitted_constant",
            c,
        );
        for pt in series.iter().skip(1) {
            out.check(Check::new(
                format!("trace_l2_scaling[scattering={};eps={}]", kind, pt.eps),
                pt.trace_l2,
                c * pt.scale,
            ));
        }
    }
    Ok(out)
}
