use std::sync::Arc;

use anyhow::Result;
use kinlab_core::grid::{OpacityProfile, VelocityQuadrature};
use kinlab_core::kinetic::{run_kinetic, InitialProfile, KineticRunConfig};
use kinlab_core::scattering::ScatteringKind;
use rayon::prelude::*;

use super::unit_grid;
use crate::config::E3Config;
use crate::report::{Check, ExperimentOutput, Params};

pub fn run(cfg: &E3Config) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("E3");
    let cases: Vec<(ScatteringKind, f64)> = cfg
        .scattering
        .iter()
        .flat_map(|&k| cfg.epsilons.iter().map(move |&e| (ScatteringKind::from(k), e)))
        .collect();
    let results: Vec<(f64, f64, f64)> = cases
        .par_iter()
        .map(|&(kind, eps)| -> Result<(f64, f64, f64)> {
            let grid = unit_grid(cfg.nx)?;
            let quad = Arc::new(VelocityQuadrature::new(cfg.nv)?);
            let a = OpacityProfile::from(cfg.opacity).build(&grid)?;
            let profile = InitialProfile::from(cfg.initial);
            let f0 = profile.build(&grid, &quad, eps)?;
            let mut run = KineticRunConfig::new(cfg.t_final, eps, kind);
            run.initial = profile;
            let rec = run_kinetic(&run, &f0, &a)?;
            let lhs = rec.anisotropy_integral().sqrt();
            let bound = eps * f0.l2_norm_sq().sqrt() / (2.0 * a.c_min()).sqrt();
            let energy_drop = rec.energy[0] - rec.energy[rec.energy.len() - 1];
            Ok((lhs, bound, energy_drop))
        })
        .collect::<Result<_>>()?;

    for (&(kind, eps), &(lhs, bound, drop)) in cases.iter().zip(&results) {
        let p = Params::new()
            .with("nx", cfg.nx)
            .with("nv", cfg.nv)
            .with("T", cfg.t_final)
            .with("scattering", kind)
            .with("eps", eps);
        out.row("anisotropy", &p, "norm", lhs);
        out.row("anisotropy", &p, "bound", bound);
        out.row("anisotropy", &p, "ratio", if bound > 0.0 { lhs / bound } else { 0.0 });
        out.row("anisotropy", &p, "energy_drop", drop);
        out.check(Check::new(
            format!("anisotropy[scattering={kind};eps={eps}]"),
            lhs,
            bound * (1.0 + cfg.tolerance),
        ));
    }
    Ok(out)
}
