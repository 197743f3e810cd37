use anyhow::Result;
use kinlab_core::certificates::{dirichlet_quotient_series, DirichletQuotientTrace};
use kinlab_core::diffusion::{eigendecompose, h_minus1_norm_sq, run_heat, EllipticOperator, HeatScheme};
use kinlab_core::grid::{subdomain_mask, OpacityProfile, ScalarField};
use rayon::prelude::*;

use super::{random_sine_field, rng, unit_grid};
use crate::config::{rectangle, E5Config};
use crate::report::{Check, ExperimentOutput, Params};

pub fn run(cfg: &E5Config, seed: u64) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("E5");
    let grid = unit_grid(cfg.nx)?;
    let a = OpacityProfile::from(cfg.opacity).build(&grid)?;
    let op = EllipticOperator::from_opacity(&grid, &a, 2)?;
    let omega = subdomain_mask(&grid, &rectangle(cfg.omega))?;
    let base = Params::new()
        .with("nx", cfg.nx)
        .with("T", cfg.t_final)
        .with("steps", cfg.steps);

    let mut r = rng(seed, 51);
    let data: Vec<ScalarField> = (0..cfg.samples)
        .map(|_| random_sine_field(&grid, &mut r, cfg.field_modes))
        .collect();
    let traces: Vec<(DirichletQuotientTrace, ScalarField)> = data
        .par_iter()
        .map(|u0| -> Result<_> {
            let run = run_heat(&op, u0, cfg.t_final, cfg.steps, HeatScheme::BackwardEuler)?;
            Ok((dirichlet_quotient_series(&op, &run.states)?, run.final_state().clone()))
        })
        .collect::<Result<_>>()?;

    let mu1 = eigendecompose(&op, 1)?.values[0];
    let mut worst_increase = f64::NEG_INFINITY;
    let mut worst_bound = f64::NEG_INFINITY;
    for (k, ((tr, ut), u0)) in traces.iter().zip(&data).enumerate() {
        let p = base.clone().with("sample", k);
        let inc = tr.worst_relative_increase();
        let (y0, bound) = tr.backward_bound();
        worst_increase = worst_increase.max(inc);
        worst_bound = worst_bound.max(y0 / bound);
        out.row("random", &p, "N0", tr.n[0]);
        out.row("random", &p, "NT", tr.n[tr.n.len() - 1]);
        out.row("random", &p, "worst_relative_increase", inc);
        out.row("random", &p, "y0", y0);
        out.row("random", &p, "bound", bound);
        // ‖u₀‖² ≤ (N(0)/μ₁) e^{2T N(0)} ‖u(T)‖².
        let explicit = tr.n[0] / mu1 * (2.0 * cfg.t_final * tr.n[0]).exp() * ut.l2_norm().powi(2);
        out.row("random", &p, "l2_explicit_ratio", u0.l2_norm().powi(2) / explicit);
        // ω-localised observation: ln(‖u₀‖/‖u(T)‖_ω) / (1 + 1/T + T N(0)).
        let loc =
            (u0.l2_norm() / ut.l2_norm_sq_on(&omega).sqrt()).ln() / (1.0 + 1.0 / cfg.t_final + cfg.t_final * tr.n[0]);
        out.row("random", &p, "localised_constant", loc);
    }
    out.check(Check::new("quotient_monotone", worst_increase, cfg.monotone_tolerance));
    out.check(Check::new("backward_bound", worst_bound, 1.0 + cfg.bound_tolerance));

    let basis = eigendecompose(&op, cfg.eigen_modes)?;
    let mut worst_eig: f64 = 0.0;
    for (i, (mu, e)) in basis.values.iter().zip(&basis.vectors).enumerate() {
        let run = run_heat(&op, e, cfg.t_final, cfg.steps, HeatScheme::BackwardEuler)?;
        let tr = dirichlet_quotient_series(&op, &run.states)?;
        let dev = tr.n.iter().map(|n| (n - mu).abs() / mu).fold(0.0, f64::max);
        worst_eig = worst_eig.max(dev);
        let p = base.clone().with("mode", i + 1);
        out.row("eigen", &p, "mu", *mu);
        out.row("eigen", &p, "max_relative_deviation", dev);
        out.row("eigen", &p, "y0", h_minus1_norm_sq(&op, e)?);
    }
    out.check(Check::new("eigen_quotient", worst_eig, cfg.eigen_tolerance));
    Ok(out)
}
