use anyhow::{bail, Result};
use kinlab_core::certificates::interpolation_log_constant;
use kinlab_core::diffusion::{eigendecompose, EigenBasis, EllipticOperator};
use kinlab_core::grid::{bump, subdomain_mask, Mask, OpacityProfile, ScalarField};
use rand::Rng;

use super::{random_sine_field, rng, unit_grid};
use crate::config::{rectangle, E4Config};
use crate::fit::fit_rate;
use crate::report::{Check, ExperimentOutput, Params};

struct Sample {
    label: String,
    u0: ScalarField,
    /// `u(T)` for every configured `T`.
    ut: Vec<ScalarField>,
}

fn propagate(basis: &EigenBasis, u0: &ScalarField, times: &[f64]) -> Vec<ScalarField> {
    let a = basis.coefficients(u0);
    times
        .iter()
        .map(|&t| {
            let c: Vec<f64> = a.iter().zip(&basis.values).map(|(a, mu)| a * (-mu * t).exp()).collect();
            basis.synthesize(u0.grid(), &c)
        })
        .collect()
}

fn log_constants(samples: &[Sample], omega: &Mask, mu: f64, k: usize) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| Ok(interpolation_log_constant(&s.u0, &s.ut[k], omega, mu)?))
        .collect()
}

pub fn run(cfg: &E4Config, seed: u64) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("E4");
    let grid = unit_grid(cfg.nx)?;
    let a = OpacityProfile::from(cfg.opacity).build(&grid)?;
    let op = EllipticOperator::from_opacity(&grid, &a, 2)?;
    let basis = eigendecompose(&op, op.n())?;
    if cfg.holdout_modes[1] > basis.len() || cfg.train_modes[1] > basis.len() {
        bail!("e4: mode index beyond the grid's {} modes", basis.len());
    }
    let omega = subdomain_mask(&grid, &rectangle(cfg.omega))?;
    let times = &cfg.times;

    let mut train = Vec::new();
    let mut hold = Vec::new();
    let add = |set: &mut Vec<Sample>, label: String, u0: ScalarField| {
        let ut = propagate(&basis, &u0, times);
        set.push(Sample { label, u0, ut });
    };
    for m in cfg.train_modes[0]..=cfg.train_modes[1] {
        add(&mut train, format!("mode{m}"), basis.vectors[m - 1].clone());
    }
    for m in cfg.holdout_modes[0]..=cfg.holdout_modes[1] {
        add(&mut hold, format!("mode{m}"), basis.vectors[m - 1].clone());
    }
    let [lo, hi] = cfg.bump_range;
    let n = cfg.lattice;
    for i in 0..n {
        for j in 0..n {
            let s = |k: usize| {
                if n == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            };
            let (cx, cy) = (s(i), s(j));
            let r = cfg.lattice_radius;
            add(
                &mut train,
                format!("lattice{i}_{j}"),
                grid.sample(|x, y| bump((x - cx).hypot(y - cy) / r)),
            );
        }
    }
    let mut r_train = rng(seed, 41);
    for k in 0..cfg.train_fields {
        add(
            &mut train,
            format!("field{k}"),
            random_sine_field(&grid, &mut r_train, cfg.field_modes),
        );
    }
    let mut r_hold = rng(seed, 42);
    for k in 0..cfg.holdout_bumps {
        let cx = r_hold.random_range(lo..hi);
        let cy = r_hold.random_range(lo..hi);
        let r = r_hold.random_range(cfg.holdout_radius[0]..cfg.holdout_radius[1]);
        add(
            &mut hold,
            format!("bump{k}"),
            grid.sample(|x, y| bump((x - cx).hypot(y - cy) / r)),
        );
    }
    for k in 0..cfg.holdout_fields {
        add(
            &mut hold,
            format!("field{k}"),
            random_sine_field(&grid, &mut r_hold, cfg.field_modes),
        );
    }

    // One μ for all T, minimising the summed mean log-gap on the training set.
    let mus: Vec<f64> = (1..=cfg.mu_steps)
        .map(|k| k as f64 / (cfg.mu_steps + 1) as f64)
        .collect();
    let mut best = (f64::INFINITY, 0.0);
    for &mu in &mus {
        let mut gap = 0.0;
        for k in 0..times.len() {
            let lc = log_constants(&train, &omega, mu, k)?;
            let top = lc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            gap += (1.0 - mu) * lc.iter().map(|l| top - l).sum::<f64>() / lc.len() as f64;
        }
        out.row("mu_scan", &Params::new().with("mu", mu), "mean_log_gap", gap);
        if gap < best.0 {
            best = (gap, mu);
        }
    }
    let mu = best.1;
    let base = Params::new()
        .with("nx", cfg.nx)
        .with("omega", format!("{:?}", cfg.omega).replace(", ", " "))
        .with("mu", mu);
    out.row("fit", &base, "mu", mu);

    let mut log_c = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let lc = log_constants(&train, &omega, mu, k)?;
        let c = lc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        log_c.push(c);
        let p = base.clone().with("T", t);
        out.row("fit", &p, "log_c", c);
        for (s, l) in train.iter().zip(&lc) {
            out.row("train", &p.clone().with("sample", &s.label), "log_constant", *l);
        }

        let allowed = c + cfg.persistence.ln();
        let hl = log_constants(&hold, &omega, mu, k)?;
        let mut violations = 0;
        for (s, l) in hold.iter().zip(&hl) {
            out.row(
                "holdout",
                &p.clone().with("sample", &s.label),
                "log_margin",
                allowed - l,
            );
            if *l > allowed {
                violations += 1;
            }
        }
        let worst = hl.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.row("holdout", &p, "violations", violations as f64);
        out.check(Check::new(format!("holdout[T={t}]"), worst, allowed));
    }

    let pts: Vec<(f64, f64)> = times.iter().zip(&log_c).map(|(t, c)| (1.0 / t, *c)).collect();
    let fit = fit_rate(&pts, false)?;
    out.row("time_fit", &base, "slope", fit.slope);
    out.row("time_fit", &base, "intercept", fit.intercept);
    out.row("time_fit", &base, "r2", fit.r2);
    out.check(Check::at_least("log_c_vs_inverse_T_r2", fit.r2, cfg.min_r2));
    Ok(out)
}
