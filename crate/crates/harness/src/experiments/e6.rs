use anyhow::Result;
use kinlab_core::certificates::ode::{generate_admissible, random_triple};
use kinlab_core::certificates::{check_ode_lemma, m_ell_bound, OdeSystemSample};

use super::rng;
use crate::config::E6Config;
use crate::report::{Check, ExperimentOutput, Params};

/// `y = e^{-2Nt}` with constant `N` and no forcing on `[0, 1]`, `λ = 1`.
fn constant_frequency(n: f64, samples: usize) -> OdeSystemSample {
    let t: Vec<f64> = (0..samples).map(|k| k as f64 / (samples - 1) as f64).collect();
    let y: Vec<f64> = t.iter().map(|s| (-2.0 * n * s).exp()).collect();
    OdeSystemSample {
        dy: y.iter().map(|v| -2.0 * n * v).collect(),
        n: vec![n; samples],
        dn: vec![0.0; samples],
        f1: vec![0.0; samples],
        f2: vec![0.0; samples],
        y,
        t,
        c0: 0.0,
        c1: 0.0,
        lambda: 1.0,
        t_final: 1.0,
    }
}

pub fn run(cfg: &E6Config, seed: u64) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new("E6");

    let mut r = rng(seed, 61);
    let mut worst = f64::INFINITY;
    let mut violations = 0usize;
    for s in 0..cfg.systems {
        let sys = generate_admissible(&mut r, cfg.samples);
        let mut local = f64::INFINITY;
        for _ in 0..cfg.triples {
            let (t1, t2, t3) = random_triple(&mut r, &sys);
            let rep = check_ode_lemma(&sys, t1, t2, t3)?;
            if !rep.holds() {
                violations += 1;
            }
            local = local.min(rep.margin);
        }
        let p = Params::new()
            .with("system", s)
            .with("T", sys.t_final)
            .with("lambda", sys.lambda)
            .with("C0", sys.c0)
            .with("C1", sys.c1);
        out.row("generated", &p, "min_margin", local);
        worst = worst.min(local);
    }
    let p = Params::new().with("systems", cfg.systems).with("triples", cfg.triples);
    out.row("generated", &p, "violations", violations as f64);
    out.check(Check::at_least("generated_margin", worst, 0.0));

    let rep = check_ode_lemma(&constant_frequency(1.0, cfg.samples), 0.0, 0.5, 1.0)?;
    let exact = 1.5f64.ln() / (4.0f64 / 3.0).ln();
    let p = Params::new().with("N", 1.0).with("t", "0;0.5;1");
    out.row("closed_form", &p, "M", rep.m);
    out.row("closed_form", &p, "M_exact", exact);
    out.row("closed_form", &p, "margin", rep.margin);
    out.check(Check::new(
        "closed_form_M",
        (rep.m - exact).abs(),
        cfg.closed_form_tolerance,
    ));
    out.check(Check::at_least("closed_form_margin", rep.margin, 0.0));

    for &c1 in &cfg.c1s {
        for &c0 in &cfg.c0s {
            for &ell in &cfg.ells {
                let b = m_ell_bound(ell, cfg.lambda, c0, c1, cfg.t_final)?;
                let p = Params::new()
                    .with("ell", ell)
                    .with("C0", c0)
                    .with("C1", c1)
                    .with("lambda", cfg.lambda)
                    .with("T", cfg.t_final);
                out.row("m_ell", &p, "exact", b.exact);
                out.row("m_ell", &p, "bound", b.bound);
                out.row("m_ell", &p, "intermediate", b.intermediate);
                out.check(Check::new(
                    format!("m_ell[ell={ell};C0={c0};C1={c1}]"),
                    b.exact,
                    b.bound,
                ));
            }
        }
    }
    Ok(out)
}
