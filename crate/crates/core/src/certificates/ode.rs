//! Differential-inequality comparison for a weighted mass `y` and a
//! frequency `N`, with the exponent `M` and remainder `D` it produces.

use rand::Rng;

use crate::error::{invalid, KinError, Result};

/// Sampled functions on a uniform grid of `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSystemSample {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub n: Vec<f64>,
    pub dn: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
    pub lambda: f64,
    pub t_final: f64,
}

impl OdeSystemSample {
    fn tau(&self, t: f64) -> f64 {
        self.t_final - t + self.lambda
    }

    fn validate(&self) -> Result<()> {
        let m = self.t.len();
        if m < 3 {
            return invalid("need at least three samples");
        }
        for v in [&self.y, &self.dy, &self.n, &self.dn, &self.f1, &self.f2] {
            if v.len() != m {
                return invalid("sample arrays have different lengths");
            }
        }
        if !(self.c0 >= 0.0 && self.c1 >= 0.0 && self.lambda > 0.0 && self.t_final > 0.0) {
            return invalid("need C0, C1 >= 0 and lambda, T > 0");
        }
        if self.t[0].abs() > 1e-12 || (self.t[m - 1] - self.t_final).abs() > 1e-12 * self.t_final {
            return invalid("samples must cover [0, T]");
        }
        let h = self.t_final / (m - 1) as f64;
        for (k, &t) in self.t.iter().enumerate() {
            if (t - k as f64 * h).abs() > 1e-9 * h {
                return invalid("samples must be uniformly spaced");
            }
        }
        Ok(())
    }

    /// Checks both differential inequalities at every sample, with a relative
    /// slack `tol` for rounding. Reports the first violation.
    pub fn check_hypotheses(&self, tol: f64) -> Result<()> {
        self.validate()?;
        for k in 0..self.t.len() {
            let t = self.t[k];
            let (y, n) = (self.y[k], self.n[k]);
            // N = 0 is admitted as the degenerate equality case.
            if !(y > 0.0 && n >= 0.0) {
                return Err(KinError::Hypothesis {
                    index: k,
                    t,
                    what: "y must be positive and N nonnegative".into(),
                });
            }
            if self.f1[k] < 0.0 || self.f2[k] < 0.0 {
                return Err(KinError::Hypothesis {
                    index: k,
                    t,
                    what: "F1, F2 must be nonnegative".into(),
                });
            }
            let tau = self.tau(t);
            let lhs = (0.5 * self.dy[k] + n * y).abs();
            let rhs = (self.c0 / tau + self.c1 + self.f1[k]) * y;
            if lhs > rhs + tol * (rhs + (0.5 * self.dy[k]).abs() + n * y) {
                return Err(KinError::Hypothesis {
                    index: k,
                    t,
                    what: format!("|y'/2 + N y| = {lhs:e} exceeds {rhs:e}"),
                });
            }
            let rhs_n = ((1.0 + self.c0) / tau + self.c1) * n + self.f2[k];
            if self.dn[k] > rhs_n + tol * (rhs_n.abs() + self.dn[k].abs()) {
                return Err(KinError::Hypothesis {
                    index: k,
                    t,
                    what: format!("N' = {:e} exceeds {rhs_n:e}", self.dn[k]),
                });
            }
        }
        Ok(())
    }

    fn index_of(&self, t: f64) -> Result<usize> {
        let h = self.t_final / (self.t.len() - 1) as f64;
        let k = (t / h).round();
        if k < 0.0 || k as usize >= self.t.len() || (k * h - t).abs() > 1e-9 * h {
            return invalid(format!("time {t} is not a sample node"));
        }
        Ok(k as usize)
    }
}

/// Composite Simpson rule for uniformly sampled values; an odd number of
/// panels closes with Simpson's 3/8 rule on the last three.
pub fn simpson_samples(values: &[f64], h: f64) -> f64 {
    let m = values.len();
    match m {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        _ => {
            let panels = m - 1;
            let even = if panels.is_multiple_of(2) { panels } else { panels - 3 };
            let mut acc = 0.0;
            let mut k = 0;
            while k < even {
                acc += h / 3.0 * (values[k] + 4.0 * values[k + 1] + values[k + 2]);
                k += 2;
            }
            if panels % 2 == 1 {
                let v = &values[even..];
                acc += 3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]);
            }
            acc
        }
    }
}

/// Composite Simpson on `[a, b]` with `nodes` (odd) equally spaced points.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    let nodes = if nodes.is_multiple_of(2) { nodes + 1 } else { nodes }.max(3);
    let h = (b - a) / (nodes - 1) as f64;
    let vals: Vec<f64> = (0..nodes).map(|k| f(a + k as f64 * h)).collect();
    simpson_samples(&vals, h)
}

/// Default node count for the integrals defining `M`.
pub const M_NODES: usize = 2049;

/// `M = ∫_{t₂}^{t₃} w / ∫_{t₁}^{t₂} w` with `w(t) = e^{C₁ t} (T - t + λ)^{-1-C₀}`.
#[allow(clippy::too_many_arguments)]
pub fn m_ratio(c0: f64, c1: f64, lambda: f64, t_final: f64, t1: f64, t2: f64, t3: f64, nodes: usize) -> f64 {
    let w = |t: f64| (c1 * t).exp() * (t_final - t + lambda).powf(-1.0 - c0);
    simpson(w, t2, t3, nodes) / simpson(w, t1, t2, nodes)
}

/// Both sides of the comparison conclusion, in logarithmic form:
/// `(1 + M) ln y(t₂) ≤ ln y(t₃) + M ln y(t₁) + 4D + 2C₀(1 + M) ln(τ₁/τ₃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeLemmaReport {
    pub m: f64,
    pub d: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl OdeLemmaReport {
    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }
}

pub fn check_ode_lemma(sample: &OdeSystemSample, t1: f64, t2: f64, t3: f64) -> Result<OdeLemmaReport> {
    sample.check_hypotheses(1e-9)?;
    if !(0.0 <= t1 && t1 < t2 && t2 < t3 && t3 <= sample.t_final) {
        return invalid(format!("need 0 <= t1 < t2 < t3 <= T, got {t1}, {t2}, {t3}"));
    }
    let (i1, i2, i3) = (sample.index_of(t1)?, sample.index_of(t2)?, sample.index_of(t3)?);
    let h = sample.t_final / (sample.t.len() - 1) as f64;
    let (c0, c1) = (sample.c0, sample.c1);
    let m = m_ratio(c0, c1, sample.lambda, sample.t_final, t1, t2, t3, M_NODES);
    let sup_f1 = sample.f1[i1..=i3].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let abs_f2: Vec<f64> = sample.f2[i1..=i3].iter().map(|v| v.abs()).collect();
    let int_f2 = simpson_samples(&abs_f2, h);
    let d = m * (t2 - t1) * (c1 + sup_f1 + int_f2);
    let (y1, y2, y3) = (sample.y[i1], sample.y[i2], sample.y[i3]);
    let lhs = (1.0 + m) * y2.ln();
    let rhs = y3.ln() + m * y1.ln() + 4.0 * d + 2.0 * c0 * (1.0 + m) * (sample.tau(t1) / sample.tau(t3)).ln();
    Ok(OdeLemmaReport {
        m,
        d,
        lhs,
        rhs,
        margin: rhs - lhs,
    })
}

/// Exact `M_ℓ` (by quadrature) and its closed-form upper bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MEllBound {
    pub exact: f64,
    pub bound: f64,
    /// `e^{2ℓλC₁}` times the exact `C₁ = 0` value, which already bounds `M_ℓ`.
    pub intermediate: f64,
}

pub fn m_ell_bound(ell: f64, lambda: f64, c0: f64, c1: f64, t_final: f64) -> Result<MEllBound> {
    if !(ell > 1.0) {
        return invalid(format!("need ell > 1, got {ell}"));
    }
    if !(lambda > 0.0 && t_final > 0.0 && c0 >= 0.0 && c1 >= 0.0) {
        return invalid("need lambda, T > 0 and C0, C1 >= 0");
    }
    if !(ell * lambda < t_final / 4.0) {
        return invalid(format!(
            "need ell * lambda < T/4, got {} >= {}",
            ell * lambda,
            t_final / 4.0
        ));
    }
    let t3 = t_final;
    let t2 = t_final - ell * lambda;
    let t1 = t_final - 2.0 * ell * lambda;
    let exact = m_ratio(c0, c1, lambda, t_final, t1, t2, t3, M_NODES);
    let growth = (c1 * t_final).exp();
    let bound = if c0 > 0.0 {
        growth * (ell + 1.0).powf(c0) / (1.0 - (2.0f64 / 3.0).powf(c0))
    } else {
        growth * (ell + 1.0).ln() / 2f64.ln()
    };
    let ratio = (ell + 1.0) / (2.0 * ell + 1.0);
    let pure = if c0 > 0.0 {
        ((ell + 1.0).powf(c0) - 1.0) / (1.0 - ratio.powf(c0))
    } else {
        (ell + 1.0).ln() / -ratio.ln()
    };
    Ok(MEllBound {
        exact,
        bound,
        intermediate: (2.0 * ell * lambda * c1).exp() * pure,
    })
}

/// Sampled system built so that both hypotheses hold by construction.
///
/// With `τ = T - t + λ`, take `N'/N = θ₀(t)(1 + C₀)/τ + θ₁(t) C₁` and
/// `y'/(2y) = ψ - N` where `ψ = ϑ₀(t) C₀/τ + ϑ₁(t) C₁ + ϑ₂ F₁(t)` and all
/// multipliers lie in `[-1, 1]`. The logarithmic integrals are closed form
/// except `∫ N`, which uses 16-point Gauss-Legendre on sub-panels short
/// compared with `λ`.
pub fn generate_admissible<R: Rng + ?Sized>(rng: &mut R, samples: usize) -> OdeSystemSample {
    let t_final: f64 = rng.random_range(0.2..2.0);
    let lambda: f64 = t_final * rng.random_range(0.01..0.5);
    let c0: f64 = if rng.random_bool(0.3) {
        0.0
    } else {
        rng.random_range(0.0..0.99)
    };
    let c1: f64 = if rng.random_bool(0.3) {
        0.0
    } else {
        rng.random_range(0.0..2.0)
    };
    let n0: f64 = rng.random_range(0.1..50.0);
    let y0: f64 = rng.random_range(0.1..10.0);

    // θ₀ = a₀ + b₀ sin(γ ln τ + φ₀), |a₀| + |b₀| ≤ 1; closed form in ln τ.
    let b0: f64 = rng.random_range(0.0..0.5);
    let a0: f64 = rng.random_range(-(1.0 - b0)..(1.0 - b0));
    let gamma: f64 = rng.random_range(0.5..4.0);
    let phi0: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    // θ₁ = a₁ + b₁ sin(ω t + φ₁).
    let b1: f64 = rng.random_range(0.0..0.5);
    let a1: f64 = rng.random_range(-(1.0 - b1)..(1.0 - b1));
    let om: f64 = rng.random_range(0.5..10.0);
    let phi1: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    // F₁ = f₀ (1 + sin²(ν t)) / 2 and F₂ = g₀ (1 + cos(ν t)) ≥ 0.
    let f10: f64 = if rng.random_bool(0.3) {
        0.0
    } else {
        rng.random_range(0.0..3.0)
    };
    let f20: f64 = if rng.random_bool(0.3) {
        0.0
    } else {
        rng.random_range(0.0..3.0)
    };
    let nu: f64 = rng.random_range(0.5..6.0);
    // ψ multipliers: ϑ₀ = α₀ + β₀ sin(κ ln τ), ϑ₁, ϑ₂ constants.
    let beta0: f64 = rng.random_range(0.0..0.5);
    let alpha0: f64 = rng.random_range(-(1.0 - beta0)..(1.0 - beta0));
    let kap: f64 = rng.random_range(0.5..4.0);
    let th1: f64 = rng.random_range(-1.0..1.0);
    let th2: f64 = rng.random_range(-1.0..1.0);

    let tau = |t: f64| t_final - t + lambda;
    let tau0 = tau(0.0);
    // L(t) = ln N(t) - ln N₀.
    let log_n = |t: f64| {
        let (lt, l0) = (tau(t).ln(), tau0.ln());
        let p0 = -(1.0 + c0) * (a0 * (lt - l0) - b0 / gamma * ((gamma * lt + phi0).cos() - (gamma * l0 + phi0).cos()));
        let p1 = c1 * (a1 * t - b1 / om * ((om * t + phi1).cos() - phi1.cos()));
        p0 + p1
    };
    let n_of = |t: f64| n0 * log_n(t).exp();
    let f1 = |t: f64| 0.5 * f10 * (1.0 + (nu * t).sin().powi(2));
    let f2 = |t: f64| f20 * (1.0 + (nu * t).cos());
    // ∫₀ᵗ ψ.
    let int_psi = |t: f64| {
        let (lt, l0) = (tau(t).ln(), tau0.ln());
        let p0 = -c0 * (alpha0 * (lt - l0) - beta0 / kap * ((kap * lt).cos() - (kap * l0).cos()));
        let p1 = th1 * c1 * t;
        // ∫ f₁ = f₀/2 (t + t/2 - sin(2νt)/(4ν)).
        let p2 = th2 * 0.5 * f10 * (1.5 * t - (2.0 * nu * t).sin() / (4.0 * nu));
        p0 + p1 + p2
    };
    let psi = |t: f64| {
        let th0 = alpha0 + beta0 * (kap * tau(t).ln()).sin();
        th0 * c0 / tau(t) + th1 * c1 + th2 * f1(t)
    };

    let m = samples.max(3);
    let h = t_final / (m - 1) as f64;
    let t: Vec<f64> = (0..m).map(|k| k as f64 * h).collect();
    let n: Vec<f64> = t.iter().map(|&s| n_of(s)).collect();
    let dn: Vec<f64> = t
        .iter()
        .zip(&n)
        .map(|(&s, &nv)| {
            let th0 = a0 + b0 * (gamma * tau(s).ln() + phi0).sin();
            let th1v = a1 + b1 * (om * s + phi1).sin();
            (th0 * (1.0 + c0) / tau(s) + th1v * c1) * nv
        })
        .collect();
    // Cumulative ∫ N by Gauss-Legendre on panels no longer than λ/4.
    let (gx, gw) = gauss_legendre_16();
    let mut int_n = vec![0.0; m];
    for k in 1..m {
        let (a, b) = (t[k - 1], t[k]);
        let pieces = ((b - a) / (0.25 * lambda)).ceil().max(1.0) as usize;
        let ph = (b - a) / pieces as f64;
        let mut acc = 0.0;
        for p in 0..pieces {
            let lo = a + p as f64 * ph;
            for (x, w) in gx.iter().zip(&gw) {
                acc += 0.5 * ph * w * n_of(lo + 0.5 * ph * (x + 1.0));
            }
        }
        int_n[k] = int_n[k - 1] + acc;
    }
    let y: Vec<f64> = t
        .iter()
        .zip(&int_n)
        .map(|(&s, &inn)| y0 * (2.0 * (int_psi(s) - inn)).exp())
        .collect();
    let dy: Vec<f64> = t
        .iter()
        .zip(&y)
        .zip(&n)
        .map(|((&s, &yv), &nv)| 2.0 * (psi(s) - nv) * yv)
        .collect();
    OdeSystemSample {
        f1: t.iter().map(|&s| f1(s)).collect(),
        f2: t.iter().map(|&s| f2(s)).collect(),
        t,
        y,
        dy,
        n,
        dn,
        c0,
        c1,
        lambda,
        t_final,
    }
}

/// Picks `t₁ < t₂ < t₃` among the sample nodes.
pub fn random_triple<R: Rng + ?Sized>(rng: &mut R, sample: &OdeSystemSample) -> (f64, f64, f64) {
    let m = sample.t.len();
    let mut idx = [0usize; 3];
    loop {
        for i in &mut idx {
            *i = rng.random_range(0..m);
        }
        idx.sort_unstable();
        if idx[0] < idx[1] && idx[1] < idx[2] {
            break;
        }
    }
    (sample.t[idx[0]], sample.t[idx[1]], sample.t[idx[2]])
}

fn gauss_legendre_16() -> ([f64; 16], [f64; 16]) {
    const X: [f64; 8] = [
        0.095_012_509_837_637_44,
        0.281_603_550_779_258_9,
        0.458_016_777_657_227_4,
        0.617_876_244_402_643_7,
        0.755_404_408_355_003,
        0.865_631_202_387_831_7,
        0.944_575_023_073_232_6,
        0.989_400_934_991_649_9,
    ];
    const W: [f64; 8] = [
        0.189_450_610_455_068_5,
        0.182_603_415_044_923_6,
        0.169_156_519_395_002_5,
        0.149_595_988_816_576_7,
        0.124_628_971_255_533_9,
        0.095_158_511_682_492_78,
        0.062_253_523_938_647_89,
        0.027_152_459_411_754_09,
    ];
    let mut x = [0.0; 16];
    let mut w = [0.0; 16];
    for i in 0..8 {
        x[i] = -X[7 - i];
        w[i] = W[7 - i];
        x[8 + i] = X[i];
        w[8 + i] = W[i];
    }
    (x, w)
}
