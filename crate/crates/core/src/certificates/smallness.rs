use crate::error::{invalid, Result};

/// Time window and exponents of the localisation estimate
/// `∫|u₀|² / ∫_{B_ρ}|u(t)|² ≤ e^{c₁/θ}` for `t ∈ [T - θ, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smallness {
    pub theta: f64,
    pub h: f64,
    pub delta: f64,
    /// `c₁ = δ (ρ - ε)²`, so that `c₁/θ = (ρ - ε)²/h`.
    pub c1: f64,
}

impl Smallness {
    /// `c₁/θ`, the exponent of the bound.
    pub fn exponent(&self) -> f64 {
        self.c1 / self.theta
    }
}

/// Evaluates `δ`, `h` and `θ = δ h` from the explicit choices of the
/// localisation argument. `ratio = ∫|u₀|² / ∫_{B_{ρ-2ε}}|u(T)|²`.
pub fn smallness_theta(rho: f64, eps: f64, c_a: f64, t_final: f64, ratio: f64) -> Result<Smallness> {
    if !(rho > 0.0 && eps > 0.0 && eps < rho / 2.0) {
        return invalid(format!("need 0 < eps < rho/2, got rho = {rho}, eps = {eps}"));
    }
    if !(c_a >= 4.0) {
        return invalid(format!("C_A = 4 max(1, ...) is at least 4, got {c_a}"));
    }
    if !(t_final > 0.0) {
        return invalid("T must be positive");
    }
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return invalid(format!("energy ratio must be finite and >= 1, got {ratio}"));
    }
    let q = eps * (2.0 * rho - 3.0 * eps);
    let delta = q / (2.0 * rho * rho * c_a);
    let log_k = 0.5 * q * (2.0 / t_final + 1.0) * delta;
    // ln(K e (1 + C_A) ratio), evaluated in logs.
    let log_arg = log_k + 1.0 + (1.0 + c_a).ln() + ratio.ln();
    let h = 0.5 * q / log_arg;
    let theta = delta * h;
    let c1 = delta * (rho - eps).powi(2);
    Ok(Smallness { theta, h, delta, c1 })
}

/// `C_A = 4 max(1, sup A∇ϕ·∇ϕ)` for a cutoff whose slope in the metric
/// distance is at most `slope`.
pub fn cutoff_constant(slope: f64) -> f64 {
    4.0 * (slope * slope).max(1.0)
}

/// Quintic smoothstep `6s⁵ - 15s⁴ + 10s³` clamped to `[0, 1]`; `C²`.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

/// Largest slope of [`smoothstep`] on a transition of width `w`.
pub fn smoothstep_max_slope(w: f64) -> f64 {
    15.0 / (8.0 * w)
}

/// Radial cutoff equal to 1 for `d ≤ ρ - ε` and 0 for `d ≥ ρ`.
pub fn radial_cutoff(d: f64, rho: f64, eps: f64) -> f64 {
    1.0 - smoothstep((d - (rho - eps)) / eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_forms_agree() {
        let (rho, eps, t) = (0.4, 0.1, 0.3);
        let ca = cutoff_constant(smoothstep_max_slope(eps));
        for ratio in [1.0, 3.0, 1e4] {
            let s = smallness_theta(rho, eps, ca, t, ratio).unwrap();
            let q = eps * (2.0 * rho - 3.0 * eps);
            let inv_theta = ca * 4.0 * rho * rho / (q * q)
                * (std::f64::consts::E * (1.0 + ca) * ((2.0 / t + 1.0) * q * q / (4.0 * rho * rho * ca)).exp() * ratio)
                    .ln();
            assert_relative_eq!(1.0 / s.theta, inv_theta, max_relative = 1e-12);
            assert_relative_eq!(s.exponent(), (rho - eps).powi(2) / s.h, max_relative = 1e-12);
            assert!(s.theta < 1.0f64.min(t / 2.0));
            assert!(s.delta * ca > 0.0 && s.delta * ca <= 1.0 / 6.0);
        }
    }

    #[test]
    fn theta_decreases_with_ratio() {
        let ca = 4.0;
        let a = smallness_theta(0.4, 0.1, ca, 1.0, 1.0).unwrap();
        let b = smallness_theta(0.4, 0.1, ca, 1.0, 2.0).unwrap();
        assert!(a.theta.is_finite() && a.theta > b.theta);
    }

    #[test]
    fn parameter_gates() {
        assert!(smallness_theta(0.4, 0.2, 4.0, 1.0, 2.0).is_err());
        assert!(smallness_theta(0.4, 0.1, 1.0, 1.0, 2.0).is_err());
        assert!(smallness_theta(0.4, 0.1, 4.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(radial_cutoff(0.2, 0.4, 0.1), 1.0);
        assert_eq!(radial_cutoff(0.45, 0.4, 0.1), 0.0);
        let mut worst: f64 = 0.0;
        let n = 10_000;
        for k in 0..n {
            let d0 = 0.3 + 0.1 * k as f64 / n as f64;
            let d1 = d0 + 0.1 / n as f64;
            worst = worst.max((radial_cutoff(d1, 0.4, 0.1) - radial_cutoff(d0, 0.4, 0.1)).abs() / (0.1 / n as f64));
        }
        assert!(worst <= smoothstep_max_slope(0.1) * (1.0 + 1e-6));
        assert!(worst >= smoothstep_max_slope(0.1) * (1.0 - 1e-3));
    }
}
