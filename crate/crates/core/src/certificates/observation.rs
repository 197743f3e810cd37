use std::sync::Arc;

use super::constants::{data_quality, observation_prefactor, sigma, trace_factor, vacuity_threshold};
use super::smallness::smoothstep;
use crate::diffusion::{h_minus1_norm, h_minus1_norm_sq, EllipticOperator};
use crate::error::{invalid, KinError, Result};
use crate::grid::{lp_norm, velocity_average, KineticState, Mask, ScalarField, SpatialGrid};

/// Both sides of `∫|u(T)|² ≤ (c ∫_ω |u(T)|²)^{1-μ} (∫|u(0)|²)^μ`.
pub fn interpolation_sides(u0: &ScalarField, ut: &ScalarField, omega: &Mask, mu: f64, c: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0 && mu < 1.0) {
        return invalid(format!("interpolation exponent must lie in (0, 1), got {mu}"));
    }
    if !(c > 0.0) {
        return invalid(format!("interpolation constant must be positive, got {c}"));
    }
    let lhs = ut.l2_norm().powi(2);
    let rhs = (c * ut.l2_norm_sq_on(omega)).powf(1.0 - mu) * u0.l2_norm().powi(2).powf(mu);
    Ok((lhs, rhs))
}

/// Smallest `ln c` for which the interpolation inequality holds on one
/// sample: `(ln A - μ ln Z)/(1 - μ) - ln W` with `A = ∫|u(T)|²`,
/// `Z = ∫|u(0)|²`, `W = ∫_ω|u(T)|²`. `-∞` when `u(T) ≡ 0`.
pub fn interpolation_log_constant(u0: &ScalarField, ut: &ScalarField, omega: &Mask, mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) {
        return invalid(format!("interpolation exponent must lie in (0, 1), got {mu}"));
    }
    let a = ut.l2_norm().powi(2);
    if a == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let w = ut.l2_norm_sq_on(omega);
    if w == 0.0 {
        return Err(KinError::Undefined("solution vanishes on the observation set".into()));
    }
    let z = u0.l2_norm().powi(2);
    Ok((a.ln() - mu * z.ln()) / (1.0 - mu) - w.ln())
}

/// `y = ‖u‖²_{H⁻¹}` and the Dirichlet quotient `N = ‖u‖²/y` along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletQuotientTrace {
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub n: Vec<f64>,
}

impl DirichletQuotientTrace {
    /// Largest single-step increase of `N`, relative to `N(0)`.
    pub fn worst_relative_increase(&self) -> f64 {
        self.n
            .windows(2)
            .map(|w| (w[1] - w[0]) / self.n[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(y(0), e^{2 T N(0)} y(T))`, with `T` the elapsed time of the trace.
    pub fn backward_bound(&self) -> (f64, f64) {
        let t = self.times[self.times.len() - 1] - self.times[0];
        let last = self.y[self.y.len() - 1];
        (self.y[0], (2.0 * t * self.n[0]).exp() * last)
    }
}

pub fn dirichlet_quotient_series(
    op: &EllipticOperator,
    states: &[(f64, ScalarField)],
) -> Result<DirichletQuotientTrace> {
    if states.is_empty() {
        return invalid("empty solution series");
    }
    let mut tr = DirichletQuotientTrace {
        times: Vec::with_capacity(states.len()),
        y: Vec::with_capacity(states.len()),
        n: Vec::with_capacity(states.len()),
    };
    for (t, u) in states {
        let y = h_minus1_norm_sq(op, u)?;
        if !(y > 0.0) {
            return Err(KinError::Undefined(format!("H^-1 norm vanishes at t = {t}")));
        }
        tr.times.push(*t);
        tr.n.push(u.l2_norm().powi(2) / y);
        tr.y.push(y);
    }
    Ok(tr)
}

/// Trapezoidal `∫_0^T ‖u(t)‖_{L²(B)} dt` over a stored run.
pub fn time_integrated_observation(states: &[(f64, ScalarField)], mask: &Mask) -> f64 {
    states
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1.l2_norm_sq_on(mask).sqrt() + w[1].1.l2_norm_sq_on(mask).sqrt()))
        .sum()
}

/// `χ(x, y) = S((x - x₀)/w) S((x₁ - x)/w) S((y - y₀)/w) S((y₁ - y)/w)` with
/// the quintic smoothstep `S`: `C²`, equal to 1 at distance `≥ w` inside the
/// rectangle and 0 outside it.
pub fn plateau_cutoff(grid: &Arc<SpatialGrid>, rect: [f64; 4], width: f64) -> Result<ScalarField> {
    let [x0, x1, y0, y1] = rect;
    if !(width > 0.0 && x1 - x0 > 2.0 * width && y1 - y0 > 2.0 * width) {
        return invalid(format!("plateau width {width} does not fit in {rect:?}"));
    }
    Ok(grid.sample(|x, y| {
        smoothstep((x - x0) / width)
            * smoothstep((x1 - x) / width)
            * smoothstep((y - y0) / width)
            * smoothstep((y1 - y) / width)
    }))
}

/// Inputs of the end-to-end observation check at one `ε`.
#[derive(Debug, Clone, Copy)]
pub struct ObservationInput<'a> {
    pub f0: &'a KineticState,
    /// `⟨f⟩(·, T)` of the kinetic run.
    pub average_t: &'a ScalarField,
    /// Diffusion solution `u(·, T)` started from `⟨f₀⟩`.
    pub u_t: &'a ScalarField,
    pub op: &'a EllipticOperator,
    pub omega: &'a Mask,
    pub chi: &'a ScalarField,
    pub p: f64,
    pub t_final: f64,
    pub c: f64,
    /// Constant of the cutoff defect bound, once fitted.
    pub defect_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationReport {
    pub epsilon: f64,
    pub sigma: Option<f64>,
    pub prefactor: Option<f64>,
    pub epsilon0: Option<f64>,
    pub vacuous: bool,
    /// `prefactor · ‖⟨f₀⟩‖`.
    pub lhs: f64,
    /// `e^σ ‖⟨f⟩(T)‖_{L²(ω)}`.
    pub rhs: f64,
    /// `‖χ(⟨f⟩(T) - u(T))‖_{H⁻¹}`.
    pub defect: f64,
    /// `ε^{1/(2p)} (1 + T^{(p-1)/(2p)} C_p) ‖f₀‖_{L^{2p}}`; the defect bound is
    /// this times the fitted constant.
    pub defect_scale: f64,
    pub defect_bound: Option<f64>,
}

impl ObservationReport {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

pub fn observation_certificate(input: &ObservationInput) -> Result<ObservationReport> {
    let eps = input.f0.epsilon();
    let p = input.p;
    let diff = input.chi.mul(&input.average_t.sub(input.u_t));
    let defect = h_minus1_norm(input.op, &diff)?;
    let defect_scale = eps.powf(1.0 / (2.0 * p)) * trace_factor(p, input.t_final)? * lp_norm(input.f0, 2.0 * p, None)?;
    let defect_bound = input.defect_constant.map(|c| c * defect_scale);
    let avg0 = velocity_average(input.f0);
    if avg0.is_zero() {
        let rhs = input.average_t.l2_norm_sq_on(input.omega).sqrt();
        return Ok(ObservationReport {
            epsilon: eps,
            sigma: None,
            prefactor: None,
            epsilon0: None,
            vacuous: false,
            lhs: 0.0,
            rhs,
            defect,
            defect_scale,
            defect_bound,
        });
    }
    let dq = data_quality(input.f0, input.op, p)?;
    let s = sigma(&dq, input.t_final, input.c)?;
    let pre = observation_prefactor(eps, &dq, input.t_final, s)?;
    let eps0 = vacuity_threshold(&dq, input.t_final, s)?;
    Ok(ObservationReport {
        epsilon: eps,
        sigma: Some(s),
        prefactor: Some(pre),
        epsilon0: Some(eps0),
        vacuous: pre <= 0.0,
        lhs: pre * avg0.l2_norm(),
        rhs: s.exp() * input.average_t.l2_norm_sq_on(input.omega).sqrt(),
        defect,
        defect_scale,
        defect_bound,
    })
}

/// Smallest `C` in `‖χu‖ ≤ C ‖χu‖_{H⁻¹}^{1/2} (1 + T^{-1/4}) ‖⟨f₀⟩‖^{1/2}`.
pub fn regularizing_constant(op: &EllipticOperator, chi_u: &ScalarField, t: f64, avg0: &ScalarField) -> Result<f64> {
    let den = h_minus1_norm(op, chi_u)?.sqrt() * (1.0 + t.powf(-0.25)) * avg0.l2_norm().sqrt();
    if den == 0.0 {
        return Err(KinError::Undefined(
            "regularizing ratio has a vanishing denominator".into(),
        ));
    }
    Ok(chi_u.l2_norm() / den)
}
