use crate::diffusion::{h_minus1_norm, EllipticOperator};
use crate::error::{invalid, KinError, Result};
use crate::grid::{lp_norm, velocity_average, KineticState};

/// `C_p = ((p-1)/(p-2))^{(p-1)/(2p)} (1/p)^{1/(2p)}`, the trace-interpolation constant.
pub fn c_p(p: f64) -> Result<f64> {
    if !(p > 2.0 && p.is_finite()) {
        return invalid(format!("C_p needs p > 2, got {p}"));
    }
    let a = ((p - 1.0) / (p - 2.0)).ln() * (p - 1.0) / (2.0 * p);
    let b = -p.ln() / (2.0 * p);
    Ok((a + b).exp())
}

/// Shape and frequency ratios of the initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataQuality {
    /// `‖f₀‖_{L^{2p}(Ω×S)} / ‖⟨f₀⟩‖_{L²(Ω)}`.
    pub m_p: f64,
    /// `‖⟨f₀⟩‖²_{L²} / ‖⟨f₀⟩‖²_{H⁻¹}`.
    pub f_freq: f64,
    pub p: f64,
}

pub fn data_quality(f0: &KineticState, op: &EllipticOperator, p: f64) -> Result<DataQuality> {
    if !(p > 2.0 && p.is_finite()) {
        return invalid(format!("data quality needs p > 2, got {p}"));
    }
    let avg = velocity_average(f0);
    let l2 = lp_norm(&avg, 2.0, None)?;
    if l2 == 0.0 {
        return Err(KinError::Undefined(
            "velocity average of the initial data vanishes".into(),
        ));
    }
    let m_p = lp_norm(f0, 2.0 * p, None)? / l2;
    let h = h_minus1_norm(op, &avg)?;
    Ok(DataQuality {
        m_p,
        f_freq: (l2 / h).powi(2),
        p,
    })
}

/// `σ = c (1 + 1/T + T 𝔽)`.
pub fn sigma(dq: &DataQuality, t: f64, c: f64) -> Result<f64> {
    if !(t > 0.0) || !(c > 0.0) {
        return invalid(format!("sigma needs T > 0 and c > 0, got T = {t}, c = {c}"));
    }
    Ok(c * (1.0 + 1.0 / t + t * dq.f_freq))
}

/// `1 + T^{(p-1)/(2p)} C_p`.
pub fn trace_factor(p: f64, t: f64) -> Result<f64> {
    Ok(1.0 + t.powf((p - 1.0) / (2.0 * p)) * c_p(p)?)
}

/// `1 - ε^{1/(2p)} (1 + T^{(p-1)/(2p)} C_p) 𝕄_p e^σ`; nonpositive means the
/// observation inequality carries no information.
pub fn observation_prefactor(epsilon: f64, dq: &DataQuality, t: f64, sigma: f64) -> Result<f64> {
    let p = dq.p;
    Ok(1.0 - epsilon.powf(1.0 / (2.0 * p)) * trace_factor(p, t)? * dq.m_p * sigma.exp())
}

/// `ε₀ = ((1 + T^{(p-1)/(2p)} C_p) 𝕄_p e^σ)^{-2p}`, the largest `ε` below
/// which the observation inequality is informative. Computed in logs.
pub fn vacuity_threshold(dq: &DataQuality, t: f64, sigma: f64) -> Result<f64> {
    let p = dq.p;
    let log = trace_factor(p, t)?.ln() + dq.m_p.ln() + sigma;
    Ok((-2.0 * p * log).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ScalarField, SpatialGrid, VelocityQuadrature};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn c_p_values() {
        assert_relative_eq!(
            c_p(3.0).unwrap(),
            2f64.powf(1.0 / 3.0) * 3f64.powf(-1.0 / 6.0),
            max_relative = 1e-15
        );
        assert!((c_p(3.0).unwrap() - 1.0491).abs() < 5e-5);
        assert!((c_p(4.0).unwrap() - 0.9790).abs() < 5e-5);
        assert!((c_p(1e6).unwrap() - 1.0).abs() < 1e-4);
        assert!(c_p(2.0).is_err());
        assert!(c_p(1.5).is_err());
    }

    #[test]
    fn sigma_values() {
        let dq = DataQuality {
            m_p: 1.0,
            f_freq: 0.0,
            p: 3.0,
        };
        assert_relative_eq!(sigma(&dq, 1.0, 1.0).unwrap(), 2.0);
        let dq = DataQuality { f_freq: PI * PI, ..dq };
        assert!((sigma(&dq, 1.0, 1.0).unwrap() - 11.8696).abs() < 1e-4);
        let tstar = 1.0 / dq.f_freq.sqrt();
        assert_relative_eq!(
            sigma(&dq, tstar, 1.0).unwrap(),
            1.0 + 2.0 * dq.f_freq.sqrt(),
            max_relative = 1e-14
        );
        assert!(sigma(&dq, 0.0, 1.0).is_err());
    }

    #[test]
    fn first_mode_frequency() {
        let g = Arc::new(SpatialGrid::unit_square(63).unwrap());
        let q = Arc::new(VelocityQuadrature::new(8).unwrap());
        let op = EllipticOperator::constant(&g, 0.5).unwrap();
        let e1 = g.sample(|x, y| (PI * x).sin() * (PI * y).sin());
        let f0 = KineticState::isotropic(&q, &e1, 0.5).unwrap();
        let dq = data_quality(&f0, &op, 3.0).unwrap();
        // Discrete first eigenvalue of the 5-point operator.
        let h = g.dx();
        let mu1 = 0.5 * 2.0 * 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        assert_relative_eq!(dq.f_freq, mu1, max_relative = 1e-6);
        assert!((dq.f_freq - PI * PI).abs() < 1e-3 * PI * PI);
        let expected = lp_norm(&f0, 6.0, None).unwrap() / e1.l2_norm();
        assert_relative_eq!(dq.m_p, expected, max_relative = 1e-14);
        let zero = KineticState::isotropic(&q, &ScalarField::zeros(&g), 0.5).unwrap();
        assert!(matches!(data_quality(&zero, &op, 3.0), Err(KinError::Undefined(_))));
    }

    #[test]
    fn vacuity_matches_prefactor_sign() {
        let dq = DataQuality {
            m_p: 1.3,
            f_freq: 30.0,
            p: 3.0,
        };
        let s = sigma(&dq, 0.1, 0.05).unwrap();
        let e0 = vacuity_threshold(&dq, 0.1, s).unwrap();
        assert!(observation_prefactor(e0 * 0.99, &dq, 0.1, s).unwrap() > 0.0);
        assert!(observation_prefactor(e0 * 1.01, &dq, 0.1, s).unwrap() < 0.0);
        assert!(observation_prefactor(e0, &dq, 0.1, s).unwrap().abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn c_p_is_finite_and_continuous(p in 2.0001f64..1e6) {
                let a = c_p(p).unwrap();
                let b = c_p(p * (1.0 + 1e-9)).unwrap();
                prop_assert!(a.is_finite() && a > 0.0);
                prop_assert!((a - b).abs() <= 1e-6 * a);
            }

            #[test]
            fn data_quality_is_scale_invariant(c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], r in 0.15f64..0.45) {
                let g = Arc::new(SpatialGrid::unit_square(15).unwrap());
                let q = Arc::new(VelocityQuadrature::new(8).unwrap());
                let a = crate::grid::OpacityField::from_fn(&g, |x, _| 1.0 + 0.5 * x).unwrap();
                let op = EllipticOperator::from_opacity(&g, &a, 2).unwrap();
                let f0 = KineticState::from_fn(&g, &q, 0.5, |x, y, t| {
                    crate::grid::bump((x - 0.5).hypot(y - 0.5) / r) * (1.0 + 0.3 * t.sin())
                }).unwrap();
                let d1 = data_quality(&f0, &op, 3.0).unwrap();
                let d2 = data_quality(&f0.scaled(c), &op, 3.0).unwrap();
                prop_assert!((d1.m_p - d2.m_p).abs() <= 1e-10 * d1.m_p);
                prop_assert!((d1.f_freq - d2.f_freq).abs() <= 1e-8 * d1.f_freq);
            }
        }
    }
}
