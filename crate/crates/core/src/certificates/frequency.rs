use std::sync::Arc;

use crate::diffusion::EllipticOperator;
use crate::error::{invalid, KinError, Result};
use crate::grid::{ScalarField, SpatialGrid};

/// `G_λ(x, t) = (T - t + λ)^{-n/2} exp(-|x - x₀|² / (4 κ (T - t + λ)))` with `n = 2`.
pub fn gaussian_weight_at(p: [f64; 2], x0: [f64; 2], lambda: f64, t: f64, t_final: f64, kappa: f64) -> f64 {
    let tau = t_final - t + lambda;
    let r2 = (p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2);
    (-r2 / (4.0 * kappa * tau)).exp() / tau
}

pub fn gaussian_weight(
    grid: &Arc<SpatialGrid>,
    x0: [f64; 2],
    lambda: f64,
    t: f64,
    t_final: f64,
    kappa: f64,
) -> Result<ScalarField> {
    check(lambda, t, t_final, kappa)?;
    Ok(grid.sample(|x, y| gaussian_weight_at([x, y], x0, lambda, t, t_final, kappa)))
}

fn check(lambda: f64, t: f64, t_final: f64, kappa: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    if !(kappa > 0.0) {
        return invalid(format!("kappa must be positive, got {kappa}"));
    }
    if !(t >= 0.0 && t <= t_final * (1.0 + 1e-12)) {
        return invalid(format!("time {t} outside [0, {t_final}]"));
    }
    Ok(())
}

/// `N_λ` and the weighted mass `y = ∫ z² G_λ` along a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrace {
    pub times: Vec<f64>,
    pub lambda: f64,
    pub x0: [f64; 2],
    pub t_final: f64,
    pub values: Vec<f64>,
    pub masses: Vec<f64>,
}

impl FrequencyTrace {
    /// `(T - t + λ) N_λ(t)`.
    pub fn scaled(&self) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(t, n)| (self.t_final - t + self.lambda) * n)
            .collect()
    }

    /// Largest single-step increase of `(T - t + λ) N_λ`, relative to `N_λ(0)`.
    pub fn worst_relative_increase(&self) -> f64 {
        let s = self.scaled();
        let n0 = self.values[0];
        s.windows(2)
            .map(|w| (w[1] - w[0]) / n0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Numerator and denominator of `N_λ` for one field. Gradients live on the
/// faces of the elliptic stencil, with the weight sampled at face midpoints;
/// faces on `∂Ω` see the zero boundary value.
pub fn frequency_parts(
    op: &EllipticOperator,
    z: &ScalarField,
    x0: [f64; 2],
    lambda: f64,
    t: f64,
    t_final: f64,
    kappa: f64,
) -> (f64, f64) {
    let g = op.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (dx, dy) = (g.dx(), g.dy());
    let v = z.values();
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            0.0
        } else {
            v[j as usize * nx + i as usize]
        }
    };
    let w = |x: f64, y: f64| gaussian_weight_at([x, y], x0, lambda, t, t_final, kappa);
    let mut num = 0.0;
    for j in 0..ny {
        let y = (j + 1) as f64 * dy;
        for i in 0..=nx {
            let x = (i as f64 + 0.5) * dx;
            let gr = (at(i as isize, j as isize) - at(i as isize - 1, j as isize)) / dx;
            num += op.kappa_x(i, j) * gr * gr * w(x, y);
        }
    }
    for j in 0..=ny {
        let y = (j as f64 + 0.5) * dy;
        for i in 0..nx {
            let x = (i + 1) as f64 * dx;
            let gr = (at(i as isize, j as isize) - at(i as isize, j as isize - 1)) / dy;
            num += op.kappa_y(i, j) * gr * gr * w(x, y);
        }
    }
    let mut den = 0.0;
    for (k, val) in v.iter().enumerate() {
        let [x, y] = g.node_at(k);
        den += val * val * w(x, y);
    }
    (num * dx * dy, den * dx * dy)
}

/// Frequency function of a stored solution `z(t_k)`. The operator supplies
/// the face coefficients `A = κ I`; `kappa` fixes the distance in the weight.
pub fn frequency_function(
    op: &EllipticOperator,
    series: &[(f64, ScalarField)],
    x0: [f64; 2],
    lambda: f64,
    kappa: f64,
) -> Result<FrequencyTrace> {
    if series.is_empty() {
        return invalid("empty solution series");
    }
    let t_final = series.last().unwrap().0;
    let mut trace = FrequencyTrace {
        times: Vec::with_capacity(series.len()),
        lambda,
        x0,
        t_final,
        values: Vec::with_capacity(series.len()),
        masses: Vec::with_capacity(series.len()),
    };
    for (k, (t, z)) in series.iter().enumerate() {
        check(lambda, *t, t_final, kappa)?;
        if k > 0 && *t <= trace.times[k - 1] {
            return invalid("solution times must increase strictly");
        }
        let (num, den) = frequency_parts(op, z, x0, lambda, *t, t_final, kappa);
        if !(den > 0.0) {
            return Err(KinError::Undefined(format!("weighted mass vanishes at t = {t}")));
        }
        trace.times.push(*t);
        trace.values.push(num / den);
        trace.masses.push(den);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{run_heat, HeatScheme};
    use std::f64::consts::PI;

    #[test]
    fn weight_examples() {
        assert_eq!(gaussian_weight_at([0.3, 0.3], [0.3, 0.3], 1.0, 2.0, 2.0, 1.0), 1.0);
        let mut prev = f64::INFINITY;
        for r in [0.0, 0.1, 0.2, 0.5, 1.0] {
            let w = gaussian_weight_at([0.5 + r, 0.5], [0.5, 0.5], 0.05, 0.0, 0.2, 1.0);
            assert!(w <= prev);
            prev = w;
        }
    }

    #[test]
    fn weight_mass_normalisation() {
        // On a large square around x₀ the heat-kernel mass tends to 4π.
        let g = Arc::new(SpatialGrid::new(8.0, 8.0, 255, 255).unwrap());
        let w = gaussian_weight(&g, [4.0, 4.0], 0.05, 0.0, 0.2, 1.0).unwrap();
        let m = w.integral() / (4.0 * PI);
        assert!((m - 1.0).abs() < 1e-6, "{m}");
    }

    #[test]
    fn vanishing_data_is_undefined() {
        let g = Arc::new(SpatialGrid::unit_square(7).unwrap());
        let op = EllipticOperator::constant(&g, 1.0).unwrap();
        let z = ScalarField::zeros(&g);
        let series = vec![(0.0, z.clone()), (0.1, z)];
        assert!(matches!(
            frequency_function(&op, &series, [0.5, 0.5], 0.1, 1.0),
            Err(KinError::Undefined(_))
        ));
        let bad = vec![(0.0, g.sample(|x, _| x)), (0.1, g.sample(|x, _| x))];
        assert!(frequency_function(&op, &bad, [0.5, 0.5], 0.0, 1.0).is_err());
    }

    #[test]
    fn first_mode_frequency_is_positive_and_decreasing() {
        let g = Arc::new(SpatialGrid::unit_square(31).unwrap());
        let op = EllipticOperator::constant(&g, 1.0).unwrap();
        let u0 = g.sample(|x, y| (PI * x).sin() * (PI * y).sin());
        let run = run_heat(&op, &u0, 0.2, 100, HeatScheme::CrankNicolson).unwrap();
        let tr = frequency_function(&op, &run.states, [0.5, 0.5], 0.05, 1.0).unwrap();
        assert!(tr.values.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(tr.worst_relative_increase() <= 1e-6);
    }
}
