use std::str::FromStr;

use super::elliptic::{solve_shifted, CgStats, EllipticOperator};
use crate::error::{invalid, KinError, Result};
use crate::grid::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeatScheme {
    BackwardEuler,
    #[default]
    CrankNicolson,
}

impl FromStr for HeatScheme {
    type Err = KinError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "backward_euler" | "be" => Ok(HeatScheme::BackwardEuler),
            "crank_nicolson" | "cn" => Ok(HeatScheme::CrankNicolson),
            other => invalid(format!("unknown time scheme '{other}'")),
        }
    }
}

/// One step of `∂t u + L u = 0`.
pub fn heat_step(u: &ScalarField, op: &EllipticOperator, dt: f64, scheme: HeatScheme) -> Result<ScalarField> {
    heat_step_with_stats(u, op, dt, scheme).map(|(v, _)| v)
}

pub fn heat_step_with_stats(
    u: &ScalarField,
    op: &EllipticOperator,
    dt: f64,
    scheme: HeatScheme,
) -> Result<(ScalarField, CgStats)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("heat time step must be positive, got {dt}"));
    }
    let n = op.n();
    let mut x = u.values().to_vec();
    let stats = match scheme {
        HeatScheme::BackwardEuler => solve_shifted(op, 1.0, dt, u.values(), &mut x)?,
        HeatScheme::CrankNicolson => {
            let mut rhs = vec![0.0; n];
            op.apply_into(u.values(), &mut rhs);
            for (r, v) in rhs.iter_mut().zip(u.values()) {
                *r = v - 0.5 * dt * *r;
            }
            solve_shifted(op, 1.0, 0.5 * dt, &rhs, &mut x)?
        }
    };
    Ok((ScalarField::from_values(op.grid(), x)?, stats))
}

/// Stored output of [`run_heat`].
#[derive(Debug, Clone)]
pub struct HeatRun {
    /// `(t_k, u(t_k))` for `k = 0..=steps`.
    pub states: Vec<(f64, ScalarField)>,
    /// Worst final CG residual over all steps.
    pub max_residual: f64,
}

impl HeatRun {
    pub fn final_state(&self) -> &ScalarField {
        &self.states.last().expect("at least the initial state").1
    }
}

/// Runs `steps` uniform steps up to `t_final`, keeping every state.
pub fn run_heat(
    op: &EllipticOperator,
    u0: &ScalarField,
    t_final: f64,
    steps: usize,
    scheme: HeatScheme,
) -> Result<HeatRun> {
    if steps == 0 || !(t_final > 0.0) {
        return invalid("heat run needs a positive final time and at least one step");
    }
    let dt = t_final / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    states.push((0.0, u0.clone()));
    let mut max_residual: f64 = 0.0;
    let mut u = u0.clone();
    for s in 1..=steps {
        let (next, stats) = heat_step_with_stats(&u, op, dt, scheme)?;
        max_residual = max_residual.max(stats.residual);
        u = next;
        let t = if s == steps { t_final } else { s as f64 * dt };
        states.push((t, u.clone()));
    }
    Ok(HeatRun { states, max_residual })
}
