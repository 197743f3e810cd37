//! Scattering operators and their relaxation substeps.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid, KinError, Result};
use crate::grid::{velocity_average, KineticState, OpacityField};

/// The two collision models: projection onto isotropic states, or angular
/// diffusion on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScatteringKind {
    /// `S f = f - ⟨f⟩`.
    Neutron,
    /// `S f = -(1/(d-1)) Δ_S f`, discretised by the periodic 3-point stencil.
    FokkerPlanck,
}

impl fmt::Display for ScatteringKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScatteringKind::Neutron => "neutron",
            ScatteringKind::FokkerPlanck => "fokker_planck",
        })
    }
}

impl FromStr for ScatteringKind {
    type Err = KinError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "neutron" => Ok(ScatteringKind::Neutron),
            "fokker_planck" | "fokkerplanck" => Ok(ScatteringKind::FokkerPlanck),
            other => invalid(format!("unknown scattering kind '{other}'")),
        }
    }
}

/// Coefficient `r` of the angular stencil: `(S f)_j = -r (f_{j+1} - 2 f_j + f_{j-1})`.
fn angular_coefficient(f: &KineticState) -> f64 {
    let q = f.quad();
    let dth = q.dtheta();
    1.0 / ((q.dim() - 1) as f64 * dth * dth)
}

/// Evaluates `S f`.
pub fn apply_scattering(kind: ScatteringKind, f: &KineticState) -> KineticState {
    let n = f.grid().n_nodes();
    let nv = f.quad().nv();
    let mut out = f.clone();
    match kind {
        ScatteringKind::Neutron => {
            let avg = velocity_average(f);
            out.values_mut().par_chunks_mut(n).for_each(|block| {
                for (v, m) in block.iter_mut().zip(avg.values()) {
                    *v -= m;
                }
            });
        }
        ScatteringKind::FokkerPlanck => {
            let r = angular_coefficient(f);
            let src = f.values();
            out.values_mut().par_chunks_mut(n).enumerate().for_each(|(j, block)| {
                let jp = (j + 1) % nv;
                let jm = (j + nv - 1) % nv;
                for (k, v) in block.iter_mut().enumerate() {
                    let c = src[j * n + k];
                    *v = -r * (src[jp * n + k] - 2.0 * c + src[jm * n + k]);
                }
            });
        }
    }
    out
}

/// Advances `∂t f = -(a/ε²) S f` over `dt` with transport frozen.
pub fn relaxation_step(kind: ScatteringKind, f: &KineticState, a: &OpacityField, dt: f64) -> Result<KineticState> {
    let mut out = f.clone();
    relax_in_place(kind, &mut out, a, dt)?;
    Ok(out)
}

/// In-place form of [`relaxation_step`].
pub fn relax_in_place(kind: ScatteringKind, f: &mut KineticState, a: &OpacityField, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("relaxation time step must be positive, got {dt}"));
    }
    let n = f.grid().n_nodes();
    if a.dims() != (f.grid().nx(), f.grid().ny()) {
        return invalid("opacity field does not match the grid");
    }
    let eps2 = f.epsilon() * f.epsilon();
    match kind {
        ScatteringKind::Neutron => {
            let avg = velocity_average(f);
            let decay: Vec<f64> = (0..n).map(|k| (-a.at_node(k) * dt / eps2).exp()).collect();
            f.values_mut().par_chunks_mut(n).for_each(|block| {
                for k in 0..n {
                    let m = avg.values()[k];
                    block[k] = m + (block[k] - m) * decay[k];
                }
            });
        }
        ScatteringKind::FokkerPlanck => {
            let nv = f.quad().nv();
            if nv < 4 {
                return invalid("Fokker-Planck scattering needs at least 4 ordinates");
            }
            let r0 = angular_coefficient(f);
            let src = f.values();
            // Node-major scratch so that each angular solve is contiguous.
            let mut scratch = vec![0.0; n * nv];
            scratch.par_chunks_mut(nv).enumerate().for_each(|(k, line)| {
                for (j, x) in line.iter_mut().enumerate() {
                    *x = src[j * n + k];
                }
                let r = r0 * a.at_node(k) * dt / eps2;
                // The mean is invariant; solve for the deviation and re-centre
                // it so stiff solves cannot leak mass through rounding.
                let mean = line.iter().sum::<f64>() / nv as f64;
                line.iter_mut().for_each(|x| *x -= mean);
                solve_cyclic_symmetric(1.0 + 2.0 * r, -r, line);
                let drift = line.iter().sum::<f64>() / nv as f64;
                line.iter_mut().for_each(|x| *x += mean - drift);
            });
            let dst = f.values_mut();
            dst.par_chunks_mut(n).enumerate().for_each(|(j, block)| {
                for (k, v) in block.iter_mut().enumerate() {
                    *v = scratch[k * nv + j];
                }
            });
        }
    }
    if !f.is_finite() {
        return Err(KinError::NonFinite("relaxation step"));
    }
    Ok(())
}

/// Solves the symmetric periodic tridiagonal system with constant diagonal
/// `b` and constant off-diagonal `e` (including both corners) in place, by
/// Thomas elimination plus a Sherman-Morrison correction. Requires `|b| > 2|e|`.
pub fn solve_cyclic_symmetric(b: f64, e: f64, rhs: &mut [f64]) {
    let n = rhs.len();
    debug_assert!(n >= 3);
    if e == 0.0 {
        rhs.iter_mut().for_each(|x| *x /= b);
        return;
    }
    let gamma = -b;
    let mut diag = vec![b; n];
    diag[0] = b - gamma;
    diag[n - 1] = b - e * e / gamma;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = e;
    let mut cprime = vec![0.0; n];
    // Forward sweep on both right-hand sides.
    let mut denom = diag[0];
    cprime[0] = e / denom;
    rhs[0] /= denom;
    u[0] /= denom;
    for i in 1..n {
        denom = diag[i] - e * cprime[i - 1];
        if i + 1 < n {
            cprime[i] = e / denom;
        }
        rhs[i] = (rhs[i] - e * rhs[i - 1]) / denom;
        u[i] = (u[i] - e * u[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= cprime[i] * rhs[i + 1];
        u[i] -= cprime[i] * u[i + 1];
    }
    let fact = (rhs[0] + e * rhs[n - 1] / gamma) / (1.0 + u[0] + e * u[n - 1] / gamma);
    for i in 0..n {
        rhs[i] -= fact * u[i];
    }
}

/// `Σ_x Σ_j w_j f (S f) dx`, the discrete Dirichlet form.
pub fn dirichlet_form(kind: ScatteringKind, f: &KineticState) -> f64 {
    let sf = apply_scattering(kind, f);
    let n = f.grid().n_nodes();
    let q = f.quad();
    let mut acc = 0.0;
    for k in 0..n {
        for j in 0..q.nv() {
            acc += q.weight(j) * f.values()[j * n + k] * sf.values()[j * n + k];
        }
    }
    acc * f.grid().cell_volume()
}

/// Smallest nonzero eigenvalue of the discrete angular operator, i.e. the
/// discrete Poincaré constant on the circle.
pub fn angular_spectral_gap(kind: ScatteringKind, nv: usize, dim: usize) -> f64 {
    match kind {
        ScatteringKind::Neutron => 1.0,
        ScatteringKind::FokkerPlanck => {
            let dth = 2.0 * std::f64::consts::PI / nv as f64;
            (2.0 - 2.0 * dth.cos()) / (dth * dth) / (dim - 1) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ScalarField, SpatialGrid, VelocityQuadrature};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn setup(n: usize, nv: usize) -> (Arc<SpatialGrid>, Arc<VelocityQuadrature>) {
        (
            Arc::new(SpatialGrid::unit_square(n).unwrap()),
            Arc::new(VelocityQuadrature::new(nv).unwrap()),
        )
    }

    const KINDS: [ScatteringKind; 2] = [ScatteringKind::Neutron, ScatteringKind::FokkerPlanck];

    #[test]
    fn isotropic_states_are_equilibria() {
        let (g, q) = setup(6, 16);
        let f = KineticState::from_fn(&g, &q, 0.3, |x, y, _| x * y + 1.0).unwrap();
        let a = OpacityField::constant(&g, 2.0).unwrap();
        for kind in KINDS {
            let sf = apply_scattering(kind, &f);
            assert!(sf.values().iter().all(|v| v.abs() < 1e-12));
            let r = relaxation_step(kind, &f, &a, 0.7).unwrap();
            for (x, y) in r.values().iter().zip(f.values()) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn neutron_leaves_zero_mean_modes_alone() {
        let (g, q) = setup(4, 16);
        let f = KineticState::from_fn(&g, &q, 1.0, |_, _, t| t.cos()).unwrap();
        let sf = apply_scattering(ScatteringKind::Neutron, &f);
        for (x, y) in sf.values().iter().zip(f.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn fokker_planck_symbol() {
        let (g, q) = setup(4, 64);
        let f = KineticState::from_fn(&g, &q, 1.0, |_, _, t| (2.0 * t).cos()).unwrap();
        let dth = q.dtheta();
        let lam = (2.0 - 2.0 * (2.0 * dth).cos()) / (dth * dth);
        assert!((lam - 4.0).abs() < 0.02);
        let sf = apply_scattering(ScatteringKind::FokkerPlanck, &f);
        for (x, y) in sf.values().iter().zip(f.values()) {
            assert!((x - lam * y).abs() < 1e-10);
        }
    }

    #[test]
    fn neutron_relaxation_closed_form() {
        let (g, q) = setup(3, 8);
        // ⟨f⟩ = 1 with deviation +2 at ordinate 0 and -2 at ordinate 4.
        let f = KineticState::from_fn(&g, &q, 0.5, |_, _, t| {
            if t == 0.0 {
                3.0
            } else if (t - std::f64::consts::PI).abs() < 1e-12 {
                -1.0
            } else {
                1.0
            }
        })
        .unwrap();
        let eps2 = 0.25;
        let a = OpacityField::constant(&g, 1.0).unwrap();
        let dt = 2f64.ln() * eps2;
        let r = relaxation_step(ScatteringKind::Neutron, &f, &a, dt).unwrap();
        assert_relative_eq!(r.at(0, 0), 2.0, epsilon = 1e-14);
        assert_relative_eq!(r.at(0, 4), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn cyclic_solver_matches_dense() {
        let n = 9;
        let (b, e) = (3.5, -1.2);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 0.1).collect();
        let mut x = rhs.clone();
        solve_cyclic_symmetric(b, e, &mut x);
        for i in 0..n {
            let ax = b * x[i] + e * x[(i + 1) % n] + e * x[(i + n - 1) % n];
            assert!((ax - rhs[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn discrete_poincare_constant() {
        for nv in [64, 128] {
            let gap = angular_spectral_gap(ScatteringKind::FokkerPlanck, nv, 2);
            assert!(gap >= 0.99, "{gap}");
            // Dense oracle for the stencil matrix.
            let dth = 2.0 * std::f64::consts::PI / nv as f64;
            let m = nalgebra::DMatrix::from_fn(nv, nv, |i, j| {
                let d = (i + nv - j) % nv;
                let r = 1.0 / (dth * dth);
                if d == 0 {
                    2.0 * r
                } else if d == 1 || d == nv - 1 {
                    -r
                } else {
                    0.0
                }
            });
            let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!(ev[0].abs() < 1e-9);
            assert_relative_eq!(ev[1], gap, max_relative = 1e-10);
        }
    }

    #[test]
    fn fokker_planck_relaxation_rejects_bad_dt() {
        let (g, q) = setup(3, 8);
        let f = KineticState::zeros(&g, &q, 1.0).unwrap();
        let a = OpacityField::constant(&g, 1.0).unwrap();
        assert!(relaxation_step(ScatteringKind::FokkerPlanck, &f, &a, 0.0).is_err());
        assert!(relaxation_step(ScatteringKind::Neutron, &f, &a, -1.0).is_err());
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for kind in KINDS {
            assert_eq!(kind.to_string().parse::<ScatteringKind>().unwrap(), kind);
        }
        assert!("elastic".parse::<ScatteringKind>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn state(vals: Vec<f64>, nv: usize, eps: f64) -> KineticState {
            let (g, q) = setup(4, nv);
            KineticState::from_values(&g, &q, eps, vals).unwrap()
        }

        proptest! {
            #[test]
            fn scattering_has_zero_average(vals in proptest::collection::vec(-3.0f64..3.0, 16 * 8)) {
                let f = state(vals, 8, 0.5);
                for kind in KINDS {
                    let avg = velocity_average(&apply_scattering(kind, &f));
                    prop_assert!(avg.max_abs() <= 1e-13 * (1.0 + f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))));
                }
            }

            #[test]
            fn dirichlet_form_is_nonnegative(vals in proptest::collection::vec(-3.0f64..3.0, 16 * 8)) {
                let f = state(vals, 8, 0.5);
                for kind in KINDS {
                    prop_assert!(dirichlet_form(kind, &f) >= -1e-12);
                }
                let d = dirichlet_form(ScatteringKind::Neutron, &f);
                prop_assert!((d - f.anisotropy_sq()).abs() <= 1e-10 * (1.0 + d));
            }

            #[test]
            fn neutron_is_a_projection(vals in proptest::collection::vec(-3.0f64..3.0, 16 * 8)) {
                let f = state(vals, 8, 0.5);
                let s1 = apply_scattering(ScatteringKind::Neutron, &f);
                let s2 = apply_scattering(ScatteringKind::Neutron, &s1);
                for (x, y) in s1.values().iter().zip(s2.values()) {
                    prop_assert!((x - y).abs() <= 1e-14);
                }
            }

            #[test]
            fn relaxation_conserves_mass_and_contracts(
                vals in proptest::collection::vec(-3.0f64..3.0, 16 * 16),
                dt in 1e-4f64..10.0,
                eps in 0.05f64..1.0,
                amp in 0.0f64..2.0,
            ) {
                let f = state(vals, 16, eps);
                let a = OpacityField::from_fn(f.grid(), |x, y| 1.0 + amp * x * y).unwrap();
                let before: ScalarField = velocity_average(&f);
                for kind in KINDS {
                    let r = relaxation_step(kind, &f, &a, dt).unwrap();
                    let after = velocity_average(&r);
                    for (x, y) in before.values().iter().zip(after.values()) {
                        prop_assert!((x - y).abs() <= 1e-13 * (1.0 + x.abs()));
                    }
                    prop_assert!(r.anisotropy_sq() <= f.anisotropy_sq() * (1.0 + 1e-12) + 1e-15);
                }
            }
        }
    }
}
