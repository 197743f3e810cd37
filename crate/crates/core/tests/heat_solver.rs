use std::f64::consts::PI;
use std::sync::Arc;

use kinlab_core::diffusion::{
    eigendecompose, h_minus1_norm_sq, run_heat, solve_elliptic_with_stats, EllipticOperator, HeatScheme, CG_TOLERANCE,
};
use kinlab_core::grid::{OpacityProfile, ScalarField, SpatialGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize) -> Arc<SpatialGrid> {
    Arc::new(SpatialGrid::unit_square(n).unwrap())
}

fn random_field(g: &Arc<SpatialGrid>, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..g.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
    ScalarField::from_values(g, v).unwrap()
}

fn bump_operator(g: &Arc<SpatialGrid>) -> EllipticOperator {
    let a = OpacityProfile::Bump {
        base: 1.0,
        amplitude: 2.0,
        center: [0.4, 0.6],
        radius: 0.3,
    }
    .build(g)
    .unwrap();
    EllipticOperator::from_opacity(g, &a, 2).unwrap()
}

#[test]
fn fundamental_mode_decays_at_pi_squared() {
    // Unit opacity in 2D gives κ = 1/2, so sin(πx) sin(πy) decays like e^{-π² t}.
    let g = grid(127);
    let a = OpacityProfile::Constant(1.0).build(&g).unwrap();
    let op = EllipticOperator::from_opacity(&g, &a, 2).unwrap();
    let u0 = g.sample(|x, y| (PI * x).sin() * (PI * y).sin());
    for t in [0.05, 0.1, 0.2] {
        let run = run_heat(&op, &u0, t, 200, HeatScheme::CrankNicolson).unwrap();
        let ratio = run.final_state().l2_norm() / u0.l2_norm();
        let want = (-PI * PI * t).exp();
        assert!((ratio / want - 1.0).abs() <= 1e-3, "T={t}: {ratio} vs {want}");
        assert!(run.max_residual <= CG_TOLERANCE, "residual {}", run.max_residual);
    }
}

#[test]
fn cg_meets_residual_target_on_variable_coefficients() {
    let g = grid(63);
    let op = bump_operator(&g);
    for seed in 0..5 {
        let w = random_field(&g, seed);
        let (z, stats) = solve_elliptic_with_stats(&op, &w).unwrap();
        assert!(stats.residual <= CG_TOLERANCE);
        let r = op.apply(&z).sub(&w);
        assert!(r.l2_norm() <= 1e-9 * w.l2_norm());
    }
}

#[test]
fn backward_euler_and_crank_nicolson_agree_on_smooth_data() {
    let g = grid(31);
    let op = bump_operator(&g);
    let u0 = g.sample(|x, y| (PI * x).sin() * (2.0 * PI * y).sin());
    let cn = run_heat(&op, &u0, 0.05, 400, HeatScheme::CrankNicolson).unwrap();
    let be = run_heat(&op, &u0, 0.05, 400, HeatScheme::BackwardEuler).unwrap();
    let d = cn.final_state().sub(be.final_state()).l2_norm();
    assert!(d <= 5e-3 * cn.final_state().l2_norm(), "{d}");
}

#[test]
fn eigenpairs_satisfy_the_operator() {
    let g = grid(15);
    let op = bump_operator(&g);
    let basis = eigendecompose(&op, 10).unwrap();
    for (mu, e) in basis.values.iter().zip(&basis.vectors) {
        let r = op.apply(e).sub(&e.scaled(*mu));
        assert!(r.l2_norm() <= 1e-9 * mu, "mu={mu}");
        assert!((e.l2_norm() - 1.0).abs() < 1e-10);
        let h = h_minus1_norm_sq(&op, e).unwrap();
        assert!((h * mu - 1.0).abs() < 1e-8);
    }
    assert!(basis.values.windows(2).all(|w| w[0] <= w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_is_symmetric_and_positive(s1 in any::<u64>(), s2 in any::<u64>()) {
        let g = grid(20);
        let op = bump_operator(&g);
        let u = random_field(&g, s1);
        let v = random_field(&g, s2);
        let uv = op.apply(&u).inner(&v);
        let vu = u.inner(&op.apply(&v));
        prop_assert!((uv - vu).abs() <= 1e-10 * uv.abs().max(1.0));
        let e = op.apply(&u).inner(&u);
        prop_assert!(e > 0.0);
        prop_assert!((e - op.dirichlet_energy(&u)).abs() <= 1e-9 * e);
    }

    #[test]
    fn heat_flow_is_l2_nonexpansive(seed in any::<u64>(), steps in 1usize..30) {
        let g = grid(16);
        let op = bump_operator(&g);
        let u0 = random_field(&g, seed);
        for scheme in [HeatScheme::CrankNicolson, HeatScheme::BackwardEuler] {
            let run = run_heat(&op, &u0, 0.01, steps, scheme).unwrap();
            for w in run.states.windows(2) {
                prop_assert!(w[1].1.l2_norm() <= w[0].1.l2_norm() * (1.0 + 1e-12));
            }
        }
    }
}
