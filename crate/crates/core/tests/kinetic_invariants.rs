use std::sync::Arc;

use kinlab_core::grid::{
    boundary_outflow_integral, lp_norm, velocity_average, KineticState, OpacityProfile, SpatialGrid, VelocityQuadrature,
};
use kinlab_core::kinetic::{read_snapshot, run_kinetic, write_snapshot, KineticRunConfig, SNAPSHOT_HEADER_BYTES};
use kinlab_core::scattering::ScatteringKind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(n: usize, nv: usize) -> (Arc<SpatialGrid>, Arc<VelocityQuadrature>) {
    (
        Arc::new(SpatialGrid::unit_square(n).unwrap()),
        Arc::new(VelocityQuadrature::new(nv).unwrap()),
    )
}

fn random_state(g: &Arc<SpatialGrid>, q: &Arc<VelocityQuadrature>, eps: f64, seed: u64) -> KineticState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..g.n_nodes() * q.nv()).map(|_| rng.random_range(0.0..1.0)).collect();
    KineticState::from_values(g, q, eps, v).unwrap()
}

fn kind(fp: bool) -> ScatteringKind {
    if fp {
        ScatteringKind::FokkerPlanck
    } else {
        ScatteringKind::Neutron
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn runs_preserve_sign_and_dissipate(seed in any::<u64>(), eps in 0.05f64..1.0, fp in any::<bool>()) {
        let (g, q) = setup(12, 8);
        let a = OpacityProfile::Constant(1.5).build(&g).unwrap();
        let f0 = random_state(&g, &q, eps, seed);
        let cfg = KineticRunConfig::new(0.02, eps, kind(fp));
        let rec = run_kinetic(&cfg, &f0, &a).unwrap();
        prop_assert!(rec.final_state.values().iter().all(|&v| v >= -1e-14));
        for w in rec.energy.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        // Mass changes only through the boundary.
        for (k, out) in rec.outflow.iter().enumerate() {
            let lost = rec.mass[k] - rec.mass[k + 1];
            prop_assert!((lost - out).abs() <= 1e-10 * rec.mass[0].max(1.0));
        }
    }

    #[test]
    fn outflow_respects_the_eta_bound(seed in any::<u64>(), eta in 2.0f64..8.0) {
        let (g, q) = setup(12, 8);
        let eps = 0.3;
        let a = OpacityProfile::Constant(1.0).build(&g).unwrap();
        let f0 = random_state(&g, &q, eps, seed);
        let mut cfg = KineticRunConfig::new(0.05, eps, ScatteringKind::Neutron);
        cfg.record_trace = true;
        let rec = run_kinetic(&cfg, &f0, &a).unwrap();
        let trace = rec.trace.as_ref().unwrap();
        let out = boundary_outflow_integral(trace, &g, &q, eta, true).unwrap();
        let bound = eps * (2.0 / eta) * lp_norm(&f0, eta, None).unwrap().powf(eta);
        prop_assert!(out <= bound * (1.0 + 1e-9), "{out} > {bound}");
    }
}

#[test]
fn isotropic_data_relax_to_their_average() {
    let (g, q) = setup(10, 16);
    let shape = g.sample(|x, y| x * (1.0 - x) * y * (1.0 - y));
    let f0 = KineticState::isotropic(&q, &shape, 0.5).unwrap();
    assert!(velocity_average(&f0).sub(&shape).max_abs() < 1e-15);
    assert!(f0.anisotropy_sq() < 1e-28);
}

#[test]
fn snapshot_round_trip() {
    let (g, q) = setup(7, 8);
    let f = random_state(&g, &q, 0.2, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.bin");
    write_snapshot(&path, &f, 12, 3).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), SNAPSHOT_HEADER_BYTES + 8 * g.n_nodes() * q.nv());
    assert_eq!(i64::from_le_bytes(bytes[..8].try_into().unwrap()), 7);
    let s = read_snapshot(&path).unwrap();
    assert_eq!((s.nx, s.ny, s.nv, s.step, s.flags), (7, 7, 8, 12, 3));
    let n = g.n_nodes();
    for k in 0..n {
        for j in 0..q.nv() {
            assert_eq!(s.values[k * q.nv() + j].to_bits(), f.values()[j * n + k].to_bits());
        }
    }
    std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    assert!(read_snapshot(&path).is_err());
}
