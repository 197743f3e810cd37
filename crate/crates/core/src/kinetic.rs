//! Time integration of the scaled kinetic equation
//! `∂t f + (1/ε) v·∇f + (a/ε²) S f = 0` with absorbing inflow boundary.
//!
//! Transport is first-order upwind, split by direction (an `x` sweep then a
//! `y` sweep). Each sweep is a convex combination of neighbouring values when
//! `|v_i| dt / (ε h_i) ≤ 1`, so the scheme is positivity preserving and
//! nonexpansive in every `L^η`, and its outflow telescopes exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, KinError, Result};
use crate::grid::{
    bump, velocity_average, KineticState, OpacityField, ScalarField, SpatialGrid, TraceEvent, TraceRecord,
    VelocityQuadrature,
};
use crate::scattering::{relax_in_place, ScatteringKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitting {
    Lie,
    Strang,
}

impl FromStr for Splitting {
    type Err = KinError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lie" => Ok(Splitting::Lie),
            "strang" => Ok(Splitting::Strang),
            other => invalid(format!("unknown splitting '{other}'")),
        }
    }
}

/// Initial data families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialProfile {
    Zero,
    /// `f₀ = g(x)` with `g = amplitude * (1 - s²)³`, `s = |x - center| / radius`.
    IsotropicBump {
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
    },
    /// `f₀ = g(x) (1 + ½ cos θ)`.
    AnisotropicBump {
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
    },
}

impl Default for InitialProfile {
    fn default() -> Self {
        InitialProfile::IsotropicBump {
            center: [0.5, 0.5],
            radius: 0.35,
            amplitude: 1.0,
        }
    }
}

impl InitialProfile {
    /// The spatial profile `g`.
    pub fn shape(&self, grid: &Arc<SpatialGrid>) -> ScalarField {
        match *self {
            InitialProfile::Zero => ScalarField::zeros(grid),
            InitialProfile::IsotropicBump {
                center,
                radius,
                amplitude,
            }
            | InitialProfile::AnisotropicBump {
                center,
                radius,
                amplitude,
            } => grid.sample(|x, y| amplitude * bump((x - center[0]).hypot(y - center[1]) / radius)),
        }
    }

    pub fn build(&self, grid: &Arc<SpatialGrid>, quad: &Arc<VelocityQuadrature>, epsilon: f64) -> Result<KineticState> {
        let g = self.shape(grid);
        match self {
            InitialProfile::AnisotropicBump { .. } => {
                let n = grid.n_nodes();
                let mut f = KineticState::zeros(grid, quad, epsilon)?;
                for j in 0..quad.nv() {
                    let factor = 1.0 + 0.5 * quad.angle(j).cos();
                    for k in 0..n {
                        f.values_mut()[j * n + k] = g.values()[k] * factor;
                    }
                }
                Ok(f)
            }
            _ => KineticState::isotropic(quad, &g, epsilon),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticRunConfig {
    pub t_final: f64,
    pub cfl: f64,
    pub splitting: Splitting,
    pub scattering: ScatteringKind,
    pub initial: InitialProfile,
    pub epsilon: f64,
    /// Times at which `⟨f⟩` is stored; `t_final` is always added.
    pub snapshot_times: Vec<f64>,
    pub record_trace: bool,
}

impl KineticRunConfig {
    pub fn new(t_final: f64, epsilon: f64, scattering: ScatteringKind) -> Self {
        Self {
            t_final,
            cfl: 1.0,
            splitting: Splitting::Lie,
            scattering,
            initial: InitialProfile::default(),
            epsilon,
            snapshot_times: Vec::new(),
            record_trace: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return invalid(format!("final time must be positive, got {}", self.t_final));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return invalid(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return invalid(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        for &t in &self.snapshot_times {
            if !(t > 0.0 && t <= self.t_final) {
                return invalid(format!("snapshot time {t} outside (0, {}]", self.t_final));
            }
        }
        Ok(())
    }
}

/// Everything recorded along a kinetic run. Per-step series are indexed by
/// step; `energy` and `mass` also hold the initial value at index 0.
#[derive(Debug, Clone)]
pub struct KineticRunRecord {
    pub final_state: KineticState,
    pub snapshots: Vec<(f64, ScalarField)>,
    pub trace: Option<TraceRecord>,
    /// Step lengths.
    pub dts: Vec<f64>,
    /// `‖f - ⟨f⟩‖²` right after each relaxation substep.
    pub anisotropy: Vec<f64>,
    /// `‖f‖²` after each step.
    pub energy: Vec<f64>,
    /// `∫⟨f⟩` after each step.
    pub mass: Vec<f64>,
    /// Mass leaving through `∂Ω` during each step, `(Δt/ε) · flux`.
    pub outflow: Vec<f64>,
}

impl KineticRunRecord {
    /// Right-endpoint quadrature of `∫₀ᵀ ‖f - ⟨f⟩‖² dt`.
    pub fn anisotropy_integral(&self) -> f64 {
        self.dts.iter().zip(&self.anisotropy).map(|(dt, a)| dt * a).sum()
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&ScalarField> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .map(|(_, u)| u)
    }
}

/// Result of one transport substep.
#[derive(Debug, Clone)]
pub struct TransportOutcome {
    pub state: KineticState,
    /// Boundary flux `(1/|S|) Σ_j w_j Σ_faces (v·n)⁺ f h`, so that the mass
    /// change of the step equals `-(dt/ε) · outflow`.
    pub outflow: f64,
    /// Outgoing face values, `[face][ordinate]`.
    pub trace: Vec<f64>,
}

/// Largest `dt` allowed by the transport stability condition at Courant number `cfl`.
pub fn max_stable_dt(grid: &SpatialGrid, quad: &VelocityQuadrature, epsilon: f64, cfl: f64) -> f64 {
    cfl * epsilon * grid.dx().min(grid.dy()) / quad.max_speed_component()
}

/// One upwind transport substep of length `dt` with zero inflow.
pub fn transport_step(f: &KineticState, dt: f64) -> Result<TransportOutcome> {
    let mut state = f.clone();
    let (outflow, trace) = transport_in_place(&mut state, dt)?;
    Ok(TransportOutcome { state, outflow, trace })
}

fn transport_in_place(f: &mut KineticState, dt: f64) -> Result<(f64, Vec<f64>)> {
    let grid = Arc::clone(f.grid());
    let quad = Arc::clone(f.quad());
    let eps = f.epsilon();
    let max_dt = max_stable_dt(&grid, &quad, eps, 1.0);
    if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
        return Err(KinError::Cfl { dt, max_dt });
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let n = grid.n_nodes();
    let nv = quad.nv();
    let (dx, dy) = (grid.dx(), grid.dy());

    // Per ordinate: (flux, outgoing value per face).
    let n_faces = grid.boundary_faces().len();
    let per_ordinate: Vec<(f64, Vec<f64>)> = f
        .values_mut()
        .par_chunks_mut(n)
        .enumerate()
        .map(|(j, block)| {
            let v = quad.velocity(j);
            let mut faces = vec![0.0; n_faces];
            let mut flux = 0.0;
            // x sweep
            let cx = v[0].abs() * dt / (eps * dx);
            if v[0] != 0.0 {
                for row in 0..ny {
                    let line = &mut block[row * nx..(row + 1) * nx];
                    if v[0] > 0.0 {
                        let out = line[nx - 1];
                        faces[ny + row] = out;
                        flux += v[0] * out * dy;
                        for i in (1..nx).rev() {
                            line[i] = (1.0 - cx) * line[i] + cx * line[i - 1];
                        }
                        line[0] *= 1.0 - cx;
                    } else {
                        let out = line[0];
                        faces[row] = out;
                        flux += -v[0] * out * dy;
                        for i in 0..nx - 1 {
                            line[i] = (1.0 - cx) * line[i] + cx * line[i + 1];
                        }
                        line[nx - 1] *= 1.0 - cx;
                    }
                }
            }
            // y sweep
            let cy = v[1].abs() * dt / (eps * dy);
            if v[1] != 0.0 {
                let bottom = 2 * ny;
                let top = 2 * ny + nx;
                if v[1] > 0.0 {
                    for i in 0..nx {
                        let out = block[(ny - 1) * nx + i];
                        faces[top + i] = out;
                        flux += v[1] * out * dx;
                    }
                    for row in (1..ny).rev() {
                        for i in 0..nx {
                            block[row * nx + i] = (1.0 - cy) * block[row * nx + i] + cy * block[(row - 1) * nx + i];
                        }
                    }
                    for x in &mut block[..nx] {
                        *x *= 1.0 - cy;
                    }
                } else {
                    for i in 0..nx {
                        let out = block[i];
                        faces[bottom + i] = out;
                        flux += -v[1] * out * dx;
                    }
                    for row in 0..ny - 1 {
                        for i in 0..nx {
                            block[row * nx + i] = (1.0 - cy) * block[row * nx + i] + cy * block[(row + 1) * nx + i];
                        }
                    }
                    for x in &mut block[(ny - 1) * nx..] {
                        *x *= 1.0 - cy;
                    }
                }
            }
            (flux * quad.weight(j), faces)
        })
        .collect();

    let mut outflow = 0.0;
    let mut trace = vec![0.0; n_faces * nv];
    for (j, (flux, faces)) in per_ordinate.into_iter().enumerate() {
        outflow += flux;
        for (fi, val) in faces.into_iter().enumerate() {
            trace[fi * nv + j] = val;
        }
    }
    outflow /= quad.sphere_measure();
    f.set_time(f.time() + dt);
    if !f.is_finite() {
        return Err(KinError::NonFinite("transport step"));
    }
    Ok((outflow, trace))
}

/// Integrates from `f0` to `config.t_final`.
///
/// The step inside each interval between consecutive snapshot times is the
/// largest stable step that divides the interval evenly.
pub fn run_kinetic(config: &KineticRunConfig, f0: &KineticState, a: &OpacityField) -> Result<KineticRunRecord> {
    config.validate()?;
    if (f0.epsilon() - config.epsilon).abs() > 0.0 {
        return invalid("initial state epsilon differs from the run configuration");
    }
    let grid = Arc::clone(f0.grid());
    let quad = Arc::clone(f0.quad());
    let max_dt = max_stable_dt(&grid, &quad, config.epsilon, config.cfl);
    // Strang transports over half steps, so the full step may double.
    let step_limit = match config.splitting {
        Splitting::Lie => max_dt,
        Splitting::Strang => 2.0 * max_dt,
    };

    let mut stops: Vec<f64> = config.snapshot_times.clone();
    stops.push(config.t_final);
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));

    let mut f = f0.clone();
    f.set_time(0.0);
    let mut rec = KineticRunRecord {
        final_state: f0.clone(),
        snapshots: Vec::with_capacity(stops.len()),
        trace: config
            .record_trace
            .then(|| TraceRecord::new(grid.boundary_faces().len(), quad.nv())),
        dts: Vec::new(),
        anisotropy: Vec::new(),
        energy: vec![f.l2_norm_sq()],
        mass: vec![f.mass()],
        outflow: Vec::new(),
    };

    let mut t = 0.0;
    for &stop in &stops {
        let len = stop - t;
        let steps = ((len / step_limit) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = len / steps as f64;
        for _ in 0..steps {
            let mut out_mass = 0.0;
            match config.splitting {
                Splitting::Lie => {
                    let (flux, tr) = transport_in_place(&mut f, dt)?;
                    out_mass += dt / config.epsilon * flux;
                    if let Some(r) = rec.trace.as_mut() {
                        r.events.push(TraceEvent { dt, values: tr });
                    }
                    relax_in_place(config.scattering, &mut f, a, dt)?;
                    rec.anisotropy.push(f.anisotropy_sq());
                }
                Splitting::Strang => {
                    let h = 0.5 * dt;
                    let (flux, tr) = transport_in_place(&mut f, h)?;
                    out_mass += h / config.epsilon * flux;
                    if let Some(r) = rec.trace.as_mut() {
                        r.events.push(TraceEvent { dt: h, values: tr });
                    }
                    relax_in_place(config.scattering, &mut f, a, dt)?;
                    rec.anisotropy.push(f.anisotropy_sq());
                    let (flux, tr) = transport_in_place(&mut f, h)?;
                    out_mass += h / config.epsilon * flux;
                    if let Some(r) = rec.trace.as_mut() {
                        r.events.push(TraceEvent { dt: h, values: tr });
                    }
                }
            }
            t += dt;
            f.set_time(t);
            rec.dts.push(dt);
            rec.outflow.push(out_mass);
            rec.energy.push(f.l2_norm_sq());
            rec.mass.push(f.mass());
        }
        t = stop;
        f.set_time(t);
        rec.snapshots.push((stop, velocity_average(&f)));
    }
    rec.final_state = f;
    Ok(rec)
}

/// `⟨v f⟩` componentwise.
pub fn compute_first_moment(f: &KineticState) -> [ScalarField; 2] {
    let grid = f.grid();
    let quad = f.quad();
    let n = grid.n_nodes();
    let inv = 1.0 / quad.sphere_measure();
    let mut m = [vec![0.0; n], vec![0.0; n]];
    let [m0v, m1v] = &mut m;
    for (k, (m0, m1)) in m0v.iter_mut().zip(m1v.iter_mut()).enumerate() {
        let (mut a0, mut a1) = (0.0, 0.0);
        for j in 0..quad.nv() {
            let v = quad.velocity(j);
            let w = quad.weight(j) * f.values()[j * n + k];
            a0 += w * v[0];
            a1 += w * v[1];
        }
        *m0 = a0 * inv;
        *m1 = a1 * inv;
    }
    let [m0, m1] = m;
    [
        ScalarField::from_values(grid, m0).expect("finite moments"),
        ScalarField::from_values(grid, m1).expect("finite moments"),
    ]
}

/// Number of bytes in a snapshot header: five little-endian `i64`.
pub const SNAPSHOT_HEADER_BYTES: usize = 40;

/// Writes `f` as a binary snapshot: header `(nx, ny, nv, step, flags)` as
/// little-endian `i64`, then `f64` values in row-major `(y, x, ordinate)` order.
pub fn write_snapshot(path: &Path, f: &KineticState, step: u64, flags: u64) -> Result<()> {
    let grid = f.grid();
    let nv = f.quad().nv();
    let n = grid.n_nodes();
    let mut w = BufWriter::new(File::create(path)?);
    for h in [grid.nx() as i64, grid.ny() as i64, nv as i64, step as i64, flags as i64] {
        w.write_all(&h.to_le_bytes())?;
    }
    for k in 0..n {
        for j in 0..nv {
            w.write_all(&f.values()[j * n + k].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Decoded snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub nv: usize,
    pub step: u64,
    pub flags: u64,
    /// Row-major `(y, x, ordinate)`.
    pub values: Vec<f64>,
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0i64; 5];
    let mut buf = [0u8; 8];
    for h in &mut header {
        r.read_exact(&mut buf)?;
        *h = i64::from_le_bytes(buf);
    }
    if header[..3].iter().any(|&h| h <= 0) || header[3] < 0 || header[4] < 0 {
        return invalid(format!("corrupt snapshot header {header:?}"));
    }
    let count = (header[0] * header[1] * header[2]) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return invalid(format!(
            "snapshot holds {} bytes of data, expected {}",
            bytes.len(),
            count * 8
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Snapshot {
        nx: header[0] as usize,
        ny: header[1] as usize,
        nv: header[2] as usize,
        step: header[3] as u64,
        flags: header[4] as u64,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{boundary_outflow_integral, lp_norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, nv: usize) -> (Arc<SpatialGrid>, Arc<VelocityQuadrature>) {
        (
            Arc::new(SpatialGrid::unit_square(n).unwrap()),
            Arc::new(VelocityQuadrature::new(nv).unwrap()),
        )
    }

    #[test]
    fn zero_stays_zero() {
        let (g, q) = setup(8, 8);
        let f = KineticState::zeros(&g, &q, 0.5).unwrap();
        let out = transport_step(&f, 0.01).unwrap();
        assert!(out.state.values().iter().all(|&v| v == 0.0));
        assert_eq!(out.outflow, 0.0);
        let a = OpacityField::constant(&g, 1.0).unwrap();
        let mut cfg = KineticRunConfig::new(0.1, 0.5, ScatteringKind::Neutron);
        cfg.record_trace = true;
        let rec = run_kinetic(&cfg, &f, &a).unwrap();
        assert!(rec.energy.iter().all(|&e| e == 0.0));
        assert!(rec.mass.iter().all(|&e| e == 0.0));
        assert!(rec.anisotropy.iter().all(|&e| e == 0.0));
        assert!(rec.final_state.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn refuses_unstable_steps() {
        let (g, q) = setup(8, 8);
        let f = KineticState::zeros(&g, &q, 0.5).unwrap();
        let max = max_stable_dt(&g, &q, 0.5, 1.0);
        match transport_step(&f, 2.0 * max) {
            Err(KinError::Cfl { max_dt, .. }) => assert!((max_dt - max).abs() < 1e-15),
            other => panic!("expected CFL error, got {other:?}"),
        }
    }

    #[test]
    fn bump_translates_along_x() {
        let (g, q) = setup(31, 4);
        let eps = 0.5;
        let f = KineticState::from_fn(&g, &q, eps, |x, y, t| {
            if t == 0.0 {
                bump((x - 0.3).hypot(y - 0.5) / 0.15)
            } else {
                0.0
            }
        })
        .unwrap();
        let dt = max_stable_dt(&g, &q, eps, 1.0);
        let mut s = f.clone();
        for _ in 0..5 {
            s = transport_step(&s, dt).unwrap().state;
        }
        // With Courant number one the profile shifts exactly one cell per step.
        for j in 0..g.ny() {
            for i in 5..g.nx() {
                let k = g.index(i, j);
                assert!((s.values()[k] - f.values()[g.index(i - 5, j)]).abs() < 1e-14);
            }
        }
        assert!((s.mass() - f.mass()).abs() < 1e-14);
    }

    #[test]
    fn first_moment_examples() {
        let (g, q) = setup(5, 8);
        let gfun = |x: f64, y: f64| x + 2.0 * y;
        let f = KineticState::from_fn(&g, &q, 1.0, |x, y, t| t.cos() * gfun(x, y)).unwrap();
        let [m0, m1] = compute_first_moment(&f);
        for k in 0..g.n_nodes() {
            let [x, y] = g.node_at(k);
            assert!((m0.values()[k] - gfun(x, y) / 2.0).abs() < 1e-14);
            assert!(m1.values()[k].abs() < 1e-14);
        }
        let c = KineticState::from_fn(&g, &q, 1.0, |_, _, _| 2.5).unwrap();
        let [c0, c1] = compute_first_moment(&c);
        assert!(c0.max_abs() < 1e-15 && c1.max_abs() < 1e-15);
    }

    #[test]
    fn transport_is_l2_nonexpansive_on_random_states() {
        let (g, q) = setup(8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let vals: Vec<f64> = (0..g.n_nodes() * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps = rng.random_range(0.05..1.0);
            let f = KineticState::from_values(&g, &q, eps, vals).unwrap();
            let dt = max_stable_dt(&g, &q, eps, rng.random_range(0.1..1.0));
            let out = transport_step(&f, dt).unwrap();
            assert!(out.state.l2_norm_sq() <= f.l2_norm_sq() * (1.0 + 1e-14));
        }
    }

    #[test]
    fn mass_balance_and_energy_decay() {
        let (g, q) = setup(15, 8);
        let a = OpacityField::from_fn(&g, |x, _| 1.0 + 0.5 * x).unwrap();
        for kind in [ScatteringKind::Neutron, ScatteringKind::FokkerPlanck] {
            for split in [Splitting::Lie, Splitting::Strang] {
                let mut cfg = KineticRunConfig::new(0.3, 0.4, kind);
                cfg.splitting = split;
                cfg.initial = InitialProfile::AnisotropicBump {
                    center: [0.4, 0.5],
                    radius: 0.4,
                    amplitude: 1.0,
                };
                let f0 = cfg.initial.build(&g, &q, 0.4).unwrap();
                let rec = run_kinetic(&cfg, &f0, &a).unwrap();
                for s in 0..rec.dts.len() {
                    let res = rec.mass[s + 1] - rec.mass[s] + rec.outflow[s];
                    assert!(res.abs() <= 1e-12 * rec.mass[0], "{kind:?} {split:?} step {s}: {res:e}");
                    assert!(rec.energy[s + 1] <= rec.energy[s] * (1.0 + 1e-14));
                }
                assert!((rec.dts.iter().sum::<f64>() - 0.3).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn interior_support_conserves_mass() {
        let (g, q) = setup(31, 8);
        let a = OpacityField::constant(&g, 1.0).unwrap();
        let mut cfg = KineticRunConfig::new(0.02, 0.5, ScatteringKind::Neutron);
        cfg.initial = InitialProfile::IsotropicBump {
            center: [0.5, 0.5],
            radius: 0.2,
            amplitude: 1.0,
        };
        let f0 = cfg.initial.build(&g, &q, 0.5).unwrap();
        let rec = run_kinetic(&cfg, &f0, &a).unwrap();
        let m0 = rec.mass[0];
        assert!(rec.mass.iter().all(|m| (m - m0).abs() <= 1e-12 * m0));
    }

    #[test]
    fn trace_estimate_holds_on_a_small_run() {
        let (g, q) = setup(15, 8);
        let a = OpacityField::constant(&g, 1.0).unwrap();
        let mut cfg = KineticRunConfig::new(0.5, 0.5, ScatteringKind::Neutron);
        cfg.record_trace = true;
        let f0 = cfg.initial.build(&g, &q, 0.5).unwrap();
        let rec = run_kinetic(&cfg, &f0, &a).unwrap();
        let tr = rec.trace.as_ref().unwrap();
        let w = boundary_outflow_integral(tr, &g, &q, 2.0, true).unwrap();
        let bound = 0.5 * lp_norm(&f0, 2.0, None).unwrap().powi(2);
        assert!(w > 0.0 && w <= bound);
        assert!((tr.duration() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn snapshot_round_trip() {
        let (g, q) = setup(4, 4);
        let f = KineticState::from_fn(&g, &q, 0.5, |x, y, t| x - y * t).unwrap();
        let dir = std::env::temp_dir().join(format!("kinlab-snap-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.bin");
        write_snapshot(&path, &f, 17, 1).unwrap();
        let s = read_snapshot(&path).unwrap();
        assert_eq!((s.nx, s.ny, s.nv, s.step, s.flags), (4, 4, 4, 17, 1));
        let n = g.n_nodes();
        for k in 0..n {
            for j in 0..4 {
                assert_eq!(s.values[k * 4 + j], f.values()[j * n + k]);
            }
        }
        assert_eq!(
            std::fs::metadata(&path).unwrap().len() as usize,
            SNAPSHOT_HEADER_BYTES + n * 4 * 8
        );
        std::fs::remove_dir_all(&dir).ok();
    }
}
