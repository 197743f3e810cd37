//! Discrete geometry: the node-centred rectangular grid, the velocity
//! ordinates on the unit circle, and the fields living on them.
//!
//! Interior nodes sit at `((i + 1) dx, (j + 1) dy)` with `dx = lx / (nx + 1)`;
//! the ring of boundary nodes carries the homogeneous Dirichlet value. All
//! volume integrals use the same `dx * dy` cell weight so that discrete
//! integration-by-parts identities hold exactly. Reductions run in a fixed
//! order (row-major over nodes, then ordinate index).

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{invalid, KinError, Result};

/// Which edge of the rectangle a boundary face lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

/// A boundary face attached to an interior node adjacent to `∂Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    /// Row-major index of the adjacent interior node.
    pub cell: usize,
    pub edge: Edge,
    /// Outward unit normal.
    pub normal: [f64; 2],
    /// Length of the boundary segment owned by the node. The segments
    /// partition the edge, so the end nodes own an extra half spacing.
    pub length: f64,
}

/// Uniform node-centred grid on `(0, lx) x (0, ly)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    faces: Vec<BoundaryFace>,
}

impl SpatialGrid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return invalid(format!("domain lengths must be positive, got {lx} x {ly}"));
        }
        if nx < 2 || ny < 2 {
            return invalid(format!("need at least 2x2 interior nodes, got {nx}x{ny}"));
        }
        let dx = lx / (nx + 1) as f64;
        let dy = ly / (ny + 1) as f64;
        let seg = |k: usize, n: usize, h: f64| {
            if n == 1 {
                (n + 1) as f64 * h
            } else if k == 0 || k + 1 == n {
                1.5 * h
            } else {
                h
            }
        };
        let mut faces = Vec::with_capacity(2 * (nx + ny));
        for j in 0..ny {
            faces.push(BoundaryFace {
                cell: j * nx,
                edge: Edge::Left,
                normal: [-1.0, 0.0],
                length: seg(j, ny, dy),
            });
        }
        for j in 0..ny {
            faces.push(BoundaryFace {
                cell: j * nx + nx - 1,
                edge: Edge::Right,
                normal: [1.0, 0.0],
                length: seg(j, ny, dy),
            });
        }
        for i in 0..nx {
            faces.push(BoundaryFace {
                cell: i,
                edge: Edge::Bottom,
                normal: [0.0, -1.0],
                length: seg(i, nx, dx),
            });
        }
        for i in 0..nx {
            faces.push(BoundaryFace {
                cell: (ny - 1) * nx + i,
                edge: Edge::Top,
                normal: [0.0, 1.0],
                length: seg(i, nx, dx),
            });
        }
        Ok(Self {
            lx,
            ly,
            nx,
            ny,
            dx,
            dy,
            faces,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(1.0, 1.0, n, n)
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Coordinates of interior node `(i, j)`.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [(i + 1) as f64 * self.dx, (j + 1) as f64 * self.dy]
    }

    #[inline]
    pub fn node_at(&self, idx: usize) -> [f64; 2] {
        self.node(idx % self.nx, idx / self.nx)
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.faces
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.lx + self.ly)
    }

    /// Largest distance from `x0` to a point of the closed rectangle.
    pub fn max_distance_from(&self, x0: [f64; 2]) -> f64 {
        let fx = x0[0].max(self.lx - x0[0]);
        let fy = x0[1].max(self.ly - x0[1]);
        fx.hypot(fy)
    }

    /// Samples `g` at every interior node.
    pub fn sample(self: &Arc<Self>, g: impl Fn(f64, f64) -> f64) -> ScalarField {
        let values = (0..self.n_nodes())
            .map(|k| {
                let [x, y] = self.node_at(k);
                g(x, y)
            })
            .collect();
        ScalarField {
            grid: Arc::clone(self),
            values,
        }
    }
}

/// Equispaced ordinates `θ_j = 2πj / nv` on the unit circle with equal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityQuadrature {
    nv: usize,
    dim: usize,
    angles: Vec<f64>,
    weights: Vec<f64>,
    velocities: Vec<[f64; 2]>,
}

impl VelocityQuadrature {
    pub fn new(nv: usize) -> Result<Self> {
        if nv < 4 || !nv.is_multiple_of(2) {
            return invalid(format!("nv must be even and >= 4, got {nv}"));
        }
        let dtheta = 2.0 * PI / nv as f64;
        let angles: Vec<f64> = (0..nv).map(|j| j as f64 * dtheta).collect();
        // Snap components that vanish analytically so that v·n = 0 ordinates
        // are never classified as outgoing.
        let snap = |c: f64| if c.abs() < 1e-14 { 0.0 } else { c };
        let velocities = angles.iter().map(|&t| [snap(t.cos()), snap(t.sin())]).collect();
        Ok(Self {
            nv,
            dim: 2,
            weights: vec![dtheta; nv],
            angles,
            velocities,
        })
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    /// Spatial dimension `d` of the velocity sphere `S^{d-1}`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `|S^{d-1}|`, the total velocity measure.
    pub fn sphere_measure(&self) -> f64 {
        2.0 * PI
    }

    pub fn angle(&self, j: usize) -> f64 {
        self.angles[j]
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn velocity(&self, j: usize) -> [f64; 2] {
        self.velocities[j]
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.nv as f64
    }

    /// `max_j max(|v1|, |v2|)`.
    pub fn max_speed_component(&self) -> f64 {
        self.velocities
            .iter()
            .map(|v| v[0].abs().max(v[1].abs()))
            .fold(0.0, f64::max)
    }

    /// Discrete `⟨g(v)⟩ = (1/|S|) Σ_j w_j g(v_j)`.
    pub fn average(&self, g: impl Fn([f64; 2]) -> f64) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.nv {
            acc += self.weights[j] * g(self.velocities[j]);
        }
        acc / self.sphere_measure()
    }
}

/// A function of `x` at the interior nodes; zero on `∂Ω` by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<SpatialGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<SpatialGrid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.n_nodes()],
        }
    }

    pub fn from_values(grid: &Arc<SpatialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return invalid(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.n_nodes()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KinError::NonFinite("scalar field construction"));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `∫ u w dx` with the cell-volume weight.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a * b;
        }
        acc * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `∫_region |u|^2 dx`.
    pub fn l2_norm_sq_on(&self, mask: &Mask) -> f64 {
        let mut acc = 0.0;
        for (v, &m) in self.values.iter().zip(mask.bits()) {
            if m {
                acc += v * v;
            }
        }
        acc * self.grid.cell_volume()
    }

    /// Integral `∫ u dx`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `self - other`.
    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }

    /// `self + c * other`.
    pub fn axpy(&mut self, c: f64, other: &ScalarField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Samples `f(x, v)` at every (interior node, ordinate) pair, stored
/// ordinate-major: the block for ordinate `j` is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    grid: Arc<SpatialGrid>,
    quad: Arc<VelocityQuadrature>,
    values: Vec<f64>,
    epsilon: f64,
    time: f64,
}

impl KineticState {
    pub fn zeros(grid: &Arc<SpatialGrid>, quad: &Arc<VelocityQuadrature>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            grid: Arc::clone(grid),
            quad: Arc::clone(quad),
            values: vec![0.0; grid.n_nodes() * quad.nv()],
            epsilon,
            time: 0.0,
        })
    }

    /// Builds the state from `g(x, y, θ)`.
    pub fn from_fn(
        grid: &Arc<SpatialGrid>,
        quad: &Arc<VelocityQuadrature>,
        epsilon: f64,
        g: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Self> {
        let mut s = Self::zeros(grid, quad, epsilon)?;
        let n = grid.n_nodes();
        for j in 0..quad.nv() {
            let th = quad.angle(j);
            for k in 0..n {
                let [x, y] = grid.node_at(k);
                s.values[j * n + k] = g(x, y, th);
            }
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(KinError::NonFinite("kinetic state construction"));
        }
        Ok(s)
    }

    /// Velocity-independent state `f(x, v) = g(x)`.
    pub fn isotropic(quad: &Arc<VelocityQuadrature>, g: &ScalarField, epsilon: f64) -> Result<Self> {
        let grid = g.grid();
        let mut s = Self::zeros(grid, quad, epsilon)?;
        let n = grid.n_nodes();
        for j in 0..quad.nv() {
            s.values[j * n..(j + 1) * n].copy_from_slice(g.values());
        }
        Ok(s)
    }

    pub fn from_values(
        grid: &Arc<SpatialGrid>,
        quad: &Arc<VelocityQuadrature>,
        epsilon: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_epsilon(epsilon)?;
        if values.len() != grid.n_nodes() * quad.nv() {
            return invalid("kinetic value array has the wrong length");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KinError::NonFinite("kinetic state construction"));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            quad: Arc::clone(quad),
            values,
            epsilon,
            time: 0.0,
        })
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }
    pub fn quad(&self) -> &Arc<VelocityQuadrature> {
        &self.quad
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    /// Value at node `k`, ordinate `j`.
    #[inline]
    pub fn at(&self, k: usize, j: usize) -> f64 {
        self.values[j * self.grid.n_nodes() + k]
    }

    pub fn ordinate(&self, j: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn scaled(&self, c: f64) -> KineticState {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `‖f‖²_{L²(Ω×S¹)}`.
    pub fn l2_norm_sq(&self) -> f64 {
        let n = self.grid.n_nodes();
        let nv = self.quad.nv();
        let mut acc = 0.0;
        for k in 0..n {
            for j in 0..nv {
                let v = self.values[j * n + k];
                acc += self.quad.weight(j) * v * v;
            }
        }
        acc * self.grid.cell_volume()
    }

    /// `‖f - ⟨f⟩‖²_{L²(Ω×S¹)}`.
    pub fn anisotropy_sq(&self) -> f64 {
        let avg = velocity_average(self);
        let n = self.grid.n_nodes();
        let nv = self.quad.nv();
        let mut acc = 0.0;
        for k in 0..n {
            let m = avg.values[k];
            for j in 0..nv {
                let d = self.values[j * n + k] - m;
                acc += self.quad.weight(j) * d * d;
            }
        }
        acc * self.grid.cell_volume()
    }

    /// `∫ ⟨f⟩ dx`.
    pub fn mass(&self) -> f64 {
        velocity_average(self).integral()
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return invalid(format!("epsilon must lie in (0, 1], got {epsilon}"));
    }
    Ok(())
}

/// `⟨f⟩(x) = (1/|S¹|) Σ_j w_j f(x, θ_j)`.
pub fn velocity_average(f: &KineticState) -> ScalarField {
    let n = f.grid.n_nodes();
    let nv = f.quad.nv();
    let inv = 1.0 / f.quad.sphere_measure();
    let values = (0..n)
        .map(|k| {
            let mut acc = 0.0;
            for j in 0..nv {
                acc += f.quad.weight(j) * f.values[j * n + k];
            }
            acc * inv
        })
        .collect();
    ScalarField {
        grid: Arc::clone(&f.grid),
        values,
    }
}

/// Opacity `a(x)` sampled on the extended node lattice (interior nodes plus
/// the boundary ring), so face coefficients can be formed at every face.
#[derive(Debug, Clone, PartialEq)]
pub struct OpacityField {
    nx: usize,
    ny: usize,
    ext: Vec<f64>,
    c_min: f64,
    c_max: f64,
}

impl OpacityField {
    pub fn from_fn(grid: &SpatialGrid, a: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut ext = Vec::with_capacity((nx + 2) * (ny + 2));
        for je in 0..ny + 2 {
            for ie in 0..nx + 2 {
                ext.push(a(ie as f64 * grid.dx(), je as f64 * grid.dy()));
            }
        }
        let c_min = ext.iter().copied().fold(f64::INFINITY, f64::min);
        let c_max = ext.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(c_min > 0.0 && c_max.is_finite()) {
            return invalid(format!(
                "opacity must be positive and bounded, got range [{c_min}, {c_max}]"
            ));
        }
        Ok(Self {
            nx,
            ny,
            ext,
            c_min,
            c_max,
        })
    }

    pub fn constant(grid: &SpatialGrid, a: f64) -> Result<Self> {
        Self::from_fn(grid, |_, _| a)
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }
    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Value at interior node `k` (row-major).
    #[inline]
    pub fn at_node(&self, k: usize) -> f64 {
        let (i, j) = (k % self.nx, k / self.nx);
        self.ext[(j + 1) * (self.nx + 2) + i + 1]
    }

    /// Value on the extended lattice, `ie ∈ 0..=nx+1`, `je ∈ 0..=ny+1`.
    #[inline]
    pub fn at_ext(&self, ie: usize, je: usize) -> f64 {
        self.ext[je * (self.nx + 2) + ie]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }
}

/// Opacity profiles used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpacityProfile {
    Constant(f64),
    /// `base + amplitude * bump(|x - center| / radius)`.
    Bump {
        base: f64,
        amplitude: f64,
        center: [f64; 2],
        radius: f64,
    },
}

impl OpacityProfile {
    pub fn build(&self, grid: &SpatialGrid) -> Result<OpacityField> {
        match *self {
            OpacityProfile::Constant(a) => OpacityField::constant(grid, a),
            OpacityProfile::Bump {
                base,
                amplitude,
                center,
                radius,
            } => OpacityField::from_fn(grid, |x, y| {
                base + amplitude * bump((x - center[0]).hypot(y - center[1]) / radius)
            }),
        }
    }
}

/// `C²` compactly supported bump `(1 - s²)³` on `s < 1`.
pub fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        let q = 1.0 - s * s;
        q * q * q
    } else {
        0.0
    }
}

/// Region specifications realising `ω` and balls `B_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    All,
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    Ball { center: [f64; 2], radius: f64 },
}

impl Region {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Region::All => true,
            Region::Rectangle { x0, x1, y0, y1 } => p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1,
            Region::Ball { center, radius } => (p[0] - center[0]).hypot(p[1] - center[1]) < radius,
        }
    }
}

/// Boolean node mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn full(grid: &SpatialGrid) -> Self {
        Self {
            bits: vec![true; grid.n_nodes()],
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.bits[k]
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.len() == other.bits.len() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Node-centre inclusion mask of `region ∩ Ω`.
pub fn subdomain_mask(grid: &SpatialGrid, region: &Region) -> Result<Mask> {
    let bits: Vec<bool> = (0..grid.n_nodes()).map(|k| region.contains(grid.node_at(k))).collect();
    if !bits.iter().any(|&b| b) {
        return invalid(format!("region {region:?} contains no interior node"));
    }
    Ok(Mask { bits })
}

/// Anything that can be integrated with the grid (and ordinate) weights.
pub trait Integrand {
    /// Calls `g(weight, value)` for every sample inside `mask`, in the fixed
    /// reduction order.
    fn accumulate(&self, mask: Option<&Mask>, g: &mut dyn FnMut(f64, f64));
}

impl Integrand for ScalarField {
    fn accumulate(&self, mask: Option<&Mask>, g: &mut dyn FnMut(f64, f64)) {
        let w = self.grid.cell_volume();
        for (k, &v) in self.values.iter().enumerate() {
            if mask.is_none_or(|m| m.contains(k)) {
                g(w, v);
            }
        }
    }
}

impl Integrand for KineticState {
    fn accumulate(&self, mask: Option<&Mask>, g: &mut dyn FnMut(f64, f64)) {
        let n = self.grid.n_nodes();
        let vol = self.grid.cell_volume();
        for k in 0..n {
            if mask.is_none_or(|m| m.contains(k)) {
                for j in 0..self.quad.nv() {
                    g(vol * self.quad.weight(j), self.values[j * n + k]);
                }
            }
        }
    }
}

/// `(Σ w |f|^p)^{1/p}` over the whole domain or a node mask.
pub fn lp_norm<T: Integrand + ?Sized>(f: &T, exponent: f64, region: Option<&Mask>) -> Result<f64> {
    if !(exponent >= 1.0 && exponent.is_finite()) {
        return invalid(format!("Lp exponent must be a finite number >= 1, got {exponent}"));
    }
    let mut acc = 0.0;
    if exponent == 2.0 {
        f.accumulate(region, &mut |w, v| acc += w * v * v);
    } else {
        f.accumulate(region, &mut |w, v| acc += w * v.abs().powf(exponent));
    }
    Ok(acc.powf(1.0 / exponent))
}

/// Face values of `f` leaving the domain, recorded per transport substep.
///
/// `values` of each event is laid out `[face][ordinate]` over
/// [`SpatialGrid::boundary_faces`]; incoming pairs hold zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceRecord {
    pub n_faces: usize,
    pub nv: usize,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TraceRecord {
    pub fn new(n_faces: usize, nv: usize) -> Self {
        Self {
            n_faces,
            nv,
            events: Vec::new(),
        }
    }

    /// Total time covered.
    pub fn duration(&self) -> f64 {
        self.events.iter().map(|e| e.dt).sum()
    }
}

/// `Σ_t Σ_faces Σ_{v·n>0} (v·n if weighted else 1) |f|^η · len · w_j · Δt`.
pub fn boundary_outflow_integral(
    record: &TraceRecord,
    grid: &SpatialGrid,
    quad: &VelocityQuadrature,
    eta: f64,
    weighted: bool,
) -> Result<f64> {
    if !(eta >= 2.0 && eta.is_finite()) {
        return invalid(format!("trace exponent must be >= 2, got {eta}"));
    }
    let faces = grid.boundary_faces();
    if record.n_faces != faces.len() || record.nv != quad.nv() {
        return invalid("trace record does not match grid/quadrature");
    }
    let nv = quad.nv();
    let mut total = 0.0;
    for ev in &record.events {
        let mut acc = 0.0;
        for (fi, face) in faces.iter().enumerate() {
            for j in 0..nv {
                let v = quad.velocity(j);
                let vn = v[0] * face.normal[0] + v[1] * face.normal[1];
                if vn <= 0.0 {
                    continue;
                }
                let f = ev.values[fi * nv + j].abs();
                let p = if eta == 2.0 { f * f } else { f.powf(eta) };
                let wgt = if weighted { vn } else { 1.0 };
                acc += wgt * p * face.length * quad.weight(j);
            }
        }
        total += acc * ev.dt;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(n: usize) -> Arc<SpatialGrid> {
        Arc::new(SpatialGrid::unit_square(n).unwrap())
    }

    #[test]
    fn spacing_and_node_placement() {
        let g = SpatialGrid::new(2.0, 1.0, 7, 3).unwrap();
        assert_relative_eq!(g.dx(), 0.25);
        assert_relative_eq!(g.dy(), 0.25);
        let [x, y] = g.node(6, 2);
        assert!(x < 2.0 && y < 1.0 && x > 0.0 && y > 0.0);
    }

    #[test]
    fn faces_partition_the_perimeter() {
        for (lx, ly, nx, ny) in [(1.0, 1.0, 7, 7), (2.0, 0.5, 13, 4), (1.0, 3.0, 63, 31)] {
            let g = SpatialGrid::new(lx, ly, nx, ny).unwrap();
            let total: f64 = g.boundary_faces().iter().map(|f| f.length).sum();
            assert!((total - g.perimeter()).abs() < 1e-13 * g.perimeter());
            for f in g.boundary_faces() {
                assert_relative_eq!(f.normal[0].hypot(f.normal[1]), 1.0);
                assert!(f.normal[0] == 0.0 || f.normal[1] == 0.0);
            }
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(SpatialGrid::new(0.0, 1.0, 4, 4).is_err());
        assert!(SpatialGrid::new(1.0, 1.0, 1, 4).is_err());
        assert!(VelocityQuadrature::new(3).is_err());
    }

    #[test]
    fn moments_are_exact() {
        for nv in [4, 8, 16, 64] {
            let q = VelocityQuadrature::new(nv).unwrap();
            assert_relative_eq!(q.weights().iter().sum::<f64>(), 2.0 * PI, epsilon = 1e-14);
            assert!((q.average(|_| 1.0) - 1.0).abs() <= 1e-14);
            assert!(q.average(|v| v[0]).abs() <= 1e-14);
            assert!(q.average(|v| v[1]).abs() <= 1e-14);
            assert!((q.average(|v| v[0] * v[0]) - 0.5).abs() <= 1e-14);
            assert!((q.average(|v| v[1] * v[1]) - 0.5).abs() <= 1e-14);
            assert!(q.average(|v| v[0] * v[1]).abs() <= 1e-14);
        }
    }

    #[test]
    fn velocity_average_examples() {
        let g = unit(5);
        let q = Arc::new(VelocityQuadrature::new(8).unwrap());
        let three = KineticState::from_fn(&g, &q, 1.0, |_, _, _| 3.0).unwrap();
        assert!(velocity_average(&three)
            .values()
            .iter()
            .all(|&v| (v - 3.0).abs() < 1e-14));
        let odd = KineticState::from_fn(&g, &q, 1.0, |_, _, t| t.cos()).unwrap();
        assert!(velocity_average(&odd).values().iter().all(|&v| v.abs() < 1e-15));
        let sq = KineticState::from_fn(&g, &q, 1.0, |_, _, t| t.cos().powi(2)).unwrap();
        assert!(velocity_average(&sq).values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn lp_norm_examples() {
        let g = unit(127);
        let one = g.sample(|_, _| 1.0);
        let n1 = lp_norm(&one, 2.0, None).unwrap();
        // Interior nodes cover (1 - dx)^2 of the square.
        assert!((n1 - 1.0).abs() < 2.0 * g.dx());
        assert_eq!(lp_norm(&ScalarField::zeros(&g), 2.0, None).unwrap(), 0.0);
        let s = g.sample(|x, y| (PI * x).sin() * (PI * y).sin());
        let n = lp_norm(&s, 2.0, None).unwrap();
        assert!((n * n - 0.25).abs() < 1e-3);
        assert!((n - 0.5).abs() < 1e-3);
        assert!(lp_norm(&s, 0.5, None).is_err());
    }

    #[test]
    fn lp_norm_on_kinetic_state_uses_velocity_measure() {
        let g = unit(9);
        let q = Arc::new(VelocityQuadrature::new(16).unwrap());
        let f = KineticState::from_fn(&g, &q, 0.5, |_, _, _| 1.0).unwrap();
        let area = g.n_nodes() as f64 * g.cell_volume();
        assert_relative_eq!(
            lp_norm(&f, 4.0, None).unwrap(),
            (2.0 * PI * area).powf(0.25),
            epsilon = 1e-13
        );
        assert_relative_eq!(f.l2_norm_sq(), 2.0 * PI * area, epsilon = 1e-13);
    }

    #[test]
    fn masks() {
        let g = SpatialGrid::unit_square(63).unwrap();
        let all = subdomain_mask(
            &g,
            &Region::Ball {
                center: [0.5, 0.5],
                radius: 2.0,
            },
        )
        .unwrap();
        assert_eq!(all.count(), g.n_nodes());
        let rect = subdomain_mask(
            &g,
            &Region::Rectangle {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            },
        )
        .unwrap();
        assert_eq!(rect.count(), g.n_nodes());
        let ball = subdomain_mask(
            &g,
            &Region::Ball {
                center: [0.5, 0.5],
                radius: 0.25,
            },
        )
        .unwrap();
        let expected = PI * 0.25 * 0.25 / (g.dx() * g.dy());
        assert!((ball.count() as f64 - expected).abs() < 0.02 * expected);
        let big = subdomain_mask(
            &g,
            &Region::Ball {
                center: [0.5, 0.5],
                radius: 0.3,
            },
        )
        .unwrap();
        assert!(ball.is_subset_of(&big));
        assert!(subdomain_mask(
            &g,
            &Region::Ball {
                center: [5.0, 5.0],
                radius: 0.1
            }
        )
        .is_err());
    }

    fn uniform_trace(g: &SpatialGrid, q: &VelocityQuadrature, c: f64, steps: usize, dt: f64) -> TraceRecord {
        let nf = g.boundary_faces().len();
        let mut rec = TraceRecord::new(nf, q.nv());
        for _ in 0..steps {
            let mut values = vec![0.0; nf * q.nv()];
            for (fi, face) in g.boundary_faces().iter().enumerate() {
                for j in 0..q.nv() {
                    let v = q.velocity(j);
                    if v[0] * face.normal[0] + v[1] * face.normal[1] > 0.0 {
                        values[fi * q.nv() + j] = c;
                    }
                }
            }
            rec.events.push(TraceEvent { dt, values });
        }
        rec
    }

    #[test]
    fn outflow_integral_examples() {
        let g = SpatialGrid::unit_square(31).unwrap();
        let q = VelocityQuadrature::new(64).unwrap();
        let zero = uniform_trace(&g, &q, 0.0, 4, 0.25);
        assert_eq!(boundary_outflow_integral(&zero, &g, &q, 2.0, true).unwrap(), 0.0);
        let one = uniform_trace(&g, &q, 1.0, 4, 0.25);
        let w = boundary_outflow_integral(&one, &g, &q, 2.0, true).unwrap();
        assert!((w - 8.0).abs() < 0.01 * 8.0, "{w}");
        let c = 0.7;
        let half = uniform_trace(&g, &q, c, 4, 0.25);
        let u = boundary_outflow_integral(&half, &g, &q, 2.0, false).unwrap();
        let expect = c * c * 4.0 * PI;
        assert!((u - expect).abs() < 0.05 * expect, "{u} vs {expect}");
        assert!(boundary_outflow_integral(&one, &g, &q, 1.5, true).is_err());
    }

    #[test]
    fn opacity_bounds() {
        let g = SpatialGrid::unit_square(15).unwrap();
        let a = OpacityProfile::Bump {
            base: 1.0,
            amplitude: 0.5,
            center: [0.5, 0.5],
            radius: 0.3,
        }
        .build(&g)
        .unwrap();
        assert!(a.c_min() >= 1.0 - 1e-15 && a.c_max() <= 1.5 + 1e-15);
        assert!(a.c_max() > 1.4);
        assert!(OpacityField::constant(&g, -1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lp_norm_is_absolutely_homogeneous(
                vals in proptest::collection::vec(-5.0f64..5.0, 36),
                c in -10.0f64..10.0,
                p in 1.0f64..8.0,
            ) {
                let g = Arc::new(SpatialGrid::unit_square(6).unwrap());
                let f = ScalarField::from_values(&g, vals).unwrap();
                let a = lp_norm(&f.scaled(c), p, None).unwrap();
                let b = c.abs() * lp_norm(&f, p, None).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
            }

            #[test]
            fn outflow_integral_monotone_in_eta(vals in proptest::collection::vec(-1.0f64..1.0, 20 * 8)) {
                let g = SpatialGrid::unit_square(5).unwrap();
                let q = VelocityQuadrature::new(8).unwrap();
                let rec = TraceRecord { n_faces: 20, nv: 8, events: vec![TraceEvent { dt: 0.1, values: vals }] };
                let mut prev = f64::INFINITY;
                for eta in [2.0, 3.0, 4.5, 6.0, 10.0] {
                    let w = boundary_outflow_integral(&rec, &g, &q, eta, true).unwrap();
                    prop_assert!(w <= prev + 1e-15);
                    prev = w;
                }
            }

            #[test]
            fn balls_are_nested(r in 0.05f64..0.6, dr in 0.0f64..0.3, cx in 0.2f64..0.8, cy in 0.2f64..0.8) {
                let g = SpatialGrid::unit_square(31).unwrap();
                let small = subdomain_mask(&g, &Region::Ball { center: [cx, cy], radius: r }).unwrap();
                let large = subdomain_mask(&g, &Region::Ball { center: [cx, cy], radius: r + dr }).unwrap();
                prop_assert!(small.is_subset_of(&large));
            }
        }
    }
}
