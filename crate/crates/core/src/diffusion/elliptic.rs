use std::sync::Arc;

use crate::error::{invalid, KinError, Result};
use crate::grid::{OpacityField, ScalarField, SpatialGrid};

/// The flux-form operator `L u = -∇·(κ ∇u)` with homogeneous Dirichlet data,
/// discretised by the 5-point stencil. Face coefficients are harmonic means
/// of the node values of `κ`, boundary-ring nodes included.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperator {
    grid: Arc<SpatialGrid>,
    /// `(nx + 1) * ny` coefficients on vertical faces; face `i` of row `j`
    /// sits between nodes `i - 1` and `i` (ghost nodes at `-1` and `nx`).
    kx: Vec<f64>,
    /// `nx * (ny + 1)` coefficients on horizontal faces, row-major by face row.
    ky: Vec<f64>,
    diag: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl EllipticOperator {
    /// `κ = 1/(d a)` from the opacity, with `d` the spatial dimension.
    pub fn from_opacity(grid: &Arc<SpatialGrid>, a: &OpacityField, dim: usize) -> Result<Self> {
        if a.dims() != (grid.nx(), grid.ny()) {
            return invalid("opacity field does not match the grid");
        }
        let d = dim as f64;
        Self::from_node_fn(grid, |ie, je| 1.0 / (d * a.at_ext(ie, je)))
    }

    pub fn constant(grid: &Arc<SpatialGrid>, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return invalid(format!("diffusivity must be positive, got {kappa}"));
        }
        Self::from_node_fn(grid, |_, _| kappa)
    }

    /// Builds the operator from `κ` on the extended lattice `(ie, je)`.
    fn from_node_fn(grid: &Arc<SpatialGrid>, kappa: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut kx = Vec::with_capacity((nx + 1) * ny);
        for j in 0..ny {
            for i in 0..=nx {
                kx.push(harmonic(kappa(i, j + 1), kappa(i + 1, j + 1)));
            }
        }
        let mut ky = Vec::with_capacity(nx * (ny + 1));
        for j in 0..=ny {
            for i in 0..nx {
                ky.push(harmonic(kappa(i + 1, j), kappa(i + 1, j + 1)));
            }
        }
        if kx.iter().chain(&ky).any(|&k| !(k > 0.0 && k.is_finite())) {
            return invalid("diffusivity must be positive and finite");
        }
        let (ix2, iy2) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dy() * grid.dy()));
        let mut diag = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                diag[j * nx + i] = (kx[j * (nx + 1) + i] + kx[j * (nx + 1) + i + 1]) * ix2
                    + (ky[j * nx + i] + ky[(j + 1) * nx + i]) * iy2;
            }
        }
        Ok(Self {
            grid: Arc::clone(grid),
            kx,
            ky,
            diag,
        })
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n_nodes()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Coefficient on the vertical face left of node `(i, j)`; `i ∈ 0..=nx`.
    #[inline]
    pub fn kappa_x(&self, i: usize, j: usize) -> f64 {
        self.kx[j * (self.grid.nx() + 1) + i]
    }

    /// Coefficient on the horizontal face below node `(i, j)`; `j ∈ 0..=ny`.
    #[inline]
    pub fn kappa_y(&self, i: usize, j: usize) -> f64 {
        self.ky[j * self.grid.nx() + i]
    }

    /// `out = L u` on raw node arrays.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (ix2, iy2) = (
            1.0 / (self.grid.dx() * self.grid.dx()),
            1.0 / (self.grid.dy() * self.grid.dy()),
        );
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let c = u[k];
                let w = if i > 0 { u[k - 1] } else { 0.0 };
                let e = if i + 1 < nx { u[k + 1] } else { 0.0 };
                let s = if j > 0 { u[k - nx] } else { 0.0 };
                let n = if j + 1 < ny { u[k + nx] } else { 0.0 };
                out[k] = self.diag[k] * c
                    - (self.kappa_x(i, j) * w + self.kappa_x(i + 1, j) * e) * ix2
                    - (self.kappa_y(i, j) * s + self.kappa_y(i, j + 1) * n) * iy2;
            }
        }
    }

    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        let mut out = vec![0.0; self.n()];
        self.apply_into(u.values(), &mut out);
        ScalarField::from_values(&self.grid, out).expect("finite operator output")
    }

    /// `Σ_faces κ |∂u|² dx dy`, equal to `⟨L u, u⟩` by summation by parts.
    pub fn dirichlet_energy(&self, u: &ScalarField) -> f64 {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (dx, dy) = (self.grid.dx(), self.grid.dy());
        let v = u.values();
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                0.0
            } else {
                v[j as usize * nx + i as usize]
            }
        };
        let mut acc = 0.0;
        for j in 0..ny {
            for i in 0..=nx {
                let g = (at(i as isize, j as isize) - at(i as isize - 1, j as isize)) / dx;
                acc += self.kappa_x(i, j) * g * g;
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let g = (at(i as isize, j as isize) - at(i as isize, j as isize - 1)) / dy;
                acc += self.kappa_y(i, j) * g * g;
            }
        }
        acc * dx * dy
    }

    /// Dense matrix of `L` (row-major), for small grids.
    pub fn dense(&self) -> Result<nalgebra::DMatrix<f64>> {
        let n = self.n();
        if n > super::eigen::DENSE_LIMIT {
            return Err(KinError::TooLarge(format!(
                "dense assembly of {n} unknowns exceeds the limit of {}",
                super::eigen::DENSE_LIMIT
            )));
        }
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            self.apply_into(&e, &mut col);
            e[c] = 0.0;
            for (r, v) in col.iter().enumerate() {
                if *v != 0.0 {
                    m[(r, c)] = *v;
                }
            }
        }
        Ok(m)
    }
}

/// Convergence data of a conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// Final true relative residual `‖b - A x‖ / ‖b‖`.
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Relative residual target of every solve.
pub const CG_TOLERANCE: f64 = 1e-11;

/// Solves `(α I + β L) x = b` by Jacobi-preconditioned conjugate gradients,
/// starting from `x` (warm start). Requires `α ≥ 0`, `β > 0`.
pub fn solve_shifted(op: &EllipticOperator, alpha: f64, beta: f64, b: &[f64], x: &mut [f64]) -> Result<CgStats> {
    let n = op.n();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            residual: 0.0,
            history: vec![0.0],
        });
    }
    let max_iter = 10 * n;
    let pinv: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / (alpha + beta * d)).collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        op.apply_into(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = alpha * vi + beta * *o;
        }
    };
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    // A few restarts guard against drift between recursive and true residuals.
    for _restart in 0..4 {
        apply(x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        let mut rel = norm(&r) / bnorm;
        history.push(rel);
        if rel <= CG_TOLERANCE {
            return Ok(CgStats {
                iterations,
                residual: rel,
                history,
            });
        }
        let mut z: Vec<f64> = r.iter().zip(&pinv).map(|(a, p)| a * p).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        while iterations < max_iter {
            apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if !(pap > 0.0) {
                return Err(KinError::NotPositiveDefinite(pap));
            }
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            iterations += 1;
            rel = norm(&r) / bnorm;
            history.push(rel);
            // Stop a little below the target so the true residual also meets it.
            if rel <= 0.25 * CG_TOLERANCE {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * pinv[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let ratio = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + ratio * p[i];
            }
        }
        if iterations >= max_iter {
            break;
        }
    }
    apply(x, &mut ap);
    let rel = ap.iter().zip(b).map(|(a, bb)| (bb - a) * (bb - a)).sum::<f64>().sqrt() / bnorm;
    if rel <= CG_TOLERANCE && x.iter().all(|v| v.is_finite()) {
        return Ok(CgStats {
            iterations,
            residual: rel,
            history,
        });
    }
    Err(KinError::CgNotConverged {
        iterations,
        residual: rel,
        history,
    })
}

/// `φ` with `L φ = w`.
pub fn solve_elliptic(op: &EllipticOperator, w: &ScalarField) -> Result<ScalarField> {
    solve_elliptic_with_stats(op, w).map(|(phi, _)| phi)
}

pub fn solve_elliptic_with_stats(op: &EllipticOperator, w: &ScalarField) -> Result<(ScalarField, CgStats)> {
    let mut x = vec![0.0; op.n()];
    let stats = solve_shifted(op, 0.0, 1.0, w.values(), &mut x)?;
    Ok((ScalarField::from_values(op.grid(), x)?, stats))
}

/// `⟨w, L⁻¹ w⟩`, the squared weighted `H⁻¹` norm.
pub fn h_minus1_norm_sq(op: &EllipticOperator, w: &ScalarField) -> Result<f64> {
    let phi = solve_elliptic(op, w)?;
    let ip = w.inner(&phi);
    if ip < 0.0 {
        return Err(KinError::NotPositiveDefinite(ip));
    }
    Ok(ip)
}

pub fn h_minus1_norm(op: &EllipticOperator, w: &ScalarField) -> Result<f64> {
    h_minus1_norm_sq(op, w).map(f64::sqrt)
}
