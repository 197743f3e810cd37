use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::diffusion::{eigendecompose, EllipticOperator};
use crate::error::{invalid, Result};

/// Worst-case observation cost of eigenfunction sums on a ball, one entry
/// per spectral cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityCurve {
    /// Number of modes below each cutoff (always a full eigenvalue cluster).
    pub cutoffs: Vec<usize>,
    pub sqrt_mu: Vec<f64>,
    /// `ln sup Σ|a_i|² / ∫_B |Σ a_i e_i|²` over sums of the first modes.
    pub log_ratio: Vec<f64>,
    pub quadrature_points: usize,
}

/// Sine series of a nodal field: `b_{kl}` with `v = Σ b_{kl} sin(kπx/lx) sin(lπy/ly)` at the nodes.
fn sine_coefficients(v: &[f64], nx: usize, ny: usize, sx: &DMatrix<f64>, sy: &DMatrix<f64>) -> DMatrix<f64> {
    // V is ny × nx with V[j, i] = v[j nx + i]; B = (2/(ny+1)) Sy V Sxᵀ (2/(nx+1)).
    let vm = DMatrix::from_row_slice(ny, nx, v);
    let scale = 4.0 / ((nx + 1) as f64 * (ny + 1) as f64);
    sy * vm * sx.transpose() * scale
}

fn sine_table(n: usize, points: &[f64], len: f64) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), n, |r, k| ((k + 1) as f64 * PI * points[r] / len).sin())
}

/// Observation cost of the first `modes` eigenfunction sums on the ball
/// `|x - center| < radius`.
///
/// Each discrete eigenvector is extended by its sine interpolant, which is an
/// isometry from the nodal inner product onto `L²(Ω)`, and the ball integral
/// is taken by the midpoint rule on a grid `refine` times finer. Only the
/// constant-coefficient operator has the sine interpolant as an exact
/// extension, so `op` should be `κ I`.
pub fn eigen_sum_observability(
    op: &EllipticOperator,
    modes: usize,
    center: [f64; 2],
    radius: f64,
    refine: usize,
) -> Result<ObservabilityCurve> {
    if !(radius > 0.0) || refine == 0 {
        return invalid("ball radius and refinement must be positive");
    }
    let grid = op.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let (lx, ly) = (grid.lx(), grid.ly());
    if modes == 0 || modes > op.n() {
        return invalid(format!(
            "cannot take {modes} modes of a {}-dimensional operator",
            op.n()
        ));
    }
    // One extra eigenvalue tells whether the last cluster is complete.
    let basis = eigendecompose(op, (modes + 1).min(op.n()))?;

    let sx_nodes = sine_table(nx, &(0..nx).map(|i| (i + 1) as f64 * grid.dx()).collect::<Vec<_>>(), lx);
    let sy_nodes = sine_table(ny, &(0..ny).map(|j| (j + 1) as f64 * grid.dy()).collect::<Vec<_>>(), ly);
    let (qx, qy) = (refine * (nx + 1), refine * (ny + 1));
    let (hx, hy) = (lx / qx as f64, ly / qy as f64);
    let px: Vec<f64> = (0..qx).map(|a| (a as f64 + 0.5) * hx).collect();
    let py: Vec<f64> = (0..qy).map(|b| (b as f64 + 0.5) * hy).collect();
    let cx = sine_table(nx, &px, lx);
    let cy = sine_table(ny, &py, ly);
    let inside: Vec<(usize, usize)> = (0..qy)
        .flat_map(|b| (0..qx).map(move |a| (b, a)))
        .filter(|&(b, a)| (px[a] - center[0]).hypot(py[b] - center[1]) < radius)
        .collect();
    if inside.is_empty() {
        return invalid("observation ball contains no quadrature point");
    }
    let w = (hx * hy).sqrt();

    // Rows: quadrature points in the ball; columns: modes.
    let mut e = DMatrix::zeros(inside.len(), modes);
    for (m, vec) in basis.vectors.iter().take(modes).enumerate() {
        let b = sine_coefficients(vec.values(), nx, ny, &sx_nodes, &sy_nodes);
        let field = &cy * b * cx.transpose();
        for (r, &(bq, aq)) in inside.iter().enumerate() {
            e[(r, m)] = w * field[(bq, aq)];
        }
    }
    let r = e.qr().r();

    let mut out = ObservabilityCurve {
        cutoffs: Vec::new(),
        sqrt_mu: Vec::new(),
        log_ratio: Vec::new(),
        quadrature_points: inside.len(),
    };
    let vals = &basis.values;
    for k in 1..=modes {
        // A cutoff may only close a complete cluster of equal eigenvalues.
        let closes = k == vals.len() || (vals[k] - vals[k - 1]) > 1e-8 * vals[k].abs();
        if !closes {
            continue;
        }
        let sv = r.view((0, 0), (k, k)).into_owned().singular_values();
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        out.cutoffs.push(k);
        out.sqrt_mu.push(vals[k - 1].sqrt());
        out.log_ratio.push(-2.0 * smin.ln());
    }
    Ok(out)
}
