//! Mesh-quality diagnostics: the per-element equidistribution measure Q_eq.

use crate::assembly::monitor_field;
use crate::error::{Error, Result};
use crate::grid::{ComputationalGrid, PhysicalMesh};
use crate::monitor::{MonitorMatrix, MonitorParams, TestProblem};

#[derive(Debug, Clone)]
pub struct QualityReport {
    /// Q_eq per cell on the (n_xi−1)×(n_eta−1) lattice, row index fastest.
    pub q: Vec<f64>,
    pub q_max: f64,
    /// Total monitor content Σ ρ_K |K|.
    pub sigma: f64,
}

impl QualityReport {
    #[inline]
    pub fn q_cell(&self, ci: usize, cj: usize, n_eta: usize) -> f64 {
        self.q[ci * (n_eta - 1) + cj]
    }
}

fn average4(a: &MonitorMatrix, b: &MonitorMatrix, c: &MonitorMatrix, d: &MonitorMatrix) -> MonitorMatrix {
    MonitorMatrix {
        m11: 0.25 * (a.m11 + b.m11 + c.m11 + d.m11),
        m12: 0.25 * (a.m12 + b.m12 + c.m12 + d.m12),
        m22: 0.25 * (a.m22 + b.m22 + c.m22 + d.m22),
    }
}

/// Mean-normalize per-cell monitor content into Q_eq values.
pub(crate) fn normalize(content: &[f64]) -> (Vec<f64>, f64, f64) {
    let sigma: f64 = content.iter().sum();
    let n = content.len() as f64;
    let q: Vec<f64> = content.iter().map(|c| n * c / sigma).collect();
    let q_max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (q, q_max, sigma)
}

/// Equidistribution quality per quadrilateral cell:
/// Q_eq(K) = N_el · ρ_K|K| / Σ ρ|K| with ρ_K = sqrt(det M_K), M_K the average
/// of the four nodal monitor matrices and |K| the shoelace area. The mean of
/// Q_eq over cells is 1 by construction; its maximum is 1 exactly at perfect
/// equidistribution (local equidistribution generally stays above 1).
pub fn q_eq(mesh: &PhysicalMesh, params: &MonitorParams, problem: &TestProblem) -> Result<QualityReport> {
    let grid = ComputationalGrid::new(mesh.n_xi, mesh.n_eta)?;
    let (n_xi, n_eta) = (mesh.n_xi, mesh.n_eta);
    let x = mesh.x_values();
    let y = mesh.y_values();
    let u: Vec<f64> = x.iter().zip(y).map(|(&xv, &yv)| problem.eval(xv, yv)).collect();
    let mons = monitor_field(x, y, &u, n_xi, n_eta, grid.d_xi, grid.d_eta, 0..n_xi, params, 0)?;
    let mon = |i: usize, j: usize| &mons[i * n_eta + j];

    let mut content = Vec::with_capacity((n_xi - 1) * (n_eta - 1));
    for ci in 0..n_xi - 1 {
        for cj in 0..n_eta - 1 {
            let m = average4(mon(ci, cj), mon(ci + 1, cj), mon(ci + 1, cj + 1), mon(ci, cj + 1));
            let rho = m.det().max(0.0).sqrt();
            // CCW corners
            let xs = [
                mesh.x(ci, cj),
                mesh.x(ci + 1, cj),
                mesh.x(ci + 1, cj + 1),
                mesh.x(ci, cj + 1),
            ];
            let ys = [
                mesh.y(ci, cj),
                mesh.y(ci + 1, cj),
                mesh.y(ci + 1, cj + 1),
                mesh.y(ci, cj + 1),
            ];
            let mut area = 0.0;
            for k in 0..4 {
                let k1 = (k + 1) % 4;
                area += xs[k] * ys[k1] - xs[k1] * ys[k];
            }
            area *= 0.5;
            if area <= 0.0 {
                return Err(Error::TangledMesh { cell: (ci, cj), area });
            }
            content.push(rho * area);
        }
    }
    let (q, q_max, sigma) = normalize(&content);
    Ok(QualityReport { q, q_max, sigma })
}
