//! Discrete nonlinear residual for one strip: interior local-equidistribution
//! equations, physical boundary conditions (Dirichlet edges plus 1D
//! equidistribution or orthogonality edge meshes), and transmission rows at
//! artificial interfaces.
//!
//! Stencils are second-order centered wherever both neighbors exist and
//! 3-point one-sided at physical boundaries. At an artificial interface the
//! nodal derivatives stay centered by using one ghost column carried in the
//! transmission payload (the neighbor's previous iterate just beyond the
//! strip), so a strip reproduces the single-domain rows exactly once the
//! exchanged data has converged. Robin operators use the first-order
//! difference over the two columns shared by both strips, evaluated with the
//! same formula on both sides of the exchange, which makes every transmission
//! row cancel identically at the single-domain solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    ComputationalGrid, InterfaceTrace, SubdomainMesh, SubdomainSpec, TransmissionKind,
};
use crate::monitor::{
    monitor_matrix, physical_gradient, s_form, MonitorMatrix, MonitorParams, TestProblem,
};
use crate::nsolve::Coloring;

/// Treatment of the non-Dirichlet coordinate along physical edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// 1D equidistribution along each physical edge (the default).
    OneDimEp,
    /// Orthogonality: x_η = 0 at bottom/top, y_ξ = 0 at left/right.
    Orthogonality,
}

/// Which side of a strip an interface sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[inline]
fn d_centered(fm: f64, fp: f64, two_h: f64) -> f64 {
    (fp - fm) / two_h
}

/// Second-order one-sided derivative at f0 looking toward f1, f2.
#[inline]
fn d_onesided(f0: f64, f1: f64, f2: f64, two_h: f64) -> f64 {
    (-3.0 * f0 + 4.0 * f1 - f2) / two_h
}

/// Half-cell monitor sqrt(1 + k s²) of the 1D equidistribution principle,
/// with k = a²/(1 + b s²) and s the physical slope of u over the cell.
#[inline]
pub fn ep1d_half_monitor(slope: f64, params: &MonitorParams) -> f64 {
    let s2 = slope * slope;
    let k = params.a * params.a / (1.0 + params.b * s2);
    (1.0 + k * s2).sqrt()
}

/// Discrete 1D equidistribution stencil,
/// M_{i+1/2}(x_{i+1} − x_i) − M_{i−1/2}(x_i − x_{i−1}).
#[inline]
pub fn ep1d_residual(x_m: f64, x_c: f64, x_p: f64, m_minus: f64, m_plus: f64) -> f64 {
    m_plus * (x_p - x_c) - m_minus * (x_c - x_m)
}

fn edge_ep_row(
    coord: [f64; 3],
    uval: [f64; 3],
    params: &MonitorParams,
    edge: &'static str,
    index: usize,
) -> Result<f64> {
    let dm = coord[1] - coord[0];
    let dp = coord[2] - coord[1];
    if dm.abs() < 1e-12 || dp.abs() < 1e-12 {
        return Err(Error::EdgeCollapse { edge, index });
    }
    let m_minus = ep1d_half_monitor((uval[1] - uval[0]) / dm, params);
    let m_plus = ep1d_half_monitor((uval[2] - uval[1]) / dp, params);
    Ok(ep1d_residual(coord[0], coord[1], coord[2], m_minus, m_plus))
}

/// Nodal monitor matrices over columns `range` of column-major arrays
/// (cols × n_eta, j fastest). ξ-stencils are centered wherever both array
/// neighbors exist and 3-point one-sided at the array ends; η-stencils are
/// centered at interior rows, one-sided at j = 0 and n_eta − 1.
#[allow(clippy::too_many_arguments)]
pub(crate) fn monitor_field(
    x: &[f64],
    y: &[f64],
    u: &[f64],
    cols: usize,
    n_eta: usize,
    d_xi: f64,
    d_eta: f64,
    range: std::ops::Range<usize>,
    params: &MonitorParams,
    global_col0: usize,
) -> Result<Vec<MonitorMatrix>> {
    let two_dxi = 2.0 * d_xi;
    let two_deta = 2.0 * d_eta;
    let at = |arr: &[f64], e: usize, j: usize| arr[e * n_eta + j];
    let dxi_of = |arr: &[f64], e: usize, j: usize| -> f64 {
        if e == 0 {
            d_onesided(at(arr, 0, j), at(arr, 1, j), at(arr, 2, j), two_dxi)
        } else if e == cols - 1 {
            -d_onesided(at(arr, e, j), at(arr, e - 1, j), at(arr, e - 2, j), two_dxi)
        } else {
            d_centered(at(arr, e - 1, j), at(arr, e + 1, j), two_dxi)
        }
    };
    let deta_of = |arr: &[f64], e: usize, j: usize| -> f64 {
        if j == 0 {
            d_onesided(at(arr, e, 0), at(arr, e, 1), at(arr, e, 2), two_deta)
        } else if j == n_eta - 1 {
            -d_onesided(at(arr, e, j), at(arr, e, j - 1), at(arr, e, j - 2), two_deta)
        } else {
            d_centered(at(arr, e, j - 1), at(arr, e, j + 1), two_deta)
        }
    };

    let mut out = Vec::with_capacity(range.len() * n_eta);
    for e in range {
        for j in 0..n_eta {
            let w = physical_gradient(
                dxi_of(u, e, j),
                deta_of(u, e, j),
                dxi_of(x, e, j),
                deta_of(x, e, j),
                dxi_of(y, e, j),
                deta_of(y, e, j),
            )
            .map_err(|err| err.at_node(global_col0 + e, j))?;
            out.push(monitor_matrix(w, params));
        }
    }
    Ok(out)
}

/// Data exchanged across one artificial interface: the transmission
/// right-hand side at the interface column, plus the raw coordinates of the
/// first column beyond the strip (ghost column) so the strip can keep its
/// nodal stencils centered at the interface.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborData {
    pub rhs: InterfaceTrace,
    pub ghost: InterfaceTrace,
}

impl NeighborData {
    pub fn validate(&self, n_eta: usize) -> Result<()> {
        self.rhs.validate(n_eta)?;
        self.ghost.validate(n_eta)
    }
}

/// Evaluate the transmission right-hand side and ghost column for the strip
/// whose `side` interface sits at global column `interface_col`, from the
/// previous iterate. The interface column must be strictly interior to the
/// neighbor; for the nonlinear kind the half-point monitor window can reach
/// one column past the neighbor's edge, which is read from the requester's
/// own previous iterate.
#[allow(clippy::too_many_arguments)]
pub fn compute_neighbor_data(
    grid: &ComputationalGrid,
    params: &MonitorParams,
    problem: &TestProblem,
    kind: TransmissionKind,
    side: Side,
    interface_col: usize,
    requester: &SubdomainMesh,
    neighbor: &SubdomainMesh,
) -> Result<NeighborData> {
    let n_eta = grid.n_eta;
    let i = interface_col;
    if i == 0
        || i + 1 >= grid.n_xi
        || !neighbor.contains_column(i - 1)
        || !neighbor.contains_column(i)
        || !neighbor.contains_column(i + 1)
    {
        return Err(Error::Partition(format!(
            "interface column {i} is not strictly interior to the neighbor strip (columns {}..={})",
            neighbor.i_lo,
            neighbor.i_lo + neighbor.width().max(1) - 1
        )));
    }
    let ghost_col = match side {
        Side::Right => i + 1,
        Side::Left => i - 1,
    };
    let ghost = neighbor.trace(ghost_col)?;

    let rhs = match kind {
        TransmissionKind::Physical => {
            return Err(Error::Config("no transmission data exists at a physical boundary".into()))
        }
        TransmissionKind::Dirichlet => neighbor.trace(i)?,
        TransmissionKind::LinearRobin(p) | TransmissionKind::NonlinearRobin(p) => {
            let sign = match side {
                Side::Right => 1.0,
                Side::Left => -1.0,
            };
            let mons = if matches!(kind, TransmissionKind::NonlinearRobin(_)) {
                Some(interface_half_monitors(grid, params, problem, side, i, requester, neighbor)?)
            } else {
                None
            };
            let mut g_x = Vec::with_capacity(n_eta);
            let mut g_y = Vec::with_capacity(n_eta);
            for j in 0..n_eta {
                let (d_x, d_y, x_h) = match side {
                    Side::Right => (
                        (neighbor.x_global(i, j) - neighbor.x_global(i - 1, j)) / grid.d_xi,
                        (neighbor.y_global(i, j) - neighbor.y_global(i - 1, j)) / grid.d_xi,
                        0.5 * (neighbor.x_global(i, j) + neighbor.x_global(i - 1, j)),
                    ),
                    Side::Left => (
                        (neighbor.x_global(i + 1, j) - neighbor.x_global(i, j)) / grid.d_xi,
                        (neighbor.y_global(i + 1, j) - neighbor.y_global(i, j)) / grid.d_xi,
                        0.5 * (neighbor.x_global(i + 1, j) + neighbor.x_global(i, j)),
                    ),
                };
                let bx = match &mons {
                    Some(m) => s_form([d_x, d_y], &m[j]) + sign * p * x_h,
                    None => d_x + sign * p * x_h,
                };
                g_x.push(bx);
                // y carries no Robin exchange; record the plain trace
                g_y.push(neighbor.y_global(i, j));
            }
            InterfaceTrace { column: i, g_x, g_y }
        }
    };

    let data = NeighborData { rhs, ghost };
    data.validate(n_eta)?;
    Ok(data)
}

/// Half-point monitor matrices for the interface cell, averaged from the two
/// bracketing nodal matrices, each evaluated with centered stencils over a
/// four-column window of the previous iterate.
fn interface_half_monitors(
    grid: &ComputationalGrid,
    params: &MonitorParams,
    problem: &TestProblem,
    side: Side,
    i: usize,
    requester: &SubdomainMesh,
    neighbor: &SubdomainMesh,
) -> Result<Vec<MonitorMatrix>> {
    let n_eta = grid.n_eta;
    let cols: [usize; 4] = match side {
        Side::Right => [i - 2, i - 1, i, i + 1],
        Side::Left => [i - 1, i, i + 1, i + 2],
    };
    let mut x = Vec::with_capacity(4 * n_eta);
    let mut y = Vec::with_capacity(4 * n_eta);
    let mut u = Vec::with_capacity(4 * n_eta);
    for &col in &cols {
        for j in 0..n_eta {
            let (xv, yv) = if neighbor.contains_column(col) {
                (neighbor.x_global(col, j), neighbor.y_global(col, j))
            } else if requester.contains_column(col) {
                (requester.x_global(col, j), requester.y_global(col, j))
            } else {
                return Err(Error::Partition(format!(
                    "column {col} near interface {i} is covered by neither strip"
                )));
            };
            x.push(xv);
            y.push(yv);
            u.push(problem.eval(xv, yv));
        }
    }
    let mons = monitor_field(&x, &y, &u, 4, n_eta, grid.d_xi, grid.d_eta, 1..3, params, cols[0])?;
    Ok((0..n_eta)
        .map(|j| MonitorMatrix::average(&mons[j], &mons[n_eta + j]))
        .collect())
}

/// Nonlinear residual of one strip system.
///
/// The unknown vector is node-major with j fastest and x before y:
/// `state[2(c·n_eta + j)] = x(c,j)`, `state[2(c·n_eta + j) + 1] = y(c,j)`,
/// where c is the strip-local column.
#[derive(Debug)]
pub struct StripSystem<'a> {
    grid: &'a ComputationalGrid,
    spec: SubdomainSpec,
    params: MonitorParams,
    problem: &'a TestProblem,
    mode: BoundaryMode,
    left: Option<&'a NeighborData>,
    right: Option<&'a NeighborData>,
}

impl<'a> StripSystem<'a> {
    pub fn new(
        grid: &'a ComputationalGrid,
        spec: SubdomainSpec,
        params: MonitorParams,
        problem: &'a TestProblem,
        mode: BoundaryMode,
        left: Option<&'a NeighborData>,
        right: Option<&'a NeighborData>,
    ) -> Result<Self> {
        if spec.i_hi >= grid.n_xi || spec.width() < 3 {
            return Err(Error::Partition(format!(
                "strip {}..={} does not fit a grid with {} columns",
                spec.i_lo, spec.i_hi, grid.n_xi
            )));
        }
        spec.left.validate()?;
        spec.right.validate()?;
        if spec.left.is_physical() {
            if spec.i_lo != 0 {
                return Err(Error::Partition("physical left side requires i_lo = 0".into()));
            }
        } else {
            let data = left.ok_or(Error::MissingNeighbor { side: "left" })?;
            data.validate(grid.n_eta)?;
            if spec.i_lo == 0 || data.rhs.column != spec.i_lo || data.ghost.column != spec.i_lo - 1 {
                return Err(Error::Config(format!(
                    "left interface data targets columns {}/{}, expected {}/{}",
                    data.rhs.column,
                    data.ghost.column,
                    spec.i_lo,
                    spec.i_lo.max(1) - 1
                )));
            }
        }
        if spec.right.is_physical() {
            if spec.i_hi != grid.n_xi - 1 {
                return Err(Error::Partition("physical right side requires i_hi = n_xi - 1".into()));
            }
        } else {
            let data = right.ok_or(Error::MissingNeighbor { side: "right" })?;
            data.validate(grid.n_eta)?;
            if data.rhs.column != spec.i_hi || data.ghost.column != spec.i_hi + 1 {
                return Err(Error::Config(format!(
                    "right interface data targets columns {}/{}, expected {}/{}",
                    data.rhs.column,
                    data.ghost.column,
                    spec.i_hi,
                    spec.i_hi + 1
                )));
            }
        }
        Ok(Self { grid, spec, params, problem, mode, left, right })
    }

    pub fn spec(&self) -> &SubdomainSpec {
        &self.spec
    }

    pub fn width(&self) -> usize {
        self.spec.width()
    }

    pub fn n_unknowns(&self) -> usize {
        2 * self.width() * self.grid.n_eta
    }

    #[inline]
    fn sidx(&self, c: usize, j: usize, comp: usize) -> usize {
        2 * (c * self.grid.n_eta + j) + comp
    }

    pub fn uniform_state(&self) -> Vec<f64> {
        let ne = self.grid.n_eta;
        let mut v = vec![0.0; self.n_unknowns()];
        for c in 0..self.width() {
            for j in 0..ne {
                v[self.sidx(c, j, 0)] = self.grid.xi(self.spec.i_lo + c);
                v[self.sidx(c, j, 1)] = self.grid.eta(j);
            }
        }
        v
    }

    pub fn state_from(&self, sub: &SubdomainMesh) -> Vec<f64> {
        let ne = self.grid.n_eta;
        let mut v = vec![0.0; self.n_unknowns()];
        for c in 0..self.width() {
            for j in 0..ne {
                v[self.sidx(c, j, 0)] = sub.x(c, j);
                v[self.sidx(c, j, 1)] = sub.y(c, j);
            }
        }
        v
    }

    pub fn submesh_from(&self, state: &[f64]) -> SubdomainMesh {
        let ne = self.grid.n_eta;
        let w = self.width();
        let mut x = Vec::with_capacity(w * ne);
        let mut y = Vec::with_capacity(w * ne);
        for c in 0..w {
            for j in 0..ne {
                x.push(state[self.sidx(c, j, 0)]);
                y.push(state[self.sidx(c, j, 1)]);
            }
        }
        SubdomainMesh { i_lo: self.spec.i_lo, n_eta: ne, x, y }
    }

    /// Residual vector, same length and ordering as the state.
    pub fn residual(&self, state: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(state.len(), self.n_unknowns(), "state length mismatch");
        let grid = self.grid;
        let ne = grid.n_eta;
        let w = self.width();
        let dxi = grid.d_xi;
        let deta = grid.d_eta;
        let two_dxi = 2.0 * dxi;
        let two_deta = 2.0 * deta;

        // extended arrays with ghost columns at artificial interfaces
        let gl = usize::from(self.left.is_some());
        let gr = usize::from(self.right.is_some());
        let ext = w + gl + gr;
        let mut xe = vec![0.0; ext * ne];
        let mut ye = vec![0.0; ext * ne];
        if let Some(data) = self.left {
            for j in 0..ne {
                xe[j] = data.ghost.g_x[j];
                ye[j] = data.ghost.g_y[j];
            }
        }
        for c in 0..w {
            let e = c + gl;
            for j in 0..ne {
                xe[e * ne + j] = state[self.sidx(c, j, 0)];
                ye[e * ne + j] = state[self.sidx(c, j, 1)];
            }
        }
        if let Some(data) = self.right {
            let e = ext - 1;
            for j in 0..ne {
                xe[e * ne + j] = data.ghost.g_x[j];
                ye[e * ne + j] = data.ghost.g_y[j];
            }
        }
        let mut ue = vec![0.0; ext * ne];
        for k in 0..ext * ne {
            ue[k] = self.problem.eval(xe[k], ye[k]);
        }

        let mons = monitor_field(
            &xe,
            &ye,
            &ue,
            ext,
            ne,
            dxi,
            deta,
            gl..gl + w,
            &self.params,
            self.spec.i_lo - gl,
        )?;
        let mon = |c: usize, j: usize| &mons[c * ne + j];
        let at = |arr: &[f64], e: usize, j: usize| arr[e * ne + j];

        let mut r = vec![0.0; self.n_unknowns()];
        for c in 0..w {
            let gi = self.spec.i_lo + c;
            let e = c + gl;
            let left_iface = c == 0 && !self.spec.left.is_physical();
            let right_iface = c == w - 1 && !self.spec.right.is_physical();
            let phys_left = c == 0 && self.spec.left.is_physical();
            let phys_right = c == w - 1 && self.spec.right.is_physical();

            for j in 0..ne {
                let xv = at(&xe, e, j);
                let yv = at(&ye, e, j);
                let bottom = j == 0;
                let top = j == ne - 1;

                let (rx, ry) = if left_iface || right_iface {
                    let (side, kind, data) = if left_iface {
                        (Side::Left, self.spec.left, self.left.unwrap())
                    } else {
                        (Side::Right, self.spec.right, self.right.unwrap())
                    };
                    // Robin data lives at the half-point between the
                    // interface column and its inward neighbor: first-order
                    // difference for x_ξ, two-point average for the value,
                    // nodal-matrix average for M inside S1. Both sides of the
                    // exchange evaluate the identical formula, so the rows
                    // cancel exactly at the single-domain solution.
                    let (d_x, d_y, x_h, m_h, sign) = match side {
                        Side::Right => (
                            (xv - at(&xe, e - 1, j)) / dxi,
                            (yv - at(&ye, e - 1, j)) / dxi,
                            0.5 * (xv + at(&xe, e - 1, j)),
                            MonitorMatrix::average(mon(c - 1, j), mon(c, j)),
                            1.0,
                        ),
                        Side::Left => (
                            (at(&xe, e + 1, j) - xv) / dxi,
                            (at(&ye, e + 1, j) - yv) / dxi,
                            0.5 * (at(&xe, e + 1, j) + xv),
                            MonitorMatrix::average(mon(c, j), mon(c + 1, j)),
                            -1.0,
                        ),
                    };
                    let rx = match kind {
                        TransmissionKind::Dirichlet => xv - data.rhs.g_x[j],
                        TransmissionKind::LinearRobin(p) => d_x + sign * p * x_h - data.rhs.g_x[j],
                        TransmissionKind::NonlinearRobin(p) => {
                            s_form([d_x, d_y], &m_h) + sign * p * x_h - data.rhs.g_x[j]
                        }
                        TransmissionKind::Physical => unreachable!(),
                    };
                    // The Robin exchange drives x. Exchanging y the same way
                    // recycles the interface y-error through the derivative
                    // term (the y-subsystem is nearly decoupled across ξ), so
                    // y keeps its interior η-equation at the interface column
                    // instead; at the physical ends it stays pinned. For the
                    // classical kind both coordinates exchange values.
                    let ry = match kind {
                        TransmissionKind::Dirichlet => yv - data.rhs.g_y[j],
                        _ => {
                            if bottom {
                                yv
                            } else if top {
                                yv - 1.0
                            } else {
                                let d_u = [
                                    (at(&xe, e, j + 1) - xv) / deta,
                                    (at(&ye, e, j + 1) - yv) / deta,
                                ];
                                let d_d = [
                                    (xv - at(&xe, e, j - 1)) / deta,
                                    (yv - at(&ye, e, j - 1)) / deta,
                                ];
                                let m_u = MonitorMatrix::average(mon(c, j), mon(c, j + 1));
                                let m_d = MonitorMatrix::average(mon(c, j - 1), mon(c, j));
                                s_form(d_u, &m_u) - s_form(d_d, &m_d)
                            }
                        }
                    };
                    (rx, ry)
                } else if (phys_left || phys_right) && (bottom || top) {
                    // physical corner: both coordinates pinned
                    (
                        xv - if phys_left { 0.0 } else { 1.0 },
                        yv - if bottom { 0.0 } else { 1.0 },
                    )
                } else if bottom || top {
                    let rx = match self.mode {
                        BoundaryMode::OneDimEp => edge_ep_row(
                            [at(&xe, e - 1, j), xv, at(&xe, e + 1, j)],
                            [at(&ue, e - 1, j), at(&ue, e, j), at(&ue, e + 1, j)],
                            &self.params,
                            if bottom { "bottom" } else { "top" },
                            gi,
                        )?,
                        BoundaryMode::Orthogonality => {
                            if bottom {
                                d_onesided(xv, at(&xe, e, 1), at(&xe, e, 2), two_deta)
                            } else {
                                -d_onesided(xv, at(&xe, e, j - 1), at(&xe, e, j - 2), two_deta)
                            }
                        }
                    };
                    (rx, yv - if bottom { 0.0 } else { 1.0 })
                } else if phys_left || phys_right {
                    let ry = match self.mode {
                        BoundaryMode::OneDimEp => edge_ep_row(
                            [at(&ye, e, j - 1), yv, at(&ye, e, j + 1)],
                            [at(&ue, e, j - 1), at(&ue, e, j), at(&ue, e, j + 1)],
                            &self.params,
                            if phys_left { "left" } else { "right" },
                            j,
                        )?,
                        BoundaryMode::Orthogonality => {
                            if phys_left {
                                d_onesided(yv, at(&ye, e + 1, j), at(&ye, e + 2, j), two_dxi)
                            } else {
                                -d_onesided(yv, at(&ye, e - 1, j), at(&ye, e - 2, j), two_dxi)
                            }
                        }
                    };
                    (xv - if phys_left { 0.0 } else { 1.0 }, ry)
                } else {
                    // interior local-EP rows: flux differences of the S-forms
                    let d_p = [
                        (at(&xe, e + 1, j) - xv) / dxi,
                        (at(&ye, e + 1, j) - yv) / dxi,
                    ];
                    let d_m = [
                        (xv - at(&xe, e - 1, j)) / dxi,
                        (yv - at(&ye, e - 1, j)) / dxi,
                    ];
                    let m_p = MonitorMatrix::average(mon(c, j), mon(c + 1, j));
                    let m_m = MonitorMatrix::average(mon(c - 1, j), mon(c, j));
                    let r1 = s_form(d_p, &m_p) - s_form(d_m, &m_m);

                    let d_u = [
                        (at(&xe, e, j + 1) - xv) / deta,
                        (at(&ye, e, j + 1) - yv) / deta,
                    ];
                    let d_d = [
                        (xv - at(&xe, e, j - 1)) / deta,
                        (yv - at(&ye, e, j - 1)) / deta,
                    ];
                    let m_u = MonitorMatrix::average(mon(c, j), mon(c, j + 1));
                    let m_d = MonitorMatrix::average(mon(c, j - 1), mon(c, j));
                    let r2 = s_form(d_u, &m_u) - s_form(d_d, &m_d);
                    (r1, r2)
                };

                r[self.sidx(c, j, 0)] = rx;
                r[self.sidx(c, j, 1)] = ry;
            }
        }
        Ok(r)
    }

    /// Column groups for the finite-difference Jacobian. A residual row only
    /// reads state within a 2-node box of its own node, so columns whose
    /// nodes are at least 5 apart in either index never share a row.
    pub fn coloring(&self) -> Coloring {
        let w = self.width();
        let ne = self.grid.n_eta;
        let n = self.n_unknowns();
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); 50];
        let mut support: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in 0..w {
            for j in 0..ne {
                let c0 = c.saturating_sub(2);
                let c1 = (c + 2).min(w - 1);
                let j0 = j.saturating_sub(2);
                let j1 = (j + 2).min(ne - 1);
                let mut rows = Vec::with_capacity((c1 - c0 + 1) * (j1 - j0 + 1) * 2);
                for cc in c0..=c1 {
                    for jj in j0..=j1 {
                        let base = 2 * (cc * ne + jj);
                        rows.push(base);
                        rows.push(base + 1);
                    }
                }
                for comp in 0..2 {
                    let col = self.sidx(c, j, comp);
                    buckets[(c % 5) * 10 + (j % 5) * 2 + comp].push(col);
                    support[col] = rows.clone();
                }
            }
        }
        Coloring {
            groups: buckets.into_iter().filter(|g| !g.is_empty()).collect(),
            support,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{partition_strips, PhysicalMesh};
    use crate::nsolve::{inf_norm, jacobian_fd, DenseMatrix};

    fn single_spec(grid: &ComputationalGrid) -> SubdomainSpec {
        SubdomainSpec {
            i_lo: 0,
            i_hi: grid.n_xi - 1,
            left: TransmissionKind::Physical,
            right: TransmissionKind::Physical,
        }
    }

    fn uniform_system_residual(mode: BoundaryMode, params: MonitorParams, problem: &TestProblem) -> Vec<f64> {
        let grid = ComputationalGrid::new(7, 6).unwrap();
        let sys = StripSystem::new(&grid, single_spec(&grid), params, problem, mode, None, None).unwrap();
        sys.residual(&sys.uniform_state()).unwrap()
    }

    #[test]
    fn uniform_mesh_with_constant_u_is_a_root() {
        let params = MonitorParams::new(0.7, 0.05).unwrap();
        let problem = TestProblem::constant(3.0);
        for mode in [BoundaryMode::OneDimEp, BoundaryMode::Orthogonality] {
            let r = uniform_system_residual(mode, params, &problem);
            assert!(inf_norm(&r) < 1e-14, "{mode:?}: residual {}", inf_norm(&r));
        }
    }

    #[test]
    fn uniform_mesh_with_a_zero_is_a_root() {
        let params = MonitorParams::new(0.0, 0.05).unwrap();
        let problem = TestProblem::boundary_layer();
        for mode in [BoundaryMode::OneDimEp, BoundaryMode::Orthogonality] {
            let r = uniform_system_residual(mode, params, &problem);
            assert!(inf_norm(&r) < 1e-14, "{mode:?}: residual {}", inf_norm(&r));
        }
    }

    #[test]
    fn residual_length_contract() {
        let grid = ComputationalGrid::new(9, 5).unwrap();
        let params = MonitorParams::new(0.5, 0.1).unwrap();
        let problem = TestProblem::boundary_layer();
        let sys = StripSystem::new(&grid, single_spec(&grid), params, &problem, BoundaryMode::OneDimEp, None, None).unwrap();
        assert_eq!(sys.n_unknowns(), 2 * 9 * 5);
        let r = sys.residual(&sys.uniform_state()).unwrap();
        assert_eq!(r.len(), 2 * 9 * 5);
    }

    #[test]
    fn quadratic_x_interior_rows_telescope() {
        // x_i = ξ_i², y = η, u ≡ 0: interior ξ-rows reduce to Δx differences = 2·d_xi
        let grid = ComputationalGrid::new(6, 4).unwrap();
        let params = MonitorParams::new(0.9, 0.0).unwrap();
        let problem = TestProblem::constant(0.0);
        let sys = StripSystem::new(&grid, single_spec(&grid), params, &problem, BoundaryMode::OneDimEp, None, None).unwrap();
        let mut state = sys.uniform_state();
        for c in 0..6 {
            for j in 0..4 {
                let xi = grid.xi(c);
                state[2 * (c * 4 + j)] = xi * xi;
            }
        }
        let r = sys.residual(&state).unwrap();
        for c in 1..5 {
            for j in 1..3 {
                let rx = r[2 * (c * 4 + j)];
                let ry = r[2 * (c * 4 + j) + 1];
                assert!((rx - 2.0 * grid.d_xi).abs() < 1e-13, "rx({c},{j}) = {rx}");
                assert!(ry.abs() < 1e-13, "ry({c},{j}) = {ry}");
            }
        }
    }

    #[test]
    fn ep1d_step_monitor_equidistributes_at_two_thirds() {
        // M ≡ 1 on [0, 0.5], M ≡ 2 on [0.5, 1], sampled at cell midpoints:
        // the interior node of a 3-node edge must sit at x = 2/3.
        let step = |mid: f64| if mid < 0.5 { 1.0 } else { 2.0 };
        let f = |x1: f64| {
            let m_minus = step(x1 / 2.0);
            let m_plus = step((x1 + 1.0) / 2.0);
            ep1d_residual(0.0, x1, 1.0, m_minus, m_plus)
        };
        let (mut lo, mut hi) = (0.05, 0.95);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert!((root - 2.0 / 3.0).abs() < 1e-8, "root = {root}");
    }

    #[test]
    fn ep1d_constant_u_keeps_uniform_edge() {
        let params = MonitorParams::new(0.8, 0.1).unwrap();
        let r = edge_ep_row([0.0, 0.5, 1.0], [2.0, 2.0, 2.0], &params, "bottom", 1).unwrap();
        assert_eq!(r, 0.0);
        let err = edge_ep_row([0.3, 0.3, 1.0], [0.0, 1.0, 2.0], &params, "bottom", 1).unwrap_err();
        assert!(matches!(err, Error::EdgeCollapse { edge: "bottom", index: 1 }));
    }

    #[test]
    fn residual_symmetry_under_eta_flip() {
        // u(x, 1−y) = u(x, y); a mesh even in x and affinely odd in y about
        // η = 1/2 must produce x-rows even and y-rows odd under j-flip.
        let grid = ComputationalGrid::new(8, 7).unwrap();
        let params = MonitorParams::new(0.7, 0.05).unwrap();
        let problem = TestProblem::boundary_layer();
        let sys = StripSystem::new(&grid, single_spec(&grid), params, &problem, BoundaryMode::OneDimEp, None, None).unwrap();
        let ne = grid.n_eta;
        let mut state = sys.uniform_state();
        for c in 0..8 {
            for j in 0..ne {
                let xi = grid.xi(c);
                let eta = grid.eta(j);
                let pi = std::f64::consts::PI;
                state[2 * (c * ne + j)] = xi + 0.05 * (pi * xi).sin() * (pi * eta).sin().powi(2);
                state[2 * (c * ne + j) + 1] = eta + 0.05 * (2.0 * pi * eta).sin() * (pi * xi).sin();
            }
        }
        let r = sys.residual(&state).unwrap();
        for c in 0..8 {
            for j in 0..ne {
                let jf = ne - 1 - j;
                let rx = r[2 * (c * ne + j)];
                let rxf = r[2 * (c * ne + jf)];
                let ry = r[2 * (c * ne + j) + 1];
                let ryf = r[2 * (c * ne + jf) + 1];
                assert!((rx - rxf).abs() < 1e-12, "x-row asymmetry at ({c},{j}): {rx} vs {rxf}");
                assert!((ry + ryf).abs() < 1e-12, "y-row asymmetry at ({c},{j}): {ry} vs {ryf}");
            }
        }
    }

    #[test]
    fn degenerate_state_reports_node() {
        let grid = ComputationalGrid::new(5, 4).unwrap();
        let params = MonitorParams::new(0.7, 0.05).unwrap();
        let problem = TestProblem::boundary_layer();
        let sys = StripSystem::new(&grid, single_spec(&grid), params, &problem, BoundaryMode::OneDimEp, None, None).unwrap();
        let mut state = sys.uniform_state();
        // collapse every x to the same value: x_ξ = 0 and the Jacobian degenerates
        for c in 0..5 {
            for j in 0..4 {
                state[2 * (c * 4 + j)] = 0.5;
            }
        }
        let err = sys.residual(&state).unwrap_err();
        assert!(matches!(err, Error::DegenerateJacobian { node: Some(_), .. }), "{err:?}");
    }

    fn two_strip_setup(
        grid: &ComputationalGrid,
        kind: TransmissionKind,
    ) -> (Vec<SubdomainSpec>, Vec<SubdomainMesh>) {
        let specs = partition_strips(grid, 2, 4, kind).unwrap();
        let uniform = PhysicalMesh::uniform(grid);
        let subs: Vec<_> = specs.iter().map(|s| SubdomainMesh::restrict(&uniform, s)).collect();
        (specs, subs)
    }

    #[test]
    fn robin_rhs_on_uniform_neighbor() {
        let grid = ComputationalGrid::new(12, 12).unwrap();
        let params = MonitorParams::new(0.7, 0.05).unwrap();
        let constant = TestProblem::constant(0.0);
        let (specs, subs) = two_strip_setup(&grid, TransmissionKind::LinearRobin(2.0));

        // Dirichlet rhs equals the plain trace
        let d = compute_neighbor_data(
            &grid, &params, &constant, TransmissionKind::Dirichlet,
            Side::Right, specs[0].i_hi, &subs[0], &subs[1],
        )
        .unwrap();
        for j in 0..12 {
            assert_eq!(d.rhs.g_x[j], grid.xi(specs[0].i_hi));
            assert_eq!(d.rhs.g_y[j], grid.eta(j));
        }
        assert_eq!(d.ghost.column, specs[0].i_hi + 1);

        // linear Robin at a right interface on the uniform mesh: x_ξ = 1
        // exactly and the value term sits at the half-point
        let i = specs[0].i_hi;
        let xi_h = 0.5 * (grid.xi(i) + grid.xi(i - 1));
        let lr = compute_neighbor_data(
            &grid, &params, &constant, TransmissionKind::LinearRobin(2.0),
            Side::Right, i, &subs[0], &subs[1],
        )
        .unwrap();
        for j in 0..12 {
            assert!((lr.rhs.g_x[j] - (1.0 + 2.0 * xi_h)).abs() < 1e-14);
        }

        // nonlinear Robin with u ≡ const: S1 = 1, both signs
        let nr = compute_neighbor_data(
            &grid, &params, &constant, TransmissionKind::NonlinearRobin(2.0),
            Side::Right, i, &subs[0], &subs[1],
        )
        .unwrap();
        for j in 0..12 {
            assert!((nr.rhs.g_x[j] - (1.0 + 2.0 * xi_h)).abs() < 1e-14);
        }
        let il = specs[1].i_lo;
        let xi_hl = 0.5 * (grid.xi(il) + grid.xi(il + 1));
        let nl = compute_neighbor_data(
            &grid, &params, &constant, TransmissionKind::NonlinearRobin(2.0),
            Side::Left, il, &subs[1], &subs[0],
        )
        .unwrap();
        for j in 0..12 {
            assert!((nl.rhs.g_x[j] - (1.0 - 2.0 * xi_hl)).abs() < 1e-14);
        }
    }

    #[test]
    fn transmission_rows_vanish_at_uniform_fixed_point() {
        // with u ≡ const the uniform mesh solves every strip system, for all kinds
        let grid = ComputationalGrid::new(12, 12).unwrap();
        let params = MonitorParams::new(0.7, 0.05).unwrap();
        let problem = TestProblem::constant(1.0);
        for kind in [
            TransmissionKind::Dirichlet,
            TransmissionKind::LinearRobin(2.0),
            TransmissionKind::NonlinearRobin(2.0),
        ] {
            let (specs, subs) = two_strip_setup(&grid, kind);
            for s in 0..2 {
                let left = (s > 0)
                    .then(|| {
                        compute_neighbor_data(
                            &grid, &params, &problem, kind, Side::Left, specs[s].i_lo, &subs[s], &subs[s - 1],
                        )
                    })
                    .transpose()
                    .unwrap();
                let right = (s + 1 < 2)
                    .then(|| {
                        compute_neighbor_data(
                            &grid, &params, &problem, kind, Side::Right, specs[s].i_hi, &subs[s], &subs[s + 1],
                        )
                    })
                    .transpose()
                    .unwrap();
                let sys = StripSystem::new(
                    &grid, specs[s], params, &problem, BoundaryMode::OneDimEp,
                    left.as_ref(), right.as_ref(),
                )
                .unwrap();
                let r = sys.residual(&sys.state_from(&subs[s])).unwrap();
                assert!(inf_norm(&r) < 1e-13, "{kind:?} strip {s}: {}", inf_norm(&r));
            }
        }
    }

    #[test]
    fn missing_neighbor_data_is_rejected() {
        let grid = ComputationalGrid::new(12, 12).unwrap();
        let params = MonitorParams::new(0.7, 0.05).unwrap();
        let problem = TestProblem::constant(0.0);
        let specs = partition_strips(&grid, 2, 4, TransmissionKind::Dirichlet).unwrap();
        let err = StripSystem::new(&grid, specs[0], params, &problem, BoundaryMode::OneDimEp, None, None).unwrap_err();
        assert!(matches!(err, Error::MissingNeighbor { side: "right" }));
    }

    #[test]
    fn nan_in_rhs_is_rejected() {
        let grid = ComputationalGrid::new(12, 12).unwrap();
        let params = MonitorParams::new(0.7, 0.05).unwrap();
        let problem = TestProblem::constant(0.0);
        let (specs, subs) = two_strip_setup(&grid, TransmissionKind::Dirichlet);
        let mut data = compute_neighbor_data(
            &grid, &params, &problem, TransmissionKind::Dirichlet,
            Side::Right, specs[0].i_hi, &subs[0], &subs[1],
        )
        .unwrap();
        data.rhs.g_x[3] = f64::NAN;
        let err = StripSystem::new(
            &grid, specs[0], params, &problem, BoundaryMode::OneDimEp, None, Some(&data),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn interface_must_be_interior_to_neighbor() {
        let grid = ComputationalGrid::new(12, 12).unwrap();
        let params = MonitorParams::new(0.7, 0.05).unwrap();
        let problem = TestProblem::constant(0.0);
        let (_, subs) = two_strip_setup(&grid, TransmissionKind::Dirichlet);
        // column 11 is the neighbor's own right edge, not interior
        let err = compute_neighbor_data(
            &grid, &params, &problem, TransmissionKind::Dirichlet,
            Side::Right, 11, &subs[0], &subs[1],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Partition(_)));
    }

    #[test]
    fn jacobian_matches_hand_assembled_stencil() {
        // a = 0 and u ≡ const on a 4×4 grid: every row is linear with known
        // coefficients (1D Laplacians scaled by 1/h on interior rows, the
        // unscaled second difference on edge rows, identity on pinned rows).
        let grid = ComputationalGrid::new(4, 4).unwrap();
        let params = MonitorParams::new(0.0, 0.05).unwrap();
        let problem = TestProblem::constant(0.0);
        let sys = StripSystem::new(&grid, single_spec(&grid), params, &problem, BoundaryMode::OneDimEp, None, None).unwrap();
        let ne = 4usize;
        let idx = |c: usize, j: usize, comp: usize| 2 * (c * ne + j) + comp;
        let n = sys.n_unknowns();
        let mut expect = DenseMatrix::zeros(n);
        let h_inv = 3.0;
        for c in 0..4 {
            for j in 0..4 {
                let (rx, ry) = (idx(c, j, 0), idx(c, j, 1));
                let corner = (c == 0 || c == 3) && (j == 0 || j == 3);
                if corner {
                    expect.set(rx, idx(c, j, 0), 1.0);
                    expect.set(ry, idx(c, j, 1), 1.0);
                } else if j == 0 || j == 3 {
                    expect.set(rx, idx(c - 1, j, 0), 1.0);
                    expect.set(rx, idx(c, j, 0), -2.0);
                    expect.set(rx, idx(c + 1, j, 0), 1.0);
                    expect.set(ry, idx(c, j, 1), 1.0);
                } else if c == 0 || c == 3 {
                    expect.set(rx, idx(c, j, 0), 1.0);
                    expect.set(ry, idx(c, j - 1, 1), 1.0);
                    expect.set(ry, idx(c, j, 1), -2.0);
                    expect.set(ry, idx(c, j + 1, 1), 1.0);
                } else {
                    expect.set(rx, idx(c - 1, j, 0), h_inv);
                    expect.set(rx, idx(c, j, 0), -2.0 * h_inv);
                    expect.set(rx, idx(c + 1, j, 0), h_inv);
                    expect.set(ry, idx(c, j - 1, 1), h_inv);
                    expect.set(ry, idx(c, j, 1), -2.0 * h_inv);
                    expect.set(ry, idx(c, j + 1, 1), h_inv);
                }
            }
        }
        let state = sys.uniform_state();
        let r0 = sys.residual(&state).unwrap();
        let mut f = |v: &[f64]| sys.residual(v);
        let jac = jacobian_fd(&mut f, &state, &r0, 1e-7, None).unwrap();
        for r in 0..n {
            for c in 0..n {
                assert!(
                    (jac.get(r, c) - expect.get(r, c)).abs() < 1e-5,
                    "J[{r}][{c}] = {} expected {}",
                    jac.get(r, c),
                    expect.get(r, c)
                );
            }
        }
    }

    #[test]
    fn grouped_jacobian_is_bit_identical() {
        let grid = ComputationalGrid::new(4, 4).unwrap();
        let params = MonitorParams::new(0.7, 0.05).unwrap();
        let problem = TestProblem::boundary_layer();
        let sys = StripSystem::new(&grid, single_spec(&grid), params, &problem, BoundaryMode::OneDimEp, None, None).unwrap();
        // a non-trivial state so the Jacobian has no accidental zeros
        let mut state = sys.uniform_state();
        for (k, v) in state.iter_mut().enumerate() {
            *v += 1e-3 * ((k as f64 * 0.7).sin());
        }
        let r0 = sys.residual(&state).unwrap();
        let coloring = sys.coloring();
        let mut f = |v: &[f64]| sys.residual(v);
        let dense = jacobian_fd(&mut f, &state, &r0, 1e-7, None).unwrap();
        let mut f2 = |v: &[f64]| sys.residual(v);
        let grouped = jacobian_fd(&mut f2, &state, &r0, 1e-7, Some(&coloring)).unwrap();
        assert_eq!(dense.a, grouped.a);
    }
}
