//! Computational grid, physical mesh, strip partitions, and interface traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform lattice on the computational domain [0,1]×[0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputationalGrid {
    pub n_xi: usize,
    pub n_eta: usize,
    pub d_xi: f64,
    pub d_eta: f64,
}

impl ComputationalGrid {
    pub fn new(n_xi: usize, n_eta: usize) -> Result<Self> {
        if n_xi < 3 || n_eta < 3 {
            return Err(Error::Config(format!(
                "grid must have at least 3 nodes per direction, got {n_xi}x{n_eta}"
            )));
        }
        Ok(Self {
            n_xi,
            n_eta,
            d_xi: 1.0 / (n_xi - 1) as f64,
            d_eta: 1.0 / (n_eta - 1) as f64,
        })
    }

    #[inline]
    pub fn xi(&self, i: usize) -> f64 {
        i as f64 * self.d_xi
    }

    #[inline]
    pub fn eta(&self, j: usize) -> f64 {
        j as f64 * self.d_eta
    }
}

/// Physical node coordinates, indexed by (i,j) with j fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalMesh {
    pub n_xi: usize,
    pub n_eta: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PhysicalMesh {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_eta + j
    }

    /// The canonical initial iterate: x = ξ, y = η exactly.
    pub fn uniform(grid: &ComputationalGrid) -> Self {
        let (n_xi, n_eta) = (grid.n_xi, grid.n_eta);
        let mut x = vec![0.0; n_xi * n_eta];
        let mut y = vec![0.0; n_xi * n_eta];
        for i in 0..n_xi {
            for j in 0..n_eta {
                x[i * n_eta + j] = grid.xi(i);
                y[i * n_eta + j] = grid.eta(j);
            }
        }
        Self { n_xi, n_eta, x, y }
    }

    pub fn from_values(n_xi: usize, n_eta: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != n_xi * n_eta || y.len() != n_xi * n_eta {
            return Err(Error::Config(format!(
                "mesh value arrays must have length {}, got {} and {}",
                n_xi * n_eta,
                x.len(),
                y.len()
            )));
        }
        Ok(Self { n_xi, n_eta, x, y })
    }

    #[inline]
    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.x[self.idx(i, j)]
    }

    #[inline]
    pub fn y(&self, i: usize, j: usize) -> f64 {
        self.y[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64, y: f64) {
        let k = self.idx(i, j);
        self.x[k] = x;
        self.y[k] = y;
    }

    pub fn x_values(&self) -> &[f64] {
        &self.x
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    /// Smallest discrete Jacobian x_ξ y_η − x_η y_ξ over interior nodes
    /// (centered differences). Positive everywhere means untangled.
    pub fn min_interior_jacobian(&self, grid: &ComputationalGrid) -> f64 {
        let mut min = f64::INFINITY;
        for i in 1..self.n_xi - 1 {
            for j in 1..self.n_eta - 1 {
                let x_xi = (self.x(i + 1, j) - self.x(i - 1, j)) / (2.0 * grid.d_xi);
                let x_eta = (self.x(i, j + 1) - self.x(i, j - 1)) / (2.0 * grid.d_eta);
                let y_xi = (self.y(i + 1, j) - self.y(i - 1, j)) / (2.0 * grid.d_xi);
                let y_eta = (self.y(i, j + 1) - self.y(i, j - 1)) / (2.0 * grid.d_eta);
                let det = x_xi * y_eta - x_eta * y_xi;
                if det < min {
                    min = det;
                }
            }
        }
        min
    }

    /// CSV export with header `i,j,xi,eta,x,y`, rows ordered by j then i.
    pub fn to_csv(&self) -> String {
        let d_xi = 1.0 / (self.n_xi - 1) as f64;
        let d_eta = 1.0 / (self.n_eta - 1) as f64;
        let mut out = String::from("i,j,xi,eta,x,y\n");
        for j in 0..self.n_eta {
            for i in 0..self.n_xi {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    i,
                    j,
                    i as f64 * d_xi,
                    j as f64 * d_eta,
                    self.x(i, j),
                    self.y(i, j)
                ));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header.trim() != "i,j,xi,eta,x,y" {
            return Err(Error::Config(format!("unexpected mesh CSV header: {header}")));
        }
        let mut rows = Vec::new();
        let mut n_xi = 0usize;
        let mut n_eta = 0usize;
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Config(format!("mesh CSV line {}: expected 6 fields", ln + 2)));
            }
            let parse =
                |s: &str| -> Result<f64> { s.trim().parse().map_err(|_| Error::Config(format!("mesh CSV line {}: bad number {s:?}", ln + 2))) };
            let i: usize = fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("mesh CSV line {}: bad index", ln + 2)))?;
            let j: usize = fields[1]
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("mesh CSV line {}: bad index", ln + 2)))?;
            let x = parse(fields[4])?;
            let y = parse(fields[5])?;
            n_xi = n_xi.max(i + 1);
            n_eta = n_eta.max(j + 1);
            rows.push((i, j, x, y));
        }
        if rows.len() != n_xi * n_eta {
            return Err(Error::Config(format!(
                "mesh CSV has {} rows, expected {} for a {}x{} mesh",
                rows.len(),
                n_xi * n_eta,
                n_xi,
                n_eta
            )));
        }
        let mut x = vec![f64::NAN; n_xi * n_eta];
        let mut y = vec![f64::NAN; n_xi * n_eta];
        for (i, j, xv, yv) in rows {
            x[i * n_eta + j] = xv;
            y[i * n_eta + j] = yv;
        }
        if x.iter().chain(y.iter()).any(|v| v.is_nan()) {
            return Err(Error::Config("mesh CSV is missing node rows".into()));
        }
        Ok(Self { n_xi, n_eta, x, y })
    }
}

/// Transmission condition imposed at a strip side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TransmissionKind {
    /// True boundary of the computational domain.
    Physical,
    /// Value exchange (classical Schwarz).
    Dirichlet,
    /// x_ξ ± p·x exchange.
    LinearRobin(f64),
    /// S1 ± p·x on the x equations, linear Robin on y.
    NonlinearRobin(f64),
}

impl TransmissionKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            TransmissionKind::LinearRobin(p) | TransmissionKind::NonlinearRobin(p) => {
                if !(p.is_finite() && *p > 0.0) {
                    return Err(Error::Config(format!("Robin parameter p must be finite and > 0, got {p}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn is_physical(&self) -> bool {
        matches!(self, TransmissionKind::Physical)
    }
}

/// One ξ-strip of the decomposition, with inclusive column range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubdomainSpec {
    pub i_lo: usize,
    pub i_hi: usize,
    pub left: TransmissionKind,
    pub right: TransmissionKind,
}

impl SubdomainSpec {
    pub fn width(&self) -> usize {
        self.i_hi - self.i_lo + 1
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.i_lo && i <= self.i_hi
    }
}

/// Values transmitted along one interface column.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceTrace {
    pub column: usize,
    pub g_x: Vec<f64>,
    pub g_y: Vec<f64>,
}

impl InterfaceTrace {
    pub fn validate(&self, n_eta: usize) -> Result<()> {
        if self.g_x.len() != n_eta || self.g_y.len() != n_eta {
            return Err(Error::Config(format!(
                "interface trace at column {} has length {}/{}, expected {}",
                self.column,
                self.g_x.len(),
                self.g_y.len(),
                n_eta
            )));
        }
        if self.g_x.iter().chain(self.g_y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("interface trace at column {}", self.column)));
        }
        Ok(())
    }
}

/// Mesh values restricted to one strip (columns i_lo.., j fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainMesh {
    pub i_lo: usize,
    pub n_eta: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SubdomainMesh {
    pub fn restrict(mesh: &PhysicalMesh, spec: &SubdomainSpec) -> Self {
        let n_eta = mesh.n_eta;
        let w = spec.width();
        let mut x = Vec::with_capacity(w * n_eta);
        let mut y = Vec::with_capacity(w * n_eta);
        for i in spec.i_lo..=spec.i_hi {
            for j in 0..n_eta {
                x.push(mesh.x(i, j));
                y.push(mesh.y(i, j));
            }
        }
        Self { i_lo: spec.i_lo, n_eta, x, y }
    }

    pub fn width(&self) -> usize {
        self.x.len() / self.n_eta
    }

    #[inline]
    pub fn x(&self, c: usize, j: usize) -> f64 {
        self.x[c * self.n_eta + j]
    }

    #[inline]
    pub fn y(&self, c: usize, j: usize) -> f64 {
        self.y[c * self.n_eta + j]
    }

    /// Access by global column index.
    #[inline]
    pub fn x_global(&self, i: usize, j: usize) -> f64 {
        self.x(i - self.i_lo, j)
    }

    #[inline]
    pub fn y_global(&self, i: usize, j: usize) -> f64 {
        self.y(i - self.i_lo, j)
    }

    pub fn contains_column(&self, i: usize) -> bool {
        i >= self.i_lo && i < self.i_lo + self.width()
    }

    /// Raw coordinate trace at a global column.
    pub fn trace(&self, i: usize) -> Result<InterfaceTrace> {
        if !self.contains_column(i) {
            return Err(Error::Partition(format!(
                "column {i} is outside subdomain columns {}..={}",
                self.i_lo,
                self.i_lo + self.width() - 1
            )));
        }
        let c = i - self.i_lo;
        Ok(InterfaceTrace {
            column: i,
            g_x: (0..self.n_eta).map(|j| self.x(c, j)).collect(),
            g_y: (0..self.n_eta).map(|j| self.y(c, j)).collect(),
        })
    }

    /// Max-norm coordinate differences against a full mesh, over this strip.
    pub fn max_errors_vs(&self, mesh: &PhysicalMesh) -> (f64, f64) {
        let mut ex = 0.0f64;
        let mut ey = 0.0f64;
        for c in 0..self.width() {
            let i = self.i_lo + c;
            for j in 0..self.n_eta {
                ex = ex.max((self.x(c, j) - mesh.x(i, j)).abs());
                ey = ey.max((self.y(c, j) - mesh.y(i, j)).abs());
            }
        }
        (ex, ey)
    }

    pub fn max_abs_diff(&self, other: &SubdomainMesh) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.y.iter().zip(&other.y))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Decompose the ξ range into `n_sub` overlapping strips sharing exactly
/// `overlap_points` grid columns per adjacent pair, as balanced as possible
/// (lower strips absorb the remainder). Outermost sides are Physical, inner
/// interfaces carry `interface_kind`.
pub fn partition_strips(
    grid: &ComputationalGrid,
    n_sub: usize,
    overlap_points: usize,
    interface_kind: TransmissionKind,
) -> Result<Vec<SubdomainSpec>> {
    if n_sub == 0 {
        return Err(Error::Partition("n_sub must be at least 1".into()));
    }
    if n_sub == 1 {
        return Ok(vec![SubdomainSpec {
            i_lo: 0,
            i_hi: grid.n_xi - 1,
            left: TransmissionKind::Physical,
            right: TransmissionKind::Physical,
        }]);
    }
    if interface_kind.is_physical() {
        return Err(Error::Config("interface kind must not be Physical for n_sub > 1".into()));
    }
    interface_kind.validate()?;
    if overlap_points < 2 {
        return Err(Error::Partition(format!(
            "overlap_points must be at least 2, got {overlap_points}"
        )));
    }
    let total = grid.n_xi + (n_sub - 1) * overlap_points;
    let base = total / n_sub;
    let rem = total % n_sub;
    let widths: Vec<usize> = (0..n_sub).map(|s| base + usize::from(s < rem)).collect();
    for (s, &w) in widths.iter().enumerate() {
        if w < 3 || w <= overlap_points {
            return Err(Error::Partition(format!(
                "strip {s} would get {w} columns (grid {} columns, {n_sub} subdomains, overlap {overlap_points}); \
                 every strip needs at least 3 columns and strictly more than the overlap",
                grid.n_xi
            )));
        }
    }
    let mut specs = Vec::with_capacity(n_sub);
    let mut i_lo = 0usize;
    for (s, &w) in widths.iter().enumerate() {
        let i_hi = i_lo + w - 1;
        specs.push(SubdomainSpec {
            i_lo,
            i_hi,
            left: if s == 0 { TransmissionKind::Physical } else { interface_kind },
            right: if s == n_sub - 1 { TransmissionKind::Physical } else { interface_kind },
        });
        i_lo = i_lo + w - overlap_points;
    }
    debug_assert_eq!(specs.last().unwrap().i_hi, grid.n_xi - 1);
    Ok(specs)
}

/// Column trace of a full mesh.
pub fn extract_trace(mesh: &PhysicalMesh, i: usize) -> Result<InterfaceTrace> {
    if i >= mesh.n_xi {
        return Err(Error::Config(format!(
            "trace column {i} out of range for a mesh with {} columns",
            mesh.n_xi
        )));
    }
    Ok(InterfaceTrace {
        column: i,
        g_x: (0..mesh.n_eta).map(|j| mesh.x(i, j)).collect(),
        g_y: (0..mesh.n_eta).map(|j| mesh.y(i, j)).collect(),
    })
}

/// Combine strip meshes into one global mesh. Each global column is taken
/// from the strip whose center is nearest (ties go to the lower strip index),
/// which keeps the output well-defined even before the overlaps agree.
pub fn glue(
    subs: &[SubdomainMesh],
    specs: &[SubdomainSpec],
    grid: &ComputationalGrid,
) -> Result<PhysicalMesh> {
    if subs.len() != specs.len() || subs.is_empty() {
        return Err(Error::Config(format!(
            "glue needs matching non-empty strip lists, got {} meshes and {} specs",
            subs.len(),
            specs.len()
        )));
    }
    let n_eta = subs[0].n_eta;
    let mut x = vec![0.0; grid.n_xi * n_eta];
    let mut y = vec![0.0; grid.n_xi * n_eta];
    for i in 0..grid.n_xi {
        let mut owner = None;
        let mut best = f64::INFINITY;
        for (s, spec) in specs.iter().enumerate() {
            if spec.contains(i) {
                let center = (spec.i_lo + spec.i_hi) as f64 / 2.0;
                let dist = (i as f64 - center).abs();
                if dist < best {
                    best = dist;
                    owner = Some(s);
                }
            }
        }
        let s = owner.ok_or_else(|| Error::Partition(format!("column {i} is covered by no strip")))?;
        let sub = &subs[s];
        for j in 0..n_eta {
            x[i * n_eta + j] = sub.x_global(i, j);
            y[i * n_eta + j] = sub.y_global(i, j);
        }
    }
    Ok(PhysicalMesh { n_xi: grid.n_xi, n_eta, x, y })
}
