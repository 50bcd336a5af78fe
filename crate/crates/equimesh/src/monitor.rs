//! Test functions, the regularized monitor matrix, and arc-length forms.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this |x_ξ y_η − x_η y_ξ| the mesh transformation is treated as
/// collapsed and gradient evaluation fails loudly.
pub const JACOBIAN_FLOOR: f64 = 1e-12;

/// Relaxation and regularization parameters of the modified monitor,
/// M = k ∇u ∇uᵀ + I with k = a²/(1 + b ∇uᵀ∇u).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorParams {
    pub a: f64,
    pub b: f64,
}

impl MonitorParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && (0.0..=1.0).contains(&a)) {
            return Err(Error::Config(format!("relaxation parameter a must lie in [0,1], got {a}")));
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::Config(format!("regularization b must be >= 0, got {b}")));
        }
        Ok(Self { a, b })
    }
}

/// Symmetric 2×2 monitor matrix (m21 = m12).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorMatrix {
    pub m11: f64,
    pub m12: f64,
    pub m22: f64,
}

impl MonitorMatrix {
    pub fn identity() -> Self {
        Self { m11: 1.0, m12: 0.0, m22: 1.0 }
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m12
    }

    /// dᵀ M d
    #[inline]
    pub fn quad(&self, d: [f64; 2]) -> f64 {
        self.m11 * d[0] * d[0] + 2.0 * self.m12 * d[0] * d[1] + self.m22 * d[1] * d[1]
    }

    /// Arithmetic average, used for half-point values between two nodes.
    #[inline]
    pub fn average(a: &Self, b: &Self) -> Self {
        Self {
            m11: 0.5 * (a.m11 + b.m11),
            m12: 0.5 * (a.m12 + b.m12),
            m22: 0.5 * (a.m22 + b.m22),
        }
    }
}

/// Scalar field the mesh adapts to, selected by name or supplied as a closure.
#[derive(Clone)]
pub struct TestProblem {
    name: String,
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for TestProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestProblem").field("name", &self.name).finish()
    }
}

impl TestProblem {
    /// Exponential layer at x = 1 modulated in y:
    /// u(x,y) = [1 − e^{15(x−1)}]·sin(πy).
    pub fn boundary_layer() -> Self {
        Self {
            name: "boundary-layer".into(),
            f: Arc::new(|x, y| (1.0 - (15.0 * (x - 1.0)).exp()) * (std::f64::consts::PI * y).sin()),
        }
    }

    /// u ≡ c; adapting to it reproduces the uniform mesh.
    pub fn constant(c: f64) -> Self {
        Self {
            name: "constant".into(),
            f: Arc::new(move |_, _| c),
        }
    }

    pub fn custom(name: &str, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "boundary-layer" => Some(Self::boundary_layer()),
            "constant" => Some(Self::constant(0.0)),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.f)(x, y)
    }
}

/// k = a² / (1 + b·(w₁² + w₂²))
#[inline]
pub fn k_factor(w: [f64; 2], params: &MonitorParams) -> f64 {
    params.a * params.a / (1.0 + params.b * (w[0] * w[0] + w[1] * w[1]))
}

/// M = k w wᵀ + I
#[inline]
pub fn monitor_matrix(w: [f64; 2], params: &MonitorParams) -> MonitorMatrix {
    let k = k_factor(w, params);
    MonitorMatrix {
        m11: k * w[0] * w[0] + 1.0,
        m12: k * w[0] * w[1],
        m22: k * w[1] * w[1] + 1.0,
    }
}

/// Physical gradient (u_x, u_y) from computational derivatives through the
/// mesh transformation:
/// w = [u_ξ y_η − u_η y_ξ, −u_ξ x_η + u_η x_ξ]ᵀ / (x_ξ y_η − x_η y_ξ).
pub fn physical_gradient(
    u_xi: f64,
    u_eta: f64,
    x_xi: f64,
    x_eta: f64,
    y_xi: f64,
    y_eta: f64,
) -> Result<[f64; 2]> {
    if u_xi == 0.0 && u_eta == 0.0 {
        // a locally constant u has zero gradient under any invertible map
        return Ok([0.0, 0.0]);
    }
    let det = x_xi * y_eta - x_eta * y_xi;
    if det.abs() <= JACOBIAN_FLOOR {
        return Err(Error::DegenerateJacobian { det, node: None });
    }
    Ok([
        (u_xi * y_eta - u_eta * y_xi) / det,
        (-u_xi * x_eta + u_eta * x_xi) / det,
    ])
}

/// sqrt(dᵀ M d); the S1/S2 arc-length form for a ξ- or η-direction tangent d.
#[inline]
pub fn s_form(d: [f64; 2], m: &MonitorMatrix) -> f64 {
    let q = m.quad(d);
    debug_assert!(q > -1e-12, "negative radicand {q} in s_form; M not positive definite");
    q.max(0.0).sqrt()
}
