//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible partition: {0}")]
    Partition(String),

    #[error("degenerate mesh Jacobian {det:.3e}{}", fmt_node(node))]
    DegenerateJacobian {
        det: f64,
        node: Option<(usize, usize)>,
    },

    #[error("mesh collapse on {edge} edge: coincident nodes at index {index}")]
    EdgeCollapse { edge: &'static str, index: usize },

    #[error("numerically singular matrix: pivot {pivot:.3e} in column {column}")]
    SingularMatrix { pivot: f64, column: usize },

    #[error("residual evaluation failed while perturbing column {column}: {source}")]
    JacobianColumn {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("Newton did not converge after {iterations} iterations (best residual {best_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        best_residual: f64,
        residual_history: Vec<f64>,
        best_state: Vec<f64>,
    },

    #[error("subdomain {subdomain}, outer iteration {outer}: {source}")]
    Subdomain {
        subdomain: usize,
        outer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("tangled mesh: non-positive cell area {area:.3e} at cell ({},{})", cell.0, cell.1)]
    TangledMesh { cell: (usize, usize), area: f64 },

    #[error("missing neighbor data on {side} interface")]
    MissingNeighbor { side: &'static str },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_node(node: &Option<(usize, usize)>) -> String {
    match node {
        Some((i, j)) => format!(" at node ({i},{j})"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a node index to a degenerate-Jacobian error raised deeper down.
    pub fn at_node(self, i: usize, j: usize) -> Self {
        match self {
            Error::DegenerateJacobian { det, node: None } => Error::DegenerateJacobian {
                det,
                node: Some((i, j)),
            },
            other => other,
        }
    }
}
