//! Newton's method with a finite-difference Jacobian and a dense LU solve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Max-norm residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Jacobian perturbation scale: eps_c = fd_eps * max(1, |state_c|).
    pub fd_eps: f64,
    /// Maximum number of step halvings per iteration.
    pub max_damping: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            fd_eps: 1e-7,
            max_damping: 8,
        }
    }
}

/// Square dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub a: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.a[r * self.n + c] = v;
    }

    /// Max row sum of absolute values.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|r| self.a[r * self.n..(r + 1) * self.n].iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Solve A v = b by LU factorization with partial pivoting. A pivot smaller
/// than 1e-14·‖A‖∞ is reported as a singular matrix.
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n;
    assert_eq!(b.len(), n, "dimension mismatch in lu_solve");
    let mut lu = a.a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let pivot_floor = 1e-14 * a.inf_norm();

    for col in 0..n {
        // partial pivoting: largest magnitude in this column at or below the diagonal
        let mut best = col;
        let mut best_val = lu[perm[col] * n + col].abs();
        for r in col + 1..n {
            let v = lu[perm[r] * n + col].abs();
            if v > best_val {
                best_val = v;
                best = r;
            }
        }
        perm.swap(col, best);
        let piv = lu[perm[col] * n + col];
        if piv.abs() <= pivot_floor || !piv.is_finite() {
            return Err(Error::SingularMatrix { pivot: piv, column: col });
        }
        for r in col + 1..n {
            let row = perm[r] * n;
            let factor = lu[row + col] / piv;
            lu[row + col] = factor;
            if factor != 0.0 {
                let prow = perm[col] * n;
                for c in col + 1..n {
                    lu[row + c] -= factor * lu[prow + c];
                }
            }
        }
    }

    // forward substitution (L has implicit unit diagonal)
    let mut v = vec![0.0; n];
    for r in 0..n {
        let row = perm[r] * n;
        let mut s = b[perm[r]];
        for c in 0..r {
            s -= lu[row + c] * v[c];
        }
        v[r] = s;
    }
    // back substitution
    for r in (0..n).rev() {
        let row = perm[r] * n;
        let mut s = v[r];
        for c in r + 1..n {
            s -= lu[row + c] * v[c];
        }
        v[r] = s / lu[row + r];
    }
    Ok(v)
}

/// Independent column groups plus, per state column, the residual rows it can
/// influence. Grouped perturbation yields bit-identical entries to one-column
/// perturbation as long as the support lists are correct.
#[derive(Debug, Clone)]
pub struct Coloring {
    pub groups: Vec<Vec<usize>>,
    pub support: Vec<Vec<usize>>,
}

/// Forward-difference Jacobian: column c is (R(v + eps_c e_c) − R(v))/eps_c.
pub fn jacobian_fd(
    f: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    state: &[f64],
    r0: &[f64],
    fd_eps: f64,
    coloring: Option<&Coloring>,
) -> Result<DenseMatrix> {
    let n = state.len();
    assert_eq!(r0.len(), n, "residual/state dimension mismatch");
    let mut jac = DenseMatrix::zeros(n);
    let mut work = state.to_vec();
    let eps_of = |v: f64| fd_eps * v.abs().max(1.0);

    match coloring {
        None => {
            for c in 0..n {
                let eps = eps_of(state[c]);
                work[c] = state[c] + eps;
                let r = f(&work).map_err(|e| Error::JacobianColumn { column: c, source: Box::new(e) })?;
                work[c] = state[c];
                for row in 0..n {
                    jac.set(row, c, (r[row] - r0[row]) / eps);
                }
            }
        }
        Some(col) => {
            debug_assert_eq!(col.support.len(), n);
            for group in &col.groups {
                if group.is_empty() {
                    continue;
                }
                for &c in group {
                    work[c] = state[c] + eps_of(state[c]);
                }
                let r = f(&work)
                    .map_err(|e| Error::JacobianColumn { column: group[0], source: Box::new(e) })?;
                for &c in group {
                    work[c] = state[c];
                    let eps = eps_of(state[c]);
                    for &row in &col.support[c] {
                        jac.set(row, c, (r[row] - r0[row]) / eps);
                    }
                }
            }
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, Default)]
pub struct NewtonStats {
    pub iterations: usize,
    pub final_residual: f64,
    pub damping_steps: usize,
    pub residual_history: Vec<f64>,
}

/// Damped Newton iteration. Steps are halved (up to `max_damping` times)
/// until the residual max-norm does not increase; failure to find such a step
/// or running out of iterations yields a non-convergence error carrying the
/// best state seen.
pub fn newton_solve(
    f: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    initial: Vec<f64>,
    cfg: &NewtonConfig,
    coloring: Option<&Coloring>,
) -> Result<(Vec<f64>, NewtonStats)> {
    let mut state = initial;
    let mut r = f(&state)?;
    let mut rnorm = inf_norm(&r);
    if !rnorm.is_finite() {
        return Err(Error::NonFinite("initial residual".into()));
    }
    let mut stats = NewtonStats {
        residual_history: vec![rnorm],
        final_residual: rnorm,
        ..Default::default()
    };
    if rnorm <= cfg.tol {
        return Ok((state, stats));
    }

    for it in 1..=cfg.max_iter {
        let jac = jacobian_fd(f, &state, &r, cfg.fd_eps, coloring)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = lu_solve(&jac, &rhs)?;

        let mut lambda = 1.0;
        let mut accepted = None;
        for halving in 0..=cfg.max_damping {
            let trial: Vec<f64> = state
                .iter()
                .zip(&step)
                .map(|(s, d)| s + lambda * d)
                .collect();
            match f(&trial) {
                Ok(rt) => {
                    let tn = inf_norm(&rt);
                    if tn.is_finite() && tn <= rnorm {
                        stats.damping_steps += halving;
                        accepted = Some((trial, rt, tn));
                        break;
                    }
                }
                // residual may be unevaluable at an overshot state; back off
                Err(_) if halving < cfg.max_damping => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }

        let (trial, rt, tn) = match accepted {
            Some(t) => t,
            None => {
                return Err(Error::NonConvergence {
                    iterations: it,
                    best_residual: rnorm,
                    residual_history: stats.residual_history,
                    best_state: state,
                })
            }
        };
        state = trial;
        r = rt;
        rnorm = tn;
        stats.iterations = it;
        stats.final_residual = rnorm;
        stats.residual_history.push(rnorm);
        if rnorm <= cfg.tol {
            return Ok((state, stats));
        }
    }

    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        best_residual: rnorm,
        residual_history: stats.residual_history,
        best_state: state,
    })
}
