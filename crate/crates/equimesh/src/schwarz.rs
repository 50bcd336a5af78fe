//! Additive overlapping Schwarz iteration over ξ-strips.
//!
//! Every outer round solves all strips concurrently from a frozen snapshot of
//! the previous iterate, then publishes the new iterate at a barrier. With a
//! single strip the iteration reduces to the single-domain solve.

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{compute_neighbor_data, BoundaryMode, NeighborData, Side, StripSystem};
use crate::error::{Error, Result};
use crate::grid::{
    glue, partition_strips, ComputationalGrid, PhysicalMesh, SubdomainMesh, SubdomainSpec,
    TransmissionKind,
};
use crate::monitor::{MonitorParams, TestProblem};
use crate::nsolve::{newton_solve, NewtonConfig, NewtonStats};
use crate::quality::q_eq;

#[derive(Debug, Clone, Serialize)]
pub struct SchwarzConfig {
    pub n_xi: usize,
    pub n_eta: usize,
    pub n_sub: usize,
    pub overlap_points: usize,
    pub kind: TransmissionKind,
    pub mode: BoundaryMode,
    pub params: MonitorParams,
    pub problem: String,
    pub max_outer: usize,
    /// Max-norm error vs. the reference, or interface increment when no
    /// reference is kept.
    pub outer_tol: f64,
    pub use_reference: bool,
    pub record_quality: bool,
    pub parallel: bool,
    pub newton: NewtonConfig,
}

impl SchwarzConfig {
    pub fn new(
        n_xi: usize,
        n_eta: usize,
        n_sub: usize,
        overlap_points: usize,
        kind: TransmissionKind,
        params: MonitorParams,
        problem: &TestProblem,
    ) -> Self {
        Self {
            n_xi,
            n_eta,
            n_sub,
            overlap_points,
            kind,
            mode: BoundaryMode::OneDimEp,
            params,
            problem: problem.name().to_string(),
            max_outer: 50,
            outer_tol: 1e-8,
            use_reference: true,
            record_quality: true,
            parallel: true,
            newton: NewtonConfig::default(),
        }
    }

    pub fn grid(&self) -> Result<ComputationalGrid> {
        ComputationalGrid::new(self.n_xi, self.n_eta)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub n: usize,
    /// Per-subdomain max |x − x_ref| (empty without a reference).
    pub err_x: Vec<f64>,
    pub err_y: Vec<f64>,
    pub q_eq: Option<f64>,
    pub newton_iters: Vec<usize>,
    /// Max change of the transmitted interface columns since the previous round.
    pub increment: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConvergenceHistory {
    pub iterations: Vec<IterationRecord>,
}

impl ConvergenceHistory {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Max error over subdomains and components at outer iteration n (1-based).
    pub fn err_at(&self, n: usize) -> Option<f64> {
        let rec = self.iterations.get(n.checked_sub(1)?)?;
        rec.err_x
            .iter()
            .chain(&rec.err_y)
            .copied()
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    }

    pub fn q_at(&self, n: usize) -> Option<f64> {
        self.iterations.get(n.checked_sub(1)?)?.q_eq
    }

    /// Flat CSV for plotting: `n,subdomain,err_x,err_y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,subdomain,err_x,err_y\n");
        for rec in &self.iterations {
            for s in 0..rec.err_x.len() {
                out.push_str(&format!("{},{},{},{}\n", rec.n, s, rec.err_x[s], rec.err_y[s]));
            }
        }
        out
    }

    pub fn to_json(&self, config: &SchwarzConfig) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            config: &'a SchwarzConfig,
            iterations: &'a [IterationRecord],
        }
        Ok(serde_json::to_string_pretty(&Doc {
            config,
            iterations: &self.iterations,
        })?)
    }
}

#[derive(Debug, Clone)]
pub struct SchwarzOutcome {
    pub mesh: PhysicalMesh,
    pub history: ConvergenceHistory,
    pub reference: Option<PhysicalMesh>,
    pub converged: bool,
}

/// Newton solve of one strip, with a ramped-relaxation fallback: if the solve
/// fails at the target a, the relaxation is brought up in four stages
/// (0.25a .. a), each warm-started from the previous stage.
#[allow(clippy::too_many_arguments)]
fn solve_strip(
    grid: &ComputationalGrid,
    spec: SubdomainSpec,
    params: MonitorParams,
    problem: &TestProblem,
    mode: BoundaryMode,
    left: Option<&NeighborData>,
    right: Option<&NeighborData>,
    newton: &NewtonConfig,
    initial: &SubdomainMesh,
) -> Result<(SubdomainMesh, NewtonStats)> {
    let sys = StripSystem::new(grid, spec, params, problem, mode, left, right)?;
    let coloring = sys.coloring();
    let start = sys.state_from(initial);
    let mut f = |v: &[f64]| sys.residual(v);
    match newton_solve(&mut f, start.clone(), newton, Some(&coloring)) {
        Ok((state, stats)) => Ok((sys.submesh_from(&state), stats)),
        Err(Error::NonConvergence { .. }) if params.a > 0.0 => {
            let mut state = start;
            let mut total = NewtonStats::default();
            for frac in [0.25, 0.5, 0.75, 1.0] {
                let stage = MonitorParams { a: params.a * frac, b: params.b };
                let stage_sys = StripSystem::new(grid, spec, stage, problem, mode, left, right)?;
                let mut f = |v: &[f64]| stage_sys.residual(v);
                let (s, st) = newton_solve(&mut f, state, newton, Some(&coloring))?;
                state = s;
                total.iterations += st.iterations;
                total.damping_steps += st.damping_steps;
                total.final_residual = st.final_residual;
                total.residual_history.extend(st.residual_history);
            }
            Ok((sys.submesh_from(&state), total))
        }
        Err(e) => Err(e),
    }
}

/// Single-domain reference solve from the uniform mesh.
pub fn solve_single_domain(
    grid: &ComputationalGrid,
    params: &MonitorParams,
    problem: &TestProblem,
    mode: BoundaryMode,
    newton: &NewtonConfig,
) -> Result<(PhysicalMesh, NewtonStats)> {
    let spec = SubdomainSpec {
        i_lo: 0,
        i_hi: grid.n_xi - 1,
        left: TransmissionKind::Physical,
        right: TransmissionKind::Physical,
    };
    let initial = SubdomainMesh::restrict(&PhysicalMesh::uniform(grid), &spec);
    let (sub, stats) = solve_strip(grid, spec, *params, problem, mode, None, None, newton, &initial)?;
    let mesh = glue(&[sub], &[spec], grid)?;
    Ok((mesh, stats))
}

/// One additive round: every strip solves with neighbor data frozen at the
/// previous iterate `subs`. `outer` only labels errors.
#[allow(clippy::too_many_arguments)]
pub fn schwarz_round(
    grid: &ComputationalGrid,
    specs: &[SubdomainSpec],
    params: &MonitorParams,
    problem: &TestProblem,
    mode: BoundaryMode,
    newton: &NewtonConfig,
    subs: &[SubdomainMesh],
    parallel: bool,
    outer: usize,
) -> Result<(Vec<SubdomainMesh>, Vec<NewtonStats>)> {
    let mut payloads: Vec<(Option<NeighborData>, Option<NeighborData>)> =
        Vec::with_capacity(specs.len());
    for (s, spec) in specs.iter().enumerate() {
        let left = if spec.left.is_physical() {
            None
        } else {
            Some(compute_neighbor_data(
                grid, params, problem, spec.left, Side::Left, spec.i_lo, &subs[s], &subs[s - 1],
            )?)
        };
        let right = if spec.right.is_physical() {
            None
        } else {
            Some(compute_neighbor_data(
                grid, params, problem, spec.right, Side::Right, spec.i_hi, &subs[s], &subs[s + 1],
            )?)
        };
        payloads.push((left, right));
    }

    let solve_one = |s: usize| -> Result<(SubdomainMesh, NewtonStats)> {
        let (left, right) = &payloads[s];
        solve_strip(
            grid, specs[s], *params, problem, mode, left.as_ref(), right.as_ref(), newton, &subs[s],
        )
    };

    let results: Vec<Result<(SubdomainMesh, NewtonStats)>> = if parallel && specs.len() > 1 {
        (0..specs.len()).into_par_iter().map(solve_one).collect()
    } else {
        (0..specs.len()).map(solve_one).collect()
    };

    let mut new_subs = Vec::with_capacity(specs.len());
    let mut stats = Vec::with_capacity(specs.len());
    for (s, res) in results.into_iter().enumerate() {
        match res {
            Ok((m, st)) => {
                new_subs.push(m);
                stats.push(st);
            }
            Err(e) => {
                return Err(Error::Subdomain {
                    subdomain: s,
                    outer,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok((new_subs, stats))
}

/// Max change of the transmitted interface columns between two iterates.
fn interface_increment(
    specs: &[SubdomainSpec],
    old: &[SubdomainMesh],
    new: &[SubdomainMesh],
    n_eta: usize,
) -> f64 {
    let mut inc = 0.0f64;
    for (s, spec) in specs.iter().enumerate() {
        if !spec.left.is_physical() {
            let col = spec.i_lo;
            for j in 0..n_eta {
                inc = inc.max((new[s - 1].x_global(col, j) - old[s - 1].x_global(col, j)).abs());
                inc = inc.max((new[s - 1].y_global(col, j) - old[s - 1].y_global(col, j)).abs());
            }
        }
        if !spec.right.is_physical() {
            let col = spec.i_hi;
            for j in 0..n_eta {
                inc = inc.max((new[s + 1].x_global(col, j) - old[s + 1].x_global(col, j)).abs());
                inc = inc.max((new[s + 1].y_global(col, j) - old[s + 1].y_global(col, j)).abs());
            }
        }
    }
    inc
}

pub fn schwarz_iterate(config: &SchwarzConfig, problem: &TestProblem) -> Result<SchwarzOutcome> {
    let reference = if config.use_reference {
        let grid = config.grid()?;
        Some(solve_single_domain(&grid, &config.params, problem, config.mode, &config.newton)?.0)
    } else {
        None
    };
    schwarz_iterate_with_reference(config, problem, reference)
}

/// The Schwarz loop itself; sweeps pass a shared precomputed reference.
pub fn schwarz_iterate_with_reference(
    config: &SchwarzConfig,
    problem: &TestProblem,
    reference: Option<PhysicalMesh>,
) -> Result<SchwarzOutcome> {
    let grid = config.grid()?;
    let specs = partition_strips(&grid, config.n_sub, config.overlap_points, config.kind)?;
    let uniform = PhysicalMesh::uniform(&grid);
    let mut subs: Vec<SubdomainMesh> =
        specs.iter().map(|s| SubdomainMesh::restrict(&uniform, s)).collect();
    let mut history = ConvergenceHistory::default();
    let mut converged = false;

    for n in 1..=config.max_outer {
        let (new_subs, stats) = schwarz_round(
            &grid, &specs, &config.params, problem, config.mode, &config.newton, &subs,
            config.parallel, n,
        )?;

        let increment = interface_increment(&specs, &subs, &new_subs, grid.n_eta);
        let (err_x, err_y): (Vec<f64>, Vec<f64>) = match &reference {
            Some(r) => new_subs.iter().map(|sub| sub.max_errors_vs(r)).unzip(),
            None => (Vec::new(), Vec::new()),
        };
        let q = if config.record_quality {
            glue(&new_subs, &specs, &grid)
                .ok()
                .and_then(|m| q_eq(&m, &config.params, problem).ok())
                .map(|rep| rep.q_max)
        } else {
            None
        };
        history.iterations.push(IterationRecord {
            n,
            err_x: err_x.clone(),
            err_y: err_y.clone(),
            q_eq: q,
            newton_iters: stats.iter().map(|s| s.iterations).collect(),
            increment: Some(increment),
        });
        subs = new_subs;

        let stop = if reference.is_some() {
            let worst = err_x.iter().chain(&err_y).copied().fold(0.0, f64::max);
            worst <= config.outer_tol
        } else {
            increment <= config.outer_tol
        };
        if stop {
            converged = true;
            break;
        }
    }

    let mesh = glue(&subs, &specs, &grid)?;
    Ok(SchwarzOutcome { mesh, history, reference, converged })
}

/// One run per overlap with otherwise identical inputs; the reference is
/// computed once and shared. Per-run failures are collected, the sweep
/// continues.
pub fn run_overlap_sweep(
    config: &SchwarzConfig,
    problem: &TestProblem,
    overlaps: &[usize],
) -> Result<Vec<(usize, Result<SchwarzOutcome>)>> {
    let shared = if config.use_reference {
        let grid = config.grid()?;
        Some(solve_single_domain(&grid, &config.params, problem, config.mode, &config.newton)?.0)
    } else {
        None
    };
    Ok(overlaps
        .iter()
        .map(|&ov| {
            let mut cfg = config.clone();
            cfg.overlap_points = ov;
            (ov, schwarz_iterate_with_reference(&cfg, problem, shared.clone()))
        })
        .collect())
}

/// One run per transmission kind (the Robin parameter rides inside the kind),
/// sharing a single reference solve.
pub fn run_p_sweep(
    config: &SchwarzConfig,
    problem: &TestProblem,
    kinds: &[TransmissionKind],
) -> Result<Vec<(TransmissionKind, Result<SchwarzOutcome>)>> {
    if kinds.is_empty() {
        return Ok(Vec::new());
    }
    let shared = if config.use_reference {
        let grid = config.grid()?;
        Some(solve_single_domain(&grid, &config.params, problem, config.mode, &config.newton)?.0)
    } else {
        None
    };
    Ok(kinds
        .iter()
        .map(|&kind| {
            let mut cfg = config.clone();
            cfg.kind = kind;
            (kind, schwarz_iterate_with_reference(&cfg, problem, shared.clone()))
        })
        .collect())
}
