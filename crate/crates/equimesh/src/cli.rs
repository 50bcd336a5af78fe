//! Experiment driver: run configurations, the solve/table1/sweep commands,
//! and plot-ready file exports.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::BoundaryMode;
use crate::error::{Error, Result};
use crate::grid::{ComputationalGrid, PhysicalMesh, TransmissionKind};
use crate::monitor::{MonitorParams, TestProblem};
use crate::nsolve::NewtonConfig;
use crate::quality::q_eq;
use crate::schwarz::{
    run_overlap_sweep, run_p_sweep, schwarz_iterate, solve_single_domain, SchwarzConfig,
    SchwarzOutcome,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_PARTITION: i32 = 4;

/// Exit code for an error, looking through subdomain annotations.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::NonFinite(_) => EXIT_CONFIG,
        Error::Partition(_) => EXIT_PARTITION,
        Error::Subdomain { source, .. } | Error::JacobianColumn { source, .. } => exit_code(source),
        Error::NonConvergence { .. }
        | Error::SingularMatrix { .. }
        | Error::DegenerateJacobian { .. }
        | Error::EdgeCollapse { .. }
        | Error::TangledMesh { .. }
        | Error::MissingNeighbor { .. } => EXIT_SOLVER,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Single,
    Classical,
    LinearRobin,
    NonlinearRobin,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::Classical => "classical",
            Method::LinearRobin => "linear-robin",
            Method::NonlinearRobin => "nonlinear-robin",
        }
    }

    pub fn is_decomposed(self) -> bool {
        self != Method::Single
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Method::Single),
            "classical" => Ok(Method::Classical),
            "linear-robin" | "linear" => Ok(Method::LinearRobin),
            "nonlinear-robin" | "nonlinear" => Ok(Method::NonlinearRobin),
            other => Err(Error::Config(format!(
                "method: unknown value {other:?} (expected single, classical, linear-robin, nonlinear-robin)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-dim-ep" | "1d-ep" => Ok(BoundaryMode::OneDimEp),
            "orthogonality" => Ok(BoundaryMode::Orthogonality),
            other => Err(Error::Config(format!(
                "boundary_mode: unknown value {other:?} (expected one-dim-ep or orthogonality)"
            ))),
        }
    }
}

/// One experiment, fully deterministic. Mirrors the CLI flags and the JSON
/// config file; flags win over the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub n_xi: usize,
    pub n_eta: usize,
    pub a: f64,
    pub b: f64,
    pub boundary_mode: BoundaryMode,
    pub method: Method,
    pub n_sub: usize,
    pub overlap_points: usize,
    pub p: Option<f64>,
    pub max_outer: usize,
    pub outer_tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub parallel: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "boundary-layer".into(),
            n_xi: 12,
            n_eta: 0, // 0 means "same as n_xi"
            a: 0.7,
            b: 0.05,
            boundary_mode: BoundaryMode::OneDimEp,
            method: Method::Single,
            n_sub: 2,
            overlap_points: 2,
            p: None,
            max_outer: 50,
            outer_tol: 1e-8,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            parallel: true,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Optional per-field overrides collected from command-line flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub problem: Option<String>,
    pub n_xi: Option<usize>,
    pub n_eta: Option<usize>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub boundary_mode: Option<BoundaryMode>,
    pub method: Option<Method>,
    pub n_sub: Option<usize>,
    pub overlap_points: Option<usize>,
    pub p: Option<f64>,
    pub max_outer: Option<usize>,
    pub outer_tol: Option<f64>,
    pub newton_tol: Option<f64>,
    pub serial: bool,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        macro_rules! set {
            ($f:ident) => {
                if let Some(v) = &o.$f {
                    self.$f = v.clone();
                }
            };
        }
        set!(problem);
        set!(n_xi);
        set!(n_eta);
        set!(a);
        set!(b);
        set!(boundary_mode);
        set!(method);
        set!(n_sub);
        set!(overlap_points);
        set!(max_outer);
        set!(outer_tol);
        set!(newton_tol);
        set!(out_dir);
        if o.p.is_some() {
            self.p = o.p;
        }
        if o.serial {
            self.parallel = false;
        }
        self
    }

    pub fn effective_n_eta(&self) -> usize {
        if self.n_eta == 0 {
            self.n_xi
        } else {
            self.n_eta
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve_problem()?;
        ComputationalGrid::new(self.n_xi, self.effective_n_eta())
            .map_err(|_| Error::Config(format!("n_xi/n_eta: grid must be at least 3x3, got {}x{}", self.n_xi, self.effective_n_eta())))?;
        MonitorParams::new(self.a, self.b)?;
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer: must be at least 1".into()));
        }
        if !(self.outer_tol >= 0.0 && self.outer_tol.is_finite()) {
            return Err(Error::Config(format!("outer_tol: must be finite and >= 0, got {}", self.outer_tol)));
        }
        if !(self.newton_tol > 0.0 && self.newton_tol.is_finite()) {
            return Err(Error::Config(format!("newton_tol: must be finite and > 0, got {}", self.newton_tol)));
        }
        if self.method.is_decomposed() {
            self.kind()?;
            // reject infeasible partitions before any work happens
            let grid = ComputationalGrid::new(self.n_xi, self.effective_n_eta())?;
            crate::grid::partition_strips(&grid, self.n_sub, self.overlap_points, self.kind()?)?;
        }
        Ok(())
    }

    pub fn resolve_problem(&self) -> Result<TestProblem> {
        TestProblem::by_name(&self.problem)
            .ok_or_else(|| Error::Config(format!("problem: unknown test problem {:?}", self.problem)))
    }

    pub fn monitor_params(&self) -> Result<MonitorParams> {
        MonitorParams::new(self.a, self.b)
    }

    /// Transmission kind for decomposed methods; `p` is mandatory for the
    /// Robin methods and deliberately has no default.
    pub fn kind(&self) -> Result<TransmissionKind> {
        let kind = match self.method {
            Method::Single => {
                return Err(Error::Config("method single has no transmission kind".into()))
            }
            Method::Classical => TransmissionKind::Dirichlet,
            Method::LinearRobin => TransmissionKind::LinearRobin(
                self.p.ok_or_else(|| Error::Config("p: required for method linear-robin".into()))?,
            ),
            Method::NonlinearRobin => TransmissionKind::NonlinearRobin(
                self.p
                    .ok_or_else(|| Error::Config("p: required for method nonlinear-robin".into()))?,
            ),
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            ..NewtonConfig::default()
        }
    }

    pub fn schwarz(&self) -> Result<SchwarzConfig> {
        let problem = self.resolve_problem()?;
        let mut cfg = SchwarzConfig::new(
            self.n_xi,
            self.effective_n_eta(),
            self.n_sub,
            self.overlap_points,
            self.kind()?,
            self.monitor_params()?,
            &problem,
        );
        cfg.mode = self.boundary_mode;
        cfg.max_outer = self.max_outer;
        cfg.outer_tol = self.outer_tol;
        cfg.parallel = self.parallel;
        cfg.newton = self.newton();
        Ok(cfg)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn quality_csv(rows: &[(String, String, f64)]) -> String {
    let mut out = String::from("iteration,method,q_max\n");
    for (iter, method, q) in rows {
        out.push_str(&format!("{iter},{method},{q}\n"));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub q_max: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub mesh_file: PathBuf,
}

/// Run one solve and write mesh/quality (and, for decomposed runs, history)
/// files under the configured output directory.
pub fn cmd_solve(config: &RunConfig) -> Result<SolveSummary> {
    config.validate()?;
    let problem = config.resolve_problem()?;
    let params = config.monitor_params()?;
    let grid = ComputationalGrid::new(config.n_xi, config.effective_n_eta())?;
    let out = &config.out_dir;
    let uniform_q = q_eq(&PhysicalMesh::uniform(&grid), &params, &problem)?.q_max;

    let (mesh, outer_iterations, converged, history_files) = if config.method.is_decomposed() {
        let scfg = config.schwarz()?;
        let outcome = schwarz_iterate(&scfg, &problem)?;
        let json = outcome.history.to_json(&scfg)?;
        write_file(&out.join("history.json"), &json)?;
        write_file(&out.join("history.csv"), &outcome.history.to_csv())?;

        let mut rows = vec![("0".to_string(), config.method.name().to_string(), uniform_q)];
        for rec in &outcome.history.iterations {
            if let Some(q) = rec.q_eq {
                rows.push((rec.n.to_string(), config.method.name().to_string(), q));
            }
        }
        if let Some(reference) = &outcome.reference {
            let qr = q_eq(reference, &params, &problem)?.q_max;
            rows.push(("inf".to_string(), config.method.name().to_string(), qr));
        }
        write_file(&out.join("quality.csv"), &quality_csv(&rows))?;
        let n = outcome.history.len();
        (outcome.mesh, n, outcome.converged, true)
    } else {
        let (mesh, _stats) =
            solve_single_domain(&grid, &params, &problem, config.boundary_mode, &config.newton())?;
        let q = q_eq(&mesh, &params, &problem)?.q_max;
        let rows = vec![
            ("0".to_string(), "single".to_string(), uniform_q),
            ("inf".to_string(), "single".to_string(), q),
        ];
        write_file(&out.join("quality.csv"), &quality_csv(&rows))?;
        (mesh, 0, true, false)
    };

    let mesh_file = out.join("mesh.csv");
    write_file(&mesh_file, &mesh.to_csv())?;
    let q_max = q_eq(&mesh, &params, &problem)?.q_max;
    println!(
        "method {}: q_max = {q_max:.4}, outer iterations = {outer_iterations}{}",
        config.method,
        if converged { "" } else { " (not converged)" }
    );
    let _ = history_files;
    Ok(SolveSummary { q_max, outer_iterations, converged, mesh_file })
}

#[derive(Debug, Clone)]
pub struct Table1 {
    /// Quality of the initial uniform mesh (iteration-0 column).
    pub q_initial: f64,
    /// Quality of the single-domain mesh (the ∞ column).
    pub q_reference: f64,
    /// Per method: q_max after outer iterations 1..=5.
    pub rows: Vec<(Method, Vec<f64>)>,
}

/// Reproduce the three-method quality table: 12×12, a = 0.7, b = 0.05,
/// 2 subdomains, overlap 2, p = 2, five outer iterations plus the
/// single-domain reference.
pub fn cmd_table1(out_dir: &Path) -> Result<Table1> {
    let params = MonitorParams::new(0.7, 0.05)?;
    let problem = TestProblem::boundary_layer();
    let grid = ComputationalGrid::new(12, 12)?;
    let newton = NewtonConfig::default();

    let q_initial = q_eq(&PhysicalMesh::uniform(&grid), &params, &problem)?.q_max;
    let (reference, _) =
        solve_single_domain(&grid, &params, &problem, BoundaryMode::OneDimEp, &newton)?;
    let q_reference = q_eq(&reference, &params, &problem)?.q_max;

    let mut rows = Vec::new();
    for method in [Method::Classical, Method::LinearRobin, Method::NonlinearRobin] {
        let kind = match method {
            Method::Classical => TransmissionKind::Dirichlet,
            Method::LinearRobin => TransmissionKind::LinearRobin(2.0),
            Method::NonlinearRobin => TransmissionKind::NonlinearRobin(2.0),
            Method::Single => unreachable!(),
        };
        let mut cfg = SchwarzConfig::new(12, 12, 2, 2, kind, params, &problem);
        cfg.max_outer = 5;
        cfg.outer_tol = 0.0; // run all five iterations
        let outcome =
            crate::schwarz::schwarz_iterate_with_reference(&cfg, &problem, Some(reference.clone()))?;
        let qs: Vec<f64> = (1..=5)
            .map(|n| outcome.history.q_at(n).unwrap_or(f64::NAN))
            .collect();
        rows.push((method, qs));
    }

    let mut csv_rows = Vec::new();
    for (method, qs) in &rows {
        csv_rows.push(("0".to_string(), method.name().to_string(), q_initial));
        for (k, q) in qs.iter().enumerate() {
            csv_rows.push(((k + 1).to_string(), method.name().to_string(), *q));
        }
        csv_rows.push(("inf".to_string(), method.name().to_string(), q_reference));
    }
    write_file(&out_dir.join("table1.csv"), &quality_csv(&csv_rows))?;

    println!("iterations       0      1      2      3      4      5      inf");
    for (method, qs) in &rows {
        print!("{:<16}", method.name());
        print!("{q_initial:.4} ");
        for q in qs {
            print!("{q:.4} ");
        }
        println!("{q_reference:.4}");
    }

    Ok(Table1 { q_initial, q_reference, rows })
}

#[derive(Debug, Clone)]
pub enum SweepAxis {
    Overlap(Vec<usize>),
    P { values: Vec<f64>, kinds: Vec<Method> },
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRunStatus {
    pub id: String,
    pub status: String,
    pub message: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub runs: Vec<SweepRunStatus>,
    pub manifest_file: PathBuf,
}

fn record_run(
    out_dir: &Path,
    combined: &mut String,
    id: &str,
    cfg: &SchwarzConfig,
    result: Result<SchwarzOutcome>,
) -> Result<SweepRunStatus> {
    match result {
        Ok(outcome) => {
            let dir = out_dir.join(id);
            write_file(&dir.join("history.json"), &outcome.history.to_json(cfg)?)?;
            write_file(&dir.join("history.csv"), &outcome.history.to_csv())?;
            for rec in &outcome.history.iterations {
                for s in 0..rec.err_x.len() {
                    combined.push_str(&format!(
                        "{id},{},{},{},{}\n",
                        rec.n, s, rec.err_x[s], rec.err_y[s]
                    ));
                }
            }
            Ok(SweepRunStatus { id: id.to_string(), status: "ok".into(), message: None })
        }
        Err(e) => Ok(SweepRunStatus {
            id: id.to_string(),
            status: "error".into(),
            message: Some(e.to_string()),
        }),
    }
}

/// Run a sweep along one axis, writing per-run history files, a combined CSV
/// for overlay plotting, and a manifest of per-run statuses.
pub fn cmd_sweep(config: &RunConfig, axis: &SweepAxis) -> Result<SweepSummary> {
    if !config.method.is_decomposed() {
        return Err(Error::Config("method: sweeps need a decomposed method".into()));
    }
    // Axis values are validated per run so one infeasible entry does not
    // abort the sweep; only the base configuration is checked here.
    let base = {
        let mut c = config.clone();
        if matches!(axis, SweepAxis::P { .. }) && c.p.is_none() {
            c.p = Some(1.0); // placeholder, replaced per run
        }
        c
    };
    base.validate()?;
    let problem = base.resolve_problem()?;
    let scfg = base.schwarz()?;
    let out_dir = &config.out_dir;

    let mut combined = String::from("series,n,subdomain,err_x,err_y\n");
    let mut runs = Vec::new();
    match axis {
        SweepAxis::Overlap(overlaps) => {
            if overlaps.is_empty() {
                return Err(Error::Config("values: overlap sweep needs at least one value".into()));
            }
            for (ov, result) in run_overlap_sweep(&scfg, &problem, overlaps)? {
                let id = format!("overlap-{ov}");
                let mut cfg = scfg.clone();
                cfg.overlap_points = ov;
                runs.push(record_run(out_dir, &mut combined, &id, &cfg, result)?);
            }
        }
        SweepAxis::P { values, kinds } => {
            if values.is_empty() || kinds.is_empty() {
                return Err(Error::Config("values: p sweep needs values and kinds".into()));
            }
            let mut entries = Vec::new();
            for &method in kinds {
                for &p in values {
                    let kind = match method {
                        Method::LinearRobin => TransmissionKind::LinearRobin(p),
                        Method::NonlinearRobin => TransmissionKind::NonlinearRobin(p),
                        other => {
                            return Err(Error::Config(format!(
                                "kinds: p sweep supports linear-robin and nonlinear-robin, got {other}"
                            )))
                        }
                    };
                    entries.push(kind);
                }
            }
            for (kind, result) in run_p_sweep(&scfg, &problem, &entries)? {
                let (name, p) = match kind {
                    TransmissionKind::LinearRobin(p) => ("linear-robin", p),
                    TransmissionKind::NonlinearRobin(p) => ("nonlinear-robin", p),
                    _ => unreachable!(),
                };
                let id = format!("{name}-p{p}");
                let mut cfg = scfg.clone();
                cfg.kind = kind;
                runs.push(record_run(out_dir, &mut combined, &id, &cfg, result)?);
            }
        }
    }

    write_file(&out_dir.join("combined.csv"), &combined)?;
    #[derive(Serialize)]
    struct Manifest<'a> {
        runs: &'a [SweepRunStatus],
    }
    let manifest_file = out_dir.join("manifest.json");
    write_file(&manifest_file, &serde_json::to_string_pretty(&Manifest { runs: &runs })?)?;
    for run in &runs {
        println!("{}: {}", run.id, run.status);
    }
    Ok(SweepSummary { runs, manifest_file })
}
