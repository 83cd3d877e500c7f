//! Configuration-driven runs and convergence studies.
//!
//! A study runs one simulation per row (independent rows execute in
//! parallel) and reports final-time errors with observed orders between
//! adjacent rows. CSV output is a pure function of the configuration;
//! wall-clock data only goes to the JSON report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{BoundaryNormal, ConvectionMode, Discretization};
use crate::driver::{Simulation, SolverSettings, TimeGrid, TimeStepState};
use crate::mesh::{generate_disk_mesh, mesh_quality, QualityReport};
use crate::mms::{benchmark_solution, ConcentrationBoundary, ManufacturedSolution};
use crate::norms::{observed_orders, ErrorRecord, ObservedOrders};
use crate::sparse::{CgOptions, GmresOptions};
use crate::vtk::{write_unstructured_grid_file, ScalarField};
use crate::{Error, Result};

/// Named manufactured-solution cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// Disk of radius 1/2 at (1/2, 1/2) with the benchmark exact solution.
    #[default]
    #[serde(alias = "section6")]
    DiskBenchmark,
}

impl Case {
    pub fn solution(self) -> ManufacturedSolution {
        match self {
            Case::DiskBenchmark => benchmark_solution(),
        }
    }

    pub fn domain(self) -> ([f64; 2], f64) {
        match self {
            Case::DiskBenchmark => ([0.5, 0.5], 0.5),
        }
    }
}

fn default_t_final() -> f64 {
    1.0
}
fn default_pressure_tol() -> f64 {
    1e-11
}
fn default_concentration_tol() -> f64 {
    1e-10
}
fn default_restart() -> usize {
    30
}
fn default_max_iter() -> usize {
    20_000
}
fn default_fd_step() -> f64 {
    1e-5
}
fn default_true() -> bool {
    true
}

/// Run or study configuration, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub case: Case,
    /// Boundary node counts `M`; `h = 1/M`.
    #[serde(default)]
    pub mesh_m: Vec<usize>,
    /// Time steps.
    #[serde(default)]
    pub tau: Vec<f64>,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default)]
    pub mode: ConvectionMode,
    #[serde(default)]
    pub boundary_normal: BoundaryNormal,
    #[serde(default)]
    pub concentration_boundary: ConcentrationBoundary,
    #[serde(default = "default_pressure_tol")]
    pub pressure_rel_tol: f64,
    #[serde(default = "default_concentration_tol")]
    pub concentration_rel_tol: f64,
    #[serde(default = "default_restart")]
    pub gmres_restart: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dump_fields: bool,
    /// Steps to dump when `dump_fields` is set; empty means the final step.
    #[serde(default)]
    pub dump_steps: Vec<usize>,
    /// Run study rows concurrently.
    #[serde(default = "default_true")]
    pub parallel: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Single,
    Spatial,
    Temporal,
}

/// Resolution of the parameter held fixed in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Spatial study at `τ = 2^-12`, temporal study at `M = 128`.
    Fast,
    /// Spatial study at `τ = 2^-14`, temporal study at `M = 256`.
    Full,
}

pub const FAST_SPATIAL_TAU: f64 = 1.0 / 4096.0;
pub const FULL_SPATIAL_TAU: f64 = 1.0 / 16384.0;
pub const FAST_TEMPORAL_M: usize = 128;
pub const FULL_TEMPORAL_M: usize = 256;

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl StudyConfig {
    /// Parses JSON, reporting the path of the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(&path, e.into_inner().to_string())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Fills unset lists with the defaults of `kind` and, when given, pins
    /// the fixed parameter to `protocol`.
    pub fn resolve(mut self, kind: StudyKind, protocol: Option<Protocol>) -> Self {
        match kind {
            StudyKind::Single => {
                if self.mesh_m.is_empty() {
                    self.mesh_m = vec![16];
                }
                if self.tau.is_empty() {
                    self.tau = vec![1.0 / 32.0];
                }
            }
            StudyKind::Spatial => {
                if self.mesh_m.is_empty() {
                    self.mesh_m = vec![16, 32, 64];
                }
                match protocol {
                    Some(Protocol::Fast) => self.tau = vec![FAST_SPATIAL_TAU],
                    Some(Protocol::Full) => self.tau = vec![FULL_SPATIAL_TAU],
                    None if self.tau.is_empty() => self.tau = vec![FAST_SPATIAL_TAU],
                    None => {}
                }
            }
            StudyKind::Temporal => {
                if self.tau.is_empty() {
                    self.tau = vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
                }
                match protocol {
                    Some(Protocol::Fast) => self.mesh_m = vec![FAST_TEMPORAL_M],
                    Some(Protocol::Full) => self.mesh_m = vec![FULL_TEMPORAL_M],
                    None if self.mesh_m.is_empty() => self.mesh_m = vec![FAST_TEMPORAL_M],
                    None => {}
                }
            }
        }
        self
    }

    /// Checks the resolved configuration for `kind`.
    pub fn validate(&self, kind: StudyKind) -> Result<()> {
        if self.mesh_m.is_empty() {
            return Err(config_error("mesh_m", "list must not be empty"));
        }
        if self.tau.is_empty() {
            return Err(config_error("tau", "list must not be empty"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(config_error(
                "t_final",
                format!("must be positive, got {}", self.t_final),
            ));
        }
        for (i, &m) in self.mesh_m.iter().enumerate() {
            if m < 8 {
                return Err(config_error(
                    &format!("mesh_m[{i}]"),
                    format!("need at least 8 boundary nodes, got {m}"),
                ));
            }
        }
        for (i, &tau) in self.tau.iter().enumerate() {
            TimeGrid::from_step(self.t_final, tau)
                .map_err(|e| config_error(&format!("tau[{i}]"), e.to_string()))?;
        }
        match kind {
            StudyKind::Spatial if self.tau.len() != 1 => {
                return Err(config_error(
                    "tau",
                    "a spatial study uses exactly one time step",
                ));
            }
            StudyKind::Temporal if self.mesh_m.len() != 1 => {
                return Err(config_error(
                    "mesh_m",
                    "a temporal study uses exactly one mesh",
                ));
            }
            _ => {}
        }
        for (name, v) in [
            ("pressure_rel_tol", self.pressure_rel_tol),
            ("concentration_rel_tol", self.concentration_rel_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(config_error(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        if self.gmres_restart == 0 {
            return Err(config_error("gmres_restart", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(config_error("max_iter", "must be positive"));
        }
        if !(1e-7..=1e-4).contains(&self.fd_step) {
            return Err(config_error(
                "fd_step",
                format!("must lie in [1e-7, 1e-4], got {}", self.fd_step),
            ));
        }
        Ok(())
    }

    fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            pressure: CgOptions {
                rel_tol: self.pressure_rel_tol,
                max_iter: self.max_iter,
                jacobi: true,
            },
            concentration: GmresOptions {
                restart: self.gmres_restart,
                rel_tol: self.concentration_rel_tol,
                max_iter: self.max_iter,
                jacobi: true,
            },
        }
    }
}

/// Result of one simulation.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub mesh_m: usize,
    pub h: f64,
    pub tau: f64,
    pub steps: usize,
    pub p1_dofs: usize,
    pub p2_dofs: usize,
    pub quality: QualityReport,
    pub errors: ErrorRecord,
    pub converged: bool,
    pub cg_iterations_max: usize,
    pub gmres_iterations_max: usize,
    pub max_compatibility_defect: f64,
    pub runtime_s: f64,
    /// VTK files written, if any.
    pub dumps: Vec<PathBuf>,
}

fn write_fields(dir: &Path, disc: &Discretization, state: &TimeStepState) -> Result<PathBuf> {
    let mesh = disc.mesh();
    let nv = mesh.n_vertices();
    let nq = disc.n_quad();
    let speed: Vec<f64> = (0..mesh.n_triangles())
        .map(|t| {
            (0..nq)
                .map(|q| {
                    let u = state.velocity.at(t, q);
                    u[0].hypot(u[1])
                })
                .sum::<f64>()
                / nq as f64
        })
        .collect();
    let path = dir.join(format!("fields_step{}.vtk", state.step));
    write_unstructured_grid_file(
        &path,
        mesh,
        &format!("miscible displacement step {} t={}", state.step, state.time),
        &[
            ScalarField {
                name: "concentration",
                values: &state.concentration,
            },
            ScalarField {
                name: "pressure",
                values: &state.pressure[..nv],
            },
        ],
        &[ScalarField {
            name: "velocity_magnitude",
            values: &speed,
        }],
    )?;
    Ok(path)
}

/// Runs one simulation with boundary count `m` and step `tau`.
pub fn simulate(
    config: &StudyConfig,
    m: usize,
    tau: f64,
    dump_dir: Option<&Path>,
) -> Result<RunResult> {
    let start = Instant::now();
    let (center, radius) = config.case.domain();
    let sol = config.case.solution();
    let mesh = generate_disk_mesh(center, radius, m)?;
    let quality = mesh_quality(&mesh);
    let h = mesh.h_nominal();
    let disc = Discretization::new(mesh, config.boundary_normal)?;
    let coeffs = sol.problem_coefficients(config.fd_step, config.concentration_boundary)?;
    let grid = TimeGrid::from_step(config.t_final, tau)?;
    let sim = Simulation::new(&disc, &coeffs, grid, config.mode, config.solver_settings());

    let mut cg_max = 0;
    let mut gmres_max = 0;
    let mut defect_max = 0.0f64;
    let mut dumps = Vec::new();
    let mut dump_error = None;
    let dump_steps: Vec<usize> = if config.dump_steps.is_empty() {
        vec![grid.steps()]
    } else {
        config.dump_steps.clone()
    };
    let out = sim.run(|state| {
        cg_max = cg_max.max(state.pressure_report.iterations);
        if let Some(r) = state.concentration_report {
            gmres_max = gmres_max.max(r.iterations);
        }
        defect_max = defect_max.max(state.compatibility_defect);
        if let Some(dir) = dump_dir {
            if dump_steps.contains(&state.step) && dump_error.is_none() {
                match write_fields(dir, &disc, state) {
                    Ok(p) => dumps.push(p),
                    Err(e) => dump_error = Some(e),
                }
            }
        }
    })?;
    if let Some(e) = dump_error {
        return Err(e);
    }
    let errors = ErrorRecord::measure(&disc, &out.final_state, &sol)?;
    Ok(RunResult {
        mesh_m: m,
        h,
        tau: grid.tau(),
        steps: grid.steps(),
        p1_dofs: disc.p1().dof_count(),
        p2_dofs: disc.p2().dof_count(),
        quality,
        errors,
        converged: true,
        cg_iterations_max: cg_max,
        gmres_iterations_max: gmres_max,
        max_compatibility_defect: defect_max,
        runtime_s: start.elapsed().as_secs_f64(),
        dumps,
    })
}

/// Single run with the first `M` and `τ` of the configuration.
pub fn run_single(config: &StudyConfig) -> Result<RunResult> {
    config.validate(StudyKind::Single)?;
    let dir = if config.dump_fields {
        let dir = config
            .output_dir
            .clone()
            .ok_or_else(|| config_error("output_dir", "required when dump_fields is set"))?;
        fs::create_dir_all(&dir)?;
        Some(dir)
    } else {
        None
    };
    simulate(config, config.mesh_m[0], config.tau[0], dir.as_deref())
}

/// Error columns of a report, in table order.
pub const COLUMNS: [&str; 7] = [
    "c_L2",
    "u_L2",
    "c_Linf",
    "u_Linf",
    "c_H1",
    "p_L2",
    "p_grad_L4",
];

fn column_values(e: &ErrorRecord) -> [f64; 7] {
    [
        e.c_l2,
        e.u_l2,
        e.c_linf,
        e.u_linf,
        e.c_h1,
        e.p_l2,
        e.p_grad_lq,
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnOrders {
    pub column: String,
    #[serde(flatten)]
    pub orders: ObservedOrders,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub kind: StudyKind,
    pub rows: Vec<RunResult>,
    pub orders: Vec<ColumnOrders>,
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub fn orders_for(&self, column: &str) -> Option<&ObservedOrders> {
        self.orders
            .iter()
            .find(|c| c.column == column)
            .map(|c| &c.orders)
    }

    /// Values of one error column, row by row.
    pub fn column(&self, column: &str) -> Option<Vec<f64>> {
        let idx = COLUMNS.iter().position(|c| *c == column)?;
        Some(
            self.rows
                .iter()
                .map(|r| column_values(&r.errors)[idx])
                .collect(),
        )
    }

    fn row_label(&self, r: &RunResult) -> String {
        match self.kind {
            StudyKind::Temporal => format_step(r.tau, r.steps),
            _ => format!("1/{}", r.mesh_m),
        }
    }

    /// CSV with one row per refinement, then one row per adjacent pair and
    /// a final `order` row with the headline orders.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let param = match self.kind {
            StudyKind::Temporal => "tau",
            _ => "h",
        };
        out.push_str(param);
        for c in &COLUMNS {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&self.row_label(r));
            for v in column_values(&r.errors) {
                let _ = write!(out, ",{}", format_sci(v));
            }
            out.push('\n');
        }
        if self.orders.is_empty() {
            return out;
        }
        let npairs = self.orders[0].orders.pairwise.len();
        for k in 0..npairs {
            let _ = write!(
                out,
                "order[{}->{}]",
                self.row_label(&self.rows[k]),
                self.row_label(&self.rows[k + 1])
            );
            for c in &self.orders {
                let _ = write!(out, ",{:.2}", c.orders.pairwise[k]);
            }
            out.push('\n');
        }
        out.push_str("order");
        for c in &self.orders {
            let _ = write!(out, ",{:.2}", c.orders.headline);
        }
        out.push('\n');
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `report.csv`, `report.json` and `config-echo.json`.
    pub fn write(&self, dir: &Path, config: &StudyConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.to_csv())?;
        fs::write(dir.join("report.json"), self.to_json())?;
        write_config_echo(dir, config)?;
        Ok(())
    }
}

pub fn write_config_echo(dir: &Path, config: &StudyConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("config-echo.json"),
        serde_json::to_string_pretty(config).expect("config serializes"),
    )?;
    Ok(())
}

fn format_step(tau: f64, steps: usize) -> String {
    if (tau * steps as f64 - 1.0).abs() < 1e-12 {
        format!("1/{steps}")
    } else {
        format_sci(tau)
    }
}

/// Five significant digits with a two-digit signed exponent, e.g.
/// `1.3995E-04`.
pub fn format_sci(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:.4E}");
    let (mantissa, exp) = s.split_once('E').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}E{sign}{:02}", exp.abs())
}

fn run_rows(config: &StudyConfig, cases: Vec<(usize, f64)>) -> Result<Vec<RunResult>> {
    if config.parallel {
        cases
            .par_iter()
            .map(|&(m, tau)| simulate(config, m, tau, None))
            .collect()
    } else {
        cases
            .iter()
            .map(|&(m, tau)| simulate(config, m, tau, None))
            .collect()
    }
}

fn build_report(
    kind: StudyKind,
    rows: Vec<RunResult>,
    notes: Vec<String>,
) -> Result<ConvergenceReport> {
    let mut orders = Vec::new();
    if rows.len() >= 2 {
        for (idx, name) in COLUMNS.iter().enumerate() {
            let errs: Vec<f64> = rows.iter().map(|r| column_values(&r.errors)[idx]).collect();
            orders.push(ColumnOrders {
                column: name.to_string(),
                orders: observed_orders(&errs, 2.0)?,
            });
        }
    }
    Ok(ConvergenceReport {
        kind,
        rows,
        orders,
        notes,
    })
}

/// Mesh refinement at a fixed time step.
pub fn run_spatial_study(config: &StudyConfig) -> Result<ConvergenceReport> {
    config.validate(StudyKind::Spatial)?;
    let tau = config.tau[0];
    let rows = run_rows(config, config.mesh_m.iter().map(|&m| (m, tau)).collect())?;
    let notes = vec![
        format!("fixed time step tau = {tau:e}; rows refine h = 1/M"),
        "the O(tau) temporal error is common to all rows; the observed orders measure h only \
         while it stays below the spatial error of the finest mesh"
            .to_string(),
        "errors are measured at t = T on the polygonal domain; u errors use U = -(k/mu(C))grad P \
         at the volume quadrature points"
            .to_string(),
    ];
    build_report(StudyKind::Spatial, rows, notes)
}

/// Time-step refinement on a fixed mesh.
pub fn run_temporal_study(config: &StudyConfig) -> Result<ConvergenceReport> {
    config.validate(StudyKind::Temporal)?;
    let m = config.mesh_m[0];
    let rows = run_rows(config, config.tau.iter().map(|&tau| (m, tau)).collect())?;
    let notes = vec![
        format!("fixed mesh M = {m} (h = 1/{m}); rows refine tau"),
        "the O(h^2) spatial error is common to all rows; the observed orders measure tau only \
         while it stays below the temporal error of the finest step"
            .to_string(),
    ];
    build_report(StudyKind::Temporal, rows, notes)
}
