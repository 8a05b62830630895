//! The `ptori` command line. Each subcommand reads an optional flat JSON
//! config, lets flags override its keys, validates everything, then runs.
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{
    build_k1_torus, catenoid_functions, fd_lhat_jacobian, fd_theta_jacobian, scherk_lhat_rows,
    theta_jacobian_at_origin, CatenoidChartPoint, ChartPoint, ScherkChartPoint,
};
use crate::error::{Error, Result};
use crate::family::{FamilyAngles, StandardExample};
use crate::mesh::{boundary_identification, catenoid_fit, export_obj, GridDomain, Immersion, Lattice, Translates};
use crate::numerics::{c64, condition_number, determinant, QuadratureConfig, C64, DEFAULT_FD_STEPS};
use crate::periods::{best_target, classify, ligature, MarkedDatum};
use crate::solver::{angle_grid, perturb_branch_data, NewtonConfig, PeriodProblem, TargetSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ptori", version, about = "Doubly periodic minimal tori with parallel ends")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mesh a standard example over its fundamental domain (OBJ + JSON sidecar)
    Surface(SurfaceArgs),
    /// Ligature tuple of a standard example or a k = 1 chart point
    Ligature(LigatureArgs),
    /// Boundary-chart Jacobians, analytic and by finite differences
    Jacobian(JacobianArgs),
    /// Newton solve of the period problem from (perturbed) family data
    Solve(SolveArgs),
    /// Solve over a grid of family angles
    Sweep(SweepArgs),
    /// Catenoid degeneration at small theta
    Limits(LimitsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Scherk,
    Catenoid,
}

/// Every key a config file may hold. Commands read the keys they need.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub res: Option<usize>,
    pub trunc_radius: Option<f64>,
    pub tiles_m: Option<i32>,
    pub tiles_n: Option<i32>,
    pub out: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub chart: Option<ChartKind>,
    pub rho: Option<f64>,
    pub k: Option<usize>,
    pub coords: Option<Vec<f64>>,
    pub closing_tol: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<[f64; 2]>,
    pub perturbation: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub theta_range: Option<[f64; 2]>,
    pub alpha_range: Option<[f64; 2]>,
    pub beta_range: Option<[f64; 2]>,
    pub fd_steps: Option<Vec<f64>>,
    pub inner: Option<f64>,
    pub outer: Option<f64>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_refinements: Option<u32>,
    pub residual_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub fd_step: Option<f64>,
    pub damping: Option<f64>,
    pub max_condition: Option<f64>,
}

macro_rules! overlay {
    ($cfg:expr, $args:expr, $($field:ident),* $(,)?) => {
        $( if let Some(v) = $args.$field.clone() { $cfg.$field = Some(v); } )*
    };
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat JSON config; flags override its keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub max_refinements: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct AngleArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct NewtonArgs {
    #[arg(long)]
    pub residual_tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub fd_step: Option<f64>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub max_condition: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub angles: AngleArgs,
    /// Grid resolution per direction (at least 8)
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub trunc_radius: Option<f64>,
    /// Number of translates along H
    #[arg(long)]
    pub tiles_m: Option<i32>,
    /// Number of translates along T
    #[arg(long)]
    pub tiles_n: Option<i32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sidecar path (default: OBJ path with .json extension)
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LigatureArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub angles: AngleArgs,
    #[arg(long, value_enum)]
    pub chart: Option<ChartKind>,
    /// Chart coordinates x1, y1, x2, y2 as re,im pairs (8 numbers)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub coords: Option<Vec<f64>>,
    #[arg(long)]
    pub closing_tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct JacobianArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub chart: Option<ChartKind>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Decreasing difference steps for Richardson extrapolation
    #[arg(long, value_delimiter = ',')]
    pub fd_steps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub newton: NewtonArgs,
    #[command(flatten)]
    pub angles: AngleArgs,
    /// Target a (default: the example's own value)
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Target b as re,im
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    pub b: Option<Vec<f64>>,
    /// Half-width of the random offset added to each branch value
    #[arg(long)]
    pub perturbation: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV path (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub newton: NewtonArgs,
    /// Points per axis (0 gives an empty grid)
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub theta_range: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub alpha_range: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub beta_range: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LimitsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Annulus resolution per direction
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub inner: Option<f64>,
    #[arg(long)]
    pub outer: Option<f64>,
}

fn pair(v: &Option<Vec<f64>>, name: &str) -> Result<Option<[f64; 2]>> {
    match v {
        None => Ok(None),
        Some(x) if x.len() == 2 => Ok(Some([x[0], x[1]])),
        Some(x) => Err(Error::Invalid(format!("{name} needs two numbers, got {}", x.len()))),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("malformed config {}: {e}", path.display())))
}

impl Command {
    /// The config file merged with the flags of this command.
    pub fn config(&self) -> Result<RunConfig> {
        let common = match self {
            Command::Surface(a) => &a.common,
            Command::Ligature(a) => &a.common,
            Command::Jacobian(a) => &a.common,
            Command::Solve(a) => &a.common,
            Command::Sweep(a) => &a.common,
            Command::Limits(a) => &a.common,
        };
        let mut cfg = load_config(&common.config)?;
        overlay!(cfg, common, abs_tol, rel_tol, max_refinements);
        match self {
            Command::Surface(a) => {
                overlay!(cfg, a.angles, theta, alpha, beta);
                overlay!(cfg, a, res, trunc_radius, tiles_m, tiles_n, out, sidecar);
            }
            Command::Ligature(a) => {
                overlay!(cfg, a.angles, theta, alpha, beta);
                overlay!(cfg, a, chart, coords, closing_tol);
            }
            Command::Jacobian(a) => { overlay!(cfg, a, chart, rho, k, fd_steps); }
            Command::Solve(a) => {
                overlay!(cfg, a.newton, residual_tol, max_iter, fd_step, damping, max_condition);
                overlay!(cfg, a.angles, theta, alpha, beta);
                overlay!(cfg, a, a, perturbation, trials, seed, out);
                if let Some(b) = pair(&a.b, "b")? {
                    cfg.b = Some(b);
                }
            }
            Command::Sweep(a) => {
                overlay!(cfg, a.newton, residual_tol, max_iter, fd_step, damping, max_condition);
                overlay!(cfg, a, n, out);
                for (src, dst, name) in [
                    (&a.theta_range, &mut cfg.theta_range, "theta_range"),
                    (&a.alpha_range, &mut cfg.alpha_range, "alpha_range"),
                    (&a.beta_range, &mut cfg.beta_range, "beta_range"),
                ] {
                    if let Some(r) = pair(src, name)? {
                        *dst = Some(r);
                    }
                }
            }
            Command::Limits(a) => { overlay!(cfg, a, theta, res, inner, outer); }
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn quadrature(&self) -> Result<QuadratureConfig> {
        let d = QuadratureConfig::default();
        QuadratureConfig::new(
            self.abs_tol.unwrap_or(d.abs_tol),
            self.rel_tol.unwrap_or(d.rel_tol),
            self.max_refinements.unwrap_or(d.max_refinements),
        )
    }

    pub fn newton(&self) -> Result<NewtonConfig> {
        let d = NewtonConfig::default();
        let cfg = NewtonConfig {
            residual_tol: self.residual_tol.unwrap_or(d.residual_tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            fd_step: self.fd_step.unwrap_or(d.fd_step),
            damping: self.damping.unwrap_or(d.damping),
            max_condition: self.max_condition.unwrap_or(d.max_condition),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn angles(&self) -> Result<FamilyAngles> {
        let get = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Invalid(format!("missing {name}")));
        FamilyAngles::new(get(self.theta, "theta")?, get(self.alpha, "alpha")?, get(self.beta, "beta")?)
    }

    fn has_angles(&self) -> bool {
        self.theta.is_some() || self.alpha.is_some() || self.beta.is_some()
    }
}

/// serde_json formatter writing every float with 17 significant digits.
struct Fixed17 {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for Fixed17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_float(value).as_bytes())
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// 17 significant digits in exponent form (valid JSON and CSV).
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = Fixed17 { inner: serde_json::ser::PrettyFormatter::new() };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn cx(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn matrix_rows(m: &DMatrix<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| cx(m[(r, c)])).collect()).collect()
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERIC
    }
}

/// Runs a parsed command; prints the report to stdout and errors to stderr.
pub fn run(cli: &Cli) -> i32 {
    let result = cli.command.config().and_then(|cfg| match &cli.command {
        Command::Surface(_) => cmd_surface(&cfg),
        Command::Ligature(_) => cmd_ligature(&cfg),
        Command::Jacobian(_) => cmd_jacobian(&cfg),
        Command::Solve(_) => cmd_solve(&cfg),
        Command::Sweep(_) => cmd_sweep(&cfg),
        Command::Limits(_) => cmd_limits(&cfg),
    });
    match result {
        Ok(Outcome { stdout, failed }) => {
            print!("{stdout}");
            if failed > 0 {
                eprintln!("error: {failed} row(s) failed");
                EXIT_NUMERIC
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Text for stdout and the number of failed table rows.
pub struct Outcome {
    pub stdout: String,
    pub failed: usize,
}

impl Outcome {
    fn report<T: Serialize>(value: &T) -> Result<Self> {
        Ok(Outcome { stdout: to_json(value)?, failed: 0 })
    }
}

#[derive(Debug, Serialize)]
struct SurfaceReport {
    lattice: Lattice,
    angles: FamilyAngles,
    a: f64,
    b: [f64; 2],
    mu: f64,
    #[serde(rename = "E")]
    e: [f64; 2],
    resolution: usize,
    trunc_radius: f64,
    translates: Translates,
    vertices: usize,
    faces: usize,
    boundary_error: f64,
    obj: PathBuf,
    quadrature: QuadratureConfig,
}

pub fn cmd_surface(cfg: &RunConfig) -> Result<Outcome> {
    let angles = cfg.angles()?;
    let quad = cfg.quadrature()?;
    let res = cfg.res.unwrap_or(64);
    let mut dom = GridDomain::flat(res, res)?;
    if let Some(r) = cfg.trunc_radius {
        dom = dom.with_trunc_radius(r)?;
    }
    let (tm, tn) = (cfg.tiles_m.unwrap_or(1), cfg.tiles_n.unwrap_or(1));
    if tm < 1 || tn < 1 {
        return Err(Error::Invalid("tile counts must be at least 1".into()));
    }
    let translates = Translates { m: (0, tm - 1), n: (0, tn - 1) };
    translates.validate()?;
    let out = cfg.out.clone().ok_or_else(|| Error::Invalid("missing out (OBJ path)".into()))?;
    let sidecar = cfg.sidecar.clone().unwrap_or_else(|| out.with_extension("json"));

    let ex = StandardExample::new(angles)?;
    let immersion = Immersion::from_example(&ex, &quad)?;
    let mesh = immersion.mesh(&dom)?;
    export_obj(&mesh, &translates, &out)?;
    let cv = classify(&ex.marked_datum(&quad)?, 1e-6, &quad)?;
    let report = SurfaceReport {
        lattice: mesh.lattice,
        angles,
        a: cv.a,
        b: cx(cv.b),
        mu: ex.mu,
        e: cx(ex.e_factor),
        resolution: res,
        trunc_radius: dom.trunc_radius,
        translates,
        vertices: mesh.vertices.len() * translates.count(),
        faces: mesh.faces.len() * translates.count(),
        boundary_error: boundary_identification(&mesh).max(),
        obj: out,
        quadrature: quad,
    };
    let text = to_json(&report)?;
    write_text(&sidecar, &text)?;
    Ok(Outcome { stdout: text, failed: 0 })
}

#[derive(Debug, Serialize)]
struct LigatureReport {
    source: String,
    angles: Option<FamilyAngles>,
    coords: Option<Vec<[f64; 2]>>,
    tuple: Vec<[f64; 2]>,
    closes: bool,
    a: f64,
    b: [f64; 2],
    residual: f64,
    closing_tol: f64,
    quadrature: QuadratureConfig,
}

fn chart_point(kind: ChartKind, coords: &[f64]) -> Result<(ChartPoint, Vec<C64>)> {
    if coords.len() != 8 {
        return Err(Error::Invalid(format!("coords needs 8 numbers (x1, y1, x2, y2 as re,im), got {}", coords.len())));
    }
    let z: Vec<C64> = coords.chunks(2).map(|p| c64(p[0], p[1])).collect();
    let point = match kind {
        ChartKind::Scherk => ChartPoint::Scherk(ScherkChartPoint::new(z.clone())?),
        ChartKind::Catenoid => ChartPoint::Catenoid(CatenoidChartPoint::new(vec![z[0], z[2]], vec![z[1], z[3]])?),
    };
    Ok((point, z))
}

pub fn cmd_ligature(cfg: &RunConfig) -> Result<Outcome> {
    let quad = cfg.quadrature()?;
    let closing_tol = cfg.closing_tol.unwrap_or(1e-8);
    if !(closing_tol > 0.0) {
        return Err(Error::Invalid("closing_tol must be positive".into()));
    }
    let (source, angles, coords, datum): (String, _, _, MarkedDatum) = match (cfg.chart, cfg.has_angles()) {
        (Some(_), true) => return Err(Error::Invalid("give either angles or a chart point, not both".into())),
        (None, false) => return Err(Error::Invalid("missing input: angles or chart + coords".into())),
        (None, true) => {
            let angles = cfg.angles()?;
            let d = StandardExample::new(angles)?.marked_datum(&quad)?;
            ("family".into(), Some(angles), None, d)
        }
        (Some(kind), false) => {
            let coords = cfg.coords.as_ref().ok_or_else(|| Error::Invalid("missing coords".into()))?;
            let (point, z) = chart_point(kind, coords)?;
            let d = build_k1_torus(&point, &quad)?;
            let name = match kind {
                ChartKind::Scherk => "scherk",
                ChartKind::Catenoid => "catenoid",
            };
            (name.into(), None, Some(z.into_iter().map(cx).collect()), d)
        }
    };
    let tuple = ligature(&datum, &quad)?;
    let (cv, residual) = best_target(&tuple);
    Outcome::report(&LigatureReport {
        source,
        angles,
        coords,
        tuple: tuple.entries.iter().map(|z| cx(*z)).collect(),
        closes: residual < closing_tol,
        a: cv.a,
        b: cx(cv.b),
        residual,
        closing_tol,
        quadrature: quad,
    })
}

#[derive(Debug, Serialize)]
struct MatrixReport {
    rows: Vec<Vec<[f64; 2]>>,
    det_abs: f64,
    /// |det| / (2 pi)^{2k}
    det_ratio: f64,
    condition: f64,
}

#[derive(Debug, Serialize)]
struct FdReport {
    matrix: MatrixReport,
    relative_error: f64,
    extrapolation_residual: f64,
}

#[derive(Debug, Serialize)]
struct CatenoidValues {
    a: Vec<[f64; 2]>,
    b_tilde: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct JacobianReport {
    chart: ChartKind,
    rho: Option<f64>,
    k: usize,
    values: Option<CatenoidValues>,
    analytic: MatrixReport,
    fd: Option<FdReport>,
    fd_steps: Vec<f64>,
    quadrature: QuadratureConfig,
}

fn matrix_report(m: &DMatrix<C64>, k: usize) -> MatrixReport {
    let det_abs = determinant(m).norm();
    MatrixReport {
        rows: matrix_rows(m),
        det_abs,
        det_ratio: det_abs / (2.0 * PI).powi(2 * k as i32),
        condition: condition_number(m),
    }
}

pub fn cmd_jacobian(cfg: &RunConfig) -> Result<Outcome> {
    let quad = cfg.quadrature()?;
    let chart = cfg.chart.ok_or_else(|| Error::Invalid("missing chart (scherk or catenoid)".into()))?;
    let k = cfg.k.unwrap_or(1);
    if !(1..=8).contains(&k) {
        return Err(Error::Invalid(format!("k must lie in 1..=8, got {k}")));
    }
    let steps = cfg.fd_steps.clone().unwrap_or_else(|| DEFAULT_FD_STEPS.to_vec());
    if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0)) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("fd_steps must be positive and strictly decreasing".into()));
    }
    let report = match chart {
        ChartKind::Scherk => {
            let rho = cfg.rho.unwrap_or(0.5);
            let (rows, _) = scherk_lhat_rows(rho, k)?;
            let analytic = matrix_report(&rows, k);
            let fd = if k == 1 {
                let fd = fd_lhat_jacobian(rho, &steps, &quad)?;
                Some(FdReport {
                    relative_error: fd.relative_error(&rows),
                    extrapolation_residual: fd.residual,
                    matrix: matrix_report(&fd.matrix, k),
                })
            } else {
                None
            };
            JacobianReport { chart, rho: Some(rho), k, values: None, analytic, fd, fd_steps: steps, quadrature: quad }
        }
        ChartKind::Catenoid => {
            let origin = CatenoidChartPoint::origin(k)?;
            let f = catenoid_functions(&origin, &quad)?;
            let values = CatenoidValues {
                a: f.a.iter().map(|z| cx(*z)).collect(),
                b_tilde: f.b_tilde.iter().map(|z| cx(*z)).collect(),
            };
            let exact = theta_jacobian_at_origin(k);
            let fd = if k == 1 {
                let fd = fd_theta_jacobian(&origin, &steps, &quad)?;
                Some(FdReport {
                    relative_error: fd.relative_error(&exact),
                    extrapolation_residual: fd.residual,
                    matrix: matrix_report(&fd.matrix, k),
                })
            } else {
                None
            };
            let analytic = matrix_report(&exact, k);
            JacobianReport { chart, rho: None, k, values: Some(values), analytic, fd, fd_steps: steps, quadrature: quad }
        }
    };
    Outcome::report(&report)
}

#[derive(Debug, Serialize)]
struct SolveRow {
    trial: usize,
    theta: f64,
    alpha: f64,
    beta: f64,
    target_a: f64,
    target_b_re: f64,
    target_b_im: f64,
    perturbation: f64,
    status: String,
    residual: f64,
    iterations: usize,
    a: f64,
    b_re: f64,
    b_im: f64,
    recovery_error: f64,
    jacobian_condition: f64,
}

#[derive(Debug, Serialize)]
struct TableRecord {
    command: &'static str,
    rows: usize,
    failed: usize,
    csv: PathBuf,
    quadrature: QuadratureConfig,
    newton: NewtonConfig,
}

/// CSV rows written and flushed one at a time, to a file or to a buffer for stdout.
struct Table {
    writer: csv::Writer<Box<dyn Write>>,
    buffer: Option<std::rc::Rc<std::cell::RefCell<Vec<u8>>>>,
}

struct SharedBuf(std::rc::Rc<std::cell::RefCell<Vec<u8>>>);

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.borrow_mut().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Table {
    fn open(path: &Option<PathBuf>, header: &[&str]) -> Result<Self> {
        let (sink, buffer): (Box<dyn Write>, _) = match path {
            Some(p) => (Box::new(File::create(p)?), None),
            None => {
                let b = std::rc::Rc::new(std::cell::RefCell::new(Vec::new()));
                (Box::new(SharedBuf(b.clone())), Some(b))
            }
        };
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
        writer.write_record(header).map_err(csv_error)?;
        writer.flush()?;
        Ok(Table { writer, buffer })
    }

    fn row(&mut self, fields: Vec<String>) -> Result<()> {
        self.writer.write_record(&fields).map_err(csv_error)?;
        self.writer.flush()?;
        Ok(())
    }

    fn finish(mut self) -> Result<String> {
        self.writer.flush()?;
        Ok(self.buffer.map(|b| String::from_utf8_lossy(&b.borrow()).into_owned()).unwrap_or_default())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

const SOLVE_HEADER: [&str; 16] = [
    "trial",
    "theta",
    "alpha",
    "beta",
    "target_a",
    "target_b_re",
    "target_b_im",
    "perturbation",
    "status",
    "residual",
    "iterations",
    "a",
    "b_re",
    "b_im",
    "recovery_error",
    "jacobian_condition",
];

fn solve_fields(r: &SolveRow) -> Vec<String> {
    let f = format_float;
    vec![
        r.trial.to_string(),
        f(r.theta),
        f(r.alpha),
        f(r.beta),
        f(r.target_a),
        f(r.target_b_re),
        f(r.target_b_im),
        f(r.perturbation),
        r.status.clone(),
        f(r.residual),
        r.iterations.to_string(),
        f(r.a),
        f(r.b_re),
        f(r.b_im),
        f(r.recovery_error),
        f(r.jacobian_condition),
    ]
}

/// Solves from the family seed (optionally perturbed) towards a target.
fn solve_rows(
    angles: &FamilyAngles,
    target: Option<(f64, C64)>,
    perturbation: f64,
    trials: usize,
    seed: u64,
    quad: &QuadratureConfig,
    newton: &NewtonConfig,
) -> Result<Vec<SolveRow>> {
    let (problem, u0) = PeriodProblem::from_family(angles, *quad)?;
    let (own, _) = best_target(&problem.ligature(&u0)?);
    let (ta, tb) = target.unwrap_or((own.a, own.b));
    let spec = TargetSpec::new(ta, tb, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![];
    for trial in 0..trials {
        let init = perturb_branch_data(&u0, perturbation, &mut rng);
        let mut row = SolveRow {
            trial,
            theta: angles.theta,
            alpha: angles.alpha,
            beta: angles.beta,
            target_a: ta,
            target_b_re: tb.re,
            target_b_im: tb.im,
            perturbation,
            status: "ok".into(),
            residual: f64::NAN,
            iterations: 0,
            a: f64::NAN,
            b_re: f64::NAN,
            b_im: f64::NAN,
            recovery_error: f64::NAN,
            jacobian_condition: f64::NAN,
        };
        match problem.newton_solve(&spec, &init, newton) {
            Ok(rep) => {
                row.residual = rep.residual;
                row.iterations = rep.iterations;
                row.a = rep.classifying.a;
                row.b_re = rep.classifying.b.re;
                row.b_im = rep.classifying.b.im;
                row.recovery_error =
                    rep.solution.iter().zip(&u0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                row.jacobian_condition = rep.jacobian_condition;
            }
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => row.status = format!("failed: {e}"),
        }
        rows.push(row);
    }
    Ok(rows)
}

fn table_outcome(
    command: &'static str,
    table: Table,
    out: &Option<PathBuf>,
    rows: usize,
    failed: usize,
    quad: QuadratureConfig,
    newton: NewtonConfig,
) -> Result<Outcome> {
    let text = table.finish()?;
    let stdout = match out {
        None => text,
        Some(p) => to_json(&TableRecord { command, rows, failed, csv: p.clone(), quadrature: quad, newton })?,
    };
    Ok(Outcome { stdout, failed })
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Outcome> {
    let angles = cfg.angles()?;
    let quad = cfg.quadrature()?;
    let newton = cfg.newton()?;
    let target = match (cfg.a, cfg.b) {
        (None, None) => None,
        (Some(a), Some(b)) => Some((a, c64(b[0], b[1]))),
        (Some(a), None) => Some((a, c64(0.0, 0.0))),
        (None, Some(_)) => return Err(Error::Invalid("target b given without a".into())),
    };
    if let Some((a, b)) = target {
        TargetSpec::new(a, b, 1)?;
    }
    let perturbation = cfg.perturbation.unwrap_or(0.0);
    if !(perturbation >= 0.0 && perturbation.is_finite()) {
        return Err(Error::Invalid("perturbation must be a finite nonnegative number".into()));
    }
    let trials = cfg.trials.unwrap_or(1);
    if trials > 10_000 {
        return Err(Error::Invalid("at most 10000 trials".into()));
    }
    let mut table = Table::open(&cfg.out, &SOLVE_HEADER)?;
    let rows = solve_rows(&angles, target, perturbation, trials, cfg.seed.unwrap_or(7), &quad, &newton)?;
    let mut failed = 0;
    for r in &rows {
        failed += usize::from(r.status != "ok");
        table.row(solve_fields(r))?;
    }
    table_outcome("solve", table, &cfg.out, rows.len(), failed, quad, newton)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let quad = cfg.quadrature()?;
    let newton = cfg.newton()?;
    let n = cfg.n.unwrap_or(3);
    if n > 50 {
        return Err(Error::Invalid("at most 50 points per axis".into()));
    }
    let range = |r: Option<[f64; 2]>, d: [f64; 2]| -> Result<(f64, f64)> {
        let r = r.unwrap_or(d);
        if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
            return Err(Error::Invalid(format!("invalid range {r:?}")));
        }
        Ok((r[0], r[1]))
    };
    let theta = range(cfg.theta_range, [PI / 6.0, PI / 3.0])?;
    let alpha = range(cfg.alpha_range, [0.1, 1.4])?;
    let beta = range(cfg.beta_range, [0.1, 1.4])?;
    for (lo, hi) in [alpha, beta] {
        FamilyAngles::new(0.5 * (theta.0 + theta.1), lo, hi.min(lo))?;
        FamilyAngles::new(0.5 * (theta.0 + theta.1), hi, hi)?;
    }
    FamilyAngles::new(theta.0, 0.5, 0.5)?;
    FamilyAngles::new(theta.1, 0.5, 0.5)?;
    let grid = angle_grid(n, theta, alpha, beta);
    let mut table = Table::open(&cfg.out, &SOLVE_HEADER)?;
    let results: Vec<Result<Vec<SolveRow>>> = {
        use rayon::prelude::*;
        grid.par_iter().map(|a| solve_rows(a, None, 0.0, 1, 0, &quad, &newton)).collect()
    };
    let mut failed = 0;
    let mut count = 0;
    for (i, (angles, r)) in grid.iter().zip(results).enumerate() {
        let row = match r {
            Ok(mut rows) => {
                let mut row = rows.remove(0);
                row.trial = i;
                row
            }
            Err(e) => SolveRow {
                trial: i,
                theta: angles.theta,
                alpha: angles.alpha,
                beta: angles.beta,
                target_a: f64::NAN,
                target_b_re: f64::NAN,
                target_b_im: f64::NAN,
                perturbation: 0.0,
                status: format!("failed: {e}"),
                residual: f64::NAN,
                iterations: 0,
                a: f64::NAN,
                b_re: f64::NAN,
                b_im: f64::NAN,
                recovery_error: f64::NAN,
                jacobian_condition: f64::NAN,
            },
        };
        failed += usize::from(row.status != "ok");
        count += 1;
        table.row(solve_fields(&row))?;
    }
    table_outcome("sweep", table, &cfg.out, count, failed, quad, newton)
}

#[derive(Debug, Serialize)]
struct LimitsReport {
    angles: FamilyAngles,
    a: f64,
    b: [f64; 2],
    /// a theta / 2, which tends to 1
    a_theta_half: f64,
    annulus: [f64; 2],
    resolution: usize,
    neck_radius: f64,
    center: [f64; 3],
    hausdorff: f64,
    forward: f64,
    reverse: f64,
    quadrature: QuadratureConfig,
}

pub fn cmd_limits(cfg: &RunConfig) -> Result<Outcome> {
    let quad = cfg.quadrature()?;
    let angles = FamilyAngles::new(cfg.theta.unwrap_or(0.05), 0.0, 0.0)?;
    let res = cfg.res.unwrap_or(48);
    let (inner, outer) = (cfg.inner.unwrap_or(1.0 / 3.0), cfg.outer.unwrap_or(3.0));
    let dom = GridDomain::annulus(inner, outer, res, res)?;
    if !(inner < 1.0 && outer > 1.0) {
        return Err(Error::Invalid("the annulus must contain the unit circle".into()));
    }
    let ex = StandardExample::new(angles)?;
    let cv = classify(&ex.marked_datum(&quad)?, 1e-6, &quad)?;
    let mesh = Immersion::from_example(&ex, &quad)?.mesh(&dom)?;
    let fit = catenoid_fit(&mesh)?;
    Outcome::report(&LimitsReport {
        angles,
        a: cv.a,
        b: cx(cv.b),
        a_theta_half: cv.a * angles.theta / 2.0,
        annulus: [inner, outer],
        resolution: res,
        neck_radius: fit.neck_radius,
        center: fit.center,
        hausdorff: fit.hausdorff,
        forward: fit.forward,
        reverse: fit.reverse,
        quadrature: quad,
    })
}
