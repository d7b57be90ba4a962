//! Executes a validated `RunConfig`: runs the named pipeline, writes its
//! output files and collects every report into a `RunManifest`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{Command, RunConfig};
use super::plot::{render_svg, PlotSpec, Scale, Series};
use crate::caccioppoli::{
    decay_sweep, evaluate, running_constant, CaccioppoliReport, CutoffProfile, QuadratureOptions,
};
use crate::conditions::{
    affinity_measure, check_balance, check_theorem31_average, check_theorem31_pointwise, direction_transform,
    transform_discrete, transform_field, BalanceSpec, DirectionFrame, Region,
};
use crate::density::{validate_all, Density, DensityModel, HypothesisSampling, Vec2};
use crate::error::{Error, Result};
use crate::field::{ClosedFormField, FieldSpec, FieldView};
use crate::mesh::{build_mesh, DomainSpec, Mesh};
use crate::nitsche::{classify_divergence, theta_lower_bound_check, Classification, ClassifyOptions};
use crate::solver::{euler_residual, minimize, DiscreteField, SolveOptions};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process outcome; `code` gives the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitStatus {
    Ok,
    ConfigError,
    SolverFailed,
    DiagnosticFailed,
    Internal,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            Self::Ok => 0,
            Self::ConfigError => 2,
            Self::SolverFailed => 3,
            Self::DiagnosticFailed => 4,
            Self::Internal => 5,
        }
    }

    fn worst(self, other: Self) -> Self {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }
}

/// Exit status for an error raised while running a valid config.
pub fn exit_status_for(error: &Error) -> ExitStatus {
    match error {
        Error::NoConvergence { .. } | Error::SingularSystem { .. } => ExitStatus::SolverFailed,
        Error::Io(_) | Error::Json(_) => ExitStatus::Internal,
        _ => ExitStatus::ConfigError,
    }
}

/// One report together with the operation and run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperationRecord {
    pub operation: String,
    pub command: Command,
    /// Command line of the run.
    pub config: String,
    pub report: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub artifact_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub config: RunConfig,
    pub operations: Vec<OperationRecord>,
    pub outputs: Vec<PathBuf>,
    pub exit_status: ExitStatus,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// The report of the first operation named `name`.
    pub fn report(&self, name: &str) -> Option<&Value> {
        self.operations.iter().find(|o| o.operation == name).map(|o| &o.report)
    }
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct Context<'a> {
    config: &'a RunConfig,
    command_line: String,
    operations: Vec<OperationRecord>,
    outputs: Vec<PathBuf>,
    status: ExitStatus,
}

impl Context<'_> {
    fn record(&mut self, operation: &str, report: &impl Serialize) -> Result<()> {
        self.operations.push(OperationRecord {
            operation: operation.to_string(),
            command: self.config.command,
            config: self.command_line.clone(),
            report: serde_json::to_value(report)?,
        });
        Ok(())
    }

    fn fail_diagnostic(&mut self) {
        self.status = self.status.worst(ExitStatus::DiagnosticFailed);
    }

    fn write(&mut self, path: &Path, contents: &[u8]) -> Result<()> {
        std::fs::write(path, contents)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn write_json(&mut self, path: Option<&PathBuf>, value: &impl Serialize) -> Result<()> {
        match path {
            Some(p) => {
                let mut text = serde_json::to_string_pretty(value)?;
                text.push('\n');
                self.write(p, text.as_bytes())
            }
            None => Ok(()),
        }
    }

    fn write_csv(&mut self, path: Option<&PathBuf>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let Some(path) = path else { return Ok(()) };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(path, &bytes)
    }
}

/// Runs the pipeline of a validated config. Never panics on admissible
/// input; failures are reflected in the manifest's exit status.
pub fn run(config: &RunConfig) -> RunManifest {
    faer::set_global_parallelism(faer::Par::Seq);
    let started_at = timestamp();
    let mut ctx = Context {
        config,
        command_line: config.command_line(),
        operations: Vec::new(),
        outputs: Vec::new(),
        status: ExitStatus::Ok,
    };
    let outcome = match config.command {
        Command::DensityValidate => density_validate(&mut ctx),
        Command::Nitsche => nitsche(&mut ctx),
        Command::Solve => solve(&mut ctx),
        Command::Caccioppoli => caccioppoli(&mut ctx),
        Command::Conditions => conditions(&mut ctx),
        Command::Transform => transform(&mut ctx),
        Command::Sweep => sweep(&mut ctx),
    };
    let message = match outcome {
        Ok(()) => None,
        Err(e) => {
            if let Error::NoConvergence { report, .. } = &e {
                let _ = ctx.record("minimize", report.as_ref());
            }
            ctx.status = ctx.status.worst(exit_status_for(&e));
            Some(e.to_string())
        }
    };
    let mut manifest = RunManifest {
        tool: "bernstein-lab".into(),
        artifact_version: ARTIFACT_VERSION.into(),
        started_at,
        finished_at: timestamp(),
        config: config.clone(),
        operations: ctx.operations,
        outputs: ctx.outputs,
        exit_status: ctx.status,
        exit_code: ctx.status.code(),
        message,
    };
    if let Some(path) = &config.manifest {
        manifest.outputs.push(path.clone());
    }
    manifest
}

fn density_of(config: &RunConfig) -> Result<&DensityModel> {
    config.density.as_ref().ok_or_else(|| Error::InvalidArgument("density missing".into()))
}

fn closed_field(config: &RunConfig) -> Result<Box<dyn ClosedFormField>> {
    config
        .field
        .as_ref()
        .and_then(FieldSpec::closed_form)
        .ok_or_else(|| Error::InvalidArgument("a closed-form field is required".into()))
}

fn knob(value: Option<f64>, name: &str) -> Result<f64> {
    value.ok_or_else(|| Error::InvalidArgument(format!("{name} missing")))
}

/// A closed-form field or nodal values read from a file.
enum LoadedField {
    Closed(Box<dyn ClosedFormField>),
    Discrete(DiscreteField),
}

impl LoadedField {
    fn view(&self) -> FieldView<'_> {
        match self {
            Self::Closed(f) => FieldView::Closed(f.as_ref()),
            Self::Discrete(f) => FieldView::Discrete(f),
        }
    }
}

fn load(config: &RunConfig) -> Result<LoadedField> {
    match config.field.as_ref() {
        Some(FieldSpec::FromFile(path)) => {
            let domain = config.domain.as_ref().ok_or_else(|| Error::InvalidArgument("domain missing".into()))?;
            Ok(LoadedField::Discrete(load_field_csv(path, domain, knob(config.h, "h")?)?))
        }
        Some(spec) => Ok(LoadedField::Closed(spec.closed_form().expect("closed form"))),
        None => Err(Error::InvalidArgument("field missing".into())),
    }
}

#[derive(Deserialize)]
struct NodeRow {
    x: f64,
    y: f64,
    u: f64,
}

/// Reads a CSV with columns `x, y, u` and matches its rows to the nodes of
/// `build_mesh(domain, h)`, by position when the coordinates agree and by
/// nearest node otherwise.
pub fn load_field_csv(path: &Path, domain: &DomainSpec, h: f64) -> Result<DiscreteField> {
    let mesh = Arc::new(build_mesh(domain, h)?);
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<NodeRow>, _>>()?;
    if rows.len() != mesh.node_count() {
        return Err(Error::InvalidArgument(format!(
            "{} has {} rows but the mesh of {domain} at h = {h} has {} nodes",
            path.display(),
            rows.len(),
            mesh.node_count()
        )));
    }
    let tol = 1e-6 * h;
    let mut values = vec![f64::NAN; mesh.node_count()];
    for (i, row) in rows.iter().enumerate() {
        let p = Vec2::new(row.x, row.y);
        let node = if (mesh.nodes[i] - p).norm() <= tol {
            i
        } else {
            let (j, d) = mesh.nearest_node(p);
            if d > tol {
                return Err(Error::InvalidArgument(format!(
                    "row {} at ({}, {}) matches no mesh node",
                    i + 1,
                    row.x,
                    row.y
                )));
            }
            j
        };
        if !values[node].is_nan() {
            return Err(Error::InvalidArgument(format!("node {node} appears twice in {}", path.display())));
        }
        values[node] = row.u;
    }
    DiscreteField::new(mesh, values)
}

fn density_validate(ctx: &mut Context<'_>) -> Result<()> {
    let density = density_of(ctx.config)?;
    let sampling = HypothesisSampling::with_r_max(knob(ctx.config.r_max, "r_max")?);
    let summary = validate_all(density, &sampling)?;
    ctx.record("validate_all", &summary)?;
    if !summary.ellipticity.pass {
        ctx.fail_diagnostic();
    }
    ctx.write_json(ctx.config.out.as_ref(), &summary)
}

fn nitsche(ctx: &mut Context<'_>) -> Result<()> {
    let density = density_of(ctx.config)?;
    let levels = ctx.config.levels.unwrap_or(20);
    let t_max = knob(ctx.config.t_max, "t_max")?;
    let report = classify_divergence(density, t_max, levels, &ClassifyOptions::default())?;
    ctx.record("classify_divergence", &report)?;
    if density.is_nearly_linear() {
        let bound = theta_lower_bound_check(density, 1e2, t_max.clamp(1e3, 1e12))?;
        ctx.record("theta_lower_bound_check", &bound)?;
    }
    if report.classification == Classification::Inconclusive {
        ctx.fail_diagnostic();
    }
    let rows: Vec<Vec<f64>> = report.dyadic_sums.iter().map(|s| vec![s.k as f64, s.sum]).collect();
    ctx.write_json(ctx.config.out.as_ref(), &report)?;
    ctx.write_csv(ctx.config.csv.as_ref(), &["k", "S_k"], &rows)?;
    if let Some(path) = ctx.config.plot.clone() {
        let spec = PlotSpec {
            title: format!("dyadic sums, {}", report.density),
            x_label: "k".into(),
            y_label: "S_k".into(),
            x_scale: Scale::Linear,
            y_scale: Scale::Log,
        };
        let series = Series::new("S_k", report.dyadic_sums.iter().map(|s| (s.k as f64, s.sum)).collect());
        ctx.write(&path, render_svg(&spec, &[series]).as_bytes())?;
    }
    Ok(())
}

fn covering_region(domain: &DomainSpec) -> Region {
    Region::disk(domain.outer_radius())
}

fn solve(ctx: &mut Context<'_>) -> Result<()> {
    let config = ctx.config;
    let density = density_of(config)?;
    let domain = config.domain.clone().ok_or_else(|| Error::InvalidArgument("domain missing".into()))?;
    let boundary = closed_field(config)?;
    let mesh = Arc::new(build_mesh(&domain, knob(config.h, "h")?)?);
    let options = SolveOptions::with_tol(knob(config.tol, "tol")?);
    let (u, report) = minimize(density, mesh, |x| boundary.value(x), &options)?;
    ctx.record("minimize", &report)?;
    let affinity = affinity_measure(FieldView::Discrete(&u), &covering_region(&domain))?;
    let residual = euler_residual(density, &u);
    let deviation = u.max_abs_error(|x| boundary.value(x));
    let summary = json!({
        "solve": report,
        "euler_residual": residual,
        "affinity_measure": affinity,
        "max_deviation_from_boundary_field": deviation,
    });
    ctx.record("affinity_measure", &json!({ "value": affinity, "region": covering_region(&domain) }))?;
    let rows: Vec<Vec<f64>> = u.mesh.nodes.iter().zip(&u.values).map(|(p, v)| vec![p.x, p.y, *v]).collect();
    ctx.write_csv(config.out.as_ref(), &["x", "y", "u"], &rows)?;
    ctx.write_json(config.report.as_ref(), &summary)
}

const SWEEP_HEADER: [&str; 6] = ["R", "lhs", "rhs", "ratio", "T1", "T2"];

fn sweep_row(radius: f64, report: Option<&CaccioppoliReport>) -> Vec<f64> {
    match report {
        Some(r) => vec![r.radius, r.lhs, r.rhs, r.ratio, r.t1, r.t2],
        None => vec![radius, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN],
    }
}

fn write_sweep_outputs(ctx: &mut Context<'_>, title: String, rows: &[Vec<f64>], report: &Value) -> Result<()> {
    ctx.write_csv(ctx.config.out.as_ref(), &SWEEP_HEADER, rows)?;
    ctx.write_json(ctx.config.report.as_ref(), report)?;
    if let Some(path) = ctx.config.plot.clone() {
        let spec =
            PlotSpec { title, x_label: "R".into(), y_label: "value".into(), x_scale: Scale::Log, y_scale: Scale::Log };
        let series: Vec<Series> = [(1, "lhs"), (2, "rhs"), (4, "T1"), (5, "T2")]
            .into_iter()
            .map(|(col, name)| Series::new(name, rows.iter().map(|r| (r[0], r[col])).collect()))
            .collect();
        ctx.write(&path, render_svg(&spec, &series).as_bytes())?;
    }
    Ok(())
}

fn caccioppoli(ctx: &mut Context<'_>) -> Result<()> {
    let config = ctx.config;
    let density = density_of(config)?;
    let weight = config.weight.clone().ok_or_else(|| Error::InvalidArgument("weight missing".into()))?;
    let radii = config.radii.clone().unwrap_or_default();
    let field = load(config)?;
    let mut reports = Vec::new();
    for &radius in &radii {
        let cutoff = CutoffProfile::new(radius)?;
        let r = evaluate(density, field.view(), &cutoff, &weight, &QuadratureOptions::default())?;
        ctx.record("evaluate", &r)?;
        reports.push(r);
    }
    let rows: Vec<Vec<f64>> = reports.iter().map(|r| sweep_row(r.radius, Some(r))).collect();
    let mut best = 0.0f64;
    let constants: Vec<f64> = reports
        .iter()
        .map(|r| {
            if r.ratio.is_finite() {
                best = best.max(r.ratio);
            }
            best
        })
        .collect();
    let report = json!({ "entries": reports, "running_constant": constants });
    write_sweep_outputs(ctx, format!("{} / {}", field.view().label(), weight), &rows, &report)
}

fn sweep(ctx: &mut Context<'_>) -> Result<()> {
    let config = ctx.config;
    let density = density_of(config)?;
    let weight = config.weight.clone().ok_or_else(|| Error::InvalidArgument("weight missing".into()))?;
    let radii = config.radii.clone().unwrap_or_default();
    let field = closed_field(config)?;
    let options = SolveOptions::with_tol(knob(config.tol, "tol")?);
    let entries = decay_sweep(density, field.as_ref(), &radii, &weight, knob(config.h, "h")?, &options)?;
    for e in &entries {
        ctx.record("decay_sweep", e)?;
        if e.error.is_some() {
            let status = if e.solve.as_ref().is_some_and(|s| !s.converged) {
                ExitStatus::SolverFailed
            } else {
                ExitStatus::DiagnosticFailed
            };
            ctx.status = ctx.status.worst(status);
        }
    }
    let rows: Vec<Vec<f64>> = entries.iter().map(|e| sweep_row(e.radius, e.report.as_ref())).collect();
    let report = json!({ "entries": entries, "running_constant": running_constant(&entries) });
    write_sweep_outputs(ctx, format!("sweep, {}, {}", density, weight), &rows, &report)
}

fn conditions(ctx: &mut Context<'_>) -> Result<()> {
    let config = ctx.config;
    let field = load(config)?;
    let check = config.check.clone().ok_or_else(|| Error::InvalidArgument("check missing".into()))?;
    let report = match &check {
        BalanceSpec::RhoAverage { rho } => {
            check_theorem31_average(field.view(), rho, config.radii.as_deref().unwrap_or_default())?
        }
        BalanceSpec::RhoPointwise { rho, c } => {
            let region = config.region.ok_or_else(|| Error::InvalidArgument("region missing".into()))?;
            check_theorem31_pointwise(field.view(), rho, *c, &region)?
        }
        _ => {
            let region = config.region.ok_or_else(|| Error::InvalidArgument("region missing".into()))?;
            check_balance(field.view(), &check, &region)?
        }
    };
    ctx.record("check", &report)?;
    let region = config
        .region
        .unwrap_or_else(|| Region::disk(config.radii.as_ref().and_then(|r| r.last().copied()).unwrap_or(1.0)));
    let affinity = affinity_measure(field.view(), &region)?;
    ctx.record("affinity_measure", &json!({ "value": affinity, "region": region }))?;
    if !report.pass {
        ctx.fail_diagnostic();
    }
    ctx.write_json(config.out.as_ref(), &report)
}

/// Largest deviation over random points between the analytic partial
/// derivatives of `u(Tx)`, the directional derivatives `∇u(Tx)·E_α`, and
/// fourth-order central differences of `u(Tx)`.
fn derivative_identity(frame: &DirectionFrame, field: &dyn ClosedFormField, seed: u64) -> (f64, f64, usize) {
    const POINTS: usize = 20;
    let tf = transform_field(frame, field);
    let t = frame.t();
    let radius = 1.0f64.min(0.9 * tf.max_radius());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut directional, mut finite_difference) = (0.0f64, 0.0f64);
    let e = [Vec2::new(frame.e1[0], frame.e1[1]), Vec2::new(frame.e2[0], frame.e2[1])];
    for _ in 0..POINTS {
        let x = loop {
            let c = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if c.norm() < 1.0 {
                break c * radius;
            }
        };
        let grad = tf.gradient(x);
        let base = field.gradient(t * x);
        for a in 0..2 {
            let unit = if a == 0 { Vec2::x() } else { Vec2::y() };
            let s = 1e-3 * radius.max(1e-3);
            let fd = (-tf.value(x + unit * (2.0 * s)) + 8.0 * tf.value(x + unit * s) - 8.0 * tf.value(x - unit * s)
                + tf.value(x - unit * (2.0 * s)))
                / (12.0 * s);
            let scale = grad[a].abs().max(1.0);
            directional = directional.max((grad[a] - base.dot(&e[a])).abs() / scale);
            finite_difference = finite_difference.max((grad[a] - fd).abs() / scale);
        }
    }
    (directional, finite_difference, POINTS)
}

/// Tolerance of the derivative identity.
pub const DERIVATIVE_IDENTITY_TOL: f64 = 1e-10;
/// Finite differences carry truncation error; looser tolerance.
pub const FINITE_DIFFERENCE_TOL: f64 = 1e-7;

fn transform(ctx: &mut Context<'_>) -> Result<()> {
    let config = ctx.config;
    let density = density_of(config)?;
    let (e1, e2) = match (config.e1, config.e2) {
        (Some(a), Some(b)) => (Vec2::new(a[0], a[1]), Vec2::new(b[0], b[1])),
        _ => return Err(Error::InvalidArgument("E1 and E2 required".into())),
    };
    let frame = DirectionFrame::new(e1, e2)?;
    let field = closed_field(config)?;
    let (directional, finite_difference, points) = derivative_identity(&frame, field.as_ref(), config.seed);
    let identity_ok = directional <= DERIVATIVE_IDENTITY_TOL && finite_difference <= FINITE_DIFFERENCE_TOL;
    let mut report = json!({
        "frame": frame,
        "T": frame.t(),
        "gram": frame.gram(),
        "det": frame.det(),
        "density_map": frame.density_map(),
        "transformed_density": direction_transform(&frame, Arc::new(density.clone())).label(),
        "transformed_field": transform_field(&frame, field.as_ref()).label(),
        "derivative_identity": {
            "points": points,
            "seed": config.seed,
            "max_directional_error": directional,
            "max_finite_difference_error": finite_difference,
            "pass": identity_ok,
        },
    });
    let mut pass = identity_ok;
    if let Some(domain) = &config.domain {
        let tol = knob(config.tol, "tol")?;
        let mesh: Arc<Mesh> = Arc::new(build_mesh(domain, knob(config.h, "h")?)?);
        let (u, solve) = minimize(density, mesh, |x| field.value(x), &SolveOptions::with_tol(tol))?;
        ctx.record("minimize", &solve)?;
        let transformed = transform_discrete(&frame, &u)?;
        let tdensity = direction_transform(&frame, Arc::new(density.clone()));
        let residual = euler_residual(&tdensity, &transformed);
        let bound = 10.0 * tol / frame.det().abs().min(1.0);
        pass &= residual <= bound;
        report["solution_transfer"] = json!({
            "solve_residual": euler_residual(density, &u),
            "transformed_residual": residual,
            "bound": bound,
            "pass": residual <= bound,
        });
    }
    ctx.record("direction_transform", &report)?;
    if !pass {
        ctx.fail_diagnostic();
    }
    ctx.write_json(config.out.as_ref(), &report)
}
