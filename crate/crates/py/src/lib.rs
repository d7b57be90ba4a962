//! Python bindings. Models, fields, conditions and domains are passed as the
//! same spec strings the command line accepts; reports come back as dicts.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use bernstein_lab_core::caccioppoli::{self, CutoffProfile, QuadratureOptions, RhoFunction, WeightSpec};
use bernstein_lab_core::conditions::{self, BalanceSpec, Region};
use bernstein_lab_core::density::{self, Density as _, DensityModel, HypothesisSampling, Vec2};
use bernstein_lab_core::field::{ClosedFormField, FieldSpec, FieldView};
use bernstein_lab_core::mesh::{build_mesh, DomainSpec};
use bernstein_lab_core::nitsche::{self, ClassifyOptions};
use bernstein_lab_core::solver::{self, DiscreteField, SolveOptions};
use bernstein_lab_core::Error;

create_exception!(bernstein_lab, SolverError, PyRuntimeError, "Newton iteration failed.");

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::NoConvergence { .. } | Error::SingularSystem { .. } => SolverError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py_err)
}

fn to_dict(py: Python<'_>, value: &impl Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Convex integrand `f(p)` on gradient space.
#[pyclass(module = "bernstein_lab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Density {
    model: DensityModel,
}

#[pymethods]
impl Density {
    /// Parses a model spec such as `"minimal-surface"` or `"power:s=2"`.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self { model: parse(spec)? })
    }

    #[staticmethod]
    fn builtins() -> Vec<Self> {
        DensityModel::builtins().into_iter().map(|model| Self { model }).collect()
    }

    #[getter]
    fn spec(&self) -> String {
        self.model.to_string()
    }

    fn eval(&self, p1: f64, p2: f64) -> f64 {
        self.model.eval(Vec2::new(p1, p2))
    }

    fn gradient(&self, p1: f64, p2: f64) -> (f64, f64) {
        let g = self.model.gradient(Vec2::new(p1, p2));
        (g.x, g.y)
    }

    fn hessian(&self, p1: f64, p2: f64) -> [[f64; 2]; 2] {
        let m = self.model.hessian(Vec2::new(p1, p2)).to_matrix();
        [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
    }

    fn theta(&self, t: f64) -> PyResult<f64> {
        nitsche::theta(&self.model, t).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("Density('{}')", self.model)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.model == other.model
    }
}

/// P1 finite element minimizer together with its solve report.
#[pyclass(module = "bernstein_lab", frozen)]
struct Solution {
    field: DiscreteField,
    density: DensityModel,
    report: serde_json::Value,
}

#[pymethods]
impl Solution {
    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.field.mesh.nodes.iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.field.values.clone()
    }

    #[getter]
    fn report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_dict(py, &self.report)
    }

    fn energy(&self) -> f64 {
        solver::energy(&self.density, &self.field)
    }

    fn euler_residual(&self) -> f64 {
        solver::euler_residual(&self.density, &self.field)
    }

    /// Max nodal deviation from a closed-form field.
    fn max_abs_error(&self, field: &str) -> PyResult<f64> {
        let exact = closed_form(field)?;
        Ok(self.field.max_abs_error(|x| exact.value(x)))
    }

    fn __len__(&self) -> usize {
        self.field.values.len()
    }

    fn __repr__(&self) -> String {
        format!("Solution({}, {} nodes)", self.density, self.field.values.len())
    }
}

fn closed_form(spec: &str) -> PyResult<Box<dyn ClosedFormField>> {
    parse::<FieldSpec>(spec)?
        .closed_form()
        .ok_or_else(|| PyValueError::new_err(format!("`{spec}` is not a closed-form field")))
}

/// A field argument: a closed-form spec string or a `Solution`.
enum FieldArg<'py> {
    Closed(Box<dyn ClosedFormField>),
    Discrete(PyRef<'py, Solution>),
}

impl<'py> FieldArg<'py> {
    fn extract(obj: &Bound<'py, PyAny>) -> PyResult<Self> {
        if let Ok(s) = obj.extract::<PyRef<'py, Solution>>() {
            return Ok(Self::Discrete(s));
        }
        let spec: String = obj.extract()?;
        Ok(Self::Closed(closed_form(&spec)?))
    }

    fn view(&self) -> FieldView<'_> {
        match self {
            Self::Closed(f) => FieldView::Closed(f.as_ref()),
            Self::Discrete(s) => FieldView::Discrete(&s.field),
        }
    }
}

/// Dyadic-sum test for divergence of `∫ Θ(t) dt`; `t_max` defaults to `2**levels`.
#[pyfunction]
#[pyo3(signature = (density, levels = 20, t_max = None))]
fn classify_divergence(py: Python<'_>, density: &Density, levels: usize, t_max: Option<f64>) -> PyResult<Py<PyAny>> {
    let t_max = t_max.unwrap_or_else(|| 2f64.powi(levels as i32));
    let report =
        nitsche::classify_divergence(&density.model, t_max, levels, &ClassifyOptions::default()).map_err(to_py_err)?;
    to_dict(py, &report)
}

/// Ellipticity, nearly-linear and linear growth-bound validators.
#[pyfunction]
#[pyo3(signature = (density, r_max = 1e6))]
fn validate(py: Python<'_>, density: &Density, r_max: f64) -> PyResult<Py<PyAny>> {
    let summary = density::validate_all(&density.model, &HypothesisSampling::with_r_max(r_max)).map_err(to_py_err)?;
    to_dict(py, &summary)
}

/// Minimizes the energy on `domain` with Dirichlet data from a closed-form field.
#[pyfunction]
#[pyo3(signature = (density, boundary, domain = "square:L=1", h = 0.05, tol = 1e-10))]
fn solve(py: Python<'_>, density: &Density, boundary: &str, domain: &str, h: f64, tol: f64) -> PyResult<Solution> {
    let domain: DomainSpec = parse(domain)?;
    let boundary = parse::<FieldSpec>(boundary)?;
    let model = density.model.clone();
    let result = py.detach(move || {
        let exact = boundary
            .closed_form()
            .ok_or_else(|| Error::InvalidArgument(format!("`{boundary}` is not a closed-form field")))?;
        let mesh = Arc::new(build_mesh(&domain, h)?);
        solver::minimize(&model, mesh, |x| exact.value(x), &SolveOptions::with_tol(tol))
    });
    let (field, report) = result.map_err(to_py_err)?;
    let report = serde_json::to_value(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(Solution { field, density: density.model.clone(), report })
}

/// `y` with `∂f/∂p₂(a, y) = c`.
#[pyfunction]
fn monotone_invert(density: &Density, a: f64, c: f64) -> PyResult<f64> {
    solver::monotone_invert(&density.model, a, c).map_err(to_py_err)
}

#[pyfunction]
fn log_weight(t: f64) -> PyResult<f64> {
    caccioppoli::log_weight(t).map_err(to_py_err)
}

#[pyfunction]
fn log_weight_derivative(t: f64) -> PyResult<f64> {
    caccioppoli::log_weight_derivative(t).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (rho, t_max = 1e8))]
fn rho_admissible(py: Python<'_>, rho: &str, t_max: f64) -> PyResult<Py<PyAny>> {
    let rho: RhoFunction = parse(rho)?;
    to_dict(py, &caccioppoli::rho_admissible(&rho, t_max).map_err(to_py_err)?)
}

/// Weighted Caccioppoli terms on the disk of radius `radius`.
#[pyfunction]
fn caccioppoli_terms(
    py: Python<'_>,
    density: &Density,
    field: &Bound<'_, PyAny>,
    weight: &str,
    radius: f64,
) -> PyResult<Py<PyAny>> {
    let field = FieldArg::extract(field)?;
    let weight: WeightSpec = parse(weight)?;
    let cutoff = CutoffProfile::new(radius).map_err(to_py_err)?;
    let report = caccioppoli::evaluate(&density.model, field.view(), &cutoff, &weight, &QuadratureOptions::default())
        .map_err(to_py_err)?;
    to_dict(py, &report)
}

/// Checks a balance condition; averaged conditions need `radii`.
#[pyfunction]
#[pyo3(signature = (field, check, region = "disk:R=100", radii = None))]
fn check_balance(
    py: Python<'_>,
    field: &Bound<'_, PyAny>,
    check: &str,
    region: &str,
    radii: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let field = FieldArg::extract(field)?;
    let spec: BalanceSpec = parse(check)?;
    let region: Region = parse(region)?;
    let report = match &spec {
        BalanceSpec::RhoPointwise { rho, c } => conditions::check_theorem31_pointwise(field.view(), rho, *c, &region),
        BalanceSpec::RhoAverage { rho } => {
            let radii = radii.ok_or_else(|| PyValueError::new_err("averaged conditions need `radii`"))?;
            conditions::check_theorem31_average(field.view(), rho, &radii)
        }
        _ => conditions::check_balance(field.view(), &spec, &region),
    }
    .map_err(to_py_err)?;
    to_dict(py, &report)
}

/// Relative RMS residual of the best affine fit on `region`; zero for affine fields.
#[pyfunction]
#[pyo3(signature = (field, region = "disk:R=1"))]
fn affinity_measure(field: &Bound<'_, PyAny>, region: &str) -> PyResult<f64> {
    let field = FieldArg::extract(field)?;
    let region: Region = parse(region)?;
    conditions::affinity_measure(field.view(), &region).map_err(to_py_err)
}

#[pymodule]
fn bernstein_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Density>()?;
    m.add_class::<Solution>()?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_function(wrap_pyfunction!(classify_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(monotone_invert, m)?)?;
    m.add_function(wrap_pyfunction!(log_weight, m)?)?;
    m.add_function(wrap_pyfunction!(log_weight_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(rho_admissible, m)?)?;
    m.add_function(wrap_pyfunction!(caccioppoli_terms, m)?)?;
    m.add_function(wrap_pyfunction!(check_balance, m)?)?;
    m.add_function(wrap_pyfunction!(affinity_measure, m)?)?;
    Ok(())
}
