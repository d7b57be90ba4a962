//! Weighted Caccioppoli quantities on closed-form and discrete fields.
//!
//! For a density `f`, a field `u`, a cutoff `η` and a directional weight
//! `w` acting on `Γᵢ = 1 + |∂ᵢu|²`:
//!
//! - `lhs = ∫ η² D²f(∇u)(∇∂ᵢu, ∇∂ᵢu) w(Γᵢ)`
//! - `rhs = ∫ D²f(∇u)(∇η, ∇η) W(Γᵢ)` with the matching cutoff weight `W`
//! - `T1` is `lhs` restricted to the annulus `B_{2R} \ B_R`, `T2 = rhs`
//! - `S = ∫ η D²f(∇u)(∇∂ᵢu, ∇η) ∂ᵢu w(Γᵢ)` over the annulus, so that
//!   `|S| <= √(T1 T2)` by Cauchy–Schwarz.

mod cutoff;
mod weight;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cutoff::CutoffProfile;
pub use weight::{
    log_weight, log_weight_derivative, rho_admissible, RhoFunction, WeightSpec, WeightVariant, LOG_SHIFT,
    RHO_CHECK_T_MAX,
};

use crate::density::{Density, Vec2};
use crate::error::{Error, Result};
use crate::field::{gamma, recovered_hessians, ClosedFormField, FieldView};
use crate::mesh::{build_mesh, DomainSpec};
use crate::quadrature::midpoint_square_multi;
use crate::solver::{minimize, SolveOptions, SolveReport};

/// Resolution control for closed-form integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Cells per side of the first midpoint grid over the box around `B_{2R}`.
    pub initial_cells: usize,
    pub max_cells: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { initial_cells: 1024, max_cells: 4096, rel_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaccioppoliReport {
    #[serde(rename = "R")]
    pub radius: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
    /// The mixed integral `S`.
    pub mixed: f64,
    pub weight: String,
    pub density: String,
    pub field: String,
    pub quadrature: String,
    /// Cells per side (closed form) or element count (discrete).
    pub resolution: usize,
    pub quadrature_converged: bool,
}

impl CaccioppoliReport {
    /// `|S| <= √(T1 T2)` up to a relative slack.
    pub fn cauchy_schwarz_holds(&self, rel_slack: f64) -> bool {
        self.mixed.abs() <= (self.t1 * self.t2).sqrt() * (1.0 + rel_slack)
    }
}

/// Pointwise integrands `[lhs, rhs, T1, S]`.
#[allow(clippy::too_many_arguments)]
fn integrand(
    density: &dyn Density,
    cutoff: &CutoffProfile,
    weight: &WeightSpec,
    x: Vec2,
    p: Vec2,
    second: Option<Vec2>,
) -> [f64; 4] {
    let eta = cutoff.eta(x);
    let grad_eta = cutoff.gradient(x);
    let g = gamma(p, weight.axis);
    let form = density.hessian(p);
    let rhs = form.quadratic(&grad_eta) * weight.rhs_weight(g);
    let Some(v) = second else {
        return [f64::NAN, rhs, f64::NAN, f64::NAN];
    };
    let w = weight.lhs_weight(g);
    let lhs = eta * eta * form.quadratic(&v) * w;
    if cutoff.in_annulus(x) {
        let mixed = eta * form.apply(&v, &grad_eta) * weight.axis.component(p) * w;
        [lhs, rhs, lhs, mixed]
    } else {
        [lhs, rhs, 0.0, 0.0]
    }
}

fn closed_form_terms(
    density: &dyn Density,
    field: &dyn ClosedFormField,
    cutoff: &CutoffProfile,
    weight: &WeightSpec,
    need_second: bool,
    options: &QuadratureOptions,
) -> Result<([f64; 4], usize, bool)> {
    let outer = cutoff.support_radius();
    if outer >= field.max_radius() {
        return Err(Error::InvalidArgument(format!(
            "field `{}` is defined only for |x| < {}, cutoff support reaches {outer}",
            field.label(),
            field.max_radius()
        )));
    }
    if need_second && field.hessian(Vec2::zeros()).is_none() {
        return Err(Error::MissingSecondDerivatives);
    }
    let point = |x: f64, y: f64| {
        let x = Vec2::new(x, y);
        if x.norm_squared() >= outer * outer {
            return [0.0; 4];
        }
        let p = field.gradient(x);
        let second = if need_second { field.hessian(x).map(|h| weight.axis.hessian_row(&h)) } else { None };
        integrand(density, cutoff, weight, x, p, second)
    };
    let mut n = options.initial_cells.max(2);
    let mut prev = midpoint_square_multi(point, outer, n);
    let mut converged = false;
    while n < options.max_cells {
        n *= 2;
        let next = midpoint_square_multi(point, outer, n);
        // the mixed term may cancel to zero; only the first three steer refinement
        converged = prev[..3].iter().zip(&next[..3]).all(|(a, b)| {
            a == b || a.is_nan() && b.is_nan() || (a - b).abs() <= options.rel_tol * a.abs().max(b.abs())
        });
        prev = next;
        if converged {
            break;
        }
    }
    Ok((prev, n, converged))
}

fn discrete_terms(
    density: &dyn Density,
    field: &crate::solver::DiscreteField,
    cutoff: &CutoffProfile,
    weight: &WeightSpec,
    need_second: bool,
) -> [f64; 4] {
    let hessians = need_second.then(|| recovered_hessians(field));
    let mut total = [0.0; 4];
    for (e, geo) in field.mesh.geometry().iter().enumerate() {
        let x = geo.centroid;
        if x.norm() >= cutoff.support_radius() {
            continue;
        }
        let p = field.element_gradient(e);
        let second = hessians.as_ref().map(|h| weight.axis.hessian_row(&h[e]));
        let v = integrand(density, cutoff, weight, x, p, second);
        for k in 0..4 {
            total[k] += geo.area * v[k];
        }
    }
    total
}

/// Computes `lhs`, `rhs`, `T1`, `T2` and `S` in one pass.
pub fn evaluate(
    density: &dyn Density,
    field: FieldView<'_>,
    cutoff: &CutoffProfile,
    weight: &WeightSpec,
    options: &QuadratureOptions,
) -> Result<CaccioppoliReport> {
    evaluate_inner(density, field, cutoff, weight, true, options)
}

fn evaluate_inner(
    density: &dyn Density,
    field: FieldView<'_>,
    cutoff: &CutoffProfile,
    weight: &WeightSpec,
    need_second: bool,
    options: &QuadratureOptions,
) -> Result<CaccioppoliReport> {
    weight.validate()?;
    let (terms, resolution, converged, quadrature) = match field {
        FieldView::Closed(f) => {
            let (terms, n, converged) = closed_form_terms(density, f, cutoff, weight, need_second, options)?;
            (terms, n, converged, format!("midpoint {n}x{n} on [-2R, 2R]^2"))
        }
        FieldView::Discrete(f) => {
            let terms = discrete_terms(density, f, cutoff, weight, need_second);
            let m = f.mesh.element_count();
            (terms, m, true, format!("element centroids, {m} elements, recovered Hessian"))
        }
    };
    let [lhs, rhs, t1, mixed] = terms;
    Ok(CaccioppoliReport {
        radius: cutoff.radius(),
        lhs,
        rhs,
        ratio: lhs / rhs,
        t1,
        t2: rhs,
        mixed,
        weight: weight.to_string(),
        density: density.label(),
        field: field.label(),
        quadrature,
        resolution,
        quadrature_converged: converged,
    })
}

/// `∫ η² D²f(∇u)(∇∂ᵢu, ∇∂ᵢu) w(Γᵢ)`.
pub fn weighted_lhs(
    density: &dyn Density,
    field: FieldView<'_>,
    cutoff: &CutoffProfile,
    weight: &WeightSpec,
) -> Result<f64> {
    Ok(evaluate(density, field, cutoff, weight, &QuadratureOptions::default())?.lhs)
}

/// `∫ D²f(∇u)(∇η, ∇η) W(Γᵢ)`; needs no second derivatives.
pub fn weighted_rhs(
    density: &dyn Density,
    field: FieldView<'_>,
    cutoff: &CutoffProfile,
    weight: &WeightSpec,
) -> Result<f64> {
    Ok(evaluate_inner(density, field, cutoff, weight, false, &QuadratureOptions::default())?.rhs)
}

/// `(T1, T2)`.
pub fn annulus_terms(
    density: &dyn Density,
    field: FieldView<'_>,
    cutoff: &CutoffProfile,
    weight: &WeightSpec,
) -> Result<(f64, f64)> {
    let r = evaluate(density, field, cutoff, weight, &QuadratureOptions::default())?;
    Ok((r.t1, r.t2))
}

/// The mixed integral `S`.
pub fn mixed_term(
    density: &dyn Density,
    field: FieldView<'_>,
    cutoff: &CutoffProfile,
    weight: &WeightSpec,
) -> Result<f64> {
    Ok(evaluate(density, field, cutoff, weight, &QuadratureOptions::default())?.mixed)
}

/// One radius of a decay sweep: the report, or the error that stopped it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    #[serde(rename = "R")]
    pub radius: f64,
    pub report: Option<CaccioppoliReport>,
    pub solve: Option<SolveReport>,
    pub error: Option<String>,
}

/// For each `R`, solves on the polygonal disk `B_{2R}` with boundary values
/// from `boundary_field` and evaluates the Caccioppoli quantities on the
/// discrete solution. Errors at one radius are recorded and the sweep
/// continues.
pub fn decay_sweep(
    density: &dyn Density,
    boundary_field: &dyn ClosedFormField,
    radii: &[f64],
    weight: &WeightSpec,
    h: f64,
    solve_options: &SolveOptions,
) -> Result<Vec<SweepEntry>> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radii must be positive and increasing".into()));
    }
    weight.validate()?;
    let run = |radius: f64| -> Result<(CaccioppoliReport, SolveReport)> {
        let cutoff = CutoffProfile::new(radius)?;
        let mesh = Arc::new(build_mesh(&DomainSpec::disk(2.0 * radius), h)?);
        let (u, solve) = minimize(density, mesh, |x| boundary_field.value(x), solve_options)?;
        let mut report = evaluate(density, FieldView::Discrete(&u), &cutoff, weight, &QuadratureOptions::default())?;
        report.field = format!("solution with boundary data {}", boundary_field.label());
        Ok((report, solve))
    };
    Ok(radii
        .iter()
        .map(|&radius| match run(radius) {
            Ok((report, solve)) => SweepEntry { radius, report: Some(report), solve: Some(solve), error: None },
            Err(Error::NoConvergence { report, .. }) => {
                SweepEntry { radius, report: None, solve: Some(*report), error: Some("solver did not converge".into()) }
            }
            Err(e) => SweepEntry { radius, report: None, solve: None, error: Some(e.to_string()) },
        })
        .collect())
}

/// Running maximum of `lhs/rhs` along a sweep: the smallest constant `C`
/// with `lhs <= C rhs` at every radius so far.
pub fn running_constant(entries: &[SweepEntry]) -> Vec<f64> {
    let mut best = 0.0f64;
    entries
        .iter()
        .map(|e| {
            if let Some(r) = &e.report {
                if r.ratio.is_finite() {
                    best = best.max(r.ratio);
                }
            }
            best
        })
        .collect()
}
