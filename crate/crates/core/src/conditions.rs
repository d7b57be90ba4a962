//! Balance conditions between the two partial derivatives of a field, a
//! measure of deviation from affineness, and the linear change of frame
//! `ũ(x) = u(Tx)`, `f̃(p) = f(T^{-T} p)`.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::caccioppoli::{rho_admissible, RhoFunction, RHO_CHECK_T_MAX};
use crate::density::{log_spaced, Density, HessianForm, Vec2};
use crate::error::{Error, Result};
use crate::field::{gamma, Axis, ClosedFormField, FieldView};
use crate::mesh::Mesh;
use crate::quadrature::integrate;
use crate::report::{ConditionReport, Witness};
use crate::solver::{affine_fit, DiscreteField};
use crate::spec_string::{parse_number, SpecString};

/// Which partial derivative is bounded by which.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BalanceDirection {
    /// `∂₁u` bounded in terms of `∂₂u`.
    OneByTwo,
    /// `∂₂u` bounded in terms of `∂₁u`.
    TwoByOne,
}

impl BalanceDirection {
    fn axes(self) -> (Axis, Axis) {
        match self {
            Self::OneByTwo => (Axis::One, Axis::Two),
            Self::TwoByOne => (Axis::Two, Axis::One),
        }
    }

    fn number(self) -> u8 {
        match self {
            Self::OneByTwo => 1,
            Self::TwoByOne => 2,
        }
    }
}

/// A pointwise or averaged balance condition.
#[derive(Debug, Clone, PartialEq)]
pub enum BalanceSpec {
    /// `|∂ᵢu| <= K(|∂ⱼu|^m + 1)`
    PowerBalance { m: f64, k: f64, direction: BalanceDirection },
    /// `|∂ᵢu| ln²(1 + |∂ᵢu|) <= K(|∂ⱼu| + 1)`
    LogBalance { k: f64, direction: BalanceDirection },
    /// `Γ₁^{-1/2} ρ²(Γ₁)/ρ'(Γ₁) <= c Γ₂^{1/2}`
    RhoPointwise { rho: RhoFunction, c: f64 },
    /// `sup_R R^{-2} ∫_{B_R} Γ₁^{-1} ρ²(Γ₁)/ρ'(Γ₁) dx < ∞`
    RhoAverage { rho: RhoFunction },
}

impl BalanceSpec {
    pub fn power_balance(m: f64, k: f64, direction: BalanceDirection) -> Result<Self> {
        if !(0.0..1.0).contains(&m) {
            return Err(Error::InvalidArgument(format!("m must lie in [0, 1), got {m}")));
        }
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("K must be positive, got {k}")));
        }
        Ok(Self::PowerBalance { m, k, direction })
    }

    pub fn log_balance(k: f64, direction: BalanceDirection) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::InvalidArgument(format!("K must be positive, got {k}")));
        }
        Ok(Self::LogBalance { k, direction })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PowerBalance { .. } => "power-balance",
            Self::LogBalance { .. } => "log-balance",
            Self::RhoPointwise { .. } => "rho-pointwise",
            Self::RhoAverage { .. } => "rho-average",
        }
    }

    /// The constant `K` (or `c`) the condition is checked with.
    pub fn constant(&self) -> Option<f64> {
        match self {
            Self::PowerBalance { k, .. } | Self::LogBalance { k, .. } => Some(*k),
            Self::RhoPointwise { c, .. } => Some(*c),
            Self::RhoAverage { .. } => None,
        }
    }

    /// The same condition with another constant.
    pub fn with_constant(&self, value: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::PowerBalance { k, .. } | Self::LogBalance { k, .. } => *k = value,
            Self::RhoPointwise { c, .. } => *c = value,
            Self::RhoAverage { .. } => {}
        }
        out
    }
}

impl fmt::Display for BalanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PowerBalance { m, k, direction } => {
                write!(f, "power-balance:m={m},K={k},dir={}", direction.number())
            }
            Self::LogBalance { k, direction } => write!(f, "log-balance:K={k},dir={}", direction.number()),
            Self::RhoPointwise { rho, c } => write!(f, "rho-pointwise:rho={rho},c={c}"),
            Self::RhoAverage { rho } => write!(f, "rho-average:rho={rho}"),
        }
    }
}

fn parse_direction(spec: &SpecString<'_>) -> Result<BalanceDirection> {
    match spec.get("dir") {
        None => Ok(BalanceDirection::OneByTwo),
        Some(raw) => match parse_number(raw, "dir")? {
            1.0 => Ok(BalanceDirection::OneByTwo),
            2.0 => Ok(BalanceDirection::TwoByOne),
            d => Err(Error::Parse(format!("dir must be 1 or 2, got {d}"))),
        },
    }
}

impl FromStr for BalanceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        let rho = || -> Result<RhoFunction> { spec.get("rho").unwrap_or("log-shift").parse() };
        let parsed = match spec.name {
            "power-balance" => {
                spec.expect_keys(&["m", "K", "dir"])?;
                Self::power_balance(spec.number("m")?, spec.number("K")?, parse_direction(&spec)?)
            }
            "log-balance" => {
                spec.expect_keys(&["K", "dir"])?;
                Self::log_balance(spec.number("K")?, parse_direction(&spec)?)
            }
            "rho-pointwise" => {
                spec.expect_keys(&["rho", "c"])?;
                let c = spec.number("c")?;
                if !(c > 0.0) {
                    return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
                }
                Ok(Self::RhoPointwise { rho: rho()?, c })
            }
            "rho-average" => {
                spec.expect_keys(&["rho"])?;
                Ok(Self::RhoAverage { rho: rho()? })
            }
            other => Err(Error::Parse(format!("unknown condition `{other}`"))),
        };
        parsed.map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Parse(m),
            other => other,
        })
    }
}

impl Serialize for BalanceSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BalanceSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// `(lhs, rhs)` of a pointwise condition at gradient `p`; the condition
/// holds at `p` iff `lhs <= rhs`. `None` for averaged conditions.
pub fn evaluate_balance(spec: &BalanceSpec, p: Vec2) -> Option<(f64, f64)> {
    let (lhs, base) = balance_sides(spec, p)?;
    Some((lhs, spec.constant()? * base))
}

/// `(lhs, base)` with the condition reading `lhs <= K base`.
fn balance_sides(spec: &BalanceSpec, p: Vec2) -> Option<(f64, f64)> {
    match spec {
        BalanceSpec::PowerBalance { m, direction, .. } => {
            let (i, j) = direction.axes();
            Some((i.component(p).abs(), j.component(p).abs().powf(*m) + 1.0))
        }
        BalanceSpec::LogBalance { direction, .. } => {
            let (i, j) = direction.axes();
            let a = i.component(p).abs();
            let l = a.ln_1p();
            Some((a * l * l, j.component(p).abs() + 1.0))
        }
        BalanceSpec::RhoPointwise { rho, .. } => {
            let g1 = gamma(p, Axis::One);
            let g2 = gamma(p, Axis::Two);
            Some((rho.rho_squared_over_prime(g1) / g1.sqrt(), g2.sqrt()))
        }
        BalanceSpec::RhoAverage { .. } => None,
    }
}

/// Where a condition is sampled: the disk `|x| <= R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub radius: f64,
}

impl Region {
    pub fn disk(radius: f64) -> Self {
        Self { radius }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "disk:R={}", self.radius)
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        if spec.name != "disk" {
            return Err(Error::Parse(format!("unknown region `{}`; expected disk:R=...", spec.name)));
        }
        spec.expect_keys(&["R"])?;
        let radius = spec.number("R")?;
        if !(radius > 0.0) {
            return Err(Error::Parse(format!("region radius must be positive, got {radius}")));
        }
        Ok(Self { radius })
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Angles of the polar sample grid.
pub const POLAR_ANGLES: usize = 64;
const RADII_PER_DECADE: usize = 16;

/// Polar grid: the origin plus `POLAR_ANGLES` rays at log-spaced radii from
/// `R·10⁻³` to `R`.
pub fn polar_samples(region: &Region) -> Vec<Vec2> {
    let mut pts = vec![Vec2::zeros()];
    for r in log_spaced(region.radius * 1e-3, region.radius, RADII_PER_DECADE) {
        for k in 0..POLAR_ANGLES {
            let phi = TAU * k as f64 / POLAR_ANGLES as f64;
            pts.push(Vec2::new(r * phi.cos(), r * phi.sin()));
        }
    }
    pts
}

/// Sample points and gradients: the polar grid for closed forms, element
/// centroids inside the region for discrete fields.
fn gradient_samples(field: FieldView<'_>, region: &Region) -> Vec<(Vec2, Vec2)> {
    match field {
        FieldView::Closed(f) => {
            let limit = f.max_radius();
            polar_samples(region).into_iter().filter(|x| x.norm() < limit).map(|x| (x, f.gradient(x))).collect()
        }
        FieldView::Discrete(f) => f
            .mesh
            .geometry()
            .iter()
            .enumerate()
            .filter(|(_, g)| g.centroid.norm() <= region.radius)
            .map(|(e, g)| (g.centroid, f.element_gradient(e)))
            .collect(),
    }
}

/// Samples a pointwise condition; reports `K̂ = max lhs/base` and, when the
/// condition fails, the sample of largest ratio as witness.
pub fn check_balance(field: FieldView<'_>, spec: &BalanceSpec, region: &Region) -> Result<ConditionReport> {
    let k = spec.constant().ok_or_else(|| {
        Error::InvalidArgument(format!("`{}` is an averaged condition; use check_theorem31_average", spec.name()))
    })?;
    let samples = gradient_samples(field, region);
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples in region".into()));
    }
    let (ratio, x, p) = samples
        .par_iter()
        .map(|&(x, p)| {
            let (lhs, base) = balance_sides(spec, p).expect("pointwise condition");
            (lhs / base, x, p)
        })
        .reduce(
            || (f64::NEG_INFINITY, Vec2::zeros(), Vec2::zeros()),
            |a, b| if b.0 > a.0 || (b.0.is_nan() && !a.0.is_nan()) { b } else { a },
        );
    let (lhs, rhs) = evaluate_balance(spec, p).expect("pointwise condition");
    let witness = (!(lhs <= rhs)).then(|| Witness { point: [x.x, x.y], direction: Some([p.x, p.y]), lhs, rhs });
    Ok(ConditionReport::new(
        spec.to_string(),
        ratio,
        witness,
        format!("{region}, {} samples ({})", samples.len(), sample_kind(field)),
    )
    .with_note(format!("smallest constant on the samples: {ratio:.6e} (checked with {k})")))
}

fn sample_kind(field: FieldView<'_>) -> &'static str {
    match field {
        FieldView::Closed(_) => "polar grid",
        FieldView::Discrete(_) => "element centroids",
    }
}

/// `Γ₁^{-1/2} ρ²(Γ₁)/ρ'(Γ₁) <= c Γ₂^{1/2}` on the region.
pub fn check_theorem31_pointwise(
    field: FieldView<'_>,
    rho: &RhoFunction,
    c: f64,
    region: &Region,
) -> Result<ConditionReport> {
    require_admissible(rho)?;
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
    }
    check_balance(field, &BalanceSpec::RhoPointwise { rho: rho.clone(), c }, region)
}

fn require_admissible(rho: &RhoFunction) -> Result<()> {
    if rho_admissible(rho, RHO_CHECK_T_MAX)?.pass {
        Ok(())
    } else {
        Err(Error::WeightInadmissible(format!("rho `{rho}` is not admissible")))
    }
}

/// Log-log slope over the top half of the radii above which the averaged
/// sequence counts as growing.
pub const AVERAGE_SLOPE_TOLERANCE: f64 = 0.05;

/// The scaled integrals `I(R) = R^{-2} ∫_{B_R} Γ₁^{-1} ρ²(Γ₁)/ρ'(Γ₁) dx`
/// for a closed-form field, by Gauss–Kronrod in the radius and the
/// trapezoid rule in the angle.
fn average_integral(field: FieldView<'_>, rho: &RhoFunction, radius: f64) -> Result<f64> {
    let integrand = |p: Vec2| {
        let g1 = gamma(p, Axis::One);
        rho.rho_squared_over_prime(g1) / g1
    };
    match field {
        FieldView::Closed(f) => {
            if radius >= f.max_radius() {
                return Err(Error::InvalidArgument(format!(
                    "field `{}` is defined only for |x| < {}",
                    f.label(),
                    f.max_radius()
                )));
            }
            const ANGLES: usize = 256;
            let ring = |r: f64| {
                let s: f64 = (0..ANGLES)
                    .map(|k| {
                        let phi = TAU * k as f64 / ANGLES as f64;
                        integrand(f.gradient(Vec2::new(r * phi.cos(), r * phi.sin())))
                    })
                    .sum();
                s * TAU / ANGLES as f64 * r
            };
            let scale = ring(radius).abs().max(1.0) * radius;
            Ok(integrate(ring, 0.0, radius, 1e-10 * scale).value / (radius * radius))
        }
        FieldView::Discrete(f) => {
            let s: f64 = f
                .mesh
                .geometry()
                .iter()
                .enumerate()
                .filter(|(_, g)| g.centroid.norm() <= radius)
                .map(|(e, g)| g.area * integrand(f.element_gradient(e)))
                .sum();
            Ok(s / (radius * radius))
        }
    }
}

/// Computes `I(R)` for every radius; holds iff the least-squares slope of
/// `ln I` against `ln R` over the top half of the radii is at most
/// `AVERAGE_SLOPE_TOLERANCE`. The constant is `max I(R)`; a witness stores
/// the largest radius, the fitted slope and the tolerance.
pub fn check_theorem31_average(field: FieldView<'_>, rho: &RhoFunction, radii: &[f64]) -> Result<ConditionReport> {
    require_admissible(rho)?;
    if radii.len() < 2 || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("need at least two increasing positive radii".into()));
    }
    let values = radii.iter().map(|&r| average_integral(field, rho, r)).collect::<Result<Vec<f64>>>()?;
    let top = &radii.len() / 2;
    let tail: Vec<(f64, f64)> = radii[top.min(radii.len() - 2)..]
        .iter()
        .zip(&values[top.min(radii.len() - 2)..])
        .map(|(r, v)| (r.ln(), v.ln()))
        .collect();
    let n = tail.len() as f64;
    let mx = tail.iter().map(|t| t.0).sum::<f64>() / n;
    let my = tail.iter().map(|t| t.1).sum::<f64>() / n;
    let slope = tail.iter().map(|t| (t.0 - mx) * (t.1 - my)).sum::<f64>()
        / tail.iter().map(|t| (t.0 - mx).powi(2)).sum::<f64>();
    let last = *radii.last().unwrap();
    let witness = (!(slope <= AVERAGE_SLOPE_TOLERANCE)).then_some(Witness {
        point: [last, 0.0],
        direction: None,
        lhs: slope,
        rhs: AVERAGE_SLOPE_TOLERANCE,
    });
    let sequence = radii.iter().zip(&values).map(|(r, v)| format!("{r}: {v:.6e}")).collect::<Vec<_>>().join(", ");
    Ok(ConditionReport::new(
        format!("rho-average:rho={rho}"),
        values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        witness,
        format!("radii {radii:?}"),
    )
    .with_note(format!("I(R) = {sequence}"))
    .with_note(format!("log-log slope over the top half: {slope:.6}")))
}

/// RMS of the least-squares affine residual over the RMS of `u - mean(u)`;
/// zero for affine or constant samples.
pub fn affinity_measure(field: FieldView<'_>, region: &Region) -> Result<f64> {
    let (points, values): (Vec<Vec2>, Vec<f64>) = match field {
        FieldView::Closed(f) => {
            polar_samples(region).into_iter().filter(|x| x.norm() < f.max_radius()).map(|x| (x, f.value(x))).unzip()
        }
        FieldView::Discrete(f) => f
            .mesh
            .nodes
            .iter()
            .zip(&f.values)
            .filter(|(x, _)| x.norm() <= region.radius * (1.0 + 1e-12))
            .map(|(x, v)| (*x, *v))
            .unzip(),
    };
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let spread = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(spread > 0.0) {
        return Ok(0.0);
    }
    let [a, b, c] = affine_fit(&points, &values)
        .ok_or_else(|| Error::InvalidArgument("too few samples for an affine fit".into()))?;
    let residual =
        (points.iter().zip(&values).map(|(x, v)| (v - a * x.x - b * x.y - c).powi(2)).sum::<f64>() / n).sqrt();
    Ok(residual / spread)
}

/// Two independent directions `E₁, E₂` and the map `T` with `T eₐ = Eₐ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionFrame {
    pub e1: [f64; 2],
    pub e2: [f64; 2],
}

impl DirectionFrame {
    pub fn new(e1: Vec2, e2: Vec2) -> Result<Self> {
        let det = e1.perp(&e2);
        if !(det.abs() > 1e-14 * e1.norm() * e2.norm()) || !det.is_finite() {
            return Err(Error::SingularFrame { det });
        }
        Ok(Self { e1: [e1.x, e1.y], e2: [e2.x, e2.y] })
    }

    pub fn identity() -> Self {
        Self { e1: [1.0, 0.0], e2: [0.0, 1.0] }
    }

    /// `T = [E₁ E₂]`.
    pub fn t(&self) -> Matrix2<f64> {
        Matrix2::new(self.e1[0], self.e2[0], self.e1[1], self.e2[1])
    }

    pub fn det(&self) -> f64 {
        self.t().determinant()
    }

    /// Gram matrix `E_{αβ} = E_α · E_β`.
    pub fn gram(&self) -> Matrix2<f64> {
        self.t().transpose() * self.t()
    }

    pub fn t_inverse(&self) -> Matrix2<f64> {
        self.t().try_inverse().expect("frame checked nonsingular")
    }

    /// `M = T (E_{αβ})^{-1} = T^{-T}`, so that `f̃(p) = f(M p)`.
    pub fn density_map(&self) -> Matrix2<f64> {
        self.t_inverse().transpose()
    }

    /// The frame of `T^{-1}`.
    pub fn inverse(&self) -> Self {
        let inv = self.t_inverse();
        Self { e1: [inv[(0, 0)], inv[(1, 0)]], e2: [inv[(0, 1)], inv[(1, 1)]] }
    }
}

/// `f̃(p) = f(M p)` with `M = T^{-T}`.
#[derive(Clone)]
pub struct TransformedDensity {
    inner: Arc<dyn Density>,
    map: Matrix2<f64>,
    frame: DirectionFrame,
}

impl TransformedDensity {
    pub fn frame(&self) -> &DirectionFrame {
        &self.frame
    }
}

impl Density for TransformedDensity {
    fn eval(&self, p: Vec2) -> f64 {
        self.inner.eval(self.map * p)
    }
    fn gradient(&self, p: Vec2) -> Vec2 {
        self.map.transpose() * self.inner.gradient(self.map * p)
    }
    fn hessian(&self, p: Vec2) -> HessianForm {
        self.inner.hessian(self.map * p).congruence(&self.map)
    }
    fn label(&self) -> String {
        format!(
            "transformed({}; E1=({}, {}), E2=({}, {}))",
            self.inner.label(),
            self.frame.e1[0],
            self.frame.e1[1],
            self.frame.e2[0],
            self.frame.e2[1]
        )
    }
}

pub fn direction_transform(frame: &DirectionFrame, density: Arc<dyn Density>) -> TransformedDensity {
    TransformedDensity { inner: density, map: frame.density_map(), frame: *frame }
}

/// `ũ(x) = u(T x)`.
pub struct TransformedField<F> {
    inner: F,
    t: Matrix2<f64>,
    label: String,
}

impl<F: ClosedFormField> ClosedFormField for TransformedField<F> {
    fn value(&self, x: Vec2) -> f64 {
        self.inner.value(self.t * x)
    }
    fn gradient(&self, x: Vec2) -> Vec2 {
        self.t.transpose() * self.inner.gradient(self.t * x)
    }
    fn hessian(&self, x: Vec2) -> Option<HessianForm> {
        self.inner.hessian(self.t * x).map(|h| h.congruence(&self.t))
    }
    fn label(&self) -> String {
        self.label.clone()
    }
    fn max_radius(&self) -> f64 {
        // |T x| <= ‖T‖ |x|
        self.inner.max_radius() / self.t.norm()
    }
}

pub fn transform_field<F: ClosedFormField>(frame: &DirectionFrame, field: F) -> TransformedField<F> {
    let label = format!("transformed({})", field.label());
    TransformedField { inner: field, t: frame.t(), label }
}

/// `ũ` on the pulled-back mesh with nodes `T^{-1} y`; nodal values carry
/// over unchanged.
pub fn transform_discrete(frame: &DirectionFrame, field: &DiscreteField) -> Result<DiscreteField> {
    let mesh: Mesh = field.mesh.mapped(&frame.t_inverse())?;
    DiscreteField::new(Arc::new(mesh), field.values.clone())
}

/// Checks a pointwise condition on `ũ(x) = u(Tx)`, whose partial
/// derivatives are the derivatives of `u` along `E₁` and `E₂`; the region is
/// taken in the `x` coordinates of `ũ`. Log-balance with the roles of the
/// derivatives swapped is accepted and marked as an extension.
pub fn check_balance_in_frame(
    frame: &DirectionFrame,
    field: FieldView<'_>,
    spec: &BalanceSpec,
    region: &Region,
) -> Result<ConditionReport> {
    let report = match field {
        FieldView::Closed(f) => {
            let tf = transform_field(frame, f);
            check_balance(FieldView::Closed(&tf), spec, region)?
        }
        FieldView::Discrete(f) => {
            let tf = transform_discrete(frame, f)?;
            check_balance(FieldView::Discrete(&tf), spec, region)?
        }
    };
    let report = report.with_note(format!(
        "evaluated on u(Tx) with E1 = ({}, {}), E2 = ({}, {})",
        frame.e1[0], frame.e1[1], frame.e2[0], frame.e2[1]
    ));
    Ok(match spec {
        BalanceSpec::LogBalance { direction: BalanceDirection::TwoByOne, .. } => {
            report.with_note("extension: log-balance with the derivatives interchanged")
        }
        _ => report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityModel;
    use crate::field::{Affine, Product, Scherk};
    use approx::assert_relative_eq;

    fn closed(f: &dyn ClosedFormField) -> FieldView<'_> {
        FieldView::Closed(f)
    }

    #[test]
    fn product_fails_power_balance_on_the_axis() {
        let spec = BalanceSpec::power_balance(0.5, 10.0, BalanceDirection::OneByTwo).unwrap();
        let r = check_balance(closed(&Product), &spec, &Region::disk(100.0)).unwrap();
        assert!(!r.pass);
        let w = r.witness.unwrap();
        assert!(w.lhs > w.rhs);
        assert!(w.point[0].abs() < 1e-9 && (w.point[1].abs() - 100.0).abs() < 1e-9, "{w:?}");
        let p = Product.gradient(Vec2::new(w.point[0], w.point[1]));
        let (lhs, rhs) = evaluate_balance(&spec, p).unwrap();
        assert_eq!((lhs, rhs), (w.lhs, w.rhs));
    }

    #[test]
    fn affine_passes_with_finite_constant() {
        let f = Affine { a: 3.0, b: -2.0, c: 1.0 };
        let spec = BalanceSpec::power_balance(0.5, 10.0, BalanceDirection::OneByTwo).unwrap();
        let r = check_balance(closed(&f), &spec, &Region::disk(100.0)).unwrap();
        assert!(r.pass);
        assert_relative_eq!(r.constant, 3.0 / (2f64.sqrt() + 1.0), max_relative = 1e-12);
    }

    #[test]
    fn log_gradient_relation_passes_every_power_balance() {
        // a gradient sampler with ∂₁u = ln(1 + |∂₂u|)
        struct LogTied;
        impl ClosedFormField for LogTied {
            fn value(&self, _: Vec2) -> f64 {
                0.0
            }
            fn gradient(&self, x: Vec2) -> Vec2 {
                let v = x.x * x.x + x.y.abs() * 1e3;
                Vec2::new(v.ln_1p(), v)
            }
            fn hessian(&self, _: Vec2) -> Option<HessianForm> {
                None
            }
            fn label(&self) -> String {
                "log-tied".into()
            }
        }
        for m in [0.1, 0.5, 0.9] {
            let spec = BalanceSpec::power_balance(m, 5.0, BalanceDirection::OneByTwo).unwrap();
            assert!(check_balance(closed(&LogTied), &spec, &Region::disk(1e4)).unwrap().pass, "m = {m}");
        }
    }

    #[test]
    fn theorem31_checks() {
        let rho = RhoFunction::LogShift;
        let aff = Affine { a: 1.0, b: 1.0, c: 0.0 };
        assert!(check_theorem31_pointwise(closed(&aff), &rho, 100.0, &Region::disk(100.0)).unwrap().pass);
        let r = check_theorem31_pointwise(closed(&Product), &rho, 100.0, &Region::disk(100.0)).unwrap();
        assert!(!r.pass);
        let w = r.witness.unwrap();
        assert!(w.point[0].abs() < 1e-9);
        assert!(matches!(
            check_theorem31_pointwise(closed(&aff), &RhoFunction::Linear, 1.0, &Region::disk(1.0)),
            Err(Error::WeightInadmissible(_))
        ));

        let radii = [1.0, 2.0, 4.0, 8.0];
        let avg = check_theorem31_average(closed(&aff), &rho, &radii).unwrap();
        assert!(avg.pass);
        let g1: f64 = 2.0;
        assert_relative_eq!(
            avg.constant,
            std::f64::consts::PI * rho.rho_squared_over_prime(g1) / g1,
            max_relative = 1e-9
        );
        let grow = check_theorem31_average(closed(&Product), &rho, &[10.0, 30.0, 100.0, 300.0, 1000.0]).unwrap();
        assert!(!grow.pass, "{grow:?}");
    }

    #[test]
    fn affinity_examples() {
        let r = Region::disk(1.0);
        assert!(affinity_measure(closed(&Affine { a: 3.0, b: -2.0, c: 7.0 }), &r).unwrap() < 1e-12);
        assert!(affinity_measure(closed(&Product), &r).unwrap() >= 0.1);
        assert!(affinity_measure(closed(&Scherk), &r).unwrap() > 0.0);
        assert_eq!(affinity_measure(closed(&Affine { a: 0.0, b: 0.0, c: 7.0 }), &r).unwrap(), 0.0);
    }

    #[test]
    fn frame_algebra() {
        let f = DirectionFrame::new(Vec2::new(1.0, 1.0), Vec2::new(1.0, -1.0)).unwrap();
        assert_relative_eq!(f.gram(), Matrix2::new(2.0, 0.0, 0.0, 2.0), epsilon = 1e-15);
        assert_relative_eq!(f.density_map(), f.t() * f.gram().try_inverse().unwrap(), epsilon = 1e-15);
        assert!(matches!(
            DirectionFrame::new(Vec2::new(1.0, 2.0), Vec2::new(2.0, 4.0)),
            Err(Error::SingularFrame { .. })
        ));
    }

    #[test]
    fn identity_and_inverse_frames() {
        let d: Arc<dyn Density> = Arc::new(DensityModel::NearlyLinear);
        let id = direction_transform(&DirectionFrame::identity(), d.clone());
        let frame = DirectionFrame::new(Vec2::new(2.0, 0.5), Vec2::new(-0.3, 1.2)).unwrap();
        let there = Arc::new(direction_transform(&frame, d.clone()));
        let back = direction_transform(&frame.inverse(), there);
        for p in [Vec2::new(0.3, -2.0), Vec2::new(40.0, 7.0)] {
            assert_eq!(id.eval(p), d.eval(p));
            assert_relative_eq!(back.eval(p), d.eval(p), max_relative = 1e-10);
        }
    }

    #[test]
    fn frame_balance_uses_directional_derivatives() {
        // u = x₁ + x₂ in the frame (1,1), (1,-1) has ∂₁ũ = 2, ∂₂ũ = 0
        let f = Affine { a: 1.0, b: 1.0, c: 0.0 };
        let frame = DirectionFrame::new(Vec2::new(1.0, 1.0), Vec2::new(1.0, -1.0)).unwrap();
        let spec = BalanceSpec::log_balance(1.0, BalanceDirection::TwoByOne).unwrap();
        let r = check_balance_in_frame(&frame, closed(&f), &spec, &Region::disk(10.0)).unwrap();
        assert!(r.pass);
        assert_eq!(r.constant, 0.0);
        assert!(r.notes.iter().any(|n| n.starts_with("extension")));
        let spec = BalanceSpec::log_balance(1.0, BalanceDirection::OneByTwo).unwrap();
        let r = check_balance_in_frame(&frame, closed(&f), &spec, &Region::disk(10.0)).unwrap();
        let l = 3f64.ln();
        assert_relative_eq!(r.constant, 2.0 * l * l, max_relative = 1e-12);
    }

    #[test]
    fn spec_round_trip() {
        for s in [
            "power-balance:m=0.5,K=10,dir=1",
            "log-balance:K=3,dir=2",
            "rho-pointwise:rho=log-shift,c=5",
            "rho-average:rho=sqrt",
        ] {
            assert_eq!(s.parse::<BalanceSpec>().unwrap().to_string(), s);
        }
        assert!("power-balance:m=1,K=10".parse::<BalanceSpec>().is_err());
        assert!("power-balance:m=0.5,K=0".parse::<BalanceSpec>().is_err());
        assert!("disk:R=-1".parse::<Region>().is_err());
    }
}
