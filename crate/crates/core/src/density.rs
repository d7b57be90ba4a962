//! Energy densities `f: R² -> R`, their derivatives, and sampled validators
//! for the structural hypotheses (ellipticity, nearly linear and linear
//! Hessian decay).
//!
//! Every built-in density is radial, `f(p) = g(|p|)`. The reparametrization
//! `F(t) = g(√t)` is used for the growth exponent `λ(t) = 2F''(t)/F'(t)`;
//! each built-in profile supplies closed forms for `λ` and `1 + tλ` that stay
//! accurate where the generic expressions cancel.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::report::{ConditionReport, Witness};
use crate::spec_string::SpecString;

pub type Vec2 = Vector2<f64>;

/// Symmetric 2×2 quadratic form `q ↦ a11 q1² + 2 a12 q1 q2 + a22 q2²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianForm {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl HessianForm {
    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub fn scaled_identity(c: f64) -> Self {
        Self::new(c, 0.0, c)
    }

    /// Symmetric part of `m`.
    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self::new(m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)])
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.a11, self.a12, self.a12, self.a22)
    }

    /// Bilinear form `A(v, w)`.
    #[inline]
    pub fn apply(&self, v: &Vec2, w: &Vec2) -> f64 {
        self.a11 * v.x * w.x + self.a12 * (v.x * w.y + v.y * w.x) + self.a22 * v.y * w.y
    }

    #[inline]
    pub fn quadratic(&self, q: &Vec2) -> f64 {
        self.apply(q, q)
    }

    #[inline]
    pub fn mul_vec(&self, v: &Vec2) -> Vec2 {
        Vec2::new(self.a11 * v.x + self.a12 * v.y, self.a12 * v.x + self.a22 * v.y)
    }

    /// Eigenvalues `(smallest, largest)` in closed form.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.a11 + self.a22);
        let half_gap = (0.5 * (self.a11 - self.a22)).hypot(self.a12);
        let (hi, lo) = (mean + half_gap, mean - half_gap);
        // lo = det / hi avoids cancellation when the spectrum is very spread out
        let det = self.a11 * self.a22 - self.a12 * self.a12;
        if hi > 0.0 && lo > 0.0 && lo < 1e-3 * hi {
            (det / hi, hi)
        } else {
            (lo, hi)
        }
    }

    /// Operator norm, i.e. the largest absolute eigenvalue.
    pub fn operator_norm(&self) -> f64 {
        let (lo, hi) = self.eigenvalues();
        lo.abs().max(hi.abs())
    }

    /// The pulled-back form `(v, w) ↦ A(Mv, Mw)`, i.e. `Mᵀ A M`.
    pub fn congruence(&self, m: &Matrix2<f64>) -> Self {
        Self::from_matrix(&(m.transpose() * self.to_matrix() * m))
    }
}

/// A twice differentiable energy density on the plane.
pub trait Density: Send + Sync {
    fn eval(&self, p: Vec2) -> f64;
    fn gradient(&self, p: Vec2) -> Vec2;
    fn hessian(&self, p: Vec2) -> HessianForm;

    /// Radial profile `g` with `f(p) = g(|p|)`, when the density has one.
    fn radial_profile(&self) -> Option<&dyn RadialProfile> {
        None
    }

    fn label(&self) -> String;
}

/// Radial profile `g` of a density `f(p) = g(|p|)`.
///
/// Implementors must keep `g'(0) = 0` and `g'' > 0`. The provided methods
/// are generic formulas; the built-in profiles override them with
/// cancellation-free closed forms.
pub trait RadialProfile: Send + Sync + fmt::Debug {
    fn g(&self, r: f64) -> f64;
    fn g_prime(&self, r: f64) -> f64;
    fn g_second(&self, r: f64) -> f64;

    /// `g'(r)/r`, continuous at the origin where it equals `g''(0)`.
    fn g_prime_over_r(&self, r: f64) -> f64 {
        if r > 0.0 {
            self.g_prime(r) / r
        } else {
            self.g_second(0.0)
        }
    }

    /// `1 + tλ(t)`, which equals `r g''(r) / g'(r)` at `r = √t`.
    fn one_plus_t_lambda(&self, t: f64) -> f64 {
        let r = t.sqrt();
        self.g_second(r) / self.g_prime_over_r(r)
    }

    /// `λ(t) = 2F''(t)/F'(t)` for `F(t) = g(√t)`.
    fn lambda(&self, t: f64) -> f64 {
        let r = t.sqrt();
        (r * self.g_second(r) - self.g_prime(r)) / (r * r * self.g_prime(r))
    }
}

fn radial_eval(profile: &dyn RadialProfile, p: Vec2) -> f64 {
    profile.g(p.norm())
}

fn radial_gradient(profile: &dyn RadialProfile, p: Vec2) -> Vec2 {
    p * profile.g_prime_over_r(p.norm())
}

/// `D²f(p) = (g'/r) Id + (g'' - g'/r) p̂ p̂ᵀ`.
fn radial_hessian(profile: &dyn RadialProfile, p: Vec2) -> HessianForm {
    let r = p.norm();
    let tangential = profile.g_prime_over_r(r);
    if r == 0.0 {
        return HessianForm::scaled_identity(tangential);
    }
    let radial = profile.g_second(r);
    let e = p / r;
    let d = radial - tangential;
    HessianForm::new(tangential + d * e.x * e.x, d * e.x * e.y, tangential + d * e.y * e.y)
}

/// `g(r) = √(1 + r²)`.
#[derive(Debug, Clone, Copy)]
pub struct MinimalSurfaceProfile;

impl RadialProfile for MinimalSurfaceProfile {
    fn g(&self, r: f64) -> f64 {
        1f64.hypot(r)
    }
    fn g_prime(&self, r: f64) -> f64 {
        r / 1f64.hypot(r)
    }
    fn g_second(&self, r: f64) -> f64 {
        (1.0 + r * r).powf(-1.5)
    }
    fn g_prime_over_r(&self, r: f64) -> f64 {
        1.0 / 1f64.hypot(r)
    }
    fn one_plus_t_lambda(&self, t: f64) -> f64 {
        1.0 / (1.0 + t)
    }
    fn lambda(&self, t: f64) -> f64 {
        -1.0 / (1.0 + t)
    }
}

/// `g(r) = (1 + r²)^{s/2}`, `s > 1`.
#[derive(Debug, Clone, Copy)]
pub struct PowerProfile {
    pub s: f64,
}

impl RadialProfile for PowerProfile {
    fn g(&self, r: f64) -> f64 {
        (1.0 + r * r).powf(0.5 * self.s)
    }
    fn g_prime(&self, r: f64) -> f64 {
        r * self.g_prime_over_r(r)
    }
    fn g_second(&self, r: f64) -> f64 {
        let t = r * r;
        self.s * (1.0 + t).powf(0.5 * self.s - 2.0) * (1.0 + (self.s - 1.0) * t)
    }
    fn g_prime_over_r(&self, r: f64) -> f64 {
        self.s * (1.0 + r * r).powf(0.5 * self.s - 1.0)
    }
    fn one_plus_t_lambda(&self, t: f64) -> f64 {
        (1.0 + (self.s - 1.0) * t) / (1.0 + t)
    }
    fn lambda(&self, t: f64) -> f64 {
        (self.s - 2.0) / (1.0 + t)
    }
}

// Pieces of h(ρ) = ρ ln(1 + ρ), shared by the nearly linear profile and its
// regularization g(r) = h(√(ε + r²)).
mod nearly_linear {
    pub fn h(rho: f64) -> f64 {
        rho * rho.ln_1p()
    }

    pub fn h_prime(rho: f64) -> f64 {
        rho.ln_1p() + rho / (1.0 + rho)
    }

    pub fn h_second(rho: f64) -> f64 {
        (2.0 + rho) / ((1.0 + rho) * (1.0 + rho))
    }

    /// h'(ρ)/ρ, tending to 2 at the origin.
    pub fn h_prime_over_rho(rho: f64) -> f64 {
        let log_ratio = if rho < 1e-5 { 1.0 - rho / 2.0 + rho * rho / 3.0 } else { rho.ln_1p() / rho };
        log_ratio + 1.0 / (1.0 + rho)
    }

    /// ρ h''(ρ) - h'(ρ) = ρ/(1+ρ)² - ln(1+ρ).
    pub fn curvature_defect(rho: f64) -> f64 {
        if rho < 1e-4 {
            let r2 = rho * rho;
            r2 * (-1.5 + rho * (8.0 / 3.0 - 3.75 * rho))
        } else {
            rho / ((1.0 + rho) * (1.0 + rho)) - rho.ln_1p()
        }
    }

    /// λ of F(t) = h(√t): (ρ h'' - h') / (ρ² h').
    pub fn lambda(t: f64) -> f64 {
        let rho = t.sqrt();
        curvature_defect(rho) / (rho * rho * rho * h_prime_over_rho(rho))
    }

    /// 1 + tλ = ρ h''(ρ)/h'(ρ).
    pub fn one_plus_t_lambda(t: f64) -> f64 {
        let rho = t.sqrt();
        h_second(rho) / h_prime_over_rho(rho)
    }
}

/// `g(r) = r ln(1 + r)`.
#[derive(Debug, Clone, Copy)]
pub struct NearlyLinearProfile;

impl RadialProfile for NearlyLinearProfile {
    fn g(&self, r: f64) -> f64 {
        nearly_linear::h(r)
    }
    fn g_prime(&self, r: f64) -> f64 {
        nearly_linear::h_prime(r)
    }
    fn g_second(&self, r: f64) -> f64 {
        nearly_linear::h_second(r)
    }
    fn g_prime_over_r(&self, r: f64) -> f64 {
        nearly_linear::h_prime_over_rho(r)
    }
    fn one_plus_t_lambda(&self, t: f64) -> f64 {
        nearly_linear::one_plus_t_lambda(t)
    }
    fn lambda(&self, t: f64) -> f64 {
        nearly_linear::lambda(t)
    }
}

/// `g(r) = ρ ln(1 + ρ)` with `ρ = √(ε + r²)`, so that `F_ε(t) = F_0(t + ε)`.
#[derive(Debug, Clone, Copy)]
pub struct RegularizedProfile {
    pub eps: f64,
}

impl RegularizedProfile {
    fn rho(&self, r: f64) -> f64 {
        (self.eps + r * r).sqrt()
    }
}

impl RadialProfile for RegularizedProfile {
    fn g(&self, r: f64) -> f64 {
        nearly_linear::h(self.rho(r))
    }
    fn g_prime(&self, r: f64) -> f64 {
        r * self.g_prime_over_r(r)
    }
    fn g_second(&self, r: f64) -> f64 {
        let rho = self.rho(r);
        let r2 = r * r;
        nearly_linear::h_second(rho) * r2 / (rho * rho) + nearly_linear::h_prime_over_rho(rho) * self.eps / (rho * rho)
    }
    fn g_prime_over_r(&self, r: f64) -> f64 {
        nearly_linear::h_prime_over_rho(self.rho(r))
    }
    fn one_plus_t_lambda(&self, t: f64) -> f64 {
        1.0 + t * nearly_linear::lambda(t + self.eps)
    }
    fn lambda(&self, t: f64) -> f64 {
        nearly_linear::lambda(t + self.eps)
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied profile given as the triple `(g, g', g'')`.
#[derive(Clone)]
pub struct CustomProfile {
    pub name: String,
    pub g: ScalarFn,
    pub g_prime: ScalarFn,
    pub g_second: ScalarFn,
}

impl CustomProfile {
    pub fn new(
        name: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_second: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), g: Arc::new(g), g_prime: Arc::new(g_prime), g_second: Arc::new(g_second) }
    }
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProfile").field("name", &self.name).finish()
    }
}

impl RadialProfile for CustomProfile {
    fn g(&self, r: f64) -> f64 {
        (self.g)(r)
    }
    fn g_prime(&self, r: f64) -> f64 {
        (self.g_prime)(r)
    }
    fn g_second(&self, r: f64) -> f64 {
        (self.g_second)(r)
    }
}

/// The densities the lab knows about.
#[derive(Debug, Clone)]
pub enum DensityModel {
    MinimalSurface,
    Power { s: f64 },
    NearlyLinear,
    Regularized { eps: f64 },
    CustomRadial(CustomProfile),
}

impl DensityModel {
    pub fn power(s: f64) -> Result<Self> {
        if !(s > 1.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("power density needs s > 1, got {s}")));
        }
        Ok(Self::Power { s })
    }

    pub fn regularized(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("regularized density needs eps > 0, got {eps}")));
        }
        Ok(Self::Regularized { eps })
    }

    pub fn custom(profile: CustomProfile) -> Self {
        Self::CustomRadial(profile)
    }

    /// The built-in densities exercised by the test suites.
    pub fn builtins() -> Vec<Self> {
        vec![
            Self::MinimalSurface,
            Self::Power { s: 1.5 },
            Self::Power { s: 2.0 },
            Self::Power { s: 3.0 },
            Self::NearlyLinear,
            Self::Regularized { eps: 0.1 },
        ]
    }

    pub fn profile(&self) -> &dyn RadialProfile {
        // The unit-like profiles are zero-sized; parameterized ones are built
        // on the fly in `with_profile`.
        match self {
            Self::MinimalSurface => &MinimalSurfaceProfile,
            Self::NearlyLinear => &NearlyLinearProfile,
            Self::CustomRadial(p) => p,
            Self::Power { .. } | Self::Regularized { .. } => self,
        }
    }

    /// True for densities comparable to `|p| ln(1 + |p|)` at infinity.
    pub fn is_nearly_linear(&self) -> bool {
        matches!(self, Self::NearlyLinear | Self::Regularized { .. })
    }
}

impl PartialEq for DensityModel {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl RadialProfile for DensityModel {
    fn g(&self, r: f64) -> f64 {
        match self {
            Self::Power { s } => PowerProfile { s: *s }.g(r),
            Self::Regularized { eps } => RegularizedProfile { eps: *eps }.g(r),
            other => other.profile().g(r),
        }
    }
    fn g_prime(&self, r: f64) -> f64 {
        match self {
            Self::Power { s } => PowerProfile { s: *s }.g_prime(r),
            Self::Regularized { eps } => RegularizedProfile { eps: *eps }.g_prime(r),
            other => other.profile().g_prime(r),
        }
    }
    fn g_second(&self, r: f64) -> f64 {
        match self {
            Self::Power { s } => PowerProfile { s: *s }.g_second(r),
            Self::Regularized { eps } => RegularizedProfile { eps: *eps }.g_second(r),
            other => other.profile().g_second(r),
        }
    }
    fn g_prime_over_r(&self, r: f64) -> f64 {
        match self {
            Self::Power { s } => PowerProfile { s: *s }.g_prime_over_r(r),
            Self::Regularized { eps } => RegularizedProfile { eps: *eps }.g_prime_over_r(r),
            other => other.profile().g_prime_over_r(r),
        }
    }
    fn one_plus_t_lambda(&self, t: f64) -> f64 {
        match self {
            Self::Power { s } => PowerProfile { s: *s }.one_plus_t_lambda(t),
            Self::Regularized { eps } => RegularizedProfile { eps: *eps }.one_plus_t_lambda(t),
            other => other.profile().one_plus_t_lambda(t),
        }
    }
    fn lambda(&self, t: f64) -> f64 {
        match self {
            Self::Power { s } => PowerProfile { s: *s }.lambda(t),
            Self::Regularized { eps } => RegularizedProfile { eps: *eps }.lambda(t),
            other => other.profile().lambda(t),
        }
    }
}

impl Density for DensityModel {
    fn eval(&self, p: Vec2) -> f64 {
        radial_eval(self, p)
    }
    fn gradient(&self, p: Vec2) -> Vec2 {
        radial_gradient(self, p)
    }
    fn hessian(&self, p: Vec2) -> HessianForm {
        radial_hessian(self, p)
    }
    fn radial_profile(&self) -> Option<&dyn RadialProfile> {
        Some(self)
    }
    fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MinimalSurface => write!(f, "minimal-surface"),
            Self::Power { s } => write!(f, "power:s={s}"),
            Self::NearlyLinear => write!(f, "nearly-linear"),
            Self::Regularized { eps } => write!(f, "regularized:eps={eps}"),
            Self::CustomRadial(p) => write!(f, "custom:{}", p.name),
        }
    }
}

impl FromStr for DensityModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        match spec.name {
            "minimal-surface" | "minimal" => {
                spec.expect_keys(&[])?;
                Ok(Self::MinimalSurface)
            }
            "nearly-linear" => {
                spec.expect_keys(&[])?;
                Ok(Self::NearlyLinear)
            }
            "power" => {
                spec.expect_keys(&["s"])?;
                Self::power(spec.number("s")?)
            }
            "regularized" => {
                spec.expect_keys(&["eps"])?;
                Self::regularized(spec.number("eps")?)
            }
            other => Err(Error::Parse(format!("unknown density `{other}`"))),
        }
    }
}

impl Serialize for DensityModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DensityModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// `λ(t) = 2F''(t)/F'(t)` for the reparametrized profile `F(t) = g(√t)`.
pub fn radial_lambda(density: &dyn Density, t: f64) -> Result<f64> {
    let profile = density.radial_profile().ok_or_else(|| Error::NonRadialDensity(density.label()))?;
    if !(t >= 0.0) {
        return Err(Error::DomainError { what: "radial_lambda", value: t });
    }
    if !(profile.g_prime_over_r(t.sqrt()) > 0.0) {
        return Err(Error::DegenerateProfile { t, reason: "f'(t) vanishes" });
    }
    let lambda = profile.lambda(t);
    if !lambda.is_finite() {
        return Err(Error::DegenerateProfile { t, reason: "λ(t) is not finite" });
    }
    Ok(lambda)
}

/// Sampling plan for the hypothesis validators: the origin plus log-spaced
/// radii in `[r_min, r_max]` along evenly spaced directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSampling {
    pub r_min: f64,
    pub r_max: f64,
    pub radii_per_decade: usize,
    pub directions: usize,
}

impl Default for HypothesisSampling {
    fn default() -> Self {
        Self { r_min: 1e-3, r_max: 1e6, radii_per_decade: 8, directions: 16 }
    }
}

impl HypothesisSampling {
    pub fn with_r_max(r_max: f64) -> Self {
        Self { r_max, ..Self::default() }
    }
}

/// Points `p` and unit test directions `q` for the quadratic-form checks.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub points: Vec<Vec2>,
    pub directions: Vec<Vec2>,
}

impl SampleGrid {
    /// `p` runs over the origin and `directions` rays at log-spaced radii;
    /// `q` runs over `directions` unit vectors in the half circle, so the
    /// principal axes of every radial density are hit exactly.
    pub fn log_polar(sampling: &HypothesisSampling) -> Result<Self> {
        let HypothesisSampling { r_min, r_max, radii_per_decade, directions } = *sampling;
        if !(r_min > 0.0 && r_max > r_min) || radii_per_decade == 0 || directions == 0 {
            return Err(Error::InvalidArgument(format!("bad sampling plan {sampling:?}")));
        }
        let radii = log_spaced(r_min, r_max, radii_per_decade);
        let mut points = vec![Vec2::zeros()];
        for &r in &radii {
            for k in 0..directions {
                let phi = std::f64::consts::TAU * k as f64 / directions as f64;
                points.push(Vec2::new(r * phi.cos(), r * phi.sin()));
            }
        }
        let directions = (0..directions)
            .map(|k| {
                let phi = std::f64::consts::PI * k as f64 / directions as f64;
                Vec2::new(phi.cos(), phi.sin())
            })
            .collect();
        Ok(Self { points, directions })
    }

    pub fn from_points(points: Vec<Vec2>, directions: Vec<Vec2>) -> Self {
        Self { points, directions }
    }

    fn check(&self, need_directions: bool) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument("empty sample grid".into()));
        }
        if need_directions && (self.directions.is_empty() || self.directions.iter().any(|q| q.norm() == 0.0)) {
            return Err(Error::InvalidArgument("sample directions must be nonzero".into()));
        }
        Ok(())
    }

    fn r_max(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// Log-spaced values from `lo` to `hi` inclusive with the given density.
pub(crate) fn log_spaced(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=n).map(|i| lo * 10f64.powf(decades * i as f64 / n as f64)).collect()
}

/// Relative change of a fitted constant under which it counts as stable.
const STABILITY_TOLERANCE: f64 = 0.01;

/// Checks `D²f(p)(q,q) > 0` on the grid; the constant is the minimum of
/// `D²f(p)(q,q)/|q|²`.
pub fn validate_ellipticity(density: &dyn Density, grid: &SampleGrid) -> Result<ConditionReport> {
    grid.check(true)?;
    let (value, p, q) = grid
        .points
        .par_iter()
        .map(|p| {
            let h = density.hessian(*p);
            grid.directions
                .iter()
                .map(|q| (h.quadratic(q) / q.norm_squared(), *p, *q))
                .fold((f64::INFINITY, *p, grid.directions[0]), min_by_value)
        })
        .reduce(|| (f64::INFINITY, Vec2::zeros(), grid.directions[0]), min_by_value);
    let witness = (!(value > 0.0)).then(|| Witness {
        point: [p.x, p.y],
        direction: Some([q.x, q.y]),
        lhs: 0.0,
        rhs: value * q.norm_squared(),
    });
    Ok(ConditionReport::new("ellipticity", value, witness, format!("|p| <= {:e}", grid.r_max())))
}

fn min_by_value(a: (f64, Vec2, Vec2), b: (f64, Vec2, Vec2)) -> (f64, Vec2, Vec2) {
    // NaN counts as a violation
    if b.0 < a.0 || b.0.is_nan() && !a.0.is_nan() {
        b
    } else {
        a
    }
}

fn max_by_value(a: (f64, Vec2, Vec2), b: (f64, Vec2, Vec2)) -> (f64, Vec2, Vec2) {
    if b.0 > a.0 || b.0.is_nan() && !a.0.is_nan() {
        b
    } else {
        a
    }
}

/// Shared logic of the two decay validators: `ratio(p, q)` is the smallest
/// constant the sample forces, `bound(p)` the decay profile it multiplies.
fn fit_decay_constant(
    hypothesis: &str,
    grid: &SampleGrid,
    directions: &[Vec2],
    ratio: impl Fn(&Vec2, &Vec2) -> f64 + Sync,
) -> ConditionReport {
    let r_max = grid.r_max();
    let sub_max = r_max / 10.0;
    let sup_over = |lo: f64, hi: f64| {
        grid.points
            .par_iter()
            .filter(|p| {
                let r = p.norm();
                r >= lo && r <= hi
            })
            .map(|p| {
                directions
                    .iter()
                    .map(|q| (ratio(p, q), *p, *q))
                    .fold((f64::NEG_INFINITY, *p, directions[0]), max_by_value)
            })
            .reduce(|| (f64::NEG_INFINITY, Vec2::zeros(), directions[0]), max_by_value)
    };
    let overall = sup_over(0.0, f64::INFINITY);
    let sub = sup_over(1.0, sub_max);
    let full = sup_over(1.0, r_max);
    let stable = overall.0.is_finite()
        && sub.0.is_finite()
        && full.0.is_finite()
        && full.0 <= sub.0 * (1.0 + STABILITY_TOLERANCE);
    let witness = if stable {
        None
    } else {
        // the sample that pushes the constant past the one fitted on the
        // smaller range
        let (value, p, q) = if full.0.is_finite() { full } else { overall };
        Some(Witness { point: [p.x, p.y], direction: Some([q.x, q.y]), lhs: value, rhs: sub.0 })
    };
    ConditionReport::new(
        hypothesis,
        overall.0,
        witness,
        format!("|p| <= {r_max:e}; stability [1, {sub_max:e}] vs [1, {r_max:e}]"),
    )
    .with_note(format!("fitted constant on [1, {sub_max:e}]: {:.6e}; on [1, {r_max:e}]: {:.6e}", sub.0, full.0))
}

/// Fits the smallest `λ̂` with `D²f(p)(q,q) <= λ̂ ln(2+|p|)/(1+|p|) |q|²` on the
/// grid and passes iff `λ̂` is stable under extending the radius range tenfold.
///
/// A failing report's witness stores the sample's ratio as `lhs` and the
/// constant fitted on the smaller range as `rhs`.
pub fn validate_nearly_linear_bound(density: &dyn Density, grid: &SampleGrid) -> Result<ConditionReport> {
    grid.check(true)?;
    Ok(fit_decay_constant("nearly-linear-bound", grid, &grid.directions, |p, q| {
        let r = p.norm();
        let bound = (2.0 + r).ln() / (1.0 + r);
        density.hessian(*p).quadratic(q) / (q.norm_squared() * bound)
    }))
}

/// Fits the smallest `Λ̂` with `|D²f(p)| <= Λ̂/(1+|p|)` (operator norm) and
/// passes iff `Λ̂` is stable under extending the radius range tenfold.
pub fn validate_linear_bound(density: &dyn Density, grid: &SampleGrid) -> Result<ConditionReport> {
    grid.check(false)?;
    let dummy = [Vec2::x()];
    Ok(fit_decay_constant("linear-bound", grid, &dummy, |p, _| density.hessian(*p).operator_norm() * (1.0 + p.norm())))
}

/// All three validators with the default sampling plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisSummary {
    pub density: String,
    pub ellipticity: ConditionReport,
    pub nearly_linear: ConditionReport,
    pub linear: ConditionReport,
}

pub fn validate_all(density: &dyn Density, sampling: &HypothesisSampling) -> Result<HypothesisSummary> {
    let grid = SampleGrid::log_polar(sampling)?;
    Ok(HypothesisSummary {
        density: density.label(),
        ellipticity: validate_ellipticity(density, &grid)?,
        nearly_linear: validate_nearly_linear_bound(density, &grid)?,
        linear: validate_linear_bound(density, &grid)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(DensityModel::NearlyLinear.eval(v(0.0, 0.0)), 0.0);
        assert_eq!(DensityModel::MinimalSurface.eval(v(0.0, 0.0)), 1.0);
        assert_relative_eq!(DensityModel::Power { s: 2.0 }.eval(v(3.0, 4.0)), 26.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(DensityModel::MinimalSurface.gradient(v(0.0, 0.0)), v(0.0, 0.0));
        let g = DensityModel::Power { s: 2.0 }.gradient(v(3.0, 4.0));
        assert_relative_eq!(g, v(6.0, 8.0), epsilon = 1e-12);
        let g = DensityModel::MinimalSurface.gradient(v(0.0, 1.0));
        assert_relative_eq!(g, v(0.0, 0.5f64.sqrt()), epsilon = 1e-15);
    }

    #[test]
    fn hessian_examples() {
        for p in [v(0.0, 0.0), v(3.0, -1.0), v(1e3, 2e3)] {
            let h = DensityModel::Power { s: 2.0 }.hessian(p);
            assert_relative_eq!(h.a11, 2.0, epsilon = 1e-12);
            assert_relative_eq!(h.a22, 2.0, epsilon = 1e-12);
            assert!(h.a12.abs() < 1e-12);
        }
        assert_eq!(DensityModel::NearlyLinear.hessian(v(0.0, 0.0)), HessianForm::scaled_identity(2.0));
        let h = DensityModel::MinimalSurface.hessian(v(1.0, 0.0));
        assert_relative_eq!(h.a11, 2f64.powf(-1.5), epsilon = 1e-15);
        assert_relative_eq!(h.a22, 2f64.powf(-0.5), epsilon = 1e-15);
        assert_eq!(h.a12, 0.0);
    }

    #[test]
    fn lambda_closed_forms() {
        for t in [0.0, 0.5, 1.0, 10.0, 1e6] {
            assert_relative_eq!(
                radial_lambda(&DensityModel::MinimalSurface, t).unwrap(),
                -1.0 / (1.0 + t),
                max_relative = 1e-14
            );
            assert_eq!(radial_lambda(&DensityModel::Power { s: 2.0 }, t).unwrap(), 0.0);
            assert_relative_eq!(
                radial_lambda(&DensityModel::Power { s: 3.5 }, t).unwrap(),
                1.5 / (1.0 + t),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn lambda_errors() {
        struct Flat;
        impl Density for Flat {
            fn eval(&self, _: Vec2) -> f64 {
                0.0
            }
            fn gradient(&self, _: Vec2) -> Vec2 {
                Vec2::zeros()
            }
            fn hessian(&self, _: Vec2) -> HessianForm {
                HessianForm::scaled_identity(0.0)
            }
            fn label(&self) -> String {
                "flat".into()
            }
        }
        assert!(matches!(radial_lambda(&Flat, 1.0), Err(Error::NonRadialDensity(_))));

        let degenerate = DensityModel::custom(CustomProfile::new("linear", |r| r, |_| 0.0, |_| 0.0));
        assert!(matches!(radial_lambda(&degenerate, 4.0), Err(Error::DegenerateProfile { .. })));
        // nearly linear λ blows up like -0.75/√t at the origin
        assert!(radial_lambda(&DensityModel::NearlyLinear, 0.0).is_err());
    }

    #[test]
    fn nearly_linear_small_radius_branches_are_continuous() {
        let p = NearlyLinearProfile;
        for r in [9.99e-6, 1.001e-5, 9.99e-5, 1.001e-4] {
            let direct = (r / ((1.0 + r) * (1.0 + r)) - f64::ln_1p(r)) / (r * r);
            let series = nearly_linear::curvature_defect(r) / (r * r);
            assert_relative_eq!(direct, series, max_relative = 1e-6);
            assert_relative_eq!(p.g_prime_over_r(r), p.g_prime(r) / r, max_relative = 1e-9);
        }
    }

    #[test]
    fn regularized_is_a_shift_of_the_nearly_linear_profile() {
        let eps = 0.1;
        let reg = DensityModel::Regularized { eps };
        for t in [0.0, 0.3, 2.0, 1e4] {
            assert_relative_eq!(reg.lambda(t), DensityModel::NearlyLinear.lambda(t + eps), max_relative = 1e-14);
            let r = f64::sqrt(t);
            let rho = f64::sqrt(t + eps);
            assert_relative_eq!(reg.g(r), rho * rho.ln_1p(), max_relative = 1e-14);
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        for spec in ["minimal-surface", "power:s=1.5", "nearly-linear", "regularized:eps=0.1"] {
            let d: DensityModel = spec.parse().unwrap();
            assert_eq!(d.to_string(), spec);
        }
        assert!("power:s=1".parse::<DensityModel>().is_err());
        assert!("regularized:eps=-1".parse::<DensityModel>().is_err());
        assert!("cubic".parse::<DensityModel>().is_err());
        let json = serde_json::to_string(&DensityModel::Power { s: 3.0 }).unwrap();
        assert_eq!(json, "\"power:s=3\"");
    }

    #[test]
    fn ellipticity_examples() {
        let grid = SampleGrid::log_polar(&HypothesisSampling::default()).unwrap();
        let report = validate_ellipticity(&DensityModel::Power { s: 2.0 }, &grid).unwrap();
        assert!(report.pass);
        assert_relative_eq!(report.constant, 2.0, max_relative = 1e-12);

        let grid10 = SampleGrid::log_polar(&HypothesisSampling::with_r_max(10.0)).unwrap();
        let report = validate_ellipticity(&DensityModel::MinimalSurface, &grid10).unwrap();
        assert!(report.pass);
        // smallest eigenvalue (1 + |p|²)^{-3/2} is attained at |p| = 10
        assert_relative_eq!(report.constant, 101f64.powf(-1.5), max_relative = 1e-9);

        let nonconvex = DensityModel::custom(CustomProfile::new(
            "r^2-r^4",
            |r| r * r - r.powi(4),
            |r| 2.0 * r - 4.0 * r.powi(3),
            |r| 2.0 - 12.0 * r * r,
        ));
        let near_one = SampleGrid::from_points(
            (0..8).map(|k| v(0.9 + 0.03 * k as f64, 0.0)).collect(),
            vec![v(1.0, 0.0), v(0.0, 1.0)],
        );
        let report = validate_ellipticity(&nonconvex, &near_one).unwrap();
        assert!(!report.pass);
        let w = report.witness.unwrap();
        assert!(w.lhs >= w.rhs);
        let p = v(w.point[0], w.point[1]);
        let q = v(w.direction.unwrap()[0], w.direction.unwrap()[1]);
        assert!(nonconvex.hessian(p).quadratic(&q) <= 0.0);
    }

    #[test]
    fn validators_reject_bad_grids() {
        let empty = SampleGrid::from_points(vec![], vec![v(1.0, 0.0)]);
        assert!(validate_ellipticity(&DensityModel::MinimalSurface, &empty).is_err());
        let zero_q = SampleGrid::from_points(vec![v(1.0, 0.0)], vec![v(0.0, 0.0)]);
        assert!(validate_nearly_linear_bound(&DensityModel::MinimalSurface, &zero_q).is_err());
    }

    #[test]
    fn nearly_linear_constant_at_origin() {
        let grid = SampleGrid::from_points(vec![v(0.0, 0.0)], vec![v(1.0, 0.0)]);
        let report = validate_nearly_linear_bound(&DensityModel::NearlyLinear, &grid).unwrap();
        assert_relative_eq!(report.constant, 2.0 / 2f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn hypothesis_dichotomy() {
        let grid = SampleGrid::log_polar(&HypothesisSampling::default()).unwrap();
        let grid_1e4 = SampleGrid::log_polar(&HypothesisSampling::with_r_max(1e4)).unwrap();

        let ms = &DensityModel::MinimalSurface;
        let lin = validate_linear_bound(ms, &grid).unwrap();
        assert!(lin.pass, "{lin:?}");
        assert!(lin.constant <= 2.0);
        assert!(validate_nearly_linear_bound(ms, &grid).unwrap().pass);

        let nl = &DensityModel::NearlyLinear;
        assert!(validate_nearly_linear_bound(nl, &grid).unwrap().pass);
        let lin = validate_linear_bound(nl, &grid_1e4).unwrap();
        assert!(!lin.pass);
        let w = lin.witness.unwrap();
        assert!(w.lhs > w.rhs);

        for s in [2.0, 3.0] {
            let pw = DensityModel::Power { s };
            assert!(!validate_nearly_linear_bound(&pw, &grid).unwrap().pass);
            assert!(!validate_linear_bound(&pw, &grid).unwrap().pass);
        }
    }

    #[test]
    fn eigenvalues_and_congruence() {
        let h = HessianForm::new(2.0, 1.0, 2.0);
        let (lo, hi) = h.eigenvalues();
        assert_relative_eq!(lo, 1.0, epsilon = 1e-14);
        assert_relative_eq!(hi, 3.0, epsilon = 1e-14);
        assert_relative_eq!(h.operator_norm(), 3.0, epsilon = 1e-14);

        let m = Matrix2::new(1.0, 2.0, 0.0, 1.0);
        let pulled = h.congruence(&m);
        let (a, b) = (v(0.3, -1.2), v(2.0, 0.7));
        assert_relative_eq!(pulled.apply(&a, &b), h.apply(&(m * a), &(m * b)), epsilon = 1e-12);
    }
}
