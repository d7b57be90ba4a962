//! Scalar fields `u` in closed form or as discrete solver output, and the
//! quantities derived from their gradients.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::density::{HessianForm, Vec2};
use crate::error::{Error, Result};
use crate::solver::DiscreteField;
use crate::spec_string::{parse_number, SpecString};

/// A field with closed-form value, gradient and (optionally) Hessian.
pub trait ClosedFormField: Send + Sync {
    fn value(&self, x: Vec2) -> f64;
    fn gradient(&self, x: Vec2) -> Vec2;
    fn hessian(&self, x: Vec2) -> Option<HessianForm>;
    fn label(&self) -> String;

    /// Radius of the largest centred disk on which the field is defined.
    fn max_radius(&self) -> f64 {
        f64::INFINITY
    }
}

impl<T: ClosedFormField + ?Sized> ClosedFormField for &T {
    fn value(&self, x: Vec2) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: Vec2) -> Vec2 {
        (**self).gradient(x)
    }
    fn hessian(&self, x: Vec2) -> Option<HessianForm> {
        (**self).hessian(x)
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn max_radius(&self) -> f64 {
        (**self).max_radius()
    }
}

impl<T: ClosedFormField + ?Sized> ClosedFormField for Box<T> {
    fn value(&self, x: Vec2) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: Vec2) -> Vec2 {
        (**self).gradient(x)
    }
    fn hessian(&self, x: Vec2) -> Option<HessianForm> {
        (**self).hessian(x)
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn max_radius(&self) -> f64 {
        (**self).max_radius()
    }
}

/// `a x₁ + b x₂ + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ClosedFormField for Affine {
    fn value(&self, x: Vec2) -> f64 {
        self.a * x.x + self.b * x.y + self.c
    }
    fn gradient(&self, _: Vec2) -> Vec2 {
        Vec2::new(self.a, self.b)
    }
    fn hessian(&self, _: Vec2) -> Option<HessianForm> {
        Some(HessianForm::scaled_identity(0.0))
    }
    fn label(&self) -> String {
        format!("affine:a={},b={},c={}", self.a, self.b, self.c)
    }
}

/// `x₁ x₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Product;

impl ClosedFormField for Product {
    fn value(&self, x: Vec2) -> f64 {
        x.x * x.y
    }
    fn gradient(&self, x: Vec2) -> Vec2 {
        Vec2::new(x.y, x.x)
    }
    fn hessian(&self, _: Vec2) -> Option<HessianForm> {
        Some(HessianForm::new(0.0, 1.0, 0.0))
    }
    fn label(&self) -> String {
        "product".into()
    }
}

/// Scherk's surface `ln(cos x₁ / cos x₂)` on `(-π/2, π/2)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scherk;

impl ClosedFormField for Scherk {
    fn value(&self, x: Vec2) -> f64 {
        (x.x.cos() / x.y.cos()).ln()
    }
    fn gradient(&self, x: Vec2) -> Vec2 {
        Vec2::new(-x.x.tan(), x.y.tan())
    }
    fn hessian(&self, x: Vec2) -> Option<HessianForm> {
        let sec2 = |t: f64| 1.0 / (t.cos() * t.cos());
        Some(HessianForm::new(-sec2(x.x), 0.0, sec2(x.y)))
    }
    fn label(&self) -> String {
        "scherk".into()
    }
    fn max_radius(&self) -> f64 {
        std::f64::consts::FRAC_PI_2
    }
}

/// `x₁ + arctan x₂`: both partial derivatives bounded, `∂₁u ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArctanShear;

impl ClosedFormField for ArctanShear {
    fn value(&self, x: Vec2) -> f64 {
        x.x + x.y.atan()
    }
    fn gradient(&self, x: Vec2) -> Vec2 {
        Vec2::new(1.0, 1.0 / (1.0 + x.y * x.y))
    }
    fn hessian(&self, x: Vec2) -> Option<HessianForm> {
        let q = 1.0 + x.y * x.y;
        Some(HessianForm::new(0.0, 0.0, -2.0 * x.y / (q * q)))
    }
    fn label(&self) -> String {
        "arctan-shear".into()
    }
}

/// Field selection for configs and the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Affine {
        a: f64,
        b: f64,
        c: f64,
    },
    Product,
    Scherk,
    ArctanShear,
    /// Nodal values from a CSV with columns `x, y, u`.
    FromFile(PathBuf),
}

impl FieldSpec {
    /// The closed-form field, or `None` for file-backed fields.
    pub fn closed_form(&self) -> Option<Box<dyn ClosedFormField>> {
        Some(match *self {
            Self::Affine { a, b, c } => Box::new(Affine { a, b, c }),
            Self::Product => Box::new(Product),
            Self::Scherk => Box::new(Scherk),
            Self::ArctanShear => Box::new(ArctanShear),
            Self::FromFile(_) => return None,
        })
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Affine { a, b, c } => write!(f, "affine:a={a},b={b},c={c}"),
            Self::Product => write!(f, "product"),
            Self::Scherk => write!(f, "scherk"),
            Self::ArctanShear => write!(f, "arctan-shear"),
            Self::FromFile(p) => write!(f, "from-file:{}", p.display()),
        }
    }
}

impl FromStr for FieldSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        if let Some(path) = trimmed.strip_prefix("from-file:") {
            if path.is_empty() {
                return Err(Error::Parse("from-file needs a path".into()));
            }
            return Ok(Self::FromFile(PathBuf::from(path)));
        }
        let spec = SpecString::parse(trimmed)?;
        match spec.name {
            "affine" => {
                spec.expect_keys(&["a", "b", "c"])?;
                let positional = spec.positional();
                if !positional.is_empty() {
                    if positional.len() != 3 || spec.params.len() != 3 {
                        return Err(Error::Parse("affine takes a,b,c".into()));
                    }
                    return Ok(Self::Affine {
                        a: parse_number(positional[0], "a")?,
                        b: parse_number(positional[1], "b")?,
                        c: parse_number(positional[2], "c")?,
                    });
                }
                Ok(Self::Affine {
                    a: spec.number_or("a", 0.0)?,
                    b: spec.number_or("b", 0.0)?,
                    c: spec.number_or("c", 0.0)?,
                })
            }
            "product" => Ok(Self::Product),
            "scherk" => Ok(Self::Scherk),
            "arctan-shear" => Ok(Self::ArctanShear),
            other => Err(Error::Parse(format!("unknown field `{other}`"))),
        }
    }
}

impl Serialize for FieldSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FieldSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Either kind of field accepted by the diagnostics.
#[derive(Clone, Copy)]
pub enum FieldView<'a> {
    Closed(&'a dyn ClosedFormField),
    Discrete(&'a DiscreteField),
}

impl<'a> From<&'a dyn ClosedFormField> for FieldView<'a> {
    fn from(f: &'a dyn ClosedFormField) -> Self {
        Self::Closed(f)
    }
}

impl<'a> From<&'a DiscreteField> for FieldView<'a> {
    fn from(f: &'a DiscreteField) -> Self {
        Self::Discrete(f)
    }
}

impl FieldView<'_> {
    pub fn label(&self) -> String {
        match self {
            Self::Closed(f) => f.label(),
            Self::Discrete(f) => format!("discrete ({} nodes)", f.mesh.node_count()),
        }
    }
}

/// Coordinate direction `i ∈ {1, 2}` of a partial derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Axis {
    #[default]
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Self::One => 0,
            Self::Two => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Self::One => Self::Two,
            Self::Two => Self::One,
        }
    }

    pub fn from_number(n: f64) -> Result<Self> {
        match n {
            1.0 => Ok(Self::One),
            2.0 => Ok(Self::Two),
            _ => Err(Error::Parse(format!("direction must be 1 or 2, got {n}"))),
        }
    }

    /// `∂ᵢu` from the full gradient.
    pub fn component(self, v: Vec2) -> f64 {
        v[self.index()]
    }

    /// Row `i` of a symmetric Hessian, i.e. `∇∂ᵢu`.
    pub fn hessian_row(self, h: &HessianForm) -> Vec2 {
        match self {
            Self::One => Vec2::new(h.a11, h.a12),
            Self::Two => Vec2::new(h.a12, h.a22),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}

/// `Γᵢ = 1 + |∂ᵢu|²`.
#[inline]
pub fn gamma(gradient: Vec2, axis: Axis) -> f64 {
    let d = axis.component(gradient);
    1.0 + d * d
}

/// `Γᵢ` as a scalar field: pointwise for closed forms, per element for
/// discrete fields.
pub enum ScalarField<'a> {
    Pointwise(Box<dyn Fn(Vec2) -> f64 + Send + Sync + 'a>),
    PerElement(Vec<f64>),
}

pub fn gamma_field(field: FieldView<'_>, axis: Axis) -> ScalarField<'_> {
    match field {
        FieldView::Closed(f) => ScalarField::Pointwise(Box::new(move |x| gamma(f.gradient(x), axis))),
        FieldView::Discrete(f) => {
            ScalarField::PerElement(f.gradients().gradients.into_iter().map(|g| gamma(g, axis)).collect())
        }
    }
}

/// Recovered second derivatives of a P1 field, one symmetric form per
/// element: element gradients are averaged to the nodes with area weights,
/// and the recovered gradient field is differentiated elementwise.
pub fn recovered_hessians(field: &DiscreteField) -> Vec<HessianForm> {
    let mesh = &field.mesh;
    let mut nodal = vec![Vec2::zeros(); mesh.node_count()];
    let mut weight = vec![0.0; mesh.node_count()];
    for (e, nodes) in mesh.elements.iter().enumerate() {
        let g = field.element_gradient(e);
        let area = mesh.geometry()[e].area;
        for &i in nodes {
            nodal[i] += g * area;
            weight[i] += area;
        }
    }
    for (g, w) in nodal.iter_mut().zip(&weight) {
        if *w > 0.0 {
            *g /= *w;
        }
    }
    mesh.elements
        .iter()
        .zip(mesh.geometry())
        .map(|(nodes, geo)| {
            let mut jac = nalgebra::Matrix2::zeros();
            for a in 0..3 {
                // row k holds ∇(∂ₖu)
                let g = nodal[nodes[a]];
                jac.set_row(0, &(jac.row(0) + geo.grads[a].transpose() * g.x));
                jac.set_row(1, &(jac.row(1) + geo.grads[a].transpose() * g.y));
            }
            HessianForm::from_matrix(&jac)
        })
        .collect()
}
