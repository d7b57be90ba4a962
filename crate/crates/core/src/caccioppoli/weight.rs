//! Directional weights `w(Γᵢ)`: powers `Γ^α`, the log weight `Φ`, and
//! weights `t^{-1/2} ρ(t)` built from an admissible `ρ`.

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::density::{log_spaced, ScalarFn};
use crate::error::{Error, Result};
use crate::field::Axis;
use crate::report::{ConditionReport, Witness};
use crate::spec_string::SpecString;

/// `e² - 1`.
pub const LOG_SHIFT: f64 = E * E - 1.0;

/// Upper end of the range on which `ρ` is checked before use as a weight.
pub const RHO_CHECK_T_MAX: f64 = 1e8;

/// `Φ(t) = ln(e² - 1 + t)/√t` for `t >= 1`.
pub fn log_weight(t: f64) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::DomainError { what: "log_weight", value: t });
    }
    Ok((LOG_SHIFT + t).ln() / t.sqrt())
}

/// `Φ'(t) = (2t - (e² - 1 + t) ln(e² - 1 + t)) / (2 t^{3/2} (e² - 1 + t))`.
pub fn log_weight_derivative(t: f64) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::DomainError { what: "log_weight_derivative", value: t });
    }
    let s = LOG_SHIFT + t;
    Ok((1.0 / s - s.ln() / (2.0 * t)) / t.sqrt())
}

/// A positive increasing `ρ` with `t^{-1/2} ρ(t)` non-increasing.
#[derive(Clone)]
pub enum RhoFunction {
    /// `ln(e² - 1 + t)`
    LogShift,
    /// `√t`
    Sqrt,
    /// `t` (not admissible)
    Linear,
    Custom {
        name: String,
        rho: ScalarFn,
        rho_prime: ScalarFn,
    },
}

impl RhoFunction {
    pub fn custom(
        name: impl Into<String>,
        rho: impl Fn(f64) -> f64 + Send + Sync + 'static,
        rho_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::Custom { name: name.into(), rho: Arc::new(rho), rho_prime: Arc::new(rho_prime) }
    }

    pub fn rho(&self, t: f64) -> f64 {
        match self {
            Self::LogShift => (LOG_SHIFT + t).ln(),
            Self::Sqrt => t.sqrt(),
            Self::Linear => t,
            Self::Custom { rho, .. } => rho(t),
        }
    }

    pub fn rho_prime(&self, t: f64) -> f64 {
        match self {
            Self::LogShift => 1.0 / (LOG_SHIFT + t),
            Self::Sqrt => 0.5 / t.sqrt(),
            Self::Linear => 1.0,
            Self::Custom { rho_prime, .. } => rho_prime(t),
        }
    }

    /// `ρ²(t)/ρ'(t)`.
    pub fn rho_squared_over_prime(&self, t: f64) -> f64 {
        let r = self.rho(t);
        r * r / self.rho_prime(t)
    }
}

impl fmt::Debug for RhoFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RhoFunction({self})")
    }
}

impl PartialEq for RhoFunction {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl fmt::Display for RhoFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LogShift => f.write_str("log-shift"),
            Self::Sqrt => f.write_str("sqrt"),
            Self::Linear => f.write_str("linear"),
            Self::Custom { name, .. } => write!(f, "custom:{name}"),
        }
    }
}

impl FromStr for RhoFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "log-shift" | "log" => Ok(Self::LogShift),
            "sqrt" => Ok(Self::Sqrt),
            "linear" => Ok(Self::Linear),
            other => Err(Error::Parse(format!("unknown rho `{other}`"))),
        }
    }
}

/// Checks `ρ' > 0` and `d/dt[t^{-1/2} ρ(t)] = ρ'/√t - ρ/(2t^{3/2}) <= 0` on
/// log-spaced samples of `[1, t_max]`. A witness stores `t` as the first
/// point coordinate.
pub fn rho_admissible(rho: &RhoFunction, t_max: f64) -> Result<ConditionReport> {
    if !(t_max > 1.0) {
        return Err(Error::InvalidArgument(format!("t_max must exceed 1, got {t_max}")));
    }
    let samples = log_spaced(1.0, t_max, 16);
    let mut witness = None;
    let mut worst_slope = f64::NEG_INFINITY;
    for &t in &samples {
        let (r, rp) = (rho.rho(t), rho.rho_prime(t));
        let rising = rp / t.sqrt();
        let falling = r / (2.0 * t * t.sqrt());
        let slope = rising - falling;
        worst_slope = worst_slope.max(slope);
        if witness.is_none() {
            if !(rp > 0.0) || !(r > 0.0) {
                witness = Some(Witness { point: [t, 0.0], direction: None, lhs: 0.0, rhs: rp.min(r) });
            } else if slope > 1e-12 * (rising + falling) {
                // `rising <= falling` fails beyond round-off
                witness = Some(Witness { point: [t, 0.0], direction: None, lhs: rising, rhs: falling });
            }
        }
    }
    Ok(ConditionReport::new(
        "rho-admissible",
        worst_slope,
        witness,
        format!("t in [1, {t_max:e}], {} log-spaced samples", samples.len()),
    )
    .with_note(format!("rho = {rho}; constant is max of d/dt[t^(-1/2) rho]")))
}

/// The three weight families.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightVariant {
    Power { alpha: f64 },
    Log,
    General(RhoFunction),
}

/// A weight family together with the derivative direction it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub variant: WeightVariant,
    pub axis: Axis,
}

impl WeightSpec {
    pub fn power(alpha: f64) -> Self {
        Self { variant: WeightVariant::Power { alpha }, axis: Axis::One }
    }

    pub fn log() -> Self {
        Self { variant: WeightVariant::Log, axis: Axis::One }
    }

    pub fn general(rho: RhoFunction) -> Self {
        Self { variant: WeightVariant::General(rho), axis: Axis::One }
    }

    pub fn with_axis(mut self, axis: Axis) -> Self {
        self.axis = axis;
        self
    }

    /// Errors with `WeightInadmissible` for `α <= -1/2` or a `ρ` failing
    /// `rho_admissible` on `[1, RHO_CHECK_T_MAX]`.
    pub fn validate(&self) -> Result<()> {
        match &self.variant {
            WeightVariant::Power { alpha } if !(*alpha > -0.5 && alpha.is_finite()) => {
                Err(Error::WeightInadmissible(format!("power weight needs alpha > -1/2, got {alpha}")))
            }
            WeightVariant::General(rho) => {
                let report = rho_admissible(rho, RHO_CHECK_T_MAX)?;
                if report.pass {
                    Ok(())
                } else {
                    Err(Error::WeightInadmissible(format!("rho `{rho}` fails the admissibility check")))
                }
            }
            _ => Ok(()),
        }
    }

    /// Weight of the second-derivative term: `Γ^α`, `Φ(Γ)` or `Γ^{-1/2} ρ(Γ)`.
    pub fn lhs_weight(&self, gamma: f64) -> f64 {
        match &self.variant {
            WeightVariant::Power { alpha } => gamma.powf(*alpha),
            WeightVariant::Log => (LOG_SHIFT + gamma).ln() / gamma.sqrt(),
            WeightVariant::General(rho) => rho.rho(gamma) / gamma.sqrt(),
        }
    }

    /// Weight of the cutoff term: `Γ^{α+1}`, `Γ^{1/2} ln²(e² - 1 + Γ)` or
    /// `Γ^{1/2} ρ²(Γ)/ρ'(Γ)`.
    pub fn rhs_weight(&self, gamma: f64) -> f64 {
        match &self.variant {
            WeightVariant::Power { alpha } => gamma.powf(alpha + 1.0),
            WeightVariant::Log => {
                let l = (LOG_SHIFT + gamma).ln();
                gamma.sqrt() * l * l
            }
            WeightVariant::General(rho) => gamma.sqrt() * rho.rho_squared_over_prime(gamma),
        }
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.variant {
            WeightVariant::Power { alpha } => write!(f, "power:alpha={alpha}")?,
            WeightVariant::Log => write!(f, "log")?,
            WeightVariant::General(rho) => write!(f, "rho:{rho}")?,
        }
        if self.axis == Axis::Two {
            let sep = if self.variant == WeightVariant::Log { ':' } else { ',' };
            write!(f, "{sep}dir=2")?;
        }
        Ok(())
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        let axis = match spec.get("dir") {
            Some(raw) => Axis::from_number(crate::spec_string::parse_number(raw, "dir")?)?,
            None => Axis::One,
        };
        let variant = match spec.name {
            "power" => {
                spec.expect_keys(&["alpha", "dir"])?;
                WeightVariant::Power { alpha: spec.number("alpha")? }
            }
            "log" => {
                spec.expect_keys(&["dir"])?;
                WeightVariant::Log
            }
            "rho" => {
                spec.expect_keys(&["dir"])?;
                let positional = spec.positional();
                let [name] = positional.as_slice() else {
                    return Err(Error::Parse("rho weight takes one function name, e.g. rho:log-shift".into()));
                };
                WeightVariant::General(name.parse()?)
            }
            other => return Err(Error::Parse(format!("unknown weight `{other}`"))),
        };
        Ok(Self { variant, axis })
    }
}

impl Serialize for WeightSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WeightSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_weight_values() {
        assert_eq!(log_weight(1.0).unwrap(), 2.0);
        assert_relative_eq!(log_weight_derivative(1.0).unwrap(), -1.0 + (-2.0f64).exp(), max_relative = 1e-14);
        assert!(log_weight(0.5).is_err());
        assert!(log_weight_derivative(f64::NAN).is_err());
        for t in [1.0, 10.0, 1e4] {
            let lhs = log_weight(t).unwrap() + 2.0 * t * log_weight_derivative(t).unwrap();
            assert_relative_eq!(lhs, 2.0 * t.sqrt() / (LOG_SHIFT + t), max_relative = 1e-13);
        }
    }

    #[test]
    fn admissibility_examples() {
        assert!(rho_admissible(&RhoFunction::LogShift, 1e8).unwrap().pass);
        assert!(rho_admissible(&RhoFunction::Sqrt, 1e8).unwrap().pass);
        let linear = rho_admissible(&RhoFunction::Linear, 1e8).unwrap();
        assert!(!linear.pass);
        let w = linear.witness.unwrap();
        assert!(w.lhs > w.rhs);
    }

    #[test]
    fn weight_validation() {
        assert!(WeightSpec::power(-0.4).validate().is_ok());
        assert!(matches!(WeightSpec::power(-0.5).validate(), Err(Error::WeightInadmissible(_))));
        assert!(WeightSpec::general(RhoFunction::Linear).validate().is_err());
        assert!(WeightSpec::general(RhoFunction::Sqrt).validate().is_ok());
    }

    #[test]
    fn log_variant_matches_log_weight() {
        let w = WeightSpec::log();
        for t in [1.0, 3.0, 1e5] {
            assert_relative_eq!(w.lhs_weight(t), log_weight(t).unwrap(), max_relative = 1e-15);
        }
    }

    #[test]
    fn weight_spec_round_trip() {
        for s in [
            "power:alpha=-0.4",
            "log",
            "rho:log-shift",
            "rho:sqrt",
            "power:alpha=0.5,dir=2",
            "log:dir=2",
            "rho:sqrt,dir=2",
        ] {
            assert_eq!(s.parse::<WeightSpec>().unwrap().to_string(), s);
        }
        assert!("power".parse::<WeightSpec>().is_err());
        assert!("rho:cubic".parse::<WeightSpec>().is_err());
        assert!("power:alpha=1,dir=3".parse::<WeightSpec>().is_err());
    }
}
