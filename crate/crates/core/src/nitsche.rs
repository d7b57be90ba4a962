//! The Nitsche integrand `Θ(t) = (1/t)(1 + tλ)/(2 + tλ)` and an integral
//! test for `∫₁^∞ Θ(t) dt` based on model fits to dyadic block sums.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{log_spaced, Density, DensityModel, RadialProfile};
use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::report::{ConditionReport, Witness};

/// Per-block absolute tolerance of the adaptive quadrature.
pub const BLOCK_TOLERANCE: f64 = 1e-10;

/// Default relative residual above which the classification is inconclusive.
pub const DEFAULT_INCONCLUSIVE_THRESHOLD: f64 = 0.05;

/// Residual margin within which a model with fewer parameters is preferred.
const PARSIMONY_MARGIN: f64 = 1e-3;

/// Relative deviation of the alternate closed form at `t_max` that gets flagged.
const CROSS_CHECK_FLAG: f64 = 0.10;

fn profile_of(density: &dyn Density) -> Result<&dyn RadialProfile> {
    density.radial_profile().ok_or_else(|| Error::NonRadialDensity(density.label()))
}

/// `Θ(t)` computed from `κ = 1 + tλ` as `(1/t) κ/(1 + κ)`.
fn theta_from_profile(profile: &dyn RadialProfile, t: f64) -> Result<f64> {
    if !(profile.g_prime_over_r(t.sqrt()) > 0.0) {
        return Err(Error::DegenerateProfile { t, reason: "f'(t) vanishes" });
    }
    let kappa = profile.one_plus_t_lambda(t);
    let denom = 1.0 + kappa;
    if denom == 0.0 || !kappa.is_finite() {
        return Err(Error::DegenerateProfile { t, reason: "2 + tλ(t) vanishes" });
    }
    Ok(kappa / (t * denom))
}

/// `Θ(t) = (1/t)(1 + tλ(t))/(2 + tλ(t))` for `t >= 1`.
pub fn theta(density: &dyn Density, t: f64) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::DomainError { what: "theta", value: t });
    }
    theta_from_profile(profile_of(density)?, t)
}

/// The alternate closed form `1/(1 + √t g'(√t)/g''(√t))`.
pub fn theta_g_form(density: &dyn Density, t: f64) -> Result<f64> {
    let profile = profile_of(density)?;
    let r = t.sqrt();
    let second = profile.g_second(r);
    if !(second > 0.0) {
        return Err(Error::DegenerateProfile { t, reason: "g'' vanishes" });
    }
    Ok(1.0 / (1.0 + r * profile.g_prime(r) / second))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Diverges,
    Converges,
    Inconclusive,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Diverges => "diverges",
            Self::Converges => "converges",
            Self::Inconclusive => "inconclusive",
        })
    }
}

/// Tail models for the dyadic sums `S_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailModel {
    /// `a ρ^k`
    GeometricDecay,
    /// `a / (k + b)`
    Harmonic,
    /// `a / (k ln k)`
    LogHarmonic,
    /// `a`
    Constant,
}

impl TailModel {
    fn parameters(self) -> usize {
        match self {
            Self::Constant | Self::LogHarmonic => 1,
            Self::GeometricDecay | Self::Harmonic => 2,
        }
    }
}

impl fmt::Display for TailModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GeometricDecay => "geometric-decay",
            Self::Harmonic => "harmonic",
            Self::LogHarmonic => "log-harmonic",
            Self::Constant => "constant",
        })
    }
}

/// One candidate fit: the model, its parameters and relative RMS residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: TailModel,
    pub params: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicSum {
    pub k: usize,
    pub sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NitscheReport {
    pub density: String,
    pub classification: Classification,
    pub dyadic_sums: Vec<DyadicSum>,
    pub fitted_model: TailModel,
    pub fit_params: Vec<f64>,
    pub fit_residual: f64,
    pub candidates: Vec<ModelFit>,
    pub t_max: f64,
    pub levels: usize,
    /// Ratio of the alternate closed form to `Θ` at `t_max`.
    pub cross_check_ratio: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub inconclusive_threshold: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { inconclusive_threshold: DEFAULT_INCONCLUSIVE_THRESHOLD }
    }
}

/// `S_k = ∫_{2^k}^{2^{k+1}} Θ` for `k = 0..levels`.
pub fn dyadic_sums(density: &dyn Density, levels: usize) -> Result<Vec<DyadicSum>> {
    let profile = profile_of(density)?;
    (0..levels)
        .into_par_iter()
        .map(|k| {
            let a = 2f64.powi(k as i32);
            // probe once so degenerate profiles surface as errors, not NaN sums
            theta_from_profile(profile, a)?;
            theta_from_profile(profile, 2.0 * a)?;
            let block = integrate(|t| theta_from_profile(profile, t).unwrap_or(f64::NAN), a, 2.0 * a, BLOCK_TOLERANCE);
            if !block.value.is_finite() {
                return Err(Error::DegenerateProfile { t: a, reason: "Θ not finite on block" });
            }
            Ok(DyadicSum { k, sum: block.value })
        })
        .collect()
}

fn relative_rms(data: &[(f64, f64)], model: impl Fn(f64) -> f64) -> f64 {
    let ss: f64 = data
        .iter()
        .map(|&(k, s)| {
            let e = (model(k) - s) / s;
            e * e
        })
        .sum();
    (ss / data.len() as f64).sqrt()
}

/// Ordinary least squares `y = c0 + c1 x`.
fn line_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| {
        let slope = sxy / sxx;
        (my - slope * mx, slope)
    })
}

/// Single-scale fit `S ≈ a φ(k)` minimizing the relative residual.
fn scale_fit(data: &[(f64, f64)], phi: impl Fn(f64) -> f64) -> f64 {
    let num: f64 = data.iter().map(|&(k, s)| phi(k) / s).sum();
    let den: f64 = data.iter().map(|&(k, s)| (phi(k) / s).powi(2)).sum();
    num / den
}

/// Fits every tail model to the given `(k, S_k)` pairs; models that do not
/// apply (nonpositive sums, nonpositive harmonic slope) are omitted.
pub fn fit_tail_models(data: &[(f64, f64)]) -> Vec<ModelFit> {
    let mut fits = Vec::new();
    if data.len() < 3 || data.iter().any(|&(_, s)| !(s > 0.0)) {
        return fits;
    }
    let ks: Vec<f64> = data.iter().map(|d| d.0).collect();

    let a = scale_fit(data, |_| 1.0);
    fits.push(ModelFit { model: TailModel::Constant, params: vec![a], residual: relative_rms(data, |_| a) });

    let logs: Vec<f64> = data.iter().map(|d| d.1.ln()).collect();
    if let Some((c0, c1)) = line_fit(&ks, &logs) {
        let (a, rho) = (c0.exp(), c1.exp());
        fits.push(ModelFit {
            model: TailModel::GeometricDecay,
            params: vec![a, rho],
            residual: relative_rms(data, |k| a * rho.powf(k)),
        });
    }

    let inverses: Vec<f64> = data.iter().map(|d| 1.0 / d.1).collect();
    if let Some((c0, c1)) = line_fit(&ks, &inverses) {
        if c1 > 0.0 {
            let (a, b) = (1.0 / c1, c0 / c1);
            fits.push(ModelFit {
                model: TailModel::Harmonic,
                params: vec![a, b],
                residual: relative_rms(data, |k| a / (k + b)),
            });
        }
    }

    if ks.iter().all(|&k| k > 1.0) {
        let phi = |k: f64| 1.0 / (k * k.ln());
        let a = scale_fit(data, phi);
        fits.push(ModelFit {
            model: TailModel::LogHarmonic,
            params: vec![a],
            residual: relative_rms(data, |k| a * phi(k)),
        });
    }
    fits
}

/// Lowest residual wins; within the parsimony margin the model with fewer
/// parameters is preferred.
fn select_model(fits: &[ModelFit]) -> Option<&ModelFit> {
    let best = fits.iter().map(|f| f.residual).fold(f64::INFINITY, f64::min);
    fits.iter()
        .filter(|f| f.residual <= best + PARSIMONY_MARGIN)
        .min_by(|x, y| x.model.parameters().cmp(&y.model.parameters()).then(x.residual.total_cmp(&y.residual)))
}

/// Classifies `∫₁^∞ Θ` by integrating `Θ` over the dyadic blocks
/// `[2^k, 2^{k+1}]`, `k < levels`, and fitting tail models to the last half
/// of the block sums.
pub fn classify_divergence(
    density: &dyn Density,
    t_max: f64,
    levels: usize,
    options: &ClassifyOptions,
) -> Result<NitscheReport> {
    if levels < 8 {
        return Err(Error::InvalidArgument(format!("levels must be at least 8, got {levels}")));
    }
    if !(t_max >= 2f64.powi(levels as i32)) {
        return Err(Error::InvalidArgument(format!(
            "t_max = {t_max} must be at least 2^levels = {}",
            2f64.powi(levels as i32)
        )));
    }
    let sums = dyadic_sums(density, levels)?;
    let tail: Vec<(f64, f64)> = sums[levels / 2..].iter().map(|s| (s.k as f64, s.sum)).collect();
    let fits = fit_tail_models(&tail);
    let chosen = select_model(&fits).cloned();
    let mut notes = Vec::new();

    let (classification, model, params, residual) = match chosen {
        None => {
            notes.push("no tail model applies to the block sums".into());
            (Classification::Inconclusive, TailModel::Constant, vec![], f64::INFINITY)
        }
        Some(fit) => {
            let verdict = if fit.residual > options.inconclusive_threshold {
                Classification::Inconclusive
            } else {
                match fit.model {
                    TailModel::GeometricDecay if fit.params[1] < 1.0 => Classification::Converges,
                    _ => Classification::Diverges,
                }
            };
            (verdict, fit.model, fit.params, fit.residual)
        }
    };

    let cross_check_ratio = theta_g_form(density, t_max)? / theta(density, t_max)?;
    if (cross_check_ratio - 1.0).abs() > CROSS_CHECK_FLAG {
        notes.push(format!(
            "alternate closed form 1/(1 + √t g'/g'') differs from Θ by a factor {cross_check_ratio:.6} at t_max"
        ));
    }

    Ok(NitscheReport {
        density: density.label(),
        classification,
        dyadic_sums: sums,
        fitted_model: model,
        fit_params: params,
        fit_residual: residual,
        candidates: fits,
        t_max,
        levels,
        cross_check_ratio,
        notes,
    })
}

/// Band the ratio `√t g'(√t)/g''(√t) / (t ln(1+√t))` must stay in.
pub const RATIO_BAND: (f64, f64) = (0.5, 2.5);

/// Samples the nearly linear bounds `Θ(t) t ln(1+t) >= c > 0` and
/// `√t g'(√t)/g''(√t) ∈ [c₁, c₂]·t ln(1+√t)` on `[t_lo, t_hi]`.
///
/// The report's constant is the minimum of `Θ t ln(1+t)`; the measured ratio
/// interval is recorded in the notes. A witness stores `t` as the first
/// point coordinate.
pub fn theta_lower_bound_check(density: &DensityModel, t_lo: f64, t_hi: f64) -> Result<ConditionReport> {
    if !density.is_nearly_linear() {
        return Err(Error::NonNearlyLinear(density.label()));
    }
    if !(1e2 <= t_lo && t_lo < t_hi && t_hi <= 1e12) {
        return Err(Error::InvalidArgument(format!("sample range [{t_lo:e}, {t_hi:e}] must lie within [1e2, 1e12]")));
    }
    let samples = log_spaced(t_lo, t_hi, 16);
    let mut min_product = (f64::INFINITY, t_lo);
    let mut ratio_lo = (f64::INFINITY, t_lo);
    let mut ratio_hi = (f64::NEG_INFINITY, t_lo);
    for &t in &samples {
        let product = theta(density, t)? * t * t.ln_1p();
        // √t g'/g'' = t/κ
        let ratio = 1.0 / (density.one_plus_t_lambda(t) * t.sqrt().ln_1p());
        if product < min_product.0 {
            min_product = (product, t);
        }
        if ratio < ratio_lo.0 {
            ratio_lo = (ratio, t);
        }
        if ratio > ratio_hi.0 {
            ratio_hi = (ratio, t);
        }
    }
    let witness = if !(min_product.0 > 0.0) {
        Some(Witness { point: [min_product.1, 0.0], direction: None, lhs: 0.0, rhs: min_product.0 })
    } else if !(ratio_lo.0 >= RATIO_BAND.0) {
        Some(Witness { point: [ratio_lo.1, 0.0], direction: None, lhs: RATIO_BAND.0, rhs: ratio_lo.0 })
    } else if !(ratio_hi.0 <= RATIO_BAND.1) {
        Some(Witness { point: [ratio_hi.1, 0.0], direction: None, lhs: ratio_hi.0, rhs: RATIO_BAND.1 })
    } else {
        None
    };
    Ok(ConditionReport::new(
        "theta-lower-bound",
        min_product.0,
        witness,
        format!("t in [{t_lo:e}, {t_hi:e}], {} log-spaced samples", samples.len()),
    )
    .with_note(format!(
        "ratio interval [{:.6}, {:.6}] against band [{}, {}]",
        ratio_lo.0, ratio_hi.0, RATIO_BAND.0, RATIO_BAND.1
    )))
}

/// The `(lo, hi)` ratio interval recorded by `theta_lower_bound_check`.
pub fn measured_ratio_interval(density: &DensityModel, t_lo: f64, t_hi: f64) -> Result<(f64, f64)> {
    if !density.is_nearly_linear() {
        return Err(Error::NonNearlyLinear(density.label()));
    }
    let ratios: Vec<f64> = log_spaced(t_lo, t_hi, 16)
        .into_iter()
        .map(|t| 1.0 / (density.one_plus_t_lambda(t) * t.sqrt().ln_1p()))
        .collect();
    Ok((ratios.iter().copied().fold(f64::INFINITY, f64::min), ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
}
