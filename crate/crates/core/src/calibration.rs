//! Linear NRF model fitting, detector-efficiency extraction and unit
//! conversions.
//!
//! The NRF of multi-mode twin beams grows linearly with the photon number per
//! mode, NRF = 1 − α + β·N_m, where α is set by the matched modes and β by the
//! unmatched ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Estimate;

pub mod constants {
    /// Planck constant times the speed of light, J·m.
    pub const HC_JOULE_METRE: f64 = 1.98645e-25;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha: Estimate,
    pub beta: Estimate,
    pub covariance_alpha_beta: f64,
    pub chi2_per_dof: f64,
    pub n_points: usize,
}

impl FitResult {
    /// Model line 1 − α + β·N_m.
    pub fn predict(&self, n_m: f64) -> f64 {
        1.0 - self.alpha.value + self.beta.value * n_m
    }

    /// α is expected in (0, 1] for physical data.
    pub fn alpha_is_physical(&self) -> bool {
        self.alpha.value > 0.0 && self.alpha.value <= 1.0
    }
}

/// Inverse-variance weighted straight-line fit of NRF against N_m.
///
/// Parameter errors come from the weighted normal equations (not rescaled by
/// χ²). With exactly two points the line interpolates and χ²/dof is reported
/// as 0.
pub fn fit_nrf_linear(points: &[(f64, Estimate)]) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: points.len(),
        });
    }
    let mut weights = Vec::with_capacity(points.len());
    for (i, (x, y)) in points.iter().enumerate() {
        if !x.is_finite() || !y.value.is_finite() {
            return Err(Error::param(format!("points[{i}]"), "non-finite value"));
        }
        if !(y.std_error > 0.0) || !y.std_error.is_finite() {
            return Err(Error::param(
                format!("points[{i}].std_error"),
                format!("weights need a positive standard error, got {}", y.std_error),
            ));
        }
        weights.push(1.0 / (y.std_error * y.std_error));
    }

    let sw: f64 = weights.iter().sum();
    let x_bar = points.iter().zip(&weights).map(|((x, _), w)| w * x).sum::<f64>() / sw;
    let y_bar = points.iter().zip(&weights).map(|((_, y), w)| w * y.value).sum::<f64>() / sw;
    let stt: f64 = points
        .iter()
        .zip(&weights)
        .map(|((x, _), w)| w * (x - x_bar).powi(2))
        .sum();
    let x_scale = points.iter().map(|(x, _)| x.abs()).fold(0.0, f64::max).max(1.0);
    if !(stt > 1e-12 * sw * x_scale * x_scale) {
        return Err(Error::RankDeficient("all N_m values are equal".into()));
    }
    let sty: f64 = points
        .iter()
        .zip(&weights)
        .map(|((x, y), w)| w * (x - x_bar) * y.value)
        .sum();

    let slope = sty / stt;
    let intercept = y_bar - slope * x_bar;
    let var_slope = 1.0 / stt;
    let var_intercept = 1.0 / sw + x_bar * x_bar / stt;
    let cov_intercept_slope = -x_bar / stt;

    let chi2: f64 = points
        .iter()
        .zip(&weights)
        .map(|((x, y), w)| w * (y.value - intercept - slope * x).powi(2))
        .sum();
    let dof = points.len() - 2;
    let chi2_per_dof = if dof > 0 { chi2 / dof as f64 } else { 0.0 };

    let n = points.len() as u64;
    Ok(FitResult {
        alpha: Estimate::new(1.0 - intercept, var_intercept.sqrt(), n),
        beta: Estimate::new(slope, var_slope.sqrt(), n),
        // α = 1 − intercept flips the sign of the covariance
        covariance_alpha_beta: -cov_intercept_slope,
        chi2_per_dof,
        n_points: points.len(),
    })
}

/// α = 2M/(M+K) · η₁/(1+k) and β = 2K/(M+K) · η₁/(1+k), with k = η₁/η₂.
pub fn alpha_beta_theory(matched: u64, unmatched: u64, eta1: f64, k_ratio: f64) -> Result<(f64, f64)> {
    if matched + unmatched == 0 {
        return Err(Error::param("matched_modes", "M + K must be >= 1"));
    }
    if !(eta1 > 0.0 && eta1 <= 1.0) {
        return Err(Error::param("eta1", format!("must lie in (0, 1], got {eta1}")));
    }
    if !(k_ratio > 0.0) || !k_ratio.is_finite() {
        return Err(Error::param("k_ratio", format!("must be > 0, got {k_ratio}")));
    }
    let total = (matched + unmatched) as f64;
    let scale = 2.0 * eta1 / (1.0 + k_ratio);
    Ok((matched as f64 / total * scale, unmatched as f64 / total * scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyAssumptions {
    pub m_much_greater_than_k: bool,
    pub k_ratio_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEstimate {
    pub eta1: Estimate,
    pub assumptions: EfficiencyAssumptions,
}

/// η₁ = α·(1+k)/2, valid when matched modes dominate (M ≫ K). The error is
/// propagated to first order from α only.
pub fn estimate_eta1(alpha: Estimate, k_ratio: f64) -> Result<EfficiencyEstimate> {
    if !(alpha.value > 0.0) {
        return Err(Error::param("alpha", format!("must be > 0, got {}", alpha.value)));
    }
    if !(k_ratio > 0.0) || !k_ratio.is_finite() {
        return Err(Error::param("k_ratio", format!("must be > 0, got {k_ratio}")));
    }
    let factor = (1.0 + k_ratio) / 2.0;
    Ok(EfficiencyEstimate {
        eta1: Estimate::new(alpha.value * factor, alpha.std_error * factor, alpha.n_samples),
        assumptions: EfficiencyAssumptions {
            m_much_greater_than_k: true,
            k_ratio_used: k_ratio,
        },
    })
}

/// Twin-beam squeezing in dB, −10·log₁₀(NRF).
pub fn squeezing_db(nrf: f64) -> Result<f64> {
    if !(nrf > 0.0) {
        return Err(Error::param("nrf", format!("must be > 0, got {nrf}")));
    }
    Ok(-10.0 * nrf.log10())
}

/// Pulse energy in joules of `n_photons` photons at `wavelength_nm`.
pub fn photons_to_energy(n_photons: f64, wavelength_nm: f64) -> Result<f64> {
    if !(n_photons > 0.0) {
        return Err(Error::param("n_photons", format!("must be > 0, got {n_photons}")));
    }
    if !(wavelength_nm > 0.0) {
        return Err(Error::param(
            "wavelength_nm",
            format!("must be > 0, got {wavelength_nm}"),
        ));
    }
    Ok(n_photons * constants::HC_JOULE_METRE / (wavelength_nm * 1e-9))
}
