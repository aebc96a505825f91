//! Heralded post-selection.
//!
//! A pulse is kept when its control-channel reading falls inside a window of
//! half-width SD/Q around a chosen level, SD being the control-channel
//! standard deviation of the dataset being conditioned. The target channel of
//! the kept pulses is the heralded state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Channel, Dataset, PulseRecord};
use crate::rng;
use crate::stats::{self, bootstrap_errors, weighted_mean_var, Bootstrap, Estimate, Pulses, Resample};

/// Smallest selection for which a conditional Fano factor is reported.
pub const MIN_SELECTED: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Center {
    ControlMean,
    Absolute(f64),
    /// Control mean plus `delta` control standard deviations.
    OffsetInSd(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningSpec {
    /// Condition strength; the window is 2·SD/q wide.
    pub q: f64,
    #[serde(default = "default_center")]
    pub center: Center,
    /// Heralding channel; the other channel is the target.
    #[serde(default = "default_control")]
    pub control: Channel,
}

fn default_center() -> Center {
    Center::ControlMean
}

fn default_control() -> Channel {
    Channel::Two
}

impl ConditioningSpec {
    pub fn new(q: f64) -> Self {
        ConditioningSpec {
            q,
            center: Center::ControlMean,
            control: Channel::Two,
        }
    }

    pub fn centered(mut self, center: Center) -> Self {
        self.center = center;
        self
    }

    pub fn target(&self) -> Channel {
        self.control.other()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.q.is_finite() || self.q <= 0.0 {
            return Err(Error::param("q", format!("must be finite and > 0, got {}", self.q)));
        }
        let level = match self.center {
            Center::ControlMean => 0.0,
            Center::Absolute(x) | Center::OffsetInSd(x) => x,
        };
        if !level.is_finite() {
            return Err(Error::param("center", "must be finite"));
        }
        Ok(())
    }
}

/// Closed control-channel interval [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Window realized on `records` for `spec`.
pub fn window_for(records: &[PulseRecord], spec: &ConditioningSpec) -> Result<Window> {
    window_of(records, spec)
}

fn window_of<P: Pulses + ?Sized>(records: &P, spec: &ConditioningSpec) -> Result<Window> {
    spec.validate()?;
    let (mean, var, n) = weighted_mean_var(records.weighted().map(|(r, w)| (spec.control.value(r), w)));
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::param("control channel", "has zero spread; window is undefined"));
    }
    let center = match spec.center {
        Center::ControlMean => mean,
        Center::Absolute(level) => level,
        Center::OffsetInSd(delta) => mean + delta * sd,
    };
    let half = sd / spec.q;
    Ok(Window {
        lo: center - half,
        hi: center + half,
    })
}

/// Pulses whose `control` reading lies in `window`.
pub fn apply_window(records: &[PulseRecord], window: &Window, control: Channel) -> Vec<PulseRecord> {
    records
        .iter()
        .filter(|r| window.contains(control.value(r)))
        .copied()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub records: Vec<PulseRecord>,
    pub window: Window,
    pub total: usize,
}

impl Selection {
    pub fn success_rate(&self) -> f64 {
        self.records.len() as f64 / self.total as f64
    }
}

pub fn select(ds: &Dataset, spec: &ConditioningSpec) -> Result<Selection> {
    if ds.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let window = window_for(&ds.records, spec)?;
    let records = apply_window(&ds.records, &window, spec.control);
    if records.is_empty() {
        return Err(Error::EmptySelection {
            lo: window.lo,
            hi: window.hi,
        });
    }
    Ok(Selection {
        records,
        window,
        total: ds.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalResult {
    /// Target-channel Fano factor of the heralded pulses, target-detector
    /// noise subtracted.
    pub fano_target: Estimate,
    /// Heralded target photon number, target-detector noise offset removed.
    pub mean_target: Estimate,
    pub success_rate: f64,
    pub n_selected: u64,
    pub n_total: u64,
    pub window: Window,
}

/// Fano factor, noise-corrected mean and selection of one conditioning pass.
/// `dark` is the target detector's (mean, variance).
/// Heralded moments: (Fano, dark-corrected mean, window, pulses kept).
fn conditional_stats<P: Pulses + ?Sized>(
    records: &P,
    spec: &ConditioningSpec,
    dark: Option<(f64, f64)>,
) -> Result<(f64, f64, Window, usize)> {
    let window = window_of(records, spec)?;
    let target = spec.target();
    let (m, v, kept) = weighted_mean_var(
        records
            .weighted()
            .filter(|(r, _)| window.contains(spec.control.value(r)))
            .map(|(r, w)| (target.value(r), w)),
    );
    if kept == 0 {
        return Err(Error::EmptySelection {
            lo: window.lo,
            hi: window.hi,
        });
    }
    if kept < MIN_SELECTED {
        return Err(Error::SelectionTooSmall {
            got: kept,
            needed: MIN_SELECTED,
        });
    }
    let (dm, dv) = dark.unwrap_or((0.0, 0.0));
    let fano = stats::fano_from_moments(v, m, dv, dm)?;
    Ok((fano, m - dm, window, kept))
}

/// Fano factor of the heralded target channel.
///
/// Only the target detector's dark noise is subtracted; the control detector's
/// noise stays in, since it degrades the heralding itself. The bootstrap
/// resamples the whole dataset and repeats the selection, so the variability
/// of SD and of the success rate enters the error.
pub fn conditional_fano(
    ds: &Dataset,
    spec: &ConditioningSpec,
    dark_target: Option<&Dataset>,
    boot: &Bootstrap,
) -> Result<ConditionalResult> {
    let target = spec.target();
    let dark = dark_target.map(|d| stats::dark_moments(d, target)).transpose()?;
    let (fano, mean, window, kept) = conditional_stats(&ds.records, spec, dark)?;

    let stat = |s: &[Resample<'_>]| {
        let dark = s.get(1).map(|d| {
            let (m, v, _) = weighted_mean_var(d.weighted().map(|(r, w)| (target.value(r), w)));
            (m, v)
        });
        match conditional_stats(&s[0], spec, dark) {
            Ok((f, m, _, _)) => vec![f, m],
            Err(_) => vec![f64::NAN, f64::NAN],
        }
    };
    let errors = match dark_target {
        Some(d) => bootstrap_errors(&[&ds.records, &d.records], boot, stat)?,
        None => bootstrap_errors(&[&ds.records], boot, stat)?,
    };

    let n = kept as u64;
    Ok(ConditionalResult {
        fano_target: Estimate::new(fano, errors[0], n),
        mean_target: Estimate::new(mean, errors[1], n),
        success_rate: kept as f64 / ds.len() as f64,
        n_selected: n,
        n_total: ds.len() as u64,
        window,
    })
}

/// Conditional Fano factor predicted from the unconditional Fano factors and
/// the NRF: F₁′ = F₁ − (F₁ + F₂ − 2·NRF)² / (4·F₂).
pub fn theoretical_conditional_fano(f1: f64, f2: f64, nrf: f64) -> Result<f64> {
    if !(f2 > 0.0) {
        return Err(Error::param("f2", format!("must be > 0, got {f2}")));
    }
    let s = f1 + f2 - 2.0 * nrf;
    Ok(f1 - s * s / (4.0 * f2))
}

/// One grid point of a sweep. Failed points are kept, not dropped.
#[derive(Debug)]
pub struct SweepPoint {
    pub param: f64,
    pub outcome: Result<ConditionalResult>,
}

/// Conditional Fano factor for each Q, window centered on the control mean.
pub fn sweep_q(
    ds: &Dataset,
    q_values: &[f64],
    dark_target: Option<&Dataset>,
    boot: &Bootstrap,
) -> Result<Vec<SweepPoint>> {
    sweep_q_with(ds, q_values, ConditioningSpec::new(1.0), dark_target, boot)
}

/// [`sweep_q`] with a caller-chosen control channel and center.
pub fn sweep_q_with(
    ds: &Dataset,
    q_values: &[f64],
    base: ConditioningSpec,
    dark_target: Option<&Dataset>,
    boot: &Bootstrap,
) -> Result<Vec<SweepPoint>> {
    if q_values.is_empty() {
        return Err(Error::param("q_values", "must not be empty"));
    }
    for &q in q_values {
        ConditioningSpec { q, ..base }.validate()?;
    }
    Ok(q_values
        .iter()
        .enumerate()
        .map(|(i, &q)| SweepPoint {
            param: q,
            outcome: conditional_fano(ds, &ConditioningSpec { q, ..base }, dark_target, &point_boot(boot, i)),
        })
        .collect())
}

/// Conditional Fano factor for windows centered at control mean + δ·SD.
pub fn sweep_center(
    ds: &Dataset,
    deltas_in_sd: &[f64],
    q: f64,
    dark_target: Option<&Dataset>,
    boot: &Bootstrap,
) -> Result<Vec<SweepPoint>> {
    ConditioningSpec::new(q).validate()?;
    if deltas_in_sd.is_empty() {
        return Err(Error::param("deltas_in_sd", "must not be empty"));
    }
    Ok(deltas_in_sd
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let spec = ConditioningSpec::new(q).centered(Center::OffsetInSd(delta));
            SweepPoint {
                param: delta,
                outcome: conditional_fano(ds, &spec, dark_target, &point_boot(boot, i)),
            }
        })
        .collect())
}

fn point_boot(boot: &Bootstrap, index: usize) -> Bootstrap {
    boot.with_seed(rng::derive_seed(boot.seed, index as u64))
}
