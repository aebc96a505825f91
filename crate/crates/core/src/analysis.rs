//! One operating point end to end: twin-beam run plus its coherent and dark
//! calibration runs, and the standard set of estimates on them.

use serde::{Deserialize, Serialize};

use crate::conditioning::theoretical_conditional_fano;
use crate::error::Result;
use crate::model::{simulate_run, Channel, Dataset, DatasetKind, DetectorParams, RunSpec, SourceParams};
use crate::rng::derive_seed;
use crate::stats::{
    self, balancing_k_estimate, fano, nrf_corrected, nrf_raw, shot_noise_empirical, shot_noise_variance, Bootstrap,
    Estimate, NoiseWarning,
};

/// A twin-beam run with matching calibration runs. The coherent run carries
/// the same photon numbers per arm as the twin beams.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    pub twin: Dataset,
    pub coherent: Dataset,
    pub dark: Dataset,
}

/// All three runs share `seed`; their random streams are separated by kind.
pub fn simulate_operating_point(
    source: &SourceParams,
    detectors: [DetectorParams; 2],
    n_pulses: usize,
    seed: u64,
) -> Result<OperatingPoint> {
    Ok(OperatingPoint {
        twin: simulate_run(
            &RunSpec::TwinBeam {
                source: *source,
                detectors,
            },
            n_pulses,
            seed,
        )?,
        coherent: simulate_run(&RunSpec::coherent_for(source, detectors), n_pulses, seed)?,
        dark: simulate_run(&RunSpec::Dark { detectors }, n_pulses, seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAnalysis {
    pub k: Estimate,
    pub mean1: f64,
    pub mean2: f64,
    /// Poisson shot-noise level from the coherent-run means (dark offsets removed).
    pub shot_noise_analytic: f64,
    /// Var(s1 − k·s2) of the coherent run.
    pub shot_noise_empirical: Estimate,
    pub nrf_raw: Estimate,
    pub nrf_est: Estimate,
    pub f1_raw: Estimate,
    pub f2_raw: Estimate,
    pub f1_est: Estimate,
    pub f2_est: Estimate,
    /// Conditional Fano factor predicted from `f1_est`, `f2_est`, `nrf_est`.
    pub f1_conditional_theory: f64,
    pub warnings: Vec<NoiseWarning>,
}

pub fn analyze_point(
    twin: &Dataset,
    coherent: &Dataset,
    dark1: &Dataset,
    dark2: &Dataset,
    boot: &Bootstrap,
) -> Result<PointAnalysis> {
    twin.expect_kind(DatasetKind::TwinBeam)?;
    coherent.expect_kind(DatasetKind::Coherent)?;
    dark1.expect_kind(DatasetKind::Dark)?;
    dark2.expect_kind(DatasetKind::Dark)?;

    let sub = |i: u64| boot.with_seed(derive_seed(boot.seed, i));
    let k = balancing_k_estimate(twin)?;
    let snl = shot_noise_empirical(coherent, k.value)?;
    let (d1_mean, _) = stats::dark_moments(dark1, Channel::One)?;
    let (d2_mean, _) = stats::dark_moments(dark2, Channel::Two)?;
    let c1 = mean(coherent, Channel::One) - d1_mean;
    let c2 = mean(coherent, Channel::Two) - d2_mean;

    let raw = nrf_raw(twin, k.value, snl.value, &sub(1))?;
    let corrected = nrf_corrected(twin, coherent, dark1, dark2, k.value, &sub(2))?;
    let f1_raw = fano(twin, Channel::One, None, &sub(3))?;
    let f2_raw = fano(twin, Channel::Two, None, &sub(4))?;
    let f1_est = fano(twin, Channel::One, Some(dark1), &sub(5))?;
    let f2_est = fano(twin, Channel::Two, Some(dark2), &sub(6))?;
    let theory = theoretical_conditional_fano(f1_est.value, f2_est.value, corrected.estimate.value)?;

    Ok(PointAnalysis {
        k,
        mean1: mean(twin, Channel::One),
        mean2: mean(twin, Channel::Two),
        shot_noise_analytic: shot_noise_variance(c1, c2, k.value),
        shot_noise_empirical: snl,
        nrf_raw: raw,
        nrf_est: corrected.estimate,
        f1_raw,
        f2_raw,
        f1_est,
        f2_est,
        f1_conditional_theory: theory,
        warnings: corrected.warnings,
    })
}

fn mean(ds: &Dataset, ch: Channel) -> f64 {
    stats::mean_var(ds.records.iter().map(|r| ch.value(r))).0
}
