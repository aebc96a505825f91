//! Parameter sets that place the simulator in the measured regime: a
//! multi-mode source of ~6·10⁵ detected photons per pulse, 0.3–1.4 photons
//! per mode, and photodiodes with electronic noise well below shot noise.

use crate::calibration::alpha_beta_theory;
use crate::model::{DetectorParams, SourceParams};

/// Linear NRF model targeted by the squeezing sweep: NRF = 1 − α + β·N_m.
pub const TARGET_ALPHA: f64 = 0.857;
pub const TARGET_BETA: f64 = 0.0916;
/// Ratio of detector readings ⟨N₁⟩/⟨N₂⟩ (= η₁/η₂ for equal mode counts).
pub const READING_RATIO: f64 = 1.0116;

/// Photons per mode at the six squeezing-sweep operating points.
pub const SWEEP_N_MODE: [f64; 6] = [0.33, 0.544, 0.758, 0.972, 1.186, 1.4];

/// Mode counts with K/M = β/α, so that `alpha_beta_theory` gives the target
/// line once η₁ is set by [`sweep_detectors`].
pub const SWEEP_MATCHED_MODES: u64 = 426_000;
pub const SWEEP_UNMATCHED_MODES: u64 = 45_533;

/// Photon-equivalent electronic noise used by all presets.
pub const NOISE_VAR: f64 = 3.0e4;
pub const NOISE_MEAN: [f64; 2] = [120.0, 95.0];

pub fn sweep_source(n_mean_per_mode: f64) -> SourceParams {
    SourceParams::symmetric(n_mean_per_mode, SWEEP_MATCHED_MODES, SWEEP_UNMATCHED_MODES)
}

/// η₁ = α(1+k)(M+K)/(2M) and η₂ = η₁/k.
pub fn sweep_detectors() -> [DetectorParams; 2] {
    let m = SWEEP_MATCHED_MODES as f64;
    let total = m + SWEEP_UNMATCHED_MODES as f64;
    let eta1 = TARGET_ALPHA * (1.0 + READING_RATIO) * total / (2.0 * m);
    detectors(eta1, eta1 / READING_RATIO)
}

/// (α, β) implied by the sweep preset.
pub fn sweep_alpha_beta() -> (f64, f64) {
    let eta1 = sweep_detectors()[0].efficiency;
    alpha_beta_theory(SWEEP_MATCHED_MODES, SWEEP_UNMATCHED_MODES, eta1, READING_RATIO)
        .expect("preset parameters are valid")
}

/// Brightest heralding point: N_m = 1.4, η₁ = 0.862, ⟨N₁⟩ ≈ 6.3·10⁵.
pub const BRIGHT_N_MODE: f64 = 1.4;
pub const BRIGHT_MATCHED_MODES: u64 = 478_630;
pub const BRIGHT_UNMATCHED_MODES: u64 = 43_410;
pub const BRIGHT_ETA1: f64 = 0.862;
/// Common gain jitter giving an unconditional F₁ ≈ 4.5.
pub const BRIGHT_GAIN_JITTER: f64 = 0.00192;

pub fn bright_source() -> SourceParams {
    SourceParams::symmetric(BRIGHT_N_MODE, BRIGHT_MATCHED_MODES, BRIGHT_UNMATCHED_MODES).with_jitter(BRIGHT_GAIN_JITTER)
}

pub fn bright_detectors() -> [DetectorParams; 2] {
    detectors(BRIGHT_ETA1, BRIGHT_ETA1 / READING_RATIO)
}

fn detectors(eta1: f64, eta2: f64) -> [DetectorParams; 2] {
    [
        DetectorParams::noiseless(eta1).with_noise(NOISE_MEAN[0], NOISE_VAR),
        DetectorParams::noiseless(eta2).with_noise(NOISE_MEAN[1], NOISE_VAR),
    ]
}

/// Same detectors without electronic noise.
pub fn noiseless(dets: [DetectorParams; 2]) -> [DetectorParams; 2] {
    dets.map(|d| DetectorParams::noiseless(d.efficiency))
}
