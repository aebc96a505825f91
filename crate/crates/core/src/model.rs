//! Generative model of multi-mode twin beams and their photodetection.
//!
//! Each matched mode is a thermal (Bose–Einstein) mode whose photon number is
//! copied into both arms; unmatched modes are independent thermal modes seen
//! by one arm only. Detection is binomial thinning followed by additive
//! Gaussian electronic noise in photon-equivalent units.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Geometric, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Upper bound (exclusive) on the relative gain jitter.
pub const MAX_GAIN_JITTER: f64 = 0.5;

/// Below this many modes the arm total is summed mode by mode.
const DIRECT_SUM_MODES: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    /// Mean photon number per mode.
    pub n_mean_per_mode: f64,
    pub matched_modes: u64,
    pub unmatched_modes_1: u64,
    pub unmatched_modes_2: u64,
    /// Relative standard deviation of the per-pulse common gain.
    #[serde(default)]
    pub gain_jitter_rel_std: f64,
}

impl SourceParams {
    /// Source with the same number of unmatched modes in both arms and no jitter.
    pub fn symmetric(n_mean_per_mode: f64, matched: u64, unmatched: u64) -> Self {
        SourceParams {
            n_mean_per_mode,
            matched_modes: matched,
            unmatched_modes_1: unmatched,
            unmatched_modes_2: unmatched,
            gain_jitter_rel_std: 0.0,
        }
    }

    pub fn with_jitter(mut self, rel_std: f64) -> Self {
        self.gain_jitter_rel_std = rel_std;
        self
    }

    pub fn with_n_mean(mut self, n_mean_per_mode: f64) -> Self {
        self.n_mean_per_mode = n_mean_per_mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_mean_per_mode;
        if !n.is_finite() || n < 0.0 {
            return Err(Error::param(
                "n_mean_per_mode",
                format!("must be finite and >= 0, got {n}"),
            ));
        }
        let j = self.gain_jitter_rel_std;
        if !j.is_finite() || !(0.0..MAX_GAIN_JITTER).contains(&j) {
            return Err(Error::param(
                "gain_jitter_rel_std",
                format!("must lie in [0, {MAX_GAIN_JITTER}), got {j}"),
            ));
        }
        if self.matched_modes + self.unmatched_modes_1 == 0 {
            return Err(Error::param(
                "unmatched_modes_1",
                "arm 1 sees no modes (matched_modes + unmatched_modes_1 must be >= 1)",
            ));
        }
        if self.matched_modes + self.unmatched_modes_2 == 0 {
            return Err(Error::param(
                "unmatched_modes_2",
                "arm 2 sees no modes (matched_modes + unmatched_modes_2 must be >= 1)",
            ));
        }
        Ok(())
    }

    /// Expected undetected photon number in each arm.
    pub fn arm_means(&self) -> [f64; 2] {
        let n = self.n_mean_per_mode;
        [
            (self.matched_modes + self.unmatched_modes_1) as f64 * n,
            (self.matched_modes + self.unmatched_modes_2) as f64 * n,
        ]
    }
}

/// Photodetector with propagation losses folded into `efficiency`.
/// Noise parameters are in photon-equivalent units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    pub efficiency: f64,
    #[serde(default)]
    pub noise_mean: f64,
    #[serde(default)]
    pub noise_var: f64,
}

impl DetectorParams {
    pub fn ideal() -> Self {
        DetectorParams {
            efficiency: 1.0,
            noise_mean: 0.0,
            noise_var: 0.0,
        }
    }

    pub fn noiseless(efficiency: f64) -> Self {
        DetectorParams {
            efficiency,
            noise_mean: 0.0,
            noise_var: 0.0,
        }
    }

    pub fn with_noise(mut self, mean: f64, var: f64) -> Self {
        self.noise_mean = mean;
        self.noise_var = var;
        self
    }

    pub fn validate(&self, which: usize) -> Result<()> {
        let e = self.efficiency;
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::param(
                format!("detectors[{which}].efficiency"),
                format!("must lie in [0, 1], got {e}"),
            ));
        }
        if !self.noise_mean.is_finite() {
            return Err(Error::param(format!("detectors[{which}].noise_mean"), "must be finite"));
        }
        let v = self.noise_var;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::param(
                format!("detectors[{which}].noise_var"),
                format!("must be finite and >= 0, got {v}"),
            ));
        }
        Ok(())
    }
}

/// One laser shot: the photon-equivalent readings of both detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub pulse_id: u64,
    pub s1: f64,
    pub s2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    TwinBeam,
    Coherent,
    Dark,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::TwinBeam => "twin_beam",
            DatasetKind::Coherent => "coherent",
            DatasetKind::Dark => "dark",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "twin_beam" => Some(DatasetKind::TwinBeam),
            "coherent" => Some(DatasetKind::Coherent),
            "dark" => Some(DatasetKind::Dark),
            _ => None,
        }
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Detector channel. `One` is the signal (target) arm by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    One,
    Two,
}

impl Channel {
    pub fn other(self) -> Channel {
        match self {
            Channel::One => Channel::Two,
            Channel::Two => Channel::One,
        }
    }

    #[inline]
    pub fn value(self, r: &PulseRecord) -> f64 {
        match self {
            Channel::One => r.s1,
            Channel::Two => r.s2,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Channel::One => 0,
            Channel::Two => 1,
        }
    }
}

/// What to simulate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunSpec {
    TwinBeam {
        source: SourceParams,
        detectors: [DetectorParams; 2],
    },
    /// Independent Poisson light in both arms; `means` are the photon numbers
    /// reaching the detectors before thinning.
    Coherent {
        means: [f64; 2],
        detectors: [DetectorParams; 2],
    },
    Dark {
        detectors: [DetectorParams; 2],
    },
}

impl RunSpec {
    pub fn kind(&self) -> DatasetKind {
        match self {
            RunSpec::TwinBeam { .. } => DatasetKind::TwinBeam,
            RunSpec::Coherent { .. } => DatasetKind::Coherent,
            RunSpec::Dark { .. } => DatasetKind::Dark,
        }
    }

    pub fn detectors(&self) -> [DetectorParams; 2] {
        match *self {
            RunSpec::TwinBeam { detectors, .. } | RunSpec::Coherent { detectors, .. } | RunSpec::Dark { detectors } => {
                detectors
            }
        }
    }

    /// Coherent calibration light matched to a twin-beam source's arm means.
    pub fn coherent_for(source: &SourceParams, detectors: [DetectorParams; 2]) -> Self {
        RunSpec::Coherent {
            means: source.arm_means(),
            detectors,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.detectors().iter().enumerate() {
            d.validate(i)?;
        }
        match self {
            RunSpec::TwinBeam { source, .. } => source.validate(),
            RunSpec::Coherent { means, .. } => {
                for (i, m) in means.iter().enumerate() {
                    if !m.is_finite() || *m < 0.0 {
                        return Err(Error::param(
                            format!("coherent_means[{i}]"),
                            format!("must be finite and >= 0, got {m}"),
                        ));
                    }
                }
                Ok(())
            }
            RunSpec::Dark { .. } => Ok(()),
        }
    }
}

/// One measurement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: DatasetKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source: Option<SourceParams>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coherent_means: Option<[f64; 2]>,
    pub detectors: [DetectorParams; 2],
    pub seed: u64,
    /// Pulses whose common gain was clamped at zero.
    #[serde(default)]
    pub gain_clamp_events: u64,
    #[serde(skip)]
    pub records: Vec<PulseRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn channel(&self, ch: Channel) -> Vec<f64> {
        self.records.iter().map(|r| ch.value(r)).collect()
    }

    pub fn expect_kind(&self, kind: DatasetKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::WrongDatasetKind {
                expected: kind.to_string(),
                got: self.kind.to_string(),
            })
        }
    }
}

/// Draws one thermal (Bose–Einstein) mode: P(n) = n̄ⁿ / (1+n̄)ⁿ⁺¹.
pub fn sample_thermal_mode<R: Rng + ?Sized>(n_mean: f64, rng: &mut R) -> u64 {
    if n_mean <= 0.0 {
        return 0;
    }
    Geometric::new(1.0 / (1.0 + n_mean))
        .expect("success probability in (0, 1]")
        .sample(rng)
}

/// Total photon number of `modes` independent thermal modes of mean `n_mean`.
///
/// Large mode counts use the gamma–Poisson representation of the negative
/// binomial, which has the same distribution as the mode-by-mode sum.
pub fn sample_thermal_modes<R: Rng + ?Sized>(modes: u64, n_mean: f64, rng: &mut R) -> u64 {
    if modes == 0 || n_mean <= 0.0 {
        return 0;
    }
    if modes <= DIRECT_SUM_MODES {
        return (0..modes).map(|_| sample_thermal_mode(n_mean, rng)).sum();
    }
    let intensity = Gamma::new(modes as f64, n_mean)
        .expect("positive shape and scale")
        .sample(rng);
    sample_poisson(intensity, rng)
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// True (undetected) photon numbers of one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseDraw {
    pub n1: u64,
    pub n2: u64,
    pub gain_clamped: bool,
}

pub fn sample_pulse<R: Rng + ?Sized>(source: &SourceParams, rng: &mut R) -> PulseDraw {
    let z: f64 = StandardNormal.sample(rng);
    let raw_gain = 1.0 + source.gain_jitter_rel_std * z;
    let gain_clamped = raw_gain < 0.0;
    let n_mean = raw_gain.max(0.0) * source.n_mean_per_mode;

    let matched = sample_thermal_modes(source.matched_modes, n_mean, rng);
    let extra1 = sample_thermal_modes(source.unmatched_modes_1, n_mean, rng);
    let extra2 = sample_thermal_modes(source.unmatched_modes_2, n_mean, rng);
    PulseDraw {
        n1: matched + extra1,
        n2: matched + extra2,
        gain_clamped,
    }
}

/// Binomial thinning: each photon survives independently with `efficiency`.
pub fn thin<R: Rng + ?Sized>(n: u64, efficiency: f64, rng: &mut R) -> u64 {
    if n == 0 || efficiency <= 0.0 {
        return 0;
    }
    if efficiency >= 1.0 {
        return n;
    }
    Binomial::new(n, efficiency).expect("probability in (0, 1)").sample(rng)
}

/// Detected value in photon-equivalents: thinned count plus electronic noise.
pub fn detect<R: Rng + ?Sized>(n_true: u64, det: &DetectorParams, rng: &mut R) -> f64 {
    thin(n_true, det.efficiency, rng) as f64 + electronic_noise(det, rng)
}

fn electronic_noise<R: Rng + ?Sized>(det: &DetectorParams, rng: &mut R) -> f64 {
    if det.noise_var > 0.0 {
        Normal::new(det.noise_mean, det.noise_var.sqrt())
            .expect("finite noise parameters")
            .sample(rng)
    } else {
        det.noise_mean
    }
}

/// Simulates `n_pulses` shots. Pulse `i` draws only from the stream keyed by
/// `(seed, kind, i)`, so the output is identical for any thread count.
pub fn simulate_run(spec: &RunSpec, n_pulses: usize, seed: u64) -> Result<Dataset> {
    if n_pulses == 0 {
        return Err(Error::param("n_pulses", "must be >= 1"));
    }
    spec.validate()?;

    let detectors = spec.detectors();
    let (domain, source, coherent_means) = match *spec {
        RunSpec::TwinBeam { source, .. } => (Domain::TwinBeam, Some(source), None),
        RunSpec::Coherent { means, .. } => (Domain::Coherent, None, Some(means)),
        RunSpec::Dark { .. } => (Domain::Dark, None, None),
    };

    let pulses: Vec<(PulseRecord, bool)> = (0..n_pulses as u64)
        .into_par_iter()
        .map(|pulse_id| {
            let mut rng = rng::stream(seed, domain, pulse_id);
            let (n1, n2, clamped) = match *spec {
                RunSpec::TwinBeam { ref source, .. } => {
                    let d = sample_pulse(source, &mut rng);
                    (d.n1, d.n2, d.gain_clamped)
                }
                RunSpec::Coherent { means, .. } => (
                    sample_poisson(means[0], &mut rng),
                    sample_poisson(means[1], &mut rng),
                    false,
                ),
                RunSpec::Dark { .. } => (0, 0, false),
            };
            let s1 = detect(n1, &detectors[0], &mut rng);
            let s2 = detect(n2, &detectors[1], &mut rng);
            (PulseRecord { pulse_id, s1, s2 }, clamped)
        })
        .collect();

    let gain_clamp_events = pulses.iter().filter(|(_, c)| *c).count() as u64;
    Ok(Dataset {
        kind: spec.kind(),
        source,
        coherent_means,
        detectors,
        seed,
        gain_clamp_events,
        records: pulses.into_iter().map(|(r, _)| r).collect(),
    })
}

/// Runs `f` on a dedicated pool with `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

/// Mean photons per mode from pump power via the parametric-gain law
/// N = sinh²(c·√P).
pub fn pump_power_to_n_mode(power_mw: f64, gain_coeff: f64) -> Result<f64> {
    if !power_mw.is_finite() || power_mw < 0.0 {
        return Err(Error::param("power_mW", format!("must be >= 0, got {power_mw}")));
    }
    if !gain_coeff.is_finite() || gain_coeff <= 0.0 {
        return Err(Error::param("gain_coeff", format!("must be > 0, got {gain_coeff}")));
    }
    Ok((gain_coeff * power_mw.sqrt()).sinh().powi(2))
}
