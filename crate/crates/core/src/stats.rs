//! Moment estimators, the noise reduction factor and the Fano factor, with
//! electronic-noise subtraction and pulse-level bootstrap errors.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Channel, Dataset, PulseRecord};
use crate::rng::{self, Domain};

/// Default number of bootstrap replicates.
pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 100;

/// Dark-noise variance above this fraction of the shot-noise level triggers a
/// warning in [`nrf_corrected`].
pub const NOISE_WARN_FRACTION: f64 = 0.5;

/// Count, mean, unbiased variance and fourth central moment of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    /// Biased (1/n) fourth central moment.
    pub fourth_central: f64,
}

impl Moments {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn variance_std_error(&self) -> f64 {
        let n = self.count as f64;
        let s4 = self.variance * self.variance;
        ((self.fourth_central - s4 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// Online accumulator for the first four central moments.
#[derive(Debug, Clone, Copy, Default)]
pub struct MomentAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl MomentAccumulator {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn finish(&self) -> Result<Moments> {
        if self.n < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: self.n as usize,
            });
        }
        let n = self.n as f64;
        Ok(Moments {
            count: self.n,
            mean: self.mean,
            variance: (self.m2 / (n - 1.0)).max(0.0),
            fourth_central: self.m4 / n,
        })
    }
}

/// Single-pass moments of `values`.
pub fn stream_moments<I: IntoIterator<Item = f64>>(values: I) -> Result<Moments> {
    let mut acc = MomentAccumulator::default();
    for x in values {
        acc.push(x);
    }
    acc.finish()
}

/// A statistic with its standard error and the number of pulses behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64, n_samples: u64) -> Self {
        Estimate {
            value,
            std_error: std_error.max(0.0),
            n_samples,
        }
    }

    pub fn exact(value: f64) -> Self {
        Estimate::new(value, 0.0, 0)
    }

    /// |self − other| in units of the combined standard error.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        let se = self.std_error.hypot(other.std_error);
        (self.value - other.value).abs() / se
    }
}

/// Bootstrap settings. Replicate `b` draws from the stream `(seed, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Bootstrap {
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

impl Bootstrap {
    pub fn new(resamples: usize, seed: u64) -> Self {
        Bootstrap { resamples, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Bootstrap { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resamples < MIN_RESAMPLES {
            return Err(Error::param(
                "resamples",
                format!("need at least {MIN_RESAMPLES}, got {}", self.resamples),
            ));
        }
        Ok(())
    }
}

/// A source of pulse records: a plain slice or a bootstrap replicate.
pub trait Pulses: Sync {
    /// Distinct pulses with their multiplicities.
    fn weighted(&self) -> impl Iterator<Item = (&PulseRecord, u32)>;

    /// Every pulse, repeated by its multiplicity.
    fn pulses(&self) -> impl Iterator<Item = &PulseRecord> {
        self.weighted().flat_map(|(r, c)| std::iter::repeat_n(r, c as usize))
    }
}

impl Pulses for [PulseRecord] {
    fn weighted(&self) -> impl Iterator<Item = (&PulseRecord, u32)> {
        self.iter().map(|r| (r, 1))
    }

    fn pulses(&self) -> impl Iterator<Item = &PulseRecord> {
        self.iter()
    }
}

impl Pulses for Vec<PulseRecord> {
    fn weighted(&self) -> impl Iterator<Item = (&PulseRecord, u32)> {
        self.as_slice().weighted()
    }

    fn pulses(&self) -> impl Iterator<Item = &PulseRecord> {
        self.iter()
    }
}

/// One bootstrap replicate: the original pulses, each with the number of
/// times it was drawn. Iteration repeats a pulse by its multiplicity and
/// keeps the original order.
#[derive(Debug, Clone, Copy)]
pub struct Resample<'a> {
    records: &'a [PulseRecord],
    counts: &'a [u32],
}

impl Resample<'_> {
    /// Number of draws, equal to the size of the original sample.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_vec(&self) -> Vec<PulseRecord> {
        self.pulses().copied().collect()
    }
}

impl Pulses for Resample<'_> {
    fn weighted(&self) -> impl Iterator<Item = (&PulseRecord, u32)> {
        self.records.iter().zip(self.counts.iter().copied())
    }
}

/// Standard deviation of `statistic` over bootstrap replicates.
///
/// Each sample in `samples` is resampled independently, pulse by pulse, so the
/// pairing of the two channels within a pulse is preserved. The same slice
/// passed twice is resampled once. Replicates on which the statistic is not
/// finite are dropped.
pub fn bootstrap_error<F>(samples: &[&[PulseRecord]], cfg: &Bootstrap, statistic: F) -> Result<f64>
where
    F: Fn(&[Resample<'_>]) -> f64 + Sync,
{
    Ok(bootstrap_errors(samples, cfg, |s| vec![statistic(s)])?[0])
}

/// [`bootstrap_error`] for a statistic with several outputs; returns one
/// standard deviation per output.
pub fn bootstrap_errors<F>(samples: &[&[PulseRecord]], cfg: &Bootstrap, statistic: F) -> Result<Vec<f64>>
where
    F: Fn(&[Resample<'_>]) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    for s in samples {
        if s.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
    }
    let slot: Vec<usize> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            samples[..i]
                .iter()
                .position(|t| std::ptr::eq(t.as_ptr(), s.as_ptr()) && t.len() == s.len())
                .unwrap_or(i)
        })
        .collect();
    let replicates: Vec<Vec<f64>> = (0..cfg.resamples as u64)
        .into_par_iter()
        .map_init(
            || samples.iter().map(|s| vec![0u32; s.len()]).collect::<Vec<_>>(),
            |counts, b| {
                let mut rng = rng::stream(cfg.seed, Domain::Bootstrap, b);
                for (i, c) in counts.iter_mut().enumerate() {
                    if slot[i] != i {
                        continue;
                    }
                    c.fill(0);
                    let n = c.len();
                    for _ in 0..n {
                        c[rng.random_range(0..n)] += 1;
                    }
                }
                let reps: Vec<Resample<'_>> = samples
                    .iter()
                    .zip(&slot)
                    .map(|(records, &j)| Resample {
                        records,
                        counts: &counts[j],
                    })
                    .collect();
                statistic(&reps)
            },
        )
        .collect();

    let outputs = replicates.first().map_or(0, Vec::len);
    (0..outputs)
        .map(|j| {
            let finite = replicates.iter().map(|r| r[j]).filter(|x| x.is_finite());
            Ok(stream_moments(finite)?.std_dev())
        })
        .collect()
}

/// Mean and unbiased variance from sums shifted by the first value.
pub(crate) fn mean_var<I>(values: I) -> (f64, f64, usize)
where
    I: IntoIterator<Item = f64>,
{
    weighted_mean_var(values.into_iter().map(|x| (x, 1)))
}

/// [`mean_var`] of values repeated by integer multiplicities.
pub(crate) fn weighted_mean_var<I>(values: I) -> (f64, f64, usize)
where
    I: IntoIterator<Item = (f64, u32)>,
{
    let mut it = values.into_iter();
    let Some((first, w0)) = it.next() else {
        return (f64::NAN, f64::NAN, 0);
    };
    let (mut s, mut ss, mut n) = (0.0f64, 0.0f64, w0 as u64);
    for (x, w) in it {
        let d = x - first;
        let wf = w as f64;
        s += wf * d;
        ss += wf * d * d;
        n += w as u64;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let nf = n as f64;
    let mean = first + s / nf;
    let var = if n > 1 {
        ((ss - s * s / nf) / (nf - 1.0)).max(0.0)
    } else {
        f64::NAN
    };
    (mean, var, n as usize)
}

fn channel_mean_var<P: Pulses + ?Sized>(records: &P, ch: Channel) -> (f64, f64) {
    let (m, v, _) = weighted_mean_var(records.weighted().map(|(r, w)| (ch.value(r), w)));
    (m, v)
}

fn difference_var<P: Pulses + ?Sized>(records: &P, k: f64) -> f64 {
    weighted_mean_var(records.weighted().map(|(r, w)| (r.s1 - k * r.s2, w))).1
}

/// Gain-balancing coefficient k = ⟨s1⟩/⟨s2⟩.
pub fn balancing_k(ds: &Dataset) -> Result<f64> {
    balancing_k_of(&ds.records)
}

fn balancing_k_of(records: &[PulseRecord]) -> Result<f64> {
    let (m1, _) = channel_mean_var(records, Channel::One);
    let (m2, _) = channel_mean_var(records, Channel::Two);
    if !(m2 > 0.0) {
        return Err(Error::NonPositiveDenominator {
            what: "balancing coefficient ⟨s2⟩",
            value: m2,
        });
    }
    Ok(m1 / m2)
}

/// k with a delta-method standard error.
pub fn balancing_k_estimate(ds: &Dataset) -> Result<Estimate> {
    let k = balancing_k(ds)?;
    let n = ds.len() as f64;
    let (m1, v1) = channel_mean_var(&ds.records, Channel::One);
    let (m2, v2) = channel_mean_var(&ds.records, Channel::Two);
    let cov = ds.records.iter().map(|r| (r.s1 - m1) * (r.s2 - m2)).sum::<f64>() / (n - 1.0);
    let rel_var = v1 / (m1 * m1) + v2 / (m2 * m2) - 2.0 * cov / (m1 * m2);
    Ok(Estimate::new(
        k,
        k.abs() * (rel_var.max(0.0) / n).sqrt(),
        ds.len() as u64,
    ))
}

/// Shot-noise variance of N₁ − k·N₂ for independent Poisson channels.
pub fn shot_noise_variance(mean1: f64, mean2: f64, k: f64) -> f64 {
    mean1 + k * k * mean2
}

/// Empirical Var(s1 − k·s2) of a coherent calibration run.
pub fn shot_noise_empirical(coh: &Dataset, k: f64) -> Result<Estimate> {
    let m = stream_moments(coh.records.iter().map(|r| r.s1 - k * r.s2))?;
    // value on the same summation path as the NRF estimators
    Ok(Estimate::new(
        difference_var(&coh.records, k),
        m.variance_std_error(),
        m.count,
    ))
}

/// Var(s1 − k·s2) / shot_noise, with bootstrap error over the twin-beam pulses.
pub fn nrf_raw(twin: &Dataset, k: f64, shot_noise: f64, boot: &Bootstrap) -> Result<Estimate> {
    if !(shot_noise > 0.0) {
        return Err(Error::NonPositiveDenominator {
            what: "shot-noise variance",
            value: shot_noise,
        });
    }
    if twin.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: twin.len(),
        });
    }
    let value = difference_var(&twin.records, k) / shot_noise;
    let se = bootstrap_error(&[&twin.records], boot, |s| difference_var(&s[0], k) / shot_noise)?;
    Ok(Estimate::new(value, se, twin.len() as u64))
}

/// Warning attached to an otherwise valid noise-corrected estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseWarning {
    pub detector: u8,
    /// Dark variance divided by the detector's shot-noise level.
    pub noise_to_shot_ratio: f64,
}

impl std::fmt::Display for NoiseWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "electronic noise of detector {} is {:.0}% of its shot-noise level",
            self.detector,
            100.0 * self.noise_to_shot_ratio
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedNrf {
    pub estimate: Estimate,
    pub warnings: Vec<NoiseWarning>,
}

fn corrected_ratio<P: Pulses + ?Sized>(twin: &P, coh: &P, dark1: &P, dark2: &P, k: f64) -> (f64, f64, f64) {
    let (_, vd1) = channel_mean_var(dark1, Channel::One);
    let (_, vd2) = channel_mean_var(dark2, Channel::Two);
    let noise = vd1 + k * k * vd2;
    let num = difference_var(twin, k) - noise;
    let den = difference_var(coh, k) - noise;
    (num, den, num / den)
}

/// Electronic-noise-corrected NRF:
/// [Var(N₁−kN₂) − Var(V_D1) − k²Var(V_D2)] / [Var(N₁coh−kN₂coh) − Var(V_D1) − k²Var(V_D2)].
///
/// Detector 1 noise is read from channel 1 of `dark1`, detector 2 noise from
/// channel 2 of `dark2`; the same dark run may be passed for both. Each
/// detector's dark variance must lie below its shot-noise level
/// ⟨s_coh⟩ − ⟨V_D⟩.
pub fn nrf_corrected(
    twin: &Dataset,
    coh: &Dataset,
    dark1: &Dataset,
    dark2: &Dataset,
    k: f64,
    boot: &Bootstrap,
) -> Result<CorrectedNrf> {
    for (ds, needed) in [(twin, 2), (coh, 2), (dark1, 2), (dark2, 2)] {
        if ds.len() < needed {
            return Err(Error::TooFewSamples { needed, got: ds.len() });
        }
    }

    let mut warnings = Vec::new();
    for (detector, ch, dark) in [(1u8, Channel::One, dark1), (2u8, Channel::Two, dark2)] {
        let (dm, dv) = channel_mean_var(&dark.records, ch);
        let (cm, _) = channel_mean_var(&coh.records, ch);
        let shot = cm - dm;
        if !(dv < shot) {
            return Err(Error::NoiseAboveShotNoise {
                detector,
                noise_var: dv,
                shot_noise: shot,
            });
        }
        let ratio = dv / shot;
        if ratio > NOISE_WARN_FRACTION {
            warnings.push(NoiseWarning {
                detector,
                noise_to_shot_ratio: ratio,
            });
        }
    }

    let (_, den, value) = corrected_ratio(&twin.records, &coh.records, &dark1.records, &dark2.records, k);
    if !(den > 0.0) {
        return Err(Error::NonPositiveDenominator {
            what: "noise-corrected shot-noise variance",
            value: den,
        });
    }
    let se = bootstrap_error(
        &[&twin.records, &coh.records, &dark1.records, &dark2.records],
        boot,
        |s| corrected_ratio(&s[0], &s[1], &s[2], &s[3], k).2,
    )?;
    Ok(CorrectedNrf {
        estimate: Estimate::new(value, se, twin.len() as u64),
        warnings,
    })
}

/// Fano factor with optional electronic-noise subtraction:
/// (Var(N) − Var(V_D)) / (⟨N⟩ − ⟨V_D⟩).
pub fn fano_from_moments(var_n: f64, mean_n: f64, var_dark: f64, mean_dark: f64) -> Result<f64> {
    let den = mean_n - mean_dark;
    if !(den > 0.0) {
        return Err(Error::NonPositiveDenominator {
            what: "Fano factor mean",
            value: den,
        });
    }
    Ok((var_n - var_dark) / den)
}

pub(crate) fn fano_of<P: Pulses + ?Sized>(records: &P, ch: Channel, dark: Option<(f64, f64)>) -> f64 {
    let (m, v) = channel_mean_var(records, ch);
    let (dm, dv) = dark.unwrap_or((0.0, 0.0));
    let den = m - dm;
    if den > 0.0 {
        (v - dv) / den
    } else {
        f64::NAN
    }
}

/// Fano factor of one channel of `ds`. When `dark` is given, its same-channel
/// noise moments are subtracted and it is resampled jointly in the bootstrap.
pub fn fano(ds: &Dataset, ch: Channel, dark: Option<&Dataset>, boot: &Bootstrap) -> Result<Estimate> {
    if ds.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: ds.len(),
        });
    }
    let (m, v) = channel_mean_var(&ds.records, ch);
    let value = match dark {
        Some(d) => {
            if d.len() < 2 {
                return Err(Error::TooFewSamples {
                    needed: 2,
                    got: d.len(),
                });
            }
            let (dm, dv) = channel_mean_var(&d.records, ch);
            fano_from_moments(v, m, dv, dm)?
        }
        None => fano_from_moments(v, m, 0.0, 0.0)?,
    };
    let se = match dark {
        Some(d) => bootstrap_error(&[&ds.records, &d.records], boot, |s| {
            let dmv = channel_mean_var(&s[1], ch);
            fano_of(&s[0], ch, Some(dmv))
        })?,
        None => bootstrap_error(&[&ds.records], boot, |s| fano_of(&s[0], ch, None))?,
    };
    Ok(Estimate::new(value, se, ds.len() as u64))
}

/// Dark-frame moments of one channel, as (mean, variance).
pub fn dark_moments(dark: &Dataset, ch: Channel) -> Result<(f64, f64)> {
    if dark.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: dark.len(),
        });
    }
    Ok(channel_mean_var(&dark.records, ch))
}
