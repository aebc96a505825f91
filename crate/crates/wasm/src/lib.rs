//! Browser bindings. Every export takes a JSON object of parameters (missing
//! keys fall back to a scaled-down version of the bright heralding preset) and
//! returns a JSON string. The `*_json` functions are the same operations for
//! native callers.

use serde::{Deserialize, Serialize};
use twinbeam::analysis::{analyze_point, simulate_operating_point, OperatingPoint};
use twinbeam::calibration::{alpha_beta_theory, fit_nrf_linear, squeezing_db};
use twinbeam::conditioning::{conditional_fano, select, ConditioningSpec};
use twinbeam::rng::derive_seed;
use twinbeam::{presets, Bootstrap, Channel, DetectorParams, Estimate, SourceParams};
use wasm_bindgen::prelude::*;

/// Largest run the demo accepts, to keep a browser tab responsive.
pub const MAX_PULSES: usize = 300_000;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub n_mode: f64,
    pub matched_modes: u64,
    pub unmatched_modes: u64,
    pub gain_jitter: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub noise_var: f64,
    pub pulses: usize,
    pub resamples: usize,
    pub seed: u64,
    /// N_m grid of the NRF curve.
    pub n_modes: Vec<f64>,
    /// Q grid of the heralding sweep.
    pub q_values: Vec<f64>,
    /// Q of the heralded histogram.
    pub q: f64,
    pub bins: usize,
}

impl Default for Params {
    fn default() -> Self {
        let [d1, d2] = presets::bright_detectors();
        Params {
            n_mode: presets::BRIGHT_N_MODE,
            matched_modes: presets::BRIGHT_MATCHED_MODES,
            unmatched_modes: presets::BRIGHT_UNMATCHED_MODES,
            gain_jitter: presets::BRIGHT_GAIN_JITTER,
            eta1: d1.efficiency,
            eta2: d2.efficiency,
            noise_var: presets::NOISE_VAR,
            pulses: 40_000,
            resamples: 100,
            seed: 1,
            n_modes: presets::SWEEP_N_MODE.to_vec(),
            q_values: vec![1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 20.0],
            q: 10.0,
            bins: 48,
        }
    }
}

impl Params {
    fn parse(input: &str) -> Result<Self, String> {
        let p: Params = if input.trim().is_empty() {
            Params::default()
        } else {
            serde_json::from_str(input).map_err(|e| format!("bad parameters: {e}"))?
        };
        if p.pulses == 0 || p.pulses > MAX_PULSES {
            return Err(format!("pulses must lie in 1..={MAX_PULSES}, got {}", p.pulses));
        }
        if p.bins < 2 || p.bins > 1000 {
            return Err(format!("bins must lie in 2..=1000, got {}", p.bins));
        }
        Ok(p)
    }

    fn source(&self, n_mode: f64) -> SourceParams {
        SourceParams::symmetric(n_mode, self.matched_modes, self.unmatched_modes).with_jitter(self.gain_jitter)
    }

    fn detectors(&self) -> [DetectorParams; 2] {
        [
            DetectorParams::noiseless(self.eta1).with_noise(presets::NOISE_MEAN[0], self.noise_var),
            DetectorParams::noiseless(self.eta2).with_noise(presets::NOISE_MEAN[1], self.noise_var),
        ]
    }

    fn boot(&self, index: u64) -> Bootstrap {
        Bootstrap::new(self.resamples, derive_seed(self.seed, index))
    }

    fn simulate(&self, n_mode: f64, index: u64) -> Result<OperatingPoint, String> {
        simulate_operating_point(
            &self.source(n_mode),
            self.detectors(),
            self.pulses,
            derive_seed(self.seed, index),
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Serialize)]
struct CurvePoint {
    n_mode: f64,
    nrf: Estimate,
}

#[derive(Serialize)]
struct Line {
    alpha: f64,
    beta: f64,
}

#[derive(Serialize)]
struct NrfCurve {
    points: Vec<CurvePoint>,
    fit: Option<FitLine>,
    theory: Line,
    best_squeezing_db: f64,
}

#[derive(Serialize)]
struct FitLine {
    alpha: Estimate,
    beta: Estimate,
    chi2_per_dof: f64,
}

/// Noise-corrected NRF at each N_m, the weighted line fit and the line
/// predicted from the mode counts and efficiencies.
pub fn nrf_vs_modes_json(input: &str) -> Result<String, String> {
    let p = Params::parse(input)?;
    if p.n_modes.is_empty() {
        return Err("n_modes must not be empty".into());
    }
    let mut points = Vec::new();
    for (i, &n_mode) in p.n_modes.iter().enumerate() {
        let op = p.simulate(n_mode, i as u64)?;
        let a =
            analyze_point(&op.twin, &op.coherent, &op.dark, &op.dark, &p.boot(i as u64)).map_err(|e| e.to_string())?;
        points.push(CurvePoint { n_mode, nrf: a.nrf_est });
    }
    let fit = if points.len() >= 2 {
        fit_nrf_linear(&points.iter().map(|c| (c.n_mode, c.nrf)).collect::<Vec<_>>())
            .ok()
            .map(|f| FitLine {
                alpha: f.alpha,
                beta: f.beta,
                chi2_per_dof: f.chi2_per_dof,
            })
    } else {
        None
    };
    let (alpha, beta) =
        alpha_beta_theory(p.matched_modes, p.unmatched_modes, p.eta1, p.eta1 / p.eta2).map_err(|e| e.to_string())?;
    let best = points.iter().map(|c| c.nrf.value).fold(f64::INFINITY, f64::min);
    let out = NrfCurve {
        best_squeezing_db: squeezing_db(best).unwrap_or(f64::NAN),
        points,
        fit,
        theory: Line { alpha, beta },
    };
    Ok(serde_json::to_string(&out).expect("serializable"))
}

#[derive(Serialize)]
struct QPoint {
    q: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fano: Option<Estimate>,
    success_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct QSweep {
    f1: Estimate,
    f2: Estimate,
    nrf: Estimate,
    /// Conditional Fano factor predicted from f1, f2 and nrf.
    theory: f64,
    points: Vec<QPoint>,
}

/// Heralded Fano factor of channel 1 against Q, with the unconditional
/// values and the predicted plateau.
pub fn q_sweep_json(input: &str) -> Result<String, String> {
    let p = Params::parse(input)?;
    let op = p.simulate(p.n_mode, 0)?;
    let a = analyze_point(&op.twin, &op.coherent, &op.dark, &op.dark, &p.boot(0)).map_err(|e| e.to_string())?;
    let points = p
        .q_values
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            match conditional_fano(
                &op.twin,
                &ConditioningSpec::new(q),
                Some(&op.dark),
                &p.boot(10 + i as u64),
            ) {
                Ok(r) => QPoint {
                    q,
                    fano: Some(r.fano_target),
                    success_rate: r.success_rate,
                    error: None,
                },
                Err(e) => QPoint {
                    q,
                    fano: None,
                    success_rate: 0.0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let out = QSweep {
        f1: a.f1_est,
        f2: a.f2_est,
        nrf: a.nrf_est,
        theory: a.f1_conditional_theory,
        points,
    };
    Ok(serde_json::to_string(&out).expect("serializable"))
}

#[derive(Serialize)]
struct Histogram {
    /// Bin edges in shot-noise units, (s1 − ⟨s1⟩)/√⟨s1⟩.
    edges: Vec<f64>,
    /// Probability densities per bin.
    unconditional: Vec<f64>,
    heralded: Vec<f64>,
    /// Poisson reference (unit-variance normal in these units).
    poisson: Vec<f64>,
    mean: f64,
    heralded_mean: f64,
    success_rate: f64,
    n_heralded: usize,
}

/// Channel-1 distribution of all pulses and of the heralded pulses at Q.
pub fn heralded_histogram_json(input: &str) -> Result<String, String> {
    let p = Params::parse(input)?;
    let op = p.simulate(p.n_mode, 0)?;
    let sel = select(&op.twin, &ConditioningSpec::new(p.q)).map_err(|e| e.to_string())?;

    let all: Vec<f64> = op.twin.channel(Channel::One);
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let unit = mean.max(1.0).sqrt();
    let half = 6.0;
    let width = 2.0 * half / p.bins as f64;
    let edges: Vec<f64> = (0..=p.bins).map(|i| -half + i as f64 * width).collect();
    let density = |values: &mut dyn Iterator<Item = f64>| {
        let mut counts = vec![0.0; p.bins];
        let mut n = 0usize;
        for v in values {
            n += 1;
            let x = (v - mean) / unit;
            if (-half..half).contains(&x) {
                counts[((x + half) / width) as usize] += 1.0;
            }
        }
        counts.iter_mut().for_each(|c| *c /= n.max(1) as f64 * width);
        counts
    };
    let unconditional = density(&mut all.iter().copied());
    let heralded = density(&mut sel.records.iter().map(|r| r.s1));
    let poisson = edges
        .windows(2)
        .map(|w| {
            let x = 0.5 * (w[0] + w[1]);
            (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .collect();
    let heralded_mean = sel.records.iter().map(|r| r.s1).sum::<f64>() / sel.records.len() as f64;
    let out = Histogram {
        edges,
        unconditional,
        heralded,
        poisson,
        mean,
        heralded_mean,
        success_rate: sel.success_rate(),
        n_heralded: sel.records.len(),
    };
    Ok(serde_json::to_string(&out).expect("serializable"))
}

/// Default parameter object, as JSON.
#[wasm_bindgen(js_name = defaultParams)]
pub fn default_params() -> String {
    let p = Params::default();
    serde_json::json!({
        "n_mode": p.n_mode,
        "matched_modes": p.matched_modes,
        "unmatched_modes": p.unmatched_modes,
        "gain_jitter": p.gain_jitter,
        "eta1": p.eta1,
        "eta2": p.eta2,
        "noise_var": p.noise_var,
        "pulses": p.pulses,
        "resamples": p.resamples,
        "seed": p.seed,
        "n_modes": p.n_modes,
        "q_values": p.q_values,
        "q": p.q,
        "bins": p.bins,
    })
    .to_string()
}

#[wasm_bindgen(js_name = nrfVsModes)]
pub fn nrf_vs_modes(params: &str) -> Result<String, JsError> {
    nrf_vs_modes_json(params).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = qSweep)]
pub fn q_sweep(params: &str) -> Result<String, JsError> {
    q_sweep_json(params).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = heraldedHistogram)]
pub fn heralded_histogram(params: &str) -> Result<String, JsError> {
    heralded_histogram_json(params).map_err(|e| JsError::new(&e))
}
