use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use twinbeam::analysis::{analyze_point, simulate_operating_point};
use twinbeam::calibration::{estimate_eta1, fit_nrf_linear, squeezing_db};
use twinbeam::conditioning::{conditional_fano, Center, ConditioningSpec};
use twinbeam::model::{pump_power_to_n_mode, simulate_run};
use twinbeam::pipeline::{
    load_config, read_dataset, save_dataset, write_atomic, ExperimentConfig, Report, ReportEntry,
};
use twinbeam::rng::derive_seed;
use twinbeam::stats::{self, dark_moments, fano, nrf_raw, shot_noise_empirical, shot_noise_variance, stream_moments};
use twinbeam::{Bootstrap, Channel, Dataset, DatasetKind, Error, Estimate, RunSpec};

use crate::failure::{CmdResult, Failure};
use crate::{Cli, Command, Format, Kind};

/// Q grid of the heralding table when the config gives no conditioning list.
const DEFAULT_Q_GRID: [f64; 9] = [2.0, 4.0, 6.0, 8.0, 12.0, 16.0, 20.0, 30.0, 40.0];
const DEFAULT_Q: f64 = 20.0;

pub fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Simulate { kind, pulses } => simulate(cli, *kind, *pulses),
        Command::Analyze { datasets, resamples } => analyze(cli, datasets, *resamples),
        Command::Condition {
            dataset,
            dark,
            q,
            offset_sd,
            level,
            control,
            resamples,
        } => {
            let center = match (offset_sd, level) {
                (Some(d), _) => Some(Center::OffsetInSd(*d)),
                (_, Some(l)) => Some(Center::Absolute(*l)),
                _ => None,
            };
            let control = if *control == 1 { Channel::One } else { Channel::Two };
            condition(cli, dataset, dark.as_deref(), q, center, control, *resamples)
        }
        Command::Sweep => sweep(cli),
        Command::Fit { points, k_ratio } => fit(cli, points, *k_ratio),
        Command::Report { report } => convert(cli, report),
    }
}

fn progress(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn config(cli: &Cli) -> CmdResult<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::usage("this command needs --config <PATH>"))?;
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn optional_config(cli: &Cli) -> CmdResult<Option<ExperimentConfig>> {
    cli.config.as_ref().map(|_| config(cli)).transpose()
}

fn bootstrap(cli: &Cli, cfg: Option<&ExperimentConfig>, resamples: Option<usize>) -> CmdResult<Bootstrap> {
    let mut b = cfg.map(|c| c.bootstrap).unwrap_or_default();
    if let Some(c) = cfg {
        b.seed = c.seed;
    }
    if let Some(seed) = cli.seed {
        b.seed = seed;
    }
    if let Some(r) = resamples {
        b.resamples = r;
    }
    b.validate()?;
    Ok(b)
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn now_unix() -> Option<u64> {
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => report.to_csv(),
    }
}

/// Writes the report to `--out`, or to stdout when no path is given.
fn emit(cli: &Cli, mut report: Report) -> CmdResult {
    report.finalize(now_unix());
    for w in &report.warnings {
        progress(cli, format!("warning: {w}"));
    }
    let text = render(&report, cli.format);
    match &cli.out {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            progress(cli, format!("report written to {}", path.display()));
        }
        None if !cli.quiet => print!("{text}"),
        None => {}
    }
    Ok(())
}

fn load(path: &Path) -> CmdResult<(Dataset, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| {
        Failure::dataset(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    let text = String::from_utf8(bytes).map_err(|e| {
        Failure::dataset(Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    })?;
    let ds = read_dataset(&text, path).map_err(Failure::dataset)?;
    Ok((ds, text.into_bytes()))
}

fn simulate(cli: &Cli, kind: Kind, pulses: Option<usize>) -> CmdResult {
    let cfg = config(cli)?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| Failure::usage("simulate needs --out <PATH> for the dataset"))?;
    let spec = match kind {
        Kind::TwinBeam => RunSpec::TwinBeam {
            source: cfg.source,
            detectors: cfg.detectors,
        },
        Kind::Coherent => RunSpec::coherent_for(&cfg.source, cfg.detectors),
        Kind::Dark => RunSpec::Dark {
            detectors: cfg.detectors,
        },
    };
    let n = pulses.unwrap_or(cfg.n_pulses);
    let ds = simulate_run(&spec, n, cfg.seed)?;
    save_dataset(out, &ds)?;
    progress(
        cli,
        format!("{} pulses ({}) written to {}", ds.len(), ds.kind, out.display()),
    );

    let mut report = Report::new("simulate", digest(&[cfg.to_json().as_bytes()]), Some(cfg.seed));
    for ch in [Channel::One, Channel::Two] {
        let m = stream_moments(ds.records.iter().map(|r| ch.value(r)))?;
        let n = m.count as u64;
        let i = ch.index() + 1;
        report.estimate(
            format!("mean_{i}"),
            Estimate::new(m.mean, (m.variance / n as f64).sqrt(), n),
        );
        report.estimate(
            format!("variance_{i}"),
            Estimate::new(m.variance, m.variance_std_error(), n),
        );
    }
    if ds.gain_clamp_events > 0 {
        report
            .warnings
            .push(format!("gain clamped at 0 on {} pulses", ds.gain_clamp_events));
    }
    if !cli.quiet {
        let mut r = report;
        r.finalize(now_unix());
        print!("{}", render(&r, cli.format));
    }
    Ok(())
}

fn missing(what: &str, kind: &str) -> Failure {
    Failure::from(Error::MissingCalibration {
        what: what.to_string(),
        hint: format!("twinbeam simulate --kind {kind} --config <CONFIG> --out <PATH>"),
    })
}

fn analyze(cli: &Cli, paths: &[PathBuf], resamples: Option<usize>) -> CmdResult {
    let cfg = optional_config(cli)?;
    let boot = bootstrap(cli, cfg.as_ref(), resamples)?;
    let (mut twin, mut coh, mut dark) = (None, None, None);
    let mut bytes = Vec::new();
    for p in paths {
        let (ds, raw) = load(p)?;
        bytes.push(raw);
        let slot = match ds.kind {
            DatasetKind::TwinBeam => &mut twin,
            DatasetKind::Coherent => &mut coh,
            DatasetKind::Dark => &mut dark,
        };
        if slot.is_some() {
            return Err(Failure::usage(format!("more than one {} dataset given", ds.kind)));
        }
        *slot = Some(ds);
    }
    let parts: Vec<&[u8]> = bytes.iter().map(Vec::as_slice).collect();
    let mut report = Report::new("analyze", digest(&parts), Some(boot.seed));

    match (&twin, &coh, &dark) {
        (Some(twin), coh, dark) => {
            let coh = coh
                .as_ref()
                .ok_or_else(|| missing("coherent run for the shot-noise level", "coherent"))?;
            let dark = dark
                .as_ref()
                .ok_or_else(|| missing("dark run for the electronic noise", "dark"))?;
            let a = analyze_point(twin, coh, dark, dark, &boot)?;
            report.estimate("k", a.k);
            let n = twin.len() as u64;
            report.estimate("mean_1", Estimate::new(a.mean1, 0.0, n));
            report.estimate("mean_2", Estimate::new(a.mean2, 0.0, n));
            report.estimate(
                "shot_noise_analytic",
                Estimate::new(a.shot_noise_analytic, 0.0, coh.len() as u64),
            );
            report.estimate("shot_noise_empirical", a.shot_noise_empirical);
            report.estimate("nrf_raw", a.nrf_raw);
            report.estimate("nrf_est", a.nrf_est);
            report.estimate("squeezing_db", db_estimate(a.nrf_est)?);
            report.estimate("f1_raw", a.f1_raw);
            report.estimate("f2_raw", a.f2_raw);
            report.estimate("f1_est", a.f1_est);
            report.estimate("f2_est", a.f2_est);
            report.estimate("f1_conditional_theory", Estimate::exact(a.f1_conditional_theory));
            report.warnings.extend(a.warnings.iter().map(|w| w.to_string()));
        }
        (None, Some(coh), dark) => {
            let k = stats::balancing_k(coh)?;
            let (d1, d2) = match dark {
                Some(d) => (dark_moments(d, Channel::One)?.0, dark_moments(d, Channel::Two)?.0),
                None => (0.0, 0.0),
            };
            let mean = |ch: Channel| stream_moments(coh.records.iter().map(|r| ch.value(r))).map(|m| m.mean);
            let snl = shot_noise_variance(mean(Channel::One)? - d1, mean(Channel::Two)? - d2, k);
            report.estimate("k", Estimate::exact(k));
            report.estimate("shot_noise_analytic", Estimate::new(snl, 0.0, coh.len() as u64));
            report.estimate("shot_noise_empirical", shot_noise_empirical(coh, k)?);
            if dark.is_none() {
                report.estimate("nrf_raw", nrf_raw(coh, k, snl, &boot)?);
            }
            for (i, ch) in [(1, Channel::One), (2, Channel::Two)] {
                let sub = boot.with_seed(derive_seed(boot.seed, i));
                report.estimate(format!("fano_{i}"), fano(coh, ch, dark.as_ref(), &sub)?);
            }
        }
        (None, None, Some(dark)) => {
            for (i, ch) in [(1, Channel::One), (2, Channel::Two)] {
                let m = stream_moments(dark.records.iter().map(|r| ch.value(r)))?;
                let n = m.count as u64;
                report.estimate(
                    format!("noise_mean_{i}"),
                    Estimate::new(m.mean, (m.variance / n as f64).sqrt(), n),
                );
                report.estimate(
                    format!("noise_var_{i}"),
                    Estimate::new(m.variance, m.variance_std_error(), n),
                );
            }
        }
        (None, None, None) => unreachable!("clap requires at least one dataset"),
    }
    emit(cli, report)
}

/// Squeezing in dB with the NRF error propagated to first order.
fn db_estimate(nrf: Estimate) -> CmdResult<Estimate> {
    let db = squeezing_db(nrf.value)?;
    let se = 10.0 / std::f64::consts::LN_10 * nrf.std_error / nrf.value;
    Ok(Estimate::new(db, se, nrf.n_samples))
}

fn condition(
    cli: &Cli,
    path: &Path,
    dark_path: Option<&Path>,
    qs: &[f64],
    center: Option<Center>,
    control: Channel,
    resamples: Option<usize>,
) -> CmdResult {
    let cfg = optional_config(cli)?;
    let boot = bootstrap(cli, cfg.as_ref(), resamples)?;
    let (ds, raw) = load(path)?;
    let dark = dark_path.map(load).transpose()?;
    if let Some((d, _)) = &dark {
        d.expect_kind(DatasetKind::Dark)?;
    }

    let specs: Vec<ConditioningSpec> = if !qs.is_empty() {
        qs.iter()
            .map(|&q| ConditioningSpec {
                q,
                center: center.unwrap_or(Center::ControlMean),
                control,
            })
            .collect()
    } else if let Some(list) = cfg.as_ref().and_then(|c| c.conditioning.clone()) {
        list
    } else {
        vec![ConditioningSpec {
            q: DEFAULT_Q,
            center: center.unwrap_or(Center::ControlMean),
            control,
        }]
    };
    for s in &specs {
        s.validate()?;
    }

    let mut parts: Vec<&[u8]> = vec![&raw];
    if let Some((_, d)) = &dark {
        parts.push(d);
    }
    let mut report = Report::new("condition", digest(&parts), Some(boot.seed));
    if dark.is_none() {
        report
            .warnings
            .push("no dark run given: target electronic noise is not subtracted".into());
    }
    let dark_ds = dark.as_ref().map(|(d, _)| d);
    let (mut failures, mut first_error) = (0, None);
    for (i, spec) in specs.iter().enumerate() {
        let sub = boot.with_seed(derive_seed(boot.seed, i as u64));
        let name = format!("cond{i:02}_q{}", spec.q);
        match conditional_fano(&ds, spec, dark_ds, &sub) {
            Ok(r) => report.insert(name, ReportEntry::Conditional(r)),
            Err(e) => {
                failures += 1;
                report.warnings.push(format!("{name}: {e}"));
                report.insert(name, ReportEntry::Failed { error: e.to_string() });
                first_error.get_or_insert(e);
            }
        }
    }
    if failures == specs.len() {
        return Err(first_error.expect("at least one spec").into());
    }
    emit(cli, report)
}

fn table_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> CmdResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::new(crate::failure::EXIT_IO, "io", e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|x| format!("{x:e}"))).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::new(crate::failure::EXIT_IO, "io", e.to_string()))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

const NRF_COLUMNS: [&str; 13] = [
    "power_mw",
    "n_mode",
    "k",
    "nrf",
    "nrf_se",
    "f1",
    "f1_se",
    "f2",
    "f2_se",
    "f1_cond",
    "f1_cond_se",
    "f1_cond_theory",
    "success_rate",
];

const Q_COLUMNS: [&str; 6] = ["q", "fano", "fano_se", "mean", "success_rate", "n_selected"];

fn sweep(cli: &Cli) -> CmdResult {
    let cfg = config(cli)?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| Failure::usage("sweep needs --out <PATH>; tables are written next to it"))?;
    let boot = bootstrap(cli, Some(&cfg), None)?;

    let points: Vec<(f64, f64)> = match &cfg.pump_sweep {
        Some(s) => s
            .powers_mw
            .iter()
            .map(|&p| Ok((p, pump_power_to_n_mode(p, s.gain_coeff)?)))
            .collect::<twinbeam::Result<_>>()?,
        None => vec![(f64::NAN, cfg.source.n_mean_per_mode)],
    };
    let cond_specs = cfg
        .conditioning
        .clone()
        .unwrap_or_else(|| DEFAULT_Q_GRID.iter().map(|&q| ConditioningSpec::new(q)).collect());
    let headline = cond_specs
        .iter()
        .copied()
        .find(|s| s.q == DEFAULT_Q)
        .unwrap_or(ConditioningSpec::new(DEFAULT_Q));

    let mut report = Report::new("sweep", digest(&[cfg.to_json().as_bytes()]), Some(cfg.seed));
    let mut rows = Vec::new();
    let mut brightest: Option<(f64, usize)> = None;
    let mut runs = Vec::new();
    for (i, &(power, n_mode)) in points.iter().enumerate() {
        let seed = derive_seed(cfg.seed, i as u64);
        let sub = boot.with_seed(seed);
        let name = format!("p{i:02}");
        progress(cli, format!("point {}/{}: N_m = {n_mode:.4}", i + 1, points.len()));
        let result = simulate_operating_point(&cfg.source.with_n_mean(n_mode), cfg.detectors, cfg.n_pulses, seed)
            .and_then(|op| {
                let a = analyze_point(&op.twin, &op.coherent, &op.dark, &op.dark, &sub)?;
                let c = conditional_fano(&op.twin, &headline, Some(&op.dark), &sub)?;
                Ok((op, a, c))
            });
        match result {
            Ok((op, a, c)) => {
                report.estimate(format!("{name}.n_mode"), Estimate::exact(n_mode));
                report.estimate(format!("{name}.nrf_est"), a.nrf_est);
                report.estimate(format!("{name}.f1_est"), a.f1_est);
                report.estimate(format!("{name}.f2_est"), a.f2_est);
                report.estimate(
                    format!("{name}.f1_conditional_theory"),
                    Estimate::exact(a.f1_conditional_theory),
                );
                report.insert(format!("{name}.conditional"), ReportEntry::Conditional(c));
                report
                    .warnings
                    .extend(a.warnings.iter().map(|w| format!("{name}: {w}")));
                rows.push(vec![
                    power,
                    n_mode,
                    a.k.value,
                    a.nrf_est.value,
                    a.nrf_est.std_error,
                    a.f1_est.value,
                    a.f1_est.std_error,
                    a.f2_est.value,
                    a.f2_est.std_error,
                    c.fano_target.value,
                    c.fano_target.std_error,
                    a.f1_conditional_theory,
                    c.success_rate,
                ]);
                if brightest.is_none_or(|(n, _)| n_mode > n) {
                    brightest = Some((n_mode, runs.len()));
                }
                runs.push((op, sub));
            }
            Err(e) => {
                report.warnings.push(format!("{name} (N_m = {n_mode}): {e}"));
                report.insert(name, ReportEntry::Failed { error: e.to_string() });
            }
        }
    }
    if rows.is_empty() {
        return Err(Failure::new(
            crate::failure::EXIT_ANALYSIS,
            "sweep_failed",
            "no sweep point could be evaluated",
        ));
    }

    let mut q_rows = Vec::new();
    if let Some((n_mode, idx)) = brightest {
        let (op, sub) = &runs[idx];
        progress(cli, format!("heralding table at N_m = {n_mode:.4}"));
        for (j, spec) in cond_specs.iter().enumerate() {
            let b = sub.with_seed(derive_seed(sub.seed, 100 + j as u64));
            let name = format!("q{j:02}");
            match conditional_fano(&op.twin, spec, Some(&op.dark), &b) {
                Ok(c) => {
                    q_rows.push(vec![
                        spec.q,
                        c.fano_target.value,
                        c.fano_target.std_error,
                        c.mean_target.value,
                        c.success_rate,
                        c.n_selected as f64,
                    ]);
                    report.insert(name, ReportEntry::Conditional(c));
                }
                Err(e) => {
                    report.warnings.push(format!("{name} (Q = {}): {e}", spec.q));
                    report.insert(name, ReportEntry::Failed { error: e.to_string() });
                }
            }
        }
    }

    let nrf_path = table_path(out, "nrf");
    let q_path = table_path(out, "q");
    write_table(&nrf_path, &NRF_COLUMNS, &rows)?;
    write_table(&q_path, &Q_COLUMNS, &q_rows)?;
    progress(
        cli,
        format!("tables written to {} and {}", nrf_path.display(), q_path.display()),
    );
    emit(cli, report)
}

struct FitPoint {
    n_mode: f64,
    nrf: Estimate,
    k: Option<f64>,
}

fn read_points(path: &Path) -> CmdResult<(Vec<FitPoint>, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    let parse = |message: String| {
        Failure::from(Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    };
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let headers = rdr.headers().map_err(|e| parse(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(xi), Some(yi), Some(si)) = (col("n_mode"), col("nrf"), col("nrf_se")) else {
        return Err(parse("points file needs columns n_mode, nrf, nrf_se".into()));
    };
    let ki = col("k");
    let mut points = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse(e.to_string()))?;
        let num = |i: usize| -> CmdResult<f64> {
            let s = rec.get(i).unwrap_or_default().trim();
            s.parse::<f64>()
                .map_err(|_| parse(format!("row {}: `{s}` is not a number", line + 1)))
        };
        points.push(FitPoint {
            n_mode: num(xi)?,
            nrf: Estimate::new(num(yi)?, num(si)?, 0),
            k: ki.map(num).transpose()?,
        });
    }
    Ok((points, bytes))
}

fn fit(cli: &Cli, path: &Path, k_ratio: Option<f64>) -> CmdResult {
    let (points, bytes) = read_points(path)?;
    let fit = fit_nrf_linear(&points.iter().map(|p| (p.n_mode, p.nrf)).collect::<Vec<_>>())?;
    let mut report = Report::new("fit", digest(&[&bytes]), None);
    if !fit.alpha_is_physical() {
        report
            .warnings
            .push(format!("alpha = {} lies outside (0, 1]", fit.alpha.value));
    }
    let ks: Vec<f64> = points.iter().filter_map(|p| p.k).collect();
    let k = match k_ratio {
        Some(k) => Some(k),
        None if !ks.is_empty() => Some(ks.iter().sum::<f64>() / ks.len() as f64),
        None => None,
    };
    match k {
        Some(k) => report.insert("eta1", ReportEntry::Efficiency(estimate_eta1(fit.alpha, k)?)),
        None => report
            .warnings
            .push("no k column and no --k-ratio: efficiency not estimated".into()),
    }
    report.estimate("alpha", fit.alpha);
    report.estimate("beta", fit.beta);
    if let Some(best) = points.iter().map(|p| p.nrf).min_by(|a, b| a.value.total_cmp(&b.value)) {
        report.estimate("squeezing_db_best", db_estimate(best)?);
    }
    report.insert("fit", ReportEntry::Fit(fit));
    emit(cli, report)
}

fn convert(cli: &Cli, path: &Path) -> CmdResult {
    let report = Report::load(path)?;
    let text = render(&report, cli.format);
    match &cli.out {
        Some(out) => write_atomic(out, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}
