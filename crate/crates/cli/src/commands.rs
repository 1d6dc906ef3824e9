use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use spinwalk::bath::{first_crossing_time, MAX_DENSITY_SPINS};
use spinwalk::io::{
    read_records, write_distribution_csv, write_enumeration_csv, write_hamming_csv, write_histogram_csv,
    write_records, write_repeat_curve_csv, write_run_length_csv, write_series_csv,
};
use spinwalk::linalg::max_abs_diff;
use spinwalk::*;

use crate::config::{BaselineConfig, BathSource, CalibrationMode, ExperimentConfig, SampleDirective};
use crate::error::CliError;

/// Retained conditional states are capped at this many bytes; above it the
/// ergodicity residual is skipped.
const MAX_RETAINED_BYTES: usize = 1 << 29;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_with(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> spinwalk::Result<()>,
) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_bath(dir: &Path, spec: &BathSpec) -> Result<(), CliError> {
    let mut w = create(dir, "bath.json")?;
    writeln!(w, "{}", spec.to_json()?)?;
    w.flush()?;
    Ok(())
}

/// Writes `manifest.json`, which can be passed back as `--config` to replay.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let manifest = json!({
        "tool": "spinwalk",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "config": cfg,
    });
    write_json(dir, "manifest.json", &manifest)
}

/// Replaces the bath source by the resolved spec so the manifest is
/// self-contained.
fn pin_bath(cfg: &mut ExperimentConfig, spec: &BathSpec) {
    cfg.bath = Some(BathSource::Spec(spec.clone()));
}

fn prepare(cfg: &mut ExperimentConfig) -> Result<std::path::PathBuf, CliError> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    cfg.outputs = Some(dir.clone());
    cfg.workers = Some(cfg.workers());
    cfg.seed = Some(cfg.seed.unwrap_or(0));
    Ok(dir)
}

pub fn fid_cmd(mut cfg: ExperimentConfig) -> Result<(), CliError> {
    let dir = prepare(&mut cfg)?;
    let spec = cfg.bath_spec()?;
    let grid = cfg.time_grid.ok_or_else(|| CliError::Config("fid needs a time grid".into()))?;
    let rows = grid
        .points()?
        .into_iter()
        .map(|t| Ok((t, fid(&spec, t)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    write_with(&dir, "fid.csv", |w| write_series_csv(w, ("t", "C"), &rows))?;
    write_bath(&dir, &spec)?;
    pin_bath(&mut cfg, &spec);
    write_manifest(&dir, "fid", &cfg)
}

#[derive(Serialize)]
struct PuritySummary {
    n: usize,
    runs: u64,
    distribution_purity: f64,
    distribution_purity_times_2n: f64,
    collision_estimate: Option<f64>,
    shannon_entropy_bits: f64,
}

fn purity_summary(hist: &StringHistogram) -> PuritySummary {
    let p = distribution_purity(hist);
    PuritySummary {
        n: hist.n(),
        runs: hist.total(),
        distribution_purity: p,
        distribution_purity_times_2n: p * 2f64.powi(hist.n() as i32),
        collision_estimate: hist.collision_estimate(),
        shannon_entropy_bits: shannon_entropy(hist),
    }
}

/// Histogram, Hamming profile and purity; with `runs`, also the repeat
/// curve and run-length distribution.
fn write_statistics(
    dir: &Path,
    records: &[MeasurementRecord],
    runs: Option<(usize, RunPooling)>,
) -> Result<StringHistogram, CliError> {
    let hist = string_histogram(records)?;
    write_with(dir, "histogram.csv", |w| write_histogram_csv(w, &hist))?;
    write_with(dir, "hamming.csv", |w| write_hamming_csv(w, &hamming_profile(&hist)))?;
    write_json(dir, "purity.json", &purity_summary(&hist))?;
    if let Some((n_max, pooling)) = runs {
        let profile = repeat_probability_curve(records, n_max, pooling)?;
        write_with(dir, "repeat_curve.csv", |w| write_repeat_curve_csv(w, &profile))?;
        write_with(dir, "run_lengths.csv", |w| write_run_length_csv(w, &profile))?;
    }
    Ok(hist)
}

pub fn strings_cmd(mut cfg: ExperimentConfig) -> Result<(), CliError> {
    let dir = prepare(&mut cfg)?;
    let spec = cfg.bath_spec()?;
    let protocol = cfg.protocol()?;
    let records = simulate_records(&spec, &protocol, cfg.seed.unwrap_or(0), cfg.workers())?;
    write_with(&dir, "records.txt", |w| write_records(w, protocol.contact_time, &records))?;
    write_statistics(&dir, &records, None)?;
    write_bath(&dir, &spec)?;
    pin_bath(&mut cfg, &spec);
    write_manifest(&dir, "strings", &cfg)
}

pub fn enumerate_cmd(mut cfg: ExperimentConfig) -> Result<(), CliError> {
    let dir = prepare(&mut cfg)?;
    let spec = cfg.bath_spec()?;
    let protocol = cfg.protocol()?;
    let retained = (1usize << protocol.n_measurements.min(40)).saturating_mul(spec.dim() * spec.dim() * 16);
    let keep = spec.n_spins() <= MAX_DENSITY_SPINS && retained <= MAX_RETAINED_BYTES;
    let retention = if keep { StateRetention::Keep } else { StateRetention::PurityOnly };
    let e = enumerate_string_distribution(&spec, &protocol, retention)?;

    let residual = match e.averaged_state() {
        Some(avg) => {
            let rho0 = BathState::maximally_mixed(spec.n_spins())?;
            let channel = unconditional_bath_state(&spec, protocol.contact_time, protocol.n_measurements, &rho0)?;
            Some(max_abs_diff(&avg, &channel.to_density()?))
        }
        None => None,
    };
    let scale = 2f64.powi(protocol.n_measurements as i32);
    let purity = distribution_purity(&e.distribution);
    let cond = e.mean_conditional_purity();
    let total: f64 = e.distribution.probabilities().iter().sum();
    write_with(&dir, "enumeration.csv", |w| write_enumeration_csv(w, &e))?;
    write_json(
        &dir,
        "enumeration.json",
        &json!({
            "n": protocol.n_measurements,
            "probability_sum": total,
            "distribution_purity": purity,
            "distribution_purity_times_2n": purity * scale,
            "mean_conditional_purity": cond,
            "mean_conditional_purity_times_2n": cond * scale,
            "ergodicity_residual": residual,
        }),
    )?;
    match residual {
        Some(r) => println!("ergodicity residual: {r:.3e}"),
        None => println!("ergodicity residual: skipped (conditional states too large to retain)"),
    }
    println!("distribution purity: {:.4}/{}", purity * scale, scale);
    println!("mean conditional bath purity: {:.4}/{}", cond * scale, scale);
    write_bath(&dir, &spec)?;
    pin_bath(&mut cfg, &spec);
    write_manifest(&dir, "enumerate", &cfg)
}

pub fn analyze_cmd(mut cfg: ExperimentConfig, records_path: &Path) -> Result<(), CliError> {
    let dir = prepare(&mut cfg)?;
    let f = File::open(records_path).map_err(|e| CliError::Io(format!("{}: {e}", records_path.display())))?;
    let (header, records) = read_records(BufReader::new(f))?;
    write_statistics(&dir, &records, Some((cfg.n_max(), cfg.pooling()?)))?;
    println!("analyzed {} records of {} results (tau={})", header.runs, header.n, header.tau);
    write_manifest(&dir, "analyze", &cfg)
}

pub fn baseline_cmd(mut cfg: ExperimentConfig) -> Result<(), CliError> {
    let dir = prepare(&mut cfg)?;
    let protocol = cfg.protocol()?;
    let (tau, n, runs) = (protocol.contact_time, protocol.n_measurements, protocol.n_repetitions);
    let (seed, workers) = (cfg.seed.unwrap_or(0), cfg.workers());
    let baseline = cfg.baseline.clone().ok_or_else(|| CliError::Config("config has no baseline".into()))?;

    let mut report = serde_json::Map::new();
    let records = match &baseline {
        BaselineConfig::Iid { p0 } => iid_coin_records(*p0, n, runs, seed, workers)?,
        BaselineConfig::StaticField { density } => {
            let (g, spec) = match density {
                Some(g) => (g.clone(), None),
                None => {
                    let spec = cfg.bath_spec()?;
                    (matched_spectral_density(&spec, tau)?, Some(spec))
                }
            };
            g.validate()?;
            if let Some(grid) = cfg.time_grid {
                let rows = grid
                    .points()?
                    .into_iter()
                    .map(|t| Ok((t, coherence_classical(&g, t)?)))
                    .collect::<Result<Vec<_>, CliError>>()?;
                write_with(&dir, "coherence.csv", |w| write_series_csv(w, ("t", "C"), &rows))?;
            }
            if n <= 16 {
                let exact = static_field_distribution(&g, tau, n)?;
                write_with(&dir, "static_field_distribution.csv", |w| write_distribution_csv(w, &exact))?;
            }
            let records = static_field_records(&g, tau, n, runs, seed, workers)?;
            if let Some(spec) = spec {
                if spec.n_spins() <= MAX_DENSITY_SPINS && n <= 12 {
                    let p = ProtocolConfig::new(tau, n, 1);
                    let quantum = enumerate_string_distribution(&spec, &p, StateRetention::PurityOnly)?;
                    let tv = compare_to_reference(&string_histogram(&records)?, &quantum.distribution)?;
                    report.insert("tv_to_quantum".into(), json!(tv));
                    report.insert("sampling_threshold".into(), json!(4.0 * (2f64.powi(n as i32) / runs as f64).sqrt()));
                }
                write_bath(&dir, &spec)?;
                pin_bath(&mut cfg, &spec);
            }
            records
        }
    };
    write_with(&dir, "baseline_records.txt", |w| write_records(w, tau, &records))?;
    let hist = write_statistics(&dir, &records, Some((cfg.n_max(), cfg.pooling()?)))?;
    report.insert("kind".into(), json!(&baseline));
    report.insert("purity".into(), serde_json::to_value(purity_summary(&hist))?);
    write_json(&dir, "baseline.json", &report)?;
    write_manifest(&dir, "baseline", &cfg)
}

pub fn calibrate_cmd(mut cfg: ExperimentConfig) -> Result<(), CliError> {
    let dir = prepare(&mut cfg)?;
    let directive: SampleDirective = match &cfg.bath {
        Some(BathSource::Sample(d)) => d.clone(),
        _ => return Err(CliError::Config("calibrate needs a sample directive".into())),
    };
    let target = directive
        .target_t2star
        .ok_or_else(|| CliError::Config("calibrate needs target_t2star".into()))?;
    let resolved = directive.resolve()?;
    let spec = &resolved.spec;
    let horizon = 20.0 * target;
    let own = |level: f64| first_crossing_time(level, horizon, 4000, |t| fid(spec, t).unwrap_or(f64::NAN));
    let ensemble = match directive.calibration {
        CalibrationMode::Ensemble => crate::config::ensemble_t2star(&directive, resolved.scale, 2000, horizon)?,
        _ => None,
    };
    let report = json!({
        "mode": directive.calibration,
        "n_spins": directive.n_spins,
        "zeeman": directive.zeeman,
        "target_t2star": target,
        "coupling_scale": resolved.scale,
        "fid_at_target": fid(spec, target)?,
        "fid_1e_time": own((-1.0f64).exp()),
        "fid_zero_time": own(0.0),
        "ensemble_1e_time": ensemble,
    });
    write_json(&dir, "calibration.json", &report)?;
    println!("coupling scale: {}", resolved.scale);
    write_bath(&dir, spec)?;
    write_manifest(&dir, "calibrate", &cfg)
}
