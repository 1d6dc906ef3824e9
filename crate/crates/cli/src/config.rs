//! Experiment configuration files and their resolution into concrete inputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinwalk::bath::{ensemble_fid, first_crossing_time};
use spinwalk::engine::bath_rng;
use spinwalk::{calibrate_coupling_scale, calibrate_spec_to_level, sample_bath_spec, BathSpec, ProtocolConfig};
use spinwalk::{RunPooling, SpectralDensity};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_grid: Option<TimeGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisConfig>,
}

/// Exactly one source per config; serde rejects objects naming two.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BathSource {
    Spec(BathSpec),
    File(PathBuf),
    Sample(SampleDirective),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleDirective {
    pub n_spins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_t2star: Option<f64>,
    #[serde(default)]
    pub zeeman: f64,
    pub seed: u64,
    #[serde(default)]
    pub calibration: CalibrationMode,
}

/// How a `target_t2star` fixes the coupling scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// Ensemble-averaged FID of the sampling distribution falls to 1/e at the target.
    Ensemble,
    /// The drawn bath's own FID falls to 1/e at the target.
    Spec,
    /// The drawn bath's own FID first reaches zero at the target.
    #[default]
    Depolarized,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_stop: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        let ok = self.t_start.is_finite()
            && self.t_stop.is_finite()
            && self.t_start >= 0.0
            && self.t_stop >= self.t_start
            && self.n_points >= 1
            && (self.n_points > 1 || self.t_stop == self.t_start);
        if !ok {
            return Err(CliError::Config(format!("invalid time grid {self:?}")));
        }
        if self.n_points == 1 {
            return Ok(vec![self.t_start]);
        }
        let dt = (self.t_stop - self.t_start) / (self.n_points - 1) as f64;
        Ok((0..self.n_points).map(|i| self.t_start + dt * i as f64).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaselineConfig {
    Iid {
        #[serde(default = "half")]
        p0: f64,
    },
    /// `density` absent means the spectrum matched to the configured bath.
    StaticField {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        density: Option<SpectralDensity>,
    },
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// `"pooled"`, `"0"` or `"1"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooling: Option<String>,
}

pub const DEFAULT_N_MAX: usize = 60;

pub fn parse_pooling(s: &str) -> Result<RunPooling, CliError> {
    match s {
        "pooled" => Ok(RunPooling::Pooled),
        "0" => Ok(RunPooling::Symbol(0)),
        "1" => Ok(RunPooling::Symbol(1)),
        _ => Err(CliError::Config(format!("pooling must be \"pooled\", \"0\" or \"1\", got {s:?}"))),
    }
}

impl ExperimentConfig {
    /// Loads a config file. A manifest written by an earlier run is also
    /// accepted; its embedded resolved config is used.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let value = match value.get("tool").and_then(|t| t.as_str()) {
            Some("spinwalk") => value.get("config").cloned().unwrap_or_default(),
            _ => value,
        };
        let mut cfg: Self =
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(BathSource::File(f)) = &mut cfg.bath {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    pub fn protocol(&self) -> Result<ProtocolConfig, CliError> {
        self.protocol.clone().ok_or_else(|| CliError::Config("config has no protocol".into()))
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.outputs.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn n_max(&self) -> usize {
        self.analysis.as_ref().and_then(|a| a.n_max).unwrap_or(DEFAULT_N_MAX)
    }

    pub fn pooling(&self) -> Result<RunPooling, CliError> {
        match self.analysis.as_ref().and_then(|a| a.pooling.as_deref()) {
            Some(s) => parse_pooling(s),
            None => Ok(RunPooling::Pooled),
        }
    }

    /// Resolves the bath source to a concrete spec.
    pub fn bath_spec(&self) -> Result<BathSpec, CliError> {
        match &self.bath {
            None => Err(CliError::Config("config has no bath".into())),
            Some(BathSource::Spec(s)) => Ok(s.clone()),
            Some(BathSource::File(p)) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read bath {}: {e}", p.display())))?;
                BathSpec::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
            Some(BathSource::Sample(d)) => Ok(d.resolve()?.spec),
        }
    }
}

pub struct Calibrated {
    pub spec: BathSpec,
    pub scale: f64,
}

impl SampleDirective {
    /// Draws the unit-scale shape from the directive's seed, then fixes the
    /// coupling scale.
    pub fn resolve(&self) -> Result<Calibrated, CliError> {
        let mut rng = bath_rng(self.seed);
        let shape = sample_bath_spec(self.n_spins, 1.0, self.zeeman, &mut rng)?;
        let scale = match (self.coupling_scale, self.target_t2star) {
            (Some(s), None) => {
                if !(s >= 0.0) || !s.is_finite() {
                    return Err(CliError::Config(format!("coupling_scale must be finite and ≥ 0, got {s}")));
                }
                s
            }
            (None, Some(t)) => match self.calibration {
                CalibrationMode::Ensemble => calibrate_coupling_scale(self.n_spins, self.zeeman, t, &mut rng)?,
                CalibrationMode::Spec => calibrate_spec_to_level(&shape, t, (-1.0f64).exp())?.1,
                CalibrationMode::Depolarized => calibrate_spec_to_level(&shape, t, 0.0)?.1,
            },
            _ => {
                return Err(CliError::Config(
                    "sample directive needs exactly one of coupling_scale and target_t2star".into(),
                ))
            }
        };
        let tag = format!("sample:seed={}", self.seed);
        Ok(Calibrated { spec: shape.with_coupling_scale(scale).with_seed_tag(tag), scale })
    }
}

/// Ensemble FID crossing of `1/e` for `draws` baths from the directive's
/// sampling distribution at `scale`; used to report calibration quality.
pub fn ensemble_t2star(d: &SampleDirective, scale: f64, draws: usize, t_max: f64) -> Result<Option<f64>, CliError> {
    let mut rng = spinwalk::engine::run_rng(d.seed, 0);
    let shapes = (0..draws)
        .map(|_| sample_bath_spec(d.n_spins, 1.0, d.zeeman, &mut rng))
        .collect::<spinwalk::Result<Vec<_>>>()?;
    Ok(first_crossing_time((-1.0f64).exp(), t_max, 2000, |t| ensemble_fid(&shapes, scale, t)))
}
