//! Classical comparison models.
//!
//! A static random field `b ~ G` dephases the central spin as
//! `C(t) = ∫ G(b) cos(b t) db`. Held fixed over a whole run, the same field
//! makes readouts i.i.d. given `b` with `P(0 | b) = cos²(bτ/2)`: the
//! strongest classical null model implemented here. For a commuting bath it
//! reproduces the quantum string statistics exactly when `G` is the bath's
//! field spectrum ([`matched_spectral_density`]).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bath::{check_pure_limit, effective_fields, BathSpec};
use crate::engine::{generate_runs, DistributionSource, StringDistribution};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::record::MeasurementRecord;

/// Gaussian densities are integrated over `±GAUSSIAN_CUTOFF · γ`.
pub const GAUSSIAN_CUTOFF: f64 = 10.0;
const WEIGHT_TOL: f64 = 1e-10;

/// Distribution `G` of the static field, in rad/µs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", try_from = "SpectralDensityRepr")]
pub enum SpectralDensity {
    /// Zero-mean normal with standard deviation `gamma`.
    Gaussian { gamma: f64 },
    /// Flat on `[-bound, bound]`.
    Uniform { bound: f64 },
    /// Point masses `(omega, weight)`.
    Discrete { atoms: Vec<(f64, f64)> },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum SpectralDensityRepr {
    Gaussian { gamma: f64 },
    Uniform { bound: f64 },
    Discrete { atoms: Vec<(f64, f64)> },
}

impl TryFrom<SpectralDensityRepr> for SpectralDensity {
    type Error = Error;

    fn try_from(r: SpectralDensityRepr) -> Result<Self> {
        let g = match r {
            SpectralDensityRepr::Gaussian { gamma } => Self::Gaussian { gamma },
            SpectralDensityRepr::Uniform { bound } => Self::Uniform { bound },
            SpectralDensityRepr::Discrete { atoms } => Self::Discrete { atoms },
        };
        g.validate()?;
        Ok(g)
    }
}

impl SpectralDensity {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {x}")))
            }
        };
        match self {
            Self::Gaussian { gamma } => positive("gamma", *gamma),
            Self::Uniform { bound } => positive("bound", *bound),
            Self::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidParameter("discrete density needs at least one atom".into()));
                }
                if atoms.iter().any(|(w, p)| !w.is_finite() || !(*p > 0.0)) {
                    return Err(Error::InvalidParameter("atoms need finite positions and positive weights".into()));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::InvalidParameter(format!("atom weights sum to {total}, expected 1")));
                }
                Ok(())
            }
        }
    }

    /// Density at `omega`; zero for discrete kinds.
    pub fn density(&self, omega: f64) -> f64 {
        match self {
            Self::Gaussian { gamma } => {
                (-0.5 * (omega / gamma).powi(2)).exp() / (gamma * (2.0 * std::f64::consts::PI).sqrt())
            }
            Self::Uniform { bound } => {
                if omega.abs() <= *bound {
                    0.5 / bound
                } else {
                    0.0
                }
            }
            Self::Discrete { .. } => 0.0,
        }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match self {
            Self::Gaussian { gamma } => Some((-GAUSSIAN_CUTOFF * gamma, GAUSSIAN_CUTOFF * gamma)),
            Self::Uniform { bound } => Some((-bound, *bound)),
            Self::Discrete { .. } => None,
        }
    }

    /// `E_G[f(b)]`: exact sum for atoms, adaptive quadrature otherwise.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        match self {
            Self::Discrete { atoms } => Ok(atoms.iter().map(|&(w, p)| p * f(w)).sum()),
            _ => {
                let (a, b) = self.support().expect("continuous kinds have a support");
                integrate(|x| self.density(x) * f(x), a, b, Tolerance::default())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { gamma } => Normal::new(0.0, *gamma).expect("validated gamma").sample(rng),
            Self::Uniform { bound } => rng.random_range(-*bound..=*bound),
            Self::Discrete { atoms } => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                for &(w, p) in atoms {
                    acc += p;
                    if u < acc {
                        return w;
                    }
                }
                atoms.last().expect("non-empty").0
            }
        }
    }
}

/// `C(t) = ∫ G(ω) cos(ωt) dω`.
pub fn coherence_classical(g: &SpectralDensity, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be finite and non-negative, got {t}")));
    }
    g.validate()?;
    g.expectation(|w| (w * t).cos())
}

/// Discrete field spectrum whose static-field model matches the bath's
/// single-readout marginal at contact time `tau`.
///
/// Atom positions are `Σ_k ±φ_k` over all sign patterns, each with weight
/// `2^-N`, where `φ_k` is the spin's effective field
/// ([`effective_fields`]). For a commuting bath `φ_k` is the spin's
/// splitting and the atoms are the eigenvalues of `2·B̂`, so the
/// static-field string statistics equal the quantum ones.
pub fn matched_spectral_density(spec: &BathSpec, tau: f64) -> Result<SpectralDensity> {
    check_pure_limit(spec.n_spins())?;
    let phi = effective_fields(spec, tau)?;
    let n = phi.len();
    let weight = 1.0 / (1usize << n) as f64;
    let atoms = (0..1usize << n)
        .map(|idx| {
            let w: f64 = phi
                .iter()
                .enumerate()
                .map(|(k, p)| if (idx >> (n - 1 - k)) & 1 == 0 { *p } else { -*p })
                .sum();
            (w, weight)
        })
        .collect();
    Ok(SpectralDensity::Discrete { atoms })
}

/// `R` strings of `n` i.i.d. bits with `P(0) = p0`.
pub fn iid_coin_records(p0: f64, n: usize, runs: usize, seed: u64, workers: usize) -> Result<Vec<MeasurementRecord>> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::InvalidParameter(format!("p0 must lie in [0, 1], got {p0}")));
    }
    generate_runs(runs, seed, workers, |_, rng| {
        Ok((0..n).map(|_| u8::from(rng.random::<f64>() >= p0)).collect())
    })
}

/// One field `b ~ G` per run, held for all `n` readouts; each bit is 0 with
/// probability `cos²(bτ/2)`.
pub fn static_field_records(
    g: &SpectralDensity,
    tau: f64,
    n: usize,
    runs: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<MeasurementRecord>> {
    g.validate()?;
    generate_runs(runs, seed, workers, |_, rng| {
        let b = g.sample(rng);
        let p0 = (0.5 * b * tau).cos().powi(2);
        Ok((0..n).map(|_| u8::from(rng.random::<f64>() >= p0)).collect())
    })
}

/// Exact string distribution of the static-field model. Strings with the same
/// number of ones share a probability, so only `n + 1` expectations are taken.
pub fn static_field_distribution(g: &SpectralDensity, tau: f64, n: usize) -> Result<StringDistribution> {
    g.validate()?;
    if n == 0 || n > 30 {
        return Err(Error::InvalidParameter(format!("string length must be in 1..=30, got {n}")));
    }
    let by_weight = (0..=n)
        .map(|ones| {
            g.expectation(|b| {
                let c2 = (0.5 * b * tau).cos().powi(2);
                c2.powi((n - ones) as i32) * (1.0 - c2).powi(ones as i32)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let probs = (0..1usize << n).map(|i| by_weight[i.count_ones() as usize]).collect::<Vec<_>>();
    let total: f64 = probs.iter().sum();
    StringDistribution::new(n, probs.iter().map(|p| p / total).collect(), DistributionSource::Exact)
}
