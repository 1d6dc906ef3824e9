//! The repeated prepare–evolve–readout protocol.
//!
//! Each cycle resets the central spin, lets it interact with the bath for the
//! contact time and reads it out projectively. Outcome `o` acts on the bath
//! through the Kraus operator `V_o`, and the bath carries that back-action
//! into every later cycle. The Kraus pair is the same in every cycle.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{check_density_limit, check_pure_limit, BathSpec, KrausPair};
use crate::error::{Error, Result};
use crate::linalg::{sandwich, trace, DenseMatrix, DenseVector, C64};
use crate::record::MeasurementRecord;
use crate::state::{bath_purity, BathState};

/// Outcomes less likely than this cannot be collapsed onto.
pub const COLLAPSE_THRESHOLD: f64 = 1e-14;
pub const MAX_ENUMERATED_MEASUREMENTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Density-operator evolution; enumeration over all strings.
    ExactEnumeration,
    /// Pure-state unraveling of the bath.
    #[default]
    MonteCarlo,
}

#[derive(Debug, Clone, Default)]
pub enum InitialBath {
    #[default]
    MaximallyMixed,
    Given(BathState),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Contact time τ per cycle, µs.
    pub contact_time: f64,
    pub n_measurements: usize,
    pub n_repetitions: usize,
    /// Probability that a recorded bit is flipped relative to the true outcome.
    #[serde(default)]
    pub readout_error: f64,
    #[serde(default)]
    pub engine: Engine,
    #[serde(skip)]
    pub initial_bath: InitialBath,
}

impl ProtocolConfig {
    pub fn new(contact_time: f64, n_measurements: usize, n_repetitions: usize) -> Self {
        Self {
            contact_time,
            n_measurements,
            n_repetitions,
            readout_error: 0.0,
            engine: Engine::MonteCarlo,
            initial_bath: InitialBath::MaximallyMixed,
        }
    }

    pub fn with_readout_error(mut self, eps: f64) -> Self {
        self.readout_error = eps;
        self
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_initial_bath(mut self, initial: InitialBath) -> Self {
        self.initial_bath = initial;
        self
    }

    /// Checks the protocol on its own and against the bath it will run on.
    pub fn validate(&self, n_spins: usize) -> Result<()> {
        if !(self.contact_time >= 0.0) || !self.contact_time.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "contact time must be finite and non-negative, got {}",
                self.contact_time
            )));
        }
        if self.n_measurements == 0 {
            return Err(Error::InvalidParameter("n_measurements must be at least 1".into()));
        }
        // ε = 1 is a pure relabeling and is accepted for testing.
        if !(0.0..=1.0).contains(&self.readout_error) {
            return Err(Error::InvalidParameter(format!(
                "readout error must lie in [0, 1], got {}",
                self.readout_error
            )));
        }
        match self.engine {
            Engine::ExactEnumeration => check_density_limit(n_spins)?,
            Engine::MonteCarlo => check_pure_limit(n_spins)?,
        }
        if let InitialBath::Given(s) = &self.initial_bath {
            if s.n_spins() != n_spins {
                return Err(Error::DimensionMismatch { expected: 1 << n_spins, found: s.dim() });
            }
        }
        Ok(())
    }

    fn check_enumeration(&self, n_spins: usize) -> Result<()> {
        check_density_limit(n_spins)?;
        if self.n_measurements > MAX_ENUMERATED_MEASUREMENTS {
            return Err(Error::EngineLimit(format!(
                "exact enumeration supports at most {MAX_ENUMERATED_MEASUREMENTS} measurements, got {}",
                self.n_measurements
            )));
        }
        Ok(())
    }

    fn initial_density(&self, n_spins: usize) -> Result<DenseMatrix> {
        match &self.initial_bath {
            InitialBath::MaximallyMixed => BathState::maximally_mixed(n_spins)?.to_density(),
            InitialBath::Given(s) => s.to_density(),
        }
    }
}

fn check_dims(kraus: &KrausPair, state: &BathState) -> Result<()> {
    if kraus.dim() != state.dim() {
        return Err(Error::DimensionMismatch { expected: kraus.dim(), found: state.dim() });
    }
    Ok(())
}

/// `V_o ρ V_o†` (unnormalized).
pub(crate) fn kraus_sandwich(kraus: &KrausPair, rho: &DenseMatrix, outcome: u8) -> DenseMatrix {
    let dim = kraus.dim();
    sandwich(rho, |col| {
        let mut out = vec![C64::new(0.0, 0.0); dim];
        let mut scratch = vec![C64::new(0.0, 0.0); dim];
        kraus.apply(outcome, col, &mut out, &mut scratch);
        col.copy_from_slice(&out);
    })
}

/// Both branch vectors `V+ψ` and `V−ψ` from one sweep each of `U+` and `U−`.
fn pure_branches(kraus: &KrausPair, psi: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let mut a = psi.to_vec();
    let mut b = psi.to_vec();
    kraus.propagators().plus().apply_in_place(&mut a);
    kraus.propagators().minus().apply_in_place(&mut b);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (u, w) = (*x, *y);
        *x = 0.5 * (u + w);
        *y = 0.5 * (u - w);
    }
    (a, b)
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `(p0, p1)` with `p_o = Tr[V_o ρ V_o†]`, or `‖V_o ψ‖²` for pure states.
pub fn measurement_probabilities(kraus: &KrausPair, state: &BathState) -> Result<(f64, f64)> {
    check_dims(kraus, state)?;
    Ok(match state {
        BathState::Pure { psi, .. } => {
            let (a, b) = pure_branches(kraus, psi.as_slice());
            (norm_sqr(&a), norm_sqr(&b))
        }
        BathState::Density { rho, .. } => (
            trace(&kraus_sandwich(kraus, rho, 0)).re,
            trace(&kraus_sandwich(kraus, rho, 1)).re,
        ),
    })
}

fn check_outcome(outcome: u8) -> Result<()> {
    if outcome > 1 {
        return Err(Error::InvalidParameter(format!("outcome must be 0 or 1, got {outcome}")));
    }
    Ok(())
}

/// Conditional bath state after observing `outcome`.
pub fn collapse(kraus: &KrausPair, state: &BathState, outcome: u8) -> Result<BathState> {
    check_dims(kraus, state)?;
    check_outcome(outcome)?;
    match state {
        BathState::Pure { psi, n_spins } => {
            let mut v = psi.as_slice().to_vec();
            kraus.apply_in_place(outcome, &mut v);
            let p = norm_sqr(&v);
            if !(p > COLLAPSE_THRESHOLD) {
                return Err(Error::DegenerateOutcome { outcome, probability: p });
            }
            let scale = 1.0 / p.sqrt();
            v.iter_mut().for_each(|z| *z *= scale);
            Ok(BathState::Pure { psi: DenseVector::from_vec(v), n_spins: *n_spins })
        }
        BathState::Density { rho, n_spins } => {
            let sigma = kraus_sandwich(kraus, rho, outcome);
            let p = trace(&sigma).re;
            if !(p > COLLAPSE_THRESHOLD) {
                return Err(Error::DegenerateOutcome { outcome, probability: p });
            }
            Ok(BathState::Density { rho: normalize_density(sigma, p), n_spins: *n_spins })
        }
    }
}

/// Divides by `p` and symmetrizes away rounding-level anti-Hermitian parts.
fn normalize_density(sigma: DenseMatrix, p: f64) -> DenseMatrix {
    let rho = sigma * C64::from(1.0 / p);
    (&rho + rho.adjoint()) * C64::from(0.5)
}

/// RNG stream for run `run_index` under `seed`; independent of worker count.
pub fn run_rng(seed: u64, run_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index as u64);
    rng
}

/// RNG stream reserved for drawing the bath itself under `seed`.
pub fn bath_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

/// Runs `runs` independent record generators on `workers` threads.
/// Run `i` always draws from [`run_rng`]`(seed, i)`, and results come back
/// ordered by run index, so output is identical for any worker count.
pub fn generate_runs<F>(runs: usize, seed: u64, workers: usize, f: F) -> Result<Vec<MeasurementRecord>>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<Vec<u8>> + Sync,
{
    let one = |i: usize| -> Result<MeasurementRecord> {
        let mut rng = run_rng(seed, i);
        MeasurementRecord::new(i, f(i, &mut rng)?)
    };
    if workers <= 1 {
        return (0..runs).map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| (0..runs).into_par_iter().map(one).collect())
}

enum Unraveling {
    Uniform,
    Pure(Vec<C64>),
    /// Eigenvectors (as columns) with their cumulative weights.
    Mixture { vectors: DenseMatrix, cumulative: Vec<f64> },
}

/// A bath and protocol prepared for repeated trajectory sampling.
pub struct Simulator {
    kraus: KrausPair,
    protocol: ProtocolConfig,
    unraveling: Unraveling,
    initial_density: Option<DenseMatrix>,
}

impl Simulator {
    pub fn new(spec: &BathSpec, protocol: &ProtocolConfig) -> Result<Self> {
        protocol.validate(spec.n_spins())?;
        let kraus = KrausPair::from_spec(spec, protocol.contact_time)?;
        let (unraveling, initial_density) = match protocol.engine {
            Engine::MonteCarlo => {
                let u = match &protocol.initial_bath {
                    InitialBath::MaximallyMixed => Unraveling::Uniform,
                    InitialBath::Given(BathState::Pure { psi, .. }) => Unraveling::Pure(psi.as_slice().to_vec()),
                    InitialBath::Given(BathState::Density { rho, .. }) => {
                        let eig = SymmetricEigen::new(rho.clone());
                        let mut acc = 0.0;
                        let cumulative = eig
                            .eigenvalues
                            .iter()
                            .map(|&w| {
                                acc += w.max(0.0);
                                acc
                            })
                            .collect::<Vec<_>>();
                        Unraveling::Mixture { vectors: eig.eigenvectors, cumulative }
                    }
                };
                (u, None)
            }
            Engine::ExactEnumeration => (Unraveling::Uniform, Some(protocol.initial_density(spec.n_spins())?)),
        };
        Ok(Self { kraus, protocol: protocol.clone(), unraveling, initial_density })
    }

    pub fn kraus(&self) -> &KrausPair {
        &self.kraus
    }

    fn initial_pure<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<C64> {
        let dim = self.kraus.dim();
        match &self.unraveling {
            Unraveling::Uniform => {
                let mut v = vec![C64::new(0.0, 0.0); dim];
                v[rng.random_range(0..dim)] = C64::new(1.0, 0.0);
                v
            }
            Unraveling::Pure(psi) => psi.clone(),
            Unraveling::Mixture { vectors, cumulative } => {
                let total = *cumulative.last().unwrap_or(&1.0);
                let u = rng.random::<f64>() * total;
                let k = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
                vectors.column(k).iter().cloned().collect()
            }
        }
    }

    fn record_bit<R: Rng + ?Sized>(&self, outcome: u8, rng: &mut R) -> u8 {
        let eps = self.protocol.readout_error;
        if eps > 0.0 && rng.random::<f64>() < eps {
            outcome ^ 1
        } else {
            outcome
        }
    }

    /// Bits of one run. The bath collapses on the true outcome; readout
    /// error only touches the recorded bit.
    pub fn run_bits<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<u8>> {
        let n = self.protocol.n_measurements;
        let mut bits = Vec::with_capacity(n);
        match self.protocol.engine {
            Engine::MonteCarlo => {
                let mut psi = self.initial_pure(rng);
                for _ in 0..n {
                    let (a, b) = pure_branches(&self.kraus, &psi);
                    let (p0, p1) = (norm_sqr(&a), norm_sqr(&b));
                    let outcome = u8::from(rng.random::<f64>() * (p0 + p1) >= p0);
                    let (mut v, p) = if outcome == 0 { (a, p0) } else { (b, p1) };
                    if !(p > COLLAPSE_THRESHOLD) {
                        return Err(Error::DegenerateOutcome { outcome, probability: p });
                    }
                    let scale = 1.0 / p.sqrt();
                    v.iter_mut().for_each(|z| *z *= scale);
                    psi = v;
                    bits.push(self.record_bit(outcome, rng));
                }
            }
            Engine::ExactEnumeration => {
                let mut rho = self.initial_density.clone().expect("density engine has an initial state");
                for _ in 0..n {
                    let s0 = kraus_sandwich(&self.kraus, &rho, 0);
                    let s1 = kraus_sandwich(&self.kraus, &rho, 1);
                    let (p0, p1) = (trace(&s0).re, trace(&s1).re);
                    let outcome = u8::from(rng.random::<f64>() * (p0 + p1) >= p0);
                    let (sigma, p) = if outcome == 0 { (s0, p0) } else { (s1, p1) };
                    if !(p > COLLAPSE_THRESHOLD) {
                        return Err(Error::DegenerateOutcome { outcome, probability: p });
                    }
                    rho = normalize_density(sigma, p);
                    bits.push(self.record_bit(outcome, rng));
                }
            }
        }
        Ok(bits)
    }

    /// All `n_repetitions` runs, deterministic in `(seed)` for any `workers`.
    pub fn simulate(&self, seed: u64, workers: usize) -> Result<Vec<MeasurementRecord>> {
        generate_runs(self.protocol.n_repetitions, seed, workers, |_, rng| self.run_bits(rng))
    }
}

pub fn run_trajectory<R: Rng + ?Sized>(
    spec: &BathSpec,
    protocol: &ProtocolConfig,
    run_index: usize,
    rng: &mut R,
) -> Result<MeasurementRecord> {
    MeasurementRecord::new(run_index, Simulator::new(spec, protocol)?.run_bits(rng)?)
}

pub fn simulate_records(
    spec: &BathSpec,
    protocol: &ProtocolConfig,
    seed: u64,
    workers: usize,
) -> Result<Vec<MeasurementRecord>> {
    Simulator::new(spec, protocol)?.simulate(seed, workers)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionSource {
    Exact,
    Empirical,
}

/// Probability of every string of length `n`, indexed with the first
/// readout as the most significant bit.
#[derive(Debug, Clone, PartialEq)]
pub struct StringDistribution {
    n: usize,
    probabilities: Vec<f64>,
    source: DistributionSource,
}

impl StringDistribution {
    pub fn new(n: usize, probabilities: Vec<f64>, source: DistributionSource) -> Result<Self> {
        if n == 0 || n > 30 || probabilities.len() != 1 << n {
            return Err(Error::InvalidParameter(format!(
                "a distribution over strings of length {n} needs 2^{n} entries, got {}",
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidParameter("probabilities must be non-negative".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { n, probabilities, source })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        let m = 1usize << n;
        Self::new(n, vec![1.0 / m as f64; m], DistributionSource::Exact)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn source(&self) -> DistributionSource {
        self.source
    }

    pub fn probability(&self, bits: &[u8]) -> Option<f64> {
        (bits.len() == self.n).then(|| self.probabilities[crate::record::bits_to_index(bits)])
    }

    /// Index of the most probable strings, most probable first.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.probabilities.len()).collect();
        idx.sort_by(|&a, &b| self.probabilities[b].total_cmp(&self.probabilities[a]).then(a.cmp(&b)));
        idx
    }

    /// Total-variation distance to another distribution over the same strings.
    pub fn total_variation(&self, other: &StringDistribution) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        Ok(0.5
            * self
                .probabilities
                .iter()
                .zip(&other.probabilities)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// Each bit independently flipped with probability `eps`.
    pub fn with_readout_error(&self, eps: f64) -> Self {
        let mut p = self.probabilities.clone();
        if eps > 0.0 {
            for bit in 0..self.n {
                let mask = 1usize << bit;
                for i in 0..p.len() {
                    if i & mask == 0 {
                        let (a, b) = (p[i], p[i | mask]);
                        p[i] = (1.0 - eps) * a + eps * b;
                        p[i | mask] = eps * a + (1.0 - eps) * b;
                    }
                }
            }
        }
        Self { n: self.n, probabilities: p, source: self.source }
    }
}

/// What an enumeration keeps about each string's conditional bath state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateRetention {
    PurityOnly,
    Keep,
}

/// Result of exact enumeration over all `2^n` readout strings.
#[derive(Debug, Clone)]
pub struct Enumeration {
    /// Distribution of recorded strings (readout error applied).
    pub distribution: StringDistribution,
    /// Distribution of true outcome strings.
    pub true_distribution: StringDistribution,
    /// `Tr[ρ_M²]` of each normalized conditional state, keyed by true string;
    /// `None` where the string has probability below the collapse threshold.
    pub conditional_purity: Vec<Option<f64>>,
    /// Normalized conditional states when retained.
    pub conditional_states: Option<Vec<Option<BathState>>>,
}

impl Enumeration {
    /// `Σ_M p(M) Tr[ρ_M²]` over true strings.
    pub fn mean_conditional_purity(&self) -> f64 {
        self.true_distribution
            .probabilities()
            .iter()
            .zip(&self.conditional_purity)
            .filter_map(|(p, q)| q.map(|q| p * q))
            .sum()
    }

    /// `Σ_M p(M) ρ_M`, requires retained states.
    pub fn averaged_state(&self) -> Option<DenseMatrix> {
        let states = self.conditional_states.as_ref()?;
        let dim = states.iter().flatten().next()?.dim();
        let mut acc = DenseMatrix::zeros(dim, dim);
        for (p, s) in self.true_distribution.probabilities().iter().zip(states) {
            if let Some(s) = s {
                acc += s.to_density().ok()? * C64::from(*p);
            }
        }
        Some(acc)
    }
}

/// Exact probability and conditional bath state of every string, walking
/// the binary prefix tree so each prefix product is computed once.
pub fn enumerate_string_distribution(
    spec: &BathSpec,
    protocol: &ProtocolConfig,
    retention: StateRetention,
) -> Result<Enumeration> {
    protocol.check_enumeration(spec.n_spins())?;
    let check = ProtocolConfig { engine: Engine::ExactEnumeration, ..protocol.clone() };
    check.validate(spec.n_spins())?;
    let kraus = KrausPair::from_spec(spec, protocol.contact_time)?;
    let rho0 = protocol.initial_density(spec.n_spins())?;
    let n = protocol.n_measurements;
    let leaves = 1usize << n;

    let mut probs = vec![0.0; leaves];
    let mut purity = vec![None; leaves];
    let mut states: Option<Vec<Option<BathState>>> = match retention {
        StateRetention::Keep => Some(vec![None; leaves]),
        StateRetention::PurityOnly => None,
    };

    // Depth-first over prefixes; the stack holds unnormalized states.
    let mut stack = vec![(0usize, 0usize, rho0)];
    while let Some((depth, prefix, sigma)) = stack.pop() {
        let p = trace(&sigma).re;
        if depth == n {
            probs[prefix] = p.max(0.0);
            if p > COLLAPSE_THRESHOLD {
                let rho = normalize_density(sigma, p);
                let st = BathState::Density { rho, n_spins: spec.n_spins() };
                purity[prefix] = Some(bath_purity(&st));
                if let Some(v) = states.as_mut() {
                    v[prefix] = Some(st);
                }
            }
            continue;
        }
        if p <= 0.0 {
            continue;
        }
        for outcome in [1u8, 0] {
            let child = kraus_sandwich(&kraus, &sigma, outcome);
            stack.push((depth + 1, (prefix << 1) | outcome as usize, child));
        }
    }

    // Renormalize rounding drift only; the sum is already 1 to ~1e-15.
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let true_distribution = StringDistribution::new(n, probs, DistributionSource::Exact)?;
    let distribution = true_distribution.with_readout_error(protocol.readout_error);
    Ok(Enumeration {
        distribution,
        true_distribution,
        conditional_purity: purity,
        conditional_states: states,
    })
}

/// `n`-fold non-selective channel `ρ ↦ Σ_o V_o ρ V_o†`, using assembled
/// dense Kraus matrices.
pub fn unconditional_bath_state(spec: &BathSpec, tau: f64, n: usize, rho0: &BathState) -> Result<BathState> {
    check_density_limit(spec.n_spins())?;
    if rho0.n_spins() != spec.n_spins() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: rho0.dim() });
    }
    let kraus = KrausPair::from_spec(spec, tau)?;
    let vp = kraus.v_plus()?;
    let vm = kraus.v_minus()?;
    let (vp_dag, vm_dag) = (vp.adjoint(), vm.adjoint());
    let mut rho = rho0.to_density()?;
    for _ in 0..n {
        rho = &vp * &rho * &vp_dag + &vm * &rho * &vm_dag;
    }
    Ok(BathState::Density { rho, n_spins: spec.n_spins() })
}
