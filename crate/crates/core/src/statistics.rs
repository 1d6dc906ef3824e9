//! Observables over readout strings: histograms, Hamming-weight profiles,
//! purity and entropy of string distributions, and run-length statistics.

use std::collections::BTreeMap;

use crate::engine::{DistributionSource, StringDistribution};
use crate::error::{Error, Result};
use crate::record::{bits_to_index, MeasurementRecord};

/// Exact multiset of readout strings.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StringHistogram {
    counts: BTreeMap<Vec<u8>, u64>,
    total: u64,
    n: usize,
}

impl StringHistogram {
    pub fn empty(n: usize) -> Self {
        Self { counts: BTreeMap::new(), total: 0, n }
    }

    pub fn add(&mut self, record: &MeasurementRecord) -> Result<()> {
        if record.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: record.len() });
        }
        *self.counts.entry(record.bits().to_vec()).or_insert(0) += 1;
        self.total += 1;
        Ok(())
    }

    /// Associative merge of partial counts.
    pub fn merge(mut self, other: StringHistogram) -> Result<Self> {
        if other.total > 0 && self.total > 0 && other.n != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        if self.total == 0 {
            self.n = other.n;
        }
        for (k, c) in other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self.total += other.total;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, bits: &[u8]) -> u64 {
        self.counts.get(bits).copied().unwrap_or(0)
    }

    /// Observed strings in lexicographic order with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (&[u8], u64)> {
        self.counts.iter().map(|(k, &c)| (k.as_slice(), c))
    }

    pub fn frequency(&self, bits: &[u8]) -> f64 {
        self.count(bits) as f64 / self.total as f64
    }

    /// Multinomial standard error of a frequency estimate.
    pub fn std_error(&self, bits: &[u8]) -> f64 {
        let p = self.frequency(bits);
        (p * (1.0 - p) / self.total as f64).sqrt()
    }

    /// Unbiased estimate of `Σ p²`: the fraction of unordered pairs of runs
    /// that produced the same string. The plug-in `Σ p̂²` overestimates it
    /// by roughly `(1 − Σ p²)/R`.
    pub fn collision_estimate(&self) -> Option<f64> {
        if self.total < 2 {
            return None;
        }
        let r = self.total as f64;
        let pairs: f64 = self.counts.values().map(|&c| c as f64 * (c as f64 - 1.0)).sum();
        Some(pairs / (r * (r - 1.0)))
    }

    /// Empirical frequencies over all `2^n` strings.
    pub fn to_distribution(&self) -> Result<StringDistribution> {
        if self.n > 24 {
            return Err(Error::EngineLimit(format!(
                "dense distribution over strings of length {} is too large",
                self.n
            )));
        }
        let mut p = vec![0.0; 1 << self.n];
        for (k, &c) in &self.counts {
            p[bits_to_index(k)] = c as f64 / self.total as f64;
        }
        StringDistribution::new(self.n, p, DistributionSource::Empirical)
    }
}

pub fn string_histogram(records: &[MeasurementRecord]) -> Result<StringHistogram> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidParameter("no records to histogram".into()))?;
    let mut h = StringHistogram::empty(first.len());
    for r in records {
        h.add(r)?;
    }
    Ok(h)
}

/// Anything that assigns probability mass to readout strings.
pub trait StringMass {
    fn string_len(&self) -> usize;
    /// `(hamming weight, probability)` for every string with non-zero mass.
    fn weighted_masses(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_>;
}

impl StringMass for StringDistribution {
    fn string_len(&self) -> usize {
        self.n()
    }

    fn weighted_masses(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        Box::new(
            self.probabilities()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(i, &p)| (i.count_ones() as usize, p)),
        )
    }
}

impl StringMass for StringHistogram {
    fn string_len(&self) -> usize {
        self.n
    }

    fn weighted_masses(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        let total = self.total as f64;
        Box::new(
            self.counts
                .iter()
                .map(move |(k, &c)| (k.iter().filter(|&&b| b == 1).count(), c as f64 / total)),
        )
    }
}

/// Probability mass at each Hamming weight `m = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HammingProfile {
    pub n: usize,
    pub mass: Vec<f64>,
}

impl HammingProfile {
    /// Binomial profile `C(n, m)/2^n` of equally likely strings.
    pub fn binomial(n: usize) -> Self {
        let mut mass = vec![0.0; n + 1];
        let mut c = 1.0;
        for (m, slot) in mass.iter_mut().enumerate() {
            *slot = c / 2f64.powi(n as i32);
            c = c * (n - m) as f64 / (m + 1) as f64;
        }
        Self { n, mass }
    }

    /// Spreads each weight class uniformly over its strings. Exact for
    /// distributions that depend only on Hamming weight.
    pub fn to_exchangeable_distribution(&self) -> Result<StringDistribution> {
        let binom = Self::binomial(self.n);
        let m = 1usize << self.n;
        let p = (0..m)
            .map(|i| {
                let w = i.count_ones() as usize;
                self.mass[w] / (binom.mass[w] * m as f64)
            })
            .collect();
        StringDistribution::new(self.n, p, DistributionSource::Exact)
    }
}

pub fn hamming_profile(dist: &dyn StringMass) -> HammingProfile {
    let n = dist.string_len();
    let mut mass = vec![0.0; n + 1];
    for (w, p) in dist.weighted_masses() {
        mass[w] += p;
    }
    HammingProfile { n, mass }
}

/// `Σ_M p(M)²`: `1/2^n` for equally likely strings, 1 for a certain string.
pub fn distribution_purity(dist: &dyn StringMass) -> f64 {
    dist.weighted_masses().map(|(_, p)| p * p).sum()
}

/// Shannon entropy in bits.
pub fn shannon_entropy(dist: &dyn StringMass) -> f64 {
    -dist.weighted_masses().map(|(_, p)| p * p.log2()).sum::<f64>()
}

/// Which runs condition the repeat probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunPooling {
    /// Runs of 0s and runs of 1s together.
    #[default]
    Pooled,
    /// Only runs of the given symbol.
    Symbol(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLengthProfile {
    /// Entry `n-1` is `P(next = s | previous n results all = s)`; `None` when
    /// no position satisfies the condition.
    pub repeat_curve: Vec<Option<f64>>,
    /// Conditioning-set size behind each curve entry.
    pub samples: Vec<u64>,
    /// Maximal identical-result runs by length. A run cut off by the end of a
    /// record is counted at its observed length.
    pub run_length_hist: BTreeMap<usize, u64>,
}

impl RunLengthProfile {
    pub fn at(&self, n: usize) -> Option<f64> {
        self.repeat_curve.get(n.checked_sub(1)?).copied().flatten()
    }
}

/// Repeat-probability curve for run lengths `1..=n_max`.
///
/// Every position `i ≥ 1` of every record whose preceding identical block has
/// length `L` contributes to the conditioning sets `n = 1..=min(L, n_max)`,
/// and is a success when it extends the block.
pub fn repeat_probability_curve(
    records: &[MeasurementRecord],
    n_max: usize,
    pooling: RunPooling,
) -> Result<RunLengthProfile> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records to analyse".into()));
    }
    if let Some(r) = records.iter().find(|r| r.len() < 2) {
        return Err(Error::InvalidParameter(format!(
            "run {} has {} results; repeat statistics need at least 2",
            r.run_index,
            r.len()
        )));
    }
    // Difference arrays: conditioning sets are prefixes 1..=L of the n axis.
    let mut den = vec![0i64; n_max + 2];
    let mut num = vec![0i64; n_max + 2];
    let mut hist = BTreeMap::new();
    for r in records {
        let bits = r.bits();
        let mut run = 1usize;
        for i in 1..bits.len() {
            let symbol = bits[i - 1];
            let counts = match pooling {
                RunPooling::Pooled => true,
                RunPooling::Symbol(s) => s == symbol,
            };
            let extended = bits[i] == symbol;
            if counts {
                let top = run.min(n_max);
                den[1] += 1;
                den[top + 1] -= 1;
                if extended {
                    num[1] += 1;
                    num[top + 1] -= 1;
                }
            }
            if extended {
                run += 1;
            } else {
                *hist.entry(run).or_insert(0) += 1;
                run = 1;
            }
        }
        *hist.entry(run).or_insert(0) += 1;
    }
    let (mut d, mut s) = (0i64, 0i64);
    let mut curve = Vec::with_capacity(n_max);
    let mut samples = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        d += den[n];
        s += num[n];
        samples.push(d as u64);
        curve.push((d > 0).then(|| s as f64 / d as f64));
    }
    Ok(RunLengthProfile { repeat_curve: curve, samples, run_length_hist: hist })
}

/// Total-variation distance between an empirical histogram and a reference.
pub fn compare_to_reference(hist: &StringHistogram, reference: &StringDistribution) -> Result<f64> {
    if hist.n() != reference.n() {
        return Err(Error::DimensionMismatch { expected: reference.n(), found: hist.n() });
    }
    let total = hist.total() as f64;
    // Unobserved strings contribute p_ref; observed ones |p̂ − p_ref|.
    let mut tv: f64 = reference.probabilities().iter().sum();
    for (k, c) in hist.iter() {
        let p = reference.probabilities()[bits_to_index(k)];
        tv += (c as f64 / total - p).abs() - p;
    }
    Ok(0.5 * tv)
}
