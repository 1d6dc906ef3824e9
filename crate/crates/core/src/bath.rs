//! Bath description, conditional propagators, the measurement Kraus pair and
//! the free-induction-decay signal.
//!
//! Units throughout: angular frequencies in rad/µs, times in µs.
//!
//! The central spin is reduced to the two levels `|+1⟩, |−1⟩`. Conditioned on
//! each level the bath evolves under
//!
//! ```text
//! H± = Σ_k ω I_z^k ± Σ_k g_k · I_k ,    I = σ/2
//! ```
//!
//! Both are sums of single-spin terms, so `U±(t) = ⊗_k u_k±(t)` and each
//! factor is a closed-form SU(2) rotation about `(±g_x, ±g_y, ω ± g_z)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{su2_rotation, DenseMatrix, Mat2, ProductOperator, C64};

/// Largest bath handled by pure-state operations.
pub const MAX_PURE_SPINS: usize = 14;
/// Largest bath handled by density-operator operations.
pub const MAX_DENSITY_SPINS: usize = 10;

/// Dipolar coupling vector of one bath spin, in the central-spin frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct SpinCoupling {
    pub gx: f64,
    pub gy: f64,
    pub gz: f64,
}

impl SpinCoupling {
    pub fn new(gx: f64, gy: f64, gz: f64) -> Self {
        Self { gx, gy, gz }
    }

    pub fn z(gz: f64) -> Self {
        Self::new(0.0, 0.0, gz)
    }

    pub fn magnitude(&self) -> f64 {
        (self.gx * self.gx + self.gy * self.gy + self.gz * self.gz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.gx.is_finite() && self.gy.is_finite() && self.gz.is_finite()
    }

    pub fn is_longitudinal(&self) -> bool {
        self.gx == 0.0 && self.gy == 0.0
    }

    fn scaled(&self, s: f64) -> Self {
        Self::new(s * self.gx, s * self.gy, s * self.gz)
    }
}

impl From<[f64; 3]> for SpinCoupling {
    fn from(g: [f64; 3]) -> Self {
        Self::new(g[0], g[1], g[2])
    }
}

impl From<SpinCoupling> for [f64; 3] {
    fn from(g: SpinCoupling) -> Self {
        [g.gx, g.gy, g.gz]
    }
}

/// The bath: one coupling per spin in canonical order, and a uniform Zeeman
/// frequency. Serializes as `{"zeeman", "couplings": [[gx,gy,gz],...], "seed_tag"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BathSpecRepr", into = "BathSpecRepr")]
pub struct BathSpec {
    couplings: Vec<SpinCoupling>,
    zeeman: f64,
    seed_tag: String,
}

#[derive(Serialize, Deserialize)]
struct BathSpecRepr {
    zeeman: f64,
    couplings: Vec<SpinCoupling>,
    #[serde(default)]
    seed_tag: String,
}

impl TryFrom<BathSpecRepr> for BathSpec {
    type Error = Error;

    fn try_from(r: BathSpecRepr) -> Result<Self> {
        BathSpec::new(r.couplings, r.zeeman, r.seed_tag)
    }
}

impl From<BathSpec> for BathSpecRepr {
    fn from(b: BathSpec) -> Self {
        BathSpecRepr { zeeman: b.zeeman, couplings: b.couplings, seed_tag: b.seed_tag }
    }
}

impl BathSpec {
    pub fn new(couplings: Vec<SpinCoupling>, zeeman: f64, seed_tag: impl Into<String>) -> Result<Self> {
        if couplings.is_empty() {
            return Err(Error::InvalidParameter("a bath needs at least one spin".into()));
        }
        if let Some(k) = couplings.iter().position(|g| !g.is_finite()) {
            return Err(Error::InvalidParameter(format!("coupling of spin {k} is not finite")));
        }
        if !zeeman.is_finite() {
            return Err(Error::InvalidParameter("zeeman frequency is not finite".into()));
        }
        Ok(Self { couplings, zeeman, seed_tag: seed_tag.into() })
    }

    /// A bath with couplings along the central-spin axis only.
    pub fn longitudinal(gz: &[f64], zeeman: f64) -> Result<Self> {
        Self::new(gz.iter().map(|&g| SpinCoupling::z(g)).collect(), zeeman, "")
    }

    pub fn couplings(&self) -> &[SpinCoupling] {
        &self.couplings
    }

    pub fn zeeman(&self) -> f64 {
        self.zeeman
    }

    pub fn seed_tag(&self) -> &str {
        &self.seed_tag
    }

    pub fn n_spins(&self) -> usize {
        self.couplings.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.couplings.len()
    }

    /// Same bath with every coupling multiplied by `s`.
    pub fn with_coupling_scale(&self, s: f64) -> Self {
        Self {
            couplings: self.couplings.iter().map(|g| g.scaled(s)).collect(),
            zeeman: self.zeeman,
            seed_tag: self.seed_tag.clone(),
        }
    }

    pub fn with_seed_tag(mut self, tag: impl Into<String>) -> Self {
        self.seed_tag = tag.into();
        self
    }

    /// True when `H+` and `H−` commute: for every spin either the coupling is
    /// longitudinal or the Zeeman term vanishes.
    pub fn is_commuting(&self) -> bool {
        self.zeeman == 0.0 || self.couplings.iter().all(SpinCoupling::is_longitudinal)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Draws a bath whose `3N` coupling components are i.i.d. `N(0, coupling_scale²)`.
pub fn sample_bath_spec<R: Rng + ?Sized>(
    n_spins: usize,
    coupling_scale: f64,
    zeeman: f64,
    rng: &mut R,
) -> Result<BathSpec> {
    if n_spins == 0 {
        return Err(Error::InvalidParameter("n_spins must be at least 1".into()));
    }
    if !(coupling_scale > 0.0) || !coupling_scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "coupling_scale must be positive and finite, got {coupling_scale}"
        )));
    }
    let couplings = (0..n_spins)
        .map(|_| {
            let mut draw = || -> f64 {
                let z: f64 = StandardNormal.sample(rng);
                coupling_scale * z
            };
            SpinCoupling::new(draw(), draw(), draw())
        })
        .collect();
    BathSpec::new(couplings, zeeman, format!("normal(scale={coupling_scale})"))
}

/// Per-spin 2×2 factors of `U+(t)` and `U−(t)`.
#[derive(Debug, Clone)]
pub struct ConditionalPropagators {
    plus: ProductOperator,
    minus: ProductOperator,
    contact_time: f64,
}

impl ConditionalPropagators {
    pub fn per_spin_plus(&self) -> &[Mat2] {
        self.plus.factors()
    }

    pub fn per_spin_minus(&self) -> &[Mat2] {
        self.minus.factors()
    }

    pub fn plus(&self) -> &ProductOperator {
        &self.plus
    }

    pub fn minus(&self) -> &ProductOperator {
        &self.minus
    }

    pub fn contact_time(&self) -> f64 {
        self.contact_time
    }

    pub fn n_spins(&self) -> usize {
        self.plus.n_spins()
    }

    /// Full-space `U+`; only for small baths and cross-checks.
    pub fn full_plus(&self) -> Result<DenseMatrix> {
        check_density_limit(self.n_spins())?;
        Ok(self.plus.to_dense())
    }

    pub fn full_minus(&self) -> Result<DenseMatrix> {
        check_density_limit(self.n_spins())?;
        Ok(self.minus.to_dense())
    }
}

pub(crate) fn check_density_limit(n_spins: usize) -> Result<()> {
    if n_spins > MAX_DENSITY_SPINS {
        return Err(Error::EngineLimit(format!(
            "density-operator operations support at most {MAX_DENSITY_SPINS} bath spins, got {n_spins}"
        )));
    }
    Ok(())
}

pub(crate) fn check_pure_limit(n_spins: usize) -> Result<()> {
    if n_spins > MAX_PURE_SPINS {
        return Err(Error::EngineLimit(format!(
            "pure-state operations support at most {MAX_PURE_SPINS} bath spins, got {n_spins}"
        )));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be finite and non-negative, got {t}")));
    }
    Ok(())
}

fn plus_axis(g: &SpinCoupling, zeeman: f64) -> [f64; 3] {
    [g.gx, g.gy, zeeman + g.gz]
}

fn minus_axis(g: &SpinCoupling, zeeman: f64) -> [f64; 3] {
    [-g.gx, -g.gy, zeeman - g.gz]
}

pub fn conditional_unitaries(spec: &BathSpec, t: f64) -> Result<ConditionalPropagators> {
    check_time(t)?;
    let w = spec.zeeman();
    let plus = spec.couplings().iter().map(|g| su2_rotation(plus_axis(g, w), t)).collect();
    let minus = spec.couplings().iter().map(|g| su2_rotation(minus_axis(g, w), t)).collect();
    Ok(ConditionalPropagators {
        plus: ProductOperator::new(plus),
        minus: ProductOperator::new(minus),
        contact_time: t,
    })
}

/// Measurement operators for one prepare–evolve–readout cycle:
/// `V+ = (U+ + U−)/2` for outcome 0 and `V− = (U+ − U−)/2` for outcome 1.
///
/// Stored through the product factors of `U±`, so applying `V±` costs two
/// product-operator sweeps and never touches a 2^N × 2^N matrix.
#[derive(Debug, Clone)]
pub struct KrausPair {
    props: ConditionalPropagators,
}

pub fn kraus_pair(props: ConditionalPropagators) -> KrausPair {
    KrausPair { props }
}

impl KrausPair {
    pub fn from_spec(spec: &BathSpec, t: f64) -> Result<Self> {
        Ok(kraus_pair(conditional_unitaries(spec, t)?))
    }

    pub fn n_spins(&self) -> usize {
        self.props.n_spins()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins()
    }

    pub fn contact_time(&self) -> f64 {
        self.props.contact_time
    }

    pub fn propagators(&self) -> &ConditionalPropagators {
        &self.props
    }

    /// `out ← V_outcome · v`. `scratch` must have the same length as `v`.
    pub fn apply(&self, outcome: u8, v: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        out.copy_from_slice(v);
        scratch.copy_from_slice(v);
        self.props.plus.apply_in_place(out);
        self.props.minus.apply_in_place(scratch);
        let sign = if outcome == 0 { 1.0 } else { -1.0 };
        for (o, m) in out.iter_mut().zip(scratch.iter()) {
            *o = 0.5 * (*o + sign * *m);
        }
    }

    /// In-place `v ← V_outcome v`.
    pub fn apply_in_place(&self, outcome: u8, v: &mut [C64]) {
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        let mut scratch = vec![C64::new(0.0, 0.0); v.len()];
        self.apply(outcome, v, &mut out, &mut scratch);
        v.copy_from_slice(&out);
    }

    /// Assembled `V+`.
    pub fn v_plus(&self) -> Result<DenseMatrix> {
        Ok((self.props.full_plus()? + self.props.full_minus()?) * C64::from(0.5))
    }

    /// Assembled `V−`.
    pub fn v_minus(&self) -> Result<DenseMatrix> {
        Ok((self.props.full_plus()? - self.props.full_minus()?) * C64::from(0.5))
    }

    pub fn v(&self, outcome: u8) -> Result<DenseMatrix> {
        if outcome == 0 {
            self.v_plus()
        } else {
            self.v_minus()
        }
    }
}

/// Per-spin overlap `½ Tr[u+ u−†]`; its real part is the spin's FID factor.
fn spin_overlap(g: &SpinCoupling, zeeman: f64, t: f64) -> C64 {
    let up = su2_rotation(plus_axis(g, zeeman), t);
    let um = su2_rotation(minus_axis(g, zeeman), t);
    (up * um.adjoint()).trace() * 0.5
}

/// Central-spin coherence `C(t)` for the superposition `(|+1⟩+|−1⟩)/√2` in a
/// maximally mixed bath, `Re ∏_k ½ Tr[u_k+ u_k−†]`.
pub fn fid(spec: &BathSpec, t: f64) -> Result<f64> {
    check_time(t)?;
    let w = spec.zeeman();
    let prod = spec
        .couplings()
        .iter()
        .fold(C64::new(1.0, 0.0), |acc, g| acc * spin_overlap(g, w, t));
    Ok(prod.re.clamp(-1.0, 1.0))
}

/// Per-spin effective static fields `φ_k ≥ 0` with `cos(φ_k t) = ½ Tr[u_k+ u_k−†]`.
///
/// `u−† u+` is an SU(2) rotation, so the overlap is real and equal to the
/// cosine of half its rotation angle.
pub fn effective_fields(spec: &BathSpec, t: f64) -> Result<Vec<f64>> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(spec.couplings().iter().map(SpinCoupling::magnitude).collect());
    }
    let w = spec.zeeman();
    Ok(spec
        .couplings()
        .iter()
        .map(|g| spin_overlap(g, w, t).re.clamp(-1.0, 1.0).acos() / t)
        .collect())
}

const SCALE_LO: f64 = 1e-3;
const SCALE_HI: f64 = 1e3;
const SCALE_GRID: usize = 600;

/// Smallest scale in `[1e-3, 1e3]` with `f(scale) ≤ level`, refined by bisection.
fn first_scale_below(level: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let ratio = (SCALE_HI / SCALE_LO).powf(1.0 / SCALE_GRID as f64);
    let mut lo = SCALE_LO;
    if f(lo) <= level {
        return Err(Error::Calibration(format!(
            "coherence is already below {level:.4} at the smallest scale {SCALE_LO} rad/µs"
        )));
    }
    let mut hi = None;
    for i in 1..=SCALE_GRID {
        let s = SCALE_LO * ratio.powi(i as i32);
        if f(s) <= level {
            hi = Some(s);
            break;
        }
        lo = s;
    }
    let mut hi = hi.ok_or_else(|| {
        Error::Calibration(format!(
            "coherence never drops to {level:.4} for scales in [{SCALE_LO}, {SCALE_HI}] rad/µs"
        ))
    })?;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Number of bath draws averaged per evaluation in [`calibrate_coupling_scale`].
pub const CALIBRATION_SAMPLES: usize = 20_000;

/// Finds the coupling scale at which the ensemble-averaged FID of
/// [`sample_bath_spec`] baths first falls to `1/e` at `target_t2star`.
///
/// One set of unit-scale shapes is drawn up front and reused at every trial
/// scale, so the averaged curve is a deterministic, continuous function of
/// the scale and bisection is well posed.
pub fn calibrate_coupling_scale<R: Rng + ?Sized>(
    n_spins: usize,
    zeeman: f64,
    target_t2star: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(target_t2star > 0.0) || !target_t2star.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "target T2* must be positive, got {target_t2star}"
        )));
    }
    let shapes = (0..CALIBRATION_SAMPLES)
        .map(|_| sample_bath_spec(n_spins, 1.0, zeeman, rng))
        .collect::<Result<Vec<_>>>()?;
    let level = (-1.0f64).exp();
    first_scale_below(level, |s| ensemble_fid(&shapes, s, target_t2star))
}

/// Mean FID over `shapes`, each rescaled by `scale`.
pub fn ensemble_fid(shapes: &[BathSpec], scale: f64, t: f64) -> f64 {
    let sum: f64 = shapes
        .iter()
        .map(|b| fid(&b.with_coupling_scale(scale), t).unwrap_or(f64::NAN))
        .sum();
    sum / shapes.len() as f64
}

/// Rescales the couplings of `shape` by the smallest factor at which its own
/// FID at `t` reaches `level`.
///
/// With `level = 0` this places the contact time `t` at the point where the
/// central spin is fully depolarized, so single readouts are fair coins.
/// Returns the rescaled bath and the factor applied.
pub fn calibrate_spec_to_level(shape: &BathSpec, t: f64, level: f64) -> Result<(BathSpec, f64)> {
    check_time(t)?;
    if t == 0.0 {
        return Err(Error::InvalidParameter("calibration time must be positive".into()));
    }
    if !(-1.0..1.0).contains(&level) {
        return Err(Error::InvalidParameter(format!("decay level must lie in [-1, 1), got {level}")));
    }
    let s = first_scale_below(level, |s| fid(&shape.with_coupling_scale(s), t).unwrap_or(f64::NAN))?;
    Ok((shape.with_coupling_scale(s), s))
}

/// First time in `(0, t_max]` at which `f` falls to `level`, located on a
/// grid of `steps` points and refined by bisection.
pub fn first_crossing_time(level: f64, t_max: f64, steps: usize, f: impl Fn(f64) -> f64) -> Option<f64> {
    let dt = t_max / steps as f64;
    let mut lo = 0.0;
    let mut hi = None;
    for i in 1..=steps {
        let t = i as f64 * dt;
        if f(t) <= level {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let mut hi = hi?;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
