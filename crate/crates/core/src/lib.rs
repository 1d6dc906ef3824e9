//! Measurement back-action of a finite spin bath on a repeatedly read-out
//! central spin.
//!
//! A two-level central spin couples to `N` non-interacting spin-1/2 bath
//! spins. Each protocol cycle prepares the central spin in a superposition,
//! lets it dephase against the bath for a contact time `τ`, and reads it out
//! projectively. The readout outcome selects one of two Kraus operators
//! `V± = (U+ ± U−)/2` acting on the bath, so the bath remembers earlier
//! outcomes and correlates later ones.
//!
//! - [`bath`]: bath description, conditional propagators, Kraus pair, FID, calibration.
//! - [`engine`]: outcome probabilities, collapse, trajectory sampling, exact enumeration.
//! - [`statistics`]: histograms, Hamming profiles, purity and entropy, run-length curves.
//! - [`classical`]: spectral-density coherence and classical record generators.
//! - [`io`]: records files and CSV emitters.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod classical;
pub mod engine;
pub mod error;
pub mod io;
pub mod linalg;
pub mod quadrature;
pub mod record;
pub mod state;
pub mod statistics;

pub use bath::{
    calibrate_coupling_scale, calibrate_spec_to_level, conditional_unitaries, fid, kraus_pair, sample_bath_spec,
    BathSpec, ConditionalPropagators, KrausPair, SpinCoupling,
};
pub use classical::{
    coherence_classical, iid_coin_records, matched_spectral_density, static_field_distribution,
    static_field_records, SpectralDensity,
};
pub use engine::{
    collapse, enumerate_string_distribution, measurement_probabilities, run_trajectory, simulate_records,
    unconditional_bath_state, Engine, Enumeration, InitialBath, ProtocolConfig, Simulator, StateRetention,
    StringDistribution,
};
pub use error::{Error, Result};
pub use record::MeasurementRecord;
pub use state::{bath_purity, BathState};
pub use statistics::{
    compare_to_reference, distribution_purity, hamming_profile, repeat_probability_curve, shannon_entropy,
    string_histogram, HammingProfile, RunLengthProfile, RunPooling, StringHistogram,
};
