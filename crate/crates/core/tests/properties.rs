use proptest::prelude::*;
use rand::Rng;
use spinwalk::bath::{ensemble_fid, first_crossing_time};
use spinwalk::engine::{bath_rng, run_rng};
use spinwalk::linalg::{max_abs_diff, DenseMatrix, C64};
use spinwalk::record::index_to_bits;
use spinwalk::*;

const TAU: f64 = 1.2;

/// Ensemble FID of Gaussian-sampled baths at ω = 0, in closed form.
///
/// Each spin contributes `cos(|g| t)` and `|g|/s` is Maxwell distributed, for
/// which `E[cos(r x)] = (1 − x²) exp(−x²/2)`.
fn maxwell_ensemble_fid(n_spins: usize, scale: f64, t: f64) -> f64 {
    let x = scale * t;
    ((1.0 - x * x) * (-0.5 * x * x).exp()).powi(n_spins as i32)
}

/// Smallest `x` with `maxwell_ensemble_fid(n, x, 1) = 1/e`, by bisection.
fn maxwell_calibration_root(n_spins: usize) -> f64 {
    let target = (-1.0f64).exp();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if maxwell_ensemble_fid(n_spins, mid, 1.0) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn depolarized_spec(n_spins: usize, zeeman: f64, seed: u64) -> BathSpec {
    let shape = sample_bath_spec(n_spins, 1.0, zeeman, &mut bath_rng(seed)).unwrap();
    calibrate_spec_to_level(&shape, TAU, 0.0).unwrap().0
}

fn exact(spec: &BathSpec, n: usize) -> Enumeration {
    enumerate_string_distribution(spec, &ProtocolConfig::new(TAU, n, 1), StateRetention::PurityOnly).unwrap()
}

#[test]
fn assembled_propagators_are_unitary() {
    let mut rng = run_rng(100, 0);
    for n in 1..=8 {
        let spec = sample_bath_spec(n, 1.0, 0.5, &mut rng).unwrap();
        let p = conditional_unitaries(&spec, rng.random::<f64>() * 5.0).unwrap();
        let id = DenseMatrix::identity(spec.dim(), spec.dim());
        for u in [p.full_plus().unwrap(), p.full_minus().unwrap()] {
            assert!(max_abs_diff(&(u.adjoint() * &u), &id) < 1e-12);
        }
    }
}

#[test]
fn zero_field_kraus_operators_commute() {
    let mut rng = run_rng(101, 0);
    for n in 1..=5 {
        let gz: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let z = BathSpec::longitudinal(&gz, 0.0).unwrap();
        let isotropic = sample_bath_spec(n, 1.0, 0.0, &mut rng).unwrap();
        for spec in [z, isotropic] {
            let k = KrausPair::from_spec(&spec, 1.7).unwrap();
            let (a, b) = (k.v_plus().unwrap(), k.v_minus().unwrap());
            assert!(max_abs_diff(&(&a * &b), &(&b * &a)) < 1e-12);
        }
    }
    let field = sample_bath_spec(3, 1.0, 0.8, &mut rng).unwrap();
    let k = KrausPair::from_spec(&field, 1.7).unwrap();
    let (a, b) = (k.v_plus().unwrap(), k.v_minus().unwrap());
    assert!(max_abs_diff(&(&a * &b), &(&b * &a)) > 1e-6);
}

#[test]
fn fid_scale_covariance_at_zero_field() {
    let mut rng = run_rng(102, 0);
    for _ in 0..20 {
        let spec = sample_bath_spec(6, 1.0, 0.0, &mut rng).unwrap();
        let s = 0.1 + 3.0 * rng.random::<f64>();
        let t = 2.0 * rng.random::<f64>();
        let lhs = fid(&spec.with_coupling_scale(s), t).unwrap();
        let rhs = fid(&spec, s * t).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

#[test]
fn ensemble_calibration_matches_maxwell_oracle() {
    for n in [1usize, 4] {
        let s = calibrate_coupling_scale(n, 0.0, TAU, &mut run_rng(103, n)).unwrap();
        let at_target = maxwell_ensemble_fid(n, s, TAU);
        let target = (-1.0f64).exp();
        assert!((at_target - target).abs() < 0.05 * target, "n={n}: {at_target}");
        let oracle = maxwell_calibration_root(n) / TAU;
        assert!((s - oracle).abs() < 0.05 * oracle, "n={n}: scale {s} vs {oracle}");
    }
    assert!(calibrate_coupling_scale(4, 0.0, -1.0, &mut run_rng(0, 0)).is_err());
}

#[test]
fn doubling_scale_halves_t2star() {
    let s = calibrate_coupling_scale(4, 0.0, TAU, &mut run_rng(104, 0)).unwrap();
    let mut rng = run_rng(104, 1);
    let shapes: Vec<_> = (0..400).map(|_| sample_bath_spec(4, 1.0, 0.0, &mut rng).unwrap()).collect();
    let level = (-1.0f64).exp();
    let t1 = first_crossing_time(level, 10.0, 2000, |t| ensemble_fid(&shapes, s, t)).unwrap();
    let t2 = first_crossing_time(level, 10.0, 2000, |t| ensemble_fid(&shapes, 2.0 * s, t)).unwrap();
    assert!((t2 / t1 - 0.5).abs() < 0.05, "{t1} {t2}");
    // Fresh shapes: the calibrated ensemble crosses 1/e near the target.
    assert!((t1 - TAU).abs() < 0.1 * TAU, "{t1}");
}

#[test]
fn depolarized_contact_time_gives_fair_coin() {
    for seed in 0..5 {
        let spec = depolarized_spec(4, 0.35, seed);
        let k = KrausPair::from_spec(&spec, TAU).unwrap();
        let (p0, p1) = measurement_probabilities(&k, &BathState::maximally_mixed(4).unwrap()).unwrap();
        assert!((p0 - 0.5).abs() < 1e-10 && (p1 - 0.5).abs() < 1e-10);
    }
}

#[test]
fn zero_field_string_probability_depends_only_on_weight() {
    let mut rng = run_rng(105, 0);
    let gz: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0).collect();
    let spec = BathSpec::longitudinal(&gz, 0.0).unwrap();
    let e = exact(&spec, 5);
    let d = &e.distribution;
    // Hamming profile determines the distribution.
    let rebuilt = hamming_profile(d).to_exchangeable_distribution().unwrap();
    assert!(max_prob_diff(d, &rebuilt) < 1e-12);
    // Non-commuting bath breaks the symmetry.
    let field = depolarized_spec(3, 0.35, 7);
    let e = exact(&field, 3);
    let rebuilt = hamming_profile(&e.distribution).to_exchangeable_distribution().unwrap();
    assert!(max_prob_diff(&e.distribution, &rebuilt) > 1e-6);
}

fn max_prob_diff(a: &StringDistribution, b: &StringDistribution) -> f64 {
    a.probabilities().iter().zip(b.probabilities()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn identical_outcome_strings_purify_the_bath() {
    for (seed, zeeman) in [(1u64, 0.0), (2, 0.35), (3, 0.35), (4, 1.0)] {
        let spec = depolarized_spec(4, zeeman, seed);
        let e = exact(&spec, 4);
        let floor = 1.0 / 16.0 + 1e-12;
        assert!(e.conditional_purity[0].unwrap() > floor);
        assert!(e.conditional_purity[15].unwrap() > floor);
    }
}

#[test]
fn calibrated_hamming_profile_is_u_shaped() {
    let spec = depolarized_spec(4, 0.35, 1);
    let h = hamming_profile(&exact(&spec, 4).distribution);
    assert!(h.mass[0] > 1.0 / 16.0 && h.mass[4] > 1.0 / 16.0);
    assert!(h.mass[0] > h.mass[1] / 4.0 && h.mass[4] > h.mass[3] / 4.0);
}

#[test]
fn quantum_statistics_are_distinguishable_from_uniform() {
    let spec = depolarized_spec(4, 0.35, 1);
    let e = exact(&spec, 4);
    let uniform = StringDistribution::uniform(4).unwrap();
    let population_tv = e.distribution.total_variation(&uniform).unwrap();
    let r = 75_312;
    let recs = simulate_records(&spec, &ProtocolConfig::new(TAU, 4, r), 5, 4).unwrap();
    let hist = string_histogram(&recs).unwrap();
    let empirical_tv = compare_to_reference(&hist, &uniform).unwrap();
    let threshold = 5.0 / (r as f64).sqrt();
    assert!(population_tv > threshold);
    assert!(empirical_tv > threshold);
    assert!((empirical_tv - population_tv).abs() < 4.0 * (16.0 / r as f64).sqrt());
}

#[test]
fn static_field_records_are_exchangeable() {
    let g = SpectralDensity::Gaussian { gamma: 1.3 };
    let r = 100_000;
    let recs = static_field_records(&g, TAU, 4, r, 11, 4).unwrap();
    let hist = string_histogram(&recs).unwrap();
    let exact = static_field_distribution(&g, TAU, 4).unwrap();
    for i in 0..16 {
        let bits = index_to_bits(i, 4);
        let p = exact.probabilities()[i];
        let sigma = (p * (1.0 - p) / r as f64).sqrt();
        assert!((hist.frequency(&bits) - p).abs() < 4.0 * sigma, "string {i}");
    }
}

#[test]
fn static_field_records_match_commuting_quantum_bath() {
    let spec = depolarized_spec(4, 0.0, 3);
    let g = matched_spectral_density(&spec, TAU).unwrap();
    let r = 50_000;
    let recs = static_field_records(&g, TAU, 4, r, 12, 2).unwrap();
    let tv = compare_to_reference(&string_histogram(&recs).unwrap(), &exact(&spec, 4).distribution).unwrap();
    assert!(tv < 4.0 * (16.0 / r as f64).sqrt(), "tv {tv}");
}

#[test]
fn quantum_statistics_are_not_a_static_field() {
    let spec = depolarized_spec(4, 0.35, 1);
    let g = matched_spectral_density(&spec, TAU).unwrap();
    let classical = static_field_distribution(&g, TAU, 4).unwrap();
    let quantum = exact(&spec, 4).distribution;
    // Same single-readout marginal...
    let m = |d: &StringDistribution| d.probabilities()[..8].iter().sum::<f64>();
    assert!((m(&classical) - m(&quantum)).abs() < 1e-9);
    // ...different correlations.
    assert!(quantum.total_variation(&classical).unwrap() > 1e-8);
}

#[test]
fn pure_and_density_engines_agree_statistically() {
    let spec = depolarized_spec(3, 0.35, 4);
    let r = 40_000;
    let mc = simulate_records(&spec, &ProtocolConfig::new(TAU, 3, r), 1, 4).unwrap();
    let dm = simulate_records(&spec, &ProtocolConfig::new(TAU, 3, r).with_engine(Engine::ExactEnumeration), 2, 4)
        .unwrap();
    let reference = exact(&spec, 3).distribution;
    let bound = 4.0 * (8.0 / r as f64).sqrt();
    assert!(compare_to_reference(&string_histogram(&mc).unwrap(), &reference).unwrap() < bound);
    assert!(compare_to_reference(&string_histogram(&dm).unwrap(), &reference).unwrap() < bound);
}

#[test]
fn given_initial_states_are_unraveled() {
    // A polarized bath: every spin up, longitudinal couplings → V+ acts as a
    // phase-free scalar cos(Σg/2 · t) on |↑…↑⟩.
    let gz = [0.6, 1.1];
    let spec = BathSpec::longitudinal(&gz, 0.0).unwrap();
    let up = BathState::basis(2, 0).unwrap();
    let p = ProtocolConfig::new(TAU, 1, 20_000).with_initial_bath(InitialBath::Given(up.clone()));
    let e = enumerate_string_distribution(&spec, &p, StateRetention::PurityOnly).unwrap();
    let expect = (0.5 * (gz[0] + gz[1]) * TAU).cos().powi(2);
    assert!((e.distribution.probabilities()[0] - expect).abs() < 1e-12);
    let dens = BathState::from_density(up.to_density().unwrap()).unwrap();
    let p = p.with_initial_bath(InitialBath::Given(dens));
    let recs = simulate_records(&spec, &p, 9, 2).unwrap();
    let f0 = recs.iter().filter(|r| r.bits()[0] == 0).count() as f64 / recs.len() as f64;
    assert!((f0 - expect).abs() < 4.0 * (expect * (1.0 - expect) / 20_000.0).sqrt());
}

#[test]
fn coherence_classical_kernel_is_even_and_bounded() {
    let g = SpectralDensity::Discrete { atoms: vec![(0.3, 0.2), (-1.4, 0.5), (2.2, 0.3)] };
    for t in [0.0, 0.4, 1.9, 7.0] {
        let c = coherence_classical(&g, t).unwrap();
        let mirrored = g.expectation(|w| (-w * t).cos()).unwrap();
        assert!((c - mirrored).abs() < 1e-15);
        assert!(c.abs() <= 1.0);
    }
}

fn arb_spec() -> impl Strategy<Value = BathSpec> {
    (1usize..=5, prop::collection::vec(-2.0f64..2.0, 15), -1.5f64..1.5).prop_map(|(n, g, w)| {
        let couplings = (0..n).map(|k| SpinCoupling::new(g[3 * k], g[3 * k + 1], g[3 * k + 2])).collect();
        BathSpec::new(couplings, w, "proptest").unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kraus_completeness_holds(spec in arb_spec(), t in 0.0f64..6.0) {
        let k = KrausPair::from_spec(&spec, t).unwrap();
        let (a, b) = (k.v_plus().unwrap(), k.v_minus().unwrap());
        let sum = a.adjoint() * &a + b.adjoint() * &b;
        prop_assert!(max_abs_diff(&sum, &DenseMatrix::identity(spec.dim(), spec.dim())) < 1e-12);
    }

    #[test]
    fn probabilities_normalized_for_any_state(spec in arb_spec(), t in 0.0f64..6.0, seed in 0u64..1000) {
        let k = KrausPair::from_spec(&spec, t).unwrap();
        let mut rng = run_rng(seed, 0);
        let v: Vec<C64> = (0..spec.dim()).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let psi = spinwalk::linalg::DenseVector::from_iterator(spec.dim(), v.into_iter().map(|z| z / norm));
        let state = BathState::from_pure(psi).unwrap();
        let (p0, p1) = measurement_probabilities(&k, &state).unwrap();
        prop_assert!((p0 + p1 - 1.0).abs() < 1e-10);
        let rho = BathState::from_density(state.to_density().unwrap()).unwrap();
        let (q0, q1) = measurement_probabilities(&k, &rho).unwrap();
        prop_assert!((q0 - p0).abs() < 1e-10 && (q1 - p1).abs() < 1e-10);
    }

    #[test]
    fn first_readout_marginal_tracks_fid(spec in arb_spec(), t in 0.0f64..6.0) {
        let e = enumerate_string_distribution(&spec, &ProtocolConfig::new(t, 1, 1), StateRetention::PurityOnly).unwrap();
        let expect = 0.5 * (1.0 + fid(&spec, t).unwrap());
        prop_assert!((e.distribution.probabilities()[0] - expect).abs() < 1e-10);
    }
}
