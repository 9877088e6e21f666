mod common;

use effcap::channel::{effective_capacity_rayleigh_iid, ergodic_capacity, CapacityMethod, ChannelSpec};
use effcap::sources::*;
use effcap::throughput::*;
use effcap::Execution;
use proptest::prelude::*;
use std::f64::consts::LN_2;

fn ce_iid(snr: f64, theta: f64, m: usize) -> f64 {
    effective_capacity_rayleigh_iid(snr, theta, m).unwrap().value
}

#[test]
fn always_on_discrete_passes_capacity_through() {
    for (p11, ce, theta) in [(0.0, 2.0, 1.0), (0.4, 0.3, 0.01), (0.9, 50.0, 3.0)] {
        let r = max_avg_rate_onoff_discrete(ce, theta, p11, 1.0).unwrap();
        assert!((r.r_avg_star - ce).abs() <= 1e-14 * ce, "{} vs {ce}", r.r_avg_star);
    }
}

#[test]
fn zero_capacity_gives_zero_rate() {
    assert_eq!(max_avg_rate_onoff_discrete(0.0, 1.0, 0.3, 0.6).unwrap().r_avg_star, 0.0);
    assert_eq!(max_avg_rate_onoff_fluid(0.0, 1.0, 3.0, 4.0).unwrap().r_avg_star, 0.0);
    assert_eq!(max_avg_rate_onoff_mmpp(0.0, 1.0, 3.0, 4.0).unwrap().r_avg_star, 0.0);
}

#[test]
fn symmetric_burstiness_value_and_round_trip() {
    let (s, ce, theta) = (0.5f64, 2.0f64, 1.0f64);
    let r = max_avg_rate_onoff_discrete(ce, theta, 1.0 - s, s).unwrap();
    // theta ce = 2: (e^4 - 0.5 e^2) / (0.5 e^2) = (e^2 - 0.5) / 0.5.
    let e2 = 2f64.exp();
    let expect = 0.5 * ((e2 * e2 - 0.5 * e2) / (0.5 * e2)).ln();
    assert!((expect - 0.5 * ((e2 - 0.5) / 0.5).ln()).abs() < 1e-15);
    assert!((r.r_avg_star - expect).abs() < 1e-13 * expect);
    // Burstiness-family form (s/theta) ln((e^{theta ce} - (1 - s)) / s).
    let family = s / theta * (((theta * ce).exp() - (1.0 - s)) / s).ln();
    assert!((r.r_avg_star - family).abs() < 1e-13 * family);
    let p = OnOffDiscreteParams::new(1.0 - s, s, r.lambda_star).unwrap();
    let back = effective_bandwidth_onoff_discrete(&p, theta).unwrap();
    assert!((back - ce).abs() < 1e-9 * ce);
}

#[test]
fn fluid_reference_value() {
    let r = max_avg_rate_onoff_fluid(2.0, 1.0, 50.0, 50.0).unwrap();
    assert!((r.r_avg_star - 102.0 / 52.0).abs() < 1e-14);
    let p = OnOffContinuousParams::new(50.0, 50.0, r.lambda_star).unwrap();
    assert!((effective_bandwidth_onoff_fluid(&p, 1.0).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(max_avg_rate_onoff_fluid(2.5, 0.7, 3.0, 0.0).unwrap().r_avg_star, 2.5);
}

#[test]
fn mmpp_reference_values() {
    let e1 = 1f64.exp() - 1.0;
    let r = max_avg_rate_onoff_mmpp(2.0, 1.0, 50.0, 50.0).unwrap();
    assert!((r.r_avg_star - 102.0 / 52.0 / e1).abs() < 1e-14);
    let poisson = max_avg_rate_onoff_mmpp(3.0, 2.0, 5.0, 0.0).unwrap();
    assert!((poisson.r_avg_star - 2.0 * 3.0 / 2f64.exp_m1()).abs() < 1e-14);
    let fluid = max_avg_rate_onoff_fluid(3.0, 1e-6, 2.0, 5.0).unwrap().r_avg_star;
    let mmpp = max_avg_rate_onoff_mmpp(3.0, 1e-6, 2.0, 5.0).unwrap().r_avg_star;
    assert!((mmpp / fluid - 1.0).abs() < 1e-5);
}

#[test]
fn absorbing_off_source_is_rejected() {
    assert!(matches!(
        max_avg_rate_onoff_discrete(1.0, 1.0, 1.0, 0.5),
        Err(effcap::Error::InvalidRegime(_))
    ));
}

#[test]
fn nstate_two_state_matches_closed_form() {
    for (p11, p22, theta, ce) in [(0.8, 0.8, 1.0, 2.0), (0.3, 0.9, 0.05, 7.0), (0.95, 0.2, 4.0, 0.4)] {
        let src = Source::Discrete(DiscreteMarkovSource::new(vec![vec![p11, 1.0 - p11], vec![1.0 - p22, p22]], vec![0.0, 1.0]).unwrap());
        let root = max_avg_rate_nstate(&src, theta, ce).unwrap();
        let closed = max_avg_rate_onoff_discrete(ce, theta, p11, p22).unwrap();
        assert!((root.r_avg_star - closed.r_avg_star).abs() < 1e-8 * closed.r_avg_star.max(1.0));
        assert!((root.lambda_star - closed.lambda_star).abs() < 1e-8 * closed.lambda_star.max(1.0));
        assert_eq!(root.method, ThroughputMethod::RootFind);
    }
}

fn binomial(n: usize, s: f64) -> Source {
    let mut pi = vec![0.0; n];
    let mut c = 1.0;
    for (i, p) in pi.iter_mut().enumerate() {
        *p = c * s.powi(i as i32) * (1.0 - s).powi((n - 1 - i) as i32);
        c = c * (n - 1 - i) as f64 / (i + 1) as f64;
    }
    let rates = (0..n).map(|i| i as f64).collect();
    Source::Discrete(DiscreteMarkovSource::new(vec![pi; n], rates).unwrap())
}

#[test]
fn nstate_all_sources_on_is_constant() {
    let r = max_avg_rate_nstate(&binomial(10, 1.0), 1.3, 4.2).unwrap();
    assert!((r.r_avg_star - 4.2).abs() < 1e-9 * 4.2);
}

#[test]
fn nstate_zero_shape_cannot_be_bracketed() {
    let src = Source::Discrete(DiscreteMarkovSource::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0.0, 0.0]).unwrap());
    assert!(matches!(max_avg_rate_nstate(&src, 1.0, 1.0), Err(effcap::Error::BracketFailure(_))));
}

fn birth_death(n: usize, alpha: f64, beta: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        if i + 1 < n {
            g[i][i + 1] = alpha;
        }
        if i > 0 {
            g[i][i - 1] = beta;
        }
        g[i][i] = -g[i].iter().sum::<f64>();
    }
    (g, (0..n).map(|i| i as f64).collect())
}

#[test]
fn birth_death_fluid_golden_value() {
    let (g, rates) = birth_death(10, 50.0, 50.0);
    let src = FluidMarkovSource::new(g.clone(), rates.clone()).unwrap();
    let pi = src.stationary().to_vec();
    let r = max_avg_rate_nstate(&Source::Fluid(src), 1.0, 2.0).unwrap();
    // Independent check through the matrix exponential of the tilted generator.
    let scaled: Vec<f64> = rates.iter().map(|c| c * r.lambda_star).collect();
    let oracle = common::continuous_log_mgf_rate(&g, &scaled, &pi, 1.0, 1.0);
    assert!((oracle - 2.0).abs() < 1e-8, "oracle a* = {oracle}");
    // Golden fixture, recorded after the check above.
    assert!((r.r_avg_star - GOLDEN_BD_R).abs() < 1e-9, "r* = {:.15}", r.r_avg_star);
    assert!((r.lambda_star - GOLDEN_BD_LAMBDA).abs() < 1e-9, "lambda* = {:.15}", r.lambda_star);
}

const GOLDEN_BD_R: f64 = 1.756_264_512_177_712;
const GOLDEN_BD_LAMBDA: f64 = 0.390_281_002_706_158_2;

#[test]
fn constant_limits_of_low_theta_derivative() {
    let spec = ChannelSpec::iid(10).unwrap();
    let cov = effcap::channel::log_rate_covariance_sum(&spec, 1.0).unwrap();
    for src in [
        Source::OnOffDiscrete(OnOffDiscreteParams::new(0.0, 1.0, 1.0).unwrap()),
        Source::OnOffFluid(OnOffContinuousParams::new(2.0, 0.0, 1.0).unwrap()),
        Source::Constant { rate: 1.0 },
    ] {
        let a = low_theta_asymptotics(&src, &spec, 1.0).unwrap();
        assert!((a.low_theta_derivative + 0.5 * cov).abs() < 1e-12 * cov);
    }
}

#[test]
fn mmpp_derivative_gap_is_half_ergodic() {
    let spec = ChannelSpec::new(10, 0.5, 1.0).unwrap();
    let p = OnOffContinuousParams::new(3.0, 2.0, 1.0).unwrap();
    let f = low_theta_asymptotics(&Source::OnOffFluid(p), &spec, 2.0).unwrap();
    let m = low_theta_asymptotics(&Source::OnOffMmpp(p), &spec, 2.0).unwrap();
    let erg = ergodic_capacity(&spec, 2.0).unwrap();
    assert!(((m.low_theta_derivative - f.low_theta_derivative) + 0.5 * erg).abs() < 1e-12 * erg);
}

#[test]
fn low_theta_derivative_matches_finite_difference() {
    let spec = ChannelSpec::iid(10).unwrap();
    let snr = 1.0;
    let srcs = [
        Source::OnOffDiscrete(OnOffDiscreteParams::new(0.5, 0.5, 1.0).unwrap()),
        Source::OnOffFluid(OnOffContinuousParams::new(1.0, 1.0, 1.0).unwrap()),
        Source::OnOffMmpp(OnOffContinuousParams::new(1.0, 1.0, 1.0).unwrap()),
    ];
    for src in srcs {
        let r = |theta: f64| max_avg_rate(&src, theta, ce_iid(snr, theta, 10)).unwrap().r_avg_star;
        let fd = (r(2e-3) - r(1e-3)) / 1e-3;
        let d = low_theta_asymptotics(&src, &spec, snr).unwrap().low_theta_derivative;
        assert!((fd - d).abs() < 0.05 * d.abs(), "{:?}: fd {fd} vs {d}", src.family());
    }
}

#[test]
fn bursty_derivative_needs_smaller_steps() {
    // With eta = 4 the second-order term is already visible at 1e-3, but
    // the difference quotient converges to the formula as theta shrinks.
    let spec = ChannelSpec::iid(10).unwrap();
    let src = Source::OnOffDiscrete(OnOffDiscreteParams::new(0.8, 0.8, 1.0).unwrap());
    let d = low_theta_asymptotics(&src, &spec, 1.0).unwrap().low_theta_derivative;
    let r = |theta: f64| max_avg_rate(&src, theta, ce_iid(1.0, theta, 10)).unwrap().r_avg_star;
    let errs: Vec<f64> = [1e-3, 1e-4, 1e-5].iter().map(|&t| ((r(2.0 * t) - r(t)) / t - d).abs()).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2]);
    assert!(errs[2] < 2e-3 * d.abs());
}

#[test]
fn theta_to_zero_converges_monotonically_to_ergodic() {
    let spec = ChannelSpec::iid(10).unwrap();
    let erg = ergodic_capacity(&spec, 1.0).unwrap();
    let p = OnOffDiscreteParams::new(0.8, 0.8, 1.0).unwrap();
    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&t| (max_avg_rate_onoff_discrete(ce_iid(1.0, t, 10), t, p.p11, p.p22).unwrap().r_avg_star - erg).abs())
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2]);
    assert!(errs[2] / erg < 0.01);
}

#[test]
fn high_snr_reference_values() {
    for kind in [SourceFamily::Constant, SourceFamily::Discrete, SourceFamily::Fluid, SourceFamily::Mmpp] {
        assert_eq!(high_snr_slope(kind, 0.0, 0.3).unwrap(), 1.0);
    }
    let v = high_snr_slope(SourceFamily::Discrete, 2.0, 0.5).unwrap();
    assert!((v - 0.5 / (2.0 * std::f64::consts::LOG2_E)).abs() < 1e-15);
    assert!((v - 0.1733).abs() < 1e-4);
}

fn empirical_high_snr_slope(src: &Source, theta: f64, m: usize) -> f64 {
    let r = |snr: f64| max_avg_rate(src, theta, ce_iid(snr, theta, m)).unwrap().r_avg_star / m as f64;
    (r(1e4) - r(1e3)) / (1e4f64.log2() - 1e3f64.log2())
}

#[test]
fn high_snr_slope_matches_numeric_for_all_kinds() {
    let cases = [
        (Source::OnOffDiscrete(OnOffDiscreteParams::new(0.5, 0.5, 1.0).unwrap()), 0.3),
        (Source::OnOffDiscrete(OnOffDiscreteParams::new(0.5, 0.5, 1.0).unwrap()), 2.0),
        (Source::OnOffFluid(OnOffContinuousParams::new(1.0, 1.0, 1.0).unwrap()), 0.3),
        (Source::OnOffFluid(OnOffContinuousParams::new(1.0, 1.0, 1.0).unwrap()), 2.0),
        (Source::OnOffMmpp(OnOffContinuousParams::new(1.0, 1.0, 1.0).unwrap()), 0.3),
        (Source::OnOffMmpp(OnOffContinuousParams::new(1.0, 1.0, 1.0).unwrap()), 2.0),
    ];
    for (src, theta) in cases {
        let numeric = empirical_high_snr_slope(&src, theta, 10);
        let expect = high_snr_slope(src.family(), theta, 0.5).unwrap();
        assert!((numeric - expect).abs() < 0.05 * expect, "{:?} theta {theta}: {numeric} vs {expect}", src.family());
    }
}

#[test]
fn sweep_rows_sorted_and_policy_independent() {
    let src = Source::OnOffFluid(OnOffContinuousParams::new(2.0, 1.0, 1.0).unwrap());
    let spec = ChannelSpec::new(4, 0.5, 1.0).unwrap();
    let a = throughput_sweep(&src, &spec, &[1.0, 0.1], &[10.0, 1.0], CapacityMode::Deterministic, Execution::Parallel);
    let b = throughput_sweep(&src, &spec, &[1.0, 0.1], &[10.0, 1.0], CapacityMode::Deterministic, Execution::Serial);
    assert_eq!(a, b);
    let keys: Vec<(f64, f64)> = a.iter().map(|c| (c.theta, c.snr)).collect();
    assert_eq!(keys, vec![(0.1, 1.0), (0.1, 10.0), (1.0, 1.0), (1.0, 10.0)]);
    assert!(a.iter().all(|c| c.result.is_ok()));
}

#[test]
fn failing_sweep_cells_do_not_stop_the_rest() {
    let src = Source::OnOffFluid(OnOffContinuousParams::new(2.0, 1.0, 1.0).unwrap());
    let spec = ChannelSpec::iid(2).unwrap();
    let cells = throughput_sweep(&src, &spec, &[0.5], &[-1.0, 1.0], CapacityMode::Deterministic, Execution::Serial);
    assert!(cells[0].result.as_ref().unwrap_err().is_validation());
    let row = cells[1].result.as_ref().unwrap();
    assert_eq!(row.ce_method, CapacityMethod::ClosedFormIidRayleigh);
    assert_eq!(row.rate_method, ThroughputMethod::ClosedForm);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_and_ordering(
        theta in 0.01f64..5.0,
        ce in 0.0f64..40.0,
        p11 in 0.0f64..0.99,
        p22 in 0.0f64..1.0,
        alpha in 0.05f64..60.0,
        beta in 0.0f64..60.0,
    ) {
        let d = max_avg_rate_onoff_discrete(ce, theta, p11, p22).unwrap();
        prop_assert!(d.r_avg_star <= ce * (1.0 + 1e-12));
        let back = effective_bandwidth_onoff_discrete(&OnOffDiscreteParams::new(p11, p22, d.lambda_star).unwrap(), theta).unwrap();
        prop_assert!((back - ce).abs() <= 1e-9 * ce.max(1e-300));

        let f = max_avg_rate_onoff_fluid(ce, theta, alpha, beta).unwrap();
        let m = max_avg_rate_onoff_mmpp(ce, theta, alpha, beta).unwrap();
        prop_assert!(f.r_avg_star <= ce * (1.0 + 1e-12));
        if ce > 0.0 {
            prop_assert!(m.r_avg_star < f.r_avg_star);
        }
        let p = OnOffContinuousParams::new(alpha, beta, m.lambda_star).unwrap();
        prop_assert!((effective_bandwidth_onoff_mmpp(&p, theta).unwrap() - ce).abs() <= 1e-9 * ce.max(1e-300));
    }

    #[test]
    fn rate_degrades_with_theta_and_is_concave_in_snr(
        p11 in 0.0f64..0.95,
        p22 in 0.05f64..1.0,
        theta in 0.02f64..3.0,
        snr in 0.05f64..50.0,
    ) {
        let r = |theta: f64, snr: f64| max_avg_rate_onoff_discrete(ce_iid(snr, theta, 5), theta, p11, p22).unwrap().r_avg_star;
        prop_assert!(r(theta * 1.3, snr) <= r(theta, snr) * (1.0 + 1e-12));
        let (lo, mid, hi) = (r(theta, snr), r(theta, 1.5 * snr), r(theta, 2.0 * snr));
        prop_assert!(lo <= mid && mid <= hi);
        prop_assert!(mid >= 0.5 * (lo + hi) - 1e-10 * hi);
    }

    #[test]
    fn burstier_sources_carry_less(s in 0.02f64..0.98, ce in 0.01f64..20.0, theta in 0.01f64..3.0) {
        let a = max_avg_rate_onoff_discrete(ce, theta, 1.0 - s, s).unwrap();
        let b = max_avg_rate_onoff_discrete(ce, theta, 1.0 - (s + 0.02), s + 0.02).unwrap();
        prop_assert!(b.r_avg_star >= a.r_avg_star * (1.0 - 1e-12));
        // The ON rate must grow as the source is ON less often.
        prop_assert!(a.lambda_star >= b.lambda_star * (1.0 - 1e-12));
    }
}

#[test]
fn slopes_bundle_reports_high_snr_value() {
    let spec = ChannelSpec::iid(10).unwrap();
    let src = Source::OnOffMmpp(OnOffContinuousParams::new(1.0, 3.0, 1.0).unwrap());
    let s = asymptotic_slopes(&src, &spec, 1.0, 2.0).unwrap();
    assert!((s.high_snr_slope - 0.25 * LN_2 / 2f64.exp_m1()).abs() < 1e-15);
    assert!(s.low_theta_derivative < 0.0);
}
