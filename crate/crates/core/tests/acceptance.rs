//! Acceptance suite. Runs as a plain binary so that every criterion prints
//! one PASS/FAIL line under `cargo test` without `--nocapture`.
//!
//! Set `EFFCAP_ACCEPT_LONG=1` to add the 10^7-block queue run.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use effcap::channel::{effective_capacity, effective_capacity_mc, effective_capacity_rayleigh_iid, ergodic_capacity, ChannelSpec};
use effcap::energy::*;
use effcap::queuesim::{lindley_trace, simulate_queue_with, SimConfig};
use effcap::sources::*;
use effcap::throughput::{high_snr_slope, low_theta_asymptotics, max_avg_rate, CapacityMode};
use effcap::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, Box<dyn Fn() -> Outcome>);

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn ce_iid(snr: f64, theta: f64, m: usize) -> f64 {
    effective_capacity_rayleigh_iid(snr, theta, m).unwrap().value
}

fn onoff_discrete(p11: f64, p22: f64, lambda: f64) -> Source {
    Source::OnOffDiscrete(OnOffDiscreteParams::new(p11, p22, lambda).unwrap())
}

fn onoff_fluid(alpha: f64, beta: f64, lambda: f64) -> Source {
    Source::OnOffFluid(OnOffContinuousParams::new(alpha, beta, lambda).unwrap())
}

fn onoff_mmpp(alpha: f64, beta: f64, lambda: f64) -> Source {
    Source::OnOffMmpp(OnOffContinuousParams::new(alpha, beta, lambda).unwrap())
}

/// A random ON/OFF source of family `k` (0 discrete, 1 fluid, 2 MMPP).
fn random_onoff(rng: &mut impl Rng, k: usize) -> Source {
    let lambda = log_uniform(rng, 0.1, 10.0);
    match k {
        0 => onoff_discrete(rng.random_range(0.0..0.99), rng.random_range(0.01..1.0), lambda),
        1 => onoff_fluid(log_uniform(rng, 0.05, 20.0), log_uniform(rng, 0.05, 20.0), lambda),
        _ => onoff_mmpp(log_uniform(rng, 0.05, 20.0), log_uniform(rng, 0.05, 20.0), lambda),
    }
}

fn closed_vs_spectral() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for k in 0..3 {
        for _ in 0..1000 {
            let src = random_onoff(&mut rng, k);
            let theta = log_uniform(&mut rng, 1e-3, 10.0);
            let closed = src.effective_bandwidth(theta).map_err(|e| format!("{src:?}: {e}"))?;
            let spectral = src.effective_bandwidth_spectral(theta).map_err(|e| format!("{src:?}: {e}"))?;
            let err = rel(closed, spectral);
            if err > 1e-9 {
                return Err(format!("{src:?} theta {theta}: {closed} vs {spectral}"));
            }
            worst = worst.max(err);
        }
    }
    Ok(format!("3000 draws, worst relative gap {worst:.1e}"))
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..500 {
        let src = random_onoff(&mut rng, i % 3);
        let theta = log_uniform(&mut rng, 1e-3, 5.0);
        let snr = log_uniform(&mut rng, 0.01, 100.0);
        let m = rng.random_range(1..=20);
        let ce = ce_iid(snr, theta, m);
        let r = max_avg_rate(&src, theta, ce).map_err(|e| format!("{src:?}: {e}"))?;
        let back = src.at_lambda(r.lambda_star).effective_bandwidth(theta).map_err(|e| e.to_string())?;
        let err = rel(back, ce);
        if err > 1e-9 {
            return Err(format!("{src:?} theta {theta} snr {snr} m {m}: a*(lambda*) {back} vs C_E {ce}"));
        }
        worst = worst.max(err);
    }
    Ok(format!("500 triples, worst relative gap {worst:.1e}"))
}

fn ergodic_limit() -> Outcome {
    let spec = ChannelSpec::iid(10).unwrap();
    let erg = ergodic_capacity(&spec, 1.0).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for src in [onoff_discrete(0.8, 0.8, 1.0), onoff_fluid(1.0, 2.0, 1.0), onoff_mmpp(1.0, 2.0, 1.0)] {
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&t| rel(max_avg_rate(&src, t, ce_iid(1.0, t, 10)).unwrap().r_avg_star, erg))
            .collect();
        if !(errs[0] > errs[1] && errs[1] > errs[2]) {
            return Err(format!("{:?}: errors not decreasing {errs:?}", src.family()));
        }
        if errs[2] > 0.01 {
            return Err(format!("{:?}: {:.3}% off at theta 1e-4", src.family(), 100.0 * errs[2]));
        }
        detail.push(format!("{:?} {:.2e}", src.family(), errs[2]));
    }
    Ok(format!("errors at 1e-4: {}", detail.join(", ")))
}

fn p_on(src: &Source) -> f64 {
    match src {
        Source::Constant { .. } => 1.0,
        other => other.rates_and_stationary().1[1],
    }
}

fn low_theta_derivative() -> Outcome {
    let spec = ChannelSpec::iid(10).unwrap();
    let snr = 1.0;
    let mut fds = Vec::new();
    for src in [onoff_discrete(0.5, 0.5, 1.0), onoff_fluid(1.0, 1.0, 1.0), onoff_mmpp(1.0, 1.0, 1.0)] {
        let r = |theta: f64| max_avg_rate(&src, theta, ce_iid(snr, theta, 10)).unwrap().r_avg_star;
        let (t, h) = (1.5e-3, 5e-4);
        let fd = (r(t + h) - r(t - h)) / (2.0 * h);
        let d = low_theta_asymptotics(&src, &spec, snr).map_err(|e| e.to_string())?.low_theta_derivative;
        if rel(fd, d) > 0.05 {
            return Err(format!("{:?}: difference quotient {fd} vs {d}", src.family()));
        }
        fds.push(fd);
    }
    let erg = ergodic_capacity(&spec, snr).unwrap();
    let gap = fds[2] - fds[1];
    let expect = -0.5 * erg;
    if rel(gap, expect) > 0.05 {
        return Err(format!("MMPP minus fluid {gap} vs {expect}"));
    }
    Ok(format!("derivatives {:.4} {:.4} {:.4}; MMPP-fluid gap {gap:.4}", fds[0], fds[1], fds[2]))
}

fn high_snr() -> Outcome {
    let m = 10;
    let mut worst = 0.0f64;
    let sources = [Source::Constant { rate: 1.0 }, onoff_discrete(0.5, 0.5, 1.0), onoff_fluid(1.0, 1.0, 1.0), onoff_mmpp(1.0, 1.0, 1.0)];
    for src in &sources {
        for theta in [0.0, 0.3, 2.0] {
            let r = |snr: f64| {
                let spec = ChannelSpec::iid(m).unwrap();
                let ce = if theta == 0.0 { ergodic_capacity(&spec, snr).unwrap() } else { ce_iid(snr, theta, m) };
                if theta == 0.0 {
                    ce / m as f64
                } else {
                    max_avg_rate(src, theta, ce).unwrap().r_avg_star / m as f64
                }
            };
            let numeric = (r(1e4) - r(1e3)) / (1e4f64.log2() - 1e3f64.log2());
            let expect = high_snr_slope(src.family(), theta, p_on(src)).map_err(|e| e.to_string())?;
            let err = rel(numeric, expect);
            if err > 0.05 {
                return Err(format!("{:?} theta {theta}: {numeric} vs {expect}", src.family()));
            }
            worst = worst.max(err);
        }
    }
    Ok(format!("12 cases, worst relative gap {:.2}%", 100.0 * worst))
}

const FLOOR_DB: f64 = -1.591_745_389_548_615_7;

fn energy_floors() -> Outcome {
    for theta in [0.1, 1.0] {
        for rho in [0.0, 0.75, 1.0] {
            let s = ChannelSpec::new(10, rho, 1.0).unwrap();
            let floors = [
                energy_metrics_constant(&s, theta),
                energy_metrics_onoff_discrete(&s, theta, 0.3, 0.6),
                energy_metrics_onoff_discrete(&s, theta, 0.9, 0.9),
                energy_metrics_onoff_fluid(&s, theta, 0.5, 3.0),
                energy_metrics_onoff_fluid(&s, theta, 4.0, 1.0),
            ];
            for f in floors {
                let db = f.map_err(|e| e.to_string())?.ebn0_min_db;
                if (db + 1.59).abs() > 0.01 {
                    return Err(format!("theta {theta} rho {rho}: floor {db} dB"));
                }
            }
        }
    }
    let s = ChannelSpec::iid(10).unwrap();
    let mmpp = energy_metrics_onoff_mmpp(&s, 1.0, 1.0, 1.0).map_err(|e| e.to_string())?.ebn0_min_db;
    if (mmpp - 0.76).abs() > 0.02 {
        return Err(format!("MMPP floor {mmpp} dB"));
    }
    let nstate = [
        (Source::Discrete(build_binomial_discrete_source(10, 0.5, 1.0).unwrap()), FLOOR_DB),
        (Source::Fluid(build_birth_death_fluid(10, 50.0, 50.0, 1.0).unwrap()), FLOOR_DB),
        (Source::Mmpp(build_birth_death_mmpp(10, 1.0, 1.0, 1.0).unwrap()), mmpp),
    ];
    let mut gaps = Vec::new();
    for (src, floor) in nstate {
        let n = numeric_energy_metrics(&src, &s, 1.0, CapacityMode::Deterministic).map_err(|e| e.to_string())?;
        let gap = (n.ebn0_min_db - floor).abs();
        if gap > 0.05 {
            return Err(format!("{:?} n = 10: {} dB vs {floor}", src.family(), n.ebn0_min_db));
        }
        gaps.push(format!("{gap:.4}"));
    }
    Ok(format!("MMPP floor {mmpp:.4} dB; n-state gaps {} dB", gaps.join(" ")))
}

fn wideband_slope() -> Outcome {
    let mut worst = 0.0f64;
    for theta in [0.1, 1.0, 3.0] {
        for rho in [0.0, 0.5, 0.9] {
            let s = ChannelSpec::new(10, rho, 1.0).unwrap();
            let cases = [
                (Source::Constant { rate: 1.0 }, energy_metrics_constant(&s, theta)),
                (onoff_discrete(0.5, 0.5, 1.0), energy_metrics_onoff_discrete(&s, theta, 0.5, 0.5)),
                (onoff_fluid(2.0, 3.0, 1.0), energy_metrics_onoff_fluid(&s, theta, 2.0, 3.0)),
                (onoff_mmpp(2.0, 3.0, 1.0), energy_metrics_onoff_mmpp(&s, theta, 2.0, 3.0)),
            ];
            for (src, closed) in cases {
                let closed = closed.map_err(|e| e.to_string())?;
                let n = numeric_energy_metrics(&src, &s, theta, CapacityMode::Deterministic).map_err(|e| e.to_string())?;
                let err = rel(n.wideband_slope, closed.wideband_slope).max(rel(n.ebn0_min_linear, closed.ebn0_min_linear));
                if err > 5e-3 {
                    return Err(format!("{:?} theta {theta} rho {rho}: {} vs {}", src.family(), n.wideband_slope, closed.wideband_slope));
                }
                worst = worst.max(err);
            }
        }
    }
    let s = |rho: f64| ChannelSpec::new(10, rho, 1.0).unwrap();
    let nonincreasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14));
    let by_theta: Vec<f64> = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0]
        .iter()
        .map(|&t| energy_metrics_onoff_fluid(&s(0.5), t, 2.0, 2.0).unwrap().wideband_slope)
        .collect();
    let by_rho: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 0.9, 1.0]
        .iter()
        .map(|&r| energy_metrics_constant(&s(r), 1.0).unwrap().wideband_slope)
        .collect();
    let mut eta_pairs: Vec<(f64, f64)> = [(0.5, 1.0), (0.5, 0.8), (0.5, 0.5), (0.5, 0.2), (0.9, 0.9), (0.1, 0.3), (0.7, 0.05)]
        .iter()
        .map(|&(p11, p22)| {
            let eta = effcap::throughput::eta_discrete(p11, p22).unwrap();
            (eta, energy_metrics_onoff_discrete(&s(0.5), 1.0, p11, p22).unwrap().wideband_slope)
        })
        .collect();
    eta_pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let by_eta: Vec<f64> = eta_pairs.iter().map(|p| p.1).collect();
    let by_zeta: Vec<f64> = [0.0, 0.5, 1.0, 4.0]
        .iter()
        .map(|&b| energy_metrics_onoff_fluid(&s(0.5), 1.0, 1.0, b).unwrap().wideband_slope)
        .collect();
    for (name, v) in [("theta", &by_theta), ("rho", &by_rho), ("eta", &by_eta), ("zeta", &by_zeta)] {
        if !nonincreasing(v) {
            return Err(format!("slope not nonincreasing in {name}: {v:?}"));
        }
    }
    Ok(format!("36 closed/numeric pairs, worst gap {:.3}%; orderings hold", 100.0 * worst))
}

fn queue_tails(n_blocks: usize, tol: f64) -> Outcome {
    let spec = ChannelSpec::iid(10).unwrap();
    let mut detail = Vec::new();
    for theta in [0.1, 0.2] {
        let ce = effective_capacity(&spec, 1.0, theta).map_err(|e| e.to_string())?.value;
        let tmpl = onoff_discrete(0.8, 0.8, 1.0);
        let lam = max_avg_rate(&tmpl, theta, ce).map_err(|e| e.to_string())?.lambda_star;
        let cfg = SimConfig::new(tmpl.at_lambda(lam), spec, 1.0, n_blocks, 1);
        let rep = simulate_queue_with(&cfg, Execution::Serial).map_err(|e| e.to_string())?;
        let q = rep.theta_sim.ok_or("no backlog fit")?;
        let d = rep.delay_slope_sim.ok_or("no delay fit")?;
        let (eq, ed) = ((q / theta - 1.0).abs(), (d / (theta * ce) - 1.0).abs());
        if eq > tol || ed > tol {
            return Err(format!("theta {theta}: theta_sim {q:.4} ({:.1}%), delay slope {d:.4} vs {:.4} ({:.1}%)", 100.0 * eq, theta * ce, 100.0 * ed));
        }
        detail.push(format!("theta {theta}: backlog {:.1}%, delay {:.1}%", 100.0 * eq, 100.0 * ed));
    }
    Ok(format!("{n_blocks} blocks; {}", detail.join("; ")))
}

fn random_chain(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let row: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = row.iter().sum();
            row.iter().map(|x| x / s).collect()
        })
        .collect()
}

fn properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let thetas: Vec<f64> = (0..20).map(|k| 0.05 * 1.4f64.powi(k)).collect();
    for i in 0..200 {
        let n = rng.random_range(2..6);
        let rates: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let p = random_chain(&mut rng, n);
        let src = match i % 4 {
            0 => Source::Discrete(DiscreteMarkovSource::new(p.clone(), rates.clone()).unwrap()),
            3 => {
                let k = rng.random_range(0..3);
                random_onoff(&mut rng, k)
            }
            k => {
                let g: Vec<Vec<f64>> = (0..n)
                    .map(|a| {
                        let mut row: Vec<f64> = (0..n).map(|b| if a == b { 0.0 } else { 3.0 * p[a][b] }).collect();
                        row[a] = -row.iter().sum::<f64>();
                        row
                    })
                    .collect();
                if k == 1 {
                    Source::Fluid(FluidMarkovSource::new(g, rates.clone()).unwrap())
                } else {
                    Source::Mmpp(MmppSource::new(g, rates.clone()).unwrap())
                }
            }
        };
        let mean = average_rate(&src);
        let peak = src.peak_rate();
        let a: Vec<f64> = thetas.iter().map(|&t| src.effective_bandwidth(t).unwrap()).collect();
        let poisson = matches!(src, Source::Mmpp(_) | Source::OnOffMmpp(_));
        for (&t, &v) in thetas.iter().zip(&a) {
            // Poisson arrivals can exceed the peak intensity by the factor (e^t - 1)/t.
            let cap = if poisson { peak * t.exp_m1() / t } else { peak };
            if v < mean * (1.0 - 1e-9) || v > cap * (1.0 + 1e-9) {
                return Err(format!("{src:?}: a*({t}) = {v} outside [{mean}, {cap}]"));
            }
        }
        if a.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-9)) {
            return Err(format!("{src:?}: a* decreasing in theta"));
        }
        let log_mgf: Vec<f64> = thetas.iter().zip(&a).map(|(t, v)| t * v).collect();
        for k in 1..19 {
            let (t0, t1, t2) = (thetas[k - 1], thetas[k], thetas[k + 1]);
            let w = (t2 - t1) / (t2 - t0);
            let chord = w * log_mgf[k - 1] + (1.0 - w) * log_mgf[k + 1];
            if log_mgf[k] > chord + 1e-9 * chord.abs().max(1.0) {
                return Err(format!("{src:?}: theta a* not convex near {t1}"));
            }
        }
        let lambdas: Vec<f64> = (1..=20).map(|k| 0.25 * k as f64).collect();
        let by_lambda: Vec<f64> = lambdas.iter().map(|&l| src.with_scale(l).effective_bandwidth(1.0).unwrap()).collect();
        if by_lambda.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-9)) {
            return Err(format!("{src:?}: a* decreasing in lambda"));
        }
        if by_lambda.windows(3).any(|w| w[1] > 0.5 * (w[0] + w[2]) + 1e-9 * w[1].abs().max(1.0)) {
            return Err(format!("{src:?}: a* not convex in lambda"));
        }
    }

    let snrs: Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
    for (m, rho) in [(1, 0.0), (4, 0.5), (10, 0.0), (10, 0.9)] {
        let spec = ChannelSpec::new(m, rho, 1.0).unwrap();
        for theta in [0.1, 1.0, 4.0] {
            let ce: Vec<f64> = snrs.iter().map(|&s| effective_capacity(&spec, s, theta).unwrap().value).collect();
            let src = onoff_mmpp(1.0, 2.0, 1.0);
            let r: Vec<f64> = ce.iter().map(|&c| max_avg_rate(&src, theta, c).unwrap().r_avg_star).collect();
            for (name, v) in [("C_E", &ce), ("r*", &r)] {
                if let Some(w) = v.windows(3).find(|w| w[1] < 0.5 * (w[0] + w[2]) - 1e-9 * w[1]) {
                    return Err(format!("{name} not concave in snr (m {m} rho {rho} theta {theta}): {w:?}"));
                }
            }
        }
    }

    for _ in 0..100 {
        let n = rng.random_range(2..8);
        let p = random_chain(&mut rng, n);
        let fast = stationary_distribution_discrete(&p).map_err(|e| e.to_string())?;
        let slow = common::stationary_by_iteration(&p, 5000);
        if fast.iter().zip(&slow).any(|(a, b)| (a - b).abs() > 1e-10) {
            return Err(format!("stationary law mismatch: {fast:?} vs {slow:?}"));
        }
    }

    let trace = lindley_trace(&[3.0, 0.0, 5.0, 1.0, 2.0], &[1.0, 2.0, 1.0, 4.0, 1.0], 0.0);
    if trace != [2.0, 0.0, 4.0, 1.0, 2.0] {
        return Err(format!("Lindley trace {trace:?}"));
    }

    let spec = ChannelSpec::new(4, 0.5, 1.0).unwrap();
    let cfg = SimConfig::new(onoff_mmpp(1.0, 1.0, 2.0), spec, 1.0, 200_000, 7);
    let runs: Vec<String> = [Execution::Serial, Execution::Parallel, Execution::Serial]
        .iter()
        .map(|&e| serde_json::to_string(&simulate_queue_with(&cfg, e).unwrap()).unwrap())
        .collect();
    if runs[0] != runs[1] || runs[0] != runs[2] {
        return Err("simulation reruns differ".into());
    }
    let mc: Vec<u64> = [Execution::Serial, Execution::Parallel]
        .iter()
        .map(|&e| effective_capacity_mc(&spec, 1.0, 1.0, 100_000, 3, e).unwrap().value.to_bits())
        .collect();
    if mc[0] != mc[1] {
        return Err("Monte Carlo reruns differ".into());
    }
    Ok("bracketing, monotonicity, convexity, concavity, stationary laws, Lindley trace, reruns".into())
}

fn main() -> ExitCode {
    let long = std::env::var_os("EFFCAP_ACCEPT_LONG").is_some();
    let mut criteria: Vec<Criterion> = vec![
        ("1", 5, Box::new(closed_vs_spectral)),
        ("2", 5, Box::new(round_trip)),
        ("3", 10, Box::new(ergodic_limit)),
        ("4", 30, Box::new(low_theta_derivative)),
        ("5", 10, Box::new(high_snr)),
        ("6", 60, Box::new(energy_floors)),
        ("7", 60, Box::new(wideband_slope)),
        ("8", 120, Box::new(|| queue_tails(1_000_000, 0.15))),
        ("9", 60, Box::new(properties)),
    ];
    if long {
        criteria.push(("8 (10^7 blocks)", 1200, Box::new(|| queue_tails(10_000_000, 0.10))));
    }
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > Duration::from_secs(budget) => Err(format!("{d}; over the {budget} s budget")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS {detail} ({:.2} s)", took.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL {detail} ({:.2} s)", took.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
