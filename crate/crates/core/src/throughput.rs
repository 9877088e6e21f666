//! Maximum average arrival rate a fading link supports under a QoS exponent.
//!
//! The rate solves `a*(theta) = C_E(snr, theta)`. ON/OFF sources have closed
//! forms; any other source is solved by bisection over a common scale of
//! its per-state rates.

use crate::channel::{
    effective_capacity, effective_capacity_mc, ergodic_capacity, log_rate_covariance_sum,
    CapacityMethod, ChannelSpec, EffCapEstimate,
};
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::sources::{average_rate, OnOffContinuousParams, OnOffDiscreteParams, Source, SourceFamily};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThroughputMethod {
    ClosedForm,
    RootFind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputResult {
    /// Maximum average arrival rate, bits/block.
    pub r_avg_star: f64,
    /// Rate scale achieving it: the ON rate for ON/OFF sources, otherwise
    /// the multiplier applied to the source's per-state rates.
    pub lambda_star: f64,
    pub theta: f64,
    /// The effective capacity the source was matched to, bits/block.
    pub effective_capacity: f64,
    pub method: ThroughputMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSlopes {
    /// `lim_{theta -> 0} r*`, the ergodic capacity in bits/block.
    pub low_theta_limit: f64,
    /// `d r* / d theta` at `theta = 0`.
    pub low_theta_derivative: f64,
    /// High-SNR slope of `r*/m` against `log2 snr` at the requested theta.
    pub high_snr_slope: f64,
}

fn check_inputs(ce: f64, theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid("theta", format!("{theta} must be positive and finite")));
    }
    if !(ce >= 0.0 && ce.is_finite()) {
        return Err(Error::invalid("ce", format!("{ce} must be finite and >= 0")));
    }
    Ok(())
}

/// `ln[(e^{2x} - p11 e^x) / (1 - p11 - p22 + p22 e^x)]`, evaluated without
/// cancellation for small `x` and without overflow for large `x`.
fn onoff_discrete_log_ratio(x: f64, p11: f64, p22: f64) -> f64 {
    if x <= 1.0 {
        let e1 = x.exp_m1();
        let num = (2.0 - p11 - p22) * e1 + e1 * e1;
        let den = (1.0 - p11) + p22 * e1;
        (num / den).ln_1p()
    } else {
        let t = (-x).exp();
        let q = 1.0 - p11 - p22;
        let log_den = if p22 > 0.0 {
            (p22 + q * t).ln()
        } else {
            q.ln() - x
        };
        x + (-p11 * t).ln_1p() - log_den
    }
}

pub fn max_avg_rate_onoff_discrete(ce: f64, theta: f64, p11: f64, p22: f64) -> Result<ThroughputResult> {
    check_inputs(ce, theta)?;
    let params = OnOffDiscreteParams::new(p11, p22, 0.0)?;
    if p11 == 1.0 {
        return Err(Error::InvalidRegime(
            "p11 = 1: the source never leaves OFF, so no ON rate is determined".into(),
        ));
    }
    let p_on = params.p_on();
    let log_ratio = onoff_discrete_log_ratio(theta * ce, p11, p22);
    if !(log_ratio >= 0.0) || !log_ratio.is_finite() {
        return Err(Error::InvalidRegime(format!(
            "log argument evaluated to exp({log_ratio}) for theta * ce = {}",
            theta * ce
        )));
    }
    let lambda_star = log_ratio / theta;
    Ok(ThroughputResult {
        r_avg_star: p_on * lambda_star,
        lambda_star,
        theta,
        effective_capacity: ce,
        method: ThroughputMethod::ClosedForm,
    })
}

fn onoff_continuous_lambda(ce: f64, theta: f64, alpha: f64, beta: f64) -> f64 {
    let k = theta * ce;
    (k + alpha + beta) / (k + alpha) * ce
}

pub fn max_avg_rate_onoff_fluid(ce: f64, theta: f64, alpha: f64, beta: f64) -> Result<ThroughputResult> {
    check_inputs(ce, theta)?;
    let params = OnOffContinuousParams::new(alpha, beta, 0.0)?;
    let lambda_star = onoff_continuous_lambda(ce, theta, alpha, beta);
    Ok(ThroughputResult {
        r_avg_star: params.p_on() * lambda_star,
        lambda_star,
        theta,
        effective_capacity: ce,
        method: ThroughputMethod::ClosedForm,
    })
}

/// The fluid result scaled by `theta / (e^theta - 1)`.
pub fn max_avg_rate_onoff_mmpp(ce: f64, theta: f64, alpha: f64, beta: f64) -> Result<ThroughputResult> {
    check_inputs(ce, theta)?;
    let params = OnOffContinuousParams::new(alpha, beta, 0.0)?;
    let lambda_star = onoff_continuous_lambda(ce, theta, alpha, beta) * theta / theta.exp_m1();
    Ok(ThroughputResult {
        r_avg_star: params.p_on() * lambda_star,
        lambda_star,
        theta,
        effective_capacity: ce,
        method: ThroughputMethod::ClosedForm,
    })
}

const BRACKET_CAP: f64 = 1152921504606846976.0; // 2^60
const BISECTION_STEPS: usize = 200;

/// Root-finds the rate scale `lambda` with `a*(theta; lambda c) = ce`, where
/// `c` are the source's current per-state rates.
pub fn max_avg_rate_nstate(src: &Source, theta: f64, ce: f64) -> Result<ThroughputResult> {
    check_inputs(ce, theta)?;
    let result = |lambda: f64| ThroughputResult {
        r_avg_star: average_rate(&src.with_scale(lambda)),
        lambda_star: lambda,
        theta,
        effective_capacity: ce,
        method: ThroughputMethod::RootFind,
    };
    if ce == 0.0 {
        return Ok(result(0.0));
    }
    let eb = |lambda: f64| src.with_scale(lambda).effective_bandwidth(theta);
    let start = ce;
    let mut hi = start;
    while eb(hi)? < ce {
        hi *= 2.0;
        if hi > BRACKET_CAP * start {
            return Err(Error::BracketFailure(format!(
                "effective bandwidth stays below {ce} up to rate scale {hi:e}"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eb(mid)? < ce {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let residual = (eb(lambda)? - ce).abs();
    if residual > 1e-9 * ce.max(1.0) {
        return Err(Error::NonConvergence {
            what: "rate-scale bisection",
            iterations: BISECTION_STEPS,
        });
    }
    Ok(result(lambda))
}

/// Maximum average arrival rate for any source, closed form where one exists.
pub fn max_avg_rate(src: &Source, theta: f64, ce: f64) -> Result<ThroughputResult> {
    match src {
        Source::Constant { .. } => {
            check_inputs(ce, theta)?;
            Ok(ThroughputResult {
                r_avg_star: ce,
                lambda_star: ce,
                theta,
                effective_capacity: ce,
                method: ThroughputMethod::ClosedForm,
            })
        }
        Source::OnOffDiscrete(p) => max_avg_rate_onoff_discrete(ce, theta, p.p11, p.p22),
        Source::OnOffFluid(p) => max_avg_rate_onoff_fluid(ce, theta, p.alpha, p.beta),
        Source::OnOffMmpp(p) => max_avg_rate_onoff_mmpp(ce, theta, p.alpha, p.beta),
        other => max_avg_rate_nstate(other, theta, ce),
    }
}

/// Burstiness penalty coefficient `eta` of a discrete ON/OFF source.
pub fn eta_discrete(p11: f64, p22: f64) -> Result<f64> {
    OnOffDiscreteParams::new(p11, p22, 0.0)?;
    if p11 == 1.0 {
        return Err(Error::InvalidRegime("eta is undefined for p11 = 1".into()));
    }
    Ok((1.0 - p22) * (p11 + p22) / ((1.0 - p11) * (2.0 - p11 - p22)))
}

/// Burstiness penalty coefficient `zeta` of a continuous ON/OFF source.
pub fn zeta_continuous(alpha: f64, beta: f64) -> Result<f64> {
    OnOffContinuousParams::new(alpha, beta, 0.0)?;
    Ok(2.0 * beta / (alpha * (alpha + beta)))
}

/// Source-dependent coefficient of `(E nu)^2` in the low-theta derivative,
/// and whether the Poisson term applies.
fn low_theta_coefficients(src: &Source) -> Result<(f64, bool)> {
    match src {
        Source::Constant { .. } => Ok((0.0, false)),
        Source::OnOffDiscrete(p) => Ok((eta_discrete(p.p11, p.p22)?, false)),
        Source::OnOffFluid(p) => Ok((zeta_continuous(p.alpha, p.beta)?, false)),
        Source::OnOffMmpp(p) => Ok((zeta_continuous(p.alpha, p.beta)?, true)),
        _ => Err(Error::Unsupported(
            "low-theta asymptotics have closed forms only for constant and ON/OFF sources".into(),
        )),
    }
}

/// Ergodic limit and `theta`-derivative of `r*` at `theta = 0`.
///
/// `high_snr_slope` is reported at `theta = 0`, where it is 1.
pub fn low_theta_asymptotics(src: &Source, spec: &ChannelSpec, snr: f64) -> Result<AsymptoticSlopes> {
    let (coef, poisson) = low_theta_coefficients(src)?;
    let erg = ergodic_capacity(spec, snr)?;
    let cov = log_rate_covariance_sum(spec, snr)?;
    let mut derivative = -0.5 * cov - 0.5 * coef * erg * erg;
    if poisson {
        derivative -= 0.5 * erg;
    }
    Ok(AsymptoticSlopes {
        low_theta_limit: erg,
        low_theta_derivative: derivative,
        high_snr_slope: 1.0,
    })
}

/// Low-theta asymptotics together with the high-SNR slope at `theta`.
pub fn asymptotic_slopes(src: &Source, spec: &ChannelSpec, snr: f64, theta: f64) -> Result<AsymptoticSlopes> {
    let mut out = low_theta_asymptotics(src, spec, snr)?;
    let (_, pi) = src.rates_and_stationary();
    let p_on = match src {
        Source::Constant { .. } => 1.0,
        _ => pi[1],
    };
    out.high_snr_slope = high_snr_slope(src.family(), theta, p_on)?;
    Ok(out)
}

/// High-SNR slope of `r*/m` versus `log2 snr` under i.i.d. Rayleigh fading.
///
/// At the regime boundary `theta = ln 2` the two branches meet and the
/// common value is returned.
pub fn high_snr_slope(kind: SourceFamily, theta: f64, p_on: f64) -> Result<f64> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::invalid("theta", format!("{theta} must be finite and >= 0")));
    }
    if !(p_on > 0.0 && p_on <= 1.0) {
        return Err(Error::invalid("p_on", format!("{p_on} must lie in (0, 1]")));
    }
    if theta == 0.0 {
        return Ok(1.0);
    }
    let channel = if theta > LN_2 { LN_2 / theta } else { 1.0 };
    let slope = match kind {
        SourceFamily::Constant => channel,
        SourceFamily::Discrete | SourceFamily::Fluid => p_on * channel,
        SourceFamily::Mmpp => p_on * channel * theta / theta.exp_m1(),
    };
    Ok(slope)
}

/// How effective capacity is obtained along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CapacityMode {
    /// Closed form for i.i.d. blocks, quadrature otherwise.
    Deterministic,
    /// Seeded Monte Carlo; every grid point reuses the same streams.
    MonteCarlo { n_samples: usize, seed: u64 },
}

pub fn capacity_at(spec: &ChannelSpec, snr: f64, theta: f64, mode: CapacityMode) -> Result<EffCapEstimate> {
    match mode {
        CapacityMode::Deterministic => effective_capacity(spec, snr, theta),
        CapacityMode::MonteCarlo { n_samples, seed } => {
            effective_capacity_mc(spec, snr, theta, n_samples, seed, Execution::Serial)
        }
    }
}

/// One successful sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    /// Linear SNR.
    pub snr: f64,
    pub ce: f64,
    pub ce_std_error: f64,
    pub ce_method: CapacityMethod,
    pub r_avg_star: f64,
    pub lambda_star: f64,
    pub rate_method: ThroughputMethod,
}

/// A sweep cell that may have failed on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub theta: f64,
    pub snr: f64,
    pub result: Result<SweepRow>,
}

/// Effective capacity and maximum average rate at one `(theta, snr)`.
pub fn throughput_point(src: &Source, spec: &ChannelSpec, theta: f64, snr: f64, mode: CapacityMode) -> Result<SweepRow> {
    let cap = capacity_at(spec, snr, theta, mode)?;
    let r = max_avg_rate(src, theta, cap.value)?;
    Ok(SweepRow {
        theta,
        snr,
        ce: cap.value,
        ce_std_error: cap.std_error,
        ce_method: cap.method,
        r_avg_star: r.r_avg_star,
        lambda_star: r.lambda_star,
        rate_method: r.method,
    })
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Evaluates `r*` on the full `theta x snr` grid (linear SNR), cells sorted
/// by `(theta, snr)`. A failing cell does not stop the others.
pub fn throughput_sweep(
    src: &Source,
    spec: &ChannelSpec,
    thetas: &[f64],
    snrs: &[f64],
    mode: CapacityMode,
    exec: Execution,
) -> Vec<SweepCell> {
    let mut thetas = thetas.to_vec();
    let mut snrs = snrs.to_vec();
    thetas.sort_by(f64::total_cmp);
    snrs.sort_by(f64::total_cmp);
    map_range(thetas.len() * snrs.len(), exec, |k| {
        let theta = thetas[k / snrs.len()];
        let snr = snrs[k % snrs.len()];
        SweepCell {
            theta,
            snr,
            result: throughput_point(src, spec, theta, snr, mode),
        }
    })
}
