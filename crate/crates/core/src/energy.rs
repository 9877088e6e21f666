//! Energy efficiency in the low-SNR regime: minimum received energy per
//! bit and wideband slope, in closed form for constant and ON/OFF sources
//! and numerically for any source.

use crate::channel::{fading_moments, ChannelSpec};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::sources::{
    DiscreteMarkovSource, FluidMarkovSource, MmppSource, OnOffContinuousParams, Source,
};
use crate::throughput::{capacity_at, eta_discrete, linear_to_db, max_avg_rate, zeta_continuous, CapacityMode};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsProvenance {
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyMetrics {
    /// Minimum received `E_b/N_0`, linear.
    pub ebn0_min_linear: f64,
    pub ebn0_min_db: f64,
    /// Wideband slope `S_0` in bits/s/Hz per 3 dB.
    pub wideband_slope: f64,
    pub theta: f64,
    pub provenance: MetricsProvenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbN0CurvePoint {
    pub ebn0_db: f64,
    /// `r*/m` in bits/symbol.
    pub normalized_rate: f64,
    pub snr: f64,
}

fn metrics(ebn0: f64, slope: f64, theta: f64, provenance: MetricsProvenance) -> EnergyMetrics {
    EnergyMetrics {
        ebn0_min_linear: ebn0,
        ebn0_min_db: linear_to_db(ebn0),
        wideband_slope: slope,
        theta,
        provenance,
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta >= 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("theta", format!("{theta} must be finite and >= 0")))
    }
}

/// Closed-form metrics for a source whose burstiness enters the wideband
/// slope through `coef (theta m / ln 2) (E z)^2`.
fn closed_form(spec: &ChannelSpec, theta: f64, coef: f64) -> Result<EnergyMetrics> {
    spec.validate()?;
    check_theta(theta)?;
    let mo = fading_moments(spec);
    let m = spec.m as f64;
    let denom = coef * theta * m / LN_2 * mo.mean_z * mo.mean_z
        + theta / (m * LN_2) * mo.cov_sum
        + mo.mean_z_sq;
    Ok(metrics(
        LN_2 / mo.mean_z,
        2.0 * mo.mean_z * mo.mean_z / denom,
        theta,
        MetricsProvenance::ClosedForm,
    ))
}

pub fn energy_metrics_constant(spec: &ChannelSpec, theta: f64) -> Result<EnergyMetrics> {
    closed_form(spec, theta, 0.0)
}

pub fn energy_metrics_onoff_discrete(spec: &ChannelSpec, theta: f64, p11: f64, p22: f64) -> Result<EnergyMetrics> {
    closed_form(spec, theta, eta_discrete(p11, p22)?)
}

pub fn energy_metrics_onoff_fluid(spec: &ChannelSpec, theta: f64, alpha: f64, beta: f64) -> Result<EnergyMetrics> {
    closed_form(spec, theta, zeta_continuous(alpha, beta)?)
}

/// Fluid metrics with the energy floor raised by `(e^theta - 1)/theta` and
/// the slope lowered by its inverse. `theta = 0` gives the fluid values.
pub fn energy_metrics_onoff_mmpp(spec: &ChannelSpec, theta: f64, alpha: f64, beta: f64) -> Result<EnergyMetrics> {
    let fluid = energy_metrics_onoff_fluid(spec, theta, alpha, beta)?;
    if theta == 0.0 {
        return Ok(fluid);
    }
    let penalty = theta.exp_m1() / theta;
    Ok(metrics(
        fluid.ebn0_min_linear * penalty,
        fluid.wideband_slope / penalty,
        theta,
        MetricsProvenance::ClosedForm,
    ))
}

/// Closed-form metrics where they exist, numeric ones otherwise.
pub fn energy_metrics(src: &Source, spec: &ChannelSpec, theta: f64) -> Result<EnergyMetrics> {
    match src {
        Source::Constant { .. } => energy_metrics_constant(spec, theta),
        Source::OnOffDiscrete(p) => energy_metrics_onoff_discrete(spec, theta, p.p11, p.p22),
        Source::OnOffFluid(p) => energy_metrics_onoff_fluid(spec, theta, p.alpha, p.beta),
        Source::OnOffMmpp(p) => energy_metrics_onoff_mmpp(spec, theta, p.alpha, p.beta),
        other => numeric_energy_metrics(other, spec, theta, CapacityMode::Deterministic),
    }
}

/// Binomial law `C(n-1, k) s^k (1-s)^(n-1-k)`, `k = 0..n`.
fn binomial_pmf(n: usize, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut coef = 1.0;
    for k in 0..n {
        out.push(coef * s.powi(k as i32) * (1.0 - s).powi((n - 1 - k) as i32));
        coef = coef * (n - 1 - k) as f64 / (k + 1) as f64;
    }
    out
}

/// `n - 1` independent memoryless ON/OFF sub-sources, each ON with
/// probability `s` at `lambda` bits/block. State `i` has `i` sources ON.
pub fn build_binomial_discrete_source(n: usize, s: f64, lambda: f64) -> Result<DiscreteMarkovSource> {
    if n < 2 {
        return Err(Error::invalid("n", "need at least 2 states"));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid("s", format!("{s} outside [0, 1]")));
    }
    let pi = binomial_pmf(n, s);
    let rates = (0..n).map(|i| i as f64 * lambda).collect();
    DiscreteMarkovSource::new(vec![pi; n], rates)
}

fn check_birth_death(n: usize, alpha: f64, beta: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid("n", "need at least 2 states"));
    }
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, format!("{v} must be positive and finite")));
        }
    }
    Ok(())
}

/// Tridiagonal generator moving up at rate `alpha` and down at rate `beta`.
pub fn birth_death_generator(n: usize, alpha: f64, beta: f64) -> Vec<Vec<f64>> {
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        if i + 1 < n {
            g[i][i + 1] = alpha;
        }
        if i > 0 {
            g[i][i - 1] = beta;
        }
        g[i][i] = -(g[i].iter().sum::<f64>());
    }
    g
}

/// Stationary law of the birth-death chain: a truncated geometric law with
/// ratio `xi = alpha/beta`, uniform when `alpha = beta`.
pub fn birth_death_stationary(n: usize, alpha: f64, beta: f64) -> Vec<f64> {
    let xi = alpha / beta;
    if xi == 1.0 {
        return vec![1.0 / n as f64; n];
    }
    // Work with a ratio below one so the powers cannot overflow.
    let (r, rising) = if xi < 1.0 { (xi, false) } else { (1.0 / xi, true) };
    let norm = (1.0 - r) / (1.0 - r.powi(n as i32));
    let mut pi: Vec<f64> = (0..n).map(|i| norm * r.powi(i as i32)).collect();
    if rising {
        pi.reverse();
    }
    pi
}

pub fn build_birth_death_fluid(n: usize, alpha: f64, beta: f64, lambda: f64) -> Result<FluidMarkovSource> {
    check_birth_death(n, alpha, beta)?;
    let rates = (0..n).map(|i| i as f64 * lambda).collect();
    FluidMarkovSource::new(birth_death_generator(n, alpha, beta), rates)
}

pub fn build_birth_death_mmpp(n: usize, alpha: f64, beta: f64, lambda: f64) -> Result<MmppSource> {
    check_birth_death(n, alpha, beta)?;
    let rates = (0..n).map(|i| i as f64 * lambda).collect();
    MmppSource::new(birth_death_generator(n, alpha, beta), rates)
}

/// `E_b/N_0` against normalized rate along an SNR sweep. Points where no
/// traffic is supported are dropped.
pub fn ebn0_curve(
    src: &Source,
    spec: &ChannelSpec,
    theta: f64,
    snr_grid: &[f64],
    mode: CapacityMode,
    exec: Execution,
) -> Result<Vec<EbN0CurvePoint>> {
    spec.validate()?;
    if let Some(w) = snr_grid.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("snr_grid", format!("not strictly ascending at {} -> {}", w[0], w[1])));
    }
    if let Some(bad) = snr_grid.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("snr_grid", format!("{bad} must be positive and finite")));
    }
    let points = map_slice(snr_grid, exec, |&snr| {
        let cap = capacity_at(spec, snr, theta, mode).map_err(|e| e.at(format!("snr {snr}")))?;
        let r = max_avg_rate(src, theta, cap.value).map_err(|e| e.at(format!("snr {snr}")))?;
        Ok((snr, r.r_avg_star))
    });
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let (snr, r) = p?;
        out.extend(ebn0_point(snr, spec.m, r));
    }
    Ok(out)
}

/// Curve point for throughput `r` bits/block at linear `snr`; `None` when
/// nothing gets through.
pub fn ebn0_point(snr: f64, m: usize, r: f64) -> Option<EbN0CurvePoint> {
    let m = m as f64;
    (r > 0.0).then(|| EbN0CurvePoint {
        ebn0_db: linear_to_db(snr * m / r),
        normalized_rate: r / m,
        snr,
    })
}

/// Base step of the low-SNR difference scheme.
pub const LOW_SNR_STEP: f64 = 1e-4;

/// Metrics from first and second `snr`-derivatives of `r*` at zero,
/// estimated by Richardson extrapolation of `r*(snr)/snr` at
/// `snr in {h, 2h, 4h}`, checked against the same scheme on
/// `{2h, 4h, 8h}`. Capacity must be deterministic.
pub fn numeric_energy_metrics(src: &Source, spec: &ChannelSpec, theta: f64, mode: CapacityMode) -> Result<EnergyMetrics> {
    spec.validate()?;
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid("theta", format!("{theta} must be positive and finite")));
    }
    if let CapacityMode::MonteCarlo { .. } = mode {
        return Err(Error::Unsupported(
            "numeric energy metrics need a noise-free capacity; Monte Carlo is rejected".into(),
        ));
    }
    let h = LOW_SNR_STEP;
    let ratio = |k: f64| -> Result<f64> {
        let snr = k * h;
        let cap = capacity_at(spec, snr, theta, mode)?;
        Ok(max_avg_rate(src, theta, cap.value)?.r_avg_star / snr)
    };
    let f = [ratio(1.0)?, ratio(2.0)?, ratio(4.0)?, ratio(8.0)?];
    // f(x) = r'(0) + r''(0) x / 2 + c x^2 + ...; eliminating c from three
    // points with step `step` gives second-order estimates.
    let extrapolate = |f1: f64, f2: f64, f4: f64, step: f64| {
        ((8.0 * f1 - 6.0 * f2 + f4) / 3.0, (-4.0 * f1 + 5.0 * f2 - f4) / (2.0 * step))
    };
    let (d1, half_d2) = extrapolate(f[0], f[1], f[2], h);
    let (d1_coarse, half_d2_coarse) = extrapolate(f[1], f[2], f[3], 2.0 * h);
    let disagree = |fine: f64, coarse: f64| (fine - coarse).abs() > 0.01 * fine.abs();
    if disagree(d1, d1_coarse) || disagree(half_d2, half_d2_coarse) {
        return Err(Error::IllConditioned(format!(
            "extrapolation levels differ: r'(0) {d1} vs {d1_coarse}, r''(0)/2 {half_d2} vs {half_d2_coarse}"
        )));
    }
    if !(d1 > 0.0) || !(half_d2 < 0.0) {
        return Err(Error::IllConditioned(format!(
            "expected r'(0) > 0 > r''(0), got {d1} and {}",
            2.0 * half_d2
        )));
    }
    let m = spec.m as f64;
    let d2 = 2.0 * half_d2;
    Ok(metrics(
        m / d1,
        -2.0 * d1 * d1 * LN_2 / (m * d2),
        theta,
        MetricsProvenance::Numeric,
    ))
}

/// The continuous ON/OFF source behind `src`, if any.
pub fn onoff_continuous_params(src: &Source) -> Option<OnOffContinuousParams> {
    match src {
        Source::OnOffFluid(p) | Source::OnOffMmpp(p) => Some(*p),
        _ => None,
    }
}
