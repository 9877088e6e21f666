//! Block-fading channel: Gauss-Markov fading within a block, per-block
//! service rates and effective capacity.
//!
//! Three evaluators of `C_E = -(1/theta) ln E{exp(-theta nu)}` are provided:
//!
//! * a closed form for i.i.d. Rayleigh fading, evaluated as a one-dimensional
//!   integral against the exponential density;
//! * a deterministic quadrature for any correlation, which propagates the
//!   block expectation through the Markov transition kernel of the fading
//!   amplitude (a Nystrom discretisation);
//! * seeded Monte Carlo.

use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::quad::{expect_exponential, gauss_legendre, QuadOptions};
use crate::rng::{stream_rng, CHUNK_BLOCKS};
use crate::special::bessel_i0e;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingDistribution {
    /// Circularly-symmetric complex Gaussian coefficients following a
    /// first-order autoregression inside each block.
    #[default]
    GaussMarkovRayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Symbols per block.
    pub m: usize,
    /// Correlation of consecutive fading coefficients within a block.
    pub rho: f64,
    /// Common fading variance `E{|h|^2}`.
    pub sigma_h_sq: f64,
    #[serde(default)]
    pub distribution: FadingDistribution,
}

impl ChannelSpec {
    pub fn new(m: usize, rho: f64, sigma_h_sq: f64) -> Result<Self> {
        let spec = Self {
            m,
            rho,
            sigma_h_sq,
            distribution: FadingDistribution::GaussMarkovRayleigh,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit-variance i.i.d. Rayleigh fading with `m` symbols per block.
    pub fn iid(m: usize) -> Result<Self> {
        Self::new(m, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("rho", format!("{} is outside [0, 1]", self.rho)));
        }
        if !(self.sigma_h_sq > 0.0 && self.sigma_h_sq.is_finite()) {
            return Err(Error::invalid(
                "sigma_h_sq",
                format!("{} must be positive and finite", self.sigma_h_sq),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FadingBlock {
    /// Channel power gains `z_i = |h_i|^2`.
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityMethod {
    ClosedFormIidRayleigh,
    MonteCarlo,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffCapEstimate {
    /// Effective capacity in bits/block.
    pub value: f64,
    /// Standard error in bits/block; zero for deterministic methods.
    pub std_error: f64,
    pub method: CapacityMethod,
    /// Blocks drawn (Monte Carlo) or quadrature nodes used.
    pub n_samples: usize,
    pub theta: f64,
    pub snr: f64,
}

fn check_snr(snr: f64) -> Result<()> {
    if snr > 0.0 && snr.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("snr", format!("{snr} must be positive and finite")))
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("theta", format!("{theta} must be positive and finite")))
    }
}

/// Fills `gains` with one block of power gains.
pub fn fill_fading_gains<R: Rng + ?Sized>(spec: &ChannelSpec, rng: &mut R, gains: &mut [f64]) {
    let half_var = 0.5 * spec.sigma_h_sq;
    let sd = half_var.sqrt();
    let innov_sd = ((1.0 - spec.rho * spec.rho) * half_var).sqrt();
    let mut re = 0.0;
    let mut im = 0.0;
    for (i, z) in gains.iter_mut().enumerate() {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        if i == 0 {
            re = sd * a;
            im = sd * b;
        } else {
            re = spec.rho * re + innov_sd * a;
            im = spec.rho * im + innov_sd * b;
        }
        *z = re * re + im * im;
    }
}

/// Draws one fading block of `spec.m` power gains.
pub fn sample_fading_block<R: Rng + ?Sized>(spec: &ChannelSpec, rng: &mut R) -> FadingBlock {
    let mut gains = vec![0.0; spec.m];
    fill_fading_gains(spec, rng, &mut gains);
    FadingBlock { gains }
}

/// `sum_i log2(1 + snr z_i)` in bits/block.
pub fn service_rate_of(gains: &[f64], snr: f64) -> f64 {
    gains.iter().map(|z| (snr * z).ln_1p()).sum::<f64>() / LN_2
}

pub fn service_rate(block: &FadingBlock, snr: f64) -> f64 {
    service_rate_of(&block.gains, snr)
}

/// Running log-sum-exp of `x` and `2x` over a fixed sequence of terms.
#[derive(Debug, Clone, Copy)]
struct LogMoments {
    shift: f64,
    s1: f64,
    s2: f64,
}

impl LogMoments {
    fn from_terms(xs: &[f64]) -> Self {
        let shift = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for &x in xs {
            let e = (x - shift).exp();
            s1 += e;
            s2 += e * e;
        }
        Self { shift, s1, s2 }
    }

    fn merge(self, other: Self) -> Self {
        let shift = self.shift.max(other.shift);
        let a = (self.shift - shift).exp();
        let b = (other.shift - shift).exp();
        Self {
            shift,
            s1: self.s1 * a + other.s1 * b,
            s2: self.s2 * a * a + other.s2 * b * b,
        }
    }
}

/// Monte Carlo effective capacity from `n_samples` independent blocks.
///
/// Block `k` is drawn from stream `k / CHUNK_BLOCKS` of `seed`, so the
/// estimate is bit-identical for any execution policy.
pub fn effective_capacity_mc(
    spec: &ChannelSpec,
    snr: f64,
    theta: f64,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<EffCapEstimate> {
    spec.validate()?;
    check_snr(snr)?;
    check_theta(theta)?;
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be at least 1"));
    }
    let n_chunks = n_samples.div_ceil(CHUNK_BLOCKS);
    let parts = map_range(n_chunks, exec, |c| {
        let len = CHUNK_BLOCKS.min(n_samples - c * CHUNK_BLOCKS);
        let mut rng = stream_rng(seed, c as u64);
        let mut gains = vec![0.0; spec.m];
        let xs: Vec<f64> = (0..len)
            .map(|_| {
                fill_fading_gains(spec, &mut rng, &mut gains);
                -theta * service_rate_of(&gains, snr)
            })
            .collect();
        LogMoments::from_terms(&xs)
    });
    let total = parts
        .into_iter()
        .reduce(LogMoments::merge)
        .expect("at least one chunk");
    let n = n_samples as f64;
    let ln_mean = total.shift + (total.s1 / n).ln();
    if !ln_mean.is_finite() {
        return Err(Error::DegenerateEstimate(format!(
            "sample mean of exp(-theta nu) is not representable (log mean {ln_mean})"
        )));
    }
    // Delta method: var(ln mean) ~ var(X) / (n mean^2).
    let std_error = if n_samples > 1 {
        let ratio = n * total.s2 / (total.s1 * total.s1) - 1.0;
        (ratio.max(0.0) / (n - 1.0)).sqrt() / theta
    } else {
        0.0
    };
    Ok(EffCapEstimate {
        value: (-ln_mean / theta).max(0.0),
        std_error,
        method: CapacityMethod::MonteCarlo,
        n_samples,
        theta,
        snr,
    })
}

/// Closed-form effective capacity for i.i.d. unit-variance Rayleigh fading:
/// `-(m/theta) ln E{(1 + snr z)^(-theta/ln 2)}`, `z ~ Exp(1)`.
///
/// The expectation equals `snr^{-c} e^{1/snr} Gamma(1 - c, 1/snr)` with
/// `c = theta/ln 2` but is integrated directly in that normalized form, which
/// avoids overflow of `e^{1/snr}` and stays accurate as `theta -> 0`.
pub fn effective_capacity_rayleigh_iid(snr: f64, theta: f64, m: usize) -> Result<EffCapEstimate> {
    check_snr(snr)?;
    check_theta(theta)?;
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    let per_symbol = iid_log_expectation(snr, theta / LN_2)?;
    Ok(EffCapEstimate {
        value: (-(m as f64) * per_symbol / theta).max(0.0),
        std_error: 0.0,
        method: CapacityMethod::ClosedFormIidRayleigh,
        n_samples: 0,
        theta,
        snr,
    })
}

/// `ln E{(1 + snr u)^(-c)}` for `u ~ Exp(1)`.
fn iid_log_expectation(snr: f64, c: f64) -> Result<f64> {
    let opts = QuadOptions::default();
    // 1 - f, computed without cancellation.
    let delta = expect_exponential(|u| -(-c * (snr * u).ln_1p()).exp_m1(), 1.0 / snr, opts)?;
    if delta < 0.5 {
        Ok((-delta).ln_1p())
    } else {
        let mean = expect_exponential(|u| (-c * (snr * u).ln_1p()).exp(), 1.0 / snr, opts)?;
        Ok(mean.ln())
    }
}

/// Ergodic capacity `m E{log2(1 + snr z)}` in bits/block.
pub fn ergodic_capacity(spec: &ChannelSpec, snr: f64) -> Result<f64> {
    spec.validate()?;
    check_snr(snr)?;
    let g = snr * spec.sigma_h_sq;
    let mean = expect_exponential(|u| (g * u).ln_1p(), 1.0 / g, QuadOptions::default())?;
    Ok(spec.m as f64 * mean / LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FadingMoments {
    pub mean_z: f64,
    pub mean_z_sq: f64,
    /// `sum_{i,j} cov{z_i, z_j}` over one block.
    pub cov_sum: f64,
}

pub fn fading_moments(spec: &ChannelSpec) -> FadingMoments {
    let s2 = spec.sigma_h_sq * spec.sigma_h_sq;
    let m = spec.m as f64;
    let q = spec.rho * spec.rho;
    // sum_{k=1}^{m-1} (m - k) q^k
    let lagged = if (1.0 - q).abs() < 1e-6 {
        (1..spec.m).map(|k| (spec.m - k) as f64 * q.powi(k as i32)).sum()
    } else {
        q * (q.powi(spec.m as i32) - m * q + m - 1.0) / ((1.0 - q) * (1.0 - q))
    };
    FadingMoments {
        mean_z: spec.sigma_h_sq,
        mean_z_sq: 2.0 * s2,
        cov_sum: s2 * (m + 2.0 * lagged),
    }
}

/// Nodes per Gauss-Legendre panel of the amplitude grid.
const PANEL_NODES: usize = 16;
/// Amplitude cutoff in units of `sigma_h`; the neglected mass is `e^{-81}`.
const AMPLITUDE_CUTOFF: f64 = 9.0;
/// Kernel entries with `(r' - rho r)^2 / s` above this are dropped.
const KERNEL_EXPONENT_CUTOFF: f64 = 75.0;
const MAX_GRID_NODES: usize = 20_000;

/// Discretised Markov chain of the normalized fading amplitude
/// `r = |h| / sigma_h` within a block.
struct AmplitudeChain {
    nodes: Vec<f64>,
    /// Stationary weights (Rayleigh density times quadrature weight).
    pi: Vec<f64>,
    /// Row-stochastic transition weights, stored by band.
    rows: Vec<(usize, Vec<f64>)>,
}

impl AmplitudeChain {
    /// `snr_eff = snr sigma_h^2` sets the resolution near the origin.
    fn new(rho: f64, snr_eff: f64) -> Result<Self> {
        let s = 1.0 - rho * rho;
        let width = (0.5 * s.sqrt()).min(0.25);
        let mut breaks = vec![0.0];
        let mut p = 0.01 / snr_eff.sqrt();
        while p < width {
            breaks.push(p);
            p *= 4.0;
        }
        let mut x = width;
        while x < AMPLITUDE_CUTOFF {
            breaks.push(x);
            x += width;
        }
        breaks.push(AMPLITUDE_CUTOFF);
        breaks.dedup_by(|a, b| *a - *b < 0.25 * width.min(1e-3));
        let n_nodes = (breaks.len() - 1) * PANEL_NODES;
        if n_nodes > MAX_GRID_NODES {
            return Err(Error::Unsupported(format!(
                "rho = {rho} needs {n_nodes} quadrature nodes; use Monte Carlo"
            )));
        }
        let (gx, gw) = gauss_legendre(PANEL_NODES);
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut weights = Vec::with_capacity(n_nodes);
        for w in breaks.windows(2) {
            let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for (x, wt) in gx.iter().zip(&gw) {
                nodes.push(c + h * x);
                weights.push(h * wt);
            }
        }
        let mut pi: Vec<f64> = nodes
            .iter()
            .zip(&weights)
            .map(|(r, w)| w * 2.0 * r * (-r * r).exp())
            .collect();
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= total);

        let reach = (KERNEL_EXPONENT_CUTOFF * s).sqrt();
        let rows = nodes
            .iter()
            .map(|&r| {
                let centre = rho * r;
                let lo = nodes.partition_point(|&v| v < centre - reach);
                let hi = nodes.partition_point(|&v| v <= centre + reach);
                let mut row: Vec<f64> = (lo..hi)
                    .map(|j| {
                        let v = nodes[j];
                        let d = v - centre;
                        weights[j] * v * (-d * d / s).exp() * bessel_i0e(2.0 * rho * r * v / s)
                    })
                    .collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= sum);
                (lo, row)
            })
            .collect();
        Ok(Self { nodes, pi, rows })
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(lo, row)| row.iter().zip(&v[*lo..]).map(|(k, x)| k * x).sum())
            .collect()
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }
}

/// `ln E{prod_i f(z_i)}` for `f(z) = (1 + snr z)^(-c)` over a correlated block.
fn correlated_log_expectation(spec: &ChannelSpec, snr: f64, c: f64) -> Result<(f64, usize)> {
    let g = snr * spec.sigma_h_sq;
    if spec.m == 1 || spec.rho == 0.0 {
        return Ok((spec.m as f64 * iid_log_expectation(g, c)?, 0));
    }
    if spec.rho == 1.0 {
        return Ok((iid_log_expectation(g, c * spec.m as f64)?, 0));
    }
    let chain = AmplitudeChain::new(spec.rho, g)?;
    let log_f: Vec<f64> = chain.nodes.iter().map(|r| -c * (g * r * r).ln_1p()).collect();
    // d = 1 - prod f, propagated backwards: d_k = (1 - f) + f * K d_{k+1}.
    let one_minus_f: Vec<f64> = log_f.iter().map(|l| -l.exp_m1()).collect();
    let mut d = one_minus_f.clone();
    for _ in 1..spec.m {
        let kd = chain.apply(&d);
        d = one_minus_f
            .iter()
            .zip(&log_f)
            .zip(&kd)
            .map(|((a, l), k)| a + l.exp() * k)
            .collect();
    }
    let delta: f64 = chain.pi.iter().zip(&d).map(|(p, v)| p * v).sum();
    if delta < 0.5 {
        return Ok(((-delta).ln_1p(), chain.len()));
    }
    // Large theta * nu: propagate prod f directly with rescaling.
    let mut v: Vec<f64> = log_f.iter().map(|l| l.exp()).collect();
    let mut log_scale = 0.0;
    for _ in 1..spec.m {
        let kv = chain.apply(&v);
        v = kv.iter().zip(&log_f).map(|(k, l)| k * l.exp()).collect();
        let top = v.iter().copied().fold(0.0, f64::max);
        if !(top > 0.0) {
            return Err(Error::DegenerateEstimate(
                "block expectation underflowed on the quadrature grid".into(),
            ));
        }
        v.iter_mut().for_each(|x| *x /= top);
        log_scale += top.ln();
    }
    let mean: f64 = chain.pi.iter().zip(&v).map(|(p, x)| p * x).sum();
    Ok((log_scale + mean.ln(), chain.len()))
}

/// Deterministic effective capacity for any intra-block correlation.
pub fn effective_capacity_quadrature(spec: &ChannelSpec, snr: f64, theta: f64) -> Result<EffCapEstimate> {
    spec.validate()?;
    check_snr(snr)?;
    check_theta(theta)?;
    let (log_mean, nodes) = correlated_log_expectation(spec, snr, theta / LN_2)?;
    Ok(EffCapEstimate {
        value: (-log_mean / theta).max(0.0),
        std_error: 0.0,
        method: CapacityMethod::Quadrature,
        n_samples: nodes,
        theta,
        snr,
    })
}

/// Deterministic effective capacity: the closed form when fading is i.i.d.
/// within the block, quadrature otherwise.
pub fn effective_capacity(spec: &ChannelSpec, snr: f64, theta: f64) -> Result<EffCapEstimate> {
    spec.validate()?;
    if spec.rho == 0.0 || spec.m == 1 {
        let mut est = effective_capacity_rayleigh_iid(snr * spec.sigma_h_sq, theta, spec.m)?;
        est.snr = snr;
        Ok(est)
    } else {
        effective_capacity_quadrature(spec, snr, theta)
    }
}

/// `sum_{i,j} cov{log2(1 + snr z_i), log2(1 + snr z_j)}` over one block.
///
/// The variance uses the exponential marginal directly; lagged covariances
/// use the amplitude chain when `0 < rho < 1`.
pub fn log_rate_covariance_sum(spec: &ChannelSpec, snr: f64) -> Result<f64> {
    spec.validate()?;
    check_snr(snr)?;
    let g = snr * spec.sigma_h_sq;
    let opts = QuadOptions::default();
    let mean = expect_exponential(|u| (g * u).ln_1p(), 1.0 / g, opts)?;
    let second = expect_exponential(|u| (g * u).ln_1p().powi(2), 1.0 / g, opts)?;
    let var = (second - mean * mean) / (LN_2 * LN_2);
    let m = spec.m as f64;
    if spec.m == 1 || spec.rho == 0.0 {
        return Ok(m * var);
    }
    if spec.rho == 1.0 {
        return Ok(m * m * var);
    }
    let chain = AmplitudeChain::new(spec.rho, g)?;
    let lg: Vec<f64> = chain.nodes.iter().map(|r| (g * r * r).ln_1p() / LN_2).collect();
    let grid_mean: f64 = chain.pi.iter().zip(&lg).map(|(p, v)| p * v).sum();
    let centred: Vec<f64> = lg.iter().map(|v| v - grid_mean).collect();
    let mut u = centred.clone();
    let mut total = m * var;
    for k in 1..spec.m {
        u = chain.apply(&u);
        let cov: f64 = chain
            .pi
            .iter()
            .zip(&centred)
            .zip(&u)
            .map(|((p, a), b)| p * a * b)
            .sum();
        total += 2.0 * (spec.m - k) as f64 * cov;
    }
    Ok(total)
}
