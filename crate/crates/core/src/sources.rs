//! Markovian traffic sources and their effective bandwidths.
//!
//! Three families are supported: discrete-time Markov sources (constant rate
//! per block in each state), Markov fluid sources (continuous-time chain,
//! constant fluid rate per state) and Markov-modulated Poisson processes.
//! Two-state ON/OFF members of each family have closed-form effective
//! bandwidths; general `n`-state sources go through a Perron root.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use serde::{Deserialize, Serialize};

const ROW_SUM_TOL: f64 = 1e-12;

/// QoS exponent `theta` (1/bit): decay rate of the queue-tail log-probability.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QosExponent(f64);

impl QosExponent {
    /// Strictly positive exponent, as required by effective bandwidth and
    /// capacity evaluations.
    pub fn new(theta: f64) -> Result<Self> {
        if theta.is_finite() && theta > 0.0 {
            Ok(Self(theta))
        } else {
            Err(Error::invalid("theta", format!("must be finite and > 0, got {theta}")))
        }
    }

    /// Exponent for the theta -> 0 limit results, which also accept zero.
    pub fn limit(theta: f64) -> Result<Self> {
        if theta.is_finite() && theta >= 0.0 {
            Ok(Self(theta))
        } else {
            Err(Error::invalid("theta", format!("must be finite and >= 0, got {theta}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_rates(path: &str, rates: &[f64], n: usize) -> Result<()> {
    if rates.len() != n {
        return Err(Error::invalid(
            path,
            format!("expected {n} entries, got {}", rates.len()),
        ));
    }
    for (i, r) in rates.iter().enumerate() {
        if !(r.is_finite() && *r >= 0.0) {
            return Err(Error::invalid(format!("{path}[{i}]"), format!("must be finite and >= 0, got {r}")));
        }
    }
    Ok(())
}

fn matrix_from_rows(path: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::invalid(path, "matrix is empty"));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != rows.len() {
            return Err(Error::invalid(
                format!("{path}[{i}]"),
                format!("row has {} entries, matrix needs {}", r.len(), rows.len()),
            ));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{path}[{i}][{j}]"), "not finite"));
        }
    }
    Ok(Matrix::from_rows(rows).expect("square checked"))
}

/// Discrete-time Markov source: row-stochastic transition matrix and
/// per-state arrival rates in bits/block.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMarkovSource {
    transition: Matrix,
    rates: Vec<f64>,
    stationary: Vec<f64>,
}

impl DiscreteMarkovSource {
    /// Validates the chain (row-stochastic, unique stationary law,
    /// aperiodic) and caches its stationary distribution.
    pub fn new(transition: Vec<Vec<f64>>, rates: Vec<f64>) -> Result<Self> {
        let j = matrix_from_rows("transition", &transition)?;
        let n = j.dim();
        for i in 0..n {
            for (k, &p) in j.row(i).iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(
                        format!("transition[{i}][{k}]"),
                        format!("probability {p} outside [0, 1]"),
                    ));
                }
            }
            let s: f64 = j.row(i).iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(
                    format!("transition[{i}]"),
                    format!("row sums to {s}, expected 1"),
                ));
            }
        }
        check_rates("rates", &rates, n)?;
        let stationary = stationary_of_transition(&j)?;
        let support: Vec<bool> = stationary.iter().map(|&p| p > 0.0).collect();
        let period = linalg::period_on_support(&j, &support);
        if period > 1 {
            return Err(Error::invalid(
                "transition",
                format!("chain is periodic with period {period}"),
            ));
        }
        Ok(Self {
            transition: j,
            rates,
            stationary,
        })
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }
    pub fn n_states(&self) -> usize {
        self.rates.len()
    }
}

fn stationary_of_transition(j: &Matrix) -> Result<Vec<f64>> {
    let n = j.dim();
    let mut a = j.clone();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    let pi = linalg::null_left_vector(&a).ok_or_else(|| {
        Error::NoUniqueStationary("eigenvalue-1 left eigenspace is not one-dimensional".into())
    })?;
    let resid = j
        .vec_mul(&pi)
        .iter()
        .zip(&pi)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    if resid > 1e-10 {
        return Err(Error::NoUniqueStationary(format!(
            "stationary residual {resid:e}"
        )));
    }
    Ok(pi)
}

fn check_generator(g: &Matrix) -> Result<()> {
    let n = g.dim();
    for i in 0..n {
        let row = g.row(i);
        for (k, &v) in row.iter().enumerate() {
            if k != i && v < 0.0 {
                return Err(Error::invalid(
                    format!("transition[{i}][{k}]"),
                    format!("off-diagonal rate {v} is negative"),
                ));
            }
        }
        let s: f64 = row.iter().sum();
        let scale = row.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if s.abs() > ROW_SUM_TOL * scale {
            return Err(Error::invalid(
                format!("transition[{i}]"),
                format!("generator row sums to {s}, expected 0"),
            ));
        }
    }
    Ok(())
}

fn stationary_of_generator(g: &Matrix) -> Result<Vec<f64>> {
    let pi = linalg::null_left_vector(g).ok_or_else(|| {
        Error::NoUniqueStationary("generator null space is not one-dimensional".into())
    })?;
    let scale = g.max_abs().max(1.0);
    let resid = g.vec_mul(&pi).iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if resid > 1e-10 * scale {
        return Err(Error::NoUniqueStationary(format!(
            "stationary residual {resid:e}"
        )));
    }
    Ok(pi)
}

/// Stationary distribution of a discrete-time chain given by rows of `J`.
pub fn stationary_distribution_discrete(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let j = matrix_from_rows("transition", transition)?;
    stationary_of_transition(&j)
}

/// Stationary distribution `pi G = 0` of a continuous-time generator.
pub fn stationary_distribution_fluid(generator: &[Vec<f64>]) -> Result<Vec<f64>> {
    let g = matrix_from_rows("transition", generator)?;
    check_generator(&g)?;
    stationary_of_generator(&g)
}

/// Markov fluid source: generator (1/block) and fluid rates (bits/block).
#[derive(Debug, Clone, PartialEq)]
pub struct FluidMarkovSource {
    generator: Matrix,
    rates: Vec<f64>,
    stationary: Vec<f64>,
}

impl FluidMarkovSource {
    pub fn new(generator: Vec<Vec<f64>>, rates: Vec<f64>) -> Result<Self> {
        let g = matrix_from_rows("transition", &generator)?;
        check_generator(&g)?;
        check_rates("rates", &rates, g.dim())?;
        let stationary = stationary_of_generator(&g)?;
        Ok(Self {
            generator: g,
            rates,
            stationary,
        })
    }

    pub fn generator(&self) -> &Matrix {
        &self.generator
    }
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }
    pub fn n_states(&self) -> usize {
        self.rates.len()
    }
}

/// Markov-modulated Poisson source: generator and Poisson intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct MmppSource {
    generator: Matrix,
    intensities: Vec<f64>,
    stationary: Vec<f64>,
}

impl MmppSource {
    pub fn new(generator: Vec<Vec<f64>>, intensities: Vec<f64>) -> Result<Self> {
        let g = matrix_from_rows("transition", &generator)?;
        check_generator(&g)?;
        check_rates("rates", &intensities, g.dim())?;
        let stationary = stationary_of_generator(&g)?;
        Ok(Self {
            generator: g,
            intensities,
            stationary,
        })
    }

    pub fn generator(&self) -> &Matrix {
        &self.generator
    }
    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }
    pub fn n_states(&self) -> usize {
        self.intensities.len()
    }
}

/// Whether an ON/OFF discrete chain is regular or has an absorbing OFF
/// state (`p11 = 1`, `p22 < 1`), for which rates are reported as zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceStatus {
    Regular,
    AbsorbingOff,
}

/// Two-state discrete source: OFF (state 1, no arrivals) and ON (state 2,
/// `lambda` bits/block).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnOffDiscreteParams {
    /// Probability of staying OFF.
    pub p11: f64,
    /// Probability of staying ON.
    pub p22: f64,
    pub lambda: f64,
}

impl OnOffDiscreteParams {
    pub fn new(p11: f64, p22: f64, lambda: f64) -> Result<Self> {
        let p = Self { p11, p22, lambda };
        p.validate()?;
        Ok(p)
    }

    /// The symmetric-burstiness family `p11 = 1 - s`, `p22 = s`.
    pub fn with_burstiness(s: f64, lambda: f64) -> Result<Self> {
        Self::new(1.0 - s, s, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p11", self.p11), ("p22", self.p22)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("probability {v} outside [0, 1]")));
            }
        }
        if self.p11 == 1.0 && self.p22 == 1.0 {
            return Err(Error::invalid("p11", "p11 = p22 = 1 gives a reducible chain"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn status(&self) -> SourceStatus {
        if self.p11 == 1.0 {
            SourceStatus::AbsorbingOff
        } else {
            SourceStatus::Regular
        }
    }

    /// Steady-state ON probability `(1 - p11) / (2 - p11 - p22)`.
    pub fn p_on(&self) -> f64 {
        (1.0 - self.p11) / (2.0 - self.p11 - self.p22)
    }

    pub fn average_rate(&self) -> f64 {
        self.lambda * self.p_on()
    }

    pub fn to_source(&self) -> Result<DiscreteMarkovSource> {
        DiscreteMarkovSource::new(
            vec![
                vec![self.p11, 1.0 - self.p11],
                vec![1.0 - self.p22, self.p22],
            ],
            vec![0.0, self.lambda],
        )
    }
}

/// Two-state continuous-time source shared by the fluid and MMPP models:
/// `alpha` is the OFF->ON rate, `beta` the ON->OFF rate, `lambda` the ON
/// rate (fluid) or Poisson intensity (MMPP).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnOffContinuousParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl OnOffContinuousParams {
    pub fn new(alpha: f64, beta: f64, lambda: f64) -> Result<Self> {
        let p = Self { alpha, beta, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("must be finite and > 0, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("beta", format!("must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// `alpha / (alpha + beta)`.
    pub fn p_on(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn average_rate(&self) -> f64 {
        self.lambda * self.p_on()
    }

    pub fn generator(&self) -> Vec<Vec<f64>> {
        vec![
            vec![-self.alpha, self.alpha],
            vec![self.beta, -self.beta],
        ]
    }

    pub fn to_fluid(&self) -> Result<FluidMarkovSource> {
        FluidMarkovSource::new(self.generator(), vec![0.0, self.lambda])
    }

    pub fn to_mmpp(&self) -> Result<MmppSource> {
        MmppSource::new(self.generator(), vec![0.0, self.lambda])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(1/theta) log sp(e^{theta Lambda} J)`.
///
/// Rows are scaled by `e^{theta (lambda_i - lambda_max)}` so the exponentials
/// never overflow; `lambda_max` is added back afterwards.
pub fn effective_bandwidth_discrete(src: &DiscreteMarkovSource, theta: f64) -> Result<f64> {
    let theta = QosExponent::new(theta)?.value();
    let peak = src.rates.iter().fold(0.0_f64, |m, &r| m.max(r));
    let n = src.n_states();
    let mut m = src.transition.clone();
    for i in 0..n {
        let w = (theta * (src.rates[i] - peak)).exp();
        for j in 0..n {
            m[(i, j)] *= w;
        }
    }
    let rho = linalg::perron_root(&m)?;
    if rho < 0.5 {
        return Ok(peak + rho.ln() / theta);
    }
    // Near 1 the root's own rounding swamps log(rho); get rho - 1 directly
    // as the abscissa of M - I instead.
    for i in 0..n {
        m[(i, i)] -= 1.0;
    }
    let excess = linalg::spectral_abscissa_metzler(&m)?;
    Ok(peak + excess.ln_1p() / theta)
}

/// Maximum real eigenvalue of `Lambda + G / theta`.
pub fn effective_bandwidth_fluid(src: &FluidMarkovSource, theta: f64) -> Result<f64> {
    let theta = QosExponent::new(theta)?.value();
    let n = src.n_states();
    let mut a = src.generator.clone();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] /= theta;
        }
        a[(i, i)] += src.rates[i];
    }
    linalg::spectral_abscissa_metzler(&a)
}

/// `(1/theta) mu((e^theta - 1) Lambda + G)`.
pub fn effective_bandwidth_mmpp(src: &MmppSource, theta: f64) -> Result<f64> {
    let theta = QosExponent::new(theta)?.value();
    let gain = theta.exp_m1();
    let mut a = src.generator.clone();
    for (i, l) in src.intensities.iter().enumerate() {
        a[(i, i)] += gain * l;
    }
    Ok(linalg::spectral_abscissa_metzler(&a)? / theta)
}

/// Closed-form ON/OFF discrete effective bandwidth, evaluated as
/// `lambda + (1/theta) log r` with
/// `r = (p11 t + p22 + sqrt((p11 t - p22)^2 + 4 p12 p21 t)) / 2`, `t = e^{-theta lambda}`.
pub fn effective_bandwidth_onoff_discrete(p: &OnOffDiscreteParams, theta: f64) -> Result<f64> {
    let theta = QosExponent::new(theta)?.value();
    p.validate()?;
    if p.lambda == 0.0 || p.status() == SourceStatus::AbsorbingOff {
        return Ok(0.0);
    }
    let x = theta * p.lambda;
    let t = (-x).exp();
    let a = p.p11 * t;
    let disc = (a - p.p22).powi(2) + 4.0 * (1.0 - p.p11) * (1.0 - p.p22) * t;
    let root = 0.5 * (a + p.p22 + disc.sqrt());
    Ok(p.lambda + root.ln() / theta)
}

/// `(1/(2 theta)) [k - s + sqrt((k - s)^2 + 4 alpha k)]` with `s = alpha + beta`,
/// rearranged to avoid cancellation when `k < s`.
fn onoff_continuous_root(alpha: f64, beta: f64, k: f64) -> f64 {
    let b = k - (alpha + beta);
    let sq = (b * b + 4.0 * alpha * k).sqrt();
    if b >= 0.0 {
        0.5 * (b + sq)
    } else {
        2.0 * alpha * k / (sq - b)
    }
}

/// Closed-form ON/OFF Markov fluid effective bandwidth.
pub fn effective_bandwidth_onoff_fluid(p: &OnOffContinuousParams, theta: f64) -> Result<f64> {
    let theta = QosExponent::new(theta)?.value();
    p.validate()?;
    Ok(onoff_continuous_root(p.alpha, p.beta, theta * p.lambda) / theta)
}

/// Closed-form ON/OFF MMPP effective bandwidth. With `beta = 0` this is the
/// pure Poisson value `(e^theta - 1) lambda / theta`.
pub fn effective_bandwidth_onoff_mmpp(p: &OnOffContinuousParams, theta: f64) -> Result<f64> {
    let theta = QosExponent::new(theta)?.value();
    p.validate()?;
    Ok(onoff_continuous_root(p.alpha, p.beta, theta.exp_m1() * p.lambda) / theta)
}

/// Any supported traffic source.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// Constant arrivals at `rate` bits/block.
    Constant { rate: f64 },
    Discrete(DiscreteMarkovSource),
    Fluid(FluidMarkovSource),
    Mmpp(MmppSource),
    OnOffDiscrete(OnOffDiscreteParams),
    OnOffFluid(OnOffContinuousParams),
    OnOffMmpp(OnOffContinuousParams),
}

/// Arrival model family, independent of state count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFamily {
    Constant,
    Discrete,
    Fluid,
    Mmpp,
}

impl Source {
    pub fn family(&self) -> SourceFamily {
        match self {
            Source::Constant { .. } => SourceFamily::Constant,
            Source::Discrete(_) | Source::OnOffDiscrete(_) => SourceFamily::Discrete,
            Source::Fluid(_) | Source::OnOffFluid(_) => SourceFamily::Fluid,
            Source::Mmpp(_) | Source::OnOffMmpp(_) => SourceFamily::Mmpp,
        }
    }

    /// Whether a closed-form effective bandwidth exists.
    pub fn has_closed_form(&self) -> bool {
        !matches!(self, Source::Discrete(_) | Source::Fluid(_) | Source::Mmpp(_))
    }

    /// Per-state rates (intensities for MMPP) and stationary law.
    pub fn rates_and_stationary(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Source::Constant { rate } => (vec![*rate], vec![1.0]),
            Source::Discrete(s) => (s.rates.clone(), s.stationary.clone()),
            Source::Fluid(s) => (s.rates.clone(), s.stationary.clone()),
            Source::Mmpp(s) => (s.intensities.clone(), s.stationary.clone()),
            Source::OnOffDiscrete(p) => {
                let on = p.p_on();
                (vec![0.0, p.lambda], vec![1.0 - on, on])
            }
            Source::OnOffFluid(p) | Source::OnOffMmpp(p) => {
                let on = p.p_on();
                (vec![0.0, p.lambda], vec![1.0 - on, on])
            }
        }
    }

    /// Largest per-state rate (or intensity).
    pub fn peak_rate(&self) -> f64 {
        self.rates_and_stationary()
            .0
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Effective bandwidth, closed form where one exists.
    pub fn effective_bandwidth(&self, theta: f64) -> Result<f64> {
        match self {
            Source::Constant { rate } => {
                QosExponent::new(theta)?;
                Ok(*rate)
            }
            Source::Discrete(s) => effective_bandwidth_discrete(s, theta),
            Source::Fluid(s) => effective_bandwidth_fluid(s, theta),
            Source::Mmpp(s) => effective_bandwidth_mmpp(s, theta),
            Source::OnOffDiscrete(p) => effective_bandwidth_onoff_discrete(p, theta),
            Source::OnOffFluid(p) => effective_bandwidth_onoff_fluid(p, theta),
            Source::OnOffMmpp(p) => effective_bandwidth_onoff_mmpp(p, theta),
        }
    }

    /// Effective bandwidth through the spectral path, even for ON/OFF
    /// sources that have a closed form.
    pub fn effective_bandwidth_spectral(&self, theta: f64) -> Result<f64> {
        match self {
            Source::OnOffDiscrete(p) => {
                if p.status() == SourceStatus::AbsorbingOff {
                    QosExponent::new(theta)?;
                    return Ok(0.0);
                }
                effective_bandwidth_discrete(&p.to_source()?, theta)
            }
            Source::OnOffFluid(p) => effective_bandwidth_fluid(&p.to_fluid()?, theta),
            Source::OnOffMmpp(p) => effective_bandwidth_mmpp(&p.to_mmpp()?, theta),
            other => other.effective_bandwidth(theta),
        }
    }

    /// The source at peak parameter `lambda`: the ON rate for ON/OFF
    /// sources, the rate scale for the others (matching
    /// [`crate::throughput::ThroughputResult::lambda_star`]).
    pub fn at_lambda(&self, lambda: f64) -> Source {
        match self {
            Source::OnOffDiscrete(p) => Source::OnOffDiscrete(OnOffDiscreteParams { lambda, ..*p }),
            Source::OnOffFluid(p) => Source::OnOffFluid(OnOffContinuousParams { lambda, ..*p }),
            Source::OnOffMmpp(p) => Source::OnOffMmpp(OnOffContinuousParams { lambda, ..*p }),
            Source::Constant { .. } => Source::Constant { rate: lambda },
            other => other.with_scale(lambda),
        }
    }

    /// The same chain with every rate multiplied by `scale`.
    pub fn with_scale(&self, scale: f64) -> Source {
        fn scaled(v: &[f64], s: f64) -> Vec<f64> {
            v.iter().map(|x| x * s).collect()
        }
        match self {
            Source::Constant { rate } => Source::Constant { rate: rate * scale },
            Source::Discrete(s) => Source::Discrete(DiscreteMarkovSource {
                rates: scaled(&s.rates, scale),
                ..s.clone()
            }),
            Source::Fluid(s) => Source::Fluid(FluidMarkovSource {
                rates: scaled(&s.rates, scale),
                ..s.clone()
            }),
            Source::Mmpp(s) => Source::Mmpp(MmppSource {
                intensities: scaled(&s.intensities, scale),
                ..s.clone()
            }),
            Source::OnOffDiscrete(p) => Source::OnOffDiscrete(OnOffDiscreteParams {
                lambda: p.lambda * scale,
                ..*p
            }),
            Source::OnOffFluid(p) => Source::OnOffFluid(OnOffContinuousParams {
                lambda: p.lambda * scale,
                ..*p
            }),
            Source::OnOffMmpp(p) => Source::OnOffMmpp(OnOffContinuousParams {
                lambda: p.lambda * scale,
                ..*p
            }),
        }
    }
}

/// `sum_i pi_i lambda_i`; `lambda * P_on` for ON/OFF sources.
pub fn average_rate(src: &Source) -> f64 {
    match src {
        Source::OnOffDiscrete(p) => p.average_rate(),
        Source::OnOffFluid(p) | Source::OnOffMmpp(p) => p.average_rate(),
        other => {
            let (rates, pi) = other.rates_and_stationary();
            dot(&rates, &pi)
        }
    }
}
