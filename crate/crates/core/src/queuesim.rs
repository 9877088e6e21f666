//! Block-level queue simulation.
//!
//! A source feeds a FIFO buffer drained by the block-fading channel. The
//! backlog follows the Lindley recursion `Q(k) = max(Q(k-1) + a(k) - nu(k), 0)`
//! and every admitted bit is timed until the block that serves it. The tail
//! probabilities of backlog and delay are then fitted on a log scale; in the
//! large-deviations regime their decay rates should be close to `theta` and
//! `theta * a*(theta)`.
//!
//! Arrivals in block `k` may leave in block `k`, so the delay of a bit is the
//! number of block boundaries it waits through.
//!
//! Randomness is split per chunk of [`CHUNK_BLOCKS`] blocks: chunk `c` draws
//! its fading from stream `2c` and its source path from stream `2c + 1`.
//! Service rates for a batch of chunks can therefore be generated in
//! parallel while the queue itself advances sequentially, and the report
//! does not depend on the execution policy.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::channel::{fill_fading_gains, service_rate_of, ChannelSpec};
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::rng::{stream_rng, StreamRng, CHUNK_BLOCKS};
use crate::sources::{Source, SourceStatus};

/// Smallest accepted run length.
pub const MIN_BLOCKS: usize = 10_000;
/// Blocks after which the stability check starts.
pub const STABILITY_WARMUP: usize = 100_000;
/// Points with fewer tail events than this are left out of the fit.
pub const MIN_TAIL_EVENTS: u64 = 100;
/// Number of automatically chosen thresholds.
pub const AUTO_THRESHOLDS: usize = 12;

const AUTO_LOW_QUANTILE: f64 = 0.5;
const AUTO_HIGH_QUANTILE: f64 = 0.9999;
const STABILITY_MARGIN: f64 = 1.01;
const BATCH_CHUNKS: usize = 64;

/// Everything needed for one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Source with its peak rate already set (see [`Source::at_lambda`]).
    pub source: Source,
    pub channel: ChannelSpec,
    /// Linear SNR.
    pub snr: f64,
    pub n_blocks: usize,
    pub seed: u64,
    /// Backlog thresholds in bits; chosen from the run when `None`.
    pub q_thresholds: Option<Vec<f64>>,
    /// Delay thresholds in blocks; chosen from the run when `None`.
    pub d_thresholds: Option<Vec<u64>>,
}

impl SimConfig {
    pub fn new(source: Source, channel: ChannelSpec, snr: f64, n_blocks: usize, seed: u64) -> Self {
        SimConfig {
            source,
            channel,
            snr,
            n_blocks,
            seed,
            q_thresholds: None,
            d_thresholds: None,
        }
    }

    pub fn with_q_thresholds(mut self, q: Vec<f64>) -> Self {
        self.q_thresholds = Some(q);
        self
    }

    pub fn with_d_thresholds(mut self, d: Vec<u64>) -> Self {
        self.d_thresholds = Some(d);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::invalid("snr", format!("{} must be positive and finite", self.snr)));
        }
        if self.n_blocks < MIN_BLOCKS {
            return Err(Error::invalid(
                "n_blocks",
                format!("{} is below the minimum of {MIN_BLOCKS}", self.n_blocks),
            ));
        }
        if let Some(q) = &self.q_thresholds {
            check_increasing("q_thresholds", q)?;
            if let Some(i) = q.iter().position(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::invalid(format!("q_thresholds[{i}]"), "must be finite and nonnegative"));
            }
        }
        if let Some(d) = &self.d_thresholds {
            let as_f: Vec<f64> = d.iter().map(|&x| x as f64).collect();
            check_increasing("d_thresholds", &as_f)?;
        }
        Ok(())
    }

    /// Blocks left out of the tail statistics.
    pub fn warmup_blocks(&self) -> usize {
        (self.n_blocks / 100).max(MIN_BLOCKS).min(self.n_blocks / 2)
    }
}

fn check_increasing(path: &str, v: &[f64]) -> Result<()> {
    match v.windows(2).position(|w| !(w[1] > w[0])) {
        Some(i) => Err(Error::invalid(
            format!("{path}[{}]", i + 1),
            "thresholds must be strictly increasing",
        )),
        None => Ok(()),
    }
}

/// One empirical tail probability `Pr{X >= threshold}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub threshold: f64,
    pub probability: f64,
    /// Number of observations behind the estimate: blocks for backlog,
    /// served bit portions for delay.
    pub events: u64,
}

/// Least-squares line through `(threshold, ln p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Negated slope, i.e. the decay rate.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSimReport {
    pub overflow_points: Vec<TailPoint>,
    pub delay_points: Vec<TailPoint>,
    /// Decay rate of the backlog tail in 1/bit, when a fit was possible.
    pub theta_sim: Option<f64>,
    /// Decay rate of the delay tail in 1/block, when a fit was possible.
    pub delay_slope_sim: Option<f64>,
    pub overflow_fit: Option<DecayFit>,
    pub delay_fit: Option<DecayFit>,
    /// Empirical `Pr{Q > 0}`.
    pub varsigma_hat: f64,
    /// Mean arrivals over mean service.
    pub varsigma_ratio: f64,
    pub mean_arrival: f64,
    pub mean_service: f64,
    pub n_blocks: usize,
    pub warmup_blocks: usize,
    pub seed: u64,
}

/// Both estimates of the probability of a nonempty buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarsigmaEstimate {
    pub empirical: f64,
    pub ratio_approx: f64,
    /// `empirical - ratio_approx`.
    pub discrepancy: f64,
}

pub fn varsigma_estimate(report: &QueueSimReport) -> VarsigmaEstimate {
    VarsigmaEstimate {
        empirical: report.varsigma_hat,
        ratio_approx: report.varsigma_ratio,
        discrepancy: report.varsigma_hat - report.varsigma_ratio,
    }
}

/// Fits `ln p = intercept - slope * threshold` by ordinary least squares,
/// skipping points with fewer than [`MIN_TAIL_EVENTS`] events or zero
/// probability.
///
/// A flat curve gives slope 0 and `r_squared` 0.
pub fn fit_decay_slope(points: &[TailPoint]) -> Result<DecayFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.events >= MIN_TAIL_EVENTS && p.probability > 0.0)
        .map(|p| (p.threshold, p.probability.ln()))
        .collect();
    if usable.len() < 4 {
        return Err(Error::InsufficientTail { usable: usable.len() });
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &usable {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientTail { usable: 1 });
    }
    let b = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    Ok(DecayFit {
        slope: -b,
        intercept: my - b * mx,
        r_squared,
        n_points: usable.len(),
    })
}

/// Runs one simulation, generating fading in parallel when the build allows.
pub fn simulate_queue(cfg: &SimConfig) -> Result<QueueSimReport> {
    simulate_queue_with(cfg, Execution::default())
}

/// [`simulate_queue`] with an explicit execution policy. The report is
/// identical for every policy.
pub fn simulate_queue_with(cfg: &SimConfig, exec: Execution) -> Result<QueueSimReport> {
    cfg.validate()?;
    let mut arrivals = ArrivalProcess::new(&cfg.source)?;
    let n = cfg.n_blocks;
    let warmup = cfg.warmup_blocks();
    let n_chunks = n.div_ceil(CHUNK_BLOCKS);

    let mut q = 0.0_f64;
    let mut fifo = FifoDelays::new(warmup);
    let mut q_counts = cfg.q_thresholds.as_ref().map(|t| vec![0u64; t.len()]);
    let mut q_trace: Vec<f32> = Vec::new();
    if cfg.q_thresholds.is_none() {
        q_trace.reserve(n - warmup);
    }
    let (mut sum_a, mut sum_s) = (0.0, 0.0);
    let (mut tail_a, mut tail_s) = (0.0, 0.0);
    let mut nonempty = 0u64;

    let mut chunk = 0;
    while chunk < n_chunks {
        let batch_end = (chunk + BATCH_CHUNKS).min(n_chunks);
        let services = map_range(batch_end - chunk, exec, |i| {
            chunk_services(cfg, chunk + i, n)
        });
        for (offset, nus) in services.into_iter().enumerate() {
            let c = chunk + offset;
            let mut rng = stream_rng(cfg.seed, 2 * c as u64 + 1);
            if c == 0 {
                arrivals.start(&mut rng);
            }
            for (j, &nu) in nus.iter().enumerate() {
                let k = c * CHUNK_BLOCKS + j;
                let a = arrivals.step(&mut rng);
                q = (q + a - nu).max(0.0);
                fifo.arrive(k, a);
                fifo.serve(k, nu);
                sum_a += a;
                sum_s += nu;
                if k >= warmup {
                    tail_a += a;
                    tail_s += nu;
                    if q > 0.0 {
                        nonempty += 1;
                    }
                    match (&cfg.q_thresholds, &mut q_counts) {
                        (Some(t), Some(counts)) => {
                            let hit = t.partition_point(|&x| x <= q);
                            if hit > 0 {
                                counts[hit - 1] += 1;
                            }
                        }
                        _ => q_trace.push(q as f32),
                    }
                }
            }
            let done = (c + 1) * CHUNK_BLOCKS;
            if done >= STABILITY_WARMUP && sum_a > STABILITY_MARGIN * sum_s {
                let blocks = done.min(n) as f64;
                return Err(Error::UnstableQueue {
                    arrival_rate: sum_a / blocks,
                    service_rate: sum_s / blocks,
                });
            }
        }
        chunk = batch_end;
    }

    let observed = (n - warmup) as u64;
    let overflow_points = match (&cfg.q_thresholds, q_counts) {
        (Some(t), Some(counts)) => cumulate_from_top(t, &counts, observed),
        _ => backlog_tail_auto(&mut q_trace, observed),
    };
    let delay_points = fifo.tail(cfg.d_thresholds.as_deref());
    let overflow_fit = fit_decay_slope(&overflow_points).ok();
    let delay_fit = fit_decay_slope(&delay_points).ok();
    let mean_arrival = tail_a / observed as f64;
    let mean_service = tail_s / observed as f64;
    Ok(QueueSimReport {
        overflow_points,
        delay_points,
        theta_sim: overflow_fit.map(|f| f.slope),
        delay_slope_sim: delay_fit.map(|f| f.slope),
        overflow_fit,
        delay_fit,
        varsigma_hat: nonempty as f64 / observed as f64,
        varsigma_ratio: if mean_arrival > 0.0 { mean_arrival / mean_service } else { 0.0 },
        mean_arrival,
        mean_service,
        n_blocks: n,
        warmup_blocks: warmup,
        seed: cfg.seed,
    })
}

/// Independent runs with seeds `cfg.seed, cfg.seed + 1, ...`, in parallel
/// across runs.
pub fn simulate_replications(
    cfg: &SimConfig,
    replications: usize,
    exec: Execution,
) -> Vec<Result<QueueSimReport>> {
    map_range(replications, exec, |i| {
        let c = SimConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        simulate_queue_with(&c, Execution::Serial)
    })
}

/// Service rates for one chunk of blocks.
fn chunk_services(cfg: &SimConfig, chunk: usize, n: usize) -> Vec<f64> {
    let start = chunk * CHUNK_BLOCKS;
    let len = CHUNK_BLOCKS.min(n - start);
    let mut rng = stream_rng(cfg.seed, 2 * chunk as u64);
    let mut gains = vec![0.0; cfg.channel.m];
    (0..len)
        .map(|_| {
            fill_fading_gains(&cfg.channel, &mut rng, &mut gains);
            service_rate_of(&gains, cfg.snr)
        })
        .collect()
}

/// Turns per-bin counts (bin `i` holds observations in `[t_i, t_{i+1})`)
/// into exceedance points.
fn cumulate_from_top(thresholds: &[f64], counts: &[u64], total: u64) -> Vec<TailPoint> {
    let mut above = 0u64;
    let mut out: Vec<TailPoint> = thresholds
        .iter()
        .zip(counts)
        .rev()
        .map(|(&t, &c)| {
            above += c;
            TailPoint {
                threshold: t,
                probability: above as f64 / total as f64,
                events: above,
            }
        })
        .collect();
    out.reverse();
    out
}

fn backlog_tail_auto(trace: &mut [f32], total: u64) -> Vec<TailPoint> {
    let mut positive: Vec<f32> = trace.iter().copied().filter(|&x| x > 0.0).collect();
    if positive.is_empty() {
        return Vec::new();
    }
    let lo = quantile(&mut positive, AUTO_LOW_QUANTILE) as f64;
    let hi = quantile(&mut positive, AUTO_HIGH_QUANTILE) as f64;
    let thresholds = spaced(lo, hi);
    let mut counts = vec![0u64; thresholds.len()];
    for &x in trace.iter() {
        let hit = thresholds.partition_point(|&t| t <= x as f64);
        if hit > 0 {
            counts[hit - 1] += 1;
        }
    }
    cumulate_from_top(&thresholds, &counts, total)
}

fn quantile(v: &mut [f32], p: f64) -> f32 {
    let idx = ((v.len() - 1) as f64 * p).round() as usize;
    *v.select_nth_unstable_by(idx, f32::total_cmp).1
}

fn spaced(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let step = (hi - lo) / (AUTO_THRESHOLDS - 1) as f64;
    (0..AUTO_THRESHOLDS).map(|i| lo + step * i as f64).collect()
}

/// Bit-level FIFO delays from the arrival/departure curves. Only the queue
/// contents are held, one entry per block with bits still waiting.
struct FifoDelays {
    pending: VecDeque<(usize, f64)>,
    weight: Vec<f64>,
    count: Vec<u64>,
    record_from: usize,
}

impl FifoDelays {
    fn new(record_from: usize) -> Self {
        FifoDelays {
            pending: VecDeque::new(),
            weight: Vec::new(),
            count: Vec::new(),
            record_from,
        }
    }

    fn arrive(&mut self, block: usize, bits: f64) {
        if bits > 0.0 {
            self.pending.push_back((block, bits));
        }
    }

    fn serve(&mut self, block: usize, mut capacity: f64) {
        while capacity > 0.0 {
            let Some(front) = self.pending.front_mut() else {
                break;
            };
            let served = front.1.min(capacity);
            let (arrived, left) = (front.0, front.1 - served);
            capacity -= served;
            if arrived >= self.record_from {
                let d = block - arrived;
                if d >= self.weight.len() {
                    self.weight.resize(d + 1, 0.0);
                    self.count.resize(d + 1, 0);
                }
                self.weight[d] += served;
                self.count[d] += 1;
            }
            if left > 0.0 {
                front.1 = left;
            } else {
                self.pending.pop_front();
            }
        }
    }

    /// `Pr{D >= d}` over bits that arrived after warm-up and have left.
    fn tail(&self, thresholds: Option<&[u64]>) -> Vec<TailPoint> {
        let total: f64 = self.weight.iter().sum();
        let auto;
        let thresholds = match thresholds {
            Some(t) => t,
            None => {
                auto = self.auto_thresholds(total);
                &auto
            }
        };
        // Suffix sums: weight and count with delay >= d.
        let len = self.weight.len();
        let mut w_above = vec![0.0; len + 1];
        let mut c_above = vec![0u64; len + 1];
        for d in (0..len).rev() {
            w_above[d] = w_above[d + 1] + self.weight[d];
            c_above[d] = c_above[d + 1] + self.count[d];
        }
        thresholds
            .iter()
            .map(|&d| {
                let i = (d as usize).min(len);
                TailPoint {
                    threshold: d as f64,
                    probability: if total > 0.0 { w_above[i] / total } else { 0.0 },
                    events: c_above[i],
                }
            })
            .collect()
    }

    /// Integer thresholds between the median and the 99.99th percentile of
    /// the positive delays, at most [`AUTO_THRESHOLDS`] of them.
    fn auto_thresholds(&self, total: f64) -> Vec<u64> {
        let positive = total - self.weight.first().copied().unwrap_or(0.0);
        if positive <= 0.0 {
            return Vec::new();
        }
        let percentile = |p: f64| {
            let mut acc = 0.0;
            for (d, w) in self.weight.iter().enumerate().skip(1) {
                acc += w;
                if acc >= p * positive {
                    return d;
                }
            }
            self.weight.len() - 1
        };
        let lo = percentile(AUTO_LOW_QUANTILE);
        let hi = percentile(AUTO_HIGH_QUANTILE);
        let mut out: Vec<u64> = spaced(lo as f64, hi as f64)
            .into_iter()
            .map(|x| x.round() as u64)
            .collect();
        out.dedup();
        out
    }
}

/// Per-block arrival generator for every source kind.
enum ArrivalProcess {
    Constant(f64),
    Discrete {
        cumulative: Vec<Vec<f64>>,
        rates: Vec<f64>,
        initial: Vec<f64>,
        state: usize,
    },
    Continuous {
        exit: Vec<f64>,
        jump: Vec<Vec<f64>>,
        rates: Vec<f64>,
        initial: Vec<f64>,
        poisson: bool,
        state: usize,
    },
}

impl ArrivalProcess {
    fn new(src: &Source) -> Result<Self> {
        let (rates, pi) = src.rates_and_stationary();
        if let Some(i) = rates.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid(format!("source.rates[{i}]"), "must be finite and nonnegative"));
        }
        Ok(match src {
            Source::Constant { rate } => ArrivalProcess::Constant(*rate),
            Source::OnOffDiscrete(p) if p.status() == SourceStatus::AbsorbingOff => ArrivalProcess::Constant(0.0),
            Source::Discrete(_) | Source::OnOffDiscrete(_) => {
                let rows = match src {
                    Source::Discrete(s) => s.transition().rows(),
                    Source::OnOffDiscrete(p) => p.to_source()?.transition().rows(),
                    _ => unreachable!(),
                };
                ArrivalProcess::Discrete {
                    cumulative: rows.iter().map(|r| cumulative(r)).collect(),
                    rates,
                    initial: cumulative(&pi),
                    state: 0,
                }
            }
            _ => {
                let g = match src {
                    Source::Fluid(s) => s.generator().rows(),
                    Source::Mmpp(s) => s.generator().rows(),
                    Source::OnOffFluid(p) | Source::OnOffMmpp(p) => p.generator(),
                    _ => unreachable!(),
                };
                let exit: Vec<f64> = (0..g.len()).map(|i| -g[i][i]).collect();
                let jump = g
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let off: Vec<f64> = row
                            .iter()
                            .enumerate()
                            .map(|(j, &x)| if i == j { 0.0 } else { x })
                            .collect();
                        cumulative(&off)
                    })
                    .collect();
                ArrivalProcess::Continuous {
                    exit,
                    jump,
                    rates,
                    initial: cumulative(&pi),
                    poisson: matches!(src, Source::Mmpp(_) | Source::OnOffMmpp(_)),
                    state: 0,
                }
            }
        })
    }

    fn start(&mut self, rng: &mut StreamRng) {
        match self {
            ArrivalProcess::Constant(_) => {}
            ArrivalProcess::Discrete { initial, state, .. } | ArrivalProcess::Continuous { initial, state, .. } => {
                *state = pick(initial, rng);
            }
        }
    }

    /// Arrivals in the current block, then advance the chain by one block.
    fn step(&mut self, rng: &mut StreamRng) -> f64 {
        match self {
            ArrivalProcess::Constant(rate) => *rate,
            ArrivalProcess::Discrete {
                cumulative,
                rates,
                state,
                ..
            } => {
                let a = rates[*state];
                *state = pick(&cumulative[*state], rng);
                a
            }
            ArrivalProcess::Continuous {
                exit,
                jump,
                rates,
                poisson,
                state,
                ..
            } => {
                let mut left = 1.0;
                let mut mean = 0.0;
                loop {
                    let rate = exit[*state];
                    let hold = if rate > 0.0 {
                        let e: f64 = Exp1.sample(rng);
                        e / rate
                    } else {
                        f64::INFINITY
                    };
                    if hold >= left {
                        mean += rates[*state] * left;
                        break;
                    }
                    mean += rates[*state] * hold;
                    left -= hold;
                    *state = pick(&jump[*state], rng);
                }
                if *poisson {
                    poisson_draw(mean, rng)
                } else {
                    mean
                }
            }
        }
    }
}

fn poisson_draw(mean: f64, rng: &mut StreamRng) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
}

/// Normalized running sums of nonnegative weights.
fn cumulative(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x / total;
            acc
        })
        .collect()
}

fn pick(cumulative: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// Runs the Lindley recursion on given arrivals and services.
pub fn lindley_trace(arrivals: &[f64], services: &[f64], q0: f64) -> Vec<f64> {
    let mut q = q0;
    arrivals
        .iter()
        .zip(services)
        .map(|(a, s)| {
            q = (q + a - s).max(0.0);
            q
        })
        .collect()
}

/// Bit-weighted FIFO delay histogram for given arrivals and services:
/// entry `d` holds the bits that waited `d` blocks. Bits still queued at the
/// end are not counted.
pub fn fifo_delay_histogram(arrivals: &[f64], services: &[f64]) -> Vec<f64> {
    let mut fifo = FifoDelays::new(0);
    for (k, (a, s)) in arrivals.iter().zip(services).enumerate() {
        fifo.arrive(k, *a);
        fifo.serve(k, *s);
    }
    fifo.weight
}
