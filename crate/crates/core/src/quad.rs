//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Upper limit used for integrals against `e^{-u}` on `[0, inf)`; the
/// neglected tail mass is `e^{-90} < 1e-39`.
const EXP_TAIL_CUTOFF: f64 = 90.0;

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-300,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kronrod * h;
    let raw = ((kronrod - gauss) * h).abs();
    // QUADPACK-style error scaling.
    let error = if raw > 0.0 {
        raw * (200.0 * raw / value.abs().max(f64::MIN_POSITIVE)).powf(1.5).min(1.0)
    } else {
        0.0
    };
    Segment {
        a,
        b,
        value,
        error: error.max(50.0 * f64::EPSILON * value.abs()),
    }
}

/// Integrates `f` over `[a, b]`, pre-split at the given interior
/// breakpoints.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    opts: QuadOptions,
) -> Result<f64> {
    let mut heap: BinaryHeap<Segment> = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gk15(&f, w[0], w[1]))
        .collect();
    let mut count = heap.len();
    loop {
        let total: f64 = heap.iter().map(|s| s.value).sum();
        let err: f64 = heap.iter().map(|s| s.error).sum();
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= tol {
            return Ok(total);
        }
        if !total.is_finite() || count >= opts.max_intervals {
            return Err(Error::QuadratureFailure {
                error: err,
                tolerance: tol,
            });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            return Err(Error::QuadratureFailure {
                error: err,
                tolerance: tol,
            });
        }
        heap.push(gk15(&f, worst.a, mid));
        heap.push(gk15(&f, mid, worst.b));
        count += 1;
    }
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    integrate_with_breaks(f, &[a, b], opts)
}

/// `E{g(Z)}` for `Z ~ Exp(1)`, i.e. `int_0^inf e^{-u} g(u) du`.
///
/// `scale` hints where `g` varies fastest near the origin (for
/// `g(u) = h(snr * u)` pass `1/snr`); extra breakpoints are placed there.
pub fn expect_exponential<F: Fn(f64) -> f64>(g: F, scale: f64, opts: QuadOptions) -> Result<f64> {
    let mut pts = vec![0.0];
    if scale.is_finite() && scale > 0.0 {
        let mut p = scale * 1e-3;
        while p < 1.0 {
            pts.push(p);
            p *= 10.0;
        }
    }
    pts.extend_from_slice(&[1.0, 4.0, 12.0, 30.0, 60.0, EXP_TAIL_CUTOFF]);
    pts.dedup_by(|a, b| a <= b);
    integrate_with_breaks(|u| (-u).exp() * g(u), &pts, opts)
}


/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_{n-1}(x).
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
