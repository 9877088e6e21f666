#![allow(dead_code)]

//! Independent oracles shared by the integration tests.

pub type Mat = Vec<Vec<f64>>;

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Matrix exponential by scaling and squaring with a Taylor series.
pub fn expm(a: &Mat) -> Mat {
    let n = a.len();
    let norm = a.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let scale = 2f64.powi(s);
    let b: Mat = a.iter().map(|r| r.iter().map(|x| x / scale).collect()).collect();
    let mut result: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut term = result.clone();
    for k in 1..30 {
        term = matmul(&term, &b);
        term.iter_mut().for_each(|r| r.iter_mut().for_each(|x| *x /= k as f64));
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = matmul(&result, &result);
    }
    result
}

/// `(1/(theta T)) ln pi' exp(A T) 1` for a continuous-time source with
/// `A = G + k Lambda`, evaluated at two horizons and extrapolated in `1/T`.
pub fn continuous_log_mgf_rate(g: &Mat, rates: &[f64], pi: &[f64], k: f64, theta: f64) -> f64 {
    let n = g.len();
    let rate_at = |t: f64| {
        let a: Mat = (0..n)
            .map(|i| (0..n).map(|j| t * (g[i][j] + if i == j { k * rates[i] } else { 0.0 })).collect())
            .collect();
        let e = expm(&a);
        let total: f64 = (0..n).map(|i| pi[i] * e[i].iter().sum::<f64>()).sum();
        total.ln() / (theta * t)
    };
    // The log MGF is linear in T plus a constant up to exponentially small
    // terms, so the slope between two horizons removes the constant.
    let (t1, t2) = (50.0, 100.0);
    (rate_at(t2) * t2 - rate_at(t1) * t1) / (t2 - t1)
}

/// Stationary law by brute-force power iteration of a stochastic matrix.
pub fn stationary_by_iteration(p: &Mat, steps: usize) -> Vec<f64> {
    let n = p.len();
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[j] += v[i] * p[i][j];
            }
        }
        // Lazy averaging handles periodic-looking transients.
        v = v.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
    }
    v
}

/// Normalized effective capacity of i.i.d. Rayleigh fading by plain
/// composite Simpson integration in the variable `t = 1 - e^{-u}`.
pub fn iid_capacity_simpson(snr: f64, theta: f64, m: usize) -> f64 {
    let c = theta / std::f64::consts::LN_2;
    // E f(u) = int_0^1 f(-ln(1 - t)) dt
    let f = |t: f64| {
        if t >= 1.0 {
            0.0
        } else {
            let u = -(-t).ln_1p();
            (1.0 + snr * u).powf(-c)
        }
    };
    let n = 2_000_000;
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    -(m as f64) * (s * h / 3.0).ln() / theta
}
