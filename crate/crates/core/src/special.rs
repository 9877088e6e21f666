/// Exponentially scaled modified Bessel function `e^{-x} I_0(x)`, `x >= 0`.
pub(crate) fn bessel_i0e(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= 30.0 {
        i0e_series(x)
    } else {
        i0e_asymptotic(x)
    }
}

fn i0e_series(x: f64) -> f64 {
    // All terms positive, so no cancellation.
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
        k += 1.0;
    }
    sum * (-x).exp()
}

fn i0e_asymptotic(x: f64) -> f64 {
    // The smallest term near k = 2x is about e^{-2x}.
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        let a = (2 * k - 1) as f64;
        term *= a * a / (8.0 * k as f64 * x);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}
