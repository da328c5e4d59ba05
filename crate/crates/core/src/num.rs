//! Small numeric helpers shared across modules.

/// Neumaier-compensated sum.
pub fn ksum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// log(sum(exp(x))), returning -inf for an empty or all -inf input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + ksum(values.iter().map(|&v| (v - max).exp())).ln()
}

/// `(1 + w) ln(1 + w) - w` for `w >= -1`, accurate near `w = 0`.
///
/// Entropies are computed as `E[g] * E[phi(g / E[g] - 1)]`; every term is
/// nonnegative, so the result never goes negative through cancellation.
pub fn entropy_kernel(w: f64) -> f64 {
    if w <= -1.0 {
        return 1.0;
    }
    if w.abs() < 1e-3 {
        // sum_{k>=2} (-1)^k w^k / (k (k - 1))
        let mut term = w * w;
        let mut acc = 0.0;
        let mut sign = 1.0;
        for k in 2..12u32 {
            acc += sign * term / f64::from(k * (k - 1));
            term *= w;
            sign = -sign;
        }
        return acc;
    }
    (1.0 + w) * w.ln_1p() - w
}

/// Format a real with 17 significant digits (round-trips every `f64`).
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}
