//! Truncated power series in one variable.

/// Coefficients `w_0..=w_order` of `f(p)^s` where `f(0) = 1`.
///
/// Uses the recurrence obtained from `f w' = s f' w`:
/// `n w_n = sum_{k=1}^{n} ((s + 1) k - n) f_k w_{n-k}`.
/// `f` may be shorter than `order + 1` (missing terms are zero).
pub fn pow_unit(f: &[f64], s: f64, order: usize) -> Vec<f64> {
    debug_assert!(!f.is_empty() && f[0] == 1.0);
    let mut w = vec![0.0; order + 1];
    w[0] = 1.0;
    let deg = f.len() - 1;
    for n in 1..=order {
        let mut acc = 0.0;
        for k in 1..=n.min(deg) {
            acc += ((s + 1.0) * k as f64 - n as f64) * f[k] * w[n - k];
        }
        w[n] = acc / n as f64;
    }
    w
}

/// Product of two series truncated at `order`.
pub fn mul(a: &[f64], b: &[f64], order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    for (i, &ai) in a.iter().enumerate().take(order + 1) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(order + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Evaluate a polynomial (ascending coefficients) by nested multiplication.
#[inline]
pub fn horner(c: &[f64], p: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * p + ck)
}
