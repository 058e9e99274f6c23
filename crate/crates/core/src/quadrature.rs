//! Adaptive quadrature by integrating `dY/dp = w(p)` with an embedded
//! Dormand-Prince 5(4) pair and a PI step-size controller.

use crate::error::{Error, Result};

// Nodes and weights of the Dormand-Prince pair. The integrand does not
// depend on Y, so only c, the 5th-order weights and the error weights matter.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub rtol: f64,
    /// Absolute floor for the error scale, relative to the integrand sample magnitude.
    pub atol_factor: f64,
    pub min_step: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { rtol: 1e-9, atol_factor: 1e-3, min_step: 1e-14, initial_step: 0.125, max_steps: 100_000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrate a vector-valued `w` over `[a, b]`.
///
/// All components share one error scale, set by the largest of them. A
/// non-finite integrand value is reported as a contact.
pub fn integrate<const N: usize>(
    w: impl Fn(f64) -> [f64; N],
    a: f64,
    b: f64,
    opts: &QuadratureOptions,
) -> Result<([f64; N], QuadratureStats)> {
    let span = b - a;
    let mut stats = QuadratureStats { accepted: 0, rejected: 0, evaluations: 0 };
    if span == 0.0 {
        return Ok(([0.0; N], stats));
    }
    let probe = [w(a), w(a + 0.5 * span), w(b)];
    stats.evaluations += 3;
    if probe.iter().flatten().any(|v| !v.is_finite()) {
        return Err(singular_sample());
    }
    let magnitude = (0..N)
        .map(|c| probe.iter().map(|v| v[c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        / 3.0
        * span.abs();
    let atol = (opts.rtol * opts.atol_factor * magnitude).max(f64::MIN_POSITIVE);

    let mut y = [0.0; N];
    let mut p = a;
    let mut h = opts.initial_step * span;
    let mut k0 = probe[0];
    let mut err_old: f64 = 1e-4;
    let min_step = opts.min_step * span.abs();

    const SAFETY: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO: f64 = 0.2 - BETA * 0.75;

    for _ in 0..opts.max_steps {
        if (b - p) * span.signum() <= 0.0 {
            return Ok((y, stats));
        }
        if ((p + h) - b) * span.signum() > 0.0 {
            h = b - p;
        }
        let mut k = [[0.0; N]; 7];
        k[0] = k0;
        for (i, ki) in k.iter_mut().enumerate().skip(1) {
            *ki = w(p + C[i] * h);
            if ki.iter().any(|v| !v.is_finite()) {
                return Err(singular_sample());
            }
        }
        stats.evaluations += 6;
        let mut y_new = y;
        let mut err = [0.0; N];
        for i in 0..7 {
            for c in 0..N {
                y_new[c] += h * B5[i] * k[i][c];
                err[c] += h * E[i] * k[i][c];
            }
        }
        let size = y.iter().chain(&y_new).fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = atol + opts.rtol * size;
        let err_norm = err.iter().fold(0.0_f64, |m, e| m.max(e.abs())) / scale;
        if err_norm <= 1.0 {
            stats.accepted += 1;
            p += h;
            y = y_new;
            k0 = k[6];
            let fac = (err_norm.max(1e-10).powf(-EXPO) * err_old.powf(BETA) * SAFETY).clamp(0.2, 5.0);
            err_old = err_norm.max(1e-4);
            h *= fac;
        } else {
            stats.rejected += 1;
            h *= (err_norm.powf(-EXPO) * SAFETY).max(0.1);
        }
        if h.abs() < min_step && ((b - p) * span.signum()) > min_step {
            return Err(Error::Contact(format!(
                "quadrature step {h:e} below minimum at p = {p}; integrand is effectively singular"
            )));
        }
    }
    Err(Error::Contact("quadrature exceeded the maximum number of steps".into()))
}

fn singular_sample() -> Error {
    Error::Contact("integrand is infinite at a sample point".into())
}

/// Fixed-order Gauss-Legendre nodes and weights on [0, 1] via Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let weight = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * weight));
    }
    out
}
