//! Reference computations shared by the integration tests. Nothing here
//! calls into the kernel, so results can be compared against it.

#![allow(dead_code)]

use alpha_patches::{Spline, Vec2};
use statrs::function::gamma::gamma;

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WEIGHTS[7] * fc;
    let mut g = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        k += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive 7/15-point Gauss-Kronrod quadrature: the interval with
/// the largest error estimate is bisected until the summed estimate is below `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (v, e) = kronrod(f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut total = e;
    for _ in 0..5000 {
        if total <= tol {
            break;
        }
        let worst = (0..parts.len()).max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3)).unwrap();
        let (lo, hi, _, old) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod(f, lo, mid);
        let (v2, e2) = kronrod(f, mid, hi);
        total += e1 + e2 - old;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    parts.iter().map(|p| p.2).sum()
}

/// y-velocity at (1, 0) of the unit disc with unit jump, nodes counterclockwise,
/// from the Gamma-function closed form.
pub fn circle_closed_form(alpha: f64) -> f64 {
    alpha / (2.0 - alpha) * gamma(1.0 - alpha) / gamma(1.0 - alpha / 2.0).powi(2)
}

/// The same value through the Beta function `1 / ((1 - a) B((4 - a)/2, -a/2))`.
pub fn circle_beta_form(alpha: f64) -> f64 {
    let (p, q) = ((4.0 - alpha) / 2.0, -alpha / 2.0);
    let beta = gamma(p) * gamma(q) / gamma(p + q);
    -1.0 / ((1.0 - alpha) * beta)
}

/// The same value by quadrature of `(1/pi) int_0^pi cos(phi) (2 sin(phi/2))^-a dphi`
/// after `phi = pi s^k`, `k = 1/(1-a)`, which removes the endpoint singularity.
pub fn circle_quadrature(alpha: f64) -> f64 {
    let k = 1.0 / (1.0 - alpha);
    let pi = std::f64::consts::PI;
    let f = |s: f64| {
        if s == 0.0 {
            return pi.powf(1.0 - alpha) * k;
        }
        let phi = pi * s.powf(k);
        phi.cos() * (2.0 * (0.5 * phi).sin()).powf(-alpha) * pi * k * s.powf(k - 1.0)
    };
    integrate(&f, 0.0, 1.0, 1e-14) / pi
}

/// Points every `1/m` of a parameter step along each segment of a spline.
pub fn dense(s: &Spline, m: usize) -> Vec<Vec2> {
    (0..s.len()).flat_map(|j| (0..m).map(move |i| s.eval(j, i as f64 / m as f64))).collect()
}

pub fn point_to_polyline(x: Vec2, poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let ab = b - a;
            let t = ((x - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
            (x - (a + ab * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Hausdorff distance between two closed splines: points at 8 per segment of
/// one curve against a 32-per-segment polyline of the other, so the chord
/// error of the polyline stays far below the distances of interest.
pub fn hausdorff(a: &Spline, b: &Spline) -> f64 {
    let one = |p: &Spline, q: &Spline| {
        let poly = dense(q, 32);
        dense(p, 8).into_iter().map(|x| point_to_polyline(x, &poly)).fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}
