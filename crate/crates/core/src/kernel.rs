//! The contour-integral velocity.
//!
//! For a target point `x` and a segment starting at node `x_i`,
//!
//! ```text
//! int_0^1 x_i'(p) / |x_i(p) - x|^alpha dp = I1 (t_i + mu_i n_i) + I2 n_i
//! I1 = int_0^1 dp / |r(p)|^alpha,   I2 = int_0^1 (2 beta p + 3 gamma p^2) / |r(p)|^alpha dp
//! ```
//!
//! Each segment is evaluated in one of four regimes: the target is the left
//! node (case 1), the right node (case 2), far away (series in `p`), or near
//! (adaptive quadrature).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SegmentGeometry, Spline};
use crate::quadrature::{self, QuadratureOptions};
use crate::series::{horner, pow_unit};
use crate::system::{NodeRef, PatchSystem};
use crate::vec2::Vec2;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Targets closer than this fraction of the segment length to one of its
/// nodes are treated as sitting on that node.
const COINCIDENCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub alpha: f64,
    /// Far-field series is tried when `d_x >= far_threshold * d (1 + |mu|)`.
    pub far_threshold: f64,
    pub series_order: usize,
    pub near_quad_tol: f64,
    /// A truncated series is accepted when its last terms are below this
    /// fraction of the sum of magnitudes.
    pub series_tail_tol: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { alpha: 0.7, far_threshold: 5.0, series_order: 10, near_quad_tol: 1e-9, series_tail_tol: 1e-10 }
    }
}

impl KernelParams {
    pub fn with_alpha(alpha: f64) -> Self {
        KernelParams { alpha, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha = {} must lie in (0, 1]", self.alpha)));
        }
        if self.series_order < 2 {
            return Err(Error::Domain("series_order must be at least 2".into()));
        }
        if !(self.far_threshold > 1.0) {
            return Err(Error::Domain("far_threshold must exceed 1".into()));
        }
        if !(self.near_quad_tol > 0.0 && self.series_tail_tol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn quadrature(&self) -> QuadratureOptions {
        QuadratureOptions { rtol: self.near_quad_tol, ..Default::default() }
    }
}

/// `Gamma(alpha/2) / (2^(1-alpha) Gamma(1 - alpha/2))`, the factor relating a
/// scalar jump to the coefficient of the contour integral.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    use statrs::function::gamma::gamma;
    Ok(gamma(alpha / 2.0) / (2f64.powf(1.0 - alpha) * gamma(1.0 - alpha / 2.0)))
}

/// Velocity at the rim point `(1, 0)` of the unit circle with unit jump,
/// nodes counterclockwise: `(0, a/(2-a) Gamma(1-a) / Gamma(1-a/2)^2)`.
/// Exact for the continuous curve, so it checks the whole discretization.
pub fn circle_rim_velocity(alpha: f64) -> Result<Vec2> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    use statrs::function::gamma::gamma;
    Ok(Vec2::new(0.0, alpha / (2.0 - alpha) * gamma(1.0 - alpha) / gamma(1.0 - alpha / 2.0).powi(2)))
}

/// Maclaurin coefficients of a kernel expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCoefficients(pub Vec<f64>);

impl SeriesCoefficients {
    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    /// Magnitude of the last coefficient relative to the sum of magnitudes.
    pub fn tail_ratio(&self) -> f64 {
        let total: f64 = self.0.iter().map(|x| x.abs()).sum();
        self.0[self.0.len() - 1].abs() / total
    }
}

/// Coefficients `c_n` of `(1 + u(p))^(-alpha/2)` with
/// `u = (2 mu beta p + (beta^2 + 2 mu gamma) p^2 + 2 beta gamma p^3 + gamma^2 p^4) / (1 + mu^2)`.
pub fn singular_series(seg: &SegmentGeometry, alpha: f64, order: usize) -> SeriesCoefficients {
    singular_series_coeffs(seg.mu, seg.beta, seg.gamma, alpha, order)
}

fn singular_series_coeffs(mu: f64, beta: f64, gamma: f64, alpha: f64, order: usize) -> SeriesCoefficients {
    let m2 = 1.0 + mu * mu;
    let u = [
        1.0,
        2.0 * mu * beta / m2,
        (beta * beta + 2.0 * mu * gamma) / m2,
        2.0 * beta * gamma / m2,
        gamma * gamma / m2,
    ];
    SeriesCoefficients(pow_unit(&u, -0.5 * alpha, order))
}

/// Squared distance `|base + p t + eta(p) n - target|^2` as a degree-6 polynomial in `p`.
fn distance_polynomial(seg: &SegmentGeometry, offset: Vec2) -> [f64; 7] {
    let (mu, beta, gamma) = (seg.mu, seg.beta, seg.gamma);
    let d2 = seg.length * seg.length;
    let et = offset.dot(seg.tangent);
    let en = offset.dot(seg.normal);
    [
        offset.norm_sq(),
        2.0 * (et + en * mu),
        2.0 * en * beta + d2 * (1.0 + mu * mu),
        2.0 * en * gamma + d2 * 2.0 * mu * beta,
        d2 * (beta * beta + 2.0 * mu * gamma),
        d2 * 2.0 * beta * gamma,
        d2 * gamma * gamma,
    ]
}

/// Maclaurin coefficients `a_n` of `(|r(p)|^2 / d_x^2)^(-alpha/2)` where
/// `offset = base - target` and `d_x = |offset|`. The integrated
/// coefficients are `g_n = a_n / (n + 1)`.
pub fn far_series(seg: &SegmentGeometry, offset: Vec2, alpha: f64, order: usize) -> SeriesCoefficients {
    let q = distance_polynomial(seg, offset);
    let inv = 1.0 / q[0];
    let v: [f64; 7] = std::array::from_fn(|k| if k == 0 { 1.0 } else { q[k] * inv });
    SeriesCoefficients(pow_unit(&v, -0.5 * alpha, order))
}

/// The pair of segment integrals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentIntegrals {
    pub i1: f64,
    pub i2: f64,
}

/// `int_0^1 P_k(p) |p t + eta(p) n|^(-alpha) dp` for two quadratic numerators
/// `P_k`, with the singularity at `p = 0`.
///
/// The kernel is `d^-alpha (1 + mu^2)^(-alpha/2) p^-alpha (1 + u(p))^(-alpha/2)`;
/// the series is integrated term by term on `[0, s]` and, when it does not
/// converge to tolerance on the whole interval, `[s, 1]` is integrated
/// adaptively.
fn singular_endpoint(
    mu: f64,
    beta: f64,
    gamma: f64,
    length: f64,
    numerators: [[f64; 3]; 2],
    params: &KernelParams,
) -> Result<[f64; 2]> {
    let alpha = params.alpha;
    for num in &numerators {
        if num[0] != 0.0 && alpha >= 1.0 {
            return Err(Error::Divergent(
                "endpoint integral with non-vanishing numerator diverges for alpha = 1".into(),
            ));
        }
    }
    let order = params.series_order;
    let c = singular_series_coeffs(mu, beta, gamma, alpha, order);
    let total: f64 = c.0.iter().map(|x| x.abs()).sum();
    let last = c.0[order].abs().max(c.0[order - 1].abs());
    let split = if last <= params.series_tail_tol * total {
        1.0
    } else {
        (params.series_tail_tol * total / last).powf(1.0 / order as f64).min(1.0)
    };

    let m2 = 1.0 + mu * mu;
    let prefactor = length.powf(-alpha) * m2.powf(-0.5 * alpha);
    let mut out = [0.0; 2];
    for (o, num) in out.iter_mut().zip(&numerators) {
        let mut acc = 0.0;
        for (n, &cn) in c.0.iter().enumerate() {
            for (k, &pk) in num.iter().enumerate() {
                if pk != 0.0 {
                    let e = (n + k) as f64 + 1.0 - alpha;
                    acc += cn * pk * split.powf(e) / e;
                }
            }
        }
        *o = prefactor * acc;
    }

    if split < 1.0 {
        // |p t + eta n|^2 = d^2 p^2 (1 + (mu + beta p + gamma p^2)^2)
        let poly = [m2, 2.0 * mu * beta, beta * beta + 2.0 * mu * gamma, 2.0 * beta * gamma, gamma * gamma];
        let d2 = length * length;
        let w = |p: f64| {
            let k = (d2 * p * p * horner(&poly, p)).powf(-0.5 * alpha);
            [horner(&numerators[0], p) * k, horner(&numerators[1], p) * k]
        };
        let (rest, _) = quadrature::integrate(w, split, 1.0, &params.quadrature())?;
        out[0] += rest[0];
        out[1] += rest[1];
    }
    Ok(out)
}

/// Target at the segment's first node.
pub fn segment_integral_case1(seg: &SegmentGeometry, params: &KernelParams) -> Result<SegmentIntegrals> {
    let [i1, i2] = singular_endpoint(
        seg.mu,
        seg.beta,
        seg.gamma,
        seg.length,
        [[1.0, 0.0, 0.0], [0.0, 2.0 * seg.beta, 3.0 * seg.gamma]],
        params,
    )?;
    Ok(SegmentIntegrals { i1, i2 })
}

/// Target at the segment's second node: substitute `p' = 1 - p`.
pub fn segment_integral_case2(seg: &SegmentGeometry, params: &KernelParams) -> Result<SegmentIntegrals> {
    let (b, g) = (seg.beta, seg.gamma);
    let r = seg.reversed();
    // 2 beta p + 3 gamma p^2 with p = 1 - p'
    let [i1, i2] = singular_endpoint(
        r.mu,
        r.beta,
        r.gamma,
        seg.length,
        [[1.0, 0.0, 0.0], [2.0 * b + 3.0 * g, -(2.0 * b + 6.0 * g), 3.0 * g]],
        params,
    )?;
    Ok(SegmentIntegrals { i1, i2 })
}

/// Normal-relevant part of a segment touching the target, in the form
/// `coefficient * n_i`. The tangential integral along the segment's own end
/// tangent is dropped; what is left is finite for alpha = 1.
fn touching_normal_part(seg: &SegmentGeometry, at_start: bool, params: &KernelParams) -> Result<f64> {
    let (b, g) = (seg.beta, seg.gamma);
    if at_start {
        let [_, i2] =
            singular_endpoint(seg.mu, b, g, seg.length, [[0.0; 3], [0.0, 2.0 * b, 3.0 * g]], params)?;
        Ok(i2)
    } else {
        // 2 beta (p - 1) + 3 gamma (p^2 - 1) with p = 1 - p'
        let r = seg.reversed();
        let [_, j2] = singular_endpoint(
            r.mu,
            r.beta,
            r.gamma,
            seg.length,
            [[0.0; 3], [0.0, -(2.0 * b + 6.0 * g), 3.0 * g]],
            params,
        )?;
        Ok(j2)
    }
}

/// Far-field series; `None` when the series has not converged to tolerance.
fn far_integrals(seg: &SegmentGeometry, offset: Vec2, params: &KernelParams) -> Option<SegmentIntegrals> {
    let alpha = params.alpha;
    let a = far_series(seg, offset, alpha, params.series_order);
    let g = SeriesCoefficients(a.0.iter().enumerate().map(|(n, an)| an / (n as f64 + 1.0)).collect());
    if g.tail_ratio() > params.series_tail_tol {
        return None;
    }
    let scale = offset.norm_sq().powf(-0.5 * alpha);
    let mut i1 = 0.0;
    let mut i2 = 0.0;
    for (n, &an) in a.0.iter().enumerate() {
        let n = n as f64;
        i1 += an / (n + 1.0);
        i2 += an * (2.0 * seg.beta / (n + 2.0) + 3.0 * seg.gamma / (n + 3.0));
    }
    Some(SegmentIntegrals { i1: scale * i1, i2: scale * i2 })
}

/// Far-field series evaluation. Fails when the series has not converged.
pub fn segment_integral_far(
    seg: &SegmentGeometry,
    base: Vec2,
    target: Vec2,
    params: &KernelParams,
) -> Result<SegmentIntegrals> {
    far_integrals(seg, base - target, params).ok_or_else(|| {
        Error::Domain("far-field series did not converge; the target is too close for the far regime".into())
    })
}

/// Adaptive quadrature of both integrals, the distance polynomial expanded
/// into monomials and evaluated by nested multiplication.
pub fn segment_integral_near(
    seg: &SegmentGeometry,
    base: Vec2,
    target: Vec2,
    params: &KernelParams,
) -> Result<SegmentIntegrals> {
    let q = distance_polynomial(seg, base - target);
    let half_alpha = 0.5 * params.alpha;
    let (b2, g3) = (2.0 * seg.beta, 3.0 * seg.gamma);
    let w = |p: f64| {
        let k = horner(&q, p).powf(-half_alpha);
        [k, p * (b2 + g3 * p) * k]
    };
    let ([i1, i2], _) = quadrature::integrate(w, 0.0, 1.0, &params.quadrature())?;
    Ok(SegmentIntegrals { i1, i2 })
}

/// Far or near, chosen by distance and series convergence.
pub fn segment_integral_auto(
    seg: &SegmentGeometry,
    base: Vec2,
    target: Vec2,
    params: &KernelParams,
) -> Result<SegmentIntegrals> {
    let offset = base - target;
    let reach = params.far_threshold * seg.length * (1.0 + seg.mu.abs());
    if offset.norm_sq() >= reach * reach {
        if let Some(r) = far_integrals(seg, offset, params) {
            return Ok(r);
        }
    }
    segment_integral_near(seg, base, target, params)
}

/// Which regime evaluated a segment; exposed for diagnostics and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    StartNode,
    EndNode,
    Far,
    Near,
}

/// Precomputed splines of every contour, shared by all targets of one
/// evaluation pass.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub splines: Vec<Spline>,
    pub strengths: Vec<f64>,
    pub params: KernelParams,
}

impl VelocityField {
    pub fn new(system: &PatchSystem) -> Self {
        VelocityField {
            splines: system.contours.iter().map(Spline::new).collect(),
            strengths: system.contours.iter().map(|c| c.strength).collect(),
            params: system.kernel,
        }
    }

    /// Full velocity `f(x)`; targets that coincide with nodes are handled by
    /// the endpoint expansions. Requires alpha < 1.
    pub fn velocity(&self, target: Vec2) -> Result<Vec2> {
        if self.params.alpha >= 1.0 {
            return Err(Error::Divergent("the full velocity diverges for alpha = 1; use the normal velocity".into()));
        }
        self.accumulate(target, false)
    }

    /// Full velocity without the alpha = 1 refusal, for points that are
    /// not nodes. A node coincidence at alpha = 1 fails as divergent.
    pub fn point_velocity(&self, target: Vec2) -> Result<Vec2> {
        self.accumulate(target, false)
    }

    /// Velocity with the tangential self-terms of segments touching the
    /// target dropped. Finite for alpha = 1; its normal component at the
    /// target equals that of the full velocity.
    pub fn reduced_velocity(&self, target: Vec2) -> Result<Vec2> {
        self.accumulate(target, true)
    }

    /// Normal projection at a node of the reduced velocity.
    pub fn normal_velocity(&self, at: NodeRef) -> Result<Vec2> {
        let spline = &self.splines[at.contour];
        let target = spline.nodes[at.node];
        let normal = spline.node_normal(at.node);
        let v = self.reduced_velocity(target)?;
        Ok(normal * v.dot(normal))
    }

    pub fn node_normal(&self, at: NodeRef) -> Vec2 {
        self.splines[at.contour].node_normal(at.node)
    }

    fn accumulate(&self, target: Vec2, reduced: bool) -> Result<Vec2> {
        let mut total = Vec2::ZERO;
        for (spline, &theta) in self.splines.iter().zip(&self.strengths) {
            let mut sum = Vec2::ZERO;
            let n = spline.len();
            for (i, seg) in spline.segments.iter().enumerate() {
                let base = spline.nodes[i];
                sum += self.segment_contribution(seg, base, spline.nodes[(i + 1) % n], target, reduced)?.0;
            }
            total += sum * (theta / TWO_PI);
        }
        Ok(total)
    }

    fn segment_contribution(
        &self,
        seg: &SegmentGeometry,
        base: Vec2,
        end: Vec2,
        target: Vec2,
        reduced: bool,
    ) -> Result<(Vec2, Regime)> {
        let p = &self.params;
        let touch = COINCIDENCE * seg.length;
        if (base - target).norm() <= touch {
            if reduced {
                return Ok((seg.normal * touching_normal_part(seg, true, p)?, Regime::StartNode));
            }
            let r = segment_integral_case1(seg, p)?;
            return Ok((combine(seg, r), Regime::StartNode));
        }
        if (end - target).norm() <= touch {
            if reduced {
                return Ok((seg.normal * touching_normal_part(seg, false, p)?, Regime::EndNode));
            }
            let r = segment_integral_case2(seg, p)?;
            return Ok((combine(seg, r), Regime::EndNode));
        }
        let offset = base - target;
        let reach = p.far_threshold * seg.length * (1.0 + seg.mu.abs());
        if offset.norm_sq() >= reach * reach {
            if let Some(r) = far_integrals(seg, offset, p) {
                return Ok((combine(seg, r), Regime::Far));
            }
        }
        let r = segment_integral_near(seg, base, target, p)?;
        Ok((combine(seg, r), Regime::Near))
    }

    /// Regime chosen for every segment of contour `k` relative to `target`.
    pub fn regimes(&self, k: usize, target: Vec2) -> Result<Vec<Regime>> {
        let spline = &self.splines[k];
        let n = spline.len();
        spline
            .segments
            .iter()
            .enumerate()
            .map(|(i, seg)| {
                self.segment_contribution(seg, spline.nodes[i], spline.nodes[(i + 1) % n], target, false)
                    .map(|(_, r)| r)
            })
            .collect()
    }

    /// Full velocity at every node, in node order, evaluated in parallel.
    pub fn all_node_velocities(&self) -> Result<Vec<Vec<Vec2>>> {
        let targets: Vec<Vec2> = self.splines.iter().flat_map(|s| s.nodes.iter().copied()).collect();
        let flat: Vec<Vec2> = targets.par_iter().map(|&x| self.velocity(x)).collect::<Result<_>>()?;
        Ok(self.unflatten(flat))
    }

    /// Normal velocity at every node, in node order, evaluated in parallel.
    pub fn all_normal_velocities(&self) -> Result<Vec<Vec<Vec2>>> {
        let refs = self.node_refs();
        let flat: Vec<Vec2> = refs.par_iter().map(|&r| self.normal_velocity(r)).collect::<Result<_>>()?;
        Ok(self.unflatten(flat))
    }

    pub fn node_refs(&self) -> Vec<NodeRef> {
        self.splines
            .iter()
            .enumerate()
            .flat_map(|(c, s)| (0..s.len()).map(move |node| NodeRef { contour: c, node }))
            .collect()
    }

    pub(crate) fn unflatten<T: Copy>(&self, flat: Vec<T>) -> Vec<Vec<T>> {
        let mut it = flat.into_iter();
        self.splines.iter().map(|s| it.by_ref().take(s.len()).collect()).collect()
    }
}

#[inline]
fn combine(seg: &SegmentGeometry, r: SegmentIntegrals) -> Vec2 {
    (seg.tangent + seg.normal * seg.mu) * r.i1 + seg.normal * r.i2
}

/// Velocity `f(target)` of the system. `location`, when given, must be the
/// node at `target`; coincidences with nodes are detected in any case.
pub fn node_velocity(system: &PatchSystem, target: Vec2, location: Option<NodeRef>) -> Result<Vec2> {
    check_location(system, target, location)?;
    VelocityField::new(system).velocity(target)
}

/// Normal-projected velocity at a contour node; valid for alpha = 1.
pub fn normal_velocity(system: &PatchSystem, location: NodeRef) -> Result<Vec2> {
    check_location(system, system.contours[location.contour].node(location.node), Some(location))?;
    VelocityField::new(system).normal_velocity(location)
}

fn check_location(system: &PatchSystem, target: Vec2, location: Option<NodeRef>) -> Result<()> {
    if let Some(at) = location {
        let c = system
            .contours
            .get(at.contour)
            .ok_or_else(|| Error::Domain(format!("no contour {}", at.contour)))?;
        if at.node >= c.len() || c.node(at.node) != target {
            return Err(Error::Domain(format!("target is not node {} of contour {}", at.node, at.contour)));
        }
    }
    Ok(())
}
