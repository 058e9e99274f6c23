//! Discrete contours and their piecewise-cubic interpolation.
//!
//! A contour is a closed, cyclically indexed list of nodes. Between node `j`
//! and node `j+1` the curve is
//!
//! ```text
//! x_j(p) = x_j + p t_j + eta_j(p) n_j,   eta_j(p) = mu p + beta p^2 + gamma p^3
//! ```
//!
//! with `t_j = x_{j+1} - x_j`, `n_j = perp(t_j)` and the cubic coefficients
//! built from the three-point curvatures at both ends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// Gauss-Legendre nodes and weights on [0, 1], four points.
const GL4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_9, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

/// Curvature of the circle through three points.
///
/// The sign is positive when the polyline turns counter-clockwise. Collinear
/// input gives zero. The points must be pairwise distinct.
pub fn local_curvature(prev: Vec2, x: Vec2, next: Vec2) -> f64 {
    let t0 = x - prev;
    let t1 = next - x;
    let cross = t0.cross(t1);
    if cross == 0.0 {
        return 0.0;
    }
    let tangent = t1 * t0.norm_sq() + t0 * t1.norm_sq();
    2.0 * cross / tangent.norm()
}

/// Curvature at every node of a closed polyline.
pub fn node_curvatures(nodes: &[Vec2]) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| local_curvature(nodes[(j + n - 1) % n], nodes[j], nodes[(j + 1) % n]))
        .collect()
}

/// A closed contour with a uniform scalar strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub id: usize,
    pub strength: f64,
    nodes: Vec<Vec2>,
}

impl Contour {
    pub const MIN_NODES: usize = 4;

    pub fn new(id: usize, strength: f64, nodes: Vec<Vec2>) -> Result<Self> {
        if nodes.len() < Self::MIN_NODES {
            return Err(Error::InvalidContour(format!(
                "contour {id} has {} nodes, at least {} required",
                nodes.len(),
                Self::MIN_NODES
            )));
        }
        if !strength.is_finite() {
            return Err(Error::InvalidContour(format!("contour {id} has non-finite strength")));
        }
        let n = nodes.len();
        for j in 0..n {
            if !nodes[j].is_finite() {
                return Err(Error::InvalidContour(format!("contour {id}: node {j} is not finite")));
            }
            if nodes[j] == nodes[(j + 1) % n] {
                return Err(Error::InvalidContour(format!(
                    "contour {id}: nodes {j} and {} coincide",
                    (j + 1) % n
                )));
            }
        }
        Ok(Contour { id, strength, nodes })
    }

    /// Same id and strength, new node positions.
    pub fn with_nodes(&self, nodes: Vec<Vec2>) -> Result<Self> {
        Contour::new(self.id, self.strength, nodes)
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, j: usize) -> Vec2 {
        self.nodes[j % self.nodes.len()]
    }

    pub fn curvatures(&self) -> Vec<f64> {
        node_curvatures(&self.nodes)
    }

    pub fn segment_geometry(&self, j: usize) -> SegmentGeometry {
        let n = self.nodes.len();
        let j = j % n;
        let k0 = local_curvature(self.node(j + n - 1), self.node(j), self.node(j + 1));
        let k1 = local_curvature(self.node(j), self.node(j + 1), self.node(j + 2));
        SegmentGeometry::new(self.node(j), self.node(j + 1), k0, k1)
    }

    pub fn spline(&self) -> Spline {
        Spline::new(self)
    }

    pub fn area(&self) -> ContourArea {
        self.spline().area()
    }

    /// Shortest chord over all segments.
    pub fn min_chord(&self) -> f64 {
        let n = self.nodes.len();
        (0..n)
            .map(|j| self.nodes[j].distance(self.nodes[(j + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn perimeter_polygon(&self) -> f64 {
        let n = self.nodes.len();
        (0..n).map(|j| self.nodes[j].distance(self.nodes[(j + 1) % n])).sum()
    }

    pub fn map_nodes(&self, f: impl Fn(Vec2) -> Vec2) -> Result<Self> {
        self.with_nodes(self.nodes.iter().map(|&p| f(p)).collect())
    }

    /// Traverse the nodes in the opposite direction, keeping node 0 first.
    pub fn reversed(&self) -> Self {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        nodes.push(self.nodes[0]);
        nodes.extend(self.nodes[1..].iter().rev());
        Contour { id: self.id, strength: self.strength, nodes }
    }
}

/// Interpolation data of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGeometry {
    pub tangent: Vec2,
    pub normal: Vec2,
    pub length: f64,
    pub mu: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa_start: f64,
    pub kappa_end: f64,
}

impl SegmentGeometry {
    /// Cubic through `a` and `b` with end curvatures `k0`, `k1`.
    ///
    /// `beta = d k0 / 2` is the only value for which `eta(1) = 0`.
    pub fn new(a: Vec2, b: Vec2, k0: f64, k1: f64) -> Self {
        let tangent = b - a;
        let d = tangent.norm();
        SegmentGeometry {
            tangent,
            normal: tangent.perp(),
            length: d,
            mu: -d * k0 / 3.0 - d * k1 / 6.0,
            beta: 0.5 * d * k0,
            gamma: d * (k1 - k0) / 6.0,
            kappa_start: k0,
            kappa_end: k1,
        }
    }

    /// The straight chord from `a` to `b`.
    pub fn straight(a: Vec2, b: Vec2) -> Self {
        SegmentGeometry::new(a, b, 0.0, 0.0)
    }

    #[inline]
    pub fn eta(&self, p: f64) -> f64 {
        p * (self.mu + p * (self.beta + p * self.gamma))
    }

    #[inline]
    pub fn eta_prime(&self, p: f64) -> f64 {
        self.mu + p * (2.0 * self.beta + 3.0 * self.gamma * p)
    }

    /// Point on the segment starting at `base`.
    #[inline]
    pub fn eval(&self, base: Vec2, p: f64) -> Vec2 {
        base + self.tangent * p + self.normal * self.eta(p)
    }

    /// dx/dp.
    #[inline]
    pub fn derivative(&self, p: f64) -> Vec2 {
        self.tangent + self.normal * self.eta_prime(p)
    }

    pub fn start_tangent(&self) -> Vec2 {
        self.derivative(0.0)
    }

    pub fn end_tangent(&self) -> Vec2 {
        self.derivative(1.0)
    }

    /// Bound on |eta| over [0, 1].
    pub fn max_deflection(&self) -> f64 {
        self.mu.abs() + self.beta.abs() + self.gamma.abs()
    }

    /// The same curve traversed from its end to its start.
    pub fn reversed(&self) -> Self {
        SegmentGeometry {
            tangent: -self.tangent,
            normal: -self.normal,
            length: self.length,
            mu: self.mu + 2.0 * self.beta + 3.0 * self.gamma,
            beta: -self.beta - 3.0 * self.gamma,
            gamma: self.gamma,
            kappa_start: -self.kappa_end,
            kappa_end: -self.kappa_start,
        }
    }

    /// (1/2) * integral of (x dy - y dx) along the segment.
    pub fn area_contribution(&self, base: Vec2) -> f64 {
        GL4.iter()
            .map(|&(p, w)| {
                let x = self.eval(base, p);
                let dx = self.derivative(p);
                w * x.cross(dx)
            })
            .sum::<f64>()
            * 0.5
    }
}

/// Absolute area and orientation (+1 counter-clockwise, -1 clockwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourArea {
    pub area: f64,
    pub orientation: f64,
}

impl ContourArea {
    pub fn signed(&self) -> f64 {
        self.area * self.orientation
    }
}

/// A contour with its segment data precomputed.
#[derive(Debug, Clone)]
pub struct Spline {
    pub nodes: Vec<Vec2>,
    pub curvature: Vec<f64>,
    pub segments: Vec<SegmentGeometry>,
}

impl Spline {
    pub fn new(contour: &Contour) -> Self {
        Self::from_nodes(contour.nodes().to_vec())
    }

    pub fn from_nodes(nodes: Vec<Vec2>) -> Self {
        let curvature = node_curvatures(&nodes);
        Self::with_curvature(nodes, curvature)
    }

    /// Straight chords between nodes (all curvatures zero).
    pub fn polygonal(contour: &Contour) -> Self {
        let nodes = contour.nodes().to_vec();
        let curvature = vec![0.0; nodes.len()];
        Self::with_curvature(nodes, curvature)
    }

    fn with_curvature(nodes: Vec<Vec2>, curvature: Vec<f64>) -> Self {
        let n = nodes.len();
        let segments = (0..n)
            .map(|j| {
                let k = (j + 1) % n;
                SegmentGeometry::new(nodes[j], nodes[k], curvature[j], curvature[k])
            })
            .collect();
        Spline { nodes, curvature, segments }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn eval(&self, j: usize, p: f64) -> Vec2 {
        self.segments[j].eval(self.nodes[j], p)
    }

    /// Evaluate at a global parameter `s`: segment `floor(s)` (cyclic), local `p = frac(s)`.
    pub fn eval_global(&self, s: f64) -> Vec2 {
        let n = self.nodes.len() as f64;
        let s = s.rem_euclid(n);
        let j = (s.floor() as usize).min(self.nodes.len() - 1);
        self.eval(j, s - j as f64)
    }

    pub fn area(&self) -> ContourArea {
        let signed: f64 = self
            .segments
            .iter()
            .zip(&self.nodes)
            .map(|(seg, &base)| seg.area_contribution(base))
            .sum();
        ContourArea { area: signed.abs(), orientation: if signed < 0.0 { -1.0 } else { 1.0 } }
    }

    /// Unit tangent at node `j`: bisector of the two one-sided spline tangents.
    pub fn node_tangent(&self, j: usize) -> Vec2 {
        let n = self.nodes.len();
        let incoming = self.segments[(j + n - 1) % n].end_tangent().normalized();
        let outgoing = self.segments[j].start_tangent().normalized();
        (incoming + outgoing).normalized()
    }

    /// Unit normal at node `j` (left of the direction of travel).
    pub fn node_normal(&self, j: usize) -> Vec2 {
        self.node_tangent(j).perp()
    }

    /// Center and radius of a disc containing segment `j`.
    pub fn bounding_disc(&self, j: usize) -> (Vec2, f64) {
        let seg = &self.segments[j];
        let center = self.nodes[j] + seg.tangent * 0.5;
        (center, seg.length * (0.5 + seg.max_deflection()))
    }

    /// Distance from `x` to the interpolated curve.
    pub fn point_distance(&self, x: Vec2) -> f64 {
        let mut best = self.nodes.iter().map(|&y| y.distance(x)).fold(f64::INFINITY, f64::min);
        for j in 0..self.len() {
            let (c, r) = self.bounding_disc(j);
            if c.distance(x) - r >= best {
                continue;
            }
            let m = SAMPLES_PER_SEGMENT;
            let k = (0..=m)
                .min_by(|&a, &b| {
                    let da = self.eval(j, a as f64 / m as f64).distance(x);
                    let db = self.eval(j, b as f64 / m as f64).distance(x);
                    da.total_cmp(&db)
                })
                .unwrap_or(0);
            let lo = (k as f64 - 1.0).max(0.0) / m as f64;
            let hi = (k as f64 + 1.0).min(m as f64) / m as f64;
            let (_, d) = golden_section(|p| self.eval(j, p).distance(x), lo, hi, 1e-14);
            best = best.min(d);
        }
        best
    }
}

/// Shortest distance between two contours with its witness points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestApproach {
    pub distance: f64,
    pub on_a: Vec2,
    pub on_b: Vec2,
}

const SAMPLES_PER_SEGMENT: usize = 8;

pub fn min_distance(a: &Contour, b: &Contour) -> ClosestApproach {
    min_distance_splines(&Spline::new(a), &Spline::new(b))
}

/// Coarse sampling of every candidate segment pair, then alternating
/// golden-section refinement in the two curve parameters.
pub fn min_distance_splines(a: &Spline, b: &Spline) -> ClosestApproach {
    let m = SAMPLES_PER_SEGMENT;
    let sample = |s: &Spline| -> Vec<Vec2> {
        (0..s.len())
            .flat_map(|j| (0..m).map(move |k| (j, k as f64 / m as f64)))
            .map(|(j, p)| s.eval(j, p))
            .collect()
    };
    let pa = sample(a);
    let pb = sample(b);

    // Node-to-node distances give an upper bound to prune segment pairs.
    let mut best = f64::INFINITY;
    let mut best_pair = (0usize, 0usize);
    for (i, &x) in a.nodes.iter().enumerate() {
        for (j, &y) in b.nodes.iter().enumerate() {
            let d = x.distance(y);
            if d < best {
                best = d;
                best_pair = (i * m, j * m);
            }
        }
    }
    let discs_b: Vec<(Vec2, f64)> = (0..b.len()).map(|j| b.bounding_disc(j)).collect();
    for i in 0..a.len() {
        let (ca, ra) = a.bounding_disc(i);
        for (j, &(cb, rb)) in discs_b.iter().enumerate() {
            if ca.distance(cb) - ra - rb >= best {
                continue;
            }
            for u in i * m..(i + 1) * m {
                for v in j * m..(j + 1) * m {
                    let d = pa[u].distance(pb[v]);
                    if d < best {
                        best = d;
                        best_pair = (u, v);
                    }
                }
            }
        }
    }

    let mut sa = best_pair.0 as f64 / m as f64;
    let mut sb = best_pair.1 as f64 / m as f64;
    let mut xa = a.eval_global(sa);
    let mut xb = b.eval_global(sb);
    let mut dist = xa.distance(xb);
    let mut width = 1.0 / m as f64;
    for _ in 0..200 {
        if dist == 0.0 {
            break;
        }
        let (na, _) = golden_section(|s| a.eval_global(s).distance(xb), sa - width, sa + width, 1e-13);
        let new_xa = a.eval_global(na);
        let (nb, _) = golden_section(|s| b.eval_global(s).distance(new_xa), sb - width, sb + width, 1e-13);
        let new_xb = b.eval_global(nb);
        let new_dist = new_xa.distance(new_xb);
        let moved = (na - sa).abs().max((nb - sb).abs());
        if new_dist <= dist {
            sa = na;
            sb = nb;
            xa = new_xa;
            xb = new_xb;
        }
        let converged = dist - new_dist <= 1e-12 * dist && moved < 1e-10;
        dist = dist.min(new_dist);
        if converged {
            break;
        }
        width = (4.0 * moved).clamp(1e-9, 1.0 / m as f64);
    }
    ClosestApproach { distance: xa.distance(xb), on_a: xa, on_b: xb }
}

/// Minimize a unimodal function on [lo, hi]; returns (argmin, min).
pub(crate) fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    // 160 reductions shrink any bracket below double resolution.
    for _ in 0..160 {
        if hi - lo <= tol {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Regular polygon of `n` nodes on a circle, starting at angle `phase`, counter-clockwise.
pub fn circle_nodes(center: Vec2, radius: f64, n: usize, phase: f64) -> Vec<Vec2> {
    (0..n)
        .map(|k| center + Vec2::from_polar(radius, phase + 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect()
}

/// Nodes on an axis-aligned ellipse, uniform in the angular parameter.
pub fn ellipse_nodes(center: Vec2, a: f64, b: f64, n: usize, phase: f64) -> Vec<Vec2> {
    (0..n)
        .map(|k| {
            let th = phase + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            center + Vec2::new(a * th.cos(), b * th.sin())
        })
        .collect()
}
