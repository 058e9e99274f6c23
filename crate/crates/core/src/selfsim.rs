//! Self-similar variables `y = (t* - t)^(-delta) (x - x*)`, `tau = -log(t* - t)`
//! with the collapse point fixed at the origin.
//!
//! In these variables the nodes move with
//! `F_j = delta y_j + f(y_j) - f(0)`, where `f` is the physical velocity
//! of the rescaled contours.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::rk4_step;
use crate::geometry::Contour;
use crate::kernel::VelocityField;
use crate::redistribute::{redistribute, RedistributionParams};
use crate::system::{Mode, NodeRef, PatchSystem};
use crate::vec2::Vec2;

/// Relative distance below which the origin counts as lying on a contour.
const ON_CONTOUR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleMap {
    pub t_star: f64,
    /// Position of the collapse point at the instant being rescaled.
    pub x_star: Vec2,
    pub delta: f64,
}

impl RescaleMap {
    pub fn new(t_star: f64, x_star: Vec2, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1]")));
        }
        if !t_star.is_finite() || !x_star.is_finite() {
            return Err(Error::Domain("t* and x* must be finite".into()));
        }
        Ok(RescaleMap { t_star, x_star, delta: 1.0 / alpha })
    }

    pub fn tau(&self, t: f64) -> Result<f64> {
        if !(t < self.t_star) {
            return Err(Error::Domain(format!("t = {t} is not before the collapse time {}", self.t_star)));
        }
        Ok(-(self.t_star - t).ln())
    }

    pub fn t(&self, tau: f64) -> f64 {
        self.t_star - (-tau).exp()
    }

    /// Length factor `(t* - t)^delta = exp(-delta tau)`.
    pub fn length_factor(&self, tau: f64) -> f64 {
        (-self.delta * tau).exp()
    }
}

/// Map physical contours at time `t` to rescaled contours; returns them with `tau`.
pub fn rescale_physical_to_selfsim(contours: &[Contour], t: f64, map: &RescaleMap) -> Result<(Vec<Contour>, f64)> {
    let tau = map.tau(t)?;
    let inv = 1.0 / map.length_factor(tau);
    let out = contours
        .iter()
        .map(|c| c.map_nodes(|x| (x - map.x_star) * inv))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, tau))
}

/// Inverse of [`rescale_physical_to_selfsim`]: rescaled contours at `tau` to
/// physical contours, returned with `t`.
pub fn rescale_selfsim_to_physical(contours: &[Contour], tau: f64, map: &RescaleMap) -> Result<(Vec<Contour>, f64)> {
    if !tau.is_finite() {
        return Err(Error::Domain("tau must be finite".into()));
    }
    let s = map.length_factor(tau);
    let out = contours
        .iter()
        .map(|c| c.map_nodes(|y| map.x_star + y * s))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, map.t(tau)))
}

impl PatchSystem {
    /// The same state in self-similar variables.
    pub fn to_selfsimilar(&self, map: &RescaleMap) -> Result<PatchSystem> {
        if self.mode != Mode::Physical {
            return Err(Error::Domain("system is already in self-similar variables".into()));
        }
        check_delta(self, map)?;
        let (contours, tau) = rescale_physical_to_selfsim(&self.contours, self.time, map)?;
        PatchSystem::new(Mode::SelfSimilar, tau, contours, self.kernel)
    }

    /// The same state in physical variables.
    pub fn to_physical(&self, map: &RescaleMap) -> Result<PatchSystem> {
        if self.mode != Mode::SelfSimilar {
            return Err(Error::Domain("system is already in physical variables".into()));
        }
        check_delta(self, map)?;
        let (contours, t) = rescale_selfsim_to_physical(&self.contours, self.time, map)?;
        PatchSystem::new(Mode::Physical, t, contours, self.kernel)
    }
}

fn check_delta(system: &PatchSystem, map: &RescaleMap) -> Result<()> {
    if (system.delta() - map.delta).abs() > 1e-12 * map.delta {
        return Err(Error::Domain(format!("map delta {} does not match system delta {}", map.delta, system.delta())));
    }
    Ok(())
}

/// `f(0)`, refusing when the origin sits on a contour away from its nodes.
fn origin_velocity(field: &VelocityField) -> Result<Vec2> {
    for (k, s) in field.splines.iter().enumerate() {
        let scale = s.nodes.iter().fold(0.0_f64, |m, x| m.max(x.norm())).max(f64::MIN_POSITIVE);
        let on_node = s.nodes.iter().any(|x| x.norm() <= ON_CONTOUR * scale);
        if !on_node && s.point_distance(Vec2::ZERO) <= ON_CONTOUR * scale {
            return Err(Error::Domain(format!(
                "the origin lies on contour {k} between nodes; the rescaled field is undefined there"
            )));
        }
    }
    field.point_velocity(Vec2::ZERO)
}

/// Rescaled field at every node, in node order. `f(0)` is evaluated once.
/// For alpha = 1 only normal components are assembled.
pub(crate) fn rescaled_velocities(system: &PatchSystem, field: &VelocityField) -> Result<Vec<Vec<Vec2>>> {
    if system.mode != Mode::SelfSimilar {
        return Err(Error::Domain("rescaled velocity requires self-similar mode".into()));
    }
    let f0 = origin_velocity(field)?;
    let delta = system.delta();
    let refs = field.node_refs();
    let normal_only = system.alpha() >= 1.0;
    let flat: Vec<Vec2> = refs
        .par_iter()
        .map(|&r| {
            let y = field.splines[r.contour].nodes[r.node];
            if normal_only {
                let n = field.node_normal(r);
                let v = y * delta + field.reduced_velocity(y)? - f0;
                Ok(n * v.dot(n))
            } else {
                Ok(y * delta + field.velocity(y)? - f0)
            }
        })
        .collect::<Result<_>>()?;
    Ok(field.unflatten(flat))
}

/// `F` at one node of a self-similar system.
pub fn rescaled_velocity(system: &PatchSystem, at: NodeRef) -> Result<Vec2> {
    if system.mode != Mode::SelfSimilar {
        return Err(Error::Domain("rescaled velocity requires self-similar mode".into()));
    }
    let c = system
        .contours
        .get(at.contour)
        .filter(|c| at.node < c.len())
        .ok_or_else(|| Error::Domain(format!("no node {} on contour {}", at.node, at.contour)))?;
    let field = VelocityField::new(system);
    let f0 = origin_velocity(&field)?;
    let y = c.node(at.node);
    if system.alpha() >= 1.0 {
        let n = field.node_normal(at);
        let v = y * system.delta() + field.reduced_velocity(y)? - f0;
        Ok(n * v.dot(n))
    } else {
        Ok(y * system.delta() + field.velocity(y)? - f0)
    }
}

/// Largest normal component of `F` over the nodes selected by `keep`.
pub fn max_normal_speed(system: &PatchSystem, keep: impl Fn(Vec2) -> bool + Sync) -> Result<f64> {
    let field = VelocityField::new(system);
    let v = rescaled_velocities(system, &field)?;
    let mut worst = 0.0_f64;
    for (k, vc) in v.iter().enumerate() {
        for (j, &vj) in vc.iter().enumerate() {
            let y = field.splines[k].nodes[j];
            if keep(y) {
                let n = field.node_normal(NodeRef { contour: k, node: j });
                worst = worst.max(vj.dot(n).abs());
            }
        }
    }
    Ok(worst)
}

/// Shape change added to the wedge profile `|x|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    None,
    /// Profile `sqrt(x^2 + a^2)`: a smooth apex at height `a`, approaching the wedge far out.
    Rounded { amplitude: f64 },
    /// Profile `|x| + a exp(-(x/w)^2)`.
    Bump { amplitude: f64, width: f64 },
    /// A seeded sum of `modes` Gaussian bumps with amplitudes in `[-a, a]`
    /// and centers within two widths of the apex, drawn separately per curve.
    /// Without a seed the run's seed is used (seed 0 when there is none).
    Random {
        amplitude: f64,
        width: f64,
        modes: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WedgeSpec {
    /// The arms are truncated at `|x| = x_max`.
    pub x_max: f64,
    /// Rotation about the origin, in radians.
    pub rotation: f64,
    pub perturbation: Perturbation,
    /// Node spacing at the apex.
    pub apex_spacing: f64,
    /// Ratio between consecutive spacings along the arms.
    pub grading: f64,
    /// Largest spacing, also used along the closure.
    pub max_spacing: f64,
    pub theta: f64,
    /// Continue the arms beyond `x_max` up to this abscissa with spacing
    /// growing without bound, before closing. Reduces the truncation error
    /// near the apex at small cost in nodes.
    pub far_extent: Option<f64>,
    /// Extra rotation of the upper curve alone. A positive tilt pushes its
    /// left arm across the line `y = -x`, so the pair no longer sits in
    /// opposite quadrants of the wedge.
    pub tilt: f64,
}

impl Default for WedgeSpec {
    fn default() -> Self {
        WedgeSpec {
            x_max: 20.0,
            rotation: 0.0,
            perturbation: Perturbation::None,
            apex_spacing: 0.02,
            grading: 1.05,
            max_spacing: 1.0,
            theta: -1.0,
            far_extent: None,
            tilt: 0.0,
        }
    }
}

/// The two wedge contours and the closure used to make them closed curves.
#[derive(Debug, Clone, PartialEq)]
pub struct Wedge {
    pub upper: Contour,
    pub lower: Contour,
    /// Every contour is closed by a rectangle reaching `closure_height` from the x axis
    /// (`2 x_max`, or twice the far extent, behind the arm ends).
    pub closure_height: f64,
    pub spec: WedgeSpec,
}

type Profile = Box<dyn Fn(f64) -> f64>;

fn profiles(p: &Perturbation) -> Result<(Profile, Profile)> {
    Ok(match *p {
        Perturbation::None => (Box::new(f64::abs), Box::new(f64::abs)),
        Perturbation::Rounded { amplitude: a } => {
            if !(a >= 0.0) {
                return Err(Error::Domain(format!("rounded apex height {a} must be nonnegative")));
            }
            (Box::new(move |x: f64| x.hypot(a)), Box::new(move |x: f64| x.hypot(a)))
        }
        Perturbation::Bump { amplitude: a, width: w } => {
            if !(w > 0.0) || !a.is_finite() {
                return Err(Error::Domain("bump needs a finite amplitude and positive width".into()));
            }
            let f = move |x: f64| x.abs() + a * (-(x / w).powi(2)).exp();
            (Box::new(f), Box::new(f))
        }
        Perturbation::Random { amplitude: a, width: w, modes, seed } => {
            if !(w > 0.0) || !a.is_finite() {
                return Err(Error::Domain("random perturbation needs a finite amplitude and positive width".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            let mut draw = || -> Vec<(f64, f64)> {
                (0..modes).map(|_| (rng.gen_range(-a..=a), rng.gen_range(-2.0 * w..=2.0 * w))).collect()
            };
            let (up, low) = (draw(), draw());
            let make = move |bumps: Vec<(f64, f64)>| -> Profile {
                Box::new(move |x: f64| {
                    x.abs() + bumps.iter().map(|&(amp, c)| amp * (-((x - c) / w).powi(2)).exp()).sum::<f64>()
                })
            };
            (make(up), make(low))
        }
    })
}

/// Abscissae `0 = x_0 < x_1 < ... < x_K = x_max` with spacing (measured
/// along the 45 degree arm) growing geometrically from the apex.
fn graded_abscissae(spec: &WedgeSpec) -> Vec<f64> {
    let mut xs = vec![0.0];
    let mut h = spec.apex_spacing;
    let mut x = 0.0;
    loop {
        x += h / std::f64::consts::SQRT_2;
        if x >= spec.x_max {
            break;
        }
        xs.push(x);
        h = (h * spec.grading).min(spec.max_spacing);
    }
    // Keep the final gap from being much shorter than its neighbor.
    if xs.len() > 2 && spec.x_max - xs[xs.len() - 1] < 0.5 * (xs[xs.len() - 1] - xs[xs.len() - 2]) {
        xs.pop();
    }
    xs.push(spec.x_max);
    if let Some(far) = spec.far_extent.filter(|&f| f > spec.x_max) {
        let mut x = spec.x_max;
        loop {
            h *= spec.grading;
            x += h / std::f64::consts::SQRT_2;
            if x >= far {
                break;
            }
            xs.push(x);
        }
        xs.push(far);
    }
    xs
}

fn segment_points(a: Vec2, b: Vec2, spacing: f64) -> Vec<Vec2> {
    let n = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
    (1..n).map(|k| a + (b - a) * (k as f64 / n as f64)).collect()
}

/// Nodes of a contour above the profile `y = h(x)`: apex first, right arm,
/// closure rectangle, left arm. Counterclockwise.
fn upper_nodes(h: &dyn Fn(f64) -> f64, xs: &[f64], top: f64, spacing: f64) -> Vec<Vec2> {
    let x_max = xs[xs.len() - 1];
    let mut nodes: Vec<Vec2> = xs.iter().map(|&x| Vec2::new(x, h(x))).collect();
    let right_top = Vec2::new(x_max, top);
    let left_top = Vec2::new(-x_max, top);
    let right_end = nodes[nodes.len() - 1];
    let left_end = Vec2::new(-x_max, h(-x_max));
    nodes.extend(segment_points(right_end, right_top, spacing));
    nodes.push(right_top);
    nodes.extend(segment_points(right_top, left_top, spacing));
    nodes.push(left_top);
    nodes.extend(segment_points(left_top, left_end, spacing));
    nodes.extend(xs[1..].iter().rev().map(|&x| Vec2::new(-x, h(-x))));
    nodes
}

/// The wedge pair `y = |x|`, `y = -|x|` truncated at `|x| = x_max`, each
/// closed by a rectangle `2 x_max` deep behind its arms, optionally perturbed
/// and rotated about the origin. Node 0 of both contours is the apex.
pub fn make_wedge(spec: &WedgeSpec) -> Result<Wedge> {
    if !(spec.x_max > 0.0) {
        return Err(Error::Domain(format!("x_max = {} must be positive", spec.x_max)));
    }
    if !(spec.apex_spacing > 0.0 && spec.max_spacing >= spec.apex_spacing && spec.grading >= 1.0) {
        return Err(Error::Domain("wedge spacing must satisfy 0 < apex_spacing <= max_spacing, grading >= 1".into()));
    }
    if !spec.rotation.is_finite() || !spec.theta.is_finite() {
        return Err(Error::Domain("rotation and theta must be finite".into()));
    }
    if !(spec.tilt.abs() <= 0.25) {
        return Err(Error::Domain(format!("tilt = {} must lie in [-0.25, 0.25]", spec.tilt)));
    }
    let (hu, hl) = profiles(&spec.perturbation)?;
    let xs = graded_abscissae(spec);

    // The upper curve must stay on or above the lower one everywhere.
    let probe = (0..=4000).map(|k| spec.x_max * (k as f64 / 2000.0 - 1.0));
    for x in probe.chain(xs.iter().flat_map(|&x| [x, -x])) {
        if hu(x) + hl(x) < -1e-14 {
            return Err(Error::Domain(format!("perturbation makes the wedge curves cross near x = {x:.4}")));
        }
    }
    let height = |h: &dyn Fn(f64) -> f64| xs.iter().flat_map(|&x| [h(x), h(-x)]).fold(f64::MIN, f64::max);
    let reach = xs[xs.len() - 1];
    let top = height(&*hu).max(height(&*hl)) + 2.0 * reach;
    let last_gap = std::f64::consts::SQRT_2 * (reach - xs[xs.len() - 2]);
    let side = spec.max_spacing.max(last_gap);

    let rot = |v: Vec2| v.rotated(spec.rotation);
    let upper: Vec<Vec2> = upper_nodes(&*hu, &xs, top, side).into_iter().map(|v| rot(v.rotated(spec.tilt))).collect();
    let lower_up = upper_nodes(&*hl, &xs, top, side);
    // Mirror in the x axis and reverse the traversal to stay counterclockwise.
    let mut lower: Vec<Vec2> = Vec::with_capacity(lower_up.len());
    lower.push(lower_up[0]);
    lower.extend(lower_up[1..].iter().rev());
    let lower: Vec<Vec2> = lower.into_iter().map(|v| rot(Vec2::new(v.x, -v.y))).collect();

    Ok(Wedge {
        upper: Contour::new(0, spec.theta, upper)?,
        lower: Contour::new(1, spec.theta, lower)?,
        closure_height: top,
        spec: spec.clone(),
    })
}

impl Wedge {
    pub fn system(&self, kernel: crate::kernel::KernelParams, tau: f64) -> Result<PatchSystem> {
        PatchSystem::new(Mode::SelfSimilar, tau, vec![self.upper.clone(), self.lower.clone()], kernel)
    }

    /// Whether a point, rotated back to the wedge frame, lies on the arms
    /// with `|x| <= limit` (the closure is excluded).
    pub fn in_apex_region(&self, y: Vec2, limit: f64) -> bool {
        let v = y.rotated(-self.spec.rotation);
        v.x.abs() <= limit && v.y.abs() <= limit + self.spec.x_max * 0.5
    }
}

/// Largest offset `||y| - |x||` of nodes in the apex region `|x| <= limit`
/// (after undoing `rotation`): how far the contours are from the exact wedge.
pub fn wedge_deviation(system: &PatchSystem, rotation: f64, limit: f64) -> f64 {
    system
        .contours
        .iter()
        .flat_map(|c| c.nodes().iter())
        .map(|y| y.rotated(-rotation))
        .filter(|v| v.x.abs() <= limit && v.y.abs() <= 1.5 * limit)
        .map(|v| (v.y.abs() - v.x.abs()).abs())
        .fold(0.0, f64::max)
}

/// `steps` fixed steps of size `-dt_mag` in self-similar mode, with an
/// optional redistribution after each step.
pub fn backward_evolve(
    system: &PatchSystem,
    steps: usize,
    dt_mag: f64,
    redistribution: Option<&RedistributionParams>,
) -> Result<PatchSystem> {
    if system.mode != Mode::SelfSimilar {
        return Err(Error::Domain("backward evolution runs in self-similar mode".into()));
    }
    if !(dt_mag > 0.0) {
        return Err(Error::Domain(format!("step magnitude {dt_mag} must be positive")));
    }
    let mut s = system.clone();
    for _ in 0..steps {
        s = rk4_step(&s, -dt_mag)?;
        if let Some(r) = redistribution {
            let contours = s.contours.iter().map(|c| redistribute(c, r)).collect::<Result<Vec<_>>>()?;
            s.contours = contours;
        }
    }
    Ok(s)
}
