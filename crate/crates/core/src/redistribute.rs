//! Curvature-weighted node redistribution.
//!
//! Each pass computes a target node density per segment from a non-local
//! average of the curvature, converts it to a fractional node count, and
//! places a new set of nodes along the existing interpolated curve. Node 0 is
//! kept in place.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Contour, Spline};
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RedistributionParams {
    /// Accuracy parameter; smaller means more nodes.
    pub nu: f64,
    /// Minimum node spacing scale (caps the resolved curvature at `1/delta_min`).
    pub delta_min: f64,
    pub length_scale: f64,
    pub exponent: f64,
}

impl Default for RedistributionParams {
    fn default() -> Self {
        RedistributionParams { nu: 0.05, delta_min: 1e-6, length_scale: 3.0, exponent: 2.0 / 3.0 }
    }
}

impl RedistributionParams {
    pub fn with_nu(nu: f64) -> Self {
        RedistributionParams { nu, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.delta_min > 0.0 && self.length_scale > 0.0 && self.exponent > 0.0) {
            return Err(Error::Domain(format!("invalid redistribution parameters {self:?}")));
        }
        Ok(())
    }
}

/// Desired fractional node count of every segment.
pub fn segment_node_counts(spline: &Spline, params: &RedistributionParams) -> Vec<f64> {
    let n = spline.len();
    let nodes = &spline.nodes;
    let kappa = &spline.curvature;
    let lengths: Vec<f64> = spline.segments.iter().map(|s| s.length).collect();
    let mids: Vec<Vec2> = (0..n).map(|j| (nodes[j] + nodes[(j + 1) % n]) * 0.5).collect();
    let mean_abs: Vec<f64> = (0..n).map(|j| (0.5 * (kappa[j] + kappa[(j + 1) % n])).abs()).collect();

    let (nu, l, a) = (params.nu, params.length_scale, params.exponent);
    let accuracy = 1.0 / (nu * l);
    let node_curv: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..n {
                let w = lengths[j] / (x - mids[j]).norm_sq();
                num += w * mean_abs[j];
                den += w;
            }
            let k = num / den;
            accuracy * (k * l).powf(a) + std::f64::consts::SQRT_2 * k
        })
        .collect();

    (0..n)
        .map(|i| {
            let k = 0.5 * (node_curv[i] + node_curv[(i + 1) % n]);
            let density = k / (1.0 + params.delta_min * k / std::f64::consts::SQRT_2);
            density * lengths[i]
        })
        .collect()
}

pub fn redistribute(contour: &Contour, params: &RedistributionParams) -> Result<Contour> {
    params.validate()?;
    let spline = Spline::new(contour);
    let sigma = segment_node_counts(&spline, params);
    let q: f64 = sigma.iter().sum();
    if !(q >= 2.0) {
        return Err(Error::Redistribution(format!(
            "contour {} needs {q:.3} nodes; too short or too flat to resolve",
            contour.id
        )));
    }
    let count = q.round() as usize + 2;
    let scale = count as f64 / q;

    let n = spline.len();
    let mut nodes = Vec::with_capacity(count);
    nodes.push(spline.nodes[0]);
    let mut seg = 0;
    let mut before = 0.0;
    for j in 1..count {
        let target = j as f64;
        while seg + 1 < n && before + sigma[seg] * scale <= target {
            before += sigma[seg] * scale;
            seg += 1;
        }
        let p = ((target - before) / (sigma[seg] * scale)).clamp(0.0, 1.0);
        nodes.push(spline.eval(seg, p));
    }
    contour.with_nodes(nodes)
}
