//! Initial configurations.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::redistribute_all;
use crate::geometry::{circle_nodes, ellipse_nodes, Contour};
use crate::io::read_snapshot;
use crate::kernel::KernelParams;
use crate::redistribute::RedistributionParams;
use crate::selfsim::{make_wedge, Perturbation, WedgeSpec};
use crate::system::{Mode, PatchSystem};
use crate::vec2::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CirclePair {
    pub radius: f64,
    /// Distance between the centers, which sit on the x axis at 0 and `distance`.
    pub distance: f64,
    pub theta: f64,
    /// Nodes per contour before the initial redistribution.
    pub nodes: usize,
}

impl Default for CirclePair {
    fn default() -> Self {
        CirclePair { radius: 1.0, distance: 2.5, theta: -1.0, nodes: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EllipsePair {
    /// Horizontal semi-axis.
    pub a: f64,
    /// Vertical semi-axis.
    pub b: f64,
    pub distance: f64,
    pub theta: f64,
    pub nodes: usize,
}

impl Default for EllipsePair {
    fn default() -> Self {
        EllipsePair { a: 1.1, b: 1.0, distance: 2.5, theta: -1.0, nodes: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ScenarioSpec {
    TwoCircles(CirclePair),
    TwoEllipses(EllipsePair),
    Wedge(WedgeSpec),
    FromFile { path: PathBuf },
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec::TwoCircles(CirclePair::default())
    }
}

impl ScenarioSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioSpec::TwoCircles(_) => "two_circles",
            ScenarioSpec::TwoEllipses(_) => "two_ellipses",
            ScenarioSpec::Wedge(_) => "wedge",
            ScenarioSpec::FromFile { .. } => "from_file",
        }
    }

    /// Default parameters of a named scenario. `from_file` needs a path.
    pub fn by_name(name: &str, path: Option<PathBuf>) -> Result<Self> {
        match name {
            "two_circles" => Ok(ScenarioSpec::TwoCircles(CirclePair::default())),
            "two_ellipses" => Ok(ScenarioSpec::TwoEllipses(EllipsePair::default())),
            "wedge" => Ok(ScenarioSpec::Wedge(WedgeSpec::default())),
            "from_file" => path
                .map(|path| ScenarioSpec::FromFile { path })
                .ok_or_else(|| Error::UnknownScenario("from_file needs a snapshot path".into())),
            other => Err(Error::UnknownScenario(format!(
                "`{other}`; expected two_circles, two_ellipses, wedge or from_file"
            ))),
        }
    }

    /// Mode a scenario is normally run in.
    pub fn natural_mode(&self) -> Mode {
        match self {
            ScenarioSpec::Wedge(_) => Mode::SelfSimilar,
            _ => Mode::Physical,
        }
    }
}

/// Two contours with the second the point reflection of the first through
/// the midpoint of the centers, so the pair is symmetric about `x = distance/2`.
fn symmetric_pair(first: Vec<Vec2>, distance: f64, theta: f64) -> Result<Vec<Contour>> {
    let center = Vec2::new(distance, 0.0);
    let second = first.iter().map(|&v| center - v).collect();
    Ok(vec![Contour::new(0, theta, first)?, Contour::new(1, theta, second)?])
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} = {v} must be positive")))
    }
}

/// Unredistributed contours of a scenario (and the stored mode and time for
/// `from_file`).
fn raw_contours(spec: &ScenarioSpec, seed: u64) -> Result<(Vec<Contour>, Option<(Mode, f64)>)> {
    match spec {
        ScenarioSpec::TwoCircles(c) => {
            positive(c.radius, "radius")?;
            if c.distance <= 2.0 * c.radius {
                return Err(Error::Domain(format!("circles of radius {} overlap at distance {}", c.radius, c.distance)));
            }
            let first = circle_nodes(Vec2::ZERO, c.radius, c.nodes, 0.0);
            Ok((symmetric_pair(first, c.distance, c.theta)?, None))
        }
        ScenarioSpec::TwoEllipses(e) => {
            positive(e.a, "a")?;
            positive(e.b, "b")?;
            if e.distance <= 2.0 * e.a {
                return Err(Error::Domain(format!("ellipses with a = {} overlap at distance {}", e.a, e.distance)));
            }
            let first = ellipse_nodes(Vec2::ZERO, e.a, e.b, e.nodes, 0.0);
            Ok((symmetric_pair(first, e.distance, e.theta)?, None))
        }
        ScenarioSpec::Wedge(w) => {
            let mut w = w.clone();
            if let Perturbation::Random { seed: s @ None, .. } = &mut w.perturbation {
                *s = Some(seed);
            }
            let wedge = make_wedge(&w)?;
            Ok((vec![wedge.upper, wedge.lower], None))
        }
        ScenarioSpec::FromFile { path } => {
            let (system, _) = read_snapshot(path)?;
            Ok((system.contours, Some((system.mode, system.time))))
        }
    }
}

/// Build the initial system: contours of the scenario followed by one
/// redistribution pass. A snapshot keeps its stored mode and time; the
/// given `mode` must agree with it.
pub fn build_scenario(
    spec: &ScenarioSpec,
    mode: Mode,
    kernel: KernelParams,
    redistribution: Option<&RedistributionParams>,
    seed: u64,
) -> Result<PatchSystem> {
    let (contours, stored) = raw_contours(spec, seed)?;
    let time = match stored {
        Some((m, t)) if m == mode => t,
        Some((m, _)) => {
            return Err(Error::Domain(format!("snapshot is in {m} variables but the run asks for {mode}")));
        }
        None => 0.0,
    };
    let system = PatchSystem::new(mode, time, contours, kernel)?;
    match redistribution {
        Some(r) => redistribute_all(&system, r),
        None => Ok(system),
    }
}
