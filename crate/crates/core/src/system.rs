use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Contour;
use crate::kernel::KernelParams;

/// Which equation drives the nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Original variables (x, t).
    #[serde(rename = "physical")]
    Physical,
    /// Rescaled variables (y, tau) about a collapse point at the origin.
    #[serde(rename = "selfsimilar")]
    SelfSimilar,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Physical => "physical",
            Mode::SelfSimilar => "selfsimilar",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "physical" => Ok(Mode::Physical),
            "selfsimilar" | "self-similar" => Ok(Mode::SelfSimilar),
            other => Err(Error::Domain(format!("unknown mode `{other}`"))),
        }
    }
}

/// A node of a system: contour index and node index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef {
    pub contour: usize,
    pub node: usize,
}

/// The full state: contours, equation parameters and the current time
/// (`t` in physical mode, `tau` in self-similar mode).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSystem {
    pub mode: Mode,
    pub time: f64,
    pub contours: Vec<Contour>,
    pub kernel: KernelParams,
}

impl PatchSystem {
    pub fn new(mode: Mode, time: f64, contours: Vec<Contour>, kernel: KernelParams) -> Result<Self> {
        kernel.validate()?;
        if contours.is_empty() {
            return Err(Error::InvalidContour("a system needs at least one contour".into()));
        }
        Ok(PatchSystem { mode, time, contours, kernel })
    }

    pub fn alpha(&self) -> f64 {
        self.kernel.alpha
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.kernel.alpha
    }

    /// Dimension of the discrete state: two coordinates per node.
    pub fn dimension(&self) -> usize {
        2 * self.node_count()
    }

    pub fn node_count(&self) -> usize {
        self.contours.iter().map(Contour::len).sum()
    }

    pub fn node_refs(&self) -> Vec<NodeRef> {
        self.contours
            .iter()
            .enumerate()
            .flat_map(|(c, k)| (0..k.len()).map(move |node| NodeRef { contour: c, node }))
            .collect()
    }

    pub fn min_chord(&self) -> f64 {
        self.contours.iter().map(Contour::min_chord).fold(f64::INFINITY, f64::min)
    }
}
