//! Time stepping of the discrete system.

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::kernel::VelocityField;
use crate::redistribute::{redistribute, RedistributionParams};
use crate::selfsim;
use crate::system::{Mode, PatchSystem};
use crate::vec2::Vec2;

/// Default time-step factor for a given alpha.
pub fn default_b(alpha: f64) -> f64 {
    if alpha <= 0.8 {
        0.5
    } else {
        0.25
    }
}

/// `B` times the smallest chord of the system.
pub fn adaptive_dt(system: &PatchSystem, b: f64) -> f64 {
    b * system.min_chord()
}

/// Right-hand side at every node, in node order: the full velocity for
/// alpha < 1, its normal projection for alpha = 1, or the rescaled field in
/// self-similar mode.
pub fn velocities(system: &PatchSystem) -> Result<Vec<Vec<Vec2>>> {
    let field = VelocityField::new(system);
    match system.mode {
        Mode::SelfSimilar => selfsim::rescaled_velocities(system, &field),
        Mode::Physical if system.alpha() < 1.0 => field.all_node_velocities(),
        Mode::Physical => field.all_normal_velocities(),
    }
}

fn displaced(system: &PatchSystem, base: &PatchSystem, k: &[Vec<Vec2>], h: f64) -> Result<PatchSystem> {
    let mut out = system.clone();
    for ((c, b), kc) in out.contours.iter_mut().zip(&base.contours).zip(k) {
        let nodes = b.nodes().iter().zip(kc).map(|(&x, &v)| x + v * h).collect();
        *c = b.with_nodes(nodes)?;
    }
    Ok(out)
}

/// One classical Runge-Kutta step of size `dt` (negative runs backwards).
/// Node counts do not change.
pub fn rk4_step(system: &PatchSystem, dt: f64) -> Result<PatchSystem> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::Domain(format!("time step {dt} must be finite and nonzero")));
    }
    let k1 = velocities(system)?;
    let k2 = velocities(&displaced(system, system, &k1, 0.5 * dt)?)?;
    let k3 = velocities(&displaced(system, system, &k2, 0.5 * dt)?)?;
    let k4 = velocities(&displaced(system, system, &k3, dt)?)?;

    let mut out = system.clone();
    for (ci, c) in out.contours.iter_mut().enumerate() {
        let nodes = system.contours[ci]
            .nodes()
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let slope = k1[ci][j] + (k2[ci][j] + k3[ci][j]) * 2.0 + k4[ci][j];
                x + slope * (dt / 6.0)
            })
            .collect();
        *c = system.contours[ci].with_nodes(nodes)?;
    }
    out.time += dt;
    Ok(out)
}

/// Redistribute the nodes of every contour.
pub fn redistribute_all(system: &PatchSystem, params: &RedistributionParams) -> Result<PatchSystem> {
    use rayon::prelude::*;
    let contours = system.contours.par_iter().map(|c| redistribute(c, params)).collect::<Result<Vec<_>>>()?;
    Ok(PatchSystem { contours, ..system.clone() })
}

/// Stop and output controls of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    /// Time-step factor: `dt = b * min chord`.
    pub b: f64,
    /// Upper bound on `|dt|`.
    pub dt_max: Option<f64>,
    /// Integrate towards decreasing time.
    pub backward: bool,
    /// Final `t` (physical) or `tau` (self-similar).
    pub time_end: Option<f64>,
    /// Largest step index; a run resumed at step `k` takes `max_steps - k` steps.
    pub max_steps: usize,
    /// A snapshot is reported every `snapshot_stride` steps (0 disables).
    pub snapshot_stride: usize,
    pub redistribution: Option<RedistributionParams>,
    /// Stop once the minimum distance between the first two contours falls below this.
    pub min_distance_stop: Option<f64>,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            b: 0.5,
            dt_max: None,
            backward: false,
            time_end: None,
            max_steps: 100,
            snapshot_stride: 10,
            redistribution: Some(RedistributionParams::default()),
            min_distance_stop: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum Termination {
    TimeReached,
    MaxSteps,
    MinDistance,
    /// The kernel detected touching contours; the last good state is kept.
    Contact(String),
}

/// What a finished run hands back.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub system: PatchSystem,
    pub step: usize,
    pub records: Vec<DiagnosticsRecord>,
    pub termination: Termination,
}

/// Called after every step with the new state, its record and whether a
/// snapshot is due. Returning an error aborts the run.
pub trait Observer {
    fn observe(&mut self, system: &PatchSystem, record: &DiagnosticsRecord, snapshot_due: bool) -> Result<()>;
}

impl<F: FnMut(&PatchSystem, &DiagnosticsRecord, bool) -> Result<()>> Observer for F {
    fn observe(&mut self, system: &PatchSystem, record: &DiagnosticsRecord, snapshot_due: bool) -> Result<()> {
        self(system, record, snapshot_due)
    }
}

/// Run from step 0. The initial state is reported as step 0.
pub fn simulate(system: PatchSystem, params: &RunParams, observer: &mut dyn Observer) -> Result<Outcome> {
    simulate_from(system, 0, params, observer)
}

/// Run with step numbering starting at `first_step` (for resumed runs).
pub fn simulate_from(
    system: PatchSystem,
    first_step: usize,
    params: &RunParams,
    observer: &mut dyn Observer,
) -> Result<Outcome> {
    if !(params.b > 0.0) {
        return Err(Error::Domain(format!("B = {} must be positive", params.b)));
    }
    let direction = if params.backward { -1.0 } else { 1.0 };
    let mut system = system;
    let mut step = first_step;
    let mut records = Vec::new();

    let first = DiagnosticsRecord::measure(step, &system, 0.0);
    observer.observe(&system, &first, first_step == 0 || is_due(step, params.snapshot_stride))?;
    records.push(first);

    let reached = |s: &PatchSystem| match params.time_end {
        Some(end) => (s.time - end) * direction >= -1e-12 * end.abs().max(1.0),
        None => false,
    };
    let termination = loop {
        if reached(&system) {
            break Termination::TimeReached;
        }
        if step >= params.max_steps {
            break Termination::MaxSteps;
        }
        let mut dt = adaptive_dt(&system, params.b);
        if let Some(cap) = params.dt_max {
            dt = dt.min(cap);
        }
        if let Some(end) = params.time_end {
            dt = dt.min((end - system.time) * direction);
        }
        let next = match rk4_step(&system, dt * direction) {
            Ok(s) => s,
            Err(Error::Contact(msg)) => break Termination::Contact(msg),
            Err(e) => return Err(e),
        };
        system = match &params.redistribution {
            Some(r) => redistribute_all(&next, r)?,
            None => next,
        };
        step += 1;
        let record = DiagnosticsRecord::measure(step, &system, dt * direction);
        observer.observe(&system, &record, is_due(step, params.snapshot_stride))?;
        let close = matches!(
            (params.min_distance_stop, record.min_distance),
            (Some(limit), Some(d)) if d < limit
        );
        records.push(record);
        if close {
            break Termination::MinDistance;
        }
    };
    Ok(Outcome { system, step, records, termination })
}

fn is_due(step: usize, stride: usize) -> bool {
    stride > 0 && step % stride == 0
}
