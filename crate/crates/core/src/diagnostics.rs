//! Collapse analytics: per-step records and the fits run on their series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{golden_section, min_distance_splines, Spline};
use crate::system::{Mode, PatchSystem};

/// Measurements of one state of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: Option<f64>,
    pub tau: Option<f64>,
    /// Minimum distance between the first two contours; absent for a single contour.
    pub min_distance: Option<f64>,
    pub max_curvature: f64,
    pub areas: Vec<f64>,
    pub node_counts: Vec<usize>,
    pub dt: f64,
}

impl DiagnosticsRecord {
    pub fn measure(step: usize, system: &PatchSystem, dt: f64) -> Self {
        let splines: Vec<Spline> = system.contours.iter().map(Spline::new).collect();
        let min_distance = match splines.as_slice() {
            [a, b, ..] => Some(min_distance_splines(a, b).distance),
            _ => None,
        };
        let max_curvature = splines
            .iter()
            .flat_map(|s| s.curvature.iter())
            .fold(0.0_f64, |m, k| m.max(k.abs()));
        let (t, tau) = match system.mode {
            Mode::Physical => (Some(system.time), None),
            Mode::SelfSimilar => (None, Some(system.time)),
        };
        DiagnosticsRecord {
            step,
            t,
            tau,
            min_distance,
            max_curvature,
            areas: splines.iter().map(|s| s.area().area).collect(),
            node_counts: splines.iter().map(Spline::len).collect(),
            dt,
        }
    }

    /// `t` or `tau`, whichever the record carries.
    pub fn time(&self) -> f64 {
        self.t.or(self.tau).unwrap_or(f64::NAN)
    }
}

/// Closed interval of the independent variable used by a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Window { start, end }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start && x <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// `t*` for collapse-time fits, the slope otherwise.
    pub estimate: f64,
    /// `C` for power laws, the intercept for log-linear fits.
    pub amplitude: f64,
    /// Euclidean norm of the residuals in log space.
    pub residual: f64,
    pub window: Window,
    pub count: usize,
}

fn select(x: &[f64], y: &[f64], window: Option<Window>) -> Result<(Vec<f64>, Vec<f64>, Window)> {
    if x.len() != y.len() {
        return Err(Error::Fit(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(xi, _)| window.is_none_or(|w| w.contains(**xi)))
        .map(|(a, b)| (*a, *b))
        .unzip();
    if xs.is_empty() {
        return Err(Error::Fit("no samples in the fit window".into()));
    }
    let used = window.unwrap_or(Window::new(xs[0], xs[xs.len() - 1]));
    Ok((xs, ys, used))
}

fn logs(y: &[f64], what: &str) -> Result<Vec<f64>> {
    y.iter()
        .map(|&v| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::Fit(format!("{what} must be positive and finite, got {v}")))
            }
        })
        .collect()
}

/// Ordinary least squares `y = a + m x`; returns (m, a, residual norm).
fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let m = sxy / sxx;
    let a = my - m * mx;
    let res = x.iter().zip(y).map(|(xi, yi)| (yi - a - m * xi).powi(2)).sum::<f64>().sqrt();
    (m, a, res)
}

/// Fit `D(t) = C (t* - t)^(1/alpha)` by a golden-section search on `t*`
/// over `(t_last, t_last + 10 (t_last - t_first)]`, with `log C` fitted
/// in closed form for every trial `t*`.
pub fn fit_collapse_time(t: &[f64], d: &[f64], alpha: f64, window: Option<Window>) -> Result<FitResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    let (ts, ds, used) = select(t, d, window)?;
    if ts.len() < 4 {
        return Err(Error::Fit(format!("collapse fit needs at least 4 samples, got {}", ts.len())));
    }
    if ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Fit("sample times must increase".into()));
    }
    if ds.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Fit("distance is not decreasing over the fit window".into()));
    }
    let log_d = logs(&ds, "distance")?;
    let expo = 1.0 / alpha;
    let (first, last) = (ts[0], ts[ts.len() - 1]);
    let span = last - first;

    let inner = |t_star: f64| -> (f64, f64) {
        let r: Vec<f64> = ts.iter().zip(&log_d).map(|(&ti, &ld)| ld - expo * (t_star - ti).ln()).collect();
        let log_c = r.iter().sum::<f64>() / r.len() as f64;
        let ss = r.iter().map(|v| (v - log_c).powi(2)).sum::<f64>();
        (log_c, ss)
    };
    let lo = last + 1e-12 * span;
    let hi = last + 10.0 * span;
    let tol = 1e-15 * hi.abs().max(span);
    let (t_star, ss) = golden_section(|s| inner(s).1, lo, hi, tol);
    let edge = 1e-6 * span;
    if t_star - lo < edge || hi - t_star < edge {
        return Err(Error::Fit(format!("collapse-time search hit the bracket boundary at t* = {t_star}")));
    }
    let (log_c, _) = inner(t_star);
    Ok(FitResult { estimate: t_star, amplitude: log_c.exp(), residual: ss.sqrt(), window: used, count: ts.len() })
}

/// Slope of `log D` against `tau` by ordinary least squares.
pub fn fit_log_slope(tau: &[f64], d: &[f64], window: Option<Window>) -> Result<FitResult> {
    let (xs, ys, used) = select(tau, d, window)?;
    if xs.len() < 3 {
        return Err(Error::Fit(format!("slope fit needs at least 3 samples, got {}", xs.len())));
    }
    let ly = logs(&ys, "distance")?;
    let (m, a, res) = ols(&xs, &ly);
    Ok(FitResult { estimate: m, amplitude: a, residual: res, window: used, count: xs.len() })
}

/// Exponent of `kappa_max ~ C (t* - t)^e`; collapse predicts `e = -1/alpha`.
pub fn curvature_scaling_check(
    t: &[f64],
    kappa: &[f64],
    t_star: f64,
    window: Option<Window>,
) -> Result<FitResult> {
    let (ts, ks, used) = select(t, kappa, window)?;
    if ts.len() < 3 {
        return Err(Error::Fit(format!("curvature fit needs at least 3 samples, got {}", ts.len())));
    }
    if ts.iter().any(|&x| x >= t_star) {
        return Err(Error::Fit(format!("fit window reaches t* = {t_star}")));
    }
    let lx: Vec<f64> = ts.iter().map(|&x| (t_star - x).ln()).collect();
    let ly = logs(&ks, "curvature")?;
    let (m, a, res) = ols(&lx, &ly);
    Ok(FitResult { estimate: m, amplitude: a.exp(), residual: res, window: used, count: ts.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseClass {
    NonCollapsing,
    Collapsing,
    Marginal,
}

impl std::fmt::Display for CollapseClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CollapseClass::NonCollapsing => "non_collapsing",
            CollapseClass::Collapsing => "collapsing",
            CollapseClass::Marginal => "marginal",
        })
    }
}

pub const DEFAULT_CLASSIFY_TOLERANCE: f64 = 0.02;

/// Compare the growth rate of `log D(tau)` with `delta = 1/alpha`.
pub fn classify_collapse(m: f64, delta: f64, tolerance: f64) -> CollapseClass {
    if m > delta + tolerance {
        CollapseClass::NonCollapsing
    } else if m < delta - tolerance {
        CollapseClass::Collapsing
    } else {
        CollapseClass::Marginal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub samples: usize,
    /// Slope removed before looking for extrema.
    pub slope: f64,
    /// Turning points of the detrended `log D`.
    pub extrema: usize,
    pub amplitude_mean: f64,
    pub amplitude_max: f64,
    pub amplitude_std: f64,
}

/// Count the turning points of `log D` after removing its linear trend, and
/// summarize the half-swings between consecutive turning points.
pub fn oscillation_report(tau: &[f64], d: &[f64]) -> Result<OscillationReport> {
    if tau.len() != d.len() || tau.len() < 10 {
        return Err(Error::Fit(format!("oscillation report needs at least 10 paired samples, got {}", tau.len())));
    }
    let ly = logs(d, "distance")?;
    let (m, a, _) = ols(tau, &ly);
    let r: Vec<f64> = tau.iter().zip(&ly).map(|(x, y)| y - a - m * x).collect();
    // Reversals smaller than the rounding noise of log D are ignored.
    let floor = 1e-9 * ly.iter().fold(1.0_f64, |s, v| s.max(v.abs()));

    let mut turns = vec![r[0]];
    let mut extreme = r[0];
    let mut rising: Option<bool> = None;
    for &v in &r[1..] {
        match rising {
            None => {
                if (v - extreme).abs() > floor {
                    rising = Some(v > extreme);
                    extreme = v;
                }
            }
            Some(up) => {
                if (up && v > extreme) || (!up && v < extreme) {
                    extreme = v;
                } else if (v - extreme).abs() > floor {
                    turns.push(extreme);
                    rising = Some(!up);
                    extreme = v;
                }
            }
        }
    }
    let extrema = turns.len() - 1;
    let swings: Vec<f64> = turns.windows(2).skip(1).map(|w| 0.5 * (w[1] - w[0]).abs()).collect();
    let (mean, max, std) = if swings.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let n = swings.len() as f64;
        let mean = swings.iter().sum::<f64>() / n;
        let max = swings.iter().fold(0.0_f64, |a, &b| a.max(b));
        let var = swings.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        (mean, max, var.sqrt())
    };
    Ok(OscillationReport {
        samples: tau.len(),
        slope: m,
        extrema,
        amplitude_mean: mean,
        amplitude_max: max,
        amplitude_std: std,
    })
}

/// Pick `n` samples whose abscissae are closest to `n` equally spaced points
/// of the window (duplicates removed, order kept).
pub fn thin_series(x: &[f64], y: &[f64], window: Window, n: usize) -> (Vec<f64>, Vec<f64>) {
    let idx: Vec<usize> = (0..x.len()).filter(|&i| window.contains(x[i])).collect();
    if idx.is_empty() || n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut picked: Vec<usize> = Vec::with_capacity(n);
    for k in 0..n {
        let target = if n == 1 {
            window.start
        } else {
            window.start + (window.end - window.start) * k as f64 / (n - 1) as f64
        };
        let best = *idx
            .iter()
            .min_by(|&&a, &&b| (x[a] - target).abs().total_cmp(&(x[b] - target).abs()))
            .expect("nonempty");
        if picked.last() != Some(&best) {
            picked.push(best);
        }
    }
    picked.into_iter().map(|i| (x[i], y[i])).unzip()
}

/// Last time, counted from the start of the run, up to which the gap `D`
/// stays at least `spans` minimum node spacings wide. The spacing is read
/// back from the step size `dt = b * min chord`. Beyond this time the
/// collapse region is under-resolved and `D` stops following a power law.
pub fn resolved_until(records: &[DiagnosticsRecord], b: f64, spans: f64) -> Option<f64> {
    records
        .iter()
        .skip_while(|r| r.dt == 0.0)
        .take_while(|r| r.min_distance.is_some_and(|d| d >= spans * r.dt.abs() / b))
        .last()
        .map(DiagnosticsRecord::time)
}
