//! Contour dynamics for the alpha-patch family of active-scalar equations,
//! in physical and self-similar variables.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod io;
pub mod kernel;
pub mod quadrature;
pub mod redistribute;
pub mod scenario;
pub mod selfsim;
pub mod series;
pub mod system;
pub mod vec2;

pub use config::RunConfig;
pub use diagnostics::{classify_collapse, CollapseClass, DiagnosticsRecord, FitResult, Window};
pub use error::{Error, Result};
pub use evolution::{adaptive_dt, rk4_step, simulate, RunParams, Termination};
pub use geometry::{min_distance, ClosestApproach, Contour, ContourArea, SegmentGeometry, Spline};
pub use kernel::{c_alpha, node_velocity, normal_velocity, KernelParams, VelocityField};
pub use redistribute::{redistribute, RedistributionParams};
pub use scenario::{build_scenario, ScenarioSpec};
pub use selfsim::{make_wedge, RescaleMap, WedgeSpec};
pub use system::{Mode, NodeRef, PatchSystem};
pub use vec2::Vec2;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "ALPHA_PATCH_THREADS";

/// Run `f` on a pool of `workers` threads, or `ALPHA_PATCH_THREADS` threads
/// when `workers` is `None`, or the global pool when neither is set.
/// Results do not depend on the worker count.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let n = match workers {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::Domain(format!("{THREADS_ENV} = `{v}` is not a positive integer")))?,
            ),
            Err(_) => None,
        },
    };
    match n {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Domain(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
