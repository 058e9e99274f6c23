//! Snapshots and time series on disk.
//!
//! A snapshot is a CSV `contour_id,node_index,x,y` with a JSON sidecar of the
//! same stem. Coordinates are written with 17 significant digits, which
//! round-trips every double exactly. All files are written to a temporary
//! name and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::geometry::Contour;
use crate::kernel::KernelParams;
use crate::system::{Mode, PatchSystem};
use crate::vec2::Vec2;

pub const SNAPSHOT_HEADER: [&str; 4] = ["contour_id", "node_index", "x", "y"];
pub const SERIES_HEADER: [&str; 10] =
    ["step", "t", "tau", "min_distance", "max_curvature", "area_1", "area_2", "n1", "n2", "dt"];

/// Metadata stored next to a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub alpha: f64,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub theta: Vec<f64>,
    pub node_counts: Vec<usize>,
    pub config_hash: String,
    pub step: usize,
    pub kernel: KernelParams,
    /// Free-form scenario details, such as the wedge closure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// 17 significant digits, enough to reproduce the double exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Write `<path>` (CSV) and its `.json` sidecar.
pub fn write_snapshot(
    path: &Path,
    system: &PatchSystem,
    step: usize,
    config_hash: &str,
    extra: Option<serde_json::Value>,
) -> Result<()> {
    let rows = system.contours.iter().enumerate().flat_map(|(k, c)| {
        c.nodes()
            .iter()
            .enumerate()
            .map(move |(j, v)| vec![k.to_string(), j.to_string(), format_f64(v.x), format_f64(v.y)])
    });
    atomic_write(path, &csv_bytes(&SNAPSHOT_HEADER, rows)?)?;
    let (t, tau) = match system.mode {
        Mode::Physical => (Some(system.time), None),
        Mode::SelfSimilar => (None, Some(system.time)),
    };
    let sidecar = Sidecar {
        alpha: system.alpha(),
        mode: system.mode,
        t,
        tau,
        theta: system.contours.iter().map(|c| c.strength).collect(),
        node_counts: system.contours.iter().map(Contour::len).collect(),
        config_hash: config_hash.to_string(),
        step,
        kernel: system.kernel,
        extra,
    };
    let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| Error::Io(e.to_string()))?;
    atomic_write(&sidecar_path(path), &json)
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn check_header(found: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(schema(format!(
            "{}: header {:?} does not match {:?}",
            path.display(),
            found.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, path: &Path) -> Result<T> {
    s.trim().parse().map_err(|_| schema(format!("{}: cannot parse {what} from `{s}`", path.display())))
}

/// Read a snapshot and its sidecar back into a system.
pub fn read_snapshot(path: &Path) -> Result<(PatchSystem, Sidecar)> {
    let side_path = sidecar_path(path);
    let side_text = fs::read_to_string(&side_path)
        .map_err(|e| schema(format!("missing sidecar {}: {e}", side_path.display())))?;
    let sidecar: Sidecar =
        serde_json::from_str(&side_text).map_err(|e| schema(format!("{}: {e}", side_path.display())))?;

    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    check_header(&header, &SNAPSHOT_HEADER, path)?;
    let mut nodes: Vec<Vec<Vec2>> = vec![Vec::new(); sidecar.node_counts.len()];
    for rec in reader.records() {
        let rec = rec.map_err(|e| schema(format!("{}: {e}", path.display())))?;
        if rec.len() != 4 {
            return Err(schema(format!("{}: expected 4 fields, found {}", path.display(), rec.len())));
        }
        let k: usize = parse(&rec[0], "contour_id", path)?;
        let j: usize = parse(&rec[1], "node_index", path)?;
        let slot = nodes
            .get_mut(k)
            .ok_or_else(|| schema(format!("{}: contour {k} not listed in the sidecar", path.display())))?;
        if j != slot.len() {
            return Err(schema(format!("{}: node {j} of contour {k} out of order", path.display())));
        }
        slot.push(Vec2::new(parse(&rec[2], "x", path)?, parse(&rec[3], "y", path)?));
    }
    if sidecar.theta.len() != nodes.len() {
        return Err(schema("sidecar theta and node_counts lengths differ"));
    }
    let mut contours = Vec::with_capacity(nodes.len());
    for (k, (ns, &count)) in nodes.into_iter().zip(&sidecar.node_counts).enumerate() {
        if ns.len() != count {
            return Err(schema(format!("contour {k}: sidecar says {count} nodes, file has {}", ns.len())));
        }
        contours.push(Contour::new(k, sidecar.theta[k], ns)?);
    }
    let time = match sidecar.mode {
        Mode::Physical => sidecar.t,
        Mode::SelfSimilar => sidecar.tau,
    }
    .ok_or_else(|| schema(format!("sidecar lacks the time for {} mode", sidecar.mode)))?;
    if (sidecar.kernel.alpha - sidecar.alpha).abs() > 0.0 {
        return Err(schema("sidecar alpha and kernel alpha differ"));
    }
    let system = PatchSystem::new(sidecar.mode, time, contours, sidecar.kernel)?;
    Ok((system, sidecar))
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

fn series_row(r: &DiagnosticsRecord) -> Vec<String> {
    let area = |i: usize| opt(r.areas.get(i).copied());
    let count = |i: usize| r.node_counts.get(i).map(|n| n.to_string()).unwrap_or_default();
    vec![
        r.step.to_string(),
        opt(r.t),
        opt(r.tau),
        opt(r.min_distance),
        format_f64(r.max_curvature),
        area(0),
        area(1),
        count(0),
        count(1),
        format_f64(r.dt),
    ]
}

/// Write the whole time series (one row per record).
pub fn write_series(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    atomic_write(path, &csv_bytes(&SERIES_HEADER, records.iter().map(series_row))?)
}

/// Read a time series. Only the first two contours' areas and node counts
/// are stored, so records read back carry at most two of each.
pub fn read_series(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    check_header(&header, &SERIES_HEADER, path)?;
    let opt_f = |s: &str, what: &str| -> Result<Option<f64>> {
        if s.trim().is_empty() {
            Ok(None)
        } else {
            parse(s, what, path).map(Some)
        }
    };
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| schema(format!("{}: {e}", path.display())))?;
        if rec.len() != SERIES_HEADER.len() {
            return Err(schema(format!("{}: expected {} fields, found {}", path.display(), SERIES_HEADER.len(), rec.len())));
        }
        let mut areas = Vec::new();
        let mut node_counts = Vec::new();
        for i in 0..2 {
            if let Some(a) = opt_f(&rec[5 + i], "area")? {
                areas.push(a);
            }
            if !rec[7 + i].trim().is_empty() {
                node_counts.push(parse(&rec[7 + i], "node count", path)?);
            }
        }
        out.push(DiagnosticsRecord {
            step: parse(&rec[0], "step", path)?,
            t: opt_f(&rec[1], "t")?,
            tau: opt_f(&rec[2], "tau")?,
            min_distance: opt_f(&rec[3], "min_distance")?,
            max_curvature: parse(&rec[4], "max_curvature", path)?,
            areas,
            node_counts,
            dt: parse(&rec[9], "dt", path)?,
        });
    }
    Ok(out)
}

/// File name of the snapshot taken at `step`.
pub fn snapshot_name(step: usize) -> String {
    format!("snapshot_{step:06}.csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::circle_nodes;

    fn two_circles() -> PatchSystem {
        let a = Contour::new(0, -1.0, circle_nodes(Vec2::ZERO, 1.0, 37, 0.1)).unwrap();
        let b = Contour::new(1, -1.0, circle_nodes(Vec2::new(2.5, 0.0), 1.0, 41, 0.2)).unwrap();
        PatchSystem::new(Mode::Physical, 0.123456789, vec![a, b], KernelParams::default()).unwrap()
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(snapshot_name(3));
        let s = two_circles();
        write_snapshot(&path, &s, 3, "abc", None).unwrap();
        let (back, side) = read_snapshot(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(side.step, 3);
        assert_eq!(side.node_counts, vec![37, 41]);
    }

    #[test]
    fn missing_sidecar_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_snapshot(&path, &two_circles(), 0, "", None).unwrap();
        fs::remove_file(path.with_extension("json")).unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_snapshot(&path, &two_circles(), 0, "", None).unwrap();
        fs::write(&path, "id,j,x,y\n0,0,1,0\n").unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let s = two_circles();
        let recs: Vec<_> = (0..5).map(|k| DiagnosticsRecord::measure(k, &s, 0.01 * k as f64)).collect();
        write_series(&path, &recs).unwrap();
        assert_eq!(read_series(&path).unwrap(), recs);
    }
}
