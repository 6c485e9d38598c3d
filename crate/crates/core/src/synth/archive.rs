//! On-disk scan archives and the generic point-record importer.
//!
//! Point records are plain CSV with header `x,y,z,intensity,ring,timestamp`.
//! The timestamp column may be omitted, in which case points get a
//! column-uniform spread derived from their azimuth over a default period.
//! A scan archive directory holds one `scan_%06d.csv` and `labels_%06d.csv`
//! per revolution, a `poses.csv` with the trajectory waypoints, and a
//! `manifest.txt` with the grid geometry and scan schedule.

use super::{ScanConfig, SimulatedScan, SynthError, Trajectory, NO_RETURN_ID};
use crate::types::{azimuth_of, Grid2, Mat3, PoseSE3, RayGrid, ScanPoint, Vec3};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("missing header in {0}")]
    MissingHeader(String),
    #[error("manifest key `{0}` missing or invalid")]
    BadManifest(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Default revolution period assumed when point records carry no timestamps.
pub const DEFAULT_PERIOD: f64 = 0.1;

fn io_err(path: &Path, source: std::io::Error) -> ArchiveError {
    ArchiveError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> ArchiveError {
    ArchiveError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// Point records
// ---------------------------------------------------------------------------

/// Reads a point-record CSV. Rows with non-finite values are rejected with
/// their line number; a negative ring is a parse error.
pub fn import_point_records(path: &Path) -> Result<Vec<ScanPoint>, ArchiveError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ArchiveError::MissingHeader(path.display().to_string()))?;
    let has_timestamp = match header.trim() {
        "x,y,z,intensity,ring,timestamp" => true,
        "x,y,z,intensity,ring" => false,
        _ => return Err(ArchiveError::MissingHeader(path.display().to_string())),
    };
    let mut points = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        let expected = if has_timestamp { 6 } else { 5 };
        if fields.len() != expected {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {expected} fields, got {}", fields.len()),
            ));
        }
        let mut nums = [0.0f64; 4];
        for (k, f) in fields[..4].iter().enumerate() {
            nums[k] = f
                .parse::<f64>()
                .map_err(|_| parse_err(path, line_no, format!("bad number `{f}`")))?;
            if !nums[k].is_finite() {
                return Err(parse_err(path, line_no, format!("non-finite value `{f}`")));
            }
        }
        let ring: i64 = fields[4]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad ring `{}`", fields[4])))?;
        if ring < 0 {
            return Err(parse_err(path, line_no, format!("negative ring {ring}")));
        }
        let position = Vec3::new(nums[0], nums[1], nums[2]);
        let timestamp = if has_timestamp {
            let t: f64 = fields[5]
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad timestamp `{}`", fields[5])))?;
            if !t.is_finite() {
                return Err(parse_err(path, line_no, "non-finite timestamp"));
            }
            t
        } else {
            // Column-uniform spread: azimuth fraction of one revolution.
            azimuth_of(&position) / std::f64::consts::TAU * DEFAULT_PERIOD
        };
        points.push(ScanPoint {
            position,
            intensity: nums[3],
            ring: ring as usize,
            timestamp,
        });
    }
    Ok(points)
}

pub fn export_point_records(path: &Path, points: &[ScanPoint]) -> Result<(), ArchiveError> {
    let mut out = String::from("x,y,z,intensity,ring,timestamp\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.position.x, p.position.y, p.position.z, p.intensity, p.ring, p.timestamp
        )
        .expect("string write");
    }
    write_atomic(path, out.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArchiveError> {
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Scan archive
// ---------------------------------------------------------------------------

fn poses_csv(trajectory: &Trajectory) -> String {
    let mut out =
        String::from("timestamp,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n");
    for w in trajectory.waypoints() {
        let r = w.rotation();
        let t = w.translation();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            w.timestamp(),
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z
        )
        .expect("string write");
    }
    out
}

fn parse_poses_csv(path: &Path) -> Result<Trajectory, ArchiveError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ArchiveError::MissingHeader(path.display().to_string()))?;
    if header.trim() != "timestamp,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz" {
        return Err(ArchiveError::MissingHeader(path.display().to_string()));
    }
    let mut waypoints = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 13 {
            return Err(parse_err(path, line_no, "expected 13 fields"));
        }
        let mut v = [0.0f64; 13];
        for (k, f) in fields.iter().enumerate() {
            v[k] = f
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad number `{f}`")))?;
        }
        let rotation = Mat3::new(v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]);
        let pose = PoseSE3::new(rotation, Vec3::new(v[10], v[11], v[12]), v[0])
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        waypoints.push(pose);
    }
    Ok(Trajectory::new(waypoints)?)
}

fn labels_csv(ids: &[i64]) -> String {
    let mut out = String::from("point_index,object_id\n");
    for (i, id) in ids.iter().enumerate() {
        writeln!(out, "{i},{id}").expect("string write");
    }
    out
}

fn parse_labels_csv(path: &Path, n_points: usize) -> Result<Vec<i64>, ArchiveError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ArchiveError::MissingHeader(path.display().to_string()))?;
    if header.trim() != "point_index,object_id" {
        return Err(ArchiveError::MissingHeader(path.display().to_string()));
    }
    let mut ids = vec![NO_RETURN_ID; n_points];
    for (i, raw) in lines {
        let line_no = i + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let (idx_s, id_s) = row
            .split_once(',')
            .ok_or_else(|| parse_err(path, line_no, "expected 2 fields"))?;
        let idx: usize = idx_s
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad index `{idx_s}`")))?;
        if idx >= n_points {
            return Err(parse_err(path, line_no, format!("index {idx} out of range")));
        }
        ids[idx] = id_s
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad object id `{id_s}`")))?;
    }
    Ok(ids)
}

/// Per-sequence archive layout written by `write_scan_archive`.
pub struct LoadedArchive {
    pub scans: Vec<SimulatedScan>,
    pub trajectory: Trajectory,
    pub config: ScanConfig,
    pub t_start: f64,
    pub scan_interval: f64,
    pub sequence_id: u64,
}

/// Writes one sequence of simulated scans into `dir`.
pub fn write_scan_archive(
    dir: &Path,
    scans: &[SimulatedScan],
    trajectory: &Trajectory,
    config: &ScanConfig,
    sequence_id: u64,
    t_start: f64,
    scan_interval: f64,
) -> Result<(), ArchiveError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (i, scan) in scans.iter().enumerate() {
        let mut body = String::from("x,y,z,intensity,ring,timestamp\n");
        for p in &scan.points {
            writeln!(
                body,
                "{},{},{},{},{},{}",
                p.position.x, p.position.y, p.position.z, p.intensity, p.ring, p.timestamp
            )
            .expect("string write");
        }
        write_atomic(&dir.join(format!("scan_{i:06}.csv")), body.as_bytes())?;
        write_atomic(
            &dir.join(format!("labels_{i:06}.csv")),
            labels_csv(&scan.point_object_ids).as_bytes(),
        )?;
    }
    write_atomic(&dir.join("poses.csv"), poses_csv(trajectory).as_bytes())?;
    let mut manifest = String::new();
    writeln!(manifest, "# scan archive manifest").expect("string write");
    writeln!(manifest, "sequence_id={sequence_id}").expect("string write");
    writeln!(manifest, "scan_count={}", scans.len()).expect("string write");
    writeln!(manifest, "t_start={t_start}").expect("string write");
    writeln!(manifest, "scan_interval={scan_interval}").expect("string write");
    writeln!(manifest, "period={}", scans.first().map_or(0.1, |s| s.period))
        .expect("string write");
    writeln!(manifest, "height={}", config.height).expect("string write");
    writeln!(manifest, "width={}", config.width).expect("string write");
    writeln!(manifest, "fov_down={}", config.fov_down).expect("string write");
    writeln!(manifest, "fov_up={}", config.fov_up).expect("string write");
    writeln!(manifest, "max_range={}", config.max_range).expect("string write");
    writeln!(manifest, "r0={}", config.r0).expect("string write");
    write_atomic(&dir.join("manifest.txt"), manifest.as_bytes())
}

fn manifest_map(path: &Path) -> Result<std::collections::BTreeMap<String, String>, ArchiveError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut map = std::collections::BTreeMap::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

fn manifest_get<T: std::str::FromStr>(
    map: &std::collections::BTreeMap<String, String>,
    key: &str,
) -> Result<T, ArchiveError> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ArchiveError::BadManifest(key.to_string()))
}

/// Reads a sequence archive back, reconstructing grids from point records,
/// poses and the manifest.
pub fn read_scan_archive(dir: &Path) -> Result<LoadedArchive, ArchiveError> {
    let manifest = manifest_map(&dir.join("manifest.txt"))?;
    let config = ScanConfig {
        height: manifest_get(&manifest, "height")?,
        width: manifest_get(&manifest, "width")?,
        fov_down: manifest_get(&manifest, "fov_down")?,
        fov_up: manifest_get(&manifest, "fov_up")?,
        max_range: manifest_get(&manifest, "max_range")?,
        r0: manifest_get(&manifest, "r0")?,
    };
    let scan_count: usize = manifest_get(&manifest, "scan_count")?;
    let t_start: f64 = manifest_get(&manifest, "t_start")?;
    let scan_interval: f64 = manifest_get(&manifest, "scan_interval")?;
    let period: f64 = manifest_get(&manifest, "period")?;
    let sequence_id: u64 = manifest_get(&manifest, "sequence_id")?;
    let trajectory = parse_poses_csv(&dir.join("poses.csv"))?;

    let mut scans = Vec::with_capacity(scan_count);
    for i in 0..scan_count {
        let points = import_point_records(&dir.join(format!("scan_{i:06}.csv")))?;
        let ids = parse_labels_csv(&dir.join(format!("labels_{i:06}.csv")), points.len())?;
        let t0 = t_start + scan_interval * i as f64;
        scans.push(rebuild_scan(&trajectory, &config, &points, &ids, t0, period)?);
    }
    Ok(LoadedArchive {
        scans,
        trajectory,
        config,
        t_start,
        scan_interval,
        sequence_id,
    })
}

/// Rebuilds a grid-frame scan from raw points plus the trajectory, applying
/// the same rolling-shutter geometry as the simulator.
pub fn rebuild_scan(
    trajectory: &Trajectory,
    config: &ScanConfig,
    points: &[ScanPoint],
    point_object_ids: &[i64],
    t0: f64,
    period: f64,
) -> Result<SimulatedScan, ArchiveError> {
    let (h, w) = (config.height, config.width);
    let inclinations = config.ring_inclinations();
    let pose0 = trajectory.sample(t0)?;

    let mut dir_grid = vec![Vec3::zeros(); h * w];
    let mut timestamps = vec![0.0; h * w];
    let mut column_origins = Vec::with_capacity(w);
    let mut column_poses = Vec::with_capacity(w);
    for j in 0..w {
        let tj = t0 + period * j as f64 / w as f64;
        let pose_j = trajectory.sample(tj)?;
        let stationary = pose_j.rotation() == pose0.rotation()
            && pose_j.translation() == pose0.translation();
        column_origins.push(if stationary {
            Vec3::zeros()
        } else {
            pose0.inverse_transform_point(pose_j.translation())
        });
        let beta = std::f64::consts::TAU * j as f64 / w as f64;
        for r in 0..h {
            let d_sensor = crate::types::direction_from_angles(inclinations[r], beta);
            dir_grid[r * w + j] = if stationary {
                d_sensor
            } else {
                pose0.rotation().transpose() * (pose_j.rotate(&d_sensor))
            };
            timestamps[r * w + j] = tj;
        }
        column_poses.push(pose_j);
    }

    let mut ranges = vec![0.0; h * w];
    let mut intensities = vec![0.0; h * w];
    let mut pixel_object_ids = Grid2::filled(h, w, NO_RETURN_ID);
    let mut kept_points = Vec::with_capacity(points.len());
    let mut kept_ids = Vec::with_capacity(points.len());
    let mut points_grid = Vec::with_capacity(points.len());

    for (k, p) in points.iter().enumerate() {
        let col = ((p.timestamp / period * w as f64).round() as i64).rem_euclid(w as i64) as usize;
        if p.ring >= h {
            return Err(ArchiveError::Parse {
                path: "points".into(),
                line: k + 1,
                message: format!("ring {} out of range for height {h}", p.ring),
            });
        }
        let i = p.ring * w + col;
        let pose_j = &column_poses[col];
        let stationary = pose_j.rotation() == pose0.rotation()
            && pose_j.translation() == pose0.translation();
        let range = p.position.norm();
        let (dir, grid_point) = if stationary {
            let d = p.position / range;
            (d, p.position)
        } else {
            let x_world = pose_j.transform_point(&p.position);
            let x_grid = pose0.inverse_transform_point(&x_world);
            (x_grid.normalize(), x_grid)
        };
        dir_grid[i] = dir;
        ranges[i] = range;
        intensities[i] = p.intensity;
        pixel_object_ids.set(p.ring, col, point_object_ids[k]);
        kept_points.push(*p);
        kept_ids.push(point_object_ids[k]);
        points_grid.push(grid_point);
    }

    let grid = RayGrid::new(
        h,
        w,
        inclinations,
        dir_grid,
        ranges,
        intensities,
        timestamps,
        column_origins,
    )
    .map_err(|e| ArchiveError::Parse {
        path: "grid".into(),
        line: 0,
        message: e.to_string(),
    })?;
    Ok(SimulatedScan {
        grid,
        points: kept_points,
        point_object_ids: kept_ids,
        points_grid,
        pixel_object_ids,
        pose0,
        t0,
        period,
    })
}
