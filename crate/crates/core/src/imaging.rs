//! Image synthesis on the cylindrical grid: point projection, segment
//! masks, interpolation of irregular scans and image export.
//!
//! Two projections exist. `simple_project` maps a point to the pixel whose
//! nominal inclination/azimuth is nearest, which ignores that the columns
//! of a revolution were measured from different sensor poses.
//! `aligned_project` searches a window around that seed for the stored ray
//! direction closest in angle to the point, which compensates the sensor
//! motion. The occlusion check in `compute_mask` compares the point's
//! distance from the column's emission origin with the stored range.

use crate::types::{
    azimuth_of, inclination_of, Grid2, RayGrid, Segment, Vec3, VisualView,
};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("cannot project a zero-norm point")]
    ZeroNormPoint,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("margins out of range: {0}")]
    BadMargins(String),
    #[error("interpolation needs at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad image file {path}: {message}")]
    BadImage { path: String, message: String },
}

/// Search window of the aligned projection, in rows and columns around the
/// simple-projection seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProjectionMargins {
    pub rows: usize,
    pub cols: usize,
}

impl Default for ProjectionMargins {
    fn default() -> Self {
        Self { rows: 16, cols: 32 }
    }
}

impl ProjectionMargins {
    fn validate(&self, grid: &RayGrid) -> Result<(), ImagingError> {
        if self.rows < 1 || self.rows > grid.height() {
            return Err(ImagingError::BadMargins(format!(
                "row margin {} for height {}",
                self.rows,
                grid.height()
            )));
        }
        if self.cols < 1 || self.cols > grid.width() / 2 {
            return Err(ImagingError::BadMargins(format!(
                "column margin {} for width {}",
                self.cols,
                grid.width()
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

/// Nominal cylinder projection: nearest ring by inclination (ties toward the
/// smaller ring index) and the azimuth rounded to a column, wrapping at the
/// image seam.
pub fn simple_project(p: &Vec3, grid: &RayGrid) -> Result<(usize, usize), ImagingError> {
    if p.norm() == 0.0 {
        return Err(ImagingError::ZeroNormPoint);
    }
    let alpha = inclination_of(p);
    let beta = azimuth_of(p);
    let mut best_row = 0usize;
    let mut best_d = f64::INFINITY;
    for (r, a) in grid.ring_inclinations().iter().enumerate() {
        let d = (a - alpha).abs();
        if d < best_d {
            best_d = d;
            best_row = r;
        }
    }
    let w = grid.width() as f64;
    let col = (beta / std::f64::consts::TAU * w).round() as usize % grid.width();
    Ok((best_row, col))
}

/// Pixel whose stored ray direction has the smallest angle to `p`, searched
/// inside the margin window around the simple projection (columns wrap, rows
/// clamp). Ties break by (row, column) lexicographic order.
pub fn aligned_project(
    p: &Vec3,
    grid: &RayGrid,
    margins: &ProjectionMargins,
) -> Result<(usize, usize), ImagingError> {
    margins.validate(grid)?;
    let (seed_r, seed_c) = simple_project(p, grid)?;
    let h = grid.height();
    let w = grid.width();
    let row_lo = seed_r.saturating_sub(margins.rows);
    let row_hi = (seed_r + margins.rows).min(h);
    let mut best = (0usize, 0usize);
    // Maximizing the dot product with a unit direction minimizes the angle.
    let mut best_dot = f64::NEG_INFINITY;
    for row in row_lo..row_hi {
        for dc in 0..(2 * margins.cols) {
            let col =
                (seed_c + w + dc - margins.cols) % w;
            let d = grid.direction(row, col);
            let dot = d.x * p.x + d.y * p.y + d.z * p.z;
            if dot > best_dot || (dot == best_dot && (row, col) < best) {
                best_dot = dot;
                best = (row, col);
            }
        }
    }
    Ok(best)
}

/// Exhaustive argmin over every pixel of the grid; the oracle for
/// `aligned_project`. Visiting pixels in (row, column) order with a strict
/// improvement test realizes the same lexicographic tie rule.
pub fn brute_force_project(p: &Vec3, grid: &RayGrid) -> Result<(usize, usize), ImagingError> {
    if p.norm() == 0.0 {
        return Err(ImagingError::ZeroNormPoint);
    }
    let mut best = 0usize;
    let mut best_dot = f64::NEG_INFINITY;
    for (i, d) in grid.directions().iter().enumerate() {
        let dot = d.x * p.x + d.y * p.y + d.z * p.z;
        if dot > best_dot {
            best_dot = dot;
            best = i;
        }
    }
    Ok((best / grid.width(), best % grid.width()))
}

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

/// Binary mask of the pixels that some point of `points` (grid frame)
/// aligned-projects to, where the point's distance from the column's
/// emission origin agrees with the stored range within `range_tolerance`.
pub fn compute_mask_points(
    points: &[Vec3],
    grid: &RayGrid,
    margins: &ProjectionMargins,
    range_tolerance: f64,
) -> Result<Grid2<u8>, ImagingError> {
    margins.validate(grid)?;
    let mut mask = Grid2::filled(grid.height(), grid.width(), 0u8);
    for p in points {
        if p.norm() == 0.0 {
            continue;
        }
        let (r, c) = aligned_project(p, grid, margins)?;
        let stored = grid.range(r, c);
        if stored <= 0.0 {
            continue;
        }
        let measured = (p - grid.column_origin(c)).norm();
        if (measured - stored).abs() <= range_tolerance {
            mask.set(r, c, 1);
        }
    }
    Ok(mask)
}

/// `compute_mask_points` over a segment's point cloud. The segment must
/// already be expressed in the grid frame.
pub fn compute_mask(
    segment: &Segment,
    grid: &RayGrid,
    margins: &ProjectionMargins,
    range_tolerance: f64,
) -> Result<Grid2<u8>, ImagingError> {
    compute_mask_points(segment.points(), grid, margins, range_tolerance)
}

/// Mask variant using the nominal projection without motion compensation;
/// exhibits the misalignment the aligned projection removes.
pub fn compute_mask_simple(
    points: &[Vec3],
    grid: &RayGrid,
    range_tolerance: f64,
) -> Result<Grid2<u8>, ImagingError> {
    let mut mask = Grid2::filled(grid.height(), grid.width(), 0u8);
    for p in points {
        if p.norm() == 0.0 {
            continue;
        }
        let (r, c) = simple_project(p, grid)?;
        let stored = grid.range(r, c);
        if stored <= 0.0 {
            continue;
        }
        let measured = (p - grid.column_origin(c)).norm();
        if (measured - stored).abs() <= range_tolerance {
            mask.set(r, c, 1);
        }
    }
    Ok(mask)
}

/// Intersection over union of two binary masks.
pub fn mask_iou(a: &Grid2<u8>, b: &Grid2<u8>) -> f64 {
    assert!(a.same_shape(b), "mask shapes differ");
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.data().iter().zip(b.data().iter()) {
        let (x, y) = (*x != 0, *y != 0);
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Ground-truth mask of one object id from a per-pixel label image.
pub fn id_mask(labels: &Grid2<i64>, id: i64) -> Grid2<u8> {
    let mut mask = Grid2::filled(labels.height(), labels.width(), 0u8);
    for (i, v) in labels.data().iter().enumerate() {
        if *v == id {
            mask.data_mut()[i] = 1;
        }
    }
    mask
}

/// Packages grid images and a mask into a visual view.
pub fn build_visual_view(grid: &RayGrid, mask: Grid2<u8>) -> Result<VisualView, ImagingError> {
    if mask.height() != grid.height() || mask.width() != grid.width() {
        return Err(ImagingError::ShapeMismatch(format!(
            "mask {}x{} vs grid {}x{}",
            mask.height(),
            mask.width(),
            grid.height(),
            grid.width()
        )));
    }
    debug_assert!(mask
        .data()
        .iter()
        .zip(grid.ranges().iter())
        .all(|(m, r)| *m == 0 || *r > 0.0));
    let mask_area = mask.data().iter().filter(|m| **m != 0).count();
    Ok(VisualView {
        intensity: Grid2::from_data(grid.height(), grid.width(), grid.intensities().to_vec()),
        range: Grid2::from_data(grid.height(), grid.width(), grid.ranges().to_vec()),
        mask,
        timestamp: grid.timestamp(0, 0),
        mask_area,
    })
}

// ---------------------------------------------------------------------------
// Angular bilinear interpolation
// ---------------------------------------------------------------------------

/// An irregular sample: unit direction plus range and intensity.
#[derive(Clone, Copy, Debug)]
pub struct DirSample {
    pub direction: Vec3,
    pub range: f64,
    pub intensity: f64,
}

/// Interpolates irregular samples onto the regular grid geometry of
/// `target`. For every target direction, four neighbors are selected, one
/// per quadrant of the local (inclination, azimuth) plane, each within the
/// angular bin spanned by the adjacent grid directions. The upper and lower
/// pairs are interpolated horizontally to the target azimuth, then
/// vertically to the target inclination. Pixels with an empty quadrant
/// become no-return (0 range, 0 intensity).
pub fn interpolate_irregular(
    samples: &[DirSample],
    target: &RayGrid,
) -> Result<(Grid2<f64>, Grid2<f64>), ImagingError> {
    if samples.len() < 4 {
        return Err(ImagingError::TooFewSamples(samples.len()));
    }
    let h = target.height();
    let w = target.width();
    let incl = target.ring_inclinations();
    let col_span = std::f64::consts::TAU / w as f64;
    // Tolerance so samples exactly on a bin boundary stay inside it.
    let pad = 1e-12;

    let polar: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| (inclination_of(&s.direction), azimuth_of(&s.direction)))
        .collect();

    let mut intensity = Grid2::filled(h, w, 0.0f64);
    let mut range = Grid2::filled(h, w, 0.0f64);

    for r in 0..h {
        let alpha_t = incl[r];
        let up_span = if r + 1 < h {
            incl[r + 1] - incl[r]
        } else {
            incl[r] - incl[r - 1]
        };
        let down_span = if r > 0 {
            incl[r] - incl[r - 1]
        } else {
            incl[1] - incl[0]
        };
        for c in 0..w {
            let beta_t = target.column_azimuth(c);
            // Quadrants: 0 upper-left, 1 upper-right, 2 lower-left,
            // 3 lower-right. Δα = 0 belongs to both vertical halves so a
            // sample exactly on a ring participates above and below.
            let mut picked: [Option<(usize, f64, f64, f64)>; 4] = [None; 4]; // (idx, dist2, da, db)
            for (i, (alpha_s, beta_s)) in polar.iter().enumerate() {
                // Snap rounding noise from the angle extraction so samples
                // exactly on the grid land exactly on the target.
                let mut da = alpha_s - alpha_t;
                let mut db = crate::types::wrap_angle(beta_s - beta_t);
                if da.abs() < 1e-12 {
                    da = 0.0;
                }
                if db.abs() < 1e-12 {
                    db = 0.0;
                }
                let upper = da >= 0.0 && da <= up_span + pad;
                let lower = da <= 0.0 && -da <= down_span + pad;
                let right = db >= 0.0 && db <= col_span + pad;
                let left = db < 0.0 && -db <= col_span + pad;
                if !(upper || lower) || !(right || left) {
                    continue;
                }
                let dist2 = da * da + db * db;
                let mut quads: [Option<usize>; 2] = [None, None];
                if upper {
                    quads[0] = Some(if right { 1 } else { 0 });
                }
                if lower {
                    quads[1] = Some(if right { 3 } else { 2 });
                }
                for q in quads.into_iter().flatten() {
                    match &picked[q] {
                        Some((_, d2, _, _)) if *d2 <= dist2 => {}
                        _ => picked[q] = Some((i, dist2, da, db)),
                    }
                }
            }
            let (Some(ul), Some(ur), Some(ll), Some(lr)) =
                (picked[0], picked[1], picked[2], picked[3])
            else {
                continue; // empty quadrant: no-return
            };
            let lerp = |a: f64, b: f64, t: f64| -> f64 {
                if t == 0.0 {
                    a
                } else if t == 1.0 {
                    b
                } else {
                    a + (b - a) * t
                }
            };
            let horiz = |left: (usize, f64, f64, f64),
                         right: (usize, f64, f64, f64),
                         value: &dyn Fn(usize) -> f64|
             -> (f64, f64) {
                let (li, _, lda, ldb) = left;
                let (ri, _, rda, rdb) = right;
                // Left Δβ is strictly negative, right is >= 0.
                let t = (0.0 - ldb) / (rdb - ldb);
                (lerp(value(li), value(ri), t), lerp(lda, rda, t))
            };
            let vert = |up: (f64, f64), low: (f64, f64)| -> f64 {
                let (uv, uda) = up;
                let (lv, lda) = low;
                if uda == lda {
                    uv
                } else {
                    let t = (0.0 - lda) / (uda - lda);
                    lerp(lv, uv, t)
                }
            };
            let get_i = |i: usize| samples[i].intensity;
            let get_r = |i: usize| samples[i].range;
            let up_i = horiz(ul, ur, &get_i);
            let low_i = horiz(ll, lr, &get_i);
            intensity.set(r, c, vert(up_i, low_i));
            let up_r = horiz(ul, ur, &get_r);
            let low_r = horiz(ll, lr, &get_r);
            range.set(r, c, vert(up_r, low_r));
        }
    }
    Ok((intensity, range))
}

// ---------------------------------------------------------------------------
// Image export
// ---------------------------------------------------------------------------

/// Range quantization step of the 16-bit PGM export, meters.
pub const RANGE_PGM_STEP: f64 = 0.004;

fn io_err(path: &Path, source: std::io::Error) -> ImagingError {
    ImagingError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_pgm16(path: &Path, grid: &Grid2<f64>, step: f64) -> Result<(), ImagingError> {
    let mut bytes = format!("P5\n{} {}\n65535\n", grid.width(), grid.height()).into_bytes();
    for v in grid.data() {
        let q = (v / step).round().clamp(0.0, 65535.0) as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&bytes).map_err(|e| io_err(path, e))
}

/// 16-bit PGM of an intensity image in [0, 1].
pub fn export_intensity_pgm(path: &Path, grid: &Grid2<f64>) -> Result<(), ImagingError> {
    write_pgm16(path, grid, 1.0 / 65535.0)
}

/// 16-bit PGM of a range image quantized at [`RANGE_PGM_STEP`].
pub fn export_range_pgm(path: &Path, grid: &Grid2<f64>) -> Result<(), ImagingError> {
    write_pgm16(path, grid, RANGE_PGM_STEP)
}

/// 8-bit PGM of a binary mask (255 inside).
pub fn export_mask_pgm(path: &Path, mask: &Grid2<u8>) -> Result<(), ImagingError> {
    let mut bytes = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    bytes.extend(mask.data().iter().map(|m| if *m != 0 { 255u8 } else { 0 }));
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&bytes).map_err(|e| io_err(path, e))
}

/// Parses a binary PGM written by this module.
pub fn read_pgm(path: &Path) -> Result<(u32, Grid2<u32>), ImagingError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let bad = |m: &str| ImagingError::BadImage {
        path: path.display().to_string(),
        message: m.to_string(),
    };
    let header_end = bytes
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == b'\n')
        .nth(2)
        .map(|(i, _)| i + 1)
        .ok_or_else(|| bad("truncated header"))?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| bad("non-utf8 header"))?;
    let mut parts = header.split_ascii_whitespace();
    if parts.next() != Some("P5") {
        return Err(bad("not a P5 file"));
    }
    let w: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad width"))?;
    let h: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad height"))?;
    let maxval: u32 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad maxval"))?;
    let body = &bytes[header_end..];
    let mut data = Vec::with_capacity(w * h);
    if maxval > 255 {
        if body.len() != 2 * w * h {
            return Err(bad("wrong body length"));
        }
        for ch in body.chunks_exact(2) {
            data.push(u32::from(u16::from_be_bytes([ch[0], ch[1]])));
        }
    } else {
        if body.len() != w * h {
            return Err(bad("wrong body length"));
        }
        data.extend(body.iter().map(|b| u32::from(*b)));
    }
    Ok((maxval, Grid2::from_data(h, w, data)))
}

/// Exact CSV of a real-valued raster (lossless f64 round trip).
pub fn write_grid_csv(path: &Path, grid: &Grid2<f64>) -> Result<(), ImagingError> {
    let mut out = String::new();
    for r in 0..grid.height() {
        for c in 0..grid.width() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{}", grid.get(r, c)).expect("string write");
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_grid_csv(path: &Path) -> Result<Grid2<f64>, ImagingError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |m: String| ImagingError::BadImage {
        path: path.display().to_string(),
        message: m,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|t| t.parse::<f64>()).collect();
        rows.push(row.map_err(|e| bad(e.to_string()))?);
    }
    let h = rows.len();
    let w = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != w) {
        return Err(bad("ragged rows".into()));
    }
    Ok(Grid2::from_data(h, w, rows.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Pcg32;
    use crate::synth::{
        generate_world, simulate_scan, ScanConfig, Trajectory, WorldConfig,
    };
    use crate::types::{direction_from_angles, PoseSE3, RayGrid};

    fn paper_grid() -> RayGrid {
        // 64 rings, 1024 columns.
        let incl: Vec<f64> = (0..64)
            .map(|r| (-16.6 + 33.2 * r as f64 / 63.0).to_radians())
            .collect();
        RayGrid::nominal(64, 1024, incl)
    }

    #[test]
    fn simple_project_azimuth_examples() {
        let grid = paper_grid();
        // Azimuth 0 projects to column 0.
        let p = Vec3::new(10.0, 0.0, 0.0);
        assert_eq!(simple_project(&p, &grid).unwrap().1, 0);
        // Azimuth pi with W = 1024 projects to column 512.
        let p = Vec3::new(-10.0, 0.0, 0.0);
        assert_eq!(simple_project(&p, &grid).unwrap().1, 512);
        // Wrap: slightly negative azimuth rounds to the seam column 0.
        let p = Vec3::new(10.0, -1e-9, 0.0);
        assert_eq!(simple_project(&p, &grid).unwrap().1, 0);
    }

    #[test]
    fn simple_project_ring_selection() {
        let grid = paper_grid();
        let alpha5 = grid.ring_inclinations()[5];
        let p = direction_from_angles(alpha5, 1.0) * 20.0;
        assert_eq!(simple_project(&p, &grid).unwrap().0, 5);
        // Zero-norm point errors.
        assert!(simple_project(&Vec3::zeros(), &grid).is_err());
    }

    fn stationary_scan(seed: u64, cfg: &ScanConfig) -> crate::synth::SimulatedScan {
        let world = generate_world(seed, &WorldConfig::default()).unwrap();
        let traj = Trajectory::new(vec![
            PoseSE3::from_translation(Vec3::new(0.0, 0.0, 1.8), 0.0),
            PoseSE3::from_translation(Vec3::new(0.0, 0.0, 1.8), 1.0),
        ])
        .unwrap();
        simulate_scan(&world, &traj, 0.0, 0.1, cfg, 1).unwrap()
    }

    fn moving_scan(seed: u64, speed: f64, cfg: &ScanConfig) -> crate::synth::SimulatedScan {
        let world = generate_world(seed, &WorldConfig::default()).unwrap();
        let traj = Trajectory::linear(
            Vec3::new(0.0, 0.0, 1.8),
            Vec3::new(speed, 0.0, 0.0),
            0.0,
            1.0,
        );
        simulate_scan(&world, &traj, 0.0, 0.1, cfg, 1).unwrap()
    }

    #[test]
    fn aligned_equals_simple_for_stationary_scan() {
        let cfg = ScanConfig::default();
        let scan = stationary_scan(21, &cfg);
        let margins = ProjectionMargins::default();
        for (i, p) in scan.points_grid.iter().enumerate().step_by(11) {
            let a = aligned_project(p, &scan.grid, &margins).unwrap();
            let s = simple_project(p, &scan.grid).unwrap();
            assert_eq!(a, s, "point {i}");
        }
    }

    #[test]
    fn aligned_project_returns_source_pixel_on_moving_scan() {
        let cfg = ScanConfig::default();
        let scan = moving_scan(22, 10.0, &cfg);
        let margins = ProjectionMargins::default();
        for (i, p) in scan.points_grid.iter().enumerate().step_by(7) {
            let point = &scan.points[i];
            let col = ((point.timestamp / scan.period * cfg.width as f64).round() as usize)
                % cfg.width;
            let aligned = aligned_project(p, &scan.grid, &margins).unwrap();
            let brute = brute_force_project(p, &scan.grid).unwrap();
            assert_eq!(aligned, brute, "windowed vs global for point {i}");
            assert_eq!(aligned, (point.ring, col), "source pixel for point {i}");
        }
    }

    #[test]
    fn margins_cover_global_argmin_at_speed() {
        // Spot version of the acceptance sweep: one fast scan, all points.
        let cfg = ScanConfig::default();
        let scan = moving_scan(23, 15.0, &cfg);
        let margins = ProjectionMargins::default();
        for p in scan.points_grid.iter().step_by(3) {
            assert_eq!(
                aligned_project(p, &scan.grid, &margins).unwrap(),
                brute_force_project(p, &scan.grid).unwrap()
            );
        }
    }

    #[test]
    fn mask_of_fully_occluded_segment_is_empty() {
        // A wall in front of the sensor occludes a box behind it; points of
        // the box (taken from a wall-free world) never match the stored
        // ranges of the walled scan.
        use crate::synth::{SceneObject, Shape, Texture, World};
        let box_obj = SceneObject {
            id: 1,
            shape: Shape::Box {
                half_extents: Vec3::new(1.0, 3.0, 3.0),
            },
            pose: PoseSE3::from_translation(Vec3::new(20.0, 0.0, 0.0), 0.0),
            texture: Texture::flat(0.8),
        };
        let wall = SceneObject {
            id: 2,
            shape: Shape::Box {
                half_extents: Vec3::new(0.2, 8.0, 8.0),
            },
            pose: PoseSE3::from_translation(Vec3::new(8.0, 0.0, 0.0), 0.0),
            texture: Texture::flat(0.5),
        };
        let traj = Trajectory::new(vec![
            PoseSE3::from_translation(Vec3::new(0.0, 0.0, 1.8), 0.0),
            PoseSE3::from_translation(Vec3::new(0.0, 0.0, 1.8), 1.0),
        ])
        .unwrap();
        let cfg = ScanConfig::default();
        let open_world = World {
            objects: vec![box_obj.clone()],
            ground: Texture::flat(0.3),
            seed: 0,
        };
        let walled_world = World {
            objects: vec![box_obj, wall],
            ground: Texture::flat(0.3),
            seed: 0,
        };
        let open = simulate_scan(&open_world, &traj, 0.0, 0.1, &cfg, 1).unwrap();
        let walled = simulate_scan(&walled_world, &traj, 0.0, 0.1, &cfg, 1).unwrap();
        let box_points: Vec<Vec3> = open
            .points_grid
            .iter()
            .zip(open.point_object_ids.iter())
            .filter(|(_, id)| **id == 1)
            .map(|(p, _)| *p)
            .collect();
        assert!(!box_points.is_empty());
        let mask =
            compute_mask_points(&box_points, &walled.grid, &ProjectionMargins::default(), 0.2)
                .unwrap();
        assert_eq!(mask.data().iter().filter(|m| **m != 0).count(), 0);
    }

    #[test]
    fn unoccluded_segment_mask_matches_ground_truth_ids() {
        let cfg = ScanConfig::default();
        let scan = stationary_scan(25, &cfg);
        let margins = ProjectionMargins::default();
        // Pick the object with the most returns.
        let mut counts = std::collections::BTreeMap::new();
        for id in &scan.point_object_ids {
            *counts.entry(*id).or_insert(0usize) += 1;
        }
        let (&best_id, _) = counts
            .iter()
            .filter(|(id, _)| **id > 0)
            .max_by_key(|(_, n)| **n)
            .unwrap();
        let points: Vec<Vec3> = scan
            .points_grid
            .iter()
            .zip(scan.point_object_ids.iter())
            .filter(|(_, id)| **id == best_id)
            .map(|(p, _)| *p)
            .collect();
        let mask = compute_mask_points(&points, &scan.grid, &margins, 0.2).unwrap();
        let truth = id_mask(&scan.pixel_object_ids, best_id);
        assert_eq!(mask, truth);
    }

    #[test]
    fn points_behind_stored_range_are_excluded() {
        let cfg = ScanConfig::default();
        let scan = stationary_scan(26, &cfg);
        // Shift points radially outward beyond the tolerance.
        let shifted: Vec<Vec3> = scan
            .points_grid
            .iter()
            .take(500)
            .map(|p| p * (1.0 + 1.0 / p.norm()))
            .collect();
        let mask =
            compute_mask_points(&shifted, &scan.grid, &ProjectionMargins::default(), 0.2).unwrap();
        assert_eq!(mask.data().iter().filter(|m| **m != 0).count(), 0);
    }

    #[test]
    fn mask_pixels_subset_of_returns() {
        let cfg = ScanConfig::default();
        let scan = moving_scan(27, 8.0, &cfg);
        let mask = compute_mask_points(
            &scan.points_grid,
            &scan.grid,
            &ProjectionMargins::default(),
            0.2,
        )
        .unwrap();
        for (m, r) in mask.data().iter().zip(scan.grid.ranges().iter()) {
            assert!(*m == 0 || *r > 0.0);
        }
    }

    #[test]
    fn build_view_examples() {
        let cfg = ScanConfig::default();
        let scan = stationary_scan(28, &cfg);
        let zero = Grid2::filled(cfg.height, cfg.width, 0u8);
        let view = build_visual_view(&scan.grid, zero).unwrap();
        assert_eq!(view.mask_area, 0);
        // 50-pixel mask on pixels that have returns.
        let mut m = Grid2::filled(cfg.height, cfg.width, 0u8);
        let mut placed = 0;
        for r in 0..cfg.height {
            for c in 0..cfg.width {
                if placed < 50 && scan.grid.range(r, c) > 0.0 {
                    m.set(r, c, 1);
                    placed += 1;
                }
            }
        }
        let view = build_visual_view(&scan.grid, m).unwrap();
        assert_eq!(view.mask_area, 50);
        // Shape mismatch errors.
        let small = Grid2::filled(2, 2, 0u8);
        assert!(build_visual_view(&scan.grid, small).is_err());
    }

    // -- interpolation ------------------------------------------------------

    fn grid_samples(grid: &RayGrid, values: impl Fn(f64, f64) -> (f64, f64)) -> Vec<DirSample> {
        let mut out = Vec::new();
        for r in 0..grid.height() {
            for c in 0..grid.width() {
                let a = grid.ring_inclinations()[r];
                let b = grid.column_azimuth(c);
                let (range, intensity) = values(a, b);
                out.push(DirSample {
                    direction: direction_from_angles(a, b),
                    range,
                    intensity,
                });
            }
        }
        out
    }

    #[test]
    fn interpolation_identity_on_grid_samples() {
        let incl: Vec<f64> = (0..8).map(|r| (-0.3) + 0.6 * r as f64 / 7.0).collect();
        let grid = RayGrid::nominal(8, 32, incl);
        let samples = grid_samples(&grid, |a, b| (5.0 + a + b, 0.25 + 0.5 * (a + b).sin().abs()));
        let (intensity, range) = interpolate_irregular(&samples, &grid).unwrap();
        for r in 0..8 {
            for c in 0..32 {
                let i = r * 32 + c;
                assert_eq!(intensity.data()[i], samples[i].intensity, "pixel {r},{c}");
                assert_eq!(range.data()[i], samples[i].range, "pixel {r},{c}");
            }
        }
    }

    #[test]
    fn interpolation_midpoint_of_two_azimuth_samples() {
        let incl: Vec<f64> = (0..4).map(|r| -0.15 + 0.1 * r as f64).collect();
        let grid = RayGrid::nominal(4, 16, incl.clone());
        let col = std::f64::consts::TAU / 16.0;
        // Two samples around column 2's azimuth at ring-1 inclination,
        // intensities 0 and 1; plus far fillers so the sample count is >= 4.
        let a1 = incl[1];
        let b2 = 2.0 * col;
        let delta = 0.3 * col;
        let mut samples = vec![
            DirSample {
                direction: direction_from_angles(a1, b2 - delta),
                range: 10.0,
                intensity: 0.0,
            },
            DirSample {
                direction: direction_from_angles(a1, b2 + delta),
                range: 10.0,
                intensity: 1.0,
            },
        ];
        // Lower-ring pair so the vertical step has data.
        samples.push(DirSample {
            direction: direction_from_angles(incl[0], b2 - delta),
            range: 10.0,
            intensity: 0.0,
        });
        samples.push(DirSample {
            direction: direction_from_angles(incl[0], b2 + delta),
            range: 10.0,
            intensity: 1.0,
        });
        let (intensity, _) = interpolate_irregular(&samples, &grid).unwrap();
        assert!((intensity.get(1, 2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_linear_fields_on_jittered_samples() {
        let incl: Vec<f64> = (0..10).map(|r| -0.25 + 0.5 * r as f64 / 9.0).collect();
        let grid = RayGrid::nominal(10, 48, incl.clone());
        let mut rng = Pcg32::new(99);
        let col = std::f64::consts::TAU / 48.0;
        let row = 0.5 / 9.0;
        // Jittered samples on a lattice twice as fine as the target grid;
        // every quadrant bin of every interior pixel keeps a sample.
        let mut samples = Vec::new();
        let field = |a: f64, b: f64| 2.0 + 3.0 * a + 0.5 * b;
        for r2 in 0..19 {
            for c2 in 0..96 {
                let a = incl[0] + 0.5 * row * r2 as f64 + rng.uniform(-0.4, 0.4) * 0.5 * row;
                let b = 0.5 * col * c2 as f64 + rng.uniform(-0.4, 0.4) * 0.5 * col;
                samples.push(DirSample {
                    direction: direction_from_angles(a, b),
                    range: field(a, b) + 7.0,
                    intensity: field(a, b),
                });
            }
        }
        let (intensity, range) = interpolate_irregular(&samples, &grid).unwrap();
        let mut checked = 0;
        // A field linear in azimuth cannot be continuous across the seam,
        // so the linearity property is checked away from it. Edge rings may
        // lack a vertical quadrant and become no-return.
        for r in 0..10 {
            for c in 2..46 {
                let v = *intensity.get(r, c);
                let rg = *range.get(r, c);
                if v == 0.0 && rg == 0.0 {
                    assert!(
                        r == 0 || r == 9,
                        "interior pixel {r},{c} unexpectedly empty"
                    );
                    continue;
                }
                let a = incl[r];
                let b = grid.column_azimuth(c);
                assert!(
                    (v - field(a, b)).abs() <= 1e-6,
                    "intensity error {} at {r},{c}",
                    (v - field(a, b)).abs()
                );
                assert!((rg - (field(a, b) + 7.0)).abs() <= 1e-6);
                checked += 1;
            }
        }
        assert!(checked >= 352, "only {checked} pixels interpolated");
    }

    #[test]
    fn interpolation_requires_four_samples() {
        let grid = RayGrid::nominal(4, 8, vec![-0.1, 0.0, 0.1, 0.2]);
        let s = DirSample {
            direction: Vec3::x(),
            range: 1.0,
            intensity: 1.0,
        };
        assert!(interpolate_irregular(&[s, s, s], &grid).is_err());
    }

    // -- image io -----------------------------------------------------------

    #[test]
    fn pgm_round_trip_is_byte_identical() {
        let dir = std::env::temp_dir().join(format!("segloc_pgm_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut rng = Pcg32::new(5);
        let grid = Grid2::from_data(6, 9, (0..54).map(|_| rng.next_f64()).collect());
        let p1 = dir.join("a.pgm");
        export_intensity_pgm(&p1, &grid).unwrap();
        let (maxval, img) = read_pgm(&p1).unwrap();
        assert_eq!(maxval, 65535);
        let back = Grid2::from_data(
            6,
            9,
            img.data().iter().map(|v| *v as f64 / 65535.0).collect(),
        );
        let p2 = dir.join("b.pgm");
        export_intensity_pgm(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn grid_csv_round_trip_is_exact() {
        let dir = std::env::temp_dir().join(format!("segloc_csv_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut rng = Pcg32::new(6);
        let grid = Grid2::from_data(
            5,
            7,
            (0..35)
                .map(|_| rng.normal(0.0, 10.0) * rng.next_f64())
                .collect(),
        );
        let path = dir.join("grid.csv");
        write_grid_csv(&path, &grid).unwrap();
        let back = read_grid_csv(&path).unwrap();
        assert_eq!(grid, back);
    }
}
