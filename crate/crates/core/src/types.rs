//! Shared domain types and geometry primitives.
//!
//! Conventions used across the crate:
//!
//! - Angles are in radians. The azimuth of a point is measured
//!   counterclockwise from the sensor +x axis and normalized to `[0, 2π)`;
//!   the inclination is the elevation above the x-y plane.
//! - All geometry runs in 64-bit floats. Network tensors are 32-bit and are
//!   handled in [`crate::net`].
//! - Value types are immutable after construction and safe to share across
//!   threads.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance for rotation orthonormality checks.
pub const ROTATION_TOL: f64 = 1e-9;

/// Dimension of a segment descriptor.
pub const DESCRIPTOR_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum TypeError {
    #[error("matrix is not a rotation: max |R^T R - I| = {ortho:.3e}, det = {det}")]
    NotARotation { ortho: f64, det: f64 },
    #[error("segment identity mismatch: {left} vs {right}")]
    SegmentIdMismatch { left: u64, right: u64 },
    #[error("completeness must lie in (0, 1], got {0}")]
    InvalidCompleteness(f64),
    #[error("final segment has no points")]
    EmptyFinalSegment,
    #[error("descriptor must have {expected} finite components, got {got}")]
    BadDescriptor { expected: usize, got: usize },
    #[error("descriptor component {index} is not finite")]
    NonFiniteDescriptor { index: usize },
    #[error("segment must contain at least one point")]
    EmptySegment,
    #[error("segment observation counts decrease at index {0}")]
    DecreasingObservations(usize),
    #[error("ray grid is invalid: {0}")]
    BadRayGrid(String),
    #[error("timestamps must be strictly increasing at index {0}")]
    NonIncreasingTimestamps(usize),
}

// ---------------------------------------------------------------------------
// Angles
// ---------------------------------------------------------------------------

/// Azimuth of `p` in `[0, 2π)`, counterclockwise from +x.
pub fn azimuth_of(p: &Vec3) -> f64 {
    let mut b = p.y.atan2(p.x);
    if b < 0.0 {
        b += std::f64::consts::TAU;
    }
    if b >= std::f64::consts::TAU {
        b = 0.0;
    }
    b
}

/// Inclination of `p` above the x-y plane, in `[-π/2, π/2]`.
pub fn inclination_of(p: &Vec3) -> f64 {
    p.z.atan2((p.x * p.x + p.y * p.y).sqrt())
}

/// Unit direction for a given inclination and azimuth.
pub fn direction_from_angles(inclination: f64, azimuth: f64) -> Vec3 {
    let (si, ci) = inclination.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vec3::new(ci * ca, ci * sa, si)
}

/// Wraps an angle difference into `(-π, π]`.
pub fn wrap_angle(mut d: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    while d > PI {
        d -= TAU;
    }
    while d <= -PI {
        d += TAU;
    }
    d
}

// ---------------------------------------------------------------------------
// Rigid pose
// ---------------------------------------------------------------------------

/// A rigid transform with a timestamp. Applying the pose maps local
/// coordinates into the parent frame: `x' = R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    rotation: Mat3,
    translation: Vec3,
    timestamp: f64,
}

impl PoseSE3 {
    pub fn new(rotation: Mat3, translation: Vec3, timestamp: f64) -> Result<Self, TypeError> {
        let (ortho, det) = rotation_defect(&rotation);
        if ortho > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(TypeError::NotARotation { ortho, det });
        }
        Ok(Self {
            rotation,
            translation,
            timestamp,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            timestamp: 0.0,
        }
    }

    pub fn from_translation(t: Vec3, timestamp: f64) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: t,
            timestamp,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    /// Standard SE(3) composition: `(self ∘ other)(x) = self(other(x))`.
    /// The result carries the right operand's timestamp. The rotation is
    /// re-orthonormalized if the product drifts beyond [`ROTATION_TOL`].
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        let mut rotation = self.rotation * other.rotation;
        let (ortho, det) = rotation_defect(&rotation);
        if ortho > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            rotation = nearest_rotation(&rotation);
        }
        PoseSE3 {
            rotation,
            translation: self.rotation * other.translation + self.translation,
            timestamp: other.timestamp,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
            timestamp: self.timestamp,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }
}

fn rotation_defect(r: &Mat3) -> (f64, f64) {
    let gram = r.transpose() * r;
    let mut ortho: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((gram[(i, j)] - target).abs());
        }
    }
    (ortho, r.determinant())
}

/// Nearest rotation in the Frobenius sense, via the polar decomposition.
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fixed = u;
        for i in 0..3 {
            u_fixed[(i, 2)] = -u_fixed[(i, 2)];
        }
        r = u_fixed * v_t;
    }
    r
}

// ---------------------------------------------------------------------------
// Scan data
// ---------------------------------------------------------------------------

/// A single laser return in the sensor frame at emission time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPoint {
    /// Position in the sensor frame at emission time, meters.
    pub position: Vec3,
    /// Reflectance readout, unitless, non-negative.
    pub intensity: f64,
    /// Scanning ring (image row) index.
    pub ring: usize,
    /// Time offset within the revolution, seconds.
    pub timestamp: f64,
}

/// A generic rectangular raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid2<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), height * width, "grid data length");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[self.idx(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let i = self.idx(row, col);
        self.data[i] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_shape<U>(&self, other: &Grid2<U>) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Per-pixel scanning rays of one revolution, expressed in the grid frame
/// (the sensor pose at the start of the revolution).
///
/// For pixels with a return, `direction` points from the grid origin to the
/// measured point; without a return it is the emission direction rotated
/// into the grid frame. `column_origin` is the sensor position at the
/// column's emission time, in the grid frame (zero for a stationary scan).
#[derive(Clone, Debug)]
pub struct RayGrid {
    height: usize,
    width: usize,
    directions: Vec<Vec3>,
    ranges: Vec<f64>,
    intensities: Vec<f64>,
    timestamps: Vec<f64>,
    ring_inclinations: Vec<f64>,
    column_origins: Vec<Vec3>,
}

impl RayGrid {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        height: usize,
        width: usize,
        ring_inclinations: Vec<f64>,
        directions: Vec<Vec3>,
        ranges: Vec<f64>,
        intensities: Vec<f64>,
        timestamps: Vec<f64>,
        column_origins: Vec<Vec3>,
    ) -> Result<Self, TypeError> {
        let n = height * width;
        if directions.len() != n
            || ranges.len() != n
            || intensities.len() != n
            || timestamps.len() != n
        {
            return Err(TypeError::BadRayGrid(format!(
                "field lengths do not match {height}x{width}"
            )));
        }
        if ring_inclinations.len() != height {
            return Err(TypeError::BadRayGrid(
                "ring inclination count != height".into(),
            ));
        }
        if column_origins.len() != width {
            return Err(TypeError::BadRayGrid("column origin count != width".into()));
        }
        for w in ring_inclinations.windows(2) {
            if w[1] <= w[0] {
                return Err(TypeError::BadRayGrid(
                    "ring inclinations must be strictly increasing".into(),
                ));
            }
        }
        for (i, d) in directions.iter().enumerate() {
            if (d.norm() - 1.0).abs() > ROTATION_TOL {
                return Err(TypeError::BadRayGrid(format!(
                    "direction {i} has norm {}",
                    d.norm()
                )));
            }
        }
        if let Some(i) = ranges.iter().position(|r| *r < 0.0 || !r.is_finite()) {
            return Err(TypeError::BadRayGrid(format!("range {i} is negative")));
        }
        Ok(Self {
            height,
            width,
            directions,
            ranges,
            intensities,
            timestamps,
            ring_inclinations,
            column_origins,
        })
    }

    /// Grid with nominal directions, no returns; mainly for tests.
    pub fn nominal(height: usize, width: usize, ring_inclinations: Vec<f64>) -> Self {
        let mut directions = Vec::with_capacity(height * width);
        for inclination in &ring_inclinations {
            for c in 0..width {
                let beta = std::f64::consts::TAU * c as f64 / width as f64;
                directions.push(direction_from_angles(*inclination, beta));
            }
        }
        Self::new(
            height,
            width,
            ring_inclinations,
            directions,
            vec![0.0; height * width],
            vec![0.0; height * width],
            vec![0.0; height * width],
            vec![Vec3::zeros(); width],
        )
        .expect("nominal grid")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    #[inline]
    pub fn direction(&self, row: usize, col: usize) -> &Vec3 {
        &self.directions[self.idx(row, col)]
    }

    #[inline]
    pub fn range(&self, row: usize, col: usize) -> f64 {
        self.ranges[self.idx(row, col)]
    }

    #[inline]
    pub fn intensity(&self, row: usize, col: usize) -> f64 {
        self.intensities[self.idx(row, col)]
    }

    #[inline]
    pub fn timestamp(&self, row: usize, col: usize) -> f64 {
        self.timestamps[self.idx(row, col)]
    }

    #[inline]
    pub fn column_origin(&self, col: usize) -> &Vec3 {
        &self.column_origins[col]
    }

    pub fn ring_inclinations(&self) -> &[f64] {
        &self.ring_inclinations
    }

    /// Flat row-major view of all pixel directions.
    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn column_azimuth(&self, col: usize) -> f64 {
        std::f64::consts::TAU * col as f64 / self.width as f64
    }

    /// Nominal direction derived from the ring inclination and the column
    /// azimuth, ignoring any stored per-pixel direction.
    pub fn nominal_direction(&self, row: usize, col: usize) -> Vec3 {
        direction_from_angles(self.ring_inclinations[row], self.column_azimuth(col))
    }
}

// ---------------------------------------------------------------------------
// Segments and views
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub timestamp: f64,
    pub point_count: usize,
}

/// A cluster of points accumulated over scans, in a common map frame.
#[derive(Clone, Debug)]
pub struct Segment {
    id: u64,
    points: Vec<Vec3>,
    centroid: Vec3,
    observations: Vec<Observation>,
    class_label: Option<u32>,
}

impl Segment {
    pub fn new(
        id: u64,
        points: Vec<Vec3>,
        observations: Vec<Observation>,
        class_label: Option<u32>,
    ) -> Result<Self, TypeError> {
        if points.is_empty() {
            return Err(TypeError::EmptySegment);
        }
        for (i, w) in observations.windows(2).enumerate() {
            if w[1].point_count < w[0].point_count {
                return Err(TypeError::DecreasingObservations(i + 1));
            }
        }
        let centroid = centroid_of(&points);
        Ok(Self {
            id,
            points,
            centroid,
            observations,
            class_label,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn centroid(&self) -> &Vec3 {
        &self.centroid
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn class_label(&self) -> Option<u32> {
        self.class_label
    }
}

pub fn centroid_of(points: &[Vec3]) -> Vec3 {
    let mut sum = Vec3::zeros();
    for p in points {
        sum += p;
    }
    sum / points.len() as f64
}

/// Aligned intensity image, range image and binary segment mask.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualView {
    pub intensity: Grid2<f64>,
    pub range: Grid2<f64>,
    pub mask: Grid2<u8>,
    pub timestamp: f64,
    pub mask_area: usize,
}

// ---------------------------------------------------------------------------
// Descriptor and completeness
// ---------------------------------------------------------------------------

/// 64-component segment descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    values: [f64; DESCRIPTOR_DIM],
}

impl Descriptor {
    pub fn new(values: &[f64]) -> Result<Self, TypeError> {
        if values.len() != DESCRIPTOR_DIM {
            return Err(TypeError::BadDescriptor {
                expected: DESCRIPTOR_DIM,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(TypeError::NonFiniteDescriptor { index });
        }
        let mut array = [0.0; DESCRIPTOR_DIM];
        array.copy_from_slice(values);
        Ok(Self { values: array })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        let mut acc = 0.0;
        for i in 0..DESCRIPTOR_DIM {
            let d = self.values[i] - other.values[i];
            acc += d * d;
        }
        acc.sqrt()
    }
}

/// Fraction of a segment's final point count seen so far, in (0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Completeness(f64);

impl Completeness {
    pub fn new(value: f64) -> Result<Self, TypeError> {
        if !(value > 0.0 && value <= 1.0) {
            return Err(TypeError::InvalidCompleteness(value));
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Completeness of `segment_at_t` relative to the final merged segment.
pub fn completeness(segment_at_t: &Segment, final_segment: &Segment) -> Result<Completeness, TypeError> {
    if segment_at_t.id() != final_segment.id() {
        return Err(TypeError::SegmentIdMismatch {
            left: segment_at_t.id(),
            right: final_segment.id(),
        });
    }
    if final_segment.points().is_empty() {
        return Err(TypeError::EmptyFinalSegment);
    }
    Completeness::new(segment_at_t.points().len() as f64 / final_segment.points().len() as f64)
}
