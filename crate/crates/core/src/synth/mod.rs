//! Deterministic synthetic LiDAR simulator.
//!
//! A [`World`] is a ground plane plus box/cylinder objects carrying
//! procedural reflectivity textures. [`simulate_scan`] ray-casts one
//! revolution of a spinning multi-beam sensor with a column-synchronous
//! rolling shutter: every column is emitted from the trajectory pose at its
//! own timestamp. The output grid is expressed in the frame of the sensor
//! pose at the start of the revolution.

mod archive;
mod scenario;
mod trajectory;

pub use archive::{
    export_point_records, import_point_records, read_scan_archive, write_scan_archive,
    ArchiveError, LoadedArchive,
};
pub use scenario::{
    aliased_stress, corridor, CorridorConfig, Scenario, SequenceSpec, STRESS_MAX_RANGE,
};
pub use trajectory::Trajectory;

use crate::rng::{derive_seed, Pcg32, SplitMix64};
use crate::types::{direction_from_angles, Grid2, PoseSE3, ScanPoint, RayGrid, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("trajectory does not cover scan interval [{start}, {end}]")]
    TrajectoryGap { start: f64, end: f64 },
    #[error("trajectory needs at least one waypoint")]
    EmptyTrajectory,
    #[error("waypoint timestamps must be strictly increasing at index {0}")]
    NonIncreasingWaypoints(usize),
    #[error("could not place object {0} without overlap")]
    PlacementFailed(usize),
}

// ---------------------------------------------------------------------------
// World
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Box { half_extents: Vec3 },
    Cylinder { radius: f64, half_height: f64 },
}

impl Shape {
    /// Radius of the bounding circle in the x-y plane.
    pub fn footprint_radius(&self) -> f64 {
        match self {
            Shape::Box { half_extents } => (half_extents.x * half_extents.x
                + half_extents.y * half_extents.y)
                .sqrt(),
            Shape::Cylinder { radius, .. } => *radius,
        }
    }

    fn face_count(&self) -> usize {
        match self {
            Shape::Box { .. } => 6,
            Shape::Cylinder { .. } => 3,
        }
    }
}

/// Procedural reflectivity: a per-face base value plus smooth value noise
/// over the surface point in the object frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    pub face_base: Vec<f64>,
    pub noise_amplitude: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Texture {
    pub fn flat(value: f64) -> Self {
        Self {
            face_base: vec![value],
            noise_amplitude: 0.0,
            noise_scale: 1.0,
            seed: 0,
        }
    }

    pub fn sample(&self, face: usize, local_point: &Vec3) -> f64 {
        let base = self.face_base[face.min(self.face_base.len() - 1)];
        if self.noise_amplitude == 0.0 {
            return base.clamp(0.0, 1.0);
        }
        let n = value_noise3(
            self.seed,
            local_point.x / self.noise_scale,
            local_point.y / self.noise_scale,
            local_point.z / self.noise_scale,
        );
        (base + self.noise_amplitude * (2.0 * n - 1.0)).clamp(0.0, 1.0)
    }
}

fn lattice_hash(seed: u64, ix: i64, iy: i64, iz: i64) -> f64 {
    let key = seed
        ^ (ix as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (iy as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
        ^ (iz as u64).wrapping_mul(0x1656_67b1_9e37_79f9);
    let mut sm = SplitMix64::new(key);
    (sm.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Trilinear value noise in [0, 1].
fn value_noise3(seed: u64, x: f64, y: f64, z: f64) -> f64 {
    let (ix, iy, iz) = (x.floor() as i64, y.floor() as i64, z.floor() as i64);
    let (fx, fy, fz) = (x - x.floor(), y - y.floor(), z - z.floor());
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 0 { 1.0 - fx } else { fx })
                    * (if dy == 0 { 1.0 - fy } else { fy })
                    * (if dz == 0 { 1.0 - fz } else { fz });
                acc += w * lattice_hash(seed, ix + dx, iy + dy, iz + dz);
            }
        }
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub id: i64,
    pub shape: Shape,
    pub pose: PoseSE3,
    pub texture: Texture,
}

/// Object id assigned to ground-plane returns.
pub const GROUND_ID: i64 = 0;
/// Id stored in label images for pixels without a return.
pub const NO_RETURN_ID: i64 = -1;

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub objects: Vec<SceneObject>,
    pub ground: Texture,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct WorldConfig {
    pub n_objects: usize,
    pub aliasing: bool,
    /// Object centers are drawn with x in this range.
    pub x_range: (f64, f64),
    /// Absolute y of object centers is drawn from this band (either side).
    pub y_band: (f64, f64),
    pub noise_amplitude: f64,
    pub noise_scale: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_objects: 20,
            aliasing: false,
            x_range: (-60.0, 60.0),
            y_band: (6.0, 18.0),
            noise_amplitude: 0.15,
            noise_scale: 0.3,
        }
    }
}

fn random_shape(rng: &mut Pcg32) -> Shape {
    if rng.next_f64() < 0.5 {
        Shape::Box {
            half_extents: Vec3::new(
                rng.uniform(0.5, 1.8),
                rng.uniform(0.5, 1.8),
                rng.uniform(0.8, 2.4),
            ),
        }
    } else {
        Shape::Cylinder {
            radius: rng.uniform(0.4, 1.4),
            half_height: rng.uniform(0.8, 2.6),
        }
    }
}

fn random_texture(rng: &mut Pcg32, faces: usize, config: &WorldConfig) -> Texture {
    Texture {
        face_base: (0..faces).map(|_| rng.uniform(0.15, 0.95)).collect(),
        noise_amplitude: config.noise_amplitude,
        noise_scale: config.noise_scale,
        seed: rng.next_u64(),
    }
}

fn yaw_pose(x: f64, y: f64, z: f64, yaw: f64) -> PoseSE3 {
    let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), yaw)
        .matrix()
        .to_owned();
    PoseSE3::new(r, Vec3::new(x, y, z), 0.0).expect("yaw pose")
}

/// Generates a deterministic world. With `aliasing` enabled, a portion of the
/// objects is created in shape-identical pairs with distinct textures and
/// placements.
pub fn generate_world(seed: u64, config: &WorldConfig) -> Result<World, SynthError> {
    let mut rng = Pcg32::new(derive_seed(seed, "world"));
    let ground = Texture {
        face_base: vec![0.35],
        noise_amplitude: config.noise_amplitude,
        noise_scale: 2.0,
        seed: rng.next_u64(),
    };
    let mut objects: Vec<SceneObject> = Vec::with_capacity(config.n_objects);
    let mut placed: Vec<(f64, f64, f64)> = Vec::new(); // (x, y, footprint)

    let place = |rng: &mut Pcg32,
                     shape: Shape,
                     texture: Texture,
                     id: i64,
                     placed: &mut Vec<(f64, f64, f64)>|
     -> Result<SceneObject, SynthError> {
        let footprint = shape.footprint_radius();
        let z = match &shape {
            Shape::Box { half_extents } => half_extents.z,
            Shape::Cylinder { half_height, .. } => *half_height,
        };
        for _ in 0..200 {
            let x = rng.uniform(config.x_range.0, config.x_range.1);
            let side = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
            let y = side * rng.uniform(config.y_band.0, config.y_band.1);
            let ok = placed
                .iter()
                .all(|(px, py, pf)| ((x - px).powi(2) + (y - py).powi(2)).sqrt() > footprint + pf + 1.0);
            if ok {
                placed.push((x, y, footprint));
                let yaw = rng.uniform(0.0, std::f64::consts::TAU);
                return Ok(SceneObject {
                    id,
                    shape,
                    pose: yaw_pose(x, y, z, yaw),
                    texture,
                });
            }
        }
        Err(SynthError::PlacementFailed(id as usize))
    };

    let pair_count = if config.aliasing {
        (config.n_objects / 6).max(2).min(config.n_objects / 2)
    } else {
        0
    };
    let mut next_id: i64 = 1;
    for _ in 0..pair_count {
        let shape = random_shape(&mut rng);
        for _ in 0..2 {
            let texture = random_texture(&mut rng, shape.face_count(), config);
            objects.push(place(&mut rng, shape.clone(), texture, next_id, &mut placed)?);
            next_id += 1;
        }
    }
    while objects.len() < config.n_objects {
        let shape = random_shape(&mut rng);
        let texture = random_texture(&mut rng, shape.face_count(), config);
        objects.push(place(&mut rng, shape, texture, next_id, &mut placed)?);
        next_id += 1;
    }
    Ok(World {
        objects,
        ground,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Ray casting
// ---------------------------------------------------------------------------

const RAY_EPS: f64 = 1e-9;

struct Hit {
    t: f64,
    face: usize,
    local: Vec3,
}

fn intersect_box(half: &Vec3, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    let mut enter_face = 0usize;
    for axis in 0..3 {
        let o = origin[axis];
        let d = dir[axis];
        let h = half[axis];
        if d.abs() < 1e-300 {
            if o.abs() > h {
                return None;
            }
            continue;
        }
        let mut t1 = (-h - o) / d;
        let mut t2 = (h - o) / d;
        let mut face = if d > 0.0 { axis * 2 } else { axis * 2 + 1 };
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
            face = if d > 0.0 { axis * 2 + 1 } else { axis * 2 };
        }
        if t1 > t_enter {
            t_enter = t1;
            enter_face = face;
        }
        t_exit = t_exit.min(t2);
    }
    if t_exit < t_enter || t_enter <= RAY_EPS {
        return None;
    }
    Some(Hit {
        t: t_enter,
        face: enter_face,
        local: origin + dir * t_enter,
    })
}

fn intersect_cylinder(radius: f64, half_height: f64, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut consider = |t: f64, face: usize, local: Vec3| {
        if t > RAY_EPS && best.as_ref().is_none_or(|b| t < b.t) {
            best = Some(Hit { t, face, local });
        }
    };
    let a = dir.x * dir.x + dir.y * dir.y;
    if a > 1e-300 {
        let b = 2.0 * (origin.x * dir.x + origin.y * dir.y);
        let c = origin.x * origin.x + origin.y * origin.y - radius * radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let p = origin + dir * t;
                if p.z.abs() <= half_height {
                    consider(t, 0, p);
                }
            }
        }
    }
    if dir.z.abs() > 1e-300 {
        for (zc, face) in [(half_height, 1), (-half_height, 2)] {
            let t = (zc - origin.z) / dir.z;
            let p = origin + dir * t;
            if p.x * p.x + p.y * p.y <= radius * radius {
                consider(t, face, p);
            }
        }
    }
    best
}

/// Nearest surface hit along a world-frame ray, or `None`.
/// Returns (range, object id, reflectivity).
pub fn cast_ray(world: &World, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<(f64, i64, f64)> {
    let mut best_t = max_range;
    let mut best: Option<(i64, f64)> = None;
    // Ground plane z = 0.
    if dir.z < -1e-300 {
        let t = -origin.z / dir.z;
        if t > RAY_EPS && t <= best_t {
            let p = origin + dir * t;
            best_t = t;
            best = Some((GROUND_ID, world.ground.sample(0, &p)));
        }
    }
    for obj in &world.objects {
        let lo = obj.pose.inverse_transform_point(origin);
        let ld = obj.pose.rotation().transpose() * dir;
        let hit = match &obj.shape {
            Shape::Box { half_extents } => intersect_box(half_extents, &lo, &ld),
            Shape::Cylinder {
                radius,
                half_height,
            } => intersect_cylinder(*radius, *half_height, &lo, &ld),
        };
        if let Some(h) = hit {
            if h.t <= best_t {
                best_t = h.t;
                best = Some((obj.id, obj.texture.sample(h.face, &h.local)));
            }
        }
    }
    best.map(|(id, refl)| (best_t, id, refl))
}

// ---------------------------------------------------------------------------
// Scan simulation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ScanConfig {
    pub height: usize,
    pub width: usize,
    pub fov_down: f64,
    pub fov_up: f64,
    pub max_range: f64,
    /// Reference range of the intensity falloff model.
    pub r0: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 256,
            fov_down: -16.6_f64.to_radians(),
            fov_up: 16.6_f64.to_radians(),
            max_range: 120.0,
            r0: 5.0,
        }
    }
}

impl ScanConfig {
    pub fn ring_inclinations(&self) -> Vec<f64> {
        let h = self.height;
        (0..h)
            .map(|r| self.fov_down + (self.fov_up - self.fov_down) * r as f64 / (h - 1) as f64)
            .collect()
    }
}

/// One simulated revolution plus its ground truth.
#[derive(Clone, Debug)]
pub struct SimulatedScan {
    pub grid: RayGrid,
    pub points: Vec<ScanPoint>,
    /// Ground-truth object id per point, parallel to `points`.
    pub point_object_ids: Vec<i64>,
    /// Measured point positions in the grid frame, parallel to `points`.
    pub points_grid: Vec<Vec3>,
    /// Ground-truth object id per pixel; `NO_RETURN_ID` where no return.
    pub pixel_object_ids: Grid2<i64>,
    /// Sensor pose at the start of the revolution (the grid frame).
    pub pose0: PoseSE3,
    pub t0: f64,
    pub period: f64,
}

impl SimulatedScan {
    /// World-frame position of point `i`.
    pub fn point_world(&self, i: usize) -> Vec3 {
        self.pose0.transform_point(&self.points_grid[i])
    }
}

/// Simulates one revolution starting at `t0`. Column `j` is emitted at
/// `t0 + period * j / width` from the interpolated trajectory pose.
pub fn simulate_scan(
    world: &World,
    trajectory: &Trajectory,
    t0: f64,
    period: f64,
    config: &ScanConfig,
    threads: usize,
) -> Result<SimulatedScan, SynthError> {
    if trajectory.start_time() > t0 || trajectory.end_time() < t0 + period {
        return Err(SynthError::TrajectoryGap {
            start: t0,
            end: t0 + period,
        });
    }
    let (h, w) = (config.height, config.width);
    let inclinations = config.ring_inclinations();
    let pose0 = trajectory.sample(t0).expect("coverage checked");

    struct RowHit {
        grid_dir: Vec3,
        range: f64,
        intensity: f64,
        sensor_pos: Vec3,
        grid_point: Vec3,
        id: i64,
    }

    struct ColumnOut {
        origin_grid: Vec3,
        timestamp: f64,
        rows: Vec<Option<RowHit>>,
        no_return_dirs: Vec<Vec3>,
    }

    let compute_column = |j: usize| -> ColumnOut {
        let tj = t0 + period * j as f64 / w as f64;
        let pose_j = trajectory.sample(tj).expect("coverage checked");
        let stationary = pose_j.rotation() == pose0.rotation()
            && pose_j.translation() == pose0.translation();
        let origin_grid = if stationary {
            Vec3::zeros()
        } else {
            pose0.inverse_transform_point(pose_j.translation())
        };
        let beta = std::f64::consts::TAU * j as f64 / w as f64;
        let mut rows = Vec::with_capacity(h);
        let mut no_return_dirs = Vec::with_capacity(h);
        for inclination in &inclinations {
            let d_sensor = direction_from_angles(*inclination, beta);
            let d_world = pose_j.rotate(&d_sensor);
            let nominal_grid_dir = if stationary {
                d_sensor
            } else {
                pose0.rotation().transpose() * d_world
            };
            no_return_dirs.push(nominal_grid_dir);
            match cast_ray(world, pose_j.translation(), &d_world, config.max_range) {
                Some((range, id, reflect)) => {
                    let intensity =
                        (reflect * (config.r0 / range).powi(2).min(1.0)).clamp(0.0, 1.0);
                    let (grid_dir, grid_point) = if stationary {
                        (d_sensor, d_sensor * range)
                    } else {
                        let x_world = pose_j.translation() + d_world * range;
                        let x_grid = pose0.inverse_transform_point(&x_world);
                        (x_grid.normalize(), x_grid)
                    };
                    rows.push(Some(RowHit {
                        grid_dir,
                        range,
                        intensity,
                        sensor_pos: d_sensor * range,
                        grid_point,
                        id,
                    }));
                }
                None => rows.push(None),
            }
        }
        ColumnOut {
            origin_grid,
            timestamp: tj,
            rows,
            no_return_dirs,
        }
    };

    let columns: Vec<ColumnOut> = if threads <= 1 {
        (0..w).map(compute_column).collect()
    } else {
        let mut out: Vec<Option<ColumnOut>> = (0..w).map(|_| None).collect();
        let chunk = w.div_ceil(threads);
        std::thread::scope(|scope| {
            for (c, slot) in out.chunks_mut(chunk).enumerate() {
                let compute = &compute_column;
                scope.spawn(move || {
                    for (k, s) in slot.iter_mut().enumerate() {
                        *s = Some(compute(c * chunk + k));
                    }
                });
            }
        });
        out.into_iter().map(|c| c.expect("column computed")).collect()
    };

    let mut directions = vec![Vec3::zeros(); h * w];
    let mut ranges = vec![0.0; h * w];
    let mut intensities = vec![0.0; h * w];
    let mut timestamps = vec![0.0; h * w];
    let mut column_origins = Vec::with_capacity(w);
    let mut points = Vec::new();
    let mut point_object_ids = Vec::new();
    let mut points_grid = Vec::new();
    let mut pixel_object_ids = Grid2::filled(h, w, NO_RETURN_ID);

    for (j, col) in columns.iter().enumerate() {
        column_origins.push(col.origin_grid);
        for r in 0..h {
            let i = r * w + j;
            timestamps[i] = col.timestamp;
            match &col.rows[r] {
                Some(hit) => {
                    directions[i] = hit.grid_dir;
                    ranges[i] = hit.range;
                    intensities[i] = hit.intensity;
                    pixel_object_ids.set(r, j, hit.id);
                    points.push(ScanPoint {
                        position: hit.sensor_pos,
                        intensity: hit.intensity,
                        ring: r,
                        timestamp: col.timestamp - t0,
                    });
                    point_object_ids.push(hit.id);
                    points_grid.push(hit.grid_point);
                }
                None => {
                    directions[i] = col.no_return_dirs[r];
                }
            }
        }
    }

    let grid = RayGrid::new(
        h,
        w,
        inclinations,
        directions,
        ranges,
        intensities,
        timestamps,
        column_origins,
    )
    .expect("simulated grid is valid");

    Ok(SimulatedScan {
        grid,
        points,
        point_object_ids,
        points_grid,
        pixel_object_ids,
        pose0,
        t0,
        period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::azimuth_of;

    fn stationary_trajectory(t1: f64) -> Trajectory {
        Trajectory::new(vec![
            PoseSE3::identity(),
            PoseSE3::identity().with_timestamp(t1),
        ])
        .unwrap()
    }

    #[test]
    fn empty_world_hits_only_ground() {
        let world = generate_world(
            1,
            &WorldConfig {
                n_objects: 0,
                ..WorldConfig::default()
            },
        )
        .unwrap();
        assert!(world.objects.is_empty());
        let traj = Trajectory::new(vec![
            PoseSE3::from_translation(Vec3::new(0.0, 0.0, 1.8), 0.0),
            PoseSE3::from_translation(Vec3::new(0.0, 0.0, 1.8), 1.0),
        ])
        .unwrap();
        let scan = simulate_scan(&world, &traj, 0.0, 0.1, &ScanConfig::default(), 1).unwrap();
        for (i, r) in scan.grid.ranges().iter().enumerate() {
            if *r > 0.0 {
                assert_eq!(scan.pixel_object_ids.data()[i], GROUND_ID);
            }
        }
        assert!(scan.points.iter().all(|p| p.position.z < 0.0));
    }

    #[test]
    fn same_seed_same_world() {
        let cfg = WorldConfig {
            n_objects: 12,
            aliasing: true,
            ..WorldConfig::default()
        };
        let a = generate_world(9, &cfg).unwrap();
        let b = generate_world(9, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a
            .objects
            .iter()
            .all(|o| o.texture.face_base.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn aliased_world_contains_shape_identical_pairs() {
        let cfg = WorldConfig {
            n_objects: 20,
            aliasing: true,
            ..WorldConfig::default()
        };
        let world = generate_world(7, &cfg).unwrap();
        // Exhaustive pairwise shape comparison.
        let mut pairs = 0;
        for i in 0..world.objects.len() {
            for j in i + 1..world.objects.len() {
                if world.objects[i].shape == world.objects[j].shape {
                    pairs += 1;
                }
            }
        }
        assert!(pairs >= 2, "expected >= 2 aliased pairs, found {pairs}");
    }

    #[test]
    fn stationary_box_scan_ranges_and_timestamps() {
        let world = World {
            objects: vec![SceneObject {
                id: 1,
                shape: Shape::Box {
                    half_extents: Vec3::new(1.0, 4.0, 4.0),
                },
                pose: PoseSE3::from_translation(Vec3::new(10.0, 0.0, 0.0), 0.0),
                texture: Texture::flat(0.8),
            }],
            ground: Texture::flat(0.3),
            seed: 0,
        };
        let traj = stationary_trajectory(1.0);
        let cfg = ScanConfig {
            max_range: 50.0,
            ..ScanConfig::default()
        };
        let scan = simulate_scan(&world, &traj, 0.0, 0.1, &cfg, 1).unwrap();
        let mut box_pixels = 0;
        for r in 0..cfg.height {
            for c in 0..cfg.width {
                if *scan.pixel_object_ids.get(r, c) == 1 {
                    box_pixels += 1;
                    let range = scan.grid.range(r, c);
                    // Nearest face is at x = 9; slant reaches further.
                    assert!((9.0..=12.0).contains(&range), "range {range}");
                }
            }
        }
        assert!(box_pixels > 50);
        // Timestamps increase monotonically with column.
        for c in 1..cfg.width {
            assert!(scan.grid.timestamp(0, c) > scan.grid.timestamp(0, c - 1));
        }
        // Stationary grid directions equal the nominal directions exactly.
        for r in (0..cfg.height).step_by(7) {
            for c in (0..cfg.width).step_by(13) {
                assert_eq!(*scan.grid.direction(r, c), scan.grid.nominal_direction(r, c));
            }
        }
    }

    #[test]
    fn moving_sensor_covers_expected_displacement() {
        let world = generate_world(3, &WorldConfig::default()).unwrap();
        let speed = 10.0;
        let traj = Trajectory::new(vec![
            PoseSE3::from_translation(Vec3::new(0.0, 0.0, 1.8), 0.0),
            PoseSE3::from_translation(Vec3::new(speed, 0.0, 1.8), 1.0),
        ])
        .unwrap();
        let cfg = ScanConfig::default();
        let scan = simulate_scan(&world, &traj, 0.0, 0.1, &cfg, 1).unwrap();
        // First and last column origins differ by speed * period * (W-1)/W.
        let expected = speed * 0.1 * (cfg.width as f64 - 1.0) / cfg.width as f64;
        let d = (scan.grid.column_origin(cfg.width - 1) - scan.grid.column_origin(0)).norm();
        assert!((d - expected).abs() < 1e-9, "origin span {d} vs {expected}");
    }

    #[test]
    fn trajectory_gap_is_an_error() {
        let world = generate_world(1, &WorldConfig::default()).unwrap();
        let traj = stationary_trajectory(0.05);
        let err = simulate_scan(&world, &traj, 0.0, 0.1, &ScanConfig::default(), 1);
        assert!(matches!(err, Err(SynthError::TrajectoryGap { .. })));
    }

    #[test]
    fn parallel_and_serial_scans_are_identical() {
        let world = generate_world(5, &WorldConfig::default()).unwrap();
        let traj = Trajectory::new(vec![
            PoseSE3::from_translation(Vec3::new(0.0, 0.0, 1.8), 0.0),
            PoseSE3::from_translation(Vec3::new(12.0, 1.0, 1.8), 1.0),
        ])
        .unwrap();
        let cfg = ScanConfig::default();
        let a = simulate_scan(&world, &traj, 0.2, 0.1, &cfg, 1).unwrap();
        let b = simulate_scan(&world, &traj, 0.2, 0.1, &cfg, 4).unwrap();
        assert_eq!(a.grid.ranges(), b.grid.ranges());
        assert_eq!(a.grid.intensities(), b.grid.intensities());
        assert_eq!(a.points, b.points);
        assert_eq!(a.point_object_ids, b.point_object_ids);
    }

    #[test]
    fn ground_truth_labels_partition_points() {
        let world = generate_world(4, &WorldConfig::default()).unwrap();
        let traj = stationary_trajectory(1.0);
        let scan = simulate_scan(&world, &traj, 0.0, 0.1, &ScanConfig::default(), 1).unwrap();
        assert_eq!(scan.points.len(), scan.point_object_ids.len());
        let returns = scan
            .pixel_object_ids
            .data()
            .iter()
            .filter(|id| **id != NO_RETURN_ID)
            .count();
        assert_eq!(returns, scan.points.len());
    }

    #[test]
    fn intensity_model_attenuates_with_range() {
        // Same reflectivity, two ranges; nearer return is at least as bright.
        let world = World {
            objects: vec![
                SceneObject {
                    id: 1,
                    shape: Shape::Box {
                        half_extents: Vec3::new(0.5, 2.0, 2.0),
                    },
                    pose: PoseSE3::from_translation(Vec3::new(8.0, 0.0, 0.0), 0.0),
                    texture: Texture::flat(0.9),
                },
                SceneObject {
                    id: 2,
                    shape: Shape::Box {
                        half_extents: Vec3::new(0.5, 2.0, 2.0),
                    },
                    pose: PoseSE3::from_translation(Vec3::new(-30.0, 0.0, 0.0), 0.0),
                    texture: Texture::flat(0.9),
                },
            ],
            ground: Texture::flat(0.2),
            seed: 0,
        };
        let scan = simulate_scan(
            &world,
            &stationary_trajectory(1.0),
            0.0,
            0.1,
            &ScanConfig::default(),
            1,
        )
        .unwrap();
        let mean = |target: i64| {
            let mut acc = 0.0;
            let mut n = 0;
            for (i, id) in scan.pixel_object_ids.data().iter().enumerate() {
                if *id == target {
                    acc += scan.grid.intensities()[i];
                    n += 1;
                }
            }
            acc / n.max(1) as f64
        };
        assert!(mean(1) > mean(2));
        assert!(scan
            .grid
            .intensities()
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn azimuth_of_scan_points_matches_column() {
        let world = generate_world(6, &WorldConfig::default()).unwrap();
        let scan = simulate_scan(
            &world,
            &stationary_trajectory(1.0),
            0.0,
            0.1,
            &ScanConfig::default(),
            1,
        )
        .unwrap();
        for (i, p) in scan.points.iter().enumerate().step_by(17) {
            let col = ((p.timestamp / 0.1) * scan.grid.width() as f64).round() as usize
                % scan.grid.width();
            let beta = azimuth_of(&p.position);
            let expect = scan.grid.column_azimuth(col);
            assert!(
                crate::types::wrap_angle(beta - expect).abs() < 1e-9,
                "point {i}: azimuth {beta} vs column azimuth {expect}"
            );
        }
    }
}
