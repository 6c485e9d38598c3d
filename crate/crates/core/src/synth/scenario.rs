//! Ready-made worlds and trajectory pairs for experiments.
//!
//! `corridor` is a generic two-pass drive through a random world, used for
//! descriptor training and rank evaluation. `aliased_stress` plants exact
//! copies of a group of objects ("plazas") so that descriptor matching is
//! genuinely ambiguous: the database pass sees two copies, the query pass a
//! third one that never enters the database.

use super::{generate_world, SceneObject, Shape, SynthError, Texture, Trajectory, World, WorldConfig};
use crate::rng::{derive_seed, Pcg32};
use crate::types::{PoseSE3, Vec3};

/// One scan pass: a trajectory with a sequence id and a scan schedule.
/// Scan `i` starts at `t_start + i * scan_interval` and takes one revolution
/// of `period` seconds.
#[derive(Clone, Debug)]
pub struct SequenceSpec {
    pub id: u64,
    pub trajectory: Trajectory,
    pub t_start: f64,
    pub scan_count: usize,
    pub scan_interval: f64,
}

impl SequenceSpec {
    pub fn scan_start(&self, i: usize) -> f64 {
        self.t_start + self.scan_interval * i as f64
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub world: World,
    pub sequences: Vec<SequenceSpec>,
    pub period: f64,
}

#[derive(Clone, Debug)]
pub struct CorridorConfig {
    pub n_objects: usize,
    pub aliasing: bool,
    pub speed: f64,
    pub scan_count: usize,
    pub period: f64,
    /// Lateral offset of the query pass relative to the database pass.
    pub query_offset: f64,
    pub sensor_height: f64,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self {
            n_objects: 44,
            aliasing: false,
            speed: 8.0,
            scan_count: 60,
            period: 0.1,
            query_offset: 1.5,
            sensor_height: 1.8,
        }
    }
}

/// Two passes along the x axis through a random world. Sequence 0 is the
/// database pass, sequence 1 the query pass on a laterally offset line.
pub fn corridor(seed: u64, cfg: &CorridorConfig) -> Result<Scenario, SynthError> {
    let span = cfg.speed * cfg.period * cfg.scan_count as f64;
    let x0 = -span / 2.0;
    let world = generate_world(
        seed,
        &WorldConfig {
            n_objects: cfg.n_objects,
            aliasing: cfg.aliasing,
            x_range: (x0 - 8.0, x0 + span + 8.0),
            y_band: (5.0, 16.0),
            ..WorldConfig::default()
        },
    )?;
    let duration = cfg.period * (cfg.scan_count as f64 + 1.0);
    let db = Trajectory::linear(
        Vec3::new(x0, 0.0, cfg.sensor_height),
        Vec3::new(cfg.speed, 0.0, 0.0),
        0.0,
        duration,
    );
    let query = Trajectory::linear(
        Vec3::new(x0 + 0.35, cfg.query_offset, cfg.sensor_height),
        Vec3::new(cfg.speed, 0.0, 0.0),
        0.0,
        duration,
    );
    Ok(Scenario {
        world,
        sequences: vec![
            SequenceSpec {
                id: 0,
                trajectory: db,
                t_start: 0.0,
                scan_count: cfg.scan_count,
                scan_interval: cfg.period,
            },
            SequenceSpec {
                id: 1,
                trajectory: query,
                t_start: 0.0,
                scan_count: cfg.scan_count,
                scan_interval: cfg.period,
            },
        ],
        period: cfg.period,
    })
}

/// Plaza layout: five fixed shapes at fixed offsets from the plaza anchor.
fn plaza_members(rng: &mut Pcg32) -> Vec<(Shape, Vec3, Texture)> {
    let shapes = [
        Shape::Box {
            half_extents: Vec3::new(1.2, 0.8, 1.9),
        },
        Shape::Cylinder {
            radius: 0.9,
            half_height: 2.2,
        },
        Shape::Box {
            half_extents: Vec3::new(0.7, 1.5, 1.4),
        },
        Shape::Cylinder {
            radius: 1.3,
            half_height: 1.5,
        },
        Shape::Box {
            half_extents: Vec3::new(1.6, 1.0, 2.3),
        },
    ];
    let offsets = [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(5.5, 2.0, 0.0),
        Vec3::new(2.5, 6.5, 0.0),
        Vec3::new(-4.0, 4.5, 0.0),
        Vec3::new(-2.5, -4.0, 0.0),
    ];
    shapes
        .iter()
        .zip(offsets.iter())
        .map(|(s, o)| {
            let faces = match s {
                Shape::Box { .. } => 6,
                Shape::Cylinder { .. } => 3,
            };
            let texture = Texture {
                face_base: (0..faces).map(|_| rng.uniform(0.25, 0.9)).collect(),
                noise_amplitude: 0.12,
                noise_scale: 0.3,
                seed: rng.next_u64(),
            };
            (s.clone(), *o, texture)
        })
        .collect()
}

fn upright_pose(center: Vec3, shape: &Shape) -> PoseSE3 {
    let z = match shape {
        Shape::Box { half_extents } => half_extents.z,
        Shape::Cylinder { half_height, .. } => *half_height,
    };
    PoseSE3::from_translation(Vec3::new(center.x, center.y, z), 0.0)
}

/// Maximum sensor range used by the stress scenario; keeps the query-only
/// plaza out of sight of the database pass.
pub const STRESS_MAX_RANGE: f64 = 60.0;

/// World with three exact copies of a five-object plaza (identical shapes,
/// textures and relative layout) plus unique objects along a corridor.
///
/// Sequence 0 (database) drives the corridor and passes plazas B and C.
/// Sequence 1 (query) repeats the corridor and then passes plaza A, which
/// never enters the database. Matches for plaza-A segments are ambiguous
/// between B and C by construction.
pub fn aliased_stress(seed: u64) -> Result<Scenario, SynthError> {
    let mut rng = Pcg32::new(derive_seed(seed, "aliased_stress"));
    let members = plaza_members(&mut rng);
    let anchors = [
        Vec3::new(-130.0, 9.0, 0.0), // plaza A: query only
        Vec3::new(70.0, 9.0, 0.0),   // plaza B: database
        Vec3::new(170.0, 9.0, 0.0),  // plaza C: database
    ];
    let mut objects = Vec::new();
    let mut next_id: i64 = 1;
    for anchor in &anchors {
        for (shape, offset, texture) in &members {
            objects.push(SceneObject {
                id: next_id,
                shape: shape.clone(),
                pose: upright_pose(anchor + offset, shape),
                texture: texture.clone(),
            });
            next_id += 1;
        }
    }
    // Unique corridor objects near x in [-30, 30], both sides of the road.
    for k in 0..10 {
        let x = -28.0 + 6.2 * k as f64;
        let side = if k % 2 == 0 { 1.0 } else { -1.0 };
        let y = side * rng.uniform(6.0, 12.0);
        let shape = if k % 3 == 0 {
            Shape::Cylinder {
                radius: rng.uniform(0.5, 1.4),
                half_height: rng.uniform(1.0, 2.6),
            }
        } else {
            Shape::Box {
                half_extents: Vec3::new(
                    rng.uniform(0.5, 1.7),
                    rng.uniform(0.5, 1.7),
                    rng.uniform(1.0, 2.5),
                ),
            }
        };
        let faces = match &shape {
            Shape::Box { .. } => 6,
            Shape::Cylinder { .. } => 3,
        };
        let texture = Texture {
            face_base: (0..faces).map(|_| rng.uniform(0.2, 0.95)).collect(),
            noise_amplitude: 0.12,
            noise_scale: 0.3,
            seed: rng.next_u64(),
        };
        objects.push(SceneObject {
            id: next_id,
            shape: shape.clone(),
            pose: upright_pose(Vec3::new(x, y, 0.0), &shape),
            texture,
        });
        next_id += 1;
    }
    let world = World {
        objects,
        ground: Texture {
            face_base: vec![0.35],
            noise_amplitude: 0.12,
            noise_scale: 2.0,
            seed: rng.next_u64(),
        },
        seed,
    };

    let period = 0.1;
    let h = 1.8;
    // Database: corridor at 8 m/s, then past plazas B (anchor x=70) and C
    // (anchor x=170), staying on the y=0 line.
    let db_waypoints = vec![
        PoseSE3::from_translation(Vec3::new(-34.0, 0.0, h), 0.0),
        PoseSE3::from_translation(Vec3::new(206.0, 0.0, h), 30.0),
    ];
    // Query: corridor again (lateral offset), fast transit, then plaza A.
    let q_waypoints = vec![
        PoseSE3::from_translation(Vec3::new(-32.0, 1.2, h), 0.0),
        PoseSE3::from_translation(Vec3::new(32.0, 1.2, h), 8.0),
        PoseSE3::from_translation(Vec3::new(-94.0, 1.2, h), 14.0),
        PoseSE3::from_translation(Vec3::new(-166.0, 1.2, h), 23.0),
    ];
    let interval = 0.4;
    Ok(Scenario {
        world,
        sequences: vec![
            SequenceSpec {
                id: 0,
                trajectory: Trajectory::new(db_waypoints)?,
                t_start: 0.0,
                scan_count: 74,
                scan_interval: interval,
            },
            SequenceSpec {
                id: 1,
                trajectory: Trajectory::new(q_waypoints)?,
                t_start: 0.0,
                scan_count: 57,
                scan_interval: interval,
            },
        ],
        period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corridor_is_deterministic() {
        let cfg = CorridorConfig::default();
        let a = corridor(5, &cfg).unwrap();
        let b = corridor(5, &cfg).unwrap();
        assert_eq!(a.world, b.world);
        assert_eq!(a.sequences.len(), 2);
    }

    #[test]
    fn stress_world_has_three_identical_plazas() {
        let s = aliased_stress(1).unwrap();
        // First 15 objects are the three plaza copies.
        for m in 0..5 {
            let a = &s.world.objects[m];
            let b = &s.world.objects[m + 5];
            let c = &s.world.objects[m + 10];
            assert_eq!(a.shape, b.shape);
            assert_eq!(b.shape, c.shape);
            assert_eq!(a.texture, b.texture);
            assert_eq!(b.texture, c.texture);
            // Relative offsets within the plaza are preserved.
            let ra = a.pose.translation() - s.world.objects[0].pose.translation();
            let rb = b.pose.translation() - s.world.objects[5].pose.translation();
            assert!((ra - rb).norm() < 1e-12);
        }
        // Plaza copies are far apart relative to the 5 m closure threshold.
        let d = (s.world.objects[0].pose.translation() - s.world.objects[5].pose.translation())
            .norm();
        assert!(d > 100.0);
    }

    #[test]
    fn stress_trajectories_cover_their_scan_schedules() {
        let s = aliased_stress(2).unwrap();
        for seq in &s.sequences {
            let end = seq.scan_start(seq.scan_count - 1) + s.period;
            assert!(
                seq.trajectory.end_time() >= end,
                "sequence {} ends at {} but last scan needs {}",
                seq.id,
                seq.trajectory.end_time(),
                end
            );
        }
    }

    #[test]
    fn query_only_plaza_is_out_of_database_range() {
        let s = aliased_stress(3).unwrap();
        let db = &s.sequences[0];
        let plaza_a = s.world.objects[0].pose.translation().to_owned();
        let mut min_d = f64::INFINITY;
        for i in 0..db.scan_count {
            let t = db.scan_start(i);
            let p = db.trajectory.sample(t).unwrap();
            min_d = min_d.min((p.translation() - plaza_a).norm());
        }
        assert!(min_d > STRESS_MAX_RANGE + 10.0, "min distance {min_d}");
    }
}
