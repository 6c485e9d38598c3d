//! Continuous sensor trajectory: piecewise-linear translation and
//! spherical-linear rotation between timestamped waypoints.

use super::SynthError;
use crate::types::{Mat3, PoseSE3, Vec3};
use nalgebra::UnitQuaternion;

#[derive(Clone, Debug)]
pub struct Trajectory {
    waypoints: Vec<PoseSE3>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<PoseSE3>) -> Result<Self, SynthError> {
        if waypoints.is_empty() {
            return Err(SynthError::EmptyTrajectory);
        }
        for (i, w) in waypoints.windows(2).enumerate() {
            if w[1].timestamp() <= w[0].timestamp() {
                return Err(SynthError::NonIncreasingWaypoints(i + 1));
            }
        }
        Ok(Self { waypoints })
    }

    /// Straight constant-speed segment with a fixed heading.
    pub fn linear(start: Vec3, velocity: Vec3, t0: f64, t1: f64) -> Self {
        Self::new(vec![
            PoseSE3::from_translation(start, t0),
            PoseSE3::from_translation(start + velocity * (t1 - t0), t1),
        ])
        .expect("two increasing timestamps")
    }

    pub fn waypoints(&self) -> &[PoseSE3] {
        &self.waypoints
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints[0].timestamp()
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].timestamp()
    }

    /// Interpolated pose at `t`, which must lie within the waypoint span.
    pub fn sample(&self, t: f64) -> Result<PoseSE3, SynthError> {
        if t < self.start_time() || t > self.end_time() {
            return Err(SynthError::TrajectoryGap { start: t, end: t });
        }
        let idx = match self
            .waypoints
            .binary_search_by(|w| w.timestamp().partial_cmp(&t).expect("finite timestamps"))
        {
            Ok(i) => return Ok(self.waypoints[i].with_timestamp(t)),
            Err(i) => i,
        };
        let a = &self.waypoints[idx - 1];
        let b = &self.waypoints[idx];
        // Identical bracketing poses reproduce the pose bit for bit, so a
        // stationary trajectory yields the exact same pose at every t.
        if a.rotation() == b.rotation() && a.translation() == b.translation() {
            return Ok(a.with_timestamp(t));
        }
        let u = (t - a.timestamp()) / (b.timestamp() - a.timestamp());
        let translation = a.translation() + (b.translation() - a.translation()) * u;
        let rotation = if a.rotation() == b.rotation() {
            *a.rotation()
        } else {
            let qa = UnitQuaternion::from_matrix(a.rotation());
            let qb = UnitQuaternion::from_matrix(b.rotation());
            slerp_matrix(&qa, &qb, u)
        };
        Ok(PoseSE3::new(rotation, translation, t).expect("interpolated rotation is orthonormal"))
    }
}

fn slerp_matrix(qa: &UnitQuaternion<f64>, qb: &UnitQuaternion<f64>, u: f64) -> Mat3 {
    let q = qa.try_slerp(qb, u, 1e-12).unwrap_or(*qa);
    q.to_rotation_matrix().matrix().to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_translation_interpolates() {
        let traj = Trajectory::linear(Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), 0.0, 2.0);
        let p = traj.sample(0.5).unwrap();
        assert!((p.translation() - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(traj.sample(2.5).is_err());
        assert!(traj.sample(-0.1).is_err());
    }

    #[test]
    fn stationary_samples_are_bitwise_stable() {
        let pose = PoseSE3::from_translation(Vec3::new(3.0, 4.0, 1.8), 0.0);
        let traj = Trajectory::new(vec![pose, pose.with_timestamp(5.0)]).unwrap();
        let s = traj.sample(1.234).unwrap();
        assert_eq!(s.translation(), pose.translation());
        assert_eq!(s.rotation(), pose.rotation());
    }

    #[test]
    fn rotation_slerp_hits_endpoints_and_midpoint() {
        let r0 = Mat3::identity();
        let r1 = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), 0.8)
            .matrix()
            .to_owned();
        let traj = Trajectory::new(vec![
            PoseSE3::new(r0, Vec3::zeros(), 0.0).unwrap(),
            PoseSE3::new(r1, Vec3::zeros(), 1.0).unwrap(),
        ])
        .unwrap();
        let half = traj.sample(0.5).unwrap();
        let expect = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), 0.4)
            .matrix()
            .to_owned();
        assert!((half.rotation() - expect).abs().max() < 1e-12);
        let end = traj.sample(1.0).unwrap();
        assert!((end.rotation() - r1).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_non_increasing_timestamps() {
        let p = PoseSE3::identity();
        assert!(Trajectory::new(vec![p, p]).is_err());
    }
}
