//! Avatar and rigid-body poses and the small amount of geometry built on them.
//!
//! Quaternions are stored as `[w, x, y, z]`. The sensor and gaze frame is
//! +Z forward, +Y up.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::codec::{Document, Value};

/// Joints per avatar.
pub const JOINT_COUNT: usize = 56;
/// Allowed deviation of a rotation's norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("expected {JOINT_COUNT} joints, got {0}")]
    JointCount(usize),
    #[error("joint id {0} out of range or repeated")]
    JointId(i32),
    #[error("rotation norm {0} is not 1")]
    NotUnit(f64),
    #[error("non-finite pose component")]
    NonFinite,
    #[error("malformed pose document: {0}")]
    Malformed(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointPose {
    pub joint_id: i32,
    pub position: [f64; 3],
    pub rotation: [f64; 4],
}

impl JointPose {
    pub fn identity(joint_id: i32) -> Self {
        JointPose {
            joint_id,
            position: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn rigid(&self) -> RigidPose {
        RigidPose {
            position: self.position,
            rotation: self.rotation,
        }
    }

    fn to_document(self) -> Document {
        let mut d = Document::with_capacity(3);
        d.insert("joint_id", self.joint_id);
        d.insert("position", f64_array(&self.position));
        d.insert("rotation", f64_array(&self.rotation));
        d
    }

    fn from_document(d: &Document) -> Result<Self, PoseError> {
        // JSON carries every integer as Int64.
        let joint_id = d
            .get_i64("joint_id")
            .and_then(|v| i32::try_from(v).ok())
            .ok_or(PoseError::Malformed("joint_id"))?;
        Ok(JointPose {
            joint_id,
            position: read_array(d, "position")?,
            rotation: read_array(d, "rotation")?,
        })
    }
}

/// Position plus orientation of one body.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    pub position: [f64; 3],
    pub rotation: [f64; 4],
}

impl RigidPose {
    pub fn new(position: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        let q = rotation.quaternion();
        RigidPose {
            position: [position.x, position.y, position.z],
            rotation: [q.w, q.i, q.j, q.k],
        }
    }

    pub fn at(position: [f64; 3]) -> Self {
        RigidPose {
            position,
            rotation: [1.0, 0.0, 0.0, 0.0],
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    /// Rotation as given; callers validate before relying on unit norm.
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z))
    }

    /// +Z of the body frame, in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        forward(&self.rotation())
    }

    pub fn validate(&self) -> Result<(), PoseError> {
        check_components(&self.position, &self.rotation)
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::with_capacity(2);
        d.insert("position", f64_array(&self.position));
        d.insert("rotation", f64_array(&self.rotation));
        d
    }

    pub fn from_document(d: &Document) -> Result<Self, PoseError> {
        let pose = RigidPose {
            position: read_array(d, "position")?,
            rotation: read_array(d, "rotation")?,
        };
        pose.validate()?;
        Ok(pose)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AvatarState {
    pub entity_id: String,
    /// Microseconds on the sender's monotonic clock.
    pub send_timestamp: i64,
    pub sequence: i64,
    pub joints: Vec<JointPose>,
}

impl AvatarState {
    /// All joints at the origin with identity rotation.
    pub fn neutral(entity_id: impl Into<String>) -> Self {
        AvatarState {
            entity_id: entity_id.into(),
            send_timestamp: 0,
            sequence: 0,
            joints: (0..JOINT_COUNT as i32).map(JointPose::identity).collect(),
        }
    }

    /// Deterministic moving pose, used for benchmarks and playback tests.
    pub fn synthetic(entity_id: impl Into<String>, sequence: i64, phase: f64) -> Self {
        let joints = (0..JOINT_COUNT)
            .map(|j| {
                let a = phase + j as f64 * 0.1;
                let axis = Vector3::new(a.sin(), a.cos(), 0.5).normalize();
                let q = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(axis), a);
                let q = q.quaternion();
                JointPose {
                    joint_id: j as i32,
                    position: [a.cos(), 1.0 + 0.01 * j as f64, a.sin()],
                    rotation: [q.w, q.i, q.j, q.k],
                }
            })
            .collect();
        AvatarState {
            entity_id: entity_id.into(),
            send_timestamp: 0,
            sequence,
            joints,
        }
    }

    pub fn joint(&self, joint_id: usize) -> Option<&JointPose> {
        self.joints.get(joint_id).filter(|j| j.joint_id == joint_id as i32)
    }

    /// Exactly 56 joints, ids 0..55 each once, unit rotations, finite values.
    pub fn validate(&self) -> Result<(), PoseError> {
        if self.joints.len() != JOINT_COUNT {
            return Err(PoseError::JointCount(self.joints.len()));
        }
        let mut seen = [false; JOINT_COUNT];
        for j in &self.joints {
            let slot = usize::try_from(j.joint_id)
                .ok()
                .and_then(|i| seen.get_mut(i))
                .filter(|s| !**s)
                .ok_or(PoseError::JointId(j.joint_id))?;
            *slot = true;
            check_components(&j.position, &j.rotation)?;
        }
        Ok(())
    }

    /// Sorts joints by id.
    pub fn normalize_order(&mut self) {
        self.joints.sort_by_key(|j| j.joint_id);
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::with_capacity(4);
        d.insert("entity_id", self.entity_id.as_str());
        d.insert("send_timestamp", self.send_timestamp);
        d.insert("sequence", self.sequence);
        d.insert(
            "joints",
            Value::Array(
                self.joints
                    .iter()
                    .map(|j| Value::Document(j.to_document()))
                    .collect(),
            ),
        );
        d
    }

    /// Decodes and validates; joints are returned ordered by id.
    pub fn from_document(d: &Document) -> Result<Self, PoseError> {
        let joints = d
            .get_array("joints")
            .ok_or(PoseError::Malformed("joints"))?
            .iter()
            .map(|v| {
                v.as_document()
                    .ok_or(PoseError::Malformed("joint"))
                    .and_then(JointPose::from_document)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut state = AvatarState {
            entity_id: d
                .get_str("entity_id")
                .ok_or(PoseError::Malformed("entity_id"))?
                .to_owned(),
            send_timestamp: d
                .get_i64("send_timestamp")
                .ok_or(PoseError::Malformed("send_timestamp"))?,
            sequence: d.get_i64("sequence").ok_or(PoseError::Malformed("sequence"))?,
            joints,
        };
        state.validate()?;
        state.normalize_order();
        Ok(state)
    }
}

/// +Z axis rotated by `q`.
pub fn forward(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    q * Vector3::z()
}

/// Angle in `[0, π]` between two non-zero vectors.
///
/// Uses `atan2(|a × b|, a · b)`, which agrees with `acos` of the normalized
/// dot product but keeps full precision near 0 and π.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Range, azimuth and elevation of `target` seen from `sensor`.
///
/// Azimuth is measured from +Z toward +X, elevation toward +Y.
pub fn range_bearing(sensor: &RigidPose, target: &Vector3<f64>) -> (f64, f64, f64) {
    let local = sensor.rotation().inverse_transform_vector(&(target - sensor.position()));
    let range = local.norm();
    let azimuth = local.x.atan2(local.z);
    let elevation = local.y.atan2(local.x.hypot(local.z));
    (range, azimuth, elevation)
}

fn check_components(position: &[f64; 3], rotation: &[f64; 4]) -> Result<(), PoseError> {
    if position.iter().chain(rotation).any(|v| !v.is_finite()) {
        return Err(PoseError::NonFinite);
    }
    let norm = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(PoseError::NotUnit(norm));
    }
    Ok(())
}

fn f64_array(values: &[f64]) -> Value {
    Value::Array(values.iter().copied().map(Value::Float64).collect())
}

fn read_array<const N: usize>(d: &Document, key: &'static str) -> Result<[f64; N], PoseError> {
    let items = d.get_array(key).ok_or(PoseError::Malformed(key))?;
    if items.len() != N {
        return Err(PoseError::Malformed(key));
    }
    let mut out = [0.0; N];
    for (slot, v) in out.iter_mut().zip(items) {
        *slot = v.as_number().ok_or(PoseError::Malformed(key))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    use super::*;

    #[test]
    fn avatar_document_round_trip() {
        let s = AvatarState::synthetic("avatar", 7, 0.3);
        s.validate().unwrap();
        assert_eq!(AvatarState::from_document(&s.to_document()).unwrap(), s);
    }

    #[test]
    fn avatar_validation() {
        let mut s = AvatarState::neutral("a");
        s.joints.pop();
        assert_eq!(s.validate(), Err(PoseError::JointCount(55)));
        let mut s = AvatarState::neutral("a");
        s.joints[3].joint_id = 4;
        assert_eq!(s.validate(), Err(PoseError::JointId(4)));
        let mut s = AvatarState::neutral("a");
        s.joints[0].rotation = [1.0, 0.01, 0.0, 0.0];
        assert!(matches!(s.validate(), Err(PoseError::NotUnit(_))));
        let mut s = AvatarState::neutral("a");
        s.joints[0].rotation = [1.0 + 5e-7, 0.0, 0.0, 0.0];
        s.validate().unwrap();
    }

    #[test]
    fn shuffled_joints_come_back_ordered() {
        let mut s = AvatarState::synthetic("a", 1, 0.0);
        s.joints.reverse();
        let back = AvatarState::from_document(&s.to_document()).unwrap();
        assert!(back.joints.iter().enumerate().all(|(i, j)| j.joint_id == i as i32));
    }

    #[test]
    fn axis_aligned_bearings() {
        let sensor = RigidPose::at([0.0; 3]);
        let (r, az, el) = range_bearing(&sensor, &Vector3::new(0.0, 0.0, 5.0));
        assert_eq!((r, az, el), (5.0, 0.0, 0.0));
        let (r, az, el) = range_bearing(&sensor, &Vector3::new(5.0, 0.0, 0.0));
        assert_eq!((r, az, el), (5.0, FRAC_PI_2, 0.0));
        let (_, _, el) = range_bearing(&sensor, &Vector3::new(0.0, 3.0, 0.0));
        assert_eq!(el, FRAC_PI_2);
    }

    #[test]
    fn angle_between_yaws() {
        let a = forward(&UnitQuaternion::identity());
        let b = forward(&UnitQuaternion::from_euler_angles(0.0, FRAC_PI_6, 0.0));
        assert!((angle_between(&a, &b) - FRAC_PI_6).abs() < 1e-15);
        assert_eq!(angle_between(&a, &a), 0.0);
        assert_eq!(angle_between(&a, &-a), std::f64::consts::PI);
    }
}
