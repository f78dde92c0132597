use nalgebra::Vector3;

use crate::pose::{JOINT_COUNT, RigidPose, angle_between};
use crate::store::{EventKind, PosePayload, SceneEvent, SessionReader, StoreError, TaskMarker};

use super::MetricsError;

/// Head joint in the Unity humanoid bone order.
pub const DEFAULT_HEAD_JOINT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RequiredTime {
    pub seconds: f64,
    /// False when the task never completed and `seconds` is the timeout.
    pub completed: bool,
}

/// Time from the first `task_start` to the first `task_complete` after it.
///
/// A session that starts but never completes reports `timeout_s` with
/// `completed == false`. A session without a start, or whose first
/// completion precedes its first start, has no usable markers.
pub fn required_time(reader: &SessionReader, timeout_s: f64) -> Result<RequiredTime, MetricsError> {
    let mut start = None;
    let mut early_complete = false;
    for event in reader.events()? {
        let event = event?;
        match (event.marker(), start) {
            (Some(TaskMarker::Start), None) => start = Some(event.t),
            (Some(TaskMarker::Complete), None) => early_complete = true,
            (Some(TaskMarker::Complete), Some(t0)) => {
                if early_complete {
                    return Err(MetricsError::NoTaskMarkers);
                }
                return Ok(RequiredTime {
                    seconds: (event.t - t0) as f64 / 1e6,
                    completed: true,
                });
            }
            _ => {}
        }
    }
    match start {
        Some(_) if !early_complete => Ok(RequiredTime {
            seconds: timeout_s,
            completed: false,
        }),
        _ => Err(MetricsError::NoTaskMarkers),
    }
}

/// Number of UTTERANCE events spoken by `speaker`.
pub fn count_utterances(reader: &SessionReader, speaker: &str) -> Result<i64, MetricsError> {
    let mut n = 0;
    for event in reader.events()? {
        if event?.speaker() == Some(speaker) {
            n += 1;
        }
    }
    Ok(n)
}

/// Total angle swept by the gaze direction (+Z of the head joint) across
/// consecutive pose samples of `entity`. Rigid entities use their body
/// rotation.
pub fn accumulated_gaze_angle(reader: &SessionReader, entity: &str, head_joint: usize) -> Result<f64, MetricsError> {
    check_joint(head_joint)?;
    Ok(gaze_sum(&joint_poses(reader, entity, head_joint, reader.events()?)?))
}

/// [`accumulated_gaze_angle`] over samples with `t0 <= t <= t1`.
pub fn accumulated_gaze_angle_in(
    reader: &SessionReader,
    entity: &str,
    head_joint: usize,
    t0: i64,
    t1: i64,
) -> Result<f64, MetricsError> {
    check_joint(head_joint)?;
    let events = reader.query_range(t0, t1)?.into_iter().map(Ok);
    Ok(gaze_sum(&joint_poses(reader, entity, head_joint, events)?))
}

/// Path length of the root position of `entity`.
pub fn trajectory_length(reader: &SessionReader, entity: &str) -> Result<f64, MetricsError> {
    Ok(path_sum(&joint_poses(reader, entity, 0, reader.events()?)?))
}

/// [`trajectory_length`] over samples with `t0 <= t <= t1`.
pub fn trajectory_length_in(reader: &SessionReader, entity: &str, t0: i64, t1: i64) -> Result<f64, MetricsError> {
    let events = reader.query_range(t0, t1)?.into_iter().map(Ok);
    Ok(path_sum(&joint_poses(reader, entity, 0, events)?))
}

fn check_joint(joint: usize) -> Result<(), MetricsError> {
    if joint < JOINT_COUNT {
        Ok(())
    } else {
        Err(MetricsError::InvalidJoint(joint))
    }
}

/// Pose of `joint` for every POSE event of `entity`, in order.
fn joint_poses(
    reader: &SessionReader,
    entity: &str,
    joint: usize,
    events: impl Iterator<Item = Result<SceneEvent, StoreError>>,
) -> Result<Vec<RigidPose>, MetricsError> {
    if reader.header().entity(entity).is_none() {
        return Err(MetricsError::UnknownEntity(entity.to_owned()));
    }
    let mut poses = Vec::new();
    for event in events {
        let event = event?;
        if event.kind != EventKind::Pose || event.entity_id != entity {
            continue;
        }
        let pose = match PosePayload::from_document(&event.payload)? {
            PosePayload::Avatar(a) => a.joint(joint).ok_or(MetricsError::InvalidJoint(joint))?.rigid(),
            PosePayload::Rigid(r) => r,
        };
        poses.push(pose);
    }
    Ok(poses)
}

fn gaze_sum(poses: &[RigidPose]) -> f64 {
    let forward: Vec<Vector3<f64>> = poses.iter().map(RigidPose::forward).collect();
    forward.windows(2).map(|w| angle_between(&w[0], &w[1])).sum()
}

fn path_sum(poses: &[RigidPose]) -> f64 {
    poses
        .windows(2)
        .map(|w| (w[1].position() - w[0].position()).norm())
        .sum()
}
