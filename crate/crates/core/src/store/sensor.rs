use std::collections::BTreeMap;

use crate::codec::Document;
use crate::pose::{JOINT_COUNT, RigidPose, angle_between, range_bearing};

use super::event::{EventKind, PosePayload, SessionHeader};
use super::reader::SessionReader;
use super::StoreError;

#[derive(Clone, Debug, PartialEq)]
pub enum SensorFunction {
    /// Range, azimuth and elevation of each target in the sensor frame.
    RelativeRangeBearing { targets: Vec<String> },
    /// Angle between the sensor's +Z axis and the direction to the target.
    GazeAngleTo { target: String },
}

/// A virtual sensor evaluated against recorded poses.
///
/// Targets are located at their root: joint 0 of an avatar, or the body
/// position of a rigid pose.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSpec {
    pub sensor_id: String,
    pub attached_to: String,
    /// Joint of `attached_to` carrying the sensor; the root when absent.
    pub joint_id: Option<i32>,
    pub function: SensorFunction,
    pub sample_period_us: i64,
}

impl SensorSpec {
    fn targets(&self) -> Vec<&str> {
        match &self.function {
            SensorFunction::RelativeRangeBearing { targets } => targets.iter().map(String::as_str).collect(),
            SensorFunction::GazeAngleTo { target } => vec![target.as_str()],
        }
    }

    pub fn validate(&self, header: &SessionHeader) -> Result<(), StoreError> {
        if self.sample_period_us <= 0 {
            return Err(StoreError::InvalidSensor(format!(
                "sample period {} must be positive",
                self.sample_period_us
            )));
        }
        if let Some(j) = self.joint_id {
            if !(0..JOINT_COUNT as i32).contains(&j) {
                return Err(StoreError::InvalidSensor(format!("joint id {j} out of range")));
            }
        }
        let targets = self.targets();
        if targets.is_empty() {
            return Err(StoreError::InvalidSensor("no targets".into()));
        }
        for entity in std::iter::once(self.attached_to.as_str()).chain(targets) {
            if header.entity(entity).is_none() {
                return Err(StoreError::UnknownEntity(entity.to_owned()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorSeries {
    pub sensor_id: String,
    /// One entry per target per sample time, in time order.
    pub samples: Vec<(i64, Document)>,
    /// Sample times skipped because a required entity had no pose yet.
    pub skipped_samples: u64,
}

/// Evaluates `spec` at `0, T, 2T, …` up to the last event's timestamp,
/// holding each entity's most recent pose between updates.
pub fn reproduce_sensor(reader: &SessionReader, spec: &SensorSpec) -> Result<SensorSeries, StoreError> {
    spec.validate(reader.header())?;
    let targets = spec.targets();
    let mut latest: BTreeMap<&str, PosePayload> = BTreeMap::new();
    let mut events = reader.events()?.peekable();
    let mut series = SensorSeries {
        sensor_id: spec.sensor_id.clone(),
        samples: Vec::new(),
        skipped_samples: 0,
    };
    let mut end = None;
    let mut k: i64 = 0;
    loop {
        let Some(s) = k.checked_mul(spec.sample_period_us) else {
            break;
        };
        while let Some(next) = events.next_if(|e| e.as_ref().map_or(true, |e| e.t <= s)) {
            let event = next?;
            end = Some(event.t);
            if event.kind != EventKind::Pose {
                continue;
            }
            let slot = if event.entity_id == spec.attached_to {
                spec.attached_to.as_str()
            } else if let Some(t) = targets.iter().find(|t| **t == event.entity_id) {
                t
            } else {
                continue;
            };
            latest.insert(slot, PosePayload::from_document(&event.payload)?);
        }
        if events.peek().is_none() && end.map_or(true, |end| s > end) {
            break;
        }
        k += 1;

        let Some(sensor) = latest.get(spec.attached_to.as_str()) else {
            series.skipped_samples += 1;
            continue;
        };
        let joint = spec.joint_id.unwrap_or(0) as usize;
        let sensor = sensor.joint(joint).ok_or_else(|| {
            StoreError::InvalidSensor(format!("{} has no joint {joint}", spec.attached_to))
        })?;
        let Some(positions) = targets
            .iter()
            .map(|t| latest.get(t).and_then(|p| p.joint(0)).map(|p| p.position()))
            .collect::<Option<Vec<_>>>()
        else {
            series.skipped_samples += 1;
            continue;
        };
        for (target, position) in targets.iter().zip(positions) {
            let reading = match spec.function {
                SensorFunction::RelativeRangeBearing { .. } => range_bearing_reading(&sensor, target, &position),
                SensorFunction::GazeAngleTo { .. } => {
                    let angle = angle_between(&sensor.forward(), &(position - sensor.position()));
                    let mut d = Document::with_capacity(2);
                    d.insert("target", *target);
                    d.insert("angle", angle);
                    d
                }
            };
            series.samples.push((s, reading));
        }
    }
    Ok(series)
}

fn range_bearing_reading(sensor: &RigidPose, target: &str, position: &nalgebra::Vector3<f64>) -> Document {
    let (range, azimuth, elevation) = range_bearing(sensor, position);
    let mut d = Document::with_capacity(4);
    d.insert("target", target);
    d.insert("range", range);
    d.insert("azimuth", azimuth);
    d.insert("elevation", elevation);
    d
}
