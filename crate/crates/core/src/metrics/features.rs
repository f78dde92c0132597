use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::store::{Role, SessionReader};

use super::MetricsError;
use super::session::{
    DEFAULT_HEAD_JOINT, accumulated_gaze_angle, count_utterances, required_time, trajectory_length,
};

/// Named feature values for one session, in the order they were requested.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub session_id: String,
    pub values: Vec<(String, f64)>,
}

impl FeatureVector {
    pub fn new(session_id: impl Into<String>) -> Self {
        FeatureVector {
            session_id: session_id.into(),
            values: Vec::new(),
        }
    }

    /// Sets `name`, replacing an earlier value in place.
    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        let name = name.into();
        match self.values.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.values.push((name, value)),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.iter().map(|(n, _)| n.as_str())
    }
}

/// Rows of `vectors` restricted to `names`, one column per name.
pub fn feature_matrix(vectors: &[FeatureVector], names: &[String]) -> Result<DMatrix<f64>, MetricsError> {
    let mut x = DMatrix::zeros(vectors.len(), names.len());
    for (i, v) in vectors.iter().enumerate() {
        for (j, name) in names.iter().enumerate() {
            x[(i, j)] = v
                .get(name)
                .ok_or_else(|| MetricsError::MissingFeature(format!("{name} in session {}", v.session_id)))?;
        }
    }
    Ok(x)
}

/// Settings for the built-in features.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsConfig {
    /// Reported as the required time when the task never completes.
    pub timeout_s: f64,
    pub head_joint: usize,
    /// Speaker counted by `utterance_count`; the header's first robot when unset.
    pub robot: Option<String>,
    /// Entity measured by the gaze and trajectory features; the header's
    /// first avatar when unset.
    pub subject: Option<String>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            timeout_s: 300.0,
            head_joint: DEFAULT_HEAD_JOINT,
            robot: None,
            subject: None,
        }
    }
}

impl MetricsConfig {
    fn entity(&self, reader: &SessionReader, configured: &Option<String>, role: Role) -> Result<String, MetricsError> {
        if let Some(id) = configured {
            return Ok(id.clone());
        }
        reader
            .header()
            .entities
            .iter()
            .find(|e| e.role == role)
            .map(|e| e.entity_id.clone())
            .ok_or(MetricsError::NoEntityWithRole(role))
    }
}

pub type FeatureFn = Box<dyn Fn(&SessionReader) -> Result<f64, MetricsError> + Send + Sync>;

/// Feature extractors by name.
pub struct FeatureRegistry {
    features: BTreeMap<String, FeatureFn>,
}

impl FeatureRegistry {
    pub fn empty() -> Self {
        FeatureRegistry {
            features: BTreeMap::new(),
        }
    }

    /// `required_time_s`, `utterance_count`, `gaze_angle_rad` and
    /// `trajectory_length_m`.
    pub fn with_builtins(config: MetricsConfig) -> Self {
        let mut registry = FeatureRegistry::empty();
        let c = config.clone();
        registry.register("required_time_s", move |r| {
            let time = required_time(r, c.timeout_s)?;
            if !time.completed {
                log::warn!("session {}: task incomplete, using timeout", r.header().session_id);
            }
            Ok(time.seconds)
        });
        let c = config.clone();
        registry.register("utterance_count", move |r| {
            Ok(count_utterances(r, &c.entity(r, &c.robot, Role::Robot)?)? as f64)
        });
        let c = config.clone();
        registry.register("gaze_angle_rad", move |r| {
            accumulated_gaze_angle(r, &c.entity(r, &c.subject, Role::Avatar)?, c.head_joint)
        });
        let c = config;
        registry.register("trajectory_length_m", move |r| {
            trajectory_length(r, &c.entity(r, &c.subject, Role::Avatar)?)
        });
        registry
    }

    /// Adds or replaces a feature.
    pub fn register(
        &mut self,
        name: impl Into<String>,
        f: impl Fn(&SessionReader) -> Result<f64, MetricsError> + Send + Sync + 'static,
    ) {
        self.features.insert(name.into(), Box::new(f));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.features.contains_key(name)
    }

    /// Evaluates `names` in order. All names are checked before any work.
    pub fn extract<S: AsRef<str>>(&self, reader: &SessionReader, names: &[S]) -> Result<FeatureVector, MetricsError> {
        let fns = names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                self.features
                    .get(n)
                    .map(|f| (n, f))
                    .ok_or_else(|| MetricsError::UnsupportedFeature(n.to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut v = FeatureVector::new(reader.header().session_id.clone());
        for (name, f) in fns {
            let value = f(reader)?;
            if !value.is_finite() {
                return Err(MetricsError::NonFinite(format!("feature {name}")));
            }
            v.set(name, value);
        }
        Ok(v)
    }
}

impl Default for FeatureRegistry {
    fn default() -> Self {
        FeatureRegistry::with_builtins(MetricsConfig::default())
    }
}

/// Built-in features with default settings.
pub fn extract_features<S: AsRef<str>>(reader: &SessionReader, names: &[S]) -> Result<FeatureVector, MetricsError> {
    FeatureRegistry::default().extract(reader, names)
}
