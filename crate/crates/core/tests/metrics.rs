use std::f64::consts::{FRAC_PI_3, FRAC_PI_6};
use std::path::Path;

use hri_bridge::codec::{decode_document, decode_json, encode_document, encode_json};
use hri_bridge::metrics::{
    DEFAULT_HEAD_JOINT, FeatureRegistry, FeatureVector, LinearModel, MetricsConfig, MetricsError,
    accumulated_gaze_angle, accumulated_gaze_angle_in, count_utterances, extract_features, ols_fit,
    required_time, trajectory_length, trajectory_length_in,
};
use hri_bridge::pose::{AvatarState, RigidPose};
use hri_bridge::store::{Role, SceneEvent, SessionHeader, SessionReader, TaskMarker, open_session};
use nalgebra::{DMatrix, DVector, Quaternion, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const HEAD: usize = DEFAULT_HEAD_JOINT;

fn session(dir: &Path, name: &str, events: &[SceneEvent]) -> SessionReader {
    let path = dir.join(name);
    let mut header = SessionHeader::new(name)
        .with_entity("robot", Role::Robot)
        .with_entity("avatar", Role::Avatar)
        .with_entity("box", Role::Object);
    header.created_at = 1_700_000_000_000_000;
    let mut w = open_session(&path, &header).unwrap();
    for e in events {
        w.append_event(e).unwrap();
    }
    w.close().unwrap();
    SessionReader::open(&path).unwrap()
}

fn marker(t: i64, m: TaskMarker) -> SceneEvent {
    SceneEvent::task_marker(t, "robot", m)
}

fn to_array(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn random_unit(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ))
}

/// Avatar pose with the head at `head` and the root at `root`.
fn avatar(t: i64, seq: i64, root: [f64; 3], head: [f64; 4]) -> SceneEvent {
    let mut state = AvatarState::synthetic("avatar", seq, 0.25);
    state.joints[0].position = root;
    state.joints[HEAD].rotation = head;
    SceneEvent::avatar(t, &state)
}

/// Random walk of the avatar: small random head rotations and root steps.
/// Returns the events plus the root positions and head rotations used.
fn random_walk(rng: &mut ChaCha8Rng, n: usize) -> (Vec<SceneEvent>, Vec<[f64; 3]>, Vec<[f64; 4]>) {
    let mut q = random_unit(rng);
    let mut p = [0.0; 3];
    let (mut events, mut roots, mut heads) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..n {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let step = UnitQuaternion::from_scaled_axis(axis.normalize() * rng.random_range(0.01..0.6));
        q = step * q;
        for v in &mut p {
            *v += rng.random_range(-0.5..0.5);
        }
        let t = 1_000 + k as i64 * 16_667;
        events.push(avatar(t, k as i64, p, to_array(&q)));
        roots.push(p);
        heads.push(to_array(&q));
        // Unrelated traffic between samples.
        if rng.random_bool(0.3) {
            events.push(SceneEvent::rigid(t, "box", &RigidPose::at([rng.random(), 0.0, rng.random()])));
        }
        if rng.random_bool(0.2) {
            events.push(SceneEvent::utterance(t, "robot", "robot", "hello"));
        }
    }
    (events, roots, heads)
}

/// Gaze sum computed from rotation matrices: the third column is +Z, the
/// step angle is `acos` of the clamped dot product.
fn gaze_oracle(heads: &[[f64; 4]]) -> f64 {
    let forward = |[w, x, y, z]: [f64; 4]| [2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)];
    heads
        .windows(2)
        .map(|pair| {
            let (a, b) = (forward(pair[0]), forward(pair[1]));
            let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
            dot.clamp(-1.0, 1.0).acos()
        })
        .sum()
}

/// Cumulative sum of segment lengths written out longhand.
fn path_oracle(roots: &[[f64; 3]]) -> f64 {
    let mut total = 0.0;
    for k in 1..roots.len() {
        let d: Vec<f64> = (0..3).map(|i| roots[k][i] - roots[k - 1][i]).collect();
        total += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    }
    total
}

#[test]
fn required_time_examples() {
    let dir = tempfile::tempdir().unwrap();
    let done = session(
        dir.path(),
        "done",
        &[marker(1_000_000, TaskMarker::Start), marker(61_000_000, TaskMarker::Complete)],
    );
    let rt = required_time(&done, 300.0).unwrap();
    assert_eq!(rt.seconds, 60.0);
    assert!(rt.completed);

    let open = session(
        dir.path(),
        "open",
        &[marker(1_000_000, TaskMarker::Start), marker(9_000_000, TaskMarker::Abort)],
    );
    let rt = required_time(&open, 300.0).unwrap();
    assert_eq!(rt.seconds, 300.0);
    assert!(!rt.completed);

    let reversed = session(
        dir.path(),
        "reversed",
        &[marker(1_000_000, TaskMarker::Complete), marker(2_000_000, TaskMarker::Start)],
    );
    assert!(matches!(required_time(&reversed, 300.0), Err(MetricsError::NoTaskMarkers)));

    let none = session(dir.path(), "none", &[SceneEvent::utterance(5, "robot", "robot", "hi")]);
    assert!(matches!(required_time(&none, 300.0), Err(MetricsError::NoTaskMarkers)));
}

#[test]
fn utterance_counts() {
    let dir = tempfile::tempdir().unwrap();
    let empty = session(dir.path(), "empty", &[]);
    assert_eq!(count_utterances(&empty, "robot").unwrap(), 0);

    let mut events = Vec::new();
    for k in 0..8 {
        let speaker = if k % 8 < 5 { "robot" } else { "avatar" };
        events.push(SceneEvent::utterance(k * 10, speaker, speaker, "line"));
    }
    let mixed = session(dir.path(), "mixed", &events);
    assert_eq!(count_utterances(&mixed, "robot").unwrap(), 5);
    assert_eq!(count_utterances(&mixed, "avatar").unwrap(), 3);

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (walk, _, _) = random_walk(&mut rng, 300);
    let reader = session(dir.path(), "walk", &walk);
    let scan = walk.iter().filter(|e| e.speaker() == Some("robot")).count() as i64;
    assert_eq!(count_utterances(&reader, "robot").unwrap(), scan);
}

#[test]
fn gaze_angle_examples() {
    let dir = tempfile::tempdir().unwrap();
    let q = to_array(&UnitQuaternion::from_euler_angles(0.3, 1.1, -0.4));
    let still: Vec<_> = (0..50).map(|k| avatar(k * 20_000, k, [0.0; 3], q)).collect();
    let reader = session(dir.path(), "still", &still);
    assert_eq!(accumulated_gaze_angle(&reader, "avatar", HEAD).unwrap(), 0.0);

    let yawed: Vec<_> = (0..3)
        .map(|k| {
            let yaw = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), k as f64 * FRAC_PI_6);
            avatar(k * 20_000, k, [0.0; 3], to_array(&yaw))
        })
        .collect();
    let reader = session(dir.path(), "yawed", &yawed);
    let total = accumulated_gaze_angle(&reader, "avatar", HEAD).unwrap();
    assert!((total - FRAC_PI_3).abs() < 1e-12, "{total}");

    assert!(matches!(
        accumulated_gaze_angle(&reader, "ghost", HEAD),
        Err(MetricsError::UnknownEntity(e)) if e == "ghost"
    ));
    assert!(matches!(accumulated_gaze_angle(&reader, "avatar", 56), Err(MetricsError::InvalidJoint(56))));
}

#[test]
fn gaze_angle_matches_oracles_on_random_walks() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for trial in 0..10 {
        let (events, _, heads) = random_walk(&mut rng, 200);
        let reader = session(dir.path(), &format!("walk{trial}"), &events);
        let got = accumulated_gaze_angle(&reader, "avatar", HEAD).unwrap();
        let want = gaze_oracle(&heads);
        assert!((got - want).abs() <= 1e-9, "trial {trial}: {got} vs {want}");
    }

    // Yaw-only walk: the gaze change equals the relative rotation angle,
    // taken from the quaternion logarithm.
    let mut yaw = 0.0f64;
    let mut heads = Vec::new();
    for _ in 0..300 {
        yaw += rng.random_range(-0.8..0.8);
        let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw);
        heads.push(q);
    }
    let events: Vec<_> = heads
        .iter()
        .enumerate()
        .map(|(k, q)| avatar(k as i64 * 10_000, k as i64, [0.0; 3], to_array(q)))
        .collect();
    let reader = session(dir.path(), "yaw", &events);
    let log_oracle: f64 = heads
        .windows(2)
        .map(|w| {
            let rel = w[0].inverse() * w[1];
            let q = rel.quaternion();
            2.0 * q.imag().norm().atan2(q.w.abs())
        })
        .sum();
    let got = accumulated_gaze_angle(&reader, "avatar", HEAD).unwrap();
    assert!((got - log_oracle).abs() <= 1e-9, "{got} vs {log_oracle}");
}

#[test]
fn trajectory_length_examples_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let q = [1.0, 0.0, 0.0, 0.0];
    let still: Vec<_> = (0..20).map(|k| avatar(k * 1000, k, [2.0, 0.0, -1.0], q)).collect();
    let reader = session(dir.path(), "still", &still);
    assert_eq!(trajectory_length(&reader, "avatar").unwrap(), 0.0);

    let square = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]];
    let events: Vec<_> = square.iter().enumerate().map(|(k, p)| avatar(k as i64, k as i64, *p, q)).collect();
    let reader = session(dir.path(), "square", &events);
    assert_eq!(trajectory_length(&reader, "avatar").unwrap(), 4.0);

    // Rigid entities use their body position.
    let boxes: Vec<_> = square.iter().enumerate().map(|(k, p)| SceneEvent::rigid(k as i64, "box", &RigidPose::at(*p))).collect();
    let reader = session(dir.path(), "box", &boxes);
    assert_eq!(trajectory_length(&reader, "box").unwrap(), 4.0);
    assert!(matches!(trajectory_length(&reader, "ghost"), Err(MetricsError::UnknownEntity(_))));

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..10 {
        let (events, roots, _) = random_walk(&mut rng, 250);
        let reader = session(dir.path(), &format!("walk{trial}"), &events);
        let got = trajectory_length(&reader, "avatar").unwrap();
        let want = path_oracle(&roots);
        assert!((got - want).abs() <= 1e-9, "trial {trial}: {got} vs {want}");
    }
}

fn synthetic_session(dir: &Path, name: &str) -> SessionReader {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (mut walk, _, _) = random_walk(&mut rng, 120);
    walk.insert(0, marker(0, TaskMarker::Start));
    let end = walk.last().unwrap().t;
    walk.push(marker(end + 500_000, TaskMarker::Complete));
    session(dir, name, &walk)
}

#[test]
fn extract_features_composes_the_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let timed = session(
        dir.path(),
        "timed",
        &[marker(1_000_000, TaskMarker::Start), marker(61_000_000, TaskMarker::Complete)],
    );
    let v = extract_features(&timed, &["required_time_s"]).unwrap();
    assert_eq!(v.values, vec![("required_time_s".to_owned(), 60.0)]);
    assert_eq!(v.session_id, "timed");

    let reader = synthetic_session(dir.path(), "synthetic");
    let names = ["trajectory_length_m", "required_time_s", "gaze_angle_rad", "utterance_count"];
    let v = extract_features(&reader, &names).unwrap();
    assert_eq!(v.names().collect::<Vec<_>>(), names);
    assert_eq!(v.get("required_time_s").unwrap(), required_time(&reader, 300.0).unwrap().seconds);
    assert_eq!(v.get("utterance_count").unwrap(), count_utterances(&reader, "robot").unwrap() as f64);
    assert_eq!(v.get("gaze_angle_rad").unwrap(), accumulated_gaze_angle(&reader, "avatar", HEAD).unwrap());
    assert_eq!(v.get("trajectory_length_m").unwrap(), trajectory_length(&reader, "avatar").unwrap());

    assert!(matches!(
        extract_features(&reader, &["required_time_s", "heart_rate"]),
        Err(MetricsError::UnsupportedFeature(n)) if n == "heart_rate"
    ));

    let mut registry = FeatureRegistry::with_builtins(MetricsConfig {
        subject: Some("box".into()),
        ..MetricsConfig::default()
    });
    registry.register("event_count", |r| Ok(r.read_all()?.len() as f64));
    let v = registry.extract(&reader, &["event_count", "trajectory_length_m"]).unwrap();
    assert_eq!(v.get("event_count").unwrap(), reader.read_all().unwrap().len() as f64);
    assert_eq!(v.get("trajectory_length_m").unwrap(), trajectory_length(&reader, "box").unwrap());
}

#[test]
fn extraction_is_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let reader = synthetic_session(dir.path(), "synthetic");
    let names: Vec<String> = FeatureRegistry::default().names().map(str::to_owned).collect();
    let bits = |v: FeatureVector| v.values.iter().map(|(_, x)| x.to_bits()).collect::<Vec<_>>();
    let first = bits(extract_features(&reader, &names).unwrap());
    let again = bits(extract_features(&SessionReader::open(reader.path()).unwrap(), &names).unwrap());
    assert_eq!(first, again);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn metrics_are_additive_at_sample_boundaries(seed in any::<u64>(), n in 3usize..80, split in 0.0f64..1.0) {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (events, _, _) = random_walk(&mut rng, n);
        let reader = session(dir.path(), "walk", &events);
        let samples: Vec<i64> = events.iter().filter(|e| e.entity_id == "avatar").map(|e| e.t).collect();
        let (t0, t2) = (samples[0], *samples.last().unwrap());
        let t1 = samples[((samples.len() - 1) as f64 * split) as usize];

        let whole = trajectory_length_in(&reader, "avatar", t0, t2).unwrap();
        let parts = trajectory_length_in(&reader, "avatar", t0, t1).unwrap()
            + trajectory_length_in(&reader, "avatar", t1, t2).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-9, "{} vs {}", whole, parts);
        prop_assert_eq!(whole, trajectory_length(&reader, "avatar").unwrap());

        let whole = accumulated_gaze_angle_in(&reader, "avatar", HEAD, t0, t2).unwrap();
        let parts = accumulated_gaze_angle_in(&reader, "avatar", HEAD, t0, t1).unwrap()
            + accumulated_gaze_angle_in(&reader, "avatar", HEAD, t1, t2).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-9, "{} vs {}", whole, parts);
    }
}

fn names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

#[test]
fn zero_noise_fit_recovers_plane_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 50;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-5.0..5.0));
    let y = DVector::from_fn(n, |i, _| 1.0 + 2.0 * x[(i, 0)] - 3.0 * x[(i, 1)]);
    let m = ols_fit(names(2), &x, &y).unwrap();
    assert!((m.intercept - 1.0).abs() <= 1e-9, "{}", m.intercept);
    assert!((m.coefficients[0] - 2.0).abs() <= 1e-9);
    assert!((m.coefficients[1] + 3.0).abs() <= 1e-9);
    assert_eq!(m.r_squared, 1.0);
    assert_eq!(m.n_samples, 50);
    for i in 0..n {
        let yhat = m.predict_row(&[x[(i, 0)], x[(i, 1)]]).unwrap();
        assert!((yhat - y[i]).abs() <= 1e-9);
    }
}

#[test]
fn fit_agrees_with_normal_equations_on_well_conditioned_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (n, p) = (120, 4);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let m = ols_fit(names(p), &x, &y).unwrap();

    let mut a = DMatrix::from_element(n, p + 1, 1.0);
    a.view_mut((0, 1), (n, p)).copy_from(&x);
    let ata = a.transpose() * &a;
    let beta = ata.clone().cholesky().unwrap().solve(&(a.transpose() * &y));
    assert!((m.intercept - beta[0]).abs() <= 1e-9);
    for j in 0..p {
        assert!((m.coefficients[j] - beta[j + 1]).abs() <= 1e-9);
    }
    let sigma2 = m.residual_std.powi(2);
    let inv = ata.try_inverse().unwrap();
    assert!((m.intercept_se - (sigma2 * inv[(0, 0)]).sqrt()).abs() <= 1e-9);
    for j in 0..p {
        assert!((m.standard_errors[j] - (sigma2 * inv[(j + 1, j + 1)]).sqrt()).abs() <= 1e-9);
    }
}

#[test]
fn degenerate_designs_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let n = 30;
    let base = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let dup = DMatrix::from_fn(n, 2, |i, _| base[(i, 0)]);
    let y = DVector::from_fn(n, |_, _| rng.random::<f64>());
    assert!(matches!(ols_fit(names(2), &dup, &y), Err(MetricsError::RankDeficient { rank: 2, columns: 3 })));

    let constant = DMatrix::from_element(n, 1, 4.0);
    assert!(matches!(ols_fit(names(1), &constant, &y), Err(MetricsError::RankDeficient { .. })));

    let x = DMatrix::from_fn(3, 2, |_, _| rng.random::<f64>());
    let y3 = DVector::from_fn(3, |_, _| rng.random::<f64>());
    assert!(matches!(ols_fit(names(2), &x, &y3), Err(MetricsError::TooFewSamples { n: 3, p: 2 })));
    assert!(matches!(ols_fit(names(3), &base, &y), Err(MetricsError::DimensionMismatch(_))));
}

#[test]
fn monte_carlo_coefficients_within_three_standard_errors() {
    let (n, p, trials) = (196, 10, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut hits = vec![0usize; p + 1];
    for _ in 0..trials {
        let beta: Vec<f64> = (0..=p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(n, |i, _| {
            beta[0] + (0..p).map(|j| beta[j + 1] * x[(i, j)]).sum::<f64>() + noise.sample(&mut rng)
        });
        let m = ols_fit(names(p), &x, &y).unwrap();
        if (m.intercept - beta[0]).abs() <= 3.0 * m.intercept_se {
            hits[0] += 1;
        }
        for j in 0..p {
            if (m.coefficients[j] - beta[j + 1]).abs() <= 3.0 * m.standard_errors[j] {
                hits[j + 1] += 1;
            }
        }
    }
    for (j, h) in hits.iter().enumerate() {
        let rate = *h as f64 / trials as f64;
        assert!(rate >= 0.95, "coefficient {j}: {rate}");
    }
}

fn design(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, j| rng.random_range(-1.0..1.0) * 10f64.powi(j as i32 % 3));
    let y = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn residuals_are_orthogonal_to_the_design(seed in any::<u64>(), p in 1usize..8, extra in 2usize..60) {
        let (x, y) = design(seed, p + extra, p);
        let m = ols_fit(names(p), &x, &y).unwrap();
        let n = x.nrows();
        let residuals = DVector::from_fn(n, |i, _| {
            y[i] - m.predict_row(&x.row(i).iter().copied().collect::<Vec<_>>()).unwrap()
        });
        let mut a = DMatrix::from_element(n, p + 1, 1.0);
        a.view_mut((0, 1), (n, p)).copy_from(&x);
        let scale = a.norm() * y.norm();
        let worst = (a.transpose() * residuals).amax();
        prop_assert!(worst <= 1e-8 * scale, "{} vs scale {}", worst, scale);
    }

    #[test]
    fn shifting_scores_moves_only_the_intercept(seed in any::<u64>(), p in 1usize..8, extra in 2usize..60, c in -100.0f64..100.0) {
        let (x, y) = design(seed, p + extra, p);
        let base = ols_fit(names(p), &x, &y).unwrap();
        let shifted = ols_fit(names(p), &x, &y.add_scalar(c)).unwrap();
        prop_assert!((shifted.intercept - base.intercept - c).abs() <= 1e-9);
        for (a, b) in shifted.coefficients.iter().zip(&base.coefficients) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
    }
}

fn plane_model() -> LinearModel {
    LinearModel {
        feature_names: names(2),
        intercept: 1.0,
        coefficients: vec![2.0, -3.0],
        n_samples: 50,
        residual_std: 0.0,
        r_squared: 1.0,
        intercept_se: 0.0,
        standard_errors: vec![0.0, 0.0],
    }
}

#[test]
fn prediction_examples() {
    let m = plane_model();
    let zero = FeatureVector::new("s").with("x1", 0.0).with("x2", 0.0);
    assert_eq!(m.predict(&zero).unwrap(), 1.0);
    let ones = FeatureVector::new("s").with("x2", 1.0).with("x1", 1.0).with("unused", 9.0);
    assert_eq!(m.predict(&ones).unwrap(), 0.0);
    assert_eq!(m.predict_clamped(&ones).unwrap(), 1.0);
    let high = FeatureVector::new("s").with("x1", 10.0).with("x2", 0.0);
    assert_eq!(m.predict(&high).unwrap(), 21.0);
    assert_eq!(m.predict_clamped(&high).unwrap(), 5.0);
    let partial = FeatureVector::new("s").with("x1", 1.0);
    assert!(matches!(m.predict(&partial), Err(MetricsError::MissingFeature(n)) if n == "x2"));
}

#[test]
fn fit_from_feature_vectors_and_model_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let samples: Vec<FeatureVector> = (0..40)
        .map(|i| {
            FeatureVector::new(format!("s{i}"))
                .with("required_time_s", rng.random_range(30.0..300.0))
                .with("utterance_count", rng.random_range(0..20) as f64)
                .with("gaze_angle_rad", rng.random_range(0.0..50.0))
        })
        .collect();
    let scores: Vec<f64> = samples.iter().map(|_| rng.random_range(1.0..5.0)).collect();
    let feature_names = vec!["utterance_count".to_owned(), "required_time_s".to_owned(), "gaze_angle_rad".to_owned()];
    let m = LinearModel::fit(feature_names.clone(), &samples, &scores).unwrap();
    assert_eq!(m.feature_names, feature_names);
    assert!((0.0..=1.0).contains(&m.r_squared));

    let bytes = encode_document(&m.to_document()).unwrap();
    assert_eq!(LinearModel::from_document(&decode_document(&bytes).unwrap()).unwrap(), m);
    let text = encode_json(&m.to_document()).unwrap();
    assert_eq!(LinearModel::from_document(&decode_json(&text).unwrap()).unwrap(), m);

    let mut broken = m.to_document();
    broken.remove("coefficients");
    assert!(matches!(LinearModel::from_document(&broken), Err(MetricsError::InvalidModel(_))));

    let missing = vec![samples[0].clone(), FeatureVector::new("bare")];
    assert!(matches!(
        LinearModel::fit(feature_names, &missing, &[1.0, 2.0]),
        Err(MetricsError::MissingFeature(_))
    ));
}
