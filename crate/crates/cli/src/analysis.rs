use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, bail};
use hri_bridge::codec::encode_json;
use hri_bridge::metrics::{FeatureRegistry, FeatureVector, LinearModel, MetricsConfig};
use hri_bridge::store::SessionReader;
use serde_json::json;

const SESSION_COLUMN: &str = "session_id";

pub fn metrics(inputs: &[PathBuf], features: &[String], out: Option<&Path>, config: MetricsConfig) -> anyhow::Result<()> {
    let registry = FeatureRegistry::with_builtins(config);
    let mut rows = Vec::with_capacity(inputs.len());
    for path in inputs {
        let reader = SessionReader::open(path).with_context(|| format!("opening {}", path.display()))?;
        let v = registry
            .extract(&reader, features)
            .with_context(|| format!("extracting features from {}", path.display()))?;
        rows.push(v);
    }

    let sink: Box<dyn std::io::Write> = match out {
        Some(path) => Box::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(std::iter::once(SESSION_COLUMN).chain(features.iter().map(String::as_str)))?;
    for v in &rows {
        let mut record = vec![v.session_id.clone()];
        record.extend(v.values.iter().map(|(_, x)| x.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    if let Some(path) = out {
        println!("{}", json!({ "sessions": rows.len(), "features": features, "out": path.display().to_string() }));
    }
    Ok(())
}

fn read_features(path: &Path) -> anyhow::Result<(Vec<String>, Vec<FeatureVector>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let id_col = headers
        .iter()
        .position(|h| h == SESSION_COLUMN)
        .with_context(|| format!("{} has no {SESSION_COLUMN} column", path.display()))?;
    let mut vectors = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let mut v = FeatureVector::new(&record[id_col]);
        for (j, field) in record.iter().enumerate() {
            if j == id_col {
                continue;
            }
            let value: f64 = field
                .trim()
                .parse()
                .with_context(|| format!("{} row {}: bad {} value {field:?}", path.display(), line + 2, headers[j]))?;
            v.set(headers[j].clone(), value);
        }
        vectors.push(v);
    }
    let names = headers.into_iter().filter(|h| h != SESSION_COLUMN).collect();
    Ok((names, vectors))
}

fn read_scores(path: &Path) -> anyhow::Result<HashMap<String, f64>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no {name} column", path.display()))
    };
    let (id_col, score_col) = (col(SESSION_COLUMN)?, col("score")?);
    let mut scores = HashMap::new();
    for record in r.records() {
        let record = record?;
        let score: f64 = record[score_col]
            .trim()
            .parse()
            .with_context(|| format!("bad score for {}", &record[id_col]))?;
        if scores.insert(record[id_col].to_owned(), score).is_some() {
            bail!("duplicate score for session {}", &record[id_col]);
        }
    }
    Ok(scores)
}

pub fn fit(features: &Path, scores: &Path, out: &Path, columns: Option<Vec<String>>) -> anyhow::Result<()> {
    let (all_names, vectors) = read_features(features)?;
    let scores = read_scores(scores)?;
    let names = columns.unwrap_or(all_names);

    let mut samples = Vec::new();
    let mut y = Vec::new();
    for v in vectors {
        match scores.get(&v.session_id) {
            Some(&s) => {
                y.push(s);
                samples.push(v);
            }
            None => log::warn!("no score for session {}; skipped", v.session_id),
        }
    }
    let model = LinearModel::fit(names, &samples, &y)?;
    std::fs::write(out, encode_json(&model.to_document())?).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{}",
        json!({
            "out": out.display().to_string(),
            "n_samples": model.n_samples,
            "feature_names": model.feature_names,
            "intercept": model.intercept,
            "coefficients": model.coefficients,
            "r_squared": model.r_squared,
            "residual_std": model.residual_std,
        })
    );
    Ok(())
}
