use nalgebra::{DMatrix, DVector};

use crate::codec::{Document, Value};

use super::MetricsError;
use super::features::FeatureVector;

/// Relative pivot size below which a design column counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Bounds of the questionnaire scale.
pub const LIKERT_MIN: f64 = 1.0;
pub const LIKERT_MAX: f64 = 5.0;

/// Ordinary least squares model `y = intercept + coefficients · x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub n_samples: i32,
    pub residual_std: f64,
    pub r_squared: f64,
    pub intercept_se: f64,
    /// Standard error of each coefficient.
    pub standard_errors: Vec<f64>,
}

/// Fits `y` on `[1 | x]` through a column-pivoted QR decomposition.
pub fn ols_fit(feature_names: Vec<String>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearModel, MetricsError> {
    let (n, p) = x.shape();
    if feature_names.len() != p {
        return Err(MetricsError::DimensionMismatch(format!(
            "{} names for {p} columns",
            feature_names.len()
        )));
    }
    if y.len() != n {
        return Err(MetricsError::DimensionMismatch(format!("{} targets for {n} rows", y.len())));
    }
    if p == 0 {
        return Err(MetricsError::DimensionMismatch("no features".into()));
    }
    if n <= p + 1 {
        return Err(MetricsError::TooFewSamples { n, p });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite("regression input".into()));
    }

    let k = p + 1;
    let mut a = DMatrix::from_element(n, k, 1.0);
    a.view_mut((0, 1), (n, p)).copy_from(x);
    let largest = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);

    let (q, r, perm) = a.clone().col_piv_qr().unpack();
    let rank = (0..k).filter(|&i| r[(i, i)].abs() > RANK_TOLERANCE * largest).count();
    if rank < k {
        return Err(MetricsError::RankDeficient { rank, columns: k });
    }

    // A·P = Q·R, so β = P·R⁻¹·Qᵀy and (AᵀA)⁻¹ = P·R⁻¹R⁻ᵀ·Pᵀ.
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(MetricsError::RankDeficient { rank: k - 1, columns: k })?;
    let mut beta = &r_inv * (q.transpose() * y);
    perm.inv_permute_rows(&mut beta);

    let fitted = &a * &beta;
    let residuals = y - &fitted;
    let ssr = residuals.norm_squared();
    let mean = y.mean();
    let sst = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 1.0 };
    let residual_std = (ssr / (n - k) as f64).sqrt();

    let mut variance = DVector::from_iterator(k, r_inv.row_iter().map(|row| row.norm_squared()));
    perm.inv_permute_rows(&mut variance);
    let se: Vec<f64> = variance.iter().map(|v| residual_std * v.sqrt()).collect();

    Ok(LinearModel {
        feature_names,
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        n_samples: i32::try_from(n).unwrap_or(i32::MAX),
        residual_std,
        r_squared,
        intercept_se: se[0],
        standard_errors: se[1..].to_vec(),
    })
}

impl LinearModel {
    /// Fits the named features of `samples` against `scores`.
    pub fn fit(feature_names: Vec<String>, samples: &[FeatureVector], scores: &[f64]) -> Result<Self, MetricsError> {
        let x = super::feature_matrix(samples, &feature_names)?;
        ols_fit(feature_names, &x, &DVector::from_column_slice(scores))
    }

    /// Raw prediction for values given in `feature_names` order.
    pub fn predict_row(&self, x: &[f64]) -> Result<f64, MetricsError> {
        if x.len() != self.coefficients.len() {
            return Err(MetricsError::DimensionMismatch(format!(
                "{} values for {} features",
                x.len(),
                self.coefficients.len()
            )));
        }
        Ok(self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }

    /// Raw prediction; extra features in `x` are ignored.
    pub fn predict(&self, x: &FeatureVector) -> Result<f64, MetricsError> {
        let row = self
            .feature_names
            .iter()
            .map(|name| x.get(name).ok_or_else(|| MetricsError::MissingFeature(name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        self.predict_row(&row)
    }

    /// [`LinearModel::predict`] limited to the questionnaire range.
    pub fn predict_clamped(&self, x: &FeatureVector) -> Result<f64, MetricsError> {
        Ok(self.predict(x)?.clamp(LIKERT_MIN, LIKERT_MAX))
    }

    pub fn to_document(&self) -> Document {
        let floats = |v: &[f64]| Value::Array(v.iter().map(|&f| Value::Float64(f)).collect());
        let diagnostics = Document::new()
            .with("n_samples", self.n_samples)
            .with("residual_std", self.residual_std)
            .with("r_squared", self.r_squared)
            .with("intercept_se", self.intercept_se)
            .with("standard_errors", floats(&self.standard_errors));
        Document::new()
            .with(
                "feature_names",
                Value::Array(self.feature_names.iter().map(|n| Value::String(n.clone())).collect()),
            )
            .with("intercept", self.intercept)
            .with("coefficients", floats(&self.coefficients))
            .with("diagnostics", diagnostics)
    }

    pub fn from_document(d: &Document) -> Result<Self, MetricsError> {
        let bad = |what: &str| MetricsError::InvalidModel(what.to_owned());
        let floats = |d: &Document, key: &str| -> Result<Vec<f64>, MetricsError> {
            d.get_array(key)
                .ok_or_else(|| bad(key))?
                .iter()
                .map(|v| v.as_number().ok_or_else(|| bad(key)))
                .collect()
        };
        let number = |d: &Document, key: &str| d.get(key).and_then(Value::as_number).ok_or_else(|| bad(key));

        let feature_names = d
            .get_array("feature_names")
            .ok_or_else(|| bad("feature_names"))?
            .iter()
            .map(|v| v.as_str().map(str::to_owned).ok_or_else(|| bad("feature_names")))
            .collect::<Result<Vec<_>, _>>()?;
        let coefficients = floats(d, "coefficients")?;
        let diag = d.get_document("diagnostics").ok_or_else(|| bad("diagnostics"))?;
        let n_samples = diag
            .get("n_samples")
            .and_then(Value::as_i64)
            .and_then(|n| i32::try_from(n).ok())
            .ok_or_else(|| bad("n_samples"))?;
        let model = LinearModel {
            intercept: number(d, "intercept")?,
            n_samples,
            residual_std: number(diag, "residual_std")?,
            r_squared: number(diag, "r_squared")?,
            intercept_se: number(diag, "intercept_se")?,
            standard_errors: floats(diag, "standard_errors")?,
            feature_names,
            coefficients,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), MetricsError> {
        let p = self.feature_names.len();
        if p == 0 {
            return Err(MetricsError::InvalidModel("no features".into()));
        }
        if self.coefficients.len() != p || self.standard_errors.len() != p {
            return Err(MetricsError::InvalidModel(format!("{p} features but mismatched coefficient arrays")));
        }
        if (self.n_samples as i64) <= p as i64 {
            return Err(MetricsError::InvalidModel(format!("n_samples {} <= {p}", self.n_samples)));
        }
        if !(0.0..=1.0).contains(&self.r_squared) {
            return Err(MetricsError::InvalidModel(format!("r_squared {}", self.r_squared)));
        }
        let all = [self.intercept, self.residual_std, self.intercept_se];
        if all.iter().chain(&self.coefficients).chain(&self.standard_errors).any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite("model".into()));
        }
        Ok(())
    }
}
