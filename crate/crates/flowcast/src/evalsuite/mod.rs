//! Point-forecast metrics and the baseline forecaster family.

mod baselines;

pub use baselines::{fit_baseline, BaselineConfig, BaselineKind, BaselineModel};

use crate::data::WindowedDataset;
use crate::graph::WeightedAdjacency;
use crate::neural::{self, ModelConfig, ModelParams, NeuralError};
use ndarray::{Array, Array2, Array3, Dimension};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("baseline fit failed: {0}")]
    Fit(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Which scale the metric values are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    Normalized,
    Vehicles,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
    pub units: Units,
}

/// Mean absolute error and root mean squared error over all elements.
pub fn mae_rmse<D: Dimension>(
    actual: &Array<f64, D>,
    predicted: &Array<f64, D>,
    units: Units,
) -> Result<MetricReport> {
    if actual.raw_dim() != predicted.raw_dim() {
        return Err(EvalError::Shape(format!(
            "actual {:?} vs predicted {:?}",
            actual.shape(),
            predicted.shape()
        )));
    }
    if actual.is_empty() {
        return Err(EvalError::Empty("metric input"));
    }
    let n = actual.len();
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (a, p) in actual.iter().zip(predicted.iter()) {
        let d = a - p;
        abs += d.abs();
        sq += d * d;
    }
    Ok(MetricReport { mae: abs / n as f64, rmse: (sq / n as f64).sqrt(), n, units })
}

/// Anything that can produce point forecasts for a windowed dataset.
pub trait Forecaster {
    fn predict(&self, ds: &WindowedDataset) -> Result<Array3<f64>>;
}

/// The trained graph forecaster, packaged for side-by-side comparison.
pub struct GcnForecaster {
    pub params: ModelParams,
    pub config: ModelConfig,
    a_hat: Array2<f64>,
}

impl GcnForecaster {
    pub fn new(params: ModelParams, config: ModelConfig, adj: &WeightedAdjacency) -> Self {
        GcnForecaster { params, config, a_hat: adj.row_normalized() }
    }
}

impl Forecaster for GcnForecaster {
    fn predict(&self, ds: &WindowedDataset) -> Result<Array3<f64>> {
        Ok(neural::model::predict(&self.params, &self.config, &self.a_hat, &ds.inputs.view(), 256)?)
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub model: String,
    pub report: MetricReport,
}

/// Score every model on the same test split, in the given order.
pub fn compare(models: &[(&str, &dyn Forecaster)], test: &WindowedDataset) -> Result<Vec<ComparisonRow>> {
    if test.is_empty() {
        return Err(EvalError::Empty("test split"));
    }
    let mut rows = Vec::with_capacity(models.len());
    for (name, model) in models {
        let pred = model.predict(test)?;
        let report = mae_rmse(&test.targets, &pred, Units::Normalized)?;
        rows.push(ComparisonRow { model: name.to_string(), report });
    }
    Ok(rows)
}

/// `model,mae,rmse,seed,dataset_fingerprint` rows.
pub fn comparison_csv(rows: &[ComparisonRow], seed: u64, dataset_fingerprint: u64) -> String {
    let mut out = String::from("model,mae,rmse,seed,dataset_fingerprint\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{seed},{dataset_fingerprint:016x}\n",
            r.model, r.report.mae, r.report.rmse
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::arr1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_prediction_scores_zero() {
        let a = arr1(&[1.0, 2.0, 3.0]);
        let r = mae_rmse(&a, &a, Units::Normalized).unwrap();
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.n, 3);
    }

    #[test]
    fn two_element_arithmetic() {
        let r = mae_rmse(&arr1(&[0.0, 0.0]), &arr1(&[1.0, 3.0]), Units::Normalized).unwrap();
        assert_eq!(r.mae, 2.0);
        assert_relative_eq!(r.rmse, 5.0f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn constant_offset_makes_mae_equal_rmse() {
        let a = arr1(&[5.0, 9.0, -2.0, 0.5]);
        let p = a.mapv(|v| v + 3.25);
        let r = mae_rmse(&a, &p, Units::Normalized).unwrap();
        assert_relative_eq!(r.mae, 3.25, max_relative = 1e-15);
        assert_relative_eq!(r.rmse, 3.25, max_relative = 1e-12);
    }

    #[test]
    fn mae_never_exceeds_rmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let n = rng.random_range(1..40);
            let a = ndarray::Array1::from_shape_fn(n, |_| rng.random_range(-10.0..10.0));
            let p = ndarray::Array1::from_shape_fn(n, |_| rng.random_range(-10.0..10.0));
            let r = mae_rmse(&a, &p, Units::Normalized).unwrap();
            assert!(r.mae <= r.rmse + 1e-12, "mae {} rmse {}", r.mae, r.rmse);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = arr1(&[1.0]);
        let p = arr1(&[1.0, 2.0]);
        assert!(matches!(mae_rmse(&a, &p, Units::Normalized), Err(EvalError::Shape(_))));
    }
}
