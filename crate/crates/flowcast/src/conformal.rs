//! Adaptive conformal prediction intervals.
//!
//! A [`QuantileState`] holds the most recent batch of absolute validation
//! residuals and the adjusted quantile derived from them. During training the
//! buffer is replaced wholesale after every epoch (no smoothing factor), so
//! the interval half-width tracks the current model. Intervals are symmetric:
//! `[forecast - q, forecast + q]`.
//!
//! The quantile is the split-conformal order statistic: with `n` residuals
//! and miscoverage level `alpha`, `q` is the `ceil((n+1)(1-alpha))`-th
//! smallest residual (clamped to the largest one). Under exchangeability of
//! calibration and test residuals this gives finite-sample coverage of at
//! least `1 - alpha`.

use ndarray::{Array, Dimension, Zip};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("residual buffer is empty")]
    EmptyResiduals,
    #[error("residuals must be finite and >= 0, got {0}")]
    InvalidResidual(f64),
    #[error("alpha must be in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("quantile is undefined: no residuals observed yet")]
    UndefinedQuantile,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("interval batch is empty")]
    EmptyBatch,
}

pub type Result<T> = std::result::Result<T, ConformalError>;

/// Residual buffer plus the adjusted quantile it defines.
#[derive(Debug, Clone)]
pub struct QuantileState {
    residuals: Vec<f64>,
    alpha: f64,
    q_adjusted: Option<f64>,
}

impl QuantileState {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ConformalError::InvalidAlpha(alpha));
        }
        Ok(QuantileState { residuals: Vec::new(), alpha, q_adjusted: None })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Current interval half-width, if any residuals have been observed.
    pub fn q_adjusted(&self) -> Option<f64> {
        self.q_adjusted
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Replace the buffer with a fresh batch of absolute residuals and
    /// recompute the adjusted quantile.
    pub fn update_quantile(&mut self, residuals: &[f64]) -> Result<()> {
        if residuals.is_empty() {
            return Err(ConformalError::EmptyResiduals);
        }
        for &r in residuals {
            if !(r.is_finite() && r >= 0.0) {
                return Err(ConformalError::InvalidResidual(r));
            }
        }
        let mut sorted = residuals.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("residuals are finite"));
        let n = sorted.len();
        let rank = ((n + 1) as f64 * (1.0 - self.alpha)).ceil() as usize;
        let rank = rank.clamp(1, n);
        self.q_adjusted = Some(sorted[rank - 1]);
        self.residuals = residuals.to_vec();
        Ok(())
    }

    /// Restore a previously saved quantile (e.g. from a checkpoint) without
    /// the backing residuals.
    pub fn with_saved_quantile(alpha: f64, q_adjusted: f64) -> Result<Self> {
        let mut s = Self::new(alpha)?;
        if !(q_adjusted.is_finite() && q_adjusted >= 0.0) {
            return Err(ConformalError::InvalidResidual(q_adjusted));
        }
        s.q_adjusted = Some(q_adjusted);
        Ok(s)
    }
}

/// Symmetric prediction intervals around a batch of point forecasts.
#[derive(Debug, Clone)]
pub struct IntervalBatch<D: Dimension> {
    pub lower: Array<f64, D>,
    pub upper: Array<f64, D>,
    pub alpha: f64,
    /// Set when the batch was built as `forecast ± q`; lets the mean width be
    /// the mathematically exact `2 q` instead of a rounding-prone
    /// element-wise difference.
    half_width: Option<f64>,
}

impl<D: Dimension> IntervalBatch<D> {
    /// Wrap explicit bounds (possibly of varying width).
    pub fn from_bounds(lower: Array<f64, D>, upper: Array<f64, D>, alpha: f64) -> Result<Self> {
        if lower.raw_dim() != upper.raw_dim() {
            return Err(ConformalError::Shape(format!(
                "lower {:?} vs upper {:?}",
                lower.shape(),
                upper.shape()
            )));
        }
        Ok(IntervalBatch { lower, upper, alpha, half_width: None })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

/// `[forecast - q, forecast + q]` element-wise. Lower bounds are reported
/// as-is even when negative; clipping would break the width identity
/// `mpiw = 2 q`, so display-level flagging is left to callers.
pub fn intervals<D: Dimension>(
    forecasts: &Array<f64, D>,
    state: &QuantileState,
) -> Result<IntervalBatch<D>> {
    let q = state.q_adjusted().ok_or(ConformalError::UndefinedQuantile)?;
    Ok(IntervalBatch {
        lower: forecasts.mapv(|f| f - q),
        upper: forecasts.mapv(|f| f + q),
        alpha: state.alpha(),
        half_width: Some(q),
    })
}

/// Prediction-interval coverage probability: the fraction of actual values
/// inside their closed interval. Values exactly on a bound count as covered.
pub fn picp<D: Dimension>(batch: &IntervalBatch<D>, actual: &Array<f64, D>) -> Result<f64> {
    if batch.lower.raw_dim() != actual.raw_dim() {
        return Err(ConformalError::Shape(format!(
            "intervals {:?} vs actuals {:?}",
            batch.lower.shape(),
            actual.shape()
        )));
    }
    if batch.is_empty() {
        return Err(ConformalError::EmptyBatch);
    }
    let mut covered = 0usize;
    Zip::from(&batch.lower).and(&batch.upper).and(actual).for_each(|&lo, &hi, &y| {
        if lo <= y && y <= hi {
            covered += 1;
        }
    });
    Ok(covered as f64 / actual.len() as f64)
}

/// Mean prediction-interval width. Exactly `2 q` for a symmetric batch.
pub fn mpiw<D: Dimension>(batch: &IntervalBatch<D>) -> Result<f64> {
    if batch.is_empty() {
        return Err(ConformalError::EmptyBatch);
    }
    if let Some(q) = batch.half_width {
        return Ok(2.0 * q);
    }
    let total: f64 = batch.upper.iter().zip(batch.lower.iter()).map(|(u, l)| u - l).sum();
    Ok(total / batch.lower.len() as f64)
}

/// One row of the interval export.
#[derive(Debug, Clone)]
pub struct IntervalRow {
    pub sample: usize,
    pub station: String,
    pub t: chrono::NaiveDateTime,
    pub forecast: f64,
    pub lower: f64,
    pub upper: f64,
    pub actual: f64,
    pub covered: bool,
}

/// `sample,station,t,forecast,lower,upper,actual,covered` CSV text.
pub fn intervals_csv(rows: &[IntervalRow]) -> String {
    let mut out = String::from("sample,station,t,forecast,lower,upper,actual,covered\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.sample,
            r.station,
            r.t.format("%Y-%m-%dT%H:%M:%S"),
            r.forecast,
            r.lower,
            r.upper,
            r.actual,
            r.covered as u8
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{arr1, Array1};

    #[test]
    fn quantile_matches_order_statistic_oracle() {
        // Oracle: sort independently and index with ceil((n+1)(1-alpha)).
        let residuals: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let mut shuffled = residuals.clone();
        shuffled.reverse();
        let mut state = QuantileState::new(0.1).unwrap();
        state.update_quantile(&shuffled).unwrap();

        let mut sorted = residuals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = ((sorted.len() + 1) as f64 * 0.9).ceil() as usize; // 91
        assert_eq!(k, 91);
        assert_eq!(state.q_adjusted().unwrap(), sorted[k - 1]);
        assert_eq!(state.q_adjusted().unwrap(), 91.0);
    }

    #[test]
    fn constant_residuals_give_that_constant() {
        for alpha in [0.05, 0.1, 0.5, 0.9] {
            let mut state = QuantileState::new(alpha).unwrap();
            state.update_quantile(&[3.0; 17]).unwrap();
            assert_eq!(state.q_adjusted().unwrap(), 3.0);
        }
    }

    #[test]
    fn single_residual_clamps_rank() {
        let mut state = QuantileState::new(0.1).unwrap();
        state.update_quantile(&[0.7]).unwrap();
        assert_eq!(state.q_adjusted().unwrap(), 0.7);
    }

    #[test]
    fn update_replaces_buffer() {
        let mut state = QuantileState::new(0.1).unwrap();
        state.update_quantile(&[100.0; 10]).unwrap();
        assert_eq!(state.q_adjusted().unwrap(), 100.0);
        state.update_quantile(&[1.0; 10]).unwrap();
        assert_eq!(state.q_adjusted().unwrap(), 1.0);
        assert_eq!(state.residuals().len(), 10);
    }

    #[test]
    fn empty_or_negative_residuals_rejected() {
        let mut state = QuantileState::new(0.1).unwrap();
        assert!(matches!(state.update_quantile(&[]), Err(ConformalError::EmptyResiduals)));
        assert!(matches!(
            state.update_quantile(&[1.0, -0.5]),
            Err(ConformalError::InvalidResidual(_))
        ));
    }

    #[test]
    fn monotone_in_alpha() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let residuals: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..10.0)).collect();
        let mut prev = f64::INFINITY;
        for alpha in [0.01, 0.05, 0.1, 0.2, 0.5] {
            let mut s = QuantileState::new(alpha).unwrap();
            s.update_quantile(&residuals).unwrap();
            let q = s.q_adjusted().unwrap();
            assert!(q <= prev, "q must shrink as alpha grows");
            prev = q;
        }
    }

    #[test]
    fn interval_arithmetic() {
        let state = QuantileState::with_saved_quantile(0.1, 2.0).unwrap();
        let batch = intervals(&arr1(&[10.0]), &state).unwrap();
        assert_eq!(batch.lower[0], 8.0);
        assert_eq!(batch.upper[0], 12.0);
    }

    #[test]
    fn zero_quantile_degenerates() {
        let state = QuantileState::with_saved_quantile(0.1, 0.0).unwrap();
        let batch = intervals(&arr1(&[5.0, -1.0]), &state).unwrap();
        assert_eq!(batch.lower, batch.upper);
        assert_eq!(mpiw(&batch).unwrap(), 0.0);
    }

    #[test]
    fn undefined_quantile_is_an_error() {
        let state = QuantileState::new(0.1).unwrap();
        assert!(matches!(
            intervals(&arr1(&[1.0]), &state),
            Err(ConformalError::UndefinedQuantile)
        ));
    }

    #[test]
    fn width_identity_holds_exactly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let q = rng.random_range(0.0..5.0);
            let state = QuantileState::with_saved_quantile(0.1, q).unwrap();
            let forecasts: Array1<f64> = Array1::from_iter((0..50).map(|_| rng.random_range(-10.0..10.0)));
            let batch = intervals(&forecasts, &state).unwrap();
            assert_eq!(mpiw(&batch).unwrap(), 2.0 * q);
        }
    }

    #[test]
    fn mpiw_of_mixed_widths_is_the_mean() {
        let batch = IntervalBatch::from_bounds(arr1(&[0.0, 0.0]), arr1(&[1.0, 3.0]), 0.1).unwrap();
        assert_eq!(mpiw(&batch).unwrap(), 2.0);
    }

    #[test]
    fn mpiw_matches_reported_pairing() {
        // A quantile of 0.515 gives a mean width of 1.03 for any batch.
        let state = QuantileState::with_saved_quantile(0.1, 0.515).unwrap();
        let batch = intervals(&arr1(&[0.3, 0.9, 0.1, 4.0]), &state).unwrap();
        assert_relative_eq!(mpiw(&batch).unwrap(), 1.03, max_relative = 1e-12);
    }

    #[test]
    fn picp_counts_boundaries_as_covered() {
        let batch = IntervalBatch::from_bounds(arr1(&[8.0]), arr1(&[12.0]), 0.1).unwrap();
        assert_eq!(picp(&batch, &arr1(&[12.0])).unwrap(), 1.0);
        assert_eq!(picp(&batch, &arr1(&[8.0])).unwrap(), 1.0);
        assert_eq!(picp(&batch, &arr1(&[12.000001])).unwrap(), 0.0);
    }

    #[test]
    fn picp_counts_fractions() {
        let batch = IntervalBatch::from_bounds(arr1(&[0.0; 4]), arr1(&[1.0; 4]), 0.1).unwrap();
        let actual = arr1(&[0.5, 2.0, 0.9, -1.0]);
        assert_eq!(picp(&batch, &actual).unwrap(), 0.5);
    }

    #[test]
    fn picp_is_translation_equivariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let state = QuantileState::with_saved_quantile(0.1, 1.5).unwrap();
        let forecasts: Array1<f64> = Array1::from_iter((0..100).map(|_| rng.random_range(-5.0..5.0)));
        let actual: Array1<f64> = Array1::from_iter((0..100).map(|_| rng.random_range(-5.0..5.0)));
        let base = picp(&intervals(&forecasts, &state).unwrap(), &actual).unwrap();
        for shift in [-3.0, 0.25, 7.0] {
            let shifted = picp(
                &intervals(&forecasts.mapv(|v| v + shift), &state).unwrap(),
                &actual.mapv(|v| v + shift),
            )
            .unwrap();
            assert_eq!(base, shifted);
        }
    }
}
