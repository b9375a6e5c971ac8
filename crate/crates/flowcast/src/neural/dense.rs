//! Fully connected layer (used for the forecast head and baselines).

use ndarray::{Array1, Array2, Axis};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `[in_dim × out_dim]`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseParams {
    pub fn zeros_like(&self) -> DenseParams {
        DenseParams { w: Array2::zeros(self.w.dim()), b: Array1::zeros(self.b.len()) }
    }

    /// `x · W + b` for a `[batch × in_dim]` input.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Returns `(dW, db, dx)` for upstream gradient `dy`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
        let dw = x.t().dot(dy);
        let db = dy.sum_axis(Axis(0));
        let dx = dy.dot(&self.w.t());
        (dw, db, dx)
    }
}
