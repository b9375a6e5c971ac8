//! Graph convolution: weighted neighbor aggregation followed by a learnable
//! linear update with activation.
//!
//! For node features `X` (`[stations × in_dim]`) and the row-normalized
//! adjacency `Â`, the layer computes `act(Â · X · W + b)`. Aggregation is the
//! weighted sum of neighbor embeddings, weights taken from the adjacency;
//! row normalization keeps activation scale independent of node degree.

use super::{Activation, NeuralError, Result};
use crate::graph::WeightedAdjacency;
use ndarray::{Array1, Array2, Array3, Axis};

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayerParams {
    /// `[in_dim × out_dim]`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub activation: Activation,
}

impl GcnLayerParams {
    pub fn in_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn zeros_like(&self) -> GcnLayerParams {
        GcnLayerParams {
            w: Array2::zeros(self.w.dim()),
            b: Array1::zeros(self.b.len()),
            activation: self.activation,
        }
    }
}

/// One graph-convolution step for a single feature matrix.
pub fn gcn_forward(
    x: &Array2<f64>,
    adj: &WeightedAdjacency,
    p: &GcnLayerParams,
) -> Result<Array2<f64>> {
    if x.nrows() != adj.n() {
        return Err(NeuralError::Shape(format!(
            "input has {} nodes but adjacency is {}x{}",
            x.nrows(),
            adj.n(),
            adj.n()
        )));
    }
    if x.ncols() != p.in_dim() {
        return Err(NeuralError::Shape(format!(
            "input feature dim {} does not match weight rows {}",
            x.ncols(),
            p.in_dim()
        )));
    }
    let a_hat = adj.row_normalized();
    let pre = a_hat.dot(x).dot(&p.w) + &p.b;
    let out = pre.mapv(|v| p.activation.apply(v));
    if out.iter().any(|v| !v.is_finite()) {
        return Err(NeuralError::NonFinite("gcn_forward output".into()));
    }
    Ok(out)
}

/// Forward intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GcnCache {
    /// `Â · X` per sample: `[batch × stations × in_dim]`
    pub agg: Array3<f64>,
    /// Pre-activation: `[batch × stations × out_dim]`
    pub pre: Array3<f64>,
}

/// Batched forward over `[batch × stations × in_dim]`.
pub(crate) fn forward_batch(
    x: &Array3<f64>,
    a_hat: &Array2<f64>,
    p: &GcnLayerParams,
) -> (Array3<f64>, GcnCache) {
    let (batch, stations, _in_dim) = x.dim();
    let out_dim = p.out_dim();
    let mut agg = Array3::zeros(x.dim());
    let mut pre = Array3::zeros((batch, stations, out_dim));
    for b in 0..batch {
        let xb = x.index_axis(Axis(0), b);
        let agg_b = a_hat.dot(&xb);
        let pre_b = agg_b.dot(&p.w) + &p.b;
        agg.index_axis_mut(Axis(0), b).assign(&agg_b);
        pre.index_axis_mut(Axis(0), b).assign(&pre_b);
    }
    let out = pre.mapv(|v| p.activation.apply(v));
    (out, GcnCache { agg, pre })
}

/// Batched backward. Accumulates parameter gradients into `grad` and returns
/// the input gradient when `need_dx` is set (it is not needed for the first
/// layer, whose input is data).
pub(crate) fn backward_batch(
    dout: &Array3<f64>,
    cache: &GcnCache,
    a_hat: &Array2<f64>,
    p: &GcnLayerParams,
    grad: &mut GcnLayerParams,
    need_dx: bool,
) -> Option<Array3<f64>> {
    let (batch, _stations, _out_dim) = dout.dim();
    let mut dx = need_dx.then(|| Array3::zeros(cache.agg.dim()));
    for b in 0..batch {
        let dout_b = dout.index_axis(Axis(0), b);
        let pre_b = cache.pre.index_axis(Axis(0), b);
        let dpre = &dout_b * &pre_b.mapv(|v| p.activation.derivative(v));
        let agg_b = cache.agg.index_axis(Axis(0), b);
        grad.w += &agg_b.t().dot(&dpre);
        grad.b += &dpre.sum_axis(Axis(0));
        if let Some(dx) = dx.as_mut() {
            let dagg = dpre.dot(&p.w.t());
            dx.index_axis_mut(Axis(0), b).assign(&a_hat.t().dot(&dagg));
        }
    }
    dx
}
