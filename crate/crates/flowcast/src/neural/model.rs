//! The full forecaster: GCN stack applied per time step, LSTM stack over the
//! resulting sequence, attention pooling, dense head, and the exact
//! reverse-mode gradient of the MSE loss through all of it.

use super::attention::{self, AttentionCache, AttentionParams};
use super::dense::DenseParams;
use super::gcn::{self, GcnCache, GcnLayerParams};
use super::lstm::{self, LstmCache, LstmParams};
use super::{init_matrix, zeros_vec, ModelConfig, NeuralError, Result};
use ndarray::{Array1, Array2, Array3, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// All trainable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gcn: Vec<GcnLayerParams>,
    pub lstm: Vec<LstmParams>,
    pub attention: AttentionParams,
    pub head: DenseParams,
    pub seed: u64,
}

impl ModelParams {
    /// Seeded initialization: uniform weights scaled by 1/sqrt(fan_in), zero
    /// biases except the forget gate (+1, keeps early gradients flowing).
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut gcn = Vec::with_capacity(cfg.gcn_dims.len());
        let mut in_dim = 1; // one feature per station per step: the flow value
        for &out_dim in &cfg.gcn_dims {
            gcn.push(GcnLayerParams {
                w: init_matrix(&mut rng, in_dim, out_dim, in_dim),
                // Counts are nonnegative, so a zero bias would leave every
                // negatively-weighted ReLU channel dead from the start.
                b: Array1::from_elem(out_dim, 0.1),
                activation: cfg.gcn_activation,
            });
            in_dim = out_dim;
        }

        let mut lstm = Vec::with_capacity(cfg.lstm_hidden.len());
        let mut lstm_in = cfg.lstm_input_dim();
        for &hidden in &cfg.lstm_hidden {
            let rows = lstm_in + hidden;
            lstm.push(LstmParams {
                w_input: init_matrix(&mut rng, rows, hidden, rows),
                w_forget: init_matrix(&mut rng, rows, hidden, rows),
                w_cell: init_matrix(&mut rng, rows, hidden, rows),
                w_output: init_matrix(&mut rng, rows, hidden, rows),
                b_input: zeros_vec(hidden),
                b_forget: Array1::from_elem(hidden, 1.0),
                b_cell: zeros_vec(hidden),
                b_output: zeros_vec(hidden),
                hidden,
            });
            lstm_in = hidden;
        }

        let last_hidden = *cfg.lstm_hidden.last().expect("validated");
        let attention = AttentionParams {
            w: init_matrix(&mut rng, last_hidden, 1, last_hidden).column(0).to_owned(),
            b: zeros_vec(1),
        };
        let head = DenseParams {
            w: init_matrix(&mut rng, last_hidden, cfg.output_dim(), last_hidden),
            b: zeros_vec(cfg.output_dim()),
        };
        Ok(ModelParams { gcn, lstm, attention, head, seed })
    }

    /// Same shapes, all zeros. Used for gradients and optimizer accumulators.
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            gcn: self.gcn.iter().map(|g| g.zeros_like()).collect(),
            lstm: self.lstm.iter().map(|l| l.zeros_like()).collect(),
            attention: self.attention.zeros_like(),
            head: self.head.zeros_like(),
            seed: self.seed,
        }
    }

    /// Flat views over every parameter tensor, in a fixed order shared with
    /// [`tensors_mut`](Self::tensors_mut) and the checkpoint layout.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for g in &self.gcn {
            v.push(g.w.as_slice().expect("standard layout"));
            v.push(g.b.as_slice().expect("standard layout"));
        }
        for l in &self.lstm {
            for w in [&l.w_input, &l.w_forget, &l.w_cell, &l.w_output] {
                v.push(w.as_slice().expect("standard layout"));
            }
            for b in [&l.b_input, &l.b_forget, &l.b_cell, &l.b_output] {
                v.push(b.as_slice().expect("standard layout"));
            }
        }
        v.push(self.attention.w.as_slice().expect("standard layout"));
        v.push(self.attention.b.as_slice().expect("standard layout"));
        v.push(self.head.w.as_slice().expect("standard layout"));
        v.push(self.head.b.as_slice().expect("standard layout"));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let ModelParams { gcn, lstm, attention, head, .. } = self;
        let mut v = Vec::new();
        for g in gcn {
            v.push(g.w.as_slice_mut().expect("standard layout"));
            v.push(g.b.as_slice_mut().expect("standard layout"));
        }
        for l in lstm {
            let LstmParams { w_input, w_forget, w_cell, w_output, b_input, b_forget, b_cell, b_output, .. } = l;
            for w in [w_input, w_forget, w_cell, w_output] {
                v.push(w.as_slice_mut().expect("standard layout"));
            }
            for b in [b_input, b_forget, b_cell, b_output] {
                v.push(b.as_slice_mut().expect("standard layout"));
            }
        }
        v.push(attention.w.as_slice_mut().expect("standard layout"));
        v.push(attention.b.as_slice_mut().expect("standard layout"));
        v.push(head.w.as_slice_mut().expect("standard layout"));
        v.push(head.b.as_slice_mut().expect("standard layout"));
        v
    }

    /// `(name, shape, data)` triples in the fixed tensor order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut v = Vec::new();
        for (i, g) in self.gcn.iter().enumerate() {
            v.push((format!("gcn{i}.w"), g.w.shape().to_vec(), g.w.as_slice().unwrap()));
            v.push((format!("gcn{i}.b"), g.b.shape().to_vec(), g.b.as_slice().unwrap()));
        }
        for (i, l) in self.lstm.iter().enumerate() {
            let named: [(&str, &Array2<f64>); 4] = [
                ("w_input", &l.w_input),
                ("w_forget", &l.w_forget),
                ("w_cell", &l.w_cell),
                ("w_output", &l.w_output),
            ];
            for (n, w) in named {
                v.push((format!("lstm{i}.{n}"), w.shape().to_vec(), w.as_slice().unwrap()));
            }
            let named_b: [(&str, &Array1<f64>); 4] = [
                ("b_input", &l.b_input),
                ("b_forget", &l.b_forget),
                ("b_cell", &l.b_cell),
                ("b_output", &l.b_output),
            ];
            for (n, b) in named_b {
                v.push((format!("lstm{i}.{n}"), b.shape().to_vec(), b.as_slice().unwrap()));
            }
        }
        v.push(("attention.w".into(), self.attention.w.shape().to_vec(), self.attention.w.as_slice().unwrap()));
        v.push(("attention.b".into(), self.attention.b.shape().to_vec(), self.attention.b.as_slice().unwrap()));
        v.push(("head.w".into(), self.head.w.shape().to_vec(), self.head.w.as_slice().unwrap()));
        v.push(("head.b".into(), self.head.b.shape().to_vec(), self.head.b.as_slice().unwrap()));
        v
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

pub(crate) struct ForwardCache {
    gcn_caches: Vec<Vec<GcnCache>>,
    lstm_caches: Vec<LstmCache>,
    attn_cache: AttentionCache,
    context: Array2<f64>,
    pub pred: Array2<f64>,
}

fn check_input_shape(cfg: &ModelConfig, x: &ArrayView3<f64>) -> Result<()> {
    let (_, look_back, stations) = x.dim();
    if look_back != cfg.look_back || stations != cfg.stations {
        return Err(NeuralError::Shape(format!(
            "input window is {look_back}x{stations}, model expects {}x{}",
            cfg.look_back, cfg.stations
        )));
    }
    Ok(())
}

/// Forward over a batch of windows `[B × look_back × stations]`, returning the
/// flat prediction `[B × (horizon·stations)]` and the cache for backward.
pub(crate) fn forward_batch(
    params: &ModelParams,
    cfg: &ModelConfig,
    a_hat: &Array2<f64>,
    x: &ArrayView3<f64>,
) -> Result<ForwardCache> {
    check_input_shape(cfg, x)?;
    let (batch, look_back, stations) = x.dim();

    let mut gcn_caches: Vec<Vec<GcnCache>> = vec![Vec::with_capacity(look_back); params.gcn.len()];
    let mut seq: Vec<Array2<f64>> = Vec::with_capacity(look_back);
    for t in 0..look_back {
        let mut h: Array3<f64> = x
            .index_axis(Axis(1), t)
            .to_owned()
            .insert_axis(Axis(2));
        for (l, p) in params.gcn.iter().enumerate() {
            let (out, cache) = gcn::forward_batch(&h, a_hat, p);
            gcn_caches[l].push(cache);
            h = out;
        }
        let g = h.dim().2;
        let flat = h
            .into_shape_with_order((batch, stations * g))
            .expect("contiguous row-major");
        seq.push(flat);
    }

    let mut lstm_caches: Vec<LstmCache> = Vec::with_capacity(params.lstm.len());
    let mut inputs = seq;
    for p in &params.lstm {
        let cache = lstm::forward_seq(&inputs, p);
        inputs = cache.hidden_states.clone();
        lstm_caches.push(cache);
    }

    let last_hidden = &lstm_caches.last().expect("at least one LSTM layer").hidden_states;
    let (context, attn_cache) = attention::forward(last_hidden, &params.attention);
    let pred = params.head.forward(&context);
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(NeuralError::NonFinite("forward prediction".into()));
    }
    Ok(ForwardCache { gcn_caches, lstm_caches, attn_cache, context, pred })
}

/// Mean squared error over all elements of the flat prediction.
pub(crate) fn mse_loss(pred: &Array2<f64>, target_flat: &Array2<f64>) -> f64 {
    let numel = pred.len() as f64;
    let mut acc = 0.0;
    for (p, y) in pred.iter().zip(target_flat.iter()) {
        let d = p - y;
        acc += d * d;
    }
    acc / numel
}

/// Exact gradients of the MSE loss for every parameter. Returns
/// `(loss, gradients)`; gradient tensors mirror [`ModelParams`].
pub fn backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    a_hat: &Array2<f64>,
    x: &ArrayView3<f64>,
    targets: &ArrayView3<f64>,
) -> Result<(f64, ModelParams)> {
    let cache = forward_batch(params, cfg, a_hat, x)?;
    let (batch, horizon, stations) = targets.dim();
    if horizon != cfg.horizon || stations != cfg.stations || batch != x.dim().0 {
        return Err(NeuralError::Shape(format!(
            "targets are {batch}x{horizon}x{stations}, expected {}x{}x{}",
            x.dim().0,
            cfg.horizon,
            cfg.stations
        )));
    }
    let target_flat = targets
        .to_owned()
        .into_shape_with_order((batch, horizon * stations))
        .expect("contiguous row-major");
    let loss = mse_loss(&cache.pred, &target_flat);
    if !loss.is_finite() {
        return Err(NeuralError::NonFinite("training loss".into()));
    }

    let mut grads = params.zeros_like();
    let numel = cache.pred.len() as f64;
    let dpred = (&cache.pred - &target_flat).mapv(|v| 2.0 * v / numel);

    // Head.
    let (dw_head, db_head, dcontext) = params.head.backward(&cache.context, &dpred);
    grads.head.w = dw_head;
    grads.head.b = db_head;

    // Attention over the last LSTM layer.
    let last_hidden = &cache.lstm_caches.last().unwrap().hidden_states;
    let mut dh_ext = attention::backward(
        &dcontext,
        last_hidden,
        &cache.attn_cache,
        &params.attention,
        &mut grads.attention,
    );

    // LSTM stack, top down. The input gradient of layer j is the external
    // hidden gradient of layer j-1.
    for j in (0..params.lstm.len()).rev() {
        let dinputs = lstm::backward_seq(
            &cache.lstm_caches[j],
            &params.lstm[j],
            &dh_ext,
            &mut grads.lstm[j],
        );
        dh_ext = dinputs;
    }

    // GCN stack per time step, top down. dh_ext now holds the gradient of the
    // flattened per-step embedding.
    let look_back = cfg.look_back;
    let g_last = *cfg.gcn_dims.last().unwrap();
    for t in 0..look_back {
        let mut dout = dh_ext[t]
            .clone()
            .into_shape_with_order((x.dim().0, cfg.stations, g_last))
            .expect("contiguous row-major");
        for l in (0..params.gcn.len()).rev() {
            let dx = gcn::backward_batch(
                &dout,
                &cache.gcn_caches[l][t],
                a_hat,
                &params.gcn[l],
                &mut grads.gcn[l],
                l > 0,
            );
            if let Some(dx) = dx {
                dout = dx;
            }
        }
    }

    Ok((loss, grads))
}

/// Deterministic batched point forecasts, `[samples × horizon × stations]`,
/// in the same normalized units as the inputs.
pub fn predict(
    params: &ModelParams,
    cfg: &ModelConfig,
    a_hat: &Array2<f64>,
    inputs: &ArrayView3<f64>,
    batch_size: usize,
) -> Result<Array3<f64>> {
    check_input_shape(cfg, inputs)?;
    let samples = inputs.dim().0;
    let mut out = Array3::zeros((samples, cfg.horizon, cfg.stations));
    let step = batch_size.max(1);
    let mut start = 0;
    while start < samples {
        let end = (start + step).min(samples);
        let slice = inputs.slice(ndarray::s![start..end, .., ..]);
        let cache = forward_batch(params, cfg, a_hat, &slice)?;
        let reshaped = cache
            .pred
            .into_shape_with_order((end - start, cfg.horizon, cfg.stations))
            .expect("contiguous row-major");
        out.slice_mut(ndarray::s![start..end, .., ..]).assign(&reshaped);
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::testutil::tiny_adjacency;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn tiny_setup() -> (ModelConfig, ModelParams, Array2<f64>, Array3<f64>, Array3<f64>) {
        let cfg = ModelConfig {
            stations: 2,
            look_back: 4,
            horizon: 1,
            gcn_dims: vec![2],
            gcn_activation: super::super::Activation::Relu,
            lstm_hidden: vec![3],
        };
        let params = ModelParams::init(&cfg, 0).unwrap();
        let adj = tiny_adjacency(2, 0);
        let a_hat = adj.row_normalized();
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let x = Array3::from_shape_fn((3, 4, 2), |_| rng.random_range(0.0..1.0));
        let y = Array3::from_shape_fn((3, 1, 2), |_| rng.random_range(0.0..1.0));
        (cfg, params, a_hat, x, y)
    }

    #[test]
    fn zero_error_batch_gives_zero_gradients() {
        let (cfg, params, a_hat, x, _) = tiny_setup();
        let pred = predict(&params, &cfg, &a_hat, &x.view(), 8).unwrap();
        let (loss, grads) = backward(&params, &cfg, &a_hat, &x.view(), &pred.view()).unwrap();
        assert_eq!(loss, 0.0);
        for t in grads.tensors() {
            for &g in t {
                assert_eq!(g, 0.0);
            }
        }
    }

    #[test]
    fn doubling_residuals_doubles_head_gradient() {
        let (cfg, params, a_hat, x, y) = tiny_setup();
        let pred = predict(&params, &cfg, &a_hat, &x.view(), 8).unwrap();
        let y1 = y.clone();
        // y2 = pred - 2 (pred - y1): doubles every residual exactly.
        let y2 = &pred - &((&pred - &y1) * 2.0);
        let (_, g1) = backward(&params, &cfg, &a_hat, &x.view(), &y1.view()).unwrap();
        let (_, g2) = backward(&params, &cfg, &a_hat, &x.view(), &y2.view()).unwrap();
        for (a, b) in g1.head.w.iter().zip(g2.head.w.iter()) {
            assert_relative_eq!(2.0 * a, *b, max_relative = 1e-12);
        }
        for (a, b) in g1.head.b.iter().zip(g2.head.b.iter()) {
            assert_relative_eq!(2.0 * a, *b, max_relative = 1e-12);
        }
    }

    #[test]
    fn predictions_are_deterministic_and_batch_invariant() {
        let (cfg, params, a_hat, x, _) = tiny_setup();
        let a = predict(&params, &cfg, &a_hat, &x.view(), 8).unwrap();
        let b = predict(&params, &cfg, &a_hat, &x.view(), 8).unwrap();
        assert_eq!(a, b);
        // Batched in chunks of 1 must agree exactly with one big batch.
        let c = predict(&params, &cfg, &a_hat, &x.view(), 1).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.dim(), (3, 1, 2));
    }

    /// Central finite differences over EVERY parameter of a tiny model.
    #[test]
    fn gradients_match_finite_differences() {
        let (cfg, params, a_hat, x, y) = tiny_setup();
        let (_, grads) = backward(&params, &cfg, &a_hat, &x.view(), &y.view()).unwrap();

        let loss_of = |p: &ModelParams| {
            let cache = forward_batch(p, &cfg, &a_hat, &x.view()).unwrap();
            let flat = y.clone().into_shape_with_order((3, 2)).unwrap();
            mse_loss(&cache.pred, &flat)
        };

        let h = 1e-5;
        let mut p = params.clone();
        let grad_tensors: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        let mut max_rel: f64 = 0.0;
        for (ti, gt) in grad_tensors.iter().enumerate() {
            for k in 0..gt.len() {
                let orig = p.tensors()[ti][k];
                p.tensors_mut()[ti][k] = orig + h;
                let up = loss_of(&p);
                p.tensors_mut()[ti][k] = orig - h;
                let down = loss_of(&p);
                p.tensors_mut()[ti][k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = gt[k];
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn stacked_layers_also_pass_finite_differences() {
        let cfg = ModelConfig {
            stations: 2,
            look_back: 3,
            horizon: 2,
            gcn_dims: vec![2, 3],
            gcn_activation: super::super::Activation::Relu,
            lstm_hidden: vec![3, 2],
        };
        let params = ModelParams::init(&cfg, 5).unwrap();
        let a_hat = tiny_adjacency(2, 5).row_normalized();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let x = Array3::from_shape_fn((2, 3, 2), |_| rng.random_range(0.0..1.0));
        let y = Array3::from_shape_fn((2, 2, 2), |_| rng.random_range(0.0..1.0));
        let (_, grads) = backward(&params, &cfg, &a_hat, &x.view(), &y.view()).unwrap();

        let loss_of = |p: &ModelParams| {
            let cache = forward_batch(p, &cfg, &a_hat, &x.view()).unwrap();
            let flat = y.clone().into_shape_with_order((2, 4)).unwrap();
            mse_loss(&cache.pred, &flat)
        };
        let h = 1e-5;
        let mut p = params.clone();
        let grad_tensors: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        for (ti, gt) in grad_tensors.iter().enumerate() {
            for k in 0..gt.len() {
                let orig = p.tensors()[ti][k];
                p.tensors_mut()[ti][k] = orig + h;
                let up = loss_of(&p);
                p.tensors_mut()[ti][k] = orig - h;
                let down = loss_of(&p);
                p.tensors_mut()[ti][k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (gt[k] - numeric).abs() / (gt[k].abs() + numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "tensor {ti} index {k}: rel err {rel}");
            }
        }
    }

    #[test]
    fn init_is_reproducible() {
        let cfg = ModelConfig::new(3, 8, 1);
        let a = ModelParams::init(&cfg, 7).unwrap();
        let b = ModelParams::init(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::init(&cfg, 8).unwrap();
        assert_ne!(a, c);
    }
}
