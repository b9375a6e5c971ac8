//! Mini-batch training loop: RMSprop on MSE, early stopping on validation
//! loss with best-weight restore, and the conformal residual callback that
//! refreshes the interval quantile after every epoch.

use super::model::{self, ModelParams};
use super::rmsprop::{rmsprop_step, OptimizerState, RmspropConfig};
use super::{ModelConfig, NeuralError, Result};
use crate::conformal::QuantileState;
use crate::data::WindowedDataset;
use crate::graph::WeightedAdjacency;
use ndarray::{Array3, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    /// Minimum improvement that resets the patience counter.
    pub min_delta: f64,
    pub optimizer: RmspropConfig,
    /// Miscoverage level for the conformal callback.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            patience: 10,
            min_delta: 1e-5,
            optimizer: RmspropConfig::default(),
            alpha: 0.1,
            seed: 42,
        }
    }
}

/// Per-epoch history of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_mae: Vec<f64>,
    /// Conformal quantile after each epoch.
    pub q_trace: Vec<f64>,
    /// Number of completed epochs.
    pub stopped_epoch: usize,
    /// Zero-based index of the epoch whose weights were restored.
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    /// `epoch,train_loss,val_loss,val_mae,q_adjusted` rows, zero-based epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_mae,q_adjusted\n");
        for e in 0..self.epochs_run() {
            out.push_str(&format!(
                "{e},{},{},{},{}\n",
                self.train_loss[e], self.val_loss[e], self.val_mae[e], self.q_trace[e]
            ));
        }
        out
    }
}

/// Validation-loss based early stopping with best-epoch tracking.
#[derive(Debug, Clone)]
pub(crate) struct EarlyStopper {
    patience: usize,
    min_delta: f64,
    best: f64,
    pub best_epoch: usize,
    wait: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopper { patience, min_delta, best: f64::INFINITY, best_epoch: 0, wait: 0 }
    }

    /// Returns `(improved, should_stop)`.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.wait = 0;
            (true, false)
        } else {
            self.wait += 1;
            (false, self.wait >= self.patience)
        }
    }
}

fn loss_and_mae(pred: &Array3<f64>, target: &ArrayView3<f64>) -> (f64, f64) {
    let numel = pred.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (p, y) in pred.iter().zip(target.iter()) {
        let d = p - y;
        sq += d * d;
        abs += d.abs();
    }
    (sq / numel, abs / numel)
}

fn check_dataset(ds: &WindowedDataset, cfg: &ModelConfig, what: &'static str) -> Result<()> {
    if ds.is_empty() {
        return Err(NeuralError::EmptySplit(what));
    }
    if ds.n_stations() != cfg.stations || ds.look_back != cfg.look_back || ds.horizon != cfg.horizon {
        return Err(NeuralError::Shape(format!(
            "{what} split is ({}, {}, {}), model expects ({}, {}, {})",
            ds.look_back,
            ds.horizon,
            ds.n_stations(),
            cfg.look_back,
            cfg.horizon,
            cfg.stations
        )));
    }
    Ok(())
}

/// Train on the chronological train split, stopping on the validation split.
///
/// Returns the best-epoch weights, the per-epoch history, and the conformal
/// state whose quantile was recomputed from the restored weights' validation
/// residuals (so intervals always match the returned model).
pub fn train(
    train_ds: &WindowedDataset,
    val_ds: &WindowedDataset,
    adj: &WeightedAdjacency,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport, QuantileState)> {
    model_cfg.validate()?;
    check_dataset(train_ds, model_cfg, "train")?;
    check_dataset(val_ds, model_cfg, "validation")?;
    if adj.n() != model_cfg.stations {
        return Err(NeuralError::Shape(format!(
            "adjacency is {}x{} but the model has {} stations",
            adj.n(),
            adj.n(),
            model_cfg.stations
        )));
    }

    let a_hat = adj.row_normalized();
    let mut params = ModelParams::init(model_cfg, cfg.seed)?;
    let mut opt = OptimizerState::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(crate::util::derive_seed(cfg.seed, 1));
    let mut q_state = QuantileState::new(cfg.alpha)?;

    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_mae: Vec::new(),
        q_trace: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
    };
    let mut stopper = EarlyStopper::new(cfg.patience.max(1), cfg.min_delta);
    let mut best_params = params.clone();

    let n = train_ds.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size.max(1);

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut acc = 0.0;
        for chunk in indices.chunks(batch) {
            let bx = train_ds.inputs.select(Axis(0), chunk);
            let by = train_ds.targets.select(Axis(0), chunk);
            let (loss, grads) = model::backward(&params, model_cfg, &a_hat, &bx.view(), &by.view())
                .map_err(|e| diverged(e, epoch))?;
            rmsprop_step(&mut params, &grads, &mut opt, &cfg.optimizer);
            acc += loss * chunk.len() as f64;
        }
        let train_loss = acc / n as f64;

        let val_pred = model::predict(&params, model_cfg, &a_hat, &val_ds.inputs.view(), batch)
            .map_err(|e| diverged(e, epoch))?;
        let (val_loss, val_mae) = loss_and_mae(&val_pred, &val_ds.targets.view());
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(NeuralError::Diverged { epoch });
        }

        let residuals = absolute_residuals(&val_pred, &val_ds.targets.view());
        q_state.update_quantile(&residuals)?;

        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.val_mae.push(val_mae);
        report.q_trace.push(q_state.q_adjusted().expect("just updated"));

        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best_params = params.clone();
        }
        if stop {
            break;
        }
    }

    report.stopped_epoch = report.epochs_run();
    report.best_epoch = stopper.best_epoch;
    params = best_params;

    // Refresh the quantile against the restored weights.
    let val_pred = model::predict(&params, model_cfg, &a_hat, &val_ds.inputs.view(), batch)?;
    let residuals = absolute_residuals(&val_pred, &val_ds.targets.view());
    q_state.update_quantile(&residuals)?;

    Ok((params, report, q_state))
}

fn diverged(e: NeuralError, epoch: usize) -> NeuralError {
    match e {
        NeuralError::NonFinite(_) => NeuralError::Diverged { epoch },
        other => other,
    }
}

pub(crate) fn absolute_residuals(pred: &Array3<f64>, target: &ArrayView3<f64>) -> Vec<f64> {
    pred.iter().zip(target.iter()).map(|(p, y)| (p - y).abs()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare_supervised, synth_corpus};
    use crate::graph::{availability_scores, build_adjacency, KernelMode, TravelTimeMatrix};

    #[test]
    fn early_stopper_runs_full_budget_on_strict_improvement() {
        let mut s = EarlyStopper::new(5, 1e-5);
        let mut stopped = None;
        for epoch in 0..30 {
            let loss = 1.0 / (epoch + 1) as f64; // strictly decreasing
            let (_, stop) = s.observe(epoch, loss);
            if stop {
                stopped = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped, None, "no early stop when every epoch improves");
        assert_eq!(s.best_epoch, 29);
    }

    #[test]
    fn early_stopper_waits_out_patience() {
        let mut s = EarlyStopper::new(3, 1e-5);
        let losses = [1.0, 0.5, 0.49999, 0.5, 0.52, 0.51, 0.6];
        let mut stopped_at = None;
        for (epoch, &l) in losses.iter().enumerate() {
            let (_, stop) = s.observe(epoch, l);
            if stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        // Improvement at epoch 1 only (epoch 2 is within min_delta); patience
        // of 3 expires at epoch 4.
        assert_eq!(stopped_at, Some(4));
        assert_eq!(s.best_epoch, 1);
    }

    fn small_run(seed: u64) -> (ModelParams, TrainReport, QuantileState) {
        let corpus = synth_corpus(3, 3, 7).unwrap();
        let prep = prepare_supervised(&corpus.frame, 12, 1, (0.6, 0.2, 0.2)).unwrap();
        let avail = availability_scores(&corpus.meta).unwrap();
        let t = TravelTimeMatrix::from_seconds(corpus.travel_seconds.clone()).unwrap();
        let adj = build_adjacency(&t, &avail, KernelMode::Gaussian, 0.1, 1e-6).unwrap();
        let model_cfg = ModelConfig {
            stations: 3,
            look_back: 12,
            horizon: 1,
            gcn_dims: vec![4],
            gcn_activation: crate::neural::Activation::Relu,
            lstm_hidden: vec![8],
        };
        let cfg = TrainConfig { epochs: 3, batch_size: 32, seed, ..TrainConfig::default() };
        train(&prep.train, &prep.val, &adj, &model_cfg, &cfg).unwrap()
    }

    #[test]
    fn report_lengths_match_completed_epochs() {
        let (_, report, q) = small_run(1);
        assert_eq!(report.epochs_run(), 3);
        assert_eq!(report.val_loss.len(), 3);
        assert_eq!(report.val_mae.len(), 3);
        assert_eq!(report.q_trace.len(), 3);
        assert_eq!(report.stopped_epoch, 3);
        assert!(q.q_adjusted().unwrap() >= 0.0);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("epoch,train_loss,val_loss,val_mae,q_adjusted"));
    }

    #[test]
    fn training_is_deterministic() {
        let (p1, r1, q1) = small_run(5);
        let (p2, r2, q2) = small_run(5);
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
        assert_eq!(q1.q_adjusted(), q2.q_adjusted());
        let (p3, _, _) = small_run(6);
        assert_ne!(p1, p3);
    }

    #[test]
    fn rejects_mismatched_adjacency() {
        let corpus = synth_corpus(3, 3, 7).unwrap();
        let prep = prepare_supervised(&corpus.frame, 12, 1, (0.6, 0.2, 0.2)).unwrap();
        let adj = crate::neural::testutil::tiny_adjacency(5, 0);
        let model_cfg = ModelConfig::new(3, 12, 1);
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        assert!(matches!(
            train(&prep.train, &prep.val, &adj, &model_cfg, &cfg),
            Err(NeuralError::Shape(_))
        ));
    }
}
