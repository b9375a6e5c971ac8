//! The baseline family: historical average, autoregression, a feed-forward
//! net over the flattened window, and a plain LSTM without graph structure
//! or attention.
//!
//! The neural baselines are trained with the same optimizer, loss, early
//! stopping and seeding protocol as the main model so that comparisons
//! measure architecture, not training procedure. The autoregression is a
//! least-squares AR(p) fit per station ("ARIMA-lite": no differencing or
//! moving-average terms).

use super::{EvalError, Forecaster, Result};
use crate::data::WindowedDataset;
use crate::neural::dense::DenseParams;
use crate::neural::lstm::{self, LstmParams};
use crate::neural::rmsprop::step_slices;
use crate::neural::train::{EarlyStopper, TrainConfig};
use crate::neural::{init_matrix, zeros_vec, Activation};
use ndarray::{Array1, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Historical average per (station, day-of-week, time-of-day slot).
    Ha,
    /// Per-station least-squares autoregression.
    Ar,
    /// One-hidden-layer dense net over the flattened window.
    Fnn,
    /// Plain LSTM + dense head; no graph convolution, no attention.
    Lstm,
}

impl BaselineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::Ha => "ha",
            BaselineKind::Ar => "ar",
            BaselineKind::Fnn => "fnn",
            BaselineKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ha" => Some(BaselineKind::Ha),
            "ar" | "arima" => Some(BaselineKind::Ar),
            "fnn" => Some(BaselineKind::Fnn),
            "lstm" => Some(BaselineKind::Lstm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub ar_order: usize,
    pub fnn_hidden: usize,
    pub lstm_hidden: usize,
    /// Training protocol for the neural baselines.
    pub train: TrainConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            ar_order: 8,
            fnn_hidden: 64,
            lstm_hidden: 32,
            train: TrainConfig::default(),
        }
    }
}

/// A fitted baseline. Construction goes through [`fit_baseline`], so a value
/// of this type is always ready to predict.
#[derive(Debug, Clone)]
pub enum BaselineModel {
    Ha(HaModel),
    Ar(ArModel),
    Fnn(FnnModel),
    Lstm(LstmBaseline),
}

impl BaselineModel {
    pub fn predict(&self, ds: &WindowedDataset) -> Result<Array3<f64>> {
        match self {
            BaselineModel::Ha(m) => m.predict(ds),
            BaselineModel::Ar(m) => m.predict(ds),
            BaselineModel::Fnn(m) => m.predict(ds),
            BaselineModel::Lstm(m) => m.predict(ds),
        }
    }
}

impl Forecaster for BaselineModel {
    fn predict(&self, ds: &WindowedDataset) -> Result<Array3<f64>> {
        BaselineModel::predict(self, ds)
    }
}

/// Fit a baseline on the training split. The validation split drives early
/// stopping for the neural variants and is ignored by HA/AR.
pub fn fit_baseline(
    kind: BaselineKind,
    train: &WindowedDataset,
    val: &WindowedDataset,
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<BaselineModel> {
    if train.is_empty() {
        return Err(EvalError::Empty("train split"));
    }
    match kind {
        BaselineKind::Ha => Ok(BaselineModel::Ha(HaModel::fit(train))),
        BaselineKind::Ar => Ok(BaselineModel::Ar(ArModel::fit(train, cfg.ar_order)?)),
        BaselineKind::Fnn => {
            if val.is_empty() {
                return Err(EvalError::Empty("validation split"));
            }
            Ok(BaselineModel::Fnn(FnnModel::fit(train, val, cfg, seed)?))
        }
        BaselineKind::Lstm => {
            if val.is_empty() {
                return Err(EvalError::Empty("validation split"));
            }
            Ok(BaselineModel::Lstm(LstmBaseline::fit(train, val, cfg, seed)?))
        }
    }
}

// ---------------------------------------------------------------------------
// Historical average
// ---------------------------------------------------------------------------

const WEEK_SLOTS: usize = 7 * crate::data::SLOTS_PER_DAY;

/// Mean per (station, day-of-week × 15-minute slot) with a per-station global
/// fallback for slots never seen in training.
#[derive(Debug, Clone)]
pub struct HaModel {
    /// `[station][dow * 96 + slot]`
    means: Vec<Vec<Option<f64>>>,
    station_fallback: Vec<f64>,
}

fn week_slot(ts: chrono::NaiveDateTime) -> usize {
    use chrono::{Datelike, Timelike};
    let dow = ts.date().weekday().num_days_from_monday() as usize;
    let slot = (ts.time().hour() as usize * 60 + ts.time().minute() as usize) / 15;
    dow * crate::data::SLOTS_PER_DAY + slot
}

impl HaModel {
    pub fn fit(train: &WindowedDataset) -> HaModel {
        let stations = train.n_stations();
        let mut sums = vec![vec![(0.0, 0usize); WEEK_SLOTS]; stations];
        let mut totals = vec![(0.0, 0usize); stations];
        for i in 0..train.len() {
            for k in 0..train.horizon {
                let ws = week_slot(train.target_timestamp(i, k));
                for s in 0..stations {
                    let v = train.targets[[i, k, s]];
                    sums[s][ws].0 += v;
                    sums[s][ws].1 += 1;
                    totals[s].0 += v;
                    totals[s].1 += 1;
                }
            }
        }
        let means = sums
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(sum, n)| if n > 0 { Some(sum / n as f64) } else { None })
                    .collect()
            })
            .collect();
        let station_fallback =
            totals.into_iter().map(|(sum, n)| if n > 0 { sum / n as f64 } else { 0.0 }).collect();
        HaModel { means, station_fallback }
    }

    pub fn predict(&self, ds: &WindowedDataset) -> Result<Array3<f64>> {
        let stations = ds.n_stations();
        if stations != self.means.len() {
            return Err(EvalError::Shape(format!(
                "model fitted on {} stations, dataset has {stations}",
                self.means.len()
            )));
        }
        let mut out = Array3::zeros((ds.len(), ds.horizon, stations));
        for i in 0..ds.len() {
            for k in 0..ds.horizon {
                let ws = week_slot(ds.target_timestamp(i, k));
                for s in 0..stations {
                    out[[i, k, s]] = self.means[s][ws].unwrap_or(self.station_fallback[s]);
                }
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Autoregression
// ---------------------------------------------------------------------------

/// AR(p) with intercept, least squares per station. Stations whose normal
/// equations are singular fall back to the historical average and are listed
/// in [`fallback_stations`](Self::fallback_stations).
#[derive(Debug, Clone)]
pub struct ArModel {
    order: usize,
    /// `[station] -> [intercept, c_1, ..., c_p]`, lag 1 first.
    coeffs: Vec<Option<Vec<f64>>>,
    ha: HaModel,
    fallback: Vec<usize>,
}

impl ArModel {
    pub fn fit(train: &WindowedDataset, order: usize) -> Result<ArModel> {
        if order == 0 {
            return Err(EvalError::Fit("autoregression order must be >= 1".into()));
        }
        if train.look_back < order {
            return Err(EvalError::Fit(format!(
                "look_back {} is shorter than the autoregression order {order}",
                train.look_back
            )));
        }
        let stations = train.n_stations();
        let lb = train.look_back;
        let mut coeffs = Vec::with_capacity(stations);
        let mut fallback = Vec::new();
        for s in 0..stations {
            // One regression row per (sample, horizon-step-0): the first
            // target regressed on the last `order` input values.
            let mut xtx = vec![vec![0.0; order + 1]; order + 1];
            let mut xty = vec![0.0; order + 1];
            for i in 0..train.len() {
                let mut row = Vec::with_capacity(order + 1);
                row.push(1.0);
                for j in 1..=order {
                    row.push(train.inputs[[i, lb - j, s]]);
                }
                let y = train.targets[[i, 0, s]];
                for a in 0..=order {
                    for b in 0..=order {
                        xtx[a][b] += row[a] * row[b];
                    }
                    xty[a] += row[a] * y;
                }
            }
            match solve_symmetric(&mut xtx, &mut xty) {
                Some(beta) => coeffs.push(Some(beta)),
                None => {
                    fallback.push(s);
                    coeffs.push(None);
                }
            }
        }
        Ok(ArModel { order, coeffs, ha: HaModel::fit(train), fallback })
    }

    /// Stations that fell back to the historical average.
    pub fn fallback_stations(&self) -> &[usize] {
        &self.fallback
    }

    pub fn coefficients(&self, station: usize) -> Option<&[f64]> {
        self.coeffs.get(station).and_then(|c| c.as_deref())
    }

    pub fn predict(&self, ds: &WindowedDataset) -> Result<Array3<f64>> {
        let stations = ds.n_stations();
        if stations != self.coeffs.len() {
            return Err(EvalError::Shape(format!(
                "model fitted on {} stations, dataset has {stations}",
                self.coeffs.len()
            )));
        }
        if ds.look_back < self.order {
            return Err(EvalError::Shape(format!(
                "look_back {} shorter than order {}",
                ds.look_back, self.order
            )));
        }
        let ha_pred = self.ha.predict(ds)?;
        let lb = ds.look_back;
        let mut out = Array3::zeros((ds.len(), ds.horizon, stations));
        for s in 0..stations {
            let Some(beta) = &self.coeffs[s] else {
                out.slice_mut(ndarray::s![.., .., s]).assign(&ha_pred.slice(ndarray::s![.., .., s]));
                continue;
            };
            for i in 0..ds.len() {
                // Recursive multi-step: feed predictions back as history.
                let mut history: Vec<f64> = (0..lb).map(|t| ds.inputs[[i, t, s]]).collect();
                for k in 0..ds.horizon {
                    let mut v = beta[0];
                    for j in 1..=self.order {
                        v += beta[j] * history[history.len() - j];
                    }
                    out[[i, k, s]] = v;
                    history.push(v);
                }
            }
        }
        Ok(out)
    }
}

/// Gaussian elimination with partial pivoting on the normal equations.
/// Returns None when the system is numerically singular.
fn solve_symmetric(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pivot < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Feed-forward baseline
// ---------------------------------------------------------------------------

/// One hidden ReLU layer over the flattened look-back window.
#[derive(Debug, Clone)]
pub struct FnnModel {
    hidden: DenseParams,
    out: DenseParams,
    look_back: usize,
    stations: usize,
    horizon: usize,
}

impl FnnModel {
    fn flatten_inputs(ds: &WindowedDataset, idx: &[usize]) -> Array2<f64> {
        let (lb, n) = (ds.look_back, ds.n_stations());
        let sel = ds.inputs.select(Axis(0), idx);
        sel.into_shape_with_order((idx.len(), lb * n)).expect("contiguous")
    }

    fn flatten_targets(ds: &WindowedDataset, idx: &[usize]) -> Array2<f64> {
        let (h, n) = (ds.horizon, ds.n_stations());
        let sel = ds.targets.select(Axis(0), idx);
        sel.into_shape_with_order((idx.len(), h * n)).expect("contiguous")
    }

    fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let pre = self.hidden.forward(x);
        let act = pre.mapv(|v| Activation::Relu.apply(v));
        let pred = self.out.forward(&act);
        (pred, pre)
    }

    fn fit(
        train: &WindowedDataset,
        val: &WindowedDataset,
        cfg: &BaselineConfig,
        seed: u64,
    ) -> Result<FnnModel> {
        let (lb, n, h) = (train.look_back, train.n_stations(), train.horizon);
        let in_dim = lb * n;
        let out_dim = h * n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = FnnModel {
            hidden: DenseParams {
                w: init_matrix(&mut rng, in_dim, cfg.fnn_hidden, in_dim),
                b: zeros_vec(cfg.fnn_hidden),
            },
            out: DenseParams {
                w: init_matrix(&mut rng, cfg.fnn_hidden, out_dim, cfg.fnn_hidden),
                b: zeros_vec(out_dim),
            },
            look_back: lb,
            stations: n,
            horizon: h,
        };
        let mut acc_hidden = model.hidden.zeros_like();
        let mut acc_out = model.out.zeros_like();

        let tc = &cfg.train;
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(crate::util::derive_seed(seed, 1));
        let mut stopper = EarlyStopper::new(tc.patience.max(1), tc.min_delta);
        let mut best = model.clone();
        let all_val: Vec<usize> = (0..val.len()).collect();
        let val_x = Self::flatten_inputs(val, &all_val);
        let val_y = Self::flatten_targets(val, &all_val);

        let mut indices: Vec<usize> = (0..train.len()).collect();
        for epoch in 0..tc.epochs {
            indices.shuffle(&mut shuffle_rng);
            for chunk in indices.chunks(tc.batch_size.max(1)) {
                let x = Self::flatten_inputs(train, chunk);
                let y = Self::flatten_targets(train, chunk);
                let (pred, pre) = model.forward(&x);
                let numel = pred.len() as f64;
                let dpred = (&pred - &y).mapv(|v| 2.0 * v / numel);
                let (dw2, db2, dact) = model.out.backward(&pre.mapv(|v| Activation::Relu.apply(v)), &dpred);
                let dpre = &dact * &pre.mapv(|v| Activation::Relu.derivative(v));
                let (dw1, db1, _) = model.hidden.backward(&x, &dpre);
                step_slices(
                    model.out.w.as_slice_mut().unwrap(),
                    dw2.as_slice().unwrap(),
                    acc_out.w.as_slice_mut().unwrap(),
                    &tc.optimizer,
                );
                step_slices(
                    model.out.b.as_slice_mut().unwrap(),
                    db2.as_slice().unwrap(),
                    acc_out.b.as_slice_mut().unwrap(),
                    &tc.optimizer,
                );
                step_slices(
                    model.hidden.w.as_slice_mut().unwrap(),
                    dw1.as_slice().unwrap(),
                    acc_hidden.w.as_slice_mut().unwrap(),
                    &tc.optimizer,
                );
                step_slices(
                    model.hidden.b.as_slice_mut().unwrap(),
                    db1.as_slice().unwrap(),
                    acc_hidden.b.as_slice_mut().unwrap(),
                    &tc.optimizer,
                );
            }
            let (val_pred, _) = model.forward(&val_x);
            let val_loss = crate::neural::model::mse_loss(&val_pred, &val_y);
            if !val_loss.is_finite() {
                return Err(EvalError::Fit(format!("feed-forward baseline diverged at epoch {epoch}")));
            }
            let (improved, stop) = stopper.observe(epoch, val_loss);
            if improved {
                best = model.clone();
            }
            if stop {
                break;
            }
        }
        Ok(best)
    }

    pub fn predict(&self, ds: &WindowedDataset) -> Result<Array3<f64>> {
        if ds.look_back != self.look_back || ds.n_stations() != self.stations || ds.horizon != self.horizon
        {
            return Err(EvalError::Shape("dataset shape differs from the fitted baseline".into()));
        }
        let all: Vec<usize> = (0..ds.len()).collect();
        let x = Self::flatten_inputs(ds, &all);
        let (pred, _) = self.forward(&x);
        Ok(pred
            .into_shape_with_order((ds.len(), self.horizon, self.stations))
            .expect("contiguous"))
    }
}

// ---------------------------------------------------------------------------
// Plain LSTM baseline
// ---------------------------------------------------------------------------

/// LSTM over the raw station vector per step, last hidden state into a dense
/// head. No graph structure, no attention.
#[derive(Debug, Clone)]
pub struct LstmBaseline {
    lstm: LstmParams,
    head: DenseParams,
    look_back: usize,
    stations: usize,
    horizon: usize,
}

impl LstmBaseline {
    fn sequence(ds: &WindowedDataset, idx: &[usize]) -> Vec<Array2<f64>> {
        let sel = ds.inputs.select(Axis(0), idx);
        (0..ds.look_back).map(|t| sel.index_axis(Axis(1), t).to_owned()).collect()
    }

    fn forward(&self, seq: &[Array2<f64>]) -> (Array2<f64>, lstm::LstmCache) {
        let cache = lstm::forward_seq(seq, &self.lstm);
        let h_last = cache.hidden_states.last().expect("nonempty sequence");
        let pred = self.head.forward(h_last);
        (pred, cache)
    }

    fn fit(
        train: &WindowedDataset,
        val: &WindowedDataset,
        cfg: &BaselineConfig,
        seed: u64,
    ) -> Result<LstmBaseline> {
        let (lb, n, h) = (train.look_back, train.n_stations(), train.horizon);
        let hidden = cfg.lstm_hidden;
        let rows = n + hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = LstmBaseline {
            lstm: LstmParams {
                w_input: init_matrix(&mut rng, rows, hidden, rows),
                w_forget: init_matrix(&mut rng, rows, hidden, rows),
                w_cell: init_matrix(&mut rng, rows, hidden, rows),
                w_output: init_matrix(&mut rng, rows, hidden, rows),
                b_input: zeros_vec(hidden),
                b_forget: Array1::from_elem(hidden, 1.0),
                b_cell: zeros_vec(hidden),
                b_output: zeros_vec(hidden),
                hidden,
            },
            head: DenseParams {
                w: init_matrix(&mut rng, hidden, h * n, hidden),
                b: zeros_vec(h * n),
            },
            look_back: lb,
            stations: n,
            horizon: h,
        };
        let mut acc_lstm = model.lstm.zeros_like();
        let mut acc_head = model.head.zeros_like();

        let tc = &cfg.train;
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(crate::util::derive_seed(seed, 1));
        let mut stopper = EarlyStopper::new(tc.patience.max(1), tc.min_delta);
        let mut best = model.clone();
        let all_val: Vec<usize> = (0..val.len()).collect();
        let val_seq = Self::sequence(val, &all_val);
        let val_y = FnnModel::flatten_targets(val, &all_val);

        let mut indices: Vec<usize> = (0..train.len()).collect();
        for epoch in 0..tc.epochs {
            indices.shuffle(&mut shuffle_rng);
            for chunk in indices.chunks(tc.batch_size.max(1)) {
                let seq = Self::sequence(train, chunk);
                let y = FnnModel::flatten_targets(train, chunk);
                let (pred, cache) = model.forward(&seq);
                let numel = pred.len() as f64;
                let dpred = (&pred - &y).mapv(|v| 2.0 * v / numel);
                let h_last = cache.hidden_states.last().unwrap();
                let (dw_head, db_head, dh_last) = model.head.backward(h_last, &dpred);
                let batch = seq[0].nrows();
                let mut dh_ext = vec![Array2::zeros((batch, hidden)); lb];
                dh_ext[lb - 1] = dh_last;
                let mut grads = model.lstm.zeros_like();
                lstm::backward_seq(&cache, &model.lstm, &dh_ext, &mut grads);

                let mut p_slices = lstm_slices_mut(&mut model.lstm);
                let g_slices = lstm_slices(&grads);
                let mut a_slices = lstm_slices_mut(&mut acc_lstm);
                for ((p, g), a) in p_slices.iter_mut().zip(g_slices.iter()).zip(a_slices.iter_mut()) {
                    step_slices(p, g, a, &tc.optimizer);
                }
                step_slices(
                    model.head.w.as_slice_mut().unwrap(),
                    dw_head.as_slice().unwrap(),
                    acc_head.w.as_slice_mut().unwrap(),
                    &tc.optimizer,
                );
                step_slices(
                    model.head.b.as_slice_mut().unwrap(),
                    db_head.as_slice().unwrap(),
                    acc_head.b.as_slice_mut().unwrap(),
                    &tc.optimizer,
                );
            }
            let (val_pred, _) = model.forward(&val_seq);
            let val_loss = crate::neural::model::mse_loss(&val_pred, &val_y);
            if !val_loss.is_finite() {
                return Err(EvalError::Fit(format!("LSTM baseline diverged at epoch {epoch}")));
            }
            let (improved, stop) = stopper.observe(epoch, val_loss);
            if improved {
                best = model.clone();
            }
            if stop {
                break;
            }
        }
        Ok(best)
    }

    pub fn predict(&self, ds: &WindowedDataset) -> Result<Array3<f64>> {
        if ds.look_back != self.look_back || ds.n_stations() != self.stations || ds.horizon != self.horizon
        {
            return Err(EvalError::Shape("dataset shape differs from the fitted baseline".into()));
        }
        let all: Vec<usize> = (0..ds.len()).collect();
        let seq = Self::sequence(ds, &all);
        let (pred, _) = self.forward(&seq);
        Ok(pred
            .into_shape_with_order((ds.len(), self.horizon, self.stations))
            .expect("contiguous"))
    }
}

fn lstm_slices(p: &LstmParams) -> Vec<&[f64]> {
    vec![
        p.w_input.as_slice().unwrap(),
        p.w_forget.as_slice().unwrap(),
        p.w_cell.as_slice().unwrap(),
        p.w_output.as_slice().unwrap(),
        p.b_input.as_slice().unwrap(),
        p.b_forget.as_slice().unwrap(),
        p.b_cell.as_slice().unwrap(),
        p.b_output.as_slice().unwrap(),
    ]
}

fn lstm_slices_mut(p: &mut LstmParams) -> Vec<&mut [f64]> {
    let LstmParams { w_input, w_forget, w_cell, w_output, b_input, b_forget, b_cell, b_output, .. } = p;
    vec![
        w_input.as_slice_mut().unwrap(),
        w_forget.as_slice_mut().unwrap(),
        w_cell.as_slice_mut().unwrap(),
        w_output.as_slice_mut().unwrap(),
        b_input.as_slice_mut().unwrap(),
        b_forget.as_slice_mut().unwrap(),
        b_cell.as_slice_mut().unwrap(),
        b_output.as_slice_mut().unwrap(),
    ]
}
