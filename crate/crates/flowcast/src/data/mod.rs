//! Station count ingestion, normalization, windowing and splits.
//!
//! A [`FlowFrame`] is a dense `[timesteps × stations]` matrix of vehicle
//! counts on a strict 15-minute grid. Missing intervals are represented by
//! NaN sentinels in memory (empty cells in CSV) and are never imputed:
//! supervised windows that touch a sentinel are dropped.

mod io;
mod synth;

pub use io::{
    counts_csv, load_counts, load_stations, stations_csv, travel_times_csv, write_counts_csv,
    write_stations_csv, write_travel_times_csv,
};
pub use synth::{synth_corpus, synth_corpus_with, SynthCorpus, SynthOptions};

use chrono::{NaiveDateTime, TimeDelta};
use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Counting interval of the grid, in minutes.
pub const INTERVAL_MINUTES: i64 = 15;
/// Intervals per day.
pub const SLOTS_PER_DAY: usize = 96;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },
    #[error("timestamps out of order for station {station}: {current} after {previous}")]
    Order { station: String, previous: NaiveDateTime, current: NaiveDateTime },
    #[error("duplicate record for station {station} at {timestamp}")]
    Duplicate { station: String, timestamp: NaiveDateTime },
    #[error("unknown station {0:?} in counts file (not present in station metadata)")]
    UnknownStation(String),
    #[error("duplicate station id {0:?} in station metadata")]
    DuplicateStation(String),
    #[error("{0}")]
    Size(String),
    #[error("split fractions {0:?} must be positive and sum to 1")]
    BadFractions([f64; 3]),
    #[error("{context}: split produces an empty subset ({sizes:?} from {total} samples)")]
    EmptySplit { context: String, sizes: [usize; 3], total: usize },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Station class: continuous count stations report all year, non-continuous
/// ones only on scattered days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationKind {
    Ccs,
    Nccs,
}

impl StationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StationKind::Ccs => "CCS",
            StationKind::Nccs => "NCCS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CCS" => Some(StationKind::Ccs),
            "NCCS" => Some(StationKind::Nccs),
            _ => None,
        }
    }
}

/// Metadata for one count station.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub kind: StationKind,
    pub lat: f64,
    pub lon: f64,
    /// Number of 15-minute count records present in the source year.
    pub record_count: u64,
}

/// Dense count matrix on a strict 15-minute grid.
///
/// `values[[t, s]]` is the vehicle count at station `s` (column order matches
/// the metadata list) in the interval starting at `timestamp(t)`. NaN marks a
/// missing interval.
#[derive(Debug, Clone)]
pub struct FlowFrame {
    values: Array2<f64>,
    origin: NaiveDateTime,
    station_ids: Vec<String>,
}

impl FlowFrame {
    /// Build a frame, checking the value matrix against the station list and
    /// the non-negativity rule for observed cells.
    pub fn new(values: Array2<f64>, origin: NaiveDateTime, station_ids: Vec<String>) -> Result<Self> {
        if values.ncols() != station_ids.len() {
            return Err(DataError::Size(format!(
                "frame has {} columns but {} station ids",
                values.ncols(),
                station_ids.len()
            )));
        }
        for &v in values.iter() {
            if !v.is_nan() && !(v.is_finite() && v >= 0.0) {
                return Err(DataError::Size(format!("count values must be finite and >= 0, got {v}")));
            }
        }
        Ok(FlowFrame { values, origin, station_ids })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn timesteps(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_stations(&self) -> usize {
        self.values.ncols()
    }

    pub fn station_ids(&self) -> &[String] {
        &self.station_ids
    }

    /// Timestamp of row 0.
    pub fn origin(&self) -> NaiveDateTime {
        self.origin
    }

    /// Timestamp of row `t`.
    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.origin + TimeDelta::minutes(INTERVAL_MINUTES * t as i64)
    }

    /// 15-minute slot-of-day index of row `t` (0..96).
    pub fn slot_of_day(&self, t: usize) -> usize {
        let minutes = self.timestamp(t).time().signed_duration_since(chrono::NaiveTime::MIN).num_minutes();
        (minutes / INTERVAL_MINUTES) as usize
    }

    /// Day of week of row `t`, Monday = 0.
    pub fn day_of_week(&self, t: usize) -> usize {
        use chrono::Datelike;
        self.timestamp(t).date().weekday().num_days_from_monday() as usize
    }

    /// Content hash over shape, origin and values.
    pub fn fingerprint(&self) -> u64 {
        let id_bytes: Vec<u8> = self.station_ids.iter().flat_map(|s| s.bytes().chain([0u8])).collect();
        let mut h = crate::util::fnv1a64(id_bytes);
        h ^= crate::util::fingerprint_f64(
            &[self.values.nrows(), self.values.ncols()],
            self.values.iter().copied(),
        );
        h
    }
}

/// Per-station min-max scaling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationParams {
    /// Fit on the rows `0..limit` of a frame, ignoring sentinels. A station
    /// with no observed value in the range gets the degenerate pair (0, 0).
    pub fn fit_rows(frame: &FlowFrame, limit: usize) -> Self {
        let limit = limit.min(frame.timesteps());
        let n = frame.n_stations();
        let mut min = vec![f64::INFINITY; n];
        let mut max = vec![f64::NEG_INFINITY; n];
        for t in 0..limit {
            for s in 0..n {
                let v = frame.values[[t, s]];
                if v.is_nan() {
                    continue;
                }
                min[s] = min[s].min(v);
                max[s] = max[s].max(v);
            }
        }
        for s in 0..n {
            if !min[s].is_finite() {
                min[s] = 0.0;
                max[s] = 0.0;
            }
        }
        NormalizationParams { min, max }
    }

    /// Fit on a whole frame.
    pub fn fit(frame: &FlowFrame) -> Self {
        Self::fit_rows(frame, frame.timesteps())
    }

    /// Scale every station to [0, 1]. A constant-valued station maps to all
    /// zeros; sentinels pass through unchanged.
    pub fn apply(&self, frame: &FlowFrame) -> FlowFrame {
        let mut values = frame.values.clone();
        for s in 0..frame.n_stations() {
            let range = self.max[s] - self.min[s];
            let mut col = values.slice_mut(s![.., s]);
            col.mapv_inplace(|v| {
                if v.is_nan() {
                    v
                } else if range > 0.0 {
                    (v - self.min[s]) / range
                } else {
                    0.0
                }
            });
        }
        FlowFrame { values, origin: frame.origin, station_ids: frame.station_ids.clone() }
    }

    /// Inverse of [`apply`](Self::apply) for a single station's value.
    pub fn denormalize_value(&self, station: usize, v: f64) -> f64 {
        v * (self.max[station] - self.min[station]) + self.min[station]
    }

    /// Inverse of [`apply`](Self::apply) on a `[.. × .. × stations]` tensor.
    pub fn denormalize_tensor(&self, t: &Array3<f64>) -> Array3<f64> {
        let mut out = t.clone();
        for mut sample in out.outer_iter_mut() {
            for mut row in sample.outer_iter_mut() {
                for (s, v) in row.iter_mut().enumerate() {
                    *v = self.denormalize_value(s, *v);
                }
            }
        }
        out
    }
}

/// Min-max scale a frame on its own full range.
///
/// Pipelines that must avoid leakage fit [`NormalizationParams`] on the
/// training rows only (see [`prepare_supervised`]); this convenience form
/// fits and applies in one step.
pub fn normalize(frame: &FlowFrame) -> (FlowFrame, NormalizationParams) {
    let params = NormalizationParams::fit(frame);
    (params.apply(frame), params)
}

/// Supervised samples: sliding input windows paired with forecast targets.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    /// `[samples × look_back × stations]`
    pub inputs: Array3<f64>,
    /// `[samples × horizon × stations]`
    pub targets: Array3<f64>,
    pub look_back: usize,
    pub horizon: usize,
    /// Frame row index of the first target row of each sample.
    pub target_index: Vec<usize>,
    /// Timestamp of frame row 0, so target rows can be dated.
    pub origin: NaiveDateTime,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_stations(&self) -> usize {
        self.inputs.shape()[2]
    }

    /// Timestamp of target step `k` of sample `i`.
    pub fn target_timestamp(&self, sample: usize, k: usize) -> NaiveDateTime {
        self.origin + TimeDelta::minutes(INTERVAL_MINUTES * (self.target_index[sample] + k) as i64)
    }

    pub fn fingerprint(&self) -> u64 {
        let sh = self.inputs.shape();
        crate::util::fingerprint_f64(
            &[sh[0], sh[1], sh[2], self.horizon],
            self.inputs.iter().copied().chain(self.targets.iter().copied()),
        )
    }

    fn slice(&self, range: std::ops::Range<usize>) -> WindowedDataset {
        WindowedDataset {
            inputs: self.inputs.slice(s![range.clone(), .., ..]).to_owned(),
            targets: self.targets.slice(s![range.clone(), .., ..]).to_owned(),
            look_back: self.look_back,
            horizon: self.horizon,
            target_index: self.target_index[range].to_vec(),
            origin: self.origin,
        }
    }
}

/// Cut a frame into stride-1 sliding windows. Windows whose input or target
/// rows contain a sentinel are dropped.
pub fn window(frame: &FlowFrame, look_back: usize, horizon: usize) -> Result<WindowedDataset> {
    if look_back == 0 || horizon == 0 {
        return Err(DataError::Size("look_back and horizon must be >= 1".into()));
    }
    let t_total = frame.timesteps();
    if t_total < look_back + horizon {
        return Err(DataError::Size(format!(
            "frame has {t_total} timesteps; need at least look_back + horizon = {}",
            look_back + horizon
        )));
    }
    let n = frame.n_stations();
    let max_samples = t_total - look_back - horizon + 1;

    // Prefix count of sentinel rows makes the per-window check O(1).
    let row_has_nan: Vec<bool> = (0..t_total)
        .map(|t| (0..n).any(|s| frame.values[[t, s]].is_nan()))
        .collect();
    let mut bad_prefix = vec![0usize; t_total + 1];
    for t in 0..t_total {
        bad_prefix[t + 1] = bad_prefix[t] + row_has_nan[t] as usize;
    }

    let mut kept: Vec<usize> = Vec::with_capacity(max_samples);
    for k in 0..max_samples {
        let span = look_back + horizon;
        if bad_prefix[k + span] - bad_prefix[k] == 0 {
            kept.push(k);
        }
    }

    let mut inputs = Array3::zeros((kept.len(), look_back, n));
    let mut targets = Array3::zeros((kept.len(), horizon, n));
    let mut target_index = Vec::with_capacity(kept.len());
    for (i, &k) in kept.iter().enumerate() {
        inputs
            .slice_mut(s![i, .., ..])
            .assign(&frame.values.slice(s![k..k + look_back, ..]));
        targets
            .slice_mut(s![i, .., ..])
            .assign(&frame.values.slice(s![k + look_back..k + look_back + horizon, ..]));
        target_index.push(k + look_back);
    }

    Ok(WindowedDataset {
        inputs,
        targets,
        look_back,
        horizon,
        target_index,
        origin: frame.origin(),
    })
}

/// Chronological train/val/test split. Sizes are floor(n·fraction) for train
/// and validation, with the remainder going to test.
pub fn split(
    ds: &WindowedDataset,
    fractions: (f64, f64, f64),
) -> Result<(WindowedDataset, WindowedDataset, WindowedDataset)> {
    let (ft, fv, fe) = fractions;
    let sum = ft + fv + fe;
    if !(ft > 0.0 && fv > 0.0 && fe > 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions([ft, fv, fe]));
    }
    let n = ds.len();
    let n_train = (n as f64 * ft).floor() as usize;
    let n_val = (n as f64 * fv).floor() as usize;
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(DataError::EmptySplit {
            context: "split".into(),
            sizes: [n_train, n_val, n_test],
            total: n,
        });
    }
    Ok((
        ds.slice(0..n_train),
        ds.slice(n_train..n_train + n_val),
        ds.slice(n_train + n_val..n),
    ))
}

/// Windowed splits plus the scaling fitted on the training rows only.
#[derive(Debug, Clone)]
pub struct SupervisedSplits {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
    pub norm: NormalizationParams,
}

/// Full preparation pipeline: window the raw frame to find the chronological
/// train boundary, fit min-max scaling on the training rows only, normalize,
/// re-window and split.
pub fn prepare_supervised(
    frame: &FlowFrame,
    look_back: usize,
    horizon: usize,
    fractions: (f64, f64, f64),
) -> Result<SupervisedSplits> {
    let raw = window(frame, look_back, horizon)?;
    let n_train = (raw.len() as f64 * fractions.0).floor() as usize;
    if n_train == 0 {
        return Err(DataError::EmptySplit {
            context: "prepare_supervised".into(),
            sizes: [0, 0, 0],
            total: raw.len(),
        });
    }
    // Last frame row any training sample touches (exclusive).
    let train_rows_end = raw.target_index[n_train - 1] + horizon;
    let norm = NormalizationParams::fit_rows(frame, train_rows_end);
    let normalized = norm.apply(frame);
    let ds = window(&normalized, look_back, horizon)?;
    let (train, val, test) = split(&ds, fractions)?;
    Ok(SupervisedSplits { train, val, test, norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn dt(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").unwrap()
    }

    fn frame_from(values: Array2<f64>) -> FlowFrame {
        let n = values.ncols();
        let ids = (0..n).map(|i| format!("S{i}")).collect();
        FlowFrame::new(values, dt("2019-01-01T00:00:00"), ids).unwrap()
    }

    #[test]
    fn normalize_minmax_arithmetic() {
        let frame = frame_from(array![[0.0], [50.0], [100.0]]);
        let (norm, params) = normalize(&frame);
        assert_eq!(norm.values().column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(params.min[0], 0.0);
        assert_eq!(params.max[0], 100.0);
    }

    #[test]
    fn normalize_constant_station_maps_to_zero() {
        let frame = frame_from(array![[7.0], [7.0], [7.0]]);
        let (norm, params) = normalize(&frame);
        assert_eq!(norm.values().column(0).to_vec(), vec![0.0, 0.0, 0.0]);
        // Round trip restores the constant.
        assert_eq!(params.denormalize_value(0, 0.0), 7.0);
    }

    #[test]
    fn normalize_round_trip() {
        let frame = frame_from(array![[3.0, 10.0], [9.0, 40.0], [27.0, 20.0], [81.0, 30.0]]);
        let (norm, params) = normalize(&frame);
        for t in 0..frame.timesteps() {
            for s in 0..frame.n_stations() {
                let back = params.denormalize_value(s, norm.values()[[t, s]]);
                let orig = frame.values()[[t, s]];
                assert_abs_diff_eq!(back, orig, epsilon = 1e-9 * orig.abs().max(1.0));
            }
        }
    }

    #[test]
    fn normalize_is_monotone_per_station() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let vals: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..500.0)).collect();
            let frame = frame_from(Array2::from_shape_vec((20, 1), vals.clone()).unwrap());
            let (norm, _) = normalize(&frame);
            for a in 0..20 {
                for b in 0..20 {
                    if vals[a] <= vals[b] {
                        assert!(norm.values()[[a, 0]] <= norm.values()[[b, 0]]);
                    }
                }
            }
        }
    }

    #[test]
    fn normalize_propagates_sentinels() {
        let frame = frame_from(array![[0.0], [f64::NAN], [100.0]]);
        let (norm, _) = normalize(&frame);
        assert!(norm.values()[[1, 0]].is_nan());
        assert_eq!(norm.values()[[2, 0]], 1.0);
    }

    #[test]
    fn window_counts() {
        let frame = frame_from(Array2::zeros((100, 2)));
        let ds = window(&frame, 96, 1).unwrap();
        assert_eq!(ds.len(), 4);
        // Boundary: exactly look_back + horizon rows gives one sample.
        let frame = frame_from(Array2::zeros((97, 2)));
        let ds = window(&frame, 96, 1).unwrap();
        assert_eq!(ds.len(), 1);
        // One fewer row is an error.
        let frame = frame_from(Array2::zeros((96, 2)));
        assert!(window(&frame, 96, 1).is_err());
    }

    #[test]
    fn window_drops_sentinel_windows() {
        let mut values = Array2::zeros((150, 1));
        values[[50, 0]] = f64::NAN;
        let frame = frame_from(values);
        let ds = window(&frame, 96, 1).unwrap();
        // Samples covering row 50 (starts 0..=50) are gone; rows 51.. give
        // starts 51..=53.
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.target_index, vec![147, 148, 149]);
    }

    #[test]
    fn window_target_adjacency() {
        let mut values = Array2::zeros((30, 1));
        for t in 0..30 {
            values[[t, 0]] = t as f64;
        }
        let frame = frame_from(values);
        let ds = window(&frame, 5, 3).unwrap();
        for i in 0..ds.len() {
            let last_input = ds.inputs[[i, 4, 0]];
            for k in 0..3 {
                assert_eq!(ds.targets[[i, k, 0]], last_input + 1.0 + k as f64);
                let expect =
                    frame.timestamp(last_input as usize) + TimeDelta::minutes(15 * (k as i64 + 1));
                assert_eq!(ds.target_timestamp(i, k), expect);
            }
        }
    }

    #[test]
    fn split_sizes() {
        let frame = frame_from(Array2::zeros((109, 1)));
        let ds = window(&frame, 5, 5).unwrap();
        assert_eq!(ds.len(), 100);
        let (tr, va, te) = split(&ds, (0.7, 0.15, 0.15)).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (70, 15, 15));
    }

    #[test]
    fn split_floor_then_remainder() {
        let frame = frame_from(Array2::zeros((19, 1)));
        let ds = window(&frame, 5, 5).unwrap();
        assert_eq!(ds.len(), 10);
        let (tr, va, te) = split(&ds, (0.8, 0.1, 0.1)).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));
    }

    #[test]
    fn split_rejects_empty_subset() {
        let frame = frame_from(Array2::zeros((19, 1)));
        let ds = window(&frame, 5, 5).unwrap();
        assert!(matches!(split(&ds, (0.5, 0.5, 0.0)), Err(DataError::BadFractions(_))));
        assert!(matches!(
            split(&ds, (0.98, 0.01, 0.01)),
            Err(DataError::EmptySplit { .. })
        ));
    }

    #[test]
    fn split_preserves_order_and_total() {
        let mut values = Array2::zeros((40, 1));
        for t in 0..40 {
            values[[t, 0]] = t as f64;
        }
        let frame = frame_from(values);
        let ds = window(&frame, 3, 1).unwrap();
        let (tr, va, te) = split(&ds, (0.5, 0.25, 0.25)).unwrap();
        assert_eq!(tr.len() + va.len() + te.len(), ds.len());
        let rejoined: Vec<usize> = tr
            .target_index
            .iter()
            .chain(va.target_index.iter())
            .chain(te.target_index.iter())
            .copied()
            .collect();
        assert_eq!(rejoined, ds.target_index);
    }

    #[test]
    fn prepare_fits_scaling_on_train_rows_only() {
        // Training portion peaks at 10; a late spike of 1000 must not affect
        // the scale.
        let mut values = Array2::zeros((40, 1));
        for t in 0..40 {
            values[[t, 0]] = (t % 7) as f64 + 3.0;
        }
        values[[38, 0]] = 1000.0;
        let frame = frame_from(values);
        let prep = prepare_supervised(&frame, 4, 1, (0.6, 0.2, 0.2)).unwrap();
        assert!(prep.norm.max[0] <= 10.0);
        // Test inputs can exceed 1.0 as a consequence; that is expected.
        assert!(prep.test.targets.iter().cloned().fold(f64::MIN, f64::max) > 1.0);
    }
}
