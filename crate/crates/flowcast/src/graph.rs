//! Weighted adjacency construction from travel times and data availability.
//!
//! The chain is: per-station availability scores (continuous stations are
//! fully available, non-continuous ones are scored by record count relative
//! to the densest non-continuous station), inter-station travel times from
//! distance and average speed, a kernel over max-normalized travel times
//! (Gaussian by default, inverse-time as the alternative weighting), and
//! finally attenuation of each edge by the availability of both endpoints:
//!
//! `A_modified[i][j] = kernel(T_norm[i][j]) * avail[i] * avail[j]`
//!
//! Travel times may be asymmetric (directional routes), and the asymmetry
//! survives into the adjacency. Unconnected pairs carry infinite travel time
//! and end up with weight 0 after the kernel.

use crate::data::{DataError, StationKind, StationMeta};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("station list is empty")]
    EmptyStations,
    #[error("non-continuous station {0:?} has record_count 0")]
    ZeroRecordCount(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("{0}")]
    Domain(String),
    #[error("travel-time matrix is degenerate (no positive finite entry)")]
    DegenerateTravelTimes,
    #[error(transparent)]
    Csv(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Kernel applied to normalized travel times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// `exp(-T_norm^2 / (2 sigma^2))` — default.
    Gaussian,
    /// `1 / (T_norm + epsilon)`.
    InverseTime,
}

pub const DEFAULT_SIGMA2: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Pairwise trip times in seconds. Infinite entries mean "no route".
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeMatrix {
    seconds: Array2<f64>,
}

impl TravelTimeMatrix {
    /// Wrap a matrix of seconds, checking the diagonal is zero and no entry
    /// is negative.
    pub fn from_seconds(seconds: Array2<f64>) -> Result<Self> {
        if seconds.nrows() != seconds.ncols() {
            return Err(GraphError::Shape(format!(
                "travel-time matrix must be square, got {}x{}",
                seconds.nrows(),
                seconds.ncols()
            )));
        }
        for i in 0..seconds.nrows() {
            if seconds[[i, i]] != 0.0 {
                return Err(GraphError::Domain(format!("T[{i}][{i}] must be 0")));
            }
            for j in 0..seconds.ncols() {
                let v = seconds[[i, j]];
                if v.is_nan() || v < 0.0 {
                    return Err(GraphError::Domain(format!("T[{i}][{j}] = {v} is invalid")));
                }
            }
        }
        Ok(TravelTimeMatrix { seconds })
    }

    pub fn seconds(&self) -> &Array2<f64> {
        &self.seconds
    }

    pub fn n(&self) -> usize {
        self.seconds.nrows()
    }
}

/// Per-station availability in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityVector {
    scores: Vec<f64>,
}

impl AvailabilityVector {
    /// Wrap externally computed scores; each must lie in (0, 1].
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(GraphError::EmptyStations);
        }
        for &s in &scores {
            if !(s > 0.0 && s <= 1.0) {
                return Err(GraphError::Domain(format!("availability score {s} outside (0, 1]")));
            }
        }
        Ok(AvailabilityVector { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Score stations by data availability: continuous stations get 1, the rest
/// get their record count divided by the maximum record count among
/// non-continuous stations.
pub fn availability_scores(meta: &[StationMeta]) -> Result<AvailabilityVector> {
    if meta.is_empty() {
        return Err(GraphError::EmptyStations);
    }
    let mut max_nccs: u64 = 0;
    for m in meta {
        if m.kind == StationKind::Nccs {
            if m.record_count == 0 {
                return Err(GraphError::ZeroRecordCount(m.station_id.clone()));
            }
            max_nccs = max_nccs.max(m.record_count);
        }
    }
    let scores = meta
        .iter()
        .map(|m| match m.kind {
            StationKind::Ccs => 1.0,
            StationKind::Nccs => m.record_count as f64 / max_nccs as f64,
        })
        .collect();
    Ok(AvailabilityVector { scores })
}

/// Element-wise trip time from distance (meters) and average speed (m/s).
/// The diagonal is forced to zero; an infinite distance means "no route" and
/// skips the speed check.
pub fn travel_times(distances: &Array2<f64>, speeds: &Array2<f64>) -> Result<TravelTimeMatrix> {
    if distances.dim() != speeds.dim() {
        return Err(GraphError::Shape(format!(
            "distances {:?} vs speeds {:?}",
            distances.dim(),
            speeds.dim()
        )));
    }
    let n = distances.nrows();
    let mut seconds = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = distances[[i, j]];
            if d < 0.0 || d.is_nan() {
                return Err(GraphError::Domain(format!("distance D[{i}][{j}] = {d} is invalid")));
            }
            if !d.is_finite() {
                seconds[[i, j]] = f64::INFINITY;
                continue;
            }
            let s = speeds[[i, j]];
            if !(s > 0.0) {
                return Err(GraphError::Domain(format!(
                    "speed S[{i}][{j}] = {s} must be > 0 on a used edge"
                )));
            }
            seconds[[i, j]] = d / s;
        }
    }
    TravelTimeMatrix::from_seconds(seconds)
}

/// The availability-attenuated weighted adjacency.
#[derive(Debug, Clone)]
pub struct WeightedAdjacency {
    a_modified: Array2<f64>,
    pub kernel_mode: KernelMode,
    pub sigma2: f64,
    pub epsilon: f64,
}

impl WeightedAdjacency {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.a_modified
    }

    pub fn n(&self) -> usize {
        self.a_modified.nrows()
    }

    /// Row-normalized copy (each row sums to 1), the aggregation operator
    /// used by the graph convolution. Rows always have positive sums because
    /// the self-loop weight avail[i]^2 is positive.
    pub fn row_normalized(&self) -> Array2<f64> {
        let mut out = self.a_modified.clone();
        for mut row in out.rows_mut() {
            let s: f64 = row.sum();
            if s > 0.0 {
                row.mapv_inplace(|v| v / s);
            }
        }
        out
    }

    /// Content hash of the weight matrix.
    pub fn fingerprint(&self) -> u64 {
        crate::util::fingerprint_f64(
            &[self.a_modified.nrows(), self.a_modified.ncols()],
            self.a_modified.iter().copied(),
        )
    }
}

/// Build the weighted adjacency from travel times and availability scores.
///
/// Travel times are normalized by their maximum finite entry, the kernel is
/// applied, the diagonal of the kernelized matrix is pinned to 1 (self-loop),
/// and each entry (i, j) is attenuated by `avail[i] * avail[j]`.
pub fn build_adjacency(
    t: &TravelTimeMatrix,
    avail: &AvailabilityVector,
    mode: KernelMode,
    sigma2: f64,
    epsilon: f64,
) -> Result<WeightedAdjacency> {
    let n = t.n();
    if avail.len() != n {
        return Err(GraphError::Shape(format!(
            "availability has {} entries for a {n}-node travel-time matrix",
            avail.len()
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(GraphError::Domain(format!("sigma2 must be > 0, got {sigma2}")));
    }
    if !(epsilon > 0.0) {
        return Err(GraphError::Domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    let mut max_t = 0.0f64;
    for &v in t.seconds().iter() {
        if v.is_finite() {
            max_t = max_t.max(v);
        }
    }
    if !(max_t > 0.0) {
        return Err(GraphError::DegenerateTravelTimes);
    }

    let scores = avail.scores();
    let mut a_modified = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let a_combined = if i == j {
                1.0
            } else {
                let t_norm = t.seconds()[[i, j]] / max_t;
                match mode {
                    KernelMode::Gaussian => (-(t_norm * t_norm) / (2.0 * sigma2)).exp(),
                    KernelMode::InverseTime => 1.0 / (t_norm + epsilon),
                }
            };
            a_modified[[i, j]] = a_combined * scores[i] * scores[j];
        }
    }
    Ok(WeightedAdjacency { a_modified, kernel_mode: mode, sigma2, epsilon })
}

/// Load a travel-time CSV for a known station ordering.
///
/// Two header variants are accepted: `from_id,to_id,seconds` and
/// `from_id,to_id,distance_m,speed_mps`. Pairs not present in the file are
/// unconnected (infinite travel time, weight 0 after the kernel).
pub fn load_travel_times(path: &Path, station_ids: &[String]) -> Result<TravelTimeMatrix> {
    let col_of: HashMap<&str, usize> =
        station_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DataError::Parse { path: path.display().to_string(), line: 1, msg: e.to_string() })?;
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Parse { path: path.display().to_string(), line: 1, msg: e.to_string() })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let direct = match cols.as_slice() {
        ["from_id", "to_id", "seconds"] => true,
        ["from_id", "to_id", "distance_m", "speed_mps"] => false,
        other => {
            return Err(GraphError::Csv(DataError::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("unrecognized travel-time header {other:?}"),
            }))
        }
    };

    let n = station_ids.len();
    let mut seconds = Array2::from_elem((n, n), f64::INFINITY);
    for i in 0..n {
        seconds[[i, i]] = 0.0;
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let perr = |msg: String| {
            GraphError::Csv(DataError::Parse { path: path.display().to_string(), line, msg })
        };
        let from = *col_of
            .get(&rec[0])
            .ok_or_else(|| GraphError::Csv(DataError::UnknownStation(rec[0].to_string())))?;
        let to = *col_of
            .get(&rec[1])
            .ok_or_else(|| GraphError::Csv(DataError::UnknownStation(rec[1].to_string())))?;
        if from == to {
            continue; // self-edges are implicit zeros
        }
        let value = if direct {
            rec[2].parse::<f64>().map_err(|_| perr(format!("bad seconds {:?}", &rec[2])))?
        } else {
            let d = rec[2].parse::<f64>().map_err(|_| perr(format!("bad distance {:?}", &rec[2])))?;
            let s = rec[3].parse::<f64>().map_err(|_| perr(format!("bad speed {:?}", &rec[3])))?;
            if !(s > 0.0) {
                return Err(GraphError::Domain(format!(
                    "speed for edge {}->{} must be > 0, got {s}",
                    &rec[0], &rec[1]
                )));
            }
            d / s
        };
        if value < 0.0 || value.is_nan() {
            return Err(perr(format!("invalid travel time {value}")));
        }
        seconds[[from, to]] = value;
    }
    TravelTimeMatrix::from_seconds(seconds)
}

/// Adjacency CSV text: header row of station ids, then one labeled row per
/// station. Floats use the shortest round-trip form.
pub fn adjacency_csv(adj: &WeightedAdjacency, station_ids: &[String]) -> String {
    let mut out = String::from("station_id");
    for id in station_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (i, id) in station_ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..station_ids.len() {
            out.push_str(&format!(",{}", adj.matrix()[[i, j]]));
        }
        out.push('\n');
    }
    out
}

pub fn write_adjacency_csv(
    adj: &WeightedAdjacency,
    station_ids: &[String],
    path: &Path,
) -> Result<()> {
    std::fs::write(path, adjacency_csv(adj, station_ids)).map_err(|e| {
        GraphError::Csv(DataError::Io { path: path.display().to_string(), source: e })
    })
}
