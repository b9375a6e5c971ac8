//! Synthetic corridor corpus for desk-scale experiments and the acceptance
//! suite.
//!
//! Stations sit on a linear corridor. Station 0 carries a daily double-peak
//! demand curve (08:00 and 17:00) modulated by a day-level AR(1) factor plus
//! an intraday AR(1) component; each downstream station repeats the upstream
//! signal delayed by the inter-station travel time rounded to whole
//! 15-minute intervals, plus i.i.d. measurement noise. The travel-time
//! matrix is directional (the reverse direction is slower), so the derived
//! adjacency is asymmetric.

use super::{DataError, FlowFrame, Result, StationKind, StationMeta, SLOTS_PER_DAY};
use chrono::NaiveDateTime;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Tunables for the generator. Defaults produce a corpus where recent history
/// genuinely predicts the next interval (the AR components) and neighboring
/// stations carry correlated signal (the lagged propagation).
#[derive(Debug, Clone)]
pub struct SynthOptions {
    /// Std-dev of per-station i.i.d. measurement noise, vehicles / 15 min.
    pub noise_std: f64,
    /// Off-peak flow level, vehicles / 15 min.
    pub base_flow: f64,
    /// Morning (08:00) peak amplitude.
    pub morning_amp: f64,
    /// Evening (17:00) peak amplitude.
    pub evening_amp: f64,
    /// Innovation std-dev of the day-level AR(1) multiplier.
    pub day_sigma: f64,
    /// Innovation std-dev of the intraday AR(1) component, vehicles.
    pub intraday_sigma: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            noise_std: 16.0,
            base_flow: 40.0,
            morning_amp: 220.0,
            evening_amp: 180.0,
            day_sigma: 0.18,
            intraday_sigma: 2.0,
        }
    }
}

/// A generated corpus: counts, station metadata and directional travel times.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub frame: FlowFrame,
    pub meta: Vec<StationMeta>,
    /// `[N × N]` seconds; entry (i, j) is the trip time from station i to j.
    pub travel_seconds: Array2<f64>,
}

/// Generate with default options.
pub fn synth_corpus(n_stations: usize, days: usize, seed: u64) -> Result<SynthCorpus> {
    synth_corpus_with(n_stations, days, seed, &SynthOptions::default())
}

/// Raised-cosine bump of half-width `w` slots centered at `c`.
fn bump(slot: f64, c: f64, w: f64) -> f64 {
    let d = (slot - c).abs();
    if d >= w {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * d / w).cos())
    }
}

fn daily_pattern(slot: usize, opt: &SynthOptions) -> f64 {
    let s = slot as f64;
    opt.base_flow + opt.morning_amp * bump(s, 32.0, 10.0) + opt.evening_amp * bump(s, 68.0, 12.0)
}

/// Generate a corpus. Deterministic for a fixed `(n_stations, days, seed,
/// options)` tuple.
pub fn synth_corpus_with(
    n_stations: usize,
    days: usize,
    seed: u64,
    opt: &SynthOptions,
) -> Result<SynthCorpus> {
    if n_stations < 2 {
        return Err(DataError::Size(format!("need at least 2 stations, got {n_stations}")));
    }
    if days < 2 {
        return Err(DataError::Size(format!("need at least 2 days, got {days}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_total = days * SLOTS_PER_DAY;

    // Corridor geometry: per-gap distance, forward speed, reverse slowdown.
    let n_gaps = n_stations - 1;
    let mut gap_dist = Vec::with_capacity(n_gaps);
    let mut gap_fwd_tt = Vec::with_capacity(n_gaps);
    let mut gap_rev_tt = Vec::with_capacity(n_gaps);
    for _ in 0..n_gaps {
        let d: f64 = rng.random_range(9_000.0..16_000.0);
        let s: f64 = rng.random_range(22.0..29.0);
        let rf: f64 = rng.random_range(1.1..1.3);
        gap_dist.push(d);
        gap_fwd_tt.push(d / s);
        gap_rev_tt.push(d / s * rf);
    }

    let mut travel_seconds = Array2::zeros((n_stations, n_stations));
    for i in 0..n_stations {
        for j in 0..n_stations {
            if i < j {
                travel_seconds[[i, j]] = gap_fwd_tt[i..j].iter().sum();
            } else if i > j {
                travel_seconds[[i, j]] = gap_rev_tt[j..i].iter().sum();
            }
        }
    }

    // Signal propagation delay in whole intervals per gap.
    let interval_s = 900.0;
    let lags: Vec<usize> = gap_fwd_tt.iter().map(|tt| (tt / interval_s).round() as usize).collect();
    let mut cum_lag = vec![0usize; n_stations];
    for i in 1..n_stations {
        cum_lag[i] = cum_lag[i - 1] + lags[i - 1];
    }
    let max_lag = cum_lag[n_stations - 1];

    // Station metadata; the corpus always contains both kinds.
    let mut meta = Vec::with_capacity(n_stations);
    let mut cum_dist = 0.0;
    for i in 0..n_stations {
        if i > 0 {
            cum_dist += gap_dist[i - 1];
        }
        let kind = if i == 0 {
            StationKind::Ccs
        } else if i == n_stations - 1 {
            StationKind::Nccs
        } else if rng.random_bool(0.4) {
            StationKind::Nccs
        } else {
            StationKind::Ccs
        };
        let full = (t_total) as u64;
        let record_count = match kind {
            StationKind::Ccs => full,
            StationKind::Nccs => rng.random_range((full / 8).max(1)..(full / 2).max(2)),
        };
        meta.push(StationMeta {
            station_id: format!("S{i}"),
            kind,
            lat: 41.0,
            lon: -81.7 + cum_dist / 85_000.0,
            record_count,
        });
    }

    // Shared signal g over an extended index range [-max_lag, t_total);
    // station i reads g at (row - cum_lag[i]).
    let ext = t_total + max_lag;
    let day_lo: i64 = (-(max_lag as i64)).div_euclid(SLOTS_PER_DAY as i64);
    let n_days_ext = (days as i64 - day_lo) as usize;
    let day_noise = Normal::new(0.0, opt.day_sigma).expect("sigma >= 0");
    let mut day_level = Vec::with_capacity(n_days_ext);
    let mut u = 0.0;
    for _ in 0..n_days_ext {
        u = 0.7 * u + day_noise.sample(&mut rng);
        day_level.push(1.0 + u.clamp(-0.5, 0.5));
    }

    let intraday_noise = Normal::new(0.0, opt.intraday_sigma).expect("sigma >= 0");
    let mut g = Vec::with_capacity(ext);
    let mut v = 0.0;
    for e in 0..ext {
        let row = e as i64 - max_lag as i64;
        let slot = row.rem_euclid(SLOTS_PER_DAY as i64) as usize;
        let day = row.div_euclid(SLOTS_PER_DAY as i64);
        let level = day_level[(day - day_lo) as usize];
        v = 0.95 * v + intraday_noise.sample(&mut rng);
        g.push(daily_pattern(slot, opt) * level + v);
    }

    let meas_noise = Normal::new(0.0, opt.noise_std).expect("sigma >= 0");
    let mut values = Array2::zeros((t_total, n_stations));
    for s in 0..n_stations {
        let offset = max_lag - cum_lag[s];
        for t in 0..t_total {
            let w = meas_noise.sample(&mut rng);
            values[[t, s]] = (g[t + offset] + w).max(0.0).round();
        }
    }

    let origin = NaiveDateTime::parse_from_str("2019-01-01T00:00:00", "%Y-%m-%dT%H:%M:%S").unwrap();
    let ids = meta.iter().map(|m| m.station_id.clone()).collect();
    let frame = FlowFrame::new(values, origin, ids)?;
    Ok(SynthCorpus { frame, meta, travel_seconds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = synth_corpus(5, 3, 1).unwrap();
        let b = synth_corpus(5, 3, 1).unwrap();
        assert_eq!(a.frame.values(), b.frame.values());
        assert_eq!(a.travel_seconds, b.travel_seconds);
        assert_eq!(a.meta.len(), b.meta.len());
        for (x, y) in a.meta.iter().zip(&b.meta) {
            assert_eq!(x.record_count, y.record_count);
            assert_eq!(x.kind, y.kind);
        }
        let c = synth_corpus(5, 3, 2).unwrap();
        assert_ne!(a.frame.values(), c.frame.values());
    }

    #[test]
    fn shape_is_days_times_slots() {
        let c = synth_corpus(5, 30, 9).unwrap();
        assert_eq!(c.frame.timesteps(), 2880);
        assert_eq!(c.frame.n_stations(), 5);
    }

    #[test]
    fn zero_noise_gives_exact_lagged_equality() {
        let opt = SynthOptions { noise_std: 0.0, ..SynthOptions::default() };
        let c = synth_corpus_with(4, 3, 11, &opt).unwrap();
        let vals = c.frame.values();
        for i in 1..4 {
            let lag = (c.travel_seconds[[i - 1, i]] / 900.0).round() as usize;
            for t in lag..c.frame.timesteps() {
                assert_eq!(
                    vals[[t, i]],
                    vals[[t - lag, i - 1]],
                    "station {i} at t={t} should equal station {} at t-{lag}",
                    i - 1
                );
            }
        }
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(synth_corpus(1, 30, 0).is_err());
        assert!(synth_corpus(5, 1, 0).is_err());
    }

    #[test]
    fn corridor_travel_times_are_directional_and_additive() {
        let c = synth_corpus(5, 2, 3).unwrap();
        let t = &c.travel_seconds;
        for i in 0..5 {
            assert_eq!(t[[i, i]], 0.0);
        }
        assert!(t[[1, 0]] > t[[0, 1]], "reverse direction should be slower");
        let sum = t[[0, 1]] + t[[1, 2]];
        assert!((t[[0, 2]] - sum).abs() < 1e-9);
    }

    #[test]
    fn contains_both_station_kinds() {
        let c = synth_corpus(6, 2, 5).unwrap();
        assert!(c.meta.iter().any(|m| m.kind == StationKind::Ccs));
        assert!(c.meta.iter().any(|m| m.kind == StationKind::Nccs));
        assert!(c.meta.iter().all(|m| m.record_count >= 1));
    }
}
