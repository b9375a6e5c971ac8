//! Single-corridor car-following micro-simulation.
//!
//! Vehicles follow the intelligent-driver model: acceleration depends on the
//! ratio of current speed to desired speed and on the ratio of the desired
//! safety distance to the actual bumper-to-bumper gap,
//!
//! ```text
//! dv/dt = a [ 1 - (v / v_desired)^4 - (s* / s)^2 ]
//! s*(v, dv) = s0 + max(0, v T + v dv / (2 sqrt(a b)))
//! ```
//!
//! Integration is semi-implicit Euler with the speed clamped at zero:
//! `v' = max(0, v + accel dt)`, `x' = x + v' dt`. A gap that closes to zero
//! or below is a hard error, never silently patched.
//!
//! The Monte-Carlo driver injects Poisson arrivals at a demand rate derived
//! from predicted upper-bound flows, inserts one probe vehicle at a uniformly
//! jittered departure time, and records its corridor travel time per run.

use chrono::{NaiveDateTime, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("collision at t = {t:.1} s: gap {gap:.3} m behind position {position:.1} m")]
    Collision { t: f64, position: f64, gap: f64 },
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("clock window selects no prediction slots")]
    EmptyWindow,
    #[error("all {0} Monte-Carlo runs failed to finish within the horizon")]
    AllRunsExcluded(usize),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Driver/vehicle parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct IdmParams {
    /// Maximum acceleration, m/s^2.
    pub accel_max: f64,
    /// Comfortable braking deceleration, m/s^2.
    pub decel_comfort: f64,
    /// Desired (free-flow) speed, m/s.
    pub v_desired: f64,
    /// Time headway, s.
    pub t_headway: f64,
    /// Minimum static gap, m.
    pub min_gap: f64,
    /// Vehicle length, m.
    pub vehicle_length: f64,
}

impl IdmParams {
    /// Conventional parameter set at a given desired speed.
    pub fn for_speed(v_desired: f64) -> IdmParams {
        IdmParams {
            accel_max: 1.5,
            decel_comfort: 2.0,
            v_desired,
            t_headway: 1.5,
            min_gap: 2.0,
            vehicle_length: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("accel_max", self.accel_max),
            ("decel_comfort", self.decel_comfort),
            ("v_desired", self.v_desired),
            ("t_headway", self.t_headway),
            ("min_gap", self.min_gap),
            ("vehicle_length", self.vehicle_length),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Desired safety distance `s*` at speed `v` with approach rate `dv`
/// (positive when closing in on the leader).
pub fn desired_gap(v: f64, dv: f64, p: &IdmParams) -> f64 {
    p.min_gap + (v * p.t_headway + v * dv / (2.0 * (p.accel_max * p.decel_comfort).sqrt())).max(0.0)
}

/// IDM acceleration for gap `s` to the leader. Use an infinite gap for a
/// free leader.
pub fn idm_accel(v: f64, dv: f64, s: f64, p: &IdmParams) -> Result<f64> {
    if s <= 0.0 {
        return Err(SimError::Collision { t: f64::NAN, position: f64::NAN, gap: s });
    }
    let free = (v / p.v_desired).powi(4);
    let interaction = (desired_gap(v, dv, p) / s).powi(2);
    Ok(p.accel_max * (1.0 - free - interaction))
}

/// One vehicle on the corridor. Positions are meters from the injection
/// point; `departure_time` is the actual insertion time in seconds.
#[derive(Debug, Clone, Copy)]
pub struct VehicleState {
    pub position: f64,
    pub speed: f64,
    pub departure_time: f64,
    pub is_vut: bool,
}

/// Corridor geometry.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct Corridor {
    /// Length, m.
    pub length: f64,
    /// Speed limit (and default desired speed), m/s.
    pub speed_limit: f64,
}

impl Corridor {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) || !(self.speed_limit > 0.0) {
            return Err(SimError::Domain("corridor length and speed limit must be > 0".into()));
        }
        Ok(())
    }
}

/// A vehicle that crossed the exit during a step.
#[derive(Debug, Clone, Copy)]
pub struct ExitEvent {
    pub exit_time: f64,
    pub departure_time: f64,
    pub is_vut: bool,
}

/// Advance every vehicle by one timestep. `vehicles` must be ordered
/// front-most first; exited vehicles are removed and returned.
///
/// `leader_speed_override` pins the front vehicle to a constant speed, which
/// is how lead-vehicle experiments (platoon relaxation, stop-and-go probes)
/// are set up; pass `None` for fully autonomous flow.
pub fn step_with_leader(
    vehicles: &mut Vec<VehicleState>,
    p: &IdmParams,
    dt: f64,
    corridor_length: f64,
    now: f64,
    leader_speed_override: Option<f64>,
) -> Result<Vec<ExitEvent>> {
    let n = vehicles.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    // Accelerations from the current snapshot.
    let mut accels = Vec::with_capacity(n);
    for i in 0..n {
        if i == 0 {
            match leader_speed_override {
                Some(_) => accels.push(0.0),
                None => accels.push(idm_accel(vehicles[0].speed, 0.0, f64::INFINITY, p)?),
            }
        } else {
            let leader = &vehicles[i - 1];
            let me = &vehicles[i];
            let gap = leader.position - p.vehicle_length - me.position;
            if gap <= 0.0 {
                return Err(SimError::Collision { t: now, position: me.position, gap });
            }
            accels.push(idm_accel(me.speed, me.speed - leader.speed, gap, p)?);
        }
    }
    // Semi-implicit Euler, speed clamped at zero.
    for (i, v) in vehicles.iter_mut().enumerate() {
        if i == 0 {
            if let Some(fixed) = leader_speed_override {
                v.speed = fixed;
                v.position += fixed * dt;
                continue;
            }
        }
        v.speed = (v.speed + accels[i] * dt).max(0.0);
        v.position += v.speed * dt;
    }
    // Post-update safety check.
    for i in 1..vehicles.len() {
        let gap = vehicles[i - 1].position - p.vehicle_length - vehicles[i].position;
        if gap <= 0.0 {
            return Err(SimError::Collision { t: now + dt, position: vehicles[i].position, gap });
        }
    }
    // Exits leave from the front.
    let mut exited = Vec::new();
    while let Some(front) = vehicles.first() {
        if front.position >= corridor_length {
            exited.push(ExitEvent {
                exit_time: now + dt,
                departure_time: front.departure_time,
                is_vut: front.is_vut,
            });
            vehicles.remove(0);
        } else {
            break;
        }
    }
    Ok(exited)
}

/// [`step_with_leader`] with fully autonomous flow.
pub fn step(
    vehicles: &mut Vec<VehicleState>,
    p: &IdmParams,
    dt: f64,
    corridor_length: f64,
    now: f64,
) -> Result<Vec<ExitEvent>> {
    step_with_leader(vehicles, p, dt, corridor_length, now, None)
}

/// Average predicted upper-bound flow over a time-of-day window, converted
/// from vehicles / 15 min to vehicles / hour.
///
/// `times` and `upper_bounds` run in parallel: one timestamp per value
/// (repeated timestamps for multiple stations are fine; the mean pools them).
pub fn demand_from_flows(
    times: &[NaiveDateTime],
    upper_bounds: &[f64],
    window_start: NaiveTime,
    window_end: NaiveTime,
) -> Result<f64> {
    if times.len() != upper_bounds.len() {
        return Err(SimError::Shape(format!(
            "{} timestamps vs {} upper bounds",
            times.len(),
            upper_bounds.len()
        )));
    }
    if window_start >= window_end {
        return Err(SimError::Domain(format!(
            "window start {window_start} must precede end {window_end}"
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (ts, &v) in times.iter().zip(upper_bounds) {
        let tod = ts.time();
        if tod >= window_start && tod < window_end {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(SimError::EmptyWindow);
    }
    Ok(sum / n as f64 * 4.0)
}

/// Monte-Carlo protocol parameters.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct SimConfig {
    /// Integration timestep, s.
    pub dt: f64,
    pub n_runs: usize,
    /// Injection demand, vehicles/hour.
    pub demand_veh_per_hour: f64,
    /// The probe departs uniformly inside `[0, vut_window_s)`.
    pub vut_window_s: f64,
    /// Give up on a run after this much simulated time.
    pub max_sim_s: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(demand_veh_per_hour: f64) -> SimConfig {
        SimConfig {
            dt: 0.5,
            n_runs: 200,
            demand_veh_per_hour,
            vut_window_s: 3600.0,
            max_sim_s: 4.0 * 3600.0,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(SimError::Domain(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_runs == 0 {
            return Err(SimError::Domain("n_runs must be >= 1".into()));
        }
        if !(self.demand_veh_per_hour > 0.0) {
            return Err(SimError::Domain(format!(
                "demand must be > 0 vehicles/hour, got {}",
                self.demand_veh_per_hour
            )));
        }
        if !(self.vut_window_s > 0.0) || !(self.max_sim_s > self.vut_window_s) {
            return Err(SimError::Domain("need max_sim_s > vut_window_s > 0".into()));
        }
        Ok(())
    }
}

/// One successful Monte-Carlo run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub travel_time_min: f64,
}

/// Probe travel times across runs, in minutes, with summary statistics.
#[derive(Debug, Clone, Serialize)]
pub struct TravelTimeDistribution {
    pub runs: Vec<RunRecord>,
    pub mean: f64,
    pub std: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub excluded_runs: usize,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

impl TravelTimeDistribution {
    fn from_runs(runs: Vec<RunRecord>, excluded_runs: usize) -> Result<Self> {
        if runs.is_empty() {
            return Err(SimError::AllRunsExcluded(excluded_runs));
        }
        let samples: Vec<f64> = runs.iter().map(|r| r.travel_time_min).collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(TravelTimeDistribution {
            runs,
            mean,
            std: var.sqrt(),
            p5: percentile(&sorted, 0.05),
            p50: percentile(&sorted, 0.50),
            p95: percentile(&sorted, 0.95),
            excluded_runs,
        })
    }

    pub fn samples_min(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.travel_time_min).collect()
    }

    /// `run,seed,travel_time_min` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,seed,travel_time_min\n");
        for r in &self.runs {
            out.push_str(&format!("{},{:016x},{}\n", r.run, r.seed, r.travel_time_min));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "mean_min": self.mean,
            "std_min": self.std,
            "p5_min": self.p5,
            "p50_min": self.p50,
            "p95_min": self.p95,
            "n_runs": self.runs.len(),
            "excluded_runs": self.excluded_runs,
        })
        .to_string()
    }
}

/// Simulate one run until the probe exits. Returns its travel time in
/// minutes, or None when the horizon cap was hit first.
fn run_once(corridor: &Corridor, p: &IdmParams, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
    let rate = cfg.demand_veh_per_hour / 3600.0;
    let inter_arrival = Exp::new(rate).map_err(|e| SimError::Domain(e.to_string()))?;
    let vut_depart: f64 = rng.random_range(0.0..cfg.vut_window_s);

    let mut vehicles: Vec<VehicleState> = Vec::new();
    // Vehicles whose arrival time has passed but could not enter yet;
    // true marks the probe.
    let mut queue: std::collections::VecDeque<bool> = std::collections::VecDeque::new();
    let mut next_background = inter_arrival.sample(rng);
    let mut vut_pending = true;
    let mut t = 0.0;

    while t <= cfg.max_sim_s {
        // Collect arrivals due by now, keeping the stream ordered.
        while next_background <= t || (vut_pending && vut_depart <= t) {
            if vut_pending && vut_depart <= next_background.min(t) {
                queue.push_back(true);
                vut_pending = false;
            } else if next_background <= t {
                queue.push_back(false);
                next_background += inter_arrival.sample(rng);
            } else {
                break;
            }
        }
        // Try to insert the head of the queue.
        while let Some(head) = queue.front() {
            let entry_speed = match vehicles.last() {
                None => p.v_desired,
                Some(last) => {
                    let gap = last.position - p.vehicle_length;
                    if gap >= p.min_gap + p.v_desired * p.t_headway {
                        p.v_desired
                    } else {
                        p.v_desired.min(last.speed)
                    }
                }
            };
            let clear = match vehicles.last() {
                None => true,
                Some(last) => {
                    last.position - p.vehicle_length >= p.min_gap + entry_speed * p.t_headway
                }
            };
            if !clear {
                break;
            }
            vehicles.push(VehicleState {
                position: 0.0,
                speed: entry_speed,
                departure_time: t,
                is_vut: *head,
            });
            queue.pop_front();
        }

        let exits = step(&mut vehicles, p, cfg.dt, corridor.length, t)?;
        for e in exits {
            if e.is_vut {
                return Ok(Some((e.exit_time - e.departure_time) / 60.0));
            }
        }
        t += cfg.dt;
    }
    Ok(None)
}

/// Run the full Monte-Carlo protocol. Each run draws an independent seed from
/// the master seed, so results are bit-reproducible and runs are independent.
pub fn monte_carlo(corridor: &Corridor, p: &IdmParams, cfg: &SimConfig) -> Result<TravelTimeDistribution> {
    corridor.validate()?;
    p.validate()?;
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.n_runs);
    let mut excluded = 0usize;
    for run in 0..cfg.n_runs {
        let run_seed = crate::util::derive_seed(cfg.seed, run as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        match run_once(corridor, p, cfg, &mut rng)? {
            Some(minutes) => runs.push(RunRecord { run, seed: run_seed, travel_time_min: minutes }),
            None => excluded += 1,
        }
    }
    TravelTimeDistribution::from_runs(runs, excluded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params() -> IdmParams {
        IdmParams::for_speed(25.0)
    }

    #[test]
    fn desired_gap_at_rest_is_min_gap() {
        let p = params();
        assert_eq!(desired_gap(0.0, 0.0, &p), p.min_gap);
    }

    #[test]
    fn free_flow_at_desired_speed_has_zero_accel() {
        let p = params();
        let a = idm_accel(p.v_desired, 0.0, f64::INFINITY, &p).unwrap();
        assert_eq!(a, 0.0);
    }

    #[test]
    fn launch_from_rest_approaches_max_accel() {
        let p = params();
        let a = idm_accel(0.0, 0.0, 1e9, &p).unwrap();
        assert_relative_eq!(a, p.accel_max, max_relative = 1e-9);
    }

    #[test]
    fn nonpositive_gap_is_a_collision_error() {
        let p = params();
        assert!(matches!(idm_accel(10.0, 0.0, 0.0, &p), Err(SimError::Collision { .. })));
        assert!(matches!(idm_accel(10.0, 0.0, -1.0, &p), Err(SimError::Collision { .. })));
    }

    #[test]
    fn solo_vehicle_cruises_at_desired_speed() {
        let p = params();
        let mut vehicles = vec![VehicleState {
            position: 0.0,
            speed: p.v_desired,
            departure_time: 0.0,
            is_vut: true,
        }];
        let dt = 0.5;
        for k in 0..100 {
            step(&mut vehicles, &p, dt, f64::INFINITY, k as f64 * dt).unwrap();
            assert_abs_diff_eq!(vehicles[0].speed, p.v_desired, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(vehicles[0].position, p.v_desired * 50.0, epsilon = 1e-6);
    }

    #[test]
    fn follower_never_reverses_behind_stopped_leader() {
        let p = params();
        let mut vehicles = vec![
            VehicleState { position: 60.0, speed: 0.0, departure_time: 0.0, is_vut: false },
            VehicleState { position: 0.0, speed: 20.0, departure_time: 0.0, is_vut: false },
        ];
        let dt = 0.5;
        for k in 0..400 {
            step_with_leader(&mut vehicles, &p, dt, f64::INFINITY, k as f64 * dt, Some(0.0)).unwrap();
            assert!(vehicles[1].speed >= 0.0);
        }
        // Settled right at the static gap, not through the leader.
        let gap = vehicles[0].position - p.vehicle_length - vehicles[1].position;
        assert!(gap > 0.0 && gap < 4.0, "final gap {gap}");
        assert_abs_diff_eq!(vehicles[1].speed, 0.0, epsilon = 1e-6);
    }

    /// Analytic equilibrium gap: solve accel = 0 at speed v with dv = 0.
    fn equilibrium_gap(v: f64, p: &IdmParams) -> f64 {
        desired_gap(v, 0.0, p) / (1.0 - (v / p.v_desired).powi(4)).sqrt()
    }

    #[test]
    fn platoon_settles_to_analytic_equilibrium_gap() {
        let p = params();
        let lead_speed = 15.0;
        let s_e = equilibrium_gap(lead_speed, &p);

        // Cross-check the closed form with a bisection root of accel = 0.
        let (mut lo, mut hi) = (p.min_gap, 1e4);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let a = idm_accel(lead_speed, 0.0, mid, &p).unwrap();
            if a < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(0.5 * (lo + hi), s_e, max_relative = 1e-6);

        // 6-vehicle platoon behind a constant-speed leader.
        let mut vehicles = vec![VehicleState {
            position: 1000.0,
            speed: lead_speed,
            departure_time: 0.0,
            is_vut: false,
        }];
        for i in 1..=6 {
            vehicles.push(VehicleState {
                position: 1000.0 - 40.0 * i as f64,
                speed: lead_speed,
                departure_time: 0.0,
                is_vut: false,
            });
        }
        let dt = 0.5;
        for k in 0..4000 {
            step_with_leader(&mut vehicles, &p, dt, f64::INFINITY, k as f64 * dt, Some(lead_speed))
                .unwrap();
        }
        for i in 1..vehicles.len() {
            let gap = vehicles[i - 1].position - p.vehicle_length - vehicles[i].position;
            assert_relative_eq!(gap, s_e, max_relative = 0.01);
        }
    }

    #[test]
    fn demand_conversion_examples() {
        let base = NaiveDateTime::parse_from_str("2019-01-01T07:30:00", "%Y-%m-%dT%H:%M:%S").unwrap();
        let times: Vec<NaiveDateTime> =
            (0..4).map(|k| base + chrono::TimeDelta::minutes(15 * k)).collect();
        let start = NaiveTime::from_hms_opt(7, 30, 0).unwrap();
        let end = NaiveTime::from_hms_opt(8, 30, 0).unwrap();
        let d = demand_from_flows(&times, &[100.0, 110.0, 120.0, 130.0], start, end).unwrap();
        assert_abs_diff_eq!(d, 460.0, epsilon = 1e-12);
        let d = demand_from_flows(&times, &[90.0; 4], start, end).unwrap();
        assert_abs_diff_eq!(d, 360.0, epsilon = 1e-12);
        // Window outside the prediction range.
        let late_start = NaiveTime::from_hms_opt(12, 0, 0).unwrap();
        let late_end = NaiveTime::from_hms_opt(13, 0, 0).unwrap();
        assert!(matches!(
            demand_from_flows(&times, &[1.0; 4], late_start, late_end),
            Err(SimError::EmptyWindow)
        ));
    }

    #[test]
    fn near_zero_demand_gives_free_flow_travel_time() {
        let corridor = Corridor { length: 3000.0, speed_limit: 25.0 };
        let p = IdmParams::for_speed(corridor.speed_limit);
        let mut cfg = SimConfig::new(1e-6);
        cfg.n_runs = 5;
        let dist = monte_carlo(&corridor, &p, &cfg).unwrap();
        let free_flow_min = corridor.length / corridor.speed_limit / 60.0;
        for r in &dist.runs {
            assert_abs_diff_eq!(r.travel_time_min, free_flow_min, epsilon = cfg.dt / 60.0);
        }
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let corridor = Corridor { length: 2000.0, speed_limit: 25.0 };
        let p = IdmParams::for_speed(corridor.speed_limit);
        let mut cfg = SimConfig::new(600.0);
        cfg.n_runs = 20;
        let a = monte_carlo(&corridor, &p, &cfg).unwrap();
        let b = monte_carlo(&corridor, &p, &cfg).unwrap();
        assert_eq!(a.samples_min(), b.samples_min());
        assert_eq!(a.to_csv(), b.to_csv());
        cfg.seed = 43;
        let c = monte_carlo(&corridor, &p, &cfg).unwrap();
        assert_ne!(a.samples_min(), c.samples_min());
    }

    #[test]
    fn summary_is_consistent_with_samples() {
        let corridor = Corridor { length: 2000.0, speed_limit: 25.0 };
        let p = IdmParams::for_speed(corridor.speed_limit);
        let mut cfg = SimConfig::new(900.0);
        cfg.n_runs = 30;
        let dist = monte_carlo(&corridor, &p, &cfg).unwrap();
        let samples = dist.samples_min();
        assert_eq!(samples.len() + dist.excluded_runs, 30);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        assert_relative_eq!(dist.mean, mean, max_relative = 1e-12);
        assert!(dist.p5 <= dist.p50 && dist.p50 <= dist.p95);
        assert!(samples.iter().all(|&m| m > 0.0));
    }
}
