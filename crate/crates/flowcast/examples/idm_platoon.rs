//! Car-following dynamics: free-flow cruise, launch from rest, and a platoon
//! relaxing to its analytic equilibrium gap behind a slower leader.
//!
//! Run with: cargo run --example idm_platoon

use flowcast::microsim::{desired_gap, idm_accel, step_with_leader, IdmParams, VehicleState};

fn main() {
    let p = IdmParams::for_speed(25.0);

    println!("=== Point accelerations ===");
    println!("at rest, free road:        {:+.3} m/s^2", idm_accel(0.0, 0.0, 1e9, &p).unwrap());
    println!("at desired speed, free:    {:+.3} m/s^2", idm_accel(p.v_desired, 0.0, 1e9, &p).unwrap());
    println!(
        "closing at +5 m/s, 30 m gap: {:+.3} m/s^2",
        idm_accel(20.0, 5.0, 30.0, &p).unwrap()
    );
    println!("desired gap at 15 m/s:     {:.2} m\n", desired_gap(15.0, 0.0, &p));

    // Platoon behind a leader pinned at 15 m/s.
    let lead_speed = 15.0;
    let s_e = desired_gap(lead_speed, 0.0, &p) / (1.0 - (lead_speed / p.v_desired).powi(4)).sqrt();
    println!("=== Platoon relaxation behind a {lead_speed} m/s leader ===");
    println!("analytic equilibrium gap: {s_e:.2} m");

    let mut vehicles = vec![VehicleState {
        position: 2000.0,
        speed: lead_speed,
        departure_time: 0.0,
        is_vut: false,
    }];
    for i in 1..=5 {
        vehicles.push(VehicleState {
            position: 2000.0 - 60.0 * i as f64,
            speed: 23.0,
            departure_time: 0.0,
            is_vut: false,
        });
    }

    let dt = 0.5;
    for k in 0..=3600 {
        if k % 600 == 0 {
            let gaps: Vec<String> = (1..vehicles.len())
                .map(|i| {
                    format!(
                        "{:6.2}",
                        vehicles[i - 1].position - p.vehicle_length - vehicles[i].position
                    )
                })
                .collect();
            println!("t = {:6.1} s   gaps: {}", k as f64 * dt, gaps.join(" "));
        }
        step_with_leader(&mut vehicles, &p, dt, f64::INFINITY, k as f64 * dt, Some(lead_speed))
            .unwrap();
    }
    let final_gap = vehicles[0].position - p.vehicle_length - vehicles[1].position;
    println!(
        "\nfinal first gap {final_gap:.2} m vs analytic {s_e:.2} m ({:+.2}%)",
        (final_gap / s_e - 1.0) * 100.0
    );
}
