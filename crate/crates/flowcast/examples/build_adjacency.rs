//! Build a weighted adjacency matrix step by step: availability scores,
//! travel times, kernel weighting, and availability attenuation.
//!
//! Run with: cargo run --example build_adjacency

use flowcast::data::{StationKind, StationMeta};
use flowcast::graph::{availability_scores, build_adjacency, travel_times, KernelMode};
use ndarray::array;

fn station(id: &str, kind: StationKind, records: u64) -> StationMeta {
    StationMeta { station_id: id.into(), kind, lat: 41.0, lon: -81.7, record_count: records }
}

fn main() {
    // Two continuous stations and two sparse ones.
    let meta = vec![
        station("S0", StationKind::Ccs, 35040),
        station("S1", StationKind::Nccs, 1200),
        station("S2", StationKind::Nccs, 300),
        station("S3", StationKind::Ccs, 35040),
    ];

    println!("=== Availability scores ===");
    let avail = availability_scores(&meta).unwrap();
    for (m, s) in meta.iter().zip(avail.scores()) {
        println!("  {} ({}):  {:.3}", m.station_id, m.kind.as_str(), s);
    }
    println!("Continuous stations score 1; sparse ones are scaled by the densest sparse station.\n");

    // Distances in meters, average speeds in m/s. The return path of the
    // S0->S1 stretch takes a detour, so the matrix is asymmetric.
    let distances = array![
        [0.0, 2000.0, 5200.0, 9400.0],
        [3100.0, 0.0, 3200.0, 7400.0],
        [5200.0, 3200.0, 0.0, 4200.0],
        [9400.0, 7400.0, 4200.0, 0.0],
    ];
    let speeds = array![
        [1.0, 20.0, 26.0, 26.0],
        [18.0, 1.0, 26.0, 26.0],
        [26.0, 26.0, 1.0, 21.0],
        [26.0, 26.0, 21.0, 1.0],
    ];
    let t = travel_times(&distances, &speeds).unwrap();
    println!("=== Travel times (seconds) ===");
    print_matrix(t.seconds());
    println!("S0->S1 takes {:.0} s, S1->S0 takes {:.0} s (directional detour).\n", t.seconds()[[0, 1]], t.seconds()[[1, 0]]);

    println!("=== Gaussian kernel (sigma^2 = 0.1) with availability attenuation ===");
    let adj = build_adjacency(&t, &avail, KernelMode::Gaussian, 0.1, 1e-6).unwrap();
    print_matrix(adj.matrix());
    println!("Shorter travel time => larger weight; edges to sparse stations are attenuated.\n");

    println!("=== Inverse-time kernel for comparison ===");
    let inv = build_adjacency(&t, &avail, KernelMode::InverseTime, 0.1, 1e-6).unwrap();
    print_matrix(inv.matrix());

    println!("\nRow-normalized Gaussian adjacency (the aggregation operator):");
    print_matrix(&adj.row_normalized());
    println!("\nFingerprint {:016x} ties checkpoints to this exact graph.", adj.fingerprint());
}

fn print_matrix(m: &ndarray::Array2<f64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:8.4}", m[[i, j]])).collect();
        println!("  {}", row.join(" "));
    }
}
