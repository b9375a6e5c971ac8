//! Generate a synthetic corridor corpus and inspect its structure.
//!
//! Run with: cargo run --example synthesize_corpus

use flowcast::data::{synth_corpus_with, SynthOptions};

fn main() {
    let opts = SynthOptions::default();
    let corpus = synth_corpus_with(5, 7, 42, &opts).unwrap();

    println!("=== Synthetic corridor corpus ===\n");
    println!(
        "{} stations x {} timesteps ({} days of 15-minute counts)\n",
        corpus.frame.n_stations(),
        corpus.frame.timesteps(),
        corpus.frame.timesteps() / 96
    );

    println!("{:<6} {:<5} {:>12} {:>10}", "id", "kind", "record_count", "lon");
    for m in &corpus.meta {
        println!(
            "{:<6} {:<5} {:>12} {:>10.3}",
            m.station_id,
            m.kind.as_str(),
            m.record_count,
            m.lon
        );
    }

    println!("\nDirectional travel times (seconds):");
    for i in 0..corpus.meta.len() {
        let row: Vec<String> =
            (0..corpus.meta.len()).map(|j| format!("{:6.0}", corpus.travel_seconds[[i, j]])).collect();
        println!("  {}", row.join(" "));
    }
    println!("\nNote the asymmetry: the reverse direction is slower on every gap.");

    // The morning peak shows up around 08:00 (slot 32).
    println!("\nStation S0, day 3, around the morning peak:");
    for slot in 28..37 {
        let t = 2 * 96 + slot;
        println!("  {}  {:>4.0} vehicles", corpus.frame.timestamp(t).format("%H:%M"), corpus.frame.values()[[t, 0]]);
    }

    // Downstream stations repeat the upstream signal with a lag.
    let quiet = SynthOptions { noise_std: 0.0, ..SynthOptions::default() };
    let clean = synth_corpus_with(3, 3, 42, &quiet).unwrap();
    let lag = (clean.travel_seconds[[0, 1]] / 900.0).round() as usize;
    println!("\nWith zero measurement noise, S1 equals S0 delayed by {lag} interval(s):");
    for t in 40..44 {
        println!(
            "  t={t}: S0[t-{lag}] = {:>4.0}, S1[t] = {:>4.0}",
            clean.frame.values()[[t - lag, 0]],
            clean.frame.values()[[t, 1]]
        );
    }
}
