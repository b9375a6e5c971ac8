//! Shared fixtures for the neural test suites.

use crate::graph::{build_adjacency, AvailabilityVector, KernelMode, TravelTimeMatrix, WeightedAdjacency};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fully connected random adjacency with mixed availability.
pub(crate) fn tiny_adjacency(n: usize, seed: u64) -> WeightedAdjacency {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut secs = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                secs[[i, j]] = rng.random_range(60.0..600.0);
            }
        }
    }
    let t = TravelTimeMatrix::from_seconds(secs).unwrap();
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.4..1.0)).collect();
    let avail = AvailabilityVector::from_scores(scores).unwrap();
    build_adjacency(&t, &avail, KernelMode::Gaussian, 0.1, 1e-6).unwrap()
}
