//! Temporal attention over the LSTM hidden states.
//!
//! Each step gets a scalar score `e_t = tanh(h_t w + b)`; the softmax of the
//! scores over time gives the weights `alpha`, and the context vector is the
//! alpha-weighted sum of hidden states. The weights always form a simplex:
//! positive, summing to one.

use ndarray::{Array1, Array2};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Score projection, one weight per hidden unit.
    pub w: Array1<f64>,
    /// Scalar bias kept as a length-1 tensor so optimizer state and
    /// checkpoints can treat all parameters uniformly.
    pub b: Array1<f64>,
}

impl AttentionParams {
    pub fn zeros_like(&self) -> AttentionParams {
        AttentionParams { w: Array1::zeros(self.w.len()), b: Array1::zeros(1) }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    /// tanh scores, `[batch × steps]`
    pub scores: Array2<f64>,
    /// softmax weights, `[batch × steps]`
    pub alphas: Array2<f64>,
}

/// Returns the context `[batch × hidden]` and the cache.
pub(crate) fn forward(hs: &[Array2<f64>], p: &AttentionParams) -> (Array2<f64>, AttentionCache) {
    let steps = hs.len();
    let (batch, hidden) = hs[0].dim();
    let mut scores = Array2::zeros((batch, steps));
    for (t, h) in hs.iter().enumerate() {
        let z = h.dot(&p.w) + p.b[0];
        scores.column_mut(t).assign(&z.mapv(f64::tanh));
    }
    // Row-wise softmax over time, max-shifted.
    let mut alphas = Array2::zeros((batch, steps));
    for b in 0..batch {
        let row = scores.row(b);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for t in 0..steps {
            alphas[[b, t]] = exps[t] / total;
        }
    }
    let mut context = Array2::zeros((batch, hidden));
    for t in 0..steps {
        for b in 0..batch {
            let a = alphas[[b, t]];
            for k in 0..hidden {
                context[[b, k]] += a * hs[t][[b, k]];
            }
        }
    }
    (context, AttentionCache { scores, alphas })
}

/// Backward pass: gradients of the parameters plus one hidden-state gradient
/// per step.
pub(crate) fn backward(
    dcontext: &Array2<f64>,
    hs: &[Array2<f64>],
    cache: &AttentionCache,
    p: &AttentionParams,
    grad: &mut AttentionParams,
) -> Vec<Array2<f64>> {
    let steps = hs.len();
    let (batch, hidden) = hs[0].dim();
    let mut dhs = vec![Array2::zeros((batch, hidden)); steps];

    // d alpha and the weighted-sum path into h.
    let mut dalpha = Array2::zeros((batch, steps));
    for t in 0..steps {
        for b in 0..batch {
            let mut acc = 0.0;
            for k in 0..hidden {
                acc += dcontext[[b, k]] * hs[t][[b, k]];
                dhs[t][[b, k]] += cache.alphas[[b, t]] * dcontext[[b, k]];
            }
            dalpha[[b, t]] = acc;
        }
    }

    // Softmax backward: de = alpha * (dalpha - sum_k alpha_k dalpha_k).
    let mut dscore = Array2::zeros((batch, steps));
    for b in 0..batch {
        let dot: f64 = (0..steps).map(|t| cache.alphas[[b, t]] * dalpha[[b, t]]).sum();
        for t in 0..steps {
            dscore[[b, t]] = cache.alphas[[b, t]] * (dalpha[[b, t]] - dot);
        }
    }

    // tanh backward and the linear score projection.
    for t in 0..steps {
        for b in 0..batch {
            let dz = dscore[[b, t]] * (1.0 - cache.scores[[b, t]] * cache.scores[[b, t]]);
            grad.b[0] += dz;
            for k in 0..hidden {
                grad.w[k] += dz * hs[t][[b, k]];
                dhs[t][[b, k]] += dz * p.w[k];
            }
        }
    }
    dhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn singleton_sequence_gets_full_weight() {
        let p = AttentionParams { w: array![0.3, -0.2], b: array![0.1] };
        let hs = vec![array![[0.5, -1.0]]];
        let (ctx, cache) = forward(&hs, &p);
        assert_eq!(cache.alphas[[0, 0]], 1.0);
        assert_eq!(ctx, hs[0]);
    }

    #[test]
    fn equal_scores_average_hidden_states() {
        // w = 0 makes every score equal to tanh(b).
        let p = AttentionParams { w: Array1::zeros(2), b: array![0.7] };
        let hs = vec![array![[2.0, 0.0]], array![[0.0, 2.0]], array![[1.0, 1.0]]];
        let (ctx, cache) = forward(&hs, &p);
        for t in 0..3 {
            assert_abs_diff_eq!(cache.alphas[[0, t]], 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(ctx[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ctx[[0, 1]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_softmax_pair() {
        // Scores 0 and ln 3 give weights 1/4 and 3/4. tanh caps scores below
        // ln 3, so check the softmax arithmetic directly on a crafted cache.
        let scores = array![[0.0, 3.0f64.ln()]];
        let exps = scores.mapv(f64::exp);
        let total = exps.sum();
        let alphas = exps.mapv(|v| v / total);
        assert_abs_diff_eq!(alphas[[0, 0]], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(alphas[[0, 1]], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn alphas_form_a_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let steps = rng.random_range(1..9);
            let hidden = rng.random_range(1..5);
            let batch = rng.random_range(1..4);
            let p = AttentionParams {
                w: Array1::from_shape_fn(hidden, |_| rng.random_range(-2.0..2.0)),
                b: array![rng.random_range(-1.0..1.0)],
            };
            let hs: Vec<Array2<f64>> = (0..steps)
                .map(|_| Array2::from_shape_fn((batch, hidden), |_| rng.random_range(-3.0..3.0)))
                .collect();
            let (_, cache) = forward(&hs, &p);
            for b in 0..batch {
                let row = cache.alphas.row(b);
                assert!(row.iter().all(|&a| a > 0.0));
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (steps, hidden, batch) = (4, 3, 2);
        let p = AttentionParams {
            w: Array1::from_shape_fn(hidden, |_| rng.random_range(-1.0..1.0)),
            b: array![0.2],
        };
        let hs: Vec<Array2<f64>> = (0..steps)
            .map(|_| Array2::from_shape_fn((batch, hidden), |_| rng.random_range(-1.0..1.0)))
            .collect();

        let loss_of = |p: &AttentionParams, hs: &[Array2<f64>]| -> f64 {
            let (ctx, _) = forward(hs, p);
            ctx.sum()
        };

        let (_, cache) = forward(&hs, &p);
        let dctx = Array2::ones((batch, hidden));
        let mut grad = p.zeros_like();
        let dhs = backward(&dctx, &hs, &cache, &p, &mut grad);

        let h = 1e-6;
        for k in 0..hidden {
            let mut pp = p.clone();
            pp.w[k] += h;
            let mut pm = p.clone();
            pm.w[k] -= h;
            let numeric = (loss_of(&pp, &hs) - loss_of(&pm, &hs)) / (2.0 * h);
            assert_abs_diff_eq!(grad.w[k], numeric, epsilon = 1e-6);
        }
        {
            let mut pp = p.clone();
            pp.b[0] += h;
            let mut pm = p.clone();
            pm.b[0] -= h;
            let numeric = (loss_of(&pp, &hs) - loss_of(&pm, &hs)) / (2.0 * h);
            assert_abs_diff_eq!(grad.b[0], numeric, epsilon = 1e-6);
        }
        for t in 0..steps {
            for b in 0..batch {
                for k in 0..hidden {
                    let mut hp = hs.clone();
                    hp[t][[b, k]] += h;
                    let mut hm = hs.clone();
                    hm[t][[b, k]] -= h;
                    let numeric = (loss_of(&p, &hp) - loss_of(&p, &hm)) / (2.0 * h);
                    assert_abs_diff_eq!(dhs[t][[b, k]], numeric, epsilon = 1e-6);
                }
            }
        }
    }
}
