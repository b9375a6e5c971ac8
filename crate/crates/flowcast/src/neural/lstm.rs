//! LSTM layer: standard four-gate cell unrolled over the look-back window.
//!
//! Per step, with `concat = [x_t, h_{t-1}]`:
//!
//! ```text
//! i = sigmoid(concat W_i + b_i)      input gate
//! f = sigmoid(concat W_f + b_f)      forget gate
//! g = tanh   (concat W_g + b_g)      cell candidate
//! o = sigmoid(concat W_o + b_o)      output gate
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! The backward pass takes one external hidden-state gradient per step, so
//! it serves both the attention head (gradient at every step) and a plain
//! last-state readout (gradient only at the final step).

use ndarray::{concatenate, Array1, Array2, Axis};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Gate weights, each `[(in_dim + hidden) × hidden]`.
    pub w_input: Array2<f64>,
    pub w_forget: Array2<f64>,
    pub w_cell: Array2<f64>,
    pub w_output: Array2<f64>,
    pub b_input: Array1<f64>,
    pub b_forget: Array1<f64>,
    pub b_cell: Array1<f64>,
    pub b_output: Array1<f64>,
    pub hidden: usize,
}

impl LstmParams {
    pub fn in_dim(&self) -> usize {
        self.w_input.nrows() - self.hidden
    }

    pub fn zeros_like(&self) -> LstmParams {
        LstmParams {
            w_input: Array2::zeros(self.w_input.dim()),
            w_forget: Array2::zeros(self.w_forget.dim()),
            w_cell: Array2::zeros(self.w_cell.dim()),
            w_output: Array2::zeros(self.w_output.dim()),
            b_input: Array1::zeros(self.b_input.len()),
            b_forget: Array1::zeros(self.b_forget.len()),
            b_cell: Array1::zeros(self.b_cell.len()),
            b_output: Array1::zeros(self.b_output.len()),
            hidden: self.hidden,
        }
    }
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Forward intermediates per step, `[batch × hidden]` each.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    pub concat: Vec<Array2<f64>>,
    pub gate_i: Vec<Array2<f64>>,
    pub gate_f: Vec<Array2<f64>>,
    pub gate_g: Vec<Array2<f64>>,
    pub gate_o: Vec<Array2<f64>>,
    pub cell: Vec<Array2<f64>>,
    pub tanh_cell: Vec<Array2<f64>>,
    /// h_1..h_T
    pub hidden_states: Vec<Array2<f64>>,
}

/// Unroll over `inputs` (length T of `[batch × in_dim]`), starting from zero
/// hidden and cell state.
pub(crate) fn forward_seq(inputs: &[Array2<f64>], p: &LstmParams) -> LstmCache {
    let batch = inputs[0].nrows();
    let m = p.hidden;
    let steps = inputs.len();
    let mut cache = LstmCache {
        concat: Vec::with_capacity(steps),
        gate_i: Vec::with_capacity(steps),
        gate_f: Vec::with_capacity(steps),
        gate_g: Vec::with_capacity(steps),
        gate_o: Vec::with_capacity(steps),
        cell: Vec::with_capacity(steps),
        tanh_cell: Vec::with_capacity(steps),
        hidden_states: Vec::with_capacity(steps),
    };
    let mut h_prev = Array2::zeros((batch, m));
    let mut c_prev: Array2<f64> = Array2::zeros((batch, m));
    for x in inputs {
        let concat = concatenate(Axis(1), &[x.view(), h_prev.view()]).expect("same batch");
        let i = (concat.dot(&p.w_input) + &p.b_input).mapv(sigmoid);
        let f = (concat.dot(&p.w_forget) + &p.b_forget).mapv(sigmoid);
        let g = (concat.dot(&p.w_cell) + &p.b_cell).mapv(f64::tanh);
        let o = (concat.dot(&p.w_output) + &p.b_output).mapv(sigmoid);
        let c = &f * &c_prev + &i * &g;
        let tc = c.mapv(f64::tanh);
        let h = &o * &tc;

        cache.concat.push(concat);
        cache.gate_i.push(i);
        cache.gate_f.push(f);
        cache.gate_g.push(g);
        cache.gate_o.push(o);
        cache.cell.push(c.clone());
        cache.tanh_cell.push(tc);
        cache.hidden_states.push(h.clone());
        h_prev = h;
        c_prev = c;
    }
    cache
}

/// Backpropagate through time.
///
/// `dh_ext[t]` is the gradient flowing into `h_t` from outside the recurrence
/// (attention, a readout head, or an upper LSTM layer). Gradients are
/// accumulated into `grad`; the per-step input gradients are returned.
pub(crate) fn backward_seq(
    cache: &LstmCache,
    p: &LstmParams,
    dh_ext: &[Array2<f64>],
    grad: &mut LstmParams,
) -> Vec<Array2<f64>> {
    let steps = cache.hidden_states.len();
    assert_eq!(dh_ext.len(), steps, "one external hidden gradient per step");
    let batch = cache.hidden_states[0].nrows();
    let m = p.hidden;
    let in_dim = p.in_dim();

    let mut dinputs = vec![Array2::zeros((batch, in_dim)); steps];
    let mut dh_rec: Array2<f64> = Array2::zeros((batch, m));
    let mut dc_rec: Array2<f64> = Array2::zeros((batch, m));

    for t in (0..steps).rev() {
        let i = &cache.gate_i[t];
        let f = &cache.gate_f[t];
        let g = &cache.gate_g[t];
        let o = &cache.gate_o[t];
        let tc = &cache.tanh_cell[t];

        let dh = &dh_ext[t] + &dh_rec;
        let dc = &dc_rec + &(&dh * o * &tc.mapv(|v| 1.0 - v * v));

        let d_o = &dh * tc;
        let d_i = &dc * g;
        let d_g = &dc * i;
        let c_prev = if t == 0 { None } else { Some(&cache.cell[t - 1]) };
        let d_f = match c_prev {
            Some(cp) => &dc * cp,
            None => Array2::zeros((batch, m)), // c_0 = 0, so df vanishes
        };
        dc_rec = &dc * f;

        // Pre-activation gradients.
        let da_i = &d_i * i * &i.mapv(|v| 1.0 - v);
        let da_f = &d_f * f * &f.mapv(|v| 1.0 - v);
        let da_g = &d_g * &g.mapv(|v| 1.0 - v * v);
        let da_o = &d_o * o * &o.mapv(|v| 1.0 - v);

        let concat = &cache.concat[t];
        grad.w_input += &concat.t().dot(&da_i);
        grad.w_forget += &concat.t().dot(&da_f);
        grad.w_cell += &concat.t().dot(&da_g);
        grad.w_output += &concat.t().dot(&da_o);
        grad.b_input += &da_i.sum_axis(Axis(0));
        grad.b_forget += &da_f.sum_axis(Axis(0));
        grad.b_cell += &da_g.sum_axis(Axis(0));
        grad.b_output += &da_o.sum_axis(Axis(0));

        let dconcat = da_i.dot(&p.w_input.t())
            + da_f.dot(&p.w_forget.t())
            + da_g.dot(&p.w_cell.t())
            + da_o.dot(&p.w_output.t());
        dinputs[t].assign(&dconcat.slice(ndarray::s![.., ..in_dim]));
        dh_rec = dconcat.slice(ndarray::s![.., in_dim..]).to_owned();
    }
    dinputs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, in_dim: usize, hidden: usize) -> LstmParams {
        let rows = in_dim + hidden;
        let mat = |rng: &mut ChaCha8Rng| {
            Array2::from_shape_fn((rows, hidden), |_| rng.random_range(-0.5..0.5))
        };
        LstmParams {
            w_input: mat(rng),
            w_forget: mat(rng),
            w_cell: mat(rng),
            w_output: mat(rng),
            b_input: Array1::zeros(hidden),
            b_forget: Array1::from_elem(hidden, 1.0),
            b_cell: Array1::zeros(hidden),
            b_output: Array1::zeros(hidden),
            hidden,
        }
    }

    #[test]
    fn zero_weights_give_zero_hidden_state() {
        let p = LstmParams {
            w_input: Array2::zeros((3, 2)),
            w_forget: Array2::zeros((3, 2)),
            w_cell: Array2::zeros((3, 2)),
            w_output: Array2::zeros((3, 2)),
            b_input: Array1::zeros(2),
            b_forget: Array1::zeros(2),
            b_cell: Array1::zeros(2),
            b_output: Array1::zeros(2),
            hidden: 2,
        };
        let inputs = vec![Array2::from_elem((1, 1), 5.0); 4];
        let cache = forward_seq(&inputs, &p);
        // g = tanh(0) = 0 so the cell never accumulates anything.
        for h in &cache.hidden_states {
            assert_abs_diff_eq!(h[[0, 0]], 0.0);
            assert_abs_diff_eq!(h[[0, 1]], 0.0);
        }
    }

    #[test]
    fn hidden_state_is_bounded_by_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(&mut rng, 3, 4);
        let inputs: Vec<Array2<f64>> = (0..10)
            .map(|_| Array2::from_shape_fn((2, 3), |_| rng.random_range(-3.0..3.0)))
            .collect();
        let cache = forward_seq(&inputs, &p);
        for h in &cache.hidden_states {
            for &v in h.iter() {
                assert!(v.abs() <= 1.0, "h = o * tanh(c) stays in [-1, 1]");
            }
        }
    }

    /// Finite-difference check for the standalone layer with gradient
    /// injected at every step (sum of all hidden states as the scalar loss).
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (in_dim, hidden, steps, batch) = (2, 3, 4, 2);
        let p = random_params(&mut rng, in_dim, hidden);
        let inputs: Vec<Array2<f64>> = (0..steps)
            .map(|_| Array2::from_shape_fn((batch, in_dim), |_| rng.random_range(-1.0..1.0)))
            .collect();

        let loss_of = |p: &LstmParams| -> f64 {
            let cache = forward_seq(&inputs, p);
            cache.hidden_states.iter().map(|h| h.sum()).sum()
        };

        let cache = forward_seq(&inputs, &p);
        let dh_ext = vec![Array2::ones((batch, hidden)); steps];
        let mut grad = p.zeros_like();
        backward_seq(&cache, &p, &dh_ext, &mut grad);

        let h = 1e-5;
        let mut p_mut = p.clone();
        // Spot-check a handful of coordinates in every tensor.
        let coords = [(0usize, 0usize), (1, 2), (3, 1)];
        macro_rules! check {
            ($w:ident) => {
                for &(r, c) in &coords {
                    let orig = p_mut.$w[[r, c]];
                    p_mut.$w[[r, c]] = orig + h;
                    let up = loss_of(&p_mut);
                    p_mut.$w[[r, c]] = orig - h;
                    let down = loss_of(&p_mut);
                    p_mut.$w[[r, c]] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grad.$w[[r, c]];
                    assert_abs_diff_eq!(analytic, numeric, epsilon = 1e-7);
                }
            };
        }
        check!(w_input);
        check!(w_forget);
        check!(w_cell);
        check!(w_output);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (in_dim, hidden, steps, batch) = (2, 3, 5, 1);
        let p = random_params(&mut rng, in_dim, hidden);
        let inputs: Vec<Array2<f64>> = (0..steps)
            .map(|_| Array2::from_shape_fn((batch, in_dim), |_| rng.random_range(-1.0..1.0)))
            .collect();

        let cache = forward_seq(&inputs, &p);
        // Only the last step receives an external gradient (plain readout).
        let mut dh_ext = vec![Array2::zeros((batch, hidden)); steps];
        dh_ext[steps - 1] = Array2::ones((batch, hidden));
        let mut grad = p.zeros_like();
        let dinputs = backward_seq(&cache, &p, &dh_ext, &mut grad);

        let h = 1e-6;
        for t in 0..steps {
            for d in 0..in_dim {
                let mut plus = inputs.clone();
                plus[t][[0, d]] += h;
                let mut minus = inputs.clone();
                minus[t][[0, d]] -= h;
                let up: f64 = forward_seq(&plus, &p).hidden_states[steps - 1].sum();
                let down: f64 = forward_seq(&minus, &p).hidden_states[steps - 1].sum();
                let numeric = (up - down) / (2.0 * h);
                assert_abs_diff_eq!(dinputs[t][[0, d]], numeric, epsilon = 1e-6);
            }
        }
    }
}
