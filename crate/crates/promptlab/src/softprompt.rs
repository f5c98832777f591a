//! Trainable soft-prompt bank.
//!
//! Holds `m` raw vectors in ℝ^d plus their reparameterizer: a single-layer
//! bidirectional LSTM (hidden size `d` per direction, fused gate weights in
//! i/f/g/o order, one bias per gate per direction) followed by an affine
//! projection from the concatenated 2d states back to d. The projection has
//! no nonlinearity. The effective prompt embeddings are the projection
//! outputs; they depend only on the bank, never on the sentence being
//! classified.
//!
//! Raw vectors initialize from `Normal(0, 0.02²)`, LSTM and projection
//! weights from `Uniform(±1/√d)`, all drawn from the seed's bank stream.

use thiserror::Error;

use crate::prompt::AssembledExample;
use crate::rng::{self, Stream};
use crate::tensor::{Binding, Graph, ParamGroup, Scalar, Var};

pub const RAW: &str = "bank.raw";
pub const LSTM_FWD_W_IH: &str = "bank.lstm.fwd.w_ih";
pub const LSTM_FWD_W_HH: &str = "bank.lstm.fwd.w_hh";
pub const LSTM_FWD_BIAS: &str = "bank.lstm.fwd.bias";
pub const LSTM_BWD_W_IH: &str = "bank.lstm.bwd.w_ih";
pub const LSTM_BWD_W_HH: &str = "bank.lstm.bwd.w_hh";
pub const LSTM_BWD_BIAS: &str = "bank.lstm.bwd.bias";
pub const MLP_W: &str = "bank.mlp.w";
pub const MLP_B: &str = "bank.mlp.b";

#[derive(Debug, Error)]
pub enum SoftPromptError {
    #[error("example has {found} soft positions, bank expects 0 or {expected}")]
    PositionCount { found: usize, expected: usize },
}

/// `m` trainable prompt vectors plus the biLSTM+MLP reparameterizer.
#[derive(Debug, Clone)]
pub struct SoftPromptBank<T: Scalar> {
    count: usize,
    dim: usize,
    pub params: ParamGroup<T>,
}

impl<T: Scalar> SoftPromptBank<T> {
    /// Seeded bank; identical seeds give bit-identical banks.
    pub fn init(count: usize, dim: usize, seed: u64) -> Self {
        assert!(count > 0 && dim > 0, "bank needs positive count and dim");
        let mut r = rng::rng(seed, Stream::BankInit);
        let bound = 1.0 / (dim as f64).sqrt();
        let mut params = ParamGroup::new();
        params.add(RAW, rng::normal_vec(&mut r, count * dim, 0.02), count, dim);
        for (w_ih, w_hh, bias) in [
            (LSTM_FWD_W_IH, LSTM_FWD_W_HH, LSTM_FWD_BIAS),
            (LSTM_BWD_W_IH, LSTM_BWD_W_HH, LSTM_BWD_BIAS),
        ] {
            params.add(w_ih, rng::uniform_vec(&mut r, dim * 4 * dim, bound), dim, 4 * dim);
            params.add(w_hh, rng::uniform_vec(&mut r, dim * 4 * dim, bound), dim, 4 * dim);
            params.add(bias, rng::uniform_vec(&mut r, 4 * dim, bound), 1, 4 * dim);
        }
        params.add(MLP_W, rng::uniform_vec(&mut r, 2 * dim * dim, bound), 2 * dim, dim);
        params.add(MLP_B, rng::uniform_vec(&mut r, dim, bound), 1, dim);
        SoftPromptBank { count, dim, params }
    }

    /// Wraps an existing parameter group (e.g. loaded from a checkpoint).
    pub fn from_params(count: usize, dim: usize, params: ParamGroup<T>) -> Self {
        SoftPromptBank { count, dim, params }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Exact trainable-value counts `(lstm, mlp, raw vectors)`, by
    /// enumerating the constructed tensors.
    pub fn param_count(&self) -> (usize, usize, usize) {
        let total_for = |infix: &str| {
            self.params
                .iter()
                .filter(|p| p.name.contains(infix))
                .map(|p| p.data.len())
                .sum()
        };
        (total_for(".lstm."), total_for(".mlp."), total_for(".raw"))
    }

    /// Runs the raw vectors through the reparameterizer inside `graph`,
    /// yielding the `m × d` effective prompt embeddings. Gradients flow to
    /// the raw vectors, the LSTM, and the projection.
    pub fn reparameterize(&self, graph: &mut Graph<T>, binding: &Binding) -> Var {
        let m = self.count;
        let d = self.dim;
        let raw = self.params.var(binding, RAW);
        let steps: Vec<Var> = (0..m).map(|t| graph.gather_rows(raw, &[t])).collect();

        let run = |graph: &mut Graph<T>, order: &[usize], w_ih: Var, w_hh: Var, bias: Var| {
            let mut h = graph.constant(vec![T::zero(); d], 1, d);
            let mut c = graph.constant(vec![T::zero(); d], 1, d);
            let mut states = vec![h; m];
            for &t in order {
                let xw = graph.matmul(steps[t], w_ih);
                let hw = graph.matmul(h, w_hh);
                let pre = graph.add(xw, hw);
                let gates = graph.add_bias(pre, bias);
                let i_gate = graph.slice_cols(gates, 0, d);
                let i_gate = graph.sigmoid(i_gate);
                let f_gate = graph.slice_cols(gates, d, 2 * d);
                let f_gate = graph.sigmoid(f_gate);
                let g_gate = graph.slice_cols(gates, 2 * d, 3 * d);
                let g_gate = graph.tanh(g_gate);
                let o_gate = graph.slice_cols(gates, 3 * d, 4 * d);
                let o_gate = graph.sigmoid(o_gate);
                let fc = graph.mul(f_gate, c);
                let ig = graph.mul(i_gate, g_gate);
                c = graph.add(fc, ig);
                let ct = graph.tanh(c);
                h = graph.mul(o_gate, ct);
                states[t] = h;
            }
            states
        };

        let fwd_order: Vec<usize> = (0..m).collect();
        let bwd_order: Vec<usize> = (0..m).rev().collect();
        let fwd = {
            let w_ih = self.params.var(binding, LSTM_FWD_W_IH);
            let w_hh = self.params.var(binding, LSTM_FWD_W_HH);
            let bias = self.params.var(binding, LSTM_FWD_BIAS);
            run(graph, &fwd_order, w_ih, w_hh, bias)
        };
        let bwd = {
            let w_ih = self.params.var(binding, LSTM_BWD_W_IH);
            let w_hh = self.params.var(binding, LSTM_BWD_W_HH);
            let bias = self.params.var(binding, LSTM_BWD_BIAS);
            run(graph, &bwd_order, w_ih, w_hh, bias)
        };

        let mlp_w = self.params.var(binding, MLP_W);
        let mlp_b = self.params.var(binding, MLP_B);
        let rows: Vec<Var> = (0..m)
            .map(|t| {
                let cat = graph.concat_cols(&[fwd[t], bwd[t]]);
                let proj = graph.matmul(cat, mlp_w);
                graph.add_bias(proj, mlp_b)
            })
            .collect();
        graph.concat_rows(&rows)
    }

    /// Effective prompt embeddings as plain values (inference path).
    pub fn reparameterize_values(&self) -> Vec<Vec<T>> {
        let mut graph = Graph::new();
        let binding = self.params.bind(&mut graph);
        let out = self.reparameterize(&mut graph, &binding);
        graph
            .data(out)
            .chunks(self.dim)
            .map(|row| row.to_vec())
            .collect()
    }

    /// Position → effective-vector override map for one assembled example:
    /// empty for a discrete prompt, one entry per soft slot otherwise.
    pub fn inject(&self, example: &AssembledExample) -> Result<Vec<(usize, Vec<T>)>, SoftPromptError> {
        let found = example.soft_positions.len();
        if found == 0 {
            return Ok(Vec::new());
        }
        if found != self.count {
            return Err(SoftPromptError::PositionCount { found, expected: self.count });
        }
        let vectors = self.reparameterize_values();
        Ok(example.soft_positions.iter().copied().zip(vectors).collect())
    }
}

/// Closed-form parameter counts `(lstm, mlp, vectors)` for a bank of `m`
/// vectors at dimension `d`: per direction and gate the LSTM has an input
/// matrix, a recurrent matrix, and one bias.
pub fn expected_param_count(m: usize, d: usize) -> (usize, usize, usize) {
    let lstm = 2 * 4 * (d * d + d * d + d);
    let mlp = d * 2 * d + d;
    (lstm, mlp, m * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_bit_identical_banks() {
        let a: SoftPromptBank<f32> = SoftPromptBank::init(4, 8, 11);
        let b: SoftPromptBank<f32> = SoftPromptBank::init(4, 8, 11);
        for (pa, pb) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(pa.data, pb.data, "tensor {}", pa.name);
        }
    }

    #[test]
    fn distinct_seeds_differ() {
        let a: SoftPromptBank<f32> = SoftPromptBank::init(4, 8, 11);
        let b: SoftPromptBank<f32> = SoftPromptBank::init(4, 8, 12);
        assert_ne!(a.params.get(RAW).data, b.params.get(RAW).data);
    }

    #[test]
    fn counts_match_closed_form_small() {
        let bank: SoftPromptBank<f32> = SoftPromptBank::init(4, 8, 1);
        assert_eq!(bank.param_count(), (1088, 136, 32));
        assert_eq!(bank.param_count(), expected_param_count(4, 8));

        let tiny: SoftPromptBank<f32> = SoftPromptBank::init(1, 1, 1);
        assert_eq!(tiny.param_count(), (24, 3, 1));
    }

    #[test]
    fn reparameterize_shape_is_m_by_d() {
        for (m, d) in [(1, 3), (4, 8), (6, 2)] {
            let bank: SoftPromptBank<f64> = SoftPromptBank::init(m, d, 5);
            let rows = bank.reparameterize_values();
            assert_eq!(rows.len(), m);
            assert!(rows.iter().all(|r| r.len() == d));
        }
    }

    #[test]
    fn zeroed_projection_outputs_its_bias() {
        let mut bank: SoftPromptBank<f64> = SoftPromptBank::init(3, 4, 2);
        bank.params.get_mut(MLP_W).data.fill(0.0);
        let bias = bank.params.get(MLP_B).data.clone();
        for row in bank.reparameterize_values() {
            assert_eq!(row, bias);
        }
    }

    #[test]
    fn gradients_reach_every_bank_tensor() {
        let bank: SoftPromptBank<f64> = SoftPromptBank::init(4, 6, 3);
        let mut graph = Graph::new();
        let binding = bank.params.bind(&mut graph);
        let out = bank.reparameterize(&mut graph, &binding);
        // Generic loss: weighted sum with fixed incommensurate weights.
        let weights: Vec<f64> = (0..4 * 6).map(|i| ((i * 7 + 3) as f64 * 0.61).sin() + 1.5).collect();
        let w = graph.constant(weights, 4, 6);
        let prod = graph.mul(out, w);
        let loss = graph.sum_all(prod);
        graph.backward(loss);
        for p in bank.params.iter() {
            let g = graph.grad(bank.params.var(&binding, &p.name)).unwrap();
            assert!(
                g.iter().all(|v| *v != 0.0),
                "dead parameter elements in {}",
                p.name
            );
        }
    }

    #[test]
    fn reparameterizer_matches_finite_differences() {
        use crate::tensor::gradcheck;
        let bank: SoftPromptBank<f64> = SoftPromptBank::init(2, 3, 9);
        let err = gradcheck::check(&bank.params, |g, params, binding| {
            let view = SoftPromptBank::from_params(2, 3, params.clone());
            let out = view.reparameterize(g, binding);
            let sq = g.mul(out, out);
            g.sum_all(sq)
        });
        assert!(err < 1e-4, "rel err {err}");
    }
}
