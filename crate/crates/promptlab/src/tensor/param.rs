//! Long-lived trainable parameters and the Adam optimizer.
//!
//! Graphs are rebuilt every step, so weights live outside them in a
//! [`ParamGroup`]: named tensors plus per-tensor Adam moments and a shared
//! step counter. [`ParamGroup::bind`] copies the current values into a graph
//! as trainable leaves; after `backward`, [`ParamGroup::harvest`] pulls the
//! leaf gradients back (accumulating, so micro-batches can sum), and
//! [`ParamGroup::adam_step`] applies the update and clears the gradients.

use std::collections::HashMap;

use super::{Graph, Scalar, Var};

/// One named trainable tensor with an optional gradient buffer.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    pub grad: Option<Vec<T>>,
}

/// Named trainable tensors with Adam state (first/second moments per
/// tensor) and a step counter. Names are unique within a group.
#[derive(Debug, Clone)]
pub struct ParamGroup<T> {
    params: Vec<Parameter<T>>,
    index: HashMap<String, usize>,
    moment1: Vec<Vec<T>>,
    moment2: Vec<Vec<T>>,
    pub step: u64,
}

/// Graph leaves for one bound group, index-aligned with the group's
/// parameters.
pub struct Binding {
    vars: Vec<Var>,
}

pub(crate) const ADAM_BETA1: f64 = 0.9;
pub(crate) const ADAM_BETA2: f64 = 0.999;
pub(crate) const ADAM_EPS: f64 = 1e-8;

impl<T: Scalar> Default for ParamGroup<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamGroup<T> {
    pub fn new() -> Self {
        ParamGroup {
            params: Vec::new(),
            index: HashMap::new(),
            moment1: Vec::new(),
            moment2: Vec::new(),
            step: 0,
        }
    }

    /// Registers a tensor. Panics on duplicate names or size mismatch.
    pub fn add(&mut self, name: &str, data: Vec<T>, rows: usize, cols: usize) {
        assert_eq!(
            data.len(),
            rows * cols,
            "param {name}: {} values do not fill shape {rows}x{cols}",
            data.len()
        );
        assert!(
            !self.index.contains_key(name),
            "param {name}: duplicate name in group"
        );
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            rows,
            cols,
            data,
            grad: None,
        });
        self.moment1.push(Vec::new());
        self.moment2.push(Vec::new());
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of stored values across all tensors.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn get(&self, name: &str) -> &Parameter<T> {
        let &i = self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("param {name}: not in group"));
        &self.params[i]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Parameter<T> {
        let &i = self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("param {name}: not in group"));
        &mut self.params[i]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Tensors in registration order.
    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    /// Copies all tensors into `graph` as trainable leaves.
    pub fn bind(&self, graph: &mut Graph<T>) -> Binding {
        let vars = self
            .params
            .iter()
            .map(|p| graph.tensor(p.data.clone(), p.rows, p.cols, true))
            .collect();
        Binding { vars }
    }

    /// The bound leaf for `name`.
    pub fn var(&self, binding: &Binding, name: &str) -> Var {
        let &i = self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("param {name}: not in group"));
        binding.vars[i]
    }

    /// Accumulates `scale ×` the bound leaves' gradients into this group.
    /// Leaves the graph untouched; call after `backward`.
    pub fn harvest(&mut self, graph: &Graph<T>, binding: &Binding, scale: T) {
        for (p, &v) in self.params.iter_mut().zip(&binding.vars) {
            let Some(g) = graph.grad(v) else { continue };
            let dst = p.grad.get_or_insert_with(|| vec![T::zero(); p.data.len()]);
            for (a, &b) in dst.iter_mut().zip(g) {
                *a += b * scale;
            }
        }
    }

    /// Accumulates raw per-tensor gradient vectors (registration order),
    /// as produced by [`ParamGroup::take_grads`] on a worker copy.
    pub fn accumulate(&mut self, grads: &[Vec<T>], scale: T) {
        assert_eq!(grads.len(), self.params.len(), "accumulate: group size mismatch");
        for (p, g) in self.params.iter_mut().zip(grads) {
            let dst = p.grad.get_or_insert_with(|| vec![T::zero(); p.data.len()]);
            for (a, &b) in dst.iter_mut().zip(g) {
                *a += b * scale;
            }
        }
    }

    /// Extracts the bound leaves' gradients in registration order, zeros
    /// for unreached tensors.
    pub fn extract_grads(&self, graph: &Graph<T>, binding: &Binding) -> Vec<Vec<T>> {
        self.params
            .iter()
            .zip(&binding.vars)
            .map(|(p, &v)| {
                graph
                    .grad(v)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![T::zero(); p.data.len()])
            })
            .collect()
    }

    /// One Adam update (β₁ = 0.9, β₂ = 0.999, ε = 1e-8, bias correction)
    /// over every tensor, then clears all gradients. Panics, naming the
    /// tensor, if any gradient is missing.
    pub fn adam_step(&mut self, lr: T) {
        for p in &self.params {
            assert!(
                p.grad.is_some(),
                "adam_step: missing grad on trainable tensor {}",
                p.name
            );
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64c(ADAM_BETA1);
        let b2 = T::from_f64c(ADAM_BETA2);
        let eps = T::from_f64c(ADAM_EPS);
        let one = T::one();
        let corr1 = one - b1.powi(t);
        let corr2 = one - b2.powi(t);
        for (i, p) in self.params.iter_mut().enumerate() {
            let g = p.grad.take().expect("checked above");
            if self.moment1[i].is_empty() {
                self.moment1[i] = vec![T::zero(); p.data.len()];
                self.moment2[i] = vec![T::zero(); p.data.len()];
            }
            let m = &mut self.moment1[i];
            let v = &mut self.moment2[i];
            for j in 0..p.data.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let m_hat = m[j] / corr1;
                let v_hat = v[j] / corr2;
                p.data[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Same tensors converted element-wise (e.g. `f32` weights to an `f64`
    /// graph for gradient checks). Optimizer state is not carried over.
    pub fn cast<U: Scalar>(&self) -> ParamGroup<U> {
        let mut out = ParamGroup::new();
        for p in &self.params {
            let data = p
                .data
                .iter()
                .map(|&v| U::from_f64c(v.to_f64().expect("finite")))
                .collect();
            out.add(&p.name, data, p.rows, p.cols);
        }
        out
    }
}
