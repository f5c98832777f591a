//! Central-finite-difference gradient oracle.
//!
//! Used by tests to verify the backward pass: it evaluates the loss twice
//! per perturbed element and never touches recorded gradients, so it stays
//! independent of the code it checks. Run it on `f64` graphs; at `f32` the
//! difference quotient drowns in rounding error.

use super::{Binding, Graph, ParamGroup, Scalar, Var};

/// Builds a scalar loss from freshly bound parameters. Called many times
/// with perturbed values, so it must be deterministic.
pub trait LossFn<T: Scalar>: Fn(&mut Graph<T>, &ParamGroup<T>, &Binding) -> Var {}
impl<T: Scalar, F: Fn(&mut Graph<T>, &ParamGroup<T>, &Binding) -> Var> LossFn<T> for F {}

/// Gradients of `build`'s loss for every tensor in `group`, via central
/// differences with step `h`. Output is index-aligned with the group.
pub fn numerical_grads<T: Scalar>(
    group: &ParamGroup<T>,
    h: f64,
    build: impl LossFn<T>,
) -> Vec<Vec<T>> {
    let eval = |group: &ParamGroup<T>| -> T {
        let mut g = Graph::new();
        let binding = group.bind(&mut g);
        let loss = build(&mut g, group, &binding);
        g.value(loss)
    };
    let hh = T::from_f64c(h);
    let two_h = T::from_f64c(2.0 * h);
    let names: Vec<String> = group.iter().map(|p| p.name.clone()).collect();
    names
        .iter()
        .map(|name| {
            let n = group.get(name).data.len();
            (0..n)
                .map(|j| {
                    let mut plus = group.clone();
                    plus.get_mut(name).data[j] += hh;
                    let mut minus = group.clone();
                    minus.get_mut(name).data[j] -= hh;
                    (eval(&plus) - eval(&minus)) / two_h
                })
                .collect()
        })
        .collect()
}

/// Analytic gradients via one forward/backward, index-aligned with the
/// group.
pub fn analytic_grads<T: Scalar>(group: &ParamGroup<T>, build: impl LossFn<T>) -> Vec<Vec<T>> {
    let mut g = Graph::new();
    let binding = group.bind(&mut g);
    let loss = build(&mut g, group, &binding);
    g.backward(loss);
    group.extract_grads(&g, &binding)
}

/// Worst relative error between two gradient sets. The denominator is
/// floored at 1e-2 so near-zero entries are judged on absolute error.
pub fn max_rel_error<T: Scalar>(analytic: &[Vec<T>], numeric: &[Vec<T>]) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.len(), n.len(), "gradient length mismatch");
        for (&x, &y) in a.iter().zip(n) {
            let x = x.to_f64().unwrap();
            let y = y.to_f64().unwrap();
            let denom = x.abs().max(y.abs()).max(1e-2);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

/// Checks analytic against central differences (`h = 1e-3`) and returns
/// the worst relative error.
pub fn check<T: Scalar>(group: &ParamGroup<T>, build: impl LossFn<T>) -> f64 {
    let analytic = analytic_grads(group, &build);
    let numeric = numerical_grads(group, 1e-3, &build);
    max_rel_error(&analytic, &numeric)
}
