//! Central finite-difference checks of analytic gradients.

use std::any::Any;

use crate::autograd::{Graph, Real, Tensor, Var};
use crate::error::{bail, Result};

/// A scalar function of several tensors, buildable at any precision.
pub trait ScalarFn {
    fn eval<T: Real>(&self, g: &mut Graph<T>, inputs: &[Var]) -> Result<Var>;
}

/// Adapter for plain closures over `f64` graphs.
pub struct F64Fn<F>(pub F);

impl<F> ScalarFn for F64Fn<F>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    fn eval<T: Real>(&self, g: &mut Graph<T>, inputs: &[Var]) -> Result<Var> {
        match (g as &mut dyn Any).downcast_mut::<Graph<f64>>() {
            Some(g) => (self.0)(g, inputs),
            None => bail!(Contract, "closure-based function only runs in f64"),
        }
    }
}

fn evaluate<T: Real, F: ScalarFn>(f: &F, inputs: &[Tensor<T>]) -> Result<f64> {
    let mut g = Graph::<T>::new();
    let vars = inputs
        .iter()
        .map(|t| g.constant(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f.eval(&mut g, &vars)?;
    Ok(g.value(out).sum_f64())
}

/// Analytic gradients of `f` at `inputs`.
pub fn analytic_gradients<T: Real, F: ScalarFn>(f: &F, inputs: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
    let mut g = Graph::<T>::new();
    let vars = inputs
        .iter()
        .map(|t| g.param(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f.eval(&mut g, &vars)?;
    let mut grads = g.backward(out)?;
    Ok(vars
        .iter()
        .map(|&v| grads.take(v).expect("every input is a leaf"))
        .collect())
}

/// Central differences of `f` at `inputs`, evaluated at precision `T`.
pub fn numeric_gradients<T: Real, F: ScalarFn>(f: &F, inputs: &[Tensor<T>], eps: f64) -> Result<Vec<Tensor<f64>>> {
    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Tensor::<f64>::zeros(inputs[k].shape());
        for j in 0..inputs[k].len() {
            let orig = work[k].data()[j];
            work[k].data_mut()[j] = T::from_f64_lossy(orig.as_f64() + eps);
            let plus = evaluate(f, &work)?;
            work[k].data_mut()[j] = T::from_f64_lossy(orig.as_f64() - eps);
            let minus = evaluate(f, &work)?;
            work[k].data_mut()[j] = orig;
            g.data_mut()[j] = (plus - minus) / (2.0 * eps);
        }
        out.push(g);
    }
    Ok(out)
}

/// Max over coordinates of `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn max_relative_error<T: Real>(analytic: &[Tensor<T>], numeric: &[Tensor<f64>]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(a, &n)| {
            let a = a.as_f64();
            (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
        })
        .fold(0.0, f64::max)
}

/// Compares analytic gradients with central differences, both at precision `T`.
pub fn grad_check<T: Real, F: ScalarFn>(f: &F, inputs: &[Tensor<T>], eps: f64) -> Result<f64> {
    assert!(eps > 0.0, "eps must be positive");
    let analytic = analytic_gradients(f, inputs)?;
    let numeric = numeric_gradients(f, inputs, eps)?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// Single-precision analytic gradients checked against double-precision
/// central differences of the same function at the same point.
pub fn grad_check_f32<F: ScalarFn>(f: &F, inputs: &[Tensor<f32>], eps: f64) -> Result<f64> {
    assert!(eps > 0.0, "eps must be positive");
    let analytic = analytic_gradients(f, inputs)?;
    let wide: Vec<Tensor<f64>> = inputs.iter().map(Tensor::cast).collect();
    let numeric = numeric_gradients(f, &wide, eps)?;
    Ok(max_relative_error(&analytic, &numeric))
}
