//! Gradient verification against central finite differences.
//!
//! [`gradient_check`] differences the graph in its own precision.
//! [`gradient_check_with_oracle`] evaluates the graph under test in one
//! precision but the difference quotient in another (typically f64): a
//! 32-bit difference quotient bottoms out at its own rounding noise around
//! 1e-3 relative for small gradient elements, so tight tolerances on 32-bit
//! graphs need the higher-precision oracle.

use crate::ad::tape::{Tape, TensorId};
use crate::ad::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub pass: bool,
    pub max_rel_err: f64,
    pub checked: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckOpts {
    /// Central-difference step.
    pub eps: f64,
    /// Per-element relative-error bound.
    pub tol: f64,
    /// When set `(n, seed)`, only `n` seeded-random coordinates per input are
    /// differenced; `None` checks every coordinate.
    pub sample_per_input: Option<(usize, u64)>,
}

impl GradCheckOpts {
    pub fn full(eps: f64, tol: f64) -> Self {
        GradCheckOpts { eps, tol, sample_per_input: None }
    }
}

fn coords_for(len: usize, input_idx: usize, opts: &GradCheckOpts) -> Vec<usize> {
    match opts.sample_per_input {
        None => (0..len).collect(),
        Some((count, seed)) => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (input_idx as u64).wrapping_mul(0x9e37_79b9));
            rand::seq::index::sample(&mut rng, len, count.min(len)).into_vec()
        }
    }
}

fn analytic_grads<T, F>(f: &F, inputs: &[Tensor<T>]) -> Result<Vec<Vec<f64>>>
where
    T: Real,
    F: Fn(&mut Tape<T>, &[TensorId]) -> Result<TensorId>,
{
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
    let loss = f(&mut tape, &ids)?;
    if tape.tensor(loss).numel() != 1 {
        return Err(Error::shape("gradient_check", "f must be scalar-valued"));
    }
    tape.backward(loss)?;
    let grads: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| tape.grad_vec(id).iter().map(|v| v.as_f64()).collect())
        .collect();
    for grad in &grads {
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient_check: analytic gradient"));
        }
    }
    Ok(grads)
}

fn numeric_check<O, FO>(
    f: &FO,
    inputs_f64: &[(Vec<usize>, Vec<f64>)],
    analytic: &[Vec<f64>],
    opts: &GradCheckOpts,
) -> Result<GradCheck>
where
    O: Real,
    FO: Fn(&mut Tape<O>, &[TensorId]) -> Result<TensorId>,
{
    let eval = |xs: &[(Vec<usize>, Vec<f64>)]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = xs
            .iter()
            .map(|(shape, vals)| {
                Tensor::<O>::from_f64(shape.clone(), vals).map(|t| tape.leaf(t, false))
            })
            .collect::<Result<_>>()?;
        let loss = f(&mut tape, &ids)?;
        if tape.tensor(loss).numel() != 1 {
            return Err(Error::shape("gradient_check", "f must be scalar-valued"));
        }
        Ok(tape.scalar_value(loss))
    };

    let mut max_rel_err = 0f64;
    let mut checked = 0usize;
    for k in 0..inputs_f64.len() {
        let n = inputs_f64[k].1.len();
        for j in coords_for(n, k, opts) {
            let base = inputs_f64[k].1[j];
            let mut plus = inputs_f64.to_vec();
            plus[k].1[j] = base + opts.eps;
            let mut minus = inputs_f64.to_vec();
            minus[k].1[j] = base - opts.eps;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * opts.eps);
            if !numeric.is_finite() {
                return Err(Error::NonFinite("gradient_check: numeric gradient"));
            }
            let a = analytic[k][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel_err {
                max_rel_err = rel;
            }
            checked += 1;
        }
    }
    Ok(GradCheck { pass: max_rel_err <= opts.tol, max_rel_err, checked })
}

/// Compare the tape's reverse-mode gradient of the scalar `f(inputs)` against
/// central differences in the same precision. The relative error per element
/// uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check<T, F>(f: F, inputs: &[Tensor<T>], opts: &GradCheckOpts) -> Result<GradCheck>
where
    T: Real,
    F: Fn(&mut Tape<T>, &[TensorId]) -> Result<TensorId>,
{
    let analytic = analytic_grads(&f, inputs)?;
    let inputs_f64: Vec<(Vec<usize>, Vec<f64>)> =
        inputs.iter().map(|x| (x.shape().to_vec(), x.to_f64_vec())).collect();
    numeric_check::<T, F>(&f, &inputs_f64, &analytic, opts)
}

/// Check a graph built in precision `T` against a finite-difference oracle
/// running the same construction in precision `O`. Inputs are supplied in
/// f64 and rounded into each precision.
pub fn gradient_check_with_oracle<T, O, FT, FO>(
    f_impl: FT,
    f_oracle: FO,
    inputs: &[(Vec<usize>, Vec<f64>)],
    opts: &GradCheckOpts,
) -> Result<GradCheck>
where
    T: Real,
    O: Real,
    FT: Fn(&mut Tape<T>, &[TensorId]) -> Result<TensorId>,
    FO: Fn(&mut Tape<O>, &[TensorId]) -> Result<TensorId>,
{
    let typed: Vec<Tensor<T>> = inputs
        .iter()
        .map(|(shape, vals)| Tensor::from_f64(shape.clone(), vals))
        .collect::<Result<_>>()?;
    let analytic = analytic_grads(&f_impl, &typed)?;
    numeric_check::<O, FO>(&f_oracle, inputs, &analytic, opts)
}
