//! Central finite-difference gradient checking.
//!
//! A check rebuilds the computation twice per perturbed coordinate, so it is
//! intended for small shapes (or a sampled subset of coordinates).

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Builds a scalar loss from leaf variables created for `inputs`, in order.
pub trait LossBuilder {
    fn build(&self, g: &mut Graph, vars: &[Var]) -> Result<Var>;
}

impl<F> LossBuilder for F
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    fn build(&self, g: &mut Graph, vars: &[Var]) -> Result<Var> {
        self(g, vars)
    }
}

/// Relative error with a floored denominator: gradients below 1e-3 in
/// magnitude are compared absolutely (to 1e-7 at the usual 1e-4 bound),
/// which keeps central-difference roundoff from swamping tiny coordinates.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn eval(builder: &impl LossBuilder, inputs: &[Tensor]) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.leaf(t.clone(), false))
        .collect::<Result<_>>()?;
    let loss = builder.build(&mut g, &vars)?;
    Ok(g.value(loss)[0])
}

fn analytic_grads(builder: &impl LossBuilder, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.leaf(t.clone(), true))
        .collect::<Result<_>>()?;
    let loss = builder.build(&mut g, &vars)?;
    g.backward(loss)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect())
}

/// Checks every coordinate of every input. Returns the max relative error
/// between the analytic gradient and central differences with `step`.
pub fn check_all(builder: &impl LossBuilder, inputs: &[Tensor], step: f64) -> Result<f64> {
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j)))
        .collect();
    check_coords(builder, inputs, &coords, step)
}

/// Checks only the given `(input index, flat coordinate)` pairs.
pub fn check_coords(
    builder: &impl LossBuilder,
    inputs: &[Tensor],
    coords: &[(usize, usize)],
    step: f64,
) -> Result<f64> {
    let grads = analytic_grads(builder, inputs)?;
    let mut worst = 0.0f64;
    for &(i, j) in coords {
        let mut plus = inputs.to_vec();
        plus[i].data_mut()[j] += step;
        let mut minus = inputs.to_vec();
        minus[i].data_mut()[j] -= step;
        let numeric = (eval(builder, &plus)? - eval(builder, &minus)?) / (2.0 * step);
        worst = worst.max(rel_error(grads[i][j], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_loss_grad_is_two_x() {
        // loss = sum(x^2) at x = [1, 2] has gradient [2, 4]
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let build = |g: &mut Graph, vars: &[Var]| {
            let sq = g.mul(vars[0], vars[0])?;
            g.sum(sq)
        };
        let mut g = Graph::new();
        let v = g.leaf(x.clone(), true).unwrap();
        let loss = build(&mut g, &[v]).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(v).unwrap(), &[2.0, 4.0]);

        let err = check_all(&build, &[x], 1e-5).unwrap();
        assert!(err < 1e-8, "relative error {}", err);
    }
}
