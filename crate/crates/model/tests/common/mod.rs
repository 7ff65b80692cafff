#![allow(dead_code)]

use swinseg_model::{Bindings, Result};
use swinseg_tensor::gradcheck::rel_error;
use swinseg_tensor::rng::SeededRng;
use swinseg_tensor::{Graph, NamedParameterSet, Tensor, Var};

/// Builds a scalar loss from bound parameters and the input variable.
pub type NamedLoss<'a> = dyn Fn(&mut Graph, &NamedParameterSet, Var) -> Result<(Var, Bindings)> + 'a;

pub fn random_tensor(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn eval_loss(loss: &NamedLoss, params: &NamedParameterSet, x: &Tensor) -> f64 {
    let mut g = Graph::new();
    let xv = g.leaf(x.clone(), false).unwrap();
    let (lv, _) = loss(&mut g, params, xv).unwrap();
    g.value(lv)[0]
}

/// Central finite differences against the tape gradients for a loss over a
/// named parameter set plus one input tensor. Checks all coordinates, or a
/// seeded sample of `sample` of them. Returns the max relative error.
pub fn fd_check_named(
    loss: &NamedLoss,
    params: &NamedParameterSet,
    x: &Tensor,
    sample: Option<usize>,
    step: f64,
    seed: u64,
) -> f64 {
    // analytic pass
    let mut g = Graph::new();
    let xv = g.leaf(x.clone(), true).unwrap();
    let (lv, bindings) = loss(&mut g, params, xv).unwrap();
    g.backward(lv).unwrap();
    let mut analytic: Vec<(String, Vec<f64>)> = bindings
        .iter()
        .map(|(name, var)| {
            let grad = g
                .grad(*var)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; params.get(name).unwrap().numel()]);
            (name.clone(), grad)
        })
        .collect();
    let x_grad = g.grad(xv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.numel()]);
    analytic.push(("<input>".to_string(), x_grad));

    // coordinate list: (entry index into `analytic`, flat coordinate)
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (i, (_, grad)) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            coords.push((i, j));
        }
    }
    if let Some(n) = sample {
        let mut rng = SeededRng::new(seed);
        rng.shuffle(&mut coords);
        coords.truncate(n);
    }

    let mut worst = 0.0f64;
    for (i, j) in coords {
        let name = &analytic[i].0;
        let numeric = if name == "<input>" {
            let mut plus = x.clone();
            plus.data_mut()[j] += step;
            let mut minus = x.clone();
            minus.data_mut()[j] -= step;
            (eval_loss(loss, params, &plus) - eval_loss(loss, params, &minus)) / (2.0 * step)
        } else {
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().data_mut()[j] += step;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap().data_mut()[j] -= step;
            (eval_loss(loss, &plus, x) - eval_loss(loss, &minus, x)) / (2.0 * step)
        };
        let err = rel_error(analytic[i].1[j], numeric);
        if err > worst {
            worst = err;
        }
    }
    worst
}

/// Dot the output with fixed pseudo-random weights to form a scalar loss
/// with O(1) gradients everywhere.
pub fn weighted_sum(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(out).to_vec();
    let mut rng = SeededRng::new(seed);
    let w = random_tensor(&mut rng, &shape);
    let wv = g.constant(w)?;
    let prod = g.mul(out, wv)?;
    Ok(g.sum(prod)?)
}
