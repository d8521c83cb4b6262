use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::motif::MotifNetwork;
use crate::nn::{with_l2, GraphOptimizer, OptimizerConfig, OptimizerState, SuperNetwork};
use crate::scalar::Scalar;

use super::hyper::{PetriHyper, SyntheticDataset};

/// Synthetic tensors registered in a graph.
#[derive(Clone, Copy, Debug)]
pub struct DataVars {
    pub x_train: Var,
    pub y_train: Var,
    pub x_valid: Var,
    pub y_valid: Var,
}

impl DataVars {
    /// Inputs as variables, labels as constants.
    pub fn register<S: Scalar>(g: &mut Graph<S>, d: &SyntheticDataset<S>) -> Self {
        DataVars {
            x_train: g.variable(d.x_train.clone()),
            y_train: g.constant(d.y_train.clone()),
            x_valid: g.variable(d.x_valid.clone()),
            y_valid: g.constant(d.y_valid.clone()),
        }
    }

    fn constants<S: Scalar>(g: &mut Graph<S>, d: &SyntheticDataset<S>) -> Self {
        DataVars {
            x_train: g.constant(d.x_train.clone()),
            y_train: g.constant(d.y_train.clone()),
            x_valid: g.constant(d.x_valid.clone()),
            y_valid: g.constant(d.y_valid.clone()),
        }
    }
}

fn optimizer(hyper: &PetriHyper) -> OptimizerConfig {
    OptimizerConfig::new(hyper.inner_optimizer, hyper.inner_lr)
}

/// Fully recorded inner loop: trains all networks together as one
/// super-network and returns their validation losses as an `(N, 1)` node
/// that is differentiable with respect to the synthetic inputs.
pub fn inner_loop_graph<S: Scalar>(
    g: &mut Graph<S>,
    nets: &[MotifNetwork<S>],
    data: DataVars,
    hyper: &PetriHyper,
) -> Result<Var> {
    let sn = SuperNetwork::build(nets)?;
    let train = sn.prepare(g, data.x_train, data.y_train)?;
    let valid = sn.prepare(g, data.x_valid, data.y_valid)?;
    let l2 = S::lit(hyper.inner_l2);
    let mut params = sn.params.to_vars(g);
    let mut opt = GraphOptimizer::new(optimizer(hyper));
    for _ in 0..hyper.inner_steps {
        let losses = sn.losses(g, &params, &train)?;
        let total = g.sum(losses);
        let total = with_l2(g, total, &params, l2)?;
        let grads = g.backward(total, &params, true)?;
        params = opt.step(g, &params, &grads)?;
    }
    sn.losses(g, &params, &valid)
}

/// Same computation as [`inner_loop_graph`] without recording the
/// trajectory; memory stays bounded by one step.
pub fn inner_loop_values<S: Scalar>(
    nets: &[MotifNetwork<S>],
    synthetic: &SyntheticDataset<S>,
    hyper: &PetriHyper,
) -> Result<Vec<S>> {
    let sn = SuperNetwork::build(nets)?;
    let l2 = S::lit(hyper.inner_l2);
    let mut params = sn.params.tensors.clone();
    let mut opt = OptimizerState::new(optimizer(hyper));
    for _ in 0..hyper.inner_steps {
        let mut g = Graph::new();
        let data = DataVars::constants(&mut g, synthetic);
        let train = sn.prepare(&mut g, data.x_train, data.y_train)?;
        let vars: Vec<Var> = params.iter().map(|t| g.variable(t.clone())).collect();
        let losses = sn.losses(&mut g, &vars, &train)?;
        let total = g.sum(losses);
        let total = with_l2(&mut g, total, &vars, l2)?;
        let grads = g.backward(total, &vars, false)?;
        let grads: Vec<_> = grads.iter().map(|&v| g.value(v).clone()).collect();
        opt.step(&mut params, &grads)?;
    }
    let mut g = Graph::new();
    g.set_grad_enabled(false);
    let data = DataVars::constants(&mut g, synthetic);
    let valid = sn.prepare(&mut g, data.x_valid, data.y_valid)?;
    let vars: Vec<Var> = params.iter().map(|t| g.constant(t.clone())).collect();
    let losses = sn.losses(&mut g, &vars, &valid)?;
    Ok(g.value(losses).data().to_vec())
}

/// Per-network validation losses after inner-loop training.
///
/// With `differentiable` the whole trajectory is recorded in a scratch graph
/// (the values are identical either way).
pub fn inner_loop<S: Scalar>(
    nets: &[MotifNetwork<S>],
    synthetic: &SyntheticDataset<S>,
    hyper: &PetriHyper,
    differentiable: bool,
) -> Result<Vec<S>> {
    if differentiable {
        let mut g = Graph::new();
        let data = DataVars::register(&mut g, synthetic);
        let v = inner_loop_graph(&mut g, nets, data, hyper)?;
        Ok(g.value(v).data().to_vec())
    } else {
        inner_loop_values(nets, synthetic, hyper)
    }
}

/// Trains each network on its own, without the super-network.
pub fn inner_loop_independent<S: Scalar>(
    nets: &[MotifNetwork<S>],
    synthetic: &SyntheticDataset<S>,
    hyper: &PetriHyper,
) -> Result<Vec<S>> {
    let l2 = S::lit(hyper.inner_l2);
    nets.iter()
        .map(|net| {
            let mut params = net.params.tensors.clone();
            let mut opt = OptimizerState::new(optimizer(hyper));
            for _ in 0..hyper.inner_steps {
                let mut g = Graph::new();
                let x = g.constant(synthetic.x_train.clone());
                let y = g.constant(synthetic.y_train.clone());
                let vars: Vec<Var> = params.iter().map(|t| g.variable(t.clone())).collect();
                let loss = net.bce(&mut g, &vars, x, y)?;
                let total = with_l2(&mut g, loss, &vars, l2)?;
                let grads = g.backward(total, &vars, false)?;
                let grads: Vec<_> = grads.iter().map(|&v| g.value(v).clone()).collect();
                opt.step(&mut params, &grads)?;
            }
            let mut g = Graph::new();
            let x = g.constant(synthetic.x_valid.clone());
            let y = g.constant(synthetic.y_valid.clone());
            let vars: Vec<Var> = params.iter().map(|t| g.constant(t.clone())).collect();
            let loss = net.bce(&mut g, &vars, x, y)?;
            let v = g.item(loss)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss(format!("{:?}", net.motif)));
            }
            Ok(v)
        })
        .collect()
}
