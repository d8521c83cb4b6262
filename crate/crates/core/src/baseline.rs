//! A small MLP that predicts normalized performance straight from the
//! sigmoid slope; the control the Petri dish is compared against.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{mlp_forward, mse_loss, with_l2, NetworkBlueprint, OptimizerConfig, OptimizerState, ParamSet};
use crate::petri::stream_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineHyper {
    pub hidden: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_steps: usize,
    pub l2: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub init_scale: f64,
}

impl BaselineHyper {
    /// Final settings of the published comparison.
    pub fn table3() -> Self {
        BaselineHyper {
            hidden: 10,
            lr: 0.01,
            lr_decay: 0.97,
            decay_steps: 100,
            l2: 1e-4,
            steps: 150,
            batch_size: 15,
            init_scale: 0.1,
        }
    }

    fn lr_at(&self, step: usize) -> f64 {
        self.lr * self.lr_decay.powi((step / self.decay_steps.max(1)) as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub blueprint: NetworkBlueprint,
    pub params: ParamSet<f64>,
    pub loss_history: Vec<f64>,
}

fn column(values: &[f64]) -> Tensor<f64> {
    Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap()
}

/// MSE regression of `y` on `x` with a `1 → hidden → 1` sigmoid MLP.
pub fn baseline_train(points: &[(f64, f64)], hyper: &BaselineHyper, seed: u64) -> Result<BaselineModel> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("baseline needs at least two points".into()));
    }
    let bp = NetworkBlueprint::mlp(vec![1, hyper.hidden, 1], hyper.init_scale)?;
    let mut params = ParamSet::<f64>::init(&bp, seed);
    let mut opt = OptimizerState::new(OptimizerConfig::adam(hyper.lr));
    let mut rng = stream_rng(seed, 21);
    let mut history = Vec::with_capacity(hyper.steps);
    let n = points.len();
    for step in 0..hyper.steps {
        let idx: Vec<usize> = if n <= hyper.batch_size {
            (0..n).collect()
        } else {
            let mut v = index::sample(&mut rng, n, hyper.batch_size).into_vec();
            v.sort_unstable();
            v
        };
        let xs: Vec<f64> = idx.iter().map(|&i| points[i].0).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| points[i].1).collect();
        let mut g = Graph::new();
        let x = g.constant(column(&xs));
        let y = g.constant(column(&ys));
        let vars: Vec<Var> = params.to_vars(&mut g);
        let out = mlp_forward(&mut g, &bp, &vars, x, 1.0)?;
        let loss = mse_loss(&mut g, out, y)?;
        let lv = g.item(loss)?;
        if !lv.is_finite() {
            return Err(Error::NonFiniteLoss(format!("baseline step {step}")));
        }
        history.push(lv);
        let total = with_l2(&mut g, loss, &vars, hyper.l2)?;
        let grads = g.backward(total, &vars, false)?;
        let grads: Vec<_> = grads.iter().map(|&v| g.value(v).clone()).collect();
        opt.step_with_lr(&mut params.tensors, &grads, hyper.lr_at(step))?;
    }
    Ok(BaselineModel {
        blueprint: bp,
        params,
        loss_history: history,
    })
}

/// Predicted normalized performance at slope `c`.
pub fn baseline_predict(model: &BaselineModel, c: f64) -> f64 {
    let mut g = Graph::new();
    g.set_grad_enabled(false);
    let x = g.constant(column(&[c]));
    let vars: Vec<Var> = model.params.tensors.iter().map(|t| g.constant(t.clone())).collect();
    let out = mlp_forward(&mut g, &model.blueprint, &vars, x, 1.0).expect("blueprint is 1 → h → 1");
    g.value(out).data()[0]
}
