use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            ..Self::sgd(lr)
        }
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        OptimizerConfig { kind, ..Self::sgd(lr) }
    }
}

/// One update of `theta` given `grad`, as graph operations.
///
/// Adam: `θ ← θ − lr·m̂ / √(v̂ + ε)` with bias-corrected moments.
/// Returns the new `(θ, m, v)`; `m` and `v` pass through untouched for SGD.
#[allow(clippy::too_many_arguments)]
fn update<S: Scalar>(
    g: &mut Graph<S>,
    cfg: &OptimizerConfig,
    lr: f64,
    t: u64,
    theta: Var,
    grad: Var,
    m: Var,
    v: Var,
) -> Result<(Var, Var, Var)> {
    if g.shape(theta) != g.shape(grad) {
        return Err(Error::shape(
            "optimizer_step",
            format!("param {:?} vs grad {:?}", g.shape(theta), g.shape(grad)),
        ));
    }
    match cfg.kind {
        OptimizerKind::Sgd => {
            let step = g.scale(grad, S::lit(lr));
            Ok((g.sub(theta, step)?, m, v))
        }
        OptimizerKind::Adam => {
            let (b1, b2) = (cfg.beta1, cfg.beta2);
            let m1 = g.scale(m, S::lit(b1));
            let m2 = g.scale(grad, S::lit(1.0 - b1));
            let m = g.add(m1, m2)?;
            let v1 = g.scale(v, S::lit(b2));
            let g2 = g.square(grad);
            let v2 = g.scale(g2, S::lit(1.0 - b2));
            let v = g.add(v1, v2)?;
            let ti = t as i32;
            let mhat = g.scale(m, S::lit(lr / (1.0 - b1.powi(ti))));
            let vhat = g.scale(v, S::lit(1.0 / (1.0 - b2.powi(ti))));
            let vhat = g.add_const(vhat, S::lit(cfg.eps));
            let den = g.sqrt(vhat);
            let step = g.div(mhat, den)?;
            Ok((g.sub(theta, step)?, m, v))
        }
    }
}

/// Optimizer whose state and updates live in a graph, so new parameters are
/// differentiable functions of the gradients (and of whatever produced them).
#[derive(Clone, Debug)]
pub struct GraphOptimizer {
    pub config: OptimizerConfig,
    t: u64,
    m: Vec<Var>,
    v: Vec<Var>,
}

impl GraphOptimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        GraphOptimizer {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<S: Scalar>(&mut self, g: &mut Graph<S>, params: &[Var], grads: &[Var]) -> Result<Vec<Var>> {
        self.step_with_lr(g, params, grads, self.config.lr)
    }

    pub fn step_with_lr<S: Scalar>(
        &mut self,
        g: &mut Graph<S>,
        params: &[Var],
        grads: &[Var],
        lr: f64,
    ) -> Result<Vec<Var>> {
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch(params.len(), grads.len()));
        }
        if self.m.is_empty() {
            for &p in params {
                let z = Tensor::zeros(g.shape(p));
                self.m.push(g.constant(z.clone()));
                self.v.push(g.constant(z));
            }
        }
        if self.m.len() != params.len() {
            return Err(Error::LengthMismatch(self.m.len(), params.len()));
        }
        self.t += 1;
        let mut out = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let (p, m, v) = update(g, &self.config, lr, self.t, params[i], grads[i], self.m[i], self.v[i])?;
            self.m[i] = m;
            self.v[i] = v;
            out.push(p);
        }
        Ok(out)
    }
}

/// Plain optimizer over tensors. Uses the same update arithmetic as
/// [`GraphOptimizer`], so both produce identical parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct OptimizerState<S> {
    pub config: OptimizerConfig,
    pub t: u64,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(config: OptimizerConfig) -> Self {
        OptimizerState {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [Tensor<S>], grads: &[Tensor<S>]) -> Result<()> {
        self.step_with_lr(params, grads, self.config.lr)
    }

    pub fn step_with_lr(&mut self, params: &mut [Tensor<S>], grads: &[Tensor<S>], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch(params.len(), grads.len()));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        for i in 0..params.len() {
            let theta = g.constant(params[i].clone());
            let grad = g.constant(grads[i].clone());
            let m = g.constant(std::mem::replace(&mut self.m[i], Tensor::zeros(&[])));
            let v = g.constant(std::mem::replace(&mut self.v[i], Tensor::zeros(&[])));
            let (p, m, v) = update(&mut g, &self.config, lr, self.t, theta, grad, m, v)?;
            params[i] = g.value(p).clone();
            self.m[i] = g.value(m).clone();
            self.v[i] = g.value(v).clone();
        }
        Ok(())
    }
}
