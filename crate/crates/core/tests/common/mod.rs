#![allow(dead_code)]

use petri_dish::autodiff::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| r.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Reduces any output to a scalar with fixed random weights so that one
/// backward pass checks a full vector-Jacobian product.
fn scalarize(g: &mut Graph<f64>, out: Var, seed: u64) -> Var {
    let mut r = rng(seed);
    let w = rand_tensor(&mut r, g.shape(out), -1.0, 1.0);
    let w = g.constant(w);
    let p = g.mul(out, w).unwrap();
    g.sum(p)
}

type Build<'a> = &'a dyn Fn(&mut Graph<f64>, &[Var]) -> Var;

fn eval(build: Build, inputs: &[Tensor<f64>]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &vars);
    let s = scalarize(&mut g, out, 99);
    g.item(s).unwrap()
}

/// Largest relative error between the graph gradient and central differences.
pub fn first_order_error(build: Build, inputs: &[Tensor<f64>], h: f64) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &vars);
    let s = scalarize(&mut g, out, 99);
    let grads = g.backward(s, &vars, false).unwrap();
    let mut worst: f64 = 0.0;
    for (k, t) in inputs.iter().enumerate() {
        let analytic = g.value(grads[k]).data().to_vec();
        for i in 0..t.len() {
            let bump = |d: f64| {
                let mut v = inputs.to_vec();
                let mut data = v[k].data().to_vec();
                data[i] += d;
                v[k] = Tensor::new(t.shape().to_vec(), data).unwrap();
                eval(build, &v)
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], fd, 1e-2));
        }
    }
    worst
}

/// Scalar `⟨∇f(x), r⟩` computed through a first backward pass.
fn grad_dot(build: Build, inputs: &[Tensor<f64>], create: bool) -> (Graph<f64>, Vec<Var>, Var) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &vars);
    let s = scalarize(&mut g, out, 99);
    let grads = g.backward(s, &vars, create).unwrap();
    let mut total = None;
    for (k, gv) in grads.iter().enumerate() {
        let mut r = rng(7 + k as u64);
        let w = rand_tensor(&mut r, g.shape(*gv), -1.0, 1.0);
        let w = g.constant(w);
        let p = g.mul(*gv, w).unwrap();
        let p = g.sum(p);
        total = Some(match total {
            None => p,
            Some(t) => g.add(t, p).unwrap(),
        });
    }
    let t = total.unwrap();
    (g, vars, t)
}

/// Largest relative error of second-order (double-backward) gradients.
pub fn second_order_error(build: Build, inputs: &[Tensor<f64>], h: f64) -> f64 {
    let (mut g, vars, t) = grad_dot(build, inputs, true);
    // Inputs the first gradient does not depend on (linear ops) are fine to skip.
    let mut worst: f64 = 0.0;
    for (k, tin) in inputs.iter().enumerate() {
        let analytic = match g.backward(t, &[vars[k]], false) {
            Ok(v) => g.value(v[0]).data().to_vec(),
            Err(_) => vec![0.0; tin.len()],
        };
        for i in 0..tin.len() {
            let bump = |d: f64| {
                let mut v = inputs.to_vec();
                let mut data = v[k].data().to_vec();
                data[i] += d;
                v[k] = Tensor::new(tin.shape().to_vec(), data).unwrap();
                let (g2, _, t2) = grad_dot(build, &v, false);
                g2.item(t2).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], fd, 1e-2));
        }
    }
    worst
}
