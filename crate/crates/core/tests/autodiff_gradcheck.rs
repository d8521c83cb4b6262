//! Every graph op against central finite differences, first and second order.

mod common;

use std::rc::Rc;

use common::*;
use petri_dish::autodiff::{Activation, Graph, Tensor, Var};

const H: f64 = 1e-5;
const FIRST_TOL: f64 = 1e-6;
const SECOND_TOL: f64 = 1e-4;

fn check(name: &str, build: &dyn Fn(&mut Graph<f64>, &[Var]) -> Var, inputs: &[Tensor<f64>]) {
    let e1 = first_order_error(build, inputs, H);
    assert!(e1 <= FIRST_TOL, "{name}: first-order rel. error {e1:e}");
    let e2 = second_order_error(build, inputs, H);
    assert!(e2 <= SECOND_TOL, "{name}: second-order rel. error {e2:e}");
}

fn pos(seed: u64, shape: &[usize]) -> Tensor<f64> {
    rand_tensor(&mut rng(seed), shape, 0.5, 2.0)
}

fn any(seed: u64, shape: &[usize]) -> Tensor<f64> {
    rand_tensor(&mut rng(seed), shape, -1.5, 1.5)
}

#[test]
fn matmul_all_transpose_combinations() {
    for (ta, tb) in [(false, false), (false, true), (true, false), (true, true)] {
        let a = if ta { any(1, &[4, 3]) } else { any(1, &[3, 4]) };
        let b = if tb { any(2, &[2, 4]) } else { any(2, &[4, 2]) };
        // square the result so the second derivative is non-trivial
        check(
            &format!("matmul({ta},{tb})"),
            &|g, v| {
                let m = g.matmul_t(v[0], ta, v[1], tb).unwrap();
                g.square(m)
            },
            &[a, b],
        );
    }
}

#[test]
fn elementwise_binary() {
    let a = any(3, &[2, 3]);
    let b = pos(4, &[2, 3]);
    check("add", &|g, v| { let s = g.add(v[0], v[1]).unwrap(); g.square(s) }, &[a.clone(), b.clone()]);
    check("sub", &|g, v| { let s = g.sub(v[0], v[1]).unwrap(); g.square(s) }, &[a.clone(), b.clone()]);
    check("mul", &|g, v| g.mul(v[0], v[1]).unwrap(), &[a.clone(), b.clone()]);
    check("div", &|g, v| g.div(v[0], v[1]).unwrap(), &[a, b]);
}

#[test]
fn elementwise_unary() {
    let a = any(5, &[3, 2]);
    let p = pos(6, &[3, 2]);
    check("neg", &|g, v| { let n = g.neg(v[0]); g.square(n) }, std::slice::from_ref(&a));
    check("scale", &|g, v| { let n = g.scale(v[0], -2.5); g.square(n) }, std::slice::from_ref(&a));
    check("add_const", &|g, v| { let n = g.add_const(v[0], 0.7); g.square(n) }, std::slice::from_ref(&a));
    check(
        "col_scale",
        &|g, v| {
            let n = g.col_scale(v[0], Rc::from(vec![0.3, -1.2])).unwrap();
            g.square(n)
        },
        std::slice::from_ref(&a),
    );
    check("log", &|g, v| g.log(v[0]), std::slice::from_ref(&p));
    check("exp", &|g, v| g.exp(v[0]), std::slice::from_ref(&a));
    check("sqrt", &|g, v| g.sqrt(v[0]), std::slice::from_ref(&p));
    check("square", &|g, v| g.square(v[0]), &[a]);
}

#[test]
fn activations() {
    // keep relu inputs away from the kink
    let mut a = any(7, &[3, 4]).into_data();
    for x in &mut a {
        if x.abs() < 0.1 {
            *x += 0.3;
        }
    }
    let a = Tensor::new(vec![3, 4], a).unwrap();
    for kind in Activation::ALL {
        check(kind.name(), &|g, v| g.activation(v[0], kind), std::slice::from_ref(&a));
    }
    check("sigmoid_slope", &|g, v| g.sigmoid_slope(v[0], 0.23), std::slice::from_ref(&a));
    let kinds: Rc<[Activation]> = Rc::from(Activation::ALL.to_vec());
    check(
        "column_activation",
        &|g, v| g.column_activation(v[0], kinds.clone()).unwrap(),
        &[a],
    );
}

#[test]
fn softmax_rows() {
    check("softmax", &|g, v| g.softmax(v[0]).unwrap(), &[any(8, &[3, 4])]);
}

#[test]
fn reductions_and_broadcasts() {
    let a = any(9, &[3, 4]);
    check("sum", &|g, v| { let s = g.sum(v[0]); g.square(s) }, std::slice::from_ref(&a));
    check("mean", &|g, v| { let s = g.mean(v[0]); g.square(s) }, std::slice::from_ref(&a));
    check("sum_rows", &|g, v| { let s = g.sum_rows(v[0]).unwrap(); g.square(s) }, std::slice::from_ref(&a));
    check("sum_cols", &|g, v| { let s = g.sum_cols(v[0]).unwrap(); g.square(s) }, std::slice::from_ref(&a));
    check(
        "broadcast_rows",
        &|g, v| { let s = g.broadcast_rows(v[0], 3).unwrap(); g.square(s) },
        &[any(10, &[1, 4])],
    );
    check(
        "broadcast_cols",
        &|g, v| { let s = g.broadcast_cols(v[0], 5).unwrap(); g.square(s) },
        &[any(11, &[3, 1])],
    );
    check(
        "broadcast_scalar",
        &|g, v| { let s = g.broadcast_scalar(v[0], &[2, 3]).unwrap(); g.square(s) },
        &[any(12, &[])],
    );
}

#[test]
fn structural_ops() {
    let a = any(13, &[2, 3, 4]);
    check("reshape", &|g, v| { let r = g.reshape(v[0], &[6, 4]).unwrap(); g.square(r) }, std::slice::from_ref(&a));
    check("slice", &|g, v| { let r = g.slice(v[0], 1, 1, 2).unwrap(); g.square(r) }, std::slice::from_ref(&a));
    check(
        "concat",
        &|g, v| { let r = g.concat(&[v[0], v[1]], 1).unwrap(); g.square(r) },
        &[a, any(14, &[2, 1, 4])],
    );
}

#[test]
fn block_ops() {
    let x = any(15, &[4, 3 * 2]);
    let w = any(16, &[3, 2, 5]);
    check("block_matmul", &|g, v| { let r = g.block_matmul(v[0], v[1]).unwrap(); g.square(r) }, &[x.clone(), w]);
    let gg = any(17, &[4, 3 * 5]);
    check("block_outer", &|g, v| { let r = g.block_outer(v[0], v[1], 3).unwrap(); g.square(r) }, &[x, gg]);
    check(
        "block_transpose",
        &|g, v| { let r = g.block_transpose(v[0]).unwrap(); g.square(r) },
        &[any(18, &[2, 3, 4])],
    );
}

#[test]
fn block_matmul_matches_dense_masked_product() {
    // The block product equals a dense product with a block-diagonal matrix.
    let x = any(19, &[3, 4]);
    let w = any(20, &[2, 2, 3]);
    let mut dense = vec![0.0; 4 * 6];
    for n in 0..2 {
        for i in 0..2 {
            for j in 0..3 {
                dense[(n * 2 + i) * 6 + n * 3 + j] = w.data()[n * 6 + i * 3 + j];
            }
        }
    }
    let mut g = Graph::new();
    let xv = g.constant(x);
    let wv = g.constant(w);
    let dv = g.constant(Tensor::new(vec![4, 6], dense).unwrap());
    let b = g.block_matmul(xv, wv).unwrap();
    let d = g.matmul(xv, dv).unwrap();
    for (p, q) in g.value(b).data().iter().zip(g.value(d).data()) {
        assert!((p - q).abs() < 1e-14);
    }
}

#[test]
fn composite_training_step() {
    // One SGD step of a tiny MLP, differentiated w.r.t. its input data.
    check(
        "inner_step",
        &|g, v| {
            let (x, w1, w2) = (v[0], v[1], v[2]);
            let h = g.matmul(x, w1).unwrap();
            let h = g.sigmoid_slope(h, 0.7);
            let o = g.matmul(h, w2).unwrap();
            let o = g.sigmoid(o);
            let l = g.mean(o);
            let grads = g.backward(l, &[w1, w2], true).unwrap();
            let s1 = g.scale(grads[0], 0.1);
            let w1n = g.sub(w1, s1).unwrap();
            let h = g.matmul(x, w1n).unwrap();
            let h = g.tanh(h);
            g.matmul(h, w2).unwrap()
        },
        &[any(21, &[3, 2]), any(22, &[2, 2]), any(23, &[2, 2])],
    );
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut g = Graph::new();
        let x = g.variable(any(24, &[5, 3]));
        let w = g.variable(any(25, &[3, 3]));
        let h = g.matmul(x, w).unwrap();
        let h = g.tanh(h);
        let s = g.softmax(h).unwrap();
        let l = g.sum(s);
        let dw = g.backward(l, &[w], true).unwrap()[0];
        let q = g.sum(dw);
        let dx = g.backward(q, &[x], false).unwrap()[0];
        g.value(dx).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn block_select_routes_blocks() {
    let choice: Rc<[usize]> = Rc::from(vec![1, 0, 1]);
    check(
        "block_select",
        &|g, v| {
            let r = g.block_select(&[v[0], v[1]], choice.clone()).unwrap();
            g.square(r)
        },
        &[any(26, &[2, 6]), any(27, &[2, 6])],
    );
    // a part listed twice still receives exactly the blocks that chose it
    let dup: Rc<[usize]> = Rc::from(vec![0, 1]);
    check(
        "block_select_dup",
        &|g, v| {
            let r = g.block_select(&[v[0], v[0]], dup.clone()).unwrap();
            g.square(r)
        },
        &[any(28, &[2, 4])],
    );
}
