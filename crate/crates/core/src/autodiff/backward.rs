use std::rc::Rc;

use super::graph::{ActSpec, Graph, Op, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

impl<S: Scalar> Graph<S> {
    /// Gradients of the one-element `root` with respect to each of `wrt`.
    ///
    /// Every rule is emitted as ordinary graph operations. With `create_graph`
    /// the returned gradients are differentiable nodes; otherwise they are
    /// constants.
    pub fn backward(&mut self, root: Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
        if self.value(root).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be scalar, shape is {:?}", self.shape(root)),
            ));
        }
        let n = root.0 + 1;
        let mut relevant = vec![false; n];
        for w in wrt {
            if w.0 < n && self.nodes[w.0].requires_grad {
                relevant[w.0] = true;
            }
        }
        for id in 0..n {
            if !relevant[id] && self.nodes[id].requires_grad {
                relevant[id] = self.nodes[id].op.inputs().iter().any(|&i| relevant[i]);
            }
        }

        let prev = self.set_grad_enabled(create_graph);
        let result = self.propagate(root, &relevant);
        self.set_grad_enabled(prev);
        let grads = result?;

        wrt.iter()
            .map(|w| {
                grads
                    .get(w.0)
                    .copied()
                    .flatten()
                    .ok_or(Error::Disconnected(w.0))
            })
            .collect()
    }

    fn propagate(&mut self, root: Var, relevant: &[bool]) -> Result<Vec<Option<Var>>> {
        let n = root.0 + 1;
        let mut grads: Vec<Option<Var>> = vec![None; n];
        if !relevant[root.0] {
            return Ok(grads);
        }
        let seed = Tensor::full(self.shape(root), S::one());
        grads[root.0] = Some(self.constant(seed));

        for id in (0..n).rev() {
            if !relevant[id] {
                continue;
            }
            let Some(g) = grads[id] else { continue };
            let op = self.nodes[id].op.clone();
            if matches!(op, Op::Leaf) {
                continue;
            }
            for (input, dg) in self.vjp(Var(id), &op, g, relevant)? {
                grads[input] = Some(match grads[input] {
                    None => dg,
                    Some(prev) => self.add(prev, dg)?,
                });
            }
        }
        Ok(grads)
    }

    /// Vector-Jacobian product of one node, restricted to relevant inputs.
    fn vjp(&mut self, out: Var, op: &Op<S>, g: Var, relevant: &[bool]) -> Result<Vec<(usize, Var)>> {
        let want = |i: usize| relevant[i];
        let mut res = Vec::with_capacity(2);
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (a, b, ta, tb) = (Var(*a), Var(*b), *ta, *tb);
                if want(a.0) {
                    let da = match (ta, tb) {
                        (false, false) => self.matmul_t(g, false, b, true)?,
                        (false, true) => self.matmul_t(g, false, b, false)?,
                        (true, false) => self.matmul_t(b, false, g, true)?,
                        (true, true) => self.matmul_t(b, true, g, true)?,
                    };
                    res.push((a.0, da));
                }
                if want(b.0) {
                    let db = match (ta, tb) {
                        (false, false) => self.matmul_t(a, true, g, false)?,
                        (false, true) => self.matmul_t(g, true, a, false)?,
                        (true, false) => self.matmul_t(a, false, g, false)?,
                        (true, true) => self.matmul_t(g, true, a, true)?,
                    };
                    res.push((b.0, db));
                }
            }
            Op::Add(a, b) => {
                if want(*a) {
                    res.push((*a, g));
                }
                if want(*b) {
                    res.push((*b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    res.push((*a, g));
                }
                if want(*b) {
                    let d = self.neg(g);
                    res.push((*b, d));
                }
            }
            Op::Mul(a, b) => {
                if want(*a) {
                    let d = self.mul(g, Var(*b))?;
                    res.push((*a, d));
                }
                if want(*b) {
                    let d = self.mul(g, Var(*a))?;
                    res.push((*b, d));
                }
            }
            Op::Div(a, b) => {
                if want(*a) {
                    let d = self.div(g, Var(*b))?;
                    res.push((*a, d));
                }
                if want(*b) {
                    let gy = self.mul(g, out)?;
                    let q = self.div(gy, Var(*b))?;
                    let d = self.neg(q);
                    res.push((*b, d));
                }
            }
            Op::Neg(a) => {
                let d = self.neg(g);
                res.push((*a, d));
            }
            Op::Scale(a, k) => {
                let d = self.scale(g, *k);
                res.push((*a, d));
            }
            Op::AddConst(a, _) => res.push((*a, g)),
            Op::ColScale(a, f) => {
                let d = self.col_scale(g, f.clone())?;
                res.push((*a, d));
            }
            Op::Act(a, spec) => {
                let dy = self.act_deriv(out, spec.clone());
                let d = self.mul(g, dy)?;
                res.push((*a, d));
            }
            Op::ActDeriv(y, spec) => {
                let d2 = self.act_deriv2(Var(*y), spec.clone());
                let d = self.mul(g, d2)?;
                res.push((*y, d));
            }
            Op::ActDeriv2(y, spec) => {
                let d = match spec {
                    ActSpec::Uniform(kind) => self.scale(g, kind.deriv3_const()),
                    ActSpec::PerColumn(kinds) => {
                        let f: Rc<[S]> = kinds.iter().map(|k| k.deriv3_const()).collect();
                        self.col_scale(g, f)?
                    }
                };
                res.push((*y, d));
            }
            Op::Log(a) => {
                let d = self.div(g, Var(*a))?;
                res.push((*a, d));
            }
            Op::Exp(a) => {
                let d = self.mul(g, out)?;
                res.push((*a, d));
            }
            Op::Sqrt(a) => {
                let two_y = self.scale(out, S::lit(2.0));
                let d = self.div(g, two_y)?;
                res.push((*a, d));
            }
            Op::Square(a) => {
                let two_x = self.scale(Var(*a), S::lit(2.0));
                let d = self.mul(g, two_x)?;
                res.push((*a, d));
            }
            Op::Softmax(a) => {
                // y ⊙ (g − rowsum(g ⊙ y))
                let cols = self.shape(out)[1];
                let gy = self.mul(g, out)?;
                let s = self.sum_cols(gy)?;
                let sb = self.broadcast_cols(s, cols)?;
                let diff = self.sub(g, sb)?;
                let d = self.mul(out, diff)?;
                res.push((*a, d));
            }
            Op::Sum(a) => {
                let shape = self.shape(Var(*a)).to_vec();
                let d = self.broadcast_scalar(g, &shape)?;
                res.push((*a, d));
            }
            Op::Mean(a) => {
                let shape = self.shape(Var(*a)).to_vec();
                let n = S::from_usize(self.value(Var(*a)).len()).unwrap();
                let b = self.broadcast_scalar(g, &shape)?;
                let d = self.scale(b, S::one() / n);
                res.push((*a, d));
            }
            Op::SumRows(a) => {
                let rows = self.shape(Var(*a))[0];
                let d = self.broadcast_rows(g, rows)?;
                res.push((*a, d));
            }
            Op::BroadcastRows(a) => {
                let d = self.sum_rows(g)?;
                res.push((*a, d));
            }
            Op::SumCols(a) => {
                let cols = self.shape(Var(*a))[1];
                let d = self.broadcast_cols(g, cols)?;
                res.push((*a, d));
            }
            Op::BroadcastCols(a) => {
                let d = self.sum_cols(g)?;
                res.push((*a, d));
            }
            Op::BroadcastScalar(a) => {
                let shape = self.shape(Var(*a)).to_vec();
                let s = self.sum(g);
                let d = self.reshape(s, &shape)?;
                res.push((*a, d));
            }
            Op::Reshape(a) => {
                let shape = self.shape(Var(*a)).to_vec();
                let d = self.reshape(g, &shape)?;
                res.push((*a, d));
            }
            Op::Concat(parts, axis) => {
                let mut start = 0;
                for &p in parts {
                    let len = self.shape(Var(p))[*axis];
                    if want(p) {
                        let d = self.slice(g, *axis, start, len)?;
                        res.push((p, d));
                    }
                    start += len;
                }
            }
            Op::Slice { input, axis, start } => {
                let full = self.shape(Var(*input))[*axis];
                let d = self.slice_adjoint(g, *axis, *start, full);
                res.push((*input, d));
            }
            Op::SliceAdjoint { input, axis, start } => {
                let len = self.shape(Var(*input))[*axis];
                let d = self.slice(g, *axis, *start, len)?;
                res.push((*input, d));
            }
            Op::BlockMatMul(x, w) => {
                let (x, w) = (Var(*x), Var(*w));
                if want(x.0) {
                    let wt = self.block_transpose(w)?;
                    let d = self.block_matmul(g, wt)?;
                    res.push((x.0, d));
                }
                if want(w.0) {
                    let blocks = self.shape(w)[0];
                    let d = self.block_outer(x, g, blocks)?;
                    res.push((w.0, d));
                }
            }
            Op::BlockOuter(x, gg) => {
                let (x, gg) = (Var(*x), Var(*gg));
                if want(x.0) {
                    let ut = self.block_transpose(g)?;
                    let d = self.block_matmul(gg, ut)?;
                    res.push((x.0, d));
                }
                if want(gg.0) {
                    let d = self.block_matmul(x, g)?;
                    res.push((gg.0, d));
                }
            }
            Op::BlockSelect(parts, choice) => {
                let cols = self.shape(out)[1];
                let w = cols / choice.len();
                for &p in parts.iter() {
                    if !want(p) || res.iter().any(|(i, _)| *i == p) {
                        continue;
                    }
                    // a part may appear more than once in `parts`
                    let mask: Rc<[S]> = (0..cols)
                        .map(|j| {
                            if parts[choice[j / w]] == p {
                                S::one()
                            } else {
                                S::zero()
                            }
                        })
                        .collect();
                    let d = self.col_scale(g, mask)?;
                    res.push((p, d));
                }
            }
            Op::BlockTranspose(w) => {
                let d = self.block_transpose(g)?;
                res.push((*w, d));
            }
        }
        res.retain(|(i, _)| want(*i));
        Ok(res)
    }
}
