use std::rc::Rc;

use crate::autodiff::{Activation, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::motif::{common_variant, Motif, MotifNetwork, CELL_NODES};
use crate::scalar::Scalar;

use super::loss::bce_logits_elementwise;
use super::params::{NetworkBlueprint, NetworkKind, ParamSet};

/// Column metadata for one cell node across all member networks.
#[derive(Clone, Debug)]
struct NodeColumns<S> {
    acts: Rc<[Activation]>,
    uniform_act: Option<Activation>,
    /// Predecessor of this node in each member network.
    choice: Rc<[usize]>,
    /// `1/k` on columns where the node is one of `k` loose ends, else 0.
    loose_weight: Option<Rc<[S]>>,
}

/// Motif-networks packed side by side.
///
/// Weights are stacked `(N, p, q)` and applied block-diagonally, biases are
/// concatenated, and every activation acts per column block. No value or
/// gradient crosses a block boundary, so training the packed network is
/// training each member independently.
#[derive(Clone, Debug)]
pub struct SuperNetwork<S> {
    pub blueprint: NetworkBlueprint,
    pub motifs: Vec<Motif>,
    pub params: ParamSet<S>,
    slopes: Vec<Rc<[S]>>,
    nodes: Vec<NodeColumns<S>>,
}

/// Inputs tiled once per member network and targets tiled per step.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub inputs: Vec<Var>,
    pub targets: Vec<Var>,
    /// Elements per member network, for the mean.
    pub count: usize,
}

impl<S: Scalar> SuperNetwork<S> {
    pub fn build(nets: &[MotifNetwork<S>]) -> Result<Self> {
        let first = nets
            .first()
            .ok_or_else(|| Error::InvalidArgument("no motif-networks".into()))?;
        if nets.iter().any(|n| n.blueprint != first.blueprint) {
            return Err(Error::HeterogeneousBlueprints);
        }
        if nets.iter().any(|n| n.params.names != first.params.names) {
            return Err(Error::HeterogeneousBlueprints);
        }
        let motifs: Vec<Motif> = nets.iter().map(|n| n.motif.clone()).collect();
        common_variant(&motifs)?;
        let bp = first.blueprint.clone();
        let n = nets.len();

        let mut tensors = Vec::with_capacity(first.params.len());
        for (i, name) in first.params.names.iter().enumerate() {
            let parts: Vec<&Tensor<S>> = nets.iter().map(|m| &m.params.tensors[i]).collect();
            tensors.push(if name.starts_with('b') {
                concat_cols(&parts)
            } else {
                stack(&parts)
            });
        }
        let params = ParamSet {
            names: first.params.names.clone(),
            tensors,
            init_seed: first.params.init_seed,
        };

        let mut slopes = Vec::new();
        let mut nodes = Vec::new();
        match bp.kind {
            NetworkKind::Mlp => {
                let cs: Vec<S> = motifs
                    .iter()
                    .map(|m| m.as_slope().map(S::lit).ok_or(Error::MixedVariants))
                    .collect::<Result<_>>()?;
                for &w in &bp.layer_sizes[1..bp.layer_sizes.len() - 1] {
                    slopes.push(repeat_blocks(&cs, w));
                }
            }
            NetworkKind::RecurrentCellLm => {
                let encs: Vec<_> = motifs
                    .iter()
                    .map(|m| m.as_cell().ok_or(Error::MixedVariants))
                    .collect::<Result<_>>()?;
                let w = bp.layer_sizes[1];
                let loose: Vec<Vec<usize>> = encs.iter().map(|e| e.loose_ends()).collect();
                for i in 0..CELL_NODES {
                    let per: Vec<Activation> = encs.iter().map(|e| e.nodes()[i].act).collect();
                    let uniform_act = per.iter().all(|&a| a == per[0]).then_some(per[0]);
                    let weights: Vec<S> = loose
                        .iter()
                        .map(|l| {
                            if l.contains(&i) {
                                S::one() / S::from_usize(l.len()).unwrap()
                            } else {
                                S::zero()
                            }
                        })
                        .collect();
                    nodes.push(NodeColumns {
                        acts: repeat_blocks(&per, w),
                        uniform_act,
                        choice: encs.iter().map(|e| e.nodes()[i].pred).collect(),
                        loose_weight: weights
                            .iter()
                            .any(|&x| x != S::zero())
                            .then(|| repeat_blocks(&weights, w)),
                    });
                }
            }
        }
        debug_assert!(n > 0);
        Ok(SuperNetwork {
            blueprint: bp,
            motifs,
            params,
            slopes,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.motifs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motifs.is_empty()
    }

    /// Tiles `x` across members and `y` per step; `x` stays differentiable.
    pub fn prepare(&self, g: &mut Graph<S>, x: Var, y: Var) -> Result<PreparedData> {
        let n = self.len();
        let count = g.value(y).len();
        let (inputs, targets) = match (g.shape(x).to_vec().as_slice(), g.shape(y).to_vec().as_slice()) {
            ([b, i], [by, o]) if b == by && *i == self.blueprint.input_size() && *o == self.blueprint.output_size() => {
                (vec![tile(g, x, n)?], vec![tile(g, y, n)?])
            }
            ([b, t, i], [by, ty, o])
                if self.blueprint.kind == NetworkKind::RecurrentCellLm
                    && b == by
                    && t == ty
                    && *i == self.blueprint.input_size()
                    && *o == self.blueprint.output_size() =>
            {
                let mut xs = Vec::with_capacity(*t);
                let mut ys = Vec::with_capacity(*t);
                for step in 0..*t {
                    let xt = g.slice(x, 1, step, 1)?;
                    let xt = g.reshape(xt, &[*b, *i])?;
                    xs.push(tile(g, xt, n)?);
                    let yt = g.slice(y, 1, step, 1)?;
                    let yt = g.reshape(yt, &[*b, *o])?;
                    ys.push(tile(g, yt, n)?);
                }
                (xs, ys)
            }
            (xs, ys) => {
                return Err(Error::shape(
                    "super_network",
                    format!("data {xs:?} / {ys:?} for blueprint {:?}", self.blueprint.layer_sizes),
                ))
            }
        };
        Ok(PreparedData {
            inputs,
            targets,
            count,
        })
    }

    /// Output pre-activations per step, each `(batch, N·out)`.
    pub fn forward(&self, g: &mut Graph<S>, params: &[Var], data: &PreparedData) -> Result<Vec<Var>> {
        match self.blueprint.kind {
            NetworkKind::Mlp => Ok(vec![self.forward_mlp(g, params, data.inputs[0])?]),
            NetworkKind::RecurrentCellLm => self.forward_cell(g, params, &data.inputs),
        }
    }

    /// Mean BCE of each member, as an `(N, 1)` column.
    pub fn losses(&self, g: &mut Graph<S>, params: &[Var], data: &PreparedData) -> Result<Var> {
        let n = self.len();
        let o = self.blueprint.output_size();
        let outs = self.forward(g, params, data)?;
        let mut total: Option<Var> = None;
        for (z, &y) in outs.into_iter().zip(&data.targets) {
            let e = bce_logits_elementwise(g, z, y)?;
            let r = g.sum_rows(e)?;
            let r = g.reshape(r, &[n, o])?;
            let s = g.sum_cols(r)?;
            total = Some(match total {
                None => s,
                Some(t) => g.add(t, s)?,
            });
        }
        let total = total.ok_or_else(|| Error::shape("super_network", "no steps"))?;
        Ok(g.scale(total, S::one() / S::from_usize(data.count).unwrap()))
    }

    fn forward_mlp(&self, g: &mut Graph<S>, params: &[Var], x: Var) -> Result<Var> {
        let layers = self.blueprint.layer_sizes.len() - 1;
        let rows = g.shape(x)[0];
        let mut h = x;
        for l in 0..layers {
            let z = g.block_matmul(h, params[2 * l])?;
            let b = g.broadcast_rows(params[2 * l + 1], rows)?;
            let a = g.add(z, b)?;
            h = if l + 1 < layers {
                let s = g.col_scale(a, self.slopes[l].clone())?;
                g.sigmoid(s)
            } else {
                a
            };
        }
        Ok(h)
    }

    fn forward_cell(&self, g: &mut Graph<S>, params: &[Var], xs: &[Var]) -> Result<Vec<Var>> {
        let n = self.len();
        let w = self.blueprint.layer_sizes[1];
        let np = params.len();
        let (w_out, b_out) = (params[np - 2], params[np - 1]);
        let rows = g.shape(xs[0])[0];
        let mut h = g.constant(Tensor::zeros(&[rows, n * w]));
        let mut outs = Vec::with_capacity(xs.len());
        for &xt in xs {
            let zx = g.block_matmul(xt, params[0])?;
            let zh = g.block_matmul(h, params[1])?;
            let pre = g.add(zx, zh)?;
            let mut states: Vec<Var> = Vec::with_capacity(CELL_NODES);
            for (i, node) in self.nodes.iter().enumerate() {
                let z = if i == 0 {
                    pre
                } else {
                    let src = if node.choice.iter().all(|&c| c == node.choice[0]) {
                        states[node.choice[0]]
                    } else {
                        g.block_select(&states, node.choice.clone())?
                    };
                    g.block_matmul(src, params[1 + i])?
                };
                states.push(match node.uniform_act {
                    Some(a) => g.activation(z, a),
                    None => g.column_activation(z, node.acts.clone())?,
                });
            }
            let mut acc: Option<Var> = None;
            for (i, node) in self.nodes.iter().enumerate() {
                if let Some(wt) = &node.loose_weight {
                    let part = g.col_scale(states[i], wt.clone())?;
                    acc = Some(match acc {
                        None => part,
                        Some(a) => g.add(a, part)?,
                    });
                }
            }
            h = acc.expect("every cell has a loose end");
            let z = g.block_matmul(h, w_out)?;
            let b = g.broadcast_rows(b_out, rows)?;
            outs.push(g.add(z, b)?);
        }
        Ok(outs)
    }
}

fn repeat_blocks<T: Copy>(per_block: &[T], width: usize) -> Rc<[T]> {
    per_block
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, width))
        .collect()
}

fn tile<S: Scalar>(g: &mut Graph<S>, x: Var, n: usize) -> Result<Var> {
    if n == 1 {
        return Ok(x);
    }
    g.concat(&vec![x; n], 1)
}

/// `(p, q)` tensors to one `(N, p, q)` tensor.
fn stack<S: Scalar>(parts: &[&Tensor<S>]) -> Tensor<S> {
    let mut shape = vec![parts.len()];
    shape.extend_from_slice(parts[0].shape());
    let data = parts.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor::new(shape, data).expect("equal member shapes")
}

/// `(1, q)` rows to one `(1, N·q)` row.
fn concat_cols<S: Scalar>(parts: &[&Tensor<S>]) -> Tensor<S> {
    let q = parts[0].len();
    let data = parts.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor::new(vec![1, parts.len() * q], data).expect("equal member shapes")
}
