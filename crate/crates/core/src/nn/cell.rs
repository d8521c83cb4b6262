use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::motif::{CellEncoding, CELL_NODES};
use crate::scalar::Scalar;

/// Number of leading parameter tensors that belong to the cell itself
/// (`w_x`, `w_h`, `w_node1..11`).
pub const CELL_PARAMS: usize = CELL_NODES + 1;

/// Runs the cell over a `(batch, time, input)` sequence from a zero state.
///
/// Node 0 reads `x_t·w_x + h·w_h`; node `i > 0` reads its predecessor through
/// `w_node{i}`. The new state is the mean of the nodes no other node reads.
/// Returns the state after each step, each `(batch, width)`.
pub fn cell_forward<S: Scalar>(
    g: &mut Graph<S>,
    enc: &CellEncoding,
    params: &[Var],
    x_seq: Var,
    width: usize,
) -> Result<Vec<Var>> {
    enc.validate()?;
    if width == 0 {
        return Err(Error::InvalidArgument("cell width must be positive".into()));
    }
    if params.len() < CELL_PARAMS {
        return Err(Error::shape(
            "cell_forward",
            format!("{} parameter tensors, need {CELL_PARAMS}", params.len()),
        ));
    }
    let (batch, steps, input) = match g.shape(x_seq) {
        [b, t, i] => (*b, *t, *i),
        s => {
            return Err(Error::shape(
                "cell_forward",
                format!("expected (batch, time, input), got {s:?}"),
            ))
        }
    };
    let loose = enc.loose_ends();
    let inv = S::one() / S::from_usize(loose.len()).unwrap();

    let mut h = g.constant(Tensor::zeros(&[batch, width]));
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let xt = g.slice(x_seq, 1, t, 1)?;
        let xt = g.reshape(xt, &[batch, input])?;
        let zx = g.matmul(xt, params[0])?;
        let zh = g.matmul(h, params[1])?;
        let pre = g.add(zx, zh)?;
        let nodes = enc.nodes();
        let mut states = Vec::with_capacity(CELL_NODES);
        states.push(g.activation(pre, nodes[0].act));
        for (i, node) in nodes.iter().enumerate().skip(1) {
            let z = g.matmul(states[node.pred], params[1 + i])?;
            states.push(g.activation(z, node.act));
        }
        let mut acc = states[loose[0]];
        for &i in &loose[1..] {
            acc = g.add(acc, states[i])?;
        }
        h = g.scale(acc, inv);
        out.push(h);
    }
    Ok(out)
}
