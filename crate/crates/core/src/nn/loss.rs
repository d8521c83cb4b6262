use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn same_shape<S: Scalar>(g: &Graph<S>, op: &'static str, a: Var, b: Var) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", g.shape(a), g.shape(b)),
        ));
    }
    Ok(())
}

/// Elementwise `−(y·ln p + (1−y)·ln(1−p))` for probabilities `p`.
pub fn bce_elementwise<S: Scalar>(g: &mut Graph<S>, pred: Var, target: Var) -> Result<Var> {
    same_shape(g, "bce_loss", pred, target)?;
    let lp = g.log(pred);
    let q = g.neg(pred);
    let q = g.add_const(q, S::one());
    let lq = g.log(q);
    let ny = g.neg(target);
    let ny = g.add_const(ny, S::one());
    let a = g.mul(target, lp)?;
    let b = g.mul(ny, lq)?;
    let s = g.add(a, b)?;
    Ok(g.neg(s))
}

/// Elementwise BCE of `sigmoid(z)` against `y`, computed from the logits as
/// `max(z, 0) − y·z + ln(1 + e^{−|z|})` so saturated logits stay finite.
pub fn bce_logits_elementwise<S: Scalar>(g: &mut Graph<S>, logits: Var, target: Var) -> Result<Var> {
    same_shape(g, "bce_logits", logits, target)?;
    let pos = g.relu(logits);
    let nz = g.neg(logits);
    let neg = g.relu(nz);
    let abs = g.add(pos, neg)?;
    let na = g.neg(abs);
    let e = g.exp(na);
    let e = g.add_const(e, S::one());
    let soft = g.log(e);
    let yz = g.mul(target, logits)?;
    let d = g.sub(pos, yz)?;
    g.add(d, soft)
}

/// Mean binary cross-entropy over all elements.
pub fn bce_loss<S: Scalar>(g: &mut Graph<S>, pred: Var, target: Var) -> Result<Var> {
    let e = bce_elementwise(g, pred, target)?;
    Ok(g.mean(e))
}

/// Mean over rows of `−Σ_j y_j ln softmax(z)_j`.
pub fn cross_entropy<S: Scalar>(g: &mut Graph<S>, logits: Var, onehot: Var) -> Result<Var> {
    same_shape(g, "cross_entropy", logits, onehot)?;
    let rows = g.shape(logits)[0];
    let p = g.softmax(logits)?;
    let lp = g.log(p);
    let picked = g.mul(lp, onehot)?;
    let s = g.sum(picked);
    Ok(g.scale(s, -S::one() / S::from_usize(rows).unwrap()))
}

/// Mean squared error.
pub fn mse_loss<S: Scalar>(g: &mut Graph<S>, pred: Var, target: Var) -> Result<Var> {
    same_shape(g, "mse_loss", pred, target)?;
    let d = g.sub(pred, target)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// `λ·Σθ²` over every tensor in `params`.
pub fn l2_penalty<S: Scalar>(g: &mut Graph<S>, params: &[Var], lambda: S) -> Option<Var> {
    let mut total: Option<Var> = None;
    for &p in params {
        let sq = g.square(p);
        let s = g.sum(sq);
        total = Some(match total {
            None => s,
            Some(t) => g.add(t, s).expect("scalars"),
        });
    }
    total.map(|t| g.scale(t, lambda))
}

/// `loss + λ·Σθ²`, or `loss` unchanged when `λ = 0`.
pub fn with_l2<S: Scalar>(g: &mut Graph<S>, loss: Var, params: &[Var], lambda: S) -> Result<Var> {
    if lambda == S::zero() {
        return Ok(loss);
    }
    match l2_penalty(g, params, lambda) {
        Some(p) => g.add(loss, p),
        None => Ok(loss),
    }
}
