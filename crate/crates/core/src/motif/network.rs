use serde::{Deserialize, Serialize};

use super::{common_variant, Motif, MotifVariant};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{bce_logits_elementwise, cell_forward, mlp_forward, NetworkBlueprint, NetworkKind, ParamSet};
use crate::scalar::Scalar;

/// A miniature network with one motif spliced in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MotifNetwork<S> {
    pub motif: Motif,
    pub blueprint: NetworkBlueprint,
    pub params: ParamSet<S>,
}

/// One network per motif, all starting from the same parameters.
pub fn instantiate<S: Scalar>(
    motifs: &[Motif],
    blueprint: &NetworkBlueprint,
    seed: u64,
) -> Result<Vec<MotifNetwork<S>>> {
    let variant = common_variant(motifs)?;
    let expected = match blueprint.kind {
        NetworkKind::Mlp => MotifVariant::ActivationSlope,
        NetworkKind::RecurrentCellLm => MotifVariant::Cell,
    };
    if variant != expected {
        return Err(Error::MixedVariants);
    }
    let params = ParamSet::init(blueprint, seed);
    Ok(motifs
        .iter()
        .map(|m| MotifNetwork {
            motif: m.clone(),
            blueprint: blueprint.clone(),
            params: params.clone(),
        })
        .collect())
}

impl<S: Scalar> MotifNetwork<S> {
    /// Output-layer pre-activations. MLPs map `(batch, in)` to `(batch, out)`;
    /// cells map `(batch, time, in)` to one `(batch, out)` readout per step.
    pub fn forward(&self, g: &mut Graph<S>, params: &[Var], x: Var) -> Result<Vec<Var>> {
        match &self.motif {
            Motif::ActivationSlope { slope } => {
                Ok(vec![mlp_forward(g, &self.blueprint, params, x, S::lit(*slope))?])
            }
            Motif::Cell { encoding } => {
                let width = self.blueprint.layer_sizes[1];
                let hs = cell_forward(g, encoding, params, x, width)?;
                let n = params.len();
                let (w_out, b_out) = (params[n - 2], params[n - 1]);
                hs.into_iter()
                    .map(|h| {
                        let rows = g.shape(h)[0];
                        let z = g.matmul(h, w_out)?;
                        let b = g.broadcast_rows(b_out, rows)?;
                        g.add(z, b)
                    })
                    .collect()
            }
        }
    }

    /// Mean BCE of sigmoid outputs against `y` (same layout as the input,
    /// with output width).
    pub fn bce(&self, g: &mut Graph<S>, params: &[Var], x: Var, y: Var) -> Result<Var> {
        let outs = self.forward(g, params, x)?;
        let ys = split_steps(g, y, outs.len())?;
        let mut total: Option<Var> = None;
        for (z, yt) in outs.into_iter().zip(ys) {
            let e = bce_logits_elementwise(g, z, yt)?;
            let s = g.sum(e);
            total = Some(match total {
                None => s,
                Some(t) => g.add(t, s)?,
            });
        }
        let count = S::from_usize(g.value(y).len()).unwrap();
        let total = total.ok_or_else(|| Error::shape("bce", "empty sequence"))?;
        Ok(g.scale(total, S::one() / count))
    }
}

/// Splits `(batch, time, k)` into `time` matrices; a 2-D input is one step.
pub(crate) fn split_steps<S: Scalar>(g: &mut Graph<S>, y: Var, steps: usize) -> Result<Vec<Var>> {
    match *g.shape(y) {
        [_, _] if steps == 1 => Ok(vec![y]),
        [b, t, k] if t == steps => (0..t)
            .map(|i| {
                let s = g.slice(y, 1, i, 1)?;
                g.reshape(s, &[b, k])
            })
            .collect(),
        _ => Err(Error::shape(
            "targets",
            format!("{:?} for {steps} steps", g.shape(y)),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Activation;
    use crate::motif::CellEncoding;

    #[test]
    fn shared_init() {
        let bp = NetworkBlueprint::mlp(vec![10, 1, 10], 1.0).unwrap();
        let motifs = [Motif::slope(0.5).unwrap(), Motif::slope(1.0).unwrap()];
        let nets = instantiate::<f64>(&motifs, &bp, 11).unwrap();
        assert_eq!(nets[0].params, nets[1].params);
        assert_eq!(nets[0].params.count(), 31);
        assert_eq!(nets, instantiate::<f64>(&motifs, &bp, 11).unwrap());
    }

    #[test]
    fn instantiate_errors() {
        let bp = NetworkBlueprint::mlp(vec![10, 1, 10], 1.0).unwrap();
        assert!(instantiate::<f64>(&[], &bp, 0).is_err());
        let cell = Motif::cell(CellEncoding::chain(Activation::Tanh));
        assert!(matches!(
            instantiate::<f64>(&[cell], &bp, 0),
            Err(Error::MixedVariants)
        ));
    }
}
