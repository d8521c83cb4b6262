use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::params::{NetworkBlueprint, NetworkKind};

/// Forward pass of a plain MLP; returns output-layer pre-activations.
///
/// `params` are `[w0, b0, w1, b1, ..]`. Every hidden layer uses a sigmoid
/// with slope `slope`.
pub fn mlp_forward<S: Scalar>(
    g: &mut Graph<S>,
    bp: &NetworkBlueprint,
    params: &[Var],
    x: Var,
    slope: S,
) -> Result<Var> {
    if bp.kind != NetworkKind::Mlp {
        return Err(Error::InvalidArgument("mlp_forward needs an mlp blueprint".into()));
    }
    let layers = bp.layer_sizes.len() - 1;
    if params.len() != 2 * layers {
        return Err(Error::shape(
            "mlp_forward",
            format!("{} parameter tensors for {layers} layers", params.len()),
        ));
    }
    if g.shape(x).len() != 2 || g.shape(x)[1] != bp.input_size() {
        return Err(Error::shape(
            "mlp_forward",
            format!("input {:?}, expected (batch, {})", g.shape(x), bp.input_size()),
        ));
    }
    let rows = g.shape(x)[0];
    let mut h = x;
    for l in 0..layers {
        let z = g.matmul(h, params[2 * l])?;
        let b = g.broadcast_rows(params[2 * l + 1], rows)?;
        let a = g.add(z, b)?;
        h = if l + 1 < layers {
            g.sigmoid_slope(a, slope)
        } else {
            a
        };
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::nn::ParamSet;

    #[test]
    fn zero_weights_give_half_hidden() {
        let bp = NetworkBlueprint::mlp(vec![3, 4, 2], 0.0).unwrap();
        let p = ParamSet::<f64>::init(&bp, 0);
        let mut g = Graph::new();
        let vars = p.to_vars(&mut g);
        let x = g.constant(Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.1, 9.0]).unwrap());
        // output = 0.5 * Σ w1 + b1 = 0 with zero weights; check hidden directly
        let z = g.matmul(x, vars[0]).unwrap();
        let h = g.sigmoid_slope(z, 0.7);
        assert!(g.value(h).data().iter().all(|&v| v == 0.5));
        let out = mlp_forward(&mut g, &bp, &vars, x, 0.7).unwrap();
        assert_eq!(g.shape(out), &[2, 2]);
    }

    #[test]
    fn hand_evaluated_single_unit() {
        // x = [1, 2], w0 = [0.5, -0.25]ᵀ, b0 = 0.1, w1 = [2], b1 = -1, slope 1
        let bp = NetworkBlueprint::mlp(vec![2, 1, 1], 1.0).unwrap();
        let mut g = Graph::new();
        let t = |s: &[usize], d: &[f64]| Tensor::new(s.to_vec(), d.to_vec()).unwrap();
        let vars = vec![
            g.variable(t(&[2, 1], &[0.5, -0.25])),
            g.variable(t(&[1, 1], &[0.1])),
            g.variable(t(&[1, 1], &[2.0])),
            g.variable(t(&[1, 1], &[-1.0])),
        ];
        let x = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let out = mlp_forward(&mut g, &bp, &vars, x, 1.0).unwrap();
        let hidden = 1.0 / (1.0 + (-0.1f64).exp());
        let expected = 2.0 * hidden - 1.0;
        assert!((g.item(out).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn motif_network_shape_and_width_check() {
        let bp = NetworkBlueprint::mlp(vec![10, 1, 10], 1.0).unwrap();
        let p = ParamSet::<f64>::init(&bp, 3);
        let mut g = Graph::new();
        let vars = p.to_vars(&mut g);
        let x = g.constant(Tensor::zeros(&[20, 10]));
        let out = mlp_forward(&mut g, &bp, &vars, x, 0.5).unwrap();
        assert_eq!(g.shape(out), &[20, 10]);
        let bad = g.constant(Tensor::zeros(&[20, 9]));
        assert!(matches!(
            mlp_forward(&mut g, &bp, &vars, bad, 0.5),
            Err(Error::Shape { .. })
        ));
    }
}
