use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::motif::CELL_NODES;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    Mlp,
    RecurrentCellLm,
}

/// Network layout shared by every motif-network of one session.
///
/// For `Mlp`, `layer_sizes` is `[input, hidden.., output]` and the motif sets
/// the hidden nonlinearity. For `RecurrentCellLm` it is `[input, width, output]`
/// and the motif is the cell spliced between the input projection and the readout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkBlueprint {
    pub kind: NetworkKind,
    pub layer_sizes: Vec<usize>,
    /// Standard deviation of the normal weight initialization.
    pub init_scale: f64,
}

impl NetworkBlueprint {
    pub fn mlp(layer_sizes: Vec<usize>, init_scale: f64) -> Result<Self> {
        Self::new(NetworkKind::Mlp, layer_sizes, init_scale)
    }

    pub fn cell(input: usize, width: usize, output: usize, init_scale: f64) -> Result<Self> {
        Self::new(NetworkKind::RecurrentCellLm, vec![input, width, output], init_scale)
    }

    pub fn new(kind: NetworkKind, layer_sizes: Vec<usize>, init_scale: f64) -> Result<Self> {
        let bp = NetworkBlueprint {
            kind,
            layer_sizes,
            init_scale,
        };
        bp.validate()?;
        Ok(bp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes {:?}: need at least two positive sizes",
                self.layer_sizes
            )));
        }
        if self.kind == NetworkKind::RecurrentCellLm && self.layer_sizes.len() != 3 {
            return Err(Error::InvalidArgument(
                "a cell network is [input, width, output]".into(),
            ));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "init scale {}",
                self.init_scale
            )));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Names and shapes of the parameter tensors, in canonical order.
    ///
    /// Biases are `(1, n)` rows so they broadcast over the batch.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let ls = &self.layer_sizes;
        match self.kind {
            NetworkKind::Mlp => ls
                .windows(2)
                .enumerate()
                .flat_map(|(i, w)| {
                    [
                        (format!("w{i}"), vec![w[0], w[1]]),
                        (format!("b{i}"), vec![1, w[1]]),
                    ]
                })
                .collect(),
            NetworkKind::RecurrentCellLm => {
                let (i, w, o) = (ls[0], ls[1], ls[2]);
                let mut v = vec![("w_x".to_string(), vec![i, w]), ("w_h".to_string(), vec![w, w])];
                for n in 1..CELL_NODES {
                    v.push((format!("w_node{n}"), vec![w, w]));
                }
                v.push(("w_out".into(), vec![w, o]));
                v.push(("b_out".into(), vec![1, o]));
                v
            }
        }
    }

    /// Total number of scalars in all parameter tensors.
    pub fn param_count(&self) -> usize {
        self.param_layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Named parameter tensors plus the seed that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ParamSet<S> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<S>>,
    pub init_seed: u64,
}

impl<S: Scalar> ParamSet<S> {
    /// Weights from `N(0, init_scale²)`, biases zero.
    pub fn init(bp: &NetworkBlueprint, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape) in bp.param_layout() {
            let n: usize = shape.iter().product();
            let data = if name.starts_with('b') {
                vec![S::zero(); n]
            } else {
                (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        S::lit(z * bp.init_scale)
                    })
                    .collect()
            };
            names.push(name);
            tensors.push(Tensor::new(shape, data).expect("layout shapes are consistent"));
        }
        ParamSet {
            names,
            tensors,
            init_seed: seed,
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every tensor as a graph variable.
    pub fn to_vars(&self, g: &mut Graph<S>) -> Vec<Var> {
        self.tensors.iter().map(|t| g.variable(t.clone())).collect()
    }

    /// Copy of `self` with tensors read back from graph nodes.
    pub fn from_vars(&self, g: &Graph<S>, vars: &[Var]) -> Self {
        ParamSet {
            names: self.names.clone(),
            tensors: vars.iter().map(|&v| g.value(v).clone()).collect(),
            init_seed: self.init_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let mlp = NetworkBlueprint::mlp(vec![10, 1, 10], 1.0).unwrap();
        assert_eq!(mlp.param_count(), 31);
        let cell = NetworkBlueprint::cell(10, 3, 10, 1.0).unwrap();
        let readout = 3 * 10 + 10;
        let core = cell.param_count() - readout;
        assert_eq!(core, 138);
        assert!((112..=168).contains(&core));
    }

    #[test]
    fn init_is_seeded() {
        let bp = NetworkBlueprint::mlp(vec![4, 3, 2], 0.5).unwrap();
        let a = ParamSet::<f64>::init(&bp, 7);
        assert_eq!(a, ParamSet::init(&bp, 7));
        assert_ne!(a, ParamSet::init(&bp, 8));
        assert!(a.get("b0").unwrap().data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn rejects_short_layouts() {
        assert!(NetworkBlueprint::mlp(vec![3], 1.0).is_err());
        assert!(NetworkBlueprint::new(NetworkKind::RecurrentCellLm, vec![3, 2, 1, 1], 1.0).is_err());
    }
}
