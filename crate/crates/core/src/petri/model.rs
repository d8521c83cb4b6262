use std::path::Path;

use log::debug;
use rand::seq::index;
use rand::SeedableRng;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::motif::{common_variant, instantiate, Motif, MotifVariant};
use crate::nn::{with_l2, NetworkBlueprint, NetworkKind, OptimizerConfig, OptimizerState};
use crate::scalar::Scalar;

use super::hyper::{PetriHyper, SyntheticDataset};
use super::inner::{inner_loop_graph, inner_loop_values, DataVars};
use super::normalize::{normalize, normalize_var};

const STREAM_DATA: u64 = 1;
const STREAM_THETA: u64 = 2;
const STREAM_BATCH: u64 = 1 << 32;

/// Deterministic generator for one purpose (`stream`) under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A trained (or freshly initialized) Petri dish.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PetriModel<S> {
    pub synthetic: SyntheticDataset<S>,
    pub theta_init_seed: u64,
    pub blueprint: NetworkBlueprint,
    pub hyper: PetriHyper,
    pub outer_loss_history: Vec<f64>,
    pub seed: u64,
    pub outer_optimizer: OptimizerState<S>,
}

/// `mean((z(losses) − z(ground_truth))²)` with the ground truth as constants.
pub fn outer_loss<S: Scalar>(g: &mut Graph<S>, losses: Var, ground_truth: &[f64]) -> Result<Var> {
    let z = normalize(ground_truth)?;
    outer_loss_normalized(g, losses, &z)
}

fn outer_loss_normalized<S: Scalar>(g: &mut Graph<S>, losses: Var, z: &[f64]) -> Result<Var> {
    let n = g.value(losses).len();
    if n != z.len() {
        return Err(Error::LengthMismatch(n, z.len()));
    }
    let shape = g.shape(losses).to_vec();
    let zl = normalize_var(g, losses)?;
    let t = Tensor::new(shape, z.iter().map(|&v| S::lit(v)).collect())?;
    let zt = g.constant(t);
    let d = g.sub(zl, zt)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// Plain-number version of the outer loss.
pub fn outer_loss_value(losses: &[f64], ground_truth: &[f64]) -> Result<f64> {
    if losses.len() != ground_truth.len() {
        return Err(Error::LengthMismatch(losses.len(), ground_truth.len()));
    }
    let a = normalize(losses)?;
    let b = normalize(ground_truth)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

impl<S: Scalar> PetriModel<S> {
    pub fn new(variant: MotifVariant, hyper: &PetriHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let blueprint = hyper.blueprint(variant)?;
        let synthetic = SyntheticDataset::init(hyper, variant, &mut stream_rng(seed, STREAM_DATA));
        let theta_init_seed = stream_rng(seed, STREAM_THETA).next_u64();
        Ok(PetriModel {
            synthetic,
            theta_init_seed,
            blueprint,
            hyper: hyper.clone(),
            outer_loss_history: Vec::new(),
            seed,
            outer_optimizer: OptimizerState::new(OptimizerConfig::adam(hyper.outer_lr)),
        })
    }

    fn check_motifs(&self, motifs: &[Motif]) -> Result<()> {
        let v = common_variant(motifs)?;
        let ok = matches!(
            (v, self.blueprint.kind),
            (MotifVariant::ActivationSlope, NetworkKind::Mlp)
                | (MotifVariant::Cell, NetworkKind::RecurrentCellLm)
        );
        if ok {
            Ok(())
        } else {
            Err(Error::MixedVariants)
        }
    }

    /// Outer loss and its gradients with respect to `x_train` and `x_valid`,
    /// including the `outer_l2` penalty on both.
    pub fn outer_gradient(&self, motifs: &[Motif], ground_truth: &[f64]) -> Result<(f64, [Tensor<S>; 2])> {
        if motifs.len() != ground_truth.len() {
            return Err(Error::LengthMismatch(motifs.len(), ground_truth.len()));
        }
        if motifs.len() < 2 {
            return Err(Error::InvalidArgument("an outer step needs at least two motifs".into()));
        }
        self.check_motifs(motifs)?;
        let step = self.outer_loss_history.len();
        let z = normalize(ground_truth)?;
        let nets = instantiate::<S>(motifs, &self.blueprint, self.theta_init_seed)?;

        let mut g = Graph::new();
        let data = DataVars::register(&mut g, &self.synthetic);
        let losses = inner_loop_graph(&mut g, &nets, data, &self.hyper)?;
        if !g.value(losses).all_finite() {
            return Err(Error::NonFiniteLoss(format!("inner validation losses at outer step {step}")));
        }
        let lo = outer_loss_normalized(&mut g, losses, &z)?;
        let value = g.item(lo)?.as_f64();
        let inputs = [data.x_train, data.x_valid];
        let total = with_l2(&mut g, lo, &inputs, S::lit(self.hyper.outer_l2))?;
        let grads = g.backward(total, &inputs, false)?;
        let grads = [g.value(grads[0]).clone(), g.value(grads[1]).clone()];
        if let Some(bad) = grads.iter().position(|t| !t.all_finite()) {
            return Err(Error::NonFiniteGradient {
                step,
                detail: format!("{} gradient; outer loss {value}", ["x_train", "x_valid"][bad]),
            });
        }
        Ok((value, grads))
    }

    /// One update of the synthetic inputs. Motif-networks start from
    /// `θ_init` every time; labels are never touched.
    pub fn outer_step(&mut self, motifs: &[Motif], ground_truth: &[f64]) -> Result<f64> {
        let step = self.outer_loss_history.len();
        let (value, grads) = self.outer_gradient(motifs, ground_truth)?;
        let mut xs = [self.synthetic.x_train.clone(), self.synthetic.x_valid.clone()];
        let lr = self.hyper.outer_lr_at(step);
        self.outer_optimizer.step_with_lr(&mut xs, &grads, lr)?;
        let [xt, xv] = xs;
        self.synthetic.x_train = xt;
        self.synthetic.x_valid = xv;
        self.outer_loss_history.push(value);
        debug!("outer step {step}: loss {value:.6} lr {lr}");
        Ok(value)
    }

    /// Raw inner validation losses of `motifs` on the current synthetic data.
    pub fn infer_losses(&self, motifs: &[Motif]) -> Result<Vec<f64>> {
        self.check_motifs(motifs)?;
        let nets = instantiate::<S>(motifs, &self.blueprint, self.theta_init_seed)?;
        let v = inner_loop_values(&nets, &self.synthetic, &self.hyper)?;
        let v: Vec<f64> = v.into_iter().map(Scalar::as_f64).collect();
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLoss(format!("{:?}", motifs[i])));
        }
        Ok(v)
    }

    /// Normalized predicted losses (lower is better).
    pub fn infer(&self, motifs: &[Motif]) -> Result<Vec<f64>> {
        normalize(&self.infer_losses(motifs)?)
    }

    /// Like [`infer`](Self::infer) but tolerant of motifs whose inner loop
    /// diverges: those map to `None` and the rest are normalized among
    /// themselves (all zero when fewer than two distinct values remain).
    pub fn screen(&self, motifs: &[Motif]) -> Result<Vec<Option<f64>>> {
        self.check_motifs(motifs)?;
        let nets = instantiate::<S>(motifs, &self.blueprint, self.theta_init_seed)?;
        let v: Vec<f64> = inner_loop_values(&nets, &self.synthetic, &self.hyper)?
            .into_iter()
            .map(Scalar::as_f64)
            .collect();
        let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        let z = normalize(&finite).unwrap_or_else(|_| vec![0.0; finite.len()]);
        let mut z = z.into_iter();
        Ok(v.iter().map(|x| if x.is_finite() { z.next() } else { None }).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Full Petri dish training. When there are more motifs than
/// `hyper.motif_batch`, each outer step uses a fresh sample drawn without
/// replacement.
pub fn train<S: Scalar>(
    motifs: &[Motif],
    ground_truth: &[f64],
    hyper: &PetriHyper,
    seed: u64,
) -> Result<PetriModel<S>> {
    if motifs.len() != ground_truth.len() {
        return Err(Error::LengthMismatch(motifs.len(), ground_truth.len()));
    }
    if motifs.len() < 2 {
        return Err(Error::InvalidArgument("training needs at least two motifs".into()));
    }
    let variant = common_variant(motifs)?;
    let mut model = PetriModel::new(variant, hyper, seed)?;
    model.fit(motifs, ground_truth, hyper.outer_steps)?;
    Ok(model)
}

impl<S: Scalar> PetriModel<S> {
    /// Runs `steps` further outer steps, continuing the batch schedule and
    /// optimizer state from where the model left off.
    pub fn fit(&mut self, motifs: &[Motif], ground_truth: &[f64], steps: usize) -> Result<()> {
        if motifs.len() != ground_truth.len() {
            return Err(Error::LengthMismatch(motifs.len(), ground_truth.len()));
        }
        let n = motifs.len();
        let batch = self.hyper.motif_batch;
        for _ in 0..steps {
            let t = self.outer_loss_history.len() as u64;
            if n > batch {
                let mut rng = stream_rng(self.seed, STREAM_BATCH + t);
                let mut idx = index::sample(&mut rng, n, batch).into_vec();
                idx.sort_unstable();
                let m: Vec<Motif> = idx.iter().map(|&i| motifs[i].clone()).collect();
                let y: Vec<f64> = idx.iter().map(|&i| ground_truth[i]).collect();
                self.outer_step(&m, &y)?;
            } else {
                self.outer_step(motifs, ground_truth)?;
            }
        }
        Ok(())
    }
}

/// Splits the motifs in half at random, trains on one half per grid point,
/// and keeps the grid point with the lowest outer loss on the other half.
pub fn select_hypers<S: Scalar>(
    motifs: &[Motif],
    ground_truth: &[f64],
    grid: &[PetriHyper],
    seed: u64,
) -> Result<PetriHyper> {
    match grid {
        [] => return Err(Error::InvalidArgument("empty hyperparameter grid".into())),
        [only] => return Ok(only.clone()),
        _ => {}
    }
    let (train_idx, valid_idx) = split_half(motifs.len(), seed)?;
    let pick = |idx: &[usize]| -> (Vec<Motif>, Vec<f64>) {
        (
            idx.iter().map(|&i| motifs[i].clone()).collect(),
            idx.iter().map(|&i| ground_truth[i]).collect(),
        )
    };
    let (tm, ty) = pick(&train_idx);
    let (vm, vy) = pick(&valid_idx);
    let mut best: Option<(f64, &PetriHyper)> = None;
    for h in grid {
        let model = train::<S>(&tm, &ty, h, seed)?;
        let loss = outer_loss_value(&model.infer_losses(&vm)?, &vy)?;
        debug!("grid point {h:?}: validation outer loss {loss}");
        if best.is_none_or(|(b, _)| loss < b) {
            best = Some((loss, h));
        }
    }
    Ok(best.expect("grid is nonempty").1.clone())
}

/// Random equal split of `0..n` into sorted training and validation indices.
pub fn split_half(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "need an even number of at least 4 motifs to split, got {n}"
        )));
    }
    let mut rng = stream_rng(seed, 3);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut a = order[..n / 2].to_vec();
    let mut b = order[n / 2..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    Ok((a, b))
}
