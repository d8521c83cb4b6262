use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fingerprint, EvalConfig, Evaluator, GroundTruthRecord, MetricKind};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::io::{read_images, read_labels};
use crate::motif::Motif;
use crate::nn::{cross_entropy, mlp_forward, with_l2, NetworkBlueprint, OptimizerConfig, OptimizerState, ParamSet};
use crate::petri::stream_rng;

/// MNIST MLP training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2: f64,
    pub train_subset_size: usize,
    pub valid_subset_size: usize,
    pub repeats: usize,
    pub init_scale: f64,
}

impl MnistConfig {
    /// Full-scale settings: 50K/10K split, 50 epochs.
    pub fn table1() -> Self {
        MnistConfig {
            hidden: 100,
            epochs: 50,
            batch_size: 50,
            lr: 0.01,
            l2: 1e-5,
            train_subset_size: 50_000,
            valid_subset_size: 10_000,
            repeats: 1,
            init_scale: 1.0,
        }
    }

    /// Reduced settings that run a 30-point sweep in minutes on one core.
    pub fn desk_scale() -> Self {
        MnistConfig {
            epochs: 10,
            train_subset_size: 5_000,
            valid_subset_size: 2_000,
            repeats: 3,
            ..Self::table1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.hidden > 0
            && self.epochs > 0
            && self.batch_size > 0
            && self.lr > 0.0
            && self.l2 >= 0.0
            && self.train_subset_size > 0
            && self.valid_subset_size > 0
            && self.repeats > 0
            && self.init_scale >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("mnist config {self:?}")))
        }
    }
}

/// Training and validation subsets, both drawn from the MNIST training file.
/// Validation rows start at 50 000 when the file is large enough, so the
/// desk-scale and full-scale splits hold out the same images.
#[derive(Clone, Debug)]
pub struct MnistData {
    pub train_x: Tensor<f64>,
    pub train_y: Vec<u8>,
    pub valid_x: Tensor<f64>,
    pub valid_y: Vec<u8>,
}

impl MnistData {
    pub fn load(dir: &Path, cfg: &MnistConfig) -> Result<Self> {
        let images = read_images::<f64>(&dir.join("train-images-idx3-ubyte"))?;
        let labels = read_labels(&dir.join("train-labels-idx1-ubyte"))?;
        let n = labels.len();
        if images.shape()[0] != n {
            return Err(Error::DimensionMismatch(format!(
                "{} images but {n} labels",
                images.shape()[0]
            )));
        }
        let (nt, nv) = (cfg.train_subset_size, cfg.valid_subset_size);
        let vstart = if n >= 50_000 + nv { 50_000 } else { nt };
        if nt > vstart || vstart + nv > n {
            return Err(Error::DataUnavailable(format!(
                "need {nt} training and {nv} validation images, file has {n}"
            )));
        }
        let px = images.shape()[1];
        let rows = |a: usize, b: usize| {
            Tensor::new(vec![b - a, px], images.data()[a * px..b * px].to_vec()).unwrap()
        };
        Ok(MnistData {
            train_x: rows(0, nt),
            train_y: labels[..nt].to_vec(),
            valid_x: rows(vstart, vstart + nv),
            valid_y: labels[vstart..vstart + nv].to_vec(),
        })
    }

    /// Wraps in-memory arrays (used by tests and synthetic fixtures).
    pub fn from_parts(train_x: Tensor<f64>, train_y: Vec<u8>, valid_x: Tensor<f64>, valid_y: Vec<u8>) -> Self {
        MnistData {
            train_x,
            train_y,
            valid_x,
            valid_y,
        }
    }
}

fn gather(x: &Tensor<f64>, idx: &[usize]) -> Tensor<f64> {
    let px = x.shape()[1];
    let mut data = Vec::with_capacity(idx.len() * px);
    for &i in idx {
        data.extend_from_slice(&x.data()[i * px..(i + 1) * px]);
    }
    Tensor::new(vec![idx.len(), px], data).unwrap()
}

fn one_hot(labels: &[u8], classes: usize) -> Tensor<f64> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        data[i * classes + l as usize] = 1.0;
    }
    Tensor::new(vec![labels.len(), classes], data).unwrap()
}

/// Index of the largest entry; the lowest index wins ties.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains once and returns validation accuracy.
fn train_once(c: f64, cfg: &MnistConfig, data: &MnistData, seed: u64) -> Result<f64> {
    let classes = 10;
    let bp = NetworkBlueprint::mlp(vec![data.train_x.shape()[1], cfg.hidden, classes], cfg.init_scale)?;
    let mut params = ParamSet::<f64>::init(&bp, seed).tensors;
    let mut opt = OptimizerState::new(OptimizerConfig::adam(cfg.lr));
    let mut rng = stream_rng(seed, 7);
    let n = data.train_y.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut last = f64::NAN;
        for batch in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let x = g.constant(gather(&data.train_x, batch));
            let labels: Vec<u8> = batch.iter().map(|&i| data.train_y[i]).collect();
            let y = g.constant(one_hot(&labels, classes));
            let vars: Vec<Var> = params.iter().map(|t| g.variable(t.clone())).collect();
            let z = mlp_forward(&mut g, &bp, &vars, x, c)?;
            let loss = cross_entropy(&mut g, z, y)?;
            last = g.item(loss)?;
            if !last.is_finite() {
                return Err(Error::NonFiniteLoss(format!("mnist slope {c}, epoch {epoch}")));
            }
            let total = with_l2(&mut g, loss, &vars, cfg.l2)?;
            let grads = g.backward(total, &vars, false)?;
            let grads: Vec<_> = grads.iter().map(|&v| g.value(v).clone()).collect();
            opt.step(&mut params, &grads)?;
        }
        debug!("slope {c} seed {seed} epoch {epoch}: last batch loss {last:.4}");
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..data.valid_y.len()).collect();
    for chunk in idx.chunks(1000) {
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let x = g.constant(gather(&data.valid_x, chunk));
        let vars: Vec<Var> = params.iter().map(|t| g.constant(t.clone())).collect();
        let z = mlp_forward(&mut g, &bp, &vars, x, c)?;
        for (row, &i) in g.value(z).data().chunks(classes).zip(chunk) {
            correct += usize::from(argmax(row) == data.valid_y[i] as usize);
        }
    }
    Ok(correct as f64 / data.valid_y.len() as f64)
}

/// Mean validation accuracy over `cfg.repeats` runs seeded `seed, seed+1, ..`.
pub fn eval_mnist_slope(c: f64, cfg: &MnistConfig, seed: u64, data: &MnistData) -> Result<GroundTruthRecord> {
    cfg.validate()?;
    let motif = Motif::slope(c)?;
    let seeds: Vec<u64> = (0..cfg.repeats as u64).map(|r| seed.wrapping_add(r)).collect();
    let mut total = 0.0;
    for &s in &seeds {
        total += train_once(c, cfg, data, s)?;
    }
    Ok(GroundTruthRecord {
        motif,
        metric: total / seeds.len() as f64,
        metric_kind: MetricKind::Accuracy,
        seed,
        config_fingerprint: fingerprint(&EvalConfig::MnistSlope(cfg.clone())),
        repeat_seeds: seeds,
    })
}

pub struct MnistEvaluator {
    pub config: MnistConfig,
    pub data: MnistData,
}

impl Evaluator for MnistEvaluator {
    fn evaluate(&self, motif: &Motif, seed: u64) -> Result<GroundTruthRecord> {
        let c = motif.as_slope().ok_or(Error::MixedVariants)?;
        eval_mnist_slope(c, &self.config, seed, &self.data)
    }

    fn fingerprint(&self) -> String {
        fingerprint(&EvalConfig::MnistSlope(self.config.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two linearly separable blobs posing as digits 0 and 1.
    fn toy() -> MnistData {
        let make = |n: usize, off: usize| {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for i in 0..n {
                let label = ((i + off) % 2) as u8;
                for j in 0..4 {
                    let base = if label == 1 { 0.8 } else { 0.2 };
                    x.push(base + 0.05 * (((i * 7 + j * 3) % 5) as f64 - 2.0) / 2.0);
                }
                y.push(label);
            }
            (Tensor::new(vec![n, 4], x).unwrap(), y)
        };
        let (tx, ty) = make(60, 0);
        let (vx, vy) = make(20, 1);
        MnistData::from_parts(tx, ty, vx, vy)
    }

    fn cfg() -> MnistConfig {
        MnistConfig {
            hidden: 5,
            epochs: 20,
            batch_size: 10,
            lr: 0.05,
            l2: 0.0,
            train_subset_size: 60,
            valid_subset_size: 20,
            repeats: 2,
            init_scale: 0.5,
        }
    }

    #[test]
    fn learns_separable_toy_and_is_deterministic() {
        let d = toy();
        let a = eval_mnist_slope(1.0, &cfg(), 3, &d).unwrap();
        assert!(a.metric > 0.95, "{}", a.metric);
        assert_eq!(a.repeat_seeds, vec![3, 4]);
        assert_eq!(a, eval_mnist_slope(1.0, &cfg(), 3, &d).unwrap());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn missing_files_are_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            MnistData::load(dir.path(), &MnistConfig::desk_scale()),
            Err(Error::DataUnavailable(_))
        ));
    }
}
