use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fingerprint, EvalConfig, Evaluator, GroundTruthRecord, MetricKind};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::io::{bundled_corpus, CharVocab};
use crate::motif::{CellEncoding, Motif};
use crate::nn::{cell_forward, cross_entropy, with_l2, NetworkBlueprint, OptimizerConfig, OptimizerState, ParamSet};
use crate::petri::stream_rng;

/// Character-level language model settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharLmConfig {
    pub width: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub lr: f64,
    pub l2: f64,
    /// Global gradient-norm limit; 0 disables clipping.
    pub clip: f64,
    pub init_scale: f64,
    pub lowercase: bool,
    /// Tail fraction of the corpus held out for validation.
    pub valid_fraction: f64,
    pub valid_windows: usize,
    pub repeats: usize,
}

impl CharLmConfig {
    pub fn desk_scale() -> Self {
        CharLmConfig {
            width: 64,
            steps: 150,
            batch_size: 16,
            seq_len: 24,
            lr: 0.005,
            l2: 0.0,
            clip: 1.0,
            init_scale: 0.1,
            lowercase: true,
            valid_fraction: 0.1,
            valid_windows: 64,
            repeats: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0
            && self.batch_size > 0
            && self.seq_len > 0
            && self.lr > 0.0
            && self.l2 >= 0.0
            && self.clip >= 0.0
            && self.init_scale >= 0.0
            && self.valid_fraction > 0.0
            && self.valid_fraction < 1.0
            && self.valid_windows > 0
            && self.repeats > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("char-lm config {self:?}")))
        }
    }
}

/// Encoded corpus split into training and validation text.
#[derive(Clone, Debug)]
pub struct CharLmTask {
    pub vocab: CharVocab,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

impl CharLmTask {
    pub fn from_text(text: &str, cfg: &CharLmConfig) -> Result<Self> {
        let text = if cfg.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        let vocab = CharVocab::from_text(&text);
        let ids = vocab.encode(&text)?;
        let cut = ((ids.len() as f64) * (1.0 - cfg.valid_fraction)) as usize;
        let (train, valid) = ids.split_at(cut);
        if train.len() <= cfg.seq_len + 1 || valid.len() <= cfg.seq_len + 1 {
            return Err(Error::DataUnavailable("corpus too short for the sequence length".into()));
        }
        Ok(CharLmTask {
            vocab,
            train: train.to_vec(),
            valid: valid.to_vec(),
        })
    }

    pub fn bundled(cfg: &CharLmConfig) -> Result<Self> {
        Self::from_text(bundled_corpus(), cfg)
    }

    /// Cross-entropy of predicting uniformly: `ln V`.
    pub fn uniform_loss(&self) -> f64 {
        (self.vocab.len() as f64).ln()
    }
}

/// `(batch, time, V)` one-hot inputs and `time` one-hot target matrices.
fn windows(text: &[usize], starts: &[usize], t: usize, v: usize) -> (Tensor<f64>, Vec<Tensor<f64>>) {
    let b = starts.len();
    let mut x = vec![0.0; b * t * v];
    let mut ys = vec![vec![0.0; b * v]; t];
    for (i, &s) in starts.iter().enumerate() {
        for k in 0..t {
            x[(i * t + k) * v + text[s + k]] = 1.0;
            ys[k][i * v + text[s + k + 1]] = 1.0;
        }
    }
    (
        Tensor::new(vec![b, t, v], x).unwrap(),
        ys.into_iter()
            .map(|y| Tensor::new(vec![b, v], y).unwrap())
            .collect(),
    )
}

fn sequence_loss(
    g: &mut Graph<f64>,
    enc: &CellEncoding,
    vars: &[Var],
    width: usize,
    x: Tensor<f64>,
    ys: Vec<Tensor<f64>>,
) -> Result<Var> {
    let x = g.constant(x);
    let hs = cell_forward(g, enc, vars, x, width)?;
    let n = vars.len();
    let steps = hs.len();
    let mut total: Option<Var> = None;
    for (h, y) in hs.into_iter().zip(ys) {
        let rows = g.shape(h)[0];
        let z = g.matmul(h, vars[n - 2])?;
        let b = g.broadcast_rows(vars[n - 1], rows)?;
        let z = g.add(z, b)?;
        let y = g.constant(y);
        let l = cross_entropy(g, z, y)?;
        total = Some(match total {
            None => l,
            Some(t) => g.add(t, l)?,
        });
    }
    let total = total.ok_or_else(|| Error::InvalidArgument("empty sequence".into()))?;
    Ok(g.scale(total, 1.0 / steps as f64))
}

fn train_once(enc: &CellEncoding, cfg: &CharLmConfig, task: &CharLmTask, seed: u64) -> Result<f64> {
    let v = task.vocab.len();
    let bp = NetworkBlueprint::cell(v, cfg.width, v, cfg.init_scale)?;
    let mut params = ParamSet::<f64>::init(&bp, seed).tensors;
    let mut opt = OptimizerState::new(OptimizerConfig::adam(cfg.lr));
    let mut rng = stream_rng(seed, 11);
    let t = cfg.seq_len;
    let span = task.train.len() - t - 1;
    for step in 0..cfg.steps {
        let starts: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..span)).collect();
        let (x, ys) = windows(&task.train, &starts, t, v);
        let mut g = Graph::new();
        let vars: Vec<Var> = params.iter().map(|p| g.variable(p.clone())).collect();
        let loss = sequence_loss(&mut g, enc, &vars, cfg.width, x, ys)?;
        let lv = g.item(loss)?;
        if !lv.is_finite() {
            return Err(Error::NonFiniteLoss(format!("char-lm step {step}")));
        }
        let total = with_l2(&mut g, loss, &vars, cfg.l2)?;
        let grads = g.backward(total, &vars, false)?;
        let mut grads: Vec<Tensor<f64>> = grads.iter().map(|&v| g.value(v).clone()).collect();
        if cfg.clip > 0.0 {
            let norm = grads
                .iter()
                .flat_map(|t| t.data())
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss(format!("char-lm gradient at step {step}")));
            }
            if norm > cfg.clip {
                let k = cfg.clip / norm;
                grads = grads.iter().map(|t| t.map(|x| x * k)).collect();
            }
        }
        opt.step(&mut params, &grads)?;
        if step % 50 == 0 {
            debug!("char-lm step {step}: loss {lv:.4}");
        }
    }

    let span = task.valid.len() - t - 1;
    let k = cfg.valid_windows.min(span);
    let starts: Vec<usize> = (0..k).map(|i| i * span / k).collect();
    let (x, ys) = windows(&task.valid, &starts, t, v);
    let mut g = Graph::new();
    g.set_grad_enabled(false);
    let vars: Vec<Var> = params.iter().map(|p| g.constant(p.clone())).collect();
    let loss = sequence_loss(&mut g, enc, &vars, cfg.width, x, ys)?;
    let lv = g.item(loss)?;
    if !lv.is_finite() {
        return Err(Error::NonFiniteLoss("char-lm validation".into()));
    }
    Ok(lv)
}

/// Mean validation cross-entropy over `cfg.repeats` runs seeded `seed, seed+1, ..`.
pub fn eval_cell(enc: &CellEncoding, cfg: &CharLmConfig, seed: u64, task: &CharLmTask) -> Result<GroundTruthRecord> {
    cfg.validate()?;
    enc.validate()?;
    let seeds: Vec<u64> = (0..cfg.repeats as u64).map(|r| seed.wrapping_add(r)).collect();
    let mut total = 0.0;
    for &s in &seeds {
        total += train_once(enc, cfg, task, s)?;
    }
    Ok(GroundTruthRecord {
        motif: Motif::cell(enc.clone()),
        metric: total / seeds.len() as f64,
        metric_kind: MetricKind::Loss,
        seed,
        config_fingerprint: fingerprint(&EvalConfig::CharLm(cfg.clone())),
        repeat_seeds: seeds,
    })
}

/// Char-LM evaluator for search. A cell whose training diverges is scored
/// with the uniform-prediction loss `ln V` instead of aborting the search.
pub struct CharLmEvaluator {
    pub config: CharLmConfig,
    pub task: CharLmTask,
}

impl CharLmEvaluator {
    pub fn bundled(config: CharLmConfig) -> Result<Self> {
        let task = CharLmTask::bundled(&config)?;
        Ok(CharLmEvaluator { config, task })
    }
}

impl Evaluator for CharLmEvaluator {
    fn evaluate(&self, motif: &Motif, seed: u64) -> Result<GroundTruthRecord> {
        let enc = motif.as_cell().ok_or(Error::MixedVariants)?;
        match eval_cell(enc, &self.config, seed, &self.task) {
            Err(Error::NonFiniteLoss(what)) => {
                warn!("cell diverged ({what}); scoring it as a uniform predictor");
                Ok(GroundTruthRecord {
                    motif: motif.clone(),
                    metric: self.task.uniform_loss(),
                    metric_kind: MetricKind::Loss,
                    seed,
                    config_fingerprint: self.fingerprint(),
                    repeat_seeds: (0..self.config.repeats as u64).map(|r| seed.wrapping_add(r)).collect(),
                })
            }
            other => other,
        }
    }

    fn fingerprint(&self) -> String {
        fingerprint(&EvalConfig::CharLm(self.config.clone()))
    }
}
