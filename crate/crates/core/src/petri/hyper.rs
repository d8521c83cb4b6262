use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::motif::MotifVariant;
use crate::nn::{NetworkBlueprint, OptimizerKind};
use crate::scalar::Scalar;

/// Petri dish settings: inner-loop training, outer-loop data updates, and the
/// size of motif-networks and synthetic data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PetriHyper {
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub inner_optimizer: OptimizerKind,
    pub inner_l2: f64,
    pub outer_steps: usize,
    pub outer_lr: f64,
    pub outer_lr_decay: f64,
    pub outer_l2: f64,
    pub motif_batch: usize,
    /// Motif-network hidden layer (MLP) or cell width.
    pub hidden: usize,
    /// Motif-network input and output width.
    pub io_width: usize,
    /// Synthetic batch size, shared by training and validation data.
    pub samples: usize,
    /// Sequence length for cell motifs.
    pub time_steps: usize,
    pub init_scale: f64,
}

impl PetriHyper {
    /// Final settings for the sigmoid-slope experiment.
    pub fn table2() -> Self {
        PetriHyper {
            inner_steps: 250,
            inner_lr: 0.01,
            inner_optimizer: OptimizerKind::Adam,
            inner_l2: 1e-5,
            outer_steps: 60,
            outer_lr: 0.05,
            outer_lr_decay: 0.4,
            outer_l2: 1e-5,
            motif_batch: 40,
            hidden: 1,
            io_width: 10,
            samples: 10,
            time_steps: 1,
            init_scale: 1.0,
        }
    }

    /// Final settings for the recurrent-cell experiment.
    pub fn table4() -> Self {
        PetriHyper {
            inner_steps: 50,
            inner_lr: 0.01,
            inner_optimizer: OptimizerKind::Adam,
            inner_l2: 1e-5,
            outer_steps: 200,
            outer_lr: 2.0,
            outer_lr_decay: 0.5,
            outer_l2: 5e-5,
            motif_batch: 40,
            hidden: 3,
            io_width: 10,
            samples: 20,
            time_steps: 10,
            init_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("petri hyper: {what}")));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !pos(self.inner_lr) {
            return bad("inner_lr must be positive");
        }
        if !nonneg(self.outer_lr) {
            return bad("outer_lr must be nonnegative");
        }
        if !(self.outer_lr_decay > 0.0 && self.outer_lr_decay <= 1.0) {
            return bad("outer_lr_decay must lie in (0, 1]");
        }
        if !nonneg(self.inner_l2) || !nonneg(self.outer_l2) || !nonneg(self.init_scale) {
            return bad("penalties and init scale must be nonnegative");
        }
        if self.motif_batch < 2 {
            return bad("motif_batch must be at least 2");
        }
        if self.hidden == 0 || self.io_width == 0 || self.samples == 0 || self.time_steps == 0 {
            return bad("sizes must be positive");
        }
        Ok(())
    }

    pub fn blueprint(&self, variant: MotifVariant) -> Result<NetworkBlueprint> {
        match variant {
            MotifVariant::ActivationSlope => NetworkBlueprint::mlp(
                vec![self.io_width, self.hidden, self.io_width],
                self.init_scale,
            ),
            MotifVariant::Cell => {
                NetworkBlueprint::cell(self.io_width, self.hidden, self.io_width, self.init_scale)
            }
        }
    }

    /// Outer learning rate at outer step `t`: decayed by `outer_lr_decay`
    /// after each third of the run.
    pub fn outer_lr_at(&self, t: usize) -> f64 {
        let period = (self.outer_steps / 3).max(1);
        self.outer_lr * self.outer_lr_decay.powi((t / period) as i32)
    }
}

/// Learned synthetic inputs with fixed random labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SyntheticDataset<S> {
    #[serde(with = "crate::io::nested")]
    pub x_train: Tensor<S>,
    #[serde(with = "crate::io::nested")]
    pub y_train: Tensor<S>,
    #[serde(with = "crate::io::nested")]
    pub x_valid: Tensor<S>,
    #[serde(with = "crate::io::nested")]
    pub y_valid: Tensor<S>,
}

impl<S: Scalar> SyntheticDataset<S> {
    /// Standard-normal inputs and uniform labels in `[0, 1)`; validation data
    /// starts as a copy of the training data.
    pub fn init<R: Rng + ?Sized>(hyper: &PetriHyper, variant: MotifVariant, rng: &mut R) -> Self {
        let shape = match variant {
            MotifVariant::ActivationSlope => vec![hyper.samples, hyper.io_width],
            MotifVariant::Cell => vec![hyper.samples, hyper.time_steps, hyper.io_width],
        };
        let n: usize = shape.iter().product();
        let x: Vec<S> = (0..n)
            .map(|_| S::lit(StandardNormal.sample(&mut *rng)))
            .collect();
        let y: Vec<S> = (0..n).map(|_| S::lit(rng.random::<f64>())).collect();
        let x = Tensor::new(shape.clone(), x).expect("sized above");
        let y = Tensor::new(shape, y).expect("sized above");
        SyntheticDataset {
            x_train: x.clone(),
            y_train: y.clone(),
            x_valid: x,
            y_valid: y,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn profiles_validate() {
        PetriHyper::table2().validate().unwrap();
        PetriHyper::table4().validate().unwrap();
        let mut h = PetriHyper::table2();
        h.outer_lr_decay = 0.0;
        assert!(h.validate().is_err());
    }

    #[test]
    fn decay_schedule() {
        let h = PetriHyper::table2();
        assert_eq!(h.outer_lr_at(0), 0.05);
        assert_eq!(h.outer_lr_at(19), 0.05);
        assert_eq!(h.outer_lr_at(20), 0.05 * 0.4);
        assert_eq!(h.outer_lr_at(59), 0.05 * 0.4 * 0.4);
    }

    #[test]
    fn synthetic_starts_shared() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = SyntheticDataset::<f64>::init(&PetriHyper::table4(), MotifVariant::Cell, &mut rng);
        assert_eq!(d.x_train.shape(), &[20, 10, 10]);
        assert_eq!(d.x_train, d.x_valid);
        assert_eq!(d.y_train, d.y_valid);
        assert!(d.y_train.data().iter().all(|&y| (0.0..1.0).contains(&y)));
    }
}
