//! The sigmoid-slope prediction study: ground truth on a slope grid, a
//! Petri dish and a direct regressor trained on the same restricted
//! sample, and how well each ranks the whole grid.

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_predict, baseline_train, BaselineHyper};
use crate::error::{Error, Result};
use crate::ground_truth::{Evaluator, GroundTruthRecord};
use crate::io::Series;
use crate::motif::Motif;
use crate::petri::{normalize, outer_loss_value, split_half, stream_rng, train, PetriHyper};
use crate::stats::{median, spearman};

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Evaluates every motif (in parallel, results in input order).
pub fn evaluate_all<E: Evaluator>(evaluator: &E, motifs: &[Motif], seed: u64) -> Result<Vec<GroundTruthRecord>> {
    motifs.par_iter().map(|m| evaluator.evaluate(m, seed)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeStudyConfig {
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub train_min: f64,
    pub train_max: f64,
    /// Slopes drawn from the training interval; half train, half validate.
    pub train_points: usize,
    pub data_seed: u64,
    pub eval_seed: u64,
    pub seeds: Vec<u64>,
    pub petri: PetriHyper,
    pub baseline: BaselineHyper,
}

impl Default for SlopeStudyConfig {
    fn default() -> Self {
        SlopeStudyConfig {
            grid_min: 0.01,
            grid_max: 2.01,
            grid_points: 30,
            train_min: 0.37,
            train_max: 1.50,
            train_points: 30,
            data_seed: 0,
            eval_seed: 0,
            seeds: vec![0, 1, 2],
            petri: PetriHyper::table2(),
            baseline: BaselineHyper::table3(),
        }
    }
}

impl SlopeStudyConfig {
    pub fn grid(&self) -> Vec<f64> {
        linspace(self.grid_min, self.grid_max, self.grid_points)
    }

    /// Uniform draws from the training interval, rounded to 4 decimals.
    pub fn training_slopes(&self) -> Vec<f64> {
        use rand::Rng;
        let mut rng = stream_rng(self.data_seed, 50);
        (0..self.train_points)
            .map(|_| (rng.random_range(self.train_min..=self.train_max) * 1e4).round() / 1e4)
            .collect()
    }
}

/// Results for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub train_slopes: Vec<f64>,
    pub validation_outer_loss: f64,
    /// Normalized predicted losses over the grid.
    pub petri: Vec<f64>,
    pub ablation: Vec<f64>,
    pub baseline: Vec<f64>,
    pub petri_rho: f64,
    pub ablation_rho: f64,
    pub petri_best_slope: f64,
    pub baseline_rho_left: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeStudy {
    pub grid: Vec<f64>,
    /// Ground-truth losses on the grid.
    pub truth: Vec<f64>,
    pub peak_slope: f64,
    pub interior_peak: bool,
    pub seeds: Vec<SeedOutcome>,
    pub median_petri_rho: f64,
    pub median_ablation_rho: f64,
    pub median_best_slope: f64,
    pub median_baseline_rho_left: Option<f64>,
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).expect("nonempty")
}

/// Runs the study given ground truth on the grid and on the training draws.
pub fn slope_study(
    cfg: &SlopeStudyConfig,
    grid_truth: &[GroundTruthRecord],
    train_truth: &[GroundTruthRecord],
) -> Result<SlopeStudy> {
    let grid: Vec<f64> = grid_truth
        .iter()
        .map(|r| r.motif.as_slope().ok_or(Error::MixedVariants))
        .collect::<Result<_>>()?;
    let truth: Vec<f64> = grid_truth.iter().map(GroundTruthRecord::loss).collect();
    let best = argmin(&truth);
    let peak_slope = grid[best];
    let interior_peak = best > 0 && best + 1 < grid.len();
    let grid_motifs: Vec<Motif> = grid_truth.iter().map(|r| r.motif.clone()).collect();
    let left: Vec<usize> = (0..grid.len()).filter(|&i| grid[i] < peak_slope).collect();

    let mut seeds = Vec::new();
    for &seed in &cfg.seeds {
        let (tr, va) = split_half(train_truth.len(), seed)?;
        let pick = |idx: &[usize]| -> (Vec<Motif>, Vec<f64>) {
            (
                idx.iter().map(|&i| train_truth[i].motif.clone()).collect(),
                idx.iter().map(|&i| train_truth[i].loss()).collect(),
            )
        };
        let (tm, ty) = pick(&tr);
        let (vm, vy) = pick(&va);

        let model = train::<f64>(&tm, &ty, &cfg.petri, seed)?;
        let validation_outer_loss = outer_loss_value(&model.infer_losses(&vm)?, &vy)?;
        let petri = model.infer(&grid_motifs)?;
        let random = PetriHyper {
            outer_steps: 0,
            ..cfg.petri.clone()
        };
        let ablation = train::<f64>(&tm, &ty, &random, seed)?.infer(&grid_motifs)?;

        let points: Vec<(f64, f64)> = tm
            .iter()
            .map(|m| m.as_slope().expect("slope motifs"))
            .zip(normalize(&ty)?)
            .collect();
        let bl = baseline_train(&points, &cfg.baseline, seed)?;
        let baseline: Vec<f64> = grid.iter().map(|&c| baseline_predict(&bl, c)).collect();

        let petri_rho = spearman(&petri, &truth)?;
        let ablation_rho = spearman(&ablation, &truth)?;
        let sub = |v: &[f64]| left.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let baseline_rho_left = if left.len() >= 2 {
            spearman(&sub(&baseline), &sub(&truth)).ok()
        } else {
            None
        };
        let outcome = SeedOutcome {
            seed,
            train_slopes: tm.iter().filter_map(Motif::as_slope).collect(),
            validation_outer_loss,
            petri_best_slope: grid[argmin(&petri)],
            petri,
            ablation,
            baseline,
            petri_rho,
            ablation_rho,
            baseline_rho_left,
        };
        info!(
            "seed {seed}: petri rho {:.3}, ablation rho {:.3}, best slope {:.3}, baseline left rho {:?}",
            outcome.petri_rho, outcome.ablation_rho, outcome.petri_best_slope, outcome.baseline_rho_left
        );
        seeds.push(outcome);
    }
    let med = |f: &dyn Fn(&SeedOutcome) -> f64| median(&seeds.iter().map(f).collect::<Vec<_>>());
    let lefts: Vec<f64> = seeds.iter().filter_map(|s| s.baseline_rho_left).collect();
    Ok(SlopeStudy {
        median_petri_rho: med(&|s| s.petri_rho),
        median_ablation_rho: med(&|s| s.ablation_rho),
        median_best_slope: med(&|s| s.petri_best_slope),
        median_baseline_rho_left: (!lefts.is_empty()).then(|| median(&lefts)),
        grid,
        truth,
        peak_slope,
        interior_peak,
        seeds,
    })
}

impl SlopeStudy {
    /// Normalized performance (higher is better) of ground truth and of
    /// each predictor for one seed, as plot series.
    pub fn series(&self, seed_index: usize) -> Result<Vec<Series>> {
        let s = &self.seeds[seed_index];
        let perf = |v: &[f64]| -> Result<Vec<(f64, f64)>> {
            Ok(self.grid.iter().copied().zip(normalize(v)?.into_iter().map(|z| -z)).collect())
        };
        Ok(vec![
            Series::new("ground truth", perf(&self.truth)?),
            Series::new("petri prediction", perf(&s.petri)?),
            Series::new("baseline prediction", perf(&s.baseline)?),
            Series::new("random synthetic data", perf(&s.ablation)?),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = linspace(0.01, 2.01, 30);
        assert_eq!(g.len(), 30);
        assert_eq!(g[0], 0.01);
        assert!((g[29] - 2.01).abs() < 1e-15);
        let cfg = SlopeStudyConfig::default();
        let t = cfg.training_slopes();
        assert_eq!(t.len(), 30);
        assert!(t.iter().all(|&c| (0.37..=1.5).contains(&c)));
        assert_eq!(t, cfg.training_slopes());
    }
}
