//! Surrogate-assisted evolutionary search: warm start, GA proposals, Petri
//! dish ranking, ground-truth evaluation of the most promising few.

use std::collections::HashSet;

use log::{info, warn};
use rand::seq::{index, IndexedRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::evaluate_all;
use crate::ground_truth::{Evaluator, GroundTruthRecord};
use crate::motif::{crossover, mutate, random_encoding, Motif, MotifVariant};
use crate::petri::{stream_rng, PetriHyper, PetriModel};

const STREAM_WARM: u64 = 40;
const STREAM_GA: u64 = 41;
const STREAM_PICK: u64 = 42;

/// A search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "kebab-case")]
pub enum MotifSpace {
    SigmoidSlope { min: f64, max: f64 },
    Cell,
}

impl MotifSpace {
    pub fn slopes() -> Self {
        MotifSpace::SigmoidSlope { min: 0.01, max: 2.01 }
    }

    pub fn variant(&self) -> MotifVariant {
        match self {
            MotifSpace::SigmoidSlope { .. } => MotifVariant::ActivationSlope,
            MotifSpace::Cell => MotifVariant::Cell,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Motif {
        match *self {
            MotifSpace::SigmoidSlope { min, max } => {
                Motif::slope(rng.random_range(min..=max)).expect("positive range")
            }
            MotifSpace::Cell => Motif::cell(random_encoding(rng)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    pub parents: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub slope_sigma: f64,
    /// Attempts allowed per requested child before giving up.
    pub attempts_per_child: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            parents: 20,
            crossover_rate: 0.3,
            mutation_rate: 0.05,
            slope_sigma: 0.05,
            attempts_per_child: 100,
        }
    }
}

/// How each iteration chooses which candidates get a ground-truth evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Top `k` of `m` GA candidates by Petri dish prediction.
    PetriGa,
    /// `k` of the `m` GA candidates chosen uniformly at random.
    RandomSelect,
    /// `k` GA candidates, all evaluated (no surrogate).
    GaOnly,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::PetriGa => "petri-ga",
            Arm::RandomSelect => "random-select",
            Arm::GaOnly => "ga-only",
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "petri-ga" => Ok(Arm::PetriGa),
            "random-select" => Ok(Arm::RandomSelect),
            "ga-only" => Ok(Arm::GaOnly),
            _ => Err(Error::InvalidArgument(format!("unknown arm `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub warm_start: usize,
    pub m: usize,
    pub k: usize,
    pub iterations: usize,
    pub budget: usize,
    pub eval_seed: u64,
    pub petri: PetriHyper,
    pub ga: GaConfig,
    /// Keep training one Petri dish across iterations instead of starting over.
    pub petri_warm_start: bool,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.warm_start < 2 {
            return bad("warm start needs at least two motifs");
        }
        if self.k == 0 || self.k > self.m {
            return bad("need 0 < k <= m");
        }
        if self.budget < self.warm_start {
            return bad("budget is smaller than the warm start");
        }
        if self.ga.parents == 0 {
            return bad("ga.parents must be positive");
        }
        self.petri.validate()
    }
}

/// One ground-truth evaluation in the run ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub iteration: usize,
    pub arm: Arm,
    pub budget_used: usize,
    /// Normalized Petri dish prediction, when one was made.
    pub predicted: Option<f64>,
    pub record: GroundTruthRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub budget_used: usize,
    pub best_loss: f64,
}

#[derive(Clone, Debug)]
pub struct NasState {
    pub evaluated: Vec<GroundTruthRecord>,
    pub iteration: usize,
    pub rng_seed: u64,
    pub budget_used: usize,
    pub ledger: Vec<LedgerEntry>,
    pub trajectory: Vec<TrajectoryPoint>,
    petri: Option<PetriModel<f64>>,
}

impl NasState {
    pub fn best(&self) -> Option<&GroundTruthRecord> {
        self.evaluated
            .iter()
            .min_by(|a, b| a.loss().total_cmp(&b.loss()).then_with(|| a.motif.key().cmp(&b.motif.key())))
    }

    fn seen(&self) -> HashSet<String> {
        self.evaluated.iter().map(|r| r.motif.key()).collect()
    }

    fn record(&mut self, arm: Arm, batch: Vec<(GroundTruthRecord, Option<f64>)>) {
        for (record, predicted) in batch {
            self.budget_used += 1;
            self.ledger.push(LedgerEntry {
                iteration: self.iteration,
                arm,
                budget_used: self.budget_used,
                predicted,
                record: record.clone(),
            });
            self.evaluated.push(record);
        }
        let best_loss = self.best().map_or(f64::INFINITY, GroundTruthRecord::loss);
        self.trajectory.push(TrajectoryPoint {
            iteration: self.iteration,
            budget_used: self.budget_used,
            best_loss,
        });
    }
}

/// Evaluates `n` distinct random motifs.
pub fn warm_start<E: Evaluator>(
    space: &MotifSpace,
    n: usize,
    evaluator: &E,
    eval_seed: u64,
    seed: u64,
    arm: Arm,
) -> Result<NasState> {
    if n < 2 {
        return Err(Error::InvalidArgument("warm start needs at least two motifs".into()));
    }
    let mut rng = stream_rng(seed, STREAM_WARM);
    let mut keys = HashSet::new();
    let mut motifs = Vec::with_capacity(n);
    let mut attempts = 0;
    while motifs.len() < n {
        attempts += 1;
        if attempts > 1000 * n {
            return Err(Error::ExhaustedSpace {
                wanted: n,
                got: motifs.len(),
                attempts,
            });
        }
        let m = space.sample(&mut rng);
        if keys.insert(m.key()) {
            motifs.push(m);
        }
    }
    let records = evaluate_all(evaluator, &motifs, eval_seed)?;
    let mut state = NasState {
        evaluated: Vec::new(),
        iteration: 0,
        rng_seed: seed,
        budget_used: 0,
        ledger: Vec::new(),
        trajectory: Vec::new(),
        petri: None,
    };
    state.record(arm, records.into_iter().map(|r| (r, None)).collect());
    Ok(state)
}

fn child<R: Rng + ?Sized>(space: &MotifSpace, parents: &[&Motif], ga: &GaConfig, rng: &mut R) -> Motif {
    let a = *parents.choose(rng).expect("parents nonempty");
    match (space, a) {
        (MotifSpace::SigmoidSlope { max, .. }, Motif::ActivationSlope { slope }) => {
            let noise = Normal::new(0.0, ga.slope_sigma).expect("sigma is finite");
            let c = (slope + noise.sample(rng)).min(*max);
            let c = if c > 0.0 { c } else { f64::MIN_POSITIVE };
            Motif::slope(c).expect("positive")
        }
        (MotifSpace::Cell, Motif::Cell { encoding: ea }) => {
            let b = *parents.choose(rng).expect("parents nonempty");
            let eb = b.as_cell().expect("cell parents");
            let x = crossover(ea, eb, ga.crossover_rate, rng).expect("equal lengths");
            Motif::cell(mutate(&x, ga.mutation_rate, rng))
        }
        _ => unreachable!("parents come from the space"),
    }
}

/// Elitist GA proposals: `m` new motifs bred from the best evaluated ones.
pub fn generate<R: Rng + ?Sized>(
    state: &NasState,
    space: &MotifSpace,
    m: usize,
    ga: &GaConfig,
    rng: &mut R,
) -> Result<Vec<Motif>> {
    if state.evaluated.is_empty() {
        return Err(Error::InvalidArgument("cannot generate from an empty state".into()));
    }
    let mut ranked: Vec<&GroundTruthRecord> = state.evaluated.iter().collect();
    ranked.sort_by(|a, b| a.loss().total_cmp(&b.loss()).then_with(|| a.motif.key().cmp(&b.motif.key())));
    let parents: Vec<&Motif> = ranked.iter().take(ga.parents).map(|r| &r.motif).collect();
    let mut seen = state.seen();
    let mut out = Vec::with_capacity(m);
    let limit = m * ga.attempts_per_child.max(1);
    let mut attempts = 0;
    while out.len() < m {
        if attempts == limit {
            return Err(Error::ExhaustedSpace {
                wanted: m,
                got: out.len(),
                attempts,
            });
        }
        attempts += 1;
        let c = child(space, &parents, ga, rng);
        if seen.insert(c.key()) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Indices of the `k` lowest predictions, ties broken by motif key.
pub fn top_k(candidates: &[Motif], predicted: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    idx.sort_by(|&a, &b| {
        predicted[a]
            .total_cmp(&predicted[b])
            .then_with(|| candidates[a].key().cmp(&candidates[b].key()))
    });
    idx.truncate(k);
    idx
}

fn petri_model<'a>(state: &'a mut NasState, cfg: &SearchConfig, variant: MotifVariant) -> Result<&'a PetriModel<f64>> {
    let motifs: Vec<Motif> = state.evaluated.iter().map(|r| r.motif.clone()).collect();
    let losses: Vec<f64> = state.evaluated.iter().map(GroundTruthRecord::loss).collect();
    let seed = state.rng_seed.wrapping_add(state.iteration as u64);
    let mut model = match state.petri.take() {
        Some(model) if cfg.petri_warm_start => model,
        _ => PetriModel::new(variant, &cfg.petri, seed)?,
    };
    // motifs that already diverge on the current synthetic data carry no gradient
    let keep: Vec<usize> = model
        .screen(&motifs)?
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.map(|_| i))
        .collect();
    if keep.len() < motifs.len() {
        warn!("training the petri dish without {} diverging motifs", motifs.len() - keep.len());
    }
    let motifs: Vec<Motif> = keep.iter().map(|&i| motifs[i].clone()).collect();
    let losses: Vec<f64> = keep.iter().map(|&i| losses[i]).collect();
    model.fit(&motifs, &losses, cfg.petri.outer_steps)?;
    Ok(state.petri.insert(model))
}

/// One round: propose, select, evaluate, record.
pub fn nas_iteration<E: Evaluator>(
    state: &mut NasState,
    space: &MotifSpace,
    cfg: &SearchConfig,
    evaluator: &E,
    arm: Arm,
) -> Result<()> {
    state.iteration += 1;
    let k = cfg.k.min(cfg.budget.saturating_sub(state.budget_used));
    if k == 0 {
        state.record(arm, Vec::new());
        return Ok(());
    }
    let mut rng = stream_rng(state.rng_seed, STREAM_GA + ((state.iteration as u64) << 8));
    let pool = if arm == Arm::GaOnly { k } else { cfg.m };
    let candidates = generate(state, space, pool, &cfg.ga, &mut rng)?;
    let (chosen, predicted): (Vec<usize>, Vec<Option<f64>>) = match arm {
        Arm::PetriGa => {
            let model = petri_model(state, cfg, space.variant())?;
            let pred = model.screen(&candidates)?;
            let diverged = pred.iter().filter(|p| p.is_none()).count();
            if diverged > 0 {
                warn!("{diverged} candidates diverged in the petri dish; ranking them last");
            }
            let ranked: Vec<f64> = pred.iter().map(|p| p.unwrap_or(f64::INFINITY)).collect();
            let idx = top_k(&candidates, &ranked, k);
            let p = idx.iter().map(|&i| pred[i]).collect();
            (idx, p)
        }
        Arm::RandomSelect => {
            let mut pick = stream_rng(state.rng_seed, STREAM_PICK + ((state.iteration as u64) << 8));
            let mut idx = index::sample(&mut pick, candidates.len(), k).into_vec();
            idx.sort_unstable();
            (idx, vec![None; k])
        }
        Arm::GaOnly => ((0..k).collect(), vec![None; k]),
    };
    let motifs: Vec<Motif> = chosen.iter().map(|&i| candidates[i].clone()).collect();
    let records = evaluate_all(evaluator, &motifs, cfg.eval_seed)?;
    state.record(arm, records.into_iter().zip(predicted).collect());
    info!(
        "{} iteration {}: best loss {:.5} after {} evaluations",
        arm.name(),
        state.iteration,
        state.best().map_or(f64::NAN, GroundTruthRecord::loss),
        state.budget_used
    );
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub arm: Arm,
    pub best: GroundTruthRecord,
    pub ledger: Vec<LedgerEntry>,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Warm start followed by `cfg.iterations` rounds.
pub fn run<E: Evaluator>(space: &MotifSpace, cfg: &SearchConfig, evaluator: &E, arm: Arm, seed: u64) -> Result<SearchOutcome> {
    cfg.validate()?;
    let mut state = warm_start(space, cfg.warm_start, evaluator, cfg.eval_seed, seed, arm)?;
    for _ in 0..cfg.iterations {
        nas_iteration(&mut state, space, cfg, evaluator, arm)?;
    }
    Ok(SearchOutcome {
        arm,
        best: state.best().expect("warm start is nonempty").clone(),
        ledger: state.ledger,
        trajectory: state.trajectory,
    })
}

/// Summary rows `iteration,best_loss,budget_used` as CSV text.
pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut s = String::from("iteration,best_loss,budget_used\n");
    for p in points {
        s.push_str(&format!("{},{:.16e},{}\n", p.iteration, p.best_loss, p.budget_used));
    }
    s
}
