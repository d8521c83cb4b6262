use std::fmt;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use petri_dish::baseline::{baseline_predict, baseline_train};
use petri_dish::experiment::{evaluate_all, linspace, slope_study};
use petri_dish::ground_truth::{
    CachedEvaluator, CharLmEvaluator, Evaluator, GroundTruthCache, GroundTruthRecord, MnistData, MnistEvaluator,
};
use petri_dish::io::{mnist_dir, read_jsonl, write_atomic, write_jsonl, RunArtifact, RunDir, Series};
use petri_dish::motif::{common_variant, random_encoding, Motif, MotifVariant};
use petri_dish::petri::{normalize, stream_rng, train, PetriHyper};
use petri_dish::search::{self, Arm, LedgerEntry, MotifSpace};
use petri_dish::stats::median;
use petri_dish::PetriModel;
use serde::Serialize;

use crate::config::Config;
use crate::{Cli, Command, MotifArgs, PetriAction, Space, Task};

#[derive(Debug)]
pub struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|c| c.downcast_ref::<ConfigError>().is_some())
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let cfg = Config::resolve(&c.profile, c.config.as_deref(), &c.overrides).map_err(|e| config_error(format!("{e:#}")))?;
    if c.dry_run {
        let text = serde_json::to_string_pretty(&cfg)? + "\n";
        // a closed pipe (e.g. `| head`) is not an error
        let _ = std::io::stdout().lock().write_all(text.as_bytes());
        return Ok(());
    }
    if let Some(j) = c.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("setting up the worker pool")?;
    }
    let cache = match &c.cache {
        Some(p) => GroundTruthCache::open(p)?,
        None => GroundTruthCache::in_memory(),
    };
    match cli.command {
        Command::GroundTruth { task, motifs, out } => ground_truth(&cfg, &cache, c.seed, task, &motifs, &out),
        Command::Petri { action } => match action {
            PetriAction::Train {
                ledger,
                ablation_random_data,
                out,
            } => petri_train(&cfg, c.seed, &ledger, ablation_random_data, &out),
            PetriAction::Infer { model, motifs, out } => petri_infer(&cfg, c.seed, &model, &motifs, &out),
        },
        Command::Baseline { ledger, grid, out } => baseline(&cfg, c.seed, &ledger, grid, &out),
        Command::Search { space, arms, runs, out } => search_cmd(&cfg, &cache, c.seed, space, &arms, runs, &out),
        Command::SlopeStudy { out } => study(&cfg, &cache, &out),
    }
}

fn mnist_evaluator(cfg: &Config) -> Result<MnistEvaluator> {
    let dir = mnist_dir(cfg.mnist_dir.as_deref());
    let data = MnistData::load(&dir, &cfg.mnist)?;
    Ok(MnistEvaluator {
        config: cfg.mnist.clone(),
        data,
    })
}

fn motifs_from(cfg: &Config, seed: u64, args: &MotifArgs) -> Result<Vec<Motif>> {
    let mut out = Vec::new();
    for &c in &args.slopes {
        out.push(Motif::slope(c)?);
    }
    if let Some(n) = args.grid {
        for c in linspace(cfg.study.grid_min, cfg.study.grid_max, n) {
            out.push(Motif::slope(c)?);
        }
    }
    if let Some(n) = args.random_cells {
        let mut rng = stream_rng(seed, 60);
        out.extend((0..n).map(|_| Motif::cell(random_encoding(&mut rng))));
    }
    if let Some(p) = &args.motifs {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let list: Vec<Motif> = serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
        out.extend(list);
    }
    if out.is_empty() {
        return Err(config_error("no motifs given (use --slopes, --grid, --random-cells or --motifs)"));
    }
    common_variant(&out)?;
    Ok(out)
}

/// Slope curve of `(x, y)` pairs sorted by x, duplicates dropped.
fn slope_series(label: &str, xs: &[f64], ys: &[f64]) -> Series {
    let mut pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    Series::new(label, pts)
}

fn save_run(out: &Path, cfg: &Config, seeds: Vec<u64>, records: Vec<GroundTruthRecord>, petri_model: Option<String>, curves: Vec<(String, Vec<Series>)>) -> Result<RunDir> {
    let dir = RunDir::create(out)?;
    RunArtifact {
        config: serde_json::to_value(cfg)?,
        seeds,
        records,
        petri_model,
        curves,
    }
    .save(&dir)?;
    Ok(dir)
}

fn ground_truth(cfg: &Config, cache: &GroundTruthCache, seed: u64, task: Task, args: &MotifArgs, out: &Path) -> Result<()> {
    let motifs = motifs_from(cfg, seed, args)?;
    let records = match task {
        Task::MnistSlope => {
            let ev = mnist_evaluator(cfg)?;
            evaluate_all(&CachedEvaluator { inner: &ev, cache }, &motifs, seed)?
        }
        Task::CharLm => {
            let ev = CharLmEvaluator::bundled(cfg.char_lm.clone())?;
            evaluate_all(&CachedEvaluator { inner: &ev, cache }, &motifs, seed)?
        }
    };
    let mut curves = Vec::new();
    if common_variant(&motifs)? == MotifVariant::ActivationSlope {
        let xs: Vec<f64> = motifs.iter().filter_map(Motif::as_slope).collect();
        let ys: Vec<f64> = records.iter().map(|r| r.metric).collect();
        curves.push(("ground_truth".to_string(), vec![slope_series("ground truth", &xs, &ys)]));
    }
    for r in &records {
        info!("{} -> {:.6}", r.motif.key(), r.metric);
    }
    save_run(out, cfg, vec![seed], records, None, curves)?;
    Ok(())
}

fn petri_hyper(cfg: &Config, variant: MotifVariant) -> PetriHyper {
    match variant {
        MotifVariant::ActivationSlope => cfg.study.petri.clone(),
        MotifVariant::Cell => cfg.search.petri.clone(),
    }
}

fn petri_train(cfg: &Config, seed: u64, ledger: &Path, ablation: bool, out: &Path) -> Result<()> {
    let records: Vec<GroundTruthRecord> = read_jsonl(ledger)?;
    let motifs: Vec<Motif> = records.iter().map(|r| r.motif.clone()).collect();
    let losses: Vec<f64> = records.iter().map(GroundTruthRecord::loss).collect();
    let variant = common_variant(&motifs)?;
    let mut hyper = petri_hyper(cfg, variant);
    if ablation {
        hyper.outer_steps = 0;
    }
    let model = train::<f64>(&motifs, &losses, &hyper, seed)?;
    let mut curves = Vec::new();
    if !model.outer_loss_history.is_empty() {
        let pts = model
            .outer_loss_history
            .iter()
            .enumerate()
            .map(|(i, &l)| (i as f64, l))
            .collect();
        curves.push(("outer_loss".to_string(), vec![Series::new("outer loss", pts)]));
    }
    let dir = save_run(out, cfg, vec![seed], records, Some("petri_model.json".into()), curves)?;
    model.save(&dir.petri_model())?;
    info!("saved {}", dir.petri_model().display());
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    motif: &'a Motif,
    predicted: f64,
}

fn petri_infer(cfg: &Config, seed: u64, model: &Path, args: &MotifArgs, out: &Path) -> Result<()> {
    let model = PetriModel::load(model)?;
    let motifs = motifs_from(cfg, seed, args)?;
    let pred = model.infer(&motifs)?;
    let dir = RunDir::create(out)?;
    let lines: Vec<Prediction> = motifs.iter().zip(&pred).map(|(m, &p)| Prediction { motif: m, predicted: p }).collect();
    write_jsonl(&dir.root.join("predictions.jsonl"), &lines)?;
    if common_variant(&motifs)? == MotifVariant::ActivationSlope {
        let xs: Vec<f64> = motifs.iter().filter_map(Motif::as_slope).collect();
        let perf: Vec<f64> = pred.iter().map(|z| -z).collect();
        let s = slope_series("petri prediction", &xs, &perf);
        petri_dish::io::emit_curve(&dir.curve("petri_prediction"), &[s], petri_dish::io::CurveFormat::Csv)?;
    }
    Ok(())
}

fn baseline(cfg: &Config, seed: u64, ledger: &Path, grid: usize, out: &Path) -> Result<()> {
    let records: Vec<GroundTruthRecord> = read_jsonl(ledger)?;
    let slopes: Vec<f64> = records
        .iter()
        .map(|r| r.motif.as_slope().ok_or_else(|| config_error("the baseline needs slope motifs")))
        .collect::<Result<_>>()?;
    let losses: Vec<f64> = records.iter().map(GroundTruthRecord::loss).collect();
    let points: Vec<(f64, f64)> = slopes.iter().copied().zip(normalize(&losses)?).collect();
    let model = baseline_train(&points, &cfg.study.baseline, seed)?;
    let xs = linspace(cfg.study.grid_min, cfg.study.grid_max, grid);
    let perf: Vec<f64> = xs.iter().map(|&c| -baseline_predict(&model, c)).collect();
    let dir = save_run(
        out,
        cfg,
        vec![seed],
        records,
        None,
        vec![("baseline_prediction".to_string(), vec![slope_series("baseline prediction", &xs, &perf)])],
    )?;
    write_atomic(
        &dir.root.join("baseline_model.json"),
        (serde_json::to_string_pretty(&model)? + "\n").as_bytes(),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SearchLine<'a> {
    run_seed: u64,
    #[serde(flatten)]
    entry: &'a LedgerEntry,
}

fn search_cmd(cfg: &Config, cache: &GroundTruthCache, seed: u64, space: Space, arms: &[String], runs: u64, out: &Path) -> Result<()> {
    let arms: Vec<Arm> = arms
        .iter()
        .map(|a| a.parse().map_err(|e: petri_dish::Error| config_error(e.to_string())))
        .collect::<Result<_>>()?;
    if runs == 0 {
        bail!(config_error("--runs must be positive"));
    }
    let (space, scfg) = match space {
        Space::Cell => (MotifSpace::Cell, cfg.search.clone()),
        Space::Slope => (
            MotifSpace::SigmoidSlope {
                min: cfg.study.grid_min,
                max: cfg.study.grid_max,
            },
            search::SearchConfig {
                petri: cfg.study.petri.clone(),
                ..cfg.search.clone()
            },
        ),
    };
    let dir = RunDir::create(out)?;
    write_atomic(&dir.config(), (serde_json::to_string_pretty(cfg)? + "\n").as_bytes())?;
    let cell_ev;
    let slope_ev;
    let evaluator: &dyn Evaluator = match space {
        MotifSpace::Cell => {
            cell_ev = CharLmEvaluator::bundled(cfg.char_lm.clone())?;
            &cell_ev
        }
        MotifSpace::SigmoidSlope { .. } => {
            slope_ev = mnist_evaluator(cfg)?;
            &slope_ev
        }
    };
    let cached = CachedEvaluator { inner: evaluator, cache };
    let mut ledger = String::new();
    let mut summary = String::from("arm,run_seed,best_loss,evaluations\n");
    let mut best: Vec<(Arm, u64, f64)> = Vec::new();
    for r in 0..runs {
        let run_seed = seed.wrapping_add(r);
        for &arm in &arms {
            let outcome = search::run(&space, &scfg, &cached, arm, run_seed)?;
            for e in &outcome.ledger {
                ledger.push_str(&serde_json::to_string(&SearchLine { run_seed, entry: e })?);
                ledger.push('\n');
            }
            write_atomic(
                &dir.curve(&format!("trajectory_{}_{run_seed}", arm.name())),
                search::trajectory_csv(&outcome.trajectory).as_bytes(),
            )?;
            let loss = outcome.best.loss();
            summary.push_str(&format!("{},{run_seed},{loss:.16e},{}\n", arm.name(), outcome.ledger.len()));
            info!("{} seed {run_seed}: best loss {loss:.5} ({})", arm.name(), outcome.best.motif.key());
            best.push((arm, run_seed, loss));
        }
    }
    write_atomic(&dir.ledger(), ledger.as_bytes())?;
    write_atomic(&dir.root.join("summary.csv"), summary.as_bytes())?;
    let report = comparison(&arms, runs, seed, &best);
    write_atomic(&dir.root.join("comparison.txt"), report.as_bytes())?;
    print!("{report}");
    Ok(())
}

/// Paired comparison of the first arm against each other arm.
fn comparison(arms: &[Arm], runs: u64, seed: u64, best: &[(Arm, u64, f64)]) -> String {
    let get = |a: Arm, s: u64| best.iter().find(|b| b.0 == a && b.1 == s).map(|b| b.2);
    let mut out = String::new();
    for &a in arms {
        let v: Vec<f64> = (0..runs).filter_map(|r| get(a, seed + r)).collect();
        out.push_str(&format!("{}: median best loss {:.6}\n", a.name(), median(&v)));
    }
    if let Some((&first, rest)) = arms.split_first() {
        for &other in rest {
            let wins = (0..runs)
                .filter(|&r| match (get(first, seed + r), get(other, seed + r)) {
                    (Some(x), Some(y)) => x <= y,
                    _ => false,
                })
                .count();
            out.push_str(&format!("{} <= {} in {wins} of {runs} paired runs\n", first.name(), other.name()));
        }
    }
    out
}

fn study(cfg: &Config, cache: &GroundTruthCache, out: &Path) -> Result<()> {
    let ev = mnist_evaluator(cfg)?;
    let cached = CachedEvaluator { inner: &ev, cache };
    let sc = &cfg.study;
    let grid: Vec<Motif> = sc.grid().into_iter().map(Motif::slope).collect::<petri_dish::Result<_>>()?;
    let draws: Vec<Motif> = sc.training_slopes().into_iter().map(Motif::slope).collect::<petri_dish::Result<_>>()?;
    info!("ground truth on {} grid slopes and {} training draws", grid.len(), draws.len());
    let grid_truth = evaluate_all(&cached, &grid, sc.eval_seed)?;
    let train_truth = evaluate_all(&cached, &draws, sc.eval_seed)?;
    let result = slope_study(sc, &grid_truth, &train_truth)?;
    let mut curves = Vec::new();
    for (i, s) in result.seeds.iter().enumerate() {
        curves.push((format!("figure1_seed{}", s.seed), result.series(i)?));
    }
    let mut records = grid_truth;
    records.extend(train_truth);
    let dir = save_run(out, cfg, sc.seeds.clone(), records, None, curves)?;
    write_atomic(
        &dir.root.join("study.json"),
        (serde_json::to_string_pretty(&result)? + "\n").as_bytes(),
    )?;
    println!(
        "peak slope {:.4} (interior: {}); median petri rho {:.3}, ablation rho {:.3}, best predicted slope {:.4}, baseline rho left of peak {:?}",
        result.peak_slope,
        result.interior_peak,
        result.median_petri_rho,
        result.median_ablation_rho,
        result.median_best_slope,
        result.median_baseline_rho_left
    );
    Ok(())
}
