//! The whole chain in memory: data, split, graphs, pretraining, head, metrics.
//!
//! The command-line stages persist the same intermediate values to disk;
//! the ablation sweep and the tests call these functions directly.

use std::collections::BTreeMap;
use std::path::Path;

use log::info;
use rayon::prelude::*;

use crate::config::{DataSource, RunConfig};
use crate::contrastive::{pretrain, Pretrained};
use crate::dataio::{generate_synthetic, parse_log, split, to_sequences, ConceptCatalog, FormatConfig, Interaction, Sequence, TrainTest};
use crate::error::{Error, Result};
use crate::eval::{acc, auc, linear_probe, run_ablation, AblationCell, AblationRow, ProbeResult, ProbeTask, SeedMetrics};
use crate::graph::{build_all_graphs, CentralityKind, InfluenceGraph};
use crate::predict::{fuse, predict, train_head, FusedEmbedding, FusionMode, HeadKind, Predictions, PredictorState};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub interactions: Vec<Interaction>,
    pub catalog: ConceptCatalog,
    /// Rows the parser dropped.
    pub skipped: usize,
}

/// Generates or parses the configured interactions.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.source {
        DataSource::Synthetic => {
            let d = generate_synthetic(&cfg.synth_config())?;
            Ok(Dataset { name: "synthetic".into(), interactions: d.interactions, catalog: d.catalog, skipped: 0 })
        }
        DataSource::File(path) => load_file(path, cfg.format.as_deref()),
    }
}

pub fn load_file(path: &Path, format: Option<&Path>) -> Result<Dataset> {
    let fmt = match format {
        Some(p) => FormatConfig::from_file(p)?,
        None => FormatConfig::default(),
    };
    let parsed = parse_log(path, &fmt)?;
    let name = path.file_stem().map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Dataset { name, interactions: parsed.interactions, catalog: parsed.catalog, skipped: parsed.skipped })
}

/// Split, training-side graphs and per-side sequences.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: TrainTest,
    pub graphs: Vec<InfluenceGraph>,
    pub train: Vec<Sequence>,
    pub test: Vec<Sequence>,
}

/// Graphs are counted on training students only.
pub fn prepare(ds: &Dataset, cfg: &RunConfig) -> Result<Prepared> {
    let split = split(&ds.interactions, cfg.split_spec())?;
    let graphs = build_all_graphs(&split.train, &ds.catalog, &cfg.graph)?;
    let train = to_sequences(&split.train, cfg.max_seq_len);
    let test = to_sequences(&split.test, cfg.max_seq_len);
    Ok(Prepared { split, graphs, train, test })
}

pub fn pretrain_embeddings(ds: &Dataset, prep: &Prepared, cfg: &RunConfig) -> Result<Pretrained> {
    pretrain(&prep.graphs, &ds.catalog, &cfg.augment_config(), &cfg.encoder, &cfg.contrastive_config())
}

pub fn scores_to_metrics(p: &Predictions, seed: u64) -> Result<SeedMetrics> {
    let labels = p.labels_f64();
    Ok(SeedMetrics { seed, auc: auc(&p.scores, &labels)?, acc: acc(&p.scores, &labels, 0.5)?, n_predictions: p.len() })
}

/// Every next-step target as (target exercise row, correctness).
pub fn probe_task(seqs: &[Sequence]) -> ProbeTask {
    let mut t = ProbeTask::default();
    for s in seqs {
        for &(e, a) in &s.steps[1..] {
            t.rows.push(e);
            t.labels.push(a);
        }
    }
    t
}

/// Head metrics on the test students plus the logistic probe over the same targets.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Predictions,
    pub head: SeedMetrics,
    /// `None` when the probe is undefined (single-class training targets).
    pub probe: Option<ProbeResult>,
}

pub fn evaluate(state: &PredictorState, prep: &Prepared, cfg: &RunConfig) -> Result<Evaluation> {
    let predictions = predict(&state.params, &state.fused, &prep.test)?;
    let head = scores_to_metrics(&predictions, cfg.seed)?;
    let probe = match linear_probe(&state.fused.values, &probe_task(&prep.train), &probe_task(&prep.test), &cfg.probe) {
        Ok(p) => Some(p),
        Err(Error::UndefinedMetric(m)) => {
            info!("probe skipped: {m}");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(Evaluation { predictions, head, probe })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub prepared: Prepared,
    pub pretrained: Pretrained,
    pub fused: FusedEmbedding,
    pub state: PredictorState,
    pub evaluation: Evaluation,
}

pub fn train_and_evaluate(ds: &Dataset, prep: &Prepared, pre: &Pretrained, cfg: &RunConfig) -> Result<(FusedEmbedding, PredictorState, Evaluation)> {
    let fused = fuse(&pre.e2e, &pre.c2c, &ds.catalog, cfg.embed_mode)?;
    let state = train_head(&prep.train, &fused, &cfg.head_config())?;
    let evaluation = evaluate(&state, prep, cfg)?;
    Ok((fused, state, evaluation))
}

/// Runs every stage for `cfg.seed`.
pub fn run(ds: &Dataset, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let prepared = prepare(ds, cfg)?;
    let pretrained = pretrain_embeddings(ds, &prepared, cfg)?;
    let (fused, state, evaluation) = train_and_evaluate(ds, &prepared, &pretrained, cfg)?;
    Ok(RunOutcome { prepared, pretrained, fused, state, evaluation })
}

/// Seeds x centralities x embedding modes x heads, in that nesting order.
pub fn ablation_grid(cfg: &RunConfig, dataset: &str) -> Vec<AblationCell> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        for aug in &cfg.grid_aug {
            for mode in &cfg.grid_embed {
                for head in &cfg.grid_head {
                    out.push(AblationCell {
                        dataset: dataset.to_string(),
                        aug: aug.to_string(),
                        embed_mode: mode.to_string(),
                        head: head.to_string(),
                        seed,
                    });
                }
            }
        }
    }
    out
}

/// Runs a sweep. Synthetic data is regenerated per seed; pretraining is
/// shared by all cells with the same (seed, centrality).
pub fn run_grid(cfg: &RunConfig, base: Option<&Dataset>, grid: &[AblationCell]) -> Vec<AblationRow> {
    type Shared = std::result::Result<(Dataset, Prepared, Pretrained), String>;
    let mut keys: Vec<(u64, String)> = grid.iter().map(|c| (c.seed, c.aug.clone())).collect();
    keys.sort();
    keys.dedup();
    let shared: BTreeMap<(u64, String), Shared> = keys
        .into_par_iter()
        .map(|(seed, aug)| {
            let res = (|| {
                let mut c = cfg.with_seed(seed);
                c.augment.centrality = aug.parse::<CentralityKind>()?;
                let ds = match base {
                    Some(d) => d.clone(),
                    None => load_dataset(&c)?,
                };
                let prep = prepare(&ds, &c)?;
                let pre = pretrain_embeddings(&ds, &prep, &c)?;
                Ok::<_, Error>((ds, prep, pre))
            })();
            ((seed, aug), res.map_err(|e| e.to_string()))
        })
        .collect();
    run_ablation(grid, |cell| {
        let (ds, prep, pre) = match &shared[&(cell.seed, cell.aug.clone())] {
            Ok(s) => s,
            Err(e) => return Err(Error::Contract(format!("pretraining failed: {e}"))),
        };
        let mut c = cfg.with_seed(cell.seed);
        c.augment.centrality = cell.aug.parse()?;
        c.embed_mode = cell.embed_mode.parse::<FusionMode>()?;
        c.head.kind = cell.head.parse::<HeadKind>()?;
        let (_, _, ev) = train_and_evaluate(ds, prep, pre, &c)?;
        Ok(ev.head)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.apply_text(
            "synth.n_students = 30\nsynth.n_concepts = 4\nsynth.n_exercises = 12\nsynth.sequence_len = 15\n\
             encoder.d_in = 8\nencoder.hidden = 8\nencoder.d = 8\nencoder.d_z = 4\ncontrastive.epochs = 3\n\
             head.hidden = 8\nhead.epochs = 3\nhead.key_dim = 4\nhead.value_dim = 4\nhead.mem_slots = 3\neval.probe_epochs = 20\n",
        )
        .unwrap();
        c
    }

    #[test]
    fn run_is_deterministic_and_counts_targets() {
        let cfg = tiny();
        let ds = load_dataset(&cfg).unwrap();
        let a = run(&ds, &cfg).unwrap();
        let b = run(&ds, &cfg).unwrap();
        assert_eq!(a.evaluation.head, b.evaluation.head);
        assert_eq!(a.pretrained.e2e, b.pretrained.e2e);
        let targets: usize = a.prepared.test.iter().map(|s| s.n_targets()).sum();
        assert_eq!(a.evaluation.head.n_predictions, targets);
        assert_eq!(probe_task(&a.prepared.test).len(), targets);
        // graphs only see training students
        let train: std::collections::BTreeSet<usize> = a.prepared.split.train_students.iter().copied().collect();
        assert!(a.prepared.train.iter().all(|s| train.contains(&s.student)));
        assert!(a.prepared.test.iter().all(|s| !train.contains(&s.student)));
    }

    #[test]
    fn grid_shapes() {
        let mut cfg = tiny();
        cfg.seeds = vec![0, 1];
        let g = ablation_grid(&cfg, "synthetic");
        assert_eq!(g.len(), 2 * 3 * 3 * 2);
        cfg.grid_embed = vec![];
        assert!(ablation_grid(&cfg, "synthetic").is_empty());
    }

    #[test]
    fn sweep_over_centralities() {
        let mut cfg = tiny();
        cfg.seeds = vec![5];
        cfg.grid_embed = vec![FusionMode::Concate];
        cfg.grid_head = vec![HeadKind::R];
        let grid = ablation_grid(&cfg, "synthetic");
        let rows = run_grid(&cfg, None, &grid);
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.outcome.is_ok() && r.cell.seed == 5));
    }
}
