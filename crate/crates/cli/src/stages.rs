//! Stage implementations. Each reads its predecessors' artifacts from the
//! output directory and writes its own plus a manifest.

use std::collections::{BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use biclkt_core::checkpoint::Checkpoint;
use biclkt_core::config::{DataSource, RunConfig};
use biclkt_core::contrastive::{pretrain, write_trace, EmbeddingTable};
use biclkt_core::dataio::{generate_synthetic, split, to_sequences, write_canonical, Interaction, Sequence};
use biclkt_core::eval::{format_table, gnuplot_dump, write_ablation_csv, AblationCell, AblationRow, SeedMetrics};
use biclkt_core::graph::{build_all_graphs, read_graphs, write_edge_list, write_node_list, InfluenceGraph};
use biclkt_core::pipeline::{ablation_grid, load_file, probe_task, run_grid, scores_to_metrics, Dataset};
use biclkt_core::predict::{fuse, predict, train_head, FusedEmbedding, HeadKind, HeadParams};
use biclkt_core::eval::linear_probe;
use log::info;

use crate::fail::{Fail, Outcome};
use crate::manifest::Manifest;

pub const SYNTH_LOG: &str = "synthetic.csv";
const SYNTH_TRUTH: &str = "synthetic_mastery.csv";
const INTERACTIONS: &str = "interactions.csv";
const SPLIT: &str = "split.csv";
const NODES: &str = "graphs/nodes.csv";
const EDGES: &str = "graphs/edges.csv";
pub const E2E: &str = "e2e.csv";
pub const C2C: &str = "c2c.csv";
const PRETRAIN_TRACE: &str = "pretrain_trace.csv";
const ENCODERS: &str = "encoders.ckpt";
const HEAD: &str = "head.ckpt";
const HEAD_TRACE: &str = "head_trace.csv";
pub const METRICS: &str = "metrics.csv";
const PROBE: &str = "probe.csv";
const PREDICTIONS: &str = "predictions.csv";
const REPORT: &str = "report.txt";
pub const ABLATION_CSV: &str = "ablation.csv";
const ABLATION_TXT: &str = "ablation.txt";
const ABLATION_DAT: &str = "ablation.dat";

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub force: bool,
    pub fingerprint: String,
}

impl Ctx {
    pub fn new(cfg: RunConfig, force: bool) -> Self {
        let fingerprint = cfg.fingerprint();
        Ctx { out: cfg.out.clone(), cfg, force, fingerprint }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Outcome<BufWriter<File>> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Fail::io(dir, e))?;
        }
        File::create(&p).map(BufWriter::new).map_err(|e| Fail::io(&p, e))
    }

    fn write_with(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Outcome<()> {
        let mut w = self.create(name)?;
        f(&mut w).and_then(|_| w.flush()).map_err(|e| Fail::io(&self.path(name), e))
    }

    fn open(&self, name: &str) -> Outcome<BufReader<File>> {
        let p = self.path(name);
        File::open(&p).map(BufReader::new).map_err(|e| Fail::io(&p, e))
    }

    /// Loads a predecessor manifest and checks it was made by this config
    /// and that its outputs are unchanged on disk.
    fn require(&self, stage: &str) -> Outcome<Manifest> {
        let m = Manifest::load(&self.out, stage)?;
        if self.force {
            return Ok(m);
        }
        if m.fingerprint != self.fingerprint {
            return Err(Fail::artifact(format!(
                "{stage} artifacts were made with config {} but the current config is {}; run {stage} again or pass --force",
                m.fingerprint, self.fingerprint
            )));
        }
        for (name, want) in &m.outputs {
            let p = self.path(name);
            if !p.exists() {
                return Err(Fail::artifact(format!("{} is missing: run {stage} first", p.display())));
            }
            if crate::manifest::hash_file(&p)? != *want {
                return Err(Fail::artifact(format!("{} changed since {stage} wrote it; run {stage} again or pass --force", p.display())));
            }
        }
        Ok(m)
    }

    fn finish(&self, mut m: Manifest, start: Instant, outputs: &[&str]) -> Outcome<()> {
        for o in outputs {
            m.record_output(&self.out, o)?;
        }
        m.wall_ms = start.elapsed().as_millis();
        m.save(&self.out)?;
        info!("{} done in {} ms", m.stage, m.wall_ms);
        Ok(())
    }

    fn ensure_out(&self) -> Outcome<()> {
        fs::create_dir_all(&self.out).map_err(|e| Fail::io(&self.out, e))
    }
}

pub fn synth(ctx: &Ctx) -> Outcome<()> {
    let start = Instant::now();
    ctx.ensure_out()?;
    let d = generate_synthetic(&ctx.cfg.synth_config())?;
    ctx.write_with(SYNTH_LOG, |w| write_canonical(w, &d.interactions, &d.catalog))?;
    ctx.write_with(SYNTH_TRUTH, |w| {
        writeln!(w, "student_id,exercise_id,order,mastery")?;
        for (it, m) in d.interactions.iter().zip(&d.mastery) {
            writeln!(w, "{},{},{},{m}", d.catalog.students()[it.student], d.catalog.exercises()[it.exercise], it.order)?;
        }
        Ok(())
    })?;
    let mut m = Manifest::new("synth", &ctx.fingerprint);
    m.notes.insert("interactions".into(), d.interactions.len().to_string());
    println!("wrote {} synthetic interactions to {}", d.interactions.len(), ctx.path(SYNTH_LOG).display());
    ctx.finish(m, start, &[SYNTH_LOG, SYNTH_TRUTH])
}

/// Reads the configured source, or the synthetic log written by `synth`.
fn source_dataset(ctx: &Ctx, m: &mut Manifest) -> Outcome<Dataset> {
    match &ctx.cfg.source {
        DataSource::Synthetic => {
            ctx.require("synth")?;
            let path = ctx.path(SYNTH_LOG);
            m.record_input(&path, SYNTH_LOG)?;
            let mut ds = load_file(&path, None)?;
            ds.name = "synthetic".into();
            Ok(ds)
        }
        DataSource::File(path) => {
            if !path.exists() {
                return Err(Fail::new(crate::fail::EXIT_DATA, format!("data source {} does not exist", path.display())));
            }
            m.record_input(path, "source")?;
            Ok(load_file(path, ctx.cfg.format.as_deref())?)
        }
    }
}

pub fn ingest(ctx: &Ctx) -> Outcome<()> {
    let start = Instant::now();
    ctx.ensure_out()?;
    let mut m = Manifest::new("ingest", &ctx.fingerprint);
    let ds = source_dataset(ctx, &mut m)?;
    let tt = split(&ds.interactions, ctx.cfg.split_spec())?;
    ctx.write_with(INTERACTIONS, |w| write_canonical(w, &ds.interactions, &ds.catalog))?;
    ctx.write_with(SPLIT, |w| {
        writeln!(w, "student_id,side")?;
        for (side, ids) in [("train", &tt.train_students), ("test", &tt.test_students)] {
            for &s in ids.iter() {
                writeln!(w, "{},{side}", ds.catalog.students()[s])?;
            }
        }
        Ok(())
    })?;
    let c = &ds.catalog;
    let facts = [
        ("dataset", ds.name.clone()),
        ("students", c.n_students().to_string()),
        ("concepts", c.n_concepts().to_string()),
        ("exercises", c.n_exercises().to_string()),
        ("interactions", ds.interactions.len().to_string()),
        ("skipped_rows", ds.skipped.to_string()),
    ];
    let summary: Vec<String> = facts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("ingest: {}", summary.join(" "));
    for (k, v) in facts {
        m.notes.insert(k.into(), v);
    }
    ctx.finish(m, start, &[INTERACTIONS, SPLIT])
}

struct Loaded {
    ds: Dataset,
    train: Vec<Interaction>,
    test: Vec<Interaction>,
}

fn load_ingested(ctx: &Ctx) -> Outcome<Loaded> {
    let im = ctx.require("ingest")?;
    let mut ds = load_file(&ctx.path(INTERACTIONS), None)?;
    ds.name = im.notes.get("dataset").cloned().unwrap_or_else(|| "data".into());
    let mut train_ids = HashSet::new();
    let mut seen = BTreeSet::new();
    let text = fs::read_to_string(ctx.path(SPLIT)).map_err(|e| Fail::io(&ctx.path(SPLIT), e))?;
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let (id, side) = line.split_once(',').ok_or_else(|| Fail::artifact(format!("bad line in {SPLIT}: {line}")))?;
        let s = ds.catalog.student_id(id).ok_or_else(|| Fail::artifact(format!("{SPLIT} names unknown student {id}")))?;
        seen.insert(s);
        if side == "train" {
            train_ids.insert(s);
        }
    }
    if seen.len() != ds.catalog.n_students() {
        return Err(Fail::artifact(format!("{SPLIT} does not cover every student; run ingest again")));
    }
    let (train, test) = ds.interactions.iter().cloned().partition(|it| train_ids.contains(&it.student));
    Ok(Loaded { ds, train, test })
}

pub fn build_graphs(ctx: &Ctx) -> Outcome<()> {
    let start = Instant::now();
    let l = load_ingested(ctx)?;
    let graphs = build_all_graphs(&l.train, &l.ds.catalog, &ctx.cfg.graph)?;
    ctx.write_with(NODES, |w| write_node_list(w, &graphs, &l.ds.catalog))?;
    ctx.write_with(EDGES, |w| write_edge_list(w, &graphs, &l.ds.catalog))?;
    let mut m = Manifest::new("build-graphs", &ctx.fingerprint);
    m.record_input(&ctx.path(INTERACTIONS), INTERACTIONS)?;
    let edges: usize = graphs.iter().map(|g| g.edges.len()).sum();
    m.notes.insert("graphs".into(), graphs.len().to_string());
    m.notes.insert("edges".into(), edges.to_string());
    println!("build-graphs: {} graphs, {edges} edges", graphs.len());
    ctx.finish(m, start, &[NODES, EDGES])
}

fn load_graphs(ctx: &Ctx, ds: &Dataset) -> Outcome<Vec<InfluenceGraph>> {
    ctx.require("build-graphs")?;
    Ok(read_graphs(ctx.open(NODES)?, ctx.open(EDGES)?, &ds.catalog)?)
}

pub fn pretrain_stage(ctx: &Ctx) -> Outcome<()> {
    let start = Instant::now();
    let l = load_ingested(ctx)?;
    let graphs = load_graphs(ctx, &l.ds)?;
    let cfg = &ctx.cfg;
    let out = pretrain(&graphs, &l.ds.catalog, &cfg.augment_config(), &cfg.encoder, &cfg.contrastive_config())?;
    ctx.write_with(E2E, |w| out.e2e.write(w))?;
    ctx.write_with(C2C, |w| out.c2c.write(w))?;
    ctx.write_with(PRETRAIN_TRACE, |w| write_trace(w, &out.trace))?;
    let mut cp = Checkpoint::new().with_meta("fingerprint", &ctx.fingerprint).with_meta("kind", "encoders");
    for (prefix, p) in [("node", &out.node_params), ("graph", &out.graph_params)] {
        for (n, t) in p.names().into_iter().zip(p.tensors()) {
            cp.push(format!("{prefix}.{n}"), t.clone());
        }
    }
    cp.save(&ctx.path(ENCODERS))?;
    let mut m = Manifest::new("pretrain", &ctx.fingerprint);
    m.record_input(&ctx.path(EDGES), EDGES)?;
    if let (Some(a), Some(b)) = (out.trace.first(), out.trace.last()) {
        println!("pretrain: joint loss {:.5} (epoch {}) -> {:.5} (epoch {})", a.joint_loss, a.epoch, b.joint_loss, b.epoch);
        m.notes.insert("joint_first".into(), a.joint_loss.to_string());
        m.notes.insert("joint_last".into(), b.joint_loss.to_string());
    }
    ctx.finish(m, start, &[E2E, C2C, PRETRAIN_TRACE, ENCODERS])
}

fn read_table(ctx: &Ctx, name: &str) -> Outcome<EmbeddingTable> {
    Ok(EmbeddingTable::read(ctx.open(name)?)?)
}

fn sequences(ctx: &Ctx, interactions: &[Interaction]) -> Vec<Sequence> {
    to_sequences(interactions, ctx.cfg.max_seq_len)
}

pub fn train_head_stage(ctx: &Ctx) -> Outcome<()> {
    let start = Instant::now();
    let l = load_ingested(ctx)?;
    ctx.require("pretrain")?;
    let fused = fuse(&read_table(ctx, E2E)?, &read_table(ctx, C2C)?, &l.ds.catalog, ctx.cfg.embed_mode)?;
    let hc = ctx.cfg.head_config();
    let state = train_head(&sequences(ctx, &l.train), &fused, &hc)?;
    let mut cp = Checkpoint::new()
        .with_meta("fingerprint", &ctx.fingerprint)
        .with_meta("head", state.params.kind().to_string())
        .with_meta("embed_mode", fused.mode.to_string())
        .with_meta("best_epoch", state.best_epoch.to_string())
        .with_meta("fused_checksum", state.fused.checksum());
    for (n, t) in state.params.names().into_iter().zip(state.params.tensors()) {
        cp.push(format!("head.{n}"), t.clone());
    }
    cp.push("fused", state.fused.values.clone());
    cp.save(&ctx.path(HEAD))?;
    ctx.write_with(HEAD_TRACE, |w| {
        writeln!(w, "epoch,train_loss,val_auc")?;
        for e in &state.trace {
            writeln!(w, "{},{},{}", e.epoch, e.train_loss, e.val_auc.map(|a| a.to_string()).unwrap_or_default())?;
        }
        Ok(())
    })?;
    let mut m = Manifest::new("train-head", &ctx.fingerprint);
    for f in [E2E, C2C] {
        m.record_input(&ctx.path(f), f)?;
    }
    m.notes.insert("best_epoch".into(), state.best_epoch.to_string());
    println!("train-head: {} head on {} embeddings, best epoch {} of {}", hc.kind, fused.mode, state.best_epoch, state.trace.len());
    ctx.finish(m, start, &[HEAD, HEAD_TRACE])
}

fn metrics_row(ds: &str, cfg: &RunConfig, kind: HeadKind, mode: &str, m: &SeedMetrics) -> AblationRow {
    AblationRow {
        cell: AblationCell {
            dataset: ds.to_string(),
            aug: cfg.augment.centrality.to_string(),
            embed_mode: mode.to_string(),
            head: kind.to_string(),
            seed: cfg.seed,
        },
        outcome: Ok(*m),
    }
}

pub fn evaluate_stage(ctx: &Ctx) -> Outcome<()> {
    let start = Instant::now();
    let l = load_ingested(ctx)?;
    ctx.require("train-head")?;
    let cp = Checkpoint::load(&ctx.path(HEAD))?;
    let kind: HeadKind = cp.meta("head")?.parse()?;
    let mode = cp.meta("embed_mode")?.to_string();
    let params = HeadParams::from_tensors(kind, cp.group("head."))?;
    let fused = FusedEmbedding { mode: mode.parse()?, values: cp.tensor("fused")?.clone() };
    let (train, test) = (sequences(ctx, &l.train), sequences(ctx, &l.test));
    let preds = predict(&params, &fused, &test)?;
    let metrics = scores_to_metrics(&preds, ctx.cfg.seed)?;
    let probe = linear_probe(&fused.values, &probe_task(&train), &probe_task(&test), &ctx.cfg.probe).ok();

    let row = metrics_row(&l.ds.name, &ctx.cfg, kind, &mode, &metrics);
    let mut csv = Vec::new();
    write_ablation_csv(std::slice::from_ref(&row), &mut csv)?;
    fs::write(ctx.path(METRICS), &csv).map_err(|e| Fail::io(&ctx.path(METRICS), e))?;
    ctx.write_with(PROBE, |w| {
        writeln!(w, "pathway,auc,acc,n_predictions")?;
        writeln!(w, "head,{:.6},{:.6},{}", metrics.auc, metrics.acc, metrics.n_predictions)?;
        if let Some(p) = &probe {
            writeln!(w, "probe,{:.6},{:.6},{}", p.auc, p.acc, p.n_test)?;
        }
        Ok(())
    })?;
    ctx.write_with(PREDICTIONS, |w| {
        writeln!(w, "index,score,label")?;
        for (i, (s, l)) in preds.scores.iter().zip(&preds.labels).enumerate() {
            writeln!(w, "{i},{s},{}", u8::from(*l))?;
        }
        Ok(())
    })?;
    let mut report = format!(
        "dataset {} | head {kind} | embeddings {mode} | seed {}\nhead   auc {:.4}  acc {:.4}  n {}\n",
        l.ds.name, ctx.cfg.seed, metrics.auc, metrics.acc, metrics.n_predictions
    );
    match &probe {
        Some(p) => report += &format!("probe  auc {:.4}  acc {:.4}  n {}\n", p.auc, p.acc, p.n_test),
        None => report += "probe  undefined (single-class targets)\n",
    }
    report += &format!("config {}\n", ctx.fingerprint);
    fs::write(ctx.path(REPORT), &report).map_err(|e| Fail::io(&ctx.path(REPORT), e))?;
    print!("{report}");
    let mut m = Manifest::new("evaluate", &ctx.fingerprint);
    m.record_input(&ctx.path(HEAD), HEAD)?;
    ctx.finish(m, start, &[METRICS, PROBE, PREDICTIONS, REPORT])
}

pub fn ablate(ctx: &Ctx) -> Outcome<()> {
    let start = Instant::now();
    ctx.ensure_out()?;
    let base = match &ctx.cfg.source {
        DataSource::Synthetic => None,
        DataSource::File(p) => Some(load_file(p, ctx.cfg.format.as_deref())?),
    };
    let name = base.as_ref().map_or("synthetic", |d| d.name.as_str()).to_string();
    let grid = ablation_grid(&ctx.cfg, &name);
    info!("ablation over {} cells", grid.len());
    let rows = run_grid(&ctx.cfg, base.as_ref(), &grid);
    let mut csv = Vec::new();
    write_ablation_csv(&rows, &mut csv)?;
    fs::write(ctx.path(ABLATION_CSV), &csv).map_err(|e| Fail::io(&ctx.path(ABLATION_CSV), e))?;
    let table = format_table(&rows);
    fs::write(ctx.path(ABLATION_TXT), &table).map_err(|e| Fail::io(&ctx.path(ABLATION_TXT), e))?;
    fs::write(ctx.path(ABLATION_DAT), gnuplot_dump(&rows)).map_err(|e| Fail::io(&ctx.path(ABLATION_DAT), e))?;
    print!("{table}");
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    let mut m = Manifest::new("ablate", &ctx.fingerprint);
    m.notes.insert("cells".into(), rows.len().to_string());
    m.notes.insert("failed".into(), failed.to_string());
    ctx.finish(m, start, &[ABLATION_CSV, ABLATION_TXT, ABLATION_DAT])
}

pub fn pipeline(ctx: &Ctx) -> Outcome<()> {
    if ctx.cfg.source == DataSource::Synthetic {
        synth(ctx)?;
    }
    ingest(ctx)?;
    build_graphs(ctx)?;
    pretrain_stage(ctx)?;
    train_head_stage(ctx)?;
    evaluate_stage(ctx)
}

