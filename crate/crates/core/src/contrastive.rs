//! Contrastive objectives and the pretraining loop.
//!
//! Both losses share one kernel: for an anchor row `a` with partner `p`
//! and a set of negative rows `K`,
//!
//! ```text
//! l = -log( exp(sim(a, p) / t) / sum_{k in K} exp(sim(a, k) / t) )
//! ```
//!
//! where `sim` is cosine similarity. The positive term is left out of the
//! denominator unless `include_positive` is set, so losses can be negative.
//! Graph-level negatives are the other graphs of the minibatch; node-level
//! negatives are the anchor's 1-hop neighbours in both views.

use std::io::{BufRead, Write};
use std::time::Instant;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::augment::{make_views, view_stream, AugmentationConfig, GraphView};
use crate::dataio::ConceptCatalog;
use crate::encoder::{encode_nodes, project, readout, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::InfluenceGraph;
use crate::numerics::{derive_seed, rng_for, Adam, Matrix, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    NtXent,
    /// `max(0, margin - sim_pos + sim_neg)` averaged over (anchor, negative) pairs.
    MarginHinge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// Graphs per minibatch.
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the node-level loss; the graph-level loss gets `1 - lambda`.
    pub lambda: f64,
    pub margin: f64,
    pub include_positive: bool,
    pub loss: LossKind,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: 0.5,
            batch_size: 16,
            epochs: 100,
            lambda: 0.5,
            margin: 0.75,
            include_positive: false,
            loss: LossKind::NtXent,
            lr: crate::numerics::DEFAULT_LR,
            seed: 0,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("loss.temperature must be > 0, got {}", self.temperature)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("loss.batch_size must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("loss.lambda must be in [0, 1], got {}", self.lambda)));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::Config("loss.lr must be >= 0".into()));
        }
        Ok(())
    }
}

/// Cosine similarity; zero vectors give 0.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        warn!("cosine similarity of a zero vector taken as 0");
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// A negative row, either from the anchor's own embedding matrix or the partner's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Negative {
    Own(usize),
    Other(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePair {
    pub anchor: usize,
    pub partner: usize,
    pub negatives: Vec<Negative>,
}

/// Anchors, positives and per-anchor negatives for node-level contrast.
/// Row indices refer to the two views' embedding matrices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairBatch {
    pub pairs: Vec<NodePair>,
}

impl PairBatch {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Same pairs with the roles of the two views exchanged.
    pub fn swapped(&self) -> PairBatch {
        let flip = |n: &Negative| match *n {
            Negative::Own(r) => Negative::Other(r),
            Negative::Other(r) => Negative::Own(r),
        };
        PairBatch {
            pairs: self
                .pairs
                .iter()
                .map(|p| {
                    let mut negatives: Vec<Negative> = p.negatives.iter().map(flip).collect();
                    negatives.sort();
                    NodePair { anchor: p.partner, partner: p.anchor, negatives }
                })
                .collect(),
        }
    }
}

/// Pairs every node surviving in both views; negatives are its neighbours in
/// each view. Anchors without negatives are skipped.
pub fn sample_node_pairs(v1: &GraphView, v2: &GraphView) -> PairBatch {
    let (n1, n2) = (v1.neighbours(), v2.neighbours());
    let mut pairs = Vec::new();
    for (a, node) in v1.kept_nodes.iter().enumerate() {
        let Ok(p) = v2.kept_nodes.binary_search(node) else { continue };
        let mut negatives: Vec<Negative> = n1[a].iter().map(|&r| Negative::Own(r)).collect();
        negatives.extend(n2[p].iter().map(|&r| Negative::Other(r)));
        if negatives.is_empty() {
            continue;
        }
        pairs.push(NodePair { anchor: a, partner: p, negatives });
    }
    PairBatch { pairs }
}

/// Summed per-anchor losses over `pairs`. `own` holds anchor rows, `other` partner rows.
fn contrast_sum(
    tape: &mut Tape,
    own: Var,
    other: Var,
    pairs: &[NodePair],
    cfg: &ContrastiveConfig,
) -> Result<Var> {
    if pairs.is_empty() {
        return Err(Error::Contract("contrastive loss over an empty batch".into()));
    }
    let no = tape.normalize_rows(own);
    let nt = tape.normalize_rows(other);
    let s_own = tape.matmul_t(no, no)?;
    let s_other = tape.matmul_t(no, nt)?;
    let offset = tape.shape(s_own).1;
    let sims = tape.concat_cols(&[s_own, s_other])?;

    let coord = |anchor: usize, n: &Negative| match *n {
        Negative::Own(r) => (anchor, r),
        Negative::Other(r) => (anchor, offset + r),
    };
    let pos_coords: Vec<(usize, usize)> = pairs.iter().map(|p| (p.anchor, offset + p.partner)).collect();
    let mut neg_coords = Vec::new();
    let mut owner = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        for n in &p.negatives {
            neg_coords.push(coord(p.anchor, n));
            owner.push(i);
        }
        if cfg.include_positive && cfg.loss == LossKind::NtXent {
            neg_coords.push((p.anchor, offset + p.partner));
            owner.push(i);
        }
    }
    let pos = tape.pick(sims, &pos_coords)?;
    let neg = tape.pick(sims, &neg_coords)?;
    let t = cfg.temperature;
    match cfg.loss {
        LossKind::NtXent => {
            // exp((s - 1) / t) stays in (0, 1]; the shift is added back after the log
            let e = tape.affine(neg, 1.0 / t, -1.0 / t);
            let e = tape.exp(e);
            let mut group = Matrix::zeros(pairs.len(), owner.len());
            for (k, &i) in owner.iter().enumerate() {
                group.set(i, k, 1.0);
            }
            let group = tape.constant(group);
            let denom = tape.matmul(group, e)?;
            let log_denom = tape.log(denom);
            let scaled_pos = tape.affine(pos, 1.0 / t, -1.0 / t);
            let per_anchor = tape.sub(log_denom, scaled_pos)?;
            Ok(tape.sum(per_anchor))
        }
        LossKind::MarginHinge => {
            let mut spread = Matrix::zeros(owner.len(), pairs.len());
            for (k, &i) in owner.iter().enumerate() {
                spread.set(k, i, 1.0);
            }
            let spread = tape.constant(spread);
            let pos_rep = tape.matmul(spread, pos)?;
            let gap = tape.sub(neg, pos_rep)?;
            let gap = tape.affine(gap, 1.0, cfg.margin);
            let hinge = tape.relu(gap);
            // averaged per anchor so the result sums like the NT-Xent branch
            let mut weights = Matrix::zeros(owner.len(), 1);
            for (k, &i) in owner.iter().enumerate() {
                weights.set(k, 0, 1.0 / pairs[i].negatives.len() as f64);
            }
            let weighted = tape.mul_const(hinge, weights)?;
            Ok(tape.sum(weighted))
        }
    }
}

fn graph_pairs(n: usize) -> Vec<NodePair> {
    (0..n)
        .map(|i| NodePair {
            anchor: i,
            partner: i,
            negatives: (0..n).filter(|&j| j != i).map(Negative::Other).collect(),
        })
        .collect()
}

/// Graph-level loss over aligned `N x d_z` projections of the two views,
/// averaged over anchors and over both directions.
pub fn nt_xent_graph(tape: &mut Tape, z1: Var, z2: Var, cfg: &ContrastiveConfig) -> Result<Var> {
    let (n, _) = tape.shape(z1);
    if n < 2 {
        return Err(Error::Contract(format!("graph-level contrast needs at least 2 graphs, got {n}")));
    }
    if tape.shape(z1) != tape.shape(z2) {
        return Err(Error::dim("nt_xent_graph", tape.shape(z1), tape.shape(z2)));
    }
    let pairs = graph_pairs(n);
    let a = contrast_sum(tape, z1, z2, &pairs, cfg)?;
    let b = contrast_sum(tape, z2, z1, &pairs, cfg)?;
    let total = tape.add(a, b)?;
    Ok(tape.scale(total, 0.5 / n as f64))
}

/// Summed (not averaged) node loss in one direction; used by the trainer.
pub fn nt_xent_node_sum(tape: &mut Tape, z_own: Var, z_other: Var, batch: &PairBatch, cfg: &ContrastiveConfig) -> Result<Var> {
    contrast_sum(tape, z_own, z_other, &batch.pairs, cfg)
}

/// Node-level loss: mean over anchors of the per-anchor loss, anchors drawn from `z_own`.
pub fn nt_xent_node(tape: &mut Tape, z_own: Var, z_other: Var, batch: &PairBatch, cfg: &ContrastiveConfig) -> Result<Var> {
    let sum = contrast_sum(tape, z_own, z_other, &batch.pairs, cfg)?;
    Ok(tape.scale(sum, 1.0 / batch.len() as f64))
}

pub fn joint_loss(node: f64, graph: f64, lambda: f64) -> f64 {
    lambda * node + (1.0 - lambda) * graph
}

/// One row per id, written as `id,dim,v1,...,vdim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub ids: Vec<String>,
    pub values: Matrix,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, id) in self.ids.iter().enumerate() {
            write!(w, "{id},{}", self.dim())?;
            for v in self.values.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (ln, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Data(format!("embedding line {}: {e}", ln + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Data(format!("embedding line {}: {what}", ln + 1));
            let mut fields = line.split(',');
            let id = fields.next().ok_or_else(|| bad("missing id"))?;
            let d: usize = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| bad("bad dim"))?;
            if *dim.get_or_insert(d) != d {
                return Err(bad("inconsistent dim"));
            }
            let row: Vec<f64> = fields.map(|f| f.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad value"))?;
            if row.len() != d {
                return Err(bad("value count does not match dim"));
            }
            ids.push(id.to_string());
            data.extend(row);
        }
        let rows = ids.len();
        Ok(EmbeddingTable { ids, values: Matrix::from_vec(rows, dim.unwrap_or(0), data)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochTrace {
    pub epoch: usize,
    pub node_loss: f64,
    pub graph_loss: f64,
    pub joint_loss: f64,
    pub wall_ms: u128,
}

pub fn write_trace<W: Write>(mut w: W, trace: &[EpochTrace]) -> std::io::Result<()> {
    writeln!(w, "epoch,node_loss,graph_loss,joint_loss,wall_ms")?;
    for t in trace {
        writeln!(w, "{},{},{},{},{}", t.epoch, t.node_loss, t.graph_loss, t.joint_loss, t.wall_ms)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    /// Exercise-level (node) encoder.
    pub node_params: EncoderParams,
    /// Concept-level (graph) encoder.
    pub graph_params: EncoderParams,
    pub e2e: EmbeddingTable,
    pub c2c: EmbeddingTable,
    pub trace: Vec<EpochTrace>,
}

struct StepLoss {
    node: f64,
    graph: f64,
    node_grads: Option<Vec<Matrix>>,
    graph_grads: Vec<Matrix>,
}

fn add_into(acc: &mut [Matrix], g: &[Matrix]) -> Result<()> {
    for (a, b) in acc.iter_mut().zip(g) {
        a.add_assign(b)?;
    }
    Ok(())
}

/// Node-level loss of one graph's view pair, summed over anchors and
/// averaged over both directions, scaled by `weight`.
fn node_step(
    params: &EncoderParams,
    enc_cfg: &EncoderConfig,
    con: &ContrastiveConfig,
    views: &(GraphView, GraphView),
    batch: &PairBatch,
    weight: f64,
) -> Result<(f64, Vec<Matrix>)> {
    let (v1, v2) = views;
    let mut exercises: Vec<usize> = v1.exercises.iter().chain(&v2.exercises).copied().collect();
    exercises.sort_unstable();
    exercises.dedup();
    let mut tape = Tape::new();
    let enc = params.bind(&mut tape, &exercises, true)?;
    let h1 = encode_nodes(&mut tape, v1, &enc, enc_cfg)?.h;
    let h2 = encode_nodes(&mut tape, v2, &enc, enc_cfg)?.h;
    let z1 = project(&mut tape, h1, &enc)?;
    let z2 = project(&mut tape, h2, &enc)?;
    let a = nt_xent_node_sum(&mut tape, z1, z2, batch, con)?;
    let b = nt_xent_node_sum(&mut tape, z2, z1, &batch.swapped(), con)?;
    let both = tape.add(a, b)?;
    let value = 0.5 * tape.value(both).item()?;
    let scaled = tape.scale(both, 0.5 * weight);
    let grads = tape.backward(scaled)?;
    Ok((value, enc.gradients(&grads, params)))
}

fn graph_step(
    params: &EncoderParams,
    enc_cfg: &EncoderConfig,
    con: &ContrastiveConfig,
    views: &[&(GraphView, GraphView)],
    weight: f64,
) -> Result<(f64, Vec<Matrix>)> {
    let mut exercises: Vec<usize> = views.iter().flat_map(|(a, b)| a.exercises.iter().chain(&b.exercises)).copied().collect();
    exercises.sort_unstable();
    exercises.dedup();
    let mut tape = Tape::new();
    let enc = params.bind(&mut tape, &exercises, true)?;
    let mut rows = [Vec::new(), Vec::new()];
    for (v1, v2) in views.iter().map(|p| (&p.0, &p.1)) {
        for (side, v) in [v1, v2].into_iter().enumerate() {
            let h = encode_nodes(&mut tape, v, &enc, enc_cfg)?.h;
            rows[side].push(readout(&mut tape, h));
        }
    }
    let g1 = stack_rows(&mut tape, &rows[0])?;
    let g2 = stack_rows(&mut tape, &rows[1])?;
    let z1 = project(&mut tape, g1, &enc)?;
    let z2 = project(&mut tape, g2, &enc)?;
    let loss = nt_xent_graph(&mut tape, z1, z2, con)?;
    let value = tape.value(loss).item()?;
    let scaled = tape.scale(loss, weight);
    let grads = tape.backward(scaled)?;
    Ok((value, enc.gradients(&grads, params)))
}

/// Stacks `1 x d` rows into an `n x d` matrix on the tape.
fn stack_rows(tape: &mut Tape, rows: &[Var]) -> Result<Var> {
    let cols: Vec<Var> = rows.iter().map(|r| tape.transpose(*r)).collect();
    let stacked = tape.concat_cols(&cols)?;
    Ok(tape.transpose(stacked))
}

fn batch_loss(
    node_params: &EncoderParams,
    graph_params: &EncoderParams,
    enc_cfg: &EncoderConfig,
    con: &ContrastiveConfig,
    views: &[(GraphView, GraphView)],
) -> Result<StepLoss> {
    let batches: Vec<PairBatch> = views.iter().map(|(a, b)| sample_node_pairs(a, b)).collect();
    let anchors: usize = batches.iter().map(|b| b.len()).sum();
    let (node, node_grads) = if con.lambda > 0.0 && anchors > 0 {
        let weight = con.lambda / anchors as f64;
        let parts: Vec<(f64, Vec<Matrix>)> = views
            .par_iter()
            .zip(&batches)
            .filter(|(_, b)| !b.is_empty())
            .map(|(v, b)| node_step(node_params, enc_cfg, con, v, b, weight))
            .collect::<Result<_>>()?;
        let mut acc: Vec<Matrix> = node_params.tensors().iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        let mut total = 0.0;
        for (v, g) in &parts {
            total += v;
            add_into(&mut acc, g)?;
        }
        (total / anchors as f64, Some(acc))
    } else {
        (0.0, None)
    };
    let refs: Vec<&(GraphView, GraphView)> = views.iter().collect();
    let (graph, graph_grads) = graph_step(graph_params, enc_cfg, con, &refs, 1.0 - con.lambda)?;
    Ok(StepLoss { node, graph, node_grads, graph_grads })
}

/// Splits `0..n` into shuffled minibatches of `size`; a trailing singleton joins the previous batch.
fn minibatches(n: usize, size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[0xba7c, epoch as u64]));
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(|c| c.to_vec()).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

/// Joint contrastive pretraining of the exercise and concept encoders.
pub fn pretrain(
    graphs: &[InfluenceGraph],
    catalog: &ConceptCatalog,
    aug: &AugmentationConfig,
    enc_cfg: &EncoderConfig,
    con: &ContrastiveConfig,
) -> Result<Pretrained> {
    aug.validate()?;
    enc_cfg.validate()?;
    con.validate()?;
    if graphs.len() < 2 {
        return Err(Error::Contract(format!("pretraining needs at least 2 graphs, got {}", graphs.len())));
    }
    let n_ex = catalog.n_exercises();
    let mut node_params = EncoderParams::init(enc_cfg, n_ex, derive_seed(con.seed, &[1]))?;
    let mut graph_params = EncoderParams::init(enc_cfg, n_ex, derive_seed(con.seed, &[2]))?;
    let mut node_opt = Adam::new(&node_params.tensors(), con.lr);
    let mut graph_opt = Adam::new(&graph_params.tensors(), con.lr);
    let aug = AugmentationConfig { seed: derive_seed(con.seed, &[3]), ..aug.clone() };

    let mut trace = Vec::with_capacity(con.epochs);
    for epoch in 1..=con.epochs {
        let start = Instant::now();
        let (mut node_sum, mut graph_sum, mut steps) = (0.0, 0.0, 0usize);
        for batch in minibatches(graphs.len(), con.batch_size, con.seed, epoch) {
            let views: Vec<(GraphView, GraphView)> = batch
                .iter()
                .map(|&gi| make_views(&graphs[gi], &aug, enc_cfg.d_in, view_stream(epoch as u64, 0)))
                .collect::<Result<_>>()?;
            let step = batch_loss(&node_params, &graph_params, enc_cfg, con, &views)?;
            if !step.node.is_finite() || !step.graph.is_finite() {
                return Err(Error::Divergence { epoch, what: "contrastive loss".into() });
            }
            if let Some(g) = &step.node_grads {
                node_opt.step(node_params.tensors_mut(), g)?;
            }
            graph_opt.step(graph_params.tensors_mut(), &step.graph_grads)?;
            node_sum += step.node;
            graph_sum += step.graph;
            steps += 1;
        }
        let node_loss = node_sum / steps as f64;
        let graph_loss = graph_sum / steps as f64;
        let t = EpochTrace {
            epoch,
            node_loss,
            graph_loss,
            joint_loss: joint_loss(node_loss, graph_loss, con.lambda),
            wall_ms: start.elapsed().as_millis(),
        };
        debug!("epoch {epoch}: node {node_loss:.5} graph {graph_loss:.5}");
        trace.push(t);
    }
    if let Some(last) = trace.last() {
        info!("pretraining done: joint loss {:.5} after {} epochs", last.joint_loss, last.epoch);
    }
    let e2e = exercise_embeddings(graphs, catalog, &node_params, enc_cfg)?;
    let c2c = concept_embeddings(graphs, catalog, &graph_params, enc_cfg)?;
    Ok(Pretrained { node_params, graph_params, e2e, c2c, trace })
}

/// Uncorrupted node representations, averaged over the graphs an exercise
/// appears in. Exercises in no graph are encoded on their own.
pub fn exercise_embeddings(
    graphs: &[InfluenceGraph],
    catalog: &ConceptCatalog,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<EmbeddingTable> {
    let n = catalog.n_exercises();
    let mut sum = Matrix::zeros(n, cfg.d);
    let mut count = vec![0usize; n];
    let all: Vec<usize> = (0..n).collect();
    let mut tape = Tape::new();
    let enc = params.bind(&mut tape, &all, false)?;
    for g in graphs {
        let view = GraphView::full(g, cfg.d_in);
        let h = encode_nodes(&mut tape, &view, &enc, cfg)?.h;
        let hv = tape.value(h);
        for (r, &e) in g.nodes.iter().enumerate() {
            for (dst, src) in sum.row_mut(e).iter_mut().zip(hv.row(r)) {
                *dst += src;
            }
            count[e] += 1;
        }
    }
    for e in 0..n {
        if count[e] == 0 {
            let single = InfluenceGraph { concept: usize::MAX, nodes: vec![e], edges: Vec::new() };
            let h = encode_nodes(&mut tape, &GraphView::full(&single, cfg.d_in), &enc, cfg)?.h;
            sum.row_mut(e).copy_from_slice(tape.value(h).row(0));
        } else {
            let c = count[e] as f64;
            sum.row_mut(e).iter_mut().for_each(|v| *v /= c);
        }
    }
    Ok(EmbeddingTable { ids: catalog.exercises().to_vec(), values: sum })
}

/// Uncorrupted graph representations, one per concept.
pub fn concept_embeddings(
    graphs: &[InfluenceGraph],
    catalog: &ConceptCatalog,
    params: &EncoderParams,
    cfg: &EncoderConfig,
) -> Result<EmbeddingTable> {
    let n = catalog.n_concepts();
    let mut values = Matrix::filled(n, cfg.d, 0.5);
    let all: Vec<usize> = (0..catalog.n_exercises()).collect();
    let mut tape = Tape::new();
    let enc = params.bind(&mut tape, &all, false)?;
    let mut seen = vec![false; n];
    for g in graphs {
        if g.concept >= n || g.n() == 0 {
            continue;
        }
        let view = GraphView::full(g, cfg.d_in);
        let h = encode_nodes(&mut tape, &view, &enc, cfg)?.h;
        let r = readout(&mut tape, h);
        values.row_mut(g.concept).copy_from_slice(tape.value(r).row(0));
        seen[g.concept] = true;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::Lookup { kind: "concept graph", id: catalog.concepts()[c].clone() });
    }
    Ok(EmbeddingTable { ids: catalog.concepts().to_vec(), values })
}
