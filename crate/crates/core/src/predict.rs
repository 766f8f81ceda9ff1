//! Knowledge-tracing heads over frozen exercise embeddings.
//!
//! Two heads share the input construction `x_t = [fused(e_t) ; r(a_t)]`,
//! where `r` is a learnable two-row response embedding:
//!
//! * the recurrent head keeps `h_t = tanh(x_t W_hx + h_{t-1} W_hh + b_h)`
//!   and reads out one probability per exercise, `y_t = sigmoid(h_t W_yh + b_y)`;
//! * the memory head attends over a fixed key matrix, reads a weighted sum
//!   of value slots and writes back through erase and add gates.
//!
//! The prediction made after step `t` is scored against interaction `t + 1`.

use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::contrastive::EmbeddingTable;
use crate::dataio::{ConceptCatalog, Sequence};
use crate::digest::digest_matrix;
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::numerics::{derive_seed, rng_for, Adam, Gradients, Matrix, Rng64, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionMode {
    E2E,
    C2C,
    Concate,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::E2E => "e2e",
            FusionMode::C2C => "c2c",
            FusionMode::Concate => "concate",
        })
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e2e" => Ok(FusionMode::E2E),
            "c2c" => Ok(FusionMode::C2C),
            "concate" | "concat" => Ok(FusionMode::Concate),
            other => Err(Error::Config(format!("unknown embedding mode '{other}' (e2e, c2c, concate)"))),
        }
    }
}

/// One row per catalog exercise.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedEmbedding {
    pub mode: FusionMode,
    pub values: Matrix,
}

impl FusedEmbedding {
    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn checksum(&self) -> String {
        digest_matrix(&self.values)
    }
}

fn lookup(table: &EmbeddingTable) -> std::collections::HashMap<&str, usize> {
    table.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
}

/// Builds per-exercise input rows. C2C rows are the mean over the exercise's concepts.
pub fn fuse(e2e: &EmbeddingTable, c2c: &EmbeddingTable, catalog: &ConceptCatalog, mode: FusionMode) -> Result<FusedEmbedding> {
    let (ei, ci) = (lookup(e2e), lookup(c2c));
    let n = catalog.n_exercises();
    let de = if mode == FusionMode::C2C { 0 } else { e2e.dim() };
    let dc = if mode == FusionMode::E2E { 0 } else { c2c.dim() };
    let mut values = Matrix::zeros(n, de + dc);
    for e in 0..n {
        let row = values.row_mut(e);
        if de > 0 {
            let id = &catalog.exercises()[e];
            let &r = ei.get(id.as_str()).ok_or_else(|| Error::Lookup { kind: "exercise embedding", id: id.clone() })?;
            row[..de].copy_from_slice(e2e.row(r));
        }
        if dc > 0 {
            let concepts = catalog.concepts_of(e);
            for &c in concepts {
                let id = &catalog.concepts()[c];
                let &r = ci.get(id.as_str()).ok_or_else(|| Error::Lookup { kind: "concept embedding", id: id.clone() })?;
                for (d, v) in row[de..].iter_mut().zip(c2c.row(r)) {
                    *d += v;
                }
            }
            let k = concepts.len() as f64;
            row[de..].iter_mut().for_each(|v| *v /= k);
        }
    }
    Ok(FusedEmbedding { mode, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadKind {
    /// Recurrent head.
    R,
    /// Key-value memory head.
    M,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::R => "R",
            HeadKind::M => "M",
        })
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r" | "dkt" => Ok(HeadKind::R),
            "m" | "dkvmn" => Ok(HeadKind::M),
            other => Err(Error::Config(format!("unknown head '{other}' (R, M)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub hidden: usize,
    pub response_dim: usize,
    pub mem_slots: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    /// Early-stopping patience in epochs, on validation AUC.
    pub patience: usize,
    /// Fraction of training students held out for early stopping; 0 disables it.
    pub val_fraction: f64,
    pub fine_tune: bool,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            kind: HeadKind::R,
            hidden: 64,
            response_dim: 16,
            mem_slots: 20,
            key_dim: 64,
            value_dim: 64,
            lr: crate::numerics::DEFAULT_LR,
            epochs: 100,
            batch_size: 32,
            patience: 10,
            val_fraction: 0.1,
            fine_tune: false,
            seed: 0,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.response_dim == 0 || self.mem_slots == 0 || self.key_dim == 0 || self.value_dim == 0 {
            return Err(Error::Config("head dimensions must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("head.batch_size must be >= 1".into()));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::Config("head.lr must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("head.val_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DktParams {
    pub w_hx: Matrix,
    pub w_hh: Matrix,
    pub b_h: Matrix,
    /// `hidden x n_exercises`.
    pub w_yh: Matrix,
    pub b_y: Matrix,
    /// Row 0 for an incorrect answer, row 1 for a correct one.
    pub response: Matrix,
}

impl DktParams {
    pub fn init(input_dim: usize, n_exercises: usize, cfg: &HeadConfig, rng: &mut Rng64) -> Self {
        let h = cfg.hidden;
        DktParams {
            w_hx: Matrix::xavier(input_dim + cfg.response_dim, h, rng),
            w_hh: Matrix::xavier(h, h, rng),
            b_h: Matrix::zeros(1, h),
            w_yh: Matrix::xavier(h, n_exercises, rng),
            b_y: Matrix::zeros(1, n_exercises),
            response: Matrix::xavier(2, cfg.response_dim, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DkvmnParams {
    /// Fixed after initialisation; `slots x key_dim`.
    pub key_memory: Matrix,
    /// Initial value memory flattened slot-major into `1 x (slots * value_dim)`.
    pub value_init: Matrix,
    pub query: Matrix,
    pub value_in: Matrix,
    pub erase: Matrix,
    pub erase_b: Matrix,
    pub add: Matrix,
    pub add_b: Matrix,
    pub w_f: Matrix,
    pub b_f: Matrix,
    pub w_p: Matrix,
    pub b_p: Matrix,
    pub response: Matrix,
}

impl DkvmnParams {
    pub fn init(input_dim: usize, cfg: &HeadConfig, rng: &mut Rng64) -> Self {
        let (n, dk, dv, h) = (cfg.mem_slots, cfg.key_dim, cfg.value_dim, cfg.hidden);
        DkvmnParams {
            key_memory: Matrix::xavier(n, dk, rng),
            value_init: Matrix::uniform(1, n * dv, 0.1, rng),
            query: Matrix::xavier(input_dim, dk, rng),
            value_in: Matrix::xavier(input_dim + cfg.response_dim, dv, rng),
            erase: Matrix::xavier(dv, dv, rng),
            erase_b: Matrix::zeros(1, dv),
            add: Matrix::xavier(dv, dv, rng),
            add_b: Matrix::zeros(1, dv),
            w_f: Matrix::xavier(dv + dk, h, rng),
            b_f: Matrix::zeros(1, h),
            w_p: Matrix::xavier(h, 1, rng),
            b_p: Matrix::zeros(1, 1),
            response: Matrix::xavier(2, cfg.response_dim, rng),
        }
    }

    pub fn slots(&self) -> usize {
        self.key_memory.rows()
    }

    pub fn value_dim(&self) -> usize {
        self.erase.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadParams {
    Dkt(DktParams),
    Dkvmn(DkvmnParams),
}

impl HeadParams {
    pub fn init(cfg: &HeadConfig, input_dim: usize, n_exercises: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng64::seed_from_u64(derive_seed(cfg.seed, &[0x4ead]));
        Ok(match cfg.kind {
            HeadKind::R => HeadParams::Dkt(DktParams::init(input_dim, n_exercises, cfg, &mut rng)),
            HeadKind::M => HeadParams::Dkvmn(DkvmnParams::init(input_dim, cfg, &mut rng)),
        })
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            HeadParams::Dkt(_) => HeadKind::R,
            HeadParams::Dkvmn(_) => HeadKind::M,
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        match self {
            HeadParams::Dkt(_) => vec!["w_hx", "w_hh", "b_h", "w_yh", "b_y", "response"],
            HeadParams::Dkvmn(_) => vec![
                "key_memory", "value_init", "query", "value_in", "erase", "erase_b", "add", "add_b", "w_f", "b_f", "w_p", "b_p",
                "response",
            ],
        }
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        match self {
            HeadParams::Dkt(p) => vec![&p.w_hx, &p.w_hh, &p.b_h, &p.w_yh, &p.b_y, &p.response],
            HeadParams::Dkvmn(p) => vec![
                &p.key_memory, &p.value_init, &p.query, &p.value_in, &p.erase, &p.erase_b, &p.add, &p.add_b, &p.w_f, &p.b_f,
                &p.w_p, &p.b_p, &p.response,
            ],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            HeadParams::Dkt(p) => vec![&mut p.w_hx, &mut p.w_hh, &mut p.b_h, &mut p.w_yh, &mut p.b_y, &mut p.response],
            HeadParams::Dkvmn(p) => vec![
                &mut p.key_memory,
                &mut p.value_init,
                &mut p.query,
                &mut p.value_in,
                &mut p.erase,
                &mut p.erase_b,
                &mut p.add,
                &mut p.add_b,
                &mut p.w_f,
                &mut p.b_f,
                &mut p.w_p,
                &mut p.b_p,
                &mut p.response,
            ],
        }
    }

    /// Rebuilds from tensors in [`HeadParams::tensors`] order.
    pub fn from_tensors(kind: HeadKind, t: Vec<Matrix>) -> Result<Self> {
        let want = match kind {
            HeadKind::R => 6,
            HeadKind::M => 13,
        };
        if t.len() != want {
            return Err(Error::Checkpoint(format!("head {kind} needs {want} tensors, got {}", t.len())));
        }
        let mut it = t.into_iter();
        let mut next = || it.next().expect("counted");
        Ok(match kind {
            HeadKind::R => HeadParams::Dkt(DktParams {
                w_hx: next(),
                w_hh: next(),
                b_h: next(),
                w_yh: next(),
                b_y: next(),
                response: next(),
            }),
            HeadKind::M => HeadParams::Dkvmn(DkvmnParams {
                key_memory: next(),
                value_init: next(),
                query: next(),
                value_in: next(),
                erase: next(),
                erase_b: next(),
                add: next(),
                add_b: next(),
                w_f: next(),
                b_f: next(),
                w_p: next(),
                b_p: next(),
                response: next(),
            }),
        })
    }

    /// Leaves on `tape`; the DKVMN key memory is always a constant.
    fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        let fixed_key = matches!(self, HeadParams::Dkvmn(_));
        self.tensors()
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                if trainable && !(fixed_key && i == 0) {
                    tape.var(m.clone())
                } else {
                    tape.constant(m.clone())
                }
            })
            .collect()
    }
}

/// `[fused(e) ; response(a)]` as a plain vector.
pub fn build_input(e: usize, a: bool, fused: &FusedEmbedding, response: &Matrix) -> Result<Vec<f64>> {
    if e >= fused.values.rows() {
        return Err(Error::Lookup { kind: "exercise", id: e.to_string() });
    }
    let mut x = fused.values.row(e).to_vec();
    x.extend_from_slice(response.row(usize::from(a)));
    Ok(x)
}

fn input_rows(tape: &mut Tape, fused: Var, response: Var, ex: &[usize], resp: &[usize]) -> Result<Var> {
    let f = tape.gather_rows(fused, ex)?;
    let r = tape.gather_rows(response, resp)?;
    tape.concat_cols(&[f, r])
}

fn dkt_hidden(tape: &mut Tape, x: Var, h_prev: Var, v: &[Var]) -> Result<Var> {
    let a = tape.matmul(x, v[0])?;
    let b = tape.matmul(h_prev, v[1])?;
    let s = tape.add(a, b)?;
    let s = tape.add_row(s, v[2])?;
    Ok(tape.tanh(s))
}

/// One recurrent step over rows of `x_t`; returns `(h_t, y_t)` with one
/// probability per exercise. `vars` are the head tensors bound on `tape`.
pub fn dkt_step(tape: &mut Tape, x_t: Var, h_prev: Var, vars: &[Var]) -> Result<(Var, Var)> {
    let h = dkt_hidden(tape, x_t, h_prev, vars)?;
    let y = tape.matmul(h, vars[3])?;
    let y = tape.add_row(y, vars[4])?;
    Ok((h, tape.sigmoid(y)))
}

#[derive(Debug, Clone, Copy)]
pub struct DkvmnStep {
    /// Correctness logit for the queried exercise, `k x 1`.
    pub logit: Var,
    /// Attention over slots, `k x slots`.
    pub attention: Var,
    pub read: Var,
    /// Value memory after the write, `k x (slots * value_dim)`.
    pub memory: Var,
}

/// One memory step: read with the query, predict, then write with the
/// (query, response) embedding. `memory` is flattened slot-major per row.
pub fn dkvmn_step(tape: &mut Tape, q_emb: Var, qa_emb: Var, memory: Var, vars: &[Var]) -> Result<DkvmnStep> {
    let (n, dv) = (tape.shape(vars[0]).0, tape.shape(vars[4]).0);
    let k = tape.matmul(q_emb, vars[2])?;
    let logits = tape.matmul_t(k, vars[0])?;
    let w = tape.softmax_rows(logits);
    let w_exp = tape.repeat_cols(w, dv);
    let weighted = tape.mul(w_exp, memory)?;
    let read = tape.fold_cols(weighted, n)?;

    let rk = tape.concat_cols(&[read, k])?;
    let f = tape.matmul(rk, vars[8])?;
    let f = tape.add_row(f, vars[9])?;
    let f = tape.tanh(f);
    let p = tape.matmul(f, vars[10])?;
    let logit = tape.add_row(p, vars[11])?;

    let v = tape.matmul(qa_emb, vars[3])?;
    let e = tape.matmul(v, vars[4])?;
    let e = tape.add_row(e, vars[5])?;
    let e = tape.sigmoid(e);
    let a = tape.matmul(v, vars[6])?;
    let a = tape.add_row(a, vars[7])?;
    let a = tape.tanh(a);
    let e_exp = tape.tile_cols(e, n);
    let a_exp = tape.tile_cols(a, n);
    let we = tape.mul(w_exp, e_exp)?;
    let keep = tape.affine(we, -1.0, 1.0);
    let kept = tape.mul(memory, keep)?;
    let added = tape.mul(w_exp, a_exp)?;
    let memory = tape.add(kept, added)?;
    Ok(DkvmnStep { logit, attention: w, read, memory })
}

/// Scored logits of a batch, in (step, row) order, with their labels and
/// the (sequence, position) they belong to.
struct BatchForward {
    logits: Vec<Var>,
    labels: Vec<f64>,
    origin: Vec<(usize, usize)>,
}

fn forward_batch(tape: &mut Tape, seqs: &[&Sequence], fused: Var, vars: &[Var], kind: HeadKind) -> Result<BatchForward> {
    // longest first so the active rows at every step are a prefix
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(seqs[i].steps.len()));
    let lens: Vec<usize> = order.iter().map(|&i| seqs[i].steps.len()).collect();
    let max_len = lens.first().copied().unwrap_or(0);
    let active = |t: usize| lens.iter().take_while(|&&l| l > t).count();
    let step = |t: usize, r: usize| seqs[order[r]].steps[t];

    let mut out = BatchForward { logits: Vec::new(), labels: Vec::new(), origin: Vec::new() };
    let prefix = |k: usize| (0..k).collect::<Vec<usize>>();
    match kind {
        HeadKind::R => {
            let response = vars[5];
            let hdim = tape.shape(vars[1]).0;
            let w_sel = tape.transpose(vars[3]);
            let b_sel = tape.transpose(vars[4]);
            let mut h: Option<Var> = None;
            for t in 0..max_len.saturating_sub(1) {
                let k = active(t);
                let ex: Vec<usize> = (0..k).map(|r| step(t, r).0).collect();
                let rs: Vec<usize> = (0..k).map(|r| usize::from(step(t, r).1)).collect();
                let x = input_rows(tape, fused, response, &ex, &rs)?;
                let h_prev = match h {
                    Some(prev) if tape.shape(prev).0 == k => prev,
                    Some(prev) => tape.gather_rows(prev, &prefix(k))?,
                    None => tape.constant(Matrix::zeros(k, hdim)),
                };
                let h_t = dkt_hidden(tape, x, h_prev, vars)?;
                let kn = active(t + 1);
                let next: Vec<usize> = (0..kn).map(|r| step(t + 1, r).0).collect();
                let hs = if kn == k { h_t } else { tape.gather_rows(h_t, &prefix(kn))? };
                let w = tape.gather_rows(w_sel, &next)?;
                let dotp = tape.mul(hs, w)?;
                let dotp = tape.sum_cols(dotp);
                let b = tape.gather_rows(b_sel, &next)?;
                out.logits.push(tape.add(dotp, b)?);
                for r in 0..kn {
                    out.labels.push(f64::from(u8::from(step(t + 1, r).1)));
                    out.origin.push((order[r], t + 1));
                }
                h = Some(h_t);
            }
        }
        HeadKind::M => {
            let response = vars[12];
            let mut memory: Option<Var> = None;
            for t in 0..max_len {
                let k = active(t);
                let ex: Vec<usize> = (0..k).map(|r| step(t, r).0).collect();
                let rs: Vec<usize> = (0..k).map(|r| usize::from(step(t, r).1)).collect();
                let m = match memory {
                    Some(prev) if tape.shape(prev).0 == k => prev,
                    Some(prev) => tape.gather_rows(prev, &prefix(k))?,
                    None => tape.gather_rows(vars[1], &vec![0; k])?,
                };
                let q = tape.gather_rows(fused, &ex)?;
                let qa = input_rows(tape, fused, response, &ex, &rs)?;
                let s = dkvmn_step(tape, q, qa, m, vars)?;
                if t > 0 {
                    out.logits.push(s.logit);
                    for (r, (_, correct)) in (0..k).map(|r| (r, step(t, r))) {
                        out.labels.push(f64::from(u8::from(correct)));
                        out.origin.push((order[r], t));
                    }
                }
                memory = Some(s.memory);
            }
        }
    }
    Ok(out)
}

/// Predicted probability and label for every scored step.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(u8::from(l))).collect()
    }
}

const PREDICT_BATCH: usize = 64;

/// Scores every next-step target, ordered by (sequence, position).
pub fn predict(params: &HeadParams, fused: &FusedEmbedding, seqs: &[Sequence]) -> Result<Predictions> {
    let refs: Vec<&Sequence> = seqs.iter().collect();
    let chunks: Vec<Vec<(usize, usize, f64, bool)>> = refs
        .par_chunks(PREDICT_BATCH)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut tape = Tape::new();
            let f = tape.constant(fused.values.clone());
            let vars = params.bind(&mut tape, false);
            let fw = forward_batch(&mut tape, chunk, f, &vars, params.kind())?;
            let mut rows = Vec::with_capacity(fw.labels.len());
            let mut k = 0;
            for l in &fw.logits {
                for &z in tape.value(*l).as_slice() {
                    let (s, pos) = fw.origin[k];
                    rows.push((ci * PREDICT_BATCH + s, pos, crate::numerics::sigmoid_scalar(z), fw.labels[k] > 0.5));
                    k += 1;
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<(usize, usize, f64, bool)> = chunks.into_iter().flatten().collect();
    all.sort_by_key(|r| (r.0, r.1));
    Ok(Predictions {
        scores: all.iter().map(|r| r.2).collect(),
        labels: all.iter().map(|r| r.3).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PredictorState {
    pub params: HeadParams,
    pub fused: FusedEmbedding,
    pub trace: Vec<HeadEpoch>,
    pub best_epoch: usize,
}

/// Sequences processed per tape inside one optimizer step.
const GRAD_CHUNK: usize = 8;

struct ChunkGrad {
    loss: f64,
    head: Vec<Matrix>,
    fused: Option<Matrix>,
}

fn chunk_gradients(params: &HeadParams, fused: &Matrix, chunk: &[&Sequence], scale: f64, fine_tune: bool) -> Result<ChunkGrad> {
    let mut tape = Tape::new();
    let f = if fine_tune { tape.var(fused.clone()) } else { tape.constant(fused.clone()) };
    let vars = params.bind(&mut tape, true);
    let fw = forward_batch(&mut tape, chunk, f, &vars, params.kind())?;
    let mut parts = Vec::with_capacity(fw.logits.len());
    let mut k = 0;
    for l in &fw.logits {
        let rows = tape.shape(*l).0;
        parts.push(tape.bce_with_logits(*l, &fw.labels[k..k + rows])?);
        k += rows;
    }
    let mut total = match parts.first() {
        Some(&p) => p,
        None => return Ok(ChunkGrad { loss: 0.0, head: zeros_like(params), fused: None }),
    };
    for &p in &parts[1..] {
        total = tape.add(total, p)?;
    }
    let loss = tape.value(total).item()?;
    let scaled = tape.scale(total, scale);
    let grads: Gradients = tape.backward(scaled)?;
    Ok(ChunkGrad {
        loss,
        head: vars.iter().map(|v| grads.wrt(*v)).collect(),
        fused: fine_tune.then(|| grads.wrt(f)),
    })
}

fn zeros_like(params: &HeadParams) -> Vec<Matrix> {
    params.tensors().iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect()
}

/// Holds out whole students for early stopping.
fn validation_split(seqs: &[Sequence], fraction: f64, seed: u64) -> (Vec<Sequence>, Vec<Sequence>) {
    if fraction <= 0.0 {
        return (seqs.to_vec(), Vec::new());
    }
    let mut students: Vec<usize> = seqs.iter().map(|s| s.student).collect();
    students.sort_unstable();
    students.dedup();
    let n_val = ((students.len() as f64 * fraction).round() as usize).min(students.len().saturating_sub(1));
    students.shuffle(&mut rng_for(seed, &[0x7a1]));
    let val: std::collections::HashSet<usize> = students[..n_val].iter().copied().collect();
    seqs.iter().cloned().partition(|s| !val.contains(&s.student))
}

/// Trains a head by minimising next-step binary cross-entropy with Adam.
/// Keeps the parameters of the best validation epoch.
pub fn train_head(seqs: &[Sequence], fused: &FusedEmbedding, cfg: &HeadConfig) -> Result<PredictorState> {
    cfg.validate()?;
    let total_targets: usize = seqs.iter().map(|s| s.n_targets()).sum();
    if total_targets == 0 {
        return Err(Error::EmptyDataset("no next-step targets in the training sequences".into()));
    }
    let (train, val) = validation_split(seqs, cfg.val_fraction, cfg.seed);
    let n_ex = fused.values.rows();
    let mut params = HeadParams::init(cfg, fused.dim(), n_ex)?;
    let mut table = fused.values.clone();
    let frozen = fused.checksum();
    let mut opt = Adam::new(&params.tensors(), cfg.lr);
    let mut table_opt = Adam::new(&[&table], cfg.lr);

    let mut best = (f64::NEG_INFINITY, 0usize, params.clone(), table.clone());
    let mut since_best = 0usize;
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, &[0x5eed, epoch as u64]));
        let mut epoch_loss = 0.0;
        let mut epoch_targets = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let seq_refs: Vec<&Sequence> = batch.iter().map(|&i| &train[i]).collect();
            let targets: usize = seq_refs.iter().map(|s| s.n_targets()).sum();
            if targets == 0 {
                continue;
            }
            let scale = 1.0 / targets as f64;
            let parts: Vec<ChunkGrad> = seq_refs
                .par_chunks(GRAD_CHUNK)
                .map(|c| chunk_gradients(&params, &table, c, scale, cfg.fine_tune))
                .collect::<Result<_>>()?;
            let mut head = zeros_like(&params);
            let mut tgrad = Matrix::zeros(table.rows(), table.cols());
            for p in &parts {
                epoch_loss += p.loss;
                for (a, g) in head.iter_mut().zip(&p.head) {
                    a.add_assign(g)?;
                }
                if let Some(g) = &p.fused {
                    tgrad.add_assign(g)?;
                }
            }
            epoch_targets += targets;
            if !epoch_loss.is_finite() {
                return Err(Error::Divergence { epoch, what: "head loss".into() });
            }
            opt.step(params.tensors_mut(), &head)?;
            if cfg.fine_tune {
                table_opt.step(vec![&mut table], std::slice::from_ref(&tgrad))?;
            }
        }
        let train_loss = epoch_loss / epoch_targets.max(1) as f64;
        let current = FusedEmbedding { mode: fused.mode, values: table.clone() };
        let val_auc = if val.is_empty() {
            None
        } else {
            let p = predict(&params, &current, &val)?;
            auc(&p.scores, &p.labels_f64()).ok()
        };
        debug!("head epoch {epoch}: loss {train_loss:.5} val auc {val_auc:?}");
        trace.push(HeadEpoch { epoch, train_loss, val_auc });
        match val_auc {
            Some(a) if a > best.0 => {
                best = (a, epoch, params.clone(), table.clone());
                since_best = 0;
            }
            Some(_) => {
                since_best += 1;
                if since_best >= cfg.patience {
                    info!("early stop at epoch {epoch}, best {} ({:.4})", best.1, best.0);
                    break;
                }
            }
            None => {
                best = (f64::NEG_INFINITY, epoch, params.clone(), table.clone());
            }
        }
    }
    let (best_epoch, params, table) = if trace.is_empty() { (0, params, table) } else { (best.1, best.2, best.3) };
    let out = FusedEmbedding { mode: fused.mode, values: table };
    if !cfg.fine_tune && out.checksum() != frozen {
        return Err(Error::Contract("frozen embedding table changed during head training".into()));
    }
    Ok(PredictorState { params, fused: out, trace, best_epoch })
}

#[cfg(test)]
mod tests;
