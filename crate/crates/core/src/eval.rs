//! Metrics, the logistic probe and the ablation table.

use std::fmt::{self, Write as _};
use std::io::Write;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{sigmoid_scalar, Matrix, Tape, Var};

fn check_labels(labels: &[f64]) -> Result<()> {
    match labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        Some(l) => Err(Error::Contract(format!("labels must be 0 or 1, got {l}"))),
        None => Ok(()),
    }
}

/// Exact Mann-Whitney AUC: the fraction of (positive, negative) pairs where
/// the positive scores higher, ties counting one half.
///
/// Sorts once and counts wins and ties in integers, so the result equals the
/// pairwise definition to the last bit.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim("auc", (scores.len(), 1), (labels.len(), 1)));
    }
    check_labels(labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!("auc needs both classes ({n_pos} positive, {n_neg} negative)")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // 2 * wins + ties, accumulated per block of equal scores
    let (mut doubled, mut neg_below) = (0u128, 0u128);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1.0 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        doubled += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(doubled as f64 / (2 * n_pos * n_neg) as f64)
}

/// Fraction of rows where `score > threshold` agrees with the label.
/// A score equal to the threshold predicts 0.
pub fn acc(scores: &[f64], labels: &[f64], threshold: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim("acc", (scores.len(), 1), (labels.len(), 1)));
    }
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of zero predictions".into()));
    }
    check_labels(labels)?;
    let hits = scores.iter().zip(labels).filter(|(&s, &l)| (s > threshold) == (l == 1.0)).count();
    Ok(hits as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { epochs: 500, lr: 1.0, l2: 1e-4 }
    }
}

/// Rows of an embedding matrix with binary targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeTask {
    pub rows: Vec<usize>,
    pub labels: Vec<bool>,
}

impl ProbeTask {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn targets(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(u8::from(l))).collect()
    }
}

/// Mean logistic loss of `x w + b` plus `l2/2 * |w|^2`.
pub fn probe_loss(tape: &mut Tape, x: Var, w: Var, b: Var, targets: &[f64], l2: f64) -> Result<Var> {
    let z = tape.matmul(x, w)?;
    let z = tape.add_row(z, b)?;
    let bce = tape.bce_with_logits(z, targets)?;
    let data = tape.scale(bce, 1.0 / targets.len().max(1) as f64);
    let sq = tape.mul(w, w)?;
    let sq = tape.sum(sq);
    let reg = tape.scale(sq, 0.5 * l2);
    tape.add(data, reg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub w: Matrix,
    pub b: f64,
}

impl ProbeModel {
    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(x.matmul(&self.w)?.as_slice().iter().map(|&z| sigmoid_scalar(z + self.b)).collect())
    }
}

fn normalized(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            row.iter_mut().for_each(|v| *v /= n);
        } else {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub model: ProbeModel,
    pub auc: f64,
    pub acc: f64,
    pub n_test: usize,
}

/// Fits a logistic regression on row-normalized `embeddings` by full-batch
/// gradient descent and scores the held-out rows.
pub fn linear_probe(embeddings: &Matrix, train: &ProbeTask, test: &ProbeTask, cfg: &ProbeConfig) -> Result<ProbeResult> {
    for t in [train, test] {
        if t.rows.len() != t.labels.len() {
            return Err(Error::Contract("probe task rows and labels differ in length".into()));
        }
    }
    if train.labels.iter().all(|&l| l) || train.labels.iter().all(|&l| !l) {
        return Err(Error::UndefinedMetric("probe training labels have a single class".into()));
    }
    let x = normalized(embeddings);
    let x_train = x.select_rows(&train.rows);
    let y_train = train.targets();
    let mut w = Matrix::zeros(x.cols(), 1);
    let mut b = Matrix::zeros(1, 1);
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let xv = tape.constant(x_train.clone());
        let (wv, bv) = (tape.var(w.clone()), tape.var(b.clone()));
        let loss = probe_loss(&mut tape, xv, wv, bv, &y_train, cfg.l2)?;
        if !tape.value(loss).is_finite() {
            return Err(Error::Divergence { epoch: epoch + 1, what: "probe loss".into() });
        }
        let g = tape.backward(loss)?;
        w = w.sub(&g.wrt(wv).scale(cfg.lr))?;
        b = b.sub(&g.wrt(bv).scale(cfg.lr))?;
    }
    let model = ProbeModel { w, b: b.item()? };
    let scores = model.scores(&x.select_rows(&test.rows))?;
    let y_test = test.targets();
    Ok(ProbeResult { auc: auc(&scores, &y_test)?, acc: acc(&scores, &y_test, 0.5)?, model, n_test: test.len() })
}

/// Metrics of one seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedMetrics {
    pub seed: u64,
    pub auc: f64,
    pub acc: f64,
    pub n_predictions: usize,
}

/// Aggregate over seeds. `auc` and `acc` are seed means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub auc: f64,
    pub acc: f64,
    pub n_predictions: usize,
    pub per_seed: Vec<SeedMetrics>,
    pub fingerprint: String,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

impl MetricReport {
    pub fn from_seeds(per_seed: Vec<SeedMetrics>, fingerprint: impl Into<String>) -> Self {
        let aucs: Vec<f64> = per_seed.iter().map(|s| s.auc).collect();
        let accs: Vec<f64> = per_seed.iter().map(|s| s.acc).collect();
        MetricReport {
            auc: mean_std(&aucs).0,
            acc: mean_std(&accs).0,
            n_predictions: per_seed.iter().map(|s| s.n_predictions).sum(),
            per_seed,
            fingerprint: fingerprint.into(),
        }
    }

    pub fn auc_std(&self) -> f64 {
        mean_std(&self.per_seed.iter().map(|s| s.auc).collect::<Vec<_>>()).1
    }

    pub fn acc_std(&self) -> f64 {
        mean_std(&self.per_seed.iter().map(|s| s.acc).collect::<Vec<_>>()).1
    }
}

/// One grid point of an ablation sweep.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AblationCell {
    pub dataset: String,
    pub aug: String,
    pub embed_mode: String,
    pub head: String,
    pub seed: u64,
}

impl fmt::Display for AblationCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}/seed{}", self.dataset, self.aug, self.embed_mode, self.head, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub cell: AblationCell,
    /// A failed cell keeps its error message.
    pub outcome: std::result::Result<SeedMetrics, String>,
}

/// Runs every cell (in parallel); a failing cell is recorded and the rest continue.
/// Rows come back in grid order.
pub fn run_ablation<F>(grid: &[AblationCell], run: F) -> Vec<AblationRow>
where
    F: Fn(&AblationCell) -> Result<SeedMetrics> + Sync,
{
    grid.par_iter()
        .map(|cell| {
            let outcome = run(cell).map_err(|e| {
                warn!("ablation cell {cell} failed: {e}");
                e.to_string()
            });
            AblationRow { cell: cell.clone(), outcome }
        })
        .collect()
}

pub const CSV_HEADER: &str = "dataset,aug,embed_mode,head,seed,auc,acc,n_predictions";

/// Machine-readable table. Failed cells have empty metric fields.
pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Data(format!("writing ablation csv: {e}"));
    w.write_record(CSV_HEADER.split(',')).map_err(io)?;
    for r in rows {
        let c = &r.cell;
        let (a, b, n) = match &r.outcome {
            Ok(m) => (format!("{:.6}", m.auc), format!("{:.6}", m.acc), m.n_predictions.to_string()),
            Err(_) => (String::new(), String::new(), String::new()),
        };
        w.write_record([c.dataset.as_str(), &c.aug, &c.embed_mode, &c.head, &c.seed.to_string(), &a, &b, &n]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing ablation csv: {e}")))?;
    Ok(())
}

/// Seed-aggregated rows keyed by (dataset, aug, embed_mode, head), in first-seen order.
pub fn summarize(rows: &[AblationRow]) -> Vec<((String, String, String, String), MetricReport, usize)> {
    let mut out: Vec<((String, String, String, String), Vec<SeedMetrics>, usize)> = Vec::new();
    for r in rows {
        let key = (r.cell.dataset.clone(), r.cell.aug.clone(), r.cell.embed_mode.clone(), r.cell.head.clone());
        let slot = match out.iter().position(|(k, _, _)| *k == key) {
            Some(i) => i,
            None => {
                out.push((key, Vec::new(), 0));
                out.len() - 1
            }
        };
        match &r.outcome {
            Ok(m) => out[slot].1.push(*m),
            Err(_) => out[slot].2 += 1,
        }
    }
    out.into_iter().map(|(k, seeds, failed)| (k, MetricReport::from_seeds(seeds, ""), failed)).collect()
}

/// Aligned text summary with mean ± std over seeds.
pub fn format_table(rows: &[AblationRow]) -> String {
    let mut lines = vec![[
        "dataset".to_string(),
        "aug".into(),
        "embed".into(),
        "head".into(),
        "seeds".into(),
        "auc".into(),
        "acc".into(),
    ]];
    for ((d, a, e, h), rep, failed) in summarize(rows) {
        let seeds = if failed > 0 { format!("{} ({failed} failed)", rep.per_seed.len()) } else { rep.per_seed.len().to_string() };
        let fmt_m = |m: f64, s: f64| if m.is_nan() { "-".to_string() } else { format!("{m:.4} ± {s:.4}") };
        lines.push([d, a, e, h, seeds, fmt_m(rep.auc, rep.auc_std()), fmt_m(rep.acc, rep.acc_std())]);
    }
    let widths: Vec<usize> = (0..7).map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
    let mut s = String::new();
    for l in &lines {
        let cells: Vec<String> = l.iter().zip(&widths).map(|(v, &w)| format!("{v:<w$}")).collect();
        let _ = writeln!(s, "{}", cells.join("  ").trim_end());
    }
    s
}

/// Whitespace-separated `index label auc auc_std acc acc_std` rows for gnuplot.
pub fn gnuplot_dump(rows: &[AblationRow]) -> String {
    let mut s = String::from("# index label auc auc_std acc acc_std\n");
    for (i, ((d, a, e, h), rep, _)) in summarize(rows).into_iter().enumerate() {
        let _ = writeln!(
            s,
            "{i} {d}/{a}/{e}/{h} {:.6} {:.6} {:.6} {:.6}",
            rep.auc,
            rep.auc_std(),
            rep.acc,
            rep.acc_std()
        );
    }
    s
}
