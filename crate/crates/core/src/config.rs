//! Run configuration: flat `section.key = value` text with environment overrides.
//!
//! Precedence is defaults, then the file, then `BICLKT_<SECTION>_<KEY>`
//! variables, then whatever the caller sets last (command-line flags).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::AugmentationConfig;
use crate::contrastive::{ContrastiveConfig, LossKind};
use crate::dataio::{SplitSpec, SyntheticConfig, MAX_SEQUENCE_LEN};
use crate::digest::digest_bytes;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::ProbeConfig;
use crate::graph::{CentralityKind, CountMode, GraphConfig};
use crate::numerics::Activation;
use crate::predict::{FusionMode, HeadConfig, HeadKind};

pub const ENV_PREFIX: &str = "BICLKT_";

const SECTIONS: [&str; 9] = ["run", "data", "synth", "graph", "augment", "encoder", "contrastive", "head", "eval"];

/// Keys that do not change any result and are left out of the fingerprint.
const UNFINGERPRINTED: [&str; 2] = ["run.out", "run.threads"];

/// Where interactions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// 0 uses every core.
    pub threads: usize,
    pub source: DataSource,
    /// Column mapping file for `source`; empty means the canonical layout.
    pub format: Option<PathBuf>,
    pub train_fraction: f64,
    pub max_seq_len: usize,
    pub synth: SyntheticConfig,
    pub graph: GraphConfig,
    pub augment: AugmentationConfig,
    pub encoder: EncoderConfig,
    pub contrastive: ContrastiveConfig,
    pub head: HeadConfig,
    pub embed_mode: FusionMode,
    pub probe: ProbeConfig,
    /// Seeds of an ablation sweep.
    pub seeds: Vec<u64>,
    pub grid_aug: Vec<CentralityKind>,
    pub grid_embed: Vec<FusionMode>,
    pub grid_head: Vec<HeadKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs/default"),
            threads: 0,
            source: DataSource::Synthetic,
            format: None,
            train_fraction: 0.8,
            max_seq_len: MAX_SEQUENCE_LEN,
            synth: SyntheticConfig::default(),
            graph: GraphConfig::default(),
            augment: AugmentationConfig::default(),
            encoder: EncoderConfig::default(),
            contrastive: ContrastiveConfig::default(),
            head: HeadConfig::default(),
            embed_mode: FusionMode::Concate,
            probe: ProbeConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            grid_aug: vec![CentralityKind::Uniform, CentralityKind::Degree, CentralityKind::PageRank],
            grid_embed: vec![FusionMode::E2E, FusionMode::C2C, FusionMode::Concate],
            grid_head: vec![HeadKind::R, HeadKind::M],
        }
    }
}

fn list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects a boolean, got `{v}`"))),
    }
}

fn parse_list<T>(key: &str, v: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| item(s.trim())).collect::<Result<_>>().map_err(|e| Error::Config(format!("`{key}`: {e}")))
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
        Activation::Sigmoid => "sigmoid",
        Activation::Identity => "identity",
    }
}

fn parse_activation(key: &str, v: &str) -> Result<Activation> {
    Ok(match v.to_ascii_lowercase().as_str() {
        "relu" => Activation::Relu,
        "tanh" => Activation::Tanh,
        "sigmoid" => Activation::Sigmoid,
        "identity" => Activation::Identity,
        _ => return Err(Error::Config(format!("`{key}`: unknown activation `{v}`"))),
    })
}

impl RunConfig {
    /// Every key with its current value and a one-line description, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String, &'static str)> {
        let s = &self.synth;
        let m = &s.model;
        let (g, a, e, c, h, p) = (&self.graph, &self.augment, &self.encoder, &self.contrastive, &self.head, &self.probe);
        vec![
            ("run.seed", self.seed.to_string(), "global seed; every stochastic stage derives from it"),
            ("run.out", self.out.display().to_string(), "artifact directory"),
            ("run.threads", self.threads.to_string(), "worker threads, 0 for all cores"),
            (
                "data.source",
                match &self.source {
                    DataSource::Synthetic => "synthetic".to_string(),
                    DataSource::File(p) => p.display().to_string(),
                },
                "`synthetic` or a path to an interaction log",
            ),
            ("data.format", self.format.as_ref().map(|p| p.display().to_string()).unwrap_or_default(), "column mapping file for data.source"),
            ("data.train_fraction", self.train_fraction.to_string(), "share of students in the training split"),
            ("data.max_seq_len", self.max_seq_len.to_string(), "longer histories are cut into several sequences"),
            ("synth.n_students", s.n_students.to_string(), "synthetic students"),
            ("synth.n_concepts", s.n_concepts.to_string(), "synthetic concepts"),
            ("synth.n_exercises", s.n_exercises.to_string(), "synthetic exercises"),
            ("synth.sequence_len", s.sequence_len.to_string(), "interactions per synthetic student"),
            ("synth.guess", m.guess.to_string(), "probability of a correct answer without mastery"),
            ("synth.slip", m.slip.to_string(), "probability of a wrong answer with mastery"),
            ("synth.learn_rate", m.learn_rate.to_string(), "mastery gain per attempt, as a share of the gap to 1"),
            ("synth.mastery_lo", m.initial_mastery.0.to_string(), "lower bound of initial mastery"),
            ("synth.mastery_hi", m.initial_mastery.1.to_string(), "upper bound of initial mastery"),
            ("synth.difficulty_spread", m.difficulty_spread.to_string(), "half-width of concept difficulty offsets"),
            ("synth.second_concept_prob", s.second_concept_prob.to_string(), "chance an exercise gets a second concept"),
            ("synth.block_min", s.block_len.0.to_string(), "shortest run of attempts on one concept"),
            ("synth.block_max", s.block_len.1.to_string(), "longest run of attempts on one concept"),
            ("graph.edge_threshold", g.edge_threshold.to_string(), "keep an edge iff its weight exceeds this"),
            ("graph.subgraph_cap", g.subgraph_cap.to_string(), "most exercises per concept graph"),
            (
                "graph.count_mode",
                match g.count_mode {
                    CountMode::Students => "students",
                    CountMode::Events => "events",
                }
                .to_string(),
                "`students` (first attempts) or `events` (every attempt)",
            ),
            ("augment.centrality", a.centrality.to_string(), "uniform, degree or pagerank"),
            ("augment.p_f", a.p_f.to_string(), "drop probability at mean centrality"),
            ("augment.p_tau", a.p_tau.to_string(), "drop probability cap"),
            ("augment.p_f1", a.p_f1.to_string(), "base rate of the first view"),
            ("augment.p_f2", a.p_f2.to_string(), "base rate of the second view"),
            ("augment.p_mask", a.p_mask.to_string(), "feature column mask probability"),
            ("augment.drop_edges", a.drop_edges.to_string(), "drop edges in views"),
            ("augment.drop_nodes", a.drop_nodes.to_string(), "drop nodes in views"),
            ("encoder.d_in", e.d_in.to_string(), "learned exercise feature size"),
            ("encoder.hidden", list(&e.hidden), "graph convolution widths"),
            ("encoder.d", e.d.to_string(), "representation size"),
            ("encoder.d_z", e.d_z.to_string(), "projection head output size"),
            ("encoder.activation", activation_name(e.activation).to_string(), "relu, tanh, sigmoid or identity"),
            ("encoder.skip_concat", e.skip_concat.to_string(), "project the concatenation of all layers"),
            ("contrastive.temperature", c.temperature.to_string(), "similarity temperature"),
            ("contrastive.batch_size", c.batch_size.to_string(), "graphs per step"),
            ("contrastive.epochs", c.epochs.to_string(), "pretraining epochs"),
            ("contrastive.lambda", c.lambda.to_string(), "node loss weight; graph loss gets 1 - lambda"),
            ("contrastive.margin", c.margin.to_string(), "margin of the hinge loss"),
            ("contrastive.include_positive", c.include_positive.to_string(), "count the positive in the denominator"),
            (
                "contrastive.loss",
                match c.loss {
                    LossKind::NtXent => "nt_xent",
                    LossKind::MarginHinge => "margin",
                }
                .to_string(),
                "nt_xent or margin",
            ),
            ("contrastive.lr", c.lr.to_string(), "Adam learning rate"),
            ("head.kind", h.kind.to_string(), "R (recurrent) or M (key-value memory)"),
            ("head.embed_mode", self.embed_mode.to_string(), "e2e, c2c or concate"),
            ("head.hidden", h.hidden.to_string(), "hidden state size"),
            ("head.response_dim", h.response_dim.to_string(), "response embedding size"),
            ("head.mem_slots", h.mem_slots.to_string(), "memory slots"),
            ("head.key_dim", h.key_dim.to_string(), "memory key size"),
            ("head.value_dim", h.value_dim.to_string(), "memory value size"),
            ("head.lr", h.lr.to_string(), "Adam learning rate"),
            ("head.epochs", h.epochs.to_string(), "most training epochs"),
            ("head.batch_size", h.batch_size.to_string(), "sequences per step"),
            ("head.patience", h.patience.to_string(), "early stopping patience in epochs"),
            ("head.val_fraction", h.val_fraction.to_string(), "training students held out for early stopping"),
            ("head.fine_tune", h.fine_tune.to_string(), "also train the embedding table"),
            ("eval.probe_epochs", p.epochs.to_string(), "logistic probe epochs"),
            ("eval.probe_lr", p.lr.to_string(), "logistic probe step size"),
            ("eval.probe_l2", p.l2.to_string(), "logistic probe L2 weight"),
            ("eval.seeds", list(&self.seeds), "ablation seeds"),
            ("eval.grid_aug", list(&self.grid_aug), "ablation centralities"),
            ("eval.grid_embed", list(&self.grid_embed), "ablation embedding modes"),
            ("eval.grid_head", list(&self.grid_head), "ablation heads"),
        ]
    }

    /// Sets one key. Unknown keys and unparseable values are errors.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        let k = key;
        match key {
            "run.seed" => self.seed = parse(k, v)?,
            "run.out" => self.out = PathBuf::from(v),
            "run.threads" => self.threads = parse(k, v)?,
            "data.source" => {
                self.source = if v == "synthetic" { DataSource::Synthetic } else { DataSource::File(PathBuf::from(v)) }
            }
            "data.format" => self.format = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.train_fraction" => self.train_fraction = parse(k, v)?,
            "data.max_seq_len" => self.max_seq_len = parse(k, v)?,
            "synth.n_students" => self.synth.n_students = parse(k, v)?,
            "synth.n_concepts" => self.synth.n_concepts = parse(k, v)?,
            "synth.n_exercises" => self.synth.n_exercises = parse(k, v)?,
            "synth.sequence_len" => self.synth.sequence_len = parse(k, v)?,
            "synth.guess" => self.synth.model.guess = parse(k, v)?,
            "synth.slip" => self.synth.model.slip = parse(k, v)?,
            "synth.learn_rate" => self.synth.model.learn_rate = parse(k, v)?,
            "synth.mastery_lo" => self.synth.model.initial_mastery.0 = parse(k, v)?,
            "synth.mastery_hi" => self.synth.model.initial_mastery.1 = parse(k, v)?,
            "synth.difficulty_spread" => self.synth.model.difficulty_spread = parse(k, v)?,
            "synth.second_concept_prob" => self.synth.second_concept_prob = parse(k, v)?,
            "synth.block_min" => self.synth.block_len.0 = parse(k, v)?,
            "synth.block_max" => self.synth.block_len.1 = parse(k, v)?,
            "graph.edge_threshold" => self.graph.edge_threshold = parse(k, v)?,
            "graph.subgraph_cap" => self.graph.subgraph_cap = parse(k, v)?,
            "graph.count_mode" => {
                self.graph.count_mode = match v {
                    "students" => CountMode::Students,
                    "events" => CountMode::Events,
                    _ => return Err(Error::Config(format!("`{k}`: expected students or events, got `{v}`"))),
                }
            }
            "augment.centrality" => self.augment.centrality = v.parse()?,
            "augment.p_f" => self.augment.p_f = parse(k, v)?,
            "augment.p_tau" => self.augment.p_tau = parse(k, v)?,
            "augment.p_f1" => self.augment.p_f1 = parse(k, v)?,
            "augment.p_f2" => self.augment.p_f2 = parse(k, v)?,
            "augment.p_mask" => self.augment.p_mask = parse(k, v)?,
            "augment.drop_edges" => self.augment.drop_edges = parse_bool(k, v)?,
            "augment.drop_nodes" => self.augment.drop_nodes = parse_bool(k, v)?,
            "encoder.d_in" => self.encoder.d_in = parse(k, v)?,
            "encoder.hidden" => self.encoder.hidden = parse_list(k, v, |s| parse(k, s))?,
            "encoder.d" => self.encoder.d = parse(k, v)?,
            "encoder.d_z" => self.encoder.d_z = parse(k, v)?,
            "encoder.activation" => self.encoder.activation = parse_activation(k, v)?,
            "encoder.skip_concat" => self.encoder.skip_concat = parse_bool(k, v)?,
            "contrastive.temperature" => self.contrastive.temperature = parse(k, v)?,
            "contrastive.batch_size" => self.contrastive.batch_size = parse(k, v)?,
            "contrastive.epochs" => self.contrastive.epochs = parse(k, v)?,
            "contrastive.lambda" => self.contrastive.lambda = parse(k, v)?,
            "contrastive.margin" => self.contrastive.margin = parse(k, v)?,
            "contrastive.include_positive" => self.contrastive.include_positive = parse_bool(k, v)?,
            "contrastive.loss" => {
                self.contrastive.loss = match v {
                    "nt_xent" | "ntxent" => LossKind::NtXent,
                    "margin" => LossKind::MarginHinge,
                    _ => return Err(Error::Config(format!("`{k}`: expected nt_xent or margin, got `{v}`"))),
                }
            }
            "contrastive.lr" => self.contrastive.lr = parse(k, v)?,
            "head.kind" => self.head.kind = v.parse()?,
            "head.embed_mode" => self.embed_mode = v.parse()?,
            "head.hidden" => self.head.hidden = parse(k, v)?,
            "head.response_dim" => self.head.response_dim = parse(k, v)?,
            "head.mem_slots" => self.head.mem_slots = parse(k, v)?,
            "head.key_dim" => self.head.key_dim = parse(k, v)?,
            "head.value_dim" => self.head.value_dim = parse(k, v)?,
            "head.lr" => self.head.lr = parse(k, v)?,
            "head.epochs" => self.head.epochs = parse(k, v)?,
            "head.batch_size" => self.head.batch_size = parse(k, v)?,
            "head.patience" => self.head.patience = parse(k, v)?,
            "head.val_fraction" => self.head.val_fraction = parse(k, v)?,
            "head.fine_tune" => self.head.fine_tune = parse_bool(k, v)?,
            "eval.probe_epochs" => self.probe.epochs = parse(k, v)?,
            "eval.probe_lr" => self.probe.lr = parse(k, v)?,
            "eval.probe_l2" => self.probe.l2 = parse(k, v)?,
            "eval.seeds" => self.seeds = parse_list(k, v, |s| parse(k, s))?,
            "eval.grid_aug" => self.grid_aug = parse_list(k, v, str::parse)?,
            "eval.grid_embed" => self.grid_embed = parse_list(k, v, str::parse)?,
            "eval.grid_head" => self.grid_head = parse_list(k, v, str::parse)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `section.key = value` lines. `#` starts a comment; a key may appear once.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", i + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: `{k}` set twice", i + 1)));
            }
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Applies `BICLKT_<SECTION>_<KEY>` pairs; other names are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (name, value) in vars {
            let Some(rest) = name.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            let rest = rest.to_ascii_lowercase();
            let key = SECTIONS
                .iter()
                .find_map(|s| rest.strip_prefix(s).and_then(|r| r.strip_prefix('_')).map(|k| format!("{s}.{k}")))
                .ok_or_else(|| Error::Config(format!("environment variable {} names no config section", name.as_ref())))?;
            self.set(&key, value.as_ref()).map_err(|e| Error::Config(format!("{}: {e}", name.as_ref())))?;
        }
        Ok(())
    }

    /// Canonical `key = value` text that reloads to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v, _) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Hash over every result-affecting key.
    pub fn fingerprint(&self) -> String {
        let mut s = String::new();
        for (k, v, _) in self.entries() {
            if !UNFINGERPRINTED.contains(&k) {
                let _ = writeln!(s, "{k}={v}");
            }
        }
        digest_bytes(s.as_bytes())[..16].to_string()
    }

    /// Key listing with defaults, for help output.
    pub fn describe() -> String {
        let entries = RunConfig::default().entries();
        let w = entries.iter().map(|(k, v, _)| k.len() + v.len() + 3).max().unwrap_or(0);
        let mut s = String::new();
        for (k, v, help) in entries {
            let kv = format!("{k} = {v}");
            let _ = writeln!(s, "  {kv:<w$}  {help}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("data.train_fraction must be in (0, 1), got {}", self.train_fraction)));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Config("data.max_seq_len must be >= 2".into()));
        }
        self.augment.validate()?;
        self.encoder.validate()?;
        self.contrastive.validate()?;
        self.head.validate()?;
        if self.probe.epochs == 0 || !(self.probe.lr > 0.0) || self.probe.l2 < 0.0 {
            return Err(Error::Config("eval.probe_* must give epochs >= 1, lr > 0, l2 >= 0".into()));
        }
        if self.graph.subgraph_cap == 0 {
            return Err(Error::Config("graph.subgraph_cap must be >= 1".into()));
        }
        if self.source == DataSource::Synthetic {
            crate::dataio::generate_synthetic(&SyntheticConfig { n_students: 1, sequence_len: 1, ..self.synth_config() })?;
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SyntheticConfig {
        SyntheticConfig { seed: self.seed, ..self.synth.clone() }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.train_fraction, seed: self.seed }
    }

    pub fn contrastive_config(&self) -> ContrastiveConfig {
        ContrastiveConfig { seed: self.seed, ..self.contrastive.clone() }
    }

    pub fn augment_config(&self) -> AugmentationConfig {
        AugmentationConfig { seed: self.seed, ..self.augment.clone() }
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig { seed: self.seed, ..self.head.clone() }
    }

    /// Same config with another seed.
    pub fn with_seed(&self, seed: u64) -> RunConfig {
        RunConfig { seed, ..self.clone() }
    }
}
