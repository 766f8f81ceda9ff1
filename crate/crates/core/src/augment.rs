//! Centrality-adaptive graph corruption.
//!
//! Each node or edge `i` gets a log-centrality `s_i`. Its elimination
//! probability is
//!
//! ```text
//! p_i = min((s_max - s_i) / (s_max - mean(s)) * p_f, p_tau)
//! ```
//!
//! so the most central unit is never preferentially dropped and units at
//! the mean are dropped with probability `p_f`. Edge scores use the mean of
//! the endpoint centralities. Two views are drawn per graph with different
//! base rates `p_f1` and `p_f2`.

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{centrality, normalized_from_edges, CentralityKind, CentralityScores, Edge, InfluenceGraph};
use crate::numerics::{rng_for, Matrix};

/// Scores below this are floored before taking the log.
const SCORE_FLOOR: f64 = 1e-12;
const MAX_RESAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationConfig {
    pub centrality: CentralityKind,
    pub p_f: f64,
    pub p_tau: f64,
    pub p_f1: f64,
    pub p_f2: f64,
    pub p_mask: f64,
    pub seed: u64,
    pub drop_edges: bool,
    pub drop_nodes: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            centrality: CentralityKind::PageRank,
            p_f: 0.2,
            p_tau: 0.7,
            p_f1: 0.2,
            p_f2: 0.3,
            p_mask: 0.1,
            seed: 0,
            drop_edges: true,
            drop_nodes: true,
        }
    }
}

impl AugmentationConfig {
    /// No corruption at all; both views equal the source graph.
    pub fn identity() -> Self {
        AugmentationConfig {
            p_f1: 0.0,
            p_f2: 0.0,
            p_mask: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, lo: f64, hi: f64, hi_open: bool| {
            let ok = v >= lo && if hi_open { v < hi } else { v <= hi };
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("aug.{name} = {v} out of range")))
            }
        };
        if !(self.p_f > 0.0 && self.p_f < 1.0) {
            return Err(Error::Config(format!("aug.p_f = {} must be in (0, 1)", self.p_f)));
        }
        check("p_tau", self.p_tau, 0.0, 1.0, false)?;
        check("p_f1", self.p_f1, 0.0, 1.0, true)?;
        check("p_f2", self.p_f2, 0.0, 1.0, true)?;
        check("p_mask", self.p_mask, 0.0, 1.0, true)?;
        if self.p_f > self.p_tau {
            warn!("aug.p_f ({}) exceeds aug.p_tau ({})", self.p_f, self.p_tau);
        }
        Ok(())
    }

    fn view_rate(&self, view: usize) -> f64 {
        if view == 0 {
            self.p_f1
        } else {
            self.p_f2
        }
    }
}

/// Per-edge (aligned with `g.edges`) and per-node elimination probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminationProbabilities {
    pub edge: Vec<f64>,
    pub node: Vec<f64>,
}

fn log_scores(raw: impl Iterator<Item = f64>) -> Vec<f64> {
    raw.map(|w| w.max(SCORE_FLOOR).ln()).collect()
}

/// The capped, centrality-scaled probability for every unit of `s`.
pub fn adaptive_probabilities(s: &[f64], p_f: f64, p_tau: f64) -> Vec<f64> {
    if s.is_empty() {
        return Vec::new();
    }
    let s_max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let spread = s_max - mean;
    if spread <= 1e-12 * s_max.abs().max(1.0) {
        return vec![p_f.min(p_tau); s.len()];
    }
    s.iter().map(|&si| ((s_max - si) / spread * p_f).min(p_tau)).collect()
}

fn node_and_edge_scores(g: &InfluenceGraph, scores: &CentralityScores) -> (Vec<f64>, Vec<f64>) {
    let w = &scores.scores;
    let node = log_scores(w.iter().cloned());
    let edge = log_scores(g.edges.iter().map(|e| 0.5 * (w[e.src] + w[e.dst])));
    (node, edge)
}

/// Elimination probabilities at the configured base rate `cfg.p_f`.
pub fn elimination_probabilities(
    g: &InfluenceGraph,
    scores: &CentralityScores,
    cfg: &AugmentationConfig,
) -> EliminationProbabilities {
    probabilities_at(g, scores, cfg.p_f, cfg.p_tau)
}

fn probabilities_at(g: &InfluenceGraph, scores: &CentralityScores, p_f: f64, p_tau: f64) -> EliminationProbabilities {
    let (node_s, edge_s) = node_and_edge_scores(g, scores);
    EliminationProbabilities {
        edge: adaptive_probabilities(&edge_s, p_f, p_tau),
        node: adaptive_probabilities(&node_s, p_f, p_tau),
    }
}

/// A corrupted copy of an influence graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphView {
    pub concept: usize,
    /// Surviving nodes as source-local indices, ascending.
    pub kept_nodes: Vec<usize>,
    /// Surviving edges in source-local indices; a subset of the source edges.
    pub kept_edges: Vec<Edge>,
    /// `true` where a feature dimension is kept.
    pub feature_mask: Vec<bool>,
    /// Normalised adjacency over the surviving nodes (view-local order).
    pub adjacency: Matrix,
    /// Catalog exercise index of each surviving node.
    pub exercises: Vec<usize>,
}

impl GraphView {
    pub fn n(&self) -> usize {
        self.kept_nodes.len()
    }

    /// The uncorrupted view of `g` with all `feature_dim` features kept.
    pub fn full(g: &InfluenceGraph, feature_dim: usize) -> Self {
        Self::assemble(g, (0..g.n()).collect(), g.edges.clone(), vec![true; feature_dim])
    }

    fn assemble(g: &InfluenceGraph, kept_nodes: Vec<usize>, kept_edges: Vec<Edge>, feature_mask: Vec<bool>) -> Self {
        let local = local_index(g.n(), &kept_nodes);
        let edges: Vec<Edge> = kept_edges
            .iter()
            .map(|e| Edge { src: local[e.src], dst: local[e.dst], weight: e.weight })
            .collect();
        GraphView {
            concept: g.concept,
            adjacency: normalized_from_edges(kept_nodes.len(), &edges),
            exercises: kept_nodes.iter().map(|&i| g.nodes[i]).collect(),
            kept_nodes,
            kept_edges,
            feature_mask,
        }
    }

    /// Neighbour lists in view-local indices.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let local = local_index(self.kept_nodes.iter().max().map_or(0, |m| m + 1), &self.kept_nodes);
        let edges: Vec<Edge> = self
            .kept_edges
            .iter()
            .map(|e| Edge { src: local[e.src], dst: local[e.dst], weight: e.weight })
            .collect();
        crate::graph::neighbours(self.n(), &edges)
    }

    /// `n x dim` 0/1 mask with the feature mask broadcast over nodes.
    pub fn mask_matrix(&self) -> Matrix {
        let dim = self.feature_mask.len();
        let mut m = Matrix::zeros(self.n(), dim);
        for r in 0..self.n() {
            for (c, &keep) in self.feature_mask.iter().enumerate() {
                if keep {
                    m.set(r, c, 1.0);
                }
            }
        }
        m
    }
}

fn local_index(n: usize, kept: &[usize]) -> Vec<usize> {
    let mut local = vec![usize::MAX; n];
    for (l, &i) in kept.iter().enumerate() {
        local[i] = l;
    }
    local
}

/// Stream key for `make_views`; callers vary `stream` per epoch/step.
pub fn view_stream(epoch: u64, purpose: u64) -> u64 {
    epoch.wrapping_mul(0x1_0000).wrapping_add(purpose)
}

/// Draws two views of `g`. Deterministic in `(cfg.seed, g.concept, stream, view)`.
pub fn make_views(
    g: &InfluenceGraph,
    cfg: &AugmentationConfig,
    feature_dim: usize,
    stream: u64,
) -> Result<(GraphView, GraphView)> {
    if g.n() == 0 {
        return Err(Error::Contract("cannot augment an empty graph".into()));
    }
    let scores = centrality(g, cfg.centrality)?;
    let v1 = draw_view(g, &scores, cfg, feature_dim, stream, 0);
    let v2 = draw_view(g, &scores, cfg, feature_dim, stream, 1);
    Ok((v1, v2))
}

fn draw_view(
    g: &InfluenceGraph,
    scores: &CentralityScores,
    cfg: &AugmentationConfig,
    feature_dim: usize,
    stream: u64,
    view: usize,
) -> GraphView {
    let probs = probabilities_at(g, scores, cfg.view_rate(view), cfg.p_tau);
    let mut rng = rng_for(cfg.seed, &[g.concept as u64, stream, view as u64]);

    let mut kept_nodes = Vec::new();
    for _ in 0..MAX_RESAMPLES {
        kept_nodes = (0..g.n())
            .filter(|&i| {
                let u: f64 = rng.gen();
                !cfg.drop_nodes || u >= probs.node[i]
            })
            .collect();
        if !kept_nodes.is_empty() {
            break;
        }
    }
    if kept_nodes.is_empty() {
        let best = (0..g.n())
            .max_by(|&a, &b| scores.scores[a].total_cmp(&scores.scores[b]).then(b.cmp(&a)))
            .expect("non-empty graph");
        kept_nodes.push(best);
    }
    let alive = local_index(g.n(), &kept_nodes);
    let kept_edges: Vec<Edge> = g
        .edges
        .iter()
        .zip(&probs.edge)
        .filter_map(|(e, &p)| {
            let u: f64 = rng.gen();
            let survives = !cfg.drop_edges || u >= p;
            (survives && alive[e.src] != usize::MAX && alive[e.dst] != usize::MAX).then_some(*e)
        })
        .collect();
    let feature_mask = (0..feature_dim).map(|_| rng.gen::<f64>() >= cfg.p_mask).collect();
    GraphView::assemble(g, kept_nodes, kept_edges, feature_mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalize_adjacency;

    fn scores(kind: CentralityKind, w: Vec<f64>) -> CentralityScores {
        CentralityScores { kind, scores: w, damping: None }
    }

    pub(crate) fn six_node() -> InfluenceGraph {
        let e = |src, dst, weight| Edge { src, dst, weight };
        InfluenceGraph {
            concept: 3,
            nodes: (10..16).collect(),
            edges: vec![
                e(0, 1, 0.5),
                e(1, 0, 0.25),
                e(0, 2, 0.4),
                e(2, 3, 0.3),
                e(3, 4, 0.2),
                e(4, 5, 0.6),
                e(5, 0, 0.1),
                e(1, 3, 0.35),
            ],
        }
    }

    #[test]
    fn most_central_never_preferred_and_mean_gets_base_rate() {
        let s = vec![1.0, 2.0, 3.0];
        let p = adaptive_probabilities(&s, 0.3, 0.5);
        assert_eq!(p[2], 0.0);
        assert_eq!(p[1], 0.3);
        assert_eq!(p[0], 0.5); // (3-1)/(3-2)*0.3 = 0.6, capped
    }

    #[test]
    fn degenerate_scores_use_base_rate() {
        assert_eq!(adaptive_probabilities(&[2.0; 4], 0.3, 0.2), vec![0.2; 4]);
        assert_eq!(adaptive_probabilities(&[2.0; 4], 0.1, 0.2), vec![0.1; 4]);
    }

    /// Direct recomputation of the capped formula with degree centrality.
    #[test]
    fn six_node_degree_matches_recomputation() {
        let g = six_node();
        let sc = centrality(&g, CentralityKind::Degree).unwrap();
        let cfg = AugmentationConfig { p_f: 0.3, p_tau: 0.5, ..AugmentationConfig::default() };
        let probs = elimination_probabilities(&g, &sc, &cfg);

        let deg = [1.25, 1.1, 0.7, 0.85, 0.8, 0.7];
        let s: Vec<f64> = deg.iter().map(|d: &f64| d.ln()).collect();
        let smax = s.iter().cloned().fold(f64::MIN, f64::max);
        let mu = s.iter().sum::<f64>() / 6.0;
        for i in 0..6 {
            let expect = ((smax - s[i]) / (smax - mu) * 0.3).min(0.5);
            assert!((probs.node[i] - expect).abs() < 1e-12, "node {i}");
        }
        let es: Vec<f64> = g.edges.iter().map(|e| (0.5 * (deg[e.src] + deg[e.dst])).ln()).collect();
        let emax = es.iter().cloned().fold(f64::MIN, f64::max);
        let emu = es.iter().sum::<f64>() / es.len() as f64;
        for (k, p) in probs.edge.iter().enumerate() {
            let expect = ((emax - es[k]) / (emax - emu) * 0.3).min(0.5);
            assert!((p - expect).abs() < 1e-12, "edge {k}");
        }
    }

    #[test]
    fn probabilities_bounded_and_monotone() {
        let g = six_node();
        for kind in [CentralityKind::Uniform, CentralityKind::Degree, CentralityKind::PageRank] {
            let sc = centrality(&g, kind).unwrap();
            let cfg = AugmentationConfig::default();
            let p = elimination_probabilities(&g, &sc, &cfg);
            assert!(p.node.iter().chain(&p.edge).all(|&v| (0.0..=cfg.p_tau).contains(&v)));
            for a in 0..6 {
                for b in 0..6 {
                    if sc.scores[a] < sc.scores[b] {
                        assert!(p.node[a] >= p.node[b]);
                    }
                }
            }
        }
        // zero centrality is floored, not -inf
        let p = elimination_probabilities(&g, &scores(CentralityKind::Degree, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0]), &AugmentationConfig::default());
        assert!(p.node.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn no_corruption_reproduces_source() {
        let g = six_node();
        let (a, b) = make_views(&g, &AugmentationConfig::identity(), 8, 0).unwrap();
        let full = GraphView::full(&g, 8);
        assert_eq!(a, full);
        assert_eq!(b, full);
        assert_eq!(a.adjacency, normalize_adjacency(&g));

        let cap_zero = AugmentationConfig { p_tau: 0.0, p_mask: 0.0, ..AugmentationConfig::default() };
        let (a, _) = make_views(&g, &cap_zero, 8, 0).unwrap();
        assert_eq!(a, full);
    }

    #[test]
    fn views_replay_and_respect_subsets() {
        let g = six_node();
        let cfg = AugmentationConfig { p_f1: 0.5, p_f2: 0.6, p_tau: 0.9, p_mask: 0.3, ..AugmentationConfig::default() };
        for stream in 0..50 {
            let (a, b) = make_views(&g, &cfg, 16, stream).unwrap();
            assert_eq!((a.clone(), b.clone()), make_views(&g, &cfg, 16, stream).unwrap());
            for v in [a, b] {
                assert!(v.n() >= 1);
                assert!(v.kept_edges.iter().all(|e| g.edges.contains(e)));
                assert!(v.kept_edges.iter().all(|e| v.kept_nodes.contains(&e.src) && v.kept_nodes.contains(&e.dst)));
                let adj = &v.adjacency;
                assert_eq!(adj.max_abs_diff(&adj.transpose()), 0.0);
                assert!(adj.as_slice().iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn everything_dropped_falls_back_to_central_node() {
        let g = six_node();
        // p_tau = 1 and a huge base rate: non-central nodes always drop,
        // the most central has probability 0 and always survives
        let cfg = AugmentationConfig { p_f: 0.99, p_f1: 0.99, p_f2: 0.99, p_tau: 1.0, ..AugmentationConfig::default() };
        let (a, _) = make_views(&g, &cfg, 4, 1).unwrap();
        assert!(a.n() >= 1);
    }

    fn eight_node() -> InfluenceGraph {
        let e = |src, dst, weight| Edge { src, dst, weight };
        InfluenceGraph {
            concept: 0,
            nodes: (0..8).collect(),
            edges: vec![
                e(0, 1, 0.9),
                e(1, 2, 0.4),
                e(2, 0, 0.3),
                e(0, 3, 0.7),
                e(3, 4, 0.2),
                e(4, 5, 0.5),
                e(5, 6, 0.15),
                e(6, 7, 0.6),
                e(7, 0, 0.25),
                e(2, 5, 0.35),
            ],
        }
    }

    /// Empirical drop rates over 10k draws match the computed probabilities within 3 sigma.
    #[test]
    fn monte_carlo_drop_rates() {
        let g = eight_node();
        let draws = 10_000u64;
        let within = |count: u64, p: f64| {
            let rate = count as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            (rate - p).abs() <= 3.0 * sigma
        };
        // edges with node dropping off, so an edge is only removed by its own draw
        let cfg = AugmentationConfig { drop_nodes: false, ..AugmentationConfig::default() };
        let sc = centrality(&g, cfg.centrality).unwrap();
        let p_edge = probabilities_at(&g, &sc, cfg.p_f1, cfg.p_tau).edge;
        let mut edge_drops = vec![0u64; g.edges.len()];
        for stream in 0..draws {
            let (v, _) = make_views(&g, &cfg, 0, stream).unwrap();
            for (k, e) in g.edges.iter().enumerate() {
                edge_drops[k] += u64::from(!v.kept_edges.contains(e));
            }
        }
        for k in 0..g.edges.len() {
            assert!(within(edge_drops[k], p_edge[k]), "edge {k}: {} vs {}", edge_drops[k], p_edge[k]);
        }

        let cfg = AugmentationConfig { drop_edges: false, ..AugmentationConfig::default() };
        let p_node = probabilities_at(&g, &sc, cfg.p_f1, cfg.p_tau).node;
        let mut node_drops = vec![0u64; g.n()];
        for stream in 0..draws {
            let (v, _) = make_views(&g, &cfg, 0, stream).unwrap();
            for (i, d) in node_drops.iter_mut().enumerate() {
                *d += u64::from(!v.kept_nodes.contains(&i));
            }
        }
        for i in 0..g.n() {
            assert!(within(node_drops[i], p_node[i]), "node {i}: {} vs {}", node_drops[i], p_node[i]);
        }
    }

    #[test]
    fn feature_mask_rate() {
        let g = six_node();
        let cfg = AugmentationConfig { p_mask: 0.25, ..AugmentationConfig::default() };
        let (a, _) = make_views(&g, &cfg, 20_000, 0).unwrap();
        let masked = a.feature_mask.iter().filter(|k| !**k).count() as f64 / 20_000.0;
        assert!((masked - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / 20_000.0).sqrt());
    }
}
