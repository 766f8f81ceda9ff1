//! Per-concept exercise influence graphs.
//!
//! Edge weights are co-correctness rates: for exercises `i`, `j` of one
//! concept, `Q[i][j] = f_c(i, j) / sum_m f_o(i, m)`, where `f_o` counts
//! students who attempted both exercises and `f_c` those who got both
//! right. The weight is directed (normalised by `i`'s row).

mod centrality;
mod dump;

use std::collections::HashMap;

use log::debug;
use rayon::prelude::*;

use crate::dataio::{ConceptCatalog, Interaction};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use centrality::{centrality, pagerank, CentralityKind, CentralityScores, PAGERANK_DAMPING};
pub use dump::{read_graphs, write_edge_list, write_node_list};

/// What a co-occurrence count counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMode {
    /// Students who attempted both exercises; correctness is the first attempt.
    #[default]
    Students,
    /// Products of per-student attempt counts (every attempt counts).
    Events,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfig {
    /// Keep edge `(i, j)` iff `Q[i][j] > edge_threshold`.
    pub edge_threshold: f64,
    pub subgraph_cap: usize,
    pub count_mode: CountMode,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            edge_threshold: 0.0,
            subgraph_cap: 20,
            count_mode: CountMode::Students,
        }
    }
}

/// Pairwise co-occurrence (`f_o`) and co-correctness (`f_c`) counts over
/// the exercises of one concept. Symmetric with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CoCounts {
    pub concept: usize,
    /// Catalog exercise indices, ascending; local index `i` refers to `exercises[i]`.
    pub exercises: Vec<usize>,
    occurrence: Vec<u64>,
    correct: Vec<u64>,
}

impl CoCounts {
    pub fn n(&self) -> usize {
        self.exercises.len()
    }

    pub fn occurrence(&self, i: usize, j: usize) -> u64 {
        self.occurrence[i * self.n() + j]
    }

    pub fn co_correct(&self, i: usize, j: usize) -> u64 {
        self.correct[i * self.n() + j]
    }

    /// `sum_m f_o(i, m)`.
    pub fn row_occurrence(&self, i: usize) -> u64 {
        let n = self.n();
        self.occurrence[i * n..(i + 1) * n].iter().sum()
    }

    /// Builds counts directly from matrices (row-major, `n x n`).
    pub fn from_parts(concept: usize, exercises: Vec<usize>, occurrence: Vec<u64>, correct: Vec<u64>) -> Result<Self> {
        let n = exercises.len();
        if occurrence.len() != n * n || correct.len() != n * n {
            return Err(Error::dim("CoCounts::from_parts", (n, n), (occurrence.len(), correct.len())));
        }
        Ok(CoCounts {
            concept,
            exercises,
            occurrence,
            correct,
        })
    }
}

/// Per-student attempt summary for one exercise.
#[derive(Debug, Clone, Copy)]
struct Attempts {
    first_correct: bool,
    attempts: u64,
    corrects: u64,
}

/// Interactions grouped per student, each as exercise -> attempt summary.
struct Histories(Vec<HashMap<usize, Attempts>>);

impl Histories {
    fn new(interactions: &[Interaction]) -> Self {
        let mut ordered: Vec<&Interaction> = interactions.iter().collect();
        ordered.sort_by_key(|i| (i.student, i.order));
        let mut out: Vec<HashMap<usize, Attempts>> = Vec::new();
        let mut last = None;
        for it in ordered {
            if last != Some(it.student) {
                out.push(HashMap::new());
                last = Some(it.student);
            }
            let h = out.last_mut().expect("pushed");
            let entry = h.entry(it.exercise).or_insert(Attempts {
                first_correct: it.correct,
                attempts: 0,
                corrects: 0,
            });
            entry.attempts += 1;
            entry.corrects += u64::from(it.correct);
        }
        Histories(out)
    }

    fn count(&self, concept: usize, exercises: Vec<usize>, mode: CountMode) -> CoCounts {
        let n = exercises.len();
        let local: HashMap<usize, usize> = exercises.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut occurrence = vec![0u64; n * n];
        let mut correct = vec![0u64; n * n];
        let mut seen: Vec<(usize, Attempts)> = Vec::new();
        for h in &self.0 {
            seen.clear();
            seen.extend(h.iter().filter_map(|(e, a)| local.get(e).map(|&i| (i, *a))));
            for (x, &(i, ai)) in seen.iter().enumerate() {
                for &(j, aj) in &seen[x + 1..] {
                    let (o, c) = match mode {
                        CountMode::Students => (1, u64::from(ai.first_correct && aj.first_correct)),
                        CountMode::Events => (ai.attempts * aj.attempts, ai.corrects * aj.corrects),
                    };
                    occurrence[i * n + j] += o;
                    occurrence[j * n + i] += o;
                    correct[i * n + j] += c;
                    correct[j * n + i] += c;
                }
            }
        }
        CoCounts {
            concept,
            exercises,
            occurrence,
            correct,
        }
    }
}

fn concept_exercises(catalog: &ConceptCatalog, concept: usize) -> Result<Vec<usize>> {
    if concept >= catalog.n_concepts() {
        return Err(Error::Lookup {
            kind: "concept",
            id: concept.to_string(),
        });
    }
    Ok(catalog.exercises_of(concept))
}

/// Counts co-occurrence and co-correctness over the exercises of `concept`.
pub fn count_cooccurrences(
    interactions: &[Interaction],
    catalog: &ConceptCatalog,
    concept: usize,
    mode: CountMode,
) -> Result<CoCounts> {
    if interactions.is_empty() {
        return Err(Error::EmptyDataset("no interactions to count".into()));
    }
    let exercises = concept_exercises(catalog, concept)?;
    Ok(Histories::new(interactions).count(concept, exercises, mode))
}

/// `f_c(i, j) / sum_m f_o(i, m)`; zero when `i` never co-occurs with anything.
pub fn edge_weight(counts: &CoCounts, i: usize, j: usize) -> f64 {
    let denom = counts.row_occurrence(i);
    if denom == 0 {
        return 0.0;
    }
    counts.co_correct(i, j) as f64 / denom as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Local node indices.
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Weighted directed exercise graph of one concept. No self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceGraph {
    pub concept: usize,
    /// Catalog exercise indices, ascending.
    pub nodes: Vec<usize>,
    pub edges: Vec<Edge>,
}

impl InfluenceGraph {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Dense raw adjacency with `A[i][j] = Q[i][j]` for kept edges.
    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n(), self.n());
        for e in &self.edges {
            a.set(e.src, e.dst, e.weight);
        }
        a
    }

    /// Weighted in-degree plus out-degree per node.
    pub fn weighted_degree(&self) -> Vec<f64> {
        weighted_degree(self.n(), &self.edges)
    }

    /// Undirected neighbour lists (either edge direction), sorted, without self.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        neighbours(self.n(), &self.edges)
    }
}

pub(crate) fn weighted_degree(n: usize, edges: &[Edge]) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for e in edges {
        d[e.src] += e.weight;
        d[e.dst] += e.weight;
    }
    d
}

pub(crate) fn neighbours(n: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n];
    for e in edges {
        if e.src != e.dst {
            out[e.src].push(e.dst);
            out[e.dst].push(e.src);
        }
    }
    for v in &mut out {
        v.sort_unstable();
        v.dedup();
    }
    out
}

fn graph_from_counts(counts: &CoCounts, cfg: &GraphConfig) -> InfluenceGraph {
    let n = counts.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = edge_weight(counts, i, j);
            if w > 0.0 && w > cfg.edge_threshold {
                edges.push(Edge { src: i, dst: j, weight: w });
            }
        }
    }
    let mut keep: Vec<usize> = (0..n).collect();
    if n > cfg.subgraph_cap {
        let deg = weighted_degree(n, &edges);
        // stable sort: ties stay in exercise order
        keep.sort_by(|&a, &b| deg[b].total_cmp(&deg[a]));
        keep.truncate(cfg.subgraph_cap);
        keep.sort_unstable();
        debug!("concept {} capped from {n} to {} nodes", counts.concept, keep.len());
    }
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }
    let edges = edges
        .into_iter()
        .filter(|e| remap[e.src] != usize::MAX && remap[e.dst] != usize::MAX)
        .map(|e| Edge {
            src: remap[e.src],
            dst: remap[e.dst],
            weight: e.weight,
        })
        .collect();
    InfluenceGraph {
        concept: counts.concept,
        nodes: keep.iter().map(|&i| counts.exercises[i]).collect(),
        edges,
    }
}

/// Builds the influence graph of one concept.
pub fn build_influence_graph(
    interactions: &[Interaction],
    catalog: &ConceptCatalog,
    concept: usize,
    cfg: &GraphConfig,
) -> Result<InfluenceGraph> {
    let counts = count_cooccurrences(interactions, catalog, concept, cfg.count_mode)?;
    if counts.n() == 0 {
        return Err(Error::Contract(format!("concept {concept} has no exercises")));
    }
    Ok(graph_from_counts(&counts, cfg))
}

/// Builds every concept's graph, in concept order.
pub fn build_all_graphs(
    interactions: &[Interaction],
    catalog: &ConceptCatalog,
    cfg: &GraphConfig,
) -> Result<Vec<InfluenceGraph>> {
    if interactions.is_empty() {
        return Err(Error::EmptyDataset("no interactions to count".into()));
    }
    let histories = Histories::new(interactions);
    (0..catalog.n_concepts())
        .into_par_iter()
        .map(|c| {
            let exercises = concept_exercises(catalog, c)?;
            if exercises.is_empty() {
                return Err(Error::Contract(format!("concept {c} has no exercises")));
            }
            Ok(graph_from_counts(&histories.count(c, exercises, cfg.count_mode), cfg))
        })
        .collect()
}

/// `D^-1/2 (A + I) D^-1/2` over the symmetrised adjacency `max(A, A^T)`.
pub fn normalize_adjacency(g: &InfluenceGraph) -> Matrix {
    normalized_from_edges(g.n(), &g.edges)
}

pub(crate) fn normalized_from_edges(n: usize, edges: &[Edge]) -> Matrix {
    let mut a = Matrix::identity(n);
    for e in edges {
        if e.src == e.dst {
            continue;
        }
        let w = e.weight.max(a.get(e.src, e.dst));
        a.set(e.src, e.dst, w);
        a.set(e.dst, e.src, w);
    }
    let degree: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j) / (degree[i] * degree[j]).sqrt();
            a.set(i, j, v);
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, SyntheticConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn it(student: usize, exercise: usize, correct: bool, order: i64) -> Interaction {
        Interaction {
            student,
            exercise,
            concepts: vec![0],
            correct,
            order,
        }
    }

    fn one_concept(n_ex: usize) -> ConceptCatalog {
        ConceptCatalog::new(
            (0..30).map(|s| format!("s{s:02}")).collect(),
            (0..n_ex).map(|e| format!("e{e:02}")).collect(),
            vec!["c".into()],
            vec![vec![0]; n_ex],
        )
        .unwrap()
    }

    #[test]
    fn both_correct_pair() {
        let log = vec![it(0, 0, true, 0), it(0, 1, true, 1), it(1, 0, true, 0), it(1, 1, true, 1)];
        let c = count_cooccurrences(&log, &one_concept(2), 0, CountMode::Students).unwrap();
        assert_eq!((c.occurrence(0, 1), c.co_correct(0, 1)), (2, 2));
    }

    #[test]
    fn lone_attempt_contributes_nothing() {
        let log = vec![it(0, 0, true, 0)];
        let c = count_cooccurrences(&log, &one_concept(2), 0, CountMode::Students).unwrap();
        assert_eq!(c.row_occurrence(0), 0);
        assert_eq!(edge_weight(&c, 0, 1), 0.0);
    }

    #[test]
    fn first_attempt_decides_correctness() {
        let log = vec![it(0, 0, false, 0), it(0, 0, true, 1), it(0, 1, true, 2)];
        let c = count_cooccurrences(&log, &one_concept(2), 0, CountMode::Students).unwrap();
        assert_eq!((c.occurrence(0, 1), c.co_correct(0, 1)), (1, 0));
        let e = count_cooccurrences(&log, &one_concept(2), 0, CountMode::Events).unwrap();
        assert_eq!((e.occurrence(0, 1), e.co_correct(0, 1)), (2, 1));
    }

    #[test]
    fn unknown_concept() {
        let log = vec![it(0, 0, true, 0)];
        assert!(matches!(
            count_cooccurrences(&log, &one_concept(2), 5, CountMode::Students),
            Err(Error::Lookup { .. })
        ));
    }

    #[test]
    fn weight_is_direct_ratio() {
        let n = 3;
        let mut occ = vec![0; 9];
        let mut cor = vec![0; 9];
        occ[1] = 4; // (0,1)
        occ[2] = 2; // (0,2)
        cor[1] = 3;
        let c = CoCounts::from_parts(0, vec![0, 1, 2], occ, cor).unwrap();
        assert_eq!(edge_weight(&c, 0, 1), 0.5);
        assert_eq!(edge_weight(&c, 0, 2), 0.0);
        assert_eq!(n, c.n());
    }

    /// Counts recomputed from raw per-student answer tables.
    #[test]
    fn weights_match_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let mut log = Vec::new();
        for s in 0..25 {
            let picked: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.6)).collect();
            for (k, e) in picked.into_iter().enumerate() {
                log.push(it(s, e, rng.gen_bool(0.5), k as i64));
            }
        }
        let cat = one_concept(n);
        let counts = count_cooccurrences(&log, &cat, 0, CountMode::Students).unwrap();
        let answered = |s: usize, e: usize| log.iter().find(|x| x.student == s && x.exercise == e);
        for i in 0..n {
            let denom: usize = (0..n)
                .filter(|&m| m != i)
                .map(|m| (0..25).filter(|&s| answered(s, i).is_some() && answered(s, m).is_some()).count())
                .sum();
            for j in (0..n).filter(|&j| j != i) {
                let fc = (0..25)
                    .filter(|&s| matches!((answered(s, i), answered(s, j)), (Some(a), Some(b)) if a.correct && b.correct))
                    .count();
                let expected = if denom == 0 { 0.0 } else { fc as f64 / denom as f64 };
                assert_eq!(edge_weight(&counts, i, j), expected);
            }
        }
    }

    #[test]
    fn threshold_one_is_edgeless() {
        let d = generate_synthetic(&SyntheticConfig { n_students: 20, ..SyntheticConfig::default() }).unwrap();
        let cfg = GraphConfig { edge_threshold: 1.0, ..GraphConfig::default() };
        for g in build_all_graphs(&d.interactions, &d.catalog, &cfg).unwrap() {
            assert!(g.edges.is_empty());
            assert!(g.n() >= 1);
        }
    }

    #[test]
    fn cap_keeps_top_weighted_degree() {
        let n = 30;
        let cat = one_concept(n);
        let mut log = Vec::new();
        // student s answers exercises 0..=s (all correct): low indices co-occur most
        for s in 0..30 {
            for e in 0..=s.min(n - 1) {
                log.push(it(s, e, true, e as i64));
            }
        }
        let full = build_influence_graph(&log, &cat, 0, &GraphConfig { subgraph_cap: 100, ..GraphConfig::default() }).unwrap();
        let deg = full.weighted_degree();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| deg[b].total_cmp(&deg[a]));
        let mut expected: Vec<usize> = order[..20].to_vec();
        expected.sort_unstable();
        let capped = build_influence_graph(&log, &cat, 0, &GraphConfig::default()).unwrap();
        assert_eq!(capped.n(), 20);
        assert_eq!(capped.nodes, expected);
        assert!(capped.edges.iter().all(|e| e.src < 20 && e.dst < 20 && e.src != e.dst));
    }

    #[test]
    fn normalize_single_and_pair() {
        let single = InfluenceGraph { concept: 0, nodes: vec![0], edges: vec![] };
        assert_eq!(normalize_adjacency(&single), Matrix::scalar(1.0));
        let pair = InfluenceGraph {
            concept: 0,
            nodes: vec![0, 1],
            edges: vec![Edge { src: 0, dst: 1, weight: 1.0 }],
        };
        assert_eq!(normalize_adjacency(&pair), Matrix::filled(2, 2, 0.5));
    }

    fn dense_oracle(g: &InfluenceGraph) -> Matrix {
        let a = g.adjacency();
        let n = g.n();
        let mut s = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s.set(i, j, a.get(i, j).max(a.get(j, i)) + if i == j { 1.0 } else { 0.0 });
            }
        }
        let d: Vec<f64> = (0..n).map(|i| (0..n).map(|j| s.get(i, j)).sum()).collect();
        let mut dm = Matrix::zeros(n, n);
        for i in 0..n {
            dm.set(i, i, d[i].powf(-0.5));
        }
        dm.matmul(&s).unwrap().matmul(&dm).unwrap()
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> InfluenceGraph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(p) {
                    edges.push(Edge { src: i, dst: j, weight: rng.gen_range(0.01..1.0) });
                }
            }
        }
        InfluenceGraph { concept: 0, nodes: (0..n).collect(), edges }
    }

    #[test]
    fn normalization_matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let g = random_graph(&mut rng, 8, 0.3);
            let m = normalize_adjacency(&g);
            assert!(m.max_abs_diff(&dense_oracle(&g)) < 1e-12);
            assert!(m.max_abs_diff(&m.transpose()) == 0.0);
            assert!(m.as_slice().iter().all(|&v| v >= 0.0));
            // spectral radius by power iteration
            let mut x = Matrix::filled(8, 1, 1.0);
            let mut lambda = 0.0;
            for _ in 0..500 {
                let y = m.matmul(&x).unwrap();
                lambda = y.frobenius() / x.frobenius();
                x = y.scale(1.0 / y.frobenius());
            }
            assert!(lambda <= 1.0 + 1e-9, "{lambda}");
        }
    }

    #[test]
    fn weights_bounded() {
        let d = generate_synthetic(&SyntheticConfig { n_students: 50, ..SyntheticConfig::default() }).unwrap();
        for g in build_all_graphs(&d.interactions, &d.catalog, &GraphConfig::default()).unwrap() {
            assert!(g.edges.iter().all(|e| e.weight > 0.0 && e.weight <= 1.0));
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let d = generate_synthetic(&SyntheticConfig { n_students: 40, ..SyntheticConfig::default() }).unwrap();
        let a = build_all_graphs(&d.interactions, &d.catalog, &GraphConfig::default()).unwrap();
        let mut shuffled = d.interactions.clone();
        shuffled.reverse();
        let b = build_all_graphs(&shuffled, &d.catalog, &GraphConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
