use std::fmt;
use std::str::FromStr;

use super::{weighted_degree, Edge, InfluenceGraph};
use crate::error::{Error, Result};

pub const PAGERANK_DAMPING: f64 = 0.85;
const PAGERANK_TOL: f64 = 1e-10;
const PAGERANK_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CentralityKind {
    Uniform,
    Degree,
    PageRank,
}

impl fmt::Display for CentralityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CentralityKind::Uniform => "uniform",
            CentralityKind::Degree => "degree",
            CentralityKind::PageRank => "pagerank",
        })
    }
}

impl FromStr for CentralityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(CentralityKind::Uniform),
            "degree" => Ok(CentralityKind::Degree),
            "pagerank" => Ok(CentralityKind::PageRank),
            other => Err(Error::Config(format!("unknown centrality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityScores {
    pub kind: CentralityKind,
    pub scores: Vec<f64>,
    pub damping: Option<f64>,
}

/// Node importance: uniform `1/n`, weighted in+out degree, or PageRank.
pub fn centrality(g: &InfluenceGraph, kind: CentralityKind) -> Result<CentralityScores> {
    let n = g.n();
    if n == 0 {
        return Err(Error::Contract("centrality of an empty graph".into()));
    }
    let (scores, damping) = match kind {
        CentralityKind::Uniform => (vec![1.0 / n as f64; n], None),
        CentralityKind::Degree => (weighted_degree(n, &g.edges), None),
        CentralityKind::PageRank => (pagerank(n, &g.edges, PAGERANK_DAMPING)?, Some(PAGERANK_DAMPING)),
    };
    Ok(CentralityScores { kind, scores, damping })
}

/// Weighted PageRank over directed edges `src -> dst`. Dangling mass is
/// spread uniformly. Stops when the L-infinity change drops below `1e-10`.
pub fn pagerank(n: usize, edges: &[Edge], damping: f64) -> Result<Vec<f64>> {
    let mut out_weight = vec![0.0; n];
    for e in edges {
        out_weight[e.src] += e.weight;
    }
    let uniform = 1.0 / n as f64;
    let mut x = vec![uniform; n];
    let mut next = vec![0.0; n];
    for _ in 0..PAGERANK_MAX_ITER {
        let dangling: f64 = (0..n).filter(|&i| out_weight[i] == 0.0).map(|i| x[i]).sum();
        let base = (1.0 - damping) * uniform + damping * dangling * uniform;
        next.iter_mut().for_each(|v| *v = base);
        for e in edges {
            next[e.dst] += damping * x[e.src] * e.weight / out_weight[e.src];
        }
        let delta = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if delta < PAGERANK_TOL {
            let total: f64 = x.iter().sum();
            return Ok(x.into_iter().map(|v| v / total).collect());
        }
    }
    Err(Error::NoConvergence {
        iterations: PAGERANK_MAX_ITER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> InfluenceGraph {
        InfluenceGraph {
            concept: 0,
            nodes: (0..n).collect(),
            edges: edges.iter().map(|&(src, dst, weight)| Edge { src, dst, weight }).collect(),
        }
    }

    /// Dense Google-matrix power method, fixed 1000 iterations.
    fn power_oracle(g: &InfluenceGraph, d: f64) -> Vec<f64> {
        let n = g.n();
        let a = g.adjacency();
        let mut p = vec![vec![0.0; n]; n];
        for i in 0..n {
            let out: f64 = a.row(i).iter().sum();
            for j in 0..n {
                p[i][j] = if out > 0.0 { a.get(i, j) / out } else { 1.0 / n as f64 };
            }
        }
        let mut x = vec![1.0 / n as f64; n];
        for _ in 0..1000 {
            x = (0..n)
                .map(|j| (1.0 - d) / n as f64 + d * (0..n).map(|i| x[i] * p[i][j]).sum::<f64>())
                .collect();
        }
        x
    }

    #[test]
    fn symmetric_pair() {
        let g = graph(2, &[(0, 1, 0.4), (1, 0, 0.4)]);
        let s = centrality(&g, CentralityKind::PageRank).unwrap().scores;
        assert!((s[0] - 0.5).abs() < 1e-12 && (s[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ring_is_uniform() {
        let edges: Vec<_> = (0..5).map(|i| (i, (i + 1) % 5, 0.3)).collect();
        let s = centrality(&graph(5, &edges), CentralityKind::PageRank).unwrap().scores;
        assert!(s.iter().all(|v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn star_matches_power_method() {
        let edges: Vec<_> = (1..5).flat_map(|i| [(0, i, 0.5), (i, 0, 0.25)]).collect();
        let g = graph(5, &edges);
        let s = pagerank(5, &g.edges, PAGERANK_DAMPING).unwrap();
        let o = power_oracle(&g, PAGERANK_DAMPING);
        for (a, b) in s.iter().zip(&o) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sums_to_one_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let n = rng.gen_range(2..=20);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.gen_bool(0.2) {
                        edges.push((i, j, rng.gen_range(0.05..1.0)));
                    }
                }
            }
            let g = graph(n, &edges);
            let s = pagerank(n, &g.edges, PAGERANK_DAMPING).unwrap();
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let o = power_oracle(&g, PAGERANK_DAMPING);
            assert!(s.iter().zip(&o).all(|(a, b)| (a - b).abs() < 1e-9));

            let perm: Vec<usize> = {
                let mut p: Vec<usize> = (0..n).collect();
                p.reverse();
                p
            };
            let pedges: Vec<_> = edges.iter().map(|&(a, b, w)| (perm[a], perm[b], w)).collect();
            let ps = pagerank(n, &graph(n, &pedges).edges, PAGERANK_DAMPING).unwrap();
            for i in 0..n {
                assert!((s[i] - ps[perm[i]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn degree_and_uniform() {
        let g = graph(3, &[(0, 1, 0.5), (1, 2, 0.25)]);
        assert_eq!(centrality(&g, CentralityKind::Degree).unwrap().scores, vec![0.5, 0.75, 0.25]);
        assert_eq!(centrality(&g, CentralityKind::Uniform).unwrap().scores, vec![1.0 / 3.0; 3]);
    }
}
