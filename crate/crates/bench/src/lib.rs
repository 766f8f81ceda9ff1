//! Fixtures shared by the benchmarks.

use biclkt_core::config::RunConfig;
use biclkt_core::graph::{Edge, InfluenceGraph};
use biclkt_core::numerics::rng_for;
use biclkt_core::pipeline::{load_dataset, prepare, Dataset, Prepared};
use rand::Rng;

/// Random directed graph with `n` nodes and edge density 0.3.
pub fn random_graph(n: usize, seed: u64) -> InfluenceGraph {
    let mut rng = rng_for(seed, &[0xbe]);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.3) {
                edges.push(Edge { src: i, dst: j, weight: rng.gen_range(0.05..1.0) });
            }
        }
    }
    InfluenceGraph { concept: 0, nodes: (0..n).collect(), edges }
}

/// The default synthetic dataset, split, with graphs built.
pub fn planted(seed: u64) -> (RunConfig, Dataset, Prepared) {
    let cfg = RunConfig::default().with_seed(seed);
    let ds = load_dataset(&cfg).expect("synthetic data");
    let prep = prepare(&ds, &cfg).expect("prepare");
    (cfg, ds, prep)
}
