//! Text dumps of influence graphs.
//!
//! `edges.csv`: `concept_id,src_exercise,dst_exercise,weight`
//! `nodes.csv`: `concept_id,exercise_id` (isolated nodes have no edge lines)

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{Edge, InfluenceGraph};
use crate::dataio::ConceptCatalog;
use crate::error::{Error, Result};

pub fn write_edge_list<W: Write>(mut w: W, graphs: &[InfluenceGraph], catalog: &ConceptCatalog) -> std::io::Result<()> {
    writeln!(w, "concept_id,src_exercise,dst_exercise,weight")?;
    for g in graphs {
        let cid = &catalog.concepts()[g.concept];
        for e in &g.edges {
            let src = &catalog.exercises()[g.nodes[e.src]];
            let dst = &catalog.exercises()[g.nodes[e.dst]];
            // `{}` on f64 prints the shortest string that parses back exactly
            writeln!(w, "{cid},{src},{dst},{}", e.weight)?;
        }
    }
    Ok(())
}

pub fn write_node_list<W: Write>(mut w: W, graphs: &[InfluenceGraph], catalog: &ConceptCatalog) -> std::io::Result<()> {
    writeln!(w, "concept_id,exercise_id")?;
    for g in graphs {
        let cid = &catalog.concepts()[g.concept];
        for &e in &g.nodes {
            writeln!(w, "{cid},{}", catalog.exercises()[e])?;
        }
    }
    Ok(())
}

fn data_lines<R: BufRead>(r: R, what: &str) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Data(format!("{what}: {e}")))?;
        if k == 0 || line.trim().is_empty() {
            continue;
        }
        out.push(line.split(',').map(|s| s.trim().to_string()).collect());
    }
    Ok(out)
}

/// Reads graphs back from node and edge dumps, in catalog concept order.
pub fn read_graphs<R1: BufRead, R2: BufRead>(
    nodes: R1,
    edges: R2,
    catalog: &ConceptCatalog,
) -> Result<Vec<InfluenceGraph>> {
    let mut by_concept: BTreeMap<usize, (Vec<usize>, Vec<(usize, usize, f64)>)> = BTreeMap::new();
    let lookup_c = |id: &str| catalog.concept_id(id).ok_or_else(|| Error::Lookup { kind: "concept", id: id.into() });
    let lookup_e = |id: &str| catalog.exercise_id(id).ok_or_else(|| Error::Lookup { kind: "exercise", id: id.into() });
    for f in data_lines(nodes, "nodes")? {
        let [c, e] = f.as_slice() else {
            return Err(Error::Data(format!("bad node line {f:?}")));
        };
        by_concept.entry(lookup_c(c)?).or_default().0.push(lookup_e(e)?);
    }
    for f in data_lines(edges, "edges")? {
        let [c, s, d, w] = f.as_slice() else {
            return Err(Error::Data(format!("bad edge line {f:?}")));
        };
        let w: f64 = w.parse().map_err(|_| Error::Data(format!("bad weight `{w}`")))?;
        by_concept.entry(lookup_c(c)?).or_default().1.push((lookup_e(s)?, lookup_e(d)?, w));
    }
    by_concept
        .into_iter()
        .map(|(concept, (mut nodes, raw))| {
            nodes.sort_unstable();
            nodes.dedup();
            let local = |e: usize| {
                nodes
                    .binary_search(&e)
                    .map_err(|_| Error::Data(format!("edge endpoint {e} missing from node list")))
            };
            let edges = raw
                .into_iter()
                .map(|(s, d, weight)| Ok(Edge { src: local(s)?, dst: local(d)?, weight }))
                .collect::<Result<Vec<_>>>()?;
            Ok(InfluenceGraph { concept, nodes, edges })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, SyntheticConfig};
    use crate::graph::{build_all_graphs, GraphConfig};

    #[test]
    fn dump_roundtrip() {
        let d = generate_synthetic(&SyntheticConfig { n_students: 30, ..SyntheticConfig::default() }).unwrap();
        let graphs = build_all_graphs(&d.interactions, &d.catalog, &GraphConfig::default()).unwrap();
        let (mut e, mut n) = (Vec::new(), Vec::new());
        write_edge_list(&mut e, &graphs, &d.catalog).unwrap();
        write_node_list(&mut n, &graphs, &d.catalog).unwrap();
        let back = read_graphs(n.as_slice(), e.as_slice(), &d.catalog).unwrap();
        assert_eq!(back, graphs);
    }
}
