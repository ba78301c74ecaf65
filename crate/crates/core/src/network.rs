//! Directed network storage, preferential-attachment generation and edge-list I/O.
//!
//! An edge `u -> v` means that `u`, once infected, transmits one exposure to `v`.
//! Node ids are dense integers `0..N`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Immutable directed graph in compressed sparse row form, with both the
/// out-adjacency and its transpose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    out_offsets: Vec<usize>,
    out_targets: Vec<u32>,
    in_offsets: Vec<usize>,
    in_sources: Vec<u32>,
}

impl Network {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Network {
            out_offsets: vec![0; n + 1],
            out_targets: Vec::new(),
            in_offsets: vec![0; n + 1],
            in_sources: Vec::new(),
        }
    }

    /// Builds a network from an edge list. Per-source successor order follows
    /// the order of `edges`. Errors report the 1-based position of the
    /// offending edge.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for (i, &(u, v)) in edges.iter().enumerate() {
            if u >= n {
                return Err(Error::UnknownNode(u));
            }
            if v >= n {
                return Err(Error::UnknownNode(v));
            }
            if u == v {
                return Err(Error::SelfLoop {
                    line: i + 1,
                    node: u,
                });
            }
            if !seen.insert((u, v)) {
                return Err(Error::DuplicateEdge {
                    line: i + 1,
                    src: u,
                    dst: v,
                });
            }
        }
        Ok(Self::from_validated(n, edges))
    }

    fn from_validated(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut out_deg = vec![0usize; n];
        let mut in_deg = vec![0usize; n];
        for &(u, v) in edges {
            out_deg[u] += 1;
            in_deg[v] += 1;
        }
        let out_offsets = prefix_offsets(&out_deg);
        let in_offsets = prefix_offsets(&in_deg);
        let mut out_targets = vec![0u32; edges.len()];
        let mut in_sources = vec![0u32; edges.len()];
        let mut out_fill = out_offsets.clone();
        let mut in_fill = in_offsets.clone();
        for &(u, v) in edges {
            out_targets[out_fill[u]] = v as u32;
            out_fill[u] += 1;
            in_sources[in_fill[v]] = u as u32;
            in_fill[v] += 1;
        }
        Network {
            out_offsets,
            out_targets,
            in_offsets,
            in_sources,
        }
    }

    pub fn node_count(&self) -> usize {
        self.out_offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.out_targets.len()
    }

    #[inline]
    pub fn out_neighbors(&self, u: usize) -> &[u32] {
        &self.out_targets[self.out_offsets[u]..self.out_offsets[u + 1]]
    }

    #[inline]
    pub fn in_neighbors(&self, v: usize) -> &[u32] {
        &self.in_sources[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    pub fn out_degree(&self, u: usize) -> usize {
        self.out_offsets[u + 1] - self.out_offsets[u]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    pub fn contains_node(&self, u: usize) -> bool {
        u < self.node_count()
    }

    /// All edges in source order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count())
            .flat_map(move |u| self.out_neighbors(u).iter().map(move |&v| (u, v as usize)))
    }

    /// Returns a copy padded with isolated nodes up to `n` nodes.
    pub fn with_node_count(&self, n: usize) -> Result<Self> {
        if n < self.node_count() {
            return Err(Error::InvalidConfig(format!(
                "node count {n} is smaller than the {} nodes referenced by the edge list",
                self.node_count()
            )));
        }
        let edges: Vec<_> = self.edges().collect();
        Ok(Self::from_validated(n, &edges))
    }
}

fn prefix_offsets(degrees: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(degrees.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for d in degrees {
        acc += d;
        offsets.push(acc);
    }
    offsets
}

/// Directed preferential-attachment graph.
///
/// Starts from a complete directed clique on `m + 1` nodes. Every later node
/// adds `m` distinct out-edges; each target is an endpoint (source or
/// destination, equally likely) of a uniformly chosen pre-existing edge, so a
/// node is picked with probability proportional to its total degree.
pub fn generate_preferential_attachment(n: usize, m: usize, seed: u64) -> Result<Network> {
    if m < 1 {
        return Err(Error::InvalidGenerator("m must be at least 1".into()));
    }
    if n < m + 1 {
        return Err(Error::InvalidGenerator(format!(
            "m >= nodes: need nodes >= m + 1 (nodes = {n}, m = {m})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clique = m + 1;
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(clique * m + (n - clique) * m);
    for u in 0..clique {
        for v in 0..clique {
            if u != v {
                edges.push((u, v));
            }
        }
    }
    let mut targets: Vec<usize> = Vec::with_capacity(m);
    for u in clique..n {
        let existing = edges.len();
        targets.clear();
        while targets.len() < m {
            let (a, b) = edges[rng.random_range(0..existing)];
            let t = if rng.random::<bool>() { a } else { b };
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        edges.extend(targets.iter().map(|&t| (u, t)));
    }
    Ok(Network::from_validated(n, &edges))
}

/// Parses the TSV edge format. The node count is one past the largest id seen.
pub fn parse_edges(text: &str, path: &Path) -> Result<Network> {
    let mut edges = Vec::new();
    let mut max_id: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        let mut fields = line.split('\t');
        let parse = |f: Option<&str>| -> Result<usize> {
            let s = f.ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: "expected \"src<TAB>dst\"".into(),
            })?;
            s.trim().parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("invalid node id {s:?}"),
            })
        };
        let u = parse(fields.next())?;
        let v = parse(fields.next())?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: "too many fields".into(),
            });
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let n = max_id.map_or(0, |m| m + 1);
    Network::from_edges(n, &edges)
}

pub fn load_edges(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_edges(&text, path)
}

pub fn format_edges(net: &Network) -> String {
    let mut out = String::with_capacity(net.edge_count() * 12);
    for (u, v) in net.edges() {
        let _ = writeln!(out, "{u}\t{v}");
    }
    out
}

pub fn save_edges(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_edges(net))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clique_only() {
        let g = generate_preferential_attachment(3, 2, 0).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 6);
        for u in 0..3 {
            assert_eq!(g.out_degree(u), 2);
            assert_eq!(g.in_degree(u), 2);
        }
    }

    #[test]
    fn generator_rejects_bad_params() {
        assert!(matches!(
            generate_preferential_attachment(1, 2, 0),
            Err(Error::InvalidGenerator(_))
        ));
        assert!(generate_preferential_attachment(5, 0, 0).is_err());
    }

    #[test]
    fn heavy_tailed_in_degree() {
        let g = generate_preferential_attachment(1000, 2, 7).unwrap();
        let mut deg: Vec<usize> = (0..1000).map(|v| g.in_degree(v)).collect();
        deg.sort_unstable();
        let median = deg[500];
        let max = *deg.last().unwrap();
        assert!(max > 10 * median.max(1), "max {max} median {median}");
    }

    #[test]
    fn edge_count_formula() {
        let g = generate_preferential_attachment(5000, 2, 3).unwrap();
        assert_eq!(g.edge_count(), 6 + 2 * (5000 - 3));
        assert!(g.edges().all(|(u, v)| u != v));
    }

    #[test]
    fn parse_simple() {
        let g = parse_edges("0\t1\n1\t2\n", Path::new("x")).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn parse_self_loop() {
        let err = parse_edges("0\t0\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::SelfLoop { line: 1, node: 0 }));
    }

    #[test]
    fn parse_duplicate() {
        let err = parse_edges("0\t1\n2\t1\n0\t1\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::DuplicateEdge { line: 3, .. }));
    }

    #[test]
    fn parse_malformed_reports_line() {
        let err = parse_edges("0\t1\n1 2\n", Path::new("e.tsv")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_edges("0\tx\n", Path::new("e")).is_err());
        assert!(parse_edges("0\t1\t2\n", Path::new("e")).is_err());
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let g = generate_preferential_attachment(200, 3, 11).unwrap();
        let a = dir.path().join("a.tsv");
        let b = dir.path().join("b.tsv");
        save_edges(&g, &a).unwrap();
        let g2 = load_edges(&a).unwrap();
        assert_eq!(g, g2);
        save_edges(&g2, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn with_node_count_appends_isolated() {
        let g = parse_edges("0\t1\n", Path::new("x")).unwrap();
        let g = g.with_node_count(5).unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.in_degree(4), 0);
        assert!(g.with_node_count(1).is_err());
    }

    proptest! {
        #[test]
        fn transpose_consistency(n in 4usize..120, m in 1usize..4, seed in 0u64..1000) {
            prop_assume!(n > m);
            let g = generate_preferential_attachment(n, m, seed).unwrap();
            for (u, v) in g.edges() {
                prop_assert!(g.in_neighbors(v).contains(&(u as u32)));
            }
            let in_total: usize = (0..n).map(|v| g.in_degree(v)).sum();
            prop_assert_eq!(in_total, g.edge_count());
            for v in 0..n {
                for &u in g.in_neighbors(v) {
                    prop_assert!(g.out_neighbors(u as usize).contains(&(v as u32)));
                }
            }
        }

        #[test]
        fn generator_is_deterministic(n in 4usize..200, seed in 0u64..50) {
            let a = generate_preferential_attachment(n, 2, seed).unwrap();
            let b = generate_preferential_attachment(n, 2, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
