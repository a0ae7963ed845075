//! Multi-hypergraphs of queries and of query results, with fractional and
//! minimal edge covers.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::lp::{fractional_edge_cover, Rational};
use crate::query::JoinQuery;
use crate::relation::{key_of, AttrSet, Relation, Tuple};

/// Default edge-count cap for exhaustive minimal edge cover enumeration.
pub const DEFAULT_COVER_BOUND: usize = 20;

pub type EdgeSet = BTreeSet<usize>;

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Edge {
    pub label: String,
    pub nodes: BTreeSet<usize>,
}

/// Nodes and edges are identified by their insertion index. Several edges
/// may have the same node set.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Hypergraph {
    nodes: Vec<String>,
    edges: Vec<Edge>,
}

impl Hypergraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, label: impl Into<String>) -> usize {
        self.nodes.push(label.into());
        self.nodes.len() - 1
    }

    /// Adds an edge; node ids must already exist.
    pub fn add_edge(&mut self, label: impl Into<String>, nodes: impl IntoIterator<Item = usize>) -> usize {
        let nodes: BTreeSet<usize> = nodes.into_iter().collect();
        assert!(nodes.iter().all(|&v| v < self.nodes.len()), "edge references unknown node");
        self.edges.push(Edge {
            label: label.into(),
            nodes,
        });
        self.edges.len() - 1
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_index(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == label)
    }

    /// Hypergraph over the nodes with labels in `keep`; edges are intersected
    /// with them and empty intersections dropped.
    pub fn restrict(&self, keep: &AttrSet) -> Hypergraph {
        let mut h = Hypergraph::new();
        let mut map = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if keep.contains(n) {
                map.insert(i, h.add_node(n.clone()));
            }
        }
        for e in &self.edges {
            let ns: Vec<usize> = e.nodes.iter().filter_map(|v| map.get(v).copied()).collect();
            if !ns.is_empty() {
                h.add_edge(e.label.clone(), ns);
            }
        }
        h
    }

    fn node_lists(&self) -> Vec<Vec<usize>> {
        self.edges.iter().map(|e| e.nodes.iter().copied().collect()).collect()
    }
}

/// Hypergraph with one node per attribute and one edge per atom.
pub fn query_hypergraph(q: &JoinQuery) -> Hypergraph {
    let mut h = Hypergraph::new();
    for a in q.attrs() {
        h.add_node(a);
    }
    for atom in q.atoms() {
        let ns: Vec<usize> = atom
            .schema
            .attrs()
            .iter()
            .map(|a| h.node_index(a).expect("attribute registered"))
            .collect();
        h.add_edge(atom.name.clone(), ns);
    }
    h
}

/// Hypergraph of a relation over a family of attribute sets.
#[derive(Clone, Debug)]
pub struct ResultHypergraph {
    pub graph: Hypergraph,
    /// For each node: the index of its attribute set and its projected tuple.
    pub node_tuples: Vec<(usize, Tuple)>,
    /// For each edge: the row of the relation it stands for.
    pub edge_tuples: Vec<Tuple>,
    relation: Relation,
}

impl ResultHypergraph {
    /// The relation `rel(M)` formed by the rows of the edges in `m`.
    pub fn rel_of(&self, m: &EdgeSet) -> Relation {
        self.relation
            .with_rows(m.iter().map(|&e| self.edge_tuples[e].clone()).collect())
    }

    /// Edge ids of the rows of `k`, which must be a subset of the relation.
    pub fn edges_of(&self, k: &Relation) -> Result<EdgeSet> {
        let k = k.reorder(self.relation.attrs())?;
        k.rows()
            .iter()
            .map(|t| {
                self.edge_tuples
                    .binary_search(t)
                    .map_err(|_| Error::NotACover(format!("row {t:?} is not in the relation")))
            })
            .collect()
    }
}

/// The hypergraph of `r` over `parts`: one node per distinct projection onto
/// each part, one edge per row.
pub fn result_hypergraph(r: &Relation, parts: &[AttrSet]) -> Result<ResultHypergraph> {
    let union: AttrSet = parts.iter().flatten().cloned().collect();
    if let Some(a) = r.attrs().iter().find(|a| !union.contains(*a)) {
        return Err(Error::SchemaNotCovered(a.clone()));
    }
    if let Some(a) = union.iter().find(|a| !r.schema().contains(a)) {
        return Err(Error::UnknownAttribute(a.clone()));
    }
    let mut g = Hypergraph::new();
    let mut node_tuples = Vec::new();
    let mut ids: Vec<BTreeMap<Tuple, usize>> = Vec::new();
    let mut idx_per_part = Vec::new();
    for (pi, p) in parts.iter().enumerate() {
        let idx: Vec<usize> = r
            .attrs()
            .iter()
            .enumerate()
            .filter(|(_, a)| p.contains(*a))
            .map(|(i, _)| i)
            .collect();
        let mut map = BTreeMap::new();
        for row in r.rows() {
            let k = key_of(row, &idx);
            map.entry(k.clone()).or_insert_with(|| {
                node_tuples.push((pi, k));
                g.add_node(format!("{pi}:{}", node_tuples.len() - 1))
            });
        }
        ids.push(map);
        idx_per_part.push(idx);
    }
    for (ri, row) in r.rows().iter().enumerate() {
        let ns: Vec<usize> = idx_per_part
            .iter()
            .zip(&ids)
            .map(|(idx, map)| map[&key_of(row, idx)])
            .collect();
        g.add_edge(format!("t{ri}"), ns);
    }
    Ok(ResultHypergraph {
        graph: g,
        node_tuples,
        edge_tuples: r.rows().to_vec(),
        relation: r.clone(),
    })
}

/// Optimal fractional edge cover weight and per-edge weights.
pub fn fractional_cover(h: &Hypergraph) -> Result<(Rational, Vec<Rational>)> {
    fractional_edge_cover(h.node_count(), &h.node_lists()).ok_or_else(|| {
        let lists = h.node_lists();
        let bad = (0..h.node_count())
            .find(|v| !lists.iter().any(|e| e.contains(v)))
            .expect("some node uncovered");
        Error::UncoverableNode(h.nodes()[bad].clone())
    })
}

/// ρ*(H).
pub fn fractional_edge_cover_number(h: &Hypergraph) -> Result<Rational> {
    Ok(fractional_cover(h)?.0)
}

/// True iff `m` covers every node and every edge of `m` has a node no other
/// edge of `m` covers.
pub fn is_minimal_edge_cover(h: &Hypergraph, m: &EdgeSet) -> bool {
    if m.iter().any(|&e| e >= h.edge_count()) {
        return false;
    }
    let mut deg = vec![0usize; h.node_count()];
    for &e in m {
        for &v in &h.edges[e].nodes {
            deg[v] += 1;
        }
    }
    deg.iter().all(|&d| d > 0) && m.iter().all(|&e| h.edges[e].nodes.iter().any(|&v| deg[v] == 1))
}

/// All minimal edge covers, smallest first, with the default edge bound.
pub fn all_minimal_edge_covers(h: &Hypergraph) -> Result<Vec<EdgeSet>> {
    all_minimal_edge_covers_bounded(h, DEFAULT_COVER_BOUND)
}

/// All minimal edge covers of a hypergraph with at most `bound` edges.
pub fn all_minimal_edge_covers_bounded(h: &Hypergraph, bound: usize) -> Result<Vec<EdgeSet>> {
    if h.edge_count() > bound {
        return Err(Error::TooLarge {
            what: "edge count",
            size: h.edge_count(),
            limit: bound,
        });
    }
    let lists = h.node_lists();
    // last[v]: greatest edge index containing v.
    let mut last: Vec<Option<usize>> = vec![None; h.node_count()];
    for (i, e) in lists.iter().enumerate() {
        for &v in e {
            last[v] = Some(i);
        }
    }
    if last.iter().any(Option::is_none) {
        return Ok(Vec::new());
    }
    let mut st = Search {
        lists: &lists,
        last: &last,
        deg: vec![0; h.node_count()],
        chosen: Vec::new(),
        out: Vec::new(),
    };
    st.go(0);
    let mut out = st.out;
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

struct Search<'a> {
    lists: &'a [Vec<usize>],
    last: &'a [Option<usize>],
    deg: Vec<usize>,
    chosen: Vec<usize>,
    out: Vec<EdgeSet>,
}

impl Search<'_> {
    fn has_private(&self, e: usize) -> bool {
        self.lists[e].iter().any(|&v| self.deg[v] == 1)
    }

    fn go(&mut self, i: usize) {
        if i == self.lists.len() {
            if self.deg.iter().all(|&d| d > 0) {
                self.out.push(self.chosen.iter().copied().collect());
            }
            return;
        }
        // Include edge i if every chosen edge keeps a private node.
        for &v in &self.lists[i] {
            self.deg[v] += 1;
        }
        self.chosen.push(i);
        let ok = !self.lists[i].is_empty()
            && self.chosen.iter().all(|&e| self.has_private(e));
        if ok {
            self.go(i + 1);
        }
        self.chosen.pop();
        for &v in &self.lists[i] {
            self.deg[v] -= 1;
        }
        // Exclude edge i unless it was the last chance for an uncovered node.
        let strands = self.lists[i]
            .iter()
            .any(|&v| self.deg[v] == 0 && self.last[v] == Some(i));
        if !strands {
            self.go(i + 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::rat;
    use crate::relation::{attr_set, natural_join_bruteforce};
    use proptest::prelude::*;

    fn bipartite(a: usize, b: usize) -> Hypergraph {
        let mut h = Hypergraph::new();
        for i in 0..a {
            h.add_node(format!("a{i}"));
        }
        for j in 0..b {
            h.add_node(format!("b{j}"));
        }
        for i in 0..a {
            for j in 0..b {
                h.add_edge(format!("{i}{j}"), [i, a + j]);
            }
        }
        h
    }

    fn path_result() -> Relation {
        let r1 = Relation::from_strs(
            &["A", "B"],
            &[&["a1", "b1"], &["a1", "b2"], &["a2", "b1"], &["a2", "b2"], &["a1", "b3"]],
        )
        .unwrap();
        let r2 = Relation::from_strs(
            &["B", "C"],
            &[&["b1", "c1"], &["b2", "c2"], &["b3", "c3"], &["b4", "c4"]],
        )
        .unwrap();
        let r3 = Relation::from_strs(
            &["C", "D"],
            &[&["c1", "d1"], &["c1", "d2"], &["c2", "d1"], &["c2", "d2"], &["c4", "d1"]],
        )
        .unwrap();
        natural_join_bruteforce(&[&r1, &r2, &r3])
    }

    fn path_parts() -> Vec<AttrSet> {
        vec![attr_set(&["A", "B"]), attr_set(&["B", "C"]), attr_set(&["C", "D"])]
    }

    #[test]
    fn query_hypergraphs() {
        let path = JoinQuery::from_strs(&[
            ("R1", &["A", "B"]),
            ("R2", &["B", "C"]),
            ("R3", &["C", "D"]),
        ])
        .unwrap();
        let h = query_hypergraph(&path);
        assert_eq!((h.node_count(), h.edge_count()), (4, 3));
        let single = JoinQuery::from_strs(&[("R", &["A"])]).unwrap();
        let h = query_hypergraph(&single);
        assert_eq!((h.node_count(), h.edge_count()), (1, 1));
        let tri = JoinQuery::from_strs(&[
            ("R1", &["A", "B"]),
            ("R2", &["B", "C"]),
            ("R3", &["A", "C"]),
        ])
        .unwrap();
        let h = query_hypergraph(&tri);
        assert_eq!((h.node_count(), h.edge_count()), (3, 3));
        assert_eq!(fractional_edge_cover_number(&h).unwrap(), rat(3, 2));
        assert_eq!(fractional_edge_cover_number(&query_hypergraph(&path)).unwrap(), rat(2, 1));
    }

    #[test]
    fn single_edge_number_and_uncovered() {
        let mut h = Hypergraph::new();
        let a = h.add_node("A");
        let b = h.add_node("B");
        h.add_edge("R", [a, b]);
        assert_eq!(fractional_edge_cover_number(&h).unwrap(), rat(1, 1));
        h.add_node("C");
        assert!(matches!(
            fractional_edge_cover_number(&h),
            Err(Error::UncoverableNode(c)) if c == "C"
        ));
    }

    #[test]
    fn path_result_hypergraph() {
        let q = path_result();
        let rh = result_hypergraph(&q, &path_parts()).unwrap();
        assert_eq!(rh.graph.node_count(), 10);
        assert_eq!(rh.graph.edge_count(), 8);
        let m = Relation::from_strs(
            &["A", "B", "C", "D"],
            &[
                &["a1", "b1", "c1", "d1"],
                &["a2", "b1", "c1", "d2"],
                &["a1", "b2", "c2", "d1"],
                &["a2", "b2", "c2", "d2"],
            ],
        )
        .unwrap();
        let ids = rh.edges_of(&m).unwrap();
        assert_eq!(ids.len(), 4);
        assert!(is_minimal_edge_cover(&rh.graph, &ids));
        assert_eq!(rh.rel_of(&ids), m);
        let all: EdgeSet = (0..8).collect();
        assert!(!is_minimal_edge_cover(&rh.graph, &all));
        assert!(!is_minimal_edge_cover(&rh.graph, &EdgeSet::new()));
    }

    #[test]
    fn uncovered_schema_rejected() {
        let q = path_result();
        assert!(matches!(
            result_hypergraph(&q, &[attr_set(&["A", "B"])]),
            Err(Error::SchemaNotCovered(_))
        ));
    }

    #[test]
    fn single_row_relation() {
        let r = Relation::from_strs(&["A", "B"], &[&["x", "y"]]).unwrap();
        let rh = result_hypergraph(&r, &[attr_set(&["A"]), attr_set(&["B"])]).unwrap();
        assert_eq!(rh.graph.edge_count(), 1);
        assert_eq!(rh.graph.edges()[0].nodes.len(), 2);
    }

    #[test]
    fn product_is_complete_bipartite() {
        let r = Relation::from_strs(
            &["A", "B"],
            &[&["1", "1"], &["1", "2"], &["2", "1"], &["2", "2"]],
        )
        .unwrap();
        let rh = result_hypergraph(&r, &[attr_set(&["A"]), attr_set(&["B"])]).unwrap();
        assert_eq!(rh.graph.node_count(), 4);
        let h = &rh.graph;
        for i in 0..2 {
            for j in 2..4 {
                assert!(h.edges().iter().any(|e| e.nodes == [i, j].into_iter().collect()));
            }
        }
    }

    #[test]
    fn census_two_by_n() {
        for n in 2..=6 {
            let covers = all_minimal_edge_covers(&bipartite(2, n)).unwrap();
            assert_eq!(covers.len(), (1 << n) - 2);
            assert!(covers.iter().all(|c| c.len() == n));
        }
    }

    #[test]
    fn single_edge_cover() {
        let covers = all_minimal_edge_covers(&bipartite(1, 1)).unwrap();
        assert_eq!(covers, vec![EdgeSet::from([0])]);
    }

    #[test]
    fn four_by_five_sizes() {
        let covers = all_minimal_edge_covers(&bipartite(4, 5)).unwrap();
        assert_eq!(covers.first().unwrap().len(), 5);
        assert_eq!(covers.iter().map(EdgeSet::len).max(), Some(7));
    }

    #[test]
    fn bound_enforced() {
        assert!(matches!(
            all_minimal_edge_covers_bounded(&bipartite(3, 3), 8),
            Err(Error::TooLarge { .. })
        ));
    }

    // Plain subset enumeration used as a reference.
    fn subsets_oracle(h: &Hypergraph) -> Vec<EdgeSet> {
        let m = h.edge_count();
        let mut out: Vec<EdgeSet> = (0u32..1 << m)
            .map(|mask| (0..m).filter(|i| mask >> i & 1 == 1).collect::<EdgeSet>())
            .filter(|s| is_minimal_edge_cover(h, s))
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    }

    proptest! {
        #[test]
        fn enumeration_matches_subsets(
            n in 1usize..5,
            edges in proptest::collection::vec(proptest::collection::btree_set(0usize..5, 0..4), 1..8)
        ) {
            let mut h = Hypergraph::new();
            for i in 0..n {
                h.add_node(format!("v{i}"));
            }
            for (i, e) in edges.iter().enumerate() {
                h.add_edge(format!("e{i}"), e.iter().copied().filter(|&v| v < n));
            }
            let got = all_minimal_edge_covers(&h).unwrap();
            prop_assert_eq!(&got, &subsets_oracle(&h));
            for c in &got {
                prop_assert!(is_minimal_edge_cover(&h, c));
                if let Ok(rho) = fractional_edge_cover_number(&h) {
                    prop_assert!(rho <= rat(c.len() as i64, 1));
                }
            }
        }
    }
}
