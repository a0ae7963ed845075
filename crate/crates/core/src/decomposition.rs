//! Decompositions, join trees, validity and width.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::hypergraph::{fractional_cover, query_hypergraph};
use crate::lp::Rational;
use crate::query::{Atom, JoinQuery};
use crate::relation::{attr_set, AttrSet, Schema};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bag {
    pub name: String,
    pub attrs: AttrSet,
}

/// A tree of attribute bags. Optional per-bag fractional edge covers map
/// relation symbols to weights; when absent, optimal ones are computed.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Decomposition {
    bags: Vec<Bag>,
    edges: Vec<(usize, usize)>,
    covers: BTreeMap<usize, BTreeMap<String, Rational>>,
}

/// Parent/child structure of a decomposition rooted at its least bag.
#[derive(Clone, Debug)]
pub struct Rooted {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Bags in depth-first preorder from the root.
    pub preorder: Vec<usize>,
}

// Shortlex key: fewer attributes first, then the sorted attribute names.
fn shortlex(b: &Bag) -> (usize, Vec<&String>) {
    (b.attrs.len(), b.attrs.iter().collect())
}

impl Decomposition {
    pub fn new(bags: Vec<Bag>, edges: Vec<(usize, usize)>) -> Result<Self> {
        for (i, b) in bags.iter().enumerate() {
            if bags[..i].iter().any(|c| c.name == b.name) {
                return Err(Error::InvalidDecomposition(format!("bag name `{}` used twice", b.name)));
            }
        }
        if let Some(&(a, b)) = edges.iter().find(|(a, b)| *a >= bags.len() || *b >= bags.len()) {
            return Err(Error::InvalidDecomposition(format!("tree edge ({a},{b}) references no bag")));
        }
        Ok(Decomposition {
            bags,
            edges,
            covers: BTreeMap::new(),
        })
    }

    /// Builds a decomposition from named bags and edges between bag names.
    pub fn from_strs(bags: &[(&str, &[&str])], edges: &[(&str, &str)]) -> Result<Self> {
        let bags: Vec<Bag> = bags
            .iter()
            .map(|(n, a)| Bag {
                name: n.to_string(),
                attrs: attr_set(a),
            })
            .collect();
        let find = |n: &str| {
            bags.iter()
                .position(|b| b.name == n)
                .ok_or_else(|| Error::InvalidDecomposition(format!("unknown bag `{n}`")))
        };
        let edges = edges
            .iter()
            .map(|(a, b)| Ok((find(a)?, find(b)?)))
            .collect::<Result<Vec<_>>>()?;
        Decomposition::new(bags, edges)
    }

    /// Attaches a user-supplied fractional edge cover to a bag.
    pub fn set_cover(&mut self, bag: usize, weights: BTreeMap<String, Rational>) {
        self.covers.insert(bag, weights);
    }

    pub fn cover_of(&self, bag: usize) -> Option<&BTreeMap<String, Rational>> {
        self.covers.get(&bag)
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn bag_index(&self, name: &str) -> Option<usize> {
        self.bags.iter().position(|b| b.name == name)
    }

    /// The attribute sets of the bags, in declaration order.
    pub fn signature(&self) -> Vec<AttrSet> {
        self.bags.iter().map(|b| b.attrs.clone()).collect()
    }

    pub fn attrs(&self) -> AttrSet {
        self.bags.iter().flat_map(|b| b.attrs.iter().cloned()).collect()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_by(|&x, &y| shortlex(&self.bags[x]).cmp(&shortlex(&self.bags[y])).then(x.cmp(&y)));
        out
    }

    /// Index of the shortlex-least bag.
    pub fn root(&self) -> Option<usize> {
        (0..self.bags.len()).min_by(|&x, &y| shortlex(&self.bags[x]).cmp(&shortlex(&self.bags[y])).then(x.cmp(&y)))
    }

    /// Why the bags and edges do not form a tree, if they do not.
    pub fn tree_problem(&self) -> Option<String> {
        let n = self.bags.len();
        if n == 0 {
            return Some("no bags".into());
        }
        if self.edges.len() != n - 1 {
            return Some(format!("{} bags but {} tree edges", n, self.edges.len()));
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(x) = queue.pop_front() {
            for y in self.neighbors(x) {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen.iter()
            .position(|s| !s)
            .map(|i| format!("bag `{}` is not connected to the tree", self.bags[i].name))
    }

    /// Rooted view; fails if the bags do not form a tree.
    pub fn rooted(&self) -> Result<Rooted> {
        if let Some(p) = self.tree_problem() {
            return Err(Error::InvalidDecomposition(p));
        }
        let n = self.bags.len();
        let root = self.root().expect("nonempty");
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut preorder = Vec::with_capacity(n);
        let mut stack = vec![(root, None)];
        while let Some((x, p)) = stack.pop() {
            parent[x] = p;
            preorder.push(x);
            let kids: Vec<usize> = self.neighbors(x).into_iter().filter(|&y| Some(y) != p).collect();
            for &k in kids.iter().rev() {
                stack.push((k, Some(x)));
            }
            children[x] = kids;
        }
        Ok(Rooted {
            root,
            parent,
            children,
            preorder,
        })
    }
}

impl fmt::Display for Decomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bags {
            let a: Vec<&str> = b.attrs.iter().map(String::as_str).collect();
            writeln!(f, "bag {} {}", b.name, a.join(","))?;
        }
        for &(a, b) in &self.edges {
            writeln!(f, "edge {} {}", self.bags[a].name, self.bags[b].name)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NotATree(String),
    UnknownAttribute { bag: String, attr: String },
    UncoveredEdge(String),
    Disconnected(String),
    CoverInfeasible { bag: String, attr: String },
    CoverNotOptimal { bag: String, weight: Rational, optimum: Rational },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotATree(m) => write!(f, "not a tree: {m}"),
            Violation::UnknownAttribute { bag, attr } => {
                write!(f, "bag `{bag}` mentions attribute `{attr}` not in the query")
            }
            Violation::UncoveredEdge(r) => write!(f, "no bag contains the schema of `{r}`"),
            Violation::Disconnected(a) => write!(f, "bags containing `{a}` are not connected"),
            Violation::CoverInfeasible { bag, attr } => {
                write!(f, "cover of bag `{bag}` gives `{attr}` weight below 1")
            }
            Violation::CoverNotOptimal { bag, weight, optimum } => {
                write!(f, "cover of bag `{bag}` has weight {weight}, optimum is {optimum}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Converts a failing report into an error listing the violations.
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
            Err(Error::InvalidDecomposition(msgs.join("; ")))
        }
    }
}

// Bags containing `attr` induce a connected subgraph of the tree.
fn connected_on(t: &Decomposition, holds: impl Fn(usize) -> bool) -> bool {
    let members: Vec<usize> = (0..t.len()).filter(|&i| holds(i)).collect();
    let Some(&start) = members.first() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        for y in t.neighbors(x) {
            if holds(y) && seen.insert(y) {
                queue.push_back(y);
            }
        }
    }
    seen.len() == members.len()
}

/// Checks tree shape, coverage, connectivity and per-bag covers.
pub fn validate_decomposition(q: &JoinQuery, t: &Decomposition) -> ValidityReport {
    let mut v = Vec::new();
    if let Some(p) = t.tree_problem() {
        v.push(Violation::NotATree(p));
    }
    let qa = q.attr_set();
    for b in t.bags() {
        for a in b.attrs.iter().filter(|a| !qa.contains(*a)) {
            v.push(Violation::UnknownAttribute {
                bag: b.name.clone(),
                attr: a.clone(),
            });
        }
    }
    for atom in q.atoms() {
        let s = atom.schema.to_set();
        if !t.bags().iter().any(|b| s.is_subset(&b.attrs)) {
            v.push(Violation::UncoveredEdge(atom.name.clone()));
        }
    }
    for a in &qa {
        if !connected_on(t, |i| t.bags()[i].attrs.contains(a)) {
            v.push(Violation::Disconnected(a.clone()));
        }
    }
    let h = query_hypergraph(q);
    for (i, b) in t.bags().iter().enumerate() {
        let Some(w) = t.cover_of(i) else { continue };
        for a in &b.attrs {
            let s: Rational = q
                .atoms()
                .iter()
                .filter(|at| at.schema.contains(a))
                .filter_map(|at| w.get(&at.name).cloned())
                .sum();
            if s < Rational::one() {
                v.push(Violation::CoverInfeasible {
                    bag: b.name.clone(),
                    attr: a.clone(),
                });
            }
        }
        if let Ok((opt, _)) = fractional_cover(&h.restrict(&b.attrs)) {
            let weight: Rational = w.values().cloned().sum();
            if weight != opt {
                v.push(Violation::CoverNotOptimal {
                    bag: b.name.clone(),
                    weight,
                    optimum: opt,
                });
            }
        }
    }
    ValidityReport { violations: v }
}

/// ρ* of the query hypergraph restricted to each bag.
pub fn bag_widths(q: &JoinQuery, t: &Decomposition) -> Result<Vec<Rational>> {
    let h = query_hypergraph(q);
    t.bags()
        .iter()
        .map(|b| Ok(fractional_cover(&h.restrict(&b.attrs))?.0))
        .collect()
}

/// Fractional hypertree width of a valid decomposition.
pub fn width(q: &JoinQuery, t: &Decomposition) -> Result<Rational> {
    validate_decomposition(q, t).into_result()?;
    Ok(bag_widths(q, t)?
        .into_iter()
        .max()
        .unwrap_or_else(Rational::zero))
}

/// A tree over relation symbols. Edge labels are schema intersections.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct JoinTree {
    pub nodes: Vec<Atom>,
    pub edges: Vec<(usize, usize)>,
}

impl JoinTree {
    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|a| a.name == name)
    }

    pub fn label(&self, edge: usize) -> AttrSet {
        let (a, b) = self.edges[edge];
        self.nodes[a]
            .schema
            .to_set()
            .intersection(&self.nodes[b].schema.to_set())
            .cloned()
            .collect()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| (a == i).then_some(b).or((b == i).then_some(a)))
            .collect();
        out.sort_unstable();
        out
    }

    /// The join tree read as a decomposition: one bag per node, each covered
    /// by its own relation with weight 1.
    pub fn as_decomposition(&self) -> Decomposition {
        let bags = self
            .nodes
            .iter()
            .map(|a| Bag {
                name: a.name.clone(),
                attrs: a.schema.to_set(),
            })
            .collect();
        let mut d = Decomposition::new(bags, self.edges.clone()).expect("join tree indices are valid");
        for (i, a) in self.nodes.iter().enumerate() {
            d.set_cover(i, BTreeMap::from([(a.name.clone(), Rational::one())]));
        }
        d
    }

    /// Tree shape plus the path condition on shared attributes.
    pub fn is_valid(&self) -> bool {
        let d = self.as_decomposition();
        if !self.nodes.is_empty() && d.tree_problem().is_some() {
            return false;
        }
        let attrs: AttrSet = self.nodes.iter().flat_map(|a| a.schema.attrs().iter().cloned()).collect();
        attrs
            .iter()
            .all(|a| connected_on(&d, |i| self.nodes[i].schema.contains(a)))
    }
}

/// Join tree by GYO ear removal, or `NotAcyclic`.
///
/// Ears are tried in order of relation name; each ear attaches to the
/// smallest-named witness.
pub fn gyo_join_tree(q: &JoinQuery) -> Result<JoinTree> {
    let nodes: Vec<Atom> = q.atoms().to_vec();
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| nodes[a].name.cmp(&nodes[b].name));
    let sets: Vec<AttrSet> = nodes.iter().map(|a| a.schema.to_set()).collect();
    let mut alive: Vec<usize> = order.clone();
    let mut edges = Vec::new();
    while alive.len() > 1 {
        let mut found = None;
        'ears: for &e in &alive {
            let shared: AttrSet = sets[e]
                .iter()
                .filter(|a| alive.iter().any(|&o| o != e && sets[o].contains(*a)))
                .cloned()
                .collect();
            for &w in &alive {
                if w != e && shared.is_subset(&sets[w]) {
                    found = Some((e, w));
                    break 'ears;
                }
            }
        }
        let Some((e, w)) = found else {
            return Err(Error::NotAcyclic);
        };
        edges.push((w, e));
        alive.retain(|&x| x != e);
    }
    Ok(JoinTree { nodes, edges })
}

/// The decomposition corresponding to a join tree.
pub fn join_tree_to_decomposition(j: &JoinTree) -> Decomposition {
    j.as_decomposition()
}

/// Join tree whose nodes are the bags of `t`, with bag columns ordered as
/// in `attr_order`.
pub fn bags_as_join_tree(t: &Decomposition, attr_order: &[String]) -> Result<JoinTree> {
    let nodes = t
        .bags()
        .iter()
        .map(|b| {
            let cols: Vec<&String> = attr_order.iter().filter(|a| b.attrs.contains(*a)).collect();
            if cols.len() != b.attrs.len() {
                let missing = b.attrs.iter().find(|a| !attr_order.contains(a)).expect("missing attr");
                return Err(Error::UnknownAttribute(missing.clone()));
            }
            Ok(Atom {
                name: b.name.clone(),
                schema: Schema::new(&cols)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JoinTree {
        nodes,
        edges: t.edges().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::rat;

    fn path() -> JoinQuery {
        JoinQuery::from_strs(&[("R1", &["A", "B"]), ("R2", &["B", "C"]), ("R3", &["C", "D"])]).unwrap()
    }

    fn path_t() -> Decomposition {
        Decomposition::from_strs(
            &[("B1", &["A", "B"]), ("B2", &["B", "C"]), ("B3", &["C", "D"])],
            &[("B1", "B2"), ("B2", "B3")],
        )
        .unwrap()
    }

    fn bowtie() -> JoinQuery {
        JoinQuery::from_strs(&[
            ("R1", &["A", "B"]),
            ("R2", &["B", "C"]),
            ("R3", &["A", "C"]),
            ("R4", &["A", "D"]),
            ("R5", &["D", "E"]),
            ("R6", &["A", "E"]),
        ])
        .unwrap()
    }

    #[test]
    fn path_decomposition_valid_width_one() {
        assert!(validate_decomposition(&path(), &path_t()).is_valid());
        assert_eq!(width(&path(), &path_t()).unwrap(), rat(1, 1));
    }

    #[test]
    fn dropping_an_attribute_breaks_coverage() {
        let t = Decomposition::from_strs(
            &[("B1", &["A", "B"]), ("B2", &["B", "C"]), ("B3", &["C"])],
            &[("B1", "B2"), ("B2", "B3")],
        )
        .unwrap();
        let r = validate_decomposition(&path(), &t);
        assert!(r.violations.contains(&Violation::UncoveredEdge("R3".into())));
        assert!(matches!(width(&path(), &t), Err(Error::InvalidDecomposition(_))));
    }

    #[test]
    fn two_bags_miss_middle_edge() {
        let t = Decomposition::from_strs(&[("X", &["A", "B"]), ("Y", &["C", "D"])], &[("X", "Y")]).unwrap();
        let r = validate_decomposition(&path(), &t);
        assert_eq!(r.violations, vec![Violation::UncoveredEdge("R2".into())]);
    }

    #[test]
    fn disconnected_attribute_reported() {
        let t = Decomposition::from_strs(
            &[("X", &["A", "B"]), ("Y", &["C", "D"]), ("Z", &["B", "C"])],
            &[("X", "Y"), ("Y", "Z")],
        )
        .unwrap();
        let r = validate_decomposition(&path(), &t);
        assert_eq!(r.violations, vec![Violation::Disconnected("B".into())]);
    }

    #[test]
    fn not_a_tree_reported() {
        let t = Decomposition::from_strs(&[("X", &["A", "B"]), ("Y", &["B", "C", "D"])], &[]).unwrap();
        let r = validate_decomposition(&path(), &t);
        assert!(matches!(r.violations[0], Violation::NotATree(_)));
    }

    #[test]
    fn merged_bags_width_two() {
        let t = Decomposition::from_strs(&[("X", &["A", "B", "C"]), ("Y", &["C", "D"])], &[("X", "Y")]).unwrap();
        assert_eq!(width(&path(), &t).unwrap(), rat(2, 1));
    }

    #[test]
    fn bowtie_width_three_halves() {
        let t = Decomposition::from_strs(&[("B1", &["A", "B", "C"]), ("B2", &["A", "D", "E"])], &[("B1", "B2")]).unwrap();
        assert_eq!(width(&bowtie(), &t).unwrap(), rat(3, 2));
    }

    #[test]
    fn supplied_cover_checked() {
        let mut t = path_t();
        t.set_cover(0, BTreeMap::from([("R1".to_string(), rat(1, 2))]));
        t.set_cover(1, BTreeMap::from([("R2".to_string(), rat(2, 1))]));
        let r = validate_decomposition(&path(), &t);
        assert!(r.violations.iter().any(|v| matches!(v, Violation::CoverInfeasible { bag, .. } if bag == "B1")));
        assert!(r.violations.iter().any(|v| matches!(v, Violation::CoverNotOptimal { bag, .. } if bag == "B2")));
    }

    #[test]
    fn gyo_path() {
        let j = gyo_join_tree(&path()).unwrap();
        assert!(j.is_valid());
        let mut es: Vec<(String, String)> = j
            .edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (j.nodes[a].name.clone(), j.nodes[b].name.clone());
                if x < y { (x, y) } else { (y, x) }
            })
            .collect();
        es.sort();
        assert_eq!(es, vec![("R1".into(), "R2".into()), ("R2".into(), "R3".into())]);
        let d = join_tree_to_decomposition(&j);
        assert!(validate_decomposition(&path(), &d).is_valid());
        assert_eq!(width(&path(), &d).unwrap(), rat(1, 1));
    }

    #[test]
    fn gyo_triangle_cyclic() {
        let tri = JoinQuery::from_strs(&[("R1", &["A", "B"]), ("R2", &["B", "C"]), ("R3", &["A", "C"])]).unwrap();
        assert!(matches!(gyo_join_tree(&tri), Err(Error::NotAcyclic)));
    }

    #[test]
    fn gyo_single_and_product() {
        let q = JoinQuery::from_strs(&[("R", &["A"])]).unwrap();
        let j = gyo_join_tree(&q).unwrap();
        assert_eq!((j.nodes.len(), j.edges.len()), (1, 0));
        assert_eq!(join_tree_to_decomposition(&j).len(), 1);
        let q = JoinQuery::from_strs(&[("R", &["A"]), ("S", &["B"])]).unwrap();
        assert!(gyo_join_tree(&q).unwrap().is_valid());
    }

    #[test]
    fn bowtie_join_tree_decomposition() {
        let q = JoinQuery::from_strs(&[("B1", &["A", "B", "C"]), ("B2", &["A", "D", "E"])]).unwrap();
        let d = join_tree_to_decomposition(&gyo_join_tree(&q).unwrap());
        assert_eq!(d.signature(), vec![attr_set(&["A", "B", "C"]), attr_set(&["A", "D", "E"])]);
    }

    #[test]
    fn shortlex_root() {
        let t = Decomposition::from_strs(
            &[("X", &["A", "B"]), ("Y", &["B"]), ("Z", &["B", "C"]), ("W", &["C", "D"])],
            &[("Y", "X"), ("Y", "Z"), ("Z", "W")],
        )
        .unwrap();
        let r = t.rooted().unwrap();
        assert_eq!(r.root, 1);
        assert_eq!(r.preorder, vec![1, 0, 2, 3]);
        assert_eq!(r.parent[3], Some(2));
    }

    fn random_query(rng: &mut impl rand::Rng) -> JoinQuery {
        let attrs = ["A", "B", "C", "D", "E"];
        let n = rng.gen_range(1..=5);
        let atoms: Vec<(String, Vec<&str>)> = (0..n)
            .map(|i| {
                let mut s: Vec<&str> = attrs.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
                if s.is_empty() {
                    s.push(attrs[rng.gen_range(0..attrs.len())]);
                }
                (format!("R{i}"), s)
            })
            .collect();
        let refs: Vec<(&str, &[&str])> = atoms.iter().map(|(n, s)| (n.as_str(), s.as_slice())).collect();
        JoinQuery::from_strs(&refs).unwrap()
    }

    // Classical GYO: repeatedly delete attributes in one edge only and edges
    // contained in other edges.
    fn classical_gyo(q: &JoinQuery) -> bool {
        let mut es: Vec<AttrSet> = q.atoms().iter().map(|a| a.schema.to_set()).collect();
        loop {
            let mut changed = false;
            let all: Vec<String> = es.iter().flatten().cloned().collect();
            for e in es.iter_mut() {
                let before = e.len();
                e.retain(|a| all.iter().filter(|x| *x == a).count() > 1);
                changed |= e.len() != before;
            }
            for i in 0..es.len() {
                if (0..es.len()).any(|j| j != i && es[i].is_subset(&es[j]) && (es[i] != es[j] || i > j)) {
                    es.remove(i);
                    changed = true;
                    break;
                }
            }
            es.retain(|e| !e.is_empty());
            if !changed {
                return es.len() <= 1;
            }
        }
    }

    #[test]
    fn gyo_agrees_with_classical_reduction() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let q = random_query(&mut rng);
            match gyo_join_tree(&q) {
                Ok(j) => {
                    assert!(classical_gyo(&q), "{q}");
                    assert!(j.is_valid());
                    let d = join_tree_to_decomposition(&j);
                    assert!(validate_decomposition(&q, &d).is_valid());
                    assert_eq!(width(&q, &d).unwrap(), rat(1, 1));
                }
                Err(_) => assert!(!classical_gyo(&q), "{q}"),
            }
        }
    }
}
