//! Multimap d-representations built from covers, constant-delay
//! enumeration of the full result, and counting on the cover.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::coverjoin::{is_cover, Cover};
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::query::JoinQuery;
use crate::relation::{key_of, AttrSet, Database, Relation, Tuple, Value};

/// A forest over attributes in which every attribute carries a key: the
/// ancestors it must be looked up by.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DTree {
    /// Attributes in emission order; ancestors always come first.
    pub attrs: Vec<String>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Key of each attribute, as indices into `attrs`, ascending.
    pub keys: Vec<Vec<usize>>,
}

impl DTree {
    pub fn index_of(&self, attr: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a == attr)
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.attrs.len()).filter(|&i| self.parent[i].is_none()).collect()
    }

    pub fn key_names(&self, i: usize) -> Vec<&str> {
        self.keys[i].iter().map(|&k| self.attrs[k].as_str()).collect()
    }

    /// Depth-first preorder, children in emission order.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.attrs.len());
        let mut stack: Vec<usize> = self.roots().into_iter().rev().collect();
        while let Some(x) = stack.pop() {
            out.push(x);
            stack.extend(self.children[x].iter().rev());
        }
        out
    }

    fn ancestors(&self, mut i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        while let Some(p) = self.parent[i] {
            out.push(p);
            i = p;
        }
        out
    }

    /// The d-tree read as a decomposition with one bag `{A} ∪ key(A)` per
    /// attribute, linked along the tree; separate trees are chained at
    /// their roots.
    pub fn as_decomposition(&self) -> Decomposition {
        use crate::decomposition::Bag;
        let bags = (0..self.attrs.len())
            .map(|i| {
                let mut s: AttrSet = self.keys[i].iter().map(|&k| self.attrs[k].clone()).collect();
                s.insert(self.attrs[i].clone());
                Bag {
                    name: self.attrs[i].clone(),
                    attrs: s,
                }
            })
            .collect();
        let mut edges: Vec<(usize, usize)> = (0..self.attrs.len())
            .filter_map(|i| self.parent[i].map(|p| (p, i)))
            .collect();
        let roots = self.roots();
        edges.extend(roots.windows(2).map(|w| (w[0], w[1])));
        Decomposition::new(bags, edges).expect("indices are valid")
    }
}

/// Derives a d-tree from a decomposition: bags are visited in preorder from
/// the root, and each bag's new attributes are emitted in name order below
/// the last emitted attribute of that bag.
pub fn derive_dtree(t: &Decomposition) -> Result<DTree> {
    let rooted = t.rooted()?;
    let mut attrs: Vec<String> = Vec::new();
    let mut parent = Vec::new();
    let mut first_bag = Vec::new();
    for &b in &rooted.preorder {
        let bag = &t.bags()[b].attrs;
        for a in bag {
            if attrs.contains(a) {
                continue;
            }
            let p = attrs.iter().rposition(|x| bag.contains(x));
            attrs.push(a.clone());
            parent.push(p);
            first_bag.push(b);
        }
    }
    let n = attrs.len();
    let mut children = vec![Vec::new(); n];
    for (i, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }
    let mut tree = DTree {
        attrs,
        parent,
        children,
        keys: vec![Vec::new(); n],
    };
    for i in 0..n {
        let bag = &t.bags()[first_bag[i]].attrs;
        let mut key: Vec<usize> = tree
            .ancestors(i)
            .into_iter()
            .filter(|&a| bag.contains(&tree.attrs[a]))
            .collect();
        key.sort_unstable();
        tree.keys[i] = key;
    }
    Ok(tree)
}

/// One multimap per attribute, from key tuples to sorted value lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultimapDRep {
    pub dtree: DTree,
    /// Indexed like `dtree.attrs`; entries sorted by key.
    pub maps: Vec<Vec<(Tuple, Vec<Value>)>>,
    /// Column order of enumerated tuples.
    pub output_attrs: Vec<String>,
}

impl MultimapDRep {
    /// The multimap of an attribute.
    pub fn map(&self, attr: &str) -> Option<&[(Tuple, Vec<Value>)]> {
        self.dtree.index_of(attr).map(|i| self.maps[i].as_slice())
    }

    /// Values stored under `key` for the attribute at index `i`.
    pub fn lookup(&self, i: usize, key: &[Value]) -> Option<&[Value]> {
        let m = &self.maps[i];
        m.binary_search_by(|(k, _)| k.as_slice().cmp(key))
            .ok()
            .map(|p| m[p].1.as_slice())
    }

    /// Total number of stored `key -> value` assignments.
    pub fn size(&self) -> usize {
        self.maps.iter().flatten().map(|(_, v)| v.len()).sum()
    }

    pub fn iter(&self) -> ResultIter<'_> {
        ResultIter::new(self)
    }

    /// Listing representation of one multimap as a relation over
    /// `key(A) ∪ {A}`.
    pub fn listing(&self, i: usize) -> Relation {
        let mut cols: Vec<&str> = self.dtree.key_names(i);
        cols.push(&self.dtree.attrs[i]);
        let rows = self.maps[i]
            .iter()
            .flat_map(|(k, vs)| {
                vs.iter().map(move |v| {
                    let mut t = k.clone();
                    t.push(v.clone());
                    t
                })
            })
            .collect();
        Relation::new(crate::relation::Schema::new(&cols).expect("distinct"), rows).expect("arity")
    }
}

impl fmt::Display for MultimapDRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in self.dtree.preorder() {
            writeln!(f, "[{}] key({})", self.dtree.attrs[i], self.dtree.key_names(i).join(","))?;
            for (k, vs) in &self.maps[i] {
                let k: Vec<&str> = k.iter().map(Value::as_str).collect();
                let vs: Vec<&str> = vs.iter().map(Value::as_str).collect();
                writeln!(f, "({}) -> {}", k.join(","), vs.join(","))?;
            }
        }
        Ok(())
    }
}

/// Inserts `π_key(A) t ↦ π_A t` for every row `t` of the cover.
pub fn cover_to_drep(k: &Cover) -> Result<MultimapDRep> {
    let dtree = derive_dtree(&k.decomposition)?;
    let rel = &k.relation;
    let cols: Vec<usize> = dtree
        .attrs
        .iter()
        .map(|a| {
            rel.schema()
                .index_of(a)
                .ok_or_else(|| Error::SchemaMismatch(format!("cover lacks attribute `{a}`")))
        })
        .collect::<Result<_>>()?;
    if cols.len() != rel.schema().len() {
        return Err(Error::SchemaMismatch("cover has attributes outside the decomposition".into()));
    }
    let mut maps: Vec<BTreeMap<Tuple, BTreeSet<Value>>> = vec![BTreeMap::new(); dtree.attrs.len()];
    for row in rel.rows() {
        for (i, m) in maps.iter_mut().enumerate() {
            let key_idx: Vec<usize> = dtree.keys[i].iter().map(|&x| cols[x]).collect();
            m.entry(key_of(row, &key_idx)).or_default().insert(row[cols[i]].clone());
        }
    }
    Ok(MultimapDRep {
        maps: maps
            .into_iter()
            .map(|m| m.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect())
            .collect(),
        dtree,
        output_attrs: rel.attrs().to_vec(),
    })
}

/// As [`cover_to_drep`], after confirming the relation is a cover.
pub fn cover_to_drep_strict(k: &Cover, q: &JoinQuery, db: &Database) -> Result<MultimapDRep> {
    let verdict = is_cover(&k.relation, q, &k.decomposition, db)?;
    if !verdict.is_cover() {
        return Err(Error::NotACover(verdict.to_string()));
    }
    cover_to_drep(k)
}

/// Nested iteration over the multimaps in d-tree preorder.
pub struct ResultIter<'a> {
    drep: &'a MultimapDRep,
    order: Vec<usize>,
    // For each level: the value list in use and the position in it.
    lists: Vec<&'a [Value]>,
    pos: Vec<usize>,
    current: Vec<Option<Value>>,
    started: bool,
    done: bool,
    probes: usize,
    max_gap: usize,
    out_cols: Vec<usize>,
}

impl<'a> ResultIter<'a> {
    fn new(drep: &'a MultimapDRep) -> Self {
        let order = drep.dtree.preorder();
        let n = order.len();
        let out_cols = drep
            .output_attrs
            .iter()
            .map(|a| drep.dtree.index_of(a).expect("output attribute in d-tree"))
            .collect();
        ResultIter {
            drep,
            order,
            lists: vec![&[]; n],
            pos: vec![0; n],
            current: vec![None; drep.dtree.attrs.len()],
            started: false,
            done: n == 0,
            probes: 0,
            max_gap: 0,
            out_cols,
        }
    }

    /// Largest number of multimap probes spent between two emissions.
    pub fn max_probes_between_emissions(&self) -> usize {
        self.max_gap
    }

    pub fn total_probes(&self) -> usize {
        self.probes
    }

    fn probe(&mut self, level: usize) -> bool {
        let a = self.order[level];
        let key: Tuple = self.drep.dtree.keys[a]
            .iter()
            .map(|&k| self.current[k].clone().expect("ancestor bound"))
            .collect();
        self.probes += 1;
        match self.drep.lookup(a, &key) {
            Some(vs) if !vs.is_empty() => {
                self.lists[level] = vs;
                self.pos[level] = 0;
                self.current[a] = Some(vs[0].clone());
                true
            }
            _ => false,
        }
    }

    // Fills levels from `level` down; on a failed probe, advances the
    // deepest level that still has values.
    fn fill_from(&mut self, mut level: usize) -> bool {
        let n = self.order.len();
        while level < n {
            if self.probe(level) {
                level += 1;
                continue;
            }
            match self.advance(level) {
                Some(l) => level = l + 1,
                None => return false,
            }
        }
        true
    }

    // Moves the deepest level above `below` with a next value forward.
    fn advance(&mut self, below: usize) -> Option<usize> {
        let mut l = below;
        while l > 0 {
            l -= 1;
            if self.pos[l] + 1 < self.lists[l].len() {
                self.pos[l] += 1;
                let a = self.order[l];
                self.current[a] = Some(self.lists[l][self.pos[l]].clone());
                return Some(l);
            }
        }
        None
    }
}

impl Iterator for ResultIter<'_> {
    type Item = Tuple;

    fn next(&mut self) -> Option<Tuple> {
        if self.done {
            return None;
        }
        let before = self.probes;
        let ok = if !self.started {
            self.started = true;
            self.fill_from(0)
        } else {
            match self.advance(self.order.len()) {
                Some(l) => self.fill_from(l + 1),
                None => false,
            }
        };
        if !ok {
            self.done = true;
            return None;
        }
        self.max_gap = self.max_gap.max(self.probes - before);
        Some(
            self.out_cols
                .iter()
                .map(|&i| self.current[i].clone().expect("bound"))
                .collect(),
        )
    }
}

/// Collects the enumerated result as a relation.
pub fn enumerate_result(drep: &MultimapDRep) -> Relation {
    let schema = crate::relation::Schema::new(&drep.output_attrs).expect("distinct attributes");
    Relation::new(schema, drep.iter().collect()).expect("arity")
}

/// Number of result tuples, computed bottom-up over the decomposition from
/// the bag projections of the cover.
pub fn count_result(k: &Cover) -> Result<u128> {
    let t = &k.decomposition;
    if k.relation.is_empty() || t.is_empty() {
        return Ok(0);
    }
    let rooted = t.rooted()?;
    let bags: Vec<Relation> = t
        .bags()
        .iter()
        .map(|b| k.relation.project_set(&b.attrs))
        .collect::<Result<_>>()?;
    let mut counts: Vec<Vec<u128>> = bags.iter().map(|r| vec![1; r.len()]).collect();
    for &x in rooted.preorder.iter().rev() {
        let Some(p) = rooted.parent[x] else { continue };
        let shared = bags[x].schema().shared_with(bags[p].schema());
        let xi = bags[x].schema().indices_of(&shared)?;
        let pi = bags[p].schema().indices_of(&shared)?;
        let mut sums: BTreeMap<Tuple, u128> = BTreeMap::new();
        for (row, c) in bags[x].rows().iter().zip(&counts[x]) {
            let s = sums.entry(key_of(row, &xi)).or_default();
            *s = s.checked_add(*c).expect("count overflow");
        }
        for (j, row) in bags[p].rows().iter().enumerate() {
            let s = sums.get(&key_of(row, &pi)).copied().unwrap_or(0);
            counts[p][j] = counts[p][j].checked_mul(s).expect("count overflow");
        }
    }
    Ok(counts[rooted.root].iter().sum())
}

/// As [`count_result`], after confirming the relation is a cover.
pub fn count_result_strict(k: &Cover, q: &JoinQuery, db: &Database) -> Result<u128> {
    let verdict = is_cover(&k.relation, q, &k.decomposition, db)?;
    if !verdict.is_cover() {
        return Err(Error::NotACover(verdict.to_string()));
    }
    count_result(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::validate_decomposition;
    use crate::relation::{attr_set, natural_join_bruteforce, Schema};

    fn four_bag_t() -> Decomposition {
        Decomposition::from_strs(
            &[("T1", &["B"]), ("T2", &["A", "B"]), ("T3", &["B", "C"]), ("T4", &["C", "D"])],
            &[("T1", "T2"), ("T1", "T3"), ("T3", "T4")],
        )
        .unwrap()
    }

    fn four_bag_cover() -> Cover {
        Cover {
            relation: Relation::from_strs(
                &["A", "B", "C", "D"],
                &[
                    &["a1", "b1", "c1", "d1"],
                    &["a2", "b1", "c1", "d1"],
                    &["a3", "b2", "c1", "d2"],
                    &["a4", "b2", "c1", "d2"],
                ],
            )
            .unwrap(),
            decomposition: four_bag_t(),
        }
    }

    fn v(xs: &[&str]) -> Vec<Value> {
        xs.iter().map(Value::new).collect()
    }

    #[test]
    fn four_bag_dtree() {
        let d = derive_dtree(&four_bag_t()).unwrap();
        assert_eq!(d.attrs, vec!["B", "A", "C", "D"]);
        assert_eq!(d.roots(), vec![0]);
        assert_eq!(d.parent, vec![None, Some(0), Some(0), Some(2)]);
        assert_eq!(d.key_names(1), vec!["B"]);
        assert_eq!(d.key_names(2), vec!["B"]);
        assert_eq!(d.key_names(3), vec!["C"]);
    }

    #[test]
    fn single_bag_dtree() {
        let t = Decomposition::from_strs(&[("T", &["A"])], &[]).unwrap();
        let d = derive_dtree(&t).unwrap();
        assert_eq!(d.attrs, vec!["A"]);
        assert!(d.keys[0].is_empty());
    }

    #[test]
    fn path_dtree_shape() {
        let t = Decomposition::from_strs(
            &[("T1", &["A", "B"]), ("T2", &["B", "C"]), ("T3", &["C", "D"])],
            &[("T1", "T2"), ("T2", "T3")],
        )
        .unwrap();
        let d = derive_dtree(&t).unwrap();
        assert_eq!(d.attrs, vec!["A", "B", "C", "D"]);
        assert_eq!(d.key_names(1), vec!["A"]);
        assert_eq!(d.key_names(2), vec!["B"]);
        assert_eq!(d.key_names(3), vec!["C"]);
        let q = crate::query::JoinQuery::from_strs(&[("R1", &["A", "B"]), ("R2", &["B", "C"]), ("R3", &["C", "D"])]).unwrap();
        assert!(validate_decomposition(&q, &d.as_decomposition()).is_valid());
    }

    #[test]
    fn four_bag_multimaps() {
        let drep = cover_to_drep(&four_bag_cover()).unwrap();
        assert_eq!(drep.map("B").unwrap(), &[(vec![], v(&["b1", "b2"]))]);
        assert_eq!(
            drep.map("A").unwrap(),
            &[(v(&["b1"]), v(&["a1", "a2"])), (v(&["b2"]), v(&["a3", "a4"]))]
        );
        assert_eq!(drep.map("C").unwrap(), &[(v(&["b1"]), v(&["c1"])), (v(&["b2"]), v(&["c1"]))]);
        assert_eq!(drep.map("D").unwrap(), &[(v(&["c1"]), v(&["d1", "d2"]))]);
        assert!(drep.size() <= 4 * 4);
    }

    #[test]
    fn four_bag_enumeration_and_count() {
        let k = four_bag_cover();
        let drep = cover_to_drep(&k).unwrap();
        let mut it = drep.iter();
        let rows: Vec<Tuple> = it.by_ref().collect();
        assert_eq!(rows.len(), 8);
        assert!(it.max_probes_between_emissions() <= 4);
        let r = enumerate_result(&drep);
        assert_eq!(r.len(), 8);
        assert_eq!(count_result(&k).unwrap(), 8);
        let b = Relation::from_strs(&["A", "B"], &[&["a1", "b1"], &["a2", "b1"], &["a3", "b2"], &["a4", "b2"]]).unwrap();
        let c = Relation::from_strs(&["B", "C"], &[&["b1", "c1"], &["b2", "c1"]]).unwrap();
        let d = Relation::from_strs(&["C", "D"], &[&["c1", "d1"], &["c1", "d2"]]).unwrap();
        assert!(r.same_set(&natural_join_bruteforce(&[&b, &c, &d])));
    }

    #[test]
    fn single_row_cover() {
        let k = Cover {
            relation: Relation::from_strs(&["A", "B"], &[&["x", "y"]]).unwrap(),
            decomposition: Decomposition::from_strs(&[("T", &["A", "B"])], &[]).unwrap(),
        };
        let drep = cover_to_drep(&k).unwrap();
        assert!(drep.maps.iter().all(|m| m.len() == 1));
        assert_eq!(enumerate_result(&drep), k.relation);
        assert_eq!(count_result(&k).unwrap(), 1);
    }

    #[test]
    fn empty_cover() {
        let k = Cover {
            relation: Relation::empty(Schema::new(&["A", "B"]).unwrap()),
            decomposition: Decomposition::from_strs(&[("T", &["A", "B"])], &[]).unwrap(),
        };
        let drep = cover_to_drep(&k).unwrap();
        assert_eq!(drep.iter().count(), 0);
        assert_eq!(count_result(&k).unwrap(), 0);
    }

    #[test]
    fn two_bag_count() {
        // Cover of the calibrated R1 ⋈ R2 restriction of the path query.
        let k = Cover {
            relation: Relation::from_strs(
                &["A", "B", "C"],
                &[&["a1", "b1", "c1"], &["a2", "b1", "c1"], &["a1", "b2", "c2"], &["a2", "b2", "c2"]],
            )
            .unwrap(),
            decomposition: Decomposition::from_strs(&[("X", &["A", "B"]), ("Y", &["B", "C"])], &[("X", "Y")]).unwrap(),
        };
        // Σ_b (#A with b)·(#C with b) = 2·1 + 2·1.
        assert_eq!(count_result(&k).unwrap(), 4);
    }

    #[test]
    fn listing_representations_join_back() {
        let k = four_bag_cover();
        let drep = cover_to_drep(&k).unwrap();
        let listings: Vec<Relation> = (0..4).map(|i| drep.listing(i)).collect();
        let refs: Vec<&Relation> = listings.iter().collect();
        let joined = natural_join_bruteforce(&refs);
        assert!(joined.same_set(&enumerate_result(&drep)));
        assert_eq!(drep.listing(3).schema().to_set(), attr_set(&["C", "D"]));
    }
}
