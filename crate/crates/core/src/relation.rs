//! Immutable set-semantics relations over string values.
//!
//! Every relation keeps its rows deduplicated and sorted lexicographically
//! in schema column order. Operators are sort based, so outputs are
//! deterministic and can be compared row by row.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A data value. Values compare byte-lexicographically.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Value(Arc<str>);

impl Value {
    pub fn new(s: impl AsRef<str>) -> Self {
        Value(Arc::from(s.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::new(s)
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value(Arc::from(s))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

pub type Attr = String;
pub type AttrSet = BTreeSet<Attr>;
pub type Tuple = Vec<Value>;

/// Builds an attribute set from string slices.
pub fn attr_set<S: AsRef<str>>(attrs: &[S]) -> AttrSet {
    attrs.iter().map(|a| a.as_ref().to_string()).collect()
}

/// Ordered list of distinct attribute names.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Schema(Vec<Attr>);

impl Schema {
    pub fn new<S: AsRef<str>>(attrs: &[S]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(attrs.len());
        for a in attrs {
            let a = a.as_ref().to_string();
            if !seen.insert(a.clone()) {
                return Err(Error::DuplicateAttribute(a));
            }
            out.push(a);
        }
        Ok(Schema(out))
    }

    pub fn attrs(&self) -> &[Attr] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, attr: &str) -> Option<usize> {
        self.0.iter().position(|a| a == attr)
    }

    pub fn contains(&self, attr: &str) -> bool {
        self.index_of(attr).is_some()
    }

    /// Column positions of `attrs`, in the order given.
    pub fn indices_of<S: AsRef<str>>(&self, attrs: &[S]) -> Result<Vec<usize>> {
        attrs
            .iter()
            .map(|a| {
                self.index_of(a.as_ref())
                    .ok_or_else(|| Error::UnknownAttribute(a.as_ref().to_string()))
            })
            .collect()
    }

    pub fn to_set(&self) -> AttrSet {
        self.0.iter().cloned().collect()
    }

    /// Attributes shared with `other`, in this schema's order.
    pub fn shared_with(&self, other: &Schema) -> Vec<Attr> {
        self.0
            .iter()
            .filter(|a| other.contains(a))
            .cloned()
            .collect()
    }

    /// This schema followed by the attributes of `other` not already present.
    pub fn union(&self, other: &Schema) -> Schema {
        let mut out = self.0.clone();
        out.extend(other.0.iter().filter(|a| !self.contains(a)).cloned());
        Schema(out)
    }
}

impl fmt::Debug for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.0.join(","))
    }
}

/// A finite set of tuples over a schema.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Relation {
    schema: Schema,
    rows: Vec<Tuple>,
}

impl Relation {
    /// Builds a relation, deduplicating and sorting the rows.
    pub fn new(schema: Schema, mut rows: Vec<Tuple>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != schema.len()) {
            return Err(Error::ArityMismatch {
                expected: schema.len(),
                got: bad.len(),
            });
        }
        rows.sort_unstable();
        rows.dedup();
        Ok(Relation { schema, rows })
    }

    pub fn empty(schema: Schema) -> Self {
        Relation {
            schema,
            rows: Vec::new(),
        }
    }

    /// Convenience constructor from string literals.
    pub fn from_strs<S: AsRef<str>>(attrs: &[S], rows: &[&[&str]]) -> Result<Self> {
        let schema = Schema::new(attrs)?;
        let rows = rows
            .iter()
            .map(|r| r.iter().map(Value::new).collect())
            .collect();
        Relation::new(schema, rows)
    }

    // Rows already sorted and deduplicated.
    pub(crate) fn from_sorted(schema: Schema, rows: Vec<Tuple>) -> Self {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        Relation { schema, rows }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn attrs(&self) -> &[Attr] {
        self.schema.attrs()
    }

    pub fn rows(&self) -> &[Tuple] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Tuple> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, row: &[Value]) -> bool {
        self.rows
            .binary_search_by(|r| r.as_slice().cmp(row))
            .is_ok()
    }

    /// Duplicate-free projection onto `attrs`, with columns in the given order.
    pub fn project<S: AsRef<str>>(&self, attrs: &[S]) -> Result<Relation> {
        let idx = self.schema.indices_of(attrs)?;
        let schema = Schema::new(attrs)?;
        let rows = self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
            .collect();
        Relation::new(schema, rows)
    }

    /// Projection onto an attribute set, columns in this relation's order.
    pub fn project_set(&self, attrs: &AttrSet) -> Result<Relation> {
        if let Some(a) = attrs.iter().find(|a| !self.schema.contains(a)) {
            return Err(Error::UnknownAttribute(a.clone()));
        }
        let ordered: Vec<&str> = self
            .attrs()
            .iter()
            .filter(|a| attrs.contains(*a))
            .map(String::as_str)
            .collect();
        self.project(&ordered)
    }

    /// Same rows with columns permuted into `attrs` order.
    pub fn reorder<S: AsRef<str>>(&self, attrs: &[S]) -> Result<Relation> {
        if attrs.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "cannot reorder {:?} into {} columns",
                self.schema,
                attrs.len()
            )));
        }
        self.project(attrs)
    }

    /// Renames attributes; `f` must be injective on the schema.
    pub fn rename(&self, f: impl Fn(&str) -> String) -> Result<Relation> {
        let attrs: Vec<String> = self.attrs().iter().map(|a| f(a)).collect();
        Ok(Relation {
            schema: Schema::new(&attrs)?,
            rows: self.rows.clone(),
        })
    }

    /// Keeps the rows satisfying `pred`.
    pub fn filter(&self, mut pred: impl FnMut(&[Value]) -> bool) -> Relation {
        Relation {
            schema: self.schema.clone(),
            rows: self.rows.iter().filter(|r| pred(r)).cloned().collect(),
        }
    }

    /// Row-set equality irrespective of column order.
    pub fn same_set(&self, other: &Relation) -> bool {
        if self.schema.to_set() != other.schema.to_set() {
            return false;
        }
        match other.reorder(self.attrs()) {
            Ok(o) => o.rows == self.rows,
            Err(_) => false,
        }
    }

    /// Row-set inclusion irrespective of column order.
    pub fn is_subset_of(&self, other: &Relation) -> bool {
        if self.schema.to_set() != other.schema.to_set() {
            return false;
        }
        match other.reorder(self.attrs()) {
            Ok(o) => self.rows.iter().all(|r| o.contains(r)),
            Err(_) => false,
        }
    }

    /// Relation holding a subset of this relation's rows.
    pub fn with_rows(&self, rows: Vec<Tuple>) -> Relation {
        let mut rows = rows;
        rows.sort_unstable();
        rows.dedup();
        Relation {
            schema: self.schema.clone(),
            rows,
        }
    }
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:?} [{} rows]", self.schema, self.rows.len())?;
        for r in &self.rows {
            let vals: Vec<&str> = r.iter().map(Value::as_str).collect();
            writeln!(f, "  {}", vals.join(","))?;
        }
        Ok(())
    }
}

/// Extracts the values at `idx` from `row`.
pub(crate) fn key_of(row: &[Value], idx: &[usize]) -> Tuple {
    idx.iter().map(|&i| row[i].clone()).collect()
}

fn cmp_on(a: &[Value], ai: &[usize], b: &[Value], bi: &[usize]) -> Ordering {
    for (&x, &y) in ai.iter().zip(bi) {
        match a[x].cmp(&b[y]) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

/// Row indices of `r` sorted (stably) by the columns `idx`.
pub(crate) fn sorted_by_key(r: &Relation, idx: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&x, &y| cmp_on(&r.rows[x], idx, &r.rows[y], idx));
    order
}

/// Splits sorted row indices into maximal runs agreeing on `idx`.
pub(crate) fn blocks(r: &Relation, order: &[usize], idx: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len()
            && cmp_on(&r.rows[order[start]], idx, &r.rows[order[end]], idx) == Ordering::Equal
        {
            end += 1;
        }
        out.push((start, end));
        start = end;
    }
    out
}

/// Matching key blocks of two relations on their shared attributes.
///
/// Each pair holds the ranges, within the two sorted orders, of a key block
/// present on both sides.
pub(crate) struct BlockPairs {
    pub shared: Vec<Attr>,
    pub r_order: Vec<usize>,
    pub s_order: Vec<usize>,
    pub pairs: Vec<((usize, usize), (usize, usize))>,
}

pub(crate) fn block_pairs(r: &Relation, s: &Relation) -> BlockPairs {
    let shared = r.schema().shared_with(s.schema());
    let ri = r.schema().indices_of(&shared).expect("shared attrs");
    let si = s.schema().indices_of(&shared).expect("shared attrs");
    let r_order = sorted_by_key(r, &ri);
    let s_order = sorted_by_key(s, &si);
    let rb = blocks(r, &r_order, &ri);
    let sb = blocks(s, &s_order, &si);
    let (mut i, mut j) = (0, 0);
    let mut pairs = Vec::new();
    while i < rb.len() && j < sb.len() {
        let a = &r.rows[r_order[rb[i].0]];
        let b = &s.rows[s_order[sb[j].0]];
        match cmp_on(a, &ri, b, &si) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                pairs.push((rb[i], sb[j]));
                i += 1;
                j += 1;
            }
        }
    }
    BlockPairs {
        shared,
        r_order,
        s_order,
        pairs,
    }
}

/// Rows of `r` with at least one join partner in `s`.
pub fn semi_join_reduce(r: &Relation, s: &Relation) -> Relation {
    let bp = block_pairs(r, s);
    if bp.shared.is_empty() {
        return if s.is_empty() {
            Relation::empty(r.schema.clone())
        } else {
            r.clone()
        };
    }
    let mut keep: Vec<usize> = bp
        .pairs
        .iter()
        .flat_map(|((lo, hi), _)| bp.r_order[*lo..*hi].iter().copied())
        .collect();
    keep.sort_unstable();
    Relation::from_sorted(
        r.schema.clone(),
        keep.into_iter().map(|i| r.rows[i].clone()).collect(),
    )
}

/// True iff neither relation has a dangling tuple with respect to `r ⋈ s`.
pub fn is_consistent(r: &Relation, s: &Relation) -> bool {
    semi_join_reduce(r, s).len() == r.len() && semi_join_reduce(s, r).len() == s.len()
}

/// Sort-merge natural join of two relations.
pub fn natural_join(r: &Relation, s: &Relation) -> Relation {
    let schema = r.schema.union(s.schema());
    let extra: Vec<usize> = s
        .attrs()
        .iter()
        .enumerate()
        .filter(|(_, a)| !r.schema.contains(a))
        .map(|(i, _)| i)
        .collect();
    let bp = block_pairs(r, s);
    let mut rows = Vec::new();
    if bp.shared.is_empty() {
        for a in &r.rows {
            for b in &s.rows {
                let mut t = a.clone();
                t.extend(extra.iter().map(|&i| b[i].clone()));
                rows.push(t);
            }
        }
    } else {
        for ((rl, rh), (sl, sh)) in &bp.pairs {
            for &x in &bp.r_order[*rl..*rh] {
                for &y in &bp.s_order[*sl..*sh] {
                    let mut t = r.rows[x].clone();
                    t.extend(extra.iter().map(|&i| s.rows[y][i].clone()));
                    rows.push(t);
                }
            }
        }
    }
    Relation::new(schema, rows).expect("join arity")
}

/// Natural join by exhaustive pairwise nested loops. Test oracle only.
pub fn natural_join_bruteforce(rels: &[&Relation]) -> Relation {
    let Some((first, rest)) = rels.split_first() else {
        return Relation::new(Schema::default(), vec![vec![]]).expect("unit relation");
    };
    let mut acc = (*first).clone();
    for r in rest {
        let schema = acc.schema.union(r.schema());
        let shared: Vec<(usize, usize)> = r
            .attrs()
            .iter()
            .enumerate()
            .filter_map(|(j, a)| acc.schema.index_of(a).map(|i| (i, j)))
            .collect();
        let extra: Vec<usize> = (0..r.schema().len())
            .filter(|j| !shared.iter().any(|(_, k)| k == j))
            .collect();
        let mut rows = Vec::new();
        for a in &acc.rows {
            for b in &r.rows {
                if shared.iter().all(|&(i, j)| a[i] == b[j]) {
                    let mut t = a.clone();
                    t.extend(extra.iter().map(|&j| b[j].clone()));
                    rows.push(t);
                }
            }
        }
        acc = Relation::new(schema, rows).expect("join arity");
    }
    acc
}

/// Named relations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Database {
    relations: BTreeMap<String, Relation>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, rel: Relation) {
        self.relations.insert(name.into(), rel);
    }

    pub fn get(&self, name: &str) -> Result<&Relation> {
        self.relations
            .get(name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Relation)> {
        self.relations.iter()
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Sum of the relation sizes.
    pub fn size(&self) -> usize {
        self.relations.values().map(Relation::len).sum()
    }
}

impl FromIterator<(String, Relation)> for Database {
    fn from_iter<I: IntoIterator<Item = (String, Relation)>>(iter: I) -> Self {
        Database {
            relations: iter.into_iter().collect(),
        }
    }
}
