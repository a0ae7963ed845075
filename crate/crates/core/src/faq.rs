//! Functional aggregate queries over commutative semirings.
//!
//! Bound attributes are eliminated innermost-first (InsideOut). The
//! remaining product of factors is split into one bag function per bag of a
//! decomposition, and a cover of the join of their listing representations
//! is computed with a cover-join plan. Each bag contributes a value column,
//! and the product of those columns recovers the aggregate of every free
//! tuple during enumeration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::coverjoin::Cover;
use crate::decomposition::{validate_decomposition, Bag, Decomposition, JoinTree};
use crate::drep::{cover_to_drep, DTree};
use crate::error::{Error, Result};
use crate::hypergraph::{fractional_edge_cover_number, Hypergraph};
use crate::lp::Rational;
use crate::materialize::{generic_join, AcyclicInstance};
use crate::planner::{default_plan, execute_plan};
use crate::query::{Atom, JoinQuery};
use crate::relation::{key_of, AttrSet, Database, Relation, Schema, Tuple, Value};

/// A commutative semiring with a value codec.
pub trait Semiring {
    type V: Clone + PartialEq + Debug;
    const NAME: &'static str;

    fn zero() -> Self::V;
    fn one() -> Self::V;
    fn add(a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(a: &Self::V, b: &Self::V) -> Self::V;
    /// Numeric maximum; only meaningful on nonnegative values.
    fn max(a: &Self::V, b: &Self::V) -> Self::V;
    fn is_nonnegative(v: &Self::V) -> bool;
    fn parse(s: &str) -> Result<Self::V>;
    fn format(v: &Self::V) -> String;

    fn is_zero(v: &Self::V) -> bool {
        *v == Self::zero()
    }

    fn pow(v: &Self::V, n: usize) -> Self::V {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = Self::mul(&acc, v);
        }
        acc
    }
}

fn invalid(value: &str, semiring: &'static str) -> Error {
    Error::InvalidValue {
        value: value.to_string(),
        semiring,
    }
}

/// `({false,true}, ∨, ∧)`.
#[derive(Clone, Copy, Debug)]
pub struct Boolean;

impl Semiring for Boolean {
    type V = bool;
    const NAME: &'static str = "boolean";

    fn zero() -> bool {
        false
    }
    fn one() -> bool {
        true
    }
    fn add(a: &bool, b: &bool) -> bool {
        *a || *b
    }
    fn mul(a: &bool, b: &bool) -> bool {
        *a && *b
    }
    fn max(a: &bool, b: &bool) -> bool {
        *a || *b
    }
    fn is_nonnegative(_: &bool) -> bool {
        true
    }
    fn parse(s: &str) -> Result<bool> {
        match s.trim() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            _ => Err(invalid(s, Self::NAME)),
        }
    }
    fn format(v: &bool) -> String {
        if *v { "1" } else { "0" }.to_string()
    }
    fn pow(v: &bool, n: usize) -> bool {
        n == 0 || *v
    }
}

/// `(ℕ, +, ·)` on 128-bit counters. Overflow panics.
#[derive(Clone, Copy, Debug)]
pub struct Count;

impl Semiring for Count {
    type V = u128;
    const NAME: &'static str = "count";

    fn zero() -> u128 {
        0
    }
    fn one() -> u128 {
        1
    }
    fn add(a: &u128, b: &u128) -> u128 {
        a.checked_add(*b).expect("count overflow")
    }
    fn mul(a: &u128, b: &u128) -> u128 {
        a.checked_mul(*b).expect("count overflow")
    }
    fn max(a: &u128, b: &u128) -> u128 {
        *a.max(b)
    }
    fn is_nonnegative(_: &u128) -> bool {
        true
    }
    fn parse(s: &str) -> Result<u128> {
        s.trim().parse().map_err(|_| invalid(s, Self::NAME))
    }
    fn format(v: &u128) -> String {
        v.to_string()
    }
    fn pow(v: &u128, n: usize) -> u128 {
        let e = u32::try_from(n).expect("exponent fits u32");
        v.checked_pow(e).expect("count overflow")
    }
}

fn parse_rational(s: &str, name: &'static str) -> Result<Rational> {
    let t = s.trim();
    if let Ok(r) = Rational::from_str(t) {
        return Ok(r);
    }
    // Plain decimals such as `-0.25`.
    let (neg, body) = match t.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, t),
    };
    let (int, frac) = body.split_once('.').ok_or_else(|| invalid(s, name))?;
    if int.is_empty() && frac.is_empty()
        || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
    {
        return Err(invalid(s, name));
    }
    let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| invalid(s, name))?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    let r = Rational::new(digits, den);
    Ok(if neg { -r } else { r })
}

/// `(ℚ, +, ·)`.
#[derive(Clone, Copy, Debug)]
pub struct SumProduct;

impl Semiring for SumProduct {
    type V = Rational;
    const NAME: &'static str = "sumproduct-rational";

    fn zero() -> Rational {
        Rational::zero()
    }
    fn one() -> Rational {
        Rational::one()
    }
    fn add(a: &Rational, b: &Rational) -> Rational {
        a + b
    }
    fn mul(a: &Rational, b: &Rational) -> Rational {
        a * b
    }
    fn max(a: &Rational, b: &Rational) -> Rational {
        a.max(b).clone()
    }
    fn is_nonnegative(v: &Rational) -> bool {
        !v.is_negative()
    }
    fn parse(s: &str) -> Result<Rational> {
        parse_rational(s, Self::NAME)
    }
    fn format(v: &Rational) -> String {
        v.to_string()
    }
    fn pow(v: &Rational, n: usize) -> Rational {
        num_traits::pow(v.clone(), n)
    }
}

/// `(ℚ≥0, max, ·)`.
#[derive(Clone, Copy, Debug)]
pub struct MaxProduct;

impl Semiring for MaxProduct {
    type V = Rational;
    const NAME: &'static str = "maxproduct-rational";

    fn zero() -> Rational {
        Rational::zero()
    }
    fn one() -> Rational {
        Rational::one()
    }
    fn add(a: &Rational, b: &Rational) -> Rational {
        a.max(b).clone()
    }
    fn mul(a: &Rational, b: &Rational) -> Rational {
        a * b
    }
    fn max(a: &Rational, b: &Rational) -> Rational {
        a.max(b).clone()
    }
    fn is_nonnegative(v: &Rational) -> bool {
        !v.is_negative()
    }
    fn parse(s: &str) -> Result<Rational> {
        let r = parse_rational(s, Self::NAME)?;
        if r.is_negative() {
            return Err(invalid(s, Self::NAME));
        }
        Ok(r)
    }
    fn format(v: &Rational) -> String {
        v.to_string()
    }
    fn pow(v: &Rational, n: usize) -> Rational {
        num_traits::pow(v.clone(), n)
    }
}

/// Aggregate operator of a bound attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggOp {
    /// The semiring's own addition.
    Add,
    /// Numeric maximum; requires nonnegative values.
    Max,
    /// The semiring's multiplication.
    Prod,
}

impl AggOp {
    fn apply<S: Semiring>(self, a: &S::V, b: &S::V) -> S::V {
        match self {
            AggOp::Add => S::add(a, b),
            AggOp::Max => S::max(a, b),
            AggOp::Prod => S::mul(a, b),
        }
    }
}

impl FromStr for AggOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" | "sum" => Ok(AggOp::Add),
            "max" => Ok(AggOp::Max),
            "prod" | "product" => Ok(AggOp::Prod),
            _ => Err(Error::MalformedOrder(format!("unknown aggregate operator `{s}`"))),
        }
    }
}

/// Listing representation of a function: its nonzero input-output pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor<V> {
    pub name: String,
    pub schema: Schema,
    pub values: BTreeMap<Tuple, V>,
}

impl<V: Clone + PartialEq + Debug> Factor<V> {
    pub fn attrs(&self) -> AttrSet {
        self.schema.to_set()
    }

    /// The argument tuples as a relation.
    pub fn keys(&self) -> Relation {
        Relation::from_sorted(self.schema.clone(), self.values.keys().cloned().collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl<V: Clone + PartialEq + Debug> Factor<V> {
    /// Builds a factor, dropping zero entries and rejecting repeated keys.
    pub fn from_entries<S: Semiring<V = V>>(name: &str, schema: Schema, entries: Vec<(Tuple, V)>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, v) in entries {
            if k.len() != schema.len() {
                return Err(Error::ArityMismatch {
                    expected: schema.len(),
                    got: k.len(),
                });
            }
            if values.contains_key(&k) {
                let shown: Vec<&str> = k.iter().map(Value::as_str).collect();
                return Err(Error::DuplicateFactorKey(format!("({}) in `{name}`", shown.join(","))));
            }
            if !S::is_zero(&v) {
                values.insert(k, v);
            } else {
                values.remove(&k);
            }
        }
        Ok(Factor {
            name: name.to_string(),
            schema,
            values,
        })
    }

    /// Reads a factor from a relation whose last column, `__value`, holds
    /// the function value.
    pub fn from_relation<S: Semiring<V = V>>(name: &str, rel: &Relation) -> Result<Self> {
        let n = rel.schema().len();
        if n == 0 || rel.attrs()[n - 1] != VALUE_COLUMN {
            return Err(Error::SchemaMismatch(format!(
                "factor `{name}` must end with a `{VALUE_COLUMN}` column"
            )));
        }
        let schema = Schema::new(&rel.attrs()[..n - 1])?;
        let entries = rel
            .rows()
            .iter()
            .map(|r| Ok((r[..n - 1].to_vec(), S::parse(r[n - 1].as_str())?)))
            .collect::<Result<Vec<_>>>()?;
        Factor::from_entries::<S>(name, schema, entries)
    }
}

/// Column holding function values in factor CSV files.
pub const VALUE_COLUMN: &str = "__value";

/// Name of the value column of a bag in FAQ covers.
pub fn beta_column(bag: &str) -> String {
    format!("__beta_{bag}")
}

/// `φ(free) = ⊕_{bound[0]} … ⊕_{bound[k-1]} ⊗_S ψ_S`. The attribute order τ
/// is `free` followed by `bound`.
#[derive(Clone, Debug)]
pub struct FaqQuery<S: Semiring> {
    pub factors: Vec<Factor<S::V>>,
    pub free: Vec<String>,
    pub bound: Vec<(String, AggOp)>,
    /// Declared domain sizes; others default to the active domain.
    pub domains: BTreeMap<String, usize>,
}

impl<S: Semiring> FaqQuery<S> {
    pub fn new(factors: Vec<Factor<S::V>>, free: Vec<String>, bound: Vec<(String, AggOp)>) -> Self {
        FaqQuery {
            factors,
            free,
            bound,
            domains: BTreeMap::new(),
        }
    }

    /// τ: free attributes, then bound attributes.
    pub fn order(&self) -> Vec<String> {
        self.free
            .iter()
            .cloned()
            .chain(self.bound.iter().map(|(a, _)| a.clone()))
            .collect()
    }

    /// The factors as a join query over their argument attributes.
    pub fn join_query(&self) -> JoinQuery {
        JoinQuery::new(
            self.factors
                .iter()
                .map(|f| Atom {
                    name: f.name.clone(),
                    schema: f.schema.clone(),
                })
                .collect(),
        )
        .expect("factor names are distinct")
    }

    /// Distinct values of each attribute across all factors.
    pub fn active_domains(&self) -> BTreeMap<String, BTreeSet<Value>> {
        let mut out: BTreeMap<String, BTreeSet<Value>> = BTreeMap::new();
        for f in &self.factors {
            for (i, a) in f.schema.attrs().iter().enumerate() {
                let e = out.entry(a.clone()).or_default();
                e.extend(f.values.keys().map(|k| k[i].clone()));
            }
        }
        out
    }

    /// Checks names, the free/bound split and declared domains.
    pub fn validate(&self) -> Result<()> {
        let order = self.order();
        let mut seen = BTreeSet::new();
        for a in &order {
            if !seen.insert(a) {
                return Err(Error::MalformedOrder(format!("attribute `{a}` listed twice")));
            }
        }
        let mut names = BTreeSet::new();
        for f in &self.factors {
            if !names.insert(&f.name) {
                return Err(Error::DuplicateFactorKey(format!("factor name `{}` used twice", f.name)));
            }
            for a in f.schema.attrs() {
                if !seen.contains(a) {
                    return Err(Error::MalformedOrder(format!("attribute `{a}` is neither free nor bound")));
                }
            }
        }
        let used: AttrSet = self.factors.iter().flat_map(|f| f.attrs()).collect();
        if let Some(a) = order.iter().find(|a| !used.contains(*a)) {
            return Err(Error::UnknownAttribute(a.clone()));
        }
        let active = self.active_domains();
        for (a, &n) in &self.domains {
            let act = active.get(a).map_or(0, BTreeSet::len);
            if n < act {
                return Err(Error::MalformedOrder(format!(
                    "declared domain of `{a}` has {n} values but {act} occur"
                )));
            }
        }
        if self.bound.iter().any(|(_, op)| *op == AggOp::Max)
            && !self.factors.iter().all(|f| f.values.values().all(S::is_nonnegative))
        {
            let bad = self
                .factors
                .iter()
                .flat_map(|f| f.values.values())
                .find(|v| !S::is_nonnegative(v))
                .expect("some negative value");
            return Err(invalid(&S::format(bad), S::NAME));
        }
        Ok(())
    }

    fn domain_size(&self, attr: &str, active: &BTreeMap<String, BTreeSet<Value>>) -> usize {
        self.domains
            .get(attr)
            .copied()
            .unwrap_or_else(|| active.get(attr).map_or(0, BTreeSet::len))
    }
}

/// Multiplies every factor whose attributes are contained in another
/// factor's into that factor.
pub fn absorb_subset_factors<S: Semiring>(q: &FaqQuery<S>) -> FaqQuery<S> {
    let mut factors = q.factors.clone();
    loop {
        let mut hit = None;
        'find: for t in 0..factors.len() {
            for s in 0..factors.len() {
                if s != t && factors[t].attrs().is_subset(&factors[s].attrs()) {
                    hit = Some((t, s));
                    break 'find;
                }
            }
        }
        let Some((t, s)) = hit else { break };
        let small = factors.remove(t);
        let s = if s > t { s - 1 } else { s };
        factors[s] = multiply_into::<S>(&factors[s], &small);
    }
    FaqQuery {
        factors,
        free: q.free.clone(),
        bound: q.bound.clone(),
        domains: q.domains.clone(),
    }
}

// ψ_S ⊗ ψ_T for T ⊆ S, by sorting both on T and one scan.
fn multiply_into<S: Semiring>(big: &Factor<S::V>, small: &Factor<S::V>) -> Factor<S::V> {
    let idx = big
        .schema
        .indices_of(small.schema.attrs())
        .expect("subset factor");
    let mut rows: Vec<(Tuple, &Tuple, &S::V)> = big.values.iter().map(|(k, v)| (key_of(k, &idx), k, v)).collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = BTreeMap::new();
    let mut it = small.values.iter().peekable();
    for (key, k, v) in rows {
        while it.peek().is_some_and(|(sk, _)| **sk < key) {
            it.next();
        }
        if let Some((sk, sv)) = it.peek() {
            if **sk == key {
                let p = S::mul(v, sv);
                if !S::is_zero(&p) {
                    out.insert(k.clone(), p);
                }
            }
        }
    }
    Factor {
        name: big.name.clone(),
        schema: big.schema.clone(),
        values: out,
    }
}

/// `ψ_{S/T}` over `S ∩ T`: one on the projections of the nonzero entries.
pub fn indicator_projection<S: Semiring>(f: &Factor<S::V>, t: &AttrSet) -> Result<Factor<S::V>> {
    let cols: Vec<&String> = f.schema.attrs().iter().filter(|a| t.contains(*a)).collect();
    if cols.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let keys = f.keys().project(&cols)?;
    Ok(Factor {
        name: format!("{}/", f.name),
        schema: keys.schema().clone(),
        values: keys.into_rows().into_iter().map(|k| (k, S::one())).collect(),
    })
}

// A factor taking part in a product: its argument tuples and, unless it is
// an indicator, its values.
struct Part<'a, V> {
    keys: Relation,
    values: Option<&'a Factor<V>>,
}

// Joins the parts over `attrs` (in that column order) and multiplies the
// values of the non-indicator parts.
fn join_product<S: Semiring>(parts: &[Part<'_, S::V>], attrs: &[String]) -> Result<Vec<(Tuple, S::V)>> {
    let mut atoms = Vec::new();
    let mut db = Database::new();
    for (i, p) in parts.iter().enumerate() {
        let name = format!("p{i}");
        atoms.push(Atom {
            name: name.clone(),
            schema: p.keys.schema().clone(),
        });
        db.insert(name, p.keys.clone());
    }
    let q = JoinQuery::new(atoms)?;
    let covered: AttrSet = q.attr_set();
    if attrs.iter().any(|a| !covered.contains(a)) || covered.len() != attrs.len() {
        return Err(Error::SchemaMismatch(format!("product over {attrs:?} does not match its factors")));
    }
    if parts.iter().any(|p| p.keys.is_empty()) {
        return Ok(Vec::new());
    }
    let joined = generic_join(&q, &db, attrs)?;
    let lookups: Vec<(Vec<usize>, &Factor<S::V>)> = parts
        .iter()
        .filter_map(|p| p.values)
        .map(|f| (joined.schema().indices_of(f.schema.attrs()).expect("covered"), f))
        .collect();
    let mut out = Vec::with_capacity(joined.len());
    for row in joined.rows() {
        let mut v = S::one();
        for (idx, f) in &lookups {
            v = S::mul(&v, &f.values[&key_of(row, idx)]);
        }
        if !S::is_zero(&v) {
            out.push((row.clone(), v));
        }
    }
    Ok(out)
}

/// One elimination step, for inspection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EliminationStep {
    pub attr: String,
    pub op: AggOp,
    /// Factors containing the attribute.
    pub touched: Vec<String>,
    /// Attribute sets of the factors created by the step.
    pub created: Vec<AttrSet>,
}

/// Eliminates the bound attributes, innermost first.
pub fn eliminate_bound<S: Semiring>(q: &FaqQuery<S>) -> Result<FaqQuery<S>> {
    Ok(eliminate_bound_traced(q)?.0)
}

pub fn eliminate_bound_traced<S: Semiring>(q: &FaqQuery<S>) -> Result<(FaqQuery<S>, Vec<EliminationStep>)> {
    q.validate()?;
    let order = q.order();
    let pos = |a: &String| order.iter().position(|o| o == a).expect("validated");
    let active = q.active_domains();
    let mut factors = q.factors.clone();
    let mut steps = Vec::new();
    let mut fresh = 0usize;
    for (attr, op) in q.bound.iter().rev() {
        let (touched, rest): (Vec<Factor<S::V>>, Vec<Factor<S::V>>) =
            factors.into_iter().partition(|f| f.schema.contains(attr));
        let u: AttrSet = touched.iter().flat_map(|f| f.attrs()).collect();
        let mut created = Vec::new();
        let mut next: Vec<Factor<S::V>> = Vec::new();
        if *op != AggOp::Prod {
            let mut parts: Vec<Part<'_, S::V>> = touched
                .iter()
                .map(|f| Part {
                    keys: f.keys(),
                    values: Some(f),
                })
                .collect();
            for f in rest.iter().filter(|f| !f.attrs().is_disjoint(&u)) {
                parts.push(Part {
                    keys: indicator_projection::<S>(f, &u)?.keys(),
                    values: None,
                });
            }
            let mut cols: Vec<String> = u.iter().filter(|a| *a != attr).cloned().collect();
            cols.sort_by_key(pos);
            let mut full = cols.clone();
            full.push(attr.clone());
            let rows = join_product::<S>(&parts, &full)?;
            // Rows arrive sorted with `attr` last, so groups are contiguous.
            let mut values: BTreeMap<Tuple, S::V> = BTreeMap::new();
            let k = cols.len();
            let mut i = 0;
            while i < rows.len() {
                let key = &rows[i].0[..k];
                let mut acc = rows[i].1.clone();
                let mut j = i + 1;
                while j < rows.len() && rows[j].0[..k] == *key {
                    acc = op.apply::<S>(&acc, &rows[j].1);
                    j += 1;
                }
                if !S::is_zero(&acc) {
                    values.insert(key.to_vec(), acc);
                }
                i = j;
            }
            fresh += 1;
            let f = Factor {
                name: format!("elim{fresh}_{attr}"),
                schema: Schema::new(&cols)?,
                values,
            };
            created.push(f.attrs());
            next.extend(rest);
            next.push(f);
        } else {
            let d = q.domain_size(attr, &active);
            if d == 0 {
                return Err(Error::MalformedOrder(format!("`{attr}` has an empty domain")));
            }
            for f in rest {
                let values = f.values.iter().map(|(k, v)| (k.clone(), S::pow(v, d))).collect();
                next.push(Factor { values, ..f });
            }
            for f in &touched {
                let keep: Vec<usize> = (0..f.schema.len()).filter(|&i| f.schema.attrs()[i] != *attr).collect();
                let cols: Vec<&String> = keep.iter().map(|&i| &f.schema.attrs()[i]).collect();
                let mut groups: BTreeMap<Tuple, (usize, S::V)> = BTreeMap::new();
                for (k, v) in &f.values {
                    let e = groups.entry(key_of(k, &keep)).or_insert((0, S::one()));
                    e.0 += 1;
                    e.1 = S::mul(&e.1, v);
                }
                let values = groups
                    .into_iter()
                    .filter(|(_, (n, v))| *n == d && !S::is_zero(v))
                    .map(|(k, (_, v))| (k, v))
                    .collect();
                fresh += 1;
                let g = Factor {
                    name: format!("elim{fresh}_{attr}"),
                    schema: Schema::new(&cols)?,
                    values,
                };
                created.push(g.attrs());
                next.push(g);
            }
        }
        steps.push(EliminationStep {
            attr: attr.clone(),
            op: *op,
            touched: touched.iter().map(|f| f.name.clone()).collect(),
            created,
        });
        factors = next;
    }
    let residual = FaqQuery {
        factors,
        free: q.free.clone(),
        bound: Vec::new(),
        domains: q.domains.clone(),
    };
    Ok((absorb_subset_factors(&residual), steps))
}

/// FAQ-width of the order τ = free ++ bound, over the elimination
/// hypergraph sequence.
pub fn faq_width<S: Semiring>(q: &FaqQuery<S>) -> Result<Rational> {
    q.validate()?;
    let order = q.order();
    let ops: BTreeMap<&String, AggOp> = q.bound.iter().map(|(a, o)| (a, *o)).collect();
    let mut edges: Vec<AttrSet> = q.factors.iter().map(|f| f.attrs()).collect();
    let mut best = Rational::zero();
    for j in (0..order.len()).rev() {
        let a = &order[j];
        let (touched, rest): (Vec<AttrSet>, Vec<AttrSet>) = edges.into_iter().partition(|e| e.contains(a));
        let u: AttrSet = touched.iter().flatten().cloned().collect();
        let op = ops.get(a).copied();
        if op != Some(AggOp::Prod) {
            let mut h = Hypergraph::new();
            let ids: BTreeMap<&String, usize> = u.iter().map(|x| (x, h.add_node(x.clone()))).collect();
            for (i, e) in touched.iter().chain(rest.iter()).enumerate() {
                let ns: Vec<usize> = e.iter().filter_map(|x| ids.get(x).copied()).collect();
                if !ns.is_empty() {
                    h.add_edge(format!("e{i}"), ns);
                }
            }
            best = best.max(fractional_edge_cover_number(&h)?);
        }
        edges = if op == Some(AggOp::Prod) {
            touched
                .into_iter()
                .map(|mut e| {
                    e.remove(a);
                    e
                })
                .chain(rest)
                .collect()
        } else {
            let mut next = rest;
            let mut e = u;
            e.remove(a);
            next.push(e);
            next
        };
        edges.retain(|e| !e.is_empty());
    }
    Ok(best)
}

/// Bag functions of a bound-free FAQ over a decomposition.
#[derive(Clone, Debug)]
pub struct BagFunctionSet<V> {
    pub decomposition: Decomposition,
    /// For each bag, its function over the bag's attributes (columns in
    /// `columns[i]` order).
    pub columns: Vec<Vec<String>>,
    pub functions: Vec<BTreeMap<Tuple, V>>,
    /// Factor name to bag name.
    pub mapping: BTreeMap<String, String>,
}

impl<V: Clone + PartialEq + Debug> BagFunctionSet<V> {
    /// Listing representation of bag `i` with its value column.
    pub fn listing<S: Semiring<V = V>>(&self, i: usize) -> Relation {
        let mut cols = self.columns[i].clone();
        cols.push(beta_column(&self.decomposition.bags()[i].name));
        let rows = self.functions[i]
            .iter()
            .map(|(k, v)| {
                let mut t = k.clone();
                t.push(Value::new(S::format(v)));
                t
            })
            .collect();
        Relation::new(Schema::new(&cols).expect("distinct"), rows).expect("arity")
    }
}

// Shortlex-least bag containing `s`.
fn least_bag_containing(t: &Decomposition, s: &AttrSet) -> Option<usize> {
    (0..t.len())
        .filter(|&i| s.is_subset(&t.bags()[i].attrs))
        .min_by(|&x, &y| {
            let kx = (t.bags()[x].attrs.len(), t.bags()[x].attrs.iter().collect::<Vec<_>>());
            let ky = (t.bags()[y].attrs.len(), t.bags()[y].attrs.iter().collect::<Vec<_>>());
            kx.cmp(&ky).then(x.cmp(&y))
        })
}

/// Computes `β_B = ⊗_{S∩B≠∅} ψ_{S/B} ⊗ ⊗_{m(S)=B} ψ_S` for every bag, then
/// calibrates the listing representations across the tree. Without an
/// explicit mapping each factor goes to the least bag containing it.
pub fn bag_functions<S: Semiring>(
    q: &FaqQuery<S>,
    t: &Decomposition,
    mapping: Option<&BTreeMap<String, String>>,
) -> Result<BagFunctionSet<S::V>> {
    if !q.bound.is_empty() {
        return Err(Error::MalformedOrder("bag functions need a query without bound attributes".into()));
    }
    q.validate()?;
    validate_decomposition(&q.join_query(), t).into_result()?;
    let mut assign: BTreeMap<String, usize> = BTreeMap::new();
    for f in &q.factors {
        let bag = match mapping.and_then(|m| m.get(&f.name)) {
            Some(b) => t
                .bag_index(b)
                .ok_or_else(|| Error::InvalidDecomposition(format!("unknown bag `{b}`")))?,
            None => least_bag_containing(t, &f.attrs()).ok_or_else(|| Error::BadMapping(join_attrs(&f.attrs())))?,
        };
        if !f.attrs().is_subset(&t.bags()[bag].attrs) {
            return Err(Error::BadMapping(join_attrs(&f.attrs())));
        }
        assign.insert(f.name.clone(), bag);
    }
    let order = q.free.clone();
    let mut columns = Vec::new();
    let mut functions = Vec::new();
    for (i, bag) in t.bags().iter().enumerate() {
        let mut parts = Vec::new();
        for f in &q.factors {
            if assign[&f.name] == i {
                parts.push(Part {
                    keys: f.keys(),
                    values: Some(f),
                });
            } else if !f.attrs().is_disjoint(&bag.attrs) {
                parts.push(Part {
                    keys: indicator_projection::<S>(f, &bag.attrs)?.keys(),
                    values: None,
                });
            }
        }
        let cols: Vec<String> = order.iter().filter(|a| bag.attrs.contains(*a)).cloned().collect();
        let rows = join_product::<S>(&parts, &cols)?;
        columns.push(cols);
        functions.push(rows.into_iter().collect::<BTreeMap<_, _>>());
    }
    let mut set = BagFunctionSet {
        decomposition: t.clone(),
        columns,
        functions,
        mapping: assign
            .into_iter()
            .map(|(f, b)| (f, t.bags()[b].name.clone()))
            .collect(),
    };
    calibrate_bags(&mut set)?;
    Ok(set)
}

fn join_attrs(s: &AttrSet) -> String {
    s.iter().cloned().collect::<Vec<_>>().join(",")
}

// Semi-join calibration on the argument columns of the bag functions.
fn calibrate_bags<V: Clone + PartialEq + Debug>(set: &mut BagFunctionSet<V>) -> Result<()> {
    let t = &set.decomposition;
    let nodes: Vec<Atom> = t
        .bags()
        .iter()
        .zip(&set.columns)
        .map(|(b, c)| {
            Ok(Atom {
                name: b.name.clone(),
                schema: Schema::new(c)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut db = Database::new();
    for (a, f) in nodes.iter().zip(&set.functions) {
        db.insert(a.name.clone(), Relation::from_sorted(a.schema.clone(), f.keys().cloned().collect()));
    }
    let mut inst = AcyclicInstance {
        query: JoinQuery::new(nodes.clone())?,
        join_tree: JoinTree {
            nodes,
            edges: t.edges().to_vec(),
        },
        database: db,
        decomposition: t.clone(),
        attr_order: Vec::new(),
    };
    inst.calibrate()?;
    for (i, f) in set.functions.iter_mut().enumerate() {
        let keep = inst.relation(i);
        f.retain(|k, _| keep.contains(k));
    }
    Ok(())
}

/// A cover over the extended decomposition, whose bags each carry their
/// bag function's value column.
#[derive(Clone, Debug)]
pub struct FaqCover {
    pub cover: Cover,
    pub free: Vec<String>,
    pub value_columns: Vec<String>,
}

/// Eliminates bound attributes, builds bag functions over `t` and computes
/// a cover of their join over the extended decomposition.
pub fn faq_cover<S: Semiring>(
    q: &FaqQuery<S>,
    t: &Decomposition,
    mapping: Option<&BTreeMap<String, String>>,
) -> Result<FaqCover> {
    let residual = eliminate_bound(q)?;
    let set = bag_functions(&residual, t, mapping)?;
    cover_of_bag_functions::<S>(&set, &q.free)
}

/// Cover of the join of the listing representations of bag functions.
pub fn cover_of_bag_functions<S: Semiring>(set: &BagFunctionSet<S::V>, free: &[String]) -> Result<FaqCover> {
    let t = &set.decomposition;
    let ext_bags: Vec<Bag> = t
        .bags()
        .iter()
        .map(|b| {
            let mut attrs = b.attrs.clone();
            attrs.insert(beta_column(&b.name));
            Bag {
                name: b.name.clone(),
                attrs,
            }
        })
        .collect();
    let ext = Decomposition::new(ext_bags, t.edges().to_vec())?;
    let value_columns: Vec<String> = t.bags().iter().map(|b| beta_column(&b.name)).collect();
    let mut nodes = Vec::new();
    let mut db = Database::new();
    for i in 0..t.len() {
        let rel = set.listing::<S>(i);
        nodes.push(Atom {
            name: t.bags()[i].name.clone(),
            schema: rel.schema().clone(),
        });
        db.insert(t.bags()[i].name.clone(), rel);
    }
    let mut attr_order: Vec<String> = free.to_vec();
    attr_order.extend(value_columns.iter().cloned());
    let inst = AcyclicInstance {
        query: JoinQuery::new(nodes.clone())?,
        join_tree: JoinTree {
            nodes,
            edges: t.edges().to_vec(),
        },
        database: db,
        decomposition: ext,
        attr_order,
    };
    let cover = execute_plan(&default_plan(&inst)?, &inst)?;
    Ok(FaqCover {
        cover,
        free: free.to_vec(),
        value_columns,
    })
}

/// Enumerates `(free tuple, value)` pairs from an FAQ cover. A free tuple's
/// value is the product of its bag value columns.
pub fn faq_enumerate<S: Semiring>(k: &FaqCover) -> Result<Vec<(Tuple, S::V)>> {
    let drep = cover_to_drep(&k.cover)?;
    let cols = |names: &[String]| -> Vec<usize> {
        names
            .iter()
            .map(|a| drep.output_attrs.iter().position(|o| o == a).expect("cover column"))
            .collect()
    };
    let free_idx = cols(&k.free);
    let val_idx = cols(&k.value_columns);
    let mut out = Vec::new();
    for row in drep.iter() {
        let mut v = S::one();
        for &i in &val_idx {
            v = S::mul(&v, &S::parse(row[i].as_str())?);
        }
        out.push((key_of(&row, &free_idx), v));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// The d-tree used to enumerate an FAQ cover.
pub fn faq_dtree(k: &FaqCover) -> Result<DTree> {
    crate::drep::derive_dtree(&k.cover.decomposition)
}

/// Direct evaluation of the query by nested loops over the domains. Bound
/// attributes with a declared domain larger than the active one range over
/// extra values absent from every factor. Test oracle only.
pub fn faq_bruteforce<S: Semiring>(q: &FaqQuery<S>) -> Result<Vec<(Tuple, S::V)>> {
    q.validate()?;
    let active = q.active_domains();
    let order = q.order();
    let domains: Vec<Vec<Value>> = order
        .iter()
        .map(|a| {
            let mut d: Vec<Value> = active.get(a).map(|s| s.iter().cloned().collect()).unwrap_or_default();
            let want = q.domain_size(a, &active);
            let mut i = 0;
            while d.len() < want {
                d.push(Value::new(format!("\u{0}phantom{i}")));
                i += 1;
            }
            d
        })
        .collect();
    let idx: Vec<Vec<usize>> = q
        .factors
        .iter()
        .map(|f| f.schema.attrs().iter().map(|a| order.iter().position(|o| o == a).expect("validated")).collect())
        .collect();
    let ops: Vec<AggOp> = q.bound.iter().map(|(_, o)| *o).collect();
    let f = q.free.len();
    let mut out = Vec::new();
    let mut cur: Vec<Value> = Vec::with_capacity(order.len());
    free_loop::<S>(q, &domains, &idx, &ops, f, &mut cur, &mut out);
    Ok(out)
}

fn free_loop<S: Semiring>(
    q: &FaqQuery<S>,
    domains: &[Vec<Value>],
    idx: &[Vec<usize>],
    ops: &[AggOp],
    f: usize,
    cur: &mut Vec<Value>,
    out: &mut Vec<(Tuple, S::V)>,
) {
    if cur.len() == f {
        let v = bound_loop::<S>(q, domains, idx, ops, f, cur);
        if !S::is_zero(&v) {
            out.push((cur.clone(), v));
        }
        return;
    }
    for x in &domains[cur.len()] {
        cur.push(x.clone());
        free_loop::<S>(q, domains, idx, ops, f, cur, out);
        cur.pop();
    }
}

fn bound_loop<S: Semiring>(
    q: &FaqQuery<S>,
    domains: &[Vec<Value>],
    idx: &[Vec<usize>],
    ops: &[AggOp],
    f: usize,
    cur: &mut Vec<Value>,
) -> S::V {
    if cur.len() == domains.len() {
        let mut v = S::one();
        for (fac, ix) in q.factors.iter().zip(idx) {
            match fac.values.get(&key_of(cur, ix)) {
                Some(x) => v = S::mul(&v, x),
                None => return S::zero(),
            }
        }
        return v;
    }
    let op = ops[cur.len() - f];
    let mut acc: Option<S::V> = None;
    for x in &domains[cur.len()] {
        cur.push(x.clone());
        let v = bound_loop::<S>(q, domains, idx, ops, f, cur);
        cur.pop();
        acc = Some(match acc {
            None => v,
            Some(a) => op.apply::<S>(&a, &v),
        });
    }
    acc.unwrap_or_else(|| if op == AggOp::Prod { S::one() } else { S::zero() })
}

/// Rejects an FAQ cover whose projection onto each extended bag differs
/// from the corresponding bag function listing.
pub fn check_faq_cover<S: Semiring>(k: &FaqCover, set: &BagFunctionSet<S::V>) -> Result<bool> {
    let mut rels = Vec::new();
    for i in 0..set.decomposition.len() {
        rels.push(set.listing::<S>(i));
    }
    let refs: Vec<&Relation> = rels.iter().collect();
    let full = crate::relation::natural_join_bruteforce(&refs);
    Ok(crate::coverjoin::check_cover(&k.cover.relation, &k.cover.decomposition, &full)?.is_cover())
}
