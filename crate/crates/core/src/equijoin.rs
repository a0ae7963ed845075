//! Equi-join queries whose atoms may refer to the same database relation.
//!
//! An equi-join is rewritten into a natural join over renamed, filtered and
//! column-extended copies of the database relations, after which the
//! natural-join machinery applies unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::unionfind::UnionFind;

use crate::coverjoin::Cover;
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::planner::compute_cover;
use crate::query::{Atom, JoinQuery};
use crate::relation::{AttrSet, Database, Relation, Schema, Tuple};

/// An atom `R_i(S_i)` with its signature mapping: `relation` is `λ(R_i)` and
/// `mapping[j] = (A, μ(A))` for the j-th attribute `A` of `S_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquiAtom {
    pub name: String,
    pub relation: String,
    pub mapping: Vec<(String, String)>,
}

impl EquiAtom {
    pub fn new<S: AsRef<str>>(name: &str, relation: &str, mapping: &[(S, S)]) -> Self {
        EquiAtom {
            name: name.to_string(),
            relation: relation.to_string(),
            mapping: mapping
                .iter()
                .map(|(a, b)| (a.as_ref().to_string(), b.as_ref().to_string()))
                .collect(),
        }
    }

    pub fn attrs(&self) -> Vec<String> {
        self.mapping.iter().map(|(a, _)| a.clone()).collect()
    }
}

/// `σ_ψ(R_1(S_1) × … × R_n(S_n))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquiJoinQuery {
    atoms: Vec<EquiAtom>,
    equalities: Vec<(String, String)>,
}

impl EquiJoinQuery {
    /// Atom names and attribute names must be globally distinct, and every
    /// equality must mention declared attributes.
    pub fn new(atoms: Vec<EquiAtom>, equalities: Vec<(String, String)>) -> Result<Self> {
        let mut names = BTreeSet::new();
        let mut attrs = BTreeSet::new();
        for a in &atoms {
            if !names.insert(&a.name) {
                return Err(Error::MalformedSignature(format!("atom `{}` declared twice", a.name)));
            }
            for (x, _) in &a.mapping {
                if !attrs.insert(x) {
                    return Err(Error::DuplicateAttribute(x.clone()));
                }
            }
        }
        for (x, y) in &equalities {
            for z in [x, y] {
                if !attrs.contains(z) {
                    return Err(Error::UnknownAttribute(z.clone()));
                }
            }
        }
        Ok(EquiJoinQuery { atoms, equalities })
    }

    pub fn atoms(&self) -> &[EquiAtom] {
        &self.atoms
    }

    pub fn equalities(&self) -> &[(String, String)] {
        &self.equalities
    }

    /// All attributes in declaration order.
    pub fn attrs(&self) -> Vec<String> {
        self.atoms.iter().flat_map(EquiAtom::attrs).collect()
    }

    /// Checks `λ` and the bijectivity of each `μ` against the database.
    pub fn check_signature(&self, db: &Database) -> Result<()> {
        for a in &self.atoms {
            let rel = db
                .get(&a.relation)
                .map_err(|_| Error::MalformedSignature(format!("atom `{}` refers to unknown relation `{}`", a.name, a.relation)))?;
            let target: BTreeSet<&String> = a.mapping.iter().map(|(_, b)| b).collect();
            let have: BTreeSet<&String> = rel.attrs().iter().collect();
            if target.len() != a.mapping.len() || target != have {
                return Err(Error::MalformedSignature(format!(
                    "attributes of `{}` do not map one-to-one onto `{}`",
                    a.name, a.relation
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for EquiJoinQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let atoms: Vec<String> = self
            .atoms
            .iter()
            .map(|a| format!("{}({})", a.name, a.attrs().join(",")))
            .collect();
        let eqs: Vec<String> = self.equalities.iter().map(|(x, y)| format!("{x}={y}")).collect();
        write!(f, "σ[{}]({})", eqs.join(" ∧ "), atoms.join(" × "))
    }
}

/// Attribute equivalence classes under the transitive closure of `ψ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalenceClasses {
    classes: Vec<AttrSet>,
    class_of: BTreeMap<String, usize>,
}

impl EquivalenceClasses {
    /// Classes sorted by their least member.
    pub fn classes(&self) -> &[AttrSet] {
        &self.classes
    }

    pub fn class(&self, attr: &str) -> Option<&AttrSet> {
        self.class_of.get(attr).map(|&i| &self.classes[i])
    }

    pub fn equivalent(&self, a: &str, b: &str) -> bool {
        match (self.class_of.get(a), self.class_of.get(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }

    /// `S+`.
    pub fn close(&self, s: &AttrSet) -> AttrSet {
        s.iter()
            .flat_map(|a| match self.class(a) {
                Some(c) => c.clone(),
                None => AttrSet::from([a.clone()]),
            })
            .collect()
    }

    pub fn is_closed(&self, s: &AttrSet) -> bool {
        self.close(s) == *s
    }
}

/// Union-find closure of the equalities over the given attributes.
pub fn closure_of(attrs: &[String], equalities: &[(String, String)]) -> Result<EquivalenceClasses> {
    let index: BTreeMap<&String, usize> = attrs.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let mut uf = UnionFind::<usize>::new(attrs.len());
    for (x, y) in equalities {
        let i = *index.get(x).ok_or_else(|| Error::UnknownAttribute(x.clone()))?;
        let j = *index.get(y).ok_or_else(|| Error::UnknownAttribute(y.clone()))?;
        uf.union(i, j);
    }
    let mut groups: BTreeMap<usize, AttrSet> = BTreeMap::new();
    for (i, a) in attrs.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().insert(a.clone());
    }
    let mut classes: Vec<AttrSet> = groups.into_values().collect();
    classes.sort();
    let class_of = classes
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.iter().map(move |a| (a.clone(), i)))
        .collect();
    Ok(EquivalenceClasses { classes, class_of })
}

pub fn closure(q: &EquiJoinQuery) -> Result<EquivalenceClasses> {
    closure_of(&q.attrs(), &q.equalities)
}

/// The natural join query `Q'` with `sgn(R'_i) = S_i+`, columns in the
/// query's attribute order.
pub fn closed_query(q: &EquiJoinQuery) -> Result<JoinQuery> {
    let eq = closure(q)?;
    let order = q.attrs();
    let atoms = q
        .atoms
        .iter()
        .map(|a| {
            let plus = eq.close(&a.attrs().into_iter().collect());
            let cols: Vec<&String> = order.iter().filter(|x| plus.contains(*x)).collect();
            Ok(Atom {
                name: a.name.clone(),
                schema: Schema::new(&cols)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    JoinQuery::new(atoms)
}

/// Builds `(Q', D')` with `Q'(D') = Q(D)`.
///
/// Each atom's relation is renamed to the atom's attributes, rows violating
/// an equality between two of its own attributes are dropped, and every
/// attribute of `S_i+ \ S_i` is added as a copy of the least equivalent
/// attribute of `S_i`.
pub fn to_natural_join(q: &EquiJoinQuery, db: &Database) -> Result<(JoinQuery, Database)> {
    q.check_signature(db)?;
    let eq = closure(q)?;
    let qp = closed_query(q)?;
    let mut out = Database::new();
    for (a, ap) in q.atoms.iter().zip(qp.atoms()) {
        let src = db.get(&a.relation)?;
        // D1: column j of the renamed copy is attribute a.mapping[j].0.
        let from: Vec<usize> = a
            .mapping
            .iter()
            .map(|(_, b)| src.schema().index_of(b).expect("checked signature"))
            .collect();
        let own = a.attrs();
        // D2: equal attributes within the atom must agree.
        let mut checks = Vec::new();
        for i in 0..own.len() {
            for j in i + 1..own.len() {
                if eq.equivalent(&own[i], &own[j]) {
                    checks.push((i, j));
                }
            }
        }
        // D': each output column copies some column of the renamed atom.
        let copy: Vec<usize> = ap
            .schema
            .attrs()
            .iter()
            .map(|x| {
                if let Some(p) = own.iter().position(|o| o == x) {
                    return p;
                }
                let class = eq.class(x).expect("closed attribute");
                own.iter()
                    .enumerate()
                    .filter(|(_, o)| class.contains(*o))
                    .min_by(|l, r| l.1.cmp(r.1))
                    .map(|(p, _)| p)
                    .expect("class meets the atom")
            })
            .collect();
        let rows: Vec<Tuple> = src
            .rows()
            .iter()
            .map(|r| from.iter().map(|&i| r[i].clone()).collect::<Tuple>())
            .filter(|t: &Tuple| checks.iter().all(|&(i, j)| t[i] == t[j]))
            .map(|t| copy.iter().map(|&i| t[i].clone()).collect())
            .collect();
        out.insert(a.name.clone(), Relation::new(ap.schema.clone(), rows)?);
    }
    Ok((qp, out))
}

/// Rejects decompositions with a bag that is not closed under equivalence.
pub fn check_closed_bags(q: &EquiJoinQuery, t: &Decomposition) -> Result<()> {
    let eq = closure(q)?;
    for b in t.bags() {
        if !eq.is_closed(&b.attrs) {
            let missing: Vec<String> = eq.close(&b.attrs).difference(&b.attrs).cloned().collect();
            return Err(Error::InvalidDecomposition(format!(
                "bag `{}` lacks equivalent attributes {}",
                b.name,
                missing.join(",")
            )));
        }
    }
    Ok(())
}

/// A cover of `Q(D)` over `t`, with columns in the query's attribute order.
pub fn equi_cover(q: &EquiJoinQuery, t: &Decomposition, db: &Database) -> Result<Cover> {
    check_closed_bags(q, t)?;
    let (qp, dp) = to_natural_join(q, db)?;
    let k = compute_cover(&qp, t, &dp)?;
    Ok(Cover {
        relation: k.relation.reorder(&q.attrs())?,
        decomposition: k.decomposition,
    })
}

/// `σ_ψ(R_1 × … × R_n)` by nested loops. Test oracle only.
pub fn equi_join_bruteforce(q: &EquiJoinQuery, db: &Database) -> Result<Relation> {
    q.check_signature(db)?;
    let attrs = q.attrs();
    let idx = |x: &String| attrs.iter().position(|a| a == x).expect("declared");
    let eqs: Vec<(usize, usize)> = q.equalities.iter().map(|(x, y)| (idx(x), idx(y))).collect();
    let mut rows: Vec<Tuple> = vec![Vec::new()];
    for a in &q.atoms {
        let src = db.get(&a.relation)?;
        let from: Vec<usize> = a
            .mapping
            .iter()
            .map(|(_, b)| src.schema().index_of(b).expect("checked signature"))
            .collect();
        let mut next = Vec::new();
        for r in &rows {
            for s in src.rows() {
                let mut t = r.clone();
                t.extend(from.iter().map(|&i| s[i].clone()));
                next.push(t);
            }
        }
        rows = next;
    }
    rows.retain(|t| eqs.iter().all(|&(i, j)| t[i] == t[j]));
    Relation::new(Schema::new(&attrs)?, rows)
}
