//! Natural join queries.

use std::fmt;

use crate::error::{Error, Result};
use crate::relation::{AttrSet, Attr, Database, Relation, Schema};

/// One relation symbol of a query together with its schema.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    pub name: String,
    pub schema: Schema,
}

/// A natural join `R1 ⋈ ... ⋈ Rn` over named atoms.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct JoinQuery {
    atoms: Vec<Atom>,
}

impl JoinQuery {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        for (i, a) in atoms.iter().enumerate() {
            if atoms[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidDecomposition(format!(
                    "relation symbol `{}` used twice",
                    a.name
                )));
            }
        }
        Ok(JoinQuery { atoms })
    }

    /// Builds a query from `(name, attributes)` pairs.
    pub fn from_strs(atoms: &[(&str, &[&str])]) -> Result<Self> {
        let atoms = atoms
            .iter()
            .map(|(n, a)| {
                Ok(Atom {
                    name: n.to_string(),
                    schema: Schema::new(a)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        JoinQuery::new(atoms)
    }

    /// Query whose atoms are the relations of `db`, in name order.
    pub fn over_database(db: &Database) -> Self {
        JoinQuery {
            atoms: db
                .iter()
                .map(|(n, r)| Atom {
                    name: n.clone(),
                    schema: r.schema().clone(),
                })
                .collect(),
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, name: &str) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.name == name)
    }

    /// Attributes in order of first appearance.
    pub fn attrs(&self) -> Vec<Attr> {
        let mut out: Vec<Attr> = Vec::new();
        for a in &self.atoms {
            for x in a.schema.attrs() {
                if !out.contains(x) {
                    out.push(x.clone());
                }
            }
        }
        out
    }

    pub fn attr_set(&self) -> AttrSet {
        self.atoms
            .iter()
            .flat_map(|a| a.schema.attrs().iter().cloned())
            .collect()
    }

    /// The relations of `db` bound to the atoms, checked against their schemas.
    pub fn bind<'a>(&self, db: &'a Database) -> Result<Vec<&'a Relation>> {
        self.atoms
            .iter()
            .map(|a| {
                let r = db.get(&a.name)?;
                if r.schema().to_set() != a.schema.to_set() {
                    return Err(Error::SchemaMismatch(format!(
                        "relation `{}` has schema {:?}, query expects {:?}",
                        a.name,
                        r.schema(),
                        a.schema
                    )));
                }
                Ok(r)
            })
            .collect()
    }

    /// The X-restriction: every atom projected onto its attributes in `x`,
    /// dropping atoms disjoint from `x`. Returns the restricted query and
    /// database.
    pub fn restrict(&self, db: &Database, x: &AttrSet) -> Result<(JoinQuery, Database)> {
        let rels = self.bind(db)?;
        let mut atoms = Vec::new();
        let mut out = Database::new();
        for (a, r) in self.atoms.iter().zip(rels) {
            let keep: Vec<&str> = a
                .schema
                .attrs()
                .iter()
                .filter(|x_| x.contains(*x_))
                .map(String::as_str)
                .collect();
            if keep.is_empty() {
                continue;
            }
            let p = r.project(&keep)?;
            atoms.push(Atom {
                name: a.name.clone(),
                schema: p.schema().clone(),
            });
            out.insert(a.name.clone(), p);
        }
        Ok((JoinQuery { atoms }, out))
    }
}

impl fmt::Display for JoinQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .atoms
            .iter()
            .map(|a| format!("{}({})", a.name, a.schema.attrs().join(",")))
            .collect();
        f.write_str(&parts.join(" ⋈ "))
    }
}
