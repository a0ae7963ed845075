//! Line-oriented job specifications.
//!
//! ```text
//! relation R(A,B) r.csv        # rows from a CSV file next to the spec
//! relation S(B,C)
//! tuple S b1,c1                # or inline
//! bag T1 A,B
//! edge T1 T2
//! query R,S                    # defaults to every relation
//! atom R1 uses R map A1->A, A2->B
//! eq A2 = A3
//! semiring count
//! factor F(A,B) f.csv          # last CSV column is __value
//! tuple F a1,b1,3
//! free A,B
//! bound C sum
//! domain C 4
//! map F T1
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cover_core::csvio::load_relation;
use cover_core::decomposition::Bag;
use cover_core::equijoin::EquiAtom;
use cover_core::faq::VALUE_COLUMN;
use cover_core::relation::{Relation, Schema, Tuple, Value};
use cover_core::Decomposition;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SemiringKind {
    Boolean,
    Count,
    SumProduct,
    MaxProduct,
}

impl SemiringKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "boolean" | "bool" => Some(SemiringKind::Boolean),
            "count" => Some(SemiringKind::Count),
            "sumproduct" | "sum-product" => Some(SemiringKind::SumProduct),
            "maxproduct" | "max-product" => Some(SemiringKind::MaxProduct),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct JobSpec {
    /// Relations in declaration order.
    pub relations: Vec<(String, Relation)>,
    pub query: Option<Vec<String>>,
    pub bags: Vec<Bag>,
    pub edges: Vec<(String, String)>,
    pub atoms: Vec<EquiAtom>,
    pub equalities: Vec<(String, String)>,
    pub semiring: Option<SemiringKind>,
    /// Factors with a trailing value column, in declaration order.
    pub factors: Vec<(String, Relation)>,
    pub free: Option<Vec<String>>,
    pub bound: Vec<(String, String)>,
    pub domains: BTreeMap<String, usize>,
    pub mapping: BTreeMap<String, String>,
}

impl JobSpec {
    pub fn is_faq(&self) -> bool {
        !self.factors.is_empty() || self.semiring.is_some()
    }

    pub fn is_equi(&self) -> bool {
        !self.atoms.is_empty()
    }

    /// The declared decomposition, if any.
    pub fn decomposition(&self) -> Result<Option<Decomposition>, CliError> {
        if self.bags.is_empty() {
            if !self.edges.is_empty() {
                return Err(CliError::Validation("edges declared without bags".into()));
            }
            return Ok(None);
        }
        let idx = |n: &str| {
            self.bags
                .iter()
                .position(|b| b.name == n)
                .ok_or_else(|| CliError::Validation(format!("edge names unknown bag `{n}`")))
        };
        let edges = self
            .edges
            .iter()
            .map(|(a, b)| Ok((idx(a)?, idx(b)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(Some(Decomposition::new(self.bags.clone(), edges)?))
    }
}

struct Parser<'a> {
    dir: &'a Path,
    spec: JobSpec,
    // Rows given inline, by relation or factor name.
    inline: BTreeMap<String, Vec<Tuple>>,
    // Declared schemas of relations and factors without a file.
    pending: Vec<(String, Vec<String>, bool)>,
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

// `R(A,B) rest` into the name, attributes and the trimmed rest.
fn signature(s: &str) -> Option<(String, Vec<String>, &str)> {
    let open = s.find('(')?;
    let close = s.find(')')?;
    if close < open {
        return None;
    }
    let name = s[..open].trim();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return None;
    }
    Some((name.to_string(), split_list(&s[open + 1..close]), s[close + 1..].trim()))
}

impl Parser<'_> {
    fn line(&mut self, no: usize, raw: &str) -> Result<(), CliError> {
        let err = |msg: String| CliError::Parse { line: no, msg };
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            return Ok(());
        }
        let (word, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let rest = rest.trim();
        match word {
            "relation" | "factor" => {
                let is_factor = word == "factor";
                let (name, attrs, file) =
                    signature(rest).ok_or_else(|| err(format!("expected `{word} NAME(A,B,...) [file]`")))?;
                if self.known(&name) {
                    return Err(err(format!("`{name}` declared twice")));
                }
                if file.is_empty() {
                    self.pending.push((name, attrs, is_factor));
                    return Ok(());
                }
                let rel = self.load(file, &attrs, is_factor).map_err(|e| match e {
                    CliError::Core(c) => err(c.to_string()),
                    other => other,
                })?;
                if is_factor {
                    self.spec.factors.push((name, rel));
                } else {
                    self.spec.relations.push((name, rel));
                }
            }
            "tuple" => {
                let (name, vals) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err("expected `tuple NAME v1,v2,...`".into()))?;
                let row: Tuple = vals.split(',').map(|v| Value::new(v.trim())).collect();
                self.inline.entry(name.to_string()).or_default().push(row);
            }
            "query" => self.spec.query = Some(split_list(rest)),
            "bag" => {
                let (name, attrs) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err("expected `bag NAME A,B,...`".into()))?;
                self.spec.bags.push(Bag {
                    name: name.to_string(),
                    attrs: split_list(attrs).into_iter().collect(),
                });
            }
            "edge" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(err("expected `edge BAG1 BAG2`".into()));
                }
                self.spec.edges.push((parts[0].to_string(), parts[1].to_string()));
            }
            "atom" => {
                // atom R1 uses R map A1->A, A2->B
                let parts: Vec<&str> = rest.splitn(5, char::is_whitespace).collect();
                if parts.len() < 4 || parts[1] != "uses" || parts[3] != "map" {
                    return Err(err("expected `atom NAME uses RELATION map A1->A, ...`".into()));
                }
                let mut mapping = Vec::new();
                for pair in split_list(parts.get(4).unwrap_or(&"")) {
                    let (a, b) = pair
                        .split_once("->")
                        .ok_or_else(|| err(format!("expected `ATTR->ATTR`, got `{pair}`")))?;
                    mapping.push((a.trim().to_string(), b.trim().to_string()));
                }
                self.spec.atoms.push(EquiAtom {
                    name: parts[0].to_string(),
                    relation: parts[2].to_string(),
                    mapping,
                });
            }
            "eq" => {
                let (a, b) = rest.split_once('=').ok_or_else(|| err("expected `eq A = B`".into()))?;
                self.spec.equalities.push((a.trim().to_string(), b.trim().to_string()));
            }
            "semiring" => {
                self.spec.semiring =
                    Some(SemiringKind::parse(rest).ok_or_else(|| err(format!("unknown semiring `{rest}`")))?);
            }
            "free" => self.spec.free = Some(split_list(rest)),
            "bound" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(err("expected `bound ATTR OP`".into()));
                }
                self.spec.bound.push((parts[0].to_string(), parts[1].to_string()));
            }
            "domain" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let n = match parts.as_slice() {
                    [_, n] => n.parse().map_err(|_| err(format!("bad domain size `{n}`")))?,
                    _ => return Err(err("expected `domain ATTR SIZE`".into())),
                };
                self.spec.domains.insert(parts[0].to_string(), n);
            }
            "map" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(err("expected `map FACTOR BAG`".into()));
                }
                self.spec.mapping.insert(parts[0].to_string(), parts[1].to_string());
            }
            _ => return Err(err(format!("unknown directive `{word}`"))),
        }
        Ok(())
    }

    fn known(&self, name: &str) -> bool {
        self.spec.relations.iter().any(|(n, _)| n == name)
            || self.spec.factors.iter().any(|(n, _)| n == name)
            || self.pending.iter().any(|(n, _, _)| n == name)
    }

    fn load(&self, file: &str, attrs: &[String], is_factor: bool) -> Result<Relation, CliError> {
        let path: PathBuf = self.dir.join(file);
        let rel = load_relation(&path)?;
        let mut want = attrs.to_vec();
        if is_factor {
            want.push(VALUE_COLUMN.to_string());
        }
        let mut have = rel.attrs().to_vec();
        let mut sorted = want.clone();
        have.sort();
        sorted.sort();
        if have != sorted {
            return Err(CliError::Validation(format!(
                "{} has columns {:?}, expected {:?}",
                path.display(),
                rel.attrs(),
                want
            )));
        }
        Ok(rel.reorder(&want)?)
    }

    fn finish(mut self) -> Result<JobSpec, CliError> {
        for (name, attrs, is_factor) in std::mem::take(&mut self.pending) {
            let mut cols = attrs;
            if is_factor {
                cols.push(VALUE_COLUMN.to_string());
            }
            let rows = self.inline.remove(&name).unwrap_or_default();
            let schema = Schema::new(&cols)?;
            let rel = Relation::new(schema, rows).map_err(|e| CliError::Parse {
                line: 0,
                msg: format!("tuples of `{name}`: {e}"),
            })?;
            if is_factor {
                self.spec.factors.push((name, rel));
            } else {
                self.spec.relations.push((name, rel));
            }
        }
        if let Some(name) = self.inline.keys().next() {
            return Err(CliError::Validation(format!(
                "tuples given for `{name}`, which is undeclared or loaded from a file"
            )));
        }
        Ok(self.spec)
    }
}

/// Parses a spec; relative CSV paths resolve against `dir`.
pub fn parse_spec(text: &str, dir: &Path) -> Result<JobSpec, CliError> {
    let mut p = Parser {
        dir,
        spec: JobSpec::default(),
        inline: BTreeMap::new(),
        pending: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        p.line(i + 1, line)?;
    }
    p.finish()
}

pub fn load_spec(path: &Path) -> Result<JobSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse {
        line: 0,
        msg: format!("{}: {e}", path.display()),
    })?;
    parse_spec(&text, path.parent().unwrap_or(Path::new(".")))
}
