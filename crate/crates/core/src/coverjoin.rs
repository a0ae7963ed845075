//! The binary cover-join operator and cover verification.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::hypergraph::{all_minimal_edge_covers_bounded, Hypergraph};
use crate::query::JoinQuery;
use crate::relation::{block_pairs, is_consistent, key_of, natural_join_bruteforce, Database, Relation, Tuple};

/// Largest block side accepted by [`cover_join_all`].
pub const MAX_BLOCK_SIDE: usize = 6;
/// Largest number of covers [`cover_join_all`] will materialize.
pub const MAX_COVER_CHOICES: usize = 200_000;

/// A relation claimed to be a cover over a decomposition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cover {
    pub relation: Relation,
    pub decomposition: Decomposition,
}

impl Cover {
    pub fn len(&self) -> usize {
        self.relation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relation.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct CoverJoinOptions {
    /// Shuffles the rows of every block before pairing.
    pub seed: Option<u64>,
    /// Rejects inconsistent inputs. On by default in debug builds.
    pub check_consistency: bool,
}

impl Default for CoverJoinOptions {
    fn default() -> Self {
        CoverJoinOptions {
            seed: None,
            check_consistency: cfg!(debug_assertions),
        }
    }
}

/// Cover of `r1 ⋈ r2` over the two bags given by their schemas.
pub fn cover_join(r1: &Relation, r2: &Relation) -> Result<Relation> {
    cover_join_with(r1, r2, &CoverJoinOptions::default())
}

/// Within each block of rows agreeing on the shared attributes, the larger
/// side's j-th row is paired with the smaller side's j-th row, and the
/// leftover rows of the larger side with the smaller side's last row.
pub fn cover_join_with(r1: &Relation, r2: &Relation, opts: &CoverJoinOptions) -> Result<Relation> {
    if opts.check_consistency && !is_consistent(r1, r2) {
        return Err(Error::InconsistentInputs(format!(
            "{:?} and {:?} have dangling rows",
            r1.schema(),
            r2.schema()
        )));
    }
    let schema = r1.schema().union(r2.schema());
    let extra: Vec<usize> = r2
        .attrs()
        .iter()
        .enumerate()
        .filter(|(_, a)| !r1.schema().contains(a))
        .map(|(i, _)| i)
        .collect();
    let bp = block_pairs(r1, r2);
    let mut rng = opts.seed.map(ChaCha8Rng::seed_from_u64);
    let mut rows = Vec::new();
    for ((al, ah), (bl, bh)) in &bp.pairs {
        let mut a: Vec<usize> = bp.r_order[*al..*ah].to_vec();
        let mut b: Vec<usize> = bp.s_order[*bl..*bh].to_vec();
        if let Some(rng) = rng.as_mut() {
            a.shuffle(rng);
            b.shuffle(rng);
        }
        for (x, y) in block_pairing(a.len(), b.len()) {
            let mut t = r1.rows()[a[x]].clone();
            t.extend(extra.iter().map(|&i| r2.rows()[b[y]][i].clone()));
            rows.push(t);
        }
    }
    Relation::new(schema, rows)
}

// Index pairs of the deterministic pairing of an n1 x n2 block.
fn block_pairing(n1: usize, n2: usize) -> Vec<(usize, usize)> {
    let k = n1.min(n2);
    let mut out: Vec<(usize, usize)> = (0..k).map(|j| (j, j)).collect();
    if n1 > n2 {
        out.extend((k..n1).map(|j| (j, n2 - 1)));
    } else {
        out.extend((k..n2).map(|j| (n1 - 1, j)));
    }
    out
}

/// Every cover of `r1 ⋈ r2` over the two bags: the cross product of the
/// minimal edge covers of the complete bipartite blocks.
pub fn cover_join_all(r1: &Relation, r2: &Relation) -> Result<Vec<Relation>> {
    let schema = r1.schema().union(r2.schema());
    let extra: Vec<usize> = r2
        .attrs()
        .iter()
        .enumerate()
        .filter(|(_, a)| !r1.schema().contains(a))
        .map(|(i, _)| i)
        .collect();
    let bp = block_pairs(r1, r2);
    // Per block: the candidate row sets.
    let mut choices: Vec<Vec<Vec<Tuple>>> = Vec::new();
    let mut total: usize = 1;
    for ((al, ah), (bl, bh)) in &bp.pairs {
        let (n1, n2) = (ah - al, bh - bl);
        if n1.max(n2) > MAX_BLOCK_SIDE {
            return Err(Error::TooLarge {
                what: "block side",
                size: n1.max(n2),
                limit: MAX_BLOCK_SIDE,
            });
        }
        let mut h = Hypergraph::new();
        for i in 0..n1 + n2 {
            h.add_node(i.to_string());
        }
        let mut pairs = Vec::new();
        for x in 0..n1 {
            for y in 0..n2 {
                h.add_edge(format!("{x},{y}"), [x, n1 + y]);
                pairs.push((x, y));
            }
        }
        let covers = all_minimal_edge_covers_bounded(&h, MAX_BLOCK_SIDE * MAX_BLOCK_SIDE)?;
        let block: Vec<Vec<Tuple>> = covers
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&e| {
                        let (x, y) = pairs[e];
                        let mut t = r1.rows()[bp.r_order[al + x]].clone();
                        t.extend(extra.iter().map(|&i| r2.rows()[bp.s_order[bl + y]][i].clone()));
                        t
                    })
                    .collect()
            })
            .collect();
        total = total.saturating_mul(block.len());
        if total > MAX_COVER_CHOICES {
            return Err(Error::TooLarge {
                what: "number of covers",
                size: total,
                limit: MAX_COVER_CHOICES,
            });
        }
        choices.push(block);
    }
    let mut out = Vec::with_capacity(total);
    let mut pick = vec![0usize; choices.len()];
    loop {
        let rows: Vec<Tuple> = pick
            .iter()
            .zip(&choices)
            .flat_map(|(&i, c)| c[i].iter().cloned())
            .collect();
        out.push(Relation::new(schema.clone(), rows)?);
        let mut k = 0;
        while k < pick.len() {
            pick[k] += 1;
            if pick[k] < choices[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
        if k == pick.len() {
            break;
        }
    }
    out.sort_by(|a, b| a.rows().cmp(b.rows()));
    out.dedup();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoverVerdict {
    Cover,
    /// The projection of the candidate onto `bag` differs from the result's.
    /// `witness` is the greatest missing tuple, or the least extra one.
    NotResultPreserving {
        bag: String,
        witness: Tuple,
        missing: Vec<Tuple>,
        extra: Vec<Tuple>,
    },
    /// `row` can be removed without losing any bag projection.
    NotMinimal { row: Tuple },
}

impl CoverVerdict {
    pub fn is_cover(&self) -> bool {
        matches!(self, CoverVerdict::Cover)
    }
}

fn show(t: &[crate::relation::Value]) -> String {
    let v: Vec<&str> = t.iter().map(|x| x.as_str()).collect();
    format!("({})", v.join(","))
}

impl fmt::Display for CoverVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoverVerdict::Cover => write!(f, "Cover"),
            CoverVerdict::NotResultPreserving { bag, witness, .. } => {
                write!(f, "NotResultPreserving bag={bag} witness={}", show(witness))
            }
            CoverVerdict::NotMinimal { row } => write!(f, "NotMinimal row={}", show(row)),
        }
    }
}

/// Checks whether `k` is a cover of `Q(D)` over `t`, computing the result
/// by brute force.
pub fn is_cover(k: &Relation, q: &JoinQuery, t: &Decomposition, db: &Database) -> Result<CoverVerdict> {
    if k.schema().to_set() != q.attr_set() {
        return Err(Error::SchemaMismatch(format!(
            "candidate has schema {:?}, query attributes are {:?}",
            k.schema(),
            q.attrs()
        )));
    }
    let result = natural_join_bruteforce(&q.bind(db)?);
    check_cover(k, t, &result)
}

/// Checks whether `k` is a cover over `t` of the given full result.
pub fn check_cover(k: &Relation, t: &Decomposition, result: &Relation) -> Result<CoverVerdict> {
    if k.schema().to_set() != result.schema().to_set() {
        return Err(Error::SchemaMismatch(format!(
            "candidate has schema {:?}, result has {:?}",
            k.schema(),
            result.schema()
        )));
    }
    let k = k.reorder(result.attrs())?;
    for bag in t.bags() {
        let pk = k.project_set(&bag.attrs)?;
        let pr = result.project_set(&bag.attrs)?;
        let missing: Vec<Tuple> = pr.rows().iter().filter(|r| !pk.contains(r)).cloned().collect();
        let extra: Vec<Tuple> = pk.rows().iter().filter(|r| !pr.contains(r)).cloned().collect();
        if let Some(witness) = missing.last().or(extra.first()).cloned() {
            return Ok(CoverVerdict::NotResultPreserving {
                bag: bag.name.clone(),
                witness,
                missing,
                extra,
            });
        }
    }
    Ok(match removable_row(&k, t)? {
        Some(row) => CoverVerdict::NotMinimal { row },
        None => CoverVerdict::Cover,
    })
}

/// First row whose every bag projection also occurs in another row.
pub fn removable_row(k: &Relation, t: &Decomposition) -> Result<Option<Tuple>> {
    let mut per_bag = Vec::new();
    for bag in t.bags() {
        let idx: Vec<usize> = k
            .attrs()
            .iter()
            .enumerate()
            .filter(|(_, a)| bag.attrs.contains(*a))
            .map(|(i, _)| i)
            .collect();
        if idx.len() != bag.attrs.len() {
            let a = bag.attrs.iter().find(|a| !k.schema().contains(a)).expect("missing");
            return Err(Error::UnknownAttribute(a.clone()));
        }
        let mut counts: BTreeMap<Tuple, usize> = BTreeMap::new();
        for r in k.rows() {
            *counts.entry(key_of(r, &idx)).or_default() += 1;
        }
        per_bag.push((idx, counts));
    }
    Ok(k.rows()
        .iter()
        .find(|r| per_bag.iter().all(|(idx, c)| c[&key_of(r, idx)] >= 2))
        .cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{is_minimal_edge_cover, result_hypergraph};
    use crate::relation::{natural_join, semi_join_reduce, Schema, Value};
    use rand::Rng;

    fn two_bags(r1: &Relation, r2: &Relation) -> Decomposition {
        let a: Vec<&str> = r1.attrs().iter().map(String::as_str).collect();
        let b: Vec<&str> = r2.attrs().iter().map(String::as_str).collect();
        Decomposition::from_strs(&[("L", &a), ("R", &b)], &[("L", "R")]).unwrap()
    }

    fn numbered(attr: &str, n: usize) -> Relation {
        let rows: Vec<Vec<Value>> = (0..n).map(|i| vec![Value::new(format!("{attr}{i}"))]).collect();
        Relation::new(Schema::new(&[attr]).unwrap(), rows).unwrap()
    }

    #[test]
    fn calibrated_path_first_two() {
        let r1 = Relation::from_strs(&["A", "B"], &[&["a1", "b1"], &["a1", "b2"], &["a2", "b1"], &["a2", "b2"]]).unwrap();
        let r2 = Relation::from_strs(&["B", "C"], &[&["b1", "c1"], &["b2", "c2"]]).unwrap();
        let k = cover_join(&r1, &r2).unwrap();
        assert_eq!(k, natural_join(&r1, &r2));
        assert_eq!(k.len(), 4);
    }

    #[test]
    fn four_by_five_product() {
        let k = cover_join(&numbered("A", 4), &numbered("B", 5)).unwrap();
        assert_eq!(k.len(), 5);
    }

    #[test]
    fn single_rows() {
        let r1 = Relation::from_strs(&["A", "B"], &[&["a", "b"]]).unwrap();
        let r2 = Relation::from_strs(&["B", "C"], &[&["b", "c"]]).unwrap();
        let k = cover_join(&r1, &r2).unwrap();
        assert_eq!(k.rows(), &[vec![Value::new("a"), Value::new("b"), Value::new("c")]]);
    }

    #[test]
    fn inconsistent_inputs_rejected_when_checked() {
        let r1 = Relation::from_strs(&["A", "B"], &[&["a", "b"], &["a", "z"]]).unwrap();
        let r2 = Relation::from_strs(&["B", "C"], &[&["b", "c"]]).unwrap();
        let opts = CoverJoinOptions {
            seed: None,
            check_consistency: true,
        };
        assert!(matches!(cover_join_with(&r1, &r2, &opts), Err(Error::InconsistentInputs(_))));
    }

    #[test]
    fn census_two_by_three() {
        let all = cover_join_all(&numbered("A", 2), &numbered("B", 3)).unwrap();
        assert_eq!(all.len(), 6);
        assert!(all.iter().all(|k| k.len() == 3));
        assert_eq!(cover_join_all(&numbered("A", 1), &numbered("B", 1)).unwrap().len(), 1);
    }

    #[test]
    fn calibrated_r2_r3_has_one_cover() {
        let r2 = Relation::from_strs(&["B", "C"], &[&["b1", "c1"], &["b2", "c2"]]).unwrap();
        let r3 = Relation::from_strs(&["C", "D"], &[&["c1", "d1"], &["c1", "d2"], &["c2", "d1"], &["c2", "d2"]]).unwrap();
        let all = cover_join_all(&r2, &r3).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].len(), 4);
    }

    #[test]
    fn oversized_block_rejected() {
        assert!(matches!(
            cover_join_all(&numbered("A", 7), &numbered("B", 2)),
            Err(Error::TooLarge { .. })
        ));
    }

    fn path_fixture() -> (JoinQuery, Decomposition, Database) {
        let q = JoinQuery::from_strs(&[("R1", &["A", "B"]), ("R2", &["B", "C"]), ("R3", &["C", "D"])]).unwrap();
        let t = Decomposition::from_strs(
            &[("B1", &["A", "B"]), ("B2", &["B", "C"]), ("B3", &["C", "D"])],
            &[("B1", "B2"), ("B2", "B3")],
        )
        .unwrap();
        let mut db = Database::new();
        db.insert(
            "R1",
            Relation::from_strs(&["A", "B"], &[&["a1", "b1"], &["a1", "b2"], &["a2", "b1"], &["a2", "b2"], &["a1", "b3"]]).unwrap(),
        );
        db.insert(
            "R2",
            Relation::from_strs(&["B", "C"], &[&["b1", "c1"], &["b2", "c2"], &["b3", "c3"], &["b4", "c4"]]).unwrap(),
        );
        db.insert(
            "R3",
            Relation::from_strs(&["C", "D"], &[&["c1", "d1"], &["c1", "d2"], &["c2", "d1"], &["c2", "d2"], &["c4", "d1"]]).unwrap(),
        );
        (q, t, db)
    }

    fn abcd(rows: &[&[&str]]) -> Relation {
        Relation::from_strs(&["A", "B", "C", "D"], rows).unwrap()
    }

    #[test]
    fn path_verdicts() {
        let (q, t, db) = path_fixture();
        let k1 = abcd(&[&["a1", "b1", "c1", "d2"], &["a2", "b1", "c1", "d1"], &["a1", "b2", "c2", "d2"], &["a2", "b2", "c2", "d1"]]);
        assert_eq!(is_cover(&k1, &q, &t, &db).unwrap(), CoverVerdict::Cover);
        let n1 = abcd(&[&["a1", "b1", "c1", "d1"], &["a1", "b1", "c1", "d2"], &["a1", "b2", "c2", "d1"]]);
        match is_cover(&n1, &q, &t, &db).unwrap() {
            CoverVerdict::NotResultPreserving { bag, witness, missing, .. } => {
                assert_eq!(bag, "B1");
                assert_eq!(witness, vec![Value::new("a2"), Value::new("b2")]);
                assert_eq!(missing.len(), 2);
            }
            v => panic!("unexpected {v}"),
        }
        let full = natural_join_bruteforce(&q.bind(&db).unwrap());
        assert!(matches!(is_cover(&full, &q, &t, &db).unwrap(), CoverVerdict::NotMinimal { .. }));
    }

    #[test]
    fn schema_mismatch() {
        let (q, t, db) = path_fixture();
        let k = Relation::from_strs(&["A", "B"], &[&["a1", "b1"]]).unwrap();
        assert!(matches!(is_cover(&k, &q, &t, &db), Err(Error::SchemaMismatch(_))));
    }

    fn random_consistent_pair(rng: &mut impl Rng, max_rows: usize) -> (Relation, Relation) {
        let keys = rng.gen_range(1..=4);
        let mk = |rng: &mut dyn rand::RngCore, a: &str, b: &str| {
            let n = rng.gen_range(1..=max_rows);
            let rows: Vec<Vec<Value>> = (0..n)
                .map(|_| {
                    vec![
                        Value::new(format!("{}", rng.gen_range(0..max_rows))),
                        Value::new(format!("k{}", rng.gen_range(0..keys))),
                    ]
                })
                .collect();
            Relation::new(Schema::new(&[a, b]).unwrap(), rows).unwrap()
        };
        loop {
            let r1 = mk(rng, "A", "B");
            let r2 = mk(rng, "C", "B");
            let (r1, r2) = (semi_join_reduce(&r1, &r2), semi_join_reduce(&r2, &r1));
            if !r1.is_empty() {
                return (r1, r2);
            }
        }
    }

    #[test]
    fn operator_output_is_a_bounded_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..300 {
            let (r1, r2) = random_consistent_pair(&mut rng, 12);
            let t = two_bags(&r1, &r2);
            let full = natural_join(&r1, &r2);
            let opts = CoverJoinOptions {
                seed: (i % 2 == 0).then_some(i),
                check_consistency: true,
            };
            let k = cover_join_with(&r1, &r2, &opts).unwrap();
            assert!(check_cover(&k, &t, &full).unwrap().is_cover());
            assert!(r1.len().max(r2.len()) <= k.len() && k.len() <= r1.len() + r2.len());
        }
    }

    // No path with three edges inside a block: every output row has an
    // endpoint of degree one.
    fn no_long_paths(k: &Relation, r1: &Relation, r2: &Relation) -> bool {
        let i1 = k.schema().indices_of(r1.attrs()).unwrap();
        let i2 = k.schema().indices_of(r2.attrs()).unwrap();
        let mut d1: BTreeMap<Tuple, usize> = BTreeMap::new();
        let mut d2: BTreeMap<Tuple, usize> = BTreeMap::new();
        for r in k.rows() {
            *d1.entry(key_of(r, &i1)).or_default() += 1;
            *d2.entry(key_of(r, &i2)).or_default() += 1;
        }
        k.rows().iter().all(|r| d1[&key_of(r, &i1)] == 1 || d2[&key_of(r, &i2)] == 1)
    }

    #[test]
    fn exhaustive_covers_agree_with_hypergraph_view() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..80 {
            let (r1, r2) = random_consistent_pair(&mut rng, 4);
            let t = two_bags(&r1, &r2);
            let full = natural_join(&r1, &r2);
            let all = cover_join_all(&r1, &r2).unwrap();
            let det = cover_join(&r1, &r2).unwrap();
            assert!(all.contains(&det));
            let rh = result_hypergraph(&full, &t.signature()).unwrap();
            for k in &all {
                assert!(check_cover(k, &t, &full).unwrap().is_cover());
                assert!(no_long_paths(k, &r1, &r2));
                assert!(is_minimal_edge_cover(&rh.graph, &rh.edges_of(k).unwrap()));
            }
            // Random subsets: the two views must agree.
            for _ in 0..10 {
                let rows: Vec<Tuple> = full.rows().iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
                let k = full.with_rows(rows);
                let by_cover = check_cover(&k, &t, &full).unwrap().is_cover();
                let by_graph = is_minimal_edge_cover(&rh.graph, &rh.edges_of(&k).unwrap());
                assert_eq!(by_cover, by_graph);
                assert_eq!(by_cover, all.contains(&k));
            }
        }
    }
}
