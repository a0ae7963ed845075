//! Bag materialization with generic join, and reduction of a query with a
//! decomposition to a calibrated acyclic instance.

use crate::decomposition::{bags_as_join_tree, validate_decomposition, Decomposition, JoinTree};
use crate::error::{Error, Result};
use crate::query::JoinQuery;
use crate::relation::{semi_join_reduce, Database, Relation, Schema, Tuple, Value};

struct Trie {
    rel: Relation,
    // Position in the global order of each of the relation's columns.
    levels: Vec<usize>,
}

/// Worst-case optimal join: binds one attribute at a time, intersecting the
/// candidate values offered by every relation that mentions it.
pub fn generic_join<S: AsRef<str>>(q: &JoinQuery, db: &Database, order: &[S]) -> Result<Relation> {
    let order: Vec<String> = order.iter().map(|a| a.as_ref().to_string()).collect();
    let qa = q.attr_set();
    if order.len() != qa.len() || order.iter().any(|a| !qa.contains(a)) {
        return Err(Error::MalformedOrder(format!(
            "{order:?} is not a permutation of the query attributes"
        )));
    }
    let schema = Schema::new(&order)?;
    let rels = q.bind(db)?;
    let mut tries = Vec::new();
    for r in rels {
        let mut cols: Vec<&String> = r.attrs().iter().collect();
        cols.sort_by_key(|a| order.iter().position(|o| o == *a));
        let levels = cols
            .iter()
            .map(|a| order.iter().position(|o| o == *a).expect("checked"))
            .collect();
        tries.push(Trie {
            rel: r.reorder(&cols)?,
            levels,
        });
    }
    if tries.iter().any(|t| t.rel.is_empty()) {
        return Ok(Relation::empty(schema));
    }
    let mut ranges: Vec<(usize, usize)> = tries.iter().map(|t| (0, t.rel.len())).collect();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(order.len());
    descend(&tries, &mut ranges, 0, order.len(), &mut cur, &mut out);
    Ok(Relation::from_sorted(schema, out))
}

fn descend(
    tries: &[Trie],
    ranges: &mut [(usize, usize)],
    depth: usize,
    n: usize,
    cur: &mut Tuple,
    out: &mut Vec<Tuple>,
) {
    if depth == n {
        out.push(cur.clone());
        return;
    }
    // Relations mentioning this attribute and the column holding it.
    let part: Vec<(usize, usize)> = tries
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.levels.iter().position(|&l| l == depth).map(|c| (i, c)))
        .collect();
    let &(lead, lead_col) = part
        .iter()
        .min_by_key(|(i, _)| ranges[*i].1 - ranges[*i].0)
        .expect("every attribute occurs in some relation");
    let (lo, hi) = ranges[lead];
    let rows = tries[lead].rel.rows();
    let mut p = lo;
    while p < hi {
        let v = rows[p][lead_col].clone();
        let end = p + rows[p..hi].partition_point(|r| r[lead_col] <= v);
        let saved: Vec<(usize, usize)> = part.iter().map(|(i, _)| ranges[*i]).collect();
        let mut ok = true;
        for &(i, c) in &part {
            let r = if i == lead {
                Some((p, end))
            } else {
                sub_range(tries[i].rel.rows(), ranges[i], c, &v)
            };
            match r {
                Some(r) => ranges[i] = r,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            cur.push(v);
            descend(tries, ranges, depth + 1, n, cur, out);
            cur.pop();
        }
        for (k, (i, _)) in part.iter().enumerate() {
            ranges[*i] = saved[k];
        }
        p = end;
    }
}

// Rows in `range` whose column `c` equals `v`; the range is sorted on `c`.
fn sub_range(rows: &[Tuple], (lo, hi): (usize, usize), c: usize, v: &Value) -> Option<(usize, usize)> {
    let slice = &rows[lo..hi];
    let a = slice.partition_point(|r| r[c] < *v);
    let b = slice.partition_point(|r| r[c] <= *v);
    (a < b).then_some((lo + a, lo + b))
}

/// An acyclic query over bag relations together with its join tree and a
/// calibrated database.
#[derive(Clone, Debug)]
pub struct AcyclicInstance {
    pub query: JoinQuery,
    pub join_tree: JoinTree,
    pub database: Database,
    pub decomposition: Decomposition,
    /// Output attribute order of covers built from this instance.
    pub attr_order: Vec<String>,
}

impl AcyclicInstance {
    /// Calibrates an instance given directly by a join tree and its relations.
    pub fn from_join_tree(jt: JoinTree, db: &Database) -> Result<Self> {
        let query = JoinQuery::new(jt.nodes.clone())?;
        let rels = query.bind(db)?;
        let mut database = Database::new();
        for (a, r) in jt.nodes.iter().zip(rels) {
            database.insert(a.name.clone(), r.reorder(a.schema.attrs())?);
        }
        let decomposition = jt.as_decomposition();
        if !jt.is_valid() {
            return Err(Error::InvalidDecomposition("not a join tree".into()));
        }
        let attr_order = query.attrs();
        let mut inst = AcyclicInstance {
            query,
            join_tree: jt,
            database,
            decomposition,
            attr_order,
        };
        inst.calibrate()?;
        Ok(inst)
    }

    /// One bottom-up and one top-down semi-join pass over the rooted tree.
    /// An empty relation empties every relation.
    pub fn calibrate(&mut self) -> Result<()> {
        let names: Vec<String> = self.join_tree.nodes.iter().map(|a| a.name.clone()).collect();
        if names.iter().any(|n| self.database.get(n).map(Relation::is_empty).unwrap_or(false)) {
            self.empty_all();
            return Ok(());
        }
        let rooted = self.decomposition.rooted()?;
        for &x in rooted.preorder.iter().rev() {
            if let Some(p) = rooted.parent[x] {
                let reduced = semi_join_reduce(self.database.get(&names[p])?, self.database.get(&names[x])?);
                self.database.insert(names[p].clone(), reduced);
            }
        }
        for &x in &rooted.preorder {
            if let Some(p) = rooted.parent[x] {
                let reduced = semi_join_reduce(self.database.get(&names[x])?, self.database.get(&names[p])?);
                self.database.insert(names[x].clone(), reduced);
            }
        }
        if names.iter().any(|n| self.database.get(n).map(Relation::is_empty).unwrap_or(false)) {
            self.empty_all();
        }
        Ok(())
    }

    fn empty_all(&mut self) {
        for a in &self.join_tree.nodes {
            self.database.insert(a.name.clone(), Relation::empty(a.schema.clone()));
        }
    }

    pub fn relation(&self, node: usize) -> &Relation {
        self.database
            .get(&self.join_tree.nodes[node].name)
            .expect("instance holds every node")
    }
}

/// Depth-first attribute order of a decomposition: bags in preorder, each
/// contributing its new attributes in name order.
pub fn dfs_attr_order(t: &Decomposition) -> Result<Vec<String>> {
    let rooted = t.rooted()?;
    let mut out: Vec<String> = Vec::new();
    for &b in &rooted.preorder {
        for a in &t.bags()[b].attrs {
            if !out.contains(a) {
                out.push(a.clone());
            }
        }
    }
    Ok(out)
}

/// Materializes every bag and calibrates the bag relations.
pub fn reduce_to_acyclic(q: &JoinQuery, t: &Decomposition, db: &Database) -> Result<AcyclicInstance> {
    validate_decomposition(q, t).into_result()?;
    let dfs = dfs_attr_order(t)?;
    let attr_order = q.attrs();
    let jt = bags_as_join_tree(t, &attr_order)?;
    let mut database = Database::new();
    for (bag, atom) in t.bags().iter().zip(&jt.nodes) {
        let (qb, dbb) = q.restrict(db, &bag.attrs)?;
        let order: Vec<&String> = dfs.iter().filter(|a| bag.attrs.contains(*a)).collect();
        let rb = generic_join(&qb, &dbb, &order)?;
        database.insert(bag.name.clone(), rb.reorder(atom.schema.attrs())?);
    }
    let mut inst = AcyclicInstance {
        query: JoinQuery::new(jt.nodes.clone())?,
        join_tree: jt,
        database,
        decomposition: t.clone(),
        attr_order,
    };
    inst.calibrate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::{is_consistent, natural_join_bruteforce};
    use rand::{Rng, SeedableRng};

    fn path_fixture() -> (JoinQuery, Decomposition, Database) {
        let q = JoinQuery::from_strs(&[("R1", &["A", "B"]), ("R2", &["B", "C"]), ("R3", &["C", "D"])]).unwrap();
        let t = Decomposition::from_strs(
            &[("T1", &["A", "B"]), ("T2", &["B", "C"]), ("T3", &["C", "D"])],
            &[("T1", "T2"), ("T2", "T3")],
        )
        .unwrap();
        let mut db = Database::new();
        db.insert(
            "R1",
            Relation::from_strs(
                &["A", "B"],
                &[&["a1", "b1"], &["a1", "b2"], &["a2", "b1"], &["a2", "b2"], &["a1", "b3"]],
            )
            .unwrap(),
        );
        db.insert(
            "R2",
            Relation::from_strs(&["B", "C"], &[&["b1", "c1"], &["b2", "c2"], &["b3", "c3"], &["b4", "c4"]]).unwrap(),
        );
        db.insert(
            "R3",
            Relation::from_strs(
                &["C", "D"],
                &[&["c1", "d1"], &["c1", "d2"], &["c2", "d1"], &["c2", "d2"], &["c4", "d1"]],
            )
            .unwrap(),
        );
        (q, t, db)
    }

    fn all_pairs_distinct(n: usize) -> Vec<Vec<String>> {
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    v.push(vec![i.to_string(), j.to_string()]);
                }
            }
        }
        v
    }

    fn rel(attrs: &[&str], rows: &[Vec<String>]) -> Relation {
        Relation::new(
            Schema::new(attrs).unwrap(),
            rows.iter().map(|r| r.iter().map(Value::new).collect()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn triangle_matches_bruteforce() {
        let pairs = all_pairs_distinct(3);
        let q = JoinQuery::from_strs(&[("R1", &["A", "B"]), ("R2", &["B", "C"]), ("R3", &["A", "C"])]).unwrap();
        let mut db = Database::new();
        db.insert("R1", rel(&["A", "B"], &pairs));
        db.insert("R2", rel(&["B", "C"], &pairs));
        db.insert("R3", rel(&["A", "C"], &pairs));
        let got = generic_join(&q, &db, &["A", "B", "C"]).unwrap();
        let want = natural_join_bruteforce(&q.bind(&db).unwrap());
        assert!(got.same_set(&want));
        assert_eq!(got.len(), 6);
    }

    #[test]
    fn single_relation_and_bag_restriction() {
        let (q, _, db) = path_fixture();
        let q1 = JoinQuery::from_strs(&[("R1", &["A", "B"])]).unwrap();
        assert_eq!(&generic_join(&q1, &db, &["A", "B"]).unwrap(), db.get("R1").unwrap());
        let (qb, dbb) = q.restrict(&db, &crate::relation::attr_set(&["A", "B"])).unwrap();
        let rb = generic_join(&qb, &dbb, &["A", "B"]).unwrap();
        assert_eq!(rb.len(), 5);
    }

    #[test]
    fn bad_order_rejected() {
        let (q, _, db) = path_fixture();
        assert!(matches!(generic_join(&q, &db, &["A", "B"]), Err(Error::MalformedOrder(_))));
    }

    #[test]
    fn reduction_removes_dangling_rows() {
        let (q, t, db) = path_fixture();
        let inst = reduce_to_acyclic(&q, &t, &db).unwrap();
        let sizes: Vec<usize> = (0..3).map(|i| inst.relation(i).len()).collect();
        assert_eq!(sizes, vec![4, 2, 4]);
        assert!(is_consistent(inst.relation(0), inst.relation(1)));
        assert!(is_consistent(inst.relation(1), inst.relation(2)));
        let again = AcyclicInstance::from_join_tree(inst.join_tree.clone(), &inst.database).unwrap();
        assert_eq!(again.database, inst.database);
    }

    #[test]
    fn bowtie_reduction() {
        let q = JoinQuery::from_strs(&[
            ("R1", &["A", "B"]),
            ("R2", &["B", "C"]),
            ("R3", &["A", "C"]),
            ("R4", &["A", "D"]),
            ("R5", &["D", "E"]),
            ("R6", &["A", "E"]),
        ])
        .unwrap();
        let t = Decomposition::from_strs(&[("B1", &["A", "B", "C"]), ("B2", &["A", "D", "E"])], &[("B1", "B2")]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut db = Database::new();
        for a in q.atoms() {
            let rows: Vec<Vec<String>> = (0..12)
                .map(|_| (0..2).map(|_| rng.gen_range(0..3).to_string()).collect())
                .collect();
            let attrs: Vec<&str> = a.schema.attrs().iter().map(String::as_str).collect();
            db.insert(a.name.clone(), rel(&attrs, &rows));
        }
        let inst = reduce_to_acyclic(&q, &t, &db).unwrap();
        assert_eq!(inst.query.atoms()[0].schema.to_set(), crate::relation::attr_set(&["A", "B", "C"]));
        assert!(is_consistent(inst.relation(0), inst.relation(1)));
        let want = natural_join_bruteforce(&q.bind(&db).unwrap());
        let got = natural_join_bruteforce(&[inst.relation(0), inst.relation(1)]);
        assert!(got.same_set(&want));
    }

    #[test]
    fn empty_bag_empties_everything() {
        let (q, t, mut db) = path_fixture();
        db.insert("R3", Relation::empty(Schema::new(&["C", "D"]).unwrap()));
        let inst = reduce_to_acyclic(&q, &t, &db).unwrap();
        assert!((0..3).all(|i| inst.relation(i).is_empty()));
    }

    fn random_instance(rng: &mut impl Rng) -> (JoinQuery, Database) {
        let attrs = ["A", "B", "C", "D", "E", "F"];
        let n = rng.gen_range(1..=5);
        let mut db = Database::new();
        let mut atoms = Vec::new();
        for i in 0..n {
            let mut s: Vec<&str> = attrs.iter().copied().filter(|_| rng.gen_bool(0.35)).collect();
            if s.is_empty() {
                s.push(attrs[rng.gen_range(0..attrs.len())]);
            }
            s.truncate(3);
            let m = rng.gen_range(0..=50);
            let rows: Vec<Vec<String>> = (0..m)
                .map(|_| s.iter().map(|_| rng.gen_range(0..3).to_string()).collect())
                .collect();
            db.insert(format!("R{i}"), rel(&s, &rows));
            atoms.push((format!("R{i}"), s));
        }
        let refs: Vec<(&str, &[&str])> = atoms.iter().map(|(n, s)| (n.as_str(), s.as_slice())).collect();
        (JoinQuery::from_strs(&refs).unwrap(), db)
    }

    #[test]
    fn generic_join_matches_bruteforce_randomized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (q, db) = random_instance(&mut rng);
            let mut order = q.attrs();
            order.reverse();
            let got = generic_join(&q, &db, &order).unwrap();
            let want = natural_join_bruteforce(&q.bind(&db).unwrap());
            assert!(got.same_set(&want), "{q}");
        }
    }

    #[test]
    fn reduction_preserves_result_randomized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 100 {
            let (q, db) = random_instance(&mut rng);
            // One bag per atom works when the query is acyclic; otherwise
            // use a single bag holding everything.
            let t = match crate::decomposition::gyo_join_tree(&q) {
                Ok(j) => j.as_decomposition(),
                Err(_) => {
                    let all: Vec<String> = q.attrs();
                    let refs: Vec<&str> = all.iter().map(String::as_str).collect();
                    Decomposition::from_strs(&[("ALL", &refs)], &[]).unwrap()
                }
            };
            let inst = reduce_to_acyclic(&q, &t, &db).unwrap();
            let want = natural_join_bruteforce(&q.bind(&db).unwrap());
            let rels: Vec<&Relation> = (0..inst.join_tree.nodes.len()).map(|i| inst.relation(i)).collect();
            let got = natural_join_bruteforce(&rels);
            assert!(got.same_set(&want), "{q}");
            for (i, r) in rels.iter().enumerate() {
                let proj = want.project(r.attrs()).unwrap();
                assert_eq!(&proj, *r, "bag {i} of {q} not globally consistent");
            }
            checked += 1;
        }
    }
}
