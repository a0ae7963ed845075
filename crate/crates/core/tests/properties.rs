use std::collections::BTreeSet;

use cover_core::coverjoin::{check_cover, cover_join_all, cover_join_with, CoverJoinOptions};
use cover_core::decomposition::{gyo_join_tree, validate_decomposition};
use cover_core::drep::{count_result, cover_to_drep, derive_dtree, enumerate_result};
use cover_core::materialize::AcyclicInstance;
use cover_core::planner::{compute_cover, enumerate_plans, execute_plan, execute_plan_with, ExecOptions};
use cover_core::query::{Atom, JoinQuery};
use cover_core::relation::{natural_join_bruteforce, Schema, Tuple, Value};
use cover_core::{Database, Relation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Relations over a random tree; neighbours share one or two attributes.
fn acyclic_instance(seed: u64, n_rel: usize, max_rows: usize, dom: usize) -> (JoinQuery, Database) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut schemas: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n_rel];
    for i in 1..n_rel {
        let p = rng.gen_range(0..i);
        schemas[i].insert(format!("S{i}"));
        schemas[p].insert(format!("S{i}"));
        if rng.gen_bool(0.3) {
            schemas[i].insert(format!("T{i}"));
            schemas[p].insert(format!("T{i}"));
        }
    }
    for (i, s) in schemas.iter_mut().enumerate() {
        if s.is_empty() || rng.gen_bool(0.5) {
            s.insert(format!("P{i}"));
        }
    }
    let mut atoms = Vec::new();
    let mut db = Database::new();
    for (i, s) in schemas.iter().enumerate() {
        let attrs: Vec<&String> = s.iter().collect();
        let rows: Vec<Tuple> = (0..rng.gen_range(0..=max_rows))
            .map(|_| attrs.iter().map(|_| Value::new(format!("v{}", rng.gen_range(0..dom)))).collect())
            .collect();
        let schema = Schema::new(&attrs).unwrap();
        atoms.push(Atom {
            name: format!("R{i}"),
            schema: schema.clone(),
        });
        db.insert(format!("R{i}"), Relation::new(schema, rows).unwrap());
    }
    (JoinQuery::new(atoms).unwrap(), db)
}

fn result_of(q: &JoinQuery, db: &Database) -> Relation {
    natural_join_bruteforce(&q.bind(db).unwrap())
}

fn pair(rows1: Vec<(u8, u8)>, rows2: Vec<(u8, u8)>) -> (Relation, Relation) {
    let mk = |a: &str, rows: Vec<(u8, u8)>| {
        let rows = rows
            .into_iter()
            .map(|(x, k)| vec![Value::new(format!("{a}{x}")), Value::new(format!("k{k}"))])
            .collect();
        Relation::new(Schema::new(&[a, "K"]).unwrap(), rows).unwrap()
    };
    (mk("A", rows1), mk("B", rows2))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cover_join_is_a_cover_of_the_join(
        rows1 in prop::collection::vec((0u8..6, 0u8..3), 0..12),
        rows2 in prop::collection::vec((0u8..6, 0u8..3), 0..12),
        seed in prop::option::of(any::<u64>()),
    ) {
        let (r1, r2) = pair(rows1, rows2);
        let full = natural_join_bruteforce(&[&r1, &r2]);
        let t = cover_core::Decomposition::from_strs(&[("X", &["A", "K"]), ("Y", &["B", "K"])], &[("X", "Y")]).unwrap();
        let opts = CoverJoinOptions { seed, check_consistency: false };
        let k = cover_join_with(&r1, &r2, &opts).unwrap();
        prop_assert!(check_cover(&k, &t, &full).unwrap().is_cover());
        prop_assert!(k.len() <= full.len());
    }

    #[test]
    fn every_enumerated_cover_is_minimal(
        rows1 in prop::collection::vec((0u8..4, 0u8..2), 1..6),
        rows2 in prop::collection::vec((0u8..4, 0u8..2), 1..6),
    ) {
        let (r1, r2) = pair(rows1, rows2);
        let full = natural_join_bruteforce(&[&r1, &r2]);
        let t = cover_core::Decomposition::from_strs(&[("X", &["A", "K"]), ("Y", &["B", "K"])], &[("X", "Y")]).unwrap();
        let all = cover_join_all(&r1, &r2).unwrap();
        prop_assert!(!all.is_empty() || full.is_empty());
        for k in &all {
            prop_assert!(check_cover(k, &t, &full).unwrap().is_cover());
        }
        if !full.is_empty() {
            let det = cover_join_with(&r1, &r2, &CoverJoinOptions { seed: None, check_consistency: false }).unwrap();
            prop_assert!(all.iter().any(|k| k.same_set(&det)));
        }
    }

    #[test]
    fn plans_cover_and_dreps_enumerate(seed in any::<u64>(), n_rel in 1usize..5) {
        let (q, db) = acyclic_instance(seed, n_rel, 8, 3);
        let full = result_of(&q, &db);
        let jt = gyo_join_tree(&q).unwrap();
        let t = jt.as_decomposition();
        prop_assert!(validate_decomposition(&q, &t).is_valid());
        let inst = AcyclicInstance::from_join_tree(jt, &db).unwrap();
        for plan in enumerate_plans(&inst.join_tree).unwrap() {
            let k = execute_plan(&plan, &inst).unwrap();
            prop_assert!(check_cover(&k.relation, &t, &full).unwrap().is_cover(), "{}", plan);
            let opts = ExecOptions { join: CoverJoinOptions { seed: Some(seed), check_consistency: true }, ..Default::default() };
            let k = execute_plan_with(&plan, &inst, &opts).unwrap();
            prop_assert!(check_cover(&k.relation, &t, &full).unwrap().is_cover(), "seeded {}", plan);
        }
        let k = compute_cover(&q, &t, &db).unwrap();
        let drep = cover_to_drep(&k).unwrap();
        let listed = enumerate_result(&drep);
        prop_assert!(listed.same_set(&full));
        prop_assert_eq!(count_result(&k).unwrap(), full.len() as u128);
    }

    #[test]
    fn dtrees_are_valid_decompositions(seed in any::<u64>(), n_rel in 1usize..6) {
        let (q, _) = acyclic_instance(seed, n_rel, 0, 1);
        let t = gyo_join_tree(&q).unwrap().as_decomposition();
        let d = derive_dtree(&t).unwrap();
        let as_t = d.as_decomposition();
        prop_assert!(validate_decomposition(&q, &as_t).is_valid(), "{}", as_t);
    }
}
