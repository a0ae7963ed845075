use std::collections::BTreeMap;
use std::io::Write;

use cover_core::coverjoin::{check_cover, CoverJoinOptions};
use cover_core::csvio::{load_relation, write_relation};
use cover_core::decomposition::{bags_as_join_tree, gyo_join_tree, width};
use cover_core::drep::{count_result, count_result_strict, cover_to_drep, cover_to_drep_strict};
use cover_core::equijoin::{check_closed_bags, equi_join_bruteforce, to_natural_join, EquiJoinQuery};
use cover_core::faq::{
    bag_functions, cover_of_bag_functions, eliminate_bound, faq_bruteforce, faq_enumerate, faq_width, AggOp,
    Boolean, Count, Factor, FaqQuery, MaxProduct, Semiring, SumProduct, VALUE_COLUMN,
};
use cover_core::materialize::reduce_to_acyclic;
use cover_core::planner::{compute_cover_with, enumerate_plans, CoverJoinPlan, ExecOptions};
use cover_core::query::Atom;
use cover_core::relation::{natural_join_bruteforce, Tuple, Value};
use cover_core::{is_cover, Cover, Database, Decomposition, JoinQuery, Relation};

use crate::spec::{load_spec, JobSpec, SemiringKind};
use crate::{CliError, Command, Common};

pub fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    let (common, what) = match cmd {
        Command::Cover(c) => (c, What::Cover),
        Command::Check { cover, common } => (common, What::Check(cover.clone())),
        Command::Enumerate(c) => (c, What::Enumerate),
        Command::Count(c) => (c, What::Count),
        Command::Faq { emit_cover, common } => (common, What::Faq { emit_cover: *emit_cover }),
        Command::Stats(c) => (c, What::Stats),
        Command::Plans(c) => (c, What::Plans),
        Command::Oracle(c) => (c, What::Oracle),
    };
    if common.emit_drep && !matches!(what, What::Cover) {
        return Err(CliError::Usage("--emit-drep applies to `cover` only".into()));
    }
    let spec = load_spec(&common.spec)?;
    if spec.is_faq() {
        if common.plan.is_some() || common.seed.is_some() || common.emit_drep {
            return Err(CliError::Usage(
                "--plan, --seed and --emit-drep do not apply to aggregate queries".into(),
            ));
        }
        return match spec.semiring.clone().unwrap_or(SemiringKind::SumProduct) {
            SemiringKind::Boolean => run_faq::<Boolean>(&spec, &what, common, out),
            SemiringKind::Count => run_faq::<Count>(&spec, &what, common, out),
            SemiringKind::SumProduct => run_faq::<SumProduct>(&spec, &what, common, out),
            SemiringKind::MaxProduct => run_faq::<MaxProduct>(&spec, &what, common, out),
        };
    }
    if let What::Faq { .. } = what {
        return Err(CliError::Usage("`faq` needs factor declarations".into()));
    }
    let job = prepare_join(&spec)?;
    run_join(&job, &what, common, out)
}

enum What {
    Cover,
    Check(std::path::PathBuf),
    Enumerate,
    Count,
    Faq { emit_cover: bool },
    Stats,
    Plans,
    Oracle,
}

// A natural join, possibly obtained from an equi-join.
struct JoinJob {
    query: JoinQuery,
    database: Database,
    decomposition: Decomposition,
    /// Output column order.
    order: Vec<String>,
    equi: Option<(EquiJoinQuery, Database)>,
}

fn prepare_join(spec: &JobSpec) -> Result<JoinJob, CliError> {
    let database: Database = spec.relations.iter().cloned().collect();
    let declared = spec.decomposition()?;
    if spec.is_equi() {
        if spec.query.is_some() {
            return Err(CliError::Usage("`query` cannot be combined with `atom`".into()));
        }
        let eq = EquiJoinQuery::new(spec.atoms.clone(), spec.equalities.clone())?;
        let (q, db) = to_natural_join(&eq, &database)?;
        let t = match declared {
            Some(t) => t,
            None => default_decomposition(&q)?,
        };
        check_closed_bags(&eq, &t)?;
        return Ok(JoinJob {
            order: eq.attrs(),
            query: q,
            database: db,
            decomposition: t,
            equi: Some((eq, database)),
        });
    }
    if !spec.equalities.is_empty() {
        return Err(CliError::Usage("`eq` needs `atom` declarations".into()));
    }
    let names: Vec<String> = match &spec.query {
        Some(q) => q.clone(),
        None => spec.relations.iter().map(|(n, _)| n.clone()).collect(),
    };
    if names.is_empty() {
        return Err(CliError::Validation("the spec declares no relations".into()));
    }
    let atoms = names
        .iter()
        .map(|n| {
            Ok(Atom {
                name: n.clone(),
                schema: database.get(n)?.schema().clone(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let q = JoinQuery::new(atoms)?;
    let t = match declared {
        Some(t) => t,
        None => default_decomposition(&q)?,
    };
    Ok(JoinJob {
        order: q.attrs(),
        query: q,
        database,
        decomposition: t,
        equi: None,
    })
}

// The join tree of an acyclic query, with one bag per atom.
fn default_decomposition(q: &JoinQuery) -> Result<Decomposition, CliError> {
    match gyo_join_tree(q) {
        Ok(jt) => Ok(jt.as_decomposition()),
        Err(cover_core::Error::NotAcyclic) => Err(CliError::Validation(
            "query is cyclic; declare a decomposition with `bag` and `edge`".into(),
        )),
        Err(e) => Err(e.into()),
    }
}

fn compute(job: &JoinJob, common: &Common) -> Result<Cover, CliError> {
    let plan = common.plan.as_deref().map(CoverJoinPlan::parse).transpose()?;
    let opts = ExecOptions {
        bypass_validation: false,
        join: CoverJoinOptions {
            seed: common.seed,
            ..CoverJoinOptions::default()
        },
    };
    let k = compute_cover_with(&job.query, &job.decomposition, &job.database, plan.as_ref(), &opts)?;
    Ok(Cover {
        relation: k.relation.reorder(&job.order)?,
        decomposition: k.decomposition,
    })
}

fn oracle(job: &JoinJob) -> Result<Relation, CliError> {
    let full = match &job.equi {
        Some((eq, db)) => equi_join_bruteforce(eq, db)?,
        None => {
            let rels = job.query.bind(&job.database)?;
            natural_join_bruteforce(&rels)
        }
    };
    Ok(full.reorder(&job.order)?)
}

fn write_rows(out: &mut dyn Write, header: &[String], rows: impl IntoIterator<Item = Tuple>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_io)?;
    for r in rows {
        w.write_record(r.iter().map(Value::as_str)).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

fn run_join(job: &JoinJob, what: &What, common: &Common, out: &mut dyn Write) -> Result<(), CliError> {
    let strict_check = |k: &Cover| -> Result<(), CliError> {
        let v = is_cover(&k.relation, &job.query, &job.decomposition, &job.database)?;
        if !v.is_cover() {
            return Err(CliError::Verification(format!("computed relation is not a cover: {v}")));
        }
        Ok(())
    };
    match what {
        What::Cover => {
            let k = compute(job, common)?;
            if common.strict {
                strict_check(&k)?;
            }
            if common.emit_drep {
                write!(out, "{}", cover_to_drep(&k)?)?;
            } else {
                write_relation(&k.relation, out)?;
            }
        }
        What::Check(path) => {
            let k = load_relation(path)?;
            let v = is_cover(&k, &job.query, &job.decomposition, &job.database)?;
            writeln!(out, "{v}")?;
            if !v.is_cover() {
                return Err(CliError::Verification(format!("{} is not a cover", path.display())));
            }
        }
        What::Enumerate => {
            let k = compute(job, common)?;
            let drep = if common.strict {
                cover_to_drep_strict(&k, &job.query, &job.database)?
            } else {
                cover_to_drep(&k)?
            };
            let idx: Vec<usize> = job
                .order
                .iter()
                .map(|a| drep.output_attrs.iter().position(|o| o == a).expect("output attribute"))
                .collect();
            write_rows(out, &job.order, drep.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()))?;
        }
        What::Count => {
            let k = compute(job, common)?;
            let n = if common.strict {
                count_result_strict(&k, &job.query, &job.database)?
            } else {
                count_result(&k)?
            };
            writeln!(out, "{n}")?;
        }
        What::Stats => {
            let k = compute(job, common)?;
            if common.strict {
                strict_check(&k)?;
            }
            let inst = reduce_to_acyclic(&job.query, &job.decomposition, &job.database)?;
            let source = job.equi.as_ref().map_or(&job.database, |(_, db)| db);
            writeln!(out, "relations: {}", source.len())?;
            writeln!(out, "database_size: {}", source.size())?;
            writeln!(out, "cover_size: {}", k.len())?;
            writeln!(out, "result_size: {}", count_result(&k)?)?;
            writeln!(out, "width: {}", width(&job.query, &job.decomposition)?)?;
            for (i, b) in job.decomposition.bags().iter().enumerate() {
                writeln!(out, "bag {}: {}", b.name, inst.relation(i).len())?;
            }
        }
        What::Plans => {
            let inst = reduce_to_acyclic(&job.query, &job.decomposition, &job.database)?;
            for p in enumerate_plans(&inst.join_tree)? {
                writeln!(out, "{p}")?;
            }
        }
        What::Oracle => write_relation(&oracle(job)?, out)?,
        What::Faq { .. } => unreachable!("handled by dispatch"),
    }
    Ok(())
}

fn build_faq<S: Semiring>(spec: &JobSpec) -> Result<FaqQuery<S>, CliError> {
    let factors = spec
        .factors
        .iter()
        .map(|(n, r)| Factor::from_relation::<S>(n, r))
        .collect::<Result<Vec<_>, _>>()?;
    let free = spec
        .free
        .clone()
        .ok_or_else(|| CliError::Validation("aggregate query needs a `free` line".into()))?;
    let bound = spec
        .bound
        .iter()
        .map(|(a, op)| {
            let op: AggOp = op
                .parse()
                .map_err(|_| CliError::Parse { line: 0, msg: format!("unknown aggregate `{op}` for `{a}`") })?;
            Ok((a.clone(), op))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut q = FaqQuery::new(factors, free, bound);
    q.domains = spec.domains.clone();
    q.validate()?;
    Ok(q)
}

fn run_faq<S: Semiring>(spec: &JobSpec, what: &What, common: &Common, out: &mut dyn Write) -> Result<(), CliError> {
    if !spec.relations.is_empty() || spec.is_equi() {
        return Err(CliError::Usage("aggregate specs take factors, not relations or atoms".into()));
    }
    let q = build_faq::<S>(spec)?;
    let mut table_header = q.free.clone();
    table_header.push(VALUE_COLUMN.to_string());
    let table = |rows: Vec<(Tuple, S::V)>| {
        rows.into_iter().map(|(mut t, v)| {
            t.push(Value::new(S::format(&v)));
            t
        })
    };
    if let What::Oracle = what {
        return write_rows(out, &table_header, table(faq_bruteforce(&q)?));
    }
    let residual = eliminate_bound(&q)?;
    let t = match spec.decomposition()? {
        Some(t) => t,
        None => default_decomposition(&residual.join_query())?,
    };
    let mapping: Option<&BTreeMap<String, String>> = (!spec.mapping.is_empty()).then_some(&spec.mapping);
    let set = bag_functions(&residual, &t, mapping)?;
    let k = cover_of_bag_functions::<S>(&set, &q.free)?;
    let listing_join = || {
        let rels: Vec<Relation> = (0..t.len()).map(|i| set.listing::<S>(i)).collect();
        natural_join_bruteforce(&rels.iter().collect::<Vec<_>>())
    };
    if common.strict {
        let v = check_cover(&k.cover.relation, &k.cover.decomposition, &listing_join())?;
        if !v.is_cover() {
            return Err(CliError::Verification(format!("computed relation is not a cover: {v}")));
        }
    }
    match what {
        What::Cover | What::Faq { emit_cover: true } => write_relation(&k.cover.relation, out)?,
        What::Enumerate | What::Faq { emit_cover: false } => {
            write_rows(out, &table_header, table(faq_enumerate::<S>(&k)?))?
        }
        What::Count => writeln!(out, "{}", faq_enumerate::<S>(&k)?.len())?,
        What::Check(path) => {
            let cand = load_relation(path)?;
            let v = check_cover(&cand, &k.cover.decomposition, &listing_join())?;
            writeln!(out, "{v}")?;
            if !v.is_cover() {
                return Err(CliError::Verification(format!("{} is not a cover", path.display())));
            }
        }
        What::Stats => {
            writeln!(out, "factors: {}", q.factors.len())?;
            writeln!(out, "database_size: {}", q.factors.iter().map(Factor::len).sum::<usize>())?;
            writeln!(out, "cover_size: {}", k.cover.len())?;
            writeln!(out, "result_size: {}", faq_enumerate::<S>(&k)?.len())?;
            writeln!(out, "faq_width: {}", faq_width(&q)?)?;
            for (i, b) in t.bags().iter().enumerate() {
                writeln!(out, "bag {}: {}", b.name, set.functions[i].len())?;
            }
        }
        What::Plans => {
            let jt = bags_as_join_tree(&t, &q.free)?;
            for p in enumerate_plans(&jt)? {
                writeln!(out, "{p}")?;
            }
        }
        What::Oracle => unreachable!("handled above"),
    }
    Ok(())
}
