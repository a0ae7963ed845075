//! Cover-join plans over join trees and end-to-end cover computation.

use std::collections::BTreeSet;
use std::fmt;

use crate::coverjoin::{cover_join_all, cover_join_with, Cover, CoverJoinOptions};
use crate::decomposition::{Decomposition, JoinTree};
use crate::error::{Error, Result};
use crate::materialize::{reduce_to_acyclic, AcyclicInstance};
use crate::query::JoinQuery;
use crate::relation::{Database, Relation};

/// Default cap on join tree size for [`enumerate_plans`].
pub const DEFAULT_PLAN_BOUND: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CoverJoinPlan {
    Leaf(String),
    Join {
        left: Box<CoverJoinPlan>,
        right: Box<CoverJoinPlan>,
        /// Join tree edge cut by this split, as node names. Parsed plans
        /// leave it empty.
        edge: Option<(String, String)>,
    },
}

impl CoverJoinPlan {
    pub fn join(left: CoverJoinPlan, right: CoverJoinPlan) -> Self {
        CoverJoinPlan::Join {
            left: Box::new(left),
            right: Box::new(right),
            edge: None,
        }
    }

    pub fn leaf(name: impl Into<String>) -> Self {
        CoverJoinPlan::Leaf(name.into())
    }

    /// Leaf names from left to right.
    pub fn leaves(&self) -> Vec<String> {
        match self {
            CoverJoinPlan::Leaf(n) => vec![n.clone()],
            CoverJoinPlan::Join { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }

    /// Parses `((R1*R2)*R3)`. A bare chain `R1*R2*R3` associates to the left.
    pub fn parse(s: &str) -> Result<Self> {
        let mut p = Parser {
            chars: s.chars().filter(|c| !c.is_whitespace()).collect(),
            pos: 0,
        };
        let plan = p.expr()?;
        if p.pos != p.chars.len() {
            return Err(Error::PlanSyntax(format!("unexpected `{}` at offset {}", p.chars[p.pos], p.pos)));
        }
        Ok(plan)
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn expr(&mut self) -> Result<CoverJoinPlan> {
        let mut acc = self.term()?;
        while self.peek() == Some('*') {
            self.pos += 1;
            let rhs = self.term()?;
            acc = CoverJoinPlan::join(acc, rhs);
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<CoverJoinPlan> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(Error::PlanSyntax(format!("expected `)` at offset {}", self.pos)));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if is_ident(c) => {
                let start = self.pos;
                while self.peek().is_some_and(is_ident) {
                    self.pos += 1;
                }
                Ok(CoverJoinPlan::Leaf(self.chars[start..self.pos].iter().collect()))
            }
            Some(c) => Err(Error::PlanSyntax(format!("unexpected `{c}` at offset {}", self.pos))),
            None => Err(Error::PlanSyntax("unexpected end of plan".into())),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }
}

fn is_ident(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\'' || c == '.' || c == '-'
}

impl fmt::Display for CoverJoinPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoverJoinPlan::Leaf(n) => f.write_str(n),
            CoverJoinPlan::Join { left, right, .. } => write!(f, "({left}*{right})"),
        }
    }
}

// Connected components of `nodes` in the tree after removing `cut`.
fn component(jt: &JoinTree, nodes: &BTreeSet<usize>, start: usize, cut: (usize, usize)) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(x) = stack.pop() {
        for y in jt.neighbors(x) {
            if !nodes.contains(&y) || (x, y) == cut || (y, x) == cut {
                continue;
            }
            if seen.insert(y) {
                stack.push(y);
            }
        }
    }
    seen
}

fn internal_edges(jt: &JoinTree, nodes: &BTreeSet<usize>) -> Vec<(usize, usize)> {
    jt.edges
        .iter()
        .copied()
        .filter(|(a, b)| nodes.contains(a) && nodes.contains(b))
        .collect()
}

/// All cover-join plans over a join tree. The two sides of every split are
/// ordered so that the side holding the lower-indexed node comes first.
pub fn enumerate_plans(jt: &JoinTree) -> Result<Vec<CoverJoinPlan>> {
    enumerate_plans_bounded(jt, DEFAULT_PLAN_BOUND)
}

pub fn enumerate_plans_bounded(jt: &JoinTree, bound: usize) -> Result<Vec<CoverJoinPlan>> {
    if jt.nodes.len() > bound {
        return Err(Error::TooLarge {
            what: "join tree nodes",
            size: jt.nodes.len(),
            limit: bound,
        });
    }
    if jt.nodes.is_empty() {
        return Ok(Vec::new());
    }
    let all: BTreeSet<usize> = (0..jt.nodes.len()).collect();
    Ok(plans_over(jt, &all))
}

fn plans_over(jt: &JoinTree, nodes: &BTreeSet<usize>) -> Vec<CoverJoinPlan> {
    if nodes.len() == 1 {
        let n = *nodes.iter().next().expect("one node");
        return vec![CoverJoinPlan::Leaf(jt.nodes[n].name.clone())];
    }
    let mut out = Vec::new();
    for (a, b) in internal_edges(jt, nodes) {
        let ca = component(jt, nodes, a, (a, b));
        let cb: BTreeSet<usize> = nodes.difference(&ca).copied().collect();
        let (l, r, e) = if ca.first() < cb.first() { (ca, cb, (a, b)) } else { (cb, ca, (b, a)) };
        let edge = (jt.nodes[e.0].name.clone(), jt.nodes[e.1].name.clone());
        let rights = plans_over(jt, &r);
        for lp in plans_over(jt, &l) {
            for rp in &rights {
                out.push(CoverJoinPlan::Join {
                    left: Box::new(lp.clone()),
                    right: Box::new(rp.clone()),
                    edge: Some(edge.clone()),
                });
            }
        }
    }
    out
}

/// True iff every split of the plan removes exactly one edge of the
/// corresponding subtree of `jt`, and the leaves are the tree's nodes.
pub fn validate_plan(plan: &CoverJoinPlan, jt: &JoinTree) -> bool {
    let mut idx = Vec::new();
    for name in plan.leaves() {
        match jt.node_index(&name) {
            Some(i) if !idx.contains(&i) => idx.push(i),
            _ => return false,
        }
    }
    if idx.len() != jt.nodes.len() {
        return false;
    }
    valid_over(plan, jt)
}

fn leaf_set(plan: &CoverJoinPlan, jt: &JoinTree) -> BTreeSet<usize> {
    plan.leaves()
        .iter()
        .map(|n| jt.node_index(n).expect("checked"))
        .collect()
}

fn valid_over(plan: &CoverJoinPlan, jt: &JoinTree) -> bool {
    let CoverJoinPlan::Join { left, right, .. } = plan else {
        return true;
    };
    let l = leaf_set(left, jt);
    let r = leaf_set(right, jt);
    let crossing = jt
        .edges
        .iter()
        .filter(|(a, b)| (l.contains(a) && r.contains(b)) || (l.contains(b) && r.contains(a)))
        .count();
    let connected = |s: &BTreeSet<usize>| {
        let start = *s.first().expect("nonempty");
        component(jt, s, start, (usize::MAX, usize::MAX)).len() == s.len()
    };
    crossing == 1 && connected(&l) && connected(&r) && valid_over(left, jt) && valid_over(right, jt)
}

/// Left-deep plan following the depth-first preorder of the decomposition
/// underlying the instance.
pub fn default_plan(inst: &AcyclicInstance) -> Result<CoverJoinPlan> {
    let rooted = inst.decomposition.rooted()?;
    let name = |i: usize| inst.join_tree.nodes[i].name.clone();
    let mut it = rooted.preorder.iter();
    let first = *it.next().expect("nonempty decomposition");
    let mut plan = CoverJoinPlan::Leaf(name(first));
    for &x in it {
        let p = rooted.parent[x].expect("non-root has a parent");
        plan = CoverJoinPlan::Join {
            left: Box::new(plan),
            right: Box::new(CoverJoinPlan::Leaf(name(x))),
            edge: Some((name(p), name(x))),
        };
    }
    Ok(plan)
}

#[derive(Clone, Debug, Default)]
pub struct ExecOptions {
    /// Runs the plan even if it does not follow the join tree.
    pub bypass_validation: bool,
    pub join: CoverJoinOptions,
}

/// Runs a plan with the deterministic operator.
pub fn execute_plan(plan: &CoverJoinPlan, inst: &AcyclicInstance) -> Result<Cover> {
    execute_plan_with(plan, inst, &ExecOptions::default())
}

pub fn execute_plan_with(plan: &CoverJoinPlan, inst: &AcyclicInstance, opts: &ExecOptions) -> Result<Cover> {
    check_plan(plan, inst, opts.bypass_validation)?;
    let rel = eval(plan, inst, &opts.join)?;
    Ok(Cover {
        relation: rel.reorder(&inst.attr_order)?,
        decomposition: inst.decomposition.clone(),
    })
}

fn check_plan(plan: &CoverJoinPlan, inst: &AcyclicInstance, bypass: bool) -> Result<()> {
    if bypass {
        let mut leaves = plan.leaves();
        if leaves.iter().any(|n| inst.join_tree.node_index(n).is_none()) {
            return Err(Error::UnsoundPlan(format!("{plan} names an unknown relation")));
        }
        leaves.sort();
        leaves.dedup();
        if leaves.len() != inst.join_tree.nodes.len() {
            return Err(Error::UnsoundPlan(format!("{plan} does not use every relation once")));
        }
        return Ok(());
    }
    if !validate_plan(plan, &inst.join_tree) {
        return Err(Error::UnsoundPlan(format!("{plan} does not follow the join tree")));
    }
    Ok(())
}

fn eval(plan: &CoverJoinPlan, inst: &AcyclicInstance, opts: &CoverJoinOptions) -> Result<Relation> {
    match plan {
        CoverJoinPlan::Leaf(n) => Ok(inst.database.get(n)?.clone()),
        CoverJoinPlan::Join { left, right, .. } => {
            let l = eval(left, inst, opts)?;
            let r = eval(right, inst, opts)?;
            cover_join_with(&l, &r, opts)
        }
    }
}

/// Which covers each operator may return when exhausting a plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoverChoice {
    All,
    MinimumSize,
}

/// Every relation the plan can return when each operator may return any of
/// the covers allowed by `choice`. Only feasible on tiny instances.
pub fn execute_plan_all(
    plan: &CoverJoinPlan,
    inst: &AcyclicInstance,
    choice: CoverChoice,
    bypass_validation: bool,
) -> Result<Vec<Relation>> {
    check_plan(plan, inst, bypass_validation)?;
    let mut out: Vec<Relation> = eval_all(plan, inst, choice)?
        .into_iter()
        .map(|r| r.reorder(&inst.attr_order))
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.rows().cmp(b.rows()));
    out.dedup();
    Ok(out)
}

fn eval_all(plan: &CoverJoinPlan, inst: &AcyclicInstance, choice: CoverChoice) -> Result<Vec<Relation>> {
    match plan {
        CoverJoinPlan::Leaf(n) => Ok(vec![inst.database.get(n)?.clone()]),
        CoverJoinPlan::Join { left, right, .. } => {
            let ls = eval_all(left, inst, choice)?;
            let rs = eval_all(right, inst, choice)?;
            let mut out = Vec::new();
            for l in &ls {
                for r in &rs {
                    let mut ks = cover_join_all(l, r)?;
                    if choice == CoverChoice::MinimumSize {
                        let min = ks.iter().map(Relation::len).min().unwrap_or(0);
                        ks.retain(|k| k.len() == min);
                    }
                    out.extend(ks);
                }
            }
            out.sort_by(|a, b| a.rows().cmp(b.rows()));
            out.dedup();
            Ok(out)
        }
    }
}

/// Reduces to a calibrated acyclic instance over the bags of `t` and runs
/// the default plan.
pub fn compute_cover(q: &JoinQuery, t: &Decomposition, db: &Database) -> Result<Cover> {
    compute_cover_with(q, t, db, None, &ExecOptions::default())
}

pub fn compute_cover_with(
    q: &JoinQuery,
    t: &Decomposition,
    db: &Database,
    plan: Option<&CoverJoinPlan>,
    opts: &ExecOptions,
) -> Result<Cover> {
    let inst = reduce_to_acyclic(q, t, db)?;
    let plan = match plan {
        Some(p) => p.clone(),
        None => default_plan(&inst)?,
    };
    execute_plan_with(&plan, &inst, opts)
}
