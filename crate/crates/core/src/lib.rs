//! Covers of join and functional aggregate query results.
//!
//! A cover is a minimal subset of a query result that, together with a
//! decomposition of the query, still determines the whole result. This crate
//! computes covers with cover-join plans, verifies them, turns them into
//! multimap representations for constant-delay enumeration, and extends the
//! pipeline to aggregate queries over commutative semirings and to equi-joins.

pub mod coverjoin;
pub mod csvio;
pub mod decomposition;
pub mod drep;
pub mod equijoin;
pub mod error;
pub mod faq;
pub mod hypergraph;
pub mod lp;
pub mod materialize;
pub mod planner;
pub mod query;
pub mod relation;

pub use coverjoin::{cover_join, cover_join_all, is_cover, Cover, CoverVerdict};
pub use decomposition::{Decomposition, JoinTree};
pub use error::{Error, Result};
pub use query::JoinQuery;
pub use relation::{Database, Relation, Schema, Tuple, Value};
