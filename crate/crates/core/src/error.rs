use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("duplicate attribute `{0}` in schema")]
    DuplicateAttribute(String),

    #[error("row has {got} values but schema has {expected} attributes")]
    ArityMismatch { expected: usize, got: usize },

    #[error("attribute sets do not cover the relation schema (missing `{0}`)")]
    SchemaNotCovered(String),

    #[error("node `{0}` is not contained in any edge")]
    UncoverableNode(String),

    #[error("instance too large for exhaustive enumeration: {what} is {size}, limit {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),

    #[error("query is not acyclic")]
    NotAcyclic,

    #[error("inputs are not consistent: {0}")]
    InconsistentInputs(String),

    #[error("unsound plan: {0}")]
    UnsoundPlan(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("not a cover: {0}")]
    NotACover(String),

    #[error("indicator projection onto disjoint attribute set")]
    EmptyIntersection,

    #[error("malformed attribute order: {0}")]
    MalformedOrder(String),

    #[error("factor over {{{0}}} is not contained in its mapped bag")]
    BadMapping(String),

    #[error("malformed signature mapping: {0}")]
    MalformedSignature(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("invalid value `{value}` for semiring {semiring}")]
    InvalidValue {
        value: String,
        semiring: &'static str,
    },

    #[error("duplicate key {0} in factor listing")]
    DuplicateFactorKey(String),

    #[error("plan syntax error: {0}")]
    PlanSyntax(String),

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{0}")]
    CsvFormat(String),
}
