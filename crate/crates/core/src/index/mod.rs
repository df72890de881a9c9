//! Embedded full-text index over DNDOs with typed filters and an
//! append-only analyst annotation log.

mod corpus;
pub mod snapshot;
mod store;
mod tokenize;

use std::path::PathBuf;

use thiserror::Error;

pub use corpus::{
    sort_hits, AnnotationEvent, CorpusIndex, Mutation, SearchField, SearchFilters, SearchHit,
    DEFAULT_COMMENT_CAP,
};
pub use store::{validate_name, IndexStore, DEFAULT_CHECKPOINT_EVERY, SNAPSHOT_SUFFIX, WAL_SUFFIX};
pub use tokenize::tokenize;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("query has no searchable terms")]
    EmptyQuery,
    #[error("no document `{0}`")]
    UnknownDoc(String),
    #[error("no index named `{0}`")]
    UnknownIndex(String),
    #[error("index `{0}` already exists")]
    IndexExists(String),
    #[error("invalid index name `{0}`")]
    InvalidName(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("comment of {len} bytes exceeds the {cap} byte limit")]
    CommentTooLarge { len: usize, cap: usize },
    #[error("comment is empty")]
    EmptyComment,
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("index i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
