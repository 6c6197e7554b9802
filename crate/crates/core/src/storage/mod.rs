//! Append-only persistence of trees as fixed-size cells.
//!
//! Two backends share one cell layout: [`StorageModel`], a pure in-memory
//! array of cells, and [`FileStorage`], the same bytes in a file. Cell 0
//! holds the header; nodes are written bottom-up so every child index is
//! smaller than its parent's, and written cells are never modified.

mod cell;
mod codec;
mod file;
mod model;
mod persist;

use std::io;

use thiserror::Error;

use crate::hash::HashError;
use crate::node::{Index, Node};

pub use cell::{Cell, CELL_SIZE, FORMAT_VERSION, MAGIC};
pub use cell::{TAG_BRANCH, TAG_BUD, TAG_EMPTY_BUD, TAG_EXTENDER, TAG_LEAF, TAG_VALUE};
pub use codec::{decode_node, encode_node, stored_hash, INLINE_VALUE_MAX, VALUE_CELL_PAYLOAD};
pub use file::FileStorage;
pub use model::StorageModel;
pub use persist::{
    audit, commit_node, get_enough_fuel, load_node, load_node_default, verify_root, Audit, Fuel,
    RootReport, UNBOUNDED_DEPTH,
};

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a plebeia storage file (bad magic)")]
    BadMagic,
    #[error("unsupported storage format version {0}")]
    UnsupportedVersion(u16),
    #[error("index 0 is the storage header, not a node")]
    HeaderIndex,
    #[error("index {index} out of range (next free index is {next_free})")]
    OutOfRange { index: u64, next_free: u64 },
    #[error("cell {index} has unknown tag {tag}")]
    BadTag { index: u64, tag: u8 },
    #[error("cell {0} is a value continuation cell, not a node")]
    NotANode(u64),
    #[error("cell {index} is malformed: {reason}")]
    Malformed { index: u64, reason: String },
    #[error("disk node {0:?} encountered with no storage attached")]
    Detached(Index),
    #[error("cannot commit: {0}")]
    Precondition(String),
    #[error("storage is full")]
    Full,
    #[error(transparent)]
    Hash(#[from] HashError),
}

impl StorageError {
    /// True for errors that mean the stored bytes are not a well-formed
    /// storage image, as opposed to misuse or I/O failure.
    pub fn is_corruption(&self) -> bool {
        matches!(
            self,
            StorageError::BadMagic
                | StorageError::UnsupportedVersion(_)
                | StorageError::OutOfRange { .. }
                | StorageError::BadTag { .. }
                | StorageError::NotANode(_)
                | StorageError::Malformed { .. }
        )
    }

    pub(crate) fn malformed(index: u64, reason: impl Into<String>) -> Self {
        StorageError::Malformed {
            index,
            reason: reason.into(),
        }
    }
}

/// Read access to a cell array.
pub trait CellReader: Send + Sync {
    /// One past the last allocated cell. Never less than 1.
    fn next_free(&self) -> Index;

    fn read_cell(&self, i: Index) -> Result<Cell, StorageError>;
}

/// Append access to a cell array.
pub trait Storage: CellReader {
    /// Writes `cells` at `next_free` and returns the index of the first one.
    fn append_cells(&mut self, cells: &[Cell]) -> Result<Index, StorageError>;
}

pub(crate) fn check_range(s: &dyn CellReader, i: Index) -> Result<(), StorageError> {
    if i == Index::HEADER {
        return Err(StorageError::HeaderIndex);
    }
    let next_free = s.next_free().0;
    if i.0 >= next_free {
        return Err(StorageError::OutOfRange {
            index: i.0,
            next_free,
        });
    }
    Ok(())
}

/// Optional storage used to resolve Disk nodes. Detached means pure
/// in-memory mode, where meeting a Disk node is an error.
#[derive(Clone, Copy, Default)]
pub struct StorageHandle<'a>(Option<&'a dyn CellReader>);

impl<'a> StorageHandle<'a> {
    pub fn detached() -> Self {
        StorageHandle(None)
    }

    pub fn attached(s: &'a dyn CellReader) -> Self {
        StorageHandle(Some(s))
    }

    pub fn reader(&self) -> Option<&'a dyn CellReader> {
        self.0
    }
}

impl<'a, S: CellReader> From<&'a S> for StorageHandle<'a> {
    fn from(s: &'a S) -> Self {
        StorageHandle(Some(s))
    }
}

/// Replaces a Disk node by the shallow node stored at its index. Other
/// nodes are returned unchanged.
pub fn resolve_disk(h: StorageHandle<'_>, n: &Node) -> Result<Node, StorageError> {
    match n {
        Node::Disk(i) => match h.0 {
            None => Err(StorageError::Detached(*i)),
            Some(s) => decode_node(s, *i),
        },
        other => Ok(other.clone()),
    }
}

/// Loads every Disk node below `n`, recursively.
pub fn resolve_all(h: StorageHandle<'_>, n: &Node) -> Result<Node, StorageError> {
    use std::sync::Arc;
    let n = resolve_disk(h, n)?;
    let sub = |c: &Arc<Node>| resolve_all(h, c).map(Arc::new);
    Ok(match n {
        Node::Branch {
            left,
            right,
            index,
            hash,
        } => Node::Branch {
            left: sub(&left)?,
            right: sub(&right)?,
            index,
            hash,
        },
        Node::Extender { key, child, index } => Node::Extender {
            key,
            child: sub(&child)?,
            index,
        },
        Node::Bud {
            child: Some(c),
            index,
            hash,
        } => Node::Bud {
            child: Some(sub(&c)?),
            index,
            hash,
        },
        other => other,
    })
}
