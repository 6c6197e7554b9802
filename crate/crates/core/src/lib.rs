//! Plebeia: an authenticated nested key-value store.
//!
//! Stores are binary Patricia trees of [`Node`]s with path compression
//! (Extenders) and directory markers (Buds). Trees are edited through
//! zippers ([`cursor`]), hashed into 28-byte Merkle roots ([`hash`]) and
//! written to append-only storage ([`storage`]). [`model`] gives the
//! association-list meaning of every tree and operation and is what the
//! tests compare against.

pub mod cli;
pub mod cursor;
#[doc(hidden)]
pub mod fixtures;
pub mod hash;
pub mod model;
pub mod node;
pub mod ops;
pub mod storage;

pub use cursor::{BudZipper, Direction, Path, Zipper};
pub use hash::{merkle_hash, Blake2b28, HashPrimitive};
pub use node::{HashValue, Index, Key, Node, Side, Value};
pub use storage::{FileStorage, StorageHandle, StorageModel};
