//! Committing trees to storage and loading them back.

use std::sync::Arc;

use crate::hash::{self, HashPrimitive};
use crate::node::{find_violation, HashValue, Index, Node};

use super::cell::{TAG_EXTENDER, TAG_VALUE};
use super::codec::{decode_node, encode_node, stored_hash, VALUE_CELL_PAYLOAD};
use super::{check_range, CellReader, Storage, StorageError};

/// Recursion budget for loading. Each decoded node costs one unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fuel(pub u64);

/// Depth limit meaning "load everything".
pub const UNBOUNDED_DEPTH: usize = usize::MAX;

/// Writes every node of `n` that is not yet indexed, children before
/// parents, and returns the tree with all nodes indexed and hashed plus
/// the root's index.
///
/// Subtrees that are already indexed (including Disk references) are
/// not written again. Missing hashes are computed; present ones are
/// trusted.
pub fn commit_node<S: Storage>(
    s: &mut S,
    p: &dyn HashPrimitive,
    n: &Node,
) -> Result<(Node, Index), StorageError> {
    if let Some(rule) = find_violation(n) {
        return Err(StorageError::Precondition(rule.to_string()));
    }
    let (node, _) = commit_rec(s, p, n)?;
    let i = node.index().expect("committed node is indexed");
    Ok((node, i))
}

fn known_hash(s: &dyn CellReader, n: &Node) -> Result<HashValue, StorageError> {
    match n {
        Node::Disk(i) => stored_hash(s, *i),
        Node::Extender { key, child, .. } => Ok(hash::extender_hash(&known_hash(s, child)?, key)?),
        other => other
            .hash_field()
            .cloned()
            .ok_or_else(|| StorageError::Precondition("indexed node without a hash".into())),
    }
}

fn commit_rec<S: Storage>(
    s: &mut S,
    p: &dyn HashPrimitive,
    n: &Node,
) -> Result<(Node, HashValue), StorageError> {
    if let Some(i) = n.index() {
        check_range(s, i)
            .map_err(|_| StorageError::Precondition(format!("index {} is not allocated", i.0)))?;
        return Ok((n.clone(), known_hash(s, n)?));
    }
    let mut child = |c: &Arc<Node>| -> Result<(Arc<Node>, HashValue), StorageError> {
        if c.index().is_some() {
            check_range(s, c.index().unwrap()).map_err(|_| {
                StorageError::Precondition(format!("index {} is not allocated", c.index().unwrap().0))
            })?;
            return Ok((c.clone(), known_hash(s, c)?));
        }
        let (c, h) = commit_rec(s, p, c)?;
        Ok((Arc::new(c), h))
    };
    let (mut node, h) = match n {
        Node::Leaf { value, hash, .. } => {
            let h = hash.clone().unwrap_or_else(|| hash::leaf_hash(p, value));
            (
                Node::Leaf {
                    value: value.clone(),
                    index: None,
                    hash: Some(h.clone()),
                },
                h,
            )
        }
        Node::Branch {
            left, right, hash, ..
        } => {
            let (l, hl) = child(left)?;
            let (r, hr) = child(right)?;
            let h = hash.clone().unwrap_or_else(|| hash::branch_hash(p, &hl, &hr));
            (
                Node::Branch {
                    left: l,
                    right: r,
                    index: None,
                    hash: Some(h.clone()),
                },
                h,
            )
        }
        Node::Extender { key, child: c, .. } => {
            let (c, hc) = child(c)?;
            let h = hash::extender_hash(&hc, key)?;
            (
                Node::Extender {
                    key: key.clone(),
                    child: c,
                    index: None,
                },
                h,
            )
        }
        Node::Bud { child: None, .. } => {
            let h = HashValue::zero();
            (
                Node::Bud {
                    child: None,
                    index: None,
                    hash: Some(h.clone()),
                },
                h,
            )
        }
        Node::Bud {
            child: Some(c),
            hash,
            ..
        } => {
            let (c, hc) = child(c)?;
            let h = hash.clone().unwrap_or_else(|| hash::bud_hash(p, Some(&hc)));
            (
                Node::Bud {
                    child: Some(c),
                    index: None,
                    hash: Some(h.clone()),
                },
                h,
            )
        }
        Node::Disk(_) => unreachable!("disk nodes are indexed"),
    };
    let i = encode_node(s, &node)?;
    match &mut node {
        Node::Leaf { index, .. }
        | Node::Branch { index, .. }
        | Node::Extender { index, .. }
        | Node::Bud { index, .. } => *index = Some(i),
        Node::Disk(_) => unreachable!(),
    }
    Ok((node, h))
}

/// Loads the node at `i`, loading children recursively while the depth is
/// below `depth_limit` and leaving deeper children as Disk references.
///
/// Returns `Ok(None)` when `fuel` runs out before loading completes.
/// Malformed cells are errors.
pub fn load_node(
    s: &dyn CellReader,
    i: Index,
    fuel: Fuel,
    depth_limit: usize,
) -> Result<Option<Node>, StorageError> {
    let mut remaining = fuel.0;
    load_rec(s, i, &mut remaining, 0, depth_limit)
}

fn load_rec(
    s: &dyn CellReader,
    i: Index,
    fuel: &mut u64,
    depth: usize,
    limit: usize,
) -> Result<Option<Node>, StorageError> {
    if *fuel == 0 {
        return Ok(None);
    }
    *fuel -= 1;
    let n = decode_node(s, i)?;
    if depth >= limit {
        return Ok(Some(n));
    }
    let mut sub = |c: &Arc<Node>| -> Result<Option<Arc<Node>>, StorageError> {
        match c.as_ref() {
            Node::Disk(j) => Ok(load_rec(s, *j, fuel, depth + 1, limit)?.map(Arc::new)),
            _ => Ok(Some(c.clone())),
        }
    };
    Ok(Some(match n {
        Node::Branch {
            left,
            right,
            index,
            hash,
        } => {
            let Some(left) = sub(&left)? else { return Ok(None) };
            let Some(right) = sub(&right)? else { return Ok(None) };
            Node::Branch {
                left,
                right,
                index,
                hash,
            }
        }
        Node::Extender { key, child, index } => {
            let Some(child) = sub(&child)? else { return Ok(None) };
            Node::Extender { key, child, index }
        }
        Node::Bud {
            child: Some(c),
            index,
            hash,
        } => {
            let Some(c) = sub(&c)? else { return Ok(None) };
            Node::Bud {
                child: Some(c),
                index,
                hash,
            }
        }
        other => other,
    }))
}

/// A fuel amount sufficient to fully load any tree written by
/// [`commit_node`] whose subtrees are not shared: the number of allocated
/// cells, since every load step decodes a distinct node cell.
pub fn get_enough_fuel(s: &dyn CellReader) -> Fuel {
    Fuel(s.next_free().0)
}

/// Fully loads the tree at `i` with [`get_enough_fuel`].
pub fn load_node_default(s: &dyn CellReader, i: Index) -> Result<Node, StorageError> {
    load_node(s, i, get_enough_fuel(s), UNBOUNDED_DEPTH)?
        .ok_or_else(|| StorageError::malformed(i.0, "fuel exhausted while loading"))
}

/// Result of scanning every allocated cell.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Audit {
    pub node_cells: u64,
    pub value_cells: u64,
    /// `(cell index, description)` for every problem found.
    pub issues: Vec<(u64, String)>,
}

impl Audit {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks every allocated cell: node cells decode (so all references point
/// to earlier cells of an allowed tag), every value cell belongs to exactly
/// one leaf, and every stored hash agrees with the hashes of its children.
pub fn audit(s: &dyn CellReader, p: &dyn HashPrimitive) -> Result<Audit, StorageError> {
    let next_free = s.next_free().0;
    let mut a = Audit::default();
    let mut value_owner: Vec<u32> = vec![0; next_free as usize];
    for j in 1..next_free {
        let i = Index(j);
        let tag = s.read_cell(i)?.tag();
        if tag == TAG_VALUE {
            a.value_cells += 1;
            continue;
        }
        let n = match decode_node(s, i) {
            Ok(n) => n,
            Err(StorageError::Io(e)) => return Err(StorageError::Io(e)),
            Err(e) => {
                a.issues.push((j, e.to_string()));
                continue;
            }
        };
        a.node_cells += 1;
        if let Node::Leaf { value, .. } = &n {
            let ncells = value.len().div_ceil(VALUE_CELL_PAYLOAD) as u64;
            if value.len() > super::codec::INLINE_VALUE_MAX {
                for k in j - ncells..j {
                    value_owner[k as usize] += 1;
                }
            }
        }
        if let Err(msg) = check_local_hash(s, p, &n) {
            a.issues.push((j, msg));
        }
    }
    for j in 1..next_free {
        if s.read_cell(Index(j))?.tag() == TAG_VALUE && value_owner[j as usize] != 1 {
            a.issues.push((j, format!("value cell owned by {} leaves", value_owner[j as usize])));
        }
    }
    Ok(a)
}

fn check_local_hash(s: &dyn CellReader, p: &dyn HashPrimitive, n: &Node) -> Result<(), String> {
    let child = |c: &Node| -> Result<HashValue, String> {
        known_hash(s, c).map_err(|e| e.to_string())
    };
    let expect = match n {
        Node::Leaf { value, .. } => hash::leaf_hash(p, value),
        Node::Branch { left, right, .. } => hash::branch_hash(p, &child(left)?, &child(right)?),
        Node::Bud { child: None, .. } => HashValue::zero(),
        Node::Bud { child: Some(c), .. } => hash::bud_hash(p, Some(&child(c)?)),
        Node::Extender { child: c, .. } => {
            let ci = c.index().expect("decoded child is a disk reference");
            if s.read_cell(ci).map_err(|e| e.to_string())?.tag() == TAG_EXTENDER {
                return Err("extender under extender".into());
            }
            return Ok(());
        }
        Node::Disk(_) => unreachable!(),
    };
    if n.hash_field() != Some(&expect) {
        return Err(format!(
            "stored hash {} does not match computed hash {}",
            n.hash_field().map(|h| h.to_hex()).unwrap_or_default(),
            expect.to_hex()
        ));
    }
    Ok(())
}

/// Result of checking one committed root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootReport {
    pub nodes: usize,
    pub hash: Option<HashValue>,
    pub violations: Vec<String>,
}

/// Fully loads the tree at `root` and checks that it decodes, that it
/// satisfies the structural invariants, that it is rooted at a bud, and
/// that its recomputed Merkle hash equals the stored one.
pub fn verify_root(
    s: &dyn CellReader,
    p: &dyn HashPrimitive,
    root: Index,
) -> Result<RootReport, StorageError> {
    let mut report = RootReport {
        nodes: 0,
        hash: None,
        violations: Vec::new(),
    };
    let tree = match load_node(s, root, get_enough_fuel(s), UNBOUNDED_DEPTH) {
        Ok(Some(t)) => t,
        Ok(None) => {
            report.violations.push("fuel exhausted while loading".into());
            return Ok(report);
        }
        Err(StorageError::Io(e)) => return Err(StorageError::Io(e)),
        Err(e) => {
            report.violations.push(e.to_string());
            return Ok(report);
        }
    };
    report.nodes = tree.size();
    if !tree.is_bud() {
        report.violations.push(format!("root {} is not a bud", root.0));
    }
    if let Some(rule) = find_violation(&tree) {
        report.violations.push(rule.to_string());
    }
    let computed = hash::merkle_hash(p, &tree)?;
    let stored = stored_hash(s, root)?;
    if computed != stored {
        report.violations.push(format!(
            "stored root hash {} differs from computed {}",
            stored, computed
        ));
    }
    report.hash = Some(computed);
    Ok(report)
}
