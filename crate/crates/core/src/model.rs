//! What a tree means: nested key-value stores as sorted, prefix-free
//! association lists, and reference versions of every operation.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::cursor::{go_up_to_bud_or_top, key_to_nearest_bud, BudZipper, Path, Zipper};
use crate::node::{Index, Key, Node, Side, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NestedValue {
    Value(Value),
    Map(NestedStore),
}

/// Sorted, prefix-free, nonempty keys (see [`is_valid_model`]).
pub type NestedStore = Vec<(Key, NestedValue)>;

/// One entry per enclosing bud, innermost first: the key from that bud
/// down to the cursor and the bud's store without that key.
pub type PathModel = Vec<(Key, NestedStore)>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ZipperModel {
    pub path: PathModel,
    pub node: NestedStore,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("disk node {0:?} must be loaded before modelizing")]
    Disk(Index),
    #[error("modelize_node expects a bud")]
    NotABud,
}

fn prefix_related(a: &Key, b: &Key) -> bool {
    a.is_prefix_of(b) || b.is_prefix_of(a)
}

/// Keys nonempty, strictly increasing, pairwise prefix-free, and the same
/// for every nested store.
pub fn is_valid_model(l: &[(Key, NestedValue)]) -> bool {
    l.iter().all(|(k, v)| {
        !k.is_empty()
            && match v {
                NestedValue::Map(m) => is_valid_model(m),
                NestedValue::Value(_) => true,
            }
    }) && l
        .windows(2)
        .all(|w| w[0].0 < w[1].0 && !prefix_related(&w[0].0, &w[1].0))
}

pub fn prepend_all(k: &[Side], m: NestedStore) -> NestedStore {
    m.into_iter().map(|(k2, v)| (Key::from(k).join(k2.sides()), v)).collect()
}

/// The model of any node, with the node itself at the empty key:
/// a Leaf is `[([], Value v)]` and a Bud is `[([], Map …)]`.
pub fn modelize_node_aux(n: &Node) -> Result<NestedStore, ModelError> {
    Ok(match n {
        Node::Leaf { value, .. } => vec![(Key::empty(), NestedValue::Value(value.clone()))],
        Node::Branch { left, right, .. } => {
            let mut l = prepend_all(&[Side::L], modelize_node_aux(left)?);
            l.extend(prepend_all(&[Side::R], modelize_node_aux(right)?));
            l
        }
        Node::Extender { key, child, .. } => prepend_all(key.sides(), modelize_node_aux(child)?),
        Node::Bud { child: None, .. } => vec![(Key::empty(), NestedValue::Map(vec![]))],
        Node::Bud { child: Some(c), .. } => {
            vec![(Key::empty(), NestedValue::Map(modelize_node_aux(c)?))]
        }
        Node::Disk(i) => return Err(ModelError::Disk(*i)),
    })
}

/// The store a Bud holds.
pub fn modelize_node(n: &Node) -> Result<NestedStore, ModelError> {
    if !n.is_bud() {
        return Err(ModelError::NotABud);
    }
    match modelize_node_aux(n)?.pop() {
        Some((_, NestedValue::Map(m))) => Ok(m),
        _ => unreachable!("a bud models as a single map entry"),
    }
}

fn remove_assoc(l: NestedStore, k: &Key) -> NestedStore {
    let mut l = l;
    if let Some(pos) = l.iter().position(|(k2, _)| k2 == k) {
        l.remove(pos);
    }
    l
}

/// Puts a dummy leaf at the cursor, climbs to the nearest bud (or the
/// top), models that level and drops the dummy's key; then repeats from
/// that bud.
pub fn modelize_path(p: &Path) -> Result<PathModel, ModelError> {
    let mut out = Vec::new();
    let mut p = p.clone();
    while !p.is_top() {
        let z = go_up_to_bud_or_top(&Zipper::new(p.clone(), Node::leaf(Vec::new())));
        let n = if z.focus.is_bud() {
            z.focus
        } else {
            Node::bud(Some(z.focus))
        };
        let k = key_to_nearest_bud(&p);
        out.push((k.clone(), remove_assoc(modelize_node(&n)?, &k)));
        p = z.path;
    }
    Ok(out)
}

/// Same result as [`modelize_path`], computed by collecting the untracked
/// siblings of each frame instead of rebuilding nodes.
pub fn modelize_path_direct(p: &Path) -> Result<PathModel, ModelError> {
    let mut out = Vec::new();
    let mut key_rev: Vec<Side> = Vec::new();
    let mut acc: NestedStore = Vec::new();
    let mut p = p;
    loop {
        match p {
            Path::Top | Path::Budded { .. } => {
                if matches!(p, Path::Budded { .. }) || !key_rev.is_empty() {
                    key_rev.reverse();
                    out.push((Key::new(std::mem::take(&mut key_rev)), std::mem::take(&mut acc)));
                }
                match p {
                    Path::Budded { parent, .. } => p = parent,
                    _ => break,
                }
            }
            Path::Left { parent, right, .. } => {
                key_rev.push(Side::L);
                let mut l = prepend_all(&[Side::L], acc);
                l.extend(prepend_all(&[Side::R], modelize_node_aux(right)?));
                acc = l;
                p = parent;
            }
            Path::Right { left, parent, .. } => {
                key_rev.push(Side::R);
                let mut l = prepend_all(&[Side::L], modelize_node_aux(left)?);
                l.extend(prepend_all(&[Side::R], acc));
                acc = l;
                p = parent;
            }
            Path::Extended { parent, key, .. } => {
                key_rev.extend(key.sides().iter().rev());
                acc = prepend_all(key.sides(), acc);
                p = parent;
            }
        }
    }
    Ok(out)
}

pub fn modelize(z: &BudZipper) -> Result<ZipperModel, ModelError> {
    Ok(ZipperModel {
        path: modelize_path(z.path())?,
        node: modelize_node(z.focus())?,
    })
}

fn position(m: &NestedStore, k: &Key) -> Result<usize, usize> {
    m.binary_search_by(|(k2, _)| k2.cmp(k))
}

pub fn m_lookup<'a>(m: &'a ZipperModel, k: &Key) -> Option<&'a NestedValue> {
    position(&m.node, k).ok().map(|i| &m.node[i].1)
}

/// Fails when `k` is already bound or is a prefix or extension of a bound
/// key.
pub fn m_insert(m: &ZipperModel, k: &Key, v: NestedValue) -> Option<ZipperModel> {
    if k.is_empty() || m.node.iter().any(|(k2, _)| prefix_related(k, k2)) {
        return None;
    }
    let mut out = m.clone();
    let at = position(&out.node, k).unwrap_err();
    out.node.insert(at, (k.clone(), v));
    Some(out)
}

pub fn m_create_subtree(m: &ZipperModel, k: &Key) -> Option<ZipperModel> {
    m_insert(m, k, NestedValue::Map(Vec::new()))
}

/// Replaces an existing value; fails on a missing key or a map.
pub fn m_update(m: &ZipperModel, k: &Key, v: Value) -> Option<ZipperModel> {
    let i = position(&m.node, k).ok()?;
    if !matches!(m.node[i].1, NestedValue::Value(_)) {
        return None;
    }
    let mut out = m.clone();
    out.node[i].1 = NestedValue::Value(v);
    Some(out)
}

pub fn m_delete(m: &ZipperModel, k: &Key) -> Option<ZipperModel> {
    let i = position(&m.node, k).ok()?;
    let mut out = m.clone();
    out.node.remove(i);
    Some(out)
}

pub fn m_subtree(m: &ZipperModel, k: &Key) -> Option<NestedStore> {
    match m_lookup(m, k)? {
        NestedValue::Map(s) => Some(s.clone()),
        NestedValue::Value(_) => None,
    }
}

/// The model of the zipper moved down to the map at `k`.
pub fn m_descend(m: &ZipperModel, k: &Key) -> Option<ZipperModel> {
    let node = m_subtree(m, k)?;
    let mut path = vec![(k.clone(), remove_assoc(m.node.clone(), k))];
    path.extend(m.path.iter().cloned());
    Some(ZipperModel { path, node })
}

/// The smallest tree with the given store: a Bud over Branches where keys
/// diverge and Extenders over shared runs. Fields are empty.
pub fn canonical_bud(m: &NestedStore) -> Node {
    let entries: Vec<(&[Side], &NestedValue)> = m.iter().map(|(k, v)| (k.sides(), v)).collect();
    if entries.is_empty() {
        Node::empty_bud()
    } else {
        Node::bud(Some(canonical_aux(&entries)))
    }
}

fn strip<'a>(es: &[(&'a [Side], &'a NestedValue)]) -> Vec<(&'a [Side], &'a NestedValue)> {
    es.iter().map(|(k, v)| (&k[1..], *v)).collect()
}

fn canonical_aux(entries: &[(&[Side], &NestedValue)]) -> Node {
    if let [(k, v)] = entries {
        if k.is_empty() {
            return match v {
                NestedValue::Value(v) => Node::leaf(v.clone()),
                NestedValue::Map(m) => canonical_bud(m),
            };
        }
    }
    let first = entries[0].0;
    let common = entries.iter().fold(first.len(), |n, (k, _)| {
        n.min(first.iter().zip(k.iter()).take_while(|(a, b)| a == b).count())
    });
    if common > 0 {
        let rest: Vec<_> = entries.iter().map(|(k, v)| (&k[common..], *v)).collect();
        return Node::extender(Key::from(&first[..common]), canonical_aux(&rest));
    }
    let split = entries.iter().position(|(k, _)| k[0] == Side::R).expect("keys diverge");
    Node::Branch {
        left: Arc::new(canonical_aux(&strip(&entries[..split]))),
        right: Arc::new(canonical_aux(&strip(&entries[split..]))),
        index: None,
        hash: None,
    }
}

/// One line per binding, keys as L/R strings: `KEY\t0x<hex>` for values,
/// `KEY\t{}` for empty maps, and `KEY\t{...}` for other maps followed by
/// their bindings with keys written `KEY/SUB`.
pub fn render_store(m: &NestedStore) -> String {
    let mut out = String::new();
    render_into(&mut out, "", m);
    out
}

fn render_into(out: &mut String, prefix: &str, m: &NestedStore) {
    for (k, v) in m {
        let key = format!("{prefix}{k}");
        match v {
            NestedValue::Value(v) => {
                let _ = writeln!(out, "{key}\t0x{}", hex::encode(v));
            }
            NestedValue::Map(sub) if sub.is_empty() => {
                let _ = writeln!(out, "{key}\t{{}}");
            }
            NestedValue::Map(sub) => {
                let _ = writeln!(out, "{key}\t{{...}}");
                render_into(out, &format!("{key}/"), sub);
            }
        }
    }
}
