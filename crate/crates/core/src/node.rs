//! Tree node types and the structural invariants SI1–SI6.

use std::fmt;
use std::sync::Arc;

/// Longest key, in bits, accepted anywhere in the store.
///
/// At this length an Extender's packed key still fits a single storage
/// cell, and every Extender hash stays below 256 bytes so its length fits
/// the single byte used by the Branch hash preimage.
pub const MAX_KEY_BITS: usize = 424;

/// One edge direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    L,
    R,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::L => Side::R,
            Side::R => Side::L,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Side::L => 0,
            Side::R => 1,
        }
    }

    pub fn from_bit(bit: bool) -> Side {
        if bit {
            Side::R
        } else {
            Side::L
        }
    }
}

/// A sequence of sides. The derived order is lexicographic with `L < R`
/// and a proper prefix sorting before its extensions.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(Vec<Side>);

impl Key {
    pub fn new(sides: Vec<Side>) -> Self {
        Key(sides)
    }

    pub fn empty() -> Self {
        Key(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sides(&self) -> &[Side] {
        &self.0
    }

    pub fn into_sides(self) -> Vec<Side> {
        self.0
    }

    /// `self ++ other`
    pub fn join(&self, other: &[Side]) -> Key {
        let mut v = Vec::with_capacity(self.0.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(other);
        Key(v)
    }

    pub fn is_prefix_of(&self, other: &Key) -> bool {
        other.0.starts_with(&self.0)
    }

    /// Parses a string over `L`/`R`.
    pub fn parse_lr(s: &str) -> Option<Key> {
        s.chars()
            .map(|c| match c {
                'L' => Some(Side::L),
                'R' => Some(Side::R),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Key)
    }
}

impl From<&[Side]> for Key {
    fn from(s: &[Side]) -> Self {
        Key(s.to_vec())
    }
}

impl From<Vec<Side>> for Key {
    fn from(s: Vec<Side>) -> Self {
        Key(s)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            f.write_str(match s {
                Side::L => "L",
                Side::R => "R",
            })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self)
    }
}

/// Opaque payload stored at a leaf.
pub type Value = Vec<u8>;

/// A Merkle hash. 28 bytes for Leaf, Branch and Bud nodes, longer for
/// Extenders (child hash followed by the encoded key).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct HashValue(Vec<u8>);

impl HashValue {
    pub const LEN: usize = 28;

    pub fn new(bytes: Vec<u8>) -> Self {
        HashValue(bytes)
    }

    pub fn zero() -> Self {
        HashValue(vec![0; Self::LEN])
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl fmt::Debug for HashValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.to_hex())
    }
}

impl fmt::Display for HashValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Cell address in storage. Index 0 is the header.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Index(pub u64);

impl Index {
    pub const HEADER: Index = Index(0);

    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Debug for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A Plebeia tree node.
///
/// Index and hash fields are filled lazily, when the node is written to
/// storage. Equality is structural over every field, including those.
#[derive(Clone, PartialEq, Eq)]
pub enum Node {
    Leaf {
        value: Value,
        index: Option<Index>,
        hash: Option<HashValue>,
    },
    Branch {
        left: Arc<Node>,
        right: Arc<Node>,
        index: Option<Index>,
        hash: Option<HashValue>,
    },
    Extender {
        key: Key,
        child: Arc<Node>,
        index: Option<Index>,
    },
    Bud {
        child: Option<Arc<Node>>,
        index: Option<Index>,
        hash: Option<HashValue>,
    },
    Disk(Index),
}

/// Constructor kind, ignoring payloads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Leaf,
    Branch,
    Extender,
    EmptyBud,
    Bud,
    Disk,
}

impl Node {
    pub fn leaf(value: impl Into<Value>) -> Node {
        Node::Leaf {
            value: value.into(),
            index: None,
            hash: None,
        }
    }

    pub fn branch(left: Node, right: Node) -> Node {
        Node::Branch {
            left: Arc::new(left),
            right: Arc::new(right),
            index: None,
            hash: None,
        }
    }

    pub fn extender(key: impl Into<Key>, child: Node) -> Node {
        Node::Extender {
            key: key.into(),
            child: Arc::new(child),
            index: None,
        }
    }

    pub fn bud(child: Option<Node>) -> Node {
        Node::Bud {
            child: child.map(Arc::new),
            index: None,
            hash: None,
        }
    }

    pub fn empty_bud() -> Node {
        Node::bud(None)
    }

    pub fn kind(&self) -> Kind {
        match self {
            Node::Leaf { .. } => Kind::Leaf,
            Node::Branch { .. } => Kind::Branch,
            Node::Extender { .. } => Kind::Extender,
            Node::Bud { child: None, .. } => Kind::EmptyBud,
            Node::Bud { .. } => Kind::Bud,
            Node::Disk(_) => Kind::Disk,
        }
    }

    pub fn is_bud(&self) -> bool {
        matches!(self, Node::Bud { .. })
    }

    pub fn is_extender(&self) -> bool {
        matches!(self, Node::Extender { .. })
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    pub fn is_disk(&self) -> bool {
        matches!(self, Node::Disk(_))
    }

    /// The index field (or the Disk index).
    pub fn index(&self) -> Option<Index> {
        match self {
            Node::Leaf { index, .. }
            | Node::Branch { index, .. }
            | Node::Extender { index, .. }
            | Node::Bud { index, .. } => *index,
            Node::Disk(i) => Some(*i),
        }
    }

    /// The hash field. Extenders and Disk nodes have none.
    pub fn hash_field(&self) -> Option<&HashValue> {
        match self {
            Node::Leaf { hash, .. } | Node::Branch { hash, .. } | Node::Bud { hash, .. } => {
                hash.as_ref()
            }
            Node::Extender { .. } | Node::Disk(_) => None,
        }
    }

    /// Copy of this node with index and hash fields cleared. Children are
    /// shared, not touched.
    pub fn without_fields(&self) -> Node {
        match self {
            Node::Leaf { value, .. } => Node::Leaf {
                value: value.clone(),
                index: None,
                hash: None,
            },
            Node::Branch { left, right, .. } => Node::Branch {
                left: left.clone(),
                right: right.clone(),
                index: None,
                hash: None,
            },
            Node::Extender { key, child, .. } => Node::Extender {
                key: key.clone(),
                child: child.clone(),
                index: None,
            },
            Node::Bud { child, .. } => Node::Bud {
                child: child.clone(),
                index: None,
                hash: None,
            },
            Node::Disk(i) => Node::Disk(*i),
        }
    }

    /// Structural equality ignoring the optional index and hash fields.
    /// Disk nodes compare by index.
    pub fn same_shape(&self, other: &Node) -> bool {
        match (self, other) {
            (Node::Leaf { value: a, .. }, Node::Leaf { value: b, .. }) => a == b,
            (
                Node::Branch {
                    left: l1,
                    right: r1,
                    ..
                },
                Node::Branch {
                    left: l2,
                    right: r2,
                    ..
                },
            ) => (Arc::ptr_eq(l1, l2) || l1.same_shape(l2)) && (Arc::ptr_eq(r1, r2) || r1.same_shape(r2)),
            (
                Node::Extender {
                    key: k1, child: c1, ..
                },
                Node::Extender {
                    key: k2, child: c2, ..
                },
            ) => k1 == k2 && (Arc::ptr_eq(c1, c2) || c1.same_shape(c2)),
            (Node::Bud { child: c1, .. }, Node::Bud { child: c2, .. }) => match (c1, c2) {
                (None, None) => true,
                (Some(a), Some(b)) => Arc::ptr_eq(a, b) || a.same_shape(b),
                _ => false,
            },
            (Node::Disk(a), Node::Disk(b)) => a == b,
            _ => false,
        }
    }

    /// Number of nodes, Disk references counted as one.
    pub fn size(&self) -> usize {
        match self {
            Node::Leaf { .. } | Node::Disk(_) => 1,
            Node::Branch { left, right, .. } => 1 + left.size() + right.size(),
            Node::Extender { child, .. } => 1 + child.size(),
            Node::Bud { child, .. } => 1 + child.as_ref().map_or(0, |c| c.size()),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            Node::Leaf { .. } | Node::Disk(_) | Node::Bud { child: None, .. } => 0,
            Node::Branch { left, right, .. } => 1 + left.height().max(right.height()),
            Node::Extender { child, .. } => 1 + child.height(),
            Node::Bud { child: Some(c), .. } => 1 + c.height(),
        }
    }

    pub fn contains_disk(&self) -> bool {
        match self {
            Node::Disk(_) => true,
            Node::Leaf { .. } | Node::Bud { child: None, .. } => false,
            Node::Branch { left, right, .. } => left.contains_disk() || right.contains_disk(),
            Node::Extender { child, .. } => child.contains_disk(),
            Node::Bud { child: Some(c), .. } => c.contains_disk(),
        }
    }
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn fields(f: &mut fmt::Formatter<'_>, i: &Option<Index>, h: Option<&HashValue>) -> fmt::Result {
            if let Some(i) = i {
                write!(f, " {:?}", i)?;
            }
            if let Some(h) = h {
                write!(f, " {:?}", h)?;
            }
            Ok(())
        }
        match self {
            Node::Leaf { value, index, hash } => {
                write!(f, "Leaf({}", hex::encode(value))?;
                fields(f, index, hash.as_ref())?;
                f.write_str(")")
            }
            Node::Branch {
                left,
                right,
                index,
                hash,
            } => {
                write!(f, "Branch({:?}, {:?}", left, right)?;
                fields(f, index, hash.as_ref())?;
                f.write_str(")")
            }
            Node::Extender { key, child, index } => {
                write!(f, "Extender({}, {:?}", key, child)?;
                fields(f, index, None)?;
                f.write_str(")")
            }
            Node::Bud { child, index, hash } => {
                match child {
                    Some(c) => write!(f, "Bud({:?}", c)?,
                    None => f.write_str("Bud(None")?,
                }
                fields(f, index, hash.as_ref())?;
                f.write_str(")")
            }
            Node::Disk(i) => write!(f, "Disk({})", i.0),
        }
    }
}

/// A node is hashed if its hash field is populated, if it is an Extender
/// over a hashed child, or if it is a Disk reference.
pub fn is_hashed(n: &Node) -> bool {
    match n {
        Node::Leaf { hash, .. } | Node::Branch { hash, .. } | Node::Bud { hash, .. } => {
            hash.is_some()
        }
        Node::Extender { child, .. } => is_hashed(child),
        Node::Disk(_) => true,
    }
}

/// A node is indexed if its index field is populated or it is a Disk
/// reference.
pub fn is_indexed(n: &Node) -> bool {
    n.index().is_some()
}

/// The structural rule a node breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    /// Extender directly under an Extender.
    SI1,
    /// Extender with an empty key.
    SI2,
    /// Hashed node with an unhashed child.
    SI3,
    /// Indexed node that is not hashed.
    SI4,
    /// Indexed node with an unindexed child.
    SI5,
    /// Bud directly over a Bud or a Leaf.
    SI6,
    /// Key longer than [`MAX_KEY_BITS`].
    KeyCap,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::SI1 => "SI1: extender under extender",
            Rule::SI2 => "SI2: extender with empty key",
            Rule::SI3 => "SI3: hashed node with unhashed child",
            Rule::SI4 => "SI4: indexed node that is not hashed",
            Rule::SI5 => "SI5: indexed node with unindexed child",
            Rule::SI6 => "SI6: bud over bud or leaf",
            Rule::KeyCap => "extender key longer than 424 bits",
        };
        f.write_str(s)
    }
}

fn children(n: &Node) -> impl Iterator<Item = &Node> {
    let (a, b): (Option<&Node>, Option<&Node>) = match n {
        Node::Branch { left, right, .. } => (Some(left), Some(right)),
        Node::Extender { child, .. } => (Some(child), None),
        Node::Bud { child, .. } => (child.as_deref(), None),
        Node::Leaf { .. } | Node::Disk(_) => (None, None),
    };
    a.into_iter().chain(b)
}

/// SI1, SI2 and SI6 at the root of `n` only.
pub fn node_shape_invariant(n: &Node) -> bool {
    shape_violation(n).is_none()
}

fn shape_violation(n: &Node) -> Option<Rule> {
    match n {
        Node::Extender { key, .. } if key.is_empty() => Some(Rule::SI2),
        Node::Extender { child, .. } if child.is_extender() => Some(Rule::SI1),
        Node::Extender { key, .. } if key.len() > MAX_KEY_BITS => Some(Rule::KeyCap),
        Node::Bud { child: Some(c), .. } if c.is_bud() || c.is_leaf() => Some(Rule::SI6),
        _ => None,
    }
}

/// SI1–SI6 checked at the root of `n` only.
pub fn local_violation(n: &Node) -> Option<Rule> {
    if let Node::Disk(_) = n {
        return None;
    }
    if let Some(r) = shape_violation(n) {
        return Some(r);
    }
    if is_hashed(n) && !children(n).all(is_hashed) {
        return Some(Rule::SI3);
    }
    if is_indexed(n) {
        if !is_hashed(n) {
            return Some(Rule::SI4);
        }
        if !children(n).all(is_indexed) {
            return Some(Rule::SI5);
        }
    }
    None
}

/// First violated rule found anywhere in `n`, not descending into Disk
/// references (their contents are checked when loaded).
pub fn find_violation(n: &Node) -> Option<Rule> {
    let mut stack = vec![n];
    while let Some(n) = stack.pop() {
        if let Some(r) = local_violation(n) {
            return Some(r);
        }
        stack.extend(children(n));
    }
    None
}

/// SI1–SI6 at every node reachable from `n` without crossing a Disk node.
pub fn node_invariant(n: &Node) -> bool {
    find_violation(n).is_none()
}
