//! Zippers: a focused subtree plus the path back to the root.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::node::{find_violation, local_violation, HashValue, Index, Key, Node, Rule, Side};
use crate::storage::{resolve_disk, StorageError, StorageHandle};

/// The way from the root down to a focus. Each frame remembers the
/// parent node it came through, minus the child on the path.
#[derive(Clone, PartialEq, Eq)]
pub enum Path {
    Top,
    Left {
        parent: Arc<Path>,
        right: Arc<Node>,
        index: Option<Index>,
        hash: Option<HashValue>,
    },
    Right {
        left: Arc<Node>,
        parent: Arc<Path>,
        index: Option<Index>,
        hash: Option<HashValue>,
    },
    Extended {
        parent: Arc<Path>,
        key: Key,
        index: Option<Index>,
    },
    Budded {
        parent: Arc<Path>,
        index: Option<Index>,
        hash: Option<HashValue>,
    },
}

impl Path {
    pub fn parent(&self) -> Option<&Path> {
        match self {
            Path::Top => None,
            Path::Left { parent, .. }
            | Path::Right { parent, .. }
            | Path::Extended { parent, .. }
            | Path::Budded { parent, .. } => Some(parent),
        }
    }

    /// Number of frames above the focus.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        let mut n = 0;
        let mut p = self;
        while let Some(q) = p.parent() {
            n += 1;
            p = q;
        }
        n
    }

    pub fn is_top(&self) -> bool {
        matches!(self, Path::Top)
    }

    /// Same frames with every index and hash field dropped.
    pub fn cleared(&self) -> Path {
        let mut frames = Vec::new();
        let mut p = self;
        while let Some(q) = p.parent() {
            frames.push(p);
            p = q;
        }
        let mut out = Path::Top;
        for f in frames.into_iter().rev() {
            let parent = Arc::new(out);
            out = match f {
                Path::Left { right, .. } => Path::Left {
                    parent,
                    right: right.clone(),
                    index: None,
                    hash: None,
                },
                Path::Right { left, .. } => Path::Right {
                    left: left.clone(),
                    parent,
                    index: None,
                    hash: None,
                },
                Path::Extended { key, .. } => Path::Extended {
                    parent,
                    key: key.clone(),
                    index: None,
                },
                Path::Budded { .. } => Path::Budded {
                    parent,
                    index: None,
                    hash: None,
                },
                Path::Top => unreachable!(),
            };
        }
        out
    }
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Path::Top => write!(f, "Top"),
            Path::Left {
                parent,
                right,
                index,
                hash,
            } => write!(f, "Left({:?}, {:?}, {:?}, {:?})", parent, right, index, hash),
            Path::Right {
                left,
                parent,
                index,
                hash,
            } => write!(f, "Right({:?}, {:?}, {:?}, {:?})", left, parent, index, hash),
            Path::Extended { parent, key, index } => {
                write!(f, "Extended({:?}, {:?}, {:?})", parent, key, index)
            }
            Path::Budded {
                parent,
                index,
                hash,
            } => write!(f, "Budded({:?}, {:?}, {:?})", parent, index, hash),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    DownLeft,
    DownRight,
    DownSegment,
    DownBud,
}

impl From<Side> for Direction {
    fn from(s: Side) -> Self {
        match s {
            Side::L => Direction::DownLeft,
            Side::R => Direction::DownRight,
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Zipper {
    pub path: Path,
    pub focus: Node,
}

impl fmt::Debug for Zipper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, {:?})", self.path, self.focus)
    }
}

impl Zipper {
    pub fn new(path: Path, focus: Node) -> Self {
        Zipper { path, focus }
    }

    pub fn top(focus: Node) -> Self {
        Zipper {
            path: Path::Top,
            focus,
        }
    }
}

/// A zipper focused at a Bud.
#[derive(Clone, PartialEq, Eq)]
pub struct BudZipper(Zipper);

impl fmt::Debug for BudZipper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl BudZipper {
    /// `None` unless the focus is a Bud.
    pub fn new(z: Zipper) -> Option<Self> {
        z.focus.is_bud().then_some(BudZipper(z))
    }

    pub fn zipper(&self) -> &Zipper {
        &self.0
    }

    pub fn into_zipper(self) -> Zipper {
        self.0
    }

    pub fn path(&self) -> &Path {
        &self.0.path
    }

    pub fn focus(&self) -> &Node {
        &self.0.focus
    }
}

impl AsRef<Zipper> for BudZipper {
    fn as_ref(&self) -> &Zipper {
        &self.0
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CursorError {
    #[error("root must be a bud")]
    NotABud,
    #[error("root violates {0}")]
    Invariant(Rule),
}

pub fn zipper_of_root(n: Node) -> Result<BudZipper, CursorError> {
    if !n.is_bud() {
        return Err(CursorError::NotABud);
    }
    if let Some(r) = find_violation(&n) {
        return Err(CursorError::Invariant(r));
    }
    Ok(BudZipper(Zipper::top(n)))
}

/// Moves one level down. `Ok(None)` when `d` does not fit the focus.
/// A Disk focus is first replaced by the node stored at its index.
pub fn go_down(
    z: &Zipper,
    d: Direction,
    h: StorageHandle<'_>,
) -> Result<Option<Zipper>, StorageError> {
    let focus = resolve_disk(h, &z.focus)?;
    let parent = Arc::new(z.path.clone());
    Ok(match (d, focus) {
        (
            Direction::DownLeft,
            Node::Branch {
                left,
                right,
                index,
                hash,
            },
        ) => Some(Zipper {
            path: Path::Left {
                parent,
                right,
                index,
                hash,
            },
            focus: (*left).clone(),
        }),
        (
            Direction::DownRight,
            Node::Branch {
                left,
                right,
                index,
                hash,
            },
        ) => Some(Zipper {
            path: Path::Right {
                left,
                parent,
                index,
                hash,
            },
            focus: (*right).clone(),
        }),
        (Direction::DownSegment, Node::Extender { key, child, index }) => Some(Zipper {
            path: Path::Extended { parent, key, index },
            focus: (*child).clone(),
        }),
        (
            Direction::DownBud,
            Node::Bud {
                child: Some(c),
                index,
                hash,
            },
        ) => Some(Zipper {
            path: Path::Budded {
                parent,
                index,
                hash,
            },
            focus: (*c).clone(),
        }),
        _ => None,
    })
}

/// Pops one frame, rebuilding the parent with the frame's fields as they
/// are. `None` at the top.
pub fn go_up(z: &Zipper) -> Option<Zipper> {
    let focus = Arc::new(z.focus.clone());
    let (path, node) = match &z.path {
        Path::Top => return None,
        Path::Left {
            parent,
            right,
            index,
            hash,
        } => (
            parent,
            Node::Branch {
                left: focus,
                right: right.clone(),
                index: *index,
                hash: hash.clone(),
            },
        ),
        Path::Right {
            left,
            parent,
            index,
            hash,
        } => (
            parent,
            Node::Branch {
                left: left.clone(),
                right: focus,
                index: *index,
                hash: hash.clone(),
            },
        ),
        Path::Extended { parent, key, index } => (
            parent,
            Node::Extender {
                key: key.clone(),
                child: focus,
                index: *index,
            },
        ),
        Path::Budded {
            parent,
            index,
            hash,
        } => (
            parent,
            Node::Bud {
                child: Some(focus),
                index: *index,
                hash: hash.clone(),
            },
        ),
    };
    Some(Zipper {
        path: (**path).clone(),
        focus: node,
    })
}

pub fn zipper_path_len(z: &Zipper) -> usize {
    z.path.len()
}

pub fn go_up_to_root(z: &Zipper) -> Node {
    let mut z = z.clone();
    while let Some(up) = go_up(&z) {
        z = up;
    }
    z.focus
}

/// Goes up until the focus is a Bud or the path is `Top`.
pub fn go_up_to_bud_or_top(z: &Zipper) -> Zipper {
    let mut z = z.clone();
    while !z.focus.is_bud() {
        match go_up(&z) {
            Some(up) => z = up,
            None => break,
        }
    }
    z
}

/// Where a zipper breaks its invariants: the number of frames above the
/// offending spot (the focus itself is at `zipper_path_len`) and the rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZipperViolation {
    pub depth: usize,
    pub rule: Rule,
}

/// Checks the focus and every frame. The focus and each untracked sibling
/// must satisfy the node invariants; each frame, rebuilt around whatever
/// lies below it, must satisfy the same local rules a node does.
pub fn zipper_violation(z: &Zipper) -> Option<ZipperViolation> {
    let mut depth = z.path.len();
    if let Some(rule) = find_violation(&z.focus) {
        return Some(ZipperViolation { depth, rule });
    }
    let mut z = z.clone();
    loop {
        let sibling = match &z.path {
            Path::Top => return None,
            Path::Left { right, .. } => Some(right),
            Path::Right { left, .. } => Some(left),
            _ => None,
        };
        depth -= 1;
        if let Some(rule) = sibling.and_then(|s| find_violation(s)) {
            return Some(ZipperViolation { depth, rule });
        }
        z = go_up(&z).expect("not at top");
        if let Some(rule) = local_violation(&z.focus) {
            return Some(ZipperViolation { depth, rule });
        }
    }
}

pub fn zipper_invariant(z: &Zipper) -> bool {
    zipper_violation(z).is_none()
}

/// The key from the nearest Bud above the position `p` leads to (or from
/// the root if there is none) down to that position.
pub fn key_to_nearest_bud(p: &Path) -> Key {
    let mut rev = Vec::new();
    let mut p = p;
    loop {
        match p {
            Path::Top | Path::Budded { .. } => break,
            Path::Left { parent, .. } => {
                rev.push(Side::L);
                p = parent;
            }
            Path::Right { parent, .. } => {
                rev.push(Side::R);
                p = parent;
            }
            Path::Extended { parent, key, .. } => {
                rev.extend(key.sides().iter().rev());
                p = parent;
            }
        }
    }
    rev.reverse();
    Key::new(rev)
}
