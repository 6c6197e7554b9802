//! Small trees shared by unit and integration tests.

use std::sync::Arc;

use crate::cursor::{Path, Zipper};
use crate::node::{HashValue, Index, Key, Node};

fn k(s: &str) -> Key {
    Key::parse_lr(s).expect("L/R literal")
}

/// Placeholder hash `h_n`: 28 bytes of `n`.
pub fn h(n: u8) -> HashValue {
    HashValue::new(vec![n; HashValue::LEN])
}

pub fn i(n: u64) -> Option<Index> {
    Some(Index(n))
}

fn leaf(v: &str, n: u8) -> Node {
    Node::Leaf {
        value: v.as_bytes().to_vec(),
        index: i(n as u64),
        hash: Some(h(n)),
    }
}

/// Branch(Branch(Leaf A, Bud(Some(Branch(Leaf B, Bud None)))), Extender([R;L], Leaf D)),
/// all fields empty. Its model under a root bud is
/// `{LL ↦ A, LR ↦ {L ↦ B, R ↦ {}}, RRL ↦ D}`.
pub fn example_tree() -> Node {
    Node::branch(
        Node::branch(
            Node::leaf(b"A".to_vec()),
            Node::bud(Some(Node::branch(Node::leaf(b"B".to_vec()), Node::empty_bud()))),
        ),
        Node::extender(k("RL"), Node::leaf(b"D".to_vec())),
    )
}

/// The bud `b3` with its fields `i8`, `h8`.
pub fn b3() -> Node {
    Node::Bud {
        child: Some(Arc::new(Node::Branch {
            left: Arc::new(leaf("A", 5)),
            right: Arc::new(leaf("B", 6)),
            index: i(3),
            hash: Some(h(3)),
        })),
        index: i(8),
        hash: Some(h(8)),
    }
}

fn b3_sibling() -> Node {
    Node::Extender {
        key: k("RL"),
        child: Arc::new(leaf("C", 7)),
        index: i(4),
    }
}

/// Extender([R;R], Branch(b3, Extender([R;L], Leaf C)), i1), the whole
/// tree `zipper_at_b3` points into.
pub fn fig1_tree() -> Node {
    Node::Extender {
        key: k("RR"),
        child: Arc::new(Node::Branch {
            left: Arc::new(b3()),
            right: Arc::new(b3_sibling()),
            index: i(2),
            hash: Some(h(2)),
        }),
        index: i(1),
    }
}

/// Cursor at `b3` inside [`fig1_tree`].
pub fn zipper_at_b3() -> Zipper {
    Zipper::new(
        Path::Left {
            parent: Arc::new(Path::Extended {
                parent: Arc::new(Path::Top),
                key: k("RR"),
                index: i(1),
            }),
            right: Arc::new(b3_sibling()),
            index: i(2),
            hash: Some(h(2)),
        },
        b3(),
    )
}
