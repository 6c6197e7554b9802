//! Cell layout of nodes. Multi-byte integers are little-endian; unused
//! bytes are zero.
//!
//! ```text
//! Leaf      [0][hash:28][value_len:4][value <= 31 bytes | first value cell:8]
//! Branch    [1][left:8][right:8][hash:28]
//! Extender  [2][child:8][key_bits:2][key bits, MSB first, <= 53 bytes]
//! Bud None  [3]
//! Bud Some  [4][child:8][hash:28]
//! Value     [5][63 payload bytes]
//! ```
//!
//! Values longer than 31 bytes occupy a run of value cells written
//! immediately before their leaf cell.

use std::sync::Arc;

use crate::hash::{extender_hash, DIGEST_LEN};
use crate::node::{HashValue, Index, Key, Node, Side, MAX_KEY_BITS};

use super::cell::*;
use super::{check_range, CellReader, Storage, StorageError};

pub const INLINE_VALUE_MAX: usize = CELL_SIZE - 33;
pub const VALUE_CELL_PAYLOAD: usize = CELL_SIZE - 1;

const KEY_BYTES_AT: usize = 11;

fn precondition(msg: impl Into<String>) -> StorageError {
    StorageError::Precondition(msg.into())
}

fn child_ref(s: &dyn CellReader, c: &Node) -> Result<u64, StorageError> {
    let i = c
        .index()
        .ok_or_else(|| precondition("child node is not indexed"))?;
    check_range(s, i).map_err(|_| precondition(format!("child index {} is not allocated", i.0)))?;
    Ok(i.0)
}

fn hash_ref(h: &Option<HashValue>) -> Result<&HashValue, StorageError> {
    let h = h.as_ref().ok_or_else(|| precondition("node is not hashed"))?;
    if h.len() != DIGEST_LEN {
        return Err(precondition(format!("hash field has {} bytes", h.len())));
    }
    Ok(h)
}

fn pack_key(cell: &mut Cell, key: &Key) {
    for (pos, side) in key.sides().iter().enumerate() {
        cell.0[KEY_BYTES_AT + pos / 8] |= side.bit() << (7 - pos % 8);
    }
}

fn unpack_key(cell: &Cell, bits: usize) -> Key {
    (0..bits)
        .map(|pos| Side::from_bit(cell.0[KEY_BYTES_AT + pos / 8] >> (7 - pos % 8) & 1 == 1))
        .collect::<Vec<_>>()
        .into()
}

/// Appends the cells of one node whose direct children are already
/// indexed, returning the index of the node cell.
pub fn encode_node<S: Storage>(s: &mut S, n: &Node) -> Result<Index, StorageError> {
    let mut cells = Vec::new();
    let cell = match n {
        Node::Leaf { value, hash, .. } => {
            let h = hash_ref(hash)?;
            let len: u32 = value
                .len()
                .try_into()
                .map_err(|_| precondition("value longer than 2^32-1 bytes"))?;
            let mut c = Cell::tagged(TAG_LEAF);
            c.put(1, h.as_bytes());
            c.put(29, &len.to_le_bytes());
            if value.len() <= INLINE_VALUE_MAX {
                c.put(33, value);
            } else {
                let first = s.next_free().0;
                for chunk in value.chunks(VALUE_CELL_PAYLOAD) {
                    let mut v = Cell::tagged(TAG_VALUE);
                    v.put(1, chunk);
                    cells.push(v);
                }
                c.put_u64(33, first);
            }
            c
        }
        Node::Branch {
            left, right, hash, ..
        } => {
            let mut c = Cell::tagged(TAG_BRANCH);
            c.put_u64(1, child_ref(s, left)?);
            c.put_u64(9, child_ref(s, right)?);
            c.put(17, hash_ref(hash)?.as_bytes());
            c
        }
        Node::Extender { key, child, .. } => {
            if key.is_empty() || key.len() > MAX_KEY_BITS {
                return Err(precondition(format!("extender key of {} bits", key.len())));
            }
            let mut c = Cell::tagged(TAG_EXTENDER);
            c.put_u64(1, child_ref(s, child)?);
            c.put(9, &(key.len() as u16).to_le_bytes());
            pack_key(&mut c, key);
            c
        }
        Node::Bud { child: None, .. } => Cell::tagged(TAG_EMPTY_BUD),
        Node::Bud {
            child: Some(child),
            hash,
            ..
        } => {
            let mut c = Cell::tagged(TAG_BUD);
            c.put_u64(1, child_ref(s, child)?);
            c.put(9, hash_ref(hash)?.as_bytes());
            c
        }
        Node::Disk(_) => return Err(precondition("a disk node is already stored")),
    };
    cells.push(cell);
    let first = s.append_cells(&cells)?;
    first
        .0
        .checked_add(cells.len() as u64 - 1)
        .map(Index)
        .ok_or(StorageError::Full)
}

fn read_node_cell(s: &dyn CellReader, i: Index) -> Result<Cell, StorageError> {
    check_range(s, i)?;
    let c = s.read_cell(i)?;
    match c.tag() {
        TAG_LEAF..=TAG_BUD => Ok(c),
        TAG_VALUE => Err(StorageError::NotANode(i.0)),
        tag => Err(StorageError::BadTag { index: i.0, tag }),
    }
}

fn check_tail(c: &Cell, i: Index, used: usize) -> Result<(), StorageError> {
    if c.0[used..].iter().any(|&b| b != 0) {
        return Err(StorageError::malformed(i.0, "non-zero bytes past the end of the record"));
    }
    Ok(())
}

/// Reads a child reference of cell `i` and checks it points to an earlier
/// node cell whose tag is one of `allowed`.
fn read_child(
    s: &dyn CellReader,
    i: Index,
    c: &Cell,
    at: usize,
    allowed: &[u8],
) -> Result<Arc<Node>, StorageError> {
    let child = c.get_u64(at);
    if child == 0 || child >= i.0 {
        return Err(StorageError::malformed(
            i.0,
            format!("child index {} is not below the node", child),
        ));
    }
    let cc = s.read_cell(Index(child))?;
    if !allowed.contains(&cc.tag()) {
        return Err(StorageError::malformed(
            i.0,
            format!("child {} has tag {} which is not allowed here", child, cc.tag()),
        ));
    }
    Ok(Arc::new(Node::Disk(Index(child))))
}

fn read_hash(c: &Cell, at: usize) -> HashValue {
    HashValue::new(c.0[at..at + DIGEST_LEN].to_vec())
}

const ANY_NODE: &[u8] = &[TAG_LEAF, TAG_BRANCH, TAG_EXTENDER, TAG_EMPTY_BUD, TAG_BUD];
const NOT_EXTENDER: &[u8] = &[TAG_LEAF, TAG_BRANCH, TAG_EMPTY_BUD, TAG_BUD];
const UNDER_BUD: &[u8] = &[TAG_BRANCH, TAG_EXTENDER];

/// Decodes the node at `i` as a shallow node: children are Disk
/// references, the index field is `i` and the hash field is the stored
/// hash (28 zero bytes for an empty bud).
pub fn decode_node(s: &dyn CellReader, i: Index) -> Result<Node, StorageError> {
    let c = read_node_cell(s, i)?;
    let index = Some(i);
    Ok(match c.tag() {
        TAG_LEAF => {
            let len = c.get_u32(29) as usize;
            let value = if len <= INLINE_VALUE_MAX {
                check_tail(&c, i, 33 + len)?;
                c.0[33..33 + len].to_vec()
            } else {
                check_tail(&c, i, 41)?;
                let first = c.get_u64(33);
                let ncells = len.div_ceil(VALUE_CELL_PAYLOAD) as u64;
                if first == 0 || first.checked_add(ncells) != Some(i.0) {
                    return Err(StorageError::malformed(
                        i.0,
                        format!("value cells do not immediately precede the leaf (first {})", first),
                    ));
                }
                let mut value = Vec::with_capacity(len);
                for j in first..i.0 {
                    let vc = s.read_cell(Index(j))?;
                    if vc.tag() != TAG_VALUE {
                        return Err(StorageError::malformed(
                            i.0,
                            format!("value cell {} has tag {}", j, vc.tag()),
                        ));
                    }
                    let take = (len - value.len()).min(VALUE_CELL_PAYLOAD);
                    value.extend_from_slice(&vc.0[1..1 + take]);
                    check_tail(&vc, Index(j), 1 + take)?;
                }
                value
            };
            Node::Leaf {
                value,
                index,
                hash: Some(read_hash(&c, 1)),
            }
        }
        TAG_BRANCH => {
            check_tail(&c, i, 45)?;
            Node::Branch {
                left: read_child(s, i, &c, 1, ANY_NODE)?,
                right: read_child(s, i, &c, 9, ANY_NODE)?,
                index,
                hash: Some(read_hash(&c, 17)),
            }
        }
        TAG_EXTENDER => {
            let bits = c.get_u16(9) as usize;
            if bits == 0 || bits > MAX_KEY_BITS {
                return Err(StorageError::malformed(i.0, format!("extender key length {}", bits)));
            }
            let key = unpack_key(&c, bits);
            let mut check = Cell::tagged(TAG_EXTENDER);
            check.put(1, &c.0[1..11]);
            pack_key(&mut check, &key);
            if check != c {
                return Err(StorageError::malformed(i.0, "bits set past the end of the key"));
            }
            Node::Extender {
                key,
                child: read_child(s, i, &c, 1, NOT_EXTENDER)?,
                index,
            }
        }
        TAG_EMPTY_BUD => {
            check_tail(&c, i, 1)?;
            Node::Bud {
                child: None,
                index,
                hash: Some(HashValue::zero()),
            }
        }
        TAG_BUD => {
            check_tail(&c, i, 37)?;
            Node::Bud {
                child: Some(read_child(s, i, &c, 1, UNDER_BUD)?),
                index,
                hash: Some(read_hash(&c, 9)),
            }
        }
        _ => unreachable!("tag checked by read_node_cell"),
    })
}

/// The Merkle hash of the node stored at `i`, read from storage. An
/// extender's hash is its child's stored hash followed by its key.
pub fn stored_hash(s: &dyn CellReader, i: Index) -> Result<HashValue, StorageError> {
    let c = read_node_cell(s, i)?;
    match c.tag() {
        TAG_LEAF => Ok(read_hash(&c, 1)),
        TAG_BRANCH => Ok(read_hash(&c, 17)),
        TAG_EMPTY_BUD => Ok(HashValue::zero()),
        TAG_BUD => Ok(read_hash(&c, 9)),
        _ => match decode_node(s, i)? {
            Node::Extender { key, child, .. } => {
                let child = child.index().expect("decoded child is a disk reference");
                if stored_tag(s, child)? == TAG_EXTENDER {
                    return Err(StorageError::malformed(i.0, "extender under extender"));
                }
                Ok(extender_hash(&stored_hash(s, child)?, &key)?)
            }
            _ => unreachable!("tag is extender"),
        },
    }
}

fn stored_tag(s: &dyn CellReader, i: Index) -> Result<u8, StorageError> {
    Ok(s.read_cell(i)?.tag())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::StorageModel;

    fn hashed_leaf(v: &[u8]) -> Node {
        Node::Leaf {
            value: v.to_vec(),
            index: None,
            hash: Some(HashValue::new(vec![0xab; 28])),
        }
    }

    #[test]
    fn empty_bud_is_a_single_tagged_cell() {
        let mut s = StorageModel::new();
        let i = encode_node(&mut s, &Node::empty_bud()).unwrap();
        assert_eq!(i, Index(1));
        let mut expect = [0u8; 64];
        expect[0] = 3;
        assert_eq!(s.read_cell(i).unwrap().0, expect);
    }

    #[test]
    fn inline_leaf_layout() {
        let mut s = StorageModel::new();
        let i = encode_node(&mut s, &hashed_leaf(b"AB")).unwrap();
        let c = s.read_cell(i).unwrap();
        assert_eq!(c.0[0], 0);
        assert_eq!(&c.0[1..29], &[0xab; 28]);
        assert_eq!(&c.0[29..33], &[2, 0, 0, 0]);
        assert_eq!(&c.0[33..35], b"AB");
        assert!(c.0[35..].iter().all(|&b| b == 0));
    }

    #[test]
    fn long_value_uses_preceding_value_cells() {
        let mut s = StorageModel::new();
        let value: Vec<u8> = (0..130u8).collect();
        let i = encode_node(&mut s, &hashed_leaf(&value)).unwrap();
        // ceil(130 / 63) = 3 value cells at 1..=3, leaf at 4
        assert_eq!(i, Index(4));
        for j in 1..4 {
            assert_eq!(s.read_cell(Index(j)).unwrap().tag(), TAG_VALUE);
        }
        let leaf = s.read_cell(i).unwrap();
        assert_eq!(leaf.get_u64(33), 1);
        match decode_node(&s, i).unwrap() {
            Node::Leaf { value: v, .. } => assert_eq!(v, value),
            other => panic!("{:?}", other),
        }
        assert!(matches!(decode_node(&s, Index(2)), Err(StorageError::NotANode(2))));
    }

    #[test]
    fn extender_layout_and_round_trip() {
        let mut s = StorageModel::new();
        let c = encode_node(&mut s, &hashed_leaf(b"x")).unwrap();
        let key = Key::parse_lr("RLR").unwrap();
        let e = Node::Extender {
            key: key.clone(),
            child: Arc::new(Node::Disk(c)),
            index: None,
        };
        let i = encode_node(&mut s, &e).unwrap();
        let cell = s.read_cell(i).unwrap();
        assert_eq!(cell.0[0], 2);
        assert_eq!(cell.get_u64(1), c.0);
        assert_eq!(cell.get_u16(9), 3);
        assert_eq!(cell.0[11], 0b1010_0000);
        let d = decode_node(&s, i).unwrap();
        assert_eq!(
            d,
            Node::Extender {
                key: key.clone(),
                child: Arc::new(Node::Disk(c)),
                index: Some(i)
            }
        );
        let expect = extender_hash(&HashValue::new(vec![0xab; 28]), &key).unwrap();
        assert_eq!(stored_hash(&s, i).unwrap(), expect);
    }

    #[test]
    fn decode_rejects_header_and_bad_cells() {
        let mut s = StorageModel::new();
        assert!(matches!(decode_node(&s, Index(0)), Err(StorageError::HeaderIndex)));
        assert!(matches!(decode_node(&s, Index(1)), Err(StorageError::OutOfRange { .. })));
        s.append_cells(&[Cell::tagged(9)]).unwrap();
        assert!(matches!(decode_node(&s, Index(1)), Err(StorageError::BadTag { tag: 9, .. })));
        // branch pointing at itself
        let mut b = Cell::tagged(TAG_BRANCH);
        b.put_u64(1, 2);
        b.put_u64(9, 2);
        s.append_cells(&[b]).unwrap();
        assert!(matches!(decode_node(&s, Index(2)), Err(StorageError::Malformed { .. })));
    }

    #[test]
    fn encode_rejects_unindexed_children() {
        let mut s = StorageModel::new();
        let b = Node::Branch {
            left: Arc::new(Node::leaf(vec![1])),
            right: Arc::new(Node::leaf(vec![2])),
            index: None,
            hash: Some(HashValue::zero()),
        };
        assert!(matches!(encode_node(&mut s, &b), Err(StorageError::Precondition(_))));
        assert_eq!(s.next_free(), Index(1));
    }
}
