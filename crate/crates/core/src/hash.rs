//! Merkle hashing of Plebeia trees over a pluggable 28-byte primitive, and
//! the reduction from Merkle-hash collisions to collisions (or zero
//! preimages) of the primitive.
//!
//! Every 28-byte hash carries a 2-bit kind tag in its last two bits:
//! `0b10` for leaves, `0b00` for branches, `0b11` for non-empty buds. The
//! empty bud hashes to 28 zero bytes. Extender hashes are the child hash
//! followed by the encoded key, so they are always longer than 28 bytes.

use std::collections::HashMap;

use blake2::digest::consts::U28;
use blake2::{Blake2b, Digest};
use thiserror::Error;

use crate::node::{node_invariant, HashValue, Index, Key, Node, MAX_KEY_BITS};

pub const DIGEST_LEN: usize = 28;

pub const TAG_LEAF: u8 = 0b10;
pub const TAG_BRANCH: u8 = 0b00;
pub const TAG_BUD: u8 = 0b11;

/// A deterministic function from bytes to a 28-byte digest.
pub trait HashPrimitive: Send + Sync {
    fn digest(&self, data: &[u8]) -> [u8; DIGEST_LEN];
}

/// blake2b with a 28-byte output.
#[derive(Clone, Copy, Debug, Default)]
pub struct Blake2b28;

impl HashPrimitive for Blake2b28 {
    fn digest(&self, data: &[u8]) -> [u8; DIGEST_LEN] {
        let out = Blake2b::<U28>::digest(data);
        let mut d = [0u8; DIGEST_LEN];
        d.copy_from_slice(&out);
        d
    }
}

impl<F> HashPrimitive for F
where
    F: Fn(&[u8]) -> [u8; DIGEST_LEN] + Send + Sync,
{
    fn digest(&self, data: &[u8]) -> [u8; DIGEST_LEN] {
        self(data)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HashError {
    #[error("cannot hash a disk reference ({0:?}) without storage")]
    Disk(Index),
    #[error("extender key must be non-empty")]
    EmptyKey,
    #[error("key of {0} bits exceeds the {MAX_KEY_BITS}-bit cap")]
    KeyTooLong(usize),
    #[error("expected a 28-byte digest, got {0} bytes")]
    BadLength(usize),
    #[error("{0} has no primitive preimage")]
    NoPreimage(&'static str),
    #[error("not a Merkle hash collision: {0}")]
    NotACollision(&'static str),
    #[error("input violates the structural invariants")]
    Invariant,
}

/// Injective encoding of a key: a 1 bit followed by the key's bits
/// (`L` = 0, `R` = 1), left-padded with zeros to whole bytes, packed
/// most-significant bit first. Output is `ceil((len + 1) / 8)` bytes.
pub fn key_to_bytes(k: &Key) -> Result<Vec<u8>, HashError> {
    if k.is_empty() {
        return Err(HashError::EmptyKey);
    }
    if k.len() > MAX_KEY_BITS {
        return Err(HashError::KeyTooLong(k.len()));
    }
    let nbits = k.len() + 1;
    let nbytes = nbits.div_ceil(8);
    let pad = nbytes * 8 - nbits;
    let mut out = vec![0u8; nbytes];
    let bits = std::iter::once(1u8).chain(k.sides().iter().map(|s| s.bit()));
    for (pos, b) in bits.enumerate() {
        let at = pad + pos;
        out[at / 8] |= b << (7 - at % 8);
    }
    Ok(out)
}

/// Digest of `b` with the last two bits replaced by `tag`.
pub fn hash_222_2(p: &dyn HashPrimitive, b: &[u8], tag: u8) -> HashValue {
    debug_assert!(matches!(tag, TAG_LEAF | TAG_BRANCH | TAG_BUD));
    let mut d = p.digest(b);
    d[DIGEST_LEN - 1] = (d[DIGEST_LEN - 1] & 0xfc) | (tag & 0b11);
    HashValue::new(d.to_vec())
}

/// Masks the last two bits of a 28-byte sequence.
pub fn first_222_bit(b: &[u8]) -> Result<[u8; DIGEST_LEN], HashError> {
    let mut out: [u8; DIGEST_LEN] = b.try_into().map_err(|_| HashError::BadLength(b.len()))?;
    out[DIGEST_LEN - 1] &= 0xfc;
    Ok(out)
}

/// `B'`: the primitive truncated to its first 222 bits.
pub fn truncated_digest(p: &dyn HashPrimitive, b: &[u8]) -> [u8; DIGEST_LEN] {
    let mut d = p.digest(b);
    d[DIGEST_LEN - 1] &= 0xfc;
    d
}

/// Last two bits of a 28-byte hash; `None` for extender-length hashes.
pub fn kind_tag(h: &HashValue) -> Option<u8> {
    (h.len() == DIGEST_LEN).then(|| h.as_bytes()[DIGEST_LEN - 1] & 0b11)
}

pub fn leaf_hash(p: &dyn HashPrimitive, value: &[u8]) -> HashValue {
    hash_222_2(p, value, TAG_LEAF)
}

pub fn branch_preimage(left: &HashValue, right: &HashValue) -> Vec<u8> {
    // right hashes are at most 28 + 54 bytes under the key cap
    debug_assert!(right.len() < 256);
    let mut b = Vec::with_capacity(left.len() + right.len() + 1);
    b.extend_from_slice(left.as_bytes());
    b.extend_from_slice(right.as_bytes());
    b.push(right.len() as u8);
    b
}

pub fn branch_hash(p: &dyn HashPrimitive, left: &HashValue, right: &HashValue) -> HashValue {
    hash_222_2(p, &branch_preimage(left, right), TAG_BRANCH)
}

pub fn extender_hash(child: &HashValue, key: &Key) -> Result<HashValue, HashError> {
    let mut b = child.as_bytes().to_vec();
    b.extend(key_to_bytes(key)?);
    Ok(HashValue::new(b))
}

pub fn bud_hash(p: &dyn HashPrimitive, child: Option<&HashValue>) -> HashValue {
    match child {
        None => HashValue::zero(),
        Some(h) => hash_222_2(p, h.as_bytes(), TAG_BUD),
    }
}

/// Hashes every node of `root` bottom-up without recursion, reporting each
/// node with its hash. Optional hash fields are ignored.
fn hash_postorder<'a>(
    p: &dyn HashPrimitive,
    root: &'a Node,
    mut record: impl FnMut(&'a Node, &HashValue),
) -> Result<HashValue, HashError> {
    enum Step<'a> {
        Enter(&'a Node),
        Exit(&'a Node),
    }
    let mut work = vec![Step::Enter(root)];
    let mut done: Vec<HashValue> = Vec::new();
    while let Some(step) = work.pop() {
        match step {
            Step::Enter(n) => match n {
                Node::Disk(i) => return Err(HashError::Disk(*i)),
                Node::Leaf { value, .. } => {
                    let h = leaf_hash(p, value);
                    record(n, &h);
                    done.push(h);
                }
                Node::Bud { child: None, .. } => {
                    let h = HashValue::zero();
                    record(n, &h);
                    done.push(h);
                }
                Node::Branch { left, right, .. } => {
                    work.push(Step::Exit(n));
                    work.push(Step::Enter(right));
                    work.push(Step::Enter(left));
                }
                Node::Extender { child, .. } | Node::Bud { child: Some(child), .. } => {
                    work.push(Step::Exit(n));
                    work.push(Step::Enter(child));
                }
            },
            Step::Exit(n) => {
                let h = match n {
                    Node::Branch { .. } => {
                        let r = done.pop().expect("right hash");
                        let l = done.pop().expect("left hash");
                        branch_hash(p, &l, &r)
                    }
                    Node::Extender { key, .. } => extender_hash(&done.pop().expect("child hash"), key)?,
                    Node::Bud { .. } => bud_hash(p, Some(&done.pop().expect("child hash"))),
                    _ => unreachable!("only inner nodes are revisited"),
                };
                record(n, &h);
                done.push(h);
            }
        }
    }
    Ok(done.pop().expect("root hash"))
}

/// The Merkle hash of a fully resolved tree. Index and hash fields are not
/// consulted.
pub fn merkle_hash(p: &dyn HashPrimitive, n: &Node) -> Result<HashValue, HashError> {
    hash_postorder(p, n, |_, _| {})
}

fn preimage_with(
    n: &Node,
    child_hash: impl Fn(&Node) -> Result<HashValue, HashError>,
) -> Result<Vec<u8>, HashError> {
    match n {
        Node::Leaf { value, .. } => Ok(value.clone()),
        Node::Branch { left, right, .. } => Ok(branch_preimage(&child_hash(left)?, &child_hash(right)?)),
        Node::Bud { child: Some(c), .. } => Ok(child_hash(c)?.into_bytes()),
        Node::Bud { child: None, .. } => Err(HashError::NoPreimage("an empty bud")),
        Node::Extender { .. } => Err(HashError::NoPreimage("an extender")),
        Node::Disk(i) => Err(HashError::Disk(*i)),
    }
}

/// The bytes the primitive is applied to when hashing `n`, so that
/// `B'(before_hash_seq(n)) = first_222_bit(merkle_hash(n))`. Defined for
/// leaves, branches and non-empty buds.
pub fn before_hash_seq(p: &dyn HashPrimitive, n: &Node) -> Result<Vec<u8>, HashError> {
    preimage_with(n, |c| merkle_hash(p, c))
}

/// A break of the truncated primitive `B'`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AttackInstance {
    /// Two distinct inputs with equal `B'`.
    Collision(Vec<u8>, Vec<u8>),
    /// An input whose `B'` is all zero bits.
    Preimage(Vec<u8>),
}

impl AttackInstance {
    /// Re-evaluates the primitive on the witness.
    pub fn is_valid(&self, p: &dyn HashPrimitive) -> bool {
        match self {
            AttackInstance::Collision(a, b) => a != b && truncated_digest(p, a) == truncated_digest(p, b),
            AttackInstance::Preimage(s) => truncated_digest(p, s) == [0u8; DIGEST_LEN],
        }
    }
}

#[derive(PartialEq, Eq, Hash)]
enum Shape {
    Leaf(Vec<u8>),
    Branch(usize, usize),
    Extender(Key, usize),
    Bud(Option<usize>),
}

/// Turns a Merkle-hash collision into a break of the primitive.
///
/// `n1` and `n2` must satisfy the structural invariants, contain no Disk
/// references, differ in shape (index and hash fields are not part of the
/// hashed content, so trees differing only there are not collisions), and
/// have equal Merkle hashes. Work is linear in the sizes of both trees and
/// the descent takes at most `min(height n1, height n2)` steps.
pub fn collision_reduce(
    p: &dyn HashPrimitive,
    n1: &Node,
    n2: &Node,
) -> Result<AttackInstance, HashError> {
    collision_reduce_traced(p, n1, n2).map(|(a, _)| a)
}

/// [`collision_reduce`] also returning the number of descent steps taken.
pub fn collision_reduce_traced(
    p: &dyn HashPrimitive,
    n1: &Node,
    n2: &Node,
) -> Result<(AttackInstance, usize), HashError> {
    if !node_invariant(n1) || !node_invariant(n2) {
        return Err(HashError::Invariant);
    }
    let mut hashes: HashMap<*const Node, HashValue> = HashMap::new();
    // nodes with equal ids have the same shape
    let mut ids: HashMap<*const Node, usize> = HashMap::new();
    let mut interned: HashMap<Shape, usize> = HashMap::new();
    let mut record = |n: &Node, h: &HashValue| {
        let id_of = |c: &Node| ids[&(c as *const Node)];
        let shape = match n {
            Node::Leaf { value, .. } => Shape::Leaf(value.clone()),
            Node::Branch { left, right, .. } => Shape::Branch(id_of(left), id_of(right)),
            Node::Extender { key, child, .. } => Shape::Extender(key.clone(), id_of(child)),
            Node::Bud { child, .. } => Shape::Bud(child.as_deref().map(id_of)),
            Node::Disk(_) => unreachable!("hashing fails on disk nodes"),
        };
        let fresh = interned.len();
        let id = *interned.entry(shape).or_insert(fresh);
        ids.insert(n as *const Node, id);
        hashes.insert(n as *const Node, h.clone());
    };
    let h1 = hash_postorder(p, n1, &mut record)?;
    let h2 = hash_postorder(p, n2, &mut record)?;
    if h1 != h2 {
        return Err(HashError::NotACollision("merkle hashes differ"));
    }
    let same = |a: &Node, b: &Node| ids[&(a as *const Node)] == ids[&(b as *const Node)];
    if same(n1, n2) {
        return Err(HashError::NotACollision("trees are equal"));
    }
    let hash_of = |n: &Node| -> HashValue { hashes[&(n as *const Node)].clone() };
    let seq = |n: &Node| preimage_with(n, |c| Ok(hash_of(c)));

    let (mut a, mut b) = (n1, n2);
    let mut steps = 0;
    loop {
        match (a, b) {
            (Node::Bud { child: Some(c1), .. }, Node::Bud { child: Some(c2), .. })
                if hash_of(c1) == hash_of(c2) =>
            {
                a = c1;
                b = c2;
            }
            (
                Node::Extender {
                    key: k1, child: c1, ..
                },
                Node::Extender {
                    key: k2, child: c2, ..
                },
            ) => {
                // equal hash suffixes and injective key encoding
                if k1 != k2 {
                    return Err(HashError::NotACollision("extender keys differ"));
                }
                a = c1;
                b = c2;
            }
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
            ) if hash_of(l1) == hash_of(l2) && hash_of(r1) == hash_of(r2) => {
                if !same(l1, l2) {
                    a = l1;
                    b = l2;
                } else {
                    a = r1;
                    b = r2;
                }
            }
            (Node::Bud { child: None, .. }, n) | (n, Node::Bud { child: None, .. }) => {
                return Ok((AttackInstance::Preimage(seq(n)?), steps));
            }
            _ => return Ok((AttackInstance::Collision(seq(a)?, seq(b)?), steps)),
        }
        steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::Side::{L, R};

    /// 28 copies of the input length.
    fn length_primitive(x: &[u8]) -> [u8; DIGEST_LEN] {
        [(x.len() % 256) as u8; DIGEST_LEN]
    }

    fn key(s: &str) -> Key {
        Key::parse_lr(s).unwrap()
    }

    #[test]
    fn key_encoding_examples() {
        assert_eq!(key_to_bytes(&Key::new(vec![R, L])).unwrap(), vec![0x06]);
        assert_eq!(key_to_bytes(&Key::new(vec![L])).unwrap(), vec![0x02]);
        // 7 bits + sentinel fill exactly one byte
        assert_eq!(key_to_bytes(&key("LLLLLLL")).unwrap(), vec![0x80]);
        assert_eq!(key_to_bytes(&key("RRRRRRRR")).unwrap(), vec![0x01, 0xff]);
        assert_eq!(key_to_bytes(&Key::empty()), Err(HashError::EmptyKey));
        assert_eq!(
            key_to_bytes(&Key::new(vec![L; MAX_KEY_BITS + 1])),
            Err(HashError::KeyTooLong(MAX_KEY_BITS + 1))
        );
        assert_eq!(key_to_bytes(&Key::new(vec![R; MAX_KEY_BITS])).unwrap().len(), 54);
    }

    #[test]
    fn hash_222_2_with_length_primitive() {
        let h = hash_222_2(&length_primitive, b"ab", TAG_BUD);
        let mut expect = vec![0x02u8; 27];
        expect.push(0x03);
        assert_eq!(h.as_bytes(), &expect[..]);
    }

    #[test]
    fn hash_222_2_keeps_first_222_bits() {
        let p = Blake2b28;
        for tag in [TAG_LEAF, TAG_BRANCH, TAG_BUD] {
            let h = hash_222_2(&p, b"payload", tag);
            assert_eq!(h.as_bytes()[27] & 3, tag);
            assert_eq!(first_222_bit(h.as_bytes()).unwrap(), truncated_digest(&p, b"payload"));
        }
    }

    #[test]
    fn blake2b28_matches_reference_vector() {
        // python: hashlib.blake2b(b"", digest_size=28).hexdigest()
        assert_eq!(
            hex::encode(Blake2b28.digest(b"")),
            "836cc68931c2e4e3e838602eca1902591d216837bafddfe6f0c8cb07"
        );
    }

    #[test]
    fn first_222_bit_cases() {
        assert_eq!(first_222_bit(&[0u8; 28]).unwrap(), [0u8; 28]);
        let mut x = [7u8; 28];
        x[27] = 0xff;
        assert_eq!(first_222_bit(&x).unwrap()[27], 0xfc);
        assert_eq!(first_222_bit(&[0u8; 27]), Err(HashError::BadLength(27)));
    }

    #[test]
    fn merkle_hash_kinds() {
        let p = Blake2b28;
        assert_eq!(merkle_hash(&p, &Node::empty_bud()).unwrap(), HashValue::zero());
        let leaf = Node::leaf(b"x".to_vec());
        assert_eq!(kind_tag(&merkle_hash(&p, &leaf).unwrap()), Some(TAG_LEAF));
        let br = Node::branch(leaf.clone(), Node::empty_bud());
        assert_eq!(kind_tag(&merkle_hash(&p, &br).unwrap()), Some(TAG_BRANCH));
        let bud = Node::bud(Some(br.clone()));
        assert_eq!(kind_tag(&merkle_hash(&p, &bud).unwrap()), Some(TAG_BUD));
        let ext = Node::extender(key("RLR"), leaf);
        assert_eq!(merkle_hash(&p, &ext).unwrap().len(), 28 + 1);
        assert_eq!(
            merkle_hash(&p, &Node::Disk(Index(4))),
            Err(HashError::Disk(Index(4)))
        );
    }

    #[test]
    fn before_hash_seq_cases() {
        let p = Blake2b28;
        let leaf = Node::leaf(b"v".to_vec());
        assert_eq!(before_hash_seq(&p, &leaf).unwrap(), b"v".to_vec());
        let bud = Node::bud(Some(Node::branch(leaf.clone(), leaf.clone())));
        let s = before_hash_seq(&p, &bud).unwrap();
        assert_eq!(s.len(), 28);
        assert_eq!(
            truncated_digest(&p, &s),
            first_222_bit(merkle_hash(&p, &bud).unwrap().as_bytes()).unwrap()
        );
        assert!(before_hash_seq(&p, &Node::empty_bud()).is_err());
        assert!(before_hash_seq(&p, &Node::extender(key("L"), leaf)).is_err());
    }

    #[test]
    fn reduce_rejects_non_collisions() {
        let p = Blake2b28;
        let a = Node::leaf(b"a".to_vec());
        let b = Node::leaf(b"b".to_vec());
        assert!(matches!(
            collision_reduce(&p, &a, &b),
            Err(HashError::NotACollision(_))
        ));
        assert!(matches!(
            collision_reduce(&p, &a, &a.clone()),
            Err(HashError::NotACollision(_))
        ));
    }

    #[test]
    fn reduce_leaf_collision_under_constant_primitive() {
        // every input collides
        let p = |_: &[u8]| [0x40u8; DIGEST_LEN];
        let a = Node::leaf(b"a".to_vec());
        let b = Node::leaf(b"b".to_vec());
        let r = collision_reduce(&p, &a, &b).unwrap();
        assert_eq!(r, AttackInstance::Collision(b"a".to_vec(), b"b".to_vec()));
        assert!(r.is_valid(&p));
    }

    #[test]
    fn reduce_empty_bud_against_zero_branch() {
        let p = |_: &[u8]| [0u8; DIGEST_LEN];
        let br = Node::branch(Node::leaf(b"a".to_vec()), Node::leaf(b"b".to_vec()));
        let (r, steps) = collision_reduce_traced(&p, &Node::empty_bud(), &br).unwrap();
        assert_eq!(steps, 0);
        assert_eq!(r, AttackInstance::Preimage(before_hash_seq(&p, &br).unwrap()));
        assert!(r.is_valid(&p));
    }

    #[test]
    fn reduce_descends_through_extenders() {
        let p = |x: &[u8]| [(x.len() as u8) << 2; DIGEST_LEN];
        let c1 = Node::branch(Node::leaf(b"a".to_vec()), Node::leaf(b"b".to_vec()));
        let c2 = Node::branch(Node::leaf(b"c".to_vec()), Node::leaf(b"d".to_vec()));
        let e1 = Node::extender(key("L"), c1.clone());
        let e2 = Node::extender(key("L"), c2.clone());
        let (direct, _) = collision_reduce_traced(&p, &c1, &c2).unwrap();
        let (via, steps) = collision_reduce_traced(&p, &e1, &e2).unwrap();
        assert_eq!(direct, via);
        assert_eq!(steps, 2);
        assert_eq!(via, AttackInstance::Collision(b"a".to_vec(), b"c".to_vec()));
    }
}
