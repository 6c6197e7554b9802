//! Random trees, keys and operation sequences shared by the integration
//! tests.
#![allow(dead_code)]

use std::sync::Arc;

use plebeia::cursor::{zipper_of_root, Path, Zipper};
use plebeia::model::{canonical_bud, modelize, modelize_node, NestedStore, NestedValue, ZipperModel};
use plebeia::node::MAX_KEY_BITS;
use plebeia::ops::{self, OpError};
use plebeia::storage::{
    commit_node, get_enough_fuel, load_node, resolve_all, CellReader, Storage, StorageError,
};
use plebeia::{Blake2b28, BudZipper, Key, Node, Side, StorageHandle, StorageModel, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Gen {
    pub rng: ChaCha8Rng,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn side(&mut self) -> Side {
        Side::from_bit(self.rng.gen())
    }

    /// Mostly short keys, so that random keys collide with stored ones;
    /// now and then a long one, up to the cap.
    pub fn key(&mut self) -> Key {
        let len = match self.rng.gen_range(0..100) {
            0..=1 => self.rng.gen_range(100..=MAX_KEY_BITS),
            2..=6 => self.rng.gen_range(9..=40),
            _ => self.rng.gen_range(1..=6),
        };
        Key::new((0..len).map(|_| self.side()).collect())
    }

    /// Mostly tiny values; some long enough to need value cells.
    pub fn value(&mut self) -> Value {
        let len = match self.rng.gen_range(0..100) {
            0..=4 => self.rng.gen_range(32..=200),
            _ => self.rng.gen_range(0..=3),
        };
        (0..len).map(|_| self.rng.gen()).collect()
    }

    /// A key related to `m`: one of its keys, a prefix or extension of
    /// one, or a fresh random key.
    pub fn key_near(&mut self, m: &NestedStore) -> Key {
        if m.is_empty() || self.rng.gen_bool(0.35) {
            return self.key();
        }
        let (k, _) = m.choose(&mut self.rng).unwrap();
        match self.rng.gen_range(0..10) {
            0..=5 => k.clone(),
            6..=7 if k.len() > 1 => Key::from(&k.sides()[..self.rng.gen_range(1..k.len())]),
            _ => {
                let extra: Vec<Side> = (0..self.rng.gen_range(1..=3)).map(|_| self.side()).collect();
                let ext = k.join(&extra);
                if ext.len() > MAX_KEY_BITS {
                    k.clone()
                } else {
                    ext
                }
            }
        }
    }

    pub fn map_key(&mut self, m: &NestedStore) -> Option<Key> {
        let maps: Vec<&Key> = m
            .iter()
            .filter(|(_, v)| matches!(v, NestedValue::Map(_)))
            .map(|(k, _)| k)
            .collect();
        maps.choose(&mut self.rng).map(|k| (*k).clone())
    }

    /// A random valid store with at most `max` bindings, nested up to
    /// `depth` levels.
    pub fn store(&mut self, max: usize, depth: usize) -> NestedStore {
        let n = self.rng.gen_range(0..=max);
        let mut m: ZipperModel = ZipperModel::default();
        for _ in 0..n {
            let k = self.key();
            let v = if depth > 0 && self.rng.gen_bool(0.2) {
                NestedValue::Map(self.store(max / 2, depth - 1))
            } else {
                NestedValue::Value(self.value())
            };
            if let Some(m2) = plebeia::model::m_insert(&m, &k, v) {
                m = m2;
            }
        }
        m.node
    }

    /// A random tree: the canonical bud for a random store.
    pub fn tree(&mut self, max: usize, depth: usize) -> Node {
        canonical_bud(&self.store(max, depth))
    }
}

#[derive(Clone, Debug)]
pub enum Op {
    Insert(Key, Value),
    Update(Key, Value),
    Delete(Key),
    CreateSubtree(Key),
    Descend(Key),
    Ascend,
    Get(Key),
    /// Commit the focus and continue with the committed node.
    Commit,
    /// Commit the focus and continue with it reloaded to the given depth,
    /// deeper nodes left on disk.
    Reload(usize),
}

/// A cursor together with the storage its Disk nodes refer to.
pub struct Session {
    pub z: BudZipper,
    pub store: StorageModel,
    /// Use the faulty delete that keeps indices on rebuilt nodes.
    pub faulty_delete: bool,
}

impl Session {
    pub fn new() -> Self {
        Session {
            z: zipper_of_root(Node::empty_bud()).unwrap(),
            store: StorageModel::new(),
            faulty_delete: false,
        }
    }

    pub fn handle(&self) -> StorageHandle<'_> {
        StorageHandle::from(&self.store)
    }

    pub fn model(&self) -> ZipperModel {
        model_of(&self.z, self.handle())
    }

    pub fn focus_store(&self) -> NestedStore {
        let n = resolve_all(self.handle(), self.z.focus()).unwrap();
        modelize_node(&n).unwrap()
    }

    pub fn random_op(&self, g: &mut Gen) -> Op {
        let m = self.focus_store();
        match g.rng.gen_range(0..100) {
            0..=29 => Op::Insert(g.key_near(&m), g.value()),
            30..=39 => Op::Update(g.key_near(&m), g.value()),
            40..=54 => Op::Delete(g.key_near(&m)),
            55..=62 => Op::CreateSubtree(g.key_near(&m)),
            63..=72 => match g.map_key(&m) {
                Some(k) if g.rng.gen_bool(0.8) => Op::Descend(k),
                _ => Op::Descend(g.key_near(&m)),
            },
            73..=79 => Op::Ascend,
            80..=87 => Op::Get(g.key_near(&m)),
            88..=93 => Op::Commit,
            _ => Op::Reload(g.rng.gen_range(0..=2)),
        }
    }

    /// Applies `op`; returns whether the operation took effect.
    pub fn apply(&mut self, op: &Op) -> Result<bool, OpError> {
        let h = StorageHandle::from(&self.store);
        let next = match op {
            Op::Insert(k, v) => ops::insert(&self.z, k, v.clone(), h)?,
            Op::Update(k, v) => ops::update(&self.z, k, v.clone(), h)?,
            Op::Delete(k) if self.faulty_delete => ops::delete_keeping_indices(&self.z, k, h)?,
            Op::Delete(k) => ops::delete(&self.z, k, h)?,
            Op::CreateSubtree(k) => ops::create_subtree(&self.z, k, h)?,
            Op::Descend(k) => ops::subtree(&self.z, k, h)?,
            Op::Ascend => ops::parent_bud(&self.z),
            Op::Get(k) => return Ok(ops::get_value(&self.z, k, h)?.is_some()),
            Op::Commit | Op::Reload(_) => {
                let (n, i) = commit_node(&mut self.store, &Blake2b28, self.z.focus())?;
                let focus = match op {
                    Op::Reload(d) => {
                        load_node(&self.store, i, get_enough_fuel(&self.store), *d)?.unwrap()
                    }
                    _ => n,
                };
                Some(BudZipper::new(Zipper::new(self.z.path().clone(), focus)).unwrap())
            }
        };
        Ok(match next {
            Some(z) => {
                self.z = z;
                true
            }
            None => false,
        })
    }

    /// A session after `n` random operations.
    pub fn random(g: &mut Gen, n: usize) -> Self {
        let mut s = Session::new();
        for _ in 0..n {
            let op = s.random_op(g);
            s.apply(&op).unwrap();
        }
        s
    }
}

impl Default for Session {
    fn default() -> Self {
        Self::new()
    }
}

/// The same frames with every Disk node below them loaded.
pub fn resolve_path(h: StorageHandle<'_>, p: &Path) -> Result<Path, StorageError> {
    let all = |n: &Arc<Node>| resolve_all(h, n).map(Arc::new);
    Ok(match p {
        Path::Top => Path::Top,
        Path::Left {
            parent,
            right,
            index,
            hash,
        } => Path::Left {
            parent: Arc::new(resolve_path(h, parent)?),
            right: all(right)?,
            index: *index,
            hash: hash.clone(),
        },
        Path::Right {
            left,
            parent,
            index,
            hash,
        } => Path::Right {
            left: all(left)?,
            parent: Arc::new(resolve_path(h, parent)?),
            index: *index,
            hash: hash.clone(),
        },
        Path::Extended { parent, key, index } => Path::Extended {
            parent: Arc::new(resolve_path(h, parent)?),
            key: key.clone(),
            index: *index,
        },
        Path::Budded {
            parent,
            index,
            hash,
        } => Path::Budded {
            parent: Arc::new(resolve_path(h, parent)?),
            index: *index,
            hash: hash.clone(),
        },
    })
}

pub fn model_of(z: &BudZipper, h: StorageHandle<'_>) -> ZipperModel {
    let full = Zipper::new(resolve_path(h, z.path()).unwrap(), resolve_all(h, z.focus()).unwrap());
    modelize(&BudZipper::new(full).unwrap()).unwrap()
}

/// Commits `n` and returns the root index.
pub fn commit<S: Storage>(s: &mut S, n: &Node) -> plebeia::Index {
    commit_node(s, &Blake2b28, n).unwrap().1
}

pub fn full_load(s: &dyn CellReader, i: plebeia::Index) -> Node {
    plebeia::storage::load_node_default(s, i).unwrap()
}
