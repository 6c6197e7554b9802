//! The `plebeia` command line.
//!
//! Roots are addressed by the index printed when they are committed. When
//! `--root` is omitted, commands use the head: the last cell of the file,
//! which is the root most recently committed. Mutating commands commit the
//! new root at once and print its index.
//!
//! Exit status: 0 success, 1 the operation found nothing to do (missing
//! key, key conflict), 2 usage or contract error, 3 corrupt storage.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::cursor::{go_up_to_root, zipper_of_root, BudZipper};
use crate::hash::{merkle_hash, Blake2b28};
use crate::model::{modelize_node, render_store};
use crate::node::{Index, Key, Node, Side, MAX_KEY_BITS};
use crate::ops::{self, OpError};
use crate::storage::{
    audit, commit_node, decode_node, resolve_all, stored_hash, verify_root, CellReader,
    FileStorage, StorageError, StorageHandle,
};

#[derive(Parser, Debug)]
#[command(name = "plebeia", version, about = "Authenticated nested key-value store")]
struct Cli {
    /// Storage file
    #[arg(long, global = true, env = "PLEBEIA_STORAGE")]
    storage: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Create an empty storage file
    Init {
        /// Path of the new file (defaults to --storage)
        path: Option<PathBuf>,
    },
    /// Bind a value at a key and commit
    Insert {
        #[command(flatten)]
        at: At,
        #[command(flatten)]
        value: ValueArg,
    },
    /// Print the value at a key as hex
    Get {
        #[command(flatten)]
        at: At,
    },
    /// Remove the value or subtree at a key and commit
    Delete {
        #[command(flatten)]
        at: At,
    },
    /// Create an empty subtree at a key and commit
    Mkdir {
        #[command(flatten)]
        at: At,
    },
    /// Commit a root and print its index and hash
    Commit {
        #[command(flatten)]
        root: RootArg,
    },
    /// Print the hash of a root
    Root {
        #[command(flatten)]
        root: RootArg,
    },
    /// Verify a root and every allocated cell
    Check {
        #[command(flatten)]
        root: RootArg,
    },
    /// Print the contents of a root, or of the subtree at --key
    Dump {
        #[command(flatten)]
        root: RootArg,
        /// Subtree to print
        #[arg(long)]
        key: Option<String>,
    },
}

#[derive(Args, Debug)]
struct RootArg {
    /// Root index (defaults to the last committed root)
    #[arg(long)]
    root: Option<u64>,
}

#[derive(Args, Debug)]
struct At {
    #[command(flatten)]
    root: RootArg,
    /// Key as L/R characters or 0x-prefixed hex; `/` descends into subtrees
    #[arg(long)]
    key: String,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct ValueArg {
    #[arg(long)]
    value_hex: Option<String>,
    #[arg(long)]
    value_file: Option<PathBuf>,
}

enum Failure {
    Semantic(String),
    Usage(String),
    Corrupt(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Semantic(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Corrupt(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Semantic(m) | Failure::Usage(m) | Failure::Corrupt(m) => m,
        }
    }
}

impl From<StorageError> for Failure {
    fn from(e: StorageError) -> Self {
        if e.is_corruption() {
            Failure::Corrupt(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<OpError> for Failure {
    fn from(e: OpError) -> Self {
        match e {
            OpError::Storage(e) => e.into(),
            e => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Parses one key component: L/R characters, or `0x` and hex digits read
/// as bits, most significant first.
pub fn parse_key(s: &str) -> Result<Key, String> {
    let key = if let Some(h) = s.strip_prefix("0x") {
        let mut sides = Vec::with_capacity(h.len() * 4);
        for c in h.chars() {
            let d = c.to_digit(16).ok_or_else(|| format!("bad hex digit {c:?} in key {s:?}"))?;
            sides.extend((0..4).rev().map(|b| Side::from_bit(d >> b & 1 == 1)));
        }
        Key::new(sides)
    } else {
        Key::parse_lr(s).ok_or_else(|| format!("key {s:?} must use only L and R"))?
    };
    if key.is_empty() {
        return Err("key must not be empty".into());
    }
    if key.len() > MAX_KEY_BITS {
        return Err(format!("key of {} bits exceeds the {MAX_KEY_BITS}-bit limit", key.len()));
    }
    Ok(key)
}

/// Parses a `/`-separated key path.
pub fn parse_key_path(s: &str) -> Result<Vec<Key>, String> {
    s.split('/').map(parse_key).collect()
}

fn storage_path(cli: &Cli) -> Result<&PathBuf, Failure> {
    cli.storage
        .as_ref()
        .ok_or_else(|| Failure::Usage("no storage given (use --storage or PLEBEIA_STORAGE)".into()))
}

fn head(s: &dyn CellReader) -> Option<Index> {
    let n = s.next_free().0;
    (n > 1).then(|| Index(n - 1))
}

fn load_root(s: &dyn CellReader, root: &RootArg) -> Result<BudZipper, Failure> {
    let node = match root.root.map(Index).or_else(|| head(s)) {
        None => Node::empty_bud(),
        Some(i) => {
            if i.0 == 0 || i.0 >= s.next_free().0 {
                return Err(Failure::Usage(format!("no root at index {}", i.0)));
            }
            match decode_node(s, i) {
                Err(StorageError::NotANode(_)) => {
                    return Err(Failure::Usage(format!("index {} is not a node", i.0)))
                }
                r => r?,
            }
        }
    };
    zipper_of_root(node).map_err(|e| Failure::Usage(e.to_string()))
}

fn descend(
    z: BudZipper,
    keys: &[Key],
    h: StorageHandle<'_>,
) -> Result<BudZipper, Failure> {
    let mut z = z;
    let mut walked = Vec::new();
    for k in keys {
        walked.push(k.to_string());
        z = ops::subtree(&z, k, h)?
            .ok_or_else(|| Failure::Semantic(format!("no subtree at {}", walked.join("/"))))?;
    }
    Ok(z)
}

fn read_value(v: &ValueArg) -> Result<Vec<u8>, Failure> {
    match (&v.value_hex, &v.value_file) {
        (Some(h), _) => hex::decode(h).map_err(|e| Failure::Usage(format!("bad --value-hex: {e}"))),
        (None, Some(f)) => Ok(std::fs::read(f)?),
        (None, None) => unreachable!("clap requires one value source"),
    }
}

enum Edit<'a> {
    Insert(&'a ValueArg),
    Mkdir,
    Delete,
}

fn mutate(cli: &Cli, at: &At, edit: Edit<'_>, out: &mut dyn Write) -> Result<(), Failure> {
    let keys = parse_key_path(&at.key).map_err(Failure::Usage)?;
    let value = match &edit {
        Edit::Insert(v) => Some(read_value(v)?),
        _ => None,
    };
    let mut s = FileStorage::open(storage_path(cli)?)?;
    s.lock_exclusive()?;
    let root = {
        let h = StorageHandle::from(&s);
        let (last, dirs) = keys.split_last().expect("at least one component");
        let z = descend(load_root(&s, &at.root)?, dirs, h)?;
        let r = match edit {
            Edit::Insert(_) => ops::insert(&z, last, value.unwrap_or_default(), h)?,
            Edit::Mkdir => ops::create_subtree(&z, last, h)?,
            Edit::Delete => ops::delete(&z, last, h)?,
        };
        let r = r.ok_or_else(|| {
            Failure::Semantic(match edit {
                Edit::Delete => format!("nothing at {}", at.key),
                _ => format!(
                    "cannot bind {}: key is bound, or is a prefix or extension of a bound key",
                    at.key
                ),
            })
        })?;
        go_up_to_root(r.zipper())
    };
    let (_, i) = commit_node(&mut s, &Blake2b28, &root)?;
    s.sync()?;
    writeln!(out, "{}", i.0)?;
    Ok(())
}

fn run_cmd(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match &cli.cmd {
        Cmd::Init { path } => {
            let path = match path {
                Some(p) => p,
                None => storage_path(cli)?,
            };
            FileStorage::create(path)?;
        }
        Cmd::Insert { at, value } => mutate(cli, at, Edit::Insert(value), out)?,
        Cmd::Mkdir { at } => mutate(cli, at, Edit::Mkdir, out)?,
        Cmd::Delete { at } => mutate(cli, at, Edit::Delete, out)?,
        Cmd::Get { at } => {
            let keys = parse_key_path(&at.key).map_err(Failure::Usage)?;
            let s = FileStorage::open_read_only(storage_path(cli)?)?;
            let h = StorageHandle::from(&s);
            let (last, dirs) = keys.split_last().expect("at least one component");
            let z = descend(load_root(&s, &at.root)?, dirs, h)?;
            let v = ops::get_value(&z, last, h)?
                .ok_or_else(|| Failure::Semantic(format!("no value at {}", at.key)))?;
            writeln!(out, "{}", hex::encode(v))?;
        }
        Cmd::Commit { root } => {
            let mut s = FileStorage::open(storage_path(cli)?)?;
            s.lock_exclusive()?;
            let z = load_root(&s, root)?;
            let (n, i) = commit_node(&mut s, &Blake2b28, z.focus())?;
            s.sync()?;
            let hash = n.hash_field().expect("committed bud is hashed");
            writeln!(out, "{} {}", i.0, hash)?;
        }
        Cmd::Root { root } => {
            let s = FileStorage::open_read_only(storage_path(cli)?)?;
            let z = load_root(&s, root)?;
            let hash = match z.focus().index() {
                Some(i) => stored_hash(&s, i)?,
                None => merkle_hash(&Blake2b28, z.focus()).map_err(StorageError::from)?,
            };
            writeln!(out, "{hash}")?;
        }
        Cmd::Check { root } => {
            let s = FileStorage::open_read_only(storage_path(cli)?)?;
            let mut problems = Vec::new();
            let target = root.root.map(Index).or_else(|| head(&s));
            let mut summary = String::from("ok: no roots");
            if let Some(i) = target {
                if i.0 == 0 || i.0 >= s.next_free().0 {
                    return Err(Failure::Usage(format!("no root at index {}", i.0)));
                }
                let r = verify_root(&s, &Blake2b28, i)?;
                problems.extend(r.violations.iter().map(|v| format!("root {}: {v}", i.0)));
                if let Some(h) = r.hash {
                    summary = format!("ok: root {}, {} nodes, hash {h}", i.0, r.nodes);
                }
            }
            let a = audit(&s, &Blake2b28)?;
            problems.extend(a.issues.iter().map(|(j, m)| format!("cell {j}: {m}")));
            if problems.is_empty() {
                writeln!(out, "{summary}")?;
                writeln!(out, "cells: {} node, {} value", a.node_cells, a.value_cells)?;
            } else {
                for p in &problems {
                    writeln!(out, "{p}")?;
                }
                return Err(Failure::Corrupt(format!("{} problem(s) found", problems.len())));
            }
        }
        Cmd::Dump { root, key } => {
            let s = FileStorage::open_read_only(storage_path(cli)?)?;
            let h = StorageHandle::from(&s);
            let mut z = load_root(&s, root)?;
            if let Some(k) = key {
                let keys = parse_key_path(k).map_err(Failure::Usage)?;
                z = descend(z, &keys, h)?;
            }
            let full = resolve_all(h, z.focus())?;
            let m = modelize_node(&full).map_err(|e| Failure::Corrupt(e.to_string()))?;
            write!(out, "{}", render_store(&m))?;
        }
    }
    Ok(())
}

/// Runs the command line `args` (including the program name) and returns
/// the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match run_cmd(&cli, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}
