use std::fmt;

use super::StorageError;

pub const CELL_SIZE: usize = 64;

pub const MAGIC: &[u8; 4] = b"PLBF";
pub const FORMAT_VERSION: u16 = 1;

pub const TAG_LEAF: u8 = 0;
pub const TAG_BRANCH: u8 = 1;
pub const TAG_EXTENDER: u8 = 2;
pub const TAG_EMPTY_BUD: u8 = 3;
pub const TAG_BUD: u8 = 4;
pub const TAG_VALUE: u8 = 5;

/// One fixed-size storage record.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Cell(pub [u8; CELL_SIZE]);

impl Cell {
    pub fn zeroed() -> Cell {
        Cell([0; CELL_SIZE])
    }

    pub fn tagged(tag: u8) -> Cell {
        let mut c = Cell::zeroed();
        c.0[0] = tag;
        c
    }

    /// Header: magic, format version (u16 LE), cell size (u16 LE).
    pub fn header() -> Cell {
        let mut c = Cell::zeroed();
        c.0[0..4].copy_from_slice(MAGIC);
        c.0[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        c.0[6..8].copy_from_slice(&(CELL_SIZE as u16).to_le_bytes());
        c
    }

    pub fn check_header(&self) -> Result<(), StorageError> {
        if &self.0[0..4] != MAGIC {
            return Err(StorageError::BadMagic);
        }
        let version = u16::from_le_bytes([self.0[4], self.0[5]]);
        if version != FORMAT_VERSION {
            return Err(StorageError::UnsupportedVersion(version));
        }
        let size = u16::from_le_bytes([self.0[6], self.0[7]]);
        if size as usize != CELL_SIZE {
            return Err(StorageError::UnsupportedVersion(version));
        }
        Ok(())
    }

    pub fn tag(&self) -> u8 {
        self.0[0]
    }

    pub fn bytes(&self) -> &[u8; CELL_SIZE] {
        &self.0
    }

    pub(crate) fn put(&mut self, at: usize, bytes: &[u8]) {
        self.0[at..at + bytes.len()].copy_from_slice(bytes);
    }

    pub(crate) fn put_u64(&mut self, at: usize, v: u64) {
        self.put(at, &v.to_le_bytes());
    }

    pub(crate) fn get_u64(&self, at: usize) -> u64 {
        u64::from_le_bytes(self.0[at..at + 8].try_into().unwrap())
    }

    pub(crate) fn get_u32(&self, at: usize) -> u32 {
        u32::from_le_bytes(self.0[at..at + 4].try_into().unwrap())
    }

    pub(crate) fn get_u16(&self, at: usize) -> u16 {
        u16::from_le_bytes(self.0[at..at + 2].try_into().unwrap())
    }
}

impl fmt::Debug for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let used = self.0.iter().rposition(|&b| b != 0).map_or(1, |p| p + 1);
        write!(f, "Cell({})", hex::encode(&self.0[..used]))
    }
}
