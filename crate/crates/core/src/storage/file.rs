use std::fs::{File, OpenOptions};
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use crate::node::Index;

use super::cell::{Cell, CELL_SIZE};
use super::{CellReader, Storage, StorageError};

/// Storage backed by a file holding the same cell image as
/// [`super::StorageModel`].
///
/// The number of allocated cells is the file length divided by the cell
/// size; a partially written trailing cell is ignored and overwritten by
/// the next append. Appends go through a single positioned write, so a
/// reader never sees a cell count that includes unwritten cells.
#[derive(Debug)]
pub struct FileStorage {
    file: File,
    path: PathBuf,
    next_free: u64,
}

impl FileStorage {
    /// Creates a new storage file containing only the header. Fails if the
    /// file exists.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, StorageError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create_new(true)
            .open(&path)?;
        file.write_all(&Cell::header().0)?;
        file.sync_data()?;
        Ok(FileStorage {
            file,
            path,
            next_free: 1,
        })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, StorageError> {
        Self::open_with(path, true)
    }

    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Self, StorageError> {
        Self::open_with(path, false)
    }

    fn open_with(path: impl AsRef<Path>, write: bool) -> Result<Self, StorageError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().read(true).write(write).open(&path)?;
        let len = file.metadata()?.len();
        if len < CELL_SIZE as u64 {
            return Err(StorageError::BadMagic);
        }
        let mut header = Cell::zeroed();
        file.read_exact_at(&mut header.0, 0)?;
        header.check_header()?;
        Ok(FileStorage {
            file,
            path,
            next_free: len / CELL_SIZE as u64,
        })
    }

    /// Takes an exclusive lock on the file, blocking until other writers
    /// release theirs, and rereads the cell count.
    pub fn lock_exclusive(&mut self) -> Result<(), StorageError> {
        self.file.lock()?;
        self.next_free = self.file.metadata()?.len() / CELL_SIZE as u64;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self) -> &File {
        &self.file
    }

    /// The allocated cells as bytes, read back from the file.
    pub fn image(&self) -> Result<Vec<u8>, StorageError> {
        let mut buf = vec![0u8; self.next_free as usize * CELL_SIZE];
        self.file.read_exact_at(&mut buf, 0)?;
        Ok(buf)
    }

    pub fn sync(&self) -> Result<(), StorageError> {
        self.file.sync_data()?;
        Ok(())
    }
}

impl CellReader for FileStorage {
    fn next_free(&self) -> Index {
        Index(self.next_free)
    }

    fn read_cell(&self, i: Index) -> Result<Cell, StorageError> {
        if i.0 >= self.next_free {
            return Err(StorageError::OutOfRange {
                index: i.0,
                next_free: self.next_free,
            });
        }
        let mut c = Cell::zeroed();
        self.file.read_exact_at(&mut c.0, i.0 * CELL_SIZE as u64)?;
        Ok(c)
    }
}

impl Storage for FileStorage {
    fn append_cells(&mut self, cells: &[Cell]) -> Result<Index, StorageError> {
        let first = self.next_free;
        let end = first
            .checked_add(cells.len() as u64)
            .filter(|e| e.checked_mul(CELL_SIZE as u64).is_some())
            .ok_or(StorageError::Full)?;
        let bytes: Vec<u8> = cells.iter().flat_map(|c| c.0).collect();
        self.file.write_all_at(&bytes, first * CELL_SIZE as u64)?;
        self.next_free = end;
        Ok(Index(first))
    }
}
