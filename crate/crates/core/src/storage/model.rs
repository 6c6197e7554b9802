use crate::node::Index;

use super::cell::{Cell, CELL_SIZE};
use super::{CellReader, Storage, StorageError};

/// Pure in-memory storage: a growable array of cells whose first cell is
/// the header. Byte-for-byte the same image a [`super::FileStorage`]
/// holds after the same sequence of appends.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StorageModel {
    cells: Vec<Cell>,
}

impl Default for StorageModel {
    fn default() -> Self {
        Self::new()
    }
}

impl StorageModel {
    pub fn new() -> Self {
        StorageModel {
            cells: vec![Cell::header()],
        }
    }

    /// Parses a storage image. Trailing bytes that do not fill a whole cell
    /// are ignored, as an interrupted append would leave them.
    pub fn from_image(bytes: &[u8]) -> Result<Self, StorageError> {
        if bytes.len() < CELL_SIZE {
            return Err(StorageError::BadMagic);
        }
        let cells: Vec<Cell> = bytes
            .chunks_exact(CELL_SIZE)
            .map(|c| Cell(c.try_into().unwrap()))
            .collect();
        cells[0].check_header()?;
        Ok(StorageModel { cells })
    }

    pub fn image(&self) -> Vec<u8> {
        self.cells.iter().flat_map(|c| c.0).collect()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }
}

impl CellReader for StorageModel {
    fn next_free(&self) -> Index {
        Index(self.cells.len() as u64)
    }

    fn read_cell(&self, i: Index) -> Result<Cell, StorageError> {
        self.cells
            .get(i.0 as usize)
            .copied()
            .ok_or(StorageError::OutOfRange {
                index: i.0,
                next_free: self.cells.len() as u64,
            })
    }
}

impl Storage for StorageModel {
    fn append_cells(&mut self, cells: &[Cell]) -> Result<Index, StorageError> {
        let first = self.next_free();
        self.cells.extend_from_slice(cells);
        Ok(first)
    }
}
