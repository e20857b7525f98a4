//! Row-major sparse matrix over dense user/song indices.

use std::collections::BTreeMap;

/// Sparse matrix with deterministic (ascending-column) row iteration.
///
/// Absent entries mean "no observation", which is distinct from a stored
/// zero; callers decide which of the two they need.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    rows: Vec<BTreeMap<usize, T>>,
    n_cols: usize,
}

impl<T: Copy> SparseMatrix<T> {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            rows: vec![BTreeMap::new(); n_rows],
            n_cols,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<T> {
        self.rows[row].get(&col).copied()
    }

    pub fn insert(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(col < self.n_cols);
        self.rows[row].insert(col, value);
    }

    /// Entries of one row in ascending column order.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        self.rows[row].iter().map(|(&c, &v)| (c, v))
    }

    pub fn row_len(&self, row: usize) -> usize {
        self.rows[row].len()
    }

    /// All stored entries as (row, col, value), row-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, m)| m.iter().map(move |(&c, &v)| (r, c, v)))
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|m| m.len()).sum()
    }
}

impl<T: Copy + std::ops::AddAssign> SparseMatrix<T> {
    /// Add `value` to the entry, treating an absent entry as zero-valued.
    pub fn add(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(col < self.n_cols);
        match self.rows[row].get_mut(&col) {
            Some(v) => *v += value,
            None => {
                self.rows[row].insert(col, value);
            }
        }
    }
}
