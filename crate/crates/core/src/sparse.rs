//! Sparse boolean matrices stored as adjacency lists.
//!
//! Every place-graph relation (region→node, node→node, ...) is a
//! [`SparseBoolMatrix`]. Only the true cells are stored, once in a
//! row-major map and once in a column-major map, so both children and
//! parents of an index are available without scanning. Storage is linear
//! in the number of true cells.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SparseError {
    #[error("index ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

static EMPTY: BTreeSet<usize> = BTreeSet::new();

/// Boolean matrix with ordered row and column adjacency lists.
#[derive(Debug, Clone, Default)]
pub struct SparseBoolMatrix {
    rows: usize,
    cols: usize,
    r_major: BTreeMap<usize, BTreeSet<usize>>,
    c_major: BTreeMap<usize, BTreeSet<usize>>,
    entries: usize,
}

impl PartialEq for SparseBoolMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.entries == other.entries
            && self.r_major == other.r_major
    }
}

impl Eq for SparseBoolMatrix {}

impl SparseBoolMatrix {
    /// All-false matrix of the given shape.
    pub fn make(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            ..Self::default()
        }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::make(n, n);
        for i in 0..n {
            m.insert_unchecked(i, i);
        }
        m
    }

    /// Builds a matrix from a list of true cells.
    pub fn from_entries<I>(rows: usize, cols: usize, entries: I) -> Result<Self, SparseError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut m = Self::make(rows, cols);
        for (i, j) in entries {
            m.add(i, j)?;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of true cells.
    pub fn entries(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    fn check(&self, i: usize, j: usize) -> Result<(), SparseError> {
        if i < self.rows && j < self.cols {
            Ok(())
        } else {
            Err(SparseError::OutOfBounds {
                row: i,
                col: j,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    fn insert_unchecked(&mut self, i: usize, j: usize) -> bool {
        let fresh = self.r_major.entry(i).or_default().insert(j);
        if fresh {
            self.c_major.entry(j).or_default().insert(i);
            self.entries += 1;
        }
        fresh
    }

    /// Sets cell `(i, j)`. Idempotent; returns whether the cell was newly set.
    pub fn add(&mut self, i: usize, j: usize) -> Result<bool, SparseError> {
        self.check(i, j)?;
        Ok(self.insert_unchecked(i, j))
    }

    /// Clears cell `(i, j)`; returns whether it was set.
    pub fn remove(&mut self, i: usize, j: usize) -> Result<bool, SparseError> {
        self.check(i, j)?;
        let Some(row) = self.r_major.get_mut(&i) else {
            return Ok(false);
        };
        if !row.remove(&j) {
            return Ok(false);
        }
        if row.is_empty() {
            self.r_major.remove(&i);
        }
        if let Some(col) = self.c_major.get_mut(&j) {
            col.remove(&i);
            if col.is_empty() {
                self.c_major.remove(&j);
            }
        }
        self.entries -= 1;
        Ok(true)
    }

    pub fn mem(&self, i: usize, j: usize) -> bool {
        self.r_major.get(&i).is_some_and(|r| r.contains(&j))
    }

    /// Columns set in row `i` (children).
    pub fn chl(&self, i: usize) -> Result<&BTreeSet<usize>, SparseError> {
        if i >= self.rows {
            return Err(SparseError::OutOfBounds {
                row: i,
                col: 0,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.r_major.get(&i).unwrap_or(&EMPTY))
    }

    /// Rows set in column `j` (parents).
    pub fn prn(&self, j: usize) -> Result<&BTreeSet<usize>, SparseError> {
        if j >= self.cols {
            return Err(SparseError::OutOfBounds {
                row: 0,
                col: j,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.c_major.get(&j).unwrap_or(&EMPTY))
    }

    /// Children of row `i`, empty when out of range.
    pub(crate) fn row(&self, i: usize) -> &BTreeSet<usize> {
        self.r_major.get(&i).unwrap_or(&EMPTY)
    }

    /// Parents of column `j`, empty when out of range.
    pub(crate) fn col(&self, j: usize) -> &BTreeSet<usize> {
        self.c_major.get(&j).unwrap_or(&EMPTY)
    }

    /// Iterates over true cells in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.r_major
            .iter()
            .flat_map(|(&i, row)| row.iter().map(move |&j| (i, j)))
    }

    /// Rows with at least one true cell, ascending.
    pub fn nonempty_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.r_major.keys().copied()
    }

    /// Boolean product: `(i, j)` is set iff some `k` has `a[i][k]` and `b[k][j]`.
    pub fn mul(&self, other: &Self) -> Result<Self, SparseError> {
        if self.cols != other.rows {
            return Err(SparseError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::make(self.rows, other.cols);
        for (&i, row) in &self.r_major {
            for k in row {
                for &j in other.row(*k) {
                    out.insert_unchecked(i, j);
                }
            }
        }
        Ok(out)
    }

    /// Elementwise OR.
    pub fn sum(&self, other: &Self) -> Result<Self, SparseError> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (i, j) in other.iter() {
            out.insert_unchecked(i, j);
        }
        Ok(out)
    }

    /// Exact equality; errors when the shapes differ.
    pub fn equal(&self, other: &Self) -> Result<bool, SparseError> {
        self.same_shape(other)?;
        Ok(self == other)
    }

    fn same_shape(&self, other: &Self) -> Result<(), SparseError> {
        if self.rows == other.rows && self.cols == other.cols {
            Ok(())
        } else {
            Err(SparseError::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }

    fn require_square(&self) -> Result<(), SparseError> {
        if self.rows == self.cols {
            Ok(())
        } else {
            Err(SparseError::Shape(format!(
                "transitive closure needs a square matrix, got {}x{}",
                self.rows, self.cols
            )))
        }
    }

    /// Transitive closure by repeated multiplication until a fixed point.
    ///
    /// Kept as the reference implementation for [`Self::trans`].
    pub fn trans_naive(&self) -> Result<Self, SparseError> {
        self.require_square()?;
        let mut m = self.clone();
        let mut acc = self.clone();
        loop {
            let next = self.mul(&m)?;
            if next == m {
                return Ok(acc);
            }
            acc = acc.sum(&next)?;
            m = next;
        }
    }

    /// Transitive closure (reachability in one or more steps) by one DFS per
    /// source row.
    ///
    /// The DFS for a source walks the closure being built, so rows finished
    /// earlier are reused. The input must be acyclic; on a cyclic input the
    /// result is unspecified (debug builds assert an empty diagonal).
    pub fn trans(&self) -> Result<Self, SparseError> {
        self.require_square()?;
        let mut closure = self.clone();
        let sources: Vec<usize> = self.r_major.keys().copied().collect();
        let mut stack = Vec::new();
        for source in sources {
            // The row being extended is detached while its DFS reads other rows.
            let mut reach = closure.r_major.remove(&source).unwrap_or_default();
            let mut added = Vec::new();
            stack.extend(reach.iter().copied());
            while let Some(current) = stack.pop() {
                for &child in closure.row(current) {
                    if reach.insert(child) {
                        stack.push(child);
                        added.push(child);
                    }
                }
            }
            for child in added {
                closure.c_major.entry(child).or_default().insert(source);
                closure.entries += 1;
            }
            closure.r_major.insert(source, reach);
        }
        debug_assert!(
            (0..closure.rows).all(|i| !closure.mem(i, i)),
            "trans called on a cyclic matrix"
        );
        Ok(closure)
    }

    /// Checks that the two majors describe the same relation.
    pub fn is_transpose_consistent(&self) -> bool {
        let by_col: usize = self.c_major.values().map(BTreeSet::len).sum();
        by_col == self.entries
            && self.iter().all(|(i, j)| self.col(j).contains(&i))
            && self.iter().all(|(i, j)| i < self.rows && j < self.cols)
    }
}
