use crate::error::{invalid, Result};

/// Coordinate-list sparse matrix. Entries are kept sorted by `(row, col)`,
/// duplicates are summed and exact zeros are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(invalid(format!(
                    "triplet ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(invalid(format!("non-finite weight at ({i}, {j})")));
            }
            entries.push((i, j, v));
        }
        Ok(Self::from_unchecked(rows, cols, entries))
    }

    /// Builds from triplets already known to be in range and finite.
    pub(crate) fn from_unchecked(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        // stable sort keeps insertion order among duplicates, so the summation
        // order is reproducible
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        SparseMatrix {
            rows,
            cols,
            entries: merged,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(i, j), |&(r, c, _)| (r, c))
            .map(|k| self.entries[k].2)
            .unwrap_or(0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.2.abs()))
    }

    /// `out = self * x`, accumulating each row in column order.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(i, j, v) in &self.entries {
            out[i] += v * x[j];
        }
    }

    /// Sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions must agree");
        let starts = rhs.row_starts();
        let mut out = Vec::new();
        for &(i, k, v) in &self.entries {
            for &(_, j, u) in &rhs.entries[starts[k]..starts[k + 1]] {
                out.push((i, j, v * u));
            }
        }
        SparseMatrix::from_unchecked(self.rows, rhs.cols, out)
    }

    /// Offsets of each row's first entry; length `rows + 1`.
    pub(crate) fn row_starts(&self) -> Vec<usize> {
        let mut starts = vec![0usize; self.rows + 1];
        for &(i, _, _) in &self.entries {
            starts[i + 1] += 1;
        }
        for r in 0..self.rows {
            starts[r + 1] += starts[r];
        }
        starts
    }

    /// Embeds `self` at row/column offsets inside a larger matrix.
    pub(crate) fn shifted(&self, row_off: usize, col_off: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries
            .iter()
            .map(move |&(i, j, v)| (i + row_off, j + col_off, v))
    }

    pub(crate) fn map_values(&self, f: impl Fn(f64) -> f64) -> SparseMatrix {
        let entries = self.entries.iter().map(|&(i, j, v)| (i, j, f(v))).collect();
        SparseMatrix::from_unchecked(self.rows, self.cols, entries)
    }
}
