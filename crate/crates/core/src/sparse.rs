//! Compressed sparse row storage and the shared numeric text conventions.
//!
//! Values in every text format are printed with 17 significant digits
//! (`{:.16e}`), which round-trips `f64` exactly.

use crate::error::{Error, Result};

/// Formats a value with 17 significant digits.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses a float previously written by [`fmt_g17`] (or any `f64` literal).
pub fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse {
        line,
        msg: format!("bad number {s:?}: {e}"),
    })
}

/// Immutable CSR matrix. Explicit zeros are kept: the stored pattern is
/// meaningful (it is the support mask of the source counts), not just an
/// encoding of nonzero values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from triplets sorted by `(row, col)` with no duplicates.
    pub fn from_sorted_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(u32, u32, f64)],
    ) -> Result<Self> {
        let mut indptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for &(i, j, v) in triplets {
            if (i as usize) >= nrows || (j as usize) >= ncols {
                return Err(Error::IndexOutOfRange {
                    index: (i as usize).max(j as usize),
                    size: nrows.max(ncols),
                });
            }
            if let Some(prev) = last {
                if prev >= (i, j) {
                    return Err(Error::InvalidParameter(format!(
                        "triplets not sorted/unique at ({i}, {j})"
                    )));
                }
            }
            last = Some((i, j));
            indptr[i as usize + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            col_idx,
            values,
        })
    }

    /// Builds from dense rows, keeping only nonzero cells.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged dense input");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i as u32, j as u32, v));
                }
            }
        }
        Self::from_sorted_triplets(nrows, ncols, &triplets).expect("dense scan is sorted")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Value at `(i, j)` if the cell is in the stored pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&(j as u32)).ok().map(|p| vals[p])
    }

    /// Entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .map(move |(&j, &v)| (i as u32, j, v))
        })
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j as usize + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![0f64; self.nnz()];
        let mut cursor = counts;
        for (i, j, v) in self.iter() {
            let p = cursor[j as usize];
            col_idx[p] = i;
            values[p] = v;
            cursor[j as usize] += 1;
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            col_idx,
            values,
        }
    }

    /// Applies `f` to every stored value, keeping the pattern (including
    /// cells that map to zero).
    pub fn map_values(&self, f: impl Fn(f64) -> f64 + Sync) -> SparseMatrix {
        let values = crate::exec::map_collect(self.values.len(), |p| f(self.values[p]));
        SparseMatrix {
            values,
            ..self.clone()
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0f64; self.ncols];
        for (_, j, v) in self.iter() {
            sums[j as usize] += v;
        }
        sums
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0f64; self.ncols]; self.nrows];
        for (i, j, v) in self.iter() {
            rows[i as usize][j as usize] = v;
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_round_trips() {
        for &x in &[0.0, 1.0, -1.5, 1.0 / 3.0, 2.0f64.powi(-40), 1e300] {
            let s = fmt_g17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn transpose_matches_dense() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]]);
        let t = m.transpose();
        assert_eq!(t.nrows(), 3);
        assert_eq!(t.ncols(), 2);
        assert_eq!(t.get(2, 0), Some(2.0));
        assert_eq!(t.get(1, 1), Some(3.0));
        assert_eq!(t.get(0, 1), None);
    }

    #[test]
    fn rejects_unsorted_triplets() {
        let r = SparseMatrix::from_sorted_triplets(2, 2, &[(1, 0, 1.0), (0, 0, 1.0)]);
        assert!(r.is_err());
    }

    #[test]
    fn explicit_zeros_are_kept() {
        let m = SparseMatrix::from_sorted_triplets(1, 2, &[(0, 0, 0.0), (0, 1, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), Some(0.0));
    }
}
