//! Balanced, coordination-free selection of which symmetric cells each row
//! computes explicitly.
//!
//! Every row starts at its diagonal and walks right, wrapping past column
//! `n - 1` into the lower triangle. The walk length (the row quota) is the
//! base count `r = (n + 1) / 2`. When `r` is fractional the quota alternates
//! between `ceil(r)` and `floor(r)`, starting with the ceiling on row 0, and
//! the alternation is flipped for rows `>= n / 2` whenever `n / 2` is even.
//! The rule depends only on `n` and the row index, so ranks never have to
//! agree on anything beyond the matrix size.

use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::RowPartition;

/// Number of cells that must be computed for an `n x n` symmetric matrix.
pub fn global_cell_count(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidConfig("matrix dimension must be at least 1".into()));
    }
    Ok(n * (n + 1) / 2)
}

/// Exact base cells per row, `f / n = (n + 1) / 2`.
pub fn base_per_row(n: usize) -> Ratio<usize> {
    Ratio::new(n + 1, 2)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellQuota {
    pub n: usize,
    pub total: usize,
    pub per_row: Vec<usize>,
}

impl CellQuota {
    pub fn floor(&self) -> usize {
        base_per_row(self.n).floor().to_integer()
    }

    pub fn ceil(&self) -> usize {
        base_per_row(self.n).ceil().to_integer()
    }
}

/// Quota of a single row. `row < n` is the caller's responsibility.
#[inline]
pub fn quota_of(n: usize, row: usize) -> usize {
    if n % 2 == 1 {
        return n.div_ceil(2);
    }
    let half = n / 2;
    let mut take_ceil = row.is_multiple_of(2);
    if half.is_multiple_of(2) && row >= half {
        take_ceil = !take_ceil;
    }
    if take_ceil {
        half + 1
    } else {
        half
    }
}

pub fn row_quotas(n: usize) -> Result<CellQuota> {
    let total = global_cell_count(n)?;
    let per_row = (0..n).map(|row| quota_of(n, row)).collect();
    Ok(CellQuota { n, total, per_row })
}

/// Quotas for the rows of one rank, derived the way a rank would on its own:
/// the phase comes from the parity of its first row, alternates locally and
/// flips once when crossing into the second half.
pub fn rank_quotas(partition: &RowPartition, rank: usize) -> Vec<usize> {
    let n = partition.n();
    let range = partition.range(rank);
    if n % 2 == 1 {
        return vec![n.div_ceil(2); range.len()];
    }
    let half = n / 2;
    let swap_second_half = half.is_multiple_of(2);
    let mut take_ceil = range.start.is_multiple_of(2);
    if swap_second_half && range.start >= half {
        take_ceil = !take_ceil;
    }
    let mut out = Vec::with_capacity(range.len());
    for row in range {
        if swap_second_half && row == half && row != partition.range(rank).start {
            take_ceil = !take_ceil;
        }
        out.push(if take_ceil { half + 1 } else { half });
        take_ceil = !take_ceil;
    }
    out
}

/// Whether cell `(row, col)` is one of the explicitly computed cells.
#[inline]
pub fn is_assigned(n: usize, row: usize, col: usize) -> bool {
    let offset = (col + n - row) % n;
    offset < quota_of(n, row)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellAssignment {
    pub row: usize,
    pub columns: Vec<usize>,
}

pub fn assigned_columns(n: usize, row: usize) -> Result<CellAssignment> {
    if row >= n {
        return Err(Error::IndexOutOfRange { index: row, extent: n });
    }
    Ok(CellAssignment {
        row,
        columns: assigned_iter(n, row).collect(),
    })
}

/// Allocation-free walk over the assigned columns of `row`.
pub(crate) fn assigned_iter(n: usize, row: usize) -> impl Iterator<Item = usize> {
    (0..quota_of(n, row)).map(move |k| (row + k) % n)
}

pub fn verify_exact_coverage(n: usize) -> bool {
    if n == 0 {
        return false;
    }
    let mut hits = vec![0u32; n * n];
    for row in 0..n {
        for col in assigned_iter(n, row) {
            let (lo, hi) = if row <= col { (row, col) } else { (col, row) };
            hits[lo * n + hi] += 1;
        }
    }
    (0..n).all(|i| (i..n).all(|j| hits[i * n + j] == 1))
}

/// Text rendering of the assignment grid: `#` for computed cells, `.` for
/// cells filled by mirroring.
pub fn render_grid(n: usize) -> String {
    let mut out = String::with_capacity(n * (n + 8));
    for row in 0..n {
        for col in 0..n {
            out.push(if is_assigned(n, row, col) { '#' } else { '.' });
        }
        let _ = writeln!(out, "  {}", quota_of(n, row));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition_rows;

    #[test]
    fn cell_counts() {
        assert_eq!(global_cell_count(6).unwrap(), 21);
        assert_eq!(global_cell_count(1).unwrap(), 1);
        assert_eq!(global_cell_count(4).unwrap(), 10);
        assert!(global_cell_count(0).is_err());
    }

    #[test]
    fn base_cells() {
        assert_eq!(base_per_row(6), Ratio::new(7, 2));
        assert_eq!(*base_per_row(6).numer() as f64 / *base_per_row(6).denom() as f64, 3.5);
        assert!(base_per_row(5).is_integer());
        assert_eq!(base_per_row(5).to_integer(), 3);
        assert_eq!(base_per_row(4), Ratio::new(5, 2));
    }

    #[test]
    fn quotas_small() {
        assert_eq!(row_quotas(6).unwrap().per_row, vec![4, 3, 4, 3, 4, 3]);
        assert_eq!(row_quotas(5).unwrap().per_row, vec![3; 5]);
        assert_eq!(row_quotas(4).unwrap().per_row, vec![3, 2, 2, 3]);
    }

    #[test]
    fn columns_wrap() {
        assert_eq!(assigned_columns(6, 0).unwrap().columns, vec![0, 1, 2, 3]);
        assert_eq!(assigned_columns(4, 3).unwrap().columns, vec![3, 0, 1]);
        assert_eq!(assigned_columns(1, 0).unwrap().columns, vec![0]);
        assert!(assigned_columns(4, 4).is_err());
    }

    #[test]
    fn coverage_holds() {
        for n in 1..=128 {
            assert!(verify_exact_coverage(n), "n = {n}");
        }
    }

    #[test]
    fn rank_local_quotas_match_global_rule() {
        for n in 1..=64 {
            let global = row_quotas(n).unwrap().per_row;
            for ranks in 1..=n.min(16) {
                let p = partition_rows(n, ranks).unwrap();
                let stitched: Vec<usize> = (0..ranks).flat_map(|k| rank_quotas(&p, k)).collect();
                assert_eq!(stitched, global, "n = {n}, ranks = {ranks}");
            }
        }
    }

    #[test]
    fn grid_for_four() {
        let grid = render_grid(4);
        assert_eq!(grid, "###.  3\n.##.  2\n..##  2\n##.#  3\n");
    }
}
