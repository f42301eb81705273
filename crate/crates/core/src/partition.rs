//! Contiguous row decomposition of an `n x n` matrix across ranks.
//!
//! Blocks are as even as possible; the first `n mod ranks` ranks take one
//! extra row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowPartition {
    n: usize,
    starts: Vec<usize>,
    ends: Vec<usize>,
}

impl RowPartition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ranks(&self) -> usize {
        self.starts.len()
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn ends(&self) -> &[usize] {
        &self.ends
    }

    /// Half-open global row range owned by `rank`.
    pub fn range(&self, rank: usize) -> std::ops::Range<usize> {
        self.starts[rank]..self.ends[rank]
    }

    pub fn local_rows(&self, rank: usize) -> usize {
        self.ends[rank] - self.starts[rank]
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        (0..self.ranks()).map(|k| self.local_rows(k)).collect()
    }

    pub fn owns(&self, rank: usize, row: usize) -> bool {
        self.range(rank).contains(&row)
    }

    /// Rank owning global `row`.
    pub fn owner_of_row(&self, row: usize) -> Result<usize> {
        if row >= self.n {
            return Err(Error::IndexOutOfRange {
                index: row,
                extent: self.n,
            });
        }
        Ok(self.owner_unchecked(row))
    }

    // Closed form of the inverse of the block layout; callers guarantee row < n.
    pub(crate) fn owner_unchecked(&self, row: usize) -> usize {
        let ranks = self.ranks();
        let base = self.n / ranks;
        let extra = self.n % ranks;
        let big = extra * (base + 1);
        if row < big {
            row / (base + 1)
        } else {
            extra + (row - big) / base
        }
    }
}

pub fn partition_rows(n: usize, ranks: usize) -> Result<RowPartition> {
    if n == 0 {
        return Err(Error::InvalidConfig("matrix dimension must be at least 1".into()));
    }
    if ranks == 0 || ranks > n {
        return Err(Error::InvalidConfig(format!(
            "rank count {ranks} must lie in [1, {n}]"
        )));
    }
    let base = n / ranks;
    let extra = n % ranks;
    let mut starts = Vec::with_capacity(ranks);
    let mut ends = Vec::with_capacity(ranks);
    let mut next = 0;
    for k in 0..ranks {
        let size = base + usize::from(k < extra);
        starts.push(next);
        next += size;
        ends.push(next);
    }
    Ok(RowPartition { n, starts, ends })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn remainder_goes_to_lowest_ranks() {
        let p = partition_rows(10, 3).unwrap();
        assert_eq!(p.block_sizes(), vec![4, 3, 3]);
        assert_eq!(partition_rows(6, 6).unwrap().block_sizes(), vec![1; 6]);
    }

    #[test]
    fn three_way_layout_of_six_rows() {
        let p = partition_rows(6, 3).unwrap();
        let ranges: Vec<_> = (0..3).map(|k| p.range(k)).collect();
        assert_eq!(ranges, vec![0..2, 2..4, 4..6]);
    }

    #[test]
    fn owner_lookup() {
        let p = partition_rows(10, 3).unwrap();
        assert_eq!(p.owner_of_row(0).unwrap(), 0);
        assert_eq!(p.owner_of_row(9).unwrap(), 2);
        assert_eq!(p.owner_of_row(4).unwrap(), 1);
        assert!(matches!(
            p.owner_of_row(10),
            Err(Error::IndexOutOfRange { index: 10, extent: 10 })
        ));
    }

    #[test]
    fn rejects_bad_rank_counts() {
        assert!(partition_rows(4, 0).is_err());
        assert!(partition_rows(4, 5).is_err());
        assert!(partition_rows(0, 1).is_err());
    }

    proptest! {
        #[test]
        fn ranges_tile_rows((n, ranks) in (1usize..=256).prop_flat_map(|n| (Just(n), 1..=n))) {
            let p = partition_rows(n, ranks).unwrap();
            prop_assert_eq!(p.starts()[0], 0);
            prop_assert_eq!(p.ends()[ranks - 1], n);
            for k in 1..ranks {
                prop_assert_eq!(p.ends()[k - 1], p.starts()[k]);
            }
            let sizes = p.block_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for row in 0..n {
                let owner = p.owner_of_row(row).unwrap();
                prop_assert!(p.range(owner).contains(&row));
                prop_assert_eq!((0..ranks).filter(|&k| p.owns(k, row)).count(), 1);
            }
        }
    }
}
