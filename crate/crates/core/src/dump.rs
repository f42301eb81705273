//! Per-rank matrix dumps in the packed triplet format, and the gather step
//! that merges them back into one dense matrix.

use std::fs;
use std::path::{Path, PathBuf};

use crate::assembly::LocalMatrixBlock;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rank_net::{pack, unpack, Triplet};

pub fn dump_file_name(rank: usize) -> String {
    format!("rank_{rank:04}.trip")
}

/// Writes every populated cell of every block to `dir/rank_NNNN.trip`.
pub fn write_rank_dumps(dir: &Path, blocks: &[LocalMatrixBlock]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    blocks
        .iter()
        .enumerate()
        .map(|(rank, block)| {
            let cells: Vec<Triplet> = block
                .cells()
                .filter_map(|(row, col, v)| v.map(|v| Triplet::new(row, col, v)))
                .collect();
            let path = dir.join(dump_file_name(rank));
            fs::write(&path, pack(&cells))?;
            Ok(path)
        })
        .collect()
}

/// Reads all `rank_*.trip` files in `dir` and merges them into an `n x n`
/// matrix, checking that each cell appears exactly once.
pub fn gather_dumps(dir: &Path) -> Result<Matrix> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.starts_with("rank_") && s.ends_with(".trip"))
        })
        .collect();
    paths.sort();
    let mut triplets = Vec::new();
    for path in &paths {
        triplets.extend(unpack(&fs::read(path)?)?);
    }
    let n = triplets
        .iter()
        .map(|t| t.row.max(t.col))
        .max()
        .map_or(0, |m| m as usize + 1);
    if triplets.len() != n * n {
        return Err(Error::ProtocolViolation(format!(
            "dumps hold {} cells, a {n} x {n} matrix needs {}",
            triplets.len(),
            n * n
        )));
    }
    let mut seen = vec![false; n * n];
    let mut a = Matrix::zeros(n, n);
    for t in triplets {
        if t.row < 0 || t.col < 0 {
            return Err(Error::ProtocolViolation(format!("negative index in ({}, {})", t.row, t.col)));
        }
        let (r, c) = (t.row as usize, t.col as usize);
        if std::mem::replace(&mut seen[r * n + c], true) {
            return Err(Error::ProtocolViolation(format!("cell ({r}, {c}) dumped twice")));
        }
        a[(r, c)] = t.value;
    }
    Ok(a)
}

/// Dense CSV, one matrix row per line, values in round-trip `{:e}` form.
pub fn write_matrix_csv(path: &Path, a: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for i in 0..a.rows() {
        w.write_record(a.row(i).iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Usage(format!("bad matrix entry {s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Matrix::from_rows(&rows))
}
