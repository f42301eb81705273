//! Brute-force references used to check the distributed and spectral paths.
//!
//! Nothing here calls into the modules being checked: the matrix builder is
//! the classic single-process upper-triangle-then-copy scheme, the linear
//! solve is Gaussian elimination with partial pivoting, and the coverage
//! walk counts pairs itself.

use std::collections::BTreeMap;

use crate::assembly::{DatumContribution, ProblemSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Computes the diagonal and upper triangle by direct datum-major summation,
/// then copies the upper triangle into the lower one.
pub fn build_full_matrix_from(data: &[DatumContribution], n: usize) -> (Matrix, Vec<f64>) {
    let mut a = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for datum in data {
        let g = &datum.design_row;
        for i in 0..n {
            for j in i..n {
                a[(i, j)] += datum.weight * (g[i] * g[j]);
            }
            rhs[i] += datum.weight * (g[i] * datum.observation);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            a[(j, i)] = a[(i, j)];
        }
    }
    (a, rhs)
}

pub fn build_full_matrix(spec: &ProblemSpec) -> Result<(Matrix, Vec<f64>)> {
    let data = crate::assembly::generate_problem(spec)?;
    Ok(build_full_matrix_from(&data, spec.n))
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.cols(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let scale = a.max_abs();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let (pivot_row, pivot) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= scale * f64::EPSILON * n as f64 || pivot == 0.0 {
            return Err(Error::Singular { column: k });
        }
        if pivot_row != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(pivot_row, j)];
                m[(pivot_row, j)] = tmp;
            }
            x.swap(k, pivot_row);
        }
        for i in k + 1..n {
            let factor = m[(i, k)] / m[(k, k)];
            if factor == 0.0 {
                continue;
            }
            for j in k..n {
                m[(i, j)] -= factor * m[(k, j)];
            }
            x[i] -= factor * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= m[(k, j)] * x[j];
        }
        x[k] = s / m[(k, k)];
    }
    Ok(x)
}

/// Unordered pair `(lo, hi)` mapped to the ordered cell that covers it.
pub type CoverageMap = BTreeMap<(usize, usize), (usize, usize)>;

/// Walks every row's assignment and fails on the first duplicate or missing
/// pair.
pub fn enumerate_coverage(n: usize) -> Result<CoverageMap> {
    if n == 0 || n > 512 {
        return Err(Error::InvalidConfig(format!(
            "coverage enumeration needs 1 <= n <= 512, got {n}"
        )));
    }
    let mut map = CoverageMap::new();
    for row in 0..n {
        let cols = crate::sym_assign::assigned_columns(n, row)?.columns;
        for col in cols {
            let key = (row.min(col), row.max(col));
            if let Some(prev) = map.insert(key, (row, col)) {
                return Err(Error::CoverageViolation(format!(
                    "pair {key:?} covered by both {prev:?} and {:?}",
                    (row, col)
                )));
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            if !map.contains_key(&(i, j)) {
                return Err(Error::CoverageViolation(format!("pair ({i}, {j}) never computed")));
            }
        }
    }
    Ok(map)
}
