//! Eigen-based solution of the normal equations.
//!
//! The matrix is fully diagonalised, eigenpairs with `|lambda| <= threshold`
//! are discarded and the rest are applied to the right-hand side as
//! `x = sum_k (v_k . b) * w(lambda_k) * v_k` with `w(lambda) = 1 / lambda`
//! by default. In split mode the largest-magnitude half and the
//! smallest-magnitude half of the spectrum are found and applied in two
//! separate passes and the partial solutions summed.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Sorted by descending magnitude.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[k]` belongs to `eigenvalues[k]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl Spectrum {
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.eigenvectors.first().map_or(0, Vec::len)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue"])?;
        for (k, lambda) in self.eigenvalues.iter().enumerate() {
            w.write_record([k.to_string(), format!("{lambda:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    #[default]
    Full,
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Eigenpairs with `|lambda| <= threshold` are dropped.
    pub threshold: f64,
    pub mode: SolveMode,
    /// Largest-magnitude pairs to consider; `None` means all of them.
    pub requested_pairs: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            threshold: 0.0,
            mode: SolveMode::Full,
            requested_pairs: None,
        }
    }
}

impl SolverConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eigenvalue threshold {} must be non-negative",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Which part of the spectrum a partial solve keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Portion {
    All,
    Largest(usize),
    Smallest(usize),
}

pub fn check_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let limit = SYMMETRY_TOLERANCE * a.max_abs();
    let asymmetry = a.max_asymmetry();
    if asymmetry > limit {
        return Err(Error::NotSymmetric { asymmetry, limit });
    }
    Ok(())
}

/// All eigenpairs of a symmetric matrix by cyclic Jacobi rotations.
pub fn eigendecompose(a: &Matrix) -> Result<Spectrum> {
    eigendecompose_portion(a, Portion::All)
}

pub fn eigendecompose_portion(a: &Matrix, portion: Portion) -> Result<Spectrum> {
    check_symmetric(a)?;
    let n = a.rows();
    // Work on the exactly symmetrised copy.
    let mut m = a.clone();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = Matrix::identity(n);
    jacobi_sweeps(&mut m, &mut v)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(y, y)].abs().total_cmp(&m[(x, x)].abs()));
    let keep: &[usize] = match portion {
        Portion::All => &order,
        Portion::Largest(k) => &order[..k.min(n)],
        Portion::Smallest(k) => &order[n - k.min(n)..],
    };
    let eigenvalues = keep.iter().map(|&k| m[(k, k)]).collect();
    let eigenvectors = keep
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..n).map(|i| v[(i, k)]).collect();
            // Fix the sign so the first significant component is positive.
            if let Some(first) = col.iter().find(|c| c.abs() > 1e-12) {
                if *first < 0.0 {
                    col.iter_mut().for_each(|c| *c = -*c);
                }
            }
            col
        })
        .collect();
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn jacobi_sweeps(m: &mut Matrix, v: &mut Matrix) -> Result<()> {
    let n = m.rows();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                if apq.abs() <= f64::EPSILON * (app * aqq).abs().sqrt() || apq.abs() < 1e-300 {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                {
                    let (row_p, row_q) = two_rows(m, p, q);
                    for (x, y) in row_p.iter_mut().zip(row_q.iter_mut()) {
                        let (mp, mq) = (*x, *y);
                        *x = c * mp - s * mq;
                        *y = s * mp + c * mq;
                    }
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::NoConvergence {
        sweeps: MAX_SWEEPS,
        off_norm: off_diagonal_norm(m),
    })
}

fn two_rows(m: &mut Matrix, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let cols = m.cols();
    let (head, tail) = m.as_mut_slice().split_at_mut(q * cols);
    (&mut head[p * cols..(p + 1) * cols], &mut tail[..cols])
}

/// Indices of the eigenpairs that survive truncation.
pub fn retained_pairs(s: &Spectrum, cfg: &SolverConfig) -> Vec<usize> {
    let limit = cfg.requested_pairs.unwrap_or(s.count()).min(s.count());
    (0..limit)
        .filter(|&k| s.eigenvalues[k].abs() > cfg.threshold)
        .collect()
}

/// Truncated spectral pseudo-inverse applied to `b`.
pub fn apply_eigenpairs(s: &Spectrum, b: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    apply_eigenpairs_with(s, b, cfg, |lambda| 1.0 / lambda)
}

/// As [`apply_eigenpairs`] with a caller-supplied eigenvalue weight.
pub fn apply_eigenpairs_with<W>(s: &Spectrum, b: &[f64], cfg: &SolverConfig, weight: W) -> Result<Vec<f64>>
where
    W: Fn(f64) -> f64,
{
    cfg.validate()?;
    if s.count() > 0 && s.dim() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            found: b.len(),
        });
    }
    let mut x = vec![0.0; b.len()];
    for k in retained_pairs(s, cfg) {
        let lambda = s.eigenvalues[k];
        let w = weight(lambda);
        if lambda == 0.0 || !w.is_finite() {
            return Err(Error::DivisionGuard { eigenvalue: lambda });
        }
        let v = &s.eigenvectors[k];
        let coeff = dot(v, b) * w;
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi += coeff * vi;
        }
    }
    Ok(x)
}

pub fn solve_full(a: &Matrix, b: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let spectrum = eigendecompose(a)?;
    apply_eigenpairs(&spectrum, b, cfg)
}

/// Two-pass solve: the `n/2` largest-magnitude pairs first, then the
/// remaining smallest-magnitude pairs, summing both partial solutions.
pub fn solve_split(a: &Matrix, b: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    let n = a.rows();
    let upper = n / 2;
    let pass_cfg = SolverConfig {
        requested_pairs: None,
        ..*cfg
    };
    let large = eigendecompose_portion(a, Portion::Largest(upper))?;
    let mut x = apply_eigenpairs(&large, b, &pass_cfg)?;
    drop(large);
    let small = eigendecompose_portion(a, Portion::Smallest(n - upper))?;
    let x_small = apply_eigenpairs(&small, b, &pass_cfg)?;
    for (xi, yi) in x.iter_mut().zip(x_small) {
        *xi += yi;
    }
    Ok(x)
}

pub fn solve(a: &Matrix, b: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    match cfg.mode {
        SolveMode::Full => solve_full(a, b, cfg),
        SolveMode::Split => solve_split(a, b, cfg),
    }
}
