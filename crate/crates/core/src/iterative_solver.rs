//! Preconditioned Krylov alternative to the eigen-based solve.
//!
//! Conjugate gradients with an optional Jacobi (diagonal) preconditioner is
//! the default for the symmetric positive definite normal matrix. Restarted
//! GMRES with the same right preconditioner is available for indefinite
//! input. Running out of iterations is an outcome, not an error.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm2, relative_residual, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Method {
    #[default]
    ConjugateGradient,
    Gmres { restart: usize },
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterativeConfig {
    pub rel_tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
    pub method: Method,
    /// Keep every iterate in the trace (small problems only).
    pub record_iterates: bool,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-4,
            max_iterations: 10_000,
            preconditioner: Preconditioner::Jacobi,
            method: Method::ConjugateGradient,
            record_iterates: false,
        }
    }
}

impl IterativeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "relative tolerance {} must lie in (0, 1)",
                self.rel_tolerance
            )));
        }
        if let Method::Gmres { restart: 0 } = self.method {
            return Err(Error::InvalidConfig("GMRES restart length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Residual estimate carried by the recurrence.
    pub recurrence_residual: f64,
    /// `||b - A x|| / ||b||` recomputed from the iterate.
    pub true_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterativeOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Recomputed from scratch, never taken from the recurrence.
    pub final_residual: f64,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
    #[serde(skip)]
    pub iterates: Vec<Vec<f64>>,
}

impl IterativeOutcome {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "recurrence_residual", "true_residual"])?;
        for t in &self.trace {
            w.write_record([
                t.iteration.to_string(),
                format!("{:e}", t.recurrence_residual),
                format!("{:e}", t.true_residual),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cholesky attempt; fails on the first non-positive pivot.
pub fn check_positive_definite(a: &Matrix) -> Result<()> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(())
}

fn inverse_diagonal(a: &Matrix, kind: Preconditioner) -> Vec<f64> {
    let n = a.rows();
    match kind {
        Preconditioner::None => vec![1.0; n],
        Preconditioner::Jacobi => (0..n)
            .map(|i| {
                let d = a[(i, i)];
                if d != 0.0 {
                    1.0 / d
                } else {
                    1.0
                }
            })
            .collect(),
    }
}

pub fn solve_iterative(a: &Matrix, b: &[f64], cfg: &IterativeConfig) -> Result<IterativeOutcome> {
    cfg.validate()?;
    crate::spectral_solver::check_symmetric(a)?;
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }
    match cfg.method {
        Method::ConjugateGradient => {
            if a.rows() <= 512 {
                check_positive_definite(a)?;
            }
            conjugate_gradient(a, b, cfg)
        }
        Method::Gmres { restart } => gmres(a, b, restart, cfg),
    }
}

fn conjugate_gradient(a: &Matrix, b: &[f64], cfg: &IterativeConfig) -> Result<IterativeOutcome> {
    let n = a.rows();
    let minv = inverse_diagonal(a, cfg.preconditioner);
    let nb = norm2(b);
    let mut x = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    if nb == 0.0 {
        return Ok(IterativeOutcome {
            solution: x,
            iterations: 0,
            final_residual: 0.0,
            converged: true,
            trace,
            iterates,
        });
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(ri, mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let recurrence = norm2(&r) / nb;
        let true_residual = relative_residual(a, &x, b);
        trace.push(TraceEntry {
            iteration: iterations,
            recurrence_residual: recurrence,
            true_residual,
        });
        if cfg.record_iterates {
            iterates.push(x.clone());
        }
        if true_residual <= cfg.rel_tolerance {
            break;
        }
        if recurrence <= cfg.rel_tolerance {
            // The recurrence drifted from the true residual; restart from it.
            r = a.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let final_residual = relative_residual(a, &x, b);
    Ok(IterativeOutcome {
        solution: x,
        iterations,
        final_residual,
        converged: final_residual <= cfg.rel_tolerance,
        trace,
        iterates,
    })
}

// Right-preconditioned restarted GMRES with Givens rotations.
fn gmres(a: &Matrix, b: &[f64], restart: usize, cfg: &IterativeConfig) -> Result<IterativeOutcome> {
    let n = a.rows();
    let minv = inverse_diagonal(a, cfg.preconditioner);
    let nb = norm2(b);
    let mut x = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    let mut iterations = 0;
    if nb == 0.0 {
        return Ok(IterativeOutcome {
            solution: x,
            iterations,
            final_residual: 0.0,
            converged: true,
            trace,
            iterates,
        });
    }
    let m = restart.min(n).max(1);
    'outer: while iterations < cfg.max_iterations {
        let r: Vec<f64> = a.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        let beta = norm2(&r);
        if beta / nb <= cfg.rel_tolerance {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < cfg.max_iterations {
            let zk: Vec<f64> = basis[k].iter().zip(&minv).map(|(v, mi)| v * mi).collect();
            let mut w = a.matvec(&zk);
            for j in 0..=k {
                h[j][k] = dot(&w, &basis[j]);
                for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                    *wi -= h[j][k] * vi;
                }
            }
            h[k + 1][k] = norm2(&w);
            for j in 0..k {
                let tmp = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = tmp;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            let next = w.iter().map(|v| v / denom).collect();
            basis.push(next);
            k += 1;
            iterations += 1;

            let candidate = gmres_update(&x, &h, &g, &basis, &minv, k);
            let true_residual = relative_residual(a, &candidate, b);
            trace.push(TraceEntry {
                iteration: iterations,
                recurrence_residual: g[k].abs() / nb,
                true_residual,
            });
            if cfg.record_iterates {
                iterates.push(candidate.clone());
            }
            if true_residual <= cfg.rel_tolerance {
                x = candidate;
                break 'outer;
            }
        }
        if k == 0 {
            break;
        }
        x = gmres_update(&x, &h, &g, &basis, &minv, k);
    }
    let final_residual = relative_residual(a, &x, b);
    Ok(IterativeOutcome {
        solution: x,
        iterations,
        final_residual,
        converged: final_residual <= cfg.rel_tolerance,
        trace,
        iterates,
    })
}

fn gmres_update(x: &[f64], h: &[Vec<f64>], g: &[f64], basis: &[Vec<f64>], minv: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= h[i][j] * y[j];
        }
        y[i] = s / h[i][i];
    }
    let mut out = x.to_vec();
    for (j, yj) in y.iter().enumerate() {
        for ((o, v), mi) in out.iter_mut().zip(&basis[j]).zip(minv) {
            *o += yj * v * mi;
        }
    }
    out
}
