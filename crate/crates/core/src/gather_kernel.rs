//! Irregular-access accumulation kernel and its software-pipelined variant.
//!
//! The kernel walks `j` over columns and `i` over a batch, adding
//! `weight * equations[inputdata(i, j)]` into `matrix(dataloc(i), j)`. Both
//! indices are indirect, defeating hardware prefetchers. The pipelined
//! variant runs a prefetch stage `prefetch_distance` iterations ahead of the
//! accumulate stage. The index arrays themselves are read contiguously and
//! are not prefetched.
//!
//! Arrays are column-major: `matrix(r, j)` is `matrix[r + j * rows]` and
//! `inputdata(i, j)` is `inputdata[i + j * n]`.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PREFETCH_DISTANCE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheLevel {
    #[default]
    L1,
    L2,
    L3,
    NonTemporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrregularWorkload {
    /// Extent of both loops.
    pub n: usize,
    /// Destination rows per column.
    pub rows: usize,
    pub matrix: Vec<f64>,
    pub equations: Vec<f64>,
    pub dataloc: Vec<usize>,
    pub inputdata: Vec<usize>,
    pub weight: f64,
    pub prefetch_distance: usize,
    pub cache_level: CacheLevel,
}

impl IrregularWorkload {
    /// Sequential indices: `dataloc(i) = i`, `inputdata(i, j) = i + j * n`.
    pub fn contiguous(n: usize) -> Self {
        Self {
            n,
            rows: n,
            matrix: vec![0.0; n * n],
            equations: (0..n * n).map(|k| k as f64 * 0.5 + 1.0).collect(),
            dataloc: (0..n).collect(),
            inputdata: (0..n * n).collect(),
            weight: 1.0,
            prefetch_distance: DEFAULT_PREFETCH_DISTANCE,
            cache_level: CacheLevel::L1,
        }
    }

    /// Random irregular indices drawn from `seed`; destination rows may repeat.
    pub fn random(n: usize, rows: usize, equations: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = rows.max(1);
        let equations = equations.max(1);
        Self {
            n,
            rows,
            matrix: (0..rows * n).map(|_| rng.random::<f64>()).collect(),
            equations: (0..equations).map(|_| rng.random::<f64>() - 0.5).collect(),
            dataloc: (0..n).map(|_| rng.random_range(0..rows)).collect(),
            inputdata: (0..n * n).map(|_| rng.random_range(0..equations)).collect(),
            weight: 0.75,
            prefetch_distance: DEFAULT_PREFETCH_DISTANCE,
            cache_level: CacheLevel::L1,
        }
    }

    pub fn with_distance(mut self, distance: usize) -> Self {
        self.prefetch_distance = distance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.matrix.len() != self.rows * n {
            return Err(Error::InvalidWorkload(format!(
                "matrix holds {} values, expected {} x {n}",
                self.matrix.len(),
                self.rows
            )));
        }
        if self.dataloc.len() != n || self.inputdata.len() != n * n {
            return Err(Error::InvalidWorkload(format!(
                "index arrays have lengths {} and {}, expected {n} and {}",
                self.dataloc.len(),
                self.inputdata.len(),
                n * n
            )));
        }
        if let Some(bad) = self.dataloc.iter().find(|&&r| r >= self.rows) {
            return Err(Error::InvalidWorkload(format!(
                "destination row {bad} out of {} rows",
                self.rows
            )));
        }
        if let Some(bad) = self.inputdata.iter().find(|&&k| k >= self.equations.len()) {
            return Err(Error::InvalidWorkload(format!(
                "source offset {bad} out of {} equations",
                self.equations.len()
            )));
        }
        Ok(())
    }

    /// Plain kernel applied to a copy of the destination.
    pub fn run_plain(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut out = self.matrix.clone();
        accumulate_plain(self, &mut out);
        Ok(out)
    }

    /// Software-pipelined kernel applied to a copy of the destination. A
    /// distance of zero runs the plain kernel.
    pub fn run_pipelined(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut out = self.matrix.clone();
        accumulate_pipelined(self, &mut out, self.prefetch_distance);
        Ok(out)
    }
}

#[inline(always)]
fn prefetch(ptr: *const f64, level: CacheLevel) {
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_NTA, _MM_HINT_T0, _MM_HINT_T1, _MM_HINT_T2};
        let p = ptr as *const i8;
        // SAFETY: prefetch is a hint and never faults, even on invalid addresses.
        unsafe {
            match level {
                CacheLevel::L1 => _mm_prefetch::<_MM_HINT_T0>(p),
                CacheLevel::L2 => _mm_prefetch::<_MM_HINT_T1>(p),
                CacheLevel::L3 => _mm_prefetch::<_MM_HINT_T2>(p),
                CacheLevel::NonTemporal => _mm_prefetch::<_MM_HINT_NTA>(p),
            }
        }
    }
    #[cfg(target_arch = "aarch64")]
    {
        // SAFETY: PRFM is a hint and never faults.
        unsafe {
            match level {
                CacheLevel::L1 => std::arch::asm!("prfm pldl1keep, [{0}]", in(reg) ptr, options(nostack, readonly)),
                CacheLevel::L2 => std::arch::asm!("prfm pldl2keep, [{0}]", in(reg) ptr, options(nostack, readonly)),
                CacheLevel::L3 => std::arch::asm!("prfm pldl3keep, [{0}]", in(reg) ptr, options(nostack, readonly)),
                CacheLevel::NonTemporal => {
                    std::arch::asm!("prfm pldl1strm, [{0}]", in(reg) ptr, options(nostack, readonly))
                }
            }
        }
    }
    #[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
    let _ = (ptr, level);
}

fn accumulate_plain(w: &IrregularWorkload, matrix: &mut [f64]) {
    let (n, rows) = (w.n, w.rows);
    for j in 0..n {
        let column = &mut matrix[j * rows..(j + 1) * rows];
        let sources = &w.inputdata[j * n..(j + 1) * n];
        for i in 0..n {
            column[w.dataloc[i]] += w.weight * w.equations[sources[i]];
        }
    }
}

fn accumulate_pipelined(w: &IrregularWorkload, matrix: &mut [f64], distance: usize) {
    if distance == 0 {
        accumulate_plain(w, matrix);
        return;
    }
    let (n, rows) = (w.n, w.rows);
    let level = w.cache_level;
    let eq = w.equations.as_ptr();
    for j in 0..n {
        let column = &mut matrix[j * rows..(j + 1) * rows];
        let base = column.as_ptr();
        let sources = &w.inputdata[j * n..(j + 1) * n];
        for i in 0..distance.min(n) {
            prefetch(base.wrapping_add(w.dataloc[i]), level);
            prefetch(eq.wrapping_add(sources[i]), level);
        }
        for i in 0..n {
            let k = i + distance;
            if k < n {
                prefetch(base.wrapping_add(w.dataloc[k]), level);
                prefetch(eq.wrapping_add(sources[k]), level);
            }
            column[w.dataloc[i]] += w.weight * w.equations[sources[i]];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: String,
    pub distance: usize,
    pub median_ns: u128,
    pub iterations: usize,
    pub machine_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub machine_id: String,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Architecture, OS and CPU model of the current host.
pub fn machine_id() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown-cpu".into());
    format!("{}-{}-{}", std::env::consts::ARCH, std::env::consts::OS, cpu)
}

fn median_ns(w: &IrregularWorkload, repetitions: usize, distance: Option<usize>) -> u128 {
    let mut scratch = w.matrix.clone();
    let mut samples: Vec<u128> = (0..repetitions)
        .map(|_| {
            scratch.copy_from_slice(&w.matrix);
            let t = Instant::now();
            match distance {
                None => accumulate_plain(w, &mut scratch),
                Some(d) => accumulate_pipelined(w, &mut scratch, d),
            }
            std::hint::black_box(&scratch);
            t.elapsed().as_nanos()
        })
        .collect();
    samples.sort_unstable();
    samples[samples.len() / 2]
}

/// Median wall time of the plain kernel and of the pipelined kernel at each
/// requested distance, all on the calling thread.
pub fn bench_kernel(w: &IrregularWorkload, repetitions: usize, distances: &[usize]) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(Error::InvalidConfig("benchmark needs at least one repetition".into()));
    }
    w.validate()?;
    let machine = machine_id();
    let mut rows = vec![BenchRow {
        variant: "plain".into(),
        distance: 0,
        median_ns: median_ns(w, repetitions, None),
        iterations: repetitions,
        machine_id: machine.clone(),
    }];
    for &d in distances {
        rows.push(BenchRow {
            variant: "pipelined".into(),
            distance: d,
            median_ns: median_ns(w, repetitions, Some(d)),
            iterations: repetitions,
            machine_id: machine.clone(),
        });
    }
    Ok(BenchReport {
        machine_id: machine,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    // Independent nested-loop reference with explicit column-major indexing.
    fn reference(w: &IrregularWorkload) -> Vec<f64> {
        let mut m = w.matrix.clone();
        for j in 0..w.n {
            for i in 0..w.n {
                let src = w.inputdata[i + j * w.n];
                m[w.dataloc[i] + j * w.rows] += w.weight * w.equations[src];
            }
        }
        m
    }

    #[test]
    fn contiguous_matches_reference() {
        let w = IrregularWorkload::contiguous(37);
        assert_eq!(bits(&w.run_plain().unwrap()), bits(&reference(&w)));
        assert_eq!(bits(&w.run_pipelined().unwrap()), bits(&reference(&w)));
        // With sequential indices the result is simply matrix + weight * equations.
        let out = w.run_plain().unwrap();
        for (k, v) in out.iter().enumerate() {
            assert_eq!(*v, k as f64 * 0.5 + 1.0);
        }
    }

    #[test]
    fn random_matches_reference() {
        let w = IrregularWorkload::random(64, 64, 4096, 3);
        assert_eq!(bits(&w.run_plain().unwrap()), bits(&reference(&w)));
    }

    #[test]
    fn empty_extent() {
        let w = IrregularWorkload::random(0, 5, 5, 1);
        assert_eq!(w.run_plain().unwrap(), w.matrix);
        assert_eq!(w.run_pipelined().unwrap(), w.matrix);
    }

    #[test]
    fn distance_sweep_is_transparent() {
        let w = IrregularWorkload::random(100, 40, 1000, 9);
        let plain = bits(&w.run_plain().unwrap());
        for d in [0, 1, 2, 4, 8, 16, 32, 64, 100, 1000] {
            let out = w.clone().with_distance(d).run_pipelined().unwrap();
            assert_eq!(bits(&out), plain, "distance {d}");
        }
    }

    #[test]
    fn cache_levels_are_transparent() {
        let w = IrregularWorkload::random(50, 50, 500, 2);
        let plain = bits(&w.run_plain().unwrap());
        for level in [CacheLevel::L1, CacheLevel::L2, CacheLevel::L3, CacheLevel::NonTemporal] {
            let mut v = w.clone();
            v.cache_level = level;
            assert_eq!(bits(&v.run_pipelined().unwrap()), plain);
        }
    }

    #[test]
    fn invalid_indices_rejected() {
        let mut w = IrregularWorkload::random(10, 10, 10, 0);
        w.dataloc[3] = 10;
        assert!(matches!(w.run_plain(), Err(Error::InvalidWorkload(_))));
        let mut w = IrregularWorkload::random(10, 10, 10, 0);
        w.inputdata[99] = 10;
        assert!(matches!(w.run_pipelined(), Err(Error::InvalidWorkload(_))));
    }

    #[test]
    fn seeded_generation_repeats() {
        assert_eq!(IrregularWorkload::random(30, 7, 90, 5), IrregularWorkload::random(30, 7, 90, 5));
    }

    #[test]
    fn tiny_bench_has_one_row_per_variant() {
        let w = IrregularWorkload::random(8, 8, 64, 1);
        let report = bench_kernel(&w, 1, &[16]).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].variant, "plain");
        assert_eq!(report.rows[1].distance, 16);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("variant,distance,median_ns,iterations,machine_id\n"));
        assert!(bench_kernel(&w, 0, &[]).is_err());
    }
}
