//! Distributed build of the normal-equations matrix and right-hand side.
//!
//! Each datum `d` contributes `w_d * g_d[i] * g_d[j]` to cell `(i, j)` and
//! `w_d * g_d[i] * b_d` to `rhs[i]`. Input data is replicated on every
//! rank; a rank sums over all of it, but only for its assigned cells. The
//! rest of its rows arrive either by local mirroring or from peers.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::matrix::Matrix;
use crate::partition::{partition_rows, RowPartition};
use crate::rank_net::{self, DeliveryOrder, Envelope, ExchangePlan, SendBuffers, Triplet};
use crate::sym_assign::{assigned_iter, quota_of};

/// Data items per reduction block when the reduction order is pinned.
pub const DETERMINISTIC_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Number of model coefficients (matrix dimension).
    pub n: usize,
    /// Number of input data items.
    pub d: usize,
    pub seed: u64,
    pub weight_scale: f64,
}

impl ProblemSpec {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            seed,
            weight_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("coefficient count must be at least 1".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidConfig("data count must be at least 1".into()));
        }
        if !(self.weight_scale > 0.0 && self.weight_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weight scale {} must be positive and finite",
                self.weight_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatumContribution {
    pub index: usize,
    pub design_row: Vec<f64>,
    pub weight: f64,
    pub observation: f64,
}

/// Coefficients the synthetic observations are generated from. All lie in
/// `[0.5, 1.5]` so percentage comparisons of solutions stay meaningful.
pub fn reference_coefficients(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + 0.5 * (1.3 * i as f64 + 0.4).sin()).collect()
}

/// Synthetic input data: a cosine basis `cos(i * pi * t)` sampled at
/// uniform random points `t`, weights in `(0, weight_scale]` and
/// observations from [`reference_coefficients`] plus small uniform noise.
pub fn generate_problem(spec: &ProblemSpec) -> Result<Vec<DatumContribution>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let coefficients = reference_coefficients(spec.n);
    let data = (0..spec.d)
        .map(|index| {
            let t: f64 = rng.random();
            let design_row: Vec<f64> = (0..spec.n).map(|i| (i as f64 * PI * t).cos()).collect();
            let weight = spec.weight_scale * (1.0 - rng.random::<f64>());
            let noise = 0.01 * (rng.random::<f64>() - 0.5);
            let observation = crate::matrix::dot(&design_row, &coefficients) + noise;
            DatumContribution {
                index,
                design_row,
                weight,
                observation,
            }
        })
        .collect();
    Ok(data)
}

/// The rows of the global matrix held by one rank, with a bitmap of which
/// cells have been populated.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatrixBlock {
    n: usize,
    row_offset: usize,
    local_rows: usize,
    values: Vec<f64>,
    populated: Vec<bool>,
    rhs: Vec<f64>,
}

impl LocalMatrixBlock {
    pub fn new(p: &RowPartition, rank: usize) -> Self {
        let n = p.n();
        let local_rows = p.local_rows(rank);
        Self {
            n,
            row_offset: p.starts()[rank],
            local_rows,
            values: vec![0.0; local_rows * n],
            populated: vec![false; local_rows * n],
            rhs: vec![0.0; local_rows],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row_offset(&self) -> usize {
        self.row_offset
    }

    pub fn local_rows(&self) -> usize {
        self.local_rows
    }

    pub fn global_rows(&self) -> std::ops::Range<usize> {
        self.row_offset..self.row_offset + self.local_rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(self.global_rows().contains(&row) && col < self.n);
        (row - self.row_offset) * self.n + col
    }

    /// Value at global `(row, col)` if populated. Panics on rows not held here.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        assert!(self.global_rows().contains(&row), "row {row} not in this block");
        let s = self.slot(row, col);
        self.populated[s].then(|| self.values[s])
    }

    pub fn is_populated(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_some()
    }

    pub fn set_count(&self) -> usize {
        self.populated.iter().filter(|&&p| p).count()
    }

    pub fn unset_count(&self) -> usize {
        self.populated.len() - self.set_count()
    }

    pub fn is_complete(&self) -> bool {
        self.populated.iter().all(|&p| p)
    }

    /// Writes a cell that must not have been populated yet.
    pub(crate) fn write_once(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        if !self.global_rows().contains(&row) || col >= self.n {
            return Err(Error::ProtocolViolation(format!(
                "cell ({row}, {col}) is outside rows {:?}",
                self.global_rows()
            )));
        }
        let s = self.slot(row, col);
        if std::mem::replace(&mut self.populated[s], true) {
            return Err(Error::ProtocolViolation(format!(
                "cell ({row}, {col}) written twice"
            )));
        }
        self.values[s] = value;
        Ok(())
    }

    /// Cells `(row, col)` of this block that pass through the full matrix.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, Option<f64>)> + '_ {
        self.global_rows()
            .flat_map(move |row| (0..self.n).map(move |col| (row, col, self.get(row, col))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Threading {
    /// Logical worker threads per rank, each reducing a subset of the data.
    pub threads: usize,
    /// Combine partial sums from fixed-size data blocks in block order so the
    /// result does not depend on the thread count or on scheduling.
    pub deterministic: bool,
    pub execution: Execution,
}

impl Default for Threading {
    fn default() -> Self {
        Self {
            threads: 1,
            deterministic: false,
            execution: Execution::Parallel,
        }
    }
}

// Assigned columns of a row as at most two contiguous column ranges.
fn assigned_segments(n: usize, row: usize) -> [std::ops::Range<usize>; 2] {
    let end = row + quota_of(n, row);
    if end <= n {
        [row..end, 0..0]
    } else {
        [row..n, 0..end - n]
    }
}

struct Partial {
    values: Vec<f64>,
    rhs: Vec<f64>,
}

fn reduce_slice(
    n: usize,
    rows: std::ops::Range<usize>,
    segments: &[[std::ops::Range<usize>; 2]],
    data: &[DatumContribution],
) -> Partial {
    let local_rows = rows.len();
    let mut values = vec![0.0; local_rows * n];
    let mut rhs = vec![0.0; local_rows];
    for datum in data {
        let g = &datum.design_row;
        let w = datum.weight;
        for (local, row) in rows.clone().enumerate() {
            let gi = g[row];
            let out = &mut values[local * n..(local + 1) * n];
            for seg in &segments[local] {
                for col in seg.clone() {
                    out[col] += w * (gi * g[col]);
                }
            }
            rhs[local] += w * (gi * datum.observation);
        }
    }
    Partial { values, rhs }
}

fn merge_into(acc: &mut Partial, other: &Partial) {
    for (a, b) in acc.values.iter_mut().zip(&other.values) {
        *a += b;
    }
    for (a, b) in acc.rhs.iter_mut().zip(&other.rhs) {
        *a += b;
    }
}

fn even_chunks(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.clamp(1, len.max(1));
    let base = len / parts;
    let extra = len % parts;
    let mut start = 0;
    (0..parts)
        .map(|k| {
            let size = base + usize::from(k < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

/// Single-threaded [`accumulate_assigned_with`].
pub fn accumulate_assigned(
    me: usize,
    p: &RowPartition,
    data: &[DatumContribution],
) -> Result<(LocalMatrixBlock, usize)> {
    accumulate_assigned_with(me, p, data, &Threading::default())
}

/// Sums every datum into the cells assigned to the rows of `me` and into the
/// local RHS. Returns the block (assigned cells populated) and the number of
/// cells evaluated.
pub fn accumulate_assigned_with(
    me: usize,
    p: &RowPartition,
    data: &[DatumContribution],
    threading: &Threading,
) -> Result<(LocalMatrixBlock, usize)> {
    if threading.threads == 0 {
        return Err(Error::InvalidConfig("threads per rank must be at least 1".into()));
    }
    let n = p.n();
    if let Some(bad) = data.iter().find(|d| d.design_row.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.design_row.len(),
        });
    }
    let rows = p.range(me);
    let segments: Vec<_> = rows.clone().map(|row| assigned_segments(n, row)).collect();

    let chunks = if threading.deterministic {
        (0..data.len().div_ceil(DETERMINISTIC_BLOCK))
            .map(|k| k * DETERMINISTIC_BLOCK..((k + 1) * DETERMINISTIC_BLOCK).min(data.len()))
            .collect()
    } else {
        even_chunks(data.len(), threading.threads)
    };
    let work = |k: usize| reduce_slice(n, rows.clone(), &segments, &data[chunks[k].clone()]);

    let partials: Vec<Partial> = exec::with_threads(threading.execution, threading.threads, || {
        if threading.deterministic {
            exec::map_indexed(threading.execution, chunks.len(), work)
        } else {
            exec::map_completion_order(threading.execution, chunks.len(), work)
                .into_iter()
                .map(|(_, p)| p)
                .collect()
        }
    })?;

    let mut parts = partials.into_iter();
    let mut acc = parts.next().unwrap_or_else(|| Partial {
        values: vec![0.0; rows.len() * n],
        rhs: vec![0.0; rows.len()],
    });
    for part in parts {
        merge_into(&mut acc, &part);
    }

    let mut block = LocalMatrixBlock::new(p, me);
    let mut evaluated = 0;
    for (local, row) in rows.enumerate() {
        for col in assigned_iter(n, row) {
            block.write_once(row, col, acc.values[local * n + col])?;
            evaluated += 1;
        }
    }
    block.rhs = acc.rhs;
    Ok((block, evaluated))
}

/// Copies assigned cells whose transposed position is also held by `me`.
/// Returns the number of copies made.
pub fn mirror_local(me: usize, p: &RowPartition, block: &mut LocalMatrixBlock) -> Result<usize> {
    let n = p.n();
    let mut copies = 0;
    for row in p.range(me) {
        for col in assigned_iter(n, row) {
            if col != row && p.owns(me, col) {
                let value = block.get(row, col).ok_or_else(|| {
                    Error::ProtocolViolation(format!("assigned cell ({row}, {col}) not computed"))
                })?;
                block.write_once(col, row, value)?;
                copies += 1;
            }
        }
    }
    Ok(copies)
}

/// Packs assigned cells destined for other ranks into preallocated buffers.
pub fn pack_outgoing(
    me: usize,
    p: &RowPartition,
    plan: &ExchangePlan,
    block: &LocalMatrixBlock,
) -> Result<Vec<Envelope>> {
    let n = p.n();
    let mut buffers = SendBuffers::new(plan);
    for row in p.range(me) {
        for col in assigned_iter(n, row) {
            let owner = p.owner_unchecked(col);
            if owner != me {
                let value = block.get(row, col).ok_or_else(|| {
                    Error::ProtocolViolation(format!("assigned cell ({row}, {col}) not computed"))
                })?;
                buffers.push(owner, Triplet::new(row, col, value));
            }
        }
    }
    buffers.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub ranks: usize,
    pub threading: Threading,
    /// How ranks themselves are scheduled: concurrently or round-robin.
    pub rank_execution: Execution,
    pub delivery: DeliveryOrder,
}

impl AssemblyOptions {
    pub fn new(ranks: usize) -> Self {
        Self {
            ranks,
            threading: Threading::default(),
            rank_execution: Execution::Parallel,
            delivery: DeliveryOrder::Natural,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankStats {
    pub rank: usize,
    pub rows: usize,
    pub cells_evaluated: usize,
    pub local_copies: usize,
    pub cells_sent: usize,
    pub cells_received: usize,
}

#[derive(Debug, Clone)]
pub struct Assembly {
    pub partition: RowPartition,
    pub blocks: Vec<LocalMatrixBlock>,
    pub plans: Vec<ExchangePlan>,
    pub stats: Vec<RankStats>,
    pub build_time: Duration,
    pub exchange_time: Duration,
}

impl Assembly {
    pub fn total_cells_evaluated(&self) -> usize {
        self.stats.iter().map(|s| s.cells_evaluated).sum()
    }

    /// Stitches all blocks into the full matrix and RHS.
    pub fn gather(&self) -> (Matrix, Vec<f64>) {
        gather_blocks(&self.blocks)
    }
}

pub fn gather_blocks(blocks: &[LocalMatrixBlock]) -> (Matrix, Vec<f64>) {
    let n = blocks.first().map_or(0, |b| b.n());
    let mut a = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for block in blocks {
        for (local, row) in block.global_rows().enumerate() {
            a.row_mut(row).copy_from_slice(&block.values[local * n..(local + 1) * n]);
            rhs[row] = block.rhs[local];
        }
    }
    (a, rhs)
}

/// Runs the whole build: assigned-cell reduction, local mirroring, the
/// triplet exchange and the transposed writes on receipt.
pub fn assemble(data: &[DatumContribution], n: usize, options: &AssemblyOptions) -> Result<Assembly> {
    let p = partition_rows(n, options.ranks)?;

    let started = Instant::now();
    let computed: Vec<Result<(LocalMatrixBlock, usize)>> =
        exec::map_indexed(options.rank_execution, p.ranks(), |me| {
            accumulate_assigned_with(me, &p, data, &options.threading)
        });
    let build_time = started.elapsed();

    let started = Instant::now();
    let plans: Vec<ExchangePlan> =
        exec::map_indexed(options.rank_execution, p.ranks(), |me| rank_net::plan_exchange(&p, me));
    let mut blocks = Vec::with_capacity(p.ranks());
    let mut stats = Vec::with_capacity(p.ranks());
    let mut outboxes = Vec::with_capacity(p.ranks());
    for (me, result) in computed.into_iter().enumerate() {
        let (mut block, evaluated) = result?;
        outboxes.push(pack_outgoing(me, &p, &plans[me], &block)?);
        let local_copies = mirror_local(me, &p, &mut block)?;
        stats.push(RankStats {
            rank: me,
            rows: p.local_rows(me),
            cells_evaluated: evaluated,
            local_copies,
            cells_sent: plans[me].total_sent(),
            cells_received: 0,
        });
        blocks.push(block);
    }

    let inboxes = rank_net::deliver_all(outboxes, &plans, options.delivery)?;
    let received: Vec<Result<(LocalMatrixBlock, usize)>> =
        exec::map_owned(options.rank_execution, blocks, |me, mut block| {
            let mut written = 0;
            for env in &inboxes[me] {
                written += rank_net::unpack_apply(&env.payload, &p, me, &mut block)?;
            }
            if !block.is_complete() {
                return Err(Error::ProtocolViolation(format!(
                    "rank {me} still has {} unset cells after exchange",
                    block.unset_count()
                )));
            }
            Ok((block, written))
        });
    let mut blocks = Vec::with_capacity(p.ranks());
    for (me, result) in received.into_iter().enumerate() {
        let (block, written) = result?;
        stats[me].cells_received = written;
        blocks.push(block);
    }
    let exchange_time = started.elapsed();

    Ok(Assembly {
        partition: p,
        blocks,
        plans,
        stats,
        build_time,
        exchange_time,
    })
}
