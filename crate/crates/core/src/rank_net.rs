//! Simulated message fabric between ranks.
//!
//! Off-diagonal cells a rank computes for another rank's rows travel as
//! packed triplets: `i32` global row, `i32` global column, `f64` value, all
//! little-endian, 16 bytes per record. Each ordered rank pair exchanges at
//! most one batch. Sizes are known up front on both sides because the
//! assignment rule is global, so no size negotiation is ever sent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::LocalMatrixBlock;
use crate::error::{Error, Result};
use crate::partition::RowPartition;
use crate::sym_assign::assigned_iter;

pub const TRIPLET_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub row: i32,
    pub col: i32,
    pub value: f64,
}

impl Triplet {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        Self {
            row: i32::try_from(row).expect("row index exceeds i32"),
            col: i32::try_from(col).expect("column index exceeds i32"),
            value,
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.row.to_le_bytes());
        out.extend_from_slice(&self.col.to_le_bytes());
        out.extend_from_slice(&self.value.to_le_bytes());
    }

    pub fn decode(record: &[u8; TRIPLET_BYTES]) -> Self {
        let (row, rest) = record.split_at(4);
        let (col, value) = rest.split_at(4);
        Self {
            row: i32::from_le_bytes(row.try_into().unwrap()),
            col: i32::from_le_bytes(col.try_into().unwrap()),
            value: f64::from_le_bytes(value.try_into().unwrap()),
        }
    }
}

pub fn pack(cells: &[Triplet]) -> Vec<u8> {
    let mut out = Vec::with_capacity(cells.len() * TRIPLET_BYTES);
    for t in cells {
        t.encode_into(&mut out);
    }
    out
}

pub fn unpack(buffer: &[u8]) -> Result<Vec<Triplet>> {
    if !buffer.len().is_multiple_of(TRIPLET_BYTES) {
        return Err(Error::ProtocolViolation(format!(
            "buffer of {} bytes is not a whole number of {TRIPLET_BYTES}-byte records",
            buffer.len()
        )));
    }
    Ok(buffer
        .chunks_exact(TRIPLET_BYTES)
        .map(|c| Triplet::decode(c.try_into().unwrap()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangePlan {
    pub rank: usize,
    /// Cells this rank sends to each destination rank.
    pub send_counts: Vec<usize>,
    /// Cells this rank receives from each source rank.
    pub recv_counts: Vec<usize>,
}

impl ExchangePlan {
    pub fn total_sent(&self) -> usize {
        self.send_counts.iter().sum()
    }

    pub fn total_received(&self) -> usize {
        self.recv_counts.iter().sum()
    }
}

/// Derives both directions of traffic for `me` purely from the assignment
/// rule: sends are my assigned cells landing in foreign columns, receives
/// are foreign assigned cells landing in my columns.
pub fn plan_exchange(p: &RowPartition, me: usize) -> ExchangePlan {
    let n = p.n();
    let ranks = p.ranks();
    let mut send_counts = vec![0; ranks];
    let mut recv_counts = vec![0; ranks];
    for row in 0..n {
        let row_owner = p.owner_unchecked(row);
        for col in assigned_iter(n, row) {
            let col_owner = p.owner_unchecked(col);
            if row_owner == col_owner {
                continue;
            }
            if row_owner == me {
                send_counts[col_owner] += 1;
            } else if col_owner == me {
                recv_counts[row_owner] += 1;
            }
        }
    }
    ExchangePlan {
        rank: me,
        send_counts,
        recv_counts,
    }
}

/// One batch in flight from `source` to `dest`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub source: usize,
    pub dest: usize,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn records(&self) -> usize {
        self.payload.len() / TRIPLET_BYTES
    }
}

/// Per-destination send buffers preallocated from an [`ExchangePlan`].
#[derive(Debug)]
pub struct SendBuffers {
    rank: usize,
    expected: Vec<usize>,
    buffers: Vec<Vec<u8>>,
}

impl SendBuffers {
    pub fn new(plan: &ExchangePlan) -> Self {
        Self {
            rank: plan.rank,
            expected: plan.send_counts.clone(),
            buffers: plan
                .send_counts
                .iter()
                .map(|&c| Vec::with_capacity(c * TRIPLET_BYTES))
                .collect(),
        }
    }

    pub fn push(&mut self, dest: usize, triplet: Triplet) {
        triplet.encode_into(&mut self.buffers[dest]);
    }

    /// Closes the buffers into envelopes, one per destination with traffic.
    pub fn finish(self) -> Result<Vec<Envelope>> {
        let mut out = Vec::new();
        for (dest, (payload, expected)) in self.buffers.into_iter().zip(self.expected).enumerate() {
            if payload.len() != expected * TRIPLET_BYTES {
                return Err(Error::ProtocolViolation(format!(
                    "rank {} packed {} records for rank {dest}, plan says {expected}",
                    self.rank,
                    payload.len() / TRIPLET_BYTES
                )));
            }
            if expected > 0 {
                out.push(Envelope {
                    source: self.rank,
                    dest,
                    payload,
                });
            }
        }
        Ok(out)
    }
}

/// Writes every received triplet into its transposed position. Returns the
/// number of cells written.
pub fn unpack_apply(
    buffer: &[u8],
    p: &RowPartition,
    me: usize,
    block: &mut LocalMatrixBlock,
) -> Result<usize> {
    let triplets = unpack(buffer)?;
    let n = p.n();
    for t in &triplets {
        let (row, col) = (t.row, t.col);
        if row < 0 || col < 0 || row as usize >= n || col as usize >= n {
            return Err(Error::ProtocolViolation(format!(
                "triplet ({row}, {col}) outside a {n} x {n} matrix"
            )));
        }
        let (row, col) = (row as usize, col as usize);
        if !p.owns(me, col) {
            return Err(Error::ProtocolViolation(format!(
                "rank {me} received cell ({row}, {col}) whose mirror row {col} it does not own"
            )));
        }
        block.write_once(col, row, t.value)?;
    }
    Ok(triplets.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DeliveryOrder {
    /// Sources in ascending rank order.
    #[default]
    Natural,
    /// A seeded random permutation of all envelopes.
    Shuffled(u64),
}

/// Routes every envelope to its destination inbox exactly once, checking
/// each batch against both the sender's and the receiver's plan.
pub fn deliver_all(
    outboxes: Vec<Vec<Envelope>>,
    plans: &[ExchangePlan],
    order: DeliveryOrder,
) -> Result<Vec<Vec<Envelope>>> {
    let ranks = plans.len();
    if outboxes.len() != ranks {
        return Err(Error::ProtocolViolation(format!(
            "{} outboxes for {ranks} ranks",
            outboxes.len()
        )));
    }
    let mut seen = vec![false; ranks * ranks];
    let mut in_flight = Vec::new();
    for (sender, outbox) in outboxes.into_iter().enumerate() {
        for env in outbox {
            if env.source != sender || env.dest >= ranks || env.dest == sender {
                return Err(Error::ProtocolViolation(format!(
                    "envelope {} -> {} posted by rank {sender}",
                    env.source, env.dest
                )));
            }
            let pair = env.source * ranks + env.dest;
            if std::mem::replace(&mut seen[pair], true) {
                return Err(Error::ProtocolViolation(format!(
                    "second batch from rank {} to rank {}",
                    env.source, env.dest
                )));
            }
            let sent = plans[env.source].send_counts[env.dest];
            let expected = plans[env.dest].recv_counts[env.source];
            if env.payload.len() != sent * TRIPLET_BYTES || sent != expected {
                return Err(Error::ProtocolViolation(format!(
                    "batch {} -> {} carries {} bytes; sender planned {sent} records, receiver {expected}",
                    env.source,
                    env.dest,
                    env.payload.len()
                )));
            }
            in_flight.push(env);
        }
    }
    for (src, plan) in plans.iter().enumerate() {
        for (dest, &count) in plan.send_counts.iter().enumerate() {
            if count > 0 && !seen[src * ranks + dest] {
                return Err(Error::ProtocolViolation(format!(
                    "missing batch of {count} records from rank {src} to rank {dest}"
                )));
            }
        }
    }
    if let DeliveryOrder::Shuffled(seed) = order {
        in_flight.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut inboxes: Vec<Vec<Envelope>> = vec![Vec::new(); ranks];
    for env in in_flight {
        inboxes[env.dest].push(env);
    }
    Ok(inboxes)
}
