//! Sparse parity-check matrices and the seeded (3,6)-regular construction.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{COLUMN_DEGREE, ROW_DEGREE};
use crate::rng::{self, Purpose, StreamRng};
use crate::{Error, Result};

/// Edge swaps attempted while removing length-4 cycles.
pub const CYCLE_SWAP_ATTEMPTS: usize = 1000;

/// Sparse binary matrix with row and column adjacency.
///
/// Edges are numbered in row-major order; `edge_cols[e]` is the column of
/// edge `e` and `row_ptr[r]..row_ptr[r + 1]` are the edges of row `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    rows: usize,
    cols: usize,
    seed: u64,
    row_ptr: Vec<usize>,
    edge_cols: Vec<usize>,
    col_ptr: Vec<usize>,
    col_edges: Vec<usize>,
}

impl ParityCheckMatrix {
    /// Builds a matrix from `(row, col)` positions. Duplicates are merged.
    pub fn from_entries(rows: usize, cols: usize, entries: &[(usize, usize)], seed: u64) -> Result<Self> {
        let mut sorted = entries.to_vec();
        for &(r, c) in &sorted {
            if r >= rows || c >= cols {
                return Err(Error::invalid("entries", alloc::format!("({r}, {c}) outside {rows}x{cols}")));
            }
        }
        sorted.sort_unstable();
        sorted.dedup();

        let mut row_ptr = vec![0; rows + 1];
        for &(r, _) in &sorted {
            row_ptr[r + 1] += 1;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let edge_cols: Vec<usize> = sorted.iter().map(|&(_, c)| c).collect();

        let mut col_ptr = vec![0; cols + 1];
        for &c in &edge_cols {
            col_ptr[c + 1] += 1;
        }
        for c in 0..cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        let mut fill = col_ptr.clone();
        let mut col_edges = vec![0; edge_cols.len()];
        for (e, &c) in edge_cols.iter().enumerate() {
            col_edges[fill[c]] = e;
            fill[c] += 1;
        }

        Ok(Self { rows, cols, seed, row_ptr, edge_cols, col_ptr, col_edges })
    }

    /// Seeded (3,6)-regular matrix of size `(n/2) x n`.
    ///
    /// Column sockets are randomly permuted and dealt six per row, repeated
    /// entries are repaired by edge swaps, then up to
    /// [`CYCLE_SWAP_ATTEMPTS`] swaps try to break length-4 cycles. Rank is
    /// not checked here.
    pub fn regular(n: usize, seed: u64) -> Result<Self> {
        if n < 12 || !n.is_multiple_of(2) {
            return Err(Error::InvalidCodeLength(n));
        }
        let rows = n / 2;
        let mut rng = rng::keyed(seed, Purpose::CodeConstruction, &[n as u64]);
        let mut graph = SocketGraph::random(rows, n, &mut rng);
        graph.repair_repeats(&mut rng);
        graph.break_four_cycles(&mut rng, CYCLE_SWAP_ATTEMPTS);

        let entries: Vec<(usize, usize)> =
            graph.row_cols.iter().enumerate().flat_map(|(r, cols)| cols.iter().map(move |&c| (r, c))).collect();
        Self::from_entries(rows, n, &entries, seed)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Seed the matrix was built from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_edges(&self) -> usize {
        self.edge_cols.len()
    }

    /// Columns of row `r`, ascending.
    pub fn row(&self, r: usize) -> &[usize] {
        &self.edge_cols[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn row_degree(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn col_degree(&self, c: usize) -> usize {
        self.col_ptr[c + 1] - self.col_ptr[c]
    }

    /// Rows with a one in column `c`, ascending.
    pub fn col_rows(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.col_edges[self.col_ptr[c]..self.col_ptr[c + 1]].iter().map(move |&e| self.edge_row(e))
    }

    /// All `(row, col)` positions in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).iter().map(move |&c| (r, c)))
    }

    pub(crate) fn row_range(&self, r: usize) -> core::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    fn edge_row(&self, e: usize) -> usize {
        // row_ptr is sorted; the row is the last r with row_ptr[r] <= e.
        self.row_ptr.partition_point(|&p| p <= e) - 1
    }

    /// True iff `H * bits = 0` over GF(2).
    pub fn syndrome_ok(&self, hard_bits: &[u8]) -> Result<bool> {
        if hard_bits.len() != self.cols {
            return Err(Error::LengthMismatch { expected: self.cols, actual: hard_bits.len() });
        }
        Ok(self.checks_pass(hard_bits))
    }

    pub(crate) fn checks_pass(&self, hard_bits: &[u8]) -> bool {
        (0..self.rows).all(|r| self.row(r).iter().fold(0u8, |acc, &c| acc ^ (hard_bits[c] & 1)) == 0)
    }

    /// Number of length-4 cycles (pairs of columns sharing two rows, counted
    /// per shared row pair).
    pub fn four_cycles(&self) -> usize {
        let mut total = 0;
        for c in 0..self.cols {
            let rows: Vec<usize> = self.col_rows(c).collect();
            for i in 0..rows.len() {
                for j in i + 1..rows.len() {
                    total += self
                        .row(rows[i])
                        .iter()
                        .filter(|&&other| other > c && self.row(rows[j]).binary_search(&other).is_ok())
                        .count();
                }
            }
        }
        total
    }
}

/// Mutable socket view used during construction.
struct SocketGraph {
    row_cols: Vec<[usize; ROW_DEGREE]>,
    col_rows: Vec<[usize; COLUMN_DEGREE]>,
}

impl SocketGraph {
    fn random(rows: usize, cols: usize, rng: &mut StreamRng) -> Self {
        let mut sockets: Vec<usize> = (0..cols).flat_map(|c| core::iter::repeat_n(c, COLUMN_DEGREE)).collect();
        sockets.shuffle(rng);
        let row_cols: Vec<[usize; ROW_DEGREE]> = sockets
            .chunks_exact(ROW_DEGREE)
            .map(|chunk| {
                let mut row = [0; ROW_DEGREE];
                row.copy_from_slice(chunk);
                row
            })
            .collect();
        debug_assert_eq!(row_cols.len(), rows);
        let mut graph = Self { row_cols, col_rows: vec![[usize::MAX; COLUMN_DEGREE]; cols] };
        graph.rebuild_col_rows();
        graph
    }

    fn rebuild_col_rows(&mut self) {
        let mut fill = vec![0usize; self.col_rows.len()];
        for (r, cols) in self.row_cols.iter().enumerate() {
            for &c in cols {
                self.col_rows[c][fill[c]] = r;
                fill[c] += 1;
            }
        }
    }

    fn rows(&self) -> usize {
        self.row_cols.len()
    }

    fn has_repeat(&self, r: usize) -> Option<usize> {
        let row = &self.row_cols[r];
        (0..ROW_DEGREE).find(|&i| row[..i].contains(&row[i]))
    }

    /// Swaps the column of slot `(r1, s1)` with that of `(r2, s2)` if the
    /// result keeps both rows free of repeats.
    fn try_swap(&mut self, r1: usize, s1: usize, r2: usize, s2: usize) -> bool {
        let c1 = self.row_cols[r1][s1];
        let c2 = self.row_cols[r2][s2];
        if r1 == r2 || c1 == c2 || self.row_cols[r1].contains(&c2) || self.row_cols[r2].contains(&c1) {
            return false;
        }
        self.apply_swap(r1, s1, r2, s2);
        true
    }

    fn apply_swap(&mut self, r1: usize, s1: usize, r2: usize, s2: usize) {
        let c1 = self.row_cols[r1][s1];
        let c2 = self.row_cols[r2][s2];
        self.row_cols[r1][s1] = c2;
        self.row_cols[r2][s2] = c1;
        replace(&mut self.col_rows[c1], r1, r2);
        replace(&mut self.col_rows[c2], r2, r1);
    }

    fn repair_repeats(&mut self, rng: &mut StreamRng) {
        let rows = self.rows();
        for r in 0..rows {
            while let Some(slot) = self.has_repeat(r) {
                let c = self.row_cols[r][slot];
                loop {
                    let r2 = rng.random_range(0..rows);
                    let s2 = rng.random_range(0..ROW_DEGREE);
                    let c2 = self.row_cols[r2][s2];
                    // Plain swap is allowed to move c into r2 only if r2 lacks it.
                    if r2 != r && c2 != c && !self.row_cols[r].contains(&c2) && !self.row_cols[r2].contains(&c) {
                        self.apply_swap_raw(r, slot, r2, s2);
                        break;
                    }
                }
            }
        }
        self.rebuild_col_rows();
    }

    /// Swap without column bookkeeping; repeats make `col_rows` ambiguous.
    fn apply_swap_raw(&mut self, r1: usize, s1: usize, r2: usize, s2: usize) {
        let tmp = self.row_cols[r1][s1];
        self.row_cols[r1][s1] = self.row_cols[r2][s2];
        self.row_cols[r2][s2] = tmp;
    }

    /// Length-4 cycles through column `c`.
    fn cycles_at(&self, c: usize) -> usize {
        let rows = &self.col_rows[c];
        let mut count = 0;
        for i in 0..COLUMN_DEGREE {
            for j in i + 1..COLUMN_DEGREE {
                let a = &self.row_cols[rows[i]];
                let b = &self.row_cols[rows[j]];
                count += a.iter().filter(|&&x| x != c && b.contains(&x)).count();
            }
        }
        count
    }

    fn break_four_cycles(&mut self, rng: &mut StreamRng, attempts: usize) {
        let rows = self.rows();
        let cols = self.col_rows.len();
        for _ in 0..attempts {
            let cyclic: Vec<usize> = (0..cols).filter(|&c| self.cycles_at(c) > 0).collect();
            if cyclic.is_empty() {
                return;
            }
            let c1 = cyclic[rng.random_range(0..cyclic.len())];
            let r1 = self.col_rows[c1][rng.random_range(0..COLUMN_DEGREE)];
            let s1 = slot_of(&self.row_cols[r1], c1);
            let r2 = rng.random_range(0..rows);
            let s2 = rng.random_range(0..ROW_DEGREE);
            let c2 = self.row_cols[r2][s2];
            let before = self.cycles_at(c1) + self.cycles_at(c2);
            if !self.try_swap(r1, s1, r2, s2) {
                continue;
            }
            let after = self.cycles_at(c1) + self.cycles_at(c2);
            if after >= before {
                // undo: c2 now sits at (r1, s1), c1 at (r2, s2)
                self.apply_swap(r1, s1, r2, s2);
            }
        }
    }
}

fn slot_of(row: &[usize; ROW_DEGREE], c: usize) -> usize {
    row.iter().position(|&x| x == c).expect("column present in row")
}

fn replace(rows: &mut [usize; COLUMN_DEGREE], from: usize, to: usize) {
    let slot = rows.iter().position(|&r| r == from).expect("row present in column");
    rows[slot] = to;
}
