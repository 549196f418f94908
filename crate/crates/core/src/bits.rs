//! Bit-packed ±1 matrices and the exact XNOR-popcount kernels.
//!
//! A ±1 value is stored as a single bit: 1 ↔ +1, 0 ↔ -1. Element `j` of a row
//! lives at bit `j % 64` (LSB-first) of word `j / 64`, so extraction needs no
//! shifts beyond the word index and popcount runs on whole words. The dot
//! product of two ±1 rows of length `n` is then
//!
//! ```text
//! dot = 2·popcount(XNOR(a, b) restricted to the n valid bits) − n
//! ```
//!
//! which is exact integer arithmetic with no floating point multiplies at all.
//! Every row keeps the bits past `cols` in its last word zeroed ("tail
//! hygiene"); with both tails zero the same value is obtained as
//! `n − 2·popcount(a XOR b)` without masking, which is what the hot loop uses.

use crate::error::{Error, Result};
use crate::tensor::FloatTensor;
use rayon::prelude::*;

/// Largest supported dot-product length. Sums of ±1 below this stay exactly
/// representable when converted to `f32` (integers < 2^24).
pub const MAX_DOT_LEN: usize = 1 << 24;

/// Row-major bit-packed ±1 matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

/// Mask selecting the valid bits of a row's last word.
pub fn tail_mask(cols: usize) -> u64 {
    match cols % 64 {
        0 => !0u64,
        r => (1u64 << r) - 1,
    }
}

impl BitMatrix {
    /// All-(-1) matrix (every bit zero).
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        Self {
            rows,
            cols,
            words_per_row,
            bits: vec![0; rows * words_per_row],
        }
    }

    /// Rebuilds a matrix from raw words, validating length and tail hygiene.
    pub fn from_words(rows: usize, cols: usize, bits: Vec<u64>) -> Result<Self> {
        let words_per_row = cols.div_ceil(64);
        if bits.len() != rows * words_per_row {
            return Err(Error::shape(format!(
                "{rows}x{cols} bit matrix wants {} words, got {}",
                rows * words_per_row,
                bits.len()
            )));
        }
        let m = Self { rows, cols, words_per_row, bits };
        if !m.tails_zeroed() {
            return Err(Error::shape(format!(
                "{rows}x{cols} bit matrix has nonzero tail bits"
            )));
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    /// Packed words of row `r`.
    pub fn row(&self, r: usize) -> &[u64] {
        &self.bits[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    /// Bit at (r, c): true ↔ +1.
    pub fn get(&self, r: usize, c: usize) -> bool {
        let w = self.bits[r * self.words_per_row + c / 64];
        (w >> (c % 64)) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, plus_one: bool) {
        let idx = r * self.words_per_row + c / 64;
        let bit = 1u64 << (c % 64);
        if plus_one {
            self.bits[idx] |= bit;
        } else {
            self.bits[idx] &= !bit;
        }
    }

    /// True when no row has stray bits past `cols` in its last word.
    pub fn tails_zeroed(&self) -> bool {
        if self.words_per_row == 0 {
            return true;
        }
        let mask = tail_mask(self.cols);
        (0..self.rows).all(|r| {
            let last = self.bits[r * self.words_per_row + self.words_per_row - 1];
            last & !mask == 0
        })
    }
}

/// Packs the signs of a rank-2 tensor: bit = 1 iff the entry is ≥ 0
/// (sign(0) := +1, which also maps IEEE −0.0 to +1).
pub fn pack_signs(m: &FloatTensor) -> Result<BitMatrix> {
    let [rows, cols] = m.dims2()?;
    let words_per_row = cols.div_ceil(64);
    let mut bits = vec![0u64; rows * words_per_row];
    let data = m.data();
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        let out = &mut bits[r * words_per_row..(r + 1) * words_per_row];
        for (j, &v) in row.iter().enumerate() {
            if v >= 0.0 {
                out[j / 64] |= 1u64 << (j % 64);
            }
        }
    }
    Ok(BitMatrix { rows, cols, words_per_row, bits })
}

/// Expands a bit matrix back to a rank-2 tensor of exactly ±1 values.
pub fn unpack(b: &BitMatrix) -> FloatTensor {
    let mut data = Vec::with_capacity(b.rows * b.cols);
    for r in 0..b.rows {
        let row = b.row(r);
        for j in 0..b.cols {
            let bit = (row[j / 64] >> (j % 64)) & 1;
            data.push(if bit == 1 { 1.0 } else { -1.0 });
        }
    }
    FloatTensor::from_parts(vec![b.rows, b.cols], data)
}

/// Exact ±1 dot product of two packed rows of length `n`.
///
/// Both rows must cover exactly `n` bits with zeroed tails; the result is
/// `2·popcount(XNOR(a,b) over the n valid bits) − n`, computed here as
/// `n − 2·popcount(a XOR b)` (equal because both tails are zero).
pub fn xnor_dot(a: &[u64], b: &[u64], n: usize) -> Result<i64> {
    let words = n.div_ceil(64);
    if a.len() != words || b.len() != words {
        return Err(Error::shape(format!(
            "xnor_dot length mismatch: n={n} wants {words} words, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if n > MAX_DOT_LEN {
        return Err(Error::shape(format!("dot length {n} exceeds {MAX_DOT_LEN}")));
    }
    Ok(xnor_dot_raw(a, b, n))
}

#[inline]
fn xnor_dot_raw(a: &[u64], b: &[u64], n: usize) -> i64 {
    let mut diff = 0u32;
    for (&x, &y) in a.iter().zip(b) {
        diff += (x ^ y).count_ones();
    }
    n as i64 - 2 * diff as i64
}

/// Exact binary GEMM. `a` is m×k; `bt` holds the right operand transposed
/// (n×k, one row per output column) so both operands stream row-contiguously.
/// Entry (i, j) of the m×n result is `xnor_dot(a.row(i), bt.row(j), k)`.
///
/// Output rows are independent, so row-level parallelism cannot change the
/// result.
pub fn binary_gemm(a: &BitMatrix, bt: &BitMatrix) -> Result<FloatTensor> {
    if a.cols != bt.cols {
        return Err(Error::shape(format!(
            "binary_gemm inner dimension mismatch: {}x{} vs {}x{} (transposed)",
            a.rows, a.cols, bt.rows, bt.cols
        )));
    }
    if a.cols > MAX_DOT_LEN {
        return Err(Error::shape(format!(
            "binary_gemm k={} exceeds {MAX_DOT_LEN}",
            a.cols
        )));
    }
    let (m, n, k) = (a.rows, bt.rows, a.cols);
    let mut out = vec![0.0f32; m * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let arow = a.row(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = xnor_dot_raw(arow, bt.row(j), k) as f32;
        }
    });
    Ok(FloatTensor::from_parts(vec![m, n], out))
}
