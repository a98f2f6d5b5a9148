//! Pseudo-random ±1 spreading codebook.
//!
//! Entries are drawn column by column (column-major), one bit per entry,
//! consuming `next_u64` words of the [`crate::rng::keyed_stream`] for
//! `(seed, DOMAIN_CODEBOOK, 0)` from the least significant bit up. Bit 0
//! maps to `+scale`, bit 1 to `-scale`, with `scale = 1/√K_non`.
//!
//! On-disk layout (little-endian, 32-byte header):
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 8    | magic `HSVCGCBK`           |
//! | 8      | 2    | version (1)                |
//! | 10     | 2    | reserved, zero             |
//! | 12     | 4    | M                          |
//! | 16     | 4    | N                          |
//! | 20     | 4    | K_non                      |
//! | 24     | 8    | seed                       |
//!
//! An optional body of `M·N` signed bytes (±1, pre-scale, column-major)
//! follows the header.

use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::{bail, Result};
use crate::rng::{keyed_stream, DOMAIN_CODEBOOK};
use crate::C64;

pub const MAGIC: &[u8; 8] = b"HSVCGCBK";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;

/// The `M×N` real spreading matrix with entries `±1/√K_non`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    matrix: DMatrix<f64>,
    section_len: usize,
    k_non: usize,
    seed: u64,
}

impl Codebook {
    pub fn generate(seed: u64, m: usize, n: usize, k_non: usize) -> Result<Self> {
        if m == 0 || n == 0 || k_non == 0 {
            bail!(
                InvalidParameter,
                "codebook dimensions must be positive (M={m}, N={n}, K_non={k_non})"
            );
        }
        let scale = (k_non as f64).sqrt().recip();
        let mut rng = keyed_stream(seed, DOMAIN_CODEBOOK, 0);
        let mut word = 0u64;
        let mut left = 0u32;
        // DMatrix::from_vec is column-major, matching the documented draw order.
        let mut entries = Vec::with_capacity(m * n);
        for _ in 0..m * n {
            if left == 0 {
                word = rng.next_u64();
                left = 64;
            }
            entries.push(if word & 1 == 0 { scale } else { -scale });
            word >>= 1;
            left -= 1;
        }
        Ok(Self {
            matrix: DMatrix::from_vec(m, n, entries),
            section_len: 1,
            k_non,
            seed,
        })
    }

    /// Groups the columns into sections of `d` consecutive columns.
    pub fn with_section_len(mut self, d: usize) -> Result<Self> {
        if d == 0 || !self.n().is_multiple_of(d) {
            bail!(
                InvalidParameter,
                "section length {d} does not divide N={}",
                self.n()
            );
        }
        self.section_len = d;
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn section_len(&self) -> usize {
        self.section_len
    }

    pub fn sections(&self) -> usize {
        self.n() / self.section_len
    }

    pub fn k_non(&self) -> usize {
        self.k_non
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scale(&self) -> f64 {
        (self.k_non as f64).sqrt().recip()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Columns `i·D .. i·D + D` of the codebook.
    pub fn sub_matrix(&self, i: usize) -> Result<DMatrix<f64>> {
        if i >= self.sections() {
            bail!(
                OutOfRange,
                "section {i} out of range (S={})",
                self.sections()
            );
        }
        Ok(self
            .matrix
            .columns(i * self.section_len, self.section_len)
            .into_owned())
    }

    /// `x = G·s`, accumulated over the non-zero entries of `s` only.
    pub fn spread(&self, s: &[C64]) -> Result<Vec<C64>> {
        if s.len() != self.n() {
            bail!(
                InvalidParameter,
                "sparse vector length {} != N={}",
                s.len(),
                self.n()
            );
        }
        let mut x = vec![C64::new(0.0, 0.0); self.m()];
        for (j, &v) in s.iter().enumerate() {
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            for (xi, &g) in x.iter_mut().zip(self.matrix.column(j).iter()) {
                *xi += v * g;
            }
        }
        Ok(x)
    }

    /// Serializes the header, optionally followed by the ±1 body.
    pub fn to_bytes(&self, with_body: bool) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(HEADER_LEN + if with_body { self.m() * self.n() } else { 0 });
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.m() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n() as u32).to_le_bytes());
        out.extend_from_slice(&(self.k_non as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        if with_body {
            out.extend(
                self.matrix
                    .iter()
                    .map(|&g| if g > 0.0 { 1u8 } else { (-1i8) as u8 }),
            );
        }
        out
    }

    /// Parses a codebook file. Without a body the matrix is regenerated from
    /// the header; with a body the stored signs are used as-is.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            bail!(InvalidInput, "not a codebook file");
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let version = u16_at(8);
        if version != FORMAT_VERSION {
            bail!(InvalidInput, "unsupported codebook version {version}");
        }
        let (m, n, k_non) = (u32_at(12), u32_at(16), u32_at(20));
        let seed = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let mut book = Self::generate(seed, m, n, k_non)?;
        let body = &bytes[HEADER_LEN..];
        if body.is_empty() {
            return Ok(book);
        }
        if body.len() != m * n {
            bail!(
                InvalidInput,
                "codebook body has {} bytes, expected {}",
                body.len(),
                m * n
            );
        }
        let scale = book.scale();
        for (dst, &b) in book.matrix.iter_mut().zip(body) {
            *dst = match b as i8 {
                1 => scale,
                -1 => -scale,
                other => bail!(InvalidInput, "codebook body entry {other} is not ±1"),
            };
        }
        Ok(book)
    }
}
