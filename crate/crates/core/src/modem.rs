//! BPSK and Gray-labelled square QAM with hard nearest-neighbour demapping.

use crate::combinadics::bits_per_symbol;
use crate::error::{bail, Result};
use crate::C64;

/// A unit-average-energy constellation; `points[label]` is the symbol for
/// the MSB-first bit label `label`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<C64>,
}

/// Gray-labelled PAM levels ordered so label 0 is the most positive level.
fn gray_pam(bits: usize) -> Vec<f64> {
    let n = 1usize << bits;
    let mut levels = vec![0.0; n];
    for pos in 0..n {
        let gray = pos ^ (pos >> 1);
        levels[gray] = (n - 1) as f64 - 2.0 * pos as f64;
    }
    levels
}

impl Constellation {
    /// BPSK for order 2, square Gray QAM for 4, 16, 64, ...
    pub fn new(order: usize) -> Result<Self> {
        let bits = bits_per_symbol(order)?;
        let points = if bits == 1 {
            vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]
        } else if bits % 2 == 0 {
            // First half of the label drives I, second half drives Q.
            let half = bits / 2;
            let pam = gray_pam(half);
            let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip();
            (0..order)
                .map(|label| {
                    let i = pam[label >> half];
                    let q = pam[label & ((1 << half) - 1)];
                    C64::new(i, q) * scale
                })
                .collect()
        } else {
            bail!(
                InvalidParameter,
                "non-square QAM order {order} is not supported"
            );
        };
        Ok(Self {
            order,
            bits_per_symbol: bits,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> C64 {
        self.points[label]
    }

    /// Smallest distance between two distinct points.
    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.min((a - b).norm());
            }
        }
        best
    }

    /// Maps each group of `bits_per_symbol` bits to its labelled point.
    pub fn modulate(&self, bits: &[bool]) -> Result<Vec<C64>> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            bail!(
                InvalidInput,
                "{} bits is not a multiple of {} bits per symbol",
                bits.len(),
                self.bits_per_symbol
            );
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|group| {
                let label = group.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
                self.points[label]
            })
            .collect())
    }

    /// Label of the nearest point; ties go to the lowest label.
    pub fn nearest_label(&self, symbol: C64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (label, p) in self.points.iter().enumerate() {
            let dist = (symbol - p).norm_sqr();
            if dist < best_dist {
                best = label;
                best_dist = dist;
            }
        }
        best
    }

    /// Hard nearest-neighbour demapping of every symbol.
    pub fn demodulate(&self, symbols: &[C64]) -> Vec<bool> {
        let width = self.bits_per_symbol;
        let mut bits = Vec::with_capacity(symbols.len() * width);
        for &s in symbols {
            let label = self.nearest_label(s);
            bits.extend((0..width).rev().map(|i| (label >> i) & 1 == 1));
        }
        bits
    }
}
