//! Min-sum successive-cancellation decoding of polar codes.

use serde::{Deserialize, Serialize};

use crate::gf2::{BitVector, IndexSet};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Codewords `P_N u`.
    Standard,
    /// Codewords `P_N^T u`.
    Reversed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeTask {
    pub n: u32,
    pub frozen_set: IndexSet,
    pub frozen_values: BitVector,
    pub llr_in: Vec<f64>,
    pub orientation: Orientation,
}

impl DecodeTask {
    pub fn validate(&self) -> Result<(), Error> {
        let len = 1usize << self.n;
        if self.llr_in.len() != len {
            return Err(Error::InvalidInput(format!("{} LLRs for length {len}", self.llr_in.len())));
        }
        if self.frozen_values.len() != self.frozen_set.len() {
            return Err(Error::InvalidInput("frozen values and frozen set differ in size".into()));
        }
        if self.frozen_set.positions().last().is_some_and(|&p| p > len) {
            return Err(Error::InvalidInput("frozen position out of range".into()));
        }
        Ok(())
    }

    /// The same task expressed in the other orientation on index-reversed data.
    pub fn reversed(&self) -> DecodeTask {
        let len = 1usize << self.n;
        DecodeTask {
            n: self.n,
            frozen_set: self.frozen_set.reversed(len),
            frozen_values: self.frozen_values.reversed(),
            llr_in: self.llr_in.iter().rev().copied().collect(),
            orientation: match self.orientation {
                Orientation::Standard => Orientation::Reversed,
                Orientation::Reversed => Orientation::Standard,
            },
        }
    }
}

/// Returns `(u_hat, codeword_hat)`.
pub fn sc_decode(task: &DecodeTask) -> Result<(BitVector, BitVector), Error> {
    task.validate()?;
    match task.orientation {
        Orientation::Standard => Ok(decode_standard(task)),
        Orientation::Reversed => reversed_decode_adapter(task),
    }
}

/// Decodes a `P_N^T` task through the identity `P^T = R P R`, with `R` the
/// index reversal.
pub fn reversed_decode_adapter(task: &DecodeTask) -> Result<(BitVector, BitVector), Error> {
    task.validate()?;
    if task.orientation != Orientation::Reversed {
        return Err(Error::InvalidInput("adapter expects a reversed task".into()));
    }
    let (u, x) = decode_standard(&task.reversed());
    Ok((u.reversed(), x.reversed()))
}

fn decode_standard(task: &DecodeTask) -> (BitVector, BitVector) {
    let len = 1usize << task.n;
    let mut frozen = vec![None; len];
    for (k, &p) in task.frozen_set.positions().iter().enumerate() {
        frozen[p - 1] = Some(task.frozen_values.get(k));
    }
    let mut dec = ScDecoder::new(task.n);
    let mut u = vec![0u8; len];
    let x = dec.decode(&task.llr_in, &frozen, &mut u);
    (BitVector::from_bits(&u), BitVector::from_bits(x))
}

#[inline]
fn check(a: f64, b: f64) -> f64 {
    let m = a.abs().min(b.abs());
    if (a < 0.0) != (b < 0.0) {
        -m
    } else {
        m
    }
}

/// Reusable scratch space for repeated decodes at a fixed length.
pub struct ScDecoder {
    n: u32,
    llr: Vec<Vec<f64>>,
    bits: Vec<Vec<u8>>,
}

impl ScDecoder {
    pub fn new(n: u32) -> Self {
        let llr = (0..=n).map(|d| vec![0.0; 1 << d]).collect();
        let bits = (0..=n).map(|d| vec![0u8; 1 << d]).collect();
        Self { n, llr, bits }
    }

    /// Standard-orientation decode. `frozen[j]` fixes input `j` (0-based);
    /// decisions land in `u`; the re-encoded codeword is returned.
    pub fn decode(&mut self, llr_in: &[f64], frozen: &[Option<bool>], u: &mut [u8]) -> &[u8] {
        let n = self.n as usize;
        self.llr[n].copy_from_slice(llr_in);
        self.rec(n, 0, frozen, u);
        &self.bits[n]
    }

    fn rec(&mut self, d: usize, offset: usize, frozen: &[Option<bool>], u: &mut [u8]) {
        if d == 0 {
            let b = match frozen[offset] {
                Some(v) => v as u8,
                None => (self.llr[0][0] < 0.0) as u8,
            };
            u[offset] = b;
            self.bits[0][0] = b;
            return;
        }
        let h = 1 << (d - 1);
        {
            let (lo, hi) = self.llr.split_at_mut(d);
            let src = &hi[0];
            for k in 0..h {
                lo[d - 1][k] = check(src[k], src[h + k]);
            }
        }
        self.rec(d - 1, offset, frozen, u);
        // Keep the left half's codeword while the right half reuses the scratch.
        {
            let (lo, hi) = self.bits.split_at_mut(d);
            hi[0][..h].copy_from_slice(&lo[d - 1][..h]);
        }
        {
            let (lo, hi) = self.llr.split_at_mut(d);
            let src = &hi[0];
            let left = &self.bits[d][..h];
            for k in 0..h {
                let a = src[k];
                lo[d - 1][k] = src[h + k] + if left[k] == 1 { -a } else { a };
            }
        }
        self.rec(d - 1, offset + h, frozen, u);
        let (lo, hi) = self.bits.split_at_mut(d);
        let out = &mut hi[0];
        for k in 0..h {
            let r = lo[d - 1][k];
            out[k] ^= r;
            out[h + k] = r;
        }
    }
}
