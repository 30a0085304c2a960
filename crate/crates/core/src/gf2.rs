//! Packed GF(2) vectors and the polar transform in both orientations.
//!
//! Bit `j` (0-based) of a [`BitVector`] lives in word `j / 64`, bit `j % 64`.
//! [`IndexSet`] is 1-based to match the way positions are reported.

use std::fmt;

use rand::Rng;

use crate::Error;

/// Positions whose bit `s` is clear, for `s = 1, 2, 4, 8, 16, 32`.
const LOW_MASK: [u64; 6] = [
    0x5555_5555_5555_5555,
    0x3333_3333_3333_3333,
    0x0f0f_0f0f_0f0f_0f0f,
    0x00ff_00ff_00ff_00ff,
    0x0000_ffff_0000_ffff,
    0x0000_0000_ffff_ffff,
];

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self { len, words: vec![0; len.div_ceil(64)] }
    }

    /// Builds from a slice of 0/1 values; any nonzero entry counts as 1.
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            if b != 0 {
                v.set(j, true);
            }
        }
        v
    }

    /// Low `len` bits of `word`, bit 0 first. `len <= 64`.
    pub fn from_u64(word: u64, len: usize) -> Self {
        assert!(len <= 64);
        let mut v = Self::zeros(len);
        if len > 0 {
            v.words[0] = word & mask(len);
        }
        v
    }

    /// Indicator vector with a single one at 0-based position `j`.
    pub fn unit(len: usize, j: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(j, true);
        v
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut v = Self::zeros(len);
        for w in v.words.iter_mut() {
            *w = rng.random();
        }
        v.clear_tail();
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn get(&self, j: usize) -> bool {
        debug_assert!(j < self.len);
        (self.words[j >> 6] >> (j & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, j: usize, bit: bool) {
        debug_assert!(j < self.len);
        let m = 1u64 << (j & 63);
        if bit {
            self.words[j >> 6] |= m;
        } else {
            self.words[j >> 6] &= !m;
        }
    }

    #[inline]
    pub fn flip(&mut self, j: usize) {
        debug_assert!(j < self.len);
        self.words[j >> 6] ^= 1u64 << (j & 63);
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor_assign(&mut self, other: &BitVector) {
        assert_eq!(self.len, other.len, "xor of vectors with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &BitVector) -> BitVector {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    pub fn and(&self, other: &BitVector) -> BitVector {
        assert_eq!(self.len, other.len);
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect();
        BitVector { len: self.len, words }
    }

    /// Parity of the overlap of two supports.
    pub fn dot(&self, other: &BitVector) -> bool {
        self.and(other).weight() % 2 == 1
    }

    /// Up to 64 bits starting at `start`, packed low-first.
    #[inline]
    pub fn get_bits(&self, start: usize, len: usize) -> u64 {
        debug_assert!(len <= 64 && start + len <= self.len);
        if len == 0 {
            return 0;
        }
        let (w, o) = (start >> 6, start & 63);
        let mut x = self.words[w] >> o;
        if o != 0 && o + len > 64 {
            x |= self.words[w + 1] << (64 - o);
        }
        x & mask(len)
    }

    /// XORs the low `len` bits of `val` into positions `start..start+len`.
    #[inline]
    pub fn xor_bits(&mut self, start: usize, len: usize, val: u64) {
        debug_assert!(len <= 64 && start + len <= self.len);
        if len == 0 {
            return;
        }
        let val = val & mask(len);
        let (w, o) = (start >> 6, start & 63);
        self.words[w] ^= val << o;
        if o != 0 && o + len > 64 {
            self.words[w + 1] ^= val >> (64 - o);
        }
    }

    /// Contiguous sub-vector `start..start+len`.
    pub fn slice(&self, start: usize, len: usize) -> BitVector {
        assert!(start + len <= self.len);
        let mut out = BitVector::zeros(len);
        let mut k = 0;
        while k < len {
            let c = (len - k).min(64);
            out.xor_bits(k, c, self.get_bits(start + k, c));
            k += c;
        }
        out
    }

    /// XORs `src` into positions `start..start+src.len()`.
    pub fn xor_slice(&mut self, start: usize, src: &BitVector) {
        assert!(start + src.len <= self.len);
        let mut k = 0;
        while k < src.len {
            let c = (src.len - k).min(64);
            self.xor_bits(start + k, c, src.get_bits(k, c));
            k += c;
        }
    }

    /// XORs `src[start..start+self.len()]` into `self`.
    pub fn xor_from(&mut self, src: &BitVector, start: usize) {
        assert!(start + self.len <= src.len);
        let mut k = 0;
        while k < self.len {
            let c = (self.len - k).min(64);
            self.xor_bits(k, c, src.get_bits(start + k, c));
            k += c;
        }
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    /// Concatenation of the given parts, in order.
    pub fn concat(parts: &[&BitVector]) -> BitVector {
        let len = parts.iter().map(|p| p.len).sum();
        let mut out = BitVector::zeros(len);
        let mut at = 0;
        for p in parts {
            out.xor_slice(at, p);
            at += p.len;
        }
        out
    }

    /// Index reversal `j -> len-1-j`.
    pub fn reversed(&self) -> BitVector {
        let mut out = BitVector::zeros(self.len);
        for j in self.ones() {
            out.set(self.len - 1 - j, true);
        }
        out
    }

    /// 0-based positions of the ones, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|j| self.get(j) as u8).collect()
    }

    pub fn restrict(&self, s: &IndexSet) -> Result<BitVector, Error> {
        if let Some(&last) = s.positions.last() {
            if last > self.len {
                return Err(Error::InvalidInput(format!(
                    "index {last} out of range for length {}",
                    self.len
                )));
            }
        }
        let mut out = BitVector::zeros(s.len());
        for (k, &p) in s.positions.iter().enumerate() {
            out.set(k, self.get(p - 1));
        }
        Ok(out)
    }

    /// `P_N v`, with `P_2 (u1, u2) = (u1 ^ u2, u2)`.
    pub fn polar_transform(&self) -> Result<BitVector, Error> {
        check_pow2(self.len)?;
        let mut out = self.clone();
        out.polar_in_place();
        Ok(out)
    }

    /// `P_N^T v`, with `P_2^T (u1, u2) = (u1, u1 ^ u2)`.
    pub fn polar_transform_transpose(&self) -> Result<BitVector, Error> {
        check_pow2(self.len)?;
        let mut out = self.clone();
        out.polar_transpose_in_place();
        Ok(out)
    }

    /// In-place `P_N`; the length must be a power of two.
    pub fn polar_in_place(&mut self) {
        debug_assert!(self.len.is_power_of_two());
        for w in self.words.iter_mut() {
            *w = polar_word(*w, self.len);
        }
        let nw = self.words.len();
        let mut s = 1;
        while s < nw {
            for a in 0..nw {
                if a & s == 0 {
                    self.words[a] ^= self.words[a + s];
                }
            }
            s <<= 1;
        }
    }

    /// In-place `P_N^T`; the length must be a power of two.
    pub fn polar_transpose_in_place(&mut self) {
        debug_assert!(self.len.is_power_of_two());
        for w in self.words.iter_mut() {
            *w = polar_transpose_word(*w, self.len);
        }
        let nw = self.words.len();
        let mut s = 1;
        while s < nw {
            for a in 0..nw {
                if a & s == 0 {
                    self.words[a + s] ^= self.words[a];
                }
            }
            s <<= 1;
        }
    }

    fn clear_tail(&mut self) {
        if self.len % 64 != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= mask(self.len % 64);
            }
        }
    }
}

/// `P_L` applied to the low `len` bits of a word, or to each 64-bit chunk
/// when `len > 64`.
#[inline]
pub fn polar_word(mut w: u64, len: usize) -> u64 {
    for (k, &m) in LOW_MASK.iter().enumerate() {
        if 1usize << k >= len {
            break;
        }
        w ^= (w >> (1 << k)) & m;
    }
    w
}

/// `P_L^T` counterpart of [`polar_word`].
#[inline]
pub fn polar_transpose_word(mut w: u64, len: usize) -> u64 {
    for (k, &m) in LOW_MASK.iter().enumerate() {
        if 1usize << k >= len {
            break;
        }
        w ^= (w & m) << (1 << k);
    }
    w
}

/// Low `len` bits set.
#[inline]
pub fn mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

fn check_pow2(len: usize) -> Result<(), Error> {
    if len.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("length {len} is not a power of two")))
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len {
            f.write_str(if self.get(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Sorted set of 1-based positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct IndexSet {
    positions: Vec<usize>,
}

impl IndexSet {
    /// Validates membership in `[1, n]` and removes nothing: duplicates are an error.
    pub fn new(mut positions: Vec<usize>, n: usize) -> Result<Self, Error> {
        positions.sort_unstable();
        if positions.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate index".into()));
        }
        if positions.first().is_some_and(|&p| p == 0) || positions.last().is_some_and(|&p| p > n) {
            return Err(Error::InvalidInput(format!("index out of range [1, {n}]")));
        }
        Ok(Self { positions })
    }

    /// `{lo, ..., hi}`; empty when `hi < lo`.
    pub fn range(lo: usize, hi: usize) -> Self {
        assert!(lo >= 1);
        Self { positions: (lo..=hi).collect() }
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn contains(&self, p: usize) -> bool {
        self.positions.binary_search(&p).is_ok()
    }

    /// Image under `p -> n + 1 - p`.
    pub fn reversed(&self, n: usize) -> Self {
        let mut positions: Vec<usize> = self.positions.iter().map(|&p| n + 1 - p).collect();
        positions.reverse();
        Self { positions }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Dense `P_2^{⊗n}` as rows of 0/1, built by explicit Kronecker products.
    fn dense_polar(n: u32) -> Vec<Vec<u8>> {
        let base = [[1u8, 1], [0, 1]];
        let mut m = vec![vec![1u8]];
        for _ in 0..n {
            let d = m.len();
            let mut next = vec![vec![0u8; 2 * d]; 2 * d];
            for (a, row) in base.iter().enumerate() {
                for (b, &kb) in row.iter().enumerate() {
                    for r in 0..d {
                        for c in 0..d {
                            next[a * d + r][b * d + c] = kb & m[r][c];
                        }
                    }
                }
            }
            m = next;
        }
        m
    }

    fn mat_vec(m: &[Vec<u8>], v: &[u8], transpose: bool) -> Vec<u8> {
        let d = m.len();
        (0..d)
            .map(|r| {
                (0..d).fold(0u8, |acc, c| {
                    let e = if transpose { m[c][r] } else { m[r][c] };
                    acc ^ (e & v[c])
                })
            })
            .collect()
    }

    #[test]
    fn base_kernel() {
        let t = |b: &[u8]| BitVector::from_bits(b).polar_transform().unwrap().to_bits();
        let tt = |b: &[u8]| BitVector::from_bits(b).polar_transform_transpose().unwrap().to_bits();
        assert_eq!(t(&[1, 0]), vec![1, 0]);
        assert_eq!(t(&[0, 1]), vec![1, 1]);
        assert_eq!(tt(&[1, 0]), vec![1, 1]);
        assert_eq!(tt(&[0, 1]), vec![0, 1]);
    }

    #[test]
    fn first_column_of_p8() {
        let m = dense_polar(3);
        let col: Vec<u8> = m.iter().map(|r| r[0]).collect();
        let got = BitVector::unit(8, 0).polar_transform().unwrap().to_bits();
        assert_eq!(got, col);
        assert_eq!(got, vec![1, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn zero_maps_to_zero() {
        for n in 0..12 {
            let z = BitVector::zeros(1 << n);
            assert!(z.polar_transform().unwrap().is_zero());
            assert!(z.polar_transform_transpose().unwrap().is_zero());
        }
    }

    #[test]
    fn matches_dense_kronecker_exhaustively() {
        for n in 0..=4u32 {
            let m = dense_polar(n);
            let len = 1usize << n;
            for word in 0..(1u64 << len.min(16)) {
                let v = BitVector::from_u64(word, len);
                let bits = v.to_bits();
                assert_eq!(v.polar_transform().unwrap().to_bits(), mat_vec(&m, &bits, false));
                assert_eq!(
                    v.polar_transform_transpose().unwrap().to_bits(),
                    mat_vec(&m, &bits, true)
                );
            }
        }
    }

    #[test]
    fn transpose_is_involution_on_length_8() {
        for word in 0..256u64 {
            let v = BitVector::from_u64(word, 8);
            let back = v.polar_transform_transpose().unwrap().polar_transform_transpose().unwrap();
            assert_eq!(back, v);
        }
    }

    #[test]
    fn matches_recursive_definition_across_word_boundaries() {
        fn rec(v: &[u8]) -> Vec<u8> {
            if v.len() == 1 {
                return v.to_vec();
            }
            let h = v.len() / 2;
            let s: Vec<u8> = (0..h).map(|j| v[j] ^ v[h + j]).collect();
            let mut out = rec(&s);
            out.extend(rec(&v[h..]));
            out
        }
        fn rec_t(v: &[u8]) -> Vec<u8> {
            if v.len() == 1 {
                return v.to_vec();
            }
            let h = v.len() / 2;
            let a = rec_t(&v[..h]);
            let b = rec_t(&v[h..]);
            let mut out = a.clone();
            out.extend(a.iter().zip(&b).map(|(x, y)| x ^ y));
            out
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 5..=10 {
            for _ in 0..20 {
                let v = BitVector::random(1 << n, &mut rng);
                assert_eq!(v.polar_transform().unwrap().to_bits(), rec(&v.to_bits()));
                assert_eq!(v.polar_transform_transpose().unwrap().to_bits(), rec_t(&v.to_bits()));
            }
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(BitVector::zeros(6).polar_transform().is_err());
        assert!(BitVector::zeros(3).polar_transform_transpose().is_err());
    }

    #[test]
    fn restrict_examples() {
        let v = BitVector::from_bits(&[1, 0, 1, 1]);
        assert_eq!(v.restrict(&IndexSet::new(vec![2, 4], 4).unwrap()).unwrap().to_bits(), vec![0, 1]);
        assert_eq!(v.restrict(&IndexSet::range(1, 4)).unwrap(), v);
        let w = BitVector::from_bits(&[1, 1, 0, 0, 1, 0, 1, 0]);
        assert_eq!(w.restrict(&IndexSet::range(1, 3)).unwrap().to_bits(), vec![1, 1, 0]);
        assert!(v.restrict(&IndexSet::range(1, 5)).is_err());
        assert!(IndexSet::new(vec![0], 4).is_err());
        assert!(IndexSet::new(vec![2, 2], 4).is_err());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(BitVector::zeros(9).weight(), 0);
        assert_eq!(BitVector::from_bits(&[1, 0, 1, 1]).weight(), 3);
    }

    #[test]
    fn weight_triangle_inequality_exhaustive() {
        for len in 1..=8 {
            for a in 0..(1u64 << len) {
                for b in 0..(1u64 << len) {
                    let (va, vb) = (BitVector::from_u64(a, len), BitVector::from_u64(b, len));
                    assert!(va.xor(&vb).weight() <= va.weight() + vb.weight());
                }
            }
        }
    }

    #[test]
    fn slice_and_concat_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = BitVector::random(300, &mut rng);
        for (s, l) in [(0, 300), (3, 70), (60, 130), (127, 1), (200, 100)] {
            let part = v.slice(s, l);
            assert_eq!(part.to_bits(), v.to_bits()[s..s + l].to_vec());
        }
        let back = BitVector::concat(&[&v.slice(0, 77), &v.slice(77, 223)]);
        assert_eq!(back, v);
        assert_eq!(v.reversed().reversed(), v);
    }

    fn vec_strategy() -> impl Strategy<Value = BitVector> {
        (1u32..=10, any::<u64>()).prop_map(|(n, seed)| {
            BitVector::random(1 << n, &mut ChaCha8Rng::seed_from_u64(seed))
        })
    }

    proptest! {
        #[test]
        fn polar_is_involution(v in vec_strategy()) {
            prop_assert_eq!(v.polar_transform().unwrap().polar_transform().unwrap(), v);
        }

        #[test]
        fn transforms_are_linear(v in vec_strategy(), seed in any::<u64>()) {
            let w = BitVector::random(v.len(), &mut ChaCha8Rng::seed_from_u64(seed));
            let sum = v.xor(&w);
            prop_assert_eq!(
                sum.polar_transform().unwrap(),
                v.polar_transform().unwrap().xor(&w.polar_transform().unwrap())
            );
            prop_assert_eq!(
                sum.polar_transform_transpose().unwrap(),
                v.polar_transform_transpose().unwrap().xor(&w.polar_transform_transpose().unwrap())
            );
        }

        #[test]
        fn transpose_is_reversal_conjugate(v in vec_strategy()) {
            let lhs = v.polar_transform_transpose().unwrap();
            let rhs = v.reversed().polar_transform().unwrap().reversed();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
