//! Q1 code descriptors: frozen sets, stabilizer generators, logical
//! operators, minimum distance, construction and the preparation schedule.

use serde::{Deserialize, Serialize};

use crate::gf2::{BitVector, IndexSet};
use crate::reliability::{q1_position_log_ler, ReliabilityProfile};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Q1Code {
    pub n: u32,
    /// Information position, 1-based.
    pub i: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Q1,
    Shor,
}

impl Q1Code {
    pub fn new(n: u32, i: usize) -> Result<Self, Error> {
        if n > 20 {
            return Err(Error::ResourceBound(format!("n = {n} exceeds 20")));
        }
        if !(1..=1usize << n).contains(&i) {
            return Err(Error::InvalidInput(format!("i = {i} outside [1, {}]", 1usize << n)));
        }
        Ok(Self { n, i })
    }

    pub fn len(&self) -> usize {
        1 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Z-frozen set `{1, ..., i-1}`.
    pub fn z_frozen(&self) -> IndexSet {
        IndexSet::range(1, self.i - 1)
    }

    /// X-frozen set `{i+1, ..., N}`.
    pub fn x_frozen(&self) -> IndexSet {
        IndexSet::range(self.i + 1, self.len())
    }

    pub fn is_shor(&self) -> bool {
        self.i.is_power_of_two()
    }
}

/// Picks the position minimizing the logical error estimate; ties go to the
/// smallest index.
pub fn construct(n: u32, profile: &ReliabilityProfile, family: Family) -> Result<Q1Code, Error> {
    if profile.n != n || profile.len() != 1 << n {
        return Err(Error::InvalidInput(format!("profile depth {} does not match n = {n}", profile.n)));
    }
    let candidates: Vec<usize> = match family {
        Family::Q1 => (1..=1 << n).collect(),
        Family::Shor => (0..=n).map(|k| 1 << k).collect(),
    };
    let mut best = candidates[0];
    let mut best_ler = q1_position_log_ler(profile, best);
    for &j in &candidates[1..] {
        let l = q1_position_log_ler(profile, j);
        if l < best_ler {
            best = j;
            best_ler = l;
        }
    }
    Q1Code::new(n, best)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilizerSet {
    pub x_generators: Vec<BitVector>,
    pub z_generators: Vec<BitVector>,
    /// Sign bit per X generator, `(-1)^{v_j}`.
    pub x_signs: Vec<bool>,
    /// Sign bit per Z generator, `(-1)^{u_j}`.
    pub z_signs: Vec<bool>,
}

impl StabilizerSet {
    pub fn commute(&self) -> bool {
        self.x_generators
            .iter()
            .all(|x| self.z_generators.iter().all(|z| !x.dot(z)))
    }
}

/// Generators with all-plus signs.
pub fn stabilizers(code: &Q1Code) -> StabilizerSet {
    let n = code.len();
    stabilizers_with_signs(code, &BitVector::zeros(code.i - 1), &BitVector::zeros(n - code.i))
}

/// Generators `(-1)^{v_j} X^{P e_j}` for `j` in the X-frozen set and
/// `(-1)^{u_j} Z^{P^T e_j}` for `j` in the Z-frozen set. `u` holds at least the
/// `i - 1` Z-frozen values, `v` exactly the `N - i` X-frozen values.
pub fn stabilizers_with_signs(code: &Q1Code, u: &BitVector, v: &BitVector) -> StabilizerSet {
    let n = code.len();
    assert!(u.len() >= code.i - 1 && v.len() == n - code.i);
    let mut s = StabilizerSet {
        x_generators: Vec::with_capacity(n - code.i),
        z_generators: Vec::with_capacity(code.i - 1),
        x_signs: Vec::with_capacity(n - code.i),
        z_signs: Vec::with_capacity(code.i - 1),
    };
    for j in code.i..n {
        let mut e = BitVector::unit(n, j);
        e.polar_in_place();
        s.x_generators.push(e);
        s.x_signs.push(v.get(j - code.i));
    }
    for j in 0..code.i - 1 {
        let mut e = BitVector::unit(n, j);
        e.polar_transpose_in_place();
        s.z_generators.push(e);
        s.z_signs.push(u.get(j));
    }
    s
}

/// Supports of the logical `X` (`P e_i`) and logical `Z` (`P^T e_i`).
pub fn logical_operators(code: &Q1Code) -> (BitVector, BitVector) {
    let n = code.len();
    let mut x = BitVector::unit(n, code.i - 1);
    x.polar_in_place();
    let mut z = BitVector::unit(n, code.i - 1);
    z.polar_transpose_in_place();
    (x, z)
}

pub const DEFAULT_MAX_DISTANCE_N: u32 = 14;

/// Minimum weight over both logical cosets.
///
/// A word `P u` whose lowest nonzero input is `c` (0-based) has weight at
/// least `2^{wt(c)}`, and column `c` attains it, so the X coset has minimum
/// weight `2^{wt(i-1)}`. The Z coset is the same statement for `P^T`, which is
/// `P` conjugated by index reversal, giving `2^{wt(N-i)} = 2^{n - wt(i-1)}`.
pub fn min_distance(code: &Q1Code) -> Result<u64, Error> {
    min_distance_bounded(code, DEFAULT_MAX_DISTANCE_N)
}

pub fn min_distance_bounded(code: &Q1Code, max_n: u32) -> Result<u64, Error> {
    if code.n > max_n {
        return Err(Error::ResourceBound(format!("n = {} exceeds bound {max_n}", code.n)));
    }
    let (dx, dz) = coset_distances(code);
    Ok(dx.min(dz))
}

/// Minimum weights of the logical X and logical Z cosets.
pub fn coset_distances(code: &Q1Code) -> (u64, u64) {
    let w = (code.i - 1).count_ones();
    (1u64 << w, 1u64 << (code.n - w))
}

/// Level schedule `b_1 ... b_n`: the bits of `i_final - 1`, `b_1` least
/// significant. `true` means a Z⊗Z level.
pub fn prep_bits(n: u32, i_final: usize) -> Vec<bool> {
    assert!(i_final >= 1 && i_final <= 1 << n);
    (0..n).map(|k| (i_final - 1) >> k & 1 == 1).collect()
}

pub fn prep_bit_sequence(code: &Q1Code) -> Vec<bool> {
    prep_bits(code.n, code.i)
}

/// Replays `i(k) = i(k-1) + K/2` on Z⊗Z levels, `i(k) = i(k-1)` otherwise.
pub fn replay_schedule(bits: &[bool]) -> Vec<usize> {
    let mut i = vec![1usize];
    for (k, &b) in bits.iter().enumerate() {
        let last = *i.last().unwrap();
        i.push(if b { last + (1 << k) } else { last });
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reliability::{ConstructionMode, DeMethod};
    use proptest::prelude::*;

    /// Minimum weight of `x + span(gens)` by Gray-code sweep.
    fn coset_min_weight(x: &BitVector, gens: &[BitVector]) -> u64 {
        let mut cur = x.clone();
        let mut best = cur.weight();
        for step in 1u64..(1u64 << gens.len()) {
            cur.xor_assign(&gens[step.trailing_zeros() as usize]);
            best = best.min(cur.weight());
        }
        best as u64
    }

    fn brute_distances(code: &Q1Code) -> (u64, u64) {
        let s = stabilizers(code);
        let (lx, lz) = logical_operators(code);
        (coset_min_weight(&lx, &s.x_generators), coset_min_weight(&lz, &s.z_generators))
    }

    #[test]
    fn closed_form_distance_matches_enumeration() {
        for n in 0..=4 {
            for i in 1..=1usize << n {
                let c = Q1Code::new(n, i).unwrap();
                assert_eq!(coset_distances(&c), brute_distances(&c), "n={n} i={i}");
            }
        }
        for i in 1..=32 {
            let c = Q1Code::new(5, i).unwrap();
            let (dx, dz) = coset_distances(&c);
            let s = stabilizers(&c);
            let (lx, lz) = logical_operators(&c);
            if s.x_generators.len() <= 20 {
                assert_eq!(dx, coset_min_weight(&lx, &s.x_generators));
            }
            if s.z_generators.len() <= 20 {
                assert_eq!(dz, coset_min_weight(&lz, &s.z_generators));
            }
        }
    }

    #[test]
    fn distance_examples() {
        let d = |n, i| min_distance(&Q1Code::new(n, i).unwrap()).unwrap();
        assert_eq!(d(4, 7), 4);
        assert_eq!(d(4, 4), 4);
        assert_eq!(d(6, 23), 8);
        assert_eq!(d(6, 8), 8);
        assert_eq!(d(1, 1), 1);
        assert!(min_distance(&Q1Code::new(15, 3).unwrap()).is_err());
    }

    #[test]
    fn generators_for_two_qubits() {
        let s = stabilizers(&Q1Code::new(1, 1).unwrap());
        assert_eq!(s.x_generators, vec![BitVector::from_bits(&[1, 1])]);
        assert!(s.z_generators.is_empty());
        let s = stabilizers(&Q1Code::new(1, 2).unwrap());
        assert_eq!(s.z_generators, vec![BitVector::from_bits(&[1, 1])]);
        assert!(s.x_generators.is_empty());
        let (x, z) = logical_operators(&Q1Code::new(1, 1).unwrap());
        assert_eq!(x.to_bits(), vec![1, 0]);
        assert_eq!(z.to_bits(), vec![1, 1]);
    }

    #[test]
    fn css_structure_exhaustive() {
        for n in 0..=6 {
            for i in 1..=1usize << n {
                let c = Q1Code::new(n, i).unwrap();
                let s = stabilizers(&c);
                assert_eq!(s.x_generators.len(), c.len() - i);
                assert_eq!(s.z_generators.len(), i - 1);
                assert!(s.commute());
                let (lx, lz) = logical_operators(&c);
                assert!(lx.dot(&lz), "logicals must anticommute");
                assert!(s.z_generators.iter().all(|g| !lx.dot(g)));
                assert!(s.x_generators.iter().all(|g| !lz.dot(g)));
            }
        }
    }

    #[test]
    fn construct_examples() {
        let prof = ReliabilityProfile::depolarizing(6, 1e-3, ConstructionMode::IgnoreCorr, DeMethod::Exact).unwrap();
        assert_eq!(construct(6, &prof, Family::Q1).unwrap().i, 23);
        assert_eq!(construct(6, &prof, Family::Shor).unwrap().i, 8);
        let erasure = ReliabilityProfile::erasure(8, 1e-3).unwrap();
        assert_eq!(construct(8, &erasure, Family::Q1).unwrap().i, 87);
        assert_eq!(construct(8, &erasure, Family::Shor).unwrap().i, 16);
        let flat = ReliabilityProfile { n: 3, pe_z: vec![0.1; 8], pe_x: vec![0.1; 8], log_pe: None };
        assert_eq!(construct(3, &flat, Family::Q1).unwrap().i, 1);
        assert!(construct(4, &flat, Family::Q1).is_err());
    }

    #[test]
    fn prep_bits_examples() {
        let c = Q1Code::new(3, 3).unwrap();
        assert_eq!(prep_bit_sequence(&c), vec![false, true, false]);
        assert_eq!(prep_bits(4, 1), vec![false; 4]);
        assert_eq!(prep_bits(4, 16), vec![true; 4]);
    }

    proptest! {
        #[test]
        fn schedule_replay_reaches_target(n in 1u32..12, seed in any::<usize>()) {
            let i = 1 + seed % (1usize << n);
            let bits = prep_bits(n, i);
            let trace = replay_schedule(&bits);
            prop_assert_eq!(*trace.last().unwrap(), i);
            for (k, &b) in bits.iter().enumerate() {
                // Coset relation: a Z⊗Z level moves i(k) into the upper half.
                prop_assert_eq!(b, trace[k + 1] > (1usize << (k + 1)) / 2);
            }
        }
    }
}
