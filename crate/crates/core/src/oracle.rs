//! Dense state-vector simulator for at most 8 data qubits plus one ancilla.
//!
//! Test oracle only: it runs the preparation circuit gate by gate, so it
//! shares nothing with the frame-based simulator beyond the component layout.
//! Qubit `q` is bit `q` of the basis index.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gf2::BitVector;
use crate::prep::{component_index, LevelTrace, PrepTrace};
use crate::Error;

pub const MAX_DATA_QUBITS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `qubits` qubits (data plus at most one ancilla).
    pub fn zero(qubits: usize) -> Result<Self, Error> {
        if qubits > MAX_DATA_QUBITS + 1 {
            return Err(Error::ResourceBound(format!("{qubits} qubits exceed the oracle cap")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { qubits, amps })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, Error> {
        if !amps.len().is_power_of_two() || amps.len() > 1 << (MAX_DATA_QUBITS + 1) {
            return Err(Error::InvalidInput(format!("{} amplitudes", amps.len())));
        }
        let qubits = amps.len().trailing_zeros() as usize;
        let mut s = Self { qubits, amps };
        s.normalize();
        Ok(s)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn normalize(&mut self) {
        let n = self.norm();
        for a in &mut self.amps {
            *a /= n;
        }
    }

    pub fn x(&mut self, q: usize) {
        let m = 1 << q;
        for k in 0..self.amps.len() {
            if k & m == 0 {
                self.amps.swap(k, k | m);
            }
        }
    }

    pub fn z(&mut self, q: usize) {
        let m = 1 << q;
        for (k, a) in self.amps.iter_mut().enumerate() {
            if k & m != 0 {
                *a = -*a;
            }
        }
    }

    pub fn h(&mut self, q: usize) {
        let m = 1 << q;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for k in 0..self.amps.len() {
            if k & m == 0 {
                let (a, b) = (self.amps[k], self.amps[k | m]);
                self.amps[k] = (a + b) * s;
                self.amps[k | m] = (a - b) * s;
            }
        }
    }

    pub fn cnot(&mut self, control: usize, target: usize) {
        let (c, t) = (1 << control, 1 << target);
        for k in 0..self.amps.len() {
            if k & c != 0 && k & t == 0 {
                self.amps.swap(k, k | t);
            }
        }
    }

    /// `X^x Z^z` with `x`, `z` indexed by qubit.
    pub fn apply_pauli(&mut self, x: &BitVector, z: &BitVector) {
        for q in z.ones() {
            self.z(q);
        }
        for q in x.ones() {
            self.x(q);
        }
    }

    /// Probability that a Z measurement of `q` gives 1.
    pub fn prob_one(&self, q: usize) -> f64 {
        let m = 1 << q;
        self.amps.iter().enumerate().filter(|(k, _)| k & m != 0).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Projects `q` onto `outcome` and renormalizes; returns the outcome's
    /// probability. The state is left untouched when it is zero.
    pub fn project(&mut self, q: usize, outcome: bool) -> f64 {
        let p1 = self.prob_one(q);
        let p = if outcome { p1 } else { 1.0 - p1 };
        if p <= 0.0 {
            return 0.0;
        }
        let m = 1 << q;
        for (k, a) in self.amps.iter_mut().enumerate() {
            if (k & m != 0) != outcome {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        self.normalize();
        p
    }

    /// Born-rule Z measurement of `q`.
    pub fn measure<R: Rng + ?Sized>(&mut self, q: usize, rng: &mut R) -> bool {
        let outcome = rng.random::<f64>() < self.prob_one(q);
        self.project(q, outcome);
        outcome
    }

    /// `|<self|other>|^2`, ignoring global phase.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        assert_eq!(self.qubits, other.qubits);
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm_sqr()
    }

    /// Drops the top qubit, which must be in `|0>`.
    fn drop_top_zero(&self) -> StateVector {
        let half = self.amps.len() / 2;
        debug_assert!(self.amps[half..].iter().all(|a| a.norm_sqr() < 1e-20));
        StateVector { qubits: self.qubits - 1, amps: self.amps[..half].to_vec() }
    }
}

fn check_size(len: usize) -> Result<(), Error> {
    if len > MAX_DATA_QUBITS || !len.is_power_of_two() {
        return Err(Error::ResourceBound(format!("oracle handles N <= {MAX_DATA_QUBITS}, got {len}")));
    }
    Ok(())
}

/// `Q_N (|u>_Z ⊗ |v̄>_X)` built from Hadamards and the CNOT network of the
/// polar transform: at stride `s`, qubit `a + s` controls qubit `a`.
pub fn apply_polar_encoding(n: u32, u: &BitVector, v: &BitVector) -> Result<StateVector, Error> {
    let len = u.len() + v.len();
    check_size(len)?;
    if len != 1 << n {
        return Err(Error::InvalidInput(format!("|u| + |v| = {len}, expected {}", 1 << n)));
    }
    let mut s = StateVector::zero(len)?;
    for q in u.ones() {
        s.x(q);
    }
    for j in 0..v.len() {
        let q = u.len() + j;
        if v.get(j) {
            s.x(q);
        }
        s.h(q);
    }
    let mut stride = 1;
    while stride < len {
        for a in 0..len {
            if a & stride == 0 {
                s.cnot(a + stride, a);
            }
        }
        stride <<= 1;
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliKind {
    X,
    Z,
}

/// `<psi| P |psi>` for the all-`kind` Pauli on `support`.
pub fn stabilizer_expectation(state: &StateVector, support: &BitVector, kind: PauliKind) -> Result<f64, Error> {
    if support.len() > state.qubits {
        return Err(Error::InvalidInput("support longer than the register".into()));
    }
    let mut mask = 0usize;
    for q in support.ones() {
        mask |= 1 << q;
    }
    let e: Complex64 = match kind {
        PauliKind::Z => state
            .amps
            .iter()
            .enumerate()
            .map(|(k, a)| if (k & mask).count_ones() % 2 == 1 { -a.norm_sqr() } else { a.norm_sqr() })
            .map(|x| Complex64::new(x, 0.0))
            .sum(),
        PauliKind::X => state.amps.iter().enumerate().map(|(k, a)| a.conj() * state.amps[k ^ mask]).sum(),
    };
    Ok(e.re)
}

/// Outcomes of one level, one vector per merged block.
pub type LevelOutcomes = Vec<BitVector>;

enum Outcomes<'a> {
    Born(&'a mut ChaCha8Rng),
    Forced(&'a [LevelTrace]),
}

/// Runs the measurement network. Faults follow the component layout of the
/// frame simulator; measurement faults act as a Pauli on the ancilla just
/// before it is read. The returned flag is false when a forced outcome is
/// impossible or the forced record runs out.
fn run_network(
    n: u32,
    bits: &[bool],
    skipped: usize,
    faults: &[(u64, u8)],
    mut source: Outcomes,
) -> Result<(StateVector, Vec<LevelOutcomes>, bool), Error> {
    let len = 1usize << n;
    check_size(len)?;
    let anc = len;
    let mut s = StateVector::zero(len + 1)?;
    let fault_at = |c: u64| faults.iter().find(|f| f.0 == c).map(|f| f.1);
    for q in 0..len {
        if fault_at(q as u64).is_some() {
            s.x(q);
        }
    }
    let mut record = Vec::new();
    for (ordinal, k) in (skipped + 1..=n as usize).enumerate() {
        let size = 1usize << k;
        let h = size / 2;
        let zz = bits[k - 1];
        let mut level = Vec::new();
        for b in 0..len / size {
            let forced = match &source {
                Outcomes::Forced(levels) => match levels.get(ordinal).and_then(|l| l.outcomes.get(b)) {
                    Some(m) => Some(m.clone()),
                    None => return Ok((s.drop_top_zero(), record, false)),
                },
                Outcomes::Born(_) => None,
            };
            let mut m = BitVector::zeros(h);
            for j in 0..h {
                let comp = |c| component_index(len, ordinal, b, h, j, c);
                if zz {
                    if fault_at(comp(0)).is_some() {
                        s.x(anc);
                    }
                } else {
                    s.h(anc);
                    if fault_at(comp(0)).is_some() {
                        s.z(anc);
                    }
                }
                for (step, q) in [(1, b * size + j), (2, b * size + h + j)] {
                    let (ctrl, tgt) = if zz { (q, anc) } else { (anc, q) };
                    s.cnot(ctrl, tgt);
                    if let Some(f) = fault_at(comp(step)) {
                        for (bit, qubit, is_x) in [(1, ctrl, true), (2, ctrl, false), (4, tgt, true), (8, tgt, false)] {
                            if f & bit != 0 {
                                if is_x {
                                    s.x(qubit);
                                } else {
                                    s.z(qubit);
                                }
                            }
                        }
                    }
                }
                if fault_at(comp(3)).is_some() {
                    if zz {
                        s.x(anc);
                    } else {
                        s.z(anc);
                    }
                }
                if !zz {
                    s.h(anc);
                }
                let outcome = match (&mut source, &forced) {
                    (Outcomes::Born(rng), _) => s.measure(anc, *rng),
                    (Outcomes::Forced(_), Some(f)) => {
                        let o = f.get(j);
                        if s.project(anc, o) < 1e-12 {
                            return Ok((s.drop_top_zero(), record, false));
                        }
                        o
                    }
                    _ => unreachable!(),
                };
                if outcome {
                    s.x(anc);
                }
                m.set(j, outcome);
            }
            level.push(m);
        }
        record.push(level);
    }
    Ok((s.drop_top_zero(), record, true))
}

/// Born-rule simulation of the noiseless network for level schedule `bits`
/// (`true` = Z⊗Z), all levels performed. Returns the data state and the
/// outcomes level by level.
pub fn simulate_measurement_prep(n: u32, bits: &[bool], seed: u64) -> Result<(StateVector, Vec<LevelOutcomes>), Error> {
    if bits.len() != n as usize {
        return Err(Error::InvalidInput(format!("{} level bits for n = {n}", bits.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s, rec, _) = run_network(n, bits, 0, &[], Outcomes::Born(&mut rng))?;
    Ok((s, rec))
}

/// Re-runs a recorded preparation, injecting its faults and post-selecting on
/// its recorded outcomes. Returns `None` if the record is not reachable or
/// ends early (a rejected attempt).
pub fn replay_trace(n: u32, bits: &[bool], trace: &PrepTrace) -> Result<Option<StateVector>, Error> {
    let (s, _, complete) = run_network(n, bits, trace.skipped as usize, &trace.faults, Outcomes::Forced(&trace.levels))?;
    Ok(complete.then_some(s))
}
