//! Measurement-based preparation of Q1 code states with error detection.
//!
//! The state is never stored. Each block carries its frozen vectors `(u, v)`
//! and the whole register carries a Pauli frame. Merging two blocks with a
//! layer of Z⊗Z (or X⊗X) measurements has an exact classical outcome law:
//! the noiseless outcome is `P(u1 ^ u2, x)` (resp. `P^T(z, v1 ^ v2)`) with a
//! fresh uniform `x` (resp. `z`), so sampling that vector and propagating the
//! frame through the measurement circuit reproduces the circuit exactly.
//!
//! Alongside the physical frame a second, stabilizer-equivalent frame is kept
//! whose weight never exceeds the number of faults.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code::{prep_bits, replay_schedule, Q1Code};
use crate::gf2::{mask, polar_transpose_word, polar_word, BitVector};
use crate::rng::{task_rng, Stream};
use crate::Error;

/// Every component (initialization, CNOT, single-qubit measurement) fails
/// independently with probability `p`. A failed CNOT applies one of the 15
/// non-identity two-qubit Paulis uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub p: f64,
}

impl NoiseModel {
    pub fn new(p: f64) -> Result<Self, Error> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("p = {p} outside [0, 1]")));
        }
        Ok(Self { p })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Logical Z eigenstate; the information position is Z-frozen to a known random value.
    LogicalZ,
    /// Logical X eigenstate; the information position is X-frozen to a known random value.
    LogicalX,
    /// Whatever the outcomes produce with the information position Z-frozen.
    Generic,
}

impl Target {
    /// Final length `i(n)` of the Z-frozen vector.
    pub fn final_position(self, code: &Q1Code) -> Result<usize, Error> {
        match self {
            Target::LogicalZ | Target::Generic => Ok(code.i),
            Target::LogicalX if code.i >= 2 => Ok(code.i - 1),
            Target::LogicalX => Err(Error::InvalidInput("logical-X preparation needs i >= 2".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliFrame {
    pub x: BitVector,
    pub z: BitVector,
}

impl PauliFrame {
    pub fn zeros(len: usize) -> Self {
        Self { x: BitVector::zeros(len), z: BitVector::zeros(len) }
    }

    pub fn is_zero(&self) -> bool {
        self.x.is_zero() && self.z.is_zero()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedState {
    /// Z-frozen values, positions `1..=i(n)`.
    pub u: BitVector,
    /// X-frozen values, positions `i(n)+1..=N`.
    pub v: BitVector,
    pub frame: PauliFrame,
    /// Frame equivalent to `frame` modulo the state's stabilizers, with weight
    /// bounded by the fault count. Only kept when asked for.
    pub canonical: Option<PauliFrame>,
}

impl PreparedState {
    /// Eigenvalue bit of the logical operator the target fixes.
    pub fn logical_value(&self, target: Target) -> bool {
        match target {
            Target::LogicalZ | Target::Generic => self.u.get(self.u.len() - 1),
            Target::LogicalX => self.v.get(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrepOutcome {
    pub accepted: bool,
    pub state: Option<PreparedState>,
    pub fault_count: u32,
    pub component_count: usize,
    pub levels_skipped: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepConfig {
    /// Leave out leading Z⊗Z levels, which act trivially on `|0...0>`.
    pub skip_leading_zz: bool,
    /// Keep the low-weight equivalent frame alongside the physical one.
    #[serde(default)]
    pub track_canonical: bool,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self { skip_leading_zz: true, track_canonical: false }
    }
}

/// Number of leading Z⊗Z levels for the given target.
///
/// All qubits start in `|0>`, so this applies to both logical targets.
pub fn leading_zz_levels_skippable(code: &Q1Code, target: Target) -> Result<u32, Error> {
    let bits = prep_bits(code.n, target.final_position(code)?);
    Ok(bits.iter().take_while(|&&b| b).count() as u32)
}

/// Source of randomness for one preparation attempt.
pub trait PrepDriver {
    fn random_bits(&mut self, len: usize) -> BitVector;
    /// Same draw as `random_bits` for `len <= 64`, packed into a word.
    fn random_word(&mut self, len: usize) -> u64 {
        self.random_bits(len).get_bits(0, len)
    }
    /// Removes and returns the next fault with component index in `[from, to)`
    /// as `(index, pauli)`. `pauli` is a nonzero 4-bit code: bit 0 X and bit 1
    /// Z on the CNOT control, bit 2 X and bit 3 Z on the target. It is ignored
    /// for initializations and measurements.
    fn next_fault(&mut self, from: u64, to: u64) -> Option<(u64, u8)>;
}

/// Samples faults by geometric skipping over the component sequence.
pub struct RngDriver<'a, R: Rng> {
    rng: &'a mut R,
    geo: Option<Geometric>,
    next: u64,
}

impl<'a, R: Rng> RngDriver<'a, R> {
    pub fn new(rng: &'a mut R, p: f64) -> Self {
        if p <= 0.0 {
            return Self { rng, geo: None, next: u64::MAX };
        }
        let geo = Geometric::new(p).expect("p in (0, 1]");
        let next = geo.sample(rng);
        Self { rng, geo: Some(geo), next }
    }
}

impl<R: Rng> PrepDriver for RngDriver<'_, R> {
    fn random_bits(&mut self, len: usize) -> BitVector {
        BitVector::random(len, self.rng)
    }

    fn random_word(&mut self, len: usize) -> u64 {
        if len == 0 {
            return 0;
        }
        self.rng.random::<u64>() & mask(len)
    }

    fn next_fault(&mut self, from: u64, to: u64) -> Option<(u64, u8)> {
        let geo = self.geo?;
        while self.next < from {
            self.next = self.next.saturating_add(1).saturating_add(geo.sample(self.rng));
        }
        if self.next >= to {
            return None;
        }
        let at = self.next;
        self.next = at.saturating_add(1).saturating_add(geo.sample(self.rng));
        Some((at, self.rng.random_range(1..=15)))
    }
}

/// Replays a fixed fault list; random vectors come from a seeded generator.
pub struct ScriptedDriver {
    faults: std::collections::VecDeque<(u64, u8)>,
    rng: ChaCha8Rng,
}

impl ScriptedDriver {
    pub fn new(mut faults: Vec<(u64, u8)>, seed: u64) -> Self {
        faults.sort_by_key(|f| f.0);
        Self { faults: faults.into(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl PrepDriver for ScriptedDriver {
    fn random_bits(&mut self, len: usize) -> BitVector {
        BitVector::random(len, &mut self.rng)
    }

    fn next_fault(&mut self, from: u64, to: u64) -> Option<(u64, u8)> {
        while self.faults.front().is_some_and(|f| f.0 < from) {
            self.faults.pop_front();
        }
        match self.faults.front() {
            Some(&f) if f.0 < to => self.faults.pop_front(),
            _ => None,
        }
    }
}

/// Observed outcomes of one level, one vector per merged block, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelTrace {
    /// 1-based level; blocks at this level have size `2^level`.
    pub level: u32,
    pub zz: bool,
    pub outcomes: Vec<BitVector>,
    /// Frozen reference the syndrome compares against: `u1 ^ u2` on Z⊗Z
    /// levels, `v1 ^ v2` on X⊗X levels.
    pub references: Vec<BitVector>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PrepTrace {
    pub skipped: u32,
    pub faults: Vec<(u64, u8)>,
    pub levels: Vec<LevelTrace>,
}

/// Component index layout: `0..N` are the data initializations; each
/// performed level then takes `2N` indices, block by block, pair by pair,
/// four per pair (ancilla init, CNOT on the first-half qubit, CNOT on the
/// second-half qubit, ancilla measurement).
pub fn component_index(len: usize, level_ordinal: usize, block: usize, half: usize, pair: usize, comp: usize) -> u64 {
    (len + level_ordinal * 2 * len + (block * half + pair) * 4 + comp) as u64
}

/// Blocks of at most this many qubits keep their frozen vectors in one word.
const WORD_BLOCK: usize = 64;

pub fn prepare(
    code: &Q1Code,
    target: Target,
    cfg: PrepConfig,
    driver: &mut dyn PrepDriver,
    trace: Option<&mut PrepTrace>,
) -> Result<PrepOutcome, Error> {
    prepare_with_word_limit(code, target, cfg, driver, trace, WORD_BLOCK)
}

/// Block state is the concatenation `y = (u, v)` of the frozen vectors, with
/// the split point given by the replayed schedule.
enum Blocks {
    Words(Vec<u64>),
    Vectors(Vec<BitVector>),
}

fn prepare_with_word_limit(
    code: &Q1Code,
    target: Target,
    cfg: PrepConfig,
    driver: &mut dyn PrepDriver,
    mut trace: Option<&mut PrepTrace>,
    word_limit: usize,
) -> Result<PrepOutcome, Error> {
    let len = code.len();
    let n = code.n as usize;
    let i_final = target.final_position(code)?;
    let bits = prep_bits(code.n, i_final);
    let schedule = replay_schedule(&bits);
    let skipped = if cfg.skip_leading_zz { bits.iter().take_while(|&&b| b).count() } else { 0 };
    let component_count = len + (n - skipped) * 2 * len;
    let mut frame = PauliFrame::zeros(len);
    let mut rep = cfg.track_canonical.then(|| PauliFrame::zeros(len));
    let mut faults = 0u32;
    if let Some(t) = trace.as_deref_mut() {
        t.skipped = skipped as u32;
    }

    while let Some((c, f)) = driver.next_fault(0, len as u64) {
        frame.x.flip(c as usize);
        if let Some(r) = rep.as_mut() {
            r.x.flip(c as usize);
        }
        faults += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.faults.push((c, f));
        }
    }

    let rejected = |faults| PrepOutcome {
        accepted: false,
        state: None,
        fault_count: faults,
        component_count,
        levels_skipped: skipped as u32,
    };

    let start_size = 1usize << skipped;
    let mut blocks = if start_size <= word_limit {
        Blocks::Words(vec![0; len >> skipped])
    } else {
        Blocks::Vectors(vec![BitVector::zeros(start_size); len >> skipped])
    };
    let mut pair_faults: Vec<(usize, [u8; 4])> = Vec::new();
    for (ordinal, k) in (skipped + 1..=n).enumerate() {
        let size = 1usize << k;
        let h = size / 2;
        let zz = bits[k - 1];
        let ip = schedule[k - 1];
        if size > word_limit {
            if let Blocks::Words(ws) = &blocks {
                blocks = Blocks::Vectors(ws.iter().map(|&y| BitVector::from_u64(y, h)).collect());
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.levels.push(LevelTrace { level: k as u32, zz, outcomes: Vec::new(), references: Vec::new() });
        }
        let mut e = BitVector::zeros(h);
        let mut c1 = BitVector::zeros(h);
        let (mut er, mut scratch) = if rep.is_some() { (e.clone(), e.clone()) } else { Default::default() };
        for b in 0..len / size {
            let (s1, s2) = (b * size, b * size + h);
            let start = component_index(len, ordinal, b, h, 0, 0);
            pair_faults.clear();
            while let Some((c, f)) = driver.next_fault(start, start + 4 * h as u64) {
                faults += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.faults.push((c, f));
                }
                let off = (c - start) as usize;
                let (pair, comp) = (off / 4, off % 4);
                match pair_faults.last_mut() {
                    Some(last) if last.0 == pair => last.1[comp] = f,
                    _ => {
                        let mut fs = [0u8; 4];
                        fs[comp] = f;
                        pair_faults.push((pair, fs));
                    }
                }
            }
            run_pairs(&mut frame, zz, s1, s2, &pair_faults, &mut e, &mut c1);
            if let Some(r) = rep.as_mut() {
                run_pairs(r, zz, s1, s2, &pair_faults, &mut er, &mut scratch);
            }

            let (observed, reference, merged) = match &blocks {
                Blocks::Words(ws) => {
                    let e = e.get_bits(0, h);
                    let (m, r, y) = merge_words(zz, ws[2 * b], ws[2 * b + 1], ip, h, e, driver);
                    let lift = |w: u64, l: usize| trace.is_some().then(|| BitVector::from_u64(w, l));
                    (lift(m, h), lift(r, if zz { ip } else { h - ip }), y.map(Merged::Word))
                }
                Blocks::Vectors(vs) => {
                    let (m, r, y) = merge_vectors(zz, &vs[2 * b], &vs[2 * b + 1], ip, h, &e, driver);
                    (Some(m), Some(r), y.map(Merged::Vector))
                }
            };
            if let Some(t) = trace.as_deref_mut() {
                let lt = t.levels.last_mut().unwrap();
                lt.outcomes.push(observed.unwrap());
                lt.references.push(reference.unwrap());
            }
            let Some(merged) = merged else {
                return Ok(rejected(faults));
            };
            // Merged blocks are written back in place: block `b` only reads
            // indices `2b` and `2b + 1`, which are never below `b`.
            match (&mut blocks, merged) {
                (Blocks::Words(ws), Merged::Word(y)) => ws[b] = y,
                (Blocks::Vectors(vs), Merged::Vector(y)) => vs[b] = y,
                _ => unreachable!(),
            }

            if zz {
                frame.x.xor_slice(s1, &e);
            } else {
                frame.z.xor_slice(s2, &e);
            }
            if let Some(r) = rep.as_mut() {
                if zz {
                    fold_lighter(&mut r.x, s1, s2, h, &er, true);
                    r.z.xor_slice(s1, &c1);
                    r.z.xor_slice(s2, &c1);
                } else {
                    fold_lighter(&mut r.z, s1, s2, h, &er, false);
                    r.x.xor_slice(s1, &c1);
                    r.x.xor_slice(s2, &c1);
                }
            }
        }
        match &mut blocks {
            Blocks::Words(ws) => ws.truncate(len / size),
            Blocks::Vectors(vs) => vs.truncate(len / size),
        }
    }

    let y = match blocks {
        Blocks::Words(ws) => BitVector::from_u64(ws[0], len),
        Blocks::Vectors(mut vs) => vs.swap_remove(0),
    };
    Ok(PrepOutcome {
        accepted: true,
        state: Some(PreparedState {
            u: y.slice(0, i_final),
            v: y.slice(i_final, len - i_final),
            frame,
            canonical: rep,
        }),
        fault_count: faults,
        component_count,
        levels_skipped: skipped as u32,
    })
}

enum Merged {
    Word(u64),
    Vector(BitVector),
}

#[inline]
fn shl(w: u64, s: usize) -> u64 {
    if s >= 64 {
        0
    } else {
        w << s
    }
}

/// Returns `(observed, reference, merged)`; `merged` is `None` on rejection.
fn merge_words(
    zz: bool,
    y1: u64,
    y2: u64,
    ip: usize,
    h: usize,
    e: u64,
    driver: &mut dyn PrepDriver,
) -> (u64, u64, Option<u64>) {
    let d = y1 ^ y2;
    let up = d & mask(ip);
    let vp = (d >> ip) & mask(h - ip);
    if zz {
        let x = driver.random_word(h - ip);
        let m = polar_word(up | shl(x, ip), h) ^ e;
        let pm = polar_word(m, h);
        let ok = pm & mask(ip) == up;
        let y = pm | shl(y2 & mask(ip), h) | shl(vp, h + ip);
        (m, up, ok.then_some(y))
    } else {
        let z = driver.random_word(ip);
        let m = polar_transpose_word(z | shl(vp, ip), h) ^ e;
        let pm = polar_transpose_word(m, h);
        let ok = (pm >> ip) & mask(h - ip) == vp;
        let v1 = (y1 >> ip) & mask(h - ip);
        let y = up | shl(v1, ip) | shl(pm, h);
        (m, vp, ok.then_some(y))
    }
}

fn merge_vectors(
    zz: bool,
    y1: &BitVector,
    y2: &BitVector,
    ip: usize,
    h: usize,
    e: &BitVector,
    driver: &mut dyn PrepDriver,
) -> (BitVector, BitVector, Option<BitVector>) {
    let d = y1.xor(y2);
    let up = d.slice(0, ip);
    let vp = d.slice(ip, h - ip);
    if zz {
        let x = driver.random_bits(h - ip);
        let mut m = BitVector::concat(&[&up, &x]);
        m.polar_in_place();
        m.xor_assign(e);
        let mut pm = m.clone();
        pm.polar_in_place();
        let ok = pm.slice(0, ip) == up;
        let y = ok.then(|| BitVector::concat(&[&pm, &y2.slice(0, ip), &vp]));
        (m, up, y)
    } else {
        let z = driver.random_bits(ip);
        let mut m = BitVector::concat(&[&z, &vp]);
        m.polar_transpose_in_place();
        m.xor_assign(e);
        let mut pm = m.clone();
        pm.polar_transpose_in_place();
        let ok = pm.slice(ip, h - ip) == vp;
        let y = ok.then(|| BitVector::concat(&[&up, &y1.slice(ip, h - ip), &pm]));
        (m, vp, y)
    }
}

/// Adds `e` to the first half (`first`) or the second half, whichever leaves
/// the block lighter; ties go to the half the physical frame uses.
fn fold_lighter(f: &mut BitVector, s1: usize, s2: usize, h: usize, e: &BitVector, first: bool) {
    let a = f.slice(s1, h);
    let b = f.slice(s2, h);
    let w_first = a.xor(e).weight() + b.weight();
    let w_second = a.weight() + b.xor(e).weight();
    let use_first = if first { w_first <= w_second } else { w_first < w_second };
    f.xor_slice(if use_first { s1 } else { s2 }, e);
}

/// Propagates the frame through one layer of pair measurements.
///
/// Writes the outcome flips to `e` and, per pair, the ancilla error left by
/// the first CNOT's fault to `c1` (Z for Z⊗Z layers, X for X⊗X layers),
/// which the second CNOT copies onto the second-half qubit.
fn run_pairs(
    frame: &mut PauliFrame,
    zz: bool,
    s1: usize,
    s2: usize,
    pair_faults: &[(usize, [u8; 4])],
    e: &mut BitVector,
    c1: &mut BitVector,
) {
    let src = if zz { &frame.x } else { &frame.z };
    e.clear();
    e.xor_from(src, s1);
    e.xor_from(src, s2);
    c1.clear();
    for &(j, f) in pair_faults {
        let (flip, first) = if zz {
            pair_zz(frame, s1 + j, s2 + j, f)
        } else {
            pair_xx(frame, s1 + j, s2 + j, f)
        };
        e.set(j, flip);
        c1.set(j, first);
    }
}

#[inline]
fn apply_fault(f: u8, cx: &mut bool, cz: &mut bool, tx: &mut bool, tz: &mut bool) {
    *cx ^= f & 1 != 0;
    *cz ^= f & 2 != 0;
    *tx ^= f & 4 != 0;
    *tz ^= f & 8 != 0;
}

/// Ancilla in `|0>`, CNOTs data -> ancilla, Z measurement.
fn pair_zz(frame: &mut PauliFrame, j1: usize, j2: usize, f: [u8; 4]) -> (bool, bool) {
    let (mut ax, mut az) = (f[0] != 0, false);
    let mut first = false;
    for (step, j) in [(1, j1), (2, j2)] {
        let (mut dx, mut dz) = (frame.x.get(j), frame.z.get(j));
        ax ^= dx;
        dz ^= az;
        if f[step] != 0 {
            apply_fault(f[step], &mut dx, &mut dz, &mut ax, &mut az);
        }
        frame.x.set(j, dx);
        frame.z.set(j, dz);
        if step == 1 {
            first = az;
        }
    }
    ax ^= f[3] != 0;
    (ax, first)
}

/// Ancilla in `|+>`, CNOTs ancilla -> data, X measurement.
fn pair_xx(frame: &mut PauliFrame, j1: usize, j2: usize, f: [u8; 4]) -> (bool, bool) {
    let (mut ax, mut az) = (false, f[0] != 0);
    let mut first = false;
    for (step, j) in [(1, j1), (2, j2)] {
        let (mut dx, mut dz) = (frame.x.get(j), frame.z.get(j));
        dx ^= ax;
        az ^= dz;
        if f[step] != 0 {
            apply_fault(f[step], &mut ax, &mut az, &mut dx, &mut dz);
        }
        frame.x.set(j, dx);
        frame.z.set(j, dz);
        if step == 1 {
            first = ax;
        }
    }
    az ^= f[3] != 0;
    (az, first)
}

pub fn prepare_noiseless(code: &Q1Code, target: Target, seed: u64) -> Result<PrepOutcome, Error> {
    prepare_noisy(code, target, NoiseModel { p: 0.0 }, seed, PrepConfig::default())
}

pub fn prepare_noisy(
    code: &Q1Code,
    target: Target,
    noise: NoiseModel,
    seed: u64,
    cfg: PrepConfig,
) -> Result<PrepOutcome, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    prepare(code, target, cfg, &mut RngDriver::new(&mut rng, noise.p), None)
}

/// Repeats attempts until one is accepted; returns it with the attempt count.
/// Gives up with [`Error::ResourceBound`] after `max_attempts` rejections.
pub fn prepare_until_accept<R: Rng>(
    code: &Q1Code,
    target: Target,
    noise: NoiseModel,
    cfg: PrepConfig,
    max_attempts: u64,
    rng: &mut R,
) -> Result<(PreparedState, u64), Error> {
    for attempts in 1..=max_attempts {
        let out = prepare(code, target, cfg, &mut RngDriver::new(rng, noise.p), None)?;
        if let Some(s) = out.state {
            return Ok((s, attempts));
        }
    }
    Err(Error::ResourceBound(format!(
        "no accepted {target:?} preparation of ({}, {}) at p = {} in {max_attempts} attempts",
        code.len(),
        code.i,
        noise.p
    )))
}

/// True when `a ^ b` is a (sign-free) stabilizer of a state with `i_final`
/// Z-frozen positions.
pub fn frames_equivalent(a: &PauliFrame, b: &PauliFrame, i_final: usize) -> bool {
    let mut dx = a.x.xor(&b.x);
    dx.polar_in_place();
    let mut dz = a.z.xor(&b.z);
    dz.polar_transpose_in_place();
    dx.ones().all(|j| j >= i_final) && dz.ones().all(|j| j < i_final)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepRate {
    pub attempts: u64,
    pub accepted: u64,
    pub p_prep: f64,
    pub ci95: (f64, f64),
    pub mean_weight_x: f64,
    pub mean_weight_z: f64,
}

/// Wilson score interval at 95%.
pub fn wilson95(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let nt = trials as f64;
    let ph = successes as f64 / nt;
    let denom = 1.0 + z * z / nt;
    let centre = (ph + z * z / (2.0 * nt)) / denom;
    let half = z * (ph * (1.0 - ph) / nt + z * z / (4.0 * nt * nt)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn estimate_prep_rate(
    code: &Q1Code,
    target: Target,
    noise: NoiseModel,
    attempts: u64,
    seed: u64,
    cfg: PrepConfig,
) -> Result<PrepRate, Error> {
    target.final_position(code)?;
    let (acc, wx, wz) = (0..attempts)
        .into_par_iter()
        .map(|a| {
            let mut rng = task_rng(seed, Stream::Prep, a);
            let out = prepare(code, target, cfg, &mut RngDriver::new(&mut rng, noise.p), None)
                .expect("validated target");
            match out.state {
                Some(s) => (1u64, s.frame.x.weight() as u64, s.frame.z.weight() as u64),
                None => (0, 0, 0),
            }
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let mean = |w: u64| if acc == 0 { 0.0 } else { w as f64 / acc as f64 };
    Ok(PrepRate {
        attempts,
        accepted: acc,
        p_prep: if attempts == 0 { 0.0 } else { acc as f64 / attempts as f64 },
        ci95: wilson95(acc, attempts),
        mean_weight_x: mean(wx),
        mean_weight_z: mean(wz),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn code(n: u32, i: usize) -> Q1Code {
        Q1Code::new(n, i).unwrap()
    }

    #[test]
    fn two_qubit_zz_is_deterministic() {
        let out = prepare_noisy(&code(1, 2), Target::LogicalZ, NoiseModel { p: 0.0 }, 1, PrepConfig { skip_leading_zz: false, ..Default::default() }).unwrap();
        let s = out.state.unwrap();
        assert_eq!(s.u.to_bits(), vec![0, 0]);
        assert!(s.v.is_empty());
        assert!(s.frame.is_zero());
    }

    #[test]
    fn noiseless_always_accepts_with_zero_frame() {
        for n in 1..=6 {
            for i in 1..=1usize << n {
                for target in [Target::LogicalZ, Target::LogicalX, Target::Generic] {
                    if target == Target::LogicalX && i == 1 {
                        continue;
                    }
                    let out = prepare_noiseless(&code(n, i), target, 11 + i as u64).unwrap();
                    assert!(out.accepted);
                    assert_eq!(out.fault_count, 0);
                    let s = out.state.unwrap();
                    assert!(s.frame.is_zero() && s.canonical.is_none());
                    let i_final = target.final_position(&code(n, i)).unwrap();
                    assert_eq!(s.u.len(), i_final);
                    assert_eq!(s.v.len(), (1 << n) - i_final);
                }
            }
        }
    }

    #[test]
    fn component_counts() {
        let c = code(4, 7);
        let cfg = PrepConfig { skip_leading_zz: false, ..Default::default() };
        let out = prepare_noisy(&c, Target::LogicalZ, NoiseModel { p: 0.0 }, 0, cfg).unwrap();
        assert_eq!(out.component_count, 16 * (1 + 2 * 4));
        // i(n) - 1 = 5 = 0101: one leading Z⊗Z level.
        let out = prepare_noisy(&c, Target::LogicalX, NoiseModel { p: 0.0 }, 0, PrepConfig::default()).unwrap();
        assert_eq!(out.levels_skipped, 1);
        assert_eq!(out.component_count, 16 + 3 * 32);
    }

    #[test]
    fn skippable_levels() {
        assert_eq!(leading_zz_levels_skippable(&code(6, 8), Target::LogicalZ).unwrap(), 3);
        assert_eq!(leading_zz_levels_skippable(&code(4, 4), Target::LogicalZ).unwrap(), 2);
        assert_eq!(leading_zz_levels_skippable(&code(5, 1), Target::LogicalZ).unwrap(), 0);
        assert_eq!(leading_zz_levels_skippable(&code(4, 7), Target::LogicalZ).unwrap(), 0);
        assert!(leading_zz_levels_skippable(&code(4, 1), Target::LogicalX).is_err());
    }

    #[test]
    fn skipping_does_not_change_noiseless_output_law() {
        // With no faults the skipped levels are deterministic, so both runs
        // consume the same random vectors in the same order.
        for i in [4usize, 8, 12, 16] {
            let c = code(4, i);
            let a = prepare_noisy(&c, Target::LogicalZ, NoiseModel { p: 0.0 }, 5, PrepConfig { skip_leading_zz: true, ..Default::default() }).unwrap();
            let b = prepare_noisy(&c, Target::LogicalZ, NoiseModel { p: 0.0 }, 5, PrepConfig { skip_leading_zz: false, ..Default::default() }).unwrap();
            assert_eq!(a.state.unwrap().u, b.state.unwrap().u);
        }
    }

    #[test]
    fn single_measurement_fault_is_detected_at_z_level() {
        // n = 1, i = 2: one Z⊗Z pair; an ancilla measurement fault flips the
        // outcome of a deterministic measurement.
        let c = code(1, 2);
        let meas = component_index(2, 0, 0, 1, 0, 3);
        let out = prepare(&c, Target::LogicalZ, PrepConfig { skip_leading_zz: false, ..Default::default() }, &mut ScriptedDriver::new(vec![(meas, 1)], 0), None).unwrap();
        assert!(!out.accepted);
    }

    #[test]
    fn rate_is_one_at_zero_noise() {
        let r = estimate_prep_rate(&code(4, 7), Target::LogicalZ, NoiseModel { p: 0.0 }, 500, 1, PrepConfig::default()).unwrap();
        assert_eq!(r.p_prep, 1.0);
        assert_eq!(r.accepted, 500);
        assert_eq!((r.mean_weight_x, r.mean_weight_z), (0.0, 0.0));
    }

    #[test]
    fn rate_is_reproducible() {
        let c = code(4, 7);
        let a = estimate_prep_rate(&c, Target::LogicalZ, NoiseModel { p: 0.01 }, 2000, 9, PrepConfig::default()).unwrap();
        let b = estimate_prep_rate(&c, Target::LogicalZ, NoiseModel { p: 0.01 }, 2000, 9, PrepConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson95(88, 100);
        assert!(lo < 0.88 && 0.88 < hi);
        assert_eq!(wilson95(0, 0), (0.0, 1.0));
        let (lo, hi) = wilson95(100, 100);
        assert!(lo > 0.95 && hi == 1.0);
    }

    #[test]
    fn mean_weight_below_component_bound() {
        for (n, i, p) in [(4u32, 7usize, 1e-2), (6, 23, 3e-3), (5, 8, 2e-2)] {
            let c = code(n, i);
            let r = estimate_prep_rate(&c, Target::LogicalZ, NoiseModel { p }, 4000, 3, PrepConfig::default()).unwrap();
            let bound = (c.len() * (1 + 2 * n as usize)) as f64 * p;
            assert!(r.mean_weight_x < bound && r.mean_weight_z < bound, "{r:?} vs {bound}");
        }
    }

    #[test]
    fn word_and_vector_paths_agree() {
        let mut seeds = ChaCha8Rng::seed_from_u64(17);
        for (n, i) in [(3u32, 4usize), (5, 8), (6, 23), (7, 40), (7, 97)] {
            let c = code(n, i);
            for target in [Target::LogicalZ, Target::LogicalX, Target::Generic] {
                for _ in 0..30 {
                    let seed = seeds.random::<u64>();
                    let cfg = PrepConfig { track_canonical: true, ..Default::default() };
                    let run = |limit| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let mut trace = PrepTrace::default();
                        let mut d = RngDriver::new(&mut rng, 0.01);
                        let out = prepare_with_word_limit(&c, target, cfg, &mut d, Some(&mut trace), limit).unwrap();
                        (out, trace)
                    };
                    let a = run(WORD_BLOCK);
                    assert_eq!(a, run(1));
                    assert_eq!(a, run(8));
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn canonical_frame_is_bounded_and_equivalent(n in 1u32..=6, seed in any::<u64>(), pick in any::<usize>(), x_target in any::<bool>()) {
            let c = code(n, 2 + pick % ((1 << n) - 1));
            let target = if x_target { Target::LogicalX } else { Target::LogicalZ };
            let i_final = target.final_position(&c).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                let cfg = PrepConfig { track_canonical: true, ..Default::default() };
                let out = prepare(&c, target, cfg, &mut RngDriver::new(&mut rng, 0.03), None).unwrap();
                if let Some(s) = out.state {
                    let canonical = s.canonical.unwrap();
                    prop_assert!(canonical.x.weight() as u32 <= out.fault_count);
                    prop_assert!(canonical.z.weight() as u32 <= out.fault_count);
                    prop_assert!(frames_equivalent(&s.frame, &canonical, i_final));
                }
            }
        }

        #[test]
        fn accepted_outcomes_have_zero_syndrome(n in 1u32..=5, seed in any::<u64>()) {
            let c = code(n, 1 + (seed as usize) % (1 << n));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut trace = PrepTrace::default();
            let out = prepare(&c, Target::Generic, PrepConfig::default(), &mut RngDriver::new(&mut rng, 0.02), Some(&mut trace)).unwrap();
            if out.accepted {
                let schedule = crate::code::replay_schedule(&prep_bits(n, c.i));
                for lt in &trace.levels {
                    let ip = schedule[lt.level as usize - 1];
                    let h = 1usize << (lt.level - 1);
                    for (m, r) in lt.outcomes.iter().zip(&lt.references) {
                        if lt.zz {
                            prop_assert_eq!(&m.polar_transform().unwrap().slice(0, ip), r);
                        } else {
                            prop_assert_eq!(&m.polar_transform_transpose().unwrap().slice(ip, h - ip), r);
                        }
                    }
                }
            }
        }
    }
}
