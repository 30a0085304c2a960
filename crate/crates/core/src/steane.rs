//! Steane error correction of Q1 codes: Monte Carlo trials and the
//! density-evolution estimate of the logical error rate.
//!
//! An X-correction trial protects a logical-Z data state with a logical-X
//! ancilla: transversal CNOT data -> ancilla, Z readout of the ancilla, SC
//! decoding of the information bit, correction of the data, and a final Z
//! readout of the data. The Z-correction trial is its mirror image in the
//! `P^T` orientation. Only the Pauli component the trial corrects is tracked.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::BscMixture;
use crate::code::Q1Code;
use crate::gf2::BitVector;
use crate::prep::{prepare_until_accept, wilson95, NoiseModel, PrepConfig, Target};
use crate::reliability::DeMethod;
use crate::rng::{task_rng, Stream};
use crate::sc::ScDecoder;
use crate::Error;

/// Preparation attempts allowed per state before a trial gives up.
pub const DEFAULT_MAX_PREP_ATTEMPTS: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EcBasis {
    XCorrection,
    ZCorrection,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EcTrialRecord {
    pub basis: EcBasis,
    /// The syndrome decode recovered the ancilla's information bit.
    pub decode1_success: bool,
    /// The readout decode recovered the logical value the data carried after
    /// correction.
    pub decode2_success: bool,
    pub logical_error: bool,
    /// Data frozen vector of the basis the round rewrites: `v ^ v'` after an
    /// X-correction round, `u ^ u'` after a Z-correction round.
    pub frozen_after: BitVector,
    /// Known logical twist picked up from the ancilla.
    pub twist: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LerMethod {
    Mc,
    De,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LerEstimate {
    pub method: LerMethod,
    pub p: f64,
    pub p_x_l: f64,
    pub p_z_l: f64,
    pub p_e_l: f64,
    /// MC: trials run per side. DE: accepted preparations per target.
    pub trials_x: u64,
    pub trials_z: u64,
    pub failures_x: u64,
    pub failures_z: u64,
    pub failures_target: u64,
    /// A side hit `max_trials` first; its rate is then the upper edge of its
    /// 95% interval.
    pub censored: bool,
    pub ci_x: (f64, f64),
    pub ci_z: (f64, f64),
}

/// `a + b - ab`.
pub fn combine(a: f64, b: f64) -> f64 {
    a + b - a * b
}

/// Code orientation of one trial: `P` for X correction, `P^T` for Z
/// correction. Frozen bits sit before the information position under `P`
/// and after it under `P^T`.
#[derive(Clone, Copy)]
enum Side {
    Standard,
    Transposed,
}

impl Side {
    fn encode(self, frozen: &BitVector, info: bool, free: &BitVector) -> BitVector {
        let bit = BitVector::from_bits(&[info as u8]);
        let mut y = match self {
            Side::Standard => BitVector::concat(&[frozen, &bit, free]),
            Side::Transposed => BitVector::concat(&[free, &bit, frozen]),
        };
        match self {
            Side::Standard => y.polar_in_place(),
            Side::Transposed => y.polar_transpose_in_place(),
        }
        y
    }

    /// SC estimate of the information bit. The transposed case runs the
    /// standard decoder on index-reversed data.
    fn decode_info(self, dec: &mut ScDecoder, word: &BitVector, frozen: &BitVector) -> bool {
        let len = word.len();
        let llr: Vec<f64> = match self {
            Side::Standard => (0..len).map(|j| if word.get(j) { -1.0 } else { 1.0 }).collect(),
            Side::Transposed => (0..len).rev().map(|j| if word.get(j) { -1.0 } else { 1.0 }).collect(),
        };
        let mut fz = vec![None; len];
        for k in 0..frozen.len() {
            let at = match self {
                Side::Standard => k,
                Side::Transposed => frozen.len() - 1 - k,
            };
            fz[at] = Some(frozen.get(k));
        }
        let mut u = vec![0u8; len];
        dec.decode(&llr, &fz, &mut u);
        u[frozen.len()] == 1
    }
}

/// Flips each position independently with probability `p`.
fn bernoulli_flips<R: Rng + ?Sized>(v: &mut BitVector, p: f64, rng: &mut R) {
    if p <= 0.0 {
        return;
    }
    for j in 0..v.len() {
        if rng.random_bool(p) {
            v.flip(j);
        }
    }
}

/// Outcome of one round.
struct Round {
    decode1_success: bool,
    decode2_success: bool,
    logical_error: bool,
}

/// Syndrome extraction, correction and readout in one orientation.
///
/// `e_data` and `e_anc` are the relevant error components of the prepared
/// states; `frozen1` is the combined frozen vector of the syndrome codeword
/// and `frozen2` the data's own frozen vector for the final readout.
/// `data_bit` and `anc_bit` pick the CNOT fault bits landing on data and
/// ancilla for this component.
#[allow(clippy::too_many_arguments)]
fn steane_round<R: Rng + ?Sized>(
    side: Side,
    n: u32,
    w: bool,
    frozen1: &BitVector,
    frozen2: &BitVector,
    mut e_data: BitVector,
    e_anc: &BitVector,
    data_bit: u8,
    anc_bit: u8,
    p: f64,
    rng: &mut R,
) -> Round {
    let len = 1usize << n;
    let free_len = len - frozen1.len() - 1;
    let a: bool = rng.random();
    let free = BitVector::random(free_len, rng);
    let mut m = side.encode(frozen1, a, &free);
    m.xor_assign(&e_data);
    m.xor_assign(e_anc);
    if p > 0.0 {
        for q in 0..len {
            if rng.random_bool(p) {
                let f: u8 = rng.random_range(1..=15);
                if f & data_bit != 0 {
                    e_data.flip(q);
                }
                if f & anc_bit != 0 {
                    m.flip(q);
                }
            }
        }
    }
    bernoulli_flips(&mut m, p, rng);

    let mut dec = ScDecoder::new(n);
    let a_hat = side.decode_info(&mut dec, &m, frozen1);
    let mut e_hat = side.encode(frozen1, a_hat, &BitVector::zeros(free_len));
    e_hat.xor_assign(&m);
    e_data.xor_assign(&e_hat);

    let free = BitVector::random(len - frozen2.len() - 1, rng);
    let mut r = side.encode(frozen2, w, &free);
    r.xor_assign(&e_data);
    bernoulli_flips(&mut r, p, rng);
    let w_hat = side.decode_info(&mut dec, &r, frozen2);

    let carried = w ^ a ^ a_hat;
    Round { decode1_success: a == a_hat, decode2_success: w_hat == carried, logical_error: w_hat != w }
}

/// One X-correction trial.
pub fn mc_x_trial<R: Rng>(
    code: &Q1Code,
    noise: NoiseModel,
    cfg: PrepConfig,
    max_prep_attempts: u64,
    rng: &mut R,
) -> Result<EcTrialRecord, Error> {
    let i = code.i;
    let (data, _) = prepare_until_accept(code, Target::LogicalZ, noise, cfg, max_prep_attempts, rng)?;
    let (anc, _) = prepare_until_accept(code, Target::LogicalX, noise, cfg, max_prep_attempts, rng)?;
    let w = data.logical_value(Target::LogicalZ);
    let u_data = data.u.slice(0, i - 1);
    let frozen1 = u_data.xor(&anc.u);
    // CNOT data -> ancilla: X on the control is bit 0, X on the target bit 2.
    let round = steane_round(Side::Standard, code.n, w, &frozen1, &u_data, data.frame.x, &anc.frame.x, 1, 4, noise.p, rng);
    let v_tail = anc.v.slice(1, anc.v.len() - 1);
    Ok(EcTrialRecord {
        basis: EcBasis::XCorrection,
        decode1_success: round.decode1_success,
        decode2_success: round.decode2_success,
        logical_error: round.logical_error,
        frozen_after: data.v.xor(&v_tail),
        twist: anc.logical_value(Target::LogicalX),
    })
}

/// One Z-correction trial.
pub fn mc_z_trial<R: Rng>(
    code: &Q1Code,
    noise: NoiseModel,
    cfg: PrepConfig,
    max_prep_attempts: u64,
    rng: &mut R,
) -> Result<EcTrialRecord, Error> {
    let i = code.i;
    let (data, _) = prepare_until_accept(code, Target::LogicalX, noise, cfg, max_prep_attempts, rng)?;
    let (anc, _) = prepare_until_accept(code, Target::LogicalZ, noise, cfg, max_prep_attempts, rng)?;
    let w = data.logical_value(Target::LogicalX);
    let v_data = data.v.slice(1, data.v.len() - 1);
    let frozen1 = v_data.xor(&anc.v);
    // CNOT ancilla -> data: Z on the control is bit 1, Z on the target bit 3.
    let round = steane_round(Side::Transposed, code.n, w, &frozen1, &v_data, data.frame.z, &anc.frame.z, 8, 2, noise.p, rng);
    Ok(EcTrialRecord {
        basis: EcBasis::ZCorrection,
        decode1_success: round.decode1_success,
        decode2_success: round.decode2_success,
        logical_error: round.logical_error,
        frozen_after: data.u.xor(&anc.u.slice(0, i - 1)),
        twist: anc.logical_value(Target::LogicalZ),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SideCount {
    trials: u64,
    failures: u64,
    censored: bool,
}

/// Runs trials `0, 1, ...` until `f` failures or `max_trials`. Trials go in
/// parallel chunks but are counted in index order, so the stopping point only
/// depends on the seed.
fn run_until_failures<F>(f: u64, max_trials: u64, trial: F) -> Result<SideCount, Error>
where
    F: Fn(u64) -> Result<bool, Error> + Sync,
{
    let mut done = 0u64;
    let mut failures = 0u64;
    let mut chunk = 64u64;
    while done < max_trials {
        let hi = (done + chunk).min(max_trials);
        let results: Vec<bool> = (done..hi).into_par_iter().map(&trial).collect::<Result<_, _>>()?;
        for r in results {
            done += 1;
            if r {
                failures += 1;
                if failures == f {
                    return Ok(SideCount { trials: done, failures, censored: false });
                }
            }
        }
        chunk = (chunk * 2).min(8192);
    }
    Ok(SideCount { trials: done, failures, censored: true })
}

fn side_rate(c: SideCount) -> (f64, (f64, f64)) {
    let ci = wilson95(c.failures, c.trials);
    if c.censored {
        (ci.1, ci)
    } else {
        (c.failures as f64 / c.trials as f64, ci)
    }
}

pub fn estimate_ler_mc(
    code: &Q1Code,
    noise: NoiseModel,
    f: u64,
    max_trials: u64,
    seed: u64,
    cfg: PrepConfig,
) -> Result<LerEstimate, Error> {
    if f == 0 {
        return Err(Error::InvalidInput("failure target must be at least 1".into()));
    }
    Target::LogicalX.final_position(code)?;
    let limit = DEFAULT_MAX_PREP_ATTEMPTS;
    let x = run_until_failures(f, max_trials, |t| {
        mc_x_trial(code, noise, cfg, limit, &mut task_rng(seed, Stream::EcX, t)).map(|r| r.logical_error)
    })?;
    let z = run_until_failures(f, max_trials, |t| {
        mc_z_trial(code, noise, cfg, limit, &mut task_rng(seed, Stream::EcZ, t)).map(|r| r.logical_error)
    })?;
    let (px, ci_x) = side_rate(x);
    let (pz, ci_z) = side_rate(z);
    Ok(LerEstimate {
        method: LerMethod::Mc,
        p: noise.p,
        p_x_l: px,
        p_z_l: pz,
        p_e_l: combine(px, pz),
        trials_x: x.trials,
        trials_z: z.trials,
        failures_x: x.failures,
        failures_z: z.failures,
        failures_target: f,
        censored: x.censored || z.censored,
        ci_x,
        ci_z,
    })
}

/// Mean per-qubit X and Z error rates over `runs` accepted preparations,
/// counted on the canonical frame when `cfg` tracks it.
pub fn prep_error_rates(
    code: &Q1Code,
    target: Target,
    noise: NoiseModel,
    runs: u64,
    seed: u64,
    cfg: PrepConfig,
) -> Result<(f64, f64), Error> {
    let stream = match target {
        Target::LogicalX => Stream::PrepStatsX,
        _ => Stream::PrepStatsZ,
    };
    let (wx, wz) = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(seed, stream, r);
            let (s, _) = prepare_until_accept(code, target, noise, cfg, DEFAULT_MAX_PREP_ATTEMPTS, &mut rng)?;
            let f = s.canonical.as_ref().unwrap_or(&s.frame);
            Ok((f.x.weight() as u64, f.z.weight() as u64))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    let total = (runs * code.len() as u64) as f64;
    Ok((wx as f64 / total, wz as f64 / total))
}

/// Decoder input crossover probabilities `(in1, in2)` from the data and
/// ancilla preparation error rates.
pub fn decoder_inputs(p_data: f64, p_anc: f64, p: f64) -> (f64, f64) {
    let cnot = 1.0 - 8.0 * p / 15.0;
    let in1 = 1.0 - (1.0 - p_data) * (1.0 - p_anc) * cnot * (1.0 - p);
    let in2 = 1.0 - (1.0 - p_anc) * cnot * (1.0 - p) * (1.0 - p);
    (in1, in2)
}

/// Logical error of one side when exactly one of the two decodes fails.
pub fn side_from_decoders(out1: f64, out2: f64) -> f64 {
    out1 + out2 - 2.0 * out1 * out2
}

/// `runs` defaults to `ceil(100 / p)` accepted preparations per target.
pub fn estimate_ler_de(
    code: &Q1Code,
    noise: NoiseModel,
    runs: Option<u64>,
    method: DeMethod,
    seed: u64,
    cfg: PrepConfig,
) -> Result<LerEstimate, Error> {
    Target::LogicalX.final_position(code)?;
    let p = noise.p;
    let runs = match runs {
        Some(r) => r,
        None if p > 0.0 => (100.0 / p).ceil() as u64,
        None => 0,
    };
    // Weights of the low-weight equivalent frame: the physical frame also
    // counts stabilizer components, which no decoder sees as errors.
    let cfg = PrepConfig { track_canonical: true, ..cfg };
    let (zx, zz, xx, xz) = if p > 0.0 && runs > 0 {
        let (zx, zz) = prep_error_rates(code, Target::LogicalZ, noise, runs, seed, cfg)?;
        let (xx, xz) = prep_error_rates(code, Target::LogicalX, noise, runs, seed, cfg)?;
        (zx, zz, xx, xz)
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };
    let len = code.len();
    let out = |data: f64, anc: f64, at: usize| -> f64 {
        let (in1, in2) = decoder_inputs(data, anc, p);
        let o1 = method.run(code.n, &BscMixture::single(in1))[at];
        let o2 = method.run(code.n, &BscMixture::single(in2))[at];
        side_from_decoders(o1, o2)
    };
    // X side: logical-Z data, logical-X ancilla. Z side: the reverse, read
    // through the index reversal.
    let px = out(zx, xx, code.i - 1);
    let pz = out(xz, zz, len - code.i);
    Ok(LerEstimate {
        method: LerMethod::De,
        p,
        p_x_l: px,
        p_z_l: pz,
        p_e_l: combine(px, pz),
        trials_x: runs,
        trials_z: runs,
        failures_x: 0,
        failures_z: 0,
        failures_target: 0,
        censored: false,
        ci_x: (px, px),
        ci_z: (pz, pz),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pseudothreshold {
    pub p_th: f64,
    /// No two neighbouring points straddle the diagonal; the value comes from
    /// a least-squares line through all points in log-log space.
    pub extrapolated: bool,
}

/// Crossing of `LER(p)` with `LER = p`, interpolated linearly in `(ln p,
/// ln LER)` between the first pair of points that straddle the diagonal.
/// Points must be sorted by `p`; non-positive rates are skipped.
pub fn pseudothreshold(points: &[(f64, f64)]) -> Option<Pseudothreshold> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(p, l)| *p > 0.0 && *l > 0.0).map(|(p, l)| (p.ln(), l.ln())).collect();
    for w in pts.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let (d0, d1) = (y0 - x0, y1 - x1);
        if d0 == 0.0 {
            return Some(Pseudothreshold { p_th: x0.exp(), extrapolated: false });
        }
        if d0.signum() != d1.signum() {
            let t = d0 / (d0 - d1);
            return Some(Pseudothreshold { p_th: (x0 + t * (x1 - x0)).exp(), extrapolated: false });
        }
    }
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    if (slope - 1.0).abs() < 1e-12 {
        return None;
    }
    // my + slope (x - mx) = x
    let x = (my - slope * mx) / (1.0 - slope);
    Some(Pseudothreshold { p_th: x.exp(), extrapolated: true })
}
