//! Virtual-channel error probabilities for successive-cancellation decoding.
//!
//! Two index orders appear here. In *natural* order, position `c` (0-based)
//! is the `c`-th input decoded by SC on `P_N`: the most significant bit of
//! `c` selects the first split (0 for the check-node side). The *table*
//! order is its bit reversal; it is the order used for the erasure
//! construction, see [`bec_reliabilities`].
//!
//! Min-sum density evolution runs on the integer lattice. The decoder is fed
//! unit-magnitude LLRs (`(-1)^m`, or 0 for a known-useless observation), and
//! min-sum keeps messages integral, so the message distributions are exact
//! finite vectors rather than sampled populations.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, BscMixture};
use crate::Error;

/// Exact erasure probabilities of the `N = 2^n` virtual channels, in table
/// order (index bit-reversed relative to the SC decoding order).
pub fn bec_reliabilities(n: u32, eps: f64) -> Vec<f64> {
    let nat = bec_reliabilities_natural(n, eps);
    (0..nat.len()).map(|j| nat[bit_reverse(j, n)]).collect()
}

/// Exact erasure probabilities in natural SC order.
pub fn bec_reliabilities_natural(n: u32, eps: f64) -> Vec<f64> {
    let mut z = vec![eps];
    for _ in 0..n {
        // Children of node j sit at 2j (minus) and 2j+1 (plus): the earlier
        // split ends up in the more significant bit.
        z = z.iter().flat_map(|&z| [z * (2.0 - z), z * z]).collect();
    }
    z
}

/// Natural logarithms of [`bec_reliabilities`], computed without underflow:
/// `ln z⁻ = ln z + ln(2 - z)`, `ln z⁺ = 2 ln z`.
pub fn bec_log_reliabilities(n: u32, eps: f64) -> Vec<f64> {
    let mut lz = vec![eps.ln()];
    for _ in 0..n {
        lz = lz.iter().flat_map(|&l| [l + (2.0 - l.exp()).ln(), 2.0 * l]).collect();
    }
    (0..lz.len()).map(|j| lz[bit_reverse(j, n)]).collect()
}

pub fn bit_reverse(j: usize, n: u32) -> usize {
    if n == 0 {
        0
    } else {
        j.reverse_bits() >> (usize::BITS - n)
    }
}

/// Probability distribution of an integer LLR, supported on `-m..=m`.
#[derive(Clone, Debug, PartialEq)]
pub struct LlrDist {
    /// `mass[k]` is the probability of LLR `k - m`.
    mass: Vec<f64>,
}

impl LlrDist {
    /// Input distribution for a mixture channel, conditioned on a zero bit.
    pub fn from_mixture(ch: &BscMixture) -> Self {
        let mut mass = [0.0; 3];
        for &(w, q) in &ch.components {
            if (q - 0.5).abs() < 1e-15 {
                mass[1] += w;
            } else {
                mass[0] += w * q;
                mass[2] += w * (1.0 - q);
            }
        }
        Self { mass: mass.to_vec() }
    }

    pub fn from_masses(mass: Vec<f64>) -> Self {
        assert!(mass.len() % 2 == 1);
        Self { mass }
    }

    fn half(&self) -> usize {
        self.mass.len() / 2
    }

    pub fn prob(&self, llr: i64) -> f64 {
        let k = llr + self.half() as i64;
        if k < 0 || k as usize >= self.mass.len() {
            0.0
        } else {
            self.mass[k as usize]
        }
    }

    /// `P(LLR < 0) + P(LLR = 0) / 2`.
    pub fn error_probability(&self) -> f64 {
        let m = self.half();
        self.mass[..m].iter().sum::<f64>() + 0.5 * self.mass[m]
    }

    /// Check-node update `sign(a) sign(b) min(|a|, |b|)` for independent copies.
    pub fn minus(&self) -> Self {
        let m = self.half();
        // Tail masses gp[k] = P(X >= k+1), gn[k] = P(X <= -(k+1)).
        let mut gp = vec![0.0; m + 1];
        let mut gn = vec![0.0; m + 1];
        for k in (0..m).rev() {
            gp[k] = gp[k + 1] + self.mass[m + 1 + k];
            gn[k] = gn[k + 1] + self.mass[m - 1 - k];
        }
        let mut out = vec![0.0; 2 * m + 1];
        for k in 0..m {
            let h_pos = gp[k] * gp[k] + gn[k] * gn[k];
            let h_neg = 2.0 * gp[k] * gn[k];
            let h_pos1 = gp[k + 1] * gp[k + 1] + gn[k + 1] * gn[k + 1];
            let h_neg1 = 2.0 * gp[k + 1] * gn[k + 1];
            out[m + 1 + k] = h_pos - h_pos1;
            out[m - 1 - k] = h_neg - h_neg1;
        }
        let a0 = self.mass[m];
        out[m] = a0 * (2.0 - a0);
        Self { mass: out }.trimmed()
    }

    /// Variable-node update `a + b` for independent copies.
    pub fn plus(&self) -> Self {
        let l = self.mass.len();
        let mut out = vec![0.0; 2 * l - 1];
        for (i, &a) in self.mass.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in self.mass.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self { mass: out }.trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.mass.len() > 1 && self.mass[0] == 0.0 && self.mass[self.mass.len() - 1] == 0.0 {
            self.mass.pop();
            self.mass.remove(0);
        }
        self
    }
}

/// Exact min-sum SC error probability of every virtual channel, natural order.
pub fn de_min_sum(n: u32, ch: &BscMixture) -> Vec<f64> {
    let mut out = vec![0.0; 1 << n];
    fn rec(d: LlrDist, depth: u32, n: u32, idx: usize, out: &mut [f64]) {
        if depth == n {
            out[idx] = d.error_probability();
            return;
        }
        rec(d.minus(), depth + 1, n, 2 * idx, out);
        rec(d.plus(), depth + 1, n, 2 * idx + 1, out);
    }
    rec(LlrDist::from_mixture(ch), 0, n, 0, &mut out);
    out
}

/// Sampled-population min-sum density evolution, natural order.
///
/// Each tree node draws from its own ChaCha stream, so the result depends only
/// on `(seed, population)`.
pub fn de_population(n: u32, ch: &BscMixture, population: usize, seed: u64) -> Vec<f64> {
    let input = LlrDist::from_mixture(ch);
    let mut rng = node_rng(seed, 0, 0);
    let root: Vec<i32> = (0..population)
        .map(|_| {
            let u: f64 = rng.random();
            if u < input.mass[0] {
                -1
            } else if u < input.mass[0] + input.mass[1] {
                0
            } else {
                1
            }
        })
        .collect();
    let mut out = vec![0.0; 1 << n];
    pop_rec(&root, 0, n, 0, seed, &mut out);
    out
}

fn node_rng(seed: u64, depth: u32, idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((1u64 << depth) + idx as u64) << 1);
    rng
}

fn pop_rec(pop: &[i32], depth: u32, n: u32, idx: usize, seed: u64, out: &mut [f64]) {
    if depth == n {
        let (neg, zero) = pop.iter().fold((0usize, 0usize), |(a, b), &l| {
            (a + (l < 0) as usize, b + (l == 0) as usize)
        });
        out[idx] = (neg as f64 + 0.5 * zero as f64) / pop.len() as f64;
        return;
    }
    let len = pop.len();
    let (minus, plus) = rayon::join(
        || {
            let mut rng = node_rng(seed, depth + 1, 2 * idx);
            (0..len)
                .map(|_| {
                    let a = pop[rng.random_range(0..len)];
                    let b = pop[rng.random_range(0..len)];
                    a.signum() * b.signum() * a.abs().min(b.abs())
                })
                .collect::<Vec<i32>>()
        },
        || {
            let mut rng = node_rng(seed, depth + 1, 2 * idx + 1);
            (0..len)
                .map(|_| pop[rng.random_range(0..len)] + pop[rng.random_range(0..len)])
                .collect::<Vec<i32>>()
        },
    );
    pop_rec(&minus, depth + 1, n, 2 * idx, seed, out);
    pop_rec(&plus, depth + 1, n, 2 * idx + 1, seed, out);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructionMode {
    /// X-basis decoding treats the two bases independently.
    IgnoreCorr,
    /// X-basis decoding conditions on the Z-basis flip pattern.
    UseCorr,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DeMethod {
    Exact,
    Population { size: usize, seed: u64 },
}

impl DeMethod {
    pub fn run(&self, n: u32, ch: &BscMixture) -> Vec<f64> {
        match *self {
            DeMethod::Exact => de_min_sum(n, ch),
            DeMethod::Population { size, seed } => de_population(n, ch, size, seed),
        }
    }
}

/// Per-position error probabilities for the Z-basis and X-basis codes.
///
/// `pe_x[j]` is indexed so that the X-basis channel paired with information
/// position `i` is `pe_x[N - i]` (0-based), i.e. position `π(i) = N + 1 - i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityProfile {
    pub n: u32,
    pub pe_z: Vec<f64>,
    pub pe_x: Vec<f64>,
    /// Exact logarithms where available (erasure), for comparisons below the
    /// `f64` range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_pe: Option<(Vec<f64>, Vec<f64>)>,
}

impl ReliabilityProfile {
    pub fn erasure(n: u32, eps: f64) -> Result<Self, Error> {
        channel::ErasureChannel::new(eps)?;
        let z = bec_reliabilities(n, eps);
        let lz = bec_log_reliabilities(n, eps);
        Ok(Self { n, pe_z: z.clone(), pe_x: z, log_pe: Some((lz.clone(), lz)) })
    }

    pub fn depolarizing(n: u32, p: f64, mode: ConstructionMode, method: DeMethod) -> Result<Self, Error> {
        let c = channel::depolarizing(p)?;
        let zc: BscMixture = channel::induced_z_channel(&c).into();
        let xc = match mode {
            ConstructionMode::IgnoreCorr => channel::induced_x_channel(&c).into(),
            ConstructionMode::UseCorr => channel::extended_x_channel(&c),
        };
        let pe_z = method.run(n, &zc);
        let pe_x = if xc == zc { pe_z.clone() } else { method.run(n, &xc) };
        Ok(Self { n, pe_z, pe_x, log_pe: None })
    }

    pub fn len(&self) -> usize {
        self.pe_z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pe_z.is_empty()
    }

    /// CSV rows `(position_1based, pe_z, pe_x_at_pi)`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["position", "pe_z", "pe_x_at_pi"])?;
        let n = self.len();
        for j in 0..n {
            wr.write_record([
                (j + 1).to_string(),
                format!("{:e}", self.pe_z[j]),
                format!("{:e}", self.pe_x[n - 1 - j]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Logical error probability of the code with information position `i`
/// (1-based): `1 - (1 - pe_z[i]) (1 - pe_x[π(i)])`.
pub fn q1_position_ler(profile: &ReliabilityProfile, i: usize) -> f64 {
    let n = profile.len();
    assert!((1..=n).contains(&i), "position {i} outside [1, {n}]");
    let a = profile.pe_z[i - 1];
    let b = profile.pe_x[n - i];
    // Same value as 1 - (1-a)(1-b) without the cancellation near 0.
    a + b - a * b
}

/// Natural logarithm of [`q1_position_ler`], exact for profiles that carry
/// logarithms.
pub fn q1_position_log_ler(profile: &ReliabilityProfile, i: usize) -> f64 {
    let n = profile.len();
    assert!((1..=n).contains(&i), "position {i} outside [1, {n}]");
    let (la, lb) = match &profile.log_pe {
        Some((z, x)) => (z[i - 1], x[n - i]),
        None => (profile.pe_z[i - 1].ln(), profile.pe_x[n - i].ln()),
    };
    // ln(a + b (1 - a))
    let lb = lb + (-la.exp()).ln_1p();
    let hi = la.max(lb);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((la - hi).exp() + (lb - hi).exp()).ln()
}
