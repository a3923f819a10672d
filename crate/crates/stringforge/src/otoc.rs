//! Correlators that express cipher attacks: the avalanche correlator, its
//! chosen-ciphertext cousin, general string-sequence traces, flip-count
//! distributions, and decay-rate fits.
//!
//! Everything here exploits that a reversible circuit maps basis states to
//! basis states: a trace against the infinite-temperature state is a sum of
//! diagonal elements, and each operator in a sequence sends one basis state
//! to one basis state with a sign. No 2^n-dimensional matrix is ever formed.

use crate::bits::{mask_low, BitWord};
use crate::circuit::{build_layout, Circuit, GateSource, LayoutKind, LayoutSpec, PlacedGate};
use crate::oracle::{PermutationOracle, Reversed, MAX_EXHAUSTIVE_BITS};
use crate::pauli::PauliString;
use crate::rng::{stream_rng, subseed};
use crate::{amplitudes, Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// When an operator in a sequence acts: directly on the cipher input, or
/// conjugated through the cipher so it reads and edits the output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpTime {
    Input,
    Output,
}

/// How a trace is estimated: over every basis state, or over `m` uniform
/// draws seeded for reproducibility.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplePlan {
    Exhaustive,
    Sampled { m: u64, seed: u64 },
}

/// A product of string operators, written left to right, each tagged with
/// the time it acts at. Applied to a basis state right to left.
#[derive(Clone, Debug)]
pub struct OtocQuery {
    pub ops: Vec<(PauliString, OpTime)>,
    pub plan: SamplePlan,
}

/// An estimated trace. Exhaustive runs keep the exact integer numerator over
/// `2^n`; sampled runs carry a mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OtocValue {
    Exact { numerator: i64, n: u32 },
    Sampled { mean: f64, std_err: f64, m: u64 },
}

impl OtocValue {
    pub fn value(&self) -> f64 {
        match *self {
            OtocValue::Exact { numerator, n } => numerator as f64 / (1u64 << n) as f64,
            OtocValue::Sampled { mean, .. } => mean,
        }
    }

    pub fn std_err(&self) -> f64 {
        match *self {
            OtocValue::Exact { .. } => 0.0,
            OtocValue::Sampled { std_err, .. } => std_err,
        }
    }
}

/// Applies one operator to a basis state, returning the new state and
/// multiplying the running sign.
///
/// An input-time string acts as stored: `(-1)^{z.x}` then the x-mask flip.
/// An output-time string is the same operator conjugated through the cipher:
/// encrypt, read the sign off the ciphertext, flip the ciphertext, decrypt.
fn apply_op<O: PermutationOracle + ?Sized>(
    oracle: &O,
    op: &PauliString,
    time: OpTime,
    state: u64,
    sign: &mut i64,
) -> u64 {
    match time {
        OpTime::Input => {
            let (next, s) = op.act_on_basis(state);
            *sign *= s;
            next
        }
        OpTime::Output => {
            let y = oracle.forward(state);
            *sign *= crate::bits::sign(op.z_mask, y);
            if op.x_mask == 0 {
                state
            } else {
                oracle.inverse(y ^ op.x_mask)
            }
        }
    }
}

/// Contribution of one basis state to the trace: the accumulated sign if the
/// sequence returns the state to itself, zero otherwise.
fn trace_term<O: PermutationOracle + ?Sized>(
    oracle: &O,
    ops: &[(PauliString, OpTime)],
    x: u64,
) -> i64 {
    let mut state = x;
    let mut sign = 1i64;
    for (op, time) in ops.iter().rev() {
        state = apply_op(oracle, op, *time, state, &mut sign);
    }
    if state == x {
        sign
    } else {
        0
    }
}

fn check_ops<O: PermutationOracle + ?Sized>(
    oracle: &O,
    ops: &[(PauliString, OpTime)],
) -> Result<u32> {
    let n = oracle.n();
    if ops.is_empty() {
        return Err(Error::InvalidParameter {
            name: "ops",
            reason: "operator sequence is empty".into(),
        });
    }
    for (op, _) in ops {
        if op.n != n {
            return Err(Error::WidthMismatch {
                left: op.n,
                right: n,
            });
        }
    }
    Ok(n)
}

const EXHAUSTIVE_CHUNK: u64 = 1 << 12;

fn exhaustive_trace<O: PermutationOracle + ?Sized>(
    oracle: &O,
    ops: &[(PauliString, OpTime)],
    n: u32,
) -> i64 {
    let size = 1u64 << n;
    let chunks = size.div_ceil(EXHAUSTIVE_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * EXHAUSTIVE_CHUNK;
            let hi = size.min(lo + EXHAUSTIVE_CHUNK);
            (lo..hi).map(|x| trace_term(oracle, ops, x)).sum::<i64>()
        })
        .sum()
}

const SAMPLE_CHUNK: u64 = 1 << 12;

fn sampled_trace<O: PermutationOracle + ?Sized>(
    oracle: &O,
    ops: &[(PauliString, OpTime)],
    n: u32,
    m: u64,
    seed: u64,
) -> Result<OtocValue> {
    if m == 0 {
        return Err(Error::EmptyPlan);
    }
    let mask = mask_low(n);
    let chunks = m.div_ceil(SAMPLE_CHUNK);
    let (sum, sum_sq) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, "otoc-samples", c);
            let take = (m - c * SAMPLE_CHUNK).min(SAMPLE_CHUNK);
            let mut s = 0i64;
            let mut s2 = 0i64;
            for _ in 0..take {
                let x = rng.gen::<u64>() & mask;
                let t = trace_term(oracle, ops, x);
                s += t;
                s2 += t * t;
            }
            (s, s2)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = sum as f64 / m as f64;
    let std_err = if m > 1 {
        let var = (sum_sq as f64 - m as f64 * mean * mean) / (m as f64 - 1.0);
        (var.max(0.0) / m as f64).sqrt()
    } else {
        0.0
    };
    Ok(OtocValue::Sampled { mean, std_err, m })
}

/// Estimates `tr[rho_inf * product of the query's operators]` by propagating
/// basis states through the sequence. The exhaustive plan returns the exact
/// trace numerator; the sampled plan's standard error scales as `1/sqrt(m)`.
pub fn evaluate_otoc<O: PermutationOracle + ?Sized>(
    oracle: &O,
    query: &OtocQuery,
) -> Result<OtocValue> {
    let n = check_ops(oracle, &query.ops)?;
    match query.plan {
        SamplePlan::Exhaustive => {
            if n > MAX_EXHAUSTIVE_BITS {
                return Err(Error::WidthOutOfRange {
                    n,
                    min: 1,
                    max: MAX_EXHAUSTIVE_BITS,
                });
            }
            Ok(OtocValue::Exact {
                numerator: exhaustive_trace(oracle, &query.ops, n),
                n,
            })
        }
        SamplePlan::Sampled { m, seed } => sampled_trace(oracle, &query.ops, n, m, seed),
    }
}

fn check_bit(bit: u32, n: u32) -> Result<()> {
    if bit >= n {
        return Err(Error::LineOutOfRange { line: bit, n });
    }
    Ok(())
}

/// Avalanche correlator of input bit `i` against output bit `j`:
/// `2^{-n} sum_x (-1)^{P_j(x + e_i) + P_j(x)}`. Zero means flipping bit `i`
/// leaves bit `j` of the output perfectly balanced.
pub fn sac<O: PermutationOracle + ?Sized>(
    oracle: &O,
    i: u32,
    j: u32,
    plan: SamplePlan,
) -> Result<OtocValue> {
    let n = oracle.n();
    check_bit(i, n)?;
    check_bit(j, n)?;
    let term = |x: u64| -> i64 {
        let a = oracle.forward(x) >> j;
        let b = oracle.forward(x ^ (1 << i)) >> j;
        1 - 2 * ((a ^ b) & 1) as i64
    };
    match plan {
        SamplePlan::Exhaustive => {
            if n > MAX_EXHAUSTIVE_BITS {
                return Err(Error::WidthOutOfRange {
                    n,
                    min: 1,
                    max: MAX_EXHAUSTIVE_BITS,
                });
            }
            let size = 1u64 << n;
            let chunks = size.div_ceil(EXHAUSTIVE_CHUNK);
            let numerator = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let lo = c * EXHAUSTIVE_CHUNK;
                    let hi = size.min(lo + EXHAUSTIVE_CHUNK);
                    (lo..hi).map(term).sum::<i64>()
                })
                .sum();
            Ok(OtocValue::Exact { numerator, n })
        }
        SamplePlan::Sampled { m, seed } => {
            if m == 0 {
                return Err(Error::EmptyPlan);
            }
            let mask = mask_low(n);
            let chunks = m.div_ceil(SAMPLE_CHUNK);
            let sum: i64 = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = stream_rng(seed, "sac-samples", c);
                    let take = (m - c * SAMPLE_CHUNK).min(SAMPLE_CHUNK);
                    (0..take).map(|_| term(rng.gen::<u64>() & mask)).sum::<i64>()
                })
                .sum();
            let mean = sum as f64 / m as f64;
            // Each term is +-1, so the variance is determined by the mean.
            let std_err = if m > 1 {
                ((1.0 - mean * mean).max(0.0) / (m as f64 - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(OtocValue::Sampled { mean, std_err, m })
        }
    }
}

/// The avalanche correlator written as a four-operator sequence; feeding it
/// to [`evaluate_otoc`] reproduces [`sac`] term by term.
pub fn sac_ops(n: u32, i: u32, j: u32) -> Result<Vec<(PauliString, OpTime)>> {
    check_bit(i, n)?;
    check_bit(j, n)?;
    let flip = PauliString::new(n, 1 << i, 0)?;
    let read = PauliString::new(n, 0, 1 << j)?;
    Ok(vec![
        (flip, OpTime::Input),
        (read, OpTime::Output),
        (flip, OpTime::Input),
        (read, OpTime::Output),
    ])
}

/// Avalanche correlator evaluated in string space instead of state space.
///
/// The output-bit reader, carried backwards through the cipher, spreads over
/// flip-free strings `s` with squared amplitude `p_s`; the correlator is the
/// balance `sum_s p_s (-1)^{s_i}` between strings that do and do not touch
/// bit `i`. Equality with [`sac`] is exact, so the division by `2^n` below
/// must leave no remainder.
pub fn sac_via_amplitudes<O: PermutationOracle + ?Sized>(
    oracle: &O,
    i: u32,
    j: u32,
) -> Result<OtocValue> {
    let n = oracle.n();
    check_bit(i, n)?;
    check_bit(j, n)?;
    let v = amplitudes::zsector_amplitudes(&Reversed(oracle), 1u64 << j)?;
    let mut acc = 0i128;
    for (s, &num) in v.iter().enumerate() {
        let sq = i128::from(num) * i128::from(num);
        if s >> i & 1 == 0 {
            acc += sq;
        } else {
            acc -= sq;
        }
    }
    let size = 1i128 << n;
    debug_assert_eq!(acc % size, 0);
    Ok(OtocValue::Exact {
        numerator: (acc / size) as i64,
        n,
    })
}

/// Three-query distinguisher correlator: input bit `j` on the low half of
/// the block, output bit `i` on the high half. The eight-operator sequence
/// interleaves two encryptions and one decryption, so a cipher whose fourth
/// output-half bits are a round function of the inputs (a three-round
/// ladder) gives exactly 1 at `i = j + n/2`, while a scrambling cipher
/// leaves only sampling noise.
pub fn cpca<O: PermutationOracle + ?Sized>(
    oracle: &O,
    i: u32,
    j: u32,
    plan: SamplePlan,
) -> Result<OtocValue> {
    let n = oracle.n();
    if n % 2 != 0 {
        return Err(Error::OddWidth { n });
    }
    check_bit(i, n)?;
    check_bit(j, n)?;
    if i < n / 2 {
        return Err(Error::RegisterMismatch {
            bit: i,
            register: "high-half",
            n,
        });
    }
    if j >= n / 2 {
        return Err(Error::RegisterMismatch {
            bit: j,
            register: "low-half",
            n,
        });
    }
    let query = OtocQuery {
        ops: cpca_ops(n, i, j)?,
        plan,
    };
    evaluate_otoc(oracle, &query)
}

/// The eight-operator chosen-plaintext/chosen-ciphertext sequence behind
/// [`cpca`], in left-to-right product order.
pub fn cpca_ops(n: u32, i: u32, j: u32) -> Result<Vec<(PauliString, OpTime)>> {
    check_bit(i, n)?;
    check_bit(j, n)?;
    let flip_j = PauliString::new(n, 1 << j, 0)?;
    let flip_i = PauliString::new(n, 1 << i, 0)?;
    let read_j = PauliString::new(n, 0, 1 << j)?;
    let read_i = PauliString::new(n, 0, 1 << i)?;
    Ok(vec![
        (flip_j, OpTime::Input),
        (flip_i, OpTime::Output),
        (read_i, OpTime::Input),
        (flip_i, OpTime::Output),
        (read_j, OpTime::Output),
        (flip_j, OpTime::Input),
        (read_j, OpTime::Output),
        (read_i, OpTime::Input),
    ])
}

/// Flip-count statistics after a prefix of circuit layers: how many output
/// bits differ when one input bit is flipped.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlipDistribution {
    /// Prefix length; 0 is the untouched input.
    pub layer: usize,
    /// Trials observed.
    pub samples: u64,
    /// `counts[k]` trials ended with `k` differing bits; sums to `samples`.
    pub counts: Vec<u64>,
    /// Trials in which some gate of this layer saw two or more differing
    /// input lines. Such collisions are the only way a layer of
    /// weight-growing gates can emit a single-bit difference.
    pub collisions: u64,
    /// Trials ending this layer with a single-bit difference despite a
    /// collision-free history; identically zero for gate sets that grow
    /// every single-bit difference.
    pub clean_single_flips: u64,
}

impl FlipDistribution {
    /// Zeroed statistics for one prefix length of a width-`n` circuit.
    pub fn empty(layer: usize, n: u32) -> Self {
        FlipDistribution {
            layer,
            samples: 0,
            counts: vec![0; n as usize + 1],
            collisions: 0,
            clean_single_flips: 0,
        }
    }

    /// Pools counts from another run at the same prefix length, e.g. to
    /// aggregate over circuit realizations.
    pub fn merge(&mut self, other: &FlipDistribution) {
        self.samples += other.samples;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.collisions += other.collisions;
        self.clean_single_flips += other.clean_single_flips;
    }

    /// Probability of exactly `k` differing output bits.
    pub fn p(&self, k: usize) -> f64 {
        self.counts[k] as f64 / self.samples as f64
    }

    /// Mean number of differing output bits.
    pub fn mean(&self) -> f64 {
        let total: u64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| k as u64 * c)
            .sum();
        total as f64 / self.samples as f64
    }
}

fn avalanche_trial(
    circuit: &Circuit,
    x: &BitWord,
    flip: u32,
    out: &mut [FlipDistribution],
) {
    let mut a = x.clone();
    let mut b = x.clone();
    b.flip_bit(flip);
    out[0].samples += 1;
    out[0].counts[1] += 1;
    let mut collided = false;
    for (l, layer) in circuit.layers().iter().enumerate() {
        let mut hit = false;
        for pg in layer {
            let lines = pg.lines;
            let mut differing = 0;
            for &line in &lines {
                differing += (a.bit(line.into()) ^ b.bit(line.into())) as u32;
            }
            if differing >= 2 {
                hit = true;
            }
            pg.apply_word(&mut a);
            pg.apply_word(&mut b);
        }
        collided |= hit;
        let k = a.hamming(&b) as usize;
        let d = &mut out[l + 1];
        d.samples += 1;
        d.counts[k] += 1;
        if hit {
            d.collisions += 1;
        }
        if k == 1 && !collided {
            d.clean_single_flips += 1;
        }
    }
}

/// Flip statistics for every layer prefix of `circuit`, one distribution per
/// prefix length `0..=layers`. Exhaustive plans sweep every (input, flipped
/// bit) pair; sampled plans draw both uniformly.
pub fn avalanche_distribution(
    circuit: &Circuit,
    plan: SamplePlan,
) -> Result<Vec<FlipDistribution>> {
    let n = circuit.n();
    let fresh = || -> Vec<FlipDistribution> {
        (0..=circuit.layer_count())
            .map(|l| FlipDistribution::empty(l, n))
            .collect()
    };
    let merge = |mut a: Vec<FlipDistribution>, b: Vec<FlipDistribution>| {
        for (x, y) in a.iter_mut().zip(&b) {
            x.merge(y);
        }
        a
    };
    match plan {
        SamplePlan::Exhaustive => {
            if n > MAX_EXHAUSTIVE_BITS {
                return Err(Error::WidthOutOfRange {
                    n,
                    min: 1,
                    max: MAX_EXHAUSTIVE_BITS,
                });
            }
            let size = 1u64 << n;
            Ok((0..size)
                .into_par_iter()
                .fold(fresh, |mut acc, x| {
                    let word = BitWord::from_u64(x, n);
                    for i in 0..n {
                        avalanche_trial(circuit, &word, i, &mut acc);
                    }
                    acc
                })
                .reduce(fresh, merge))
        }
        SamplePlan::Sampled { m, seed } => {
            if m == 0 {
                return Err(Error::EmptyPlan);
            }
            let chunks = m.div_ceil(SAMPLE_CHUNK);
            Ok((0..chunks)
                .into_par_iter()
                .fold(fresh, |mut acc, c| {
                    let mut rng = stream_rng(seed, "avalanche-samples", c);
                    let take = (m - c * SAMPLE_CHUNK).min(SAMPLE_CHUNK);
                    for _ in 0..take {
                        let word = BitWord::random(n, &mut rng);
                        let i = rng.gen_range(0..n);
                        avalanche_trial(circuit, &word, i, &mut acc);
                    }
                    acc
                })
                .reduce(fresh, merge))
        }
    }
}

/// One depth step of an avalanche-correlator decay measurement.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayPoint {
    pub layer: u32,
    /// Squared correlator, squared per circuit and output bit before any
    /// averaging, then averaged over output bits and circuits.
    pub mean_sq: f64,
    /// Standard error over circuit realizations.
    pub std_err: f64,
}

/// Decay of the squared avalanche correlator with circuit depth, for a fixed
/// flipped input bit 0, averaged over all output bits and over independently
/// drawn circuits.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecaySeries {
    pub n: u32,
    pub circuits: u32,
    /// Inputs sampled per circuit; the squared estimator cannot resolve
    /// values below `1/samples`.
    pub samples: u64,
    pub points: Vec<DecayPoint>,
}

impl DecaySeries {
    /// `log3(n)` when `n` is an exact power of three.
    pub fn k(&self) -> Option<u32> {
        let mut v = self.n;
        let mut k = 0;
        while v > 1 {
            if v % 3 != 0 {
                return None;
            }
            v /= 3;
            k += 1;
        }
        Some(k)
    }

    /// Expected squared-estimator floor from the pooled sampling budget
    /// (`samples` per circuit across `circuits` circuits).
    pub fn sampling_floor(&self) -> f64 {
        1.0 / (self.samples * u64::from(self.circuits.max(1))) as f64
    }

    /// Smallest squared correlator the series can resolve: the sampling
    /// floor, or the finite-size equilibrium plateau near `2^(1-n)` where
    /// a fully scrambled permutation's correlator stops decaying.
    pub fn resolution_floor(&self) -> f64 {
        self.sampling_floor().max((1.0 - self.n as f64).exp2())
    }
}

/// Recipe for a decay measurement.
#[derive(Clone)]
pub struct DecayPlan {
    pub n: u32,
    pub layers: u32,
    pub kind: LayoutKind,
    pub gates: GateSource,
    pub circuits: u32,
    pub samples: u64,
    pub seed: u64,
}

/// Truth tables of one placed gate for lane-parallel evaluation: bit `v` of
/// `tt[t]` is output line `t` (high to low) when the packed input is `v`.
struct SlicedGate {
    lines: [usize; 3],
    tt: [u8; 3],
}

impl SlicedGate {
    fn from_placed(pg: &PlacedGate) -> Self {
        let lines = pg.lines;
        let mut tt = [0u8; 3];
        for v in 0..8u8 {
            let w = pg.gate.apply_packed(v);
            tt[0] |= ((w >> 2) & 1) << v;
            tt[1] |= ((w >> 1) & 1) << v;
            tt[2] |= (w & 1) << v;
        }
        SlicedGate {
            lines: [
                lines[0] as usize,
                lines[1] as usize,
                lines[2] as usize,
            ],
            tt,
        }
    }

    /// Applies the gate to 64 states at once; `planes[line]` holds bit
    /// `line` of all 64 states.
    fn apply(&self, planes: &mut [u64]) {
        let a = planes[self.lines[0]];
        let b = planes[self.lines[1]];
        let c = planes[self.lines[2]];
        let mut out = [0u64; 3];
        for v in 0..8 {
            let term = (if v & 4 != 0 { a } else { !a })
                & (if v & 2 != 0 { b } else { !b })
                & (if v & 1 != 0 { c } else { !c });
            for t in 0..3 {
                out[t] |= term & u64::wrapping_neg((self.tt[t] >> v & 1) as u64);
            }
        }
        planes[self.lines[0]] = out[0];
        planes[self.lines[1]] = out[1];
        planes[self.lines[2]] = out[2];
    }
}

/// Propagates one block of up to 64 paired states (the pair differs in bit
/// 0) through every layer, adding the per-layer count of lanes whose bit `j`
/// differs into `diff_counts[layer][j]`. Lanes outside `lane_mask` are
/// ignored. `a_planes` is consumed as scratch.
fn sliced_block_counts(
    layers: &[Vec<SlicedGate>],
    a_planes: &mut [u64],
    lane_mask: u64,
    diff_counts: &mut [Vec<u64>],
) {
    let n = a_planes.len();
    let mut b_planes = a_planes.to_vec();
    b_planes[0] ^= !0u64;
    for j in 0..n {
        diff_counts[0][j] += ((a_planes[j] ^ b_planes[j]) & lane_mask).count_ones() as u64;
    }
    for (l, layer) in layers.iter().enumerate() {
        for gate in layer {
            gate.apply(a_planes);
            gate.apply(&mut b_planes);
        }
        for j in 0..n {
            diff_counts[l + 1][j] +=
                ((a_planes[j] ^ b_planes[j]) & lane_mask).count_ones() as u64;
        }
    }
}

/// Per-layer, per-output-bit avalanche correlators of one circuit with the
/// flipped bit fixed at 0, estimated from `m` sampled inputs.
fn circuit_sac_curves(circuit: &Circuit, m: u64, seed: u64, index: u64) -> Vec<Vec<f64>> {
    let n = circuit.n() as usize;
    let layers: Vec<Vec<SlicedGate>> = circuit
        .layers()
        .iter()
        .map(|layer| layer.iter().map(SlicedGate::from_placed).collect())
        .collect();
    let mut diff_counts = vec![vec![0u64; n]; layers.len() + 1];
    let mut rng = stream_rng(seed, "decay-samples", index);
    let mut done = 0u64;
    let mut planes = vec![0u64; n];
    while done < m {
        let take = (m - done).min(64);
        let lane_mask = if take == 64 { !0u64 } else { (1u64 << take) - 1 };
        for plane in planes.iter_mut() {
            *plane = rng.gen::<u64>();
        }
        sliced_block_counts(&layers, &mut planes, lane_mask, &mut diff_counts);
        done += take;
    }
    diff_counts
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|cnt| 1.0 - 2.0 * cnt as f64 / m as f64)
                .collect()
        })
        .collect()
}

/// Runs the decay measurement: draws `circuits` independent circuits from
/// the plan's layout, estimates the squared avalanche correlator after every
/// layer, and averages squares over output bits and circuits.
pub fn sac_decay(plan: &DecayPlan) -> Result<DecaySeries> {
    sac_decay_over(plan, None)
}

/// Like [`sac_decay`], but averages only over output bits within ring
/// distance `radius` of the flipped bit.
///
/// The all-bits average mixes the local relaxation rate with the spread of
/// front-arrival times across the system, a transient that grows with n in
/// short-range layouts. Bits next to the flip see the front immediately, so
/// their late-depth slope is the width-independent local rate.
pub fn sac_decay_local(plan: &DecayPlan, radius: u32) -> Result<DecaySeries> {
    sac_decay_over(plan, Some(radius))
}

fn sac_decay_over(plan: &DecayPlan, radius: Option<u32>) -> Result<DecaySeries> {
    if plan.circuits == 0 {
        return Err(Error::InvalidParameter {
            name: "circuits",
            reason: "need at least one circuit".into(),
        });
    }
    if plan.samples == 0 {
        return Err(Error::EmptyPlan);
    }
    let specs: Vec<LayoutSpec> = (0..plan.circuits)
        .map(|c| LayoutSpec {
            n: plan.n,
            layers: plan.layers,
            kind: plan.kind,
            gates: plan.gates.clone(),
            seed: subseed(plan.seed, &format!("decay-circuit-{c}")),
        })
        .collect();
    // The flipped bit in circuit_sac_curves is bit 0, so ring distance to
    // it is min(i, n - i).
    let keep: Vec<usize> = (0..plan.n as usize)
        .filter(|&i| match radius {
            Some(r) => (i as u32).min(plan.n - i as u32) <= r,
            None => true,
        })
        .collect();
    let per_circuit: Vec<Vec<f64>> = specs
        .par_iter()
        .enumerate()
        .map(|(c, spec)| -> Result<Vec<f64>> {
            let circuit = build_layout(spec)?;
            let curves = circuit_sac_curves(&circuit, plan.samples, plan.seed, c as u64);
            // Mean over kept output bits of the squared correlator. The
            // naive square of a finite-sample estimate carries a
            // +4p(1-p)/m bias that would floor the tail near 1/m, so
            // subtract the unbiased variance term (1 - c^2)/(m - 1).
            let m1 = (plan.samples - 1).max(1) as f64;
            Ok(curves
                .iter()
                .map(|row| {
                    keep.iter()
                        .map(|&i| {
                            let c2 = row[i] * row[i];
                            c2 - (1.0 - c2) / m1
                        })
                        .sum::<f64>()
                        / keep.len() as f64
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let layers = plan.layers as usize + 1;
    let nc = plan.circuits as f64;
    let points = (0..layers)
        .map(|l| {
            let mean = per_circuit.iter().map(|c| c[l]).sum::<f64>() / nc;
            let var = per_circuit
                .iter()
                .map(|c| (c[l] - mean).powi(2))
                .sum::<f64>()
                / (nc - 1.0).max(1.0);
            DecayPoint {
                layer: l as u32,
                mean_sq: mean,
                std_err: if plan.circuits > 1 {
                    (var / nc).sqrt()
                } else {
                    0.0
                },
            }
        })
        .collect();
    Ok(DecaySeries {
        n: plan.n,
        circuits: plan.circuits,
        samples: plan.samples,
        points,
    })
}

/// Rescaled log-decay curve and its fitted slope.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    /// `log3(n)` of the measured system.
    pub k: u32,
    /// Slope of the rescaled curve over its pre-saturation segment.
    pub alpha: f64,
    /// `(shifted depth, log of the squared correlator over its value at
    /// shift 0)` for each usable point.
    pub q: Vec<(u32, f64)>,
}

/// Fits the depth-rescaled decay: shifts depth by `log3(n) - 1` so circuits
/// of different widths start from comparable coverage, normalizes by the
/// value at shift 0, and fits a line to `ln(mean_sq)` over the late-depth
/// window `3/samples < mean_sq <= cap`.
///
/// The upper cap matters: right after the spreading front covers the
/// system the curve still has a width-dependent shoulder, and including it
/// drags the slope down more for wider circuits. The cap restricts the fit
/// to the asymptotic exponential tail. The fit needs at least three
/// surviving points.
pub fn otoc_decay_fit(series: &DecaySeries, cap: f64) -> Result<DecayFit> {
    let k = series.k().ok_or(Error::InvalidParameter {
        name: "n",
        reason: "depth rescaling needs n to be a power of 3".into(),
    })?;
    let base = k.saturating_sub(1) as usize;
    if series.points.len() <= base {
        return Err(Error::InsufficientData {
            got: series.points.len(),
            need: base + 3,
        });
    }
    let floor = 3.0 * series.resolution_floor();
    let reference = series.points[base].mean_sq;
    let mut q: Vec<(u32, f64)> = Vec::new();
    for (shift, point) in series.points[base..].iter().enumerate() {
        if point.mean_sq > cap {
            continue;
        }
        if point.mean_sq <= floor {
            // Truncate, don't filter: later points are sampling noise and
            // can bounce back above the floor.
            break;
        }
        q.push((shift as u32, (point.mean_sq / reference).ln()));
    }
    if q.len() < 3 {
        return Err(Error::InsufficientData {
            got: q.len(),
            need: 3,
        });
    }
    let slope = least_squares_slope(q.iter().map(|&(x, y)| (x as f64, y)));
    Ok(DecayFit {
        k,
        alpha: -slope,
        q,
    })
}

/// Late-depth exponential rate of a decay series: the negated slope of
/// `ln(mean_sq)` against depth, fitted over points below `cap` and above
/// three times the sampling floor.
pub fn exponential_rate(series: &DecaySeries, cap: f64) -> Result<f64> {
    let floor = 3.0 * series.resolution_floor();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for p in &series.points {
        if p.mean_sq >= cap {
            continue;
        }
        if p.mean_sq <= floor {
            // Truncate, don't filter: later points are sampling noise and
            // can bounce back above the floor.
            break;
        }
        pts.push((p.layer as f64, p.mean_sq.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            got: pts.len(),
            need: 3,
        });
    }
    Ok(-least_squares_slope(pts.into_iter()))
}

fn least_squares_slope(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let pts: Vec<(f64, f64)> = points.collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feistel::FeistelCipher;
    use crate::gate::Gate3;
    use crate::gatespace;
    use crate::oracle::TablePermutation;
    use rand::seq::SliceRandom;
    use std::sync::Arc;

    fn packed_circuit(n: u32, layers: u32, gates: GateSource, seed: u64) -> Circuit {
        build_layout(&LayoutSpec {
            n,
            layers,
            kind: LayoutKind::LongRangePacked,
            gates,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn identity_sequence_traces_to_one() {
        let p = TablePermutation::random(6, 11, 0).unwrap();
        let id = PauliString::identity(6);
        let query = OtocQuery {
            ops: vec![(id, OpTime::Input), (id, OpTime::Output)],
            plan: SamplePlan::Exhaustive,
        };
        assert_eq!(
            evaluate_otoc(&p, &query).unwrap(),
            OtocValue::Exact {
                numerator: 64,
                n: 6
            }
        );
    }

    #[test]
    fn repeated_string_traces_to_its_square() {
        let p = TablePermutation::random(6, 12, 0).unwrap();
        // x and z on disjoint bits: the square is the identity operator.
        let even = PauliString::new(6, 0b000011, 0b110000).unwrap();
        // Overlapping masks pick up (-1)^{n_y} per squaring.
        let odd = PauliString::new(6, 0b000111, 0b000100).unwrap();
        for (string, want) in [(even, 64), (odd, -64)] {
            let query = OtocQuery {
                ops: vec![(string, OpTime::Input), (string, OpTime::Input)],
                plan: SamplePlan::Exhaustive,
            };
            assert_eq!(
                evaluate_otoc(&p, &query).unwrap(),
                OtocValue::Exact {
                    numerator: want,
                    n: 6
                }
            );
        }
    }

    #[test]
    fn balanced_output_bit_reads_zero() {
        let f = FeistelCipher::new(8, 3, 41).unwrap();
        for j in [0, 3, 7] {
            let query = OtocQuery {
                ops: vec![(PauliString::new(8, 0, 1 << j).unwrap(), OpTime::Output)],
                plan: SamplePlan::Exhaustive,
            };
            assert_eq!(
                evaluate_otoc(&f, &query).unwrap(),
                OtocValue::Exact {
                    numerator: 0,
                    n: 8
                }
            );
        }
    }

    #[test]
    fn two_string_trace_matches_string_amplitudes() {
        let mut rng = stream_rng(23, "otoc-amp-check", 0);
        for trial in 0..6 {
            let p = TablePermutation::random(4, 23, trial).unwrap();
            let alpha = PauliString::new(4, rng.gen::<u64>() & 0xf, rng.gen::<u64>() & 0xf)
                .unwrap();
            let beta =
                PauliString::new(4, rng.gen::<u64>() & 0xf, rng.gen::<u64>() & 0xf).unwrap();
            let query = OtocQuery {
                ops: vec![(alpha, OpTime::Output), (beta, OpTime::Input)],
                plan: SamplePlan::Exhaustive,
            };
            let direct = match evaluate_otoc(&p, &query).unwrap() {
                OtocValue::Exact { numerator, .. } => numerator,
                _ => unreachable!(),
            };
            let amp = amplitudes::amplitude_one(&Reversed(&p), &alpha, &beta).unwrap();
            let phase = if beta.stats().parity == 0 { 1 } else { -1 };
            assert_eq!(direct, phase * amp, "trial {trial}");
        }
    }

    #[test]
    fn sac_of_identity_permutation() {
        let table: Vec<u32> = (0..64).collect();
        let p = TablePermutation::from_table(6, table).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let got = sac(&p, i, j, SamplePlan::Exhaustive).unwrap();
                let want = if i == j { -64 } else { 64 };
                assert_eq!(
                    got,
                    OtocValue::Exact {
                        numerator: want,
                        n: 6
                    }
                );
            }
        }
    }

    #[test]
    fn sac_matches_its_operator_sequence() {
        let p = TablePermutation::random(6, 29, 0).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let direct = sac(&p, i, j, SamplePlan::Exhaustive).unwrap();
                let query = OtocQuery {
                    ops: sac_ops(6, i, j).unwrap(),
                    plan: SamplePlan::Exhaustive,
                };
                assert_eq!(direct, evaluate_otoc(&p, &query).unwrap());
            }
        }
    }

    #[test]
    fn sac_on_linear_layers_is_plus_minus_one() {
        let circuit = packed_circuit(6, 4, GateSource::Inflationary, 5);
        for i in 0..6 {
            for j in 0..6 {
                match sac(&circuit, i, j, SamplePlan::Exhaustive).unwrap() {
                    OtocValue::Exact { numerator, .. } => assert_eq!(numerator.abs(), 64),
                    _ => unreachable!(),
                }
            }
        }
    }

    #[test]
    fn sac_via_amplitudes_matches_direct() {
        let p = TablePermutation::random(6, 31, 0).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(
                    sac(&p, i, j, SamplePlan::Exhaustive).unwrap(),
                    sac_via_amplitudes(&p, i, j).unwrap()
                );
            }
        }
    }

    #[test]
    fn sampled_sac_tracks_exhaustive() {
        let f = FeistelCipher::new(10, 2, 9).unwrap();
        let exact = sac(&f, 1, 7, SamplePlan::Exhaustive).unwrap().value();
        let est = sac(&f, 1, 7, SamplePlan::Sampled { m: 40000, seed: 3 }).unwrap();
        assert!((est.value() - exact).abs() <= 4.0 * est.std_err().max(1e-3));
    }

    #[test]
    fn cpca_distinguishes_three_round_ladder() {
        let f = FeistelCipher::new(6, 3, 77).unwrap();
        for j in 0..3 {
            let i = j + 3;
            assert_eq!(
                cpca(&f, i, j, SamplePlan::Exhaustive).unwrap(),
                OtocValue::Exact {
                    numerator: 64,
                    n: 6
                },
                "bit pair ({i}, {j})"
            );
        }
    }

    #[test]
    fn cpca_checks_registers() {
        let f = FeistelCipher::new(6, 3, 77).unwrap();
        assert!(matches!(
            cpca(&f, 1, 0, SamplePlan::Exhaustive),
            Err(Error::RegisterMismatch { .. })
        ));
        assert!(matches!(
            cpca(&f, 4, 5, SamplePlan::Exhaustive),
            Err(Error::RegisterMismatch { .. })
        ));
    }

    #[test]
    fn avalanche_starts_from_one_flip() {
        let circuit = packed_circuit(9, 3, GateSource::FullS8, 2);
        let dists = avalanche_distribution(&circuit, SamplePlan::Exhaustive).unwrap();
        assert_eq!(dists.len(), 4);
        assert_eq!(dists[0].p(1), 1.0);
        for d in &dists {
            assert_eq!(d.counts.iter().sum::<u64>(), d.samples);
            assert_eq!(d.counts[0], 0, "a bijection cannot erase a difference");
        }
    }

    #[test]
    fn single_weight_growing_layer_kills_single_flips() {
        let circuit = packed_circuit(9, 1, GateSource::Inflationary, 6);
        let dists = avalanche_distribution(&circuit, SamplePlan::Exhaustive).unwrap();
        assert_eq!(dists[1].counts[1], 0);
        assert_eq!(dists[1].collisions, 0);
        assert_eq!(dists[1].clean_single_flips, 0);
    }

    #[test]
    fn sampled_avalanche_is_reproducible() {
        let circuit = packed_circuit(12, 2, GateSource::FullS8, 8);
        let plan = SamplePlan::Sampled { m: 500, seed: 13 };
        let a = avalanche_distribution(&circuit, plan).unwrap();
        let b = avalanche_distribution(&circuit, plan).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.counts, y.counts);
        }
    }

    #[test]
    fn sliced_gate_matches_scalar_application() {
        let mut rng = stream_rng(3, "sliced-check", 0);
        for _ in 0..20 {
            let gate = Gate3::random(&mut rng);
            let mut lines = [0u16, 1, 2, 3, 4, 5, 6];
            lines.shuffle(&mut rng);
            let pg = PlacedGate::new(gate, [lines[0], lines[1], lines[2]]).unwrap();
            let sliced = SlicedGate::from_placed(&pg);
            let mut planes: Vec<u64> = (0..7).map(|_| rng.gen()).collect();
            let before = planes.clone();
            sliced.apply(&mut planes);
            for lane in 0..64 {
                let mut x = 0u64;
                for (j, plane) in before.iter().enumerate() {
                    x |= (plane >> lane & 1) << j;
                }
                let want = pg.apply_u64(x);
                let mut got = 0u64;
                for (j, plane) in planes.iter().enumerate() {
                    got |= (plane >> lane & 1) << j;
                }
                assert_eq!(got, want, "lane {lane}");
            }
        }
    }

    #[test]
    fn sliced_block_matches_scalar_propagation() {
        let circuit = packed_circuit(9, 3, GateSource::FullS8, 14);
        let layers: Vec<Vec<SlicedGate>> = circuit
            .layers()
            .iter()
            .map(|layer| layer.iter().map(SlicedGate::from_placed).collect())
            .collect();
        let mut rng = stream_rng(15, "sliced-block-check", 0);
        let mut planes: Vec<u64> = (0..9).map(|_| rng.gen()).collect();
        let initial = planes.clone();
        let mut counts = vec![vec![0u64; 9]; 4];
        sliced_block_counts(&layers, &mut planes, !0, &mut counts);

        let mut want = vec![vec![0u64; 9]; 4];
        for lane in 0..64u64 {
            let mut x = 0u64;
            for (j, plane) in initial.iter().enumerate() {
                x |= (plane >> lane & 1) << j;
            }
            let mut a = BitWord::from_u64(x, 9);
            let mut b = BitWord::from_u64(x ^ 1, 9);
            for j in 0..9 {
                want[0][j as usize] += a.bit(j) ^ b.bit(j);
            }
            for (l, layer) in circuit.layers().iter().enumerate() {
                for pg in layer {
                    pg.apply_word(&mut a);
                    pg.apply_word(&mut b);
                }
                for j in 0..9 {
                    want[l + 1][j as usize] += a.bit(j) ^ b.bit(j);
                }
            }
        }
        assert_eq!(counts, want);
    }

    #[test]
    fn decay_series_starts_at_one() {
        let series = sac_decay(&DecayPlan {
            n: 27,
            layers: 4,
            kind: LayoutKind::LongRangePacked,
            gates: GateSource::Proliferation,
            circuits: 3,
            samples: 4096,
            seed: 21,
        })
        .unwrap();
        assert_eq!(series.points[0].mean_sq, 1.0);
        assert_eq!(series.k(), Some(3));
        assert!(series.points[4].mean_sq < series.points[1].mean_sq);
    }

    #[test]
    fn decay_fit_recovers_synthetic_slope() {
        let points = (0..15)
            .map(|l| DecayPoint {
                layer: l,
                mean_sq: (-(1.7 * l as f64)).exp(),
                std_err: 0.0,
            })
            .collect();
        let series = DecaySeries {
            n: 243,
            circuits: 1,
            samples: 1 << 40,
            points,
        };
        let fit = otoc_decay_fit(&series, 1.0).unwrap();
        assert_eq!(fit.k, 5);
        assert_eq!(fit.q[0].1, 0.0);
        assert!((fit.alpha - 1.7).abs() < 1e-9);
        assert!((exponential_rate(&series, 0.5).unwrap() - 1.7).abs() < 1e-9);
        // A tail-only window must recover the same synthetic slope.
        let tail = otoc_decay_fit(&series, 1e-4).unwrap();
        assert!((tail.alpha - 1.7).abs() < 1e-9);
        assert!(tail.q.len() < fit.q.len());
    }

    #[test]
    fn resolution_floor_covers_equilibrium_plateau() {
        let series = DecaySeries {
            n: 9,
            circuits: 1,
            samples: 1 << 30,
            points: Vec::new(),
        };
        // Wide sampling budget: the finite-size plateau dominates.
        assert_eq!(series.resolution_floor(), (2f64).powi(-8));
        let tiny = DecaySeries {
            n: 243,
            circuits: 1,
            samples: 100,
            points: Vec::new(),
        };
        assert_eq!(tiny.resolution_floor(), 0.01);
    }

    #[test]
    fn decay_fit_needs_points_above_the_floor() {
        let points = (0..6)
            .map(|l| DecayPoint {
                layer: l,
                mean_sq: if l == 0 { 1.0 } else { 1e-9 },
                std_err: 0.0,
            })
            .collect();
        let series = DecaySeries {
            n: 3,
            circuits: 1,
            samples: 100,
            points,
        };
        assert!(matches!(
            otoc_decay_fit(&series, 1.0),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn equilibrium_sac_is_exponentially_small() {
        let p = TablePermutation::random(10, 37, 0).unwrap();
        let scale = (2f64).powf(-5.0);
        for (i, j) in [(0, 9), (4, 2), (7, 7)] {
            let c = sac(&p, i, j, SamplePlan::Exhaustive).unwrap().value();
            assert!(c.abs() < 6.0 * scale, "({i},{j}) gave {c}");
        }
    }

    #[test]
    fn fixed_gate_source_draws_from_the_pool() {
        let pool = Arc::new(vec![gatespace::atlas().inflationary[0]]);
        let circuit = packed_circuit(6, 2, GateSource::Fixed(pool.clone()), 9);
        for layer in circuit.layers() {
            for pg in layer {
                assert_eq!(pg.gate, pool[0]);
            }
        }
    }
}
