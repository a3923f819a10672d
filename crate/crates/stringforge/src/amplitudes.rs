//! Exact string-operator wave functions of bit permutations.
//!
//! Conjugating a string operator by a permutation of computational basis
//! states yields a superposition of string operators whose amplitudes are
//! dyadic rationals r / 2^n. Everything here works with the integer
//! numerators r, so normalization and symmetry checks are exact.
//!
//! The full wave function over all 4^n output strings is never materialized.
//! For a flipping input string the permutation pairs up basis states, the
//! pairs group into "boxes" labelled by the output flip mask, and within a
//! box the amplitudes over phase masks are a Walsh-Hadamard transform of
//! pair signs compressed onto the GF(2) span of the pair representatives.
//! That collapses the wave function to a histogram of numerator values,
//! which is all the participation measures need.

use crate::bits::dot;
use crate::oracle::{check_width, PermutationOracle};
use crate::pauli::PauliString;
use crate::{Error, Result};
use std::collections::BTreeMap;

/// In-place Walsh-Hadamard transform; the length must be a power of two.
pub fn wht_i32(v: &mut [i32]) {
    debug_assert!(v.len().is_power_of_two());
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h <<= 1;
    }
}

/// Wave function of one input string, reduced to a histogram: numerator
/// `r` (amplitude `r / 2^n`) mapped to the number of output strings that
/// carry it. Zero amplitudes are not stored.
#[derive(Clone, Debug)]
pub struct AmplitudeHistogram {
    n: u32,
    counts: BTreeMap<i64, u64>,
    boxes: u64,
}

impl AmplitudeHistogram {
    fn insert(&mut self, r: i64, multiplicity: u64) {
        if r != 0 {
            *self.counts.entry(r).or_insert(0) += multiplicity;
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Numerator value to output-string count.
    pub fn counts(&self) -> &BTreeMap<i64, u64> {
        &self.counts
    }

    /// Number of distinct output flip masks with any support.
    pub fn box_count(&self) -> u64 {
        self.boxes
    }

    /// Number of output strings with nonzero amplitude.
    pub fn support(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Exact unitarity check: the squared numerators must sum to 4^n.
    pub fn is_normalized(&self) -> bool {
        let total: u128 = self
            .counts
            .iter()
            .map(|(&r, &m)| u128::from(m) * (r as i128 * r as i128) as u128)
            .sum();
        total == 1u128 << (2 * self.n)
    }

    /// Shannon participation entropy of the squared amplitudes. Uses
    /// `S = n ln 4 - 4^-n * sum m r^2 ln r^2`, which assumes the histogram
    /// is normalized.
    pub fn shannon(&self) -> f64 {
        let mut acc = 0.0;
        for (&r, &m) in &self.counts {
            let r2 = (r as f64) * (r as f64);
            acc += m as f64 * r2 * r2.ln();
        }
        let nln4 = f64::from(2 * self.n) * std::f64::consts::LN_2;
        nln4 - (2.0f64).powi(-2 * self.n as i32) * acc
    }

    /// Renyi participation entropy of order `q`; `q = 0` counts support and
    /// `q = 1` is the Shannon limit.
    pub fn renyi(&self, q: f64) -> f64 {
        if q == 0.0 {
            return (self.support() as f64).ln();
        }
        if q == 1.0 {
            return self.shannon();
        }
        let norm = -2.0 * self.n as f64 * std::f64::consts::LN_2;
        let mut p_q = 0.0f64;
        for (&r, &m) in &self.counts {
            let ln_p = ((r as f64) * (r as f64)).ln() + norm;
            p_q += m as f64 * (q * ln_p).exp();
        }
        p_q.ln() / (1.0 - q)
    }
}

fn accept_query(oracle: &impl PermutationOracle, alpha: &PauliString) -> Result<u32> {
    let n = oracle.n();
    check_width(n)?;
    if alpha.n != n {
        return Err(Error::WidthMismatch {
            left: alpha.n,
            right: n,
        });
    }
    Ok(n)
}

/// Computes the wave function histogram of `alpha` under the permutation.
///
/// Exhaustive over the 2^n basis states; `n` is capped at
/// [`crate::oracle::MAX_EXHAUSTIVE_BITS`].
pub fn string_amplitudes(
    oracle: &impl PermutationOracle,
    alpha: &PauliString,
) -> Result<AmplitudeHistogram> {
    let n = accept_query(oracle, alpha)?;
    let mut hist = AmplitudeHistogram {
        n,
        counts: BTreeMap::new(),
        boxes: 0,
    };
    if alpha.x_mask == 0 {
        hist.boxes = 1;
        for &r in &zsector_amplitudes(oracle, alpha.z_mask)? {
            hist.insert(i64::from(r), 1);
        }
        return Ok(hist);
    }

    let size: u64 = 1 << n;
    let ny_parity = alpha.stats().n_y & 1;
    // One packed entry per state pair: flip mask (box), representative,
    // and sign bit, ordered so a sort groups boxes together.
    let mut entries: Vec<u64> = Vec::with_capacity(1 << (n - 1));
    for x in 0..size {
        let w = oracle.inverse(x);
        let y = oracle.forward(w ^ alpha.x_mask);
        if x < y {
            let eps = dot(alpha.z_mask, w); // 1 encodes a negative sign
            entries.push((x ^ y) << (n + 1) | x << 1 | u64::from(eps));
        }
    }
    entries.sort_unstable();

    let mut tracker = Gf2Tracker::new();
    let mut coords: Vec<(u32, i32)> = Vec::new();
    let mut acc: Vec<i32> = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        let b = entries[i] >> (n + 1);
        let mut j = i;
        tracker.clear();
        coords.clear();
        let coeff_b = tracker.insert(b);
        debug_assert_eq!(coeff_b, 1);
        while j < entries.len() && entries[j] >> (n + 1) == b {
            let x = (entries[j] >> 1) & ((1 << n) - 1);
            let sign = if entries[j] & 1 == 0 { 1 } else { -1 };
            coords.push((tracker.insert(x), sign));
            j += 1;
        }
        let rank = tracker.rank();
        acc.clear();
        acc.resize(1 << rank, 0);
        for &(t, sign) in &coords {
            acc[t as usize] += sign;
        }
        wht_i32(&mut acc);
        let multiplicity = 1u64 << (n - rank);
        let mut any = false;
        for (u, &f) in acc.iter().enumerate() {
            if u as u32 & 1 == ny_parity && f != 0 {
                hist.insert(2 * i64::from(f), multiplicity);
                any = true;
            }
        }
        if any {
            hist.boxes += 1;
        }
        i = j;
    }
    Ok(hist)
}

/// Dense wave function over phase-only output strings for a phase-only
/// input string: entry `bz` holds the numerator of the amplitude on the
/// output string with flip mask 0 and phase mask `bz`.
pub fn zsector_amplitudes(oracle: &impl PermutationOracle, z_mask: u64) -> Result<Vec<i32>> {
    let n = oracle.n();
    check_width(n)?;
    if n < 64 && z_mask >> n != 0 {
        return Err(Error::InvalidParameter {
            name: "z_mask",
            reason: format!("mask {z_mask:#x} has bits outside the {n}-bit register"),
        });
    }
    let size: u64 = 1 << n;
    let mut v: Vec<i32> = (0..size)
        .map(|x| if dot(z_mask, oracle.inverse(x)) == 0 { 1 } else { -1 })
        .collect();
    wht_i32(&mut v);
    Ok(v)
}

/// GF(2) elimination that tracks, for every inserted vector, its coordinates
/// over a virtual basis made of the independent vectors in insertion order.
struct Gf2Tracker {
    lead: [(u64, u32); 64],
    occupied: Vec<u8>,
    rank: u32,
}

impl Gf2Tracker {
    fn new() -> Self {
        Gf2Tracker {
            lead: [(0, 0); 64],
            occupied: Vec::with_capacity(64),
            rank: 0,
        }
    }

    fn clear(&mut self) {
        for &h in &self.occupied {
            self.lead[usize::from(h)] = (0, 0);
        }
        self.occupied.clear();
        self.rank = 0;
    }

    fn rank(&self) -> u32 {
        self.rank
    }

    /// Returns the coordinate word of `v` over the virtual basis, extending
    /// the basis when `v` is independent of everything seen so far.
    fn insert(&mut self, mut v: u64) -> u32 {
        let mut c = 0u32;
        while v != 0 {
            let h = 63 - v.leading_zeros();
            let (mask, coeff) = self.lead[h as usize];
            if mask == 0 {
                let e = 1u32 << self.rank;
                self.lead[h as usize] = (v, c ^ e);
                self.occupied.push(h as u8);
                self.rank += 1;
                return e;
            }
            v ^= mask;
            c ^= coeff;
        }
        c
    }
}

/// Fully materialized wave functions of one input string, for small `n`:
/// entry `(bx << n) | bz` is the numerator of the output string `(bx, bz)`.
pub struct DenseAmplitudes {
    pub n: u32,
    pub num: Vec<i64>,
}

impl DenseAmplitudes {
    pub fn at(&self, bx: u64, bz: u64) -> i64 {
        self.num[((bx << self.n) | bz) as usize]
    }

    pub fn histogram(&self) -> AmplitudeHistogram {
        let mut hist = AmplitudeHistogram {
            n: self.n,
            counts: BTreeMap::new(),
            boxes: 0,
        };
        let size = 1usize << self.n;
        for bx in 0..size {
            let row = &self.num[bx * size..(bx + 1) * size];
            if row.iter().any(|&r| r != 0) {
                hist.boxes += 1;
            }
            for &r in row {
                hist.insert(r, 1);
            }
        }
        hist
    }
}

/// Reference implementation by direct summation over basis states, kept
/// deliberately free of the pairing and transform tricks. Quadratic in the
/// state space, so `n` is capped at 8.
pub fn string_amplitudes_naive(
    oracle: &impl PermutationOracle,
    alpha: &PauliString,
) -> Result<DenseAmplitudes> {
    let n = accept_query(oracle, alpha)?;
    if n > 8 {
        return Err(Error::WidthOutOfRange { n, min: 1, max: 8 });
    }
    let size: u64 = 1 << n;
    let mut num = vec![0i64; 1 << (2 * n)];
    for x in 0..size {
        let w = oracle.inverse(x);
        let y = oracle.forward(w ^ alpha.x_mask);
        let bx = x ^ y;
        let s: i64 = if dot(alpha.z_mask, w) == 0 { 1 } else { -1 };
        for bz in 0..size {
            let t = if dot(bz, x) == 0 { s } else { -s };
            num[((bx << n) | bz) as usize] += t;
        }
    }
    Ok(DenseAmplitudes { n, num })
}

/// One exact amplitude numerator, by direct summation. Linear in the state
/// space, usable up to [`crate::oracle::MAX_EXHAUSTIVE_BITS`].
pub fn amplitude_one(
    oracle: &impl PermutationOracle,
    alpha: &PauliString,
    beta: &PauliString,
) -> Result<i64> {
    let n = accept_query(oracle, alpha)?;
    if beta.n != n {
        return Err(Error::WidthMismatch {
            left: beta.n,
            right: n,
        });
    }
    let size: u64 = 1 << n;
    let mut acc = 0i64;
    for x in 0..size {
        let w = oracle.inverse(x);
        let y = oracle.forward(w ^ alpha.x_mask);
        if x ^ y == beta.x_mask {
            let parity = dot(alpha.z_mask, w) ^ dot(beta.z_mask, x);
            acc += if parity == 0 { 1 } else { -1 };
        }
    }
    Ok(acc)
}
