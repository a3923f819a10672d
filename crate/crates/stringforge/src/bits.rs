//! Words of `n` bits with the crate-wide bit convention.
//!
//! Bit `i` of a word is the coefficient of `2^i`, so the word written as a
//! bit string `x_0 x_1 .. x_{n-1}` lists bits from the numerically least
//! significant upward. Exhaustive routines keep states in a plain `u64`
//! (they are limited to small `n` anyway); [`BitWord`] carries the same
//! convention to arbitrary width for sampled circuit evolution.

use rand::Rng;
use std::fmt;

/// Parity of the bitwise AND of two masks, as 0 or 1.
#[inline]
pub fn dot(a: u64, b: u64) -> u32 {
    (a & b).count_ones() & 1
}

/// `(-1)^{a . b}` as `i64`.
#[inline]
pub fn sign(a: u64, b: u64) -> i64 {
    1 - 2 * i64::from(dot(a, b))
}

/// An `n`-bit word stored in 64-bit limbs, bit `i` at `words[i / 64]`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitWord {
    n: u32,
    words: Vec<u64>,
}

impl BitWord {
    pub fn zeros(n: u32) -> Self {
        BitWord {
            n,
            words: vec![0; n.div_ceil(64) as usize],
        }
    }

    /// Builds from the low `n` bits of `x`. Requires `n <= 64`.
    pub fn from_u64(x: u64, n: u32) -> Self {
        assert!(n <= 64, "from_u64 needs n <= 64");
        let mut w = BitWord::zeros(n);
        if n > 0 {
            w.words[0] = x & mask_low(n);
        }
        w
    }

    /// Uniformly random word of width `n`.
    pub fn random<R: Rng>(n: u32, rng: &mut R) -> Self {
        let mut w = BitWord::zeros(n);
        for limb in w.words.iter_mut() {
            *limb = rng.gen();
        }
        w.trim();
        w
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    #[inline]
    pub fn bit(&self, i: u32) -> u64 {
        debug_assert!(i < self.n);
        (self.words[(i / 64) as usize] >> (i % 64)) & 1
    }

    #[inline]
    pub fn set_bit(&mut self, i: u32, v: u64) {
        debug_assert!(i < self.n);
        let limb = &mut self.words[(i / 64) as usize];
        *limb = (*limb & !(1 << (i % 64))) | ((v & 1) << (i % 64));
    }

    #[inline]
    pub fn flip_bit(&mut self, i: u32) {
        debug_assert!(i < self.n);
        self.words[(i / 64) as usize] ^= 1 << (i % 64);
    }

    pub fn xor_assign(&mut self, other: &BitWord) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Popcount of `self ^ other` without allocating.
    pub fn hamming(&self, other: &BitWord) -> u32 {
        debug_assert_eq!(self.n, other.n);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    /// The word as a `u64`; requires `n <= 64`.
    pub fn to_u64(&self) -> u64 {
        assert!(self.n <= 64);
        self.words.first().copied().unwrap_or(0)
    }

    fn trim(&mut self) {
        let used = self.n % 64;
        if used != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= mask_low(used);
            }
        }
    }
}

impl fmt::Debug for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            write!(f, "{}", self.bit(i))?;
        }
        Ok(())
    }
}

/// Mask with the low `n` bits set; `n <= 64`.
#[inline]
pub fn mask_low(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_i_is_coefficient_of_two_to_i() {
        let w = BitWord::from_u64(0b1101, 6);
        assert_eq!(w.bit(0), 1);
        assert_eq!(w.bit(1), 0);
        assert_eq!(w.bit(2), 1);
        assert_eq!(w.bit(3), 1);
        assert_eq!(w.bit(4), 0);
        assert_eq!(format!("{w:?}"), "101100");
    }

    #[test]
    fn wide_words_round_trip_bits() {
        let mut w = BitWord::zeros(200);
        w.set_bit(0, 1);
        w.set_bit(63, 1);
        w.set_bit(64, 1);
        w.set_bit(199, 1);
        assert_eq!(w.popcount(), 4);
        w.flip_bit(64);
        assert_eq!(w.popcount(), 3);
        assert_eq!(w.bit(63), 1);
        assert_eq!(w.bit(64), 0);
    }

    #[test]
    fn dot_and_sign_agree() {
        assert_eq!(dot(0b101, 0b100), 1);
        assert_eq!(dot(0b101, 0b111), 0);
        assert_eq!(sign(0b101, 0b100), -1);
        assert_eq!(sign(0b101, 0b111), 1);
    }
}
