//! Bijections of `n`-bit words exposed as forward and inverse oracles.
//!
//! Exhaustive string-space analysis walks every basis state, so oracles here
//! work on `u64` states and are meant for `n` up to [`MAX_EXHAUSTIVE_BITS`].

use crate::rng::stream_rng;
use crate::{Error, Result};
use rand::Rng;

/// Widest `n` the exhaustive routines accept; memory grows as `2^n`.
pub const MAX_EXHAUSTIVE_BITS: u32 = 26;

/// A permutation of the `2^n` states of `n` bits.
pub trait PermutationOracle: Sync {
    fn n(&self) -> u32;
    fn forward(&self, x: u64) -> u64;
    fn inverse(&self, x: u64) -> u64;
}

/// The same permutation run backwards.
pub struct Reversed<'a, O: PermutationOracle + ?Sized>(pub &'a O);

impl<O: PermutationOracle + ?Sized> PermutationOracle for Reversed<'_, O> {
    fn n(&self) -> u32 {
        self.0.n()
    }
    fn forward(&self, x: u64) -> u64 {
        self.0.inverse(x)
    }
    fn inverse(&self, x: u64) -> u64 {
        self.0.forward(x)
    }
}

/// A permutation held as explicit lookup tables.
pub struct TablePermutation {
    n: u32,
    fwd: Vec<u32>,
    inv: Vec<u32>,
}

impl TablePermutation {
    /// Validates that `fwd` is a bijection on `0..2^n` and builds the inverse.
    pub fn from_table(n: u32, fwd: Vec<u32>) -> Result<Self> {
        check_width(n)?;
        let size = 1usize << n;
        if fwd.len() != size {
            return Err(Error::NotAPermutation { len: fwd.len() });
        }
        let mut inv = vec![u32::MAX; size];
        for (x, &y) in fwd.iter().enumerate() {
            if y as usize >= size || inv[y as usize] != u32::MAX {
                return Err(Error::NotAPermutation { len: size });
            }
            inv[y as usize] = x as u32;
        }
        Ok(TablePermutation { n, fwd, inv })
    }

    /// Tabulates any oracle (2^n forward calls).
    pub fn from_oracle<O: PermutationOracle + ?Sized>(oracle: &O) -> Result<Self> {
        let n = oracle.n();
        check_width(n)?;
        let fwd: Vec<u32> = (0..1u64 << n).map(|x| oracle.forward(x) as u32).collect();
        TablePermutation::from_table(n, fwd)
    }

    /// A uniformly random permutation via Fisher-Yates.
    pub fn random(n: u32, master_seed: u64, index: u64) -> Result<Self> {
        check_width(n)?;
        let mut rng = stream_rng(master_seed, "table-permutation", index);
        let size = 1usize << n;
        let mut fwd: Vec<u32> = (0..size as u32).collect();
        for i in (1..size).rev() {
            let j = rng.gen_range(0..=i);
            fwd.swap(i, j);
        }
        TablePermutation::from_table(n, fwd)
    }

    pub fn table(&self) -> &[u32] {
        &self.fwd
    }
}

impl PermutationOracle for TablePermutation {
    fn n(&self) -> u32 {
        self.n
    }
    #[inline]
    fn forward(&self, x: u64) -> u64 {
        self.fwd[x as usize] as u64
    }
    #[inline]
    fn inverse(&self, x: u64) -> u64 {
        self.inv[x as usize] as u64
    }
}

pub(crate) fn check_width(n: u32) -> Result<()> {
    if n == 0 || n > MAX_EXHAUSTIVE_BITS {
        return Err(Error::WidthOutOfRange {
            n,
            min: 1,
            max: MAX_EXHAUSTIVE_BITS,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_table_rejects_duplicates() {
        assert!(TablePermutation::from_table(2, vec![0, 1, 1, 3]).is_err());
        assert!(TablePermutation::from_table(2, vec![0, 1, 2]).is_err());
        assert!(TablePermutation::from_table(2, vec![0, 1, 2, 4]).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let p = TablePermutation::random(8, 11, 0).unwrap();
        for x in 0..256u64 {
            assert_eq!(p.inverse(p.forward(x)), x);
        }
    }

    #[test]
    fn reversed_swaps_directions() {
        let p = TablePermutation::random(6, 3, 5).unwrap();
        let r = Reversed(&p);
        for x in 0..64u64 {
            assert_eq!(r.forward(x), p.inverse(x));
            assert_eq!(r.inverse(x), p.forward(x));
        }
    }

    #[test]
    fn random_is_seed_deterministic() {
        let a = TablePermutation::random(7, 42, 3).unwrap();
        let b = TablePermutation::random(7, 42, 3).unwrap();
        let c = TablePermutation::random(7, 42, 4).unwrap();
        assert_eq!(a.table(), b.table());
        assert_ne!(a.table(), c.table());
    }
}
