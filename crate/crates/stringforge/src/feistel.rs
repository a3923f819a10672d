//! Balanced Feistel networks with pseudorandom round functions.
//!
//! The word splits into a low half `L` (bits `0..n/2`) and a high half `R`
//! (bits `n/2..n`). Round `k` maps `(L, R)` to `(R, L ^ f_k(R))`, so the
//! inverse recovers `R_{k-1} = L_k` and `L_{k-1} = R_k ^ f_k(L_k)`. Each
//! `f_k` is a fresh uniformly random function of the half-width input,
//! realized as a counter-based pseudorandom function of `(seed, k, input)`
//! and memoized into a table the first time a round is touched (the table is
//! filled from the same function, so lazy initialization cannot change any
//! value).

use crate::bits::mask_low;
use crate::oracle::PermutationOracle;
use crate::rng::stream_rng;
use crate::{Error, Result};
use rand::RngCore;
use std::sync::OnceLock;

/// Widest half for which round tables are materialized.
const MEMO_HALF_BITS: u32 = 20;

pub struct FeistelCipher {
    n: u32,
    rounds: u32,
    seed: u64,
    tables: Vec<OnceLock<Vec<u64>>>,
}

impl FeistelCipher {
    /// `n` even, `2 <= n <= 64`.
    pub fn new(n: u32, rounds: u32, seed: u64) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::WidthOutOfRange { n, min: 2, max: 64 });
        }
        if n % 2 != 0 {
            return Err(Error::OddWidth { n });
        }
        Ok(FeistelCipher {
            n,
            rounds,
            seed,
            tables: (0..rounds).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn half(&self) -> u32 {
        self.n / 2
    }

    fn prf(&self, round: u32, input: u64) -> u64 {
        let mut rng = stream_rng(self.seed, &format!("feistel-round-{round}"), input);
        rng.next_u64() & mask_low(self.half())
    }

    /// `f_k(input)` for round index `k` in `0..rounds`.
    pub fn round_fn(&self, round: u32, input: u64) -> u64 {
        debug_assert!(round < self.rounds);
        let h = self.half();
        if h <= MEMO_HALF_BITS {
            let table = self.tables[round as usize].get_or_init(|| {
                (0..1u64 << h).map(|v| self.prf(round, v)).collect()
            });
            table[input as usize]
        } else {
            self.prf(round, input)
        }
    }

    pub fn encrypt(&self, x: u64) -> u64 {
        let h = self.half();
        let mask = mask_low(h);
        let mut l = x & mask;
        let mut r = (x >> h) & mask;
        for k in 0..self.rounds {
            let next_r = l ^ self.round_fn(k, r);
            l = r;
            r = next_r;
        }
        l | (r << h)
    }

    pub fn decrypt(&self, y: u64) -> u64 {
        let h = self.half();
        let mask = mask_low(h);
        let mut l = y & mask;
        let mut r = (y >> h) & mask;
        for k in (0..self.rounds).rev() {
            let prev_l = r ^ self.round_fn(k, l);
            r = l;
            l = prev_l;
        }
        l | (r << h)
    }
}

impl PermutationOracle for FeistelCipher {
    fn n(&self) -> u32 {
        self.n
    }
    fn forward(&self, x: u64) -> u64 {
        self.encrypt(x)
    }
    fn inverse(&self, x: u64) -> u64 {
        self.decrypt(x)
    }
}
