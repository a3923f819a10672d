//! Reversible 3-bit gates: the 40320 permutations of the 8 triple states.
//!
//! A gate stores the permutation `perm[v]` of packed values
//! `v = 4*x_a + 2*x_b + x_c` for its line triple `(a, b, c)`. Helpers expose
//! the same action in line order (line `k` of the triple at mask bit `k`),
//! which is the convention the string-space analysis uses.

use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Bit reversal of a packed 3-bit value, mapping line order to pack order.
const REV3: [u8; 8] = [0, 4, 2, 6, 1, 5, 3, 7];

/// A reversible gate on 3 bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gate3 {
    perm: [u8; 8],
}

impl Gate3 {
    pub const IDENTITY: Gate3 = Gate3 {
        perm: [0, 1, 2, 3, 4, 5, 6, 7],
    };

    /// Number of distinct gates: 8 factorial.
    pub const COUNT: u64 = 40320;

    pub fn new(perm: [u8; 8]) -> Result<Self> {
        let mut seen = [false; 8];
        for &p in &perm {
            if p > 7 || seen[p as usize] {
                return Err(Error::NotAPermutation { len: 8 });
            }
            seen[p as usize] = true;
        }
        Ok(Gate3 { perm })
    }

    /// Uniformly random gate.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut perm = [0u8, 1, 2, 3, 4, 5, 6, 7];
        perm.shuffle(rng);
        Gate3 { perm }
    }

    pub fn perm(&self) -> &[u8; 8] {
        &self.perm
    }

    /// Image of the packed value `v = 4*x_a + 2*x_b + x_c`.
    #[inline]
    pub fn apply_packed(&self, v: u8) -> u8 {
        self.perm[v as usize]
    }

    /// Image of a line-ordered triple state (bit `k` of `u` is line `k`).
    #[inline]
    pub fn apply_lines(&self, u: u8) -> u8 {
        REV3[self.perm[REV3[u as usize] as usize] as usize]
    }

    /// Builds the gate whose line-ordered action is `f`. Panics if `f` is
    /// not a permutation of `0..8`.
    pub fn from_lines_fn(f: impl Fn(u8) -> u8) -> Gate3 {
        let mut perm = [0u8; 8];
        for v in 0..8usize {
            perm[v] = REV3[f(REV3[v]) as usize];
        }
        Gate3::new(perm).expect("line action must be a permutation")
    }

    pub fn inverse(&self) -> Gate3 {
        let mut inv = [0u8; 8];
        for (v, &p) in self.perm.iter().enumerate() {
            inv[p as usize] = v as u8;
        }
        Gate3 { perm: inv }
    }

    /// `self` after `first`: `(self * first)(v) = self(first(v))`.
    pub fn compose(&self, first: &Gate3) -> Gate3 {
        let mut perm = [0u8; 8];
        for v in 0..8 {
            perm[v] = self.perm[first.perm[v] as usize];
        }
        Gate3 { perm }
    }

    /// Formats one gate-list line, `idx: p0 p1 p2 p3 p4 p5 p6 p7`.
    pub fn list_line(&self, idx: usize) -> String {
        let body: Vec<String> = self.perm.iter().map(|p| p.to_string()).collect();
        format!("{}: {}", idx, body.join(" "))
    }

    /// Parses a gate-list line; the leading `idx:` prefix is optional.
    pub fn parse_list_line(line: &str) -> Result<Gate3> {
        let body = match line.split_once(':') {
            Some((_, rest)) => rest,
            None => line,
        };
        let mut perm = [0u8; 8];
        let mut count = 0;
        for tok in body.split_whitespace() {
            if count == 8 {
                return Err(Error::NotAPermutation { len: 8 });
            }
            perm[count] = tok
                .parse::<u8>()
                .map_err(|_| Error::NotAPermutation { len: 8 })?;
            count += 1;
        }
        if count != 8 {
            return Err(Error::NotAPermutation { len: 8 });
        }
        Gate3::new(perm)
    }
}

impl std::fmt::Debug for Gate3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Gate3{:?}", self.perm)
    }
}

/// Visits all 40320 gates in lexicographic order of their permutation array.
pub fn for_each_gate(mut f: impl FnMut(Gate3)) {
    let mut perm = [0u8, 1, 2, 3, 4, 5, 6, 7];
    loop {
        f(Gate3 { perm });
        if !next_permutation(&mut perm) {
            break;
        }
    }
}

/// All 40320 gates in lexicographic order.
pub fn all_gates() -> Vec<Gate3> {
    let mut out = Vec::with_capacity(40320);
    for_each_gate(|g| out.push(g));
    out
}

fn next_permutation(p: &mut [u8; 8]) -> bool {
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
