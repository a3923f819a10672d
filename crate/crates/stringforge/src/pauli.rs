//! Pauli strings as mask pairs.
//!
//! A string is written with every x factor to the left of every z factor, so
//! on a basis state the z mask reads bits first and the x mask then flips:
//! `S |x> = (-1)^{z.x} |x ^ xmask>`. The adjoint differs by the sign
//! `(-1)^{n_y}` where `n_y` counts positions holding both an x and a z.

use crate::bits::{dot, sign};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// A Pauli string on `n <= 64` bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    pub n: u32,
    pub x_mask: u64,
    pub z_mask: u64,
}

/// Derived facts about one string.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StringStats {
    /// Sites carrying any factor, `popcount(x | z)`.
    pub weight: u32,
    /// Sites carrying both factors, `popcount(x & z)`.
    pub n_y: u32,
    /// `n_y mod 2`; conserved by permutation conjugation.
    pub parity: u32,
}

impl PauliString {
    pub fn new(n: u32, x_mask: u64, z_mask: u64) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::WidthOutOfRange { n, min: 1, max: 64 });
        }
        let allowed = crate::bits::mask_low(n);
        if x_mask & !allowed != 0 || z_mask & !allowed != 0 {
            return Err(Error::InvalidParameter {
                name: "mask",
                reason: format!("mask wider than n={n} bits"),
            });
        }
        Ok(PauliString { n, x_mask, z_mask })
    }

    pub fn identity(n: u32) -> Self {
        PauliString {
            n,
            x_mask: 0,
            z_mask: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.x_mask == 0 && self.z_mask == 0
    }

    pub fn stats(&self) -> StringStats {
        StringStats {
            weight: (self.x_mask | self.z_mask).count_ones(),
            n_y: (self.x_mask & self.z_mask).count_ones(),
            parity: dot(self.x_mask, self.z_mask),
        }
    }

    /// Applies the string to a basis state: z factors read, x factors flip.
    #[inline]
    pub fn act_on_basis(&self, x: u64) -> (u64, i64) {
        (x ^ self.x_mask, sign(self.z_mask, x))
    }

    /// Applies the adjoint string: x factors flip, then z factors read.
    #[inline]
    pub fn act_on_basis_dagger(&self, x: u64) -> (u64, i64) {
        let flipped = x ^ self.x_mask;
        (flipped, sign(self.z_mask, flipped))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x:{:x},z:{:x}", self.x_mask, self.z_mask)
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString(n={}, {})", self.n, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_acts_trivially() {
        let s = PauliString::identity(5);
        for x in 0..32 {
            assert_eq!(s.act_on_basis(x), (x, 1));
        }
    }

    #[test]
    fn z_reads_before_x_flips() {
        // Both masks on bit 2; the state has bit 2 set.
        let s = PauliString::new(3, 0b100, 0b100).unwrap();
        assert_eq!(s.act_on_basis(0b100), (0, -1));
        // The adjoint reads after the flip, so the sign differs by (-1)^{n_y}.
        assert_eq!(s.act_on_basis_dagger(0b100), (0, 1));
    }

    #[test]
    fn adjoint_sign_is_ny_parity() {
        let cases = [(0b0110u64, 0b0011u64), (0b1111, 0b0101), (0b1000, 0b0001)];
        for (xm, zm) in cases {
            let s = PauliString::new(4, xm, zm).unwrap();
            let ny_sign = 1 - 2 * i64::from(s.stats().parity);
            for x in 0..16 {
                let (y, a) = s.act_on_basis(x);
                let (y_dag, b) = s.act_on_basis_dagger(x);
                assert_eq!(y, y_dag);
                assert_eq!(b, ny_sign * a);
            }
        }
    }

    #[test]
    fn stats_count_sites() {
        let s = PauliString::new(6, 0b101100, 0b100110).unwrap();
        let st = s.stats();
        assert_eq!(st.weight, 4);
        assert_eq!(st.n_y, 2);
        assert_eq!(st.parity, 0);
    }

    #[test]
    fn renders_as_hex_mask_pair() {
        let s = PauliString::new(16, 0x8001, 0x0010).unwrap();
        assert_eq!(s.to_string(), "x:8001,z:10");
    }

    #[test]
    fn rejects_wide_masks() {
        assert!(PauliString::new(4, 0x10, 0).is_err());
        assert!(PauliString::new(0, 0, 0).is_err());
        assert!(PauliString::new(65, 0, 0).is_err());
    }
}
