//! Reversible circuits of 3-bit gates, block ciphers, and their scrambling
//! behavior in the dual space of Pauli strings.
//!
//! A classical permutation `P` of the `2^n` basis states of `n` bits also acts
//! on quantum operators by conjugation. Expanding a conjugated Pauli string
//! over the string basis gives a real wave function whose `4^n` amplitudes are
//! exact dyadic rationals. This crate computes those wave functions exactly,
//! measures their spread through participation-ratio entropies, and compares
//! the results against closed-form equilibrium values for random permutations
//! and for Haar-random orthogonal and unitary matrices.
//!
//! The main pieces:
//!
//! * [`bits`], [`gate`], [`circuit`], [`feistel`]: `n`-bit words, 3-bit
//!   reversible gates drawn from the 40320 permutations of 8 items, layered
//!   circuit layouts (packed long-range, brickwall in 1 to 3 dimensions, and
//!   a two-stage profile), and balanced Feistel networks with pseudorandom
//!   round functions.
//! * [`pauli`], [`amplitudes`]: Pauli strings as mask pairs and the exact
//!   string-amplitude wave function of a conjugated string, with a naive
//!   reference sum and a fast path that exploits the involution structure of
//!   permutation conjugation.
//! * [`gatespace`], [`haar`]: the 64 by 64 transition matrix of a single
//!   3-bit gate acting on substrings, sector-resolved averages over the full
//!   gate set, and the classification of gates into linear, inflationary, and
//!   proliferation families. The same diagnostics run on sampled Haar 2-qubit
//!   matrices for comparison.
//! * [`otoc`]: out-of-time-order correlators of strings evaluated by basis
//!   state propagation, including the strict avalanche criterion, a chosen
//!   plaintext correlator attack on Feistel ciphers, avalanche distributions
//!   with collision diagnostics, and fitted decay rates of squared
//!   correlators.
//! * [`equilibrium`], [`meanfield`]: closed-form equilibrium entropies with
//!   their finite corrections for the permutation, orthogonal, and unitary
//!   ensembles, and mean-field density evolution for string weights.
//! * [`harness`]: reproducible experiment drivers that write CSV tables plus
//!   JSON metadata sidecars.
//!
//! Bit and mask conventions are fixed once in [`bits`] and used everywhere:
//! bit `i` of a word is the coefficient of `2^i`, and a 3-bit gate on lines
//! `(a, b, c)` permutes the packed value `4*x_a + 2*x_b + x_c`.

pub mod amplitudes;
pub mod bits;
pub mod circuit;
pub mod equilibrium;
mod error;
pub mod feistel;
pub mod gate;
pub mod gatespace;
pub mod haar;
pub mod harness;
pub mod meanfield;
pub mod oracle;
pub mod otoc;
pub mod pauli;
pub mod rng;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
