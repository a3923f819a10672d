//! Late-time statistics of string wave functions under random permutations.
//!
//! Once a reversible circuit scrambles, the basis-state pairing behind each
//! output flip mask is as random as it can be: box occupations become
//! Poisson with mean 1/2, so the integer wave-function values (half the
//! stored numerators) follow a Skellam(1/4, 1/4) law. All participation
//! entropies then sit a fixed, n-independent distance below the n*ln(4)
//! ceiling, and those offsets have closed forms.

use statrs::function::gamma::{digamma, ln_gamma};

/// Terms kept in the Bessel series; the tail beyond 40 terms is below
/// f64 resolution for every argument used here.
const SERIES_TERMS: u32 = 40;

/// Probability that an equilibrated box slot holds the integer value `r`
/// (Skellam(1/4, 1/4), i.e. `e^(-1/2) I_|r|(1/2)`).
pub fn slot_pmf(r: i64) -> f64 {
    let nu = r.unsigned_abs() as u32;
    // I_nu(1/2) = sum_k (1/4)^(nu + 2k) / (k! (nu + k)!)
    let mut term = 0.25f64.powi(nu as i32) / factorial(nu);
    let mut sum = term;
    for k in 1..SERIES_TERMS {
        term *= 0.0625 / (f64::from(k) * f64::from(nu + k));
        sum += term;
    }
    (-0.5f64).exp() * sum
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Number of output strings allowed by the pairing parity constraint,
/// i.e. the slot count behind [`slot_pmf`].
pub fn allowed_slots(n: u32) -> u64 {
    ((1u64 << n) - 1) << (n - 1)
}

/// `2q`-th moment of the slot value, `sum_r r^(2q) pmf(r)`; the `r = 0`
/// term vanishes identically.
pub fn slot_moment(two_q: f64) -> f64 {
    let mut acc = 0.0;
    for r in 1..=60i64 {
        acc += 2.0 * (r as f64).powf(two_q) * slot_pmf(r);
    }
    acc
}

/// Reference ensembles for the equilibrium entropy offsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ensemble {
    /// Random reversible circuits and random permutations.
    Permutation,
    /// Haar-random orthogonal transformations.
    Orthogonal,
    /// Haar-random unitary transformations.
    Unitary,
}

impl Ensemble {
    /// Offset of the order-`q` participation entropy below `n ln 4` at
    /// equilibrium. Finite for every `q >= 0`; `q = 1` takes the analytic
    /// limit.
    pub fn entropy_offset(self, q: f64) -> f64 {
        match self {
            Ensemble::Permutation => {
                if (q - 1.0).abs() < 1e-12 {
                    // Limit of ((2q-1) ln2 + ln M_2q) / (q-1).
                    let mut acc = 0.0;
                    for r in 1..=60i64 {
                        let rf = r as f64;
                        acc += slot_pmf(r) * rf * rf * (4.0 * rf * rf).ln();
                    }
                    4.0 * acc
                } else {
                    ((2.0 * q - 1.0) * std::f64::consts::LN_2 + slot_moment(2.0 * q).ln())
                        / (q - 1.0)
                }
            }
            Ensemble::Orthogonal => 2.0 * std::f64::consts::LN_2 + gaussian_core(q),
            Ensemble::Unitary => std::f64::consts::LN_2 + gaussian_core(q),
        }
    }

    /// Equilibrium participation entropy at width `n`.
    pub fn equilibrium_entropy(self, n: u32, q: f64) -> f64 {
        f64::from(2 * n) * std::f64::consts::LN_2 - self.entropy_offset(q)
    }
}

/// `ln(Gamma(q + 1/2) / Gamma(3/2)) / (q - 1)` with its `q -> 1` limit,
/// the moment factor shared by the two Gaussian ensembles.
fn gaussian_core(q: f64) -> f64 {
    if (q - 1.0).abs() < 1e-12 {
        digamma(1.5)
    } else {
        (ln_gamma(q + 0.5) - ln_gamma(1.5)) / (q - 1.0)
    }
}

/// How far a measured entropy sits below its equilibrium value.
pub fn residual(ensemble: Ensemble, n: u32, q: f64, measured: f64) -> f64 {
    ensemble.equilibrium_entropy(n, q) - measured
}
