//! Haar-sampled two-qubit gates as a quantum yardstick for the classical
//! gate diagnostics.
//!
//! A two-qubit gate acts on 4 basis states and carries 16 Pauli strings.
//! Sampling orthogonal or unitary gates from the Haar measure and averaging
//! their string-transition weights gives the continuous-gate analogue of the
//! 3-bit permutation-gate statistics, with one complication: transition
//! weights are no longer dyadic rationals, so "nonzero" needs a threshold.

use crate::rng::stream_rng;
use num_complex::Complex64;
use rand::distributions::Distribution;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::Normal;

/// Number of Pauli strings on two qubits.
pub const STRINGS2: usize = 16;

/// Default cutoff on `|t|^2` below which a transition counts as absent.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// Packs a two-qubit string `(x, z)` into `0..16` as `x * 4 + z`.
pub fn string2_index(x: u64, z: u64) -> usize {
    ((x & 3) << 2 | (z & 3)) as usize
}

/// Inverse of [`string2_index`].
pub fn index2_string(idx: usize) -> (u64, u64) {
    ((idx as u64 >> 2) & 3, idx as u64 & 3)
}

/// Coarse classes of two-qubit strings by the parity of sites carrying both
/// an x and a z factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sector2 {
    Identity,
    /// Odd count of doubled sites; 6 strings.
    Odd,
    /// Even count, excluding the identity; 9 strings.
    Even,
}

pub fn sector2_of(idx: usize) -> Sector2 {
    let (x, z) = index2_string(idx);
    if x == 0 && z == 0 {
        Sector2::Identity
    } else if (x & z).count_ones() % 2 == 1 {
        Sector2::Odd
    } else {
        Sector2::Even
    }
}

/// Matrix ensemble to draw gates from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaussianClass {
    /// Real orthogonal 4x4 gates.
    Orthogonal,
    /// Complex unitary 4x4 gates.
    Unitary,
}

impl GaussianClass {
    pub fn tag(&self) -> &'static str {
        match self {
            GaussianClass::Orthogonal => "o4",
            GaussianClass::Unitary => "u4",
        }
    }

    /// One Haar-distributed gate: a Gaussian matrix orthonormalized by
    /// modified Gram-Schmidt. Forcing each pivot positive picks the unique
    /// factorization whose orthogonal part is Haar-distributed.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> [[Complex64; 4]; 4] {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let draw = |rng: &mut R| match self {
            GaussianClass::Orthogonal => Complex64::new(normal.sample(rng), 0.0),
            GaussianClass::Unitary => {
                Complex64::new(normal.sample(rng), normal.sample(rng))
            }
        };
        let mut cols = [[Complex64::ZERO; 4]; 4];
        for col in cols.iter_mut() {
            for entry in col.iter_mut() {
                *entry = draw(rng);
            }
        }
        for j in 0..4 {
            for i in 0..j {
                let proj: Complex64 = (0..4).map(|r| cols[i][r].conj() * cols[j][r]).sum();
                for r in 0..4 {
                    let prev = cols[i][r];
                    cols[j][r] -= proj * prev;
                }
            }
            let norm = (0..4).map(|r| cols[j][r].norm_sqr()).sum::<f64>().sqrt();
            for r in 0..4 {
                cols[j][r] /= norm;
            }
        }
        // Transpose from column-major scratch back to row indexing.
        let mut g = [[Complex64::ZERO; 4]; 4];
        for (j, col) in cols.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                g[r][j] = v;
            }
        }
        g
    }
}

/// Squared string-transition weights of one gate.
///
/// Entry `[to][from]` is `|t|^2` with `t = tr(g^dag S_to g S_from^dag) / 4`:
/// the weight that conjugation through the gate moves string `from` onto
/// string `to`. Every row and column sums to 1.
pub fn squared_transitions(g: &[[Complex64; 4]; 4]) -> [[f64; STRINGS2]; STRINGS2] {
    // m[to] = g^dag S_to g, computed once per destination string.
    let mut table = [[0.0; STRINGS2]; STRINGS2];
    for to in 0..STRINGS2 {
        let (tx, tz) = index2_string(to);
        let mut m = [[Complex64::ZERO; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = Complex64::ZERO;
                for l in 0..4u64 {
                    let sign = if (tz & l).count_ones() % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    };
                    acc += g[(l ^ tx) as usize][i].conj() * g[l as usize][j] * sign;
                }
                m[i][j] = acc;
            }
        }
        for from in 0..STRINGS2 {
            let (fx, fz) = index2_string(from);
            let mut t = Complex64::ZERO;
            for j in 0..4u64 {
                let sign = if (fz & j).count_ones() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                t += m[(j ^ fx) as usize][j as usize] * sign;
            }
            table[to][from] = (t / 4.0).norm_sqr();
        }
    }
    table
}

/// Ensemble-averaged transition statistics over Haar samples.
#[derive(Clone)]
pub struct HaarAverages {
    pub class: GaussianClass,
    pub samples: u64,
    /// Cutoff used for support counting.
    pub threshold: f64,
    /// Sum over samples of `|t|^2`, per cell.
    pub sum_sq: Vec<f64>,
    /// Samples with `|t|^2` above threshold, per cell.
    pub present: Vec<u64>,
    /// Sum over samples of each column's Shannon entropy.
    pub col_entropy: [f64; STRINGS2],
}

impl HaarAverages {
    fn empty(class: GaussianClass, threshold: f64) -> Self {
        HaarAverages {
            class,
            samples: 0,
            threshold,
            sum_sq: vec![0.0; STRINGS2 * STRINGS2],
            present: vec![0; STRINGS2 * STRINGS2],
            col_entropy: [0.0; STRINGS2],
        }
    }

    fn absorb(&mut self, table: &[[f64; STRINGS2]; STRINGS2]) {
        self.samples += 1;
        for col in 0..STRINGS2 {
            let mut entropy = 0.0;
            for row in 0..STRINGS2 {
                let w = table[row][col];
                let cell = row * STRINGS2 + col;
                self.sum_sq[cell] += w;
                if w > self.threshold {
                    self.present[cell] += 1;
                }
                if w > 0.0 {
                    entropy -= w * w.ln();
                }
            }
            self.col_entropy[col] += entropy;
        }
    }

    fn merge(mut self, other: HaarAverages) -> HaarAverages {
        self.samples += other.samples;
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        for (a, b) in self.present.iter_mut().zip(&other.present) {
            *a += b;
        }
        for (a, b) in self.col_entropy.iter_mut().zip(&other.col_entropy) {
            *a += b;
        }
        self
    }

    /// Mean number of strings a column reaches (the q→0 participation).
    pub fn column_support(&self, col: usize) -> f64 {
        (0..STRINGS2)
            .map(|row| self.present[row * STRINGS2 + col])
            .sum::<u64>() as f64
            / self.samples as f64
    }

    /// Mean total squared weight of a column; 1 up to roundoff.
    pub fn column_weight(&self, col: usize) -> f64 {
        (0..STRINGS2)
            .map(|row| self.sum_sq[row * STRINGS2 + col])
            .sum::<f64>()
            / self.samples as f64
    }

    /// Mean Shannon entropy of a column's squared weights.
    pub fn column_entropy(&self, col: usize) -> f64 {
        self.col_entropy[col] / self.samples as f64
    }

    /// Averages a per-column statistic over the columns of one sector.
    pub fn sector_mean(&self, sector: Sector2, stat: impl Fn(&Self, usize) -> f64) -> f64 {
        let cols: Vec<usize> = (0..STRINGS2).filter(|&c| sector2_of(c) == sector).collect();
        cols.iter().map(|&c| stat(self, c)).sum::<f64>() / cols.len() as f64
    }
}

const HAAR_CHUNK: u64 = 512;

/// Draws `samples` Haar gates and accumulates their transition statistics.
pub fn haar_averages(
    class: GaussianClass,
    samples: u64,
    seed: u64,
    threshold: f64,
) -> HaarAverages {
    let chunks = samples.div_ceil(HAAR_CHUNK);
    (0..chunks)
        .into_par_iter()
        .fold(
            || HaarAverages::empty(class, threshold),
            |mut acc, c| {
                let mut rng = stream_rng(seed, "haar-samples", c);
                let take = (samples - c * HAAR_CHUNK).min(HAAR_CHUNK);
                for _ in 0..take {
                    let g = class.sample(&mut rng);
                    acc.absorb(&squared_transitions(&g));
                }
                acc
            },
        )
        .reduce(
            || HaarAverages::empty(class, threshold),
            HaarAverages::merge,
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unitarity_defect(g: &[[Complex64; 4]; 4]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let dot: Complex64 = (0..4).map(|k| g[k][i].conj() * g[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).norm());
            }
        }
        worst
    }

    #[test]
    fn samples_are_orthonormal() {
        let mut rng = stream_rng(5, "haar-test", 0);
        for _ in 0..25 {
            let o = GaussianClass::Orthogonal.sample(&mut rng);
            assert!(unitarity_defect(&o) < 1e-12);
            for row in &o {
                for v in row {
                    assert_eq!(v.im, 0.0);
                }
            }
            let u = GaussianClass::Unitary.sample(&mut rng);
            assert!(unitarity_defect(&u) < 1e-12);
        }
    }

    #[test]
    fn orthogonal_samples_cover_both_determinant_signs() {
        let mut rng = stream_rng(6, "haar-test", 0);
        let mut signs = [0u32; 2];
        for _ in 0..64 {
            let g = GaussianClass::Orthogonal.sample(&mut rng);
            // Real 4x4 determinant by cofactor expansion is overkill; use
            // the permanent-free 2x2 block formula via f64 LU instead.
            let mut a = [[0.0f64; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    a[i][j] = g[i][j].re;
                }
            }
            let mut det = 1.0;
            for p in 0..4 {
                let mut pivot = p;
                for r in p + 1..4 {
                    if a[r][p].abs() > a[pivot][p].abs() {
                        pivot = r;
                    }
                }
                if pivot != p {
                    a.swap(pivot, p);
                    det = -det;
                }
                det *= a[p][p];
                for r in p + 1..4 {
                    let f = a[r][p] / a[p][p];
                    for c in p..4 {
                        a[r][c] -= f * a[p][c];
                    }
                }
            }
            signs[usize::from(det > 0.0)] += 1;
        }
        assert!(signs[0] > 0 && signs[1] > 0, "{signs:?}");
    }

    #[test]
    fn transition_columns_are_normalized() {
        let mut rng = stream_rng(7, "haar-test", 0);
        for class in [GaussianClass::Orthogonal, GaussianClass::Unitary] {
            let g = class.sample(&mut rng);
            let table = squared_transitions(&g);
            for col in 0..STRINGS2 {
                let total: f64 = (0..STRINGS2).map(|row| table[row][col]).sum();
                assert!((total - 1.0).abs() < 1e-12, "{class:?} column {col}");
                let back: f64 = (0..STRINGS2).map(|row| table[col][row]).sum();
                assert!((back - 1.0).abs() < 1e-12, "{class:?} row {col}");
            }
        }
    }

    #[test]
    fn orthogonal_gates_conserve_doubling_parity() {
        let mut rng = stream_rng(8, "haar-test", 0);
        let g = GaussianClass::Orthogonal.sample(&mut rng);
        let table = squared_transitions(&g);
        for to in 0..STRINGS2 {
            for from in 0..STRINGS2 {
                let (tx, tz) = index2_string(to);
                let (fx, fz) = index2_string(from);
                if ((tx & tz).count_ones() + (fx & fz).count_ones()) % 2 == 1 {
                    assert!(table[to][from] < 1e-24);
                }
            }
        }
    }

    #[test]
    fn classical_gate_transitions_are_deterministic() {
        // A controlled flip (high bit controls the low bit) embeds as a
        // 0/1 matrix; conjugation must move each string to exactly one
        // string: x on the control spreads to both lines, z on the target
        // spreads back, and single-line x on the target stays put.
        let perm = [0usize, 1, 3, 2];
        let mut g = [[Complex64::ZERO; 4]; 4];
        for (v, &w) in perm.iter().enumerate() {
            g[w][v] = Complex64::ONE;
        }
        let table = squared_transitions(&g);
        let hits = |fx: u64, fz: u64, tx: u64, tz: u64| {
            let w = table[string2_index(tx, tz)][string2_index(fx, fz)];
            (w - 1.0).abs() < 1e-12
        };
        assert!(hits(1, 0, 1, 0));
        assert!(hits(2, 0, 3, 0));
        assert!(hits(0, 1, 0, 3));
        assert!(hits(0, 2, 0, 2));
        for col in 0..STRINGS2 {
            let support = (0..STRINGS2)
                .filter(|&row| table[row][col] > 0.5)
                .count();
            assert_eq!(support, 1);
        }
    }

    #[test]
    fn ensemble_diagnostics_match_published_scales() {
        let samples = 4000;
        let u = haar_averages(GaussianClass::Unitary, samples, 11, SUPPORT_THRESHOLD);
        assert_eq!(u.column_support(0), 1.0);
        assert!((u.column_weight(5) - 1.0).abs() < 1e-12);
        let v0 = u.sector_mean(Sector2::Odd, HaarAverages::column_support);
        let v0_even = u.sector_mean(Sector2::Even, HaarAverages::column_support);
        assert!((v0 - 15.0).abs() < 0.01, "unitary odd support {v0}");
        assert!((v0_even - 15.0).abs() < 0.01, "unitary even support {v0_even}");
        for sector in [Sector2::Odd, Sector2::Even] {
            let s = u.sector_mean(sector, HaarAverages::column_entropy);
            assert!((s - 1.90).abs() < 0.02, "unitary entropy {s}");
        }

        let o = haar_averages(GaussianClass::Orthogonal, samples, 12, SUPPORT_THRESHOLD);
        assert_eq!(o.column_support(0), 1.0);
        assert!(o.column_entropy(0).abs() < 1e-12);
        let even_support = o.sector_mean(Sector2::Even, HaarAverages::column_support);
        assert!((even_support - 9.0).abs() < 0.01, "{even_support}");
        // Doubling parity alone would allow all 6 odd strings, but measured
        // connectivity is 3: real antisymmetric matrices split into two
        // conjugation-invariant triples, and each odd string sits in one.
        let odd_support = o.sector_mean(Sector2::Odd, HaarAverages::column_support);
        assert!((odd_support - 3.0).abs() < 0.05, "{odd_support}");
        let s_odd = o.sector_mean(Sector2::Odd, HaarAverages::column_entropy);
        let s_even = o.sector_mean(Sector2::Even, HaarAverages::column_entropy);
        assert!((s_odd - 0.67).abs() < 0.02, "{s_odd}");
        assert!((s_even - 1.34).abs() < 0.02, "{s_even}");
    }

    #[test]
    fn averages_are_reproducible() {
        let a = haar_averages(GaussianClass::Unitary, 100, 3, SUPPORT_THRESHOLD);
        let b = haar_averages(GaussianClass::Unitary, 100, 3, SUPPORT_THRESHOLD);
        assert_eq!(a.sum_sq, b.sum_sq);
    }
}
