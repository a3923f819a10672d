//! String-space transition matrices of single 3-bit gates.
//!
//! Conjugating a string operator by a gate produces a superposition of
//! strings on the same three lines. The 64x64 matrix of overlap amplitudes
//! (all multiples of 1/8, stored as integer numerators) is the complete
//! local description of how a gate moves string weight, and is the basis for
//! classifying gates as inflationary or proliferating.

use crate::gate::{all_gates, Gate3};
use crate::rng::stream_rng;
use rand::Rng;
use rayon::prelude::*;
use std::collections::{HashSet, VecDeque};
use std::sync::OnceLock;

/// Number of 3-bit string operators.
pub const STRINGS3: usize = 64;

/// Packs a 3-bit string `(x_mask, z_mask)` into a table index.
#[inline]
pub fn string_index(x_mask: u8, z_mask: u8) -> usize {
    debug_assert!(x_mask < 8 && z_mask < 8);
    usize::from(x_mask) << 3 | usize::from(z_mask)
}

/// Inverse of [`string_index`].
#[inline]
pub fn index_string(idx: usize) -> (u8, u8) {
    debug_assert!(idx < STRINGS3);
    ((idx >> 3) as u8, (idx & 7) as u8)
}

/// Invariant blocks of the transition matrix. Flip-free strings stay
/// flip-free under any permutation gate, and the parity of the y count is
/// conserved on the rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sector {
    /// The trivial string.
    Identity,
    /// `x_mask = 0`, pure phase strings (7).
    ZString,
    /// Flipping strings with an odd number of y factors (28).
    OddY,
    /// Flipping strings with an even number of y factors (28).
    EvenY,
}

pub fn sector_of(idx: usize) -> Sector {
    let (x, z) = index_string(idx);
    if x == 0 {
        if z == 0 {
            Sector::Identity
        } else {
            Sector::ZString
        }
    } else if (x & z).count_ones() % 2 == 1 {
        Sector::OddY
    } else {
        Sector::EvenY
    }
}

/// Indices of the nine strings supported on a single line.
pub fn weight1_indices() -> [usize; 9] {
    let mut out = [0usize; 9];
    let mut k = 0;
    for line in 0..3u8 {
        let bit = 1 << line;
        for (x, z) in [(bit, 0), (0, bit), (bit, bit)] {
            out[k] = string_index(x, z);
            k += 1;
        }
    }
    out
}

/// Transition amplitudes of one gate, as numerators over 8. Row index is the
/// output string, column index the input string.
#[derive(Clone)]
pub struct Transition {
    pub num: [[i8; STRINGS3]; STRINGS3],
}

/// Computes the full transition matrix of a gate acting on its three lines.
///
/// Entry `(a', a)` is `(1/8) * sum_u (-1)^(az.u) (-1)^(a'z.G(u))` over the
/// inputs `u` with `G(u ^ ax) ^ G(u) = a'x`, where `G` is the gate action in
/// line order.
pub fn transition_numerators(gate: Gate3) -> Transition {
    let mut g = [0u8; 8];
    for (u, slot) in g.iter_mut().enumerate() {
        *slot = gate.apply_lines(u as u8);
    }
    let mut num = [[0i8; STRINGS3]; STRINGS3];
    for ax in 0..8u8 {
        for u in 0..8u8 {
            let apx = g[usize::from(u ^ ax)] ^ g[usize::from(u)];
            let gu = g[usize::from(u)];
            for az in 0..8u8 {
                let s_in = (az & u).count_ones() % 2;
                let col = string_index(ax, az);
                for apz in 0..8u8 {
                    let parity = s_in + (apz & gu).count_ones() % 2;
                    let row = string_index(apx, apz);
                    num[row][col] += if parity % 2 == 0 { 1 } else { -1 };
                }
            }
        }
    }
    Transition { num }
}

impl Transition {
    /// Support size of one input column.
    pub fn column_support(&self, col: usize) -> u32 {
        self.num.iter().map(|row| u32::from(row[col] != 0)).sum()
    }

    /// Checks the conservation laws every permutation gate obeys: the
    /// identity column is fixed, flip-free strings close among themselves,
    /// y-parity is conserved, and every column has unit norm.
    pub fn check_invariants(&self) -> bool {
        if self.num[0][0] != 8 {
            return false;
        }
        for a in 0..STRINGS3 {
            let mut norm = 0i32;
            for ap in 0..STRINGS3 {
                let v = i32::from(self.num[ap][a]);
                norm += v * v;
                if v != 0 && !sectors_compatible(sector_of(ap), sector_of(a)) {
                    return false;
                }
            }
            if norm != 64 {
                return false;
            }
        }
        true
    }
}

fn sectors_compatible(out: Sector, inp: Sector) -> bool {
    use Sector::*;
    matches!(
        (out, inp),
        (Identity, Identity) | (ZString, ZString) | (OddY, OddY) | (EvenY, EvenY)
    )
}

/// True when the gate is affine over GF(2) in line order: all finite
/// differences `G(u ^ v) ^ G(u)` depend on `v` alone.
pub fn is_linear(gate: Gate3) -> bool {
    let g0 = gate.apply_lines(0);
    for v in 1..8u8 {
        let d = gate.apply_lines(v) ^ g0;
        for u in 1..8u8 {
            if gate.apply_lines(u ^ v) ^ gate.apply_lines(u) != d {
                return false;
            }
        }
    }
    true
}

/// True when the gate never maps a single-line string to a single-line
/// string: the 9x9 weight-1 block of the transition matrix vanishes.
pub fn is_inflationary(t: &Transition) -> bool {
    let w1 = weight1_indices();
    for &row in &w1 {
        for &col in &w1 {
            if t.num[row][col] != 0 {
                return false;
            }
        }
    }
    true
}

/// True when the gate spreads every string as evenly as a typical one: each
/// non-identity row and column has exactly 4 entries of size 1/2 in the
/// flip-free sector and exactly 16 entries of size 1/4 in the flipping
/// sectors.
pub fn is_proliferation(t: &Transition) -> bool {
    for i in 1..STRINGS3 {
        let (want_count, want_abs) = match sector_of(i) {
            Sector::ZString => (4u32, 4i8),
            _ => (16, 2),
        };
        let mut row_count = 0;
        let mut col_count = 0;
        for j in 0..STRINGS3 {
            let r = t.num[i][j];
            if r != 0 {
                if r.abs() != want_abs {
                    return false;
                }
                row_count += 1;
            }
            let c = t.num[j][i];
            if c != 0 {
                if c.abs() != want_abs {
                    return false;
                }
                col_count += 1;
            }
        }
        if row_count != want_count || col_count != want_count {
            return false;
        }
    }
    true
}

/// Entry-wise statistics of transition matrices over a gate set.
#[derive(Clone)]
pub struct GateAverages {
    pub gates: u64,
    /// Number of gates with a nonzero entry, per matrix cell.
    pub nonzero: Vec<u64>,
    /// Sum of squared numerators, per matrix cell. Dividing by
    /// `64 * gates` gives the mean squared amplitude.
    pub sum_r2: Vec<u64>,
    /// Sum over gates of the support size of each column.
    pub col_support: [u64; STRINGS3],
    /// Sum over gates of the Shannon entropy of each column's squared
    /// amplitudes, `-sum_row |t|^2 ln |t|^2`.
    pub col_entropy: [f64; STRINGS3],
}

/// `PLOGP[k] = (k/64) ln (k/64)`, with the `k = 0` limit taken as zero.
/// Squared numerators only take values in `0..=64`, so column entropies
/// reduce to table lookups.
fn plogp_table() -> &'static [f64; 65] {
    static TABLE: OnceLock<[f64; 65]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; 65];
        for (k, slot) in t.iter_mut().enumerate().skip(1) {
            let p = k as f64 / 64.0;
            *slot = p * p.ln();
        }
        t
    })
}

impl GateAverages {
    fn empty() -> Self {
        GateAverages {
            gates: 0,
            nonzero: vec![0; STRINGS3 * STRINGS3],
            sum_r2: vec![0; STRINGS3 * STRINGS3],
            col_support: [0; STRINGS3],
            col_entropy: [0.0; STRINGS3],
        }
    }

    fn absorb(&mut self, t: &Transition) {
        let plogp = plogp_table();
        self.gates += 1;
        for col in 0..STRINGS3 {
            let mut support = 0u64;
            let mut entropy = 0.0;
            for row in 0..STRINGS3 {
                let v = i64::from(t.num[row][col]);
                let cell = row * STRINGS3 + col;
                if v != 0 {
                    self.nonzero[cell] += 1;
                    support += 1;
                }
                self.sum_r2[cell] += (v * v) as u64;
                entropy -= plogp[(v * v) as usize];
            }
            self.col_support[col] += support;
            self.col_entropy[col] += entropy;
        }
    }

    fn merge(mut self, other: GateAverages) -> GateAverages {
        self.gates += other.gates;
        for (a, b) in self.nonzero.iter_mut().zip(&other.nonzero) {
            *a += b;
        }
        for (a, b) in self.sum_r2.iter_mut().zip(&other.sum_r2) {
            *a += b;
        }
        for (a, b) in self.col_support.iter_mut().zip(&other.col_support) {
            *a += b;
        }
        for (a, b) in self.col_entropy.iter_mut().zip(&other.col_entropy) {
            *a += b;
        }
        self
    }

    pub fn nonzero_at(&self, row: usize, col: usize) -> u64 {
        self.nonzero[row * STRINGS3 + col]
    }

    pub fn sum_r2_at(&self, row: usize, col: usize) -> u64 {
        self.sum_r2[row * STRINGS3 + col]
    }

    /// Mean support size of a column (the annealed spread measure).
    pub fn mean_support(&self, col: usize) -> f64 {
        self.col_support[col] as f64 / self.gates as f64
    }

    /// Gate-averaged spreading entropy of a column: the Shannon entropy of
    /// the squared amplitudes leaving string `col`, averaged over the set.
    pub fn column_entropy(&self, col: usize) -> f64 {
        self.col_entropy[col] / self.gates as f64
    }

}

/// Averages transition statistics over an explicit gate list.
pub fn average_over(gates: &[Gate3]) -> GateAverages {
    gates
        .par_iter()
        .fold(GateAverages::empty, |mut acc, &g| {
            acc.absorb(&transition_numerators(g));
            acc
        })
        .reduce(GateAverages::empty, GateAverages::merge)
}

/// Classification of the whole 3-bit gate group.
pub struct GateAtlas {
    /// Gates whose weight-1 to weight-1 block vanishes, in lexicographic
    /// order of the packed permutation table.
    pub inflationary: Vec<Gate3>,
    /// Gates with maximally even spreading, in lexicographic order.
    pub proliferation: Vec<Gate3>,
    /// Number of affine gates.
    pub linear_count: u64,
}

struct FullScan {
    atlas: GateAtlas,
    averages: GateAverages,
}

fn full_scan() -> &'static FullScan {
    static SCAN: OnceLock<FullScan> = OnceLock::new();
    SCAN.get_or_init(|| {
        struct Acc {
            inflationary: Vec<Gate3>,
            proliferation: Vec<Gate3>,
            linear: u64,
            averages: GateAverages,
        }
        let acc = all_gates()
            .par_iter()
            .fold(
                || Acc {
                    inflationary: Vec::new(),
                    proliferation: Vec::new(),
                    linear: 0,
                    averages: GateAverages::empty(),
                },
                |mut acc, &g| {
                    let t = transition_numerators(g);
                    if is_inflationary(&t) {
                        acc.inflationary.push(g);
                    }
                    if is_proliferation(&t) {
                        acc.proliferation.push(g);
                    }
                    if is_linear(g) {
                        acc.linear += 1;
                    }
                    acc.averages.absorb(&t);
                    acc
                },
            )
            .reduce(
                || Acc {
                    inflationary: Vec::new(),
                    proliferation: Vec::new(),
                    linear: 0,
                    averages: GateAverages::empty(),
                },
                |mut a, mut b| {
                    a.inflationary.append(&mut b.inflationary);
                    a.proliferation.append(&mut b.proliferation);
                    a.linear += b.linear;
                    a.averages = a.averages.merge(b.averages);
                    a
                },
            );
        let mut atlas = GateAtlas {
            inflationary: acc.inflationary,
            proliferation: acc.proliferation,
            linear_count: acc.linear,
        };
        atlas.inflationary.sort_unstable();
        atlas.proliferation.sort_unstable();
        FullScan {
            atlas,
            averages: acc.averages,
        }
    })
}

/// Classifies all 40320 gates once and caches the result.
pub fn atlas() -> &'static GateAtlas {
    &full_scan().atlas
}

/// Transition statistics averaged over all 40320 gates, cached.
pub fn s8_averages() -> &'static GateAverages {
    &full_scan().averages
}

/// Draws a uniformly random gate from a named pool.
pub fn sample_pool(pool: &[Gate3], master: u64, purpose: &str, index: u64) -> Gate3 {
    let mut rng = stream_rng(master, purpose, index);
    pool[rng.gen_range(0..pool.len())]
}

/// Order of the subgroup generated by the given gates, by breadth-first
/// closure under composition.
pub fn group_order(generators: &[Gate3]) -> u64 {
    let mut seen: HashSet<Gate3> = HashSet::new();
    let mut queue: VecDeque<Gate3> = VecDeque::new();
    seen.insert(Gate3::IDENTITY);
    queue.push_back(Gate3::IDENTITY);
    while let Some(e) = queue.pop_front() {
        for g in generators {
            let f = g.compose(&e);
            if seen.insert(f) {
                queue.push_back(f);
            }
        }
    }
    seen.len() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::for_each_gate;

    #[test]
    fn identity_gate_has_identity_transitions() {
        let t = transition_numerators(Gate3::IDENTITY);
        for row in 0..STRINGS3 {
            for col in 0..STRINGS3 {
                let want = if row == col { 8 } else { 0 };
                assert_eq!(t.num[row][col], want);
            }
        }
    }

    #[test]
    fn invariants_hold_for_sampled_gates() {
        let mut rng = stream_rng(17, "gatespace-test", 0);
        for _ in 0..200 {
            let g = Gate3::random(&mut rng);
            assert!(transition_numerators(g).check_invariants());
        }
    }

    #[test]
    fn affine_gate_count_matches_the_affine_group() {
        let mut count = 0u64;
        for_each_gate(|g| {
            if is_linear(g) {
                count += 1;
            }
        });
        // |AGL(3,2)| = 8 * 7 * 6 * 4 = 1344.
        assert_eq!(count, 1344);
    }

    #[test]
    fn swap_gate_is_not_inflationary() {
        // Swapping two lines maps a weight-1 string to a weight-1 string.
        let g = Gate3::from_lines_fn(|u| (u & 0b001) | (u >> 1 & 0b010) | (u << 1 & 0b100));
        let t = transition_numerators(g);
        assert!(!is_inflationary(&t));
        assert!(is_linear(g));
    }

    #[test]
    fn group_closure_recovers_the_full_group() {
        let a = Gate3::new([1, 2, 3, 4, 5, 6, 7, 0]).unwrap();
        let b = Gate3::new([1, 0, 2, 3, 4, 5, 6, 7]).unwrap();
        assert_eq!(group_order(&[a, b]), 40320);
    }

    #[test]
    fn weight1_block_indices_are_the_nine_single_line_strings() {
        let idx = weight1_indices();
        assert_eq!(idx.len(), 9);
        for &i in &idx {
            let (x, z) = index_string(i);
            assert_eq!((x | z).count_ones(), 1);
        }
    }

    #[test]
    fn column_entropy_matches_hand_counts() {
        // Identity columns are deterministic, so every entropy is zero.
        let avg = average_over(&[Gate3::IDENTITY]);
        for col in 0..STRINGS3 {
            assert!(avg.column_entropy(col).abs() < 1e-12);
        }

        // For a maximally spreading gate, a flip-free column splits over 4
        // slots of weight 1/4 and a flipping column over 16 slots of weight
        // 1/16, giving ln 4 and ln 16 exactly.
        let pool = atlas().proliferation[0];
        let avg = average_over(&[pool]);
        for col in 1..STRINGS3 {
            let want = match sector_of(col) {
                Sector::ZString => 4f64.ln(),
                _ => 16f64.ln(),
            };
            assert!((avg.column_entropy(col) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sector_sizes_are_1_7_28_28() {
        let mut counts = [0u32; 4];
        for i in 0..STRINGS3 {
            let k = match sector_of(i) {
                Sector::Identity => 0,
                Sector::ZString => 1,
                Sector::OddY => 2,
                Sector::EvenY => 3,
            };
            counts[k] += 1;
        }
        assert_eq!(counts, [1, 7, 28, 28]);
    }
}
