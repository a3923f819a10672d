//! Layered circuits of placed 3-bit gates.
//!
//! A layer is a set of gates on pairwise disjoint line triples; packed
//! layouts touch every line exactly once per layer. Circuits serialize to a
//! plain JSON schema (`n`, `seed`, `layout`, `layers` of `{perm, lines}`
//! records) so runs can be archived and replayed.

use crate::bits::BitWord;
use crate::gate::Gate3;
use crate::gatespace;
use crate::oracle::PermutationOracle;
use crate::rng::stream_rng;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, OnceLock};

/// A gate bound to a line triple `(a, b, c)`; the gate permutes the packed
/// value `4*x_a + 2*x_b + x_c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedGate {
    #[serde(rename = "perm")]
    pub gate: Gate3,
    pub lines: [u16; 3],
}

impl PlacedGate {
    pub fn new(gate: Gate3, lines: [u16; 3]) -> Result<Self> {
        if lines[0] == lines[1] || lines[0] == lines[2] || lines[1] == lines[2] {
            return Err(Error::RepeatedLines(lines));
        }
        Ok(PlacedGate { gate, lines })
    }

    #[inline]
    pub fn apply_u64(&self, x: u64) -> u64 {
        let [a, b, c] = self.lines;
        let v = ((x >> a) & 1) << 2 | ((x >> b) & 1) << 1 | ((x >> c) & 1);
        let w = self.gate.apply_packed(v as u8) as u64;
        let cleared = x & !((1 << a) | (1 << b) | (1 << c));
        cleared | ((w >> 2) & 1) << a | ((w >> 1) & 1) << b | (w & 1) << c
    }

    pub fn apply_word(&self, x: &mut BitWord) {
        let [a, b, c] = self.lines;
        let v = x.bit(a.into()) << 2 | x.bit(b.into()) << 1 | x.bit(c.into());
        let w = self.gate.apply_packed(v as u8) as u64;
        x.set_bit(a.into(), (w >> 2) & 1);
        x.set_bit(b.into(), (w >> 1) & 1);
        x.set_bit(c.into(), w & 1);
    }

    pub fn inverse(&self) -> PlacedGate {
        PlacedGate {
            gate: self.gate.inverse(),
            lines: self.lines,
        }
    }
}

/// Application direction through the layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Where layer gates are drawn from.
#[derive(Clone)]
pub enum GateSource {
    /// Uniform over all 40320 gates.
    FullS8,
    /// Uniform over the 144 inflationary gates.
    Inflationary,
    /// Uniform over the 10752 proliferation gates.
    Proliferation,
    /// Uniform over a caller-supplied set.
    Fixed(Arc<Vec<Gate3>>),
}

impl GateSource {
    fn draw<R: Rng>(&self, rng: &mut R) -> Result<Gate3> {
        match self {
            GateSource::FullS8 => Ok(Gate3::random(rng)),
            GateSource::Inflationary => {
                let set = &gatespace::atlas().inflationary;
                Ok(set[rng.gen_range(0..set.len())])
            }
            GateSource::Proliferation => {
                let set = &gatespace::atlas().proliferation;
                Ok(set[rng.gen_range(0..set.len())])
            }
            GateSource::Fixed(set) => {
                if set.is_empty() {
                    return Err(Error::EmptyGateSet);
                }
                Ok(set[rng.gen_range(0..set.len())])
            }
        }
    }
}

/// Geometry of the gate placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayoutKind {
    /// Every layer is a fresh random partition of all lines into triples.
    LongRangePacked,
    /// Aligned triples on a periodic `dim`-dimensional grid. The gated axis
    /// cycles each layer and the offset along it cycles through 0, 1, 2.
    Brickwall { dim: u8 },
    /// Packed inflationary layers followed by packed proliferation layers.
    TwoStage {
        inflationary: u32,
        proliferation: u32,
    },
}

impl LayoutKind {
    fn tag(&self) -> String {
        match self {
            LayoutKind::LongRangePacked => "long-range-packed".into(),
            LayoutKind::Brickwall { dim } => format!("brickwall-{dim}d"),
            LayoutKind::TwoStage { .. } => "two-stage".into(),
        }
    }
}

/// Full recipe for a random circuit.
#[derive(Clone)]
pub struct LayoutSpec {
    pub n: u32,
    pub layers: u32,
    pub kind: LayoutKind,
    /// Gate pool for every layer; ignored by `TwoStage`, which fixes its own
    /// pools per stage.
    pub gates: GateSource,
    pub seed: u64,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "RawCircuit")]
pub struct Circuit {
    n: u32,
    seed: u64,
    layout: String,
    layers: Vec<Vec<PlacedGate>>,
    #[serde(skip)]
    inverse: OnceLock<Vec<Vec<PlacedGate>>>,
}

#[derive(Deserialize)]
struct RawCircuit {
    n: u32,
    seed: u64,
    layout: String,
    layers: Vec<Vec<PlacedGate>>,
}

impl TryFrom<RawCircuit> for Circuit {
    type Error = Error;
    fn try_from(raw: RawCircuit) -> Result<Circuit> {
        Circuit::new(raw.n, raw.seed, raw.layout, raw.layers)
    }
}

impl Circuit {
    /// Checks that lines are in range and disjoint within each layer.
    pub fn new(n: u32, seed: u64, layout: String, layers: Vec<Vec<PlacedGate>>) -> Result<Self> {
        for layer in &layers {
            let mut used = vec![false; n as usize];
            for pg in layer {
                for &line in &pg.lines {
                    let line = u32::from(line);
                    if line >= n {
                        return Err(Error::LineOutOfRange { line, n });
                    }
                    if used[line as usize] {
                        return Err(Error::RepeatedLines(pg.lines));
                    }
                    used[line as usize] = true;
                }
            }
        }
        Ok(Circuit {
            n,
            seed,
            layout,
            layers,
            inverse: OnceLock::new(),
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layout(&self) -> &str {
        &self.layout
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<PlacedGate>] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &[PlacedGate] {
        &self.layers[l]
    }

    fn inverse_layers(&self) -> &[Vec<PlacedGate>] {
        self.inverse.get_or_init(|| {
            self.layers
                .iter()
                .rev()
                .map(|layer| layer.iter().map(PlacedGate::inverse).collect())
                .collect()
        })
    }

    /// Applies the circuit to a `u64` state; requires `n <= 64`.
    pub fn apply_u64(&self, x: u64, dir: Direction) -> u64 {
        debug_assert!(self.n <= 64);
        let layers: &[Vec<PlacedGate>] = match dir {
            Direction::Forward => &self.layers,
            Direction::Inverse => self.inverse_layers(),
        };
        let mut x = x;
        for layer in layers {
            for pg in layer {
                x = pg.apply_u64(x);
            }
        }
        x
    }

    /// Applies the circuit in place to a word of any width.
    pub fn apply_word(&self, x: &mut BitWord, dir: Direction) {
        debug_assert_eq!(x.n(), self.n);
        let layers: &[Vec<PlacedGate>] = match dir {
            Direction::Forward => &self.layers,
            Direction::Inverse => self.inverse_layers(),
        };
        for layer in layers {
            for pg in layer {
                pg.apply_word(x);
            }
        }
    }
}

impl PermutationOracle for Circuit {
    fn n(&self) -> u32 {
        self.n
    }
    fn forward(&self, x: u64) -> u64 {
        self.apply_u64(x, Direction::Forward)
    }
    fn inverse(&self, x: u64) -> u64 {
        self.apply_u64(x, Direction::Inverse)
    }
}

/// Builds a random circuit. Layer `l` draws its lines and gates from the
/// derived stream `(seed, "layout-layer", l)`, so circuits are reproducible
/// and layers are independent.
pub fn build_layout(spec: &LayoutSpec) -> Result<Circuit> {
    if spec.n < 3 || spec.n > u32::from(u16::MAX) {
        return Err(Error::WidthOutOfRange {
            n: spec.n,
            min: 3,
            max: u32::from(u16::MAX),
        });
    }
    let layers = match spec.kind {
        LayoutKind::LongRangePacked => {
            packed_layers(spec.n, 0..spec.layers, &spec.gates, spec.seed)?
        }
        LayoutKind::Brickwall { dim } => brickwall_layers(spec, dim)?,
        LayoutKind::TwoStage {
            inflationary,
            proliferation,
        } => {
            if inflationary + proliferation != spec.layers {
                return Err(Error::StageSplit {
                    layers: spec.layers,
                    inflationary,
                    proliferation,
                });
            }
            let mut layers =
                packed_layers(spec.n, 0..inflationary, &GateSource::Inflationary, spec.seed)?;
            layers.extend(packed_layers(
                spec.n,
                inflationary..spec.layers,
                &GateSource::Proliferation,
                spec.seed,
            )?);
            layers
        }
    };
    Circuit::new(spec.n, spec.seed, spec.kind.tag(), layers)
}

fn packed_layers(
    n: u32,
    layer_range: std::ops::Range<u32>,
    gates: &GateSource,
    seed: u64,
) -> Result<Vec<Vec<PlacedGate>>> {
    if n % 3 != 0 {
        return Err(Error::NotDivisible { n, divisor: 3 });
    }
    let mut layers = Vec::with_capacity(layer_range.len());
    for l in layer_range {
        let mut rng = stream_rng(seed, "layout-layer", u64::from(l));
        let mut lines: Vec<u16> = (0..n as u16).collect();
        lines.shuffle(&mut rng);
        let mut layer = Vec::with_capacity(n as usize / 3);
        for triple in lines.chunks_exact(3) {
            layer.push(PlacedGate::new(
                gates.draw(&mut rng)?,
                [triple[0], triple[1], triple[2]],
            )?);
        }
        layers.push(layer);
    }
    Ok(layers)
}

fn brickwall_layers(spec: &LayoutSpec, dim: u8) -> Result<Vec<Vec<PlacedGate>>> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidParameter {
            name: "dim",
            reason: format!("brickwall dimension {dim} not in 1..=3"),
        });
    }
    let side = grid_side(spec.n, dim).ok_or(Error::BadGrid { n: spec.n, dim })?;
    let d = u32::from(dim);
    let mut layers = Vec::with_capacity(spec.layers as usize);
    for l in 0..spec.layers {
        let mut rng = stream_rng(spec.seed, "layout-layer", u64::from(l));
        let axis = l % d;
        let offset = (l / d) % 3;
        let stride = side.pow(axis);
        let mut layer = Vec::with_capacity(spec.n as usize / 3);
        // Walk every site whose coordinate along the gated axis is zero.
        for base in 0..spec.n {
            if (base / stride) % side != 0 {
                continue;
            }
            for t in 0..side / 3 {
                let pos = |step: u32| -> u16 {
                    let c = (offset + 3 * t + step) % side;
                    (base + c * stride) as u16
                };
                layer.push(PlacedGate::new(
                    spec.gates.draw(&mut rng)?,
                    [pos(0), pos(1), pos(2)],
                )?);
            }
        }
        layers.push(layer);
    }
    Ok(layers)
}

fn grid_side(n: u32, dim: u8) -> Option<u32> {
    let side = match dim {
        1 => n,
        2 => (f64::from(n).sqrt().round()) as u32,
        3 => (f64::from(n).cbrt().round()) as u32,
        _ => return None,
    };
    if side.pow(u32::from(dim)) == n && side % 3 == 0 {
        Some(side)
    } else {
        None
    }
}
