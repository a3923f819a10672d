//! Experiment drivers: named studies that average over explicit seed lists
//! and write CSV tables plus a JSON metadata sidecar.
//!
//! Each study is identified by an [`ExperimentId`] and fully determined by an
//! [`ExperimentConfig`]; rerunning the same config reproduces the CSV bodies
//! byte for byte. The sidecar records the config, the wall time, and the
//! `git describe` string of the working tree, so every table can be traced
//! back to the code and parameters that produced it.
//!
//! The studies:
//!
//! * `fig1`: residual participation entropy of Feistel ciphers against the
//!   round count, for several widths.
//! * `table1`: residual entropies of orders 1, 2, 3 for Feistel rounds 1-5
//!   and for uniformly random permutations.
//! * `fig3`: distribution of output flip counts per layer, comparing a
//!   two-stage circuit (inflationary opening, then unrestricted gates) with
//!   a generic random circuit.
//! * `fig4`: decay of the squared avalanche correlator with depth for packed
//!   long-range and one-dimensional brickwall layouts.
//! * `fig5`: fitted decay rates from the `fig4` family of measurements.
//! * `fig6`: growth of the string entropy layer by layer at fixed width,
//!   brickwall versus packed.
//! * `gate-atlas`: census of the 3-bit gate families and sector-resolved
//!   transition statistics, optionally alongside sampled Haar baselines.
//! * `equilibrium`: closed-form equilibrium entropies and their offsets.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitudes::string_amplitudes;
use crate::circuit::{build_layout, Circuit, GateSource, LayoutKind, LayoutSpec};
use crate::equilibrium::Ensemble;
use crate::feistel::FeistelCipher;
use crate::gate::Gate3;
use crate::gatespace::{self, index_string, sector_of, Sector, STRINGS3};
use crate::haar::{self, GaussianClass, Sector2, STRINGS2};
use crate::oracle::{TablePermutation, MAX_EXHAUSTIVE_BITS};
use crate::otoc::{
    avalanche_distribution, exponential_rate, otoc_decay_fit, sac_decay, sac_decay_local,
    DecayPlan, DecaySeries, FlipDistribution, SamplePlan,
};
use crate::pauli::PauliString;
use crate::rng::{stream_rng, subseed};
use crate::{Error, Result};

/// Installs the global worker pool, honoring the `STRINGFORGE_THREADS`
/// environment variable when it holds a positive integer. Safe to call any
/// number of times; only the first call has an effect, and it is a no-op if
/// some other code already built the pool.
pub fn init_thread_pool() {
    static INIT: OnceLock<()> = OnceLock::new();
    INIT.get_or_init(|| {
        let threads = std::env::var("STRINGFORGE_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&k| k > 0);
        if let Some(k) = threads {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global();
        }
    });
}

/// The named studies the harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Fig1,
    Table1,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    GateAtlas,
    Equilibrium,
}

impl ExperimentId {
    /// All ids, in the order they are documented.
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::Fig1,
        ExperimentId::Table1,
        ExperimentId::Fig3,
        ExperimentId::Fig4,
        ExperimentId::Fig5,
        ExperimentId::Fig6,
        ExperimentId::GateAtlas,
        ExperimentId::Equilibrium,
    ];

    /// Kebab-case tag used in CLI arguments and output file names.
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentId::Fig1 => "fig1",
            ExperimentId::Table1 => "table1",
            ExperimentId::Fig3 => "fig3",
            ExperimentId::Fig4 => "fig4",
            ExperimentId::Fig5 => "fig5",
            ExperimentId::Fig6 => "fig6",
            ExperimentId::GateAtlas => "gate-atlas",
            ExperimentId::Equilibrium => "equilibrium",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.tag() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Full recipe for one run. Unset fields fall back to per-study defaults
/// documented on [`run_experiment`]; the config embedded in the metadata
/// sidecar is the resolved one actually used.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Register widths to sweep.
    #[serde(default)]
    pub n: Vec<u32>,
    /// Feistel round counts to sweep.
    #[serde(default)]
    pub rounds: Vec<u32>,
    /// Circuit depth in layers.
    #[serde(default)]
    pub layers: Option<u32>,
    /// Gate pool: `s8`, `inflationary`, or `proliferation`.
    #[serde(default)]
    pub gate_set: Option<String>,
    /// Ensemble filter for the equilibrium study: `perm`, `o4`, or `u4`.
    #[serde(default)]
    pub class: Option<String>,
    /// Independent realizations (cipher seeds, circuit draws).
    #[serde(default)]
    pub seeds: Option<u64>,
    /// Monte Carlo samples per realization.
    #[serde(default)]
    pub samples: Option<u64>,
    /// Circuit realizations for decay measurements.
    #[serde(default)]
    pub circuits: Option<u32>,
    /// Entropy orders.
    #[serde(default)]
    pub q: Vec<f64>,
    /// Master seed; every derived stream is a labeled child of it.
    #[serde(default)]
    pub seed: u64,
    /// Output directory for the CSV and sidecar files.
    #[serde(default = "default_out_dir")]
    pub out: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// A config for `experiment` with every optional field left to defaults.
    pub fn new(experiment: ExperimentId, out: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            experiment,
            n: Vec::new(),
            rounds: Vec::new(),
            layers: None,
            gate_set: None,
            class: None,
            seeds: None,
            samples: None,
            circuits: None,
            q: Vec::new(),
            seed: 0,
            out: out.into(),
        }
    }
}

/// Looks up a gate pool by its CLI name.
pub fn gate_source_by_name(name: &str) -> Result<GateSource> {
    match name {
        "s8" => Ok(GateSource::FullS8),
        "inflationary" => Ok(GateSource::Inflationary),
        "proliferation" => Ok(GateSource::Proliferation),
        _ => Err(Error::InvalidParameter {
            name: "gate_set",
            reason: format!("expected s8, inflationary, or proliferation, got {name:?}"),
        }),
    }
}

/// One CSV table produced by a study.
#[derive(Clone, Debug)]
pub struct OutputTable {
    /// File stem; the writer appends `.csv` and `.meta.json`.
    pub name: String,
    pub header: String,
    pub rows: Vec<String>,
}

impl OutputTable {
    fn new(name: &str, header: &str) -> Self {
        OutputTable {
            name: name.to_string(),
            header: header.to_string(),
            rows: Vec::new(),
        }
    }
}

/// Files written by a run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
}

/// Runs the study described by `cfg` and writes its tables under `cfg.out`.
///
/// Per-study defaults when the config leaves fields empty:
///
/// * `fig1`: n 8,10,12,14; rounds 1-6; 50 seeds; q 1.
/// * `table1`: n 12; rounds 1-5; 100 seeds; q 1,2,3; plus a random
///   permutation baseline.
/// * `fig3`: n 21; 8 layers; 8 circuits; 100000 samples per circuit.
/// * `fig4`: packed n 27,81,243 and brickwall n 27,81; 16 circuits;
///   100000 samples; proliferation gates.
/// * `fig5`: same family as `fig4`, reporting fitted rates.
/// * `fig6`: n 15; 12 layers; 256 realizations; unrestricted gates.
/// * `gate-atlas`: the full 3-bit census; Haar baselines only when
///   `samples` is set.
/// * `equilibrium`: all three ensembles; q 1,2,3,4; n 16.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    init_thread_pool();
    let start = Instant::now();
    let tables = match cfg.experiment {
        ExperimentId::Fig1 => run_fig1(cfg)?,
        ExperimentId::Table1 => run_table1(cfg)?,
        ExperimentId::Fig3 => run_fig3(cfg)?,
        ExperimentId::Fig4 => run_fig4(cfg)?,
        ExperimentId::Fig5 => run_fig5(cfg)?,
        ExperimentId::Fig6 => run_fig6(cfg)?,
        ExperimentId::GateAtlas => run_gate_atlas(cfg)?,
        ExperimentId::Equilibrium => run_equilibrium(cfg)?,
    };
    write_outputs(cfg, &tables, start.elapsed())
}

fn write_outputs(
    cfg: &ExperimentConfig,
    tables: &[OutputTable],
    wall: Duration,
) -> Result<RunReport> {
    std::fs::create_dir_all(&cfg.out)?;
    let git = git_describe();
    let mut files = Vec::new();
    for table in tables {
        let csv_path = cfg.out.join(format!("{}.csv", table.name));
        let mut body = String::with_capacity(table.rows.len() * 32 + table.header.len() + 1);
        body.push_str(&table.header);
        body.push('\n');
        for row in &table.rows {
            body.push_str(row);
            body.push('\n');
        }
        std::fs::write(&csv_path, body)?;
        let meta_path = cfg.out.join(format!("{}.meta.json", table.name));
        let meta = serde_json::json!({
            "config": cfg,
            "wall_ms": wall.as_millis() as u64,
            "git_describe": git,
            "rows": table.rows.len(),
        });
        std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
        files.push(csv_path);
        files.push(meta_path);
    }
    Ok(RunReport { files })
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--tags", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|out| out.status.success())
        .and_then(|out| String::from_utf8(out.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

fn guard_exhaustive(n: u32) -> Result<()> {
    if n == 0 || n > MAX_EXHAUSTIVE_BITS {
        return Err(Error::WidthOutOfRange {
            n,
            min: 1,
            max: MAX_EXHAUSTIVE_BITS,
        });
    }
    Ok(())
}

fn first_or(list: &[u32], fallback: u32) -> u32 {
    list.first().copied().unwrap_or(fallback)
}

fn list_or(list: &[u32], fallback: &[u32]) -> Vec<u32> {
    if list.is_empty() {
        fallback.to_vec()
    } else {
        list.to_vec()
    }
}

fn qs_or(list: &[f64], fallback: &[f64]) -> Vec<f64> {
    if list.is_empty() {
        fallback.to_vec()
    } else {
        list.to_vec()
    }
}

/// Mean, sample standard deviation, and standard error of the mean.
fn moments(values: &[f64]) -> (f64, f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt(), (var / m).sqrt())
}

/// Seed-averaged entropy and residual of one cipher family at one order.
#[derive(Clone, Copy, Debug)]
pub struct ResidualStats {
    pub n: u32,
    pub q: f64,
    pub seeds: u64,
    pub mean_entropy: f64,
    /// Equilibrium entropy minus measured, averaged over seeds.
    pub mean_residual: f64,
    /// Sample standard deviation of the residual across seeds.
    pub stddev: f64,
    /// Standard error of the mean residual.
    pub stderr: f64,
}

fn residual_stats(n: u32, qs: &[f64], per_seed: &[Vec<f64>]) -> Vec<ResidualStats> {
    qs.iter()
        .enumerate()
        .map(|(qi, &q)| {
            let entropies: Vec<f64> = per_seed.iter().map(|row| row[qi]).collect();
            let eq = Ensemble::Permutation.equilibrium_entropy(n, q);
            let residuals: Vec<f64> = entropies.iter().map(|&s| eq - s).collect();
            let (mean_entropy, _, _) = moments(&entropies);
            let (mean_residual, stddev, stderr) = moments(&residuals);
            ResidualStats {
                n,
                q,
                seeds: per_seed.len() as u64,
                mean_entropy,
                mean_residual,
                stddev,
                stderr,
            }
        })
        .collect()
}

/// Entropies of the conjugated single-flip string under `seeds` independent
/// Feistel ciphers of the given width and round count, one [`ResidualStats`]
/// per requested order. Seed index `s` reuses the same round functions at
/// every round count, so deeper ciphers extend shallower ones.
pub fn feistel_residuals(
    n: u32,
    rounds: u32,
    qs: &[f64],
    seeds: u64,
    master: u64,
) -> Result<Vec<ResidualStats>> {
    guard_exhaustive(n)?;
    let alpha = PauliString::new(n, 1, 0)?;
    let per_seed: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let key = subseed(master, &format!("feistel-n{n}-s{s}"));
            let cipher = FeistelCipher::new(n, rounds, key)?;
            let hist = string_amplitudes(&cipher, &alpha)?;
            Ok(qs.iter().map(|&q| hist.renyi(q)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(residual_stats(n, qs, &per_seed))
}

/// Same measurement as [`feistel_residuals`] against uniformly random
/// permutations of the full register.
pub fn random_perm_residuals(
    n: u32,
    qs: &[f64],
    seeds: u64,
    master: u64,
) -> Result<Vec<ResidualStats>> {
    guard_exhaustive(n)?;
    let alpha = PauliString::new(n, 1, 0)?;
    let key = subseed(master, "random-perm");
    let per_seed: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let perm = TablePermutation::random(n, key, s)?;
            let hist = string_amplitudes(&perm, &alpha)?;
            Ok(qs.iter().map(|&q| hist.renyi(q)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(residual_stats(n, qs, &per_seed))
}

/// Entropy averaged over circuit realizations after each layer prefix.
#[derive(Clone, Copy, Debug)]
pub struct LayerEntropy {
    pub layer: u32,
    pub realizations: u64,
    pub mean_entropy: f64,
    /// Equilibrium entropy minus the mean.
    pub mean_residual: f64,
    /// Standard error of the mean entropy across realizations.
    pub stderr: f64,
}

/// Order-1 entropy of a conjugated string after each layer prefix of a
/// random circuit, averaged over independently drawn circuits. `alpha` fixes
/// the initial string; `None` draws a fresh uniformly random flip-only
/// string per realization. The seed in `spec` is ignored; circuit seeds are
/// derived from `master`.
pub fn entropy_by_prefix(
    spec: &LayoutSpec,
    realizations: u64,
    master: u64,
    alpha: Option<&PauliString>,
) -> Result<Vec<LayerEntropy>> {
    guard_exhaustive(spec.n)?;
    let n = spec.n;
    let size = 1u64 << n;
    let per_real: Vec<Vec<f64>> = (0..realizations)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut local = spec.clone();
            local.seed = subseed(master, &format!("prefix-circuit-{r}"));
            let circuit = build_layout(&local)?;
            let a = match alpha {
                Some(a) => a.clone(),
                None => {
                    let mut rng = stream_rng(master, "prefix-alpha", r);
                    PauliString::new(n, rand::Rng::gen_range(&mut rng, 1..size), 0)?
                }
            };
            let mut fwd: Vec<u32> = (0..size as u32).collect();
            let mut entropies = Vec::with_capacity(circuit.layer_count() + 1);
            let table = TablePermutation::from_table(n, fwd.clone())?;
            entropies.push(string_amplitudes(&table, &a)?.shannon());
            for layer in circuit.layers() {
                for v in fwd.iter_mut() {
                    let mut x = u64::from(*v);
                    for pg in layer {
                        x = pg.apply_u64(x);
                    }
                    *v = x as u32;
                }
                let table = TablePermutation::from_table(n, fwd.clone())?;
                entropies.push(string_amplitudes(&table, &a)?.shannon());
            }
            Ok(entropies)
        })
        .collect::<Result<Vec<_>>>()?;
    let layers = per_real.first().map_or(0, Vec::len);
    let eq = Ensemble::Permutation.equilibrium_entropy(n, 1.0);
    Ok((0..layers)
        .map(|l| {
            let vals: Vec<f64> = per_real.iter().map(|row| row[l]).collect();
            let (mean, _, stderr) = moments(&vals);
            LayerEntropy {
                layer: l as u32,
                realizations,
                mean_entropy: mean,
                mean_residual: eq - mean,
                stderr,
            }
        })
        .collect())
}

fn run_fig1(cfg: &ExperimentConfig) -> Result<Vec<OutputTable>> {
    let widths = list_or(&cfg.n, &[8, 10, 12, 14]);
    let rounds = list_or(&cfg.rounds, &[1, 2, 3, 4, 5, 6]);
    let seeds = cfg.seeds.unwrap_or(50);
    let qs = qs_or(&cfg.q, &[1.0]);
    let mut table = OutputTable::new(
        "fig1",
        "n,rounds,q,seeds,mean_entropy,mean_residual,stddev,stderr",
    );
    for &n in &widths {
        for &r in &rounds {
            for st in feistel_residuals(n, r, &qs, seeds, cfg.seed)? {
                table.rows.push(format!(
                    "{},{},{},{},{},{},{},{}",
                    n,
                    r,
                    st.q,
                    st.seeds,
                    st.mean_entropy,
                    st.mean_residual,
                    st.stddev,
                    st.stderr
                ));
            }
        }
    }
    Ok(vec![table])
}

fn run_table1(cfg: &ExperimentConfig) -> Result<Vec<OutputTable>> {
    let n = first_or(&cfg.n, 12);
    let rounds = list_or(&cfg.rounds, &[1, 2, 3, 4, 5]);
    let seeds = cfg.seeds.unwrap_or(100);
    let qs = qs_or(&cfg.q, &[1.0, 2.0, 3.0]);
    let mut table = OutputTable::new(
        "table1",
        "cipher,n,rounds,q,seeds,mean_residual,stddev,stderr",
    );
    for &r in &rounds {
        for st in feistel_residuals(n, r, &qs, seeds, cfg.seed)? {
            table.rows.push(format!(
                "feistel,{},{},{},{},{},{},{}",
                n, r, st.q, st.seeds, st.mean_residual, st.stddev, st.stderr
            ));
        }
    }
    for st in random_perm_residuals(n, &qs, seeds, cfg.seed)? {
        table.rows.push(format!(
            "random-permutation,{},0,{},{},{},{},{}",
            n, st.q, st.seeds, st.mean_residual, st.stddev, st.stderr
        ));
    }
    Ok(vec![table])
}

/// Builds the two-part circuit used by the flip-count study: `opening`
/// packed inflationary layers, then packed layers from `tail` gates.
pub fn staged_circuit(
    n: u32,
    opening: u32,
    total: u32,
    tail: GateSource,
    seed: u64,
) -> Result<Circuit> {
    if opening > total {
        return Err(Error::StageSplit {
            layers: total,
            inflationary: opening,
            proliferation: 0,
        });
    }
    let head = build_layout(&LayoutSpec {
        n,
        layers: opening,
        kind: LayoutKind::LongRangePacked,
        gates: GateSource::Inflationary,
        seed: subseed(seed, "stage-opening"),
    })?;
    let rest = build_layout(&LayoutSpec {
        n,
        layers: total - opening,
        kind: LayoutKind::LongRangePacked,
        gates: tail,
        seed: subseed(seed, "stage-tail"),
    })?;
    let mut layers = head.layers().to_vec();
    layers.extend_from_slice(rest.layers());
    Circuit::new(n, seed, "staged".to_string(), layers)
}

/// Flip-count distributions per layer prefix, pooled over independently
/// drawn circuits from `make`.
pub fn pooled_flips(
    circuits: u32,
    samples: u64,
    master: u64,
    make: impl Fn(u64) -> Result<Circuit> + Sync,
) -> Result<Vec<FlipDistribution>> {
    let runs: Vec<Vec<FlipDistribution>> = (0..circuits)
        .into_par_iter()
        .map(|c| -> Result<Vec<FlipDistribution>> {
            let circuit = make(subseed(master, &format!("flip-circuit-{c}")))?;
            let plan = SamplePlan::Sampled {
                m: samples,
                seed: subseed(master, &format!("flip-samples-{c}")),
            };
            avalanche_distribution(&circuit, plan)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pooled: Vec<FlipDistribution> = Vec::new();
    for run in &runs {
        if pooled.is_empty() {
            pooled = run.clone();
        } else {
            for (acc, d) in pooled.iter_mut().zip(run) {
                acc.merge(d);
            }
        }
    }
    Ok(pooled)
}

fn run_fig3(cfg: &ExperimentConfig) -> Result<Vec<OutputTable>> {
    let n = first_or(&cfg.n, 21);
    let layers = cfg.layers.unwrap_or(8);
    let opening = 4.min(layers);
    let circuits = cfg.circuits.unwrap_or(8);
    let samples = cfg.samples.unwrap_or(100_000);
    let mut dist = OutputTable::new("fig3", "layout,layer,k,count,p");
    let mut summary = OutputTable::new(
        "fig3-summary",
        "layout,layer,samples,mean_flips,p1,collisions,clean_single_flips",
    );
    let studies: [(&str, Box<dyn Fn(u64) -> Result<Circuit> + Sync>); 2] = [
        (
            "generic",
            Box::new(move |seed| {
                build_layout(&LayoutSpec {
                    n,
                    layers,
                    kind: LayoutKind::LongRangePacked,
                    gates: GateSource::FullS8,
                    seed,
                })
            }),
        ),
        (
            "two-stage",
            Box::new(move |seed| staged_circuit(n, opening, layers, GateSource::FullS8, seed)),
        ),
    ];
    for (tag, make) in &studies {
        let master = subseed(cfg.seed, &format!("fig3-{tag}"));
        let pooled = pooled_flips(circuits, samples, master, make)?;
        for d in &pooled {
            for (k, &c) in d.counts.iter().enumerate() {
                if c != 0 {
                    dist.rows
                        .push(format!("{},{},{},{},{}", tag, d.layer, k, c, d.p(k)));
                }
            }
            summary.rows.push(format!(
                "{},{},{},{},{},{},{}",
                tag,
                d.layer,
                d.samples,
                d.mean(),
                d.p(1),
                d.collisions,
                d.clean_single_flips
            ));
        }
    }
    Ok(vec![dist, summary])
}

fn decay_gate_source(cfg: &ExperimentConfig) -> Result<GateSource> {
    match &cfg.gate_set {
        Some(name) => gate_source_by_name(name),
        None => Ok(GateSource::Proliferation),
    }
}

fn packed_decay(cfg: &ExperimentConfig, n: u32) -> Result<DecaySeries> {
    let k = n_log3(n)?;
    let plan = DecayPlan {
        n,
        layers: cfg.layers.unwrap_or(k + 12),
        kind: LayoutKind::LongRangePacked,
        gates: decay_gate_source(cfg)?,
        circuits: cfg.circuits.unwrap_or(16),
        samples: cfg.samples.unwrap_or(100_000),
        seed: subseed(cfg.seed, &format!("decay-packed-{n}")),
    };
    sac_decay(&plan)
}

fn brickwall_plan(cfg: &ExperimentConfig, n: u32) -> Result<DecayPlan> {
    // The flipped bit is local here, so the all-bits correlator only
    // starts its exponential tail once the spreading front has wrapped
    // the ring; depth must grow with n or wide systems never leave the
    // plateau.
    Ok(DecayPlan {
        n,
        layers: cfg.layers.unwrap_or(36.max(n + 15)),
        kind: LayoutKind::Brickwall { dim: 1 },
        gates: decay_gate_source(cfg)?,
        circuits: cfg.circuits.unwrap_or(16),
        samples: cfg.samples.unwrap_or(100_000),
        seed: subseed(cfg.seed, &format!("decay-brickwall-{n}")),
    })
}

fn brickwall_decay(cfg: &ExperimentConfig, n: u32) -> Result<DecaySeries> {
    sac_decay(&brickwall_plan(cfg, n)?)
}

fn n_log3(n: u32) -> Result<u32> {
    let (mut v, mut k) = (n, 0);
    while v > 1 && v % 3 == 0 {
        v /= 3;
        k += 1;
    }
    if v == 1 && k > 0 {
        Ok(k)
    } else {
        Err(Error::NotDivisible { n, divisor: 3 })
    }
}

fn decay_rows(table: &mut OutputTable, layout: &str, series: &DecaySeries) {
    let k = series.k().unwrap_or(0);
    let shift = if layout == "long-range-packed" {
        k.saturating_sub(1)
    } else {
        0
    };
    for p in &series.points {
        table.rows.push(format!(
            "{},{},{},{},{},{},{},{},{}",
            layout,
            series.n,
            k,
            p.layer,
            p.layer as i64 - shift as i64,
            p.mean_sq,
            p.std_err,
            series.circuits,
            series.samples
        ));
    }
}

fn run_fig4(cfg: &ExperimentConfig) -> Result<Vec<OutputTable>> {
    let packed_ns = list_or(&cfg.n, &[27, 81, 243]);
    let wall_ns: Vec<u32> = packed_ns.iter().copied().filter(|&n| n <= 81).collect();
    let mut table = OutputTable::new(
        "fig4",
        "layout,n,k,layer,layer_shifted,mean_sq,std_err,circuits,samples",
    );
    for &n in &packed_ns {
        let series = packed_decay(cfg, n)?;
        decay_rows(&mut table, "long-range-packed", &series);
    }
    for &n in &wall_ns {
        let series = brickwall_decay(cfg, n)?;
        decay_rows(&mut table, "brickwall-1d", &series);
    }
    Ok(vec![table])
}

/// Fit window cap for the long-range rate: above this squared correlator
/// the curve is still in its width-dependent shoulder, not the tail.
pub const PACKED_FIT_CAP: f64 = 0.1;

/// Fit window cap for the one-dimensional local rate: the first layers
/// after the flip are front passage, not relaxation.
pub const WALL_FIT_CAP: f64 = 0.2;

/// Ring distance around the flipped bit used for the one-dimensional
/// rate. Nearby bits see the spreading front immediately, so their
/// late-depth slope is the local relaxation rate at any width, whereas
/// the all-bits average drags a width-dependent arrival transient.
pub const WALL_LOCAL_RADIUS: u32 = 2;

fn run_fig5(cfg: &ExperimentConfig) -> Result<Vec<OutputTable>> {
    let packed_ns = list_or(&cfg.n, &[27, 81, 243]);
    let wall_ns: Vec<u32> = packed_ns.iter().copied().filter(|&n| n <= 81).collect();
    let mut table = OutputTable::new("fig5", "layout,n,k,rate,fit");
    for &n in &packed_ns {
        let series = packed_decay(cfg, n)?;
        let fit = otoc_decay_fit(&series, PACKED_FIT_CAP)?;
        table.rows.push(format!(
            "long-range-packed,{},{},{},shifted-slope",
            n, fit.k, fit.alpha
        ));
    }
    for &n in &wall_ns {
        let series = sac_decay_local(&brickwall_plan(cfg, n)?, WALL_LOCAL_RADIUS)?;
        let rate = exponential_rate(&series, WALL_FIT_CAP)?;
        let k = series.k().unwrap_or(0);
        table
            .rows
            .push(format!("brickwall-1d,{n},{k},{rate},local-exponential"));
    }
    Ok(vec![table])
}

fn run_fig6(cfg: &ExperimentConfig) -> Result<Vec<OutputTable>> {
    let n = first_or(&cfg.n, 15);
    let layers = cfg.layers.unwrap_or(12);
    let realizations = cfg.seeds.unwrap_or(256);
    let eq = Ensemble::Permutation.equilibrium_entropy(n, 1.0);
    let mut table = OutputTable::new(
        "fig6",
        "layout,layer,realizations,mean_entropy,mean_residual,rescaled_entropy,stderr",
    );
    let kinds = [
        ("brickwall-1d", LayoutKind::Brickwall { dim: 1 }),
        ("long-range-packed", LayoutKind::LongRangePacked),
    ];
    for (tag, kind) in kinds {
        let spec = LayoutSpec {
            n,
            layers,
            kind,
            gates: GateSource::FullS8,
            seed: 0,
        };
        let master = subseed(cfg.seed, &format!("fig6-{tag}"));
        for le in entropy_by_prefix(&spec, realizations, master, None)? {
            table.rows.push(format!(
                "{},{},{},{},{},{},{}",
                tag,
                le.layer,
                le.realizations,
                le.mean_entropy,
                le.mean_residual,
                le.mean_entropy / eq,
                le.stderr
            ));
        }
    }
    Ok(vec![table])
}

fn sector_tag(sector: Sector) -> &'static str {
    match sector {
        Sector::Identity => "identity",
        Sector::ZString => "z-string",
        Sector::OddY => "odd-y",
        Sector::EvenY => "even-y",
    }
}

fn sector2_tag(sector: Sector2) -> &'static str {
    match sector {
        Sector2::Identity => "identity",
        Sector2::Odd => "odd",
        Sector2::Even => "even",
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn run_gate_atlas(cfg: &ExperimentConfig) -> Result<Vec<OutputTable>> {
    let atlas = gatespace::atlas();
    let avgs = gatespace::s8_averages();
    let total = Gate3::COUNT;

    let mut census = OutputTable::new("gate-atlas-census", "family,count");
    census.rows.push(format!("all,{total}"));
    census.rows.push(format!("affine,{}", atlas.linear_count));
    census
        .rows
        .push(format!("inflationary,{}", atlas.inflationary.len()));
    census
        .rows
        .push(format!("proliferation,{}", atlas.proliferation.len()));

    let mut columns = OutputTable::new(
        "gate-atlas-columns",
        "x,z,sector,support_num,support_den,mean_support,entropy",
    );
    for col in 0..STRINGS3 {
        let (x, z) = index_string(col);
        let support_sum: u64 = (0..STRINGS3).map(|row| avgs.nonzero_at(row, col)).sum();
        let g = gcd(support_sum, total).max(1);
        columns.rows.push(format!(
            "{},{},{},{},{},{},{}",
            x,
            z,
            sector_tag(sector_of(col)),
            support_sum / g,
            total / g,
            support_sum as f64 / total as f64,
            avgs.column_entropy(col)
        ));
    }

    // Exact averaged squared transitions inside the phase-only block. The
    // denominator folds the 1/64 normalization of a squared single-gate
    // transition into the gate count.
    let mut phase_block = OutputTable::new(
        "gate-atlas-phase-block",
        "z_from,z_to,value_num,value_den,value",
    );
    let den = total * 64;
    for zf in 1u8..8 {
        for zt in 1u8..8 {
            let col = gatespace::string_index(0, zf);
            let row = gatespace::string_index(0, zt);
            let num = avgs.sum_r2_at(row, col);
            let g = gcd(num, den).max(1);
            phase_block.rows.push(format!(
                "{},{},{},{},{}",
                zf,
                zt,
                num / g,
                den / g,
                num as f64 / den as f64
            ));
        }
    }

    let mut tables = vec![census, columns, phase_block];
    if let Some(samples) = cfg.samples {
        let mut haar_table = OutputTable::new(
            "gate-atlas-haar",
            "class,x,z,sector,mean_support,entropy",
        );
        for class in [GaussianClass::Orthogonal, GaussianClass::Unitary] {
            let seed = subseed(cfg.seed, &format!("atlas-haar-{}", class.tag()));
            let avg = haar::haar_averages(class, samples, seed, haar::SUPPORT_THRESHOLD);
            for col in 0..STRINGS2 {
                let (x, z) = haar::index2_string(col);
                haar_table.rows.push(format!(
                    "{},{},{},{},{},{}",
                    class.tag(),
                    x,
                    z,
                    sector2_tag(haar::sector2_of(col)),
                    avg.column_support(col),
                    avg.column_entropy(col)
                ));
            }
        }
        tables.push(haar_table);
    }
    Ok(tables)
}

fn run_equilibrium(cfg: &ExperimentConfig) -> Result<Vec<OutputTable>> {
    let widths = list_or(&cfg.n, &[16]);
    let qs = qs_or(&cfg.q, &[1.0, 2.0, 3.0, 4.0]);
    let all = [
        ("perm", Ensemble::Permutation),
        ("o4", Ensemble::Orthogonal),
        ("u4", Ensemble::Unitary),
    ];
    let classes: Vec<(&str, Ensemble)> = match cfg.class.as_deref() {
        None | Some("all") => all.to_vec(),
        Some(pick) => {
            let found: Vec<_> = all.iter().copied().filter(|(tag, _)| *tag == pick).collect();
            if found.is_empty() {
                return Err(Error::InvalidParameter {
                    name: "class",
                    reason: format!("expected perm, o4, u4, or all, got {pick:?}"),
                });
            }
            found
        }
    };
    let mut table = OutputTable::new("equilibrium", "class,q,n,offset,equilibrium_entropy");
    for (tag, ens) in classes {
        for &q in &qs {
            for &n in &widths {
                table.rows.push(format!(
                    "{},{},{},{},{}",
                    tag,
                    q,
                    n,
                    ens.entropy_offset(q),
                    ens.equilibrium_entropy(n, q)
                ));
            }
        }
    }
    Ok(vec![table])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn scratch_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "stringforge-harness-{tag}-{}",
            std::process::id()
        ));
        let _ = std::fs::remove_dir_all(&dir);
        dir
    }

    fn read(path: &Path) -> String {
        std::fs::read_to_string(path).unwrap()
    }

    #[test]
    fn experiment_ids_round_trip_through_strings() {
        for id in ExperimentId::ALL {
            assert_eq!(id.tag().parse::<ExperimentId>().unwrap(), id);
        }
        assert!(matches!(
            "fig7".parse::<ExperimentId>(),
            Err(Error::UnknownExperiment(_))
        ));
    }

    #[test]
    fn config_json_fills_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment":"table1","n":[8],"seeds":3}"#).unwrap();
        assert_eq!(cfg.experiment, ExperimentId::Table1);
        assert_eq!(cfg.n, vec![8]);
        assert_eq!(cfg.seeds, Some(3));
        assert!(cfg.rounds.is_empty());
        assert_eq!(cfg.out, PathBuf::from("out"));
    }

    #[test]
    fn fig1_runs_and_reruns_byte_identically() {
        let dir = scratch_dir("fig1");
        let mut cfg = ExperimentConfig::new(ExperimentId::Fig1, &dir);
        cfg.n = vec![6];
        cfg.rounds = vec![1, 2];
        cfg.seeds = Some(3);
        let report = run_experiment(&cfg).unwrap();
        let csv = report
            .files
            .iter()
            .find(|p| p.extension().is_some_and(|e| e == "csv"))
            .unwrap();
        let first = read(csv);
        let mut lines = first.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,rounds,q,seeds,mean_entropy,mean_residual,stddev,stderr"
        );
        assert_eq!(lines.count(), 2);
        run_experiment(&cfg).unwrap();
        assert_eq!(read(csv), first, "rerun changed the CSV body");
        let meta: serde_json::Value = serde_json::from_str(&read(
            report
                .files
                .iter()
                .find(|p| p.to_string_lossy().ends_with(".meta.json"))
                .unwrap(),
        ))
        .unwrap();
        assert_eq!(meta["config"]["experiment"], "fig1");
        assert_eq!(meta["rows"], 2);
        assert!(meta["git_describe"].is_string());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn table1_covers_feistel_and_random_baseline() {
        let dir = scratch_dir("table1");
        let mut cfg = ExperimentConfig::new(ExperimentId::Table1, &dir);
        cfg.n = vec![8];
        cfg.rounds = vec![1, 4];
        cfg.seeds = Some(4);
        cfg.q = vec![1.0, 2.0];
        let report = run_experiment(&cfg).unwrap();
        let body = read(&report.files[0]);
        let rows: Vec<&str> = body.lines().skip(1).collect();
        // 2 rounds x 2 orders for the cipher, plus 2 baseline rows.
        assert_eq!(rows.len(), 6);
        assert_eq!(rows.iter().filter(|r| r.starts_with("feistel")).count(), 4);
        assert_eq!(
            rows.iter()
                .filter(|r| r.starts_with("random-permutation"))
                .count(),
            2
        );
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn fig3_reports_flip_distributions_for_both_layouts() {
        let dir = scratch_dir("fig3");
        let mut cfg = ExperimentConfig::new(ExperimentId::Fig3, &dir);
        cfg.n = vec![9];
        cfg.layers = Some(3);
        cfg.circuits = Some(2);
        cfg.samples = Some(2000);
        let report = run_experiment(&cfg).unwrap();
        let summary = read(&report.files[2]);
        let rows: Vec<&str> = summary.lines().skip(1).collect();
        // Layers 0..=3 for each of the two layouts.
        assert_eq!(rows.len(), 8);
        for tag in ["generic", "two-stage"] {
            let l0 = rows
                .iter()
                .find(|r| r.starts_with(&format!("{tag},0,")))
                .unwrap();
            let fields: Vec<&str> = l0.split(',').collect();
            assert_eq!(fields[2], "4000", "pooled trials at layer 0");
            assert_eq!(fields[3], "1", "one flipped bit before any layer");
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn fig6_entropy_grows_and_is_rescaled() {
        let dir = scratch_dir("fig6");
        let mut cfg = ExperimentConfig::new(ExperimentId::Fig6, &dir);
        cfg.n = vec![6];
        cfg.layers = Some(3);
        cfg.seeds = Some(4);
        let report = run_experiment(&cfg).unwrap();
        let body = read(&report.files[0]);
        let rows: Vec<&str> = body.lines().skip(1).collect();
        assert_eq!(rows.len(), 8);
        for row in &rows {
            let fields: Vec<&str> = row.split(',').collect();
            let rescaled: f64 = fields[5].parse().unwrap();
            assert!((0.0..=1.1).contains(&rescaled), "rescaled={rescaled}");
        }
        // Entropy at layer 0 is exactly zero: the string has not spread.
        let l0: f64 = rows[0].split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(l0, 0.0);
        let l3: f64 = rows[3].split(',').nth(3).unwrap().parse().unwrap();
        assert!(l3 > 1.0, "entropy after 3 layers: {l3}");
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn fig4_and_fig5_produce_decay_tables_on_a_small_grid() {
        let dir = scratch_dir("fig45");
        let mut cfg = ExperimentConfig::new(ExperimentId::Fig4, &dir);
        cfg.n = vec![27];
        cfg.layers = Some(8);
        cfg.circuits = Some(4);
        cfg.samples = Some(4096);
        let report = run_experiment(&cfg).unwrap();
        let body = read(&report.files[0]);
        assert_eq!(body.lines().skip(1).count(), 18, "9 depths, two layouts");
        let mut cfg5 = cfg.clone();
        cfg5.experiment = ExperimentId::Fig5;
        cfg5.layers = None;
        let report5 = run_experiment(&cfg5).unwrap();
        let body5 = read(&report5.files[0]);
        let rows: Vec<&str> = body5.lines().skip(1).collect();
        assert_eq!(rows.len(), 2);
        for row in rows {
            let rate: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
            assert!(rate > 0.05 && rate < 6.0, "rate={rate} in {row}");
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn gate_atlas_census_and_exact_phase_block() {
        let dir = scratch_dir("atlas");
        let cfg = ExperimentConfig::new(ExperimentId::GateAtlas, &dir);
        let report = run_experiment(&cfg).unwrap();
        let census = read(&report.files[0]);
        assert!(census.contains("inflationary,144"));
        assert!(census.contains("proliferation,10752"));
        let block = read(&report.files[4]);
        for row in block.lines().skip(1) {
            let fields: Vec<&str> = row.split(',').collect();
            assert_eq!(fields[2], "1", "numerator in {row}");
            assert_eq!(fields[3], "7", "denominator in {row}");
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn equilibrium_table_matches_module_values() {
        let dir = scratch_dir("eq");
        let mut cfg = ExperimentConfig::new(ExperimentId::Equilibrium, &dir);
        cfg.q = vec![2.0];
        cfg.n = vec![10];
        let report = run_experiment(&cfg).unwrap();
        let body = read(&report.files[0]);
        let perm_row = body.lines().find(|r| r.starts_with("perm,2,")).unwrap();
        let offset: f64 = perm_row.split(',').nth(3).unwrap().parse().unwrap();
        assert!((offset - 10f64.ln()).abs() < 1e-12);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn staged_circuit_opens_with_weight_growing_layers() {
        let c = staged_circuit(9, 2, 4, GateSource::FullS8, 7).unwrap();
        assert_eq!(c.layer_count(), 4);
        let infl = &gatespace::atlas().inflationary;
        for layer in &c.layers()[..2] {
            for pg in layer {
                assert!(infl.contains(&pg.gate), "opening layer gate not inflationary");
            }
        }
        assert!(staged_circuit(9, 5, 4, GateSource::FullS8, 7).is_err());
    }

    #[test]
    fn feistel_residuals_are_extensive_at_one_round() {
        // One round barely spreads the string: the residual stays within a
        // few nats of the full equilibrium entropy.
        let stats = feistel_residuals(8, 1, &[1.0], 5, 11).unwrap();
        assert_eq!(stats.len(), 1);
        let eq = Ensemble::Permutation.equilibrium_entropy(8, 1.0);
        assert!(stats[0].mean_residual > eq / 2.0);
        // And four rounds sit close to equilibrium.
        let deep = feistel_residuals(8, 4, &[1.0], 5, 11).unwrap();
        assert!(deep[0].mean_residual < 1.0, "{}", deep[0].mean_residual);
    }
}
