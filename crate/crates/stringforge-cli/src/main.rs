//! Command-line front end: cipher entropies, gate censuses, correlators,
//! equilibrium values, mean-field flows, and the named reproduction studies.
//!
//! Every command writes CSV files under `--out` (a directory) and prints the
//! paths it wrote. The named studies additionally write a `.meta.json`
//! sidecar per table recording the resolved config, wall time, and the
//! `git describe` string. `STRINGFORGE_THREADS` caps the worker pool.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use stringforge::amplitudes::string_amplitudes;
use stringforge::circuit::{build_layout, Circuit, LayoutKind, LayoutSpec};
use stringforge::equilibrium::Ensemble;
use stringforge::feistel::FeistelCipher;
use stringforge::gate::Gate3;
use stringforge::gatespace::{
    self, index_string, sector_of, transition_numerators, Sector, STRINGS3,
};
use stringforge::haar::{self, GaussianClass};
use stringforge::harness::{
    self, gate_source_by_name, staged_circuit, ExperimentConfig, ExperimentId,
};
use stringforge::meanfield::{self, MeanFieldModel};
use stringforge::oracle::{PermutationOracle, TablePermutation};
use stringforge::otoc::{avalanche_distribution, cpca, sac, sac_decay, DecayPlan, SamplePlan};
use stringforge::pauli::PauliString;
use stringforge::rng::subseed;

#[derive(Parser)]
#[command(
    name = "stringforge",
    version,
    about = "Block ciphers as reversible 3-bit circuits, analyzed in Pauli-string space"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact string-amplitude entropies of a cipher family, per seed.
    Amplitudes(AmplitudesArgs),
    /// Gate classification, transition diagnostics, and Haar baselines.
    #[command(subcommand)]
    Gates(GatesCmd),
    /// Correlators: avalanche criterion, attack correlator, decay, flips.
    #[command(subcommand)]
    Otoc(OtocCmd),
    /// Closed-form equilibrium entropies per ensemble.
    Equilibrium(EquilibriumArgs),
    /// Mean-field density flow and exact hitting times.
    Meanfield(MeanfieldArgs),
    /// Study: residual entropy of Feistel ciphers against rounds.
    Fig1(ExperimentArgs),
    /// Study: residual entropies of orders 1-3 with a random baseline.
    Table1(ExperimentArgs),
    /// Study: flip-count distributions, two-stage versus generic.
    Fig3(ExperimentArgs),
    /// Study: squared-correlator decay against depth per layout.
    Fig4(ExperimentArgs),
    /// Study: fitted decay rates per width and layout.
    Fig5(ExperimentArgs),
    /// Study: entropy growth per layer, brickwall versus packed.
    Fig6(ExperimentArgs),
    /// Study: gate census and sector-resolved transition statistics.
    GateAtlas(ExperimentArgs),
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// Register widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Vec<u32>,
    /// Feistel round counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    rounds: Vec<u32>,
    /// Circuit depth in layers.
    #[arg(long)]
    layers: Option<u32>,
    /// Gate pool: s8, inflationary, or proliferation.
    #[arg(long)]
    gate_set: Option<String>,
    /// Independent realizations to average over.
    #[arg(long)]
    seeds: Option<u64>,
    /// Monte Carlo samples per realization.
    #[arg(long)]
    samples: Option<u64>,
    /// Circuit draws for decay studies.
    #[arg(long)]
    circuits: Option<u32>,
    /// Entropy orders, comma separated.
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    /// Master seed for every derived stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON config whose fields override these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl ExperimentArgs {
    fn into_config(self, id: ExperimentId) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(id, self.out);
        cfg.n = self.n;
        cfg.rounds = self.rounds;
        cfg.layers = self.layers;
        cfg.gate_set = self.gate_set;
        cfg.seeds = self.seeds;
        cfg.samples = self.samples;
        cfg.circuits = self.circuits;
        cfg.q = self.q;
        cfg.seed = self.seed;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let patch: serde_json::Value =
                serde_json::from_str(&text).context("config is not valid JSON")?;
            let mut base = serde_json::to_value(&cfg)?;
            let (Some(base_map), Some(patch_map)) = (base.as_object_mut(), patch.as_object())
            else {
                bail!("config must be a JSON object");
            };
            for (key, value) in patch_map {
                base_map.insert(key.clone(), value.clone());
            }
            cfg = serde_json::from_value(base).context("config fields do not match")?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct AmplitudesArgs {
    /// feistel or random.
    #[arg(long, default_value = "feistel")]
    cipher: String,
    #[arg(long, default_value_t = 16)]
    n: u32,
    /// Round count for the feistel cipher.
    #[arg(long, default_value_t = 4)]
    rounds: u32,
    /// Flip mask of the initial string (hex with 0x, else decimal).
    #[arg(long, default_value = "0x1", value_parser = parse_mask)]
    alpha_x: u64,
    /// Phase mask of the initial string.
    #[arg(long, default_value = "0x0", value_parser = parse_mask)]
    alpha_z: u64,
    /// Entropy orders, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0])]
    q: Vec<f64>,
    /// Seed indices: an inclusive range "0..99" or a count "50".
    #[arg(long, default_value = "0..49")]
    seeds: String,
    /// Master seed the per-index keys derive from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum GatesCmd {
    /// Writes the gate census as JSON plus the weight-growing gate list in
    /// diff-friendly line format.
    Classify {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Per-column participation statistics of a gate pool's transitions.
    Diagnostics {
        /// s8, inflationary, or proliferation.
        #[arg(long, default_value = "s8")]
        set: String,
        /// Participation orders (0 counts support, 1 is Shannon).
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0])]
        q: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// The same statistics for sampled Haar 2-qubit matrices.
    Haar {
        /// o4 or u4.
        #[arg(long, default_value = "u4")]
        class: String,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum OtocCmd {
    /// Avalanche correlator of input bit i against output bit j.
    Sac {
        #[arg(long, default_value_t = 8)]
        n: u32,
        /// feistel or random.
        #[arg(long, default_value = "feistel")]
        cipher: String,
        #[arg(long, default_value_t = 3)]
        rounds: u32,
        /// Input bit; sweeps all bits when omitted.
        #[arg(long)]
        i: Option<u32>,
        /// Output bit; sweeps all bits when omitted.
        #[arg(long)]
        j: Option<u32>,
        /// Samples per pair; 0 runs the exhaustive sum.
        #[arg(long, default_value_t = 0)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Three-query attack correlator against Feistel ciphers, swept over
    /// low-half input bits with the matching high-half output bit.
    Cpca {
        #[arg(long, default_value_t = 16)]
        n: u32,
        #[arg(long, default_value_t = 3)]
        rounds: u32,
        /// Samples per pair; 0 runs the exhaustive sum.
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        /// Cipher seed indices: "0..9" or a count.
        #[arg(long, default_value = "0..9")]
        seeds: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Depth decay of the squared avalanche correlator of random circuits.
    Decay {
        #[arg(long, default_value_t = 27)]
        n: u32,
        #[arg(long, default_value_t = 12)]
        layers: u32,
        /// long-range-packed or brickwall-1d/2d/3d.
        #[arg(long, default_value = "long-range-packed")]
        layout: String,
        #[arg(long, default_value = "proliferation")]
        gate_set: String,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 16)]
        circuits: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Flip-count distribution after each layer prefix.
    Avalanche {
        #[arg(long, default_value_t = 21)]
        n: u32,
        #[arg(long, default_value_t = 8)]
        layers: u32,
        /// long-range-packed, brickwall-1d/2d/3d, or two-stage (four
        /// weight-growing opening layers, then the chosen pool).
        #[arg(long, default_value = "two-stage")]
        layout: String,
        #[arg(long, default_value = "s8")]
        gate_set: String,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EquilibriumArgs {
    /// perm, o4, u4, or all.
    #[arg(long, default_value = "all")]
    class: String,
    /// Entropy orders, comma separated.
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    /// Register widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Vec<u32>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct MeanfieldArgs {
    /// 3bit or 2qubit.
    #[arg(long, default_value = "3bit")]
    class: String,
    #[arg(long, default_value_t = 1000)]
    n: u32,
    /// Stop when the density is within eps of its fixed point.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Initial density; defaults to a single occupied line, 1/n.
    #[arg(long)]
    rho0: Option<f64>,
    /// Trajectory rows to tabulate.
    #[arg(long, default_value_t = 200)]
    points: u32,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_mask(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("invalid mask {s:?}: {e}"))
}

/// "A..B" is the inclusive index range; a bare count "N" means 0..N.
fn parse_seed_list(s: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let lo: u64 = a.trim().parse().context("range start")?;
        let hi: u64 = b.trim().parse().context("range end")?;
        if hi < lo {
            bail!("empty seed range {s:?}");
        }
        Ok((lo..=hi).collect())
    } else {
        let count: u64 = s.trim().parse().context("seed count")?;
        Ok((0..count).collect())
    }
}

fn plan_for(samples: u64, seed: u64, purpose: &str) -> SamplePlan {
    if samples == 0 {
        SamplePlan::Exhaustive
    } else {
        SamplePlan::Sampled {
            m: samples,
            seed: subseed(seed, purpose),
        }
    }
}

fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut body = String::with_capacity(rows.len() * 32);
    body.push_str(header);
    body.push('\n');
    for row in rows {
        body.push_str(row);
        body.push('\n');
    }
    std::fs::write(&path, body)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn main() -> anyhow::Result<()> {
    harness::init_thread_pool();
    let cli = Cli::parse();
    match cli.command {
        Command::Amplitudes(args) => run_amplitudes(args),
        Command::Gates(cmd) => run_gates(cmd),
        Command::Otoc(cmd) => run_otoc(cmd),
        Command::Equilibrium(args) => run_equilibrium(args),
        Command::Meanfield(args) => run_meanfield(args),
        Command::Fig1(args) => run_study(args, ExperimentId::Fig1),
        Command::Table1(args) => run_study(args, ExperimentId::Table1),
        Command::Fig3(args) => run_study(args, ExperimentId::Fig3),
        Command::Fig4(args) => run_study(args, ExperimentId::Fig4),
        Command::Fig5(args) => run_study(args, ExperimentId::Fig5),
        Command::Fig6(args) => run_study(args, ExperimentId::Fig6),
        Command::GateAtlas(args) => run_study(args, ExperimentId::GateAtlas),
    }
}

fn run_study(args: ExperimentArgs, id: ExperimentId) -> anyhow::Result<()> {
    let cfg = args.into_config(id)?;
    let report = harness::run_experiment(&cfg)?;
    for path in report.files {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_amplitudes(args: AmplitudesArgs) -> anyhow::Result<()> {
    let seeds = parse_seed_list(&args.seeds)?;
    let alpha = PauliString::new(args.n, args.alpha_x, args.alpha_z)?;
    let round_col = if args.cipher == "feistel" {
        args.rounds
    } else {
        0
    };
    let per_seed: Vec<(u64, Vec<f64>)> = seeds
        .par_iter()
        .map(|&s| -> anyhow::Result<(u64, Vec<f64>)> {
            let hist = match args.cipher.as_str() {
                "feistel" => {
                    let key = subseed(args.seed, &format!("feistel-n{}-s{s}", args.n));
                    let cipher = FeistelCipher::new(args.n, args.rounds, key)?;
                    string_amplitudes(&cipher, &alpha)?
                }
                "random" => {
                    let perm =
                        TablePermutation::random(args.n, subseed(args.seed, "random-perm"), s)?;
                    string_amplitudes(&perm, &alpha)?
                }
                other => bail!("unknown cipher {other:?}, expected feistel or random"),
            };
            Ok((s, args.q.iter().map(|&q| hist.renyi(q)).collect()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (s, entropies) in &per_seed {
        for (&q, &s_q) in args.q.iter().zip(entropies) {
            let residual = Ensemble::Permutation.equilibrium_entropy(args.n, q) - s_q;
            rows.push(format!("{s},{round_col},{q},{s_q},{residual}"));
        }
    }
    write_csv(
        &args.out,
        "amplitudes.csv",
        "seed,round,q,s_q,residual",
        &rows,
    )?;
    Ok(())
}

fn run_gates(cmd: GatesCmd) -> anyhow::Result<()> {
    match cmd {
        GatesCmd::Classify { out } => {
            let atlas = gatespace::atlas();
            std::fs::create_dir_all(&out)?;
            let json_path = out.join("gates.json");
            let doc = serde_json::json!({
                "all": Gate3::COUNT,
                "affine": atlas.linear_count,
                "inflationary_count": atlas.inflationary.len(),
                "proliferation_count": atlas.proliferation.len(),
                "inflationary": atlas.inflationary,
            });
            std::fs::write(&json_path, serde_json::to_string_pretty(&doc)?)?;
            println!("wrote {}", json_path.display());
            let list_path = out.join("inflationary.txt");
            let mut list = String::new();
            for (idx, gate) in atlas.inflationary.iter().enumerate() {
                list.push_str(&gate.list_line(idx + 1));
                list.push('\n');
            }
            std::fs::write(&list_path, list)?;
            println!("wrote {}", list_path.display());
            println!(
                "{} gates: {} affine, {} weight-growing, {} max-spreading",
                Gate3::COUNT,
                atlas.linear_count,
                atlas.inflationary.len(),
                atlas.proliferation.len()
            );
            Ok(())
        }
        GatesCmd::Diagnostics { set, q, out } => {
            let pool: Vec<Gate3> = match set.as_str() {
                "s8" => stringforge::gate::all_gates(),
                "inflationary" => gatespace::atlas().inflationary.clone(),
                "proliferation" => gatespace::atlas().proliferation.clone(),
                other => bail!("unknown set {other:?}"),
            };
            let rows = diagnostics_rows(&set, &pool, &q);
            write_csv(
                &out,
                "gates-diagnostics.csv",
                "set,x,z,sector,q,mean_number,mean_entropy",
                &rows,
            )?;
            Ok(())
        }
        GatesCmd::Haar {
            class,
            samples,
            seed,
            out,
        } => {
            let class = match class.as_str() {
                "o4" => GaussianClass::Orthogonal,
                "u4" => GaussianClass::Unitary,
                other => bail!("unknown class {other:?}, expected o4 or u4"),
            };
            let avg = haar::haar_averages(class, samples, seed, haar::SUPPORT_THRESHOLD);
            let mut rows = Vec::new();
            for col in 0..haar::STRINGS2 {
                let (x, z) = haar::index2_string(col);
                let sector = match haar::sector2_of(col) {
                    haar::Sector2::Identity => "identity",
                    haar::Sector2::Odd => "odd",
                    haar::Sector2::Even => "even",
                };
                rows.push(format!(
                    "{},{},{},{},{},{},{}",
                    class.tag(),
                    x,
                    z,
                    sector,
                    avg.column_support(col),
                    avg.column_weight(col),
                    avg.column_entropy(col)
                ));
            }
            write_csv(
                &out,
                "gates-haar.csv",
                "class,x,z,sector,mean_support,mean_weight,mean_entropy",
                &rows,
            )?;
            Ok(())
        }
    }
}

fn sector_tag(sector: Sector) -> &'static str {
    match sector {
        Sector::Identity => "identity",
        Sector::ZString => "z-string",
        Sector::OddY => "odd-y",
        Sector::EvenY => "even-y",
    }
}

/// Gate-averaged participation number `exp(S_q)` and entropy `S_q` of every
/// input column's squared-transition distribution.
fn diagnostics_rows(set: &str, pool: &[Gate3], qs: &[f64]) -> Vec<String> {
    let zeros = || vec![[0.0f64; 2]; STRINGS3 * qs.len()];
    let sums = pool
        .par_iter()
        .fold(zeros, |mut acc, &gate| {
            let t = transition_numerators(gate);
            for col in 0..STRINGS3 {
                for (qi, &q) in qs.iter().enumerate() {
                    let entropy = column_renyi(&t, col, q);
                    let cell = &mut acc[col * qs.len() + qi];
                    cell[0] += entropy.exp();
                    cell[1] += entropy;
                }
            }
            acc
        })
        .reduce(zeros, |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x[0] += y[0];
                x[1] += y[1];
            }
            a
        });
    let m = pool.len() as f64;
    let mut rows = Vec::with_capacity(STRINGS3 * qs.len());
    for col in 0..STRINGS3 {
        let (x, z) = index_string(col);
        for (qi, &q) in qs.iter().enumerate() {
            let cell = sums[col * qs.len() + qi];
            rows.push(format!(
                "{},{},{},{},{},{},{}",
                set,
                x,
                z,
                sector_tag(sector_of(col)),
                q,
                cell[0] / m,
                cell[1] / m
            ));
        }
    }
    rows
}

/// Order-`q` participation entropy of one column of a single gate's squared
/// transition matrix (natural log; the column weights sum to one).
fn column_renyi(t: &stringforge::gatespace::Transition, col: usize, q: f64) -> f64 {
    let probs = (0..STRINGS3).filter_map(|row| {
        let num = f64::from(t.num[row][col]);
        (num != 0.0).then_some(num * num / 64.0)
    });
    if q == 0.0 {
        (probs.count() as f64).ln()
    } else if (q - 1.0).abs() < 1e-12 {
        -probs.map(|p| p * p.ln()).sum::<f64>()
    } else {
        probs.map(|p| p.powf(q)).sum::<f64>().ln() / (1.0 - q)
    }
}

fn parse_layout(name: &str) -> anyhow::Result<LayoutKind> {
    match name {
        "long-range-packed" => Ok(LayoutKind::LongRangePacked),
        "brickwall-1d" => Ok(LayoutKind::Brickwall { dim: 1 }),
        "brickwall-2d" => Ok(LayoutKind::Brickwall { dim: 2 }),
        "brickwall-3d" => Ok(LayoutKind::Brickwall { dim: 3 }),
        other => bail!("unknown layout {other:?}"),
    }
}

fn run_otoc(cmd: OtocCmd) -> anyhow::Result<()> {
    match cmd {
        OtocCmd::Sac {
            n,
            cipher,
            rounds,
            i,
            j,
            samples,
            seed,
            out,
        } => {
            let oracle: Box<dyn PermutationOracle> = match cipher.as_str() {
                "feistel" => Box::new(FeistelCipher::new(
                    n,
                    rounds,
                    subseed(seed, &format!("feistel-n{n}-s0")),
                )?),
                "random" => Box::new(TablePermutation::random(
                    n,
                    subseed(seed, "random-perm"),
                    0,
                )?),
                other => bail!("unknown cipher {other:?}"),
            };
            let is: Vec<u32> = i.map_or_else(|| (0..n).collect(), |v| vec![v]);
            let js: Vec<u32> = j.map_or_else(|| (0..n).collect(), |v| vec![v]);
            let mut rows = Vec::new();
            for &bi in &is {
                for &bj in &js {
                    let plan = plan_for(samples, seed, &format!("sac-{bi}-{bj}"));
                    let v = sac(oracle.as_ref(), bi, bj, plan)?;
                    rows.push(format!(
                        "{n},{bi},{bj},{},{},{samples}",
                        v.value(),
                        v.std_err()
                    ));
                }
            }
            write_csv(
                &out,
                "otoc-sac.csv",
                "n,i,j,value,std_err,samples",
                &rows,
            )?;
            Ok(())
        }
        OtocCmd::Cpca {
            n,
            rounds,
            samples,
            seeds,
            seed,
            out,
        } => {
            let seed_list = parse_seed_list(&seeds)?;
            let mut rows = Vec::new();
            for &s in &seed_list {
                let key = subseed(seed, &format!("feistel-n{n}-s{s}"));
                let cipher = FeistelCipher::new(n, rounds, key)?;
                for bj in 0..n / 2 {
                    let bi = bj + n / 2;
                    let plan = plan_for(samples, seed, &format!("cpca-{s}-{bj}"));
                    let v = cpca(&cipher, bi, bj, plan)?;
                    rows.push(format!(
                        "{s},{rounds},{bj},{bi},{},{},{samples}",
                        v.value(),
                        v.std_err()
                    ));
                }
            }
            write_csv(
                &out,
                "otoc-cpca.csv",
                "seed,rounds,j,i,value,std_err,samples",
                &rows,
            )?;
            Ok(())
        }
        OtocCmd::Decay {
            n,
            layers,
            layout,
            gate_set,
            samples,
            circuits,
            seed,
            out,
        } => {
            let plan = DecayPlan {
                n,
                layers,
                kind: parse_layout(&layout)?,
                gates: gate_source_by_name(&gate_set)?,
                circuits,
                samples,
                seed: subseed(seed, "decay"),
            };
            let series = sac_decay(&plan)?;
            let k = series.k().unwrap_or(0);
            let shift = if matches!(plan.kind, LayoutKind::LongRangePacked) {
                k.saturating_sub(1)
            } else {
                0
            };
            let rows: Vec<String> = series
                .points
                .iter()
                .map(|p| {
                    format!(
                        "{n},{k},{},{},{},{}",
                        p.layer,
                        p.layer as i64 - i64::from(shift),
                        p.mean_sq,
                        p.std_err
                    )
                })
                .collect();
            write_csv(
                &out,
                "otoc-decay.csv",
                "n,k,layer,layer_shifted,mean_sq_otoc,stderr",
                &rows,
            )?;
            Ok(())
        }
        OtocCmd::Avalanche {
            n,
            layers,
            layout,
            gate_set,
            samples,
            seed,
            out,
        } => {
            let gates = gate_source_by_name(&gate_set)?;
            let circuit: Circuit = if layout == "two-stage" {
                staged_circuit(n, 4.min(layers), layers, gates, subseed(seed, "avalanche"))?
            } else {
                build_layout(&LayoutSpec {
                    n,
                    layers,
                    kind: parse_layout(&layout)?,
                    gates,
                    seed: subseed(seed, "avalanche"),
                })?
            };
            let plan = if samples == 0 {
                SamplePlan::Exhaustive
            } else {
                SamplePlan::Sampled {
                    m: samples,
                    seed: subseed(seed, "avalanche-plan"),
                }
            };
            let dists = avalanche_distribution(&circuit, plan)?;
            let mut rows = Vec::new();
            let mut summary = Vec::new();
            for d in &dists {
                for (k, &c) in d.counts.iter().enumerate() {
                    if c != 0 {
                        rows.push(format!("{},{},{}", d.layer, k, d.p(k)));
                    }
                }
                summary.push(format!(
                    "{},{},{},{},{},{}",
                    d.layer,
                    d.samples,
                    d.mean(),
                    d.p(1),
                    d.collisions,
                    d.clean_single_flips
                ));
            }
            write_csv(&out, "otoc-avalanche.csv", "layer,k,p_k", &rows)?;
            write_csv(
                &out,
                "otoc-avalanche-summary.csv",
                "layer,samples,mean_flips,p1,collisions,clean_single_flips",
                &summary,
            )?;
            Ok(())
        }
    }
}

fn run_equilibrium(args: EquilibriumArgs) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::new(ExperimentId::Equilibrium, args.out);
    cfg.class = Some(args.class);
    cfg.q = args.q;
    cfg.n = args.n;
    let report = harness::run_experiment(&cfg)?;
    for path in &report.files {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_meanfield(args: MeanfieldArgs) -> anyhow::Result<()> {
    let model = match args.class.as_str() {
        "3bit" => MeanFieldModel::ThreeBitGates,
        "2qubit" => MeanFieldModel::TwoQubitHaar,
        other => bail!("unknown class {other:?}, expected 3bit or 2qubit"),
    };
    if args.n == 0 {
        bail!("n must be positive");
    }
    let rho0 = args.rho0.unwrap_or(1.0 / f64::from(args.n));
    let fp = model.fixed_point();
    let rho_f = fp * (1.0 - args.eps);
    let hit = model.hitting_time(args.n, rho0, rho_f)?;
    let points = args.points.max(1);
    let taus: Vec<f64> = (0..=points)
        .map(|p| hit * f64::from(p) / f64::from(points))
        .collect();
    let densities = meanfield::trajectory(model, args.n, rho0, &taus);
    let rows: Vec<String> = taus
        .iter()
        .zip(&densities)
        .map(|(t, r)| format!("{t},{r}"))
        .collect();
    write_csv(&args.out, "meanfield.csv", "tau,rho", &rows)?;
    println!(
        "class {}: fixed point {fp}, density {rho0} reaches {rho_f} after {hit} gates ({} per line)",
        args.class,
        hit / f64::from(args.n)
    );
    Ok(())
}
