//! Command line frontend: stream a packet trace (or a synthetic workload)
//! into the randomized sketch, the deterministic update-all baseline or the
//! exact solver, and emit JSON reports with the detected prefix set and,
//! when the exact oracle is feasible, quality metrics. A bench subcommand
//! measures update throughput over pre-loaded streams.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rhhh::calibration::{eps_s_of_n, Calibration};
use rhhh::hierarchy::{Hierarchy, PacketKey, Prefix};
use rhhh::metrics::{bench_update, evaluate, EvalReport};
use rhhh::oracle::{exact_hhh, ExactFrequencyTable, MAX_ORACLE_KEYS};
use rhhh::sketch::{HhhEntry, RhhhSketch};
use rhhh::trace::{read_binary, read_csv, SyntheticSpec, TraceError, ZipfGenerator};

#[derive(Parser)]
#[command(
    name = "rhhh",
    version,
    about = "Hierarchical heavy hitter detection over IPv4 prefix lattices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream packets into one algorithm and report the heavy prefix set
    Run(RunArgs),
    /// Measure update throughput over a pre-loaded stream
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    /// Randomized constant-time-per-packet sketch
    Rhhh,
    /// Deterministic update-all-levels baseline
    Mst,
    /// Brute-force exact solver (desk scale only)
    Exact,
}

impl Algorithm {
    fn name(self) -> &'static str {
        match self {
            Algorithm::Rhhh => "rhhh",
            Algorithm::Mst => "mst",
            Algorithm::Exact => "exact",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Lines of "src_ip[,dst_ip]"
    Csv,
    /// 8-byte records: big-endian src then dst
    Bin,
    /// Synthetic Zipf workload (no input file)
    Zipf,
}

#[derive(Args)]
struct CommonArgs {
    /// Prefix lattice: 1d-byte, 1d-bit or 2d-byte
    #[arg(long, default_value = "1d-byte")]
    hierarchy: String,

    /// Overall frequency-estimation error guarantee (fraction of N)
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,

    /// Overall confidence parameter
    #[arg(long, default_value_t = 0.05)]
    delta: f64,

    /// Heavy hitter threshold (fraction of N)
    #[arg(long, default_value_t = 0.05)]
    theta: f64,

    /// Sampling denominator as a multiple of H: V = ceil(v_ratio * H)
    #[arg(long, default_value_t = 1.0)]
    v_ratio: f64,

    /// Independent update draws per packet
    #[arg(long, default_value_t = 1)]
    r: u32,

    /// Seed for the sketch and for synthetic workloads
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Input trace (required for csv/bin formats)
    #[arg(long)]
    input: Option<PathBuf>,

    /// Input format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Distinct flows for the zipf format
    #[arg(long, default_value_t = 1000)]
    zipf_flows: u64,

    /// Skew exponent for the zipf format
    #[arg(long, default_value_t = 1.0)]
    zipf_s: f64,

    /// Stream length (required for the zipf format)
    #[arg(long)]
    packets: Option<u64>,

    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Algorithm to run
    #[arg(long, value_enum)]
    algorithm: Algorithm,

    #[command(flatten)]
    common: CommonArgs,

    /// Packet counts at which to emit intermediate snapshots
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Algorithms to time (comma separated)
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Algorithm::Rhhh, Algorithm::Mst])]
    algorithm: Vec<Algorithm>,

    #[command(flatten)]
    common: CommonArgs,

    /// Timed repetitions per algorithm (median is reported)
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Bench(args) => bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn build_hierarchy(args: &CommonArgs) -> Result<Hierarchy, String> {
    Hierarchy::by_name(&args.hierarchy).map_err(|e| e.to_string())
}

fn derive_v(args: &CommonArgs, h: usize) -> Result<u64, String> {
    if args.v_ratio.is_nan() || args.v_ratio < 1.0 {
        return Err(format!(
            "--v-ratio must be at least 1, got {}",
            args.v_ratio
        ));
    }
    Ok((args.v_ratio * h as f64).ceil() as u64)
}

/// The packet source selected by the flags, as a fallible iterator.
fn open_stream(
    args: &CommonArgs,
) -> Result<Box<dyn Iterator<Item = Result<PacketKey, TraceError>>>, String> {
    match args.format {
        Format::Zipf => {
            let packets = args
                .packets
                .ok_or("--packets is required with --format zipf")?;
            let generator = ZipfGenerator::new(SyntheticSpec {
                flows: args.zipf_flows,
                zipf_s: args.zipf_s,
                packets,
                seed: args.seed,
            })
            .map_err(|e| e.to_string())?;
            Ok(Box::new(generator.map(Ok)))
        }
        Format::Csv => {
            let path = args
                .input
                .as_ref()
                .ok_or("--input is required with --format csv")?;
            Ok(Box::new(
                read_csv(path).map_err(|e| format!("{}: {e}", path.display()))?,
            ))
        }
        Format::Bin => {
            let path = args
                .input
                .as_ref()
                .ok_or("--input is required with --format bin")?;
            Ok(Box::new(
                read_binary(path).map_err(|e| format!("{}: {e}", path.display()))?,
            ))
        }
    }
}

fn emit(out: &Option<PathBuf>, report: &impl Serialize) -> Result<(), String> {
    let json = serde_json::to_string_pretty(report).map_err(|e| e.to_string())?;
    match out {
        Some(path) => {
            let mut file = std::fs::File::create(path).map_err(|e| e.to_string())?;
            file.write_all(json.as_bytes()).map_err(|e| e.to_string())?;
            file.write_all(b"\n").map_err(|e| e.to_string())?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct Snapshot {
    n: u64,
    converged: bool,
    eps_s_of_n: Option<f64>,
    hhh: serde_json::Value,
    eval: Option<EvalReport>,
}

#[derive(Serialize)]
struct RunReport {
    algorithm: &'static str,
    hierarchy: String,
    theta: f64,
    seed: u64,
    calibration: Option<Calibration>,
    checkpoints: Vec<Snapshot>,
    #[serde(rename = "final")]
    final_snapshot: Snapshot,
}

#[derive(Serialize)]
struct ExactEntry {
    prefix: String,
    frequency: u64,
}

fn exact_snapshot(table: &ExactFrequencyTable, theta: f64) -> Result<Snapshot, String> {
    let result = exact_hhh(table, theta).map_err(|e| e.to_string())?;
    let mut members: Vec<Prefix> = result.hhh().iter().copied().collect();
    members.sort_by_key(|p| (p.level(), p.node_index(), p.masked_key()));
    let entries: Vec<ExactEntry> = members
        .iter()
        .map(|p| ExactEntry {
            prefix: p.to_string(),
            frequency: table.exact_frequency(p),
        })
        .collect();
    Ok(Snapshot {
        n: table.n(),
        converged: true,
        eps_s_of_n: None,
        hhh: serde_json::to_value(entries).map_err(|e| e.to_string())?,
        eval: None,
    })
}

fn sketch_snapshot(
    sketch: &RhhhSketch,
    oracle: Option<&ExactFrequencyTable>,
    theta: f64,
    delta: f64,
    epsilon: f64,
) -> Result<Snapshot, String> {
    let output = sketch.output(theta, delta).map_err(|e| e.to_string())?;
    let eval = match oracle {
        Some(table) => Some(evaluate(&output, table, theta, epsilon).map_err(|e| e.to_string())?),
        None => None,
    };
    let calibration = sketch.calibration();
    let n = sketch.packets();
    let (converged, eps_n) = if calibration.deterministic {
        (true, None)
    } else {
        (
            n >= calibration.psi,
            (n > 0)
                .then(|| eps_s_of_n(calibration.delta_s, calibration.v, n))
                .transpose()
                .map_err(|e| e.to_string())?,
        )
    };
    let entries: &[HhhEntry] = &output.entries;
    Ok(Snapshot {
        n,
        converged,
        eps_s_of_n: eps_n,
        hhh: serde_json::to_value(entries).map_err(|e| e.to_string())?,
        eval,
    })
}

fn run(args: RunArgs) -> Result<(), String> {
    let common = &args.common;
    let hierarchy = build_hierarchy(common)?;
    let h = hierarchy.node_count();

    let mut checkpoints = args.checkpoints.clone();
    if !checkpoints.windows(2).all(|w| w[0] < w[1]) {
        return Err("--checkpoints must be strictly increasing".to_string());
    }

    let calibration = match args.algorithm {
        Algorithm::Rhhh => Some(
            Calibration::derive(
                common.epsilon,
                common.delta,
                common.theta,
                derive_v(common, h)?,
                common.r,
                0.5,
                h,
            )
            .map_err(|e| e.to_string())?,
        ),
        Algorithm::Mst => Some(
            Calibration::deterministic(common.epsilon, common.theta).map_err(|e| e.to_string())?,
        ),
        Algorithm::Exact => None,
    };

    let mut sketch = match &calibration {
        Some(cal) => Some(
            RhhhSketch::new(hierarchy.clone(), cal.clone(), common.seed)
                .map_err(|e| e.to_string())?,
        ),
        None => None,
    };

    // The exact table doubles as the oracle for rhhh/mst evaluation; it is
    // dropped (with a warning) past the key cap to keep large traces usable.
    let mut oracle = Some(ExactFrequencyTable::new(hierarchy.clone()));
    let mut n = 0u64;
    let mut snapshots = Vec::new();
    checkpoints.reverse(); // pop from the back in ascending order

    let take_snapshot = |sketch: &Option<RhhhSketch>,
                         oracle: &Option<ExactFrequencyTable>|
     -> Result<Snapshot, String> {
        match (&args.algorithm, sketch) {
            (Algorithm::Exact, _) => {
                let table = oracle.as_ref().ok_or_else(|| {
                    format!("exact algorithm needs at most {MAX_ORACLE_KEYS} distinct keys")
                })?;
                exact_snapshot(table, common.theta)
            }
            (_, Some(sketch)) => sketch_snapshot(
                sketch,
                oracle.as_ref(),
                common.theta,
                common.delta,
                common.epsilon,
            ),
            (_, None) => unreachable!("sketch algorithms always build a sketch"),
        }
    };

    for record in open_stream(common)? {
        let key = record.map_err(|e| e.to_string())?;
        n += 1;
        if let Some(sketch) = sketch.as_mut() {
            sketch.update(key);
        }
        if let Some(table) = oracle.as_mut() {
            table.record(key);
            if table.distinct_keys() > MAX_ORACLE_KEYS {
                if args.algorithm == Algorithm::Exact {
                    return Err(format!(
                        "exact algorithm supports at most {MAX_ORACLE_KEYS} distinct keys"
                    ));
                }
                eprintln!(
                    "warning: more than {MAX_ORACLE_KEYS} distinct keys; oracle evaluation disabled"
                );
                oracle = None;
            }
        }
        if checkpoints.last() == Some(&n) {
            checkpoints.pop();
            snapshots.push(take_snapshot(&sketch, &oracle)?);
        }
    }

    let final_snapshot = take_snapshot(&sketch, &oracle)?;
    let report = RunReport {
        algorithm: args.algorithm.name(),
        hierarchy: hierarchy.name().to_string(),
        theta: common.theta,
        seed: common.seed,
        calibration,
        checkpoints: snapshots,
        final_snapshot,
    };
    emit(&common.out, &report)
}

#[derive(Serialize)]
struct BenchEntry {
    algorithm: &'static str,
    v: u64,
    r: u32,
    capacity: usize,
    updates_per_second: f64,
    reps: Vec<f64>,
    min: f64,
    max: f64,
}

#[derive(Serialize)]
struct BenchReport {
    hierarchy: String,
    n: u64,
    repetitions: usize,
    results: Vec<BenchEntry>,
}

fn bench(args: BenchArgs) -> Result<(), String> {
    let common = &args.common;
    let hierarchy = build_hierarchy(common)?;
    let h = hierarchy.node_count();

    let mut stream = Vec::new();
    for record in open_stream(common)? {
        stream.push(record.map_err(|e| e.to_string())?);
    }

    let mut results = Vec::new();
    for algorithm in &args.algorithm {
        let (calibration, factory): (Calibration, Box<dyn Fn() -> RhhhSketch>) = match algorithm {
            Algorithm::Rhhh => {
                let cal = Calibration::derive(
                    common.epsilon,
                    common.delta,
                    common.theta,
                    derive_v(common, h)?,
                    common.r,
                    0.5,
                    h,
                )
                .map_err(|e| e.to_string())?;
                let (hier, c, seed) = (hierarchy.clone(), cal.clone(), common.seed);
                (
                    cal,
                    Box::new(move || RhhhSketch::new(hier.clone(), c.clone(), seed).unwrap()),
                )
            }
            Algorithm::Mst => {
                let cal = Calibration::deterministic(common.epsilon, common.theta)
                    .map_err(|e| e.to_string())?;
                let (hier, c) = (hierarchy.clone(), cal.clone());
                (
                    cal,
                    Box::new(move || RhhhSketch::new(hier.clone(), c.clone(), 0).unwrap()),
                )
            }
            Algorithm::Exact => return Err("the exact solver has no update path to bench".into()),
        };
        let result = bench_update(factory.as_ref(), &stream, args.reps);
        let (min, max) = result
            .reps
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        results.push(BenchEntry {
            algorithm: algorithm.name(),
            v: calibration.v,
            r: calibration.r,
            capacity: calibration.capacity,
            updates_per_second: result.updates_per_second,
            reps: result.reps,
            min: if min.is_finite() { min } else { 0.0 },
            max,
        });
    }

    let report = BenchReport {
        hierarchy: hierarchy.name().to_string(),
        n: stream.len() as u64,
        repetitions: args.reps,
        results,
    };
    emit(&common.out, &report)
}
