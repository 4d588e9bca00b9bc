//! Evaluation of a sketch's output against the exact oracle, and update
//! throughput measurement over pre-loaded streams.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use serde::Serialize;

use crate::hierarchy::PacketKey;
use crate::oracle::{exact_hhh, ExactFrequencyTable, OracleError};
use crate::sketch::{HhhSet, RhhhSketch};

/// Quality metrics of one output set against exact ground truth.
///
/// * `accuracy_error_ratio` - fraction of output prefixes whose upper-bound
///   estimate misses the true frequency by more than ε·N;
/// * `coverage_errors` - prefixes left out of the output whose exact
///   conditioned frequency (against the output) still reaches θ·N;
/// * `false_positive_rate` - fraction of output prefixes absent from the
///   exact HHH set.
///
/// `wall_time` (seconds) and `updates_per_second` are zero unless filled in
/// by a timed run; evaluation itself is untimed so reports stay reproducible.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy_error_ratio: f64,
    pub coverage_errors: u64,
    pub coverage_error_list: Vec<String>,
    pub false_positive_rate: f64,
    pub output_size: usize,
    #[serde(rename = "N")]
    pub n: u64,
    pub wall_time: f64,
    pub updates_per_second: f64,
}

/// Compares `output` with exact ground truth for the same stream prefix.
/// The coverage scan visits every prefix with nonzero exact frequency that
/// is absent from the output; all other prefixes have conditioned frequency
/// zero and cannot be coverage errors.
pub fn evaluate(
    output: &HhhSet,
    exact: &ExactFrequencyTable,
    theta: f64,
    epsilon: f64,
) -> Result<EvalReport, OracleError> {
    let hierarchy = exact.hierarchy();
    let n = exact.n();
    let selected: HashSet<_> = output.prefixes().into_iter().collect();
    let keys: Vec<(PacketKey, u64)> = exact.iter().collect();

    let covered: Vec<bool> = keys
        .iter()
        .map(|(key, _)| selected.iter().any(|p| p.contains_key(*key)))
        .collect();

    // Per node: total mass and not-yet-covered mass per masked value.
    let mut totals: Vec<HashMap<PacketKey, u64>> = vec![HashMap::new(); hierarchy.node_count()];
    let mut uncovered: Vec<HashMap<PacketKey, u64>> = vec![HashMap::new(); hierarchy.node_count()];
    for node in 0..hierarchy.node_count() {
        let pattern = *hierarchy.node(node);
        for (i, (key, count)) in keys.iter().enumerate() {
            let masked = pattern.mask(*key);
            *totals[node].entry(masked).or_insert(0) += count;
            if !covered[i] {
                *uncovered[node].entry(masked).or_insert(0) += count;
            }
        }
    }

    let accuracy_errors = output
        .entries
        .iter()
        .filter(|e| {
            let truth = totals[e.prefix.node_index()]
                .get(&e.prefix.masked_key())
                .copied()
                .unwrap_or(0) as f64;
            (truth - e.estimate.upper).abs() > epsilon * n as f64
        })
        .count();
    let accuracy_error_ratio = if output.entries.is_empty() {
        0.0
    } else {
        accuracy_errors as f64 / output.entries.len() as f64
    };

    let mut coverage_error_list = Vec::new();
    for node in 0..hierarchy.node_count() {
        for masked in totals[node].keys() {
            let prefix = hierarchy.generalize(*masked, node);
            if selected.contains(&prefix) {
                continue;
            }
            let conditioned = uncovered[node].get(masked).copied().unwrap_or(0);
            if conditioned as f64 >= theta * n as f64 {
                coverage_error_list.push(prefix.to_string());
            }
        }
    }
    coverage_error_list.sort();

    let exact_set = exact_hhh(exact, theta)?;
    let false_positives = output
        .entries
        .iter()
        .filter(|e| !exact_set.hhh().contains(&e.prefix))
        .count();
    let false_positive_rate = if output.entries.is_empty() {
        0.0
    } else {
        false_positives as f64 / output.entries.len() as f64
    };

    Ok(EvalReport {
        accuracy_error_ratio,
        coverage_errors: coverage_error_list.len() as u64,
        coverage_error_list,
        false_positive_rate,
        output_size: output.len(),
        n,
        wall_time: 0.0,
        updates_per_second: 0.0,
    })
}

/// Throughput of one repetition set: median updates per second plus the
/// individual repetitions for spread.
#[derive(Clone, Debug, Serialize)]
pub struct BenchResult {
    pub updates_per_second: f64,
    pub reps: Vec<f64>,
    pub n: u64,
}

/// Times `stream` through freshly built sketches, one per repetition.
/// The stream must already be materialized; parsing is never timed.
pub fn bench_update(
    make_sketch: impl Fn() -> RhhhSketch,
    stream: &[PacketKey],
    repetitions: usize,
) -> BenchResult {
    let n = stream.len() as u64;
    if n == 0 {
        return BenchResult {
            updates_per_second: 0.0,
            reps: Vec::new(),
            n: 0,
        };
    }
    let mut reps = Vec::with_capacity(repetitions);
    for _ in 0..repetitions.max(1) {
        let mut sketch = make_sketch();
        let start = Instant::now();
        for &key in stream {
            sketch.update(key);
        }
        let elapsed = start.elapsed().as_secs_f64();
        std::hint::black_box(&sketch);
        reps.push(n as f64 / elapsed.max(1e-12));
    }
    let mut sorted = reps.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    BenchResult {
        updates_per_second: median,
        reps,
        n,
    }
}
