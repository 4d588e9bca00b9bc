//! Exact reference implementations for desk-scale validation: per-key
//! frequency tables, set-based conditioned frequencies, and the level-by-level
//! exact HHH construction. Everything here enumerates fully specified keys,
//! so inputs are capped at [`MAX_ORACLE_KEYS`] distinct keys.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::hierarchy::{best_generalized, Hierarchy, PacketKey, Prefix};

/// Upper bound on distinct keys the oracle will enumerate.
pub const MAX_ORACLE_KEYS: usize = 1_000_000;

#[derive(Debug, PartialEq)]
pub enum OracleError {
    TooManyKeys { distinct: usize },
    InvalidTheta(f64),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::TooManyKeys { distinct } => write!(
                f,
                "exact oracle supports at most {MAX_ORACLE_KEYS} distinct keys, got {distinct}"
            ),
            OracleError::InvalidTheta(t) => write!(f, "theta {t} must be positive"),
        }
    }
}

impl std::error::Error for OracleError {}

/// Exact per-key counts over a hierarchy's fully specified universe.
/// Keys are masked to the fully specified pattern on insertion, which also
/// strips the destination in one-dimensional hierarchies.
#[derive(Clone, Debug)]
pub struct ExactFrequencyTable {
    hierarchy: Hierarchy,
    counts: HashMap<PacketKey, u64>,
    n: u64,
}

impl ExactFrequencyTable {
    pub fn new(hierarchy: Hierarchy) -> Self {
        ExactFrequencyTable {
            hierarchy,
            counts: HashMap::new(),
            n: 0,
        }
    }

    pub fn from_stream(hierarchy: Hierarchy, stream: impl IntoIterator<Item = PacketKey>) -> Self {
        let mut table = Self::new(hierarchy);
        for key in stream {
            table.record(key);
        }
        table
    }

    pub fn record(&mut self, key: PacketKey) {
        let masked = self.hierarchy.key_prefix(key).masked_key();
        *self.counts.entry(masked).or_insert(0) += 1;
        self.n += 1;
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    /// Total packets recorded (N).
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn distinct_keys(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PacketKey, u64)> + '_ {
        self.counts.iter().map(|(k, c)| (*k, *c))
    }

    /// f_p: total count of keys generalized by `p`.
    pub fn exact_frequency(&self, p: &Prefix) -> u64 {
        self.counts
            .iter()
            .filter(|(key, _)| p.contains_key(**key))
            .map(|(_, c)| c)
            .sum()
    }

    /// Set-based conditioned frequency: the count of keys under `p` that no
    /// member of `set` covers.
    pub fn exact_conditioned_frequency(&self, p: &Prefix, set: &[Prefix]) -> u64 {
        self.counts
            .iter()
            .filter(|(key, _)| p.contains_key(**key) && !set.iter().any(|h| h.contains_key(**key)))
            .map(|(_, c)| c)
            .sum()
    }

    /// All prefixes with nonzero exact frequency; every other prefix has a
    /// conditioned frequency of zero against any set.
    pub fn nonzero_prefixes(&self) -> Vec<Prefix> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for key in self.counts.keys() {
            for node in 0..self.hierarchy.node_count() {
                let p = self.hierarchy.generalize(*key, node);
                if seen.insert(p) {
                    out.push(p);
                }
            }
        }
        out
    }
}

/// The exact HHH construction, one cumulative set per level.
#[derive(Clone, Debug)]
pub struct ExactHhhResult {
    per_level: Vec<HashSet<Prefix>>,
}

impl ExactHhhResult {
    /// Cumulative set after processing `level`.
    pub fn up_to_level(&self, level: usize) -> &HashSet<Prefix> {
        &self.per_level[level]
    }

    pub fn levels(&self) -> usize {
        self.per_level.len()
    }

    /// The final exact HHH set.
    pub fn hhh(&self) -> &HashSet<Prefix> {
        self.per_level.last().expect("at least one level")
    }
}

/// Level-by-level exact HHH construction: starting from fully specified
/// items, a prefix joins when the mass under it not yet covered by the
/// previous levels' members reaches θ·N.
pub fn exact_hhh(table: &ExactFrequencyTable, theta: f64) -> Result<ExactHhhResult, OracleError> {
    if theta.is_nan() || theta <= 0.0 {
        return Err(OracleError::InvalidTheta(theta));
    }
    if table.distinct_keys() > MAX_ORACLE_KEYS {
        return Err(OracleError::TooManyKeys {
            distinct: table.distinct_keys(),
        });
    }
    let hierarchy = &table.hierarchy;
    let threshold = theta * table.n as f64;
    let keys: Vec<(PacketKey, u64)> = table.iter().collect();
    let mut covered = vec![false; keys.len()];
    let mut current: HashSet<Prefix> = HashSet::new();
    let mut per_level = Vec::with_capacity(hierarchy.depth() + 1);

    for (_level, nodes) in hierarchy.nodes_by_level() {
        let mut added = Vec::new();
        for &node in nodes {
            let pattern = *hierarchy.node(node);
            let mut uncovered: HashMap<PacketKey, u64> = HashMap::new();
            for (i, (key, count)) in keys.iter().enumerate() {
                if !covered[i] {
                    *uncovered.entry(pattern.mask(*key)).or_insert(0) += count;
                }
            }
            for (masked, mass) in uncovered {
                if mass as f64 >= threshold {
                    added.push(hierarchy.generalize(masked, node));
                }
            }
        }
        // Members added at this level condition the next level, not this one.
        for member in &added {
            for (i, (key, _)) in keys.iter().enumerate() {
                if !covered[i] && member.contains_key(*key) {
                    covered[i] = true;
                }
            }
        }
        current.extend(added);
        per_level.push(current.clone());
    }
    Ok(ExactHhhResult { per_level })
}

/// Checks the two-dimensional inclusion-exclusion identity on one instance:
/// the set-based conditioned frequency against f_q minus the best-generalized
/// frequencies plus the pairwise glb frequencies. Holds when `set` has no
/// ancestor of `q` and the pairwise glbs of G(q|set) are not generalized by
/// third members; the set-based value stays the ground truth everywhere else.
pub fn conditioned_2d_identity_holds(
    table: &ExactFrequencyTable,
    q: &Prefix,
    set: &[Prefix],
) -> bool {
    let set_based = table.exact_conditioned_frequency(q, set) as i128;
    let g = best_generalized(q, set);
    let mut formula = table.exact_frequency(q) as i128;
    for h in &g {
        formula -= table.exact_frequency(h) as i128;
    }
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            if let Some(glb) = table.hierarchy.glb(&g[i], &g[j]) {
                formula += table.exact_frequency(&glb) as i128;
            }
        }
    }
    set_based == formula
}
