//! The randomized HHH sketch and its deterministic update-all baseline.
//!
//! One Space Saving table per lattice node. In randomized mode each packet
//! draws one integer in [0, V) (r independent draws when r > 1); draws below
//! H update the corresponding table with the packet masked to that node,
//! draws at or above H ignore the packet. Per-packet work is therefore
//! constant in the hierarchy size. Raw counter bounds are scaled by V/r to
//! estimate packet frequencies.
//!
//! The output procedure walks levels from fully specified to fully general,
//! conservatively estimating each resident prefix's conditioned frequency:
//! its own upper bound, minus the lower bounds of the closest already
//! selected descendants (with a pairwise glb re-add in two dimensions), plus
//! an additive term covering the sampling error.
//!
//! Deterministic mode updates every table for every packet, uses scale 1 and
//! no additive term; its output guarantees hold with no convergence
//! threshold, at H times the update cost.

use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::calibration::{probit, Calibration, CalibrationError};
use crate::hierarchy::{Hierarchy, PacketKey, Prefix};
use crate::rng::Xoshiro256;
use crate::space_saving::SpaceSaving;

#[derive(Debug, PartialEq)]
pub enum SketchError {
    /// θ outside (0, 1].
    InvalidTheta(f64),
    /// δ outside (0, 1).
    InvalidDelta(f64),
    /// Sketch parameters inconsistent with the hierarchy.
    InvalidParameter(&'static str),
    Calibration(CalibrationError),
}

impl fmt::Display for SketchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SketchError::InvalidTheta(t) => write!(f, "theta {t} outside (0, 1]"),
            SketchError::InvalidDelta(d) => write!(f, "delta {d} outside (0, 1)"),
            SketchError::InvalidParameter(msg) => write!(f, "{msg}"),
            SketchError::Calibration(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SketchError {}

impl From<CalibrationError> for SketchError {
    fn from(e: CalibrationError) -> Self {
        SketchError::Calibration(e)
    }
}

/// Quantile convention for the additive sampling-error correction. The
/// conservative default evaluates Z at 1 - δ/8, which is what the coverage
/// guarantee needs; 1 - δ is available for experimentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CorrectionQuantile {
    #[default]
    DeltaOverEight,
    Delta,
}

impl CorrectionQuantile {
    fn argument(self, delta: f64) -> f64 {
        match self {
            CorrectionQuantile::DeltaOverEight => 1.0 - delta / 8.0,
            CorrectionQuantile::Delta => 1.0 - delta,
        }
    }
}

/// Additive conditioned-frequency slack 2·Z·√(N·V) covering sampling noise.
pub fn correction_term(
    n: u64,
    v: u64,
    delta: f64,
    quantile: CorrectionQuantile,
) -> Result<f64, SketchError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SketchError::InvalidDelta(delta));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let z = probit(quantile.argument(delta))?;
    Ok(2.0 * z * ((n as f64) * (v as f64)).sqrt())
}

/// Scaled frequency bounds in packets: counter bounds times V/r.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrequencyEstimate {
    pub upper: f64,
    pub lower: f64,
}

/// An output prefix with its frequency bounds and the conservative
/// conditioned-frequency estimate that admitted it.
#[derive(Clone, Debug, PartialEq)]
pub struct HhhEntry {
    pub prefix: Prefix,
    pub estimate: FrequencyEstimate,
    pub conditioned_estimate: f64,
}

impl Serialize for HhhEntry {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("HhhEntry", 4)?;
        s.serialize_field("prefix", &self.prefix.to_string())?;
        s.serialize_field("lower", &self.estimate.lower)?;
        s.serialize_field("upper", &self.estimate.upper)?;
        s.serialize_field("conditioned", &self.conditioned_estimate)?;
        s.end()
    }
}

/// The prefix set returned by the output procedure. Ancestors may coexist
/// with descendants; entries appear in level order, most specific first.
#[derive(Clone, Debug, Serialize)]
pub struct HhhSet {
    pub entries: Vec<HhhEntry>,
    pub n: u64,
    pub params: Calibration,
}

impl HhhSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, prefix: &Prefix) -> bool {
        self.entries.iter().any(|e| e.prefix == *prefix)
    }

    pub fn prefixes(&self) -> Vec<Prefix> {
        self.entries.iter().map(|e| e.prefix).collect()
    }
}

#[derive(Clone, Debug)]
enum Mode {
    Randomized { v: u64, r: u32, rng: Xoshiro256 },
    Deterministic,
}

/// Decorrelates the update draws from any other component seeded with the
/// same user-facing seed. Without this, a synthetic workload generator and a
/// sketch sharing one seed consume identical random streams in lockstep, and
/// the level draws become correlated with the flow choices - which breaks
/// the uniform-sampling assumption the guarantees rest on.
const SKETCH_SEED_DOMAIN: u64 = 0x9de8_62e9_33a1_f5b7;

/// H Space Saving instances plus the packet count and update policy.
#[derive(Clone, Debug)]
pub struct RhhhSketch {
    hierarchy: Hierarchy,
    calibration: Calibration,
    instances: Vec<SpaceSaving<PacketKey>>,
    packets: u64,
    mode: Mode,
    correction_quantile: CorrectionQuantile,
}

impl RhhhSketch {
    /// Builds a sketch. Randomized or deterministic update policy follows
    /// the calibration; `seed` drives the randomized draws and is ignored in
    /// deterministic mode.
    pub fn new(
        hierarchy: Hierarchy,
        calibration: Calibration,
        seed: u64,
    ) -> Result<Self, SketchError> {
        let h = hierarchy.node_count();
        let mode = if calibration.deterministic {
            Mode::Deterministic
        } else {
            if calibration.v < h as u64 {
                return Err(SketchError::InvalidParameter("V must be at least H"));
            }
            if calibration.r == 0 || calibration.r as u64 > calibration.v {
                return Err(SketchError::InvalidParameter("r must satisfy 1 <= r <= V"));
            }
            Mode::Randomized {
                v: calibration.v,
                r: calibration.r,
                rng: Xoshiro256::seeded(seed ^ SKETCH_SEED_DOMAIN),
            }
        };
        let instances = (0..h)
            .map(|_| SpaceSaving::new(calibration.capacity))
            .collect();
        Ok(RhhhSketch {
            hierarchy,
            calibration,
            instances,
            packets: 0,
            mode,
            correction_quantile: CorrectionQuantile::default(),
        })
    }

    /// Randomized sketch from user-facing guarantees with V = H and the
    /// default 50/50 ε split.
    pub fn randomized(
        hierarchy: Hierarchy,
        epsilon: f64,
        delta: f64,
        theta: f64,
        seed: u64,
    ) -> Result<Self, SketchError> {
        let h = hierarchy.node_count() as u64;
        let calibration =
            Calibration::derive(epsilon, delta, theta, h, 1, 0.5, hierarchy.node_count())?;
        Self::new(hierarchy, calibration, seed)
    }

    /// Deterministic update-all-levels baseline.
    pub fn deterministic(
        hierarchy: Hierarchy,
        eps_a: f64,
        theta: f64,
    ) -> Result<Self, SketchError> {
        let calibration = Calibration::deterministic(eps_a, theta)?;
        Self::new(hierarchy, calibration, 0)
    }

    pub fn set_correction_quantile(&mut self, quantile: CorrectionQuantile) {
        self.correction_quantile = quantile;
    }

    /// Packets observed so far (N), including ignored ones.
    pub fn packets(&self) -> u64 {
        self.packets
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    /// The per-node counter tables, indexed by lattice node.
    pub fn instances(&self) -> &[SpaceSaving<PacketKey>] {
        &self.instances
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.mode, Mode::Deterministic)
    }

    /// Counter-to-packets scale factor: V/r, or 1 in deterministic mode.
    pub fn scale(&self) -> f64 {
        match &self.mode {
            Mode::Deterministic => 1.0,
            Mode::Randomized { v, r, .. } => *v as f64 / *r as f64,
        }
    }

    /// count·V/r with the integer product taken first, so the result is
    /// exact whenever count·V is divisible by r and correctly rounded
    /// otherwise.
    fn scale_count(&self, count: u64) -> f64 {
        match &self.mode {
            Mode::Deterministic => count as f64,
            Mode::Randomized { v, r, .. } => (count as f64 * *v as f64) / *r as f64,
        }
    }

    /// Feeds one packet. Randomized mode performs exactly r bounded draws
    /// and at most r constant-time counter updates; deterministic mode
    /// updates every level.
    #[inline]
    pub fn update(&mut self, key: PacketKey) {
        self.packets += 1;
        let h = self.instances.len() as u64;
        match &mut self.mode {
            Mode::Deterministic => {
                for node in 0..self.instances.len() {
                    let masked = self.hierarchy.node(node).mask(key);
                    self.instances[node].increment(masked);
                }
            }
            Mode::Randomized { v, r, rng } => {
                for _ in 0..*r {
                    let d = rng.below(*v);
                    if d < h {
                        let node = d as usize;
                        let masked = self.hierarchy.node(node).mask(key);
                        self.instances[node].increment(masked);
                    }
                }
            }
        }
    }

    /// Scaled frequency bounds for a prefix of this sketch's hierarchy.
    pub fn frequency(&self, prefix: &Prefix) -> FrequencyEstimate {
        let (upper, lower) = self.instances[prefix.node_index()].query(&prefix.masked_key());
        FrequencyEstimate {
            upper: self.scale_count(upper),
            lower: self.scale_count(lower),
        }
    }

    /// The additive sampling-error term for this sketch: zero in
    /// deterministic mode, 2·Z·√(N·V) otherwise.
    pub fn correction(&self, delta: f64) -> Result<f64, SketchError> {
        match &self.mode {
            Mode::Deterministic => Ok(0.0),
            Mode::Randomized { v, .. } => {
                correction_term(self.packets, *v, delta, self.correction_quantile)
            }
        }
    }

    /// One-dimensional predecessor adjustment: minus the lower bounds of the
    /// selected prefixes most closely generalized by `p`.
    pub fn calc_pred_1d(&self, p: &Prefix, selected: &[HhhEntry]) -> f64 {
        let mut adjustment = 0.0;
        for entry in selected {
            if !p.strictly_generalizes(&entry.prefix) {
                continue;
            }
            let shadowed = selected.iter().any(|mid| {
                p.strictly_generalizes(&mid.prefix)
                    && mid.prefix.strictly_generalizes(&entry.prefix)
            });
            if !shadowed {
                adjustment -= entry.estimate.lower;
            }
        }
        adjustment
    }

    /// Two-dimensional predecessor adjustment: as in one dimension, plus the
    /// upper bound of each pairwise greatest lower bound, re-added only when
    /// no third selected member generalizes it (those elements were
    /// subtracted more than twice and are handled by the other pairs).
    pub fn calc_pred_2d(&self, p: &Prefix, selected: &[HhhEntry]) -> f64 {
        let best: Vec<&HhhEntry> = selected
            .iter()
            .filter(|e| p.strictly_generalizes(&e.prefix))
            .filter(|e| {
                !selected.iter().any(|mid| {
                    p.strictly_generalizes(&mid.prefix)
                        && mid.prefix.strictly_generalizes(&e.prefix)
                })
            })
            .collect();
        let mut adjustment = 0.0;
        for entry in &best {
            adjustment -= entry.estimate.lower;
        }
        for i in 0..best.len() {
            for j in i + 1..best.len() {
                let Some(glb) = self.hierarchy.glb(&best[i].prefix, &best[j].prefix) else {
                    continue;
                };
                let generalized_by_third = best
                    .iter()
                    .enumerate()
                    .any(|(k, third)| k != i && k != j && third.prefix.generalizes(&glb));
                if !generalized_by_third {
                    adjustment += self.frequency(&glb).upper;
                }
            }
        }
        adjustment
    }

    /// Runs the output procedure: walks levels most specific first, admits
    /// every resident prefix whose conservative conditioned-frequency
    /// estimate reaches θ·N. Candidates are exactly the keys resident in
    /// each level's counter table.
    pub fn output(&self, theta: f64, delta: f64) -> Result<HhhSet, SketchError> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(SketchError::InvalidTheta(theta));
        }
        let correction = self.correction(delta)?;
        let threshold = theta * self.packets as f64;
        let two_d = self.hierarchy.is_two_dimensional();
        let mut selected: Vec<HhhEntry> = Vec::new();
        for (_level, nodes) in self.hierarchy.nodes_by_level() {
            for &node in nodes {
                for (key, upper, lower) in self.instances[node].entries() {
                    let prefix = self.hierarchy.generalize(key, node);
                    let estimate = FrequencyEstimate {
                        upper: self.scale_count(upper),
                        lower: self.scale_count(lower),
                    };
                    let pred = if two_d {
                        self.calc_pred_2d(&prefix, &selected)
                    } else {
                        self.calc_pred_1d(&prefix, &selected)
                    };
                    let conditioned = estimate.upper + pred + correction;
                    if conditioned >= threshold {
                        selected.push(HhhEntry {
                            prefix,
                            estimate,
                            conditioned_estimate: conditioned,
                        });
                    }
                }
            }
        }
        Ok(HhhSet {
            entries: selected,
            n: self.packets,
            params: self.calibration.clone(),
        })
    }
}
