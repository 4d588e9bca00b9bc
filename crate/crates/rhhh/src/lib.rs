//! Streaming detection of hierarchical heavy hitters (HHH) over IPv4 prefix
//! lattices.
//!
//! The core structure, [`RhhhSketch`], keeps one bounded [`SpaceSaving`]
//! counter table per lattice node and, in randomized mode, updates a single
//! uniformly chosen table per packet. This makes the per-packet cost constant
//! in the hierarchy size, at the price of probabilistic accuracy and coverage
//! guarantees that kick in once enough packets have been observed (the
//! [`Calibration::psi`] threshold). A deterministic mode that updates every
//! table per packet is available as a baseline, and [`oracle`] holds a
//! brute-force exact solver for desk-scale validation.

pub mod calibration;
pub mod hierarchy;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod sketch;
pub mod space_saving;
pub mod trace;

pub use calibration::Calibration;
pub use hierarchy::{Hierarchy, PacketKey, Prefix, PrefixPattern};
pub use sketch::{FrequencyEstimate, HhhEntry, HhhSet, RhhhSketch};
pub use space_saving::SpaceSaving;
