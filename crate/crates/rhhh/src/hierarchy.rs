//! Prefix lattices over IPv4 source (and optionally destination) addresses.
//!
//! A hierarchy is a fixed set of mask patterns ("lattice nodes") ordered by
//! generalization. Three canonical hierarchies are supported: source bytes
//! (H=5), source bits (H=33) and source/destination bytes (H=25). Smaller
//! lattices with the same shape can be built for exhaustive checking.

use std::fmt;

/// A fully specified packet identity. `dst` is ignored (masked to zero) by
/// one-dimensional hierarchies.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct PacketKey {
    pub src: u32,
    pub dst: u32,
}

impl PacketKey {
    pub fn new(src: u32, dst: u32) -> Self {
        PacketKey { src, dst }
    }
}

impl fmt::Display for PacketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = std::net::Ipv4Addr::from(self.src);
        let d = std::net::Ipv4Addr::from(self.dst);
        write!(f, "{s},{d}")
    }
}

/// Mask length in bits for a prefix of `len` bits anchored at the MSB.
#[inline]
pub fn mask_bits(len: u8) -> u32 {
    debug_assert!(len <= 32);
    if len == 0 {
        0
    } else {
        u32::MAX << (32 - len)
    }
}

/// One lattice node: how many leading units of each dimension are specified.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct PrefixPattern {
    node_index: u16,
    src_units: u8,
    dst_units: u8,
    src_bits: u8,
    dst_bits: u8,
    level: u8,
    two_dimensional: bool,
}

impl PrefixPattern {
    pub fn node_index(&self) -> usize {
        self.node_index as usize
    }

    /// Specified length of the source dimension, in hierarchy units.
    pub fn src_units(&self) -> u8 {
        self.src_units
    }

    pub fn dst_units(&self) -> u8 {
        self.dst_units
    }

    pub fn src_bits(&self) -> u8 {
        self.src_bits
    }

    pub fn dst_bits(&self) -> u8 {
        self.dst_bits
    }

    /// Distance from the fully specified level (0 = fully specified).
    pub fn level(&self) -> usize {
        self.level as usize
    }

    /// Masks a key down to this pattern.
    #[inline]
    pub fn mask(&self, key: PacketKey) -> PacketKey {
        PacketKey {
            src: key.src & mask_bits(self.src_bits),
            dst: key.dst & mask_bits(self.dst_bits),
        }
    }
}

/// A lattice node together with a key masked to it.
///
/// Prefixes are only comparable within the hierarchy that produced them.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Prefix {
    pattern: PrefixPattern,
    key: PacketKey,
}

impl Prefix {
    pub fn pattern(&self) -> &PrefixPattern {
        &self.pattern
    }

    pub fn node_index(&self) -> usize {
        self.pattern.node_index()
    }

    pub fn level(&self) -> usize {
        self.pattern.level()
    }

    /// The masked key; bits outside the pattern are zero.
    pub fn masked_key(&self) -> PacketKey {
        self.key
    }

    /// True when `self` is an ancestor of `other` or equal to it: in every
    /// dimension `self`'s mask is no longer and its specified portion is a
    /// prefix of `other`'s.
    pub fn generalizes(&self, other: &Prefix) -> bool {
        self.pattern.src_bits <= other.pattern.src_bits
            && self.pattern.dst_bits <= other.pattern.dst_bits
            && (other.key.src & mask_bits(self.pattern.src_bits)) == self.key.src
            && (other.key.dst & mask_bits(self.pattern.dst_bits)) == self.key.dst
    }

    /// Strict form of [`Prefix::generalizes`].
    pub fn strictly_generalizes(&self, other: &Prefix) -> bool {
        self != other && self.generalizes(other)
    }

    /// True when a fully specified key falls under this prefix.
    #[inline]
    pub fn contains_key(&self, key: PacketKey) -> bool {
        self.pattern.mask(key) == self.key
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src = std::net::Ipv4Addr::from(self.key.src);
        write!(f, "{src}/{}", self.pattern.src_bits)?;
        if self.pattern.two_dimensional {
            let dst = std::net::Ipv4Addr::from(self.key.dst);
            write!(f, ",{dst}/{}", self.pattern.dst_bits)?;
        }
        Ok(())
    }
}

/// The prefixes in `set` most closely generalized by `p`: strictly more
/// specific than `p`, with no other member of `set` strictly between.
/// The result is always an antichain.
pub fn best_generalized(p: &Prefix, set: &[Prefix]) -> Vec<Prefix> {
    set.iter()
        .filter(|h| p.strictly_generalizes(h))
        .filter(|h| {
            !set.iter()
                .any(|mid| p.strictly_generalizes(mid) && mid.strictly_generalizes(h))
        })
        .copied()
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Granularity {
    Bit,
    Byte,
}

impl Granularity {
    fn unit_bits(self) -> u8 {
        match self {
            Granularity::Bit => 1,
            Granularity::Byte => 8,
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum HierarchyError {
    UnknownName(String),
}

impl fmt::Display for HierarchyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HierarchyError::UnknownName(n) => {
                write!(
                    f,
                    "unknown hierarchy {n:?} (expected 1d-byte, 1d-bit or 2d-byte)"
                )
            }
        }
    }
}

impl std::error::Error for HierarchyError {}

/// A prefix lattice: H nodes arranged in L+1 levels, level 0 holding the
/// fully specified pattern and level L the fully general one.
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    name: String,
    granularity: Granularity,
    units: u8,
    two_dimensional: bool,
    nodes: Vec<PrefixPattern>,
    levels: Vec<Vec<usize>>,
    by_units: Vec<Option<usize>>, // (src_units, dst_units) -> node index
}

impl Hierarchy {
    /// Source-byte hierarchy: /0, /8, /16, /24, /32 (H = 5).
    pub fn one_d_byte() -> Self {
        Self::one_d(Granularity::Byte, 4, "1d-byte")
    }

    /// Source-bit hierarchy: /0 through /32 (H = 33).
    pub fn one_d_bit() -> Self {
        Self::one_d(Granularity::Bit, 32, "1d-bit")
    }

    /// Source/destination byte lattice (H = 25).
    pub fn two_d_byte() -> Self {
        Self::two_d(4, "2d-byte")
    }

    pub fn by_name(name: &str) -> Result<Self, HierarchyError> {
        match name {
            "1d-byte" => Ok(Self::one_d_byte()),
            "1d-bit" => Ok(Self::one_d_bit()),
            "2d-byte" => Ok(Self::two_d_byte()),
            other => Err(HierarchyError::UnknownName(other.to_string())),
        }
    }

    /// One-dimensional lattice over the leading `units` units of the source
    /// address. Small `units` values give toy lattices for exhaustive tests.
    pub fn one_d_custom(granularity: Granularity, units: u8) -> Self {
        let name = format!("1d-{granularity:?}-{units}u").to_lowercase();
        Self::one_d(granularity, units, &name)
    }

    /// Two-dimensional byte lattice over the leading `units` bytes of both
    /// addresses.
    pub fn two_d_byte_custom(units: u8) -> Self {
        let name = format!("2d-byte-{units}u");
        Self::two_d(units, &name)
    }

    fn one_d(granularity: Granularity, units: u8, name: &str) -> Self {
        assert!(units >= 1 && units as u32 * granularity.unit_bits() as u32 <= 32);
        let mut nodes = Vec::new();
        let mut levels = Vec::new();
        let mut by_units = vec![None; (units as usize + 1) * (units as usize + 1)];
        for level in 0..=units {
            let src_units = units - level;
            let idx = nodes.len();
            nodes.push(PrefixPattern {
                node_index: idx as u16,
                src_units,
                dst_units: 0,
                src_bits: src_units * granularity.unit_bits(),
                dst_bits: 0,
                level,
                two_dimensional: false,
            });
            levels.push(vec![idx]);
            by_units[src_units as usize * (units as usize + 1)] = Some(idx);
        }
        Hierarchy {
            name: name.to_string(),
            granularity,
            units,
            two_dimensional: false,
            nodes,
            levels,
            by_units,
        }
    }

    fn two_d(units: u8, name: &str) -> Self {
        assert!((1..=4).contains(&units));
        let side = units as usize + 1;
        let mut nodes = Vec::new();
        let mut levels = Vec::new();
        let mut by_units = vec![None; side * side];
        for level in 0..=(2 * units) {
            let mut level_nodes = Vec::new();
            // Within a level, most source-specific first.
            for src_units in (0..=units).rev() {
                let gen_total = level as i32;
                let dst_gen = gen_total - (units - src_units) as i32;
                if !(0..=units as i32).contains(&dst_gen) {
                    continue;
                }
                let dst_units = units - dst_gen as u8;
                let idx = nodes.len();
                nodes.push(PrefixPattern {
                    node_index: idx as u16,
                    src_units,
                    dst_units,
                    src_bits: src_units * 8,
                    dst_bits: dst_units * 8,
                    level,
                    two_dimensional: true,
                });
                level_nodes.push(idx);
                by_units[src_units as usize * side + dst_units as usize] = Some(idx);
            }
            levels.push(level_nodes);
        }
        Hierarchy {
            name: name.to_string(),
            granularity: Granularity::Byte,
            units,
            two_dimensional: true,
            nodes,
            levels,
            by_units,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of lattice nodes, H.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Depth L: the level of the fully general node.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn is_two_dimensional(&self) -> bool {
        self.two_dimensional
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Specified units per dimension at the fully specified level.
    pub fn units(&self) -> u8 {
        self.units
    }

    pub fn node(&self, node_index: usize) -> &PrefixPattern {
        &self.nodes[node_index]
    }

    pub fn nodes(&self) -> &[PrefixPattern] {
        &self.nodes
    }

    /// Levels in ascending order (fully specified first), each with its node
    /// indices.
    pub fn nodes_by_level(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.levels
            .iter()
            .enumerate()
            .map(|(l, v)| (l, v.as_slice()))
    }

    /// Node with the given specified lengths, if the lattice contains one.
    pub fn node_by_units(&self, src_units: u8, dst_units: u8) -> Option<usize> {
        let side = self.units as usize + 1;
        if src_units > self.units || dst_units > self.units {
            return None;
        }
        self.by_units[src_units as usize * side + dst_units as usize]
    }

    /// Masks `key` down to the pattern of `node_index`.
    pub fn generalize(&self, key: PacketKey, node_index: usize) -> Prefix {
        let pattern = self.nodes[node_index];
        Prefix {
            pattern,
            key: pattern.mask(key),
        }
    }

    /// The fully specified prefix of `key`.
    pub fn key_prefix(&self, key: PacketKey) -> Prefix {
        self.generalize(key, self.levels[0][0])
    }

    /// Greatest lower bound of two prefixes: the unique most general common
    /// descendant, or `None` when their specified portions conflict (an item
    /// with count zero, as far as any estimator is concerned).
    pub fn glb(&self, a: &Prefix, b: &Prefix) -> Option<Prefix> {
        let (src, src_units) = Self::glb_dim(
            (a.key.src, a.pattern.src_bits, a.pattern.src_units),
            (b.key.src, b.pattern.src_bits, b.pattern.src_units),
        )?;
        let (dst, dst_units) = Self::glb_dim(
            (a.key.dst, a.pattern.dst_bits, a.pattern.dst_units),
            (b.key.dst, b.pattern.dst_bits, b.pattern.dst_units),
        )?;
        let node = self
            .node_by_units(src_units, dst_units)
            .expect("glb pattern is always a lattice node");
        let pattern = self.nodes[node];
        Some(Prefix {
            pattern,
            key: PacketKey { src, dst },
        })
    }

    fn glb_dim(a: (u32, u8, u8), b: (u32, u8, u8)) -> Option<(u32, u8)> {
        let (longer, shorter) = if a.1 >= b.1 { (a, b) } else { (b, a) };
        if longer.0 & mask_bits(shorter.1) != shorter.0 {
            return None;
        }
        Some((longer.0, longer.2))
    }
}
