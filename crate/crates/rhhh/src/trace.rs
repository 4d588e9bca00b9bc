//! Packet record ingestion (CSV and fixed-width binary) and synthetic
//! Zipf-distributed workload generation.
//!
//! Both file formats are streamed with constant memory. The binary format is
//! eight bytes per record, source then destination, each a big-endian 32-bit
//! address (network byte order, bit-exact across platforms).

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use crate::hierarchy::PacketKey;
use crate::rng::{splitmix64, Xoshiro256};

#[derive(Debug)]
pub enum TraceError {
    Io(io::Error),
    Parse { line: usize, message: String },
    Truncated { bytes: usize },
    InvalidSpec(&'static str),
}

impl fmt::Display for TraceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceError::Io(e) => write!(f, "{e}"),
            TraceError::Parse { line, message } => write!(f, "line {line}: {message}"),
            TraceError::Truncated { bytes } => {
                write!(f, "trailing partial record of {bytes} bytes")
            }
            TraceError::InvalidSpec(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for TraceError {}

impl From<io::Error> for TraceError {
    fn from(e: io::Error) -> Self {
        TraceError::Io(e)
    }
}

/// Reader for `src_ip[,dst_ip]` lines; a missing destination reads as
/// 0.0.0.0 (one-dimensional runs ignore it anyway).
pub struct CsvReader<R> {
    lines: io::Lines<BufReader<R>>,
    line: usize,
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvReader<File>, TraceError> {
    Ok(CsvReader {
        lines: BufReader::new(File::open(path)?).lines(),
        line: 0,
    })
}

impl<R: Read> CsvReader<R> {
    pub fn from_reader(reader: R) -> Self {
        CsvReader {
            lines: BufReader::new(reader).lines(),
            line: 0,
        }
    }
}

fn parse_record(text: &str, line: usize) -> Result<PacketKey, TraceError> {
    let parse_ip = |field: &str| -> Result<u32, TraceError> {
        field
            .trim()
            .parse::<Ipv4Addr>()
            .map(u32::from)
            .map_err(|_| TraceError::Parse {
                line,
                message: format!("invalid IPv4 address {:?}", field.trim()),
            })
    };
    match text.split_once(',') {
        Some((src, dst)) => Ok(PacketKey::new(parse_ip(src)?, parse_ip(dst)?)),
        None => Ok(PacketKey::new(parse_ip(text)?, 0)),
    }
}

impl<R: Read> Iterator for CsvReader<R> {
    type Item = Result<PacketKey, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(text) => text,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(parse_record(&text, self.line));
        }
    }
}

/// Reader for 8-byte big-endian (src, dst) records.
pub struct BinaryReader<R> {
    reader: BufReader<R>,
}

pub fn read_binary(path: impl AsRef<Path>) -> Result<BinaryReader<File>, TraceError> {
    Ok(BinaryReader {
        reader: BufReader::new(File::open(path)?),
    })
}

impl<R: Read> BinaryReader<R> {
    pub fn from_reader(reader: R) -> Self {
        BinaryReader {
            reader: BufReader::new(reader),
        }
    }
}

impl<R: Read> Iterator for BinaryReader<R> {
    type Item = Result<PacketKey, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = [0u8; 8];
        let mut filled = 0;
        while filled < 8 {
            match self.reader.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(k) => filled += k,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Some(Err(e.into())),
            }
        }
        match filled {
            0 => None,
            8 => Some(Ok(PacketKey::new(
                u32::from_be_bytes(buf[0..4].try_into().unwrap()),
                u32::from_be_bytes(buf[4..8].try_into().unwrap()),
            ))),
            bytes => Some(Err(TraceError::Truncated { bytes })),
        }
    }
}

pub fn write_csv(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = PacketKey>,
) -> Result<(), TraceError> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        writeln!(
            out,
            "{},{}",
            Ipv4Addr::from(record.src),
            Ipv4Addr::from(record.dst)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_binary(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = PacketKey>,
) -> Result<(), TraceError> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        out.write_all(&record.src.to_be_bytes())?;
        out.write_all(&record.dst.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Synthetic workload: `packets` draws over `flows` flows, flow i picked
/// with probability proportional to i^-s, each flow mapped to a fixed
/// pseudo-random (src, dst) pair. Fully determined by `seed`.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticSpec {
    pub flows: u64,
    pub zipf_s: f64,
    pub packets: u64,
    pub seed: u64,
}

/// Iterator form of [`SyntheticSpec`]. Holds the cumulative flow weights,
/// so memory is proportional to the flow count.
pub struct ZipfGenerator {
    cumulative: Vec<f64>,
    seed: u64,
    rng: Xoshiro256,
    remaining: u64,
}

impl ZipfGenerator {
    /// Holds 8 bytes of cumulative weight per flow.
    pub const MAX_FLOWS: u64 = 100_000_000;

    pub fn new(spec: SyntheticSpec) -> Result<Self, TraceError> {
        if spec.flows == 0 {
            return Err(TraceError::InvalidSpec("flows must be at least 1"));
        }
        if spec.flows > Self::MAX_FLOWS {
            return Err(TraceError::InvalidSpec("flows above 1e8 are not supported"));
        }
        if !(spec.zipf_s >= 0.0 && spec.zipf_s.is_finite()) {
            return Err(TraceError::InvalidSpec("zipf_s must be finite and >= 0"));
        }
        let mut cumulative = Vec::with_capacity(spec.flows as usize);
        let mut acc = 0.0f64;
        for i in 1..=spec.flows {
            acc += (i as f64).powf(-spec.zipf_s);
            cumulative.push(acc);
        }
        let total = acc;
        for c in &mut cumulative {
            *c /= total;
        }
        Ok(ZipfGenerator {
            cumulative,
            seed: spec.seed,
            rng: Xoshiro256::seeded(spec.seed),
            remaining: spec.packets,
        })
    }

    /// The fixed (src, dst) pair of a flow index in [0, flows).
    pub fn flow_key(&self, flow: u64) -> PacketKey {
        flow_key_for_seed(self.seed, flow)
    }
}

fn flow_key_for_seed(seed: u64, flow: u64) -> PacketKey {
    let mut state = seed ^ (flow + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let a = splitmix64(&mut state);
    let b = splitmix64(&mut state);
    PacketKey::new(a as u32, b as u32)
}

impl Iterator for ZipfGenerator {
    type Item = PacketKey;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let u = self.rng.unit_f64();
        let flow = self.cumulative.partition_point(|&c| c <= u) as u64;
        Some(self.flow_key(flow.min(self.cumulative.len() as u64 - 1)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining as usize;
        (n, Some(n))
    }
}
