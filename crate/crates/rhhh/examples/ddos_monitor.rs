//! Spotting a distributed volume anomaly as a prefix aggregate.
//!
//! Background traffic is spread over thousands of small flows; the attack is
//! a swarm of sources inside one /16 all hitting one victim address. No
//! single flow is heavy, but the aggregates are. The sketch pays one counter
//! update per packet regardless of the 25-node source/destination lattice.
//!
//! Run with: cargo run --release --example ddos_monitor

use rhhh::hierarchy::PacketKey;
use rhhh::rng::Xoshiro256;
use rhhh::{Calibration, Hierarchy, RhhhSketch};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hierarchy = Hierarchy::two_d_byte();
    let calibration = Calibration::derive(
        0.05, // epsilon
        0.10, // delta
        0.10, // theta
        hierarchy.node_count() as u64,
        1,
        0.5,
        hierarchy.node_count(),
    )?;
    println!(
        "lattice: {} ({} nodes), {} counters per node, psi = {} packets",
        hierarchy.name(),
        hierarchy.node_count(),
        calibration.capacity,
        calibration.psi
    );

    let mut sketch = RhhhSketch::new(hierarchy, calibration, 42)?;
    let mut rng = Xoshiro256::seeded(7);

    // 200k background packets: random sources to random destinations.
    for _ in 0..200_000 {
        let src = rng.next_u64() as u32;
        let dst = rng.next_u64() as u32;
        sketch.update(PacketKey::new(src, dst));
    }

    // 100k attack packets: sources scattered across 10.7.0.0/16, one victim.
    let victim: u32 = std::net::Ipv4Addr::new(203, 0, 113, 9).into();
    for _ in 0..100_000 {
        let src = 0x0a07_0000 | (rng.next_u64() as u32 & 0xffff);
        sketch.update(PacketKey::new(src, victim));
    }

    let n = sketch.packets();
    println!(
        "{} packets observed, converged: {}",
        n,
        n >= sketch.calibration().psi
    );

    let output = sketch.output(0.10, 0.10)?;
    println!("\nheavy aggregates (threshold {} packets):", n / 10);
    println!(
        "{:<34} {:>12} {:>12} {:>12}",
        "prefix", "lower", "upper", "added"
    );
    for entry in &output.entries {
        println!(
            "{:<34} {:>12.0} {:>12.0} {:>12.0}",
            entry.prefix.to_string(),
            entry.estimate.lower,
            entry.estimate.upper,
            entry.conditioned_estimate
        );
    }
    Ok(())
}
