//! Cross-module property tests: lattice algebra against brute force, the
//! one- and two-dimensional conditioned-frequency identities on random
//! instances, estimate scaling, and output behavior against the exact
//! oracle.

use proptest::prelude::*;

use rhhh::calibration::Calibration;
use rhhh::hierarchy::{best_generalized, Granularity, Hierarchy, PacketKey, Prefix};
use rhhh::oracle::{conditioned_2d_identity_holds, exact_hhh, ExactFrequencyTable};
use rhhh::sketch::RhhhSketch;
use rhhh::trace::{SyntheticSpec, ZipfGenerator};

fn any_hierarchy(tag: u8) -> Hierarchy {
    match tag % 5 {
        0 => Hierarchy::one_d_byte(),
        1 => Hierarchy::one_d_bit(),
        2 => Hierarchy::two_d_byte(),
        3 => Hierarchy::one_d_custom(Granularity::Byte, 2),
        _ => Hierarchy::two_d_byte_custom(2),
    }
}

proptest! {
    #[test]
    fn masking_is_idempotent_everywhere(
        tag in 0u8..5,
        src in any::<u32>(),
        dst in any::<u32>(),
    ) {
        let h = any_hierarchy(tag);
        let key = PacketKey::new(src, dst);
        for node in 0..h.node_count() {
            let p = h.generalize(key, node);
            let again = h.generalize(p.masked_key(), node);
            prop_assert_eq!(p, again);
            prop_assert!(p.contains_key(p.masked_key()) || !h.key_prefix(key).contains_key(key));
        }
    }

    #[test]
    fn best_generalized_yields_an_antichain(
        tag in 0u8..5,
        raw in prop::collection::vec((any::<u32>(), any::<u32>(), 0usize..33), 0..24),
        anchor in (any::<u32>(), any::<u32>(), 0usize..33),
    ) {
        let h = any_hierarchy(tag);
        let set: Vec<Prefix> = raw
            .iter()
            .map(|(s, d, node)| h.generalize(PacketKey::new(*s, *d), node % h.node_count()))
            .collect();
        let p = h.generalize(PacketKey::new(anchor.0, anchor.1), anchor.2 % h.node_count());
        let g = best_generalized(&p, &set);
        for a in &g {
            prop_assert!(p.strictly_generalizes(a));
            for b in &g {
                if a != b {
                    prop_assert!(!a.generalizes(b));
                }
            }
        }
        // Brute-force definition: member of the set, strictly below p, with
        // no set member strictly between.
        for candidate in &set {
            let in_g = g.contains(candidate);
            let expected = p.strictly_generalizes(candidate)
                && !set.iter().any(|mid| {
                    p.strictly_generalizes(mid) && mid.strictly_generalizes(candidate)
                });
            prop_assert_eq!(in_g, expected);
        }
    }

    #[test]
    fn one_d_conditioned_identity_on_random_tables(
        seed in any::<u64>(),
        pool in 1u32..40,
        packets in 1usize..400,
        node_pick in 0usize..5,
        member_mask in any::<u32>(),
    ) {
        let h = Hierarchy::one_d_byte();
        let mut rng = rhhh::rng::Xoshiro256::seeded(seed);
        let mut table = ExactFrequencyTable::new(h.clone());
        for _ in 0..packets {
            // Two leading bytes varied, rest fixed, to create shared prefixes.
            let a = rng.below(4) as u32;
            let b = rng.below(pool as u64) as u32;
            table.record(PacketKey::new(a << 24 | b << 16 | 0x0101, 0));
        }
        let q_node = 1 + node_pick % 4; // strictly above fully specified
        let some_key = table.iter().next().unwrap().0;
        let q = h.generalize(some_key, q_node);
        // Candidate set: random prefixes strictly below q plus unrelated
        // ones; never an ancestor of q.
        let mut set = Vec::new();
        for (i, (key, _)) in table.iter().enumerate().take(16) {
            if member_mask & (1 << i) != 0 {
                let node = i % q_node;
                let p = h.generalize(key, node);
                if !p.generalizes(&q) {
                    set.push(p);
                }
            }
        }
        set.sort_by_key(|p| (p.node_index(), p.masked_key()));
        set.dedup();
        let direct = table.exact_conditioned_frequency(&q, &set) as i64;
        let formula = table.exact_frequency(&q) as i64
            - best_generalized(&q, &set)
                .iter()
                .map(|e| table.exact_frequency(e) as i64)
                .sum::<i64>();
        prop_assert_eq!(direct, formula);
    }

    #[test]
    fn two_d_inclusion_exclusion_identity_where_preconditions_hold(
        seed in any::<u64>(),
        packets in 1usize..300,
        member_mask in any::<u16>(),
    ) {
        // 4x4 key universe on a 2-unit 2D lattice.
        let h = Hierarchy::two_d_byte_custom(2);
        let mut rng = rhhh::rng::Xoshiro256::seeded(seed);
        let mut table = ExactFrequencyTable::new(h.clone());
        let vals = [0x0101_0000u32, 0x0102_0000, 0x0201_0000, 0x0202_0000];
        for _ in 0..packets {
            let s = vals[rng.below(4) as usize];
            let d = vals[rng.below(4) as usize];
            table.record(PacketKey::new(s, d));
        }
        let q = h.generalize(PacketKey::new(0, 0), h.node_by_units(0, 0).unwrap());
        // Members drawn from one-unit patterns; by construction none is an
        // ancestor of another and none generalizes q... except q itself,
        // which we exclude by using only patterns with one specified unit.
        let mut set = Vec::new();
        let mut bit = 0;
        for s in 0..2u32 {
            for v in 0..2u32 {
                if member_mask & (1 << bit) != 0 {
                    let key = if s == 0 {
                        PacketKey::new(vals[v as usize], 0)
                    } else {
                        PacketKey::new(0, vals[v as usize])
                    };
                    let node = if s == 0 {
                        h.node_by_units(1, 0).unwrap()
                    } else {
                        h.node_by_units(0, 1).unwrap()
                    };
                    set.push(h.generalize(key, node));
                }
                bit += 1;
            }
        }
        // Preconditions: G is an antichain (holds by construction) and no
        // pairwise glb is generalized by a third member.
        let g = best_generalized(&q, &set);
        let mut preconditions = true;
        'outer: for i in 0..g.len() {
            for j in i + 1..g.len() {
                if let Some(glb) = h.glb(&g[i], &g[j]) {
                    if g.iter().enumerate().any(|(k, third)| {
                        k != i && k != j && third.generalizes(&glb)
                    }) {
                        preconditions = false;
                        break 'outer;
                    }
                }
            }
        }
        if preconditions {
            prop_assert!(conditioned_2d_identity_holds(&table, &q, &set));
        }
    }

    #[test]
    fn frequency_scaling_identity(
        seed in any::<u64>(),
        v_extra in 0u64..30,
        r in 1u32..4,
        packets in 0usize..3000,
    ) {
        let h = Hierarchy::one_d_byte();
        let v = h.node_count() as u64 + v_extra;
        prop_assume!(r as u64 <= v);
        let cal = Calibration::derive(0.02, 0.1, 0.05, v, r, 0.5, h.node_count()).unwrap();
        let mut sketch = RhhhSketch::new(h.clone(), cal, seed).unwrap();
        let mut rng = rhhh::rng::Xoshiro256::seeded(seed ^ 1);
        for _ in 0..packets {
            sketch.update(PacketKey::new(rng.below(300) as u32, 0));
        }
        for node in 0..h.node_count() {
            for (key, upper, lower) in sketch.instances()[node].entries() {
                let p = sketch.hierarchy().generalize(key, node);
                let est = sketch.frequency(&p);
                prop_assert_eq!(est.upper, upper as f64 * v as f64 / r as f64);
                prop_assert_eq!(est.lower, lower as f64 * v as f64 / r as f64);
                prop_assert!(est.lower <= est.upper);
            }
        }
    }
}

/// A single dominant flow far past the convergence threshold: the output set
/// must coincide with the exact HHH set (the flow itself; every ancestor's
/// conditioned frequency collapses to the sampling slack, far below θN).
#[test]
fn single_flow_output_matches_exact_oracle() {
    let theta = 0.5;
    let flow = PacketKey::new(0x0a141e28, 0);
    for seed in [1u64, 2, 3] {
        let hierarchy = Hierarchy::one_d_byte();
        let mut sketch =
            RhhhSketch::randomized(hierarchy.clone(), 0.01, 0.05, theta, seed).unwrap();
        let mut exact = ExactFrequencyTable::new(hierarchy);
        let n = 1_200_000u64;
        assert!(n > sketch.calibration().psi);
        for _ in 0..n {
            sketch.update(flow);
            exact.record(flow);
        }
        let output = sketch.output(theta, 0.05).unwrap();
        let truth = exact_hhh(&exact, theta).unwrap();
        let got: std::collections::HashSet<Prefix> = output.prefixes().into_iter().collect();
        assert_eq!(&got, truth.hhh(), "seed {seed}");
    }
}

/// For a fixed selected set the admission test is monotone in θ. The full
/// level-by-level procedure is not: a descendant admitted at a lower θ can
/// absorb an ancestor's conditioned mass, so the ancestor appears only at
/// the higher θ. Both behaviors are pinned here.
#[test]
fn theta_monotonicity_holds_per_level_but_not_globally() {
    // Fixed-set monotonicity: anything admitted at θ2 >= θ1 also passes θ1.
    let hierarchy = Hierarchy::one_d_byte();
    let mut sketch = RhhhSketch::deterministic(hierarchy, 0.001, 0.9).unwrap();
    let mut rng = rhhh::rng::Xoshiro256::seeded(5);
    for _ in 0..10_000 {
        sketch.update(PacketKey::new((rng.below(64) as u32) << 24, 0));
    }
    let n = sketch.packets() as f64;
    let out_low = sketch.output(0.01, 0.5).unwrap();
    for entry in &out_low.entries {
        assert!(entry.conditioned_estimate >= 0.01 * n);
    }

    // Global counterexample: two /32 flows of 55 packets each under one /24.
    // At θN = 60 only the /24 qualifies; at θN = 50 the two /32s qualify and
    // leave the /24 with nothing, so the θ=0.6 output is not a subset of the
    // θ=0.5 output.
    let hierarchy = Hierarchy::one_d_byte();
    let mut sketch = RhhhSketch::deterministic(hierarchy.clone(), 0.001, 0.9).unwrap();
    for _ in 0..55 {
        sketch.update(PacketKey::new(0x01020301, 0));
    }
    for _ in 0..55 {
        sketch.update(PacketKey::new(0x01020302, 0));
    }
    let at_higher_theta = sketch.output(0.6, 0.5).unwrap();
    let at_lower_theta = sketch.output(0.5, 0.5).unwrap();
    let twenty_four = hierarchy.generalize(
        PacketKey::new(0x01020300, 0),
        hierarchy.node_by_units(3, 0).unwrap(),
    );
    assert!(at_higher_theta.contains(&twenty_four));
    assert!(!at_lower_theta.contains(&twenty_four));
    assert_eq!(at_lower_theta.len(), 2);
}

/// The randomized output against the oracle on a skewed synthetic stream:
/// past ψ no genuinely heavy prefix may be missing (checked exactly), and
/// the conditioned estimates of emitted entries clear the threshold.
#[test]
fn randomized_output_covers_oracle_set_on_zipf_stream() {
    let theta = 0.05;
    let spec = SyntheticSpec {
        flows: 2000,
        zipf_s: 1.0,
        packets: 1_500_000,
        seed: 12,
    };
    let hierarchy = Hierarchy::one_d_byte();
    let mut sketch = RhhhSketch::randomized(hierarchy.clone(), 0.01, 0.05, theta, 99).unwrap();
    let mut exact = ExactFrequencyTable::new(hierarchy);
    for key in ZipfGenerator::new(spec).unwrap() {
        sketch.update(key);
        exact.record(key);
    }
    assert!(sketch.packets() > sketch.calibration().psi);
    let output = sketch.output(theta, 0.05).unwrap();
    let n = exact.n();
    for entry in &output.entries {
        assert!(entry.conditioned_estimate >= theta * n as f64);
    }
    // Every prefix excluded from the output keeps exact conditioned
    // frequency below θN on this converged run.
    let report = rhhh::metrics::evaluate(&output, &exact, theta, 0.01).unwrap();
    assert_eq!(
        report.coverage_errors, 0,
        "{:?}",
        report.coverage_error_list
    );
    assert_eq!(report.accuracy_error_ratio, 0.0);
}

/// Same converged-run check over the 2D lattice, where the conditioned
/// estimates go through the pairwise glb re-add path. Keys cluster on a few
/// byte values so the lattice genuinely overlaps.
#[test]
fn randomized_two_d_output_is_clean_past_psi() {
    let theta = 0.1;
    let (epsilon, delta) = (0.05, 0.1);
    let hierarchy = Hierarchy::two_d_byte();
    for seed in [5u64, 6] {
        let mut sketch =
            RhhhSketch::randomized(hierarchy.clone(), epsilon, delta, theta, seed).unwrap();
        let mut exact = ExactFrequencyTable::new(hierarchy.clone());
        let mut rng = rhhh::rng::Xoshiro256::seeded(500 + seed);
        let n = 250_000u64;
        for _ in 0..n {
            // Zipf-ish skew via min of two draws, clustered bytes.
            let a = rng.below(6).min(rng.below(6)) as u32;
            let b = rng.below(4) as u32;
            let c = rng.below(6).min(rng.below(6)) as u32;
            let key = PacketKey::new(a << 24 | b << 16, c << 24);
            sketch.update(key);
            exact.record(key);
        }
        assert!(sketch.packets() > sketch.calibration().psi);
        let output = sketch.output(theta, delta).unwrap();
        let report = rhhh::metrics::evaluate(&output, &exact, theta, epsilon).unwrap();
        assert_eq!(
            report.coverage_errors, 0,
            "seed {seed}: {:?}",
            report.coverage_error_list
        );
        assert_eq!(report.accuracy_error_ratio, 0.0, "seed {seed}");
    }
}

/// Hierarchies are shareable across threads; sketches and tables move
/// between threads (one writer at a time). Scaling across distinct sketches
/// works without any synchronization beyond joining.
#[test]
fn sketches_move_between_threads_and_hierarchies_are_shared() {
    fn movable<T: Send + 'static>() {}
    fn shareable<T: Send + Sync>() {}
    movable::<RhhhSketch>();
    movable::<ExactFrequencyTable>();
    movable::<rhhh::SpaceSaving<PacketKey>>();
    shareable::<Hierarchy>();
    shareable::<Calibration>();

    let hierarchy = std::sync::Arc::new(Hierarchy::two_d_byte());
    let workers: Vec<_> = (0..4u64)
        .map(|shard| {
            let hierarchy = std::sync::Arc::clone(&hierarchy);
            std::thread::spawn(move || {
                let mut sketch =
                    RhhhSketch::randomized((*hierarchy).clone(), 0.02, 0.1, 0.05, shard).unwrap();
                let mut rng = rhhh::rng::Xoshiro256::seeded(shard);
                for _ in 0..20_000 {
                    sketch.update(PacketKey::new(
                        rng.below(50) as u32 * 0x01010101,
                        rng.below(50) as u32 * 0x01010101,
                    ));
                }
                sketch
            })
        })
        .collect();
    let mut total = 0;
    for worker in workers {
        let sketch = worker.join().unwrap();
        assert_eq!(sketch.packets(), 20_000);
        total += sketch.output(0.05, 0.1).unwrap().len();
    }
    assert!(total > 0);
}
