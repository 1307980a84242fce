//! End-to-end checks across modules: exact matching identities on
//! assembled instances, certificate duality, and oracle/statistics
//! round trips on both toy shapes.

use mbnd_core::distinguishers::{full_scan_budget, play_game, AlgorithmConfig, Budget};
use mbnd_core::exact::{max_matching, verify_certificate, verify_gap};
use mbnd_core::instance::assemble;
use mbnd_core::params::{br, toy_params, Side, ToySpec};
use mbnd_core::stats::{analyze, random_probe_transcript, AnalyzeConfig};
use mbnd_core::ParamSet;
use num::ToPrimitive;

fn preset_l1() -> ParamSet {
    toy_params(ToySpec {
        levels: 1,
        layers: 3,
        block_degrees: vec![4],
        base_width: 72,
        zeta: br(1, 9),
        xi: br(1, 4),
        gamma: br(1, 1000),
        tau: br(3, 83),
    })
    .unwrap()
}

fn preset_l2() -> ParamSet {
    toy_params(ToySpec {
        levels: 2,
        layers: 2,
        block_degrees: vec![4, 16],
        base_width: 48,
        zeta: br(1, 4),
        xi: br(1, 4),
        gamma: br(1, 1000),
        tau: br(24, 40320),
    })
    .unwrap()
}

#[test]
fn gap_identities_l1() {
    let p = preset_l1();
    for seed in 1..=5u64 {
        let yes = assemble(&p, Side::Yes, seed).unwrap();
        let no = assemble(&p, Side::No, seed).unwrap();
        let rep = verify_gap(&yes, &no, &p).unwrap();
        assert!(rep.all_pass(), "seed {seed}: {}", rep.json_line());
    }
}

#[test]
fn gap_identities_l2() {
    let p = preset_l2();
    for seed in 1..=2u64 {
        let yes = assemble(&p, Side::Yes, seed).unwrap();
        let no = assemble(&p, Side::No, seed).unwrap();
        let rep = verify_gap(&yes, &no, &p).unwrap();
        assert!(rep.all_pass(), "seed {seed}: {}", rep.json_line());
    }
}

#[test]
fn certificates_verify() {
    let p = preset_l1();
    for (side, seed) in [(Side::Yes, 10u64), (Side::No, 10), (Side::No, 11)] {
        let inst = assemble(&p, side, seed).unwrap();
        let cert = max_matching(&inst).unwrap();
        assert!(verify_certificate(&inst, &cert));
        // mutated certificates must fail
        let mut broken = cert.clone();
        if !broken.cover.is_empty() {
            broken.cover.pop();
            assert!(!verify_certificate(&inst, &broken));
        }
        let mut dup = cert.clone();
        if dup.matching.len() >= 2 {
            let (a, _) = dup.matching[0];
            let (_, d) = dup.matching[1];
            dup.matching[1] = (a, d);
            assert!(!verify_certificate(&inst, &dup));
        }
    }
}

#[test]
fn same_instance_passed_twice_fails_gap() {
    let p = preset_l1();
    let yes = assemble(&p, Side::Yes, 3).unwrap();
    let rep = verify_gap(&yes, &yes, &p).unwrap();
    assert_eq!(rep.gap, 0);
    assert!(!rep.pass_no);
    assert!(!rep.pass_gap);
}

#[test]
fn dummy_exchange_argument_matches_reality() {
    // The dummy-aware matching formula must agree with a matcher run on the
    // fully materialized graph (dummy edges included) for small instances.
    let p = preset_l1();
    for (side, seed) in [(Side::Yes, 4u64), (Side::No, 4)] {
        let inst = assemble(&p, side, seed).unwrap();
        let mut edges: Vec<(u32, u32)> = Vec::new();
        for u in 0..inst.n_core() {
            for k in inst.csr_range(u) {
                let v = inst.csr_neighbors[k];
                if u < v {
                    edges.push((u, v));
                }
            }
        }
        let h = inst.core_half;
        let t = inst.dummy_half;
        for i in 0..t {
            let d0 = inst.dummy_base(0) + i;
            let d1 = inst.dummy_base(1) + i;
            for v in h..2 * h {
                edges.push((d0, v));
            }
            for v in 0..h {
                edges.push((v, d1));
            }
            edges.push((d0, d1));
        }
        let full = mbnd_core::exact::max_matching_bipartite(&edges, |v| inst.class_of(v)).unwrap();
        let fast = max_matching(&inst).unwrap();
        assert_eq!(full.size, fast.size, "side {side:?}");
    }
}

#[test]
fn analyze_over_probe_transcript() {
    let p = preset_l2();
    let inst = assemble(&p, Side::Yes, 8).unwrap();
    let t = random_probe_transcript(&inst, 20_000, 77).unwrap();
    let st = analyze(&t, &inst, AnalyzeConfig::default()).unwrap();
    assert!(st.core_edges_discovered > 0);
    assert!(st.unspoiled_trees_ok);
    assert_eq!(st.per_level.len(), 2);
    // level-2 black edges must lie inside the nested layer-r structure
    let flags = mbnd_core::stats::classify_edges(&t, &inst, 2).unwrap();
    for (f, &(u, v)) in flags.iter().zip(t.core_edges.iter()) {
        if f.black {
            for w in [u, v] {
                let k = inst.subset_at(w, 2);
                assert!(
                    matches!(k, mbnd_core::SubsetKind::A { layer, .. } if layer == p.layers),
                    "black edge endpoint {w} labeled {k}"
                );
            }
        }
    }
}

#[test]
fn full_scan_game_is_perfect_with_full_budget() {
    let p = preset_l1();
    let r = play_game(&AlgorithmConfig::FullScan, &p, Budget::FullRead, 6, 2024).unwrap();
    assert_eq!(r.successes, 6);
}

#[test]
fn full_budget_formula_is_exact() {
    let p = preset_l1();
    let inst = assemble(&p, Side::Yes, 5).unwrap();
    let want: u64 = (0..inst.n_total()).map(|v| inst.degree(v) + 1).sum();
    assert_eq!(full_scan_budget(&inst), want);
}

#[test]
fn kv_file_drives_assembly() {
    let p = preset_l1();
    let text = p.to_kv();
    let q = ParamSet::from_kv(&text, &[]).unwrap();
    let a = assemble(&p, Side::Yes, 1).unwrap();
    let b = assemble(&q, Side::Yes, 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(p.total_vertices.to_u64(), Some(1032));
}
