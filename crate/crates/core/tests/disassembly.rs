#[path = "support/oracle.rs"]
mod oracle;

use std::collections::BTreeSet;

use asmplan::disassembly::*;
use asmplan::geometry::{rectilinear_union, winding_number, Pose, TriMesh, PLANNING_CLEARANCE};
use asmplan::harness::{generate_synthetic_assembly, BlueprintSpec, Family};
use asmplan::{Blueprint, Error};
use nalgebra::Vector3;

fn orders(result: &SearchResult) -> BTreeSet<Vec<usize>> {
    result.sequences.iter().map(|s| s.order.clone()).collect()
}

fn cube_at(x: f64) -> (TriMesh, Pose) {
    (TriMesh::cuboid(Vector3::repeat(0.05)).unwrap(), Pose::from_translation(Vector3::new(x, 0.0, 0.0)))
}

/// Block with a blind square hole and a peg resting in it, on a table.
fn peg_in_hole() -> Blueprint {
    let v = |x: f64, y: f64, z: f64| Vector3::new(x, y, z);
    let block = rectilinear_union(&[
        (v(-0.05, -0.05, -0.05), v(0.05, 0.05, 0.0)),
        (v(-0.05, -0.05, 0.0), v(-0.013, 0.05, 0.04)),
        (v(0.013, -0.05, 0.0), v(0.05, 0.05, 0.04)),
        (v(-0.013, -0.05, 0.0), v(0.013, -0.013, 0.04)),
        (v(-0.013, 0.013, 0.0), v(0.013, 0.05, 0.04)),
    ])
    .unwrap();
    let peg = TriMesh::cuboid(v(0.02, 0.02, 0.08)).unwrap();
    let table = TriMesh::cuboid(v(2.0, 2.0, 0.02)).unwrap();
    Blueprint::new(
        "peg-in-hole",
        vec![block, peg],
        vec![Pose::identity(), Pose::from_translation(v(0.0, 0.0, 0.043))],
    )
    .unwrap()
    .with_environment(vec![(table, Pose::from_translation(v(0.0, 0.0, -0.063)))])
}

#[test]
fn single_part_has_one_sequence() {
    let (m, p) = cube_at(0.0);
    let bp = Blueprint::new("one", vec![m], vec![p]).unwrap();
    let result = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap();
    assert_eq!(orders(&result), BTreeSet::from([vec![0]]));
}

#[test]
fn separated_cubes_in_either_order() {
    let (a, pa) = cube_at(0.0);
    let (b, pb) = cube_at(0.2);
    let bp = Blueprint::new("two", vec![a, b], vec![pa, pb]).unwrap();
    let result = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap();
    assert_eq!(orders(&result), BTreeSet::from([vec![0, 1], vec![1, 0]]));
    for seq in &result.sequences {
        assert_eq!(seq.removal_actions.len(), 2);
        assert!(seq.is_permutation_of(2));
    }
}

#[test]
fn peg_goes_in_after_the_block() {
    let bp = peg_in_hole();
    let result = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap();
    assert_eq!(orders(&result), BTreeSet::from([vec![0, 1]]));
    let peg = result.sequences[0].action_for(1).unwrap();
    // The peg leaves upwards.
    let props = bp.inertial_props().unwrap();
    let dirs = removal_directions(&place_props(&props[1], &bp.target_poses[1]));
    assert!(dirs[peg.direction_index].heading().z > 0.99);
}

#[test]
fn interpenetrating_root_is_rejected() {
    let (a, pa) = cube_at(0.0);
    let (b, pb) = cube_at(0.01);
    let bp = Blueprint::new("overlap", vec![a, b], vec![pa, pb]).unwrap();
    assert!(matches!(enumerate_sequences(&bp, &PlannerConfig::default()), Err(Error::InvalidBlueprint(_))));
}

#[test]
fn washers_precede_their_screws() {
    let mut washer_cases = 0;
    for seed in 0..8 {
        let bp = generate_synthetic_assembly(&BlueprintSpec::new(Family::ScrewWasherPlate, 3, seed)).unwrap();
        let got = orders(&enumerate_sequences(&bp, &PlannerConfig::default()).unwrap());
        // Part 1 is either a washer under screw 2 or a second screw. A
        // washer is a ring, so its centre lies outside the solid.
        let ring = winding_number(&bp.meshes[1], &Vector3::zeros()).abs() < 0.5;
        let screw_first = got.iter().any(|o| o.iter().position(|&p| p == 2) < o.iter().position(|&p| p == 1));
        if ring {
            washer_cases += 1;
            assert!(!screw_first, "{}: {got:?}", bp.id);
        } else {
            assert!(screw_first, "{}: {got:?}", bp.id);
        }
        assert!(got.iter().all(|o| o.iter().position(|&p| p == 0) < o.iter().position(|&p| p == 2)));
    }
    assert!(washer_cases > 0);
}

#[test]
fn matches_permutation_oracle_on_every_family() {
    for family in Family::ALL {
        for n in [2, 3, 4] {
            let bp = generate_synthetic_assembly(&BlueprintSpec::new(family, n, 11)).unwrap();
            let got = orders(&enumerate_sequences(&bp, &PlannerConfig::default()).unwrap());
            assert_eq!(got, oracle::permutation_oracle(&bp, PLANNING_CLEARANCE), "{}", bp.id);
        }
    }
}

#[test]
fn sequences_replay_at_finer_resolution() {
    for family in Family::ALL {
        let bp = generate_synthetic_assembly(&BlueprintSpec::new(family, 4, 3)).unwrap();
        let result = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap();
        for seq in &result.sequences {
            assert_eq!(replay_sequence(&bp, seq, PLANNING_CLEARANCE, 2.0).unwrap(), None, "{}", bp.id);
        }
    }
}

#[test]
fn state_limit_truncates() {
    let bp = generate_synthetic_assembly(&BlueprintSpec::new(Family::PegBoard, 5, 0)).unwrap();
    let config = PlannerConfig {
        max_states: 4,
        ..PlannerConfig::default()
    };
    match enumerate_sequences(&bp, &config) {
        Ok(r) => assert!(r.stats.truncated && r.stats.states <= 4),
        Err(e) => assert!(matches!(e, Error::Planning(_))),
    }
    let config = PlannerConfig {
        max_sequences: 3,
        ..PlannerConfig::default()
    };
    let r = enumerate_sequences(&bp, &config).unwrap();
    assert_eq!(r.sequences.len(), 3);
    assert!(r.stats.truncated);
}

#[test]
fn enumeration_is_deterministic() {
    let bp = generate_synthetic_assembly(&BlueprintSpec::new(Family::BoxInsert, 5, 2)).unwrap();
    let a = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap();
    let b = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap();
    assert_eq!(a.sequences, b.sequences);
}

#[test]
fn labels_mark_feasible_next_parts() {
    let bp = generate_synthetic_assembly(&BlueprintSpec::new(Family::PegBoard, 4, 1)).unwrap();
    let seqs = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap().sequences;
    // Only the board can go first; afterwards every peg can.
    assert_eq!(feasibility_labels(&seqs, &[], &[0, 1, 2, 3]), vec![1, 0, 0, 0]);
    assert_eq!(feasibility_labels(&seqs, &[0], &[1, 2, 3]), vec![1, 1, 1]);
    for (k, seq) in seqs.iter().enumerate() {
        for i in 0..4 {
            let assembled = &seq.order[..i];
            let remaining: Vec<usize> = (0..4).filter(|p| !assembled.contains(p)).collect();
            let labels = feasibility_labels(&seqs, assembled, &remaining);
            let next = remaining.iter().position(|&p| p == seq.order[i]).unwrap();
            assert_eq!(labels[next], 1, "sequence {k} step {i}");
        }
    }
}

#[test]
fn dataset_samples_are_consistent() {
    let bp = generate_synthetic_assembly(&BlueprintSpec::new(Family::ScrewWasherPlate, 5, 4)).unwrap();
    let seqs = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap().sequences;
    let config = DatasetConfig::default();
    let samples = emit_dataset(&bp, &seqs, &config).unwrap();
    assert!(!samples.is_empty() && samples.len() <= config.max_samples_per_blueprint);
    let mut seen = BTreeSet::new();
    for s in &samples {
        assert!(seen.insert(s.assembled_ids.clone()), "duplicate split");
        assert_eq!(s.remaining_ids.len() + s.assembled_ids.len(), 5);
        assert_eq!(s.target_cloud.len(), 6 * config.n_target);
        assert_eq!(s.remaining_clouds.len(), s.remaining_ids.len());
        assert!(s.remaining_clouds.iter().all(|c| c.len() == 6 * config.n_part));
        assert!(s.feasibility.contains(&1));
        assert_eq!(s.feasibility, feasibility_labels(&seqs, &s.assembled_ids, &s.remaining_ids));
    }
    let again = emit_dataset(&bp, &seqs, &config).unwrap();
    assert_eq!(samples, again);
}

#[test]
fn remaining_clouds_are_centered_and_poses_recover_target() {
    let bp = generate_synthetic_assembly(&BlueprintSpec::new(Family::BoxInsert, 4, 0)).unwrap();
    let seqs = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap().sequences;
    let config = DatasetConfig {
        n_part: 2048,
        ..DatasetConfig::default()
    };
    let samples = emit_dataset(&bp, &seqs, &config).unwrap();
    let props = bp.inertial_props().unwrap();
    for s in &samples {
        for (r, &i) in s.remaining_ids.iter().enumerate() {
            let cloud = s.part(r);
            // Area-weighted surface samples of a box union: the centroid sits
            // near, not exactly at, the centre of mass.
            assert!(cloud.centroid().norm() < 0.01, "part {i}");
            let expected = bp.target_poses[i].transform_point(&props[i].center_of_mass);
            assert!((s.target_poses[r].translation - expected).norm() < 1e-12);
        }
    }
}
