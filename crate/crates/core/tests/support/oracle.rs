//! Brute-force assembly oracle: tries every permutation and accepts it when
//! each step admits a collision-free reversed removal along one of the
//! twelve directions.

use std::collections::{BTreeSet, HashMap};

use asmplan::disassembly::{escape_distance, place_props, removal_directions, removal_motion, DisassemblyAction};
use asmplan::geometry::{default_step, sweep_motion_free_fraction, Pose, TriMesh};
use asmplan::Blueprint;

pub fn insertable(bp: &Blueprint, assembled: &[usize], part: usize, clearance: f64) -> bool {
    let props = bp.inertial_props().unwrap();
    let target = bp.target_poses[part];
    let world = place_props(&props[part], &target);
    let mesh = &bp.meshes[part];
    let obstacles: Vec<(&TriMesh, Pose)> = assembled
        .iter()
        .map(|&j| (&bp.meshes[j], bp.target_poses[j]))
        .chain(bp.environment.iter().map(|(m, p)| (m, *p)))
        .collect();
    let magnitude = escape_distance(bp);
    (0..removal_directions(&world).len()).any(|j| {
        let action = DisassemblyAction {
            part_id: part,
            direction_index: j,
            magnitude,
        };
        let motion = removal_motion(&action, &target, &world);
        sweep_motion_free_fraction(mesh, &motion, &obstacles, clearance, default_step(mesh, &motion)) >= 1.0
    })
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Every feasible assembly order of `bp`.
pub fn permutation_oracle(bp: &Blueprint, clearance: f64) -> BTreeSet<Vec<usize>> {
    let n = bp.num_parts();
    let mut all = Vec::new();
    permutations(&mut (0..n).collect(), 0, &mut all);
    let mut memo: HashMap<(u64, usize), bool> = HashMap::new();
    let mut out = BTreeSet::new();
    for perm in all {
        let mut mask = 0u64;
        let mut ok = true;
        for (k, &p) in perm.iter().enumerate() {
            let step = *memo
                .entry((mask, p))
                .or_insert_with(|| insertable(bp, &perm[..k], p, clearance));
            if !step {
                ok = false;
                break;
            }
            mask |= 1 << p;
        }
        if ok {
            out.insert(perm);
        }
    }
    out
}
