use asmplan::disassembly::SequenceSample;
use asmplan::geometry::{sample_point_cloud, PointCloud, Pose, TriMesh};
use asmplan::harness::{generate_synthetic_assembly, BlueprintSpec, Family};
use asmplan::model::train::{loss_and_grad, prepare, sample_loss_value, AdamW};
use asmplan::model::*;
use asmplan::disassembly::{emit_dataset, enumerate_sequences, DatasetConfig, PlannerConfig};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> ModelConfig {
    ModelConfig {
        hidden: 16,
        blocks: 2,
        k_nn: 4,
        heads: 2,
    }
}

fn box_cloud(size: [f64; 3], at: [f64; 3], n: usize, seed: u64) -> PointCloud {
    let m = TriMesh::cuboid(Vector3::from(size)).unwrap();
    sample_point_cloud(&m, &Pose::from_translation(Vector3::from(at)), n, seed).unwrap()
}

fn scene(seed: u64, parts: usize) -> (PointCloud, Vec<PointCloud>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut target = PointCloud::default();
    let mut clouds = Vec::new();
    for i in 0..parts {
        let size = [rng.random_range(0.02..0.08), rng.random_range(0.02..0.08), rng.random_range(0.02..0.08)];
        let at = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.1 * i as f64];
        let t = box_cloud(size, at, 24, seed + i as u64);
        target.points.extend(&t.points);
        target.normals.extend(&t.normals);
        clouds.push(box_cloud(size, [0.0; 3], 16, seed + 100 + i as u64));
    }
    (target, clouds)
}

fn real_samples(n_blueprints: usize) -> Vec<SequenceSample> {
    let cfg = DatasetConfig {
        n_target: 64,
        n_part: 32,
        ..Default::default()
    };
    let mut out = Vec::new();
    for i in 0..n_blueprints {
        let spec = BlueprintSpec::new(Family::ALL[i % 4], 3 + i % 2, 40 + i as u64);
        let bp = generate_synthetic_assembly(&spec).unwrap();
        let seqs = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap().sequences;
        out.extend(emit_dataset(&bp, &seqs, &cfg).unwrap());
    }
    out
}

fn random_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-3.0..3.0)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn attention_rows_are_distributions(seed in any::<u64>(), nq in 1usize..12, nk in 1usize..12) {
        let params = ModelParams::new(&small(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_mat(nq, 16, &mut rng);
        let k = random_mat(nk, 16, &mut rng);
        for slot in [AttentionSlot::TargetSelf, AttentionSlot::PartsFromTarget] {
            let out = attention(&q, &k, &params, 1, slot);
            prop_assert_eq!(out.weights.len(), 2);
            for w in &out.weights {
                prop_assert_eq!((w.rows, w.cols), (nq, nk));
                for r in 0..w.rows {
                    let s: f64 = w.row(r).iter().sum();
                    prop_assert!((s - 1.0).abs() < 1e-12);
                    prop_assert!(w.row(r).iter().all(|&x| x >= 0.0));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn part_order_permutes_outputs(seed in any::<u64>(), parts in 2usize..5) {
        let params = ModelParams::new(&small(), seed).unwrap();
        let (target, clouds) = scene(seed, parts);
        let mut perm: Vec<usize> = (0..parts).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let shuffled: Vec<PointCloud> = perm.iter().map(|&i| clouds[i].clone()).collect();
        let a = forward(&target, &clouds, &params).unwrap();
        let b = forward(&target, &shuffled, &params).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            prop_assert!((a.probabilities[i] - b.probabilities[j]).abs() < 1e-10);
            prop_assert!((a.poses[i].translation - b.poses[j].translation).norm() < 1e-10);
        }
    }

    #[test]
    fn target_point_order_is_irrelevant(seed in any::<u64>()) {
        let params = ModelParams::new(&small(), seed).unwrap();
        let (target, clouds) = scene(seed, 3);
        let mut idx: Vec<usize> = (0..target.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 2));
        let a = forward(&target, &clouds, &params).unwrap();
        let b = forward(&target.select(&idx), &clouds, &params).unwrap();
        for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn identical_parts_score_identically() {
    let params = ModelParams::new(&small(), 3).unwrap();
    let (target, mut clouds) = scene(3, 2);
    clouds.push(clouds[0].clone());
    let p = forward(&target, &clouds, &params).unwrap();
    assert_eq!(p.probabilities[0], p.probabilities[2]);
    assert!(p.probabilities.iter().all(|&x| x > 0.0 && x < 1.0));
}

#[test]
fn target_translation_is_normalized_away() {
    let params = ModelParams::new(&small(), 4).unwrap();
    let (target, clouds) = scene(4, 3);
    let shift = Pose::from_translation(Vector3::new(0.3, -0.2, 0.5));
    let moved_target = target.transformed(&shift);
    let a = forward(&target, &clouds, &params).unwrap();
    let b = forward(&moved_target, &clouds, &params).unwrap();
    for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
        assert!((x - y).abs() < 1e-9);
    }
    let rot = Pose::new(Vector3::zeros(), UnitQuaternion::from_euler_angles(0.3, 0.2, 0.1));
    let c = forward(&target.transformed(&rot), &clouds, &params).unwrap();
    assert!(a.probabilities.iter().zip(&c.probabilities).any(|(x, y)| x != y));
}

#[test]
fn zero_pose_weight_leaves_pose_head_untouched() {
    let samples = real_samples(2);
    let params = ModelParams::new(&small(), 5).unwrap();
    let s = samples.iter().find(|s| s.num_remaining() > 1).unwrap();
    let (_, g) = loss_and_grad(&params, s, &prepare(s, None).unwrap(), 0.0).unwrap();
    for (name, g) in params.names.iter().zip(&g) {
        if name.starts_with("pose_head") {
            assert!(g.data.iter().all(|&x| x == 0.0), "{name}");
        }
    }
    let w = params.index_of("prob_head.w2").unwrap();
    assert!(g[w].data.iter().any(|&x| x != 0.0));
}

#[test]
fn one_step_lowers_the_loss() {
    let samples = real_samples(1);
    let s = samples.iter().find(|s| s.num_remaining() > 1).unwrap();
    let mut params = ModelParams::new(&small(), 6).unwrap();
    let config = TrainConfig::default();
    let input = prepare(s, None).unwrap();
    let (before, g) = loss_and_grad(&params, s, &input, 0.1).unwrap();
    let mut opt = AdamW::new(&params);
    opt.step(&mut params, &g, 1e-4, &config);
    let after = sample_loss_value(&params, s, 0.1).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn overfits_a_small_subset() {
    let samples: Vec<SequenceSample> = real_samples(6).into_iter().filter(|s| s.num_remaining() > 1).take(10).collect();
    assert_eq!(samples.len(), 10);
    let mut params = ModelParams::new(&small(), 7).unwrap();
    let config = TrainConfig {
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut opt = AdamW::new(&params);
    let inputs: Vec<_> = samples.iter().map(|s| prepare(s, None).unwrap()).collect();
    let mut epochs = 0;
    while accuracy(&params, &samples).unwrap() < 1.0 {
        assert!(epochs < 500, "no perfect fit after 500 epochs");
        let mut grads: Vec<Mat> = params.tensors.iter().map(|t| Mat::zeros(t.rows, t.cols)).collect();
        for (s, x) in samples.iter().zip(&inputs) {
            let (_, g) = loss_and_grad(&params, s, x, 0.0).unwrap();
            for (a, b) in grads.iter_mut().zip(&g) {
                a.data.iter_mut().zip(&b.data).for_each(|(a, b)| *a += b / 10.0);
            }
        }
        opt.step(&mut params, &grads, 2e-3, &config);
        epochs += 1;
    }
}

#[test]
fn greedy_inference_yields_a_permutation() {
    let params = ModelParams::new(&small(), 8).unwrap();
    for n in 1..=4 {
        let (target, clouds) = scene(8 + n as u64, n);
        let a = infer_sequence(&target, &clouds, &params).unwrap();
        let mut order = a.sequence.order.clone();
        order.sort_unstable();
        assert_eq!(order, (0..n).collect::<Vec<_>>());
        assert_eq!(a.step_probabilities.len(), n);
        for (k, p) in a.step_probabilities.iter().enumerate() {
            assert_eq!(p.len(), n - k);
        }
        assert_eq!(infer_sequence(&target, &clouds, &params).unwrap(), a);
    }
    let (target, _) = scene(1, 2);
    assert!(infer_sequence(&target, &[], &params).is_err());
}

#[test]
fn accuracy_of_label_oracle_and_adversary() {
    let samples = real_samples(4);
    let oracle = one_step_accuracy(&samples, |s| Ok(s.feasibility.iter().map(|&y| y as f64).collect())).unwrap();
    assert_eq!(oracle, 1.0);
    let adversary = one_step_accuracy(&samples, |s| Ok(s.feasibility.iter().map(|&y| 1.0 - y as f64).collect())).unwrap();
    let all_feasible = samples.iter().filter(|s| s.feasibility.iter().all(|&y| y == 1)).count();
    assert_eq!(adversary, all_feasible as f64 / samples.len() as f64);
    let base = random_one_step_baseline(&samples);
    assert!(base > adversary - 1e-12 && base < 1.0);
}

#[test]
fn checkpoint_round_trip_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let params = ModelParams::new(&small(), 9).unwrap();
    save_checkpoint(&params, 9, &path).unwrap();
    let (back, header) = load_checkpoint(&path).unwrap();
    assert_eq!(header.seed, 9);
    assert_eq!(back.config, small());
    for (a, b) in params.tensors.iter().zip(&back.tensors) {
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_eq!(*x as f32, *y as f32);
        }
    }
    assert_eq!(checkpoint_bytes(&back, 9), std::fs::read(&path).unwrap());
    std::fs::write(&path, &std::fs::read(&path).unwrap()[..100]).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn evaluation_counts_by_part_number() {
    let cfg = DatasetConfig {
        n_target: 64,
        n_part: 32,
        ..Default::default()
    };
    let params = ModelParams::new(&small(), 10).unwrap();
    let mut bps = Vec::new();
    let mut seqs = Vec::new();
    let mut samples = Vec::new();
    for (i, n) in [2usize, 3].into_iter().enumerate() {
        let bp = generate_synthetic_assembly(&BlueprintSpec::new(Family::Stack, n, 60 + i as u64)).unwrap();
        let s = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap().sequences;
        samples.extend(emit_dataset(&bp, &s, &cfg).unwrap());
        bps.push(bp);
        seqs.push(s);
    }
    let eval: Vec<EvalBlueprint> = bps.iter().zip(&seqs).map(|(b, s)| EvalBlueprint { blueprint: b, sequences: s }).collect();
    let r = evaluate(&params, &samples, &eval, &cfg).unwrap();
    assert_eq!(r.blueprints, 2);
    assert_eq!(r.samples, samples.len());
    assert_eq!(r.by_part_count.keys().copied().collect::<Vec<_>>(), vec![2, 3]);
    assert!((r.one_step_baseline - random_one_step_baseline(&samples)).abs() < 1e-12);
    let expect = (random_rollout_baseline(2, seqs[0].len()) + random_rollout_baseline(3, seqs[1].len())) / 2.0;
    assert!((r.seq_baseline - expect).abs() < 1e-12);
    assert!(r.mean_inference_ms > 0.0);
}
