//! One pass/fail line per acceptance criterion; each test also fails on its
//! own criterion.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use asmplan::contact::{
    enumerate_grasp_pairs, ferrari_canny, grasp_map, in_cone, project_cone, residual_tolerance, solve_push_force,
    GraspPair, WrenchTarget,
};
use asmplan::disassembly::{enumerate_sequences, replay_sequence, PlannerConfig, SequenceSample};
use asmplan::geometry::{sample_point_cloud, Pose, TriMesh, PLANNING_CLEARANCE};
use asmplan::harness::{
    generate_synthetic_assembly, BlueprintSpec, Family, Metrics, PipelineConfig, PlanMode, Split, Workspace,
};
use asmplan::model::train::{loss_and_grad, prepare, AdamW};
use asmplan::model::{
    accuracy, attention, blueprint_clouds, forward, gradient_check, AttentionSlot, Mat, ModelConfig, ModelParams,
    TrainConfig,
};
use asmplan::motion::{plan_all_motions, resting_poses, RrtConfig};
use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Timed criteria share one core with nothing else.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written past the test harness capture so the line shows in every run.
fn verdict(id: &str, pass: bool, detail: String) {
    let line = format!("\n{id} {}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(pass, "{id} failed: {detail}");
}

struct Pipeline {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PipelineConfig,
    train_time: Duration,
    metrics: Metrics,
}

/// Default-scale corpus, training, evaluation, report and oracle plans,
/// run once and shared.
fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = PipelineConfig::default();
        let ws = Workspace::new(&root, 0);
        ws.generate(&config).unwrap();
        ws.enumerate(&config).unwrap();
        ws.dataset(&config).unwrap();
        let start = Instant::now();
        let out = ws.train(&config).unwrap();
        let train_time = start.elapsed();
        let metrics = ws.evaluate(&config, &out.params).unwrap();
        ws.report().unwrap();
        ws.plan(&config, PlanMode::Oracle, None).unwrap();
        Pipeline {
            _dir: dir,
            root,
            config,
            train_time,
            metrics,
        }
    })
}

fn first_sample(family: Family, parts: usize, seed: u64) -> SequenceSample {
    let bp = generate_synthetic_assembly(&BlueprintSpec::new(family, parts, seed)).unwrap();
    let seqs = enumerate_sequences(&bp, &PlannerConfig::default()).unwrap().sequences;
    asmplan::disassembly::emit_dataset(&bp, &seqs, &Default::default())
        .unwrap()
        .into_iter()
        .find(|s| s.num_remaining() > 1)
        .unwrap()
}

#[test]
fn ac1_enumeration_matches_permutation_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = Vec::new();
    for _ in 0..50 {
        let family = Family::ALL[rng.random_range(0..Family::ALL.len())];
        let spec = BlueprintSpec::new(family, rng.random_range(3..=4), rng.random());
        let bp = generate_synthetic_assembly(&spec).unwrap();
        let got: BTreeSet<Vec<usize>> = enumerate_sequences(&bp, &PlannerConfig::default())
            .unwrap()
            .sequences
            .into_iter()
            .map(|s| s.order)
            .collect();
        if got != oracle::permutation_oracle(&bp, PLANNING_CLEARANCE) {
            mismatches.push(bp.id);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "AC1",
        mismatches.is_empty() && secs < 120.0,
        format!("50 blueprints, {} mismatched {mismatches:?}, {secs:.1} s (limit 120 s)", mismatches.len()),
    );
}

#[test]
fn ac2_sequences_replay_at_half_resolution() {
    let _g = serial();
    let p = pipeline();
    let ws = Workspace::new(&p.root, 1);
    let corpus = ws.corpus().unwrap();
    let (mut total, mut failed) = (0, Vec::new());
    for r in ws.sequences().unwrap().iter().filter(|r| r.split == Split::Test) {
        let e = corpus.iter().find(|e| e.id == r.blueprint_id).unwrap();
        let bp = ws.load_blueprint(e).unwrap();
        for s in &r.sequences {
            total += 1;
            if replay_sequence(&bp, s, PLANNING_CLEARANCE, 2.0).unwrap().is_some() {
                failed.push((r.blueprint_id.clone(), s.order.clone()));
            }
        }
    }
    verdict(
        "AC2",
        total > 0 && failed.is_empty(),
        format!("{total} test-corpus sequences replayed at half step, {} collided", failed.len()),
    );
}

#[test]
fn ac3_gradient_check_on_desk_scale_model() {
    let _g = serial();
    let sample = first_sample(Family::ALL[0], 4, 0);
    let params = ModelParams::new(&ModelConfig::default(), 0).unwrap();
    let start = Instant::now();
    let r = gradient_check(&params, &sample, TrainConfig::default().lambda_pose, 1e-5, 200, 0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "AC3",
        r.checked >= 200 && r.max_relative_error < 1e-4 && secs < 60.0,
        format!(
            "{} of {} parameters, max relative error {:.2e} (limit 1e-4), worst {:?}, {secs:.1} s (limit 60 s)",
            r.checked,
            params.num_scalars(),
            r.max_relative_error,
            r.worst
        ),
    );
}

#[test]
fn ac4_attention_rows_sum_to_one() {
    let _g = serial();
    let config = ModelConfig::default();
    let params = ModelParams::new(&config, 4).unwrap();
    let slots = [
        AttentionSlot::TargetSelf,
        AttentionSlot::PartsSelf,
        AttentionSlot::TargetFromParts,
        AttentionSlot::PartsFromTarget,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let scale = rng.random_range(0.1..20.0);
        let (nq, nk) = (rng.random_range(1..64), rng.random_range(1..64));
        let block = rng.random_range(0..config.blocks);
        let slot = slots[rng.random_range(0..4)];
        let mut m = |rows: usize| {
            Mat::from_vec(
                rows,
                config.hidden,
                (0..rows * config.hidden).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
            )
        };
        let (q, k) = (m(nq), m(nk));
        for w in attention(&q, &k, &params, block, slot).weights {
            for r in 0..w.rows {
                worst = worst.max((w.row(r).iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    verdict("AC4", worst <= 1e-6, format!("1000 evaluations, worst |row sum - 1| = {worst:.2e} (limit 1e-6)"));
}

#[test]
fn ac5_part_permutation_equivariance() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dataset = PipelineConfig::default().dataset;
    let mut worst = 0.0f64;
    for i in 0..100 {
        let family = Family::ALL[i % 4];
        let spec = BlueprintSpec::new(family, 2 + (i / 4) % 4, rng.random());
        let bp = generate_synthetic_assembly(&spec).unwrap();
        let (target, parts) = blueprint_clouds(&bp, &dataset).unwrap();
        let params = ModelParams::new(&ModelConfig::default(), i as u64).unwrap();
        let mut perm: Vec<usize> = (0..parts.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<_> = perm.iter().map(|&j| parts[j].clone()).collect();
        let a = forward(&target, &parts, &params).unwrap().probabilities;
        let b = forward(&target, &shuffled, &params).unwrap().probabilities;
        for (k, &j) in perm.iter().enumerate() {
            worst = worst.max((a[j] - b[k]).abs());
        }
    }
    verdict("AC5", worst <= 1e-5, format!("100 shuffled forward passes, worst deviation {worst:.2e} (limit 1e-5)"));
}

#[test]
fn ac6_learning_signal() {
    let _g = serial();
    let p = pipeline();
    let r = &p.metrics.report;
    let one_gain = 100.0 * (r.one_step_acc - r.one_step_baseline);
    let seq_gain = 100.0 * (r.seq_acc - r.seq_baseline);
    let minutes = p.train_time.as_secs_f64() / 60.0;

    let samples: Vec<SequenceSample> = Workspace::new(&p.root, 1)
        .samples(Split::Train)
        .unwrap()
        .into_iter()
        .filter(|s| s.num_remaining() > 1)
        .take(10)
        .collect();
    let mut params = ModelParams::new(&p.config.train.model, 6).unwrap();
    let train = TrainConfig {
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut opt = AdamW::new(&params);
    let inputs: Vec<_> = samples.iter().map(|s| prepare(s, None).unwrap()).collect();
    let mut epochs = 0;
    while epochs < 500 && accuracy(&params, &samples).unwrap() < 1.0 {
        let mut grads: Vec<Mat> = params.tensors.iter().map(|t| Mat::zeros(t.rows, t.cols)).collect();
        for (s, x) in samples.iter().zip(&inputs) {
            let (_, g) = loss_and_grad(&params, s, x, train.lambda_pose).unwrap();
            for (a, b) in grads.iter_mut().zip(&g) {
                a.data.iter_mut().zip(&b.data).for_each(|(a, b)| *a += b / samples.len() as f64);
            }
        }
        opt.step(&mut params, &grads, 1e-3, &train);
        epochs += 1;
    }
    let overfit = accuracy(&params, &samples).unwrap();

    verdict(
        "AC6",
        one_gain >= 15.0 && seq_gain >= 10.0 && minutes < 30.0 && overfit == 1.0,
        format!(
            "1-Acc {:.1}% vs random {:.1}% (+{one_gain:.1} pts, need 15), Seq-Acc {:.1}% vs random {:.1}% (+{seq_gain:.1} pts, need 10), \
             training {minutes:.1} min (limit 30), 10-sample overfit {:.0}% after {epochs} epochs",
            100.0 * r.one_step_acc,
            100.0 * r.one_step_baseline,
            100.0 * r.seq_acc,
            100.0 * r.seq_baseline,
            100.0 * overfit
        ),
    );
}

#[test]
fn ac7_oracle_sequences_are_motion_feasible() {
    let _g = serial();
    let p = pipeline();
    let ws = Workspace::new(&p.root, 1);
    let corpus = ws.corpus().unwrap();
    let config = RrtConfig {
        max_iters: 20_000,
        ..p.config.resolved().rrt
    };
    let (mut planned, mut failures) = (0, Vec::new());
    for r in ws.sequences().unwrap().iter().filter(|r| r.num_parts <= 5 && r.split == Split::Test) {
        let e = corpus.iter().find(|e| e.id == r.blueprint_id).unwrap();
        let bp = ws.load_blueprint(e).unwrap();
        let seq = &r.sequences[0];
        let resting = resting_poses(&bp);
        planned += 1;
        let Ok(trajs) = plan_all_motions(&bp, seq, &resting, &config).unwrap() else {
            failures.push(bp.id.clone());
            continue;
        };
        for (k, (&part, t)) in seq.order.iter().zip(&trajs).enumerate() {
            let obstacles: Vec<_> = seq.order[..k]
                .iter()
                .map(|&j| (&bp.meshes[j], bp.target_poses[j]))
                .chain(bp.environment.iter().map(|(m, q)| (m, *q)))
                .collect();
            let ends = t.start().distance(&resting[part], 1.0) < 1e-9 && t.goal().distance(&bp.target_poses[part], 1.0) < 1e-9;
            if !ends || !t.is_collision_free(&bp.meshes[part], &obstacles, config.clearance, config.resolution / 2.0) {
                failures.push(format!("{} step {k}", bp.id));
            }
        }
    }
    verdict(
        "AC7",
        planned > 0 && failures.is_empty(),
        format!("{planned} test blueprints, {} failures {failures:?}", failures.len()),
    );
}

#[test]
fn ac8_contact_correctness() {
    let _g = serial();
    let mu = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut accepted, mut cone_ok, mut gate_ok) = (0, true, true);
    for i in 0..2000 {
        let mut v = || Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let c = v() * 0.3;
        let n = v().normalize();
        let com = v() * 0.05;
        let target = if i % 2 == 0 {
            let f = project_cone(&(v() + Vector3::z() * 1.5), mu);
            let w = grasp_map(&c, &n, &com) * f;
            WrenchTarget::new(w.fixed_rows::<3>(0).into_owned(), w.fixed_rows::<3>(3).into_owned())
        } else {
            WrenchTarget::new(v() * 5.0, v())
        };
        let s = solve_push_force(&c, &n, &com, &target, mu);
        if s.accepted {
            accepted += 1;
            cone_ok &= s.force.z >= -1e-8 && s.force.xy().norm() <= mu * s.force.z + 1e-8;
            gate_ok &= s.residual <= residual_tolerance(&target);
        }
    }
    let a = cone_ok && gate_ok && accepted > 0;

    let w = WrenchTarget::new(Vector3::new(0.0, 0.0, 2.7), Vector3::zeros());
    let s = solve_push_force(&Vector3::new(0.0, 0.0, -0.1), &Vector3::z(), &Vector3::zeros(), &w, mu);
    let b_err = (s.force - Vector3::new(0.0, 0.0, w.norm())).norm();
    let b = s.accepted && b_err <= 1e-6;

    let tangential = WrenchTarget::new(Vector3::x(), Vector3::zeros());
    let c = !solve_push_force(&Vector3::zeros(), &Vector3::z(), &Vector3::zeros(), &tangential, mu).accepted;

    let pair = GraspPair::new(Vector3::x(), -Vector3::x(), -Vector3::x(), Vector3::x());
    let q = ferrari_canny(&pair, mu, 8, &Vector3::zeros(), 1.0);
    let sphere = TriMesh::icosphere(1.0, 3).unwrap();
    let cloud = sample_point_cloud(&sphere, &Pose::identity(), 1024, 8).unwrap();
    let best = enumerate_grasp_pairs(&cloud, mu, 10.0, &Vector3::zeros(), 1.0)
        .first()
        .map_or(0.0, |p| p.quality);
    let mut invariance = 0.0f64;
    for _ in 0..200 {
        let mut v = || Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let pose = Pose::from_axis_angle(v(), v());
        let tilt = v() * 0.1;
        let p = GraspPair::new(Vector3::x() + tilt, (-Vector3::x() + tilt * 0.5).normalize(), -Vector3::x(), Vector3::x());
        let com = tilt * 0.3;
        let moved = GraspPair::new(
            pose.transform_point(&p.point_a),
            pose.transform_vector(&p.normal_a),
            pose.transform_point(&p.point_b),
            pose.transform_vector(&p.normal_b),
        );
        let d = ferrari_canny(&p, mu, 8, &com, 1.0) - ferrari_canny(&moved, mu, 8, &pose.transform_point(&com), 1.0);
        invariance = invariance.max(d.abs());
    }
    let d = q > 0.0 && best > 0.0 && invariance < 1e-9;

    verdict(
        "AC8",
        a && b && c && d && in_cone(&s.force, mu),
        format!(
            "(a) {accepted} accepted pushes, cone {cone_ok}, gate {gate_ok}; (b) aligned force error {b_err:.1e}; \
             (c) tangential rejected {c}; (d) antipodal quality {q:.4}, sphere best {best:.4}, rigid drift {invariance:.1e}"
        ),
    );
}

fn cli(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_asmplan"))
        .args(["--out", dir.to_str().unwrap(), "--jobs", "1"])
        .args(args)
        .status()
        .unwrap();
    assert!(status.success(), "asmplan {args:?} failed");
}

#[test]
fn ac9_pipeline_is_deterministic() {
    let _g = serial();
    let p = pipeline();
    let mut mismatched = Vec::new();

    // Same root seed at default scale, single-threaded this time.
    let again = tempfile::tempdir().unwrap();
    let ws = Workspace::new(again.path(), 1);
    ws.generate(&p.config).unwrap();
    ws.enumerate(&p.config).unwrap();
    ws.dataset(&p.config).unwrap();
    ws.plan(&p.config, PlanMode::Oracle, None).unwrap();
    for f in ["sequences.jsonl", "dataset.jsonl", "plan.json"] {
        if std::fs::read(p.root.join(f)).unwrap() != std::fs::read(again.path().join(f)).unwrap() {
            mismatched.push(format!("default/{f}"));
        }
    }

    // Every stage through the command line, training included, twice.
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = cfg_dir.path().join("small.toml");
    std::fs::write(
        &cfg,
        "seed = 9\n[corpus]\ntrain_blueprints = 12\ntest_blueprints = 8\n[train]\nepochs = 2\n",
    )
    .unwrap();
    let runs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for r in &runs {
        cli(r.path(), &["--config", cfg.to_str().unwrap(), "gen"]);
        for stage in ["enumerate", "dataset", "train", "plan"] {
            cli(r.path(), &[stage]);
        }
    }
    for f in ["sequences.jsonl", "dataset.jsonl", "plan.json", "model.ckpt"] {
        let a = std::fs::read(runs[0].path().join(f)).unwrap();
        if a.is_empty() || a != std::fs::read(runs[1].path().join(f)).unwrap() {
            mismatched.push(format!("cli/{f}"));
        }
    }
    verdict(
        "AC9",
        mismatched.is_empty(),
        format!("default-scale corpus and plans regenerated, CLI pipeline run twice; differing files {mismatched:?}"),
    );
}

#[test]
fn ac10_seq_acc_falls_with_part_count() {
    let _g = serial();
    let p = pipeline();
    let m = &p.metrics;
    let by: Vec<String> = m
        .report
        .by_part_count
        .iter()
        .map(|(n, c)| format!("{n}: {:.1}%", 100.0 * c.seq_acc))
        .collect();
    let counts: BTreeSet<usize> = m.report.by_part_count.keys().copied().collect();
    let files = ["report.svg", "report.md"].iter().all(|f| p.root.join(f).exists());
    verdict(
        "AC10",
        m.trend.holds && files && counts == (2..=5).collect(),
        format!("Seq-Acc by part count [{}], inversions {:?}", by.join(", "), m.trend.inversions),
    );
}
