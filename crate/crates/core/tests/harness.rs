use asmplan::geometry::{Pose, TriMesh};
use asmplan::harness::*;
use asmplan::model::{ModelConfig, ModelParams};
use asmplan::{Blueprint, Error};
use nalgebra::Vector3;

fn quick_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.dataset.n_target = 64;
    c.dataset.n_part = 32;
    c
}

fn check_timing(plan: &AssemblyPlan) {
    let t = plan.timing.as_ref().unwrap();
    assert!(t.sequence_ms > 0.0 && t.total_ms > 0.0);
    if plan.feasible {
        assert!(t.motion_ms > 0.0 && t.contact_ms > 0.0);
    }
    let sum = t.sequence_ms + t.motion_ms + t.contact_ms;
    assert!(sum <= t.total_ms && sum >= 0.95 * t.total_ms, "{t:?}");
}

#[test]
fn oracle_plans_succeed_and_align() {
    let config = quick_config().resolved();
    for family in Family::ALL {
        for n in [2, 3, 5] {
            let bp = generate_synthetic_assembly(&BlueprintSpec::new(family, n, 11 * n as u64)).unwrap();
            let plan = plan_assembly(&bp, PlanMode::Oracle, None, &config).unwrap();
            assert!(plan.feasible, "{}: {:?}", bp.id, plan.failure);
            assert!(plan.failure.is_none());
            assert_eq!(plan.trajectories.len(), n);
            assert_eq!(plan.contacts.len(), n);
            for (t, &p) in plan.trajectories.iter().zip(&plan.sequence.order) {
                assert_eq!(t.part_id, p);
            }
            check_timing(&plan);
        }
    }
}

#[test]
fn plans_survive_json_unchanged() {
    let config = quick_config().resolved();
    let bp = generate_synthetic_assembly(&BlueprintSpec::new(Family::ScrewWasherPlate, 3, 5)).unwrap();
    let plan = plan_assembly(&bp, PlanMode::Oracle, None, &config).unwrap();
    let text = serde_json::to_string(&plan).unwrap();
    let back: AssemblyPlan = serde_json::from_str(&text).unwrap();
    assert_eq!(back, plan);
    let dir = tempfile::tempdir().unwrap();
    write_plans(dir.path(), std::slice::from_ref(&plan)).unwrap();
    assert_eq!(read_plans(dir.path()).unwrap(), vec![plan.without_timing()]);
}

#[test]
fn single_part_plan_is_trivial() {
    let cube = TriMesh::cuboid(Vector3::repeat(0.04)).unwrap();
    let bp = Blueprint::new("one", vec![cube], vec![Pose::from_translation(Vector3::new(0.0, 0.0, 0.02))]).unwrap();
    let plan = plan_assembly(&bp, PlanMode::Oracle, None, &quick_config().resolved()).unwrap();
    assert!(plan.feasible);
    assert_eq!(plan.sequence.order, vec![0]);
    assert_eq!((plan.trajectories.len(), plan.contacts.len()), (1, 1));
}

#[test]
fn model_mode_reports_instead_of_repairing() {
    let config = quick_config().resolved();
    let bp = generate_synthetic_assembly(&BlueprintSpec::new(Family::Stack, 4, 2)).unwrap();
    assert!(matches!(
        plan_assembly(&bp, PlanMode::Model, None, &config),
        Err(Error::InvalidInput(_))
    ));
    let small = ModelConfig {
        hidden: 16,
        ..Default::default()
    };
    let mut infeasible = 0;
    for seed in 0..6 {
        let params = ModelParams::new(&small, seed).unwrap();
        let plan = plan_assembly(&bp, PlanMode::Model, Some(&params), &config).unwrap();
        let inferred = infer_blueprint(&bp, &params, &config).unwrap().sequence.order;
        assert_eq!(plan.sequence.order, inferred);
        if !plan.feasible {
            infeasible += 1;
            let f = plan.failure.as_ref().unwrap();
            assert_eq!(f.level, PlanLevel::Sequence);
            assert!(plan.trajectories.is_empty() && plan.contacts.is_empty());
        }
        check_timing(&plan);
    }
    assert!(infeasible > 0, "every random model found the stack order");
}

#[test]
fn generation_is_reproducible() {
    let mut config = quick_config();
    config.corpus.train_blueprints = 3;
    config.corpus.test_blueprints = 4;
    config.seed = 21;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ea = Workspace::new(a.path(), 1).generate(&config).unwrap();
    let eb = Workspace::new(b.path(), 0).generate(&config).unwrap();
    assert_eq!(ea, eb);
    for e in &ea {
        let wa = Workspace::new(a.path(), 1);
        let wb = Workspace::new(b.path(), 1);
        let fa = std::fs::read(wa.blueprint_dir(e).join("blueprint.json")).unwrap();
        let fb = std::fs::read(wb.blueprint_dir(e).join("blueprint.json")).unwrap();
        assert_eq!(fa, fb);
    }
    let saved = PipelineConfig::load(&a.path().join("config.toml")).unwrap();
    assert_eq!(saved, config);
}
