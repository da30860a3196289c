use super::instances::{random_instance, random_instances};
use super::*;
use crate::predictor::{class_distribution_stats, train, TrainParams};
use crate::rng::SeedRng;
use crate::world::generate_dataset;

fn d(v: &[u32]) -> Diet {
    Diet::new(v.to_vec())
}

struct Fixture {
    world: WorldConfig,
    oracle: TrainedModel,
    tree: TrainedModel,
    stats: DistributionStats,
}

fn fixture() -> Fixture {
    let world = WorldConfig::default();
    let samples = generate_dataset(&world, 10_000, 42).unwrap();
    let tree = train(&samples[..8000], &TrainParams::default()).unwrap();
    let stats = class_distribution_stats(&samples).unwrap();
    Fixture {
        oracle: TrainedModel::oracle(&world),
        world,
        tree,
        stats,
    }
}

fn worked_constraints() -> FeedbackConstraints {
    FeedbackConstraints {
        mutable_plants: vec![1, 3],
        ranges: vec![
            PlantRange {
                plant: 1,
                min: 0,
                max: 4,
            },
            PlantRange {
                plant: 3,
                min: 0,
                max: 3,
            },
        ],
        budget: 20,
        max_changes: 3,
    }
}

#[test]
fn identity_for_improving_diet() {
    let f = fixture();
    let ex = Explainer::new(&f.world, &f.oracle, &f.stats);
    let out = ex
        .generate_counterfactual(&d(&[0, 2, 0, 1, 0]), &FeedbackConstraints::defaults(&f.world))
        .unwrap();
    let cf = out.counterfactual().unwrap();
    assert_eq!(cf.distance, 0);
    assert!(cf.is_identity());
    assert_eq!(cf.suggested, d(&[0, 2, 0, 1, 0]));
    let g = ex.goodness_of(cf, &FeedbackConstraints::defaults(&f.world));
    assert_eq!((g.proximity, g.sparsity, g.validity, g.feasibility), (0, 0, true, true));
}

#[test]
fn worked_example_matches_brute_force() {
    let f = fixture();
    let original = d(&[1, 1, 0, 0, 2]);
    let constraints = worked_constraints();
    let reference = brute_force_optimal(&f.world, &f.oracle, &original, &constraints)
        .unwrap()
        .unwrap();
    assert_eq!(reference.suggested, d(&[1, 4, 0, 0, 2]));
    assert_eq!(reference.distance, 6);

    let ex = Explainer::new(&f.world, &f.oracle, &f.stats);
    let out = ex.generate_counterfactual(&original, &constraints).unwrap();
    let cf = out.counterfactual().unwrap();
    assert_eq!(cf.suggested, d(&[1, 4, 0, 0, 2]));
    assert_eq!(cf.distance, 6);
    assert_eq!(
        cf.changed_plants,
        vec![PlantChange {
            plant: 1,
            old: 1,
            new: 4
        }]
    );
    assert_eq!(cf.predicted.label, Label::Improve);
    assert_eq!(cf.hints.len(), 1);
    assert_eq!(cf.hints[0].plant, 1);
    assert!(cf.hints[0]
        .text
        .starts_with("For plant P2, healthy diets in our data typically use between"));

    let g = ex.goodness_of(cf, &constraints);
    assert_eq!((g.proximity, g.sparsity), (6, 1));
    assert!(g.validity && g.feasibility);
}

#[test]
fn distractor_only_is_infeasible() {
    let f = fixture();
    let original = d(&[6, 0, 0, 0, 6]);
    // x3 never affects the gain: g stays at -18 for every value
    for v in 0..=6 {
        assert_eq!(f.world.ground_truth_gain(&d(&[6, 0, v, 0, 6])).unwrap(), -18.0);
    }
    let constraints = FeedbackConstraints {
        mutable_plants: vec![2],
        ..FeedbackConstraints::defaults(&f.world)
    };
    assert!(brute_force_optimal(&f.world, &f.oracle, &original, &constraints)
        .unwrap()
        .is_none());
    let ex = Explainer::new(&f.world, &f.oracle, &f.stats);
    let g = match ex.generate_counterfactual(&original, &constraints).unwrap() {
        Explanation::Guidance(g) => g,
        other => panic!("expected guidance, got {other:?}"),
    };
    assert_eq!(g.reason, GuidanceReason::NoFlipInSubspace);
    assert!(g.suggested_additions.contains(&1));
    let applied = g.apply(&constraints);
    assert!(ex
        .generate_counterfactual(&original, &applied)
        .unwrap()
        .counterfactual()
        .is_some());
}

#[test]
fn tight_budget_guidance() {
    let f = fixture();
    let original = d(&[0, 0, 0, 0, 0]);
    let constraints = FeedbackConstraints {
        mutable_plants: vec![1],
        ranges: Vec::new(),
        budget: 5,
        max_changes: 3,
    };
    let ex = Explainer::new(&f.world, &f.oracle, &f.stats);
    let g = ex.guide_constraints(&original, &constraints).unwrap();
    assert_eq!(g.reason, GuidanceReason::BudgetTooTight);
    assert_eq!(g.suggested_budget, Some(6));
    assert!(g.suggested_additions.is_empty());
    let cf = ex.generate_counterfactual(&original, &g.apply(&constraints)).unwrap();
    assert_eq!(cf.counterfactual().unwrap().suggested, d(&[0, 3, 0, 0, 0]));
}

#[test]
fn narrow_range_guidance_widens() {
    let f = fixture();
    let original = d(&[0, 0, 0, 0, 0]);
    let constraints = FeedbackConstraints {
        mutable_plants: vec![1],
        ranges: vec![PlantRange {
            plant: 1,
            min: 0,
            max: 2,
        }],
        budget: 20,
        max_changes: 1,
    };
    let ex = Explainer::new(&f.world, &f.oracle, &f.stats);
    let g = match ex.generate_counterfactual(&original, &constraints).unwrap() {
        Explanation::Guidance(g) => g,
        other => panic!("{other:?}"),
    };
    assert_eq!(g.reason, GuidanceReason::NoFlipInSubspace);
    assert_eq!(
        g.suggested_ranges,
        vec![PlantRange {
            plant: 1,
            min: 0,
            max: 6
        }]
    );
    assert!(g.suggested_budget.is_none());
}

#[test]
fn change_cap_guidance() {
    // From (6,0,0,0,6) every flip within budget needs at least three changes.
    let f = fixture();
    let original = d(&[6, 0, 0, 0, 6]);
    let constraints = FeedbackConstraints {
        mutable_plants: (0..5).collect(),
        ranges: Vec::new(),
        budget: 20,
        max_changes: 1,
    };
    let ex = Explainer::new(&f.world, &f.oracle, &f.stats);
    let g = ex.guide_constraints(&original, &constraints).unwrap();
    assert!(g.suggested_max_changes.is_some());
    assert!(ex
        .generate_counterfactual(&original, &g.apply(&constraints))
        .unwrap()
        .counterfactual()
        .is_some());
}

#[test]
fn constraint_validation() {
    let f = fixture();
    let ex = Explainer::new(&f.world, &f.oracle, &f.stats);
    let original = d(&[1, 1, 0, 0, 2]);
    let bad = [
        FeedbackConstraints {
            mutable_plants: vec![],
            ..FeedbackConstraints::defaults(&f.world)
        },
        FeedbackConstraints {
            mutable_plants: vec![9],
            ..FeedbackConstraints::defaults(&f.world)
        },
        FeedbackConstraints {
            mutable_plants: vec![1, 1],
            ..FeedbackConstraints::defaults(&f.world)
        },
        FeedbackConstraints {
            max_changes: 0,
            ..FeedbackConstraints::defaults(&f.world)
        },
        FeedbackConstraints {
            max_changes: 6,
            ..FeedbackConstraints::defaults(&f.world)
        },
        FeedbackConstraints {
            mutable_plants: vec![1],
            ranges: vec![PlantRange {
                plant: 2,
                min: 0,
                max: 1,
            }],
            ..FeedbackConstraints::defaults(&f.world)
        },
        FeedbackConstraints {
            mutable_plants: vec![1],
            ranges: vec![PlantRange {
                plant: 1,
                min: 3,
                max: 2,
            }],
            ..FeedbackConstraints::defaults(&f.world)
        },
        FeedbackConstraints {
            mutable_plants: vec![1],
            ranges: vec![PlantRange {
                plant: 1,
                min: 0,
                max: 7,
            }],
            ..FeedbackConstraints::defaults(&f.world)
        },
    ];
    for c in bad {
        assert!(
            matches!(ex.generate_counterfactual(&original, &c), Err(Error::Constraint(_))),
            "{c:?} accepted"
        );
    }
    assert!(ex
        .generate_counterfactual(&d(&[9, 0, 0, 0, 0]), &FeedbackConstraints::defaults(&f.world))
        .is_err());
}

#[test]
fn feedback_input_defaults() {
    let w = WorldConfig::default();
    let c = FeedbackInput::default().resolve(&w).unwrap();
    assert_eq!(c, FeedbackConstraints::defaults(&w));
    let c: FeedbackConstraints =
        serde_json::from_str(r#"{"mutable_plants":[1,3],"budget":20,"max_changes":2}"#).unwrap();
    assert!(c.ranges.is_empty());
}

#[test]
fn brute_force_rejects_large_subspace() {
    let mut world = WorldConfig::default();
    for p in &mut world.plants {
        p.leaf_max = 40;
    }
    let oracle = TrainedModel::oracle(&world);
    let c = FeedbackConstraints::defaults(&world);
    assert!(matches!(
        brute_force_optimal(&world, &oracle, &d(&[0, 0, 0, 0, 0]), &c),
        Err(Error::SubspaceTooLarge(_))
    ));
}

#[test]
fn explanation_json_is_tagged() {
    let f = fixture();
    let ex = Explainer::new(&f.world, &f.oracle, &f.stats);
    let out = ex
        .generate_counterfactual(&d(&[1, 1, 0, 0, 2]), &worked_constraints())
        .unwrap();
    let json = serde_json::to_value(&out).unwrap();
    assert!(json.get("counterfactual").is_some());
    let back: Explanation = serde_json::from_value(json).unwrap();
    assert_eq!(back, out);
}

fn check_against_oracle(world: &WorldConfig, model: &TrainedModel, stats: &DistributionStats, seed: u64) {
    let ex = Explainer::new(world, model, stats);
    let inst = random_instance(world, &mut SeedRng::new(seed));
    let got = ex.generate_counterfactual(&inst.original, &inst.constraints).unwrap();
    let want = brute_force_optimal(world, model, &inst.original, &inst.constraints).unwrap();
    match (&got, &want) {
        (Explanation::Counterfactual(cf), Some(reference)) => {
            assert_eq!(cf.distance, reference.distance, "{inst:?}");
            assert_eq!(cf.suggested, reference.suggested, "{inst:?}");
            assert_eq!(model.predict(&cf.suggested).unwrap().label, Label::Improve);
            assert!(is_feasible(cf, &inst.constraints, world) || cf.is_identity());
            assert!(cf
                .hints
                .iter()
                .all(|h| cf.changed_plants.iter().any(|c| c.plant == h.plant)));
        }
        (Explanation::Guidance(g), None) => {
            let applied = g.apply(&inst.constraints);
            assert!(ex
                .generate_counterfactual(&inst.original, &applied)
                .unwrap()
                .counterfactual()
                .is_some());
        }
        _ => panic!("disagreement on {inst:?}: {got:?} vs {want:?}"),
    }
}

#[test]
fn deterministic_across_runs() {
    let f = fixture();
    let ex = Explainer::new(&f.world, &f.tree, &f.stats);
    for inst in random_instances(&f.world, 20, 3) {
        let a = ex.generate_counterfactual(&inst.original, &inst.constraints).unwrap();
        let b = ex.generate_counterfactual(&inst.original, &inst.constraints).unwrap();
        assert_eq!(a, b);
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn shared() -> &'static Fixture {
        static F: OnceLock<Fixture> = OnceLock::new();
        F.get_or_init(fixture)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn staged_matches_brute_force_oracle_model(seed in any::<u64>()) {
            let f = shared();
            check_against_oracle(&f.world, &f.oracle, &f.stats, seed);
        }

        #[test]
        fn staged_matches_brute_force_tree_model(seed in any::<u64>()) {
            let f = shared();
            check_against_oracle(&f.world, &f.tree, &f.stats, seed);
        }
    }
}
