mod common;

use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;

use envgen::environment::{
    rebuild_metadata, serialize, EnvironmentSpec, FloorPlan, MassCategory, ObjectCategory, ObjectSpec, Placement,
    Priority, RelationKind, Room, SpatialRelation,
};
use envgen::layout::{encode, solve, solve_with_relaxation, RelaxError, SolverConfig};
use envgen::metrics::logic_coverage;
use envgen::physics::check_all;
use envgen::plan::{extract_paths, parse_behavior_plan, serialize_behavior_plan, BehaviorPlanTree, PlanNode};
use envgen::scene::relax_policy;
use envgen::sim::{run, DEFAULT_BUDGET};
use envgen::trajectory::{
    cartesian_trajectories, constraint_union, exhaustive_min_cover, jaccard_index, minimal_trajectory_selection,
    DEFAULT_EXHAUSTIVE_BOUND,
};

use common::*;

fn plan_node(depth: u32) -> impl Strategy<Value = PlanNode> {
    let leaf = "[a-z]{1,8}( [a-z]{1,6}){0,2}\\.".prop_map(PlanNode::Leaf);
    leaf.prop_recursive(depth, 24, 4, |inner| {
        ("[a-z]{2,8}( [a-z]{2,6}){0,3}\\?", prop::collection::btree_set("[a-z]{1,6}", 2..=4), prop::collection::vec(inner, 4))
            .prop_map(|(query, responses, children)| PlanNode::Query {
                query,
                branches: responses.into_iter().zip(children).collect(),
            })
    })
}

fn collect_pairs(node: &PlanNode, out: &mut BTreeSet<(String, String)>) {
    if let PlanNode::Query { query, branches } = node {
        for (response, child) in branches {
            out.insert((query.clone(), response.clone()));
            collect_pairs(child, out);
        }
    }
}

fn sizes() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=4, 1..=4)
}

proptest! {
    #[test]
    fn plan_document_round_trips(roots in prop::collection::vec(plan_node(3), 1..=3)) {
        let text = serialize_behavior_plan(&roots);
        prop_assert_eq!(parse_behavior_plan(&text).unwrap(), roots);
    }

    #[test]
    fn paths_match_leaves_and_tree(root in plan_node(3)) {
        let tree = BehaviorPlanTree::new("sub", root);
        let paths = extract_paths(&tree);
        prop_assert_eq!(paths.len(), tree.root.leaf_count());
        let ids: BTreeSet<_> = paths.iter().map(|p| p.path_id.clone()).collect();
        prop_assert_eq!(ids.len(), paths.len());
        let mut pairs = BTreeSet::new();
        collect_pairs(&tree.root, &mut pairs);
        for step in paths.iter().flat_map(|p| &p.steps) {
            prop_assert!(pairs.contains(&(step.query.clone(), step.response.clone())));
        }
    }

    #[test]
    fn selection_covers_and_stays_between_oracle_and_input(sizes in sizes()) {
        let sets = synthetic_sets(&sizes);
        let full: Vec<_> = cartesian_trajectories(&sets).unwrap().collect();
        prop_assert_eq!(full.len(), sizes.iter().product::<usize>());
        let minimal = minimal_trajectory_selection(&full);
        prop_assert_eq!(constraint_union(&minimal), constraint_union(&full));
        prop_assert!(minimal.len() <= full.len());
        let optimum = *sizes.iter().max().unwrap();
        prop_assert!(minimal.len() >= optimum);
        if full.len() <= DEFAULT_EXHAUSTIVE_BOUND {
            prop_assert_eq!(exhaustive_min_cover(&full, DEFAULT_EXHAUSTIVE_BOUND).unwrap().len(), optimum);
        }
        prop_assert_eq!(minimal_trajectory_selection(&full), minimal);
    }

    #[test]
    fn jaccard_is_bounded_and_symmetric(
        a in prop::collection::btree_set(0u8..20, 0..10),
        b in prop::collection::btree_set(0u8..20, 0..10),
    ) {
        let ab = jaccard_index(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, jaccard_index(&b, &a));
        prop_assert_eq!(jaccard_index(&a, &a), 1.0);
    }
}

#[derive(Debug, Clone)]
struct Scene {
    width: f64,
    depth: f64,
    sizes: Vec<[f64; 3]>,
    relations: Vec<(RelationKind, usize, usize, bool)>,
    seed: u64,
}

fn scene() -> impl Strategy<Value = Scene> {
    let kinds = prop::sample::select(vec![
        RelationKind::Near,
        RelationKind::Far,
        RelationKind::Edge,
        RelationKind::SideOf,
        RelationKind::InFrontOf,
        RelationKind::CenterAligned,
        RelationKind::FaceTo,
        RelationKind::Center,
    ]);
    (
        12u32..=24,
        12u32..=24,
        prop::collection::vec((2u32..=8, 2u32..=8, 2u32..=8), 2..=4),
        prop::collection::vec((kinds, 0usize..4, 0usize..4, any::<bool>()), 0..=4),
        any::<u64>(),
    )
        .prop_map(|(w, d, sizes, relations, seed)| {
            let n = sizes.len();
            Scene {
                width: f64::from(w) * 0.25,
                depth: f64::from(d) * 0.25,
                sizes: sizes.into_iter().map(|(x, y, z)| [f64::from(x) * 0.1, f64::from(y) * 0.1, f64::from(z) * 0.1]).collect(),
                relations: relations
                    .into_iter()
                    .map(|(k, s, r, e)| (k, s % n, r % n, e))
                    .filter(|(k, s, r, _)| !k.needs_object_reference() || s != r)
                    .collect(),
                seed,
            }
        })
}

impl Scene {
    fn parts(&self) -> (FloorPlan, Vec<ObjectSpec>, Vec<SpatialRelation>) {
        let plan = FloorPlan { rooms: vec![Room::rectangle("room", [0.0, 0.0], [self.width, self.depth])], ..Default::default() };
        let objects = self
            .sizes
            .iter()
            .enumerate()
            .map(|(i, &size)| ObjectSpec {
                id: format!("o{i}"),
                description: String::new(),
                room: "room".into(),
                size,
                category: ObjectCategory::Enrichment,
                mass_category: MassCategory::Light,
                asset_id: None,
                attributes: Default::default(),
            })
            .collect();
        let relations = self
            .relations
            .iter()
            .enumerate()
            .map(|(i, &(kind, s, r, enrichment))| SpatialRelation {
                id: format!("r{i}"),
                kind,
                subject: format!("o{s}"),
                reference: kind.needs_object_reference().then(|| format!("o{r}")),
                priority: if enrichment { Priority::Enrichment } else { Priority::Task },
            })
            .collect();
        (plan, objects, relations)
    }

    fn config(&self) -> SolverConfig {
        SolverConfig { grid_resolution: 0.25, seed: self.seed, timeout_ms: 5_000, ..SolverConfig::default() }
    }
}

fn placed(plan: FloorPlan, objects: Vec<ObjectSpec>, relations: Vec<SpatialRelation>, solution: &envgen::layout::Solution) -> EnvironmentSpec {
    let mut env = EnvironmentSpec::new("scene", "task", plan);
    env.placements = objects
        .iter()
        .map(|o| Placement {
            object: o.id.clone(),
            position: solution.position(&o.id).unwrap(),
            direction: solution.direction(&o.id).unwrap(),
        })
        .collect();
    env.objects = objects;
    env.relations = relations;
    env.relaxed = solution.relaxed.iter().map(|c| c.trim_start_matches("rel:").to_string()).collect();
    env
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solver_output_passes_the_validator(scene in scene()) {
        let (plan, objects, relations) = scene.parts();
        let config = scene.config();
        let problem = encode(&plan, &objects, &relations, &config).unwrap();
        if let Ok(solution) = solve(&problem, &config) {
            prop_assert_eq!(&solve(&problem, &config).unwrap(), &solution);
            let env = placed(plan, objects, relations, &solution);
            let report = check_all(&env, &config.thresholds);
            prop_assert!(report.entity.passed, "{:?}", report.entity.violations);
            prop_assert!(report.relation.passed, "{:?}", report.relation.violations);
        }
    }

    #[test]
    fn relaxation_drops_a_policy_prefix(scene in scene()) {
        let (plan, objects, relations) = scene.parts();
        let config = scene.config();
        let problem = encode(&plan, &objects, &relations, &config).unwrap();
        let policy = relax_policy(&relations);
        match solve_with_relaxation(&problem, &config, &policy) {
            Ok(solution) => {
                prop_assert_eq!(&solution.relaxed[..], &policy[..solution.relaxed.len()]);
                let env = placed(plan, objects, relations, &solution);
                for relation in env.relations.iter().filter(|r| r.priority == Priority::Task) {
                    prop_assert!(!env.is_relaxed(&relation.id));
                }
                prop_assert!(check_all(&env, &config.thresholds).relation.passed);
            }
            Err(RelaxError::CoreUnsat { relaxed, .. }) => prop_assert_eq!(relaxed, policy),
            Err(other) => prop_assert!(false, "{other}"),
        }
    }
}

/// All twelve fixture environments, built once.
fn every_environment() -> &'static Vec<EnvironmentSpec> {
    static ENVS: OnceLock<Vec<EnvironmentSpec>> = OnceLock::new();
    ENVS.get_or_init(|| build_all(&full_trajectories(&derived_trees())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coverage_never_drops_when_adding_an_environment(
        picks in prop::collection::vec(0usize..12, 0..6),
        extra in 0usize..12,
    ) {
        let envs = every_environment();
        let bundle = bundle();
        let subset: Vec<_> = picks.iter().map(|&i| envs[i].clone()).collect();
        let mut bigger = subset.clone();
        bigger.push(envs[extra].clone());
        let before = logic_coverage(&subset, &bundle.ground_truth, &bundle.schema).unwrap();
        let after = logic_coverage(&bigger, &bundle.ground_truth, &bundle.schema).unwrap();
        prop_assert!(after >= before);
    }
}

#[test]
fn minimal_and_full_environment_sets_cover_alike() {
    let envs = every_environment();
    let bundle = bundle();
    let trees = derived_trees();
    let minimal = minimal_trajectory_selection(&full_trajectories(&trees));
    let chosen: Vec<_> = envs.iter().filter(|e| minimal.iter().any(|t| t.trajectory_id == e.trajectory_id)).cloned().collect();
    assert_eq!(chosen.len(), minimal.len());
    let all = logic_coverage(envs, &bundle.ground_truth, &bundle.schema).unwrap();
    assert_eq!(logic_coverage(&chosen, &bundle.ground_truth, &bundle.schema).unwrap(), all);
    assert_eq!(all, 1.0);
}

#[test]
fn built_environments_keep_their_invariants() {
    let bundle = bundle();
    for env in every_environment() {
        assert_eq!(rebuild_metadata(env).unwrap(), env.metadata, "{}", env.id);
        assert_eq!(rebuild_metadata(env).unwrap(), rebuild_metadata(env).unwrap());
        let text = serialize(env).unwrap();
        let back = envgen::environment::deserialize(&text).unwrap();
        assert_eq!(&back, env);
        assert!(bundle.schema.unmet_steps(env.trajectory_paths.iter().flat_map(|p| &p.steps), &env.metadata).is_empty());
        let report = check_all(env, &SolverConfig::default().thresholds);
        for dim in [&report.floor_plan, &report.entity, &report.relation] {
            assert_eq!(dim.passed, dim.violations.is_empty());
        }
        for required in &bundle.schema.required_objects {
            assert_eq!(env.metadata.value(required, "presence"), "present", "{} lacks {required}", env.id);
        }
    }
}

#[test]
fn simulation_is_deterministic_everywhere() {
    let fx = SimFixture::load();
    let task = fx.task();
    for env in every_environment() {
        for policy in &fx.policies {
            let a = run(policy, env, &task, DEFAULT_BUDGET).unwrap();
            let b = run(policy, env, &task, DEFAULT_BUDGET).unwrap();
            assert_eq!(a, b);
        }
    }
}
