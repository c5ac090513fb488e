//! Acceptance suite. Each test prints one `criterion N PASS|FAIL` line to
//! stderr (uncaptured) with its timing, then asserts.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use envgen::environment::{
    EnvironmentSpec, FloorPlan, MassCategory, ObjectCategory, ObjectSpec, Placement, Priority, RelationKind, Room,
    SpatialRelation,
};
use envgen::geometry::{footprint_extents, Aabb, Cardinal};
use envgen::layout::{encode, relation_holds, solve, Body, SolveError, SolverConfig, Target};
use envgen::metrics::{logic_coverage, logic_coverage_detail};
use envgen::physics::{check_all, check_entities, check_relations};
use envgen::pipeline::{cmd_run_all, stable_manifest, RunConfig};
use envgen::plan::{DecisionPath, LogicalTrajectory};
use envgen::provider::ProviderMode;
use envgen::scene::{arrange, build_environment, relax_policy, SceneContext, DEFAULT_REFINE_ROUNDS};
use envgen::sim::{fault_detection_rate, run, scenario_validity, PolicyLabel, Verdict, DEFAULT_BUDGET};
use envgen::trajectory::{
    cartesian_trajectories, constraint_union, exhaustive_min_cover, minimal_trajectory_selection,
    minimal_trajectory_selection_with_stats, DEFAULT_EXHAUSTIVE_BOUND,
};

use common::*;

/// Runs `body`, prints the verdict line, and fails the test if the body
/// panicked or overran `limit`.
fn criterion(number: u32, title: &str, limit: Duration, body: impl FnOnce() -> String) {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let line = match &result {
        Ok(detail) if elapsed <= limit => format!("criterion {number:>2} PASS  {title}: {detail} [{elapsed:.2?} < {limit:?}]"),
        Ok(detail) => format!("criterion {number:>2} FAIL  {title}: {detail} [took {elapsed:.2?}, limit {limit:?}]"),
        Err(_) => format!("criterion {number:>2} FAIL  {title} [{elapsed:.2?}]"),
    };
    let _ = writeln!(std::io::stderr(), "{line}");
    match result {
        Err(panic) => resume_unwind(panic),
        Ok(_) => assert!(elapsed <= limit, "criterion {number} took {elapsed:?}, limit {limit:?}"),
    }
}

fn all(sizes: &[usize]) -> Vec<LogicalTrajectory> {
    cartesian_trajectories(&synthetic_sets(sizes)).unwrap().collect()
}

#[test]
fn criterion_01_three_two_two_example() {
    criterion(1, "three-subtask trajectory reduction", Duration::from_secs(1), || {
        let full = all(&[3, 2, 2]);
        assert_eq!(full.len(), 12);
        let universe = constraint_union(&full);
        assert_eq!(universe.len(), 7);
        let minimal = minimal_trajectory_selection(&full);
        assert!(minimal.len() <= 4, "selected {}", minimal.len());
        assert_eq!(constraint_union(&minimal), universe);
        let oracle = exhaustive_min_cover(&full, DEFAULT_EXHAUSTIVE_BOUND).unwrap();
        assert_eq!(oracle.len(), 3);
        assert_eq!(constraint_union(&oracle), universe);

        // The same shape derived from the fixture task.
        let trees = derived_trees();
        let real = full_trajectories(&trees);
        assert_eq!(real.len(), 12);
        let real_min = minimal_trajectory_selection(&real);
        assert!(real_min.len() <= 4);
        assert_eq!(constraint_union(&real_min), constraint_union(&real));
        assert_eq!(exhaustive_min_cover(&real, DEFAULT_EXHAUSTIVE_BOUND).unwrap().len(), 3);
        format!("12 enumerated, {} selected, oracle 3, 7/7 constraints", minimal.len())
    });
}

fn mean_time(reps: u32, mut f: impl FnMut()) -> Duration {
    let start = Instant::now();
    for _ in 0..reps {
        f();
    }
    start.elapsed() / reps
}

#[test]
fn criterion_02_selection_efficiency() {
    criterion(2, "selection efficiency", Duration::from_secs(10), || {
        // Work is linear: one visit per trajectory plus at most two per candidate.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let sizes: Vec<usize> = (0..rng.random_range(1..=5)).map(|_| rng.random_range(1..=5)).collect();
            let full = all(&sizes);
            let stats = minimal_trajectory_selection_with_stats(&full).stats;
            assert_eq!(stats.main_loop_visits, full.len());
            assert!(stats.candidate_visits <= 2 * full.len());
        }

        let twelve = all(&[3, 2, 2]);
        let greedy = mean_time(2000, || {
            std::hint::black_box(minimal_trajectory_selection(std::hint::black_box(&twelve)));
        });
        let exhaustive = mean_time(50, || {
            std::hint::black_box(exhaustive_min_cover(std::hint::black_box(&twelve), DEFAULT_EXHAUSTIVE_BOUND).unwrap());
        });
        let ratio = exhaustive.as_secs_f64() / greedy.as_secs_f64();
        assert!(ratio >= 10.0, "only {ratio:.1}x faster ({greedy:?} vs {exhaustive:?})");

        let big = all(&[10, 10, 10, 10]);
        assert_eq!(big.len(), 10_000);
        let start = Instant::now();
        let picked = minimal_trajectory_selection(&big);
        let large = start.elapsed();
        assert!(large < Duration::from_secs(1), "10k trajectories took {large:?}");
        assert_eq!(constraint_union(&picked), constraint_union(&big));
        format!("|T|=12: {greedy:.2?} vs {exhaustive:.2?} ({ratio:.0}x); |T|=10000: {large:.2?}")
    });
}

#[test]
fn criterion_03_coverage_preservation() {
    criterion(3, "coverage preservation", Duration::from_secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst_gap = 0usize;
        let mut checked_oracle = 0;
        for _ in 0..200 {
            let sizes: Vec<usize> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(1..=4)).collect();
            let full = all(&sizes);
            let minimal = minimal_trajectory_selection(&full);
            assert_eq!(constraint_union(&minimal), constraint_union(&full), "{sizes:?}");
            // A full product needs one trajectory per path of its largest subtask.
            let optimum = *sizes.iter().max().unwrap();
            if full.len() <= DEFAULT_EXHAUSTIVE_BOUND {
                assert_eq!(exhaustive_min_cover(&full, DEFAULT_EXHAUSTIVE_BOUND).unwrap().len(), optimum);
                checked_oracle += 1;
            }
            assert!(minimal.len() <= optimum + 2, "{sizes:?}: {} selected, optimum {optimum}", minimal.len());
            worst_gap = worst_gap.max(minimal.len() - optimum);
        }
        format!("200 instances, worst gap over optimum {worst_gap}, exhaustive cross-checked on {checked_oracle}")
    });
}

const ASSET_SIZES: &[(&str, &str, [f64; 3])] = &[
    ("armchair", "an upholstered armchair", [0.9, 0.9, 0.85]),
    ("lamp", "a tall floor lamp", [0.4, 1.6, 0.4]),
    ("plant", "a potted plant", [0.4, 0.9, 0.4]),
    ("shelf", "a narrow wooden bookshelf", [0.9, 1.8, 0.35]),
    ("red_box", "a red plastic toy storage box", [0.6, 0.4, 0.4]),
    ("mop", "a wet floor mop with a long handle", [0.3, 1.3, 0.3]),
];

const SMALL: &[(&str, &str)] = &[("vase", "a ceramic vase"), ("book", "a hardcover book"), ("wipes", "a pack of wet wipes")];

/// A random living-room scene. Task relations are drawn from a feasible
/// pattern; enrichment relations are arbitrary and may need relaxing.
fn random_scene(rng: &mut ChaCha8Rng) -> SceneScript {
    let width = rng.random_range(40..=60) as f64 / 10.0;
    let depth = rng.random_range(35..=50) as f64 / 10.0;
    let floor_plan = json!({
        "rooms": [rectangle_room("living_room", width, depth)],
        "doorways": [{"id": "door", "width": 0.9, "height": 2.1, "state": "closed",
                      "connects": ["living_room", "exterior"], "wall": "south"}],
        "windows": [{"id": "window", "room": "living_room", "orientation": "north", "state": "closed",
                     "width": 1.0, "height": 1.0, "sill_height": 0.9}]
    });
    let object = |id: &str, description: &str, category: &str, mass: &str| {
        json!({"id": id, "description": description, "room": "living_room", "category": category, "mass_category": mass})
    };
    let category = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { "task_related" } else { "enrichment" };
    let mut objects = vec![
        object("sofa", "a three-seat grey fabric sofa", "task_related", "heavy_freestanding"),
        object("table", "a low rectangular wooden coffee table", "task_related", "heavy_freestanding"),
    ];
    let mut relations = vec![
        json!({"kind": "edge", "subject": "sofa"}),
        json!({"kind": "in_front_of", "subject": "table", "reference": "sofa"}),
    ];
    let mut side_used = false;
    for (id, description, _) in ASSET_SIZES {
        if !rng.random_bool(0.6) {
            continue;
        }
        let cat = category(rng);
        objects.push(object(id, description, cat, "light"));
        let relation = if cat == "task_related" {
            match rng.random_range(0..3) {
                0 => json!({"kind": "near", "subject": id, "reference": "table"}),
                1 if !side_used => {
                    side_used = true;
                    json!({"kind": "side_of", "subject": id, "reference": "sofa"})
                }
                _ => json!({"kind": "edge", "subject": id}),
            }
        } else {
            let kinds = ["near", "far", "side_of", "in_front_of", "center_aligned", "face_to", "edge", "center"];
            let kind = kinds[rng.random_range(0..kinds.len())];
            let reference = ["sofa", "table"][rng.random_range(0..2)];
            match kind {
                "edge" | "center" => json!({"kind": kind, "subject": id}),
                _ => json!({"kind": kind, "subject": id, "reference": reference}),
            }
        };
        relations.push(relation);
    }
    for (id, description) in SMALL.iter().take(rng.random_range(0..=2)) {
        objects.push(object(id, description, category(rng), "light"));
        relations.push(json!({"kind": "on_top_of", "subject": id, "reference": "table"}));
    }
    if rng.random_bool(0.5) {
        objects.push(object("painting", "a framed landscape painting", "enrichment", "wall_mountable"));
        relations.push(json!({"kind": "mounted_on_wall", "subject": "painting"}));
    }
    SceneScript { floor_plan, objects: json!({"objects": objects}), relations: json!({"relations": relations}) }
}

#[test]
fn criterion_04_solver_soundness() {
    criterion(4, "physics pass rate of built scenes", Duration::from_secs(120), || {
        let (_, _, fixture_envs) = minimal_environments();
        let bundle = bundle();
        let catalog = catalog();
        let solver = SolverConfig::default();
        let ctx = SceneContext {
            task: &bundle.task,
            schema: &bundle.schema,
            catalog: &catalog,
            solver: &solver,
            refine_rounds: DEFAULT_REFINE_ROUNDS,
        };
        let trajectory = LogicalTrajectory::new(vec![DecisionPath::new("scene", vec![], "arrange")]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut envs = fixture_envs;
        let mut relaxed = 0;
        for i in 0..50 {
            let mut script = random_scene(&mut rng);
            let env = build_environment(&mut script, &ctx, &trajectory, &format!("random_{i:02}"))
                .unwrap_or_else(|e| panic!("random scene {i}: {e}"));
            relaxed += env.relaxed.len();
            envs.push(env);
        }
        for env in &envs {
            let report = check_all(env, &solver.thresholds);
            assert!(report.floor_plan.passed, "{}: {:?}", env.id, report.floor_plan.violations);
            assert!(report.entity.passed, "{}: {:?}", env.id, report.entity.violations);
            assert!(report.relation.passed, "{}: {:?}", env.id, report.relation.violations);
        }
        format!("{} environments at 100/100/100 ({relaxed} enrichment relations relaxed)", envs.len())
    });
}

/// Grid centers where an interval of `extent` fits in `[lo, hi]`, flush with
/// both ends.
fn centers(lo: f64, hi: f64, extent: f64, step: f64) -> Vec<f64> {
    let (first, last) = (lo + extent / 2.0, hi - extent / 2.0);
    if last < first - 1e-9 {
        return Vec::new();
    }
    let mut out: Vec<f64> = (0..).map(|k| first + k as f64 * step).take_while(|c| *c <= last + 1e-9).collect();
    if (out.last().unwrap() - last).abs() > 1e-9 {
        out.push(last);
    }
    out
}

struct Instance {
    room: Room,
    objects: Vec<ObjectSpec>,
    relations: Vec<SpatialRelation>,
    step: f64,
}

impl Instance {
    fn env(&self, placements: Vec<Placement>) -> EnvironmentSpec {
        let mut env = EnvironmentSpec::new("grid", "grid", FloorPlan { rooms: vec![self.room.clone()], ..Default::default() });
        env.objects = self.objects.clone();
        env.relations = self.relations.clone();
        env.placements = placements;
        env
    }

    fn parent(&self, id: &str) -> Option<usize> {
        let r = self.relations.iter().find(|r| r.subject == id && r.kind == RelationKind::OnTopOf)?;
        self.objects.iter().position(|o| Some(&o.id) == r.reference.as_ref())
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let step = if rng.random_bool(0.5) { 0.25 } else { 0.5 };
    let width = rng.random_range(4..=8) as f64 * 0.25;
    let depth = rng.random_range(4..=8) as f64 * 0.25;
    let count = rng.random_range(1..=3);
    let size = |rng: &mut ChaCha8Rng| rng.random_range(5..=18) as f64 * 0.05;
    let objects: Vec<ObjectSpec> = (0..count)
        .map(|i| ObjectSpec {
            id: format!("o{i}"),
            description: String::new(),
            room: "room".into(),
            size: [size(rng), size(rng) / 2.0, size(rng)],
            category: ObjectCategory::TaskRelated,
            mass_category: MassCategory::Light,
            asset_id: None,
            attributes: Default::default(),
        })
        .collect();
    let kinds = [
        RelationKind::Near,
        RelationKind::Far,
        RelationKind::Edge,
        RelationKind::Center,
        RelationKind::SideOf,
        RelationKind::InFrontOf,
        RelationKind::CenterAligned,
        RelationKind::FaceTo,
        RelationKind::OnTopOf,
    ];
    let mut relations = Vec::new();
    let mut supported = BTreeSet::new();
    for r in 0..rng.random_range(0..=3) {
        let kind = kinds[rng.random_range(0..kinds.len())];
        let subject = rng.random_range(0..count);
        let reference = if kind.needs_object_reference() {
            if count < 2 {
                continue;
            }
            let mut other = rng.random_range(0..count - 1);
            if other >= subject {
                other += 1;
            }
            Some(other)
        } else {
            None
        };
        if kind == RelationKind::OnTopOf {
            // Only floor objects carry others, one level deep.
            let reference = reference.unwrap();
            if !supported.insert(subject) || supported.contains(&reference) || relations.iter().any(|r: &SpatialRelation| {
                r.kind == RelationKind::OnTopOf && r.reference.as_deref() == Some(&objects[subject].id)
            }) {
                continue;
            }
        }
        relations.push(SpatialRelation {
            id: format!("r{r}"),
            kind,
            subject: objects[subject].id.clone(),
            reference: reference.map(|i| objects[i].id.clone()),
            priority: Priority::Task,
        });
    }
    Instance { room: Room::rectangle("room", [0.0, 0.0], [width, depth]), objects, relations, step }
}

/// Every grid pose of every object, checked incrementally with the same
/// geometric tests the validator applies; a full assignment is accepted only
/// if the validator passes it.
fn brute_force(instance: &Instance, thresholds: &envgen::layout::Thresholds) -> Option<Vec<Placement>> {
    let room = instance.room.rect();
    let order: Vec<usize> = {
        // Supports before what they carry.
        let mut o: Vec<usize> = (0..instance.objects.len()).collect();
        o.sort_by_key(|&i| instance.parent(&instance.objects[i].id).is_some());
        o
    };
    let poses: Vec<Vec<Placement>> = instance
        .objects
        .iter()
        .map(|object| {
            let y = instance.parent(&object.id).map_or(0.0, |p| instance.objects[p].size[1]);
            let mut out = Vec::new();
            for dir in Cardinal::ALL {
                let (ex, ez) = footprint_extents(object.size, dir);
                for x in centers(room.min_x, room.max_x, ex, instance.step) {
                    for z in centers(room.min_z, room.max_z, ez, instance.step) {
                        out.push(Placement { object: object.id.clone(), position: [x, y, z], direction: dir });
                    }
                }
            }
            out
        })
        .collect();
    let body = |p: &Placement, size: [f64; 3]| Body { aabb: Aabb::from_placement(size, p.position, p.direction), dir: p.direction };
    let index = |id: &str| instance.objects.iter().position(|o| o.id == id).unwrap();
    let mut chosen: Vec<Option<Placement>> = vec![None; instance.objects.len()];

    fn go(
        depth: usize,
        order: &[usize],
        poses: &[Vec<Placement>],
        chosen: &mut Vec<Option<Placement>>,
        consistent: &dyn Fn(&[Option<Placement>]) -> bool,
        accept: &dyn Fn(&[Option<Placement>]) -> bool,
    ) -> bool {
        if depth == order.len() {
            return accept(chosen);
        }
        let i = order[depth];
        for pose in &poses[i] {
            chosen[i] = Some(pose.clone());
            if consistent(chosen) && go(depth + 1, order, poses, chosen, consistent, accept) {
                return true;
            }
        }
        chosen[i] = None;
        false
    }

    let consistent = |chosen: &[Option<Placement>]| -> bool {
        let placed: Vec<(usize, Body)> =
            chosen.iter().enumerate().filter_map(|(i, p)| Some((i, body(p.as_ref()?, instance.objects[i].size)))).collect();
        for (a, (_, ba)) in placed.iter().enumerate() {
            for (_, bb) in &placed[a + 1..] {
                if ba.aabb.interiors_intersect(&bb.aabb) {
                    return false;
                }
            }
        }
        instance.relations.iter().all(|r| {
            let Some(subject) = chosen[index(&r.subject)].as_ref() else { return true };
            let subject = body(subject, instance.objects[index(&r.subject)].size);
            let target = match &r.reference {
                Some(id) => match chosen[index(id)].as_ref() {
                    Some(p) => Target::Object(body(p, instance.objects[index(id)].size)),
                    None => return true,
                },
                None => Target::Room(room),
            };
            relation_holds(r.kind, &subject, &target, thresholds)
        })
    };
    let accept = |chosen: &[Option<Placement>]| -> bool {
        let env = instance.env(chosen.iter().map(|p| p.clone().unwrap()).collect());
        check_entities(&env, thresholds).passed && check_relations(&env, thresholds).passed
    };
    go(0, &order, &poses, &mut chosen, &consistent, &accept).then(|| chosen.into_iter().map(Option::unwrap).collect())
}

#[test]
fn criterion_05_solver_completeness() {
    criterion(5, "solver completeness on coarse grids", Duration::from_secs(120), || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut sat, mut unsat) = (0, 0);
        for n in 0..20 {
            let instance = random_instance(&mut rng);
            let config = SolverConfig { grid_resolution: instance.step, ..SolverConfig::default() };
            let problem = encode(&FloorPlan { rooms: vec![instance.room.clone()], ..Default::default() }, &instance.objects, &instance.relations, &config);
            let Ok(problem) = problem else {
                panic!("instance {n} does not encode: {:?}", problem.err());
            };
            let oracle = brute_force(&instance, &config.thresholds);
            match solve(&problem, &config) {
                Ok(solution) => {
                    assert!(oracle.is_some(), "instance {n}: solver found a layout the enumeration did not");
                    let placements = instance
                        .objects
                        .iter()
                        .map(|o| Placement {
                            object: o.id.clone(),
                            position: solution.position(&o.id).unwrap(),
                            direction: solution.direction(&o.id).unwrap(),
                        })
                        .collect();
                    let env = instance.env(placements);
                    assert!(check_entities(&env, &config.thresholds).passed, "instance {n}");
                    assert!(check_relations(&env, &config.thresholds).passed, "instance {n}");
                    sat += 1;
                }
                Err(SolveError::Unsat) => {
                    assert!(oracle.is_none(), "instance {n}: solver said unsat but {:?} works", oracle);
                    unsat += 1;
                }
                Err(other) => panic!("instance {n}: {other}"),
            }
        }
        assert!(sat > 0 && unsat > 0, "instances are one-sided: {sat} sat, {unsat} unsat");
        format!("20 instances agree with grid enumeration ({sat} sat, {unsat} unsat)")
    });
}

#[test]
fn criterion_06_validator_sensitivity() {
    criterion(6, "validator sensitivity", Duration::from_secs(10), || {
        let (_, _, envs) = minimal_environments();
        let base = envs[0].clone();
        let t = SolverConfig::default().thresholds;
        let flags = |env: &EnvironmentSpec| {
            let r = check_all(env, &t);
            [r.floor_plan.passed, r.entity.passed, r.relation.passed]
        };
        assert_eq!(flags(&base), [true, true, true]);
        let room = base.floor_plan.rooms[0].rect();
        let filler = |id: &str, position: [f64; 3], size: [f64; 3]| {
            let object = ObjectSpec {
                id: id.into(),
                description: String::new(),
                room: base.floor_plan.rooms[0].id.clone(),
                size,
                category: ObjectCategory::Enrichment,
                mass_category: MassCategory::Light,
                asset_id: None,
                attributes: Default::default(),
            };
            (object, Placement { object: id.into(), position, direction: Cardinal::North })
        };

        let mut overlap = base.clone();
        let mut extra = overlap.floor_plan.rooms[0].clone();
        extra.id = "annex".into();
        extra.vertices = Room::rectangle("annex", [room.max_x - 1.0, room.min_z], [room.max_x + 2.0, room.min_z + 2.0]).vertices;
        overlap.floor_plan.rooms.push(extra);

        let mut floating = base.clone();
        let (o, p) = filler("balloon", [room.center().0, 2.5, room.center().1], [0.1, 0.1, 0.1]);
        floating.objects.push(o);
        floating.placements.push(p);

        let mut collision = base.clone();
        let sofa = base.placement("sofa").unwrap().clone();
        let (o, p) = filler("crate", [sofa.position[0], 0.0, sofa.position[2]], [0.4, 0.4, 0.4]);
        collision.objects.push(o);
        collision.placements.push(p);

        let mut broken = base.clone();
        broken.relations.push(SpatialRelation {
            id: "impossible".into(),
            kind: RelationKind::Far,
            subject: "table".into(),
            reference: Some("sofa".into()),
            priority: Priority::Task,
        });

        assert_eq!(flags(&overlap), [false, true, true], "room overlap");
        assert!(check_all(&overlap, &t).floor_plan.has("room_non_overlap"));
        assert_eq!(flags(&floating), [true, false, true], "floating object");
        assert!(check_all(&floating, &t).entity.has("floating"));
        assert_eq!(flags(&collision), [true, false, true], "collision");
        assert!(check_all(&collision, &t).entity.has("collision"));
        assert_eq!(flags(&broken), [true, true, false], "violated relation");
        "room overlap, floating object, collision and broken relation each flip only their dimension".to_string()
    });
}

fn present(env: &EnvironmentSpec, entity: &str) -> bool {
    env.metadata.value(entity, "presence") == "present"
}

#[test]
fn criterion_07_logic_coverage() {
    criterion(7, "logic coverage", Duration::from_secs(60), || {
        let (_, _, envs) = minimal_environments();
        let bundle = bundle();
        let ground_truth = &bundle.ground_truth;
        assert_eq!(logic_coverage(&envs, ground_truth, &bundle.schema).unwrap(), 1.0);
        let without_doll: Vec<EnvironmentSpec> =
            envs.iter().filter(|e| e.metadata.value("toy", "toy_type") != "doll").cloned().collect();
        assert_eq!(without_doll.len(), envs.len() - 1);
        let detail = logic_coverage_detail(&without_doll, ground_truth, &bundle.schema).unwrap();
        assert_eq!((detail.covered, detail.total), (6, 7));
        assert_eq!(detail.value, 6.0 / 7.0);
        assert_eq!(detail.uncovered.len(), 1);
        assert!(detail.uncovered[0].contains("doll"));
        format!("{} environments cover 7/7 paths; without the doll one 6/7", envs.len())
    });
}

#[test]
fn criterion_08_fault_detection() {
    criterion(8, "end-to-end fault detection", Duration::from_secs(60), || {
        let (_, _, envs) = minimal_environments();
        let fx = SimFixture::load();
        let task = fx.task();
        let correct = fx.policies.iter().find(|p| p.label == PolicyLabel::Correct).unwrap();
        let validity = scenario_validity(correct, &envs, &task, DEFAULT_BUDGET).unwrap();
        assert_eq!(validity.rate, 100.0, "{:?}", validity.invalid);

        let faulty: Vec<_> = fx.policies.iter().filter(|p| p.label != PolicyLabel::Correct).cloned().collect();
        assert_eq!(faulty.len(), 3);
        let faults = fault_detection_rate(&faulty, &envs, &task, DEFAULT_BUDGET).unwrap();
        assert_eq!(faults.average, Some(100.0));
        let verdicts: BTreeMap<PolicyLabel, Vec<&'static str>> = faults
            .policies
            .iter()
            .map(|p| (p.label, p.outcomes.iter().map(|o| o.verdict.name()).collect()))
            .collect();
        let counter = &verdicts[&PolicyLabel::Counterfactuals];
        assert!(counter.contains(&"causal_violation"), "{counter:?}");
        let unreachable = &verdicts[&PolicyLabel::Unreachable];
        assert!(unreachable.contains(&"goal_unreached") && !unreachable.contains(&"causal_violation"), "{unreachable:?}");
        let lack = &verdicts[&PolicyLabel::Lackbranch];
        assert!(lack.contains(&"pass") && lack.contains(&"goal_unreached"), "{lack:?}");

        let wipes_only: Vec<EnvironmentSpec> = envs.iter().filter(|e| present(e, "wet_wipes")).cloned().collect();
        assert!(!wipes_only.is_empty() && wipes_only.len() < envs.len());
        let lackbranch = fx.policies.iter().find(|p| p.label == PolicyLabel::Lackbranch).unwrap();
        for env in &wipes_only {
            let outcome = run(lackbranch, env, &task, DEFAULT_BUDGET).unwrap();
            assert_eq!(outcome.verdict, Verdict::Pass, "{}", env.id);
        }
        let narrow = fault_detection_rate(std::slice::from_ref(lackbranch), &wipes_only, &task, DEFAULT_BUDGET).unwrap();
        assert!(!narrow.policies[0].detected);
        format!(
            "scene validity 100%, detection 3/3 (counterfactuals {counter:?}, unreachable {unreachable:?}, lackbranch {lack:?}); \
             lackbranch undetected on {} wipes-only envs",
            wipes_only.len()
        )
    });
}

#[test]
fn criterion_09_relaxation_contract() {
    criterion(9, "relaxation contract", Duration::from_secs(30), || {
        let text = std::fs::read_to_string(fixtures().join("overconstrained_scene.json")).unwrap();
        let scene: EnvironmentSpec = serde_json::from_str(&text).unwrap();
        let config = SolverConfig::default();
        let problem = encode(&scene.floor_plan, &scene.objects, &scene.relations, &config).unwrap();
        assert_eq!(solve(&problem, &config).unwrap_err(), SolveError::Unsat, "fixture must be over-constrained");

        let policy = relax_policy(&scene.relations);
        let mut env = scene.clone();
        arrange(&mut env, &config).unwrap();
        let relaxed: Vec<String> = env.relaxed.iter().map(|id| format!("rel:{id}")).collect();
        assert!(!relaxed.is_empty());
        assert_eq!(relaxed[..], policy[..relaxed.len()], "relaxed ids must be a prefix of the policy");
        for id in &env.relaxed {
            let relation = env.relations.iter().find(|r| &r.id == id).unwrap();
            assert_eq!(relation.priority, Priority::Enrichment);
            assert_ne!(relation.kind.group(), envgen::environment::RelationGroup::Contact);
        }
        env.metadata = envgen::environment::rebuild_metadata(&env).unwrap();
        let report = check_all(&env, &config.thresholds);
        assert!(report.passed, "{report:?}");
        for relation in env.relations.iter().filter(|r| r.priority == Priority::Task) {
            assert!(!env.is_relaxed(&relation.id));
            assert!(!report.relation.skipped.contains(&relation.id));
        }
        format!("relaxed {:?} of policy {:?}; task relations intact", env.relaxed, policy)
    });
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_10_reproducibility() {
    criterion(10, "reproducible runs", Duration::from_secs(300), || {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let out = tempfile::tempdir().unwrap();
                let config = RunConfig::new(
                    task_file(),
                    ProviderMode::Replay { cassette: cassette_file() },
                    fixture_dir().join("catalog.json"),
                    out.path().to_path_buf(),
                );
                cmd_run_all(config).unwrap();
                out
            })
            .collect();
        let (a, b) = (files(runs[0].path()), files(runs[1].path()));
        assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
        for (name, bytes) in &a {
            if name == "manifest.json" {
                continue;
            }
            assert!(bytes == &b[name], "{name} differs between runs");
        }
        let (ma, mb) = (stable_manifest(runs[0].path()).unwrap(), stable_manifest(runs[1].path()).unwrap());
        assert_eq!(ma, mb);
        let full: Value = serde_json::from_slice(&a["manifest.json"]).unwrap();
        assert!(full.get("volatile").is_some());
        for dir in ["plans/", "trajectories/", "environments/", "reports/"] {
            assert!(a.keys().any(|k| k.starts_with(dir)), "no {dir} artifacts");
        }
        format!("{} files identical, manifest equal outside its volatile section", a.len())
    });
}
