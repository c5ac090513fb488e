//! Physical plausibility checks over finished environments, in three
//! dimensions: floor plan, entities and relations. The checks read only the
//! environment document; relation meaning comes from the shared semantics
//! table, everything else is computed here.

use serde::{Deserialize, Serialize};

use crate::environment::{parse_wall_id, EnvironmentSpec, MassCategory, RelationKind, EXTERIOR};
use crate::geometry::{Aabb, Cardinal, Rect, CONTACT_EPS, EPS};
use crate::layout::semantics::{relation_holds, Body, Target, Thresholds};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PhysicsError {
    #[error("no environments to assess")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicsViolation {
    pub code: String,
    pub entity: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub passed: bool,
    pub violations: Vec<PhysicsViolation>,
    /// Relations not checked because they were relaxed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

impl DimensionReport {
    fn push(&mut self, code: &str, entity: &str, message: impl Into<String>) {
        self.violations.push(PhysicsViolation { code: code.into(), entity: entity.into(), message: message.into() });
    }

    fn finish(mut self) -> Self {
        self.passed = self.violations.is_empty();
        self
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicsReport {
    pub environment: String,
    pub floor_plan: DimensionReport,
    pub entity: DimensionReport,
    pub relation: DimensionReport,
    pub passed: bool,
}

/// Percentages of environments passing each dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsPassRate {
    pub floor_plan: f64,
    pub entity: f64,
    pub relation: f64,
    pub average: f64,
}

fn on_wall(room: &Rect, side: Cardinal, point: [f64; 3], width: f64) -> bool {
    let (along, across) = match side {
        Cardinal::North | Cardinal::South => (point[0], point[2]),
        Cardinal::East | Cardinal::West => (point[2], point[0]),
    };
    let (lo, hi) = room.wall_span(side);
    (across - room.wall_coord(side)).abs() <= EPS && along - width / 2.0 >= lo - EPS && along + width / 2.0 <= hi + EPS
}

pub fn check_floor_plan(env: &EnvironmentSpec) -> DimensionReport {
    let mut report = DimensionReport::default();
    let plan = &env.floor_plan;
    for (i, a) in plan.rooms.iter().enumerate() {
        for b in &plan.rooms[i + 1..] {
            if a.rect().intersection_area(&b.rect()) > EPS {
                report.push("room_non_overlap", &format!("{}|{}", a.id, b.id), "rooms overlap");
            }
        }
    }
    for door in &plan.doorways {
        let Some(position) = door.position else {
            report.push("door_unplaced", &door.id, "door has no position");
            continue;
        };
        if position[1].abs() > CONTACT_EPS {
            report.push("door_on_floor", &door.id, format!("door bottom at {:.3} m", position[1]));
        }
        let rooms: Vec<_> = door.connects.iter().filter(|c| *c != EXTERIOR).filter_map(|c| plan.room(c)).collect();
        let sides = door.wall.map(|w| vec![w]).unwrap_or_else(|| Cardinal::ALL.to_vec());
        let on_separating_wall = match rooms.as_slice() {
            [room] => sides.iter().any(|&s| on_wall(&room.rect(), s, position, door.width)),
            [a, b] => sides.iter().any(|&s| {
                on_wall(&a.rect(), s, position, door.width) && on_wall(&b.rect(), s.opposite(), position, door.width)
            }),
            _ => false,
        };
        if !on_separating_wall {
            report.push("door_on_wall", &door.id, "door is not on the wall separating the rooms it connects");
        }
        if rooms.iter().any(|r| door.height > r.height + EPS) {
            report.push("door_on_wall", &door.id, "door is taller than the wall");
        }
    }
    for window in &plan.windows {
        let Some(room) = plan.room(&window.room) else {
            report.push("window_in_wall", &window.id, format!("unknown room `{}`", window.room));
            continue;
        };
        let Some(position) = window.position else {
            report.push("window_unplaced", &window.id, "window has no position");
            continue;
        };
        if window.sill_height <= 0.0 || position[1] <= 0.0 {
            report.push("window_above_floor", &window.id, "window must sit above the floor");
        }
        let fits_height = position[1] + window.height <= room.height + EPS;
        if !on_wall(&room.rect(), window.orientation, position, window.width) || !fits_height {
            report.push("window_in_wall", &window.id, "window is not embedded in its wall");
        }
    }
    report.finish()
}

fn contained_pairs(env: &EnvironmentSpec) -> Vec<(&str, &str)> {
    env.relations
        .iter()
        .filter(|r| r.kind == RelationKind::In && !env.is_relaxed(&r.id))
        .filter_map(|r| Some((r.subject.as_str(), r.reference.as_deref()?)))
        .collect()
}

fn supported(env: &EnvironmentSpec, id: &str, b: &Aabb, min_overlap: f64) -> bool {
    if b.bottom().abs() <= CONTACT_EPS {
        return true;
    }
    let fp = b.footprint();
    let others = env.objects.iter().filter(|o| o.id != id).filter_map(|o| env.object_box(&o.id));
    for other in others {
        let ofp = other.footprint();
        let on_top = (b.bottom() - other.top()).abs() <= CONTACT_EPS && fp.intersection_area(&ofp) >= min_overlap * fp.area() - EPS;
        let inside = ofp.contains_rect(&fp, EPS) && (b.bottom() - other.bottom()).abs() <= CONTACT_EPS;
        if on_top || inside {
            return true;
        }
    }
    let object = env.object(id).expect("known object");
    if object.mass_category != MassCategory::WallMountable {
        return false;
    }
    let (Some(room), Some(placement)) = (env.floor_plan.room(&object.room), env.placement(id)) else {
        return false;
    };
    let room = room.rect();
    let back = placement.direction.opposite();
    let back_face = match back {
        Cardinal::North => fp.max_z,
        Cardinal::South => fp.min_z,
        Cardinal::East => fp.max_x,
        Cardinal::West => fp.min_x,
    };
    (back_face - room.wall_coord(back)).abs() <= CONTACT_EPS
}

pub fn check_entities(env: &EnvironmentSpec, thresholds: &Thresholds) -> DimensionReport {
    let mut report = DimensionReport::default();
    let exempt = contained_pairs(env);
    let mut boxes = Vec::new();
    for object in &env.objects {
        let Some(b) = env.object_box(&object.id) else {
            report.push("missing_placement", &object.id, "object has no placement");
            continue;
        };
        if !supported(env, &object.id, &b, thresholds.min_support_overlap) {
            report.push("floating", &object.id, format!("nothing supports the object at {:.3} m", b.bottom()));
        }
        match env.floor_plan.room(&object.room) {
            Some(room) if room.rect().contains_rect(&b.footprint(), EPS) && b.top() <= room.height + EPS && b.bottom() >= -EPS => {}
            _ => report.push("outside_room", &object.id, format!("object leaves room `{}`", object.room)),
        }
        boxes.push((object.id.as_str(), b));
    }
    for (i, (a, ab)) in boxes.iter().enumerate() {
        for (b, bb) in &boxes[i + 1..] {
            let linked = exempt.iter().any(|&(s, r)| (s == *a && r == *b) || (s == *b && r == *a));
            if !linked && ab.interiors_intersect(bb) {
                report.push("collision", &format!("{a}|{b}"), "bounding boxes intersect");
            }
        }
    }
    report.finish()
}

pub fn check_relations(env: &EnvironmentSpec, thresholds: &Thresholds) -> DimensionReport {
    let mut report = DimensionReport::default();
    let body = |id: &str| -> Option<Body> {
        Some(Body { aabb: env.object_box(id)?, dir: env.placement(id)?.direction })
    };
    for relation in &env.relations {
        if env.is_relaxed(&relation.id) {
            report.skipped.push(relation.id.clone());
            continue;
        }
        let Some(subject) = body(&relation.subject) else {
            report.push("relation", &relation.id, format!("subject `{}` is not placed", relation.subject));
            continue;
        };
        let target = match relation.reference.as_deref() {
            Some(r) if relation.kind.needs_object_reference() => body(r).map(Target::Object),
            Some(r) => match (env.floor_plan.room(r), parse_wall_id(r)) {
                (Some(room), _) => Some(Target::Room(room.rect())),
                (None, Some((room, side))) => env.floor_plan.room(room).map(|room| Target::Wall(room.rect(), side)),
                _ => None,
            },
            None if relation.kind.needs_object_reference() => None,
            None => env.object(&relation.subject).and_then(|o| env.floor_plan.room(&o.room)).map(|r| Target::Room(r.rect())),
        };
        let Some(target) = target else {
            report.push("relation", &relation.id, "reference cannot be resolved");
            continue;
        };
        if !relation_holds(relation.kind, &subject, &target, thresholds) {
            report.push(
                "relation",
                &relation.id,
                format!("{} {:?} {} does not hold", relation.subject, relation.kind, relation.reference.as_deref().unwrap_or("room")),
            );
        }
    }
    report.finish()
}

pub fn check_all(env: &EnvironmentSpec, thresholds: &Thresholds) -> PhysicsReport {
    let floor_plan = check_floor_plan(env);
    let entity = check_entities(env, thresholds);
    let relation = check_relations(env, thresholds);
    let passed = floor_plan.passed && entity.passed && relation.passed;
    PhysicsReport { environment: env.id.clone(), floor_plan, entity, relation, passed }
}

pub fn pass_rate(reports: &[PhysicsReport]) -> Result<PhysicsPassRate, PhysicsError> {
    if reports.is_empty() {
        return Err(PhysicsError::EmptyInput);
    }
    let pct = |f: fn(&PhysicsReport) -> bool| 100.0 * reports.iter().filter(|r| f(r)).count() as f64 / reports.len() as f64;
    let floor_plan = pct(|r| r.floor_plan.passed);
    let entity = pct(|r| r.entity.passed);
    let relation = pct(|r| r.relation.passed);
    Ok(PhysicsPassRate { floor_plan, entity, relation, average: (floor_plan + entity + relation) / 3.0 })
}

pub fn physics_pass_rate(envs: &[EnvironmentSpec], thresholds: &Thresholds) -> Result<PhysicsPassRate, PhysicsError> {
    let reports: Vec<PhysicsReport> = envs.iter().map(|e| check_all(e, thresholds)).collect();
    pass_rate(&reports)
}

/// Fixed-width text table of per-environment results.
pub fn render_table(reports: &[PhysicsReport]) -> String {
    let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
    let mut out = String::from("| environment | floor plan | entity | relation |\n|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            r.environment,
            mark(r.floor_plan.passed),
            mark(r.entity.passed),
            mark(r.relation.passed)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{
        Doorway, FloorPlan, ObjectCategory, ObjectSpec, OpenState, Placement, Priority, Room, SpatialRelation, Window,
    };

    fn object(id: &str, size: [f64; 3]) -> ObjectSpec {
        ObjectSpec {
            id: id.into(),
            description: id.into(),
            room: "a".into(),
            size,
            category: ObjectCategory::TaskRelated,
            mass_category: MassCategory::Light,
            asset_id: None,
            attributes: Default::default(),
        }
    }

    fn two_rooms() -> EnvironmentSpec {
        let mut plan = FloorPlan {
            rooms: vec![Room::rectangle("a", [0.0, 0.0], [4.0, 4.0]), Room::rectangle("b", [4.0, 0.0], [7.0, 4.0])],
            ..Default::default()
        };
        plan.doorways.push(Doorway {
            id: "door".into(),
            door_type: "hinged".into(),
            width: 0.9,
            height: 2.0,
            state: OpenState::Opened,
            connects: ["a".into(), "b".into()],
            wall: None,
            position: Some([4.0, 0.0, 2.0]),
        });
        plan.windows.push(Window {
            id: "window".into(),
            room: "a".into(),
            orientation: Cardinal::West,
            window_type: "sliding".into(),
            state: OpenState::Closed,
            width: 1.0,
            height: 1.0,
            sill_height: 0.9,
            position: Some([0.0, 0.9, 2.0]),
        });
        let mut env = EnvironmentSpec::new("env", "task", plan);
        env.objects = vec![object("table", [1.2, 0.45, 0.6]), object("cup", [0.1, 0.1, 0.1])];
        env.placements = vec![
            Placement { object: "table".into(), position: [2.0, 0.0, 2.0], direction: Cardinal::North },
            Placement { object: "cup".into(), position: [2.0, 0.455, 2.0], direction: Cardinal::North },
        ];
        env.relations.push(SpatialRelation {
            id: "r0".into(),
            kind: RelationKind::OnTopOf,
            subject: "cup".into(),
            reference: Some("table".into()),
            priority: Priority::Task,
        });
        env
    }

    #[test]
    fn canonical_plan_passes() {
        let report = check_all(&two_rooms(), &Thresholds::default());
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn overlapping_rooms() {
        let mut env = two_rooms();
        env.floor_plan.rooms[1] = Room::rectangle("b", [3.5, 0.0], [7.0, 4.0]);
        let r = check_floor_plan(&env);
        assert!(r.has("room_non_overlap"));
    }

    #[test]
    fn window_at_floor_level() {
        let mut env = two_rooms();
        env.floor_plan.windows[0].sill_height = 0.0;
        env.floor_plan.windows[0].position = Some([0.0, 0.0, 2.0]);
        let r = check_floor_plan(&env);
        assert!(r.has("window_above_floor"));
    }

    #[test]
    fn door_off_shared_wall() {
        let mut env = two_rooms();
        env.floor_plan.doorways[0].position = Some([0.0, 0.0, 2.0]);
        assert!(check_floor_plan(&env).has("door_on_wall"));
    }

    #[test]
    fn raised_object_floats() {
        let mut env = two_rooms();
        env.placements[0].position[1] += 0.5;
        let r = check_entities(&env, &Thresholds::default());
        assert!(r.has("floating"));
        assert_eq!(r.violations.iter().filter(|v| v.code == "floating").count(), 2);
    }

    #[test]
    fn overlapping_objects_collide() {
        let mut env = two_rooms();
        env.objects.push(object("chair", [0.5, 0.9, 0.5]));
        env.placements.push(Placement { object: "chair".into(), position: [2.5, 0.0, 2.0], direction: Cardinal::North });
        assert!(check_entities(&env, &Thresholds::default()).has("collision"));
    }

    #[test]
    fn relations_and_rates() {
        let env = two_rooms();
        let mut moved = env.clone();
        moved.placements[1].position = [0.5, 0.0, 0.5];
        assert!(!check_relations(&moved, &Thresholds::default()).passed);
        let mut relaxed = moved.clone();
        relaxed.relaxed.push("r0".into());
        assert_eq!(check_relations(&relaxed, &Thresholds::default()).skipped, vec!["r0"]);
        let mut floating = env.clone();
        floating.placements[0].position[1] = 0.5;
        floating.placements[1].position[1] = 0.955;
        let rate = physics_pass_rate(&[env, floating], &Thresholds::default()).unwrap();
        assert_eq!((rate.floor_plan, rate.entity, rate.relation), (100.0, 50.0, 100.0));
        assert_eq!(physics_pass_rate(&[], &Thresholds::default()), Err(PhysicsError::EmptyInput));
    }
}
