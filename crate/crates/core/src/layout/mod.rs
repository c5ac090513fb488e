//! Object arrangement as a discrete constraint satisfaction problem.
//!
//! Each object gets a position variable (grid points inside its room) and a
//! direction variable (four cardinals). The two are searched jointly as one
//! pose; the vertical coordinate is not searched but follows from what the
//! object rests on (floor, a supporting object, a container, or a wall).
//! Door and window positions are separate variables with their own domains.

pub mod semantics;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::environment::{
    parse_wall_id, Doorway, FloorPlan, ObjectSpec, Priority, RelationGroup, RelationKind, SpatialRelation, Window,
    EXTERIOR,
};
use crate::geometry::{footprint_extents, Aabb, Cardinal, Rect, EPS};
pub use semantics::{relation_holds, Body, Target, Thresholds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Grid spacing in meters for position domains.
    pub grid_resolution: f64,
    pub max_backtracks: u64,
    pub seed: u64,
    pub timeout_ms: u64,
    pub thresholds: Thresholds,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { grid_resolution: 0.05, max_backtracks: 200_000, seed: 0, timeout_ms: 20_000, thresholds: Thresholds::default() }
    }
}

impl SolverConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if !(self.grid_resolution.is_finite() && self.grid_resolution > 0.0) {
            return Err(LayoutError::InvalidConfig(format!("grid resolution must be positive, got {}", self.grid_resolution)));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LayoutError {
    #[error("cannot encode `{entity}`: {message}")]
    EncodingError { entity: String, message: String },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
}

fn encoding(entity: &str, message: impl Into<String>) -> LayoutError {
    LayoutError::EncodingError { entity: entity.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum SolveError {
    #[error("no assignment satisfies the constraints")]
    Unsat,
    /// The backtrack budget ran out before the search space was exhausted.
    #[error("backtrack budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("solver timed out")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelaxError {
    #[error("constraint `{0}` is not in the problem")]
    UnknownConstraint(String),
    #[error("constraint `{0}` may not be relaxed")]
    NotRelaxable(String),
    #[error("unsatisfiable after relaxing {relaxed:?}: {cause}")]
    CoreUnsat { relaxed: Vec<String>, cause: SolveError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    ObjectPosition,
    ObjectDirection,
    DoorPosition,
    WindowPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspVariable {
    pub id: String,
    pub entity: String,
    pub kind: VariableKind,
    pub domain_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "relation")]
pub enum ConstraintKind {
    Support,
    NonCollision,
    RoomContainment,
    Relation(RelationKind),
    DoorOnSharedWall,
    WindowInWallAboveFloor,
    RoomNonOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintPriority {
    Physical,
    Task,
    Enrichment,
}

/// Scopes list position variables. An object's position variable stands for
/// its joint pose, so an object's direction is implied wherever its position
/// appears.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspConstraint {
    pub id: String,
    pub kind: ConstraintKind,
    pub scope: Vec<String>,
    pub priority: ConstraintPriority,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_id: Option<String>,
}

impl CspConstraint {
    /// Only enrichment relations outside the contact group may be dropped.
    pub fn relaxable(&self) -> bool {
        match self.kind {
            ConstraintKind::Relation(kind) => {
                self.priority == ConstraintPriority::Enrichment && kind.group() != RelationGroup::Contact
            }
            _ => false,
        }
    }
}

pub fn relation_constraint_id(relation_id: &str) -> String {
    format!("rel:{relation_id}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pose {
    x: f64,
    z: f64,
    dir: Cardinal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Resting {
    Floor,
    /// On a wall while the given mounting constraint is active.
    Mounted(usize),
    OnTop(usize),
    Inside(usize),
}

#[derive(Debug, Clone, Copy)]
enum RelTarget {
    Object(usize),
    Room(usize),
    Wall(usize, Cardinal),
}

#[derive(Debug, Clone, Copy)]
enum Check {
    Contain(usize),
    Support(usize),
    Collide(usize, usize),
    Relation { kind: RelationKind, subject: usize, target: RelTarget },
    Door,
    Window,
    Rooms(usize, usize),
}

#[derive(Debug, Clone)]
struct RoomGeom {
    id: String,
    rect: Rect,
    height: f64,
}

#[derive(Debug, Clone)]
struct ObjectVar {
    id: String,
    size: [f64; 3],
    room: usize,
    resting: Resting,
    domain: Vec<Pose>,
}

#[derive(Debug, Clone)]
struct OpeningVar {
    id: String,
    domain: Vec<[f64; 3]>,
}

/// An encoded arrangement problem.
#[derive(Debug, Clone)]
pub struct CspProblem {
    pub variables: Vec<CspVariable>,
    pub constraints: Vec<CspConstraint>,
    checks: Vec<Check>,
    rooms: Vec<RoomGeom>,
    objects: Vec<ObjectVar>,
    doors: Vec<OpeningVar>,
    windows: Vec<OpeningVar>,
    thresholds: Thresholds,
}

/// Centers at which an interval of length `extent` fits inside `[lo, hi]`:
/// flush with `lo`, then every `step`, plus flush with `hi`.
pub fn grid_centers(lo: f64, hi: f64, extent: f64, step: f64) -> Vec<f64> {
    let first = lo + extent / 2.0;
    let last = hi - extent / 2.0;
    if last < first - EPS {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let c = first + f64::from(k) * step;
        if c > last + EPS {
            break;
        }
        out.push(c);
        k += 1;
    }
    if out.last().is_some_and(|c| (c - last).abs() > EPS) {
        out.push(last);
    }
    out
}

fn pose_domain(size: [f64; 3], room: &Rect, step: f64) -> Vec<Pose> {
    let mut out = Vec::new();
    for dir in Cardinal::ALL {
        let (ex, ez) = footprint_extents(size, dir);
        let xs = grid_centers(room.min_x, room.max_x, ex, step);
        let zs = grid_centers(room.min_z, room.max_z, ez, step);
        for &x in &xs {
            for &z in &zs {
                out.push(Pose { x, z, dir });
            }
        }
    }
    out
}

fn wall_point(room: &Rect, side: Cardinal, along: f64, y: f64) -> [f64; 3] {
    match side {
        Cardinal::North | Cardinal::South => [along, y, room.wall_coord(side)],
        Cardinal::East | Cardinal::West => [room.wall_coord(side), y, along],
    }
}

/// Segment of wall `side` of `a` that is also a wall of `b`.
pub fn shared_wall(a: &Rect, b: &Rect, side: Cardinal) -> Option<(f64, f64)> {
    if (a.wall_coord(side) - b.wall_coord(side.opposite())).abs() > EPS {
        return None;
    }
    let (alo, ahi) = a.wall_span(side);
    let (blo, bhi) = b.wall_span(side.opposite());
    let (lo, hi) = (alo.max(blo), ahi.min(bhi));
    (hi > lo + EPS).then_some((lo, hi))
}

fn door_domain(door: &Doorway, rooms: &[RoomGeom], step: f64) -> Vec<[f64; 3]> {
    let find = |id: &str| rooms.iter().find(|r| r.id == id);
    let mut out = Vec::new();
    let [a, b] = &door.connects;
    let (host, other) = if a == EXTERIOR { (b, a) } else { (a, b) };
    let Some(host) = find(host) else { return out };
    let sides: Vec<Cardinal> = door.wall.map(|w| vec![w]).unwrap_or_else(|| Cardinal::ALL.to_vec());
    for side in sides {
        let span = if other == EXTERIOR {
            Some(host.rect.wall_span(side))
        } else {
            match find(other) {
                Some(o) if door.height <= o.height + EPS => shared_wall(&host.rect, &o.rect, side),
                _ => None,
            }
        };
        let Some((lo, hi)) = span else { continue };
        if door.height > host.height + EPS {
            continue;
        }
        for c in grid_centers(lo, hi, door.width, step) {
            out.push(wall_point(&host.rect, side, c, 0.0));
        }
    }
    out
}

fn window_domain(window: &Window, room: &RoomGeom, step: f64) -> Vec<[f64; 3]> {
    if window.sill_height <= 0.0 || window.sill_height + window.height > room.height + EPS {
        return Vec::new();
    }
    let (lo, hi) = room.rect.wall_span(window.orientation);
    grid_centers(lo, hi, window.width, step)
        .into_iter()
        .map(|c| wall_point(&room.rect, window.orientation, c, window.sill_height))
        .collect()
}

/// Builds the problem: variables for every object pose and every door and
/// window position, physical constraints, and one constraint per relation.
pub fn encode(
    floor_plan: &FloorPlan,
    objects: &[ObjectSpec],
    relations: &[SpatialRelation],
    config: &SolverConfig,
) -> Result<CspProblem, LayoutError> {
    config.validate()?;
    let step = config.grid_resolution;
    let rooms: Vec<RoomGeom> =
        floor_plan.rooms.iter().map(|r| RoomGeom { id: r.id.clone(), rect: r.rect(), height: r.height }).collect();
    let room_index = |id: &str| rooms.iter().position(|r| r.id == id);
    let object_index = |id: &str| objects.iter().position(|o| o.id == id);

    let mut problem = CspProblem {
        variables: Vec::new(),
        constraints: Vec::new(),
        checks: Vec::new(),
        rooms: rooms.clone(),
        objects: Vec::new(),
        doors: Vec::new(),
        windows: Vec::new(),
        thresholds: config.thresholds,
    };
    let pos = |id: &str| format!("{id}.position");

    for (i, a) in rooms.iter().enumerate() {
        for b in &rooms[i + 1..] {
            let j = room_index(&b.id).expect("room exists");
            problem.push(
                format!("rooms:{}:{}", a.id, b.id),
                ConstraintKind::RoomNonOverlap,
                vec![],
                ConstraintPriority::Physical,
                None,
                Check::Rooms(i, j),
            );
        }
    }

    for object in objects {
        let room = room_index(&object.room).ok_or_else(|| encoding(&object.id, format!("unknown room `{}`", object.room)))?;
        let geom = &rooms[room];
        if !object.size.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(encoding(&object.id, "bounding box must be strictly positive"));
        }
        if object.size[1] > geom.height + EPS {
            return Err(encoding(&object.id, "object is taller than its room"));
        }
        let domain = pose_domain(object.size, &geom.rect, step);
        if domain.is_empty() {
            return Err(encoding(&object.id, format!("object does not fit inside room `{}`", geom.id)));
        }
        let positions: BTreeSet<(u64, u64)> = domain.iter().map(|p| (p.x.to_bits(), p.z.to_bits())).collect();
        let directions: BTreeSet<Cardinal> = domain.iter().map(|p| p.dir).collect();
        problem.variables.push(CspVariable {
            id: pos(&object.id),
            entity: object.id.clone(),
            kind: VariableKind::ObjectPosition,
            domain_size: positions.len(),
        });
        problem.variables.push(CspVariable {
            id: format!("{}.direction", object.id),
            entity: object.id.clone(),
            kind: VariableKind::ObjectDirection,
            domain_size: directions.len(),
        });
        problem.objects.push(ObjectVar { id: object.id.clone(), size: object.size, room, resting: Resting::Floor, domain });
    }

    // Relation constraints first so support can point at them.
    let mut relation_checks = Vec::new();
    for relation in relations {
        let subject = object_index(&relation.subject)
            .ok_or_else(|| encoding(&relation.id, format!("unknown subject `{}`", relation.subject)))?;
        let target = match (&relation.reference, relation.kind.needs_object_reference()) {
            (Some(r), true) => {
                RelTarget::Object(object_index(r).ok_or_else(|| encoding(&relation.id, format!("unknown reference `{r}`")))?)
            }
            (None, true) => return Err(encoding(&relation.id, "relation kind needs an object reference")),
            (None, false) => RelTarget::Room(problem.objects[subject].room),
            (Some(r), false) => match (room_index(r), parse_wall_id(r)) {
                (Some(room), _) => RelTarget::Room(room),
                (None, Some((room, side))) => RelTarget::Wall(
                    room_index(room).ok_or_else(|| encoding(&relation.id, format!("unknown wall `{r}`")))?,
                    side,
                ),
                _ => return Err(encoding(&relation.id, format!("unknown room or wall `{r}`"))),
            },
        };
        if let RelTarget::Object(t) = target {
            if t == subject {
                return Err(encoding(&relation.id, "relation relates an object to itself"));
            }
        }
        let mut scope = vec![pos(&relation.subject)];
        if let RelTarget::Object(t) = target {
            scope.push(pos(&objects[t].id));
        }
        let priority = match relation.priority {
            Priority::Task => ConstraintPriority::Task,
            Priority::Enrichment => ConstraintPriority::Enrichment,
        };
        let index = problem.constraints.len();
        problem.push(
            relation_constraint_id(&relation.id),
            ConstraintKind::Relation(relation.kind),
            scope,
            priority,
            Some(relation.id.clone()),
            Check::Relation { kind: relation.kind, subject, target },
        );
        relation_checks.push((index, relation.kind, subject, target));
    }

    for &(index, kind, subject, target) in &relation_checks {
        let resting = match (kind, target) {
            (RelationKind::OnTopOf, RelTarget::Object(t)) => Resting::OnTop(t),
            (RelationKind::In, RelTarget::Object(t)) => Resting::Inside(t),
            (RelationKind::MountedOnWall, _) => Resting::Mounted(index),
            _ => continue,
        };
        let object = &mut problem.objects[subject];
        if object.resting != Resting::Floor {
            return Err(encoding(&object.id, "object has more than one support relation"));
        }
        object.resting = resting;
    }
    for start in 0..problem.objects.len() {
        let mut seen = BTreeSet::from([start]);
        let mut at = start;
        while let Some(parent) = problem.parent(at) {
            if !seen.insert(parent) {
                return Err(encoding(&problem.objects[start].id, "support relations form a cycle"));
            }
            at = parent;
        }
    }

    for i in 0..problem.objects.len() {
        let id = problem.objects[i].id.clone();
        problem.push(
            format!("contain:{id}"),
            ConstraintKind::RoomContainment,
            vec![pos(&id)],
            ConstraintPriority::Physical,
            None,
            Check::Contain(i),
        );
        let mut scope = vec![pos(&id)];
        if let Some(p) = problem.parent(i) {
            scope.push(pos(&problem.objects[p].id));
        }
        problem.push(format!("support:{id}"), ConstraintKind::Support, scope, ConstraintPriority::Physical, None, Check::Support(i));
    }

    let contained: BTreeSet<(usize, usize)> = relation_checks
        .iter()
        .filter_map(|&(_, kind, s, t)| match (kind, t) {
            (RelationKind::In, RelTarget::Object(t)) => Some((s.min(t), s.max(t))),
            _ => None,
        })
        .collect();
    for a in 0..problem.objects.len() {
        for b in a + 1..problem.objects.len() {
            if problem.objects[a].room != problem.objects[b].room || contained.contains(&(a, b)) {
                continue;
            }
            let (ia, ib) = (problem.objects[a].id.clone(), problem.objects[b].id.clone());
            problem.push(
                format!("collide:{ia}:{ib}"),
                ConstraintKind::NonCollision,
                vec![pos(&ia), pos(&ib)],
                ConstraintPriority::Physical,
                None,
                Check::Collide(a, b),
            );
        }
    }

    for door in &floor_plan.doorways {
        let domain = door_domain(door, &rooms, step);
        if domain.is_empty() {
            return Err(encoding(&door.id, "no wall segment can hold the door"));
        }
        problem.variables.push(CspVariable {
            id: pos(&door.id),
            entity: door.id.clone(),
            kind: VariableKind::DoorPosition,
            domain_size: domain.len(),
        });
        problem.doors.push(OpeningVar { id: door.id.clone(), domain });
        problem.push(
            format!("door:{}", door.id),
            ConstraintKind::DoorOnSharedWall,
            vec![pos(&door.id)],
            ConstraintPriority::Physical,
            None,
            Check::Door,
        );
    }
    for window in &floor_plan.windows {
        let room = room_index(&window.room).ok_or_else(|| encoding(&window.id, format!("unknown room `{}`", window.room)))?;
        let domain = window_domain(window, &rooms[room], step);
        if domain.is_empty() {
            return Err(encoding(&window.id, "window does not fit its wall above the floor"));
        }
        problem.variables.push(CspVariable {
            id: pos(&window.id),
            entity: window.id.clone(),
            kind: VariableKind::WindowPosition,
            domain_size: domain.len(),
        });
        problem.windows.push(OpeningVar { id: window.id.clone(), domain });
        problem.push(
            format!("window:{}", window.id),
            ConstraintKind::WindowInWallAboveFloor,
            vec![pos(&window.id)],
            ConstraintPriority::Physical,
            None,
            Check::Window,
        );
    }
    Ok(problem)
}

impl CspProblem {
    fn push(
        &mut self,
        id: String,
        kind: ConstraintKind,
        scope: Vec<String>,
        priority: ConstraintPriority,
        relation_id: Option<String>,
        check: Check,
    ) {
        self.constraints.push(CspConstraint { id, kind, scope, priority, relation_id });
        self.checks.push(check);
    }

    fn parent(&self, object: usize) -> Option<usize> {
        match self.objects[object].resting {
            Resting::OnTop(p) | Resting::Inside(p) => Some(p),
            _ => None,
        }
    }

    pub fn constraint_index(&self, id: &str) -> Option<usize> {
        self.constraints.iter().position(|c| c.id == id)
    }

    pub fn count(&self, kind: ConstraintKind) -> usize {
        self.constraints.iter().filter(|c| c.kind == kind).count()
    }

    /// Debug view: variables with their domains, and constraints.
    pub fn dump(&self) -> Value {
        let round = |v: f64| (v * 1e6).round() / 1e6;
        let mut variables = Vec::new();
        for object in &self.objects {
            let positions: BTreeSet<(u64, u64)> = object.domain.iter().map(|p| (p.x.to_bits(), p.z.to_bits())).collect();
            let positions: Vec<[f64; 2]> =
                positions.into_iter().map(|(x, z)| [round(f64::from_bits(x)), round(f64::from_bits(z))]).collect();
            let directions: BTreeSet<Cardinal> = object.domain.iter().map(|p| p.dir).collect();
            variables.push(json!({"id": format!("{}.position", object.id), "kind": "object_position", "domain": positions}));
            variables.push(json!({"id": format!("{}.direction", object.id), "kind": "object_direction", "domain": directions}));
        }
        for (kind, list) in [("door_position", &self.doors), ("window_position", &self.windows)] {
            for opening in list {
                let domain: Vec<[f64; 3]> = opening.domain.iter().map(|p| p.map(round)).collect();
                variables.push(json!({"id": format!("{}.position", opening.id), "kind": kind, "domain": domain}));
            }
        }
        json!({"variables": variables, "constraints": self.constraints})
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssignedValue {
    Position([f64; 3]),
    Direction(Cardinal),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Solution {
    pub assignment: BTreeMap<String, AssignedValue>,
    /// Ids of dropped constraints, in the order they were dropped.
    pub relaxed: Vec<String>,
}

impl Solution {
    pub fn position(&self, entity: &str) -> Option<[f64; 3]> {
        match self.assignment.get(&format!("{entity}.position")) {
            Some(AssignedValue::Position(p)) => Some(*p),
            _ => None,
        }
    }

    pub fn direction(&self, entity: &str) -> Option<Cardinal> {
        match self.assignment.get(&format!("{entity}.direction")) {
            Some(AssignedValue::Direction(d)) => Some(*d),
            _ => None,
        }
    }
}

pub fn solve(problem: &CspProblem, config: &SolverConfig) -> Result<Solution, SolveError> {
    solve_active(problem, config, &vec![true; problem.constraints.len()])
}

/// Solves, dropping constraints from `policy` one at a time, in order,
/// whenever the current problem fails. The returned `relaxed` list is always
/// a prefix of `policy`.
pub fn solve_with_relaxation(problem: &CspProblem, config: &SolverConfig, policy: &[String]) -> Result<Solution, RelaxError> {
    let mut indices = Vec::with_capacity(policy.len());
    for id in policy {
        let index = problem.constraint_index(id).ok_or_else(|| RelaxError::UnknownConstraint(id.clone()))?;
        if !problem.constraints[index].relaxable() {
            return Err(RelaxError::NotRelaxable(id.clone()));
        }
        indices.push(index);
    }
    let mut active = vec![true; problem.constraints.len()];
    let mut relaxed = Vec::new();
    let mut next = indices.iter().zip(policy);
    loop {
        match solve_active(problem, config, &active) {
            Ok(mut solution) => {
                solution.relaxed = relaxed;
                return Ok(solution);
            }
            Err(cause) => match next.next() {
                Some((&index, id)) => {
                    log::debug!("relaxing {id} after {cause}");
                    active[index] = false;
                    relaxed.push(id.clone());
                }
                None => return Err(RelaxError::CoreUnsat { relaxed, cause }),
            },
        }
    }
}

fn solve_active(problem: &CspProblem, config: &SolverConfig, active: &[bool]) -> Result<Solution, SolveError> {
    for (c, check) in problem.checks.iter().enumerate() {
        if let (true, Check::Rooms(a, b)) = (active[c], check) {
            if problem.rooms[*a].rect.intersection_area(&problem.rooms[*b].rect) > EPS {
                return Err(SolveError::Unsat);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut search = Search::new(problem, config, active, &mut rng);
    let poses = search.run()?;

    let mut solution = Solution::default();
    for (i, (object, pose)) in problem.objects.iter().zip(&poses).enumerate() {
        let body = search.bodies[i].expect("placed after search");
        let center = body.aabb.center_xz();
        solution
            .assignment
            .insert(format!("{}.position", object.id), AssignedValue::Position([center.0, body.aabb.bottom(), center.1]));
        solution.assignment.insert(format!("{}.direction", object.id), AssignedValue::Direction(pose.dir));
    }
    for opening in problem.doors.iter().chain(&problem.windows) {
        let mut domain = opening.domain.clone();
        domain.shuffle(&mut rng);
        solution.assignment.insert(format!("{}.position", opening.id), AssignedValue::Position(domain[0]));
    }
    Ok(solution)
}

struct Search<'a> {
    problem: &'a CspProblem,
    config: &'a SolverConfig,
    order: Vec<usize>,
    resting: Vec<Resting>,
    /// Active object constraints touching each object.
    touching: Vec<Vec<usize>>,
    scopes: Vec<Vec<usize>>,
    domains: Vec<Vec<u32>>,
    trail: Vec<(usize, Vec<u32>)>,
    bodies: Vec<Option<Body>>,
    poses: Vec<Option<Pose>>,
    backtracks: u64,
    nodes: u64,
    started: Instant,
}

impl<'a> Search<'a> {
    fn new(problem: &'a CspProblem, config: &'a SolverConfig, active: &[bool], rng: &mut ChaCha8Rng) -> Self {
        let n = problem.objects.len();
        let resting: Vec<Resting> = problem
            .objects
            .iter()
            .map(|o| match o.resting {
                Resting::Mounted(c) if !active[c] => Resting::Floor,
                r => r,
            })
            .collect();
        let mut scopes = vec![Vec::new(); problem.checks.len()];
        let mut touching = vec![Vec::new(); n];
        for (c, check) in problem.checks.iter().enumerate() {
            let scope = match *check {
                Check::Contain(o) => vec![o],
                Check::Support(o) => match resting[o] {
                    Resting::OnTop(p) | Resting::Inside(p) => vec![o, p],
                    _ => vec![o],
                },
                Check::Collide(a, b) => vec![a, b],
                Check::Relation { subject, target: RelTarget::Object(t), .. } => vec![subject, t],
                Check::Relation { subject, .. } => vec![subject],
                _ => Vec::new(),
            };
            if active[c] {
                for &o in &scope {
                    touching[o].push(c);
                }
            }
            scopes[c] = scope;
        }

        let mut by_size: Vec<usize> = (0..n).collect();
        by_size.sort_by(|&a, &b| {
            let area = |i: usize| problem.objects[i].size[0] * problem.objects[i].size[2];
            area(b).total_cmp(&area(a)).then_with(|| problem.objects[a].id.cmp(&problem.objects[b].id))
        });
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        for &start in &by_size {
            let mut chain = vec![start];
            while let Some(p) = match resting[*chain.last().expect("non-empty")] {
                Resting::OnTop(p) | Resting::Inside(p) => Some(p),
                _ => None,
            } {
                chain.push(p);
            }
            for &o in chain.iter().rev() {
                if !placed[o] {
                    placed[o] = true;
                    order.push(o);
                }
            }
        }

        let domains = problem
            .objects
            .iter()
            .map(|o| {
                let mut d: Vec<u32> = (0..o.domain.len() as u32).collect();
                d.shuffle(rng);
                d
            })
            .collect();
        Self {
            problem,
            config,
            order,
            resting,
            touching,
            scopes,
            domains,
            trail: Vec::new(),
            bodies: vec![None; n],
            poses: vec![None; n],
            backtracks: 0,
            nodes: 0,
            started: Instant::now(),
        }
    }

    fn body(&self, object: usize, pose: Pose) -> Option<Body> {
        let o = &self.problem.objects[object];
        let room = &self.problem.rooms[o.room];
        let y = match self.resting[object] {
            Resting::Floor => 0.0,
            Resting::Mounted(_) => self.problem.thresholds.mount_height.min(room.height - o.size[1]),
            Resting::OnTop(p) => self.bodies[p]?.aabb.top(),
            Resting::Inside(p) => self.bodies[p]?.aabb.bottom(),
        };
        Some(Body { aabb: Aabb::from_placement(o.size, [pose.x, y, pose.z], pose.dir), dir: pose.dir })
    }

    fn resolvable(&self, object: usize) -> bool {
        match self.resting[object] {
            Resting::OnTop(p) | Resting::Inside(p) => self.bodies[p].is_some(),
            _ => true,
        }
    }

    fn eval(&self, c: usize, object: usize, candidate: &Body) -> bool {
        let get = |i: usize| if i == object { Some(*candidate) } else { self.bodies[i] };
        let t = &self.problem.thresholds;
        match self.problem.checks[c] {
            Check::Contain(o) => {
                let Some(b) = get(o) else { return false };
                let room = &self.problem.rooms[self.problem.objects[o].room];
                room.rect.contains_rect(&b.aabb.footprint(), EPS) && b.aabb.top() <= room.height + EPS
            }
            Check::Support(o) => {
                let Some(b) = get(o) else { return false };
                match self.resting[o] {
                    Resting::Floor => b.aabb.bottom().abs() <= EPS,
                    Resting::Mounted(_) => {
                        let room = self.problem.rooms[self.problem.objects[o].room].rect;
                        relation_holds(RelationKind::MountedOnWall, &b, &Target::Room(room), t)
                    }
                    Resting::OnTop(p) => {
                        get(p).is_some_and(|s| semantics::rests_on_top(&b.aabb, &s.aabb, t.min_support_overlap))
                    }
                    Resting::Inside(p) => get(p).is_some_and(|s| semantics::sits_inside(&b.aabb, &s.aabb)),
                }
            }
            Check::Collide(a, b) => match (get(a), get(b)) {
                (Some(a), Some(b)) => !a.aabb.interiors_intersect(&b.aabb),
                _ => false,
            },
            Check::Relation { kind, subject, target } => {
                let Some(s) = get(subject) else { return false };
                let target = match target {
                    RelTarget::Object(r) => match get(r) {
                        Some(r) => Target::Object(r),
                        None => return false,
                    },
                    RelTarget::Room(r) => Target::Room(self.problem.rooms[r].rect),
                    RelTarget::Wall(r, side) => Target::Wall(self.problem.rooms[r].rect, side),
                };
                relation_holds(kind, &s, &target, t)
            }
            Check::Door | Check::Window | Check::Rooms(..) => true,
        }
    }

    /// Constraints of `object` whose other members are all placed.
    fn ready(&self, object: usize, only_with: Option<usize>) -> Vec<usize> {
        self.touching[object]
            .iter()
            .copied()
            .filter(|&c| self.scopes[c].iter().all(|&o| o == object || self.bodies[o].is_some()))
            .filter(|&c| only_with.is_none_or(|w| self.scopes[c].contains(&w)))
            .collect()
    }

    fn filter(&mut self, object: usize, constraints: &[usize]) -> bool {
        if constraints.is_empty() {
            return true;
        }
        let domain = &self.problem.objects[object].domain;
        let kept: Vec<u32> = self.domains[object]
            .iter()
            .copied()
            .filter(|&v| {
                self.body(object, domain[v as usize])
                    .is_some_and(|b| constraints.iter().all(|&c| self.eval(c, object, &b)))
            })
            .collect();
        if kept.len() != self.domains[object].len() {
            let old = std::mem::replace(&mut self.domains[object], kept);
            self.trail.push((object, old));
        }
        !self.domains[object].is_empty()
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (object, old) = self.trail.pop().expect("non-empty trail");
            self.domains[object] = old;
        }
    }

    fn run(&mut self) -> Result<Vec<Pose>, SolveError> {
        for object in 0..self.problem.objects.len() {
            if self.resolvable(object) {
                let unary: Vec<usize> =
                    self.touching[object].iter().copied().filter(|&c| self.scopes[c] == [object]).collect();
                if !self.filter(object, &unary) {
                    return Err(SolveError::Unsat);
                }
            }
        }
        self.trail.clear();
        if self.dfs(0)? {
            Ok(self.poses.iter().map(|p| p.expect("all assigned")).collect())
        } else {
            Err(SolveError::Unsat)
        }
    }

    fn dfs(&mut self, depth: usize) -> Result<bool, SolveError> {
        let Some(&object) = self.order.get(depth) else {
            return Ok(true);
        };
        let values = self.domains[object].clone();
        let checks = self.ready(object, None);
        for v in values {
            self.nodes += 1;
            if self.nodes % 256 == 0 && self.started.elapsed() > self.config.timeout() {
                return Err(SolveError::Timeout);
            }
            let pose = self.problem.objects[object].domain[v as usize];
            let Some(body) = self.body(object, pose) else { continue };
            if !checks.iter().all(|&c| self.eval(c, object, &body)) {
                continue;
            }
            self.bodies[object] = Some(body);
            self.poses[object] = Some(pose);
            let mark = self.trail.len();
            if self.forward_check(object, depth) && self.dfs(depth + 1)? {
                return Ok(true);
            }
            self.undo(mark);
            self.bodies[object] = None;
            self.poses[object] = None;
            self.backtracks += 1;
            if self.backtracks > self.config.max_backtracks {
                return Err(SolveError::BudgetExhausted(self.config.max_backtracks));
            }
        }
        Ok(false)
    }

    fn forward_check(&mut self, placed: usize, depth: usize) -> bool {
        for i in depth + 1..self.order.len() {
            let future = self.order[i];
            if !self.resolvable(future) {
                continue;
            }
            let newly_supported = matches!(self.resting[future], Resting::OnTop(p) | Resting::Inside(p) if p == placed);
            let constraints = self.ready(future, (!newly_supported).then_some(placed));
            if !self.filter(future, &constraints) {
                return false;
            }
        }
        true
    }
}
