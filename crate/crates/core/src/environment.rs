//! Simulated-environment test cases: floor plan, objects, spatial relations,
//! solved placements and the flat metadata read by coverage checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::geometry::{Aabb, Cardinal, Rect, CONTACT_EPS};
use crate::plan::DecisionPath;

pub use crate::geometry::Cardinal as Direction;

pub const SCHEMA_VERSION: u32 = 1;
pub const EXTERIOR: &str = "exterior";
pub const ABSENT: &str = "absent";
pub const PRESENT: &str = "present";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("object `{0}` has no placement")]
    IncompletePlacement(String),
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> EnvError {
    EnvError::SchemaViolation { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpenState {
    Opened,
    Closed,
}

fn default_room_height() -> f64 {
    2.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: String,
    /// Four corners `[x, z]` of an axis-aligned rectangle.
    pub vertices: [[f64; 2]; 4],
    #[serde(default = "default_room_height")]
    pub height: f64,
    #[serde(default)]
    pub floor_color: String,
    #[serde(default)]
    pub floor_material: String,
    #[serde(default)]
    pub wall_color: String,
    #[serde(default)]
    pub wall_material: String,
}

impl Room {
    pub fn rect(&self) -> Rect {
        let xs = self.vertices.map(|v| v[0]);
        let zs = self.vertices.map(|v| v[1]);
        Rect {
            min_x: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max_x: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_z: zs.iter().copied().fold(f64::INFINITY, f64::min),
            max_z: zs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Convenience constructor from an origin corner and extents.
    pub fn rectangle(id: impl Into<String>, min: [f64; 2], max: [f64; 2]) -> Self {
        Self {
            id: id.into(),
            vertices: [[min[0], min[1]], [max[0], min[1]], [max[0], max[1]], [min[0], max[1]]],
            height: default_room_height(),
            floor_color: String::new(),
            floor_material: String::new(),
            wall_color: String::new(),
            wall_material: String::new(),
        }
    }

    fn check_shape(&self) -> Result<(), String> {
        let r = self.rect();
        if !(r.area() > 0.0) || !self.height.is_finite() || self.height <= 0.0 {
            return Err("room must have positive area and height".into());
        }
        let mut corners: Vec<(u64, u64)> = self.vertices.iter().map(|v| (v[0].to_bits(), v[1].to_bits())).collect();
        corners.sort();
        let mut expected = vec![
            (r.min_x.to_bits(), r.min_z.to_bits()),
            (r.min_x.to_bits(), r.max_z.to_bits()),
            (r.max_x.to_bits(), r.min_z.to_bits()),
            (r.max_x.to_bits(), r.max_z.to_bits()),
        ];
        expected.sort();
        if corners != expected {
            return Err("vertices do not form an axis-aligned rectangle".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doorway {
    pub id: String,
    #[serde(default)]
    pub door_type: String,
    pub width: f64,
    pub height: f64,
    pub state: OpenState,
    /// Two room ids, or a room id and `exterior`.
    pub connects: [String; 2],
    /// Restricts an exterior door to one wall of its room.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall: Option<Cardinal>,
    /// Bottom-center point of the door opening, once solved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
}

fn default_sill() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub id: String,
    pub room: String,
    pub orientation: Cardinal,
    #[serde(default)]
    pub window_type: String,
    pub state: OpenState,
    pub width: f64,
    pub height: f64,
    #[serde(default = "default_sill")]
    pub sill_height: f64,
    /// Bottom-center point of the window, once solved; `y` is the sill.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FloorPlan {
    pub rooms: Vec<Room>,
    #[serde(default)]
    pub doorways: Vec<Doorway>,
    #[serde(default)]
    pub windows: Vec<Window>,
}

impl FloorPlan {
    pub fn room(&self, id: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectCategory {
    TaskRelated,
    Enrichment,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassCategory {
    #[default]
    Light,
    HeavyFreestanding,
    WallMountable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub description: String,
    pub room: String,
    /// `[width, height, depth]` in meters when facing north.
    pub size: [f64; 3],
    pub category: ObjectCategory,
    #[serde(default)]
    pub mass_category: MassCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_id: Option<String>,
    #[serde(default)]
    pub attributes: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Edge,
    Center,
    MountedOnWall,
    In,
    OnTopOf,
    Near,
    Far,
    Above,
    InFrontOf,
    SideOf,
    CenterAligned,
    FaceTo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationGroup {
    Unary,
    Contact,
    Distance,
    Relative,
}

impl RelationKind {
    pub const ALL: [RelationKind; 12] = [
        RelationKind::Edge,
        RelationKind::Center,
        RelationKind::MountedOnWall,
        RelationKind::In,
        RelationKind::OnTopOf,
        RelationKind::Near,
        RelationKind::Far,
        RelationKind::Above,
        RelationKind::InFrontOf,
        RelationKind::SideOf,
        RelationKind::CenterAligned,
        RelationKind::FaceTo,
    ];

    pub fn group(self) -> RelationGroup {
        use RelationKind::*;
        match self {
            Edge | Center | MountedOnWall => RelationGroup::Unary,
            In | OnTopOf => RelationGroup::Contact,
            Near | Far => RelationGroup::Distance,
            Above | InFrontOf | SideOf | CenterAligned | FaceTo => RelationGroup::Relative,
        }
    }

    /// Unary kinds take an optional wall (or room) reference; the rest need an object.
    pub fn needs_object_reference(self) -> bool {
        self.group() != RelationGroup::Unary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    Task,
    Enrichment,
}

impl From<ObjectCategory> for Priority {
    fn from(category: ObjectCategory) -> Self {
        match category {
            ObjectCategory::TaskRelated => Priority::Task,
            ObjectCategory::Enrichment => Priority::Enrichment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialRelation {
    pub id: String,
    pub kind: RelationKind,
    pub subject: String,
    /// Object id, room id, or wall id (`<room>:<north|east|south|west>`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub priority: Priority,
}

/// Splits `room:side` into its parts.
pub fn parse_wall_id(id: &str) -> Option<(&str, Cardinal)> {
    let (room, side) = id.rsplit_once(':')?;
    Some((room, Cardinal::parse(side)?))
}

pub fn wall_id(room: &str, side: Cardinal) -> String {
    format!("{room}:{}", side.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub object: String,
    /// Bottom-face center.
    pub position: [f64; 3],
    pub direction: Cardinal,
}

/// `(entity, attribute) → value`, keyed as `entity.attribute`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Metadata(pub BTreeMap<String, String>);

impl Metadata {
    pub fn key(entity: &str, attribute: &str) -> String {
        format!("{entity}.{attribute}")
    }

    pub fn insert(&mut self, entity: &str, attribute: &str, value: impl Into<String>) {
        self.0.insert(Self::key(entity, attribute), value.into());
    }

    pub fn get(&self, entity: &str, attribute: &str) -> Option<&str> {
        self.0.get(&Self::key(entity, attribute)).map(String::as_str)
    }

    /// Missing entries read as `absent`.
    pub fn value(&self, entity: &str, attribute: &str) -> &str {
        self.get(entity, attribute).unwrap_or(ABSENT)
    }

    pub fn entities(&self) -> BTreeSet<&str> {
        self.0.keys().filter_map(|k| k.split_once('.').map(|(e, _)| e)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub schema_version: u32,
    pub id: String,
    pub task_id: String,
    pub trajectory_id: String,
    #[serde(default)]
    pub trajectory_paths: Vec<DecisionPath>,
    pub floor_plan: FloorPlan,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub relations: Vec<SpatialRelation>,
    /// Ids of relations dropped by constraint relaxation.
    #[serde(default)]
    pub relaxed: Vec<String>,
    #[serde(default)]
    pub placements: Vec<Placement>,
    #[serde(default)]
    pub metadata: Metadata,
}

impl EnvironmentSpec {
    pub fn new(id: impl Into<String>, task_id: impl Into<String>, floor_plan: FloorPlan) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            id: id.into(),
            task_id: task_id.into(),
            trajectory_id: String::new(),
            trajectory_paths: Vec::new(),
            floor_plan,
            objects: Vec::new(),
            relations: Vec::new(),
            relaxed: Vec::new(),
            placements: Vec::new(),
            metadata: Metadata::default(),
        }
    }

    pub fn object(&self, id: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn placement(&self, id: &str) -> Option<&Placement> {
        self.placements.iter().find(|p| p.object == id)
    }

    pub fn object_box(&self, id: &str) -> Option<Aabb> {
        let object = self.object(id)?;
        let placement = self.placement(id)?;
        Some(Aabb::from_placement(object.size, placement.position, placement.direction))
    }

    pub fn is_relaxed(&self, relation_id: &str) -> bool {
        self.relaxed.iter().any(|r| r == relation_id)
    }

    /// Structural invariants: unique ids, resolvable references, positive sizes.
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(violation("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        if self.id.is_empty() {
            return Err(violation("id", "empty environment id"));
        }
        let mut ids = BTreeSet::new();
        for (i, room) in self.floor_plan.rooms.iter().enumerate() {
            let path = format!("floor_plan.rooms[{i}]");
            room.check_shape().map_err(|m| violation(&path, m))?;
            if !ids.insert(room.id.as_str()) || room.id.contains('.') || room.id.contains(':') {
                return Err(violation(path, format!("bad or duplicate id `{}`", room.id)));
            }
        }
        for (i, door) in self.floor_plan.doorways.iter().enumerate() {
            let path = format!("floor_plan.doorways[{i}]");
            if !(door.width > 0.0 && door.height > 0.0) {
                return Err(violation(path, "door size must be positive"));
            }
            for (k, end) in door.connects.iter().enumerate() {
                if end != EXTERIOR && self.floor_plan.room(end).is_none() {
                    return Err(violation(format!("{path}.connects[{k}]"), format!("unknown room `{end}`")));
                }
            }
            if door.connects.iter().all(|c| c == EXTERIOR) || door.connects[0] == door.connects[1] {
                return Err(violation(format!("{path}.connects"), "door must connect two distinct sides"));
            }
            check_finite(door.position, &path)?;
        }
        for (i, window) in self.floor_plan.windows.iter().enumerate() {
            let path = format!("floor_plan.windows[{i}]");
            if self.floor_plan.room(&window.room).is_none() {
                return Err(violation(format!("{path}.room"), format!("unknown room `{}`", window.room)));
            }
            if !(window.width > 0.0 && window.height > 0.0) {
                return Err(violation(path, "window size must be positive"));
            }
            check_finite(window.position, &path)?;
        }
        for (i, object) in self.objects.iter().enumerate() {
            let path = format!("objects[{i}]");
            if !ids.insert(object.id.as_str()) || object.id.is_empty() || object.id.contains('.') || object.id.contains(':') {
                return Err(violation(format!("{path}.id"), format!("bad or duplicate id `{}`", object.id)));
            }
            if self.floor_plan.room(&object.room).is_none() {
                return Err(violation(format!("{path}.room"), format!("unknown room `{}`", object.room)));
            }
            if !object.size.iter().all(|s| s.is_finite() && *s > 0.0) {
                return Err(violation(format!("{path}.size"), "bounding box must be strictly positive"));
            }
        }
        let mut relation_ids = BTreeSet::new();
        for (i, relation) in self.relations.iter().enumerate() {
            let path = format!("relations[{i}]");
            if !relation_ids.insert(relation.id.as_str()) {
                return Err(violation(format!("{path}.id"), format!("duplicate relation id `{}`", relation.id)));
            }
            if self.object(&relation.subject).is_none() {
                return Err(violation(format!("{path}.subject"), format!("unknown object `{}`", relation.subject)));
            }
            match (&relation.reference, relation.kind.needs_object_reference()) {
                (None, true) => return Err(violation(format!("{path}.reference"), "relation kind needs a reference")),
                (Some(r), true) if self.object(r).is_none() => {
                    return Err(violation(format!("{path}.reference"), format!("unknown object `{r}`")))
                }
                (Some(r), false) if self.floor_plan.room(r).is_none() && !self.is_wall(r) => {
                    return Err(violation(format!("{path}.reference"), format!("unknown room or wall `{r}`")))
                }
                _ => {}
            }
            if relation.reference.as_deref() == Some(relation.subject.as_str()) {
                return Err(violation(path, "relation relates an object to itself"));
            }
        }
        for (i, relaxed) in self.relaxed.iter().enumerate() {
            if !relation_ids.contains(relaxed.as_str()) {
                return Err(violation(format!("relaxed[{i}]"), format!("unknown relation `{relaxed}`")));
            }
        }
        let mut placed = BTreeSet::new();
        for (i, placement) in self.placements.iter().enumerate() {
            let path = format!("placements[{i}]");
            if self.object(&placement.object).is_none() {
                return Err(violation(format!("{path}.object"), format!("unknown object `{}`", placement.object)));
            }
            if !placed.insert(placement.object.as_str()) {
                return Err(violation(path, format!("object `{}` placed twice", placement.object)));
            }
            check_finite(Some(placement.position), &path)?;
        }
        Ok(())
    }

    fn is_wall(&self, id: &str) -> bool {
        parse_wall_id(id).is_some_and(|(room, _)| self.floor_plan.room(room).is_some())
    }
}

fn check_finite(position: Option<[f64; 3]>, path: &str) -> Result<(), EnvError> {
    match position {
        Some(p) if !p.iter().all(|c| c.is_finite()) => Err(violation(format!("{path}.position"), "non-finite coordinate")),
        _ => Ok(()),
    }
}

/// Validates, refreshes metadata, and writes pretty JSON with stable key order.
pub fn serialize(env: &EnvironmentSpec) -> Result<String, EnvError> {
    env.validate()?;
    let mut env = env.clone();
    env.metadata = rebuild_metadata(&env)?;
    Ok(serde_json::to_string_pretty(&env).expect("environment serializes") + "\n")
}

pub fn deserialize(document: &str) -> Result<EnvironmentSpec, EnvError> {
    let mut de = serde_json::Deserializer::from_str(document);
    let env: EnvironmentSpec = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        violation(path, e.into_inner().to_string())
    })?;
    env.validate()?;
    Ok(env)
}

/// Where an object rests, by geometric support detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SupportSite {
    Inside(String),
    OnTopOf(String),
    Floor,
    Wall,
    Floating,
}

impl fmt::Display for SupportSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupportSite::Inside(c) => write!(f, "in_{c}"),
            SupportSite::OnTopOf(s) => write!(f, "{s}_top"),
            SupportSite::Floor => f.write_str("floor"),
            SupportSite::Wall => f.write_str("wall"),
            SupportSite::Floating => f.write_str("floating"),
        }
    }
}

/// Support detection for metadata. Containment wins over resting on a top
/// face; a top face needs the bottom within 1 cm and at least half of the
/// footprint over it. Wall-mountable objects flush with a wall above the
/// floor count as on the wall.
pub fn support_site(env: &EnvironmentSpec, object_id: &str) -> Option<SupportSite> {
    let object = env.object(object_id)?;
    let own = env.object_box(object_id)?;
    let fp = own.footprint();
    let others: Vec<(&str, Aabb)> = env
        .objects
        .iter()
        .filter(|o| o.id != object_id)
        .filter_map(|o| Some((o.id.as_str(), env.object_box(&o.id)?)))
        .collect();

    if let Some((id, _)) = others.iter().find(|(_, b)| {
        b.footprint().contains_rect(&fp, CONTACT_EPS)
            && (own.bottom() - b.bottom()).abs() <= CONTACT_EPS
            && own.top() <= b.top() + CONTACT_EPS
            && fp.area() < b.footprint().area()
    }) {
        return Some(SupportSite::Inside(id.to_string()));
    }
    let best = others
        .iter()
        .filter(|(_, b)| (own.bottom() - b.top()).abs() <= CONTACT_EPS)
        .map(|(id, b)| (*id, fp.intersection_area(&b.footprint())))
        .filter(|(_, overlap)| *overlap >= 0.5 * fp.area())
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(a.0)));
    if let Some((id, _)) = best {
        return Some(SupportSite::OnTopOf(id.to_string()));
    }
    if own.bottom().abs() <= CONTACT_EPS {
        return Some(SupportSite::Floor);
    }
    if object.mass_category == MassCategory::WallMountable && own.bottom() > 0.0 {
        let room = env.floor_plan.room(&object.room)?.rect();
        let placement = env.placement(object_id)?;
        let back = placement.direction.opposite();
        let back_coord = match back {
            Cardinal::North => fp.max_z,
            Cardinal::South => fp.min_z,
            Cardinal::East => fp.max_x,
            Cardinal::West => fp.min_x,
        };
        if (back_coord - room.wall_coord(back)).abs() <= CONTACT_EPS {
            return Some(SupportSite::Wall);
        }
    }
    Some(SupportSite::Floating)
}

fn scalar_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Flat `(entity, attribute)` map: room and object presence, object room,
/// category, support location, and every declared attribute.
pub fn rebuild_metadata(env: &EnvironmentSpec) -> Result<Metadata, EnvError> {
    if let Some(missing) = env.objects.iter().find(|o| env.placement(&o.id).is_none()) {
        return Err(EnvError::IncompletePlacement(missing.id.clone()));
    }
    let mut meta = Metadata::default();
    for room in &env.floor_plan.rooms {
        meta.insert(&room.id, "presence", PRESENT);
        meta.insert(&room.id, "kind", "room");
    }
    for door in &env.floor_plan.doorways {
        meta.insert(&door.id, "presence", PRESENT);
        meta.insert(&door.id, "open_state", if door.state == OpenState::Opened { "opened" } else { "closed" });
    }
    for window in &env.floor_plan.windows {
        meta.insert(&window.id, "presence", PRESENT);
        meta.insert(&window.id, "open_state", if window.state == OpenState::Opened { "opened" } else { "closed" });
        meta.insert(&window.id, "orientation", window.orientation.as_str());
    }
    for object in &env.objects {
        meta.insert(&object.id, "presence", PRESENT);
        meta.insert(&object.id, "room", object.room.clone());
        meta.insert(
            &object.id,
            "category",
            if object.category == ObjectCategory::TaskRelated { "task_related" } else { "enrichment" },
        );
        let site = support_site(env, &object.id).expect("placed object");
        meta.insert(&object.id, "location", site.to_string());
        for (attribute, value) in &object.attributes {
            meta.insert(&object.id, attribute, scalar_text(value));
        }
    }
    Ok(meta)
}
