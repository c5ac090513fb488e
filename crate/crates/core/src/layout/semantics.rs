//! Geometric meaning of each spatial relation kind. The solver and the
//! physics validator both evaluate relations through [`relation_holds`], so
//! their notion of "satisfied" cannot drift apart.

use serde::{Deserialize, Serialize};

use crate::environment::RelationKind;
use crate::geometry::{Aabb, Cardinal, Rect, CONTACT_EPS, EPS};

/// Relation thresholds in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub near_max: f64,
    pub far_min: f64,
    /// Largest gap between the reference's front face and the subject.
    pub in_front_max: f64,
    pub side_max_longitudinal: f64,
    /// Largest lateral gap between reference and subject for `side_of`.
    pub side_max_gap: f64,
    pub align_tolerance: f64,
    pub edge_max: f64,
    pub center_max: f64,
    /// Bottom height used for wall-mounted objects.
    pub mount_height: f64,
    /// Fraction of the subject footprint that must rest on the supporting top.
    pub min_support_overlap: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            near_max: 1.5,
            far_min: 3.0,
            in_front_max: 2.0,
            side_max_longitudinal: 0.5,
            side_max_gap: 1.0,
            align_tolerance: 0.1,
            edge_max: 0.3,
            center_max: 0.5,
            mount_height: 1.4,
            min_support_overlap: 0.5,
        }
    }
}

/// A placed object: its box and the way it faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub aabb: Aabb,
    pub dir: Cardinal,
}

/// What a relation is measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Object(Body),
    Room(Rect),
    Wall(Rect, Cardinal),
}

/// Extents of `rect` in the frame of an observer at `origin` facing `dir`:
/// `(near, far)` along the facing axis and `(left, right)` across it.
fn frame(rect: &Rect, origin: (f64, f64), dir: Cardinal) -> (f64, f64, f64, f64) {
    let (fx, fz) = dir.facing();
    let corners = [
        (rect.min_x, rect.min_z),
        (rect.min_x, rect.max_z),
        (rect.max_x, rect.min_z),
        (rect.max_x, rect.max_z),
    ];
    let mut out = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (px, pz) in corners {
        let (dx, dz) = (px - origin.0, pz - origin.1);
        let along = dx * fx + dz * fz;
        let across = dx * fz - dz * fx;
        out.0 = out.0.min(along);
        out.1 = out.1.max(along);
        out.2 = out.2.min(across);
        out.3 = out.3.max(across);
    }
    out
}

/// Does the facing ray of `from` cross `to`'s footprint ahead of `from`'s center?
fn ray_hits(from: &Body, to: &Rect) -> bool {
    let (near, _, left, right) = frame(to, from.aabb.center_xz(), from.dir);
    left <= EPS && right >= -EPS && near >= -EPS
}

fn center_distance(a: &Aabb, b: &Aabb) -> f64 {
    let (ax, az) = a.center_xz();
    let (bx, bz) = b.center_xz();
    (ax - bx).hypot(az - bz)
}

/// Distance from the footprint to the wall on `side`, negative if past it.
fn wall_gap(fp: &Rect, room: &Rect, side: Cardinal) -> f64 {
    match side {
        Cardinal::North => room.max_z - fp.max_z,
        Cardinal::South => fp.min_z - room.min_z,
        Cardinal::East => room.max_x - fp.max_x,
        Cardinal::West => fp.min_x - room.min_x,
    }
}

fn mounted_on(subject: &Body, room: &Rect, side: Cardinal) -> bool {
    subject.dir.opposite() == side
        && wall_gap(&subject.aabb.footprint(), room, side).abs() <= CONTACT_EPS
        && subject.aabb.bottom() > EPS
}

/// True when `subject` rests on `support`'s top face.
pub fn rests_on_top(subject: &Aabb, support: &Aabb, min_overlap: f64) -> bool {
    let fp = subject.footprint();
    (subject.bottom() - support.top()).abs() <= CONTACT_EPS
        && fp.intersection_area(&support.footprint()) >= min_overlap * fp.area() - EPS
}

/// True when `subject` sits inside `container`, standing on its bottom.
pub fn sits_inside(subject: &Aabb, container: &Aabb) -> bool {
    container.footprint().contains_rect(&subject.footprint(), EPS)
        && (subject.bottom() - container.bottom()).abs() <= CONTACT_EPS
        && subject.top() <= container.top() + CONTACT_EPS
}

/// Evaluates one relation. Returns false when the target kind does not fit
/// the relation (for instance `near` against a wall).
pub fn relation_holds(kind: RelationKind, subject: &Body, target: &Target, t: &Thresholds) -> bool {
    use RelationKind::*;
    let s = &subject.aabb;
    match (kind, target) {
        (Edge, Target::Room(room)) => Cardinal::ALL.iter().any(|&side| wall_gap(&s.footprint(), room, side) <= t.edge_max + EPS),
        (Edge, Target::Wall(room, side)) => wall_gap(&s.footprint(), room, *side) <= t.edge_max + EPS,
        (Center, Target::Room(room)) => {
            let (cx, cz) = room.center();
            let (sx, sz) = s.center_xz();
            (sx - cx).hypot(sz - cz) <= t.center_max + EPS
        }
        (MountedOnWall, Target::Room(room)) => Cardinal::ALL.iter().any(|&side| mounted_on(subject, room, side)),
        (MountedOnWall, Target::Wall(room, side)) => mounted_on(subject, room, *side),
        (In, Target::Object(r)) => sits_inside(s, &r.aabb),
        (OnTopOf, Target::Object(r)) => rests_on_top(s, &r.aabb, t.min_support_overlap),
        (Near, Target::Object(r)) => center_distance(s, &r.aabb) <= t.near_max + EPS,
        (Far, Target::Object(r)) => center_distance(s, &r.aabb) >= t.far_min - EPS,
        (Above, Target::Object(r)) => {
            s.bottom() >= r.aabb.top() - EPS && s.footprint().intersection_area(&r.aabb.footprint()) > EPS
        }
        (InFrontOf, Target::Object(r)) => {
            let (near, _, left, right) = frame(&s.footprint(), r.aabb.center_xz(), r.dir);
            let (_, half_depth, _, _) = frame(&r.aabb.footprint(), r.aabb.center_xz(), r.dir);
            left <= EPS && right >= -EPS && near >= half_depth - EPS && near - half_depth <= t.in_front_max + EPS
        }
        (SideOf, Target::Object(r)) => {
            let (near, far, left, right) = frame(&s.footprint(), r.aabb.center_xz(), r.dir);
            let (_, _, _, half_width) = frame(&r.aabb.footprint(), r.aabb.center_xz(), r.dir);
            let gap = if left >= 0.0 {
                left - half_width
            } else if right <= 0.0 {
                -right - half_width
            } else {
                -1.0
            };
            ((near + far) / 2.0).abs() <= t.side_max_longitudinal + EPS && gap >= -EPS && gap <= t.side_max_gap + EPS
        }
        (CenterAligned, Target::Object(r)) => {
            let (sx, sz) = s.center_xz();
            let (rx, rz) = r.aabb.center_xz();
            (sx - rx).abs() <= t.align_tolerance + EPS || (sz - rz).abs() <= t.align_tolerance + EPS
        }
        (FaceTo, Target::Object(r)) => ray_hits(subject, &r.aabb.footprint()) && ray_hits(r, &s.footprint()),
        _ => false,
    }
}
