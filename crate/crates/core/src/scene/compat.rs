//! Rule-based plausibility checks over proposed relations, run before the
//! layout is solved.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::environment::{FloorPlan, MassCategory, ObjectSpec, RelationGroup, RelationKind, SpatialRelation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompatRule {
    ExclusiveSupport,
    ContainmentCapacity,
    Mountability,
    RoomConsistency,
    UnresolvedReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub rule: CompatRule,
    /// Indices into the checked relation list.
    pub relations: Vec<usize>,
    pub message: String,
}

fn supports(kind: RelationKind) -> bool {
    kind.group() == RelationGroup::Contact || kind == RelationKind::MountedOnWall
}

fn fits_inside(inner: [f64; 3], outer: [f64; 3]) -> bool {
    let upright = inner[1] <= outer[1];
    upright
        && ((inner[0] <= outer[0] && inner[2] <= outer[2]) || (inner[0] <= outer[2] && inner[2] <= outer[0]))
}

/// Applies every rule. Conflicts come out grouped by rule, then by the
/// position of their first relation.
pub fn check_compatibility(relations: &[SpatialRelation], objects: &[ObjectSpec], floor_plan: &FloorPlan) -> Vec<Conflict> {
    let object = |id: &str| objects.iter().find(|o| o.id == id);
    let mut out = Vec::new();

    // A subject rests on at most one thing: one contact relation or a wall.
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in relations.iter().enumerate() {
        if supports(r.kind) {
            by_subject.entry(r.subject.as_str()).or_default().push(i);
        }
    }
    let mut exclusive: Vec<Conflict> = by_subject
        .into_iter()
        .filter(|(_, idx)| idx.len() > 1)
        .map(|(subject, relations)| Conflict {
            rule: CompatRule::ExclusiveSupport,
            message: format!("`{subject}` has {} support relations", relations.len()),
            relations,
        })
        .collect();
    exclusive.sort_by_key(|c| c.relations[0]);
    out.extend(exclusive);

    for (i, r) in relations.iter().enumerate() {
        let Some(subject) = object(&r.subject) else {
            out.push(Conflict {
                rule: CompatRule::UnresolvedReference,
                relations: vec![i],
                message: format!("unknown subject `{}`", r.subject),
            });
            continue;
        };
        let reference = match (&r.reference, r.kind.needs_object_reference()) {
            (Some(id), true) => match object(id) {
                Some(o) => Some(o),
                None => {
                    out.push(Conflict {
                        rule: CompatRule::UnresolvedReference,
                        relations: vec![i],
                        message: format!("unknown reference `{id}`"),
                    });
                    continue;
                }
            },
            (None, true) => {
                out.push(Conflict {
                    rule: CompatRule::UnresolvedReference,
                    relations: vec![i],
                    message: format!("{:?} needs a reference object", r.kind),
                });
                continue;
            }
            (Some(id), false) => {
                let known = floor_plan.room(id).is_some()
                    || crate::environment::parse_wall_id(id).is_some_and(|(room, _)| floor_plan.room(room).is_some());
                if !known {
                    out.push(Conflict {
                        rule: CompatRule::UnresolvedReference,
                        relations: vec![i],
                        message: format!("unknown room or wall `{id}`"),
                    });
                }
                None
            }
            (None, false) => None,
        };
        if r.kind == RelationKind::In {
            if let Some(container) = reference {
                if !fits_inside(subject.size, container.size) {
                    out.push(Conflict {
                        rule: CompatRule::ContainmentCapacity,
                        relations: vec![i],
                        message: format!("`{}` does not fit inside `{}`", subject.id, container.id),
                    });
                }
            }
        }
        if r.kind == RelationKind::MountedOnWall && subject.mass_category != MassCategory::WallMountable {
            out.push(Conflict {
                rule: CompatRule::Mountability,
                relations: vec![i],
                message: format!("`{}` cannot be mounted on a wall", subject.id),
            });
        }
        let grouped = matches!(r.kind.group(), RelationGroup::Contact | RelationGroup::Relative);
        if let (true, Some(reference)) = (grouped, reference) {
            if reference.room != subject.room {
                out.push(Conflict {
                    rule: CompatRule::RoomConsistency,
                    relations: vec![i],
                    message: format!("`{}` and `{}` are in different rooms", subject.id, reference.id),
                });
            }
        }
    }
    out.sort_by(|a, b| a.rule.cmp(&b.rule).then_with(|| a.relations.cmp(&b.relations)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{ObjectCategory, Priority, Room};

    fn object(id: &str, size: [f64; 3], mass: MassCategory) -> ObjectSpec {
        ObjectSpec {
            id: id.into(),
            description: id.into(),
            room: "bedroom".into(),
            size,
            category: ObjectCategory::TaskRelated,
            mass_category: mass,
            asset_id: None,
            attributes: Default::default(),
        }
    }

    fn rel(kind: RelationKind, subject: &str, reference: Option<&str>) -> SpatialRelation {
        SpatialRelation { id: format!("{subject}-{kind:?}"), kind, subject: subject.into(), reference: reference.map(Into::into), priority: Priority::Task }
    }

    fn scene() -> (Vec<ObjectSpec>, FloorPlan) {
        let objects = vec![
            object("pen", [0.15, 0.02, 0.02], MassCategory::Light),
            object("drawer", [0.5, 0.2, 0.4], MassCategory::Light),
            object("bed", [1.6, 0.5, 2.0], MassCategory::HeavyFreestanding),
            object("sofa", [2.0, 0.9, 0.9], MassCategory::HeavyFreestanding),
            object("cup", [0.1, 0.1, 0.1], MassCategory::Light),
            object("table", [1.2, 0.7, 0.6], MassCategory::HeavyFreestanding),
        ];
        let plan = FloorPlan { rooms: vec![Room::rectangle("bedroom", [0.0, 0.0], [4.0, 4.0])], ..Default::default() };
        (objects, plan)
    }

    #[test]
    fn pen_in_drawer_and_on_bed() {
        let (objects, plan) = scene();
        let relations = vec![rel(RelationKind::In, "pen", Some("drawer")), rel(RelationKind::OnTopOf, "pen", Some("bed"))];
        let conflicts = check_compatibility(&relations, &objects, &plan);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].rule, CompatRule::ExclusiveSupport);
        assert_eq!(conflicts[0].relations, vec![0, 1]);
    }

    #[test]
    fn heavy_sofa_on_wall() {
        let (objects, plan) = scene();
        let conflicts = check_compatibility(&[rel(RelationKind::MountedOnWall, "sofa", None)], &objects, &plan);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].rule, CompatRule::Mountability);
    }

    #[test]
    fn single_consistent_relation() {
        let (objects, plan) = scene();
        assert!(check_compatibility(&[rel(RelationKind::OnTopOf, "cup", Some("table"))], &objects, &plan).is_empty());
    }

    #[test]
    fn capacity_and_rooms() {
        let (mut objects, plan) = scene();
        let conflicts = check_compatibility(&[rel(RelationKind::In, "bed", Some("drawer"))], &objects, &plan);
        assert_eq!(conflicts[0].rule, CompatRule::ContainmentCapacity);
        objects[4].room = "kitchen".into();
        let conflicts = check_compatibility(&[rel(RelationKind::Near, "cup", Some("table"))], &objects, &plan);
        assert!(conflicts.is_empty(), "distance relations may span rooms");
        let conflicts = check_compatibility(&[rel(RelationKind::SideOf, "cup", Some("table"))], &objects, &plan);
        assert_eq!(conflicts[0].rule, CompatRule::RoomConsistency);
    }
}
