//! Axis-aligned boxes in meters. `y` is vertical; the floor is `y = 0`.

use serde::{Deserialize, Serialize};

/// Contact tolerance for support and flush tests (1 cm).
pub const CONTACT_EPS: f64 = 0.01;
/// Numerical slack for interval comparisons.
pub const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cardinal {
    North,
    East,
    South,
    West,
}

impl Cardinal {
    pub const ALL: [Cardinal; 4] = [Cardinal::North, Cardinal::East, Cardinal::South, Cardinal::West];

    /// Unit facing vector `(dx, dz)`; north is `+z`, east is `+x`.
    pub fn facing(self) -> (f64, f64) {
        match self {
            Cardinal::North => (0.0, 1.0),
            Cardinal::East => (1.0, 0.0),
            Cardinal::South => (0.0, -1.0),
            Cardinal::West => (-1.0, 0.0),
        }
    }

    pub fn opposite(self) -> Cardinal {
        match self {
            Cardinal::North => Cardinal::South,
            Cardinal::East => Cardinal::West,
            Cardinal::South => Cardinal::North,
            Cardinal::West => Cardinal::East,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Cardinal::North => "north",
            Cardinal::East => "east",
            Cardinal::South => "south",
            Cardinal::West => "west",
        }
    }

    pub fn parse(text: &str) -> Option<Cardinal> {
        Cardinal::ALL.into_iter().find(|c| c.as_str() == text)
    }
}

/// Horizontal rectangle on the floor plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_z: f64,
    pub max_x: f64,
    pub max_z: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn depth(&self) -> f64 {
        self.max_z - self.min_z
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.depth().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.min_x + self.max_x) / 2.0, (self.min_z + self.max_z) / 2.0)
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = self.max_x.min(other.max_x) - self.min_x.max(other.min_x);
        let d = self.max_z.min(other.max_z) - self.min_z.max(other.min_z);
        if w <= 0.0 || d <= 0.0 {
            0.0
        } else {
            w * d
        }
    }

    pub fn contains_rect(&self, inner: &Rect, eps: f64) -> bool {
        inner.min_x >= self.min_x - eps
            && inner.max_x <= self.max_x + eps
            && inner.min_z >= self.min_z - eps
            && inner.max_z <= self.max_z + eps
    }

    /// Coordinate of the wall on side `side` (x for east/west, z for north/south).
    pub fn wall_coord(&self, side: Cardinal) -> f64 {
        match side {
            Cardinal::North => self.max_z,
            Cardinal::South => self.min_z,
            Cardinal::East => self.max_x,
            Cardinal::West => self.min_x,
        }
    }

    /// Interval spanned by the wall on side `side`, along its own axis.
    pub fn wall_span(&self, side: Cardinal) -> (f64, f64) {
        match side {
            Cardinal::North | Cardinal::South => (self.min_x, self.max_x),
            Cardinal::East | Cardinal::West => (self.min_z, self.max_z),
        }
    }
}

/// Horizontal extents `(along x, along z)` of a `[width, height, depth]` box
/// turned to face `dir`. Width runs across the facing direction.
pub fn footprint_extents(size: [f64; 3], dir: Cardinal) -> (f64, f64) {
    match dir {
        Cardinal::North | Cardinal::South => (size[0], size[2]),
        Cardinal::East | Cardinal::West => (size[2], size[0]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    /// Box of an object whose bottom-face center sits at `position`.
    pub fn from_placement(size: [f64; 3], position: [f64; 3], dir: Cardinal) -> Self {
        let (ex, ez) = footprint_extents(size, dir);
        Self {
            min: [position[0] - ex / 2.0, position[1], position[2] - ez / 2.0],
            max: [position[0] + ex / 2.0, position[1] + size[1], position[2] + ez / 2.0],
        }
    }

    pub fn footprint(&self) -> Rect {
        Rect { min_x: self.min[0], min_z: self.min[2], max_x: self.max[0], max_z: self.max[2] }
    }

    pub fn bottom(&self) -> f64 {
        self.min[1]
    }

    pub fn top(&self) -> f64 {
        self.max[1]
    }

    pub fn center_xz(&self) -> (f64, f64) {
        self.footprint().center()
    }

    /// True when the open interiors share volume.
    pub fn interiors_intersect(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k].max(other.min[k]) < self.max[k].min(other.max[k]) - EPS)
    }

    pub fn contains(&self, inner: &Aabb, eps: f64) -> bool {
        (0..3).all(|k| inner.min[k] >= self.min[k] - eps && inner.max[k] <= self.max[k] + eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_footprint() {
        let b = Aabb::from_placement([2.0, 1.0, 0.5], [1.0, 0.0, 1.0], Cardinal::East);
        assert_eq!(b.footprint(), Rect { min_x: 0.75, min_z: 0.0, max_x: 1.25, max_z: 2.0 });
        assert_eq!(b.top(), 1.0);
    }

    #[test]
    fn touching_is_not_intersecting() {
        let a = Aabb { min: [0.0; 3], max: [1.0; 3] };
        let b = Aabb { min: [1.0, 0.0, 0.0], max: [2.0, 1.0, 1.0] };
        assert!(!a.interiors_intersect(&b));
        let c = Aabb { min: [0.9, 0.0, 0.0], max: [2.0, 1.0, 1.0] };
        assert!(a.interiors_intersect(&c));
    }
}
