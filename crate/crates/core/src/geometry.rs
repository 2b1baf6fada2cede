//! Planar primitives: points, axis-aligned rectangles and segment clipping.

use serde::{Deserialize, Serialize};

/// Parameter-space width below which a segment/rectangle overlap is treated
/// as a touch (corner graze) rather than a crossing.
pub const GRAZE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Rect { min, max }
    }

    pub fn from_bounds(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect::new(Point::new(x0, y0), Point::new(x1, y1))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// `min < max` componentwise.
    pub fn is_proper(&self) -> bool {
        self.min.x < self.max.x && self.min.y < self.max.y
    }

    /// Closed containment (boundary counts as inside).
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Open containment (boundary counts as outside).
    pub fn contains_interior(&self, p: &Point) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    /// True when the interiors of the two rectangles intersect.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.min.x < other.max.x
            && other.min.x < self.max.x
            && self.min.y < other.max.y
            && other.min.y < self.max.y
    }

    /// Parameter interval `(t_in, t_out)` within `[0, 1]` over which the
    /// segment `a + t (b - a)` runs through the open interior of the
    /// rectangle. Touching a corner or sliding along an edge is not a
    /// crossing.
    pub fn segment_interior_span(&self, a: &Point, b: &Point) -> Option<(f64, f64)> {
        let mut t_in = 0.0_f64;
        let mut t_out = 1.0_f64;
        for (start, delta, lo, hi) in [
            (a.x, b.x - a.x, self.min.x, self.max.x),
            (a.y, b.y - a.y, self.min.y, self.max.y),
        ] {
            if delta == 0.0 {
                if !(start > lo && start < hi) {
                    return None;
                }
                continue;
            }
            let mut t0 = (lo - start) / delta;
            let mut t1 = (hi - start) / delta;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_in = t_in.max(t0);
            t_out = t_out.min(t1);
            if t_out - t_in <= GRAZE_EPS {
                return None;
            }
        }
        Some((t_in, t_out))
    }

    pub fn segment_crosses(&self, a: &Point, b: &Point) -> bool {
        self.segment_interior_span(a, b).is_some()
    }
}

/// Wrap an angle in degrees to `(-180, 180]`.
pub fn wrap_degrees(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}
