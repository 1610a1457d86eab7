use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// A point or displacement in the plane, in meters (or m/s for velocities).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians from +x.
    #[inline]
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotate counter-clockwise by `angle` radians.
    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Axis-aligned rectangle with `min < max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn square(side: f64) -> Self {
        Self::new(Vec2::ZERO, Vec2::new(side, side))
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min.x < self.max.x && self.min.y < self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    /// Closest point of the (solid) rectangle to `p`.
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }

    /// Distance from `p` to the solid rectangle; zero inside.
    pub fn distance(&self, p: Vec2) -> f64 {
        p.distance(self.closest_point(p))
    }

    /// Shrink by `margin` on every side.
    pub fn inset(&self, margin: f64) -> Rect {
        Rect::new(
            self.min + Vec2::new(margin, margin),
            self.max - Vec2::new(margin, margin),
        )
    }
}

/// Solid disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        (p.distance(self.center) - self.radius).max(0.0)
    }

    pub fn bounding_rect(&self) -> Rect {
        let r = Vec2::new(self.radius, self.radius);
        Rect::new(self.center - r, self.center + r)
    }
}

/// Ray/disc intersection.
///
/// Returns the smallest nonnegative `t` with `|origin + t·dir − center| = radius`,
/// `Some(0.0)` when the origin lies inside the disc and `None` on a miss.
/// `dir` must be unit length.
pub fn ray_circle(origin: Vec2, dir: Vec2, circle: &Circle) -> Option<f64> {
    let oc = origin - circle.center;
    let c = oc.norm_sq() - circle.radius * circle.radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(dir);
    if b >= 0.0 {
        // Outside and pointing away.
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    // Numerically stable smaller root: t = c / (−b + sqrt(disc)).
    let t = c / (-b + disc.sqrt());
    Some(t.max(0.0))
}

/// Ray/rectangle intersection by the slab method.
///
/// Returns the entry parameter, `Some(0.0)` when the origin is inside and
/// `None` when the ray misses. `dir` must be unit length.
pub fn ray_rect(origin: Vec2, dir: Vec2, rect: &Rect) -> Option<f64> {
    if rect.contains(origin) {
        return Some(0.0);
    }
    let mut t_enter = 0.0_f64;
    let mut t_exit = f64::INFINITY;
    for (o, d, lo, hi) in [
        (origin.x, dir.x, rect.min.x, rect.max.x),
        (origin.y, dir.y, rect.min.y, rect.max.y),
    ] {
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let inv = 1.0 / d;
            let (t0, t1) = {
                let a = (lo - o) * inv;
                let b = (hi - o) * inv;
                if a < b {
                    (a, b)
                } else {
                    (b, a)
                }
            };
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
            if t_enter > t_exit {
                return None;
            }
        }
    }
    Some(t_enter)
}

/// Distance along a ray from a point inside `bounds` to its boundary.
pub fn ray_exit_rect(origin: Vec2, dir: Vec2, bounds: &Rect) -> f64 {
    let mut t = f64::INFINITY;
    if dir.x > 0.0 {
        t = t.min((bounds.max.x - origin.x) / dir.x);
    } else if dir.x < 0.0 {
        t = t.min((bounds.min.x - origin.x) / dir.x);
    }
    if dir.y > 0.0 {
        t = t.min((bounds.max.y - origin.y) / dir.y);
    } else if dir.y < 0.0 {
        t = t.min((bounds.min.y - origin.y) / dir.y);
    }
    t.max(0.0)
}
