//! Oriented 3D boxes.
//!
//! A box is centered at its geometric center. `l` runs along the heading
//! (local x), `w` across it (local y), `h` vertically.

use crate::error::GeometryError;
use crate::geometry::{Pose, Vec2, Vec3};
use crate::scalar::{normalize_angle, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxSize<T> {
    pub h: T,
    pub w: T,
    pub l: T,
}

impl<T: Real> BoxSize<T> {
    pub fn new(h: T, w: T, l: T) -> Self {
        Self { h, w, l }
    }

    pub fn from_f64(h: f64, w: f64, l: f64) -> Self {
        Self::new(T::lit(h), T::lit(w), T::lit(l))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox<T> {
    pub center: Vec3<T>,
    pub size: BoxSize<T>,
    pub yaw: T,
    pub confidence: T,
}

impl<T: Real> OrientedBox<T> {
    /// Checked constructor: sizes must be positive and finite, confidence
    /// within `[0, 1]`.
    pub fn new(center: Vec3<T>, size: BoxSize<T>, yaw: T, confidence: T) -> Result<Self, GeometryError> {
        let b = Self {
            center,
            size,
            yaw: normalize_angle(yaw),
            confidence,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let BoxSize { h, w, l } = self.size;
        if !(h > T::zero() && w > T::zero() && l > T::zero()) || !(h.is_finite() && w.is_finite() && l.is_finite())
        {
            return Err(GeometryError::NonPositiveSize {
                h: h.as_f64(),
                w: w.as_f64(),
                l: l.as_f64(),
            });
        }
        if !(self.confidence >= T::zero() && self.confidence <= T::one()) {
            return Err(GeometryError::ConfidenceOutOfRange(self.confidence.as_f64()));
        }
        if !self.center.is_finite() || !self.yaw.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(())
    }

    pub fn z_min(&self) -> T {
        self.center.z - self.size.h * T::lit(0.5)
    }

    pub fn z_max(&self) -> T {
        self.center.z + self.size.h * T::lit(0.5)
    }

    pub fn volume(&self) -> T {
        self.size.h * self.size.w * self.size.l
    }

    pub fn bev_area(&self) -> T {
        self.size.w * self.size.l
    }

    /// Pose of the box frame in its parent frame.
    pub fn frame(&self) -> Pose<T> {
        Pose::new(self.center.x, self.center.y, self.center.z, self.yaw)
    }

    /// Coordinates of `p` in the box frame (origin at the box center).
    pub fn to_local(&self, p: Vec3<T>) -> Vec3<T> {
        self.frame().apply_inverse(p)
    }

    /// Closed containment test, with each half-extent grown by `margin`.
    pub fn contains(&self, p: Vec3<T>, margin: T) -> bool {
        let q = self.to_local(p);
        let half = T::lit(0.5);
        q.x.abs() <= self.size.l * half + margin
            && q.y.abs() <= self.size.w * half + margin
            && q.z.abs() <= self.size.h * half + margin
    }

    /// Closed bird's-eye containment (ignores height).
    pub fn contains_bev(&self, p: Vec2<T>, margin: T) -> bool {
        let q = self.to_local(Vec3::new(p.x, p.y, self.center.z));
        let half = T::lit(0.5);
        q.x.abs() <= self.size.l * half + margin && q.y.abs() <= self.size.w * half + margin
    }

    /// Footprint corners, counter-clockwise.
    pub fn corners_bev(&self) -> [Vec2<T>; 4] {
        let hl = self.size.l * T::lit(0.5);
        let hw = self.size.w * T::lit(0.5);
        let c = self.center.xy();
        [
            Vec2::new(hl, -hw),
            Vec2::new(hl, hw),
            Vec2::new(-hl, hw),
            Vec2::new(-hl, -hw),
        ]
        .map(|v| v.rotated(self.yaw) + c)
    }

    /// The same physical box expressed in the parent frame of `pose`.
    pub fn transformed(&self, pose: &Pose<T>) -> Self {
        Self {
            center: pose.apply(self.center),
            size: self.size,
            yaw: normalize_angle(self.yaw + pose.yaw),
            confidence: self.confidence,
        }
    }

    pub fn cast<U: Real>(&self) -> OrientedBox<U> {
        OrientedBox {
            center: self.center.cast(),
            size: BoxSize::new(U::lit(self.size.h.as_f64()), U::lit(self.size.w.as_f64()), U::lit(self.size.l.as_f64())),
            yaw: U::lit(self.yaw.as_f64()),
            confidence: U::lit(self.confidence.as_f64()),
        }
    }
}

/// Separating-axis overlap test between two footprints, each grown by `margin`.
pub fn footprints_overlap<T: Real>(a: &OrientedBox<T>, b: &OrientedBox<T>, margin: T) -> bool {
    let grow = |bx: &OrientedBox<T>| {
        let mut g = *bx;
        g.size.l += margin + margin;
        g.size.w += margin + margin;
        g.corners_bev()
    };
    let (ca, cb) = (grow(a), grow(b));
    for poly in [&ca, &cb] {
        for i in 0..4 {
            let e = poly[(i + 1) % 4] - poly[i];
            let axis = Vec2::new(-e.y, e.x);
            let project = |pts: &[Vec2<T>; 4]| {
                pts.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), p| {
                    let d = p.dot(axis);
                    (lo.min(d), hi.max(d))
                })
            };
            let (a0, a1) = project(&ca);
            let (b0, b1) = project(&cb);
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
    }
    true
}

/// Entry distance of a bird's-eye ray into a box footprint, or `None` if the
/// ray misses or starts inside. `dir` must be a unit vector.
pub fn ray_entry_bev<T: Real>(b: &OrientedBox<T>, origin: Vec2<T>, dir: Vec2<T>) -> Option<T> {
    let o = (origin - b.center.xy()).rotated(-b.yaw);
    let d = dir.rotated(-b.yaw);
    let half = [b.size.l * T::lit(0.5), b.size.w * T::lit(0.5)];
    let (oc, dc) = ([o.x, o.y], [d.x, d.y]);
    let mut t_near = T::neg_infinity();
    let mut t_far = T::infinity();
    for k in 0..2 {
        if dc[k] == T::zero() {
            if oc[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let t1 = (-half[k] - oc[k]) / dc[k];
        let t2 = (half[k] - oc[k]) / dc[k];
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        t_near = t_near.max(lo);
        t_far = t_far.min(hi);
    }
    (t_near <= t_far && t_near > T::zero()).then_some(t_near)
}
