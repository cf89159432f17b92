//! Vectors and planar-yaw poses.
//!
//! Poses carry four degrees of freedom: translation `(x, y, z)` and a yaw
//! about the vertical axis. Roll and pitch are always zero, so a pose is the
//! homogeneous transform
//!
//! ```text
//! | cos -sin  0  x |
//! | sin  cos  0  y |
//! |  0    0   1  z |
//! |  0    0   0  1 |
//! ```

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::scalar::{angle_diff, normalize_angle, Real};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn rotated(self, yaw: T) -> Self {
        let (s, c) = yaw.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

/// A point or displacement in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_f64(x: f64, y: f64, z: f64) -> Self {
        Self::new(T::lit(x), T::lit(y), T::lit(z))
    }

    pub fn xy(self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn distance_squared(self, o: Self) -> T {
        (self - o).norm_squared()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Arithmetic mean; `None` for an empty iterator.
    pub fn mean<I: IntoIterator<Item = Self>>(points: I) -> Option<Self> {
        let mut acc = Self::zero();
        let mut n = 0usize;
        for p in points {
            acc += p;
            n += 1;
        }
        (n > 0).then(|| acc / T::from_usize_lossy(n))
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.as_f64()),
            U::lit(self.y.as_f64()),
            U::lit(self.z.as_f64()),
        )
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    fn div(self, k: T) -> Self {
        Self::new(self.x / k, self.y / k, self.z / k)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Rigid transform with yaw-only rotation. `yaw` is kept in `[-π, π)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub yaw: T,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn new(x: T, y: T, z: T, yaw: T) -> Self {
        Self {
            x,
            y,
            z,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn from_f64(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(T::lit(x), T::lit(y), T::lit(z), T::lit(yaw))
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn translation(&self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let t = self.apply(other.translation());
        Self::new(t.x, t.y, t.z, self.yaw + other.yaw)
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.yaw.sin_cos();
        // -Rᵀ t
        let x = -(c * self.x + s * self.y);
        let y = -(-s * self.x + c * self.y);
        Self::new(x, y, -self.z, -self.yaw)
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(
            c * p.x - s * p.y + self.x,
            s * p.x + c * p.y + self.y,
            p.z + self.z,
        )
    }

    /// Maps a point from the parent frame into this pose's local frame.
    pub fn apply_inverse(&self, p: Vec3<T>) -> Vec3<T> {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.translation();
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    /// Rotates a direction without translating it.
    pub fn rotate(&self, v: Vec3<T>) -> Vec3<T> {
        let r = v.xy().rotated(self.yaw);
        Vec3::new(r.x, r.y, v.z)
    }

    /// Component-wise comparison, with yaw compared on the circle.
    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        (self.x - other.x).abs() <= tol
            && (self.y - other.y).abs() <= tol
            && (self.z - other.z).abs() <= tol
            && angle_diff(self.yaw, other.yaw).abs() <= tol
    }

    pub fn cast<U: Real>(self) -> Pose<U> {
        Pose::new(
            U::lit(self.x.as_f64()),
            U::lit(self.y.as_f64()),
            U::lit(self.z.as_f64()),
            U::lit(self.yaw.as_f64()),
        )
    }
}

pub fn pose_compose<T: Real>(a: &Pose<T>, b: &Pose<T>) -> Pose<T> {
    a.compose(b)
}

/// Transform taking coordinates in `other`'s frame into `ego`'s frame:
/// `ego⁻¹ ∘ other`.
pub fn relative_pose<T: Real>(ego: &Pose<T>, other: &Pose<T>) -> Pose<T> {
    ego.inverse().compose(other)
}
