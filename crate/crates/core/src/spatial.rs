//! Uniform-grid fixed-radius neighbor search.

use std::collections::HashMap;

use crate::geometry::Vec3;
use crate::scalar::Real;

type Cell = (i64, i64, i64);

/// Points bucketed into cubic cells whose side equals the query radius, so
/// every neighbor within the radius lies in the 27 surrounding cells.
pub struct UniformGrid<T> {
    cell: T,
    buckets: HashMap<Cell, Vec<usize>>,
}

impl<T: Real> UniformGrid<T> {
    pub fn build(points: &[Vec3<T>], cell: T) -> Self {
        assert!(cell > T::zero(), "grid cell size must be positive");
        let mut buckets: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(cell, *p)).or_default().push(i);
        }
        Self { cell, buckets }
    }

    fn key(cell: T, p: Vec3<T>) -> Cell {
        let f = |v: T| (v / cell).floor().to_i64().unwrap_or(i64::MAX);
        (f(p.x), f(p.y), f(p.z))
    }

    /// Candidate indices in the 27 cells around `p`, ascending.
    pub fn candidates(&self, p: Vec3<T>) -> Vec<usize> {
        let (cx, cy, cz) = Self::key(self.cell, p);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(b) = self.buckets.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend_from_slice(b);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// All index pairs `(i, j)`, `i < j`, with `accept(i, j)` and distance
/// strictly below `radius`. Returns the sorted pairs and the number of
/// distance evaluations performed.
pub fn pairs_within<T: Real>(
    points: &[Vec3<T>],
    radius: T,
    mut accept: impl FnMut(usize, usize) -> bool,
) -> (Vec<(usize, usize)>, usize) {
    let grid = UniformGrid::build(points, radius);
    let r2 = radius * radius;
    let mut pairs = Vec::new();
    let mut checks = 0usize;
    for (i, p) in points.iter().enumerate() {
        for j in grid.candidates(*p) {
            if j <= i || !accept(i, j) {
                continue;
            }
            checks += 1;
            if p.distance_squared(points[j]) < r2 {
                pairs.push((i, j));
            }
        }
    }
    (pairs, checks)
}
