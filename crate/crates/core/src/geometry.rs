//! Collision and occlusion primitives with ray and sphere queries.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

type V3 = Vector3<f64>;

const RAY_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[V3; 3]", into = "[V3; 3]")]
pub struct Triangle {
    pub a: V3,
    pub b: V3,
    pub c: V3,
}

impl From<[V3; 3]> for Triangle {
    fn from(v: [V3; 3]) -> Self {
        Triangle { a: v[0], b: v[1], c: v[2] }
    }
}

impl From<Triangle> for [V3; 3] {
    fn from(t: Triangle) -> Self {
        [t.a, t.b, t.c]
    }
}

impl Triangle {
    pub fn new(a: V3, b: V3, c: V3) -> Self {
        Self { a, b, c }
    }

    /// Möller–Trumbore; returns the ray parameter of a hit strictly ahead of the origin.
    pub fn ray_intersect(&self, origin: &V3, dir: &V3) -> Option<f64> {
        let e1 = self.b - self.a;
        let e2 = self.c - self.a;
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < RAY_EPS * e1.norm() * e2.norm() {
            return None;
        }
        let inv = 1.0 / det;
        let s = origin - self.a;
        let u = s.dot(&p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(&q) * inv;
        (t > 0.0).then_some(t)
    }

    /// Closest point on the triangle to `p`.
    pub fn closest_point(&self, p: &V3) -> V3 {
        let (a, b, c) = (self.a, self.b, self.c);
        let ab = b - a;
        let ac = c - a;
        let ap = p - a;
        let d1 = ab.dot(&ap);
        let d2 = ac.dot(&ap);
        if d1 <= 0.0 && d2 <= 0.0 {
            return a;
        }
        let bp = p - b;
        let d3 = ab.dot(&bp);
        let d4 = ac.dot(&bp);
        if d3 >= 0.0 && d4 <= d3 {
            return b;
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            return a + ab * (d1 / (d1 - d3));
        }
        let cp = p - c;
        let d5 = ab.dot(&cp);
        let d6 = ac.dot(&cp);
        if d6 >= 0.0 && d5 <= d6 {
            return c;
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            return a + ac * (d2 / (d2 - d6));
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
        }
        let denom = 1.0 / (va + vb + vc);
        a + ab * (vb * denom) + ac * (vc * denom)
    }

    pub fn is_finite(&self) -> bool {
        [self.a, self.b, self.c].iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: V3,
    pub max: V3,
}

impl Aabb {
    pub fn new(min: V3, max: V3) -> Self {
        Self { min, max }
    }

    pub fn from_center(center: V3, half: V3) -> Self {
        Self { min: center - half, max: center + half }
    }

    /// Slab test. A ray starting inside reports distance 0.
    pub fn ray_intersect(&self, origin: &V3, dir: &V3) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for k in 0..3 {
            if dir[k] == 0.0 {
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[k];
            let mut t0 = (self.min[k] - origin[k]) * inv;
            let mut t1 = (self.max[k] - origin[k]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
            if t_near > t_far {
                return None;
            }
        }
        if t_far < 0.0 {
            None
        } else if t_near > 0.0 {
            Some(t_near)
        } else {
            Some(0.0)
        }
    }

    pub fn closest_point(&self, p: &V3) -> V3 {
        V3::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y), p.z.clamp(self.min.z, self.max.z))
    }

    pub fn is_valid(&self) -> bool {
        self.min.iter().chain(self.max.iter()).all(|x| x.is_finite()) && (0..3).all(|k| self.min[k] <= self.max[k])
    }
}

/// Box with arbitrary orientation: `axes` columns are the local axes in the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: V3,
    pub axes: Matrix3<f64>,
    pub half_extents: V3,
}

impl OrientedBox {
    fn local(&self) -> Aabb {
        Aabb::from_center(V3::zeros(), self.half_extents)
    }

    fn local_point(&self, p: &V3) -> V3 {
        self.axes.transpose() * (p - self.center)
    }

    pub fn ray_intersect(&self, origin: &V3, dir: &V3) -> Option<f64> {
        let o = self.local_point(origin);
        let d = self.axes.transpose() * dir;
        self.local().ray_intersect(&o, &d)
    }

    pub fn closest_point(&self, p: &V3) -> V3 {
        let local = self.local().closest_point(&self.local_point(p));
        self.center + self.axes * local
    }

    pub fn contains(&self, p: &V3) -> bool {
        let l = self.local_point(p);
        (0..3).all(|k| l[k].abs() <= self.half_extents[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_hit_and_miss() {
        let t = Triangle::new(V3::new(2.0, -1.0, -1.0), V3::new(2.0, 1.0, -1.0), V3::new(2.0, 0.0, 1.0));
        assert_eq!(t.ray_intersect(&V3::zeros(), &V3::x()), Some(2.0));
        assert_eq!(t.ray_intersect(&V3::zeros(), &-V3::x()), None);
        assert_eq!(t.ray_intersect(&V3::new(0.0, 5.0, 0.0), &V3::x()), None);
        // parallel to the plane
        assert_eq!(t.ray_intersect(&V3::zeros(), &V3::y()), None);
    }

    #[test]
    fn slab_test_distances() {
        let b = Aabb::from_center(V3::new(5.0, 0.0, 0.0), V3::repeat(0.5));
        assert_eq!(b.ray_intersect(&V3::zeros(), &V3::x()), Some(4.5));
        assert_eq!(b.ray_intersect(&V3::zeros(), &-V3::x()), None);
        assert_eq!(b.ray_intersect(&V3::new(5.0, 0.0, 0.0), &V3::x()), Some(0.0));
        assert_eq!(b.ray_intersect(&V3::new(0.0, 2.0, 0.0), &V3::x()), None);
    }

    #[test]
    fn closest_points() {
        let t = Triangle::new(V3::zeros(), V3::x(), V3::y());
        assert!((t.closest_point(&V3::new(0.2, 0.2, 3.0)) - V3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        assert_eq!(t.closest_point(&V3::new(-1.0, -1.0, 0.0)), V3::zeros());
        let e = t.closest_point(&V3::new(1.0, 1.0, 0.0));
        assert!((e - V3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
        let b = Aabb::new(V3::zeros(), V3::repeat(1.0));
        assert_eq!(b.closest_point(&V3::new(2.0, 0.5, -1.0)), V3::new(1.0, 0.5, 0.0));
    }

    #[test]
    fn oriented_box_matches_rotated_aabb() {
        let yaw = 0.7f64;
        let (s, c) = yaw.sin_cos();
        let axes = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        let obb = OrientedBox { center: V3::new(3.0, 1.0, 0.0), axes, half_extents: V3::new(0.5, 0.2, 0.3) };
        // approach along the box's own x axis
        let dir = axes.column(0).into_owned();
        let origin = obb.center - dir * 4.0;
        let t = obb.ray_intersect(&origin, &dir).unwrap();
        assert!((t - 3.5).abs() < 1e-12);
        assert!(obb.contains(&obb.center));
        let far = obb.center + axes.column(1).into_owned() * 2.0;
        let cp = obb.closest_point(&far);
        assert!((cp - (obb.center + axes.column(1).into_owned() * 0.2)).norm() < 1e-12);
    }
}
