//! Leg forward kinematics, resting-plane search and planar registration.

use crate::gait::LEGS;
use crate::scalar::Scalar;

use super::morphology::{Leg, Morphology};

pub type Point3<S> = [S; 3];

/// Foot (or distal end) position of a leg in the body frame.
///
/// The swing joint rotates the leg about the vertical axis at the hip. The
/// femur pitches up by the femur angle; the tibia hangs vertically when the
/// tibia angle equals the femur angle. A zero-length segment removes itself
/// and every distal segment.
pub fn foot_position<S: Scalar>(leg: &Leg<S>, angles: [S; 3]) -> Option<Point3<S>> {
    if !leg.present || leg.coxa <= S::zero() {
        return None;
    }
    let [swing, femur_angle, tibia_angle] = angles;
    let heading = leg.yaw + swing;
    let (dir_y, dir_x) = heading.sin_cos();
    let mut reach = leg.coxa;
    let mut z = S::zero();
    if leg.femur > S::zero() {
        reach = reach + leg.femur * femur_angle.cos();
        z = z + leg.femur * femur_angle.sin();
        let tibia = leg.effective_tibia();
        if tibia > S::zero() {
            let tilt = femur_angle - tibia_angle;
            reach = reach + tibia * tilt.sin();
            z = z - tibia * tilt.cos();
        }
    }
    Some([
        leg.attachment[0] + reach * dir_x,
        leg.attachment[1] + reach * dir_y,
        z,
    ])
}

/// Positions of the feet that can bear load; folded or missing legs are `None`.
pub fn feet<S: Scalar>(m: &Morphology<S>, angles: &[[S; 3]; LEGS]) -> [Option<Point3<S>>; LEGS] {
    std::array::from_fn(|i| {
        let leg = &m.legs[i];
        if leg.bears_load() {
            foot_position(leg, angles[i])
        } else {
            None
        }
    })
}

/// Ground plane seen from the body frame: `z = slope_x·x + slope_y·y + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane<S> {
    pub slope_x: S,
    pub slope_y: S,
    pub offset: S,
}

impl<S: Scalar> Plane<S> {
    #[inline]
    pub fn height_at(&self, x: S, y: S) -> S {
        self.slope_x * x + self.slope_y * y + self.offset
    }

    /// Vertical clearance of a point above the plane.
    #[inline]
    pub fn clearance(&self, p: &Point3<S>) -> S {
        p[2] - self.height_at(p[0], p[1])
    }

    /// (roll, pitch) in radians: the tilt of the body relative to the ground.
    pub fn orientation(&self) -> (S, S) {
        (self.slope_y.atan(), self.slope_x.atan())
    }

    fn through(a: &Point3<S>, b: &Point3<S>, c: &Point3<S>) -> Option<Self> {
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if det.abs() <= geometric_tolerance::<S>() * geometric_tolerance::<S>() {
            return None;
        }
        let dz_b = b[2] - a[2];
        let dz_c = c[2] - a[2];
        let slope_x = (dz_b * (c[1] - a[1]) - dz_c * (b[1] - a[1])) / det;
        let slope_y = ((b[0] - a[0]) * dz_c - (c[0] - a[0]) * dz_b) / det;
        Some(Self {
            slope_x,
            slope_y,
            offset: a[2] - slope_x * a[0] - slope_y * a[1],
        })
    }
}

#[inline]
pub(crate) fn geometric_tolerance<S: Scalar>() -> S {
    (S::epsilon() * S::lit(1e3)).max(S::lit(1e-10))
}

fn inside_triangle<S: Scalar>(p: [S; 2], a: &Point3<S>, b: &Point3<S>, c: &Point3<S>) -> bool {
    let cross = |o: &Point3<S>, u: &Point3<S>| (u[0] - o[0]) * (p[1] - o[1]) - (u[1] - o[1]) * (p[0] - o[0]);
    let d1 = cross(a, b);
    let d2 = cross(b, c);
    let d3 = cross(c, a);
    let tol = geometric_tolerance::<S>() * geometric_tolerance::<S>();
    let has_neg = d1 < -tol || d2 < -tol || d3 < -tol;
    let has_pos = d1 > tol || d2 > tol || d3 > tol;
    !(has_neg && has_pos)
}

/// Resting plane of the body: the facet of the lower convex hull of the feet
/// that lies under the mass center. `None` when fewer than three feet exist
/// or the mass center projects outside their hull.
pub fn resting_plane<S: Scalar>(feet: &[Option<Point3<S>>; LEGS], com: [S; 2]) -> Option<Plane<S>> {
    let pts: Vec<&Point3<S>> = feet.iter().flatten().collect();
    if pts.len() < 3 {
        return None;
    }
    let tol = geometric_tolerance::<S>();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            for k in j + 1..pts.len() {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                if !inside_triangle(com, a, b, c) {
                    continue;
                }
                let Some(plane) = Plane::through(a, b, c) else {
                    continue;
                };
                if pts.iter().all(|p| plane.clearance(p) >= -tol) {
                    return Some(plane);
                }
            }
        }
    }
    None
}

/// Least-squares plane through the given points; `None` if they are
/// collinear in the horizontal projection.
pub fn fit_plane<S: Scalar>(points: &[Point3<S>]) -> Option<Plane<S>> {
    if points.len() < 3 {
        return None;
    }
    let n = S::from_usize(points.len())?;
    let mean = |axis: usize| points.iter().map(|p| p[axis]).sum::<S>() / n;
    let (mx, my, mz) = (mean(0), mean(1), mean(2));
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (S::zero(), S::zero(), S::zero(), S::zero(), S::zero());
    for p in points {
        let (dx, dy, dz) = (p[0] - mx, p[1] - my, p[2] - mz);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
        sxz = sxz + dx * dz;
        syz = syz + dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx + syy) * (sxx + syy);
    if det <= scale * geometric_tolerance::<S>() {
        return None;
    }
    let slope_x = (sxz * syy - syz * sxy) / det;
    let slope_y = (syz * sxx - sxz * sxy) / det;
    Some(Plane {
        slope_x,
        slope_y,
        offset: mz - slope_x * mx - slope_y * my,
    })
}

/// Planar rigid motion `q ≈ R(angle)·p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid2<S> {
    pub angle: S,
    pub translation: [S; 2],
}

impl<S: Scalar> Rigid2<S> {
    pub fn identity() -> Self {
        Self {
            angle: S::zero(),
            translation: [S::zero(); 2],
        }
    }

    #[inline]
    pub fn apply(&self, p: [S; 2]) -> [S; 2] {
        let (s, c) = self.angle.sin_cos();
        [
            c * p[0] - s * p[1] + self.translation[0],
            s * p[0] + c * p[1] + self.translation[1],
        ]
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.angle.sin_cos();
        let [tx, ty] = self.translation;
        Self {
            angle: -self.angle,
            translation: [-(c * tx + s * ty), -(-s * tx + c * ty)],
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            angle: self.angle + other.angle,
            translation: self.apply(other.translation),
        }
    }
}

/// Closed-form least-squares rigid registration of `from` onto `to`.
/// Returns the motion and the RMS residual. A single pair yields a pure
/// translation.
pub fn register<S: Scalar>(from: &[[S; 2]], to: &[[S; 2]]) -> (Rigid2<S>, S) {
    debug_assert_eq!(from.len(), to.len());
    if from.is_empty() {
        return (Rigid2::identity(), S::zero());
    }
    let n = S::from_usize(from.len()).expect("small count");
    let centroid = |pts: &[[S; 2]]| {
        let (sx, sy) = pts.iter().fold((S::zero(), S::zero()), |(x, y), p| (x + p[0], y + p[1]));
        [sx / n, sy / n]
    };
    let (cp, cq) = (centroid(from), centroid(to));
    let angle = if from.len() == 1 {
        S::zero()
    } else {
        let (mut dot, mut cross) = (S::zero(), S::zero());
        for (p, q) in from.iter().zip(to) {
            let (px, py) = (p[0] - cp[0], p[1] - cp[1]);
            let (qx, qy) = (q[0] - cq[0], q[1] - cq[1]);
            dot = dot + px * qx + py * qy;
            cross = cross + px * qy - py * qx;
        }
        if dot == S::zero() && cross == S::zero() {
            S::zero()
        } else {
            cross.atan2(dot)
        }
    };
    let (s, c) = angle.sin_cos();
    let rotated = [c * cp[0] - s * cp[1], s * cp[0] + c * cp[1]];
    let motion = Rigid2 {
        angle,
        translation: [cq[0] - rotated[0], cq[1] - rotated[1]],
    };
    let sq: S = from
        .iter()
        .zip(to)
        .map(|(p, q)| {
            let r = motion.apply(*p);
            (r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2)
        })
        .sum();
    (motion, (sq / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::morphology::Morphology;
    use proptest::prelude::*;

    #[test]
    fn neutral_feet_sit_below_hips() {
        let m = Morphology::<f64>::default();
        for leg in &m.legs {
            let p = foot_position(leg, [0.0; 3]).unwrap();
            let hip = leg.attachment;
            let reach = ((p[0] - hip[0]).powi(2) + (p[1] - hip[1]).powi(2)).sqrt();
            assert!((reach - 0.12).abs() < 1e-12);
            assert!((p[2] + 0.12).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_length_segments_truncate_the_leg() {
        let mut leg = Morphology::<f64>::default().legs[0];
        leg.tibia_scale = 0.0;
        let p = foot_position(&leg, [0.0; 3]).unwrap();
        assert_eq!(p[2], 0.0);
        leg.femur = 0.0;
        leg.tibia_scale = 1.0;
        let q = foot_position(&leg, [0.0, 0.5, 0.5]).unwrap();
        assert_eq!(q[2], 0.0);
        leg.coxa = 0.0;
        assert!(foot_position(&leg, [0.0; 3]).is_none());
    }

    #[test]
    fn level_stance_gives_level_plane() {
        let m = Morphology::<f64>::default();
        let f = feet(&m, &[[0.0; 3]; LEGS]);
        let plane = resting_plane(&f, [0.0, 0.0]).unwrap();
        assert!(plane.slope_x.abs() < 1e-12 && plane.slope_y.abs() < 1e-12);
        assert!((plane.offset + 0.12).abs() < 1e-12);
    }

    #[test]
    fn mass_center_outside_hull_is_unstable() {
        let m = Morphology::<f64>::default();
        let f = feet(&m, &[[0.0; 3]; LEGS]);
        assert!(resting_plane(&f, [1.0, 0.0]).is_none());
        let mut two = f;
        for slot in two.iter_mut().skip(2) {
            *slot = None;
        }
        assert!(resting_plane(&two, [0.0, 0.0]).is_none());
    }

    #[test]
    fn plane_fit_recovers_tilt() {
        let pts: [[f64; 3]; 4] = [[0.0, 0.0, 0.1], [1.0, 0.0, 0.3], [0.0, 1.0, -0.4], [1.0, 1.0, -0.2]];
        let plane = fit_plane(&pts).unwrap();
        assert!((plane.slope_x - 0.2).abs() < 1e-12);
        assert!((plane.slope_y + 0.5).abs() < 1e-12);
        assert!((plane.offset - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_pair_registers_as_translation() {
        let (m, r) = register::<f64>(&[[0.1, 0.2]], &[[0.4, -0.1]]);
        assert_eq!(m.angle, 0.0);
        assert!((m.translation[0] - 0.3).abs() < 1e-12 && (m.translation[1] + 0.3).abs() < 1e-12);
        assert!(r < 1e-12);
    }

    proptest! {
        #[test]
        fn rigid_motion_is_recovered(
            angle in -1.0f64..1.0, tx in -0.3f64..0.3, ty in -0.3f64..0.3,
            pts in proptest::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 2..6)
        ) {
            let truth = Rigid2 { angle, translation: [tx, ty] };
            let from: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let spread = from.iter().map(|p| (p[0] - from[0][0]).abs() + (p[1] - from[0][1]).abs()).fold(0.0, f64::max);
            prop_assume!(spread > 1e-3);
            let to: Vec<[f64; 2]> = from.iter().map(|p| truth.apply(*p)).collect();
            let (est, residual) = register(&from, &to);
            prop_assert!(residual < 1e-6);
            prop_assert!((est.angle - angle).abs() < 1e-9);
            prop_assert!((est.translation[0] - tx).abs() < 1e-9 && (est.translation[1] - ty).abs() < 1e-9);
        }

        #[test]
        fn compose_with_inverse_is_identity(angle in -3.0f64..3.0, tx in -1.0f64..1.0, ty in -1.0f64..1.0, px in -1.0f64..1.0, py in -1.0f64..1.0) {
            let m = Rigid2 { angle, translation: [tx, ty] };
            let back = m.inverse().compose(&m).apply([px, py]);
            prop_assert!((back[0] - px).abs() < 1e-12 && (back[1] - py).abs() < 1e-12);
        }
    }
}
