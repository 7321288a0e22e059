//! Spherical geometry kernel.
//!
//! Signed areas of geodesic triangles on the unit sphere, the point-in-triangle
//! indicator used by the trapped-area formula, and accumulation of planar
//! winding angles along sampled paths on a great circle.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance on the scalar triple products used by the inside test.
pub const TRIPLE_TOL: f64 = 1e-10;
/// Pairs with `a·b <= -1 + ANTIPODAL_TOL` are treated as antipodal.
pub const ANTIPODAL_TOL: f64 = 1e-12;
/// Out-of-plane tolerance for samples handed to [`winding_angle`].
pub const PLANE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SphereError {
    #[error("cannot normalize a zero or non-finite vector")]
    ZeroVector,
    #[error("antipodal vertices in spherical triangle (dot = {dot})")]
    Antipodal { dot: f64 },
    #[error("degenerate spherical triangle (triple product {triple:e})")]
    Degenerate { triple: f64 },
    #[error("point lies on the boundary of the spherical triangle (triple product {triple:e})")]
    BoundaryAmbiguous { triple: f64 },
    #[error("path step {index} turns by {angle} rad, which is not below pi/2")]
    Aliasing { index: usize, angle: f64 },
    #[error("path sample {index} is {offset:e} out of the great-circle plane")]
    OffPlane { index: usize, offset: f64 },
}

/// A point of the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVec(Vec3);

impl UnitVec {
    pub fn new(v: Vec3) -> Result<Self, SphereError> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(SphereError::ZeroVector);
        }
        Ok(Self(v / n))
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Result<Self, SphereError> {
        Self::new(Vec3::new(x, y, z))
    }

    /// Wraps a vector the caller knows to be unit length.
    pub(crate) fn new_unchecked(v: Vec3) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-9);
        Self(v)
    }

    pub fn x_axis() -> Self {
        Self(Vec3::x())
    }
    pub fn y_axis() -> Self {
        Self(Vec3::y())
    }
    pub fn z_axis() -> Self {
        Self(Vec3::z())
    }

    #[inline]
    pub fn vec(&self) -> &Vec3 {
        &self.0
    }

    #[inline]
    pub fn dot(&self, other: &UnitVec) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn angle_to(&self, other: &UnitVec) -> f64 {
        self.0.cross(&other.0).norm().atan2(self.0.dot(&other.0))
    }
}

impl std::ops::Neg for UnitVec {
    type Output = UnitVec;
    fn neg(self) -> UnitVec {
        UnitVec(-self.0)
    }
}

impl TryFrom<[f64; 3]> for UnitVec {
    type Error = SphereError;
    fn try_from(v: [f64; 3]) -> Result<Self, SphereError> {
        UnitVec::from_xyz(v[0], v[1], v[2])
    }
}

impl From<UnitVec> for [f64; 3] {
    fn from(u: UnitVec) -> [f64; 3] {
        [u.0.x, u.0.y, u.0.z]
    }
}

fn check_pair(a: &UnitVec, b: &UnitVec) -> Result<(), SphereError> {
    let dot = a.dot(b);
    if dot <= -1.0 + ANTIPODAL_TOL {
        return Err(SphereError::Antipodal { dot });
    }
    Ok(())
}

/// Signed area of the minor geodesic triangle `(a, b, c)`.
///
/// Positive when the vertices run counterclockwise seen from outside the
/// sphere. The value lies in `(-2π, 2π)`; collinear vertices give zero.
pub fn oriented_area(a: &UnitVec, b: &UnitVec, c: &UnitVec) -> Result<f64, SphereError> {
    check_pair(a, b)?;
    check_pair(b, c)?;
    check_pair(c, a)?;
    let (a, b, c) = (a.vec(), b.vec(), c.vec());
    let triple = a.dot(&b.cross(c));
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    Ok(2.0 * triple.atan2(denom))
}

fn sign_with_tol(x: f64) -> Result<i32, SphereError> {
    if x.abs() < TRIPLE_TOL {
        Err(SphereError::BoundaryAmbiguous { triple: x })
    } else if x > 0.0 {
        Ok(1)
    } else {
        Ok(-1)
    }
}

/// Whether `s` lies strictly inside the minor spherical triangle `(a, b, c)`.
pub fn contains(a: &UnitVec, b: &UnitVec, c: &UnitVec, s: &UnitVec) -> Result<bool, SphereError> {
    check_pair(a, b)?;
    check_pair(b, c)?;
    check_pair(c, a)?;
    let orient = a.vec().dot(&b.vec().cross(c.vec()));
    if orient.abs() < TRIPLE_TOL {
        return Err(SphereError::Degenerate { triple: orient });
    }
    let orient = orient.signum() as i32;
    let s = s.vec();
    let sab = sign_with_tol(a.vec().cross(b.vec()).dot(s))?;
    let sbc = sign_with_tol(b.vec().cross(c.vec()).dot(s))?;
    let sca = sign_with_tol(c.vec().cross(a.vec()).dot(s))?;
    Ok(sab == orient && sbc == orient && sca == orient)
}

/// `sgn((a×b)·s)` when `s` is inside the triangle `(a, b, c)`, zero otherwise.
pub fn sigma(a: &UnitVec, b: &UnitVec, c: &UnitVec, s: &UnitVec) -> Result<i32, SphereError> {
    if !contains(a, b, c, s)? {
        return Ok(0);
    }
    sign_with_tol(a.vec().cross(b.vec()).dot(s.vec()))
}

/// An orthonormal pair spanning the plane of a great circle.
///
/// Angles are measured counterclockwise about `u × v`.
#[derive(Clone, Copy, Debug)]
pub struct PlaneBasis {
    pub u: Vec3,
    pub v: Vec3,
}

impl PlaneBasis {
    /// Basis of the plane orthogonal to `normal`, positively oriented about it.
    pub fn orthogonal_to(normal: &UnitVec) -> Self {
        let n = normal.vec();
        let seed = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = (seed - n * n.dot(&seed)).normalize();
        let v = n.cross(&u);
        Self { u, v }
    }

    pub fn normal(&self) -> Vec3 {
        self.u.cross(&self.v)
    }

    pub fn angle_of(&self, p: &Vec3) -> f64 {
        p.dot(&self.v).atan2(p.dot(&self.u))
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Continuously accumulated turning angle of a sampled path on a great circle.
pub fn winding_angle(path: &[UnitVec], basis: &PlaneBasis) -> Result<f64, SphereError> {
    let normal = basis.normal();
    for (index, p) in path.iter().enumerate() {
        let offset = p.vec().dot(&normal);
        if offset.abs() > PLANE_TOL {
            return Err(SphereError::OffPlane { index, offset });
        }
    }
    let mut total = 0.0;
    for (index, w) in path.windows(2).enumerate() {
        let (p, q) = (w[0].vec(), w[1].vec());
        let step = p.cross(q).dot(&normal).atan2(p.dot(q));
        if step.abs() >= FRAC_PI_2 {
            return Err(SphereError::Aliasing {
                index: index + 1,
                angle: step,
            });
        }
        total += step;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uv(x: f64, y: f64, z: f64) -> UnitVec {
        UnitVec::from_xyz(x, y, z).unwrap()
    }

    pub(crate) fn random_unit(rng: &mut impl Rng) -> UnitVec {
        loop {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return UnitVec::new(v).unwrap();
            }
        }
    }

    #[test]
    fn octant_has_area_half_pi() {
        let a = oriented_area(&UnitVec::x_axis(), &UnitVec::y_axis(), &UnitVec::z_axis()).unwrap();
        assert_abs_diff_eq!(a, FRAC_PI_2, epsilon = 1e-14);
        let b = oriented_area(&UnitVec::x_axis(), &UnitVec::z_axis(), &UnitVec::y_axis()).unwrap();
        assert_abs_diff_eq!(b, -FRAC_PI_2, epsilon = 1e-14);
    }

    #[test]
    fn collapsed_triangle_has_zero_area() {
        let a = uv(1.0, 2.0, 3.0);
        let b = uv(-1.0, 0.5, 0.2);
        assert_eq!(oriented_area(&a, &b, &b).unwrap(), 0.0);
    }

    #[test]
    fn antipodal_pair_is_rejected() {
        let a = UnitVec::x_axis();
        let r = oriented_area(&a, &-a, &UnitVec::z_axis());
        assert!(matches!(r, Err(SphereError::Antipodal { .. })));
    }

    #[test]
    fn contains_octant_center() {
        let (x, y, z) = (UnitVec::x_axis(), UnitVec::y_axis(), UnitVec::z_axis());
        let s = uv(1.0, 1.0, 1.0);
        assert!(contains(&x, &y, &z, &s).unwrap());
        assert!(!contains(&x, &y, &z, &-s).unwrap());
        // cyclic rotations and reversed orientation describe the same region
        assert!(contains(&y, &z, &x, &s).unwrap());
        assert!(contains(&x, &z, &y, &s).unwrap());
    }

    #[test]
    fn sigma_examples() {
        let (x, y, z) = (UnitVec::x_axis(), UnitVec::y_axis(), UnitVec::z_axis());
        assert_eq!(sigma(&x, &y, &z, &uv(1.0, 1.0, 1.0)).unwrap(), 1);
        let outside = uv(1.0, 1.0, -5.0);
        assert!(!contains(&x, &y, &z, &outside).unwrap());
        assert_eq!(sigma(&x, &y, &z, &outside).unwrap(), 0);
        assert_eq!(sigma(&y, &x, &z, &uv(1.0, 1.0, 1.0)).unwrap(), -1);
    }

    #[test]
    fn boundary_point_is_ambiguous() {
        let (x, y, z) = (UnitVec::x_axis(), UnitVec::y_axis(), UnitVec::z_axis());
        let on_edge = uv(1.0, 1.0, 0.0);
        assert!(matches!(
            contains(&x, &y, &z, &on_edge),
            Err(SphereError::BoundaryAmbiguous { .. })
        ));
    }

    /// Independent inside test: the boundary of the triangle, viewed from `s`,
    /// winds once around it iff `s` is inside. Angles are taken in the tangent
    /// plane at `s` after central projection.
    fn winding_oracle(a: &UnitVec, b: &UnitVec, c: &UnitVec, s: &UnitVec) -> bool {
        let basis = PlaneBasis::orthogonal_to(s);
        let mut total = 0.0;
        let corners = [a, b, c, a];
        for w in corners.windows(2) {
            let (p, q) = (w[0].vec(), w[1].vec());
            let steps = 200;
            let mut prev: Option<f64> = None;
            for i in 0..=steps {
                let t = i as f64 / steps as f64;
                // geodesic interpolation via normalized chord
                let r = (p * (1.0 - t) + q * t).normalize();
                let ang = basis.angle_of(&r);
                if let Some(pa) = prev {
                    total += wrap_angle(ang - pa);
                }
                prev = Some(ang);
            }
        }
        // the projected loop only sees the near hemisphere correctly; the
        // minor triangle around an interior s lies in it
        let near = a.dot(s) > 0.0 && b.dot(s) > 0.0 && c.dot(s) > 0.0;
        near && total.abs() > PI
    }

    #[test]
    fn contains_matches_winding_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        let mut inside = 0;
        while checked < 4000 {
            let (a, b, c, s) = (
                random_unit(&mut rng),
                random_unit(&mut rng),
                random_unit(&mut rng),
                random_unit(&mut rng),
            );
            // keep triangles comfortably minor so the oracle's hemisphere
            // projection is valid
            if a.dot(&b) < 0.0 || b.dot(&c) < 0.0 || c.dot(&a) < 0.0 {
                continue;
            }
            let Ok(got) = contains(&a, &b, &c, &s) else { continue };
            let tri = [(a, b), (b, c), (c, a)];
            if tri.iter().any(|(p, q)| p.vec().cross(q.vec()).normalize().dot(s.vec()).abs() < 1e-3) {
                continue;
            }
            assert_eq!(got, winding_oracle(&a, &b, &c, &s));
            inside += got as usize;
            checked += 1;
        }
        assert!(inside > 20);
    }

    #[test]
    fn area_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = uv(0.9, 0.1, 0.2);
        let b = uv(-0.2, 1.0, 0.3);
        let c = uv(0.1, 0.3, 1.0);
        let area = oriented_area(&a, &b, &c).unwrap();
        let samples = 1_000_000;
        let mut hits = 0usize;
        for _ in 0..samples {
            let s = random_unit(&mut rng);
            if contains(&a, &b, &c, &s).unwrap_or(false) {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        let estimate = 4.0 * PI * p;
        let sigma_mc = 4.0 * PI * (p * (1.0 - p) / samples as f64).sqrt();
        assert!((estimate - area.abs()).abs() < 3.0 * sigma_mc, "{estimate} vs {area}");
    }

    #[test]
    fn winding_examples() {
        let basis = PlaneBasis { u: Vec3::x(), v: Vec3::y() };
        let constant = vec![UnitVec::x_axis(); 5];
        assert_eq!(winding_angle(&constant, &basis).unwrap(), 0.0);

        let quarter: Vec<UnitVec> = (0..=9)
            .map(|i| {
                let t = (i as f64 * 10.0).to_radians();
                uv(t.cos(), t.sin(), 0.0)
            })
            .collect();
        assert_abs_diff_eq!(winding_angle(&quarter, &basis).unwrap(), FRAC_PI_2, epsilon = 1e-12);

        let n = 700;
        let turns: Vec<UnitVec> = (0..=n)
            .map(|i| {
                let t = 3.5 * PI * i as f64 / n as f64;
                uv(t.cos(), t.sin(), 0.0)
            })
            .collect();
        assert_abs_diff_eq!(winding_angle(&turns, &basis).unwrap(), 3.5 * PI, epsilon = 1e-10);
    }

    #[test]
    fn winding_rejects_aliasing_and_off_plane() {
        let basis = PlaneBasis { u: Vec3::x(), v: Vec3::y() };
        let jumpy = vec![UnitVec::x_axis(), UnitVec::y_axis()];
        assert!(matches!(winding_angle(&jumpy, &basis), Err(SphereError::Aliasing { .. })));
        let lifted = vec![UnitVec::x_axis(), uv(1.0, 0.1, 0.1)];
        assert!(matches!(winding_angle(&lifted, &basis), Err(SphereError::OffPlane { .. })));
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit() -> impl Strategy<Value = UnitVec> {
            (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
                .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-2)
                .prop_map(|(x, y, z)| UnitVec::from_xyz(x, y, z).unwrap())
        }

        proptest! {
            #[test]
            fn antisymmetric_and_cyclic(a in unit(), b in unit(), c in unit()) {
                prop_assume!(a.dot(&b) > -0.99 && b.dot(&c) > -0.99 && c.dot(&a) > -0.99);
                let abc = oriented_area(&a, &b, &c).unwrap();
                let acb = oriented_area(&a, &c, &b).unwrap();
                let bca = oriented_area(&b, &c, &a).unwrap();
                prop_assert!((abc + acb).abs() < 1e-12);
                prop_assert!((abc - bca).abs() < 1e-12);
            }

            #[test]
            fn area_is_additive_in_a_hemisphere(a in unit(), b in unit(), c in unit(), d in unit()) {
                let up = |p: UnitVec| if p.vec().z < 0.0 { -p } else { p };
                let (a, b, c, d) = (up(a), up(b), up(c), up(d));
                prop_assume!([a, b, c, d].iter().all(|p| p.vec().z > 0.05));
                let whole = oriented_area(&a, &b, &c).unwrap();
                let parts = oriented_area(&a, &b, &d).unwrap()
                    + oriented_area(&b, &c, &d).unwrap()
                    + oriented_area(&c, &a, &d).unwrap();
                prop_assert!((whole - parts).abs() < 1e-10);
            }

            #[test]
            fn contains_is_cyclic(a in unit(), b in unit(), c in unit(), s in unit()) {
                if let Ok(x) = contains(&a, &b, &c, &s) {
                    prop_assert_eq!(x, contains(&b, &c, &a, &s).unwrap());
                    prop_assert_eq!(x, contains(&c, &a, &b, &s).unwrap());
                }
            }

            #[test]
            fn winding_is_additive(start in -3.0f64..3.0, d1 in -6.0f64..6.0, d2 in -6.0f64..6.0) {
                let basis = PlaneBasis { u: Vec3::x(), v: Vec3::y() };
                let sample = |t0: f64, t1: f64| -> Vec<UnitVec> {
                    let n = 64;
                    (0..=n).map(|i| {
                        let t = t0 + (t1 - t0) * i as f64 / n as f64;
                        UnitVec::new_unchecked(Vec3::new(t.cos(), t.sin(), 0.0))
                    }).collect()
                };
                let first = sample(start, start + d1);
                let second = sample(start + d1, start + d1 + d2);
                let mut joined = first.clone();
                joined.extend_from_slice(&second[1..]);
                let total = winding_angle(&joined, &basis).unwrap();
                let parts = winding_angle(&first, &basis).unwrap() + winding_angle(&second, &basis).unwrap();
                prop_assert!((total - parts).abs() < 1e-10);
            }
        }
    }
}
