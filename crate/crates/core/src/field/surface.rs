use std::f64::consts::{FRAC_PI_2, PI};

use crate::polytope::Polytope;
use crate::sphergeo::{self, UnitVec, Vec3};

use super::{DiscreteField, FieldError};

const MAX_DEPTH: u32 = 10;

/// A triangulated surface; every triangle's normal `(q − p) × (r − p)` points
/// to the side the surface is oriented towards.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparatingSurface {
    pub triangles: Vec<[Vec3; 3]>,
    /// The vertex this surface cuts off, if any.
    pub vertex: Option<usize>,
}

fn subdivide(out: &mut Vec<[Vec3; 3]>, a: Vec3, b: Vec3, c: Vec3, res: usize) {
    let n = res.max(1);
    let at = |i: usize, j: usize| a + (b - a) * (i as f64 / n as f64) + (c - a) * (j as f64 / n as f64);
    for j in 0..n {
        for i in 0..n - j {
            out.push([at(i, j), at(i + 1, j), at(i, j + 1)]);
            if i + j + 1 < n {
                out.push([at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
            }
        }
    }
}

impl SeparatingSurface {
    /// Planar cut across the corner at vertex `a`, at distance `depth` along
    /// the interior ray, oriented away from the vertex. Each fan piece is split
    /// into `res²` triangles.
    pub fn around_vertex(p: &Polytope, a: usize, depth: f64, res: usize) -> Result<Self, FieldError> {
        let star = p.vertex_star(a);
        let ray = *star.interior_ray().vec();
        let v = p.vertices()[a];
        let mut corners = Vec::with_capacity(star.degree());
        for &b in &star.edges {
            let other = p.vertices()[p.opposite(b, a)];
            let d = other - v;
            let along = d.dot(&ray);
            if along <= 0.0 {
                return Err(FieldError::Surface(format!("edge {b} does not enter the interior at vertex {a}")));
            }
            let t = depth / along;
            if !(t > 0.0 && t < 1.0) {
                return Err(FieldError::Surface(format!(
                    "depth {depth} does not cut edge {b} at vertex {a} strictly inside"
                )));
            }
            corners.push(v + d * t);
        }
        let mut triangles = Vec::new();
        if corners.len() == 3 {
            subdivide(&mut triangles, corners[0], corners[1], corners[2], res);
        } else {
            let centre = corners.iter().sum::<Vec3>() / corners.len() as f64;
            for j in 0..corners.len() {
                subdivide(&mut triangles, centre, corners[j], corners[(j + 1) % corners.len()], res);
            }
        }
        for t in triangles.iter_mut() {
            if (t[1] - t[0]).cross(&(t[2] - t[0])).dot(&ray) < 0.0 {
                t.swap(1, 2);
            }
        }
        Ok(Self { triangles, vertex: Some(a) })
    }

    /// Boundary of the box `[lo, hi]`, oriented outward, each face split into
    /// `2 res²` triangles.
    pub fn closed_box(lo: Vec3, hi: Vec3, res: usize) -> Self {
        let mut triangles = Vec::new();
        let centre = (lo + hi) * 0.5;
        for axis in 0..3 {
            let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
            for side in [lo[axis], hi[axis]] {
                let corner = |a: f64, b: f64| {
                    let mut x = Vec3::zeros();
                    x[axis] = side;
                    x[u] = a;
                    x[w] = b;
                    x
                };
                let (p00, p10, p01, p11) = (
                    corner(lo[u], lo[w]),
                    corner(hi[u], lo[w]),
                    corner(lo[u], hi[w]),
                    corner(hi[u], hi[w]),
                );
                subdivide(&mut triangles, p00, p10, p01, res);
                subdivide(&mut triangles, p11, p01, p10, res);
                let out = (p00 - centre)[axis].signum();
                let start = triangles.len() - 2 * res.max(1).pow(2);
                for t in &mut triangles[start..] {
                    if (t[1] - t[0]).cross(&(t[2] - t[0]))[axis] * out < 0.0 {
                        t.swap(1, 2);
                    }
                }
            }
        }
        Self { triangles, vertex: None }
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| 0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()).sum()
    }
}

fn image_area(
    f: &DiscreteField,
    tri: usize,
    p: [Vec3; 3],
    n: [UnitVec; 3],
    depth: u32,
) -> Result<f64, FieldError> {
    let wide = (0..3).any(|i| n[i].angle_to(&n[(i + 1) % 3]) > FRAC_PI_2);
    if wide && depth < MAX_DEPTH {
        let mid = |i: usize, j: usize| (p[i] + p[j]) * 0.5;
        let (m01, m12, m20) = (mid(0, 1), mid(1, 2), mid(2, 0));
        let s = |x: &Vec3| f.sample(x).map(UnitVec::new_unchecked);
        let (n01, n12, n20) = (s(&m01)?, s(&m12)?, s(&m20)?);
        return Ok(image_area(f, tri, [p[0], m01, m20], [n[0], n01, n20], depth + 1)?
            + image_area(f, tri, [m01, p[1], m12], [n01, n[1], n12], depth + 1)?
            + image_area(f, tri, [m20, m12, p[2]], [n20, n12, n[2]], depth + 1)?
            + image_area(f, tri, [m01, m12, m20], [n01, n12, n20], depth + 1)?);
    }
    sphergeo::oriented_area(&n[0], &n[1], &n[2]).map_err(|source| FieldError::Image { triangle: tri, source })
}

/// `(1/4π) ∫_S n*ω`: the signed area of the surface's image, as a fraction of
/// the sphere.
pub fn trapped_area_integrate(f: &DiscreteField, s: &SeparatingSurface) -> Result<f64, FieldError> {
    let mut total = 0.0;
    for (i, t) in s.triangles.iter().enumerate() {
        let n = [f.sample(&t[0])?, f.sample(&t[1])?, f.sample(&t[2])?].map(UnitVec::new_unchecked);
        total += image_area(f, i, *t, n, 0)?;
    }
    Ok(total / (4.0 * PI))
}
