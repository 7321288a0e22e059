//! Sampled tangent unit-vector fields on a structured lattice.
//!
//! Nodes carry a unit vector, a quadrature weight (volume of the node's dual
//! cell that lies inside the domain) and a boundary tag. Nodes closer than the
//! exclusion radius to a singular point (a polytope vertex) are inactive: they
//! take no part in energy sums, stencils or interpolation, and their volume is
//! reported separately.

mod extract;
mod io;
mod surface;

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::bound::BoundError;
use crate::invariants::InvariantError;
use crate::polytope::Polytope;
use crate::sphergeo::{SphereError, Vec3};

pub use extract::{
    analyze, extract_edge_orientation, extract_kink_number, Analysis, AnalyzeOptions, KinkPath,
};
pub use io::{read_field_file, write_field_file, FieldHeader};
pub use surface::{trapped_area_integrate, SeparatingSurface};

/// Largest allowed deviation from unit norm for stored values.
pub const UNIT_TOL: f64 = 1e-9;
/// Default tangency tolerance for imported fields.
pub const IMPORT_TANGENCY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("bad grid: {0}")]
    Grid(String),
    #[error("{len} values for a grid of {nodes} nodes")]
    Length { len: usize, nodes: usize },
    #[error("zero or non-finite vector at node {node:?}")]
    ZeroVector { node: [usize; 3] },
    #[error("domain splits into {0} disconnected pieces")]
    Disconnected(usize),
    #[error("point {0:?} lies outside the grid")]
    OutsideGrid([f64; 3]),
    #[error("no active nodes around point {0:?}")]
    NoData([f64; 3]),
    #[error("interpolated field vanishes at {0:?}")]
    Cancelled([f64; 3]),
    #[error("surface triangle {triangle}: {source}")]
    Image {
        triangle: usize,
        #[source]
        source: SphereError,
    },
    #[error("edge {0} has no sampled nodes")]
    NoEdgeSamples(usize),
    #[error("edge {edge}: node {node:?} differs from the edge mean by {angle:.3e} rad")]
    InconsistentEdge { edge: usize, node: [usize; 3], angle: f64 },
    #[error("edge {edge}: mean field is {angle:.3e} rad off the edge line")]
    EdgeNotParallel { edge: usize, angle: f64 },
    #[error("vertex {vertex}, face {face}: kink path endpoints are antipodal")]
    AntipodalEndpoints { vertex: usize, face: usize },
    #[error("vertex {vertex}, face {face}: field leaves the face plane at sample {index} (normal component {offset:.3e})")]
    OffFace { vertex: usize, face: usize, index: usize, offset: f64 },
    #[error("vertex {vertex}, face {face}: {source}")]
    Winding {
        vertex: usize,
        face: usize,
        #[source]
        source: SphereError,
    },
    #[error("separating surface: {0}")]
    Surface(String),
    #[error("field file: {0}")]
    Format(String),
    #[error("field file: {0}")]
    Io(String),
    #[error("{0}")]
    Invariants(#[from] InvariantError),
    #[error("{0}")]
    Bound(#[from] BoundError),
}

/// Axis-aligned lattice; node `(i, j, k)` sits at `origin + (i hx, j hy, k hz)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self, FieldError> {
        if dims.iter().any(|&d| d < 2) {
            return Err(FieldError::Grid(format!("need at least 2 nodes per axis, got {dims:?}")));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(FieldError::Grid(format!("spacing must be positive, got {spacing:?}")));
        }
        if origin.iter().any(|x| !x.is_finite()) {
            return Err(FieldError::Grid("non-finite origin".into()));
        }
        Ok(Self { dims, spacing, origin })
    }

    /// `cells` cells along every axis of the box `[lo, hi]`.
    pub fn covering(lo: Vec3, hi: Vec3, cells: usize) -> Result<Self, FieldError> {
        let n = cells.max(1);
        let ext = hi - lo;
        Self::new(
            [n + 1; 3],
            [ext.x / n as f64, ext.y / n as f64, ext.z / n as f64],
            [lo.x, lo.y, lo.z],
        )
    }

    pub fn for_polytope(p: &Polytope, cells: usize) -> Result<Self, FieldError> {
        let (lo, hi) = p.bounding_box();
        Self::covering(lo, hi, cells)
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        [i, j, idx / (self.dims[0] * self.dims[1])]
    }

    pub fn point(&self, idx: usize) -> Vec3 {
        let c = self.ijk(idx);
        Vec3::from_fn(|a, _| self.origin[a] + c[a] as f64 * self.spacing[a])
    }

    pub fn lo(&self) -> Vec3 {
        Vec3::from(self.origin)
    }

    pub fn hi(&self) -> Vec3 {
        Vec3::from_fn(|a, _| self.origin[a] + (self.dims[a] - 1) as f64 * self.spacing[a])
    }

    /// Length of a cell diagonal.
    pub fn cell_diagonal(&self) -> f64 {
        Vec3::from(self.spacing).norm()
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn step(&self, idx: usize, axis: usize, delta: isize) -> Option<usize> {
        let c = self.ijk(idx);
        let t = c[axis] as isize + delta;
        if t < 0 || t >= self.dims[axis] as isize {
            return None;
        }
        let stride = match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        } as isize;
        Some((idx as isize + delta * stride) as usize)
    }

    /// The part of node `idx`'s dual cell that lies inside the grid box.
    fn dual_cell(&self, idx: usize) -> (Vec3, Vec3) {
        let c = self.ijk(idx);
        let p = self.point(idx);
        let mut lo = p;
        let mut hi = p;
        for a in 0..3 {
            let h = 0.5 * self.spacing[a];
            if c[a] > 0 {
                lo[a] -= h;
            }
            if c[a] + 1 < self.dims[a] {
                hi[a] += h;
            }
        }
        (lo, hi)
    }
}

/// Where a node sits relative to the domain boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NodeTag {
    Outside,
    Interior,
    Face(usize),
    Edge(usize),
    Vertex(usize),
}

const SUBSAMPLES: usize = 8;

/// Volume of `inside` within the box `[lo, hi]`: exact when the box is all in
/// or all out (judged from a 3×3×3 probe), midpoint subsampling otherwise.
fn inside_volume(lo: Vec3, hi: Vec3, inside: &dyn Fn(&Vec3) -> bool) -> f64 {
    let ext = hi - lo;
    let vol = ext.x * ext.y * ext.z;
    let mut count = 0;
    for k in 0..3 {
        for j in 0..3 {
            for i in 0..3 {
                let q = lo + Vec3::new(ext.x * i as f64, ext.y * j as f64, ext.z * k as f64) * 0.5;
                count += inside(&q) as usize;
            }
        }
    }
    match count {
        27 => return vol,
        0 => return 0.0,
        _ => {}
    }
    let m = SUBSAMPLES;
    let mut hits = 0usize;
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                let f = |t: usize| (t as f64 + 0.5) / m as f64;
                let q = lo + Vec3::new(ext.x * f(i), ext.y * f(j), ext.z * f(k));
                hits += inside(&q) as usize;
            }
        }
    }
    vol * hits as f64 / (m * m * m) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField {
    grid: Grid,
    values: Vec<Vec3>,
    weights: Vec<f64>,
    mask: Vec<bool>,
    tags: Vec<NodeTag>,
    singular: Vec<Vec3>,
    exclusion_radius: f64,
    tangency_tol: f64,
}

impl DiscreteField {
    /// Sample `f` on the nodes of `grid` that touch the polytope.
    pub fn on_polytope(p: &Polytope, grid: Grid, f: impl Fn(&Vec3) -> Vec3) -> Result<Self, FieldError> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::from_values_on_polytope(p, grid, values)
    }

    /// Wrap raw node values; entries on nodes that do not touch `p` are ignored.
    pub fn from_values_on_polytope(p: &Polytope, grid: Grid, values: Vec<Vec3>) -> Result<Self, FieldError> {
        let tol = 1e-9 * grid.max_spacing().max(p.tolerance());
        let inside = |q: &Vec3| p.contains_point(q, tol);
        let tags = (0..grid.len())
            .map(|i| polytope_tag(p, &grid.point(i), 1e-6 * grid.min_spacing()))
            .collect();
        Self::build(grid, values, &inside, tags, p.vertices().to_vec())
    }

    /// A field on an arbitrary region given by an indicator function, with no
    /// face or edge structure.
    pub fn on_region(
        grid: Grid,
        inside: impl Fn(&Vec3) -> bool,
        singular: Vec<Vec3>,
        f: impl Fn(&Vec3) -> Vec3,
    ) -> Result<Self, FieldError> {
        let values: Vec<Vec3> = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        let tags = (0..grid.len())
            .map(|i| if inside(&grid.point(i)) { NodeTag::Interior } else { NodeTag::Outside })
            .collect();
        Self::build(grid, values, &inside, tags, singular)
    }

    fn build(
        grid: Grid,
        mut values: Vec<Vec3>,
        inside: &dyn Fn(&Vec3) -> bool,
        tags: Vec<NodeTag>,
        singular: Vec<Vec3>,
    ) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::Length { len: values.len(), nodes: grid.len() });
        }
        let weights: Vec<f64> = (0..grid.len())
            .map(|i| {
                let (lo, hi) = grid.dual_cell(i);
                inside_volume(lo, hi, inside)
            })
            .collect();
        let exclusion_radius = grid.cell_diagonal();
        let mut mask = vec![false; grid.len()];
        for i in 0..grid.len() {
            if weights[i] <= 0.0 && tags[i] == NodeTag::Outside {
                continue;
            }
            mask[i] = true;
            let x = grid.point(i);
            let near_singular = singular.iter().any(|s| (x - s).norm() < exclusion_radius);
            let v = values[i];
            let n = v.norm();
            if n.is_finite() && n > 1e-300 {
                values[i] = v / n;
            } else if near_singular {
                values[i] = Vec3::x();
            } else {
                return Err(FieldError::ZeroVector { node: grid.ijk(i) });
            }
        }
        for i in 0..grid.len() {
            if !mask[i] {
                values[i] = Vec3::zeros();
            }
        }
        Ok(Self {
            grid,
            values,
            weights,
            mask,
            tags,
            singular,
            exclusion_radius,
            tangency_tol: IMPORT_TANGENCY_TOL,
        })
    }

    /// Exclude nodes within `cells` cell diagonals of a singular point.
    pub fn with_exclusion_cells(mut self, cells: f64) -> Self {
        self.exclusion_radius = cells * self.grid.cell_diagonal();
        self
    }

    pub fn with_tangency_tolerance(mut self, tol: f64) -> Self {
        self.tangency_tol = tol;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[Vec3] {
        &self.values
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
    pub fn tags(&self) -> &[NodeTag] {
        &self.tags
    }
    pub fn singular_points(&self) -> &[Vec3] {
        &self.singular
    }
    pub fn exclusion_radius(&self) -> f64 {
        self.exclusion_radius
    }
    pub fn tangency_tolerance(&self) -> f64 {
        self.tangency_tol
    }

    pub fn is_excluded(&self, idx: usize) -> bool {
        let x = self.grid.point(idx);
        self.singular.iter().any(|s| (x - s).norm() < self.exclusion_radius)
    }

    /// In the domain and away from singular points.
    pub fn is_active(&self, idx: usize) -> bool {
        self.mask[idx] && !self.is_excluded(idx)
    }

    pub fn active_mask(&self) -> Vec<bool> {
        (0..self.grid.len()).map(|i| self.is_active(i)).collect()
    }

    /// Replace node values (normalized); inactive nodes keep theirs.
    pub(crate) fn set_values(&mut self, values: Vec<Vec3>) {
        debug_assert_eq!(values.len(), self.values.len());
        self.values = values;
    }

    /// Trilinear interpolation over active corners, then normalization.
    pub fn sample(&self, p: &Vec3) -> Result<Vec3, FieldError> {
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let u = (p[a] - g.origin[a]) / g.spacing[a];
            let n = (g.dims[a] - 1) as f64;
            if !(-1e-9..=n + 1e-9).contains(&u) {
                return Err(FieldError::OutsideGrid([p.x, p.y, p.z]));
            }
            let u = u.clamp(0.0, n);
            let b = (u.floor() as usize).min(g.dims[a] - 2);
            base[a] = b;
            t[a] = u - b as f64;
        }
        let mut acc = Vec3::zeros();
        let mut wsum = 0.0;
        let mut first: Option<Vec3> = None;
        let mut uniform = true;
        for corner in 0..8 {
            let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let idx = g.index(base[0] + off[0], base[1] + off[1], base[2] + off[2]);
            let w: f64 = (0..3).map(|a| if off[a] == 1 { t[a] } else { 1.0 - t[a] }).product();
            if w > 0.0 && self.is_active(idx) {
                let v = self.values[idx];
                uniform &= *first.get_or_insert(v) == v;
                acc += v * w;
                wsum += w;
            }
        }
        // a uniform neighbourhood reproduces its value exactly
        if let (true, Some(v)) = (uniform, first) {
            return Ok(v);
        }
        if wsum < 1e-12 {
            return Err(FieldError::NoData([p.x, p.y, p.z]));
        }
        let n = acc.norm();
        if n < 1e-9 * wsum {
            return Err(FieldError::Cancelled([p.x, p.y, p.z]));
        }
        Ok(acc / n)
    }

    /// `∂n/∂x_axis` at node `idx`, using only active neighbours: central when
    /// possible, second-order one-sided next to the domain edge, first-order as
    /// a last resort.
    pub fn derivative(&self, active: &[bool], idx: usize, axis: usize) -> Vec3 {
        let g = &self.grid;
        let h = g.spacing[axis];
        let at = |d: isize| g.step(idx, axis, d).filter(|&j| active[j]);
        let n0 = self.values[idx];
        match (at(-1), at(1)) {
            (Some(m), Some(p)) => (self.values[p] - self.values[m]) / (2.0 * h),
            (m, p) => {
                if let (Some(p1), Some(p2)) = (p, at(2)) {
                    (-3.0 * n0 + 4.0 * self.values[p1] - self.values[p2]) / (2.0 * h)
                } else if let (Some(m1), Some(m2)) = (m, at(-2)) {
                    (3.0 * n0 - 4.0 * self.values[m1] + self.values[m2]) / (2.0 * h)
                } else if let Some(p1) = p {
                    (self.values[p1] - n0) / h
                } else if let Some(m1) = m {
                    (n0 - self.values[m1]) / h
                } else {
                    Vec3::zeros()
                }
            }
        }
    }

    fn components(&self, active: &[bool]) -> usize {
        let g = &self.grid;
        let mut seen = vec![false; g.len()];
        let mut count = 0;
        for start in 0..g.len() {
            if !active[start] || seen[start] || self.weights[start] <= 0.0 {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                for axis in 0..3 {
                    for d in [-1, 1] {
                        if let Some(j) = g.step(i, axis, d) {
                            if active[j] && !seen[j] {
                                seen[j] = true;
                                queue.push_back(j);
                            }
                        }
                    }
                }
            }
        }
        count
    }
}

fn polytope_tag(p: &Polytope, x: &Vec3, tol: f64) -> NodeTag {
    let mut on = Vec::new();
    for c in 0..p.num_faces() {
        let d = p.face_distance(c, x);
        if d > tol {
            return NodeTag::Outside;
        }
        if d.abs() <= tol {
            on.push(c);
        }
    }
    match on.len() {
        0 => NodeTag::Interior,
        1 => NodeTag::Face(on[0]),
        2 => {
            let shared = p
                .edges()
                .iter()
                .position(|e| on.iter().all(|c| e.faces.contains(c)))
                .expect("two faces meeting at a boundary point share an edge");
            NodeTag::Edge(shared)
        }
        _ => {
            let a = (0..p.num_vertices())
                .min_by(|&a, &b| {
                    let da = (p.vertices()[a] - x).norm();
                    let db = (p.vertices()[b] - x).norm();
                    da.total_cmp(&db)
                })
                .expect("polytope has vertices");
            NodeTag::Vertex(a)
        }
    }
}

/// Energy with its quadrature bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub energy: f64,
    /// Domain volume carried by nodes that entered the sum.
    pub volume: f64,
    /// Domain volume of nodes excluded around singular points.
    pub excluded_volume: f64,
}

/// `∫ |∇n|² dV` by node quadrature with finite-difference gradients.
pub fn energy(f: &DiscreteField) -> Result<EnergyReport, FieldError> {
    let active = f.active_mask();
    let pieces = f.components(&active);
    if pieces > 1 {
        return Err(FieldError::Disconnected(pieces));
    }
    let mut energy = 0.0;
    let mut volume = 0.0;
    let mut excluded_volume = 0.0;
    for i in 0..f.grid.len() {
        let w = f.weights[i];
        if w <= 0.0 {
            continue;
        }
        if !active[i] {
            excluded_volume += w;
            continue;
        }
        let rho: f64 = (0..3).map(|a| f.derivative(&active, i, a).norm_squared()).sum();
        energy += w * rho;
        volume += w;
    }
    Ok(EnergyReport { energy, volume, excluded_volume })
}

/// Pointwise energy density `ρ = |∇n|²` and pulled-back area form norm.
pub fn density_and_pullback(f: &DiscreteField, active: &[bool], idx: usize) -> (f64, f64) {
    let d: [Vec3; 3] = std::array::from_fn(|a| f.derivative(active, idx, a));
    let n = f.values[idx];
    let rho = d.iter().map(|v| v.norm_squared()).sum::<f64>();
    let w = Vec3::new(
        d[0].cross(&d[1]).dot(&n),
        d[1].cross(&d[2]).dot(&n),
        d[2].cross(&d[0]).dot(&n),
    );
    (rho, w.norm())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    /// `max (2|n*ω| − ρ)` over checked nodes.
    pub max_violation: f64,
    pub location: Option<[usize; 3]>,
    pub nodes: usize,
}

/// Check `ρ >= 2|n*ω|` at interior nodes whose six neighbours are active.
pub fn pointwise_inequality_check(f: &DiscreteField) -> InequalityReport {
    let active = f.active_mask();
    let g = &f.grid;
    let mut report = InequalityReport { max_violation: f64::NEG_INFINITY, location: None, nodes: 0 };
    for i in 0..g.len() {
        if !active[i] || f.tags[i] != NodeTag::Interior {
            continue;
        }
        let surrounded = (0..3).all(|a| [-1, 1].iter().all(|&d| g.step(i, a, d).is_some_and(|j| active[j])));
        if !surrounded {
            continue;
        }
        let (rho, pull) = density_and_pullback(f, &active, i);
        let v = 2.0 * pull - rho;
        report.nodes += 1;
        if v > report.max_violation {
            report.max_violation = v;
            report.location = Some(g.ijk(i));
        }
    }
    if report.nodes == 0 {
        report.max_violation = 0.0;
    }
    report
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TangencyReport {
    /// Largest `|n·F^c|` over nodes on face `c` (edge nodes count for both faces).
    pub per_face: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn tangency_report(f: &DiscreteField, p: &Polytope) -> TangencyReport {
    let mut per_face = vec![0.0f64; p.num_faces()];
    for i in 0..f.grid.len() {
        let faces: &[usize] = match f.tags[i] {
            NodeTag::Face(c) => &[c][..],
            NodeTag::Edge(b) => &p.edges()[b].faces[..],
            _ => continue,
        };
        if !f.is_active(i) {
            continue;
        }
        for &c in faces {
            let dev = f.values[i].dot(p.normals()[c].vec()).abs();
            per_face[c] = per_face[c].max(dev);
        }
    }
    let tolerance = f.tangency_tol;
    let passed = per_face.iter().all(|&d| d <= tolerance);
    TangencyReport { per_face, tolerance, passed }
}

/// `x ↦ (x − c)/|x − c|`.
pub fn radial_from(center: Vec3) -> impl Fn(&Vec3) -> Vec3 {
    move |x| x - center
}
