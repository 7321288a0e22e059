use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::Serialize;

use crate::bound::{self, BoundResult};
use crate::invariants::{self, HomotopyInvariants, ValidationReport};
use crate::polytope::Polytope;
use crate::sphergeo::{self, PlaneBasis, UnitVec, Vec3};

use super::{
    energy, pointwise_inequality_check, tangency_report, trapped_area_integrate, DiscreteField, EnergyReport,
    FieldError, InequalityReport, NodeTag, SeparatingSurface, TangencyReport,
};

/// Edge samples must agree with their mean to this angle (radians).
pub const EDGE_AGREEMENT: f64 = 1e-3;
/// Largest normal component tolerated on a kink path before projection.
pub const KINK_OFF_FACE: f64 = 0.25;

/// Mean field on the nodes of edge `b`.
pub fn extract_edge_orientation(f: &DiscreteField, p: &Polytope, b: usize) -> Result<UnitVec, FieldError> {
    let nodes: Vec<usize> = (0..f.grid().len())
        .filter(|&i| f.tags()[i] == NodeTag::Edge(b) && f.is_active(i))
        .collect();
    if nodes.is_empty() {
        return Err(FieldError::NoEdgeSamples(b));
    }
    let sum: Vec3 = nodes.iter().map(|&i| f.values()[i]).sum();
    let mean = UnitVec::new(sum).map_err(|_| FieldError::InconsistentEdge {
        edge: b,
        node: f.grid().ijk(nodes[0]),
        angle: PI,
    })?;
    for &i in &nodes {
        let angle = mean.angle_to(&UnitVec::new_unchecked(f.values()[i]));
        if angle > EDGE_AGREEMENT {
            return Err(FieldError::InconsistentEdge { edge: b, node: f.grid().ijk(i), angle });
        }
    }
    let dir = p.edge_direction(b);
    let off = mean.angle_to(&dir).min(mean.angle_to(&-dir));
    if off > EDGE_AGREEMENT {
        return Err(FieldError::EdgeNotParallel { edge: b, angle: off });
    }
    Ok(mean)
}

/// Placement and sampling density of the chord used for kink numbers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KinkPath {
    /// Chord endpoints sit at this fraction of the shorter incident edge.
    pub fraction: f64,
    /// Samples per (smallest) grid spacing along the chord.
    pub density: f64,
}

impl Default for KinkPath {
    fn default() -> Self {
        Self { fraction: 0.25, density: 4.0 }
    }
}

/// Kink number at vertex `a` on face `c`, from the field along a chord that
/// runs counterclockwise about the face's outward normal.
pub fn extract_kink_number(
    f: &DiscreteField,
    p: &Polytope,
    a: usize,
    c: usize,
    path: &KinkPath,
) -> Result<i64, FieldError> {
    let star = p.vertex_star(a);
    let j = star
        .faces
        .iter()
        .position(|&x| x == c)
        .ok_or_else(|| FieldError::Surface(format!("face {c} is not incident to vertex {a}")))?;
    let (b1, b2) = (star.edges[j], star.edges[(j + 1) % star.degree()]);
    let v = p.vertices()[a];
    let unit = |b: usize| (p.vertices()[p.opposite(b, a)] - v).normalize();
    let normal = p.normals()[c];
    let (mut d1, mut d2) = (unit(b1), unit(b2));
    if d1.cross(&d2).dot(normal.vec()) < 0.0 {
        std::mem::swap(&mut d1, &mut d2);
    }
    let r = path.fraction * p.edge_length(b1).min(p.edge_length(b2));
    let (start, end) = (v + d1 * r, v + d2 * r);
    let n = ((path.density * (end - start).norm() / f.grid().min_spacing()).ceil() as usize).max(16);

    let mut samples = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = start + (end - start) * (i as f64 / n as f64);
        let m = f.sample(&x)?;
        let offset = m.dot(normal.vec());
        if offset.abs() > KINK_OFF_FACE {
            return Err(FieldError::OffFace { vertex: a, face: c, index: i, offset });
        }
        let t = m - normal.vec() * offset;
        samples.push(UnitVec::new(t).map_err(|_| FieldError::OffFace { vertex: a, face: c, index: i, offset })?);
    }
    if samples[0].dot(&samples[n]) <= -1.0 + 1e-9 {
        return Err(FieldError::AntipodalEndpoints { vertex: a, face: c });
    }
    let basis = PlaneBasis::orthogonal_to(&normal);
    let theta = sphergeo::winding_angle(&samples, &basis)
        .map_err(|source| FieldError::Winding { vertex: a, face: c, source })?;
    Ok(((theta - sphergeo::wrap_angle(theta)) / (2.0 * PI)).round() as i64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzeOptions {
    /// Reference direction; drawn from `seed` when absent.
    pub s: Option<UnitVec>,
    pub seed: u64,
    pub kink_path: KinkPath,
    /// Separating surfaces cut each corner at this fraction of the way to the
    /// nearest neighbouring vertex (measured along the interior ray).
    pub surface_fraction: f64,
    pub surface_res: usize,
    /// Restrict the analysis to these vertices (and their edges and faces).
    /// Wrapping numbers and the bound need every vertex.
    pub vertices: Option<Vec<usize>>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            s: None,
            seed: 0,
            kink_path: KinkPath::default(),
            surface_fraction: 0.5,
            surface_res: 64,
            vertices: None,
        }
    }
}

impl AnalyzeOptions {
    pub fn surface(&self, p: &Polytope, a: usize) -> Result<SeparatingSurface, FieldError> {
        let star = p.vertex_star(a);
        let ray = star.interior_ray();
        let v = p.vertices()[a];
        let reach = star
            .edges
            .iter()
            .map(|&b| (p.vertices()[p.opposite(b, a)] - v).dot(ray.vec()))
            .fold(f64::INFINITY, f64::min);
        SeparatingSurface::around_vertex(p, a, self.surface_fraction * reach, self.surface_res)
    }
}

/// Everything measured from one field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Analysis {
    pub vertices: Vec<usize>,
    /// Edge orientation signs relative to each edge's low-to-high direction.
    pub edge_signs: BTreeMap<usize, i8>,
    pub kinks: Vec<(usize, usize, i64)>,
    /// Measured trapped areas, by vertex.
    pub omega: BTreeMap<usize, f64>,
    pub energy: EnergyReport,
    pub inequality: InequalityReport,
    pub tangency: TangencyReport,
    /// Edges or kinks that could not be measured, with the reason.
    pub extraction_errors: Vec<String>,
    pub complete: Option<Complete>,
}

/// Results that need the whole polytope.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Complete {
    #[serde(skip)]
    pub invariants: HomotopyInvariants,
    pub s: [f64; 3],
    pub wraps: Vec<i64>,
    pub omega_sum: f64,
    pub validation: ValidationReport,
    #[serde(skip)]
    pub bound: Option<BoundResult>,
    pub bound_value: Option<f64>,
    /// `energy − bound`.
    pub margin: Option<f64>,
}

pub fn analyze(f: &DiscreteField, p: &Polytope, opts: &AnalyzeOptions) -> Result<Analysis, FieldError> {
    let all: Vec<usize> = (0..p.num_vertices()).collect();
    let vertices = opts.vertices.clone().unwrap_or(all);
    let mut errors = Vec::new();
    let mut failed = BTreeSet::new();

    let mut edge_signs = BTreeMap::new();
    let mut edge_orient: BTreeMap<usize, UnitVec> = BTreeMap::new();
    for &a in &vertices {
        for b in p.edges_at(a) {
            if edge_orient.contains_key(&b) || failed.contains(&b) {
                continue;
            }
            let mean = match extract_edge_orientation(f, p, b) {
                Ok(m) => m,
                Err(e) => {
                    failed.insert(b);
                    errors.push(e.to_string());
                    continue;
                }
            };
            let dir = p.edge_direction(b);
            let sign: i8 = if mean.dot(&dir) >= 0.0 { 1 } else { -1 };
            edge_signs.insert(b, sign);
            edge_orient.insert(b, if sign > 0 { dir } else { -dir });
        }
    }
    let mut kinks = Vec::new();
    let mut kink_map = BTreeMap::new();
    for &a in &vertices {
        for c in p.faces_at(a) {
            if p.edges_at(a).iter().any(|b| !edge_orient.contains_key(b)) {
                continue;
            }
            let k = match extract_kink_number(f, p, a, c, &opts.kink_path) {
                Ok(k) => k,
                Err(e) => {
                    errors.push(format!("kink at vertex {a}, face {c}: {e}"));
                    continue;
                }
            };
            kinks.push((a, c, k));
            kink_map.insert((a, c), k);
        }
    }
    let mut omega = BTreeMap::new();
    for &a in &vertices {
        let s = opts.surface(p, a)?;
        omega.insert(a, trapped_area_integrate(f, &s)?);
    }
    let energy = energy(f)?;
    let inequality = pointwise_inequality_check(f);
    let tangency = tangency_report(f, p);

    let complete = if vertices.len() == p.num_vertices() && errors.is_empty() {
        let orient: Vec<UnitVec> = edge_orient.values().copied().collect();
        let s = match opts.s {
            Some(s) => s,
            None => invariants::choose_s(p, &orient, opts.seed)?,
        };
        let mut inv = HomotopyInvariants {
            edge_orient: orient,
            kinks: kink_map,
            wraps: vec![0; p.num_vertices()],
            s,
        };
        let measured: Vec<f64> = omega.values().copied().collect();
        let validation = invariants::validate(p, &inv);
        let mut bound = None;
        let mut wraps = Vec::new();
        if validation.passed() {
            match invariants::wrapping_from_trapped(p, &inv, &measured) {
                Ok(w) => {
                    wraps = w;
                    inv.wraps = wraps.clone();
                    bound = Some(bound::lower_bound(p, &inv)?);
                }
                Err(e) => errors.push(e.to_string()),
            }
        }
        let bound_value = bound.as_ref().map(|b| b.value);
        Some(Complete {
            s: (*s.vec()).into(),
            wraps,
            omega_sum: measured.iter().sum(),
            validation,
            bound_value,
            margin: bound_value.map(|b| energy.energy - b),
            bound,
            invariants: inv,
        })
    } else {
        None
    };
    Ok(Analysis { vertices, edge_signs, kinks, omega, energy, inequality, tangency, extraction_errors: errors, complete })
}
