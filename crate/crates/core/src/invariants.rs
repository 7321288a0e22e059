//! Homotopy invariants of tangent fields and the trapped-area formula.
//!
//! The class of a tangent unit-vector field on a polytope is described by one
//! edge orientation per edge, one kink number per (vertex, incident face) pair
//! and one wrapping number per vertex, relative to a reference direction `s`.
//!
//! Orientation convention: the separating surface around a vertex is oriented
//! away from the vertex, so a field pointing radially out of a cube corner has
//! trapped area `+1/8` there. Its boundary runs clockwise about the outward
//! ray, which is why [`trapped_area`] walks the vertex star backwards and why
//! kink terms enter with a `+½` factor.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polytope::Polytope;
use crate::sphergeo::{self, SphereError, UnitVec, Vec3};

/// Minimum `|s·F|` for a face normal `F` when `s` is chosen automatically,
/// and the genericity threshold enforced by [`validate`].
pub const S_TOL: f64 = 1e-3;
/// Tolerance on the parallelism of an edge orientation with its edge.
pub const PARALLEL_TOL: f64 = 1e-9;
/// Tolerance on the trapped-area sum rule.
pub const SUM_TOL: f64 = 1e-9;
/// Largest accepted distance from an integer in [`wrapping_from_trapped`].
pub const INTEGER_TOL: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error("vertex {vertex}: {source}")]
    Sphere {
        vertex: usize,
        #[source]
        source: SphereError,
    },
    #[error("vertex {vertex}: fan triangle {j} has coincident or antipodal edge orientations")]
    DegenerateFan { vertex: usize, j: usize },
    #[error("kink number missing for vertex {vertex}, face {face}")]
    MissingKink { vertex: usize, face: usize },
    #[error("trapped areas sum to {residual:e}, not zero")]
    SumRule { residual: f64 },
    #[error("vertex {vertex}: wrapping number {value} is {distance} away from an integer")]
    NonInteger { vertex: usize, value: f64, distance: f64 },
    #[error("invariant data has the wrong shape: {0}")]
    Shape(String),
    #[error("invariant file: {0}")]
    Parse(String),
    #[error("no generic reference direction found after {0} draws")]
    NoGenericS(usize),
}

/// Invariant data of one homotopy class.
#[derive(Clone, Debug, PartialEq)]
pub struct HomotopyInvariants {
    /// One unit vector per edge, parallel to the edge.
    pub edge_orient: Vec<UnitVec>,
    /// Kink numbers keyed by `(vertex, face)`.
    pub kinks: BTreeMap<(usize, usize), i64>,
    /// One wrapping number per vertex.
    pub wraps: Vec<i64>,
    pub s: UnitVec,
}

impl HomotopyInvariants {
    /// Build edge orientations from signs relative to [`Polytope::edge_direction`].
    pub fn from_signs(
        p: &Polytope,
        signs: &[i8],
        kinks: BTreeMap<(usize, usize), i64>,
        wraps: Vec<i64>,
        s: UnitVec,
    ) -> Self {
        let edge_orient = signs
            .iter()
            .enumerate()
            .map(|(b, &sg)| if sg < 0 { -p.edge_direction(b) } else { p.edge_direction(b) })
            .collect();
        Self { edge_orient, kinks, wraps, s }
    }

    /// Orientation of each edge as ±1 relative to its low-to-high direction.
    pub fn signs(&self, p: &Polytope) -> Vec<i8> {
        self.edge_orient
            .iter()
            .enumerate()
            .map(|(b, e)| if e.dot(&p.edge_direction(b)) >= 0.0 { 1 } else { -1 })
            .collect()
    }

    pub fn kink(&self, a: usize, c: usize) -> Result<i64, InvariantError> {
        self.kinks
            .get(&(a, c))
            .copied()
            .ok_or(InvariantError::MissingKink { vertex: a, face: c })
    }

    pub fn to_file(&self, p: &Polytope) -> InvariantFile {
        InvariantFile {
            s: (*self.s.vec()).into(),
            edge_orient: self
                .signs(p)
                .into_iter()
                .enumerate()
                .map(|(edge, sign)| EdgeSign { edge, sign: sign as i64 })
                .collect(),
            kinks: self
                .kinks
                .iter()
                .map(|(&(vertex, face), &k)| KinkEntry { vertex, face, k })
                .collect(),
            wraps: self
                .wraps
                .iter()
                .enumerate()
                .map(|(vertex, &w)| WrapEntry { vertex, w })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EdgeSign {
    pub edge: usize,
    pub sign: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KinkEntry {
    pub vertex: usize,
    pub face: usize,
    pub k: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct WrapEntry {
    pub vertex: usize,
    pub w: i64,
}

/// On-disk form of [`HomotopyInvariants`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InvariantFile {
    pub s: [f64; 3],
    pub edge_orient: Vec<EdgeSign>,
    pub kinks: Vec<KinkEntry>,
    pub wraps: Vec<WrapEntry>,
}

impl InvariantFile {
    pub fn parse(text: &str) -> Result<Self, InvariantError> {
        serde_json::from_str(text).map_err(|e| InvariantError::Parse(e.to_string()))
    }

    /// Resolve against a polytope. Structural problems (missing or duplicate
    /// entries, bad indices) are errors here; rule violations are left to
    /// [`validate`].
    pub fn resolve(&self, p: &Polytope) -> Result<HomotopyInvariants, InvariantError> {
        let shape = |m: String| InvariantError::Shape(m);
        let mut signs = vec![0i8; p.num_edges()];
        for e in &self.edge_orient {
            if e.edge >= signs.len() {
                return Err(shape(format!("edge {} out of range", e.edge)));
            }
            if e.sign != 1 && e.sign != -1 {
                return Err(shape(format!("edge {} has sign {}", e.edge, e.sign)));
            }
            if signs[e.edge] != 0 {
                return Err(shape(format!("edge {} listed twice", e.edge)));
            }
            signs[e.edge] = e.sign as i8;
        }
        if let Some(b) = signs.iter().position(|&s| s == 0) {
            return Err(shape(format!("edge {b} has no orientation")));
        }
        let mut kinks = BTreeMap::new();
        for k in &self.kinks {
            if k.vertex >= p.num_vertices() || k.face >= p.num_faces() || !p.faces()[k.face].contains(&k.vertex) {
                return Err(shape(format!("kink ({}, {}) is not an incident vertex-face pair", k.vertex, k.face)));
            }
            if kinks.insert((k.vertex, k.face), k.k).is_some() {
                return Err(shape(format!("kink ({}, {}) listed twice", k.vertex, k.face)));
            }
        }
        for (c, face) in p.faces().iter().enumerate() {
            for &a in face {
                if !kinks.contains_key(&(a, c)) {
                    return Err(shape(format!("kink ({a}, {c}) missing")));
                }
            }
        }
        let mut wraps = vec![None; p.num_vertices()];
        for w in &self.wraps {
            if w.vertex >= wraps.len() {
                return Err(shape(format!("wrap vertex {} out of range", w.vertex)));
            }
            if wraps[w.vertex].replace(w.w).is_some() {
                return Err(shape(format!("wrap for vertex {} listed twice", w.vertex)));
            }
        }
        let wraps = wraps
            .into_iter()
            .enumerate()
            .map(|(a, w)| w.ok_or_else(|| shape(format!("vertex {a} has no wrapping number"))))
            .collect::<Result<Vec<_>, _>>()?;
        let s = UnitVec::try_from(self.s).map_err(|e| shape(format!("s: {e}")))?;
        Ok(HomotopyInvariants::from_signs(p, &signs, kinks, wraps, s))
    }
}

/// Number of corners of face `c` where the two boundary edges disagree in
/// orientation relative to the counterclockwise traversal of the face.
pub fn count_q(p: &Polytope, edge_orient: &[UnitVec], c: usize) -> usize {
    let face = &p.faces()[c];
    let n = face.len();
    let along: Vec<bool> = (0..n)
        .map(|k| {
            let (i, j) = (face[k], face[(k + 1) % n]);
            let b = p.edge_between(i, j).expect("face loop edges exist");
            edge_orient[b].vec().dot(&(p.vertices()[j] - p.vertices()[i])) > 0.0
        })
        .collect();
    (0..n).filter(|&k| along[(k + n - 1) % n] != along[k]).count()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Finding {
    EdgeCount { expected: usize, found: usize },
    WrapCount { expected: usize, found: usize },
    EdgeNotParallel { edge: usize, dot: f64 },
    MissingKink { vertex: usize, face: usize },
    SNotGeneric { face: usize, dot: f64 },
    KinkSum { face: usize, sum: i64, expected_twice: i64, q: usize },
    WrapSum { sum: i64 },
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Finding::EdgeCount { expected, found } => write!(f, "expected {expected} edge orientations, found {found}"),
            Finding::WrapCount { expected, found } => write!(f, "expected {expected} wrapping numbers, found {found}"),
            Finding::EdgeNotParallel { edge, dot } => write!(f, "edge {edge}: orientation not parallel (|dot| = {dot})"),
            Finding::MissingKink { vertex, face } => write!(f, "kink ({vertex}, {face}) missing"),
            Finding::SNotGeneric { face, dot } => write!(f, "s is tangent to face {face} (s·F = {dot})"),
            Finding::KinkSum { face, sum, expected_twice, q } => write!(
                f,
                "face {face}: kink sum {sum} != 1 - q/2 = {} (q = {q})",
                *expected_twice as f64 / 2.0
            ),
            Finding::WrapSum { sum } => write!(f, "wrapping numbers sum to {sum}, not 0"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Check every rule the invariants of a genuine tangent field must satisfy.
pub fn validate(p: &Polytope, inv: &HomotopyInvariants) -> ValidationReport {
    let mut findings = Vec::new();
    if inv.edge_orient.len() != p.num_edges() {
        findings.push(Finding::EdgeCount { expected: p.num_edges(), found: inv.edge_orient.len() });
    }
    if inv.wraps.len() != p.num_vertices() {
        findings.push(Finding::WrapCount { expected: p.num_vertices(), found: inv.wraps.len() });
    }
    if !findings.is_empty() {
        return ValidationReport { findings };
    }
    for (b, e) in inv.edge_orient.iter().enumerate() {
        let dot = e.dot(&p.edge_direction(b)).abs();
        if (dot - 1.0).abs() > PARALLEL_TOL {
            findings.push(Finding::EdgeNotParallel { edge: b, dot });
        }
    }
    for (c, n) in p.normals().iter().enumerate() {
        let dot = inv.s.dot(n);
        if dot.abs() <= S_TOL {
            findings.push(Finding::SNotGeneric { face: c, dot });
        }
    }
    for (c, face) in p.faces().iter().enumerate() {
        let mut sum = 0;
        let mut complete = true;
        for &a in face {
            match inv.kinks.get(&(a, c)) {
                Some(k) => sum += k,
                None => {
                    complete = false;
                    findings.push(Finding::MissingKink { vertex: a, face: c });
                }
            }
        }
        if complete {
            let q = count_q(p, &inv.edge_orient, c);
            let expected_twice = 2 - q as i64;
            if 2 * sum != expected_twice {
                findings.push(Finding::KinkSum { face: c, sum, expected_twice, q });
            }
        }
    }
    let wsum: i64 = inv.wraps.iter().sum();
    if wsum != 0 {
        findings.push(Finding::WrapSum { sum: wsum });
    }
    ValidationReport { findings }
}

/// Spherical-polygon and kink contributions to the trapped area at vertex
/// `a`: everything except the wrapping number.
pub fn trapped_area_fraction(p: &Polytope, inv: &HomotopyInvariants, a: usize) -> Result<f64, InvariantError> {
    let star = p.vertex_star(a);
    let mut kink_term = 0.0;
    for &c in &star.faces {
        let sgn = inv.s.dot(&p.normals()[c]).signum();
        kink_term += sgn * inv.kink(a, c)? as f64;
    }
    // boundary of the separating surface runs clockwise about the outward ray
    let e: Vec<UnitVec> = star.edges.iter().rev().map(|&b| inv.edge_orient[b]).collect();
    Ok(0.5 * kink_term + fan_term(&e, &inv.s, a)?)
}

/// `Σ_j (A(e₁, e_j, e_{j+1}) / 4π − σ(e₁, e_j, e_{j+1}, s))` over the fan of a
/// geodesic polygon.
pub fn fan_term(e: &[UnitVec], s: &UnitVec, vertex: usize) -> Result<f64, InvariantError> {
    let wrap = |source| InvariantError::Sphere { vertex, source };
    let mut total = 0.0;
    for j in 1..e.len().saturating_sub(1) {
        let (a, b, c) = (&e[0], &e[j], &e[j + 1]);
        for (x, y) in [(a, b), (b, c), (c, a)] {
            if (x.dot(y).abs() - 1.0).abs() < 1e-12 {
                return Err(InvariantError::DegenerateFan { vertex, j });
            }
        }
        let area = sphergeo::oriented_area(a, b, c).map_err(wrap)?;
        let sig = sphergeo::sigma(a, b, c, s).map_err(wrap)?;
        total += area / (4.0 * PI) - sig as f64;
    }
    Ok(total)
}

/// Trapped area `Ω` at vertex `a`, as a fraction of the sphere's area.
pub fn trapped_area(p: &Polytope, inv: &HomotopyInvariants, a: usize) -> Result<f64, InvariantError> {
    Ok(inv.wraps[a] as f64 + trapped_area_fraction(p, inv, a)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrappedAreas {
    pub omega: Vec<f64>,
}

impl TrappedAreas {
    pub fn residual(&self) -> f64 {
        self.omega.iter().sum()
    }
}

/// Trapped areas at every vertex, checked against the zero-sum rule.
pub fn trapped_areas_all(p: &Polytope, inv: &HomotopyInvariants) -> Result<TrappedAreas, InvariantError> {
    let omega = (0..p.num_vertices())
        .map(|a| trapped_area(p, inv, a))
        .collect::<Result<Vec<_>, _>>()?;
    let areas = TrappedAreas { omega };
    let residual = areas.residual();
    if residual.abs() > SUM_TOL {
        return Err(InvariantError::SumRule { residual });
    }
    Ok(areas)
}

/// Recover wrapping numbers from measured trapped areas.
///
/// `inv.wraps` is ignored; only edge orientations, kinks and `s` are used.
pub fn wrapping_from_trapped(p: &Polytope, inv: &HomotopyInvariants, omega: &[f64]) -> Result<Vec<i64>, InvariantError> {
    if omega.len() != p.num_vertices() {
        return Err(InvariantError::Shape(format!(
            "{} measured trapped areas for {} vertices",
            omega.len(),
            p.num_vertices()
        )));
    }
    omega
        .iter()
        .enumerate()
        .map(|(a, &om)| {
            let value = om - trapped_area_fraction(p, inv, a)?;
            let w = value.round();
            let distance = (value - w).abs();
            if distance > INTEGER_TOL {
                return Err(InvariantError::NonInteger { vertex: a, value, distance });
            }
            Ok(w as i64)
        })
        .collect()
}

/// Whether `s` is usable with the given edge orientations: not tangent to any
/// face, and off every fan-triangle boundary.
pub fn s_is_generic(p: &Polytope, edge_orient: &[UnitVec], s: &UnitVec) -> bool {
    if p.normals().iter().any(|n| s.dot(n).abs() <= S_TOL) {
        return false;
    }
    (0..p.num_vertices()).all(|a| {
        let star = p.vertex_star(a);
        let e: Vec<UnitVec> = star.edges.iter().rev().map(|&b| edge_orient[b]).collect();
        (1..e.len() - 1).all(|j| sphergeo::sigma(&e[0], &e[j], &e[j + 1], s).is_ok())
    })
}

/// Draw a generic reference direction by rejection sampling.
pub fn choose_s(p: &Polytope, edge_orient: &[UnitVec], seed: u64) -> Result<UnitVec, InvariantError> {
    const MAX_DRAWS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_DRAWS {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let r = v.norm();
        if !(1e-3..=1.0).contains(&r) {
            continue;
        }
        let s = UnitVec::new(v).expect("nonzero");
        if s_is_generic(p, edge_orient, &s) {
            return Ok(s);
        }
    }
    Err(InvariantError::NoGenericS(MAX_DRAWS))
}

/// Random invariant sets satisfying every sum rule, for tests and demos.
///
/// Edge signs are uniform; kinks on each face are drawn from `-spread..=spread`
/// and the last corner absorbs the remainder of the face sum rule; wrapping
/// numbers are drawn the same way with the last vertex absorbing the sum.
pub fn random_valid(p: &Polytope, spread: i64, rng: &mut impl Rng) -> HomotopyInvariants {
    let signs: Vec<i8> = (0..p.num_edges()).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
    let edge_orient: Vec<UnitVec> = signs
        .iter()
        .enumerate()
        .map(|(b, &sg)| if sg < 0 { -p.edge_direction(b) } else { p.edge_direction(b) })
        .collect();
    let mut kinks = BTreeMap::new();
    for (c, face) in p.faces().iter().enumerate() {
        let target = 1 - count_q(p, &edge_orient, c) as i64 / 2;
        let mut sum = 0;
        for &a in &face[..face.len() - 1] {
            let k = rng.gen_range(-spread..=spread);
            sum += k;
            kinks.insert((a, c), k);
        }
        kinks.insert((*face.last().unwrap(), c), target - sum);
    }
    let n = p.num_vertices();
    let mut wraps: Vec<i64> = (0..n - 1).map(|_| rng.gen_range(-spread..=spread)).collect();
    wraps.push(-wraps.iter().sum::<i64>());
    let seed = rng.gen();
    let s = choose_s(p, &edge_orient, seed).expect("generic s exists for nondegenerate polytopes");
    HomotopyInvariants { edge_orient, kinks, wraps, s }
}
