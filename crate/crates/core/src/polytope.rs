//! Convex polyhedra with vertex/edge/face incidence.
//!
//! A [`Polytope`] is built from a vertex list and counterclockwise face loops
//! (as seen from outside). Edges, outward normals and incidence are derived and
//! the result is checked for closedness, consistent orientation, planarity and
//! convexity.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::Deserialize;
use thiserror::Error;

use crate::sphergeo::{UnitVec, Vec3};

/// Relative tolerance for planarity and convexity checks, scaled by the
/// bounding-box diameter.
pub const REL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolytopeError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("vertex {vertex} lies {distance:e} outside the plane of face {face}")]
    Convexity { vertex: usize, face: usize, distance: f64 },
    #[error("face {face} is not planar (vertex {vertex} is {distance:e} off its plane)")]
    Planarity { face: usize, vertex: usize, distance: f64 },
    #[error("vertices {0} and {1} coincide")]
    DuplicateVertex(usize, usize),
    #[error("unknown built-in shape `{0}`")]
    UnknownShape(String),
}

/// An edge with its endpoints (`lo < hi`) and the two faces that share it.
///
/// `faces[0]` traverses the edge from `lo` to `hi`, `faces[1]` from `hi` to `lo`.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub faces: [usize; 2],
}

#[derive(Clone, Debug)]
pub struct Polytope {
    vertices: Vec<Vec3>,
    faces: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    normals: Vec<UnitVec>,
    edge_index: HashMap<(usize, usize), usize>,
    tol: f64,
}

/// Edges and faces around one vertex in cyclic order.
///
/// Edges are sorted counterclockwise about `outward` (the normalized sum of the
/// incident face normals). `faces[j]` is the face between `edges[j]` and
/// `edges[(j + 1) % m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexStar {
    pub vertex: usize,
    pub edges: Vec<usize>,
    pub faces: Vec<usize>,
    pub outward: UnitVec,
}

impl VertexStar {
    /// Unit ray from the vertex into the interior of the polytope.
    pub fn interior_ray(&self) -> UnitVec {
        -self.outward
    }

    pub fn degree(&self) -> usize {
        self.edges.len()
    }
}

impl Polytope {
    pub fn from_faces(vertices: Vec<Vec3>, faces: Vec<Vec<usize>>) -> Result<Self, PolytopeError> {
        let nv = vertices.len();
        if nv < 4 {
            return Err(PolytopeError::Topology(format!("need at least 4 vertices, got {nv}")));
        }
        if faces.len() < 4 {
            return Err(PolytopeError::Topology(format!("need at least 4 faces, got {}", faces.len())));
        }
        let (lo, hi) = vertices.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), v| (lo.inf(v), hi.sup(v)),
        );
        let diameter = (hi - lo).norm();
        if !diameter.is_finite() || diameter == 0.0 {
            return Err(PolytopeError::Topology("degenerate vertex coordinates".into()));
        }
        let tol = REL_TOL * diameter;

        for i in 0..nv {
            for j in i + 1..nv {
                if (vertices[i] - vertices[j]).norm() <= tol {
                    return Err(PolytopeError::DuplicateVertex(i, j));
                }
            }
        }

        // directed half-edges -> face
        let mut half: HashMap<(usize, usize), usize> = HashMap::new();
        for (c, face) in faces.iter().enumerate() {
            if face.len() < 3 {
                return Err(PolytopeError::Topology(format!("face {c} has fewer than 3 vertices")));
            }
            for (k, &i) in face.iter().enumerate() {
                if i >= nv {
                    return Err(PolytopeError::Topology(format!("face {c} references missing vertex {i}")));
                }
                let j = face[(k + 1) % face.len()];
                if i == j {
                    return Err(PolytopeError::Topology(format!("face {c} repeats vertex {i}")));
                }
                if half.insert((i, j), c).is_some() {
                    return Err(PolytopeError::Topology(format!(
                        "directed edge {i}->{j} used by more than one face (inconsistent orientation)"
                    )));
                }
            }
        }
        let mut keys: Vec<_> = half.keys().copied().filter(|(i, j)| i < j).collect();
        keys.sort_unstable();
        let mut edges = Vec::new();
        let mut edge_index = HashMap::new();
        for (i, j) in keys {
            let f0 = half[&(i, j)];
            let f1 = *half.get(&(j, i)).ok_or_else(|| {
                PolytopeError::Topology(format!("edge {i}-{j} is not shared by exactly two faces"))
            })?;
            edge_index.insert((i, j), edges.len());
            edges.push(Edge { vertices: [i, j], faces: [f0, f1] });
        }
        for &(i, j) in half.keys() {
            if i > j && !half.contains_key(&(j, i)) {
                return Err(PolytopeError::Topology(format!(
                    "edge {j}-{i} is not shared by exactly two faces"
                )));
            }
        }
        let mut used = vec![false; nv];
        for f in &faces {
            for &i in f {
                used[i] = true;
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(PolytopeError::Topology(format!("vertex {i} belongs to no face")));
        }
        if nv as i64 - edges.len() as i64 + faces.len() as i64 != 2 {
            return Err(PolytopeError::Topology(format!(
                "Euler characteristic {} != 2",
                nv as i64 - edges.len() as i64 + faces.len() as i64
            )));
        }

        let centroid = vertices.iter().sum::<Vec3>() / nv as f64;
        let mut normals = Vec::with_capacity(faces.len());
        for (c, face) in faces.iter().enumerate() {
            // Newell's method
            let mut n = Vec3::zeros();
            for (k, &i) in face.iter().enumerate() {
                let p = vertices[i];
                let q = vertices[face[(k + 1) % face.len()]];
                n += Vec3::new(
                    (p.y - q.y) * (p.z + q.z),
                    (p.z - q.z) * (p.x + q.x),
                    (p.x - q.x) * (p.y + q.y),
                );
            }
            let n = UnitVec::new(n)
                .map_err(|_| PolytopeError::Topology(format!("face {c} has zero area")))?;
            let fc = face.iter().map(|&i| vertices[i]).sum::<Vec3>() / face.len() as f64;
            if (fc - centroid).dot(n.vec()) <= 0.0 {
                return Err(PolytopeError::Topology(format!(
                    "face {c} is oriented inward (loops must be counterclockwise from outside)"
                )));
            }
            for &i in face {
                let d = (vertices[i] - fc).dot(n.vec());
                if d.abs() > tol {
                    return Err(PolytopeError::Planarity { face: c, vertex: i, distance: d });
                }
            }
            for (a, v) in vertices.iter().enumerate() {
                let d = (v - fc).dot(n.vec());
                if d > tol {
                    return Err(PolytopeError::Convexity { vertex: a, face: c, distance: d });
                }
            }
            normals.push(n);
        }

        Ok(Self { vertices, faces, edges, normals, edge_index, tol })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }
    pub fn faces(&self) -> &[Vec<usize>] {
        &self.faces
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    pub fn normals(&self) -> &[UnitVec] {
        &self.normals
    }
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }
    /// Absolute geometric tolerance for this polytope.
    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Unit direction of edge `b`, from its lower to its higher vertex index.
    pub fn edge_direction(&self, b: usize) -> UnitVec {
        let [i, j] = self.edges[b].vertices;
        UnitVec::new(self.vertices[j] - self.vertices[i]).expect("edges have positive length")
    }

    pub fn edge_length(&self, b: usize) -> f64 {
        let [i, j] = self.edges[b].vertices;
        (self.vertices[j] - self.vertices[i]).norm()
    }

    /// Signed distance of `p` to the plane of face `c` (positive outside).
    pub fn face_distance(&self, c: usize, p: &Vec3) -> f64 {
        (p - self.vertices[self.faces[c][0]]).dot(self.normals[c].vec())
    }

    pub fn contains_point(&self, p: &Vec3, tol: f64) -> bool {
        (0..self.faces.len()).all(|c| self.face_distance(c, p) <= tol)
    }

    pub fn faces_at(&self, a: usize) -> Vec<usize> {
        (0..self.faces.len()).filter(|&c| self.faces[c].contains(&a)).collect()
    }

    pub fn edges_at(&self, a: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&b| self.edges[b].vertices.contains(&a)).collect()
    }

    /// The other endpoint of edge `b`.
    pub fn opposite(&self, b: usize, a: usize) -> usize {
        let [i, j] = self.edges[b].vertices;
        if i == a {
            j
        } else {
            i
        }
    }

    pub fn vertex_star(&self, a: usize) -> VertexStar {
        assert!(a < self.vertices.len(), "vertex index {a} out of range");
        let faces = self.faces_at(a);
        let outward = UnitVec::new(faces.iter().map(|&c| *self.normals[c].vec()).sum())
            .expect("incident normals of a convex vertex cannot cancel");
        let basis = crate::sphergeo::PlaneBasis::orthogonal_to(&outward);
        let mut edges: Vec<(f64, usize)> = self
            .edges_at(a)
            .into_iter()
            .map(|b| {
                let d = self.vertices[self.opposite(b, a)] - self.vertices[a];
                (basis.angle_of(&d), b)
            })
            .collect();
        edges.sort_by(|x, y| x.0.total_cmp(&y.0));
        // start the cycle at the lowest edge index so relabelings agree
        let start = edges
            .iter()
            .enumerate()
            .min_by_key(|(_, (_, b))| *b)
            .map(|(k, _)| k)
            .unwrap_or(0);
        edges.rotate_left(start);
        let edges: Vec<usize> = edges.into_iter().map(|(_, b)| b).collect();
        let m = edges.len();
        let star_faces = (0..m)
            .map(|j| {
                let f0 = self.edges[edges[j]].faces;
                let f1 = self.edges[edges[(j + 1) % m]].faces;
                *f0.iter()
                    .find(|f| f1.contains(f))
                    .expect("consecutive edges around a vertex share a face")
            })
            .collect();
        VertexStar { vertex: a, edges, faces: star_faces, outward }
    }

    /// Pairwise Euclidean distances between vertices.
    pub fn vertex_distance_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.vertices.len();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let r = (self.vertices[i] - self.vertices[j]).norm();
                d[i][j] = r;
                d[j][i] = r;
            }
        }
        d
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        self.vertices.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), v| (lo.inf(v), hi.sup(v)),
        )
    }

    /// `Some((origin, extents))` when this polytope is an axis-aligned box.
    pub fn as_box(&self) -> Option<(Vec3, Vec3)> {
        if self.vertices.len() != 8 || self.faces.len() != 6 {
            return None;
        }
        let axis_aligned = self.normals.iter().all(|n| {
            let v = n.vec();
            let big = v.iter().filter(|c| (c.abs() - 1.0).abs() < 1e-12).count();
            big == 1
        });
        if !axis_aligned {
            return None;
        }
        let (lo, hi) = self.bounding_box();
        Some((lo, hi - lo))
    }

    /// Axis-aligned box `[0,l]×[0,w]×[0,h]`.
    ///
    /// Vertex `i` sits at `(l·(i&1), w·((i>>1)&1), h·((i>>2)&1))`; faces are
    /// ordered `x=0, x=l, y=0, y=w, z=0, z=h`.
    pub fn cuboid(l: f64, w: f64, h: f64) -> Result<Self, PolytopeError> {
        let vertices = (0..8)
            .map(|i| {
                Vector3::new(
                    l * (i & 1) as f64,
                    w * ((i >> 1) & 1) as f64,
                    h * ((i >> 2) & 1) as f64,
                )
            })
            .collect();
        let faces = vec![
            vec![0, 4, 6, 2],
            vec![1, 3, 7, 5],
            vec![0, 1, 5, 4],
            vec![2, 6, 7, 3],
            vec![0, 2, 3, 1],
            vec![4, 5, 7, 6],
        ];
        Self::from_faces(vertices, faces)
    }

    pub fn unit_cube() -> Self {
        Self::cuboid(1.0, 1.0, 1.0).expect("unit cube is valid")
    }

    /// Regular tetrahedron with unit edges.
    pub fn regular_tetrahedron() -> Self {
        let s = 1.0 / (2.0 * 2f64.sqrt());
        let vertices = vec![
            Vector3::new(s, s, s),
            Vector3::new(s, -s, -s),
            Vector3::new(-s, s, -s),
            Vector3::new(-s, -s, s),
        ];
        let faces = vec![vec![0, 1, 2], vec![0, 3, 1], vec![0, 2, 3], vec![1, 3, 2]];
        Self::from_faces(vertices, faces).expect("regular tetrahedron is valid")
    }

    /// Corner tetrahedron `{x, y, z >= 0, x + y + z <= r}`; vertex 0 is the origin.
    pub fn octant(r: f64) -> Result<Self, PolytopeError> {
        let vertices = vec![
            Vector3::zeros(),
            Vector3::new(r, 0.0, 0.0),
            Vector3::new(0.0, r, 0.0),
            Vector3::new(0.0, 0.0, r),
        ];
        let faces = vec![vec![0, 2, 1], vec![0, 1, 3], vec![0, 3, 2], vec![1, 2, 3]];
        Self::from_faces(vertices, faces)
    }

    /// Parse an OFF file (vertex and face sections only).
    pub fn parse_off(text: &str) -> Result<Self, PolytopeError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let perr = |line: usize, msg: &str| PolytopeError::Parse { line, msg: msg.to_string() };
        let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
        let mut counts_inline = None;
        if header != "OFF" {
            if let Some(rest) = header.strip_prefix("OFF") {
                counts_inline = Some((ln, rest.trim()));
            } else {
                return Err(perr(ln, "missing OFF header"));
            }
        }
        let (ln, counts) = match counts_inline {
            Some(c) => c,
            None => lines.next().ok_or_else(|| perr(ln + 1, "missing counts line"))?,
        };
        let nums: Vec<usize> = counts
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(ln, "bad count")))
            .collect::<Result<_, _>>()?;
        if nums.len() < 2 {
            return Err(perr(ln, "counts line needs vertex and face counts"));
        }
        let (nv, nf) = (nums[0], nums[1]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| perr(ln, "too few vertex lines"))?;
            let c: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr(ln, "bad coordinate")))
                .collect::<Result<_, _>>()?;
            if c.len() < 3 || c.iter().any(|x| !x.is_finite()) {
                return Err(perr(ln, "vertex line needs three finite coordinates"));
            }
            vertices.push(Vector3::new(c[0], c[1], c[2]));
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (ln, l) = lines.next().ok_or_else(|| perr(ln, "too few face lines"))?;
            let idx: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| perr(ln, "bad face index")))
                .collect::<Result<_, _>>()?;
            let (&k, rest) = idx.split_first().ok_or_else(|| perr(ln, "empty face line"))?;
            if rest.len() < k {
                return Err(perr(ln, "face line shorter than its vertex count"));
            }
            faces.push(rest[..k].to_vec());
        }
        Self::from_faces(vertices, faces)
    }

    /// Parse `{"vertices": [[x,y,z],…], "faces": [[i,…],…]}`.
    pub fn parse_json(text: &str) -> Result<Self, PolytopeError> {
        #[derive(Deserialize)]
        struct Doc {
            vertices: Vec<[f64; 3]>,
            faces: Vec<Vec<usize>>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| PolytopeError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        Self::from_faces(doc.vertices.into_iter().map(Vector3::from).collect(), doc.faces)
    }

    /// Parse either format, deciding by the first non-blank character.
    pub fn parse(text: &str) -> Result<Self, PolytopeError> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_off(text)
        }
    }

    /// Built-in shapes: `cube`, `tetrahedron`, `box LxWxH`, `octant R`.
    pub fn builtin(name: &str) -> Result<Self, PolytopeError> {
        let name = name.trim();
        let unknown = || PolytopeError::UnknownShape(name.to_string());
        match name {
            "cube" => return Ok(Self::unit_cube()),
            "tetrahedron" => return Ok(Self::regular_tetrahedron()),
            _ => {}
        }
        let arg = |prefix: &str| {
            name.strip_prefix(prefix)
                .map(|r| r.trim_start_matches([' ', ':', '=']).trim())
        };
        if let Some(dims) = arg("box") {
            let d: Vec<f64> = dims
                .split(['x', 'X'])
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| unknown())?;
            if d.len() != 3 || d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(unknown());
            }
            return Self::cuboid(d[0], d[1], d[2]);
        }
        if let Some(r) = arg("octant") {
            let r: f64 = if r.is_empty() { 1.0 } else { r.parse().map_err(|_| unknown())? };
            if !(r.is_finite() && r > 0.0) {
                return Err(unknown());
            }
            return Self::octant(r);
        }
        Err(unknown())
    }
}
