//! Energy relaxation of tangent fields on axis-aligned boxes.
//!
//! The descent minimizes the link energy `Σ (A/h) |n_i − n_j|²` over lattice
//! links between active nodes (`A` is the dual face area of the link, halved
//! for every boundary plane the link lies in). In the interior its gradient is
//! the 7-point Laplacian; on faces it is the Neumann stencil. Nodes near
//! vertices are frozen and do not enter the link energy.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::field::{self, AnalyzeOptions, DiscreteField, FieldError, Grid, NodeTag};
use crate::polytope::Polytope;
use crate::sphergeo::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("relaxation needs an axis-aligned box")]
    NotABox,
    #[error("unknown ansatz '{0}' (expected constant[:x,y,z], corner-radial[:vertex] or edge-rotation[:face,k])")]
    UnknownAnsatz(String),
    #[error("bad ansatz parameters: {0}")]
    BadParameters(String),
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("projection annihilates the field at node {node:?} (tag {tag:?})")]
    NormalToFace { node: [usize; 3], tag: NodeTag },
    #[error(
        "energy still increasing after {halvings} step halvings at iteration {iteration} \
         (energy {energy:.6e}, step {tau:.3e})"
    )]
    Stall { iteration: usize, energy: f64, tau: f64, halvings: usize },
    #[error("{0}")]
    Field(#[from] FieldError),
}

/// Named seed configurations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Ansatz {
    Constant([f64; 3]),
    /// Points away from the given box vertex, tangent on every face.
    CornerRadial { vertex: usize },
    /// In-plane angle on `face` (and its opposite) winds by `2πk + π/2`
    /// between the two edges at the face's lowest corner.
    EdgeRotation { face: usize, k: i64 },
}

impl fmt::Display for Ansatz {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ansatz::Constant([x, y, z]) => write!(f, "constant:{x},{y},{z}"),
            Ansatz::CornerRadial { vertex } => write!(f, "corner-radial:{vertex}"),
            Ansatz::EdgeRotation { face, k } => write!(f, "edge-rotation:{face},{k}"),
        }
    }
}

impl FromStr for Ansatz {
    type Err = RelaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = |n: usize| -> Result<Vec<f64>, RelaxError> {
            if args.is_empty() {
                return Ok(Vec::new());
            }
            let v: Vec<f64> = args
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| RelaxError::BadParameters(format!("{s}: {e}")))?;
            if v.len() != n {
                return Err(RelaxError::BadParameters(format!("{s}: expected {n} values")));
            }
            Ok(v)
        };
        let int = |x: f64| -> Result<i64, RelaxError> {
            if x.fract() != 0.0 {
                return Err(RelaxError::BadParameters(format!("{s}: {x} is not an integer")));
            }
            Ok(x as i64)
        };
        match name.trim() {
            "constant" => {
                let v = nums(3)?;
                Ok(Ansatz::Constant(if v.is_empty() { [1.0, 0.0, 0.0] } else { [v[0], v[1], v[2]] }))
            }
            "corner-radial" => {
                let v = nums(1)?;
                let vertex = v.first().map(|&x| int(x)).transpose()?.unwrap_or(0);
                if !(0..8).contains(&vertex) {
                    return Err(RelaxError::BadParameters(format!("{s}: a box has vertices 0..8")));
                }
                Ok(Ansatz::CornerRadial { vertex: vertex as usize })
            }
            "edge-rotation" => {
                let v = nums(2)?;
                let (face, k) = if v.is_empty() { (4, 1) } else { (int(v[0])?, int(v[1])?) };
                if !(0..6).contains(&face) {
                    return Err(RelaxError::BadParameters(format!("{s}: a box has faces 0..6")));
                }
                Ok(Ansatz::EdgeRotation { face: face as usize, k })
            }
            _ => Err(RelaxError::UnknownAnsatz(s.to_string())),
        }
    }
}

fn box_of(p: &Polytope) -> Result<(Vec3, Vec3), RelaxError> {
    p.as_box().ok_or(RelaxError::NotABox)
}

impl Ansatz {
    /// The unprojected analytic field on box `p`.
    pub fn evaluator(&self, p: &Polytope) -> Result<Box<dyn Fn(&Vec3) -> Vec3>, RelaxError> {
        let (lo, ext) = box_of(p)?;
        Ok(match *self {
            Ansatz::Constant(v) => Box::new(move |_| Vec3::from(v)),
            Ansatz::CornerRadial { vertex } => {
                let corner = p.vertices()[vertex];
                Box::new(move |x| {
                    Vec3::from_fn(|a, _| {
                        let t = (x[a] - lo[a]) / ext[a];
                        let sign = if corner[a] > lo[a] + 0.5 * ext[a] { -1.0 } else { 1.0 };
                        sign * (PI * t).sin()
                    })
                })
            }
            Ansatz::EdgeRotation { face, k } => {
                let w = face / 2;
                let (u, v) = ((w + 1) % 3, (w + 2) % 3);
                Box::new(move |x| edge_rotation(x, lo, ext, [u, v, w], k))
            }
        })
    }
}

/// `n = sin α (cos Θ e_u + sin Θ e_v) + cos α e_w`, with Θ a blend of constant
/// side values in the `(u, v)` rectangle and α rising from 0 on the four edges
/// parallel to `e_w` to π/2 on the two faces normal to it.
fn edge_rotation(x: &Vec3, lo: Vec3, ext: Vec3, axes: [usize; 3], k: i64) -> Vec3 {
    let [u, v, w] = axes;
    let (su, sv, sw) = (x[u] - lo[u], x[v] - lo[v], x[w] - lo[w]);
    let (lu, lv, lw) = (ext[u], ext[v], ext[w]);
    // side distances and side angles: v=0, u=L, v=W, u=0
    let dist = [sv, lu - su, lv - sv, su];
    let theta_side = [0.0, FRAC_PI_2, 0.0, FRAC_PI_2 + 2.0 * PI * k as f64];
    let theta = match dist.iter().position(|&d| d <= 0.0) {
        Some(i) => theta_side[i],
        None => {
            let wts: Vec<f64> = dist.iter().map(|d| 1.0 / (d * d)).collect();
            wts.iter().zip(&theta_side).map(|(a, b)| a * b).sum::<f64>() / wts.iter().sum::<f64>()
        }
    };
    let d_edge = [(0.0, 0.0), (lu, 0.0), (lu, lv), (0.0, lv)]
        .iter()
        .map(|(cu, cv)| ((su - cu).powi(2) + (sv - cv).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min);
    let bulge = (sw * (lw - sw) / lw).max(0.0);
    let alpha = if d_edge + bulge == 0.0 { FRAC_PI_2 } else { FRAC_PI_2 * d_edge / (d_edge + bulge) };
    let mut n = Vec3::zeros();
    n[u] = alpha.sin() * theta.cos();
    n[v] = alpha.sin() * theta.sin();
    n[w] = alpha.cos();
    n
}

/// Sample an ansatz on a `cells³` grid over box `p` and make it tangent.
pub fn seed_field(p: &Polytope, ansatz: &Ansatz, cells: usize) -> Result<DiscreteField, RelaxError> {
    let eval = ansatz.evaluator(p)?;
    let grid = Grid::for_polytope(p, cells)?;
    let f = DiscreteField::on_polytope(p, grid, eval)?;
    project_tangent(&f, p)
}

/// Remove normal components on faces and snap edge nodes onto their edge
/// line; frozen and interior nodes are left alone.
pub fn project_tangent(f: &DiscreteField, p: &Polytope) -> Result<DiscreteField, RelaxError> {
    let mut values = f.values().to_vec();
    for i in 0..values.len() {
        if !f.is_active(i) {
            continue;
        }
        let n = values[i];
        let tag = f.tags()[i];
        let node = f.grid().ijk(i);
        match tag {
            NodeTag::Face(c) => {
                let normal = p.normals()[c].vec();
                let t = n - normal * n.dot(normal);
                let len = t.norm();
                if len < 1e-12 {
                    return Err(RelaxError::NormalToFace { node, tag });
                }
                values[i] = t / len;
            }
            NodeTag::Edge(b) => {
                let e = *p.edge_direction(b).vec();
                let d = n.dot(&e);
                if d.abs() < 1e-12 {
                    return Err(RelaxError::NormalToFace { node, tag });
                }
                values[i] = e * d.signum();
            }
            _ => {}
        }
    }
    let mut out = f.clone();
    out.set_values(values);
    Ok(out)
}

/// Rotate every active node by a random angle up to `max_angle` about a
/// random axis, then restore tangency.
pub fn perturb(f: &DiscreteField, p: &Polytope, max_angle: f64, seed: u64) -> Result<DiscreteField, RelaxError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = f.values().to_vec();
    for (i, n) in values.iter_mut().enumerate() {
        if !f.is_active(i) {
            continue;
        }
        let axis = loop {
            let a = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let r = a.norm();
            if r > 1e-3 && r <= 1.0 {
                break a / r;
            }
        };
        let angle = rng.gen_range(0.0..max_angle);
        let (s, c) = angle.sin_cos();
        let m = *n * c + axis.cross(n) * s + axis * axis.dot(n) * (1.0 - c);
        *n = m.normalize();
    }
    let mut out = f.clone();
    out.set_values(values);
    project_tangent(&out, p)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelaxConfig {
    pub tau: f64,
    pub max_iter: usize,
    /// Stop when the relative energy decrease over `window` iterations falls
    /// below this.
    pub threshold: f64,
    pub window: usize,
    pub max_halvings: usize,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self { tau: 0.2, max_iter: 20_000, threshold: 1e-8, window: 100, max_halvings: 20 }
    }
}

impl RelaxConfig {
    pub fn validate(&self) -> Result<(), RelaxError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(RelaxError::Config(format!("step size must be positive, got {}", self.tau)));
        }
        if !(self.threshold > 0.0) {
            return Err(RelaxError::Config(format!("threshold must be positive, got {}", self.threshold)));
        }
        if self.window == 0 {
            return Err(RelaxError::Config("window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub residual: f64,
    /// Step size used to reach this row.
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct RelaxOutcome {
    pub field: DiscreteField,
    pub trace: Vec<TraceRow>,
    pub halvings: usize,
    pub stop: StopReason,
}

impl RelaxOutcome {
    pub fn final_energy(&self) -> f64 {
        self.trace.last().map(|r| r.energy).unwrap_or(0.0)
    }

    /// `iter,energy,residual` lines.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iter,energy,residual\n");
        for r in &self.trace {
            s.push_str(&format!("{},{:.16e},{:.16e}\n", r.iter, r.energy, r.residual));
        }
        s
    }
}

/// Lattice links between active nodes with their coefficients `A / h`.
struct Links {
    pairs: Vec<(usize, usize, f64)>,
    /// Node masses (dual-cell volumes).
    mass: Vec<f64>,
}

impl Links {
    fn new(f: &DiscreteField, active: &[bool]) -> Self {
        let g = f.grid();
        let mut pairs = Vec::new();
        for i in 0..g.len() {
            if !active[i] {
                continue;
            }
            let c = g.ijk(i);
            for a in 0..3 {
                if c[a] + 1 >= g.dims[a] {
                    continue;
                }
                let mut cc = c;
                cc[a] += 1;
                let j = g.index(cc[0], cc[1], cc[2]);
                if !active[j] {
                    continue;
                }
                let mut area = 1.0;
                for b in (0..3).filter(|&b| b != a) {
                    let half = c[b] == 0 || c[b] + 1 == g.dims[b];
                    area *= g.spacing[b] * if half { 0.5 } else { 1.0 };
                }
                pairs.push((i, j, area / g.spacing[a]));
            }
        }
        Self { pairs, mass: f.weights().to_vec() }
    }

    fn energy(&self, values: &[Vec3]) -> f64 {
        self.pairs.iter().map(|&(i, j, k)| k * (values[i] - values[j]).norm_squared()).sum()
    }

    /// Mass-normalized graph Laplacian.
    fn laplacian(&self, values: &[Vec3]) -> Vec<Vec3> {
        let mut lap = vec![Vec3::zeros(); values.len()];
        for &(i, j, k) in &self.pairs {
            let d = (values[j] - values[i]) * k;
            lap[i] += d;
            lap[j] -= d;
        }
        for (l, &m) in lap.iter_mut().zip(&self.mass) {
            if m > 0.0 {
                *l /= m;
            }
        }
        lap
    }
}

/// `max |Δ_h n − (n·Δ_h n) n|` over interior nodes with six active neighbours.
pub fn el_residual(f: &DiscreteField) -> f64 {
    let g = f.grid();
    let active = f.active_mask();
    let vals = f.values();
    let mut worst = 0.0f64;
    'nodes: for i in 0..g.len() {
        if !active[i] || f.tags()[i] != NodeTag::Interior {
            continue;
        }
        let c = g.ijk(i);
        let mut lap = Vec3::zeros();
        for a in 0..3 {
            if c[a] == 0 || c[a] + 1 >= g.dims[a] {
                continue 'nodes;
            }
            let mut lo = c;
            let mut hi = c;
            lo[a] -= 1;
            hi[a] += 1;
            let (jl, jh) = (g.index(lo[0], lo[1], lo[2]), g.index(hi[0], hi[1], hi[2]));
            if !active[jl] || !active[jh] {
                continue 'nodes;
            }
            lap += (vals[jl] + vals[jh] - vals[i] * 2.0) / (g.spacing[a] * g.spacing[a]);
        }
        let n = vals[i];
        worst = worst.max((lap - n * n.dot(&lap)).norm());
    }
    worst
}

/// Discrete energy the descent decreases (see the module docs).
pub fn link_energy(f: &DiscreteField) -> f64 {
    Links::new(f, &f.active_mask()).energy(f.values())
}

/// Projected gradient descent on the link energy.
pub fn relax(f0: &DiscreteField, p: &Polytope, cfg: &RelaxConfig) -> Result<RelaxOutcome, RelaxError> {
    cfg.validate()?;
    box_of(p)?;
    let active = f0.active_mask();
    let links = Links::new(f0, &active);
    let h2 = f0.grid().min_spacing().powi(2);

    let mut field = f0.clone();
    let mut energy = links.energy(field.values());
    let mut tau = cfg.tau;
    let mut halvings_total = 0;
    let mut trace = vec![TraceRow { iter: 0, energy, residual: el_residual(&field), tau }];
    let mut stop = StopReason::MaxIterations;
    if energy == 0.0 {
        stop = StopReason::Converged;
    }
    let mut iter = 0;
    while stop == StopReason::MaxIterations && iter < cfg.max_iter {
        iter += 1;
        let lap = links.laplacian(field.values());
        let mut halvings = 0;
        loop {
            let mut next = field.values().to_vec();
            for i in 0..next.len() {
                if !active[i] {
                    continue;
                }
                let n = next[i];
                let g = lap[i] - n * n.dot(&lap[i]);
                next[i] = (n + g * (tau * h2)).normalize();
            }
            let mut candidate = field.clone();
            candidate.set_values(next);
            // a step that pushes a node off its tangent space is rejected like an uphill one
            let candidate = match project_tangent(&candidate, p) {
                Ok(c) => Some(c),
                Err(RelaxError::NormalToFace { .. }) => None,
                Err(e) => return Err(e),
            };
            let scored = candidate.map(|c| (links.energy(c.values()), c));
            if let Some((e, candidate)) = scored.filter(|(e, _)| *e <= energy) {
                field = candidate;
                energy = e;
                break;
            }
            halvings += 1;
            halvings_total += 1;
            if halvings >= cfg.max_halvings {
                return Err(RelaxError::Stall { iteration: iter, energy, tau, halvings });
            }
            tau *= 0.5;
        }
        trace.push(TraceRow { iter, energy, residual: el_residual(&field), tau });
        if iter >= cfg.window {
            let before = trace[iter - cfg.window].energy;
            if before <= 0.0 || (before - energy) / before < cfg.threshold {
                stop = StopReason::Converged;
            }
        }
    }
    Ok(RelaxOutcome { field, trace, halvings: halvings_total, stop })
}

/// Energy of the relaxed field against the bound of its own measured class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sandwich {
    pub seed_energy: f64,
    pub relaxed_energy: f64,
    pub bound: f64,
    /// `relaxed_energy / bound − 1`; absent when the bound is zero.
    /// The check fails when the relaxed field's class could not be measured.
    pub relative_margin: Option<f64>,
    pub passed: bool,
    /// Invariants that differ between seed and relaxed field.
    pub class_changes: Vec<String>,
}

/// Discretization allowance on the sandwich inequality.
pub const SANDWICH_ALLOWANCE: f64 = 0.05;

pub fn sandwich(
    p: &Polytope,
    seed: &DiscreteField,
    relaxed: &DiscreteField,
    opts: &AnalyzeOptions,
) -> Result<Sandwich, RelaxError> {
    let a0 = field::analyze(seed, p, opts)?;
    let a1 = field::analyze(relaxed, p, opts)?;
    let mut class_changes = Vec::new();
    for (b, s0) in &a0.edge_signs {
        if a1.edge_signs.get(b) != Some(s0) {
            class_changes.push(format!("edge {b} orientation"));
        }
    }
    let after: BTreeMap<(usize, usize), i64> = a1.kinks.iter().map(|&(a, c, k)| ((a, c), k)).collect();
    for &(a, c, k0) in &a0.kinks {
        match after.get(&(a, c)) {
            Some(&k1) if k1 == k0 => {}
            Some(k1) => class_changes.push(format!("kink at vertex {a}, face {c}: {k0} -> {k1}")),
            None => class_changes.push(format!("kink at vertex {a}, face {c}: {k0} -> unmeasured")),
        }
    }
    for (a, o0) in &a0.omega {
        let o1 = a1.omega[a];
        if (o0 - o1).abs() > 1e-3 {
            class_changes.push(format!("trapped area at vertex {a}: {o0:.6} -> {o1:.6}"));
        }
    }
    for e in &a1.extraction_errors {
        if !a0.extraction_errors.contains(e) {
            class_changes.push(format!("no longer measurable: {e}"));
        }
    }
    let measured = a1.complete.as_ref().and_then(|c| c.bound_value);
    let bound = measured.unwrap_or(0.0);
    let relaxed_energy = a1.energy.energy;
    Ok(Sandwich {
        seed_energy: a0.energy.energy,
        relaxed_energy,
        bound,
        relative_margin: (bound > 0.0).then(|| relaxed_energy / bound - 1.0),
        passed: measured.is_some() && relaxed_energy >= bound * (1.0 - SANDWICH_ALLOWANCE),
        class_changes,
    })
}
