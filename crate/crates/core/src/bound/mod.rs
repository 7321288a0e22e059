//! The topological lower bound on the energy of a homotopy class.
//!
//! The bound is `8π · max Σ Ω^a ξ^a` over potentials with
//! `|ξ^a − ξ^b| <= |v^a − v^b|`. Its dual is an optimal-transport problem
//! moving positive trapped area to negative trapped area at Euclidean cost.
//! Both are solved independently ([`solve_primal`] by a dense simplex over the
//! potentials, [`solve_dual`] by a transportation simplex) and their gap is
//! reported as a certificate.

mod simplex;
mod transport;

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::invariants::{self, HomotopyInvariants, InvariantError};
use crate::polytope::Polytope;
use crate::sphergeo::Vec3;

pub use simplex::{maximize, LpOutcome};

/// Absolute slack allowed on potential constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Relative duality-gap tolerance.
pub const GAP_TOL: f64 = 1e-7;
/// Tolerance on metric checks and the zero-sum condition.
pub const INSTANCE_TOL: f64 = 1e-9;

const MASS_EPS: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("{0}")]
    Invariants(#[from] InvariantError),
    #[error("invariants fail validation: {0}")]
    Invalid(String),
    #[error("bad bound instance: {0}")]
    Instance(String),
    #[error("supply {supply} and demand {demand} do not balance")]
    Unbalanced { supply: f64, demand: f64 },
    #[error("potential LP is unbounded (corrupted distances)")]
    Unbounded,
    #[error("vertices {0} and {1} violate the Lipschitz condition")]
    NotLipschitz(usize, usize),
    #[error("nonzero trapped areas gave a non-positive bound {0}")]
    NotPositive(f64),
}

/// Trapped areas and the vertex distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInstance {
    omega: Vec<f64>,
    dist: Vec<Vec<f64>>,
}

impl BoundInstance {
    pub fn new(omega: Vec<f64>, dist: Vec<Vec<f64>>) -> Result<Self, BoundError> {
        let n = omega.len();
        let bad = |m: String| Err(BoundError::Instance(m));
        if n == 0 {
            return bad("no vertices".into());
        }
        if dist.len() != n || dist.iter().any(|r| r.len() != n) {
            return bad(format!("distance matrix is not {n}x{n}"));
        }
        if omega.iter().chain(dist.iter().flatten()).any(|x| !x.is_finite()) {
            return bad("non-finite entry".into());
        }
        let scale = dist.iter().flatten().fold(1.0f64, |a, &b| a.max(b));
        let tol = INSTANCE_TOL * scale;
        for i in 0..n {
            if dist[i][i] != 0.0 {
                return bad(format!("nonzero diagonal at {i}"));
            }
            for j in 0..n {
                if dist[i][j] < 0.0 || (dist[i][j] - dist[j][i]).abs() > tol {
                    return bad(format!("entry ({i},{j}) is negative or asymmetric"));
                }
                for k in 0..n {
                    if dist[i][k] > dist[i][j] + dist[j][k] + tol {
                        return bad(format!("triangle inequality fails for ({i},{j},{k})"));
                    }
                }
            }
        }
        let sum: f64 = omega.iter().sum();
        if sum.abs() > INSTANCE_TOL {
            return bad(format!("trapped areas sum to {sum:e}"));
        }
        Ok(Self { omega, dist })
    }

    pub fn from_polytope(p: &Polytope, omega: Vec<f64>) -> Result<Self, BoundError> {
        Self::new(omega, p.vertex_distance_matrix())
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }
    pub fn distances(&self) -> &[Vec<f64>] {
        &self.dist
    }
    pub fn len(&self) -> usize {
        self.omega.len()
    }
    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// `8π Σ Ω^a ξ^a`.
    pub fn objective(&self, xi: &[f64]) -> f64 {
        8.0 * PI * self.omega.iter().zip(xi).map(|(o, x)| o * x).sum::<f64>()
    }

    /// Same instance with every distance multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            omega: self.omega.clone(),
            dist: self.dist.iter().map(|r| r.iter().map(|d| d * lambda).collect()).collect(),
        }
    }

    pub fn is_feasible(&self, xi: &[f64]) -> bool {
        let n = self.len();
        (0..n).all(|i| (0..n).all(|j| xi[i] - xi[j] <= self.dist[i][j] + FEASIBILITY_TOL))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanArc {
    pub from: usize,
    pub to: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub value: f64,
    pub plan: Vec<PlanArc>,
    /// Optimal potentials recovered from the transport duals, gauged to
    /// `xi[0] = 0`.
    pub xi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundResult {
    pub value: f64,
    pub xi: Vec<f64>,
    pub plan: Vec<PlanArc>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
}

impl BoundResult {
    pub fn certified(&self) -> bool {
        self.gap <= GAP_TOL * (1.0 + self.value.abs())
    }

    pub fn report(&self) -> BoundReport {
        BoundReport {
            bound: self.value,
            xi: self.xi.clone(),
            plan: self.plan.clone(),
            duality_gap: self.gap,
        }
    }
}

/// JSON report fragment for a bound evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound: f64,
    pub xi: Vec<f64>,
    pub plan: Vec<PlanArc>,
    pub duality_gap: f64,
}

/// Maximize the potential objective directly with a dense simplex.
///
/// Substituting `y_a = ξ_a + d(0, a)` with `ξ_0 = 0` puts every constraint in
/// `A y <= b` form with `b >= 0` (by the triangle inequality), so the origin is
/// a feasible start.
pub fn solve_primal(inst: &BoundInstance) -> Result<(f64, Vec<f64>), BoundError> {
    let n = inst.len();
    if n == 1 {
        return Ok((0.0, vec![0.0]));
    }
    let d = &inst.dist;
    let vars = n - 1;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for a in 1..n {
        let mut r = vec![0.0; vars];
        r[a - 1] = 1.0;
        rows.push(r);
        rhs.push(2.0 * d[0][a]);
    }
    for a in 1..n {
        for b in 1..n {
            if a != b {
                let mut r = vec![0.0; vars];
                r[a - 1] = 1.0;
                r[b - 1] = -1.0;
                rows.push(r);
                rhs.push((d[a][b] + d[0][a] - d[0][b]).max(0.0));
            }
        }
    }
    let c: Vec<f64> = inst.omega[1..].to_vec();
    match simplex::maximize(&c, &rows, &rhs) {
        LpOutcome::Unbounded => Err(BoundError::Unbounded),
        LpOutcome::Optimal { x, .. } => {
            let mut xi = vec![0.0; n];
            for a in 1..n {
                xi[a] = x[a - 1] - d[0][a];
            }
            Ok((inst.objective(&xi), xi))
        }
    }
}

/// Solve the transport problem from positive to negative trapped area.
pub fn solve_dual(inst: &BoundInstance) -> Result<DualSolution, BoundError> {
    let n = inst.len();
    let sources: Vec<usize> = (0..n).filter(|&a| inst.omega[a] > MASS_EPS).collect();
    let sinks: Vec<usize> = (0..n).filter(|&a| inst.omega[a] < -MASS_EPS).collect();
    let supply_total: f64 = sources.iter().map(|&a| inst.omega[a]).sum();
    let demand_total: f64 = sinks.iter().map(|&a| -inst.omega[a]).sum();
    if (supply_total - demand_total).abs() > INSTANCE_TOL {
        return Err(BoundError::Unbalanced { supply: supply_total, demand: demand_total });
    }
    if sources.is_empty() || sinks.is_empty() {
        return Ok(DualSolution { value: 0.0, plan: Vec::new(), xi: vec![0.0; n] });
    }
    let supply: Vec<f64> = sources.iter().map(|&a| inst.omega[a]).collect();
    // rescale demands so the totals agree exactly
    let ratio = supply_total / demand_total;
    let demand: Vec<f64> = sinks.iter().map(|&a| -inst.omega[a] * ratio).collect();
    let cost: Vec<Vec<f64>> = sources
        .iter()
        .map(|&i| sinks.iter().map(|&j| inst.dist[i][j]).collect())
        .collect();
    let t = transport::solve(&supply, &demand, &cost);

    let mut plan = Vec::new();
    for (r, &i) in sources.iter().enumerate() {
        for (c, &j) in sinks.iter().enumerate() {
            if t.flow[r][c] > MASS_EPS {
                plan.push(PlanArc { from: i, to: j, mass: t.flow[r][c] });
            }
        }
    }
    // sink potentials are -v; extend to every vertex by the c-transform
    // ξ(x) = min_j (ξ_j + d(x, j)), which is 1-Lipschitz and optimal
    let xi_sink: Vec<f64> = t.v.iter().map(|v| -v).collect();
    let mut xi: Vec<f64> = (0..n)
        .map(|x| {
            sinks
                .iter()
                .zip(&xi_sink)
                .map(|(&j, &p)| p + inst.dist[x][j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let gauge = xi[0];
    for x in xi.iter_mut() {
        *x -= gauge;
    }
    Ok(DualSolution { value: 8.0 * PI * t.cost, plan, xi })
}

/// Evaluate the bound for an instance, certifying it with both solvers.
pub fn bound_for_instance(inst: &BoundInstance) -> Result<BoundResult, BoundError> {
    let (primal_value, _) = solve_primal(inst)?;
    let dual = solve_dual(inst)?;
    let value = dual.value;
    if inst.omega.iter().any(|o| o.abs() > MASS_EPS) && value <= 0.0 {
        return Err(BoundError::NotPositive(value));
    }
    Ok(BoundResult {
        value,
        xi: dual.xi,
        plan: dual.plan,
        primal_value,
        dual_value: dual.value,
        gap: (primal_value - dual.value).abs(),
    })
}

/// The lower bound for the homotopy class described by `inv`.
pub fn lower_bound(p: &Polytope, inv: &HomotopyInvariants) -> Result<BoundResult, BoundError> {
    let report = invariants::validate(p, inv);
    if !report.passed() {
        let msg: Vec<String> = report.findings.iter().map(|f| f.to_string()).collect();
        return Err(BoundError::Invalid(msg.join("; ")));
    }
    let areas = invariants::trapped_areas_all(p, inv)?;
    bound_for_instance(&BoundInstance::from_polytope(p, areas.omega)?)
}

/// The 1-Lipschitz function `ξ(r) = max_a (ξ^a − |r − v^a|)` through given
/// vertex values.
#[derive(Clone, Debug)]
pub struct LipschitzExtension {
    xi: Vec<f64>,
    points: Vec<Vec3>,
}

impl LipschitzExtension {
    pub fn new(xi: Vec<f64>, points: Vec<Vec3>) -> Result<Self, BoundError> {
        if xi.len() != points.len() {
            return Err(BoundError::Instance(format!("{} values for {} points", xi.len(), points.len())));
        }
        for i in 0..xi.len() {
            for j in 0..xi.len() {
                if xi[i] - xi[j] > (points[i] - points[j]).norm() + FEASIBILITY_TOL {
                    return Err(BoundError::NotLipschitz(i, j));
                }
            }
        }
        Ok(Self { xi, points })
    }

    pub fn eval(&self, r: &Vec3) -> f64 {
        self.xi
            .iter()
            .zip(&self.points)
            .map(|(x, v)| x - (r - v).norm())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force transport oracle: enumerate every basic solution (choice of
    /// m+n-1 cells), keep the feasible ones, return the cheapest cost.
    fn brute_force_transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> f64 {
        let (m, n) = (supply.len(), demand.len());
        let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let k = m + n - 1;
        let mut best = f64::INFINITY;
        let total = cells.len();
        for mask in 0u32..(1 << total) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let chosen: Vec<usize> = (0..total).filter(|b| mask >> b & 1 == 1).collect();
            // equality rows: m supplies + first n-1 demands
            let mut a = DMatrix::<f64>::zeros(k, k);
            let mut rhs = DVector::<f64>::zeros(k);
            for (col, &ci) in chosen.iter().enumerate() {
                let (i, j) = cells[ci];
                a[(i, col)] = 1.0;
                if j < n - 1 {
                    a[(m + j, col)] = 1.0;
                }
            }
            for i in 0..m {
                rhs[i] = supply[i];
            }
            for j in 0..n - 1 {
                rhs[m + j] = demand[j];
            }
            let Some(x) = a.clone().lu().solve(&rhs) else { continue };
            if (&a * &x - &rhs).norm() > 1e-9 || x.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let c: f64 = chosen.iter().zip(x.iter()).map(|(&ci, &v)| v * cost[cells[ci].0][cells[ci].1]).sum();
            best = best.min(c);
        }
        best
    }

    fn random_instance(rng: &mut impl Rng, n: usize) -> (BoundInstance, Vec<Vec3>) {
        let pts: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let mut omega: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = omega.iter().sum::<f64>() / n as f64;
        for o in omega.iter_mut() {
            *o -= mean;
        }
        let d = pts.iter().map(|p| pts.iter().map(|q| (p - q).norm()).collect()).collect();
        (BoundInstance::new(omega, d).unwrap(), pts)
    }

    #[test]
    fn zero_areas_give_zero() {
        let inst = BoundInstance::from_polytope(&Polytope::unit_cube(), vec![0.0; 8]).unwrap();
        let r = bound_for_instance(&inst).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.xi.iter().all(|&x| x == 0.0));
        assert!(r.plan.is_empty());
    }

    #[test]
    fn two_vertex_closed_form() {
        let p = Polytope::unit_cube();
        for (other, dist) in [(1, 1.0), (3, 2f64.sqrt()), (7, 3f64.sqrt())] {
            for q in [0.25, 0.5, 1.0] {
                let mut omega = vec![0.0; 8];
                omega[0] = q;
                omega[other] = -q;
                let inst = BoundInstance::from_polytope(&p, omega).unwrap();
                let r = bound_for_instance(&inst).unwrap();
                let expected = 8.0 * PI * q * dist;
                assert!((r.value - expected).abs() <= 1e-12 * expected);
                assert!((r.primal_value - expected).abs() <= 1e-12 * expected);
                assert_eq!(r.plan, vec![PlanArc { from: 0, to: other, mass: q }]);
            }
        }
    }

    #[test]
    fn cube_source_with_three_neighbour_sinks() {
        let p = Polytope::unit_cube();
        let third = 1.0 / 3.0;
        let omega = vec![1.0, -third, -third, 0.0, -third, 0.0, 0.0, 0.0];
        let inst = BoundInstance::from_polytope(&p, omega.clone()).unwrap();
        let oracle = brute_force_transport(&[1.0], &[third, third, third], &[vec![1.0, 1.0, 1.0]]);
        let r = bound_for_instance(&inst).unwrap();
        assert_abs_diff_eq!(r.value, 8.0 * PI * oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(r.value, 8.0 * PI, epsilon = 1e-12);
        assert!(inst.is_feasible(&r.xi));
        assert_eq!(r.xi[0], 0.0);
    }

    #[test]
    fn right_triangle_split() {
        let d = vec![vec![0.0, 3.0, 4.0], vec![3.0, 0.0, 5.0], vec![4.0, 5.0, 0.0]];
        let inst = BoundInstance::new(vec![1.0, -0.5, -0.5], d.clone()).unwrap();
        let dual = solve_dual(&inst).unwrap();
        let oracle = brute_force_transport(&[1.0], &[0.5, 0.5], &[vec![3.0, 4.0]]);
        assert_abs_diff_eq!(dual.value, 8.0 * PI * oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(dual.value, 8.0 * PI * (0.5 * 3.0 + 0.5 * 4.0), epsilon = 1e-12);
        assert_eq!(dual.plan.len(), 2);
        let (pv, _) = solve_primal(&inst).unwrap();
        assert_abs_diff_eq!(pv, dual.value, epsilon = 1e-10);
    }

    #[test]
    fn random_instances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..60 {
            let n = rng.gen_range(2..=6);
            let (inst, _) = random_instance(&mut rng, n);
            let src: Vec<usize> = (0..n).filter(|&a| inst.omega()[a] > 0.0).collect();
            let snk: Vec<usize> = (0..n).filter(|&a| inst.omega()[a] < 0.0).collect();
            if src.len() * snk.len() > 9 {
                continue;
            }
            let supply: Vec<f64> = src.iter().map(|&a| inst.omega()[a]).collect();
            let demand: Vec<f64> = snk.iter().map(|&a| -inst.omega()[a]).collect();
            let cost: Vec<Vec<f64>> = src.iter().map(|&i| snk.iter().map(|&j| inst.distances()[i][j]).collect()).collect();
            let oracle = 8.0 * PI * brute_force_transport(&supply, &demand, &cost);
            let r = bound_for_instance(&inst).unwrap();
            assert!((r.dual_value - oracle).abs() <= 1e-9 * (1.0 + oracle));
            assert!((r.primal_value - oracle).abs() <= 1e-9 * (1.0 + oracle));
            assert!(inst.is_feasible(&r.xi));
            assert_abs_diff_eq!(inst.objective(&r.xi), r.value, epsilon = 1e-9);
        }
    }

    #[test]
    fn plan_conserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.gen_range(2..=8);
            let (inst, _) = random_instance(&mut rng, n);
            let dual = solve_dual(&inst).unwrap();
            let mut net = vec![0.0; n];
            for arc in &dual.plan {
                assert!(arc.mass >= 0.0);
                net[arc.from] += arc.mass;
                net[arc.to] -= arc.mass;
            }
            for a in 0..n {
                assert_abs_diff_eq!(net[a], inst.omega()[a], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn scaling_gauge_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let n = rng.gen_range(2..=7);
            let (inst, _) = random_instance(&mut rng, n);
            let base = bound_for_instance(&inst).unwrap();
            let lambda = rng.gen_range(0.1..10.0);
            let scaled = bound_for_instance(&inst.scaled(lambda)).unwrap();
            assert!((scaled.value - lambda * base.value).abs() <= 1e-12 * (lambda * base.value).max(1e-300) * 10.0);

            let c = rng.gen_range(-5.0..5.0);
            let shifted: Vec<f64> = base.xi.iter().map(|x| x + c).collect();
            assert_abs_diff_eq!(inst.objective(&shifted), inst.objective(&base.xi), epsilon = 1e-10);

            // enlarge one distance while keeping a metric: stretch one point
            // away from all others along a new dimension
            let k = rng.gen_range(0..n);
            let extra = rng.gen_range(0.0..0.5);
            let d2: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let dij = inst.distances()[i][j];
                            if (i == k) != (j == k) { (dij * dij + extra * extra).sqrt() } else { dij }
                        })
                        .collect()
                })
                .collect();
            let bigger = BoundInstance::new(inst.omega().to_vec(), d2).unwrap();
            let (pv, _) = solve_primal(&bigger).unwrap();
            assert!(pv >= base.primal_value - 1e-9);
        }
    }

    #[test]
    fn instance_validation() {
        let d = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(BoundInstance::new(vec![0.5, -0.4], d.clone()).is_err());
        let bad = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
        assert!(BoundInstance::new(vec![0.0; 3], bad).is_err());
    }

    #[test]
    fn extension_interpolates_and_is_lipschitz() {
        let p = Polytope::unit_cube();
        let zero = LipschitzExtension::new(vec![0.0; 8], p.vertices().to_vec()).unwrap();
        for v in p.vertices() {
            assert_eq!(zero.eval(v), 0.0);
        }
        assert!(zero.eval(&Vec3::new(0.5, 0.5, 0.5)) < 0.0);

        let two = LipschitzExtension::new(vec![0.0, 2.0], vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(two.eval(&Vec3::new(1.0, 0.0, 0.0)), 1.0, epsilon = 1e-15);

        assert!(matches!(
            LipschitzExtension::new(vec![0.0, 3.0], vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)]),
            Err(BoundError::NotLipschitz(1, 0))
        ));
    }

    #[test]
    fn lower_bound_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = Polytope::unit_cube();
        for _ in 0..20 {
            let inv = invariants::random_valid(&p, 1, &mut rng);
            let r = lower_bound(&p, &inv).unwrap();
            let omega = invariants::trapped_areas_all(&p, &inv).unwrap().omega;
            let (pv, _) = solve_primal(&BoundInstance::from_polytope(&p, omega).unwrap()).unwrap();
            assert!((r.value - pv).abs() <= 1e-9 * (1.0 + pv));
            assert!(r.certified());
        }
    }
}
