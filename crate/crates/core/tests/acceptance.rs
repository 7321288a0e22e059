//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines always show.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tanbound::bound::{self, BoundInstance, LipschitzExtension};
use tanbound::cli;
use tanbound::field::{self, radial_from, AnalyzeOptions, DiscreteField, Grid, SeparatingSurface};
use tanbound::invariants::{self, HomotopyInvariants};
use tanbound::polytope::Polytope;
use tanbound::relax::{self, RelaxConfig, StopReason};
use tanbound::sphergeo::{self, UnitVec, Vec3};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec3>, BoundInstance) {
    let n = rng.gen_range(2..=8);
    let pts: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let omega = raw.iter().map(|w| w - mean).collect();
    let dist = pts.iter().map(|a| pts.iter().map(|b| (a - b).norm()).collect()).collect();
    (pts.clone(), BoundInstance::new(omega, dist).unwrap())
}

fn duality_certificate() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let instances: Vec<_> = (0..1000).map(|_| random_instance(&mut rng).1).collect();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for inst in &instances {
        let (primal, _) = bound::solve_primal(inst).unwrap();
        let dual = bound::solve_dual(inst).unwrap().value;
        let scale = primal.abs().max(dual.abs());
        let rel = if scale == 0.0 { 0.0 } else { (primal - dual).abs() / scale };
        worst = worst.max(rel);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst <= 1e-7 && secs < 5.0, format!("worst relative gap {worst:.2e} over 1000 instances, {secs:.2} s"))
}

fn two_vertex_closed_form() -> Verdict {
    let cube = Polytope::unit_cube();
    let v = cube.vertices();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (d, exact) in [(1.0, 1.0f64), (2.0, 2f64.sqrt()), (3.0, 3f64.sqrt())] {
        // a vertex at squared distance d from vertex 0
        let b = (1..8).find(|&b| ((v[b] - v[0]).norm_squared() - d).abs() < 1e-12).unwrap();
        for q in [0.25, 0.5, 1.0] {
            let mut omega = vec![0.0; 8];
            omega[0] = q;
            omega[b] = -q;
            let inst = BoundInstance::from_polytope(&cube, omega).unwrap();
            let r = bound::bound_for_instance(&inst).unwrap();
            let expected = 8.0 * PI * q * exact;
            worst = worst.max((r.value - expected).abs() / expected);
            cases += 1;
        }
    }
    verdict(worst <= 1e-12, format!("{cases} cases, worst relative error {worst:.2e}"))
}

/// The octant with its three axis edges oriented away from the origin and
/// kinks absorbed away from the origin.
fn octant_class(p: &Polytope) -> HomotopyInvariants {
    let signs = vec![1i8; p.num_edges()];
    let mut inv = HomotopyInvariants::from_signs(p, &signs, BTreeMap::new(), vec![0; 4], UnitVec::from_xyz(1.0, 1.0, -5.0).unwrap());
    for (c, face) in p.faces().iter().enumerate() {
        let target = 1 - invariants::count_q(p, &inv.edge_orient, c) as i64 / 2;
        let last = *face.iter().rev().find(|&&a| a != 0).unwrap();
        for &a in face {
            inv.kinks.insert((a, c), if a == last { target } else { 0 });
        }
    }
    inv
}

fn octant_trapped_area() -> Verdict {
    let start = Instant::now();
    let r = 1.0;
    let p = Polytope::octant(r).unwrap();
    let inside = |x: &Vec3| x.min() >= -1e-12 && x.sum() <= r + 1e-12;
    let f = DiscreteField::on_region(Grid::covering(Vec3::zeros(), Vec3::repeat(r), 96).unwrap(), inside, vec![Vec3::zeros()], radial_from(Vec3::zeros()))
        .unwrap();
    let surface = SeparatingSurface::around_vertex(&p, 0, 0.5 * r / 3f64.sqrt(), 128).unwrap();
    let measured = field::trapped_area_integrate(&f, &surface).unwrap();

    let inv = octant_class(&p);
    let valid = invariants::validate(&p, &inv).passed() && invariants::s_is_generic(&p, &inv.edge_orient, &inv.s);
    let mut omega: Vec<f64> = (0..4).map(|a| invariants::trapped_area_fraction(&p, &inv, a).unwrap()).collect();
    omega[0] = measured;
    let w = invariants::wrapping_from_trapped(&p, &inv, &omega);
    let formula = invariants::trapped_area(&p, &inv, 0).unwrap();
    let oracle = (PI / 2.0) / (4.0 * PI);
    let secs = start.elapsed().as_secs_f64();
    let w0 = w.as_ref().map(|w| w[0]).ok();
    verdict(
        (measured - 0.125).abs() <= 1e-3 && valid && w0 == Some(0) && (formula - oracle).abs() <= 1e-3 && secs < 30.0,
        format!("measured {measured:.6}, formula {formula:.6}, w = {w0:?}, {secs:.1} s"),
    )
}

fn radial_energy() -> Verdict {
    let (r, eps) = (1.0, 0.05);
    let exact = PI * (r - eps * r);
    let mut errors = Vec::new();
    let mut last = 0.0;
    for n in [24, 48, 96] {
        let inside = |x: &Vec3| x.min() >= -1e-12 && (eps * r..=r).contains(&x.norm());
        let f = DiscreteField::on_region(Grid::covering(Vec3::zeros(), Vec3::repeat(r), n).unwrap(), inside, vec![], radial_from(Vec3::zeros()))
            .unwrap();
        last = field::energy(&f).unwrap().energy;
        errors.push((last - exact).abs() / exact);
    }
    let orders = [(errors[0] / errors[1]).log2(), (errors[1] / errors[2]).log2()];
    let order = (errors[0] / errors[2]).log2() / 2.0;
    verdict(
        errors[2] <= 0.02 && order >= 0.9,
        format!(
            "96³ energy {last:.5} vs {exact:.5} ({:.3}%), order {order:.2} (pairwise {:.2}, {:.2})",
            100.0 * errors[2],
            orders[0],
            orders[1]
        ),
    )
}

fn pointwise_inequality() -> Verdict {
    let cube = Polytope::unit_cube();
    let trig = |x: &Vec3| Vec3::new((2.0 * x.x + x.y).sin() + 0.3, (x.y - 1.5 * x.z).cos(), (PI * x.z * x.x).sin() + 0.5);
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    let mut details = Vec::new();
    for n in [16, 32] {
        let h = 1.0 / n as f64;
        let grid = || Grid::for_polytope(&cube, n).unwrap();
        let fields = [
            ("constant", DiscreteField::on_polytope(&cube, grid(), |_| Vec3::new(0.2, 0.3, 0.9)).unwrap()),
            ("radial", DiscreteField::on_polytope(&cube, grid(), radial_from(Vec3::new(-0.3, -0.2, -0.25))).unwrap()),
            ("trig", DiscreteField::on_polytope(&cube, grid(), trig).unwrap()),
        ];
        for (name, f) in &fields {
            let rep = field::pointwise_inequality_check(f);
            ok &= rep.nodes > 0 && rep.max_violation <= 10.0 * h;
            worst = worst.max(rep.max_violation / h);
            details.push(format!("{name}@{n}: {:.1e}", rep.max_violation));
        }
    }
    verdict(ok, format!("worst violation {worst:.2}·h; {}", details.join(", ")))
}

fn class_signature(a: &field::Analysis) -> (BTreeMap<usize, i8>, Vec<(usize, usize, i64)>, Vec<i64>) {
    let omega = a.omega.values().map(|w| (8.0 * w).round() as i64).collect();
    (a.edge_signs.clone(), a.kinks.clone(), omega)
}

fn sandwich() -> Verdict {
    let fixtures = [
        ("cube", "corner-radial:0", 16),
        ("cube", "corner-radial:0", 24),
        ("cube", "corner-radial:6", 16),
        ("cube", "edge-rotation:4,1", 16),
        ("cube", "edge-rotation:2,-1", 16),
        ("box:1x1.3x0.7", "corner-radial:0", 16),
        ("box:1x1.3x0.7", "edge-rotation:4,1", 16),
        ("box:2x1x1", "corner-radial:3", 16),
    ];
    let opts = AnalyzeOptions::default();
    let mut ok = true;
    let mut flagged = 0;
    let mut worst = f64::INFINITY;
    let mut notes = Vec::new();
    for (shape, ansatz, cells) in fixtures {
        let p = Polytope::builtin(shape).unwrap();
        let seed = relax::seed_field(&p, &ansatz.parse().unwrap(), cells).unwrap();
        let out = relax::relax(&seed, &p, &RelaxConfig::default()).unwrap();
        let sw = relax::sandwich(&p, &seed, &out.field, &opts).unwrap();
        let before = field::analyze(&seed, &p, &opts).unwrap();
        let after = field::analyze(&out.field, &p, &opts).unwrap();
        let changed = class_signature(&before) != class_signature(&after) || !after.extraction_errors.is_empty();
        let silent = changed && sw.class_changes.is_empty();
        let spurious = !changed && !sw.class_changes.is_empty();
        let bound = after.complete.as_ref().and_then(|c| c.bound_value);
        let holds = bound.is_some_and(|b| out.final_energy().is_finite() && sw.relaxed_energy >= b * 0.95);
        let converged = out.stop == StopReason::Converged;
        if changed {
            flagged += 1;
        }
        if let Some(m) = sw.relative_margin {
            worst = worst.min(m);
        }
        if !(holds && converged && !silent && !spurious) {
            ok = false;
            notes.push(format!("{shape} {ansatz}@{cells}: holds {holds} converged {converged} silent {silent}"));
        }
    }
    verdict(
        ok,
        format!(
            "{} runs, worst margin {:+.2}%, {flagged} flagged class changes, none silent{}",
            fixtures.len(),
            100.0 * worst,
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
        ),
    )
}

/// Disagreements of consecutive boundary edges around face `c`, counted
/// directly from the traversal.
fn q_oracle(p: &Polytope, inv: &HomotopyInvariants, c: usize) -> i64 {
    let face = &p.faces()[c];
    let m = face.len();
    let along: Vec<bool> = (0..m)
        .map(|i| {
            let (a, b) = (face[i], face[(i + 1) % m]);
            let edge = p.edge_between(a, b).unwrap();
            inv.edge_orient[edge].vec().dot(&(p.vertices()[b] - p.vertices()[a])) > 0.0
        })
        .collect();
    (0..m).filter(|&i| along[i] != along[(i + 1) % m]).count() as i64
}

fn sum_rules() -> Verdict {
    let shapes = ["cube", "tetrahedron", "box:1x2x3", "box:0.4x1.1x0.9"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut sets, mut perturbations, mut failures) = (0, 0, 0);
    let mut worst_sum = 0.0f64;
    for shape in shapes {
        let p = Polytope::builtin(shape).unwrap();
        for _ in 0..250 {
            let inv = invariants::random_valid(&p, rng.gen_range(0..3), &mut rng);
            sets += 1;
            let kinks_ok = p.faces().iter().enumerate().all(|(c, face)| {
                2 * face.iter().map(|&a| inv.kinks[&(a, c)]).sum::<i64>() == 2 - q_oracle(&p, &inv, c)
            });
            let wraps_ok = inv.wraps.iter().sum::<i64>() == 0;
            let residual = invariants::trapped_areas_all(&p, &inv).unwrap().omega.iter().sum::<f64>();
            worst_sum = worst_sum.max(residual.abs());
            if !(kinks_ok && wraps_ok && residual.abs() <= 1e-9 && invariants::validate(&p, &inv).passed()) {
                failures += 1;
            }
            let keys: Vec<_> = inv.kinks.keys().copied().collect();
            for key in keys {
                for delta in [-1, 1] {
                    let mut bad = inv.clone();
                    *bad.kinks.get_mut(&key).unwrap() += delta;
                    perturbations += 1;
                    failures += invariants::validate(&p, &bad).passed() as usize;
                }
            }
            for a in 0..inv.wraps.len() {
                let mut bad = inv.clone();
                bad.wraps[a] += 1;
                perturbations += 1;
                failures += invariants::validate(&p, &bad).passed() as usize;
            }
        }
    }
    verdict(
        failures == 0,
        format!("{sets} generated sets, max |ΣΩ| {worst_sum:.1e}, {perturbations} perturbations, {failures} failures"),
    )
}

fn lipschitz_extension() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_ratio, mut worst_interp) = (0.0f64, 0.0f64);
    let mut pairs = 0;
    for _ in 0..100 {
        let (pts, inst) = random_instance(&mut rng);
        let r = bound::bound_for_instance(&inst).unwrap();
        let ext = LipschitzExtension::new(r.xi.clone(), pts.clone()).unwrap();
        for (p, x) in pts.iter().zip(&r.xi) {
            worst_interp = worst_interp.max((ext.eval(p) - x).abs());
        }
        for _ in 0..1000 {
            let a = Vec3::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5));
            let b = Vec3::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5));
            let d = (a - b).norm();
            if d > 0.0 {
                worst_ratio = worst_ratio.max((ext.eval(&a) - ext.eval(&b)).abs() / d);
                pairs += 1;
            }
        }
    }
    verdict(
        worst_ratio <= 1.0 + 1e-9 && worst_interp <= 1e-12,
        format!("{pairs} pairs, max ratio {worst_ratio:.12}, vertex error {worst_interp:.1e}"),
    )
}

fn random_unit(rng: &mut ChaCha8Rng) -> UnitVec {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return UnitVec::new(v).unwrap();
        }
    }
}

fn spherical_kernel() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst, mut triples) = (0.0f64, 0);
    while triples < 10_000 {
        let (a, b, c) = (random_unit(&mut rng), random_unit(&mut rng), random_unit(&mut rng));
        if a.dot(&b) < -0.99 || b.dot(&c) < -0.99 || c.dot(&a) < -0.99 {
            continue;
        }
        let centre = a.vec() + b.vec() + c.vec();
        if centre.norm() < 0.1 {
            continue;
        }
        let d = UnitVec::new(centre).unwrap();
        let area = |x: &UnitVec, y: &UnitVec, z: &UnitVec| sphergeo::oriented_area(x, y, z).unwrap();
        let abc = area(&a, &b, &c);
        worst = worst
            .max((abc + area(&b, &a, &c)).abs())
            .max((abc - area(&b, &c, &a)).abs())
            .max((abc - area(&a, &b, &d) - area(&b, &c, &d) - area(&c, &a, &d)).abs());
        triples += 1;
    }

    // Monte Carlo: the fraction of uniform points inside a triangle
    let mut mc_ok = true;
    let mut zs = Vec::new();
    for _ in 0..5 {
        let (a, b, c) = loop {
            let t = (random_unit(&mut rng), random_unit(&mut rng), random_unit(&mut rng));
            let area = sphergeo::oriented_area(&t.0, &t.1, &t.2).unwrap().abs();
            if area > 0.3 {
                break t;
            }
        };
        let exact = sphergeo::oriented_area(&a, &b, &c).unwrap().abs() / (4.0 * PI);
        let n = 100_000;
        let mut hits = 0;
        for _ in 0..n {
            let s = random_unit(&mut rng);
            hits += sphergeo::contains(&a, &b, &c, &s).unwrap_or(false) as usize;
        }
        let frac = hits as f64 / n as f64;
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        let z = (frac - exact) / sigma;
        mc_ok &= z.abs() <= 3.0;
        zs.push(format!("{z:+.2}"));
    }
    verdict(
        worst <= 1e-10 && mc_ok,
        format!("{triples} triples, worst identity error {worst:.1e}; Monte Carlo z-scores [{}]", zs.join(", ")),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = Polytope::unit_cube();
    let inv = invariants::random_valid(&p, 1, &mut ChaCha8Rng::seed_from_u64(21));
    std::fs::write(d.join("inv.json"), cli::to_report_string(&inv.to_file(&p))).unwrap();
    let runs: [&[&str]; 3] = [
        &["bound", "--shape", "builtin:cube", "--invariants", "inv.json"],
        &["relax", "--shape", "builtin:box:1x1.3x0.7", "--resolution", "10", "--out", "OUT"],
        &["analyze", "--shape", "builtin:box:1x1.3x0.7", "--field", "r0/field.json"],
    ];
    let mut identical = true;
    let mut compared = 0;
    for args in runs {
        let mut outputs = Vec::new();
        for k in 0..2 {
            let args: Vec<String> = args.iter().map(|a| a.replace("OUT", &format!("r{k}"))).collect();
            let o = Command::new(env!("CARGO_BIN_EXE_tanbound")).args(&args).current_dir(d).output().unwrap();
            let report = cli::strip_metadata(&String::from_utf8(o.stdout).unwrap()).unwrap();
            outputs.push((o.status.code(), report));
        }
        identical &= outputs[0] == outputs[1];
        compared += 1;
    }
    for name in ["trace.csv", "field.bin", "field.json"] {
        let a = std::fs::read(d.join("r0").join(name)).unwrap();
        let b = std::fs::read(d.join("r1").join(name)).unwrap();
        identical &= a == b;
        compared += 1;
    }
    verdict(identical, format!("{compared} report/artifact pairs compared"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("duality certificate", duality_certificate),
        ("two-vertex closed form", two_vertex_closed_form),
        ("octant trapped area", octant_trapped_area),
        ("radial energy", radial_energy),
        ("pointwise inequality", pointwise_inequality),
        ("energy sandwich", sandwich),
        ("sum rules", sum_rules),
        ("Lipschitz extension", lipschitz_extension),
        ("spherical kernel", spherical_kernel),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!("{} {:>2}. {name}: {}", if v.passed { "PASS" } else { "FAIL" }, i + 1, v.detail);
        failed += !v.passed as usize;
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
