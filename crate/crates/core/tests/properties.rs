use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tanbound::bound::{self, BoundInstance, LipschitzExtension};
use tanbound::invariants;
use tanbound::polytope::Polytope;
use tanbound::sphergeo::Vec3;

fn instance() -> impl Strategy<Value = (Vec<Vec3>, Vec<f64>)> {
    (2usize..=8).prop_flat_map(|n| {
        (
            prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64), n),
            prop::collection::vec(-1.0..1.0f64, n),
        )
            .prop_map(|(pts, raw)| {
                let mean = raw.iter().sum::<f64>() / raw.len() as f64;
                let omega = raw.iter().map(|w| w - mean).collect();
                (pts.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect(), omega)
            })
    })
}

fn distances(pts: &[Vec3]) -> Vec<Vec<f64>> {
    pts.iter().map(|a| pts.iter().map(|b| (a - b).norm()).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn primal_and_dual_agree((pts, omega) in instance()) {
        let inst = BoundInstance::new(omega, distances(&pts)).unwrap();
        let r = bound::bound_for_instance(&inst).unwrap();
        prop_assert!(r.gap <= 1e-7 * (1.0 + r.value.abs()));
        prop_assert!(inst.is_feasible(&r.xi));
        prop_assert!((inst.objective(&r.xi) - r.value).abs() <= 1e-9 * (1.0 + r.value.abs()));
        let cost: f64 = r.plan.iter().map(|a| a.mass * inst.distances()[a.from][a.to]).sum();
        prop_assert!((8.0 * std::f64::consts::PI * cost - r.value).abs() <= 1e-9 * (1.0 + r.value));
    }

    #[test]
    fn bound_is_positively_homogeneous((pts, omega) in instance(), lambda in 0.1..10.0f64) {
        let inst = BoundInstance::new(omega, distances(&pts)).unwrap();
        let v = bound::bound_for_instance(&inst).unwrap().value;
        let w = bound::bound_for_instance(&inst.scaled(lambda)).unwrap().value;
        prop_assert!((w - lambda * v).abs() <= 1e-9 * (1.0 + w.abs()));
    }

    #[test]
    fn extension_is_one_lipschitz((pts, omega) in instance(), probes in prop::collection::vec((-0.5..1.5f64, -0.5..1.5f64, -0.5..1.5f64), 20)) {
        let inst = BoundInstance::new(omega, distances(&pts)).unwrap();
        let r = bound::bound_for_instance(&inst).unwrap();
        let ext = LipschitzExtension::new(r.xi.clone(), pts.clone()).unwrap();
        for (i, p) in pts.iter().enumerate() {
            prop_assert!((ext.eval(p) - r.xi[i]).abs() <= 1e-12);
        }
        let q: Vec<Vec3> = probes.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
        for a in &q {
            for b in &q {
                prop_assert!((ext.eval(a) - ext.eval(b)).abs() <= (a - b).norm() * (1.0 + 1e-9) + 1e-15);
            }
        }
    }

    #[test]
    fn generated_invariants_obey_every_sum_rule(seed in any::<u64>(), spread in 0i64..3, which in 0usize..4) {
        let p = Polytope::builtin(["cube", "tetrahedron", "box:1x2x3", "box:0.5x1.3x0.7"][which]).unwrap();
        let inv = invariants::random_valid(&p, spread, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(invariants::validate(&p, &inv).passed());
        let areas = invariants::trapped_areas_all(&p, &inv).unwrap();
        prop_assert!(areas.residual().abs() <= 1e-9);
    }

    #[test]
    fn single_perturbations_are_caught(seed in any::<u64>(), pick in any::<prop::sample::Index>(), delta in prop::sample::select(vec![-2i64, -1, 1, 2])) {
        let p = Polytope::unit_cube();
        let inv = invariants::random_valid(&p, 1, &mut ChaCha8Rng::seed_from_u64(seed));
        let n_kinks = inv.kinks.len();
        let slot = pick.index(n_kinks + inv.wraps.len());
        let mut bad = inv.clone();
        if slot < n_kinks {
            let key = *bad.kinks.keys().nth(slot).unwrap();
            *bad.kinks.get_mut(&key).unwrap() += delta;
        } else {
            bad.wraps[slot - n_kinks] += delta;
        }
        prop_assert!(!invariants::validate(&p, &bad).passed());
    }
}
