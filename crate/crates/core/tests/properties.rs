use std::sync::Arc;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regpath::analysis::{eoc, level_set_measure};
use regpath::control::{integrate_quadratic, AdmissibleBox, ImplicitControl, TimeFunction};
use regpath::located::LocatedHeatBackend;
use regpath::manufactured::ManufacturedProblem;
use regpath::mesh::{assemble, NodalField, Role, SpaceMesh};
use regpath::parabolic::{DenseLoad, ParabolicOperator};
use regpath::solver::{run_reg_path, PathConfig};
use regpath::time_grid::{PiecewiseLinearScalar, TimePartition};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_is_idempotent_and_nonexpansive(
        lo in -5.0f64..0.0, width in 1e-3f64..5.0, x in -20.0f64..20.0, y in -20.0f64..20.0,
    ) {
        let b = AdmissibleBox::new(lo, lo + width).unwrap();
        let px = b.project(x);
        prop_assert_eq!(b.project(px), px);
        prop_assert!(px >= b.lower() && px <= b.upper());
        prop_assert!((px - b.project(y)).abs() <= (x - y).abs());
    }

    #[test]
    fn mass_matrix_is_positive(seed in any::<u64>(), n in 3usize..8) {
        let mesh = SpaceMesh::uniform(n).unwrap();
        let mass = assemble(&mesh, Role::Mass);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..mesh.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!(mass.quadratic_form(&x) > 0.0 || norm == 0.0);
    }

    #[test]
    fn eoc_recovers_power_law(c in 1e-3f64..10.0, p in 0.05f64..3.0) {
        let alphas: Vec<f64> = (1..=6).map(|l| 2f64.powi(-l)).collect();
        let e: Vec<f64> = alphas.iter().map(|a| c * a.powf(p)).collect();
        for r in eoc(&e, &alphas).unwrap().into_iter().flatten() {
            prop_assert!((r - p).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn clamped_integrals_are_exact(seed in any::<u64>(), alpha in 1e-3f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let partition = Arc::new(TimePartition::uniform(4, 0.5).unwrap());
        let q: Vec<f64> = (0..=4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let v: Vec<f64> = (0..=4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bounds = AdmissibleBox::new(-0.2, 0.2).unwrap();
        let fu = TimeFunction::Clamped { alpha, q: &q, bounds };
        let exact = integrate_quadratic(&partition, &[fu, TimeFunction::Linear(&v)], |x| x[0] * x[0] + x[0] * x[1]);
        let u = ImplicitControl::new(alpha, PiecewiseLinearScalar::new(&partition, q.clone()).unwrap(), bounds, partition.clone()).unwrap();
        let lin = PiecewiseLinearScalar::new(&partition, v.clone()).unwrap();
        let nodes = partition.nodes();
        let reference: f64 = (1..=4)
            .map(|m| simpson(|t| { let a = u.eval(t); a * a + a * lin.eval(&partition, t) }, nodes[m - 1], nodes[m], 10_000))
            .sum();
        prop_assert!((exact - reference).abs() < 1e-8, "exact {} simpson {}", exact, reference);
        let (l1, _) = u.error_norms(-0.2);
        let l1_ref: f64 = (1..=4).map(|m| simpson(|t| (u.eval(t) + 0.2).abs(), nodes[m - 1], nodes[m], 10_000)).sum();
        prop_assert!((l1 - l1_ref).abs() < 1e-7);
    }

    #[test]
    fn discrete_adjointness(seed in any::<u64>(), n in prop_oneof![Just(3usize), Just(5usize)]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = Arc::new(SpaceMesh::uniform(n).unwrap());
        let steps = 8;
        let nodes: Vec<f64> = {
            let mut t = vec![0.0];
            for _ in 0..steps {
                let last = *t.last().unwrap();
                t.push(last + rng.random_range(0.02..0.1));
            }
            t
        };
        let partition = Arc::new(TimePartition::from_nodes(nodes).unwrap());
        let op = ParabolicOperator::new(mesh.clone(), partition).unwrap();
        let dof = mesh.node_count();
        let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dof).map(|i| if mesh.boundary_mask()[i] { 0.0 } else { rng.random_range(-1.0..1.0) }).collect()
        };
        let f = DenseLoad((0..steps).map(|_| random_vec(&mut rng)).collect());
        let h = DenseLoad((0..steps).map(|_| random_vec(&mut rng)).collect());
        let y0 = NodalField::new(random_vec(&mut rng));
        prop_assert!(op.check_adjointness(&f, &y0, &h).unwrap() <= 1e-10);
    }
}

#[test]
fn level_set_measure_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let partition = TimePartition::uniform(7, 1.0).unwrap();
        let q: Vec<f64> = (0..=7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = PiecewiseLinearScalar::new(&partition, q).unwrap();
        let eps = rng.random_range(0.05..0.6);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|&i| q.eval(&partition, (i as f64 + 0.5) / n as f64).abs() <= eps)
            .count();
        let scan = hits as f64 / n as f64;
        assert!((scan - level_set_measure(&partition, &q, eps)).abs() < 1e-4);
    }
}

#[test]
fn paths_are_deterministic() {
    let p = ManufacturedProblem::located_heat(0.5).unwrap();
    let run = || {
        let b = LocatedHeatBackend::manufactured(&p, 5, 32).unwrap();
        run_reg_path(&b, &[1, 2, 3], &PathConfig::default()).unwrap().records
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(serde_json::to_string(x).unwrap(), serde_json::to_string(y).unwrap());
    }
}
