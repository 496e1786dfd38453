use proptest::prelude::*;
use weakkam::solver::backward_step;
use weakkam::*;

fn point(x: f64) -> TorusPoint {
    TorusPoint::new(&[x]).unwrap()
}

fn field(grid: GridSpec, values: &[f64]) -> GridField {
    GridField::from_values(grid, values.to_vec()).unwrap()
}

fn pendulum_cfg(n: usize, lambda: f64) -> (LagrangianModel, SolverConfig) {
    let model = build_model(&ModelSpec::pendulum()).unwrap();
    let grid = GridSpec::new(1, n).unwrap();
    let cfg = SolverConfig::new(grid, &model).with_c(1.0).with_lambda(lambda);
    (model, cfg)
}

const N: usize = 32;

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, N)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64) {
        let (x, y, z) = (point(a), point(b), point(c));
        let dxy = torus_metric(&x, &y).unwrap();
        prop_assert!((0.0..=0.5).contains(&dxy));
        prop_assert!((dxy - torus_metric(&y, &x).unwrap()).abs() < 1e-12);
        let via = torus_metric(&x, &z).unwrap() + torus_metric(&z, &y).unwrap();
        prop_assert!(dxy <= via + 1e-12);
        prop_assert!(torus_metric(&x, &point(a + 1.0)).unwrap() < 1e-9);
    }

    #[test]
    fn metric_bound_in_two_dims(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64, d in -2.0..2.0f64) {
        let x = TorusPoint::new(&[a, b]).unwrap();
        let y = TorusPoint::new(&[c, d]).unwrap();
        prop_assert!(torus_metric(&x, &y).unwrap() <= 0.5f64.sqrt() + 1e-12);
    }

    #[test]
    fn binary_roundtrip(v in values()) {
        let grid = GridSpec::new(1, N).unwrap();
        let f = field(grid, &v);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let g = GridField::read_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(f.values(), g.values());
    }

    #[test]
    fn interpolation_is_periodic_and_bounded(v in values(), x in 0.0..1.0f64) {
        let f = field(GridSpec::new(1, N).unwrap(), &v);
        let a = f.interpolate(&point(x));
        prop_assert!((a - f.interpolate(&point(x + 2.0))).abs() < 1e-9);
        prop_assert!(a >= f.min() - 1e-12 && a <= f.max() + 1e-12);
    }

    #[test]
    fn backward_step_commutes_with_constants(v in values(), k in -2.0..2.0f64, lambda in 0.01..1.0f64) {
        let (model, cfg) = pendulum_cfg(N, lambda);
        let f = field(cfg.grid, &v);
        let a = backward_step(&f, &cfg, &model).unwrap();
        let b = backward_step(&f.map(|u| u + k), &cfg, &model).unwrap();
        let shift = (lambda * cfg.dt).exp() * k;
        for i in 0..N {
            prop_assert!((b.get(i) - a.get(i) - shift).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_step_is_monotone(v in values(), w in values()) {
        let (model, cfg) = pendulum_cfg(N, 0.1);
        let lo = field(cfg.grid, &v);
        let hi = field(cfg.grid, &v.iter().zip(&w).map(|(a, b)| a + b.abs()).collect::<Vec<_>>());
        let (a, b) = (backward_step(&lo, &cfg, &model).unwrap(), backward_step(&hi, &cfg, &model).unwrap());
        for i in 0..N {
            prop_assert!(a.get(i) <= b.get(i) + 1e-12, "node {} gap {:e} v={:?} w={:?}", i, a.get(i) - b.get(i), v, w);
        }
    }

    #[test]
    fn backward_step_expansion_is_bounded(v in values(), w in values()) {
        let (model, cfg) = pendulum_cfg(N, 0.2);
        let (f, g) = (field(cfg.grid, &v), field(cfg.grid, &w));
        let before = f.sup_distance(&g).unwrap();
        let after = backward_step(&f, &cfg, &model)
            .unwrap()
            .sup_distance(&backward_step(&g, &cfg, &model).unwrap())
            .unwrap();
        prop_assert!(after <= (0.2 * cfg.dt).exp() * before + 1e-12);
    }

    #[test]
    fn residual_shifts_with_constants(v in values(), k in -1.0..1.0f64) {
        let (model, cfg) = pendulum_cfg(N, 0.1);
        let f = field(cfg.grid, &v);
        let a = residual(&f, &cfg, &model).unwrap();
        let b = residual(&f.map(|u| u + k), &cfg, &model).unwrap();
        for i in 0..N {
            prop_assert!((b.get(i) - a.get(i) + 0.1 * k).abs() < 1e-9);
        }
    }
}
