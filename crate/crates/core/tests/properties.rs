mod common;

use std::time::Instant;

use common::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rs_regime::hjb::{closed_form_no_jump, solve_hjb, AObjective, OperatorKind, SolverConfig};
use rs_regime::jumps::{discretize_density, Atom, DensitySpec, JumpLaw};
use rs_regime::linalg::Matrix;
use rs_regime::market::ValidModel;
use rs_regime::optim::Objective;
use rs_regime::strategies::KellyObjective;

fn models() -> Vec<(&'static str, ValidModel<f64>)> {
    vec![
        ("merton", merton()),
        ("m2", m2()),
        ("m3", m3()),
        ("no-jump", no_jump_two_state()),
        ("random", random_no_jump(17)),
    ]
}

/// Shrinks `h` towards zero until `1 + h'z >= 0.05` on every constraint of state `i`.
fn into_domain(model: &ValidModel<f64>, i: usize, h: Vec<f64>) -> Vec<f64> {
    let worst = model
        .admissible_set(i)
        .constraints
        .iter()
        .map(|z| -h.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
        .fold(0.0, f64::max);
    let scale = if worst > 0.95 { 0.95 / worst } else { 1.0 };
    h.into_iter().map(|x| x * scale).collect()
}

fn point(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0..4.0f64, m)
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect()
}

fn runner(cases: u32, name: &str) -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::from_seed(proptest::test_runner::RngAlgorithm::ChaCha, &{
            let mut s = [7u8; 32];
            for (k, b) in name.bytes().enumerate() {
                s[k % 32] ^= b;
            }
            s
        }),
    )
}

#[test]
fn operator_is_convex_in_h() {
    for (name, m) in models() {
        let n = m.n_states();
        let dim = m.m_assets();
        let strat = (0..n, point(dim), point(dim), prop::collection::vec(0.2..1.5f64, n), 0.0..m.horizon());
        runner(1000, name)
            .run(&strat, |(i, a, b, u, t)| {
                let a = into_domain(&m, i, a);
                let b = into_domain(&m, i, b);
                let c = midpoint(&a, &b);
                for kind in [OperatorKind::Coinciding, OperatorKind::Independent] {
                    let obj = AObjective::new(&m, m.coeffs_at(i, t), i, &u, m.theta(), kind);
                    let (fa, fb, fc) = (obj.value(&a).unwrap(), obj.value(&b).unwrap(), obj.value(&c).unwrap());
                    prop_assert!(fc <= (fa + fb) / 2.0 + 1e-10, "{name} {kind:?}: {fc} > mean({fa}, {fb})");
                }
                Ok(())
            })
            .unwrap();
    }
}

#[test]
fn log_growth_is_concave_in_h() {
    for (name, m) in models() {
        let dim = m.m_assets();
        let strat = (0..m.n_states(), point(dim), point(dim), 0.0..m.horizon());
        runner(1000, name)
            .run(&strat, |(i, a, b, t)| {
                let a = into_domain(&m, i, a);
                let b = into_domain(&m, i, b);
                let c = midpoint(&a, &b);
                // KellyObjective is -l
                let obj = KellyObjective::new(&m, m.coeffs_at(i, t), i);
                let (fa, fb, fc) = (obj.value(&a).unwrap(), obj.value(&b).unwrap(), obj.value(&c).unwrap());
                prop_assert!(-fc >= -(fa + fb) / 2.0 - 1e-10, "{name}: l not concave");
                Ok(())
            })
            .unwrap();
    }
}

#[test]
fn admissible_sets_are_convex() {
    for (name, m) in models() {
        let dim = m.m_assets();
        let strat = (0..m.n_states(), point(dim), point(dim), 0.0..1.0f64);
        runner(1000, name)
            .run(&strat, |(i, a, b, w)| {
                let set = m.admissible_set(i);
                if set.is_feasible(&a, 0.0) && set.is_feasible(&b, 0.0) {
                    let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect();
                    prop_assert!(set.is_feasible(&c, 0.0));
                }
                Ok(())
            })
            .unwrap();
    }
}

fn random_law() -> impl Strategy<Value = (JumpLaw<f64>, Vec<f64>, f64)> {
    (1..=3usize)
        .prop_flat_map(|m| {
            (
                prop::collection::vec(
                    (point(m).prop_map(|z| z.iter().map(|x| x / 8.0).collect::<Vec<_>>()), 0.1..1.0f64),
                    1..=4,
                ),
                point(m),
                0.05..4.0f64,
            )
        })
        .prop_map(|(raw, h, theta)| {
            let total: f64 = raw.iter().map(|r| r.1).sum();
            let atoms: Vec<Atom<f64>> = raw.into_iter().map(|(z, p)| Atom { z, p: p / total }).collect();
            let law = JumpLaw::new(atoms).unwrap();
            let worst =
                law.atoms().iter().map(|a| -a.z.iter().zip(&h).map(|(x, y)| x * y).sum::<f64>()).fold(0.0, f64::max);
            let scale = if worst > 0.9 { 0.9 / worst } else { 1.0 };
            let h = h.into_iter().map(|x| x * scale).collect();
            (law, h, theta)
        })
}

fn central_difference(f: impl Fn(&[f64]) -> f64, h: &[f64]) -> Vec<f64> {
    (0..h.len())
        .map(|r| {
            let step = 1e-5 * h[r].abs().max(1.0);
            let mut hp = h.to_vec();
            let mut hm = h.to_vec();
            hp[r] += step;
            hm[r] -= step;
            (f(&hp) - f(&hm)) / (2.0 * step)
        })
        .collect()
}

fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * x.abs().max(y.abs()).max(1.0))
}

#[test]
fn power_integral_gradient_matches_finite_differences() {
    runner(100, "power")
        .run(&random_law(), |(law, h, theta)| {
            let g = law.power_integral_grad(&h, theta).unwrap();
            let fd = central_difference(|x| law.power_integral(x, theta).unwrap(), &h);
            prop_assert!(close(&g, &fd, 1e-6), "{g:?} vs {fd:?}");
            Ok(())
        })
        .unwrap();
}

#[test]
fn objective_gradients_match_finite_differences() {
    for (name, m) in models() {
        let n = m.n_states();
        let dim = m.m_assets();
        let strat = (0..n, point(dim), prop::collection::vec(0.2..1.5f64, n), 0.0..m.horizon());
        runner(100, name)
            .run(&strat, |(i, h, u, t)| {
                let h = into_domain(&m, i, h);
                let piece = m.coeffs_at(i, t);
                let mut grad = vec![0.0; dim];
                let mut hess = Matrix::zeros(dim, dim);
                for kind in [OperatorKind::Coinciding, OperatorKind::Independent] {
                    let obj = AObjective::new(&m, piece, i, &u, m.theta(), kind);
                    obj.eval(&h, &mut grad, &mut hess).unwrap();
                    let fd = central_difference(|x| obj.value(x).unwrap(), &h);
                    prop_assert!(close(&grad, &fd, 1e-6), "{name} {kind:?}: {grad:?} vs {fd:?}");
                }
                let kelly = KellyObjective::new(&m, piece, i);
                kelly.eval(&h, &mut grad, &mut hess).unwrap();
                let fd = central_difference(|x| kelly.value(x).unwrap(), &h);
                prop_assert!(close(&grad, &fd, 1e-6), "{name} kelly: {grad:?} vs {fd:?}");
                Ok(())
            })
            .unwrap();
    }
}

#[test]
fn random_no_jump_models_match_closed_form() {
    for seed in 0..5 {
        let m = random_no_jump(1000 + seed);
        let start = Instant::now();
        let s = solve_hjb(&m, &SolverConfig::default()).unwrap();
        let mut worst = 0.0f64;
        for (k, &t) in s.time_grid.iter().enumerate() {
            let exact = closed_form_no_jump(&m, t).unwrap();
            for i in 0..m.n_states() {
                worst = worst.max(rel_err(s.u[k][i], exact.u[i]));
            }
        }
        assert!(worst <= 1e-6, "seed {seed}: {worst:e}");
        assert!(start.elapsed().as_secs_f64() < 5.0);
    }
}

type Density = Box<dyn Fn(f64) -> f64>;

/// Adaptive Simpson on `[a, b]`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rule(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f((a + b) / 2.0) + f(b))
    }
    fn go(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let c = (a + b) / 2.0;
        let (l, r) = (rule(f, a, c), rule(f, c, b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            l + r + (l + r - whole) / 15.0
        } else {
            go(f, a, c, l, tol / 2.0, depth - 1) + go(f, c, b, r, tol / 2.0, depth - 1)
        }
    }
    go(f, a, b, rule(f, a, b), tol, 50)
}

#[test]
fn discretized_densities_match_adaptive_quadrature() {
    let normal = |x: f64| (-0.5 * ((x + 0.1) / 0.15).powi(2)).exp();
    let dexp =
        |x: f64| if x >= 0.02 { 0.3 * 10.0 * (-10.0 * (x - 0.02)).exp() } else { 0.7 * 5.0 * (5.0 * (x - 0.02)).exp() };
    let cases: Vec<(DensitySpec<f64>, Density, f64, f64, f64)> = vec![
        (
            DensitySpec::TruncNormal { mean: vec![-0.1], std: vec![0.15], lower: vec![-0.6], upper: vec![0.4] },
            Box::new(normal),
            -0.6,
            0.4,
            1e-10,
        ),
        (DensitySpec::Uniform { lower: vec![-0.3], upper: vec![0.2] }, Box::new(|_| 1.0), -0.3, 0.2, 1e-12),
        (
            DensitySpec::TruncDoubleExp {
                loc: vec![0.02],
                p_up: vec![0.3],
                rate_up: vec![10.0],
                rate_down: vec![5.0],
                lower: vec![-0.5],
                upper: vec![0.5],
            },
            Box::new(dexp),
            -0.5,
            0.5,
            1e-10,
        ),
    ];
    for (spec, dens, lo, hi, tol) in cases {
        let law = discretize_density(&spec, 48).unwrap();
        let mass = simpson(&*dens, lo, hi, 1e-13);
        for (h, theta) in [(0.5, 1.0), (1.5, 2.0), (-0.8, 0.5)] {
            let exact = simpson(&|x| (1.0 + h * x).powf(-theta) * dens(x), lo, hi, 1e-13) / mass;
            let got = law.power_integral(&[h], theta).unwrap();
            assert!((got - exact).abs() <= tol * exact, "{spec:?} h = {h}: {got} vs {exact}");
        }
        let mean = simpson(&|x| x * dens(x), lo, hi, 1e-13) / mass;
        assert!((law.mean()[0] - mean).abs() <= tol.max(1e-12));
    }
}
