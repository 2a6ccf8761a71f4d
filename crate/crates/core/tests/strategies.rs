mod common;

use common::*;
use rs_regime::hjb::{minimize_a, solve_hjb, SolverConfig};
use rs_regime::market::MarketModel;
use rs_regime::optim::{MinimumKind, NewtonOptions};
use rs_regime::strategies::*;

fn opts() -> NewtonOptions<f64> {
    NewtonOptions::default()
}

/// Maximizer of a unimodal `f` on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

#[test]
fn merton_kelly() {
    let m = merton();
    let k = kelly_allocation(&m, 0.0, 0, &opts()).unwrap();
    assert!((k.h[0] - 1.5).abs() < 1e-12, "{:?}", k.h);
    assert!(kelly_residual(&m, 0.0, 0, &k.h).unwrap() < 1e-12);
    // l(h^K) = r + e^2 / (2 sigma^2)
    assert!((k.value - (0.02 + 0.0036 / 0.08)).abs() < 1e-14);
}

#[test]
fn symmetric_jumps_without_premium_give_zero() {
    let mut raw = m2_raw();
    for pcs in &mut raw.coeffs {
        pcs[0].mu = vec![pcs[0].r];
    }
    raw.jump_laws = vec![atoms(0, 1, &[(&[-0.1], 0.5), (&[0.1], 0.5)]), atoms(1, 0, &[(&[-0.3], 0.5), (&[0.3], 0.5)])];
    let m = raw.validate().unwrap();
    for i in 0..2 {
        let k = kelly_allocation(&m, 0.5, i, &opts()).unwrap();
        assert!(k.h[0].abs() < 1e-14, "{:?}", k.h);
    }
}

#[test]
fn m2_kelly_matches_golden_section() {
    let m = m2();
    // l = r + h (mu - r - q xi) - sigma^2 h^2 / 2 + q log(1 + h z), with xi = z
    let l0 = |h: f64| 0.02 + h * (0.06 + 0.5 * 0.2) - 0.02 * h * h + 0.5 * (1.0 - 0.2 * h).ln();
    let l1 = |h: f64| 0.01 + h * (0.02 - 0.1) - 0.045 * h * h + (1.0 + 0.1 * h).ln();
    let oracle = [golden_max(l0, -10.0, 4.999), golden_max(l1, -9.999, 10.0)];
    for (i, want) in oracle.into_iter().enumerate() {
        let k = kelly_allocation(&m, 0.0, i, &opts()).unwrap();
        assert!((k.h[0] - want).abs() < 1e-6, "state {i}: {} vs {want}", k.h[0]);
        assert!(kelly_residual(&m, 0.0, i, &k.h).unwrap() <= 1e-8);
        assert!((log_growth_rate(&m, 0.0, i, &k.h).unwrap() - k.value).abs() < 1e-15);
    }
}

#[test]
fn log_growth_rate_by_hand() {
    let m = m2();
    let h: f64 = 0.7;
    let by_hand: f64 = 0.02 + h * 0.16 - 0.02 * h * h + 0.5 * (1.0 - 0.2 * h).ln();
    assert!((log_growth_rate(&m, 0.3, 0, &[h]).unwrap() - by_hand).abs() < 1e-15);
    assert!(log_growth_rate(&m, 0.3, 0, &[5.0]).is_err());
}

#[test]
fn kelly_on_boundary_stays_feasible() {
    let mut raw = m2_raw();
    raw.coeffs[0][0].mu = vec![0.6];
    let m = raw.validate().unwrap();
    let k = kelly_allocation(&m, 0.0, 0, &opts()).unwrap();
    assert!(1.0 - 0.2 * k.h[0] > 0.0);
    assert_eq!(k.kind, MinimumKind::Interior);
}

#[test]
fn merton_fixed_point_residuals() {
    let m = merton();
    let u = [1.0];
    // RHS(0) = (0.06 / 0.04) / (1 + theta)
    assert!((fixed_point_residual(&m, 0.0, 0, &[0.0], &u, 1.0).unwrap() - 0.75).abs() < 1e-15);
    assert!(fixed_point_residual(&m, 0.0, 0, &[0.75], &u, 1.0).unwrap() < 1e-15);
    let h3 = 1.5 / 4.0;
    assert!(fixed_point_residual(&m, 0.0, 0, &[h3], &u, 3.0).unwrap() < 1e-15);
}

#[test]
fn fixed_point_rejects_infeasible_allocation() {
    let m = m2();
    assert!(fixed_point_residual(&m, 0.0, 0, &[5.0], &[1.0, 1.0], 1.0).is_err());
    assert!(fixed_point_residual(&m, 0.0, 0, &[4.9], &[1.0, 1.0], 1.0).is_ok());
}

#[test]
fn m2_surface_satisfies_fixed_points() {
    let m = m2();
    let s = solve_hjb(&m, &SolverConfig::default()).unwrap();
    let reports = allocation_reports(&m, &s, &opts()).unwrap();
    assert_eq!(reports.len(), s.n_nodes() * 2);
    for r in &reports {
        assert!(r.star_residual <= 1e-6, "{r:?}");
        assert!(r.kelly_residual <= 1e-8, "{r:?}");
        for ((&hs, &hk), &hh) in r.h_star.iter().zip(&r.h_kelly).zip(&r.h_hedge) {
            assert_eq!(hh, 2.0 * hs - hk);
            let back = hk / 2.0 + hh / 2.0;
            assert!((back - hs).abs() <= 4.0 * f64::EPSILON * hs.abs().max(1.0));
        }
    }
    // downward jumps out of state 0 make the hedge non-trivial; it changes sign over [0, T]
    let hedge0: Vec<f64> = reports.iter().filter(|r| r.state == 0).map(|r| r.h_hedge[0]).collect();
    assert!(hedge0.iter().any(|&x| x < -1e-3) && hedge0.iter().any(|&x| x > 1e-2));
}

#[test]
fn m3_surface_satisfies_fixed_points() {
    let m = m3();
    let s = solve_hjb(&m, &SolverConfig::default()).unwrap();
    for r in allocation_reports(&m, &s, &opts()).unwrap() {
        assert!(r.star_residual <= 1e-6, "{r:?}");
        assert!(r.kelly_residual <= 1e-8, "{r:?}");
    }
}

#[test]
fn no_jump_hedge_is_cash() {
    for m in [no_jump_two_state(), merton(), random_no_jump(3), random_no_jump(8)] {
        let s = solve_hjb(&m, &SolverConfig::default()).unwrap();
        for r in allocation_reports(&m, &s, &opts()).unwrap() {
            assert!(r.h_hedge.iter().all(|x| x.abs() <= 1e-10), "{r:?}");
        }
    }
}

#[test]
fn split_examples() {
    let same: Vec<f64> = mutual_fund_split(&[0.4, -0.2], &[0.4, -0.2], 0.5).unwrap();
    assert!((same[0] - 0.4).abs() < 1e-15 && (same[1] + 0.2).abs() < 1e-15);
    assert_eq!(mutual_fund_split(&[0.5], &[1.0], 1.0).unwrap(), vec![0.0]);
    assert_eq!(mutual_fund_split(&[0.5], &[1.0], 0.0), Err(StrategyError::ZeroTheta));
    assert!(mutual_fund_split(&[0.5], &[1.0], -1.0).is_err());
}

#[test]
fn small_theta_optimum_approaches_kelly() {
    for i in 0..2 {
        let kelly = kelly_allocation(&m2(), 0.0, i, &opts()).unwrap().h[0];
        let gaps: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&th| {
                let m = m2_theta(th);
                let s = solve_hjb(&m, &SolverConfig::default()).unwrap();
                let h = minimize_a(&m, &s.u[0], 0.0, i, None, &opts()).unwrap().h[0];
                (h - kelly).abs() / th
            })
            .collect();
        // |h*(theta) - h^K| / theta stays bounded while theta shrinks a hundredfold
        assert!(gaps.iter().all(|&g| g <= 2.0 * gaps[0] + 1e-9), "state {i}: {gaps:?}");
        assert!(gaps[2] * 0.001 < gaps[1] * 0.01 && gaps[1] * 0.01 < gaps[0] * 0.1);
    }
}

#[test]
fn f32_kelly() {
    let raw = merton_raw();
    let m32: MarketModel<f32> = MarketModel {
        n_states: 1,
        m_assets: 1,
        horizon: 1.0,
        theta: Some(1.0),
        generator: rs_regime::linalg::Matrix::zeros(1, 1),
        coeffs: vec![vec![rs_regime::market::CoeffPiece {
            t_start: 0.0,
            t_end: 1.0,
            mu: vec![raw.coeffs[0][0].mu[0] as f32],
            sigma: rs_regime::linalg::Matrix::from_rows(&[vec![0.2f32]]).unwrap(),
            r: 0.02,
        }]],
        jump_laws: vec![],
        vol_epsilon: 1e-6,
    };
    let m = m32.validate().unwrap();
    let k = kelly_allocation(&m, 0.0, 0, &NewtonOptions::default()).unwrap();
    assert!((k.h[0] - 1.5).abs() < 1e-5);
}
