#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rs_regime::jumps::Atom;
use rs_regime::linalg::Matrix;
use rs_regime::market::{CoeffPiece, JumpSource, MarketModel, TransitionJumps, ValidModel};

pub fn piece(t0: f64, t1: f64, mu: &[f64], sigma: &[&[f64]], r: f64) -> CoeffPiece<f64> {
    CoeffPiece {
        t_start: t0,
        t_end: t1,
        mu: mu.to_vec(),
        sigma: Matrix::from_rows(&sigma.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap(),
        r,
    }
}

pub fn atoms(from: usize, to: usize, a: &[(&[f64], f64)]) -> TransitionJumps<f64> {
    TransitionJumps {
        from,
        to,
        source: JumpSource::Atoms(a.iter().map(|(z, p)| Atom { z: z.to_vec(), p: *p }).collect()),
    }
}

pub fn merton_raw() -> MarketModel<f64> {
    MarketModel {
        n_states: 1,
        m_assets: 1,
        horizon: 1.0,
        theta: Some(1.0),
        generator: Matrix::zeros(1, 1),
        coeffs: vec![vec![piece(0.0, 1.0, &[0.08], &[&[0.2]], 0.02)]],
        jump_laws: vec![],
        vol_epsilon: 1e-8,
    }
}

pub fn merton() -> ValidModel<f64> {
    merton_raw().validate().unwrap()
}

/// Two regimes, one asset: a crash of -20% when leaving state 0 and a +10% rebound when
/// leaving state 1.
pub fn m2_raw() -> MarketModel<f64> {
    MarketModel {
        n_states: 2,
        m_assets: 1,
        horizon: 1.0,
        theta: Some(1.0),
        generator: Matrix::from_rows(&[vec![-0.5, 0.5], vec![1.0, -1.0]]).unwrap(),
        coeffs: vec![vec![piece(0.0, 1.0, &[0.08], &[&[0.2]], 0.02)], vec![piece(0.0, 1.0, &[0.03], &[&[0.3]], 0.01)]],
        jump_laws: vec![atoms(0, 1, &[(&[-0.2], 1.0)]), atoms(1, 0, &[(&[0.1], 1.0)])],
        vol_epsilon: 1e-8,
    }
}

pub fn m2() -> ValidModel<f64> {
    m2_raw().validate().unwrap()
}

pub fn m2_theta(theta: f64) -> ValidModel<f64> {
    m2().with_theta(theta).unwrap()
}

/// Two regimes without price jumps and a coefficient change at `t = 0.5`.
pub fn no_jump_two_state() -> ValidModel<f64> {
    MarketModel {
        n_states: 2,
        m_assets: 1,
        horizon: 1.0,
        theta: Some(2.0),
        generator: Matrix::from_rows(&[vec![-0.8, 0.8], vec![0.4, -0.4]]).unwrap(),
        coeffs: vec![
            vec![piece(0.0, 0.5, &[0.07], &[&[0.18]], 0.02), piece(0.5, 1.0, &[0.09], &[&[0.25]], 0.03)],
            vec![piece(0.0, 1.0, &[0.01], &[&[0.35]], 0.015)],
        ],
        jump_laws: vec![],
        vol_epsilon: 1e-8,
    }
    .validate()
    .unwrap()
}

/// Three regimes, two assets, jump laws given as atom mixtures.
pub fn m3() -> ValidModel<f64> {
    MarketModel {
        n_states: 3,
        m_assets: 2,
        horizon: 1.5,
        theta: Some(0.7),
        generator: Matrix::from_rows(&[vec![-0.6, 0.4, 0.2], vec![0.5, -0.9, 0.4], vec![0.3, 0.9, -1.2]]).unwrap(),
        coeffs: vec![
            vec![piece(0.0, 1.5, &[0.09, 0.06], &[&[0.2, 0.0], &[0.05, 0.15]], 0.02)],
            vec![
                piece(0.0, 0.75, &[0.05, 0.04], &[&[0.25, 0.0], &[0.1, 0.2]], 0.015),
                piece(0.75, 1.5, &[0.06, 0.05], &[&[0.22, 0.0], &[0.08, 0.18]], 0.015),
            ],
            vec![piece(0.0, 1.5, &[0.0, 0.02], &[&[0.35, 0.0], &[0.15, 0.3]], 0.005)],
        ],
        jump_laws: vec![
            atoms(0, 1, &[(&[-0.15, -0.05], 0.6), (&[-0.05, -0.02], 0.4)]),
            atoms(0, 2, &[(&[-0.3, -0.2], 0.5), (&[-0.25, -0.1], 0.5)]),
            atoms(1, 0, &[(&[0.05, 0.02], 1.0)]),
            atoms(2, 0, &[(&[0.1, 0.05], 0.7), (&[0.2, 0.1], 0.3)]),
            atoms(2, 1, &[(&[0.05, 0.0], 1.0)]),
        ],
        vol_epsilon: 1e-8,
    }
    .validate()
    .unwrap()
}

/// Random no-jump model with `N <= 4`, `m <= 3`.
pub fn random_no_jump(seed: u64) -> ValidModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4usize);
    let m = rng.random_range(1..=3usize);
    let horizon = rng.random_range(0.5..2.0);
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if i != j {
                q[(i, j)] = rng.random_range(0.0..1.5);
                row += q[(i, j)];
            }
        }
        q[(i, i)] = -row;
    }
    let n_pieces = rng.random_range(1..=2usize);
    let cut = horizon * rng.random_range(0.3..0.7);
    let coeffs = (0..n)
        .map(|_| {
            let bounds: Vec<(f64, f64)> =
                if n_pieces == 1 { vec![(0.0, horizon)] } else { vec![(0.0, cut), (cut, horizon)] };
            bounds
                .into_iter()
                .map(|(a, b)| {
                    let sigma = Matrix::from_fn(m, m, |r, c| {
                        if r == c {
                            rng.random_range(0.15..0.4)
                        } else if c < r {
                            rng.random_range(-0.1..0.1)
                        } else {
                            0.0
                        }
                    });
                    CoeffPiece {
                        t_start: a,
                        t_end: b,
                        mu: (0..m).map(|_| rng.random_range(-0.02..0.12)).collect(),
                        sigma,
                        r: rng.random_range(0.0..0.05),
                    }
                })
                .collect()
        })
        .collect();
    MarketModel {
        n_states: n,
        m_assets: m,
        horizon,
        theta: Some(rng.random_range(0.3..3.0)),
        generator: q,
        coeffs,
        jump_laws: vec![],
        vol_epsilon: 1e-8,
    }
    .validate()
    .unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
