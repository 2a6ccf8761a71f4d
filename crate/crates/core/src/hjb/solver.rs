//! Backward RK4 integration of `du/dt + inf_h A(u, h) = 0`, `u(T) = 1`.

use rayon::prelude::*;

use super::operator::{g_minimum, minimize_a_on_piece, OperatorKind};
use super::surface::{NodeDiagnostics, ValueSurface};
use super::HjbError;
use crate::market::{Piece, ValidModel};
use crate::optim::{Minimum, NewtonOptions};
use crate::scalar::Scalar;

/// Grid resolution. Every coefficient breakpoint is a node regardless of the choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Steps<T> {
    /// Roughly `n` equal steps over `[0, T]`.
    Count(usize),
    /// Steps no wider than `dt`.
    Width(T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub steps: Steps<T>,
    pub newton: NewtonOptions<T>,
    pub tol_ode: T,
    /// Compare each step against two half steps and subdivide until they agree to `tol_ode`.
    pub step_doubling: bool,
    pub max_halvings: usize,
    pub kind: OperatorKind,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            steps: Steps::Count(200),
            newton: NewtonOptions::default(),
            tol_ode: T::tol(1e-8, 100.0),
            step_doubling: false,
            max_halvings: 8,
            kind: OperatorKind::Coinciding,
        }
    }
}

/// Integration nodes: each interval between breakpoints split into equal steps.
pub fn time_grid<T: Scalar>(model: &ValidModel<T>, steps: Steps<T>) -> Result<Vec<T>, HjbError> {
    let horizon = model.horizon();
    let dt = match steps {
        Steps::Count(n) if n >= 1 => horizon / T::lit(n as f64),
        Steps::Width(dt) if dt > T::zero() && dt.is_finite() => dt,
        _ => return Err(HjbError::Grid(format!("invalid step specification {steps:?}"))),
    };
    let mut grid = vec![T::zero()];
    for w in model.breakpoints().windows(2) {
        let (a, b) = (w[0], w[1]);
        let k = ((b - a) / dt - T::tol(1e-9, 16.0)).ceil().max(T::one());
        let k = k.to_usize().ok_or_else(|| HjbError::Grid(format!("step count {k} too large")))?;
        for s in 1..=k {
            grid.push(if s == k { b } else { a + (b - a) * T::lit(s as f64) / T::lit(k as f64) });
        }
    }
    Ok(grid)
}

struct Stage<T> {
    values: Vec<T>,
    minima: Vec<Minimum<T>>,
}

struct Integrator<'a, T> {
    model: &'a ValidModel<T>,
    cfg: &'a SolverConfig<T>,
    warm: Vec<Vec<T>>,
}

impl<T: Scalar> Integrator<'_, T> {
    /// `inf_h A(u, h)(i)` for every state, in state order.
    fn operator(&mut self, pieces: &[&Piece<T>], u: &[T], t: T) -> Result<Stage<T>, HjbError> {
        if let Some(i) = u.iter().position(|&x| !(x > T::zero()) || !x.is_finite()) {
            return Err(HjbError::TrustRegion {
                t: t.as_f64(),
                state: i,
                u: u[i].as_f64(),
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let (model, cfg, warm) = (self.model, self.cfg, &self.warm);
        let results: Vec<_> = (0..model.n_states())
            .into_par_iter()
            .map(|i| minimize_a_on_piece(model, pieces[i], u, i, cfg.kind, Some(&warm[i]), &cfg.newton))
            .collect();
        let mut values = Vec::with_capacity(results.len());
        let mut minima = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            let m = r.map_err(|source| HjbError::Minimize { t: t.as_f64(), state: i, source })?;
            self.warm[i].clone_from(&m.h);
            values.push(m.value);
            minima.push(m);
        }
        Ok(Stage { values, minima })
    }

    /// One classical RK4 step from `t_hi` back to `t_hi - dt`.
    fn rk4(&mut self, pieces: &[&Piece<T>], u: &[T], t_hi: T, dt: T, k1: Option<&[T]>) -> Result<Vec<T>, HjbError> {
        let half = dt / T::lit(2.0);
        let axpy = |k: &[T], s: T| u.iter().zip(k).map(|(&a, &b)| a + s * b).collect::<Vec<T>>();
        let k1 = match k1 {
            Some(k) => k.to_vec(),
            None => self.operator(pieces, u, t_hi)?.values,
        };
        let k2 = self.operator(pieces, &axpy(&k1, half), t_hi - half)?.values;
        let k3 = self.operator(pieces, &axpy(&k2, half), t_hi - half)?.values;
        let k4 = self.operator(pieces, &axpy(&k3, dt), t_hi - dt)?.values;
        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        Ok((0..u.len()).map(|i| u[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i])).collect())
    }

    fn substeps(
        &mut self,
        pieces: &[&Piece<T>],
        u: &[T],
        t_hi: T,
        dt: T,
        n: usize,
        k1: Option<&[T]>,
    ) -> Result<Vec<T>, HjbError> {
        let h = dt / T::lit(n as f64);
        let mut x = self.rk4(pieces, u, t_hi, h, k1)?;
        for s in 1..n {
            x = self.rk4(pieces, &x, t_hi - h * T::lit(s as f64), h, None)?;
        }
        Ok(x)
    }
}

fn same_pieces<T>(a: &[&Piece<T>], b: &[&Piece<T>]) -> bool {
    a.iter().zip(b).all(|(x, y)| std::ptr::eq(*x, *y))
}

/// Solves the HJB equation with coinciding jumps (or `cfg.kind`).
pub fn solve_hjb<T: Scalar>(model: &ValidModel<T>, cfg: &SolverConfig<T>) -> Result<ValueSurface<T>, HjbError> {
    let n = model.n_states();
    let m = model.m_assets();
    let theta = model.theta();
    let grid = time_grid(model, cfg.steps)?;
    let last = grid.len() - 1;
    let horizon = model.horizon();

    let mut g_min = T::infinity();
    for i in 0..n {
        for p in model.pieces(i) {
            let gm = g_minimum(model, p, i, &cfg.newton).map_err(|source| HjbError::Minimize {
                t: p.t_start.as_f64(),
                state: i,
                source,
            })?;
            g_min = g_min.min(gm.value);
        }
    }
    let r_min = model.r_min();
    let band = |t: T| {
        let tau = horizon - t;
        ((theta * g_min * tau).exp() / T::lit(2.0), T::lit(2.0) * (-theta * r_min * tau).exp())
    };

    let pieces_on = |a: T, b: T| -> Vec<&Piece<T>> { (0..n).map(|i| model.coeffs_on(i, a, b)).collect() };

    let mut integ = Integrator { model, cfg, warm: vec![vec![T::zero(); m]; n] };
    let mut u = vec![vec![T::zero(); n]; grid.len()];
    let mut minima: Vec<Vec<Minimum<T>>> = vec![Vec::new(); grid.len()];
    u[last] = vec![T::one(); n];

    let mut node_pieces = pieces_on(grid[last - 1], grid[last]);
    let mut node = integ.operator(&node_pieces, &u[last], grid[last])?;
    let mut ode_error: Option<T> = None;

    for k in (0..last).rev() {
        let (a, b) = (grid[k], grid[k + 1]);
        let dt = b - a;
        let pieces = pieces_on(a, b);
        let k1 = same_pieces(&pieces, &node_pieces).then_some(node.values.as_slice());
        minima[k + 1] = std::mem::take(&mut node.minima);

        let next = if cfg.step_doubling {
            let mut nsub = 1;
            let mut coarse = integ.substeps(&pieces, &u[k + 1], b, dt, nsub, k1)?;
            let mut halvings = 0;
            loop {
                let fine = integ.substeps(&pieces, &u[k + 1], b, dt, 2 * nsub, k1)?;
                let err = coarse
                    .iter()
                    .zip(&fine)
                    .map(|(&c, &f)| (c - f).abs() / (T::lit(15.0) * f.abs().max(T::one())))
                    .fold(T::zero(), T::max);
                if err <= cfg.tol_ode || halvings >= cfg.max_halvings {
                    ode_error = Some(ode_error.map_or(err, |e| e.max(err)));
                    break fine;
                }
                coarse = fine;
                nsub *= 2;
                halvings += 1;
            }
        } else {
            integ.rk4(&pieces, &u[k + 1], b, dt, k1)?
        };

        let (lo, hi) = band(a);
        if let Some(i) = next.iter().position(|&x| !(x >= lo && x <= hi)) {
            return Err(HjbError::TrustRegion {
                t: a.as_f64(),
                state: i,
                u: next[i].as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        u[k] = next;
        node = integ.operator(&pieces, &u[k], a)?;
        node_pieces = pieces;
    }
    minima[0] = node.minima;

    let v = u.iter().map(|row| row.iter().map(|&x| -x.ln() / theta).collect()).collect();
    let mut h_star = Vec::with_capacity(grid.len());
    let mut diagnostics = Vec::with_capacity(grid.len());
    for mins in minima {
        let mut hs = Vec::with_capacity(n);
        let mut ds = Vec::with_capacity(n);
        for (i, mn) in mins.into_iter().enumerate() {
            ds.push(NodeDiagnostics {
                kind: mn.kind,
                iterations: mn.iterations,
                grad_norm: mn.grad_norm,
                min_slack: model.admissible_set(i).min_slack(&mn.h),
            });
            hs.push(mn.h);
        }
        h_star.push(hs);
        diagnostics.push(ds);
    }
    Ok(ValueSurface { theta, kind: cfg.kind, time_grid: grid, u, v, h_star, diagnostics, g_min, r_min, ode_error })
}

/// [`solve_hjb`] with an explicit operator variant.
pub fn solve_hjb_with<T: Scalar>(
    model: &ValidModel<T>,
    cfg: &SolverConfig<T>,
    kind: OperatorKind,
) -> Result<ValueSurface<T>, HjbError> {
    solve_hjb(model, &SolverConfig { kind, ..*cfg })
}
