//! Damped Newton minimization of smooth convex functions over an open polyhedron
//! `{h : 1 + h'z_k > 0}`.
//!
//! The line search never leaves `{1 + h'z_k >= margin}`. If the iterates reach that
//! boundary with the Newton direction pointing outward, the method switches to an
//! equality-constrained Newton step on the active face and reports a boundary minimum
//! once the projected gradient vanishes with non-negative multipliers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jumps::Infeasible;
use crate::linalg::Matrix;
use crate::market::AdmissibleSet;
use crate::scalar::{dot, norm_inf, Scalar};

/// Smooth convex objective with analytic gradient and Hessian.
pub trait Objective<T: Scalar> {
    fn dim(&self) -> usize;

    fn value(&self, h: &[T]) -> Result<T, Infeasible>;

    /// Writes the gradient and Hessian (both overwritten) and returns the value.
    fn eval(&self, h: &[T], grad: &mut [T], hess: &mut Matrix<T>) -> Result<T, Infeasible>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions<T> {
    pub tol_grad: T,
    pub max_iter: usize,
    /// Iterates keep `1 + h'z_k >= feasibility_margin`.
    pub feasibility_margin: T,
}

impl<T: Scalar> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self { tol_grad: T::tol(1e-10, 1e3), max_iter: 200, feasibility_margin: T::tol(1e-10, 16.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimumKind {
    Interior,
    /// Minimum on the boundary of the admissible set, returned at distance `feasibility_margin`.
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub h: Vec<T>,
    pub value: T,
    /// Gradient norm (projected onto the active face for boundary minima).
    pub grad_norm: T,
    pub iterations: usize,
    pub kind: MinimumKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MinimizeError {
    #[error("no convergence after {iterations} iterations: |grad| = {grad_norm:e} at h = {last:?}")]
    NoConvergence { last: Vec<f64>, grad_norm: f64, iterations: usize },
    #[error("objective left its domain: {0}")]
    Domain(#[from] Infeasible),
    #[error("starting point has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Minimizes `obj` over the admissible set, starting from `start` (or `0` if `start` is
/// missing or too close to the boundary).
pub fn minimize<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &O,
    set: &AdmissibleSet<T>,
    start: Option<&[T]>,
    opts: &NewtonOptions<T>,
) -> Result<Minimum<T>, MinimizeError> {
    let m = obj.dim();
    let margin = opts.feasibility_margin;
    let mut x = match start {
        Some(s) if s.len() != m => return Err(MinimizeError::Dimension { expected: m, got: s.len() }),
        Some(s) if s.iter().all(|v| v.is_finite()) && set.min_slack(s) >= margin => s.to_vec(),
        _ => vec![T::zero(); m],
    };
    let mut grad = vec![T::zero(); m];
    let mut hess = Matrix::zeros(m, m);
    let mut gn = T::infinity();
    let c_armijo = T::lit(1e-4);
    let band = T::lit(10.0) * margin + T::lit(1e-14);
    let mut active: Vec<Vec<T>> = Vec::new();

    for it in 0..opts.max_iter {
        let f = obj.eval(&x, &mut grad, &mut hess)?;
        gn = norm_inf(&grad);
        if gn <= opts.tol_grad {
            return Ok(Minimum { h: x, value: f, grad_norm: gn, iterations: it, kind: MinimumKind::Interior });
        }
        let mut d = newton_direction(&hess, &grad);
        let mut alpha_max = set.max_step(&x, &d, margin);

        let blocked = alpha_max <= T::lit(1e-12) * (T::one() + norm_inf(&x));
        let mut step_set: Option<AdmissibleSet<T>> = None;
        if blocked {
            if active.is_empty() {
                active = set.active(&x, margin, band).into_iter().map(<[T]>::to_vec).collect();
            }
            loop {
                let (dir, multipliers) = face_newton(&hess, &grad, &active);
                match multipliers.iter().position(|&mu| mu < T::zero()) {
                    Some(k) => {
                        active.remove(k);
                        if active.is_empty() {
                            d = dir;
                            break;
                        }
                    }
                    None => {
                        d = dir;
                        break;
                    }
                }
            }
            let projected = projected_gradient_norm(&grad, &active);
            if !active.is_empty()
                && (projected <= opts.tol_grad || norm_inf(&d) <= T::epsilon() * (T::one() + norm_inf(&x)))
            {
                return Ok(Minimum {
                    h: x,
                    value: f,
                    grad_norm: projected,
                    iterations: it,
                    kind: MinimumKind::Boundary,
                });
            }
            // Active constraints stay put along the face; only the others can block the step.
            let others = AdmissibleSet {
                state: set.state,
                dim: set.dim,
                constraints: set.constraints.iter().filter(|z| !active.iter().any(|a| a == *z)).cloned().collect(),
            };
            alpha_max = others.max_step(&x, &d, margin);
            step_set = Some(others);
        } else {
            active.clear();
        }

        let slope = dot(&grad, &d);
        if !(slope < T::zero()) {
            return Err(no_convergence(&x, gn, it));
        }
        let noise = T::lit(64.0) * T::epsilon() * f.abs().max(T::one());
        let mut alpha = T::one().min(alpha_max);
        let mut accepted = None;
        while alpha > T::lit(1e-20) {
            let trial: Vec<T> = x.iter().zip(&d).map(|(&xi, &di)| xi + alpha * di).collect();
            if set.min_slack(&trial) > T::zero() {
                if let Ok(ft) = obj.value(&trial) {
                    let armijo = ft <= f + c_armijo * alpha * slope;
                    let within_noise = -slope <= noise && ft <= f + noise;
                    if armijo || within_noise {
                        accepted = Some(trial);
                        break;
                    }
                }
            }
            alpha *= T::lit(0.5);
        }
        match accepted {
            Some(next) => {
                if step_set.is_some() || alpha == alpha_max {
                    // Landed on (or moved along) the margin: remember the constraints now binding.
                    active = set.active(&next, margin, band).into_iter().map(<[T]>::to_vec).collect();
                }
                x = next;
            }
            None => return Err(no_convergence(&x, gn, it)),
        }
    }
    Err(no_convergence(&x, gn, opts.max_iter))
}

fn no_convergence<T: Scalar>(x: &[T], gn: T, iterations: usize) -> MinimizeError {
    MinimizeError::NoConvergence { last: x.iter().map(|v| v.as_f64()).collect(), grad_norm: gn.as_f64(), iterations }
}

/// `-H^{-1} g`, shifting `H` toward the identity if it is not numerically positive definite.
fn newton_direction<T: Scalar>(hess: &Matrix<T>, grad: &[T]) -> Vec<T> {
    let m = grad.len();
    let mut shift = T::zero();
    let scale = hess.max_abs().max(T::epsilon());
    for _ in 0..40 {
        let h = if shift > T::zero() { hess.add(&Matrix::identity(m).scale(shift)) } else { hess.clone() };
        if let Ok(ch) = h.cholesky() {
            return ch.solve(grad).into_iter().map(|v| -v).collect();
        }
        shift = if shift > T::zero() { shift * T::lit(10.0) } else { scale * T::lit(1e-10) };
    }
    grad.iter().map(|&g| -g).collect()
}

/// Newton step restricted to `{d : z_a'd = 0}` and the KKT multipliers `mu_a` in
/// `grad = sum_a mu_a z_a` (non-negative at a boundary minimum).
fn face_newton<T: Scalar>(hess: &Matrix<T>, grad: &[T], active: &[Vec<T>]) -> (Vec<T>, Vec<T>) {
    let m = grad.len();
    let k = active.len();
    if k == 0 {
        return (newton_direction(hess, grad), Vec::new());
    }
    let n = m + k;
    let kkt = Matrix::from_fn(n, n, |r, c| match (r < m, c < m) {
        (true, true) => hess[(r, c)],
        (true, false) => active[c - m][r],
        (false, true) => active[r - m][c],
        (false, false) => T::zero(),
    });
    let rhs = Matrix::from_fn(n, 1, |r, _| if r < m { -grad[r] } else { T::zero() });
    match kkt.solve(&rhs) {
        Ok(sol) => {
            let d = (0..m).map(|r| sol[(r, 0)]).collect();
            let mu = (m..n).map(|r| -sol[(r, 0)]).collect();
            (d, mu)
        }
        // Dependent active normals: drop the last one and retry.
        Err(_) => {
            let (d, mut mu) = face_newton(hess, grad, &active[..k - 1]);
            mu.push(T::zero());
            (d, mu)
        }
    }
}

/// Norm of the gradient minus its least-squares component along the active normals.
fn projected_gradient_norm<T: Scalar>(grad: &[T], active: &[Vec<T>]) -> T {
    if active.is_empty() {
        return norm_inf(grad);
    }
    let mut basis: Vec<Vec<T>> = Vec::new();
    for a in active {
        let mut v = a.clone();
        for b in &basis {
            let c = dot(&v, b);
            for (vi, &bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
        let nv = dot(&v, &v).sqrt();
        if nv > T::epsilon() {
            basis.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    let mut g = grad.to_vec();
    for b in &basis {
        let c = dot(&g, b);
        for (gi, &bi) in g.iter_mut().zip(b) {
            *gi -= c * bi;
        }
    }
    norm_inf(&g)
}
