//! Kelly (log-optimal) allocations, first-order fixed points and the two-fund split
//! `h* = h^K / (1 + theta) + theta h~ / (1 + theta)`.

use thiserror::Error;

use crate::hjb::ValueSurface;
use crate::jumps::Infeasible;
use crate::linalg::Matrix;
use crate::market::{Piece, ValidModel};
use crate::optim::{minimize, MinimizeError, Minimum, NewtonOptions, Objective};
use crate::scalar::{dot, norm_inf, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Minimize(#[from] MinimizeError),
    #[error(transparent)]
    Domain(#[from] Infeasible),
    #[error("the hedge portfolio needs theta > 0")]
    ZeroTheta,
}

/// `-l(h)`, where `l` is the expected log-growth rate
/// `r + h'(mu - r 1) - h'Ch / 2 + sum_j Q(i, j) [E log(1 + h'Z) - h'xi(i, j)]`.
#[derive(Debug, Clone)]
pub struct KellyObjective<'a, T> {
    model: &'a ValidModel<T>,
    piece: &'a Piece<T>,
    i: usize,
    excess: Vec<T>,
}

impl<'a, T: Scalar> KellyObjective<'a, T> {
    pub fn new(model: &'a ValidModel<T>, piece: &'a Piece<T>, i: usize) -> Self {
        let excess = crate::hjb::compensated_excess(model, piece, i);
        Self { model, piece, i, excess }
    }
}

impl<T: Scalar> Objective<T> for KellyObjective<'_, T> {
    fn dim(&self) -> usize {
        self.excess.len()
    }

    fn value(&self, h: &[T]) -> Result<T, Infeasible> {
        let mut v = T::lit(0.5) * self.piece.cov.quad_form(h) - self.piece.r - dot(h, &self.excess);
        for j in 0..self.model.n_states() {
            if j != self.i {
                if let Some(law) = self.model.jump_law(self.i, j) {
                    v -= self.model.q(self.i, j) * law.log_integral(h)?;
                }
            }
        }
        Ok(v)
    }

    fn eval(&self, h: &[T], grad: &mut [T], hess: &mut Matrix<T>) -> Result<T, Infeasible> {
        let ch = self.piece.cov.mul_vec(h);
        for r in 0..grad.len() {
            grad[r] = ch[r] - self.excess[r];
            for c in 0..grad.len() {
                hess[(r, c)] = self.piece.cov[(r, c)];
            }
        }
        let mut v = T::lit(0.5) * dot(h, &ch) - self.piece.r - dot(h, &self.excess);
        for j in 0..self.model.n_states() {
            if j != self.i {
                if let Some(law) = self.model.jump_law(self.i, j) {
                    let q = self.model.q(self.i, j);
                    v -= q * law.accumulate_log(h, -q, grad, hess)?;
                }
            }
        }
        Ok(v)
    }
}

/// Expected log-growth rate `l(t, i, h)`.
pub fn log_growth_rate<T: Scalar>(model: &ValidModel<T>, t: T, i: usize, h: &[T]) -> Result<T, Infeasible> {
    Ok(-KellyObjective::new(model, model.coeffs_at(i, t), i).value(h)?)
}

/// Maximizer of `l` on one piece; `value` holds the maximal growth rate.
pub fn kelly_on_piece<T: Scalar>(
    model: &ValidModel<T>,
    piece: &Piece<T>,
    i: usize,
    opts: &NewtonOptions<T>,
) -> Result<Minimum<T>, MinimizeError> {
    let mut min = minimize(&KellyObjective::new(model, piece, i), model.admissible_set(i), None, opts)?;
    min.value = -min.value;
    Ok(min)
}

/// The Kelly allocation `h^K(t, i)`.
pub fn kelly_allocation<T: Scalar>(
    model: &ValidModel<T>,
    t: T,
    i: usize,
    opts: &NewtonOptions<T>,
) -> Result<Minimum<T>, MinimizeError> {
    kelly_on_piece(model, model.coeffs_at(i, t), i, opts)
}

/// Right-hand side of the optimality fixed point
/// `(Sigma Sigma')^-1 [mu - r 1 + sum_j Q(i, j) ((u_j / u_i) E[Z (1 + h'Z)^(-1-theta)] - xi(i, j))] / (1 + theta)`.
pub fn fixed_point_map<T: Scalar>(
    model: &ValidModel<T>,
    piece: &Piece<T>,
    i: usize,
    h: &[T],
    u: &[T],
    theta: T,
) -> Result<Vec<T>, Infeasible> {
    let mut rhs = piece.excess_return();
    for j in 0..model.n_states() {
        if j == i {
            continue;
        }
        if let Some(law) = model.jump_law(i, j) {
            let q = model.q(i, j);
            let ratio = u[j] / u[i];
            let tilted = law.tilted_first_moment(h, theta)?;
            for ((r, &m), &x) in rhs.iter_mut().zip(&tilted).zip(law.mean()) {
                *r += q * (ratio * m - x);
            }
        }
    }
    let scale = T::one() / (T::one() + theta);
    Ok(piece.chol.solve(&rhs).into_iter().map(|x| x * scale).collect())
}

fn residual<T: Scalar>(h: &[T], rhs: &[T]) -> T {
    let d: Vec<T> = h.iter().zip(rhs).map(|(&a, &b)| a - b).collect();
    norm_inf(&d)
}

/// `|h - RHS(h)|_inf` for the risk-sensitive fixed point.
pub fn fixed_point_residual<T: Scalar>(
    model: &ValidModel<T>,
    t: T,
    i: usize,
    h: &[T],
    u: &[T],
    theta: T,
) -> Result<T, Infeasible> {
    Ok(residual(h, &fixed_point_map(model, model.coeffs_at(i, t), i, h, u, theta)?))
}

/// `|h - RHS(h)|_inf` for the Kelly fixed point (`theta = 0`, no value ratios).
pub fn kelly_residual<T: Scalar>(model: &ValidModel<T>, t: T, i: usize, h: &[T]) -> Result<T, Infeasible> {
    kelly_residual_on_piece(model, model.coeffs_at(i, t), i, h)
}

fn kelly_residual_on_piece<T: Scalar>(
    model: &ValidModel<T>,
    piece: &Piece<T>,
    i: usize,
    h: &[T],
) -> Result<T, Infeasible> {
    let ones = vec![T::one(); model.n_states()];
    Ok(residual(h, &fixed_point_map(model, piece, i, h, &ones, T::zero())?))
}

/// The hedge portfolio `((1 + theta) h* - h^K) / theta`.
pub fn mutual_fund_split<T: Scalar>(h_star: &[T], h_kelly: &[T], theta: T) -> Result<Vec<T>, StrategyError> {
    if !(theta > T::zero()) {
        return Err(StrategyError::ZeroTheta);
    }
    Ok(h_star.iter().zip(h_kelly).map(|(&s, &k)| ((T::one() + theta) * s - k) / theta).collect())
}

/// Optimal, Kelly and hedge allocations at one node, with both fixed-point residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationReport<T> {
    pub t: T,
    pub state: usize,
    pub h_star: Vec<T>,
    pub h_kelly: Vec<T>,
    pub h_hedge: Vec<T>,
    pub kelly_residual: T,
    pub star_residual: T,
}

/// One report per grid node and state of a solved surface.
pub fn allocation_reports<T: Scalar>(
    model: &ValidModel<T>,
    surface: &ValueSurface<T>,
    opts: &NewtonOptions<T>,
) -> Result<Vec<AllocationReport<T>>, StrategyError> {
    let theta = surface.theta;
    let mut out = Vec::with_capacity(surface.n_nodes() * model.n_states());
    let mut cache: Vec<Option<(&Piece<T>, Vec<T>, T)>> = vec![None; model.n_states()];
    for k in 0..surface.n_nodes() {
        let (a, b) = surface.cell(k);
        for i in 0..model.n_states() {
            let piece = model.coeffs_on(i, a, b);
            let (h_kelly, kelly_res) = match &cache[i] {
                Some((p, h, r)) if std::ptr::eq(*p, piece) => (h.clone(), *r),
                _ => {
                    let h = kelly_on_piece(model, piece, i, opts)?.h;
                    let r = kelly_residual_on_piece(model, piece, i, &h)?;
                    cache[i] = Some((piece, h.clone(), r));
                    (h, r)
                }
            };
            let h_star = surface.h_star[k][i].clone();
            let star_residual = residual(&h_star, &fixed_point_map(model, piece, i, &h_star, &surface.u[k], theta)?);
            out.push(AllocationReport {
                t: surface.time_grid[k],
                state: i,
                h_hedge: mutual_fund_split(&h_star, &h_kelly, theta)?,
                h_star,
                h_kelly,
                kelly_residual: kelly_res,
                star_residual,
            });
        }
    }
    Ok(out)
}
