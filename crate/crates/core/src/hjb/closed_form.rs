//! Exact values by matrix exponentials: the optimum without jumps, and any fixed
//! piecewise-constant strategy.

use super::operator::operator_matrix;
use super::HjbError;
use crate::market::{Piece, ValidModel};
use crate::policy::Strategy;
use crate::scalar::{dot, Scalar};

/// `g*(i) = -(mu - r 1)'(Sigma Sigma')^-1 (mu - r 1) / (2 (theta + 1)) - r`, the minimum of `g`
/// without jumps.
pub fn g_star<T: Scalar>(piece: &Piece<T>, theta: T) -> T {
    let e = piece.excess_return();
    let w = piece.chol.solve(&e);
    -dot(&e, &w) / (T::lit(2.0) * (theta + T::one())) - piece.r
}

/// `h* = (Sigma Sigma')^-1 (mu - r 1) / (1 + theta)` without jumps.
pub fn h_star_no_jump<T: Scalar>(piece: &Piece<T>, theta: T) -> Vec<T> {
    let scale = T::one() / (T::one() + theta);
    piece.chol.solve(&piece.excess_return()).into_iter().map(|x| x * scale).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm<T> {
    pub u: Vec<T>,
    pub v: Vec<T>,
}

/// Segments of `[t, T]` on which both the coefficients and the strategy are constant.
pub(crate) fn segments<T: Scalar>(model: &ValidModel<T>, extra: &[T], t: T) -> Vec<(T, T)> {
    let horizon = model.horizon();
    let mut cuts: Vec<T> = model.breakpoints().iter().chain(extra).copied().filter(|&s| s > t && s < horizon).collect();
    cuts.push(t);
    cuts.push(horizon);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

fn propagate<T: Scalar>(
    model: &ValidModel<T>,
    t: T,
    extra: &[T],
    mut matrix: impl FnMut(T, T) -> Result<crate::linalg::Matrix<T>, HjbError>,
) -> Result<ClosedForm<T>, HjbError> {
    if !(t >= T::zero() && t <= model.horizon()) {
        return Err(HjbError::Time(t.as_f64()));
    }
    let mut u = vec![T::one(); model.n_states()];
    for (a, b) in segments(model, extra, t).into_iter().rev() {
        let e = matrix(a, b)?.scale(b - a).expm()?;
        u = e.mul_vec(&u);
    }
    let theta = model.theta();
    let v = u.iter().map(|&x| -x.ln() / theta).collect();
    Ok(ClosedForm { u, v })
}

/// `u(t) = prod_k exp((Q + theta diag g*_k) dt_k) 1` over the coefficient pieces of `[t, T]`.
pub fn closed_form_no_jump<T: Scalar>(model: &ValidModel<T>, t: T) -> Result<ClosedForm<T>, HjbError> {
    if model.has_jumps() {
        return Err(HjbError::HasJumps);
    }
    let theta = model.theta();
    propagate(model, t, &[], |a, b| {
        let mut m = model.generator().clone();
        for i in 0..model.n_states() {
            m[(i, i)] += theta * g_star(model.coeffs_on(i, a, b), theta);
        }
        Ok(m)
    })
}

/// `E[V_T^-theta]` from each starting state at time `t` under a fixed strategy, via
/// `A(h) = Q^h + theta diag g(h)` on every segment.
pub fn strategy_value<T: Scalar, S: Strategy<T> + ?Sized>(
    model: &ValidModel<T>,
    strategy: &S,
    t: T,
) -> Result<ClosedForm<T>, HjbError> {
    let n = model.n_states();
    propagate(model, t, strategy.breakpoints(), |a, b| {
        let pieces: Vec<&Piece<T>> = (0..n).map(|i| model.coeffs_on(i, a, b)).collect();
        let h: Vec<Vec<T>> = (0..n).map(|i| strategy.allocation(a, i).to_vec()).collect();
        Ok(operator_matrix(model, &pieces, &h)?)
    })
}
