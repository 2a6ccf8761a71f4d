//! The running cost `g`, the operator `A(u, h)` and its pointwise minimization over the
//! admissible set.

use serde::{Deserialize, Serialize};

use crate::jumps::Infeasible;
use crate::linalg::Matrix;
use crate::market::{Piece, ValidModel};
use crate::optim::{minimize, MinimizeError, Minimum, NewtonOptions, Objective};
use crate::scalar::{dot, Scalar};

/// Which jump structure the operator describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// Price jumps occur at the regime switches (the jump term is weighted by `u(j)`).
    #[default]
    Coinciding,
    /// Price jumps arrive independently of the switches with matched intensity
    /// (the jump term is weighted by `u(i)`).
    Independent,
}

/// `mu - r 1 - sum_j Q(i, j) xi(i, j)`.
pub(crate) fn compensated_excess<T: Scalar>(model: &ValidModel<T>, piece: &Piece<T>, i: usize) -> Vec<T> {
    let mut e = piece.excess_return();
    for j in 0..model.n_states() {
        if j == i {
            continue;
        }
        if let Some(law) = model.jump_law(i, j) {
            let q = model.q(i, j);
            for (ek, &xk) in e.iter_mut().zip(law.mean()) {
                *ek -= q * xk;
            }
        }
    }
    e
}

/// `g(t, i, h)` on a given coefficient piece.
pub fn g_on_piece<T: Scalar>(
    model: &ValidModel<T>,
    piece: &Piece<T>,
    i: usize,
    h: &[T],
    theta: T,
) -> Result<T, Infeasible> {
    let half = T::lit(0.5);
    let mut g = half * (theta + T::one()) * piece.cov.quad_form(h) - piece.r - dot(h, &piece.excess_return());
    for j in 0..model.n_states() {
        if j == i {
            continue;
        }
        if let Some(law) = model.jump_law(i, j) {
            let q = model.q(i, j);
            let pi = law.power_integral(h, theta)?;
            g += q * ((pi - T::one()) / theta + dot(h, law.mean()));
        }
    }
    Ok(g)
}

/// Evaluator of `g` bound to a model.
#[derive(Debug, Clone, Copy)]
pub struct GFunction<'a, T> {
    model: &'a ValidModel<T>,
}

impl<'a, T: Scalar> GFunction<'a, T> {
    pub fn new(model: &'a ValidModel<T>) -> Self {
        Self { model }
    }

    pub fn value(&self, t: T, i: usize, h: &[T]) -> Result<T, Infeasible> {
        g_on_piece(self.model, self.model.coeffs_at(i, t), i, h, self.model.theta())
    }
}

/// `g(t, i, h)` with the model's risk aversion.
pub fn g_value<T: Scalar>(model: &ValidModel<T>, t: T, i: usize, h: &[T]) -> Result<T, Infeasible> {
    GFunction::new(model).value(t, i, h)
}

/// `h -> A(u, h)(i)` on one coefficient piece, with analytic derivatives.
#[derive(Debug, Clone)]
pub struct AObjective<'a, T> {
    model: &'a ValidModel<T>,
    piece: &'a Piece<T>,
    i: usize,
    u: &'a [T],
    theta: T,
    kind: OperatorKind,
    excess: Vec<T>,
    constant: T,
}

impl<'a, T: Scalar> AObjective<'a, T> {
    pub fn new(
        model: &'a ValidModel<T>,
        piece: &'a Piece<T>,
        i: usize,
        u: &'a [T],
        theta: T,
        kind: OperatorKind,
    ) -> Self {
        let excess = compensated_excess(model, piece, i);
        let ui = u[i];
        let mut constant = -theta * ui * piece.r;
        for j in 0..model.n_states() {
            if j == i {
                continue;
            }
            let q = model.q(i, j);
            constant += match kind {
                OperatorKind::Coinciding => -q * ui,
                OperatorKind::Independent => q * (u[j] - ui - ui),
            };
        }
        Self { model, piece, i, u, theta, kind, excess, constant }
    }

    fn jump_weight(&self, j: usize) -> T {
        match self.kind {
            OperatorKind::Coinciding => self.model.q(self.i, j) * self.u[j],
            OperatorKind::Independent => self.model.q(self.i, j) * self.u[self.i],
        }
    }

    /// The jump part `sum_j Q(i, j) w_j PI(i, j, h)` alone.
    pub fn jump_term(&self, h: &[T]) -> Result<T, Infeasible> {
        let mut acc = T::zero();
        for j in 0..self.model.n_states() {
            if j == self.i {
                continue;
            }
            let w = self.jump_weight(j);
            acc += match self.model.jump_law(self.i, j) {
                Some(law) => w * law.power_integral(h, self.theta)?,
                None => w,
            };
        }
        Ok(acc)
    }
}

impl<T: Scalar> Objective<T> for AObjective<'_, T> {
    fn dim(&self) -> usize {
        self.excess.len()
    }

    fn value(&self, h: &[T]) -> Result<T, Infeasible> {
        let th = self.theta;
        let ui = self.u[self.i];
        let diffusion = T::lit(0.5) * ui * th * (th + T::one()) * self.piece.cov.quad_form(h);
        Ok(self.jump_term(h)? + diffusion - th * ui * dot(h, &self.excess) + self.constant)
    }

    fn eval(&self, h: &[T], grad: &mut [T], hess: &mut Matrix<T>) -> Result<T, Infeasible> {
        let th = self.theta;
        let ui = self.u[self.i];
        let c2 = ui * th * (th + T::one());
        let ch = self.piece.cov.mul_vec(h);
        for r in 0..grad.len() {
            grad[r] = c2 * ch[r] - th * ui * self.excess[r];
            for c in 0..grad.len() {
                hess[(r, c)] = c2 * self.piece.cov[(r, c)];
            }
        }
        let mut value = T::lit(0.5) * c2 * dot(h, &ch) - th * ui * dot(h, &self.excess) + self.constant;
        for j in 0..self.model.n_states() {
            if j == self.i {
                continue;
            }
            let w = self.jump_weight(j);
            value += match self.model.jump_law(self.i, j) {
                Some(law) => w * law.accumulate_power(h, th, w, grad, hess)?,
                None => w,
            };
        }
        Ok(value)
    }
}

/// `A(u, h)(t, i)` for coinciding jumps.
pub fn operator_a<T: Scalar>(model: &ValidModel<T>, u: &[T], t: T, i: usize, h: &[T]) -> Result<T, Infeasible> {
    AObjective::new(model, model.coeffs_at(i, t), i, u, model.theta(), OperatorKind::Coinciding).value(h)
}

/// The operator of the comparison model whose jumps do not coincide with the switches.
pub fn independent_jumps_operator<T: Scalar>(
    model: &ValidModel<T>,
    u: &[T],
    t: T,
    i: usize,
    h: &[T],
) -> Result<T, Infeasible> {
    AObjective::new(model, model.coeffs_at(i, t), i, u, model.theta(), OperatorKind::Independent).value(h)
}

/// Minimizes `h -> A(u, h)(i)` over the admissible set of `i` on one coefficient piece.
pub fn minimize_a_on_piece<T: Scalar>(
    model: &ValidModel<T>,
    piece: &Piece<T>,
    u: &[T],
    i: usize,
    kind: OperatorKind,
    warm_start: Option<&[T]>,
    opts: &NewtonOptions<T>,
) -> Result<Minimum<T>, MinimizeError> {
    let obj = AObjective::new(model, piece, i, u, model.theta(), kind);
    minimize(&obj, model.admissible_set(i), warm_start, opts)
}

/// `h*(u, t, i)` and `inf_h A(u, h)(t, i)`.
pub fn minimize_a<T: Scalar>(
    model: &ValidModel<T>,
    u: &[T],
    t: T,
    i: usize,
    warm_start: Option<&[T]>,
    opts: &NewtonOptions<T>,
) -> Result<Minimum<T>, MinimizeError> {
    minimize_a_on_piece(model, model.coeffs_at(i, t), u, i, OperatorKind::Coinciding, warm_start, opts)
}

/// Tilted generator `Q^h` for one allocation per state.
pub fn tilted_generator<T: Scalar>(model: &ValidModel<T>, h: &[Vec<T>], theta: T) -> Result<Matrix<T>, Infeasible> {
    let n = model.n_states();
    let mut qh = Matrix::zeros(n, n);
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            if j == i {
                continue;
            }
            let q = model.q(i, j);
            let v = match model.jump_law(i, j) {
                Some(law) if q != T::zero() => q * law.power_integral(&h[i], theta)?,
                _ => q,
            };
            qh[(i, j)] = v;
            row += v;
        }
        qh[(i, i)] = -row;
    }
    Ok(qh)
}

/// `A(h) = Q^h + theta diag(g(h))` with every state on the given pieces.
pub fn operator_matrix<T: Scalar>(
    model: &ValidModel<T>,
    pieces: &[&Piece<T>],
    h: &[Vec<T>],
) -> Result<Matrix<T>, Infeasible> {
    let theta = model.theta();
    let mut a = tilted_generator(model, h, theta)?;
    for (i, piece) in pieces.iter().enumerate() {
        a[(i, i)] += theta * g_on_piece(model, piece, i, &h[i], theta)?;
    }
    Ok(a)
}

/// `min_h g(h)` on one piece of one state.
pub fn g_minimum<T: Scalar>(
    model: &ValidModel<T>,
    piece: &Piece<T>,
    i: usize,
    opts: &NewtonOptions<T>,
) -> Result<Minimum<T>, MinimizeError> {
    // A(1, h)(i) = theta g(h) because the rows of Q^h sum to zero.
    let ones = vec![T::one(); model.n_states()];
    let theta = model.theta();
    let mut min = minimize_a_on_piece(model, piece, &ones, i, OperatorKind::Coinciding, None, opts)?;
    min.value /= theta;
    Ok(min)
}
