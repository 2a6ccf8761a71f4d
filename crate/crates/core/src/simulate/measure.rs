use crate::hjb::{segments, tilted_generator};
use crate::jumps::Infeasible;
use crate::linalg::Matrix;
use crate::market::ValidModel;
use crate::policy::Strategy;
use crate::scalar::Scalar;

/// `Q^h(t)` with `Q^h(i, j) = Q(i, j) E[(1 + h(t, i)'Z)^-theta]`.
pub fn effective_generator<T: Scalar, S: Strategy<T> + ?Sized>(
    model: &ValidModel<T>,
    strategy: &S,
    t: T,
) -> Result<Matrix<T>, Infeasible> {
    let h: Vec<Vec<T>> = (0..model.n_states()).map(|i| strategy.allocation(t, i).to_vec()).collect();
    tilted_generator(model, &h, model.theta())
}

/// `sup_(t, i) theta h'Ch + sum_j Q(i, j) E[((1 + h'Z)^-theta - 1)^2]`.
pub fn klebaner_bound<T: Scalar, S: Strategy<T> + ?Sized>(
    model: &ValidModel<T>,
    strategy: &S,
) -> Result<T, Infeasible> {
    let theta = model.theta();
    let mut sup = T::zero();
    for (a, b) in segments(model, strategy.breakpoints(), T::zero()) {
        for i in 0..model.n_states() {
            let h = strategy.allocation(a, i);
            let mut v = theta * model.coeffs_on(i, a, b).cov.quad_form(h);
            for j in 0..model.n_states() {
                if j != i {
                    if let Some(law) = model.jump_law(i, j) {
                        v += model.q(i, j) * law.squared_power_deviation(h, theta)?;
                    }
                }
            }
            sup = sup.max(v);
        }
    }
    Ok(sup)
}
