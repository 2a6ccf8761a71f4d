use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market::ValidModel;
use crate::scalar::Scalar;

/// Random stream of path `index` under `seed`; independent of how paths are scheduled.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One trajectory of the regime chain with the price jumps at its switches.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath<T> {
    /// Switch times in `(0, T]`, increasing.
    pub switch_times: Vec<T>,
    /// `regimes[0]` is the initial state; `regimes[k + 1]` is entered at `switch_times[k]`.
    pub regimes: Vec<usize>,
    /// Jump size realized at each switch (zero where the transition has no law).
    pub jump_marks: Vec<Vec<T>>,
}

/// Samples holding times `Exp(lambda(i))`, destinations `Q(i, j) / lambda(i)` and marks
/// from the law of the realized transition.
pub fn sample_chain<T: Scalar, R: Rng + ?Sized>(model: &ValidModel<T>, initial: usize, rng: &mut R) -> ChainPath<T> {
    let n = model.n_states();
    let horizon = model.horizon();
    let mut path = ChainPath { switch_times: Vec::new(), regimes: vec![initial], jump_marks: Vec::new() };
    let mut t = T::zero();
    let mut i = initial;
    loop {
        let lambda = model.intensity(i);
        if !(lambda > T::zero()) {
            break;
        }
        let u = T::unit_uniform(rng);
        t += -(T::one() - u).ln() / lambda;
        if t > horizon {
            break;
        }
        let target = T::unit_uniform(rng) * lambda;
        let mut acc = T::zero();
        let mut j = n;
        let mut last_positive = i;
        for k in 0..n {
            if k == i || !(model.q(i, k) > T::zero()) {
                continue;
            }
            last_positive = k;
            acc += model.q(i, k);
            if target < acc {
                j = k;
                break;
            }
        }
        if j == n {
            j = last_positive;
        }
        let mark = match model.jump_law(i, j) {
            Some(law) => law.atoms()[law.sample_index(T::unit_uniform(rng))].z.clone(),
            None => vec![T::zero(); model.m_assets()],
        };
        path.switch_times.push(t);
        path.regimes.push(j);
        path.jump_marks.push(mark);
        i = j;
    }
    path
}

/// [`sample_chain`] on the stream of path `index`.
pub fn simulate_chain<T: Scalar>(model: &ValidModel<T>, initial: usize, seed: u64, index: u64) -> ChainPath<T> {
    sample_chain(model, initial, &mut path_rng(seed, index))
}
