//! Markov strategies `h(t, i)`, piecewise constant in time.

use crate::hjb::ValueSurface;
use crate::scalar::Scalar;

/// A Markov allocation rule. Allocations are right-continuous and constant between
/// consecutive [`Strategy::breakpoints`].
pub trait Strategy<T: Scalar>: Send + Sync {
    fn allocation(&self, t: T, i: usize) -> &[T];

    /// Times in `(0, T)` where the allocation may change.
    fn breakpoints(&self) -> &[T];
}

/// The same allocation at all times (possibly different per state).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantStrategy<T> {
    per_state: Vec<Vec<T>>,
}

impl<T: Scalar> ConstantStrategy<T> {
    pub fn new(per_state: Vec<Vec<T>>) -> Self {
        Self { per_state }
    }

    /// `h` in every one of `n` states.
    pub fn uniform(n: usize, h: Vec<T>) -> Self {
        Self { per_state: vec![h; n] }
    }

    pub fn zero(n: usize, m: usize) -> Self {
        Self::uniform(n, vec![T::zero(); m])
    }

    pub fn per_state(&self) -> &[Vec<T>] {
        &self.per_state
    }

    pub fn is_zero(&self) -> bool {
        self.per_state.iter().flatten().all(|&x| x == T::zero())
    }
}

impl<T: Scalar> Strategy<T> for ConstantStrategy<T> {
    fn allocation(&self, _t: T, i: usize) -> &[T] {
        &self.per_state[i]
    }

    fn breakpoints(&self) -> &[T] {
        &[]
    }
}

/// Allocation read off a time grid: on `[t_k, t_k+1)` the value stored at node `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStrategy<T> {
    times: Vec<T>,
    /// `h[k][i]` is the allocation at node `k` in state `i`.
    h: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> GridStrategy<T> {
    /// Needs at least two strictly increasing nodes and one allocation per node.
    pub fn new(times: Vec<T>, h: Vec<Vec<Vec<T>>>) -> Option<Self> {
        if times.len() < 2 || times.len() != h.len() || times.windows(2).any(|w| !(w[0] < w[1])) {
            return None;
        }
        Some(Self { times, h })
    }

    pub fn from_surface(surface: &ValueSurface<T>) -> Self {
        Self { times: surface.time_grid.clone(), h: surface.h_star.clone() }
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    fn cell(&self, t: T) -> usize {
        let k = self.times.partition_point(|&x| x <= t);
        k.saturating_sub(1).min(self.times.len() - 2)
    }
}

impl<T: Scalar> Strategy<T> for GridStrategy<T> {
    fn allocation(&self, t: T, i: usize) -> &[T] {
        &self.h[self.cell(t)][i]
    }

    fn breakpoints(&self) -> &[T] {
        &self.times[1..self.times.len() - 1]
    }
}
