//! Jump-size laws as finite atom lists, and the integral transforms the HJB operator,
//! the fixed-point maps and the Monte Carlo checks are built from.
//!
//! Every integral against a jump density becomes an exact finite sum over atoms.
//! Continuous densities enter only through [`discretize_density`].

use thiserror::Error;

use crate::linalg::Matrix;
use crate::quadrature::gauss_legendre_on;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JumpLawError {
    #[error("jump law has no atoms")]
    Empty,
    #[error("atom {atom}: dimension {got}, expected {expected}")]
    Dimension { atom: usize, expected: usize, got: usize },
    #[error("atom {atom}: probability {p} is not positive")]
    NonPositiveProbability { atom: usize, p: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    ProbabilitySum { sum: f64 },
    #[error("atom {atom}: support below -1 (component {component} = {z})")]
    SupportBelowMinusOne { atom: usize, component: usize, z: f64 },
    #[error("atom {atom}: non-finite jump size")]
    NonFinite { atom: usize },
    #[error("density support must lie in (-1, inf): {0}")]
    Support(String),
    #[error("invalid density parameters: {0}")]
    Parameters(String),
}

/// `1 + h'z <= 0` at some atom: `h` would allow the portfolio to jump to zero or below.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("allocation infeasible at atom {atom}: 1 + h'z = {slack}")]
pub struct Infeasible {
    pub atom: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom<T> {
    pub z: Vec<T>,
    pub p: T,
}

/// Discrete law of the jump size `Z` on one regime transition.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLaw<T> {
    atoms: Vec<Atom<T>>,
    mean: Vec<T>,
    cumulative: Vec<T>,
}

impl<T: Scalar> JumpLaw<T> {
    pub fn new(atoms: Vec<Atom<T>>) -> Result<Self, JumpLawError> {
        let first = atoms.first().ok_or(JumpLawError::Empty)?;
        let m = first.z.len();
        let mut total = T::zero();
        for (k, a) in atoms.iter().enumerate() {
            if a.z.len() != m {
                return Err(JumpLawError::Dimension { atom: k, expected: m, got: a.z.len() });
            }
            if !a.p.is_finite() || a.p <= T::zero() {
                return Err(JumpLawError::NonPositiveProbability { atom: k, p: a.p.as_f64() });
            }
            if a.z.iter().any(|z| !z.is_finite()) {
                return Err(JumpLawError::NonFinite { atom: k });
            }
            if let Some((c, &z)) = a.z.iter().enumerate().find(|(_, &z)| z <= -T::one()) {
                return Err(JumpLawError::SupportBelowMinusOne { atom: k, component: c, z: z.as_f64() });
            }
            total += a.p;
        }
        if (total - T::one()).abs() > T::tol(1e-12, 100.0) {
            return Err(JumpLawError::ProbabilitySum { sum: total.as_f64() });
        }
        let mut mean = vec![T::zero(); m];
        let mut cumulative = Vec::with_capacity(atoms.len());
        let mut acc = T::zero();
        for a in &atoms {
            for (mu, &z) in mean.iter_mut().zip(&a.z) {
                *mu += a.p * z;
            }
            acc += a.p;
            cumulative.push(acc);
        }
        Ok(Self { atoms, mean, cumulative })
    }

    /// A single atom carrying all the mass.
    pub fn point(z: Vec<T>) -> Result<Self, JumpLawError> {
        Self::new(vec![Atom { z, p: T::one() }])
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `xi(i, j) = sum_k p_k z_k`.
    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// Smallest `1 + h'z_k` over the atoms.
    pub fn min_slack(&self, h: &[T]) -> T {
        self.atoms.iter().map(|a| T::one() + dot(h, &a.z)).fold(T::infinity(), T::min)
    }

    fn slack(&self, k: usize, h: &[T]) -> Result<T, Infeasible> {
        let s = T::one() + dot(h, &self.atoms[k].z);
        if s > T::zero() {
            Ok(s)
        } else {
            Err(Infeasible { atom: k, slack: s.as_f64() })
        }
    }

    /// `sum_k p_k (1 + h'z_k)^(-theta)`.
    pub fn power_integral(&self, h: &[T], theta: T) -> Result<T, Infeasible> {
        let mut acc = T::zero();
        for (k, a) in self.atoms.iter().enumerate() {
            acc += a.p * self.slack(k, h)?.powf(-theta);
        }
        Ok(acc)
    }

    /// Gradient of [`Self::power_integral`] in `h`: `-theta sum_k p_k z_k (1 + h'z_k)^(-theta-1)`.
    pub fn power_integral_grad(&self, h: &[T], theta: T) -> Result<Vec<T>, Infeasible> {
        let mut tilted = self.tilted_first_moment(h, theta)?;
        for g in &mut tilted {
            *g = -theta * *g;
        }
        Ok(tilted)
    }

    /// `sum_k p_k z_k (1 + h'z_k)^(-1-theta)`, the jump kernel of the optimality fixed point.
    pub fn tilted_first_moment(&self, h: &[T], theta: T) -> Result<Vec<T>, Infeasible> {
        let mut out = vec![T::zero(); self.dim()];
        for (k, a) in self.atoms.iter().enumerate() {
            let w = a.p * self.slack(k, h)?.powf(-T::one() - theta);
            for (o, &z) in out.iter_mut().zip(&a.z) {
                *o += w * z;
            }
        }
        Ok(out)
    }

    /// Adds `scale * (value, gradient, Hessian)` of the power integral into the accumulators
    /// and returns the unscaled value.
    pub fn accumulate_power(
        &self,
        h: &[T],
        theta: T,
        scale: T,
        grad: &mut [T],
        hess: &mut Matrix<T>,
    ) -> Result<T, Infeasible> {
        let mut value = T::zero();
        let c2 = theta * (theta + T::one());
        for (k, a) in self.atoms.iter().enumerate() {
            let s = self.slack(k, h)?;
            let v = s.powf(-theta);
            value += a.p * v;
            let g = -scale * a.p * theta * v / s;
            let hs = scale * a.p * c2 * v / (s * s);
            for (r, &zr) in a.z.iter().enumerate() {
                grad[r] += g * zr;
                for (c, &zc) in a.z.iter().enumerate() {
                    hess[(r, c)] += hs * zr * zc;
                }
            }
        }
        Ok(value)
    }

    /// Adds `scale * (value, gradient, Hessian)` of `sum_k p_k log(1 + h'z_k)` and returns
    /// the unscaled value.
    pub fn accumulate_log(&self, h: &[T], scale: T, grad: &mut [T], hess: &mut Matrix<T>) -> Result<T, Infeasible> {
        let mut value = T::zero();
        for (k, a) in self.atoms.iter().enumerate() {
            let s = self.slack(k, h)?;
            value += a.p * s.ln();
            let g = scale * a.p / s;
            let hs = -scale * a.p / (s * s);
            for (r, &zr) in a.z.iter().enumerate() {
                grad[r] += g * zr;
                for (c, &zc) in a.z.iter().enumerate() {
                    hess[(r, c)] += hs * zr * zc;
                }
            }
        }
        Ok(value)
    }

    /// `sum_k p_k log(1 + h'z_k)`.
    pub fn log_integral(&self, h: &[T]) -> Result<T, Infeasible> {
        let mut acc = T::zero();
        for (k, a) in self.atoms.iter().enumerate() {
            acc += a.p * self.slack(k, h)?.ln();
        }
        Ok(acc)
    }

    /// `sum_k p_k z_k / (1 + h'z_k)`, the jump kernel of the Kelly fixed point.
    pub fn log_first_moment(&self, h: &[T]) -> Result<Vec<T>, Infeasible> {
        self.tilted_first_moment(h, T::zero())
    }

    /// `sum_k p_k ((1 + h'z_k)^(-theta) - 1)^2`.
    pub fn squared_power_deviation(&self, h: &[T], theta: T) -> Result<T, Infeasible> {
        let mut acc = T::zero();
        for (k, a) in self.atoms.iter().enumerate() {
            let d = self.slack(k, h)?.powf(-theta) - T::one();
            acc += a.p * d * d;
        }
        Ok(acc)
    }

    /// Index of the atom selected by a uniform draw `u` in `[0, 1)`.
    pub fn sample_index(&self, u: T) -> usize {
        let target = u * *self.cumulative.last().expect("non-empty law");
        self.cumulative.partition_point(|&c| c <= target).min(self.atoms.len() - 1)
    }
}

/// Parametric jump-size families, applied independently per asset dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec<T> {
    Uniform {
        lower: Vec<T>,
        upper: Vec<T>,
    },
    /// Normal with the given location and scale, truncated to `[lower, upper]`.
    TruncNormal {
        mean: Vec<T>,
        std: Vec<T>,
        lower: Vec<T>,
        upper: Vec<T>,
    },
    /// Asymmetric double exponential around `loc`, truncated to `[lower, upper]`:
    /// `p_up * rate_up * exp(-rate_up (z - loc))` above `loc`,
    /// `(1 - p_up) * rate_down * exp(rate_down (z - loc))` below.
    TruncDoubleExp {
        loc: Vec<T>,
        p_up: Vec<T>,
        rate_up: Vec<T>,
        rate_down: Vec<T>,
        lower: Vec<T>,
        upper: Vec<T>,
    },
}

impl<T: Scalar> DensitySpec<T> {
    fn bounds(&self) -> (&[T], &[T]) {
        match self {
            Self::Uniform { lower, upper }
            | Self::TruncNormal { lower, upper, .. }
            | Self::TruncDoubleExp { lower, upper, .. } => (lower, upper),
        }
    }

    fn check(&self) -> Result<usize, JumpLawError> {
        let (lower, upper) = self.bounds();
        let m = lower.len();
        if m == 0 {
            return Err(JumpLawError::Parameters("empty bounds".into()));
        }
        let same_len = |v: &[T], name: &str| {
            if v.len() == m {
                Ok(())
            } else {
                Err(JumpLawError::Parameters(format!("{name} has length {}, expected {m}", v.len())))
            }
        };
        same_len(upper, "upper")?;
        for d in 0..m {
            if !(lower[d] > -T::one()) {
                return Err(JumpLawError::Support(format!(
                    "lower bound {} touches or crosses -1 in dimension {d}",
                    lower[d]
                )));
            }
            if !upper[d].is_finite() {
                return Err(JumpLawError::Support(format!("upper bound unbounded in dimension {d}")));
            }
            if !(upper[d] > lower[d]) {
                return Err(JumpLawError::Parameters(format!("empty interval in dimension {d}")));
            }
        }
        match self {
            Self::Uniform { .. } => {}
            Self::TruncNormal { mean, std, .. } => {
                same_len(mean, "mean")?;
                same_len(std, "std")?;
                if std.iter().any(|&s| !(s > T::zero())) || mean.iter().any(|x| !x.is_finite()) {
                    return Err(JumpLawError::Parameters("std must be positive".into()));
                }
            }
            Self::TruncDoubleExp { loc, p_up, rate_up, rate_down, .. } => {
                same_len(loc, "loc")?;
                same_len(p_up, "p_up")?;
                same_len(rate_up, "rate_up")?;
                same_len(rate_down, "rate_down")?;
                if p_up.iter().any(|&p| !(p >= T::zero() && p <= T::one()))
                    || rate_up.iter().chain(rate_down).any(|&r| !(r > T::zero()))
                {
                    return Err(JumpLawError::Parameters("need 0 <= p_up <= 1 and positive rates".into()));
                }
            }
        }
        Ok(m)
    }

    /// Interior point where the marginal density in dimension `d` is not smooth.
    fn kink(&self, d: usize) -> Option<T> {
        match self {
            Self::TruncDoubleExp { loc, lower, upper, .. } if loc[d] > lower[d] && loc[d] < upper[d] => Some(loc[d]),
            _ => None,
        }
    }

    /// Unnormalized marginal density in dimension `d`.
    fn marginal_density(&self, d: usize, x: T) -> T {
        match self {
            Self::Uniform { .. } => T::one(),
            Self::TruncNormal { mean, std, .. } => {
                let u = (x - mean[d]) / std[d];
                (-T::lit(0.5) * u * u).exp()
            }
            Self::TruncDoubleExp { loc, p_up, rate_up, rate_down, .. } => {
                if x >= loc[d] {
                    p_up[d] * rate_up[d] * (-rate_up[d] * (x - loc[d])).exp()
                } else {
                    (T::one() - p_up[d]) * rate_down[d] * (rate_down[d] * (x - loc[d])).exp()
                }
            }
        }
    }
}

/// Discretizes a density onto Gauss–Legendre nodes per dimension (tensor product for `m > 1`),
/// with weights renormalized to sum to one. The double exponential rule is split at `loc`.
pub fn discretize_density<T: Scalar>(spec: &DensitySpec<T>, nodes: usize) -> Result<JumpLaw<T>, JumpLawError> {
    if nodes == 0 {
        return Err(JumpLawError::Parameters("node count must be positive".into()));
    }
    let m = spec.check()?;
    let (lower, upper) = spec.bounds();
    let marginals: Vec<(Vec<T>, Vec<T>)> = (0..m)
        .map(|d| {
            let (x, w) = match spec.kink(d) {
                // split at the kink so each side is smooth
                Some(c) if nodes >= 2 => {
                    let left = nodes.div_ceil(2);
                    let (mut x, mut w) = gauss_legendre_on(left, lower[d], c);
                    let (xr, wr) = gauss_legendre_on(nodes - left, c, upper[d]);
                    x.extend(xr);
                    w.extend(wr);
                    (x, w)
                }
                _ => gauss_legendre_on(nodes, lower[d], upper[d]),
            };
            let w: Vec<T> = x.iter().zip(&w).map(|(&xi, &wi)| wi * spec.marginal_density(d, xi)).collect();
            (x, w)
        })
        .collect();

    let mut atoms = Vec::with_capacity(nodes.pow(m as u32));
    let mut index = vec![0usize; m];
    loop {
        let z: Vec<T> = (0..m).map(|d| marginals[d].0[index[d]]).collect();
        let p = (0..m).fold(T::one(), |acc, d| acc * marginals[d].1[index[d]]);
        if p > T::zero() {
            atoms.push(Atom { z, p });
        }
        let mut d = m;
        loop {
            if d == 0 {
                let total: T = atoms.iter().map(|a| a.p).sum();
                if !(total > T::zero()) {
                    return Err(JumpLawError::Parameters("density has no mass on its support".into()));
                }
                for a in &mut atoms {
                    a.p /= total;
                }
                return JumpLaw::new(atoms);
            }
            d -= 1;
            index[d] += 1;
            if index[d] < nodes {
                break;
            }
            index[d] = 0;
        }
    }
}
