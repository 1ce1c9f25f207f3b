//! The history-cognizant coin and its probability dynamics.
//!
//! A coin of memory depth `m` lands heads on flip `k` with probability
//! `w0 + w1 x[k-1] + ... + wm x[k-m]`, where outcomes are `+1` (heads) or
//! `-1` (tails). Taking expectations turns this into a linear recurrence for
//! the unconditional head probabilities `p_k`, which drives everything else.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Interior margin applied to the hyperdiamond so that validity is testable
/// in floating point.
pub const EPS_MARGIN: f64 = 1e-9;

/// Largest horizon accepted by the path enumeration oracle.
pub const MAX_ENUMERATION_HORIZON: usize = 20;

/// One flip outcome: `+1` for heads, `-1` for tails.
pub type Outcome = i8;

pub(crate) fn check_outcome(x: i64) -> Result<Outcome> {
    match x {
        1 => Ok(1),
        -1 => Ok(-1),
        other => Err(Error::InvalidOutcome(other)),
    }
}

/// `|w0 - 1/2| + sum |wi|`, the l1 distance from the fair memoryless coin.
pub fn hyperdiamond_norm(omega: &[f64]) -> f64 {
    match omega.split_first() {
        Some((w0, rest)) => (w0 - 0.5).abs() + rest.iter().map(|w| w.abs()).sum::<f64>(),
        None => 0.0,
    }
}

/// Memory coefficients `(w0, w1, ..., wm)` inside the hyperdiamond.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryParams {
    omega: Vec<f64>,
}

impl MemoryParams {
    /// Validates `omega` (length `m + 1`) against depth `m`.
    pub fn new(omega: Vec<f64>, m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::Domain("memory depth must be at least 1".into()));
        }
        if omega.len() != m + 1 {
            return Err(Error::DimensionMismatch { expected: m + 1, found: omega.len() });
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain("coefficients must be finite".into()));
        }
        let excess = hyperdiamond_norm(&omega) - (0.5 - EPS_MARGIN);
        if excess > 0.0 {
            return Err(Error::HyperdiamondViolation { excess });
        }
        Ok(Self { omega })
    }

    /// Infers `m` from the vector length.
    pub fn from_omega(omega: Vec<f64>) -> Result<Self> {
        let m = omega.len().saturating_sub(1);
        Self::new(omega, m)
    }

    pub fn m(&self) -> usize {
        self.omega.len() - 1
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn omega0(&self) -> f64 {
        self.omega[0]
    }

    /// The lag coefficients `(w1, ..., wm)`.
    pub fn lags(&self) -> &[f64] {
        &self.omega[1..]
    }

    fn lag_sum(&self) -> f64 {
        self.lags().iter().sum()
    }

    /// Remaining room to the (margin-shrunk) hyperdiamond boundary.
    pub fn margin(&self) -> f64 {
        0.5 - hyperdiamond_norm(&self.omega)
    }

    pub fn is_memoryless(&self) -> bool {
        self.lags().iter().all(|&w| w == 0.0)
    }
}

/// The `m` outcomes observed before the first bet, most recent first:
/// `values[0]` is `x[-1]`, `values[m-1]` is `x[-m]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    values: Vec<Outcome>,
}

impl History {
    pub fn new(values: Vec<Outcome>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("history must contain at least one outcome".into()));
        }
        for &x in &values {
            check_outcome(x as i64)?;
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[Outcome] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Induced initial probabilities `p[-i] = (x[-i] + 1) / 2`, most recent first.
    pub fn induced_probs(&self) -> Vec<f64> {
        self.values.iter().map(|&x| (x as f64 + 1.0) / 2.0).collect()
    }
}

/// A complete betting problem: coin, prior outcomes and number of bets.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub params: MemoryParams,
    pub history: History,
    pub n: usize,
}

impl GameSpec {
    pub fn new(params: MemoryParams, history: History, n: usize) -> Result<Self> {
        if history.len() != params.m() {
            return Err(Error::DimensionMismatch { expected: params.m(), found: history.len() });
        }
        if n < 1 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        Ok(Self { params, history, n })
    }

    /// Same coin and history, different horizon.
    pub fn with_horizon(&self, n: usize) -> Result<Self> {
        Self::new(self.params.clone(), self.history.clone(), n)
    }
}

/// Conditional head probability given the last `m` outcomes, most recent first.
pub fn cond_prob(params: &MemoryParams, window: &[Outcome]) -> Result<f64> {
    if window.len() != params.m() {
        return Err(Error::DimensionMismatch { expected: params.m(), found: window.len() });
    }
    let mut p = params.omega0();
    for (&w, &x) in params.lags().iter().zip(window) {
        check_outcome(x as i64)?;
        p += w * x as f64;
    }
    Ok(p)
}

/// Unconditional head probabilities `[p_0, ..., p_{n-1}]`.
pub fn prob_sequence(spec: &GameSpec) -> Vec<f64> {
    let params = &spec.params;
    let m = params.m();
    let drift = params.omega0() - params.lag_sum();

    // Chronological buffer: [p_{-m}, ..., p_{-1}, p_0, ...].
    let mut buf: Vec<f64> = spec.history.induced_probs().into_iter().rev().collect();
    buf.reserve(spec.n);
    for k in 0..spec.n {
        let now = m + k;
        let mut p = drift;
        for (i, &w) in params.lags().iter().enumerate() {
            p += 2.0 * w * buf[now - 1 - i];
        }
        buf.push(p);
    }
    buf.split_off(m)
}

/// `p_k = (2 w1)^k p_0 + (1 - (2 w1)^k) p_inf` for depth-1 coins.
pub fn closed_form_p_k(params: &MemoryParams, p0: f64, k: usize) -> Result<f64> {
    if params.m() != 1 {
        return Err(Error::UnsupportedDepth { m: params.m() });
    }
    let decay = powu(2.0 * params.lags()[0], k);
    Ok(decay * p0 + (1.0 - decay) * steady_state(params))
}

/// Long-run head probability `(w0 - sum wi) / (1 - 2 sum wi)`.
pub fn steady_state(params: &MemoryParams) -> f64 {
    let s = params.lag_sum();
    (params.omega0() - s) / (1.0 - 2.0 * s)
}

/// Weight of `p_0` in the horizon-averaged head probability (depth 1 only).
pub fn lambda_n(params: &MemoryParams, n: usize) -> Result<f64> {
    if params.m() != 1 {
        return Err(Error::UnsupportedDepth { m: params.m() });
    }
    if n < 1 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let r = 2.0 * params.lags()[0];
    Ok((1.0 - powu(r, n)) / (1.0 - r) / n as f64)
}

/// `E(H_n)`, the expected number of heads over the horizon.
pub fn expected_heads(spec: &GameSpec) -> f64 {
    prob_sequence(spec).iter().sum()
}

fn powu(base: f64, exp: usize) -> f64 {
    base.powi(i32::try_from(exp).unwrap_or(i32::MAX))
}

/// Companion-form realization `v' = A v + b`, `p = c v` of the `p_k` recursion.
///
/// The state `v_j` holds `[p_{j-m-1}, ..., p_{j-1}]`, so `v0` carries the
/// induced initial conditions and `c v_{k+1} = p_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub v0: DVector<f64>,
}

pub fn state_space(params: &MemoryParams, history: &History) -> Result<StateSpace> {
    let m = params.m();
    if history.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: history.len() });
    }
    let mut a = DMatrix::zeros(m, m);
    for r in 0..m - 1 {
        a[(r, r + 1)] = 1.0;
    }
    for (j, &w) in params.lags().iter().rev().enumerate() {
        a[(m - 1, j)] = 2.0 * w;
    }
    let mut b = DVector::zeros(m);
    b[m - 1] = params.omega0() - params.lag_sum();
    let mut c = DVector::zeros(m);
    c[m - 1] = 1.0;
    let v0 = DVector::from_iterator(m, history.induced_probs().into_iter().rev());
    Ok(StateSpace { a, b, c, v0 })
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `det(I - A)`, equal to `1 - 2 sum wi`.
    pub fn det_i_minus_a(&self) -> f64 {
        (DMatrix::identity(self.dim(), self.dim()) - &self.a).determinant()
    }

    /// `(I - A)^{-1} b` by LU with partial pivoting: the fixed point of the state update.
    pub fn fixed_point(&self) -> Result<DVector<f64>> {
        let i_minus_a = DMatrix::identity(self.dim(), self.dim()) - &self.a;
        i_minus_a.lu().solve(&self.b).ok_or(Error::SingularDesign)
    }

    /// `c (I - A)^{-1} b`, the DC gain of the realization.
    pub fn steady_state(&self) -> Result<f64> {
        Ok(self.c.dot(&self.fixed_point()?))
    }

    /// `A^j` by repeated squaring.
    pub fn a_pow(&self, mut j: usize) -> DMatrix<f64> {
        let mut result = DMatrix::identity(self.dim(), self.dim());
        let mut base = self.a.clone();
        while j > 0 {
            if j & 1 == 1 {
                result = &result * &base;
            }
            base = &base * &base;
            j >>= 1;
        }
        result
    }

    /// `v_j = A^j v0 + (I - A)^{-1} (I - A^j) b`.
    pub fn state_at(&self, j: usize) -> Result<DVector<f64>> {
        let aj = self.a_pow(j);
        let fixed = self.fixed_point()?;
        Ok(&aj * &self.v0 + &fixed - &aj * &fixed)
    }

    /// `p_k` read out of `v_{k+1}`.
    pub fn prob_at(&self, k: usize) -> Result<f64> {
        Ok(self.c.dot(&self.state_at(k + 1)?))
    }
}

/// Brute-force references computed by walking every sample path.
pub mod oracle {
    use super::*;

    /// Calls `visit(path, probability)` for each of the `2^n` paths.
    fn for_each_path(spec: &GameSpec, mut visit: impl FnMut(&[Outcome], f64)) -> Result<()> {
        let n = spec.n;
        if n > MAX_ENUMERATION_HORIZON {
            return Err(Error::HorizonTooLarge { n, max: MAX_ENUMERATION_HORIZON });
        }
        let m = spec.params.m();
        let mut path = vec![0 as Outcome; n];
        // Chronological outcomes including the history prefix.
        let mut full: Vec<Outcome> = spec.history.values().iter().rev().copied().collect();
        full.resize(m + n, 0);
        let mut window = vec![0 as Outcome; m];
        for mask in 0u64..(1u64 << n) {
            let mut prob = 1.0;
            for k in 0..n {
                for (i, w) in window.iter_mut().enumerate() {
                    *w = full[m + k - 1 - i];
                }
                let head = cond_prob(&spec.params, &window)?;
                let x: Outcome = if mask >> k & 1 == 1 { 1 } else { -1 };
                prob *= if x == 1 { head } else { 1.0 - head };
                full[m + k] = x;
                path[k] = x;
            }
            visit(&path, prob);
        }
        Ok(())
    }

    /// `sum_X P(X) H_n(X)`.
    pub fn enumerate_expected_heads(spec: &GameSpec) -> Result<f64> {
        let mut total = 0.0;
        for_each_path(spec, |path, prob| {
            let heads = path.iter().filter(|&&x| x == 1).count();
            total += prob * heads as f64;
        })?;
        Ok(total)
    }

    /// `(1/n) sum_X P(X) sum_k ln(1 + K_k X_k)` for a per-stage fraction vector.
    pub fn enumerate_elg(spec: &GameSpec, fractions: &[f64]) -> Result<f64> {
        if fractions.len() != spec.n {
            return Err(Error::DimensionMismatch { expected: spec.n, found: fractions.len() });
        }
        let mut total = 0.0;
        for_each_path(spec, |path, prob| {
            let growth: f64 =
                path.iter().zip(fractions).map(|(&x, &k)| (1.0 + k * x as f64).ln()).sum();
            total += prob * growth;
        })?;
        Ok(total / spec.n as f64)
    }

    /// Sum of path probabilities; should be one.
    pub fn total_probability(spec: &GameSpec) -> Result<f64> {
        let mut total = 0.0;
        for_each_path(spec, |_, prob| total += prob)?;
        Ok(total)
    }
}
