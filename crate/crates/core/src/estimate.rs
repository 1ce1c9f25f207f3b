//! Least-squares estimation of memory coefficients from observed outcomes.
//!
//! The response `y_t = (x_t + 1) / 2` is regressed on `[1, x_{t-1}, ..., x_{t-m}]`
//! (a linear probability model). The constrained variant keeps the fit inside
//! the margin-shrunk hyperdiamond so it can be used directly as [`MemoryParams`].
//!
//! [`MemoryParams`]: crate::model::MemoryParams

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_outcome, hyperdiamond_norm, Outcome, EPS_MARGIN};

/// Step-to-step change below which projected gradient stops.
pub const PG_TOLERANCE: f64 = 1e-10;
pub const PG_MAX_ITERATIONS: usize = 10_000;
const POWER_ITERATIONS: usize = 50;
/// Smallest accepted eigenvalue ratio of `X^T X`.
const CONDITION_FLOOR: f64 = 1e-10;
/// Radius used by the constrained fit. A few ulps inside `1/2 - EPS_MARGIN`
/// so the projected point still validates after rounding.
pub const FIT_RADIUS: f64 = 0.5 - EPS_MARGIN - 8.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    /// Flat moves are discarded.
    #[default]
    Drop,
    Up,
    Down,
}

/// Converts a price series into up (`+1`) / down (`-1`) moves.
pub fn ingest_prices(prices: &[f64], tie: TieRule) -> Result<Vec<Outcome>> {
    if prices.len() < 2 {
        return Err(Error::EmptyResult);
    }
    if let Some(bad) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Domain(format!("price {bad} must be positive")));
    }
    let moves: Vec<Outcome> = prices
        .windows(2)
        .filter_map(|w| {
            if w[1] > w[0] {
                Some(1)
            } else if w[1] < w[0] {
                Some(-1)
            } else {
                match tie {
                    TieRule::Drop => None,
                    TieRule::Up => Some(1),
                    TieRule::Down => Some(-1),
                }
            }
        })
        .collect();
    if moves.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok(moves)
}

/// Chronological outcomes `x_{-l}, ..., x_{-1}` and the model depth to fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    data: Vec<Outcome>,
    m: usize,
}

impl ObservationSet {
    pub fn new(data: Vec<Outcome>, m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::Domain("memory depth must be at least 1".into()));
        }
        for &x in &data {
            check_outcome(x as i64)?;
        }
        Ok(Self { data, m })
    }

    pub fn data(&self) -> &[Outcome] {
        &self.data
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of regression rows, `l - m`.
    pub fn rows(&self) -> usize {
        self.data.len().saturating_sub(self.m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "omega")]
    pub omega_hat: Vec<f64>,
    pub rss: f64,
    pub constrained: bool,
    #[serde(skip)]
    pub iterations: usize,
    /// The unconstrained fit fell outside the hyperdiamond.
    pub projected: bool,
}

/// Design matrix and response. Row `t` targets `data[m + t]` and holds
/// `[1, data[m+t-1], ..., data[t]]`.
pub fn build_regression(obs: &ObservationSet) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let m = obs.m;
    let rows = obs.rows();
    if rows < 1 {
        return Err(Error::InsufficientData { rows, needed: 1 });
    }
    let x = DMatrix::from_fn(rows, m + 1, |t, j| if j == 0 { 1.0 } else { obs.data[m + t - j] as f64 });
    let y = DVector::from_fn(rows, |t, _| (obs.data[m + t] as f64 + 1.0) / 2.0);
    Ok((x, y))
}

fn rss(x: &DMatrix<f64>, y: &DVector<f64>, omega: &DVector<f64>) -> f64 {
    (y - x * omega).norm_squared()
}

fn checked_design(obs: &ObservationSet) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let needed = obs.m + 2;
    if obs.rows() < needed {
        return Err(Error::InsufficientData { rows: obs.rows(), needed });
    }
    let (x, y) = build_regression(obs)?;
    let gram = x.transpose() * &x;
    let eig = gram.symmetric_eigenvalues();
    let largest = eig.max();
    let smallest = eig.min();
    if !(largest > 0.0) || smallest <= CONDITION_FLOOR * largest {
        return Err(Error::SingularDesign);
    }
    Ok((x, y))
}

fn ols_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty).ok_or(Error::SingularDesign)
}

/// Ordinary least squares via Householder QR.
pub fn ols_fit(obs: &ObservationSet) -> Result<FitResult> {
    let (x, y) = checked_design(obs)?;
    let omega = ols_solve(&x, &y)?;
    Ok(FitResult {
        rss: rss(&x, &y, &omega),
        omega_hat: omega.iter().copied().collect(),
        constrained: false,
        iterations: 0,
        projected: false,
    })
}

/// Least squares restricted to `|w0 - 1/2| + sum |wi| <= 1/2 - EPS_MARGIN`.
///
/// Returns the OLS solution untouched when it is already feasible; otherwise runs
/// projected gradient from the projection of the OLS point with step `1/L`.
pub fn constrained_fit(obs: &ObservationSet) -> Result<FitResult> {
    let (x, y) = checked_design(obs)?;
    let ols = ols_solve(&x, &y)?;
    if hyperdiamond_norm(ols.as_slice()) <= FIT_RADIUS {
        return Ok(FitResult {
            rss: rss(&x, &y, &ols),
            omega_hat: ols.iter().copied().collect(),
            constrained: true,
            iterations: 0,
            projected: false,
        });
    }

    let scale = 2.0 / x.nrows() as f64;
    let hessian = (x.transpose() * &x) * scale;
    let linear = (x.transpose() * &y) * scale;
    let lipschitz = largest_eigenvalue(&hessian);
    let step = 1.0 / lipschitz;

    let mut omega = DVector::from_vec(project_hyperdiamond(ols.as_slice(), FIT_RADIUS));
    for iteration in 1..=PG_MAX_ITERATIONS {
        let grad = &hessian * &omega - &linear;
        let trial = &omega - grad * step;
        let next = DVector::from_vec(project_hyperdiamond(trial.as_slice(), FIT_RADIUS));
        let change = (&next - &omega).norm();
        omega = next;
        if change < PG_TOLERANCE {
            return Ok(FitResult {
                rss: rss(&x, &y, &omega),
                omega_hat: omega.iter().copied().collect(),
                constrained: true,
                iterations: iteration,
                projected: true,
            });
        }
    }
    Err(Error::NonConvergence { iterations: PG_MAX_ITERATIONS, last: omega.iter().copied().collect() })
}

/// Power iteration for the dominant eigenvalue of a symmetric PSD matrix.
fn largest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    lambda.max((a * &v).norm())
}

/// Euclidean projection onto `{w : |w0 - 1/2| + sum_{i>=1} |wi| <= radius}`.
pub fn project_hyperdiamond(omega: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius > 0.0, "radius must be positive");
    let mut shifted = omega.to_vec();
    if let Some(w0) = shifted.first_mut() {
        *w0 -= 0.5;
    }
    let mut out = project_l1_ball(&shifted, radius);
    if let Some(w0) = out.first_mut() {
        *w0 += 0.5;
    }
    out
}

/// Sort-based projection onto the l1 ball of the given radius.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in mags.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if u > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}
