//! Optimal betting fractions and analytic expected log growth (ELG).
//!
//! All logarithms are natural; ELG is reported in nats per bet.

use crate::error::{Error, Result};
use crate::model::{self, GameSpec, MemoryParams};

/// Convergence tolerance in `K` for the one-dimensional maximizers.
pub const K_TOLERANCE: f64 = 1e-10;
/// Iteration cap for the one-dimensional maximizers.
pub const MAX_ITERATIONS: usize = 200;
/// Stand-in for an unbounded end of the feasible fraction interval.
pub const UNBOUNDED_FRACTION: f64 = 1e6;
/// Inward shrink of the feasible interval before searching.
pub const FEASIBLE_SHRINK: f64 = 1e-12;

fn check_fraction(k: f64) -> Result<f64> {
    if k.is_finite() && k.abs() < 1.0 {
        Ok(k)
    } else {
        Err(Error::Domain(format!("betting fraction {k} must lie in (-1, 1)")))
    }
}

/// How much of the bankroll to stake at each bet. Negative fractions bet on tails.
#[derive(Debug, Clone, PartialEq)]
pub enum BettorPolicy {
    /// The same fraction for every bet.
    TimeInvariant(f64),
    /// One fraction per stage, fixed before play starts.
    TimeVarying(Vec<f64>),
}

impl BettorPolicy {
    pub fn time_invariant(k: f64) -> Result<Self> {
        Ok(Self::TimeInvariant(check_fraction(k)?))
    }

    pub fn time_varying(fractions: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::Domain("time-varying policy needs at least one fraction".into()));
        }
        for &k in &fractions {
            check_fraction(k)?;
        }
        Ok(Self::TimeVarying(fractions))
    }

    /// Fraction used at stage `k`.
    pub fn fraction_at(&self, k: usize) -> f64 {
        match self {
            Self::TimeInvariant(f) => *f,
            Self::TimeVarying(v) => v[k],
        }
    }

    /// Errors unless the policy can drive a game of `n` bets.
    pub fn check_horizon(&self, n: usize) -> Result<()> {
        match self {
            Self::TimeInvariant(_) => Ok(()),
            Self::TimeVarying(v) if v.len() == n => Ok(()),
            Self::TimeVarying(v) => Err(Error::DimensionMismatch { expected: n, found: v.len() }),
        }
    }

    /// The fractions expanded to `n` stages.
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        self.check_horizon(n)?;
        Ok((0..n).map(|k| self.fraction_at(k)).collect())
    }
}

/// Classical memoryless Kelly fraction `2p - 1`.
pub fn kelly_classical(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(2.0 * p - 1.0)
    } else {
        Err(Error::Domain(format!("probability {p} must lie in (0, 1)")))
    }
}

/// Best constant fraction for this horizon: `2 E(H_n)/n - 1`.
pub fn kelly_horizon(spec: &GameSpec) -> f64 {
    2.0 * model::expected_heads(spec) / spec.n as f64 - 1.0
}

/// Limit of [`kelly_horizon`] as the horizon grows: `2 p_inf - 1`.
pub fn kelly_limit(params: &MemoryParams) -> f64 {
    2.0 * model::steady_state(params) - 1.0
}

/// Per-stage fractions `2 p_k - 1` from the unconditional probabilities.
pub fn kelly_timevarying(spec: &GameSpec) -> BettorPolicy {
    BettorPolicy::TimeVarying(model::prob_sequence(spec).iter().map(|p| 2.0 * p - 1.0).collect())
}

/// Even-money ELG of a single bet won with probability `p`.
fn even_money_elg(p: f64, k: f64) -> f64 {
    p * k.ln_1p() + (1.0 - p) * (-k).ln_1p()
}

/// `h ln(1 + K) + (1 - h) ln(1 - K)` with `h = E(H_n)/n`.
pub fn elg_time_invariant(spec: &GameSpec, k: f64) -> Result<f64> {
    let k = check_fraction(k)?;
    let h = model::expected_heads(spec) / spec.n as f64;
    Ok(even_money_elg(h, k))
}

/// `(1/n) sum_k [p_k ln(1 + K_k) + (1 - p_k) ln(1 - K_k)]`.
pub fn elg_time_varying(spec: &GameSpec, fractions: &[f64]) -> Result<f64> {
    if fractions.len() != spec.n {
        return Err(Error::DimensionMismatch { expected: spec.n, found: fractions.len() });
    }
    for &k in fractions {
        check_fraction(k)?;
    }
    let probs = model::prob_sequence(spec);
    let total: f64 = probs.iter().zip(fractions).map(|(&p, &k)| even_money_elg(p, k)).sum();
    Ok(total / spec.n as f64)
}

/// Analytic ELG of any policy.
pub fn elg(spec: &GameSpec, policy: &BettorPolicy) -> Result<f64> {
    match policy {
        BettorPolicy::TimeInvariant(k) => elg_time_invariant(spec, *k),
        BettorPolicy::TimeVarying(v) => elg_time_varying(spec, v),
    }
}

/// Payoff distribution for the multiple-outcome generalization.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffModel {
    outcomes: Vec<f64>,
    frequencies: Vec<f64>,
}

impl PayoffModel {
    /// `outcomes` are per-unit payoffs (at least -1, which loses the stake);
    /// `frequencies` are the expected relative occurrence counts `E(H_{n,i})/n`.
    pub fn new(outcomes: Vec<f64>, frequencies: Vec<f64>) -> Result<Self> {
        if outcomes.len() != frequencies.len() {
            return Err(Error::DimensionMismatch { expected: outcomes.len(), found: frequencies.len() });
        }
        if outcomes.len() < 2 {
            return Err(Error::Domain("payoff model needs at least two outcomes".into()));
        }
        if outcomes.iter().any(|&x| !x.is_finite() || x < -1.0) {
            return Err(Error::Domain("every outcome must be finite and at least -1".into()));
        }
        if frequencies.iter().any(|&f| !f.is_finite() || f < 0.0) {
            return Err(Error::Domain("frequencies must be non-negative".into()));
        }
        let total: f64 = frequencies.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("frequencies sum to {total}, not 1")));
        }
        Ok(Self { outcomes, frequencies })
    }

    /// Win `+1` with frequency `h`, lose `-1` otherwise.
    pub fn even_money(h: f64) -> Result<Self> {
        Self::new(vec![1.0, -1.0], vec![h, 1.0 - h])
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    fn active(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.outcomes.iter().copied().zip(self.frequencies.iter().copied()).filter(|&(_, f)| f > 0.0)
    }

    /// Open interval of fractions keeping every active `1 + K x_i` positive,
    /// with `UNBOUNDED_FRACTION` standing in for missing bounds.
    pub fn feasible_interval(&self) -> (f64, f64) {
        let mut lo = -UNBOUNDED_FRACTION;
        let mut hi = UNBOUNDED_FRACTION;
        for (x, _) in self.active() {
            if x > 0.0 {
                lo = lo.max(-1.0 / x);
            } else if x < 0.0 {
                hi = hi.min(-1.0 / x);
            }
        }
        (lo, hi)
    }

    fn slope(&self, k: f64) -> f64 {
        self.active().map(|(x, f)| f * x / (1.0 + k * x)).sum()
    }
}

/// `sum_i f_i ln(1 + K x_i)`.
pub fn elg_multioutcome(model: &PayoffModel, k: f64) -> Result<f64> {
    let mut total = 0.0;
    for (x, f) in model.active() {
        let growth = 1.0 + k * x;
        if !(growth > 0.0) {
            return Err(Error::Domain(format!("1 + K x = {growth} is not positive at K = {k}")));
        }
        total += f * growth.ln();
    }
    Ok(total)
}

/// Maximizer of the multiple-outcome ELG.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiOutcomeOptimum {
    pub fraction: f64,
    pub elg: f64,
    /// The objective keeps increasing toward an unbounded end of the feasible
    /// interval; `fraction` is truncated at `UNBOUNDED_FRACTION`.
    pub unbounded: bool,
}

/// Maximizes the concave multiple-outcome ELG by bisection on its strictly
/// decreasing derivative, falling back to golden-section search if the
/// derivative misbehaves numerically.
pub fn optimize_multioutcome(model: &PayoffModel) -> Result<MultiOutcomeOptimum> {
    let (lo, hi) = model.feasible_interval();
    let lo_open = lo <= -UNBOUNDED_FRACTION;
    let hi_open = hi >= UNBOUNDED_FRACTION;
    let lo = lo + FEASIBLE_SHRINK;
    let hi = hi - FEASIBLE_SHRINK;

    if model.active().all(|(x, _)| x == 0.0) {
        return Ok(MultiOutcomeOptimum { fraction: 0.0, elg: 0.0, unbounded: false });
    }

    let (fraction, unbounded) = if model.slope(hi) >= 0.0 {
        (hi, hi_open)
    } else if model.slope(lo) <= 0.0 {
        (lo, lo_open)
    } else {
        match bisect_decreasing(|k| model.slope(k), lo, hi) {
            Some(k) => (k, false),
            None => {
                let objective = |k: f64| elg_multioutcome(model, k).unwrap_or(f64::NEG_INFINITY);
                (golden_section_max(objective, lo, hi), false)
            }
        }
    };
    Ok(MultiOutcomeOptimum { fraction, elg: elg_multioutcome(model, fraction)?, unbounded })
}

/// Root of a strictly decreasing function with `f(lo) > 0 > f(hi)`.
/// `None` if the derivative is not finite somewhere along the way.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let value = f(mid);
        if !value.is_finite() {
            return None;
        }
        if value > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= K_TOLERANCE {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..MAX_ITERATIONS {
        if hi - lo <= K_TOLERANCE {
            break;
        }
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{History, MemoryParams};
    use proptest::prelude::*;

    fn spec(omega: &[f64], n: usize) -> GameSpec {
        GameSpec::new(
            MemoryParams::from_omega(omega.to_vec()).unwrap(),
            History::new(vec![1; omega.len() - 1]).unwrap(),
            n,
        )
        .unwrap()
    }

    #[test]
    fn classical_examples() {
        assert!((kelly_classical(0.35 / 0.6).unwrap() - 0.16667).abs() < 1e-5);
        assert_eq!(kelly_classical(0.5).unwrap(), 0.0);
        assert!((kelly_classical(0.02 / 0.34).unwrap() + 0.88235).abs() < 1e-5);
        assert!(kelly_classical(0.0).is_err());
        assert!(kelly_classical(1.0).is_err());
    }

    #[test]
    fn horizon_examples() {
        assert!((kelly_horizon(&spec(&[0.55, 0.20], 2)) - 0.4).abs() < 1e-12);
        assert!((kelly_horizon(&spec(&[0.55, -0.20], 2)) + 0.04).abs() < 1e-12);
        for n in 1..20 {
            assert!((kelly_horizon(&spec(&[0.62, 0.0], n)) - kelly_classical(0.62).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_examples() {
        let p = |w: &[f64]| MemoryParams::from_omega(w.to_vec()).unwrap();
        assert!((kelly_limit(&p(&[0.55, 0.20])) - 0.16667).abs() < 1e-5);
        assert!((kelly_limit(&p(&[0.55, -0.20])) - 0.07143).abs() < 1e-5);
        assert!((kelly_limit(&p(&[0.35, 0.33])) + 0.88235).abs() < 1e-5);
        let s = spec(&[0.55, 0.20], 1);
        let far = kelly_horizon(&s.with_horizon(1_000_000).unwrap());
        assert!((far - kelly_limit(&s.params)).abs() < 1e-6);
    }

    #[test]
    fn timevarying_examples() {
        let v = kelly_timevarying(&spec(&[0.55, 0.20], 2)).expand(2).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-12 && (v[1] - 0.3).abs() < 1e-12);
        let v = kelly_timevarying(&spec(&[0.55, -0.20], 2)).expand(2).unwrap();
        assert!((v[0] + 0.3).abs() < 1e-12 && (v[1] - 0.22).abs() < 1e-12);
        let v = kelly_timevarying(&spec(&[0.7, 0.0], 4)).expand(4).unwrap();
        assert!(v.iter().all(|k| (k - 0.4).abs() < 1e-12));
    }

    #[test]
    fn elg_examples() {
        let s = spec(&[0.55, 0.20], 2);
        assert!((elg_time_invariant(&s, 1.0 / 6.0).unwrap() - 0.053).abs() < 5e-4);
        assert!((elg_time_invariant(&s, 0.4).unwrap() - 0.082).abs() < 5e-4);
        assert_eq!(elg_time_invariant(&s, 0.0).unwrap(), 0.0);
        assert!((elg_time_varying(&s, &[0.5, 0.3]).unwrap() - 0.088).abs() < 5e-4);
        assert!((elg_time_varying(&s, &[0.4, 0.4]).unwrap() - 0.082).abs() < 5e-4);
        assert!(elg_time_invariant(&s, 1.0).is_err());
        assert!(elg_time_invariant(&s, -1.0).is_err());
        assert!(matches!(
            elg_time_varying(&s, &[0.1]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
        assert!(elg_time_varying(&s, &[0.1, 1.2]).is_err());
    }

    #[test]
    fn policy_construction() {
        assert!(BettorPolicy::time_invariant(1.0).is_err());
        assert!(BettorPolicy::time_varying(vec![]).is_err());
        assert!(BettorPolicy::time_varying(vec![0.2, -0.999]).is_ok());
        let p = BettorPolicy::time_varying(vec![0.1, 0.2]).unwrap();
        assert!(p.check_horizon(3).is_err());
        assert_eq!(BettorPolicy::TimeInvariant(0.3).expand(3).unwrap(), vec![0.3; 3]);
    }

    #[test]
    fn multioutcome_examples() {
        let even = PayoffModel::even_money(0.7).unwrap();
        let s = spec(&[0.55, 0.20], 2);
        assert!((elg_multioutcome(&even, 0.4).unwrap() - elg_time_invariant(&s, 0.4).unwrap()).abs() < 1e-15);
        let oracle = 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln();
        assert!((elg_multioutcome(&even, 0.4).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 0.0823).abs() < 1e-4);
        assert_eq!(elg_multioutcome(&even, 0.0).unwrap(), 0.0);
        assert!(elg_multioutcome(&even, 1.0).is_err());
        // Zero-frequency outcomes never restrict the domain.
        let m = PayoffModel::new(vec![1.0, -1.0], vec![1.0, 0.0]).unwrap();
        assert!(elg_multioutcome(&m, 5.0).is_ok());
    }

    #[test]
    fn payoff_validation() {
        assert!(PayoffModel::new(vec![1.0], vec![1.0]).is_err());
        assert!(PayoffModel::new(vec![1.0, -1.0], vec![0.5, 0.6]).is_err());
        assert!(PayoffModel::new(vec![1.0, -1.5], vec![0.5, 0.5]).is_err());
        assert!(PayoffModel::new(vec![1.0, -1.0], vec![1.2, -0.2]).is_err());
        assert!(PayoffModel::new(vec![1.0, -1.0, 0.5], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn optimize_examples() {
        let opt = optimize_multioutcome(&PayoffModel::even_money(0.7).unwrap()).unwrap();
        assert!((opt.fraction - 0.4).abs() < 1e-10);
        let opt = optimize_multioutcome(&PayoffModel::even_money(0.5).unwrap()).unwrap();
        assert!(opt.fraction.abs() < 1e-10);
        let opt = optimize_multioutcome(&PayoffModel::new(vec![2.0, -1.0], vec![0.5, 0.5]).unwrap()).unwrap();
        assert!((opt.fraction - 0.25).abs() < 1e-10);
        assert!(!opt.unbounded);
    }

    #[test]
    fn optimize_one_sided() {
        let m = PayoffModel::new(vec![0.5, 1.0], vec![0.4, 0.6]).unwrap();
        let opt = optimize_multioutcome(&m).unwrap();
        assert!(opt.unbounded);
        assert!((opt.fraction - (UNBOUNDED_FRACTION - FEASIBLE_SHRINK)).abs() < 1e-3);
        // All losses: best is to short up to the point of ruin on the worst outcome.
        let m = PayoffModel::new(vec![-0.5, -0.25], vec![0.5, 0.5]).unwrap();
        let opt = optimize_multioutcome(&m).unwrap();
        assert!(opt.unbounded);
        assert!(opt.fraction < -1e5);
        let flat = PayoffModel::new(vec![0.0, 3.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(optimize_multioutcome(&flat).unwrap().fraction, 0.0);
    }

    #[test]
    fn optimize_bounded_by_ruin() {
        // Heavy edge with a single unit loss: optimum strictly inside (-1/3, 1).
        let m = PayoffModel::new(vec![3.0, -1.0], vec![0.9, 0.1]).unwrap();
        let opt = optimize_multioutcome(&m).unwrap();
        // Stationarity: 0.9*3/(1+3K) = 0.1/(1-K) gives K = 2.6/3.
        assert!((opt.fraction - 2.6 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn golden_section_finds_peak() {
        let k = golden_section_max(|k| -(k - 0.3) * (k - 0.3), -1.0, 1.0);
        assert!((k - 0.3).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn horizon_fraction_is_optimal(
            w0 in 0.2f64..0.8, w1 in -0.29f64..0.29, h in prop::bool::ANY, n in 1usize..60,
            probes in prop::collection::vec(-0.999f64..0.999, 1000)
        ) {
            prop_assume!((w0 - 0.5).abs() + w1.abs() < 0.499);
            let s = GameSpec::new(
                MemoryParams::new(vec![w0, w1], 1).unwrap(),
                History::new(vec![if h { 1 } else { -1 }]).unwrap(), n).unwrap();
            let kn = kelly_horizon(&s);
            let best = elg_time_invariant(&s, kn).unwrap();
            for k in probes {
                prop_assert!(elg_time_invariant(&s, k).unwrap() <= best + 1e-15);
            }
            let step = 1e-6;
            let slope = (elg_time_invariant(&s, kn + step).unwrap()
                - elg_time_invariant(&s, kn - step).unwrap()) / (2.0 * step);
            prop_assert!(slope.abs() < 1e-6);
            let heads = crate::model::expected_heads(&s) / n as f64;
            prop_assert_eq!(kn > 0.0, heads > 0.5);
        }

        #[test]
        fn timevarying_is_coordinatewise_optimal(
            w0 in 0.2f64..0.8, w1 in -0.29f64..0.29, n in 1usize..20,
            stage in 0usize..20, delta in -0.05f64..0.05
        ) {
            prop_assume!((w0 - 0.5).abs() + w1.abs() < 0.499);
            let s = spec(&[w0, w1], n);
            let best = kelly_timevarying(&s).expand(n).unwrap();
            let top = elg_time_varying(&s, &best).unwrap();
            let mut probe = best.clone();
            let i = stage % n;
            probe[i] = (probe[i] + delta).clamp(-0.999, 0.999);
            prop_assert!(elg_time_varying(&s, &probe).unwrap() <= top + 1e-15);
            let mean = best.iter().sum::<f64>() / n as f64;
            prop_assert!((mean - kelly_horizon(&s)).abs() < 1e-12);
        }

        #[test]
        fn constant_vector_matches_time_invariant(k in -0.99f64..0.99, n in 1usize..30) {
            let s = spec(&[0.55, -0.2], n);
            let a = elg_time_invariant(&s, k).unwrap();
            let b = elg_time_varying(&s, &vec![k; n]).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn multioutcome_optimizer_beats_perturbations(
            raw in prop::collection::vec((-0.9f64..3.0, 0.01f64..1.0), 2..6),
            delta in -0.1f64..0.1
        ) {
            let total: f64 = raw.iter().map(|r| r.1).sum();
            let outcomes: Vec<f64> = raw.iter().map(|r| r.0).collect();
            prop_assume!(outcomes.iter().any(|&x| x > 0.0) && outcomes.iter().any(|&x| x < 0.0));
            let freqs: Vec<f64> = raw.iter().map(|r| r.1 / total).collect();
            let sum: f64 = freqs.iter().sum();
            let mut freqs = freqs;
            freqs[0] += 1.0 - sum;
            let m = PayoffModel::new(outcomes, freqs).unwrap();
            let opt = optimize_multioutcome(&m).unwrap();
            prop_assert!(!opt.unbounded);
            let (lo, hi) = m.feasible_interval();
            let probe = opt.fraction + delta;
            if probe > lo && probe < hi {
                prop_assert!(elg_multioutcome(&m, probe).unwrap() <= opt.elg + 1e-12);
            }
        }
    }
}
