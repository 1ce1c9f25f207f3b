//! Seeded Monte Carlo simulation of bettors playing the history-cognizant coin.
//!
//! Every sample path draws from its own ChaCha8 stream: the generator is keyed
//! by `seed` (expanded with `SeedableRng::seed_from_u64`) and the stream number
//! is the path index. Paths are processed in fixed-size chunks and statistics
//! are merged with a fixed pairwise tree, so results are bit-identical for any
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GameSpec, MemoryParams, History, Outcome};
use crate::policy::{self, BettorPolicy};

/// Default number of Monte Carlo paths.
pub const DEFAULT_PATHS: usize = 100_000;
/// Default largest horizon in a scenario table.
pub const DEFAULT_N_MAX: usize = 30;
/// Above this many paths, quantiles come from a reservoir sample.
pub const EXACT_QUANTILE_LIMIT: usize = 1_000_000;
pub const RESERVOIR_SIZE: usize = 100_000;
const CHUNK: usize = 1 << 14;
/// Stream reserved for reservoir sampling; path indices never reach it.
const RESERVOIR_STREAM: u64 = u64::MAX;

/// Identifies the random stream of one sample path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStream {
    pub seed: u64,
    pub index: u64,
}

impl PathStream {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

/// Draws `n` outcomes sequentially, each with head probability given by the
/// rolling window of previous outcomes.
pub fn sample_path(spec: &GameSpec, stream: PathStream) -> Vec<Outcome> {
    let mut rng = stream.rng();
    sample_with(&spec.params, &spec.history, spec.n, &mut rng)
}

fn sample_with(params: &MemoryParams, history: &History, n: usize, rng: &mut impl Rng) -> Vec<Outcome> {
    let m = params.m();
    let lags = params.lags();
    let mut buf: Vec<Outcome> = history.values().iter().rev().copied().collect();
    buf.reserve(n);
    for k in 0..n {
        let now = m + k;
        let mut p = params.omega0();
        for (i, &w) in lags.iter().enumerate() {
            p += w * buf[now - 1 - i] as f64;
        }
        let u: f64 = rng.random();
        buf.push(if u < p { 1 } else { -1 });
    }
    buf.split_off(m)
}

/// Account values `[V_1, ..., V_n]` under `V_{k+1} = (1 + K_k X_k) V_k`.
pub fn run_bettor(path: &[Outcome], policy: &BettorPolicy, v0: f64) -> Result<Vec<f64>> {
    policy.check_horizon(path.len())?;
    let mut value = v0;
    Ok(path
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            value *= 1.0 + policy.fraction_at(k) * x as f64;
            value
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: GameSpec,
    pub policies: Vec<(String, BettorPolicy)>,
    pub paths: usize,
    pub seed: u64,
    pub initial_value: f64,
}

impl SimConfig {
    pub fn new(spec: GameSpec, policies: Vec<(String, BettorPolicy)>, paths: usize, seed: u64) -> Result<Self> {
        if paths < 1 {
            return Err(Error::Domain("at least one path is required".into()));
        }
        for (_, p) in &policies {
            p.check_horizon(spec.n)?;
        }
        Ok(Self { spec, policies, paths, seed, initial_value: 1.0 })
    }

    pub fn with_initial_value(mut self, v0: f64) -> Result<Self> {
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::Domain("initial value must be positive".into()));
        }
        self.initial_value = v0;
        Ok(self)
    }

    /// The K*-, K_n- and time-varying bettors for this game.
    pub fn three_bettors(spec: &GameSpec) -> Result<Vec<(String, BettorPolicy)>> {
        Ok(vec![
            ("kstar".to_string(), BettorPolicy::time_invariant(policy::kelly_limit(&spec.params))?),
            ("kn".to_string(), BettorPolicy::time_invariant(policy::kelly_horizon(spec))?),
            ("kvec".to_string(), policy::kelly_timevarying(spec)),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyStats {
    pub name: String,
    /// Mean of `(1/n) ln(V_n / V_0)` over paths, in nats per bet.
    pub mean_log_growth: f64,
    pub std_error: f64,
    pub analytic_elg: f64,
    /// Final account value at the 5%, 50% and 95% quantiles.
    pub final_value_quantiles: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub paths: usize,
    pub seed: u64,
    pub n: usize,
    pub policies: Vec<PolicyStats>,
}

/// Count, mean and sum of squared deviations; merged with Chan's formula.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Self = Self { count: 0.0, mean: 0.0, m2: 0.0 };

    fn single(x: f64) -> Self {
        Self { count: 1.0, mean: x, m2: 0.0 }
    }

    fn merge(a: Self, b: Self) -> Self {
        if a.count == 0.0 {
            return b;
        }
        if b.count == 0.0 {
            return a;
        }
        let count = a.count + b.count;
        let delta = b.mean - a.mean;
        Self {
            count,
            mean: a.mean + delta * (b.count / count),
            m2: a.m2 + b.m2 + delta * delta * (a.count * b.count / count),
        }
    }

    fn std_error(&self) -> f64 {
        if self.count < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.count - 1.0) / self.count).sqrt()
    }
}

fn tree_reduce(items: &[Moments]) -> Moments {
    match items.len() {
        0 => Moments::EMPTY,
        1 => items[0],
        len => {
            let (l, r) = items.split_at(len / 2);
            Moments::merge(tree_reduce(l), tree_reduce(r))
        }
    }
}

/// Keeps final values for quantiles: everything up to `EXACT_QUANTILE_LIMIT`
/// paths, a uniform reservoir sample beyond that.
struct FinalValues {
    values: Vec<f64>,
    seen: usize,
    exact: bool,
    rng: ChaCha8Rng,
}

impl FinalValues {
    fn new(total: usize, seed: u64) -> Self {
        let exact = total <= EXACT_QUANTILE_LIMIT;
        let capacity = if exact { total } else { RESERVOIR_SIZE };
        Self { values: Vec::with_capacity(capacity), seen: 0, exact, rng: PathStream::new(seed, RESERVOIR_STREAM).rng() }
    }

    fn push(&mut self, v: f64) {
        self.seen += 1;
        if self.exact || self.values.len() < RESERVOIR_SIZE {
            self.values.push(v);
        } else {
            let j = self.rng.random_range(0..self.seen);
            if j < RESERVOIR_SIZE {
                self.values[j] = v;
            }
        }
    }
}

/// Linear-interpolation quantile (type 7) by selection; reorders `values`.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, &mut lower, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return lower;
    }
    let next = upper.iter().copied().fold(f64::INFINITY, f64::min);
    lower + frac * (next - lower)
}

/// Monte Carlo estimate of each policy's ELG on common sample paths.
pub fn monte_carlo_elg(config: &SimConfig) -> Result<SimResult> {
    let spec = &config.spec;
    let n = spec.n;
    let fractions: Vec<Vec<f64>> =
        config.policies.iter().map(|(_, p)| p.expand(n)).collect::<Result<_>>()?;
    let k = fractions.len();

    let mut chunk_moments: Vec<Vec<Moments>> = vec![Vec::new(); k];
    let mut finals: Vec<FinalValues> = (0..k).map(|_| FinalValues::new(config.paths, config.seed)).collect();

    let mut start = 0usize;
    while start < config.paths {
        let end = (start + CHUNK).min(config.paths);
        // Per path: total log growth for each policy.
        let growth: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let path = sample_path(spec, PathStream::new(config.seed, i as u64));
                fractions
                    .iter()
                    .map(|fr| path.iter().zip(fr).map(|(&x, &f)| (f * x as f64).ln_1p()).sum::<f64>())
                    .collect()
            })
            .collect();
        for j in 0..k {
            let leaves: Vec<Moments> = growth.iter().map(|g| Moments::single(g[j] / n as f64)).collect();
            chunk_moments[j].push(tree_reduce(&leaves));
            for g in &growth {
                finals[j].push(config.initial_value * g[j].exp());
            }
        }
        start = end;
    }

    let mut stats = Vec::with_capacity(k);
    for (j, (name, pol)) in config.policies.iter().enumerate() {
        let moments = tree_reduce(&chunk_moments[j]);
        let values = &mut finals[j].values;
        let quantiles = [quantile(values, 0.05), quantile(values, 0.50), quantile(values, 0.95)];
        stats.push(PolicyStats {
            name: name.clone(),
            mean_log_growth: moments.mean,
            std_error: moments.std_error(),
            analytic_elg: policy::elg(spec, pol)?,
            final_value_quantiles: quantiles,
        });
    }
    Ok(SimResult { paths: config.paths, seed: config.seed, n, policies: stats })
}

/// Analytic ELG of the three bettors at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioRow {
    pub n: usize,
    pub elg_kstar: f64,
    pub elg_kn: f64,
    pub elg_kvec: f64,
    pub kstar: f64,
    pub kn: f64,
}

/// Rows for `n = 1..=n_max`. The K*-bettor uses the steady-state fraction.
pub fn scenario_table(params: &MemoryParams, history: &History, n_max: usize) -> Result<Vec<ScenarioRow>> {
    if n_max < 1 {
        return Err(Error::Domain("n_max must be at least 1".into()));
    }
    let kstar = policy::kelly_limit(params);
    (1..=n_max)
        .map(|n| {
            let spec = GameSpec::new(params.clone(), history.clone(), n)?;
            let kn = policy::kelly_horizon(&spec);
            let kvec = policy::kelly_timevarying(&spec);
            Ok(ScenarioRow {
                n,
                elg_kstar: policy::elg_time_invariant(&spec, kstar)?,
                elg_kn: policy::elg_time_invariant(&spec, kn)?,
                elg_kvec: policy::elg(&spec, &kvec)?,
                kstar,
                kn,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(omega: &[f64], history: &[Outcome], n: usize) -> GameSpec {
        GameSpec::new(
            MemoryParams::from_omega(omega.to_vec()).unwrap(),
            History::new(history.to_vec()).unwrap(),
            n,
        )
        .unwrap()
    }

    #[test]
    fn bettor_examples() {
        let k = BettorPolicy::TimeInvariant(0.4);
        let v = run_bettor(&[1, 1], &k, 1.0).unwrap();
        assert!((v[0] - 1.4).abs() < 1e-15 && (v[1] - 1.96).abs() < 1e-15);
        let v = run_bettor(&[1, -1], &k, 1.0).unwrap();
        assert!((v[0] - 1.4).abs() < 1e-15 && (v[1] - 0.84).abs() < 1e-15);
        assert_eq!(run_bettor(&[1, -1, -1], &BettorPolicy::TimeInvariant(0.0), 2.5).unwrap(), vec![2.5; 3]);
        let tv = BettorPolicy::TimeVarying(vec![0.5, -0.3]);
        let v = run_bettor(&[1, -1], &tv, 1.0).unwrap();
        assert!((v[1] - 1.5 * 1.3).abs() < 1e-15);
        assert!(matches!(run_bettor(&[1], &tv, 1.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn near_certain_heads() {
        let s = spec(&[1.0 - 2.0 * crate::model::EPS_MARGIN, 0.0], &[-1], 1000);
        let path = sample_path(&s, PathStream::new(3, 0));
        assert!(path.iter().filter(|&&x| x == 1).count() >= 999);
    }

    #[test]
    fn streams_differ_and_repeat() {
        let s = spec(&[0.5, 0.1], &[1], 64);
        let a = sample_path(&s, PathStream::new(9, 0));
        assert_eq!(a, sample_path(&s, PathStream::new(9, 0)));
        assert_ne!(a, sample_path(&s, PathStream::new(9, 1)));
        assert_ne!(a, sample_path(&s, PathStream::new(10, 0)));
    }

    #[test]
    fn zero_fraction_is_exact() {
        let s = spec(&[0.55, 0.2], &[1], 5);
        let cfg = SimConfig::new(s, vec![("flat".into(), BettorPolicy::TimeInvariant(0.0))], 5000, 1).unwrap();
        let r = monte_carlo_elg(&cfg).unwrap();
        assert_eq!(r.policies[0].mean_log_growth, 0.0);
        assert_eq!(r.policies[0].std_error, 0.0);
        assert_eq!(r.policies[0].final_value_quantiles, [1.0; 3]);
    }

    #[test]
    fn memoryless_mc_matches_closed_form() {
        let s = spec(&[0.6, 0.0], &[1], 10);
        let cfg = SimConfig::new(s, vec![("k".into(), BettorPolicy::TimeInvariant(0.2))], 200_000, 5).unwrap();
        let r = &monte_carlo_elg(&cfg).unwrap().policies[0];
        let exact = 0.6 * 1.2f64.ln() + 0.4 * 0.8f64.ln();
        assert!((r.analytic_elg - exact).abs() < 1e-15);
        assert!((exact - 0.02014).abs() < 1e-5);
        assert!((r.mean_log_growth - exact).abs() < 4.0 * r.std_error);
        let q = r.final_value_quantiles;
        assert!(q[0] <= q[1] && q[1] <= q[2]);
    }

    #[test]
    fn config_validation() {
        let s = spec(&[0.55, 0.2], &[1], 3);
        assert!(SimConfig::new(s.clone(), vec![], 0, 1).is_err());
        let bad = vec![("v".into(), BettorPolicy::TimeVarying(vec![0.1, 0.2]))];
        assert!(SimConfig::new(s.clone(), bad, 10, 1).is_err());
        let cfg = SimConfig::new(s, vec![], 10, 1).unwrap();
        assert!(cfg.clone().with_initial_value(0.0).is_err());
        assert_eq!(cfg.with_initial_value(3.0).unwrap().initial_value, 3.0);
    }

    #[test]
    fn initial_value_scales_quantiles() {
        let s = spec(&[0.55, 0.2], &[1], 4);
        let pols = vec![("k".into(), BettorPolicy::TimeInvariant(0.3))];
        let a = monte_carlo_elg(&SimConfig::new(s.clone(), pols.clone(), 2000, 4).unwrap()).unwrap();
        let b = monte_carlo_elg(&SimConfig::new(s, pols, 2000, 4).unwrap().with_initial_value(10.0).unwrap())
            .unwrap();
        assert_eq!(a.policies[0].mean_log_growth, b.policies[0].mean_log_growth);
        for (x, y) in a.policies[0].final_value_quantiles.iter().zip(b.policies[0].final_value_quantiles) {
            assert!((10.0 * x - y).abs() < 1e-12 * y);
        }
    }

    #[test]
    fn quantile_interpolates() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&mut v, 0.5), 3.0);
        assert_eq!(quantile(&mut v, 0.0), 1.0);
        assert_eq!(quantile(&mut v, 1.0), 5.0);
        assert!((quantile(&mut v, 0.1) - 1.4).abs() < 1e-15);
        assert_eq!(quantile(&mut [7.0], 0.95), 7.0);
    }

    #[test]
    fn moments_merge_matches_direct() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let leaves: Vec<Moments> = xs.iter().map(|&x| Moments::single(x)).collect();
        let m = tree_reduce(&leaves);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((m.mean - mean).abs() < 1e-12);
        assert!((m.std_error() - (var / xs.len() as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reservoir_keeps_fixed_size() {
        let mut f = FinalValues::new(EXACT_QUANTILE_LIMIT + 1, 0);
        for i in 0..(RESERVOIR_SIZE * 3) {
            f.push(i as f64);
        }
        assert_eq!(f.values.len(), RESERVOIR_SIZE);
        assert!(f.values.iter().any(|&v| v >= RESERVOIR_SIZE as f64));
    }

    #[test]
    fn scenario_rows() {
        let p = MemoryParams::from_omega(vec![0.55, 0.2]).unwrap();
        let h = History::new(vec![1]).unwrap();
        let rows = scenario_table(&p, &h, 3).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].n, 2);
        assert!((rows[1].elg_kstar - 0.053).abs() < 5e-4);
        assert!((rows[1].elg_kn - 0.082).abs() < 5e-4);
        assert!((rows[1].elg_kvec - 0.088).abs() < 5e-4);
        assert!(scenario_table(&p, &h, 0).is_err());
        // A single bet: all three informed bettors coincide except K*.
        assert!((rows[0].elg_kn - rows[0].elg_kvec).abs() < 1e-15);
    }
}
