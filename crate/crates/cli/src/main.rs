//! `kelly-memory`: Kelly bet sizing for coins with memory.

mod output;

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use kelly_memory::estimate::{self, ObservationSet, TieRule};
use kelly_memory::model::{self, GameSpec, History, MemoryParams, Outcome};
use kelly_memory::policy::{self, BettorPolicy, PayoffModel};
use kelly_memory::simulate::{self, SimConfig};
use kelly_memory::{io, Error};

use output::{emit, fmt_sig, num, nums};

const JSON_DIGITS: usize = 12;
const CSV_DIGITS: usize = 6;

#[derive(Parser, Debug)]
#[command(name = "kelly-memory", version, about = "Kelly-optimal betting fractions for coins with memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format (defaults depend on the subcommand)
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write output to this file instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Significant digits for numeric output (default 12 for JSON, 6 for CSV)
    #[arg(long, global = true)]
    precision: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal fractions K*, K_n, K_inf and the time-varying vector
    Kelly(GameArgs),
    /// Analytic expected log growth of a supplied policy
    Elg(ElgArgs),
    /// Monte Carlo simulation of the three bettors (plus any --k policy)
    Simulate(SimulateArgs),
    /// Analytic ELG of the three bettors for n = 1..n
    Scenario(ScenarioArgs),
    /// Least-squares fit of memory coefficients from an outcome file
    Estimate(EstimateArgs),
    /// Convert a price CSV into up/down moves
    Ingest(IngestArgs),
}

#[derive(Args, Debug)]
struct CoinArgs {
    /// Coefficients w0,w1,...,wm
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    omega: Vec<f64>,

    /// Prior outcomes, most recent first: +1/-1 or H/T tokens
    #[arg(long, allow_hyphen_values = true)]
    history: String,

    /// Memory depth (inferred from --omega when absent)
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args, Debug)]
struct GameArgs {
    #[command(flatten)]
    coin: CoinArgs,

    /// Number of bets
    #[arg(long)]
    n: usize,
}

#[derive(Args, Debug)]
struct ElgArgs {
    /// Coefficients w0,...,wm (even-money mode)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    omega: Vec<f64>,

    #[arg(long, allow_hyphen_values = true)]
    history: Option<String>,

    #[arg(long)]
    m: Option<usize>,

    #[arg(long)]
    n: Option<usize>,

    /// One constant fraction, or one per bet
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    k: Vec<f64>,

    /// Per-unit payoffs for the multiple-outcome model
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    outcomes: Vec<f64>,

    /// Expected outcome frequencies for the multiple-outcome model
    #[arg(long, value_delimiter = ',')]
    freqs: Vec<f64>,

    /// Report growth in bits instead of nats
    #[arg(long)]
    bits: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    game: GameArgs,

    #[arg(long, default_value_t = simulate::DEFAULT_PATHS)]
    paths: usize,

    #[arg(long, env = "KELLY_MEMORY_SEED", default_value_t = 0)]
    seed: u64,

    /// Extra policy: one constant fraction or one per bet
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    k: Vec<f64>,

    #[arg(long, default_value_t = 1.0)]
    initial_value: f64,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[command(flatten)]
    coin: CoinArgs,

    /// Largest horizon in the table
    #[arg(long, default_value_t = simulate::DEFAULT_N_MAX)]
    n: usize,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Outcome file: one value per line, or CSV with --column
    #[arg(long)]
    input: PathBuf,

    #[arg(long)]
    m: usize,

    #[arg(long)]
    column: Option<String>,

    /// Keep the fit inside the hyperdiamond
    #[arg(long)]
    constrained: bool,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// CSV with a `price` column
    #[arg(long)]
    input: PathBuf,

    #[arg(long, value_enum, default_value_t = Tie::Drop)]
    tie: Tie,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Tie {
    Drop,
    Up,
    Down,
}

impl From<Tie> for TieRule {
    fn from(t: Tie) -> Self {
        match t {
            Tie::Drop => TieRule::Drop,
            Tie::Up => TieRule::Up,
            Tie::Down => TieRule::Down,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Numerical(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn parse_history(text: &str) -> CliResult<Vec<Outcome>> {
    let mut out = Vec::new();
    for token in text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        match token {
            "+1" | "1" => out.push(1),
            "-1" => out.push(-1),
            t if t.chars().all(|c| matches!(c, 'H' | 'h' | 'T' | 't')) => {
                out.extend(t.chars().map(|c| if c.eq_ignore_ascii_case(&'H') { 1 } else { -1 }))
            }
            t => return Err(invalid(format!("invalid history token {t:?}"))),
        }
    }
    if out.is_empty() {
        return Err(invalid("history is empty"));
    }
    Ok(out)
}

fn build_params(omega: &[f64], m: Option<usize>) -> CliResult<MemoryParams> {
    let m = m.unwrap_or(omega.len().saturating_sub(1));
    Ok(MemoryParams::new(omega.to_vec(), m)?)
}

fn build_game(coin: &CoinArgs, n: usize) -> CliResult<GameSpec> {
    let params = build_params(&coin.omega, coin.m)?;
    let history = History::new(parse_history(&coin.history)?)?;
    Ok(GameSpec::new(params, history, n)?)
}

fn policy_from(k: &[f64], n: usize) -> CliResult<BettorPolicy> {
    match k.len() {
        0 => Err(invalid("--k requires at least one fraction")),
        1 => Ok(BettorPolicy::time_invariant(k[0])?),
        len if len == n => Ok(BettorPolicy::time_varying(k.to_vec())?),
        len => Err(invalid(format!("--k has {len} fractions; expected 1 or n = {n}"))),
    }
}

struct Ctx {
    format: Format,
    digits: usize,
}

impl Ctx {
    fn new(cli: &Cli, default: Format) -> Self {
        let format = cli.format.unwrap_or(default);
        let digits = cli.precision.unwrap_or(match format {
            Format::Json => JSON_DIGITS,
            Format::Csv => CSV_DIGITS,
        });
        Self { format, digits }
    }

    fn n(&self, x: f64) -> Value {
        num(x, self.digits)
    }

    fn s(&self, x: f64) -> String {
        fmt_sig(x, self.digits)
    }
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_kelly(ctx: &Ctx, args: &GameArgs) -> CliResult<String> {
    let spec = build_game(&args.coin, args.n)?;
    let pinf = model::steady_state(&spec.params);
    let p0 = model::prob_sequence(&spec)[0];
    let kstar = policy::kelly_classical(pinf)?;
    let kn = policy::kelly_horizon(&spec);
    let kinf = policy::kelly_limit(&spec.params);
    let kvec = policy::kelly_timevarying(&spec).expand(spec.n)?;
    Ok(match ctx.format {
        Format::Json => json_text(&json!({
            "omega": nums(spec.params.omega(), ctx.digits),
            "history": spec.history.values(),
            "n": spec.n,
            "p0": ctx.n(p0),
            "pinf": ctx.n(pinf),
            "kstar": ctx.n(kstar),
            "kn": ctx.n(kn),
            "kinf": ctx.n(kinf),
            "kvec": nums(&kvec, ctx.digits),
        })),
        Format::Csv => {
            let mut s = String::from("quantity,value\n");
            for (name, v) in [("p0", p0), ("pinf", pinf), ("kstar", kstar), ("kn", kn), ("kinf", kinf)] {
                writeln!(s, "{name},{}", ctx.s(v)).unwrap();
            }
            for (k, v) in kvec.iter().enumerate() {
                writeln!(s, "kvec_{k},{}", ctx.s(*v)).unwrap();
            }
            s
        }
    })
}

fn cmd_elg(ctx: &Ctx, args: &ElgArgs) -> CliResult<String> {
    let unit = if args.bits { std::f64::consts::LN_2 } else { 1.0 };
    let unit_name = if args.bits { "bits" } else { "nats" };

    if !args.outcomes.is_empty() {
        let model = PayoffModel::new(args.outcomes.clone(), args.freqs.clone())?;
        let opt = policy::optimize_multioutcome(&model)?;
        let at_k = match args.k.as_slice() {
            [] => None,
            [k] => Some((*k, policy::elg_multioutcome(&model, *k)? / unit)),
            _ => return Err(invalid("multiple-outcome mode takes a single --k")),
        };
        return Ok(match ctx.format {
            Format::Json => {
                let mut v = json!({
                    "mode": "multioutcome",
                    "unit": unit_name,
                    "k_opt": ctx.n(opt.fraction),
                    "elg_opt": ctx.n(opt.elg / unit),
                    "unbounded": opt.unbounded,
                });
                if let Some((k, e)) = at_k {
                    v["k"] = ctx.n(k);
                    v["elg"] = ctx.n(e);
                }
                json_text(&v)
            }
            Format::Csv => {
                let mut s = String::from("k,elg,k_opt,elg_opt,unbounded\n");
                let (k, e) = at_k.map(|(k, e)| (ctx.s(k), ctx.s(e))).unwrap_or_default();
                writeln!(s, "{k},{e},{},{},{}", ctx.s(opt.fraction), ctx.s(opt.elg / unit), opt.unbounded).unwrap();
                s
            }
        });
    }

    if args.omega.is_empty() {
        return Err(invalid("elg needs --omega (even-money) or --outcomes/--freqs"));
    }
    let coin = CoinArgs {
        omega: args.omega.clone(),
        history: args.history.clone().ok_or_else(|| invalid("--history is required with --omega"))?,
        m: args.m,
    };
    let n = args.n.ok_or_else(|| invalid("--n is required with --omega"))?;
    let spec = build_game(&coin, n)?;
    let pol = policy_from(&args.k, n)?;
    let value = policy::elg(&spec, &pol)? / unit;
    let kind = match pol {
        BettorPolicy::TimeInvariant(_) => "time_invariant",
        BettorPolicy::TimeVarying(_) => "time_varying",
    };
    Ok(match ctx.format {
        Format::Json => json_text(&json!({
            "mode": kind,
            "unit": unit_name,
            "n": n,
            "k": nums(&args.k, ctx.digits),
            "elg": ctx.n(value),
        })),
        Format::Csv => format!("policy,n,elg\n{kind},{n},{}\n", ctx.s(value)),
    })
}

fn cmd_simulate(ctx: &Ctx, args: &SimulateArgs) -> CliResult<String> {
    let spec = build_game(&args.game.coin, args.game.n)?;
    let mut policies = SimConfig::three_bettors(&spec)?;
    if !args.k.is_empty() {
        policies.push(("custom".to_string(), policy_from(&args.k, spec.n)?));
    }
    let config = SimConfig::new(spec, policies, args.paths, args.seed)?.with_initial_value(args.initial_value)?;
    let result = simulate::monte_carlo_elg(&config)?;
    Ok(match ctx.format {
        Format::Csv => {
            let mut s = String::from("policy,mean_log_growth,std_error,analytic_elg,q05,q50,q95\n");
            for p in &result.policies {
                let q = p.final_value_quantiles;
                writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    p.name,
                    ctx.s(p.mean_log_growth),
                    ctx.s(p.std_error),
                    ctx.s(p.analytic_elg),
                    ctx.s(q[0]),
                    ctx.s(q[1]),
                    ctx.s(q[2])
                )
                .unwrap();
            }
            s
        }
        Format::Json => {
            let rows: Vec<Value> = result
                .policies
                .iter()
                .map(|p| {
                    json!({
                        "name": p.name,
                        "mean_log_growth": ctx.n(p.mean_log_growth),
                        "std_error": ctx.n(p.std_error),
                        "analytic_elg": ctx.n(p.analytic_elg),
                        "final_value_quantiles": nums(&p.final_value_quantiles, ctx.digits),
                    })
                })
                .collect();
            json_text(&json!({
                "paths": result.paths,
                "seed": result.seed,
                "n": result.n,
                "policies": rows,
            }))
        }
    })
}

fn cmd_scenario(ctx: &Ctx, args: &ScenarioArgs) -> CliResult<String> {
    let params = build_params(&args.coin.omega, args.coin.m)?;
    let history = History::new(parse_history(&args.coin.history)?)?;
    if history.len() != params.m() {
        return Err(Error::DimensionMismatch { expected: params.m(), found: history.len() }.into());
    }
    let rows = simulate::scenario_table(&params, &history, args.n)?;
    Ok(match ctx.format {
        Format::Csv => {
            let mut s = String::from("n,elg_kstar,elg_kn,elg_kvec,kstar,kn\n");
            for r in &rows {
                writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.n,
                    ctx.s(r.elg_kstar),
                    ctx.s(r.elg_kn),
                    ctx.s(r.elg_kvec),
                    ctx.s(r.kstar),
                    ctx.s(r.kn)
                )
                .unwrap();
            }
            s
        }
        Format::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "n": r.n,
                        "elg_kstar": ctx.n(r.elg_kstar),
                        "elg_kn": ctx.n(r.elg_kn),
                        "elg_kvec": ctx.n(r.elg_kvec),
                        "kstar": ctx.n(r.kstar),
                        "kn": ctx.n(r.kn),
                    })
                })
                .collect();
            json_text(&Value::Array(rows))
        }
    })
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| invalid(format!("cannot open {}: {e}", path.display())))
}

fn cmd_estimate(ctx: &Ctx, args: &EstimateArgs) -> CliResult<String> {
    let data = io::read_outcomes(open(&args.input)?, args.column.as_deref())?;
    let obs = ObservationSet::new(data, args.m)?;
    let fit = if args.constrained { estimate::constrained_fit(&obs)? } else { estimate::ols_fit(&obs)? };
    Ok(match ctx.format {
        Format::Json => json_text(&json!({
            "omega": nums(&fit.omega_hat, ctx.digits),
            "rss": ctx.n(fit.rss),
            "constrained": fit.constrained,
            "projected": fit.projected,
        })),
        Format::Csv => {
            let mut header: Vec<String> = (0..fit.omega_hat.len()).map(|i| format!("omega_{i}")).collect();
            header.extend(["rss", "constrained", "projected"].map(String::from));
            let mut row: Vec<String> = fit.omega_hat.iter().map(|&w| ctx.s(w)).collect();
            row.extend([ctx.s(fit.rss), fit.constrained.to_string(), fit.projected.to_string()]);
            format!("{}\n{}\n", header.join(","), row.join(","))
        }
    })
}

fn cmd_ingest(ctx: &Ctx, args: &IngestArgs) -> CliResult<String> {
    let prices = io::read_prices(open(&args.input)?)?;
    let moves = estimate::ingest_prices(&prices, args.tie.into())?;
    Ok(match ctx.format {
        Format::Json => json_text(&json!(moves)),
        Format::Csv => moves.iter().map(|x| format!("{x}\n")).collect(),
    })
}

fn run(cli: &Cli) -> CliResult<()> {
    let text = match &cli.command {
        Command::Kelly(a) => cmd_kelly(&Ctx::new(cli, Format::Json), a)?,
        Command::Elg(a) => cmd_elg(&Ctx::new(cli, Format::Json), a)?,
        Command::Simulate(a) => cmd_simulate(&Ctx::new(cli, Format::Csv), a)?,
        Command::Scenario(a) => cmd_scenario(&Ctx::new(cli, Format::Csv), a)?,
        Command::Estimate(a) => cmd_estimate(&Ctx::new(cli, Format::Json), a)?,
        Command::Ingest(a) => cmd_ingest(&Ctx::new(cli, Format::Csv), a)?,
    };
    emit(&text, cli.out.as_deref()).map_err(|e| invalid(format!("cannot write output: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
