//! `ammc`: batch front end for the matrix-channel library.
//!
//! Exit codes: 0 success, 1 failed verification or optimizer stall,
//! 2 invalid arguments, 3 enumeration budget exceeded.

mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ammc_core::capacity::{
    ammc_asymptotic, ammc_fixed_q_leading, estimate_k_ammc_mi, exact_ammc_capacity_ugr,
    exact_k_ammc_capacity, k_ammc_asymptotic, k_ammc_fixed_q_bracket, reduced_k_ammc_capacity,
    AsymptoticRegime, CapacityTerms,
};
use ammc_core::channel::DEFAULT_ENUMERATION_BUDGET;
use ammc_core::coding::{failure_rate, failure_rate_fixed, scheme_rate, CodeLayout};
use ammc_core::combinatorics::gaussian_binomial;
use ammc_core::linalg::sample_uniform_subspace;
use ammc_core::rng::run_trials;
use ammc_core::{Channel, ChannelParams, Error, Field, Matrix, SeedStream};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use output::{emit, merged, object, Format};

#[derive(Parser, Debug)]
#[command(
    name = "ammc",
    version,
    about = "Additive-multiplicative matrix channel toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Dims {
    #[arg(short = 'n')]
    n: usize,
    #[arg(short = 'm')]
    m: usize,
    #[arg(short = 't')]
    t: usize,
}

#[derive(Args, Debug, Clone)]
struct ChannelArgs {
    /// Field order, as an integer (`9`) or prime power (`3^2`).
    #[arg(short = 'q', long = "field", value_parser = parse_order)]
    q: u64,
    #[command(flatten)]
    dims: Dims,
    /// Noise of rank at most t (uniform over that set) instead of exactly t.
    #[arg(long)]
    rank_at_most: bool,
}

#[derive(Args, Debug, Clone)]
struct Random {
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Route {
    /// Every input, transfer matrix and noise matrix.
    Full,
    /// Noise only, through the rank/intersection statistic.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Lemma {
    GenericDimensions,
    Intersection,
    QbinomBounds,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Large-field capacity formulas.
    CapacityAsymptotic {
        #[command(flatten)]
        dims: Dims,
        #[arg(short = 'k')]
        k: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Fixed-field bracket (with -k) or leading term (without) for
    /// dimensions scaled linearly in ell.
    CapacityFixedField {
        #[arg(short = 'q', long = "field", value_parser = parse_order)]
        q: u64,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        ell: u64,
        #[arg(short = 'k')]
        k: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Exact k-AMMC capacity by enumeration.
    CapacityExact {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(short = 'k')]
        k: usize,
        #[arg(long, value_enum, default_value_t = Route::Full)]
        route: Route,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
        budget: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Exact capacity over uniform-given-rank inputs.
    CapacityUgr {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
        budget: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo estimate of the k-AMMC capacity.
    CapacityEstimate {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(short = 'k')]
        k: usize,
        #[command(flatten)]
        random: Random,
        #[command(flatten)]
        common: Common,
    },
    /// Empirical check of a structural lemma.
    VerifyLemma {
        #[arg(value_enum)]
        lemma: Lemma,
        #[arg(short = 'q', long = "field", value_parser = parse_order)]
        q: Option<u64>,
        #[arg(short = 'n')]
        n: Option<usize>,
        #[arg(short = 'm')]
        m: Option<usize>,
        #[arg(short = 't')]
        t: Option<usize>,
        #[arg(short = 'k')]
        k: Option<usize>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Minimum frequency of the predicted pair (generic-dimensions).
        #[arg(long, default_value_t = 0.95)]
        threshold: f64,
        /// Largest a in the q-binomial sweep.
        #[arg(long, default_value_t = 12)]
        max_a: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Failure rate of the block code over the channel.
    CodeTrial {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        random: Random,
        /// Rows removed from the data block.
        #[arg(long, default_value_t = 0)]
        margin: usize,
        /// Send this data matrix (text format) in every trial.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// One channel use on a matrix file, with given or sampled A and W.
    Transmit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, requires = "noise")]
        transfer: Option<PathBuf>,
        #[arg(long, requires = "transfer")]
        noise: Option<PathBuf>,
        /// Noise rank when sampling.
        #[arg(short = 't')]
        t: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
    Io(String),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(Error::BudgetExceeded { .. }) => 3,
            Failure::Core(Error::NonConvergence { .. })
            | Failure::Verification
            | Failure::Io(_) => 1,
            Failure::Usage(_) | Failure::Core(_) => 2,
        }
    }
}

fn parse_order(s: &str) -> Result<u64, String> {
    let bad = |e: std::num::ParseIntError| format!("`{s}`: {e}");
    match s.split_once('^') {
        Some((p, d)) => {
            let p: u64 = p.trim().parse().map_err(bad)?;
            let d: u32 = d.trim().parse().map_err(bad)?;
            p.checked_pow(d).ok_or_else(|| format!("`{s}` overflows"))
        }
        None => s.trim().parse().map_err(bad),
    }
}

fn build_channel(args: &ChannelArgs) -> Result<Channel, Failure> {
    let field = Field::with_order(args.q)?;
    let mut params = ChannelParams::new(field, args.dims.n, args.dims.m, args.dims.t)?;
    if args.rank_at_most {
        params = params.with_rank_at_most();
    }
    Ok(Channel::new(params))
}

fn check_k(k: usize, n: usize, m: usize) -> Result<(), Failure> {
    if k > n.min(m) {
        return Err(Error::RankOutOfRange { k, max: n.min(m) }.into());
    }
    Ok(())
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn require<T>(v: Option<T>, flag: &str, what: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("{what} needs {flag}")))
}

fn read_matrix(path: &Path) -> Result<Matrix, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(Matrix::parse(&text)?)
}

fn matrix_rows(m: &Matrix) -> Value {
    Value::Array((0..m.n_rows()).map(|i| json!(m.row(i))).collect())
}

fn run(cli: Cli) -> Result<(Value, Common, bool), Failure> {
    Ok(match cli.command {
        Command::CapacityAsymptotic { dims, k, common } => {
            let Dims { n, m, t } = dims;
            let value = match k {
                Some(k) => {
                    let terms = CapacityTerms::new(n, m, t, k)?;
                    json!({"n": n, "m": m, "t": t, "k": k, "delta": terms.delta, "r": terms.r, "s": terms.s,
                           "value": k_ammc_asymptotic(n, m, t, k)?})
                }
                None => {
                    let a = ammc_asymptotic(n, m, t)?;
                    let per_rank = (0..=n.min(m))
                        .map(|k| k_ammc_asymptotic(n, m, t, k))
                        .collect::<Result<Vec<_>, _>>()?;
                    json!({"n": n, "m": m, "t": t, "case": a.case.label(), "value": a.value, "k_star": a.k_star,
                           "per_rank": per_rank})
                }
            };
            (value, common, true)
        }
        Command::CapacityFixedField {
            q,
            nu,
            mu,
            tau,
            ell,
            k,
            common,
        } => {
            let regime = AsymptoticRegime::new(nu, mu, tau, ell)?;
            let dims = json!({"q": q, "n": regime.n(), "m": regime.m(), "t": regime.t(),
                              "validity_threshold": regime.validity_threshold(q)});
            let value = match k {
                Some(k) => merged(
                    dims,
                    merged(
                        json!({"k": k}),
                        to_value(&k_ammc_fixed_q_bracket(&regime, k, q)?),
                    ),
                ),
                None => merged(dims, to_value(&ammc_fixed_q_leading(nu, mu, tau, ell, q)?)),
            };
            (value, common, true)
        }
        Command::CapacityExact {
            channel,
            k,
            route,
            budget,
            common,
        } => {
            let ch = build_channel(&channel)?;
            check_k(k, channel.dims.n, channel.dims.m)?;
            let report = match route {
                Route::Full => exact_k_ammc_capacity(&ch, k, budget)?,
                Route::Reduced => reduced_k_ammc_capacity(&ch, k, budget)?,
            };
            (to_value(&report), common, true)
        }
        Command::CapacityUgr {
            channel,
            budget,
            common,
        } => {
            let sol = exact_ammc_capacity_ugr(&build_channel(&channel)?, budget)?;
            let extra =
                json!({"per_rank_capacity": sol.per_rank_capacity, "iterations": sol.iterations});
            (merged(to_value(&sol.report), extra), common, true)
        }
        Command::CapacityEstimate {
            channel,
            k,
            random,
            common,
        } => {
            let ch = build_channel(&channel)?;
            check_k(k, channel.dims.n, channel.dims.m)?;
            let report = estimate_k_ammc_mi(
                &ch,
                k,
                random.trials,
                &SeedStream::new(random.seed),
                random.workers,
            )?;
            (
                merged(
                    to_value(&report),
                    json!({"trials": random.trials, "seed": random.seed}),
                ),
                common,
                true,
            )
        }
        Command::VerifyLemma {
            lemma,
            q,
            n,
            m,
            t,
            k,
            trials,
            seed,
            workers,
            threshold,
            max_a,
            common,
        } => {
            let (value, pass) = match lemma {
                Lemma::QbinomBounds => qbinom_bounds(max_a),
                Lemma::GenericDimensions => {
                    let what = "generic-dimensions";
                    let (q, n, m, t, k) = (
                        require(q, "-q", what)?,
                        require(n, "-n", what)?,
                        require(m, "-m", what)?,
                        require(t, "-t", what)?,
                        require(k, "-k", what)?,
                    );
                    let (trials, seed) = (
                        require(trials, "--trials", what)?,
                        require(seed, "--seed", what)?,
                    );
                    generic_dimensions(q, n, m, t, k, trials, seed, workers, threshold)?
                }
                Lemma::Intersection => {
                    let what = "intersection";
                    let (q, m, t, k) = (
                        require(q, "-q", what)?,
                        require(m, "-m", what)?,
                        require(t, "-t", what)?,
                        require(k, "-k", what)?,
                    );
                    let (trials, seed) = (
                        require(trials, "--trials", what)?,
                        require(seed, "--seed", what)?,
                    );
                    intersection(q, m, t, k, trials, seed, workers)?
                }
            };
            (value, common, pass)
        }
        Command::CodeTrial {
            channel,
            random,
            margin,
            data,
            common,
        } => {
            let ch = build_channel(&channel)?;
            let layout = CodeLayout::new(ch.params().clone()).with_margin(margin)?;
            let stream = SeedStream::new(random.seed);
            let report = match data {
                Some(path) => {
                    let u = read_matrix(&path)?;
                    failure_rate_fixed(&layout, &u, random.trials, &stream, random.workers)?
                }
                None => failure_rate(&layout, random.trials, &stream, random.workers)?,
            };
            let rate = scheme_rate(&layout)?;
            let extra = json!({"x": layout.x, "y": layout.y, "symbols": rate.symbols,
                               "fraction_of_capacity": rate.fraction_of_capacity, "seed": random.seed});
            (merged(to_value(&report), extra), common, true)
        }
        Command::Transmit {
            input,
            transfer,
            noise,
            t,
            seed,
            common,
        } => {
            let x = read_matrix(&input)?;
            let (n, m) = (x.n_rows(), x.n_cols());
            let trace = match (transfer, noise) {
                (Some(a), Some(w)) => {
                    let (a, w) = (read_matrix(&a)?, read_matrix(&w)?);
                    let t = t.unwrap_or(w.rank());
                    let ch = Channel::new(ChannelParams::new(x.field().clone(), n, m, t)?);
                    ch.transmit_with(&x, &a, &w)?
                }
                _ => {
                    let seed = require(seed, "--seed", "sampling A and W")?;
                    let t = require(t, "-t", "sampling W")?;
                    let ch = Channel::new(ChannelParams::new(x.field().clone(), n, m, t)?);
                    ch.transmit(&x, &mut SeedStream::new(seed).substream(0))?
                }
            };
            let value = object(vec![
                ("rank", json!(trace.r)),
                ("intersection", json!(trace.s)),
                ("y", matrix_rows(&trace.y)),
                ("a", matrix_rows(&trace.a)),
                ("w", matrix_rows(&trace.w)),
            ]);
            (value, common, true)
        }
    })
}

/// `q^{(a-b)b} <= [a, b]_q <= 4 q^{(a-b)b}`, strict on the left for `b < a`.
fn qbinom_bounds(max_a: usize) -> (Value, bool) {
    let mut checked = 0u64;
    let mut failures = Vec::new();
    for q in [2u64, 3, 4, 5, 8, 9] {
        for a in 1..=max_a {
            for b in 1..=a {
                checked += 1;
                let g = gaussian_binomial(a, b, q);
                let base = num_bigint_pow(q, (a - b) * b);
                let lower_ok = if b < a { base < g } else { base == g };
                if !lower_ok || g > base * 4u32 {
                    failures.push(json!({"q": q, "a": a, "b": b}));
                }
            }
        }
    }
    let pass = failures.is_empty();
    (
        json!({"lemma": "qbinom-bounds", "checked": checked, "failures": failures, "pass": pass}),
        pass,
    )
}

fn num_bigint_pow(q: u64, e: usize) -> num_bigint::BigUint {
    num_bigint::BigUint::from(q).pow(e as u32)
}

#[allow(clippy::too_many_arguments)]
fn generic_dimensions(
    q: u64,
    n: usize,
    m: usize,
    t: usize,
    k: usize,
    trials: u64,
    seed: u64,
    workers: usize,
    threshold: f64,
) -> Result<(Value, bool), Failure> {
    if trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    check_k(k, n, m)?;
    let ch = Channel::new(ChannelParams::new(Field::with_order(q)?, n, m, t)?);
    let tally = ch.transition_statistic_distribution(k, trials, &SeedStream::new(seed), workers)?;
    let freq = tally.frequency(tally.predicted);
    let counts: Vec<Value> = tally
        .counts
        .iter()
        .map(|(&(r, s), &c)| json!({"r": r, "s": s, "count": c}))
        .collect();
    let pass = freq >= threshold;
    Ok((
        json!({"lemma": "generic-dimensions", "q": q, "n": n, "m": m, "t": t, "k": k, "trials": trials, "seed": seed,
               "predicted": [tally.predicted.0, tally.predicted.1], "observed_mode": tally.mode().map(|(r, s)| [r, s]),
               "frequency": freq, "threshold": threshold, "counts": counts, "pass": pass}),
        pass,
    ))
}

/// Random `U` of dimension `k` and `V` of dimension `t` in F_q^m always meet
/// in dimension at least `max{0, k + t - m}`.
fn intersection(
    q: u64,
    m: usize,
    t: usize,
    k: usize,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<(Value, bool), Failure> {
    if trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    if k > m || t > m {
        return Err(Failure::Usage(format!(
            "need k, t <= m, got k={k}, t={t}, m={m}"
        )));
    }
    let field = Field::with_order(q)?;
    let delta = (k + t).saturating_sub(m);
    let hist = run_trials(
        &SeedStream::new(seed),
        trials,
        workers,
        BTreeMap::<usize, u64>::new,
        |acc, _, rng| {
            let u = sample_uniform_subspace(&field, m, k, rng).expect("k <= m");
            let v = sample_uniform_subspace(&field, m, t, rng).expect("t <= m");
            *acc.entry(u.intersection_dim(&v).expect("same ambient"))
                .or_insert(0) += 1;
        },
        |mut a, b| {
            for (key, c) in b {
                *a.entry(key).or_insert(0) += c;
            }
            a
        },
    );
    let min = *hist.keys().next().expect("trials >= 1");
    let pass = min >= delta;
    let counts: Vec<Value> = hist
        .iter()
        .map(|(&d, &c)| json!({"dim": d, "count": c}))
        .collect();
    Ok((
        json!({"lemma": "intersection", "q": q, "m": m, "t": t, "k": k, "trials": trials, "seed": seed,
               "delta": delta, "min_observed": min, "frequency_at_delta": hist.get(&delta).copied().unwrap_or(0) as f64 / trials as f64,
               "counts": counts, "pass": pass}),
        pass,
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((value, common, pass)) => {
            if let Err(e) = emit(&value, common.format, common.out.as_deref()) {
                eprintln!("error: {e}");
                return ExitCode::from(Failure::Io(e.to_string()).exit_code());
            }
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(Failure::Verification.exit_code())
            }
        }
        Err(f) => {
            match &f {
                Failure::Usage(msg) | Failure::Io(msg) => eprintln!("error: {msg}"),
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Verification => eprintln!("error: verification failed"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ammc_core::channel::predicted_statistic;

    #[test]
    fn field_orders_parse() {
        assert_eq!(parse_order("9"), Ok(9));
        assert_eq!(parse_order("3^2"), Ok(9));
        assert_eq!(parse_order("2^16"), Ok(65536));
        assert!(parse_order("x").is_err());
        assert!(parse_order("2^100").is_err());
    }

    #[test]
    fn predicted_pair_is_reported() {
        let (v, pass) = generic_dimensions(101, 4, 4, 1, 2, 500, 3, 1, 0.9).unwrap();
        assert!(pass);
        assert_eq!(v["predicted"], json!([3, 2]));
        assert_eq!(json!(predicted_statistic(4, 4, 1, 2)), json!([3, 2]));
    }
}
