//! Capacity of the AMMC and of the rank-restricted k-AMMC.
//!
//! Everything is computed in base-q logarithms; bits are derived for display.
//!
//! Closed forms:
//! * k-AMMC, `q -> ∞`: `(m + s - k - r) s` with `δ = max{0, k+t-m}`,
//!   `r = min{t+k, m, n}`, `s = min{k, n+δ-t}`.
//! * AMMC, `q -> ∞`: `(m-n)(n-t)` when `m + t >= 2n`, otherwise
//!   `⌈(m-t)/2⌉·⌊(m-t)/2⌋`.
//! * Fixed q, dimensions `⌊νℓ⌋, ⌊μℓ⌋, ⌊τℓ⌋`: a bracket around the k-AMMC
//!   value with `O(ℓ log_q ℓ)` slack, and the AMMC leading term
//!   `(μ-ν)(ν-τ)ℓ²` or `(μ-τ)²ℓ²/4`. The second leading term carries the
//!   square; it is the limit of `⌈(m-t)/2⌉·⌊(m-t)/2⌋ / ℓ²`.
//!
//! Exact values at toy scale come from enumeration. For uniform rank-k
//! inputs the posterior of `X` given `Y` depends only on the pair
//! `(r, s) = (rank Y, dim(row X ∩ row Y))`, which gives
//!
//! `I(X;Y) = log_q ρ(n,m,k) - H(S | R) - Σ P(r,s) log_q N(r,s)`
//!
//! where `N(r,s)` counts rank-k inputs with intersection dimension `s`
//! against a fixed rank-`r` output. The Monte-Carlo estimator plugs
//! empirical `(r,s)` frequencies into the same expression.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::channel::{check_budget, entropy_of_counts, merge_counts, Channel};
use crate::combinatorics::{
    count_compatible_inputs, count_independent_tuples, count_invertible, count_rank_matrices, log_q,
};
use crate::error::{Error, Result};
use crate::linalg::{all_rank_k_matrices, sample_rank_k, Matrix};
use crate::rng::{run_trials, SeedStream};

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// The integers `(δ, r, s)` attached to a k-AMMC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CapacityTerms {
    pub delta: usize,
    pub r: usize,
    pub s: usize,
}

impl CapacityTerms {
    pub fn new(n: usize, m: usize, t: usize, k: usize) -> Result<Self> {
        check_dims(n, m, t)?;
        if k > n.min(m) {
            return Err(Error::RankOutOfRange { k, max: n.min(m) });
        }
        let delta = (k + t).saturating_sub(m);
        Ok(Self {
            delta,
            r: (t + k).min(m).min(n),
            s: k.min(n + delta - t),
        })
    }
}

fn check_dims(n: usize, m: usize, t: usize) -> Result<()> {
    if t > n.min(m) {
        return Err(Error::InvalidParameters(format!(
            "t = {t} exceeds min(n, m) = {}",
            n.min(m)
        )));
    }
    Ok(())
}

/// Limit of the k-AMMC capacity as `q -> ∞`.
pub fn k_ammc_asymptotic(n: usize, m: usize, t: usize, k: usize) -> Result<i64> {
    let CapacityTerms { r, s, .. } = CapacityTerms::new(n, m, t, k)?;
    Ok((m as i64 + s as i64 - k as i64 - r as i64) * s as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AmmcCase {
    #[serde(rename = "m+t>=2n")]
    Wide,
    #[serde(rename = "m+t<2n")]
    Narrow,
}

impl AmmcCase {
    pub fn label(self) -> &'static str {
        match self {
            AmmcCase::Wide => "m+t>=2n",
            AmmcCase::Narrow => "m+t<2n",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AsymptoticCapacity {
    pub case: AmmcCase,
    pub value: i64,
    pub k_star: usize,
}

/// Limit of the AMMC capacity as `q -> ∞`, with the maximizing input rank.
pub fn ammc_asymptotic(n: usize, m: usize, t: usize) -> Result<AsymptoticCapacity> {
    check_dims(n, m, t)?;
    let (n, m, t) = (n as i64, m as i64, t as i64);
    Ok(if m + t >= 2 * n {
        AsymptoticCapacity {
            case: AmmcCase::Wide,
            value: (m - n) * (n - t),
            k_star: (n - t) as usize,
        }
    } else {
        let lo = (m - t) / 2;
        let hi = (m - t + 1) / 2;
        AsymptoticCapacity {
            case: AmmcCase::Narrow,
            value: lo * hi,
            k_star: lo as usize,
        }
    })
}

/// Linear scaling `n = ⌊νℓ⌋, m = ⌊μℓ⌋, t = ⌊τℓ⌋` at a fixed field size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticRegime {
    pub nu: f64,
    pub mu: f64,
    pub tau: f64,
    pub ell: u64,
}

impl AsymptoticRegime {
    pub fn new(nu: f64, mu: f64, tau: f64, ell: u64) -> Result<Self> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !(open(nu) && open(mu) && open(tau)) || tau > nu.min(mu) || ell == 0 {
            return Err(Error::InvalidParameters(format!(
                "need ν, μ, τ in (0,1), τ <= min(ν, μ), ℓ >= 1; got ν={nu}, μ={mu}, τ={tau}, ℓ={ell}"
            )));
        }
        Ok(Self { nu, mu, tau, ell })
    }

    pub fn n(&self) -> usize {
        (self.nu * self.ell as f64).floor() as usize
    }

    pub fn m(&self) -> usize {
        (self.mu * self.ell as f64).floor() as usize
    }

    pub fn t(&self) -> usize {
        (self.tau * self.ell as f64).floor() as usize
    }

    /// Window half-width `13 log_q ℓ`.
    pub fn f(&self, q: u64) -> f64 {
        13.0 * (self.ell as f64).ln() / (q as f64).ln()
    }

    /// Smallest ℓ for which the fixed-field bracket is proven:
    /// `16 + sqrt(1 + t + n) + q^9 + 14²/(ν+μ)²`.
    pub fn validity_threshold(&self, q: u64) -> f64 {
        16.0 + ((1 + self.t() + self.n()) as f64).sqrt()
            + (q as f64).powi(9)
            + 196.0 / (self.nu + self.mu).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub lower: f64,
    pub center: f64,
    pub upper: f64,
    pub slack_lower: f64,
    pub slack_upper: f64,
    /// `false` when ℓ is below the validity threshold; the numbers are then
    /// reported but carry no guarantee.
    pub guaranteed: bool,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Fixed-field bracket for the k-AMMC capacity.
pub fn k_ammc_fixed_q_bracket(regime: &AsymptoticRegime, k: usize, q: u64) -> Result<Bracket> {
    if q < 2 {
        return Err(Error::InvalidParameters("q must be at least 2".into()));
    }
    let (n, m, t) = (regime.n(), regime.m(), regime.t());
    let center = k_ammc_asymptotic(n, m, t, k)? as f64;
    let f = regime.f(q);
    let ell3 = (regime.ell as f64).powi(3);
    let mn = (m + n) as f64;
    let log4 = 4f64.ln() / (q as f64).ln();
    let slack_lower = 2.0 * mn * f + mn * mn / ell3 + log4;
    let slack_upper = mn * f + log4 + 4.0 * mn * mn / ell3;
    Ok(Bracket {
        lower: center - slack_lower,
        center,
        upper: center + slack_upper,
        slack_lower,
        slack_upper,
        guaranteed: regime.ell as f64 >= regime.validity_threshold(q),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedFieldLeading {
    pub case: AmmcCase,
    /// Leading `ℓ²` term of the AMMC capacity.
    pub leading: f64,
    /// Scale `ℓ log_q ℓ` of the error term.
    pub error_scale: f64,
}

/// Leading term of the AMMC capacity at fixed q.
pub fn ammc_fixed_q_leading(
    nu: f64,
    mu: f64,
    tau: f64,
    ell: u64,
    q: u64,
) -> Result<FixedFieldLeading> {
    AsymptoticRegime::new(nu, mu, tau, ell)?;
    if q < 2 {
        return Err(Error::InvalidParameters("q must be at least 2".into()));
    }
    let l = ell as f64;
    let (case, leading) = if mu + tau >= 2.0 * nu {
        (AmmcCase::Wide, (mu - nu) * (nu - tau) * l * l)
    } else {
        (AmmcCase::Narrow, (mu - tau).powi(2) / 4.0 * l * l)
    };
    Ok(FixedFieldLeading {
        case,
        leading,
        error_scale: l * l.ln() / (q as f64).ln(),
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    ExactEnumeration,
    UgrOptimized,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    pub q: u64,
    pub n: usize,
    pub m: usize,
    pub t: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub method: Method,
    pub value_logq: f64,
    pub value_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_distribution: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_gap: Option<f64>,
}

impl CapacityReport {
    fn new(channel: &Channel, k: Option<usize>, method: Method, value_logq: f64) -> Self {
        let p = channel.params();
        let mut flags = Vec::new();
        if !p.exact_rank_noise {
            flags.push("noise-rank-at-most-t".to_string());
        }
        CapacityReport {
            q: p.q(),
            n: p.n,
            m: p.m,
            t: p.t,
            k,
            method,
            value_logq,
            value_bits: value_logq * (p.q() as f64).log2(),
            stderr: None,
            flags,
            rank_distribution: None,
            certificate_gap: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Exact computation
// ---------------------------------------------------------------------------

fn check_rank(channel: &Channel, k: usize) -> Result<()> {
    let max = channel.params().max_rank();
    if k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    Ok(())
}

/// The rank-k input `[I_k 0; 0 0]`.
pub fn representative_input(channel: &Channel, k: usize) -> Matrix {
    let p = channel.params();
    let mut x = Matrix::zeros(&p.field, p.n, p.m);
    for i in 0..k {
        x.set(i, i, 1);
    }
    x
}

/// k-AMMC mutual information under uniform rank-k input, by full
/// enumeration of inputs, transfer matrices and noise.
///
/// `H(Y|X)` is taken at one representative input and re-checked at a second,
/// randomly drawn one; `H(Y)` sums the transition laws of every rank-k input.
/// Work is `ρ(n,m,k) · |GL_n| · #noise`, checked against `budget`.
pub fn exact_k_ammc_capacity(channel: &Channel, k: usize, budget: u64) -> Result<CapacityReport> {
    check_rank(channel, k)?;
    let p = channel.params();
    let q = p.q();
    let work = count_rank_matrices(p.n, p.m, k, q) * count_invertible(p.n, q) * p.noise_support();
    check_budget(&work, budget)?;

    let rep = representative_input(channel, k);
    let h_cond = channel
        .exact_transition_distribution(&rep, budget)?
        .entropy(q);
    let mut rng = SeedStream::new(0x5eed).substream(k as u64);
    let other = sample_rank_k(&p.field, p.n, p.m, k, &mut rng)?;
    let h_other = channel
        .exact_transition_distribution(&other, budget)?
        .entropy(q);

    let mut output: HashMap<Matrix, u64> = HashMap::new();
    let mut total = 0u64;
    for x in all_rank_k_matrices(&p.field, p.n, p.m, k) {
        let d = channel.exact_transition_distribution(&x, budget)?;
        total += d.denominator;
        for (y, c) in d.counts {
            *output.entry(y).or_insert(0) += c;
        }
    }
    let h_out = entropy_of_counts(output.values().copied(), total, q);

    let mut report =
        CapacityReport::new(channel, Some(k), Method::ExactEnumeration, h_out - h_cond);
    report.flags.push("full-enumeration".into());
    report.flags.push(
        if (h_cond - h_other).abs() <= 1e-9 {
            "symmetry-check-pass"
        } else {
            "symmetry-check-fail"
        }
        .into(),
    );
    Ok(report)
}

/// Exact per-rank quantities for uniform rank-k inputs, from enumerating the
/// noise at one representative input.
#[derive(Debug, Clone, PartialEq)]
pub struct InputRankProfile {
    pub k: usize,
    /// `P(rank Y = r)` for `r = 0..=min(n, m)`.
    pub output_rank_law: Vec<f64>,
    /// Joint law of `(r, s)`.
    pub statistic: BTreeMap<(usize, usize), f64>,
    /// `H(Y | X)` for any rank-k input.
    pub conditional_entropy: f64,
    /// `H(Y)` under uniform rank-k input.
    pub output_entropy: f64,
    /// `I(X;Y)` via the `(r, s)` reduction.
    pub information: f64,
}

impl InputRankProfile {
    /// `I(X;Y)` as `H(Y) - H(Y|X)`; agrees with `information` up to rounding.
    pub fn information_from_output(&self) -> f64 {
        self.output_entropy - self.conditional_entropy
    }
}

pub fn input_rank_profile(channel: &Channel, k: usize, budget: u64) -> Result<InputRankProfile> {
    check_rank(channel, k)?;
    let p = channel.params();
    let (q, n, m) = (p.q(), p.n, p.m);
    let law = channel.output_row_space_law(&representative_input(channel, k), budget)?;
    let total = law.total as f64;

    // H(Y|X): Y is uniform over the matrices with row space V.
    let mut per_dim: BTreeMap<usize, u64> = BTreeMap::new();
    for (v, &c) in &law.by_space {
        *per_dim.entry(v.dim()).or_insert(0) += c;
    }
    let spread: f64 = per_dim
        .iter()
        .map(|(&d, &c)| c as f64 / total * log_q(&count_independent_tuples(n, d, q), q))
        .sum();
    let conditional_entropy =
        entropy_of_counts(law.by_space.values().copied(), law.total, q) + spread;

    let statistic: BTreeMap<(usize, usize), f64> = law
        .statistic
        .iter()
        .map(|(&rs, &c)| (rs, c as f64 / total))
        .collect();
    let mut output_rank_law = vec![0.0; p.max_rank() + 1];
    for (&(r, _), &pr) in &statistic {
        output_rank_law[r] += pr;
    }
    let output_entropy = output_entropy(&output_rank_law, n, m, q);
    let information = statistic_information(n, m, k, q, &statistic);
    Ok(InputRankProfile {
        k,
        output_rank_law,
        statistic,
        conditional_entropy,
        output_entropy,
        information,
    })
}

/// `H(Y)` when `Y` is uniform given its rank: `H(R) + Σ P(r) log_q ρ(n,m,r)`.
fn output_entropy(rank_law: &[f64], n: usize, m: usize, q: u64) -> f64 {
    rank_law
        .iter()
        .enumerate()
        .filter(|(_, &pr)| pr > 0.0)
        .map(|(r, &pr)| {
            pr * (log_q(&count_rank_matrices(n, m, r, q), q) - pr.ln() / (q as f64).ln())
        })
        .sum()
}

/// `log_q ρ(n,m,k) - H(S|R) - Σ P(r,s) log_q N(r,s)` for a law of `(r, s)`.
fn statistic_information(
    n: usize,
    m: usize,
    k: usize,
    q: u64,
    joint: &BTreeMap<(usize, usize), f64>,
) -> f64 {
    let ln_q = (q as f64).ln();
    let per_space = count_independent_tuples(n, k, q);
    let mut rank_marginal: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(r, _), &pr) in joint {
        *rank_marginal.entry(r).or_insert(0.0) += pr;
    }
    let mut total = log_q(&count_rank_matrices(n, m, k, q), q);
    for (&(r, s), &prs) in joint.iter().filter(|(_, &v)| v > 0.0) {
        let class = count_compatible_inputs(m, r, k, s, q) * &per_space;
        // H(S|R) term: -P(r,s) log P(s|r)
        let cond = prs / rank_marginal[&r];
        total -= prs * log_q(&class, q) - prs * cond.ln() / ln_q;
    }
    total
}

/// Exact k-AMMC capacity through the `(r, s)` reduction; enumerates only
/// the noise (`#noise` steps).
pub fn reduced_k_ammc_capacity(channel: &Channel, k: usize, budget: u64) -> Result<CapacityReport> {
    let profile = input_rank_profile(channel, k, budget)?;
    let mut report = CapacityReport::new(
        channel,
        Some(k),
        Method::ExactEnumeration,
        profile.information,
    );
    report.flags.push("rs-reduction".into());
    Ok(report)
}

/// Capacity over uniform-given-rank inputs, with its optimal rank law.
#[derive(Debug, Clone, PartialEq)]
pub struct UgrSolution {
    pub report: CapacityReport,
    pub rank_distribution: Vec<f64>,
    /// Exact k-AMMC capacities `c_k`.
    pub per_rank_capacity: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
}

impl UgrSolution {
    pub fn best_single_rank(&self) -> f64 {
        self.per_rank_capacity
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub const UGR_MAX_ITERATIONS: usize = 10_000;
pub const UGR_GAP_TOLERANCE: f64 = 1e-9;

/// Maximizes `I = H(Y) - Σ p_k h_k` over rank laws `p`.
///
/// With uniform-given-rank input, `Y` is uniform given its rank, so
/// `H(Y) = H(R) + Σ_r P(r) log_q ρ(n,m,r)` with `P(r) = Σ_k p_k Q(r|k)`.
/// The objective is concave in `p`; it is maximized by Frank-Wolfe with away
/// steps and exact line search, stopping once the duality gap
/// `max_k ∂_k I - Σ p_k ∂_k I` is at most `UGR_GAP_TOLERANCE`.
pub fn exact_ammc_capacity_ugr(channel: &Channel, budget: u64) -> Result<UgrSolution> {
    let p = channel.params();
    let kmax = p.max_rank();
    let steps = p.noise_support() * num_bigint::BigUint::from(kmax as u64 + 1);
    check_budget(&steps, budget)?;
    let profiles = (0..=kmax)
        .map(|k| input_rank_profile(channel, k, budget))
        .collect::<Result<Vec<_>>>()?;
    let problem = RankLawProblem::new(&profiles, p.n, p.m, p.q());
    let (dist, gap, iterations) = problem.maximize()?;
    let value = problem.objective(&dist);

    let mut report = CapacityReport::new(channel, None, Method::UgrOptimized, value);
    report.rank_distribution = Some(dist.clone());
    report.certificate_gap = Some(gap);
    Ok(UgrSolution {
        report,
        rank_distribution: dist,
        per_rank_capacity: profiles.iter().map(|pr| pr.information).collect(),
        gap,
        iterations,
    })
}

struct RankLawProblem {
    /// Q(r|k), indexed [k][r].
    transition: Vec<Vec<f64>>,
    /// log_q ρ(n,m,r).
    rank_volume: Vec<f64>,
    /// h_k = H(Y | X) for rank-k X.
    noise_entropy: Vec<f64>,
    ln_q: f64,
}

impl RankLawProblem {
    fn new(profiles: &[InputRankProfile], n: usize, m: usize, q: u64) -> Self {
        let ranks = profiles[0].output_rank_law.len();
        Self {
            transition: profiles.iter().map(|p| p.output_rank_law.clone()).collect(),
            rank_volume: (0..ranks)
                .map(|r| log_q(&count_rank_matrices(n, m, r, q), q))
                .collect(),
            noise_entropy: profiles.iter().map(|p| p.conditional_entropy).collect(),
            ln_q: (q as f64).ln(),
        }
    }

    fn output_law(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rank_volume.len()];
        for (pk, row) in p.iter().zip(&self.transition) {
            for (o, &qr) in out.iter_mut().zip(row) {
                *o += pk * qr;
            }
        }
        out
    }

    fn objective(&self, p: &[f64]) -> f64 {
        let out = self.output_law(p);
        let h_out: f64 = out
            .iter()
            .zip(&self.rank_volume)
            .filter(|(&pr, _)| pr > 0.0)
            .map(|(&pr, &vol)| pr * (vol - pr.ln() / self.ln_q))
            .sum();
        h_out
            - p.iter()
                .zip(&self.noise_entropy)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Gradient up to an additive constant; `+inf` where a rank would enter
    /// an output class that currently has zero mass.
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let out = self.output_law(p);
        self.transition
            .iter()
            .zip(&self.noise_entropy)
            .map(|(row, h)| {
                let mut g = -h;
                for ((&qr, &pr), &vol) in row.iter().zip(&out).zip(&self.rank_volume) {
                    if qr > 0.0 {
                        if pr <= 0.0 {
                            return f64::INFINITY;
                        }
                        g += qr * (vol - pr.ln() / self.ln_q);
                    }
                }
                g
            })
            .collect()
    }

    fn directional(&self, p: &[f64], d: &[f64], gamma: f64) -> f64 {
        let point: Vec<f64> = p
            .iter()
            .zip(d)
            .map(|(a, b)| (a + gamma * b).max(0.0))
            .collect();
        let g = self.gradient(&point);
        d.iter()
            .zip(&g)
            .filter(|(&dk, _)| dk != 0.0)
            .map(|(&dk, &gk)| {
                if gk.is_infinite() {
                    dk.signum() * f64::INFINITY
                } else {
                    dk * gk
                }
            })
            .sum()
    }

    fn line_search(&self, p: &[f64], d: &[f64], gamma_max: f64) -> f64 {
        if self.directional(p, d, gamma_max) >= 0.0 {
            return gamma_max;
        }
        let (mut lo, mut hi) = (0.0, gamma_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.directional(p, d, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn maximize(&self) -> Result<(Vec<f64>, f64, usize)> {
        let dim = self.transition.len();
        let mut p = vec![1.0 / dim as f64; dim];
        let mut gap = f64::INFINITY;
        for it in 0..UGR_MAX_ITERATIONS {
            let g = self.gradient(&p);
            let support: Vec<usize> = (0..dim).filter(|&k| p[k] > 0.0).collect();
            let inner: f64 = support.iter().map(|&k| p[k] * g[k]).sum();
            let toward = (0..dim).fold(0, |b, k| if g[k] > g[b] { k } else { b });
            gap = g[toward] - inner;
            if gap <= UGR_GAP_TOLERANCE {
                return Ok((p, gap.max(0.0), it));
            }
            let away = support
                .iter()
                .copied()
                .fold(support[0], |b, k| if g[k] < g[b] { k } else { b });
            let away_gap = inner - g[away];
            let (d, gamma_max) = if gap >= away_gap || p[away] >= 1.0 {
                let mut d: Vec<f64> = p.iter().map(|v| -v).collect();
                d[toward] += 1.0;
                (d, 1.0)
            } else {
                let mut d = p.clone();
                d[away] -= 1.0;
                (d, p[away] / (1.0 - p[away]))
            };
            let gamma = self.line_search(&p, &d, gamma_max);
            for (pk, dk) in p.iter_mut().zip(&d) {
                *pk = (*pk + gamma * dk).max(0.0);
            }
            if gamma == gamma_max && d[away] < 0.0 && gamma_max < 1.0 {
                p[away] = 0.0;
            }
            let sum: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= sum);
        }
        Err(Error::NonConvergence {
            iterations: UGR_MAX_ITERATIONS,
            gap,
        })
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

pub const ESTIMATOR_BATCHES: u64 = 10;

/// Monte-Carlo estimate of the k-AMMC capacity.
///
/// Only the law of `(r, s)` is sampled; class sizes are exact. The standard
/// error comes from batch means over `ESTIMATOR_BATCHES` contiguous batches
/// of trial indices.
pub fn estimate_k_ammc_mi(
    channel: &Channel,
    k: usize,
    trials: u64,
    stream: &SeedStream,
    workers: usize,
) -> Result<CapacityReport> {
    check_rank(channel, k)?;
    if trials == 0 {
        return Err(Error::InvalidParameters("trials must be at least 1".into()));
    }
    let p = channel.params();
    let batches = ESTIMATOR_BATCHES.min(trials);
    let per_batch = run_trials(
        stream,
        trials,
        workers,
        || vec![BTreeMap::<(usize, usize), u64>::new(); batches as usize],
        |acc, i, rng| {
            let x = sample_rank_k(&p.field, p.n, p.m, k, rng).expect("k in range");
            let tr = channel.transmit(&x, rng).expect("shapes agree");
            let b = (i as u128 * batches as u128 / trials as u128) as usize;
            *acc[b].entry((tr.r, tr.s)).or_insert(0) += 1;
        },
        |a, b| {
            a.into_iter()
                .zip(b)
                .map(|(x, y)| merge_counts(x, y))
                .collect()
        },
    );
    let estimate = |counts: &BTreeMap<(usize, usize), u64>| {
        let total: u64 = counts.values().sum();
        let joint = counts
            .iter()
            .map(|(&rs, &c)| (rs, c as f64 / total as f64))
            .collect();
        statistic_information(p.n, p.m, k, p.q(), &joint)
    };
    let all = per_batch
        .iter()
        .cloned()
        .fold(BTreeMap::new(), merge_counts);
    let value = estimate(&all);
    let mut report = CapacityReport::new(channel, Some(k), Method::MonteCarlo, value);
    if batches >= 2 {
        let vals: Vec<f64> = per_batch.iter().map(estimate).collect();
        let mean = vals.iter().sum::<f64>() / batches as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        report.stderr = Some((var / batches as f64).sqrt());
    }
    if trials < 100 * ESTIMATOR_BATCHES {
        report.flags.push("few-trials".into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelParams, DEFAULT_ENUMERATION_BUDGET};
    use crate::combinatorics::gaussian_binomial;
    use crate::gf::Field;

    const BUDGET: u64 = DEFAULT_ENUMERATION_BUDGET;

    fn channel(q: u64, n: usize, m: usize, t: usize) -> Channel {
        Channel::new(ChannelParams::new(Field::with_order(q).unwrap(), n, m, t).unwrap())
    }

    #[test]
    fn k_ammc_formula_examples() {
        assert_eq!(k_ammc_asymptotic(3, 4, 1, 0).unwrap(), 0);
        assert_eq!(
            CapacityTerms::new(2, 2, 1, 1).unwrap(),
            CapacityTerms {
                delta: 0,
                r: 2,
                s: 1
            }
        );
        assert_eq!(k_ammc_asymptotic(2, 2, 1, 1).unwrap(), 0);
        assert_eq!(
            CapacityTerms::new(4, 6, 1, 2).unwrap(),
            CapacityTerms {
                delta: 0,
                r: 3,
                s: 2
            }
        );
        assert_eq!(k_ammc_asymptotic(4, 6, 1, 2).unwrap(), 6);
        assert!(k_ammc_asymptotic(2, 2, 3, 0).is_err());
        assert!(k_ammc_asymptotic(2, 3, 1, 3).is_err());
    }

    #[test]
    fn ammc_formula_examples() {
        let a = ammc_asymptotic(2, 6, 1).unwrap();
        assert_eq!((a.case, a.value, a.k_star), (AmmcCase::Wide, 4, 1));
        let b = ammc_asymptotic(4, 5, 1).unwrap();
        assert_eq!((b.case, b.value, b.k_star), (AmmcCase::Narrow, 4, 2));
        for n in 1..=8 {
            assert_eq!(ammc_asymptotic(n, n, n).unwrap().value, 0);
        }
        assert!(ammc_asymptotic(2, 3, 3).is_err());
    }

    #[test]
    fn ammc_formula_is_the_max_over_ranks() {
        for n in 1..=12 {
            for m in 1..=12 {
                for t in 0..=n.min(m) {
                    let best = (0..=n.min(m))
                        .map(|k| k_ammc_asymptotic(n, m, t, k).unwrap())
                        .max()
                        .unwrap();
                    let a = ammc_asymptotic(n, m, t).unwrap();
                    assert_eq!(a.value, best, "n={n} m={m} t={t}");
                    assert_eq!(k_ammc_asymptotic(n, m, t, a.k_star).unwrap(), best);
                }
            }
        }
    }

    #[test]
    fn closed_forms_never_negative_and_vanish_for_large_k() {
        for n in 1..=20 {
            for m in 1..=20 {
                for t in 0..=n.min(m) {
                    assert!(ammc_asymptotic(n, m, t).unwrap().value >= 0);
                    for k in 0..=n.min(m) {
                        let c = k_ammc_asymptotic(n, m, t, k).unwrap();
                        assert!(c >= 0);
                        if k + t > m {
                            assert_eq!(c, 0, "n={n} m={m} t={t} k={k}");
                        }
                        let CapacityTerms { r, s, .. } = CapacityTerms::new(n, m, t, k).unwrap();
                        assert!(s <= r.min(k));
                    }
                }
            }
        }
    }

    #[test]
    fn fixed_q_leading_examples() {
        let a = ammc_fixed_q_leading(0.2, 0.6, 0.1, 100, 2).unwrap();
        assert_eq!(a.case, AmmcCase::Wide);
        assert!((a.leading - 0.04 * 1e4).abs() < 1e-9);
        let b = ammc_fixed_q_leading(0.5, 0.6, 0.1, 100, 2).unwrap();
        assert_eq!(b.case, AmmcCase::Narrow);
        assert!((b.leading - 0.0625 * 1e4).abs() < 1e-9);
        let ell = 10_000u64;
        for (nu, mu, tau) in [
            (0.2, 0.6, 0.1),
            (0.5, 0.6, 0.1),
            (0.4, 0.9, 0.3),
            (0.7, 0.8, 0.2),
        ] {
            let lead = ammc_fixed_q_leading(nu, mu, tau, ell, 2).unwrap().leading;
            let r = AsymptoticRegime::new(nu, mu, tau, ell).unwrap();
            let exact = ammc_asymptotic(r.n(), r.m(), r.t()).unwrap().value as f64;
            let l2 = (ell * ell) as f64;
            assert!(
                (lead / l2 - exact / l2).abs() <= 2.0 / ell as f64,
                "{nu} {mu} {tau}"
            );
        }
        assert!(ammc_fixed_q_leading(0.2, 0.6, 0.3, 10, 2).is_err());
    }

    #[test]
    fn bracket_properties() {
        let r = AsymptoticRegime::new(0.3, 0.7, 0.1, 1 << 10).unwrap();
        for k in [0, 10, 100, r.n()] {
            let b = k_ammc_fixed_q_bracket(&r, k, 2).unwrap();
            assert!(b.lower <= b.center && b.center <= b.upper);
            assert!(b.slack_upper < b.slack_lower);
            assert!(b.guaranteed);
            assert!(!k_ammc_fixed_q_bracket(&r, k, 3).unwrap().guaranteed);
        }
        let widths: Vec<f64> = [1u64 << 10, 1 << 12, 1 << 14]
            .iter()
            .map(|&ell| {
                let r = AsymptoticRegime::new(0.3, 0.7, 0.1, ell).unwrap();
                k_ammc_fixed_q_bracket(&r, r.n() / 2, 2).unwrap().width() / (ell * ell) as f64
            })
            .collect();
        assert!(widths.windows(2).all(|w| w[1] < w[0]), "{widths:?}");
    }

    #[test]
    fn zero_noise_capacity_is_log_of_subspace_count() {
        let ch = channel(2, 2, 2, 0);
        let full = exact_k_ammc_capacity(&ch, 1, BUDGET).unwrap();
        assert!((full.value_bits - 3f64.log2()).abs() < 1e-12);
        assert!(full.flags.contains(&"symmetry-check-pass".to_string()));
        for (q, n, m) in [(2u64, 2, 3), (3, 3, 2), (4, 2, 2)] {
            let ch = channel(q, n, m, 0);
            for k in 0..=n.min(m) {
                let expect = log_q(&gaussian_binomial(m, k, q), q);
                let red = reduced_k_ammc_capacity(&ch, k, BUDGET).unwrap();
                assert!((red.value_logq - expect).abs() < 1e-12);
                let mc = estimate_k_ammc_mi(&ch, k, 50, &SeedStream::new(1), 1).unwrap();
                assert!((mc.value_logq - expect).abs() < 1e-12);
                assert!(mc.stderr.unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_rank_input_carries_nothing() {
        let ch = channel(2, 2, 2, 1);
        assert!(
            exact_k_ammc_capacity(&ch, 0, BUDGET)
                .unwrap()
                .value_logq
                .abs()
                < 1e-12
        );
        assert!(
            reduced_k_ammc_capacity(&ch, 0, BUDGET)
                .unwrap()
                .value_logq
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn three_exact_routes_agree() {
        for (q, n, m, t) in [
            (2u64, 2, 2, 1),
            (2, 2, 3, 1),
            (3, 2, 2, 1),
            (2, 3, 2, 2),
            (2, 1, 2, 1),
        ] {
            let ch = channel(q, n, m, t);
            for k in 0..=n.min(m) {
                let full = exact_k_ammc_capacity(&ch, k, BUDGET).unwrap();
                let prof = input_rank_profile(&ch, k, BUDGET).unwrap();
                assert!(
                    (full.value_logq - prof.information).abs() < 1e-9,
                    "{q} {n} {m} {t} {k}"
                );
                assert!((prof.information_from_output() - prof.information).abs() < 1e-9);
                assert!(full.flags.contains(&"symmetry-check-pass".to_string()));
            }
        }
        let ch = Channel::new(
            ChannelParams::new(Field::prime(2).unwrap(), 2, 2, 1)
                .unwrap()
                .with_rank_at_most(),
        );
        for k in 0..=2 {
            let full = exact_k_ammc_capacity(&ch, k, BUDGET).unwrap();
            let prof = input_rank_profile(&ch, k, BUDGET).unwrap();
            assert!((full.value_logq - prof.information).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_capacities_within_trivial_bounds() {
        for (q, n, m, t) in [(2u64, 3, 3, 1), (3, 2, 3, 1), (2, 3, 2, 2)] {
            let ch = channel(q, n, m, t);
            for k in 0..=n.min(m) {
                let c = reduced_k_ammc_capacity(&ch, k, BUDGET).unwrap().value_logq;
                let inputs = log_q(&count_rank_matrices(n, m, k, q), q);
                let outputs = log_q(&num_bigint::BigUint::from(q).pow((n * m) as u32), q);
                assert!(c >= -1e-12 && c <= inputs.min(outputs) + 1e-12);
            }
        }
    }

    #[test]
    fn ugr_zero_noise_example() {
        // Without noise every subspace of F_2^2 is a distinct message: 5 of them.
        let sol = exact_ammc_capacity_ugr(&channel(2, 2, 2, 0), BUDGET).unwrap();
        assert!((sol.report.value_bits - 5f64.log2()).abs() < 1e-6);
        for (p, want) in sol.rank_distribution.iter().zip([0.2, 0.6, 0.2]) {
            assert!((p - want).abs() < 1e-6);
        }
        assert!((sol.best_single_rank() - 3f64.log2()).abs() < 1e-12);
        assert!(sol.gap <= UGR_GAP_TOLERANCE);
    }

    #[test]
    fn ugr_sandwich_small_grid() {
        for (q, n, m, t) in [
            (2u64, 2, 2, 1),
            (2, 3, 3, 1),
            (3, 2, 3, 0),
            (2, 2, 3, 2),
            (2, 1, 1, 0),
        ] {
            let sol = exact_ammc_capacity_ugr(&channel(q, n, m, t), BUDGET).unwrap();
            let c = sol.best_single_rank();
            let slack = ((n.min(m) + 1) as f64).ln() / (q as f64).ln();
            assert!(sol.report.value_logq >= c - 1e-9, "{q} {n} {m} {t}");
            assert!(sol.report.value_logq <= c + slack + 1e-9);
            let total: f64 = sol.rank_distribution.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_is_reproducible_and_worker_independent() {
        let ch = channel(3, 3, 3, 1);
        let s = SeedStream::new(5);
        let a = estimate_k_ammc_mi(&ch, 1, 2000, &s, 1).unwrap();
        let b = estimate_k_ammc_mi(&ch, 1, 2000, &s, 4).unwrap();
        assert_eq!(a, b);
        assert!(estimate_k_ammc_mi(&ch, 1, 0, &s, 1).is_err());
        assert!(estimate_k_ammc_mi(&ch, 1, 50, &s, 1)
            .unwrap()
            .flags
            .contains(&"few-trials".to_string()));
    }

    #[test]
    fn monte_carlo_large_field_example() {
        let ch = channel(101, 4, 4, 1);
        let est = estimate_k_ammc_mi(&ch, 2, 20_000, &SeedStream::new(17), 4).unwrap();
        assert!((est.value_logq - 2.0).abs() < 0.2, "{est:?}");
    }

    #[test]
    fn budget_errors() {
        let ch = channel(3, 3, 3, 2);
        assert!(matches!(
            exact_k_ammc_capacity(&ch, 1, BUDGET),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(matches!(
            input_rank_profile(&ch, 1, 100),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn report_json_shape() {
        let ch = channel(2, 2, 2, 1);
        let r = reduced_k_ammc_capacity(&ch, 1, BUDGET).unwrap();
        assert!((r.value_bits - r.value_logq).abs() < 1e-15);
        let ch4 = channel(4, 2, 2, 1);
        let r4 = reduced_k_ammc_capacity(&ch4, 1, BUDGET).unwrap();
        assert!((r4.value_bits - 2.0 * r4.value_logq).abs() < 1e-12);
    }
}
