//! The additive-multiplicative matrix channel `Y = A(X + W)`.
//!
//! `A` is uniform over GL_n(F_q) and `W` is uniform over `n x m` matrices of
//! rank `t` (or of rank at most `t`). Besides sampling, this module computes
//! exact transition laws by enumeration at toy scale.

use std::collections::{BTreeMap, HashMap};

use crate::combinatorics::{count_invertible, count_rank_matrices};
use crate::error::{Error, Result};
use crate::gf::Field;
use crate::linalg::{
    all_invertible, all_rank_k_matrices, sample_invertible, sample_rank_k, Matrix, Subspace,
};
use crate::rng::{run_trials, RngCore, SeedStream};
use num_bigint::BigUint;
use num_traits::ToPrimitive;

/// Default cap on the number of elementary steps an enumeration may take.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelParams {
    pub field: Field,
    pub n: usize,
    pub m: usize,
    pub t: usize,
    /// `true`: rank(W) = t. `false`: rank(W) <= t, uniform over that set.
    pub exact_rank_noise: bool,
}

impl ChannelParams {
    pub fn new(field: Field, n: usize, m: usize, t: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameters("n and m must be positive".into()));
        }
        if t > n.min(m) {
            return Err(Error::InvalidParameters(format!(
                "t = {t} exceeds min(n, m) = {}",
                n.min(m)
            )));
        }
        Ok(Self {
            field,
            n,
            m,
            t,
            exact_rank_noise: true,
        })
    }

    pub fn with_rank_at_most(mut self) -> Self {
        self.exact_rank_noise = false;
        self
    }

    pub fn q(&self) -> u64 {
        self.field.order() as u64
    }

    pub fn max_rank(&self) -> usize {
        self.n.min(self.m)
    }

    fn noise_ranks(&self) -> std::ops::RangeInclusive<usize> {
        if self.exact_rank_noise {
            self.t..=self.t
        } else {
            0..=self.t
        }
    }

    /// Number of equally likely noise matrices.
    pub fn noise_support(&self) -> BigUint {
        self.noise_ranks()
            .map(|j| count_rank_matrices(self.n, self.m, j, self.q()))
            .sum()
    }
}

/// One channel use with its sufficient statistic `(r, s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransmissionTrace {
    pub x: Matrix,
    pub w: Matrix,
    pub a: Matrix,
    pub y: Matrix,
    /// rank(Y)
    pub r: usize,
    /// dim(row(X) ∩ row(Y))
    pub s: usize,
}

/// An executable AMMC instance.
#[derive(Debug, Clone)]
pub struct Channel {
    params: ChannelParams,
    /// Cumulative law of rank(W) for the rank-at-most-t variant.
    noise_rank_cdf: Vec<f64>,
}

impl Channel {
    pub fn new(params: ChannelParams) -> Self {
        let weights: Vec<BigUint> = params
            .noise_ranks()
            .map(|j| count_rank_matrices(params.n, params.m, j, params.q()))
            .collect();
        let total: BigUint = weights.iter().sum();
        let mut acc = BigUint::default();
        let noise_rank_cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                ratio(&acc, &total)
            })
            .collect();
        Self {
            params,
            noise_rank_cdf,
        }
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn field(&self) -> &Field {
        &self.params.field
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        let p = &self.params;
        if x.field() != &p.field {
            return Err(Error::FieldMismatch);
        }
        if (x.n_rows(), x.n_cols()) != (p.n, p.m) {
            return Err(Error::ShapeMismatch(format!(
                "input is {}x{}, channel expects {}x{}",
                x.n_rows(),
                x.n_cols(),
                p.n,
                p.m
            )));
        }
        Ok(())
    }

    pub fn sample_noise<R: RngCore + ?Sized>(&self, rng: &mut R) -> Matrix {
        let p = &self.params;
        let rank = if p.exact_rank_noise {
            p.t
        } else {
            let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            let idx = self
                .noise_rank_cdf
                .iter()
                .position(|&c| u < c)
                .unwrap_or(p.t);
            idx.min(p.t)
        };
        sample_rank_k(&p.field, p.n, p.m, rank, rng).expect("rank within range")
    }

    /// One use of the channel: draws `W`, then `A`.
    pub fn transmit<R: RngCore + ?Sized>(
        &self,
        x: &Matrix,
        rng: &mut R,
    ) -> Result<TransmissionTrace> {
        self.check_input(x)?;
        let w = self.sample_noise(rng);
        let a = sample_invertible(&self.params.field, self.params.n, rng);
        trace(x, a, w)
    }

    /// Replays a channel use with a given transfer matrix `a` and noise `w`.
    pub fn transmit_with(&self, x: &Matrix, a: &Matrix, w: &Matrix) -> Result<TransmissionTrace> {
        self.check_input(x)?;
        self.check_input(w)?;
        let p = &self.params;
        if (a.n_rows(), a.n_cols()) != (p.n, p.n) || a.rank() != p.n {
            return Err(Error::InvalidParameters(
                "A must be an invertible n x n matrix".into(),
            ));
        }
        let rw = w.rank();
        if !p.noise_ranks().contains(&rw) {
            return Err(Error::InvalidParameters(format!(
                "noise has rank {rw}, channel has t = {}",
                p.t
            )));
        }
        trace(x, a.clone(), w.clone())
    }

    /// Exact `P(Y | X)` by enumerating every pair `(A, W)`.
    pub fn exact_transition_distribution(
        &self,
        x: &Matrix,
        budget: u64,
    ) -> Result<ExactDistribution> {
        self.check_input(x)?;
        let p = &self.params;
        let work = count_invertible(p.n, p.q()) * p.noise_support();
        check_budget(&work, budget)?;
        let gl = all_invertible(&p.field, p.n);
        let mut counts: HashMap<Matrix, u64> = HashMap::new();
        let mut total = 0u64;
        for w in self.all_noise() {
            let z = x.add(&w)?;
            for a in &gl {
                *counts.entry(a.mul(&z)?).or_insert(0) += 1;
                total += 1;
            }
        }
        Ok(ExactDistribution {
            denominator: total,
            counts,
        })
    }

    /// Every noise matrix the channel can draw, each equally likely.
    pub fn all_noise(&self) -> Vec<Matrix> {
        let p = &self.params;
        p.noise_ranks()
            .flat_map(|j| all_rank_k_matrices(&p.field, p.n, p.m, j))
            .collect()
    }

    /// Exact law of `row(X + W)` for a fixed input, by enumerating `W` only.
    ///
    /// Since `A` is uniform and invertible, `Y` given `row(X + W) = V` is
    /// uniform over the matrices with row space `V`.
    pub fn output_row_space_law(&self, x: &Matrix, budget: u64) -> Result<RowSpaceLaw> {
        self.check_input(x)?;
        check_budget(&self.params.noise_support(), budget)?;
        let input_space = x.row_space();
        let mut by_space: HashMap<Subspace, u64> = HashMap::new();
        let mut statistic: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        let mut total = 0u64;
        for w in self.all_noise() {
            let v = x.add(&w)?.row_space();
            let s = input_space.intersection_dim(&v)?;
            *statistic.entry((v.dim(), s)).or_insert(0) += 1;
            *by_space.entry(v).or_insert(0) += 1;
            total += 1;
        }
        Ok(RowSpaceLaw {
            total,
            by_space,
            statistic,
        })
    }

    /// Monte-Carlo tally of `(r, s)` for uniform rank-`k` inputs.
    pub fn transition_statistic_distribution(
        &self,
        k: usize,
        trials: u64,
        stream: &SeedStream,
        workers: usize,
    ) -> Result<StatisticTally> {
        let p = &self.params;
        let max = p.max_rank();
        if k > max {
            return Err(Error::RankOutOfRange { k, max });
        }
        let counts = run_trials(
            stream,
            trials,
            workers,
            BTreeMap::<(usize, usize), u64>::new,
            |acc, _, rng| {
                let x = sample_rank_k(&p.field, p.n, p.m, k, rng).expect("k in range");
                let tr = self.transmit(&x, rng).expect("shapes agree");
                *acc.entry((tr.r, tr.s)).or_insert(0) += 1;
            },
            merge_counts,
        );
        Ok(StatisticTally {
            trials,
            counts,
            predicted: predicted_statistic(p.n, p.m, p.t, k),
        })
    }
}

fn trace(x: &Matrix, a: Matrix, w: Matrix) -> Result<TransmissionTrace> {
    let y = a.mul(&x.add(&w)?)?;
    let ry = y.row_space();
    let s = x.row_space().intersection_dim(&ry)?;
    Ok(TransmissionTrace {
        x: x.clone(),
        w,
        a,
        r: ry.dim(),
        s,
        y,
    })
}

pub(crate) fn merge_counts<K: Ord>(
    mut a: BTreeMap<K, u64>,
    b: BTreeMap<K, u64>,
) -> BTreeMap<K, u64> {
    for (key, v) in b {
        *a.entry(key).or_insert(0) += v;
    }
    a
}

pub(crate) fn check_budget(work: &BigUint, budget: u64) -> Result<()> {
    if *work > BigUint::from(budget) {
        return Err(Error::BudgetExceeded {
            required: work.to_string(),
            limit: budget,
        });
    }
    Ok(())
}

pub(crate) fn ratio(a: &BigUint, b: &BigUint) -> f64 {
    let shift = b.bits().saturating_sub(60);
    let (a, b) = (a >> shift, b >> shift);
    a.to_f64().unwrap_or(f64::NAN) / b.to_f64().unwrap_or(f64::NAN)
}

/// The generic `(rank(Y), dim(row X ∩ row Y))` for rank-`k` inputs:
/// `(min{t+k, m, n}, min{k, n - (t - δ)})` with `δ = max{0, k + t - m}`.
pub fn predicted_statistic(n: usize, m: usize, t: usize, k: usize) -> (usize, usize) {
    let delta = (k + t).saturating_sub(m);
    ((t + k).min(m).min(n), k.min(n + delta - t))
}

/// Exact transition law `P(Y | X)` with a common denominator.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub denominator: u64,
    pub counts: HashMap<Matrix, u64>,
}

impl ExactDistribution {
    pub fn probability(&self, y: &Matrix) -> f64 {
        self.counts.get(y).copied().unwrap_or(0) as f64 / self.denominator as f64
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    /// Entropy in base-q units.
    pub fn entropy(&self, q: u64) -> f64 {
        entropy_of_counts(self.counts.values().copied(), self.denominator, q)
    }
}

/// Exact law of the output row space for a fixed input.
#[derive(Debug, Clone)]
pub struct RowSpaceLaw {
    pub total: u64,
    pub by_space: HashMap<Subspace, u64>,
    /// Counts of `(r, s)`.
    pub statistic: BTreeMap<(usize, usize), u64>,
}

/// Empirical `(r, s)` counts from the Monte-Carlo driver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatisticTally {
    pub trials: u64,
    pub counts: BTreeMap<(usize, usize), u64>,
    pub predicted: (usize, usize),
}

impl StatisticTally {
    pub fn frequency(&self, pair: (usize, usize)) -> f64 {
        self.counts.get(&pair).copied().unwrap_or(0) as f64 / self.trials as f64
    }

    /// Most frequent pair (ties broken towards the smaller pair).
    pub fn mode(&self) -> Option<(usize, usize)> {
        self.counts
            .iter()
            .fold(
                None,
                |best: Option<((usize, usize), u64)>, (&k, &v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((k, v)),
                },
            )
            .map(|(k, _)| k)
    }
}

/// `-sum (c/total) log_q (c/total)`. Counts are summed in sorted order so the
/// result does not depend on hash-map iteration order.
pub(crate) fn entropy_of_counts(counts: impl Iterator<Item = u64>, total: u64, q: u64) -> f64 {
    let ln_q = (q as f64).ln();
    let total = total as f64;
    let mut counts: Vec<u64> = counts.filter(|&c| c > 0).collect();
    counts.sort_unstable();
    -counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
        / ln_q
}
