//! Block coding scheme for the AMMC.
//!
//! The transmitted matrix is
//!
//! ```text
//! [ 0 | 0   | 0 ]   n - x rows
//! [ 0 | I_x | U ]   x rows
//!   t   x     y     columns
//! ```
//!
//! and the receiver row reduces `Y`. Decoding succeeds when the reduced form
//! has rank `t + x` with pivots exactly in columns `0..t+x`; `U` is then read
//! off to the right of the `I_x` block.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::capacity::ammc_asymptotic;
use crate::channel::{merge_counts, Channel, ChannelParams};
use crate::error::{Error, Result};
use crate::linalg::{sample_uniform_matrix, Matrix};
use crate::rng::{run_trials, SeedStream};

/// Block sizes of the scheme over a given channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeLayout {
    pub params: ChannelParams,
    /// Rows carrying data (`I_x` block).
    pub x: usize,
    /// Columns of `U`.
    pub y: usize,
}

impl CodeLayout {
    /// Capacity-matched layout: `x = n - t, y = m - n` when `m + t >= 2n`,
    /// otherwise `x = ⌊(m-t)/2⌋, y = ⌈(m-t)/2⌉`.
    pub fn new(params: ChannelParams) -> Self {
        let (n, m, t) = (params.n, params.m, params.t);
        let (x, y) = if m + t >= 2 * n {
            (n - t, m - n)
        } else {
            ((m - t) / 2, (m - t).div_ceil(2))
        };
        Self { params, x, y }
    }

    /// Shrinks the data rows by `margin`, widening `U` so that `x + y`
    /// stays `m - t`. Trades rate for fewer rank collisions; heuristic.
    pub fn with_margin(mut self, margin: usize) -> Result<Self> {
        if margin > self.x {
            return Err(Error::InvalidParameters(format!(
                "margin {margin} exceeds x = {}",
                self.x
            )));
        }
        self.x -= margin;
        self.y += margin;
        Ok(self)
    }

    /// Explicit block sizes; `x + y` must equal `m - t` and `x <= n - t`.
    pub fn with_blocks(params: ChannelParams, x: usize, y: usize) -> Result<Self> {
        if x + y != params.m - params.t || x > params.n - params.t {
            return Err(Error::InvalidParameters(format!(
                "blocks x={x}, y={y} do not fit n={}, m={}, t={}",
                params.n, params.m, params.t
            )));
        }
        Ok(Self { params, x, y })
    }

    fn t(&self) -> usize {
        self.params.t
    }
}

pub fn encode(layout: &CodeLayout, u: &Matrix) -> Result<Matrix> {
    let p = &layout.params;
    if u.field() != &p.field {
        return Err(Error::FieldMismatch);
    }
    if (u.n_rows(), u.n_cols()) != (layout.x, layout.y) {
        return Err(Error::ShapeMismatch(format!(
            "U is {}x{}, layout expects {}x{}",
            u.n_rows(),
            u.n_cols(),
            layout.x,
            layout.y
        )));
    }
    let mut x = Matrix::zeros(&p.field, p.n, p.m);
    let top = p.n - layout.x;
    for i in 0..layout.x {
        x.set(top + i, layout.t() + i, 1);
    }
    x.set_block(top, layout.t() + layout.x, u);
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeFailure {
    WrongRank,
    PivotPattern,
    ResidualRows,
}

impl DecodeFailure {
    pub fn label(self) -> &'static str {
        match self {
            DecodeFailure::WrongRank => "wrong-rank",
            DecodeFailure::PivotPattern => "pivot-pattern",
            DecodeFailure::ResidualRows => "residual-rows",
        }
    }
}

pub fn decode(layout: &CodeLayout, y: &Matrix) -> std::result::Result<Matrix, DecodeFailure> {
    let (t, x) = (layout.t(), layout.x);
    let z = y.rref();
    if z.rank != t + x {
        return Err(DecodeFailure::WrongRank);
    }
    if z.pivots.iter().copied().ne(0..t + x) {
        return Err(DecodeFailure::PivotPattern);
    }
    let m = &z.matrix;
    let rows_ok = (t..t + x).all(|i| (0..t).all(|j| m.get(i, j) == 0))
        && (t + x..m.n_rows()).all(|i| m.row(i).iter().all(|&v| v == 0));
    if !rows_ok {
        return Err(DecodeFailure::ResidualRows);
    }
    Ok(m.block(t, t + x, x, layout.y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureReport {
    pub trials: u64,
    pub failures: u64,
    /// Decodes that matched the pattern but returned the wrong `U`.
    pub miscorrections: u64,
    pub reasons: BTreeMap<DecodeFailure, u64>,
    pub rate: f64,
    pub stderr: f64,
}

#[derive(Default)]
struct Tally {
    failures: BTreeMap<DecodeFailure, u64>,
    miscorrections: u64,
}

/// Runs encode, transmit, decode `trials` times with uniform `U`.
pub fn failure_rate(
    layout: &CodeLayout,
    trials: u64,
    stream: &SeedStream,
    workers: usize,
) -> Result<FailureReport> {
    run_code_trials(layout, None, trials, stream, workers)
}

/// As [`failure_rate`], sending the same data matrix every time.
pub fn failure_rate_fixed(
    layout: &CodeLayout,
    data: &Matrix,
    trials: u64,
    stream: &SeedStream,
    workers: usize,
) -> Result<FailureReport> {
    encode(layout, data)?;
    run_code_trials(layout, Some(data), trials, stream, workers)
}

fn run_code_trials(
    layout: &CodeLayout,
    data: Option<&Matrix>,
    trials: u64,
    stream: &SeedStream,
    workers: usize,
) -> Result<FailureReport> {
    if trials == 0 {
        return Err(Error::InvalidParameters("trials must be at least 1".into()));
    }
    let channel = Channel::new(layout.params.clone());
    let field = &layout.params.field;
    let tally = run_trials(
        stream,
        trials,
        workers,
        Tally::default,
        |acc, _, rng| {
            let u = match data {
                Some(d) => d.clone(),
                None => sample_uniform_matrix(field, layout.x, layout.y, rng),
            };
            let x = encode(layout, &u).expect("layout shape");
            let y = channel.transmit(&x, rng).expect("layout shape").y;
            match decode(layout, &y) {
                Ok(v) if v == u => {}
                Ok(_) => acc.miscorrections += 1,
                Err(e) => *acc.failures.entry(e).or_insert(0) += 1,
            }
        },
        |a, b| Tally {
            failures: merge_counts(a.failures, b.failures),
            miscorrections: a.miscorrections + b.miscorrections,
        },
    );
    let failures: u64 = tally.failures.values().sum();
    let rate = failures as f64 / trials as f64;
    Ok(FailureReport {
        trials,
        failures,
        miscorrections: tally.miscorrections,
        reasons: tally.failures,
        rate,
        stderr: (rate * (1.0 - rate) / trials as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeRate {
    pub symbols: usize,
    /// `x·y` over the large-field AMMC capacity; 1 when both vanish.
    pub fraction_of_capacity: f64,
}

pub fn scheme_rate(layout: &CodeLayout) -> Result<SchemeRate> {
    let p = &layout.params;
    let cap = ammc_asymptotic(p.n, p.m, p.t)?.value;
    let symbols = layout.x * layout.y;
    let fraction_of_capacity = if cap == 0 && symbols == 0 {
        1.0
    } else {
        symbols as f64 / cap as f64
    };
    Ok(SchemeRate {
        symbols,
        fraction_of_capacity,
    })
}
