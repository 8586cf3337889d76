//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ammc_core::capacity::{
    ammc_asymptotic, estimate_k_ammc_mi, exact_ammc_capacity_ugr, exact_k_ammc_capacity,
    k_ammc_asymptotic, k_ammc_fixed_q_bracket, reduced_k_ammc_capacity, AsymptoticRegime,
};
use ammc_core::channel::DEFAULT_ENUMERATION_BUDGET;
use ammc_core::coding::{decode, encode, failure_rate, scheme_rate, CodeLayout};
use ammc_core::combinatorics::{
    count_compatible_inputs, count_invertible, count_rank_matrices,
    count_subspaces_with_intersection, gaussian_binomial,
};
use ammc_core::linalg::{
    all_matrices, sample_invertible, sample_rank_k, sample_uniform_matrix, sample_uniform_subspace,
};
use ammc_core::{Channel, ChannelParams, Field, Matrix, SeedStream, Subspace};
use num_bigint::BigUint;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const WORKERS: usize = 4;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn channel(q: u64, n: usize, m: usize, t: usize) -> Channel {
    Channel::new(ChannelParams::new(Field::with_order(q).unwrap(), n, m, t).unwrap())
}

fn fixture(name: &str) -> Matrix {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name]
        .iter()
        .collect();
    Matrix::parse(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let el = start.elapsed();
    (
        el < limit,
        format!("{:.2}s of {:.0}s", el.as_secs_f64(), limit.as_secs_f64()),
    )
}

fn fixture_replay() -> Outcome {
    let start = Instant::now();
    let (x, a, w, y) = (
        fixture("rlnc_x.txt"),
        fixture("rlnc_a.txt"),
        fixture("rlnc_w.txt"),
        fixture("rlnc_y.txt"),
    );
    let ch = channel(2, 6, 6, w.rank());
    let out = ch.transmit_with(&x, &a, &w).unwrap();
    let (fast, time) = within(Duration::from_secs(1), start);
    outcome(
        out.y == y && x.rank() == 3 && fast,
        format!("Y matches: {}, rank(X) = {}, {time}", out.y == y, x.rank()),
    )
}

fn brute_subspaces(field: &Field, m: usize) -> Vec<Subspace> {
    let mut seen: Vec<Subspace> = Vec::new();
    for mat in all_matrices(field, m, m) {
        let s = mat.row_space();
        if !seen.contains(&s) {
            seen.push(s);
        }
    }
    seen
}

fn counting_oracle() -> Outcome {
    let start = Instant::now();
    let f = Field::prime(2).unwrap();
    let mut mismatches = Vec::new();
    for n in 0..=3usize {
        for m in 0..=3usize {
            let mut by_rank = [0u64; 4];
            for mat in all_matrices(&f, n, m) {
                by_rank[mat.rank()] += 1;
            }
            for (k, &c) in by_rank.iter().enumerate() {
                if count_rank_matrices(n, m, k, 2) != BigUint::from(c) {
                    mismatches.push(format!("rho({n},{m},{k})"));
                }
            }
        }
    }
    for n in 0..=3usize {
        let inv = all_matrices(&f, n, n).filter(|a| a.rank() == n).count() as u64;
        if count_invertible(n, 2) != BigUint::from(inv) {
            mismatches.push(format!("GL_{n}"));
        }
    }
    for m in 0..=3usize {
        let spaces = brute_subspaces(&f, m);
        for b in 0..=m {
            let c = spaces.iter().filter(|s| s.dim() == b).count() as u64;
            if gaussian_binomial(m, b, 2) != BigUint::from(c) {
                mismatches.push(format!("[{m} {b}]"));
            }
        }
        for fixed in &spaces {
            let t = fixed.dim();
            for k in 0..=m {
                for z in 0..=k {
                    let c = spaces
                        .iter()
                        .filter(|s| s.dim() == k && s.intersection_dim(fixed).unwrap() == z)
                        .count() as u64;
                    if count_subspaces_with_intersection(m, t, k, z, 2) != BigUint::from(c)
                        || count_compatible_inputs(m, t, k, z, 2) != BigUint::from(c)
                    {
                        mismatches.push(format!("profile m={m} t={t} k={k} z={z}"));
                    }
                }
            }
        }
    }
    let (fast, time) = within(Duration::from_secs(10), start);
    outcome(
        mismatches.is_empty() && fast,
        format!("{} mismatches {mismatches:?}, {time}", mismatches.len()),
    )
}

/// Taken literally: strict lower bound for every 1 <= b <= a <= 12.
fn qbinomial_bounds() -> Outcome {
    let mut failures = Vec::new();
    for q in [2u64, 3, 4, 5, 8, 9] {
        for a in 1..=12usize {
            for b in 1..=a {
                let g = gaussian_binomial(a, b, q);
                let base = BigUint::from(q).pow(((a - b) * b) as u32);
                if !(base < g && g <= &base * 4u32) {
                    failures.push((q, a, b));
                }
            }
        }
    }
    let all_diagonal = failures.iter().all(|&(_, a, b)| a == b);
    outcome(
        failures.is_empty(),
        format!(
            "{} violations{}; first {:?}",
            failures.len(),
            if all_diagonal {
                " (all at a = b, where both sides equal 1)"
            } else {
                ""
            },
            failures.first()
        ),
    )
}

fn exact_cross_check() -> Outcome {
    let start = Instant::now();
    let ch = channel(2, 2, 2, 1);
    let full = exact_k_ammc_capacity(&ch, 1, DEFAULT_ENUMERATION_BUDGET)
        .unwrap()
        .value_logq;
    let reduced = reduced_k_ammc_capacity(&ch, 1, DEFAULT_ENUMERATION_BUDGET)
        .unwrap()
        .value_logq;
    let mc = estimate_k_ammc_mi(&ch, 1, 100_000, &SeedStream::new(0xacce55), WORKERS).unwrap();
    let se = mc.stderr.unwrap();
    let agree = (full - reduced).abs() <= 1e-9;
    let near = (mc.value_logq - full).abs() <= 3.0 * se;
    let (fast, time) = within(Duration::from_secs(60), start);
    outcome(
        agree && near && fast,
        format!(
            "enumeration {full:.12}, reduction {reduced:.12}, estimate {:.5} ± {se:.5}, {time}",
            mc.value_logq
        ),
    )
}

fn ugr_sandwich() -> Outcome {
    let mut violations = Vec::new();
    let mut instances = 0;
    for q in [2u64, 3] {
        for n in 1..=3usize {
            for m in 1..=3usize {
                for t in 0..=n.min(m) {
                    instances += 1;
                    let sol =
                        exact_ammc_capacity_ugr(&channel(q, n, m, t), DEFAULT_ENUMERATION_BUDGET)
                            .unwrap();
                    let best = sol.best_single_rank();
                    let slack = ((n.min(m) + 1) as f64).ln() / (q as f64).ln();
                    let c = sol.report.value_logq;
                    if !(best <= c + 1e-9 && c <= best + slack + 1e-9) {
                        violations.push((q, n, m, t, best, c));
                    }
                }
            }
        }
    }
    outcome(
        violations.is_empty(),
        format!("{instances} instances, violations {violations:?}"),
    )
}

fn generic_dimensions() -> Outcome {
    let start = Instant::now();
    let tally = channel(101, 4, 4, 1)
        .transition_statistic_distribution(2, 10_000, &SeedStream::new(606), WORKERS)
        .unwrap();
    let p = tally.frequency((3, 2));
    let (fast, time) = within(Duration::from_secs(60), start);
    outcome(p >= 0.95 && fast, format!("P(r=3, s=2) = {p:.4}, {time}"))
}

fn large_q_convergence() -> Outcome {
    let limit = k_ammc_asymptotic(4, 6, 1, 2).unwrap() as f64;
    let est: Vec<f64> = [2u64, 17, 257]
        .iter()
        .map(|&q| {
            estimate_k_ammc_mi(
                &channel(q, 4, 6, 1),
                2,
                20_000,
                &SeedStream::new(707).derive(q),
                WORKERS,
            )
            .unwrap()
            .value_logq
        })
        .collect();
    let gaps: Vec<f64> = est.iter().map(|e| (e - limit).abs()).collect();
    let approaching = gaps.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        limit == 6.0 && approaching && gaps[2] <= 0.3,
        format!("limit {limit}, estimates at q = 2, 17, 257: {est:.4?}"),
    )
}

fn chi_square_p(counts: &HashMap<Matrix, u64>, cells: usize, draws: u64) -> f64 {
    let expected = draws as f64 / cells as f64;
    let stat: f64 = counts
        .values()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum::<f64>()
        + (cells - counts.len()) as f64 * expected;
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

fn sampler_uniformity() -> Outcome {
    let f = Field::prime(2).unwrap();
    let s = SeedStream::new(808);
    let mut rng = s.substream(0);
    let mut tally =
        |draws: u64, cells: usize, mut draw: Box<dyn FnMut(&mut ammc_core::rng::Rng) -> Matrix>| {
            let mut counts: HashMap<Matrix, u64> = HashMap::new();
            for _ in 0..draws {
                *counts.entry(draw(&mut rng)).or_insert(0) += 1;
            }
            (counts.len() == cells, chi_square_p(&counts, cells, draws))
        };
    let f1 = f.clone();
    let rank1 = tally(
        9000,
        9,
        Box::new(move |r| sample_rank_k(&f1, 2, 2, 1, r).unwrap()),
    );
    let f2 = f.clone();
    let gl = tally(6000, 6, Box::new(move |r| sample_invertible(&f2, 2, r)));
    let f3 = f.clone();
    let lines = tally(
        3000,
        3,
        Box::new(move |r| {
            sample_uniform_subspace(&f3, 2, 1, r)
                .unwrap()
                .basis()
                .clone()
        }),
    );
    let ok = [rank1, gl, lines]
        .iter()
        .all(|&(support, p)| support && p >= 1e-3);
    outcome(
        ok,
        format!(
            "p-values: rank-1 {:.4}, GL_2 {:.4}, lines {:.4}",
            rank1.1, gl.1, lines.1
        ),
    )
}

fn coding_scheme() -> Outcome {
    let layout =
        CodeLayout::new(ChannelParams::new(Field::with_order(1021).unwrap(), 4, 8, 1).unwrap());
    let rep = failure_rate(&layout, 1000, &SeedStream::new(909), WORKERS).unwrap();

    // Successes recover U exactly, checked outside the tally as well.
    let ch = Channel::new(layout.params.clone());
    let mut rng = SeedStream::new(910).substream(0);
    let mut wrong = 0;
    for _ in 0..200 {
        let u = sample_uniform_matrix(&layout.params.field, layout.x, layout.y, &mut rng);
        let y = ch
            .transmit(&encode(&layout, &u).unwrap(), &mut rng)
            .unwrap()
            .y;
        if matches!(decode(&layout, &y), Ok(v) if v != u) {
            wrong += 1;
        }
    }

    let mut rate_mismatch = Vec::new();
    for n in 1..=12usize {
        for m in 1..=12usize {
            for t in 0..=n.min(m) {
                let l =
                    CodeLayout::new(ChannelParams::new(Field::prime(2).unwrap(), n, m, t).unwrap());
                let symbols = scheme_rate(&l).unwrap().symbols as i64;
                if symbols != ammc_asymptotic(n, m, t).unwrap().value {
                    rate_mismatch.push((n, m, t));
                }
            }
        }
    }
    outcome(
        rep.rate <= 0.05 && rep.miscorrections == 0 && wrong == 0 && rate_mismatch.is_empty(),
        format!(
            "failure rate {:.4} ({} of {}), miscorrections {}, rate mismatches {}",
            rep.rate,
            rep.failures,
            rep.trials,
            rep.miscorrections + wrong,
            rate_mismatch.len()
        ),
    )
}

fn bracket_consistency() -> Outcome {
    let mut problems = Vec::new();
    let regimes = [
        (0.3, 0.7, 0.1),
        (0.5, 0.6, 0.2),
        (0.4, 0.9, 0.4),
        (0.8, 0.5, 0.25),
        (0.6, 0.6, 0.3),
    ];
    for &(nu, mu, tau) in &regimes {
        for q in [2u64, 3, 16] {
            let mut widths = Vec::new();
            for ell in [1u64 << 10, 1 << 12, 1 << 14] {
                let r = AsymptoticRegime::new(nu, mu, tau, ell).unwrap();
                let kmax = r.n().min(r.m());
                for k in [0, kmax / 3, kmax / 2, kmax] {
                    let b = k_ammc_fixed_q_bracket(&r, k, q).unwrap();
                    let center = k_ammc_asymptotic(r.n(), r.m(), r.t(), k).unwrap() as f64;
                    if !(b.lower <= center && center <= b.upper) {
                        problems.push(format!(
                            "bracket misses center at {nu},{mu},{tau} ell={ell} k={k} q={q}"
                        ));
                    }
                }
                let b = k_ammc_fixed_q_bracket(&r, kmax / 2, q).unwrap();
                widths.push(b.width() / (ell * ell) as f64);
            }
            if !widths.windows(2).all(|w| w[1] < w[0]) {
                problems.push(format!(
                    "width/ell^2 not decreasing at {nu},{mu},{tau} q={q}: {widths:?}"
                ));
            }
        }
    }

    // Small-ell window: sampled rank never exceeds the generic value and
    // (r, s) stay within 13 log_q ell of the generic pair.
    let r = AsymptoticRegime::new(0.5, 0.75, 0.25, 16).unwrap();
    let (n, m, t) = (r.n(), r.m(), r.t());
    let window = r.f(2);
    for k in [2, 4, 6] {
        let tally = channel(2, n, m, t)
            .transition_statistic_distribution(k, 500, &SeedStream::new(1010), WORKERS)
            .unwrap();
        let (pr, ps) = tally.predicted;
        for &(rr, ss) in tally.counts.keys() {
            if rr > pr || (pr - rr) as f64 > window || ss.abs_diff(ps) as f64 > window {
                problems.push(format!(
                    "window violated at k={k}: ({rr},{ss}) vs ({pr},{ps})"
                ));
            }
        }
    }
    outcome(
        problems.is_empty(),
        format!("{} problems {:?}", problems.len(), problems.first()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("fixture replay", fixture_replay),
        ("counting oracle equivalence", counting_oracle),
        ("q-binomial bound sweep", qbinomial_bounds),
        ("exact capacity cross-check", exact_cross_check),
        ("uniform-given-rank sandwich", ugr_sandwich),
        ("generic-dimension concentration", generic_dimensions),
        ("large-field convergence", large_q_convergence),
        ("sampler uniformity", sampler_uniformity),
        ("coding scheme", coding_scheme),
        ("fixed-field bracket consistency", bracket_consistency),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
