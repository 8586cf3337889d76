//! Seeded, splittable random streams.
//!
//! Every stochastic routine takes its randomness from a [`SeedStream`]. A
//! stream is a ChaCha8 key; sub-streams are selected with the ChaCha stream
//! counter, so trial `i` of an experiment always sees the same bits no matter
//! how the trials are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use rand::RngCore;

/// The generator handed to samplers.
pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    key: [u8; 32],
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: ChaCha8Rng::seed_from_u64(seed).get_seed(),
        }
    }

    /// Independent generator for index `index` of this stream.
    pub fn substream(&self, index: u64) -> Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }

    /// A child stream for a separate purpose (domain separation by `tag`).
    pub fn derive(&self, tag: u64) -> SeedStream {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(tag);
        rng.set_word_pos(1 << 40);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        SeedStream { key }
    }
}

/// Runs `trials` independent trials and folds their results.
///
/// Trial `i` receives `stream.substream(i)`. `merge` must be commutative and
/// associative (count addition), which makes the output independent of
/// `workers`.
pub fn run_trials<T, I, S, M>(
    stream: &SeedStream,
    trials: u64,
    workers: usize,
    init: I,
    step: S,
    merge: M,
) -> T
where
    T: Send,
    I: Fn() -> T + Sync + Send,
    S: Fn(&mut T, u64, &mut Rng) + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    if workers <= 1 {
        let mut acc = init();
        for i in 0..trials {
            let mut rng = stream.substream(i);
            step(&mut acc, i, &mut rng);
        }
        return acc;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| {
        (0..trials)
            .into_par_iter()
            .fold(&init, |mut acc, i| {
                let mut rng = stream.substream(i);
                step(&mut acc, i, &mut rng);
                acc
            })
            .reduce(&init, &merge)
    })
}
