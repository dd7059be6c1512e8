use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Identifier recorded in checkpoints and reports for the generator below.
pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64/stream-v1";

/// Named stream ids. Every subsystem draws from its own stream so that,
/// for a fixed seed, changing one subsystem never shifts another's draws.
pub mod streams {
    pub const DATASET: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const PROBE: u64 = 4;
    pub const BENCH: u64 = 5;
    pub const BOUNDS: u64 = 6;
}

/// Seeded, splittable random stream: ChaCha8 keyed by `seed`, with the
/// ChaCha stream counter set to `stream_id`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream sharing this seed; `sub` is mixed into the stream id.
    pub fn derive(&self, sub: u64) -> RngStream {
        RngStream::new(self.seed, mix_stream(self.stream_id, sub))
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        // Fisher-Yates written out so the draw sequence is pinned here
        // rather than to a crate's internal algorithm choice.
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

/// SplitMix64 finalizer over the pair.
pub(crate) fn mix_stream(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rademacher vector of length `n`. Indices listed in `zeroed` are set to 0;
/// every other entry is ±1 with probability ½.
///
/// One sign is drawn per index whether or not it is zeroed, so the stream
/// position after the call depends only on `n`.
pub fn rademacher(rng: &mut RngStream, n: usize, zeroed: Option<&[usize]>) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut bits = 0u64;
    for i in 0..n {
        if i % 64 == 0 {
            bits = rng.next_u64();
        }
        out.push(if bits & 1 == 1 { 1.0 } else { -1.0 });
        bits >>= 1;
    }
    if let Some(idx) = zeroed {
        for &i in idx {
            if i < n {
                out[i] = 0.0;
            }
        }
    }
    out
}

/// Rademacher vector supported on `support` only (zero elsewhere).
pub fn rademacher_on(rng: &mut RngStream, n: usize, support: &[usize]) -> Vec<f64> {
    let mut in_support = vec![false; n];
    for &i in support {
        if i < n {
            in_support[i] = true;
        }
    }
    let zeroed: Vec<usize> = (0..n).filter(|&i| !in_support[i]).collect();
    rademacher(rng, n, Some(&zeroed))
}
