//! Deterministic pseudo-random numbers.
//!
//! Every stochastic step in the pipeline (phantom generation, rotation angles,
//! crop offsets, fold assignment, bootstrap resampling, SGD batch order,
//! weight initialisation) draws from [`Xoshiro256`], a xoshiro256** generator
//! whose 256-bit state is expanded from a 64-bit seed with SplitMix64. The
//! algorithm is fixed so that streams are reproducible across platforms and
//! across re-implementations in other languages:
//!
//! * `next_u64`: xoshiro256** (Blackman & Vigna, 2018).
//! * `next_f64`: the top 53 bits of `next_u64`, scaled by 2^-53, giving `[0, 1)`.
//! * `below(n)`: multiply-shift, `(next_u64 * n) >> 64` in 128-bit arithmetic.
//! * `gaussian`: Box-Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`; one draw per pair.
//! * `shuffle`: Fisher-Yates from the back, `j = below(i + 1)`.

/// SplitMix64 step. Used for seeding and for deriving independent sub-streams.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream index into a new seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut s = seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut s)
}

/// 64-bit FNV-1a hash of a string; stable across platforms and releases.
pub fn fnv1a64(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Per-patient stream seed: `seed XOR fnv1a64(patient_id)`.
pub fn patient_seed(seed: u64, patient_id: &str) -> u64 {
    seed ^ fnv1a64(patient_id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Xoshiro256 {
    s: [u64; 4],
}

impl Xoshiro256 {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`. Returns 0 when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Standard normal draw.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
