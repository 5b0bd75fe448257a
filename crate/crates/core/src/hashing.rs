//! Seeded k-wise independent hash families and universe reduction.
//!
//! A [`HashFamily`] is a random polynomial of degree `k - 1` over the
//! Mersenne field `GF(2^61 - 1)`; evaluating it at `k` distinct points gives
//! independent, uniform field elements. The low-order bits are kept to land
//! in a power-of-two range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ConfigError;

/// The Mersenne prime `2^61 - 1`.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Largest universe (in bits) a family can take as input without folding.
pub const MAX_UNIVERSE_BITS: u32 = 61;

#[inline]
fn reduce_mersenne(x: u128) -> u64 {
    let lo = (x as u64) & MERSENNE_61;
    let hi = (x >> 61) as u64;
    // hi < 2^67 / 2^61 * ... fits after one more fold
    let s = lo + (hi & MERSENNE_61) + (hi >> 61);
    let s = (s & MERSENNE_61) + (s >> 61);
    if s >= MERSENNE_61 {
        s - MERSENNE_61
    } else {
        s
    }
}

#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    reduce_mersenne(a as u128 * b as u128)
}

#[inline]
fn add_mod(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MERSENNE_61 {
        s - MERSENNE_61
    } else {
        s
    }
}

#[inline]
fn fold_key(x: u64) -> u64 {
    // Inputs are expected below 2^61 - 1; fold anything larger into the field.
    let s = (x & MERSENNE_61) + (x >> 61);
    if s >= MERSENNE_61 {
        s - MERSENNE_61
    } else {
        s
    }
}

/// A degree-`(k-1)` polynomial over `GF(2^61 - 1)` truncated to a
/// power-of-two range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashFamily {
    coefficients: Vec<u64>,
    range_mask: u64,
    universe_bits: u32,
    seed: u64,
}

impl HashFamily {
    /// Draws a family of independence `k` into `[range)` from `seed`.
    pub fn new(k: usize, universe_bits: u32, range: u64, seed: u64) -> Result<Self, ConfigError> {
        if k == 0 {
            return Err(ConfigError::Invalid("independence k must be at least 1".into()));
        }
        if range == 0 || !range.is_power_of_two() {
            return Err(ConfigError::RangeNotPowerOfTwo(range));
        }
        if range > 1 << 60 {
            return Err(ConfigError::Invalid(format!("range {range} exceeds 2^60")));
        }
        if universe_bits == 0 || universe_bits > 64 {
            return Err(ConfigError::Invalid(format!("universe of {universe_bits} bits")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefficients = (0..k).map(|_| rng.random_range(0..MERSENNE_61)).collect();
        Ok(HashFamily {
            coefficients,
            range_mask: range - 1,
            universe_bits,
            seed,
        })
    }

    /// Builds a family from explicit coefficients, constant term first.
    pub fn from_coefficients(coefficients: Vec<u64>, range: u64) -> Result<Self, ConfigError> {
        if coefficients.is_empty() {
            return Err(ConfigError::Invalid("no coefficients".into()));
        }
        if range == 0 || !range.is_power_of_two() {
            return Err(ConfigError::RangeNotPowerOfTwo(range));
        }
        Ok(HashFamily {
            coefficients: coefficients.into_iter().map(|c| c % MERSENNE_61).collect(),
            range_mask: range - 1,
            universe_bits: MAX_UNIVERSE_BITS,
            seed: 0,
        })
    }

    pub fn independence(&self) -> usize {
        self.coefficients.len()
    }

    pub fn range(&self) -> u64 {
        self.range_mask + 1
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn universe_bits(&self) -> u32 {
        self.universe_bits
    }

    /// Raw field value before truncation to the range.
    #[inline]
    pub fn field_value(&self, x: u64) -> u64 {
        let x = fold_key(x);
        // Horner's rule with the accumulator kept below 2^61 + 8 rather than
        // fully reduced; one canonical reduction at the end.
        let mut acc = 0u64;
        for &c in self.coefficients.iter().rev() {
            let p = acc as u128 * x as u128;
            let s = (p as u64 & MERSENNE_61) + (p >> 61) as u64 + c;
            acc = (s & MERSENNE_61) + (s >> 61);
        }
        fold_key(acc)
    }

    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        self.field_value(x) & self.range_mask
    }
}

/// Pairwise-independent map from 64-bit keys into a `reduced_bits`-bit
/// universe.
///
/// The key is split into two 32-bit limbs and hashed with a random affine
/// form `a * hi + b * lo + c` over the Mersenne field, which is pairwise
/// independent over the whole 64-bit input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniverseReducer {
    a: u64,
    b: u64,
    c: u64,
    reduced_bits: u32,
    identity: bool,
}

impl UniverseReducer {
    pub fn new(reduced_bits: u32, seed: u64) -> Result<Self, ConfigError> {
        if reduced_bits == 0 || reduced_bits > 60 {
            return Err(ConfigError::Invalid(format!(
                "reduced universe of {reduced_bits} bits (must be 1..=60)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_ae11_u64);
        Ok(UniverseReducer {
            a: rng.random_range(1..MERSENNE_61),
            b: rng.random_range(1..MERSENNE_61),
            c: rng.random_range(0..MERSENNE_61),
            reduced_bits,
            identity: false,
        })
    }

    /// A reducer that passes keys through unchanged (masked to `bits`).
    pub fn identity(bits: u32) -> Self {
        UniverseReducer {
            a: 0,
            b: 1,
            c: 0,
            reduced_bits: bits.min(64),
            identity: true,
        }
    }

    /// Exponent-based sizing: a universe of `capacity^exponent`, capped at 60 bits.
    pub fn for_capacity(capacity: usize, exponent: u32, seed: u64) -> Result<Self, ConfigError> {
        let log = usize::BITS - capacity.max(2).saturating_sub(1).leading_zeros();
        Self::new((log * exponent).clamp(8, 60), seed)
    }

    pub fn reduced_bits(&self) -> u32 {
        self.reduced_bits
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if self.identity {
            return if self.reduced_bits >= 64 {
                x
            } else {
                x & ((1u64 << self.reduced_bits) - 1)
            };
        }
        let hi = x >> 32;
        let lo = x & 0xffff_ffff;
        let v = add_mod(add_mod(mul_mod(self.a, hi), mul_mod(self.b, lo)), self.c);
        v & ((1u64 << self.reduced_bits) - 1)
    }
}

/// Deterministic stream of derived seeds, so one user-facing seed can feed
/// every family a table needs.
#[derive(Clone, Debug)]
pub struct SeedStream(ChaCha8Rng);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_seed(&mut self) -> u64 {
        self.0.random()
    }
}
