//! Small numeric helpers shared across modules.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random number generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

/// The generator for a single seed, without stream splitting.
pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`.
///
/// Splitting rule: seed the generator with `seed ^ stream`, then discard one
/// `u64`. Parallel workers and per-chunk Monte Carlo draws use consecutive
/// stream indices, so results do not depend on how many threads run them.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed ^ stream);
    rng.next_u64();
    rng
}

/// A seed for sub-task `parts` of a run seeded with `seed`, mixed with
/// SplitMix64 so that nearby inputs give unrelated seeds.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(seed), |h, &p| mix(h ^ p))
}

const FIXED_SHIFT: i32 = 120;

/// Order-independent accumulator for nonnegative masses.
///
/// Each term is truncated to a multiple of 2^-120 and summed as an integer,
/// so the result does not depend on summation order. Terms must lie in
/// `[0, 128)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FixedSum(u128);

impl FixedSum {
    pub const ZERO: FixedSum = FixedSum(0);

    pub fn term(x: f64) -> u128 {
        debug_assert!((0.0..128.0).contains(&x), "mass term out of range: {x}");
        let scaled = x.max(0.0) * 2f64.powi(FIXED_SHIFT);
        scaled as u128
    }

    pub fn add(&mut self, x: f64) {
        self.0 += Self::term(x);
    }

    pub fn add_raw(&mut self, raw: u128) {
        self.0 += raw;
    }

    pub fn raw(self) -> u128 {
        self.0
    }

    pub fn from_raw(raw: u128) -> Self {
        FixedSum(raw)
    }

    pub fn value(self) -> f64 {
        self.0 as f64 * 2f64.powi(-FIXED_SHIFT)
    }
}

impl std::iter::FromIterator<f64> for FixedSum {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut s = FixedSum::ZERO;
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Sum of nonnegative masses, independent of order.
pub fn mass_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    terms.into_iter().collect::<FixedSum>().value()
}

/// Round to 12 significant decimal digits; used as the aggregation key for
/// distances so that float noise does not split atoms.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let exp = x.abs().log10().floor() as i32;
    let digits = 11 - exp;
    if digits >= 0 {
        let scale = 10f64.powi(digits);
        let r = (x * scale).round() / scale;
        if r.is_finite() {
            return r;
        }
        x
    } else {
        let scale = 10f64.powi(-digits);
        (x / scale).round() * scale
    }
}

/// Format with 17 significant digits in `%.17g` style (valid JSON number).
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        // JSON has no representation; callers validate before writing.
        return "null".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        // Rounding can carry into a new digit (9.99.. -> 10.0); still 17+ digits, fine.
        s
    } else {
        format!("{:.16e}", x)
    }
}

/// Sample mean and standard error with Welford accumulation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. parallel merge.
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
