//! Summation, running statistics and seeded generator plumbing shared by the
//! enumeration and Monte Carlo code.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Seeded generator for a top-level call.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from `seed`.
///
/// Streams with different indices never overlap, so parallel tasks that each
/// take their own substream produce the same numbers regardless of scheduling.
pub fn substream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn sum(iter: impl IntoIterator<Item = f64>) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl From<&RunningStats> for Estimate {
    fn from(s: &RunningStats) -> Self {
        Estimate {
            mean: s.mean(),
            std_error: s.std_error(),
        }
    }
}

impl Estimate {
    /// Whether `value` lies within `z` standard errors (ties at zero SE count).
    pub fn within(&self, value: f64, z: f64) -> bool {
        (self.mean - value).abs() <= z * self.std_error + 1e-12
    }
}

/// Two-sample z-score for a difference of means.
///
/// Both standard errors zero: the score is 0 if the means agree to 1e-12 and
/// infinite otherwise.
pub fn z_score(mean_a: f64, se_a: f64, mean_b: f64, se_b: f64) -> f64 {
    let diff = (mean_a - mean_b).abs();
    let se = (se_a * se_a + se_b * se_b).sqrt();
    if se == 0.0 {
        if diff <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / se
    }
}

/// Decimal rendering with 17 significant digits.
///
/// Seventeen significant digits identify every finite `f64`, so parsing the
/// output returns the original value.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `base^exp` with the convention `0^0 = 1`.
#[inline]
pub(crate) fn powu(base: f64, exp: u32) -> f64 {
    match exp {
        0 => 1.0,
        1 => base,
        2 => base * base,
        _ => base.powi(exp as i32),
    }
}

/// `n^k` as a float, for budget checks.
pub(crate) fn pow_count(n: usize, k: usize) -> f64 {
    (n as f64).powi(k as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-25);
    }

    #[test]
    fn running_stats_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let s: RunningStats = xs.iter().copied().collect();
        assert_eq!(s.mean(), 3.75);
        let var = xs.iter().map(|x| (x - 3.75f64).powi(2)).sum::<f64>() / 3.0;
        assert!((s.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 123456.789] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn substreams_differ_and_repeat() {
        use rand::Rng as _;
        let a: u64 = substream(7, 0).random();
        let b: u64 = substream(7, 1).random();
        let a2: u64 = substream(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
