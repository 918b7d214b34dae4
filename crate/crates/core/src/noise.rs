//! Noise channels: distribution specs and counter-addressed random streams.
//!
//! Every draw is addressed by `(seed, channel, step)`. The ChaCha key comes
//! from the seed, the ChaCha stream id from the channel, and the word
//! position from the step, so any single step of any channel can be
//! regenerated without replaying the ones before it.

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Words reserved for each step inside one channel's stream.
const WORDS_PER_STEP: u128 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel(pub u64);

impl Channel {
    pub const PROCESS: Channel = Channel(1);
    pub const OBSERVATION: Channel = Channel(2);
    pub const THETA: Channel = Channel(3);
    pub const ETA: Channel = Channel(4);
    pub const INPUT: Channel = Channel(5);
    pub const TRUTH: Channel = Channel(6);
}

/// Per-`(seed, channel)` stream that can be positioned at any step.
#[derive(Clone)]
pub struct NoiseStream {
    base: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, channel: Channel) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(channel.0);
        NoiseStream { base }
    }

    /// Generator positioned at the first word reserved for `step`.
    pub fn at(&self, step: u64) -> StepRng {
        let mut rng = self.base.clone();
        rng.set_word_pos(step as u128 * WORDS_PER_STEP);
        StepRng { rng }
    }
}

/// Generator for a single step of a single channel.
pub struct StepRng {
    rng: ChaCha8Rng,
}

impl StepRng {
    /// Uniform draw on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    Uniform,
    Laplace,
    Zero,
}

impl NoiseFamily {
    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Uniform => "uniform",
            NoiseFamily::Laplace => "laplace",
            NoiseFamily::Zero => "zero",
        }
    }

    /// Distribution function of the zero-mean member with standard deviation `sd`.
    pub fn cdf(self, z: f64, sd: f64) -> f64 {
        if sd == 0.0 || self == NoiseFamily::Zero {
            return if z >= 0.0 { 1.0 } else { 0.0 };
        }
        match self {
            NoiseFamily::Gaussian => 0.5 * erfc(-z / (sd * std::f64::consts::SQRT_2)),
            NoiseFamily::Uniform => {
                let h = 3f64.sqrt() * sd;
                ((z + h) / (2.0 * h)).clamp(0.0, 1.0)
            }
            NoiseFamily::Laplace => {
                let b = sd / std::f64::consts::SQRT_2;
                if z < 0.0 {
                    0.5 * (z / b).exp()
                } else {
                    1.0 - 0.5 * (-z / b).exp()
                }
            }
            NoiseFamily::Zero => unreachable!(),
        }
    }

    /// Inverse of [`NoiseFamily::cdf`] for `p` in (0, 1).
    pub fn quantile(self, p: f64, sd: f64) -> f64 {
        if sd == 0.0 || self == NoiseFamily::Zero {
            return 0.0;
        }
        match self {
            NoiseFamily::Gaussian => {
                let std = Normal::standard();
                sd * std.inverse_cdf(p)
            }
            NoiseFamily::Uniform => {
                let h = 3f64.sqrt() * sd;
                -h + 2.0 * h * p
            }
            NoiseFamily::Laplace => {
                let b = sd / std::f64::consts::SQRT_2;
                if p < 0.5 {
                    b * (2.0 * p).ln()
                } else {
                    -b * (2.0 * (1.0 - p)).ln()
                }
            }
            NoiseFamily::Zero => unreachable!(),
        }
    }
}

/// Exponential decay envelope `alpha * rho^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decay {
    pub alpha: f64,
    pub rho: f64,
}

/// Distribution of one noise channel.
///
/// A draw at step `k` is `mean + rho^k * z`, where `z` comes from the
/// zero-mean family member with the given variance, truncated to
/// `[-bound, bound]`. When `bound` is absent but `decay` is present, the
/// decay amplitude `alpha` serves as the truncation bound, so the draws obey
/// `|v - mean| <= alpha * rho^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mean: Vec<f64>,
    #[serde(default)]
    pub variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<Decay>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::zero()
    }
}

impl NoiseSpec {
    fn plain(family: NoiseFamily, variance: f64) -> Self {
        NoiseSpec { family, mean: Vec::new(), variance, bound: None, decay: None }
    }

    pub fn zero() -> Self {
        Self::plain(NoiseFamily::Zero, 0.0)
    }

    pub fn gaussian(variance: f64) -> Self {
        Self::plain(NoiseFamily::Gaussian, variance)
    }

    pub fn uniform(variance: f64) -> Self {
        Self::plain(NoiseFamily::Uniform, variance)
    }

    pub fn laplace(variance: f64) -> Self {
        Self::plain(NoiseFamily::Laplace, variance)
    }

    pub fn of_family(family: NoiseFamily, variance: f64) -> Self {
        Self::plain(family, variance)
    }

    pub fn with_mean(mut self, mean: Vec<f64>) -> Self {
        self.mean = mean;
        self
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn with_decay(mut self, alpha: f64, rho: f64) -> Self {
        self.decay = Some(Decay { alpha, rho });
        self
    }

    pub fn is_zero(&self) -> bool {
        self.family == NoiseFamily::Zero || self.variance == 0.0
    }

    pub fn std_dev(&self) -> f64 {
        if self.family == NoiseFamily::Zero {
            0.0
        } else {
            self.variance.sqrt()
        }
    }

    /// Truncation half-width before decay scaling, if any.
    pub fn truncation(&self) -> Option<f64> {
        self.bound.or(self.decay.map(|d| d.alpha))
    }

    /// Half-width of the support at `step`, combining family support,
    /// truncation and decay.
    pub fn support_half_width(&self, step: u64) -> f64 {
        let sd = self.std_dev();
        let natural = match self.family {
            NoiseFamily::Zero => 0.0,
            NoiseFamily::Uniform => 3f64.sqrt() * sd,
            _ if sd == 0.0 => 0.0,
            _ => f64::INFINITY,
        };
        let half = self.truncation().map_or(natural, |b| natural.min(b));
        half * self.decay_factor(step)
    }

    pub fn decay_factor(&self, step: u64) -> f64 {
        self.decay.map_or(1.0, |d| d.rho.powf(step as f64))
    }

    pub fn mean_at(&self, i: usize) -> f64 {
        self.mean.get(i).cloned().unwrap_or(0.0)
    }

    /// Maps a uniform draw `u` in (0, 1) to the centered, truncated, but not
    /// yet decayed, value.
    pub fn centered_from_uniform(&self, u: f64) -> f64 {
        let sd = self.std_dev();
        if sd == 0.0 {
            return 0.0;
        }
        match self.truncation() {
            None => self.family.quantile(u, sd),
            Some(b) if b <= 0.0 => 0.0,
            Some(b) => {
                let lo = self.family.cdf(-b, sd);
                let hi = self.family.cdf(b, sd);
                let z = self.family.quantile(lo + (hi - lo) * u, sd);
                z.clamp(-b, b)
            }
        }
    }

    /// Draws a `dim`-vector for `step`.
    pub fn sample(&self, stream: &NoiseStream, step: u64, dim: usize) -> DVector<f64> {
        if self.is_zero() {
            return DVector::from_fn(dim, |i, _| self.mean_at(i));
        }
        let mut rng = stream.at(step);
        let scale = self.decay_factor(step);
        DVector::from_fn(dim, |i, _| {
            self.mean_at(i) + scale * self.centered_from_uniform(rng.open01())
        })
    }

    /// Schema violations, with `dim` the expected vector length when known.
    pub fn violations(&self, name: &str, dim: Option<usize>) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            out.push(format!("{name}.variance must be a finite nonnegative number"));
        }
        if let Some(b) = self.bound {
            if !(b.is_finite() && b >= 0.0) {
                out.push(format!("{name}.bound must be a finite nonnegative number"));
            }
        }
        if let Some(d) = self.decay {
            if !(d.alpha.is_finite() && d.alpha > 0.0) {
                out.push(format!("{name}.decay.alpha must be positive"));
            }
            if !(0.0..1.0).contains(&d.rho) {
                out.push("rho must lie in [0,1)".to_string());
            }
        }
        if let Some(n) = dim {
            if !self.mean.is_empty() && self.mean.len() != n {
                out.push(format!("{name}.mean has length {} but {n} is required", self.mean.len()));
            }
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            out.push(format!("{name}.mean must be finite"));
        }
        out
    }

    pub fn validate(&self, name: &str, dim: Option<usize>) -> Result<()> {
        let v = self.violations(name, dim);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }
}
