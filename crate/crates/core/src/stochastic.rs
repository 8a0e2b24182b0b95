//! Seeded random streams, the input distributions of the call-center model
//! and Poisson-rate fitting of the exogenous arrival process.

use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// Largest rate handed to the multiplicative Poisson sampler in one piece.
/// Larger rates are split into chunks (a sum of Poissons is Poisson).
const POISSON_CHUNK: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub enum StochasticError {
    /// A distribution parameter outside its domain.
    ParameterDomain { name: &'static str, value: f64 },
    /// Not enough recorded epochs to fit an input model.
    InsufficientData,
}

impl fmt::Display for StochasticError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ParameterDomain { name, value } => {
                write!(f, "parameter `{name}` out of domain: {value}")
            }
            Self::InsufficientData => f.write_str("insufficient data to fit input models"),
        }
    }
}

impl core::error::Error for StochasticError {}

/// One independent random sub-stream: a ChaCha8 generator keyed by `seed`
/// and positioned on stream `stream_id` (typically the replication index).
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`; safe to take the logarithm of.
    pub fn uniform_pos(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform integer in `0..n` (Lemire's nearly-divisionless method).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Bernoulli draw with success probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via the Marsaglia polar method.
    pub fn standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * libm::sqrt(-2.0 * libm::log(s) / s);
            }
        }
    }
}

/// An input distribution. Times are in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionSpec {
    /// Shape–scale convention: mean = shape·scale.
    Gamma { shape: f64, scale: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
    Deterministic { value: f64 },
}

impl DistributionSpec {
    /// Lognormal with the given mean and variance.
    pub fn lognormal_from_moments(mean: f64, variance: f64) -> Result<Self, StochasticError> {
        let (mu, sigma) = lognormal_params_from_moments(mean, variance)?;
        Ok(Self::Lognormal { mu, sigma })
    }

    /// Checks parameter domains, reporting the first offending field.
    pub fn validate(&self) -> Result<(), StochasticError> {
        fn check(name: &'static str, value: f64, ok: bool) -> Result<(), StochasticError> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(StochasticError::ParameterDomain { name, value })
            }
        }
        match *self {
            Self::Gamma { shape, scale } => {
                check("shape", shape, shape > 0.0)?;
                check("scale", scale, scale > 0.0)
            }
            Self::Lognormal { mu, sigma } => {
                check("mu", mu, true)?;
                check("sigma", sigma, sigma >= 0.0)
            }
            Self::Exponential { rate } => check("rate", rate, rate > 0.0),
            Self::Deterministic { value } => check("value", value, value >= 0.0),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Gamma { shape, scale } => shape * scale,
            Self::Lognormal { mu, sigma } => libm::exp(mu + 0.5 * sigma * sigma),
            Self::Exponential { rate } => 1.0 / rate,
            Self::Deterministic { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Gamma { shape, scale } => shape * scale * scale,
            Self::Lognormal { mu, sigma } => {
                let s2 = sigma * sigma;
                (libm::exp(s2) - 1.0) * libm::exp(2.0 * mu + s2)
            }
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::Deterministic { .. } => 0.0,
        }
    }

    /// One draw. Parameters are assumed validated.
    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        match *self {
            Self::Gamma { shape, scale } => gamma_unchecked(stream, shape) * scale,
            Self::Lognormal { mu, sigma } => sample_lognormal(stream, mu, sigma),
            Self::Exponential { rate } => -libm::log(stream.uniform_pos()) / rate,
            Self::Deterministic { value } => value,
        }
    }
}

/// One Gamma(shape, scale) draw, mean `shape * scale`.
pub fn sample_gamma(stream: &mut RngStream, shape: f64, scale: f64) -> Result<f64, StochasticError> {
    DistributionSpec::Gamma { shape, scale }.validate()?;
    Ok(gamma_unchecked(stream, shape) * scale)
}

/// Unit-scale gamma: Marsaglia–Tsang for shape ≥ 1, boosted for shape < 1.
fn gamma_unchecked(stream: &mut RngStream, shape: f64) -> f64 {
    if shape < 1.0 {
        let boost = libm::pow(stream.uniform_pos(), 1.0 / shape);
        return (gamma_unchecked(stream, shape + 1.0) * boost).max(f64::MIN_POSITIVE);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / libm::sqrt(9.0 * d);
    loop {
        let x = stream.standard_normal();
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = stream.uniform_pos();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if libm::log(u) < 0.5 * x2 + d * (1.0 - v + libm::log(v)) {
            return d * v;
        }
    }
}

pub fn sample_lognormal(stream: &mut RngStream, mu: f64, sigma: f64) -> f64 {
    libm::exp(mu + sigma * stream.standard_normal())
}

/// Solves the two lognormal moment equations for `(mu, sigma)`.
pub fn lognormal_params_from_moments(mean: f64, variance: f64) -> Result<(f64, f64), StochasticError> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(StochasticError::ParameterDomain { name: "mean", value: mean });
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(StochasticError::ParameterDomain { name: "variance", value: variance });
    }
    let sigma2 = libm::log1p(variance / (mean * mean));
    Ok((libm::log(mean) - 0.5 * sigma2, libm::sqrt(sigma2)))
}

/// Poisson count with the given mean.
pub fn sample_poisson(stream: &mut RngStream, rate: f64) -> u32 {
    let mut remaining = rate;
    let mut total = 0u32;
    while remaining > 0.0 {
        let chunk = remaining.min(POISSON_CHUNK);
        remaining -= chunk;
        // Knuth: count uniforms until their running product drops below e^-rate.
        let limit = libm::exp(-chunk);
        let mut product = stream.uniform_pos();
        while product > limit {
            total += 1;
            product *= stream.uniform_pos();
        }
    }
    total
}

/// Arrival offsets of a homogeneous Poisson process over one epoch,
/// sorted ascending in `[0, epoch_length)`.
pub fn sample_arrivals(stream: &mut RngStream, rate_per_epoch: f64, epoch_length: f64) -> Vec<f64> {
    let count = sample_poisson(stream, rate_per_epoch.max(0.0));
    let mut times: Vec<f64> = (0..count).map(|_| stream.uniform() * epoch_length).collect();
    times.sort_by(f64::total_cmp);
    times
}

/// Exogenous input models that drive the generative surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputModels {
    pub arrival_rate_per_epoch: Vec<f64>,
    pub service: Vec<DistributionSpec>,
    pub patience: Vec<DistributionSpec>,
    pub backoffice_duration: DistributionSpec,
}

impl InputModels {
    /// One arrival count per contact group for the next epoch.
    pub fn sample_arrival_counts(&self, stream: &mut RngStream) -> Vec<u32> {
        self.arrival_rate_per_epoch
            .iter()
            .map(|&rate| sample_poisson(stream, rate))
            .collect()
    }
}

/// Poisson MLE of the per-epoch arrival rate of each contact group; the
/// service, patience and back-office models are carried over unchanged.
///
/// `arrival_counts` holds one entry per recorded epoch, each with one count
/// per contact group.
pub fn fit_input_models(
    arrival_counts: &[Vec<u32>],
    service: Vec<DistributionSpec>,
    patience: Vec<DistributionSpec>,
    backoffice_duration: DistributionSpec,
) -> Result<InputModels, StochasticError> {
    let groups = service.len();
    if arrival_counts.is_empty() || groups == 0 || arrival_counts.iter().any(|c| c.len() != groups) {
        return Err(StochasticError::InsufficientData);
    }
    let n = arrival_counts.len() as f64;
    let arrival_rate_per_epoch = (0..groups)
        .map(|g| arrival_counts.iter().map(|c| c[g] as f64).sum::<f64>() / n)
        .collect();
    Ok(InputModels {
        arrival_rate_per_epoch,
        service,
        patience,
        backoffice_duration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    fn draws(spec: DistributionSpec, n: usize, stream_id: u64) -> Vec<f64> {
        let mut s = RngStream::new(11, stream_id);
        (0..n).map(|_| spec.sample(&mut s)).collect()
    }

    #[test]
    fn gamma_means_follow_shape_times_scale() {
        let mut s = RngStream::new(1, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_gamma(&mut s, 5.0, 0.9).unwrap()).collect();
        assert!((moments(&xs).0 / 4.5 - 1.0).abs() < 0.01);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_gamma(&mut s, 2.0, 5.0).unwrap()).collect();
        assert!((moments(&xs).0 / 10.0 - 1.0).abs() < 0.01);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_gamma(&mut s, 4.0, 1.5).unwrap()).collect();
        assert!((moments(&xs).1 / 9.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn gamma_rejects_bad_parameters() {
        let mut s = RngStream::new(1, 0);
        assert!(matches!(
            sample_gamma(&mut s, 0.0, 1.0),
            Err(StochasticError::ParameterDomain { name: "shape", .. })
        ));
        assert!(matches!(
            sample_gamma(&mut s, 2.0, -1.0),
            Err(StochasticError::ParameterDomain { name: "scale", .. })
        ));
    }

    #[test]
    fn small_shape_gamma_is_positive_with_right_mean() {
        let xs = draws(DistributionSpec::Gamma { shape: 0.5, scale: 2.0 }, 100_000, 3);
        assert!(xs.iter().all(|&x| x > 0.0));
        assert!((moments(&xs).0 / 1.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn lognormal_moment_solution() {
        // sigma^2 = ln(1 + 1.7 / 1.7^2) = 0.4626..., mu = ln 1.7 - sigma^2 / 2
        let (mu, sigma) = lognormal_params_from_moments(1.7, 1.7).unwrap();
        assert!((mu - 0.29932).abs() < 1e-4, "{mu}");
        assert!((sigma - 0.68016).abs() < 1e-4, "{sigma}");

        let (mu, sigma) = lognormal_params_from_moments(1.0, 1e-12).unwrap();
        assert!(mu.abs() < 1e-9 && sigma < 1e-5);

        assert!(lognormal_params_from_moments(0.0, 1.0).is_err());
        assert!(lognormal_params_from_moments(1.0, 0.0).is_err());
    }

    #[test]
    fn lognormal_monte_carlo_round_trip() {
        let spec = DistributionSpec::lognormal_from_moments(1.7, 1.7).unwrap();
        let xs = draws(spec, 1_000_000, 4);
        let (m, v) = moments(&xs);
        assert!((m / 1.7 - 1.0).abs() < 0.02, "{m}");
        assert!((v / 1.7 - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn every_distribution_matches_its_analytic_moments() {
        let specs = [
            DistributionSpec::Gamma { shape: 4.0, scale: 1.0 },
            DistributionSpec::Gamma { shape: 2.0, scale: 5.0 },
            DistributionSpec::Lognormal { mu: 0.3, sigma: 0.5 },
            DistributionSpec::Exponential { rate: 0.8 },
        ];
        for (i, spec) in specs.iter().enumerate() {
            let xs = draws(*spec, 100_000, 100 + i as u64);
            assert!(xs.iter().all(|&x| x > 0.0));
            let (m, v) = moments(&xs);
            assert!((m / spec.mean() - 1.0).abs() < 0.01, "{spec:?} mean {m}");
            assert!((v / spec.variance() - 1.0).abs() < 0.03, "{spec:?} var {v}");
        }
        let xs = draws(DistributionSpec::Deterministic { value: 2.5 }, 10, 0);
        assert!(xs.iter().all(|&x| x == 2.5));
    }

    #[test]
    fn poisson_counts_match_rate() {
        let mut s = RngStream::new(5, 0);
        let counts: Vec<f64> = (0..100_000).map(|_| sample_arrivals(&mut s, 7.0, 30.0).len() as f64).collect();
        assert!((moments(&counts).0 / 7.0 - 1.0).abs() < 0.01);
        let counts: Vec<f64> = (0..100_000).map(|_| sample_arrivals(&mut s, 6.0, 30.0).len() as f64).collect();
        assert!((moments(&counts).1 / 6.0 - 1.0).abs() < 0.03);
        // chunked path
        let counts: Vec<f64> = (0..50_000).map(|_| sample_poisson(&mut s, 75.0) as f64).collect();
        let (m, v) = moments(&counts);
        assert!((m / 75.0 - 1.0).abs() < 0.01 && (v / 75.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn arrivals_are_sorted_and_inside_the_epoch() {
        let mut s = RngStream::new(5, 1);
        for _ in 0..1000 {
            let t = sample_arrivals(&mut s, 13.0, 30.0);
            assert!(t.windows(2).all(|w| w[0] <= w[1]));
            assert!(t.iter().all(|&x| (0.0..30.0).contains(&x)));
        }
        assert!(sample_arrivals(&mut s, 0.0, 30.0).is_empty());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut s = RngStream::new(42, 3);
            (0..64).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = RngStream::new(42, 3);
            (0..64).map(|_| s.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut s = RngStream::new(42, 4);
            (0..64).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn below_is_uniform() {
        let mut s = RngStream::new(9, 0);
        let mut hist = [0usize; 16];
        for _ in 0..160_000 {
            hist[s.below(16)] += 1;
        }
        assert!(hist.iter().all(|&h| (h as f64 / 10_000.0 - 1.0).abs() < 0.05));
    }

    #[test]
    fn fitted_rate_is_the_mean_count() {
        let svc = vec![DistributionSpec::Deterministic { value: 1.0 }];
        let bo = DistributionSpec::Deterministic { value: 1.0 };
        let m = fit_input_models(&[vec![7], vec![7], vec![7]], svc.clone(), svc.clone(), bo).unwrap();
        assert_eq!(m.arrival_rate_per_epoch, vec![7.0]);
        let m = fit_input_models(&[vec![5], vec![9]], svc.clone(), svc.clone(), bo).unwrap();
        assert_eq!(m.arrival_rate_per_epoch, vec![7.0]);
        assert_eq!(
            fit_input_models(&[], svc.clone(), svc.clone(), bo),
            Err(StochasticError::InsufficientData)
        );

        let mut s = RngStream::new(8, 0);
        let counts: Vec<Vec<u32>> = (0..10_000).map(|_| vec![sample_poisson(&mut s, 6.0)]).collect();
        let m = fit_input_models(&counts, svc.clone(), svc, bo).unwrap();
        assert!((m.arrival_rate_per_epoch[0] / 6.0 - 1.0).abs() < 0.02);
    }
}
