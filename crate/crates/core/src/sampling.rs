//! Seeded random sampling of every distribution the analytics name.
//!
//! All samplers draw through the [`Noise`] trait so that simulations can be
//! driven either by a reproducible [`RngStream`] or by deterministic stubs
//! in tests. A stream is fully determined by `(seed, stream_id, call
//! order)`; distinct stream ids give statistically independent streams, so
//! replicas parallelize by assigning one stream per replica.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Source of uniform and standard normal variates.
pub trait Noise {
    /// Uniform draw in [0, 1).
    fn uniform(&mut self) -> f64;

    /// Standard normal draw.
    fn standard_normal(&mut self) -> f64;

    /// Uniform index in 0..n (n >= 1).
    fn pick(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

/// Reproducible random stream: ChaCha12 keyed by `seed` on stream
/// `stream_id`.
///
/// The generator is counter-based with a 2^64 stream space and more than
/// 2^128 states per stream; output is a pure function of `(seed,
/// stream_id)` and the call sequence. Bit-exact agreement across languages
/// is not part of the contract, statistical behaviour is.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha12Rng,
    spare_normal: Option<f64>,
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            rng,
            spare_normal: None,
            seed,
            stream_id,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl Noise for RngStream {
    fn uniform(&mut self) -> f64 {
        // 53 random bits into [0, 1).
        (self.rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    fn standard_normal(&mut self) -> f64 {
        // Marsaglia polar method; the second variate of each accepted pair
        // is cached.
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * scale);
                return u * scale;
            }
        }
    }
}

/// Noise stub that returns 0 for every normal draw and 0 for every uniform
/// draw; simulations driven by it follow the zero-noise flow and uniform
/// choices always pick the first candidate.
#[derive(Debug, Clone, Default)]
pub struct ZeroNoise;

impl Noise for ZeroNoise {
    fn uniform(&mut self) -> f64 {
        0.0
    }

    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}

/// Uniform draw excluding 0, for transforms that cannot accept it.
fn open_uniform(noise: &mut impl Noise) -> f64 {
    loop {
        let u = noise.uniform();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard normal variate.
pub fn sample_standard_normal(noise: &mut impl Noise) -> f64 {
    noise.standard_normal()
}

/// Unit-scale gamma variate with density x^(shape-1) e^(-x) / Gamma(shape).
///
/// Marsaglia-Tsang squeeze accept-reject for shape >= 1, with the power
/// boost U^(1/shape) for shape < 1. Exact in law, no discretization.
pub fn sample_gamma(shape: f64, noise: &mut impl Noise) -> Result<f64> {
    if !(shape.is_finite() && shape > 0.0) {
        return Err(Error::domain(format!(
            "sample_gamma requires shape > 0, got {shape}"
        )));
    }
    if shape < 1.0 {
        let boost = open_uniform(noise).powf(1.0 / shape);
        return Ok(sample_gamma(shape + 1.0, noise)? * boost);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (3.0 * d.sqrt());
    loop {
        let x = noise.standard_normal();
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = open_uniform(noise);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return Ok(d * v);
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return Ok(d * v);
        }
    }
}

/// Chi-squared variate with `dof` degrees of freedom (dof > 0, not
/// necessarily integer): twice a gamma(dof/2) variate.
pub fn sample_chi_squared(dof: f64, noise: &mut impl Noise) -> Result<f64> {
    Ok(2.0 * sample_gamma(0.5 * dof, noise)?)
}

/// Student-t variate with `dof` degrees of freedom via the normal over
/// root-chi-squared representation.
pub fn sample_student_t(dof: f64, noise: &mut impl Noise) -> Result<f64> {
    if !(dof.is_finite() && dof > 0.0) {
        return Err(Error::domain(format!(
            "sample_student_t requires dof > 0, got {dof}"
        )));
    }
    let z = noise.standard_normal();
    let v = sample_chi_squared(dof, noise)?;
    Ok(z / (v / dof).sqrt())
}

/// Law of the first hitting time of 0 by a squared Bessel process of
/// dimension `nu < 2` started at `start > 0` (equivalently, by a Bessel
/// process started at sqrt(start)):
///
/// T0 = start / (2 G),  G ~ gamma(1 - nu/2).
///
/// For dimension >= 2 the hitting time is almost surely infinite and
/// construction is refused.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HittingTimeLaw {
    start: f64,
    nu: f64,
    shape: f64,
}

impl HittingTimeLaw {
    pub fn new(start: f64, nu: f64) -> Result<Self> {
        if !(start.is_finite() && start > 0.0) {
            return Err(Error::domain(format!(
                "hitting-time law requires start > 0, got {start}"
            )));
        }
        if !(nu.is_finite() && nu < 2.0) {
            return Err(Error::NoFiniteHittingTime { nu });
        }
        Ok(HittingTimeLaw {
            start,
            nu,
            shape: 1.0 - 0.5 * nu,
        })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Gamma shape 1 - nu/2 of the divisor variate.
    pub fn shape(&self) -> f64 {
        self.shape
    }
}

/// Exact draw of the hitting time start/(2 G); no discretization.
///
/// The law scales linearly in `start`: a draw from start c*x on a given
/// stream equals c times the draw from start x on the same stream state.
pub fn sample_hitting_time(law: &HittingTimeLaw, noise: &mut impl Noise) -> Result<f64> {
    let g = sample_gamma(law.shape, noise)?;
    Ok(law.start / (2.0 * g))
}

/// Exact draw from the squared jump-location density h_nu via the
/// representation 2|Z|/sqrt(V) with Z standard normal and V chi-squared
/// with 2 - nu degrees of freedom, independent.
pub fn sample_jump_sq(nu: f64, noise: &mut impl Noise) -> Result<f64> {
    if !(nu.is_finite() && nu < 2.0) {
        return Err(Error::domain(format!(
            "sample_jump_sq requires nu < 2, got {nu}"
        )));
    }
    let z = loop {
        let z = noise.standard_normal();
        if z != 0.0 {
            break z;
        }
    };
    let v = sample_chi_squared(2.0 - nu, noise)?;
    Ok(2.0 * z.abs() / v.sqrt())
}
