//! Discretized path simulation of the driving diffusions.
//!
//! Three laws are supported: the Bessel process on (0, infinity) absorbed
//! at 0, the power-drift diffusion on (0, 2] reflected at 2 and absorbed at
//! 0, and the squared Bessel process. Paths use Euler-Maruyama stepping
//! with an adaptive step `dt = min(dt_base, kappa x^2)` for the laws whose
//! drift is singular at 0, absorption at a small threshold with
//! linear-interpolation refinement of the crossing time, and mirror
//! reflection at the upper barrier.

use crate::error::{Error, Result};
use crate::sampling::Noise;
use crate::specfun::normal_sf;

/// Step-size, absorption and horizon controls shared by all simulations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    /// Maximum time step.
    pub dt_base: f64,
    /// Adaptive-step coefficient: near the boundary dt <= kappa x^2.
    pub kappa: f64,
    /// Absorption threshold; exact zero hits are unreachable in floating
    /// point because of the drift singularity.
    pub eps_abs: f64,
    /// Time horizon.
    pub horizon: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            dt_base: 1e-3,
            kappa: 0.01,
            eps_abs: 1e-6,
            horizon: 1e3,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_base.is_finite() && self.dt_base > 0.0)
            || !(self.kappa.is_finite() && self.kappa > 0.0)
            || !(self.eps_abs.is_finite() && self.eps_abs > 0.0)
            || !(self.horizon.is_finite() && self.horizon > 0.0)
        {
            return Err(Error::domain(format!(
                "path config fields must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// How a path ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Terminal {
    /// Reached the absorption threshold at the given (interpolated) time.
    Absorbed(f64),
    HorizonReached,
}

/// A recorded trajectory on its (possibly adaptive) time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub terminal: Terminal,
}

impl Path {
    pub fn absorption_time(&self) -> Option<f64> {
        match self.terminal {
            Terminal::Absorbed(t) => Some(t),
            Terminal::HorizonReached => None,
        }
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().expect("paths are never empty")
    }
}

/// Driving law of a single particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftLaw {
    /// dX = dW + (nu-1)/(2X) dt on (0, infinity), absorbed at 0.
    Bessel { nu: f64 },
    /// dX = dW - 1/(beta X^(beta-1)) dt on (0, 2], reflected at 2,
    /// absorbed at 0; beta > 2.
    PowerDriftReflected { beta: f64 },
    /// dZ = dim dt + 2 sqrt|Z| dW on [0, infinity), absorbed at 0.
    SquaredBessel { dim: f64 },
}

impl DriftLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DriftLaw::Bessel { nu } if nu.is_finite() => Ok(()),
            DriftLaw::Bessel { nu } => {
                Err(Error::domain(format!("Bessel dimension must be finite, got {nu}")))
            }
            DriftLaw::PowerDriftReflected { beta } if beta > 2.0 => Ok(()),
            DriftLaw::PowerDriftReflected { beta } => Err(Error::domain(format!(
                "power drift requires beta > 2, got {beta}"
            ))),
            DriftLaw::SquaredBessel { dim } if dim.is_finite() => Ok(()),
            DriftLaw::SquaredBessel { dim } => Err(Error::domain(format!(
                "squared Bessel dimension must be finite, got {dim}"
            ))),
        }
    }

    pub fn drift(&self, x: f64) -> f64 {
        match *self {
            DriftLaw::Bessel { nu } => (nu - 1.0) / (2.0 * x),
            DriftLaw::PowerDriftReflected { beta } => -1.0 / (beta * x.powf(beta - 1.0)),
            DriftLaw::SquaredBessel { dim } => dim,
        }
    }

    pub fn diffusion(&self, x: f64) -> f64 {
        match *self {
            DriftLaw::Bessel { .. } | DriftLaw::PowerDriftReflected { .. } => 1.0,
            // |Z| under the root so discretization excursions below 0 are
            // handled exactly as the SDE itself prescribes.
            DriftLaw::SquaredBessel { .. } => 2.0 * x.abs().sqrt(),
        }
    }

    /// Whether x is a valid starting point.
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            DriftLaw::Bessel { .. } => x > 0.0 && x.is_finite(),
            DriftLaw::PowerDriftReflected { .. } => x > 0.0 && x <= 2.0,
            DriftLaw::SquaredBessel { .. } => x >= 0.0 && x.is_finite(),
        }
    }

    pub fn upper_barrier(&self) -> Option<f64> {
        match self {
            DriftLaw::PowerDriftReflected { .. } => Some(2.0),
            _ => None,
        }
    }

    /// Laws with a drift singularity at 0 need the adaptive step.
    pub fn needs_adaptive_step(&self) -> bool {
        matches!(
            self,
            DriftLaw::Bessel { .. } | DriftLaw::PowerDriftReflected { .. }
        )
    }

    /// Effective step at state x.
    pub(crate) fn step_size(&self, x: f64, config: &PathConfig) -> f64 {
        if self.needs_adaptive_step() {
            config.dt_base.min(config.kappa * x * x)
        } else {
            config.dt_base
        }
    }
}

/// Mirror reflection at an upper barrier: the discrete realization of the
/// local-time boundary term.
pub fn reflect_upper(value: f64, barrier: f64) -> f64 {
    if value > barrier {
        2.0 * barrier - value
    } else {
        value
    }
}

/// Linear interpolation of the threshold crossing inside one step.
pub(crate) fn crossing_fraction(before: f64, after: f64, threshold: f64) -> f64 {
    if after < before {
        ((before - threshold) / (before - after)).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Euler-Maruyama simulation of one path from `x0` until absorption or the
/// horizon.
pub fn simulate(
    law: &DriftLaw,
    x0: f64,
    config: &PathConfig,
    noise: &mut impl Noise,
) -> Result<Path> {
    law.validate()?;
    config.validate()?;
    if !law.contains(x0) {
        return Err(Error::domain(format!(
            "start {x0} outside the domain of {law:?}"
        )));
    }
    let mut times = vec![0.0];
    let mut values = vec![x0];
    let mut t = 0.0;
    let mut x = x0;
    if x <= config.eps_abs {
        return Ok(Path {
            times,
            values,
            terminal: Terminal::Absorbed(0.0),
        });
    }
    let terminal = loop {
        if t >= config.horizon {
            break Terminal::HorizonReached;
        }
        let dt = law.step_size(x, config).min(config.horizon - t);
        let dw = dt.sqrt() * noise.standard_normal();
        let mut next = x + law.drift(x) * dt + law.diffusion(x) * dw;
        if let Some(barrier) = law.upper_barrier() {
            next = reflect_upper(next, barrier);
        }
        if next <= config.eps_abs {
            let frac = crossing_fraction(x, next, config.eps_abs);
            let t_cross = t + frac * dt;
            times.push(t_cross);
            values.push(next.max(0.0));
            break Terminal::Absorbed(t_cross);
        }
        t += dt;
        x = next;
        times.push(t);
        values.push(x);
    };
    Ok(Path {
        times,
        values,
        terminal,
    })
}

/// Outcome of the Freidlin-Wentzell deviation check: the empirical
/// probability that a noisy path strays more than `delta` from the
/// zero-noise flow, next to the explicit Gaussian-tail bound
/// 4 P(N(0, T) > delta exp(-L T)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwCheckResult {
    pub a: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Lipschitz constant of the drift on the corridor the paths live in,
    /// (beta-1) / (beta gamma 2^(1-beta) a^beta).
    pub lipschitz: f64,
    pub empirical_prob: f64,
    pub bound: f64,
    pub n_reps: u64,
}

impl FwCheckResult {
    /// Binomial standard error of the empirical probability.
    pub fn empirical_se(&self) -> f64 {
        let p = self.empirical_prob;
        (p * (1.0 - p) / self.n_reps as f64).sqrt()
    }
}

/// Simulates `n_reps` paths of dX = dW - 1/(beta X^(beta-1)) dt from `a`
/// over the window [0, (1-gamma/2) a^beta], measures the fraction whose
/// maximal deviation from the zero-noise flow exceeds `delta`, and returns
/// it together with the Gaussian-tail bound.
///
/// `delta` must keep the corridor inside [a (gamma/2)^(1/beta) / 2, 2a],
/// the interval on which the Lipschitz constant is computed; each of the
/// three inequalities is checked and reported separately.
pub fn fw_deviation_check(
    a: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    n_reps: u64,
    config: &PathConfig,
    noise: &mut impl Noise,
) -> Result<FwCheckResult> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::domain(format!("requires a > 0, got {a}")));
    }
    if !(beta.is_finite() && beta > 2.0) {
        return Err(Error::domain(format!("requires beta > 2, got {beta}")));
    }
    if !(gamma.is_finite() && gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("requires gamma in (0,1), got {gamma}")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::domain(format!("requires delta > 0, got {delta}")));
    }
    if n_reps == 0 {
        return Err(Error::domain("requires n_reps >= 1".to_string()));
    }
    config.validate()?;
    let floor = a * (0.5 * gamma).powf(1.0 / beta);
    // Corridor conditions: floor/2 <= floor - delta < a + delta <= 2a.
    if 0.5 * floor > floor - delta {
        return Err(Error::precondition(format!(
            "delta too large: corridor floor fails ({} * (gamma/2)^(1/beta) / 2 = {} > {} = flow minimum - delta)",
            a,
            0.5 * floor,
            floor - delta
        )));
    }
    if floor - delta >= a + delta {
        return Err(Error::precondition(format!(
            "corridor is empty: flow minimum - delta = {} not below start + delta = {}",
            floor - delta,
            a + delta
        )));
    }
    if a + delta > 2.0 * a {
        return Err(Error::precondition(format!(
            "delta too large: start + delta = {} exceeds corridor ceiling {}",
            a + delta,
            2.0 * a
        )));
    }

    let window = (1.0 - 0.5 * gamma) * a.powf(beta);
    let lipschitz = (beta - 1.0) / (beta * gamma * 2.0f64.powf(1.0 - beta) * a.powf(beta));
    let lifetime = a.powf(beta);
    let inv_beta = 1.0 / beta;
    let mut exceeded = 0u64;
    for _ in 0..n_reps {
        let mut t = 0.0;
        let mut x = a;
        while t < window {
            let dt = config
                .dt_base
                .min(window - t)
                .min(config.kappa * x * x);
            let dw = dt.sqrt() * noise.standard_normal();
            x += -1.0 / (beta * x.powf(beta - 1.0)) * dt + dw;
            t += dt;
            let flow = (lifetime - t).max(0.0).powf(inv_beta);
            if (x - flow).abs() > delta {
                exceeded += 1;
                break;
            }
        }
    }
    let empirical_prob = exceeded as f64 / n_reps as f64;
    let bound = 4.0 * normal_sf(delta * (-lipschitz * window).exp() / window.sqrt());
    Ok(FwCheckResult {
        a,
        beta,
        gamma,
        delta,
        lipschitz,
        empirical_prob,
        bound,
        n_reps,
    })
}
