//! The N-particle engine with the uniform-jump rule.
//!
//! Particles evolve independently under a driving law; when one reaches the
//! absorbing boundary it is relocated to the current position of another
//! particle chosen uniformly at random among those strictly inside the
//! domain. The module also provides the exact two-particle scaling
//! construction (iid lifetime/jump-factor pairs composed into a random
//! series) and the sum-of-squares coupling that dominates the system from
//! below by a squared Bessel process driven by the reconstructed Brownian
//! motion.

use crate::error::{Error, Result};
use crate::paths::{crossing_fraction, DriftLaw, Path, PathConfig, Terminal};
use crate::sampling::Noise;

/// Snapshot of the particle system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub positions: Vec<f64>,
    pub time: f64,
    pub event_count: u64,
}

/// One relocation event. Particle indices are 1-based in the log (and in
/// the exported CSV), matching the usual labelling X^1..X^N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    /// Event time; strictly increasing across the log.
    pub time: f64,
    /// 1-based index of the particle that reached the boundary.
    pub dying: usize,
    /// 1-based index of the particle it jumped onto; never equals `dying`.
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classification {
    /// Jump times accumulated while every particle collapsed; the field
    /// estimates the finite limit of the event times.
    Extinct { tau_inf: f64 },
    /// The run reached the horizon with the system still alive.
    Survived { horizon: f64 },
}

impl Classification {
    pub fn is_extinct(&self) -> bool {
        matches!(self, Classification::Extinct { .. })
    }
}

/// Per-replica outcome of a particle-system run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub events: Vec<EventRecord>,
    pub classification: Classification,
    pub max_position_at_end: f64,
    /// The event cap was reached; the run was conservatively classified as
    /// survived.
    pub event_cap_reached: bool,
    /// Extinction was declared by the degenerate-step rule: every particle
    /// crossed the threshold within a single step.
    pub degenerate_extinction: bool,
}

/// Thresholds of the extinction classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtinctionThresholds {
    /// Number of trailing events the accumulation window looks at.
    pub recent_events: usize,
    /// Extinction requires those events to span less than this much time.
    pub window: f64,
    /// ... and the maximal particle position to sit below this.
    pub position: f64,
    /// Hard cap on relocation events per run.
    pub max_events: u64,
}

impl Default for ExtinctionThresholds {
    fn default() -> Self {
        ExtinctionThresholds {
            recent_events: 100,
            window: 1e-9,
            position: 1e-6,
            max_events: 1_000_000,
        }
    }
}

/// Classifier shared by the run loops: extinction means event times
/// accumulate while all particles sit at the boundary scale; survival is
/// declared at the horizon. `None` means "keep running".
pub fn classify_extinction(
    state: &SystemState,
    events: &[EventRecord],
    thresholds: &ExtinctionThresholds,
    horizon: f64,
) -> Option<Classification> {
    if events.len() >= thresholds.recent_events {
        let m = thresholds.recent_events;
        let span = events[events.len() - 1].time - events[events.len() - m].time;
        let max_position = state.positions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if span < thresholds.window && max_position < thresholds.position {
            return Some(Classification::Extinct {
                tau_inf: events[events.len() - 1].time,
            });
        }
    }
    if state.time >= horizon {
        return Some(Classification::Survived { horizon });
    }
    None
}

/// What one engine step produced; scratch views stay valid until the next
/// step.
enum StepStatus {
    Continue,
    /// Every particle crossed the threshold in this step (time of the
    /// step's end, the degenerate extinction rule).
    AllAbsorbed(f64),
}

/// Joint stepping of N particles under one driving law.
struct Engine<'a> {
    law: &'a DriftLaw,
    config: &'a PathConfig,
    positions: Vec<f64>,
    time: f64,
    event_count: u64,
    events: Vec<EventRecord>,
    // Scratch, reused every step.
    before: Vec<f64>,
    after_sde: Vec<f64>,
    increments: Vec<f64>,
    deaths: Vec<usize>,
    candidates: Vec<usize>,
    last_dt: f64,
}

impl<'a> Engine<'a> {
    fn new(law: &'a DriftLaw, x0: &[f64], config: &'a PathConfig) -> Result<Self> {
        law.validate()?;
        config.validate()?;
        if x0.len() < 2 {
            return Err(Error::domain(format!(
                "the particle system needs N >= 2 particles, got {}",
                x0.len()
            )));
        }
        for &x in x0 {
            if !law.contains(x) || x <= config.eps_abs {
                return Err(Error::domain(format!(
                    "start {x} outside the domain of {law:?} (or below the absorption threshold)"
                )));
            }
        }
        let n = x0.len();
        Ok(Engine {
            law,
            config,
            positions: x0.to_vec(),
            time: 0.0,
            event_count: 0,
            events: Vec::new(),
            before: vec![0.0; n],
            after_sde: vec![0.0; n],
            increments: vec![0.0; n],
            deaths: Vec::with_capacity(n),
            candidates: Vec::with_capacity(n),
            last_dt: 0.0,
        })
    }

    fn state(&self) -> SystemState {
        SystemState {
            positions: self.positions.clone(),
            time: self.time,
            event_count: self.event_count,
        }
    }

    fn max_position(&self) -> f64 {
        self.positions.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// One synchronized Euler step for all particles, followed by the
    /// relocation rule for every particle that crossed the threshold
    /// (processed in increasing index order).
    fn step(&mut self, noise: &mut impl Noise) -> StepStatus {
        let eps = self.config.eps_abs;
        let dt = self
            .positions
            .iter()
            .map(|&x| self.law.step_size(x, self.config))
            .fold(self.config.dt_base, f64::min)
            .min(self.config.horizon - self.time)
            .max(0.0);
        self.last_dt = dt;
        let sqrt_dt = dt.sqrt();

        self.before.copy_from_slice(&self.positions);
        self.deaths.clear();
        for i in 0..self.positions.len() {
            let x = self.positions[i];
            let dw = sqrt_dt * noise.standard_normal();
            self.increments[i] = dw;
            let mut next = x + self.law.drift(x) * dt + self.law.diffusion(x) * dw;
            if let Some(barrier) = self.law.upper_barrier() {
                next = crate::paths::reflect_upper(next, barrier);
            }
            self.after_sde[i] = next;
            if next <= eps {
                self.deaths.push(i);
            }
        }
        self.positions.copy_from_slice(&self.after_sde);
        let step_start = self.time;
        self.time += dt;

        if self.deaths.len() == self.positions.len() {
            return StepStatus::AllAbsorbed(self.time);
        }
        for k in 0..self.deaths.len() {
            let dying = self.deaths[k];
            self.candidates.clear();
            for (j, &x) in self.positions.iter().enumerate() {
                if j != dying && x > eps {
                    self.candidates.push(j);
                }
            }
            // At least one survivor exists: not all particles died this
            // step, and already-relocated ones count as alive again.
            let target = self.candidates[noise.pick(self.candidates.len())];
            self.positions[dying] = self.positions[target];
            self.event_count += 1;
            let frac = crossing_fraction(self.before[dying], self.after_sde[dying], eps);
            let mut event_time = step_start + frac * dt;
            if let Some(last) = self.events.last() {
                if event_time <= last.time {
                    event_time = last.time.next_up();
                }
            }
            self.events.push(EventRecord {
                time: event_time,
                dying: dying + 1,
                target: target + 1,
            });
        }
        StepStatus::Continue
    }
}

/// Runs the N-particle system from `x0` until the classifier fires.
pub fn fv_simulate(
    x0: &[f64],
    law: &DriftLaw,
    config: &PathConfig,
    noise: &mut impl Noise,
) -> Result<RunOutcome> {
    fv_simulate_with_thresholds(x0, law, config, &ExtinctionThresholds::default(), noise)
}

/// [`fv_simulate`] with explicit classifier thresholds.
pub fn fv_simulate_with_thresholds(
    x0: &[f64],
    law: &DriftLaw,
    config: &PathConfig,
    thresholds: &ExtinctionThresholds,
    noise: &mut impl Noise,
) -> Result<RunOutcome> {
    let mut engine = Engine::new(law, x0, config)?;
    loop {
        if engine.event_count >= thresholds.max_events {
            return Ok(RunOutcome {
                max_position_at_end: engine.max_position(),
                events: engine.events,
                classification: Classification::Survived {
                    horizon: config.horizon,
                },
                event_cap_reached: true,
                degenerate_extinction: false,
            });
        }
        match engine.step(noise) {
            StepStatus::AllAbsorbed(time) => {
                return Ok(RunOutcome {
                    max_position_at_end: engine.max_position(),
                    events: engine.events,
                    classification: Classification::Extinct { tau_inf: time },
                    event_cap_reached: false,
                    degenerate_extinction: true,
                });
            }
            StepStatus::Continue => {
                let state = engine.state();
                if let Some(classification) =
                    classify_extinction(&state, &engine.events, thresholds, config.horizon)
                {
                    return Ok(RunOutcome {
                        max_position_at_end: engine.max_position(),
                        events: engine.events,
                        classification,
                        event_cap_reached: false,
                        degenerate_extinction: false,
                    });
                }
            }
        }
    }
}

/// Joint lifetime / jump-factor draw from the two-particle system:
/// `lifetime` is the first absorption time of two independent driving
/// paths started at (1, 1) and `factor` is the surviving path's position at
/// that moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpPair {
    pub lifetime: f64,
    pub factor: f64,
}

/// Samples one [`JumpPair`] by simulating two independent Bessel paths
/// from 1 until the first reaches the absorption threshold.
pub fn jump_pair_from_paths(
    nu: f64,
    config: &PathConfig,
    noise: &mut impl Noise,
) -> Result<JumpPair> {
    jump_pair_capped(nu, config, config.horizon, noise)?.ok_or_else(|| {
        Error::precondition(format!(
            "two-particle pair: no absorption within horizon {}",
            config.horizon
        ))
    })
}

/// Same as [`jump_pair_from_paths`] but gives up (returning `Ok(None)`)
/// once the pair has survived past `time_cap`.
fn jump_pair_capped(
    nu: f64,
    config: &PathConfig,
    time_cap: f64,
    noise: &mut impl Noise,
) -> Result<Option<JumpPair>> {
    if !(nu.is_finite() && nu < 2.0) {
        return Err(Error::NoFiniteHittingTime { nu });
    }
    config.validate()?;
    let law = DriftLaw::Bessel { nu };
    let eps = config.eps_abs;
    let mut t = 0.0;
    let mut x = [1.0f64, 1.0f64];
    loop {
        if t > time_cap {
            return Ok(None);
        }
        let dt = config
            .dt_base
            .min(config.kappa * x[0] * x[0])
            .min(config.kappa * x[1] * x[1]);
        let mut next = [0.0f64; 2];
        for i in 0..2 {
            let dw = dt.sqrt() * noise.standard_normal();
            next[i] = x[i] + law.drift(x[i]) * dt + dw;
        }
        let crossed0 = next[0] <= eps;
        let crossed1 = next[1] <= eps;
        if crossed0 || crossed1 {
            let frac0 = if crossed0 {
                crossing_fraction(x[0], next[0], eps)
            } else {
                f64::INFINITY
            };
            let frac1 = if crossed1 {
                crossing_fraction(x[1], next[1], eps)
            } else {
                f64::INFINITY
            };
            let (survivor, frac) = if frac0 <= frac1 { (1, frac0) } else { (0, frac1) };
            let lifetime = t + frac * dt;
            // Survivor position interpolated to the crossing moment.
            let factor = x[survivor] + frac * (next[survivor] - x[survivor]);
            return Ok(Some(JumpPair {
                lifetime,
                factor: factor.max(eps),
            }));
        }
        x = next;
        t += dt;
    }
}

/// The two-particle scaling construction: iid pairs (lifetime_i, factor_i)
/// composed into running products and the partial sums
/// tau_n = sum_{j<=n} product_{j-1}^2 lifetime_j.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRun {
    /// Jump factors alpha_i (survivor positions), one per event.
    pub jump_factors: Vec<f64>,
    /// Pair lifetimes sigma_i, one per event.
    pub lifetimes: Vec<f64>,
    /// Running products of the jump factors.
    pub scale_products: Vec<f64>,
    /// Partial sums of the event-time series; nondecreasing.
    pub partial_sums: Vec<f64>,
    pub converged: bool,
}

/// Relative-Cauchy convergence rule: converged once the increment falls
/// below 1e-12 of the partial sum for 20 consecutive events.
const CONVERGENCE_RATIO: f64 = 1e-12;
const CONVERGENCE_STREAK: usize = 20;

/// Runs the scaling construction for up to `max_events` events, drawing
/// pairs by two-path simulation. Stops early once the partial sums either
/// pass the convergence test or exceed `config.horizon`.
pub fn two_particle_scaling(
    nu: f64,
    max_events: usize,
    config: &PathConfig,
    noise: &mut impl Noise,
) -> Result<ScalingRun> {
    if !(nu.is_finite() && nu < 2.0) {
        return Err(Error::NoFiniteHittingTime { nu });
    }
    if max_events == 0 {
        return Err(Error::domain("max_events must be >= 1".to_string()));
    }
    config.validate()?;
    let mut run = ScalingRunBuilder::new(max_events, config.horizon);
    while run.wants_more() {
        // The pair's own simulation never needs to run longer than it takes
        // its time-contribution to push the series past the horizon.
        let remaining = (config.horizon - run.tau) / (run.product * run.product);
        let cap = remaining.max(config.dt_base);
        match jump_pair_capped(nu, config, cap, noise)? {
            Some(pair) => run.push(pair),
            None => {
                // Past the horizon without convergence.
                run.diverged_past_horizon();
                break;
            }
        }
    }
    Ok(run.finish())
}

/// Pure composition step of the scaling construction, shared by the
/// path-driven runner and the deterministic tests.
struct ScalingRunBuilder {
    jump_factors: Vec<f64>,
    lifetimes: Vec<f64>,
    scale_products: Vec<f64>,
    partial_sums: Vec<f64>,
    product: f64,
    tau: f64,
    streak: usize,
    converged: bool,
    max_events: usize,
    horizon: f64,
    stopped: bool,
}

impl ScalingRunBuilder {
    fn new(max_events: usize, horizon: f64) -> Self {
        ScalingRunBuilder {
            jump_factors: Vec::new(),
            lifetimes: Vec::new(),
            scale_products: Vec::new(),
            partial_sums: Vec::new(),
            product: 1.0,
            tau: 0.0,
            streak: 0,
            converged: false,
            max_events,
            horizon,
            stopped: false,
        }
    }

    fn wants_more(&self) -> bool {
        !self.stopped && !self.converged && self.jump_factors.len() < self.max_events
    }

    fn push(&mut self, pair: JumpPair) {
        let increment = self.product * self.product * pair.lifetime;
        if self.tau > 0.0 && increment < CONVERGENCE_RATIO * self.tau {
            self.streak += 1;
            if self.streak >= CONVERGENCE_STREAK {
                self.converged = true;
            }
        } else {
            self.streak = 0;
        }
        self.tau += increment;
        self.jump_factors.push(pair.factor);
        self.lifetimes.push(pair.lifetime);
        self.partial_sums.push(self.tau);
        self.product *= pair.factor;
        self.scale_products.push(self.product);
        if self.tau > self.horizon {
            self.stopped = true;
        }
    }

    fn diverged_past_horizon(&mut self) {
        self.stopped = true;
    }

    fn finish(self) -> ScalingRun {
        ScalingRun {
            jump_factors: self.jump_factors,
            lifetimes: self.lifetimes,
            scale_products: self.scale_products,
            partial_sums: self.partial_sums,
            converged: self.converged,
        }
    }
}

/// Composes a scaling run from externally supplied pairs (used by tests to
/// stub the randomness away).
pub fn scaling_run_from_pairs(
    pairs: impl IntoIterator<Item = JumpPair>,
    max_events: usize,
    horizon: f64,
) -> ScalingRun {
    let mut run = ScalingRunBuilder::new(max_events, horizon);
    for pair in pairs {
        if !run.wants_more() {
            break;
        }
        run.push(pair);
    }
    run.finish()
}

/// Outcome of the sum-of-squares coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRun {
    /// Sum of squared particle positions of the system, on the step grid
    /// (jumps included).
    pub fv_z: Path,
    /// Squared Bessel process of dimension N*nu driven by the Brownian
    /// motion reconstructed from the continuous part of `fv_z`.
    pub coupled_z: Path,
    /// Whether coupled_z <= fv_z + tol held at every shared grid time.
    pub domination_holds: bool,
    /// Largest observed value of coupled_z - fv_z.
    pub max_violation: f64,
    /// Comparison tolerance, 10 * dt_base.
    pub tol: f64,
    /// N*nu < 2: the domination claim is outside its hypothesis; the
    /// comparison is still computed.
    pub low_dimension_warning: bool,
    pub events: Vec<EventRecord>,
    pub classification: Classification,
}

/// Runs the N-particle Bessel system, records Z = sum of squared
/// positions, reconstructs the Brownian driver from Z's continuous
/// increments, and integrates the coupled squared Bessel process of
/// dimension N*nu from the same start with the same driver.
///
/// Between jumps the two recursions are algebraically identical, so the
/// coupled path reproduces Z exactly (up to rounding) until the first
/// event; each relocation lifts Z while the coupled process continues,
/// which is what makes the domination hold.
pub fn sum_of_squares_coupling(
    x0: &[f64],
    nu: f64,
    horizon: f64,
    config: &PathConfig,
    noise: &mut impl Noise,
) -> Result<CouplingRun> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::domain(format!("requires horizon > 0, got {horizon}")));
    }
    let law = DriftLaw::Bessel { nu };
    let run_config = PathConfig { horizon, ..*config };
    let mut engine = Engine::new(&law, x0, &run_config)?;
    let dim = x0.len() as f64 * nu;
    let low_dimension_warning = dim < 2.0;
    let tol = 10.0 * config.dt_base;

    let z0: f64 = x0.iter().map(|&x| x * x).sum();
    let mut times = vec![0.0];
    let mut z_values = vec![z0];
    let mut zhat_values = vec![z0];
    let mut y_hat = z0.sqrt();
    let mut max_violation = f64::NEG_INFINITY;
    // Drift increment of the radial process, clamped to half the current
    // level: the clamp only binds when the shared grid is too coarse to
    // resolve the coupled process, and is applied identically in the
    // reconstruction and in the coupled recursion so the pre-jump identity
    // survives.
    let radial_drift = |y: f64, dt: f64| ((dim - 1.0) * dt / (2.0 * y)).clamp(-0.5 * y, 0.5 * y);

    let classification = loop {
        if engine.time >= horizon {
            break Classification::Survived { horizon };
        }
        let status = engine.step(noise);
        let dt = engine.last_dt;
        let y_before: f64 = engine.before.iter().map(|&x| x * x).sum::<f64>().sqrt();
        let z_continuous: f64 = engine
            .after_sde
            .iter()
            .map(|&x| x.max(0.0) * x.max(0.0))
            .sum();
        let brownian_increment = (z_continuous.sqrt() - y_before) - radial_drift(y_before, dt);
        y_hat = (y_hat + brownian_increment + radial_drift(y_hat, dt)).max(0.0);

        let z_now: f64 = engine.positions.iter().map(|&x| x.max(0.0) * x.max(0.0)).sum();
        times.push(engine.time);
        z_values.push(z_now);
        zhat_values.push(y_hat * y_hat);
        max_violation = max_violation.max(y_hat * y_hat - z_now);

        if let StepStatus::AllAbsorbed(time) = status {
            break Classification::Extinct { tau_inf: time };
        }
    };

    let terminal = match classification {
        Classification::Extinct { tau_inf } => Terminal::Absorbed(tau_inf),
        Classification::Survived { .. } => Terminal::HorizonReached,
    };
    let domination_holds = max_violation <= tol;
    Ok(CouplingRun {
        fv_z: Path {
            times: times.clone(),
            values: z_values,
            terminal,
        },
        coupled_z: Path {
            times,
            values: zhat_values,
            terminal,
        },
        domination_holds,
        max_violation,
        tol,
        low_dimension_warning,
        events: engine.events,
        classification,
    })
}
