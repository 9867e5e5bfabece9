//! The interacting particle system: shielding levels reflected above the
//! advancing front, local-time hazard with exponential clocks, infection
//! bookkeeping, the globally reflected and tagged-particle variants, and the
//! Newtonian-barrier systems.

use crate::coefficients::{validate_config, CoefficientSet, Diffusion, Drift, InitialLaw, KernelSpec};
use crate::error::{Error, Result};
use crate::sde::{reflected_euler_step, NoiseStream, LANE_CLOCKS, LANE_DYNAMICS, LANE_INITIAL};
use rayon::prelude::*;

/// Particle count at which within-step work moves onto the thread pool.
const PAR_THRESHOLD: usize = 96;

/// Infection status of one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Status {
    Susceptible { position: f64 },
    Infected { tau: f64 },
}

/// Public view of one particle's bookkeeping state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub status: Status,
    /// Local time counted by the infection mechanism while susceptible;
    /// continues with the physical regulator pushes for particles that keep
    /// reflecting after infection.
    pub local_time: f64,
    /// Accumulated hazard; capped at the clock once the particle infects.
    pub hazard: f64,
    /// Standard exponential clock a particle races against.
    pub clock: f64,
}

/// The advancing front: base level, gain, kernel, and the infection times
/// that feed it.
#[derive(Debug, Clone)]
pub struct FrontState {
    /// Infection times, nondecreasing.
    pub taus: Vec<f64>,
    pub a0: f64,
    pub alpha: f64,
    pub kernel: KernelSpec,
}

impl FrontState {
    pub fn new(a0: f64, alpha: f64, kernel: KernelSpec) -> Self {
        FrontState { taus: Vec::new(), a0, alpha, kernel }
    }

    pub fn push_infection(&mut self, tau: f64) {
        debug_assert!(self.taus.last().map_or(true, |last| *last <= tau));
        self.taus.push(tau);
    }
}

/// Front level `A(t) = a0 + (alpha/n) sum_{tau_j <= t} P(t - tau_j)`,
/// evaluated from the kernel cumulative in closed form.
pub fn front_level(front: &FrontState, t: f64, n: usize) -> f64 {
    let mut sum = 0.0;
    for &tau in &front.taus {
        if tau <= t {
            sum += front.kernel.cdf(t - tau);
        }
    }
    front.a0 + front.alpha * sum / n as f64
}

/// Contagiousness `C(t) = (1/n) sum_{tau_j <= t} [P(t-tau_j) - P(t-tau_j-dbar)]`.
/// Each infection contributes on the window `[tau, tau + 2 dbar]` and then
/// drops out exactly.
pub fn contagiousness(front: &FrontState, t: f64, n: usize) -> f64 {
    let d = front.kernel.dbar;
    let mut sum = 0.0;
    for &tau in &front.taus {
        if tau <= t {
            sum += front.kernel.cdf(t - tau) - front.kernel.cdf(t - tau - d);
        }
    }
    sum / n as f64
}

/// Which system the engine runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Particles are frozen at infection and removed from the dynamics.
    True,
    /// Particles keep reflecting after their clock fires; infection times
    /// are still recorded and still drive the front.
    GloballyReflected,
    /// The tagged particle never infects and never contributes to the front
    /// or to contagiousness; everything else is coupled to the `True` run.
    ArtificialMinusI { excluded: usize },
    /// Newtonian barrier, velocity decremented by collision local time.
    BarnesTilde { u: f64, kappa: f64 },
    /// Newtonian barrier, velocity decremented by infection counts.
    BarnesBar { u: f64 },
}

/// Full configuration of one engine run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n: usize,
    pub t_horizon: f64,
    pub dt: f64,
    pub mode: Mode,
    pub seed: u64,
    pub coeffs: CoefficientSet,
    pub kernel: KernelSpec,
    pub initial: InitialLaw,
    pub a0: f64,
    pub alpha: f64,
    /// Record per-particle position, local-time, and hazard series.
    pub record_particles: bool,
}

impl RunConfig {
    /// Number of grid steps; the grid is `t_k = k dt` for `k = 0..=steps`.
    pub fn steps(&self) -> usize {
        (self.t_horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Config("population size must be at least 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.dt)));
        }
        if !(self.t_horizon.is_finite() && self.t_horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.t_horizon)));
        }
        let steps = self.t_horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) || steps.round() < 1.0 {
            return Err(Error::Config(format!(
                "horizon {} is not a whole number of steps of size {}",
                self.t_horizon, self.dt
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!("front gain must be nonnegative, got {}", self.alpha)));
        }
        if self.initial.a0 != self.a0 {
            return Err(Error::Config(format!(
                "initial law floor {} disagrees with the front start {}",
                self.initial.a0, self.a0
            )));
        }
        match self.mode {
            Mode::ArtificialMinusI { excluded } => {
                if excluded >= self.n {
                    return Err(Error::Config(format!(
                        "tagged particle {excluded} out of range for n = {}",
                        self.n
                    )));
                }
            }
            Mode::BarnesTilde { u, kappa } => {
                if !u.is_finite() || !kappa.is_finite() || kappa < 0.0 {
                    return Err(Error::Config(format!(
                        "barrier parameters must be finite with kappa >= 0, got u={u}, kappa={kappa}"
                    )));
                }
            }
            Mode::BarnesBar { u } => {
                if !u.is_finite() {
                    return Err(Error::Config(format!("barrier velocity must be finite, got {u}")));
                }
            }
            _ => {}
        }
        let report = validate_config(&self.kernel, &self.coeffs, &self.initial);
        if !report.is_valid() {
            return Err(Error::Config(format!(
                "structural validation failed:\n{}",
                report.summary()
            )));
        }
        Ok(())
    }
}

/// One infection event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Infection {
    pub particle: usize,
    pub tau: f64,
}

/// Optional per-particle series, one inner vector per particle, indexed by
/// grid point.
#[derive(Debug, Clone)]
pub struct ParticleSeries {
    pub positions: Vec<Vec<f64>>,
    pub local_time: Vec<Vec<f64>>,
    pub hazard: Vec<Vec<f64>>,
}

/// Full record of one run on the time grid.
#[derive(Debug, Clone)]
pub struct SystemTrace {
    pub times: Vec<f64>,
    /// Front level (or barrier level for the Newtonian variants).
    pub front: Vec<f64>,
    /// Infected proportion; a step function with jumps of 1/n.
    pub infected: Vec<f64>,
    /// Contagiousness from the kernel closed form.
    pub contagion: Vec<f64>,
    /// Compensator: running population average of the hazard integral over
    /// susceptible periods.
    pub compensator: Vec<f64>,
    pub infections: Vec<Infection>,
    /// Barrier velocity series for the Newtonian variants.
    pub velocity: Option<Vec<f64>>,
    pub particles: Option<ParticleSeries>,
    pub n: usize,
    pub dt: f64,
}

impl SystemTrace {
    /// Martingale series `M = I - V` on the grid.
    pub fn martingale(&self) -> Vec<f64> {
        self.infected
            .iter()
            .zip(&self.compensator)
            .map(|(i, v)| i - v)
            .collect()
    }

    /// Nearest grid index for a probe time.
    pub fn index_at(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).min(self.times.len() - 1)
    }

    pub fn final_infected(&self) -> f64 {
        *self.infected.last().unwrap_or(&0.0)
    }

    /// Final bookkeeping state of every particle.
    pub fn final_states(&self) -> Option<Vec<ParticleState>> {
        let series = self.particles.as_ref()?;
        let last = self.times.len() - 1;
        let mut taus = vec![None; series.positions.len()];
        for inf in &self.infections {
            taus[inf.particle] = Some(inf.tau);
        }
        Some(
            (0..series.positions.len())
                .map(|i| ParticleState {
                    status: match taus[i] {
                        Some(tau) => Status::Infected { tau },
                        None => Status::Susceptible { position: series.positions[i][last] },
                    },
                    local_time: series.local_time[i][last],
                    hazard: series.hazard[i][last],
                    clock: f64::NAN,
                })
                .collect(),
        )
    }
}

struct Particle {
    x: f64,
    ell: f64,
    hazard: f64,
    chi: f64,
    tau: Option<f64>,
    stream: NoiseStream,
}

#[derive(Clone, Copy)]
struct StepOutcome {
    /// Local time counted toward the hazard and the compensator this step;
    /// truncated at the clock on the crossing step so the hazard integral
    /// stops exactly at the exponential draw.
    dl_counted: f64,
    infected: bool,
}

fn step_one(
    p: &mut Particle,
    t: f64,
    dt: f64,
    boundary_next: f64,
    coeffs: &CoefficientSet,
    gamma: f64,
    can_infect: bool,
    keep_moving: bool,
) -> Result<StepOutcome> {
    if p.tau.is_some() && !keep_moving {
        return Ok(StepOutcome { dl_counted: 0.0, infected: false });
    }
    let xi = p.stream.next_normal();
    let r = reflected_euler_step(p.x, t, dt, boundary_next, coeffs, xi)?;
    p.x = r.position;
    let dl = r.local_time;
    if p.tau.is_some() {
        p.ell += dl;
        return Ok(StepOutcome { dl_counted: 0.0, infected: false });
    }
    let dh = gamma * dl;
    if can_infect && dh > 0.0 && p.hazard + dh >= p.chi {
        let dl_counted = (p.chi - p.hazard) / gamma;
        p.hazard = p.chi;
        p.ell += dl_counted;
        Ok(StepOutcome { dl_counted, infected: true })
    } else {
        p.hazard += dh;
        p.ell += dl;
        Ok(StepOutcome { dl_counted: dl, infected: false })
    }
}

fn init_particles(config: &RunConfig) -> Vec<Particle> {
    (0..config.n)
        .map(|i| {
            let mut init_stream = NoiseStream::with_lane(config.seed, LANE_INITIAL, i as u64);
            let x = match config.initial.family {
                crate::coefficients::InitialFamily::Point { .. } => config.initial.sample(0.5),
                _ => config.initial.sample(init_stream.next_uniform_open()),
            };
            let mut clock_stream = NoiseStream::with_lane(config.seed, LANE_CLOCKS, i as u64);
            Particle {
                x,
                ell: 0.0,
                hazard: 0.0,
                chi: clock_stream.next_exponential(),
                tau: None,
                stream: NoiseStream::with_lane(config.seed, LANE_DYNAMICS, i as u64),
            }
        })
        .collect()
}

struct TraceBuilder {
    times: Vec<f64>,
    front: Vec<f64>,
    infected: Vec<f64>,
    contagion: Vec<f64>,
    compensator: Vec<f64>,
    infections: Vec<Infection>,
    velocity: Option<Vec<f64>>,
    particles: Option<ParticleSeries>,
}

impl TraceBuilder {
    fn new(config: &RunConfig, parts: &[Particle], with_velocity: Option<f64>, a_start: f64) -> Self {
        let steps = config.steps();
        let particles = config.record_particles.then(|| ParticleSeries {
            positions: parts
                .iter()
                .map(|p| {
                    let mut v = Vec::with_capacity(steps + 1);
                    v.push(p.x);
                    v
                })
                .collect(),
            local_time: vec![Vec::with_capacity(steps + 1); parts.len()],
            hazard: vec![Vec::with_capacity(steps + 1); parts.len()],
        });
        let mut builder = TraceBuilder {
            times: Vec::with_capacity(steps + 1),
            front: Vec::with_capacity(steps + 1),
            infected: Vec::with_capacity(steps + 1),
            contagion: Vec::with_capacity(steps + 1),
            compensator: Vec::with_capacity(steps + 1),
            infections: Vec::new(),
            velocity: with_velocity.map(|u| {
                let mut v = Vec::with_capacity(steps + 1);
                v.push(u);
                v
            }),
            particles,
        };
        builder.times.push(0.0);
        builder.front.push(a_start);
        builder.infected.push(0.0);
        builder.contagion.push(0.0);
        builder.compensator.push(0.0);
        if let Some(series) = &mut builder.particles {
            for (i, p) in parts.iter().enumerate() {
                series.local_time[i].push(p.ell);
                series.hazard[i].push(p.hazard);
            }
        }
        builder
    }

    fn push_row(
        &mut self,
        t: f64,
        front: f64,
        infected: f64,
        contagion: f64,
        compensator: f64,
        parts: &[Particle],
    ) {
        self.times.push(t);
        self.front.push(front);
        self.infected.push(infected);
        self.contagion.push(contagion);
        self.compensator.push(compensator);
        if let Some(series) = &mut self.particles {
            for (i, p) in parts.iter().enumerate() {
                series.positions[i].push(p.x);
                series.local_time[i].push(p.ell);
                series.hazard[i].push(p.hazard);
            }
        }
    }

    fn finish(self, config: &RunConfig) -> SystemTrace {
        SystemTrace {
            times: self.times,
            front: self.front,
            infected: self.infected,
            contagion: self.contagion,
            compensator: self.compensator,
            infections: self.infections,
            velocity: self.velocity,
            particles: self.particles,
            n: config.n,
            dt: config.dt,
        }
    }
}

fn step_all(
    parts: &mut [Particle],
    t: f64,
    dt: f64,
    boundary_next: f64,
    coeffs: &CoefficientSet,
    gamma: f64,
    excluded: Option<usize>,
    keep_moving: bool,
) -> Result<Vec<StepOutcome>> {
    if parts.len() >= PAR_THRESHOLD {
        parts
            .par_iter_mut()
            .enumerate()
            .map(|(i, p)| {
                step_one(p, t, dt, boundary_next, coeffs, gamma, excluded != Some(i), keep_moving)
            })
            .collect()
    } else {
        parts
            .iter_mut()
            .enumerate()
            .map(|(i, p)| {
                step_one(p, t, dt, boundary_next, coeffs, gamma, excluded != Some(i), keep_moving)
            })
            .collect()
    }
}

/// Run the configured system and record its trace. The Newtonian-barrier
/// modes are dispatched to [`run_barnes`].
pub fn run(config: &RunConfig) -> Result<SystemTrace> {
    config.validate()?;
    match config.mode {
        Mode::BarnesTilde { .. } | Mode::BarnesBar { .. } => run_barnes_inner(config),
        _ => run_standard(config),
    }
}

fn run_standard(config: &RunConfig) -> Result<SystemTrace> {
    let n = config.n;
    let steps = config.steps();
    let dt = config.dt;
    let (excluded, keep_moving) = match config.mode {
        Mode::True => (None, false),
        Mode::GloballyReflected => (None, true),
        Mode::ArtificialMinusI { excluded } => (Some(excluded), false),
        _ => unreachable!("barrier modes are dispatched separately"),
    };

    let mut parts = init_particles(config);
    let mut front = FrontState::new(config.a0, config.alpha, config.kernel);
    let mut builder = TraceBuilder::new(config, &parts, None, config.a0);
    let mut v = 0.0;
    let mut c_curr = 0.0;

    for k in 0..steps {
        let t = k as f64 * dt;
        let tn = (k + 1) as f64 * dt;
        let gamma = config.coeffs.rate(t, c_curr);
        let a_next = front_level(&front, tn, n);

        let outcomes = step_all(&mut parts, t, dt, a_next, &config.coeffs, gamma, excluded, keep_moving)?;

        let mut dl_sum = 0.0;
        for (i, out) in outcomes.iter().enumerate() {
            dl_sum += out.dl_counted;
            if out.infected {
                parts[i].tau = Some(tn);
                front.push_infection(tn);
                builder.infections.push(Infection { particle: i, tau: tn });
            }
        }
        v += gamma * dl_sum / n as f64;
        c_curr = contagiousness(&front, tn, n);
        let infected = builder.infections.len() as f64 / n as f64;
        builder.push_row(tn, a_next, infected, c_curr, v, &parts);
    }

    Ok(builder.finish(config))
}

/// Run a Newtonian-barrier system: Brownian particles reflect off a barrier
/// whose level integrates its velocity, and the velocity decreases with
/// collision local time (`BarnesTilde`, scaled by `kappa/n`) or with
/// infection counts (`BarnesBar`, by `1/n` each). The infection rate is
/// evaluated at the barrier velocity. Drift 0 and diffusion 1 are enforced.
pub fn run_barnes(config: &RunConfig) -> Result<SystemTrace> {
    config.validate()?;
    run_barnes_inner(config)
}

fn run_barnes_inner(config: &RunConfig) -> Result<SystemTrace> {
    let (u_start, kappa) = match config.mode {
        Mode::BarnesTilde { u, kappa } => (u, Some(kappa)),
        Mode::BarnesBar { u } => (u, None),
        _ => {
            return Err(Error::Config("barrier run requires a Newtonian-barrier mode".into()));
        }
    };
    if config.coeffs.drift != (Drift::Constant { mu: 0.0 })
        || config.coeffs.diffusion != (Diffusion::Constant { c: 1.0 })
    {
        return Err(Error::Config(
            "barrier modes require zero drift and unit diffusion".into(),
        ));
    }

    let n = config.n;
    let steps = config.steps();
    let dt = config.dt;
    let mut parts = init_particles(config);
    let mut front = FrontState::new(config.a0, config.alpha, config.kernel);
    let mut builder = TraceBuilder::new(config, &parts, Some(u_start), config.a0);
    let mut y = config.a0;
    let mut u = u_start;
    let mut v = 0.0;

    for k in 0..steps {
        let t = k as f64 * dt;
        let tn = (k + 1) as f64 * dt;
        let gamma = config.coeffs.rate(t, u);
        let y_next = y + u * dt;

        let outcomes = step_all(&mut parts, t, dt, y_next, &config.coeffs, gamma, None, true)?;

        let mut dl_sum = 0.0;
        let mut new_infections = 0usize;
        for (i, out) in outcomes.iter().enumerate() {
            dl_sum += out.dl_counted;
            if out.infected {
                parts[i].tau = Some(tn);
                front.push_infection(tn);
                builder.infections.push(Infection { particle: i, tau: tn });
                new_infections += 1;
            }
        }
        v += gamma * dl_sum / n as f64;
        u = match kappa {
            Some(kappa) => u - kappa * gamma * dl_sum / n as f64,
            None => u - new_infections as f64 / n as f64,
        };
        y = y_next;

        let contagion = contagiousness(&front, tn, n);
        let infected = builder.infections.len() as f64 / n as f64;
        builder.push_row(tn, y, infected, contagion, v, &parts);
        builder.velocity.as_mut().expect("velocity series").push(u);
    }

    Ok(builder.finish(config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{InitialFamily, KernelFamily, Rate};

    fn tapered_kernel() -> KernelSpec {
        KernelSpec::new(KernelFamily::TaperedUniform { taper: 0.05 }, 0.5).unwrap()
    }

    fn default_config(n: usize, seed: u64) -> RunConfig {
        RunConfig {
            n,
            t_horizon: 1.0,
            dt: 1e-3,
            mode: Mode::True,
            seed,
            coeffs: CoefficientSet::new(
                Drift::Constant { mu: 0.0 },
                Diffusion::Constant { c: 1.0 },
                Rate::AffineInContagion { g0: 5.0, g1: 20.0 },
            )
            .unwrap(),
            kernel: tapered_kernel(),
            initial: InitialLaw::new(InitialFamily::Point { x0: 0.3 }, 0.0).unwrap(),
            a0: 0.0,
            alpha: 0.5,
            record_particles: false,
        }
    }

    #[test]
    fn front_level_trivial_cases() {
        let kernel = KernelSpec::new(KernelFamily::Uniform, 2.0).unwrap();
        let mut front = FrontState::new(0.1, 0.0, kernel);
        front.push_infection(0.2);
        assert_eq!(front_level(&front, 1.0, 4), 0.1, "gain zero keeps the base level");

        let mut front = FrontState::new(0.1, 0.8, kernel);
        front.push_infection(0.0);
        assert!((front_level(&front, 2.5, 4) - (0.1 + 0.8 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn front_level_matches_the_hand_oracle() {
        let kernel = KernelSpec::new(KernelFamily::Uniform, 2.0).unwrap();
        let mut front = FrontState::new(0.1, 0.8, kernel);
        front.push_infection(0.5);
        front.push_infection(1.0);
        // P(1.0) = 0.5 and P(0.5) = 0.25 for the uniform kernel on [0, 2].
        let expected = 0.1 + 0.8 / 4.0 * (0.5 + 0.25);
        assert!((front_level(&front, 1.5, 4) - expected).abs() < 1e-15);
        // Future infections are ignored.
        front.push_infection(1.7);
        assert!((front_level(&front, 1.5, 4) - expected).abs() < 1e-15);
    }

    #[test]
    fn contagiousness_trivial_cases() {
        let kernel = KernelSpec::new(KernelFamily::Uniform, 2.0).unwrap();
        let front = FrontState::new(0.0, 1.0, kernel);
        assert_eq!(contagiousness(&front, 1.0, 4), 0.0, "no infections");

        let mut front = FrontState::new(0.0, 1.0, kernel);
        front.push_infection(0.0);
        assert!((contagiousness(&front, 2.0, 4) - 0.25).abs() < 1e-15, "full window is 1/n");
        assert_eq!(contagiousness(&front, 4.0, 4), 0.0, "vanishes after twice the span");
        assert!((contagiousness(&front, 3.0, 1) - 0.5).abs() < 1e-15, "P(3) - P(1) = 1 - 0.5");
    }

    #[test]
    fn contagiousness_matches_quadrature_of_the_convolution() {
        // Oracle: C(t) = int rho(t-s) (I_s - I_{s-dbar}) ds with the step
        // function I built from the infection times, on a fine trapezoid.
        let kernel = tapered_kernel();
        let n = 4;
        let mut front = FrontState::new(0.0, 1.0, kernel);
        for tau in [0.12, 0.31, 0.55] {
            front.push_infection(tau);
        }
        let i_at = |s: f64| front.taus.iter().filter(|tau| **tau <= s).count() as f64 / n as f64;
        let d = kernel.dbar;
        let mut state = 31u64;
        for _ in 0..100 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let t = 0.1 + (state >> 11) as f64 / (1u64 << 53) as f64 * 1.4;
            // The integrand jumps where I or its lag jumps, so integrate
            // piecewise between those breakpoints.
            let f = |s: f64| kernel.density(t - s) * (i_at(s) - i_at(s - d));
            let mut cuts = vec![t - d, t];
            for &tau in &front.taus {
                for b in [tau, tau + d] {
                    if b > t - d && b < t {
                        cuts.push(b);
                    }
                }
            }
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut oracle = 0.0;
            for w in cuts.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let m = 2000;
                let h = (hi - lo) / m as f64;
                let mut acc = 0.5 * (f(lo + 1e-12) + f(hi - 1e-12));
                for j in 1..m {
                    acc += f(lo + h * j as f64);
                }
                oracle += acc * h;
            }
            let got = contagiousness(&front, t, n);
            assert!(
                (got - oracle).abs() < 1e-6,
                "closed form {got} vs quadrature {oracle} at t = {t}"
            );
        }
    }

    #[test]
    fn zero_rate_never_infects() {
        let mut config = default_config(16, 7);
        config.coeffs.rate = Rate::Constant { g: 0.0 };
        config.record_particles = true;
        let trace = run(&config).unwrap();
        assert!(trace.infections.is_empty());
        assert!(trace.infected.iter().all(|i| *i == 0.0));
        assert!(trace.compensator.iter().all(|v| *v == 0.0));
        assert!(trace.front.iter().all(|a| *a == 0.0), "front never moves");
        let series = trace.particles.as_ref().unwrap();
        assert!(series.hazard.iter().all(|h| h.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn particles_started_far_above_accrue_no_local_time() {
        let mut config = default_config(8, 3);
        config.initial = InitialLaw::new(InitialFamily::Point { x0: 50.0 }, 0.0).unwrap();
        config.t_horizon = 0.05;
        config.record_particles = true;
        let trace = run(&config).unwrap();
        assert!(trace.infections.is_empty());
        let series = trace.particles.as_ref().unwrap();
        assert!(
            series.local_time.iter().all(|l| l.iter().all(|x| *x == 0.0)),
            "no boundary contact from far above on a short horizon"
        );
        assert!(trace.compensator.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_particle_infection_probability_matches_the_exponential_formula() {
        // P(tau <= T) for one particle at constant rate g equals
        // E[1 - exp(-g * ell_T)] with ell_T the local time it would accrue
        // without infection; estimate both sides over coupled seeds.
        let g = 3.0;
        let reps = 2000;
        let mut hits = 0.0;
        let mut formula = 0.0;
        for rep in 0..reps {
            let mut config = default_config(1, 1000 + rep);
            config.coeffs.rate = Rate::Constant { g };
            config.initial = InitialLaw::new(InitialFamily::Point { x0: 1e-6 }, 0.0).unwrap();
            config.alpha = 0.0;
            let trace = run(&config).unwrap();
            if !trace.infections.is_empty() {
                hits += 1.0;
            }
            let mut minus = config.clone();
            minus.mode = Mode::ArtificialMinusI { excluded: 0 };
            minus.record_particles = true;
            let t2 = run(&minus).unwrap();
            let h = t2.particles.as_ref().unwrap().hazard[0].last().copied().unwrap();
            formula += 1.0 - (-h).exp();
        }
        let p_emp = hits / reps as f64;
        let p_formula = formula / reps as f64;
        let se = (p_emp * (1.0 - p_emp) / reps as f64).sqrt().max(1e-4);
        assert!(
            (p_emp - p_formula).abs() < 3.5 * se,
            "empirical {p_emp} vs formula {p_formula} (se {se})"
        );
    }

    #[test]
    fn trace_invariants_hold_on_the_default_scenario() {
        let mut config = default_config(64, 11);
        config.record_particles = true;
        let trace = run(&config).unwrap();

        for k in 1..trace.times.len() {
            assert!(trace.front[k] >= trace.front[k - 1], "front must be nondecreasing");
            assert!(
                trace.front[k] <= config.a0 + config.alpha * trace.infected[k] + 1e-12,
                "front bounded by gain times infected fraction"
            );
            assert!(trace.compensator[k] >= trace.compensator[k - 1], "compensator nondecreasing");
            assert!(trace.contagion[k] >= 0.0);
            let jump = trace.infected[k] - trace.infected[k - 1];
            let units = jump * config.n as f64;
            assert!(
                (units - units.round()).abs() < 1e-9 && jump >= 0.0,
                "infected fraction moves in jumps of 1/n"
            );
        }
        assert!(trace.final_infected() > 0.0, "default scenario must ignite");

        let series = trace.particles.as_ref().unwrap();
        let mut taus = vec![f64::INFINITY; config.n];
        for inf in &trace.infections {
            taus[inf.particle] = inf.tau;
        }
        for i in 0..config.n {
            for k in 0..trace.times.len() {
                if trace.times[k] <= taus[i] {
                    assert!(
                        series.positions[i][k] >= trace.front[k] - 1e-12,
                        "susceptible particle below the front at t = {}",
                        trace.times[k]
                    );
                }
            }
        }
    }

    #[test]
    fn tagged_particle_run_is_coupled_to_the_true_run() {
        let mut config = default_config(8, 21);
        config.initial = InitialLaw::new(InitialFamily::Point { x0: 0.05 }, 0.0).unwrap();
        config.record_particles = true;
        let true_trace = run(&config).unwrap();

        let mut minus = config.clone();
        minus.mode = Mode::ArtificialMinusI { excluded: 0 };
        let minus_trace = run(&minus).unwrap();

        let tau0 = true_trace
            .infections
            .iter()
            .find(|inf| inf.particle == 0)
            .map(|inf| inf.tau)
            .unwrap_or(f64::INFINITY);
        assert!(
            minus_trace.infections.iter().all(|inf| inf.particle != 0),
            "tagged particle never infects"
        );

        let a = true_trace.particles.as_ref().unwrap();
        let b = minus_trace.particles.as_ref().unwrap();
        for k in 0..true_trace.times.len() {
            if true_trace.times[k] > tau0 {
                break;
            }
            for j in 1..config.n {
                assert_eq!(
                    a.positions[j][k], b.positions[j][k],
                    "particle {j} diverged at grid index {k} before the tagged infection"
                );
            }
        }
        for j in 1..config.n {
            let ta = true_trace.infections.iter().find(|i| i.particle == j).map(|i| i.tau);
            let tb = minus_trace.infections.iter().find(|i| i.particle == j).map(|i| i.tau);
            match (ta, tb) {
                (Some(x), Some(y)) if x <= tau0 => assert_eq!(x, y),
                (Some(x), None) => assert!(x > tau0),
                _ => {}
            }
        }
    }

    #[test]
    fn globally_reflected_run_matches_true_infection_times() {
        let config = default_config(32, 5);
        let true_trace = run(&config).unwrap();
        let mut gr = config.clone();
        gr.mode = Mode::GloballyReflected;
        let gr_trace = run(&gr).unwrap();

        assert_eq!(true_trace.infections.len(), gr_trace.infections.len());
        for (a, b) in true_trace.infections.iter().zip(&gr_trace.infections) {
            assert_eq!(a.particle, b.particle);
            assert_eq!(a.tau, b.tau);
        }
        assert_eq!(true_trace.front, gr_trace.front, "fronts coincide for all times");
    }

    #[test]
    fn runs_are_deterministic_across_thread_counts() {
        let config = default_config(128, 99);
        let base = run(&config).unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let t1 = pool1.install(|| run(&config).unwrap());
        let t4 = pool4.install(|| run(&config).unwrap());
        for t in [&t1, &t4] {
            assert_eq!(base.front, t.front);
            assert_eq!(base.infected, t.infected);
            assert_eq!(base.contagion, t.contagion);
            assert_eq!(base.compensator, t.compensator);
            assert_eq!(base.infections, t.infections);
        }
    }

    #[test]
    fn barrier_with_zero_velocity_and_no_contact_stays_put() {
        let mut config = default_config(8, 17);
        config.mode = Mode::BarnesTilde { u: 0.0, kappa: 1.0 };
        config.coeffs.rate = Rate::Constant { g: 2.0 };
        config.initial = InitialLaw::new(InitialFamily::Point { x0: 40.0 }, 0.0).unwrap();
        config.t_horizon = 0.05;
        let trace = run(&config).unwrap();
        assert!(trace.front.iter().all(|y| *y == 0.0), "barrier never moves");
        assert!(trace.velocity.as_ref().unwrap().iter().all(|u| *u == 0.0));
        assert!(trace.infections.is_empty());
    }

    #[test]
    fn barrier_with_zero_rate_moves_linearly() {
        let mut config = default_config(8, 17);
        config.mode = Mode::BarnesTilde { u: 0.25, kappa: 1.0 };
        config.coeffs.rate = Rate::Constant { g: 0.0 };
        config.initial = InitialLaw::new(InitialFamily::Point { x0: 1.0 }, 0.0).unwrap();
        let trace = run(&config).unwrap();
        for (k, y) in trace.front.iter().enumerate() {
            let expected = 0.25 * trace.times[k];
            assert!((y - expected).abs() < 1e-12, "barrier level {y} vs {expected}");
        }
        assert!(trace.velocity.as_ref().unwrap().iter().all(|u| *u == 0.25));
    }

    #[test]
    fn barrier_velocity_is_nonincreasing_under_nonnegative_rates() {
        for mode in [Mode::BarnesTilde { u: 1.0, kappa: 1.0 }, Mode::BarnesBar { u: 1.0 }] {
            let mut config = default_config(64, 23);
            config.mode = mode;
            config.coeffs.rate = Rate::Constant { g: 4.0 };
            config.initial =
                InitialLaw::new(InitialFamily::TruncatedGaussian { mean: 0.4, stdev: 0.3 }, 0.0)
                    .unwrap();
            let trace = run(&config).unwrap();
            let u = trace.velocity.as_ref().unwrap();
            for k in 1..u.len() {
                assert!(u[k] <= u[k - 1] + 1e-15, "velocity increased in {mode:?}");
            }
            assert!(!trace.infections.is_empty(), "barrier runs should produce infections");
        }
    }

    #[test]
    fn barrier_modes_require_unit_brownian_particles() {
        let mut config = default_config(8, 2);
        config.mode = Mode::BarnesBar { u: 0.5 };
        config.coeffs.drift = Drift::Constant { mu: 0.3 };
        assert!(matches!(run_barnes(&config), Err(Error::Config(_))));
        config.coeffs.drift = Drift::Constant { mu: 0.0 };
        config.coeffs.diffusion = Diffusion::Constant { c: 2.0 };
        assert!(matches!(run_barnes(&config), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let mut config = default_config(0, 1);
        assert!(run(&config).is_err());
        config = default_config(4, 1);
        config.mode = Mode::ArtificialMinusI { excluded: 4 };
        assert!(run(&config).is_err());
        config = default_config(4, 1);
        config.dt = -1.0;
        assert!(run(&config).is_err());
        config = default_config(4, 1);
        config.t_horizon = 1.0005e-3 * 7.0;
        config.dt = 1e-3;
        assert!(run(&config).is_err(), "horizon must be a whole number of steps");
    }
}
