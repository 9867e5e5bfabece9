//! Statistics over recorded runs: compensator reconstruction, martingale
//! probes over replications, the population-size decay fit, tie counts,
//! the conditional infection-law consistency check, the continuation
//! reproduction number, and the deterministic SIR benchmark.

use crate::coefficients::Rate;
use crate::epidemic::{run, Mode, RunConfig, Status, SystemTrace};
use crate::error::{Error, Result};
use crate::sde::{reflected_euler_step, NoiseStream, LANE_CONTINUATION, LANE_FRESH, LANE_REPLICATION};
use crate::sde::derive_seed;
use crate::stats::{mean, slope_t_test, std_error, ols};
use rayon::prelude::*;

/// Rebuild the compensator from per-particle local-time records:
/// `V_k = (1/n) sum_i sum_{m<k} 1{t_m < tau_i} gamma(t_m, C_m) dl_i(m)`.
/// Matches the engine's own running accumulation.
pub fn compute_v(trace: &SystemTrace, rate: &Rate) -> Result<Vec<f64>> {
    let series = trace
        .particles
        .as_ref()
        .ok_or_else(|| Error::MissingData("per-particle series were not recorded".into()))?;
    let n = trace.n;
    let grid = trace.times.len();
    let mut taus = vec![f64::INFINITY; n];
    for inf in &trace.infections {
        taus[inf.particle] = inf.tau;
    }
    let mut v = Vec::with_capacity(grid);
    v.push(0.0);
    let mut acc = 0.0;
    for m in 0..grid - 1 {
        let t_m = trace.times[m];
        let gamma = rate.eval(t_m, trace.contagion[m]);
        let mut dl_sum = 0.0;
        for i in 0..n {
            if t_m < taus[i] {
                dl_sum += series.local_time[i][m + 1] - series.local_time[i][m];
            }
        }
        acc += gamma * dl_sum / n as f64;
        v.push(acc);
    }
    Ok(v)
}

/// One probe pair of the martingale test.
#[derive(Debug, Clone, Copy)]
pub struct ProbeStat {
    pub s: f64,
    pub t: f64,
    /// Sample mean of `M_t - M_s` over replications.
    pub mean_increment: f64,
    pub std_error: f64,
    /// Regression slope of the increment on the level `M_s`, with its
    /// two-sided p-value.
    pub slope: f64,
    pub slope_p: f64,
}

#[derive(Debug, Clone)]
pub struct MartingaleReport {
    pub probes: Vec<ProbeStat>,
    pub replications: usize,
    /// All increment means within 3 standard errors of zero and all
    /// level-regression slopes insignificant at the 1% level.
    pub consistent: bool,
}

/// Replication study of the increments of `M = I - V` between probe times.
pub fn martingale_test(
    config: &RunConfig,
    replications: usize,
    probes: &[(f64, f64)],
) -> Result<MartingaleReport> {
    martingale_test_scaled(config, replications, probes, 1.0)
}

/// Same study with the compensator scaled by `v_scale`; scales other than 1
/// serve as a negative control that must break the martingale property.
pub fn martingale_test_scaled(
    config: &RunConfig,
    replications: usize,
    probes: &[(f64, f64)],
    v_scale: f64,
) -> Result<MartingaleReport> {
    if replications < 30 {
        return Err(Error::InvalidParam(format!(
            "martingale test needs at least 30 replications, got {replications}"
        )));
    }
    for &(s, t) in probes {
        if !(0.0 <= s && s < t && t <= config.t_horizon + 1e-9) {
            return Err(Error::InvalidParam(format!(
                "probe pair ({s}, {t}) must satisfy 0 <= s < t <= horizon"
            )));
        }
    }
    let per_rep: Vec<Vec<(f64, f64)>> = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<(f64, f64)>> {
            let mut cfg = config.clone();
            cfg.seed = derive_seed(config.seed, LANE_REPLICATION, rep as u64);
            cfg.record_particles = false;
            let trace = run(&cfg)?;
            Ok(probes
                .iter()
                .map(|&(s, t)| {
                    let ks = trace.index_at(s);
                    let kt = trace.index_at(t);
                    let m_s = trace.infected[ks] - v_scale * trace.compensator[ks];
                    let m_t = trace.infected[kt] - v_scale * trace.compensator[kt];
                    (m_s, m_t - m_s)
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stats = Vec::with_capacity(probes.len());
    let mut consistent = true;
    for (j, &(s, t)) in probes.iter().enumerate() {
        let levels: Vec<f64> = per_rep.iter().map(|r| r[j].0).collect();
        let increments: Vec<f64> = per_rep.iter().map(|r| r[j].1).collect();
        let m = mean(&increments);
        let se = std_error(&increments);
        let (slope, slope_p) = slope_t_test(&levels, &increments);
        consistent &= m.abs() <= 3.0 * se && slope_p > 0.01;
        stats.push(ProbeStat { s, t, mean_increment: m, std_error: se, slope, slope_p });
    }
    Ok(MartingaleReport { probes: stats, replications, consistent })
}

/// Log-log fit of the squared-supremum statistic against population size.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub sizes: Vec<usize>,
    /// Monte Carlo estimate of `E[sup_{s<=T} |M_s|^2]` per size.
    pub estimates: Vec<f64>,
    pub slope: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
    /// Set when an estimate vanishes and the log fit is undefined.
    pub degenerate: bool,
}

/// Estimate the decay rate of the squared-supremum statistic as the
/// population grows, with a bootstrap confidence interval for the slope.
pub fn l2_decay(config: &RunConfig, sizes: &[usize], replications: usize) -> Result<DecayFit> {
    if sizes.len() < 2 || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam("sizes must be strictly increasing, at least two".into()));
    }
    if replications < 2 {
        return Err(Error::InvalidParam("decay fit needs at least 2 replications".into()));
    }
    let mut per_size: Vec<Vec<f64>> = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        let sups: Vec<f64> = (0..replications)
            .into_par_iter()
            .map(|rep| -> Result<f64> {
                let mut cfg = config.clone();
                cfg.n = n;
                cfg.seed = derive_seed(
                    config.seed,
                    LANE_REPLICATION,
                    (i * replications + rep) as u64,
                );
                cfg.record_particles = false;
                let trace = run(&cfg)?;
                let sup = trace
                    .martingale()
                    .iter()
                    .fold(0.0f64, |acc, m| acc.max(m.abs()));
                Ok(sup * sup)
            })
            .collect::<Result<Vec<_>>>()?;
        per_size.push(sups);
    }
    let estimates: Vec<f64> = per_size.iter().map(|s| mean(s)).collect();
    if estimates.iter().any(|e| *e <= 0.0) {
        return Ok(DecayFit {
            sizes: sizes.to_vec(),
            estimates,
            slope: f64::NAN,
            slope_lo: f64::NAN,
            slope_hi: f64::NAN,
            degenerate: true,
        });
    }
    let xs: Vec<f64> = sizes.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = estimates.iter().map(|e| e.ln()).collect();
    let (slope, _) = ols(&xs, &ys);

    let mut boot = NoiseStream::with_lane(config.seed, LANE_FRESH, 0xB007);
    let b_rounds = 1000;
    let mut slopes = Vec::with_capacity(b_rounds);
    for _ in 0..b_rounds {
        let ys_b: Vec<f64> = per_size
            .iter()
            .map(|sups| {
                let mut acc = 0.0;
                for _ in 0..sups.len() {
                    let idx = (boot.next_uniform_open() * sups.len() as f64) as usize;
                    acc += sups[idx.min(sups.len() - 1)];
                }
                (acc / sups.len() as f64).max(f64::MIN_POSITIVE).ln()
            })
            .collect();
        slopes.push(ols(&xs, &ys_b).0);
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = slopes[(0.025 * b_rounds as f64) as usize];
    let hi = slopes[((0.975 * b_rounds as f64) as usize).min(b_rounds - 1)];
    Ok(DecayFit {
        sizes: sizes.to_vec(),
        estimates,
        slope,
        slope_lo: lo,
        slope_hi: hi,
        degenerate: false,
    })
}

/// Fractions of grid steps carrying two or more infections, per step size.
#[derive(Debug, Clone)]
pub struct TieStats {
    pub dts: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Strictly decreasing fractions as the step shrinks.
    pub decreasing: bool,
}

/// Count multi-infection steps across replications for each step size,
/// pooling over all grid steps of all replications.
pub fn tie_stats(config: &RunConfig, dt_ladder: &[f64], replications: usize) -> Result<TieStats> {
    if dt_ladder.is_empty() || replications == 0 {
        return Err(Error::InvalidParam("need a step ladder and replications".into()));
    }
    let mut fractions = Vec::with_capacity(dt_ladder.len());
    for (d, &dt) in dt_ladder.iter().enumerate() {
        let counts: Vec<(usize, usize)> = (0..replications)
            .into_par_iter()
            .map(|rep| -> Result<(usize, usize)> {
                let mut cfg = config.clone();
                cfg.dt = dt;
                cfg.seed = derive_seed(
                    config.seed,
                    LANE_REPLICATION,
                    (d * replications + rep) as u64,
                );
                cfg.record_particles = false;
                let trace = run(&cfg)?;
                let steps = trace.times.len() - 1;
                let mut per_step = vec![0usize; steps];
                for inf in &trace.infections {
                    let idx = ((inf.tau / dt).round() as usize).clamp(1, steps) - 1;
                    per_step[idx] += 1;
                }
                Ok((per_step.iter().filter(|c| **c >= 2).count(), steps))
            })
            .collect::<Result<Vec<_>>>()?;
        let ties: usize = counts.iter().map(|c| c.0).sum();
        let total: usize = counts.iter().map(|c| c.1).sum();
        fractions.push(ties as f64 / total.max(1) as f64);
    }
    let decreasing = fractions.windows(2).all(|w| w[1] < w[0]);
    Ok(TieStats { dts: dt_ladder.to_vec(), fractions, decreasing })
}

/// One probe time of the conditional infection-law check.
#[derive(Debug, Clone, Copy)]
pub struct TauLawRow {
    pub t: f64,
    /// Empirical infection probability of the tagged particle.
    pub empirical: f64,
    /// Mean of `1 - exp(-H)` along the coupled leave-one-out runs.
    pub surrogate: f64,
    /// Paired mean difference and its standard error.
    pub diff: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone)]
pub struct TauLawReport {
    pub rows: Vec<TauLawRow>,
    pub replications: usize,
    pub max_discrepancy: f64,
    /// Every probe difference within 3 standard errors.
    pub consistent: bool,
}

/// Compare the tagged particle's empirical infection law against the
/// hazard functional of coupled leave-one-out runs sharing the same seeds.
pub fn tau_law_check(
    config: &RunConfig,
    replications: usize,
    probes: &[f64],
    excluded: usize,
) -> Result<TauLawReport> {
    if config.n > 8 {
        return Err(Error::InvalidParam(format!(
            "the infection-law check is meant for small systems, got n = {}",
            config.n
        )));
    }
    if excluded >= config.n {
        return Err(Error::InvalidParam(format!(
            "tagged particle {excluded} out of range for n = {}",
            config.n
        )));
    }
    if probes.is_empty() || replications == 0 {
        return Err(Error::InvalidParam("need probe times and replications".into()));
    }
    let diffs: Vec<Vec<(f64, f64)>> = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<(f64, f64)>> {
            let seed = derive_seed(config.seed, LANE_REPLICATION, rep as u64);
            let mut true_cfg = config.clone();
            true_cfg.mode = Mode::True;
            true_cfg.seed = seed;
            true_cfg.record_particles = false;
            let true_trace = run(&true_cfg)?;
            let tau = true_trace
                .infections
                .iter()
                .find(|inf| inf.particle == excluded)
                .map(|inf| inf.tau);

            let mut loo_cfg = config.clone();
            loo_cfg.mode = Mode::ArtificialMinusI { excluded };
            loo_cfg.seed = seed;
            loo_cfg.record_particles = true;
            let loo_trace = run(&loo_cfg)?;
            let hazard = &loo_trace.particles.as_ref().unwrap().hazard[excluded];

            Ok(probes
                .iter()
                .map(|&t| {
                    let hit = match tau {
                        Some(tv) => (tv <= t + 1e-12) as u8 as f64,
                        None => 0.0,
                    };
                    let sur = 1.0 - (-hazard[loo_trace.index_at(t)]).exp();
                    (hit, sur)
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(probes.len());
    let mut max_disc = 0.0f64;
    let mut consistent = true;
    for (j, &t) in probes.iter().enumerate() {
        let hits: Vec<f64> = diffs.iter().map(|r| r[j].0).collect();
        let surs: Vec<f64> = diffs.iter().map(|r| r[j].1).collect();
        let paired: Vec<f64> = hits.iter().zip(&surs).map(|(h, s)| h - s).collect();
        let diff = mean(&paired);
        let se = std_error(&paired);
        consistent &= diff.abs() <= 3.0 * se;
        max_disc = max_disc.max(diff.abs());
        rows.push(TauLawRow { t, empirical: mean(&hits), surrogate: mean(&surs), diff, std_error: se });
    }
    Ok(TauLawReport { rows, replications, max_discrepancy: max_disc, consistent })
}

/// Monte Carlo continuation estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct ContinuationEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replications: usize,
}

/// Effective reproduction number at time `t`: expected hazard mass a single
/// new infection would place on the still-susceptible particles over one
/// kernel duration, with contagiousness frozen at `1/n` and the front
/// advanced only by that infection's own kernel contribution. Continuation
/// noise and clocks are fresh, independent of the base run.
pub fn effective_r(config: &RunConfig, t: f64, replications: usize) -> Result<ContinuationEstimate> {
    if replications == 0 {
        return Err(Error::InvalidParam("need replications".into()));
    }
    if !(t > 0.0 && t <= config.t_horizon + 1e-9) {
        return Err(Error::InvalidParam(format!(
            "continuation time {t} must lie in (0, horizon]"
        )));
    }
    let mut base_cfg = config.clone();
    base_cfg.t_horizon = t;
    base_cfg.record_particles = true;
    let base = run(&base_cfg)?;
    let states = base.final_states().expect("recorded run");
    let susceptible: Vec<f64> = states
        .iter()
        .filter_map(|s| match s.status {
            Status::Susceptible { position } => Some(position),
            Status::Infected { .. } => None,
        })
        .collect();
    let a_t = *base.front.last().unwrap();
    let n = config.n;
    let dt = config.dt;
    let steps = ((config.kernel.dbar / dt).round() as usize).max(1);
    let c_frozen = 1.0 / n as f64;

    let totals: Vec<f64> = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            let mut acc = 0.0;
            for (j, &x0) in susceptible.iter().enumerate() {
                let mut stream = NoiseStream::with_lane(
                    config.seed,
                    LANE_CONTINUATION,
                    (rep * n + j) as u64,
                );
                let chi = stream.next_exponential();
                let mut hazard = 0.0;
                let mut x = x0;
                for k in 0..steps {
                    let s = t + k as f64 * dt;
                    let front_next =
                        a_t + config.alpha / n as f64 * config.kernel.cdf((k + 1) as f64 * dt);
                    let xi = stream.next_normal();
                    let r = reflected_euler_step(x, s, dt, front_next, &config.coeffs, xi)?;
                    x = r.position;
                    let gamma = config.coeffs.rate(s, c_frozen);
                    let dh = gamma * r.local_time;
                    if dh > 0.0 && hazard + dh >= chi {
                        acc += chi - hazard;
                        break;
                    }
                    hazard += dh;
                    acc += dh;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ContinuationEstimate {
        mean: mean(&totals),
        std_error: std_error(&totals),
        replications,
    })
}

/// One output point of the deterministic epidemic benchmark.
#[derive(Debug, Clone, Copy)]
pub struct SirState {
    pub t: f64,
    pub i: f64,
    pub c: f64,
    pub s: f64,
    pub beta: f64,
    pub dbar: f64,
    pub r0: f64,
    pub r_t: f64,
}

/// Classical Runge-Kutta integration of the two-variable epidemic system
/// `dI = beta S C dt`, `dC = (beta S C - C / dbar) dt` with `S = 1 - I`
/// maintained by definition.
pub fn sir_integrate(
    beta: f64,
    dbar: f64,
    i0: f64,
    c0: f64,
    t_horizon: f64,
    dt: f64,
) -> Result<Vec<SirState>> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidParam(format!("transmission rate must be nonnegative, got {beta}")));
    }
    if !(dbar.is_finite() && dbar > 0.0) {
        return Err(Error::InvalidParam(format!("mean duration must be positive, got {dbar}")));
    }
    if !(0.0..=1.0).contains(&i0) || !i0.is_finite() {
        return Err(Error::InvalidParam(format!("initial proportion must lie in [0, 1], got {i0}")));
    }
    if !(c0.is_finite() && c0 >= 0.0) {
        return Err(Error::InvalidParam(format!("initial contagiousness must be nonnegative, got {c0}")));
    }
    if !(dt.is_finite() && dt > 0.0) || !(t_horizon.is_finite() && t_horizon >= 0.0) {
        return Err(Error::InvalidParam("need positive step and nonnegative horizon".into()));
    }
    let f = |i: f64, c: f64| -> (f64, f64) {
        let di = beta * (1.0 - i) * c;
        (di, di - c / dbar)
    };
    let steps = (t_horizon / dt).round() as usize;
    let r0 = beta * dbar;
    let state = |t: f64, i: f64, c: f64| SirState {
        t,
        i,
        c,
        s: 1.0 - i,
        beta,
        dbar,
        r0,
        r_t: r0 * (1.0 - i),
    };
    let mut out = Vec::with_capacity(steps + 1);
    let (mut i, mut c) = (i0, c0);
    out.push(state(0.0, i, c));
    for k in 0..steps {
        let (k1i, k1c) = f(i, c);
        let (k2i, k2c) = f(i + 0.5 * dt * k1i, c + 0.5 * dt * k1c);
        let (k3i, k3c) = f(i + 0.5 * dt * k2i, c + 0.5 * dt * k2c);
        let (k4i, k4c) = f(i + dt * k3i, c + dt * k3c);
        i += dt / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
        c += dt / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c);
        out.push(state((k + 1) as f64 * dt, i, c));
    }
    Ok(out)
}
