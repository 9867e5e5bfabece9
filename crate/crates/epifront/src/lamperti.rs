//! Change of frame onto the moving boundary: the state-space rescaling that
//! turns a reflected diffusion with catalog coefficients into a reflected
//! unit-diffusion process on the half-line, its transformed drift, the
//! killed process `Z`, and a numerical check of the local-time rescaling
//! identity.

use crate::coefficients::{CoefficientSet, Diffusion, Drift, Rate};
use crate::epidemic::SystemTrace;
use crate::error::{Error, Result};
use crate::sde::{occupation_local_time, reflected_euler_step, NoiseStream, LANE_FRESH};
use rayon::prelude::*;

/// Frozen environment for the rescaled frame: coefficients plus one boundary
/// path on a time grid (typically the front of a tagged-particle or globally
/// reflected run).
#[derive(Debug, Clone)]
pub struct TransformContext {
    pub coeffs: CoefficientSet,
    pub times: Vec<f64>,
    pub boundary: Vec<f64>,
    pub quad_tol: f64,
}

impl TransformContext {
    pub fn new(coeffs: CoefficientSet, times: Vec<f64>, boundary: Vec<f64>, quad_tol: f64) -> Result<Self> {
        if times.len() != boundary.len() || times.is_empty() {
            return Err(Error::InvalidParam(format!(
                "boundary and times must share a nonempty grid: {} vs {}",
                boundary.len(),
                times.len()
            )));
        }
        if !(quad_tol.is_finite() && quad_tol > 0.0) {
            return Err(Error::InvalidParam(format!(
                "quadrature tolerance must be positive, got {quad_tol}"
            )));
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidParam("times must be strictly increasing".into()));
            }
        }
        for w in boundary.windows(2) {
            if w[1] + 1e-12 < w[0] {
                return Err(Error::InvalidParam("boundary path must be nondecreasing".into()));
            }
        }
        let (lo, _) = coeffs.diffusion.bounds();
        if lo <= 0.0 {
            return Err(Error::InvalidParam("diffusion must be bounded away from zero".into()));
        }
        Ok(TransformContext { coeffs, times, boundary, quad_tol })
    }

    /// Context from a recorded run, using its front as the boundary path.
    pub fn from_trace(coeffs: CoefficientSet, trace: &SystemTrace, quad_tol: f64) -> Result<Self> {
        TransformContext::new(coeffs, trace.times.clone(), trace.front.clone(), quad_tol)
    }

    /// Boundary value at an arbitrary time, linearly interpolated on the
    /// grid and clamped at the ends.
    pub fn boundary_at(&self, t: f64) -> f64 {
        interp(&self.times, &self.boundary, t)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Constant `C` with `|transformed drift(t, z)| <= C (1 + z)`, assembled
    /// from the catalog bounds and the boundary range.
    pub fn growth_constant(&self) -> f64 {
        let (c_min, c_max) = self.coeffs.diffusion.bounds();
        let dt_b = self.coeffs.diffusion.dt_bound();
        let dx_b = self.coeffs.diffusion.dx_bound();
        let a_abs = self
            .boundary
            .iter()
            .fold(0.0f64, |acc, a| acc.max(a.abs()));
        let lip = self.coeffs.drift.lipschitz();
        let off = self.coeffs.drift.offset();
        let constant_part = (off + lip * a_abs) / c_min + 0.5 * dx_b;
        let linear_part = c_max * dt_b / (c_min * c_min) + lip * c_max / c_min;
        constant_part.max(linear_part)
    }
}

fn interp(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return values[last];
    }
    let idx = times.partition_point(|s| *s <= t);
    let (t0, t1) = (times[idx - 1], times[idx]);
    let w = (t - t0) / (t1 - t0);
    values[idx - 1] * (1.0 - w) + values[idx] * w
}

/// Adaptive Simpson quadrature with an absolute tolerance. Handles reversed
/// limits by sign.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 {
            return Err(Error::Numerics("quadrature failed to converge".into()));
        }
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }

    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    Ok(sign * recurse(f, lo, hi, fa, fm, fb, whole, tol, 48)?)
}

/// The rescaling map: the integral of `1 / sigma(t, x + boundary(t))` from 0
/// to `y`, by closed form where the diffusion allows it and by adaptive
/// quadrature otherwise. Strictly increasing in `y` with value 0 at 0;
/// negative `y` (pre-reflection overshoots) integrate with sign.
pub fn upsilon(ctx: &TransformContext, t: f64, y: f64) -> Result<f64> {
    match ctx.coeffs.diffusion {
        Diffusion::Constant { c } => Ok(y / c),
        Diffusion::TimeModulated { .. } => Ok(y / ctx.coeffs.sigma(t, 0.0)),
        Diffusion::SpaceModulated { .. } => {
            let a_t = ctx.boundary_at(t);
            adaptive_simpson(&|x| 1.0 / ctx.coeffs.sigma(t, x + a_t), 0.0, y, ctx.quad_tol)
        }
    }
}

/// Inverse of the rescaling map in its space argument, to within 1e-10 in
/// the rescaled coordinate.
pub fn upsilon_inverse(ctx: &TransformContext, t: f64, z: f64) -> Result<f64> {
    match ctx.coeffs.diffusion {
        Diffusion::Constant { c } => Ok(z * c),
        Diffusion::TimeModulated { .. } => Ok(z * ctx.coeffs.sigma(t, 0.0)),
        Diffusion::SpaceModulated { .. } => {
            let (c_min, c_max) = ctx.coeffs.diffusion.bounds();
            let a_t = ctx.boundary_at(t);
            // Upsilon is increasing with slope in [1/c_max, 1/c_min], so the
            // root lies between z*c_min and z*c_max.
            let (mut lo, mut hi) = if z >= 0.0 {
                (z * c_min, z * c_max)
            } else {
                (z * c_max, z * c_min)
            };
            let mut y = z * ctx.coeffs.sigma(t, a_t);
            for _ in 0..64 {
                let val = upsilon(ctx, t, y)? - z;
                if val.abs() <= 1e-10 {
                    return Ok(y);
                }
                if val > 0.0 {
                    hi = y;
                } else {
                    lo = y;
                }
                // Newton step using the exact slope, kept inside the bracket.
                let next = y - val * ctx.coeffs.sigma(t, y + a_t);
                y = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            }
            Err(Error::Numerics(format!("inverse rescaling did not converge at z = {z}")))
        }
    }
}

/// Drift of the rescaled process in the frozen-boundary frame:
/// `-(integral of d_t sigma / sigma^2) + b/sigma - (d_x sigma)/2`, all
/// composed with the inverse map. The boundary-motion term belongs to the
/// moving frame and is added by [`simulate_z`].
pub fn transformed_drift(ctx: &TransformContext, t: f64, z: f64) -> Result<f64> {
    let y = upsilon_inverse(ctx, t, z)?;
    let a_t = ctx.boundary_at(t);
    let x = y + a_t;
    let sig = ctx.coeffs.sigma(t, x);
    let time_term = match ctx.coeffs.diffusion {
        Diffusion::Constant { .. } | Diffusion::SpaceModulated { .. } => 0.0,
        Diffusion::TimeModulated { .. } => {
            // sigma is space-independent here, so the integral is exact.
            let s = ctx.coeffs.sigma(t, 0.0);
            -ctx.coeffs.diffusion.dt(t, 0.0) * y / (s * s)
        }
    };
    Ok(time_term + ctx.coeffs.drift(t, x) / sig - 0.5 * ctx.coeffs.diffusion.dx(t, x))
}

/// Trace of one rescaled path.
#[derive(Debug, Clone)]
pub struct ZTrace {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    /// Cumulative local time at zero (regulator pushes).
    pub ell0: Vec<f64>,
    /// First grid time at which the killing integral reached the clock.
    pub kill_time: Option<f64>,
}

/// Euler scheme for the rescaled process reflected at zero:
/// `dZ = (transformed drift - boundary velocity / sigma(t, boundary)) dt + dW + dl0`,
/// killed when the integral of `sigma(r, boundary) gamma(r, contagion) dl0`
/// exceeds the exponential clock `chi`. The contagion path lives on the
/// context grid; the scheme may use any step size.
pub fn simulate_z(
    ctx: &TransformContext,
    contagion: &[f64],
    z0: f64,
    t_horizon: f64,
    dt: f64,
    noise: &mut NoiseStream,
    chi: f64,
) -> Result<ZTrace> {
    if contagion.len() != ctx.times.len() {
        return Err(Error::InvalidParam(format!(
            "contagion path must live on the context grid: {} vs {}",
            contagion.len(),
            ctx.times.len()
        )));
    }
    if z0 < 0.0 || !z0.is_finite() {
        return Err(Error::InvalidParam(format!("start must be nonnegative, got {z0}")));
    }
    if chi <= 0.0 {
        return Err(Error::InvalidParam(format!("clock must be positive, got {chi}")));
    }
    let steps = (t_horizon / dt).round() as usize;
    let mut z = z0;
    let mut ell = 0.0;
    let mut hazard = 0.0;
    let mut kill_time = None;
    let mut out = ZTrace {
        times: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        ell0: Vec::with_capacity(steps + 1),
        kill_time: None,
    };
    out.times.push(0.0);
    out.z.push(z);
    out.ell0.push(0.0);

    for k in 0..steps {
        let t = k as f64 * dt;
        let tn = (k + 1) as f64 * dt;
        let a_t = ctx.boundary_at(t);
        let a_next = ctx.boundary_at(tn);
        let sig_b = ctx.coeffs.sigma(t, a_t);
        let drift = transformed_drift(ctx, t, z)? - (a_next - a_t) / dt / sig_b;
        let z_star = z + drift * dt + dt.sqrt() * noise.next_normal();
        let z_new = z_star.max(0.0);
        let dl0 = z_new - z_star;
        if kill_time.is_none() {
            let gamma = ctx.coeffs.rate(t, interp(&ctx.times, contagion, t));
            let dh = sig_b * gamma * dl0;
            if dh > 0.0 && hazard + dh >= chi {
                hazard = chi;
                kill_time = Some(tn);
            } else {
                hazard += dh;
            }
        }
        z = z_new;
        ell += dl0;
        out.times.push(tn);
        out.z.push(z);
        out.ell0.push(ell);
    }
    out.kill_time = kill_time;
    Ok(out)
}

/// Kolmogorov-Smirnov comparison between the transformed original process
/// and the rescaled process at each probe time.
#[derive(Debug, Clone)]
pub struct DistributionCheck {
    pub probes: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Surviving path counts per probe, original side then rescaled side.
    pub survivors: Vec<(usize, usize)>,
}

/// Simulate the original reflected diffusion with elastic killing and,
/// independently, the rescaled process, both in the frozen environment of
/// the context; compare the transformed survivor positions against the
/// rescaled survivor positions by a two-sample test at each probe time.
pub fn distribution_check(
    ctx: &TransformContext,
    contagion: &[f64],
    x0: f64,
    dt: f64,
    paths: usize,
    probes: &[f64],
    seed: u64,
) -> Result<DistributionCheck> {
    if contagion.len() != ctx.times.len() {
        return Err(Error::InvalidParam(format!(
            "contagion path must live on the context grid: {} vs {}",
            contagion.len(),
            ctx.times.len()
        )));
    }
    if probes.is_empty() || paths < 2 {
        return Err(Error::InvalidParam("need probe times and at least two paths".into()));
    }
    let horizon = probes.iter().cloned().fold(0.0f64, f64::max);
    let steps = (horizon / dt).round() as usize;
    let probe_idx: Vec<usize> = probes.iter().map(|t| ((t / dt).round() as usize).min(steps)).collect();

    let original: Vec<(Vec<f64>, usize)> = (0..paths)
        .into_par_iter()
        .map(|p| -> Result<(Vec<f64>, usize)> {
            let mut stream = NoiseStream::with_lane(seed, LANE_FRESH, 2 * p as u64);
            let chi = stream.next_exponential();
            let mut x = x0;
            let mut hazard = 0.0;
            let mut kill_step = usize::MAX;
            let mut at_probes = vec![f64::NAN; probe_idx.len()];
            for (j, idx) in probe_idx.iter().enumerate() {
                if *idx == 0 {
                    at_probes[j] = upsilon(ctx, 0.0, x - ctx.boundary_at(0.0))?;
                }
            }
            for k in 0..steps {
                let t = k as f64 * dt;
                let tn = (k + 1) as f64 * dt;
                let r = reflected_euler_step(x, t, dt, ctx.boundary_at(tn), &ctx.coeffs, stream.next_normal())?;
                x = r.position;
                if kill_step == usize::MAX {
                    let gamma = ctx.coeffs.rate(t, interp(&ctx.times, contagion, t));
                    hazard += gamma * r.local_time;
                    if hazard >= chi {
                        kill_step = k + 1;
                    }
                }
                for (j, idx) in probe_idx.iter().enumerate() {
                    if *idx == k + 1 && kill_step > k + 1 {
                        at_probes[j] = upsilon(ctx, tn, x - ctx.boundary_at(tn))?;
                    }
                }
            }
            Ok((at_probes, kill_step))
        })
        .collect::<Result<Vec<_>>>()?;

    let rescaled: Vec<ZTrace> = (0..paths)
        .into_par_iter()
        .map(|p| -> Result<ZTrace> {
            let mut stream = NoiseStream::with_lane(seed, LANE_FRESH, 2 * p as u64 + 1);
            let chi = stream.next_exponential();
            let z0 = upsilon(ctx, 0.0, x0 - ctx.boundary_at(0.0))?;
            simulate_z(ctx, contagion, z0, horizon, dt, &mut stream, chi)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut p_values = Vec::with_capacity(probes.len());
    let mut survivors = Vec::with_capacity(probes.len());
    for (j, &idx) in probe_idx.iter().enumerate() {
        let t = probes[j];
        let xs: Vec<f64> = original
            .iter()
            .filter(|(vals, _)| !vals[j].is_nan())
            .map(|(vals, _)| vals[j])
            .collect();
        let zs: Vec<f64> = rescaled
            .iter()
            .filter(|tr| tr.kill_time.map_or(true, |kt| kt > t + 0.5 * dt))
            .map(|tr| tr.z[idx])
            .collect();
        let (_, p) = crate::stats::ks_two_sample(&xs, &zs);
        p_values.push(p);
        survivors.push((xs.len(), zs.len()));
    }
    Ok(DistributionCheck { probes: probes.to_vec(), p_values, survivors })
}

/// Largest deviation between a directly simulated constant-sigma path and
/// the rescaled simulation under shared noise, over the whole context
/// horizon; covers both the state and the accumulated local time.
pub fn pathwise_gap_constant_sigma(
    ctx: &TransformContext,
    x0: f64,
    dt: f64,
    seed: u64,
) -> Result<f64> {
    let c = match ctx.coeffs.diffusion {
        Diffusion::Constant { c } => c,
        _ => {
            return Err(Error::InvalidParam(
                "the pathwise comparison needs a constant diffusion".into(),
            ))
        }
    };
    let horizon = ctx.horizon();
    let steps = (horizon / dt).round() as usize;
    let contagion = vec![0.0; ctx.times.len()];

    let mut noise_z = NoiseStream::with_lane(seed, LANE_FRESH, 0);
    let z_trace = simulate_z(ctx, &contagion, (x0 - ctx.boundary_at(0.0)) / c, horizon, dt, &mut noise_z, f64::INFINITY)?;

    let mut noise_x = NoiseStream::with_lane(seed, LANE_FRESH, 0);
    let mut x = x0;
    let mut ell = 0.0;
    let mut gap = 0.0f64;
    for k in 0..steps {
        let t = k as f64 * dt;
        let tn = (k + 1) as f64 * dt;
        let r = reflected_euler_step(x, t, dt, ctx.boundary_at(tn), &ctx.coeffs, noise_x.next_normal())?;
        x = r.position;
        ell += r.local_time;
        gap = gap
            .max((z_trace.z[k + 1] - (x - ctx.boundary_at(tn)) / c).abs())
            .max((z_trace.ell0[k + 1] - ell / c).abs());
    }
    Ok(gap)
}

/// One rung of the rescaling-identity report.
#[derive(Debug, Clone, Copy)]
pub struct RescalingRow {
    pub dt: f64,
    pub eps: f64,
    /// Mean over paths of the relative gap between the regulator local time
    /// of the transformed path and the rescaled local time of the original.
    pub mean_rel_err: f64,
    /// Occupation-density estimate of the transformed path's local time
    /// over its regulator estimate (diagnostic; near 2 for fine grids).
    pub occupation_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct RescalingReport {
    pub rows: Vec<RescalingRow>,
}

/// Check the rescaling identity for boundary local time: simulate the
/// original reflected diffusion off the context boundary, transform the
/// path, and compare its regulator local time at zero against the integral
/// of `1/sigma(s, boundary)` against the original local time. Reports the
/// mean relative error per `(dt, eps)` rung together with the occupation
/// diagnostic.
pub fn local_time_rescaling_check(
    ctx: &TransformContext,
    paths: usize,
    ladder: &[(f64, f64)],
    x0: f64,
    seed: u64,
) -> Result<RescalingReport> {
    let mut rows = Vec::with_capacity(ladder.len());
    let horizon = ctx.horizon();
    for (rung, &(dt, eps)) in ladder.iter().enumerate() {
        let steps = (horizon / dt).floor() as usize;
        let per_path: Vec<(f64, f64, f64)> = (0..paths)
            .into_par_iter()
            .map(|p| -> Result<(f64, f64, f64)> {
                let mut stream =
                    NoiseStream::with_lane(seed, LANE_FRESH, (rung * paths + p) as u64);
                let mut x = x0;
                let mut lhs = 0.0;
                let mut rhs = 0.0;
                let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
                let mut z_path = Vec::with_capacity(steps + 1);
                z_path.push(upsilon(ctx, 0.0, x - ctx.boundary_at(0.0))?);
                for k in 0..steps {
                    let t = times[k];
                    let tn = times[k + 1];
                    let a_next = ctx.boundary_at(tn);
                    let r = reflected_euler_step(x, t, dt, a_next, &ctx.coeffs, stream.next_normal())?;
                    rhs += r.local_time / ctx.coeffs.sigma(t, ctx.boundary_at(t));
                    let z_star = upsilon(ctx, tn, r.pre_reflection - a_next)?;
                    lhs += (-z_star).max(0.0);
                    x = r.position;
                    z_path.push(upsilon(ctx, tn, x - a_next)?);
                }
                let rel = if rhs > 0.0 {
                    (lhs - rhs).abs() / rhs
                } else {
                    lhs.abs()
                };
                let unit = CoefficientSet::new(
                    Drift::Constant { mu: 0.0 },
                    Diffusion::Constant { c: 1.0 },
                    Rate::Constant { g: 0.0 },
                )
                .expect("unit coefficients");
                let zeros = vec![0.0; z_path.len()];
                let occ = occupation_local_time(&z_path, &zeros, &times, eps, &unit)?;
                Ok((rel, occ, lhs))
            })
            .collect::<Result<Vec<_>>>()?;
        let mean_rel = per_path.iter().map(|r| r.0).sum::<f64>() / paths.max(1) as f64;
        let occ_sum: f64 = per_path.iter().map(|r| r.1).sum();
        let reg_sum: f64 = per_path.iter().map(|r| r.2).sum();
        rows.push(RescalingRow {
            dt,
            eps,
            mean_rel_err: mean_rel,
            occupation_ratio: if reg_sum > 0.0 { occ_sum / reg_sum } else { 0.0 },
        });
    }
    Ok(RescalingReport { rows })
}
