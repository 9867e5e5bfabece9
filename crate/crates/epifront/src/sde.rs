//! Deterministic Brownian-increment streams and the one-step reflected
//! Euler scheme with its Skorokhod-regulator local-time increment, plus an
//! occupation-density local-time estimator used as a diagnostic.

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Stream lanes: disjoint sub-streams of one master seed. Dynamics noise,
/// exponential clocks, and initial positions draw from separate lanes so
/// coupled runs can share exactly the pieces they need.
pub const LANE_DYNAMICS: u64 = 1;
pub const LANE_CLOCKS: u64 = 2;
pub const LANE_INITIAL: u64 = 3;
pub const LANE_REPLICATION: u64 = 4;
pub const LANE_FRESH: u64 = 5;
pub const LANE_CONTINUATION: u64 = 6;

fn splitmix_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for (lane, index) under a master seed. Used to give
/// every replication its own independent master seed.
pub fn derive_seed(master: u64, lane: u64, index: u64) -> u64 {
    let mut s = master;
    let _ = splitmix_next(&mut s);
    s ^= lane.wrapping_mul(0xA24B_AED4_963E_E407);
    let _ = splitmix_next(&mut s);
    s ^= index.wrapping_mul(0x9FB2_1C65_1E98_DF25);
    splitmix_next(&mut s)
}

/// An owned, replayable stream of random draws identified by
/// (master seed, lane, particle index). Draws are a pure function of the
/// identity and the running counter, so any stream can be reproduced
/// independently of thread scheduling.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha12Rng,
    master_seed: u64,
    lane: u64,
    index: u64,
    counter: u64,
}

impl NoiseStream {
    /// Dynamics-lane stream for one particle index.
    pub fn new(master_seed: u64, index: u64) -> Self {
        Self::with_lane(master_seed, LANE_DYNAMICS, index)
    }

    /// Stream in an explicit lane.
    pub fn with_lane(master_seed: u64, lane: u64, index: u64) -> Self {
        let mut s = master_seed;
        let _ = splitmix_next(&mut s);
        s ^= lane.wrapping_mul(0xA24B_AED4_963E_E407);
        let _ = splitmix_next(&mut s);
        s ^= index.wrapping_mul(0x9FB2_1C65_1E98_DF25);
        let mut key = [0u8; 32];
        for w in 0..4 {
            key[w * 8..(w + 1) * 8].copy_from_slice(&splitmix_next(&mut s).to_le_bytes());
        }
        NoiseStream {
            rng: ChaCha12Rng::from_seed(key),
            master_seed,
            lane,
            index,
            counter: 0,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn lane(&self) -> u64 {
        self.lane
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Number of draws taken so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Standard normal draw.
    pub fn next_normal(&mut self) -> f64 {
        self.counter += 1;
        self.rng.sample(StandardNormal)
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn next_uniform_open(&mut self) -> f64 {
        self.counter += 1;
        let bits = self.rng.gen::<u64>();
        (((bits >> 11) | 1) as f64) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard exponential draw.
    pub fn next_exponential(&mut self) -> f64 {
        -self.next_uniform_open().ln()
    }
}

/// Result of one reflected Euler step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    /// Position after reflection; never below the boundary.
    pub position: f64,
    /// Skorokhod-regulator increment, the push needed to stay above the
    /// boundary. Zero unless the step would have crossed it.
    pub local_time: f64,
    /// Pre-reflection position.
    pub pre_reflection: f64,
}

/// One Euler step of the reflected dynamics: drift and noise move the state
/// to `x* = x + b dt + sigma sqrt(dt) xi`, then projection onto the
/// half-line above `boundary_next` supplies the local-time push.
pub fn reflected_euler_step(
    x: f64,
    t: f64,
    dt: f64,
    boundary_next: f64,
    coeffs: &CoefficientSet,
    xi: f64,
) -> Result<StepResult> {
    if !(x.is_finite() && t.is_finite() && dt.is_finite() && boundary_next.is_finite() && xi.is_finite())
    {
        return Err(Error::InvalidParam(format!(
            "non-finite step input: x={x}, t={t}, dt={dt}, boundary={boundary_next}, xi={xi}"
        )));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidParam(format!("step size must be positive, got {dt}")));
    }
    let x_star = x + coeffs.drift(t, x) * dt + coeffs.sigma(t, x) * dt.sqrt() * xi;
    let position = x_star.max(boundary_next);
    Ok(StepResult {
        position,
        local_time: position - x_star,
        pre_reflection: x_star,
    })
}

/// Occupation-density estimate of boundary local time along a sampled path:
/// `(1/eps) sum_k 1{boundary_k <= path_k < boundary_k + eps} sigma(t_k, path_k)^2 dt_k`.
/// The quadratic-variation weight makes this the discrete analogue of the
/// occupation-density definition; for reflected Brownian motion it sits
/// about a factor 2 above the regulator estimate.
pub fn occupation_local_time(
    path: &[f64],
    boundary: &[f64],
    times: &[f64],
    eps: f64,
    coeffs: &CoefficientSet,
) -> Result<f64> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidParam(format!("band width must be positive, got {eps}")));
    }
    if path.len() != boundary.len() || path.len() != times.len() {
        return Err(Error::InvalidParam(format!(
            "path, boundary, and times must share a grid: {} vs {} vs {}",
            path.len(),
            boundary.len(),
            times.len()
        )));
    }
    let mut acc = 0.0;
    for k in 0..path.len().saturating_sub(1) {
        if boundary[k] <= path[k] && path[k] < boundary[k] + eps {
            let s = coeffs.sigma(times[k], path[k]);
            acc += s * s * (times[k + 1] - times[k]);
        }
    }
    Ok(acc / eps)
}
