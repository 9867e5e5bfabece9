//! Parametric catalogs for the model ingredients: the infection-age kernel,
//! drift, diffusion, infection rate, and the initial law, together with
//! structural validation of the assumptions the engine relies on.
//!
//! | ingredient | families |
//! |------------|----------|
//! | kernel     | `Uniform`, `TruncatedWeibull{shape, scale}`, `TaperedUniform{taper}` |
//! | drift      | `Constant{mu}`, `MeanReverting{theta, m}` |
//! | diffusion  | `Constant{c}`, `TimeModulated{c0, amplitude, frequency}`, `SpaceModulated{c0, amplitude, center, width}` |
//! | rate       | `Constant{g}`, `AffineInContagion{g0, g1}` |
//! | initial    | `Point{x0}`, `TruncatedGaussian{mean, stdev}` |

use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, Normal};

/// Infection-age kernel family. The density is supported on `[0, dbar]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// Constant density `1/dbar`.
    Uniform,
    /// Weibull(shape, scale) density renormalized by its CDF at `dbar`.
    TruncatedWeibull { shape: f64, scale: f64 },
    /// Unit plateau with cosine tapers of width `taper` at both ends,
    /// renormalized; absolutely continuous on the whole line.
    TaperedUniform { taper: f64 },
}

/// Infection-age kernel: a probability density on `[0, dbar]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dbar: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dbar: f64) -> Result<Self> {
        if !dbar.is_finite() || dbar <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "kernel duration dbar must be positive, got {dbar}"
            )));
        }
        match family {
            KernelFamily::Uniform => {}
            KernelFamily::TruncatedWeibull { shape, scale } => {
                if !shape.is_finite() || shape <= 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "Weibull shape must be positive, got {shape}"
                    )));
                }
                if !scale.is_finite() || scale <= 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "Weibull scale must be positive, got {scale}"
                    )));
                }
            }
            KernelFamily::TaperedUniform { taper } => {
                if !taper.is_finite() || taper <= 0.0 || taper > dbar / 2.0 {
                    return Err(Error::InvalidParam(format!(
                        "taper width must lie in (0, dbar/2], got {taper}"
                    )));
                }
            }
        }
        Ok(KernelSpec { family, dbar })
    }

    /// Density value at elapsed time `u`; zero outside `[0, dbar]`.
    pub fn density(&self, u: f64) -> f64 {
        let d = self.dbar;
        if !(0.0..=d).contains(&u) {
            return 0.0;
        }
        match self.family {
            KernelFamily::Uniform => 1.0 / d,
            KernelFamily::TruncatedWeibull { shape, scale } => {
                if u == 0.0 {
                    // The analytic limit: 0 for shape > 1, the renormalized
                    // shape/scale at shape = 1, and a singular endpoint below
                    // that, treated as 0 so grid evaluation stays finite.
                    return if shape == 1.0 {
                        (1.0 / scale) / weibull_cdf(self.dbar, shape, scale)
                    } else {
                        0.0
                    };
                }
                let z = u / scale;
                let raw = (shape / scale) * z.powf(shape - 1.0) * (-z.powf(shape)).exp();
                raw / weibull_cdf(self.dbar, shape, scale)
            }
            KernelFamily::TaperedUniform { taper } => {
                let mass = d - taper;
                let h = if u < taper {
                    0.5 * (1.0 - (std::f64::consts::PI * u / taper).cos())
                } else if u <= d - taper {
                    1.0
                } else {
                    0.5 * (1.0 - (std::f64::consts::PI * (d - u) / taper).cos())
                };
                h / mass
            }
        }
    }

    /// Cumulative `P(u)`, clamped to `[0, 1]`, with `P(0) = 0`, `P(dbar) = 1`.
    pub fn cdf(&self, u: f64) -> f64 {
        let d = self.dbar;
        if u <= 0.0 {
            return 0.0;
        }
        if u >= d {
            return 1.0;
        }
        let p = match self.family {
            KernelFamily::Uniform => u / d,
            KernelFamily::TruncatedWeibull { shape, scale } => {
                weibull_cdf(u, shape, scale) / weibull_cdf(d, shape, scale)
            }
            KernelFamily::TaperedUniform { taper } => {
                let mass = d - taper;
                let head = |v: f64| 0.5 * (v - (taper / std::f64::consts::PI) * (std::f64::consts::PI * v / taper).sin());
                let raw = if u < taper {
                    head(u)
                } else if u <= d - taper {
                    u - taper / 2.0
                } else {
                    mass - head(d - u)
                };
                raw / mass
            }
        };
        p.clamp(0.0, 1.0)
    }

    /// Whether the density is absolutely continuous as a function on the
    /// whole line (no jump at the support endpoints).
    pub fn is_smooth(&self) -> bool {
        match self.family {
            KernelFamily::Uniform => false,
            KernelFamily::TruncatedWeibull { shape, .. } => shape > 1.0,
            KernelFamily::TaperedUniform { .. } => true,
        }
    }
}

fn weibull_cdf(u: f64, shape: f64, scale: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        1.0 - (-(u / scale).powf(shape)).exp()
    }
}

/// Density of the infection-age kernel at elapsed time `u`.
pub fn kernel_density(spec: &KernelSpec, u: f64) -> f64 {
    spec.density(u)
}

/// Cumulative of the infection-age kernel at elapsed time `u`.
pub fn kernel_cdf(spec: &KernelSpec, u: f64) -> f64 {
    spec.cdf(u)
}

/// Drift family for the shielding-level dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drift {
    Constant { mu: f64 },
    MeanReverting { theta: f64, m: f64 },
}

impl Drift {
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match *self {
            Drift::Constant { mu } => mu,
            Drift::MeanReverting { theta, m } => theta * (m - x),
        }
    }

    /// Lipschitz constant in the space variable.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Drift::Constant { .. } => 0.0,
            Drift::MeanReverting { theta, .. } => theta,
        }
    }

    /// Constant part of the linear growth bound `|b(t,x)| <= offset + L|x|`.
    pub fn offset(&self) -> f64 {
        match *self {
            Drift::Constant { mu } => mu.abs(),
            Drift::MeanReverting { theta, m } => theta * m.abs(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Drift::Constant { mu } => {
                if !mu.is_finite() {
                    return Err(Error::InvalidParam(format!("drift mu must be finite, got {mu}")));
                }
            }
            Drift::MeanReverting { theta, m } => {
                if !theta.is_finite() || theta < 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "reversion speed theta must be nonnegative, got {theta}"
                    )));
                }
                if !m.is_finite() {
                    return Err(Error::InvalidParam(format!("reversion level must be finite, got {m}")));
                }
            }
        }
        Ok(())
    }
}

/// Diffusion family; every member is bounded between positive constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diffusion {
    Constant { c: f64 },
    /// `sigma(t) = c0 (1 + amplitude sin(frequency t))`.
    TimeModulated { c0: f64, amplitude: f64, frequency: f64 },
    /// `sigma(x) = c0 (1 + amplitude exp(-(x-center)^2 / (2 width^2)))`.
    SpaceModulated { c0: f64, amplitude: f64, center: f64, width: f64 },
}

impl Diffusion {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match *self {
            Diffusion::Constant { c } => c,
            Diffusion::TimeModulated { c0, amplitude, frequency } => {
                c0 * (1.0 + amplitude * (frequency * t).sin())
            }
            Diffusion::SpaceModulated { c0, amplitude, center, width } => {
                let z = (x - center) / width;
                c0 * (1.0 + amplitude * (-0.5 * z * z).exp())
            }
        }
    }

    /// Time derivative, analytic per family.
    pub fn dt(&self, t: f64, _x: f64) -> f64 {
        match *self {
            Diffusion::Constant { .. } | Diffusion::SpaceModulated { .. } => 0.0,
            Diffusion::TimeModulated { c0, amplitude, frequency } => {
                c0 * amplitude * frequency * (frequency * t).cos()
            }
        }
    }

    /// Space derivative, analytic per family.
    pub fn dx(&self, _t: f64, x: f64) -> f64 {
        match *self {
            Diffusion::Constant { .. } | Diffusion::TimeModulated { .. } => 0.0,
            Diffusion::SpaceModulated { c0, amplitude, center, width } => {
                let z = (x - center) / width;
                -c0 * amplitude * (z / width) * (-0.5 * z * z).exp()
            }
        }
    }

    /// Uniform bounds `(c_min, c_max)` over all `(t, x)`.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Diffusion::Constant { c } => (c, c),
            Diffusion::TimeModulated { c0, amplitude, .. } => {
                (c0 * (1.0 - amplitude), c0 * (1.0 + amplitude))
            }
            Diffusion::SpaceModulated { c0, amplitude, .. } => (c0, c0 * (1.0 + amplitude)),
        }
    }

    /// Uniform bound on `|d sigma / dt|`.
    pub fn dt_bound(&self) -> f64 {
        match *self {
            Diffusion::Constant { .. } | Diffusion::SpaceModulated { .. } => 0.0,
            Diffusion::TimeModulated { c0, amplitude, frequency } => {
                c0 * amplitude * frequency.abs()
            }
        }
    }

    /// Uniform bound on `|d sigma / dx|`.
    pub fn dx_bound(&self) -> f64 {
        match *self {
            Diffusion::Constant { .. } | Diffusion::TimeModulated { .. } => 0.0,
            Diffusion::SpaceModulated { c0, amplitude, width, .. } => {
                // The Gaussian bump's slope peaks at one width from the center.
                c0 * amplitude / (width * std::f64::consts::E.sqrt())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let check_mod = |c0: f64, amplitude: f64| -> Result<()> {
            if !c0.is_finite() || c0 <= 0.0 {
                return Err(Error::InvalidParam(format!(
                    "diffusion base level must be positive, got {c0}"
                )));
            }
            if !amplitude.is_finite() || !(0.0..1.0).contains(&amplitude) {
                return Err(Error::InvalidParam(format!(
                    "diffusion amplitude must lie in [0, 1), got {amplitude}"
                )));
            }
            Ok(())
        };
        match *self {
            Diffusion::Constant { c } => {
                if !c.is_finite() || c <= 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "diffusion constant must be positive, got {c}"
                    )));
                }
            }
            Diffusion::TimeModulated { c0, amplitude, frequency } => {
                check_mod(c0, amplitude)?;
                if !frequency.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "diffusion frequency must be finite, got {frequency}"
                    )));
                }
            }
            Diffusion::SpaceModulated { c0, amplitude, center, width } => {
                check_mod(c0, amplitude)?;
                if !center.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "diffusion center must be finite, got {center}"
                    )));
                }
                if !width.is_finite() || width <= 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "diffusion width must be positive, got {width}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Effective infection rate `gamma(t, c)` as a function of contagiousness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Constant { g: f64 },
    AffineInContagion { g0: f64, g1: f64 },
}

impl Rate {
    pub fn eval(&self, _t: f64, c: f64) -> f64 {
        match *self {
            Rate::Constant { g } => g,
            Rate::AffineInContagion { g0, g1 } => g0 + g1 * c,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Rate::Constant { g } => {
                if !g.is_finite() || g < 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "infection rate must be nonnegative, got {g}"
                    )));
                }
            }
            Rate::AffineInContagion { g0, g1 } => {
                if !g0.is_finite() || g0 < 0.0 || !g1.is_finite() || g1 < 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "affine rate coefficients must be nonnegative, got ({g0}, {g1})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The full coefficient set for the particle dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSet {
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub rate: Rate,
}

impl CoefficientSet {
    pub fn new(drift: Drift, diffusion: Diffusion, rate: Rate) -> Result<Self> {
        drift.validate()?;
        diffusion.validate()?;
        rate.validate()?;
        Ok(CoefficientSet { drift, diffusion, rate })
    }

    pub fn drift(&self, t: f64, x: f64) -> f64 {
        self.drift.eval(t, x)
    }

    pub fn sigma(&self, t: f64, x: f64) -> f64 {
        self.diffusion.eval(t, x)
    }

    pub fn rate(&self, t: f64, c: f64) -> f64 {
        self.rate.eval(t, c)
    }
}

/// Initial-law family for the shielding levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialFamily {
    Point { x0: f64 },
    /// Gaussian conditioned on lying above the front start level.
    TruncatedGaussian { mean: f64, stdev: f64 },
}

/// Initial law together with the front start level it must stay above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialLaw {
    pub family: InitialFamily,
    pub a0: f64,
}

impl InitialLaw {
    pub fn new(family: InitialFamily, a0: f64) -> Result<Self> {
        if !a0.is_finite() {
            return Err(Error::InvalidParam(format!("front start level must be finite, got {a0}")));
        }
        match family {
            InitialFamily::Point { x0 } => {
                if !x0.is_finite() || x0 <= a0 {
                    return Err(Error::InvalidParam(format!(
                        "point start {x0} must lie strictly above the front start {a0}"
                    )));
                }
            }
            InitialFamily::TruncatedGaussian { mean, stdev } => {
                if !mean.is_finite() {
                    return Err(Error::InvalidParam(format!("initial mean must be finite, got {mean}")));
                }
                if !stdev.is_finite() || stdev <= 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "initial stdev must be positive, got {stdev}"
                    )));
                }
            }
        }
        Ok(InitialLaw { family, a0 })
    }

    /// Map one uniform draw from the open interval (0, 1) to a sample.
    /// Every sample lies strictly above `a0`.
    pub fn sample(&self, u: f64) -> f64 {
        match self.family {
            InitialFamily::Point { x0 } => x0,
            InitialFamily::TruncatedGaussian { mean, stdev } => {
                let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
                let p0 = std_normal.cdf((self.a0 - mean) / stdev);
                let p = p0 + u * (1.0 - p0);
                mean + stdev * std_normal.inverse_cdf(p)
            }
        }
    }
}

/// Outcome of one structural check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

/// One named structural condition with its outcome.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub verdict: Verdict,
    pub detail: String,
}

/// Validation report over all structural conditions; collects failures
/// instead of aborting on the first one.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// True when the kernel smoothness needed by the rescaled frame holds.
    pub lamperti_eligible: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match c.verdict {
                Verdict::Pass => "pass",
                Verdict::Warn => "warn",
                Verdict::Fail => "FAIL",
            };
            out.push_str(&format!("[{tag}] {}: {}\n", c.name, c.detail));
        }
        out
    }
}

/// Check every structural condition the engine relies on and report each
/// one's outcome. Never aborts; failed conditions become `Fail` entries.
pub fn validate_config(
    kernel: &KernelSpec,
    coeffs: &CoefficientSet,
    initial: &InitialLaw,
) -> ValidationReport {
    let mut checks = Vec::new();

    let kernel_params = KernelSpec::new(kernel.family, kernel.dbar);
    checks.push(match &kernel_params {
        Ok(_) => Check {
            name: "kernel parameters",
            verdict: Verdict::Pass,
            detail: format!("support [0, {}]", kernel.dbar),
        },
        Err(e) => Check {
            name: "kernel parameters",
            verdict: Verdict::Fail,
            detail: e.to_string(),
        },
    });

    if kernel_params.is_ok() {
        let mass = simpson(|u| kernel.density(u), 0.0, kernel.dbar, 1 << 14);
        let ok = (mass - 1.0).abs() <= 1e-10;
        checks.push(Check {
            name: "kernel normalization",
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            detail: format!("numerical mass {mass:.12}"),
        });

        let grid = 1000;
        let mut monotone = true;
        let mut prev = kernel.cdf(0.0);
        for j in 1..=grid {
            let p = kernel.cdf(kernel.dbar * j as f64 / grid as f64);
            if p + 1e-12 < prev {
                monotone = false;
            }
            prev = p;
        }
        let ends_ok = kernel.cdf(0.0) == 0.0 && kernel.cdf(kernel.dbar) == 1.0;
        checks.push(Check {
            name: "kernel cumulative monotone",
            verdict: if monotone && ends_ok { Verdict::Pass } else { Verdict::Fail },
            detail: format!("monotone {monotone}, endpoints {ends_ok}"),
        });
    }

    checks.push(match coeffs.drift.validate() {
        Ok(()) => Check {
            name: "drift Lipschitz",
            verdict: Verdict::Pass,
            detail: format!("Lipschitz constant {}", coeffs.drift.lipschitz()),
        },
        Err(e) => Check {
            name: "drift Lipschitz",
            verdict: Verdict::Fail,
            detail: e.to_string(),
        },
    });

    checks.push(match coeffs.diffusion.validate() {
        Ok(()) => {
            let (lo, hi) = coeffs.diffusion.bounds();
            Check {
                name: "diffusion bounded non-degenerate",
                verdict: Verdict::Pass,
                detail: format!("bounds [{lo}, {hi}]"),
            }
        }
        Err(e) => Check {
            name: "diffusion bounded non-degenerate",
            verdict: Verdict::Fail,
            detail: e.to_string(),
        },
    });

    checks.push(match coeffs.rate.validate() {
        Ok(()) => Check {
            name: "infection rate continuous nonnegative",
            verdict: Verdict::Pass,
            detail: "affine or constant in contagiousness".to_string(),
        },
        Err(e) => Check {
            name: "infection rate continuous nonnegative",
            verdict: Verdict::Fail,
            detail: e.to_string(),
        },
    });

    checks.push(match InitialLaw::new(initial.family, initial.a0) {
        Ok(_) => Check {
            name: "initial law above front start",
            verdict: Verdict::Pass,
            detail: format!("support strictly above {}", initial.a0),
        },
        Err(e) => Check {
            name: "initial law above front start",
            verdict: Verdict::Fail,
            detail: e.to_string(),
        },
    });

    checks.push(Check {
        name: "initial law sub-Gaussian integrability",
        verdict: Verdict::Pass,
        detail: "holds analytically for every catalog family; not enforced numerically".to_string(),
    });

    let smooth = kernel.is_smooth();
    checks.push(Check {
        name: "kernel absolute continuity",
        verdict: if smooth { Verdict::Pass } else { Verdict::Warn },
        detail: if smooth {
            "density continuous on the whole line".to_string()
        } else {
            "kernel not absolutely continuous; rescaled-frame operations unavailable".to_string()
        },
    });

    let diffusion_ok = coeffs.diffusion.validate().is_ok();
    ValidationReport {
        checks,
        lamperti_eligible: smooth && diffusion_ok,
    }
}

/// Composite Simpson quadrature on a fixed panel count (even panel count).
pub(crate) fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(2) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * j as f64);
    }
    acc * h / 3.0
}
