//! Scenario files: a TOML schema with one section per model component and
//! a strict conversion into a run configuration. Unknown keys anywhere are
//! rejected, and each family only accepts its own parameter keys.

use crate::coefficients::{
    CoefficientSet, Diffusion, Drift, InitialFamily, InitialLaw, KernelFamily, KernelSpec, Rate,
};
use crate::epidemic::{Mode, RunConfig};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub family: String,
    pub dbar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n: usize,
    #[serde(rename = "T")]
    pub t_horizon: f64,
    pub dt: f64,
    pub mode: String,
    pub seed: u64,
    pub a0: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub record_particles: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

/// Parsed scenario with one section per model component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub kernel: KernelSection,
    pub drift: DriftSection,
    pub diffusion: DiffusionSection,
    pub rate: RateSection,
    pub initial: InitialSection,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

/// Parse scenario text, rejecting unknown keys and missing sections.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    toml::from_str(text).map_err(|e| Error::Config(format!("scenario parse error: {e}")))
}

/// Serialize a scenario back to TOML.
pub fn scenario_to_toml(file: &ScenarioFile) -> Result<String> {
    toml::to_string(file).map_err(|e| Error::Config(format!("scenario serialize error: {e}")))
}

fn require(v: Option<f64>, key: &str, family: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("family '{family}' requires key '{key}'")))
}

fn forbid(v: &Option<f64>, key: &str, family: &str) -> Result<()> {
    if v.is_some() {
        return Err(Error::Config(format!("key '{key}' does not apply to family '{family}'")));
    }
    Ok(())
}

impl ScenarioFile {
    fn kernel_spec(&self) -> Result<KernelSpec> {
        let k = &self.kernel;
        let family = match k.family.as_str() {
            "uniform" => {
                forbid(&k.shape, "shape", "uniform")?;
                forbid(&k.scale, "scale", "uniform")?;
                forbid(&k.taper, "taper", "uniform")?;
                KernelFamily::Uniform
            }
            "truncated_weibull" => {
                forbid(&k.taper, "taper", "truncated_weibull")?;
                KernelFamily::TruncatedWeibull {
                    shape: require(k.shape, "shape", "truncated_weibull")?,
                    scale: require(k.scale, "scale", "truncated_weibull")?,
                }
            }
            "tapered_uniform" => {
                forbid(&k.shape, "shape", "tapered_uniform")?;
                forbid(&k.scale, "scale", "tapered_uniform")?;
                KernelFamily::TaperedUniform {
                    taper: require(k.taper, "taper", "tapered_uniform")?,
                }
            }
            other => return Err(Error::Config(format!("unknown kernel family '{other}'"))),
        };
        KernelSpec::new(family, k.dbar)
    }

    fn drift(&self) -> Result<Drift> {
        let d = &self.drift;
        match d.family.as_str() {
            "constant" => {
                forbid(&d.theta, "theta", "constant")?;
                forbid(&d.m, "m", "constant")?;
                Ok(Drift::Constant { mu: require(d.mu, "mu", "constant")? })
            }
            "mean_reverting" => {
                forbid(&d.mu, "mu", "mean_reverting")?;
                Ok(Drift::MeanReverting {
                    theta: require(d.theta, "theta", "mean_reverting")?,
                    m: require(d.m, "m", "mean_reverting")?,
                })
            }
            other => Err(Error::Config(format!("unknown drift family '{other}'"))),
        }
    }

    fn diffusion(&self) -> Result<Diffusion> {
        let d = &self.diffusion;
        match d.family.as_str() {
            "constant" => {
                for (v, key) in [
                    (&d.c0, "c0"),
                    (&d.amplitude, "amplitude"),
                    (&d.frequency, "frequency"),
                    (&d.center, "center"),
                    (&d.width, "width"),
                ] {
                    forbid(v, key, "constant")?;
                }
                Ok(Diffusion::Constant { c: require(d.c, "c", "constant")? })
            }
            "time_modulated" => {
                forbid(&d.c, "c", "time_modulated")?;
                forbid(&d.center, "center", "time_modulated")?;
                forbid(&d.width, "width", "time_modulated")?;
                Ok(Diffusion::TimeModulated {
                    c0: require(d.c0, "c0", "time_modulated")?,
                    amplitude: require(d.amplitude, "amplitude", "time_modulated")?,
                    frequency: require(d.frequency, "frequency", "time_modulated")?,
                })
            }
            "space_modulated" => {
                forbid(&d.c, "c", "space_modulated")?;
                forbid(&d.frequency, "frequency", "space_modulated")?;
                Ok(Diffusion::SpaceModulated {
                    c0: require(d.c0, "c0", "space_modulated")?,
                    amplitude: require(d.amplitude, "amplitude", "space_modulated")?,
                    center: require(d.center, "center", "space_modulated")?,
                    width: require(d.width, "width", "space_modulated")?,
                })
            }
            other => Err(Error::Config(format!("unknown diffusion family '{other}'"))),
        }
    }

    fn rate(&self) -> Result<Rate> {
        let r = &self.rate;
        match r.family.as_str() {
            "constant" => {
                forbid(&r.g0, "g0", "constant")?;
                forbid(&r.g1, "g1", "constant")?;
                Ok(Rate::Constant { g: require(r.g, "g", "constant")? })
            }
            "affine_in_contagion" => {
                forbid(&r.g, "g", "affine_in_contagion")?;
                Ok(Rate::AffineInContagion {
                    g0: require(r.g0, "g0", "affine_in_contagion")?,
                    g1: require(r.g1, "g1", "affine_in_contagion")?,
                })
            }
            other => Err(Error::Config(format!("unknown rate family '{other}'"))),
        }
    }

    fn initial(&self) -> Result<InitialLaw> {
        let i = &self.initial;
        let family = match i.family.as_str() {
            "point" => {
                forbid(&i.mean, "mean", "point")?;
                forbid(&i.stdev, "stdev", "point")?;
                InitialFamily::Point { x0: require(i.x0, "x0", "point")? }
            }
            "truncated_gaussian" => {
                forbid(&i.x0, "x0", "truncated_gaussian")?;
                InitialFamily::TruncatedGaussian {
                    mean: require(i.mean, "mean", "truncated_gaussian")?,
                    stdev: require(i.stdev, "stdev", "truncated_gaussian")?,
                }
            }
            other => return Err(Error::Config(format!("unknown initial family '{other}'"))),
        };
        InitialLaw::new(family, self.run.a0)
    }

    fn mode(&self) -> Result<Mode> {
        let r = &self.run;
        let forbid_usize = |v: &Option<usize>, key: &str, mode: &str| -> Result<()> {
            if v.is_some() {
                return Err(Error::Config(format!("key '{key}' does not apply to mode '{mode}'")));
            }
            Ok(())
        };
        match r.mode.as_str() {
            "true" => {
                forbid_usize(&r.excluded, "excluded", "true")?;
                forbid(&r.u, "u", "true")?;
                forbid(&r.kappa, "kappa", "true")?;
                Ok(Mode::True)
            }
            "globally_reflected" => {
                forbid_usize(&r.excluded, "excluded", "globally_reflected")?;
                forbid(&r.u, "u", "globally_reflected")?;
                forbid(&r.kappa, "kappa", "globally_reflected")?;
                Ok(Mode::GloballyReflected)
            }
            "artificial_minus_i" => {
                forbid(&r.u, "u", "artificial_minus_i")?;
                forbid(&r.kappa, "kappa", "artificial_minus_i")?;
                let excluded = r.excluded.ok_or_else(|| {
                    Error::Config("mode 'artificial_minus_i' requires key 'excluded'".into())
                })?;
                Ok(Mode::ArtificialMinusI { excluded })
            }
            "barnes_tilde" => {
                forbid_usize(&r.excluded, "excluded", "barnes_tilde")?;
                Ok(Mode::BarnesTilde {
                    u: require(r.u, "u", "barnes_tilde")?,
                    kappa: require(r.kappa, "kappa", "barnes_tilde")?,
                })
            }
            "barnes_bar" => {
                forbid_usize(&r.excluded, "excluded", "barnes_bar")?;
                forbid(&r.kappa, "kappa", "barnes_bar")?;
                Ok(Mode::BarnesBar { u: require(r.u, "u", "barnes_bar")? })
            }
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }

    /// Assemble the run configuration; family parameters are checked here,
    /// numeric coherence by the configuration's own validation.
    pub fn to_run_config(&self) -> Result<RunConfig> {
        let coeffs = CoefficientSet::new(self.drift()?, self.diffusion()?, self.rate()?)?;
        Ok(RunConfig {
            n: self.run.n,
            t_horizon: self.run.t_horizon,
            dt: self.run.dt,
            mode: self.mode()?,
            seed: self.run.seed,
            coeffs,
            kernel: self.kernel_spec()?,
            initial: self.initial()?,
            a0: self.run.a0,
            alpha: self.run.alpha,
            record_particles: self.run.record_particles,
        })
    }
}
