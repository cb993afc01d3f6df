//! JSON run configuration.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Density, GridSpec, SizeGrid};
use crate::params::ModelParams;
use crate::pde::SimOptions;
use crate::profile::{GapOptions, ProfileOptions};
use crate::reduction::{EpsSource, Formulation, OdeOptions};
use crate::transport::Scheme;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Profile,
    Gap,
    Simulate,
    Reduce,
    Ode,
    Stability,
    Sweep,
    Verify,
}

/// Initial polymer density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum U0Spec {
    /// `amplitude · x^power · e^{−rate x}`.
    Exponential {
        amplitude: f64,
        rate: f64,
        #[serde(default)]
        power: f64,
    },
    /// `scale · U` with `U` the computed profile.
    Profile { scale: f64 },
    /// Density written by the `x_center,width,value` CSV writer.
    Csv { path: PathBuf },
    Zero,
}

impl U0Spec {
    /// Builds the density; `profile` is only called for [`U0Spec::Profile`].
    pub fn build(&self, grid: &Arc<SizeGrid<f64>>, profile: impl FnOnce() -> Result<Density<f64>>) -> Result<Density<f64>> {
        match self {
            U0Spec::Exponential { amplitude, rate, power } => {
                if !(*amplitude >= 0.0) || !(*rate > 0.0) || !(*power >= 0.0) {
                    return Err(Error::Precondition("exponential u0 needs amplitude >= 0, rate > 0, power >= 0".into()));
                }
                Density::from_fn(grid.clone(), |x| amplitude * x.powf(*power) * (-rate * x).exp())
            }
            U0Spec::Profile { scale } => {
                if !(*scale >= 0.0) {
                    return Err(Error::Precondition("profile u0 needs scale >= 0".into()));
                }
                Ok(profile()?.scaled(*scale))
            }
            U0Spec::Csv { path } => {
                let file = File::open(path).map_err(|e| Error::Precondition(format!("cannot open {}: {e}", path.display())))?;
                Density::read_csv(grid.clone(), file)
            }
            U0Spec::Zero => Ok(Density::zeros(grid.clone())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    #[serde(rename = "V0")]
    pub v0: f64,
    pub u0: U0Spec,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec { v0: 2.0, u0: U0Spec::Exponential { amplitude: 0.1, rate: 1.0, power: 0.0 } }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileSection {
    pub tol: f64,
    pub max_steps: usize,
    pub safety: f64,
    pub scheme: Scheme,
}

impl Default for ProfileSection {
    fn default() -> Self {
        let d = ProfileOptions::<f64>::default();
        ProfileSection { tol: d.tol, max_steps: d.max_steps, safety: d.safety, scheme: d.scheme }
    }
}

impl ProfileSection {
    pub fn options(&self) -> ProfileOptions<f64> {
        ProfileOptions { tol: self.tol, max_steps: self.max_steps, safety: self.safety, scheme: self.scheme }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapSection {
    pub u0: U0Spec,
    pub horizon: f64,
    pub sample_every: f64,
    pub transient_ratio: f64,
    pub floor_ratio: f64,
    pub safety: f64,
}

impl Default for GapSection {
    fn default() -> Self {
        let d = GapOptions::<f64>::default();
        GapSection {
            u0: U0Spec::Exponential { amplitude: 4.0, rate: 2.0, power: 1.0 },
            horizon: d.horizon,
            sample_every: d.sample_every,
            transient_ratio: d.transient_ratio,
            floor_ratio: d.floor_ratio,
            safety: d.safety,
        }
    }
}

impl GapSection {
    pub fn options(&self) -> GapOptions<f64> {
        GapOptions {
            horizon: self.horizon,
            sample_every: self.sample_every,
            transient_ratio: self.transient_ratio,
            floor_ratio: self.floor_ratio,
            safety: self.safety,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReduceSection {
    /// Output directory of a previous `simulate` run.
    pub trajectory_dir: Option<PathBuf>,
    /// RK4 step for the driven reduced system.
    pub ode_dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdeSection {
    pub formulation: Formulation,
    /// Initial scalars of `formulation`; `None` uses `(V0, 1, m₁(u0))`.
    pub x0: Option<[f64; 3]>,
    /// `M_p`; `None` computes the profile.
    pub mp: Option<f64>,
    pub eps: EpsSource,
    pub horizon: f64,
    pub dt: f64,
    pub output_every: f64,
}

impl Default for OdeSection {
    fn default() -> Self {
        let d = OdeOptions::default();
        OdeSection {
            formulation: Formulation::Vwq,
            x0: None,
            mp: None,
            eps: EpsSource::Zero,
            horizon: d.horizon,
            dt: d.dt,
            output_every: d.output_every,
        }
    }
}

impl OdeSection {
    pub fn options(&self) -> OdeOptions {
        OdeOptions { horizon: self.horizon, dt: self.dt, output_every: self.output_every }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilitySection {
    /// `M_p`; `None` computes the profile.
    pub mp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    /// Parameter name → values; runs cover the Cartesian product in name order.
    pub axes: BTreeMap<String, Vec<f64>>,
    /// Fixed `M_p`; `None` computes a profile per run.
    pub mp: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let mut axes = BTreeMap::new();
        axes.insert("lambda".to_string(), vec![0.5, 1.0, 2.0, 4.0]);
        axes.insert("omega".to_string(), vec![0.0, 1.0]);
        SweepSection { axes, mp: None }
    }
}

pub const SUITES: [&str; 8] = ["conservation", "profile", "dfe", "critical", "ee", "persistence", "reduction", "stability"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifySection {
    pub suites: Vec<String>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { suites: SUITES.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must match the subcommand when present.
    pub scenario: Option<Scenario>,
    pub params: ModelParams<f64>,
    pub grid: GridSpec,
    pub profile: ProfileSection,
    pub initial: InitialSpec,
    pub simulation: SimOptions,
    pub gap: GapSection,
    pub reduce: ReduceSection,
    pub ode: OdeSection,
    pub stability: StabilitySection,
    pub sweep: SweepSection,
    pub verify: VerifySection,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: None,
            params: ModelParams::canonical(),
            grid: GridSpec::default(),
            profile: ProfileSection::default(),
            initial: InitialSpec::default(),
            simulation: SimOptions::default(),
            gap: GapSection::default(),
            reduce: ReduceSection::default(),
            ode: OdeSection::default(),
            stability: StabilitySection::default(),
            sweep: SweepSection::default(),
            verify: VerifySection::default(),
            seed: 0,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Precondition(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Precondition(format!("cannot read config {}: {e}", path.display())))?;
        Ok((Self::from_json(&text)?, text))
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.grid.build(&self.params)?;
        if let Some(bad) = self.verify.suites.iter().find(|s| !SUITES.contains(&s.as_str())) {
            return Err(Error::Precondition(format!("unknown verify suite {bad:?}; expected one of {SUITES:?}")));
        }
        if !(self.initial.v0 >= 0.0) {
            return Err(Error::Precondition("initial V0 must be >= 0".into()));
        }
        for name in self.sweep.axes.keys() {
            if !crate::params::PARAM_NAMES.contains(&name.as_str()) {
                return Err(Error::Precondition(format!("unknown sweep parameter {name:?}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn defaults_roundtrip_through_json() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_json(r#"{"paramz": {}}"#).is_err());
    }

    #[test]
    fn invalid_gamma_fails_validation() {
        let c = RunConfig::from_json(r#"{"params": {"lambda":2,"delta":1,"tau":1,"mu":1,"beta":1,"gamma":0,"omega":0,"p":1,"r":2}}"#).unwrap();
        let err = c.validate().unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("gamma"));
    }

    #[test]
    fn u0_variants_parse() {
        let c = RunConfig::from_json(r#"{"initial": {"V0": 1.0, "u0": {"kind": "profile", "scale": 0.5}}}"#).unwrap();
        assert_eq!(c.initial.u0, U0Spec::Profile { scale: 0.5 });
        let c = RunConfig::from_json(r#"{"initial": {"V0": 1.0, "u0": {"kind": "exponential", "amplitude": 0.1, "rate": 1}}}"#).unwrap();
        assert_eq!(c.initial.u0, U0Spec::Exponential { amplitude: 0.1, rate: 1.0, power: 0.0 });
    }
}
