//! Suite configuration, read from TOML. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kinlab_core::grid::{OpacityProfile, Region};
use kinlab_core::kinetic::{InitialProfile, Splitting};
use kinlab_core::scattering::ScatteringKind;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub e1: Option<E1Config>,
    pub e2: Option<E2Config>,
    pub e3: Option<E3Config>,
    pub e4: Option<E4Config>,
    pub e5: Option<E5Config>,
    pub e6: Option<E6Config>,
    pub e7: Option<E7Config>,
    pub e8: Option<E8Config>,
}

fn default_seed() -> u64 {
    20_240_917
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatteringSpec {
    Neutron,
    FokkerPlanck,
}

impl From<ScatteringSpec> for ScatteringKind {
    fn from(s: ScatteringSpec) -> Self {
        match s {
            ScatteringSpec::Neutron => ScatteringKind::Neutron,
            ScatteringSpec::FokkerPlanck => ScatteringKind::FokkerPlanck,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplittingSpec {
    #[default]
    Lie,
    Strang,
}

impl From<SplittingSpec> for Splitting {
    fn from(s: SplittingSpec) -> Self {
        match s {
            SplittingSpec::Lie => Splitting::Lie,
            SplittingSpec::Strang => Splitting::Strang,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpacitySpec {
    Constant {
        value: f64,
    },
    /// `base + amplitude * (1 - s²)³`, `s = |x - center| / radius`.
    Bump {
        base: f64,
        amplitude: f64,
        center: [f64; 2],
        radius: f64,
    },
}

impl Default for OpacitySpec {
    fn default() -> Self {
        OpacitySpec::Constant { value: 1.0 }
    }
}

impl From<OpacitySpec> for OpacityProfile {
    fn from(s: OpacitySpec) -> Self {
        match s {
            OpacitySpec::Constant { value } => OpacityProfile::Constant(value),
            OpacitySpec::Bump {
                base,
                amplitude,
                center,
                radius,
            } => OpacityProfile::Bump {
                base,
                amplitude,
                center,
                radius,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Zero,
    IsotropicBump {
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
    },
    AnisotropicBump {
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
    },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::IsotropicBump {
            center: [0.5, 0.5],
            radius: 0.35,
            amplitude: 1.0,
        }
    }
}

impl From<InitialSpec> for InitialProfile {
    fn from(s: InitialSpec) -> Self {
        match s {
            InitialSpec::Zero => InitialProfile::Zero,
            InitialSpec::IsotropicBump {
                center,
                radius,
                amplitude,
            } => InitialProfile::IsotropicBump {
                center,
                radius,
                amplitude,
            },
            InitialSpec::AnisotropicBump {
                center,
                radius,
                amplitude,
            } => InitialProfile::AnisotropicBump {
                center,
                radius,
                amplitude,
            },
        }
    }
}

/// `[x0, x1, y0, y1]`.
pub fn rectangle(r: [f64; 4]) -> Region {
    Region::Rectangle {
        x0: r[0],
        x1: r[1],
        y0: r[2],
        y1: r[3],
    }
}

fn one() -> f64 {
    1.0
}
fn persistence() -> f64 {
    1.5
}
fn min_r2() -> f64 {
    0.9
}
fn tolerance5() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E1Config {
    pub nx: usize,
    pub nv: usize,
    pub epsilons: Vec<f64>,
    pub t_final: f64,
    pub p: f64,
    pub scattering: ScatteringSpec,
    #[serde(default)]
    pub opacity: OpacitySpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default = "one")]
    pub cfl: f64,
    #[serde(default)]
    pub splitting: SplittingSpec,
    pub heat_steps: usize,
    /// Number of equal intervals for the space-time error quadrature.
    pub time_samples: usize,
    #[serde(default = "persistence")]
    pub persistence: f64,
    #[serde(default = "min_r2")]
    pub min_r2: f64,
    /// Optional finer grid, reported at the smallest `ε` only.
    pub refine_nx: Option<usize>,
    /// Anisotropic data run at every `ε`, reported without assertion.
    pub report_anisotropic: Option<InitialSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E2Config {
    pub nx: usize,
    pub nv: usize,
    pub epsilons: Vec<f64>,
    pub t_final: f64,
    pub p: f64,
    pub scattering: Vec<ScatteringSpec>,
    #[serde(default)]
    pub opacity: OpacitySpec,
    #[serde(default)]
    pub initial: InitialSpec,
    pub etas: Vec<f64>,
    #[serde(default = "tolerance5")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E3Config {
    pub nx: usize,
    pub nv: usize,
    pub epsilons: Vec<f64>,
    pub t_final: f64,
    pub scattering: Vec<ScatteringSpec>,
    #[serde(default)]
    pub opacity: OpacitySpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default = "tolerance5")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E4Config {
    pub nx: usize,
    #[serde(default)]
    pub opacity: OpacitySpec,
    pub omega: [f64; 4],
    pub times: Vec<f64>,
    /// Eigenfunction indices (1-based, inclusive) of the training family.
    pub train_modes: [usize; 2],
    pub holdout_modes: [usize; 2],
    /// Side of the training bump lattice and its bump radius.
    pub lattice: usize,
    pub lattice_radius: f64,
    /// Centre range of the lattice (and of random bumps).
    pub bump_range: [f64; 2],
    pub holdout_bumps: usize,
    /// Radius range of the random hold-out bumps.
    pub holdout_radius: [f64; 2],
    pub train_fields: usize,
    pub holdout_fields: usize,
    pub field_modes: usize,
    pub mu_steps: usize,
    #[serde(default = "persistence")]
    pub persistence: f64,
    #[serde(default = "min_r2")]
    pub min_r2: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E5Config {
    pub nx: usize,
    #[serde(default)]
    pub opacity: OpacitySpec,
    pub t_final: f64,
    pub steps: usize,
    pub samples: usize,
    pub field_modes: usize,
    pub eigen_modes: usize,
    pub omega: [f64; 4],
    pub monotone_tolerance: f64,
    pub eigen_tolerance: f64,
    pub bound_tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E6Config {
    pub systems: usize,
    pub samples: usize,
    pub triples: usize,
    pub ells: Vec<f64>,
    pub c0s: Vec<f64>,
    pub c1s: Vec<f64>,
    pub lambda: f64,
    pub t_final: f64,
    pub closed_form_tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E7Config {
    pub nx: usize,
    pub kappa: f64,
    pub t_final: f64,
    pub steps: usize,
    pub lambdas: Vec<f64>,
    pub samples: usize,
    pub field_modes: usize,
    pub monotone_tolerance: f64,
    pub smallness: SmallnessConfig,
    pub observability: ObservabilityConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallnessConfig {
    pub rho: f64,
    pub eps_cut: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservabilityConfig {
    pub nx: usize,
    pub modes: usize,
    pub radius: f64,
    pub refine: usize,
    #[serde(default = "min_r2")]
    pub min_r2: f64,
    pub max_violation: f64,
    /// Final times of the time-integrated ball observation; the constant is
    /// fitted at the last one.
    pub integrated_times: Vec<f64>,
    pub integrated_steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E8Config {
    /// Grid sizes; `c` is fitted on each and must agree within `c_tolerance`.
    pub grids: Vec<usize>,
    pub nv: usize,
    pub epsilons: Vec<f64>,
    pub t_final: f64,
    pub p: f64,
    pub scattering: ScatteringSpec,
    #[serde(default)]
    pub opacity: OpacitySpec,
    pub omega: [f64; 4],
    /// Transition width of the plateau cutoff on `ω`.
    pub chi_width: f64,
    /// Radii of the isotropic bump data (centred at `center`).
    pub radii: Vec<f64>,
    pub center: [f64; 2],
    pub heat_steps: usize,
    pub c_tolerance: f64,
    #[serde(default = "persistence")]
    pub persistence: f64,
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = toml::from_str(text).context("parsing configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let eps_lists = [
            ("e1", self.e1.as_ref().map(|c| &c.epsilons)),
            ("e2", self.e2.as_ref().map(|c| &c.epsilons)),
            ("e3", self.e3.as_ref().map(|c| &c.epsilons)),
            ("e8", self.e8.as_ref().map(|c| &c.epsilons)),
        ];
        for (name, list) in eps_lists {
            if let Some(list) = list {
                check_epsilons(name, list)?;
            }
        }
        if let Some(c) = &self.e1 {
            if c.epsilons.len() < 3 {
                bail!("e1: a rate fit needs at least three epsilons");
            }
            if !(c.p > 2.0) {
                bail!("e1: p must exceed 2");
            }
            if c.time_samples == 0 || c.heat_steps % c.time_samples != 0 {
                bail!("e1: heat_steps must be a positive multiple of time_samples");
            }
        }
        if let Some(c) = &self.e2 {
            if c.etas.iter().any(|&e| e < 2.0) {
                bail!("e2: trace exponents must be >= 2");
            }
        }
        if let Some(c) = &self.e4 {
            if c.times.len() < 3 {
                bail!("e4: the ln c(T) fit needs at least three times");
            }
            if c.train_modes[0] == 0 || c.train_modes[0] > c.train_modes[1] || c.holdout_modes[0] > c.holdout_modes[1] {
                bail!("e4: mode ranges must be 1-based and ordered");
            }
        }
        if let Some(c) = &self.e8 {
            if c.grids.len() < 2 {
                bail!("e8: constant stability needs two grids");
            }
            if c.radii.len() < 2 {
                bail!("e8: threshold monotonicity needs at least two data shapes");
            }
        }
        Ok(())
    }

    /// Ids of the configured experiments, in run order.
    pub fn experiments(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let present = [
            ("E1", self.e1.is_some()),
            ("E2", self.e2.is_some()),
            ("E3", self.e3.is_some()),
            ("E4", self.e4.is_some()),
            ("E5", self.e5.is_some()),
            ("E6", self.e6.is_some()),
            ("E7", self.e7.is_some()),
            ("E8", self.e8.is_some()),
        ];
        for (id, on) in present {
            if on {
                out.push(id);
            }
        }
        out
    }
}

fn check_epsilons(name: &str, list: &[f64]) -> Result<()> {
    if list.is_empty() {
        bail!("{name}: empty epsilon list");
    }
    if list.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        bail!("{name}: every epsilon must lie in (0, 1]");
    }
    if list.windows(2).any(|w| w[1] >= w[0]) {
        bail!("{name}: epsilons must be strictly decreasing");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        assert!(SuiteConfig::from_toml("seed = 1\nbogus = 2\n").is_err());
        let text = r#"
            [e3]
            nx = 15
            nv = 8
            epsilons = [0.4, 0.1]
            t_final = 0.1
            scattering = ["neutron"]
            colour = "red"
        "#;
        assert!(SuiteConfig::from_toml(text).is_err());
        let text = r#"
            [e3]
            nx = 15
            nv = 8
            epsilons = [0.4, 0.1]
            t_final = 0.1
            scattering = ["neutron"]
            opacity = { kind = "constant", value = 1.0, extra = 3 }
        "#;
        assert!(SuiteConfig::from_toml(text).is_err());
    }

    #[test]
    fn epsilons_must_decrease() {
        let text = r#"
            [e3]
            nx = 15
            nv = 8
            epsilons = [0.1, 0.4]
            t_final = 0.1
            scattering = ["neutron"]
        "#;
        assert!(SuiteConfig::from_toml(text).is_err());
        let ok = text.replace("[0.1, 0.4]", "[0.4, 0.1]");
        let cfg = SuiteConfig::from_toml(&ok).unwrap();
        assert_eq!(cfg.experiments(), vec!["E3"]);
        assert_eq!(cfg.e3.unwrap().opacity, OpacitySpec::Constant { value: 1.0 });
    }

    #[test]
    fn opacity_and_initial_tables() {
        let text = r#"
            [e3]
            nx = 15
            nv = 8
            epsilons = [0.4]
            t_final = 0.1
            scattering = ["neutron", "fokker_planck"]
            opacity = { kind = "bump", base = 1.0, amplitude = 0.5, center = [0.5, 0.5], radius = 0.3 }
            initial = { kind = "anisotropic_bump", center = [0.4, 0.5], radius = 0.2, amplitude = 2.0 }
        "#;
        let c = SuiteConfig::from_toml(text).unwrap().e3.unwrap();
        assert_eq!(
            c.scattering,
            vec![ScatteringSpec::Neutron, ScatteringSpec::FokkerPlanck]
        );
        assert!(matches!(OpacityProfile::from(c.opacity), OpacityProfile::Bump { .. }));
        assert!(matches!(
            InitialProfile::from(c.initial),
            InitialProfile::AnisotropicBump { .. }
        ));
    }
}
