//! Experiment configuration: JSON documents validated against the shipped
//! schema, with dotted-path `--set` overrides.

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Config {
    #[serde(rename_all = "snake_case")]
    ActionProfile {
        kind: ProfileKind,
        g: String,
        #[serde(default)]
        h_grid: Vec<f64>,
        #[serde(default)]
        lambda_grid: Vec<f64>,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_order")]
        order: u32,
    },
    #[serde(rename_all = "snake_case")]
    MoserSolve {
        mode: MoserMode,
        #[serde(default)]
        model: Option<ModelName>,
        #[serde(default)]
        g0: Option<String>,
        #[serde(default)]
        u0: Option<String>,
        #[serde(default)]
        g: Option<String>,
        #[serde(default)]
        n: Option<u32>,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default = "default_poly_degree")]
        poly_degree: usize,
        #[serde(default)]
        lambda: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_seed")]
        seed: u64,
        #[serde(default = "default_order")]
        order: u32,
    },
    #[serde(rename_all = "snake_case")]
    NormalForm {
        family: FamilyName,
        g: String,
        n: u32,
        #[serde(default)]
        with_f: bool,
        #[serde(default = "default_big_order")]
        order: u32,
    },
    #[serde(rename_all = "snake_case")]
    CuspInvariant {
        g: String,
        #[serde(default = "default_order")]
        order: u32,
    },
    #[serde(rename_all = "snake_case")]
    AbelRoundtrip {
        #[serde(default)]
        g: Option<String>,
        #[serde(default)]
        iprime: Option<String>,
        #[serde(default = "default_h_max")]
        h_max: f64,
        #[serde(default = "default_grid_n")]
        grid: usize,
        #[serde(default = "default_order")]
        order: u32,
    },
    #[serde(rename_all = "snake_case")]
    PendulumDiagram {
        #[serde(default = "default_j_min")]
        j_min: f64,
        #[serde(default = "default_j_max")]
        j_max: f64,
        #[serde(default = "default_diagram_samples")]
        samples: usize,
    },
    #[serde(rename_all = "snake_case")]
    FlapAffine {
        #[serde(default = "default_resolution")]
        resolution: usize,
        #[serde(default = "default_diagram_samples")]
        samples: usize,
        #[serde(default)]
        transform: Option<PlantedTransform>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    #[serde(rename_all = "snake_case")]
    ModelPeriod {
        germ: String,
        #[serde(default = "default_order")]
        order: u32,
        #[serde(default)]
        starts: Vec<[f64; 3]>,
        #[serde(default)]
        random_starts: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Elliptic,
    HyperbolicQuadrant,
    CuspSection,
    VanishingCycle,
    SepLobe,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum MoserMode {
    Roundtrip,
    Parametric,
    SingularFit,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Elliptic,
    Hyperbolic,
    Cusp,
    CuspFamily,
}

impl ModelName {
    pub fn to_model(self) -> cuspidal::hamiltonians::ModelHamiltonian {
        use cuspidal::hamiltonians::ModelHamiltonian as M;
        match self {
            ModelName::Elliptic => M::Elliptic,
            ModelName::Hyperbolic => M::Hyperbolic,
            ModelName::Cusp => M::Cusp,
            ModelName::CuspFamily => M::CuspFamily,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Elliptic,
    Hyperbolic,
    Cusp,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedTransform {
    pub sign: i8,
    pub k: i32,
    pub shift: f64,
}

fn default_eps() -> f64 {
    0.5
}
fn default_order() -> u32 {
    8
}
fn default_big_order() -> u32 {
    14
}
fn default_poly_degree() -> usize {
    2
}
fn default_samples() -> usize {
    20
}
fn default_seed() -> u64 {
    7
}
fn default_h_max() -> f64 {
    0.25
}
fn default_grid_n() -> usize {
    257
}
fn default_j_min() -> f64 {
    -0.6
}
fn default_j_max() -> f64 {
    0.6
}
fn default_diagram_samples() -> usize {
    61
}
fn default_resolution() -> usize {
    17
}
fn default_tol() -> f64 {
    1e-6
}

/// Parse a config document, apply `--set key=value` overrides (dotted paths),
/// and validate into the typed form.
pub fn load(text: &str, overrides: &[String]) -> Result<Config> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).context("config is not valid JSON")?;
    for ov in overrides {
        let (path, raw) = ov
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects key=value, got `{ov}`"))?;
        let new: serde_json::Value =
            serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
        let mut slot = &mut value;
        for key in path.split('.') {
            slot = match slot {
                serde_json::Value::Object(map) => {
                    map.entry(key.to_string()).or_insert(serde_json::Value::Null)
                }
                serde_json::Value::Array(arr) => {
                    let idx: usize = key.parse().map_err(|_| anyhow!("bad index `{key}`"))?;
                    arr.get_mut(idx).ok_or_else(|| anyhow!("index {idx} out of range"))?
                }
                _ => bail!("cannot descend into `{key}`"),
            };
        }
        *slot = new;
    }
    let config: Config = serde_json::from_value(value).context("config rejected by schema")?;
    validate(&config)?;
    Ok(config)
}

fn validate(config: &Config) -> Result<()> {
    match config {
        Config::ActionProfile { kind, h_grid, lambda_grid, eps, .. } => {
            if *eps <= 0.0 {
                bail!("eps must be positive");
            }
            let needs_lambda =
                matches!(kind, ProfileKind::VanishingCycle | ProfileKind::SepLobe);
            if needs_lambda && lambda_grid.is_empty() {
                bail!("{kind:?} requires lambda_grid");
            }
            if !needs_lambda && h_grid.is_empty() {
                bail!("{kind:?} requires h_grid");
            }
        }
        Config::MoserSolve { mode, model, g0, u0, g, n, gamma, .. } => match mode {
            MoserMode::Roundtrip => {
                if model.is_none() || g0.is_none() || u0.is_none() {
                    bail!("roundtrip mode needs model, g0 and u0");
                }
            }
            MoserMode::Parametric => {
                if g.is_none() || n.is_none() {
                    bail!("parametric mode needs g and n");
                }
            }
            MoserMode::SingularFit => {
                if gamma.is_none() {
                    bail!("singular-fit mode needs gamma");
                }
            }
        },
        Config::NormalForm { family, with_f, .. } => {
            if *with_f && *family != FamilyName::Elliptic {
                bail!("with_f applies to the elliptic family only");
            }
        }
        Config::AbelRoundtrip { g, iprime, grid, .. } => {
            if g.is_none() && iprime.is_none() {
                bail!("abel-roundtrip needs g or iprime");
            }
            if *grid < 9 {
                bail!("grid must have at least 9 nodes");
            }
        }
        Config::PendulumDiagram { j_min, j_max, samples } => {
            if j_min >= j_max || *samples < 5 {
                bail!("need j_min < j_max and samples >= 5");
            }
        }
        Config::FlapAffine { resolution, samples, .. } => {
            if *resolution < 5 || *samples < 9 {
                bail!("need resolution >= 5 and samples >= 9");
            }
        }
        Config::ModelPeriod { starts, random_starts, .. } => {
            if starts.is_empty() && *random_starts == 0 {
                bail!("model-period needs starts or random_starts");
            }
        }
        Config::CuspInvariant { .. } => {}
    }
    Ok(())
}
