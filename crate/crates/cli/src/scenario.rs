//! Scenario config schema.

use std::path::{Path, PathBuf};

use fbcsf::flow::FlowConfig;
use fbcsf::geometry::DiscreteCurve;
use fbcsf::kernels::ScanSpec;
use fbcsf::models::{perturb, ModelCurve};
use fbcsf::Barrier;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub barrier: BarrierSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub entropy: Option<ScanSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BarrierSpec {
    /// Open curves keep their endpoints fixed; closed curves need nothing.
    None,
    /// `Omega = {<normal, x> <= offset}`.
    Flat { normal: Vec<f64>, offset: f64 },
    Sphere { center: Vec<f64>, radius: f64 },
    Ellipsoid { center: Vec<f64>, semi_axes: Vec<f64> },
}

impl BarrierSpec {
    pub fn build(&self) -> Result<Option<Barrier>, CliError> {
        let b = match self {
            Self::None => return Ok(None),
            Self::Flat { normal, offset } => Barrier::flat(normal, *offset),
            Self::Sphere { center, radius } => Barrier::sphere(center, *radius),
            Self::Ellipsoid { center, semi_axes } => Barrier::ellipsoid(center, semi_axes),
        };
        b.map(Some).map_err(CliError::schema)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Model(ModelCurve),
    Nodes {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        closed: bool,
    },
    /// A model plus `amplitude * sum_k c_k (1 - cos 2 pi k u) / (2 modes)`
    /// along `direction`, with `c_k` drawn from the flow seed.
    Perturbed {
        model: ModelCurve,
        direction: Vec<f64>,
        amplitude: f64,
        modes: usize,
    },
}

impl InitialSpec {
    pub fn build(&self, node_count: usize, seed: u64) -> Result<DiscreteCurve, CliError> {
        match self {
            Self::Model(m) => m.sample(node_count),
            Self::Nodes { points, closed } => DiscreteCurve::from_points(points, *closed),
            Self::Perturbed { model, direction, amplitude, modes } => {
                perturb(&model.sample(node_count).map_err(CliError::schema)?, direction, *amplitude, *modes, seed)
            }
        }
        .map_err(CliError::schema)
    }
}

/// Flow parameters; omitted fields take the library defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSpec {
    pub node_count: usize,
    pub cfl: f64,
    pub t_end: f64,
    pub kappa_cap: f64,
    pub len_min: f64,
    pub output_every: usize,
    pub seed: u64,
    pub max_steps: Option<usize>,
}

impl Default for FlowSpec {
    fn default() -> Self {
        let c = FlowConfig::default();
        Self {
            node_count: c.node_count,
            cfl: c.cfl,
            t_end: c.t_end,
            kappa_cap: c.kappa_cap,
            len_min: c.len_min,
            output_every: c.output_every,
            seed: c.seed,
            max_steps: c.max_steps,
        }
    }
}

impl FlowSpec {
    pub fn config(&self) -> FlowConfig {
        FlowConfig {
            node_count: self.node_count,
            cfl: self.cfl,
            t_end: self.t_end,
            kappa_cap: self.kappa_cap,
            len_min: self.len_min,
            output_every: self.output_every,
            seed: self.seed,
            max_steps: self.max_steps,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    EvolutionKappa,
    EvolutionKappaSq,
    EvolutionTau1,
    Commutator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedType {
    TypeI,
    TypeII,
    None,
}

/// Checks evaluated after the run; each has its own tolerance.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    /// Largest node displacement from the initial state.
    MaxDisplacement { tol: f64 },
    SingularTime { expected: f64, tol: f64 },
    SingularityType { expected: ExpectedType },
    /// Identity residual over consecutive output states.
    Residual {
        identity: Identity,
        tol: f64,
        #[serde(default = "default_margin")]
        margin: usize,
    },
    /// Endpoint relation residuals over output states after `t = 0`, plus
    /// the endpoint inequalities at every output.
    EndpointRelations { tol: f64 },
    Boundary { dist_tol: f64, angle_tol: f64 },
    /// `|tau_1 / kappa| <= K / |kappa|` at the endpoints of every output.
    TauKappaEndpointBound,
    /// Every entropy scan sample below `bound`.
    EntropyBelow { bound: f64 },
}

fn default_margin() -> usize {
    3
}

impl Analysis {
    pub fn validate(&self) -> Result<(), CliError> {
        let tols: Vec<f64> = match self {
            Self::MaxDisplacement { tol } | Self::SingularTime { tol, .. } => vec![*tol],
            Self::Residual { tol, .. } | Self::EndpointRelations { tol } => vec![*tol],
            Self::Boundary { dist_tol, angle_tol } => vec![*dist_tol, *angle_tol],
            Self::EntropyBelow { bound } => vec![*bound],
            Self::SingularityType { .. } | Self::TauKappaEndpointBound => vec![],
        };
        if tols.iter().all(|t| *t > 0.0 && t.is_finite()) {
            Ok(())
        } else {
            Err(CliError::Schema(format!("tolerances must be positive: {self:?}")))
        }
    }
}

pub const MIN_NODES: usize = 16;

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.flow.node_count < MIN_NODES {
            return Err(CliError::Schema(format!("node_count must be >= {MIN_NODES}")));
        }
        self.flow.config().validate().map_err(CliError::schema)?;
        self.analyses.iter().try_for_each(Analysis::validate)?;
        if self.entropy.is_none() && self.analyses.iter().any(|a| matches!(a, Analysis::EntropyBelow { .. })) {
            return Err(CliError::Schema("entropy_below needs an entropy scan spec".into()));
        }
        Ok(())
    }

    /// `FBCSF_OUT` wins over the config, which wins over `out/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os("FBCSF_OUT") {
            return PathBuf::from(dir);
        }
        self.output_dir.clone().unwrap_or_else(|| Path::new("out").join(&self.name))
    }
}
