//! Scenario execution and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fbcsf::analysis::{
    endpoint_relations, residual_commutator, residual_evolution_kappa, residual_evolution_kappa_sq,
    residual_evolution_tau1, tau_kappa_ratio_monitor,
};
use fbcsf::flow::{run, FlowRun, SingularityRecord, SingularityType, Termination};
use fbcsf::kernels::{entropy_scan, gaussian_functional_phi, EntropyReport, KernelParams, ScanSpec};
use fbcsf::models::max_node_displacement;
use fbcsf::{Barrier, FlowState, ResidualOptions, ResidualReport};
use serde::Serialize;

use crate::scenario::{Analysis, ExpectedType, Identity, Scenario};
use crate::CliError;

pub const CSV_HEADER: &str = "t,dt,length,max_kappa,max_kappa_sqrt_T_minus_t,boundary_dist,boundary_angle,phi_main";

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

impl CheckOutcome {
    fn le(check: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { check: check.into(), value, bound: format!("<= {bound:e}"), passed: value <= bound }
    }

    pub fn line(&self) -> String {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        format!("[{mark}] {:<36} {:.6e}  {}", self.check, self.value, self.bound)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EndpointSummary {
    /// Largest relation residual over outputs after `t = 0`.
    pub max_residual: f64,
    pub inequalities_hold: bool,
    pub evaluated: usize,
}

/// Everything in `report.json`. No wall-clock data, so reruns are identical.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub name: String,
    pub termination: Termination,
    pub steps: usize,
    pub final_time: f64,
    pub final_length: f64,
    pub max_displacement: f64,
    pub singularity: SingularityRecord,
    pub residuals: Vec<ResidualReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint_relations: Option<EndpointSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<EntropyReport>,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

pub struct Outcome {
    pub run: FlowRun,
    pub ambient_dim: usize,
    pub phi_main: Vec<Option<f64>>,
    pub report: Report,
}

fn finite_states(run: &FlowRun) -> Result<(), CliError> {
    for s in &run.states {
        if !s.curve.coords().iter().all(|x| x.is_finite()) || !s.max_kappa_sq.is_finite() {
            return Err(CliError::from_run(fbcsf::Error::BlowupOverflow(s.time)));
        }
    }
    Ok(())
}

fn needs_barrier<'a>(barrier: Option<&'a Barrier>, run: &FlowRun, what: &str) -> Result<&'a Barrier, CliError> {
    match barrier {
        Some(b) if !run.last().curve.is_closed() => Ok(b),
        _ => Err(CliError::Schema(format!("{what} needs an open curve and a barrier"))),
    }
}

/// `Phi` with no cut-off, centered at the blowup point and singular time when
/// known, else at the final barycenter with `t0 = t_last + 1`. Empty for
/// states at or after `t0`.
fn phi_main(run: &FlowRun, barrier: Option<&Barrier>) -> Result<Vec<Option<f64>>, CliError> {
    let last = run.last();
    let params = match (&run.singularity.blowup_point, run.singularity.t_est) {
        (Some(z), Some(t)) => KernelParams::untruncated(z.clone(), t),
        _ => KernelParams::untruncated(last.curve.barycenter(), last.time + 1.0),
    };
    run.states
        .iter()
        .map(|s| {
            if s.time >= params.t0 {
                return Ok(None);
            }
            gaussian_functional_phi(&s.curve, s.time, &params, barrier).map(Some).map_err(CliError::from_run)
        })
        .collect()
}

fn residual(identity: Identity, states: &[FlowState], opts: &ResidualOptions) -> fbcsf::Result<ResidualReport> {
    match identity {
        Identity::EvolutionKappa => residual_evolution_kappa(states, opts),
        Identity::EvolutionKappaSq => residual_evolution_kappa_sq(states, opts),
        Identity::EvolutionTau1 => residual_evolution_tau1(states, opts),
        Identity::Commutator => residual_commutator(states, opts),
    }
}

pub fn execute(scenario: &Scenario, force_entropy: bool) -> Result<Outcome, CliError> {
    let barrier = scenario.barrier.build()?;
    let cfg = scenario.flow.config();
    let initial = scenario.initial.build(cfg.node_count, cfg.seed)?;
    let run = run(&initial, barrier.as_ref(), &cfg).map_err(CliError::from_run)?;
    finite_states(&run)?;
    let b = barrier.as_ref();
    let first = &run.states[0];
    let max_displacement = run
        .states
        .iter()
        .map(|s| max_node_displacement(&first.curve, &s.curve).map_err(CliError::from_run))
        .try_fold(0.0f64, |acc, d| d.map(|d| acc.max(d)))?;

    let entropy_spec = match (&scenario.entropy, force_entropy) {
        (Some(spec), _) => Some(spec.clone()),
        (None, true) => Some(ScanSpec::default()),
        (None, false) => None,
    };
    let entropy = entropy_spec.map(|spec| entropy_scan(&run.states, b, &spec)).transpose().map_err(CliError::from_run)?;

    let mut checks = Vec::new();
    let mut residuals = Vec::new();
    let mut endpoint = None;
    for analysis in &scenario.analyses {
        match analysis {
            Analysis::MaxDisplacement { tol } => checks.push(CheckOutcome::le("max_displacement", max_displacement, *tol)),
            Analysis::SingularTime { expected, tol } => {
                let t = run.singularity.t_est.unwrap_or(f64::NAN);
                checks.push(CheckOutcome {
                    check: "singular_time".into(),
                    value: t,
                    bound: format!("{expected} +- {tol:e}"),
                    passed: (t - expected).abs() <= *tol,
                });
            }
            Analysis::SingularityType { expected } => {
                let got = run.singularity.type_flag;
                let want = match expected {
                    ExpectedType::TypeI => SingularityType::TypeI,
                    ExpectedType::TypeII => SingularityType::TypeII,
                    ExpectedType::None => SingularityType::None,
                };
                let ratio = run.singularity.ratio_history.last().map_or(f64::NAN, |r| r.1);
                checks.push(CheckOutcome {
                    check: format!("singularity_type {got:?}"),
                    value: ratio,
                    bound: format!("== {want:?}"),
                    passed: got == want,
                });
            }
            Analysis::Residual { identity, tol, margin } => {
                let opts = ResidualOptions { margin: *margin, ..Default::default() };
                let r = residual(*identity, &run.states, &opts).map_err(CliError::from_run)?;
                checks.push(CheckOutcome::le(r.name.clone(), r.max_residual, *tol));
                residuals.push(r);
            }
            Analysis::EndpointRelations { tol } => {
                let bar = needs_barrier(b, &run, "endpoint_relations")?;
                let mut summary = EndpointSummary { max_residual: 0.0, inequalities_hold: true, evaluated: 0 };
                for s in &run.states {
                    let e = endpoint_relations(s, bar).map_err(CliError::from_run)?;
                    summary.inequalities_hold &= e.inequalities_hold();
                    if s.time > 0.0 {
                        summary.max_residual = summary.max_residual.max(e.report.max_residual);
                        summary.evaluated += 1;
                    }
                }
                checks.push(CheckOutcome::le("endpoint_relations", summary.max_residual, *tol));
                checks.push(CheckOutcome {
                    check: "endpoint_inequalities".into(),
                    value: f64::from(u8::from(summary.inequalities_hold)),
                    bound: "== 1".into(),
                    passed: summary.inequalities_hold,
                });
                endpoint = Some(summary);
            }
            Analysis::Boundary { dist_tol, angle_tol } => {
                let dist = run.states.iter().map(|s| s.boundary_dist).fold(0.0, f64::max);
                let angle = run.states.iter().map(|s| s.boundary_angle).fold(0.0, f64::max);
                checks.push(CheckOutcome::le("boundary_dist", dist, *dist_tol));
                checks.push(CheckOutcome::le("boundary_angle", angle, *angle_tol));
            }
            Analysis::TauKappaEndpointBound => {
                let bar = needs_barrier(b, &run, "tau_kappa_endpoint_bound")?;
                let samples = tau_kappa_ratio_monitor(&run.states, Some(bar)).map_err(CliError::from_run)?;
                let bad = samples.iter().filter(|s| !s.endpoint_bound_holds).count();
                checks.push(CheckOutcome::le("tau_kappa_endpoint_bound violations", bad as f64, 0.0));
            }
            Analysis::EntropyBelow { bound } => {
                let e = entropy.as_ref().ok_or_else(|| CliError::Schema("entropy_below needs an entropy scan".into()))?;
                checks.push(CheckOutcome {
                    check: "entropy_sup".into(),
                    value: e.entropy_sup,
                    bound: format!("< {bound}"),
                    passed: e.entropy_sup < *bound,
                });
            }
        }
    }

    let phi_main = phi_main(&run, b)?;
    let last = run.last();
    let report = Report {
        name: scenario.name.clone(),
        termination: run.termination,
        steps: run.history.len() - 1,
        final_time: last.time,
        final_length: last.length,
        max_displacement,
        singularity: run.singularity.clone(),
        residuals,
        endpoint_relations: endpoint,
        entropy,
        passed: checks.iter().all(|c| c.passed),
        checks,
    };
    Ok(Outcome { ambient_dim: last.curve.dim(), run, phi_main, report })
}

fn field(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

impl Outcome {
    pub fn timeseries_csv(&self) -> String {
        let t_est = self.report.singularity.t_est;
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for (s, phi) in self.run.states.iter().zip(&self.phi_main) {
            let rescaled = t_est.filter(|t| *t > s.time).map(|t| s.max_kappa() * (t - s.time).sqrt());
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{},{:e},{:e},{}",
                s.time,
                s.dt_last,
                s.length,
                s.max_kappa(),
                field(rescaled),
                s.boundary_dist,
                s.boundary_angle,
                field(*phi)
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let states_dir = dir.join("states");
        fs::create_dir_all(&states_dir)?;
        fs::write(dir.join("timeseries.csv"), self.timeseries_csv())?;
        for (i, s) in self.run.states.iter().enumerate() {
            let nodes: Vec<&[f64]> = s.curve.nodes().collect();
            let doc = serde_json::json!({ "ambient_dim": self.ambient_dim, "t": s.time, "nodes": nodes });
            fs::write(states_dir.join(format!("{i:04}.json")), doc.to_string())?;
        }
        let json = serde_json::to_string_pretty(&self.report).map_err(|e| CliError::Numerical(e.to_string()))?;
        fs::write(dir.join("report.json"), json + "\n")?;
        Ok(())
    }
}
