//! Built-in acceptance matrix. Each criterion runs its own flows and reports
//! pass/fail with the measured values next to their bounds.

use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    convergence_order, dilation_invariant_monitor, endpoint_relations, residual_commutator, residual_evolution_kappa,
    residual_evolution_kappa_sq, residual_evolution_tau1, shrinker_residual, tau_kappa_ratio_monitor,
    translator_residual, ResidualOptions, ResidualReport,
};
use crate::barrier::Barrier;
use crate::error::{Error, Result};
use crate::flow::{rescale_type_one, run, FlowConfig, FlowRun, FlowState, Termination};
use crate::kernels::{dilate_about, entropy_scan, gaussian_functional_phi, CenterSpec, KernelParams, ScanSpec, TimeSpec};
use crate::models::{
    exact_state, hausdorff_distance, max_node_displacement, model_entropy, perturb, EntropyModel, ModelCurve,
};
use crate::vecmath::{dist, scale};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// Flips the sign of the `tau_1^2 kappa` term in the reference residual.
    pub flip_torsion_term: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<28} {:>6.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    check: fn(&SuiteOptions) -> Result<Checks>,
}

impl Criterion {
    pub fn run(&self, opts: &SuiteOptions) -> CriterionOutcome {
        let start = Instant::now();
        let (passed, detail) = match (self.check)(opts) {
            Ok(c) => c.finish(),
            Err(e) => (false, format!("error: {e}")),
        };
        CriterionOutcome { id: self.id, name: self.name.into(), passed, detail, seconds: start.elapsed().as_secs_f64() }
    }
}

pub const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, name: "stationary_chord", check: stationary_chord },
    Criterion { id: 2, name: "semicircle_collapse", check: semicircle_collapse },
    Criterion { id: 3, name: "semicircle_type_one_rescale", check: type_one_rescale },
    Criterion { id: 4, name: "evolution_residuals", check: evolution_residuals },
    Criterion { id: 5, name: "endpoint_relations", check: endpoint_relation_check },
    Criterion { id: 6, name: "semicircle_monotonicity", check: monotonicity },
    Criterion { id: 7, name: "scale_invariance", check: scale_invariance },
    Criterion { id: 8, name: "model_entropy", check: model_entropy_ordering },
    Criterion { id: 9, name: "soliton_residuals", check: soliton_residuals },
    Criterion { id: 10, name: "semicircle_dilation_monitor", check: dilation_monitor },
    Criterion { id: 11, name: "tau_kappa_diagnostic", check: tau_kappa_diagnostic },
    Criterion { id: 12, name: "mutation_sensitivity", check: mutation_sensitivity },
];

/// Runs every criterion whose name contains `filter`, in order.
pub fn run_suite(filter: Option<&str>, opts: &SuiteOptions) -> Vec<CriterionOutcome> {
    CRITERIA.iter().filter(|c| filter.map_or(true, |f| c.name.contains(f))).map(|c| c.run(opts)).collect()
}

#[derive(Default)]
struct Checks {
    items: Vec<(String, bool)>,
}

impl Checks {
    fn push(&mut self, text: String, ok: bool) {
        self.items.push((text, ok));
    }

    fn le(&mut self, label: &str, value: f64, bound: f64) {
        self.push(format!("{label}={value:.3e}<={bound:.3e}"), value <= bound);
    }

    fn ge(&mut self, label: &str, value: f64, bound: f64) {
        self.push(format!("{label}={value:.3e}>={bound:.3e}"), value >= bound);
    }

    fn within(&mut self, label: &str, value: f64, lo: f64, hi: f64) {
        self.push(format!("{label}={value:.5} in [{lo:.4}, {hi:.4}]"), (lo..=hi).contains(&value));
    }

    fn flag(&mut self, label: &str, ok: bool) {
        self.push(label.into(), ok);
    }

    fn passed(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|i| i.1)
    }

    fn finish(self) -> (bool, String) {
        let passed = self.passed();
        let detail = self
            .items
            .iter()
            .map(|(t, ok)| if *ok { t.clone() } else { format!("FAIL {t}") })
            .collect::<Vec<_>>()
            .join("; ");
        (passed, detail)
    }
}

fn flat_y() -> Result<Barrier> {
    // Omega = {y >= 0}
    Barrier::flat(&[0.0, -1.0], 0.0)
}

fn unit_semicircle() -> ModelCurve {
    ModelCurve::Semicircle { center: vec![0.0, 0.0], radius: 1.0, basis: None }
}

fn flow(initial: &crate::geometry::DiscreteCurve, barrier: Option<&Barrier>, config: FlowConfig) -> Result<FlowRun> {
    run(initial, barrier, &config)
}

fn short_flow(model: &ModelCurve, m: usize, steps: usize) -> Result<Vec<FlowState>> {
    let barrier = model.barrier()?;
    let cfg = FlowConfig { node_count: m, t_end: 10.0, kappa_cap: 1e8, output_every: 1, max_steps: Some(steps), ..Default::default() };
    Ok(flow(&model.sample(m)?, barrier.as_ref(), cfg)?.states)
}

const SEMICIRCLE_NODES: usize = 256;

/// The flat-barrier unit semicircle flowed to its singular time, shared by
/// the criteria that inspect it.
fn semicircle_run() -> Result<&'static FlowRun> {
    static RUN: OnceLock<Result<FlowRun>> = OnceLock::new();
    RUN.get_or_init(|| {
        let b = flat_y()?;
        let cfg = FlowConfig { node_count: SEMICIRCLE_NODES, cfl: 0.5, t_end: 1.0, output_every: 100, ..Default::default() };
        flow(&unit_semicircle().sample(SEMICIRCLE_NODES)?, Some(&b), cfg)
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn singular_point(run: &FlowRun) -> Result<(f64, Vec<f64>)> {
    let t = run.singularity.t_est.ok_or_else(|| Error::InsufficientSamples("no singular time estimate".into()))?;
    let z = run.singularity.blowup_point.clone().ok_or_else(|| Error::InsufficientSamples("no blowup point".into()))?;
    Ok((t, z))
}

fn stationary_chord(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    let barrier = Barrier::sphere(&[0.0, 0.0], 2.0)?;
    let initial = ModelCurve::Chord { p: vec![-2.0, 0.0], q: vec![2.0, 0.0] }.sample(128)?;
    let start = Instant::now();
    let r = flow(&initial, Some(&barrier), FlowConfig { node_count: 128, t_end: 1.0, output_every: 1, ..Default::default() })?;
    let seconds = start.elapsed().as_secs_f64();
    let mut disp = 0.0f64;
    for s in &r.states {
        disp = disp.max(max_node_displacement(&initial, &s.curve)?);
    }
    c.le("max_displacement", disp, 1e-8);
    c.le("runtime_s", seconds, 5.0);
    c.flag("reached t_end=1", r.termination == Termination::EndTime && r.last().time >= 1.0 - 1e-12);
    Ok(c)
}

fn semicircle_collapse(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    let r = semicircle_run()?;
    let mut worst = 0.0f64;
    let mut count = 0;
    for s in r.states.iter().filter(|s| s.time <= 0.48) {
        let n = s.curve.len() as f64;
        let radius = s.curve.nodes().map(|p| dist(p, &[0.0, 0.0])).sum::<f64>() / n;
        worst = worst.max((radius / (1.0 - 2.0 * s.time).sqrt() - 1.0).abs());
        count += 1;
    }
    c.le("radius_rel_err(t<=0.48)", worst, 5e-3);
    c.flag(&format!("states_checked={count}"), count >= 10);
    match r.singularity.t_est {
        Some(t) => c.within("T_est", t, 0.49, 0.51),
        None => c.flag("T_est missing", false),
    }
    Ok(c)
}

fn type_one_rescale(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    let r = semicircle_run()?;
    let (t_est, z) = singular_point(r)?;
    let reference = unit_semicircle().sample(1025)?;
    let window: Vec<&FlowState> = r.states.iter().filter(|s| (1e-3..=1e-2).contains(&(t_est - s.time))).collect();
    let stride = (window.len() / 40).max(1);
    let (mut haus, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    let mut count = 0;
    for s in window.into_iter().step_by(stride) {
        let rescaled = rescale_type_one(s, &z, t_est)?;
        haus = haus.max(hausdorff_distance(&rescaled, &reference)?);
        let ratio = s.max_kappa() * (t_est - s.time).sqrt();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        count += 1;
    }
    c.flag(&format!("states_checked={count}"), count > 0);
    c.le("hausdorff_to_unit_semicircle", haus, 0.01);
    c.within("min kappa*sqrt(T-t)", lo, 0.65, 0.78);
    c.within("max kappa*sqrt(T-t)", hi, 0.65, 0.78);
    Ok(c)
}

fn grid_scale(r: &ResidualReport) -> f64 {
    r.h * r.h + r.dt
}

fn circle_residual_checks(c: &mut Checks, opts: &SuiteOptions) -> Result<()> {
    let circle = ModelCurve::Circle { center: vec![0.0, 0.0], radius: 1.0, basis: None };
    let o = ResidualOptions { flip_torsion_term: opts.flip_torsion_term, ..Default::default() };
    let coarse = short_flow(&circle, 256, 10)?;
    let fine = short_flow(&circle, 512, 10)?;
    type Identity = fn(&[FlowState], &ResidualOptions) -> Result<ResidualReport>;
    let identities: [(&str, Identity); 3] = [
        ("residual_evolution_kappa(circle)", residual_evolution_kappa),
        ("residual_evolution_kappa_sq(circle)", residual_evolution_kappa_sq),
        ("residual_commutator(circle)", residual_commutator),
    ];
    for (name, f) in identities {
        let a = f(&coarse, &o)?;
        let b = f(&fine, &o)?;
        c.le(name, a.max_residual, 5.0 * grid_scale(&a));
        c.ge(&format!("{name} reduction"), a.max_residual / b.max_residual, 2.5);
    }
    Ok(())
}

/// Helix part of the evolution-equation criterion.
fn helix_checks(opts: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    let helix = ModelCurve::Helix { radius: 1.0, pitch: 1.0, turns: 1.0 };
    let mut reports = Vec::new();
    for m in [128, 256] {
        let states = short_flow(&helix, m, 10)?;
        let o = ResidualOptions { margin: m / 8, flip_torsion_term: opts.flip_torsion_term };
        reports.push((residual_evolution_kappa(&states, &o)?, residual_evolution_tau1(&states, &o)?));
    }
    for (k, _) in &reports {
        c.le(&format!("residual_evolution_kappa(helix,h={:.4})", k.h), k.max_residual, 10.0 * grid_scale(k));
    }
    let (coarse, fine) = (&reports[0].1, &reports[1].1);
    c.le("residual_evolution_tau1(helix)", fine.max_residual, 20.0 * (fine.h + fine.dt));
    let order = convergence_order(coarse.max_residual, fine.max_residual, coarse.h / fine.h);
    c.ge("residual_evolution_tau1(helix) order", order, 0.9);
    Ok(c)
}

fn evolution_residuals(opts: &SuiteOptions) -> Result<Checks> {
    let mut c = helix_checks(opts)?;
    circle_residual_checks(&mut c, opts)?;
    Ok(c)
}

fn sphere_arc(dim: usize) -> ModelCurve {
    ModelCurve::OrthogonalArc { ball_center: vec![0.0; dim], ball_radius: 2.0, arc_radius: 1.0, basis: None }
}

/// Orthogonal arc in the ball of radius 2 in `R^3`, bent out of its plane.
fn perturbed_sphere_arc(m: usize) -> Result<(crate::geometry::DiscreteCurve, Barrier)> {
    let arc = sphere_arc(3);
    let barrier = arc.barrier()?.ok_or_else(|| Error::InvalidConfig("arc without barrier".into()))?;
    let curve = perturb(&arc.sample(m)?, &[0.0, 0.0, 1.0], 0.1, 3, 7)?;
    Ok((curve, barrier))
}

fn endpoint_relation_check(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    let mut constants = Vec::new();
    let mut all_hold = true;
    let mut torsion_bound_slack = f64::INFINITY;
    for m in [64usize, 128, 256] {
        let (curve, barrier) = perturbed_sphere_arc(m)?;
        let every = 100 * (m / 64).pow(2);
        let r = flow(&curve, Some(&barrier), FlowConfig { node_count: m, t_end: 0.3, output_every: every, ..Default::default() })?;
        let mut worst = 0.0f64;
        for s in &r.states {
            let e = endpoint_relations(s, &barrier)?;
            all_hold &= e.inequalities_hold();
            // the relations are produced by the flow; the initial arc does not satisfy them
            if s.time > 0.0 {
                worst = worst.max(e.report.max_residual / e.report.h);
            }
            for end in &e.ends {
                torsion_bound_slack = torsion_bound_slack.min(e.curvature_bound + 10.0 * e.report.h - end.tau1.abs());
            }
        }
        constants.push((m, worst));
    }
    for w in constants.windows(2) {
        let ((m0, c0), (m1, c1)) = (w[0], w[1]);
        c.le(&format!("C(M={m1})/C(M={m0})"), c1 / c0, 2.0);
    }
    let summary: Vec<String> = constants.iter().map(|(m, k)| format!("M={m}:{k:.3e}")).collect();
    c.flag(&format!("C=max residual/h for t>0 [{}]", summary.join(", ")), constants.iter().all(|x| x.1.is_finite()));
    c.flag("endpoint inequalities hold at every output", all_hold);
    c.ge("min slack of |tau1|<=K+10h", torsion_bound_slack, 0.0);
    Ok(c)
}

fn monotonicity(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    let r = semicircle_run()?;
    let b = flat_y()?;
    let (t_est, z) = singular_point(r)?;
    let params = KernelParams::untruncated(z.clone(), t_est);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut count = 0;
    for s in r.states.iter().filter(|s| t_est - s.time >= 1e-4) {
        let phi = gaussian_functional_phi(&s.curve, s.time, &params, Some(&b))?;
        lo = lo.min(phi);
        hi = hi.max(phi);
        count += 1;
    }
    let target = (2.0 * std::f64::consts::PI / std::f64::consts::E).sqrt();
    c.flag(&format!("centered samples={count}"), count >= 10);
    c.le("max |Phi_centered - sqrt(2pi/e)|", (lo - target).abs().max((hi - target).abs()), 1e-2);
    let spec = ScanSpec {
        centers: CenterSpec::Points(vec![vec![0.3, 0.0], vec![0.0, 0.4], vec![0.5, 0.5], vec![-0.8, 0.2]]),
        times: TimeSpec::Times(vec![0.4, t_est, 0.7]),
        radii: vec![None],
        ..Default::default()
    };
    let scan = entropy_scan(&r.states, Some(&b), &spec)?;
    c.le("off-center Phi increase per output step", scan.monotonicity_violation, 1e-4);
    Ok(c)
}

fn scale_invariance(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    let b = flat_y()?;
    let curve = perturb(&unit_semicircle().sample(200)?, &[0.3, 1.0], 0.2, 4, 11)?;
    let origin = [0.0, 0.0];
    let (t, t0) = (0.1, 0.35);
    let mut worst = 0.0f64;
    for center in [vec![0.0, 0.0], vec![0.4, 0.0], vec![0.2, 0.7]] {
        for radius in [None, Some(0.8)] {
            let base = KernelParams { center: center.clone(), t0, radius, alpha: crate::kernels::DEFAULT_ALPHA };
            let phi = gaussian_functional_phi(&curve, t, &base, Some(&b))?;
            for lambda in [0.5, 2.0, 3.7] {
                let scaled = dilate_about(&curve, &origin, lambda)?;
                let params = KernelParams {
                    center: scale(&center, lambda),
                    t0: lambda * lambda * t0,
                    radius: radius.map(|r| lambda * r),
                    alpha: base.alpha,
                };
                let phi_l = gaussian_functional_phi(&scaled, lambda * lambda * t, &params, Some(&b))?;
                worst = worst.max((phi_l - phi).abs());
            }
        }
    }
    c.le("max |Phi(scaled) - Phi|", worst, 1e-10);
    Ok(c)
}

fn model_entropy_ordering(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    c.within("line", model_entropy(EntropyModel::Line, 12.0)?, 1.0 - 1e-3, 1.0 + 1e-3);
    c.within("circle", model_entropy(EntropyModel::Circle, 12.0)?, 1.5203 - 5e-3, 1.5203 + 5e-3);
    let windows = [5.0, 8.0, 12.0];
    let values: Vec<f64> = windows.iter().map(|&w| model_entropy(EntropyModel::GrimReaper, w)).collect::<Result<_>>()?;
    c.within("grim_reaper(W=12)", values[2], 1.90, 2.00);
    let listed: Vec<String> = windows.iter().zip(&values).map(|(w, v)| format!("W={w}:{v:.4}")).collect();
    c.flag(&format!("grim_reaper monotone in W [{}]", listed.join(", ")), values.windows(2).all(|w| w[1] >= w[0]));
    Ok(c)
}

fn soliton_residuals(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    let grim = ModelCurve::GrimReaper { offset: vec![0.0, 0.0], window: 1.4, basis: None }.sample(257)?;
    let h = grim.spacing();
    c.le("translator(grim_reaper)", translator_residual(&grim, &[0.0, 1.0])?, 10.0 * h * h);
    let sigma: f64 = 0.5;
    let circle = ModelCurve::Circle { center: vec![0.0, 0.0], radius: (2.0 * sigma).sqrt(), basis: None }.sample(256)?;
    let h = circle.spacing();
    c.le("shrinker(circle)", shrinker_residual(&circle, sigma)?, 10.0 * h * h);
    let semi = unit_semicircle().sample(257)?;
    let h = semi.spacing();
    c.le("shrinker(semicircle)", shrinker_residual(&semi, sigma)?, 10.0 * h * h);
    Ok(c)
}

/// Flows the exact semicircle at `t0` over the monitor window `c / M_{t0}`.
fn dilation_window(t0: f64, m: usize) -> Result<Vec<FlowState>> {
    let b = flat_y()?;
    let model = unit_semicircle();
    let start = exact_state(&model, t0, m)?;
    let m0 = FlowState::new(start.clone(), 0.0, Some(&b))?.max_kappa_sq;
    let span = 0.999 * crate::flow::CURVATURE_WINDOW / m0;
    let cfg = FlowConfig { node_count: m, t_end: span, output_every: 10, ..Default::default() };
    let mut states = flow(&start, Some(&b), cfg)?.states;
    for s in &mut states {
        s.time += t0;
    }
    Ok(states)
}

fn dilation_monitor(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    for t0 in [0.0, 0.3, 0.45] {
        let coarse = dilation_window(t0, 128)?;
        let fine = dilation_window(t0, 256)?;
        for m in [1, 2] {
            let a = dilation_invariant_monitor(&coarse, m)?.max_residual;
            let b = dilation_invariant_monitor(&fine, m)?.max_residual;
            c.le(&format!("m={m} t0={t0} ratio(a={a:.4},b={b:.4})"), a.max(b) / a.min(b), 2.0);
        }
    }
    Ok(c)
}

fn tau_kappa_diagnostic(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    let m = 128;
    let (curve, barrier) = perturbed_sphere_arc(m)?;
    let r = flow(&curve, Some(&barrier), FlowConfig { node_count: m, t_end: 1.0, output_every: 100, ..Default::default() })?;
    c.flag(&format!("termination={:?}", r.termination), r.termination == Termination::CurvatureCap);
    let (t_est, _) = singular_point(&r)?;
    let samples = tau_kappa_ratio_monitor(&r.states, Some(&barrier))?;
    c.flag("endpoint |tau1| <= K + 10h at every output", samples.iter().all(|s| s.endpoint_bound_holds));

    let first = &samples[0];
    let grown = samples.iter().find(|s| s.max_kappa >= 10.0 * first.max_kappa);
    match (grown, first.endpoint_bound) {
        (Some(g), Some(b0)) => {
            let b1 = g.endpoint_bound.unwrap_or(f64::INFINITY);
            c.ge(&format!("K/|kappa_end| decrease while max kappa {:.2}->{:.2}", first.max_kappa, g.max_kappa), b0 / b1, 5.0);
        }
        _ => c.flag("max kappa never grew 10x", false),
    }

    // final decade of T_est - t
    let d_last = t_est - samples.last().unwrap().t;
    let decade: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| (t_est - s.t) <= 10.0 * d_last)
        .map(|s| (s.t, s.ratio))
        .collect();
    let mut running_min = f64::INFINITY;
    let mut worst_rise = 0.0f64;
    for &(_, ratio) in &decade {
        if running_min.is_finite() && running_min > 0.0 {
            worst_rise = worst_rise.max(ratio / running_min);
        }
        running_min = running_min.min(ratio);
    }
    c.flag(&format!("final decade samples={}", decade.len()), decade.len() >= 5);
    c.le("max ratio / earlier min over final decade", worst_rise, 1.2);
    Ok(c)
}

fn mutation_sensitivity(_: &SuiteOptions) -> Result<Checks> {
    let mut c = Checks::default();
    let mutated = helix_checks(&SuiteOptions { flip_torsion_term: true })?;
    let failing: Vec<String> = mutated.items.iter().filter(|i| !i.1).map(|i| i.0.clone()).collect();
    c.flag(&format!("flipped tau1^2 kappa term fails the helix check [{}]", failing.join(", ")), !mutated.passed());
    Ok(c)
}
