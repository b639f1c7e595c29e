//! Explicit time stepping of `d/dt gamma = kappa N`.
//!
//! Open arcs with a barrier keep their endpoints on the barrier and meet it
//! orthogonally: each endpoint's curvature vector is computed with a ghost
//! node, the mirror image of its interior neighbour across the barrier's
//! tangent hyperplane at the endpoint (corrected for the barrier's shape
//! operator), and the updated endpoint is projected back onto the barrier. Open arcs without a barrier have pinned endpoints.
//! Every step ends with a uniform arclength resample on the cubic
//! interpolant of the nodes.

use serde::{Deserialize, Serialize};

use crate::barrier::Barrier;
use crate::error::{Error, Result};
use crate::geometry::{resample_arclength_cubic, DiscreteCurve};
use crate::stencil;
use crate::vecmath::{axpy, dot, norm, normalized, reject, scale, sub};

/// Curvature-scaled time window constant: `dt <= c / M_t` with `c = 1/4`.
pub const CURVATURE_WINDOW: f64 = 0.25;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowState {
    pub curve: DiscreteCurve,
    pub time: f64,
    pub dt_last: f64,
    /// `M_t = sup kappa^2`.
    pub max_kappa_sq: f64,
    /// Largest endpoint distance to the barrier.
    pub boundary_dist: f64,
    /// Largest endpoint angle (radians) between the tangent and the barrier normal line.
    pub boundary_angle: f64,
    pub length: f64,
    pub singular: bool,
}

impl FlowState {
    pub fn new(curve: DiscreteCurve, time: f64, barrier: Option<&Barrier>) -> Result<Self> {
        let velocity = curvature_velocity(&curve, barrier);
        let max_kappa_sq = max_sq_norm(&velocity, curve.dim());
        let (boundary_dist, boundary_angle) = boundary_residual(&curve, barrier)?;
        Ok(Self {
            length: curve.length(),
            curve,
            time,
            dt_last: 0.0,
            max_kappa_sq,
            boundary_dist,
            boundary_angle,
            singular: false,
        })
    }

    pub fn max_kappa(&self) -> f64 {
        self.max_kappa_sq.sqrt()
    }
}

fn max_sq_norm(flat: &[f64], dim: usize) -> f64 {
    flat.chunks_exact(dim).map(|v| dot(v, v)).fold(0.0, f64::max)
}

/// Mirror of `neighbour` across the hyperplane through `p` orthogonal to `nu`.
fn ghost_node(p: &[f64], neighbour: &[f64], nu: &[f64]) -> Vec<f64> {
    let mut g = neighbour.to_vec();
    axpy(-2.0 * dot(&sub(neighbour, p), nu), nu, &mut g);
    g
}

fn ghost_curvature_from(g: &[f64], p: &[f64], neighbour: &[f64], h: f64) -> Vec<f64> {
    let d2: Vec<f64> = (0..p.len()).map(|k| (g[k] - 2.0 * p[k] + neighbour[k]) / (h * h)).collect();
    match normalized(&sub(neighbour, g)) {
        Some(t) => reject(&d2, &[&t]),
        None => d2,
    }
}

/// Endpoint curvature vector from the ghost stencil. On a curved barrier the
/// plain mirror image differs from the smooth continuation of the curve by
/// `(h^3/3)(kappa_s N + kappa tau_1 B)`, which orthogonal contact turns into
/// `-(h^3/3) S(kappa_vec)`; subtracting it keeps the stencil second order.
fn ghost_curvature(p: &[f64], neighbour: &[f64], barrier: &Barrier, h: f64) -> Vec<f64> {
    let nu = barrier.normal(p);
    let mirror = ghost_node(p, neighbour, &nu);
    let kv = ghost_curvature_from(&mirror, p, neighbour, h);
    if barrier.is_flat() {
        return kv;
    }
    match barrier.shape_operator(p, &reject(&kv, &[&nu])) {
        Ok(sk) => {
            let mut g = mirror;
            axpy(-h * h * h / 3.0, &sk, &mut g);
            ghost_curvature_from(&g, p, neighbour, h)
        }
        Err(_) => kv,
    }
}

/// Flow velocity (the discrete curvature vector) at every node, row-major.
pub fn curvature_velocity(curve: &DiscreteCurve, barrier: Option<&Barrier>) -> Vec<f64> {
    let m = curve.len();
    let dim = curve.dim();
    let h = curve.spacing();
    let closed = curve.is_closed();
    let x = curve.coords();
    let inv_h2 = 1.0 / (h * h);
    let mut v = vec![0.0; m * dim];
    let mut t = vec![0.0; dim];
    let interior = if closed { 0..m } else { 1..m - 1 };
    for i in interior {
        let ip = if i + 1 == m { 0 } else { i + 1 };
        let im = if i == 0 { m - 1 } else { i - 1 };
        let out = &mut v[i * dim..(i + 1) * dim];
        for k in 0..dim {
            let (a, c, b) = (x[im * dim + k], x[i * dim + k], x[ip * dim + k]);
            t[k] = b - a;
            out[k] = (b - 2.0 * c + a) * inv_h2;
        }
        let tt = dot(&t, &t);
        if tt > 0.0 {
            let proj = dot(out, &t) / tt;
            for k in 0..dim {
                out[k] -= proj * t[k];
            }
        }
    }
    if !closed {
        if let Some(b) = barrier {
            for (end, nb) in [(0, 1), (m - 1, m - 2)] {
                let p = curve.node(end);
                let kv = ghost_curvature(p, curve.node(nb), b, h);
                v[end * dim..(end + 1) * dim].copy_from_slice(&kv);
            }
        }
    }
    v
}

/// Endpoint distance to the barrier and angle between the endpoint tangent
/// (one-sided, second order) and the barrier normal line.
pub fn boundary_residual(curve: &DiscreteCurve, barrier: Option<&Barrier>) -> Result<(f64, f64)> {
    let Some(b) = barrier else { return Ok((0.0, 0.0)) };
    if curve.is_closed() || curve.len() < 3 {
        return Ok((0.0, 0.0));
    }
    let m = curve.len();
    let h = curve.spacing();
    let get = |k: usize| Some(curve.node(k));
    let mut worst = (0.0f64, 0.0f64);
    for end in [0, m - 1] {
        let p = curve.node(end);
        let d = b.signed_distance(p)?.abs();
        let t = stencil::d1(get, end, m, h, false).unwrap();
        let nu = b.normal(p);
        let along = dot(&t, &nu).abs();
        let across = norm(&reject(&t, &[&nu]));
        worst.0 = worst.0.max(d);
        worst.1 = worst.1.max(across.atan2(along));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub cfl: f64,
    /// Cap on `M_t = sup kappa^2`; exceeding it flags the state singular.
    pub kappa_cap: f64,
    /// Nominal node count kept by resampling.
    pub node_count: usize,
    /// Node-count reduction threshold; `0` disables it.
    pub h_min: f64,
    /// Upper bound on the step (used to land on `t_end`).
    pub dt_max: f64,
}

impl StepParams {
    pub fn new(cfl: f64, kappa_cap: f64, node_count: usize) -> Self {
        Self { cfl, kappa_cap, node_count, h_min: 0.0, dt_max: f64::INFINITY }
    }
}

/// Time step `cfl * min(h^2 / 2, 1 / (4 M_t))`.
pub fn stable_dt(spacing: f64, max_kappa_sq: f64, cfl: f64) -> f64 {
    let diffusive = 0.5 * spacing * spacing;
    let curvature = if max_kappa_sq > 0.0 { CURVATURE_WINDOW / max_kappa_sq } else { f64::INFINITY };
    cfl * diffusive.min(curvature)
}

/// Explicit Euler update `x += dt * kappa_vec` followed by endpoint
/// re-projection, without the final resample.
pub fn euler_update(curve: &DiscreteCurve, barrier: Option<&Barrier>, dt: f64) -> Result<DiscreteCurve> {
    let v = curvature_velocity(curve, barrier);
    let mut coords = curve.coords().to_vec();
    axpy(dt, &v, &mut coords);
    let mut next = DiscreteCurve::new(curve.dim(), coords, curve.is_closed())
        .map_err(|_| Error::BlowupOverflow(f64::NAN))?;
    if let (Some(b), false) = (barrier, curve.is_closed()) {
        let m = next.len();
        for end in [0, m - 1] {
            let z = b.project(next.node(end))?;
            next.node_mut(end).copy_from_slice(&z);
        }
    }
    Ok(next)
}

fn next_node_count(curve: &DiscreteCurve, params: &StepParams) -> usize {
    if params.h_min > 0.0 && curve.spacing() < 0.5 * params.h_min {
        let proportional = (curve.length() / params.h_min).round() as usize + 1;
        proportional.clamp(16, params.node_count.max(16))
    } else {
        curve.len()
    }
}

/// Advances the flow by one explicit step. A state whose `M_t` exceeds the
/// cap is returned unchanged with `singular = true`.
pub fn step(state: &FlowState, barrier: Option<&Barrier>, params: &StepParams) -> Result<FlowState> {
    let curve = &state.curve;
    let v = curvature_velocity(curve, barrier);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::BlowupOverflow(state.time));
    }
    let m_t = max_sq_norm(&v, curve.dim());
    if m_t > params.kappa_cap {
        let mut flagged = state.clone();
        flagged.max_kappa_sq = m_t;
        flagged.singular = true;
        return Ok(flagged);
    }
    let dt = stable_dt(curve.spacing(), m_t, params.cfl).min(params.dt_max);
    let moved = euler_update(curve, barrier, dt)?;
    let target = next_node_count(&moved, params);
    let resampled = resample_arclength_cubic(&moved, target)?;
    let mut next = FlowState::new(resampled, state.time + dt, barrier)?;
    if !next.max_kappa_sq.is_finite() || !next.length.is_finite() {
        return Err(Error::BlowupOverflow(next.time));
    }
    next.dt_last = dt;
    Ok(next)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowConfig {
    pub node_count: usize,
    pub cfl: f64,
    pub t_end: f64,
    /// Cap on `M_t = sup kappa^2`.
    pub kappa_cap: f64,
    pub len_min: f64,
    pub output_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub h_min: f64,
    #[serde(default)]
    pub max_steps: Option<usize>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            node_count: 128,
            cfl: 0.5,
            t_end: 1.0,
            kappa_cap: 1e4,
            len_min: 1e-6,
            output_every: 100,
            seed: 0,
            h_min: 0.0,
            max_steps: None,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.node_count < 5 {
            return bad("node_count must be >= 5");
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad("cfl must lie in (0, 1]");
        }
        if !(self.t_end > 0.0) || !(self.kappa_cap > 0.0) || !(self.len_min >= 0.0) {
            return bad("t_end and kappa_cap must be positive, len_min nonnegative");
        }
        if self.output_every == 0 {
            return bad("output_every must be >= 1");
        }
        Ok(())
    }

    pub fn step_params(&self) -> StepParams {
        StepParams { cfl: self.cfl, kappa_cap: self.kappa_cap, node_count: self.node_count, h_min: self.h_min, dt_max: f64::INFINITY }
    }
}

/// Per-step diagnostics, recorded for every accepted step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepSample {
    pub t: f64,
    pub dt: f64,
    pub length: f64,
    pub max_kappa_sq: f64,
    pub boundary_dist: f64,
    pub boundary_angle: f64,
}

impl From<&FlowState> for StepSample {
    fn from(s: &FlowState) -> Self {
        Self {
            t: s.time,
            dt: s.dt_last,
            length: s.length,
            max_kappa_sq: s.max_kappa_sq,
            boundary_dist: s.boundary_dist,
            boundary_angle: s.boundary_angle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EndTime,
    LengthBelowMin,
    CurvatureCap,
    MaxSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingularityType {
    TypeI,
    TypeII,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularityRecord {
    /// Estimated singular time (absent when `1/M_t` shows no decay).
    pub t_est: Option<f64>,
    pub type_flag: SingularityType,
    /// `(t, sup|kappa| sqrt(T_est - t))` samples, time ordered.
    pub ratio_history: Vec<(f64, f64)>,
    pub blowup_point: Option<Vec<f64>>,
}

impl SingularityRecord {
    pub fn none() -> Self {
        Self { t_est: None, type_flag: SingularityType::None, ratio_history: Vec::new(), blowup_point: None }
    }
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub states: Vec<FlowState>,
    pub history: Vec<StepSample>,
    pub termination: Termination,
    pub singularity: SingularityRecord,
}

impl FlowRun {
    pub fn last(&self) -> &FlowState {
        self.states.last().expect("a run always records its initial state")
    }
}

/// Resamples the initial curve and pulls open endpoints onto the barrier.
pub fn prepare_initial(initial: &DiscreteCurve, barrier: Option<&Barrier>, node_count: usize) -> Result<DiscreteCurve> {
    let mut curve = resample_arclength_cubic(initial, node_count)?;
    if let (Some(b), false) = (barrier, curve.is_closed()) {
        let h = curve.spacing();
        let m = curve.len();
        for end in [0, m - 1] {
            let off = b.signed_distance(curve.node(end))?.abs();
            if off > h {
                return Err(Error::InvalidConfig(format!(
                    "initial endpoint {end} is {off:.3e} from the barrier (more than h = {h:.3e})"
                )));
            }
            let z = b.project(curve.node(end))?;
            curve.node_mut(end).copy_from_slice(&z);
        }
        curve = DiscreteCurve::new(curve.dim(), curve.coords().to_vec(), false)?;
    }
    Ok(curve)
}

/// Runs the flow until `t_end`, `length < len_min` or `M_t > kappa_cap`,
/// keeping every `output_every`-th state (plus the first and last).
pub fn run(initial: &DiscreteCurve, barrier: Option<&Barrier>, config: &FlowConfig) -> Result<FlowRun> {
    config.validate()?;
    let curve = prepare_initial(initial, barrier, config.node_count)?;
    let mut state = FlowState::new(curve, 0.0, barrier)?;
    let mut states = vec![state.clone()];
    let mut history = vec![StepSample::from(&state)];
    let mut params = config.step_params();
    let mut steps = 0usize;
    let termination = loop {
        if state.time >= config.t_end * (1.0 - 1e-14) {
            break Termination::EndTime;
        }
        if state.length < config.len_min {
            break Termination::LengthBelowMin;
        }
        if config.max_steps.is_some_and(|n| steps >= n) {
            break Termination::MaxSteps;
        }
        params.dt_max = config.t_end - state.time;
        let next = step(&state, barrier, &params)?;
        if next.singular {
            state = next;
            break Termination::CurvatureCap;
        }
        state = next;
        steps += 1;
        history.push(StepSample::from(&state));
        if steps % config.output_every == 0 {
            states.push(state.clone());
        }
    };
    if states.last().map(|s| s.time) != Some(state.time) || state.singular {
        if let Some(last) = states.last() {
            if last.time == state.time {
                states.pop();
            }
        }
        states.push(state.clone());
    }
    let singularity = estimate_singularity(&history, &state.curve, barrier);
    Ok(FlowRun { states, history, termination, singularity })
}

/// Least-squares fit of `1/M_t = a + b t` over the final samples, those with
/// `1/M_t` in the last quarter of its observed range and within a decade of
/// the final value; returns `-a/b` when the fit decays.
pub fn fit_singular_time(history: &[StepSample]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .filter(|s| s.max_kappa_sq > 0.0 && s.max_kappa_sq.is_finite())
        .map(|s| (s.t, 1.0 / s.max_kappa_sq))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let y_last = pts.last().unwrap().1;
    let y_max = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let cut = (y_last + 0.25 * (y_max - y_last)).min(10.0 * y_last);
    let mut window: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.1 <= cut).collect();
    if window.len() < 10 {
        window = pts[pts.len().saturating_sub(10)..].to_vec();
    }
    let n = window.len() as f64;
    let (st, sy) = window.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mt, my) = (st / n, sy / n);
    let (sxy, sxx) = window
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mt) * (p.1 - my), b + (p.0 - mt).powi(2)));
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return None;
    }
    let t_est = mt - my / slope;
    let t_last = history.last().unwrap().t;
    (t_est > t_last).then_some(t_est)
}

fn blowup_point(curve: &DiscreteCurve, barrier: Option<&Barrier>) -> Vec<f64> {
    let c = curve.barycenter();
    if let (Some(b), false) = (barrier, curve.is_closed()) {
        // An open arc shrinking onto the barrier collapses to a boundary point.
        if let (Ok(d), Ok(z)) = (b.signed_distance(&c), b.project(&c)) {
            if d.abs() <= curve.length() {
                return z;
            }
        }
    }
    c
}

/// Builds the singularity record from the step history and final curve.
pub fn estimate_singularity(history: &[StepSample], final_curve: &DiscreteCurve, barrier: Option<&Barrier>) -> SingularityRecord {
    let Some(t_est) = fit_singular_time(history) else {
        return SingularityRecord::none();
    };
    let y_last = 1.0 / history.last().unwrap().max_kappa_sq;
    let y_max = history
        .iter()
        .filter(|s| s.max_kappa_sq > 0.0)
        .map(|s| 1.0 / s.max_kappa_sq)
        .fold(f64::MIN, f64::max);
    let cut = y_last + 0.25 * (y_max - y_last);
    let mut window: Vec<(f64, f64)> = history
        .iter()
        .filter(|s| s.max_kappa_sq > 0.0 && 1.0 / s.max_kappa_sq <= cut && s.t < t_est)
        .map(|s| (s.t, s.max_kappa_sq.sqrt() * (t_est - s.t).sqrt()))
        .collect();
    // thin to at most ~200 samples, log-spaced in T - t
    if window.len() > 200 {
        let tau_hi = (t_est - window[0].0).ln();
        let tau_lo = (t_est - window.last().unwrap().0).ln();
        let mut thinned = Vec::with_capacity(201);
        let mut next_mark = tau_hi;
        let stride = (tau_hi - tau_lo) / 200.0;
        for &(t, r) in &window {
            let tau = (t_est - t).ln();
            if tau <= next_mark {
                thinned.push((t, r));
                next_mark = tau - stride;
            }
        }
        if thinned.last() != window.last() {
            thinned.push(*window.last().unwrap());
        }
        window = thinned;
    }
    let mut record = SingularityRecord {
        t_est: Some(t_est),
        type_flag: SingularityType::None,
        ratio_history: window,
        blowup_point: Some(blowup_point(final_curve, barrier)),
    };
    record.type_flag = classify_singularity(&record).unwrap_or(SingularityType::None);
    record
}

/// Type I when `sup|kappa| sqrt(T - t)` stays within 20% of its median over
/// the last decade of `T - t`; Type II when it grows monotonically by more
/// than 50% there.
pub fn classify_singularity(record: &SingularityRecord) -> Result<SingularityType> {
    let Some(t_est) = record.t_est else { return Ok(SingularityType::None) };
    let samples: Vec<(f64, f64)> = record
        .ratio_history
        .iter()
        .filter(|(t, r)| *t < t_est && r.is_finite())
        .map(|&(t, r)| (t_est - t, r))
        .collect();
    if samples.len() < 10 {
        return Err(Error::InsufficientSamples(format!("{} ratio samples, need 10", samples.len())));
    }
    let tau_max = samples.iter().map(|s| s.0).fold(f64::MIN, f64::max);
    let tau_min = samples.iter().map(|s| s.0).fold(f64::MAX, f64::min);
    if tau_max < 8.0 * tau_min {
        return Err(Error::InsufficientSamples(format!(
            "T - t spans a factor {:.2}, need 8",
            tau_max / tau_min
        )));
    }
    let decade: Vec<f64> = samples.iter().filter(|s| s.0 <= 10.0 * tau_min).map(|s| s.1).collect();
    let window: Vec<f64> = if decade.len() >= 10 { decade } else { samples.iter().map(|s| s.1).collect() };
    let mut sorted = window.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if window.iter().all(|r| (0.8 * median..=1.2 * median).contains(r)) {
        return Ok(SingularityType::TypeI);
    }
    let increasing = window.windows(2).all(|w| w[1] >= w[0]);
    if increasing && window.last().unwrap() > &(1.5 * window[0]) {
        return Ok(SingularityType::TypeII);
    }
    Ok(SingularityType::None)
}

/// Parabolic rescaling `(gamma_t - z) / sqrt(2 (T - t))`.
pub fn rescale_type_one(state: &FlowState, z: &[f64], t_est: f64) -> Result<DiscreteCurve> {
    if state.time >= t_est {
        return Err(Error::NotBeforeSingularTime { t: state.time, t_sing: t_est });
    }
    let factor = 1.0 / (2.0 * (t_est - state.time)).sqrt();
    state.curve.map_nodes(|p| scale(&sub(p, z), factor))
}
