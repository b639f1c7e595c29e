//! Residual checks of the curvature, torsion and frame evolution identities
//! on discrete flows, endpoint relations and scale-invariant monitors.
//!
//! Time derivatives are taken at fixed material point. Nodes of resampled
//! states are matched by arclength fraction `u`, and `d/dt|_u` is corrected
//! with the tangential velocity of the `u` parametrization under a purely
//! normal motion, `L du/dt = int_0^s kappa^2 - u int_0^L kappa^2`.

use serde::{Deserialize, Serialize};

use crate::barrier::Barrier;
use crate::error::{Error, Result};
use crate::flow::{FlowState, CURVATURE_WINDOW};
use crate::geometry::{compute_frenet, default_kappa_tol, DiscreteCurve, FrenetData};
use crate::stencil::{d1_field, d2_field, fornberg_weights};
use crate::vecmath::{dot, norm, reject, sub};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub max_residual: f64,
    pub scale: f64,
    pub h: f64,
    pub dt: f64,
    pub order_estimate: Option<f64>,
    pub evaluated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ResidualReport {
    fn new(name: &str, max_residual: f64, scale: f64, h: f64, dt: f64, evaluated: usize) -> Self {
        Self { name: name.into(), max_residual, scale, h, dt, order_estimate: None, evaluated, note: None }
    }

    /// Attaches the observed order from a coarse run with `refinement` times
    /// larger `h`.
    pub fn with_order_from(mut self, coarse: &ResidualReport, refinement: f64) -> Self {
        self.order_estimate = Some(convergence_order(coarse.max_residual, self.max_residual, refinement));
        self
    }
}

pub fn convergence_order(coarse: f64, fine: f64, refinement: f64) -> f64 {
    (coarse / fine).ln() / refinement.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualOptions {
    /// Nodes excluded next to each endpoint of open curves.
    pub margin: usize,
    /// Flips the sign of the `tau_1^2 kappa` term of the curvature identity.
    pub flip_torsion_term: bool,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { margin: 3, flip_torsion_term: false }
    }
}

/// Per-state fields reused by the identities.
struct Fields {
    frenet: FrenetData,
    kappa: Vec<f64>,
    tau1: Vec<f64>,
    tau2: Vec<f64>,
    /// Tangential velocity of the `u` parametrization, `L du/dt` with sign
    /// chosen so that `D_t f = d_t f|_u + f_s * drift`.
    drift: Vec<f64>,
    h: f64,
    closed: bool,
}

fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * h;
        out.push(acc);
    }
    out
}

impl Fields {
    fn new(curve: &DiscreteCurve) -> Result<Self> {
        let h = curve.spacing();
        let frenet = compute_frenet(curve, default_kappa_tol(h))?;
        let m = curve.len();
        let kappa = frenet.kappa.clone();
        let tau1: Vec<f64> = frenet.tau1.iter().map(|t| t.unwrap_or(0.0)).collect();
        let tau2: Vec<f64> = frenet.tau2.iter().map(|t| t.unwrap_or(0.0)).collect();
        let k2: Vec<f64> = kappa.iter().map(|k| k * k).collect();
        let closed = curve.is_closed();
        let (cum, total) = if closed {
            let mut wrapped = k2.clone();
            wrapped.push(k2[0]);
            let c = cumulative_trapezoid(&wrapped, h);
            let total = c[m];
            (c[..m].to_vec(), total)
        } else {
            let c = cumulative_trapezoid(&k2, h);
            let total = c[m - 1];
            (c, total)
        };
        let u = curve.arclength_fractions();
        let drift = (0..m).map(|i| u[i] * total - cum[i]).collect();
        Ok(Self { frenet, kappa, tau1, tau2, drift, h, closed })
    }

    fn len(&self) -> usize {
        self.kappa.len()
    }

    fn range(&self, margin: usize) -> std::ops::Range<usize> {
        if self.closed {
            0..self.len()
        } else {
            margin.min(self.len())..self.len().saturating_sub(margin)
        }
    }
}

/// Three-point derivative at the middle of a nonuniform time stencil.
fn time_weights(t0: f64, t1: f64, t2: f64) -> [f64; 3] {
    let (a, b) = (t1 - t0, t2 - t1);
    [-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b))]
}

struct Window {
    fields: [Fields; 3],
    coords: [Vec<f64>; 3],
    w: [f64; 3],
    h: f64,
    dt: f64,
}

impl Window {
    fn new(states: &[FlowState]) -> Result<Self> {
        let [s0, s1, s2] = states else {
            return Err(Error::InsufficientSamples(format!("need 3 states, got {}", states.len())));
        };
        for s in [s0, s2] {
            if s.curve.len() != s1.curve.len() {
                return Err(Error::MismatchedNodes(s.curve.len(), s1.curve.len()));
            }
        }
        if !(s0.time < s1.time && s1.time < s2.time) {
            return Err(Error::InvalidConfig("window times must increase".into()));
        }
        let mut fields = [Fields::new(&s0.curve)?, Fields::new(&s1.curve)?, Fields::new(&s2.curve)?];
        // keep the torsion sign consistent with the middle state's binormal
        for k in [0, 2] {
            let flip = (0..fields[1].len())
                .filter_map(|i| {
                    let a = fields[k].frenet.binormal1[i].as_ref()?;
                    let b = fields[1].frenet.binormal1[i].as_ref()?;
                    Some(dot(a, b))
                })
                .sum::<f64>()
                < 0.0;
            if flip {
                fields[k].tau1.iter_mut().for_each(|t| *t = -*t);
            }
        }
        Ok(Self {
            coords: [s0.curve.coords().to_vec(), s1.curve.coords().to_vec(), s2.curve.coords().to_vec()],
            w: time_weights(s0.time, s1.time, s2.time),
            h: fields[1].h,
            dt: 0.5 * (s2.time - s0.time),
            fields,
        })
    }

    fn mid(&self) -> &Fields {
        &self.fields[1]
    }

    /// Material time derivative of a scalar field sampled at the three times.
    fn material_dt(&self, f: [&[f64]; 3]) -> Vec<f64> {
        let mid = self.mid();
        let fs = d1_field(f[1], mid.h, mid.closed);
        (0..mid.len())
            .map(|i| self.w[0] * f[0][i] + self.w[1] * f[1][i] + self.w[2] * f[2][i] + fs[i] * mid.drift[i])
            .collect()
    }
}

fn windows_of(states: &[FlowState]) -> Result<Vec<Window>> {
    if states.len() < 3 {
        return Err(Error::InsufficientSamples(format!("need >= 3 states, got {}", states.len())));
    }
    states.windows(3).map(Window::new).collect()
}

fn reduce(name: &str, windows: &[Window], per_window: impl Fn(&Window) -> (f64, f64, usize)) -> ResidualReport {
    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    let mut count = 0;
    for w in windows {
        let (r, s, n) = per_window(w);
        worst = worst.max(r);
        scale = scale.max(s);
        count += n;
    }
    let (h, dt) = windows.first().map_or((0.0, 0.0), |w| (w.h, w.dt));
    let mut report = ResidualReport::new(name, worst / scale, scale, h, dt, count);
    if count == 0 {
        report.note = Some("no nondegenerate nodes in window".into());
    }
    report
}

/// `d_t kappa = kappa_ss + kappa^3 - tau_1^2 kappa`, normalized by `max(1, max kappa^3)`.
pub fn residual_evolution_kappa(states: &[FlowState], opts: &ResidualOptions) -> Result<ResidualReport> {
    let windows = windows_of(states)?;
    let sign = if opts.flip_torsion_term { -1.0 } else { 1.0 };
    Ok(reduce("evolution_kappa", &windows, |w| {
        let mid = w.mid();
        let dk = w.material_dt([&w.fields[0].kappa, &w.fields[1].kappa, &w.fields[2].kappa]);
        let kss = d2_field(&mid.kappa, mid.h, mid.closed);
        let tol = mid.frenet.kappa_tol;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let mut n = 0;
        for i in mid.range(opts.margin) {
            if w.fields.iter().any(|f| f.kappa[i] <= tol) {
                continue;
            }
            let (k, t) = (mid.kappa[i], mid.tau1[i]);
            let r = dk[i] - kss[i] - k.powi(3) + sign * t * t * k;
            worst = worst.max(r.abs());
            scale = scale.max(k.powi(3));
            n += 1;
        }
        (worst, scale, n)
    }))
}

/// `d_t kappa^2 = (kappa^2)_ss - 2 kappa_s^2 + 2 kappa^4 - 2 tau_1^2 kappa^2`,
/// normalized by `max(1, max kappa^4)`.
pub fn residual_evolution_kappa_sq(states: &[FlowState], opts: &ResidualOptions) -> Result<ResidualReport> {
    let windows = windows_of(states)?;
    Ok(reduce("evolution_kappa_sq", &windows, |w| {
        let mid = w.mid();
        let sq: Vec<Vec<f64>> = w.fields.iter().map(|f| f.kappa.iter().map(|k| k * k).collect()).collect();
        let dsq = w.material_dt([&sq[0], &sq[1], &sq[2]]);
        let sq_ss = d2_field(&sq[1], mid.h, mid.closed);
        let ks = d1_field(&mid.kappa, mid.h, mid.closed);
        let tol = mid.frenet.kappa_tol;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let mut n = 0;
        for i in mid.range(opts.margin) {
            let (k, t) = (mid.kappa[i], mid.tau1[i]);
            let ks2 = if k > tol { ks[i] * ks[i] } else { 0.0 };
            let r = dsq[i] - sq_ss[i] + 2.0 * ks2 - 2.0 * k.powi(4) + 2.0 * t * t * k * k;
            worst = worst.max(r.abs());
            scale = scale.max(k.powi(4));
            n += 1;
        }
        (worst, scale, n)
    }))
}

/// `(d_t - d_s^2) tau_1 = 2 (a tau_1)_s + 2 tau_1 kappa^2 - tau_1 tau_2^2`
/// with `a = kappa_s / kappa`, normalized by `max(1, max |tau_1| (kappa^2 + tau_2^2))`.
pub fn residual_evolution_tau1(states: &[FlowState], opts: &ResidualOptions) -> Result<ResidualReport> {
    let windows = windows_of(states)?;
    let mut any = false;
    for w in &windows {
        let tol = 10.0 * w.mid().frenet.kappa_tol;
        if w.mid().range(opts.margin).any(|i| w.fields.iter().all(|f| f.kappa[i] > tol)) {
            any = true;
        }
    }
    if !any {
        return Err(Error::DegenerateCurvature);
    }
    Ok(reduce("evolution_tau1", &windows, |w| {
        let mid = w.mid();
        let tol = 10.0 * mid.frenet.kappa_tol;
        let dtau = w.material_dt([&w.fields[0].tau1, &w.fields[1].tau1, &w.fields[2].tau1]);
        let tss = d2_field(&mid.tau1, mid.h, mid.closed);
        let ks = d1_field(&mid.kappa, mid.h, mid.closed);
        let a_tau: Vec<f64> =
            (0..mid.len()).map(|i| if mid.kappa[i] > tol { ks[i] / mid.kappa[i] * mid.tau1[i] } else { 0.0 }).collect();
        let a_tau_s = d1_field(&a_tau, mid.h, mid.closed);
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let mut n = 0;
        let range = mid.range(opts.margin);
        for i in range.clone() {
            // the flux term differentiates a neighbourhood, so all of it must be nondegenerate
            let lo = i.saturating_sub(1).max(range.start);
            let hi = (i + 1).min(range.end - 1);
            if (lo..=hi).any(|j| w.fields.iter().any(|f| f.kappa[j] <= tol)) {
                continue;
            }
            let (k, t, t2) = (mid.kappa[i], mid.tau1[i], mid.tau2[i]);
            let r = dtau[i] - tss[i] - 2.0 * a_tau_s[i] - 2.0 * t * k * k + t * t2 * t2;
            worst = worst.max(r.abs());
            scale = scale.max(t.abs() * (k * k + t2 * t2));
            n += 1;
        }
        (worst, scale, n)
    }))
}

/// `D_t T - d_s V - kappa^2 T` with `V` the material velocity measured from
/// the states, normalized by `max(1, max kappa^2)`.
pub fn residual_commutator(states: &[FlowState], opts: &ResidualOptions) -> Result<ResidualReport> {
    let windows = windows_of(states)?;
    Ok(reduce("commutator", &windows, |w| {
        let mid = w.mid();
        let dim = mid.frenet.dim;
        let m = mid.len();
        let mut dt_t = vec![vec![0.0; dim]; m];
        let mut ds_v = vec![vec![0.0; dim]; m];
        for c in 0..dim {
            let tc: Vec<Vec<f64>> = w.fields.iter().map(|f| f.frenet.tangent.iter().map(|t| t[c]).collect()).collect();
            let xc: Vec<Vec<f64>> = w.coords.iter().map(|x| (0..m).map(|i| x[i * dim + c]).collect()).collect();
            let d = w.material_dt([&tc[0], &tc[1], &tc[2]]);
            // material velocity: d_t x|_u plus the drift along x_s = T
            let vel: Vec<f64> = (0..m)
                .map(|i| w.w[0] * xc[0][i] + w.w[1] * xc[1][i] + w.w[2] * xc[2][i] + mid.frenet.tangent[i][c] * mid.drift[i])
                .collect();
            let dv = d1_field(&vel, mid.h, mid.closed);
            for i in 0..m {
                dt_t[i][c] = d[i];
                ds_v[i][c] = dv[i];
            }
        }
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let mut n = 0;
        for i in mid.range(opts.margin) {
            let k2 = mid.kappa[i] * mid.kappa[i];
            let r: Vec<f64> = (0..dim).map(|c| dt_t[i][c] - ds_v[i][c] - k2 * mid.frenet.tangent[i][c]).collect();
            worst = worst.max(norm(&r));
            scale = scale.max(k2);
            n += 1;
        }
        (worst, scale, n)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointRelation {
    /// `|kappa_s + eps kappa II(N, N)|`, with `kappa_s` and `eps` taken in the
    /// inward parametrization.
    pub kappa_relation: f64,
    /// `|tau_1 + eps II(N, B_1)|`
    pub torsion_relation: f64,
    pub kappa: f64,
    pub kappa_s: f64,
    pub tau1: f64,
    pub eps: f64,
    pub conormal_bound_holds: bool,
    pub torsion_bound_holds: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    pub report: ResidualReport,
    pub ends: [EndpointRelation; 2],
    pub curvature_bound: f64,
}

impl EndpointReport {
    pub fn inequalities_hold(&self) -> bool {
        self.ends.iter().all(|e| e.conormal_bound_holds && e.torsion_bound_holds)
    }
}

/// Nodes in the endpoint interpolant.
const ENDPOINT_STENCIL: usize = 7;

/// Frenet quantities at an endpoint, in the parametrization running into
/// the curve, from the interpolating polynomial through the nearest nodes.
struct EndpointJet {
    tangent: Vec<f64>,
    normal: Option<Vec<f64>>,
    binormal: Option<Vec<f64>>,
    kappa: f64,
    kappa_s: f64,
    tau1: f64,
}

fn endpoint_jet(curve: &DiscreteCurve, from_start: bool, kappa_tol: f64) -> Option<EndpointJet> {
    let m = curve.len();
    if m < ENDPOINT_STENCIL {
        return None;
    }
    let h = curve.spacing();
    let dim = curve.dim();
    let idx: Vec<usize> = (0..ENDPOINT_STENCIL).map(|j| if from_start { j } else { m - 1 - j }).collect();
    let xs: Vec<f64> = (0..ENDPOINT_STENCIL).map(|j| j as f64 * h).collect();
    let w = fornberg_weights(0.0, &xs, 3);
    let deriv = |k: usize| -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (j, &i) in idx.iter().enumerate() {
            for c in 0..dim {
                out[c] += w[k][j] * curve.node(i)[c];
            }
        }
        out
    };
    let (a, b, c) = (deriv(1), deriv(2), deriv(3));
    let g = dot(&a, &a);
    let speed = g.sqrt();
    let tangent: Vec<f64> = a.iter().map(|x| x / speed).collect();
    let ab = dot(&a, &b);
    let p = (g * dot(&b, &b) - ab * ab).max(0.0);
    let kappa = (p / (g * g * g)).sqrt();
    let kvec: Vec<f64> = reject(&b, &[&tangent]).iter().map(|x| x / g).collect();
    if kappa <= kappa_tol {
        return Some(EndpointJet { tangent, normal: None, binormal: None, kappa, kappa_s: 0.0, tau1: 0.0 });
    }
    let dp = 2.0 * g * dot(&b, &c) - 2.0 * ab * dot(&a, &c);
    let dk2 = dp / (g * g * g) - 3.0 * p * (2.0 * ab) / (g * g * g * g);
    let kappa_s = dk2 / (2.0 * kappa) / speed;
    let normal: Vec<f64> = kvec.iter().map(|x| x / kappa).collect();
    let c_perp = reject(&c, &[&tangent, &normal]);
    let cn = norm(&c_perp);
    let (tau1, binormal) = if cn > 1e-12 * norm(&c).max(1.0) {
        (cn / (kappa * g * speed), Some(c_perp.iter().map(|x| x / cn).collect()))
    } else {
        (0.0, None)
    };
    Some(EndpointJet { tangent, normal: Some(normal), binormal, kappa, kappa_s, tau1 })
}

/// Endpoint relations `kappa_s = -eps kappa II(N,N)` and
/// `tau_1 = -eps II(N, B_1)` with `eps = <T, nu>`, plus the consequences
/// `|d_mu kappa| <= K |kappa| + 10 h` and `|tau_1| <= K + 10 h`.
///
/// Endpoint derivatives come from the degree-6 interpolant through the seven
/// nearest nodes, taken in the parametrization pointing into the curve (the
/// relations are invariant under reversing it).
pub fn endpoint_relations(state: &FlowState, barrier: &Barrier) -> Result<EndpointReport> {
    let curve = &state.curve;
    if curve.is_closed() {
        return Err(Error::InvalidCurve("endpoint relations need an open curve".into()));
    }
    let h = curve.spacing();
    let m = curve.len();
    if m < ENDPOINT_STENCIL {
        return Err(Error::InvalidCurve(format!("endpoint relations need >= {ENDPOINT_STENCIL} nodes")));
    }
    let k_bound = barrier.curvature_bound();
    let kappa_tol = default_kappa_tol(h);
    let length_scale = state.length.max(1.0);
    let mut ends = Vec::with_capacity(2);
    for (end, from_start) in [(0, true), (m - 1, false)] {
        let p = curve.node(end);
        let off = barrier.value(p).abs() / norm(&barrier.gradient(p)).max(1e-300);
        if off > 1e-6 * length_scale {
            return Err(Error::OffBarrier(off));
        }
        let nu = barrier.normal(p);
        let jet = endpoint_jet(curve, from_start, kappa_tol).expect("enough nodes");
        let eps = dot(&jet.tangent, &nu);
        let tangential = |v: &[f64]| reject(v, &[&nu]);
        let degenerate = jet.normal.is_none();
        let (kappa_relation, torsion_relation) = match &jet.normal {
            Some(n) => {
                let nt = tangential(n);
                let ii_nn = barrier.second_fundamental_form(p, &nt, &nt)?;
                let ii_nb = match &jet.binormal {
                    Some(b) => barrier.second_fundamental_form(p, &nt, &tangential(b))?,
                    None => 0.0,
                };
                ((jet.kappa_s + eps * jet.kappa * ii_nn).abs(), (jet.tau1 + eps * ii_nb).abs())
            }
            None => (jet.kappa_s.abs(), jet.tau1.abs()),
        };
        ends.push(EndpointRelation {
            kappa_relation,
            torsion_relation,
            kappa: jet.kappa,
            kappa_s: jet.kappa_s,
            tau1: jet.tau1,
            eps,
            conormal_bound_holds: jet.kappa_s.abs() <= k_bound * jet.kappa + 10.0 * h,
            torsion_bound_holds: jet.tau1.abs() <= k_bound + 10.0 * h,
            degenerate,
        });
    }
    let worst = ends.iter().map(|e| e.kappa_relation.max(e.torsion_relation)).fold(0.0, f64::max);
    let mut report = ResidualReport::new("endpoint_relations", worst, 1.0, h, state.dt_last, 2);
    if ends.iter().any(|e| e.degenerate) {
        report.note = Some("endpoint curvature below tolerance; relations are vacuous there".into());
    }
    let ends: [EndpointRelation; 2] = ends.try_into().expect("two endpoints");
    Ok(EndpointReport { report, ends, curvature_bound: k_bound })
}

/// `sup |d_s^m T|^2 (t - t0)^{m-1} / M_{t0}` over states in
/// `[t0, t0 + c / M_{t0}]`, `c = 1/4`, where `t0` is the first state's time.
pub fn dilation_invariant_monitor(states: &[FlowState], m: u32) -> Result<ResidualReport> {
    if !(1..=3).contains(&m) {
        return Err(Error::InvalidConfig(format!("derivative order {m} outside 1..=3")));
    }
    let first = states.first().ok_or_else(|| Error::InsufficientSamples("empty window".into()))?;
    let (t0, m0) = (first.time, first.max_kappa_sq);
    let name = format!("dilation_monitor_m{m}");
    let h0 = first.curve.spacing();
    if first.max_kappa() <= default_kappa_tol(h0) {
        let mut report = ResidualReport::new(&name, 0.0, m0, h0, 0.0, states.len());
        report.note = Some("initial curvature below tolerance".into());
        return Ok(report);
    }
    let limit = CURVATURE_WINDOW / m0;
    let span = states.last().unwrap().time - t0;
    if span > limit * (1.0 + 1e-12) {
        return Err(Error::WindowTooLong { span, limit });
    }
    let mut worst = 0.0f64;
    for s in states {
        let frenet = compute_frenet(&s.curve, default_kappa_tol(s.curve.spacing()))?;
        let (h, closed, dim) = (s.curve.spacing(), s.curve.is_closed(), s.curve.dim());
        let mut field = frenet.tangent.clone();
        for _ in 0..m {
            let mut next = vec![vec![0.0; dim]; field.len()];
            for c in 0..dim {
                let comp: Vec<f64> = field.iter().map(|v| v[c]).collect();
                for (i, d) in d1_field(&comp, h, closed).into_iter().enumerate() {
                    next[i][c] = d;
                }
            }
            field = next;
        }
        let sup = field.iter().map(|v| dot(v, v)).fold(0.0, f64::max);
        worst = worst.max(sup * (s.time - t0).powi(m as i32 - 1) / m0);
    }
    let dt = states.get(1).map_or(0.0, |s| s.time - t0);
    Ok(ResidualReport::new(&name, worst, m0, first.curve.spacing(), dt, states.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauKappaSample {
    pub t: f64,
    pub max_kappa: f64,
    /// Max `|tau_1 / kappa|` over nodes with `kappa >= 0.9 max kappa`.
    pub ratio: f64,
    /// `K / |kappa|` at the endpoints (largest of the two).
    pub endpoint_bound: Option<f64>,
    /// `|tau_1 / kappa|` at the endpoints (largest of the two).
    pub endpoint_ratio: Option<f64>,
    pub endpoint_bound_holds: bool,
}

/// Time series of `|tau_1 / kappa|` at near-maximal curvature, with the
/// endpoint bound `|tau_1 / kappa| <= K / |kappa|` checked up to `10 h`.
pub fn tau_kappa_ratio_monitor(states: &[FlowState], barrier: Option<&Barrier>) -> Result<Vec<TauKappaSample>> {
    states
        .iter()
        .map(|s| {
            let h = s.curve.spacing();
            let frenet = compute_frenet(&s.curve, default_kappa_tol(h))?;
            let kmax = frenet.max_kappa();
            let ratio = (0..frenet.len())
                .filter(|&i| frenet.kappa[i] >= 0.9 * kmax && frenet.kappa[i] > frenet.kappa_tol)
                .map(|i| (frenet.tau1[i].unwrap_or(0.0) / frenet.kappa[i]).abs())
                .fold(0.0, f64::max);
            let mut sample = TauKappaSample {
                t: s.time,
                max_kappa: kmax,
                ratio,
                endpoint_bound: None,
                endpoint_ratio: None,
                endpoint_bound_holds: true,
            };
            if let (Some(b), false) = (barrier, s.curve.is_closed()) {
                let k_bound = b.curvature_bound();
                for end in [0, frenet.len() - 1] {
                    let k = frenet.kappa[end];
                    if k <= frenet.kappa_tol {
                        continue;
                    }
                    let tau = frenet.tau1[end].unwrap_or(0.0).abs();
                    let bound = k_bound / k;
                    sample.endpoint_bound = Some(sample.endpoint_bound.map_or(bound, |x: f64| x.max(bound)));
                    sample.endpoint_ratio = Some(sample.endpoint_ratio.map_or(tau / k, |x: f64| x.max(tau / k)));
                    if tau > k_bound + 10.0 * h {
                        sample.endpoint_bound_holds = false;
                    }
                }
            }
            Ok(sample)
        })
        .collect()
}

/// `max |kappa_vec + x^perp / (2 sigma_hat)|` for a curve centered at the
/// shrinking point.
pub fn shrinker_residual(curve: &DiscreteCurve, sigma_hat: f64) -> Result<f64> {
    if !(sigma_hat > 0.0) {
        return Err(Error::NonPositiveSigma(sigma_hat));
    }
    let frenet = compute_frenet(curve, default_kappa_tol(curve.spacing()))?;
    Ok(curve
        .nodes()
        .enumerate()
        .map(|(i, x)| {
            let t = &frenet.tangent[i];
            let perp = reject(x, &[t]);
            let r: Vec<f64> = frenet.kappa_vec[i].iter().zip(&perp).map(|(k, p)| k + p / (2.0 * sigma_hat)).collect();
            norm(&r)
        })
        .fold(0.0, f64::max))
}

/// `max |kappa_vec - (V - <V, T> T)|`.
pub fn translator_residual(curve: &DiscreteCurve, v: &[f64]) -> Result<f64> {
    if norm(v) == 0.0 {
        return Err(Error::InvalidConfig("translator velocity must be nonzero".into()));
    }
    let frenet = compute_frenet(curve, default_kappa_tol(curve.spacing()))?;
    Ok((0..curve.len())
        .map(|i| {
            let perp = reject(v, &[&frenet.tangent[i]]);
            norm(&sub(&frenet.kappa_vec[i], &perp))
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run, FlowConfig};
    use crate::models::ModelCurve;

    fn flow(model: &ModelCurve, m: usize, steps: usize) -> Vec<FlowState> {
        let barrier = model.barrier().unwrap();
        let cfg = FlowConfig {
            node_count: m,
            t_end: 10.0,
            kappa_cap: 1e8,
            output_every: 1,
            max_steps: Some(steps),
            ..Default::default()
        };
        run(&model.sample(m).unwrap(), barrier.as_ref(), &cfg).unwrap().states
    }

    fn circle() -> ModelCurve {
        ModelCurve::Circle { center: vec![0.0, 0.0], radius: 1.0, basis: None }
    }

    fn grid_bound(r: &ResidualReport) -> f64 {
        r.h * r.h + r.dt
    }

    #[test]
    fn chord_residuals_vanish() {
        let chord = ModelCurve::Chord { p: vec![-2.0, 0.0], q: vec![2.0, 0.0] };
        let s = flow(&chord, 64, 5);
        let o = ResidualOptions::default();
        assert!(residual_evolution_kappa(&s, &o).unwrap().max_residual <= 1e-10);
        assert!(residual_evolution_kappa_sq(&s, &o).unwrap().max_residual <= 1e-10);
        assert!(residual_commutator(&s, &o).unwrap().max_residual <= 1e-10);
        assert!(matches!(residual_evolution_tau1(&s, &o), Err(Error::DegenerateCurvature)));
        for m in 1..=3 {
            assert!(dilation_invariant_monitor(&s, m).unwrap().max_residual <= 1e-10);
        }
    }

    #[test]
    fn shrinking_circle_residuals_are_second_order() {
        let o = ResidualOptions::default();
        let s = flow(&circle(), 256, 10);
        let k = residual_evolution_kappa(&s, &o).unwrap();
        let k2 = residual_evolution_kappa_sq(&s, &o).unwrap();
        let c = residual_commutator(&s, &o).unwrap();
        for r in [&k, &k2, &c] {
            assert!(r.max_residual <= 5.0 * grid_bound(r), "{}: {:e}", r.name, r.max_residual);
            assert!(r.evaluated > 0);
        }
        let tau = residual_evolution_tau1(&s, &o).unwrap();
        assert!(tau.max_residual <= 1e-8);
    }

    #[test]
    fn kappa_sq_agrees_with_kappa_by_chain_rule() {
        let helix = ModelCurve::Helix { radius: 1.0, pitch: 1.0, turns: 1.0 };
        let s = flow(&helix, 128, 6);
        let o = ResidualOptions { margin: 16, ..Default::default() };
        let k = residual_evolution_kappa(&s, &o).unwrap();
        let k2 = residual_evolution_kappa_sq(&s, &o).unwrap();
        let kmax = s.iter().map(|st| st.max_kappa()).fold(0.0, f64::max);
        let h = k.h;
        assert!(k2.max_residual * k2.scale <= 2.0 * kmax * k.max_residual * k.scale + 10.0 * h * h);
    }

    #[test]
    fn flipped_torsion_term_is_detected() {
        let helix = ModelCurve::Helix { radius: 1.0, pitch: 1.0, turns: 1.0 };
        let s = flow(&helix, 128, 6);
        let o = ResidualOptions { margin: 16, ..Default::default() };
        let good = residual_evolution_kappa(&s, &o).unwrap();
        let bad = residual_evolution_kappa(&s, &ResidualOptions { flip_torsion_term: true, ..o }).unwrap();
        assert!(good.max_residual <= 10.0 * grid_bound(&good));
        assert!(bad.max_residual > 100.0 * good.max_residual);
    }

    #[test]
    fn windows_need_matching_nodes() {
        let mut s = flow(&circle(), 64, 2);
        s[2] = FlowState::new(circle().sample(32).unwrap(), s[2].time, None).unwrap();
        assert!(matches!(residual_evolution_kappa(&s, &ResidualOptions::default()), Err(Error::MismatchedNodes(32, 64))));
        assert!(residual_commutator(&s[..2], &ResidualOptions::default()).is_err());
    }

    #[test]
    fn flat_barrier_endpoint_relations() {
        let semi = ModelCurve::Semicircle { center: vec![0.0, 0.0], radius: 1.0, basis: None };
        let b = semi.barrier().unwrap().unwrap();
        let s = flow(&semi, 128, 50);
        let e = endpoint_relations(s.last().unwrap(), &b).unwrap();
        let h = e.report.h;
        assert!(e.report.max_residual <= 10.0 * h, "{:e}", e.report.max_residual);
        assert!(e.inequalities_hold());
        for end in &e.ends {
            assert!(end.tau1.abs() <= 1e-8);
        }
    }

    #[test]
    fn sphere_endpoint_relation_uses_second_fundamental_form() {
        let arc = ModelCurve::OrthogonalArc { ball_center: vec![0.0, 0.0], ball_radius: 2.0, arc_radius: 1.0, basis: None };
        let b = arc.barrier().unwrap().unwrap();
        let s = flow(&arc, 128, 100);
        let e = endpoint_relations(s.last().unwrap(), &b).unwrap();
        for end in &e.ends {
            // II(N, N) = -1/2 on the sphere of radius 2
            assert!((end.kappa_s + end.eps * end.kappa * -0.5).abs() <= 10.0 * e.report.h);
            assert!(end.kappa_s.abs() > 0.1);
        }
        assert!(e.inequalities_hold());
    }

    #[test]
    fn dilation_monitor_first_order_is_curvature_ratio() {
        let semi = ModelCurve::Semicircle { center: vec![0.0, 0.0], radius: 1.0, basis: None };
        let s = flow(&semi, 64, 40);
        let r = dilation_invariant_monitor(&s, 1).unwrap();
        let m0 = s[0].max_kappa_sq;
        let expected = s.iter().map(|st| st.max_kappa_sq / m0).fold(0.0, f64::max);
        assert!((r.max_residual - expected).abs() <= 1e-2 * expected);
        assert!(r.max_residual < 1.1);
        assert!(dilation_invariant_monitor(&s, 4).is_err());
    }

    #[test]
    fn planar_tau_kappa_ratio_is_zero() {
        let semi = ModelCurve::Semicircle { center: vec![0.0, 0.0], radius: 1.0, basis: None };
        let b = semi.barrier().unwrap();
        let s = flow(&semi, 64, 5);
        for sample in tau_kappa_ratio_monitor(&s, b.as_ref()).unwrap() {
            assert_eq!(sample.ratio, 0.0);
            assert!(sample.endpoint_bound_holds);
        }
    }

    #[test]
    fn shrinker_residuals() {
        let sigma: f64 = 0.3;
        let c = ModelCurve::Circle { center: vec![0.0, 0.0], radius: (2.0 * sigma).sqrt(), basis: None }.sample(256).unwrap();
        assert!(shrinker_residual(&c, sigma).unwrap() <= 10.0 * c.spacing().powi(2));
        let semi = ModelCurve::Semicircle { center: vec![0.0, 0.0], radius: 1.0, basis: None }.sample(257).unwrap();
        assert!(shrinker_residual(&semi, 0.5).unwrap() <= 10.0 * semi.spacing().powi(2));
        let chord = ModelCurve::Chord { p: vec![-1.0, -1.0], q: vec![1.0, 1.0] }.sample(33).unwrap();
        assert!(shrinker_residual(&chord, 0.5).unwrap() <= 1e-12);
        assert!(shrinker_residual(&chord, 0.0).is_err());
    }

    #[test]
    fn translator_residuals() {
        let grim = ModelCurve::GrimReaper { offset: vec![0.0, 0.0], window: 1.4, basis: None }.sample(257).unwrap();
        let h = grim.spacing();
        assert!(translator_residual(&grim, &[0.0, 1.0]).unwrap() <= 10.0 * h * h);
        let line =
            ModelCurve::Line { point: vec![0.0, 0.0], direction: vec![0.0, 1.0], half_length: 3.0 }.sample(33).unwrap();
        assert!(translator_residual(&line, &[0.0, 1.0]).unwrap() <= 1e-12);
        let c = circle().sample(128).unwrap();
        assert!(translator_residual(&c, &[0.0, 1.0]).unwrap() >= 0.5);
        assert!(translator_residual(&c, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn order_from_paired_reports() {
        let a = ResidualReport::new("x", 4e-4, 1.0, 0.1, 0.01, 10);
        let b = ResidualReport::new("x", 1e-4, 1.0, 0.05, 0.0025, 10).with_order_from(&a, 2.0);
        assert!((b.order_estimate.unwrap() - 2.0).abs() < 1e-12);
        assert!(a.order_estimate.is_none());
    }
}
