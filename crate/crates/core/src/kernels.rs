//! Backward heat kernels, Edelen-type cut-offs and the reflected Gaussian
//! functional `Phi(t) = int_{gamma_t} (rho phi + rho~ phi~) ds`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::Barrier;
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::geometry::DiscreteCurve;
use crate::vecmath::{axpy, dot, sub};

pub const DEFAULT_ALPHA: f64 = 0.5;

/// Center `(x0, t0)`, cut-off radius and cut-off parameter of one functional.
/// `radius = None` switches the cut-off off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub center: Vec<f64>,
    pub t0: f64,
    pub radius: Option<f64>,
    pub alpha: f64,
}

impl KernelParams {
    /// Truncated kernel; checks `r <= rho_tub / 8` against the barrier.
    pub fn truncated(center: Vec<f64>, t0: f64, radius: f64, barrier: Option<&Barrier>) -> Result<Self> {
        let p = Self { center, t0, radius: Some(radius), alpha: DEFAULT_ALPHA };
        p.validate(barrier)?;
        Ok(p)
    }

    pub fn untruncated(center: Vec<f64>, t0: f64) -> Self {
        Self { center, t0, radius: None, alpha: DEFAULT_ALPHA }
    }

    pub fn validate(&self, barrier: Option<&Barrier>) -> Result<()> {
        if !(self.alpha >= 0.5) {
            return Err(Error::InvalidConfig(format!("cut-off alpha {} < 1/2", self.alpha)));
        }
        if let Some(r) = self.radius {
            let limit = barrier.map_or(f64::INFINITY, Barrier::max_cutoff_radius);
            if !(r > 0.0) || r > limit * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!("cut-off radius {r} outside (0, {limit}]")));
            }
        }
        Ok(())
    }

    pub fn sigma_hat(&self, t: f64) -> Result<f64> {
        let s = self.t0 - t;
        if s > 0.0 {
            Ok(s)
        } else {
            Err(Error::NonPositiveSigma(s))
        }
    }
}

/// `(4 pi s)^{-n/2} exp(-|x|^2 / 4s)`; `n = 1` for curves.
pub fn gaussian_rho(x: &[f64], sigma_hat: f64, dim_exponent: u32) -> Result<f64> {
    if !(sigma_hat > 0.0) {
        return Err(Error::NonPositiveSigma(sigma_hat));
    }
    Ok(rho_unchecked(dot(x, x), sigma_hat, dim_exponent))
}

fn rho_unchecked(r2: f64, s: f64, n: u32) -> f64 {
    (4.0 * PI * s).powf(-0.5 * n as f64) * (-r2 / (4.0 * s)).exp()
}

/// `eta(xi) = (1 - xi)_+^4` with `xi = (r^2/s)^{3/4} (|x|^2 - alpha s) / r^2`.
pub fn cutoff_phi(x: &[f64], sigma_hat: f64, radius: Option<f64>, alpha: f64) -> f64 {
    cutoff_from_sq(dot(x, x), sigma_hat, radius, alpha)
}

fn cutoff_from_sq(r2: f64, s: f64, radius: Option<f64>, alpha: f64) -> f64 {
    let Some(r) = radius else { return 1.0 };
    let xi = (r * r / s).powf(0.75) * (r2 - alpha * s) / (r * r);
    if xi <= 0.0 {
        1.0
    } else {
        (1.0 - xi).max(0.0).powi(4)
    }
}

fn truncated_rho(y: &[f64], s: f64, params: &KernelParams) -> f64 {
    let d = sub(y, &params.center);
    let r2 = dot(&d, &d);
    let phi = cutoff_from_sq(r2, s, params.radius, params.alpha);
    if phi == 0.0 {
        0.0
    } else {
        rho_unchecked(r2, s, 1) * phi
    }
}

/// `f = rho phi + rho~ phi~`, the second term evaluated at the mirror point.
/// Points whose projection onto the barrier is not unique contribute no
/// mirror term.
pub fn reflected_kernel_f(x: &[f64], t: f64, params: &KernelParams, barrier: Option<&Barrier>) -> Result<f64> {
    let s = params.sigma_hat(t)?;
    Ok(kernel_at(x, s, params, barrier))
}

fn kernel_at(x: &[f64], s: f64, params: &KernelParams, barrier: Option<&Barrier>) -> f64 {
    let direct = truncated_rho(x, s, params);
    let mirror = match barrier.map(|b| b.reflect(x)) {
        Some(Ok(xt)) => truncated_rho(&xt, s, params),
        _ => 0.0,
    };
    direct + mirror
}

/// Trapezoid rule for `int f ds` over the polygon.
pub fn gaussian_functional_phi(curve: &DiscreteCurve, t: f64, params: &KernelParams, barrier: Option<&Barrier>) -> Result<f64> {
    let s = params.sigma_hat(t)?;
    Ok(functional_at(curve, s, params, barrier))
}

fn functional_at(curve: &DiscreteCurve, s: f64, params: &KernelParams, barrier: Option<&Barrier>) -> f64 {
    let m = curve.len();
    if m < 2 {
        return 0.0;
    }
    let f: Vec<f64> = curve.nodes().map(|x| kernel_at(x, s, params, barrier)).collect();
    curve
        .chords()
        .iter()
        .enumerate()
        .map(|(i, c)| 0.5 * (f[i] + f[(i + 1) % m]) * c)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterSpec {
    /// Final endpoint positions with a tangential grid around each, plus
    /// interior nodes of the final curve.
    Auto,
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSpec {
    /// `t0 = t_last + 4^{-k}`, `k = 0..levels`.
    Ladder { levels: u32 },
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub centers: CenterSpec,
    pub times: TimeSpec,
    /// Cut-off radii; `null` entries mean untruncated.
    pub radii: Vec<Option<f64>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self { centers: CenterSpec::Auto, times: TimeSpec::Ladder { levels: 6 }, radii: vec![None], alpha: DEFAULT_ALPHA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub center: Vec<f64>,
    pub t0: f64,
    pub radius: Option<f64>,
    /// Center lies on the barrier.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSeries {
    pub grid_index: usize,
    pub samples: Vec<(f64, f64)>,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub center_grid: Vec<GridPoint>,
    pub phi_series: Vec<PhiSeries>,
    pub entropy_sup: f64,
    pub boundary_sup: f64,
    pub interior_sup: f64,
    pub monotonicity_violation: f64,
}

const BOUNDARY_TOL: f64 = 1e-9;

fn auto_centers(last: &DiscreteCurve, barrier: Option<&Barrier>, spacing: f64) -> Result<Vec<(Vec<f64>, bool)>> {
    let mut out = Vec::new();
    if let (Some(b), false) = (barrier, last.is_closed()) {
        for end in [0, last.len() - 1] {
            let p = b.project(last.node(end))?;
            let basis = b.tangent_basis(&p);
            let dirs: Vec<&Vec<f64>> = basis.iter().take(2).collect();
            let offsets: Vec<f64> = (-2..=2).map(|k| k as f64 * spacing).collect();
            let second: Vec<f64> = if dirs.len() > 1 { offsets.clone() } else { vec![0.0] };
            for &a in &offsets {
                for &c in &second {
                    let mut q = p.clone();
                    if let Some(d) = dirs.first() {
                        axpy(a, d, &mut q);
                    }
                    if dirs.len() > 1 {
                        axpy(c, dirs[1], &mut q);
                    }
                    if let Ok(z) = b.project(&q) {
                        out.push((z, true));
                    }
                }
            }
        }
    }
    let m = last.len();
    let picks = 9.min(m);
    for k in 0..picks {
        let i = if picks == 1 { 0 } else { k * (m - 1) / (picks - 1) };
        out.push((last.node(i).to_vec(), false));
    }
    Ok(out)
}

fn is_on_barrier(x: &[f64], barrier: Option<&Barrier>) -> bool {
    barrier.is_some_and(|b| b.signed_distance(x).map_or(false, |d| d.abs() <= BOUNDARY_TOL))
}

/// Evaluates `Phi` for every (center, t0, radius) of the grid at every state
/// preceding `t0` and reduces by max. Grid order is deterministic.
pub fn entropy_scan(states: &[FlowState], barrier: Option<&Barrier>, spec: &ScanSpec) -> Result<EntropyReport> {
    let last = states.last().ok_or(Error::EmptyGrid)?;
    if spec.radii.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let t_last = states.iter().map(|s| s.time).fold(f64::MIN, f64::max);
    let times: Vec<f64> = match &spec.times {
        TimeSpec::Ladder { levels } => (0..*levels).map(|k| t_last + 4f64.powi(-(k as i32))).collect(),
        TimeSpec::Times(ts) => ts.clone(),
    };
    let mut grid = Vec::new();
    for radius in &spec.radii {
        let spacing = radius.map_or(0.25, |r| 0.5 * r);
        let centers = match &spec.centers {
            CenterSpec::Auto => auto_centers(&last.curve, barrier, spacing)?,
            CenterSpec::Points(ps) => ps.iter().map(|p| (p.clone(), is_on_barrier(p, barrier))).collect(),
        };
        for (center, boundary) in centers {
            for &t0 in &times {
                let params = KernelParams { center: center.clone(), t0, radius: *radius, alpha: spec.alpha };
                params.validate(barrier)?;
                grid.push(GridPoint { center: center.clone(), t0, radius: *radius, boundary });
            }
        }
    }
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let phi_series: Vec<PhiSeries> = grid
        .par_iter()
        .enumerate()
        .map(|(grid_index, g)| {
            let params = KernelParams { center: g.center.clone(), t0: g.t0, radius: g.radius, alpha: spec.alpha };
            let samples: Vec<(f64, f64)> = states
                .iter()
                .filter(|s| s.time < g.t0)
                .map(|s| (s.time, functional_at(&s.curve, g.t0 - s.time, &params, barrier)))
                .collect();
            let violation = samples.windows(2).map(|w| (w[1].1 - w[0].1).max(0.0)).fold(0.0, f64::max);
            PhiSeries { grid_index, samples, violation }
        })
        .collect();
    let sup_where = |want: Option<bool>| {
        phi_series
            .iter()
            .filter(|p| want.map_or(true, |b| grid[p.grid_index].boundary == b))
            .flat_map(|p| p.samples.iter().map(|s| s.1))
            .fold(0.0, f64::max)
    };
    let report = EntropyReport {
        entropy_sup: sup_where(None),
        boundary_sup: sup_where(Some(true)),
        interior_sup: sup_where(Some(false)),
        monotonicity_violation: phi_series.iter().map(|p| p.violation).fold(0.0, f64::max),
        center_grid: grid,
        phi_series,
    };
    debug_assert!(report.phi_series.iter().flat_map(|p| &p.samples).all(|s| s.1 <= report.entropy_sup));
    Ok(report)
}

/// Scales the curve by `lambda` about `x0`.
pub fn dilate_about(curve: &DiscreteCurve, x0: &[f64], lambda: f64) -> Result<DiscreteCurve> {
    curve.map_nodes(|p| {
        let mut q = x0.to_vec();
        axpy(lambda, &sub(p, x0), &mut q);
        q
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat() -> Barrier {
        Barrier::flat(&[0.0, -1.0], 0.0).unwrap()
    }

    fn segment(a: [f64; 2], b: [f64; 2], m: usize) -> DiscreteCurve {
        let pts: Vec<[f64; 2]> = (0..m)
            .map(|i| {
                let u = i as f64 / (m - 1) as f64;
                [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
            })
            .collect();
        DiscreteCurve::from_points(&pts, false).unwrap()
    }

    #[test]
    fn rho_prefactor_and_exponent() {
        let s = 1.0 / (4.0 * PI);
        assert!((gaussian_rho(&[0.0, 0.0], s, 1).unwrap() - 1.0).abs() < 1e-15);
        let s: f64 = 0.3;
        let x = [(4.0f64 * s).sqrt(), 0.0];
        let want = (4.0 * PI * s).powf(-0.5) * (-1.0f64).exp();
        assert!((gaussian_rho(&x, s, 1).unwrap() - want).abs() < 1e-15);
        assert!(matches!(gaussian_rho(&x, 0.0, 1), Err(Error::NonPositiveSigma(_))));
    }

    #[test]
    fn line_integral_of_rho_is_one() {
        let s: f64 = 0.37;
        let w = 20.0 * s.sqrt();
        let line = segment([-w, 0.3], [w, 0.3], 4001);
        let p = KernelParams::untruncated(vec![0.0, 0.3], s);
        let v = gaussian_functional_phi(&line, 0.0, &p, None).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn cutoff_values() {
        let (s, r, a) = (0.01, 0.2, 0.5);
        assert_eq!(cutoff_phi(&[0.05, 0.0], s, Some(r), a), 1.0);
        let edge = a * s + r * r * (s / (r * r)).powf(0.75);
        assert_eq!(cutoff_phi(&[edge.sqrt(), 0.0], s, Some(r), a), 0.0);
        let half = a * s + 0.5 * r * r * (s / (r * r)).powf(0.75);
        assert!((cutoff_phi(&[half.sqrt(), 0.0], s, Some(r), a) - 0.0625).abs() < 1e-12);
        assert_eq!(cutoff_phi(&[100.0, 0.0], s, None, a), 1.0);
    }

    #[test]
    fn kernel_on_flat_barrier_doubles() {
        let b = flat();
        let p = KernelParams::truncated(vec![0.0, 0.0], 1.0, 1e6, Some(&b)).unwrap();
        let x = [0.1, 0.0];
        let f = reflected_kernel_f(&x, 0.9, &p, Some(&b)).unwrap();
        let single = gaussian_rho(&x, 0.1, 1).unwrap() * cutoff_phi(&x, 0.1, Some(1e6), 0.5);
        assert!((f - 2.0 * single).abs() < 1e-14);
        let far = reflected_kernel_f(&[50.0, 50.0], 0.9, &p, Some(&b)).unwrap();
        assert!(far < 1e-300);
        let q = KernelParams::truncated(vec![0.0, 0.0], 1.0, 0.1, Some(&Barrier::sphere(&[0.0, 5.0], 5.0).unwrap())).unwrap();
        assert_eq!(reflected_kernel_f(&[3.0, 3.0], 0.9, &q, Some(&b)).unwrap(), 0.0);
    }

    #[test]
    fn kernel_is_mirror_symmetric() {
        let b = flat();
        let p = KernelParams::untruncated(vec![0.2, 0.0], 0.5);
        let x = [0.3, 0.4];
        let xt = b.reflect(&x).unwrap();
        let a = reflected_kernel_f(&x, 0.1, &p, Some(&b)).unwrap();
        let c = reflected_kernel_f(&xt, 0.1, &p, Some(&b)).unwrap();
        assert!((a - c).abs() < 1e-15);
    }

    #[test]
    fn line_in_flat_barrier_gives_two() {
        let b = flat();
        let s: f64 = 0.05;
        let w = 20.0 * s.sqrt();
        let line = segment([-w, 0.0], [w, 0.0], 2001);
        let p = KernelParams::untruncated(vec![0.0, 0.0], s);
        let v = gaussian_functional_phi(&line, 0.0, &p, Some(&b)).unwrap();
        assert!((v - 2.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn semicircle_matches_full_circle_value() {
        let b = flat();
        let m = 2001;
        let pts: Vec<[f64; 2]> = (0..m)
            .map(|i| {
                let th = PI * i as f64 / (m - 1) as f64;
                [th.cos(), th.sin()]
            })
            .collect();
        let c = DiscreteCurve::from_points(&pts, false).unwrap();
        let p = KernelParams::untruncated(vec![0.0, 0.0], 0.5);
        let v = gaussian_functional_phi(&c, 0.0, &p, Some(&b)).unwrap();
        // oracle: full circle of radius 1 at s = 1/2 gives 2 pi (2 pi)^{-1/2} e^{-1/2}
        let oracle = (2.0 * PI).sqrt() * (-0.5f64).exp();
        assert!((v - oracle).abs() < 1e-5, "{v} vs {oracle}");
    }

    #[test]
    fn empty_curve_has_zero_functional() {
        let p = KernelParams::untruncated(vec![0.0, 0.0], 1.0);
        assert_eq!(gaussian_functional_phi(&DiscreteCurve::empty(2), 0.0, &p, None).unwrap(), 0.0);
    }

    #[test]
    fn radius_above_tube_limit_is_rejected() {
        let b = Barrier::sphere(&[0.0, 0.0], 2.0).unwrap();
        assert!(KernelParams::truncated(vec![2.0, 0.0], 1.0, 0.3, Some(&b)).is_err());
        assert!(KernelParams::truncated(vec![2.0, 0.0], 1.0, 0.25, Some(&b)).is_ok());
    }
}
