//! Closed-form reference curves and their flows.

use std::f64::consts::PI;

use rand_core::{RngCore, SeedableRng};
use rand_pcg::Pcg32;
use serde::{Deserialize, Serialize};

use crate::barrier::Barrier;
use crate::error::{Error, Result};
use crate::geometry::DiscreteCurve;
use crate::kernels::gaussian_rho;
use crate::vecmath::{axpy, dist, dist_to_segment, dot, normalized, reject, scale, sub, unit};

/// Reference curves nameable in scenario configs.
///
/// `basis` fields are the two orthonormal vectors spanning the model plane;
/// they default to the first two coordinate axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelCurve {
    Chord {
        p: Vec<f64>,
        q: Vec<f64>,
    },
    Line {
        point: Vec<f64>,
        direction: Vec<f64>,
        half_length: f64,
    },
    Circle {
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        basis: Option<[Vec<f64>; 2]>,
    },
    /// Upper half (along `basis[1]`) of a circle; its barrier is the
    /// hyperplane through the center orthogonal to `basis[1]`.
    Semicircle {
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        basis: Option<[Vec<f64>; 2]>,
    },
    /// `y = -log cos x` for `|x| <= window`, with `x` along `basis[0]` and the
    /// translation direction `basis[1]`.
    GrimReaper {
        offset: Vec<f64>,
        window: f64,
        #[serde(default)]
        basis: Option<[Vec<f64>; 2]>,
    },
    /// The `x >= 0` half of the Grim Reaper, standing on the hyperplane `x = 0`.
    HalfGrimReaper {
        offset: Vec<f64>,
        window: f64,
        #[serde(default)]
        basis: Option<[Vec<f64>; 2]>,
    },
    /// Circular arc inside a ball meeting the sphere orthogonally.
    OrthogonalArc {
        ball_center: Vec<f64>,
        ball_radius: f64,
        arc_radius: f64,
        #[serde(default)]
        basis: Option<[Vec<f64>; 2]>,
    },
    /// `(a cos th, a sin th, b th)`, `th` in `[0, 2 pi turns]`.
    Helix {
        radius: f64,
        pitch: f64,
        turns: f64,
    },
}

pub const MODEL_NAMES: [&str; 8] =
    ["chord", "line", "circle", "semicircle", "grim_reaper", "half_grim_reaper", "orthogonal_arc", "helix"];

fn plane_basis(dim: usize, basis: &Option<[Vec<f64>; 2]>) -> Result<[Vec<f64>; 2]> {
    if dim < 2 {
        return Err(Error::InvalidConfig("model curves need dimension >= 2".into()));
    }
    let [a, b] = match basis {
        Some([a, b]) => [a.clone(), b.clone()],
        None => [unit(dim, 0), unit(dim, 1)],
    };
    if a.len() != dim || b.len() != dim {
        return Err(Error::InvalidConfig("basis dimension mismatch".into()));
    }
    let e1 = normalized(&a).ok_or_else(|| Error::InvalidConfig("degenerate basis".into()))?;
    let e2 = normalized(&reject(&b, &[&e1])).ok_or_else(|| Error::InvalidConfig("degenerate basis".into()))?;
    Ok([e1, e2])
}

fn plane_point(origin: &[f64], e: &[Vec<f64>; 2], u: f64, v: f64) -> Vec<f64> {
    let mut p = origin.to_vec();
    axpy(u, &e[0], &mut p);
    axpy(v, &e[1], &mut p);
    p
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
    }
}

fn grim_window(window: f64) -> Result<f64> {
    if !(window > 0.0 && window < 0.5 * PI) {
        return Err(Error::InvalidConfig(format!("grim reaper window {window} outside (0, pi/2)")));
    }
    // arclength from the tip to |x| = window
    Ok(window.tan().asinh())
}

/// Grim Reaper point at signed arclength `s` from the tip.
fn grim_point(s: f64) -> (f64, f64) {
    (s.sinh().atan(), s.cosh().ln())
}

impl ModelCurve {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Chord { .. } => MODEL_NAMES[0],
            Self::Line { .. } => MODEL_NAMES[1],
            Self::Circle { .. } => MODEL_NAMES[2],
            Self::Semicircle { .. } => MODEL_NAMES[3],
            Self::GrimReaper { .. } => MODEL_NAMES[4],
            Self::HalfGrimReaper { .. } => MODEL_NAMES[5],
            Self::OrthogonalArc { .. } => MODEL_NAMES[6],
            Self::Helix { .. } => MODEL_NAMES[7],
        }
    }

    /// `M` nodes, uniform in arclength.
    pub fn sample(&self, m: usize) -> Result<DiscreteCurve> {
        if m < 2 {
            return Err(Error::InvalidCurve(format!("need >= 2 nodes, got {m}")));
        }
        let frac = |i: usize| i as f64 / (m - 1) as f64;
        let pts: Vec<Vec<f64>> = match self {
            Self::Chord { p, q } => {
                if p.len() != q.len() {
                    return Err(Error::InvalidConfig("chord endpoints differ in dimension".into()));
                }
                (0..m)
                    .map(|i| {
                        let mut x = p.clone();
                        axpy(frac(i), &sub(q, p), &mut x);
                        x
                    })
                    .collect()
            }
            Self::Line { point, direction, half_length } => {
                positive("half_length", *half_length)?;
                let d = normalized(direction).ok_or_else(|| Error::InvalidConfig("zero line direction".into()))?;
                (0..m)
                    .map(|i| {
                        let mut x = point.clone();
                        axpy((2.0 * frac(i) - 1.0) * half_length, &d, &mut x);
                        x
                    })
                    .collect()
            }
            Self::Circle { center, radius, basis } => {
                positive("radius", *radius)?;
                let e = plane_basis(center.len(), basis)?;
                return DiscreteCurve::from_points(
                    &(0..m)
                        .map(|i| {
                            let th = 2.0 * PI * i as f64 / m as f64;
                            plane_point(center, &e, radius * th.cos(), radius * th.sin())
                        })
                        .collect::<Vec<_>>(),
                    true,
                );
            }
            Self::Semicircle { center, radius, basis } => {
                positive("radius", *radius)?;
                let e = plane_basis(center.len(), basis)?;
                (0..m)
                    .map(|i| {
                        let th = PI * frac(i);
                        plane_point(center, &e, radius * th.cos(), radius * th.sin())
                    })
                    .collect()
            }
            Self::GrimReaper { offset, window, basis } => {
                let s_max = grim_window(*window)?;
                let e = plane_basis(offset.len(), basis)?;
                (0..m)
                    .map(|i| {
                        let (x, y) = grim_point(s_max * (2.0 * frac(i) - 1.0));
                        plane_point(offset, &e, x, y)
                    })
                    .collect()
            }
            Self::HalfGrimReaper { offset, window, basis } => {
                let s_max = grim_window(*window)?;
                let e = plane_basis(offset.len(), basis)?;
                (0..m)
                    .map(|i| {
                        let (x, y) = grim_point(s_max * frac(i));
                        plane_point(offset, &e, x, y)
                    })
                    .collect()
            }
            Self::OrthogonalArc { ball_center, ball_radius, arc_radius, basis } => {
                positive("ball_radius", *ball_radius)?;
                positive("arc_radius", *arc_radius)?;
                let e = plane_basis(ball_center.len(), basis)?;
                let d = (ball_radius.powi(2) + arc_radius.powi(2)).sqrt();
                let half_angle = (arc_radius / d).acos();
                (0..m)
                    .map(|i| {
                        let phi = half_angle * (2.0 * frac(i) - 1.0);
                        plane_point(ball_center, &e, d - arc_radius * phi.cos(), arc_radius * phi.sin())
                    })
                    .collect()
            }
            Self::Helix { radius, pitch, turns } => {
                positive("radius", *radius)?;
                positive("turns", *turns)?;
                (0..m)
                    .map(|i| {
                        let th = 2.0 * PI * turns * frac(i);
                        vec![radius * th.cos(), radius * th.sin(), pitch * th]
                    })
                    .collect()
            }
        };
        DiscreteCurve::from_points(&pts, false)
    }

    /// The barrier the model is built to meet orthogonally, if any.
    pub fn barrier(&self) -> Result<Option<Barrier>> {
        Ok(match self {
            Self::Semicircle { center, basis, .. } => {
                let e = plane_basis(center.len(), basis)?;
                let nu = scale(&e[1], -1.0);
                Some(Barrier::flat(&nu, dot(&nu, center))?)
            }
            Self::HalfGrimReaper { offset, basis, .. } => {
                let e = plane_basis(offset.len(), basis)?;
                let nu = scale(&e[0], -1.0);
                Some(Barrier::flat(&nu, dot(&nu, offset))?)
            }
            Self::OrthogonalArc { ball_center, ball_radius, .. } => Some(Barrier::sphere(ball_center, *ball_radius)?),
            _ => None,
        })
    }

    /// Extinction time `r^2 / 2` of the shrinking kinds.
    pub fn extinction_time(&self) -> Option<f64> {
        match self {
            Self::Circle { radius, .. } | Self::Semicircle { radius, .. } => Some(0.5 * radius * radius),
            _ => None,
        }
    }

    /// Point the shrinking kinds collapse to.
    pub fn extinction_point(&self) -> Option<Vec<f64>> {
        match self {
            Self::Circle { center, .. } | Self::Semicircle { center, .. } => Some(center.clone()),
            _ => None,
        }
    }

    /// The model's closed-form flow at time `t`.
    pub fn at_time(&self, t: f64) -> Result<Self> {
        match self {
            Self::Circle { radius, .. } | Self::Semicircle { radius, .. } => {
                let t_ext = 0.5 * radius * radius;
                if t >= t_ext {
                    return Err(Error::NotBeforeSingularTime { t, t_sing: t_ext });
                }
                let r = (radius * radius - 2.0 * t).sqrt();
                let mut out = self.clone();
                match &mut out {
                    Self::Circle { radius, .. } | Self::Semicircle { radius, .. } => *radius = r,
                    _ => unreachable!(),
                }
                Ok(out)
            }
            Self::GrimReaper { offset, window, basis } | Self::HalfGrimReaper { offset, window, basis } => {
                let e = plane_basis(offset.len(), basis)?;
                let mut moved = offset.clone();
                axpy(t, &e[1], &mut moved);
                Ok(match self {
                    Self::GrimReaper { .. } => Self::GrimReaper { offset: moved, window: *window, basis: basis.clone() },
                    _ => Self::HalfGrimReaper { offset: moved, window: *window, basis: basis.clone() },
                })
            }
            Self::Chord { .. } | Self::Line { .. } => Ok(self.clone()),
            Self::OrthogonalArc { .. } | Self::Helix { .. } => {
                Err(Error::InvalidConfig(format!("{} has no closed-form flow", self.name())))
            }
        }
    }
}

/// Closed-form flow of `model` at time `t`, sampled with `m` nodes.
pub fn exact_state(model: &ModelCurve, t: f64, m: usize) -> Result<DiscreteCurve> {
    model.at_time(t)?.sample(m)
}

fn directed_hausdorff(a: &DiscreteCurve, b: &DiscreteCurve) -> f64 {
    let segs: Vec<(usize, usize)> = if b.len() == 1 {
        vec![(0, 0)]
    } else {
        let n = if b.is_closed() { b.len() } else { b.len() - 1 };
        (0..n).map(|i| (i, (i + 1) % b.len())).collect()
    };
    a.nodes()
        .map(|p| segs.iter().map(|&(i, j)| dist_to_segment(p, b.node(i), b.node(j))).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between the node sets and the other curve's
/// piecewise-linear interpolant.
pub fn hausdorff_distance(a: &DiscreteCurve, b: &DiscreteCurve) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidCurve("hausdorff distance of an empty curve".into()));
    }
    if a.dim() != b.dim() {
        return Err(Error::InvalidCurve("dimension mismatch".into()));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// Largest distance between corresponding nodes.
pub fn max_node_displacement(a: &DiscreteCurve, b: &DiscreteCurve) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::MismatchedNodes(a.len(), b.len()));
    }
    if a.dim() != b.dim() {
        return Err(Error::InvalidCurve("dimension mismatch".into()));
    }
    Ok(a.nodes().zip(b.nodes()).map(|(p, q)| dist(p, q)).fold(0.0, f64::max))
}

/// Adds `amplitude * sum_k c_k (1 - cos 2 pi k u) / (2 modes)` along
/// `direction`, with `u` the arclength fraction and `c_k` uniform in
/// `[-1, 1]` drawn from a PCG32 stream (`next_u32 / 2^32`). Endpoints and
/// endpoint tangents are unchanged.
pub fn perturb(curve: &DiscreteCurve, direction: &[f64], amplitude: f64, modes: usize, seed: u64) -> Result<DiscreteCurve> {
    if direction.len() != curve.dim() {
        return Err(Error::InvalidConfig("perturbation direction dimension mismatch".into()));
    }
    let d = normalized(direction).ok_or_else(|| Error::InvalidConfig("zero perturbation direction".into()))?;
    let mut rng = Pcg32::seed_from_u64(seed);
    let coeffs: Vec<f64> = (0..modes).map(|_| 2.0 * (rng.next_u32() as f64 / 4294967296.0) - 1.0).collect();
    let u = curve.arclength_fractions();
    let mut coords = curve.coords().to_vec();
    let dim = curve.dim();
    for (i, ui) in u.iter().enumerate() {
        let w: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * (1.0 - (2.0 * PI * (k + 1) as f64 * ui).cos()) / 2.0)
            .sum::<f64>()
            / modes.max(1) as f64;
        axpy(amplitude * w, &d, &mut coords[i * dim..(i + 1) * dim]);
    }
    DiscreteCurve::new(dim, coords, curve.is_closed())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyModel {
    Line,
    Circle,
    Semicircle,
    GrimReaper,
    HalfGrimReaper,
}

/// Nodes per unit `sqrt(sigma_hat)` in model entropy quadrature.
const NODES_PER_SCALE: f64 = 32.0;

/// Gaussian functional restricted to nodes within `cut` of the center.
fn windowed_functional(curve: &DiscreteCurve, s: f64, center: &[f64], cut: f64, barrier: Option<&Barrier>) -> Result<f64> {
    let kernel = |x: &[f64]| -> Result<f64> {
        let mut f = 0.0;
        if dist(x, center) <= cut {
            f += gaussian_rho(&sub(x, center), s, 1)?;
        }
        if let Some(b) = barrier {
            if let Ok(xt) = b.reflect(x) {
                if dist(&xt, center) <= cut {
                    f += gaussian_rho(&sub(&xt, center), s, 1)?;
                }
            }
        }
        Ok(f)
    };
    let f: Vec<f64> = curve.nodes().map(kernel).collect::<Result<_>>()?;
    let m = curve.len();
    Ok(curve.chords().iter().enumerate().map(|(i, c)| 0.5 * (f[i] + f[(i + 1) % m]) * c).sum())
}

/// Grim Reaper nodes at `s = k h` for `|s| <= s_max` (or `s >= 0` when half).
fn grim_nodes(h: f64, s_max: f64, half: bool) -> Result<DiscreteCurve> {
    let k_max = (s_max / h).ceil() as i64;
    let k_min = if half { 0 } else { -k_max };
    let pts: Vec<[f64; 2]> = (k_min..=k_max)
        .map(|k| {
            let (x, y) = grim_point(k as f64 * h);
            [x, y]
        })
        .collect();
    DiscreteCurve::from_points(&pts, false)
}

/// Largest Gaussian functional found for a planar model over scales
/// `sigma_hat = 2^k` in `[1/64, W^2]` (plus `W^2` itself) and a model
/// specific center grid, integrating only within `W sqrt(sigma_hat)` of the
/// center. Grim Reaper centers sit on the symmetry axis at heights up to
/// `W sqrt(sigma_hat)` above the tip. The value is nondecreasing in `W`.
pub fn model_entropy(kind: EntropyModel, window: f64) -> Result<f64> {
    if !(window >= 5.0) {
        return Err(Error::WindowTooSmall(window));
    }
    let mut scales: Vec<f64> = (-6..).map(|k| 2f64.powi(k)).take_while(|s| *s <= window * window).collect();
    if scales.last() != Some(&(window * window)) {
        scales.push(window * window);
    }
    let flat_y = Barrier::flat(&[0.0, -1.0], 0.0)?;
    let flat_x = Barrier::flat(&[-1.0, 0.0], 0.0)?;
    let circle = ModelCurve::Circle { center: vec![0.0, 0.0], radius: 1.0, basis: None }.sample(4096)?;
    let semicircle = ModelCurve::Semicircle { center: vec![0.0, 0.0], radius: 1.0, basis: None }.sample(2049)?;
    let mut best = 0.0f64;
    for &s in &scales {
        let root = s.sqrt();
        let cut = window * root;
        let value = match kind {
            EntropyModel::Line => {
                let h = root / NODES_PER_SCALE;
                let n = (cut / h).ceil() as i64;
                let pts: Vec<[f64; 2]> = (-n..=n).map(|k| [k as f64 * h, 0.0]).collect();
                let line = DiscreteCurve::from_points(&pts, false)?;
                windowed_functional(&line, s, &[0.0, 0.0], cut, None)?
            }
            EntropyModel::Circle | EntropyModel::Semicircle => {
                let mut v = 0.0f64;
                for i in -4..=4 {
                    for j in -4..=4 {
                        let c = [0.25 * i as f64, 0.25 * j as f64];
                        v = v.max(match kind {
                            EntropyModel::Circle => windowed_functional(&circle, s, &c, cut, None)?,
                            _ if j >= 0 => windowed_functional(&semicircle, s, &c, cut, Some(&flat_y))?,
                            _ => 0.0,
                        });
                    }
                }
                v
            }
            EntropyModel::GrimReaper | EntropyModel::HalfGrimReaper => {
                let half = kind == EntropyModel::HalfGrimReaper;
                let h = (root / NODES_PER_SCALE).min(0.02);
                let curve = grim_nodes(h, 2.0 * cut + 2.0, half)?;
                let barrier = half.then_some(&flat_x);
                let steps = (4.0 * window).round() as i64;
                let mut v = 0.0f64;
                for k in 0..=steps {
                    let y = k as f64 * cut / steps as f64;
                    v = v.max(windowed_functional(&curve, s, &[0.0, y], cut, barrier)?);
                }
                v
            }
        };
        best = best.max(value);
    }
    Ok(best)
}
