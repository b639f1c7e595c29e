//! Smooth barrier hypersurfaces `dOmega = {F = 0}` with `Omega = {F <= 0}`.
//!
//! Each barrier supplies the outward unit normal `grad F / |grad F|`, the
//! nearest-point projection `zeta`, the reflection `2 zeta(x) - x` and the
//! second fundamental form. Sign convention, fixed project-wide:
//!
//! ```text
//! II(u, v) = -<Hess F(p) u, v> / |grad F(p)|
//! ```
//!
//! so that a sphere of radius `R` bounding its interior has
//! `II(u, u) = -|u|^2 / R`, and `D_u nu = -S(u)` with `<S(u), v> = II(u, v)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::vecmath::{axpy, dist, dot, norm, normalized, reject, scale, sub, unit};

/// User-supplied implicit surface oracle. Hessians are row-major `d x d`.
pub trait ImplicitSurface: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Clone)]
pub enum BarrierKind {
    /// `F(x) = <n, x> - offset` with unit outward normal `n`.
    FlatHalfspace { normal: Vec<f64>, offset: f64 },
    /// `F(x) = |x - c|^2 - R^2`.
    Sphere { center: Vec<f64>, radius: f64 },
    /// `F(x) = sum ((x_i - c_i) / a_i)^2 - 1`.
    Ellipsoid { center: Vec<f64>, semi_axes: Vec<f64> },
    Implicit(Arc<dyn ImplicitSurface>),
}

impl fmt::Debug for BarrierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FlatHalfspace { normal, offset } => f
                .debug_struct("FlatHalfspace")
                .field("normal", normal)
                .field("offset", offset)
                .finish(),
            Self::Sphere { center, radius } => f
                .debug_struct("Sphere")
                .field("center", center)
                .field("radius", radius)
                .finish(),
            Self::Ellipsoid { center, semi_axes } => f
                .debug_struct("Ellipsoid")
                .field("center", center)
                .field("semi_axes", semi_axes)
                .finish(),
            Self::Implicit(s) => write!(f, "Implicit(dim = {})", s.dim()),
        }
    }
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone)]
pub struct Barrier {
    kind: BarrierKind,
    tubular_radius: f64,
    curvature_bound: f64,
}

impl Barrier {
    pub fn flat(normal: &[f64], offset: f64) -> Result<Self> {
        let n = norm(normal);
        if !(n > 0.0) {
            return Err(Error::InvalidConfig("flat barrier normal must be nonzero".into()));
        }
        Ok(Self {
            kind: BarrierKind::FlatHalfspace { normal: scale(normal, 1.0 / n), offset: offset / n },
            tubular_radius: f64::INFINITY,
            curvature_bound: 0.0,
        })
    }

    pub fn sphere(center: &[f64], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidConfig(format!("sphere radius must be positive, got {radius}")));
        }
        Ok(Self {
            kind: BarrierKind::Sphere { center: center.to_vec(), radius },
            tubular_radius: radius,
            curvature_bound: 1.0 / radius,
        })
    }

    pub fn ellipsoid(center: &[f64], semi_axes: &[f64]) -> Result<Self> {
        if center.len() != semi_axes.len() || semi_axes.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidConfig("ellipsoid needs positive semi-axes matching the center".into()));
        }
        let amin = semi_axes.iter().copied().fold(f64::INFINITY, f64::min);
        let amax = semi_axes.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            kind: BarrierKind::Ellipsoid { center: center.to_vec(), semi_axes: semi_axes.to_vec() },
            // smallest principal radius of curvature
            tubular_radius: amin * amin / amax,
            curvature_bound: amax / (amin * amin),
        })
    }

    /// Wraps a user oracle with a conservative tubular radius and a bound on
    /// `|II|` over the working region.
    pub fn implicit(surface: Arc<dyn ImplicitSurface>, tubular_radius: f64, curvature_bound: f64) -> Result<Self> {
        if !(tubular_radius > 0.0) || !(curvature_bound >= 0.0) {
            return Err(Error::InvalidConfig("implicit barrier needs rho_tub > 0 and K >= 0".into()));
        }
        Ok(Self { kind: BarrierKind::Implicit(surface), tubular_radius, curvature_bound })
    }

    pub fn kind(&self) -> &BarrierKind {
        &self.kind
    }

    pub fn tubular_radius(&self) -> f64 {
        self.tubular_radius
    }

    pub fn curvature_bound(&self) -> f64 {
        self.curvature_bound
    }

    /// Largest admissible kernel cut-off radius, `rho_tub / 8`.
    pub fn max_cutoff_radius(&self) -> f64 {
        self.tubular_radius / 8.0
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, BarrierKind::FlatHalfspace { .. })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            BarrierKind::FlatHalfspace { normal, offset } => dot(normal, x) - offset,
            BarrierKind::Sphere { center, radius } => {
                let v = sub(x, center);
                dot(&v, &v) - radius * radius
            }
            BarrierKind::Ellipsoid { center, semi_axes } => {
                x.iter()
                    .zip(center)
                    .zip(semi_axes)
                    .map(|((xi, ci), ai)| ((xi - ci) / ai).powi(2))
                    .sum::<f64>()
                    - 1.0
            }
            BarrierKind::Implicit(s) => s.value(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            BarrierKind::FlatHalfspace { normal, .. } => normal.clone(),
            BarrierKind::Sphere { center, .. } => scale(&sub(x, center), 2.0),
            BarrierKind::Ellipsoid { center, semi_axes } => x
                .iter()
                .zip(center)
                .zip(semi_axes)
                .map(|((xi, ci), ai)| 2.0 * (xi - ci) / (ai * ai))
                .collect(),
            BarrierKind::Implicit(s) => s.gradient(x),
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut h = vec![0.0; d * d];
        match &self.kind {
            BarrierKind::FlatHalfspace { .. } => {}
            BarrierKind::Sphere { .. } => (0..d).for_each(|i| h[i * d + i] = 2.0),
            BarrierKind::Ellipsoid { semi_axes, .. } => {
                (0..d).for_each(|i| h[i * d + i] = 2.0 / (semi_axes[i] * semi_axes[i]))
            }
            BarrierKind::Implicit(s) => h = s.hessian(x),
        }
        h
    }

    /// Outward unit normal `grad F / |grad F|` (defined off the barrier too).
    pub fn normal(&self, x: &[f64]) -> Vec<f64> {
        normalized(&self.gradient(x)).unwrap_or_else(|| unit(x.len(), 0))
    }

    /// Nearest-point projection `zeta(x)` onto the barrier.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let zeta = match &self.kind {
            BarrierKind::FlatHalfspace { normal, offset } => {
                let mut z = x.to_vec();
                axpy(-(dot(normal, x) - offset), normal, &mut z);
                z
            }
            BarrierKind::Sphere { center, radius } => {
                let v = sub(x, center);
                let r = norm(&v);
                if !(r > 0.0) {
                    return Err(Error::ProjectionNotUnique { distance: *radius, tubular_radius: self.tubular_radius });
                }
                let mut z = center.clone();
                axpy(radius / r, &v, &mut z);
                z
            }
            _ => self.newton_project(x)?,
        };
        let d = dist(x, &zeta);
        if d >= self.tubular_radius {
            return Err(Error::ProjectionNotUnique { distance: d, tubular_radius: self.tubular_radius });
        }
        Ok(zeta)
    }

    /// Damped Newton on the Lagrange system `y - x + lambda grad F(y) = 0`,
    /// `F(y) = 0`, seeded by one Newton step on `F` along the gradient.
    fn newton_project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = x.len();
        let g0 = self.gradient(x);
        let g0n2 = dot(&g0, &g0);
        if !(g0n2 > 0.0) {
            return Err(Error::ProjectionNotUnique { distance: f64::NAN, tubular_radius: self.tubular_radius });
        }
        let mut y = x.to_vec();
        axpy(-self.value(x) / g0n2, &g0, &mut y);
        let gy = self.gradient(&y);
        let mut lambda = dot(&sub(x, &y), &gy) / dot(&gy, &gy).max(f64::MIN_POSITIVE);

        let residual = |y: &[f64], lambda: f64| -> Vec<f64> {
            let g = self.gradient(y);
            let mut r: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
            axpy(lambda, &g, &mut r);
            r.push(self.value(y));
            r
        };
        let tol = NEWTON_TOL * (1.0 + norm(x));
        let mut res = residual(&y, lambda);
        for _ in 0..NEWTON_MAX_ITER {
            let rn = norm(&res);
            if rn <= tol {
                return Ok(y);
            }
            let g = self.gradient(&y);
            let hess = self.hessian(&y);
            let mut jac = DMatrix::<f64>::zeros(d + 1, d + 1);
            for i in 0..d {
                for j in 0..d {
                    jac[(i, j)] = lambda * hess[i * d + j] + if i == j { 1.0 } else { 0.0 };
                }
                jac[(i, d)] = g[i];
                jac[(d, i)] = g[i];
            }
            let rhs = -DVector::from_vec(res.clone());
            let Some(step) = jac.lu().solve(&rhs) else {
                return Err(Error::ProjectionDiverged(NEWTON_MAX_ITER));
            };
            let mut alpha = 1.0;
            loop {
                let y_try: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
                let l_try = lambda + alpha * step[d];
                let r_try = residual(&y_try, l_try);
                if norm(&r_try) < rn || alpha < 1e-6 {
                    y = y_try;
                    lambda = l_try;
                    res = r_try;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if norm(&res) <= 1e3 * tol {
            Ok(y)
        } else {
            Err(Error::ProjectionDiverged(NEWTON_MAX_ITER))
        }
    }

    /// Reflection `2 zeta(x) - x` across the barrier.
    pub fn reflect(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.project(x)?;
        Ok(z.iter().zip(x).map(|(zi, xi)| 2.0 * zi - xi).collect())
    }

    /// Signed distance (positive outside `Omega`).
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            BarrierKind::FlatHalfspace { normal, offset } => Ok(dot(normal, x) - offset),
            BarrierKind::Sphere { center, radius } => Ok(norm(&sub(x, center)) - radius),
            _ => {
                let z = self.project(x)?;
                Ok(dist(x, &z).copysign(self.value(x)))
            }
        }
    }

    fn check_on_barrier(&self, p: &[f64]) -> Result<f64> {
        let g = norm(&self.gradient(p));
        let off = self.value(p).abs() / g.max(f64::MIN_POSITIVE);
        if off > 1e-8 {
            return Err(Error::OffBarrier(off));
        }
        Ok(g)
    }

    fn check_tangent(&self, p: &[f64], u: &[f64]) -> Result<()> {
        let c = dot(u, &self.normal(p));
        if c.abs() > 1e-8 * norm(u).max(1.0) {
            return Err(Error::NotTangent(c));
        }
        Ok(())
    }

    /// `II(u, v)` at a barrier point `p` for tangent vectors `u`, `v`.
    pub fn second_fundamental_form(&self, p: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        let g = self.check_on_barrier(p)?;
        self.check_tangent(p, u)?;
        self.check_tangent(p, v)?;
        let d = p.len();
        let h = self.hessian(p);
        let hu: Vec<f64> = (0..d).map(|i| dot(&h[i * d..(i + 1) * d], u)).collect();
        Ok(-dot(&hu, v) / g)
    }

    /// Shape operator `S(u)`, the tangent vector with `<S(u), v> = II(u, v)`.
    pub fn shape_operator(&self, p: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let g = self.check_on_barrier(p)?;
        self.check_tangent(p, u)?;
        let d = p.len();
        let h = self.hessian(p);
        let hu: Vec<f64> = (0..d).map(|i| dot(&h[i * d..(i + 1) * d], u)).collect();
        let n = self.normal(p);
        Ok(scale(&reject(&hu, &[&n]), -1.0 / g))
    }

    /// Orthonormal basis of the tangent space `T_p dOmega`.
    pub fn tangent_basis(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let n = self.normal(p);
        let d = p.len();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
        for k in 0..d {
            let mut span: Vec<&[f64]> = vec![&n];
            span.extend(basis.iter().map(|b| b.as_slice()));
            let w = reject(&unit(d, k), &span);
            if norm(&w) > 1e-6 {
                basis.push(normalized(&w).unwrap());
            }
            if basis.len() == d - 1 {
                break;
            }
        }
        basis
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        dist(a, b) <= tol
    }

    /// Dense sampling of the ellipse boundary for the nearest point.
    fn ellipse_nearest_by_sampling(a: f64, b: f64, x: &[f64]) -> Vec<f64> {
        let n = 2_000_000;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..n {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let d = (a * th.cos() - x[0]).powi(2) + (b * th.sin() - x[1]).powi(2);
            if d < best.0 {
                best = (d, th);
            }
        }
        // refine by golden-section on the bracket
        let (mut lo, mut hi) = (best.1 - 1e-5, best.1 + 1e-5);
        let f = |th: f64| (a * th.cos() - x[0]).powi(2) + (b * th.sin() - x[1]).powi(2);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let th = 0.5 * (lo + hi);
        vec![a * th.cos(), b * th.sin()]
    }

    #[test]
    fn sphere_projection_is_radial() {
        let s = Barrier::sphere(&[0.0, 0.0, 0.0], 2.0).unwrap();
        assert!(close(&s.project(&[3.0, 0.0, 0.0]).unwrap(), &[2.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn flat_projection_drops_normal_coordinate() {
        let f = Barrier::flat(&[1.0, 0.0, 0.0], 0.0).unwrap();
        assert!(close(&f.project(&[0.3, 5.0, -1.0]).unwrap(), &[0.0, 5.0, -1.0], 1e-15));
    }

    #[test]
    fn ellipse_projection_matches_dense_sampling() {
        let e = Barrier::ellipsoid(&[0.0, 0.0], &[2.0, 1.0]).unwrap();
        let x = [2.2, 0.01];
        let z = e.project(&x).unwrap();
        let oracle = ellipse_nearest_by_sampling(2.0, 1.0, &x);
        assert!(close(&z, &oracle, 1e-6), "{z:?} vs {oracle:?}");
        assert!(e.value(&z).abs() < 1e-10);
        let n = e.normal(&z);
        let d = sub(&x, &z);
        let sin_angle = norm(&reject(&d, &[&n])) / norm(&d);
        assert!(sin_angle < 1e-6);
    }

    #[test]
    fn reflections() {
        let f = Barrier::flat(&[1.0, 0.0], 0.0).unwrap();
        assert!(close(&f.reflect(&[-0.4, 1.0]).unwrap(), &[0.4, 1.0], 1e-15));
        let s = Barrier::sphere(&[0.0, 0.0, 0.0], 1.0).unwrap();
        assert!(close(&s.reflect(&[0.9, 0.0, 0.0]).unwrap(), &[1.1, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn projection_outside_tube_fails() {
        let s = Barrier::sphere(&[0.0, 0.0], 1.0).unwrap();
        assert!(matches!(s.project(&[0.0, 0.0]), Err(Error::ProjectionNotUnique { .. })));
        assert!(matches!(s.project(&[2.5, 0.0]), Err(Error::ProjectionNotUnique { .. })));
        let e = Barrier::ellipsoid(&[0.0, 0.0], &[2.0, 1.0]).unwrap();
        assert!(matches!(e.project(&[0.0, 0.0]), Err(Error::ProjectionNotUnique { .. })));
    }

    #[test]
    fn sphere_second_fundamental_form() {
        // F = |x|^2 - R^2: Hess = 2I, |grad F| = 2R, so II(u,u) = -|u|^2/R.
        let s = Barrier::sphere(&[0.0, 0.0, 0.0], 2.0).unwrap();
        let p = [0.0, 2.0, 0.0];
        let u = [0.6, 0.0, 0.8];
        assert!((s.second_fundamental_form(&p, &u, &u).unwrap() + 0.5).abs() < 1e-14);
        let flat = Barrier::flat(&[0.0, 0.0, 1.0], 0.0).unwrap();
        assert_eq!(flat.second_fundamental_form(&[1.0, 2.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn ellipse_vertex_curvature() {
        // The ellipse x^2/a^2 + y^2/b^2 = 1 has curvature a/b^2 at (a, 0).
        let (a, b) = (2.0, 1.0);
        let e = Barrier::ellipsoid(&[0.0, 0.0], &[a, b]).unwrap();
        let ii = e.second_fundamental_form(&[2.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!((ii + a / (b * b)).abs() < 1e-12, "{ii}");
    }

    #[test]
    fn non_tangent_and_off_barrier_inputs_fail() {
        let s = Barrier::sphere(&[0.0, 0.0], 1.0).unwrap();
        assert!(matches!(
            s.second_fundamental_form(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]),
            Err(Error::NotTangent(_))
        ));
        assert!(matches!(
            s.second_fundamental_form(&[1.1, 0.0], &[0.0, 1.0], &[0.0, 1.0]),
            Err(Error::OffBarrier(_))
        ));
    }

    #[test]
    fn normal_derivative_is_minus_shape_operator() {
        let e = Barrier::ellipsoid(&[0.1, -0.2, 0.3], &[2.0, 1.0, 1.5]).unwrap();
        let p = e.project(&[1.0, 0.9, 0.7]).unwrap();
        let basis = e.tangent_basis(&p);
        for u in &basis {
            let step = 1e-6;
            let mut q = p.clone();
            axpy(step, u, &mut q);
            let q = e.project(&q).unwrap();
            let dn = scale(&sub(&e.normal(&q), &e.normal(&p)), 1.0 / step);
            let s = e.shape_operator(&p, u).unwrap();
            for v in &basis {
                assert!((dot(&dn, v) + dot(&s, v)).abs() < 1e-4);
                assert!((dot(&s, v) - e.second_fundamental_form(&p, u, v).unwrap()).abs() < 1e-12);
            }
        }
    }
}
