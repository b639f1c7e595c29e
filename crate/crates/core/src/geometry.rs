//! Discrete arcs and loops sampled at uniform arclength, together with the
//! finite-difference Frenet apparatus (tangent, curvature vector, normal,
//! binormals and torsions) used by the flow and the identity checks.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stencil;
use crate::vecmath::{axpy, cross3, dist, dot, norm, normalized, reject, scale, sub};

/// Ordered nodes in `R^d` sampling an open arc or a closed loop.
///
/// Coordinates are stored row-major, one row of length `dim` per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCurve {
    dim: usize,
    coords: Vec<f64>,
    spacing: f64,
    closed: bool,
}

impl DiscreteCurve {
    /// Builds a curve from row-major coordinates. The spacing is the mean
    /// chord length.
    pub fn new(dim: usize, coords: Vec<f64>, closed: bool) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidCurve(format!("ambient dimension {dim} < 2")));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidCurve(format!(
                "{} coordinates is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite coordinate {bad}")));
        }
        let mut curve = Self { dim, coords, spacing: 0.0, closed };
        curve.spacing = curve.mean_chord();
        Ok(curve)
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P], closed: bool) -> Result<Self> {
        let dim = points.first().map(|p| p.as_ref().len()).unwrap_or(2);
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::InvalidCurve("points of mixed dimension".into()));
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords, closed)
    }

    /// An empty curve in `R^dim` (zero nodes, zero length).
    pub fn empty(dim: usize) -> Self {
        Self { dim, coords: Vec::new(), spacing: 0.0, closed: false }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    fn segment_count(&self) -> usize {
        let m = self.len();
        match (self.closed, m) {
            (_, 0 | 1) => 0,
            (true, _) => m,
            (false, _) => m - 1,
        }
    }

    /// Chord lengths between consecutive nodes (including the closing chord
    /// of a loop).
    pub fn chords(&self) -> Vec<f64> {
        let m = self.len();
        (0..self.segment_count())
            .map(|k| dist(self.node(k), self.node((k + 1) % m)))
            .collect()
    }

    /// Total length of the piecewise-linear interpolant.
    pub fn length(&self) -> f64 {
        self.chords().iter().sum()
    }

    fn mean_chord(&self) -> f64 {
        let n = self.segment_count();
        if n == 0 {
            0.0
        } else {
            self.length() / n as f64
        }
    }

    pub fn barycenter(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.nodes() {
            axpy(1.0, p, &mut c);
        }
        scale(&c, 1.0 / self.len().max(1) as f64)
    }

    /// Applies `f` to every node and recomputes the spacing.
    pub fn map_nodes(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let coords: Vec<f64> = self.nodes().flat_map(|p| f(p)).collect();
        Self::new(self.dim, coords, self.closed)
    }

    /// Arclength fraction `u_i in [0, 1]` of each node along the polyline.
    pub fn arclength_fractions(&self) -> Vec<f64> {
        let chords = self.chords();
        let total: f64 = chords.iter().sum();
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for c in chords.iter().take(self.len().saturating_sub(1)) {
            acc += c;
            out.push(if total > 0.0 { acc / total } else { 0.0 });
        }
        out
    }

    /// Largest relative deviation of a chord from the nominal spacing.
    pub fn spacing_deviation(&self) -> f64 {
        if self.spacing <= 0.0 {
            return 0.0;
        }
        self.chords()
            .iter()
            .map(|c| (c - self.spacing).abs() / self.spacing)
            .fold(0.0, f64::max)
    }
}

/// Resamples `curve` to `target_m` nodes at uniform arclength along its
/// piecewise-linear interpolant. Endpoints of open curves are preserved
/// exactly; loops keep node 0 fixed.
pub fn resample_arclength(curve: &DiscreteCurve, target_m: usize) -> Result<DiscreteCurve> {
    if curve.len() < 2 {
        return Err(Error::InvalidCurve(format!("resampling needs >= 2 nodes, got {}", curve.len())));
    }
    if target_m < 2 {
        return Err(Error::InvalidCurve(format!("target node count {target_m} < 2")));
    }
    let chords = curve.chords();
    let total: f64 = chords.iter().sum();
    if !(total > 1e-14) {
        return Err(Error::CollapsedCurve);
    }
    let m = curve.len();
    let dim = curve.dim();
    let intervals = if curve.closed { target_m } else { target_m - 1 };
    let step = total / intervals as f64;

    let mut coords = Vec::with_capacity(target_m * dim);
    coords.extend_from_slice(curve.node(0));
    let mut seg = 0usize;
    let mut seg_start = 0.0;
    for k in 1..target_m {
        let s = k as f64 * step;
        while seg + 1 < chords.len() && seg_start + chords[seg] < s {
            seg_start += chords[seg];
            seg += 1;
        }
        let a = curve.node(seg);
        let b = curve.node((seg + 1) % m);
        let frac = if chords[seg] > 0.0 {
            ((s - seg_start) / chords[seg]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if !curve.closed && k == target_m - 1 {
            coords.extend_from_slice(curve.node(m - 1));
        } else {
            coords.extend(a.iter().zip(b).map(|(x, y)| x + frac * (y - x)));
        }
    }
    DiscreteCurve::new(dim, coords, curve.closed)
}

/// Like [`resample_arclength`] but places the new nodes on the cubic
/// (four-point Lagrange) interpolant in the chord-length parameter, so
/// repeated resampling of a smooth curve moves nodes off it by `O(h^4)`
/// rather than `O(h^2)`. Target positions are still uniform in the
/// polygon's arclength.
pub fn resample_arclength_cubic(curve: &DiscreteCurve, target_m: usize) -> Result<DiscreteCurve> {
    let m = curve.len();
    if m < 4 {
        return resample_arclength(curve, target_m);
    }
    if target_m < 2 {
        return Err(Error::InvalidCurve(format!("target node count {target_m} < 2")));
    }
    let chords = curve.chords();
    let total: f64 = chords.iter().sum();
    if !(total > 1e-14) {
        return Err(Error::CollapsedCurve);
    }
    let dim = curve.dim();
    let closed = curve.closed;
    let mut knots = Vec::with_capacity(chords.len() + 1);
    knots.push(0.0);
    for c in &chords {
        knots.push(knots.last().unwrap() + c);
    }
    // knot parameter and node of extended index j (wrapping for loops)
    let knot = |j: isize| -> f64 {
        if closed {
            let n = m as isize;
            let wraps = j.div_euclid(n);
            knots[j.rem_euclid(n) as usize] + wraps as f64 * total
        } else {
            knots[j as usize]
        }
    };
    let node = |j: isize| -> &[f64] {
        if closed {
            curve.node(j.rem_euclid(m as isize) as usize)
        } else {
            curve.node(j as usize)
        }
    };
    let intervals = if closed { target_m } else { target_m - 1 };
    let step = total / intervals as f64;
    let mut coords = Vec::with_capacity(target_m * dim);
    coords.extend_from_slice(curve.node(0));
    let mut seg = 0usize;
    for k in 1..target_m {
        if !closed && k == target_m - 1 {
            coords.extend_from_slice(curve.node(m - 1));
            break;
        }
        let s = k as f64 * step;
        while seg + 1 < chords.len() && knots[seg + 1] < s {
            seg += 1;
        }
        let mut first = seg as isize - 1;
        if !closed {
            first = first.clamp(0, m as isize - 4);
        }
        let idx = [first, first + 1, first + 2, first + 3];
        let ts = idx.map(knot);
        let mut p = vec![0.0; dim];
        for a in 0..4 {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (s - ts[b]) / (ts[a] - ts[b]);
                }
            }
            axpy(w, node(idx[a]), &mut p);
        }
        coords.extend(p);
    }
    DiscreteCurve::new(dim, coords, closed)
}

/// Default curvature degeneracy threshold `1e-8 / h`.
pub fn default_kappa_tol(spacing: f64) -> f64 {
    1e-8 / spacing
}

/// Per-node Frenet data. Fields that require `kappa > kappa_tol` are `None`
/// at degenerate nodes.
#[derive(Debug, Clone)]
pub struct FrenetData {
    pub dim: usize,
    pub spacing: f64,
    pub tangent: Vec<Vec<f64>>,
    pub kappa_vec: Vec<Vec<f64>>,
    pub kappa: Vec<f64>,
    pub normal: Vec<Option<Vec<f64>>>,
    pub binormal1: Vec<Option<Vec<f64>>>,
    pub binormal2: Vec<Option<Vec<f64>>>,
    pub tau1: Vec<Option<f64>>,
    pub tau2: Vec<Option<f64>>,
    pub kappa_tol: f64,
}

impl FrenetData {
    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn max_kappa(&self) -> f64 {
        self.kappa.iter().copied().fold(0.0, f64::max)
    }
}

/// Unit tangents and tangential-component-free second derivatives.
pub(crate) fn tangent_and_curvature(curve: &DiscreteCurve) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = curve.len();
    let h = curve.spacing();
    let closed = curve.is_closed();
    let get = |k: usize| Some(curve.node(k));
    let mut tangents = Vec::with_capacity(m);
    let mut kvecs = Vec::with_capacity(m);
    for i in 0..m {
        let d1 = stencil::d1(get, i, m, h, closed).expect("curve has >= 3 nodes");
        let t = normalized(&d1).unwrap_or_else(|| vec![0.0; curve.dim()]);
        let d2 = stencil::d2(get, i, m, h, closed).expect("curve has >= 4 nodes");
        let kv = reject(&d2, &[&t]);
        tangents.push(t);
        kvecs.push(kv);
    }
    (tangents, kvecs)
}

/// Gram-Schmidt direction of `v` against `basis`, oriented continuously with
/// `prev` when given. Falls back to the re-orthonormalised `prev` when `v`
/// has (numerically) no component outside the span.
fn oriented_direction(v: &[f64], basis: &[&[f64]], prev: Option<&[f64]>, floor: f64) -> Option<Vec<f64>> {
    let w = reject(v, basis);
    if norm(&w) > floor {
        let mut b = normalized(&w)?;
        if let Some(p) = prev {
            if dot(&b, p) < 0.0 {
                b.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Some(b)
    } else {
        prev.and_then(|p| normalized(&reject(p, basis)))
    }
}

/// Computes the discrete Frenet apparatus of a uniformly sampled curve.
///
/// Centered second-order stencils in the interior, one-sided second-order
/// stencils at the ends of open curves. In `R^3` the first binormal is
/// `T x N`; in higher dimensions binormals come from Gram-Schmidt with their
/// sign propagated by continuity from the first defined node.
pub fn compute_frenet(curve: &DiscreteCurve, kappa_tol: f64) -> Result<FrenetData> {
    let m = curve.len();
    if m < 5 {
        return Err(Error::InvalidCurve(format!("Frenet stencils need >= 5 nodes, got {m}")));
    }
    let dim = curve.dim();
    let h = curve.spacing();
    let closed = curve.is_closed();
    let (tangent, kappa_vec) = tangent_and_curvature(curve);
    let kappa: Vec<f64> = kappa_vec.iter().map(|k| norm(k)).collect();
    let normal: Vec<Option<Vec<f64>>> = kappa_vec
        .iter()
        .zip(&kappa)
        .map(|(kv, &k)| if k > kappa_tol { Some(scale(kv, 1.0 / k)) } else { None })
        .collect();

    let dn: Vec<Option<Vec<f64>>> = (0..m)
        .map(|i| stencil::d1(|k| normal[k].as_deref(), i, m, h, closed))
        .collect();

    let mut binormal1 = vec![None; m];
    let mut tau1 = vec![None; m];
    let mut prev: Option<Vec<f64>> = None;
    for i in 0..m {
        let (Some(n), Some(dni)) = (&normal[i], &dn[i]) else { continue };
        let t = &tangent[i];
        match dim {
            2 => tau1[i] = Some(0.0),
            3 => {
                let b = cross3(t, n);
                tau1[i] = Some(dot(dni, &b));
                binormal1[i] = Some(b);
            }
            _ => {
                let floor = 1e-9 * kappa[i].max(1.0);
                let b = oriented_direction(dni, &[t, n], prev.as_deref(), floor);
                tau1[i] = Some(match &b {
                    Some(b) => dot(dni, b),
                    None => 0.0,
                });
                if b.is_some() {
                    prev = b.clone();
                }
                binormal1[i] = b;
            }
        }
    }

    let mut binormal2 = vec![None; m];
    let mut tau2: Vec<Option<f64>> = tau1.iter().map(|t| t.map(|_| 0.0)).collect();
    if dim >= 4 {
        let db1: Vec<Option<Vec<f64>>> = (0..m)
            .map(|i| stencil::d1(|k| binormal1[k].as_deref(), i, m, h, closed))
            .collect();
        let mut prev: Option<Vec<f64>> = None;
        for i in 0..m {
            let (Some(n), Some(b1), Some(db)) = (&normal[i], &binormal1[i], &db1[i]) else {
                continue;
            };
            let t = &tangent[i];
            let floor = 1e-9 * kappa[i].max(1.0);
            let b2 = oriented_direction(db, &[t, n, b1], prev.as_deref(), floor);
            if let Some(b2) = &b2 {
                let mut v = db.clone();
                axpy(tau1[i].unwrap_or(0.0), n, &mut v);
                tau2[i] = Some(dot(&v, b2));
                prev = Some(b2.clone());
            }
            binormal2[i] = b2;
        }
    }

    Ok(FrenetData {
        dim,
        spacing: h,
        tangent,
        kappa_vec,
        kappa,
        normal,
        binormal1,
        binormal2,
        tau1,
        tau2,
        kappa_tol,
    })
}

/// Maximum node distance to the least-squares affine 2-plane through the
/// node cloud (spanned by the two leading principal directions).
pub fn best_fit_plane_deviation(curve: &DiscreteCurve) -> f64 {
    let m = curve.len();
    let d = curve.dim();
    if m < 3 || d <= 2 {
        return 0.0;
    }
    let c = curve.barycenter();
    let centered: Vec<Vec<f64>> = curve.nodes().map(|p| sub(p, &c)).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in &centered {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += p[a] * p[b];
            }
        }
    }
    cov /= m as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes: Vec<Vec<f64>> = order[..2]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    let axes_ref: Vec<&[f64]> = axes.iter().map(|a| a.as_slice()).collect();
    centered
        .iter()
        .map(|p| norm(&reject(p, &axes_ref)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(m: usize, r: f64, dim: usize) -> DiscreteCurve {
        let pts: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / m as f64;
                let mut p = vec![0.0; dim];
                p[0] = r * th.cos();
                p[1] = r * th.sin();
                p
            })
            .collect();
        DiscreteCurve::from_points(&pts, true).unwrap()
    }

    fn helix(m: usize, a: f64, b: f64, turns: f64) -> DiscreteCurve {
        let c = (a * a + b * b).sqrt();
        let len = 2.0 * PI * turns * c;
        let pts: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let u = len * i as f64 / (m - 1) as f64 / c;
                vec![a * u.cos(), a * u.sin(), b * u]
            })
            .collect();
        DiscreteCurve::from_points(&pts, false).unwrap()
    }

    #[test]
    fn resample_segment_uniform() {
        let c = DiscreteCurve::from_points(&[[0.0, 0.0], [1.0, 0.0]], false).unwrap();
        let r = resample_arclength(&c, 5).unwrap();
        let xs: Vec<f64> = r.nodes().map(|p| p[0]).collect();
        for (x, e) in xs.iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!((r.spacing() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn resample_irregular_circle() {
        // 100 irregular angles on the unit circle.
        let mut angles: Vec<f64> = (0..100)
            .map(|i| {
                let u = i as f64 / 100.0;
                2.0 * PI * (u + 0.3 * (u * u - u) * (1.0 + (7.0 * u).sin()) / 4.0)
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        let pts: Vec<[f64; 2]> = angles.iter().map(|t| [t.cos(), t.sin()]).collect();
        let c = DiscreteCurve::from_points(&pts, true).unwrap();
        let r = resample_arclength(&c, 64).unwrap();
        assert_eq!(r.len(), 64);
        for p in r.nodes() {
            assert!((norm(p) - 1.0).abs() < 1e-3);
        }
        assert!(r.spacing_deviation() < 0.01);
    }

    #[test]
    fn resample_is_idempotent_on_uniform_curves() {
        let c = circle(40, 1.3, 2);
        let r = resample_arclength(&c, 40).unwrap();
        for (a, b) in c.coords().iter().zip(r.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
        let open = helix(33, 1.0, 1.0, 1.0);
        let r = resample_arclength(&open, 33).unwrap();
        for (a, b) in open.coords().iter().zip(r.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_resample_is_third_order_on_the_circle() {
        let err = |m: usize| {
            let c = circle(m, 1.0, 2);
            let r = resample_arclength_cubic(&c, m + m / 2).unwrap();
            r.nodes().map(|p| (norm(p) - 1.0).abs()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(32), err(64));
        assert!(coarse / fine > 7.0, "{coarse:e} {fine:e}");
        let lin = resample_arclength(&circle(64, 1.0, 2), 96).unwrap();
        let lin_err = lin.nodes().map(|p| (norm(p) - 1.0).abs()).fold(0.0, f64::max);
        assert!(fine < 0.1 * lin_err);
    }

    #[test]
    fn cubic_resample_keeps_open_endpoints() {
        let h = helix(41, 1.0, 0.5, 1.0);
        let r = resample_arclength_cubic(&h, 60).unwrap();
        assert_eq!(r.node(0), h.node(0));
        assert_eq!(r.node(59), h.node(40));
        assert!(r.spacing_deviation() < 1e-3);
    }

    #[test]
    fn collapsed_curve_is_rejected() {
        let c = DiscreteCurve::from_points(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]], false).unwrap();
        assert_eq!(resample_arclength(&c, 5), Err(Error::CollapsedCurve));
    }

    #[test]
    fn frenet_planar_circle_in_r3() {
        let r = 2.0;
        let c = circle(128, r, 3);
        let h = c.spacing();
        let f = compute_frenet(&c, default_kappa_tol(h)).unwrap();
        for i in 0..f.len() {
            assert!((f.kappa[i] - 1.0 / r).abs() < h * h, "kappa {}", f.kappa[i]);
            assert!(f.tau1[i].unwrap().abs() < h * h);
            assert!((norm(&f.tangent[i]) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn frenet_segment_is_degenerate() {
        let pts: Vec<[f64; 3]> = (0..10).map(|i| [i as f64 * 0.1, 0.0, 0.0]).collect();
        let c = DiscreteCurve::from_points(&pts, false).unwrap();
        let f = compute_frenet(&c, default_kappa_tol(c.spacing())).unwrap();
        assert!(f.kappa.iter().all(|&k| k <= f.kappa_tol));
        assert!(f.normal.iter().all(Option::is_none));
        assert!(f.tau1.iter().all(Option::is_none));
    }

    #[test]
    fn frenet_helix_matches_closed_form() {
        // kappa = a/(a^2+b^2), tau = b/(a^2+b^2) for (a cos u, a sin u, b u).
        let f = compute_frenet(&helix(201, 1.0, 1.0, 1.0), 1e-6).unwrap();
        let h = f.spacing;
        for i in 0..f.len() {
            assert!((f.kappa[i] - 0.5).abs() < 2.0 * h * h, "kappa[{i}] = {}", f.kappa[i]);
            assert!((f.tau1[i].unwrap() - 0.5).abs() < 4.0 * h * h, "tau1[{i}] = {:?}", f.tau1[i]);
        }
    }

    #[test]
    fn frame_is_orthonormal() {
        let f = compute_frenet(&helix(101, 1.0, 0.5, 1.0), 1e-6).unwrap();
        for i in 0..f.len() {
            let t = &f.tangent[i];
            let n = f.normal[i].as_ref().unwrap();
            let b = f.binormal1[i].as_ref().unwrap();
            for (u, v, e) in [(t, t, 1.0), (n, n, 1.0), (b, b, 1.0), (t, n, 0.0), (t, b, 0.0), (n, b, 0.0)] {
                assert!((dot(u, v) - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn plane_deviation_of_tilted_planar_curve_in_r4() {
        let u = [0.5, 0.5, 0.5, 0.5];
        let v = [0.5, -0.5, 0.5, -0.5];
        let pts: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let th = i as f64 * 0.1;
                (0..4).map(|k| 1.0 + th.cos() * u[k] + 2.0 * th.sin() * v[k]).collect()
            })
            .collect();
        let c = DiscreteCurve::from_points(&pts, false).unwrap();
        assert!(best_fit_plane_deviation(&c) <= 1e-10);
    }

    #[test]
    fn plane_deviation_of_noisy_point_cloud() {
        let pts: Vec<[f64; 3]> = (0..20)
            .map(|i| {
                let e = 1e-9 * ((i * 7919 % 13) as f64 / 13.0 - 0.5);
                [1.0 + e, 2.0 - e, 3.0 + 0.5 * e]
            })
            .collect();
        let c = DiscreteCurve::from_points(&pts, false).unwrap();
        assert!(best_fit_plane_deviation(&c) <= 1e-8);
    }
}
