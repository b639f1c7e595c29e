//! Finite-difference stencils on uniformly spaced node fields.
//!
//! Interior nodes use centered second-order stencils; at the ends of open
//! curves (or next to undefined nodes) one-sided second-order stencils are
//! used instead.

use crate::vecmath::axpy;

fn wrap(i: isize, m: usize, closed: bool) -> Option<usize> {
    if closed {
        Some(i.rem_euclid(m as isize) as usize)
    } else if i >= 0 && (i as usize) < m {
        Some(i as usize)
    } else {
        None
    }
}

fn gather<'a, F>(get: &F, i: usize, offsets: &[isize], m: usize, closed: bool) -> Option<Vec<&'a [f64]>>
where
    F: Fn(usize) -> Option<&'a [f64]>,
{
    offsets
        .iter()
        .map(|&o| wrap(i as isize + o, m, closed).and_then(get))
        .collect()
}

fn combine(vals: &[&[f64]], weights: &[f64], scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; vals[0].len()];
    for (v, w) in vals.iter().zip(weights) {
        axpy(w * scale, v, &mut out);
    }
    out
}

/// First derivative of a (possibly partially defined) field at node `i`.
pub fn d1<'a, F>(get: F, i: usize, m: usize, h: f64, closed: bool) -> Option<Vec<f64>>
where
    F: Fn(usize) -> Option<&'a [f64]>,
{
    get(i)?;
    if let Some(v) = gather(&get, i, &[-1, 1], m, closed) {
        return Some(combine(&v, &[-0.5, 0.5], 1.0 / h));
    }
    if let Some(v) = gather(&get, i, &[0, 1, 2], m, closed) {
        return Some(combine(&v, &[-1.5, 2.0, -0.5], 1.0 / h));
    }
    if let Some(v) = gather(&get, i, &[0, -1, -2], m, closed) {
        return Some(combine(&v, &[1.5, -2.0, 0.5], 1.0 / h));
    }
    None
}

/// Second derivative of a (possibly partially defined) field at node `i`.
pub fn d2<'a, F>(get: F, i: usize, m: usize, h: f64, closed: bool) -> Option<Vec<f64>>
where
    F: Fn(usize) -> Option<&'a [f64]>,
{
    let h2 = 1.0 / (h * h);
    if let Some(v) = gather(&get, i, &[-1, 0, 1], m, closed) {
        return Some(combine(&v, &[1.0, -2.0, 1.0], h2));
    }
    if let Some(v) = gather(&get, i, &[0, 1, 2, 3], m, closed) {
        return Some(combine(&v, &[2.0, -5.0, 4.0, -1.0], h2));
    }
    if let Some(v) = gather(&get, i, &[0, -1, -2, -3], m, closed) {
        return Some(combine(&v, &[2.0, -5.0, 4.0, -1.0], h2));
    }
    None
}

/// Scalar convenience wrapper around [`d1`].
pub fn d1_scalar(values: &[Option<f64>], i: usize, h: f64, closed: bool) -> Option<f64> {
    let boxed: Vec<Option<[f64; 1]>> = values.iter().map(|v| v.map(|x| [x])).collect();
    d1(|k| boxed[k].as_ref().map(|a| &a[..]), i, values.len(), h, closed).map(|v| v[0])
}

/// Scalar convenience wrapper around [`d2`].
pub fn d2_scalar(values: &[Option<f64>], i: usize, h: f64, closed: bool) -> Option<f64> {
    let boxed: Vec<Option<[f64; 1]>> = values.iter().map(|v| v.map(|x| [x])).collect();
    d2(|k| boxed[k].as_ref().map(|a| &a[..]), i, values.len(), h, closed).map(|v| v[0])
}

/// Whole-field first derivative of a fully defined scalar field.
pub fn d1_field(values: &[f64], h: f64, closed: bool) -> Vec<f64> {
    let opt: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
    (0..values.len())
        .map(|i| d1_scalar(&opt, i, h, closed).unwrap_or(f64::NAN))
        .collect()
}

/// Whole-field second derivative of a fully defined scalar field.
pub fn d2_field(values: &[f64], h: f64, closed: bool) -> Vec<f64> {
    let opt: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
    (0..values.len())
        .map(|i| d2_scalar(&opt, i, h, closed).unwrap_or(f64::NAN))
        .collect()
}

/// Fornberg's finite-difference weights: `w[k][j]` approximates the `k`-th
/// derivative at `z` from values at `x[j]`, for `k <= order`.
pub fn fornberg_weights(z: f64, x: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}
