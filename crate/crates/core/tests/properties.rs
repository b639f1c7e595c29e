use std::f64::consts::PI;

use fbcsf::flow::{run, FlowConfig};
use fbcsf::geometry::{compute_frenet, default_kappa_tol, resample_arclength, DiscreteCurve};
use fbcsf::kernels::{
    cutoff_phi, dilate_about, gaussian_functional_phi, gaussian_rho, reflected_kernel_f, KernelParams, DEFAULT_ALPHA,
};
use fbcsf::models::{perturb, ModelCurve};
use fbcsf::vecmath::{dist_to_segment, dot, norm, reject, sub};
use fbcsf::Barrier;
use proptest::prelude::*;

fn barriers() -> Vec<Barrier> {
    vec![
        Barrier::flat(&[0.0, -1.0, 0.0], 0.0).unwrap(),
        Barrier::sphere(&[0.0, 0.0, 0.0], 2.0).unwrap(),
        Barrier::ellipsoid(&[0.0, 0.0, 0.0], &[2.0, 1.5, 1.0]).unwrap(),
    ]
}

fn point3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.5..2.5f64, 3)
}

/// Wobbly open curve in the plane, `n` nodes.
fn wobbly(n: usize, amp: f64, freq: f64) -> DiscreteCurve {
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            [3.0 * u, amp * (freq * u).sin() + 0.1 * u * u]
        })
        .collect();
    DiscreteCurve::from_points(&pts, false).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn projection_is_idempotent_and_reflection_an_involution(x in point3()) {
        for b in barriers() {
            let Ok(z) = b.project(&x) else { continue };
            prop_assert!(b.value(&z).abs() / norm(&b.gradient(&z)) < 1e-9);
            let zz = b.project(&z).unwrap();
            prop_assert!(norm(&sub(&z, &zz)) < 1e-9);
            // x - z is normal to the barrier at z
            let nu = b.normal(&z);
            let d = sub(&x, &z);
            prop_assert!(norm(&reject(&d, &[&nu])) < 1e-7 * (1.0 + norm(&d)));
            let half_tube = 0.5 * b.tubular_radius();
            if norm(&d) < half_tube {
                let r = b.reflect(&x).unwrap();
                let back = b.reflect(&r).unwrap();
                prop_assert!(norm(&sub(&back, &x)) < 1e-6);
                let (dx, dr) = (b.signed_distance(&x).unwrap(), b.signed_distance(&r).unwrap());
                prop_assert!((dx + dr).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sphere_second_fundamental_form_scales_with_radius(
        r in 0.5..4.0f64, th in 0.0..PI, ph in 0.0..(2.0 * PI), a in -2.0..2.0f64, c in -2.0..2.0f64,
    ) {
        let b = Barrier::sphere(&[0.0, 0.0, 0.0], r).unwrap();
        let p = [r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()];
        let basis = b.tangent_basis(&p);
        let u: Vec<f64> = (0..3).map(|k| a * basis[0][k] + c * basis[1][k]).collect();
        let ii = b.second_fundamental_form(&p, &u, &u).unwrap();
        prop_assert!((ii.abs() * r - dot(&u, &u)).abs() < 1e-8);
        prop_assert!(ii <= 0.0);
    }

    #[test]
    fn resample_nodes_lie_on_the_polyline(
        n in 8usize..60, target in 8usize..120, amp in 0.0..0.8f64, freq in 0.5..6.0f64,
    ) {
        let c = wobbly(n, amp, freq);
        let r = resample_arclength(&c, target).unwrap();
        prop_assert_eq!(r.len(), target);
        prop_assert_eq!(r.node(0), c.node(0));
        prop_assert_eq!(r.node(target - 1), c.node(n - 1));
        // nodes sit on the original polyline at equal arclength steps, so no chord exceeds the step
        for p in r.nodes() {
            let d = (0..n - 1).map(|i| dist_to_segment(p, c.node(i), c.node(i + 1))).fold(f64::INFINITY, f64::min);
            prop_assert!(d < 1e-12);
        }
        let step = c.length() / (target - 1) as f64;
        prop_assert!(r.chords().iter().all(|&ch| ch <= step * (1.0 + 1e-9)));
        prop_assert!(r.length() <= c.length() * (1.0 + 1e-12));
    }

    #[test]
    fn frenet_frames_are_orthonormal(amp in 0.05..0.5f64, pitch in 0.1..1.5f64, n in 40usize..120) {
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let u = 4.0 * i as f64 / (n - 1) as f64;
                [u.cos(), u.sin(), pitch * u + amp * (3.0 * u).sin()]
            })
            .collect();
        let c = DiscreteCurve::from_points(&pts, false).unwrap();
        let f = compute_frenet(&c, default_kappa_tol(c.spacing())).unwrap();
        for i in 0..f.len() {
            let t = &f.tangent[i];
            prop_assert!((norm(t) - 1.0).abs() < 1e-12);
            if let (Some(nv), Some(bv)) = (&f.normal[i], &f.binormal1[i]) {
                for (u, v, e) in [(nv, nv, 1.0), (bv, bv, 1.0), (t, nv, 0.0), (t, bv, 0.0), (nv, bv, 0.0)] {
                    prop_assert!((dot(u, v) - e).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn phi_is_invariant_under_parabolic_rescaling(
        lambda in 0.2..5.0f64, cx in -1.0..1.0f64, cy in 0.0..1.0f64, t in 0.0..0.3f64,
        seed in 0u64..1000,
    ) {
        let b = Barrier::flat(&[0.0, -1.0], 0.0).unwrap();
        let semi = ModelCurve::Semicircle { center: vec![0.0, 0.0], radius: 1.0, basis: None };
        let curve = perturb(&semi.sample(120).unwrap(), &[0.2, 1.0], 0.3, 3, seed).unwrap();
        let t0 = 0.5;
        let params = KernelParams::untruncated(vec![cx, cy], t0);
        let phi = gaussian_functional_phi(&curve, t, &params, Some(&b)).unwrap();
        let scaled = dilate_about(&curve, &[0.0, 0.0], lambda).unwrap();
        let params_l = KernelParams::untruncated(vec![lambda * cx, lambda * cy], lambda * lambda * t0);
        let phi_l = gaussian_functional_phi(&scaled, lambda * lambda * t, &params_l, Some(&b)).unwrap();
        prop_assert!((phi - phi_l).abs() <= 1e-10);
    }

    #[test]
    fn kernel_is_nonnegative_and_cutoff_in_unit_interval(
        x in point3(), s in 1e-3..2.0f64, radius in prop::option::of(0.05..0.25f64),
    ) {
        let phi = cutoff_phi(&x, s, radius, DEFAULT_ALPHA);
        prop_assert!((0.0..=1.0).contains(&phi));
        prop_assert!(gaussian_rho(&x, s, 1).unwrap() >= 0.0);
        for b in barriers() {
            let params = KernelParams { center: vec![0.0, 0.0, 0.0], t0: s, radius, alpha: DEFAULT_ALPHA };
            if params.validate(Some(&b)).is_err() {
                continue;
            }
            let f = reflected_kernel_f(&x, 0.0, &params, Some(&b)).unwrap();
            prop_assert!(f >= 0.0);
            // with the reflected point outside the cut-off support only the direct term remains
            if let Ok(xr) = b.reflect(&x) {
                if cutoff_phi(&xr, s, radius, DEFAULT_ALPHA) == 0.0 {
                    let direct = gaussian_rho(&x, s, 1).unwrap() * phi;
                    prop_assert!((f - direct).abs() <= 1e-12 * direct.max(1.0));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn length_is_nonincreasing_along_the_flow(amp in 0.0..0.3f64, seed in 0u64..100) {
        let semi = ModelCurve::Semicircle { center: vec![0.0, 0.0], radius: 1.0, basis: None };
        let b = semi.barrier().unwrap();
        let initial = perturb(&semi.sample(64).unwrap(), &[0.0, 1.0], amp, 4, seed).unwrap();
        let cfg = FlowConfig { node_count: 64, t_end: 0.2, output_every: 1, ..Default::default() };
        let run = run(&initial, b.as_ref(), &cfg).unwrap();
        for w in run.history.windows(2) {
            prop_assert!(w[1].length <= w[0].length * (1.0 + 1e-10));
        }
        for s in &run.states {
            prop_assert!(s.boundary_dist <= 1e-10);
        }
    }
}
