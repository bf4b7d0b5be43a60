use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use warpflow::blowup::{zeta, zeta1, zeta2, SubsolutionParams};
use warpflow::diagnostics::{kappa, modulus_brute_force, modulus_of_continuity, BarrierParams};
use warpflow::flow::{rhs_gamma, rhs_rho, Domain, FlowState, Geometry, Profile, Representation};
use warpflow::{GammaTransform, Interval, WarpFunction, WarpKind};

fn catalog() -> Vec<(WarpKind, f64, f64, f64)> {
    vec![
        (WarpKind::SphereSine, 0.3, 2.8, 1.55),
        (WarpKind::HyperbolicSinh, 0.2, 3.0, 1.6),
        (WarpKind::EuclideanIdentity, 0.5, 4.0, 2.25),
        (WarpKind::Cosh, -1.0, 1.0, 0.0),
        (WarpKind::Constant(0.7), -2.0, 2.0, 0.0),
        (WarpKind::EvenPolynomial(vec![1.0, 0.5, 0.1]), -1.5, 1.5, 0.0),
    ]
}

fn transform(i: usize) -> (WarpFunction, GammaTransform) {
    let (kind, lo, hi, base) = catalog().swap_remove(i);
    let w = WarpFunction::new(kind, Interval::new(lo, hi).unwrap()).unwrap();
    let t = GammaTransform::new(&w, base, 1e-12).unwrap();
    (w, t)
}

/// A few Fourier modes around `center`, small enough to stay inside I.
fn smooth(center: f64, coeffs: &[(f64, f64)]) -> impl Fn(f64) -> f64 + '_ {
    move |x| {
        center
            + coeffs
                .iter()
                .enumerate()
                .map(|(m, (a, b))| a * ((m + 1) as f64 * x).cos() + b * ((m + 1) as f64 * x).sin())
                .sum::<f64>()
    }
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.05..0.05f64, -0.05..0.05f64), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_is_increasing_and_invertible(i in 0usize..6, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (w, t) = transform(i);
        let iv = w.interval();
        let (x, y) = (iv.lo + a * iv.width(), iv.lo + b * iv.width());
        let (gx, gy) = (t.forward(x).unwrap(), t.forward(y).unwrap());
        if x < y {
            prop_assert!(gx < gy);
        }
        prop_assert!((t.inverse(gx).unwrap() - x).abs() <= 1e-10);
        prop_assert!((t.psi(gx).unwrap() - w.phi(x)).abs() <= 1e-10);
    }

    #[test]
    fn constants_are_stationary(i in 0usize..6, a in 0.05..0.95f64, n in 1u32..4) {
        let (w, t) = transform(i);
        let c = w.interval().lo + a * w.interval().width();
        let rho = Profile::from_fn(Domain::Colatitude, Representation::Rho, 32, |_| c).unwrap();
        let s = FlowState::new(rho, 0.0, n, Geometry::Rho(w.clone())).unwrap();
        prop_assert!(rhs_rho(&s).unwrap().iter().all(|&r| r == 0.0));
        let g = t.forward(c).unwrap();
        let gamma = Profile::from_fn(Domain::Circle, Representation::Gamma, 32, |_| g).unwrap();
        let s = FlowState::new(gamma, 0.0, 1, Geometry::Gamma(Arc::new(t))).unwrap();
        prop_assert!(rhs_gamma(&s).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn representations_agree_to_second_order(i in 0usize..4, c in coeffs()) {
        let (w, t) = transform(i);
        let center = w.interval().midpoint();
        let f = smooth(center, &c);
        let t = Arc::new(t);
        let gap = |n: usize| {
            let rho = Profile::from_fn(Domain::Circle, Representation::Rho, n, &f).unwrap();
            let gamma = rho.map(Representation::Gamma, |r| t.forward(r)).unwrap();
            let rr = rhs_rho(&FlowState::new(rho.clone(), 0.0, 1, Geometry::Rho(w.clone())).unwrap()).unwrap();
            let rg = rhs_gamma(&FlowState::new(gamma, 0.0, 1, Geometry::Gamma(t.clone())).unwrap()).unwrap();
            rho.values()
                .iter()
                .zip(rr.iter().zip(&rg))
                .map(|(&r, (a, b))| (w.phi(r) * b - a).abs())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (gap(128), gap(256));
        prop_assert!(fine <= coarse * 0.3 + 1e-9, "{coarse:e} -> {fine:e}");
    }

    #[test]
    fn kappa_increases_in_distance_and_decays_in_time(
        delta in 1e-6..0.99f64, lb in 1e-3..10.0f64, eta in 1e-3..5.0f64,
        d in 0.0..PI, e in 1e-6..1.0f64, t in 0.0..5.0f64, s in 1e-6..1.0f64,
    ) {
        let bp = BarrierParams::new(delta, lb, eta).unwrap();
        prop_assert_eq!(kappa(&bp, 0.0, t), 0.0);
        prop_assert!(kappa(&bp, d + e, t) > kappa(&bp, d, t));
        if d > 0.0 {
            prop_assert!(kappa(&bp, d, t + s) < kappa(&bp, d, t));
        }
    }

    #[test]
    fn modulus_matches_pair_scan(
        c in coeffs(),
        domain in prop_oneof![Just(Domain::Circle), Just(Domain::Arc { k: 3 }), Just(Domain::Colatitude)],
        n in 16usize..80,
    ) {
        let f = smooth(0.0, &c);
        let p = Profile::from_fn(domain, Representation::Rho, n, &f).unwrap();
        prop_assert_eq!(modulus_of_continuity(&p), modulus_brute_force(&p));
    }

    #[test]
    fn zeta_is_positive_inside_and_zero_at_the_ends(a in 1e-6..1.0f64, s in prop_oneof![Just(0.0), 0.0..0.999f64]) {
        let sp = SubsolutionParams { sigma: 0.25, p: 10.0 / 3.0, k: 16, tau: 1e-3, c1: 3.0, c2: 2.0, mu: 1.0 };
        let arc = sp.arc_length();
        let t = s * sp.tau;
        let theta = a * arc;
        if theta < arc {
            prop_assert!(zeta(&sp, theta, t).unwrap() > 0.0);
        }
        prop_assert_eq!(zeta(&sp, 0.0, t).unwrap(), 0.0);
        prop_assert_eq!(zeta(&sp, arc, t).unwrap(), 0.0);
        let m = zeta1(&sp, theta, t).unwrap().max(zeta2(&sp, theta, t).unwrap());
        prop_assert_eq!(zeta(&sp, theta, t).unwrap(), m);
    }
}
