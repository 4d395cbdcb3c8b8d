//! Randomized property suites: differential identities of the potentials,
//! metric axioms of the sample W2 distance, quadrature refinement, and
//! bitwise reproducibility of the stochastic dynamics.

use mflab::dynamics::{simulate_particles, Init, Model, SimConfig};
use mflab::measures::{w2_samples_1d, GaussianSpec};
use mflab::potentials::{localized_convexification, PotentialSpec};
use mflab::quadrature::CompositeRule;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn arb_spec() -> impl Strategy<Value = PotentialSpec> {
    prop_oneof![
        (0.2f64..3.0, 1usize..4).prop_map(|(k, d)| PotentialSpec::quadratic(k, d).unwrap()),
        (0.2f64..3.0).prop_map(|k| PotentialSpec::quartic1d(k).unwrap()),
        (0.2f64..2.0, 0.1f64..1.5, 0.0f64..1.0).prop_map(|(k, a, b)| {
            let m = DMatrix::from_fn(2, 2, |i, j| {
                if i == j {
                    if i == 0 {
                        a + b
                    } else {
                        a
                    }
                } else {
                    0.2 * b
                }
            });
            // Symmetrize exactly.
            let m = (&m + m.transpose()) * 0.5;
            PotentialSpec::pca(m, k).unwrap()
        }),
        (0.2f64..2.0, 0.2f64..3.0)
            .prop_map(|(s2, k0)| PotentialSpec::curie_weiss(s2, k0).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// Central differences of V_κ reproduce the analytic gradient, and the
    /// directional derivative of the gradient reproduces the Hessian row.
    #[test]
    fn gradient_and_hessian_match_finite_differences(
        spec in arb_spec(),
        coords in proptest::collection::vec(-1.5f64..1.5, 8),
    ) {
        let m = DVector::from_fn(spec.d, |r, _| coords[r % coords.len()]);
        let g = spec.grad_v_kappa(&m);
        let h = spec.hess_v_kappa(&m);
        let eps = 1e-5;
        for k in 0..spec.d {
            let mut mp = m.clone();
            let mut mm = m.clone();
            mp[k] += eps;
            mm[k] -= eps;
            let fd = (spec.v_kappa(&mp) - spec.v_kappa(&mm)) / (2.0 * eps);
            prop_assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + g[k].abs()),
                "gradient mismatch {} vs {}", fd, g[k]);
            let gd = (spec.grad_v_kappa(&mp) - spec.grad_v_kappa(&mm)) / (2.0 * eps);
            for l in 0..spec.d {
                prop_assert!((gd[l] - h[(k, l)]).abs() <= 1e-5 * (1.0 + h[(k, l)].abs()),
                    "hessian mismatch {} vs {}", gd[l], h[(k, l)]);
            }
        }
        // The Hessian is exactly symmetric.
        for i in 0..spec.d {
            for j in 0..spec.d {
                prop_assert_eq!(h[(i, j)], h[(j, i)]);
            }
        }
    }

    /// Sample W2 is a metric: identity, symmetry, triangle inequality, and
    /// exact translation covariance in one dimension.
    #[test]
    fn w2_sample_metric_axioms(
        xs in proptest::collection::vec(-3.0f64..3.0, 32),
        ys in proptest::collection::vec(-3.0f64..3.0, 32),
        zs in proptest::collection::vec(-3.0f64..3.0, 32),
        shift in -2.0f64..2.0,
    ) {
        let dxy = w2_samples_1d(&xs, &ys).unwrap();
        let dyx = w2_samples_1d(&ys, &xs).unwrap();
        let dxx = w2_samples_1d(&xs, &xs).unwrap();
        let dxz = w2_samples_1d(&xs, &zs).unwrap();
        let dzy = w2_samples_1d(&zs, &ys).unwrap();
        prop_assert!(dxx <= 1e-12);
        prop_assert!((dxy - dyx).abs() <= 1e-12);
        prop_assert!(dxy <= dxz + dzy + 1e-10);
        // W2 between a set and its translation is exactly |shift|.
        let xt: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let dt = w2_samples_1d(&xs, &xt).unwrap();
        prop_assert!((dt - shift.abs()).abs() <= 1e-10, "{} vs {}", dt, shift.abs());
    }

    /// Refining the composite quadrature rule improves a smooth Gaussian
    /// integral, and the refined value matches the closed form.
    #[test]
    fn quadrature_refinement_converges(mean in -1.0f64..1.0, sd in 0.3f64..1.5) {
        let a = mean - 8.0 * sd;
        let b = mean + 8.0 * sd;
        let f = move |x: f64| {
            (-(x - mean).powi(2) / (2.0 * sd * sd)).exp()
        };
        let exact = sd * (2.0 * std::f64::consts::PI).sqrt();
        let coarse = (CompositeRule::new(a, b, &[], 4, 2.0 * sd).integrate(f) - exact).abs();
        let fine = (CompositeRule::new(a, b, &[], 16, 0.5 * sd).integrate(f) - exact).abs();
        prop_assert!(fine <= 1e-12 * exact, "fine error {}", fine);
        prop_assert!(fine <= coarse + 1e-15);
    }

    /// The particle dynamics is a pure function of (config, seed, replica):
    /// reruns agree bitwise, and different replicas decorrelate.
    #[test]
    fn dynamics_reruns_bitwise_identical(seed in any::<u64>(), replica in 0u64..64) {
        let mk = |rep: u64| SimConfig {
            spec: PotentialSpec::quartic1d(1.0).unwrap(),
            model: Model::Toy,
            n: 8,
            dt: 1e-2,
            horizon: 0.5,
            seed,
            replica_id: rep,
            init: Init::Gaussian { mean: DVector::zeros(1), s2: 1.0 },
            noise: true,
            thin_every: Some(10),
        };
        let a = simulate_particles(mk(replica)).unwrap();
        let b = simulate_particles(mk(replica)).unwrap();
        prop_assert_eq!(&a.states, &b.states);
        let c = simulate_particles(mk(replica + 64)).unwrap();
        prop_assert_ne!(&a.states, &c.states);
    }

    /// The localized potential agrees bitwise with the base inside the
    /// protected ball and is convex on the scanned grid.
    #[test]
    // δ ≤ 0.2 keeps the support ball B(1, 2δ) inside the convexity region
    // of the double well (V_κ'' > 0 needs |x| > 1/√3).
    fn localization_identity_inside_ball(delta in 0.1f64..0.2, t in -0.99f64..0.99) {
        let spec = PotentialSpec::quartic1d(1.0).unwrap();
        let center = DVector::from_vec(vec![1.0]);
        let loc = localized_convexification(&spec, &center, delta, 8.0).unwrap();
        let x = DVector::from_vec(vec![1.0 + t * delta]);
        prop_assert_eq!(loc.w(&x), spec.v_kappa(&x));
        prop_assert_eq!(loc.v_tilde(&x), spec.v(&x));
        prop_assert_eq!(loc.grad_v_tilde(&x), spec.grad_v(&x));
        prop_assert!(loc.min_hessian_eigenvalue(41) > 0.0);
    }

    /// Gaussian W2 closed form agrees with the sample distance on quantile
    /// grids.
    #[test]
    fn gaussian_w2_matches_samples(m1 in -1.0f64..1.0, m2 in -1.0f64..1.0,
                                   s1 in 0.3f64..1.2, s2 in 0.3f64..1.2) {
        let a = GaussianSpec::new(DVector::from_vec(vec![m1]), s1 * s1).unwrap();
        let b = GaussianSpec::new(DVector::from_vec(vec![m2]), s2 * s2).unwrap();
        let closed = mflab::measures::w2_gaussian(&a, &b).unwrap();
        let n = 4000;
        let xs: Vec<f64> = (0..n).map(|i| a.quantile((i as f64 + 0.5) / n as f64)).collect();
        let ys: Vec<f64> = (0..n).map(|i| b.quantile((i as f64 + 0.5) / n as f64)).collect();
        let sampled = w2_samples_1d(&xs, &ys).unwrap();
        prop_assert!((closed - sampled).abs() <= 2e-3 * (1.0 + closed),
            "closed {} vs sampled {}", closed, sampled);
    }
}
