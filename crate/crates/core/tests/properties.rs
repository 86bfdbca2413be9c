use proptest::prelude::*;

use projfilter::analysis::{lyapunov_reduction, sample_exponent};
use projfilter::family::{self, FamilyContext, ThetaCoords, XiCoords};
use projfilter::feedback::{self, ControllerSpec};
use projfilter::filters::Companion;
use projfilter::linalg::{self, frobenius, CMatrix};
use projfilter::quantum::{self, build_system, DensityMatrix, SystemModel};
use projfilter::{presets, sampling, sde};

fn model(dim: usize) -> SystemModel {
    build_system(dim, 0.5, 1.0).unwrap()
}

fn reference_ctx(target: usize) -> FamilyContext {
    FamilyContext::new(presets::reference_base_state(), model(4), target).unwrap()
}

fn random_hermitian(dim: usize, seed: u64) -> CMatrix {
    sampling::random_hermitian_with(&mut sampling::rng(seed), dim)
}

fn theta_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-6.0..6.0f64, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn superoperators_are_traceless(dim in 2usize..6, seed in any::<u64>(), eta in 0.0..1.0f64) {
        let rho = sampling::random_density(dim, seed);
        let l = random_hermitian(dim, seed ^ 1);
        let f = quantum::superop_f(rho.matrix(), &l).unwrap();
        let g = quantum::superop_g(rho.matrix(), &l, eta).unwrap();
        prop_assert!(f.trace().norm() <= 1e-12);
        prop_assert!(g.trace().norm() <= 1e-12);
    }

    #[test]
    fn fhat_scalar_identity(dim in 2usize..6, seed in any::<u64>()) {
        let m = model(dim);
        let rho = random_hermitian(dim, seed);
        let fhat = quantum::superop_fhat(&rho, m.jz(), m.eta()).unwrap();
        for j in 0..dim {
            let lhs = linalg::trace_product(&fhat, m.projector(j));
            let lam = m.eigenvalue(j);
            let rhs = -2.0 * m.eta() * lam * lam * linalg::trace_product(&rho, m.projector(j));
            prop_assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn bures_triangle_inequality(dim in 2usize..6, seed in any::<u64>()) {
        let a = sampling::random_density(dim, seed);
        let b = sampling::random_density(dim, seed.wrapping_add(1));
        let c = sampling::random_density(dim, seed.wrapping_add(2));
        let ab = quantum::bures_distance(&a, &b).unwrap();
        let bc = quantum::bures_distance(&b, &c).unwrap();
        let ac = quantum::bures_distance(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn theta_shift_is_redundant(theta in theta_strategy(), mu in -10.0..10.0f64) {
        let ctx = reference_ctx(0);
        let th = ThetaCoords::new(theta).unwrap();
        let a = family::rho_from_theta(&ctx, &th);
        let b = family::rho_from_theta(&ctx, &th.shifted(mu));
        prop_assert!(frobenius(&(a.matrix() - b.matrix())) <= 1e-12);
    }

    #[test]
    fn fisher_diagonal_is_positive(theta in theta_strategy(), u in -5.0..5.0f64) {
        let ctx = reference_ctx(0);
        let (g, _) = family::fisher_and_drift(&ctx, &ThetaCoords::new(theta).unwrap(), u);
        prop_assert!((0..4).all(|k| g[(k, k)] > 0.0));
    }

    #[test]
    fn xi_theta_round_trip(xi in prop::collection::vec(1e-3..1e3f64, 3), target in 0usize..4) {
        let x = XiCoords::new(xi).unwrap();
        let back = family::theta_to_xi(&family::xi_to_theta(&x, target).unwrap(), target);
        for (a, b) in x.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn renormalize_is_idempotent(dim in 2usize..6, seed in any::<u64>(), scale in 0.1..10.0f64) {
        let rho = sampling::random_density(dim, seed);
        let once = sde::renormalize(&(rho.matrix() * linalg::C64::new(scale, 0.0)), true).unwrap();
        let twice = sde::renormalize(once.matrix(), true).unwrap();
        prop_assert!(frobenius(&(once.matrix() - twice.matrix())) <= 1e-14);
    }

    #[test]
    fn sample_exponent_ignores_scale(rate in -3.0..3.0f64, noise_seed in any::<u64>(), scale in 1e-6..1e6f64) {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.025).collect();
        let noise = sampling::gaussian_vector(&mut sampling::rng(noise_seed), times.len());
        let series: Vec<f64> = times.iter().zip(&noise).map(|(t, z)| (rate * t + 0.1 * z).exp()).collect();
        let scaled: Vec<f64> = series.iter().map(|v| v * scale).collect();
        let a = sample_exponent(&times, &series, 0.5).unwrap().slope;
        let b = sample_exponent(&times, &scaled, 0.5).unwrap().slope;
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }

    #[test]
    fn controllers_vanish_at_target(alpha in 0.1..20.0f64, beta in 1.0..6.0f64, offset in 0.5..5.0f64) {
        let edge = presets::coupled_base_state();
        let specs = [
            ControllerSpec::rho_theta_power(alpha, beta, 0),
            ControllerSpec::xi_edge(alpha, beta, 0),
            ControllerSpec::xi_edge_general(alpha, beta, 0),
            ControllerSpec::xi_interior(beta, offset, 1),
            ControllerSpec::xi_interior_general(beta, offset, 1),
        ];
        for spec in specs {
            let ctx = FamilyContext::new(edge.clone(), model(4), spec.target).unwrap();
            let at_target = if spec.kind.is_xi() {
                Companion::Xi(XiCoords::zeros(ctx.xi_len()))
            } else {
                Companion::Projection(DensityMatrix::basis_state(4, spec.target))
            };
            prop_assert_eq!(feedback::evaluate(&spec, &at_target, &ctx).unwrap(), 0.0);
        }
    }
}

#[test]
fn reduction_functional_is_sandwiched_by_bures_distance() {
    let mut rng = sampling::rng(31);
    for dim in [2usize, 3, 4, 5] {
        let spin = (dim as f64 - 1.0) / 2.0;
        let c2 = spin * (2.0 * spin + 1.0);
        for i in 0..1000 {
            let rho = if i % 2 == 0 {
                sampling::random_density_with(&mut rng, dim)
            } else {
                sampling::random_pure_with(&mut rng, dim)
            };
            let v = lyapunov_reduction(&rho);
            let d = quantum::bures_to_equilibria(&rho);
            assert!(v >= 0.0);
            assert!(
                0.5 * d <= v + 1e-12,
                "dim {dim}: V {v} below d_B/2 = {}",
                0.5 * d
            );
            assert!(
                v <= c2 * d + 1e-12,
                "dim {dim}: V {v} above {c2} d_B = {}",
                c2 * d
            );
        }
        for k in 0..dim {
            assert_eq!(lyapunov_reduction(&DensityMatrix::basis_state(dim, k)), 0.0);
        }
    }
}
