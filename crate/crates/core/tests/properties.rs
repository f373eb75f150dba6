use std::f64::consts::PI;

use proptest::prelude::*;

use cylinder_rds::attractor::FibreCloud;
use cylinder_rds::cocycle::{advance_path, evolve_steps, jacobian_product, noise_path, phi_n, LinearMapSystem};
use cylinder_rds::curves::{extract_curves, extract_strip_graphs, stitch, Direction, ExtractionConfig};
use cylinder_rds::models::{build_field, zoo_entry, Params};
use cylinder_rds::permutation::{decompose_periods, Permutation};
use cylinder_rds::sde::{build_cocycle, Integrator, SdeSpec, SdeSystem};
use cylinder_rds::{BaseFlow, CocycleSystem, CylinderState, NoisePath};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn multiplicative(a: f64, sigma: f64, steps: u64, integrator: Integrator) -> SdeSystem {
    let mut p = Params::new();
    p.insert("a".into(), a);
    p.insert("sigma".into(), sigma);
    let spec = SdeSpec::new(build_field("linear_multiplicative", &p).unwrap(), integrator, steps);
    build_cocycle(spec, &BaseFlow::Wiener { dim: 1 }).unwrap()
}

fn brownian(path: &NoisePath, slots: i64) -> f64 {
    (0..slots).map(|k| path.increment(k)[0]).sum()
}

/// `d` points on the unit circle rotating by `r/d` of a turn per period.
fn rotating_cloud(d: usize, r: usize, bins: usize) -> FibreCloud {
    let path = NoisePath::new(0, 1.0 / bins as f64, 0);
    FibreCloud::from_fn(path, bins, 1e-3, |s| {
        (0..d)
            .map(|j| {
                let a = 2.0 * PI * (j as f64 + r as f64 * s) / d as f64;
                vec![a.cos(), a.sin()]
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shifts_compose(seed in any::<u64>(), a in -1000i64..1000, b in -1000i64..1000, slot in -500i64..500) {
        let p = NoisePath::new(seed, 0.01, 2);
        prop_assert_eq!(p.shift_slots(a).shift_slots(b), p.shift_slots(a + b));
        prop_assert_eq!(p.shift_slots(a).shift_slots(b).increment(slot), p.increment(slot + a + b));
    }

    #[test]
    fn paths_are_deterministic(seed in any::<u64>(), slot in any::<i32>()) {
        let p = NoisePath::new(seed, 0.25, 3);
        let q = NoisePath::new(seed, 0.25, 3);
        prop_assert_eq!(p.increment(slot as i64), q.increment(slot as i64));
    }

    #[test]
    fn sub_grid_shifts_are_rejected(k in -100i64..100, frac in 0.1f64..0.9) {
        let p = NoisePath::new(1, 0.125, 1);
        prop_assert!(p.shift(k as f64 * 0.125).is_ok());
        prop_assert!(p.shift((k as f64 + frac) * 0.125).is_err());
    }

    #[test]
    fn scalar_linear_map_matches_powers(a in -2.0f64..2.0, x in -3.0f64..3.0, n in 0u64..30) {
        let sys = LinearMapSystem::scalar(a);
        let path = noise_path(&sys, 0);
        let z = CylinderState::new(0.0, vec![x]);
        let out = evolve_steps(&sys, n, &path, &z).unwrap();
        prop_assert!((out.x[0] - a.powi(n as i32) * x).abs() <= 1e-12 * (1.0 + (a.powi(n as i32) * x).abs()));
        if n > 0 && a != 0.0 {
            let phi = phi_n(&sys, n, &path, &z).unwrap().value;
            prop_assert!((phi - n as f64 * a.abs().ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn cocycle_law_over_many_splits(seed in any::<u64>(), u in 0u64..300, t in 0u64..300, x in -2.0f64..2.0) {
        let sys = zoo_entry("double_well").unwrap().system().unwrap();
        let path = noise_path(&sys, seed);
        let z = CylinderState::new(0.25, vec![x]);
        let direct = evolve_steps(&sys, u + t, &path, &z).unwrap();
        let mid = evolve_steps(&sys, u, &path, &z).unwrap();
        let composed = evolve_steps(&sys, t, &advance_path(&sys, &path, u as i64), &mid).unwrap();
        prop_assert_eq!(direct.s, composed.s);
        prop_assert!((direct.x[0] - composed.x[0]).abs() <= cylinder_rds::cocycle::tol_cocycle(&sys, u + t));
    }

    #[test]
    fn jacobian_is_multiplicative(seed in any::<u64>(), n in 1u64..40, m in 1u64..40) {
        let sys = zoo_entry("winding_two").unwrap().system().unwrap();
        let path = noise_path(&sys, seed);
        let z = CylinderState::new(0.5, vec![0.7, -0.2]);
        let (_, whole) = jacobian_product(&sys, n + m, &path, &z).unwrap();
        let (mid, first) = jacobian_product(&sys, n, &path, &z).unwrap();
        let (_, second) = jacobian_product(&sys, m, &advance_path(&sys, &path, n as i64), &mid).unwrap();
        let product = second.to_matrix() * first.to_matrix();
        let diff = (whole.to_matrix() - &product).norm();
        prop_assert!(diff <= 1e-10 * (1.0 + product.norm()));
    }

    #[test]
    fn stratonovich_linear_closed_form(seed in any::<u64>(), x0 in 0.1f64..2.0) {
        // dx = a x dt + σ x ∘ dW  ⇒  x(t) = x0 exp(a t + σ W(t)).
        let (a, sigma) = (-0.5, 0.3);
        let sys = multiplicative(a, sigma, 256, Integrator::HeunStratonovich);
        let path = noise_path(&sys, seed);
        let n = 256;
        let x = evolve_steps(&sys, n, &path, &CylinderState::new(0.0, vec![x0])).unwrap().x[0];
        let w = brownian(&path, n as i64 * sys.slots_per_step());
        let exact = x0 * (a * 1.0 + sigma * w).exp();
        prop_assert!((x - exact).abs() <= 2e-3 * exact.abs(), "{} vs {}", x, exact);
    }

    #[test]
    fn rotating_points_give_cycle_structure(d in 1usize..=5, r_raw in 0usize..5, strips in 4usize..10) {
        let r = r_raw % d;
        let cloud = rotating_cloud(d, r, 120);
        let cfg = ExtractionConfig::new(strips, 0.1);
        let set = extract_curves(&cloud, &cfg).unwrap();

        let g = gcd(d, r);
        prop_assert_eq!(set.n(), g);
        prop_assert!(set.periods().iter().all(|&t| t as usize == d / g));
        prop_assert_eq!(set.periods().iter().sum::<u32>() as usize, d);
        prop_assert!(set.reconstruction_residual(&cloud) < 1e-12);

        let (graphs, th) = extract_strip_graphs(&cloud, &cfg).unwrap();
        let (fwd, _) = stitch(&graphs, 120, th.tol_match, Direction::Forward).unwrap();
        let (bwd, _) = stitch(&graphs, 120, th.tol_match, Direction::Backward).unwrap();
        prop_assert!(fwd.after(&bwd).is_identity());
        let periods: Vec<usize> = decompose_periods(&fwd).iter().map(|c| c.period as usize).collect();
        prop_assert!(periods.iter().all(|&t| t == d / g));
    }
}

#[test]
fn increments_have_variance_h() {
    let h = 0.01;
    let p = NoisePath::new(9, h, 1);
    let n = 40_000;
    let xs: Vec<f64> = (0..n).map(|k| p.increment(k - n / 2)[0]).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // Sample variance of n normals has relative standard deviation sqrt(2/n).
    assert!((var / h - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt(), "variance {var}");
    assert!(mean.abs() < 5.0 * (h / n as f64).sqrt());
}

#[test]
fn heun_strong_error_shrinks_with_step() {
    let fine = multiplicative(-0.5, 0.8, 512, Integrator::HeunStratonovich);
    let coarse = multiplicative(-0.5, 0.8, 256, Integrator::HeunStratonovich);
    let mut err_fine = 0.0;
    let mut err_coarse = 0.0;
    for seed in 0..40 {
        let fp = noise_path(&fine, seed);
        let w = brownian(&fp, 512 * fine.slots_per_step());
        let exact = (-0.5 + 0.8 * w).exp();
        err_fine += (evolve_steps(&fine, 512, &fp, &CylinderState::new(0.0, vec![1.0]))
            .unwrap()
            .x[0]
            - exact)
            .abs();
        let cp = noise_path(&coarse, seed);
        let wc = brownian(&cp, 256 * coarse.slots_per_step());
        let exact_c = (-0.5 + 0.8 * wc).exp();
        err_coarse += (evolve_steps(&coarse, 256, &cp, &CylinderState::new(0.0, vec![1.0]))
            .unwrap()
            .x[0]
            - exact_c)
            .abs();
    }
    // Different paths per resolution, so compare mean errors loosely.
    assert!(err_fine < err_coarse, "fine {err_fine} coarse {err_coarse}");
}

#[test]
fn euler_maruyama_misses_the_stratonovich_drift() {
    // Itô reading of σ x dW has mean growth a, not a + σ²/2.
    let em = multiplicative(0.0, 1.0, 512, Integrator::EulerMaruyama);
    let heun = multiplicative(0.0, 1.0, 512, Integrator::HeunStratonovich);
    let z = CylinderState::new(0.0, vec![1.0]);
    let mut m_em = 0.0;
    let mut m_heun = 0.0;
    let paths = 2000;
    for seed in 0..paths {
        m_em += evolve_steps(&em, 512, &noise_path(&em, seed), &z).unwrap().x[0];
        m_heun += evolve_steps(&heun, 512, &noise_path(&heun, seed), &z).unwrap().x[0];
    }
    m_em /= paths as f64;
    m_heun /= paths as f64;
    // E x(1) is 1 for Itô and e^{1/2} for Stratonovich.
    assert!((m_em - 1.0).abs() < 0.15, "Euler–Maruyama mean {m_em}");
    assert!((m_heun - 0.5f64.exp()).abs() < 0.2, "Heun mean {m_heun}");
}

#[test]
fn permutation_round_trip() {
    let p = Permutation::from_cycles(5, &[&[0, 2, 4], &[1, 3]]).unwrap();
    assert_eq!(p.inverse().after(&p), Permutation::identity(5));
    let mut periods: Vec<u32> = decompose_periods(&p).iter().map(|c| c.period).collect();
    periods.sort_unstable();
    assert_eq!(periods, vec![2, 3]);
}
