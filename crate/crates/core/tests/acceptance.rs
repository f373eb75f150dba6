//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each, and
//! exits non-zero if any fails. Built with `harness = false` so the lines are
//! never swallowed by output capture.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cylinder_rds::attractor::{hausdorff, krylov_bogolyubov, pullback_attractor, FibreCloud, PullbackConfig};
use cylinder_rds::cocycle::{
    advance_path, discrete_reduction, evolve_steps, jacobian_product, noise_path, phi_n, tol_cocycle, CylinderState,
};
use cylinder_rds::curves::{
    extract_curves, verify_period_shift_invariance, verify_random_periodicity, ExtractionConfig,
};
use cylinder_rds::harness::{replay, run_pipeline, Config, RunOptions};
use cylinder_rds::linalg::dist;
use cylinder_rds::lyapunov::{
    contraction_certificate, estimate_spectrum_ensemble, extremal_exponent, fit_adjusted_variable, geometric_grid,
    CertificateConfig,
};
use cylinder_rds::models::{build_field, model_zoo, zoo_entry, Params};
use cylinder_rds::sde::{build_cocycle, Integrator, SdeSpec, SdeSystem};
use cylinder_rds::{BaseFlow, CocycleSystem, NoisePath};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);
type TestFn = (&'static str, fn(&CylinderState) -> f64);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn zoo(name: &str) -> SdeSystem {
    zoo_entry(name).expect("zoo entry").system().expect("zoo system builds")
}

/// Closed-form periodic solution of dx = (-x + cos 2πs) dt.
fn forced_orbit(s: f64) -> f64 {
    ((2.0 * PI * s).cos() + 2.0 * PI * (2.0 * PI * s).sin()) / (1.0 + 4.0 * PI * PI)
}

fn random_state(rng: &mut ChaCha8Rng, d: usize) -> CylinderState {
    let s = rng.random_range(0..128) as f64 / 128.0;
    CylinderState::new(s, (0..d).map(|_| rng.random_range(-1.5..1.5)).collect())
}

fn cocycle_law() -> Outcome {
    let systems: Vec<SdeSystem> = model_zoo().iter().map(|e| e.system().unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_ratio: f64 = 0.0;
    let mut failures = 0;
    let t0 = Instant::now();
    for i in 0..1000 {
        let sys = &systems[i % systems.len()];
        let path = noise_path(sys, rng.random());
        let z = random_state(&mut rng, sys.dim());
        let u: u64 = rng.random_range(0..256);
        let t: u64 = rng.random_range(0..256);
        let direct = evolve_steps(sys, t + u, &path, &z).unwrap();
        let mid = evolve_steps(sys, u, &path, &z).unwrap();
        let composed = evolve_steps(sys, t, &advance_path(sys, &path, u as i64), &mid).unwrap();
        let err = dist(&direct.x, &composed.x);
        let tol = tol_cocycle(sys, t + u);
        worst_ratio = worst_ratio.max(err / tol);
        if err > tol || direct.s != composed.s {
            failures += 1;
        }
    }
    let took = t0.elapsed();
    outcome(
        failures == 0 && took < Duration::from_secs(60),
        format!(
            "1000 triples over {} models, {failures} failures, worst err/tol {worst_ratio:.2e}, {took:.1?}",
            systems.len()
        ),
    )
}

fn jacobian_chain_rule() -> Outcome {
    let systems: Vec<SdeSystem> = model_zoo().iter().map(|e| e.system().unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let sys = &systems[i % systems.len()];
        let d = sys.dim();
        let path = noise_path(sys, rng.random());
        let z = random_state(&mut rng, d);
        let n: u64 = rng.random_range(1..=20);
        let (_, jp) = jacobian_product(sys, n, &path, &z).unwrap();
        let j = jp.to_matrix();
        let eps = 1e-6;
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for k in 0..d {
            let mut plus = z.clone();
            plus.x[k] += eps;
            let mut minus = z.clone();
            minus.x[k] -= eps;
            let xp = evolve_steps(sys, n, &path, &plus).unwrap().x;
            let xm = evolve_steps(sys, n, &path, &minus).unwrap().x;
            for r in 0..d {
                let fd = (xp[r] - xm[r]) / (2.0 * eps);
                err2 += (j[(r, k)] - fd).powi(2);
                norm2 += fd * fd;
            }
        }
        worst = worst.max(err2.sqrt() / norm2.sqrt().max(1e-300));
    }
    outcome(
        worst <= 1e-3,
        format!("100 samples, n ≤ 20, worst relative error {worst:.2e}"),
    )
}

fn subadditivity() -> Outcome {
    let systems: Vec<SdeSystem> = model_zoo().iter().map(|e| e.system().unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..1000 {
        let sys = &systems[i % systems.len()];
        let path = noise_path(sys, rng.random());
        let z = random_state(&mut rng, sys.dim());
        let n: u64 = rng.random_range(1..=64);
        let m: u64 = rng.random_range(1..=64);
        let whole = phi_n(sys, n + m, &path, &z).unwrap().value;
        let first = phi_n(sys, n, &path, &z).unwrap().value;
        let mid = evolve_steps(sys, n, &path, &z).unwrap();
        let second = phi_n(sys, m, &advance_path(sys, &path, n as i64), &mid).unwrap().value;
        let excess = whole - first - second;
        worst = worst.max(excess);
        if excess > 1e-8 {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("1000 (n, m, ω, z) samples, {violations} violations, largest Φ_(n+m) − Φ_n − Φ_m∘Θ^n = {worst:.2e}"),
    )
}

fn lyapunov_oracles() -> Outcome {
    let t0 = Instant::now();
    let sys = zoo("linear_multiplicative");
    let paths: Vec<NoisePath> = (0..50).map(|i| noise_path(&sys, 500 + i)).collect();
    let z = CylinderState::new(0.0, vec![1.0]);
    let est = estimate_spectrum_ensemble(&sys, &paths, &z, 1000 * sys.steps_per_period(), 10).unwrap();
    let stochastic_ok = (est.top() + 0.5).abs() <= 0.05;

    // Heun on dx = -x dt multiplies by 1 - h + h²/2 per step.
    let det = zoo("forced_linear");
    let h = det.step_duration();
    let scheme = (1.0 - h + h * h / 2.0).ln() / h;
    let d_est = estimate_spectrum_ensemble(&det, &[noise_path(&det, 0)], &z, 100 * det.steps_per_period(), 10).unwrap();
    let det_ok = (d_est.top() - scheme).abs() < 1e-10 && (d_est.top() + 1.0).abs() <= h * h;
    let took = t0.elapsed();
    outcome(
        stochastic_ok && det_ok && took < Duration::from_secs(300),
        format!(
            "Stratonovich a=-0.5, σ=0.3: {:.4} ± {:.4}; deterministic: {:.8} (scheme {:.8}, |λ+1| ≤ h² = {:.1e}); {took:.1?}",
            est.top(),
            est.std_err[0],
            d_est.top(),
            scheme,
            h * h
        ),
    )
}

fn small_cloud(sys: &SdeSystem, path: &NoisePath, bins: usize) -> FibreCloud {
    let mut cfg = PullbackConfig::new(vec![-1.0], vec![1.0]);
    cfg.bins = bins;
    cfg.grid_per_axis = 4;
    cfg.horizon = 20;
    pullback_attractor(sys, path, &cfg).unwrap()
}

fn semiuniform_bound() -> Outcome {
    let sys = zoo("forced_linear");
    let clouds: Vec<FibreCloud> = (0..50)
        .map(|i| small_cloud(&sys, &noise_path(&sys, 700 + i), 50))
        .collect();
    let accepted = clouds.iter().all(|c| c.accepted);
    let grid = geometric_grid(4, 10);
    let ext = extremal_exponent(&sys, &clouds, &grid, 50).unwrap();
    let points: usize = ext.records.iter().map(|r| r.len() / grid.len()).min().unwrap_or(0);
    let good = fit_adjusted_variable(&ext.records, -0.5).unwrap();
    let bad = fit_adjusted_variable(&ext.records, -1.5).unwrap();
    outcome(
        accepted && points == 50 && good.passed() && !bad.passed(),
        format!(
            "n ∈ {{16..1024}}, 50 paths × {points} points: λ'=-0.5 → {} violations; λ'=-1.5 → {} violations",
            good.violations.len(),
            bad.violations.len()
        ),
    )
}

fn contraction_certificates() -> Outcome {
    let sys = zoo("forced_linear");
    let cloud = small_cloud(&sys, &noise_path(&sys, 11), 256);
    let mut cfg = CertificateConfig::new(0.1, 2.0, 0.9);
    cfg.samples_per_bin = 10;
    cfg.bin_stride = 16;
    let good = contraction_certificate(&sys, &cloud, &cfg).unwrap();

    let mut up = Params::new();
    up.insert("a".into(), 1.0);
    let spec = SdeSpec::new(build_field("linear", &up).unwrap(), Integrator::HeunStratonovich, 128);
    let expanding = build_cocycle(spec, &BaseFlow::Wiener { dim: 0 }).unwrap();
    let origin = FibreCloud::from_fn(noise_path(&expanding, 0), 16, 1e-3, |_| vec![vec![0.0]]);
    let mut small = cfg.clone();
    small.k_max = 8;
    small.bin_stride = 1;
    let bad = contraction_certificate(&expanding, &origin, &small).unwrap();
    outcome(
        good.pass && !bad.pass && bad.first_failure_k == Some(1),
        format!(
            "zoo (a): pass = {} (worst margin {:.3}, {} points, k ≤ {}); dx = x dt: pass = {}, first failure k = {:?}",
            good.pass, good.worst_margin, good.tested_points, cfg.k_max, bad.pass, bad.first_failure_k
        ),
    )
}

fn attractor_and_graph() -> Outcome {
    let t0 = Instant::now();
    let sys = zoo("forced_linear");
    let mut cfg = PullbackConfig::new(vec![-1.0], vec![1.0]);
    cfg.horizon = 40;
    let cloud = pullback_attractor(&sys, &noise_path(&sys, 21), &cfg).unwrap();
    let err = (0..cloud.bin_count())
        .map(|b| hausdorff(&cloud.bins[b], &[vec![forced_orbit(cloud.bin_phase(b))]]))
        .fold(0.0, f64::max);
    // The oracle itself solves x' = -x + cos 2πs.
    let oracle_residual = (0..100)
        .map(|i| {
            let s = i as f64 / 100.0;
            let e = 1e-6;
            let deriv = (forced_orbit(s + e) - forced_orbit(s - e)) / (2.0 * e);
            (deriv + forced_orbit(s) - (2.0 * PI * s).cos()).abs()
        })
        .fold(0.0, f64::max);
    let set = extract_curves(&cloud, &ExtractionConfig::new(8, 10.0 * cloud.tol_k)).unwrap();
    let took = t0.elapsed();
    outcome(
        cloud.accepted
            && err <= 1e-3
            && oracle_residual < 1e-6
            && set.n() == 1
            && set.periods() == vec![1]
            && took < Duration::from_secs(120),
        format!(
            "Hausdorff to x*(s) {err:.2e}, n = {}, τ = {:?}, {} bins, {took:.1?}",
            set.n(),
            set.periods(),
            cloud.bin_count()
        ),
    )
}

fn winding_detection() -> Outcome {
    let sys = zoo("winding_two");
    let mut cfg = PullbackConfig::new(vec![-2.0, -2.0], vec![2.0, 2.0]);
    cfg.bins = 128;
    cfg.grid_per_axis = 4;
    cfg.horizon = 20;
    let cloud = pullback_attractor(&sys, &noise_path(&sys, 31), &cfg).unwrap();
    let set = extract_curves(&cloud, &ExtractionConfig::new(8, 0.2)).unwrap();
    let sum: u32 = set.periods().iter().sum();
    outcome(
        set.n() == 1
            && set.periods() == vec![2]
            && set.permutation.to_string() == "(1 2)"
            && sum == 2
            && set.labels == 2,
        format!(
            "n = {}, τ = {:?}, π = {}, Στ = {sum}, branches = {}",
            set.n(),
            set.periods(),
            set.permutation,
            set.labels
        ),
    )
}

fn random_periodicity() -> Outcome {
    let sys = zoo("forced_linear_noisy");
    let hat = discrete_reduction(&sys);
    let omega = noise_path(&sys, 41);
    let mut cfg = PullbackConfig::new(vec![-2.0], vec![2.0]);
    cfg.bins = 128;
    cfg.horizon = 30;
    let ext = ExtractionConfig::new(8, 10.0 * cfg.tol_k());
    let now_cloud = pullback_attractor(&sys, &omega, &cfg).unwrap();
    let now = extract_curves(&now_cloud, &ext).unwrap();
    let mut long = cfg.clone();
    long.horizon = 45;
    let prev = extract_curves(
        &pullback_attractor(&sys, &advance_path(&hat, &omega, -1), &long).unwrap(),
        &ext,
    )
    .unwrap();
    let rep = verify_random_periodicity(&sys, &now, &prev, 1, None).unwrap();
    let tol = 5.0 * now_cloud.tol_k;

    let mut mismatches = 0;
    for j in 1..=10 {
        let shifted = extract_curves(
            &pullback_attractor(&sys, &advance_path(&hat, &omega, -j), &cfg).unwrap(),
            &ext,
        );
        match shifted {
            Ok(s) if verify_period_shift_invariance(&now, &s).equal && s.n() == now.n() => {}
            _ => mismatches += 1,
        }
    }
    outcome(
        rep.pass && rep.residuals.iter().all(|r| *r <= tol) && rep.s_return_error == 0.0 && mismatches == 0,
        format!(
            "k = 1 residuals {:?} ≤ 5·tol_K = {tol:.1e}; 10 base shifts, {mismatches} mismatches in n or τ",
            rep.residuals
        ),
    )
}

fn krylov_bogolyubov_measure() -> Outcome {
    let sys = zoo("forced_linear");
    let initial: Vec<CylinderState> = (0..8)
        .map(|i| CylinderState::new(i as f64 / 8.0, vec![1.0 - i as f64 / 4.0]))
        .collect();
    let paths = vec![noise_path(&sys, 51), noise_path(&sys, 52)];
    let m1 = krylov_bogolyubov(&sys, &paths, &initial, 1000).unwrap();
    let m2 = krylov_bogolyubov(&sys, &paths, &initial, 2000).unwrap();
    let to_curve = |z: &CylinderState| (z.x[0] - forced_orbit(z.s)).abs();
    let d1 = m1.mean_of(to_curve);
    let d2 = m2.mean_of(to_curve);
    let tests: [TestFn; 3] = [
        ("x", |z| z.x[0]),
        ("x²", |z| z.x[0] * z.x[0]),
        ("x cos 2πs", |z| z.x[0] * (2.0 * PI * z.s).cos()),
    ];
    let gaps: Vec<f64> = tests
        .iter()
        .map(|(_, f)| (m1.mean_of(f) - m2.mean_of(f)).abs())
        .chain(std::iter::once((d1 - d2).abs()))
        .collect();
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    outcome(
        d1 <= 1e-2 && worst <= 1e-2,
        format!("mean distance to curve {d1:.2e} at N = 1000, {d2:.2e} at N = 2000; largest N vs 2N gap {worst:.2e}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[run]
name = "replay"
[model]
name = "forced_linear_noisy"
[attractor]
bins = 64
horizon = 20
[lyapunov]
periods = 50
paths = 3
n_grid_hi = 6
[lyapunov.certificate]
k_max = 16
[verify]
shifts = 2
"#;
    let cfg = Config::from_toml_str(text, Vec::<(String, String)>::new()).unwrap();
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..RunOptions::default()
    };
    let first = run_pipeline(&cfg, &opts).unwrap();
    let (second, rep) = replay(&first, Some(dir.path())).unwrap();
    let mut bytes_equal = true;
    for o in &first.outputs {
        let a = std::fs::read(std::path::Path::new(&first.run_dir).join(&o.file)).unwrap();
        let b = std::fs::read(std::path::Path::new(&second.run_dir).join(&o.file)).unwrap();
        bytes_equal &= a == b;
    }
    outcome(
        first.complete() && rep.identical && bytes_equal && first.run_dir != second.run_dir,
        format!(
            "{} outputs replayed into a new run directory, identical = {}, byte-equal = {bytes_equal}",
            first.outputs.len(),
            rep.identical
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("cocycle law", cocycle_law),
        ("Jacobian chain rule", jacobian_chain_rule),
        ("subadditivity of Φ_n", subadditivity),
        ("Lyapunov oracles", lyapunov_oracles),
        ("semiuniform bound", semiuniform_bound),
        ("contraction certificate", contraction_certificates),
        ("attractor and graph", attractor_and_graph),
        ("winding detection", winding_detection),
        ("random periodicity", random_periodicity),
        ("Krylov-Bogolyubov", krylov_bogolyubov_measure),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let res = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !res.pass {
            failed += 1;
        }
        println!(
            "acceptance {:>2} {:<24} {} [{:.1?}] {}",
            i + 1,
            name,
            if res.pass { "PASS" } else { "FAIL" },
            t0.elapsed(),
            res.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
