use isihd::dynamics::{simulate_path, CheckpointPolicy, Integrator, NoiseKind, NoiseModel, SdeConfig};
use isihd::harness::preset;
use isihd::lyapunov::{energy_general, energy_strongly_convex, CoefficientQuadruple};
use isihd::montecarlo::{estimate_exponential_rate, estimate_rate, run_ensemble};
use isihd::problems::Objective;
use isihd::schedules::{log_grid, DampingSchedule, DiffusionSchedule, Evaluation};
use isihd::special::upper_incomplete_gamma;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn objective(kind: u8, seed: u64) -> Objective {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind % 3 {
        0 => {
            let spectrum: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..10.0)).collect();
            let x_star: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            Objective::rotated_quadratic(spectrum, x_star, rng.random_range(-1.0..1.0), seed).unwrap()
        }
        1 => Objective::random_least_squares(7, 5, 3, seed).unwrap(),
        _ => {
            let dirs = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
            Objective::log_sum_exp(dirs, rng.random_range(0.2..2.0), vec![0.0; 5], 0.0).unwrap()
        }
    }
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 5)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_finite_differences(kind in 0u8..3, seed in 0u64..1000, x in point()) {
        let f = objective(kind, seed);
        let g = f.gradient(&x);
        for i in 0..x.len() {
            let h = 1e-6 * (1.0 + x[i].abs());
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "coord {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn convexity_and_descent_inequality(kind in 0u8..3, seed in 0u64..1000, x in point(), y in point()) {
        let f = objective(kind, seed);
        let l = f.lipschitz();
        let lin = f.linearization(&x, &y);
        let d2 = norm2(&sub(&y, &x));
        let tol = 1e-9 * (1.0 + f.value(&y).abs());
        prop_assert!(f.value(&y) >= lin - tol);
        prop_assert!(f.value(&y) <= lin + 0.5 * l * d2 + tol);
        let mu = f.strong_mu();
        prop_assert!(f.value(&y) >= lin + 0.5 * mu * d2 - tol);
    }

    #[test]
    fn gradient_bounded_by_gap(kind in 0u8..3, seed in 0u64..1000, x in point()) {
        let f = objective(kind, seed);
        let g2 = norm2(&f.gradient(&x));
        prop_assert!(f.gap(&x) >= 0.0);
        prop_assert!(g2 <= 2.0 * f.lipschitz() * f.gap(&x) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn projection_lands_on_minimizers(kind in 0u8..3, seed in 0u64..1000, x in point()) {
        let f = objective(kind, seed);
        let p = f.project_solution(&x);
        prop_assert!(f.gap(&p) <= 1e-9 * (1.0 + f.value(&x).abs()));
        prop_assert!((f.distance_to_solution_set(&x) - norm2(&sub(&x, &p)).sqrt()).abs() <= 1e-9);
    }

    #[test]
    fn incomplete_gamma_matches_statrs(a in 0.1..6.0f64, x in 0.01..60.0f64) {
        let ours = upper_incomplete_gamma(a, x).unwrap();
        let oracle = statrs::function::gamma::gamma_ur(a, x) * statrs::function::gamma::gamma(a);
        prop_assert!(((ours - oracle) / oracle).abs() < 1e-7, "{ours} vs {oracle}");
    }

    #[test]
    // Quadrature needs a tail it can truncate: r ≤ 0.9, or r = 1 with α well above 1.
    fn capital_gamma_identities(
        (alpha, r) in prop_oneof![(0.5..6.0f64, 0.1..=0.9f64), (1.5..6.0f64, Just(1.0))],
        t in 1.01..200.0f64,
    ) {
        let g = DampingSchedule::power(alpha, r, 1.0).unwrap();
        let closed = g.capital_gamma_with(t, Evaluation::ClosedForm).unwrap();
        let quad = g.capital_gamma_with(t, Evaluation::Quadrature).unwrap();
        prop_assert!(((closed - quad) / closed).abs() < 1e-6);
        let h = 1e-4 * (t - 1.0).min(t);
        let d = (g.capital_gamma(t + h).unwrap() - g.capital_gamma(t - h).unwrap()) / (2.0 * h);
        prop_assert!((d - (g.value(t) * closed - 1.0)).abs() < 1e-5 * (1.0 + d.abs()));
        prop_assert!(closed > 0.0);
    }

    #[test]
    fn power_rate_is_recovered(p in -4.0..-0.2f64, c in 0.01..100.0f64, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series: Vec<(f64, f64)> = log_grid(10.0, 1000.0, 31)
            .into_iter()
            .map(|t| (t, c * t.powf(p) * (1.0 + 0.01 * isihd::rng::standard_normal(&mut rng))))
            .collect();
        let fit = estimate_rate(&series, (10.0, 1000.0)).unwrap();
        prop_assert!((fit.slope - p).abs() < 0.05, "{} vs {p}", fit.slope);
    }

    #[test]
    fn exponential_rate_is_recovered(k in 0.05..2.0f64, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series: Vec<(f64, f64)> = (0..40)
            .map(|i| 1.0 + 0.5 * i as f64)
            .map(|t| (t, (-k * t).exp() * (1.0 + 0.01 * isihd::rng::standard_normal(&mut rng))))
            .collect();
        let fit = estimate_exponential_rate(&series, (1.0, 20.5)).unwrap();
        prop_assert!((fit.slope + k).abs() < 0.05, "{} vs {}", fit.slope, -k);
    }

    #[test]
    fn modulated_noise_is_lipschitz(x in point(), y in point(), t in 1.0..100.0f64) {
        let noise = NoiseModel::new(NoiseKind::StateModulated, DiffusionSchedule::power(0.3, 1.2, 1.0).unwrap(), 5).unwrap();
        let dist = noise.hs_distance(t, &x, &y);
        prop_assert!(dist <= noise.l0() * norm2(&sub(&x, &y)).sqrt() * (1.0 + 1e-12) + 1e-15);
        prop_assert!(noise.hs_norm(t, &x) <= DiffusionSchedule::power(0.3, 1.2, 1.0).unwrap().value(t) * (1.0 + 1e-12));
    }

    #[test]
    fn general_energy_is_nonnegative(x in point(), v in point(), t in 5.0..1e4f64, seed in 0u64..1000) {
        let f = objective(0, seed);
        let q = CoefficientQuadruple::cor1(4.0, 0.5, 1.0, 2.5).unwrap();
        let x_star = f.project_solution(&x);
        let e = energy_general(&q, 0.5 + 1.0 / t, t, &x, &v, &f, &x_star).unwrap();
        prop_assert!(e >= 0.0);
    }

    #[test]
    fn strongly_convex_energy_is_nonnegative(x in point(), v in point(), seed in 0u64..1000) {
        let f = objective(0, seed);
        let mu = f.strong_mu();
        let e = energy_strongly_convex(mu, 0.5 / mu.sqrt(), &x, &v, &f).unwrap();
        prop_assert!(e >= 0.0);
    }
}

fn short_cor1(h: f64, t_end: f64, noiseless: bool) -> SdeConfig {
    let mut sde = preset("cor1").unwrap().build().unwrap().sde;
    sde.h = h;
    sde.t_end = t_end;
    sde.checkpoints = vec![t_end];
    if noiseless {
        sde.noise = NoiseModel::new(NoiseKind::Isotropic, DiffusionSchedule::zero(sde.t0), sde.dim()).unwrap();
    }
    sde
}

#[test]
fn reformulation_agrees_with_direct_scheme() {
    for h in [1e-2, 5e-3, 2.5e-3] {
        let sde = short_cor1(h, 10.0, false);
        let a = simulate_path(&sde, 3, Integrator::Isihd, None).unwrap();
        let b = simulate_path(&sde, 3, Integrator::Refor, None).unwrap();
        let diff = norm2(&sub(&a.final_x, &b.final_x)).sqrt();
        assert!(diff <= 5.0 * h, "h = {h}: |X_isihd − X_refor| = {diff}");
    }
}

#[test]
fn first_order_on_short_horizon() {
    let run = |h: f64| simulate_path(&short_cor1(h, 10.0, true), 0, Integrator::Isihd, None).unwrap().final_x;
    let reference = run(3.125e-4);
    let errors: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&h| norm2(&sub(&run(h), &reference)).sqrt()).collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.5..=3.0).contains(&ratio), "errors {errors:?}");
    }
}

#[test]
fn noiseless_ensemble_mean_is_the_trajectory() {
    let sde = short_cor1(0.01, 20.0, true);
    let single = simulate_path(&sde, 0, Integrator::Isihd, None).unwrap();
    let ens = run_ensemble(&sde, 5, Integrator::Isihd, None, false).unwrap();
    let s = &ens.stats.field("f_gap").unwrap()[0];
    assert_eq!(s.mean, single.records[0].f_gap);
    assert_eq!(s.stderr, 0.0);
}

#[test]
fn strongly_convex_energy_decreases_in_expectation() {
    let exp = preset("strongly-convex").unwrap().build().unwrap();
    let mut sde = exp.sde.clone();
    sde.t_end = 10.0;
    sde.checkpoints = CheckpointPolicy::Linear { count: 41 }.resolve(sde.t0, sde.t_end, sde.h).unwrap();
    let ens = run_ensemble(&sde, 64, Integrator::Isihd, exp.energy.as_ref(), false).unwrap();
    let e = ens.stats.field("energy").unwrap();
    for (k, w) in e.windows(2).enumerate() {
        assert!(w[1].mean <= w[0].mean + 2.0 * w[1].stderr.max(w[0].stderr), "checkpoint {k}: {:?}", w);
    }
}

#[test]
fn gap_grows_with_noise_level() {
    let mut sde = short_cor1(0.01, 50.0, false);
    sde.x0 = sde.objective.project_solution(&sde.x0);
    sde.v0 = vec![0.0; sde.dim()];
    let mut last = 0.0;
    for sigma0 in [0.05, 0.1, 0.2, 0.4] {
        sde.noise = NoiseModel::new(NoiseKind::Isotropic, DiffusionSchedule::power(sigma0, 1.6, 1.0).unwrap(), sde.dim()).unwrap();
        let ens = run_ensemble(&sde, 16, Integrator::Isihd, None, false).unwrap();
        let gap = ens.stats.field("f_gap").unwrap()[0].mean;
        assert!(gap > last, "σ0 = {sigma0}: {gap} ≤ {last}");
        last = gap;
    }
}
