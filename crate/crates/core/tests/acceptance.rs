//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mcuf_core::baselines::HuberConfig;
use mcuf_core::correntropy::{gaussian_kernel, KernelBandwidth};
use mcuf_core::harness::{
    run_experiment, simulate, BenchmarkReport, Example, ExperimentConfig, FilterSpec, NoiseCase,
};
use mcuf_core::mcuf::{
    build_regression, fixed_point_update, fixed_point_update_observed, gain_form_equivalence, mcuf_step,
    prepare_update, McufConfig, RegressionModel,
};
use mcuf_core::model::GaussianBelief;
use mcuf_core::parallel::Execution;
use mcuf_core::unscented::{generate_sigma_points, unscented_moments, UTConfig};

const STEPS: usize = 500;
const RUNS: usize = 100;
const SEED: u64 = 0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn mcuf(sigma: f64) -> FilterSpec {
    FilterSpec::Mcuf(McufConfig::new(sigma).unwrap())
}

fn mcuf_eps(sigma: f64, eps: f64) -> FilterSpec {
    FilterSpec::Mcuf(McufConfig::new(sigma).unwrap().with_epsilon(eps))
}

fn huber() -> HuberConfig {
    HuberConfig::default()
}

fn run(example: Example, noise: NoiseCase, filters: Vec<FilterSpec>) -> BenchmarkReport {
    let cfg = ExperimentConfig::new(example, noise, filters)
        .steps(STEPS)
        .runs(RUNS)
        .seed(SEED);
    run_experiment(&cfg).expect("experiment runs")
}

fn mse(report: &BenchmarkReport, spec: &FilterSpec) -> f64 {
    report.filter(spec).expect("filter configured").mse.overall[0]
}

fn iterations(report: &BenchmarkReport, spec: &FilterSpec) -> f64 {
    report
        .filter(spec)
        .and_then(|f| f.avg_iterations)
        .expect("iterated filter")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Reports kept for the structural checks.
#[derive(Default)]
struct Runs {
    reports: Vec<BenchmarkReport>,
}

fn impulsive_measurement_headline(runs: &mut Runs) -> Outcome {
    let started = Instant::now();
    let m = mcuf(2.0);
    let report = run(Example::Ungm, NoiseCase::ImpulsiveMeasurement, vec![FilterSpec::Ukf, m]);
    let elapsed = started.elapsed().as_secs_f64();
    let (ukf, mc) = (mse(&report, &FilterSpec::Ukf), mse(&report, &m));
    let iters = iterations(&report, &m);
    let ratio = ukf / mc;
    runs.reports.push(report);
    outcome(
        mc < ukf && ratio >= 1.10 && (2.0..=4.5).contains(&iters) && elapsed < 60.0,
        format!(
            "UKF {ukf:.3}, MCUF(2) {mc:.3}, ratio {ratio:.3} (need >= 1.10), iterations {iters:.3} (need [2, 4.5]), {elapsed:.1}s"
        ),
    )
}

fn gaussian_table(runs: &mut Runs) -> Outcome {
    let sigmas = [2.0, 3.0, 5.0, 10.0];
    let mut filters = vec![FilterSpec::Ukf];
    filters.extend(sigmas.iter().map(|s| mcuf(*s)));
    let report = run(Example::Ungm, NoiseCase::Gaussian, filters);
    let ukf = mse(&report, &FilterSpec::Ukf);
    let values: Vec<f64> = sigmas.iter().map(|s| mse(&report, &mcuf(*s))).collect();
    let ukf_best = values.iter().all(|v| ukf <= *v);
    let sigma2_worst = values[1..].iter().all(|v| values[0] > *v);
    let non_monotone = values.windows(2).any(|w| w[1] > w[0]);
    runs.reports.push(report);
    outcome(
        ukf_best && sigma2_worst && non_monotone,
        format!(
            "UKF {ukf:.3}; MCUF sigma=2,3,5,10: {} (UKF best {ukf_best}, sigma=2 worst {sigma2_worst}, non-monotone {non_monotone})",
            values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn epsilon_sweep(runs: &mut Runs) -> Outcome {
    let eps = [1e-1, 1e-2, 1e-4, 1e-6, 1e-8];
    let filters: Vec<FilterSpec> = eps.iter().map(|e| mcuf_eps(2.0, *e)).collect();
    let report = run(Example::Ungm, NoiseCase::ImpulsiveMeasurement, filters.clone());
    let iters: Vec<f64> = filters.iter().map(|f| iterations(&report, f)).collect();
    let values: Vec<f64> = filters.iter().map(|f| mse(&report, f)).collect();
    let increasing = iters.windows(2).all(|w| w[1] > w[0]);
    let hi = values.iter().cloned().fold(f64::MIN, f64::max);
    let lo = values.iter().cloned().fold(f64::MAX, f64::min);
    let spread = (hi - lo) / lo;
    runs.reports.push(report);
    outcome(
        increasing && spread < 0.03,
        format!(
            "iterations {} (strictly increasing {increasing}); MSE spread {:.2}% (need < 3%)",
            iters.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" -> "),
            spread * 100.0
        ),
    )
}

fn impulsive_both(runs: &mut Runs) -> Outcome {
    let m = mcuf(2.0);
    let report = run(Example::Ungm, NoiseCase::ImpulsiveBoth, vec![FilterSpec::Ukf, m]);
    let (ukf, mc) = (mse(&report, &FilterSpec::Ukf), mse(&report, &m));
    runs.reports.push(report);
    outcome(
        ukf / mc >= 1.10,
        format!("UKF {ukf:.3}, MCUF(2) {mc:.3}, ratio {:.3} (need >= 1.10)", ukf / mc),
    )
}

fn falling_body(runs: &mut Runs) -> Outcome {
    let started = Instant::now();
    let sigmas = [2.0, 3.0, 5.0, 10.0, 20.0];
    let mut filters = vec![
        FilterSpec::Ekf,
        FilterSpec::Hekf(huber()),
        FilterSpec::Ukf,
        FilterSpec::Hukf(huber()),
    ];
    filters.extend(sigmas.iter().map(|s| mcuf(*s)));
    let gauss = run(Example::FallingBody, NoiseCase::Gaussian, filters.clone());
    let impulsive = run(Example::FallingBody, NoiseCase::Impulsive, filters.clone());
    let elapsed = started.elapsed().as_secs_f64();

    let mut failures = Vec::new();
    let g_ukf = mse(&gauss, &FilterSpec::Ukf);
    if let Some(f) = filters.iter().find(|f| mse(&gauss, f) < g_ukf) {
        failures.push(format!("gaussian: {} {:.4e} below UKF {g_ukf:.4e}", f.label(), mse(&gauss, f)));
    }
    for s in [10.0, 20.0] {
        let gap = rel(mse(&gauss, &mcuf(s)), g_ukf);
        if gap > 0.02 {
            failures.push(format!("gaussian: MCUF({s}) {:.2}% from UKF", gap * 100.0));
        }
    }

    let i = |f: &FilterSpec| mse(&impulsive, f);
    let non_robust = [i(&FilterSpec::Ekf), i(&FilterSpec::Ukf)];
    for f in [FilterSpec::Hekf(huber()), FilterSpec::Hukf(huber()), mcuf(2.0)] {
        let factor = non_robust.iter().cloned().fold(f64::MAX, f64::min) / i(&f);
        if factor < 1.5 {
            failures.push(format!("impulsive: {} improves only {factor:.2}x", f.label()));
        }
    }
    if let Some(f) = filters.iter().find(|f| i(f) < i(&mcuf(2.0))) {
        failures.push(format!("impulsive: {} below MCUF(2)", f.label()));
    }

    let reference = [
        (&gauss, FilterSpec::Ukf, 7.2630e3),
        (&gauss, mcuf(10.0), 7.2674e3),
        (&impulsive, FilterSpec::Ekf, 2.9499e4),
        (&impulsive, FilterSpec::Hekf(huber()), 1.4068e4),
        (&impulsive, FilterSpec::Ukf, 2.8772e4),
        (&impulsive, FilterSpec::Hukf(huber()), 1.3996e4),
        (&impulsive, mcuf(2.0), 1.1457e4),
    ];
    let mut worst = 0.0f64;
    for (report, f, expected) in reference {
        let dev = rel(mse(report, &f), expected);
        worst = worst.max(dev);
        if dev > 0.25 {
            failures.push(format!("{} {:.4e} vs reference {expected:.4e}", f.label(), mse(report, &f)));
        }
    }
    if elapsed >= 300.0 {
        failures.push(format!("took {elapsed:.0}s"));
    }
    let summary = format!(
        "gaussian UKF {g_ukf:.4e}; impulsive UKF {:.4e}, MCUF(2) {:.4e}; worst deviation from reference {:.1}%; {elapsed:.1}s",
        i(&FilterSpec::Ukf),
        i(&mcuf(2.0)),
        worst * 100.0
    );
    runs.reports.push(gauss);
    runs.reports.push(impulsive);
    if failures.is_empty() {
        outcome(true, summary)
    } else {
        outcome(false, format!("{summary}; {}", failures.join("; ")))
    }
}

fn appendix_equivalence() -> Outcome {
    let cfg = ExperimentConfig::new(Example::Ungm, NoiseCase::ImpulsiveMeasurement, vec![mcuf(2.0)])
        .steps(100)
        .runs(1)
        .seed(SEED);
    let scenario = cfg.scenario().unwrap();
    let model = scenario.filter_model(cfg.example);
    let traj = simulate(&cfg, &scenario, 0).unwrap();
    let mc = McufConfig::new(2.0).unwrap();
    let mut belief = scenario.initial_belief.clone();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut error = None;
    for (i, y) in traj.measurements.iter().enumerate() {
        let k = i + 1;
        let prepared = prepare_update(&belief, model.as_ref(), &cfg.ut, y, k).unwrap();
        let reg = &prepared.regression;
        let _ = fixed_point_update_observed(reg, &mc, |rec| {
            match gain_form_equivalence(reg, rec.state_weights, rec.measurement_weights) {
                Ok((matrix, gain)) => {
                    let scale = matrix.norm().max(f64::MIN_POSITIVE);
                    worst = worst.max((&matrix - &gain).norm() / scale);
                    worst = worst.max((&gain - rec.estimate).norm() / scale);
                    checked += 1;
                }
                Err(e) => error = Some(e),
            }
        });
        belief = mcuf_step(&belief, model.as_ref(), &cfg.ut, &mc, y, k).unwrap().0;
    }
    outcome(
        error.is_none() && worst <= 1e-8 && checked >= 100,
        format!("{checked} iterations checked, worst relative gap {worst:.2e} (need <= 1e-8)"),
    )
}

fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

fn random_regression(rng: &mut ChaCha8Rng, n: usize, m: usize) -> RegressionModel {
    let mean = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let prior = GaussianBelief::new(mean, spd(rng, n)).unwrap();
    let h = DMatrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0));
    let r = spd(rng, m);
    let y = DVector::from_fn(m, |_, _| rng.random_range(-10.0..10.0));
    let y_pred = DVector::from_fn(m, |_, _| rng.random_range(-10.0..10.0));
    build_regression(&prior, &h, &r, &y, &y_pred).unwrap()
}

fn least_squares_limit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = McufConfig::new(1e8).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=3);
        let reg = random_regression(&mut rng, n, m);
        let wtw = reg.w.transpose() * &reg.w;
        let ls = wtw
            .cholesky()
            .expect("normal matrix is PD")
            .solve(&(reg.w.transpose() * &reg.d));
        let sol = fixed_point_update(&reg, &cfg).unwrap();
        worst = worst.max((&sol.mean - &ls).norm() / ls.norm().max(f64::MIN_POSITIVE));
    }
    outcome(
        worst <= 1e-6,
        format!("100 instances, worst relative gap {worst:.2e} (need <= 1e-6)"),
    )
}

/// Scalar instance whose innovation is drawn from the model it assumes.
fn consistent_scalar_regression(rng: &mut ChaCha8Rng) -> RegressionModel {
    let p: f64 = rng.random_range(0.1..10.0);
    let r: f64 = rng.random_range(0.1..10.0);
    let h: f64 = rng.random_range(-2.0..2.0);
    let mean: f64 = rng.random_range(-5.0..5.0);
    let y_pred: f64 = rng.random_range(-10.0..10.0);
    let innovation: f64 = rng.sample::<f64, _>(StandardNormal) * (h * h * p + r).sqrt();
    build_regression(
        &GaussianBelief::scalar(mean, p),
        &DMatrix::from_element(1, 1, h),
        &DMatrix::from_element(1, 1, r),
        &DVector::from_element(1, y_pred + innovation),
        &DVector::from_element(1, y_pred),
    )
    .unwrap()
}

fn grid_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let reg = consistent_scalar_regression(&mut rng);
        let sigma = rng.random_range(2.0..10.0);
        let cfg = McufConfig::new(sigma).unwrap().with_epsilon(1e-12);
        let sol = fixed_point_update(&reg, &cfg).unwrap();
        let kernel = KernelBandwidth::new(sigma).unwrap();
        let (lo, hi) = (reg.prior_mean[0] - 50.0, reg.prior_mean[0] + 50.0);
        let points = 1_000_000;
        let mut best = (f64::NEG_INFINITY, lo);
        for i in 0..=points {
            let x = lo + (hi - lo) * i as f64 / points as f64;
            let cost: f64 = (0..2)
                .map(|r| gaussian_kernel(reg.d[r] - reg.w[(r, 0)] * x, kernel))
                .sum();
            if cost > best.0 {
                best = (cost, x);
            }
        }
        worst = worst.max((sol.mean[0] - best.1).abs() / (hi - lo));
    }
    outcome(
        worst <= 1e-4,
        format!("50 instances, worst gap {worst:.2e} of the state range (need <= 1e-4)"),
    )
}

fn ut_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_moment = 0.0f64;
    let mut worst_weight = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=5);
        let p = rng.random_range(1..=4);
        let mean = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
        let belief = GaussianBelief::new(mean.clone(), spd(&mut rng, n)).unwrap();
        let a = DMatrix::from_fn(p, n, |_, _| rng.random_range(-3.0..3.0));
        let b = DVector::from_fn(p, |_, _| rng.random_range(-3.0..3.0));
        let set = generate_sigma_points(&belief, &UTConfig::default()).unwrap();
        worst_weight = worst_weight.max((set.wm.iter().sum::<f64>() - 1.0).abs());
        let (m, c) = unscented_moments(&set, |x| &a * x + &b, None).unwrap();
        let m_exact = &a * &mean + &b;
        let c_exact = &a * &belief.covariance * a.transpose();
        worst_moment = worst_moment
            .max((&m - &m_exact).norm() / m_exact.norm().max(1.0))
            .max((&c - &c_exact).norm() / c_exact.norm().max(1.0));
    }
    outcome(
        worst_moment <= 1e-10 && worst_weight <= 1e-12,
        format!("100 affine maps, worst moment error {worst_moment:.2e}, weight-sum error {worst_weight:.2e}"),
    )
}

fn structural(runs: &Runs) -> Outcome {
    let mut violations = 0usize;
    let mut gap = 0.0f64;
    for report in &runs.reports {
        violations += report.filters.iter().map(|f| f.covariance_violations).sum::<usize>();
        gap = gap.max(report.double_average_gap());
    }

    let filters = vec![
        FilterSpec::Ekf,
        FilterSpec::Ukf,
        FilterSpec::Hukf(huber()),
        mcuf(2.0),
    ];
    let base = ExperimentConfig::new(Example::FallingBody, NoiseCase::Impulsive, filters)
        .steps(100)
        .runs(16)
        .seed(42);
    let reference = run_experiment(&base.clone().execution(Execution::Sequential)).unwrap();
    let mut deterministic = run_experiment(&base.clone().execution(Execution::Sequential)).unwrap() == reference;
    let parallel = || run_experiment(&base.clone().execution(Execution::Parallel)).unwrap();
    #[cfg(feature = "parallel")]
    let pools: Vec<usize> = vec![1, 2, 4, 7];
    #[cfg(not(feature = "parallel"))]
    let pools: Vec<usize> = vec![1];
    for &threads in &pools {
        #[cfg(feature = "parallel")]
        let report = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(parallel);
        #[cfg(not(feature = "parallel"))]
        let report = {
            let _ = threads;
            parallel()
        };
        deterministic &= report == reference;
    }
    let pools = pools.len();
    outcome(
        violations == 0 && gap <= 1e-10 && deterministic,
        format!(
            "{} reports: {violations} covariance violations, double-average gap {gap:.2e}; identical across repeats and {pools} thread pools: {deterministic}",
            runs.reports.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut runs = Runs::default();
    let criteria: Vec<(u32, &str, Outcome)> = vec![
        (1, "UNGM impulsive measurement noise, MCUF beats UKF", impulsive_measurement_headline(&mut runs)),
        (2, "UNGM Gaussian noise, UKF best and sigma=2 worst", gaussian_table(&mut runs)),
        (3, "UNGM epsilon sweep", epsilon_sweep(&mut runs)),
        (4, "UNGM impulsive process and measurement noise", impulsive_both(&mut runs)),
        (5, "falling body, Gaussian and impulsive", falling_body(&mut runs)),
        (6, "matrix form equals gain form on every iteration", appendix_equivalence()),
        (7, "large bandwidth gives least squares", least_squares_limit()),
        (8, "scalar fixed point matches grid argmax", grid_optimality()),
        (9, "unscented transform exact on affine maps", ut_exactness()),
        (10, "structural invariants over full runs", structural(&runs)),
    ];
    let mut failed = 0;
    for (n, name, o) in &criteria {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {n}: {name}: {}", o.detail);
        failed += usize::from(!o.passed);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
