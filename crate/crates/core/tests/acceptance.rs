//! Exit criteria. Each test writes one `PASS`/`FAIL` line to stderr (bypassing
//! output capture) and then asserts.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use excess_mass::bench::{run_experiment, ExperimentConfig, LevelGridSpec};
use excess_mass::densities::{DensitySpec, Sample};
use excess_mass::excess::{
    curve, level_grid, FunctionalEstimator, FunctionalOptions, LevelEstimator, Method,
    PluginEstimator,
};
use excess_mass::fourier::{coefficients, exact_phi, tail_bound};
use excess_mass::grid::{QuadratureGrid, SupportBox};
use excess_mass::kde::BootstrapMoments;
use excess_mass::wavelet::{level_schedule, HaarEstimator};

const MASTER_SEED: u64 = 1;
const REPLICATIONS: usize = 20;

fn report(id: u32, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {id:>2}: {verdict} | {detail}");
}

fn experiment(density: &str, n: usize) -> ExperimentConfig {
    ExperimentConfig {
        density: density.to_string(),
        n,
        replications: REPLICATIONS,
        levels: LevelGridSpec {
            count: 100,
            lo: 0.0,
            hi: 1.0,
        },
        seed: MASTER_SEED,
        methods: vec![Method::Plugin, Method::FunctionalMean],
        ..Default::default()
    }
}

/// (E2 plug-in, E2 functional, ratio, p2)
fn table_row(density: &str, n: usize) -> (f64, f64, f64, f64) {
    let r = run_experiment(&experiment(density, n)).unwrap();
    let c = r.comparison(Method::FunctionalMean).unwrap();
    (
        r.summary(Method::Plugin).unwrap().mean_e2,
        r.summary(Method::FunctionalMean).unwrap().mean_e2,
        c.ratio_e2,
        c.win_e2,
    )
}

#[test]
fn criterion_01_fourier_tail_bound() {
    let mut worst_slack = f64::INFINITY;
    let mut pass = true;
    for order in [5usize, 20, 100, 500] {
        let bound = 4.0 / (PI * PI * order as f64);
        for i in 1..=9 {
            let nu = i as f64 / 10.0;
            let c = coefficients(nu, order, 1.0).unwrap();
            let sup = (0..10_000)
                .map(|m| {
                    let u = -1.0 + 2.0 * m as f64 / 9_999.0;
                    (exact_phi(u, nu) - c.approx_phi(u).unwrap()).abs()
                })
                .fold(0.0, f64::max);
            pass &= sup <= bound;
            worst_slack = worst_slack.min(bound - sup);
        }
    }
    report(
        1,
        pass,
        format!("min(bound - sup error) = {worst_slack:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_gaussian_oracle() {
    let a = DensitySpec::builtin("a").unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let peak = 1.0 / (2.0 * PI).sqrt();
    let levels: Vec<f64> = (1..=50).map(|i| peak * i as f64 / 51.0).collect();
    let oracle = a.oracle_curve(&levels).unwrap();
    let worst = levels
        .iter()
        .zip(oracle.values())
        .map(|(&nu, &v)| {
            let x = (-2.0 * (nu * (2.0 * PI).sqrt()).ln()).sqrt();
            (v - (2.0 * normal.cdf(x) - 1.0 - 2.0 * nu * x)).abs()
        })
        .fold(0.0, f64::max);
    let pass = worst <= 1e-6;
    report(
        2,
        pass,
        format!("max |oracle - closed form| = {worst:.3e} (tol 1e-6)"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_gaussian_debiasing_identity() {
    const DRAWS: usize = 1_000_000;
    let mut worst = 0.0f64;
    let mut seed = 0;
    for k in [1usize, 2, 5, 10] {
        for target in [0.5, 1.0, 2.0] {
            let lambda = target / (PI * k as f64);
            for mu in [0.1, 0.35, 0.8] {
                seed += 1;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = PI * k as f64;
                let factor = (0.5 * w * w * lambda * lambda).exp();
                let (mut sum, mut sq) = (0.0, 0.0);
                for _ in 0..DRAWS {
                    let z: f64 = rng.sample(StandardNormal);
                    let y = factor * (w * (mu + lambda * z)).cos();
                    sum += y;
                    sq += y * y;
                }
                let m = DRAWS as f64;
                let mean = sum / m;
                let se = ((sq / m - mean * mean) / (m - 1.0)).sqrt();
                worst = worst.max((mean - (w * mu).cos()).abs() / se);
            }
        }
    }
    let pass = worst <= 4.0;
    report(
        3,
        pass,
        format!("max deviation = {worst:.2} standard errors (tol 4)"),
    );
    assert!(pass);
}

/// Haar scaling function at level `j` for cell `cell` (row-major) of `est`'s grid.
fn haar_phi(est: &HaarEstimator, cell: usize, x: &[f64]) -> f64 {
    let j = est.level();
    let d = x.len();
    let width = 0.5f64.powi(j as i32);
    let mut rest = cell;
    let mut idx = vec![0usize; d];
    for p in (0..d).rev() {
        let m = est.cells_per_dim()[p];
        idx[p] = rest % m;
        rest /= m;
    }
    let b = est.support();
    for p in 0..d {
        let lo = b.low(p) + idx[p] as f64 * width;
        let last = idx[p] + 1 == est.cells_per_dim()[p];
        let inside = x[p] >= lo && (x[p] < lo + width || (last && x[p] <= b.high(p)));
        if !inside {
            return 0.0;
        }
    }
    2f64.powf(j as f64 * d as f64 / 2.0)
}

/// The variance estimator written as the full double sum over cell pairs.
fn double_sum_variance(est: &HaarEstimator, sample: &Sample, t: &[f64]) -> f64 {
    let cells = est.counts().len();
    let n = sample.len() as f64;
    let mut first = vec![0.0; cells];
    let mut second = vec![0.0; cells * cells];
    for x in sample.points() {
        let phi: Vec<f64> = (0..cells).map(|l| haar_phi(est, l, x)).collect();
        for l1 in 0..cells {
            first[l1] += phi[l1] / n;
            for l2 in 0..cells {
                second[l1 * cells + l2] += phi[l1] * phi[l2] / n;
            }
        }
    }
    let at_t: Vec<f64> = (0..cells).map(|l| haar_phi(est, l, t)).collect();
    let mut total = 0.0;
    for l1 in 0..cells {
        for l2 in 0..cells {
            total += (second[l1 * cells + l2] - first[l1] * first[l2]) * at_t[l1] * at_t[l2];
        }
    }
    total / n
}

#[test]
fn criterion_04_haar_variance_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let d = 1 + trial % 2;
        let n = rng.random_range(20..=200);
        let points: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>().powi(2)).collect();
        let sample = Sample::new(d, points).unwrap();
        let schedule = level_schedule(n, d).unwrap();
        let j = rng.random_range(schedule.coarsest..=schedule.finest);
        let support = SupportBox::new(vec![(0.0, 1.0); d]).unwrap();
        let est = HaarEstimator::fit(&sample, j, &support).unwrap();
        for _ in 0..5 {
            let t: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let collapsed = est.variance_estimate(&t).unwrap().raw;
            worst = worst.max((double_sum_variance(&est, &sample, &t) - collapsed).abs());
        }
    }
    let pass = worst <= 1e-12;
    report(
        4,
        pass,
        format!("max |double sum - collapsed| = {worst:.3e} (tol 1e-12)"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_oracle_pass_through() {
    let order = 100;
    let levels = level_grid(100, 0.0, 1.0).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for id in ["a", "A"] {
        let spec = DensitySpec::builtin(id).unwrap();
        let oracle = spec.oracle_curve(&levels).unwrap();
        let support = spec.default_box();
        let grid = QuadratureGrid::uniform(
            support.clone(),
            excess_mass::excess::default_grid_points(spec.dimension()),
        )
        .unwrap();
        let pdf = grid.evaluate(|x| spec.pdf(x).unwrap());
        let tol = tail_bound(order, 1.0) * support.volume() + 1e-3;
        let moments = BootstrapMoments::from_values(grid.clone(), pdf.clone()).unwrap();
        let opts = FunctionalOptions::default();
        let estimators: Vec<Box<dyn LevelEstimator>> = vec![
            Box::new(PluginEstimator::from_values(&grid, pdf.clone()).unwrap()),
            Box::new(FunctionalEstimator::kernel_mean(&moments, order, opts).unwrap()),
            Box::new(FunctionalEstimator::kernel_corrected(&moments, order, opts).unwrap()),
            Box::new(
                FunctionalEstimator::from_values(
                    &grid,
                    pdf.clone(),
                    Some(vec![0.0; pdf.len()]),
                    order,
                    opts,
                    Method::Wavelet,
                )
                .unwrap(),
            ),
        ];
        for est in &estimators {
            let c = curve(est.as_ref(), &levels).unwrap();
            let err = c
                .values()
                .iter()
                .zip(oracle.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            pass &= err <= tol;
            detail.push(format!("{id}/{} {err:.1e}", est.method().name()));
        }
    }
    report(5, pass, format!("max errors: {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_06_truncated_variance_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut pass = true;
    let mut checked = 0usize;
    for (id, n) in [("c", 500usize), ("B", 800)] {
        let spec = DensitySpec::builtin(id).unwrap();
        let sample = spec.sample(n, rng.random()).unwrap();
        let support = spec.default_box();
        let d = spec.dimension();
        for j in level_schedule(n, d).unwrap().levels() {
            let est = HaarEstimator::fit(&sample, j, &support).unwrap();
            let cap = 2f64.powi((j as usize * d) as i32) / n as f64;
            for _ in 0..10_000 {
                let t: Vec<f64> = (0..d)
                    .map(|p| rng.random_range(support.low(p)..=support.high(p)))
                    .collect();
                pass &= est.variance_estimate(&t).unwrap().truncated <= cap;
                checked += 1;
            }
        }
    }
    report(
        6,
        pass,
        format!("{checked} points checked against 2^(jd)/n"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_density_c_large_sample() {
    let (pi, star, ratio, p2) = table_row("c", 10_000);
    let pass = ratio >= 1.5 && p2 >= 0.75;
    report(
        7,
        pass,
        format!("c n=10000: E2_PI {pi:.5} E2_* {star:.5} ratio {ratio:.2} (>= 1.5) p2 {p2:.2} (>= 0.75)"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_density_d() {
    let mut pass = true;
    let mut detail = Vec::new();
    for n in [1000, 10_000] {
        let (_, _, ratio, p2) = table_row("d", n);
        pass &= ratio > 1.0 && p2 >= 0.9;
        detail.push(format!("n={n}: ratio {ratio:.2} (> 1) p2 {p2:.2} (>= 0.9)"));
    }
    report(8, pass, format!("d {}", detail.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_09_density_big_a() {
    let (pi, star, ratio, p2) = table_row("A", 1000);
    let pass = ratio >= 1.3 && p2 >= 0.8;
    report(
        9,
        pass,
        format!(
            "A n=1000: E2_PI {pi:.5} E2_* {star:.5} ratio {ratio:.2} (>= 1.3) p2 {p2:.2} (>= 0.8)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_consistency_trend() {
    let errors: Vec<f64> = [100, 1000, 10_000]
        .iter()
        .map(|&n| table_row("a", n).1)
        .collect();
    let pass = errors.windows(2).all(|w| w[1] < w[0]);
    report(
        10,
        pass,
        format!(
            "a: E2_* {:.6} -> {:.6} -> {:.6} strictly decreasing",
            errors[0], errors[1], errors[2]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_small_sample_caveat() {
    let (pi, star, ratio, p2) = table_row("c", 100);
    let pass = p2 <= 0.5;
    report(
        11,
        pass,
        format!("c n=100: E2_PI {pi:.5} E2_* {star:.5} ratio {ratio:.2} p2 {p2:.2} (<= 0.5)"),
    );
    assert!(pass);
}
