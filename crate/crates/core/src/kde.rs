//! Product-Gaussian kernel density estimation, the automatic bandwidth rule,
//! the smoothness back-out and the bootstrap moments of the estimator.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::Sample;
use crate::error::{ensure_finite, Error, Result};
use crate::grid::QuadratureGrid;
use crate::rng;

/// Bootstrap replications used by default.
pub const DEFAULT_REPLICATIONS: usize = 100;
/// Bounds of the smoothness back-out.
pub const SMOOTHNESS_RANGE: (f64, f64) = (0.05, 10.0);

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gauss(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// A fitted kernel density estimate: a sample and one bandwidth per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    sample: Sample,
    bandwidth: Vec<f64>,
}

impl KernelModel {
    pub fn new(sample: Sample, bandwidth: Vec<f64>) -> Result<Self> {
        if bandwidth.len() != sample.dimension() {
            return Err(Error::DimensionMismatch {
                expected: sample.dimension(),
                got: bandwidth.len(),
            });
        }
        for &h in &bandwidth {
            ensure_finite("bandwidth", h)?;
            if h <= 0.0 {
                return Err(Error::invalid(
                    "bandwidth",
                    format!("must be positive, got {h}"),
                ));
            }
        }
        Ok(Self { sample, bandwidth })
    }

    /// Model with the automatic bandwidth of [`bandwidth_auto`].
    pub fn auto(sample: Sample) -> Result<Self> {
        let h = bandwidth_auto(&sample)?;
        Self::new(sample, h)
    }

    pub fn sample(&self) -> &Sample {
        &self.sample
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn dimension(&self) -> usize {
        self.sample.dimension()
    }

    /// `(1/n) sum_i prod_p phi((x_p - X_ip) / h_p) / h_p`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        let norm: f64 = self.bandwidth.iter().product();
        let total: f64 = self
            .sample
            .points()
            .map(|p| {
                p.iter()
                    .zip(x)
                    .zip(&self.bandwidth)
                    .map(|((xi, t), h)| gauss((t - xi) / h))
                    .product::<f64>()
            })
            .sum();
        Ok(total / (norm * self.sample.len() as f64))
    }

    /// The estimate at every node of `grid`, row-major.
    pub fn evaluate_grid(&self, grid: &QuadratureGrid) -> Result<Vec<f64>> {
        let kernels = KernelMatrices::new(&self.sample, &self.bandwidth, grid)?;
        let ones = Array1::from_elem(self.sample.len(), 1.0);
        Ok(kernels.weighted(&ones))
    }
}

/// Per-axis kernel matrices `K_p[g, i] = phi((node_g - X_ip) / h_p) / h_p`.
struct KernelMatrices {
    axes: Vec<Array2<f64>>,
    n: usize,
}

impl KernelMatrices {
    fn new(sample: &Sample, bandwidth: &[f64], grid: &QuadratureGrid) -> Result<Self> {
        let d = sample.dimension();
        if grid.dimension() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: grid.dimension(),
            });
        }
        if d > 2 {
            return Err(Error::invalid("dimension", "kernel grids support d <= 2"));
        }
        let n = sample.len();
        let axes = (0..d)
            .map(|p| {
                let nodes = grid.nodes(p);
                let column = sample.column(p);
                let h = bandwidth[p];
                let data: Vec<f64> = nodes
                    .par_iter()
                    .flat_map_iter(|&t| column.iter().map(move |x| gauss((t - x) / h) / h))
                    .collect();
                Array2::from_shape_vec((nodes.len(), n), data).expect("shape matches data")
            })
            .collect();
        Ok(Self { axes, n })
    }

    /// KDE with point multiplicities `w` (sum n) on the grid, row-major.
    fn weighted(&self, w: &Array1<f64>) -> Vec<f64> {
        let n = self.n as f64;
        match self.axes.as_slice() {
            [k] => k.dot(w).iter().map(|v| v / n).collect(),
            [k1, k2] => {
                let scaled = k1 * &w.view().insert_axis(Axis(0));
                let f = scaled.dot(&k2.t());
                f.iter().map(|v| v / n).collect()
            }
            _ => unreachable!("dimension checked on construction"),
        }
    }
}

/// Sample quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Rule-of-thumb bandwidth per axis:
/// `0.9 * min(sd, IQR / 1.34) * n^(-1/(d+4))`, falling back to `sd` when the IQR is 0.
pub fn bandwidth_auto(sample: &Sample) -> Result<Vec<f64>> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::invalid(
            "sample",
            "need at least 2 points to pick a bandwidth",
        ));
    }
    let d = sample.dimension();
    let factor = 0.9 * (n as f64).powf(-1.0 / (d as f64 + 4.0));
    (0..d)
        .map(|p| {
            let mut x = sample.column(p);
            let mean = x.iter().sum::<f64>() / n as f64;
            let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            if sd == 0.0 {
                return Err(Error::DegenerateSample(p));
            }
            x.sort_by(f64::total_cmp);
            let iqr = quantile(&x, 0.75) - quantile(&x, 0.25);
            let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
            Ok(factor * spread)
        })
        .collect()
}

/// Geometric mean of per-axis bandwidths.
pub fn geometric_mean(bandwidth: &[f64]) -> f64 {
    let logs: f64 = bandwidth.iter().map(|h| h.ln()).sum();
    (logs / bandwidth.len() as f64).exp()
}

/// Inverts `h = n^(-1/(d + 2s))` for `s`, clamped to [`SMOOTHNESS_RANGE`].
pub fn smoothness_from_bandwidth(h: f64, n: usize, d: usize) -> Result<f64> {
    ensure_finite("bandwidth", h)?;
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidBandwidth(h));
    }
    if n < 3 {
        return Err(Error::invalid("n", format!("must be at least 3, got {n}")));
    }
    let s = ((n as f64).ln() / -h.ln() - d as f64) / 2.0;
    Ok(s.clamp(SMOOTHNESS_RANGE.0, SMOOTHNESS_RANGE.1))
}

/// Smoothness, bandwidth and Fourier order tuned with the `n ln n` factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedParameters {
    pub smoothness: f64,
    pub bandwidth: f64,
    pub order: usize,
    pub c0: f64,
}

/// `N = floor((C0 n ln n)^(s/(d+2s)))` with `C0 = d`, at least 1, and
/// `h = (n ln n)^(-1/(d+2s))`.
pub fn tuned_parameters(smoothness: f64, n: usize, d: usize) -> Result<TunedParameters> {
    ensure_finite("smoothness", smoothness)?;
    if smoothness <= 0.0 {
        return Err(Error::invalid(
            "smoothness",
            format!("must be positive, got {smoothness}"),
        ));
    }
    if n < 3 {
        return Err(Error::invalid("n", format!("must be at least 3, got {n}")));
    }
    let c0 = d as f64;
    let nf = n as f64;
    let nln = nf * nf.ln();
    let denom = d as f64 + 2.0 * smoothness;
    let order = ((c0 * nln).powf(smoothness / denom).floor() as usize).max(1);
    Ok(TunedParameters {
        smoothness,
        bandwidth: nln.powf(-1.0 / denom),
        order,
        c0,
    })
}

/// Everything the automatic procedure derives from a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoParameters {
    /// Rule-of-thumb bandwidth per axis.
    pub reference_bandwidth: Vec<f64>,
    pub tuned: TunedParameters,
    /// Tuned bandwidth per axis: the reference shape rescaled so that its
    /// geometric mean equals the tuned bandwidth.
    pub bandwidth: Vec<f64>,
}

pub fn auto_parameters(sample: &Sample) -> Result<AutoParameters> {
    let reference = bandwidth_auto(sample)?;
    let geo = geometric_mean(&reference);
    let n = sample.len();
    let d = sample.dimension();
    let s = smoothness_from_bandwidth(geo, n, d)?;
    let tuned = tuned_parameters(s, n, d)?;
    let bandwidth = if d == 1 {
        vec![tuned.bandwidth]
    } else {
        reference
            .iter()
            .map(|h| h * tuned.bandwidth / geo)
            .collect()
    };
    Ok(AutoParameters {
        reference_bandwidth: reference,
        tuned,
        bandwidth,
    })
}

/// Pointwise bootstrap mean and variance of the estimator on a grid, plus the
/// full-sample estimate with the same bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapMoments {
    pub grid: QuadratureGrid,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub fit: Vec<f64>,
    pub replications: usize,
}

impl BootstrapMoments {
    /// Zero-variance moments whose mean and fit are `values`.
    pub fn from_values(grid: QuadratureGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            variance: vec![0.0; values.len()],
            fit: values.clone(),
            mean: values,
            grid,
            replications: 0,
        })
    }
}

/// `B` nonparametric bootstrap replicates of the KDE with bandwidth `h`.
/// Replicate `b` draws its resample from the stream `derive_seed(seed, b)`.
pub fn bootstrap_moments(
    sample: &Sample,
    bandwidth: &[f64],
    grid: &QuadratureGrid,
    replications: usize,
    seed: u64,
) -> Result<BootstrapMoments> {
    if replications < 2 {
        return Err(Error::invalid(
            "replications",
            format!("need at least 2, got {replications}"),
        ));
    }
    let model = KernelModel::new(sample.clone(), bandwidth.to_vec())?;
    let kernels = KernelMatrices::new(model.sample(), model.bandwidth(), grid)?;
    let n = sample.len();
    let replicates: Vec<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|b| {
            let mut stream = rng::stream(rng::derive_seed(seed, b as u64));
            let mut w = Array1::<f64>::zeros(n);
            for _ in 0..n {
                w[stream.random_range(0..n)] += 1.0;
            }
            kernels.weighted(&w)
        })
        .collect();
    let g = grid.len();
    let bf = replications as f64;
    let mut mean = vec![0.0; g];
    for r in &replicates {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= bf);
    let mut variance = vec![0.0; g];
    for r in &replicates {
        for ((s, v), m) in variance.iter_mut().zip(r).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    variance.iter_mut().for_each(|s| *s /= bf - 1.0);
    let fit = kernels.weighted(&Array1::from_elem(n, 1.0));
    Ok(BootstrapMoments {
        grid: grid.clone(),
        mean,
        variance,
        fit,
        replications,
    })
}

/// `int phi^2` for the standard normal kernel, `1 / (2 sqrt(pi))`.
pub fn kernel_roughness() -> f64 {
    1.0 / (2.0 * PI.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::DensitySpec;
    use crate::grid::SupportBox;
    use approx::assert_relative_eq;

    fn sample_1d(values: &[f64]) -> Sample {
        Sample::new(1, values.to_vec()).unwrap()
    }

    #[test]
    fn single_kernel_peak() {
        let m = KernelModel::new(sample_1d(&[0.0]), vec![1.0]).unwrap();
        assert_relative_eq!(m.evaluate(&[0.0]).unwrap(), INV_SQRT_2PI, epsilon = 1e-15);
        assert!(m.evaluate(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_bad_bandwidth() {
        assert!(KernelModel::new(sample_1d(&[0.0]), vec![0.0]).is_err());
        assert!(KernelModel::new(sample_1d(&[0.0]), vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_consistency() {
        let spec = DensitySpec::from_json(
            r#"{"dimension":1,"components":[{"weight":1,"kind":"uniform1d","low":0,"high":1}]}"#,
        )
        .unwrap();
        let m = KernelModel::auto(spec.sample(100_000, 1).unwrap()).unwrap();
        assert!((m.evaluate(&[0.5]).unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn reference_bandwidth_formula() {
        let a = DensitySpec::builtin("a").unwrap();
        let s = a.sample(1000, 4).unwrap();
        let h = bandwidth_auto(&s).unwrap()[0];
        let x = s.column(0);
        let mean = x.iter().sum::<f64>() / 1000.0;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
        // Gaussian data: the IQR term is close to sd, so h sits near 0.9 sd n^-1/5
        assert!((h / (sd * 0.9 * 1000f64.powf(-0.2)) - 1.0).abs() < 0.1);
        assert!(h <= 0.9 * sd * 1000f64.powf(-0.2) + 1e-15);
    }

    #[test]
    fn bandwidth_is_scale_equivariant() {
        let a = DensitySpec::builtin("a").unwrap();
        let s = a.sample(500, 8).unwrap();
        let scaled = Sample::new(1, s.as_flat().iter().map(|v| 3.0 * v).collect()).unwrap();
        let h = bandwidth_auto(&s).unwrap()[0];
        let hs = bandwidth_auto(&scaled).unwrap()[0];
        assert_relative_eq!(hs, 3.0 * h, max_relative = 1e-12);
    }

    #[test]
    fn bandwidth_range_for_gaussian() {
        let a = DensitySpec::builtin("a").unwrap();
        for seed in 0..5 {
            let h = bandwidth_auto(&a.sample(10_000, seed).unwrap()).unwrap()[0];
            assert!((0.10..=0.20).contains(&h), "{h}");
        }
    }

    #[test]
    fn bandwidth_degenerate_and_iqr_fallback() {
        assert!(matches!(
            bandwidth_auto(&sample_1d(&[2.0, 2.0, 2.0])),
            Err(Error::DegenerateSample(0))
        ));
        assert!(bandwidth_auto(&sample_1d(&[1.0])).is_err());
        let mut v = vec![0.0; 9];
        v.push(10.0);
        let h = bandwidth_auto(&sample_1d(&v)).unwrap()[0];
        let sd = (90.0f64 / 9.0).sqrt();
        assert_relative_eq!(h, 0.9 * sd * 10f64.powf(-0.2), max_relative = 1e-12);
    }

    #[test]
    fn two_dimensional_exponent() {
        let s = DensitySpec::builtin("A").unwrap().sample(2000, 2).unwrap();
        let h = bandwidth_auto(&s).unwrap();
        assert_eq!(h.len(), 2);
        for (p, &hp) in h.iter().enumerate() {
            let mut x = s.column(p);
            let mean = x.iter().sum::<f64>() / 2000.0;
            let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1999.0).sqrt();
            x.sort_by(f64::total_cmp);
            let iqr = quantile(&x, 0.75) - quantile(&x, 0.25);
            let expected = 0.9 * sd.min(iqr / 1.34) * 2000f64.powf(-1.0 / 6.0);
            assert_relative_eq!(hp, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn smoothness_round_trip() {
        let n = 10_000usize;
        let nf = n as f64;
        assert_relative_eq!(
            smoothness_from_bandwidth(nf.powf(-0.2), n, 1).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            smoothness_from_bandwidth(nf.powf(-0.25), n, 2).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // h close to 1 means a very smooth density, h close to 0 a rough one
        assert_eq!(smoothness_from_bandwidth(0.999_999, n, 1).unwrap(), 10.0);
        assert_eq!(smoothness_from_bandwidth(1e-12, n, 1).unwrap(), 0.05);
        assert!(matches!(
            smoothness_from_bandwidth(1.0, n, 1),
            Err(Error::InvalidBandwidth(_))
        ));
        assert!(smoothness_from_bandwidth(0.5, 2, 1).is_err());
    }

    #[test]
    fn tuned_values() {
        let t = tuned_parameters(2.0, 1000, 1).unwrap();
        let nln = 1000.0 * 1000f64.ln();
        assert_relative_eq!(t.bandwidth, nln.powf(-0.2), epsilon = 1e-15);
        assert!((t.bandwidth - 0.1707).abs() < 1e-4);
        assert_eq!(t.order, 34);
        let t2 = tuned_parameters(1.0, 400, 2).unwrap();
        let nln2 = 400.0 * 400f64.ln();
        assert_relative_eq!(t2.bandwidth, nln2.powf(-0.25), epsilon = 1e-15);
        assert_eq!(t2.order, (2.0 * nln2).powf(0.25).floor() as usize);
        assert_eq!(t2.c0, 2.0);
        assert!(tuned_parameters(0.05, 3, 2).unwrap().order >= 1);
    }

    #[test]
    fn tuned_bandwidths_keep_shape() {
        let s = DensitySpec::builtin("D").unwrap().sample(1000, 3).unwrap();
        let p = auto_parameters(&s).unwrap();
        let r0 = p.bandwidth[0] / p.bandwidth[1];
        let r1 = p.reference_bandwidth[0] / p.reference_bandwidth[1];
        assert_relative_eq!(r0, r1, max_relative = 1e-12);
        assert_relative_eq!(
            geometric_mean(&p.bandwidth),
            p.tuned.bandwidth,
            max_relative = 1e-12
        );
        let a =
            auto_parameters(&DensitySpec::builtin("a").unwrap().sample(1000, 3).unwrap()).unwrap();
        assert_eq!(a.bandwidth[0], a.tuned.bandwidth);
    }

    #[test]
    fn grid_evaluation_matches_direct_sum() {
        for id in ["c", "B"] {
            let spec = DensitySpec::builtin(id).unwrap();
            let s = spec.sample(300, 5).unwrap();
            let m = KernelModel::auto(s).unwrap();
            let grid = QuadratureGrid::uniform(spec.default_box(), 32).unwrap();
            let values = m.evaluate_grid(&grid).unwrap();
            for (i, v) in values.iter().enumerate() {
                let direct = m.evaluate(&grid.point(i)).unwrap();
                assert!((v - direct).abs() < 1e-12 * (1.0 + direct), "{id} {i}");
            }
        }
    }

    #[test]
    fn integrates_to_one() {
        let spec = DensitySpec::builtin("C").unwrap();
        let m = KernelModel::auto(spec.sample(500, 6).unwrap()).unwrap();
        let grid = QuadratureGrid::uniform(spec.default_box(), 128).unwrap();
        let mass = grid.integrate(&m.evaluate_grid(&grid).unwrap());
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }

    #[test]
    fn bootstrap_single_point_has_zero_variance() {
        let s = sample_1d(&[0.3]);
        let grid =
            QuadratureGrid::uniform(SupportBox::new(vec![(-2.0, 2.0)]).unwrap(), 64).unwrap();
        let m = bootstrap_moments(&s, &[0.5], &grid, 2, 9).unwrap();
        assert!(m.variance.iter().all(|&v| v == 0.0));
        assert_eq!(m.mean, m.fit);
        assert!(bootstrap_moments(&s, &[0.5], &grid, 1, 9).is_err());
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let spec = DensitySpec::builtin("B").unwrap();
        let s = spec.sample(200, 1).unwrap();
        let grid = QuadratureGrid::uniform(spec.default_box(), 32).unwrap();
        let a = bootstrap_moments(&s, &[0.3, 0.3], &grid, 10, 77).unwrap();
        let b = bootstrap_moments(&s, &[0.3, 0.3], &grid, 10, 77).unwrap();
        assert_eq!(a, b);
        assert!(a.variance.iter().all(|&v| v >= 0.0));
        assert!(a.mean.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn bootstrap_variance_matches_asymptotics() {
        let spec = DensitySpec::builtin("a").unwrap();
        let s = spec.sample(1000, 12).unwrap();
        let h = bandwidth_auto(&s).unwrap();
        let grid =
            QuadratureGrid::uniform(SupportBox::new(vec![(-0.5, 0.5)]).unwrap(), 101).unwrap();
        let m = bootstrap_moments(&s, &h, &grid, 100, 3).unwrap();
        let analytic = INV_SQRT_2PI * kernel_roughness() / (1000.0 * h[0]);
        let at_zero = m.variance[50];
        assert!(
            at_zero > analytic / 2.0 && at_zero < analytic * 2.0,
            "{at_zero} vs {analytic}"
        );
    }
}
