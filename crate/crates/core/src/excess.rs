//! Excess-mass estimators and curves.
//!
//! The functional estimators share one structure: for each Fourier order `k`
//! the integral `I_k = int exp(pi^2 k^2 v(x) / (2R^2)) cos(pi k m(x) / R) dx` is
//! computed once on the quadrature grid, and `E(nu) = sum_k c_k(nu) I_k`.
//! Only the coefficients depend on the level.

use std::f64::consts::PI;
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{check_levels, Sample};
use crate::error::{ensure_finite, Error, Result};
use crate::fourier::{FourierCoefficients, MIN_SCALE};
use crate::grid::{QuadratureGrid, SupportBox};
use crate::kde::{self, BootstrapMoments, KernelModel};
use crate::wavelet::{HaarEstimator, HAAR_GAMMA};

/// Quadrature points on the line.
pub const DEFAULT_GRID_1D: usize = 512;
/// Quadrature points per axis in the plane.
pub const DEFAULT_GRID_2D: usize = 128;
/// Largest exponent accepted in the debiasing factor.
pub const MAX_EXPONENT: f64 = 50.0;

pub fn default_grid_points(dimension: usize) -> usize {
    if dimension == 1 {
        DEFAULT_GRID_1D
    } else {
        DEFAULT_GRID_2D
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oracle,
    Plugin,
    /// Cosine sum evaluated at the bootstrap mean of the kernel estimate.
    FunctionalMean,
    /// Kernel estimate with the exponential debiasing factor from bootstrap variances.
    FunctionalCorrected,
    /// Haar estimate with the debiasing factor from its empirical variance.
    Wavelet,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Plugin => "plugin",
            Method::FunctionalMean => "functional_mean",
            Method::FunctionalCorrected => "functional_corrected",
            Method::Wavelet => "wavelet",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        match name {
            "oracle" => Ok(Method::Oracle),
            "plugin" => Ok(Method::Plugin),
            "functional" | "functional_mean" => Ok(Method::FunctionalMean),
            "corrected" | "functional_corrected" => Ok(Method::FunctionalCorrected),
            "wavelet" => Ok(Method::Wavelet),
            other => Err(Error::invalid(
                "method",
                format!("unknown method `{other}`"),
            )),
        }
    }

    pub fn is_functional(self) -> bool {
        matches!(
            self,
            Method::FunctionalMean | Method::FunctionalCorrected | Method::Wavelet
        )
    }
}

/// Parameters an estimate was computed with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveParameters {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wavelet_level: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidth: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub anchored: Option<bool>,
}

/// Estimates (or exact values) of the excess mass on a level grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessMassCurve {
    levels: Vec<f64>,
    values: Vec<f64>,
    method: Method,
    parameters: CurveParameters,
}

impl ExcessMassCurve {
    pub fn new(
        levels: Vec<f64>,
        values: Vec<f64>,
        method: Method,
        parameters: CurveParameters,
    ) -> Result<Self> {
        if levels.len() != values.len() {
            return Err(Error::GridMismatch);
        }
        check_levels(&levels)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("curve value"));
        }
        Ok(Self {
            levels,
            values,
            method,
            parameters,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn parameters(&self) -> &CurveParameters {
        &self.parameters
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Copy with negative values replaced by 0, for presentation.
    pub fn clamped(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.max(0.0));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curves always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ExcessMassCurve = serde_json::from_str(text)?;
        Self::new(raw.levels, raw.values, raw.method, raw.parameters)
    }
}

/// Writes headerless CSV rows `nu,value_1,...,value_m` for curves sharing a level grid.
pub fn write_curves_csv<W: Write>(curves: &[ExcessMassCurve], out: W) -> Result<()> {
    let Some(first) = curves.first() else {
        return Ok(());
    };
    if curves.iter().any(|c| c.levels != first.levels) {
        return Err(Error::GridMismatch);
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for (i, nu) in first.levels.iter().enumerate() {
        let mut row = vec![nu.to_string()];
        row.extend(curves.iter().map(|c| c.values[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `n` equally spaced levels from `lo` to `hi` inclusive.
pub fn level_grid(count: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    ensure_finite("lo", lo)?;
    ensure_finite("hi", hi)?;
    if count == 0 {
        return Err(Error::invalid(
            "count",
            "level grid needs at least one point",
        ));
    }
    if lo < 0.0 || hi < lo {
        return Err(Error::invalid(
            "levels",
            format!("need 0 <= lo <= hi, got {lo}..{hi}"),
        ));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                lo + step * i as f64
            }
        })
        .collect())
}

/// Anything that can estimate the excess mass at a single level.
pub trait LevelEstimator: Sync {
    fn estimate(&self, level: f64) -> Result<f64>;
    fn method(&self) -> Method;
    fn parameters(&self) -> CurveParameters;
}

/// Applies an estimator at every level, in parallel.
pub fn curve<E: LevelEstimator + ?Sized>(estimator: &E, levels: &[f64]) -> Result<ExcessMassCurve> {
    check_levels(levels)?;
    let values = levels
        .par_iter()
        .map(|&nu| estimator.estimate(nu))
        .collect::<Result<Vec<_>>>()?;
    ExcessMassCurve::new(
        levels.to_vec(),
        values,
        estimator.method(),
        estimator.parameters(),
    )
}

fn check_level(level: f64) -> Result<()> {
    ensure_finite("level", level)?;
    if level < 0.0 {
        return Err(Error::invalid(
            "level",
            format!("must be non-negative, got {level}"),
        ));
    }
    Ok(())
}

/// `int (f_hat - nu)_+` on a grid of estimate values.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginEstimator {
    grid: QuadratureGrid,
    values: Vec<f64>,
    bandwidth: Option<Vec<f64>>,
}

impl PluginEstimator {
    pub fn from_model(model: &KernelModel, grid: &QuadratureGrid) -> Result<Self> {
        Ok(Self {
            values: model.evaluate_grid(grid)?,
            grid: grid.clone(),
            bandwidth: Some(model.bandwidth().to_vec()),
        })
    }

    /// Plug-in on arbitrary grid values, for instance a true pdf.
    pub fn from_values(grid: &QuadratureGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            bandwidth: None,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl LevelEstimator for PluginEstimator {
    fn estimate(&self, level: f64) -> Result<f64> {
        check_level(level)?;
        Ok(self.grid.integrate_excess(&self.values, level))
    }

    fn method(&self) -> Method {
        Method::Plugin
    }

    fn parameters(&self) -> CurveParameters {
        CurveParameters {
            bandwidth: self.bandwidth.clone(),
            ..Default::default()
        }
    }
}

/// Plug-in estimate at one level.
pub fn estimate_plugin(model: &KernelModel, level: f64, grid: &QuadratureGrid) -> Result<f64> {
    PluginEstimator::from_model(model, grid)?.estimate(level)
}

/// Options shared by the functional estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FunctionalOptions {
    /// Subtract `|K| A_N phi_nu(0)` so that regions where the estimate is 0
    /// contribute nothing.
    pub anchor: bool,
    /// Fixed scale `R`; `None` picks `scale_margin * sup` of the plugged-in values.
    pub scale: Option<f64>,
    pub scale_margin: f64,
    /// Hard cap on `pi^2 k^2 sup v / (2 R^2)`; higher orders are dropped and
    /// exceeding it at order 1 is an [`Error::Overflow`].
    pub max_exponent: f64,
    /// Softer cap applied the same way, except that order 1 is always kept.
    pub soft_exponent: Option<f64>,
}

impl Default for FunctionalOptions {
    fn default() -> Self {
        Self {
            anchor: true,
            scale: None,
            scale_margin: 1.05,
            max_exponent: MAX_EXPONENT,
            soft_exponent: None,
        }
    }
}

impl FunctionalOptions {
    /// Plain cosine sum without the zero-level anchor.
    pub fn raw() -> Self {
        Self {
            anchor: false,
            ..Self::default()
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = Some(scale);
        self
    }

    fn resolve_scale(&self, values: &[f64]) -> Result<f64> {
        match self.scale {
            Some(r) => {
                ensure_finite("scale", r)?;
                if r < MIN_SCALE {
                    return Err(Error::invalid(
                        "scale",
                        format!("must be positive, got {r}"),
                    ));
                }
                Ok(r)
            }
            None => {
                let sup = values.iter().copied().fold(0.0, f64::max);
                Ok((self.scale_margin * sup).max(MIN_SCALE))
            }
        }
    }
}

/// Per-order integrals of the debiased cosines; see the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalEstimator {
    grid: QuadratureGrid,
    values: Vec<f64>,
    variances: Option<Vec<f64>>,
    integrals: Vec<f64>,
    scale: f64,
    order: usize,
    requested_order: usize,
    options: FunctionalOptions,
    method: Method,
    bandwidth: Option<Vec<f64>>,
    wavelet_level: Option<u32>,
}

impl FunctionalEstimator {
    /// Generic constructor: plug `values` into the cosine series, debiased by
    /// `variances` when given.
    pub fn from_values(
        grid: &QuadratureGrid,
        values: Vec<f64>,
        variances: Option<Vec<f64>>,
        order: usize,
        options: FunctionalOptions,
        method: Method,
    ) -> Result<Self> {
        if values.len() != grid.len() || variances.as_ref().is_some_and(|v| v.len() != grid.len()) {
            return Err(Error::GridMismatch);
        }
        if order == 0 {
            return Err(Error::invalid(
                "order",
                "truncation order must be at least 1",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("estimate values"));
        }
        let scale = options.resolve_scale(&values)?;
        let effective = match &variances {
            Some(v) => effective_order(order, v, scale, &options)?,
            None => order,
        };
        let mut est = Self {
            grid: grid.clone(),
            values,
            variances,
            integrals: Vec::new(),
            scale,
            order: effective,
            requested_order: order,
            options,
            method,
            bandwidth: None,
            wavelet_level: None,
        };
        est.integrals = (0..=effective)
            .into_par_iter()
            .map(|k| est.integral(k))
            .collect();
        Ok(est)
    }

    /// Cosine sum at the bootstrap mean.
    pub fn kernel_mean(
        moments: &BootstrapMoments,
        order: usize,
        options: FunctionalOptions,
    ) -> Result<Self> {
        Self::from_values(
            &moments.grid,
            moments.mean.clone(),
            None,
            order,
            options,
            Method::FunctionalMean,
        )
    }

    /// Full-sample fit with the bootstrap variance in the debiasing factor.
    pub fn kernel_corrected(
        moments: &BootstrapMoments,
        order: usize,
        options: FunctionalOptions,
    ) -> Result<Self> {
        Self::from_values(
            &moments.grid,
            moments.fit.clone(),
            Some(moments.variance.clone()),
            order,
            options,
            Method::FunctionalCorrected,
        )
    }

    /// Haar estimate with the truncated empirical variance.
    pub fn wavelet(
        est: &HaarEstimator,
        order: usize,
        grid: &QuadratureGrid,
        options: FunctionalOptions,
    ) -> Result<Self> {
        if !est.support().contains_box(grid.support()) {
            return Err(Error::invalid(
                "grid",
                "quadrature grid leaves the estimator's box",
            ));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut variances = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let t = grid.point(i);
            values.push(est.evaluate(&t)?);
            variances.push(est.variance_estimate(&t)?.truncated);
        }
        let mut out = Self::from_values(
            grid,
            values,
            Some(variances),
            order,
            options,
            Method::Wavelet,
        )?;
        out.wavelet_level = Some(est.level());
        Ok(out)
    }

    pub fn with_bandwidth(mut self, bandwidth: Vec<f64>) -> Self {
        self.bandwidth = Some(bandwidth);
        self
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Order actually used after the overflow guard.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn requested_order(&self) -> usize {
        self.requested_order
    }

    pub fn integrals(&self) -> &[f64] {
        &self.integrals
    }

    fn integral(&self, k: usize) -> f64 {
        let w = PI * k as f64 / self.scale;
        let damping = 0.5 * w * w;
        let terms: Vec<f64> = match &self.variances {
            Some(var) => self
                .values
                .iter()
                .zip(var)
                .map(|(m, v)| (damping * v).exp() * (w * m).cos())
                .collect(),
            None => self.values.iter().map(|m| (w * m).cos()).collect(),
        };
        self.grid.integrate(&terms)
    }

    fn combine(&self, coeffs: &FourierCoefficients, integrals: &[f64]) -> f64 {
        let raw: f64 = coeffs
            .values()
            .iter()
            .zip(integrals)
            .map(|(c, i)| c * i)
            .sum();
        if self.options.anchor {
            raw - self.grid.support().volume() * coeffs.value_at_zero()
        } else {
            raw
        }
    }

    /// Recomputes every integral for this level; matches [`LevelEstimator::estimate`] bit for bit.
    pub fn estimate_naive(&self, level: f64) -> Result<f64> {
        check_level(level)?;
        let coeffs = FourierCoefficients::new(level, self.order, self.scale)?;
        let integrals: Vec<f64> = (0..=self.order).map(|k| self.integral(k)).collect();
        Ok(self.combine(&coeffs, &integrals))
    }
}

impl LevelEstimator for FunctionalEstimator {
    fn estimate(&self, level: f64) -> Result<f64> {
        check_level(level)?;
        let coeffs = FourierCoefficients::new(level, self.order, self.scale)?;
        Ok(self.combine(&coeffs, &self.integrals))
    }

    fn method(&self) -> Method {
        self.method
    }

    fn parameters(&self) -> CurveParameters {
        CurveParameters {
            order: Some(self.order),
            wavelet_level: self.wavelet_level,
            bandwidth: self.bandwidth.clone(),
            scale: Some(self.scale),
            anchored: Some(self.options.anchor),
        }
    }
}

/// Largest order `<= requested` whose debiasing exponent stays within `cap`.
fn effective_order(
    requested: usize,
    variances: &[f64],
    scale: f64,
    options: &FunctionalOptions,
) -> Result<usize> {
    let cap = options.max_exponent;
    let sup = variances.iter().copied().fold(0.0, f64::max);
    if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite("variance"));
    }
    if sup == 0.0 {
        return Ok(requested);
    }
    let unit = PI * PI * sup / (2.0 * scale * scale);
    let allowed = (cap / unit).sqrt().floor();
    if allowed < 1.0 {
        return Err(Error::Overflow(format!(
            "debiasing exponent {unit:.3e} exceeds {cap} already at order 1"
        )));
    }
    let mut allowed = allowed as usize;
    if let Some(soft) = options.soft_exponent {
        allowed = allowed.min(((soft / unit).sqrt().floor() as usize).max(1));
    }
    if allowed < requested {
        warn!("debiasing exponent capped: order reduced from {requested} to {allowed}");
        Ok(allowed)
    } else {
        Ok(requested)
    }
}

/// Wavelet-form estimate at one level.
pub fn estimate_wavelet(
    est: &HaarEstimator,
    level: f64,
    order: usize,
    grid: &QuadratureGrid,
) -> Result<f64> {
    FunctionalEstimator::wavelet(est, order, grid, FunctionalOptions::default())?.estimate(level)
}

/// Kernel estimate with bootstrap-variance debiasing at one level.
pub fn estimate_kernel_corrected(
    moments: &BootstrapMoments,
    level: f64,
    order: usize,
) -> Result<f64> {
    FunctionalEstimator::kernel_corrected(moments, order, FunctionalOptions::default())?
        .estimate(level)
}

/// Cosine sum at the bootstrap mean at one level.
pub fn estimate_kernel_mean(moments: &BootstrapMoments, level: f64, order: usize) -> Result<f64> {
    FunctionalEstimator::kernel_mean(moments, order, FunctionalOptions::default())?.estimate(level)
}

/// Settings of the automatic kernel pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Fourier order; `None` uses the tuned order.
    pub order: Option<usize>,
    /// Reference bandwidth per axis; `None` uses the rule of thumb.
    pub bandwidth: Option<Vec<f64>>,
    pub replications: usize,
    /// Quadrature points per axis; `None` uses the dimension default.
    pub grid_points: Option<usize>,
    pub functional: FunctionalOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            order: None,
            bandwidth: None,
            replications: kde::DEFAULT_REPLICATIONS,
            grid_points: None,
            functional: FunctionalOptions::default(),
        }
    }
}

/// Curves and tuning produced by [`run_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub curves: Vec<ExcessMassCurve>,
    pub parameters: kde::AutoParameters,
    pub order: usize,
}

/// Soft exponent cap `ln(n) / 2` used by the pipeline for the bootstrap-corrected
/// estimator: the debiasing factor then stays below `sqrt(n)`. The tuned order
/// alone lets the exponent grow like `ln n` with a large constant, and the
/// factor amplifies the estimation noise past any use.
pub fn stable_exponent(n: usize) -> f64 {
    0.5 * (n.max(2) as f64).ln()
}

/// Box for a sample with no known support: the data range padded by four
/// reference bandwidths on each side.
pub fn data_box(sample: &Sample, bandwidth: &[f64]) -> Result<SupportBox> {
    let bounds = (0..sample.dimension())
        .map(|p| {
            let col = sample.column(p);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo - 4.0 * bandwidth[p], hi + 4.0 * bandwidth[p])
        })
        .collect();
    SupportBox::new(bounds)
}

/// Sample to curves: the plug-in uses the reference bandwidth, the functional
/// estimators use the tuned bandwidth and order with bootstrap moments.
pub fn run_pipeline(
    sample: &Sample,
    support: &SupportBox,
    levels: &[f64],
    methods: &[Method],
    config: &PipelineConfig,
    seed: u64,
) -> Result<PipelineOutput> {
    check_levels(levels)?;
    let d = sample.dimension();
    if support.dimension() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: support.dimension(),
        });
    }
    let reference = match &config.bandwidth {
        Some(h) => h.clone(),
        None => kde::bandwidth_auto(sample)?,
    };
    if reference.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: reference.len(),
        });
    }
    let geo = kde::geometric_mean(&reference);
    let s = kde::smoothness_from_bandwidth(geo, sample.len(), d)?;
    let tuned = kde::tuned_parameters(s, sample.len(), d)?;
    let tuned_h: Vec<f64> = reference
        .iter()
        .map(|h| h * tuned.bandwidth / geo)
        .collect();
    let order = config.order.unwrap_or(tuned.order);
    let grid = QuadratureGrid::uniform(
        support.clone(),
        config.grid_points.unwrap_or_else(|| default_grid_points(d)),
    )?;
    let needs_moments = methods
        .iter()
        .any(|m| matches!(m, Method::FunctionalMean | Method::FunctionalCorrected));
    let moments = if needs_moments {
        Some(kde::bootstrap_moments(
            sample,
            &tuned_h,
            &grid,
            config.replications,
            seed,
        )?)
    } else {
        None
    };
    let mut curves = Vec::with_capacity(methods.len());
    for &method in methods {
        let c = match method {
            Method::Plugin => {
                let model = KernelModel::new(sample.clone(), reference.clone())?;
                curve(&PluginEstimator::from_model(&model, &grid)?, levels)?
            }
            Method::FunctionalMean => {
                let m = moments.as_ref().expect("moments computed");
                let est = FunctionalEstimator::kernel_mean(m, order, config.functional)?
                    .with_bandwidth(tuned_h.clone());
                curve(&est, levels)?
            }
            Method::FunctionalCorrected => {
                let m = moments.as_ref().expect("moments computed");
                let mut options = config.functional;
                if options.soft_exponent.is_none() {
                    options.soft_exponent = Some(stable_exponent(sample.len()));
                }
                let est = FunctionalEstimator::kernel_corrected(m, order, options)?
                    .with_bandwidth(tuned_h.clone());
                curve(&est, levels)?
            }
            Method::Wavelet => {
                let params = crate::wavelet::theoretical_parameters(
                    sample.len(),
                    d,
                    crate::wavelet::DEFAULT_SMOOTHNESS,
                    None,
                )?;
                let haar = HaarEstimator::fit(sample, params.level, support)?;
                let est = FunctionalEstimator::wavelet(
                    &haar,
                    config.order.unwrap_or(params.order),
                    &grid,
                    config.functional,
                )?;
                curve(&est, levels)?
            }
            Method::Oracle => {
                return Err(Error::invalid(
                    "method",
                    "the oracle needs a density, not a sample",
                ))
            }
        };
        curves.push(c);
    }
    Ok(PipelineOutput {
        curves,
        parameters: kde::AutoParameters {
            reference_bandwidth: reference,
            tuned,
            bandwidth: tuned_h,
        },
        order,
    })
}

/// `gamma 2^(jd) / n`, the ceiling on the Haar variance.
pub fn haar_variance_cap(level: u32, d: usize, n: usize) -> f64 {
    HAAR_GAMMA * 2f64.powi((level as usize * d) as i32) / n as f64
}
