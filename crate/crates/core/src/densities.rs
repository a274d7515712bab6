//! Ground-truth mixture densities: evaluation, sampling and the exact excess
//! mass by quadrature.
//!
//! The eight benchmark densities ship as built-ins: `a`..`d` on the line and
//! `A`..`D` in the plane.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::excess::{ExcessMassCurve, Method};
use crate::grid::{QuadratureGrid, SupportBox};
use crate::rng;

/// Complement mass allowed outside the default support box.
pub const DEFAULT_MASS_TOLERANCE: f64 = 1e-8;
/// Default oracle resolution on the line.
pub const ORACLE_POINTS_1D: usize = 4096;
/// Default oracle resolution per axis in the plane.
pub const ORACLE_POINTS_2D: usize = 512;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Ids of the built-in densities, in display order.
pub const BUILTIN_IDS: [&str; 8] = ["a", "b", "c", "d", "A", "B", "C", "D"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentKind {
    #[serde(rename = "gaussian1d")]
    Gaussian1D { mean: f64, stdev: f64 },
    #[serde(rename = "uniform1d")]
    Uniform1D { low: f64, high: f64 },
    /// `pdf(x) = exp(-|x - location| / scale) / (2 scale)`.
    #[serde(rename = "laplace1d")]
    Laplace1D { location: f64, scale: f64 },
    #[serde(rename = "gaussian2d")]
    Gaussian2D {
        mean: [f64; 2],
        stdev: [f64; 2],
        correlation: f64,
    },
    #[serde(rename = "uniform2d")]
    Uniform2D { low: [f64; 2], high: [f64; 2] },
}

impl ComponentKind {
    pub fn dimension(&self) -> usize {
        match self {
            ComponentKind::Gaussian1D { .. }
            | ComponentKind::Uniform1D { .. }
            | ComponentKind::Laplace1D { .. } => 1,
            ComponentKind::Gaussian2D { .. } | ComponentKind::Uniform2D { .. } => 2,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| -> Result<()> {
            ensure_finite(name, v)?;
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be positive, got {v}")))
            }
        };
        let interval = |low: f64, high: f64| -> Result<()> {
            ensure_finite("low", low)?;
            ensure_finite("high", high)?;
            if low < high {
                Ok(())
            } else {
                Err(Error::invalid(
                    "high",
                    format!("interval [{low}, {high}] is degenerate"),
                ))
            }
        };
        match *self {
            ComponentKind::Gaussian1D { mean, stdev } => {
                ensure_finite("mean", mean)?;
                positive("stdev", stdev)
            }
            ComponentKind::Uniform1D { low, high } => interval(low, high),
            ComponentKind::Laplace1D { location, scale } => {
                ensure_finite("location", location)?;
                positive("scale", scale)
            }
            ComponentKind::Gaussian2D {
                mean,
                stdev,
                correlation,
            } => {
                ensure_finite("mean", mean[0])?;
                ensure_finite("mean", mean[1])?;
                positive("stdev", stdev[0])?;
                positive("stdev", stdev[1])?;
                if correlation.is_finite() && correlation.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "correlation",
                        format!("must lie in (-1, 1), got {correlation}"),
                    ))
                }
            }
            ComponentKind::Uniform2D { low, high } => {
                interval(low[0], high[0])?;
                interval(low[1], high[1])
            }
        }
    }

    fn pdf(&self, x: &[f64]) -> f64 {
        match *self {
            ComponentKind::Gaussian1D { mean, stdev } => {
                let z = (x[0] - mean) / stdev;
                INV_SQRT_2PI * (-0.5 * z * z).exp() / stdev
            }
            ComponentKind::Uniform1D { low, high } => {
                if x[0] >= low && x[0] <= high {
                    1.0 / (high - low)
                } else {
                    0.0
                }
            }
            ComponentKind::Laplace1D { location, scale } => {
                (-(x[0] - location).abs() / scale).exp() / (2.0 * scale)
            }
            ComponentKind::Gaussian2D {
                mean,
                stdev,
                correlation: rho,
            } => {
                let z1 = (x[0] - mean[0]) / stdev[0];
                let z2 = (x[1] - mean[1]) / stdev[1];
                let one_minus = 1.0 - rho * rho;
                let q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / one_minus;
                (-0.5 * q).exp() / (2.0 * PI * stdev[0] * stdev[1] * one_minus.sqrt())
            }
            ComponentKind::Uniform2D { low, high } => {
                let inside = (0..2).all(|p| x[p] >= low[p] && x[p] <= high[p]);
                if inside {
                    1.0 / ((high[0] - low[0]) * (high[1] - low[1]))
                } else {
                    0.0
                }
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match *self {
            ComponentKind::Gaussian1D { mean, stdev } => {
                let z: f64 = rng.sample(StandardNormal);
                out.push(mean + stdev * z);
            }
            ComponentKind::Uniform1D { low, high } => {
                out.push(low + (high - low) * rng.random::<f64>());
            }
            ComponentKind::Laplace1D { location, scale } => {
                // inverse cdf on u in (-1/2, 1/2)
                let u = rng.random::<f64>() - 0.5;
                let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
                out.push(location - scale * u.signum() * tail.ln());
            }
            ComponentKind::Gaussian2D {
                mean,
                stdev,
                correlation: rho,
            } => {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                out.push(mean[0] + stdev[0] * z1);
                out.push(mean[1] + stdev[1] * (rho * z1 + (1.0 - rho * rho).sqrt() * z2));
            }
            ComponentKind::Uniform2D { low, high } => {
                for p in 0..2 {
                    out.push(low[p] + (high[p] - low[p]) * rng.random::<f64>());
                }
            }
        }
    }

    /// Box whose complement carries at most `tolerance` of this component's mass.
    fn support(&self, tolerance: f64) -> SupportBox {
        let k = gaussian_radius(tolerance);
        let bounds = match *self {
            ComponentKind::Gaussian1D { mean, stdev } => vec![(mean - k * stdev, mean + k * stdev)],
            ComponentKind::Uniform1D { low, high } => vec![(low, high)],
            ComponentKind::Laplace1D { location, scale } => {
                let r = scale * 30f64.max(-tolerance.ln());
                vec![(location - r, location + r)]
            }
            ComponentKind::Gaussian2D { mean, stdev, .. } => (0..2)
                .map(|p| (mean[p] - k * stdev[p], mean[p] + k * stdev[p]))
                .collect(),
            ComponentKind::Uniform2D { low, high } => vec![(low[0], high[0]), (low[1], high[1])],
        };
        SupportBox::new(bounds).expect("validated component has a proper box")
    }
}

/// Number of standard deviations, at least 6, whose two-sided Gaussian tail is
/// below `tolerance / 2` per axis. Uses the Mills bound `P(Z > k) <= phi(k)/k`.
fn gaussian_radius(tolerance: f64) -> f64 {
    let mut k: f64 = 6.0;
    while 2.0 * INV_SQRT_2PI * (-0.5 * k * k).exp() / k > tolerance / 2.0 {
        k += 0.25;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    #[serde(flatten)]
    pub kind: ComponentKind,
}

/// A finite mixture on the line or in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct DensitySpec {
    dimension: usize,
    components: Vec<Component>,
}

#[derive(Deserialize)]
struct RawSpec {
    dimension: usize,
    components: Vec<Component>,
}

impl TryFrom<RawSpec> for DensitySpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        DensitySpec::new(raw.dimension, raw.components)
    }
}

impl DensitySpec {
    pub fn new(dimension: usize, components: Vec<Component>) -> Result<Self> {
        if !(dimension == 1 || dimension == 2) {
            return Err(Error::invalid(
                "dimension",
                format!("must be 1 or 2, got {dimension}"),
            ));
        }
        if components.is_empty() {
            return Err(Error::invalid(
                "components",
                "a mixture needs at least one component",
            ));
        }
        let mut total = 0.0;
        for c in &components {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::invalid(
                    "weight",
                    format!("must be positive, got {}", c.weight),
                ));
            }
            if c.kind.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: c.kind.dimension(),
                });
            }
            c.kind.validate()?;
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "weight",
                format!("weights sum to {total}, not 1"),
            ));
        }
        Ok(Self {
            dimension,
            components,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("density specs always serialize")
    }

    /// Mixture density at `x`.
    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(self.pdf_unchecked(x))
    }

    pub(crate) fn pdf_unchecked(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.kind.pdf(x))
            .sum()
    }

    /// `n` i.i.d. draws; the component is chosen by weight, then sampled.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n == 0 {
            return Err(Error::invalid("n", "sample size must be at least 1"));
        }
        let mut rng = rng::stream(seed);
        let mut points = Vec::with_capacity(n * self.dimension);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = self.components.last().expect("non-empty");
            for c in &self.components {
                acc += c.weight;
                if u < acc {
                    chosen = c;
                    break;
                }
            }
            chosen.kind.draw(&mut rng, &mut points);
        }
        Ok(Sample {
            dimension: self.dimension,
            points,
            seed: Some(seed),
        })
    }

    /// Bounding box of the per-component boxes, each leaving at most
    /// `mass_tolerance` of its mass outside.
    pub fn support_box(&self, mass_tolerance: f64) -> Result<SupportBox> {
        if !(mass_tolerance > 0.0 && mass_tolerance <= 0.01) {
            return Err(Error::invalid(
                "mass_tolerance",
                format!("must lie in (0, 0.01], got {mass_tolerance}"),
            ));
        }
        let mut boxes = self
            .components
            .iter()
            .map(|c| c.kind.support(mass_tolerance));
        let first = boxes.next().expect("non-empty");
        boxes.try_fold(first, |acc, b| acc.union(&b))
    }

    /// Support box at [`DEFAULT_MASS_TOLERANCE`].
    pub fn default_box(&self) -> SupportBox {
        self.support_box(DEFAULT_MASS_TOLERANCE)
            .expect("default tolerance is valid")
    }

    pub fn default_oracle_points(&self) -> usize {
        if self.dimension == 1 {
            ORACLE_POINTS_1D
        } else {
            ORACLE_POINTS_2D
        }
    }

    fn oracle_grid(&self, grid_points_per_dim: usize) -> Result<QuadratureGrid> {
        if grid_points_per_dim < 64 {
            return Err(Error::invalid(
                "grid_points_per_dim",
                format!("must be at least 64, got {grid_points_per_dim}"),
            ));
        }
        QuadratureGrid::uniform(self.default_box(), grid_points_per_dim)
    }

    /// Midpoint values and weights for the oracle. Cells crossed by an edge of
    /// a uniform component are split at the edge, so the rule only ever sees
    /// smooth pieces.
    fn oracle_table(&self, grid_points_per_dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let grid = self.oracle_grid(grid_points_per_dim)?;
        let d = self.dimension;
        let mut edges: Vec<Vec<f64>> = vec![Vec::new(); d];
        for c in &self.components {
            match c.kind {
                ComponentKind::Uniform1D { low, high } => edges[0].extend([low, high]),
                ComponentKind::Uniform2D { low, high } => {
                    edges[0].extend([low[0], high[0]]);
                    edges[1].extend([low[1], high[1]]);
                }
                _ => {}
            }
        }
        // pieces[p][i]: (midpoint, width) of the sub-intervals of cell i on axis p
        let pieces: Vec<Vec<Vec<(f64, f64)>>> = (0..d)
            .map(|p| {
                let step = grid.spacing(p);
                let low = grid.support().low(p);
                (0..grid.points_per_dim()[p])
                    .map(|i| {
                        let a = low + step * i as f64;
                        let b = a + step;
                        let mut cuts: Vec<f64> = edges[p]
                            .iter()
                            .copied()
                            .filter(|&e| e > a && e < b)
                            .collect();
                        if cuts.is_empty() {
                            return vec![(a + 0.5 * step, step)];
                        }
                        cuts.sort_by(f64::total_cmp);
                        cuts.dedup();
                        let mut bounds = vec![a];
                        bounds.extend(cuts);
                        bounds.push(b);
                        bounds
                            .windows(2)
                            .map(|w| (0.5 * (w[0] + w[1]), w[1] - w[0]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let cells: Vec<Vec<(f64, f64)>> = (0..grid.len())
            .into_par_iter()
            .map(|index| {
                let mut idx = vec![0usize; d];
                let mut rest = index;
                for p in (0..d).rev() {
                    idx[p] = rest % grid.points_per_dim()[p];
                    rest /= grid.points_per_dim()[p];
                }
                if d == 1 {
                    pieces[0][idx[0]]
                        .iter()
                        .map(|&(x, w)| (self.pdf_unchecked(&[x]), w))
                        .collect()
                } else {
                    let mut out = Vec::new();
                    for &(x, wx) in &pieces[0][idx[0]] {
                        for &(y, wy) in &pieces[1][idx[1]] {
                            out.push((self.pdf_unchecked(&[x, y]), wx * wy));
                        }
                    }
                    out
                }
            })
            .collect();
        Ok(cells.into_iter().flatten().unzip())
    }

    /// `integral (f - level)_+` over the support box by the midpoint rule.
    pub fn oracle_excess_mass(&self, level: f64, grid_points_per_dim: usize) -> Result<f64> {
        check_level(level)?;
        let (values, weights) = self.oracle_table(grid_points_per_dim)?;
        Ok(excess_of_table(&values, &weights, level))
    }

    /// Oracle value together with the change observed when the grid is refined 2x.
    pub fn oracle_excess_mass_refined(
        &self,
        level: f64,
        grid_points_per_dim: usize,
    ) -> Result<OracleValue> {
        let coarse = self.oracle_excess_mass(level, grid_points_per_dim)?;
        let fine = self.oracle_excess_mass(level, 2 * grid_points_per_dim)?;
        Ok(OracleValue {
            value: fine,
            refinement_delta: (fine - coarse).abs(),
        })
    }

    /// Oracle at every level with the default resolution.
    pub fn oracle_curve(&self, levels: &[f64]) -> Result<ExcessMassCurve> {
        self.oracle_curve_with(levels, self.default_oracle_points())
    }

    /// Oracle at every level; the pdf is tabulated once and shared.
    pub fn oracle_curve_with(
        &self,
        levels: &[f64],
        grid_points_per_dim: usize,
    ) -> Result<ExcessMassCurve> {
        check_levels(levels)?;
        let (values, weights) = self.oracle_table(grid_points_per_dim)?;
        let estimates = levels
            .iter()
            .map(|&nu| excess_of_table(&values, &weights, nu))
            .collect();
        ExcessMassCurve::new(
            levels.to_vec(),
            estimates,
            Method::Oracle,
            Default::default(),
        )
    }

    /// One of the eight benchmark densities.
    pub fn builtin(id: &str) -> Result<DensitySpec> {
        let g1 = |weight, mean, stdev| Component {
            weight,
            kind: ComponentKind::Gaussian1D { mean, stdev },
        };
        let g2 = |weight, mean: [f64; 2], stdev: [f64; 2], correlation| Component {
            weight,
            kind: ComponentKind::Gaussian2D {
                mean,
                stdev,
                correlation,
            },
        };
        let (dimension, components) = match id {
            "a" => (1, vec![g1(1.0, 0.0, 1.0)]),
            "b" => (
                1,
                vec![
                    g1(0.8, -1.0, 0.7),
                    Component {
                        weight: 0.2,
                        kind: ComponentKind::Uniform1D {
                            low: 1.0,
                            high: 2.0,
                        },
                    },
                ],
            ),
            "c" => (
                1,
                vec![
                    g1(0.3, -1.0, 0.5),
                    g1(0.3, 1.5, 1.0),
                    Component {
                        weight: 0.4,
                        kind: ComponentKind::Laplace1D {
                            location: 0.0,
                            scale: 1.0 / 6.0,
                        },
                    },
                ],
            ),
            "d" => (
                1,
                vec![g1(0.5, -1.5, 0.4), g1(0.05, -0.8, 0.1), g1(0.45, 1.0, 0.8)],
            ),
            "A" => (2, vec![g2(1.0, [0.0, 0.0], [1.0, 1.0], 0.0)]),
            "B" => (
                2,
                vec![
                    g2(0.6, [-1.0, 0.0], [0.7, 0.7], 0.0),
                    Component {
                        weight: 0.4,
                        kind: ComponentKind::Uniform2D {
                            low: [0.5, -0.5],
                            high: [1.5, 0.5],
                        },
                    },
                ],
            ),
            "C" => (
                2,
                vec![
                    g2(0.8, [-0.5, 0.5], [1.0, 1.0], 0.0),
                    g2(0.2, [0.4, -0.4], [1.0, 1.0], 0.0),
                ],
            ),
            "D" => (
                2,
                vec![
                    g2(0.45, [0.0, 0.0], [1.5, 1.0], 0.95),
                    g2(0.45, [0.0, 0.0], [1.5, 1.0], -0.95),
                    g2(0.10, [0.0, -1.2], [0.2, 0.2], 0.0),
                ],
            ),
            other => return Err(Error::UnknownDensity(other.to_string())),
        };
        DensitySpec::new(dimension, components)
    }
}

fn excess_of_table(values: &[f64], weights: &[f64], level: f64) -> f64 {
    values
        .iter()
        .zip(weights)
        .map(|(&v, &w)| (v - level).max(0.0) * w)
        .sum()
}

/// Oracle value with its grid-refinement self-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    pub refinement_delta: f64,
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

pub(crate) fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::invalid("levels", "level grid is empty"));
    }
    for &nu in levels {
        check_level(nu)?;
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("levels", "levels must be sorted ascending"));
    }
    Ok(())
}

/// i.i.d. observations stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    dimension: usize,
    points: Vec<f64>,
    seed: Option<u64>,
}

impl Sample {
    /// Builds a sample from a flat row-major buffer.
    pub fn new(dimension: usize, points: Vec<f64>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("dimension", "must be at least 1"));
        }
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        if !points.len().is_multiple_of(dimension) {
            return Err(Error::invalid(
                "points",
                format!(
                    "{} values do not split into rows of {dimension}",
                    points.len()
                ),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("points"));
        }
        Ok(Self {
            dimension,
            points,
            seed: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dimension = rows.first().map(Vec::len).ok_or(Error::EmptySample)?;
        let mut points = Vec::with_capacity(rows.len() * dimension);
        for row in rows {
            if row.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: row.len(),
                });
            }
            points.extend_from_slice(row);
        }
        Self::new(dimension, points)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dimension)
    }

    /// Coordinates along one axis.
    pub fn column(&self, axis: usize) -> Vec<f64> {
        self.points().map(|p| p[axis]).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }
}
