//! Haar projection density estimator with its empirical variance, and the
//! level and order schedules of the wavelet-form estimator.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::densities::Sample;
use crate::error::{ensure_finite, Error, Result};
use crate::grid::SupportBox;

/// Variance-bound constant `(2M)^(2d) |phi|_inf^2` for Haar (`M = 1/2`, `|phi|_inf = 1`).
pub const HAAR_GAMMA: f64 = 1.0;
/// Smoothness assumed when none is supplied.
pub const DEFAULT_SMOOTHNESS: f64 = 2.0;

/// Admissible resolution range: `2^j0 ~ ln n` and `2^jinf ~ (n / ln n)^(1/d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSchedule {
    pub coarsest: u32,
    pub finest: u32,
}

impl LevelSchedule {
    pub fn levels(&self) -> impl Iterator<Item = u32> {
        self.coarsest..=self.finest
    }

    pub fn contains(&self, level: u32) -> bool {
        (self.coarsest..=self.finest).contains(&level)
    }
}

fn floor_log2(x: f64) -> u32 {
    if x < 1.0 {
        0
    } else {
        x.log2().floor() as u32
    }
}

pub fn level_schedule(n: usize, d: usize) -> Result<LevelSchedule> {
    if n < 3 {
        return Err(Error::invalid("n", format!("must be at least 3, got {n}")));
    }
    check_dimension(d)?;
    let nf = n as f64;
    let ln = nf.ln();
    let coarsest = floor_log2(ln);
    // Small samples in higher dimension would otherwise give an empty range.
    let finest = floor_log2((nf / ln).powf(1.0 / d as f64)).max(coarsest);
    Ok(LevelSchedule { coarsest, finest })
}

fn check_dimension(d: usize) -> Result<()> {
    if d == 0 {
        Err(Error::invalid("dimension", "must be at least 1"))
    } else {
        Ok(())
    }
}

/// Level, order and constant balancing bias and variance for smoothness `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalParameters {
    pub level: u32,
    pub order: usize,
    pub c0: f64,
    pub gamma: f64,
    pub smoothness: f64,
}

/// Largest admissible `C0`, `min(2s, d) / (pi^2 gamma (2s + d))`, exclusive.
pub fn c0_bound(d: usize, smoothness: f64, gamma: f64) -> f64 {
    let two_s = 2.0 * smoothness;
    two_s.min(d as f64) / (PI * PI * gamma * (two_s + d as f64))
}

/// `2^j = (n ln n)^(1/(2s+d))` and `N = floor((C0 n ln n)^(s/(2s+d)))`.
/// `C0` defaults to half its bound.
pub fn theoretical_parameters(
    n: usize,
    d: usize,
    smoothness: f64,
    c0: Option<f64>,
) -> Result<TheoreticalParameters> {
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
    check_dimension(d)?;
    let bound = c0_bound(d, smoothness, HAAR_GAMMA);
    let c0 = match c0 {
        Some(c) => {
            ensure_finite("c0", c)?;
            if !(c > 0.0 && c < bound) {
                return Err(Error::invalid(
                    "c0",
                    format!("must lie in (0, {bound}), got {c}"),
                ));
            }
            c
        }
        None => bound / 2.0,
    };
    let nf = n as f64;
    let nln = nf * nf.ln();
    let denom = 2.0 * smoothness + d as f64;
    Ok(TheoreticalParameters {
        level: floor_log2(nln.powf(1.0 / denom)),
        order: ((c0 * nln).powf(smoothness / denom).floor() as usize).max(1),
        c0,
        gamma: HAAR_GAMMA,
        smoothness,
    })
}

/// Haar projection of the empirical measure at level `j` on dyadic cells of
/// width `2^-j` anchored at the lower corner of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarEstimator {
    level: u32,
    support: SupportBox,
    cells_per_dim: Vec<usize>,
    counts: Vec<u64>,
    n: usize,
}

impl HaarEstimator {
    pub fn fit(sample: &Sample, level: u32, support: &SupportBox) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        let d = sample.dimension();
        if support.dimension() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: support.dimension(),
            });
        }
        if level > 30 {
            return Err(Error::invalid(
                "level",
                format!("must be at most 30, got {level}"),
            ));
        }
        if sample.len() >= 3 {
            let schedule = level_schedule(sample.len(), d)?;
            if !schedule.contains(level) {
                warn!(
                    "level {level} lies outside the recommended range {}..={}",
                    schedule.coarsest, schedule.finest
                );
            }
        }
        let scale = (1u64 << level) as f64;
        let cells_per_dim: Vec<usize> = (0..d)
            .map(|p| ((support.width(p) * scale).ceil() as usize).max(1))
            .collect();
        let total: usize = cells_per_dim.iter().product();
        let mut est = Self {
            level,
            support: support.clone(),
            cells_per_dim,
            counts: vec![0; total],
            n: sample.len(),
        };
        for x in sample.points() {
            if let Some(cell) = est.cell_of(x) {
                est.counts[cell] += 1;
            }
        }
        Ok(est)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn support(&self) -> &SupportBox {
        &self.support
    }

    pub fn dimension(&self) -> usize {
        self.support.dimension()
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn cells_per_dim(&self) -> &[usize] {
        &self.cells_per_dim
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `2^(jd)`.
    pub fn cell_density_scale(&self) -> f64 {
        2f64.powi((self.level as usize * self.dimension()) as i32)
    }

    /// Row-major index of the cell containing `x`, or `None` outside the box.
    /// Cells are half-open except that the top edge of the box joins the last cell.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        if !self.support.contains(x) {
            return None;
        }
        let scale = (1u64 << self.level) as f64;
        let mut index = 0;
        for (p, &cells) in self.cells_per_dim.iter().enumerate() {
            let raw = ((x[p] - self.support.low(p)) * scale).floor() as usize;
            index = index * cells + raw.min(cells - 1);
        }
        Some(index)
    }

    /// Coefficient `alpha_{j,l} = 2^(jd/2) count_l / n`.
    pub fn coefficient(&self, cell: usize) -> f64 {
        self.cell_density_scale().sqrt() * self.counts[cell] as f64 / self.n as f64
    }

    /// Sample fraction in the cell of `t`.
    pub fn cell_fraction(&self, t: &[f64]) -> Result<f64> {
        let cell = self.locate(t)?;
        Ok(self.counts[cell] as f64 / self.n as f64)
    }

    fn locate(&self, t: &[f64]) -> Result<usize> {
        if t.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: t.len(),
            });
        }
        self.cell_of(t).ok_or_else(|| {
            let p = (0..t.len())
                .find(|&p| !(t[p] >= self.support.low(p) && t[p] <= self.support.high(p)))
                .unwrap_or(0);
            Error::OutOfDomain {
                value: t[p],
                low: self.support.low(p),
                high: self.support.high(p),
            }
        })
    }

    /// `f_j(t) = 2^(jd) p(t)`.
    pub fn evaluate(&self, t: &[f64]) -> Result<f64> {
        Ok(self.cell_density_scale() * self.cell_fraction(t)?)
    }

    /// Empirical variance `2^(2jd) p (1 - p) / n` and its truncation at `gamma 2^(jd) / n`.
    pub fn variance_estimate(&self, t: &[f64]) -> Result<VarianceEstimate> {
        let p = self.cell_fraction(t)?;
        Ok(self.variance_from_fraction(p))
    }

    pub(crate) fn variance_from_fraction(&self, p: f64) -> VarianceEstimate {
        let scale = self.cell_density_scale();
        let n = self.n as f64;
        let raw = scale * scale * p * (1.0 - p) / n;
        VarianceEstimate {
            raw,
            truncated: raw.min(HAAR_GAMMA * scale / n),
        }
    }

    /// Integral of the estimate over the box, cells clipped at the box edge.
    pub fn integral(&self) -> f64 {
        let width = 1.0 / (1u64 << self.level) as f64;
        let scale = self.cell_density_scale();
        let mut total = 0.0;
        for (cell, &count) in self.counts.iter().enumerate() {
            let mut rest = cell;
            let mut volume = 1.0;
            for p in (0..self.dimension()).rev() {
                let cells = self.cells_per_dim[p];
                let i = rest % cells;
                rest /= cells;
                let lo = self.support.low(p) + i as f64 * width;
                let hi = (lo + width).min(self.support.high(p));
                volume *= hi - lo;
            }
            total += scale * count as f64 / self.n as f64 * volume;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub raw: f64,
    pub truncated: f64,
}
