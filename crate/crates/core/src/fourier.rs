//! Cosine-series expansion of the excess-mass kernel `phi_nu(u) = (|u| - nu)_+`
//! on `[-R, R]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Smallest accepted scale.
pub const MIN_SCALE: f64 = 1e-12;

/// Coefficients `c_0..c_N` of an even function on `[-R, R]` in the basis
/// `cos(pi k u / R)`. Sine coefficients vanish and are not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients {
    level: Option<f64>,
    scale: f64,
    values: Vec<f64>,
}

impl FourierCoefficients {
    /// Closed-form coefficients of `phi_nu` on scale `R`:
    /// `c_0 = (R - nu)^2 / (2R)` and
    /// `c_k = 2R / (pi k)^2 * (cos(pi k) - cos(pi k nu / R))`, all zero once `nu >= R`.
    pub fn new(level: f64, order: usize, scale: f64) -> Result<Self> {
        ensure_finite("level", level)?;
        ensure_finite("scale", scale)?;
        if level < 0.0 {
            return Err(Error::invalid(
                "level",
                format!("must be non-negative, got {level}"),
            ));
        }
        check_order(order)?;
        check_scale(scale)?;
        let mut values = vec![0.0; order + 1];
        if level < scale {
            values[0] = (scale - level).powi(2) / (2.0 * scale);
            let ratio = level / scale;
            for (k, c) in values.iter_mut().enumerate().skip(1) {
                let kf = k as f64;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                *c = 2.0 * scale / (PI * PI * kf * kf) * (sign - (PI * kf * ratio).cos());
            }
        }
        Ok(Self {
            level: Some(level),
            scale,
            values,
        })
    }

    /// Coefficients of an arbitrary even function, integrated numerically with
    /// `points` midpoint nodes on `[0, R]`.
    pub fn numeric<F>(phi: F, order: usize, scale: f64, points: usize) -> Result<Self>
    where
        F: Fn(f64) -> f64,
    {
        check_order(order)?;
        ensure_finite("scale", scale)?;
        check_scale(scale)?;
        if points < 2 {
            return Err(Error::invalid("points", "need at least 2 quadrature nodes"));
        }
        let du = scale / points as f64;
        let samples: Vec<(f64, f64)> = (0..points)
            .map(|i| {
                let u = (i as f64 + 0.5) * du;
                (u, phi(u))
            })
            .collect();
        let values = (0..=order)
            .map(|k| {
                let w = PI * k as f64 / scale;
                let integral: f64 =
                    samples.iter().map(|&(u, p)| p * (w * u).cos()).sum::<f64>() * du;
                if k == 0 {
                    integral / scale
                } else {
                    2.0 * integral / scale
                }
            })
            .collect();
        Ok(Self {
            level: None,
            scale,
            values,
        })
    }

    /// Level `nu`, or `None` for numerically integrated coefficients.
    pub fn level(&self) -> Option<f64> {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Partial sum `c_0 + sum_k c_k cos(pi k u / R)`.
    pub fn approx_phi(&self, u: f64) -> Result<f64> {
        ensure_finite("u", u)?;
        if u.abs() > self.scale {
            return Err(Error::OutOfDomain {
                value: u,
                low: -self.scale,
                high: self.scale,
            });
        }
        Ok(self.partial_sum(u))
    }

    pub(crate) fn partial_sum(&self, u: f64) -> f64 {
        let x = PI * u.abs() / self.scale;
        self.values
            .iter()
            .enumerate()
            .map(|(k, c)| c * (k as f64 * x).cos())
            .sum()
    }

    /// Partial sum at `u = 0`, i.e. `sum_k c_k`.
    pub fn value_at_zero(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 {
        Err(Error::invalid(
            "order",
            "truncation order must be at least 1",
        ))
    } else {
        Ok(())
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale < MIN_SCALE {
        Err(Error::invalid(
            "scale",
            format!("must be at least {MIN_SCALE}, got {scale}"),
        ))
    } else {
        Ok(())
    }
}

/// Shorthand for [`FourierCoefficients::new`].
pub fn coefficients(level: f64, order: usize, scale: f64) -> Result<FourierCoefficients> {
    FourierCoefficients::new(level, order, scale)
}

/// `(|u| - nu)_+`.
pub fn exact_phi(u: f64, level: f64) -> f64 {
    (u.abs() - level).max(0.0)
}

/// Shorthand for [`FourierCoefficients::approx_phi`].
pub fn approx_phi(coeffs: &FourierCoefficients, u: f64) -> Result<f64> {
    coeffs.approx_phi(u)
}

/// Uniform bound `4R / (pi^2 N)` on `|phi_nu - A_N phi_nu|` over `[-R, R]`.
pub fn tail_bound(order: usize, scale: f64) -> f64 {
    4.0 * scale / (PI * PI * order.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_term_at_half() {
        let c = coefficients(0.5, 3, 1.0).unwrap();
        assert_relative_eq!(c.get(0), 0.125, epsilon = 1e-15);
        assert_relative_eq!(c.get(1), -2.0 / (PI * PI), epsilon = 1e-15);
    }

    #[test]
    fn level_at_scale_vanishes() {
        let c = coefficients(1.0, 50, 1.0).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
        let above = coefficients(3.0, 10, 2.0).unwrap();
        assert!(above.values().iter().all(|&v| v == 0.0));
        for u in [-1.0, -0.3, 0.0, 0.8, 1.0] {
            assert_eq!(c.approx_phi(u).unwrap(), 0.0);
        }
    }

    #[test]
    fn exact_phi_examples() {
        assert_relative_eq!(exact_phi(0.7, 0.5), 0.2, epsilon = 1e-15);
        assert_relative_eq!(exact_phi(-0.7, 0.5), 0.2, epsilon = 1e-15);
        assert_eq!(exact_phi(0.3, 0.5), 0.0);
    }

    #[test]
    fn partial_sum_near_kink_and_edge() {
        let c = coefficients(0.5, 200, 1.0).unwrap();
        let bound = 4.0 / (PI * PI * 200.0);
        assert!((c.approx_phi(1.0).unwrap() - 0.5).abs() <= bound);
        assert!(c.approx_phi(0.0).unwrap().abs() <= bound);
    }

    #[test]
    fn out_of_domain() {
        let c = coefficients(0.5, 5, 1.0).unwrap();
        assert!(matches!(c.approx_phi(1.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn tail_bound_values() {
        assert_relative_eq!(tail_bound(1, 1.0), 4.0 / (PI * PI), epsilon = 1e-15);
        assert_relative_eq!(
            tail_bound(100, 1.0),
            0.004_052_847_345_693_511,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            tail_bound(100, 2.0),
            2.0 * tail_bound(100, 1.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn invalid_inputs() {
        assert!(coefficients(f64::NAN, 5, 1.0).is_err());
        assert!(coefficients(0.5, 0, 1.0).is_err());
        assert!(coefficients(-0.1, 5, 1.0).is_err());
        assert!(coefficients(0.5, 5, 0.0).is_err());
        assert!(coefficients(0.5, 5, f64::INFINITY).is_err());
    }

    #[test]
    fn numeric_matches_closed_form() {
        let closed = coefficients(0.3, 20, 1.5).unwrap();
        let numeric =
            FourierCoefficients::numeric(|u| exact_phi(u, 0.3), 20, 1.5, 200_000).unwrap();
        for (a, b) in closed.values().iter().zip(numeric.values()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert_eq!(numeric.level(), None);
    }

    #[test]
    fn scale_is_linear() {
        let r = 2.5;
        let big = coefficients(0.75 * r, 30, r).unwrap();
        let unit = coefficients(0.75, 30, 1.0).unwrap();
        for (a, b) in big.values().iter().zip(unit.values()) {
            assert!((a - r * b).abs() < 1e-12);
        }
    }
}
