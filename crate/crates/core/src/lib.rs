//! Estimation of the excess mass `E(nu) = int (f - nu)_+` of a density from an
//! i.i.d. sample.
//!
//! The functional estimator expands `u -> (|u| - nu)_+` in a cosine series on
//! `[-R, R]`, plugs a density estimate into each cosine and removes the bias
//! the estimate's noise introduces. [`excess`] holds the estimators, [`bench`]
//! compares them with the plug-in `int (f_hat - nu)_+` on the built-in
//! densities of [`densities`].
//!
//! ```
//! use excess_mass::{densities::DensitySpec, excess, excess::Method};
//!
//! let spec = DensitySpec::builtin("a").unwrap();
//! let sample = spec.sample(500, 7).unwrap();
//! let levels = excess::level_grid(11, 0.0, 0.5).unwrap();
//! let out = excess::run_pipeline(
//!     &sample,
//!     &spec.default_box(),
//!     &levels,
//!     &[Method::FunctionalMean, Method::Plugin],
//!     &Default::default(),
//!     7,
//! )
//! .unwrap();
//! assert_eq!(out.curves.len(), 2);
//! ```

pub mod bench;
pub mod cli;
pub mod densities;
pub mod error;
pub mod excess;
pub mod fourier;
pub mod grid;
pub mod kde;
pub mod rng;
pub mod wavelet;

pub use densities::{DensitySpec, Sample};
pub use error::{Error, Result};
pub use excess::{ExcessMassCurve, Method};
pub use fourier::FourierCoefficients;
pub use grid::{QuadratureGrid, SupportBox};
