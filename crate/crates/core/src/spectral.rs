//! Fourier pseudo-spectral differentiation, dealiasing and discrete norms.
//!
//! Discrete `H^s` norms use the multiplier `(1 + ξ²)^{s/2}` with
//! `ξ = 2πk/L`, normalised so that `s = 0` is the left-Riemann `L²`
//! quadrature `(Σ_j |f_j|² Δx)^{1/2}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field1D, Field2D};
use crate::grid::{LevelGrid, SpatialGrid};

/// Sobolev regularity index `s >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub const L2: SobolevIndex = SobolevIndex(0.0);

    pub fn new(s: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Sobolev index must be >= 0, got {s}"
            )));
        }
        Ok(SobolevIndex(s))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// How [`mixed_norm`] reduces over levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelReduction {
    /// `max_i ‖g(·, r_i)‖`
    Sup,
    /// `Σ_i w_i ‖g(·, r_i)‖`
    Integral,
}

fn checked(grid: &SpatialGrid, f: &[f64]) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: f.len(),
        });
    }
    match f.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// `order`-th derivative by multiplication with `(iξ)^order`.
///
/// The Nyquist bin is dropped for every order so that repeated first
/// derivatives agree with the higher-order multiplier.
pub fn spectral_derivative(grid: &SpatialGrid, f: &Field1D, order: u32) -> Result<Field1D> {
    if order == 0 {
        return Err(Error::InvalidParameter(
            "derivative order must be positive".into(),
        ));
    }
    checked(grid, f)?;
    Ok(derivative_unchecked(grid, f, order))
}

pub(crate) fn derivative_unchecked(grid: &SpatialGrid, f: &[f64], order: u32) -> Field1D {
    let mut spec = grid.forward(f);
    apply_derivative(grid, &mut spec, order);
    Field1D(grid.inverse(spec))
}

/// First and second derivatives from a single forward transform.
pub(crate) fn first_and_second(grid: &SpatialGrid, f: &[f64]) -> (Field1D, Field1D) {
    let spec = grid.forward(f);
    let mut d1 = spec.clone();
    let mut d2 = spec;
    apply_derivative(grid, &mut d1, 1);
    apply_derivative(grid, &mut d2, 2);
    (Field1D(grid.inverse(d1)), Field1D(grid.inverse(d2)))
}

pub(crate) fn apply_derivative(grid: &SpatialGrid, spec: &mut [Complex64], order: u32) {
    for (j, c) in spec.iter_mut().enumerate() {
        if grid.is_nyquist(j) {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let ik = Complex64::new(0.0, grid.wavenumber(j));
        *c *= ik.powu(order);
    }
}

/// Zeroes every mode outside the two-thirds band.
pub fn dealias(grid: &SpatialGrid, f: &Field1D) -> Field1D {
    let mut spec = grid.forward(f);
    truncate(grid, &mut spec);
    Field1D(grid.inverse(spec))
}

pub(crate) fn truncate(grid: &SpatialGrid, spec: &mut [Complex64]) {
    for (j, c) in spec.iter_mut().enumerate() {
        if !grid.is_resolved(j) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// Discrete `H^s` norm of a field on the periodic grid.
pub fn sobolev_norm(grid: &SpatialGrid, f: &Field1D, s: SobolevIndex) -> Result<f64> {
    checked(grid, f)?;
    Ok(sobolev_norm_unchecked(grid, f, s.value()))
}

pub(crate) fn sobolev_norm_unchecked(grid: &SpatialGrid, f: &[f64], s: f64) -> f64 {
    let spec = grid.forward(f);
    let n = grid.len() as f64;
    let sum: f64 = spec
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let xi = grid.wavenumber(j);
            (1.0 + xi * xi).powf(s) * c.norm_sqr()
        })
        .sum();
    (sum * grid.length() / (n * n)).sqrt()
}

/// `L^∞_r H^s_x` (sup) or `L¹_r H^s_x` (integral) norm on the product grid.
pub fn mixed_norm(
    grid: &SpatialGrid,
    levels: &LevelGrid,
    g: &Field2D,
    s: SobolevIndex,
    mode: LevelReduction,
) -> Result<f64> {
    g.check_shape(grid.len(), levels.n_r())?;
    g.check_finite()?;
    let per_level = g
        .levels
        .iter()
        .map(|l| sobolev_norm_unchecked(grid, l, s.value()));
    Ok(match mode {
        LevelReduction::Sup => per_level.fold(0.0, f64::max),
        LevelReduction::Integral => per_level.zip(levels.weights()).map(|(n, w)| n * w).sum(),
    })
}

/// `H^s` norm of a tuple of fields, `(Σ ‖f_i‖²)^{1/2}`.
pub fn sobolev_norm_of(grid: &SpatialGrid, fields: &[&Field1D], s: SobolevIndex) -> Result<f64> {
    let mut total = 0.0;
    for f in fields {
        total += sobolev_norm(grid, f, s)?.powi(2);
    }
    Ok(total.sqrt())
}
