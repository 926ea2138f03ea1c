//! Real-valued fields on the periodic grid and on the (x, r) product grid.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values at the points of a [`SpatialGrid`](crate::grid::SpatialGrid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field1D(pub Vec<f64>);

impl Field1D {
    pub fn zeros(n: usize) -> Self {
        Field1D(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Field1D(vec![value; n])
    }

    pub fn from_fn(xs: &[f64], f: impl Fn(f64) -> f64) -> Self {
        Field1D(xs.iter().map(|&x| f(x)).collect())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.0.len(),
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Field1D(self.0.iter().map(|v| a * v).collect())
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Field1D) {
        for (s, o) in self.0.iter_mut().zip(&other.0) {
            *s += a * o;
        }
    }

    pub fn sub(&self, other: &Field1D) -> Field1D {
        Field1D(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Field1D) -> Field1D {
        Field1D(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Pointwise map of two fields.
    pub fn zip_map(&self, other: &Field1D, f: impl Fn(f64, f64) -> f64) -> Field1D {
        Field1D(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field1D {
        Field1D(self.0.iter().map(|&a| f(a)).collect())
    }
}

impl Deref for Field1D {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field1D {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field1D {
    fn from(v: Vec<f64>) -> Self {
        Field1D(v)
    }
}

/// Values on the spatial grid times the level grid; `levels[i]` is the
/// horizontal profile on level `i` (bottom level first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field2D {
    pub levels: Vec<Field1D>,
}

impl Field2D {
    pub fn zeros(n_x: usize, n_r: usize) -> Self {
        Field2D {
            levels: vec![Field1D::zeros(n_x); n_r],
        }
    }

    pub fn from_levels(levels: Vec<Field1D>) -> Result<Self> {
        if let Some(first) = levels.first() {
            let n = first.len();
            for l in &levels {
                l.check_len(n)?;
            }
        }
        Ok(Field2D { levels })
    }

    pub fn n_r(&self) -> usize {
        self.levels.len()
    }

    pub fn n_x(&self) -> usize {
        self.levels.first().map_or(0, |l| l.len())
    }

    pub fn check_finite(&self) -> Result<()> {
        let n_x = self.n_x();
        for (i, l) in self.levels.iter().enumerate() {
            l.check_finite().map_err(|e| match e {
                Error::NonFinite { index } => Error::NonFinite {
                    index: i * n_x + index,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn check_shape(&self, n_x: usize, n_r: usize) -> Result<()> {
        if self.n_r() != n_r {
            return Err(Error::LengthMismatch {
                expected: n_r,
                got: self.n_r(),
            });
        }
        for l in &self.levels {
            l.check_len(n_x)?;
        }
        Ok(())
    }

    pub fn axpy(&mut self, a: f64, other: &Field2D) {
        for (s, o) in self.levels.iter_mut().zip(&other.levels) {
            s.axpy(a, o);
        }
    }

    pub fn scaled(&self, a: f64) -> Field2D {
        Field2D {
            levels: self.levels.iter().map(|l| l.scaled(a)).collect(),
        }
    }

    pub fn sub(&self, other: &Field2D) -> Field2D {
        Field2D {
            levels: self
                .levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.levels.iter().fold(0.0_f64, |m, l| m.max(l.max_abs()))
    }

    pub fn min(&self) -> f64 {
        self.levels.iter().map(|l| l.min()).fold(f64::INFINITY, f64::min)
    }
}
