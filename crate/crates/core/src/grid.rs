//! Periodic horizontal grid and the isopycnal level grid on (-1, 0).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform grid on the torus `[0, L)` with cached FFT plans.
#[derive(Clone)]
pub struct SpatialGrid {
    length: f64,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialGrid")
            .field("length", &self.length)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.length == other.length && self.n == other.n
    }
}

impl SpatialGrid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n_x must be even and >= 8, got {n}")));
        }
        let mut planner = FftPlanner::new();
        Ok(SpatialGrid {
            length,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    /// The default `2π`-periodic grid.
    pub fn periodic(n: usize) -> Result<Self> {
        Self::new(2.0 * PI, n)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| j as f64 * self.dx()).collect()
    }

    /// Signed integer mode index of FFT bin `j`.
    pub fn mode(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Angular wavenumber `2πk/L` of FFT bin `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        2.0 * PI * self.mode(j) as f64 / self.length
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.n / 2
    }

    /// Modes kept by the two-thirds rule: `3|k| < n`.
    pub fn is_resolved(&self, j: usize) -> bool {
        3 * self.mode(j).unsigned_abs() < self.n as u64
    }

    /// Unnormalised forward DFT: `f̂_k = Σ_j f_j e^{-2πi jk/n}`.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse DFT including the `1/n` normalisation; returns the real part.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spec);
        let scale = 1.0 / self.n as f64;
        spec.iter().map(|c| c.re * scale).collect()
    }
}

/// Cell partition of `(-1, 0)` in the isopycnal variable `r`.
///
/// Level `i` is the cell `(e_i, e_{i+1})`, ordered from the bottom (`r = -1`)
/// to the top (`r = 0`); its weight is the cell width.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGrid {
    edges: Vec<f64>,
    mids: Vec<f64>,
    weights: Vec<f64>,
}

impl LevelGrid {
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidGrid("need at least one level".into()));
        }
        if edges[0] != -1.0 || *edges.last().unwrap() != 0.0 {
            return Err(Error::InvalidGrid("edges must start at -1 and end at 0".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("edges must be strictly increasing".into()));
        }
        let mids = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let weights = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(LevelGrid { edges, mids, weights })
    }

    pub fn uniform(n_r: usize) -> Result<Self> {
        if n_r == 0 {
            return Err(Error::InvalidGrid("need at least one level".into()));
        }
        let mut edges: Vec<f64> = (0..=n_r).map(|i| -1.0 + i as f64 / n_r as f64).collect();
        edges[n_r] = 0.0;
        Self::from_edges(edges)
    }

    /// Uniform cells on each side of an interface placed exactly on an edge.
    pub fn two_layer(n_below: usize, n_above: usize, interface: f64) -> Result<Self> {
        Self::clustered(n_below, n_above, interface, 0.0)
    }

    /// Cells on each side of `interface`, refined towards it by a tanh map of
    /// strength `stretch` (0 gives uniform cells on each side).
    pub fn clustered(n_below: usize, n_above: usize, interface: f64, stretch: f64) -> Result<Self> {
        if n_below == 0 || n_above == 0 {
            return Err(Error::InvalidGrid("need levels on both sides of the interface".into()));
        }
        if !(interface > -1.0 && interface < 0.0) {
            return Err(Error::InvalidGrid(format!("interface {interface} outside (-1, 0)")));
        }
        if !(stretch >= 0.0 && stretch.is_finite()) {
            return Err(Error::InvalidGrid(format!("stretch must be >= 0, got {stretch}")));
        }
        // φ maps [0,1] onto [0,1] with φ'(0) small when stretch > 0.
        let phi = |s: f64| {
            if stretch == 0.0 {
                s
            } else {
                1.0 - (stretch * (1.0 - s)).tanh() / stretch.tanh()
            }
        };
        let mut edges = Vec::with_capacity(n_below + n_above + 1);
        let below = interface + 1.0;
        for i in 0..n_below {
            let s = 1.0 - i as f64 / n_below as f64;
            edges.push(interface - below * phi(s));
        }
        edges[0] = -1.0;
        edges.push(interface);
        let above = -interface;
        for i in 1..=n_above {
            let s = i as f64 / n_above as f64;
            edges.push(interface + above * phi(s));
        }
        *edges.last_mut().unwrap() = 0.0;
        Self::from_edges(edges)
    }

    pub fn n_r(&self) -> usize {
        self.mids.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mids(&self) -> &[f64] {
        &self.mids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index `i` with `edges[i] == r`, if any.
    pub fn edge_index(&self, r: f64) -> Option<usize> {
        self.edges.iter().position(|&e| e == r)
    }

    /// Levels whose cell lies above `r` (requires `r` to be an edge to be exact).
    pub fn is_above(&self, level: usize, r: f64) -> bool {
        self.mids[level] > r
    }
}
