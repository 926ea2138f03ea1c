//! Pseudo-spectral solver for the bilayer shallow-water system with
//! Gent–McWilliams thickness diffusivity.
//!
//! Unknowns are deviations `(H_s, H_b, U_s, U_b)` from the constant
//! reference state `(H̲_s, H̲_b, U̲_s, U̲_b)`, with `H̲_s + H̲_b = 1` and
//! `U̲_s + U̲_b = 0`. For layer `ℓ`
//!
//! ```text
//! ∂_t H_ℓ + ∂_x((H̲_ℓ+H_ℓ)(U̲_ℓ+U_ℓ)) = κ ∂_x² H_ℓ
//! ∂_t U_ℓ + (U̲_ℓ+U_ℓ - κ ∂_x H_ℓ/(H̲_ℓ+H_ℓ)) ∂_x U_ℓ + ∂_x P_ℓ = 0
//! ```
//!
//! with `P_s = H_s + H_b` and `P_b = (ρ_s/ρ_b) H_s + H_b`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field1D;
use crate::grid::SpatialGrid;
use crate::hyperbolicity::{self, StatePoint};
use crate::spectral::{self, SobolevIndex};

/// Smallest admissible layer depth `H̲_ℓ + H_ℓ`.
pub const DEPTH_FLOOR: f64 = 1e-6;

/// Default Courant number.
pub const DEFAULT_CFL: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilayerParams {
    pub rho_s: f64,
    pub rho_b: f64,
    pub hbar_s: f64,
    pub hbar_b: f64,
    pub ubar_s: f64,
    pub ubar_b: f64,
    pub kappa: f64,
}

impl BilayerParams {
    pub fn new(
        rho_s: f64,
        rho_b: f64,
        hbar_s: f64,
        hbar_b: f64,
        ubar_s: f64,
        ubar_b: f64,
        kappa: f64,
    ) -> Result<Self> {
        let p = BilayerParams {
            rho_s,
            rho_b,
            hbar_s,
            hbar_b,
            ubar_s,
            ubar_b,
            kappa,
        };
        p.validate()?;
        Ok(p)
    }

    /// Normalised parameters: `rho_b = 1`, `H̲_b = 1 - H̲_s`, `U̲_b = -U̲_s`.
    pub fn normalised(rho_ratio: f64, hbar_s: f64, ubar_s: f64, kappa: f64) -> Result<Self> {
        Self::new(rho_ratio, 1.0, hbar_s, 1.0 - hbar_s, ubar_s, -ubar_s, kappa)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.rho_s,
            self.rho_b,
            self.hbar_s,
            self.hbar_b,
            self.ubar_s,
            self.ubar_b,
            self.kappa,
        ];
        if let Some(index) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if !(self.rho_s > 0.0 && self.rho_b > 0.0) {
            return Err(Error::InvalidParameter("densities must be positive".into()));
        }
        if !(self.hbar_s > 0.0 && self.hbar_b > 0.0) {
            return Err(Error::InvalidParameter("reference depths must be positive".into()));
        }
        if (self.hbar_s + self.hbar_b - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidParameter(format!(
                "reference depths must sum to 1 (got {})",
                self.hbar_s + self.hbar_b
            )));
        }
        if (self.ubar_s + self.ubar_b).abs() > 1e-14 {
            return Err(Error::InvalidParameter(format!(
                "reference velocities must sum to 0 (got {})",
                self.ubar_s + self.ubar_b
            )));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::InvalidParameter(format!(
                "kappa must lie in [0, 1], got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    pub fn rho_ratio(&self) -> f64 {
        self.rho_s / self.rho_b
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        let p = BilayerParams { kappa, ..*self };
        p.validate()?;
        Ok(p)
    }

    /// Total state at a point given deviations.
    pub fn point(&self, h_s: f64, h_b: f64, u_s: f64, u_b: f64) -> StatePoint {
        StatePoint {
            rho_s: self.rho_s,
            rho_b: self.rho_b,
            h_s: self.hbar_s + h_s,
            h_b: self.hbar_b + h_b,
            u_s: self.ubar_s + u_s,
            u_b: self.ubar_b + u_b,
        }
    }
}

/// Deviation fields at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilayerState {
    pub t: f64,
    pub h_s: Field1D,
    pub h_b: Field1D,
    pub u_s: Field1D,
    pub u_b: Field1D,
}

/// Time derivatives of the four deviation fields.
#[derive(Debug, Clone, PartialEq)]
pub struct BilayerTendency {
    pub h_s: Field1D,
    pub h_b: Field1D,
    pub u_s: Field1D,
    pub u_b: Field1D,
}

impl BilayerTendency {
    pub fn fields(&self) -> [&Field1D; 4] {
        [&self.h_s, &self.h_b, &self.u_s, &self.u_b]
    }

    pub fn max_abs(&self) -> f64 {
        self.fields().iter().fold(0.0, |m, f| m.max(f.max_abs()))
    }
}

impl BilayerState {
    pub fn rest(n: usize) -> Self {
        BilayerState {
            t: 0.0,
            h_s: Field1D::zeros(n),
            h_b: Field1D::zeros(n),
            u_s: Field1D::zeros(n),
            u_b: Field1D::zeros(n),
        }
    }

    pub fn new(t: f64, h_s: Field1D, h_b: Field1D, u_s: Field1D, u_b: Field1D) -> Result<Self> {
        let n = h_s.len();
        for f in [&h_s, &h_b, &u_s, &u_b] {
            f.check_len(n)?;
            f.check_finite()?;
        }
        Ok(BilayerState {
            t,
            h_s,
            h_b,
            u_s,
            u_b,
        })
    }

    pub fn len(&self) -> usize {
        self.h_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_s.is_empty()
    }

    pub fn fields(&self) -> [&Field1D; 4] {
        [&self.h_s, &self.h_b, &self.u_s, &self.u_b]
    }

    fn fields_mut(&mut self) -> [&mut Field1D; 4] {
        [&mut self.h_s, &mut self.h_b, &mut self.u_s, &mut self.u_b]
    }

    pub fn check_finite(&self) -> Result<()> {
        for f in self.fields() {
            f.check_finite()?;
        }
        Ok(())
    }

    fn advanced(&self, dt: f64, k: &BilayerTendency) -> BilayerState {
        let mut out = self.clone();
        out.t += dt;
        for (f, d) in out.fields_mut().into_iter().zip(k.fields()) {
            f.axpy(dt, d);
        }
        out
    }

    /// Largest pointwise difference over the four fields.
    pub fn max_diff(&self, other: &BilayerState) -> f64 {
        self.fields()
            .iter()
            .zip(other.fields())
            .fold(0.0, |m, (a, b)| m.max(a.sub(b).max_abs()))
    }

    /// Smallest total depth over both layers.
    pub fn min_depth(&self, params: &BilayerParams) -> f64 {
        (params.hbar_s + self.h_s.min()).min(params.hbar_b + self.h_b.min())
    }

    pub fn check_depths(&self, params: &BilayerParams) -> Result<()> {
        let min_depth = self.min_depth(params);
        if !(min_depth > DEPTH_FLOOR) {
            return Err(Error::DepthPositivity { t: self.t, min_depth });
        }
        Ok(())
    }

    /// Band-limits every field to the two-thirds band.
    pub fn dealiased(&self, grid: &SpatialGrid) -> BilayerState {
        BilayerState {
            t: self.t,
            h_s: spectral::dealias(grid, &self.h_s),
            h_b: spectral::dealias(grid, &self.h_b),
            u_s: spectral::dealias(grid, &self.u_s),
            u_b: spectral::dealias(grid, &self.u_b),
        }
    }

    /// `H^s` norm of the four-field deviation.
    pub fn sobolev_norm(&self, grid: &SpatialGrid, s: SobolevIndex) -> Result<f64> {
        spectral::sobolev_norm_of(grid, &self.fields(), s)
    }

    /// Per-layer integrals `∫H_s, ∫H_b, ∫U_s, ∫U_b`.
    pub fn integrals(&self, grid: &SpatialGrid) -> [f64; 4] {
        self.fields().map(|f| f.iter().sum::<f64>() * grid.dx())
    }

    /// Total state at grid point `j`.
    pub fn point(&self, params: &BilayerParams, j: usize) -> StatePoint {
        params.point(self.h_s[j], self.h_b[j], self.u_s[j], self.u_b[j])
    }
}

fn check_input(grid: &SpatialGrid, state: &BilayerState, params: &BilayerParams) -> Result<()> {
    for f in state.fields() {
        f.check_len(grid.len())?;
    }
    state.check_finite()?;
    state.check_depths(params)
}

fn project(grid: &SpatialGrid, f: Field1D) -> Field1D {
    let mut spec = grid.forward(&f);
    spectral::truncate(grid, &mut spec);
    Field1D(grid.inverse(spec))
}

/// Evaluates the tendency with diffusivity `kappa`; `include_diffusion`
/// controls whether the linear `κ∂²H` terms are added (they are handled
/// separately by the integrating-factor scheme).
fn tendency(
    grid: &SpatialGrid,
    state: &BilayerState,
    params: &BilayerParams,
    kappa: f64,
    include_diffusion: bool,
) -> BilayerTendency {
    let r = params.rho_ratio();
    let layer = |h: &Field1D, u: &Field1D, hbar: f64, ubar: f64| {
        let (dh, d2h) = spectral::first_and_second(grid, h);
        let du = spectral::derivative_unchecked(grid, u, 1);
        let flux: Vec<f64> = h
            .iter()
            .zip(u.iter())
            .map(|(&h, &u)| (hbar + h) * (ubar + u))
            .collect();
        let dflux = spectral::derivative_unchecked(grid, &flux, 1);
        let mut mass = dflux.scaled(-1.0);
        if include_diffusion && kappa != 0.0 {
            mass.axpy(kappa, &d2h);
        }
        let advection: Vec<f64> = (0..h.len())
            .map(|j| (ubar + u[j] - kappa * dh[j] / (hbar + h[j])) * du[j])
            .collect();
        (mass, dh, Field1D(advection))
    };
    let (mass_s, dh_s, adv_s) = layer(&state.h_s, &state.u_s, params.hbar_s, params.ubar_s);
    let (mass_b, dh_b, adv_b) = layer(&state.h_b, &state.u_b, params.hbar_b, params.ubar_b);
    let n = grid.len();
    let vel_s: Vec<f64> = (0..n).map(|j| -adv_s[j] - dh_s[j] - dh_b[j]).collect();
    let vel_b: Vec<f64> = (0..n).map(|j| -adv_b[j] - r * dh_s[j] - dh_b[j]).collect();
    BilayerTendency {
        h_s: project(grid, mass_s),
        h_b: project(grid, mass_b),
        u_s: project(grid, Field1D(vel_s)),
        u_b: project(grid, Field1D(vel_b)),
    }
}

/// Tendency of the system without diffusivity (any `kappa` in `params` is
/// ignored).
pub fn rhs_nondiffusive(
    grid: &SpatialGrid,
    state: &BilayerState,
    params: &BilayerParams,
) -> Result<BilayerTendency> {
    check_input(grid, state, params)?;
    Ok(tendency(grid, state, params, 0.0, true))
}

/// Tendency with thickness diffusion `κ∂²H_ℓ` and the bolus correction of
/// the advecting velocity.
pub fn rhs_diffusive(
    grid: &SpatialGrid,
    state: &BilayerState,
    params: &BilayerParams,
) -> Result<BilayerTendency> {
    if !(params.kappa > 0.0) {
        return Err(Error::InvalidParameter(
            "rhs_diffusive needs kappa > 0".into(),
        ));
    }
    check_input(grid, state, params)?;
    Ok(tendency(grid, state, params, params.kappa, true))
}

/// Dispatches on `params.kappa`.
pub fn rhs(
    grid: &SpatialGrid,
    state: &BilayerState,
    params: &BilayerParams,
) -> Result<BilayerTendency> {
    check_input(grid, state, params)?;
    Ok(tendency(grid, state, params, params.kappa, true))
}

/// Total velocities `V_ℓ = U_ℓ - κ ∂_x H_ℓ / (H̲_ℓ + H_ℓ)`.
pub fn total_velocity(
    grid: &SpatialGrid,
    state: &BilayerState,
    params: &BilayerParams,
) -> Result<(Field1D, Field1D)> {
    check_input(grid, state, params)?;
    let v = |h: &Field1D, u: &Field1D, hbar: f64| {
        if params.kappa == 0.0 {
            return u.clone();
        }
        let dh = spectral::derivative_unchecked(grid, h, 1);
        Field1D(
            (0..h.len())
                .map(|j| u[j] - params.kappa * dh[j] / (hbar + h[j]))
                .collect(),
        )
    };
    Ok((
        v(&state.h_s, &state.u_s, params.hbar_s),
        v(&state.h_b, &state.u_b, params.hbar_b),
    ))
}

/// Residual of the total-velocity system
///
/// ```text
/// ∂_t H_ℓ + ∂_x((H̲_ℓ+H_ℓ)(U̲_ℓ+V_ℓ)) = 0
/// ∂_t V_ℓ + (U̲_ℓ+V_ℓ - κ∂_xH_ℓ/(H̲_ℓ+H_ℓ)) ∂_x V_ℓ + ∂_x P_ℓ = κ ∂_x² V_ℓ
/// ```
///
/// evaluated on `(H, V)` with supplied time derivatives. `hv` carries the
/// total velocities in its `u_s`, `u_b` slots.
pub fn bd_residual(
    grid: &SpatialGrid,
    hv: &BilayerState,
    d_dt: &BilayerTendency,
    params: &BilayerParams,
) -> Result<BilayerTendency> {
    check_input(grid, hv, params)?;
    let kappa = params.kappa;
    let r = params.rho_ratio();
    let layer = |h: &Field1D, v: &Field1D, hbar: f64, ubar: f64, dh_dt: &Field1D| {
        let dh = spectral::derivative_unchecked(grid, h, 1);
        let (dv, d2v) = spectral::first_and_second(grid, v);
        let flux: Vec<f64> = (0..h.len()).map(|j| (hbar + h[j]) * (ubar + v[j])).collect();
        let dflux = spectral::derivative_unchecked(grid, &flux, 1);
        let mass = dh_dt.add(&dflux);
        let transport: Vec<f64> = (0..h.len())
            .map(|j| (ubar + v[j] - kappa * dh[j] / (hbar + h[j])) * dv[j] - kappa * d2v[j])
            .collect();
        (mass, dh, Field1D(transport))
    };
    let (mass_s, dh_s, tr_s) = layer(&hv.h_s, &hv.u_s, params.hbar_s, params.ubar_s, &d_dt.h_s);
    let (mass_b, dh_b, tr_b) = layer(&hv.h_b, &hv.u_b, params.hbar_b, params.ubar_b, &d_dt.h_b);
    let n = grid.len();
    let res_s: Vec<f64> = (0..n)
        .map(|j| d_dt.u_s[j] + tr_s[j] + dh_s[j] + dh_b[j])
        .collect();
    let res_b: Vec<f64> = (0..n)
        .map(|j| d_dt.u_b[j] + tr_b[j] + r * dh_s[j] + dh_b[j])
        .collect();
    Ok(BilayerTendency {
        h_s: mass_s,
        h_b: mass_b,
        u_s: Field1D(res_s),
        u_b: Field1D(res_b),
    })
}

/// Treatment of the linear thickness-diffusion terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionTreatment {
    /// Classical RK4 on the full right-hand side.
    #[default]
    Explicit,
    /// Lawson integrating-factor RK4: `κ∂²H` is integrated exactly in
    /// Fourier space, removing the `Δx²/κ` restriction.
    IntegratingFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepOptions {
    pub cfl: f64,
    pub diffusion: DiffusionTreatment,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            cfl: DEFAULT_CFL,
            diffusion: DiffusionTreatment::Explicit,
        }
    }
}

/// Largest characteristic speed over the grid, including the bolus drift.
pub fn max_speed(grid: &SpatialGrid, state: &BilayerState, params: &BilayerParams) -> f64 {
    let mut lambda = 0.0_f64;
    for j in 0..state.len() {
        let p = state.point(params, j);
        let q = hyperbolicity::characteristic_polynomial(&p);
        if let Ok(q) = q {
            for z in q.roots() {
                lambda = lambda.max(z.norm());
            }
        }
    }
    if params.kappa > 0.0 {
        let bolus = |h: &Field1D, hbar: f64| {
            let dh = spectral::derivative_unchecked(grid, h, 1);
            (0..h.len()).fold(0.0_f64, |m, j| m.max((dh[j] / (hbar + h[j])).abs()))
        };
        lambda += params.kappa * bolus(&state.h_s, params.hbar_s).max(bolus(&state.h_b, params.hbar_b));
    }
    lambda
}

/// Stability limit `CFL · min(Δx/λ_max, Δx²/(2κ))`; the diffusive bound is
/// dropped under the integrating-factor scheme.
pub fn stable_dt(
    grid: &SpatialGrid,
    state: &BilayerState,
    params: &BilayerParams,
    opts: &StepOptions,
) -> f64 {
    let dx = grid.dx();
    let lambda = max_speed(grid, state, params);
    let mut limit = if lambda > 0.0 { dx / lambda } else { f64::INFINITY };
    if params.kappa > 0.0 && opts.diffusion == DiffusionTreatment::Explicit {
        limit = limit.min(dx * dx / (2.0 * params.kappa));
    }
    opts.cfl * limit
}

/// One RK4 step of size `dt`.
pub fn step(
    grid: &SpatialGrid,
    state: &BilayerState,
    params: &BilayerParams,
    dt: f64,
    opts: &StepOptions,
) -> Result<BilayerState> {
    check_input(grid, state, params)?;
    let limit = stable_dt(grid, state, params, opts);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    step_unchecked(grid, state, params, dt, opts)
}

pub(crate) fn step_unchecked(
    grid: &SpatialGrid,
    state: &BilayerState,
    params: &BilayerParams,
    dt: f64,
    opts: &StepOptions,
) -> Result<BilayerState> {
    let next = match opts.diffusion {
        DiffusionTreatment::Explicit => rk4(grid, state, params, dt)?,
        DiffusionTreatment::IntegratingFactor => lawson_rk4(grid, state, params, dt)?,
    };
    if next.check_finite().is_err() {
        return Err(Error::BlowUp { t: next.t });
    }
    Ok(next)
}

fn stage(grid: &SpatialGrid, s: &BilayerState, params: &BilayerParams, diffusion: bool) -> Result<BilayerTendency> {
    s.check_finite().map_err(|_| Error::BlowUp { t: s.t })?;
    s.check_depths(params)?;
    Ok(tendency(grid, s, params, params.kappa, diffusion))
}

fn rk4(grid: &SpatialGrid, y: &BilayerState, params: &BilayerParams, dt: f64) -> Result<BilayerState> {
    let k1 = stage(grid, y, params, true)?;
    let k2 = stage(grid, &y.advanced(dt / 2.0, &k1), params, true)?;
    let k3 = stage(grid, &y.advanced(dt / 2.0, &k2), params, true)?;
    let k4 = stage(grid, &y.advanced(dt, &k3), params, true)?;
    let mut out = y.clone();
    out.t += dt;
    for (i, f) in out.fields_mut().into_iter().enumerate() {
        f.axpy(dt / 6.0, k1.fields()[i]);
        f.axpy(dt / 3.0, k2.fields()[i]);
        f.axpy(dt / 3.0, k3.fields()[i]);
        f.axpy(dt / 6.0, k4.fields()[i]);
    }
    Ok(out)
}

/// Applies `exp(κ ∂² τ)` to the two thickness fields.
fn heat_flow(grid: &SpatialGrid, f: &Field1D, kappa: f64, tau: f64) -> Field1D {
    let mut spec = grid.forward(f);
    for (j, c) in spec.iter_mut().enumerate() {
        let k = grid.wavenumber(j);
        *c *= Complex64::new((-kappa * k * k * tau).exp(), 0.0);
    }
    Field1D(grid.inverse(spec))
}

fn flow_state(grid: &SpatialGrid, s: &BilayerState, kappa: f64, tau: f64) -> BilayerState {
    BilayerState {
        t: s.t,
        h_s: heat_flow(grid, &s.h_s, kappa, tau),
        h_b: heat_flow(grid, &s.h_b, kappa, tau),
        u_s: s.u_s.clone(),
        u_b: s.u_b.clone(),
    }
}

fn flow_tendency(grid: &SpatialGrid, k: &BilayerTendency, kappa: f64, tau: f64) -> BilayerTendency {
    BilayerTendency {
        h_s: heat_flow(grid, &k.h_s, kappa, tau),
        h_b: heat_flow(grid, &k.h_b, kappa, tau),
        u_s: k.u_s.clone(),
        u_b: k.u_b.clone(),
    }
}

fn lawson_rk4(grid: &SpatialGrid, y: &BilayerState, params: &BilayerParams, dt: f64) -> Result<BilayerState> {
    let kappa = params.kappa;
    let half = dt / 2.0;
    let y_half = flow_state(grid, y, kappa, half);
    let k1 = stage(grid, y, params, false)?;
    let k2 = stage(grid, &y_half.advanced(half, &flow_tendency(grid, &k1, kappa, half)), params, false)?;
    let k3 = stage(grid, &y_half.advanced(half, &k2), params, false)?;
    let y_full = flow_state(grid, y, kappa, dt);
    let k4 = stage(grid, &y_full.advanced(dt, &flow_tendency(grid, &k3, kappa, half)), params, false)?;
    let k1f = flow_tendency(grid, &k1, kappa, dt);
    let k2f = flow_tendency(grid, &k2, kappa, half);
    let k3f = flow_tendency(grid, &k3, kappa, half);
    let mut out = y_full;
    for (i, f) in out.fields_mut().into_iter().enumerate() {
        f.axpy(dt / 6.0, k1f.fields()[i]);
        f.axpy(dt / 3.0, k2f.fields()[i]);
        f.axpy(dt / 3.0, k3f.fields()[i]);
        f.axpy(dt / 6.0, k4.fields()[i]);
    }
    out.t = y.t + dt;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrateConfig {
    pub step: StepOptions,
    /// Fixed time step; `None` recomputes the CFL step every step.
    pub dt: Option<f64>,
    /// Sampling cadence of the trajectory and diagnostics.
    pub sample_interval: f64,
    /// Hyperbolicity margin `ς` of the initial data; the run warns when the
    /// state leaves the set with margin `ς/2`. `None` disables the check.
    pub sigma: Option<f64>,
    /// Compute the pointwise hyperbolicity margin at every sample.
    pub monitor_margin: bool,
    /// Halt when the `H^{s0}` norm exceeds `blowup_factor` times its
    /// initial value.
    pub blowup_factor: f64,
    pub s0: f64,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        IntegrateConfig {
            step: StepOptions::default(),
            dt: None,
            sample_interval: 0.05,
            sigma: None,
            monitor_margin: true,
            blowup_factor: 1e3,
            s0: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub t: f64,
    pub mass_s: f64,
    pub mass_b: f64,
    pub momentum_s: f64,
    pub momentum_b: f64,
    pub hs_norm: f64,
    /// `min_x (Fr_- - |U_b-U_s|/√H_b)`, NaN when not monitored.
    pub margin: f64,
    pub min_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    /// The `H^{s0}` norm exceeded its ceiling or a field became non-finite.
    BlowUp { t: f64, reason: String },
    /// A layer depth fell below [`DEPTH_FLOOR`].
    DepthLoss { t: f64, min_depth: f64 },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilayerRun {
    pub samples: Vec<BilayerState>,
    pub diagnostics: Vec<Diagnostic>,
    pub status: RunStatus,
    pub warnings: Vec<String>,
    pub steps: usize,
}

impl BilayerRun {
    pub fn last(&self) -> &BilayerState {
        self.samples.last().expect("a run always holds its initial sample")
    }
}

fn diagnostic(
    grid: &SpatialGrid,
    state: &BilayerState,
    params: &BilayerParams,
    cfg: &IntegrateConfig,
) -> Result<Diagnostic> {
    let [mass_s, mass_b, momentum_s, momentum_b] = state.integrals(grid);
    let margin = if cfg.monitor_margin && params.rho_s < params.rho_b {
        min_margin(state, params)
    } else {
        f64::NAN
    };
    Ok(Diagnostic {
        t: state.t,
        mass_s,
        mass_b,
        momentum_s,
        momentum_b,
        hs_norm: state.sobolev_norm(grid, SobolevIndex::new(cfg.s0)?)?,
        margin,
        min_depth: state.min_depth(params),
    })
}

/// `min_x (Fr_- - |U_b-U_s|/√H_b)` over the grid.
pub fn min_margin(state: &BilayerState, params: &BilayerParams) -> f64 {
    (0..state.len())
        .map(|j| {
            let p = state.point(params, j);
            match hyperbolicity::critical_froude(p.depth_ratio(), p.rho_ratio()) {
                Ok((fm, _)) => fm - p.scaled_shear(),
                Err(_) => f64::NEG_INFINITY,
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Whether every grid point lies in the hyperbolic set with margin `sigma`.
pub fn state_in_hyperbolic_set(state: &BilayerState, params: &BilayerParams, sigma: f64) -> bool {
    (0..state.len()).all(|j| hyperbolicity::in_hyperbolic_set(&state.point(params, j), sigma))
}

/// Integrates to time `t_end`, sampling every `cfg.sample_interval`.
pub fn integrate(
    grid: &SpatialGrid,
    initial: &BilayerState,
    params: &BilayerParams,
    t_end: f64,
    cfg: &IntegrateConfig,
) -> Result<BilayerRun> {
    params.validate()?;
    check_input(grid, initial, params)?;
    if !(t_end >= initial.t) || !(cfg.sample_interval > 0.0) {
        return Err(Error::InvalidParameter("bad time horizon or sample interval".into()));
    }
    let mut warnings = Vec::new();
    if let Some(sigma) = cfg.sigma {
        if !state_in_hyperbolic_set(initial, params, sigma) {
            warnings.push(format!("initial data not in the hyperbolic set with margin {sigma}"));
        }
    }
    let first = diagnostic(grid, initial, params, cfg)?;
    let ceiling = cfg.blowup_factor * first.hs_norm;
    let mut samples = vec![initial.clone()];
    let mut diagnostics = vec![first];
    let mut state = initial.clone();
    let mut steps = 0usize;
    let mut left_set = false;
    let t0 = initial.t;
    let n_samples = ((t_end - t0) / cfg.sample_interval - 1e-9).ceil().max(0.0) as usize;

    for k in 1..=n_samples {
        let target = (t0 + k as f64 * cfg.sample_interval).min(t_end);
        while state.t < target - 1e-12 * target.abs().max(1.0) {
            let remaining = target - state.t;
            let dt = match cfg.dt {
                Some(dt) => {
                    let limit = stable_dt(grid, &state, params, &cfg.step);
                    if dt > limit * (1.0 + 1e-12) {
                        return Err(Error::CflViolation { dt, limit });
                    }
                    dt
                }
                None => stable_dt(grid, &state, params, &cfg.step),
            };
            // land exactly on the sample time, avoiding a sliver step
            let dt = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
            match step_unchecked(grid, &state, params, dt, &cfg.step) {
                Ok(next) => state = next,
                Err(Error::BlowUp { t }) => {
                    return Ok(BilayerRun {
                        samples,
                        diagnostics,
                        status: RunStatus::BlowUp {
                            t,
                            reason: "non-finite field".into(),
                        },
                        warnings,
                        steps,
                    })
                }
                Err(Error::DepthPositivity { t, min_depth }) => {
                    return Ok(BilayerRun {
                        samples,
                        diagnostics,
                        status: RunStatus::DepthLoss { t, min_depth },
                        warnings,
                        steps,
                    })
                }
                Err(e) => return Err(e),
            }
            steps += 1;
        }
        state.t = target;
        let diag = diagnostic(grid, &state, params, cfg)?;
        if let Some(sigma) = cfg.sigma {
            if !left_set && !state_in_hyperbolic_set(&state, params, sigma / 2.0) {
                left_set = true;
                warnings.push(format!(
                    "left the hyperbolic set with margin {} at t = {}",
                    sigma / 2.0,
                    state.t
                ));
            }
        }
        let blown = ceiling > 0.0 && diag.hs_norm > ceiling;
        samples.push(state.clone());
        diagnostics.push(diag);
        if blown {
            return Ok(BilayerRun {
                samples,
                diagnostics,
                status: RunStatus::BlowUp {
                    t: state.t,
                    reason: format!("H^{} norm above {ceiling}", cfg.s0),
                },
                warnings,
                steps,
            });
        }
    }
    Ok(BilayerRun {
        samples,
        diagnostics,
        status: RunStatus::Completed,
        warnings,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    /// `(S^λ(U)U̇, U̇)_{L²} + (S^λ(U)V̇, V̇)_{L²}`
    pub energy: f64,
    /// `(‖U̇‖² + ‖V̇‖²)^{1/2}`
    pub l2: f64,
    /// `min_x` of the smallest eigenvalue of `S^λ(U(x))`.
    pub coercivity: f64,
}

/// Symmetrizer energy of the perturbation pair `(U̇, V̇)` about `base`.
/// `dv` carries `V̇_s, V̇_b` in its velocity slots.
pub fn energy_functional(
    grid: &SpatialGrid,
    base: &BilayerState,
    du: &BilayerState,
    dv: &BilayerState,
    params: &BilayerParams,
) -> Result<EnergySample> {
    check_input(grid, base, params)?;
    for s in [du, dv] {
        for f in s.fields() {
            f.check_len(grid.len())?;
        }
        s.check_finite()?;
    }
    let dx = grid.dx();
    let mut energy = 0.0;
    let mut l2 = 0.0;
    let mut coercivity = f64::INFINITY;
    for j in 0..base.len() {
        let sym = hyperbolicity::symmetrizer(&base.point(params, j))?;
        coercivity = coercivity.min(sym.s.symmetric_eigenvalues().min());
        for pert in [du, dv] {
            let w = nalgebra::Vector4::new(pert.h_s[j], pert.h_b[j], pert.u_s[j], pert.u_b[j]);
            energy += (w.transpose() * sym.s * w)[(0, 0)] * dx;
            l2 += w.norm_squared() * dx;
        }
    }
    Ok(EnergySample {
        t: base.t,
        energy,
        l2: l2.sqrt(),
        coercivity,
    })
}
