//! Continuously stratified hydrostatic Euler equations in isopycnal
//! coordinates.
//!
//! For every isopycnal level `r ∈ (-1, 0)`
//!
//! ```text
//! ∂_t h + ∂_x((1+h)(u̲+u)) = κ ∂_x² h
//! ∂_t u + (u̲+u - κ ∂_x h/(1+h)) ∂_x u + (1/ρ̲) ∂_x Ψ = 0
//! Ψ(r) = ρ̲(r) ∫_{-1}^r h dr' + ∫_r^0 ρ̲ h dr'
//! ```

use serde::{Deserialize, Serialize};

use crate::bilayer::{BilayerParams, BilayerState, RunStatus, DEFAULT_CFL, DEPTH_FLOOR};
use crate::error::{Error, Result};
use crate::field::{Field1D, Field2D};
use crate::grid::{LevelGrid, SpatialGrid};
use crate::spectral::{self, LevelReduction, SobolevIndex};

/// Reference density and velocity per level.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedProfile {
    levels: LevelGrid,
    rho: Vec<f64>,
    ubar: Vec<f64>,
}

impl StratifiedProfile {
    pub fn new(levels: LevelGrid, rho: Vec<f64>, ubar: Vec<f64>) -> Result<Self> {
        for v in [&rho, &ubar] {
            if v.len() != levels.n_r() {
                return Err(Error::LengthMismatch {
                    expected: levels.n_r(),
                    got: v.len(),
                });
            }
        }
        if let Some(index) = rho.iter().chain(&ubar).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if rho.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::InvalidParameter("densities must be positive".into()));
        }
        Ok(StratifiedProfile { levels, rho, ubar })
    }

    /// Homogeneous profile `ρ̲ ≡ rho`, `u̲ ≡ 0`.
    pub fn uniform(levels: LevelGrid, rho: f64) -> Result<Self> {
        let n = levels.n_r();
        Self::new(levels, vec![rho; n], vec![0.0; n])
    }

    pub fn levels(&self) -> &LevelGrid {
        &self.levels
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn ubar(&self) -> &[f64] {
        &self.ubar
    }

    pub fn n_r(&self) -> usize {
        self.rho.len()
    }

    pub fn rho_sup(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }

    pub fn inv_rho_sup(&self) -> f64 {
        self.rho.iter().map(|r| 1.0 / r).fold(0.0, f64::max)
    }

    /// `M̲ = max(‖ρ̲‖_∞, ‖1/ρ̲‖_∞)`.
    pub fn m_bar(&self) -> f64 {
        self.rho_sup().max(self.inv_rho_sup())
    }

    /// `(‖ρ̲₁-ρ̲₂‖_{L¹_r}, ‖u̲₁-u̲₂‖_{L¹_r})` by midpoint quadrature.
    pub fn l1_distance(&self, other: &StratifiedProfile) -> Result<(f64, f64)> {
        if self.levels != other.levels {
            return Err(Error::InvalidGrid("profiles live on different level grids".into()));
        }
        let w = self.levels.weights();
        let d = |a: &[f64], b: &[f64]| (0..w.len()).map(|i| w[i] * (a[i] - b[i]).abs()).sum();
        Ok((d(&self.rho, &other.rho), d(&self.ubar, &other.ubar)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedState {
    pub t: f64,
    pub h: Field2D,
    pub u: Field2D,
}

impl StratifiedState {
    pub fn rest(n_x: usize, n_r: usize) -> Self {
        StratifiedState {
            t: 0.0,
            h: Field2D::zeros(n_x, n_r),
            u: Field2D::zeros(n_x, n_r),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        self.h.check_finite()?;
        self.u.check_finite()
    }

    pub fn min_depth(&self) -> f64 {
        1.0 + self.h.min()
    }

    pub fn max_diff(&self, other: &StratifiedState) -> f64 {
        self.h.sub(&other.h).max_abs().max(self.u.sub(&other.u).max_abs())
    }

    /// Grid integral `∫h(·, r_i) dx` for every level.
    pub fn level_masses(&self, grid: &SpatialGrid) -> Vec<f64> {
        self.h
            .levels
            .iter()
            .map(|l| l.iter().sum::<f64>() * grid.dx())
            .collect()
    }

    fn advanced(&self, dt: f64, k: &StratifiedTendency) -> StratifiedState {
        let mut out = self.clone();
        out.t += dt;
        out.h.axpy(dt, &k.h);
        out.u.axpy(dt, &k.u);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedTendency {
    pub h: Field2D,
    pub u: Field2D,
}

impl StratifiedTendency {
    pub fn max_abs(&self) -> f64 {
        self.h.max_abs().max(self.u.max_abs())
    }

    pub fn max_diff(&self, other: &StratifiedTendency) -> f64 {
        self.h.sub(&other.h).max_abs().max(self.u.sub(&other.u).max_abs())
    }
}

/// Signature shared by Montgomery-type pressure operators.
pub type MontgomeryOp = fn(&StratifiedProfile, &Field2D) -> Result<Field2D>;

/// `Ψ = M[ρ̲]h` by midpoint quadrature, splitting each cell half below and
/// half above its midpoint. Sums run bottom-up and top-down in a fixed order.
pub fn montgomery(profile: &StratifiedProfile, h: &Field2D) -> Result<Field2D> {
    let n_r = profile.n_r();
    let n_x = h.n_x();
    h.check_shape(n_x, n_r)?;
    h.check_finite()?;
    Ok(montgomery_unchecked(profile, h))
}

fn montgomery_unchecked(profile: &StratifiedProfile, h: &Field2D) -> Field2D {
    let n_r = profile.n_r();
    let n_x = h.n_x();
    let w = profile.levels.weights();
    let rho = &profile.rho;
    // below[i] = Σ_{j<i} w_j h_j, above[i] = Σ_{j>i} w_j ρ_j h_j
    let mut below = vec![vec![0.0; n_x]; n_r];
    for i in 1..n_r {
        let (done, rest) = below.split_at_mut(i);
        let prev = &done[i - 1];
        for x in 0..n_x {
            rest[0][x] = prev[x] + w[i - 1] * h.levels[i - 1][x];
        }
    }
    let mut above = vec![vec![0.0; n_x]; n_r];
    for i in (0..n_r.saturating_sub(1)).rev() {
        let (head, tail) = above.split_at_mut(i + 1);
        let next = &tail[0];
        for x in 0..n_x {
            head[i][x] = next[x] + w[i + 1] * rho[i + 1] * h.levels[i + 1][x];
        }
    }
    let levels = (0..n_r)
        .map(|i| {
            Field1D(
                (0..n_x)
                    .map(|x| {
                        let half = 0.5 * w[i] * h.levels[i][x];
                        rho[i] * (below[i][x] + half) + (above[i][x] + rho[i] * half)
                    })
                    .collect(),
            )
        })
        .collect();
    Field2D { levels }
}

fn check_state(grid: &SpatialGrid, state: &StratifiedState, profile: &StratifiedProfile) -> Result<()> {
    state.h.check_shape(grid.len(), profile.n_r())?;
    state.u.check_shape(grid.len(), profile.n_r())?;
    state.check_finite()?;
    let min_depth = state.min_depth();
    if !(min_depth > DEPTH_FLOOR) {
        return Err(Error::DepthPositivity { t: state.t, min_depth });
    }
    Ok(())
}

fn project(grid: &SpatialGrid, f: Field1D) -> Field1D {
    let mut spec = grid.forward(&f);
    spectral::truncate(grid, &mut spec);
    Field1D(grid.inverse(spec))
}

/// Level-wise transport part plus a pressure term `-(1/ρ̲) P ∂_x h` where
/// `P` is `op`; the Montgomery pressure is `op = montgomery`.
fn tendency(
    grid: &SpatialGrid,
    state: &StratifiedState,
    profile: &StratifiedProfile,
    kappa: f64,
    op: MontgomeryOp,
) -> Result<StratifiedTendency> {
    let n_r = profile.n_r();
    let mut dh_all = Vec::with_capacity(n_r);
    let mut h_out = Vec::with_capacity(n_r);
    let mut adv = Vec::with_capacity(n_r);
    for i in 0..n_r {
        let h = &state.h.levels[i];
        let u = &state.u.levels[i];
        let ubar = profile.ubar[i];
        let (dh, d2h) = spectral::first_and_second(grid, h);
        let du = spectral::derivative_unchecked(grid, u, 1);
        let flux: Vec<f64> = (0..h.len()).map(|j| (1.0 + h[j]) * (ubar + u[j])).collect();
        let mut mass = spectral::derivative_unchecked(grid, &flux, 1).scaled(-1.0);
        if kappa != 0.0 {
            mass.axpy(kappa, &d2h);
        }
        adv.push(Field1D(
            (0..h.len())
                .map(|j| (ubar + u[j] - kappa * dh[j] / (1.0 + h[j])) * du[j])
                .collect(),
        ));
        h_out.push(project(grid, mass));
        dh_all.push(dh);
    }
    let psi_x = op(profile, &Field2D { levels: dh_all })?;
    let u_out = (0..n_r)
        .map(|i| {
            let inv = 1.0 / profile.rho[i];
            let v = adv[i].zip_map(&psi_x.levels[i], |a, p| -a - inv * p);
            project(grid, v)
        })
        .collect();
    Ok(StratifiedTendency {
        h: Field2D { levels: h_out },
        u: Field2D { levels: u_out },
    })
}

pub fn rhs(
    grid: &SpatialGrid,
    state: &StratifiedState,
    profile: &StratifiedProfile,
    kappa: f64,
) -> Result<StratifiedTendency> {
    rhs_with(grid, state, profile, kappa, montgomery)
}

/// As [`rhs`] with a caller-supplied pressure operator.
pub fn rhs_with(
    grid: &SpatialGrid,
    state: &StratifiedState,
    profile: &StratifiedProfile,
    kappa: f64,
    op: MontgomeryOp,
) -> Result<StratifiedTendency> {
    check_kappa(kappa)?;
    check_state(grid, state, profile)?;
    tendency(grid, state, profile, kappa, op)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidParameter(format!("kappa must lie in [0, 1], got {kappa}")));
    }
    Ok(())
}

/// Speed estimate `max|u̲+u| + (max(1+h) ‖ρ̲‖_∞‖1/ρ̲‖_∞)^{1/2} + κ max|∂_x h/(1+h)|`.
/// The middle term bounds the gravity-wave speed since `(1/ρ̲)M[ρ̲]` has
/// sup-norm at most `‖ρ̲‖_∞‖1/ρ̲‖_∞`.
pub fn max_speed(grid: &SpatialGrid, state: &StratifiedState, profile: &StratifiedProfile, kappa: f64) -> f64 {
    let mut advective = 0.0_f64;
    let mut bolus = 0.0_f64;
    let mut depth = 0.0_f64;
    for i in 0..profile.n_r() {
        let h = &state.h.levels[i];
        let u = &state.u.levels[i];
        for j in 0..h.len() {
            advective = advective.max((profile.ubar[i] + u[j]).abs());
            depth = depth.max(1.0 + h[j]);
        }
        if kappa > 0.0 {
            let dh = spectral::derivative_unchecked(grid, h, 1);
            for j in 0..h.len() {
                bolus = bolus.max((dh[j] / (1.0 + h[j])).abs());
            }
        }
    }
    advective + (depth * profile.rho_sup() * profile.inv_rho_sup()).sqrt() + kappa * bolus
}

pub fn stable_dt(
    grid: &SpatialGrid,
    state: &StratifiedState,
    profile: &StratifiedProfile,
    kappa: f64,
    cfl: f64,
) -> f64 {
    let dx = grid.dx();
    let lambda = max_speed(grid, state, profile, kappa);
    let mut limit = if lambda > 0.0 { dx / lambda } else { f64::INFINITY };
    if kappa > 0.0 {
        limit = limit.min(dx * dx / (2.0 * kappa));
    }
    cfl * limit
}

fn stage(
    grid: &SpatialGrid,
    s: &StratifiedState,
    profile: &StratifiedProfile,
    kappa: f64,
) -> Result<StratifiedTendency> {
    s.check_finite().map_err(|_| Error::BlowUp { t: s.t })?;
    let min_depth = s.min_depth();
    if !(min_depth > DEPTH_FLOOR) {
        return Err(Error::DepthPositivity { t: s.t, min_depth });
    }
    tendency(grid, s, profile, kappa, montgomery)
}

/// One RK4 step.
pub fn step(
    grid: &SpatialGrid,
    state: &StratifiedState,
    profile: &StratifiedProfile,
    kappa: f64,
    dt: f64,
    cfl: f64,
) -> Result<StratifiedState> {
    check_kappa(kappa)?;
    check_state(grid, state, profile)?;
    let limit = stable_dt(grid, state, profile, kappa, cfl);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    step_unchecked(grid, state, profile, kappa, dt)
}

fn step_unchecked(
    grid: &SpatialGrid,
    y: &StratifiedState,
    profile: &StratifiedProfile,
    kappa: f64,
    dt: f64,
) -> Result<StratifiedState> {
    let k1 = stage(grid, y, profile, kappa)?;
    let k2 = stage(grid, &y.advanced(dt / 2.0, &k1), profile, kappa)?;
    let k3 = stage(grid, &y.advanced(dt / 2.0, &k2), profile, kappa)?;
    let k4 = stage(grid, &y.advanced(dt, &k3), profile, kappa)?;
    let mut out = y.clone();
    out.t += dt;
    for (c, k) in [(dt / 6.0, &k1), (dt / 3.0, &k2), (dt / 3.0, &k3), (dt / 6.0, &k4)] {
        out.h.axpy(c, &k.h);
        out.u.axpy(c, &k.u);
    }
    if out.check_finite().is_err() {
        return Err(Error::BlowUp { t: out.t });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedConfig {
    pub cfl: f64,
    pub dt: Option<f64>,
    pub sample_interval: f64,
    /// Runs halt when `min(1+h)` drops below this floor.
    pub depth_floor: f64,
    pub blowup_factor: f64,
    pub s0: f64,
}

impl Default for StratifiedConfig {
    fn default() -> Self {
        StratifiedConfig {
            cfl: DEFAULT_CFL,
            dt: None,
            sample_interval: 0.05,
            depth_floor: DEPTH_FLOOR,
            blowup_factor: 1e3,
            s0: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedDiagnostic {
    pub t: f64,
    pub level_masses: Vec<f64>,
    pub min_depth: f64,
    /// `L^∞_r H^{s0}_x` norm of `(h, u)`.
    pub hs_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedRun {
    pub samples: Vec<StratifiedState>,
    pub diagnostics: Vec<StratifiedDiagnostic>,
    pub status: RunStatus,
    pub steps: usize,
}

impl StratifiedRun {
    pub fn last(&self) -> &StratifiedState {
        self.samples.last().expect("a run always holds its initial sample")
    }
}

fn diagnostic(
    grid: &SpatialGrid,
    state: &StratifiedState,
    profile: &StratifiedProfile,
    s0: f64,
) -> Result<StratifiedDiagnostic> {
    let s = SobolevIndex::new(s0)?;
    let hn = spectral::mixed_norm(grid, &profile.levels, &state.h, s, LevelReduction::Sup)?;
    let un = spectral::mixed_norm(grid, &profile.levels, &state.u, s, LevelReduction::Sup)?;
    Ok(StratifiedDiagnostic {
        t: state.t,
        level_masses: state.level_masses(grid),
        min_depth: state.min_depth(),
        hs_norm: hn.hypot(un),
    })
}

/// Advances `state` to `target` with fixed or CFL-limited steps, landing
/// exactly on `target`. Shared by the forced solver.
pub(crate) fn advance_to<S, F>(
    state: &mut S,
    t_of: impl Fn(&S) -> f64,
    target: f64,
    fixed_dt: Option<f64>,
    limit: impl Fn(&S) -> f64,
    mut step: F,
    steps: &mut usize,
) -> Result<()>
where
    F: FnMut(&S, f64) -> Result<S>,
{
    while t_of(state) < target - 1e-12 * target.abs().max(1.0) {
        let remaining = target - t_of(state);
        let cap = limit(state);
        let dt = match fixed_dt {
            Some(dt) if dt > cap * (1.0 + 1e-12) => {
                return Err(Error::CflViolation { dt, limit: cap });
            }
            Some(dt) => dt,
            None => cap,
        };
        let dt = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
        *state = step(state, dt)?;
        *steps += 1;
    }
    Ok(())
}

pub(crate) fn sample_times(t0: f64, t_end: f64, interval: f64) -> Result<Vec<f64>> {
    if !(t_end >= t0) || !(interval > 0.0) {
        return Err(Error::InvalidParameter("bad time horizon or sample interval".into()));
    }
    let n = ((t_end - t0) / interval - 1e-9).ceil().max(0.0) as usize;
    Ok((1..=n).map(|k| (t0 + k as f64 * interval).min(t_end)).collect())
}

pub fn integrate(
    grid: &SpatialGrid,
    initial: &StratifiedState,
    profile: &StratifiedProfile,
    kappa: f64,
    t_end: f64,
    cfg: &StratifiedConfig,
) -> Result<StratifiedRun> {
    check_kappa(kappa)?;
    check_state(grid, initial, profile)?;
    let times = sample_times(initial.t, t_end, cfg.sample_interval)?;
    let first = diagnostic(grid, initial, profile, cfg.s0)?;
    let ceiling = cfg.blowup_factor * first.hs_norm;
    let mut run = StratifiedRun {
        samples: vec![initial.clone()],
        diagnostics: vec![first],
        status: RunStatus::Completed,
        steps: 0,
    };
    let mut state = initial.clone();
    for target in times {
        let res = advance_to(
            &mut state,
            |s| s.t,
            target,
            cfg.dt,
            |s| stable_dt(grid, s, profile, kappa, cfg.cfl),
            |s, dt| {
                let next = step_unchecked(grid, s, profile, kappa, dt)?;
                let min_depth = next.min_depth();
                if min_depth < cfg.depth_floor {
                    return Err(Error::DepthPositivity { t: next.t, min_depth });
                }
                Ok(next)
            },
            &mut run.steps,
        );
        match res {
            Ok(()) => {}
            Err(Error::BlowUp { t }) => {
                run.status = RunStatus::BlowUp {
                    t,
                    reason: "non-finite field".into(),
                };
                return Ok(run);
            }
            Err(Error::DepthPositivity { t, min_depth }) => {
                run.status = RunStatus::DepthLoss { t, min_depth };
                return Ok(run);
            }
            Err(e) => return Err(e),
        }
        state.t = target;
        let diag = diagnostic(grid, &state, profile, cfg.s0)?;
        let blown = ceiling > 0.0 && diag.hs_norm > ceiling;
        run.samples.push(state.clone());
        run.diagnostics.push(diag);
        if blown {
            run.status = RunStatus::BlowUp {
                t: state.t,
                reason: format!("H^{} norm above {ceiling}", cfg.s0),
            };
            return Ok(run);
        }
    }
    Ok(run)
}

fn interface_edge(params: &BilayerParams, levels: &LevelGrid) -> Result<f64> {
    let interface = -params.hbar_s;
    if levels.edge_index(interface).is_none() {
        return Err(Error::MissingInterfaceEdge(interface));
    }
    Ok(interface)
}

/// Piecewise-constant profile `ρ̲ = ρ_s` above `r = -H̲_s`, `ρ_b` below, and
/// likewise for `u̲`.
pub fn bilayer_profile(params: &BilayerParams, levels: &LevelGrid) -> Result<StratifiedProfile> {
    let interface = interface_edge(params, levels)?;
    let (rho, ubar) = (0..levels.n_r())
        .map(|i| {
            if levels.is_above(i, interface) {
                (params.rho_s, params.ubar_s)
            } else {
                (params.rho_b, params.ubar_b)
            }
        })
        .unzip();
    StratifiedProfile::new(levels.clone(), rho, ubar)
}

/// Embeds layer fields: `h = H_s/H̲_s`, `u = U_s` on upper levels and
/// `h = H_b/H̲_b`, `u = U_b` on lower levels.
pub fn embed_fields(
    params: &BilayerParams,
    levels: &LevelGrid,
    h_s: &Field1D,
    h_b: &Field1D,
    u_s: &Field1D,
    u_b: &Field1D,
) -> Result<(Field2D, Field2D)> {
    let interface = interface_edge(params, levels)?;
    let upper_h = h_s.scaled(1.0 / params.hbar_s);
    let lower_h = h_b.scaled(1.0 / params.hbar_b);
    let mut h = Vec::with_capacity(levels.n_r());
    let mut u = Vec::with_capacity(levels.n_r());
    for i in 0..levels.n_r() {
        if levels.is_above(i, interface) {
            h.push(upper_h.clone());
            u.push(u_s.clone());
        } else {
            h.push(lower_h.clone());
            u.push(u_b.clone());
        }
    }
    Ok((Field2D { levels: h }, Field2D { levels: u }))
}

pub fn embed_bilayer(
    bistate: &BilayerState,
    params: &BilayerParams,
    levels: &LevelGrid,
) -> Result<(StratifiedProfile, StratifiedState)> {
    params.validate()?;
    bistate.check_finite()?;
    let profile = bilayer_profile(params, levels)?;
    let (h, u) = embed_fields(params, levels, &bistate.h_s, &bistate.h_b, &bistate.u_s, &bistate.u_b)?;
    Ok((profile, StratifiedState { t: bistate.t, h, u }))
}

/// Weighted level average over each layer, inverting [`embed_bilayer`].
pub fn layer_average(
    state: &StratifiedState,
    params: &BilayerParams,
    levels: &LevelGrid,
) -> Result<BilayerState> {
    let interface = interface_edge(params, levels)?;
    let n_x = state.h.n_x();
    state.h.check_shape(n_x, levels.n_r())?;
    state.u.check_shape(n_x, levels.n_r())?;
    let w = levels.weights();
    let mut acc = [Field1D::zeros(n_x), Field1D::zeros(n_x), Field1D::zeros(n_x), Field1D::zeros(n_x)];
    let (mut ws, mut wb) = (0.0, 0.0);
    for i in 0..levels.n_r() {
        if levels.is_above(i, interface) {
            acc[0].axpy(w[i], &state.h.levels[i]);
            acc[2].axpy(w[i], &state.u.levels[i]);
            ws += w[i];
        } else {
            acc[1].axpy(w[i], &state.h.levels[i]);
            acc[3].axpy(w[i], &state.u.levels[i]);
            wb += w[i];
        }
    }
    let [hs, hb, us, ub] = acc;
    // H_s = H̲_s · mean(h) and the layer width equals H̲_s
    BilayerState::new(
        state.t,
        hs.scaled(params.hbar_s / ws),
        hb.scaled(params.hbar_b / wb),
        us.scaled(1.0 / ws),
        ub.scaled(1.0 / wb),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PycnoclineShape {
    Tanh,
    Erf,
    PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PycnoclineSpec {
    pub params: BilayerParams,
    pub levels: LevelGrid,
    pub epsilon: f64,
    pub shape: PycnoclineShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedProfile {
    pub profile: StratifiedProfile,
    /// Continuum `‖ρ̲_ε - ρ̲_bl‖_{L¹(-1,0)}` in closed form.
    pub rho_l1: f64,
    /// Continuum `‖u̲_ε - u̲_bl‖_{L¹(-1,0)}` in closed form.
    pub ubar_l1: f64,
    /// Midpoint-quadrature distances on the level grid.
    pub rho_l1_discrete: f64,
    pub ubar_l1_discrete: f64,
}

impl PycnoclineShape {
    /// Transition `σ(ξ)` from 0 (below) to 1 (above), `ξ = (r + H̲_s)/ε`.
    fn step(self, xi: f64) -> f64 {
        match self {
            PycnoclineShape::Tanh => 0.5 * (1.0 + xi.tanh()),
            PycnoclineShape::Erf => 0.5 * (1.0 + statrs::function::erf::erf(xi)),
            PycnoclineShape::PiecewiseLinear => (0.5 * (xi + 1.0)).clamp(0.0, 1.0),
        }
    }

    /// `∫_0^a (1 - σ(ξ)) dξ`, which by oddness of `σ - 1/2` also equals
    /// `∫_{-a}^0 σ(ξ) dξ`.
    fn tail(self, a: f64) -> f64 {
        match self {
            // (a - ln cosh a)/2, written to avoid overflow
            PycnoclineShape::Tanh => 0.5 * (std::f64::consts::LN_2 - (-2.0 * a).exp().ln_1p()),
            PycnoclineShape::Erf => {
                0.5 * (a * statrs::function::erf::erfc(a) + (1.0 - (-a * a).exp()) / std::f64::consts::PI.sqrt())
            }
            PycnoclineShape::PiecewiseLinear => {
                let b = a.min(1.0);
                0.5 * (b - 0.5 * b * b)
            }
        }
    }
}

/// Smoothed two-layer profile sampled at the level midpoints.
pub fn smooth_pycnocline(spec: &PycnoclineSpec) -> Result<SmoothedProfile> {
    let p = &spec.params;
    p.validate()?;
    let eps = spec.epsilon;
    let max_eps = 0.5 * p.hbar_s.min(p.hbar_b);
    if !(eps > 0.0 && eps < max_eps) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, {max_eps}), got {eps}"
        )));
    }
    let mids = spec.levels.mids();
    let sigma: Vec<f64> = mids
        .iter()
        .map(|&r| spec.shape.step((r + p.hbar_s) / eps))
        .collect();
    let rho: Vec<f64> = sigma.iter().map(|s| p.rho_b + (p.rho_s - p.rho_b) * s).collect();
    let ubar: Vec<f64> = sigma.iter().map(|s| p.ubar_b + (p.ubar_s - p.ubar_b) * s).collect();
    let profile = StratifiedProfile::new(spec.levels.clone(), rho, ubar)?;

    let tails = eps * (spec.shape.tail(p.hbar_s / eps) + spec.shape.tail(p.hbar_b / eps));
    let w = spec.levels.weights();
    let interface = -p.hbar_s;
    let mut rho_d = 0.0;
    let mut ubar_d = 0.0;
    for (i, &r) in mids.iter().enumerate() {
        let (rb, ub) = if r > interface { (p.rho_s, p.ubar_s) } else { (p.rho_b, p.ubar_b) };
        rho_d += w[i] * (profile.rho[i] - rb).abs();
        ubar_d += w[i] * (profile.ubar[i] - ub).abs();
    }
    Ok(SmoothedProfile {
        profile,
        rho_l1: tails * (p.rho_b - p.rho_s).abs(),
        ubar_l1: tails * (p.ubar_b - p.ubar_s).abs(),
        rho_l1_discrete: rho_d,
        ubar_l1_discrete: ubar_d,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzCheck {
    /// Largest ratio over all grid points and levels.
    pub max_ratio: f64,
    /// Largest ratio on each level.
    pub per_level: Vec<f64>,
    pub m_bar: f64,
}

/// Compares `|(1/ρ̲₁)M[ρ̲₁]h - (1/ρ̲₂)M[ρ̲₂]h|(x, r)` with
/// `(M̲³|ρ̲₁-ρ̲₂|(r) + M̲‖ρ̲₁-ρ̲₂‖_{L¹_r}) ‖h(x,·)‖_{L^∞_r}` pointwise. A ratio
/// with both sides zero counts as 0.
pub fn montgomery_lipschitz_check(
    rho1: &StratifiedProfile,
    rho2: &StratifiedProfile,
    h: &Field2D,
) -> Result<LipschitzCheck> {
    let (l1, _) = rho1.l1_distance(rho2)?;
    let m = rho1.m_bar().max(rho2.m_bar());
    let p1 = montgomery(rho1, h)?;
    let p2 = montgomery(rho2, h)?;
    let n_x = h.n_x();
    let sup_r: Vec<f64> = (0..n_x)
        .map(|x| h.levels.iter().fold(0.0_f64, |a, l| a.max(l[x].abs())))
        .collect();
    let mut per_level = Vec::with_capacity(rho1.n_r());
    for i in 0..rho1.n_r() {
        let local = (rho1.rho[i] - rho2.rho[i]).abs();
        let coef = m.powi(3) * local + m * l1;
        let mut worst = 0.0_f64;
        for x in 0..n_x {
            let lhs = (p1.levels[i][x] / rho1.rho[i] - p2.levels[i][x] / rho2.rho[i]).abs();
            let rhs = coef * sup_r[x];
            let ratio = if lhs == 0.0 {
                0.0
            } else if rhs == 0.0 {
                f64::INFINITY
            } else {
                lhs / rhs
            };
            worst = worst.max(ratio);
        }
        per_level.push(worst);
    }
    Ok(LipschitzCheck {
        max_ratio: per_level.iter().copied().fold(0.0, f64::max),
        per_level,
        m_bar: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilayer;
    use proptest::prelude::*;

    fn params() -> BilayerParams {
        BilayerParams::normalised(0.5, 0.4, 0.05, 0.0).unwrap()
    }

    #[test]
    fn montgomery_of_zero_is_zero() {
        let prof = StratifiedProfile::uniform(LevelGrid::uniform(6).unwrap(), 1.3).unwrap();
        let psi = montgomery(&prof, &Field2D::zeros(8, 6)).unwrap();
        assert_eq!(psi.max_abs(), 0.0);
    }

    #[test]
    fn homogeneous_montgomery_is_depth_integral() {
        let levels = LevelGrid::clustered(5, 7, -0.3, 2.0).unwrap();
        let prof = StratifiedProfile::uniform(levels, 1.0).unwrap();
        let col = Field1D(vec![0.1, -0.2, 0.3, 0.0, 0.5, 0.7, -0.4, 0.2]);
        let h = Field2D {
            levels: vec![col.clone(); 12],
        };
        let psi = montgomery(&prof, &h).unwrap();
        for l in &psi.levels {
            for x in 0..8 {
                assert!((l[x] - col[x]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bilayer_montgomery_reproduces_layer_pressures() {
        let p = params();
        let levels = LevelGrid::two_layer(6, 4, -p.hbar_s).unwrap();
        let prof = bilayer_profile(&p, &levels).unwrap();
        let hs = Field1D(vec![0.03, -0.01, 0.02, 0.0, 0.01, -0.02, 0.04, 0.01]);
        let hb = Field1D(vec![-0.02, 0.05, 0.01, 0.03, 0.0, 0.02, -0.01, 0.0]);
        let (h, _) = embed_fields(&p, &levels, &hs, &hb, &hs, &hb).unwrap();
        let psi = montgomery(&prof, &h).unwrap();
        for i in 0..levels.n_r() {
            for x in 0..8 {
                let expected = if levels.is_above(i, -p.hbar_s) {
                    hs[x] + hb[x]
                } else {
                    0.5 * hs[x] + hb[x]
                };
                assert!((psi.levels[i][x] / prof.rho()[i] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn embedding_needs_interface_edge() {
        let p = params();
        let levels = LevelGrid::uniform(7).unwrap();
        let s = BilayerState::rest(8);
        assert!(matches!(
            embed_bilayer(&s, &p, &levels),
            Err(Error::MissingInterfaceEdge(_))
        ));
    }

    #[test]
    fn embedding_round_trip() {
        let p = params();
        let g = SpatialGrid::periodic(16).unwrap();
        let levels = LevelGrid::clustered(5, 3, -p.hbar_s, 1.5).unwrap();
        let xs = g.points();
        let s = BilayerState::new(
            0.2,
            Field1D::from_fn(&xs, |x| 0.02 * x.sin()),
            Field1D::from_fn(&xs, |x| 0.01 * x.cos()),
            Field1D::from_fn(&xs, |x| 0.03 * (2.0 * x).sin()),
            Field1D::from_fn(&xs, |x| -0.01 * x.cos()),
        )
        .unwrap();
        let (prof, st) = embed_bilayer(&s, &p, &levels).unwrap();
        for i in 0..levels.n_r() {
            if levels.is_above(i, -p.hbar_s) {
                assert_eq!(prof.rho()[i], p.rho_s);
                assert_eq!(st.h.levels[i], s.h_s.scaled(1.0 / p.hbar_s));
            } else {
                assert_eq!(prof.ubar()[i], p.ubar_b);
                assert_eq!(st.u.levels[i], s.u_b);
            }
        }
        let back = layer_average(&st, &p, &levels).unwrap();
        assert!(back.max_diff(&s) < 1e-15);
    }

    #[test]
    fn embedded_rhs_matches_bilayer_rhs() {
        let p = params().with_kappa(0.05).unwrap();
        let g = SpatialGrid::periodic(32).unwrap();
        let levels = LevelGrid::clustered(6, 5, -p.hbar_s, 2.0).unwrap();
        let xs = g.points();
        let s = BilayerState::new(
            0.0,
            Field1D::from_fn(&xs, |x| 0.05 * x.sin()),
            Field1D::from_fn(&xs, |x| 0.04 * (2.0 * x).cos()),
            Field1D::from_fn(&xs, |x| 0.03 * x.cos()),
            Field1D::from_fn(&xs, |x| -0.02 * (3.0 * x).sin()),
        )
        .unwrap();
        let (prof, st) = embed_bilayer(&s, &p, &levels).unwrap();
        let strat = rhs(&g, &st, &prof, p.kappa).unwrap();
        let bi = bilayer::rhs(&g, &s, &p).unwrap();
        let (h, u) = embed_fields(&p, &levels, &bi.h_s, &bi.h_b, &bi.u_s, &bi.u_b).unwrap();
        let expected = StratifiedTendency { h, u };
        assert!(strat.max_diff(&expected) < 1e-12, "{}", strat.max_diff(&expected));
    }

    #[test]
    fn homogeneous_fluid_reduces_to_one_layer() {
        let g = SpatialGrid::periodic(32).unwrap();
        let levels = LevelGrid::uniform(4).unwrap();
        let prof = StratifiedProfile::uniform(levels, 2.0).unwrap();
        let xs = g.points();
        let h1 = Field1D::from_fn(&xs, |x| 0.1 * x.sin());
        let u1 = Field1D::from_fn(&xs, |x| 0.05 * x.cos());
        let st = StratifiedState {
            t: 0.0,
            h: Field2D {
                levels: vec![h1.clone(); 4],
            },
            u: Field2D {
                levels: vec![u1.clone(); 4],
            },
        };
        let kappa = 0.1;
        let k = rhs(&g, &st, &prof, kappa).unwrap();
        // one-layer shallow water with diffusivity, evaluated by hand
        let dh = spectral::spectral_derivative(&g, &h1, 1).unwrap();
        let d2h = spectral::spectral_derivative(&g, &h1, 2).unwrap();
        let du = spectral::spectral_derivative(&g, &u1, 1).unwrap();
        let flux = h1.zip_map(&u1, |h, u| (1.0 + h) * u);
        let mass = spectral::spectral_derivative(&g, &flux, 1)
            .unwrap()
            .scaled(-1.0)
            .zip_map(&d2h, |a, b| a + kappa * b);
        let vel: Field1D = Field1D(
            (0..32)
                .map(|j| -(u1[j] - kappa * dh[j] / (1.0 + h1[j])) * du[j] - dh[j])
                .collect(),
        );
        let mass = spectral::dealias(&g, &mass);
        let vel = spectral::dealias(&g, &vel);
        for i in 0..4 {
            assert!(k.h.levels[i].sub(&mass).max_abs() < 1e-13);
            assert!(k.u.levels[i].sub(&vel).max_abs() < 1e-13);
        }
    }

    #[test]
    fn rest_rhs_vanishes() {
        let g = SpatialGrid::periodic(16).unwrap();
        let prof = StratifiedProfile::uniform(LevelGrid::uniform(3).unwrap(), 1.0).unwrap();
        let k = rhs(&g, &StratifiedState::rest(16, 3), &prof, 0.2).unwrap();
        assert_eq!(k.max_abs(), 0.0);
    }

    #[test]
    fn pycnocline_rejects_wide_epsilon() {
        let p = params();
        let spec = PycnoclineSpec {
            params: p,
            levels: LevelGrid::uniform(10).unwrap(),
            epsilon: 0.25,
            shape: PycnoclineShape::Tanh,
        };
        assert!(smooth_pycnocline(&spec).is_err());
    }

    #[test]
    fn pycnocline_distances_match_closed_forms() {
        let p = BilayerParams::normalised(0.5, 0.5, 0.05, 0.1).unwrap();
        let levels = LevelGrid::clustered(400, 400, -0.5, 0.0).unwrap();
        let eps = 0.02;
        let delta = 0.5;
        let cases = [
            (PycnoclineShape::Tanh, eps * delta * std::f64::consts::LN_2),
            (PycnoclineShape::Erf, eps * delta / std::f64::consts::PI.sqrt()),
            (PycnoclineShape::PiecewiseLinear, eps * delta / 2.0),
        ];
        for (shape, expected) in cases {
            let sp = smooth_pycnocline(&PycnoclineSpec {
                params: p,
                levels: levels.clone(),
                epsilon: eps,
                shape,
            })
            .unwrap();
            assert!((sp.rho_l1 - expected).abs() < 1e-14, "{shape:?}");
            assert!((sp.rho_l1_discrete - expected).abs() < 1e-3 * expected, "{shape:?}");
            assert!((sp.ubar_l1 - expected * 0.2).abs() < 1e-14);
        }
    }

    #[test]
    fn lipschitz_ratio_trivial_cases() {
        let levels = LevelGrid::uniform(5).unwrap();
        let a = StratifiedProfile::new(levels.clone(), vec![1.0, 0.9, 0.8, 0.7, 0.6], vec![0.0; 5]).unwrap();
        let h = Field2D {
            levels: vec![Field1D(vec![0.1, -0.3, 0.2, 0.0, 0.4, 0.1, 0.2, 0.3]); 5],
        };
        assert_eq!(montgomery_lipschitz_check(&a, &a, &h).unwrap().max_ratio, 0.0);
        let b = StratifiedProfile::uniform(levels, 0.8).unwrap();
        assert_eq!(
            montgomery_lipschitz_check(&a, &b, &Field2D::zeros(8, 5)).unwrap().max_ratio,
            0.0
        );
    }

    fn arb_profile(n_r: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.2..3.0_f64, n_r)
    }

    fn arb_h(n_x: usize, n_r: usize) -> impl Strategy<Value = Field2D> {
        proptest::collection::vec(proptest::collection::vec(-1.0..1.0_f64, n_x), n_r)
            .prop_map(|v| Field2D {
                levels: v.into_iter().map(Field1D).collect(),
            })
    }

    proptest! {
        #[test]
        fn montgomery_is_linear(rho in arb_profile(6), a in arb_h(8, 6), b in arb_h(8, 6), c in -2.0..2.0_f64) {
            let prof = StratifiedProfile::new(LevelGrid::uniform(6).unwrap(), rho, vec![0.0; 6]).unwrap();
            let mut comb = a.clone();
            comb.axpy(c, &b);
            let lhs = montgomery(&prof, &comb).unwrap();
            let mut rhs = montgomery(&prof, &a).unwrap();
            rhs.axpy(c, &montgomery(&prof, &b).unwrap());
            prop_assert!(lhs.sub(&rhs).max_abs() < 1e-12);
        }

        #[test]
        fn montgomery_commutes_with_derivative(rho in arb_profile(5), coeffs in proptest::collection::vec(-0.3..0.3_f64, 10)) {
            let g = SpatialGrid::periodic(16).unwrap();
            let prof = StratifiedProfile::new(LevelGrid::uniform(5).unwrap(), rho, vec![0.0; 5]).unwrap();
            let xs = g.points();
            let h = Field2D { levels: (0..5).map(|i| Field1D::from_fn(&xs, |x| coeffs[2 * i] * x.sin() + coeffs[2 * i + 1] * (3.0 * x).cos())).collect() };
            let dh = Field2D { levels: h.levels.iter().map(|l| spectral::spectral_derivative(&g, l, 1).unwrap()).collect() };
            let a = montgomery(&prof, &dh).unwrap();
            let psi = montgomery(&prof, &h).unwrap();
            let b = Field2D { levels: psi.levels.iter().map(|l| spectral::spectral_derivative(&g, l, 1).unwrap()).collect() };
            prop_assert!(a.sub(&b).max_abs() < 1e-12);
        }

        #[test]
        fn lipschitz_bound_holds(r1 in arb_profile(7), r2 in arb_profile(7), h in arb_h(6, 7)) {
            let levels = LevelGrid::clustered(3, 4, -0.4, 1.0).unwrap();
            let a = StratifiedProfile::new(levels.clone(), r1, vec![0.0; 7]).unwrap();
            let b = StratifiedProfile::new(levels, r2, vec![0.0; 7]).unwrap();
            let check = montgomery_lipschitz_check(&a, &b, &h).unwrap();
            prop_assert!(check.max_ratio <= 1.0 + 1e-9);
        }
    }
}
