//! Refined approximate solutions: the stratified transport equations on a
//! target profile, driven by the Montgomery pressure of a reference solution
//!
//! ```text
//! ∂_t h_app + ∂_x((1+h_app)(u̲+u_app)) = κ ∂_x² h_app
//! ∂_t u_app + (u̲+u_app - κ∂_x h_app/(1+h_app)) ∂_x u_app = -(1/ρ̲) M[ρ̲] ∂_x h_ref
//! ```
//!
//! Levels are coupled only through the prescribed forcing.

use serde::{Deserialize, Serialize};

use crate::bilayer::{RunStatus, DEPTH_FLOOR};
use crate::error::{Error, Result};
use crate::field::{Field1D, Field2D};
use crate::grid::SpatialGrid;
use crate::spectral::{self, LevelReduction, SobolevIndex};
use crate::stratified::{self, advance_to, sample_times, StratifiedConfig, StratifiedProfile, StratifiedState};

/// Dense reference trajectory with thickness rates for Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    pub profile: StratifiedProfile,
    pub kappa: f64,
    pub snapshots: Vec<StratifiedState>,
    /// `∂_t h_ref` at every snapshot.
    pub rates: Vec<Field2D>,
}

fn hermite(t0: f64, t1: f64, t: f64, y0: &Field2D, y1: &Field2D, d0: &Field2D, d1: &Field2D) -> Field2D {
    let dt = t1 - t0;
    let s = (t - t0) / dt;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let mut out = y0.clone();
    for (i, l) in out.levels.iter_mut().enumerate() {
        for x in 0..l.len() {
            l[x] = h00 * y0.levels[i][x]
                + h10 * dt * d0.levels[i][x]
                + h01 * y1.levels[i][x]
                + h11 * dt * d1.levels[i][x];
        }
    }
    out
}

/// Locates `t` among increasing `times`; returns `Ok(Err(k))` on an exact hit
/// and `Ok(Ok(k))` when `t` lies strictly inside `(times[k], times[k+1])`.
fn bracket(times: &[f64], t: f64) -> Result<std::result::Result<usize, usize>> {
    let (start, end) = (times[0], *times.last().unwrap());
    let slack = 1e-12 * end.abs().max(1.0);
    if t < start - slack || t > end + slack {
        return Err(Error::OutsideHorizon { t, start, end });
    }
    if let Some(k) = times.iter().position(|&s| (s - t).abs() <= slack) {
        return Ok(Err(k));
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    Ok(Ok(k))
}

impl ReferenceRun {
    pub fn new(
        grid: &SpatialGrid,
        profile: StratifiedProfile,
        kappa: f64,
        snapshots: Vec<StratifiedState>,
    ) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::InvalidParameter("empty reference trajectory".into()));
        }
        if snapshots.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidParameter("snapshot times must increase".into()));
        }
        let rates = snapshots
            .iter()
            .map(|s| stratified::rhs(grid, s, &profile, kappa).map(|k| k.h))
            .collect::<Result<_>>()?;
        Ok(ReferenceRun {
            profile,
            kappa,
            snapshots,
            rates,
        })
    }

    /// Integrates the stratified system and keeps every step.
    pub fn integrate(
        grid: &SpatialGrid,
        initial: &StratifiedState,
        profile: StratifiedProfile,
        kappa: f64,
        t_end: f64,
        dt: f64,
    ) -> Result<Self> {
        let cfg = StratifiedConfig {
            dt: Some(dt),
            sample_interval: dt,
            ..StratifiedConfig::default()
        };
        let run = stratified::integrate(grid, initial, &profile, kappa, t_end, &cfg)?;
        match run.status {
            RunStatus::Completed => {}
            RunStatus::DepthLoss { t, min_depth } => return Err(Error::DepthPositivity { t, min_depth }),
            RunStatus::BlowUp { t, .. } => return Err(Error::BlowUp { t }),
        }
        Self::new(grid, profile, kappa, run.samples)
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn horizon(&self) -> (f64, f64) {
        (self.snapshots[0].t, self.snapshots.last().unwrap().t)
    }

    /// `h_ref(t)` by cubic Hermite interpolation.
    pub fn h_at(&self, t: f64) -> Result<Field2D> {
        let times = self.times();
        Ok(match bracket(&times, t)? {
            Err(k) => self.snapshots[k].h.clone(),
            Ok(k) => hermite(
                times[k],
                times[k + 1],
                t,
                &self.snapshots[k].h,
                &self.snapshots[k + 1].h,
                &self.rates[k],
                &self.rates[k + 1],
            ),
        })
    }
}

/// `F = -(1/ρ̲) M[ρ̲] ∂_x h_ref` with `ρ̲` the target profile, tabulated at
/// the reference snapshots together with `∂_t F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub times: Vec<f64>,
    pub values: Vec<Field2D>,
    pub rates: Vec<Field2D>,
}

fn pressure_gradient(grid: &SpatialGrid, profile: &StratifiedProfile, h: &Field2D) -> Result<Field2D> {
    let dh = Field2D {
        levels: h
            .levels
            .iter()
            .map(|l| spectral::spectral_derivative(grid, l, 1))
            .collect::<Result<_>>()?,
    };
    let mut psi = stratified::montgomery(profile, &dh)?;
    for (l, &r) in psi.levels.iter_mut().zip(profile.rho()) {
        *l = l.scaled(1.0 / r);
    }
    Ok(psi)
}

impl Forcing {
    /// Zero forcing over `[t0, t1]`.
    pub fn zero(n_x: usize, n_r: usize, t0: f64, t1: f64) -> Self {
        Forcing {
            times: vec![t0, t1],
            values: vec![Field2D::zeros(n_x, n_r); 2],
            rates: vec![Field2D::zeros(n_x, n_r); 2],
        }
    }

    pub fn at(&self, t: f64) -> Result<Field2D> {
        Ok(match bracket(&self.times, t)? {
            Err(k) => self.values[k].clone(),
            Ok(k) => hermite(
                self.times[k],
                self.times[k + 1],
                t,
                &self.values[k],
                &self.values[k + 1],
                &self.rates[k],
                &self.rates[k + 1],
            ),
        })
    }

    /// Replaces the forcing on `level` by zero.
    pub fn without_level(&self, level: usize) -> Self {
        let mut out = self.clone();
        for f in out.values.iter_mut().chain(out.rates.iter_mut()) {
            f.levels[level] = Field1D::zeros(f.levels[level].len());
        }
        out
    }
}

pub fn build_forcing(grid: &SpatialGrid, reference: &ReferenceRun, target: &StratifiedProfile) -> Result<Forcing> {
    if reference.profile.levels() != target.levels() {
        return Err(Error::InvalidGrid("reference and target use different level grids".into()));
    }
    let mut values = Vec::with_capacity(reference.snapshots.len());
    let mut rates = Vec::with_capacity(reference.snapshots.len());
    for (s, r) in reference.snapshots.iter().zip(&reference.rates) {
        values.push(pressure_gradient(grid, target, &s.h)?.scaled(-1.0));
        rates.push(pressure_gradient(grid, target, r)?.scaled(-1.0));
    }
    Ok(Forcing {
        times: reference.times(),
        values,
        rates,
    })
}

fn project(grid: &SpatialGrid, f: Field1D) -> Field1D {
    let mut spec = grid.forward(&f);
    spectral::truncate(grid, &mut spec);
    Field1D(grid.inverse(spec))
}

/// Tendency of a single level `(h, u)` under forcing `f`.
fn level_tendency(
    grid: &SpatialGrid,
    h: &Field1D,
    u: &Field1D,
    ubar: f64,
    kappa: f64,
    f: &Field1D,
) -> (Field1D, Field1D) {
    let (dh, d2h) = spectral::first_and_second(grid, h);
    let du = spectral::derivative_unchecked(grid, u, 1);
    let flux: Vec<f64> = (0..h.len()).map(|j| (1.0 + h[j]) * (ubar + u[j])).collect();
    let mut mass = spectral::derivative_unchecked(grid, &flux, 1).scaled(-1.0);
    if kappa != 0.0 {
        mass.axpy(kappa, &d2h);
    }
    let vel: Vec<f64> = (0..h.len())
        .map(|j| -(ubar + u[j] - kappa * dh[j] / (1.0 + h[j])) * du[j] + f[j])
        .collect();
    (project(grid, mass), project(grid, Field1D(vel)))
}

/// Tendency of the forced system at time `state.t`.
pub fn refined_rhs(
    grid: &SpatialGrid,
    state: &StratifiedState,
    profile: &StratifiedProfile,
    forcing: &Forcing,
    kappa: f64,
) -> Result<(Field2D, Field2D)> {
    state.h.check_shape(grid.len(), profile.n_r())?;
    state.u.check_shape(grid.len(), profile.n_r())?;
    state.check_finite().map_err(|_| Error::BlowUp { t: state.t })?;
    let min_depth = state.min_depth();
    if !(min_depth > DEPTH_FLOOR) {
        return Err(Error::DepthPositivity { t: state.t, min_depth });
    }
    let f = forcing.at(state.t)?;
    let (h, u) = (0..profile.n_r())
        .map(|i| {
            level_tendency(
                grid,
                &state.h.levels[i],
                &state.u.levels[i],
                profile.ubar()[i],
                kappa,
                &f.levels[i],
            )
        })
        .unzip();
    Ok((Field2D { levels: h }, Field2D { levels: u }))
}

fn advanced(s: &StratifiedState, dt: f64, k: &(Field2D, Field2D)) -> StratifiedState {
    let mut out = s.clone();
    out.t += dt;
    out.h.axpy(dt, &k.0);
    out.u.axpy(dt, &k.1);
    out
}

fn refined_step(
    grid: &SpatialGrid,
    y: &StratifiedState,
    profile: &StratifiedProfile,
    forcing: &Forcing,
    kappa: f64,
    dt: f64,
) -> Result<StratifiedState> {
    let k1 = refined_rhs(grid, y, profile, forcing, kappa)?;
    let k2 = refined_rhs(grid, &advanced(y, dt / 2.0, &k1), profile, forcing, kappa)?;
    let k3 = refined_rhs(grid, &advanced(y, dt / 2.0, &k2), profile, forcing, kappa)?;
    let k4 = refined_rhs(grid, &advanced(y, dt, &k3), profile, forcing, kappa)?;
    let mut out = y.clone();
    out.t += dt;
    for (c, k) in [(dt / 6.0, &k1), (dt / 3.0, &k2), (dt / 3.0, &k3), (dt / 6.0, &k4)] {
        out.h.axpy(c, &k.0);
        out.u.axpy(c, &k.1);
    }
    if out.check_finite().is_err() {
        return Err(Error::BlowUp { t: out.t });
    }
    Ok(out)
}

/// Transport-speed limit `CFL · min(Δx/max|u̲+u-κ∂_xh/(1+h)|, Δx²/(2κ))`.
fn refined_dt(grid: &SpatialGrid, s: &StratifiedState, profile: &StratifiedProfile, kappa: f64, cfl: f64) -> f64 {
    let mut speed = 0.0_f64;
    for i in 0..profile.n_r() {
        let h = &s.h.levels[i];
        let dh = spectral::derivative_unchecked(grid, h, 1);
        for j in 0..h.len() {
            let v = profile.ubar()[i] + s.u.levels[i][j] - kappa * dh[j] / (1.0 + h[j]);
            speed = speed.max(v.abs());
        }
    }
    let dx = grid.dx();
    let mut limit = if speed > 0.0 { dx / speed } else { f64::INFINITY };
    if kappa > 0.0 {
        limit = limit.min(dx * dx / (2.0 * kappa));
    }
    cfl * limit
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedRun {
    pub profile: StratifiedProfile,
    pub kappa: f64,
    pub samples: Vec<StratifiedState>,
    pub status: RunStatus,
    pub steps: usize,
}

pub fn solve_refined(
    grid: &SpatialGrid,
    initial: &StratifiedState,
    profile: &StratifiedProfile,
    forcing: &Forcing,
    kappa: f64,
    t_end: f64,
    cfg: &StratifiedConfig,
) -> Result<RefinedRun> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidParameter(format!("kappa must lie in [0, 1], got {kappa}")));
    }
    let (start, end) = (forcing.times[0], *forcing.times.last().unwrap());
    if initial.t < start || t_end > end + 1e-12 * end.abs().max(1.0) {
        return Err(Error::OutsideHorizon { t: t_end, start, end });
    }
    refined_rhs(grid, initial, profile, forcing, kappa)?;
    let times = sample_times(initial.t, t_end, cfg.sample_interval)?;
    let mut run = RefinedRun {
        profile: profile.clone(),
        kappa,
        samples: vec![initial.clone()],
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
            |s| refined_dt(grid, s, profile, kappa, cfg.cfl),
            |s, dt| refined_step(grid, s, profile, forcing, kappa, dt),
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
        run.samples.push(state.clone());
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub t: f64,
    /// `‖r_rem(t,·,r_i)‖_{H^s_x}` per level.
    pub per_level: Vec<f64>,
    /// `‖r_rem(t)‖_{L^∞_r H^s_x}`.
    pub residual_hs: f64,
    /// `‖ρ̲‖_∞ ‖1/ρ̲‖_∞ ‖(h_ref - h_app)(t)‖_{L¹_r H^{s+1}_x}`.
    pub bound: f64,
    /// `residual_hs / bound`, 0 when both vanish.
    pub ratio: f64,
    /// `max|r_sub - r_closed| / max|r_closed|` between the two evaluation
    /// paths (absolute when `r_closed` vanishes).
    pub path_gap: f64,
}

/// Remainder `r_rem = (1/ρ̲)M[ρ̲]∂_x(h_app - h_ref)` along a refined run,
/// computed by substituting into the stratified system and in closed form.
pub fn consistency_residual(
    grid: &SpatialGrid,
    run: &RefinedRun,
    reference: &ReferenceRun,
    forcing: &Forcing,
    s: SobolevIndex,
) -> Result<Vec<ResidualSample>> {
    let profile = &run.profile;
    let levels = profile.levels();
    let norm = profile.rho_sup() * profile.inv_rho_sup();
    let s1 = SobolevIndex::new(s.value() + 1.0)?;
    let mut out = Vec::with_capacity(run.samples.len());
    for state in &run.samples {
        let h_ref = reference.h_at(state.t)?;
        // substitution: forced tendency minus the true tendency
        let (_, forced_u) = refined_rhs(grid, state, profile, forcing, run.kappa)?;
        let true_u = stratified::rhs(grid, state, profile, run.kappa)?.u;
        let r_sub = forced_u.sub(&true_u);
        let gap = state.h.sub(&h_ref);
        let mut r_closed = pressure_gradient(grid, profile, &gap)?;
        for l in r_closed.levels.iter_mut() {
            *l = project(grid, l.clone());
        }
        let scale = r_closed.max_abs();
        let diff = r_sub.sub(&r_closed).max_abs();
        let path_gap = if scale > 0.0 { diff / scale } else { diff };
        let per_level: Vec<f64> = r_closed
            .levels
            .iter()
            .map(|l| spectral::sobolev_norm(grid, l, s))
            .collect::<Result<_>>()?;
        let residual_hs = per_level.iter().copied().fold(0.0, f64::max);
        let bound = norm * spectral::mixed_norm(grid, levels, &gap, s1, LevelReduction::Integral)?;
        let ratio = if residual_hs == 0.0 {
            0.0
        } else if bound == 0.0 {
            f64::INFINITY
        } else {
            residual_hs / bound
        };
        out.push(ResidualSample {
            t: state.t,
            per_level,
            residual_hs,
            bound,
            ratio,
            path_gap,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilayer::{BilayerParams, BilayerState};
    use crate::grid::LevelGrid;
    use crate::stratified::{embed_bilayer, smooth_pycnocline, PycnoclineShape, PycnoclineSpec};

    fn setup() -> (SpatialGrid, BilayerParams, LevelGrid, BilayerState) {
        let g = SpatialGrid::periodic(32).unwrap();
        let p = BilayerParams::normalised(0.5, 0.5, 0.05, 0.1).unwrap();
        let levels = LevelGrid::clustered(6, 6, -0.5, 2.0).unwrap();
        let xs = g.points();
        let s = BilayerState::new(
            0.0,
            Field1D::from_fn(&xs, |x| 0.02 * x.sin()),
            Field1D::from_fn(&xs, |x| -0.01 * x.sin()),
            Field1D::from_fn(&xs, |x| 0.01 * x.cos()),
            Field1D::zeros(32),
        )
        .unwrap();
        (g, p, levels, s)
    }

    #[test]
    fn hermite_is_exact_for_cubics() {
        let y = |t: f64| Field2D {
            levels: vec![Field1D(vec![t * t * t - 2.0 * t, 1.0 + t * t])],
        };
        let d = |t: f64| Field2D {
            levels: vec![Field1D(vec![3.0 * t * t - 2.0, 2.0 * t])],
        };
        let v = hermite(0.5, 1.5, 0.8, &y(0.5), &y(1.5), &d(0.5), &d(1.5));
        let e = y(0.8);
        for j in 0..2 {
            assert!((v.levels[0][j] - e.levels[0][j]).abs() < 1e-14);
        }
    }

    #[test]
    fn forcing_outside_horizon_is_rejected() {
        let f = Forcing::zero(8, 2, 0.0, 1.0);
        assert!(matches!(f.at(1.5), Err(Error::OutsideHorizon { .. })));
        assert!(f.at(0.3).is_ok());
    }

    #[test]
    fn zero_reference_gives_zero_forcing() {
        let (g, p, levels, _) = setup();
        let (prof, rest) = embed_bilayer(&BilayerState::rest(32), &p, &levels).unwrap();
        let reference = ReferenceRun::integrate(&g, &rest, prof.clone(), p.kappa, 0.1, 0.01).unwrap();
        let f = build_forcing(&g, &reference, &prof).unwrap();
        assert!(f.values.iter().all(|v| v.max_abs() == 0.0));
    }

    #[test]
    fn identity_crossing_gives_reference_pressure() {
        let (g, p, levels, s) = setup();
        let (prof, st) = embed_bilayer(&s, &p, &levels).unwrap();
        let reference = ReferenceRun::integrate(&g, &st, prof.clone(), p.kappa, 0.05, 0.01).unwrap();
        let f = build_forcing(&g, &reference, &prof).unwrap();
        let k = stratified::rhs(&g, &reference.snapshots[2], &prof, p.kappa).unwrap();
        let (_, forced) = refined_rhs(&g, &reference.snapshots[2], &prof, &f, p.kappa).unwrap();
        assert!(forced.sub(&k.u).max_abs() < 1e-13);
    }

    #[test]
    fn pure_diffusion_decays_single_mode() {
        let g = SpatialGrid::periodic(32).unwrap();
        let levels = LevelGrid::uniform(3).unwrap();
        let prof = StratifiedProfile::uniform(levels, 1.0).unwrap();
        let kappa = 0.2;
        let amp = 1e-3;
        let xs = g.points();
        let mut st = StratifiedState::rest(32, 3);
        st.h.levels[1] = Field1D::from_fn(&xs, |x| amp * (2.0 * x).sin());
        let forcing = Forcing::zero(32, 3, 0.0, 0.5);
        let cfg = StratifiedConfig {
            sample_interval: 0.5,
            ..StratifiedConfig::default()
        };
        let run = solve_refined(&g, &st, &prof, &forcing, kappa, 0.5, &cfg).unwrap();
        let last = run.samples.last().unwrap();
        let decay = (-kappa * 4.0 * 0.5_f64).exp();
        for (j, &x) in xs.iter().enumerate() {
            // the u equation is pure transport of u = 0
            assert!((last.h.levels[1][j] - amp * decay * (2.0 * x).sin()).abs() < 1e-9);
        }
        assert_eq!(last.u.max_abs(), 0.0);
        assert_eq!(last.h.levels[0].max_abs(), 0.0);
    }

    #[test]
    fn smoothed_target_residual_paths_agree_and_bound_holds() {
        let (g, p, levels, s) = setup();
        let (prof, st) = embed_bilayer(&s, &p, &levels).unwrap();
        let reference = ReferenceRun::integrate(&g, &st, prof, p.kappa, 0.1, 0.005).unwrap();
        let target = smooth_pycnocline(&PycnoclineSpec {
            params: p,
            levels: levels.clone(),
            epsilon: 0.05,
            shape: PycnoclineShape::Tanh,
        })
        .unwrap()
        .profile;
        let forcing = build_forcing(&g, &reference, &target).unwrap();
        let cfg = StratifiedConfig {
            dt: Some(0.005),
            sample_interval: 0.025,
            ..StratifiedConfig::default()
        };
        let run = solve_refined(&g, &st, &target, &forcing, p.kappa, 0.1, &cfg).unwrap();
        let res = consistency_residual(&g, &run, &reference, &forcing, SobolevIndex::new(2.0).unwrap()).unwrap();
        assert_eq!(res[0].residual_hs, 0.0);
        for r in &res[1..] {
            assert!(r.residual_hs > 0.0);
            assert!(r.path_gap < 1e-10, "{}", r.path_gap);
            assert!(r.ratio <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn zeroing_one_level_leaves_others_bitwise_unchanged() {
        let (g, p, levels, s) = setup();
        let (prof, st) = embed_bilayer(&s, &p, &levels).unwrap();
        let reference = ReferenceRun::integrate(&g, &st, prof.clone(), p.kappa, 0.05, 0.01).unwrap();
        let forcing = build_forcing(&g, &reference, &prof).unwrap();
        let cfg = StratifiedConfig {
            dt: Some(0.01),
            sample_interval: 0.05,
            ..StratifiedConfig::default()
        };
        let a = solve_refined(&g, &st, &prof, &forcing, p.kappa, 0.05, &cfg).unwrap();
        let b = solve_refined(&g, &st, &prof, &forcing.without_level(3), p.kappa, 0.05, &cfg).unwrap();
        let (la, lb) = (a.samples.last().unwrap(), b.samples.last().unwrap());
        for i in (0..levels.n_r()).filter(|&i| i != 3) {
            assert_eq!(la.h.levels[i], lb.h.levels[i]);
            assert_eq!(la.u.levels[i], lb.u.levels[i]);
        }
        assert_ne!(la.u.levels[3], lb.u.levels[3]);
    }
}
