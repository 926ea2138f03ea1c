//! Experiments: convergence sweeps in `κ` and in the pycnocline width, rate
//! fitting, and the invariant suites behind `check-all`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bilayer::{self, BilayerParams, BilayerState, BilayerTendency, IntegrateConfig, StepOptions};
use crate::error::{Error, Result};
use crate::field::{Field1D, Field2D};
use crate::grid::{LevelGrid, SpatialGrid};
use crate::hyperbolicity::{self, Regime, StatePoint};
use crate::refined::{self, ReferenceRun};
use crate::spectral::{self, SobolevIndex};
use crate::stratified::{self, MontgomeryOp, PycnoclineShape, PycnoclineSpec, StratifiedConfig, StratifiedProfile};

/// Schema version of every JSON configuration.
pub const CONFIG_VERSION: u32 = 1;

/// Smallest accepted span of sweep abscissae, in decades. The slack absorbs
/// the truncation of smoothed profiles at the column ends.
const MIN_DECADES: f64 = 2.0 - 1e-3;

/// Closed-form initial profile in `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Zero,
    /// `amplitude · sin(2π k x / L + phase)`
    Sine { amplitude: f64, wavenumber: u32, phase: f64 },
    /// `amplitude · exp(-d²/width²)` with `d` the periodic distance to `center`.
    Gaussian { amplitude: f64, center: f64, width: f64 },
}

impl Shape {
    pub fn sample(&self, grid: &SpatialGrid) -> Field1D {
        let l = grid.length();
        Field1D::from_fn(&grid.points(), |x| match *self {
            Shape::Zero => 0.0,
            Shape::Sine {
                amplitude,
                wavenumber,
                phase,
            } => amplitude * (2.0 * std::f64::consts::PI * wavenumber as f64 * x / l + phase).sin(),
            Shape::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let d = (x - center + 0.5 * l).rem_euclid(l) - 0.5 * l;
                amplitude * (-(d * d) / (width * width)).exp()
            }
        })
    }

    /// Copy with the amplitude multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Shape {
        match *self {
            Shape::Zero => Shape::Zero,
            Shape::Sine {
                amplitude,
                wavenumber,
                phase,
            } => Shape::Sine {
                amplitude: a * amplitude,
                wavenumber,
                phase,
            },
            Shape::Gaussian {
                amplitude,
                center,
                width,
            } => Shape::Gaussian {
                amplitude: a * amplitude,
                center,
                width,
            },
        }
    }
}

/// Initial deviations of the four bilayer fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilayerInitial {
    pub h_s: Shape,
    pub h_b: Shape,
    pub u_s: Shape,
    pub u_b: Shape,
}

impl Default for BilayerInitial {
    /// Single-mode data.
    fn default() -> Self {
        let half_pi = std::f64::consts::FRAC_PI_2;
        BilayerInitial {
            h_s: Shape::Sine {
                amplitude: 0.02,
                wavenumber: 1,
                phase: 0.0,
            },
            h_b: Shape::Sine {
                amplitude: -0.01,
                wavenumber: 1,
                phase: 0.0,
            },
            u_s: Shape::Sine {
                amplitude: 0.01,
                wavenumber: 1,
                phase: half_pi,
            },
            u_b: Shape::Zero,
        }
    }
}

impl BilayerInitial {
    pub fn zero() -> Self {
        BilayerInitial {
            h_s: Shape::Zero,
            h_b: Shape::Zero,
            u_s: Shape::Zero,
            u_b: Shape::Zero,
        }
    }

    pub fn build(&self, grid: &SpatialGrid) -> Result<BilayerState> {
        BilayerState::new(
            0.0,
            self.h_s.sample(grid),
            self.h_b.sample(grid),
            self.u_s.sample(grid),
            self.u_b.sample(grid),
        )
    }

    pub fn scaled(&self, a: f64) -> Self {
        BilayerInitial {
            h_s: self.h_s.scaled(a),
            h_b: self.h_b.scaled(a),
            u_s: self.u_s.scaled(a),
            u_b: self.u_b.scaled(a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub std_error: f64,
    /// 95% confidence interval of the slope.
    pub interval: (f64, f64),
}

/// Least squares on `(ln x, ln y)`; the interval uses the Student t
/// quantile with `n - 2` degrees of freedom.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 4 {
        return Err(Error::InvalidParameter("need at least four points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive finite data".into()));
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("abscissae must not all coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let std_error = (sse / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(SlopeFit {
        slope,
        intercept,
        std_error,
        interval: (slope - t * std_error, slope + t * std_error),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SweepOutcome {
    Pass,
    Fail,
    /// Every error vanished; no slope is defined.
    Exact,
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub id: String,
    pub abscissa: String,
    pub abscissae: Vec<f64>,
    pub errors: Vec<f64>,
    /// Extra named columns of the raw table (same length as `abscissae`).
    pub columns: Vec<(String, Vec<f64>)>,
    pub fit: Option<SlopeFit>,
    pub expected_slope: f64,
    pub tolerance: f64,
    pub outcome: SweepOutcome,
}

impl SweepResult {
    pub fn pass(&self) -> bool {
        matches!(self.outcome, SweepOutcome::Pass | SweepOutcome::Exact)
    }

    fn judge(
        id: &str,
        abscissa: &str,
        abscissae: Vec<f64>,
        errors: Vec<f64>,
        columns: Vec<(String, Vec<f64>)>,
        expected_slope: f64,
        tolerance: f64,
    ) -> Result<Self> {
        let lo = abscissae.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = abscissae.iter().copied().fold(0.0, f64::max);
        if abscissae.len() < 4 || !((hi / lo).log10() >= MIN_DECADES) {
            return Err(Error::InvalidParameter(format!(
                "sweeps need at least four points spanning two decades, got {abscissa} in [{lo}, {hi}]"
            )));
        }
        let (fit, outcome) = if errors.iter().all(|&e| e == 0.0) {
            (None, SweepOutcome::Exact)
        } else {
            let fit = fit_slope(&abscissae, &errors)?;
            let ok = (fit.slope - expected_slope).abs() <= tolerance;
            (Some(fit), if ok { SweepOutcome::Pass } else { SweepOutcome::Fail })
        };
        Ok(SweepResult {
            id: id.into(),
            abscissa: abscissa.into(),
            abscissae,
            errors,
            columns,
            fit,
            expected_slope,
            tolerance,
            outcome,
        })
    }

    fn inconclusive(id: &str, abscissa: &str, expected_slope: f64, tolerance: f64, reason: String) -> Self {
        SweepResult {
            id: id.into(),
            abscissa: abscissa.into(),
            abscissae: Vec::new(),
            errors: Vec::new(),
            columns: Vec::new(),
            fit: None,
            expected_slope,
            tolerance,
            outcome: SweepOutcome::Inconclusive { reason },
        }
    }
}

fn check_sweep_list(values: &[f64], name: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} list is empty")));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(format!("{name} list must be strictly increasing")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaSweepConfig {
    pub n_x: usize,
    pub length: f64,
    /// Reference state; its `kappa` is ignored.
    pub params: BilayerParams,
    pub initial: BilayerInitial,
    pub kappas: Vec<f64>,
    pub t_end: f64,
    /// Sobolev index of the comparison norm.
    pub s: f64,
    pub cfl: f64,
    /// Required hyperbolicity margin of the initial data.
    pub sigma: f64,
    pub expected_slope: f64,
    pub tolerance: f64,
}

impl Default for KappaSweepConfig {
    fn default() -> Self {
        KappaSweepConfig {
            n_x: 256,
            length: 2.0 * std::f64::consts::PI,
            params: BilayerParams::normalised(0.5, 0.4, 0.05, 0.0).expect("valid defaults"),
            initial: BilayerInitial::default(),
            kappas: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
            t_end: 0.5,
            s: 2.0,
            cfl: bilayer::DEFAULT_CFL,
            sigma: 0.05,
            expected_slope: 1.0,
            tolerance: 0.1,
        }
    }
}

/// Step size shared by a family of runs: half the stability limit of the
/// stiffest member at `t = 0`, adjusted to divide `t_end`.
fn common_dt(limit: f64, t_end: f64) -> f64 {
    let n = (t_end / (0.5 * limit)).ceil().max(1.0);
    t_end / n
}

fn run_bilayer(
    grid: &SpatialGrid,
    initial: &BilayerState,
    params: &BilayerParams,
    t_end: f64,
    dt: f64,
) -> std::result::Result<BilayerState, String> {
    let cfg = IntegrateConfig {
        dt: Some(dt),
        sample_interval: t_end,
        monitor_margin: false,
        ..IntegrateConfig::default()
    };
    match bilayer::integrate(grid, initial, params, t_end, &cfg) {
        Ok(run) if run.status.is_completed() => Ok(run.last().clone()),
        Ok(run) => Err(format!("kappa = {}: {:?}", params.kappa, run.status)),
        Err(e) => Err(format!("kappa = {}: {e}", params.kappa)),
    }
}

/// Terminal `H^s` distance between runs at each `κ` and the `κ = 0` run.
pub fn sweep_kappa(cfg: &KappaSweepConfig) -> Result<SweepResult> {
    check_sweep_list(&cfg.kappas, "kappa")?;
    if cfg.kappas[0] <= 0.0 || *cfg.kappas.last().unwrap() > 1.0 {
        return Err(Error::InvalidParameter("kappa values must lie in (0, 1]".into()));
    }
    let id = "sweep-kappa";
    let grid = SpatialGrid::new(cfg.length, cfg.n_x)?;
    let base = cfg.params.with_kappa(0.0)?;
    let initial = cfg.initial.build(&grid)?;
    if !bilayer::state_in_hyperbolic_set(&initial, &base, cfg.sigma) {
        return Err(Error::NotHyperbolic {
            regime: format!("initial data outside the hyperbolic set with margin {}", cfg.sigma),
            margin: bilayer::min_margin(&initial, &base),
        });
    }
    let stiffest = base.with_kappa(*cfg.kappas.last().unwrap())?;
    let opts = StepOptions {
        cfl: cfg.cfl,
        ..StepOptions::default()
    };
    let dt = common_dt(bilayer::stable_dt(&grid, &initial, &stiffest, &opts), cfg.t_end);
    let s = SobolevIndex::new(cfg.s)?;

    let mut all = vec![0.0];
    all.extend(&cfg.kappas);
    let runs: Vec<_> = all
        .par_iter()
        .map(|&k| {
            let p = base.with_kappa(k).map_err(|e| e.to_string())?;
            run_bilayer(&grid, &initial, &p, cfg.t_end, dt)
        })
        .collect();
    let mut states = Vec::with_capacity(runs.len());
    for r in runs {
        match r {
            Ok(s) => states.push(s),
            Err(reason) => {
                return Ok(SweepResult::inconclusive(id, "kappa", cfg.expected_slope, cfg.tolerance, reason))
            }
        }
    }
    let reference = &states[0];
    let errors = states[1..]
        .iter()
        .map(|st| {
            let d: Vec<Field1D> = st
                .fields()
                .iter()
                .zip(reference.fields())
                .map(|(a, b)| a.sub(b))
                .collect();
            spectral::sobolev_norm_of(&grid, &d.iter().collect::<Vec<_>>(), s)
        })
        .collect::<Result<Vec<_>>>()?;
    SweepResult::judge(
        id,
        "kappa",
        cfg.kappas.clone(),
        errors,
        vec![("dt".into(), vec![dt; cfg.kappas.len()])],
        cfg.expected_slope,
        cfg.tolerance,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSweepConfig {
    pub n_x: usize,
    pub length: f64,
    pub params: BilayerParams,
    pub initial: BilayerInitial,
    /// Levels below and above the interface, clustered towards it.
    pub n_below: usize,
    pub n_above: usize,
    pub stretch: f64,
    pub epsilons: Vec<f64>,
    pub shape: PycnoclineShape,
    pub t_end: f64,
    pub s: f64,
    pub cfl: f64,
    /// Half-width of the excluded band, in units of `ε`.
    pub band: f64,
    pub expected_slope: f64,
    pub tolerance: f64,
}

impl Default for EpsilonSweepConfig {
    fn default() -> Self {
        EpsilonSweepConfig {
            n_x: 256,
            length: 2.0 * std::f64::consts::PI,
            params: BilayerParams::normalised(0.5, 0.5, 0.05, 0.1).expect("valid defaults"),
            initial: BilayerInitial::default(),
            n_below: 32,
            n_above: 32,
            stretch: 4.0,
            epsilons: vec![1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1],
            shape: PycnoclineShape::Tanh,
            t_end: 0.5,
            s: 2.0,
            cfl: bilayer::DEFAULT_CFL,
            band: 3.0,
            expected_slope: 1.0,
            tolerance: 0.2,
        }
    }
}

/// Per-level `H^s` distance `(‖Δh‖² + ‖Δu‖²)^{1/2}`.
fn level_distances(grid: &SpatialGrid, a: &stratified::StratifiedState, b: &Field2D, bu: &Field2D, s: SobolevIndex) -> Result<Vec<f64>> {
    (0..a.h.n_r())
        .map(|i| {
            let dh = a.h.levels[i].sub(&b.levels[i]);
            let du = a.u.levels[i].sub(&bu.levels[i]);
            spectral::sobolev_norm_of(grid, &[&dh, &du], s)
        })
        .collect()
}

/// Terminal distance between stratified runs on smoothed pycnoclines and the
/// embedded bilayer run, against `δ₀ = ‖ρ̲_bl - ρ̲_ε‖_{L¹_r}`.
///
/// The fitted distance is the largest per-level distance over the levels
/// with `|r + H̲_s| > band · ε_max`; this level set lies outside the band of
/// every `ε` in the sweep, so all points measure the same levels.
pub fn sweep_epsilon(cfg: &EpsilonSweepConfig) -> Result<SweepResult> {
    check_sweep_list(&cfg.epsilons, "epsilon")?;
    let id = "sweep-epsilon";
    let p = cfg.params;
    p.validate()?;
    let grid = SpatialGrid::new(cfg.length, cfg.n_x)?;
    let levels = LevelGrid::clustered(cfg.n_below, cfg.n_above, -p.hbar_s, cfg.stretch)?;
    let initial = cfg.initial.build(&grid)?;
    let (bl_profile, embedded) = stratified::embed_bilayer(&initial, &p, &levels)?;
    let s = SobolevIndex::new(cfg.s)?;
    let smoothed = cfg
        .epsilons
        .iter()
        .map(|&eps| {
            stratified::smooth_pycnocline(&PycnoclineSpec {
                params: p,
                levels: levels.clone(),
                epsilon: eps,
                shape: cfg.shape,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let limit = smoothed
        .iter()
        .map(|sp| stratified::stable_dt(&grid, &embedded, &sp.profile, p.kappa, cfg.cfl))
        .fold(stratified::stable_dt(&grid, &embedded, &bl_profile, p.kappa, cfg.cfl), f64::min);
    let dt = common_dt(limit, cfg.t_end);

    let bl_final = match run_bilayer(&grid, &initial, &p, cfg.t_end, dt) {
        Ok(s) => s,
        Err(reason) => {
            return Ok(SweepResult::inconclusive(id, "delta0", cfg.expected_slope, cfg.tolerance, reason))
        }
    };
    let (bl_h, bl_u) = stratified::embed_fields(&p, &levels, &bl_final.h_s, &bl_final.h_b, &bl_final.u_s, &bl_final.u_b)?;
    let scfg = StratifiedConfig {
        cfl: cfg.cfl,
        dt: Some(dt),
        sample_interval: cfg.t_end,
        ..StratifiedConfig::default()
    };
    let runs: Vec<std::result::Result<Vec<f64>, String>> = smoothed
        .par_iter()
        .map(|sp| {
            let run = stratified::integrate(&grid, &embedded, &sp.profile, p.kappa, cfg.t_end, &scfg)
                .map_err(|e| e.to_string())?;
            if !run.status.is_completed() {
                return Err(format!("{:?}", run.status));
            }
            level_distances(&grid, run.last(), &bl_h, &bl_u, s).map_err(|e| e.to_string())
        })
        .collect();
    let eps_max = *cfg.epsilons.last().unwrap();
    let interface = -p.hbar_s;
    let mids = levels.mids();
    let w = levels.weights();
    let mut exterior = Vec::new();
    let mut own_band = Vec::new();
    let mut all_levels = Vec::new();
    let mut integrated = Vec::new();
    for (k, r) in runs.into_iter().enumerate() {
        let d = match r {
            Ok(d) => d,
            Err(reason) => {
                let reason = format!("epsilon = {}: {reason}", cfg.epsilons[k]);
                return Ok(SweepResult::inconclusive(id, "delta0", cfg.expected_slope, cfg.tolerance, reason));
            }
        };
        let outside = |width: f64| {
            (0..d.len())
                .filter(|&i| (mids[i] - interface).abs() > width)
                .map(|i| d[i])
                .fold(0.0, f64::max)
        };
        exterior.push(outside(cfg.band * eps_max));
        own_band.push(outside(cfg.band * cfg.epsilons[k]));
        all_levels.push(d.iter().copied().fold(0.0, f64::max));
        integrated.push(d.iter().zip(w).map(|(a, b)| a * b).sum());
    }
    let delta0: Vec<f64> = smoothed.iter().map(|sp| sp.rho_l1).collect();
    let columns = vec![
        ("epsilon".into(), cfg.epsilons.clone()),
        ("delta0_discrete".into(), smoothed.iter().map(|sp| sp.rho_l1_discrete).collect()),
        ("ubar_l1".into(), smoothed.iter().map(|sp| sp.ubar_l1).collect()),
        ("outside_own_band".into(), own_band),
        ("all_levels".into(), all_levels),
        ("l1_levels".into(), integrated),
        ("dt".into(), vec![dt; delta0.len()]),
    ];
    SweepResult::judge(id, "delta0", delta0, exterior, columns, cfg.expected_slope, cfg.tolerance)
}

/// Draws a state point whose scaled shear lies in the interior of the
/// requested regime, at relative distance at least `gap` from `Fr_±`.
pub fn random_point<R: Rng>(rng: &mut R, regime: Regime, gap: f64) -> Result<StatePoint> {
    let h_ratio = 10f64.powf(rng.gen_range(-1.0..1.0));
    let rho_ratio = rng.gen_range(0.02..0.98);
    let (fm, fp) = hyperbolicity::critical_froude(h_ratio, rho_ratio)?;
    let (lo, hi) = match regime {
        Regime::Hyperbolic => (0.0, fm * (1.0 - gap)),
        Regime::Elliptic => (fm * (1.0 + gap), fp * (1.0 - gap)),
        Regime::FastHyperbolic => (fp * (1.0 + gap), 2.0 * fp),
    };
    let shear = rng.gen_range(lo..hi);
    let h_b = rng.gen_range(0.2..2.0);
    let rho_b = rng.gen_range(0.5..2.0);
    let u_s = rng.gen_range(-1.0..1.0);
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    StatePoint::new(rho_ratio * rho_b, rho_b, h_ratio * h_b, h_b, u_s, u_s + sign * shear * h_b.sqrt())
}

/// Draws a point of the hyperbolic set with margin `sigma`.
pub fn random_point_in_set<R: Rng>(rng: &mut R, sigma: f64) -> Result<StatePoint> {
    loop {
        let rho_ratio = rng.gen_range(sigma / 2.0..1.0 - sigma / 2.0);
        let h_ratio = sigma.powf(rng.gen_range(-1.0..1.0));
        let h_b = rng.gen_range(0.2..2.0);
        let (fm, _) = hyperbolicity::critical_froude(h_ratio, rho_ratio)?;
        if fm - sigma <= 0.0 || h_b * (1.0 + h_ratio) < sigma {
            continue;
        }
        let shear = rng.gen_range(0.0..fm - sigma);
        let u_s = rng.gen_range(-1.0..1.0);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let p = StatePoint::with_ratio(rho_ratio, h_ratio * h_b, h_b, u_s, u_s + sign * shear * h_b.sqrt())?;
        if hyperbolicity::in_hyperbolic_set(&p, sigma) {
            return Ok(p);
        }
    }
}

/// Real eigenvalues of `A(U)` counted directly from a real Schur form of the
/// 4×4 matrix, with tolerance `1e-9 · max|λ|`.
pub fn matrix_real_root_count(p: &StatePoint) -> Option<usize> {
    let schur = nalgebra::Schur::try_new(p.matrix(), f64::EPSILON, 10_000)?;
    let eig = schur.complex_eigenvalues();
    let scale = eig.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    Some(eig.iter().filter(|z| z.im.abs() <= 1e-9 * scale.max(1.0)).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub status: SuiteStatus,
    pub seed: u64,
    pub tolerance: f64,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub detail: String,
}

impl SuiteReport {
    fn judged(name: &str, seed: u64, tolerance: f64, value: f64, ok: bool, detail: String) -> Self {
        SuiteReport {
            name: name.into(),
            status: if ok { SuiteStatus::Pass } else { SuiteStatus::Fail },
            seed,
            tolerance,
            value,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.suites.iter().all(|s| s.status != SuiteStatus::Fail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub seed: u64,
    /// Random samples per randomized suite.
    pub points: usize,
    /// Diffusivity of the dynamic suites; 0 skips the total-velocity suite.
    pub kappa: f64,
    pub sigma: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            seed: 20240521,
            points: 1000,
            kappa: 0.05,
            sigma: 0.1,
        }
    }
}

pub fn check_all(cfg: &CheckConfig) -> Result<CheckReport> {
    check_all_with(cfg, stratified::montgomery)
}

/// As [`check_all`] with a substitute pressure operator in the embedding
/// suite.
pub fn check_all_with(cfg: &CheckConfig, op: MontgomeryOp) -> Result<CheckReport> {
    let seed = cfg.seed;
    let suites = vec![
        suite_classification(seed, cfg.points)?,
        suite_symmetrizer(seed.wrapping_add(1), cfg.points, cfg.sigma)?,
        suite_conservation(seed)?,
        suite_total_velocity(seed, cfg.kappa)?,
        suite_embedding(seed, op)?,
        suite_lipschitz(seed.wrapping_add(2), cfg.points)?,
        suite_refined(seed)?,
        suite_richardson(seed)?,
    ];
    Ok(CheckReport { seed, suites })
}

fn suite_classification(seed: u64, points: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    let mut first = String::new();
    for regime in [Regime::Hyperbolic, Regime::Elliptic, Regime::FastHyperbolic] {
        for _ in 0..points {
            let p = random_point(&mut rng, regime, 1e-6)?;
            let report = hyperbolicity::classify(&p)?;
            let brute = matrix_real_root_count(&p);
            let expected = if regime == Regime::Elliptic { 2 } else { 4 };
            if report.regime != regime || brute != Some(expected) || report.real_roots != expected {
                mismatches += 1;
                if first.is_empty() {
                    first = format!("{p:?}: classify {} / brute force {brute:?}", report.regime);
                }
            }
        }
    }
    Ok(SuiteReport::judged(
        "classification",
        seed,
        0.0,
        mismatches as f64,
        mismatches == 0,
        format!("{} points, {mismatches} mismatches {first}", 3 * points),
    ))
}

fn suite_symmetrizer(seed: u64, points: usize, sigma: f64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_asym = 0.0_f64;
    let mut worst_minor = 0.0_f64;
    let mut failures = 0usize;
    for _ in 0..points {
        let p = random_point_in_set(&mut rng, sigma)?;
        let sym = hyperbolicity::symmetrizer(&p)?;
        let min_eig = sym.s.symmetric_eigenvalues().min();
        let r = p.rho_ratio();
        let pl = hyperbolicity::characteristic_polynomial(&p)?.eval(sym.lambda);
        let minor = (sym.minors[3] / (r * r) - pl).abs() / pl.abs().max(f64::MIN_POSITIVE);
        worst_asym = worst_asym.max(sym.asymmetry());
        worst_minor = worst_minor.max(minor);
        if !sym.certified || !(min_eig > 0.0) || sym.asymmetry() > 1e-12 || minor > 1e-9 {
            failures += 1;
        }
    }
    Ok(SuiteReport::judged(
        "symmetrizer",
        seed,
        1e-12,
        worst_asym,
        failures == 0,
        format!("{points} points, {failures} failures, worst minor identity gap {worst_minor:e}"),
    ))
}

fn smooth_state(grid: &SpatialGrid, amp: f64) -> Result<BilayerState> {
    BilayerInitial::default().scaled(amp / 0.02).build(grid)
}

fn suite_conservation(seed: u64) -> Result<SuiteReport> {
    let grid = SpatialGrid::periodic(64)?;
    let initial = smooth_state(&grid, 0.05)?;
    let t_end = 0.5;
    let mut worst = 0.0_f64;
    for kappa in [0.0, 0.01, 0.1] {
        let p = BilayerParams::normalised(0.5, 0.4, 0.05, kappa)?;
        let cfg = IntegrateConfig {
            sample_interval: 0.1,
            monitor_margin: false,
            ..IntegrateConfig::default()
        };
        let run = bilayer::integrate(&grid, &initial, &p, t_end, &cfg)?;
        let d0 = &run.diagnostics[0];
        for d in &run.diagnostics {
            worst = worst.max((d.mass_s - d0.mass_s).abs() / t_end);
            worst = worst.max((d.mass_b - d0.mass_b).abs() / t_end);
            if kappa == 0.0 {
                worst = worst.max((d.momentum_s - d0.momentum_s).abs() / t_end);
                worst = worst.max((d.momentum_b - d0.momentum_b).abs() / t_end);
            }
        }
    }
    Ok(SuiteReport::judged(
        "conservation",
        seed,
        1e-12,
        worst,
        worst <= 1e-12,
        "largest drift per unit time of layer masses (all kappa) and velocity means (kappa = 0)".into(),
    ))
}

/// Outcome of the total-velocity residual study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualOrder {
    pub dts: Vec<f64>,
    /// L² norms of the residual fields at each `dt`.
    pub residuals: Vec<f64>,
    /// `‖R(dt) - R(dt/2)‖` for consecutive pairs.
    pub differences: Vec<f64>,
    pub order: f64,
}

/// Substitutes `(H, V)` from diffusive runs at `dt`, `dt/2`, `dt/4` into the
/// total-velocity system, with `∂_t` from a fourth-order central difference
/// over samples spaced `cadence`, and estimates the convergence order of the
/// residual from the three runs.
pub fn total_velocity_order(
    grid: &SpatialGrid,
    initial: &BilayerState,
    params: &BilayerParams,
    dt: f64,
    cadence: f64,
    t_mid: f64,
) -> Result<ResidualOrder> {
    let dts = vec![dt, dt / 2.0, dt / 4.0];
    let mut fields = Vec::new();
    for &h in &dts {
        let t_end = t_mid + 2.0 * cadence;
        let cfg = IntegrateConfig {
            dt: Some(h),
            sample_interval: cadence,
            monitor_margin: false,
            ..IntegrateConfig::default()
        };
        let run = bilayer::integrate(grid, initial, params, t_end, &cfg)?;
        if !run.status.is_completed() {
            return Err(Error::BlowUp { t: run.last().t });
        }
        let k = (t_mid / cadence).round() as usize;
        if k < 2 || (k as f64 * cadence - t_mid).abs() > 1e-12 {
            return Err(Error::InvalidParameter("t_mid must be a multiple of cadence, at least 2".into()));
        }
        let hv: Vec<BilayerState> = run.samples[k - 2..=k + 2]
            .iter()
            .map(|s| {
                let (vs, vb) = bilayer::total_velocity(grid, s, params)?;
                Ok(BilayerState { u_s: vs, u_b: vb, ..s.clone() })
            })
            .collect::<Result<_>>()?;
        let fd = |f: &dyn Fn(&BilayerState) -> &Field1D| -> Field1D {
            let c = [1.0, -8.0, 0.0, 8.0, -1.0];
            let mut out = Field1D::zeros(grid.len());
            for (w, s) in c.iter().zip(&hv) {
                out.axpy(w / (12.0 * cadence), f(s));
            }
            out
        };
        let d_dt = BilayerTendency {
            h_s: fd(&|s| &s.h_s),
            h_b: fd(&|s| &s.h_b),
            u_s: fd(&|s| &s.u_s),
            u_b: fd(&|s| &s.u_b),
        };
        fields.push(bilayer::bd_residual(grid, &hv[2], &d_dt, params)?);
    }
    let l2 = |fs: [&Field1D; 4]| spectral::sobolev_norm_of(grid, &fs, SobolevIndex::L2);
    let diff = |a: &BilayerTendency, b: &BilayerTendency| {
        let d: Vec<Field1D> = a.fields().iter().zip(b.fields()).map(|(x, y)| x.sub(y)).collect();
        l2([&d[0], &d[1], &d[2], &d[3]])
    };
    let residuals = fields.iter().map(|f| l2(f.fields())).collect::<Result<Vec<_>>>()?;
    let differences = vec![diff(&fields[0], &fields[1])?, diff(&fields[1], &fields[2])?];
    let order = (differences[0] / differences[1]).log2();
    Ok(ResidualOrder {
        dts,
        residuals,
        differences,
        order,
    })
}

fn suite_total_velocity(seed: u64, kappa: f64) -> Result<SuiteReport> {
    if kappa == 0.0 {
        return Ok(SuiteReport {
            name: "total-velocity".into(),
            status: SuiteStatus::Skipped,
            seed,
            tolerance: 0.3,
            value: f64::NAN,
            detail: "kappa = 0: total and layer velocities coincide".into(),
        });
    }
    let grid = SpatialGrid::periodic(64)?;
    let p = BilayerParams::normalised(0.5, 0.4, 0.05, kappa)?;
    let initial = smooth_state(&grid, 0.05)?;
    let res = total_velocity_order(&grid, &initial, &p, 0.016, 0.032, 0.128)?;
    let ok = (res.order - 4.0).abs() <= 0.3 && res.residuals[2] <= 1e-6;
    Ok(SuiteReport::judged(
        "total-velocity",
        seed,
        0.3,
        res.order,
        ok,
        format!("order {:.3}, residuals {:?}", res.order, res.residuals),
    ))
}

/// Largest gap between the stratified tendency of an embedded bilayer state
/// and the embedded bilayer tendency.
pub fn embedding_gap(
    grid: &SpatialGrid,
    bistate: &BilayerState,
    params: &BilayerParams,
    levels: &LevelGrid,
    op: MontgomeryOp,
) -> Result<f64> {
    let (profile, st) = stratified::embed_bilayer(bistate, params, levels)?;
    let strat = stratified::rhs_with(grid, &st, &profile, params.kappa, op)?;
    let bi = bilayer::rhs(grid, bistate, params)?;
    let (h, u) = stratified::embed_fields(params, levels, &bi.h_s, &bi.h_b, &bi.u_s, &bi.u_b)?;
    Ok(strat.h.sub(&h).max_abs().max(strat.u.sub(&u).max_abs()))
}

fn suite_embedding(seed: u64, op: MontgomeryOp) -> Result<SuiteReport> {
    let grid = SpatialGrid::periodic(64)?;
    let p = BilayerParams::normalised(0.5, 0.4, 0.05, 0.05)?;
    let levels = LevelGrid::clustered(12, 8, -p.hbar_s, 2.0)?;
    let gap = embedding_gap(&grid, &smooth_state(&grid, 0.05)?, &p, &levels, op)?;
    Ok(SuiteReport::judged(
        "embedding",
        seed,
        1e-12,
        gap,
        gap <= 1e-12,
        "stratified tendency of an embedded state vs embedded bilayer tendency".into(),
    ))
}

/// Random positive profile on `levels` with values in `[lo, hi]`.
pub fn random_profile<R: Rng>(rng: &mut R, levels: &LevelGrid, lo: f64, hi: f64) -> Result<StratifiedProfile> {
    let n = levels.n_r();
    let rho = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    StratifiedProfile::new(levels.clone(), rho, vec![0.0; n])
}

pub fn random_field2d<R: Rng>(rng: &mut R, n_x: usize, n_r: usize, amp: f64) -> Field2D {
    Field2D {
        levels: (0..n_r)
            .map(|_| Field1D((0..n_x).map(|_| rng.gen_range(-amp..amp)).collect()))
            .collect(),
    }
}

fn suite_lipschitz(seed: u64, points: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..points {
        let n_r = rng.gen_range(2..24);
        let levels = LevelGrid::clustered(n_r / 2 + 1, n_r - n_r / 2, -rng.gen_range(0.1..0.9), rng.gen_range(0.0..3.0))?;
        let a = random_profile(&mut rng, &levels, 0.1, 5.0)?;
        let b = random_profile(&mut rng, &levels, 0.1, 5.0)?;
        let h = random_field2d(&mut rng, 8, levels.n_r(), 1.0);
        worst = worst.max(stratified::montgomery_lipschitz_check(&a, &b, &h)?.max_ratio);
    }
    Ok(SuiteReport::judged(
        "montgomery-lipschitz",
        seed,
        1.0 + 1e-9,
        worst,
        worst <= 1.0 + 1e-9,
        format!("{points} random profile pairs"),
    ))
}

fn suite_refined(seed: u64) -> Result<SuiteReport> {
    let grid = SpatialGrid::periodic(32)?;
    let p = BilayerParams::normalised(0.5, 0.5, 0.05, 0.1)?;
    let levels = LevelGrid::clustered(8, 8, -p.hbar_s, 2.0)?;
    let initial = smooth_state(&grid, 0.05)?;
    let (profile, st) = stratified::embed_bilayer(&initial, &p, &levels)?;
    let dt = 0.005;
    let t_end = 0.2;
    let reference = ReferenceRun::integrate(&grid, &st, profile, p.kappa, t_end, dt)?;
    let target = stratified::smooth_pycnocline(&PycnoclineSpec {
        params: p,
        levels,
        epsilon: 0.05,
        shape: PycnoclineShape::Tanh,
    })?
    .profile;
    let forcing = refined::build_forcing(&grid, &reference, &target)?;
    let cfg = StratifiedConfig {
        dt: Some(dt),
        sample_interval: 0.02,
        ..StratifiedConfig::default()
    };
    let run = refined::solve_refined(&grid, &st, &target, &forcing, p.kappa, t_end, &cfg)?;
    let res = refined::consistency_residual(&grid, &run, &reference, &forcing, SobolevIndex::new(2.0)?)?;
    let gap = res.iter().map(|r| r.path_gap).fold(0.0, f64::max);
    let ratio = res.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(SuiteReport::judged(
        "refined-consistency",
        seed,
        1.0 + 1e-9,
        ratio,
        gap <= 1e-10 && ratio <= 1.0 + 1e-9,
        format!("largest path gap {gap:e}, largest bound ratio {ratio}"),
    ))
}

/// Ratio `‖y(dt) - y(dt/2)‖ / ‖y(dt/2) - y(dt/4)‖` of terminal states, which
/// tends to 16 for a fourth-order scheme.
pub fn richardson_ratio(
    grid: &SpatialGrid,
    initial: &BilayerState,
    params: &BilayerParams,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    let mut finals = Vec::new();
    for h in [dt, dt / 2.0, dt / 4.0] {
        let cfg = IntegrateConfig {
            dt: Some(h),
            sample_interval: t_end,
            monitor_margin: false,
            ..IntegrateConfig::default()
        };
        let run = bilayer::integrate(grid, initial, params, t_end, &cfg)?;
        finals.push(run.last().clone());
    }
    Ok(finals[0].max_diff(&finals[1]) / finals[1].max_diff(&finals[2]))
}

fn suite_richardson(seed: u64) -> Result<SuiteReport> {
    let grid = SpatialGrid::periodic(64)?;
    let p = BilayerParams::normalised(0.5, 0.4, 0.05, 0.0)?;
    let initial = smooth_state(&grid, 0.05)?;
    let ratio = richardson_ratio(&grid, &initial, &p, 0.5, 0.025)?;
    Ok(SuiteReport::judged(
        "richardson",
        seed,
        2.0,
        ratio,
        (8.0..=32.0).contains(&ratio),
        "error ratio under dt halving, expected 16 within a factor 2".into(),
    ))
}
