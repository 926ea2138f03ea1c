//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! before asserting, so `cargo test --test acceptance -- --nocapture`
//! doubles as a report.

use std::time::Instant;

use nalgebra::{Matrix4, Schur};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use strata_core::bilayer::{self, BilayerParams, BilayerState, IntegrateConfig};
use strata_core::harness::{self, EpsilonSweepConfig, KappaSweepConfig};
use strata_core::hyperbolicity::{self, AtlasOptions, FroudeSearch, Regime, StatePoint};
use strata_core::refined::{self, ReferenceRun};
use strata_core::spectral::{self, LevelReduction, SobolevIndex};
use strata_core::stratified::{
    self, PycnoclineShape, PycnoclineSpec, StratifiedConfig, StratifiedProfile,
};
use strata_core::{Field1D, Field2D, LevelGrid, SpatialGrid};

const SEED: u64 = 0x5eed_2024;

fn report(name: &str, ok: bool, started: Instant, detail: String) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("{verdict} {name} ({:.1?}): {detail}", started.elapsed());
    assert!(ok, "{name}: {detail}");
}

/// Eigenvalues of a 4×4 matrix via a capped real Schur decomposition.
fn eigenvalues(m: Matrix4<f64>) -> Vec<(f64, f64)> {
    let schur = Schur::try_new(m, f64::EPSILON, 10_000).expect("Schur iteration converges");
    schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
}

fn real_count(eig: &[(f64, f64)]) -> usize {
    let scale = eig.iter().fold(1.0_f64, |m, &(re, im)| m.max(re.hypot(im)));
    eig.iter().filter(|e| e.1.abs() <= 1e-9 * scale).count()
}

/// Companion matrix of `c[0] λ⁴ + … + c[4]`.
fn companion(c: [f64; 5]) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for i in 0..4 {
        m[(0, i)] = -c[i + 1] / c[0];
    }
    for i in 1..4 {
        m[(i, i - 1)] = 1.0;
    }
    m
}

fn det_shifted(p: &StatePoint, lambda: f64) -> f64 {
    (p.matrix() - Matrix4::identity() * lambda).determinant()
}

#[test]
fn regime_classification_matches_brute_force() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut mismatches = Vec::new();
    let per_regime = 1000;
    for regime in [Regime::Hyperbolic, Regime::Elliptic, Regime::FastHyperbolic] {
        for _ in 0..per_regime {
            let p = harness::random_point(&mut rng, regime, 1e-6).unwrap();
            let report = hyperbolicity::classify(&p).unwrap();
            let from_matrix = real_count(&eigenvalues(p.matrix()));
            let from_companion = real_count(&eigenvalues(companion(report.coefficients)));
            let expected = if regime == Regime::Elliptic { 2 } else { 4 };
            if report.regime != regime
                || report.real_roots != from_matrix
                || from_companion != from_matrix
                || from_matrix != expected
            {
                mismatches.push((p, report.regime, from_matrix, from_companion));
            }
        }
    }

    let mut worst_drift = 0.0_f64;
    let mut bracket_failures = 0;
    for &h in &[0.1, 0.3, 0.5, 1.0, 2.0, 5.0, 10.0] {
        for &r in &[0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.98] {
            let fr: Vec<(f64, f64)> = [1, 10, 100]
                .iter()
                .map(|&scan_cells| {
                    hyperbolicity::critical_froude_with(
                        h,
                        r,
                        FroudeSearch {
                            scan_cells,
                            ..FroudeSearch::default()
                        },
                    )
                    .unwrap()
                })
                .collect();
            for f in &fr[1..] {
                worst_drift = worst_drift.max((f.0 - fr[0].0).abs()).max((f.1 - fr[0].1).abs());
            }
            // The matrix oracle must see the transitions at Fr_±.
            let at = |shear: f64| {
                let p = StatePoint::with_ratio(r, h, 1.0, 0.0, shear).unwrap();
                real_count(&eigenvalues(p.matrix()))
            };
            let (fm, fp) = fr[0];
            let d = 1e-5;
            if at(fm * (1.0 - d)) != 4 || at(fm * (1.0 + d)) != 2 || at(fp * (1.0 - d)) != 2 || at(fp * (1.0 + d)) != 4 {
                bracket_failures += 1;
            }
        }
    }
    let ok = mismatches.is_empty() && worst_drift <= 1e-8 && bracket_failures == 0;
    report(
        "regime classification",
        ok,
        started,
        format!(
            "{} points, {} mismatches {:?}; Fr drift over scan refinement {worst_drift:.2e}; {bracket_failures} bracket failures",
            3 * per_regime,
            mismatches.len(),
            mismatches.first()
        ),
    );
}

#[test]
fn atlas_crossings_match_root_counts() {
    let started = Instant::now();
    let (h_s, h_b) = (1.0 / 3.0, 2.0 / 3.0);
    let intercepts = [0.5, 1.5, 2.5];
    let mut table = Vec::new();
    let mut ok = true;
    for &r in &[0.1, 0.5, 0.9] {
        let at = hyperbolicity::atlas(h_s / h_b, r, &intercepts, AtlasOptions::default()).unwrap();
        for &c in &intercepts {
            let p = StatePoint::with_ratio(r, h_s, h_b, 0.0, c * h_b.sqrt()).unwrap();
            let roots = hyperbolicity::classify(&p).unwrap().real_roots;
            let crossings = at.crossings(c);
            ok &= crossings == roots;
            table.push(format!("r={r} c={c}: {crossings}/{roots}"));
        }
    }
    report("atlas line-curve intersections", ok, started, table.join(", "));
}

fn leading_minors(m: &Matrix4<f64>) -> [f64; 4] {
    [
        m[(0, 0)],
        m.fixed_view::<2, 2>(0, 0).determinant(),
        m.fixed_view::<3, 3>(0, 0).determinant(),
        m.determinant(),
    ]
}

#[test]
fn symmetrizer_is_certified() {
    let started = Instant::now();
    let sigma = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let (mut worst_asym, mut worst_identity, mut failures) = (0.0_f64, 0.0_f64, 0);
    let mut midpoint_clipped = 0;
    let n = 1000;
    for _ in 0..n {
        let p = harness::random_point_in_set(&mut rng, sigma).unwrap();
        let sym = hyperbolicity::symmetrizer(&p).unwrap();
        let s = sym.s;
        let minors = leading_minors(&s);
        let eig_min = s.symmetric_eigenvalues().min();
        let sa = s * p.matrix();
        let asym = (sa - sa.transpose()).amax();
        let r = p.rho_ratio();
        let pl = det_shifted(&p, sym.lambda);
        let identity = (minors[3] / (r * r) - pl).abs() / pl.abs();
        worst_asym = worst_asym.max(asym);
        worst_identity = worst_identity.max(identity);
        if minors.iter().any(|&m| !(m > 0.0)) || !(eig_min > 0.0) || asym > 1e-12 || !(identity <= 1e-9) {
            failures += 1;
        }
        if sym.selection != hyperbolicity::ShiftSelection::Midpoint {
            midpoint_clipped += 1;
        }
    }
    report(
        "symmetrizer certification",
        failures == 0,
        started,
        format!(
            "{n} points, {failures} failures, max asymmetry {worst_asym:.2e}, minor identity gap {worst_identity:.2e}, {midpoint_clipped} shifts off the midpoint"
        ),
    );
}

fn single_mode(grid: &SpatialGrid, amp: f64) -> BilayerState {
    let xs = grid.points();
    BilayerState::new(
        0.0,
        Field1D::from_fn(&xs, |x| amp * x.sin()),
        Field1D::from_fn(&xs, |x| -0.5 * amp * x.sin()),
        Field1D::from_fn(&xs, |x| 0.5 * amp * x.cos()),
        Field1D::zeros(xs.len()),
    )
    .unwrap()
}

fn integral(grid: &SpatialGrid, f: &Field1D) -> f64 {
    f.iter().sum::<f64>() * grid.dx()
}

#[test]
fn bilayer_conservation() {
    let started = Instant::now();
    let grid = SpatialGrid::periodic(128).unwrap();
    let initial = single_mode(&grid, 0.05);
    let t_end = 1.0;
    let mut worst_mass = 0.0_f64;
    let mut worst_momentum = 0.0_f64;
    for kappa in [0.0, 0.01, 0.1] {
        let p = BilayerParams::normalised(0.5, 0.4, 0.05, kappa).unwrap();
        let cfg = IntegrateConfig {
            sample_interval: 0.1,
            monitor_margin: false,
            ..IntegrateConfig::default()
        };
        let run = bilayer::integrate(&grid, &initial, &p, t_end, &cfg).unwrap();
        assert!(run.status.is_completed());
        let first = &run.samples[0];
        for s in &run.samples {
            for (a, b) in [(&s.h_s, &first.h_s), (&s.h_b, &first.h_b)] {
                worst_mass = worst_mass.max((integral(&grid, a) - integral(&grid, b)).abs() / t_end);
            }
            if kappa == 0.0 {
                for (a, b) in [(&s.u_s, &first.u_s), (&s.u_b, &first.u_b)] {
                    worst_momentum = worst_momentum.max((integral(&grid, a) - integral(&grid, b)).abs() / t_end);
                }
            }
        }
    }
    report(
        "bilayer conservation",
        worst_mass <= 1e-12 && worst_momentum <= 1e-12,
        started,
        format!("mass drift {worst_mass:.2e}/unit time, velocity-mean drift {worst_momentum:.2e}/unit time"),
    );
}

fn d(grid: &SpatialGrid, f: &Field1D, order: u32) -> Field1D {
    spectral::spectral_derivative(grid, f, order).unwrap()
}

/// Residual of the total-velocity system at sample `k`, with fourth-order
/// central differences in time over a cadence `tau`.
fn total_velocity_residual(grid: &SpatialGrid, p: &BilayerParams, samples: &[BilayerState], k: usize, tau: f64) -> Vec<Field1D> {
    let r = p.rho_s / p.rho_b;
    let hv = |s: &BilayerState| -> [Field1D; 4] {
        let v = |u: &Field1D, h: &Field1D, hbar: f64| {
            let dh = d(grid, h, 1);
            Field1D((0..u.len()).map(|j| u[j] - p.kappa * dh[j] / (hbar + h[j])).collect())
        };
        [s.h_s.clone(), s.h_b.clone(), v(&s.u_s, &s.h_s, p.hbar_s), v(&s.u_b, &s.h_b, p.hbar_b)]
    };
    let window: Vec<[Field1D; 4]> = samples[k - 2..=k + 2].iter().map(hv).collect();
    let weights = [1.0, -8.0, 0.0, 8.0, -1.0];
    let ddt: Vec<Field1D> = (0..4)
        .map(|f| {
            let n = grid.len();
            Field1D((0..n).map(|j| (0..5).map(|m| weights[m] * window[m][f][j]).sum::<f64>() / (12.0 * tau)).collect())
        })
        .collect();
    let [h_s, h_b, v_s, v_b] = &window[2];
    let n = grid.len();
    let pressure_s = h_s.add(h_b);
    let pressure_b = Field1D((0..n).map(|j| r * h_s[j] + h_b[j]).collect());
    let flux = |h: &Field1D, v: &Field1D, hbar: f64, ubar: f64| {
        d(grid, &Field1D((0..n).map(|j| (hbar + h[j]) * (ubar + v[j])).collect()), 1)
    };
    let mut res = vec![
        ddt[0].add(&flux(h_s, v_s, p.hbar_s, p.ubar_s)),
        ddt[1].add(&flux(h_b, v_b, p.hbar_b, p.ubar_b)),
    ];
    for (i, (h, v, hbar, ubar, pr)) in [(h_s, v_s, p.hbar_s, p.ubar_s, &pressure_s), (h_b, v_b, p.hbar_b, p.ubar_b, &pressure_b)]
        .into_iter()
        .enumerate()
    {
        let dh = d(grid, h, 1);
        let dv = d(grid, v, 1);
        let d2v = d(grid, v, 2);
        let dp = d(grid, pr, 1);
        res.push(Field1D(
            (0..n)
                .map(|j| {
                    let transport = ubar + v[j] - p.kappa * dh[j] / (hbar + h[j]);
                    ddt[2 + i][j] + transport * dv[j] + dp[j] - p.kappa * d2v[j]
                })
                .collect(),
        ));
    }
    res
}

fn l2(grid: &SpatialGrid, fields: &[Field1D]) -> f64 {
    (fields.iter().map(|f| f.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() * grid.dx()).sqrt()
}

#[test]
fn total_velocity_residual_is_fourth_order() {
    let started = Instant::now();
    let grid = SpatialGrid::periodic(64).unwrap();
    let p = BilayerParams::normalised(0.5, 0.4, 0.05, 0.05).unwrap();
    let initial = single_mode(&grid, 0.05);
    let (tau, k) = (0.032, 4);
    let residuals: Vec<Vec<Field1D>> = [0.016, 0.008, 0.004]
        .iter()
        .map(|&dt| {
            let cfg = IntegrateConfig {
                dt: Some(dt),
                sample_interval: tau,
                monitor_margin: false,
                ..IntegrateConfig::default()
            };
            let run = bilayer::integrate(&grid, &initial, &p, (k + 2) as f64 * tau, &cfg).unwrap();
            total_velocity_residual(&grid, &p, &run.samples, k, tau)
        })
        .collect();
    let diff = |a: &[Field1D], b: &[Field1D]| l2(&grid, &a.iter().zip(b).map(|(x, y)| x.sub(y)).collect::<Vec<_>>());
    let (d1, d2) = (diff(&residuals[0], &residuals[1]), diff(&residuals[1], &residuals[2]));
    let order = (d1 / d2).log2();
    let library = harness::total_velocity_order(&grid, &initial, &p, 0.016, tau, k as f64 * tau).unwrap();
    let ok = (order - 4.0).abs() <= 0.3 && (library.order - 4.0).abs() <= 0.3;
    report(
        "total-velocity residual order",
        ok,
        started,
        format!(
            "order {order:.3} (library {:.3}); differences {d1:.3e}, {d2:.3e}; residual norms {:.3e} {:.3e} {:.3e}",
            library.order,
            l2(&grid, &residuals[0]),
            l2(&grid, &residuals[1]),
            l2(&grid, &residuals[2])
        ),
    );
}

/// Ordinary least squares on logarithms, written out independently.
fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (sx, sy) = (lx.iter().sum::<f64>(), ly.iter().sum::<f64>());
    let sxx: f64 = lx.iter().map(|v| v * v).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[test]
fn vanishing_diffusivity_rate() {
    let started = Instant::now();
    let cfg = KappaSweepConfig::default();
    assert_eq!((cfg.n_x, cfg.t_end, cfg.s), (256, 0.5, 2.0));
    assert_eq!(cfg.kappas, vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2]);
    let result = harness::sweep_kappa(&cfg).unwrap();
    let fit = result.fit.expect("nonzero errors");
    let own = log_slope(&result.abscissae, &result.errors);
    let ok = result.pass() && (own - 1.0).abs() <= 0.1 && (own - fit.slope).abs() < 1e-12;
    report(
        "kappa -> 0 convergence rate",
        ok,
        started,
        format!(
            "slope {own:.4} (95% CI [{:.4}, {:.4}]), errors {:?}",
            fit.interval.0, fit.interval.1, result.errors
        ),
    );
}

#[test]
fn bilayer_embedding_is_exact() {
    let started = Instant::now();
    let grid = SpatialGrid::periodic(128).unwrap();
    let p = BilayerParams::normalised(0.5, 0.4, 0.05, 0.05).unwrap();
    let levels = LevelGrid::clustered(20, 12, -p.hbar_s, 2.0).unwrap();
    let initial = single_mode(&grid, 0.05);
    let (profile, embedded) = stratified::embed_bilayer(&initial, &p, &levels).unwrap();

    // Tendency: every level against the tendency of its layer.
    let strat = stratified::rhs(&grid, &embedded, &profile, p.kappa).unwrap();
    let bi = bilayer::rhs(&grid, &initial, &p).unwrap();
    let mut rhs_gap = 0.0_f64;
    for (i, &m) in levels.mids().iter().enumerate() {
        let upper = m > -p.hbar_s;
        let (hbar, dh, du) = if upper { (p.hbar_s, &bi.h_s, &bi.u_s) } else { (p.hbar_b, &bi.h_b, &bi.u_b) };
        for j in 0..grid.len() {
            rhs_gap = rhs_gap
                .max((strat.h.levels[i][j] - dh[j] / hbar).abs())
                .max((strat.u.levels[i][j] - du[j]).abs());
        }
    }

    let t_end = 0.5;
    let dt = 0.005;
    let bcfg = IntegrateConfig {
        dt: Some(dt),
        sample_interval: 0.1,
        monitor_margin: false,
        ..IntegrateConfig::default()
    };
    let scfg = StratifiedConfig {
        dt: Some(dt),
        sample_interval: 0.1,
        ..StratifiedConfig::default()
    };
    let brun = bilayer::integrate(&grid, &initial, &p, t_end, &bcfg).unwrap();
    let srun = stratified::integrate(&grid, &embedded, &profile, p.kappa, t_end, &scfg).unwrap();
    assert_eq!(brun.samples.len(), srun.samples.len());
    let mut traj_gap = 0.0_f64;
    for (b, s) in brun.samples.iter().zip(&srun.samples) {
        assert!((b.t - s.t).abs() < 1e-12);
        let (h, u) = stratified::embed_fields(&p, &levels, &b.h_s, &b.h_b, &b.u_s, &b.u_b).unwrap();
        traj_gap = traj_gap.max(s.h.sub(&h).max_abs()).max(s.u.sub(&u).max_abs());
    }
    report(
        "bilayer embedding",
        rhs_gap <= 1e-12 && traj_gap <= 1e-8,
        started,
        format!("tendency gap {rhs_gap:.2e}, trajectory gap {traj_gap:.2e} over t = {t_end}"),
    );
}

/// Montgomery potential by direct double sums over cells.
fn montgomery_direct(levels: &LevelGrid, rho: &[f64], h: &Field2D, x: usize) -> Vec<f64> {
    let w = levels.weights();
    let n = rho.len();
    (0..n)
        .map(|i| {
            let mut below = 0.5 * w[i] * h.levels[i][x];
            for j in 0..i {
                below += w[j] * h.levels[j][x];
            }
            let mut above = 0.5 * w[i] * rho[i] * h.levels[i][x];
            for j in i + 1..n {
                above += w[j] * rho[j] * h.levels[j][x];
            }
            rho[i] * below + above
        })
        .collect()
}

#[test]
fn montgomery_lipschitz_bound() {
    use rand::Rng;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst = 0.0_f64;
    let mut library_gap = 0.0_f64;
    let trials = 1000;
    for _ in 0..trials {
        let n_r = rng.gen_range(2..32);
        let levels = LevelGrid::clustered(n_r / 2 + 1, n_r - n_r / 2, -rng.gen_range(0.1..0.9), rng.gen_range(0.0..3.0)).unwrap();
        let lo = rng.gen_range(0.05..1.0);
        let hi = lo * rng.gen_range(1.01..20.0);
        let a = harness::random_profile(&mut rng, &levels, lo, hi).unwrap();
        let b = harness::random_profile(&mut rng, &levels, lo, hi).unwrap();
        let n_x = 8;
        let amp = rng.gen_range(0.01..2.0);
        let h = harness::random_field2d(&mut rng, n_x, levels.n_r(), amp);
        let w = levels.weights();
        let m = [a.rho(), b.rho()]
            .iter()
            .flat_map(|r| r.iter().map(|&v| v.max(1.0 / v)))
            .fold(0.0, f64::max);
        let l1: f64 = (0..levels.n_r()).map(|i| w[i] * (a.rho()[i] - b.rho()[i]).abs()).sum();
        let mut trial_worst = 0.0_f64;
        for x in 0..n_x {
            let pa = montgomery_direct(&levels, a.rho(), &h, x);
            let pb = montgomery_direct(&levels, b.rho(), &h, x);
            let sup = h.levels.iter().map(|l| l[x].abs()).fold(0.0, f64::max);
            for i in 0..levels.n_r() {
                let lhs = (pa[i] / a.rho()[i] - pb[i] / b.rho()[i]).abs();
                let rhs = (m.powi(3) * (a.rho()[i] - b.rho()[i]).abs() + m * l1) * sup;
                trial_worst = trial_worst.max(lhs / rhs);
            }
        }
        worst = worst.max(trial_worst);
        let lib = stratified::montgomery_lipschitz_check(&a, &b, &h).unwrap();
        library_gap = library_gap.max((lib.max_ratio - trial_worst).abs());
    }
    report(
        "Montgomery Lipschitz bound",
        worst <= 1.0 + 1e-9 && library_gap <= 1e-12,
        started,
        format!("{trials} trials, max ratio {worst:.4}, library disagreement {library_gap:.1e}"),
    );
}

#[test]
fn refined_approximation_consistency() {
    let started = Instant::now();
    let grid = SpatialGrid::periodic(64).unwrap();
    let p = BilayerParams::normalised(0.5, 0.5, 0.05, 0.1).unwrap();
    let levels = LevelGrid::clustered(16, 16, -p.hbar_s, 3.0).unwrap();
    let initial = single_mode(&grid, 0.05);
    let (profile, st) = stratified::embed_bilayer(&initial, &p, &levels).unwrap();
    let (dt, t_end) = (0.005, 0.5);
    let reference = ReferenceRun::integrate(&grid, &st, profile, p.kappa, t_end, dt).unwrap();
    let target: StratifiedProfile = stratified::smooth_pycnocline(&PycnoclineSpec {
        params: p,
        levels: levels.clone(),
        epsilon: 0.05,
        shape: PycnoclineShape::Tanh,
    })
    .unwrap()
    .profile;
    let forcing = refined::build_forcing(&grid, &reference, &target).unwrap();
    let cfg = StratifiedConfig {
        dt: Some(dt),
        sample_interval: 0.05,
        ..StratifiedConfig::default()
    };
    let run = refined::solve_refined(&grid, &st, &target, &forcing, p.kappa, t_end, &cfg).unwrap();
    assert!(run.status.is_completed());
    let s = SobolevIndex::new(2.0).unwrap();
    let samples = refined::consistency_residual(&grid, &run, &reference, &forcing, s).unwrap();

    let norm = target.rho().iter().fold(0.0_f64, |a, &v| a.max(v)) * target.rho().iter().fold(0.0_f64, |a, &v| a.max(1.0 / v));
    let (mut worst_gap, mut worst_ratio) = (0.0_f64, 0.0_f64);
    for (state, sample) in run.samples.iter().zip(&samples) {
        let (_, forced) = refined::refined_rhs(&grid, state, &target, &forcing, p.kappa).unwrap();
        let free = stratified::rhs(&grid, state, &target, p.kappa).unwrap().u;
        let r_sub = forced.sub(&free);
        let gap = state.h.sub(&reference.h_at(state.t).unwrap());
        let mut closed = Field2D::zeros(grid.len(), levels.n_r());
        for j in 0..grid.len() {
            let psi = montgomery_direct(&levels, target.rho(), &gap, j);
            for i in 0..levels.n_r() {
                closed.levels[i][j] = psi[i] / target.rho()[i];
            }
        }
        for l in closed.levels.iter_mut() {
            *l = spectral::dealias(&grid, &d(&grid, l, 1));
        }
        let rel = r_sub.sub(&closed).max_abs() / closed.max_abs().max(f64::MIN_POSITIVE);
        let lhs = closed
            .levels
            .iter()
            .map(|l| spectral::sobolev_norm(&grid, l, s).unwrap())
            .fold(0.0, f64::max);
        let rhs = norm * spectral::mixed_norm(&grid, &levels, &gap, SobolevIndex::new(3.0).unwrap(), LevelReduction::Integral).unwrap();
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        worst_gap = worst_gap.max(rel).max(sample.path_gap);
        worst_ratio = worst_ratio.max(ratio).max(sample.ratio);
    }
    report(
        "refined approximation consistency",
        worst_gap <= 1e-10 && worst_ratio <= 1.0 + 1e-9,
        started,
        format!("{} samples, max relative path gap {worst_gap:.2e}, max bound ratio {worst_ratio:.4}", samples.len()),
    );
}

#[test]
fn sharp_stratification_rate() {
    let started = Instant::now();
    let cfg = EpsilonSweepConfig::default();
    assert_eq!(cfg.params.kappa, 0.1);
    assert_eq!(cfg.t_end, 0.5);
    assert_eq!(cfg.shape, PycnoclineShape::Tanh);
    assert_eq!(cfg.n_below + cfg.n_above, 64);
    let delta_rho = cfg.params.rho_b - cfg.params.rho_s;
    let closed: Vec<f64> = cfg.epsilons.iter().map(|e| e * delta_rho * std::f64::consts::LN_2).collect();
    let result = harness::sweep_epsilon(&cfg).unwrap();
    let span = (result.abscissae.last().unwrap() / result.abscissae[0]).log10();
    let closed_gap = result
        .abscissae
        .iter()
        .zip(&closed)
        .map(|(a, c)| (a - c).abs() / c)
        .fold(0.0, f64::max);
    let own = log_slope(&result.abscissae, &result.errors);
    let fit = result.fit.expect("nonzero distances");
    let ok = result.pass() && (own - 1.0).abs() <= 0.2 && closed_gap < 1e-3 && span > 1.99;
    report(
        "sharp-stratification rate",
        ok,
        started,
        format!(
            "slope {own:.4} (95% CI [{:.4}, {:.4}]) over {span:.2} decades of delta0, distances {:?}",
            fit.interval.0, fit.interval.1, result.errors
        ),
    );
}
