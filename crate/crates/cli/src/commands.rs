use std::fs::File;

use anyhow::Context;
use serde_json::json;

use strata_core::bilayer::{self, BilayerState, IntegrateConfig, RunStatus};
use strata_core::harness::{self, CheckConfig, EpsilonSweepConfig, KappaSweepConfig, SweepOutcome, SweepResult};
use strata_core::hyperbolicity::{self, AtlasOptions};
use strata_core::io::{self, Axis, Series};
use strata_core::refined::{self, ReferenceRun};
use strata_core::spectral::SobolevIndex;
use strata_core::stratified::{self, PycnoclineSpec, StratifiedConfig, StratifiedState};
use strata_core::{Error, LevelGrid, SpatialGrid};

use crate::config::{
    AtlasConfig, BilayerSimConfig, ClassifyConfig, InitialSource, LevelsConfig, ProfileSource, RefineConfig,
    StratifiedInitial, StratifiedSimConfig,
};
use crate::output::{Output, Verdict};

pub fn atlas(cfg: &AtlasConfig, out: &mut Output) -> anyhow::Result<(Verdict, serde_json::Value)> {
    let h_ratio = cfg.h_s / cfg.h_b;
    let opts = AtlasOptions {
        samples: cfg.samples,
        extent: cfg.extent,
    };
    let mut rows = Vec::new();
    let mut all_match = true;
    for (k, &r) in cfg.rho_ratios.iter().enumerate() {
        let at = hyperbolicity::atlas(h_ratio, r, &cfg.intercepts, opts)?;
        io::write_atlas(&out.file(&format!("atlas_{k}.csv")), &at)?;
        let series: Vec<Series> = at
            .curve
            .iter()
            .chain(at.lines.iter().map(|l| &l.1))
            .map(|l| Series {
                name: l.id.clone(),
                points: l.points.clone(),
            })
            .collect();
        out.plot(
            &format!("atlas_{k}.svg"),
            &format!("H_s/H_b = {h_ratio:.4}, rho_s/rho_b = {r}"),
            &series,
            Axis::Linear,
            Axis::Linear,
        )?;
        for &c in &cfg.intercepts {
            let p = hyperbolicity::StatePoint::with_ratio(r, cfg.h_s, cfg.h_b, 0.0, c * cfg.h_b.sqrt())?;
            let report = hyperbolicity::classify(&p)?;
            let crossings = at.crossings(c);
            all_match &= crossings == report.real_roots;
            rows.push(json!({
                "rho_ratio": r,
                "intercept": c,
                "crossings": crossings,
                "real_roots": report.real_roots,
                "regime": report.regime.to_string(),
            }));
        }
    }
    Ok((Verdict::from_pass(all_match), json!({ "h_ratio": h_ratio, "intersections": rows })))
}

pub fn classify(cfg: &ClassifyConfig) -> anyhow::Result<serde_json::Value> {
    let report = hyperbolicity::classify(&cfg.point()?)?;
    Ok(json!({
        "roots": report.roots,
        "regime": report.regime.to_string(),
        "fr_minus": report.fr_minus,
        "fr_plus": report.fr_plus,
        "margin": report.margin,
    }))
}

fn grid(n_x: usize, length: f64) -> anyhow::Result<SpatialGrid> {
    Ok(SpatialGrid::new(length, n_x)?)
}

fn status_json(status: &RunStatus) -> (Verdict, serde_json::Value) {
    match status {
        RunStatus::Completed => (Verdict::Pass, json!("completed")),
        RunStatus::BlowUp { t, reason } => (Verdict::Inconclusive, json!({ "blow_up": { "t": t, "reason": reason } })),
        RunStatus::DepthLoss { t, min_depth } => (
            Verdict::Inconclusive,
            json!({ "depth_loss": { "t": t, "min_depth": min_depth } }),
        ),
    }
}

fn field_series(grid: &SpatialGrid, state: &BilayerState) -> Vec<Series> {
    let xs = grid.points();
    ["H_s", "H_b", "U_s", "U_b"]
        .iter()
        .zip(state.fields())
        .map(|(name, f)| Series {
            name: name.to_string(),
            points: xs.iter().copied().zip(f.iter().copied()).collect(),
        })
        .collect()
}

pub fn simulate_bilayer(cfg: &BilayerSimConfig, out: &mut Output) -> anyhow::Result<(Verdict, serde_json::Value)> {
    cfg.params.validate()?;
    let grid = grid(cfg.n_x, cfg.length)?;
    let initial = match &cfg.initial {
        InitialSource::Closed(c) => c.build(&grid)?,
        InitialSource::Csv { path } => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            io::read_bilayer_initial(file, &grid)?
        }
    };
    if let Some(sigma) = cfg.sigma {
        if !bilayer::state_in_hyperbolic_set(&initial, &cfg.params, sigma) {
            return Err(Error::NotHyperbolic {
                regime: format!("initial data outside the hyperbolic set with margin {sigma}"),
                margin: bilayer::min_margin(&initial, &cfg.params),
            }
            .into());
        }
    }
    let icfg = IntegrateConfig {
        step: cfg.step(),
        dt: cfg.dt,
        sample_interval: cfg.sample_interval,
        sigma: cfg.sigma,
        blowup_factor: cfg.blowup_factor,
        ..IntegrateConfig::default()
    };
    let run = bilayer::integrate(&grid, &initial, &cfg.params, cfg.t_end, &icfg)?;
    io::write_trajectory(&out.file("trajectory.csv"), &grid, &run.samples)?;
    io::write_diagnostics(&out.file("diagnostics.csv"), &run.diagnostics)?;
    out.plot(
        "final_state.svg",
        &format!("t = {}", run.last().t),
        &field_series(&grid, run.last()),
        Axis::Linear,
        Axis::Linear,
    )?;
    let (verdict, status) = status_json(&run.status);
    Ok((
        verdict,
        json!({ "status": status, "steps": run.steps, "warnings": run.warnings, "t_final": run.last().t }),
    ))
}

fn levels_for(levels: &LevelsConfig, interface: f64) -> anyhow::Result<LevelGrid> {
    Ok(LevelGrid::clustered(levels.n_below, levels.n_above, interface, levels.stretch)?)
}

pub fn simulate_stratified(cfg: &StratifiedSimConfig, out: &mut Output) -> anyhow::Result<(Verdict, serde_json::Value)> {
    let p = cfg.params;
    p.validate()?;
    let grid = grid(cfg.n_x, cfg.length)?;
    let profile = match &cfg.profile {
        ProfileSource::BilayerEmbed => stratified::bilayer_profile(&p, &levels_for(&cfg.levels, -p.hbar_s)?)?,
        ProfileSource::SmoothPycnocline { epsilon, shape } => {
            stratified::smooth_pycnocline(&PycnoclineSpec {
                params: p,
                levels: levels_for(&cfg.levels, -p.hbar_s)?,
                epsilon: *epsilon,
                shape: *shape,
            })?
            .profile
        }
        ProfileSource::Csv { path } => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            io::read_profile(file)?
        }
    };
    let levels = profile.levels().clone();
    let initial = match &cfg.initial {
        StratifiedInitial::Embedded(bi) => {
            let b = bi.build(&grid)?;
            let (h, u) = stratified::embed_fields(&p, &levels, &b.h_s, &b.h_b, &b.u_s, &b.u_b)?;
            StratifiedState { t: 0.0, h, u }
        }
        StratifiedInitial::Csv { path } => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            io::read_state(file, &grid, &levels)?
        }
        StratifiedInitial::Rest => StratifiedState::rest(grid.len(), levels.n_r()),
    };
    let scfg = StratifiedConfig {
        cfl: cfg.cfl,
        dt: cfg.dt,
        sample_interval: cfg.sample_interval,
        ..StratifiedConfig::default()
    };
    let run = stratified::integrate(&grid, &initial, &profile, p.kappa, cfg.t_end, &scfg)?;
    io::write_profile(&out.file("profile.csv"), &profile)?;
    io::write_state(&out.file("state_final.csv"), &grid, &levels, run.last())?;
    io::write_stratified_diagnostics(&out.file("diagnostics.csv"), &run.diagnostics)?;
    let xs = grid.points();
    let n_r = levels.n_r();
    let picks = [0, n_r / 2, n_r - 1];
    let series: Vec<Series> = picks
        .iter()
        .map(|&i| Series {
            name: format!("h at r = {:.4}", levels.mids()[i]),
            points: xs.iter().copied().zip(run.last().h.levels[i].iter().copied()).collect(),
        })
        .collect();
    out.plot("final_state.svg", &format!("t = {}", run.last().t), &series, Axis::Linear, Axis::Linear)?;
    let (verdict, status) = status_json(&run.status);
    Ok((
        verdict,
        json!({ "status": status, "steps": run.steps, "n_r": n_r, "kappa": p.kappa, "t_final": run.last().t }),
    ))
}

pub fn refine(cfg: &RefineConfig, out: &mut Output) -> anyhow::Result<(Verdict, serde_json::Value)> {
    let p = cfg.params;
    p.validate()?;
    let grid = grid(cfg.n_x, cfg.length)?;
    let levels = levels_for(&cfg.levels, -p.hbar_s)?;
    let initial = cfg.initial.build(&grid)?;
    let (reference_profile, st) = stratified::embed_bilayer(&initial, &p, &levels)?;
    let reference = ReferenceRun::integrate(&grid, &st, reference_profile, p.kappa, cfg.t_end, cfg.dt)?;
    let target = stratified::smooth_pycnocline(&PycnoclineSpec {
        params: p,
        levels: levels.clone(),
        epsilon: cfg.epsilon,
        shape: cfg.shape,
    })?;
    let forcing = refined::build_forcing(&grid, &reference, &target.profile)?;
    let scfg = StratifiedConfig {
        dt: Some(cfg.dt),
        sample_interval: cfg.sample_interval,
        ..StratifiedConfig::default()
    };
    let run = refined::solve_refined(&grid, &st, &target.profile, &forcing, p.kappa, cfg.t_end, &scfg)?;
    let (status_verdict, status) = status_json(&run.status);
    let samples = refined::consistency_residual(&grid, &run, &reference, &forcing, SobolevIndex::new(cfg.s)?)?;
    io::write_profile(&out.file("profile.csv"), &target.profile)?;
    io::write_residuals(&out.file("residuals.csv"), &levels, &samples)?;
    if let Some(last) = run.samples.last() {
        io::write_state(&out.file("state_final.csv"), &grid, &levels, last)?;
    }
    let ratios: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.ratio)).collect();
    out.plot(
        "residual_ratio.svg",
        "residual / bound",
        &[Series {
            name: "ratio".into(),
            points: ratios,
        }],
        Axis::Linear,
        Axis::Linear,
    )?;
    let gap = samples.iter().map(|s| s.path_gap).fold(0.0, f64::max);
    let ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    let verdict = if status_verdict != Verdict::Pass {
        status_verdict
    } else {
        Verdict::from_pass(gap <= cfg.gap_tolerance && ratio <= 1.0 + cfg.ratio_tolerance)
    };
    Ok((
        verdict,
        json!({
            "status": status,
            "max_path_gap": gap,
            "max_ratio": ratio,
            "delta0": target.rho_l1,
            "samples": samples.len(),
        }),
    ))
}

fn sweep_verdict(r: &SweepResult) -> Verdict {
    match r.outcome {
        SweepOutcome::Pass | SweepOutcome::Exact => Verdict::Pass,
        SweepOutcome::Fail => Verdict::Fail,
        SweepOutcome::Inconclusive { .. } => Verdict::Inconclusive,
    }
}

fn sweep_outputs(r: &SweepResult, name: &str, out: &mut Output) -> anyhow::Result<()> {
    if !r.abscissae.is_empty() {
        io::write_sweep(&out.file(&format!("{name}.csv")), r)?;
    }
    let mut series = vec![Series {
        name: "distance".into(),
        points: r.abscissae.iter().copied().zip(r.errors.iter().copied()).collect(),
    }];
    if let Some(fit) = r.fit {
        series.push(Series {
            name: format!("fit, slope {:.3}", fit.slope),
            points: r
                .abscissae
                .iter()
                .map(|&x| (x, (fit.intercept + fit.slope * x.ln()).exp()))
                .collect(),
        });
    }
    out.plot(&format!("{name}.svg"), &r.id, &series, Axis::Log, Axis::Log)
}

fn sweep_detail(r: &SweepResult) -> serde_json::Value {
    json!({
        "abscissa": r.abscissa,
        "expected_slope": r.expected_slope,
        "tolerance": r.tolerance,
        "outcome": r.outcome,
        "std_error": r.fit.map(|f| f.std_error),
    })
}

pub fn sweep_kappa(cfg: &KappaSweepConfig, out: &mut Output) -> anyhow::Result<(Verdict, Option<(f64, (f64, f64))>, serde_json::Value)> {
    let r = harness::sweep_kappa(cfg)?;
    sweep_outputs(&r, "sweep_kappa", out)?;
    Ok((sweep_verdict(&r), r.fit.map(|f| (f.slope, f.interval)), sweep_detail(&r)))
}

pub fn sweep_epsilon(cfg: &EpsilonSweepConfig, out: &mut Output) -> anyhow::Result<(Verdict, Option<(f64, (f64, f64))>, serde_json::Value)> {
    let r = harness::sweep_epsilon(cfg)?;
    sweep_outputs(&r, "sweep_epsilon", out)?;
    let mut detail = sweep_detail(&r);
    detail["kappa"] = json!(cfg.params.kappa);
    Ok((sweep_verdict(&r), r.fit.map(|f| (f.slope, f.interval)), detail))
}

pub fn check_all(cfg: &CheckConfig, out: &mut Output) -> anyhow::Result<(Verdict, serde_json::Value)> {
    let report = harness::check_all(cfg)?;
    let path = out.file("check_all.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok((Verdict::from_pass(report.pass()), serde_json::to_value(&report.suites)?))
}

/// Prints JSON to stdout; a closed pipe is not an error.
pub fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
