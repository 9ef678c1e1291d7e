//! End-to-end acceptance checks. Each check prints one PASS or FAIL line;
//! the process exits non-zero if any check fails.

use std::time::Instant;

use aot_ocean::assimilation::{AssimilationConfig, MuScaling, Scheme, Stepper};
use aot_ocean::experiment::{
    record_reference, run_ablation, run_sweep, spin_up, sweep_config, AblationRow, ErrorField, ExperimentConfig,
    SweepAxis, SweepTable,
};
use aot_ocean::grid::{DepthSpec, Grid, GridSpec, MaskSpec};
use aot_ocean::interpolant::{build_obs_mask, flood_fill, FillPlan, Interpolator, ObsMask, ObsMode};
use aot_ocean::io::{ablation_csv_string, error_csv_string, parse_config, sweep_csv_string, ConfigError};
use aot_ocean::physics::{momentum_tendency, scalar_tendency, LayeredState, PhysicsConfig};
use aot_ocean::validation::static_state_run;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DAY: f64 = 86400.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fail(detail: impl std::fmt::Display) -> Outcome {
    Outcome { pass: false, detail: format!("error: {detail}") }
}

macro_rules! tryo {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return fail(err),
        }
    };
}

/// Resting state with random velocities of size `amp`, thickness
/// perturbed by up to 10% and varied tracers.
fn noisy_state(grid: &Grid, amp: f64, seed: u64) -> LayeredState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = LayeredState::at_rest(grid, 10.0, 35.0);
    for x in s.u.iter_mut().chain(s.v.iter_mut()) {
        *x = amp * rng.gen_range(-1.0..1.0);
    }
    let nc = grid.ncell();
    for x in s.h[..nc].iter_mut() {
        *x *= 1.0 + rng.gen_range(-0.1..0.1);
    }
    for (t, sa) in s.theta.iter_mut().zip(s.sal.iter_mut()) {
        *t += rng.gen_range(-2.0..2.0);
        *sa += rng.gen_range(-0.5..0.5);
    }
    s.apply_mask(grid);
    s
}

// ---------------------------------------------------------------------------

fn static_state_convergence() -> Outcome {
    let t0 = Instant::now();
    let g = tryo!(GridSpec { nx: 64, ny: 64, nz: 1, mask: MaskSpec::AllOcean, periodic_y: true, ..GridSpec::default() }.build());
    let dt = 60.0;
    let ex = tryo!(static_state_run(&g, Scheme::Explicit, 0.1 / dt, dt, 400, false));
    let im = tryo!(static_state_run(&g, Scheme::SemiImplicit, 1.0 / dt, dt, 50, false));
    let secs = t0.elapsed().as_secs_f64();
    let (ee, ie) = (ex.max_closed_form_error(), im.max_closed_form_error());
    let (en, inn) = (ex.steps_to(1e-14), im.steps_to(1e-14));
    let pass = ee <= 1e-12 && ie <= 1e-12 && en.is_some_and(|n| n <= 400) && inn.is_some_and(|n| n <= 50) && secs < 5.0;
    outcome(
        pass,
        format!(
            "explicit: closed-form error {ee:.2e}, 1e-14 after {en:?} steps; semi-implicit: error {ie:.2e}, 1e-14 after {inn:?} steps; {secs:.2} s"
        ),
    )
}

fn stability_boundary() -> Outcome {
    let g = tryo!(GridSpec { nx: 16, ny: 16, nz: 1, mask: MaskSpec::AllOcean, ..GridSpec::default() }.build());
    let dt = 60.0;
    let run = tryo!(static_state_run(&g, Scheme::Explicit, 2.5 / dt, dt, 30, true));
    let worst = run.growth_factors().iter().map(|f| (f - 1.5).abs()).fold(0.0, f64::max);
    let no_override = static_state_run(&g, Scheme::Explicit, 2.5 / dt, dt, 1, false).is_err();
    let at_limit = AssimilationConfig { mu: 2.0 / dt, dt, dt_obs: dt, ..AssimilationConfig::default() }.validate().is_err();
    let parsed = matches!(
        parse_config("assim.mu = 0.025\nassim.dt = 100\nassim.dt_obs = 10800"),
        Err(ConfigError::Validation(m)) if m.contains("mu*dt < 2")
    );
    outcome(
        worst <= 1e-9 && no_override && at_limit && parsed,
        format!(
            "growth factor 1.5 within {worst:.2e}; rejected without override: {no_override}; mu*dt = 2 rejected: {at_limit}; config rejected: {parsed}"
        ),
    )
}

fn ablation() -> Outcome {
    let t0 = Instant::now();
    let cfg = ExperimentConfig::default();
    let g = tryo!(cfg.build_grid());
    let spun = tryo!(spin_up(&cfg, &g));
    let (later, _) = tryo!(record_reference(&g, &cfg.physics, cfg.assim.dt, DAY, 5.0 * DAY, 0, ObsMode::Face, false, &spun));
    let table = tryo!(run_ablation(&cfg, &g, &spun, &later));
    let secs = t0.elapsed().as_secs_f64();
    let eps = 1e-12;
    let mut problems = Vec::new();
    for row in [AblationRow::NoDynamics, AblationRow::BottomDragOnly, AblationRow::TopographicWaveDragOnly] {
        let (ex, im) = table.get(row).map(|e| e.plateaus()).unwrap_or((f64::NAN, f64::NAN));
        if !(ex <= eps && im <= eps) {
            problems.push(format!("{} at {ex:.2e}/{im:.2e}", row.label()));
        }
    }
    let (fe, fi) = table.get(AblationRow::FullDynamics).map(|e| e.plateaus()).unwrap_or((0.0, 0.0));
    if !(fe > eps && fi > eps) {
        problems.push(format!("Full Dynamics at {fe:.2e}/{fi:.2e}"));
    }
    let csv = ablation_csv_string(&table);
    let shape_ok = table.entries.len() == 10
        && csv.lines().count() == 11
        && csv.lines().all(|l| l.split(',').count() == 3);
    if !shape_ok {
        problems.push("table is not 10 x 2".into());
    }
    if secs >= 600.0 {
        problems.push(format!("took {secs:.0} s"));
    }
    outcome(
        problems.is_empty(),
        format!(
            "64x64x3, 10 rows x 2 schemes, Full Dynamics {fe:.2e}/{fi:.2e}, {secs:.0} s{}",
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------------------
// sweeps on a 32x32x2 basin

fn sweep_base() -> ExperimentConfig {
    ExperimentConfig { grid: GridSpec { nx: 32, ny: 32, nz: 2, ..GridSpec::default() }, ..ExperimentConfig::default() }
}

struct SweepSetup {
    cfg: ExperimentConfig,
    grid: Grid,
    spun: LayeredState,
}

fn run(setup: &SweepSetup, cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepTable, String> {
    run_sweep(cfg, &setup.grid, &setup.spun, axis, values).map_err(|e| e.to_string())
}

fn mu_sweep_and_control(setup: &SweepSetup) -> (Outcome, Outcome) {
    let table = match run(setup, &setup.cfg, SweepAxis::Mu, &[0.0, 1e-6, 1e-5, 1e-4]) {
        Ok(t) => t,
        Err(e) => return (fail(&e), fail(&e)),
    };
    let min_ke: Vec<f64> = table.runs.iter().map(|r| r.series.min_rms_ke()).collect();
    let (small, mid, large) = (min_ke[1], min_ke[2], min_ke[3]);
    let mono = outcome(
        large <= mid && mid <= small && small >= 2.0 * large,
        format!("min rms_ke at mu = 1e-6, 1e-5, 1e-4: {small:.3e}, {mid:.3e}, {large:.3e} (extremes differ by {:.1}x)", small / large),
    );
    let control = &table.runs[0].series;
    let e0 = control.rms_ke[0];
    let lowest = control.min_rms_ke();
    let ctl = outcome(
        lowest >= 0.1 * e0,
        format!("mu = 0 over {:.0} days: initial rms_ke {e0:.3e}, lowest {lowest:.3e} ({:.0}% of initial)", setup.cfg.reference_duration / DAY, 100.0 * lowest / e0),
    );
    (mono, ctl)
}

fn tracer_benefit(setup: &SweepSetup) -> Outcome {
    let table = tryo!(run(setup, &setup.cfg, SweepAxis::Tracers, &[0.0, 1.0]));
    let (off, on) = (&table.runs[0].series, &table.runs[1].series);
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, f) in [("rms_ke", ErrorField::Ke), ("rms_theta", ErrorField::Theta), ("rms_sal", ErrorField::Sal)] {
        let (a, b) = (off.plateau(f), on.plateau(f));
        pass &= a >= 1.5 * b;
        parts.push(format!("{name} {a:.3e} -> {b:.3e} ({:.1}x)", a / b));
    }
    outcome(pass, format!("mu = {:e}: {}", setup.cfg.assim.mu, parts.join(", ")))
}

fn delta_sweep(setup: &SweepSetup) -> Outcome {
    let mut cfg = setup.cfg.clone();
    cfg.assim.mu = 1e-4;
    cfg.reference_duration = 10.0 * DAY;
    let table = tryo!(run(setup, &cfg, SweepAxis::Delta, &[0.0, 1.0, 2.0, 3.0]));
    let rates: Vec<f64> = table.runs.iter().map(|r| r.series.decay_rate(ErrorField::Ke)).collect();
    let ordered = rates.windows(2).all(|w| w[0] >= w[1]) && rates[3] < rates[0] && rates[3] < rates[1] && rates[3] < rates[2];
    let rejected = sweep_config(&cfg.assim, SweepAxis::Delta, 4.0).is_err()
        && build_obs_mask(&setup.grid, 4, None, cfg.assim.delta_max).is_err();
    outcome(
        ordered && rejected,
        format!(
            "decay rates (1/s) for delta 0..3: {:.3e}, {:.3e}, {:.3e}, {:.3e}; delta = 4 rejected: {rejected}",
            rates[0], rates[1], rates[2], rates[3]
        ),
    )
}

fn dt_obs_insensitivity(setup: &SweepSetup) -> Outcome {
    let table = tryo!(run(setup, &setup.cfg, SweepAxis::DtObs, &[3.0 * 3600.0, 6.0 * 3600.0, 12.0 * 3600.0]));
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, f) in [("rms_ke", ErrorField::Ke), ("rms_vel", ErrorField::Vel)] {
        let p: Vec<f64> = table.runs.iter().map(|r| r.series.plateau(f)).collect();
        let hi = p.iter().copied().fold(0.0, f64::max);
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        pass &= hi < 3.0 * lo;
        parts.push(format!("{name} {:.3e}/{:.3e}/{:.3e} (spread {:.2}x)", p[0], p[1], p[2], hi / lo));
    }
    outcome(pass, format!("dt_obs = 3 h/6 h/12 h: {}", parts.join(", ")))
}

fn dt_robustness(setup: &SweepSetup) -> Outcome {
    let dt0 = setup.cfg.assim.dt;
    let values = [dt0, dt0 / 2.0, dt0 / 4.0];
    let fixed = tryo!(run(setup, &setup.cfg, SweepAxis::Dt, &values));
    let p: Vec<f64> = fixed.runs.iter().map(|r| r.series.plateau(ErrorField::Ke)).collect();
    let hi = p.iter().copied().fold(0.0, f64::max);
    let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
    let mut scaled_cfg = setup.cfg.clone();
    scaled_cfg.assim.mu_scaling = MuScaling::Mu0OverDt { mu0: setup.cfg.assim.mu * dt0 };
    let scaled = tryo!(run(setup, &scaled_cfg, SweepAxis::Dt, &values[2..]));
    let ps = scaled.runs[0].series.plateau(ErrorField::Ke);
    let stable = scaled.runs[0].series.rms_ke.iter().all(|x| x.is_finite());
    outcome(
        hi < 3.0 * lo && stable && ps <= p[2],
        format!(
            "fixed mu plateau rms_ke at dt, dt/2, dt/4: {:.3e}/{:.3e}/{:.3e} (spread {:.2}x); mu0/dt at dt/4: {ps:.3e}",
            p[0], p[1], p[2], hi / lo
        ),
    )
}

// ---------------------------------------------------------------------------

fn conservation_and_oracles() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // volume on a doubly periodic domain under full physics
    let g = tryo!(GridSpec { nx: 16, ny: 16, nz: 3, mask: MaskSpec::AllOcean, periodic_y: true, ..GridSpec::default() }.build());
    let cfg = ExperimentConfig::default();
    let mut s = noisy_state(&g, 0.3, 7);
    let mut stepper = Stepper::free(&g, cfg.physics.clone(), cfg.assim.dt);
    let volume = |s: &LayeredState| s.h.iter().sum::<f64>();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let v0 = volume(&s);
        s = tryo!(stepper.step(&s));
        worst = worst.max(((volume(&s) - v0) / v0).abs());
    }
    pass &= worst <= 1e-13;
    notes.push(format!("volume drift {worst:.1e}/step"));

    // flood fill on a five-cell strip observed at both ends
    let mut m = vec![false; 20];
    m[..5].iter_mut().for_each(|x| *x = true);
    let strip = tryo!(GridSpec {
        nx: 5,
        ny: 4,
        nz: 1,
        mask: MaskSpec::Custom(m),
        depth: DepthSpec::Flat(100.0),
        periodic_x: false,
        periodic_y: false,
        ..GridSpec::default()
    }
    .build());
    let mut sel = vec![false; 20];
    sel[0] = true;
    sel[4] = true;
    let mask = tryo!(ObsMask::from_selected(&strip, sel.clone()));
    let mut obs = vec![0.0; 20];
    obs[4] = 4.0;
    let filled = tryo!(flood_fill(&strip, &mask, &obs));
    let plan = tryo!(FillPlan::new(20, &strip.mask, &sel, |c| strip.neighbor_cells(c), 0));
    let strip_ok = filled[..5] == [0.0, 0.0, 2.0, 4.0, 4.0] && plan.iteration[..5] == [0, 1, 2, 1, 0];
    pass &= strip_ok;
    notes.push(format!("strip fill {:?}", &filled[..5]));

    // linearity of the full observe/interpolate pipeline
    let basin = tryo!(GridSpec { nx: 20, ny: 16, nz: 2, ..GridSpec::default() }.build());
    let interp = tryo!(Interpolator::new(&basin, tryo!(build_obs_mask(&basin, 2, None, 3)), ObsMode::Center, 2));
    let x = noisy_state(&basin, 1.0, 1);
    let y = noisy_state(&basin, 1.0, 2);
    let (a, b) = (1.75, -0.5);
    let mut z = x.clone();
    for (zf, (xf, yf)) in [&mut z.u, &mut z.v, &mut z.theta, &mut z.sal]
        .into_iter()
        .zip([(&x.u, &y.u), (&x.v, &y.v), (&x.theta, &y.theta), (&x.sal, &y.sal)])
    {
        for (zi, (xi, yi)) in zf.iter_mut().zip(xf.iter().zip(yf.iter())) {
            *zi = a * xi + b * yi;
        }
    }
    let (ix, iy, iz) = (interp.interpolate(&interp.observe(&x, &basin)), interp.interpolate(&interp.observe(&y, &basin)), interp.interpolate(&interp.observe(&z, &basin)));
    let mut lin = 0.0f64;
    for (fz, (fx, fy)) in [(&iz.u, (&ix.u, &iy.u)), (&iz.v, (&ix.v, &iy.v)), (&iz.theta, (&ix.theta, &iy.theta)), (&iz.sal, (&ix.sal, &iy.sal))] {
        for (zi, (xi, yi)) in fz.iter().zip(fx.iter().zip(fy.iter())) {
            let want = a * xi + b * yi;
            lin = lin.max((zi - want).abs() / (1.0 + want.abs()));
        }
    }
    pass &= lin <= 1e-14;
    notes.push(format!("linearity defect {lin:.1e}"));

    // discrete Laplacian eigenfunctions
    let per = tryo!(GridSpec { nx: 16, ny: 16, nz: 1, mask: MaskSpec::AllOcean, periodic_y: true, ..GridSpec::default() }.build());
    let mut st = LayeredState::at_rest(&per, 10.0, 35.0);
    let (mx, my) = (3.0, 2.0);
    let two_pi = 2.0 * std::f64::consts::PI;
    for c in 0..per.ncell() {
        let (i, j) = per.ij(c);
        st.u[c] = (two_pi * mx * i as f64 / 16.0).sin();
        st.theta[c] = 10.0 + (two_pi * my * j as f64 / 16.0).cos();
    }
    let mut phys = PhysicsConfig::no_dynamics();
    phys.horizontal_mixing = true;
    phys.tracer_horizontal_mixing = true;
    let (du, _) = momentum_tendency(&st, &phys, &per);
    let (_, dth, _) = scalar_tendency(&st, &phys, &per);
    let lam_u = phys.nu_h * 4.0 / (per.dx * per.dx) * (std::f64::consts::PI * mx / 16.0).sin().powi(2);
    let lam_t = phys.kappa_h * 4.0 / (per.dy * per.dy) * (std::f64::consts::PI * my / 16.0).sin().powi(2);
    let mut eig = 0.0f64;
    for c in 0..per.ncell() {
        eig = eig.max((du[c] + lam_u * st.u[c]).abs() / lam_u);
        eig = eig.max((dth[c] + lam_t * (st.theta[c] - 10.0)).abs() / lam_t);
    }
    pass &= eig <= 1e-12;
    notes.push(format!("eigenvalue defect {eig:.1e}"));

    // a full campaign repeated from scratch gives identical output
    let small = ExperimentConfig {
        grid: GridSpec { nx: 16, ny: 16, nz: 2, ..GridSpec::default() },
        spinup_duration: 4.0 * DAY,
        spinup_ke_window: DAY,
        spinup_ke_tolerance: 10.0,
        reference_duration: 2.0 * DAY,
        ..ExperimentConfig::default()
    };
    let campaign = || -> Result<String, String> {
        let g = small.build_grid().map_err(|e| e.to_string())?;
        let spun = spin_up(&small, &g).map_err(|e| e.to_string())?;
        let t = run_sweep(&small, &g, &spun, SweepAxis::Delta, &[0.0, 1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
        let mut out = sweep_csv_string(&t);
        for r in &t.runs {
            out.push_str(&error_csv_string(&r.series));
        }
        Ok(out)
    };
    let (first, second) = (tryo!(campaign()), tryo!(campaign()));
    let same = first == second;
    pass &= same;
    notes.push(format!("sweep re-run identical: {same} ({} bytes)", first.len()));

    outcome(pass, notes.join("; "))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let report = |name: &'static str, o: Outcome, results: &mut Vec<(&str, Outcome)>| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    report("static-state convergence", static_state_convergence(), &mut results);
    report("stability boundary", stability_boundary(), &mut results);
    report("conservation and oracle suite", conservation_and_oracles(), &mut results);

    let cfg = sweep_base();
    let setup = cfg.build_grid().map_err(|e| e.to_string()).and_then(|grid| {
        let spun = spin_up(&cfg, &grid).map_err(|e| e.to_string())?;
        Ok(SweepSetup { cfg: cfg.clone(), grid, spun })
    });
    match setup {
        Ok(setup) => {
            let (mono, control) = mu_sweep_and_control(&setup);
            report("mu monotonicity", mono, &mut results);
            report("control run", control, &mut results);
            report("tracer nudging benefit", tracer_benefit(&setup), &mut results);
            report("delta sweep", delta_sweep(&setup), &mut results);
            report("dt_obs insensitivity", dt_obs_insensitivity(&setup), &mut results);
            report("dt robustness", dt_robustness(&setup), &mut results);
        }
        Err(e) => {
            for name in ["mu monotonicity", "control run", "tracer nudging benefit", "delta sweep", "dt_obs insensitivity", "dt robustness"] {
                report(name, fail(format!("spin-up failed: {e}")), &mut results);
            }
        }
    }
    report("ablation", ablation(), &mut results);

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} of {} checks passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
