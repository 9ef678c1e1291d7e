//! Pure-nudging checks of the time steppers.
//!
//! With every physics term switched off and a reference fixed at rest, the
//! nudged velocity obeys a scalar recurrence: the explicit scheme multiplies
//! the error by `1 - mu*dt` each step and the semi-implicit scheme divides it
//! by `1 + mu*dt`. The functions here run the full stepper on that problem
//! and compare against the closed forms.

use crate::assimilation::{AssimError, AssimilationConfig, Scheme, Stepper};
use crate::experiment::rms_face_error;
use crate::grid::Grid;
use crate::interpolant::{build_obs_mask, ObsMode};
use crate::observations::ObservationStore;
use crate::physics::{LayeredState, PhysicsConfig};

/// Per-step velocity error of a pure-nudging run.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticRun {
    pub scheme: Scheme,
    pub mu: f64,
    pub dt: f64,
    /// `rms_vel[n]` is the error after `n` steps; entry 0 is the initial error.
    pub rms_vel: Vec<f64>,
}

impl StaticRun {
    /// Per-step amplification predicted by the recurrence.
    pub fn factor(&self) -> f64 {
        let a = self.mu * self.dt;
        match self.scheme {
            Scheme::Explicit => 1.0 - a,
            Scheme::SemiImplicit => 1.0 / (1.0 + a),
        }
    }

    /// Largest relative deviation from `e0 * |factor|^n` over all steps.
    pub fn max_closed_form_error(&self) -> f64 {
        let e0 = self.rms_vel[0];
        let f = self.factor().abs();
        self.rms_vel
            .iter()
            .enumerate()
            .map(|(n, e)| {
                let want = e0 * f.powi(n as i32);
                ((e - want) / want).abs()
            })
            .fold(0.0, f64::max)
    }

    /// First step at which the error is at or below `tol`.
    pub fn steps_to(&self, tol: f64) -> Option<usize> {
        self.rms_vel.iter().position(|&e| e <= tol)
    }

    /// Ratios `e[n+1] / e[n]`.
    pub fn growth_factors(&self) -> Vec<f64> {
        self.rms_vel.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Velocity pattern used as the initial error: order-one values on every
/// open face, varying smoothly across the domain.
pub fn static_initial_state(grid: &Grid) -> LayeredState {
    let mut s = LayeredState::at_rest(grid, 10.0, 35.0);
    let nc = grid.ncell();
    for (idx, u) in s.u.iter_mut().enumerate() {
        let (i, j) = grid.ij(idx % nc);
        *u = 1.0 + 0.5 * ((i as f64) * 0.37).sin() * ((j as f64) * 0.23).cos();
    }
    for (idx, v) in s.v.iter_mut().enumerate() {
        let (i, j) = grid.ij(idx % nc);
        *v = 0.5 - 0.25 * ((i as f64) * 0.11 + (j as f64) * 0.29).cos();
    }
    s.apply_mask(grid);
    s
}

/// Runs `steps` nudged steps with all physics off toward a reference at
/// rest, observed on every face at full resolution.
pub fn static_state_run(
    grid: &Grid,
    scheme: Scheme,
    mu: f64,
    dt: f64,
    steps: usize,
    override_stability: bool,
) -> Result<StaticRun, AssimError> {
    let physics = PhysicsConfig::no_dynamics();
    let window = dt * steps.max(1) as f64;
    let mask = build_obs_mask(grid, 0, None, crate::interpolant::DEFAULT_DELTA_MAX)?;
    let mut store = ObservationStore::new(grid, mask, ObsMode::Face, window, "static", false)?;
    let target = LayeredState::at_rest(grid, 10.0, 35.0);
    store.record_snapshot(0.0, &target, grid)?;
    store.record_snapshot(window, &target, grid)?;
    let cfg = AssimilationConfig {
        mu,
        dt,
        dt_obs: window,
        delta: 0,
        scheme,
        obs_mode: ObsMode::Face,
        nudge_tracers: false,
        override_stability,
        ..AssimilationConfig::default()
    };
    let mut stepper = Stepper::assimilating(grid, physics, cfg, &store)?;
    let mut state = static_initial_state(grid);
    let mut rms_vel = Vec::with_capacity(steps + 1);
    rms_vel.push(rms_face_error(&state, &target, grid));
    for _ in 0..steps {
        state = stepper.step(&state)?;
        rms_vel.push(rms_face_error(&state, &target, grid));
    }
    Ok(StaticRun { scheme, mu, dt, rms_vel })
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl std::fmt::Display for ValidationCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn check(name: &str, pass: bool, detail: String) -> ValidationCheck {
    ValidationCheck { name: name.to_string(), pass, detail }
}

fn run_check(name: &str, run: Result<StaticRun, AssimError>, f: impl FnOnce(&StaticRun) -> (bool, String)) -> ValidationCheck {
    match run {
        Ok(r) => {
            let (pass, detail) = f(&r);
            check(name, pass, detail)
        }
        Err(e) => check(name, false, format!("run failed: {e}")),
    }
}

/// Stepper validation on `grid`: closed-form decay for both schemes,
/// divergence beyond the explicit limit, rejection of unstable settings and
/// consistency across time steps.
pub fn validation_suite(grid: &Grid, dt: f64) -> Vec<ValidationCheck> {
    let mut out = Vec::new();

    let mu = 0.1 / dt;
    out.push(run_check("static state, explicit", static_state_run(grid, Scheme::Explicit, mu, dt, 400, false), |r| {
        let err = r.max_closed_form_error();
        let reached = r.steps_to(1e-14);
        (
            err <= 1e-12 && reached.is_some(),
            format!("mu*dt = 0.1, max relative error {err:.2e}, rms_vel <= 1e-14 after {reached:?} steps"),
        )
    }));

    let mu = 1.0 / dt;
    out.push(run_check(
        "static state, semi-implicit",
        static_state_run(grid, Scheme::SemiImplicit, mu, dt, 50, false),
        |r| {
            let err = r.max_closed_form_error();
            let reached = r.steps_to(1e-14);
            (
                err <= 1e-12 && reached.is_some(),
                format!("mu*dt = 1, max relative error {err:.2e}, rms_vel <= 1e-14 after {reached:?} steps"),
            )
        },
    ));

    let mu = 2.5 / dt;
    out.push(run_check(
        "explicit divergence beyond mu*dt = 2",
        static_state_run(grid, Scheme::Explicit, mu, dt, 20, true),
        |r| {
            let worst = r.growth_factors().iter().map(|g| (g - 1.5).abs()).fold(0.0, f64::max);
            (worst <= 1e-9, format!("mu*dt = 2.5, growth factor 1.5 to within {worst:.2e}"))
        },
    ));

    let rejected = AssimilationConfig { mu: 2.0 / dt, dt, dt_obs: dt, ..AssimilationConfig::default() }.validate();
    out.push(check(
        "explicit mu*dt >= 2 rejected",
        rejected.is_err(),
        match rejected {
            Err(e) => e.to_string(),
            Ok(()) => "accepted".to_string(),
        },
    ));

    let mu = 0.05 / dt;
    let horizon = 64.0 * dt;
    let exact = (-mu * horizon).exp();
    let mut worst = 0.0f64;
    let mut gaps = Vec::new();
    let mut failure = None;
    for div in [1.0, 2.0, 4.0] {
        let h = dt / div;
        match static_state_run(grid, Scheme::Explicit, mu, h, (horizon / h).round() as usize, false) {
            Ok(r) => {
                worst = worst.max(r.max_closed_form_error());
                gaps.push((r.rms_vel[r.rms_vel.len() - 1] / r.rms_vel[0] - exact).abs());
            }
            Err(e) => failure = Some(e.to_string()),
        }
    }
    out.push(match failure {
        Some(e) => check("dt sweep", false, format!("run failed: {e}")),
        None => check(
            "dt sweep",
            worst <= 1e-12 && gaps[1] < gaps[0] && gaps[2] < gaps[1],
            format!("dt, dt/2, dt/4: max relative error {worst:.2e}, distance to exp(-mu t) {:.2e} {:.2e} {:.2e}", gaps[0], gaps[1], gaps[2]),
        ),
    });

    let both: Vec<_> = [(Scheme::Explicit, 0.5), (Scheme::SemiImplicit, 0.5)]
        .into_iter()
        .map(|(s, a)| static_state_run(grid, s, a / dt, dt, 200, false))
        .collect();
    out.push(match (&both[0], &both[1]) {
        (Ok(e), Ok(i)) => {
            let (ee, ei) = (e.rms_vel[200], i.rms_vel[200]);
            check(
                "explicit and semi-implicit agree at equilibrium",
                ee <= 1e-14 && ei <= 1e-14,
                format!("mu*dt = 0.5, final rms_vel {ee:.2e} explicit, {ei:.2e} semi-implicit"),
            )
        }
        (Err(e), _) | (_, Err(e)) => check("explicit and semi-implicit agree at equilibrium", false, e.to_string()),
    });
    out
}
