//! AOT feedback control and the nudged time steppers.
//!
//! Feedback uses the split form `mu * (I(E u_ref) - I(u))`: the current
//! state is sampled on the observation mask and interpolated every step in
//! exactly the same way as the reference observations.

use thiserror::Error;

use crate::grid::Grid;
use crate::interpolant::{InterpError, InterpolatedFields, Interpolator, ObsMode, ObservedFields};
use crate::observations::{ObsError, ObservationStore};
use crate::physics::{momentum_tendency, scalar_tendency, LayeredState, PhysicsConfig, Tendency};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssimError {
    #[error("invalid assimilation config: {0}")]
    Invalid(String),
    #[error("stability check failed: {0}")]
    Unstable(String),
    #[error("layer {layer} thickness collapsed to {h} m at cell {cell}")]
    ThicknessCollapse { layer: usize, cell: usize, h: f64 },
    #[error("non-finite value after step at t = {t} s")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Obs(#[from] ObsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Explicit,
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuScaling {
    Constant,
    /// Gain `mu0 / dt`; `mu` is ignored.
    Mu0OverDt { mu0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssimilationConfig {
    /// Feedback gain (1/s).
    pub mu: f64,
    pub mu_scaling: MuScaling,
    /// Observation spacing in cells.
    pub delta: usize,
    pub delta_max: usize,
    /// Time between observation snapshots (s).
    pub dt_obs: f64,
    pub scheme: Scheme,
    pub nudge_tracers: bool,
    pub nudge_momentum: bool,
    /// Model time step (s).
    pub dt: f64,
    pub obs_mode: ObsMode,
    /// Jacobi smoothing sweeps after the flood fill.
    pub n_smooth: usize,
    /// Run even when the stability checks fail.
    pub override_stability: bool,
}

impl Default for AssimilationConfig {
    fn default() -> Self {
        Self {
            mu: 1.0e-5,
            mu_scaling: MuScaling::Constant,
            delta: 1,
            delta_max: crate::interpolant::DEFAULT_DELTA_MAX,
            dt_obs: 3.0 * 3600.0,
            scheme: Scheme::Explicit,
            nudge_tracers: false,
            nudge_momentum: true,
            dt: 60.0,
            obs_mode: ObsMode::Center,
            n_smooth: 0,
            override_stability: false,
        }
    }
}

impl AssimilationConfig {
    pub fn effective_mu(&self) -> f64 {
        match self.mu_scaling {
            MuScaling::Constant => self.mu,
            MuScaling::Mu0OverDt { mu0 } => mu0 / self.dt,
        }
    }

    /// Number of model steps between observation snapshots.
    pub fn steps_per_obs(&self) -> usize {
        (self.dt_obs / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), AssimError> {
        let bad = |m: String| Err(AssimError::Invalid(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0 (got {})", self.dt));
        }
        let mu = self.effective_mu();
        if !(mu >= 0.0 && mu.is_finite()) {
            return bad(format!("mu must be >= 0 (got {mu})"));
        }
        if let MuScaling::Mu0OverDt { mu0 } = self.mu_scaling {
            if !(mu0 >= 0.0 && mu0.is_finite()) {
                return bad(format!("mu0 must be >= 0 (got {mu0})"));
            }
        }
        let ratio = self.dt_obs / self.dt;
        if !(self.dt_obs > 0.0) || ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad(format!("dt_obs = {} must be a positive integer multiple of dt = {}", self.dt_obs, self.dt));
        }
        if self.delta > self.delta_max {
            return bad(format!("delta = {} exceeds delta_max = {}", self.delta, self.delta_max));
        }
        if self.scheme == Scheme::Explicit && mu * self.dt >= 2.0 && !self.override_stability {
            return bad(format!("explicit scheme requires mu*dt < 2 (mu*dt = {})", mu * self.dt));
        }
        Ok(())
    }
}

/// One line of a [`StabilityReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCheck {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub checks: Vec<StabilityCheck>,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&StabilityCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

impl std::fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            let verdict = if c.pass { "ok" } else { "FAIL" };
            writeln!(f, "{:<24} {:>12.5e} limit {:>12.5e} {verdict}", c.name, c.value, c.limit)?;
        }
        Ok(())
    }
}

/// Time-step limits of the nudging term, gravity waves and lateral mixing.
pub fn check_stability(cfg: &AssimilationConfig, grid: &Grid, physics: &PhysicsConfig) -> StabilityReport {
    let mut checks = Vec::new();
    if cfg.scheme == Scheme::Explicit {
        let v = cfg.effective_mu() * cfg.dt;
        checks.push(StabilityCheck { name: "mu*dt", value: v, limit: 2.0, pass: v < 2.0 });
    }
    let dmin = grid.dx.min(grid.dy);
    let c = (physics.g * grid.max_depth()).sqrt();
    let gw = if c > 0.0 { dmin / c } else { f64::INFINITY };
    checks.push(StabilityCheck { name: "dt (gravity wave)", value: cfg.dt, limit: gw, pass: cfg.dt <= gw });
    if physics.horizontal_mixing && physics.nu_h > 0.0 {
        let lim = dmin * dmin / (4.0 * physics.nu_h);
        checks.push(StabilityCheck { name: "dt (viscosity)", value: cfg.dt, limit: lim, pass: cfg.dt <= lim });
    }
    StabilityReport { checks }
}

/// `mu * (reference - current)` component-wise.
pub fn feedback_momentum(mu: f64, reference: &[f64], current: &[f64]) -> Vec<f64> {
    reference.iter().zip(current).map(|(r, c)| mu * (r - c)).collect()
}

/// Thickness-weighted tracer feedback `h * mu * (reference - current)`.
/// Dividing by `h` gives the induced tracer rate of change.
pub fn feedback_tracer(mu: f64, h: &[f64], reference: &[f64], current: &[f64]) -> Vec<f64> {
    h.iter()
        .zip(reference.iter().zip(current))
        .map(|(h, (r, c))| h * mu * (r - c))
        .collect()
}

/// Active index sets for faces and cells.
#[derive(Debug, Clone)]
struct Points {
    u: Vec<usize>,
    v: Vec<usize>,
    c: Vec<usize>,
}

impl Points {
    fn new(grid: &Grid) -> Self {
        let nc = grid.ncell();
        let mut p = Points { u: Vec::new(), v: Vec::new(), c: Vec::new() };
        for k in 0..grid.nz {
            for c in 0..nc {
                let i = k * nc + c;
                if grid.u_open(c) {
                    p.u.push(i);
                }
                if grid.v_open(c) {
                    p.v.push(i);
                }
                if grid.is_ocean(c) {
                    p.c.push(i);
                }
            }
        }
        p
    }
}

#[derive(Clone, Copy)]
struct Nudge<'a> {
    mu: f64,
    reference: &'a [f64],
    current: &'a [f64],
}

fn advance(out: &mut [f64], old: &[f64], tend: &[f64], nudge: Option<Nudge>, dt: f64, scheme: Scheme, idx: &[usize]) {
    match (nudge, scheme) {
        (None, _) => {
            for &i in idx {
                out[i] = old[i] + dt * tend[i];
            }
        }
        (Some(n), Scheme::Explicit) => {
            for &i in idx {
                out[i] = old[i] + dt * (tend[i] + n.mu * (n.reference[i] - n.current[i]));
            }
        }
        (Some(n), Scheme::SemiImplicit) => {
            let denom = 1.0 + n.mu * dt;
            for &i in idx {
                let target = n.reference[i] + (old[i] - n.current[i]);
                out[i] = (old[i] + dt * (tend[i] + n.mu * target)) / denom;
            }
        }
    }
}

fn check_thickness(state: &LayeredState, grid: &Grid) -> Result<(), AssimError> {
    let nc = grid.ncell();
    for k in 0..grid.nz {
        for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
            let h = state.h[k * nc + c];
            if !(h > 0.0) {
                return Err(AssimError::ThicknessCollapse { layer: k, cell: c, h });
            }
        }
    }
    Ok(())
}

/// Forward Euler step `new = old + dt * (tendency + feedback)` on ocean
/// points; `feedback.dtheta`/`dsal` are tracer rates (already divided by
/// `h`), `feedback.dh` is ignored.
pub fn step_explicit(
    state: &LayeredState,
    tendency: &Tendency,
    feedback: &Tendency,
    dt: f64,
    grid: &Grid,
) -> Result<LayeredState, AssimError> {
    let p = Points::new(grid);
    let mut new = state.clone();
    let sum = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
    advance(&mut new.u, &state.u, &sum(&tendency.du, &feedback.du), None, dt, Scheme::Explicit, &p.u);
    advance(&mut new.v, &state.v, &sum(&tendency.dv, &feedback.dv), None, dt, Scheme::Explicit, &p.v);
    advance(&mut new.h, &state.h, &tendency.dh, None, dt, Scheme::Explicit, &p.c);
    advance(&mut new.theta, &state.theta, &sum(&tendency.dtheta, &feedback.dtheta), None, dt, Scheme::Explicit, &p.c);
    advance(&mut new.sal, &state.sal, &sum(&tendency.dsal, &feedback.dsal), None, dt, Scheme::Explicit, &p.c);
    new.t = state.t + dt;
    check_thickness(&new, grid)?;
    Ok(new)
}

/// Which fields are nudged and toward what, for [`step_semi_implicit`].
#[derive(Debug, Clone, Copy)]
pub struct Nudging<'a> {
    pub mu: f64,
    /// `I(E u_ref)` and `I(E phi_ref)`.
    pub reference: &'a InterpolatedFields,
    /// `I(u)` and `I(phi)` of the current state.
    pub current: &'a InterpolatedFields,
    pub momentum: bool,
    pub tracers: bool,
}

/// Predictor-corrector step: the `-mu * u` part of the feedback is implicit,
/// the reference part explicit. Nudged fields obey
/// `new = (old + dt * (T + mu * (I(E u_ref) + old - I(old)))) / (1 + mu * dt)`,
/// which at full observation density is
/// `(old + dt * (T + mu * I(E u_ref))) / (1 + mu * dt)`.
pub fn step_semi_implicit<'a>(
    state: &LayeredState,
    tendency: &Tendency,
    nudging: &Nudging<'a>,
    dt: f64,
    grid: &Grid,
) -> Result<LayeredState, AssimError> {
    let p = Points::new(grid);
    let mut new = state.clone();
    let (r, c) = (nudging.reference, nudging.current);
    let nd = |on: bool, reference: &'a [f64], current: &'a [f64]| {
        on.then_some(Nudge { mu: nudging.mu, reference, current })
    };
    let m = nudging.momentum;
    let t = nudging.tracers;
    let si = Scheme::SemiImplicit;
    advance(&mut new.u, &state.u, &tendency.du, nd(m, &r.u, &c.u), dt, si, &p.u);
    advance(&mut new.v, &state.v, &tendency.dv, nd(m, &r.v, &c.v), dt, si, &p.v);
    advance(&mut new.theta, &state.theta, &tendency.dtheta, nd(t, &r.theta, &c.theta), dt, si, &p.c);
    advance(&mut new.sal, &state.sal, &tendency.dsal, nd(t, &r.sal, &c.sal), dt, si, &p.c);
    advance(&mut new.h, &state.h, &tendency.dh, None, dt, Scheme::Explicit, &p.c);
    new.t = state.t + dt;
    check_thickness(&new, grid)?;
    Ok(new)
}

/// `I(E_dt_obs u_ref)` at arbitrary times, caching the interpolated
/// bracketing snapshots (the operator is linear, so blending interpolated
/// snapshots equals interpolating blended ones).
struct ReferenceFeed<'a> {
    store: &'a ObservationStore,
    interp: Interpolator,
    cached: Vec<(usize, InterpolatedFields)>,
    scratch: ObservedFields,
}

impl<'a> ReferenceFeed<'a> {
    fn snapshot(&mut self, n: usize) -> Result<&InterpolatedFields, AssimError> {
        if let Some(pos) = self.cached.iter().position(|(m, _)| *m == n) {
            return Ok(&self.cached[pos].1);
        }
        self.store.temporal_interp_into(self.store.times[n], &mut self.scratch)?;
        let fields = self.interp.interpolate(&self.scratch);
        if self.cached.len() >= 2 {
            self.cached.remove(0);
        }
        self.cached.push((n, fields));
        Ok(&self.cached.last().unwrap().1)
    }

    fn at(&mut self, t: f64, out: &mut InterpolatedFields) -> Result<(), AssimError> {
        let start = self.store.start().unwrap_or(f64::NAN);
        let end = self.store.end().unwrap_or(f64::NAN);
        let tol = 1e-9 * self.store.dt_obs;
        if !(t >= start - tol && t <= end + tol) {
            return Err(ObsError::OutOfRange { t, start, end }.into());
        }
        let last = self.store.len() - 1;
        let s = ((t - start) / self.store.dt_obs).clamp(0.0, last as f64);
        let mut n = s.floor() as usize;
        let mut w = s - n as f64;
        if w > 1.0 - 1e-9 {
            n += 1;
            w = 0.0;
        }
        if w < 1e-9 || n >= last {
            let a = self.snapshot(n.min(last))?;
            copy_fields(a, out);
            return Ok(());
        }
        let b = self.snapshot(n + 1)?.clone();
        let a = self.snapshot(n)?;
        for (o, (x, y)) in [
            (&mut out.u, (&a.u, &b.u)),
            (&mut out.v, (&a.v, &b.v)),
            (&mut out.theta, (&a.theta, &b.theta)),
            (&mut out.sal, (&a.sal, &b.sal)),
        ] {
            for ((o, x), y) in o.iter_mut().zip(x).zip(y) {
                *o = (1.0 - w) * x + w * y;
            }
        }
        Ok(())
    }
}

fn copy_fields(a: &InterpolatedFields, out: &mut InterpolatedFields) {
    out.u.copy_from_slice(&a.u);
    out.v.copy_from_slice(&a.v);
    out.theta.copy_from_slice(&a.theta);
    out.sal.copy_from_slice(&a.sal);
}

/// Time stepper for free and assimilated runs.
///
/// Each step first advances thickness and tracers from the old state, then
/// evaluates the momentum tendency with the updated thickness and tracers
/// (forward-backward ordering, needed for free-surface gravity waves).
/// Feedback for every field uses the old state and the reference at the old
/// time.
pub struct Stepper<'a> {
    grid: &'a Grid,
    physics: PhysicsConfig,
    cfg: AssimilationConfig,
    points: Points,
    feed: Option<ReferenceFeed<'a>>,
    reference: InterpolatedFields,
    current: InterpolatedFields,
    observed: ObservedFields,
}

impl<'a> Stepper<'a> {
    /// Free run (no feedback term at all).
    pub fn free(grid: &'a Grid, physics: PhysicsConfig, dt: f64) -> Self {
        let cfg = AssimilationConfig { mu: 0.0, dt, ..AssimilationConfig::default() };
        Self::build(grid, physics, cfg, None)
    }

    /// Assimilating run fed by `store`. The stability contract is enforced
    /// unless `cfg.override_stability` is set.
    pub fn assimilating(
        grid: &'a Grid,
        physics: PhysicsConfig,
        cfg: AssimilationConfig,
        store: &'a ObservationStore,
    ) -> Result<Self, AssimError> {
        cfg.validate()?;
        store.check_grid(grid)?;
        if store.mode != cfg.obs_mode {
            return Err(AssimError::Invalid("observation mode differs from the store".into()));
        }
        if !cfg.override_stability {
            let report = check_stability(&cfg, grid, &physics);
            if !report.passed() {
                let names: Vec<_> = report.failures().iter().map(|c| c.name).collect();
                return Err(AssimError::Unstable(names.join(", ")));
            }
        }
        let interp = Interpolator::new(grid, store.mask.clone(), cfg.obs_mode, cfg.n_smooth)?;
        let len = grid.nz * grid.ncell();
        let feed = ReferenceFeed { store, interp, cached: Vec::new(), scratch: ObservedFields::zeros(len) };
        Ok(Self::build(grid, physics, cfg, Some(feed)))
    }

    fn build(grid: &'a Grid, physics: PhysicsConfig, cfg: AssimilationConfig, feed: Option<ReferenceFeed<'a>>) -> Self {
        let len = grid.nz * grid.ncell();
        let zero = || InterpolatedFields {
            u: vec![0.0; len],
            v: vec![0.0; len],
            theta: vec![0.0; len],
            sal: vec![0.0; len],
        };
        Self {
            grid,
            physics,
            cfg,
            points: Points::new(grid),
            feed,
            reference: zero(),
            current: zero(),
            observed: ObservedFields::zeros(len),
        }
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    pub fn config(&self) -> &AssimilationConfig {
        &self.cfg
    }

    /// Advance one model step.
    pub fn step(&mut self, state: &LayeredState) -> Result<LayeredState, AssimError> {
        let dt = self.cfg.dt;
        let mu = self.cfg.effective_mu();
        let scheme = self.cfg.scheme;
        let (grid, physics) = (self.grid, &self.physics);
        let nudge_m = self.feed.is_some() && self.cfg.nudge_momentum;
        let nudge_t = self.feed.is_some() && self.cfg.nudge_tracers;
        if let Some(feed) = self.feed.as_mut() {
            if nudge_m || nudge_t {
                let t_ref = match scheme {
                    Scheme::Explicit => state.t,
                    Scheme::SemiImplicit => state.t + dt,
                };
                feed.at(t_ref, &mut self.reference)?;
                feed.interp.observe_into(state, grid, &mut self.observed);
                if nudge_t {
                    feed.interp.interpolate_tracers_into(&self.observed, &mut self.current.theta, &mut self.current.sal);
                }
                if nudge_m {
                    feed.interp.interpolate_velocity_into(&self.observed, &mut self.current.u, &mut self.current.v);
                }
            }
        }
        let mut new = state.clone();
        let (dh, dth, dsa) = scalar_tendency(state, physics, grid);
        advance(&mut new.h, &state.h, &dh, None, dt, scheme, &self.points.c);
        let (rt, ct) = (&self.reference, &self.current);
        advance(
            &mut new.theta,
            &state.theta,
            &dth,
            nudge_t.then(|| nudge_of(mu, &rt.theta, &ct.theta)),
            dt,
            scheme,
            &self.points.c,
        );
        advance(
            &mut new.sal,
            &state.sal,
            &dsa,
            nudge_t.then(|| nudge_of(mu, &rt.sal, &ct.sal)),
            dt,
            scheme,
            &self.points.c,
        );

        let (du, dv) = momentum_tendency(&new, physics, grid);
        advance(&mut new.u, &state.u, &du, nudge_m.then(|| nudge_of(mu, &rt.u, &ct.u)), dt, scheme, &self.points.u);
        advance(&mut new.v, &state.v, &dv, nudge_m.then(|| nudge_of(mu, &rt.v, &ct.v)), dt, scheme, &self.points.v);
        new.t = state.t + dt;
        check_thickness(&new, grid)?;
        if !new.is_finite() {
            return Err(AssimError::NonFinite { t: new.t });
        }
        Ok(new)
    }
}

fn nudge_of<'b>(mu: f64, reference: &'b [f64], current: &'b [f64]) -> Nudge<'b> {
    Nudge { mu, reference, current }
}
