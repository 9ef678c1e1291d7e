//! Identical-twin experiments: spin-up, reference run with observation
//! recording, the assimilating twin, error diagnostics, and the ablation and
//! parameter-sweep campaigns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::assimilation::{AssimError, AssimilationConfig, MuScaling, Scheme, Stepper};
use crate::grid::{Grid, GridError, GridSpec};
use crate::interpolant::{build_obs_mask, InterpError, ObsMode};
use crate::observations::{ObsError, ObservationStore};
use crate::physics::{kinetic_energy, LayeredState, PhysicsConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Invalid(String),
    #[error("kinetic energy did not stabilize within {duration} s (last relative drift {drift:.3e})")]
    NoEquilibrium { duration: f64, drift: f64 },
    #[error("field shapes differ ({0} vs {1} entries)")]
    ShapeMismatch(usize, usize),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Assim(#[from] AssimError),
    #[error(transparent)]
    Obs(#[from] ObsError),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Settings specific to the term-toggle ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationSettings {
    /// Length of each reference/twin window (s).
    pub duration: f64,
    pub mu_explicit: f64,
    pub mu_implicit: f64,
    pub error_output_interval: f64,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self { duration: 86400.0, mu_explicit: 1.0e-3, mu_implicit: 10.0, error_output_interval: 600.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub physics: PhysicsConfig,
    pub assim: AssimilationConfig,
    /// Upper bound on the spin-up length (s).
    pub spinup_duration: f64,
    /// Length of the averaging windows compared by the stabilization test (s).
    pub spinup_ke_window: f64,
    /// Largest accepted relative change of window-mean kinetic energy.
    pub spinup_ke_tolerance: f64,
    /// Length of the reference run and of the observation window (s).
    pub reference_duration: f64,
    pub error_output_interval: f64,
    pub seed: u64,
    /// Amplitude of the random initial velocity perturbation (m/s).
    pub init_velocity_noise: f64,
    /// Temperature drop per layer in the initial stratification (degC).
    pub init_layer_dtheta: f64,
    pub ablation: AblationSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            physics: PhysicsConfig::default(),
            assim: AssimilationConfig::default(),
            spinup_duration: 120.0 * 86400.0,
            spinup_ke_window: 5.0 * 86400.0,
            spinup_ke_tolerance: 0.1,
            reference_duration: 20.0 * 86400.0,
            error_output_interval: 3600.0,
            seed: 42,
            init_velocity_noise: 0.05,
            init_layer_dtheta: 8.0,
            ablation: AblationSettings::default(),
        }
    }
}

fn is_multiple(a: f64, b: f64) -> bool {
    let r = a / b;
    r.is_finite() && (r - r.round()).abs() <= 1e-9 * r.max(1.0)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Invalid(m));
        self.physics.validate().map_err(ExperimentError::Invalid)?;
        self.assim.validate()?;
        let dt = self.assim.dt;
        for (name, v) in [
            ("spinup_duration", self.spinup_duration),
            ("spinup_ke_window", self.spinup_ke_window),
            ("error_output_interval", self.error_output_interval),
            ("ablation.duration", self.ablation.duration),
            ("ablation.error_output_interval", self.ablation.error_output_interval),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0 (got {v})"));
            }
        }
        if !(self.reference_duration >= 0.0) {
            return bad(format!("reference_duration must be >= 0 (got {})", self.reference_duration));
        }
        if !is_multiple(self.error_output_interval, dt) {
            return bad(format!("error_output_interval must be a multiple of dt = {dt}"));
        }
        if !is_multiple(self.reference_duration, self.assim.dt_obs) {
            return bad("reference_duration must be a multiple of dt_obs".into());
        }
        if !is_multiple(self.ablation.duration, dt) || !is_multiple(self.ablation.error_output_interval, dt) {
            return bad("ablation durations must be multiples of dt".into());
        }
        if !(self.spinup_ke_tolerance > 0.0) {
            return bad("spinup_ke_tolerance must be > 0".into());
        }
        if !(self.init_velocity_noise >= 0.0) {
            return bad("init_velocity_noise must be >= 0".into());
        }
        if !(self.ablation.mu_explicit * dt < 2.0) {
            return bad(format!("ablation explicit scheme requires mu*dt < 2 (mu*dt = {})", self.ablation.mu_explicit * dt));
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Ok(self.grid.build()?)
    }

    /// Whether error diagnostics need full-field copies of the reference.
    pub fn needs_full_fields(&self) -> bool {
        self.assim.delta > 0 || self.assim.obs_mode == ObsMode::Center
    }
}

/// Top-layer restoring targets at meridional position `y`.
pub fn restoring_profile(cfg: &PhysicsConfig, y: f64, ly: f64) -> (f64, f64) {
    let s = (y / ly).clamp(0.0, 1.0);
    (
        cfg.theta_restore_south + s * (cfg.theta_restore_north - cfg.theta_restore_south),
        cfg.sal_restore_south + s * (cfg.sal_restore_north - cfg.sal_restore_south),
    )
}

/// Stratified resting state with the top layer at its restoring profile,
/// colder layers below, and seeded random velocity noise.
pub fn initial_state(cfg: &ExperimentConfig, grid: &Grid) -> LayeredState {
    let mut s = LayeredState::at_rest(grid, 0.0, 0.0);
    let nc = grid.ncell();
    let ly = grid.domain_height();
    for k in 0..grid.nz {
        for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
            let (_, j) = grid.ij(c);
            let (th, sa) = restoring_profile(&cfg.physics, grid.y_center(j), ly);
            s.theta[k * nc + c] = th - cfg.init_layer_dtheta * k as f64;
            s.sal[k * nc + c] = if k == 0 { sa } else { cfg.physics.sal_ref };
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = cfg.init_velocity_noise;
    for x in s.u.iter_mut().chain(s.v.iter_mut()) {
        let r: f64 = rng.gen_range(-1.0..1.0);
        *x = a * r;
    }
    s.apply_mask(grid);
    s
}

/// Mean kinetic energy per ocean cell and layer (m^2/s^2).
pub fn mean_kinetic_energy(state: &LayeredState, grid: &Grid) -> f64 {
    let ke = kinetic_energy(state, grid);
    let nc = grid.ncell();
    let mut sum = 0.0;
    let mut n = 0usize;
    for k in 0..grid.nz {
        for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
            sum += ke[k * nc + c];
            n += 1;
        }
    }
    sum / n as f64
}

fn steps_in(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

/// Free spin-up from [`initial_state`] until the window-mean kinetic energy
/// of two consecutive windows differs by less than the tolerance.
pub fn spin_up(cfg: &ExperimentConfig, grid: &Grid) -> Result<LayeredState> {
    spin_up_from(cfg, grid, initial_state(cfg, grid))
}

pub fn spin_up_from(cfg: &ExperimentConfig, grid: &Grid, mut state: LayeredState) -> Result<LayeredState> {
    let dt = cfg.assim.dt;
    let window = steps_in(cfg.spinup_ke_window, dt).max(1);
    let total = steps_in(cfg.spinup_duration, dt);
    let sample_every = (window / 24).max(1);
    let mut stepper = Stepper::free(grid, cfg.physics.clone(), dt);
    let mut previous: Option<f64> = None;
    let mut drift = f64::INFINITY;
    let (mut sum, mut count) = (0.0, 0usize);
    for n in 1..=total {
        state = stepper.step(&state)?;
        if n % sample_every == 0 {
            sum += mean_kinetic_energy(&state, grid);
            count += 1;
        }
        if n % window == 0 {
            let mean = sum / count.max(1) as f64;
            (sum, count) = (0.0, 0);
            if let Some(prev) = previous {
                let scale = prev.abs().max(mean.abs());
                drift = if scale == 0.0 { 0.0 } else { (mean - prev).abs() / scale };
                if drift < cfg.spinup_ke_tolerance {
                    return Ok(state);
                }
            }
            previous = Some(mean);
        }
    }
    Err(ExperimentError::NoEquilibrium { duration: cfg.spinup_duration, drift })
}

/// Free run of `duration` from `initial` (time reset to zero), recording
/// observations every `dt_obs`.
#[allow(clippy::too_many_arguments)]
pub fn record_reference(
    grid: &Grid,
    physics: &PhysicsConfig,
    dt: f64,
    dt_obs: f64,
    duration: f64,
    delta: usize,
    mode: ObsMode,
    keep_full: bool,
    initial: &LayeredState,
) -> Result<(LayeredState, ObservationStore)> {
    let mask = build_obs_mask(grid, delta, None, delta.max(crate::interpolant::DEFAULT_DELTA_MAX))?;
    let mut store = ObservationStore::new(grid, mask, mode, dt_obs, "reference", keep_full)?;
    let mut state = initial.clone();
    state.t = 0.0;
    store.record_snapshot(0.0, &state, grid)?;
    let per_obs = steps_in(dt_obs, dt).max(1);
    let nsteps = steps_in(duration, dt);
    let mut stepper = Stepper::free(grid, physics.clone(), dt);
    for n in 1..=nsteps {
        state = stepper.step(&state)?;
        if n % per_obs == 0 {
            store.record_snapshot(n as f64 * dt, &state, grid)?;
        }
    }
    Ok((state, store))
}

/// Reference run of `cfg.reference_duration` with the configured mask and
/// observation interval. The feedback gain plays no part here.
pub fn run_reference(
    cfg: &ExperimentConfig,
    grid: &Grid,
    initial: &LayeredState,
) -> Result<(LayeredState, ObservationStore)> {
    let a = &cfg.assim;
    record_reference(
        grid,
        &cfg.physics,
        a.dt,
        a.dt_obs,
        cfg.reference_duration,
        a.delta,
        a.obs_mode,
        cfg.needs_full_fields(),
        initial,
    )
}

/// Twin initial state: the reference final state moved back to the start of
/// the observation window.
pub fn init_twin(store: &ObservationStore, reference_final: &LayeredState) -> LayeredState {
    let mut s = reference_final.clone();
    s.t = store.start().unwrap_or(0.0);
    s
}

/// RMS error time series of a twin run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub rms_ke: Vec<f64>,
    pub rms_vel: Vec<f64>,
    pub rms_theta: Vec<f64>,
    pub rms_sal: Vec<f64>,
}

/// Which error component to summarize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorField {
    Ke,
    Vel,
    Theta,
    Sal,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn field(&self, f: ErrorField) -> &[f64] {
        match f {
            ErrorField::Ke => &self.rms_ke,
            ErrorField::Vel => &self.rms_vel,
            ErrorField::Theta => &self.rms_theta,
            ErrorField::Sal => &self.rms_sal,
        }
    }

    pub fn min_rms_ke(&self) -> f64 {
        self.rms_ke.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn plateau(&self, f: ErrorField) -> f64 {
        plateau(&self.times, self.field(f))
    }

    pub fn decay_rate(&self, f: ErrorField) -> f64 {
        decay_rate(&self.times, self.field(f))
    }

    /// Entries whose time falls on a multiple of `dt_obs`.
    pub fn at_snapshot_times(&self, dt_obs: f64) -> ErrorSeries {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| is_multiple(self.times[i], dt_obs) || self.times[i] == 0.0).collect();
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect();
        ErrorSeries {
            times: pick(&self.times),
            rms_ke: pick(&self.rms_ke),
            rms_vel: pick(&self.rms_vel),
            rms_theta: pick(&self.rms_theta),
            rms_sal: pick(&self.rms_sal),
        }
    }
}

fn final_third(times: &[f64]) -> usize {
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return 0;
    };
    let cut = t1 - (t1 - t0) / 3.0;
    times.iter().position(|&t| t >= cut).unwrap_or(0)
}

/// Median over the final third of the run.
pub fn plateau(times: &[f64], values: &[f64]) -> f64 {
    let start = final_third(times);
    let mut tail: Vec<f64> = values[start..].to_vec();
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.sort_by(f64::total_cmp);
    let m = tail.len();
    if m % 2 == 1 {
        tail[m / 2]
    } else {
        0.5 * (tail[m / 2 - 1] + tail[m / 2])
    }
}

/// Standard deviation of `log10(values)` over the final third.
pub fn plateau_log_std(times: &[f64], values: &[f64]) -> f64 {
    let logs: Vec<f64> = values[final_third(times)..].iter().map(|v| v.max(1e-300).log10()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Exponential decay rate (1/s) of the decay phase: least-squares slope of
/// `-ln(e)` over the samples before the final third, which is the window
/// [`plateau`] summarizes. Every series of the same length is fitted over
/// the same window, so rates are comparable across a sweep.
pub fn decay_rate(times: &[f64], values: &[f64]) -> f64 {
    let end = final_third(times).min(values.len());
    if end < 2 {
        return 0.0;
    }
    let pts: Vec<(f64, f64)> = (0..end).map(|i| (times[i], values[i].max(1e-300).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        -sxy / sxx
    }
}

/// `sqrt(mean over ocean points of (a - b)^2)` for per-cell fields of one or
/// more layers.
pub fn rms_error(a: &[f64], b: &[f64], grid: &Grid) -> Result<f64> {
    let nc = grid.ncell();
    if a.len() != b.len() || a.is_empty() || a.len() % nc != 0 {
        return Err(ExperimentError::ShapeMismatch(a.len(), b.len()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if grid.is_ocean(i % nc) {
            sum += (x - y) * (x - y);
            n += 1;
        }
    }
    Ok((sum / n as f64).sqrt())
}

/// RMS velocity difference over all open faces.
pub fn rms_face_error(a: &LayeredState, b: &LayeredState, grid: &Grid) -> f64 {
    let nc = grid.ncell();
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..a.len() {
        let c = i % nc;
        if grid.u_open(c) {
            sum += (a.u[i] - b.u[i]).powi(2);
            n += 1;
        }
        if grid.v_open(c) {
            sum += (a.v[i] - b.v[i]).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Reference fields at `t` for error diagnostics: the full-field shadow
/// when kept, otherwise the observations themselves (valid only when every
/// ocean cell is observed on faces).
pub fn reference_fields(store: &ObservationStore, grid: &Grid, t: f64) -> Result<LayeredState> {
    if store.has_full_fields() {
        return Ok(store.full_state_at(t)?);
    }
    if store.mode != ObsMode::Face || store.mask.count() != grid.ocean_count() {
        return Err(ExperimentError::Invalid(
            "error diagnostics need full fields or face observations on every cell".into(),
        ));
    }
    let obs = store.temporal_interp(t)?;
    let mut s = LayeredState::zeros(grid);
    s.u = obs.u;
    s.v = obs.v;
    s.theta = obs.theta;
    s.sal = obs.sal;
    s.apply_mask(grid);
    s.t = t;
    Ok(s)
}

fn push_errors(series: &mut ErrorSeries, twin: &LayeredState, reference: &LayeredState, grid: &Grid) -> Result<()> {
    let ke_t = kinetic_energy(twin, grid);
    let ke_r = kinetic_energy(reference, grid);
    series.times.push(twin.t);
    series.rms_ke.push(rms_error(&ke_t, &ke_r, grid)?);
    series.rms_vel.push(rms_face_error(twin, reference, grid));
    series.rms_theta.push(rms_error(&twin.theta, &reference.theta, grid)?);
    series.rms_sal.push(rms_error(&twin.sal, &reference.sal, grid)?);
    Ok(())
}

/// Assimilating twin run over the whole store window; errors against the
/// stored reference every `error_output_interval`.
pub fn run_twin_with(
    grid: &Grid,
    physics: &PhysicsConfig,
    assim: &AssimilationConfig,
    error_output_interval: f64,
    store: &ObservationStore,
    twin_initial: &LayeredState,
) -> Result<ErrorSeries> {
    if (assim.dt_obs - store.dt_obs).abs() > 1e-9 * store.dt_obs {
        return Err(ExperimentError::Invalid(format!(
            "assimilation dt_obs {} differs from the store's {}",
            assim.dt_obs, store.dt_obs
        )));
    }
    let (Some(start), Some(end)) = (store.start(), store.end()) else {
        return Err(ExperimentError::Invalid("empty observation store".into()));
    };
    let dt = assim.dt;
    let nsteps = steps_in(end - start, dt);
    let every = steps_in(error_output_interval, dt).max(1);
    let mut stepper = Stepper::assimilating(grid, physics.clone(), assim.clone(), store)?;
    let mut state = twin_initial.clone();
    state.t = start;
    let mut series = ErrorSeries::default();
    push_errors(&mut series, &state, &reference_fields(store, grid, start)?, grid)?;
    for n in 1..=nsteps {
        state = stepper.step(&state)?;
        state.t = start + n as f64 * dt;
        if n % every == 0 || n == nsteps {
            push_errors(&mut series, &state, &reference_fields(store, grid, state.t)?, grid)?;
        }
    }
    Ok(series)
}

pub fn run_twin(
    cfg: &ExperimentConfig,
    grid: &Grid,
    store: &ObservationStore,
    twin_initial: &LayeredState,
) -> Result<ErrorSeries> {
    run_twin_with(grid, &cfg.physics, &cfg.assim, cfg.error_output_interval, store, twin_initial)
}

/// The ten physics configurations of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationRow {
    NoDynamics,
    FullDynamics,
    CoriolisOnly,
    BottomDragOnly,
    SurfaceStressOnly,
    TopographicWaveDragOnly,
    HorizontalMixingOnly,
    VerticalMixingOnly,
    VerticalAdvectionOnly,
    PressureGradientOnly,
}

impl AblationRow {
    pub const ALL: [AblationRow; 10] = [
        AblationRow::NoDynamics,
        AblationRow::FullDynamics,
        AblationRow::CoriolisOnly,
        AblationRow::BottomDragOnly,
        AblationRow::SurfaceStressOnly,
        AblationRow::TopographicWaveDragOnly,
        AblationRow::HorizontalMixingOnly,
        AblationRow::VerticalMixingOnly,
        AblationRow::VerticalAdvectionOnly,
        AblationRow::PressureGradientOnly,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationRow::NoDynamics => "No Dynamics",
            AblationRow::FullDynamics => "Full Dynamics",
            AblationRow::CoriolisOnly => "Coriolis Only",
            AblationRow::BottomDragOnly => "Bottom Drag Only",
            AblationRow::SurfaceStressOnly => "Surface Stress Only",
            AblationRow::TopographicWaveDragOnly => "Topographic Wave Drag Only",
            AblationRow::HorizontalMixingOnly => "Horizontal Mixing Only",
            AblationRow::VerticalMixingOnly => "Vertical Mixing Only",
            AblationRow::VerticalAdvectionOnly => "Vertical Advection Only",
            AblationRow::PressureGradientOnly => "Pressure Gradient Only",
        }
    }

    /// `base` with only this row's terms switched on.
    pub fn physics(self, base: &PhysicsConfig) -> PhysicsConfig {
        if self == AblationRow::FullDynamics {
            return base.clone().with_all_flags(true);
        }
        let mut p = base.clone().with_all_flags(false);
        match self {
            AblationRow::NoDynamics | AblationRow::FullDynamics => {}
            AblationRow::CoriolisOnly => p.coriolis = true,
            AblationRow::BottomDragOnly => p.bottom_drag = true,
            AblationRow::SurfaceStressOnly => p.surface_stress = true,
            AblationRow::TopographicWaveDragOnly => p.topographic_wave_drag = true,
            AblationRow::HorizontalMixingOnly => p.horizontal_mixing = true,
            AblationRow::VerticalMixingOnly => p.vertical_mixing = true,
            AblationRow::VerticalAdvectionOnly => p.vertical_advection = true,
            AblationRow::PressureGradientOnly => p.pressure_gradient = true,
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationEntry {
    pub row: AblationRow,
    pub explicit: ErrorSeries,
    pub implicit: ErrorSeries,
}

impl AblationEntry {
    /// Plateau `rms_vel` for `(explicit, semi-implicit)`.
    pub fn plateaus(&self) -> (f64, f64) {
        (self.explicit.plateau(ErrorField::Vel), self.implicit.plateau(ErrorField::Vel))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub entries: Vec<AblationEntry>,
}

impl AblationTable {
    pub fn get(&self, row: AblationRow) -> Option<&AblationEntry> {
        self.entries.iter().find(|e| e.row == row)
    }
}

/// Every ablation row under both schemes. References start from `spun_up`
/// and record face observations on every cell at every step; all twins
/// start from `twin_initial`.
pub fn run_ablation(
    cfg: &ExperimentConfig,
    grid: &Grid,
    spun_up: &LayeredState,
    twin_initial: &LayeredState,
) -> Result<AblationTable> {
    run_ablation_rows(cfg, grid, spun_up, twin_initial, &AblationRow::ALL)
}

pub fn run_ablation_rows(
    cfg: &ExperimentConfig,
    grid: &Grid,
    spun_up: &LayeredState,
    twin_initial: &LayeredState,
    rows: &[AblationRow],
) -> Result<AblationTable> {
    let dt = cfg.assim.dt;
    let set = &cfg.ablation;
    let mut entries = Vec::with_capacity(rows.len());
    for &row in rows {
        let physics = row.physics(&cfg.physics);
        let (_, store) = record_reference(grid, &physics, dt, dt, set.duration, 0, ObsMode::Face, false, spun_up)?;
        let run = |scheme: Scheme, mu: f64| {
            let assim = AssimilationConfig {
                mu,
                mu_scaling: MuScaling::Constant,
                delta: 0,
                dt_obs: dt,
                scheme,
                nudge_momentum: true,
                nudge_tracers: cfg.assim.nudge_tracers,
                obs_mode: ObsMode::Face,
                n_smooth: 0,
                ..cfg.assim.clone()
            };
            run_twin_with(grid, &physics, &assim, set.error_output_interval, &store, twin_initial)
        };
        let (explicit, implicit) =
            rayon::join(|| run(Scheme::Explicit, set.mu_explicit), || run(Scheme::SemiImplicit, set.mu_implicit));
        entries.push(AblationEntry { row, explicit: explicit?, implicit: implicit? });
    }
    Ok(AblationTable { entries })
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Mu,
    DtObs,
    Delta,
    Tracers,
    Dt,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Mu => "mu",
            SweepAxis::DtObs => "dt_obs",
            SweepAxis::Delta => "delta",
            SweepAxis::Tracers => "tracers",
            SweepAxis::Dt => "dt",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mu" => Ok(SweepAxis::Mu),
            "dt_obs" => Ok(SweepAxis::DtObs),
            "delta" => Ok(SweepAxis::Delta),
            "tracers" => Ok(SweepAxis::Tracers),
            "dt" => Ok(SweepAxis::Dt),
            other => Err(format!("unknown sweep axis '{other}' (expected mu, dt_obs, delta, tracers or dt)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub value: f64,
    pub series: ErrorSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub runs: Vec<SweepRun>,
}

/// Assimilation config for one sweep value.
pub fn sweep_config(base: &AssimilationConfig, axis: SweepAxis, value: f64) -> Result<AssimilationConfig> {
    let mut a = base.clone();
    let as_count = |v: f64, what: &str| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(ExperimentError::Invalid(format!("{what} value must be a non-negative integer (got {v})")))
        }
    };
    match axis {
        SweepAxis::Mu => {
            a.mu = value;
            a.mu_scaling = MuScaling::Constant;
        }
        SweepAxis::DtObs => a.dt_obs = value,
        SweepAxis::Delta => a.delta = as_count(value, "delta")?,
        SweepAxis::Tracers => a.nudge_tracers = as_count(value, "tracers")? != 0,
        SweepAxis::Dt => a.dt = value,
    }
    a.validate()?;
    Ok(a)
}

/// One twin run per value. References are shared wherever the value does
/// not change the reference trajectory: sparser masks are cut from a
/// full-density store and longer observation intervals are subsampled from
/// the shortest one; only the `dt` axis reruns the reference per value.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    grid: &Grid,
    spun_up: &LayeredState,
    axis: SweepAxis,
    values: &[f64],
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(ExperimentError::Invalid("sweep needs at least one value".into()));
    }
    let configs: Vec<AssimilationConfig> =
        values.iter().map(|&v| sweep_config(&cfg.assim, axis, v)).collect::<Result<_>>()?;
    let a = &cfg.assim;
    let keep_full = cfg.needs_full_fields() || axis == SweepAxis::Delta;
    let twin = |assim: &AssimilationConfig, store: &ObservationStore, init: &LayeredState| {
        run_twin_with(grid, &cfg.physics, assim, cfg.error_output_interval, store, init)
    };
    let series: Vec<Result<ErrorSeries>> = match axis {
        SweepAxis::Mu | SweepAxis::Tracers => {
            let (fin, store) = run_reference(cfg, grid, spun_up)?;
            let init = init_twin(&store, &fin);
            configs.par_iter().map(|c| twin(c, &store, &init)).collect()
        }
        SweepAxis::Delta => {
            let (fin, store) =
                record_reference(grid, &cfg.physics, a.dt, a.dt_obs, cfg.reference_duration, 0, a.obs_mode, keep_full, spun_up)?;
            let init = init_twin(&store, &fin);
            configs
                .par_iter()
                .map(|c| {
                    let mask = build_obs_mask(grid, c.delta, None, c.delta_max)?;
                    twin(c, &store.restrict(mask)?, &init)
                })
                .collect()
        }
        SweepAxis::DtObs => {
            let finest = values.iter().copied().fold(f64::INFINITY, f64::min);
            if let Some(v) = values.iter().find(|&&v| !is_multiple(v, finest)) {
                return Err(ExperimentError::Invalid(format!("dt_obs {v} is not a multiple of {finest}")));
            }
            if let Some(v) = values.iter().find(|&&v| !is_multiple(cfg.reference_duration, v)) {
                return Err(ExperimentError::Invalid(format!("reference_duration is not a multiple of dt_obs {v}")));
            }
            let (fin, store) = record_reference(
                grid,
                &cfg.physics,
                a.dt,
                finest,
                cfg.reference_duration,
                a.delta,
                a.obs_mode,
                keep_full,
                spun_up,
            )?;
            let init = init_twin(&store, &fin);
            configs
                .par_iter()
                .map(|c| twin(c, &store.subsample((c.dt_obs / finest).round() as usize), &init))
                .collect()
        }
        SweepAxis::Dt => configs
            .par_iter()
            .map(|c| {
                let (fin, store) = record_reference(
                    grid,
                    &cfg.physics,
                    c.dt,
                    c.dt_obs,
                    cfg.reference_duration,
                    c.delta,
                    c.obs_mode,
                    keep_full,
                    spun_up,
                )?;
                twin(c, &store, &init_twin(&store, &fin))
            })
            .collect(),
    };
    let runs = values
        .iter()
        .zip(series)
        .map(|(&value, s)| Ok(SweepRun { value, series: s? }))
        .collect::<Result<_>>()?;
    Ok(SweepTable { axis, runs })
}
