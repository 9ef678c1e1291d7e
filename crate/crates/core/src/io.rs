//! File formats: the flat key-value configuration, binary state snapshots,
//! error-series and campaign CSVs, and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::assimilation::{MuScaling, Scheme};
use crate::experiment::{AblationTable, ErrorField, ErrorSeries, ExperimentConfig, SweepTable};
use crate::grid::{DepthSpec, Grid, MaskSpec};
use crate::interpolant::ObsMode;
use crate::physics::LayeredState;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a snapshot file (bad magic bytes {0:?})")]
    BadMagic([u8; 4]),
    #[error("snapshot format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("snapshot truncated: needed {needed} bytes, found {found}")]
    TruncatedFile { needed: usize, found: usize },
    #[error("state does not match grid: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("unexpected CSV header {found:?} (expected {expected:?})")]
    Schema { expected: String, found: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// configuration

fn parse_f64(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got '{v}'"))
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("expected a non-negative integer, got '{v}'"))
}

fn parse_u64(v: &str) -> Result<u64, String> {
    v.parse::<u64>().map_err(|_| format!("expected a non-negative integer, got '{v}'"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got '{v}'")),
    }
}

fn fmt_f64(v: &f64) -> String {
    format!("{v:?}")
}

fn fmt_usize(v: &usize) -> String {
    v.to_string()
}

fn fmt_u64(v: &u64) -> String {
    v.to_string()
}

fn fmt_bool(v: &bool) -> String {
    v.to_string()
}

fn parse_mask(v: &str) -> Result<MaskSpec, String> {
    let (kind, arg) = v.split_once(':').unwrap_or((v, ""));
    match kind {
        "all_ocean" if arg.is_empty() => Ok(MaskSpec::AllOcean),
        "basin" => Ok(MaskSpec::RectangularBasin { border: parse_usize(arg)? }),
        "procedural" => Ok(MaskSpec::Procedural { seed: parse_u64(arg)? }),
        "custom" => arg
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(format!("custom mask must be a string of 0 and 1, found '{c}'")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(MaskSpec::Custom),
        _ => Err(format!("unknown mask '{v}' (expected all_ocean, basin:N, procedural:SEED or custom:BITS)")),
    }
}

fn fmt_mask(m: &MaskSpec) -> String {
    match m {
        MaskSpec::AllOcean => "all_ocean".into(),
        MaskSpec::RectangularBasin { border } => format!("basin:{border}"),
        MaskSpec::Procedural { seed } => format!("procedural:{seed}"),
        MaskSpec::Custom(bits) => {
            let s: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
            format!("custom:{s}")
        }
    }
}

fn parse_depth(v: &str) -> Result<DepthSpec, String> {
    let parts: Vec<&str> = v.split(':').collect();
    match parts.as_slice() {
        ["flat", h] => Ok(DepthSpec::Flat(parse_f64(h)?)),
        ["ridge", lo, hi] => Ok(DepthSpec::Ridge { h_min: parse_f64(lo)?, h_max: parse_f64(hi)? }),
        _ => Err(format!("unknown depth '{v}' (expected flat:H or ridge:HMIN:HMAX)")),
    }
}

fn fmt_depth(d: &DepthSpec) -> String {
    match d {
        DepthSpec::Flat(h) => format!("flat:{h:?}"),
        DepthSpec::Ridge { h_min, h_max } => format!("ridge:{h_min:?}:{h_max:?}"),
    }
}

fn parse_scheme(v: &str) -> Result<Scheme, String> {
    match v {
        "explicit" => Ok(Scheme::Explicit),
        "semi_implicit" => Ok(Scheme::SemiImplicit),
        _ => Err(format!("unknown scheme '{v}' (expected explicit or semi_implicit)")),
    }
}

fn fmt_scheme(s: &Scheme) -> String {
    match s {
        Scheme::Explicit => "explicit".into(),
        Scheme::SemiImplicit => "semi_implicit".into(),
    }
}

fn parse_obs_mode(v: &str) -> Result<ObsMode, String> {
    match v {
        "center" => Ok(ObsMode::Center),
        "face" => Ok(ObsMode::Face),
        _ => Err(format!("unknown observation mode '{v}' (expected center or face)")),
    }
}

fn fmt_obs_mode(m: &ObsMode) -> String {
    match m {
        ObsMode::Center => "center".into(),
        ObsMode::Face => "face".into(),
    }
}

fn parse_mu_scaling(v: &str) -> Result<MuScaling, String> {
    match v.split_once(':') {
        None if v == "constant" => Ok(MuScaling::Constant),
        Some(("mu0_over_dt", mu0)) => Ok(MuScaling::Mu0OverDt { mu0: parse_f64(mu0)? }),
        _ => Err(format!("unknown mu scaling '{v}' (expected constant or mu0_over_dt:MU0)")),
    }
}

fn fmt_mu_scaling(m: &MuScaling) -> String {
    match m {
        MuScaling::Constant => "constant".into(),
        MuScaling::Mu0OverDt { mu0 } => format!("mu0_over_dt:{mu0:?}"),
    }
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+ : $parse:ident, $fmt:ident;)*) => {
        /// Every accepted configuration key, in echo order.
        pub const CONFIG_KEYS: &[&str] = &[$($key),*];

        fn set_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), String> {
            match key {
                $($key => cfg.$($field).+ = $parse(value)?,)*
                _ => return Err(format!("unknown key '{key}'")),
            }
            Ok(())
        }

        fn echo_pairs(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
            vec![$(($key, $fmt(&cfg.$($field).+))),*]
        }
    };
}

config_keys! {
    "grid.nx" => grid.nx: parse_usize, fmt_usize;
    "grid.ny" => grid.ny: parse_usize, fmt_usize;
    "grid.nz" => grid.nz: parse_usize, fmt_usize;
    "grid.dx" => grid.dx: parse_f64, fmt_f64;
    "grid.dy" => grid.dy: parse_f64, fmt_f64;
    "grid.mask" => grid.mask: parse_mask, fmt_mask;
    "grid.depth" => grid.depth: parse_depth, fmt_depth;
    "grid.periodic_x" => grid.periodic_x: parse_bool, fmt_bool;
    "grid.periodic_y" => grid.periodic_y: parse_bool, fmt_bool;

    "physics.coriolis" => physics.coriolis: parse_bool, fmt_bool;
    "physics.pressure_gradient" => physics.pressure_gradient: parse_bool, fmt_bool;
    "physics.ke_gradient_and_relative_vorticity" => physics.ke_gradient_and_relative_vorticity: parse_bool, fmt_bool;
    "physics.vertical_advection" => physics.vertical_advection: parse_bool, fmt_bool;
    "physics.horizontal_mixing" => physics.horizontal_mixing: parse_bool, fmt_bool;
    "physics.vertical_mixing" => physics.vertical_mixing: parse_bool, fmt_bool;
    "physics.bottom_drag" => physics.bottom_drag: parse_bool, fmt_bool;
    "physics.surface_stress" => physics.surface_stress: parse_bool, fmt_bool;
    "physics.topographic_wave_drag" => physics.topographic_wave_drag: parse_bool, fmt_bool;
    "physics.tracer_horizontal_mixing" => physics.tracer_horizontal_mixing: parse_bool, fmt_bool;
    "physics.tracer_vertical_mixing" => physics.tracer_vertical_mixing: parse_bool, fmt_bool;
    "physics.tracer_forcing" => physics.tracer_forcing: parse_bool, fmt_bool;
    "physics.momentum_forcing" => physics.momentum_forcing: parse_bool, fmt_bool;
    "physics.thickness_advection" => physics.thickness_advection: parse_bool, fmt_bool;
    "physics.tracer_advection" => physics.tracer_advection: parse_bool, fmt_bool;
    "physics.f0" => physics.f0: parse_f64, fmt_f64;
    "physics.beta" => physics.beta: parse_f64, fmt_f64;
    "physics.nu_h" => physics.nu_h: parse_f64, fmt_f64;
    "physics.nu_v" => physics.nu_v: parse_f64, fmt_f64;
    "physics.kappa_h" => physics.kappa_h: parse_f64, fmt_f64;
    "physics.kappa_v" => physics.kappa_v: parse_f64, fmt_f64;
    "physics.c_drag" => physics.c_drag: parse_f64, fmt_f64;
    "physics.tau_wind" => physics.tau_wind: parse_f64, fmt_f64;
    "physics.r_twd" => physics.r_twd: parse_f64, fmt_f64;
    "physics.g" => physics.g: parse_f64, fmt_f64;
    "physics.rho0" => physics.rho0: parse_f64, fmt_f64;
    "physics.alpha_t" => physics.alpha_t: parse_f64, fmt_f64;
    "physics.beta_s" => physics.beta_s: parse_f64, fmt_f64;
    "physics.theta_ref" => physics.theta_ref: parse_f64, fmt_f64;
    "physics.sal_ref" => physics.sal_ref: parse_f64, fmt_f64;
    "physics.p_surface" => physics.p_surface: parse_f64, fmt_f64;
    "physics.tracer_restore_rate" => physics.tracer_restore_rate: parse_f64, fmt_f64;
    "physics.theta_restore_south" => physics.theta_restore_south: parse_f64, fmt_f64;
    "physics.theta_restore_north" => physics.theta_restore_north: parse_f64, fmt_f64;
    "physics.sal_restore_south" => physics.sal_restore_south: parse_f64, fmt_f64;
    "physics.sal_restore_north" => physics.sal_restore_north: parse_f64, fmt_f64;

    "assim.mu" => assim.mu: parse_f64, fmt_f64;
    "assim.mu_scaling" => assim.mu_scaling: parse_mu_scaling, fmt_mu_scaling;
    "assim.delta" => assim.delta: parse_usize, fmt_usize;
    "assim.delta_max" => assim.delta_max: parse_usize, fmt_usize;
    "assim.dt_obs" => assim.dt_obs: parse_f64, fmt_f64;
    "assim.scheme" => assim.scheme: parse_scheme, fmt_scheme;
    "assim.nudge_tracers" => assim.nudge_tracers: parse_bool, fmt_bool;
    "assim.nudge_momentum" => assim.nudge_momentum: parse_bool, fmt_bool;
    "assim.dt" => assim.dt: parse_f64, fmt_f64;
    "assim.obs_mode" => assim.obs_mode: parse_obs_mode, fmt_obs_mode;
    "assim.n_smooth" => assim.n_smooth: parse_usize, fmt_usize;
    "assim.override_stability" => assim.override_stability: parse_bool, fmt_bool;

    "experiment.spinup_duration" => spinup_duration: parse_f64, fmt_f64;
    "experiment.spinup_ke_window" => spinup_ke_window: parse_f64, fmt_f64;
    "experiment.spinup_ke_tolerance" => spinup_ke_tolerance: parse_f64, fmt_f64;
    "experiment.reference_duration" => reference_duration: parse_f64, fmt_f64;
    "experiment.error_output_interval" => error_output_interval: parse_f64, fmt_f64;
    "experiment.seed" => seed: parse_u64, fmt_u64;
    "experiment.init_velocity_noise" => init_velocity_noise: parse_f64, fmt_f64;
    "experiment.init_layer_dtheta" => init_layer_dtheta: parse_f64, fmt_f64;

    "ablation.duration" => ablation.duration: parse_f64, fmt_f64;
    "ablation.mu_explicit" => ablation.mu_explicit: parse_f64, fmt_f64;
    "ablation.mu_implicit" => ablation.mu_implicit: parse_f64, fmt_f64;
    "ablation.error_output_interval" => ablation.error_output_interval: parse_f64, fmt_f64;
}

/// Parses `section.key = value` lines over the defaults without validating.
pub fn parse_config_unchecked(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ConfigError::Parse { line, message };
        let (key, value) = content.split_once('=').ok_or_else(|| err("expected 'key = value'".into()))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(err(format!("missing value for '{key}'")));
        }
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key '{key}'")));
        }
        set_key(&mut cfg, key, value).map_err(err)?;
    }
    Ok(cfg)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg = parse_config_unchecked(text)?;
    validate_config(&cfg)?;
    Ok(cfg)
}

/// Checks every invariant of the nested configs, including that the grid
/// can be built.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    cfg.validate().map_err(|e| ConfigError::Validation(e.to_string()))?;
    cfg.build_grid().map_err(|e| ConfigError::Validation(e.to_string()))?;
    Ok(())
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let cfg = read_config_unchecked(path)?;
    validate_config(&cfg)?;
    Ok(cfg)
}

/// Reads and parses a config file, leaving validation to the caller.
pub fn read_config_unchecked(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_unchecked(&text)
}

/// The fully resolved configuration as a config document. Parsing the
/// result yields `cfg` again.
pub fn config_echo(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    for (k, v) in echo_pairs(cfg) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

// ---------------------------------------------------------------------------
// snapshots

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"NOCN";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Contents of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    /// Ocean cells in row-major order.
    pub mask: Vec<bool>,
    pub state: LayeredState,
}

/// Serializes `state` on `grid`. Fields follow the header in the order
/// u, v, h, theta, sal, each layer-major and row-major within a layer, as
/// little-endian f64; the land mask follows as packed bits, least
/// significant bit first.
pub fn encode_snapshot(grid: &Grid, state: &LayeredState) -> Result<Vec<u8>, SnapshotError> {
    let len = grid.nz * grid.ncell();
    for (name, f) in [("u", &state.u), ("v", &state.v), ("h", &state.h), ("theta", &state.theta), ("sal", &state.sal)] {
        if f.len() != len {
            return Err(SnapshotError::Shape(format!("{name} has {} entries, grid needs {len}", f.len())));
        }
    }
    let mut out = Vec::with_capacity(48 + 5 * 8 * len + grid.ncell() / 8 + 1);
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    for n in [grid.nx, grid.ny, grid.nz] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for x in [grid.dx, grid.dy, state.t] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for f in [&state.u, &state.v, &state.h, &state.theta, &state.sal] {
        for x in f.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut packed = vec![0u8; grid.ncell().div_ceil(8)];
    for (c, &ocean) in grid.mask.iter().enumerate() {
        if ocean {
            packed[c / 8] |= 1 << (c % 8);
        }
    }
    out.extend_from_slice(&packed);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], SnapshotError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(SnapshotError::TruncatedFile { needed: end, found: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, SnapshotError> {
        let raw = self.take(n * 8)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<SnapshotFile, SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if magic != SNAPSHOT_MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::VersionMismatch { found: version, expected: SNAPSHOT_VERSION });
    }
    let (nx, ny, nz) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let (dx, dy, t) = (r.f64()?, r.f64()?, r.f64()?);
    let len = nx * ny * nz;
    let u = r.f64s(len)?;
    let v = r.f64s(len)?;
    let h = r.f64s(len)?;
    let theta = r.f64s(len)?;
    let sal = r.f64s(len)?;
    let packed = r.take((nx * ny).div_ceil(8))?;
    let mask = (0..nx * ny).map(|c| packed[c / 8] >> (c % 8) & 1 == 1).collect();
    Ok(SnapshotFile { nx, ny, nz, dx, dy, mask, state: LayeredState { u, v, h, theta, sal, t } })
}

pub fn write_snapshot(path: &Path, grid: &Grid, state: &LayeredState) -> Result<(), SnapshotError> {
    fs::write(path, encode_snapshot(grid, state)?)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotFile, SnapshotError> {
    decode_snapshot(&fs::read(path)?)
}

/// Reads a snapshot and checks that it was written on `grid`.
pub fn read_snapshot_for(path: &Path, grid: &Grid) -> Result<LayeredState, SnapshotError> {
    let s = read_snapshot(path)?;
    if (s.nx, s.ny, s.nz) != (grid.nx, grid.ny, grid.nz) || s.dx != grid.dx || s.dy != grid.dy || s.mask != grid.mask {
        return Err(SnapshotError::Shape(format!(
            "snapshot is {}x{}x{} (dx {}, dy {}), grid is {}x{}x{} (dx {}, dy {}) or masks differ",
            s.nx, s.ny, s.nz, s.dx, s.dy, grid.nx, grid.ny, grid.nz, grid.dx, grid.dy
        )));
    }
    Ok(s.state)
}

// ---------------------------------------------------------------------------
// CSV

pub const ERROR_CSV_HEADER: &str = "t_seconds,rms_ke,rms_vel,rms_theta,rms_sal";
pub const ABLATION_CSV_HEADER: &str = "row,explicit,implicit";
pub const SWEEP_CSV_HEADER: &str =
    "axis,value,min_rms_ke,plateau_rms_ke,plateau_rms_vel,plateau_rms_theta,plateau_rms_sal,decay_rate_ke,file";

/// 17 significant digits: enough to recover every f64 exactly.
pub fn fmt_sci(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn error_csv_string(series: &ErrorSeries) -> String {
    let mut out = String::with_capacity(90 * (series.len() + 1));
    out.push_str(ERROR_CSV_HEADER);
    out.push('\n');
    for i in 0..series.len() {
        let row = [series.times[i], series.rms_ke[i], series.rms_vel[i], series.rms_theta[i], series.rms_sal[i]];
        let cells: Vec<String> = row.iter().map(|&x| fmt_sci(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_error_csv(path: &Path, series: &ErrorSeries) -> Result<(), CsvError> {
    let mut f = fs::File::create(path)?;
    f.write_all(error_csv_string(series).as_bytes())?;
    Ok(())
}

pub fn parse_error_csv(text: &str) -> Result<ErrorSeries, CsvError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != ERROR_CSV_HEADER {
        return Err(CsvError::Schema { expected: ERROR_CSV_HEADER.into(), found: header.into() });
    }
    let mut s = ErrorSeries::default();
    for (n, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CsvError::Parse { line: n + 2, message: e.to_string() })?;
        if vals.len() != 5 {
            return Err(CsvError::Parse { line: n + 2, message: format!("expected 5 columns, found {}", vals.len()) });
        }
        s.times.push(vals[0]);
        s.rms_ke.push(vals[1]);
        s.rms_vel.push(vals[2]);
        s.rms_theta.push(vals[3]);
        s.rms_sal.push(vals[4]);
    }
    Ok(s)
}

pub fn read_error_csv(path: &Path) -> Result<ErrorSeries, CsvError> {
    parse_error_csv(&fs::read_to_string(path)?)
}

/// One line per ablation row with the plateau `rms_vel` of each scheme.
pub fn ablation_csv_string(table: &AblationTable) -> String {
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for e in &table.entries {
        let (ex, im) = e.plateaus();
        let _ = writeln!(out, "{},{},{}", e.row.label(), fmt_sci(ex), fmt_sci(im));
    }
    out
}

pub fn write_ablation_csv(path: &Path, table: &AblationTable) -> Result<(), CsvError> {
    fs::write(path, ablation_csv_string(table))?;
    Ok(())
}

/// File name of the error series for sweep value number `index`.
pub fn sweep_series_name(table: &SweepTable, index: usize) -> String {
    format!("sweep_{}_{index}.csv", table.axis.name())
}

/// Summary of a sweep: one line per value with the plateau diagnostics and
/// the name of the corresponding error-series file.
pub fn sweep_csv_string(table: &SweepTable) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for (i, r) in table.runs.iter().enumerate() {
        let s = &r.series;
        let nums = [
            r.value,
            s.min_rms_ke(),
            s.plateau(ErrorField::Ke),
            s.plateau(ErrorField::Vel),
            s.plateau(ErrorField::Theta),
            s.plateau(ErrorField::Sal),
            s.decay_rate(ErrorField::Ke),
        ];
        let cells: Vec<String> = nums.iter().map(|&x| fmt_sci(x)).collect();
        let _ = writeln!(out, "{},{},{}", table.axis.name(), cells.join(","), sweep_series_name(table, i));
    }
    out
}

/// Writes the per-value error series and the summary; returns the file
/// names relative to `dir`, summary last.
pub fn write_sweep(dir: &Path, table: &SweepTable) -> Result<Vec<String>, CsvError> {
    let mut names = Vec::with_capacity(table.runs.len() + 1);
    for (i, r) in table.runs.iter().enumerate() {
        let name = sweep_series_name(table, i);
        write_error_csv(&dir.join(&name), &r.series)?;
        names.push(name);
    }
    let summary = format!("sweep_{}_summary.csv", table.axis.name());
    fs::write(dir.join(&summary), sweep_csv_string(table))?;
    names.push(summary);
    Ok(names)
}

// ---------------------------------------------------------------------------
// manifest

pub const MANIFEST_NAME: &str = "manifest.txt";

/// Provenance record written alongside every run's output.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub grid_hash: u64,
    /// Seconds since the Unix epoch; the only line that differs between
    /// otherwise identical runs.
    pub timestamp: u64,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, grid: &Grid, files: Vec<String>) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            grid_hash: grid.hash(),
            timestamp,
            config: cfg.clone(),
            files,
        }
    }

    /// The config section is itself a valid config document, so the
    /// manifest can be fed back to `--config` after stripping the rest.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# run manifest");
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "version = {}", self.version);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "grid_hash = {:016x}", self.grid_hash);
        let _ = writeln!(out, "timestamp = {}", self.timestamp);
        let _ = writeln!(out, "[config]");
        out.push_str(&config_echo(&self.config));
        let _ = writeln!(out, "[files]");
        for f in &self.files {
            let _ = writeln!(out, "{f}");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::write(dir.join(MANIFEST_NAME), self.render())
    }
}

/// Config document embedded in a rendered manifest.
pub fn manifest_config_section(text: &str) -> Option<&str> {
    let start = text.find("[config]\n")? + "[config]\n".len();
    let end = text[start..].find("[files]")? + start;
    Some(&text[start..end])
}

/// File list of a rendered manifest.
pub fn manifest_files(text: &str) -> Vec<String> {
    match text.find("[files]\n") {
        Some(i) => text[i + "[files]\n".len()..].lines().map(str::to_string).collect(),
        None => Vec::new(),
    }
}
