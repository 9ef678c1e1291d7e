//! Right-hand side of the layered primitive-equation analogue.
//!
//! The model is a z-level multilayer free-surface ocean on a C-grid: only the
//! top layer changes thickness, interior thicknesses are held fixed by the
//! diagnosed vertical transport `w`. Every tendency term is gated by its own
//! flag in [`PhysicsConfig`] so individual terms can be switched off.

mod diagnostics;
mod momentum;
mod scalars;

pub use diagnostics::{
    density, hydrostatic_pressure, kinetic_energy, layer_mid_depth, linear_eos, relative_vorticity,
    slope_factor, VerticalTransport, diagnose_vertical_transport,
};
pub use momentum::{momentum_tendency, MomentumTerm};
pub use scalars::{thickness_tendency, tracer_tendency};

use crate::grid::Grid;

/// Prognostic fields at one model time. All arrays have `nz * nx * ny`
/// entries, layer-major (`k * nx * ny + j * nx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredState {
    /// x-velocity on west faces (m/s)
    pub u: Vec<f64>,
    /// y-velocity on south faces (m/s)
    pub v: Vec<f64>,
    /// layer thickness (m)
    pub h: Vec<f64>,
    /// potential temperature (degC)
    pub theta: Vec<f64>,
    /// salinity (PSU)
    pub sal: Vec<f64>,
    /// model time (s)
    pub t: f64,
}

impl LayeredState {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.nz * grid.ncell();
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
            h: vec![0.0; n],
            theta: vec![0.0; n],
            sal: vec![0.0; n],
            t: 0.0,
        }
    }

    /// Motionless state with resting thicknesses and uniform tracers.
    pub fn at_rest(grid: &Grid, theta: f64, sal: f64) -> Self {
        let mut s = Self::zeros(grid);
        let nc = grid.ncell();
        for k in 0..grid.nz {
            for c in 0..nc {
                if grid.is_ocean(c) {
                    let idx = k * nc + c;
                    s.h[idx] = grid.rest_thickness(c, k);
                    s.theta[idx] = theta;
                    s.sal[idx] = sal;
                }
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Zero every field on land cells and closed faces.
    pub fn apply_mask(&mut self, grid: &Grid) {
        let nc = grid.ncell();
        for k in 0..grid.nz {
            for c in 0..nc {
                let idx = k * nc + c;
                if !grid.u_open(c) {
                    self.u[idx] = 0.0;
                }
                if !grid.v_open(c) {
                    self.v[idx] = 0.0;
                }
                if !grid.is_ocean(c) {
                    self.h[idx] = 0.0;
                    self.theta[idx] = 0.0;
                    self.sal[idx] = 0.0;
                }
            }
        }
    }

    /// Smallest layer thickness over ocean cells.
    pub fn min_thickness(&self, grid: &Grid) -> f64 {
        let nc = grid.ncell();
        let mut m = f64::INFINITY;
        for k in 0..grid.nz {
            for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
                m = m.min(self.h[k * nc + c]);
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        [&self.u, &self.v, &self.h, &self.theta, &self.sal]
            .iter()
            .all(|f| f.iter().all(|x| x.is_finite()))
    }
}

/// Time derivatives of the [`LayeredState`] fields (per second).
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub dh: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub dsal: Vec<f64>,
}

impl Tendency {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.nz * grid.ncell();
        Self {
            du: vec![0.0; n],
            dv: vec![0.0; n],
            dh: vec![0.0; n],
            dtheta: vec![0.0; n],
            dsal: vec![0.0; n],
        }
    }

    pub fn add_assign(&mut self, other: &Tendency) {
        for (a, b) in [
            (&mut self.du, &other.du),
            (&mut self.dv, &other.dv),
            (&mut self.dh, &other.dh),
            (&mut self.dtheta, &other.dtheta),
            (&mut self.dsal, &other.dsal),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }
}

/// Switches and coefficients for every tendency term.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsConfig {
    pub coriolis: bool,
    pub pressure_gradient: bool,
    /// Gradient of kinetic energy plus the relative-vorticity part of the
    /// absolute vorticity flux.
    pub ke_gradient_and_relative_vorticity: bool,
    /// `-w du/dz` in the momentum equation.
    pub vertical_advection: bool,
    pub horizontal_mixing: bool,
    pub vertical_mixing: bool,
    pub bottom_drag: bool,
    pub surface_stress: bool,
    pub topographic_wave_drag: bool,
    pub tracer_horizontal_mixing: bool,
    pub tracer_vertical_mixing: bool,
    pub tracer_forcing: bool,
    /// Momentum forcing. The only forcing is the surface wind stress, so this
    /// flag and `surface_stress` switch the same term.
    pub momentum_forcing: bool,
    /// Horizontal and vertical thickness transport (continuity equation).
    pub thickness_advection: bool,
    /// Flux-form tracer transport, horizontal and across layer interfaces.
    pub tracer_advection: bool,

    /// Coriolis parameter at mid-domain (1/s).
    pub f0: f64,
    /// Meridional Coriolis gradient (1/(m s)).
    pub beta: f64,
    pub nu_h: f64,
    pub nu_v: f64,
    pub kappa_h: f64,
    pub kappa_v: f64,
    /// Quadratic bottom drag coefficient.
    pub c_drag: f64,
    /// Zonal wind stress (N/m^2).
    pub tau_wind: f64,
    /// Base topographic drag rate (1/s).
    pub r_twd: f64,
    pub g: f64,
    pub rho0: f64,
    pub alpha_t: f64,
    pub beta_s: f64,
    pub theta_ref: f64,
    pub sal_ref: f64,
    /// Surface pressure (Pa); a constant cancels in the pressure gradient.
    pub p_surface: f64,
    /// Restoring rate of the top-layer tracers toward their targets (1/s).
    pub tracer_restore_rate: f64,
    /// Top-layer temperature target at the southern and northern edges.
    pub theta_restore_south: f64,
    pub theta_restore_north: f64,
    pub sal_restore_south: f64,
    pub sal_restore_north: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            coriolis: true,
            pressure_gradient: true,
            ke_gradient_and_relative_vorticity: true,
            vertical_advection: true,
            horizontal_mixing: true,
            vertical_mixing: true,
            bottom_drag: true,
            surface_stress: true,
            topographic_wave_drag: true,
            tracer_horizontal_mixing: true,
            tracer_vertical_mixing: true,
            tracer_forcing: true,
            momentum_forcing: true,
            thickness_advection: true,
            tracer_advection: true,
            f0: 5.0e-5,
            beta: 1.6e-11,
            nu_h: 1000.0,
            nu_v: 1.0e-3,
            kappa_h: 500.0,
            kappa_v: 1.0e-4,
            c_drag: 2.5e-3,
            tau_wind: 0.05,
            r_twd: 1.0e-6,
            g: 9.81,
            rho0: 1026.0,
            alpha_t: 2.0e-4,
            beta_s: 7.6e-4,
            theta_ref: 10.0,
            sal_ref: 35.0,
            p_surface: 0.0,
            tracer_restore_rate: 1.0 / (10.0 * 86400.0),
            theta_restore_south: 20.0,
            theta_restore_north: 10.0,
            sal_restore_south: 34.5,
            sal_restore_north: 35.5,
        }
    }
}

impl PhysicsConfig {
    /// Every term off; coefficients keep their defaults.
    pub fn no_dynamics() -> Self {
        Self::default().with_all_flags(false)
    }

    pub fn with_all_flags(mut self, on: bool) -> Self {
        for f in self.flags_mut() {
            *f = on;
        }
        self
    }

    fn flags_mut(&mut self) -> [&mut bool; 15] {
        [
            &mut self.coriolis,
            &mut self.pressure_gradient,
            &mut self.ke_gradient_and_relative_vorticity,
            &mut self.vertical_advection,
            &mut self.horizontal_mixing,
            &mut self.vertical_mixing,
            &mut self.bottom_drag,
            &mut self.surface_stress,
            &mut self.topographic_wave_drag,
            &mut self.tracer_horizontal_mixing,
            &mut self.tracer_vertical_mixing,
            &mut self.tracer_forcing,
            &mut self.momentum_forcing,
            &mut self.thickness_advection,
            &mut self.tracer_advection,
        ]
    }

    pub fn wind_stress_on(&self) -> bool {
        self.surface_stress || self.momentum_forcing
    }

    pub fn any_momentum_term(&self) -> bool {
        self.coriolis
            || self.pressure_gradient
            || self.ke_gradient_and_relative_vorticity
            || self.vertical_advection
            || self.horizontal_mixing
            || self.vertical_mixing
            || self.bottom_drag
            || self.wind_stress_on()
            || self.topographic_wave_drag
    }

    pub fn any_tracer_term(&self) -> bool {
        self.tracer_advection
            || self.tracer_horizontal_mixing
            || self.tracer_vertical_mixing
            || self.tracer_forcing
    }

    pub fn validate(&self) -> Result<(), String> {
        let coefs = [
            ("f0", self.f0),
            ("nu_h", self.nu_h),
            ("nu_v", self.nu_v),
            ("kappa_h", self.kappa_h),
            ("kappa_v", self.kappa_v),
            ("c_drag", self.c_drag),
            ("tau_wind", self.tau_wind),
            ("r_twd", self.r_twd),
            ("alpha_t", self.alpha_t),
            ("beta_s", self.beta_s),
            ("tracer_restore_rate", self.tracer_restore_rate),
        ];
        for (name, v) in coefs {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("physics.{name} must be a finite value >= 0 (got {v})"));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(format!("physics.beta must be >= 0 (got {})", self.beta));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(format!("physics.g must be > 0 (got {})", self.g));
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(format!("physics.rho0 must be > 0 (got {})", self.rho0));
        }
        Ok(())
    }

    /// Coriolis parameter at meridional position `y` (m) in a domain of
    /// height `ly`.
    #[inline]
    pub fn coriolis_at(&self, y: f64, ly: f64) -> f64 {
        self.f0 + self.beta * (y - 0.5 * ly)
    }
}

/// Full right-hand side: momentum, thickness and tracer tendencies with the
/// flags of `cfg` applied.
pub fn compute_tendency(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid) -> Tendency {
    let mut tend = Tendency::zeros(grid);
    let need_w = cfg.vertical_advection || cfg.tracer_advection;
    let w = need_w.then(|| diagnose_vertical_transport(state, grid));
    let (du, dv) = momentum::momentum_tendency_with(state, cfg, grid, w.as_ref());
    tend.du = du;
    tend.dv = dv;
    if cfg.thickness_advection {
        tend.dh = thickness_tendency(state, grid);
    }
    if cfg.any_tracer_term() {
        let (dt, ds) = scalars::tracer_tendency_with(state, cfg, grid, w.as_ref());
        tend.dtheta = dt;
        tend.dsal = ds;
    }
    tend
}

/// Thickness and tracer tendencies only, `(dh, dtheta, dsal)`.
pub fn scalar_tendency(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = state.len();
    let dh = if cfg.thickness_advection { thickness_tendency(state, grid) } else { vec![0.0; n] };
    if !cfg.any_tracer_term() {
        return (dh, vec![0.0; n], vec![0.0; n]);
    }
    let w = cfg.tracer_advection.then(|| diagnose_vertical_transport(state, grid));
    let (dt, ds) = scalars::tracer_tendency_with(state, cfg, grid, w.as_ref());
    (dh, dt, ds)
}
