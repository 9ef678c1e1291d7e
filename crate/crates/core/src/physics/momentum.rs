use super::diagnostics::{
    diagnose_vertical_transport, kinetic_energy, layer_mid_depth, pressure_from_density,
    relative_vorticity, slope_factor, VerticalTransport,
};
use super::{density, LayeredState, PhysicsConfig};
use crate::grid::Grid;

/// Individual momentum tendency terms, in the order they are accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumTerm {
    Coriolis,
    VorticityAndKeGradient,
    PressureGradient,
    VerticalAdvection,
    HorizontalMixing,
    VerticalMixing,
    BottomDrag,
    SurfaceStress,
    TopographicWaveDrag,
}

impl MomentumTerm {
    pub const ALL: [MomentumTerm; 9] = [
        MomentumTerm::Coriolis,
        MomentumTerm::VorticityAndKeGradient,
        MomentumTerm::PressureGradient,
        MomentumTerm::VerticalAdvection,
        MomentumTerm::HorizontalMixing,
        MomentumTerm::VerticalMixing,
        MomentumTerm::BottomDrag,
        MomentumTerm::SurfaceStress,
        MomentumTerm::TopographicWaveDrag,
    ];

    pub fn enabled(self, cfg: &PhysicsConfig) -> bool {
        match self {
            MomentumTerm::Coriolis => cfg.coriolis,
            MomentumTerm::VorticityAndKeGradient => cfg.ke_gradient_and_relative_vorticity,
            MomentumTerm::PressureGradient => cfg.pressure_gradient,
            MomentumTerm::VerticalAdvection => cfg.vertical_advection,
            MomentumTerm::HorizontalMixing => cfg.horizontal_mixing,
            MomentumTerm::VerticalMixing => cfg.vertical_mixing,
            MomentumTerm::BottomDrag => cfg.bottom_drag,
            MomentumTerm::SurfaceStress => cfg.wind_stress_on(),
            MomentumTerm::TopographicWaveDrag => cfg.topographic_wave_drag,
        }
    }
}

/// Momentum tendency `(du, dv)` on faces. Disabled terms contribute nothing
/// and closed faces stay zero.
pub fn momentum_tendency(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let w = cfg.vertical_advection.then(|| diagnose_vertical_transport(state, grid));
    momentum_tendency_with(state, cfg, grid, w.as_ref())
}

pub(crate) fn momentum_tendency_with(
    state: &LayeredState,
    cfg: &PhysicsConfig,
    grid: &Grid,
    w: Option<&VerticalTransport>,
) -> (Vec<f64>, Vec<f64>) {
    let n = state.len();
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    let mut owned_w = None;
    for term in MomentumTerm::ALL {
        if !term.enabled(cfg) {
            continue;
        }
        match term {
            MomentumTerm::Coriolis => coriolis(state, cfg, grid, &mut du, &mut dv),
            MomentumTerm::VorticityAndKeGradient => vorticity_and_ke(state, grid, &mut du, &mut dv),
            MomentumTerm::PressureGradient => pressure_gradient(state, cfg, grid, &mut du, &mut dv),
            MomentumTerm::VerticalAdvection => {
                let w = match w {
                    Some(w) => w,
                    None => owned_w.get_or_insert_with(|| diagnose_vertical_transport(state, grid)),
                };
                vertical_advection(state, grid, w, &mut du, &mut dv)
            }
            MomentumTerm::HorizontalMixing => horizontal_mixing(state, cfg, grid, &mut du, &mut dv),
            MomentumTerm::VerticalMixing => vertical_mixing(state, cfg, grid, &mut du, &mut dv),
            MomentumTerm::BottomDrag => bottom_drag(state, cfg, grid, &mut du, &mut dv),
            MomentumTerm::SurfaceStress => surface_stress(state, cfg, grid, &mut du),
            MomentumTerm::TopographicWaveDrag => topographic_drag(state, cfg, grid, &mut du, &mut dv),
        }
    }
    (du, dv)
}

/// The four v-faces surrounding the u-face `c` (west face of cell `c`).
#[inline]
fn v_around_u(grid: &Grid, c: usize) -> [Option<usize>; 4] {
    let w = grid.west(c);
    [
        Some(c),
        w,
        grid.north(c),
        w.and_then(|w| grid.north(w)),
    ]
}

/// The four u-faces surrounding the v-face `c` (south face of cell `c`).
#[inline]
fn u_around_v(grid: &Grid, c: usize) -> [Option<usize>; 4] {
    let s = grid.south(c);
    [
        Some(c),
        grid.east(c),
        s,
        s.and_then(|s| grid.east(s)),
    ]
}

#[inline]
fn avg_v_at_u(grid: &Grid, v: &[f64], c: usize) -> f64 {
    0.25 * v_around_u(grid, c).iter().flatten().map(|&n| v[n]).sum::<f64>()
}

#[inline]
fn avg_u_at_v(grid: &Grid, u: &[f64], c: usize) -> f64 {
    0.25 * u_around_v(grid, c).iter().flatten().map(|&n| u[n]).sum::<f64>()
}

#[inline]
fn h_at_u(grid: &Grid, h: &[f64], c: usize) -> f64 {
    0.5 * (h[c] + h[grid.west(c).unwrap()])
}

#[inline]
fn h_at_v(grid: &Grid, h: &[f64], c: usize) -> f64 {
    0.5 * (h[c] + h[grid.south(c).unwrap()])
}

/// `-f k x u`, with each u/v pair weighted by the mean Coriolis parameter of
/// the two faces so the term exchanges energy between components without
/// creating or destroying it.
fn coriolis(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid, du: &mut [f64], dv: &mut [f64]) {
    let nc = grid.ncell();
    let ly = grid.domain_height();
    let f_u: Vec<f64> = (0..nc).map(|c| cfg.coriolis_at(grid.y_center(grid.ij(c).1), ly)).collect();
    let f_v: Vec<f64> = (0..nc).map(|c| cfg.coriolis_at(grid.ij(c).1 as f64 * grid.dy, ly)).collect();
    for k in 0..grid.nz {
        let off = k * nc;
        let u = &state.u[off..off + nc];
        let v = &state.v[off..off + nc];
        for c in 0..nc {
            if grid.u_open(c) {
                let mut acc = 0.0;
                for n in v_around_u(grid, c).into_iter().flatten() {
                    acc += 0.5 * (f_u[c] + f_v[n]) * v[n];
                }
                du[off + c] += 0.25 * acc;
            }
            if grid.v_open(c) {
                let mut acc = 0.0;
                for n in u_around_v(grid, c).into_iter().flatten() {
                    acc += 0.5 * (f_v[c] + f_u[n]) * u[n];
                }
                dv[off + c] -= 0.25 * acc;
            }
        }
    }
}

/// `-omega k x u - grad K`.
fn vorticity_and_ke(state: &LayeredState, grid: &Grid, du: &mut [f64], dv: &mut [f64]) {
    let nc = grid.ncell();
    let omega = relative_vorticity(state, grid);
    let ke = kinetic_energy(state, grid);
    let (rdx, rdy) = (1.0 / grid.dx, 1.0 / grid.dy);
    for k in 0..grid.nz {
        let off = k * nc;
        let u = &state.u[off..off + nc];
        let v = &state.v[off..off + nc];
        let om = &omega[off..off + nc];
        let kk = &ke[off..off + nc];
        for c in 0..nc {
            if grid.u_open(c) {
                let om_face = 0.5 * (om[c] + grid.north(c).map_or(0.0, |n| om[n]));
                let w = grid.west(c).unwrap();
                du[off + c] += om_face * avg_v_at_u(grid, v, c) - (kk[c] - kk[w]) * rdx;
            }
            if grid.v_open(c) {
                let om_face = 0.5 * (om[c] + grid.east(c).map_or(0.0, |e| om[e]));
                let s = grid.south(c).unwrap();
                dv[off + c] += -om_face * avg_u_at_v(grid, u, c) - (kk[c] - kk[s]) * rdy;
            }
        }
    }
}

/// `-(1/rho0) grad p - (rho g / rho0) grad z_mid`.
fn pressure_gradient(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid, du: &mut [f64], dv: &mut [f64]) {
    let nc = grid.ncell();
    let rho = density(state, cfg, grid);
    let p = pressure_from_density(state, &rho, cfg, grid);
    let z = layer_mid_depth(state, grid);
    let r0 = 1.0 / cfg.rho0;
    let (rdx, rdy) = (1.0 / grid.dx, 1.0 / grid.dy);
    for k in 0..grid.nz {
        let off = k * nc;
        for c in 0..nc {
            let i = off + c;
            if grid.u_open(c) {
                let w = off + grid.west(c).unwrap();
                let rho_f = 0.5 * (rho[i] + rho[w]);
                du[i] += -r0 * (p[i] - p[w]) * rdx - rho_f * cfg.g * r0 * (z[i] - z[w]) * rdx;
            }
            if grid.v_open(c) {
                let s = off + grid.south(c).unwrap();
                let rho_f = 0.5 * (rho[i] + rho[s]);
                dv[i] += -r0 * (p[i] - p[s]) * rdy - rho_f * cfg.g * r0 * (z[i] - z[s]) * rdy;
            }
        }
    }
}

/// `-w du/dz`, averaging the two interface contributions of each layer.
fn vertical_advection(state: &LayeredState, grid: &Grid, w: &VerticalTransport, du: &mut [f64], dv: &mut [f64]) {
    let nc = grid.ncell();
    let nz = grid.nz;
    if nz < 2 {
        return;
    }
    let h = &state.h;
    for c in 0..nc {
        let uo = grid.u_open(c);
        let vo = grid.v_open(c);
        if !uo && !vo {
            continue;
        }
        for (open, vel, out, other) in [
            (uo, &state.u, &mut *du, grid.west(c)),
            (vo, &state.v, &mut *dv, grid.south(c)),
        ] {
            if !open {
                continue;
            }
            let o = other.unwrap();
            for k in 0..nz {
                let mut acc = 0.0;
                if k > 0 {
                    let wf = 0.5 * (w.through(k, c) + w.through(k, o));
                    let dz = 0.25 * (h[k * nc + c] + h[k * nc + o] + h[(k - 1) * nc + c] + h[(k - 1) * nc + o]);
                    acc += wf * (vel[(k - 1) * nc + c] - vel[k * nc + c]) / dz;
                }
                if k + 1 < nz {
                    let wf = 0.5 * (w.through(k + 1, c) + w.through(k + 1, o));
                    let dz = 0.25 * (h[k * nc + c] + h[k * nc + o] + h[(k + 1) * nc + c] + h[(k + 1) * nc + o]);
                    acc += wf * (vel[k * nc + c] - vel[(k + 1) * nc + c]) / dz;
                }
                out[k * nc + c] -= 0.5 * acc;
            }
        }
    }
}

/// `nu_h` times the five-point Laplacian; closed neighbor faces contribute
/// no flux.
fn horizontal_mixing(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid, du: &mut [f64], dv: &mut [f64]) {
    let nc = grid.ncell();
    let (rdx2, rdy2) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    for k in 0..grid.nz {
        let off = k * nc;
        let u = &state.u[off..off + nc];
        let v = &state.v[off..off + nc];
        for c in 0..nc {
            if grid.u_open(c) {
                let mut lap = 0.0;
                for (n, r) in [
                    (grid.west(c), rdx2),
                    (grid.east(c), rdx2),
                    (grid.south(c), rdy2),
                    (grid.north(c), rdy2),
                ] {
                    if let Some(n) = n.filter(|&n| grid.u_open(n)) {
                        lap += (u[n] - u[c]) * r;
                    }
                }
                du[off + c] += cfg.nu_h * lap;
            }
            if grid.v_open(c) {
                let mut lap = 0.0;
                for (n, r) in [
                    (grid.west(c), rdx2),
                    (grid.east(c), rdx2),
                    (grid.south(c), rdy2),
                    (grid.north(c), rdy2),
                ] {
                    if let Some(n) = n.filter(|&n| grid.v_open(n)) {
                        lap += (v[n] - v[c]) * r;
                    }
                }
                dv[off + c] += cfg.nu_h * lap;
            }
        }
    }
}

/// `nu_v d2u/dz2` in flux form with no flux through surface and floor.
fn vertical_mixing(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid, du: &mut [f64], dv: &mut [f64]) {
    let nc = grid.ncell();
    let nz = grid.nz;
    if nz < 2 {
        return;
    }
    let h = &state.h;
    for c in 0..nc {
        for (open, vel, out, other) in [
            (grid.u_open(c), &state.u, &mut *du, grid.west(c)),
            (grid.v_open(c), &state.v, &mut *dv, grid.south(c)),
        ] {
            if !open {
                continue;
            }
            let o = other.unwrap();
            let hf = |k: usize| 0.5 * (h[k * nc + c] + h[k * nc + o]);
            for k in 0..nz {
                let mut flux_in = 0.0;
                if k > 0 {
                    let dz = 0.5 * (hf(k - 1) + hf(k));
                    flux_in += cfg.nu_v * (vel[(k - 1) * nc + c] - vel[k * nc + c]) / dz;
                }
                if k + 1 < nz {
                    let dz = 0.5 * (hf(k) + hf(k + 1));
                    flux_in -= cfg.nu_v * (vel[k * nc + c] - vel[(k + 1) * nc + c]) / dz;
                }
                out[k * nc + c] += flux_in / hf(k);
            }
        }
    }
}

/// Quadratic drag on the bottom layer: `-c_d |u| u / h`.
fn bottom_drag(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid, du: &mut [f64], dv: &mut [f64]) {
    let nc = grid.ncell();
    let off = (grid.nz - 1) * nc;
    let u = &state.u[off..off + nc];
    let v = &state.v[off..off + nc];
    let h = &state.h[off..off + nc];
    for c in 0..nc {
        if grid.u_open(c) {
            let vb = avg_v_at_u(grid, v, c);
            let speed = (u[c] * u[c] + vb * vb).sqrt();
            du[off + c] -= cfg.c_drag * speed * u[c] / h_at_u(grid, h, c);
        }
        if grid.v_open(c) {
            let ub = avg_u_at_v(grid, u, c);
            let speed = (v[c] * v[c] + ub * ub).sqrt();
            dv[off + c] -= cfg.c_drag * speed * v[c] / h_at_v(grid, h, c);
        }
    }
}

/// Uniform zonal wind stress on the top layer.
fn surface_stress(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid, du: &mut [f64]) {
    let nc = grid.ncell();
    let h = &state.h[..nc];
    for c in (0..nc).filter(|&c| grid.u_open(c)) {
        du[c] += cfg.tau_wind / (cfg.rho0 * h_at_u(grid, h, c));
    }
}

/// Linear drag on the bottom layer scaled by the normalized bottom slope.
fn topographic_drag(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid, du: &mut [f64], dv: &mut [f64]) {
    let nc = grid.ncell();
    let off = (grid.nz - 1) * nc;
    let s = slope_factor(grid);
    for c in 0..nc {
        if grid.u_open(c) {
            let sf = 0.5 * (s[c] + s[grid.west(c).unwrap()]);
            du[off + c] -= cfg.r_twd * sf * state.u[off + c];
        }
        if grid.v_open(c) {
            let sf = 0.5 * (s[c] + s[grid.south(c).unwrap()]);
            dv[off + c] -= cfg.r_twd * sf * state.v[off + c];
        }
    }
}
