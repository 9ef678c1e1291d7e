use super::diagnostics::{thickness_flux_divergence, vertical_transport_from_divergence, VerticalTransport};
use super::{LayeredState, PhysicsConfig};
use crate::grid::Grid;

/// `dh/dt = -div(h u) - w_top + w_bottom` with no mass flux through the sea
/// surface. With `w` diagnosed this leaves interior layers unchanged and puts
/// the whole column convergence into the top layer.
pub fn thickness_tendency(state: &LayeredState, grid: &Grid) -> Vec<f64> {
    let div = thickness_flux_divergence(state, grid);
    let w = vertical_transport_from_divergence(&div, grid);
    thickness_from_parts(&div, &w, grid)
}

fn thickness_from_parts(div: &[f64], w: &VerticalTransport, grid: &Grid) -> Vec<f64> {
    let nc = grid.ncell();
    let mut dh = vec![0.0; div.len()];
    for k in 0..grid.nz {
        for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
            dh[k * nc + c] = -div[k * nc + c] - w.through(k, c) + w.through(k + 1, c);
        }
    }
    dh
}

/// Tracer tendencies `(dtheta/dt, dsal/dt)`.
///
/// Transport and diffusion are evaluated for the thickness-weighted tracer
/// `h phi` in flux form and converted with `dphi = (d(h phi) - phi dh) / h`,
/// so a spatially uniform tracer stays uniform.
pub fn tracer_tendency(
    state: &LayeredState,
    cfg: &PhysicsConfig,
    grid: &Grid,
    w: &VerticalTransport,
) -> (Vec<f64>, Vec<f64>) {
    tracer_tendency_with(state, cfg, grid, Some(w))
}

pub(crate) fn tracer_tendency_with(
    state: &LayeredState,
    cfg: &PhysicsConfig,
    grid: &Grid,
    w: Option<&VerticalTransport>,
) -> (Vec<f64>, Vec<f64>) {
    let n = state.len();
    let mut out = (vec![0.0; n], vec![0.0; n]);
    if !cfg.any_tracer_term() {
        return out;
    }
    let owned;
    let adv = if cfg.tracer_advection {
        let div = thickness_flux_divergence(state, grid);
        let w = match w {
            Some(w) => w,
            None => {
                owned = vertical_transport_from_divergence(&div, grid);
                &owned
            }
        };
        let dh = thickness_from_parts(&div, w, grid);
        Some((w, dh))
    } else {
        None
    };

    let ly = grid.domain_height();
    for (field, dphi, south, north) in [
        (&state.theta, &mut out.0, cfg.theta_restore_south, cfg.theta_restore_north),
        (&state.sal, &mut out.1, cfg.sal_restore_south, cfg.sal_restore_north),
    ] {
        let mut dhphi = vec![0.0; n];
        if let Some((w, dh)) = &adv {
            advect(state, grid, field, w, &mut dhphi);
            for i in 0..n {
                dhphi[i] -= field[i] * dh[i];
            }
        }
        if cfg.tracer_horizontal_mixing {
            horizontal_diffusion(state, grid, field, cfg.kappa_h, &mut dhphi);
        }
        if cfg.tracer_vertical_mixing {
            vertical_diffusion(state, grid, field, cfg.kappa_v, &mut dhphi);
        }
        let nc = grid.ncell();
        for k in 0..grid.nz {
            for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
                let i = k * nc + c;
                dphi[i] = dhphi[i] / state.h[i];
            }
        }
        if cfg.tracer_forcing {
            for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
                let frac = grid.y_center(grid.ij(c).1) / ly;
                let target = south + (north - south) * frac;
                dphi[c] -= cfg.tracer_restore_rate * (field[c] - target);
            }
        }
    }
    out
}

/// Upwind flux-form transport of `h phi`: horizontal faces and interior
/// interfaces.
fn advect(state: &LayeredState, grid: &Grid, phi: &[f64], w: &VerticalTransport, out: &mut [f64]) {
    let nc = grid.ncell();
    let (rdx, rdy) = (1.0 / grid.dx, 1.0 / grid.dy);
    for k in 0..grid.nz {
        let off = k * nc;
        let h = &state.h[off..off + nc];
        let u = &state.u[off..off + nc];
        let v = &state.v[off..off + nc];
        let p = &phi[off..off + nc];
        let o = &mut out[off..off + nc];
        for c in 0..nc {
            if grid.u_open(c) {
                let wc = grid.west(c).unwrap();
                let up = if u[c] > 0.0 { wc } else { c };
                let flux = h[up] * u[c] * rdx * p[up];
                o[wc] -= flux;
                o[c] += flux;
            }
            if grid.v_open(c) {
                let sc = grid.south(c).unwrap();
                let up = if v[c] > 0.0 { sc } else { c };
                let flux = h[up] * v[c] * rdy * p[up];
                o[sc] -= flux;
                o[c] += flux;
            }
        }
    }
    for k in 1..grid.nz {
        for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
            let wk = w.through(k, c);
            // Upward transport carries the lower layer's tracer.
            let up = if wk > 0.0 { phi[k * nc + c] } else { phi[(k - 1) * nc + c] };
            let flux = wk * up;
            out[(k - 1) * nc + c] += flux;
            out[k * nc + c] -= flux;
        }
    }
}

/// `kappa div(h grad phi)` with face thickness averaged from the two cells.
fn horizontal_diffusion(state: &LayeredState, grid: &Grid, phi: &[f64], kappa: f64, out: &mut [f64]) {
    let nc = grid.ncell();
    let (rdx2, rdy2) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    for k in 0..grid.nz {
        let off = k * nc;
        let h = &state.h[off..off + nc];
        let p = &phi[off..off + nc];
        let o = &mut out[off..off + nc];
        for c in 0..nc {
            if grid.u_open(c) {
                let wc = grid.west(c).unwrap();
                let flux = kappa * 0.5 * (h[c] + h[wc]) * (p[c] - p[wc]) * rdx2;
                o[wc] += flux;
                o[c] -= flux;
            }
            if grid.v_open(c) {
                let sc = grid.south(c).unwrap();
                let flux = kappa * 0.5 * (h[c] + h[sc]) * (p[c] - p[sc]) * rdy2;
                o[sc] += flux;
                o[c] -= flux;
            }
        }
    }
}

/// `kappa d2phi/dz2` between layer mid-depths, insulated top and bottom.
fn vertical_diffusion(state: &LayeredState, grid: &Grid, phi: &[f64], kappa: f64, out: &mut [f64]) {
    let nc = grid.ncell();
    for k in 1..grid.nz {
        for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
            let (a, b) = ((k - 1) * nc + c, k * nc + c);
            let dz = 0.5 * (state.h[a] + state.h[b]);
            let flux = kappa * (phi[a] - phi[b]) / dz;
            out[a] -= flux;
            out[b] += flux;
        }
    }
}
