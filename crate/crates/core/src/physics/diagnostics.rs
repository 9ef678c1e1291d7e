use super::{LayeredState, PhysicsConfig};
use crate::grid::Grid;

/// Linear equation of state around `(theta_ref, sal_ref)`.
#[inline]
pub fn linear_eos(theta: f64, sal: f64, cfg: &PhysicsConfig) -> f64 {
    cfg.rho0 * (1.0 - cfg.alpha_t * (theta - cfg.theta_ref) + cfg.beta_s * (sal - cfg.sal_ref))
}

/// Density at every ocean cell and layer; zero on land.
pub fn density(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid) -> Vec<f64> {
    let nc = grid.ncell();
    let mut rho = vec![0.0; state.len()];
    for k in 0..grid.nz {
        for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
            let i = k * nc + c;
            rho[i] = linear_eos(state.theta[i], state.sal[i], cfg);
        }
    }
    rho
}

/// Hydrostatic pressure at layer mid-depth: surface pressure plus the weight
/// of all overlying layers and the upper half of the layer itself.
pub fn hydrostatic_pressure(state: &LayeredState, cfg: &PhysicsConfig, grid: &Grid) -> Vec<f64> {
    let rho = density(state, cfg, grid);
    pressure_from_density(state, &rho, cfg, grid)
}

pub(crate) fn pressure_from_density(
    state: &LayeredState,
    rho: &[f64],
    cfg: &PhysicsConfig,
    grid: &Grid,
) -> Vec<f64> {
    let nc = grid.ncell();
    let mut p = vec![0.0; state.len()];
    for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
        let mut above = cfg.p_surface;
        for k in 0..grid.nz {
            let i = k * nc + c;
            let weight = rho[i] * cfg.g * state.h[i];
            p[i] = above + 0.5 * weight;
            above += weight;
        }
    }
    p
}

/// z-coordinate (positive up, 0 at rest sea level) of each layer's middle.
pub fn layer_mid_depth(state: &LayeredState, grid: &Grid) -> Vec<f64> {
    let nc = grid.ncell();
    let nz = grid.nz;
    let mut z = vec![0.0; state.len()];
    for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
        let mut bottom = -grid.bottom_depth[c];
        for k in (0..nz).rev() {
            let i = k * nc + c;
            z[i] = bottom + 0.5 * state.h[i];
            bottom += state.h[i];
        }
    }
    z
}

/// Vertical transport at layer interfaces.
///
/// `w[k * ncell + c]` for `k in 0..=nz` is the upward velocity at the top of
/// layer `k` (interface `nz` is the sea floor). Interface 0 carries the
/// motion of the free surface; no mass crosses it.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalTransport {
    pub w: Vec<f64>,
    pub ncell: usize,
    pub nz: usize,
}

impl VerticalTransport {
    #[inline]
    pub fn at(&self, interface: usize, c: usize) -> f64 {
        self.w[interface * self.ncell + c]
    }

    /// Transport that actually moves mass across interface `k`: zero at the
    /// surface and the floor.
    #[inline]
    pub fn through(&self, interface: usize, c: usize) -> f64 {
        if interface == 0 || interface == self.nz {
            0.0
        } else {
            self.w[interface * self.ncell + c]
        }
    }
}

/// Horizontal thickness-flux divergence `div(h u)` per cell and layer (m/s),
/// with first-order upwind face thickness.
pub(crate) fn thickness_flux_divergence(state: &LayeredState, grid: &Grid) -> Vec<f64> {
    let nc = grid.ncell();
    let mut div = vec![0.0; state.len()];
    let (rdx, rdy) = (1.0 / grid.dx, 1.0 / grid.dy);
    for k in 0..grid.nz {
        let off = k * nc;
        let h = &state.h[off..off + nc];
        let u = &state.u[off..off + nc];
        let v = &state.v[off..off + nc];
        let d = &mut div[off..off + nc];
        for c in 0..nc {
            if grid.u_open(c) {
                let w = grid.west(c).unwrap();
                let hu = if u[c] > 0.0 { h[w] } else { h[c] };
                let flux = hu * u[c] * rdx;
                d[w] += flux;
                d[c] -= flux;
            }
            if grid.v_open(c) {
                let s = grid.south(c).unwrap();
                let hv = if v[c] > 0.0 { h[s] } else { h[c] };
                let flux = hv * v[c] * rdy;
                d[s] += flux;
                d[c] -= flux;
            }
        }
    }
    div
}

/// Diagnose `w` so interior layer thicknesses stay fixed: integrating the
/// thickness-flux divergence upward from `w = 0` at the floor. The surface
/// value equals the rate of change of total column thickness.
pub fn diagnose_vertical_transport(state: &LayeredState, grid: &Grid) -> VerticalTransport {
    let div = thickness_flux_divergence(state, grid);
    vertical_transport_from_divergence(&div, grid)
}

pub(crate) fn vertical_transport_from_divergence(div: &[f64], grid: &Grid) -> VerticalTransport {
    let nc = grid.ncell();
    let nz = grid.nz;
    let mut w = vec![0.0; (nz + 1) * nc];
    for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
        let mut acc = 0.0;
        for k in (0..nz).rev() {
            acc -= div[k * nc + c];
            w[k * nc + c] = acc;
        }
    }
    VerticalTransport { w, ncell: nc, nz }
}

/// Kinetic energy at cell centers: half the sum of face-averaged squared
/// velocity components.
pub fn kinetic_energy(state: &LayeredState, grid: &Grid) -> Vec<f64> {
    let nc = grid.ncell();
    let mut ke = vec![0.0; state.len()];
    for k in 0..grid.nz {
        let off = k * nc;
        for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
            let uw = state.u[off + c];
            let ue = grid.east(c).map_or(0.0, |e| state.u[off + e]);
            let vs = state.v[off + c];
            let vn = grid.north(c).map_or(0.0, |n| state.v[off + n]);
            ke[off + c] = 0.25 * (uw * uw + ue * ue + vs * vs + vn * vn);
        }
    }
    ke
}

/// Relative vorticity `dv/dx - du/dy` at the south-west vertex of every cell.
/// Vertices touching land carry zero (free slip).
pub fn relative_vorticity(state: &LayeredState, grid: &Grid) -> Vec<f64> {
    let nc = grid.ncell();
    let mut omega = vec![0.0; state.len()];
    let (rdx, rdy) = (1.0 / grid.dx, 1.0 / grid.dy);
    for k in 0..grid.nz {
        let off = k * nc;
        for c in (0..nc).filter(|&c| grid.vertex_interior(c)) {
            let w = grid.west(c).unwrap();
            let s = grid.south(c).unwrap();
            omega[off + c] = (state.v[off + c] - state.v[off + w]) * rdx
                - (state.u[off + c] - state.u[off + s]) * rdy;
        }
    }
    omega
}

/// Normalized bottom slope `|grad H| / max |grad H|` per ocean cell, zero on
/// flat bathymetry.
pub fn slope_factor(grid: &Grid) -> Vec<f64> {
    let nc = grid.ncell();
    let depth = &grid.bottom_depth;
    let mut s = vec![0.0; nc];
    let one_sided = |a: Option<usize>, b: Option<usize>, c: usize, d: f64| -> f64 {
        let a = a.filter(|&x| grid.is_ocean(x));
        let b = b.filter(|&x| grid.is_ocean(x));
        match (a, b) {
            (Some(a), Some(b)) => (depth[b] - depth[a]) / (2.0 * d),
            (Some(a), None) => (depth[c] - depth[a]) / d,
            (None, Some(b)) => (depth[b] - depth[c]) / d,
            (None, None) => 0.0,
        }
    };
    for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
        let gx = one_sided(grid.west(c), grid.east(c), c, grid.dx);
        let gy = one_sided(grid.south(c), grid.north(c), c, grid.dy);
        s[c] = (gx * gx + gy * gy).sqrt();
    }
    let max = s.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for x in &mut s {
            *x /= max;
        }
    }
    s
}
