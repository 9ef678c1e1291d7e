//! Planar structured Arakawa C-grid with a land/ocean mask.
//!
//! Scalars (h, theta, salinity, pressure) live at cell centers. The x-velocity
//! `u(i, j)` lives on the *west* face of cell `(i, j)` and the y-velocity
//! `v(i, j)` on the *south* face, so both velocity arrays share the cell
//! indexing `j * nx + i`. A face is open when both cells it separates are
//! ocean; on a non-periodic axis the first face is a closed wall and the
//! last cell's east/north face is not stored (also a wall).

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("ocean region is disconnected ({components} components)")]
    DisconnectedOcean { components: usize },
    #[error("mask contains no ocean cell")]
    NoOcean,
    #[error("bad depth: {0}")]
    BadDepth(String),
}

/// Land/ocean layout used to build a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    AllOcean,
    /// Land border of the given width along every non-periodic side.
    RectangularBasin { border: usize },
    /// Seeded coastline: rectangular basin with random islands and
    /// peninsulas. Lakes cut off from the main ocean are filled in.
    Procedural { seed: u64 },
    /// Explicit mask in row-major order (`true` = ocean).
    Custom(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DepthSpec {
    Flat(f64),
    /// Meridional ridge along the domain center: `h_max` far from the ridge,
    /// `h_min` on its crest.
    Ridge { h_min: f64, h_max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub mask: MaskSpec,
    pub depth: DepthSpec,
    pub periodic_x: bool,
    pub periodic_y: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            nz: 3,
            dx: 1.0e4,
            dy: 1.0e4,
            mask: MaskSpec::RectangularBasin { border: 1 },
            depth: DepthSpec::Flat(500.0),
            periodic_x: true,
            periodic_y: false,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, GridError> {
        build_grid(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub periodic_x: bool,
    pub periodic_y: bool,
    pub mask: Vec<bool>,
    pub bottom_depth: Vec<f64>,
    u_open: Vec<bool>,
    v_open: Vec<bool>,
    vertex_interior: Vec<bool>,
    links: Vec<[Option<usize>; 4]>,
}

pub const MIN_HORIZONTAL: usize = 4;

pub fn build_grid(spec: &GridSpec) -> Result<Grid, GridError> {
    let GridSpec { nx, ny, nz, dx, dy, periodic_x, periodic_y, .. } = *spec;
    if nx < MIN_HORIZONTAL || ny < MIN_HORIZONTAL {
        return Err(GridError::BadDimension(format!(
            "nx = {nx}, ny = {ny}; both must be >= {MIN_HORIZONTAL}"
        )));
    }
    if nz < 1 {
        return Err(GridError::BadDimension("nz must be >= 1".into()));
    }
    if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
        return Err(GridError::BadDimension(format!("dx = {dx}, dy = {dy} must be positive")));
    }

    let mask = match &spec.mask {
        MaskSpec::AllOcean => vec![true; nx * ny],
        MaskSpec::RectangularBasin { border } => basin_mask(nx, ny, *border, periodic_x, periodic_y),
        MaskSpec::Procedural { seed } => procedural_mask(nx, ny, *seed, periodic_x, periodic_y),
        MaskSpec::Custom(m) => {
            if m.len() != nx * ny {
                return Err(GridError::BadDimension(format!(
                    "custom mask has {} entries, expected {}",
                    m.len(),
                    nx * ny
                )));
            }
            m.clone()
        }
    };

    let mut bottom_depth = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            if !mask[c] {
                continue;
            }
            let d = match spec.depth {
                DepthSpec::Flat(h) => h,
                DepthSpec::Ridge { h_min, h_max } => {
                    let xc = (i as f64 + 0.5) / nx as f64 - 0.5;
                    let width = 0.1;
                    h_max - (h_max - h_min) * (-(xc / width).powi(2)).exp()
                }
            };
            if !(d > 0.0 && d.is_finite()) {
                return Err(GridError::BadDepth(format!("depth {d} at ({i}, {j})")));
            }
            bottom_depth[c] = d;
        }
    }

    let mut grid = Grid {
        nx,
        ny,
        nz,
        dx,
        dy,
        periodic_x,
        periodic_y,
        mask,
        bottom_depth,
        u_open: Vec::new(),
        v_open: Vec::new(),
        vertex_interior: Vec::new(),
        links: Vec::new(),
    };
    grid.finish()?;
    Ok(grid)
}

fn basin_mask(nx: usize, ny: usize, border: usize, px: bool, py: bool) -> Vec<bool> {
    let mut mask = vec![true; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let land_x = !px && (i < border || i + border >= nx);
            let land_y = !py && (j < border || j + border >= ny);
            if land_x || land_y {
                mask[j * nx + i] = false;
            }
        }
    }
    mask
}

fn procedural_mask(nx: usize, ny: usize, seed: u64, px: bool, py: bool) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = basin_mask(nx, ny, 1, px, py);
    let n_islands = 1 + (nx * ny) / 512;
    for _ in 0..n_islands {
        let ci = rng.gen_range(0..nx) as f64;
        let cj = rng.gen_range(0..ny) as f64;
        let r = rng.gen_range(1.0..(nx.min(ny) as f64 / 8.0).max(1.5));
        for j in 0..ny {
            for i in 0..nx {
                let di = i as f64 - ci;
                let dj = j as f64 - cj;
                if di * di + dj * dj <= r * r {
                    mask[j * nx + i] = false;
                }
            }
        }
    }
    // Peninsula from the southern (or western) coast.
    let len = rng.gen_range(ny / 4..=ny / 2);
    let col = rng.gen_range(nx / 4..3 * nx / 4);
    for j in 0..len {
        mask[j * nx + col] = false;
    }
    keep_largest_component(nx, ny, px, py, &mut mask);
    mask
}

fn keep_largest_component(nx: usize, ny: usize, px: bool, py: bool, mask: &mut [bool]) {
    let labels = label_components(nx, ny, px, py, mask);
    let n = labels.iter().flatten().max().map_or(0, |m| m + 1);
    if n <= 1 {
        return;
    }
    let mut sizes = vec![0usize; n];
    for l in labels.iter().flatten() {
        sizes[*l] += 1;
    }
    // Ties resolved toward the lowest label for determinism.
    let keep = (0..n).fold(0, |best, l| if sizes[l] > sizes[best] { l } else { best });
    for (m, l) in mask.iter_mut().zip(&labels) {
        if *l != Some(keep) {
            *m = false;
        }
    }
}

fn wrap(idx: isize, n: usize, periodic: bool) -> Option<usize> {
    if idx >= 0 && (idx as usize) < n {
        Some(idx as usize)
    } else if periodic {
        Some(idx.rem_euclid(n as isize) as usize)
    } else {
        None
    }
}

fn raw_neighbors(nx: usize, ny: usize, px: bool, py: bool, i: usize, j: usize) -> [Option<(usize, usize)>; 4] {
    let (ii, jj) = (i as isize, j as isize);
    [
        wrap(ii - 1, nx, px).map(|a| (a, j)),
        wrap(ii + 1, nx, px).map(|a| (a, j)),
        wrap(jj - 1, ny, py).map(|b| (i, b)),
        wrap(jj + 1, ny, py).map(|b| (i, b)),
    ]
}

fn label_components(nx: usize, ny: usize, px: bool, py: bool, mask: &[bool]) -> Vec<Option<usize>> {
    let mut labels = vec![None; nx * ny];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..nx * ny {
        if !mask[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            for (a, b) in raw_neighbors(nx, ny, px, py, c % nx, c / nx).into_iter().flatten() {
                let n = b * nx + a;
                if mask[n] && labels[n].is_none() {
                    labels[n] = Some(next);
                    queue.push_back(n);
                }
            }
        }
        next += 1;
    }
    labels
}

impl Grid {
    fn finish(&mut self) -> Result<(), GridError> {
        let labels = label_components(self.nx, self.ny, self.periodic_x, self.periodic_y, &self.mask);
        let components = labels.iter().flatten().max().map_or(0, |m| m + 1);
        if components == 0 {
            return Err(GridError::NoOcean);
        }
        if components > 1 {
            return Err(GridError::DisconnectedOcean { components });
        }
        let n = self.ncell();
        self.links = (0..n)
            .map(|c| {
                let (i, j) = self.ij(c);
                raw_neighbors(self.nx, self.ny, self.periodic_x, self.periodic_y, i, j)
                    .map(|o| o.map(|(a, b)| b * self.nx + a))
            })
            .collect();
        self.u_open = (0..n)
            .map(|c| self.mask[c] && self.west(c).is_some_and(|w| self.mask[w]))
            .collect();
        self.v_open = (0..n)
            .map(|c| self.mask[c] && self.south(c).is_some_and(|s| self.mask[s]))
            .collect();
        self.vertex_interior = (0..n)
            .map(|c| {
                let (Some(w), Some(s)) = (self.west(c), self.south(c)) else {
                    return false;
                };
                let sw = self.west(s).expect("west of south exists when west exists");
                self.mask[c] && self.mask[w] && self.mask[s] && self.mask[sw]
            })
            .collect();
        Ok(())
    }

    #[inline]
    pub fn ncell(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    /// Flat index of a 3-D field entry (layer-major, then row-major).
    #[inline]
    pub fn at(&self, idx: CellIndex) -> usize {
        debug_assert!(idx.i < self.nx && idx.j < self.ny && idx.k < self.nz);
        idx.k * self.ncell() + idx.j * self.nx + idx.i
    }

    #[inline]
    pub fn west(&self, c: usize) -> Option<usize> {
        self.links[c][0]
    }

    #[inline]
    pub fn east(&self, c: usize) -> Option<usize> {
        self.links[c][1]
    }

    #[inline]
    pub fn south(&self, c: usize) -> Option<usize> {
        self.links[c][2]
    }

    #[inline]
    pub fn north(&self, c: usize) -> Option<usize> {
        self.links[c][3]
    }

    #[inline]
    pub fn is_ocean(&self, c: usize) -> bool {
        self.mask[c]
    }

    /// West face of cell `c` is open to flow.
    #[inline]
    pub fn u_open(&self, c: usize) -> bool {
        self.u_open[c]
    }

    /// South face of cell `c` is open to flow.
    #[inline]
    pub fn v_open(&self, c: usize) -> bool {
        self.v_open[c]
    }

    /// The south-west corner of cell `c` is surrounded by four ocean cells.
    #[inline]
    pub fn vertex_interior(&self, c: usize) -> bool {
        self.vertex_interior[c]
    }

    /// East face of `c` is open: the west face of its east neighbor.
    #[inline]
    pub fn east_face_open(&self, c: usize) -> Option<usize> {
        self.east(c).filter(|&e| self.u_open[e])
    }

    #[inline]
    pub fn north_face_open(&self, c: usize) -> Option<usize> {
        self.north(c).filter(|&n| self.v_open[n])
    }

    pub fn ocean_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn open_u_count(&self) -> usize {
        self.u_open.iter().filter(|m| **m).count()
    }

    pub fn open_v_count(&self) -> usize {
        self.v_open.iter().filter(|m| **m).count()
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Meridional coordinate of cell centers in row `j` (meters).
    #[inline]
    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy
    }

    pub fn domain_height(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    /// 4-connected ocean neighbors of `(i, j)` in fixed order: west, east,
    /// south, north. Periodic axes wrap.
    pub fn neighbors(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        assert!(i < self.nx && j < self.ny, "({i}, {j}) outside {}x{} grid", self.nx, self.ny);
        raw_neighbors(self.nx, self.ny, self.periodic_x, self.periodic_y, i, j)
            .into_iter()
            .flatten()
            .filter(|&(a, b)| self.mask[b * self.nx + a])
            .collect()
    }

    /// Same as [`Grid::neighbors`] but on flat cell indices.
    pub fn neighbor_cells(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.links[c]
            .into_iter()
            .flatten()
            .filter(move |&n| self.mask[n])
    }

    /// Resting layer thickness of layer `k` in column `c`: equal split of
    /// the local depth.
    #[inline]
    pub fn rest_thickness(&self, c: usize, _k: usize) -> f64 {
        self.bottom_depth[c] / self.nz as f64
    }

    pub fn max_depth(&self) -> f64 {
        self.bottom_depth.iter().cloned().fold(0.0, f64::max)
    }

    /// Order-independent FNV-1a digest of geometry and mask, used to tie
    /// observation stores and snapshots to the grid they came from.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(&(self.nx as u64).to_le_bytes());
        feed(&(self.ny as u64).to_le_bytes());
        feed(&(self.nz as u64).to_le_bytes());
        feed(&self.dx.to_le_bytes());
        feed(&self.dy.to_le_bytes());
        feed(&[self.periodic_x as u8, self.periodic_y as u8]);
        for (m, d) in self.mask.iter().zip(&self.bottom_depth) {
            feed(&[*m as u8]);
            feed(&d.to_le_bytes());
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(nx: usize, ny: usize, mask: MaskSpec, periodic: bool) -> GridSpec {
        GridSpec {
            nx,
            ny,
            nz: 1,
            dx: 1e4,
            dy: 1e4,
            mask,
            depth: DepthSpec::Flat(1000.0),
            periodic_x: periodic,
            periodic_y: periodic,
        }
    }

    #[test]
    fn all_ocean_8x8() {
        let g = build_grid(&spec(8, 8, MaskSpec::AllOcean, true)).unwrap();
        assert_eq!(g.ocean_count(), 64);
        assert!(g.bottom_depth.iter().all(|d| *d == 1000.0));
    }

    #[test]
    fn isolated_lake_is_rejected() {
        let mut m = vec![true; 64];
        // Ring of land around (5, 5) cuts it off.
        for (i, j) in [(4, 5), (6, 5), (5, 4), (5, 6)] {
            m[j * 8 + i] = false;
        }
        let err = build_grid(&spec(8, 8, MaskSpec::Custom(m), false)).unwrap_err();
        assert_eq!(err, GridError::DisconnectedOcean { components: 2 });
    }

    #[test]
    fn basin_with_two_cell_border() {
        let mut s = spec(64, 64, MaskSpec::RectangularBasin { border: 2 }, false);
        s.nz = 3;
        let g = build_grid(&s).unwrap();
        assert_eq!(g.ocean_count(), 60 * 60);
        assert_eq!(g.bottom_depth[g.cell(0, 0)], 0.0);
    }

    #[test]
    fn bad_dimensions() {
        assert!(matches!(
            build_grid(&spec(3, 8, MaskSpec::AllOcean, true)),
            Err(GridError::BadDimension(_))
        ));
        let mut s = spec(8, 8, MaskSpec::AllOcean, true);
        s.nz = 0;
        assert!(matches!(build_grid(&s), Err(GridError::BadDimension(_))));
        let mut s = spec(8, 8, MaskSpec::AllOcean, true);
        s.dx = 0.0;
        assert!(matches!(build_grid(&s), Err(GridError::BadDimension(_))));
    }

    #[test]
    fn neighbor_counts() {
        let g = build_grid(&spec(8, 8, MaskSpec::AllOcean, false)).unwrap();
        assert_eq!(g.neighbors(3, 3).len(), 4);
        assert_eq!(g.neighbors(0, 0).len(), 2);
        let gp = build_grid(&spec(8, 8, MaskSpec::AllOcean, true)).unwrap();
        let n = gp.neighbors(0, 0);
        assert_eq!(n, vec![(7, 0), (1, 0), (0, 7), (0, 1)]);
    }

    #[test]
    fn procedural_is_deterministic_and_connected() {
        let s = spec(32, 32, MaskSpec::Procedural { seed: 7 }, false);
        let a = build_grid(&s).unwrap();
        let b = build_grid(&s).unwrap();
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.hash(), b.hash());
        let c = build_grid(&spec(32, 32, MaskSpec::Procedural { seed: 8 }, false)).unwrap();
        assert_ne!(a.mask, c.mask);
    }

    #[test]
    fn ridge_depth_has_slope() {
        let mut s = spec(16, 8, MaskSpec::AllOcean, true);
        s.depth = DepthSpec::Ridge { h_min: 400.0, h_max: 1000.0 };
        let g = build_grid(&s).unwrap();
        let row: Vec<f64> = (0..16).map(|i| g.bottom_depth[g.cell(i, 0)]).collect();
        assert!(row.iter().all(|d| *d >= 400.0 && *d <= 1000.0));
        assert!(row[8] < row[0]);
    }

    #[test]
    fn faces_closed_at_walls() {
        let g = build_grid(&spec(6, 6, MaskSpec::RectangularBasin { border: 1 }, false)).unwrap();
        // First ocean column's west face borders land.
        assert!(!g.u_open(g.cell(1, 2)));
        assert!(g.u_open(g.cell(2, 2)));
        assert!(!g.v_open(g.cell(2, 1)));
        assert!(g.v_open(g.cell(2, 2)));
        assert!(!g.vertex_interior(g.cell(1, 1)));
        assert!(g.vertex_interior(g.cell(2, 2)));
    }
}
