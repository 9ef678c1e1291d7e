//! Spatial observation operator: observation masks at spacing `delta` and
//! the flood fill that extends observed values to the whole ocean.
//!
//! The fill runs breadth-first from the observed cells. Each iteration
//! assigns every still-empty cell that touches a cell filled in the previous
//! iteration, using the arithmetic mean of those neighbors. Cells filled in
//! the same iteration never feed each other. Because the sequence of
//! averages depends only on the mask, it is precomputed once as a
//! [`FillPlan`] and replayed for every field, which makes the operator
//! exactly linear and deterministic.

use thiserror::Error;

use crate::grid::Grid;
use crate::physics::LayeredState;

pub const DEFAULT_DELTA_MAX: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterpError {
    #[error("observation spacing delta = {delta} exceeds the cap {max}")]
    DeltaTooLarge { delta: usize, max: usize },
    #[error("observation mask selects no ocean cell")]
    EmptyMask,
    #[error("mask selects cell {0} which is land or outside the region")]
    BadSelection(usize),
    #[error("node {0} cannot be reached from any observation")]
    UnreachableCell(usize),
}

/// Half-open rectangular index window `[i0, i1) x [j0, j1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl Region {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && i < self.i1 && j >= self.j0 && j < self.j1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsMask {
    pub delta: usize,
    pub selected: Vec<bool>,
    pub region: Option<Region>,
}

impl ObsMask {
    /// Mask from an explicit selection; every selected cell must be ocean.
    pub fn from_selected(grid: &Grid, selected: Vec<bool>) -> Result<Self, InterpError> {
        assert_eq!(selected.len(), grid.ncell());
        if let Some(c) = (0..grid.ncell()).find(|&c| selected[c] && !grid.is_ocean(c)) {
            return Err(InterpError::BadSelection(c));
        }
        if !selected.iter().any(|s| *s) {
            return Err(InterpError::EmptyMask);
        }
        Ok(Self { delta: 0, selected, region: None })
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&c| self.selected[c]).collect()
    }
}

/// Observe every `(delta + 1)`-th cell along each axis, restricted to ocean
/// cells inside `region`.
pub fn build_obs_mask(
    grid: &Grid,
    delta: usize,
    region: Option<Region>,
    delta_max: usize,
) -> Result<ObsMask, InterpError> {
    if delta > delta_max {
        return Err(InterpError::DeltaTooLarge { delta, max: delta_max });
    }
    let stride = delta + 1;
    let selected: Vec<bool> = (0..grid.ncell())
        .map(|c| {
            let (i, j) = grid.ij(c);
            grid.is_ocean(c)
                && i % stride == 0
                && j % stride == 0
                && region.is_none_or(|r| r.contains(i, j))
        })
        .collect();
    if !selected.iter().any(|s| *s) {
        return Err(InterpError::EmptyMask);
    }
    Ok(ObsMask { delta, selected, region })
}

/// Precomputed breadth-first fill over an arbitrary node graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FillPlan {
    n: usize,
    seeds: Vec<usize>,
    /// `(target, start, end)` into `sources`, in assignment order.
    steps: Vec<(usize, usize, usize)>,
    sources: Vec<usize>,
    /// BFS iteration in which each node was assigned (0 = observed);
    /// `usize::MAX` for inactive nodes.
    pub iteration: Vec<usize>,
    smooth_nodes: Vec<(usize, usize, usize)>,
    smooth_sources: Vec<usize>,
    n_smooth: usize,
}

impl FillPlan {
    pub fn new<F, I>(n: usize, active: &[bool], seeds: &[bool], neighbors: F, n_smooth: usize) -> Result<Self, InterpError>
    where
        F: Fn(usize) -> I,
        I: IntoIterator<Item = usize>,
    {
        const UNSET: usize = usize::MAX;
        let mut iteration = vec![UNSET; n];
        let mut frontier: Vec<usize> = (0..n).filter(|&c| active[c] && seeds[c]).collect();
        if frontier.is_empty() {
            return Err(InterpError::EmptyMask);
        }
        for &c in &frontier {
            iteration[c] = 0;
        }
        let seeds_list = frontier.clone();
        let mut steps = Vec::new();
        let mut sources = Vec::new();
        let mut level = 0;
        while !frontier.is_empty() {
            level += 1;
            let mut next: Vec<usize> = frontier
                .iter()
                .flat_map(|&c| neighbors(c))
                .filter(|&m| active[m] && iteration[m] == UNSET)
                .collect();
            next.sort_unstable();
            next.dedup();
            for &t in &next {
                let start = sources.len();
                for m in neighbors(t) {
                    if active[m] && iteration[m] == level - 1 {
                        sources.push(m);
                    }
                }
                steps.push((t, start, sources.len()));
            }
            for &t in &next {
                iteration[t] = level;
            }
            frontier = next;
        }
        if let Some(c) = (0..n).find(|&c| active[c] && iteration[c] == UNSET) {
            return Err(InterpError::UnreachableCell(c));
        }

        let mut smooth_nodes = Vec::new();
        let mut smooth_sources = Vec::new();
        if n_smooth > 0 {
            for c in (0..n).filter(|&c| active[c] && !seeds[c]) {
                let start = smooth_sources.len();
                smooth_sources.extend(neighbors(c).into_iter().filter(|&m| active[m]));
                smooth_nodes.push((c, start, smooth_sources.len()));
            }
        }
        Ok(Self {
            n,
            seeds: seeds_list,
            steps,
            sources,
            iteration,
            smooth_nodes,
            smooth_sources,
            n_smooth,
        })
    }

    /// Fill `out` from the values of `obs` at the seed nodes. Entries of
    /// `out` on inactive nodes are left untouched.
    pub fn apply(&self, obs: &[f64], out: &mut [f64]) {
        debug_assert!(obs.len() >= self.n && out.len() >= self.n);
        for &c in &self.seeds {
            out[c] = obs[c];
        }
        for &(t, a, b) in &self.steps {
            let mut sum = 0.0;
            for &s in &self.sources[a..b] {
                sum += out[s];
            }
            out[t] = sum / (b - a) as f64;
        }
        if self.n_smooth > 0 {
            let mut scratch = vec![0.0; self.smooth_nodes.len()];
            for _ in 0..self.n_smooth {
                for (slot, &(_, a, b)) in scratch.iter_mut().zip(&self.smooth_nodes) {
                    let sum: f64 = self.smooth_sources[a..b].iter().map(|&s| out[s]).sum();
                    *slot = sum / (b - a) as f64;
                }
                for (val, &(c, _, _)) in scratch.iter().zip(&self.smooth_nodes) {
                    out[c] = *val;
                }
            }
        }
    }

    pub fn max_iteration(&self) -> usize {
        self.iteration.iter().filter(|&&l| l != usize::MAX).copied().max().unwrap_or(0)
    }
}

/// Flood fill of a single per-cell field from its values on mask-selected
/// cells. Land cells come back as zero.
pub fn flood_fill(grid: &Grid, mask: &ObsMask, obs_values: &[f64]) -> Result<Vec<f64>, InterpError> {
    let plan = cell_plan(grid, mask, 0)?;
    let mut out = vec![0.0; grid.ncell()];
    plan.apply(obs_values, &mut out);
    Ok(out)
}

fn cell_plan(grid: &Grid, mask: &ObsMask, n_smooth: usize) -> Result<FillPlan, InterpError> {
    FillPlan::new(grid.ncell(), &grid.mask, &mask.selected, |c| grid.neighbor_cells(c), n_smooth)
}

/// Where velocity observations are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsMode {
    /// Velocities averaged to cell centers, filled, and averaged back to
    /// faces.
    Center,
    /// Velocities taken on faces directly (validation mode).
    Face,
}

/// Observed fields in full-size arrays; only mask-selected entries carry
/// data. In [`ObsMode::Center`] `u`/`v` are cell-center velocities, in
/// [`ObsMode::Face`] they are the west/south face values of selected cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedFields {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub sal: Vec<f64>,
}

impl ObservedFields {
    pub fn zeros(len: usize) -> Self {
        Self { u: vec![0.0; len], v: vec![0.0; len], theta: vec![0.0; len], sal: vec![0.0; len] }
    }
}

/// Interpolated fields on the model grid: velocities on faces, tracers at
/// centers.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedFields {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub sal: Vec<f64>,
}

/// Cell-center velocity components by two-point averaging of face values.
pub fn center_velocities(state: &LayeredState, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let nc = grid.ncell();
    let mut uc = vec![0.0; state.len()];
    let mut vc = vec![0.0; state.len()];
    for k in 0..grid.nz {
        let off = k * nc;
        for c in (0..nc).filter(|&c| grid.is_ocean(c)) {
            let ue = grid.east(c).map_or(0.0, |e| state.u[off + e]);
            let vn = grid.north(c).map_or(0.0, |n| state.v[off + n]);
            uc[off + c] = 0.5 * (state.u[off + c] + ue);
            vc[off + c] = 0.5 * (state.v[off + c] + vn);
        }
    }
    (uc, vc)
}

/// The operator `I_delta` for one grid, mask and observation mode.
#[derive(Debug, Clone)]
pub struct Interpolator {
    pub mode: ObsMode,
    pub mask: ObsMask,
    nc: usize,
    nz: usize,
    cells: FillPlan,
    u_faces: Option<FillPlan>,
    v_faces: Option<FillPlan>,
    u_open: Vec<bool>,
    v_open: Vec<bool>,
    west: Vec<Option<usize>>,
    south: Vec<Option<usize>>,
    ocean: Vec<bool>,
}

impl Interpolator {
    pub fn new(grid: &Grid, mask: ObsMask, mode: ObsMode, n_smooth: usize) -> Result<Self, InterpError> {
        let nc = grid.ncell();
        let cells = cell_plan(grid, &mask, n_smooth)?;
        let u_open: Vec<bool> = (0..nc).map(|c| grid.u_open(c)).collect();
        let v_open: Vec<bool> = (0..nc).map(|c| grid.v_open(c)).collect();
        let (u_faces, v_faces) = match mode {
            ObsMode::Center => (None, None),
            ObsMode::Face => {
                let face_nbrs = |c: usize| [grid.west(c), grid.east(c), grid.south(c), grid.north(c)].into_iter().flatten();
                let us: Vec<bool> = (0..nc).map(|c| mask.selected[c] && u_open[c]).collect();
                let vs: Vec<bool> = (0..nc).map(|c| mask.selected[c] && v_open[c]).collect();
                (
                    Some(FillPlan::new(nc, &u_open, &us, face_nbrs, n_smooth)?),
                    Some(FillPlan::new(nc, &v_open, &vs, face_nbrs, n_smooth)?),
                )
            }
        };
        Ok(Self {
            mode,
            mask,
            nc,
            nz: grid.nz,
            cells,
            u_faces,
            v_faces,
            u_open,
            v_open,
            west: (0..nc).map(|c| grid.west(c)).collect(),
            south: (0..nc).map(|c| grid.south(c)).collect(),
            ocean: grid.mask.clone(),
        })
    }

    pub fn cell_plan(&self) -> &FillPlan {
        &self.cells
    }

    /// Sample a model state at the observation points.
    pub fn observe(&self, state: &LayeredState, grid: &Grid) -> ObservedFields {
        let mut obs = ObservedFields::zeros(state.len());
        self.observe_into(state, grid, &mut obs);
        obs
    }

    pub fn observe_into(&self, state: &LayeredState, grid: &Grid, obs: &mut ObservedFields) {
        let nc = self.nc;
        let (us, vs) = match self.mode {
            ObsMode::Center => {
                let (uc, vc) = center_velocities(state, grid);
                (uc, vc)
            }
            ObsMode::Face => (state.u.clone(), state.v.clone()),
        };
        for k in 0..self.nz {
            for c in (0..nc).filter(|&c| self.mask.selected[c]) {
                let i = k * nc + c;
                obs.u[i] = us[i];
                obs.v[i] = vs[i];
                obs.theta[i] = state.theta[i];
                obs.sal[i] = state.sal[i];
            }
        }
    }

    /// Extend observations to the whole grid.
    pub fn interpolate(&self, obs: &ObservedFields) -> InterpolatedFields {
        let len = self.nz * self.nc;
        let mut out = InterpolatedFields {
            u: vec![0.0; len],
            v: vec![0.0; len],
            theta: vec![0.0; len],
            sal: vec![0.0; len],
        };
        self.interpolate_tracers_into(obs, &mut out.theta, &mut out.sal);
        self.interpolate_velocity_into(obs, &mut out.u, &mut out.v);
        out
    }

    pub fn interpolate_tracers_into(&self, obs: &ObservedFields, theta: &mut [f64], sal: &mut [f64]) {
        let nc = self.nc;
        for k in 0..self.nz {
            let r = k * nc..(k + 1) * nc;
            self.cells.apply(&obs.theta[r.clone()], &mut theta[r.clone()]);
            self.cells.apply(&obs.sal[r.clone()], &mut sal[r]);
        }
    }

    pub fn interpolate_velocity_into(&self, obs: &ObservedFields, u: &mut [f64], v: &mut [f64]) {
        let nc = self.nc;
        match self.mode {
            ObsMode::Face => {
                let (pu, pv) = (self.u_faces.as_ref().unwrap(), self.v_faces.as_ref().unwrap());
                for k in 0..self.nz {
                    let r = k * nc..(k + 1) * nc;
                    pu.apply(&obs.u[r.clone()], &mut u[r.clone()]);
                    pv.apply(&obs.v[r.clone()], &mut v[r]);
                }
            }
            ObsMode::Center => {
                let mut uc = vec![0.0; nc];
                let mut vc = vec![0.0; nc];
                for k in 0..self.nz {
                    let off = k * nc;
                    self.cells.apply(&obs.u[off..off + nc], &mut uc);
                    self.cells.apply(&obs.v[off..off + nc], &mut vc);
                    for c in 0..nc {
                        u[off + c] = if self.u_open[c] { 0.5 * (uc[c] + uc[self.west[c].unwrap()]) } else { 0.0 };
                        v[off + c] = if self.v_open[c] { 0.5 * (vc[c] + vc[self.south[c].unwrap()]) } else { 0.0 };
                    }
                }
            }
        }
        for k in 0..self.nz {
            for c in 0..nc {
                if !self.ocean[c] || !self.u_open[c] {
                    u[k * nc + c] = 0.0;
                }
                if !self.ocean[c] || !self.v_open[c] {
                    v[k * nc + c] = 0.0;
                }
            }
        }
    }
}

/// One-shot `I_delta` of observed fields (builds the plans each call).
pub fn interpolate_state(
    grid: &Grid,
    mask: &ObsMask,
    mode: ObsMode,
    observed: &ObservedFields,
) -> Result<InterpolatedFields, InterpError> {
    let interp = Interpolator::new(grid, mask.clone(), mode, 0)?;
    Ok(interp.interpolate(observed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DepthSpec, GridSpec, MaskSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(nx: usize, ny: usize, mask: MaskSpec, periodic: bool) -> Grid {
        build_grid(&GridSpec {
            nx,
            ny,
            nz: 1,
            dx: 1e4,
            dy: 1e4,
            mask,
            depth: DepthSpec::Flat(100.0),
            periodic_x: periodic,
            periodic_y: periodic,
        })
        .unwrap()
    }

    /// Five-cell ocean strip along row 0 of a 5x4 grid.
    fn strip() -> Grid {
        let mut m = vec![false; 20];
        m[..5].iter_mut().for_each(|x| *x = true);
        grid(5, 4, MaskSpec::Custom(m), false)
    }

    #[test]
    fn lattice_counts() {
        let g = grid(8, 8, MaskSpec::AllOcean, false);
        assert_eq!(build_obs_mask(&g, 0, None, 3).unwrap().count(), 64);
        assert_eq!(build_obs_mask(&g, 1, None, 3).unwrap().count(), 16);
        assert_eq!(build_obs_mask(&g, 3, None, 3).unwrap().count(), 4);
        assert_eq!(
            build_obs_mask(&g, 4, None, 3).unwrap_err(),
            InterpError::DeltaTooLarge { delta: 4, max: 3 }
        );
    }

    #[test]
    fn region_restriction() {
        let g = grid(8, 8, MaskSpec::AllOcean, false);
        let r = Region { i0: 0, i1: 8, j0: 0, j1: 4 };
        let m = build_obs_mask(&g, 0, Some(r), 3).unwrap();
        assert_eq!(m.count(), 32);
        let empty = Region { i0: 1, i1: 2, j0: 1, j1: 2 };
        assert_eq!(build_obs_mask(&g, 1, Some(empty), 3).unwrap_err(), InterpError::EmptyMask);
    }

    #[test]
    fn strip_hand_oracle() {
        let g = strip();
        let mut sel = vec![false; 20];
        sel[0] = true;
        sel[4] = true;
        let mask = ObsMask::from_selected(&g, sel).unwrap();
        let mut obs = vec![0.0; 20];
        obs[4] = 4.0;
        let out = flood_fill(&g, &mask, &obs).unwrap();
        assert_eq!(&out[..5], &[0.0, 0.0, 2.0, 4.0, 4.0]);
        let plan = cell_plan(&g, &mask, 0).unwrap();
        assert_eq!(&plan.iteration[..5], &[0, 1, 2, 1, 0]);
    }

    #[test]
    fn constants_are_preserved_and_delta0_is_identity() {
        let g = grid(9, 7, MaskSpec::RectangularBasin { border: 1 }, false);
        let mask = build_obs_mask(&g, 2, None, 3).unwrap();
        let out = flood_fill(&g, &mask, &vec![3.25; g.ncell()]).unwrap();
        for c in 0..g.ncell() {
            assert_eq!(out[c], if g.is_ocean(c) { 3.25 } else { 0.0 });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..g.ncell()).map(|_| rng.gen()).collect();
        let m0 = build_obs_mask(&g, 0, None, 3).unwrap();
        let id = flood_fill(&g, &m0, &vals).unwrap();
        for c in (0..g.ncell()).filter(|&c| g.is_ocean(c)) {
            assert_eq!(id[c], vals[c]);
        }
    }

    #[test]
    fn smoothing_keeps_observations_and_hull() {
        let g = grid(12, 12, MaskSpec::AllOcean, true);
        let mask = build_obs_mask(&g, 3, None, 3).unwrap();
        let plan = cell_plan(&g, &mask, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let obs: Vec<f64> = (0..g.ncell()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut out = vec![0.0; g.ncell()];
        plan.apply(&obs, &mut out);
        let sel = mask.indices();
        let lo = sel.iter().map(|&c| obs[c]).fold(f64::INFINITY, f64::min);
        let hi = sel.iter().map(|&c| obs[c]).fold(f64::NEG_INFINITY, f64::max);
        for &c in &sel {
            assert_eq!(out[c], obs[c]);
        }
        assert!(out.iter().all(|x| *x >= lo && *x <= hi));
    }

    #[test]
    fn face_mode_keeps_observed_faces() {
        let g = grid(8, 8, MaskSpec::RectangularBasin { border: 1 }, false);
        let mask = build_obs_mask(&g, 1, None, 3).unwrap();
        let interp = Interpolator::new(&g, mask.clone(), ObsMode::Face, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = LayeredState::at_rest(&g, 10.0, 35.0);
        for x in s.u.iter_mut().chain(s.v.iter_mut()) {
            *x = rng.gen_range(-1.0..1.0);
        }
        s.apply_mask(&g);
        let out = interp.interpolate(&interp.observe(&s, &g));
        for c in mask.indices() {
            if g.u_open(c) {
                assert_eq!(out.u[c], s.u[c]);
            }
            if g.v_open(c) {
                assert_eq!(out.v[c], s.v[c]);
            }
        }
    }

    #[test]
    fn zero_observations_give_zero() {
        let g = grid(8, 8, MaskSpec::AllOcean, true);
        let mask = build_obs_mask(&g, 1, None, 3).unwrap();
        let out = interpolate_state(&g, &mask, ObsMode::Center, &ObservedFields::zeros(64)).unwrap();
        assert!(out.u.iter().chain(&out.v).chain(&out.theta).chain(&out.sal).all(|x| *x == 0.0));
    }
}
