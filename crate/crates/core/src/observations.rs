//! Observation snapshots of a reference run and their piecewise-linear
//! interpolation in time.

use thiserror::Error;

use crate::grid::Grid;
use crate::interpolant::{center_velocities, ObsMask, ObsMode, ObservedFields};
use crate::physics::LayeredState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObsError {
    #[error("snapshot at t = {got} s breaks the uniform spacing (expected t = {expected} s)")]
    NonUniformTime { expected: f64, got: f64 },
    #[error("t = {t} s is outside the stored window [{start}, {end}] s")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("grid hash {found:016x} does not match the store ({expected:016x})")]
    GridMismatch { expected: u64, found: u64 },
    #[error("the store keeps no full-field shadow copies")]
    NoFullFields,
    #[error("cell {0} is not observed by the original store")]
    NotSubset(usize),
    #[error("dt_obs must be positive (got {0})")]
    BadInterval(f64),
}

/// Observed values on the mask cells at one time, `nz * n_selected` entries
/// per field, layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub sal: Vec<f64>,
}

/// Append-only record of observations taken every `dt_obs`.
#[derive(Debug, Clone)]
pub struct ObservationStore {
    pub dt_obs: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub mask: ObsMask,
    pub mode: ObsMode,
    pub grid_hash: u64,
    pub run_id: String,
    cells: Vec<usize>,
    nz: usize,
    ncell: usize,
    shadow: Option<Vec<LayeredState>>,
}

impl ObservationStore {
    /// Empty store. With `keep_full` every snapshot also keeps the complete
    /// state, which error diagnostics use when observations are sparse.
    pub fn new(
        grid: &Grid,
        mask: ObsMask,
        mode: ObsMode,
        dt_obs: f64,
        run_id: impl Into<String>,
        keep_full: bool,
    ) -> Result<Self, ObsError> {
        if !(dt_obs > 0.0 && dt_obs.is_finite()) {
            return Err(ObsError::BadInterval(dt_obs));
        }
        let cells = mask.indices();
        Ok(Self {
            dt_obs,
            times: Vec::new(),
            snapshots: Vec::new(),
            mask,
            mode,
            grid_hash: grid.hash(),
            run_id: run_id.into(),
            cells,
            nz: grid.nz,
            ncell: grid.ncell(),
            shadow: keep_full.then(Vec::new),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn has_full_fields(&self) -> bool {
        self.shadow.is_some()
    }

    pub fn start(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn end(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<(), ObsError> {
        let found = grid.hash();
        if found != self.grid_hash {
            return Err(ObsError::GridMismatch { expected: self.grid_hash, found });
        }
        Ok(())
    }

    fn tol(&self) -> f64 {
        1e-9 * self.dt_obs
    }

    /// Record the state observed at time `t`.
    pub fn record_snapshot(&mut self, t: f64, state: &LayeredState, grid: &Grid) -> Result<(), ObsError> {
        self.check_grid(grid)?;
        let t = match self.times.first() {
            None => t,
            Some(&t0) => {
                let expected = t0 + self.times.len() as f64 * self.dt_obs;
                if (t - expected).abs() > self.tol() {
                    return Err(ObsError::NonUniformTime { expected, got: t });
                }
                expected
            }
        };
        let (us, vs) = match self.mode {
            ObsMode::Center => center_velocities(state, grid),
            ObsMode::Face => (state.u.clone(), state.v.clone()),
        };
        let nsel = self.cells.len();
        let mut snap = Snapshot {
            u: Vec::with_capacity(self.nz * nsel),
            v: Vec::with_capacity(self.nz * nsel),
            theta: Vec::with_capacity(self.nz * nsel),
            sal: Vec::with_capacity(self.nz * nsel),
        };
        for k in 0..self.nz {
            for &c in &self.cells {
                let i = k * self.ncell + c;
                snap.u.push(us[i]);
                snap.v.push(vs[i]);
                snap.theta.push(state.theta[i]);
                snap.sal.push(state.sal[i]);
            }
        }
        self.times.push(t);
        self.snapshots.push(snap);
        if let Some(full) = self.shadow.as_mut() {
            let mut copy = state.clone();
            copy.t = t;
            full.push(copy);
        }
        Ok(())
    }

    /// Bracketing snapshot index `n` and weight `w` so that the value at
    /// `t` is `(1 - w) * snap[n] + w * snap[n + 1]` (`w == 0` on nodes).
    fn locate(&self, t: f64) -> Result<(usize, f64), ObsError> {
        let (Some(start), Some(end)) = (self.start(), self.end()) else {
            return Err(ObsError::OutOfRange { t, start: f64::NAN, end: f64::NAN });
        };
        if t < start - self.tol() || t > end + self.tol() || t.is_nan() {
            return Err(ObsError::OutOfRange { t, start, end });
        }
        let last = self.times.len() - 1;
        let s = ((t - start) / self.dt_obs).clamp(0.0, last as f64);
        let mut n = s.floor() as usize;
        let mut w = s - n as f64;
        if w < 1e-9 {
            w = 0.0;
        } else if w > 1.0 - 1e-9 {
            n += 1;
            w = 0.0;
        }
        if n == last && w > 0.0 {
            w = 0.0;
        }
        Ok((n.min(last), w))
    }

    /// `E_dt_obs`: observations at time `t`, expanded to full-size arrays
    /// with data on the mask cells only.
    pub fn temporal_interp(&self, t: f64) -> Result<ObservedFields, ObsError> {
        let mut out = ObservedFields::zeros(self.nz * self.ncell);
        self.temporal_interp_into(t, &mut out)?;
        Ok(out)
    }

    pub fn temporal_interp_into(&self, t: f64, out: &mut ObservedFields) -> Result<(), ObsError> {
        let (n, w) = self.locate(t)?;
        let a = &self.snapshots[n];
        let b = if w > 0.0 { &self.snapshots[n + 1] } else { a };
        let nsel = self.cells.len();
        for k in 0..self.nz {
            for (s, &c) in self.cells.iter().enumerate() {
                let src = k * nsel + s;
                let dst = k * self.ncell + c;
                if w == 0.0 {
                    out.u[dst] = a.u[src];
                    out.v[dst] = a.v[src];
                    out.theta[dst] = a.theta[src];
                    out.sal[dst] = a.sal[src];
                } else {
                    out.u[dst] = (1.0 - w) * a.u[src] + w * b.u[src];
                    out.v[dst] = (1.0 - w) * a.v[src] + w * b.v[src];
                    out.theta[dst] = (1.0 - w) * a.theta[src] + w * b.theta[src];
                    out.sal[dst] = (1.0 - w) * a.sal[src] + w * b.sal[src];
                }
            }
        }
        Ok(())
    }

    /// Linear-in-time interpolation of the full-field shadow copies.
    pub fn full_state_at(&self, t: f64) -> Result<LayeredState, ObsError> {
        let full = self.shadow.as_ref().ok_or(ObsError::NoFullFields)?;
        let (n, w) = self.locate(t)?;
        if w == 0.0 {
            let mut s = full[n].clone();
            s.t = t;
            return Ok(s);
        }
        let (a, b) = (&full[n], &full[n + 1]);
        let lerp = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(p, q)| (1.0 - w) * p + w * q).collect()
        };
        Ok(LayeredState {
            u: lerp(&a.u, &b.u),
            v: lerp(&a.v, &b.v),
            h: lerp(&a.h, &b.h),
            theta: lerp(&a.theta, &b.theta),
            sal: lerp(&a.sal, &b.sal),
            t,
        })
    }

    /// Full-field shadow copy at snapshot `n`.
    pub fn full_snapshot(&self, n: usize) -> Option<&LayeredState> {
        self.shadow.as_ref().and_then(|f| f.get(n))
    }

    /// A store holding every `stride`-th snapshot of this one.
    pub fn subsample(&self, stride: usize) -> Self {
        assert!(stride >= 1);
        let keep = |i: &usize| i % stride == 0;
        Self {
            dt_obs: self.dt_obs * stride as f64,
            times: (0..self.len()).filter(keep).map(|i| self.times[i]).collect(),
            snapshots: (0..self.len()).filter(keep).map(|i| self.snapshots[i].clone()).collect(),
            shadow: self
                .shadow
                .as_ref()
                .map(|f| (0..f.len()).filter(keep).map(|i| f[i].clone()).collect()),
            ..self.clone_header()
        }
    }

    /// A store observing only the cells of `mask`, which must be a subset of
    /// the cells observed here.
    pub fn restrict(&self, mask: ObsMask) -> Result<Self, ObsError> {
        let pos: Vec<Option<usize>> = {
            let mut p = vec![None; self.ncell];
            for (s, &c) in self.cells.iter().enumerate() {
                p[c] = Some(s);
            }
            p
        };
        let cells = mask.indices();
        let mut picks = Vec::with_capacity(cells.len());
        for &c in &cells {
            picks.push(pos[c].ok_or(ObsError::NotSubset(c))?);
        }
        let nsel = self.cells.len();
        let pick = |f: &[f64]| -> Vec<f64> {
            (0..self.nz).flat_map(|k| picks.iter().map(move |&s| f[k * nsel + s])).collect()
        };
        let snapshots = self
            .snapshots
            .iter()
            .map(|s| Snapshot { u: pick(&s.u), v: pick(&s.v), theta: pick(&s.theta), sal: pick(&s.sal) })
            .collect();
        Ok(Self {
            times: self.times.clone(),
            snapshots,
            mask,
            cells,
            shadow: self.shadow.clone(),
            ..self.clone_header()
        })
    }

    fn clone_header(&self) -> Self {
        Self {
            dt_obs: self.dt_obs,
            times: Vec::new(),
            snapshots: Vec::new(),
            mask: self.mask.clone(),
            mode: self.mode,
            grid_hash: self.grid_hash,
            run_id: self.run_id.clone(),
            cells: self.cells.clone(),
            nz: self.nz,
            ncell: self.ncell,
            shadow: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DepthSpec, GridSpec, MaskSpec};
    use crate::interpolant::build_obs_mask;

    fn setup(dt_obs: f64) -> (Grid, ObservationStore) {
        let grid = GridSpec {
            nx: 6,
            ny: 5,
            nz: 2,
            mask: MaskSpec::RectangularBasin { border: 1 },
            depth: DepthSpec::Flat(200.0),
            ..GridSpec::default()
        }
        .build()
        .unwrap();
        let mask = build_obs_mask(&grid, 1, None, 3).unwrap();
        let store = ObservationStore::new(&grid, mask, ObsMode::Center, dt_obs, "test", true).unwrap();
        (grid, store)
    }

    fn state_with_theta(grid: &Grid, value: impl Fn(usize) -> f64) -> LayeredState {
        let mut s = LayeredState::at_rest(grid, 0.0, 35.0);
        for (i, th) in s.theta.iter_mut().enumerate() {
            *th = value(i);
        }
        s.apply_mask(grid);
        s
    }

    #[test]
    fn spacing_is_enforced() {
        let (g, mut store) = setup(3600.0);
        let s = LayeredState::at_rest(&g, 10.0, 35.0);
        store.record_snapshot(0.0, &s, &g).unwrap();
        assert_eq!(store.len(), 1);
        store.record_snapshot(3600.0, &s, &g).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(
            store.record_snapshot(1.5 * 3600.0 + 3600.0, &s, &g).unwrap_err(),
            ObsError::NonUniformTime { expected: 7200.0, got: 9000.0 }
        );
    }

    #[test]
    fn node_and_midpoint_values() {
        let (g, mut store) = setup(6.0 * 3600.0);
        let c = store.cells()[0];
        store.record_snapshot(0.0, &state_with_theta(&g, |_| 0.0), &g).unwrap();
        store.record_snapshot(6.0 * 3600.0, &state_with_theta(&g, |_| 6.0), &g).unwrap();
        store.record_snapshot(12.0 * 3600.0, &state_with_theta(&g, |i| i as f64), &g).unwrap();
        assert_eq!(store.temporal_interp(3.0 * 3600.0).unwrap().theta[c], 3.0);
        let node = store.temporal_interp(12.0 * 3600.0).unwrap();
        for &c in store.cells() {
            assert_eq!(node.theta[c], c as f64);
        }
        assert!(matches!(store.temporal_interp(13.0 * 3600.0), Err(ObsError::OutOfRange { .. })));
        assert!(matches!(store.temporal_interp(-1.0), Err(ObsError::OutOfRange { .. })));
    }

    #[test]
    fn linear_in_time_is_exact() {
        let (g, mut store) = setup(100.0);
        for n in 0..4 {
            let t = 100.0 * n as f64;
            store.record_snapshot(t, &state_with_theta(&g, |i| 2.0 + 0.01 * t * (i % 7) as f64), &g).unwrap();
        }
        for t in [0.0, 12.5, 150.0, 299.0, 300.0] {
            let obs = store.temporal_interp(t).unwrap();
            let full = store.full_state_at(t).unwrap();
            for &c in store.cells() {
                let want = 2.0 + 0.01 * t * (c % 7) as f64;
                assert!((obs.theta[c] - want).abs() < 1e-12);
                assert!((full.theta[c] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_error_is_second_order() {
        let omega = 2.0 * std::f64::consts::PI / 86400.0;
        let max_err = |dt_obs: f64| {
            let (g, mut store) = setup(dt_obs);
            let n = (86400.0 / dt_obs) as usize;
            for m in 0..=n {
                let t = m as f64 * dt_obs;
                store.record_snapshot(t, &state_with_theta(&g, |_| (omega * t).sin()), &g).unwrap();
            }
            let c = store.cells()[0];
            (0..200)
                .map(|q| {
                    let t = 86400.0 * q as f64 / 200.0;
                    (store.temporal_interp(t).unwrap().theta[c] - (omega * t).sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = max_err(3.0 * 3600.0) / max_err(1.5 * 3600.0);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn subsampling_keeps_every_other_snapshot() {
        let (g, mut store) = setup(60.0);
        for n in 0..5 {
            store.record_snapshot(60.0 * n as f64, &state_with_theta(&g, |_| n as f64), &g).unwrap();
        }
        let sub = store.subsample(2);
        assert_eq!(sub.times, vec![0.0, 120.0, 240.0]);
        assert_eq!(sub.dt_obs, 120.0);
        let c = sub.cells()[0];
        assert_eq!(sub.temporal_interp(60.0).unwrap().theta[c], 1.0);
        assert_eq!(sub.full_snapshot(2).unwrap().theta[c], 4.0);
    }

    #[test]
    fn restriction_matches_direct_recording() {
        let (g, _) = setup(60.0);
        let full = build_obs_mask(&g, 0, None, 3).unwrap();
        let mut dense = ObservationStore::new(&g, full, ObsMode::Center, 60.0, "d", false).unwrap();
        let sparse_mask = build_obs_mask(&g, 2, None, 3).unwrap();
        let mut sparse = ObservationStore::new(&g, sparse_mask.clone(), ObsMode::Center, 60.0, "s", false).unwrap();
        for n in 0..3 {
            let s = state_with_theta(&g, |i| (i * (n + 1)) as f64);
            dense.record_snapshot(60.0 * n as f64, &s, &g).unwrap();
            sparse.record_snapshot(60.0 * n as f64, &s, &g).unwrap();
        }
        let r = dense.restrict(sparse_mask).unwrap();
        assert_eq!(r.snapshots, sparse.snapshots);
        assert_eq!(r.cells(), sparse.cells());
        let too_wide = build_obs_mask(&g, 0, None, 3).unwrap();
        assert!(matches!(sparse.restrict(too_wide), Err(ObsError::NotSubset(_))));
    }
}
