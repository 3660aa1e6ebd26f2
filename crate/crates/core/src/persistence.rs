//! Occupation measures and extinction diagnostics on simulated paths.
//!
//! Between stored samples the state is linearly interpolated and the mode
//! is the one recorded at the left sample (samples include every switching
//! time, so this is exact for the mode).

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stats::ols;
use crate::system::BoundingBox;
use crate::trajectory::{fmt_f64, Trajectory};

pub const DEFAULT_BINS: usize = 32;
/// Norms at or below this are treated as numerically extinct.
pub const NORM_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub region: BoundingBox,
    pub bins: usize,
    pub modes: usize,
}

impl GridSpec {
    pub fn new(region: BoundingBox, bins: usize, modes: usize) -> Result<Self> {
        if bins == 0 || modes == 0 {
            return Err(invalid("grid needs at least one bin per axis and one mode"));
        }
        Ok(GridSpec { region, bins, modes })
    }

    fn cells(&self) -> usize {
        self.bins.pow(self.region.dim() as u32)
    }

    fn width(&self, axis: usize) -> f64 {
        (self.region.upper[axis] - self.region.lower[axis]) / self.bins as f64
    }

    /// Row-major cell index, `None` outside the region.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        if !self.region.contains(x) {
            return None;
        }
        let mut idx = 0;
        for (axis, v) in x.iter().enumerate() {
            let b = ((v - self.region.lower[axis]) / self.width(axis)) as usize;
            idx = idx * self.bins + b.min(self.bins - 1);
        }
        Some(idx)
    }

    fn unravel(&self, mut cell: usize) -> Vec<usize> {
        let d = self.region.dim();
        let mut out = vec![0; d];
        for axis in (0..d).rev() {
            out[axis] = cell % self.bins;
            cell /= self.bins;
        }
        out
    }
}

/// Time-weighted occupation of `(box, mode)` pairs over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationHistogram {
    pub grid: GridSpec,
    pub modes: usize,
    /// `mass[cell * modes + mode]`.
    pub mass: Vec<f64>,
    /// Mass outside the grid region, per mode.
    pub overflow: Vec<f64>,
    pub horizon: f64,
    pub burn_in: f64,
    /// Length of the averaging window; the merge weight.
    pub window: f64,
}

impl OccupationHistogram {
    pub fn total(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.overflow.iter().sum::<f64>()
    }

    pub fn overflow_total(&self) -> f64 {
        self.overflow.iter().sum()
    }

    pub fn mode_marginal(&self) -> Vec<f64> {
        let mut out = self.overflow.clone();
        for (k, m) in self.mass.iter().enumerate() {
            out[k % self.modes] += m;
        }
        out
    }

    pub fn mass_at(&self, x: &[f64], mode: usize) -> f64 {
        match self.grid.cell_of(x) {
            Some(c) => self.mass[c * self.modes + mode],
            None => self.overflow[mode],
        }
    }

    /// L1 distance between two histograms on the same grid.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid || self.modes != other.modes {
            return Err(invalid("histograms live on different grids"));
        }
        let cells: f64 = self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum();
        let over: f64 = self.overflow.iter().zip(&other.overflow).map(|(a, b)| (a - b).abs()).sum();
        Ok(cells + over)
    }

    /// Window-weighted average of two histograms on the same grid.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid || self.modes != other.modes {
            return Err(invalid("histograms live on different grids"));
        }
        let w = self.window + other.window;
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| (x * self.window + y * other.window) / w).collect()
        };
        Ok(OccupationHistogram {
            grid: self.grid.clone(),
            modes: self.modes,
            mass: mix(&self.mass, &other.mass),
            overflow: mix(&self.overflow, &other.overflow),
            horizon: self.horizon.max(other.horizon),
            burn_in: self.burn_in.min(other.burn_in),
            window: w,
        })
    }

    /// One row per non-empty `(box, mode)`: bin indices, box bounds, 1-based
    /// mode, mass. Overflow rows carry bin index -1 and empty bounds.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.grid.region.dim();
        let mut header: Vec<String> = (1..=d).map(|i| format!("bin_{i}")).collect();
        for i in 1..=d {
            header.push(format!("lo_{i}"));
            header.push(format!("hi_{i}"));
        }
        header.push("mode".into());
        header.push("mass".into());
        writeln!(w, "{}", header.join(","))?;
        for (k, m) in self.mass.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            let (cell, mode) = (k / self.modes, k % self.modes);
            let idx = self.grid.unravel(cell);
            let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            for (axis, i) in idx.iter().enumerate() {
                let lo = self.grid.region.lower[axis] + *i as f64 * self.grid.width(axis);
                row.push(fmt_f64(lo));
                row.push(fmt_f64(lo + self.grid.width(axis)));
            }
            row.push((mode + 1).to_string());
            row.push(fmt_f64(*m));
            writeln!(w, "{}", row.join(","))?;
        }
        for (mode, m) in self.overflow.iter().enumerate() {
            let mut row = vec!["-1".to_string(); d];
            row.extend(std::iter::repeat_n(String::new(), 2 * d));
            row.push((mode + 1).to_string());
            row.push(fmt_f64(*m));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Sample intervals clipped to `[from, end]`: `(t0, t1, x0, x1, mode)`
/// where `x0`, `x1` are the interpolated states at the clipped ends.
fn clipped_intervals(traj: &Trajectory, from: f64) -> impl Iterator<Item = (f64, f64, Vec<f64>, Vec<f64>, usize)> + '_ {
    let times = traj.times();
    (0..times.len().saturating_sub(1)).filter_map(move |k| {
        let (ta, tb) = (times[k], times[k + 1]);
        if tb <= from {
            return None;
        }
        let (xa, xb) = (traj.state(k), traj.state(k + 1));
        let s0 = if ta < from { (from - ta) / (tb - ta) } else { 0.0 };
        let x0: Vec<f64> = xa.iter().zip(xb).map(|(a, b)| a + s0 * (b - a)).collect();
        Some((ta.max(from), tb, x0, xb.to_vec(), traj.modes()[k]))
    })
}

/// Empirical occupation measure of the path after `burn_in`.
pub fn occupation_measure(traj: &Trajectory, grid: &GridSpec, burn_in: f64) -> Result<OccupationHistogram> {
    if grid.region.dim() != traj.dim() {
        return Err(invalid("grid dimension does not match the trajectory"));
    }
    let start = traj.start_time() + burn_in;
    let end = traj.end_time();
    if traj.len() < 2 || !(end > start) {
        return Err(Error::EmptyWindow);
    }
    let modes = grid.modes;
    if traj.modes().iter().any(|m| *m >= modes) {
        return Err(invalid("trajectory visits a mode outside the grid"));
    }
    let mut mass = vec![0.0; grid.cells() * modes];
    let mut overflow = vec![0.0; modes];
    let d = traj.dim();
    let mut cuts = Vec::new();
    let mut mid = vec![0.0; d];
    for (t0, t1, x0, x1, mode) in clipped_intervals(traj, start) {
        // Parameters in (0, 1) where the segment crosses a grid plane.
        cuts.clear();
        cuts.push(0.0);
        for axis in 0..d {
            let (a, b) = (x0[axis], x1[axis]);
            if a == b {
                continue;
            }
            let w = grid.width(axis);
            let lo = grid.region.lower[axis];
            let (ia, ib) = (((a - lo) / w).floor(), ((b - lo) / w).floor());
            let (first, last) = if ia < ib { (ia + 1.0, ib) } else { (ib + 1.0, ia) };
            let mut j = first.max(0.0);
            while j <= last.min(grid.bins as f64) {
                let s = (lo + j * w - a) / (b - a);
                if s > 0.0 && s < 1.0 {
                    cuts.push(s);
                }
                j += 1.0;
            }
        }
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            let ds = w[1] - w[0];
            if ds <= 0.0 {
                continue;
            }
            let sm = 0.5 * (w[0] + w[1]);
            for i in 0..d {
                mid[i] = x0[i] + sm * (x1[i] - x0[i]);
            }
            let dt = ds * (t1 - t0);
            match grid.cell_of(&mid) {
                Some(c) => mass[c * modes + mode] += dt,
                None => overflow[mode] += dt,
            }
        }
    }
    let window = end - start;
    mass.iter_mut().for_each(|m| *m /= window);
    overflow.iter_mut().for_each(|m| *m /= window);
    Ok(OccupationHistogram {
        grid: grid.clone(),
        modes,
        mass,
        overflow,
        horizon: traj.horizon(),
        burn_in,
        window,
    })
}

/// Fraction of the post-burn-in time spent where `pred(x, mode)` holds,
/// by the midpoint rule on `subdivisions` pieces of every sample interval.
pub fn time_fraction<P>(traj: &Trajectory, burn_in: f64, subdivisions: usize, pred: P) -> Result<f64>
where
    P: Fn(&[f64], usize) -> bool,
{
    let start = traj.start_time() + burn_in;
    let end = traj.end_time();
    if traj.len() < 2 || !(end > start) {
        return Err(Error::EmptyWindow);
    }
    let subs = subdivisions.max(1);
    let mut inside = 0.0;
    let mut mid = vec![0.0; traj.dim()];
    for (t0, t1, x0, x1, mode) in clipped_intervals(traj, start) {
        let dt = (t1 - t0) / subs as f64;
        for j in 0..subs {
            let s = (j as f64 + 0.5) / subs as f64;
            for i in 0..mid.len() {
                mid[i] = x0[i] + s * (x1[i] - x0[i]);
            }
            if pred(&mid, mode) {
                inside += dt;
            }
        }
    }
    Ok(inside / (end - start))
}

/// Which norm an extinction fit monitors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormComponent {
    Full,
    FirstN(usize),
}

impl NormComponent {
    fn norm(&self, x: &[f64]) -> f64 {
        let xs = match self {
            NormComponent::Full => x,
            NormComponent::FirstN(n) => &x[..*n],
        };
        xs.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionReport {
    pub slope: f64,
    pub intercept: f64,
    pub target: f64,
    pub tolerance: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub samples: usize,
    /// The norm reached the float floor inside the window; the fit uses the
    /// samples before that point and the check passes regardless.
    pub underflow: bool,
    pub pass: bool,
}

pub const EXTINCTION_TOL: f64 = 0.05;

/// Least-squares slope of `log |x|` against `t` after `burn_in`, compared
/// one-sidedly with `target`.
pub fn extinction_rate(
    traj: &Trajectory,
    component: NormComponent,
    burn_in: f64,
    target: f64,
) -> Result<ExtinctionReport> {
    if let NormComponent::FirstN(n) = component {
        if n == 0 || n > traj.dim() {
            return Err(invalid("monitored block size out of range"));
        }
    }
    if burn_in < 0.0 || burn_in > 0.5 * traj.horizon() {
        return Err(invalid("the fit window must cover at least half of the horizon"));
    }
    let start = traj.start_time() + burn_in;
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    let mut underflow = false;
    for (k, t) in traj.times().iter().enumerate() {
        if *t < start {
            continue;
        }
        let norm = component.norm(traj.state(k));
        if !(norm > NORM_FLOOR) {
            underflow = true;
            break;
        }
        ts.push(*t);
        logs.push(norm.ln());
    }
    let window_end = ts.last().copied().unwrap_or(start);
    let fit = ols(&ts, &logs);
    let (slope, intercept) = match (fit, underflow) {
        (Some(f), _) => f,
        (None, true) => (f64::NEG_INFINITY, f64::NAN),
        (None, false) => return Err(Error::EmptyWindow),
    };
    Ok(ExtinctionReport {
        slope,
        intercept,
        target,
        tolerance: EXTINCTION_TOL,
        window_start: start,
        window_end,
        samples: ts.len(),
        underflow,
        pass: underflow || slope <= target + EXTINCTION_TOL,
    })
}

/// First time `|x_n|` reaches `epsilon`, interpolating linearly between
/// samples; `None` if it never does within the horizon.
pub fn first_exit(traj: &Trajectory, n: usize, epsilon: f64) -> Option<f64> {
    if traj.is_empty() || n == 0 || n > traj.dim() {
        return None;
    }
    let norm2 = |x: &[f64]| x[..n].iter().map(|v| v * v).sum::<f64>();
    let eps2 = epsilon * epsilon;
    if norm2(traj.state(0)) >= eps2 {
        return Some(traj.start_time());
    }
    let times = traj.times();
    for k in 0..traj.len() - 1 {
        let (a, b) = (&traj.state(k)[..n], &traj.state(k + 1)[..n]);
        if norm2(b) < eps2 {
            continue;
        }
        // |a + s (b - a)|^2 = eps^2 on s in (0, 1]; the smaller root past 0.
        let dv: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let qa: f64 = dv.iter().map(|v| v * v).sum();
        let qb: f64 = 2.0 * a.iter().zip(&dv).map(|(x, v)| x * v).sum::<f64>();
        let qc = norm2(a) - eps2;
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
        let s = ((-qb + disc.sqrt()) / (2.0 * qa)).clamp(0.0, 1.0);
        return Some(times[k] + s * (times[k + 1] - times[k]));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::SwitchEvent;

    fn unit_box(d: usize) -> BoundingBox {
        BoundingBox::new(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    #[test]
    fn constant_path_puts_all_mass_in_one_box() {
        let traj = Trajectory::from_parts(2, vec![0.0, 1.0, 2.0], [0.3, 0.7].repeat(3), vec![0, 0, 0], vec![])
            .unwrap();
        let grid = GridSpec::new(unit_box(2), 4, 2).unwrap();
        let h = occupation_measure(&traj, &grid, 0.5).unwrap();
        assert!((h.mass_at(&[0.3, 0.7], 0) - 1.0).abs() < 1e-12);
        assert!((h.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn segment_split_at_grid_planes() {
        // x goes 0 -> 1 linearly over [0, 1]: quarter of the time per bin.
        let traj = Trajectory::from_parts(1, vec![0.0, 1.0], vec![0.0, 1.0], vec![1, 1], vec![]).unwrap();
        let grid = GridSpec::new(unit_box(1), 4, 2).unwrap();
        let h = occupation_measure(&traj, &grid, 0.0).unwrap();
        assert_eq!(h.modes, 2);
        for c in 0..4 {
            assert!((h.mass[c * 2 + 1] - 0.25).abs() < 1e-12, "{:?}", h.mass);
        }
    }

    #[test]
    fn overflow_mass_is_tracked() {
        let traj = Trajectory::from_parts(1, vec![0.0, 2.0], vec![0.0, 2.0], vec![0, 0], vec![]).unwrap();
        let grid = GridSpec::new(unit_box(1), 2, 2).unwrap();
        let h = occupation_measure(&traj, &grid, 0.0).unwrap();
        assert!((h.overflow_total() - 0.5).abs() < 1e-12);
        assert!((h.total() - 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("bin_1,lo_1,hi_1,mode,mass\n"));
        assert!(text.lines().any(|l| l.starts_with("-1,,,1,5.0")));
    }

    #[test]
    fn empty_window() {
        let traj = Trajectory::from_parts(1, vec![0.0, 1.0], vec![0.0, 1.0], vec![0, 0], vec![]).unwrap();
        let grid = GridSpec::new(unit_box(1), 2, 2).unwrap();
        assert!(matches!(occupation_measure(&traj, &grid, 1.0), Err(Error::EmptyWindow)));
    }

    #[test]
    fn merge_and_distance() {
        let grid = GridSpec::new(unit_box(1), 2, 2).unwrap();
        let a = Trajectory::from_parts(1, vec![0.0, 1.0], vec![0.2, 0.2], vec![0, 0], vec![]).unwrap();
        let b = Trajectory::from_parts(1, vec![0.0, 3.0], vec![0.7, 0.7], vec![0, 0], vec![]).unwrap();
        let ha = occupation_measure(&a, &grid, 0.0).unwrap();
        let hb = occupation_measure(&b, &grid, 0.0).unwrap();
        assert!((ha.l1_distance(&hb).unwrap() - 2.0).abs() < 1e-12);
        let m1 = ha.merge(&hb).unwrap();
        let m2 = hb.merge(&ha).unwrap();
        assert_eq!(m1, m2);
        assert!((m1.mass[0] - 0.25).abs() < 1e-12 && (m1.mass[2] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn time_fraction_of_half_interval() {
        let traj = Trajectory::from_parts(
            1,
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 1.0],
            vec![0, 1, 1],
            vec![SwitchEvent { time: 1.0, from: 0, to: 1 }],
        )
        .unwrap();
        let f = time_fraction(&traj, 0.0, 1000, |x, _| x[0] < 0.5).unwrap();
        assert!((f - 0.25).abs() < 1e-3);
        let f = time_fraction(&traj, 0.0, 1, |_, m| m == 1).unwrap();
        assert_eq!(f, 0.5);
    }

    #[test]
    fn slope_of_pure_decay() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let states: Vec<f64> = times.iter().map(|t| 3.0 * (-t).exp()).collect();
        let traj = Trajectory::from_parts(1, times, states, vec![0; 101], vec![]).unwrap();
        let rep = extinction_rate(&traj, NormComponent::Full, 5.0, -1.0).unwrap();
        assert!((rep.slope + 1.0).abs() < 1e-12);
        assert!(rep.pass && !rep.underflow);
        assert!(extinction_rate(&traj, NormComponent::Full, 6.0, -1.0).is_err());
    }

    #[test]
    fn underflow_counts_as_extinct() {
        let traj = Trajectory::from_parts(1, vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 1e-10, 0.0, 0.0], vec![0; 4], vec![])
            .unwrap();
        let rep = extinction_rate(&traj, NormComponent::Full, 0.0, -100.0).unwrap();
        assert!(rep.underflow && rep.pass);
        assert_eq!(rep.samples, 2);
    }

    #[test]
    fn exit_times() {
        let traj = Trajectory::from_parts(2, vec![0.0, 1.0, 2.0], vec![0.0, 5.0, 0.3, 5.0, 0.0, 0.0], vec![0; 3], vec![])
            .unwrap();
        assert_eq!(first_exit(&traj, 1, 0.0), Some(0.0));
        let t = first_exit(&traj, 1, 0.15).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        assert_eq!(first_exit(&traj, 1, 1.0), None);
    }
}
