use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// A mode switch at an exact time. Modes are 0-based in memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

/// Sampled path of `Z_t = (X_t, I_t)` plus the exact switching log.
///
/// Samples are taken on the regular output grid and additionally at every
/// switching time, so the mode on `[times[k], times[k + 1])` is `modes[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    modes: Vec<usize>,
    events: Vec<SwitchEvent>,
}

impl Trajectory {
    pub fn new(dim: usize) -> Self {
        Trajectory { dim, times: Vec::new(), states: Vec::new(), modes: Vec::new(), events: Vec::new() }
    }

    /// Builds a trajectory from raw parts, checking the ordering invariants.
    pub fn from_parts(
        dim: usize,
        times: Vec<f64>,
        states: Vec<f64>,
        modes: Vec<usize>,
        events: Vec<SwitchEvent>,
    ) -> crate::Result<Self> {
        let traj = Trajectory { dim, times, states, modes, events };
        traj.check()?;
        Ok(traj)
    }

    pub(crate) fn push(&mut self, t: f64, x: &[f64], mode: usize) {
        debug_assert_eq!(x.len(), self.dim);
        if self.times.last() == Some(&t) {
            // Coincident sample and switch: keep the post-switch record.
            let k = self.times.len() - 1;
            self.states[k * self.dim..].copy_from_slice(x);
            self.modes[k] = mode;
            return;
        }
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.modes.push(mode);
    }

    pub(crate) fn push_event(&mut self, event: SwitchEvent) {
        self.events.push(event);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn events(&self) -> &[SwitchEvent] {
        &self.events
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn start_time(&self) -> f64 {
        self.times.first().copied().unwrap_or(0.0)
    }

    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn horizon(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn check(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::InvalidInput(format!("trajectory: {m}")));
        if self.states.len() != self.times.len() * self.dim || self.modes.len() != self.times.len() {
            return bad("sample arrays have mismatched lengths");
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("times are not strictly increasing");
        }
        let (t0, t1) = (self.start_time(), self.end_time());
        if self.events.iter().any(|e| e.time < t0 || e.time > t1) {
            return bad("event outside the sampled window");
        }
        Ok(())
    }

    /// `t,x_1..x_d,mode` with 1-based modes and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for i in 1..=self.dim {
            write!(w, ",x_{i}")?;
        }
        writeln!(w, ",mode")?;
        for k in 0..self.len() {
            write!(w, "{}", fmt_f64(self.times[k]))?;
            for v in self.state(k) {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            writeln!(w, ",{}", self.modes[k] + 1)?;
        }
        Ok(())
    }

    /// `t,from,to` with 1-based modes.
    pub fn write_events_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,from,to")?;
        for e in &self.events {
            writeln!(w, "{},{},{}", fmt_f64(e.time), e.from + 1, e.to + 1)?;
        }
        Ok(())
    }
}

/// Fixed 17-significant-digit scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
