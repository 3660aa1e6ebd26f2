//! Simulation of the switching process and of the full PDMP.
//!
//! Constant generators are sampled exactly (exponential holding times).
//! State-dependent generators use thinning against the system's declared
//! `rate_bound`: candidate times come from a Poisson clock of that
//! intensity and are accepted with probability `total_rate(x) / bound`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrate::{Integrator, IntegratorConfig};
use crate::system::{RateMatrix, SwitchedSystem};
use crate::trajectory::{SwitchEvent, Trajectory};

pub type SimRng = ChaCha8Rng;

/// Seed for replicate `index` of an ensemble. Depends only on the pair, so
/// ensembles give the same answer in any execution order.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub horizon: f64,
    pub sample_dt: f64,
    pub seed: u64,
    pub init_state: Vec<f64>,
    /// 0-based.
    pub init_mode: usize,
}

impl SimulationPlan {
    pub fn validate(&self, sys: &dyn SwitchedSystem) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon must be positive and finite"));
        }
        if !(self.sample_dt > 0.0 && self.sample_dt <= self.horizon) {
            return Err(invalid("sample_dt must satisfy 0 < sample_dt <= horizon"));
        }
        if self.init_state.len() != sys.dim() {
            return Err(invalid(format!(
                "initial state has {} coordinates, system has {}",
                self.init_state.len(),
                sys.dim()
            )));
        }
        if self.init_mode >= sys.modes() {
            return Err(invalid(format!("initial mode {} out of range", self.init_mode + 1)));
        }
        Ok(())
    }
}

/// Unique `p` with `p Q = 0`, `sum p = 1`.
pub fn stationary_distribution(q: &RateMatrix) -> Result<Vec<f64>> {
    if !q.is_irreducible() {
        return Err(Error::Reducible);
    }
    let n = q.size();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // Q^T p = 0 with the last equation replaced by the normalization.
    let mut m = q.matrix().transpose();
    m.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = m.clone().lu();
    let mut p = lu.solve(&rhs).ok_or(Error::Reducible)?;
    // One step of iterative refinement.
    let r = &rhs - &m * &p;
    if let Some(dp) = lu.solve(&r) {
        p += dp;
    }
    let p: Vec<f64> = p.iter().copied().collect();
    if p.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Reducible);
    }
    Ok(p)
}

/// `|p Q|_inf`.
pub fn stationary_residual(q: &RateMatrix, p: &[f64]) -> f64 {
    let pv = DVector::from_column_slice(p);
    (q.matrix().transpose() * pv).amax()
}

/// Path of the switching chain on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainPath {
    pub init_mode: usize,
    pub horizon: f64,
    pub events: Vec<SwitchEvent>,
}

impl ChainPath {
    /// Maximal constant-mode intervals `(start, end, mode)`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        let starts = std::iter::once((0.0, self.init_mode)).chain(self.events.iter().map(|e| (e.time, e.to)));
        let ends = self.events.iter().map(|e| e.time).chain(std::iter::once(self.horizon));
        starts.zip(ends).map(|((s, mode), e)| (s, e, mode))
    }

    /// Fraction of `[0, horizon]` spent in each mode.
    pub fn occupation(&self, modes: usize) -> Vec<f64> {
        let mut time = vec![0.0; modes];
        for (s, e, mode) in self.segments() {
            time[mode] += e - s;
        }
        time.iter_mut().for_each(|t| *t /= self.horizon);
        time
    }

    pub fn mode_at(&self, t: f64) -> usize {
        let idx = self.events.partition_point(|e| e.time <= t);
        if idx == 0 {
            self.init_mode
        } else {
            self.events[idx - 1].to
        }
    }
}

fn pick_target(row: impl Fn(usize) -> f64, from: usize, n: usize, total: f64, rng: &mut SimRng) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = from;
    for j in (0..n).filter(|&j| j != from) {
        let r = row(j);
        if r <= 0.0 {
            continue;
        }
        acc += r;
        last = j;
        if u < acc {
            return j;
        }
    }
    last
}

/// Exact simulation of the chain: holding time `Exp(-Q_ii)`, then a jump
/// to `j` with probability `Q_ij / -Q_ii`.
pub fn simulate_chain(q: &RateMatrix, init_mode: usize, horizon: f64, seed: u64) -> Result<ChainPath> {
    if init_mode >= q.size() {
        return Err(invalid(format!("initial mode {} out of range", init_mode + 1)));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon must be positive and finite"));
    }
    let mut rng = rng_from_seed(seed);
    Ok(sample_chain(q, init_mode, horizon, &mut rng))
}

pub(crate) fn sample_chain(q: &RateMatrix, init_mode: usize, horizon: f64, rng: &mut SimRng) -> ChainPath {
    let n = q.size();
    let mut mode = init_mode;
    let mut t = 0.0;
    let mut events = Vec::new();
    loop {
        let exit = q.exit_rate(mode);
        if exit <= 0.0 {
            break;
        }
        t += Exp::new(exit).expect("positive rate").sample(rng);
        if t >= horizon {
            break;
        }
        let to = pick_target(|j| q.rate(mode, j), mode, n, exit, rng);
        events.push(SwitchEvent { time: t, from: mode, to });
        mode = to;
    }
    ChainPath { init_mode, horizon, events }
}

/// Full PDMP path: flow of `F^{I_t}` between switches, switching driven by
/// `a(X_t)`.
pub fn simulate_pdmp(sys: &dyn SwitchedSystem, plan: &SimulationPlan, cfg: &IntegratorConfig) -> Result<Trajectory> {
    plan.validate(sys)?;
    run(sys, plan, cfg, None)
}

/// Same process restricted to the invariant face: the transverse
/// coordinates are held at exact zero and only the face coordinates are
/// integrated, with fields `F_m^i(0_n, .)`.
pub fn simulate_on_face(sys: &dyn SwitchedSystem, plan: &SimulationPlan, cfg: &IntegratorConfig) -> Result<Trajectory> {
    plan.validate(sys)?;
    let split = sys.split().ok_or(Error::MissingSplit)?;
    if plan.init_state[..split.n].iter().any(|v| *v != 0.0) {
        return Err(Error::NotOnFace);
    }
    run(sys, plan, cfg, Some(split.n))
}

enum Clock {
    Exact(RateMatrix),
    Thinning(f64),
}

fn run(sys: &dyn SwitchedSystem, plan: &SimulationPlan, cfg: &IntegratorConfig, face: Option<usize>) -> Result<Trajectory> {
    let d = sys.dim();
    let offset = face.unwrap_or(0);
    let mut rng = rng_from_seed(plan.seed);
    let mut integ = Integrator::new(*cfg, d - offset)?;
    let mut full = plan.init_state.clone();
    let mut y = full[offset..].to_vec();
    let mut scratch_in = vec![0.0; d];
    let mut scratch_out = vec![0.0; d];
    let n_modes = sys.modes();

    let clock = if sys.constant_rates() {
        Clock::Exact(RateMatrix::new(sys.rates(&plan.init_state))?)
    } else {
        let bound = sys.rate_bound();
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(invalid("rate_bound must be finite and non-negative"));
        }
        Clock::Thinning(bound)
    };
    let draw_next = |t: f64, mode: usize, rng: &mut SimRng| -> f64 {
        let rate = match &clock {
            Clock::Exact(q) => q.exit_rate(mode),
            Clock::Thinning(bound) => *bound,
        };
        if rate > 0.0 {
            t + Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        }
    };

    let mut traj = Trajectory::new(d);
    let mut mode = plan.init_mode;
    let mut t = 0.0;
    traj.push(t, &full, mode);
    let mut sample_idx: u64 = 1;
    let sample_time = |k: u64| (k as f64 * plan.sample_dt).min(plan.horizon);
    let mut candidate = draw_next(t, mode, &mut rng);

    while t < plan.horizon {
        let next_sample = sample_time(sample_idx);
        let target = candidate.min(next_sample);
        {
            let m = mode;
            let rhs = |state: &[f64], out: &mut [f64]| {
                if offset == 0 {
                    sys.field(m, state, out);
                } else {
                    scratch_in[offset..].copy_from_slice(state);
                    sys.field(m, &scratch_in, &mut scratch_out);
                    out.copy_from_slice(&scratch_out[offset..]);
                }
            };
            integ.advance(rhs, &mut y, t, target - t)?;
        }
        t = target;
        full[offset..].copy_from_slice(&y);
        if full.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t });
        }

        let mut record = false;
        if t == candidate {
            let switched = match &clock {
                Clock::Exact(q) => {
                    let total = q.exit_rate(mode);
                    Some(pick_target(|j| q.rate(mode, j), mode, n_modes, total, &mut rng))
                }
                Clock::Thinning(bound) => {
                    let a = sys.rates(&full);
                    let total: f64 = (0..n_modes).filter(|&j| j != mode).map(|j| a[(mode, j)]).sum();
                    if total > *bound * (1.0 + 1e-12) {
                        return Err(Error::RateBoundViolated { total, bound: *bound, t });
                    }
                    let u: f64 = rng.random();
                    if u * bound < total {
                        Some(pick_target(|j| a[(mode, j)], mode, n_modes, total, &mut rng))
                    } else {
                        None
                    }
                }
            };
            if let Some(to) = switched {
                traj.push_event(SwitchEvent { time: t, from: mode, to });
                mode = to;
                record = true;
            }
            candidate = draw_next(t, mode, &mut rng);
        }
        if t == next_sample {
            sample_idx += 1;
            record = true;
        }
        if record {
            traj.push(t, &full, mode);
        }
    }
    Ok(traj)
}

/// Long-run mode occupation as a `(fractions, standard errors)` pair over
/// independent chain replicates.
pub fn chain_occupation_ensemble(
    q: &RateMatrix,
    init_mode: usize,
    horizon: f64,
    replicates: usize,
    master_seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = q.size();
    let runs = (0..replicates)
        .map(|r| simulate_chain(q, init_mode, horizon, replicate_seed(master_seed, r as u64)).map(|p| p.occupation(n)))
        .collect::<Result<Vec<_>>>()?;
    let stats = (0..n)
        .map(|i| crate::stats::mean_and_se(&runs.iter().map(|o| o[i]).collect::<Vec<_>>()))
        .collect::<Vec<_>>();
    Ok((stats.iter().map(|s| s.0).collect(), stats.iter().map(|s| s.1).collect()))
}
