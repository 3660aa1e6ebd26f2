//! Explicit Runge-Kutta integration between switching times.
//!
//! Every call integrates over a hard interval `[t0, t0 + duration]` and
//! lands exactly on its endpoint; a mode change never falls inside a step.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::system::LinearSwitchedSystem;

/// Smallest step the adaptive controller accepts before giving up.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Rk4Fixed { step: f64 },
    DormandPrinceAdaptive { abs_tol: f64, rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(flatten)]
    pub method: Method,
    /// Interval between renormalizations of sphere-valued states.
    pub renorm_period: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::adaptive(1e-9, 1e-9)
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig { method: Method::Rk4Fixed { step }, renorm_period: 1.0 }
    }

    pub fn adaptive(abs_tol: f64, rel_tol: f64) -> Self {
        IntegratorConfig {
            method: Method::DormandPrinceAdaptive { abs_tol, rel_tol },
            renorm_period: 1.0,
        }
    }

    pub fn with_renorm_period(mut self, period: f64) -> Self {
        self.renorm_period = period;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4Fixed { step } => step > 0.0 && step.is_finite(),
            Method::DormandPrinceAdaptive { abs_tol, rel_tol } => abs_tol > 0.0 && rel_tol > 0.0,
        };
        if !ok {
            return Err(invalid("integrator step and tolerances must be positive"));
        }
        if !(self.renorm_period > 0.0) {
            return Err(invalid("renorm_period must be positive"));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error weights: fifth-order minus embedded fourth-order solution.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Reusable integrator with preallocated stage buffers.
///
/// The adaptive controller carries its step size across calls, so a long
/// run split at many switching times does not restart from a guessed step.
#[derive(Debug, Clone)]
pub struct Integrator {
    cfg: IntegratorConfig,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    next: Vec<f64>,
    h: Option<f64>,
}

impl Integrator {
    pub fn new(cfg: IntegratorConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Integrator {
            cfg,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
            next: vec![0.0; dim],
            h: None,
        })
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    /// Integrates `x' = f(x)` in place from time `t0` over `duration`.
    pub fn advance<F>(&mut self, mut f: F, x: &mut [f64], t0: f64, duration: f64) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        if !(duration >= 0.0) {
            return Err(invalid("integration duration must be non-negative"));
        }
        if duration == 0.0 {
            return Ok(());
        }
        match self.cfg.method {
            Method::Rk4Fixed { step } => self.rk4(&mut f, x, t0, duration, step),
            Method::DormandPrinceAdaptive { abs_tol, rel_tol } => {
                self.dopri(&mut f, x, t0, duration, abs_tol, rel_tol)
            }
        }
    }

    fn rk4<F>(&mut self, f: &mut F, x: &mut [f64], t0: f64, duration: f64, step: f64) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let n = x.len();
        let mut done = 0.0;
        while done < duration {
            let mut h = step.min(duration - done);
            if duration - done - h < 1e-12 * step {
                h = duration - done;
            }
            let [k1, k2, k3, k4, ..] = &mut self.k;
            f(x, k1);
            for i in 0..n {
                self.stage[i] = x[i] + 0.5 * h * k1[i];
            }
            f(&self.stage, k2);
            for i in 0..n {
                self.stage[i] = x[i] + 0.5 * h * k2[i];
            }
            f(&self.stage, k3);
            for i in 0..n {
                self.stage[i] = x[i] + h * k3[i];
            }
            f(&self.stage, k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            done = if h == duration - done { duration } else { done + h };
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { t: t0 + done });
            }
        }
        Ok(())
    }

    fn initial_step<F>(&mut self, f: &mut F, x: &[f64], atol: f64, rtol: f64) -> f64
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        // Standard starting-step heuristic for an order-5 pair.
        let n = x.len();
        f(x, &mut self.k[0]);
        let sc = |v: f64| atol + rtol * v.abs();
        let rms = |it: &mut dyn Iterator<Item = f64>| (it.sum::<f64>() / n as f64).sqrt();
        let d0 = rms(&mut x.iter().map(|v| (v / sc(*v)).powi(2)));
        let d1 = rms(&mut x.iter().zip(&self.k[0]).map(|(v, k)| (k / sc(*v)).powi(2)));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for ((s, v), k) in self.stage.iter_mut().zip(x.iter()).zip(&self.k[0]) {
            *s = v + h0 * k;
        }
        f(&self.stage, &mut self.k[1]);
        let d2 = rms(&mut x
            .iter()
            .zip(self.k[1].iter().zip(&self.k[0]))
            .map(|(v, (a, b))| ((a - b) / sc(*v)).powi(2)))
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }

    fn dopri<F>(&mut self, f: &mut F, x: &mut [f64], t0: f64, duration: f64, atol: f64, rtol: f64) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let n = x.len();
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(f, x, atol, rtol),
        };
        let mut done = 0.0;
        let mut k1_valid = false;
        while done < duration {
            let remaining = duration - done;
            let last = h >= remaining;
            let hs = if last { remaining } else { h };
            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            let stage = &mut self.stage;
            if !k1_valid {
                f(x, k1);
            }
            for i in 0..n {
                stage[i] = x[i] + hs * A21 * k1[i];
            }
            f(stage, k2);
            for i in 0..n {
                stage[i] = x[i] + hs * (A31 * k1[i] + A32 * k2[i]);
            }
            f(stage, k3);
            for i in 0..n {
                stage[i] = x[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(stage, k4);
            for i in 0..n {
                stage[i] = x[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(stage, k5);
            for i in 0..n {
                stage[i] = x[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(stage, k6);
            for i in 0..n {
                self.next[i] = x[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(&self.next, k7);
            let mut err = 0.0;
            for i in 0..n {
                let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = atol + rtol * x[i].abs().max(self.next[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                if hs < MIN_STEP {
                    return Err(Error::NonFiniteState { t: t0 + done });
                }
                h = hs * 0.2;
                k1_valid = true;
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                x.copy_from_slice(&self.next);
                std::mem::swap(k1, k7);
                k1_valid = true;
                done = if last { duration } else { done + hs };
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteState { t: t0 + done });
                }
                // A step truncated to hit the endpoint says little about the
                // natural step size.
                if !last || factor < 1.0 {
                    h = hs * factor;
                }
            } else {
                h = hs * factor.min(1.0);
                k1_valid = true;
            }
            if h < MIN_STEP {
                return Err(Error::StepUnderflow { t: t0 + done, step: h });
            }
        }
        self.h = Some(h);
        Ok(())
    }
}

/// `phi_t(x0)` for an autonomous field.
pub fn flow<F>(field: F, x0: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut x = x0.to_vec();
    if t == 0.0 {
        return Ok(x);
    }
    let mut integ = Integrator::new(*cfg, x.len())?;
    integ.advance(field, &mut x, 0.0, t)?;
    Ok(x)
}

/// Row-major copy of a small square matrix for tight inner loops.
#[derive(Debug, Clone)]
pub(crate) struct SmallMat {
    k: usize,
    data: Vec<f64>,
}

impl SmallMat {
    pub(crate) fn from_dmatrix(a: &DMatrix<f64>) -> Self {
        let k = a.nrows();
        SmallMat { k, data: (0..k * k).map(|idx| a[(idx / k, idx % k)]).collect() }
    }

    #[inline]
    pub(crate) fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out[..self.k].iter_mut().enumerate() {
            let row = &self.data[i * self.k..(i + 1) * self.k];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Right-hand side of the projected angular equation
/// `theta' = A theta - <A theta, theta> theta`. When `state` carries one
/// extra slot after theta, it receives `<A theta, theta>` so that the
/// growth integral is accumulated alongside the direction.
#[inline]
pub(crate) fn angular_rhs(a: &SmallMat, state: &[f64], out: &mut [f64]) {
    let k = a.k;
    let theta = &state[..k];
    a.mul_into(theta, out);
    let rayleigh: f64 = out[..k].iter().zip(theta).map(|(u, v)| u * v).sum();
    for i in 0..k {
        out[i] -= rayleigh * theta[i];
    }
    if out.len() > k {
        out[k] = rayleigh;
    }
}

pub(crate) fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Direction of the linear flow of one mode, integrated on the sphere with
/// periodic renormalization.
pub fn flow_on_sphere(
    lin: &LinearSwitchedSystem,
    mode: usize,
    theta0: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    if mode >= lin.matrices().len() {
        return Err(invalid(format!("mode {} out of range", mode + 1)));
    }
    if theta0.len() != lin.k() {
        return Err(invalid("initial direction has the wrong dimension"));
    }
    let norm0 = theta0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm0 - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("initial direction is not a unit vector (|theta| = {norm0})")));
    }
    let a = SmallMat::from_dmatrix(lin.matrix(mode));
    let mut theta = theta0.to_vec();
    let mut integ = Integrator::new(*cfg, theta.len())?;
    let mut elapsed = 0.0;
    while elapsed < t {
        let chunk = cfg.renorm_period.min(t - elapsed);
        integ.advance(|s, o| angular_rhs(&a, s, o), &mut theta, elapsed, chunk)?;
        normalize(&mut theta);
        elapsed = if chunk == t - elapsed { t } else { elapsed + chunk };
    }
    normalize(&mut theta);
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::RateMatrix;

    fn single(a: DMatrix<f64>) -> LinearSwitchedSystem {
        LinearSwitchedSystem::new(vec![a], RateMatrix::new(DMatrix::zeros(1, 1)).unwrap()).unwrap()
    }

    #[test]
    fn zero_duration_is_identity() {
        let x = flow(|x, o| o[0] = x[0].powi(3), &[0.3], 0.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(x, vec![0.3]);
    }

    #[test]
    fn exponential_decay() {
        for cfg in [IntegratorConfig::default(), IntegratorConfig::rk4(1e-3)] {
            let x = flow(|x, o| o[0] = -x[0], &[1.0], 1.0, &cfg).unwrap();
            assert!((x[0] - (-1.0f64).exp()).abs() < 1e-8, "{cfg:?}: {}", x[0]);
        }
    }

    #[test]
    fn rotation_returns_after_full_period() {
        let rot = |x: &[f64], o: &mut [f64]| {
            o[0] = x[1];
            o[1] = -x[0];
        };
        let x = flow(rot, &[1.0, 0.0], 2.0 * std::f64::consts::PI, &IntegratorConfig::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && x[1].abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |h: f64| {
            let x = flow(|x, o| o[0] = -x[0], &[1.0], 1.0, &IntegratorConfig::rk4(h)).unwrap();
            (x[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn endpoint_is_hit_exactly_by_repeated_calls() {
        let mut integ = Integrator::new(IntegratorConfig::default(), 1).unwrap();
        let mut x = [1.0];
        for _ in 0..10 {
            integ.advance(|x, o| o[0] = -x[0], &mut x, 0.0, 0.1).unwrap();
        }
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn blow_up_is_reported() {
        let res = flow(|x, o| o[0] = x[0] * x[0], &[1.0], 2.0, &IntegratorConfig::rk4(1e-2));
        assert!(matches!(res, Err(Error::NonFiniteState { .. })));
        let res = flow(|x, o| o[0] = x[0] * x[0], &[1.0], 2.0, &IntegratorConfig::default());
        assert!(matches!(res, Err(Error::StepUnderflow { .. }) | Err(Error::NonFiniteState { .. })));
    }

    #[test]
    fn invalid_config() {
        assert!(IntegratorConfig::rk4(0.0).validate().is_err());
        assert!(IntegratorConfig::adaptive(1e-9, -1.0).validate().is_err());
        assert!(IntegratorConfig::default().with_renorm_period(0.0).validate().is_err());
    }

    #[test]
    fn identity_leaves_direction_fixed() {
        let lin = single(DMatrix::identity(3, 3));
        let th0 = [0.6, 0.0, 0.8];
        let th = flow_on_sphere(&lin, 0, &th0, 5.0, &IntegratorConfig::default()).unwrap();
        for (a, b) in th.iter().zip(th0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_direction_attracts() {
        let lin = single(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, -1.0])));
        let s = 0.5f64.sqrt();
        let th = flow_on_sphere(&lin, 0, &[s, s], 20.0, &IntegratorConfig::default()).unwrap();
        assert!((th[0] - 1.0).abs() < 1e-9 && th[1].abs() < 1e-9, "{th:?}");
        assert!((th.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn triangular_counterexample_converges_to_face() {
        // b < d with c != 0: the lower axis attracts.
        let lin = single(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 2.0, 1.0]));
        let th0 = [(1.0f64 - 1e-6).sqrt(), 1e-3];
        let th = flow_on_sphere(&lin, 0, &th0, 30.0, &IntegratorConfig::default()).unwrap();
        assert!(th[0].abs() < 1e-9 && (th[1].abs() - 1.0).abs() < 1e-9, "{th:?}");
    }

    #[test]
    fn rejects_non_unit_start() {
        let lin = single(DMatrix::identity(2, 2));
        assert!(flow_on_sphere(&lin, 0, &[1.0, 1.0], 1.0, &IntegratorConfig::default()).is_err());
    }
}
