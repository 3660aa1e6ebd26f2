//! Built-in systems: the switched Lorenz pair, the switched SIRS model and
//! small linear benchmarks, plus a string-keyed registry.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::jump::stationary_distribution;
use crate::lyapunov::{metzler_lower_bound, TIE_TOL};
use crate::system::{assemble_blocks, BoundingBox, LinearSwitchedSystem, RateMatrix, Split, SwitchedSystem};

fn symmetric_q() -> Vec<Vec<f64>> {
    vec![vec![-1.0, 1.0], vec![1.0, -1.0]]
}

fn q_from_rows(rows: &[Vec<f64>], modes: usize) -> Result<RateMatrix> {
    let q = RateMatrix::from_rows(rows)?;
    if q.size() != modes {
        return Err(invalid(format!("rate matrix is {0}x{0} but the model has {modes} modes", q.size())));
    }
    if !q.is_irreducible() {
        return Err(Error::Reducible);
    }
    Ok(q)
}

// ---------------------------------------------------------------- Lorenz

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzSwitchParams {
    pub sigma: [f64; 2],
    pub b: [f64; 2],
    pub r: [f64; 2],
    pub q: Vec<Vec<f64>>,
}

impl Default for LorenzSwitchParams {
    fn default() -> Self {
        LorenzSwitchParams { sigma: [10.0, 10.0], b: [8.0 / 3.0, 8.0 / 3.0], r: [28.0, 35.0], q: symmetric_q() }
    }
}

impl LorenzSwitchParams {
    pub fn validate(&self) -> Result<RateMatrix> {
        let all = self.sigma.iter().chain(&self.b).chain(&self.r);
        if all.into_iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("Lorenz parameters must be positive and finite"));
        }
        q_from_rows(&self.q, 2)
    }

    /// A ball `x^2 + y^2 + (z - c)^2 <= R^2` that is forward invariant for
    /// both fields, as `(c, R)`. `None` when the two fields are too far apart
    /// for a common ball of this shape.
    ///
    /// With `V = x^2 + y^2 + (z - c)^2` one has
    /// `V' = 2 k xy - 2 sigma x^2 - 2 y^2 - 2 b z^2 + 2 c b z` where
    /// `k = sigma + r - c`. Young's inequality on the cross term leaves a
    /// bounded ellipsoid outside of which `V' < 0`; `R^2` bounds `V` on it.
    pub fn invariant_ball(&self) -> Option<(f64, f64)> {
        let s: Vec<f64> = (0..2).map(|i| self.sigma[i] + self.r[i]).collect();
        let c = 0.5 * (s[0] + s[1]);
        let kappa = 0.5 * (s[0] - s[1]).abs();
        let sigma_min = self.sigma[0].min(self.sigma[1]);
        if kappa * kappa >= 4.0 * sigma_min {
            return None;
        }
        let eps = sigma_min.sqrt();
        let mut r2: f64 = 0.0;
        for i in 0..2 {
            let ax = 2.0 * self.sigma[i] - kappa * eps;
            let ay = 2.0 - kappa / eps;
            let rhs = 0.5 * c * c * self.b[i];
            r2 = r2.max(rhs / ax + rhs / ay);
        }
        // z stays in [0, c] on the ellipsoid, so (z - c)^2 <= c^2 there.
        r2 += c * c;
        Some((c, r2.sqrt()))
    }
}

#[derive(Debug, Clone)]
pub struct LorenzSwitch {
    params: LorenzSwitchParams,
    q: RateMatrix,
    ball: Option<(f64, f64)>,
}

pub fn lorenz_system(params: LorenzSwitchParams) -> Result<LorenzSwitch> {
    let q = params.validate()?;
    let ball = params.invariant_ball();
    Ok(LorenzSwitch { params, q, ball })
}

impl LorenzSwitch {
    pub fn params(&self) -> &LorenzSwitchParams {
        &self.params
    }

    pub fn q(&self) -> &RateMatrix {
        &self.q
    }

    pub fn invariant_ball(&self) -> Option<(f64, f64)> {
        self.ball
    }
}

impl SwitchedSystem for LorenzSwitch {
    fn dim(&self) -> usize {
        3
    }

    fn modes(&self) -> usize {
        2
    }

    fn field(&self, mode: usize, u: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let (x, y, z) = (u[0], u[1], u[2]);
        out[0] = p.sigma[mode] * (y - x);
        out[1] = p.r[mode] * x - y - x * z;
        out[2] = x * y - p.b[mode] * z;
    }

    fn jacobian(&self, mode: usize, u: &[f64]) -> DMatrix<f64> {
        let p = &self.params;
        let (x, y, z) = (u[0], u[1], u[2]);
        let s = p.sigma[mode];
        DMatrix::from_row_slice(3, 3, &[-s, s, 0.0, p.r[mode] - z, -1.0, -x, y, x, -p.b[mode]])
    }

    fn rates(&self, _x: &[f64]) -> DMatrix<f64> {
        self.q.matrix().clone()
    }

    fn rate_bound(&self) -> f64 {
        self.q.max_exit_rate()
    }

    fn constant_rates(&self) -> bool {
        true
    }

    fn split(&self) -> Option<Split> {
        Some(Split { n: 2, m: 1 })
    }

    fn bounding_box(&self) -> Option<BoundingBox> {
        let (c, r) = self.ball?;
        BoundingBox::new(vec![-r, -r, c - r], vec![r, r, c + r]).ok()
    }

    fn in_invariant_set(&self, u: &[f64]) -> Option<bool> {
        let (c, r) = self.ball?;
        let v = u[0] * u[0] + u[1] * u[1] + (u[2] - c) * (u[2] - c);
        Some(v <= r * r * (1.0 + 1e-12))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzBoundsReport {
    pub p: Vec<f64>,
    pub traces: Vec<f64>,
    pub metzler_bound: f64,
    pub lambda_d_plus: f64,
    /// The bound alone shows the lower B exponent is positive.
    pub predicts_positive: bool,
}

pub fn lorenz_b_blocks(params: &LorenzSwitchParams) -> Vec<DMatrix<f64>> {
    (0..2)
        .map(|i| DMatrix::from_row_slice(2, 2, &[-params.sigma[i], params.sigma[i], params.r[i], -1.0]))
        .collect()
}

pub fn lorenz_bounds_report(params: &LorenzSwitchParams) -> Result<LorenzBoundsReport> {
    let q = params.validate()?;
    let p = stationary_distribution(&q)?;
    let blocks = lorenz_b_blocks(params);
    let metzler_bound = metzler_lower_bound(&blocks, &p)?;
    Ok(LorenzBoundsReport {
        traces: blocks.iter().map(|b| b.trace()).collect(),
        metzler_bound,
        lambda_d_plus: -(p[0] * params.b[0] + p[1] * params.b[1]),
        predicts_positive: metzler_bound > 0.0,
        p,
    })
}

// ------------------------------------------------------------------ SIRS

/// Incidence function `G` with `G(0) = 0` and `G'(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Incidence {
    Linear,
    /// `I / (1 + c I)`.
    Saturating { c: f64 },
}

impl Incidence {
    pub fn value(&self, i: f64) -> f64 {
        match self {
            Incidence::Linear => i,
            Incidence::Saturating { c } => i / (1.0 + c * i),
        }
    }

    pub fn derivative(&self, i: f64) -> f64 {
        match self {
            Incidence::Linear => 1.0,
            Incidence::Saturating { c } => 1.0 / ((1.0 + c * i) * (1.0 + c * i)),
        }
    }

    pub fn slope_at_zero(&self) -> f64 {
        self.derivative(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirsParams {
    /// Birth inflow.
    pub inflow: f64,
    pub death: f64,
    pub beta: Vec<f64>,
    /// Loss of immunity, R to S.
    pub waning: Vec<f64>,
    pub disease_death: Vec<f64>,
    pub recovery: Vec<f64>,
    pub incidence: Vec<Incidence>,
    pub q: Vec<Vec<f64>>,
}

impl Default for SirsParams {
    fn default() -> Self {
        SirsParams {
            inflow: 1.0,
            death: 0.5,
            beta: vec![0.3, 0.6],
            waning: vec![0.3, 0.3],
            disease_death: vec![0.1, 0.1],
            recovery: vec![0.2, 0.2],
            incidence: vec![Incidence::Linear; 2],
            q: symmetric_q(),
        }
    }
}

impl SirsParams {
    pub fn environments(&self) -> usize {
        self.beta.len()
    }

    /// Total population level `Lambda / mu`.
    pub fn capacity(&self) -> f64 {
        self.inflow / self.death
    }

    pub fn validate(&self) -> Result<RateMatrix> {
        let n = self.environments();
        if n == 0 {
            return Err(invalid("SIRS needs at least one environment"));
        }
        for (name, v) in [
            ("waning", &self.waning),
            ("disease_death", &self.disease_death),
            ("recovery", &self.recovery),
        ] {
            if v.len() != n {
                return Err(invalid(format!("`{name}` has {} entries, expected {n}", v.len())));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(invalid(format!("`{name}` must be non-negative")));
            }
        }
        if self.beta.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid("`beta` must be non-negative"));
        }
        if self.incidence.len() != n {
            return Err(invalid(format!("`incidence` has {} entries, expected {n}", self.incidence.len())));
        }
        if !(self.inflow > 0.0 && self.death > 0.0 && self.inflow.is_finite() && self.death.is_finite()) {
            return Err(invalid("inflow and death rate must be positive"));
        }
        // 0 < G(I) <= G'(0) I on (0, capacity].
        let cap = self.capacity();
        for (k, g) in self.incidence.iter().enumerate() {
            if let Incidence::Saturating { c } = g {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(invalid(format!("saturation constant of environment {} must be >= 0", k + 1)));
                }
            }
            let slope = g.slope_at_zero();
            for j in 1..=64 {
                let i = cap * j as f64 / 64.0;
                let v = g.value(i);
                if !(v > 0.0 && v <= slope * i * (1.0 + 1e-12)) {
                    return Err(invalid(format!("incidence of environment {} violates 0 < G(I) <= G'(0) I", k + 1)));
                }
            }
        }
        q_from_rows(&self.q, n)
    }

    fn removal(&self, k: usize) -> f64 {
        self.death + self.disease_death[k] + self.recovery[k]
    }

    /// Original `(S, I, R)` from model coordinates `(I, R, S - Lambda/mu)`.
    pub fn to_original(&self, u: &[f64]) -> [f64; 3] {
        [u[2] + self.capacity(), u[0], u[1]]
    }

    pub fn from_original(&self, sir: [f64; 3]) -> [f64; 3] {
        [sir[1], sir[2], sir[0] - self.capacity()]
    }
}

#[derive(Debug, Clone)]
pub struct SirsSwitch {
    params: SirsParams,
    q: RateMatrix,
}

pub fn sirs_system(params: SirsParams) -> Result<SirsSwitch> {
    let q = params.validate()?;
    Ok(SirsSwitch { params, q })
}

impl SirsSwitch {
    pub fn params(&self) -> &SirsParams {
        &self.params
    }

    pub fn q(&self) -> &RateMatrix {
        &self.q
    }
}

impl SwitchedSystem for SirsSwitch {
    fn dim(&self) -> usize {
        3
    }

    fn modes(&self) -> usize {
        self.params.environments()
    }

    fn field(&self, k: usize, u: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let [s, i, r] = p.to_original(u);
        let infection = p.beta[k] * s * p.incidence[k].value(i);
        out[0] = infection - p.removal(k) * i;
        out[1] = p.recovery[k] * i - (p.death + p.waning[k]) * r;
        out[2] = p.inflow - p.death * s + p.waning[k] * r - infection;
    }

    fn jacobian(&self, k: usize, u: &[f64]) -> DMatrix<f64> {
        let p = &self.params;
        let [s, i, _] = p.to_original(u);
        let g = p.incidence[k].value(i);
        let dg = p.incidence[k].derivative(i);
        let b = p.beta[k];
        DMatrix::from_row_slice(
            3,
            3,
            &[
                b * s * dg - p.removal(k),
                0.0,
                b * g,
                p.recovery[k],
                -(p.death + p.waning[k]),
                0.0,
                -b * s * dg,
                p.waning[k],
                -p.death - b * g,
            ],
        )
    }

    fn rates(&self, _x: &[f64]) -> DMatrix<f64> {
        self.q.matrix().clone()
    }

    fn rate_bound(&self) -> f64 {
        self.q.max_exit_rate()
    }

    fn constant_rates(&self) -> bool {
        true
    }

    fn split(&self) -> Option<Split> {
        Some(Split { n: 1, m: 2 })
    }

    fn bounding_box(&self) -> Option<BoundingBox> {
        let cap = self.params.capacity();
        BoundingBox::new(vec![0.0, 0.0, -cap], vec![cap, cap, 0.0]).ok()
    }

    fn in_invariant_set(&self, u: &[f64]) -> Option<bool> {
        let cap = self.params.capacity();
        let tol = 1e-9 * cap;
        let sir = self.params.to_original(u);
        Some(sir.iter().all(|v| *v >= -tol) && sir.iter().sum::<f64>() <= cap + tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirsR0Report {
    pub r0: f64,
    pub lambda_b_plus: f64,
    pub p: Vec<f64>,
    /// `R0 < 1` exactly when `lambda_b_plus < 0`, ties at the tolerance.
    pub sign_consistent: bool,
}

pub fn sirs_r0(params: &SirsParams) -> Result<SirsR0Report> {
    let q = params.validate()?;
    let p = stationary_distribution(&q)?;
    let cap = params.capacity();
    let n = params.environments();
    let gain: f64 = (0..n).map(|k| p[k] * params.beta[k] * cap * params.incidence[k].slope_at_zero()).sum();
    let loss: f64 = (0..n).map(|k| p[k] * params.removal(k)).sum();
    let r0 = gain / loss;
    let lambda_b_plus = gain - loss;
    let sign = |v: f64, tol: f64| if v.abs() <= tol { 0 } else if v > 0.0 { 1 } else { -1 };
    let sign_consistent = sign(r0 - 1.0, TIE_TOL) == sign(lambda_b_plus, TIE_TOL * loss.max(1.0));
    Ok(SirsR0Report { r0, lambda_b_plus, p, sign_consistent })
}

/// `D`-block exponents `(-sum p_k (mu + waning_k), -mu)`.
pub fn sirs_d_exponents(params: &SirsParams) -> Result<(f64, f64)> {
    let p = stationary_distribution(&params.validate()?)?;
    let l1 = -(0..params.environments()).map(|k| p[k] * (params.death + params.waning[k])).sum::<f64>();
    Ok((l1, -params.death))
}

/// Interior equilibrium of environment `k` in original `(S, I, R)`
/// coordinates, found by damped Newton from the simplex barycentre.
/// `None` when Newton fails or lands outside the open simplex.
pub fn sirs_interior_equilibrium(params: &SirsParams, k: usize) -> Result<Option<[f64; 3]>> {
    let sys = sirs_system(params.clone())?;
    if k >= sys.modes() {
        return Err(invalid("environment index out of range"));
    }
    let cap = params.capacity();
    let mut u = DVector::from_column_slice(&params.from_original([cap / 4.0; 3]));
    let eval = |u: &DVector<f64>| {
        let mut f = DVector::zeros(3);
        sys.field(k, u.as_slice(), f.as_mut_slice());
        f
    };
    let mut f = eval(&u);
    for _ in 0..200 {
        if f.norm() < 1e-13 * cap.max(1.0) {
            break;
        }
        let Some(step) = sys.jacobian(k, u.as_slice()).lu().solve(&f) else {
            return Ok(None);
        };
        let mut t = 1.0;
        loop {
            let trial = &u - t * &step;
            let ft = eval(&trial);
            if ft.norm() < f.norm() * (1.0 - 1e-4 * t) || t < 1e-10 {
                u = trial;
                f = ft;
                break;
            }
            t *= 0.5;
        }
    }
    if f.norm() > 1e-9 * cap.max(1.0) {
        return Ok(None);
    }
    let sir = params.to_original(u.as_slice());
    let margin = 1e-9 * cap;
    let inside = sir.iter().all(|v| *v > margin) && sir.iter().sum::<f64>() < cap - margin;
    Ok(inside.then_some(sir))
}

// ---------------------------------------------------------------- linear

/// Lower-triangular 2-D system `[[b_i, 0], [c_i, d_i]]`.
pub fn triangular_2d(b: &[f64], c: &[f64], d: &[f64], q: RateMatrix) -> Result<LinearSwitchedSystem> {
    if b.len() != q.size() || c.len() != q.size() || d.len() != q.size() {
        return Err(invalid("b, c and d need one entry per mode"));
    }
    let mats = (0..q.size()).map(|i| DMatrix::from_row_slice(2, 2, &[b[i], 0.0, c[i], d[i]])).collect();
    LinearSwitchedSystem::new(mats, q)?.with_split(1)
}

fn default_block_system() -> Result<LinearSwitchedSystem> {
    let b = [
        DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -0.5]),
        DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 1.0, -2.0]),
    ];
    let c = [
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.5]),
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]),
    ];
    let d = [
        DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 1.0, -1.5]),
        DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.5]),
    ];
    let mats = (0..2).map(|i| assemble_blocks(&b[i], &c[i], &d[i])).collect();
    LinearSwitchedSystem::new(mats, RateMatrix::from_rows(&symmetric_q())?)?.with_split(2)
}

// -------------------------------------------------------------- registry

pub const MODEL_NAMES: [&str; 4] = ["lorenz-switch", "sirs", "linear-2d", "linear-block"];

#[derive(Debug, Clone)]
pub enum Model {
    Lorenz(LorenzSwitch),
    Sirs(SirsSwitch),
    Linear(LinearSwitchedSystem),
}

impl Model {
    pub fn system(&self) -> &dyn SwitchedSystem {
        match self {
            Model::Lorenz(m) => m,
            Model::Sirs(m) => m,
            Model::Linear(m) => m,
        }
    }
}

pub type Overrides = BTreeMap<String, String>;

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("override `{key}`: `{v}` is not a number")))
}

pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(key, s)).collect()
}

pub fn parse_matrix(key: &str, v: &str) -> Result<Vec<Vec<f64>>> {
    serde_json::from_str(v).map_err(|e| Error::Parse(format!("override `{key}`: {e}")))
}

/// Splits `beta2` into `("beta", 1)`; the index is 1-based in the key.
fn indexed(key: &str) -> Option<(&str, usize)> {
    let pos = key.find(|c: char| c.is_ascii_digit())?;
    let idx: usize = key[pos..].parse().ok()?;
    Some((&key[..pos], idx))
}

fn set_indexed(v: &mut [f64], key: &str, idx: usize, value: f64, base: usize) -> Result<()> {
    let slot = idx.checked_sub(base).filter(|i| *i < v.len());
    match slot {
        Some(i) => {
            v[i] = value;
            Ok(())
        }
        None => Err(invalid(format!("override `{key}` is out of range"))),
    }
}

/// Applies overrides to the Lorenz parameters. Indices follow the model's
/// 0-based mode labels: `sigma0`, `r1`, ...
pub fn apply_lorenz_overrides(p: &mut LorenzSwitchParams, ov: &Overrides) -> Result<()> {
    for (key, v) in ov {
        if key == "q" {
            p.q = parse_matrix(key, v)?;
            continue;
        }
        let (name, idx) = indexed(key).ok_or_else(|| invalid(format!("unknown lorenz-switch parameter `{key}`")))?;
        let value = parse_f64(key, v)?;
        let target = match name {
            "sigma" => &mut p.sigma,
            "b" => &mut p.b,
            "r" => &mut p.r,
            _ => return Err(invalid(format!("unknown lorenz-switch parameter `{key}`"))),
        };
        set_indexed(target, key, idx, value, 0)?;
    }
    Ok(())
}

/// Applies overrides to the SIRS parameters. Per-environment keys are
/// 1-based (`beta1`, `recovery2`); a bare name sets every environment
/// from a comma list.
pub fn apply_sirs_overrides(p: &mut SirsParams, ov: &Overrides) -> Result<()> {
    for (key, v) in ov {
        match key.as_str() {
            "inflow" => p.inflow = parse_f64(key, v)?,
            "death" => p.death = parse_f64(key, v)?,
            "q" => p.q = parse_matrix(key, v)?,
            "beta" => p.beta = parse_list(key, v)?,
            "waning" => p.waning = parse_list(key, v)?,
            "disease_death" => p.disease_death = parse_list(key, v)?,
            "recovery" => p.recovery = parse_list(key, v)?,
            _ => {
                let (name, idx) = indexed(key).ok_or_else(|| invalid(format!("unknown sirs parameter `{key}`")))?;
                let value = parse_f64(key, v)?;
                if name == "saturation" {
                    let slot = idx.checked_sub(1).filter(|i| *i < p.incidence.len());
                    let i = slot.ok_or_else(|| invalid(format!("override `{key}` is out of range")))?;
                    p.incidence[i] = if value == 0.0 { Incidence::Linear } else { Incidence::Saturating { c: value } };
                    continue;
                }
                let target = match name {
                    "beta" => &mut p.beta,
                    "waning" => &mut p.waning,
                    "disease_death" => &mut p.disease_death,
                    "recovery" => &mut p.recovery,
                    _ => return Err(invalid(format!("unknown sirs parameter `{key}`"))),
                };
                set_indexed(target, key, idx, value, 1)?;
            }
        }
    }
    Ok(())
}

/// Parameters of the 2-D triangular benchmark; the default sits in the
/// case where the lower exponent dominates and the cross terms are not
/// proportional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear2dParams {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

impl Default for Linear2dParams {
    fn default() -> Self {
        Linear2dParams { b: vec![-1.0, -1.0], c: vec![1.0, 2.0], d: vec![1.0, 1.0], q: symmetric_q() }
    }
}

pub fn apply_linear2d_overrides(p: &mut Linear2dParams, ov: &Overrides) -> Result<()> {
    for (key, v) in ov {
        match key.as_str() {
            "q" => p.q = parse_matrix(key, v)?,
            "b" => p.b = parse_list(key, v)?,
            "c" => p.c = parse_list(key, v)?,
            "d" => p.d = parse_list(key, v)?,
            _ => {
                let (name, idx) = indexed(key).ok_or_else(|| invalid(format!("unknown linear-2d parameter `{key}`")))?;
                let value = parse_f64(key, v)?;
                let target = match name {
                    "b" => &mut p.b,
                    "c" => &mut p.c,
                    "d" => &mut p.d,
                    _ => return Err(invalid(format!("unknown linear-2d parameter `{key}`"))),
                };
                set_indexed(target, key, idx, value, 1)?;
            }
        }
    }
    Ok(())
}

/// Builds a registered model, or loads a linear system from a file path.
pub fn build_model(name: &str, overrides: &Overrides) -> Result<Model> {
    match name {
        "lorenz-switch" => {
            let mut p = LorenzSwitchParams::default();
            apply_lorenz_overrides(&mut p, overrides)?;
            Ok(Model::Lorenz(lorenz_system(p)?))
        }
        "sirs" => {
            let mut p = SirsParams::default();
            apply_sirs_overrides(&mut p, overrides)?;
            Ok(Model::Sirs(sirs_system(p)?))
        }
        "linear-2d" => {
            let mut p = Linear2dParams::default();
            apply_linear2d_overrides(&mut p, overrides)?;
            let q = q_from_rows(&p.q, p.b.len())?;
            Ok(Model::Linear(triangular_2d(&p.b, &p.c, &p.d, q)?))
        }
        "linear-block" => {
            let sys = default_block_system()?;
            linear_with_overrides(sys, overrides)
        }
        path if Path::new(path).is_file() => linear_with_overrides(LinearSwitchedSystem::load(path)?, overrides),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

fn linear_with_overrides(sys: LinearSwitchedSystem, ov: &Overrides) -> Result<Model> {
    let mut sys = sys;
    for (key, v) in ov {
        if key != "q" {
            return Err(invalid(format!("linear systems only accept a `q` override, got `{key}`")));
        }
        let q = q_from_rows(&parse_matrix(key, v)?, sys.q().size())?;
        let split = sys.split();
        let mut next = LinearSwitchedSystem::new(sys.matrices().to_vec(), q)?;
        if let Some(s) = split {
            next = next.with_split(s.n)?;
        }
        sys = next;
    }
    Ok(Model::Linear(sys))
}
