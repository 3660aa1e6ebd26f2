//! Switched systems, their linearization at the common equilibrium, and
//! structural checks on the invariant face.
//!
//! Modes are 0-based inside the crate. Anything user facing (files, CLI,
//! reports) shifts them to 1-based.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Absolute tolerance on the upper-right block of a block-triangular matrix.
pub const TRIANGULAR_TOL: f64 = 1e-12;
/// Tolerance for `F^i(0) = 0` and for face invariance residuals.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;
const ROW_SUM_TOL: f64 = 1e-12;

/// Split of the state space into the transverse block (first `n`
/// coordinates) and the invariant face `{0_n} x R^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub n: usize,
    pub m: usize,
}

impl Split {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(invalid("split blocks must both be non-empty"));
        }
        Ok(Split { n, m })
    }
}

/// Axis-aligned box, used as a histogram region and for containment checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(invalid("bounding box corners must have equal, non-zero length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(invalid("bounding box must have lower < upper on every axis"));
        }
        Ok(BoundingBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

/// A validated continuous-time Markov chain generator: non-negative
/// off-diagonal entries and zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix(DMatrix<f64>);

impl RateMatrix {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(Error::InvalidRateMatrix("matrix must be square and non-empty".into()));
        }
        let scale = q.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..q.nrows() {
            let mut row_sum = 0.0;
            for j in 0..q.ncols() {
                let v = q[(i, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidRateMatrix(format!("non-finite entry at ({}, {})", i + 1, j + 1)));
                }
                if i != j && v < 0.0 {
                    return Err(Error::InvalidRateMatrix(format!(
                        "negative off-diagonal entry {v} at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
                row_sum += v;
            }
            if row_sum.abs() > ROW_SUM_TOL * scale {
                return Err(Error::InvalidRateMatrix(format!("row {} sums to {row_sum:e}", i + 1)));
            }
        }
        Ok(RateMatrix(q))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidRateMatrix("rows must all have length N".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Two-state generator `[[-a, a], [b, -b]]`.
    pub fn two_state(a: f64, b: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.0[(from, to)]
    }

    /// Total rate of leaving `mode`.
    pub fn exit_rate(&self, mode: usize) -> f64 {
        (0..self.size()).filter(|&j| j != mode).map(|j| self.0[(mode, j)]).sum()
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.size()).map(|i| self.exit_rate(i)).fold(0.0, f64::max)
    }

    /// Strong connectivity of the graph of positive off-diagonal rates.
    #[allow(clippy::needless_range_loop)]
    pub fn is_irreducible(&self) -> bool {
        let n = self.size();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    let r = if forward { self.0[(i, j)] } else { self.0[(j, i)] };
                    if i != j && r > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.size()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }
}

/// A finite family of vector fields `F^i` on `R^d` switched by a
/// (possibly state-dependent) rate matrix `a(x)`.
///
/// Implementations must be pure functions of their arguments; systems are
/// shared read-only between ensemble workers.
pub trait SwitchedSystem: Send + Sync {
    fn dim(&self) -> usize;

    fn modes(&self) -> usize;

    /// Writes `F^mode(x)` into `out`.
    fn field(&self, mode: usize, x: &[f64], out: &mut [f64]);

    /// `DF^mode(x)`. Defaults to central finite differences.
    fn jacobian(&self, mode: usize, x: &[f64]) -> DMatrix<f64> {
        fd_jacobian(|y, out| self.field(mode, y, out), x)
    }

    fn rates(&self, x: &[f64]) -> DMatrix<f64>;

    /// Upper bound on `max_i sum_{j != i} a_ij(x)` over the invariant set.
    fn rate_bound(&self) -> f64;

    /// True when `rates` does not depend on `x`; enables exact exponential
    /// switching instead of thinning.
    fn constant_rates(&self) -> bool {
        false
    }

    fn split(&self) -> Option<Split> {
        None
    }

    fn bounding_box(&self) -> Option<BoundingBox> {
        None
    }

    /// Membership in the declared forward-invariant set `M`, when known.
    fn in_invariant_set(&self, _x: &[f64]) -> Option<bool> {
        None
    }
}

/// Central finite-difference Jacobian, step `1e-6 * max(1, |x|)`.
pub fn fd_jacobian(f: impl Fn(&[f64], &mut [f64]), x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = 1e-6 * norm.max(1.0);
    let mut jac = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; d];
    let mut fm = vec![0.0; d];
    for j in 0..d {
        xp[j] = x[j] + h;
        f(&xp, &mut fp);
        xp[j] = x[j] - h;
        f(&xp, &mut fm);
        xp[j] = x[j];
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Linear switched system `dY/dt = A^{J_t} Y` with `J` a Markov chain
/// driven by the constant generator `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSwitchedSystem {
    matrices: Vec<DMatrix<f64>>,
    q: RateMatrix,
    split: Option<Split>,
}

impl LinearSwitchedSystem {
    pub fn new(matrices: Vec<DMatrix<f64>>, q: RateMatrix) -> Result<Self> {
        if matrices.is_empty() {
            return Err(invalid("at least one matrix is required"));
        }
        let k = matrices[0].nrows();
        if k == 0 || matrices.iter().any(|a| a.nrows() != k || a.ncols() != k) {
            return Err(invalid("matrices must all be square of the same non-zero size"));
        }
        if matrices.len() != q.size() {
            return Err(invalid(format!(
                "{} matrices given for a {}-state rate matrix",
                matrices.len(),
                q.size()
            )));
        }
        if !q.is_irreducible() {
            return Err(Error::Reducible);
        }
        Ok(LinearSwitchedSystem { matrices, q, split: None })
    }

    /// Declares the face `{0_n} x R^{k-n}` as invariant. Fails unless the
    /// matrices are block lower triangular for that split.
    pub fn with_split(mut self, n: usize) -> Result<Self> {
        let dec = block_decompose(&self, n, true)?;
        self.split = Some(Split::new(dec.n, dec.m)?);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn matrix(&self, mode: usize) -> &DMatrix<f64> {
        &self.matrices[mode]
    }

    pub fn q(&self) -> &RateMatrix {
        &self.q
    }

    /// Same switching, different matrices (e.g. one diagonal block).
    pub fn with_matrices(&self, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        LinearSwitchedSystem::new(matrices, self.q.clone())
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let file: LinearSystemFile = toml::from_str(src).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_system()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        let file = LinearSystemFile {
            modes: self.matrices.len(),
            dim: self.k(),
            q: self.q.rows(),
            matrices: self
                .matrices
                .iter()
                .map(|a| a.transpose().iter().copied().collect())
                .collect(),
            split: self.split.map(|s| s.n),
        };
        toml::to_string(&file).expect("plain numeric tables always serialize")
    }
}

/// On-disk form of a custom linear system. Matrices are row-major.
#[derive(Debug, Serialize, Deserialize)]
struct LinearSystemFile {
    modes: usize,
    dim: usize,
    q: Vec<Vec<f64>>,
    matrices: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<usize>,
}

impl LinearSystemFile {
    fn into_system(self) -> Result<LinearSwitchedSystem> {
        if self.q.len() != self.modes || self.matrices.len() != self.modes {
            return Err(Error::Parse(format!(
                "expected {} modes, got q with {} rows and {} matrices",
                self.modes,
                self.q.len(),
                self.matrices.len()
            )));
        }
        let k = self.dim;
        let mats = self
            .matrices
            .iter()
            .enumerate()
            .map(|(i, entries)| {
                if entries.len() != k * k {
                    Err(Error::Parse(format!("matrix {} has {} entries, expected {}", i + 1, entries.len(), k * k)))
                } else {
                    Ok(DMatrix::from_row_slice(k, k, entries))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let sys = LinearSwitchedSystem::new(mats, RateMatrix::from_rows(&self.q)?)?;
        match self.split {
            Some(n) => sys.with_split(n),
            None => Ok(sys),
        }
    }
}

impl SwitchedSystem for LinearSwitchedSystem {
    fn dim(&self) -> usize {
        self.k()
    }

    fn modes(&self) -> usize {
        self.matrices.len()
    }

    fn field(&self, mode: usize, x: &[f64], out: &mut [f64]) {
        let a = &self.matrices[mode];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..x.len()).map(|j| a[(i, j)] * x[j]).sum();
        }
    }

    fn jacobian(&self, mode: usize, _x: &[f64]) -> DMatrix<f64> {
        self.matrices[mode].clone()
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
        self.split
    }
}

/// Checks that `rates(x)` is a valid generator at `x`.
pub fn check_rates_at(sys: &dyn SwitchedSystem, x: &[f64]) -> Result<RateMatrix> {
    let q = sys.rates(x);
    if q.nrows() != sys.modes() {
        return Err(Error::InvalidRateMatrix(format!(
            "rates() returned {}x{} for {} modes",
            q.nrows(),
            q.ncols(),
            sys.modes()
        )));
    }
    RateMatrix::new(q)
}

/// `A^i = DF^i(0)` together with the generator `a(0)`.
pub fn linearize_at_origin(sys: &dyn SwitchedSystem) -> Result<LinearSwitchedSystem> {
    let d = sys.dim();
    let origin = vec![0.0; d];
    let mut out = vec![0.0; d];
    for mode in 0..sys.modes() {
        sys.field(mode, &origin, &mut out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= EQUILIBRIUM_TOL) {
            return Err(Error::OriginNotEquilibrium { mode: mode + 1, norm });
        }
    }
    let q = check_rates_at(sys, &origin)?;
    let mats = (0..sys.modes()).map(|i| sys.jacobian(i, &origin)).collect();
    LinearSwitchedSystem::new(mats, q)
}

/// Blocks of `A^i = [[B^i, 0], [C^i, D^i]]`.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub n: usize,
    pub m: usize,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub d: Vec<DMatrix<f64>>,
    /// Largest absolute entry of any upper-right `n x m` block.
    pub residual: f64,
}

impl BlockDecomposition {
    pub fn is_valid(&self) -> bool {
        self.residual <= TRIANGULAR_TOL
    }
}

/// Splits each matrix at `n`. In strict mode a non-triangular family is an
/// error; otherwise the residual is reported for the caller to judge.
pub fn block_decompose(lin: &LinearSwitchedSystem, n: usize, strict: bool) -> Result<BlockDecomposition> {
    let k = lin.k();
    if n == 0 || n >= k {
        return Err(invalid(format!("block size must satisfy 0 < n < {k}, got {n}")));
    }
    let m = k - n;
    let mut dec = BlockDecomposition { n, m, b: vec![], c: vec![], d: vec![], residual: 0.0 };
    for a in lin.matrices() {
        let upper_right = a.view((0, n), (n, m));
        dec.residual = upper_right.iter().fold(dec.residual, |r, v| r.max(v.abs()));
        dec.b.push(a.view((0, 0), (n, n)).into_owned());
        dec.c.push(a.view((n, 0), (m, n)).into_owned());
        dec.d.push(a.view((n, n), (m, m)).into_owned());
    }
    if strict && !dec.is_valid() {
        return Err(Error::NotTriangular { residual: dec.residual });
    }
    Ok(dec)
}

/// Reassembles `[[B, 0], [C, D]]`.
pub fn assemble_blocks(b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (b.nrows(), d.nrows());
    let mut a = DMatrix::zeros(n + m, n + m);
    a.view_mut((0, 0), (n, n)).copy_from(b);
    a.view_mut((n, 0), (m, n)).copy_from(c);
    a.view_mut((n, n), (m, m)).copy_from(d);
    a
}

#[derive(Debug, Clone, Serialize)]
pub struct FaceInvarianceReport {
    pub samples: usize,
    pub radius: f64,
    pub max_residual: f64,
    pub pass: bool,
}

/// Samples `x_m` uniformly in the ball of the given radius and evaluates
/// `|F_n^i(0_n, x_m)|` for every mode.
pub fn validate_face_invariance(
    sys: &dyn SwitchedSystem,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<FaceInvarianceReport> {
    let split = sys.split().ok_or(Error::MissingSplit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0_f64, 1.0).expect("valid range");
    let d = sys.dim();
    let mut x = vec![0.0; d];
    let mut out = vec![0.0; d];
    let mut max_residual = 0.0_f64;
    for _ in 0..samples {
        let dir = DVector::<f64>::from_fn(split.m, |_, _| StandardNormal.sample(&mut rng));
        let r = radius * unit.sample(&mut rng).powf(1.0 / split.m as f64);
        let dir = dir.normalize() * r;
        x[..split.n].fill(0.0);
        x[split.n..].copy_from_slice(dir.as_slice());
        for mode in 0..sys.modes() {
            sys.field(mode, &x, &mut out);
            let res = out[..split.n].iter().map(|v| v * v).sum::<f64>().sqrt();
            max_residual = max_residual.max(res);
        }
    }
    Ok(FaceInvarianceReport {
        samples,
        radius,
        max_residual,
        pass: max_residual <= EQUILIBRIUM_TOL,
    })
}
