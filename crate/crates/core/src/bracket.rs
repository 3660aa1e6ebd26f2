//! Numerical Lie-bracket rank at a point.
//!
//! Generators are kept as expression trees and evaluated on demand. The
//! derivative of a bracket is taken by central differences of its own
//! evaluation, which nests one difference quotient per bracket level.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::system::SwitchedSystem;

/// Relative threshold on singular values.
pub const RANK_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BracketKind {
    /// Start from the fields themselves.
    Weak,
    /// Start from pairwise differences of the fields.
    Strong,
}

#[derive(Debug, Clone)]
enum Generator {
    Field(usize),
    Difference(usize, usize),
    /// `[F^i, V]`.
    Bracket(usize, Box<Generator>),
}

fn field_vec(sys: &dyn SwitchedSystem, mode: usize, x: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(sys.dim());
    sys.field(mode, x, out.as_mut_slice());
    out
}

fn eval(sys: &dyn SwitchedSystem, g: &Generator, x: &[f64]) -> DVector<f64> {
    match g {
        Generator::Field(i) => field_vec(sys, *i, x),
        Generator::Difference(i, j) => field_vec(sys, *i, x) - field_vec(sys, *j, x),
        Generator::Bracket(i, v) => {
            // [F, V](x) = DV(x) F(x) - DF(x) V(x)
            let f = field_vec(sys, *i, x);
            let vx = eval(sys, v, x);
            directional(sys, v, x, &f) - sys.jacobian(*i, x) * vx
        }
    }
}

/// `DV(x) w`.
fn directional(sys: &dyn SwitchedSystem, g: &Generator, x: &[f64], w: &DVector<f64>) -> DVector<f64> {
    match g {
        Generator::Field(i) => sys.jacobian(*i, x) * w,
        Generator::Difference(i, j) => (sys.jacobian(*i, x) - sys.jacobian(*j, x)) * w,
        Generator::Bracket(..) => {
            let wn = w.norm();
            if wn == 0.0 {
                return DVector::zeros(x.len());
            }
            let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let h = FD_STEP * xn.max(1.0) / wn;
            let plus: Vec<f64> = x.iter().zip(w.iter()).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = x.iter().zip(w.iter()).map(|(a, b)| a - h * b).collect();
            (eval(sys, g, &plus) - eval(sys, g, &minus)) / (2.0 * h)
        }
    }
}

/// Numerical rank of the columns: singular values above `RANK_TOL` times
/// the largest.
pub fn numerical_rank(vectors: &[DVector<f64>]) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let m = DMatrix::from_columns(vectors);
    let sv = m.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * top).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketRank {
    pub rank: usize,
    /// Bracket depth at which the search stopped.
    pub depth_used: usize,
    pub dim: usize,
    pub generators: usize,
}

impl BracketRank {
    pub fn is_full(&self) -> bool {
        self.rank == self.dim
    }

    /// Turns a rank deficit into `DepthExceeded`.
    pub fn require_full(self) -> Result<Self> {
        if self.is_full() {
            Ok(self)
        } else {
            Err(Error::DepthExceeded { rank: self.rank, depth: self.depth_used })
        }
    }
}

fn base_family(modes: usize, kind: BracketKind) -> Vec<Generator> {
    match kind {
        BracketKind::Weak => (0..modes).map(Generator::Field).collect(),
        BracketKind::Strong => {
            let mut out = Vec::new();
            for i in 0..modes {
                for j in i + 1..modes {
                    out.push(Generator::Difference(i, j));
                }
            }
            out
        }
    }
}

fn check_point(sys: &dyn SwitchedSystem, x: &[f64]) -> Result<()> {
    if x.len() != sys.dim() {
        return Err(invalid(format!("point has dimension {}, system has {}", x.len(), sys.dim())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("point must be finite"));
    }
    Ok(())
}

/// All generator values up to `depth` bracket levels, level by level.
pub fn bracket_vectors(sys: &dyn SwitchedSystem, x: &[f64], kind: BracketKind, depth: usize) -> Result<Vec<Vec<DVector<f64>>>> {
    check_point(sys, x)?;
    let mut level = base_family(sys.modes(), kind);
    let mut out = Vec::with_capacity(depth + 1);
    for k in 0..=depth {
        out.push(level.iter().map(|g| eval(sys, g, x)).collect());
        if k < depth {
            level = next_level(sys.modes(), &level);
        }
    }
    Ok(out)
}

fn next_level(modes: usize, level: &[Generator]) -> Vec<Generator> {
    let mut next = Vec::with_capacity(level.len() * modes);
    for v in level {
        for i in 0..modes {
            next.push(Generator::Bracket(i, Box::new(v.clone())));
        }
    }
    next
}

/// Rank of the bracket family at `x`, growing the family one level at a
/// time and stopping as soon as it spans the whole space.
pub fn bracket_rank(sys: &dyn SwitchedSystem, x: &[f64], kind: BracketKind, depth: usize) -> Result<BracketRank> {
    check_point(sys, x)?;
    let d = sys.dim();
    let mut level = base_family(sys.modes(), kind);
    let mut vectors: Vec<DVector<f64>> = Vec::new();
    let mut rank = 0;
    for k in 0..=depth {
        vectors.extend(level.iter().map(|g| eval(sys, g, x)));
        rank = numerical_rank(&vectors);
        if rank == d || k == depth {
            return Ok(BracketRank { rank, depth_used: k, dim: d, generators: vectors.len() });
        }
        level = next_level(sys.modes(), &level);
    }
    Ok(BracketRank { rank, depth_used: depth, dim: d, generators: vectors.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    type FieldFn = fn(&[f64], &mut [f64]);

    struct Fields(Vec<FieldFn>, usize);

    impl SwitchedSystem for Fields {
        fn dim(&self) -> usize {
            self.1
        }
        fn modes(&self) -> usize {
            self.0.len()
        }
        fn field(&self, mode: usize, x: &[f64], out: &mut [f64]) {
            (self.0[mode])(x, out)
        }
        fn rates(&self, _: &[f64]) -> DMatrix<f64> {
            let n = self.0.len();
            DMatrix::from_fn(n, n, |i, j| if i == j { -(n as f64 - 1.0) } else { 1.0 })
        }
        fn rate_bound(&self) -> f64 {
            self.0.len() as f64
        }
    }

    #[test]
    fn constant_fields_span_at_depth_zero() {
        let sys = Fields(vec![|_, o| o.copy_from_slice(&[1.0, 0.0]), |_, o| o.copy_from_slice(&[1.0, 1.0])], 2);
        let r = bracket_rank(&sys, &[0.3, 0.4], BracketKind::Weak, 0).unwrap();
        assert_eq!((r.rank, r.depth_used), (2, 0));
    }

    #[test]
    fn single_field_strong_family_is_empty() {
        let sys = Fields(vec![|x, o| o.copy_from_slice(&[x[1], -x[0]])], 2);
        let r = bracket_rank(&sys, &[1.0, 0.0], BracketKind::Strong, 3).unwrap();
        assert_eq!(r.rank, 0);
        assert!(r.require_full().is_err());
    }

    #[test]
    fn bracket_of_translation_and_rotation() {
        // d/dx plus its bracket with a rotation spans the plane at the origin.
        let sys = Fields(vec![|_, o| o.copy_from_slice(&[1.0, 0.0]), |x, o| o.copy_from_slice(&[x[1], -x[0]])], 2);
        let r0 = bracket_rank(&sys, &[0.0, 0.0], BracketKind::Weak, 0).unwrap();
        assert_eq!(r0.rank, 1);
        let r1 = bracket_rank(&sys, &[0.0, 0.0], BracketKind::Weak, 1).unwrap();
        assert_eq!((r1.rank, r1.depth_used), (2, 1));
        let v = bracket_vectors(&sys, &[0.0, 0.0], BracketKind::Weak, 1).unwrap();
        // [F^1, F^0] = DF^0 F^1 - DF^1 F^0 = -DF^1 (1, 0) = (0, 1)
        let b = &v[1][1];
        assert!((b[0]).abs() < 1e-9 && (b[1] - 1.0).abs() < 1e-9, "{b}");
    }

    #[test]
    fn nested_difference_matches_analytic() {
        // F^0 = (x^2, 0), F^1 = (0, 1); [F^1, [F^1, F^0]] involves second derivatives.
        let sys = Fields(vec![|x, o| o.copy_from_slice(&[x[0] * x[1] * x[1], 0.0]), |_, o| o.copy_from_slice(&[0.0, 1.0])], 2);
        let v = bracket_vectors(&sys, &[2.0, 3.0], BracketKind::Weak, 2).unwrap();
        // [F^1, F^0] = DF^0 F^1 = (2 x y, 0); [F^1, that] = (2 x, 0) = (4, 0).
        let g = &v[2][3];
        assert!((g[0] - 4.0).abs() < 1e-4 && g[1].abs() < 1e-6, "{g}");
    }
}
