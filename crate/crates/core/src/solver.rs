//! Continuous macro-block scales.
//!
//! GEO minimizes `‖w − c₁b₁ − c₂b₂‖²` in weight space; because `b₁ ⊥ b₂` the
//! normal equations are diagonal and each scale is a scalar projection. REF
//! minimizes the ridge objective `‖Y − Ac‖² + λ‖c‖²` in output space, with
//! `A = [X b₁, X b₂]` and `Y = X w` built from float calibration activations.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

pub const DEFAULT_LAMBDA: f64 = 1e-4;
/// Blocks whose regularized Gram matrix is worse conditioned than this are
/// solved in GEO mode instead.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveMode {
    Geo,
    Ref,
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveMode::Geo => f.write_str("geo"),
            SolveMode::Ref => f.write_str("ref"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalePair {
    pub c1: f64,
    pub c2: f64,
    pub mode: SolveMode,
}

fn project(w: &[f64], b: &[f64]) -> f64 {
    let nb = dot(b, b);
    if nb == 0.0 {
        0.0
    } else {
        dot(w, b) / nb
    }
}

/// Decoupled scalar projections; requires `⟨b₁, b₂⟩ = 0`. Pass an empty `b2`
/// for a single-basis solve.
pub fn solve_geo(w_proc: &[f64], b1: &[f64], b2: &[f64]) -> ScalePair {
    ScalePair {
        c1: project(w_proc, b1),
        c2: if b2.is_empty() { 0.0 } else { project(w_proc, b2) },
        mode: SolveMode::Geo,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefDesign {
    pub a: Vec<[f64; 2]>,
    pub y: Vec<f64>,
    pub lambda: f64,
}

impl RefDesign {
    /// Design over the input columns `cols` of the calibration rows `x`.
    /// `b2` may be empty (single basis: the second column is zero).
    pub fn build(
        x: &Matrix,
        cols: std::ops::Range<usize>,
        w: &[f64],
        b1: &[f64],
        b2: &[f64],
        lambda: f64,
    ) -> Self {
        let mut a = Vec::with_capacity(x.rows());
        let mut y = Vec::with_capacity(x.rows());
        for row in x.iter_rows() {
            let xs = &row[cols.clone()];
            let a2 = if b2.is_empty() { 0.0 } else { dot(xs, b2) };
            a.push([dot(xs, b1), a2]);
            y.push(dot(xs, w));
        }
        Self { a, y, lambda }
    }

    fn validate(&self) -> Result<()> {
        if self.a.len() != self.y.len() {
            return Err(Error::Shape("design rows differ from target length".into()));
        }
        if self.a.is_empty() {
            return Err(Error::Empty("ridge design"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda {} must be >= 0", self.lambda)));
        }
        let finite = self.a.iter().all(|r| r[0].is_finite() && r[1].is_finite())
            && self.y.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("ridge design"));
        }
        Ok(())
    }

    fn normal_equations(&self) -> ([f64; 3], [f64; 2]) {
        let (mut g00, mut g01, mut g11, mut h0, mut h1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (r, &t) in self.a.iter().zip(&self.y) {
            g00 += r[0] * r[0];
            g01 += r[0] * r[1];
            g11 += r[1] * r[1];
            h0 += r[0] * t;
            h1 += r[1] * t;
        }
        ([g00, g01, g11], [h0, h1])
    }

    /// Condition number of `AᵀA + λI`, restricted to the nonzero columns of `A`
    /// (a zero column decouples and is trivially solved by `c = 0`).
    pub fn condition(&self) -> f64 {
        let ([g00, g01, g11], _) = self.normal_equations();
        let l = self.lambda;
        match (g00 > 0.0, g11 > 0.0) {
            (true, true) => {
                let (a, d) = (g00 + l, g11 + l);
                let mean = 0.5 * (a + d);
                let disc = (0.25 * (a - d) * (a - d) + g01 * g01).sqrt();
                let hi = mean + disc;
                // det / hi avoids cancellation in mean - disc
                let lo = (a * d - g01 * g01) / hi;
                if lo <= 0.0 {
                    f64::INFINITY
                } else {
                    hi / lo
                }
            }
            _ => 1.0,
        }
    }

    /// `‖Y − Ac‖² + λ‖c‖²`.
    pub fn objective(&self, c1: f64, c2: f64) -> f64 {
        let fit: f64 = self
            .a
            .iter()
            .zip(&self.y)
            .map(|(r, t)| {
                let e = t - r[0] * c1 - r[1] * c2;
                e * e
            })
            .sum();
        fit + self.lambda * (c1 * c1 + c2 * c2)
    }
}

fn closed_form(g: [f64; 3], h: [f64; 2], lambda: f64) -> Option<(f64, f64)> {
    let [g00, g01, g11] = g;
    match (g00 > 0.0, g11 > 0.0) {
        (false, false) => Some((0.0, 0.0)),
        (true, false) => (g00 + lambda > 0.0).then(|| (h[0] / (g00 + lambda), 0.0)),
        (false, true) => (g11 + lambda > 0.0).then(|| (0.0, h[1] / (g11 + lambda))),
        (true, true) => {
            let (a, d) = (g00 + lambda, g11 + lambda);
            let det = a * d - g01 * g01;
            if det <= a * d * 1e-15 {
                return None;
            }
            Some(((d * h[0] - g01 * h[1]) / det, (a * h[1] - g01 * h[0]) / det))
        }
    }
}

/// `c* = (AᵀA + λI)⁻¹ AᵀY` through the explicit 2×2 inverse. A singular
/// system with `λ = 0` is retried with the default ridge.
pub fn solve_ref(d: &RefDesign) -> Result<ScalePair> {
    d.validate()?;
    let (g, h) = d.normal_equations();
    let (c1, c2) = match closed_form(g, h, d.lambda) {
        Some(c) => c,
        None => {
            log::warn!("singular ridge system with lambda={}, retrying with {DEFAULT_LAMBDA}", d.lambda);
            closed_form(g, h, d.lambda.max(DEFAULT_LAMBDA))
                .ok_or_else(|| Error::Config("singular ridge system".into()))?
        }
    };
    Ok(ScalePair {
        c1,
        c2,
        mode: SolveMode::Ref,
    })
}

/// REF solve that falls back to GEO on ill-conditioned blocks. The flag
/// reports whether the fallback was taken.
pub fn solve_ref_guarded(d: &RefDesign, w: &[f64], b1: &[f64], b2: &[f64]) -> Result<(ScalePair, bool)> {
    d.validate()?;
    if d.condition() > MAX_CONDITION {
        return Ok((solve_geo(w, b1, b2), true));
    }
    Ok((solve_ref(d)?, false))
}

/// `ŵ = c₁b₁ + c₂b₂`; an empty `b2` means a single basis.
pub fn reconstruction(b1: &[f64], b2: &[f64], scales: &ScalePair) -> Vec<f64> {
    if b2.is_empty() {
        return b1.iter().map(|b| scales.c1 * b).collect();
    }
    b1.iter()
        .zip(b2)
        .map(|(x, y)| scales.c1 * x + scales.c2 * y)
        .collect()
}
