//! Brute-force reference solutions for the analytical shortcuts.
//!
//! Nothing here reuses the analytical paths it is compared against: sign and
//! stride searches enumerate every candidate and score it by forming the
//! secondary vector and taking its inner product with the residual; the
//! least-squares solve forms the full normal equations and inverts them
//! without assuming orthogonal columns.

use crate::error::{Error, Result};
use crate::geometry::{max_stride, Pairing};

/// Exhaustive enumeration is capped at 2^8 sign patterns per stride unless
/// `allow_big` is set (then up to 2^16).
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleLimits {
    pub allow_big: bool,
}

impl OracleLimits {
    fn check(&self, g: usize) -> Result<()> {
        let cap = if self.allow_big { 32 } else { 16 };
        if g > cap {
            return Err(Error::Config(format!(
                "exhaustive search over G={g} exceeds limit {cap}"
            )));
        }
        Ok(())
    }
}

fn exchanged(v: &[f64], pairs: &[(u8, u8)], pattern: u32) -> Vec<f64> {
    let mut y = vec![0.0; v.len()];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let eta = if pattern >> k & 1 == 1 { -1.0 } else { 1.0 };
        y[i as usize] = -eta * v[j as usize];
        y[j as usize] = eta * v[i as usize];
    }
    y
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Best sign pattern for a fixed pairing, by trying every pattern.
/// Returns `(signs, alignment)`; earlier patterns win ties.
pub fn exhaustive_sign_search(
    v: &[f64],
    r: &[f64],
    pairing: &Pairing,
    limits: OracleLimits,
) -> Result<(u16, f64)> {
    limits.check(v.len())?;
    if v.len() != r.len() || v.len() != pairing.len() {
        return Err(Error::Shape("oracle inputs differ in length".into()));
    }
    let n = pairing.pairs().len();
    let mut best = (0u16, f64::NEG_INFINITY);
    for pattern in 0u32..(1u32 << n) {
        let a = inner(&exchanged(v, pairing.pairs(), pattern), r);
        if a > best.1 {
            best = (pattern as u16, a);
        }
    }
    Ok(best)
}

/// Best `(stride, signs, alignment)` over every stride and sign pattern.
pub fn exhaustive_stride_search(
    v: &[f64],
    r: &[f64],
    g: usize,
    limits: OracleLimits,
) -> Result<(usize, u16, f64)> {
    limits.check(g)?;
    let mut best = (1usize, 0u16, f64::NEG_INFINITY);
    for s in 1..=max_stride(g) {
        let pairing = Pairing::new(g, s)?;
        let (signs, a) = exhaustive_sign_search(v, r, &pairing, limits)?;
        if a > best.2 {
            best = (s, signs, a);
        }
    }
    Ok(best)
}

/// Ridge solve of `min ‖y − M c‖² + λ‖c‖²` over two columns via the full
/// normal equations and an explicit 2×2 inverse.
pub fn dense_lstsq_2col(m: &[[f64; 2]], y: &[f64], lambda: f64) -> Result<(f64, f64)> {
    if m.len() != y.len() {
        return Err(Error::Shape("design rows differ from target length".into()));
    }
    let (mut g00, mut g01, mut g11, mut h0, mut h1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (row, &t) in m.iter().zip(y) {
        g00 += row[0] * row[0];
        g01 += row[0] * row[1];
        g11 += row[1] * row[1];
        h0 += row[0] * t;
        h1 += row[1] * t;
    }
    let a = g00 + lambda;
    let d = g11 + lambda;
    let det = a * d - g01 * g01;
    let scale = (a.abs() + g01.abs()) * (d.abs() + g01.abs());
    if det == 0.0 || det.abs() <= scale * 1e-15 {
        return Err(Error::Config("singular normal equations".into()));
    }
    let inv = [[d / det, -g01 / det], [-g01 / det, a / det]];
    Ok((
        inv[0][0] * h0 + inv[0][1] * h1,
        inv[1][0] * h0 + inv[1][1] * h1,
    ))
}
