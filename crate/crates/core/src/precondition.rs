//! Channel-wise smoothing that balances activation and weight magnitudes
//! before the lattice projection.
//!
//! For input channel `j` the smoothing factor is
//! `s[j] = a[j]^α / w[j]^(1-α)` where `a` is the activation statistic and `w`
//! the column max-abs of the weight. Weights are stretched (`W ⊙ s`) and
//! activations compensated (`X ⊘ s`) so the layer output is unchanged.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    MaxAbs,
    Rms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibStats {
    pub a_stat: Vec<f64>,
    pub kind: StatKind,
    pub n_samples: usize,
    /// Global max |x| over every sample.
    pub x_absmax: f64,
    /// Per-column max |x|, kept regardless of `kind` for activation scales.
    pub col_absmax: Vec<f64>,
    /// All calibration rows, stacked; the ridge solve draws from these.
    pub activations: Matrix,
}

impl CalibStats {
    pub fn d_in(&self) -> usize {
        self.a_stat.len()
    }

    /// Max |x ⊘ s| over the calibration set, i.e. the static activation range
    /// after compensation.
    pub fn compensated_absmax(&self, s_vec: &[f64]) -> f64 {
        self.col_absmax
            .iter()
            .zip(s_vec)
            .fold(0.0, |m, (a, s)| m.max(a / s))
    }
}

pub fn collect_stats(samples: &[Matrix], kind: StatKind) -> Result<CalibStats> {
    let first = samples.first().ok_or(Error::Empty("calibration samples"))?;
    let d_in = first.cols();
    let mut rows = Vec::new();
    for s in samples {
        if s.cols() != d_in {
            return Err(Error::Shape(format!(
                "calibration sample has {} columns, expected {d_in}",
                s.cols()
            )));
        }
        if !s.is_finite() {
            return Err(Error::NonFinite("calibration samples"));
        }
        rows.extend_from_slice(s.as_slice());
    }
    let n = rows.len() / d_in.max(1);
    if n == 0 {
        return Err(Error::Empty("calibration samples"));
    }
    let activations = Matrix::from_vec(n, d_in, rows)?;

    let col_absmax = activations.column_abs_max();
    let a_stat = match kind {
        StatKind::MaxAbs => col_absmax.clone(),
        StatKind::Rms => {
            let mut sq = vec![0.0; d_in];
            for row in activations.iter_rows() {
                for (acc, v) in sq.iter_mut().zip(row) {
                    *acc += v * v;
                }
            }
            sq.into_iter().map(|s| (s / n as f64).sqrt()).collect()
        }
    };
    Ok(CalibStats {
        a_stat,
        kind,
        n_samples: n,
        x_absmax: activations.abs_max(),
        col_absmax,
        activations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingVector {
    pub s_vec: Vec<f64>,
    pub alpha: f64,
}

impl SmoothingVector {
    pub fn identity(d_in: usize) -> Self {
        Self {
            s_vec: vec![1.0; d_in],
            alpha: 0.0,
        }
    }
}

pub fn smoothing_vector(stats: &CalibStats, w_max: &[f64], alpha: f64) -> Result<SmoothingVector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    if w_max.len() != stats.a_stat.len() {
        return Err(Error::Shape(format!(
            "weight has {} input channels, calibration has {}",
            w_max.len(),
            stats.a_stat.len()
        )));
    }
    let s_vec = stats
        .a_stat
        .iter()
        .zip(w_max)
        .map(|(&a, &w)| {
            if a == 0.0 || w == 0.0 {
                return 1.0;
            }
            let s = a.powf(alpha) / w.powf(1.0 - alpha);
            if s.is_finite() && s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok(SmoothingVector { s_vec, alpha })
}

/// `W ⊙ s` along input channels (columns).
pub fn apply(w: &Matrix, sv: &[f64]) -> Result<Matrix> {
    if sv.len() != w.cols() {
        return Err(Error::Shape(format!(
            "smoothing vector has {} entries, weight has {} columns",
            sv.len(),
            w.cols()
        )));
    }
    let mut out = w.clone();
    for i in 0..out.rows() {
        for (v, s) in out.row_mut(i).iter_mut().zip(sv) {
            *v *= s;
        }
    }
    Ok(out)
}

/// `X ⊘ s` along input channels.
pub fn compensate(x: &Matrix, sv: &[f64]) -> Result<Matrix> {
    if sv.len() != x.cols() {
        return Err(Error::Shape(format!(
            "smoothing vector has {} entries, activations have {} columns",
            sv.len(),
            x.cols()
        )));
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (v, s) in out.row_mut(i).iter_mut().zip(sv) {
            *v /= s;
        }
    }
    Ok(out)
}
