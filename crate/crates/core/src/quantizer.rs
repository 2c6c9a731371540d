//! End-to-end weight quantization.
//!
//! Each output row is handled independently: smoothing, max-normalization,
//! primary projection, then per macro-block residual, secondary basis search
//! and continuous scale solve. The continuous scales of the whole tensor are
//! finally quantized symmetrically, one scale factor per basis index.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    expand_b2, int_inner, project_primary, residual, search_basis, MicroMeta,
    SearchOps, StrideTables, MAX_MICRO,
};
use crate::lattice::{LatticeId, LatticeSpec, Topology};
use crate::matrix::{dot, Matrix};
use crate::precondition::{self, CalibStats};
use crate::solver::{self, RefDesign, ScalePair, SolveMode};

/// Calibration rows used per ridge solve; larger sets are subsampled evenly.
pub const REF_MAX_ROWS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormScope {
    PerChannel,
    PerMacroBlock,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantConfig {
    pub bits: u8,
    pub topology: Topology,
    pub mode: SolveMode,
    /// Number of bases, 1 or 2.
    pub k: u8,
    /// Macro-block length N; shares one pair of scales.
    pub macro_n: usize,
    /// Micro-block length G; has its own stride and sign bitmap.
    pub micro_g: usize,
    pub alpha: f32,
    pub lambda: f32,
    pub scale_bits: u8,
    pub act_bits: u8,
    pub norm_scope: NormScope,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            bits: 3,
            topology: Topology::Pot,
            mode: SolveMode::Geo,
            k: 2,
            macro_n: 128,
            micro_g: 32,
            alpha: 0.5,
            lambda: solver::DEFAULT_LAMBDA as f32,
            scale_bits: 8,
            act_bits: 8,
            norm_scope: NormScope::PerChannel,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        LatticeId::new(self.topology, self.bits)?;
        if !matches!(self.k, 1 | 2) {
            return bad(format!("K must be 1 or 2, got {}", self.k));
        }
        let g = self.micro_g;
        if !(2..=MAX_MICRO).contains(&g) || !g.is_power_of_two() {
            return bad(format!("micro-block size {g} must be a power of two in 2..={MAX_MICRO}"));
        }
        if self.macro_n < g || !self.macro_n.is_multiple_of(g) || self.macro_n > u16::MAX as usize {
            return bad(format!("macro-block size {} must be a multiple of {g}", self.macro_n));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be >= 0", self.lambda));
        }
        if !(2..=8).contains(&self.scale_bits) {
            return bad(format!("scale bits {} not in 2..=8", self.scale_bits));
        }
        if !matches!(self.act_bits, 4 | 6 | 8 | 16) {
            return bad(format!("activation bits {} not in {{4, 6, 8, 16}}", self.act_bits));
        }
        Ok(())
    }

    pub fn lattice_id(&self) -> LatticeId {
        LatticeId::new(self.topology, self.bits).expect("validated lattice")
    }

    pub fn lattice(&self) -> &'static LatticeSpec {
        self.lattice_id().spec()
    }

    pub fn scale_qmax(&self) -> i32 {
        (1 << (self.scale_bits - 1)) - 1
    }

    /// Storage per weight: codes, stride + sign bitmap per micro-block, and
    /// `K` integer scales per macro-block.
    pub fn payload_bits_per_weight(&self) -> f64 {
        let mut bits = self.bits as f64 + self.k as f64 * self.scale_bits as f64 / self.macro_n as f64;
        if self.k == 2 {
            bits += (4 + self.micro_g / 2) as f64 / self.micro_g as f64;
        }
        bits
    }
}

pub fn macro_ranges(d_in: usize, n: usize) -> impl Iterator<Item = Range<usize>> {
    (0..d_in.div_ceil(n)).map(move |k| k * n..((k + 1) * n).min(d_in))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub d_out: usize,
    pub d_in: usize,
    pub config: QuantConfig,
    /// Per row, or per (row, macro-block) for `NormScope::PerMacroBlock`.
    pub s_norm: Vec<f32>,
    pub s_vec: Vec<f32>,
    pub s_c1: f32,
    pub s_c2: f32,
    /// Row-major lattice codes, `d_out × d_in`.
    pub codes: Vec<u8>,
    /// Row-major micro-block metadata, `d_out × n_micro`; empty when `K = 1`.
    pub micro: Vec<MicroMeta>,
    /// Row-major integer scales, `d_out × n_macro`.
    pub c1q: Vec<i8>,
    /// Empty when `K = 1`.
    pub c2q: Vec<i8>,
}

impl QuantizedTensor {
    pub fn n_macro(&self) -> usize {
        self.d_in.div_ceil(self.config.macro_n)
    }

    pub fn n_micro(&self) -> usize {
        self.d_in.div_ceil(self.config.micro_g)
    }

    pub fn lattice(&self) -> &'static LatticeSpec {
        self.config.lattice()
    }

    pub fn macro_ranges(&self) -> impl Iterator<Item = Range<usize>> {
        macro_ranges(self.d_in, self.config.macro_n)
    }

    pub fn row_codes(&self, i: usize) -> &[u8] {
        &self.codes[i * self.d_in..(i + 1) * self.d_in]
    }

    /// Micro metadata of row `i`, macro-block `m`.
    pub fn block_micro(&self, i: usize, m: usize) -> &[MicroMeta] {
        let per_macro = self.config.macro_n / self.config.micro_g;
        let start = i * self.n_micro() + m * per_macro;
        let end = (start + per_macro).min((i + 1) * self.n_micro());
        &self.micro[start..end]
    }

    pub fn s_norm_len(&self) -> usize {
        match self.config.norm_scope {
            NormScope::PerChannel => self.d_out,
            NormScope::PerMacroBlock => self.d_out * self.n_macro(),
        }
    }

    /// Structural checks for tensors that did not come from `quantize_tensor`.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let corrupt = |m: &str| Err(Error::Corrupt(m.to_string()));
        let k2 = self.config.k == 2;
        if self.codes.len() != self.d_out * self.d_in {
            return corrupt("code count does not match dims");
        }
        if self.s_vec.len() != self.d_in || self.s_norm.len() != self.s_norm_len() {
            return corrupt("scale vector length does not match dims");
        }
        let n_blocks = self.d_out * self.n_macro();
        if self.c1q.len() != n_blocks || self.c2q.len() != if k2 { n_blocks } else { 0 } {
            return corrupt("integer scale count does not match dims");
        }
        if self.micro.len() != if k2 { self.d_out * self.n_micro() } else { 0 } {
            return corrupt("micro-block metadata count does not match dims");
        }
        let lat = self.lattice();
        if self.codes.iter().any(|&c| c as usize >= lat.len()) {
            return corrupt("lattice code out of range");
        }
        let qmax = self.config.scale_qmax();
        if self.c1q.iter().chain(&self.c2q).any(|&c| (c as i32).abs() > qmax) {
            return corrupt("integer scale exceeds scale bit width");
        }
        if self.s_vec.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return corrupt("smoothing vector must be positive");
        }
        if !(self.s_c1.is_finite() && self.s_c2.is_finite()) {
            return corrupt("non-finite scale factor");
        }
        if k2 {
            let tables = StrideTables::new(self.config.micro_g)?;
            let zeros = vec![0i64; self.config.macro_n];
            for i in 0..self.d_out {
                for (m, r) in self.macro_ranges().enumerate() {
                    expand_b2(&zeros[..r.len()], self.block_micro(i, m), &tables)?;
                }
            }
        }
        Ok(())
    }

    /// Exact integer check that `⟨b₁, b₂⟩ = 0` in every macro-block.
    pub fn audit_orthogonality(&self) -> Result<bool> {
        if self.config.k == 1 {
            return Ok(true);
        }
        let lat = self.lattice();
        let tables = StrideTables::new(self.config.micro_g)?;
        for i in 0..self.d_out {
            let row: Vec<i64> = self.row_codes(i).iter().map(|&c| lat.int_values()[c as usize]).collect();
            for (m, r) in self.macro_ranges().enumerate() {
                let b1 = &row[r];
                let b2 = expand_b2(b1, self.block_micro(i, m), &tables)?;
                if int_inner(b1, &b2) != 0 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Reconstruction in the smoothed weight space (`Ŵ ⊙ s`).
    pub fn dequantize_processed(&self) -> Result<Matrix> {
        let lat = self.lattice();
        let tables = StrideTables::new(self.config.micro_g)?;
        let (s1, s2) = (self.s_c1 as f64, self.s_c2 as f64);
        let nm = self.n_macro();
        let mut out = Matrix::zeros(self.d_out, self.d_in);
        for i in 0..self.d_out {
            let b1: Vec<f64> = self.row_codes(i).iter().map(|&c| lat.values()[c as usize]).collect();
            let row = out.row_mut(i);
            for (m, r) in self.macro_ranges().enumerate() {
                let c1 = self.c1q[i * nm + m] as f64 * s1;
                for (o, b) in row[r.clone()].iter_mut().zip(&b1[r.clone()]) {
                    *o = c1 * b;
                }
                if self.config.k == 2 {
                    let c2 = self.c2q[i * nm + m] as f64 * s2;
                    let b2 = expand_b2(&b1[r.clone()], self.block_micro(i, m), &tables)?;
                    for (o, b) in row[r].iter_mut().zip(&b2) {
                        *o += c2 * b;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Reconstruction in the original weight space.
    pub fn dequantize(&self) -> Result<Matrix> {
        let mut w = self.dequantize_processed()?;
        for i in 0..self.d_out {
            for (v, s) in w.row_mut(i).iter_mut().zip(&self.s_vec) {
                *v /= *s as f64;
            }
        }
        Ok(w)
    }
}

pub fn dequantize(qt: &QuantizedTensor) -> Result<Matrix> {
    qt.dequantize()
}

/// Everything `quantize_tensor` computes along the way.
#[derive(Debug, Clone)]
pub struct QuantizeOutcome {
    pub tensor: QuantizedTensor,
    /// Continuous scales, row-major per macro-block.
    pub scales: Vec<ScalePair>,
    pub search_ops: SearchOps,
    /// REF blocks solved in GEO mode because of ill-conditioning.
    pub ref_fallbacks: usize,
}

struct RowResult {
    s_norm: Vec<f32>,
    codes: Vec<u8>,
    micro: Vec<MicroMeta>,
    scales: Vec<ScalePair>,
    ops: SearchOps,
    fallbacks: usize,
}

fn abs_max(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm_or_one(s: f64) -> f64 {
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Evenly spaced subset of at most `cap` rows.
fn subsample_rows(x: &Matrix, cap: usize) -> Matrix {
    if x.rows() <= cap {
        return x.clone();
    }
    let mut data = Vec::with_capacity(cap * x.cols());
    for k in 0..cap {
        data.extend_from_slice(x.row(k * x.rows() / cap));
    }
    Matrix::from_vec(cap, x.cols(), data).expect("subsample shape")
}

fn quantize_row(
    w: &[f64],
    cfg: &QuantConfig,
    tables: &StrideTables,
    calib: Option<&Matrix>,
) -> Result<RowResult> {
    let lat = cfg.lattice();
    let k2 = cfg.k == 2;
    let ranges: Vec<_> = macro_ranges(w.len(), cfg.macro_n).collect();
    let mut out = RowResult {
        s_norm: Vec::new(),
        codes: Vec::with_capacity(w.len()),
        micro: Vec::new(),
        scales: Vec::with_capacity(ranges.len()),
        ops: SearchOps::default(),
        fallbacks: 0,
    };
    let mut b1 = Vec::with_capacity(w.len());
    match cfg.norm_scope {
        NormScope::PerChannel => {
            let s = norm_or_one(abs_max(w));
            out.s_norm.push(s as f32);
            let p = project_primary(w, lat, s)?;
            out.codes.extend(p.codes.iter().map(|c| c.0));
            b1 = p.values;
        }
        NormScope::PerMacroBlock => {
            for r in &ranges {
                let s = norm_or_one(abs_max(&w[r.clone()]));
                out.s_norm.push(s as f32);
                let p = project_primary(&w[r.clone()], lat, s)?;
                out.codes.extend(p.codes.iter().map(|c| c.0));
                b1.extend(p.values);
            }
        }
    }

    for r in ranges {
        let (wb, b1b) = (&w[r.clone()], &b1[r.clone()]);
        let b2 = if k2 {
            let res = residual(wb, b1b);
            let basis = search_basis(b1b, &res.r_perp, tables, &mut out.ops);
            out.micro.extend(basis.micro.iter().map(|m| m.meta));
            basis.b2_values
        } else {
            Vec::new()
        };
        let scales = match (cfg.mode, calib) {
            (SolveMode::Geo, _) => solver::solve_geo(wb, b1b, &b2),
            (SolveMode::Ref, Some(x)) => {
                let d = RefDesign::build(x, r.clone(), wb, b1b, &b2, cfg.lambda as f64);
                let (s, fell_back) = solver::solve_ref_guarded(&d, wb, b1b, &b2)?;
                out.fallbacks += fell_back as usize;
                s
            }
            (SolveMode::Ref, None) => {
                return Err(Error::Config("REF mode requires calibration activations".into()))
            }
        };
        out.scales.push(scales);
    }
    Ok(out)
}

/// Symmetric per-tensor quantization of one scale population. Returns the f32
/// scale factor and the integers, rounded half away from zero.
fn quantize_scales(values: impl Iterator<Item = f64> + Clone, qmax: i32) -> (f32, Vec<i8>) {
    let m = values.clone().fold(0.0f64, |m, c| m.max(c.abs()));
    let s = if m > 0.0 { (m / qmax as f64) as f32 } else { 1.0 };
    let q = values
        .map(|c| (c / s as f64).round().clamp(-qmax as f64, qmax as f64) as i8)
        .collect();
    (s, q)
}

pub fn quantize_tensor(w: &Matrix, stats: Option<&CalibStats>, cfg: &QuantConfig) -> Result<QuantizedTensor> {
    quantize_tensor_detailed(w, stats, cfg).map(|o| o.tensor)
}

pub fn quantize_tensor_detailed(
    w: &Matrix,
    stats: Option<&CalibStats>,
    cfg: &QuantConfig,
) -> Result<QuantizeOutcome> {
    cfg.validate()?;
    if w.cols() == 0 {
        return Err(Error::Shape("weight has no input channels".into()));
    }
    if !w.is_finite() {
        return Err(Error::NonFinite("weights"));
    }
    if cfg.mode == SolveMode::Ref && stats.is_none() {
        return Err(Error::Config("REF mode requires calibration activations".into()));
    }

    let s_vec: Vec<f32> = match stats {
        Some(st) => {
            let sv = precondition::smoothing_vector(st, &w.column_abs_max(), cfg.alpha as f64)?;
            sv.s_vec.iter().map(|&s| s as f32).collect()
        }
        None => vec![1.0; w.cols()],
    };
    let s64: Vec<f64> = s_vec.iter().map(|&s| s as f64).collect();
    let w_proc = precondition::apply(w, &s64)?;
    let calib = match (cfg.mode, stats) {
        (SolveMode::Ref, Some(st)) => Some(precondition::compensate(
            &subsample_rows(&st.activations, REF_MAX_ROWS),
            &s64,
        )?),
        _ => None,
    };

    let tables = StrideTables::new(cfg.micro_g)?;
    let rows: Vec<RowResult> = (0..w.rows())
        .into_par_iter()
        .map(|i| quantize_row(w_proc.row(i), cfg, &tables, calib.as_ref()))
        .collect::<Result<_>>()?;

    let qmax = cfg.scale_qmax();
    let scales: Vec<ScalePair> = rows.iter().flat_map(|r| r.scales.iter().copied()).collect();
    let (s_c1, c1q) = quantize_scales(scales.iter().map(|s| s.c1), qmax);
    let (s_c2, c2q) = if cfg.k == 2 {
        quantize_scales(scales.iter().map(|s| s.c2), qmax)
    } else {
        (0.0, Vec::new())
    };

    let mut search_ops = SearchOps::default();
    let mut ref_fallbacks = 0;
    let mut s_norm = Vec::new();
    let mut codes = Vec::with_capacity(w.rows() * w.cols());
    let mut micro = Vec::new();
    for r in rows {
        search_ops.merge(r.ops);
        ref_fallbacks += r.fallbacks;
        s_norm.extend(r.s_norm);
        codes.extend(r.codes);
        micro.extend(r.micro);
    }
    if ref_fallbacks > 0 {
        log::warn!("{ref_fallbacks} ill-conditioned REF blocks solved in GEO mode");
    }
    Ok(QuantizeOutcome {
        tensor: QuantizedTensor {
            d_out: w.rows(),
            d_in: w.cols(),
            config: *cfg,
            s_norm,
            s_vec,
            s_c1,
            s_c2,
            codes,
            micro,
            c1q,
            c2q,
        },
        scales,
        search_ops,
        ref_fallbacks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// `‖W − Ŵ‖_F / ‖W‖_F`.
    pub frobenius_rel: f64,
    /// Mean row cosine similarity over rows with nonzero `w` and `ŵ`.
    pub mean_cosine: f64,
    /// Row-major MSE per (row, macro-block).
    pub per_block_mse: Vec<f64>,
    /// Rows excluded from the cosine mean.
    pub zero_rows: usize,
}

pub fn row_cosines(w: &Matrix, w_hat: &Matrix) -> Vec<Option<f64>> {
    w.iter_rows()
        .zip(w_hat.iter_rows())
        .map(|(a, b)| {
            let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
            (na > 0.0 && nb > 0.0).then(|| dot(a, b) / (na * nb))
        })
        .collect()
}

pub fn error_report(w: &Matrix, qt: &QuantizedTensor) -> Result<ErrorReport> {
    if (w.rows(), w.cols()) != (qt.d_out, qt.d_in) {
        return Err(Error::Shape(format!(
            "weight is {}x{}, quantized tensor is {}x{}",
            w.rows(),
            w.cols(),
            qt.d_out,
            qt.d_in
        )));
    }
    let w_hat = qt.dequantize()?;
    let mut err2 = 0.0;
    let mut per_block_mse = Vec::with_capacity(qt.d_out * qt.n_macro());
    for (a, b) in w.iter_rows().zip(w_hat.iter_rows()) {
        for r in qt.macro_ranges() {
            let e: f64 = a[r.clone()].iter().zip(&b[r.clone()]).map(|(x, y)| (x - y) * (x - y)).sum();
            err2 += e;
            per_block_mse.push(e / r.len() as f64);
        }
    }
    let base = w.norm();
    let frobenius_rel = if base > 0.0 { err2.sqrt() / base } else { err2.sqrt() };
    let cos = row_cosines(w, &w_hat);
    let valid: Vec<f64> = cos.iter().flatten().copied().collect();
    let mean_cosine = if valid.is_empty() {
        0.0
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    };
    Ok(ErrorReport {
        frobenius_rel,
        mean_cosine,
        per_block_mse,
        zero_rows: cos.len() - valid.len(),
    })
}
