//! Integer shift-and-add execution of a quantized linear layer.
//!
//! For output element `(n, i)` and macro-block `m` the kernel accumulates
//! `Σ_j x̃[n,j] · B[i,j]` where every `B` entry is an integerized lattice level
//! `±2^e`, so each term is a left shift with an optional sign toggle. The
//! per-block partial sum is multiplied once by the integer scale `c̃`, and the
//! only float multiplies are the two global factors `s_x·s_c/Λ` at the end:
//!
//! ```text
//! ŷ[n,i] = (s_x s_c1 / Λ) Σ_m c̃1[i,m] Σ_{j∈m} x̃[n,j] B1[i,j]
//!        + (s_x s_c2 / Λ) Σ_m c̃2[i,m] Σ_{j∈m} x̃[n,j] B2[i,j]
//! ```
//!
//! Activations enter compensated by the smoothing vector (`X ⊘ s`).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{expand_b2, micro_ranges, MicroMeta, StrideTables};
use crate::lattice::{shift_apply, AccumulatorWidth, LatticeCode, ShiftOp, Topology};
use crate::matrix::Matrix;
use crate::quantizer::QuantizedTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActScaleSource {
    /// Static range: max |x ⊘ s| observed during calibration.
    Calib(f64),
    /// Range of the batch being quantized.
    Dynamic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedActivations {
    pub rows: usize,
    pub cols: usize,
    pub x_int: Vec<i32>,
    pub s_x: f64,
    pub bits: u8,
}

impl QuantizedActivations {
    pub fn row(&self, n: usize) -> &[i32] {
        &self.x_int[n * self.cols..(n + 1) * self.cols]
    }

    /// `x̃ · s_x`, still in the compensated space.
    pub fn dequantize(&self) -> Matrix {
        let data = self.x_int.iter().map(|&v| v as f64 * self.s_x).collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("activation shape")
    }
}

pub fn act_qmax(bits: u8) -> i64 {
    (1i64 << (bits - 1)) - 1
}

/// Symmetric per-tensor quantization of `X ⊘ s_vec` to `bits`-bit integers.
pub fn quantize_activations(
    x: &Matrix,
    s_vec: &[f64],
    bits: u8,
    source: ActScaleSource,
) -> Result<QuantizedActivations> {
    if !matches!(bits, 4 | 6 | 8 | 16) {
        return Err(Error::Config(format!("activation bits {bits} not in {{4, 6, 8, 16}}")));
    }
    if s_vec.len() != x.cols() {
        return Err(Error::Shape(format!(
            "activations have {} columns, smoothing vector {}",
            x.cols(),
            s_vec.len()
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("activations"));
    }
    let comp: Vec<f64> = x
        .iter_rows()
        .flat_map(|r| r.iter().zip(s_vec).map(|(v, s)| v / s))
        .collect();
    let range = match source {
        ActScaleSource::Calib(m) => m,
        ActScaleSource::Dynamic => comp.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    let qmax = act_qmax(bits) as f64;
    let s_x = if range > 0.0 && range.is_finite() { range / qmax } else { 1.0 };
    let x_int = comp
        .iter()
        .map(|v| (v / s_x).round().clamp(-qmax, qmax) as i32)
        .collect();
    Ok(QuantizedActivations {
        rows: x.rows(),
        cols: x.cols(),
        x_int,
        s_x,
        bits,
    })
}

/// Convenience wrapper using the tensor's own smoothing vector and bit width.
pub fn quantize_activations_for(
    x: &Matrix,
    qt: &QuantizedTensor,
    source: ActScaleSource,
) -> Result<QuantizedActivations> {
    let s: Vec<f64> = qt.s_vec.iter().map(|&v| v as f64).collect();
    quantize_activations(x, &s, qt.config.act_bits, source)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub shifts: u64,
    pub adds: u64,
    /// Integer multiplies (one per basis per macro-block partial sum).
    pub int_muls: u64,
    pub skipped_zeros: u64,
    /// Multiplies issued inside the shift-add accumulation loop.
    pub loop_muls: u64,
    /// Float multiplies in the final global scaling.
    pub float_muls: u64,
}

impl OpCounters {
    pub fn merge(&mut self, o: &OpCounters) {
        self.shifts += o.shifts;
        self.adds += o.adds;
        self.int_muls += o.int_muls;
        self.skipped_zeros += o.skipped_zeros;
        self.loop_muls += o.loop_muls;
        self.float_muls += o.float_muls;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct KernelConfig {
    pub acc: AccumulatorWidth,
    /// Cross-check every integer accumulation against a plain multiply
    /// reference and fail on the first mismatch.
    pub audit: bool,
}


/// Worst-case accumulator magnitude for this tensor and activation width:
/// `qmax_x · Λ · qmax_c · d_in`.
pub fn accumulator_bound(qt: &QuantizedTensor, act_bits: u8) -> i128 {
    act_qmax(act_bits) as i128
        * qt.lattice().lambda() as i128
        * qt.config.scale_qmax() as i128
        * qt.d_in as i128
}

/// Configuration-time overflow check.
pub fn check_accumulator(qt: &QuantizedTensor, act_bits: u8, acc: AccumulatorWidth) -> Result<()> {
    if qt.lattice().topology() != Topology::Pot {
        return Err(Error::NotShiftable("linear"));
    }
    let bound = accumulator_bound(qt, act_bits);
    if bound > acc.max() {
        return Err(Error::Overflow(format!(
            "worst case |acc| = {bound} exceeds {}-bit accumulator (d_in={}, act bits={act_bits}, Λ={})",
            acc.bits(),
            qt.d_in,
            qt.lattice().lambda()
        )));
    }
    Ok(())
}

/// Integer totals per output element, row-major `n × d_out`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntAccumulators {
    pub acc1: Vec<i64>,
    /// Empty when `K = 1`.
    pub acc2: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct GemmOutput {
    pub y: Matrix,
    pub ints: IntAccumulators,
    pub counters: OpCounters,
}

/// Shift plan for one weight row: `None` is a zero-skip.
struct RowPlan {
    b1: Vec<Option<ShiftOp>>,
    b2: Vec<Option<ShiftOp>>,
}

fn row_plan(qt: &QuantizedTensor, i: usize, tables: &StrideTables) -> Result<RowPlan> {
    let lat = qt.lattice();
    let codes = qt.row_codes(i);
    let b1 = codes
        .iter()
        .map(|&c| lat.shift_op(LatticeCode(c)))
        .collect::<Result<Vec<_>>>()?;
    let mut b2 = Vec::new();
    if qt.config.k == 2 {
        b2 = vec![None; qt.d_in];
        for (m, r) in qt.macro_ranges().enumerate() {
            let metas = qt.block_micro(i, m);
            let micros: Vec<_> = micro_ranges(r.len(), qt.config.micro_g).collect();
            if micros.len() != metas.len() {
                return Err(Error::Corrupt("micro-block metadata count".into()));
            }
            for (mr, meta) in micros.into_iter().zip(metas) {
                let base = r.start + mr.start;
                plan_micro(&b1[base..base + mr.len()], meta, tables, &mut b2[base..base + mr.len()])?;
            }
        }
    }
    Ok(RowPlan { b1, b2 })
}

/// `b₂` entries are sign-toggled primary entries: `y_i = -η x_j`, `y_j = η x_i`.
fn plan_micro(
    b1: &[Option<ShiftOp>],
    meta: &MicroMeta,
    tables: &StrideTables,
    out: &mut [Option<ShiftOp>],
) -> Result<()> {
    let pairing = tables.get(b1.len(), meta.stride as usize)?;
    let toggle = |op: Option<ShiftOp>, flip: bool| {
        op.map(|o| ShiftOp {
            shift: o.shift,
            negative: o.negative ^ flip,
        })
    };
    for (k, &(i, j)) in pairing.pairs().iter().enumerate() {
        let eta_neg = meta.signs >> k & 1 == 1;
        out[i as usize] = toggle(b1[j as usize], !eta_neg);
        out[j as usize] = toggle(b1[i as usize], eta_neg);
    }
    Ok(())
}

#[inline]
fn accumulate(
    x: &[i32],
    plan: &[Option<ShiftOp>],
    acc: AccumulatorWidth,
    ctr: &mut OpCounters,
) -> Result<i64> {
    let mut sum = 0i64;
    for (&xv, op) in x.iter().zip(plan) {
        match op {
            None => ctr.skipped_zeros += 1,
            Some(op) => {
                sum += shift_apply(xv as i64, *op, false, acc)?;
                ctr.shifts += 1;
                ctr.adds += 1;
            }
        }
    }
    Ok(sum)
}

fn checked(v: i64, acc: AccumulatorWidth) -> Result<i64> {
    if acc.fits(v as i128) {
        Ok(v)
    } else {
        Err(Error::Overflow(format!("{v} exceeds {}-bit accumulator", acc.bits())))
    }
}

/// Integer-only inference of `X · Ŵᵀ`, with float scaling confined to the end.
pub fn shiftadd_gemm(qa: &QuantizedActivations, qt: &QuantizedTensor, cfg: &KernelConfig) -> Result<GemmOutput> {
    if qa.cols != qt.d_in {
        return Err(Error::Shape(format!(
            "activations have {} columns, weight has {} inputs",
            qa.cols, qt.d_in
        )));
    }
    check_accumulator(qt, qa.bits, cfg.acc)?;
    let tables = StrideTables::new(qt.config.micro_g)?;
    let k2 = qt.config.k == 2;
    let nm = qt.n_macro();
    let ranges: Vec<_> = qt.macro_ranges().collect();

    // one task per weight row; each returns the column of totals for that row
    let cols: Vec<(Vec<i64>, Vec<i64>, OpCounters)> = (0..qt.d_out)
        .into_par_iter()
        .map(|i| {
            let plan = row_plan(qt, i, &tables)?;
            let mut ctr = OpCounters::default();
            let mut t1 = Vec::with_capacity(qa.rows);
            let mut t2 = Vec::with_capacity(if k2 { qa.rows } else { 0 });
            for n in 0..qa.rows {
                let x = qa.row(n);
                let (mut s1, mut s2) = (0i64, 0i64);
                for (m, r) in ranges.iter().enumerate() {
                    let p1 = accumulate(&x[r.clone()], &plan.b1[r.clone()], cfg.acc, &mut ctr)?;
                    s1 = checked(s1 + p1 * qt.c1q[i * nm + m] as i64, cfg.acc)?;
                    ctr.int_muls += 1;
                    ctr.adds += 1;
                    if k2 {
                        let p2 = accumulate(&x[r.clone()], &plan.b2[r.clone()], cfg.acc, &mut ctr)?;
                        s2 = checked(s2 + p2 * qt.c2q[i * nm + m] as i64, cfg.acc)?;
                        ctr.int_muls += 1;
                        ctr.adds += 1;
                    }
                }
                t1.push(s1);
                if k2 {
                    t2.push(s2);
                }
            }
            Ok((t1, t2, ctr))
        })
        .collect::<Result<_>>()?;

    let lambda = qt.lattice().lambda() as f64;
    let f1 = qa.s_x * qt.s_c1 as f64 / lambda;
    let f2 = qa.s_x * qt.s_c2 as f64 / lambda;
    let mut counters = OpCounters::default();
    let mut y = Matrix::zeros(qa.rows, qt.d_out);
    let mut ints = IntAccumulators {
        acc1: vec![0; qa.rows * qt.d_out],
        acc2: if k2 { vec![0; qa.rows * qt.d_out] } else { Vec::new() },
    };
    for (i, (t1, t2, ctr)) in cols.iter().enumerate() {
        counters.merge(ctr);
        for n in 0..qa.rows {
            let idx = n * qt.d_out + i;
            ints.acc1[idx] = t1[n];
            let mut v = f1 * t1[n] as f64;
            counters.float_muls += 1;
            if k2 {
                ints.acc2[idx] = t2[n];
                v += f2 * t2[n] as f64;
                counters.float_muls += 1;
            }
            y[(n, i)] = v;
        }
    }

    if cfg.audit {
        let reference = integer_reference(qa, qt)?;
        if let Some(idx) = first_mismatch(&ints, &reference) {
            return Err(Error::AuditMismatch {
                row: idx / qt.d_out,
                col: idx % qt.d_out,
            });
        }
    }
    Ok(GemmOutput { y, ints, counters })
}

fn first_mismatch(a: &IntAccumulators, b: &IntAccumulators) -> Option<usize> {
    let first = |x: &[i64], y: &[i64]| x.iter().zip(y).position(|(p, q)| p != q);
    first(&a.acc1, &b.acc1).or_else(|| first(&a.acc2, &b.acc2))
}

/// The same integer totals computed with ordinary 64-bit multiplies on the
/// integerized bases.
pub fn integer_reference(qa: &QuantizedActivations, qt: &QuantizedTensor) -> Result<IntAccumulators> {
    let lat = qt.lattice();
    let tables = StrideTables::new(qt.config.micro_g)?;
    let nm = qt.n_macro();
    let k2 = qt.config.k == 2;
    let mut out = IntAccumulators {
        acc1: vec![0; qa.rows * qt.d_out],
        acc2: if k2 { vec![0; qa.rows * qt.d_out] } else { Vec::new() },
    };
    for i in 0..qt.d_out {
        let b1: Vec<i64> = qt.row_codes(i).iter().map(|&c| lat.int_values()[c as usize]).collect();
        let mut b2 = vec![0i64; qt.d_in];
        if k2 {
            for (m, r) in qt.macro_ranges().enumerate() {
                let e = expand_b2(&b1[r.clone()], qt.block_micro(i, m), &tables)?;
                b2[r].copy_from_slice(&e);
            }
        }
        for n in 0..qa.rows {
            let x = qa.row(n);
            let (mut s1, mut s2) = (0i64, 0i64);
            for (m, r) in qt.macro_ranges().enumerate() {
                let p1: i64 = r.clone().map(|j| x[j] as i64 * b1[j]).sum();
                s1 += p1 * qt.c1q[i * nm + m] as i64;
                if k2 {
                    let p2: i64 = r.map(|j| x[j] as i64 * b2[j]).sum();
                    s2 += p2 * qt.c2q[i * nm + m] as i64;
                }
            }
            out.acc1[n * qt.d_out + i] = s1;
            if k2 {
                out.acc2[n * qt.d_out + i] = s2;
            }
        }
    }
    Ok(out)
}

/// Plain float `X · Wᵀ`.
pub fn reference_gemm(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    x.matmul_transposed(w)
}

/// The float path the integer kernel must reproduce: dequantized activations
/// against dequantized smoothed weights.
pub fn float_reference(qa: &QuantizedActivations, qt: &QuantizedTensor) -> Result<Matrix> {
    qa.dequantize().matmul_transposed(&qt.dequantize_processed()?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterReport {
    pub counters: OpCounters,
    pub outputs: u64,
    pub int_muls_per_output: f64,
    /// Multiplies per output for a dense MAC array (`d_in`).
    pub mac_baseline_per_output: f64,
    /// `int_muls_per_output / mac_baseline_per_output`.
    pub mul_ratio: f64,
    pub skip_rate: f64,
}

pub fn report_counters(out: &GemmOutput, d_in: usize) -> CounterReport {
    let c = out.counters;
    let outputs = (out.y.rows() * out.y.cols()) as u64;
    let per = |v: u64| if outputs == 0 { 0.0 } else { v as f64 / outputs as f64 };
    let int_muls_per_output = per(c.int_muls);
    let terms = c.shifts + c.skipped_zeros;
    CounterReport {
        counters: c,
        outputs,
        int_muls_per_output,
        mac_baseline_per_output: d_in as f64,
        mul_ratio: if d_in == 0 { 0.0 } else { int_muls_per_output / d_in as f64 },
        skip_rate: if terms == 0 { 0.0 } else { c.skipped_zeros as f64 / terms as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MicroMeta;
    use crate::lattice::LatticeId;
    use crate::matrix::relative_l2;
    use crate::quantizer::{quantize_tensor, QuantConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// One-row tensor from explicit codes and scales, no smoothing.
    fn handmade(codes: Vec<u8>, c1: i8, s_c1: f32, k: u8) -> QuantizedTensor {
        let d_in = codes.len();
        let cfg = QuantConfig { k, ..Default::default() };
        QuantizedTensor {
            d_out: 1,
            d_in,
            config: cfg,
            s_norm: vec![1.0],
            s_vec: vec![1.0; d_in],
            s_c1,
            s_c2: 0.0,
            codes,
            micro: if k == 2 { vec![MicroMeta { stride: 1, signs: 0 }; d_in.div_ceil(32)] } else { vec![] },
            c1q: vec![c1],
            c2q: if k == 2 { vec![0] } else { vec![] },
        }
    }

    fn code(v: f64) -> u8 {
        LatticeId::Pot3.spec().values().iter().position(|&x| x == v).unwrap() as u8
    }

    #[test]
    fn activation_quantization_examples() {
        let qa = quantize_activations(&Matrix::zeros(2, 3), &[1.0; 3], 8, ActScaleSource::Dynamic).unwrap();
        assert!(qa.x_int.iter().all(|&v| v == 0));
        assert_eq!(qa.s_x, 1.0);

        let x = Matrix::from_rows(&[vec![1.27, -0.5, 0.013]]).unwrap();
        let qa = quantize_activations(&x, &[1.0; 3], 8, ActScaleSource::Dynamic).unwrap();
        assert!((qa.s_x - 0.01).abs() < 1e-15);
        assert_eq!(qa.x_int, vec![127, -50, 1]);

        assert!(quantize_activations(&x, &[1.0; 3], 5, ActScaleSource::Dynamic).is_err());
        assert!(quantize_activations(&x, &[1.0; 2], 8, ActScaleSource::Dynamic).is_err());
    }

    #[test]
    fn activation_rounding_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..6).map(|j| 0.5 + j as f64 * 0.3).collect();
        let x = Matrix::from_vec(10, 6, (0..60).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        let qa = quantize_activations(&x, &s, 8, ActScaleSource::Dynamic).unwrap();
        for n in 0..10 {
            for j in 0..6 {
                let back = qa.x_int[n * 6 + j] as f64 * qa.s_x * s[j];
                assert!((x[(n, j)] - back).abs() <= qa.s_x * s[j] / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn calib_source_clamps() {
        let x = Matrix::from_rows(&[vec![2.0, -0.5]]).unwrap();
        let qa = quantize_activations(&x, &[1.0, 1.0], 8, ActScaleSource::Calib(1.27)).unwrap();
        assert_eq!(qa.x_int, vec![127, -50]);
    }

    #[test]
    fn hand_evaluated_layer() {
        // x̃ = [3, -2], s_x = 0.1; B1 ints [8, 2]; c̃1 = 5, s_c1 = 0.01
        let qt = handmade(vec![code(1.0), code(0.25)], 5, 0.01, 2);
        let qa = QuantizedActivations {
            rows: 1,
            cols: 2,
            x_int: vec![3, -2],
            s_x: 0.1,
            bits: 8,
        };
        let out = shiftadd_gemm(&qa, &qt, &KernelConfig { audit: true, ..Default::default() }).unwrap();
        assert_eq!(out.ints.acc1, vec![100]);
        let expected = 0.1 * (0.01f32 as f64) / 8.0 * 100.0;
        assert_eq!(out.y[(0, 0)], expected);
        assert!((out.y[(0, 0)] - 0.0125).abs() < 1e-9);
    }

    #[test]
    fn zero_column_is_skipped() {
        let d_in = 40;
        let qt = handmade(vec![code(0.0); d_in], 3, 1.0, 1);
        let qa = QuantizedActivations {
            rows: 1,
            cols: d_in,
            x_int: vec![7; d_in],
            s_x: 1.0,
            bits: 8,
        };
        let out = shiftadd_gemm(&qa, &qt, &KernelConfig::default()).unwrap();
        assert_eq!(out.y[(0, 0)], 0.0);
        assert_eq!(out.counters.skipped_zeros, d_in as u64);
        assert_eq!(out.counters.shifts, 0);
    }

    #[test]
    fn matches_float_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = Matrix::from_vec(8, 128, (0..8 * 128).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let x = Matrix::from_vec(16, 128, (0..16 * 128).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let qt = quantize_tensor(&w, None, &QuantConfig::default()).unwrap();
        let qa = quantize_activations_for(&x, &qt, ActScaleSource::Dynamic).unwrap();
        let out = shiftadd_gemm(&qa, &qt, &KernelConfig { audit: true, ..Default::default() }).unwrap();
        let reference = float_reference(&qa, &qt).unwrap();
        assert!(relative_l2(reference.as_slice(), out.y.as_slice()) <= 1e-6);
        let rep = report_counters(&out, 128);
        assert_eq!(rep.int_muls_per_output, 2.0);
        assert_eq!(rep.counters.loop_muls, 0);
    }

    #[test]
    fn overflow_detected_at_configuration() {
        let qt = handmade(vec![code(1.0); 2048], 1, 1.0, 1);
        let mut qt4 = qt.clone();
        qt4.config.bits = 4;
        qt4.codes = vec![15; 2048];
        assert!(check_accumulator(&qt, 8, AccumulatorWidth::default()).is_ok());
        assert!(matches!(
            check_accumulator(&qt4, 8, AccumulatorWidth::default()),
            Err(Error::Overflow(_))
        ));
        assert!(check_accumulator(&qt4, 8, AccumulatorWidth::new(64).unwrap()).is_ok());
        assert!(matches!(
            check_accumulator(&qt, 16, AccumulatorWidth::default()),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn linear_lattice_is_rejected() {
        let mut qt = handmade(vec![0; 4], 1, 1.0, 1);
        qt.config.topology = Topology::Linear;
        let qa = QuantizedActivations { rows: 1, cols: 4, x_int: vec![1; 4], s_x: 1.0, bits: 8 };
        assert!(matches!(
            shiftadd_gemm(&qa, &qt, &KernelConfig::default()),
            Err(Error::NotShiftable(_))
        ));
    }
}
