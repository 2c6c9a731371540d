//! Primary projection, orthogonal residual, and the strided dual-exchange
//! construction of the secondary basis.
//!
//! Within a micro-block of length `G`, a stride `s` pairs indices along the
//! cycles of `i ↦ (i + s) mod G`. Each pair `(i, j)` with sign `η` maps the
//! primary entries `(x_i, x_j)` to `(-η x_j, η x_i)`. Every pair contributes
//! `x_i(-η x_j) + x_j(η x_i) = 0` to the inner product, so the result is
//! orthogonal to the primary block for every stride and sign choice, and it
//! only ever holds (possibly negated) primary levels.

use std::ops::{Neg, Range};

use crate::error::{Error, Result};
use crate::lattice::{LatticeCode, LatticeSpec};
use crate::matrix::dot;

/// Largest supported micro-block; the sign bitmap is 16 bits wide.
pub const MAX_MICRO: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryProjection {
    pub codes: Vec<LatticeCode>,
    pub s_norm: f64,
    pub values: Vec<f64>,
}

/// `b₁ = Q(w / s_norm)`.
pub fn project_primary(w_proc: &[f64], spec: &LatticeSpec, s_norm: f64) -> Result<PrimaryProjection> {
    if !(s_norm.is_finite() && s_norm > 0.0) {
        return Err(Error::Config(format!("s_norm must be positive, got {s_norm}")));
    }
    let mut codes = Vec::with_capacity(w_proc.len());
    let mut values = Vec::with_capacity(w_proc.len());
    for &w in w_proc {
        if w.is_nan() {
            return Err(Error::NonFinite("weights"));
        }
        let c = spec.nearest(w / s_norm);
        codes.push(c);
        values.push(spec.values()[c.0 as usize]);
    }
    Ok(PrimaryProjection {
        codes,
        s_norm,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalResidual {
    pub r_perp: Vec<f64>,
}

/// Gram-Schmidt step removing the `b₁` component from `w_proc`.
pub fn residual(w_proc: &[f64], b1: &[f64]) -> OrthogonalResidual {
    let nb = dot(b1, b1);
    if nb == 0.0 {
        return OrthogonalResidual {
            r_perp: w_proc.to_vec(),
        };
    }
    let k = dot(w_proc, b1) / nb;
    OrthogonalResidual {
        r_perp: w_proc.iter().zip(b1).map(|(w, b)| w - k * b).collect(),
    }
}

/// Largest stride searched for a micro-block of length `len`.
pub fn max_stride(len: usize) -> usize {
    (len / 2).max(1)
}

/// Index pairs for one stride over one micro-block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    len: usize,
    stride: usize,
    pairs: Vec<(u8, u8)>,
}

impl Pairing {
    /// Alternating-edge matching along the cycles of `i ↦ (i + stride) mod len`,
    /// each cycle walked from its smallest unvisited index. Odd-length cycles
    /// (only possible for ragged blocks) leave their last index unpaired.
    pub fn new(len: usize, stride: usize) -> Result<Self> {
        if len == 0 || len > MAX_MICRO {
            return Err(Error::Config(format!("micro-block length {len} not in 1..={MAX_MICRO}")));
        }
        if stride == 0 || stride > max_stride(len) {
            return Err(Error::Config(format!(
                "stride {stride} not in 1..={} for length {len}",
                max_stride(len)
            )));
        }
        let mut visited = [false; MAX_MICRO];
        let mut pairs = Vec::with_capacity(len / 2);
        let mut cycle = Vec::with_capacity(len);
        for start in 0..len {
            if visited[start] {
                continue;
            }
            cycle.clear();
            let mut i = start;
            while !visited[i] {
                visited[i] = true;
                cycle.push(i);
                i = (i + stride) % len;
            }
            for e in cycle.chunks_exact(2) {
                pairs.push((e[0] as u8, e[1] as u8));
            }
        }
        Ok(Self { len, stride, pairs })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn pairs(&self) -> &[(u8, u8)] {
        &self.pairs
    }

    pub fn is_perfect(&self) -> bool {
        2 * self.pairs.len() == self.len
    }
}

/// Perfect matching for stride `s` over a block of even length `g`.
pub fn pairing_for_stride(g: usize, s: usize) -> Result<Vec<(usize, usize)>> {
    if g < 2 || !g.is_multiple_of(2) {
        return Err(Error::Config(format!("micro-block length {g} must be even")));
    }
    let p = Pairing::new(g, s)?;
    if !p.is_perfect() {
        return Err(Error::Config(format!(
            "stride {s} has odd cycles on length {g}"
        )));
    }
    Ok(p.pairs.iter().map(|&(i, j)| (i as usize, j as usize)).collect())
}

/// All pairings for every micro-block length up to `g`, indexed by
/// `(len, stride)`.
#[derive(Debug, Clone)]
pub struct StrideTables {
    g: usize,
    by_len: Vec<Vec<Pairing>>,
}

impl StrideTables {
    pub fn new(g: usize) -> Result<Self> {
        if g == 0 || g > MAX_MICRO {
            return Err(Error::Config(format!("micro-block size {g} not in 1..={MAX_MICRO}")));
        }
        let by_len = (1..=g)
            .map(|len| {
                (1..=max_stride(len))
                    .map(|s| Pairing::new(len, s))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { g, by_len })
    }

    pub fn g(&self) -> usize {
        self.g
    }

    /// Every candidate pairing for a micro-block of length `len`.
    pub fn for_len(&self, len: usize) -> &[Pairing] {
        &self.by_len[len - 1]
    }

    pub fn get(&self, len: usize, stride: usize) -> Result<&Pairing> {
        if len == 0 || len > self.g {
            return Err(Error::Corrupt(format!("micro-block length {len} exceeds {}", self.g)));
        }
        self.for_len(len)
            .get(stride.wrapping_sub(1))
            .ok_or_else(|| Error::Corrupt(format!("stride {stride} invalid for length {len}")))
    }
}

/// Split `0..len` into consecutive chunks of `g` (the last may be shorter).
pub fn micro_ranges(len: usize, g: usize) -> impl Iterator<Item = Range<usize>> {
    (0..len.div_ceil(g)).map(move |k| k * g..((k + 1) * g).min(len))
}

#[inline]
fn eta_negative(signs: u16, k: usize) -> bool {
    signs >> k & 1 == 1
}

/// `[y_i, y_j] = [-η x_j, η x_i]` for every pair; unpaired entries are zero.
/// Bit `k` of `signs` set means `η = -1` for pair `k`.
pub fn dual_exchange<T>(v: &[T], pairing: &Pairing, signs: u16) -> Vec<T>
where
    T: Copy + Default + Neg<Output = T>,
{
    let mut out = vec![T::default(); v.len()];
    dual_exchange_into(v, pairing, signs, &mut out);
    out
}

pub fn dual_exchange_into<T>(v: &[T], pairing: &Pairing, signs: u16, out: &mut [T])
where
    T: Copy + Default + Neg<Output = T>,
{
    debug_assert_eq!(v.len(), pairing.len());
    out.fill(T::default());
    for (k, &(i, j)) in pairing.pairs().iter().enumerate() {
        let (i, j) = (i as usize, j as usize);
        if eta_negative(signs, k) {
            out[i] = v[j];
            out[j] = -v[i];
        } else {
            out[i] = -v[j];
            out[j] = v[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignChoice {
    pub signs: u16,
    /// `⟨b₂, r⟩` achieved, equal to `Σ |x_i r_j − x_j r_i|`.
    pub alignment: f64,
}

/// Per pair, `η* = sign(x_i r_j − x_j r_i)` with zero mapped to `+1`.
pub fn optimal_signs(v: &[f64], r: &[f64], pairing: &Pairing) -> SignChoice {
    let mut signs = 0u16;
    let mut alignment = 0.0;
    for (k, &(i, j)) in pairing.pairs().iter().enumerate() {
        let (i, j) = (i as usize, j as usize);
        let t = v[i] * r[j] - v[j] * r[i];
        if t < 0.0 {
            signs |= 1 << k;
        }
        alignment += t.abs();
    }
    SignChoice { signs, alignment }
}

/// Storage form of one micro-block's secondary basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MicroMeta {
    pub stride: u8,
    pub signs: u16,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroBlockBasis {
    pub meta: MicroMeta,
    pub alignment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroBasis {
    pub micro: Vec<MicroBlockBasis>,
    pub b2_values: Vec<f64>,
}

impl MacroBasis {
    pub fn alignment(&self) -> f64 {
        self.micro.iter().map(|m| m.alignment).sum()
    }
}

/// Work counters for the stride/sign search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchOps {
    /// Pair terms `x_i r_j − x_j r_i` evaluated.
    pub pair_evals: u64,
    /// Candidate strides scored.
    pub stride_evals: u64,
}

impl SearchOps {
    pub fn total(&self) -> u64 {
        self.pair_evals + self.stride_evals
    }

    pub fn merge(&mut self, other: SearchOps) {
        self.pair_evals += other.pair_evals;
        self.stride_evals += other.stride_evals;
    }
}

/// Best stride and signs for one micro-block; the smallest stride wins ties.
pub fn search_micro_block(
    v: &[f64],
    r: &[f64],
    candidates: &[Pairing],
    ops: &mut SearchOps,
) -> MicroBlockBasis {
    let mut best = MicroBlockBasis {
        meta: MicroMeta { stride: 1, signs: 0 },
        alignment: f64::NEG_INFINITY,
    };
    for p in candidates {
        let choice = optimal_signs(v, r, p);
        ops.pair_evals += p.pairs().len() as u64;
        ops.stride_evals += 1;
        if choice.alignment > best.alignment {
            best = MicroBlockBasis {
                meta: MicroMeta {
                    stride: p.stride() as u8,
                    signs: choice.signs,
                },
                alignment: choice.alignment,
            };
        }
    }
    if best.alignment == f64::NEG_INFINITY {
        best.alignment = 0.0;
    }
    best
}

/// Secondary basis for one macro-block of primary values `b1` and residual
/// `r`, assembled from independently searched micro-blocks.
pub fn search_basis(b1: &[f64], r: &[f64], tables: &StrideTables, ops: &mut SearchOps) -> MacroBasis {
    assert_eq!(b1.len(), r.len());
    let mut micro = Vec::with_capacity(b1.len().div_ceil(tables.g()));
    let mut b2_values = vec![0.0; b1.len()];
    for range in micro_ranges(b1.len(), tables.g()) {
        let len = range.len();
        let (v, rr) = (&b1[range.clone()], &r[range.clone()]);
        let basis = search_micro_block(v, rr, tables.for_len(len), ops);
        let pairing = &tables.for_len(len)[basis.meta.stride as usize - 1];
        dual_exchange_into(v, pairing, basis.meta.signs, &mut b2_values[range]);
        micro.push(basis);
    }
    MacroBasis { micro, b2_values }
}

/// Rebuild the secondary basis of a macro-block from stored metadata.
pub fn expand_b2<T>(b1: &[T], metas: &[MicroMeta], tables: &StrideTables) -> Result<Vec<T>>
where
    T: Copy + Default + Neg<Output = T>,
{
    let mut out = vec![T::default(); b1.len()];
    let ranges: Vec<_> = micro_ranges(b1.len(), tables.g()).collect();
    if ranges.len() != metas.len() {
        return Err(Error::Corrupt(format!(
            "{} micro-blocks but {} metadata entries",
            ranges.len(),
            metas.len()
        )));
    }
    for (range, meta) in ranges.into_iter().zip(metas) {
        let pairing = tables.get(range.len(), meta.stride as usize)?;
        if pairing.pairs().len() < 16 && meta.signs >> pairing.pairs().len() != 0 {
            return Err(Error::Corrupt("sign bits beyond pair count".into()));
        }
        dual_exchange_into(&b1[range.clone()], pairing, meta.signs, &mut out[range]);
    }
    Ok(out)
}

/// Exact `⟨a, b⟩` over integers.
pub fn int_inner(a: &[i64], b: &[i64]) -> i128 {
    a.iter().zip(b).map(|(&x, &y)| x as i128 * y as i128).sum()
}
