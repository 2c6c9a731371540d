//! Discrete value sets for the primary basis and their integerized forms.
//!
//! Levels are stored in ascending order and a code is the index of its level.
//! Every level of a power-of-two lattice is `±2^e` (or zero), so multiplying an
//! integer by its integerized form `level · Λ` is a left shift plus an optional
//! negation.

use std::fmt;
use std::sync::LazyLock;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    Pot,
    Linear,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Pot => f.write_str("pot"),
            Topology::Linear => f.write_str("linear"),
        }
    }
}

/// Lattice identifier as stored in model files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum LatticeId {
    Pot3 = 0,
    Pot4 = 1,
    Lin3 = 2,
    Lin4 = 3,
}

impl LatticeId {
    pub fn new(topology: Topology, bits: u8) -> Result<Self> {
        match (topology, bits) {
            (Topology::Pot, 3) => Ok(Self::Pot3),
            (Topology::Pot, 4) => Ok(Self::Pot4),
            (Topology::Linear, 3) => Ok(Self::Lin3),
            (Topology::Linear, 4) => Ok(Self::Lin4),
            _ => Err(Error::Config(format!("unsupported lattice bit width {bits}"))),
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Self::Pot3),
            1 => Ok(Self::Pot4),
            2 => Ok(Self::Lin3),
            3 => Ok(Self::Lin4),
            _ => Err(Error::Corrupt(format!("unknown lattice id {b}"))),
        }
    }

    pub fn spec(self) -> &'static LatticeSpec {
        static SPECS: LazyLock<[LatticeSpec; 4]> = LazyLock::new(|| {
            [
                LatticeSpec::pot(3),
                LatticeSpec::pot(4),
                LatticeSpec::linear(3),
                LatticeSpec::linear(4),
            ]
        });
        &SPECS[self as usize]
    }
}

impl fmt::Display for LatticeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LatticeId::Pot3 => "pot3",
            LatticeId::Pot4 => "pot4",
            LatticeId::Lin3 => "lin3",
            LatticeId::Lin4 => "lin4",
        };
        f.write_str(s)
    }
}

/// Storage code of a single primary-basis entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticeCode(pub u8);

/// Signed accumulator width for the shift datapath.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccumulatorWidth(u32);

impl AccumulatorWidth {
    pub fn new(bits: u32) -> Result<Self> {
        if !(8..=64).contains(&bits) {
            return Err(Error::Config(format!("accumulator width {bits} not in 8..=64")));
        }
        Ok(Self(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn max(self) -> i128 {
        (1i128 << (self.0 - 1)) - 1
    }

    #[inline]
    pub fn fits(self, v: i128) -> bool {
        let lim = 1i128 << (self.0 - 1);
        v >= -lim && v < lim
    }
}

impl Default for AccumulatorWidth {
    fn default() -> Self {
        Self(32)
    }
}

/// Sign-magnitude form of one integerized level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftOp {
    pub shift: u32,
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    id: LatticeId,
    topology: Topology,
    bits: u8,
    values: Vec<f64>,
    int_values: Vec<i64>,
    lambda: i64,
    shift_ops: Vec<Option<ShiftOp>>,
}

impl LatticeSpec {
    /// Asymmetric power-of-two lattice: `2^(bits-1)` negative levels down to
    /// `-2^-(2^(bits-1)-1)`, a zero state, and one fewer positive level (the
    /// smallest positive bin is given up for zero).
    fn pot(bits: u8) -> Self {
        let half = 1usize << (bits - 1);
        let max_exp = (half - 1) as i32;
        let mut values = Vec::with_capacity(1 << bits);
        for e in 0..half as i32 {
            values.push(-(2f64.powi(-e)));
        }
        values.push(0.0);
        for e in (0..max_exp).rev() {
            values.push(2f64.powi(-e));
        }
        let lambda = 1i64 << max_exp;
        let int_values: Vec<i64> = values.iter().map(|v| (v * lambda as f64) as i64).collect();
        let shift_ops = int_values
            .iter()
            .map(|&iv| {
                (iv != 0).then(|| ShiftOp {
                    shift: iv.unsigned_abs().trailing_zeros(),
                    negative: iv < 0,
                })
            })
            .collect();
        Self {
            id: LatticeId::new(Topology::Pot, bits).expect("pot bits"),
            topology: Topology::Pot,
            bits,
            values,
            int_values,
            lambda,
            shift_ops,
        }
    }

    /// Symmetric uniform grid `{-m..=m}/m`, `m = 2^(bits-1) - 1`. The top code
    /// is unused.
    fn linear(bits: u8) -> Self {
        let m = (1i64 << (bits - 1)) - 1;
        let int_values: Vec<i64> = (-m..=m).collect();
        let values = int_values.iter().map(|&k| k as f64 / m as f64).collect();
        Self {
            id: LatticeId::new(Topology::Linear, bits).expect("linear bits"),
            topology: Topology::Linear,
            bits,
            values,
            shift_ops: vec![None; int_values.len()],
            int_values,
            lambda: m,
        }
    }

    pub fn id(&self) -> LatticeId {
        self.id
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Ordered levels.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `values · Λ`, exact.
    pub fn int_values(&self) -> &[i64] {
        &self.int_values
    }

    /// Integerization factor Λ.
    pub fn lambda(&self) -> i64 {
        self.lambda
    }

    /// Number of valid codes.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_code(&self) -> LatticeCode {
        let idx = self.values.iter().position(|&v| v == 0.0).expect("zero state");
        LatticeCode(idx as u8)
    }

    /// Code of the level closest to `x` (clamped to `[-1, 1]`); equidistant
    /// candidates resolve to the larger magnitude. `x` must not be NaN.
    pub fn nearest(&self, x: f64) -> LatticeCode {
        let x = x.clamp(-1.0, 1.0);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, &v) in self.values.iter().enumerate() {
            let d = (v - x).abs();
            if d < best_d || (d == best_d && v.abs() > self.values[best].abs()) {
                best = k;
                best_d = d;
            }
        }
        LatticeCode(best as u8)
    }

    pub fn check(&self, c: LatticeCode) -> Result<()> {
        if (c.0 as usize) < self.values.len() {
            Ok(())
        } else {
            Err(Error::CodeOutOfRange {
                code: c.0,
                bits: self.bits,
            })
        }
    }

    pub fn decode(&self, c: LatticeCode) -> Result<f64> {
        self.check(c)?;
        Ok(self.values[c.0 as usize])
    }

    pub fn decode_int(&self, c: LatticeCode) -> Result<i64> {
        self.check(c)?;
        Ok(self.int_values[c.0 as usize])
    }

    /// Sign-magnitude shift form of a code; `None` for the zero state.
    pub fn shift_op(&self, c: LatticeCode) -> Result<Option<ShiftOp>> {
        if self.topology != Topology::Pot {
            return Err(Error::NotShiftable("linear"));
        }
        self.check(c)?;
        Ok(self.shift_ops[c.0 as usize])
    }

    /// `a · int_values[c] · (-1)^flip` using a shift, a sign toggle, and
    /// zero-skip only.
    pub fn shift_mul(
        &self,
        a: i64,
        c: LatticeCode,
        flip: bool,
        width: AccumulatorWidth,
    ) -> Result<i64> {
        let Some(op) = self.shift_op(c)? else {
            return Ok(0);
        };
        shift_apply(a, op, flip, width)
    }
}

/// Apply a pre-decoded shift op. Used by the kernel's inner loop.
#[inline]
pub fn shift_apply(a: i64, op: ShiftOp, flip: bool, width: AccumulatorWidth) -> Result<i64> {
    let mag = (a as i128) << op.shift;
    let v = if op.negative ^ flip { -mag } else { mag };
    if width.fits(v) {
        Ok(v as i64)
    } else {
        Err(Error::Overflow(format!(
            "{a} << {} exceeds {}-bit accumulator",
            op.shift,
            width.bits()
        )))
    }
}
