//! Binary containers: quantized models (`.gq`) and plain f32 tensors (`.gqt`).
//!
//! Both are little-endian throughout. Model layout:
//!
//! ```text
//! "GOQT" | version u16 | tensor count u32 | record*
//! record:
//!   name_len u16 | name utf-8
//!   d_out u32 | d_in u32 | lattice id u8
//!   N u16 | G u16 | K u8 | flags u8 | act_bits u8 | scale_bits u8 | alpha f32 | lambda f32
//!   s_norm f32 × (d_out, or d_out·n_macro when flags bit 1 is set)
//!   s_vec f32 × d_in | s_c1 f32 | s_c2 f32
//!   codes: per row ⌈d_in·bits/8⌉ bytes, LSB-first bit stream
//!   K = 2 only: micro-block metadata, ⌈d_out·n_micro·(4 + G/2)/8⌉ bytes
//!   scales: ⌈K·d_out·n_macro·b_c/8⌉ bytes
//! flags: bit 0 = REF solve, bit 1 = per-macro-block normalization
//! ```
//!
//! Every packed field is an LSB-first bit stream. Codes restart on a byte
//! boundary for each row. Micro-block metadata is one stream over all
//! micro-blocks in row-major order, each entry `stride − 1` in 4 bits followed
//! by `G/2` sign bits. Scales are one stream of `b_c`-bit two's complement
//! values, all of c̃1 then all of c̃2. Padding bits are zero.
//!
//! Tensor container layout:
//!
//! ```text
//! "GQTL" | version u16 | count u32 | (name_len u16 | name | ndim u8 | dim u32 × ndim | f32 × Πdim)*
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::MicroMeta;
use crate::lattice::LatticeId;
use crate::matrix::Matrix;
use crate::quantizer::{NormScope, QuantConfig, QuantizedTensor};
use crate::solver::SolveMode;

pub const MODEL_MAGIC: &[u8; 4] = b"GOQT";
pub const TENSOR_MAGIC: &[u8; 4] = b"GQTL";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: QuantizedTensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Model {
    pub tensors: Vec<NamedTensor>,
}

impl Model {
    pub fn get(&self, name: &str) -> Option<&QuantizedTensor> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.tensor)
    }
}

/// Pack codes of `bits` bits each into an LSB-first byte stream.
pub fn pack_codes(codes: &[u8], bits: u8, out: &mut Vec<u8>) {
    let mut acc = 0u32;
    let mut filled = 0u8;
    for &c in codes {
        acc |= (c as u32) << filled;
        filled += bits;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
}

pub fn unpack_codes(bytes: &[u8], bits: u8, count: usize, out: &mut Vec<u8>) {
    let mask = (1u32 << bits) - 1;
    let mut acc = 0u32;
    let mut filled = 0u8;
    let mut it = bytes.iter();
    for _ in 0..count {
        while filled < bits {
            acc |= (*it.next().expect("packed length checked") as u32) << filled;
            filled += 8;
        }
        out.push((acc & mask) as u8);
        acc >>= bits;
        filled -= bits;
    }
}

pub fn packed_row_bytes(d_in: usize, bits: u8) -> usize {
    (d_in * bits as usize).div_ceil(8)
}

/// Exact serialized size of one record, from its shape and configuration.
pub fn record_len(name: &str, qt: &QuantizedTensor) -> usize {
    let c = &qt.config;
    let k2 = c.k == 2;
    let blocks = qt.d_out * qt.n_macro();
    2 + name.len()
        + 8
        + 1
        + 16
        + 4 * qt.s_norm_len()
        + 4 * qt.d_in
        + 8
        + qt.d_out * packed_row_bytes(qt.d_in, c.bits)
        + if k2 { meta_bytes(qt.d_out * qt.n_micro(), c.micro_g) } else { 0 }
        + scale_bytes(blocks * c.k as usize, c.scale_bits)
}

fn meta_bytes(n_micro: usize, g: usize) -> usize {
    (n_micro * (4 + g / 2)).div_ceil(8)
}

fn scale_bytes(n: usize, scale_bits: u8) -> usize {
    (n * scale_bits as usize).div_ceil(8)
}

/// LSB-first bit stream writer for fields up to 32 bits wide.
struct BitWriter<'a> {
    out: &'a mut Vec<u8>,
    acc: u64,
    filled: u32,
}

impl<'a> BitWriter<'a> {
    fn new(out: &'a mut Vec<u8>) -> Self {
        Self { out, acc: 0, filled: 0 }
    }

    fn put(&mut self, v: u32, bits: u32) {
        debug_assert!(bits <= 32 && (bits == 32 || v >> bits == 0));
        self.acc |= (v as u64) << self.filled;
        self.filled += bits;
        while self.filled >= 8 {
            self.out.push(self.acc as u8);
            self.acc >>= 8;
            self.filled -= 8;
        }
    }

    fn finish(self) {
        if self.filled > 0 {
            self.out.push(self.acc as u8);
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u64,
    filled: u32,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self {
            bytes,
            pos: 0,
            acc: 0,
            filled: 0,
        }
    }

    fn get(&mut self, bits: u32) -> u32 {
        while self.filled < bits {
            self.acc |= (self.bytes[self.pos] as u64) << self.filled;
            self.pos += 1;
            self.filled += 8;
        }
        let v = (self.acc & ((1u64 << bits) - 1)) as u32;
        self.acc >>= bits;
        self.filled -= bits;
        v
    }

    /// Padding after the last field must be zero.
    fn padding_is_zero(&self) -> bool {
        self.acc == 0 && self.pos == self.bytes.len()
    }
}

pub fn encoded_len(model: &Model) -> usize {
    10 + model
        .tensors
        .iter()
        .map(|t| record_len(&t.name, &t.tensor))
        .sum::<usize>()
}

fn put_u16(b: &mut Vec<u8>, v: u16) {
    b.extend_from_slice(&v.to_le_bytes());
}
fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}
fn put_f32(b: &mut Vec<u8>, v: f32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_name(b: &mut Vec<u8>, name: &str) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::Config(format!("name too long: {name:?}")))?;
    put_u16(b, len);
    b.extend_from_slice(name.as_bytes());
    Ok(())
}

fn dim_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Config(format!("dimension {v} exceeds u32")))
}

pub fn save(model: &Model) -> Result<Vec<u8>> {
    let mut b = Vec::with_capacity(encoded_len(model));
    b.extend_from_slice(MODEL_MAGIC);
    put_u16(&mut b, VERSION);
    put_u32(&mut b, dim_u32(model.tensors.len())?);
    for NamedTensor { name, tensor: qt } in &model.tensors {
        qt.validate()?;
        let c = &qt.config;
        put_name(&mut b, name)?;
        put_u32(&mut b, dim_u32(qt.d_out)?);
        put_u32(&mut b, dim_u32(qt.d_in)?);
        b.push(c.lattice_id() as u8);
        put_u16(&mut b, c.macro_n as u16);
        put_u16(&mut b, c.micro_g as u16);
        b.push(c.k);
        let flags = (c.mode == SolveMode::Ref) as u8 | ((c.norm_scope == NormScope::PerMacroBlock) as u8) << 1;
        b.push(flags);
        b.push(c.act_bits);
        b.push(c.scale_bits);
        put_f32(&mut b, c.alpha);
        put_f32(&mut b, c.lambda);
        qt.s_norm.iter().for_each(|&v| put_f32(&mut b, v));
        qt.s_vec.iter().for_each(|&v| put_f32(&mut b, v));
        put_f32(&mut b, qt.s_c1);
        put_f32(&mut b, qt.s_c2);
        for i in 0..qt.d_out {
            pack_codes(qt.row_codes(i), c.bits, &mut b);
        }
        if !qt.micro.is_empty() {
            let sign_bits = (c.micro_g / 2) as u32;
            let mut w = BitWriter::new(&mut b);
            for m in &qt.micro {
                w.put((m.stride - 1) as u32, 4);
                w.put(m.signs as u32, sign_bits);
            }
            w.finish();
        }
        let sb = c.scale_bits as u32;
        let mask = (1u32 << sb) - 1;
        let mut w = BitWriter::new(&mut b);
        for &v in qt.c1q.iter().chain(&qt.c2q) {
            w.put(v as i32 as u32 & mask, sb);
        }
        w.finish();
    }
    Ok(b)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::UnexpectedEof)?;
        let s = self.buf.get(self.pos..end).ok_or(Error::UnexpectedEof)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(Error::UnexpectedEof)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn name(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))
    }

    fn header(&mut self, magic: &'static [u8; 4], expected: &'static str) -> Result<u32> {
        if self.buf.len() < 4 {
            return Err(Error::UnexpectedEof);
        }
        if self.take(4)? != magic {
            return Err(Error::BadMagic { expected });
        }
        let v = self.u16()?;
        if v != VERSION {
            return Err(Error::UnsupportedVersion(v));
        }
        self.u32()
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn read_record(r: &mut Reader) -> Result<NamedTensor> {
    let name = r.name()?;
    let d_out = r.u32()? as usize;
    let d_in = r.u32()? as usize;
    let lattice = LatticeId::from_byte(r.u8()?)?;
    let spec = lattice.spec();
    let macro_n = r.u16()? as usize;
    let micro_g = r.u16()? as usize;
    let k = r.u8()?;
    let flags = r.u8()?;
    if flags > 3 {
        return Err(Error::Corrupt(format!("unknown flags {flags:#x}")));
    }
    let config = QuantConfig {
        bits: spec.bits(),
        topology: spec.topology(),
        mode: if flags & 1 == 1 { SolveMode::Ref } else { SolveMode::Geo },
        k,
        macro_n,
        micro_g,
        act_bits: r.u8()?,
        scale_bits: r.u8()?,
        alpha: r.f32()?,
        lambda: r.f32()?,
        norm_scope: if flags & 2 == 2 { NormScope::PerMacroBlock } else { NormScope::PerChannel },
    };
    config
        .validate()
        .map_err(|e| Error::Corrupt(format!("record {name:?}: {e}")))?;
    let n_macro = d_in.div_ceil(macro_n);
    let n_micro = d_in.div_ceil(micro_g);
    let s_norm_len = match config.norm_scope {
        NormScope::PerChannel => d_out,
        NormScope::PerMacroBlock => d_out * n_macro,
    };
    let s_norm = r.f32s(s_norm_len)?;
    let s_vec = r.f32s(d_in)?;
    let s_c1 = r.f32()?;
    let s_c2 = r.f32()?;
    let row_bytes = packed_row_bytes(d_in, config.bits);
    let mut codes = Vec::with_capacity(d_out * d_in);
    for _ in 0..d_out {
        unpack_codes(r.take(row_bytes)?, config.bits, d_in, &mut codes);
    }
    let mut micro = Vec::new();
    if k == 2 {
        let n = d_out * n_micro;
        let sign_bits = (micro_g / 2) as u32;
        let mut br = BitReader::new(r.take(meta_bytes(n, micro_g))?);
        micro.reserve(n);
        for _ in 0..n {
            let stride = br.get(4) as u8 + 1;
            let signs = br.get(sign_bits) as u16;
            micro.push(MicroMeta { stride, signs });
        }
        if !br.padding_is_zero() {
            return Err(Error::Corrupt(format!("record {name:?}: nonzero metadata padding")));
        }
    }
    let blocks = d_out * n_macro;
    let sb = config.scale_bits as u32;
    let qmax = config.scale_qmax();
    let mut br = BitReader::new(r.take(scale_bytes(blocks * k as usize, config.scale_bits))?);
    let mut scales = Vec::with_capacity(blocks * k as usize);
    for _ in 0..blocks * k as usize {
        // Sign-extend the b_c-bit field.
        let v = ((br.get(sb) << (32 - sb)) as i32) >> (32 - sb);
        if v.abs() > qmax {
            return Err(Error::Corrupt(format!("record {name:?}: scale code {v} exceeds ±{qmax}")));
        }
        scales.push(v as i8);
    }
    if !br.padding_is_zero() {
        return Err(Error::Corrupt(format!("record {name:?}: nonzero scale padding")));
    }
    let c2q = scales.split_off(blocks);
    let c1q = scales;
    let tensor = QuantizedTensor {
        d_out,
        d_in,
        config,
        s_norm,
        s_vec,
        s_c1,
        s_c2,
        codes,
        micro,
        c1q,
        c2q,
    };
    tensor
        .validate()
        .map_err(|e| Error::Corrupt(format!("record {name:?}: {e}")))?;
    Ok(NamedTensor { name, tensor })
}

pub fn load(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes);
    let count = r.header(MODEL_MAGIC, "GOQT")?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        tensors.push(read_record(&mut r)?);
    }
    r.finish()?;
    Ok(Model { tensors })
}

pub fn save_model_file(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    std::fs::write(path, save(model)?)?;
    Ok(())
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<Model> {
    load(&std::fs::read(path)?)
}

/// A named, shaped f32 array.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedArray {
    pub fn from_matrix(name: impl Into<String>, m: &Matrix) -> Self {
        Self {
            name: name.into(),
            shape: vec![m.rows(), m.cols()],
            data: m.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }

    /// 2-D view; a 1-D array becomes a single row.
    pub fn to_matrix(&self) -> Result<Matrix> {
        let (r, c) = match self.shape[..] {
            [n] => (1, n),
            [r, c] => (r, c),
            _ => {
                return Err(Error::Shape(format!(
                    "tensor {:?} has rank {}, expected 1 or 2",
                    self.name,
                    self.shape.len()
                )))
            }
        };
        Matrix::from_vec(r, c, self.data.iter().map(|&v| v as f64).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub tensors: Vec<NamedArray>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }
}

pub fn save_tensor_container(file: &TensorFile) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    b.extend_from_slice(TENSOR_MAGIC);
    put_u16(&mut b, VERSION);
    put_u32(&mut b, dim_u32(file.tensors.len())?);
    for t in &file.tensors {
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(Error::Shape(format!("tensor {:?} shape does not match data", t.name)));
        }
        put_name(&mut b, &t.name)?;
        b.push(u8::try_from(t.shape.len()).map_err(|_| Error::Config("rank exceeds 255".into()))?);
        for &d in &t.shape {
            put_u32(&mut b, dim_u32(d)?);
        }
        t.data.iter().for_each(|&v| put_f32(&mut b, v));
    }
    Ok(b)
}

pub fn load_tensor_container(bytes: &[u8]) -> Result<TensorFile> {
    let mut r = Reader::new(bytes);
    let count = r.header(TENSOR_MAGIC, "GQTL")?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name = r.name()?;
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Corrupt("tensor size overflows".into()))?;
        let data = r.f32s(n)?;
        tensors.push(NamedArray { name, shape, data });
    }
    r.finish()?;
    Ok(TensorFile { tensors })
}

pub fn save_tensor_file(path: impl AsRef<Path>, file: &TensorFile) -> Result<()> {
    std::fs::write(path, save_tensor_container(file)?)?;
    Ok(())
}

pub fn load_tensor_file(path: impl AsRef<Path>) -> Result<TensorFile> {
    load_tensor_container(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::quantize_tensor;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64, k: u8, bits: u8) -> Model {
        model_with(seed, QuantConfig { k, bits, ..Default::default() })
    }

    fn model_with(seed: u64, cfg: QuantConfig) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Matrix::from_vec(5, 150, (0..750).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        Model {
            tensors: vec![NamedTensor {
                name: "layer.0".into(),
                tensor: quantize_tensor(&w, None, &cfg).unwrap(),
            }],
        }
    }

    #[test]
    fn three_bit_packing_is_eight_per_three_bytes() {
        let codes: Vec<u8> = (0..8).collect();
        let mut out = Vec::new();
        pack_codes(&codes, 3, &mut out);
        assert_eq!(out.len(), 3);
        // 0b111_110_101_100_011_010_001_000 little-endian
        assert_eq!(out, vec![0x88, 0xC6, 0xFA]);
        let mut back = Vec::new();
        unpack_codes(&out, 3, 8, &mut back);
        assert_eq!(back, codes);
    }

    #[test]
    fn roundtrip_and_size() {
        for (k, bits) in [(1, 3), (2, 3), (2, 4)] {
            let m = model(k as u64 + bits as u64, k, bits);
            let bytes = save(&m).unwrap();
            assert_eq!(bytes.len(), encoded_len(&m));
            assert_eq!(load(&bytes).unwrap(), m);
            assert_eq!(save(&m).unwrap(), bytes);
        }
    }

    #[test]
    fn narrow_metadata_and_scales_roundtrip() {
        for (g, n, sb) in [(2, 32, 3), (4, 64, 5), (8, 8, 8), (16, 128, 2)] {
            let cfg = QuantConfig {
                micro_g: g,
                macro_n: n,
                scale_bits: sb,
                ..Default::default()
            };
            let m = model_with(g as u64, cfg);
            let bytes = save(&m).unwrap();
            assert_eq!(bytes.len(), encoded_len(&m));
            assert_eq!(load(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn metadata_bit_layout() {
        let w = Matrix::from_rows(&[vec![0.9, -0.2, 0.4, 0.05]]).unwrap();
        let cfg = QuantConfig {
            micro_g: 4,
            macro_n: 4,
            ..Default::default()
        };
        let qt = quantize_tensor(&w, None, &cfg).unwrap();
        let m = qt.micro[0];
        let bytes = save(&Model {
            tensors: vec![NamedTensor { name: "t".into(), tensor: qt.clone() }],
        })
        .unwrap();
        // 6 metadata bits, then two 8-bit scales.
        let meta = bytes[bytes.len() - 3];
        assert_eq!(meta, (m.stride - 1) | (m.signs as u8) << 4);
        assert_eq!(bytes[bytes.len() - 2] as i8, qt.c1q[0]);
        assert_eq!(bytes[bytes.len() - 1] as i8, qt.c2q[0]);
    }

    #[test]
    fn empty_model() {
        let bytes = save(&Model::default()).unwrap();
        assert_eq!(bytes.len(), 10);
        assert_eq!(load(&bytes).unwrap(), Model::default());
    }

    #[test]
    fn load_errors() {
        let bytes = save(&model(1, 2, 3)).unwrap();
        assert!(matches!(load(&bytes[..bytes.len() - 1]), Err(Error::UnexpectedEof)));
        assert!(matches!(load(&bytes[..2]), Err(Error::UnexpectedEof)));
        let mut bad = bytes.clone();
        bad[0] ^= 0xFF;
        assert!(matches!(load(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(load(&bad), Err(Error::UnsupportedVersion(9))));
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(load(&bad), Err(Error::Corrupt(_))));
    }

    #[test]
    fn tensor_container_roundtrip_and_errors() {
        let f = TensorFile {
            tensors: vec![
                NamedArray { name: "w".into(), shape: vec![2, 3], data: vec![1.0, -2.0, 3.5, 0.0, 1e-7, -0.25] },
                NamedArray { name: "b".into(), shape: vec![3], data: vec![0.5, 0.25, 0.125] },
            ],
        };
        let bytes = save_tensor_container(&f).unwrap();
        assert_eq!(load_tensor_container(&bytes).unwrap(), f);
        assert_eq!(f.get("b").unwrap().to_matrix().unwrap().rows(), 1);
        assert!(matches!(f.get("nope"), Err(Error::MissingTensor(_))));
        assert!(matches!(load_tensor_container(&bytes[..bytes.len() - 3]), Err(Error::UnexpectedEof)));
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert!(matches!(load_tensor_container(&bad), Err(Error::BadMagic { .. })));
        let bad_shape = TensorFile {
            tensors: vec![NamedArray { name: "x".into(), shape: vec![2, 2], data: vec![0.0; 3] }],
        };
        assert!(save_tensor_container(&bad_shape).is_err());
    }

    proptest! {
        #[test]
        fn packing_roundtrip(codes in proptest::collection::vec(0u8..16, 0..100), four in any::<bool>()) {
            let bits = if four { 4 } else { 3 };
            let codes: Vec<u8> = codes.into_iter().map(|c| c & ((1 << bits) - 1)).collect();
            let mut packed = Vec::new();
            pack_codes(&codes, bits, &mut packed);
            prop_assert_eq!(packed.len(), packed_row_bytes(codes.len(), bits));
            let mut back = Vec::new();
            unpack_codes(&packed, bits, codes.len(), &mut back);
            prop_assert_eq!(back, codes);
        }
    }
}
