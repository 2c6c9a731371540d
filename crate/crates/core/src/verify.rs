//! Self-check suite: every analytical shortcut against its brute-force oracle
//! on seeded random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    dual_exchange, int_inner, max_stride, optimal_signs, search_basis, Pairing, SearchOps, StrideTables,
};
use crate::kernel::{integer_reference, quantize_activations_for, shiftadd_gemm, ActScaleSource, KernelConfig};
use crate::lattice::LatticeId;
use crate::matrix::{dot, Matrix};
use crate::oracle::{dense_lstsq_2col, exhaustive_sign_search, exhaustive_stride_search, OracleLimits};
use crate::quantizer::{quantize_tensor, QuantConfig};
use crate::solver::{solve_geo, solve_ref, RefDesign};

/// Deliberate defects, used to prove the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flip the first analytical sign of every pairing.
    SignFlip,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub trials: usize,
    /// Extra micro-block size to search exhaustively, on top of 2, 4 and 8.
    pub micro_g: Option<usize>,
    pub limits: OracleLimits,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0x5EED,
            trials: 200,
            micro_g: None,
            limits: OracleLimits::default(),
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_codes(rng: &mut ChaCha8Rng, lattice: LatticeId, n: usize) -> Vec<u8> {
    let len = lattice.spec().len() as u8;
    (0..n).map(|_| rng.random_range(0..len)).collect()
}

/// Residuals with integer entries keep every alignment sum exact in f64, so
/// analytical and exhaustive optima can be compared with `==`.
fn integer_residual(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1000i32..=1000) as f64).collect()
}

fn check_orthogonality(rng: &mut ChaCha8Rng, trials: usize) -> CheckResult {
    let spec = LatticeId::Pot3.spec();
    let mut failures = 0;
    for _ in 0..trials {
        let v: Vec<i64> = random_codes(rng, LatticeId::Pot3, 32)
            .iter()
            .map(|&c| spec.int_values()[c as usize])
            .collect();
        let p = Pairing::new(32, rng.random_range(1..=16)).expect("stride in range");
        let y = dual_exchange(&v, &p, rng.random());
        failures += (int_inner(&v, &y) != 0) as usize;
    }
    CheckResult {
        name: "dual-exchange orthogonality",
        cases: trials,
        failures,
    }
}

fn check_signs(rng: &mut ChaCha8Rng, gs: &[usize], o: &VerifyOptions) -> Result<CheckResult> {
    let spec = LatticeId::Pot3.spec();
    let (mut cases, mut failures) = (0, 0);
    for &g in gs {
        for s in 1..=max_stride(g) {
            let p = Pairing::new(g, s)?;
            for _ in 0..o.trials {
                let v: Vec<f64> = random_codes(rng, LatticeId::Pot3, g)
                    .iter()
                    .map(|&c| spec.int_values()[c as usize] as f64)
                    .collect();
                let r = integer_residual(rng, g);
                let mut signs = optimal_signs(&v, &r, &p).signs;
                if o.fault == Some(Fault::SignFlip) {
                    signs ^= 1;
                }
                let achieved = dot(&dual_exchange(&v, &p, signs), &r);
                let (_, best) = exhaustive_sign_search(&v, &r, &p, o.limits)?;
                cases += 1;
                failures += (achieved != best) as usize;
            }
        }
    }
    Ok(CheckResult {
        name: "analytical signs vs exhaustive",
        cases,
        failures,
    })
}

fn check_strides(rng: &mut ChaCha8Rng, gs: &[usize], o: &VerifyOptions) -> Result<CheckResult> {
    let spec = LatticeId::Pot3.spec();
    let (mut cases, mut failures) = (0, 0);
    for &g in gs {
        let tables = StrideTables::new(g)?;
        for _ in 0..o.trials {
            let v: Vec<f64> = random_codes(rng, LatticeId::Pot3, g)
                .iter()
                .map(|&c| spec.int_values()[c as usize] as f64)
                .collect();
            let r = integer_residual(rng, g);
            let basis = search_basis(&v, &r, &tables, &mut SearchOps::default());
            let achieved = dot(&basis.b2_values, &r);
            let (_, _, best) = exhaustive_stride_search(&v, &r, g, o.limits)?;
            cases += 1;
            failures += (achieved != best) as usize;
        }
    }
    Ok(CheckResult {
        name: "stride search vs exhaustive",
        cases,
        failures,
    })
}

fn rel(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if b == 0.0 {
        d
    } else {
        d / b.abs()
    }
}

fn check_solvers(rng: &mut ChaCha8Rng, trials: usize) -> Result<[CheckResult; 2]> {
    let tables = StrideTables::new(32)?;
    let spec = LatticeId::Pot3.spec();
    let (mut geo_fail, mut ref_fail) = (0, 0);
    for _ in 0..trials {
        let w: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let b1: Vec<f64> = w.iter().map(|x| spec.values()[spec.nearest(x / s).0 as usize]).collect();
        let r = crate::geometry::residual(&w, &b1).r_perp;
        let b2 = search_basis(&b1, &r, &tables, &mut SearchOps::default()).b2_values;
        let m: Vec<[f64; 2]> = b1.iter().zip(&b2).map(|(a, b)| [*a, *b]).collect();

        let geo = solve_geo(&w, &b1, &b2);
        let (c1, c2) = dense_lstsq_2col(&m, &w, 0.0)?;
        geo_fail += (rel(geo.c1, c1) > 1e-10 || rel(geo.c2, c2) > 1e-10) as usize;

        let x = Matrix::from_vec(32, 128, (0..32 * 128).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let d = RefDesign::build(&x, 0..128, &w, &b1, &b2, 1e-4);
        let sol = solve_ref(&d)?;
        let (c1, c2) = dense_lstsq_2col(&d.a, &d.y, 1e-4)?;
        ref_fail += (rel(sol.c1, c1) > 1e-8 || rel(sol.c2, c2) > 1e-8) as usize;
    }
    Ok([
        CheckResult {
            name: "GEO solve vs dense least squares",
            cases: trials,
            failures: geo_fail,
        },
        CheckResult {
            name: "REF solve vs dense ridge",
            cases: trials,
            failures: ref_fail,
        },
    ])
}

fn check_kernel(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut failures = 0;
    let cases = 8;
    for t in 0..cases {
        let d_in = 64 + 37 * t;
        let w = Matrix::from_vec(8, d_in, (0..8 * d_in).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let x = Matrix::from_vec(4, d_in, (0..4 * d_in).map(|_| rng.random_range(-2.0..2.0)).collect())?;
        let cfg = QuantConfig {
            k: 1 + (t % 2) as u8,
            ..Default::default()
        };
        let qt = quantize_tensor(&w, None, &cfg)?;
        let qa = quantize_activations_for(&x, &qt, ActScaleSource::Dynamic)?;
        let out = shiftadd_gemm(&qa, &qt, &KernelConfig::default())?;
        failures += (out.ints != integer_reference(&qa, &qt)?) as usize;
    }
    Ok(CheckResult {
        name: "shift-add kernel vs integer multiply",
        cases,
        failures,
    })
}

pub fn run_suite(o: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut gs = vec![2, 4, 8];
    if let Some(g) = o.micro_g {
        let cap = if o.limits.allow_big { 32 } else { 16 };
        if g < 2 || g > cap || !g.is_power_of_two() {
            return Err(Error::Config(format!(
                "exhaustive search needs a power-of-two micro-block size in 2..={cap}, got {g}{}",
                if o.limits.allow_big { "" } else { " (pass --big for up to 32)" }
            )));
        }
        if !gs.contains(&g) {
            gs.push(g);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let mut out = vec![check_orthogonality(&mut rng, o.trials.max(1) * 10)];
    out.push(check_signs(&mut rng, &gs, o)?);
    out.push(check_strides(&mut rng, &gs, o)?);
    out.extend(check_solvers(&mut rng, o.trials)?);
    out.push(check_kernel(&mut rng)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        let o = VerifyOptions {
            trials: 20,
            ..Default::default()
        };
        let res = run_suite(&o).unwrap();
        assert!(res.iter().all(CheckResult::passed), "{res:?}");
    }

    #[test]
    fn injected_sign_flip_fails() {
        let o = VerifyOptions {
            trials: 20,
            fault: Some(Fault::SignFlip),
            ..Default::default()
        };
        let res = run_suite(&o).unwrap();
        assert!(!res.iter().all(CheckResult::passed));
    }

    #[test]
    fn large_micro_block_needs_opt_in() {
        let o = VerifyOptions {
            micro_g: Some(32),
            ..Default::default()
        };
        assert!(matches!(run_suite(&o), Err(Error::Config(_))));
    }
}
